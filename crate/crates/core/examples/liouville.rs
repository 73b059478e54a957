//! Volume preservation of the truncated flow.

use gbbm::flow::{divergence_report, jacobian_determinant, GbbmParams};
use gbbm::measures::{sample_mu_s, MeasureSpec};

fn main() -> gbbm::Result<()> {
    for gamma in [1.4, 2.0] {
        let p = GbbmParams::new(gamma, 1, 4)?;
        let u0 = sample_mu_s(&MeasureSpec::new(1, gamma, 4, None)?, 7);
        let det = jacobian_determinant(&u0, &p, 1.0, 1e-2)?;
        let div = divergence_report(&u0, &p)?;
        println!("gamma {gamma}: det - 1 = {:.2e}, max mode divergence {:.2e}", det - 1.0, div.max_mode_divergence);
        for (n, (a, b)) in div.partials.iter().enumerate() {
            println!("  n = {}: dF/da = {a:+.3e}, dG/db = {b:+.3e}", n + 1);
        }
    }
    Ok(())
}
