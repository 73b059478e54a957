//! Local solution by fixed-point iteration of the Duhamel map.

use gbbm::flow::{evolve, picard_local_solve, GbbmParams};
use gbbm::measures::{sample_mu_s, MeasureSpec};
use gbbm::spectral::sobolev_norm;

fn main() -> gbbm::Result<()> {
    let p = GbbmParams::new(2.0, 1, 16)?;
    let u0 = sample_mu_s(&MeasureSpec::new(1, 2.0, 16, None)?, 3);
    let tau = 0.04;
    let out = picard_local_solve(&u0, &p, tau, 1e-12, 50)?;
    println!("{} iterations", out.iterations);
    for (k, r) in out.contraction_ratios().iter().enumerate() {
        println!("  ratio {k}: {r:.3e}");
    }
    let rk = evolve(&u0, &p, tau, 1e-4)?;
    println!("distance to RK4 at tau: {:.3e}", sobolev_norm(&out.solution.axpy(-1.0, &rk), 1.0));
    Ok(())
}
