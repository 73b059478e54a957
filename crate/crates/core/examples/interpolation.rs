//! Littlewood–Paley interpolation ratios stay bounded as the truncation grows.

use gbbm::energy::{lp_cubic_ensemble_max, lp_ratio_ensemble_max, interpolation_theta};
use gbbm::measures::MeasureSpec;

fn main() -> gbbm::Result<()> {
    let (gamma, s, eps) = (1.5, 2, 0.01);
    let sigma = 2.0;
    let theta = interpolation_theta(gamma, s, sigma, eps, eps);
    for n in [128, 256, 512] {
        let spec = MeasureSpec::new(s, gamma, n, None)?;
        let r = lp_ratio_ensemble_max(&spec, sigma, theta, eps, 300, 17)?;
        let c = lp_cubic_ensemble_max(&spec, eps, 300, 17)?;
        println!("N = {n:3}: max interpolation ratio {r:.5}, max cubic ratio {c:.5}");
    }
    Ok(())
}
