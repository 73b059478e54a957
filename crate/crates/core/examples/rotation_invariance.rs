//! The free evolution preserves the Gaussian measure.

use gbbm::flow::free_evolution;
use gbbm::measures::{map_samples, MeasureSpec};
use gbbm::spectral::{dirichlet_project, sobolev_norm_sq};
use gbbm::stats::EstimateWithError;

fn main() -> gbbm::Result<()> {
    let spec = MeasureSpec::new(1, 2.0, 16, None)?;
    let m = 100_000;
    let seed = 5;
    let pairs = map_samples(&spec, seed, m, |_, u| {
        let v = free_evolution(u, spec.gamma, 1.3);
        [
            sobolev_norm_sq(&dirichlet_project(u, 8), 1.0),
            sobolev_norm_sq(&dirichlet_project(&v, 8), 1.0),
            u.coeff(3).re,
            v.coeff(3).re,
        ]
    });
    for (name, k) in [("|P8 u|^2_H1", 0), ("Re u(3)", 2)] {
        let a: Vec<f64> = pairs.iter().map(|x| x[k]).collect();
        let b: Vec<f64> = pairs.iter().map(|x| x[k + 1]).collect();
        let (ea, eb) = (EstimateWithError::from_samples(&a, seed), EstimateWithError::from_samples(&b, seed));
        println!("{name}: {:.6} vs {:.6}, z = {:.2}", ea.value, eb.value, ea.z_score(&eb));
    }
    Ok(())
}
