//! Integrate a sampled initial state and watch the conserved quantity.

use gbbm::flow::{integrate_with, GbbmParams, IntegrateOptions};
use gbbm::measures::{sample_mu_s, MeasureSpec};

fn main() -> gbbm::Result<()> {
    let spec = MeasureSpec::new(1, 2.0, 64, None)?;
    let u0 = sample_mu_s(&spec, 2024);
    let opts = IntegrateOptions {
        stride: 1000,
        ..Default::default()
    };
    let traj = integrate_with(&u0, &GbbmParams::new(2.0, 1, 64)?, 10.0, 1e-3, &opts)?;
    for (t, q) in traj.times.iter().zip(&traj.conserved_log) {
        println!("t = {t:5.2}  Q = {q:.15e}");
    }
    println!("max relative drift {:.3e}", traj.max_relative_drift());
    Ok(())
}
