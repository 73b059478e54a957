//! Hilbert–Schmidt partial sums of the nonlinear Duhamel operator.

use gbbm::flow::{dk_column_norms_sq, GbbmParams};
use gbbm::runner::{dk_reference_state, increment_trend};

fn main() -> gbbm::Result<()> {
    let dims = [8, 16, 32, 64];
    for gamma in [2.5, 1.5] {
        let p = GbbmParams::new(gamma, 1, 128)?;
        let cols = dk_column_norms_sq(&dk_reference_state(128, 0.5), &p, 0.2, 64, 1e-2)?;
        let prefix: Vec<f64> = dims.iter().map(|&d| cols[..d].iter().sum()).collect();
        let (inc, trend) = increment_trend(&prefix);
        println!("gamma {gamma}: sums {prefix:.5?}\n  increments {inc:?}, shrinking {trend:?}");
    }
    Ok(())
}
