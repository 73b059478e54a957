//! The Yudovich-type bound and its Hölder behaviour as m -> 0.

use gbbm::transport::{holder_exponent_check, yudovich_bound};

fn main() -> gbbm::Result<()> {
    println!("bound(m=1, t=1, C=1, alpha=1/2) = {:.4}", yudovich_bound(1.0, 1.0, 1.0, 0.5)?);
    let kappa = 1.9;
    let alpha = 1.0 - kappa / 2.0;
    let m: Vec<f64> = (1..=300).map(|k| 10f64.powf(-(k as f64))).collect();
    for delta in [0.05, 0.1, 0.2, 0.0] {
        let h = holder_exponent_check(&m, 1.0, 1.0, alpha, delta)?;
        println!("delta {delta}: bounded {}, log C on grid {:.3}", h.bounded, h.log_c_tilde_grid);
    }
    Ok(())
}
