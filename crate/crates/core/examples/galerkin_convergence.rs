//! Truncated flows converge as the cutoff doubles.

use gbbm::flow::{galerkin_flow, GbbmParams};
use gbbm::spectral::{sobolev_norm, SpectralField};
use num_complex::Complex64;

fn main() -> gbbm::Result<()> {
    let u0 = SpectralField::from_fn(128, |n| Complex64::from_polar(0.5 * (n as f64).powi(-3), 0.3 * n as f64));
    let p = GbbmParams::new(2.0, 1, 8)?;
    for n in [8, 16, 32, 64] {
        let a = galerkin_flow(&u0, &p.with_modes(n), 1.0, 1e-3)?;
        let b = galerkin_flow(&u0, &p.with_modes(2 * n), 1.0, 1e-3)?;
        println!("N = {n:3}: |Phi_N - Phi_2N|_H1 = {:.3e}", sobolev_norm(&a.axpy(-1.0, &b), 1.0));
    }
    Ok(())
}
