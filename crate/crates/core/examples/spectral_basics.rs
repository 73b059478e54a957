//! Fourier fields on the torus: norms, products, Littlewood–Paley blocks.

use gbbm::spectral::{
    derivative, field_from_triples, lebesgue_norm, lp_decompose, pointwise_product, sobolev_norm, sup_norm, LpMode,
    SpectralField,
};

fn main() -> gbbm::Result<()> {
    // 2 cos x
    let u = field_from_triples(&[(1, 1.0, 0.0)])?;
    println!("u(0) = {}", u.value_at(0.0));
    println!("|u|_H1 = {:.6}", sobolev_norm(&u, 1.0));
    println!("|u|_sup = {:.6}", sup_norm(&u, 8));
    println!("|u|_L4 = {:.6} (closed form {:.6})", lebesgue_norm(&u, 4.0, 8), (12.0 * std::f64::consts::PI).powf(0.25));

    let sq = pointwise_product(&u, &u);
    println!("(2cos x)^2 mode 2 = {}", sq.coeff(2));
    println!("d/dx mode 1 = {}", derivative(&u, 1).coeff(1));

    let w = SpectralField::from_fn(64, |n| (1.0 / (n * n) as f64).into());
    let blocks = lp_decompose(&w, LpMode::Smooth);
    let total = blocks.iter().fold(SpectralField::zeros(64), |acc, (_, b)| acc.axpy(1.0, b));
    println!("{} dyadic blocks, reassembly error {:.2e}", blocks.len(), sobolev_norm(&total.axpy(-1.0, &w), 0.0));
    Ok(())
}
