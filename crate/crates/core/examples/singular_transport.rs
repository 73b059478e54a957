//! Linear flow with a forcing on the support of the measure: the partial
//! sums diverge like N^{3-2γ} inside the window, converge outside it.

use gbbm::transport::{dyadic_growth_exponent, singular_partial_sums, singular_partial_sums_unchecked};

fn main() -> gbbm::Result<()> {
    let n_list: Vec<usize> = (6..=14).map(|k| 1 << k).collect();
    let sums = singular_partial_sums(1.4, 1, 1.0, &n_list)?;
    for (n, v) in n_list.iter().zip(&sums) {
        println!("N = {n:6}: {v:.6}");
    }
    println!("growth exponent {:.4} (expected 0.2)", dyadic_growth_exponent(&n_list, &sums)?);
    let control = singular_partial_sums_unchecked(1.6, 1, 1.0, &n_list)?;
    println!("gamma 1.6 increments: {:?}", control.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>());
    Ok(())
}
