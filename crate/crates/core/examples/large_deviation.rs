//! Growth of E|D^{s+γ/2-1/2-ε} u|_{L^p} in p.

use gbbm::energy::{large_deviation_scan, large_deviation_slope};
use gbbm::measures::MeasureSpec;

fn main() -> gbbm::Result<()> {
    let spec = MeasureSpec::new(2, 1.5, 128, None)?;
    let p_list = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
    let scan = large_deviation_scan(&spec, 0.05, &p_list, 10_000, 1)?;
    for (p, v) in &scan {
        println!("p = {p:3}: {v:.5}");
    }
    println!("log-log slope {:.3}", large_deviation_slope(&scan));
    Ok(())
}
