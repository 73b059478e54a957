//! Transported measure of a Sobolev ball: direct Monte Carlo against
//! Radon–Nikodym reweighting.

use gbbm::flow::GbbmParams;
use gbbm::measures::MeasureSpec;
use gbbm::transport::{transported_probability_direct, transported_probability_weighted, SetSpec};

fn main() -> gbbm::Result<()> {
    let spec = MeasureSpec::new(1, 2.0, 4, Some(20.0))?;
    let p = GbbmParams::new(2.0, 1, 4)?;
    let set = SetSpec::SobolevBall { sigma: 1.0, radius: 1.0 };
    let m = 20_000;
    for t in [0.0, 0.5] {
        let d = transported_probability_direct(&set, &spec, &p, t, 1e-2, m, 11)?;
        let w = transported_probability_weighted(&set, &spec, &p, t, 1e-2, m, 11)?;
        println!(
            "t = {t}: direct {:.5} ± {:.5}, weighted {:.5} ± {:.5}, z = {:.2}",
            d.value,
            d.stderr,
            w.value,
            w.stderr,
            d.z_score(&w)
        );
    }
    Ok(())
}
