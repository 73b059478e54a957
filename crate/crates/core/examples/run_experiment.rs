//! Drive an experiment from a TOML config, as the command-line tool does.

use gbbm::runner::{run, validate, ExperimentConfig};

fn main() -> gbbm::Result<()> {
    let out = std::env::temp_dir().join("gbbm-example");
    let text = format!(
        "experiment = \"singular-demo\"\ngamma = 1.45\nout_dir = {:?}\n",
        out.display().to_string()
    );
    let cfg = ExperimentConfig::from_toml_str(&text)?;
    assert!(validate(&cfg).is_empty());
    let report = run(&cfg)?;
    for c in &report.checks {
        println!("{}: {:.4} {} {:.4} -> {}", c.name, c.value, c.comparison, c.threshold, c.passed);
    }
    println!("artifacts in {}: {:?}", cfg.output_dir().display(), report.artifacts);
    Ok(())
}
