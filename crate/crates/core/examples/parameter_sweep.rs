//! Sweeps the spheroid aspect ratio, one scenario per thread
//! (HKFLOW_THREADS caps the pool), and prints the summary CSV.

use hkflow::cli::sweep_scenario;
use hkflow::scenario::{ScenarioConfig, Shape, SweepSettings};

fn main() -> hkflow::Result<()> {
    let cfg = ScenarioConfig {
        shape: Shape::Spheroid { a: 1.0, c: 1.0 },
        nodes: 96,
        t_end: Some(0.02),
        output_dir: std::env::temp_dir().join("hkflow-sweep"),
        sweep: Some(SweepSettings { axis: "c".into(), values: vec![1.0, 1.5, 2.0, 3.0] }),
        ..Default::default()
    };
    let summary = sweep_scenario(&cfg)?;
    print!("{}", summary.csv());
    Ok(())
}
