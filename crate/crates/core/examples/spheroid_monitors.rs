//! Prolate spheroid with H capped at 4: monitors, the min-H check and the
//! exponential bound on Q over the eligible records.

use hkflow::cli::run_scenario;
use hkflow::scenario::{ScenarioConfig, Shape};

fn main() -> hkflow::Result<()> {
    let cfg = ScenarioConfig {
        shape: Shape::Spheroid { a: 1.0, c: 2.0 },
        nodes: 160,
        t_end: Some(0.05),
        h_cap: Some(4.0),
        sample_every: Some(5e-3),
        check_q_inequality: true,
        ..Default::default()
    };
    let run = run_scenario(&cfg, None, false)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>8}", "t", "H_min", "H_max", "Q_max", "eligible");
    for r in &run.records {
        println!("{:8.4} {:10.5} {:10.5} {:10.5} {:>8}", r.t, r.h_min, r.h_max, r.q_max, r.eligible);
    }
    println!("min-H: {:?}", run.min_h);
    println!("Q bound: {:?}", run.q_bound);
    println!("Q inequality: {:?}", run.q_inequality);
    Ok(())
}
