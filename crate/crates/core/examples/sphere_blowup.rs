//! Shrinks the unit sphere under the H³ flow until H passes 1e6 and
//! compares the blow-up time with the closed form 1/32.

use hkflow::cli::run_scenario;
use hkflow::scenario::ScenarioConfig;
use hkflow::sphere::SphereSolution;

fn main() -> hkflow::Result<()> {
    let cfg = ScenarioConfig { nodes: 200, run_to_blowup: true, alpha: Some(5.0), ..Default::default() };
    let run = run_scenario(&cfg, None, false)?;
    let exact = SphereSolution::new(2, 3, 1.0)?.t_max();
    let blowup = run.blowup.expect("sphere blows up");
    println!("{}", blowup.message);
    println!("T numeric {:.10}  exact {exact:.10}  rel err {:.2e}", blowup.t, (blowup.t - exact).abs() / exact);
    println!("steps {}, records {}", run.steps, run.records.len());
    println!("int int H^5 = {:.6}  (16 pi = {:.6})", run.lalpha[0].value, 16.0 * std::f64::consts::PI);
    Ok(())
}
