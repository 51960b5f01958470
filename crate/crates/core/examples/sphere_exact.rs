//! Closed-form shrinking sphere: radius, curvature, Q and area.

use hkflow::monitors::ConstantsLedger;
use hkflow::sphere::SphereSolution;

fn main() -> hkflow::Result<()> {
    let sol = SphereSolution::new(2, 3, 1.0)?;
    let ledger = ConstantsLedger::new(2, 3, 6.0, sol.mean_at(0.0)?, None)?;
    println!("T_max = {}", sol.t_max());
    println!("{:>12} {:>10} {:>10} {:>12} {:>10}", "t", "R", "H", "Q", "area");
    for frac in [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999] {
        let m = sol.exact_monitors(frac * sol.t_max(), &ledger)?;
        println!("{:12.8} {:10.6} {:10.4} {:12.6} {:10.6}", m.t, m.radius, m.mean, m.q, m.area);
    }
    Ok(())
}
