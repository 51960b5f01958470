//! Space-time L^α norm of H on the shrinking sphere: finite below
//! α = n + k + 1, divergent at it.

use hkflow::sphere::SphereSolution;

fn main() -> hkflow::Result<()> {
    for (n, k) in [(2, 3), (3, 3), (4, 5)] {
        let sol = SphereSolution::new(n, k, 1.0)?;
        let threshold = (n + k + 1) as f64;
        for alpha in [threshold - 1.0, threshold - 0.1, threshold] {
            let l = sol.l_alpha_norm(alpha, sol.t_max())?;
            let fit = l.truncation.expect("truncation study at T_max");
            println!(
                "n={n} k={k} alpha={alpha:4.1}: divergent {:5}  increment ratio {:.4}  norm {:.5}",
                l.divergent, fit.increment_ratio, l.norm
            );
        }
    }
    Ok(())
}
