//! Discrete curvatures of a prolate spheroid against the closed forms at
//! the pole and the equator, at three resolutions.

use hkflow::axisym::{build_geometry, ProfileSurface};

fn main() -> hkflow::Result<()> {
    let (a, c) = (1.0, 2.0);
    let pole = 2.0 * c / (a * a);
    let equator = 1.0 / a + a / (c * c);
    for n in [100, 200, 400] {
        let g = build_geometry(&ProfileSurface::spheroid(a, c, n)?)?;
        let h = g.mean();
        println!(
            "N = {n:>3}: pole H err {:.2e}, equator H err {:.2e}, max |A|² {:.5}",
            (h[0] - pole).abs(),
            (h[n / 2] - equator).abs(),
            g.a_norm_sq.iter().copied().fold(0.0, f64::max)
        );
    }
    Ok(())
}
