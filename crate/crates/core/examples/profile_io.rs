//! Writes a perturbed profile to the text format, reads it back, and
//! resamples it to uniform arc length.

use hkflow::axisym::{build_geometry, resample, ProfileSurface};

fn main() -> hkflow::Result<()> {
    let surface = ProfileSurface::perturbed_spheroid(1.0, 2.0, 96, 0.05, 42)?;
    let dir = std::env::temp_dir().join("hkflow-profile-io");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("profile.txt");
    surface.write(&path)?;
    let back = ProfileSurface::read(&path)?;
    println!("wrote {} ({} nodes), round trip exact: {}", path.display(), back.n() + 1, back == surface);
    let g = build_geometry(&back)?;
    println!("H in [{:.5}, {:.5}], convex {}, volume {:.6}", g.h_min(), g.h_max(), g.convex, back.enclosed_volume());
    let even = resample(&back, 5)?;
    println!("spacing ratio {:.4} -> {:.4}", back.spacing_ratio(), even.spacing_ratio());
    Ok(())
}
