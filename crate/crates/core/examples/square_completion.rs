//! Expanded and completed-square forms of the ratio evolution agree node
//! by node, for every admissible ℓ.

use hkflow::axisym::ProfileSurface;
use hkflow::monitors::ConstantsLedger;
use hkflow::residual::{verify_square_completion, DerivedFields};

fn main() -> hkflow::Result<()> {
    let surface = ProfileSurface::perturbed_spheroid(1.0, 1.6, 400, 0.04, 3)?;
    let fields = DerivedFields::new(&surface)?;
    for k in [3, 5, 7] {
        let (lo, hi) = ConstantsLedger::ell_window(k);
        for ell in (lo.ceil() as i32)..=(hi.floor() as i32) {
            let r = verify_square_completion(&fields, k, ell);
            println!("k = {k}, ell = {ell:>3}: max relative discrepancy {:.2e}", r.max_relative);
        }
    }
    Ok(())
}
