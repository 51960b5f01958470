//! Refinement study of the curvature evolution identities on a spheroid,
//! with the |A|² identity in its stated and its corrected form.

use hkflow::axisym::ProfileSurface;
use hkflow::residual::{refinement_study, Form, Identity, Level, TripleSource};

fn main() -> hkflow::Result<()> {
    let make = |n: usize| ProfileSurface::spheroid(1.0, 2.0, n);
    let levels = [Level { n: 100, dt: 1e-5 }, Level { n: 200, dt: 2.5e-6 }, Level { n: 400, dt: 6.25e-7 }];
    for form in [Form::Stated, Form::Corrected] {
        println!("{form:?}");
        for id in Identity::all(3) {
            let r = refinement_study(TripleSource::Linearized(&make), id, form, 3, &levels, None)?;
            let finest = r.table.last().unwrap().2;
            println!(
                "  {:<14} p_h {:6.3}  p_t {:6.3}  max residual {finest:9.3e}  {:?}",
                r.identity, r.p_h, r.p_t, r.verdict
            );
        }
    }
    Ok(())
}
