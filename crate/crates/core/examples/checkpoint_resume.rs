//! Interrupts a run, serializes the state to JSON and resumes it; the
//! resumed trajectory matches an uninterrupted one bit for bit.

use hkflow::axisym::ProfileSurface;
use hkflow::flow::{Checkpoint, FlowState, StepControl};

fn advance(state: &mut FlowState, steps: usize) -> hkflow::Result<()> {
    let ctl = StepControl::default();
    for _ in 0..steps {
        state.step(&ctl, None)?;
    }
    Ok(())
}

fn main() -> hkflow::Result<()> {
    let surface = ProfileSurface::spheroid(1.0, 1.5, 120)?;
    let mut straight = FlowState::new(surface.clone(), 3, &[6.0], "demo")?;
    advance(&mut straight, 2000)?;

    let mut first = FlowState::new(surface, 3, &[6.0], "demo")?;
    advance(&mut first, 1000)?;
    let json = first.checkpoint().to_json()?;
    let mut resumed = FlowState::restore(&Checkpoint::from_json(&json)?)?;
    advance(&mut resumed, 1000)?;

    let same = straight.surface.nodes() == resumed.surface.nodes() && straight.t == resumed.t;
    println!("checkpoint size {} bytes; t = {:.8}; identical = {same}", json.len(), resumed.t);
    println!("L^6 accumulators: {:e} vs {:e}", straight.lalpha[0].value, resumed.lalpha[0].value);
    Ok(())
}
