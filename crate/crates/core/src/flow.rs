//! Explicit time stepping of `∂F/∂t = −H^k ν` on a profile surface.
//!
//! The step size follows the parabolic stability scale of the quasilinear
//! operator `kH^{k−1}Δ`: `dt = safety · h_min² / (k H_max^{k−1})`. Steps are
//! clamped so that requested sample times are hit exactly, which makes a run
//! restored from a checkpoint at a sample time retrace the unbroken run bit
//! for bit.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::axisym::{build_geometry, resample, Curvatures, ProfileSurface};
use crate::error::{Error, Result};
use crate::monitors::{check_q_inequality, ConstantsLedger, LAlphaAccumulator, MonitorRecord, SlackTolerance};
use crate::residual::StateTriple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Euler,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    BlownUp,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub safety: f64,
    pub dt_min: f64,
    /// Records with `H_max ≤ H_cap` are eligible for the capped inequalities.
    /// The flow does not stop at the cap.
    pub h_cap: Option<f64>,
    pub scheme: Scheme,
    /// Blow-up is declared once `H_max` reaches this value.
    pub blowup_h: f64,
    /// Resample when the max/min chord ratio exceeds this.
    pub resample_ratio: f64,
    pub resample_order: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            safety: 0.2,
            dt_min: 1e-40,
            h_cap: None,
            scheme: Scheme::Euler,
            blowup_h: 1e6,
            resample_ratio: 2.0,
            resample_order: 5,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::Parameter(format!("safety must lie in (0, 1], got {}", self.safety)));
        }
        if !(self.dt_min > 0.0) {
            return Err(Error::Parameter(format!("dt_min must be positive, got {}", self.dt_min)));
        }
        if !(self.blowup_h > 0.0) {
            return Err(Error::Parameter("blow-up threshold must be positive".into()));
        }
        if self.resample_order.is_multiple_of(2) {
            return Err(Error::Parameter("resample order must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowupReason {
    Threshold,
    StepCollapse,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub t: f64,
    pub surface: ProfileSurface,
    pub step_index: u64,
    pub dt_last: f64,
    pub k: u32,
    /// Primary accumulator first, then any secondary exponents.
    pub lalpha: Vec<LAlphaAccumulator>,
    pub status: Status,
    pub blowup_reason: Option<BlowupReason>,
    /// Diagnostic of an aborted step.
    pub abort_reason: Option<String>,
    pub config_hash: String,
    curv: Curvatures,
    h_max: f64,
    scratch: Vec<[f64; 2]>,
    scratch_curv: Curvatures,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn nonpositive(mean: &[f64]) -> Option<Error> {
    let bad: Vec<usize> = (0..mean.len()).filter(|&j| !(mean[j] > 0.0)).collect();
    let first = *bad.first()?;
    Some(Error::NonpositiveMean { first, nodes: bad })
}

/// `out = nodes − dt H^k ν`.
fn advance(nodes: &[[f64; 2]], curv: &Curvatures, k: i32, dt: f64, out: &mut Vec<[f64; 2]>) {
    out.clear();
    out.extend(nodes.iter().zip(&curv.mean).zip(&curv.normal).map(|((p, h), nu)| {
        let s = dt * h.powi(k);
        [p[0] - s * nu[0], p[1] - s * nu[1]]
    }));
}

/// `∫ H^α dμ`, trapezoid rule in `u` with weight `2πr|F_u|`; pole weights
/// vanish and `|F_u| du` is half the centered chord.
fn lalpha_integrand(nodes: &[[f64; 2]], curv: &Curvatures, alpha: f64) -> f64 {
    let n = nodes.len() - 1;
    let int_pow = alpha.fract() == 0.0 && alpha.abs() < 64.0;
    let s: f64 = (1..n)
        .map(|j| {
            let h = curv.mean[j];
            let f = if int_pow { h.powi(alpha as i32) } else { h.powf(alpha) };
            f * nodes[j][0] * curv.chord[j]
        })
        .sum();
    std::f64::consts::PI * s
}

impl FlowState {
    /// `alphas[0]` is the primary `L^α` exponent.
    pub fn new(surface: ProfileSurface, k: u32, alphas: &[f64], config_hash: impl Into<String>) -> Result<Self> {
        if k < 1 || k.is_multiple_of(2) {
            return Err(Error::Parameter(format!("k must be odd, got {k}")));
        }
        if alphas.is_empty() {
            return Err(Error::Parameter("at least one L^alpha exponent is required".into()));
        }
        let geom = build_geometry(&surface)?;
        let bad: Vec<usize> = (0..geom.mean().len()).filter(|&j| !(geom.mean()[j] > 0.0)).collect();
        if let Some(&first) = bad.first() {
            return Err(Error::NonpositiveMean { nodes: bad, first });
        }
        let curv = geom.curv;
        let mut lalpha = Vec::with_capacity(alphas.len());
        for &a in alphas {
            let mut acc = LAlphaAccumulator::new(a)?;
            acc.push(0.0, lalpha_integrand(surface.nodes(), &curv, a));
            lalpha.push(acc);
        }
        Ok(Self {
            t: 0.0,
            surface,
            step_index: 0,
            dt_last: 0.0,
            k,
            lalpha,
            status: Status::Running,
            blowup_reason: None,
            abort_reason: None,
            config_hash: config_hash.into(),
            scratch_curv: curv.clone(),
            h_max: max_of(&curv.mean),
            curv,
            scratch: Vec::new(),
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.curv.mean
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn h_min(&self) -> f64 {
        self.curv.mean.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Stability step `safety · h_min² / (k H_max^{k−1})` for the current state.
    pub fn stable_dt(&self, ctl: &StepControl) -> f64 {
        let h = self.curv.segment.iter().copied().fold(f64::INFINITY, f64::min);
        ctl.safety * h * h / (self.k as f64 * self.h_max().powi(self.k as i32 - 1))
    }

    fn abort(&mut self, msg: String, err: Error) -> Error {
        self.status = Status::Aborted;
        self.abort_reason = Some(msg);
        err
    }

    /// Advances one step, never past `limit`. A blow-up ends the run by
    /// setting the status; an `Err` means the step was aborted.
    pub fn step(&mut self, ctl: &StepControl, limit: Option<f64>) -> Result<()> {
        if self.status != Status::Running {
            return Err(Error::Parameter(format!("cannot step a {:?} flow", self.status)));
        }
        if self.h_max() >= ctl.blowup_h {
            self.status = Status::BlownUp;
            self.blowup_reason = Some(BlowupReason::Threshold);
            return Ok(());
        }
        let mut dt = self.stable_dt(ctl);
        if dt < ctl.dt_min {
            self.status = Status::BlownUp;
            self.blowup_reason = Some(BlowupReason::StepCollapse);
            return Ok(());
        }
        let mut t_new = self.t + dt;
        if let Some(lim) = limit {
            if t_new >= lim {
                dt = lim - self.t;
                t_new = lim;
            }
        }

        if let Some(err) = nonpositive(&self.curv.mean) {
            return Err(self.abort(format!("H <= 0 before step {}", self.step_index), err));
        }
        let k = self.k as i32;
        let mut next = std::mem::take(&mut self.scratch);
        advance(self.surface.nodes(), &self.curv, k, dt, &mut next);
        let mut curv = std::mem::take(&mut self.scratch_curv);
        if ctl.scheme == Scheme::Midpoint {
            let mut half = Vec::with_capacity(next.len());
            advance(self.surface.nodes(), &self.curv, k, 0.5 * dt, &mut half);
            curv.compute_into(&half);
            if let Some(err) = nonpositive(&curv.mean) {
                return Err(self.abort("H <= 0 at midpoint stage".into(), err));
            }
            advance(self.surface.nodes(), &curv, k, dt, &mut next);
        }
        let n = next.len() - 1;
        if let Some(j) = (1..n).find(|&j| !(next[j][0] > 0.0)) {
            let err = Error::SelfIntersecting { first: j - 1, second: j };
            return Err(self.abort(format!("node {j} crossed the axis"), err));
        }
        curv.compute_into(&next);
        if let Some(node) = curv.mean.iter().position(|h| !h.is_finite()) {
            return Err(self.abort(format!("non-finite H at node {node}"), Error::NonFinite { node }));
        }
        let old = std::mem::replace(self.surface.nodes_mut(), next);
        self.scratch = old;
        let (lo, hi) = curv.segment.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        if hi > ctl.resample_ratio * lo {
            self.surface = match resample(&self.surface, ctl.resample_order) {
                Ok(s) => s,
                Err(e) => return Err(self.abort("resampling failed".into(), e)),
            };
            curv.compute_into(self.surface.nodes());
        }
        for acc in &mut self.lalpha {
            acc.push(dt, lalpha_integrand(self.surface.nodes(), &curv, acc.alpha));
        }
        self.h_max = max_of(&curv.mean);
        self.scratch_curv = std::mem::replace(&mut self.curv, curv);
        self.t = t_new;
        self.dt_last = dt;
        self.step_index += 1;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut accs = self.lalpha.iter().map(|a| AccumulatorRecord { lalpha: a.value, alpha: a.alpha });
        let primary = accs.next().unwrap();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            t: self.t,
            dt_last: self.dt_last,
            step_index: self.step_index,
            k: self.k,
            nodes: self.surface.nodes().to_vec(),
            accumulators: Accumulators { lalpha: primary.lalpha, alpha: primary.alpha, extra: accs.collect() },
            config_hash: self.config_hash.clone(),
            status: self.status,
        }
    }

    pub fn restore(ck: &Checkpoint) -> Result<Self> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: ck.version, expected: CHECKPOINT_VERSION });
        }
        if ck.nodes.len() < 3 || !(ck.t >= 0.0) {
            return Err(Error::Malformed("checkpoint has too few nodes or a negative time".into()));
        }
        let surface = ProfileSurface::from_nodes_unchecked(ck.nodes.clone());
        let curv = Curvatures::compute(surface.nodes());
        if let Some(node) = curv.mean.iter().position(|h| !h.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        let a = &ck.accumulators;
        let lalpha = std::iter::once(AccumulatorRecord { lalpha: a.lalpha, alpha: a.alpha })
            .chain(a.extra.iter().copied())
            .map(|r| LAlphaAccumulator::resume(r.alpha, r.lalpha, lalpha_integrand(surface.nodes(), &curv, r.alpha)))
            .collect();
        Ok(Self {
            t: ck.t,
            surface,
            step_index: ck.step_index,
            dt_last: ck.dt_last,
            k: ck.k,
            lalpha,
            status: ck.status,
            blowup_reason: None,
            abort_reason: None,
            config_hash: ck.config_hash.clone(),
            scratch_curv: curv.clone(),
            h_max: max_of(&curv.mean),
            curv,
            scratch: Vec::new(),
        })
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccumulatorRecord {
    pub lalpha: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accumulators {
    pub lalpha: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<AccumulatorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub t: f64,
    pub dt_last: f64,
    pub step_index: u64,
    pub k: u32,
    pub nodes: Vec<[f64; 2]>,
    pub accumulators: Accumulators,
    pub config_hash: String,
    pub status: Status,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
            if v != CHECKPOINT_VERSION as u64 {
                return Err(Error::VersionMismatch { found: v as u32, expected: CHECKPOINT_VERSION });
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))
    }
}

/// Hex SHA-256 of a byte string, used to tie checkpoints to their config.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupReport {
    pub reason: BlowupReason,
    pub t: f64,
    pub h_max: f64,
    pub a2_max: f64,
    pub h_threshold: f64,
    /// `H_threshold² / n`, the value `|A|²` takes on a sphere at the `H` threshold.
    pub a2_threshold: f64,
    pub h_exceeded: bool,
    pub a2_exceeded: bool,
    /// `|A|²` crossed its threshold while `H` stayed at or below
    /// `H_cap` (or below the `H` threshold when no cap is set).
    pub falsification_alarm: bool,
    pub message: String,
}

pub const MIN_BLOWUP_RECORDS: usize = 10;

/// Blow-up report for a finished run, `None` when no blow-up was declared.
pub fn detect_blowup(state: &FlowState, records: &[MonitorRecord], ctl: &StepControl) -> Result<Option<BlowupReport>> {
    if records.len() < MIN_BLOWUP_RECORDS {
        return Err(Error::Insufficient(format!(
            "blow-up detection needs {MIN_BLOWUP_RECORDS} records, got {}",
            records.len()
        )));
    }
    if state.status != Status::BlownUp {
        return Ok(None);
    }
    let reason = state.blowup_reason.unwrap_or(BlowupReason::Threshold);
    let n = 2.0;
    let h_threshold = ctl.blowup_h;
    let a2_threshold = h_threshold * h_threshold / n;
    let h_max = records.iter().map(|r| r.h_max).fold(state.h_max(), f64::max);
    let a2_max = records.iter().map(|r| r.a2_max).fold(0.0, f64::max);
    let h_exceeded = h_max >= h_threshold;
    let a2_exceeded = a2_max >= a2_threshold;
    let h_bounded = match ctl.h_cap {
        Some(cap) => h_max <= cap,
        None => !h_exceeded,
    };
    let falsification_alarm = a2_exceeded && h_bounded;
    let mut message = format!(
        "blow-up at t = {} ({}): H_max = {h_max:e} (threshold {h_threshold:e}, {}), |A|²_max = {a2_max:e} (threshold {a2_threshold:e}, {})",
        state.t,
        match reason {
            BlowupReason::Threshold => "curvature threshold",
            BlowupReason::StepCollapse => "step collapse",
        },
        if h_exceeded { "exceeded" } else { "not exceeded" },
        if a2_exceeded { "exceeded" } else { "not exceeded" },
    );
    if falsification_alarm {
        message.push_str("; LEMMA 3.1 VIOLATION: |A| unbounded while H stayed bounded");
    }
    Ok(Some(BlowupReport {
        reason,
        t: state.t,
        h_max,
        a2_max,
        h_threshold,
        a2_threshold,
        h_exceeded,
        a2_exceeded,
        falsification_alarm,
        message,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// `None` runs until blow-up.
    pub t_end: Option<f64>,
    /// Sample grid `m · sample_every`; steps land on it exactly.
    pub sample_every: Option<f64>,
    /// Extra record whenever `H_max` grew by this factor since the last one.
    pub growth_factor: f64,
    pub max_steps: Option<u64>,
    /// Evaluate the `Q` evolution inequality at each eligible record.
    pub q_inequality: Option<SlackTolerance>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { t_end: None, sample_every: None, growth_factor: 1.05, max_steps: None, q_inequality: None }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MonitorRecord>,
    pub blowup: Option<BlowupReport>,
}

fn next_sample(t: f64, every: f64) -> f64 {
    let mut m = (t / every).floor() + 1.0;
    while m * every <= t {
        m += 1.0;
    }
    m * every
}

/// Full monitor record of the current state.
pub fn take_record(
    state: &FlowState,
    ctl: &StepControl,
    ledger: &ConstantsLedger,
    q_inequality: Option<&SlackTolerance>,
) -> Result<MonitorRecord> {
    state.surface.check_embedded()?;
    let geom = build_geometry(&state.surface)?;
    let mut rec = MonitorRecord::from_geometry(
        state.t,
        state.dt_last,
        &geom,
        ledger,
        state.lalpha[0].value,
        state.surface.enclosed_volume(),
    )?;
    rec.lalpha_extra = state.lalpha[1..].iter().map(|a| a.value).collect();
    if let Some(tol) = q_inequality {
        if rec.eligible {
            let triple = StateTriple::linearized(&state.surface, state.k, state.stable_dt(ctl))?;
            let rep = check_q_inequality(&triple, ledger, tol)?;
            rec.slack_36_min = Some(rep.min_slack);
            rec.q_ineq_pass = Some(rep.pass);
        }
    }
    Ok(rec)
}

/// Drives `state` to `t_end` or blow-up, sampling monitor records at `t = 0`
/// (or the resume time), on the sample grid, on `H_max` growth, and at the end.
pub fn run(state: &mut FlowState, ctl: &StepControl, opts: &RunOptions, ledger: &ConstantsLedger) -> Result<RunOutput> {
    ctl.validate()?;
    if state.status == Status::Completed {
        state.status = Status::Running;
    }
    let ineq = opts.q_inequality.as_ref();
    let mut records = vec![take_record(state, ctl, ledger, ineq)?];
    let mut last_h = records[0].h_max;
    let mut recorded_step = state.step_index;
    let steps0 = state.step_index;
    while state.status == Status::Running {
        if let Some(end) = opts.t_end {
            if state.t >= end {
                state.status = Status::Completed;
                break;
            }
        }
        if opts.max_steps.is_some_and(|m| state.step_index - steps0 >= m) {
            break;
        }
        let sample = opts.sample_every.map(|e| next_sample(state.t, e));
        let limit = match (sample, opts.t_end) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        state.step(ctl, limit)?;
        if state.status != Status::Running {
            break;
        }
        let on_grid = sample == Some(state.t);
        if on_grid || state.h_max() >= last_h * opts.growth_factor {
            let rec = take_record(state, ctl, ledger, ineq)?;
            last_h = rec.h_max;
            recorded_step = state.step_index;
            records.push(rec);
        }
    }
    if recorded_step != state.step_index {
        records.push(take_record(state, ctl, ledger, ineq)?);
    }
    let blowup = if state.status == Status::BlownUp { detect_blowup(state, &records, ctl)? } else { None };
    Ok(RunOutput { records, blowup })
}
