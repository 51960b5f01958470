//! Scalars and inequalities evaluated along a flow trajectory.
//!
//! The [`ConstantsLedger`] fixes the exponent `ℓ` and the constants
//! `C₀..C₄` of the pinching quantity
//! `Q = |A|²/H^{2k} + C₀ H^{ℓ+1}` from `n`, `k`, `min H(0)` and the
//! curvature cap `H_cap`. Monitors compare sampled flow data against the
//! bounds built from those constants.

use serde::Serialize;

use crate::axisym::SurfaceGeometry;
use crate::error::{Error, Result};
use crate::residual::{DerivedFields, StateTriple};
use crate::sphere::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsLedger {
    pub n: u32,
    pub k: u32,
    pub alpha: f64,
    pub ell: i32,
    pub h_min0: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Needs `h_cap`.
    pub c4: Option<f64>,
    pub h_cap: Option<f64>,
}

impl ConstantsLedger {
    /// Ledger with the default exponent `ℓ = −2 − k`.
    pub fn new(n: u32, k: u32, alpha: f64, h_min0: f64, h_cap: Option<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("n must be >= 2, got {n}")));
        }
        if k < 3 || k.is_multiple_of(2) {
            return Err(Error::Parameter(format!("k must be odd and >= 3, got {k}")));
        }
        if !(h_min0 > 0.0 && h_min0.is_finite()) {
            return Err(Error::Parameter(format!("min H(0) must be positive, got {h_min0}")));
        }
        if let Some(c) = h_cap {
            if !(c >= h_min0 && c.is_finite()) {
                return Err(Error::Parameter(format!("H_cap {c} must be finite and >= min H(0) = {h_min0}")));
            }
        }
        let kf = k as f64;
        let c0 = 0.5 * (kf + 1.0) / (kf - 1.0) * h_min0.powi(k as i32 + 2);
        let c1 = c0 * (1.0 + kf);
        let c2 = c0 * c0 * (1.0 + kf);
        let c3 = c1 * h_min0.powi(2 * k as i32 - 2);
        let c4 = h_cap.map(|c| c2 * c.powi(k as i32 - 3));
        Ok(Self { n, k, alpha, ell: Self::default_ell(k), h_min0, c0, c1, c2, c3, c4, h_cap })
    }

    pub fn default_ell(k: u32) -> i32 {
        -2 - k as i32
    }

    /// Admissible window `−½ − 3k/2 ≤ ℓ ≤ −1 − k`.
    pub fn ell_window(k: u32) -> (f64, f64) {
        let kf = k as f64;
        (-0.5 - 1.5 * kf, -1.0 - kf)
    }

    pub fn with_ell(mut self, ell: i32) -> Result<Self> {
        let (lo, hi) = Self::ell_window(self.k);
        if !(lo..=hi).contains(&(ell as f64)) {
            return Err(Error::Parameter(format!("ell = {ell} outside [{lo}, {hi}] for k = {}", self.k)));
        }
        self.ell = ell;
        Ok(self)
    }

    /// `Q = |A|²/H^{2k} + C₀ H^{ℓ+1}`.
    pub fn q(&self, mean: f64, a_norm_sq: f64) -> f64 {
        a_norm_sq / mean.powi(2 * self.k as i32) + self.c0 * mean.powi(self.ell + 1)
    }

    /// Fixed point `C₄/C₃` of the ODE bound.
    pub fn q_equilibrium(&self) -> Option<f64> {
        self.c4.map(|c4| c4 / self.c3)
    }

    /// `C₄/C₃ + (Q(0) − C₄/C₃) e^{−C₃ t}`.
    pub fn q_bound(&self, q0: f64, t: f64) -> Option<f64> {
        self.q_equilibrium().map(|eq| eq + (q0 - eq) * (-self.c3 * t).exp())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QField {
    pub values: Vec<f64>,
    pub max: f64,
    pub argmax: usize,
}

pub fn q_field(mean: &[f64], a_norm_sq: &[f64], ledger: &ConstantsLedger) -> Result<QField> {
    let bad: Vec<usize> = (0..mean.len()).filter(|&j| !(mean[j] > 0.0)).collect();
    if let Some(&first) = bad.first() {
        return Err(Error::NonpositiveMean { nodes: bad, first });
    }
    let values: Vec<f64> = mean.iter().zip(a_norm_sq).map(|(h, a)| ledger.q(*h, *a)).collect();
    let (argmax, max) =
        values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    Ok(QField { values, max, argmax })
}

/// One sampled state of a flow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorRecord {
    pub t: f64,
    pub dt: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub a2_max: f64,
    pub q_max: f64,
    pub lalpha_accum: f64,
    /// Minimum of the slack of the `Q` evolution inequality, when evaluated.
    pub slack_36_min: Option<f64>,
    /// `bound(t) − 𝒬(t)`, filled in by [`q_ode_bound`].
    pub qbound_slack: Option<f64>,
    /// `H_max ≤ H_cap`
    pub eligible: bool,
    pub convex: bool,
    pub volume: f64,
    /// Pass flag of the `Q` evolution inequality with its calibrated tolerance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_ineq_pass: Option<bool>,
    /// Secondary `L^α` accumulators, in the order the flow state lists them.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lalpha_extra: Vec<f64>,
}

impl MonitorRecord {
    pub fn from_geometry(
        t: f64,
        dt: f64,
        geom: &SurfaceGeometry,
        ledger: &ConstantsLedger,
        lalpha_accum: f64,
        volume: f64,
    ) -> Result<Self> {
        let q = q_field(geom.mean(), &geom.a_norm_sq, ledger)?;
        let h_max = geom.h_max();
        Ok(Self {
            t,
            dt,
            h_min: geom.h_min(),
            h_max,
            a2_max: geom.a_norm_sq.iter().copied().fold(0.0, f64::max),
            q_max: q.max,
            lalpha_accum,
            slack_36_min: None,
            qbound_slack: None,
            eligible: ledger.h_cap.is_none_or(|c| h_max <= c),
            convex: geom.convex,
            volume,
            q_ineq_pass: None,
            lalpha_extra: Vec::new(),
        })
    }

    pub const CSV_HEADER: &'static str =
        "t,dt,H_min,H_max,A2_max,Q_max,lalpha_accum,slack_36_min,qbound_slack,eligible,convex";

    /// Shortest round-trip decimals; missing values are empty fields.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{},{}",
            self.t,
            self.dt,
            self.h_min,
            self.h_max,
            self.a2_max,
            self.q_max,
            self.lalpha_accum,
            opt(self.slack_36_min),
            opt(self.qbound_slack),
            self.eligible as u8,
            self.convex as u8
        )
    }
}

pub fn records_csv(records: &[MonitorRecord]) -> String {
    let mut out = String::from(MonitorRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinHCheck {
    pub pass: bool,
    /// Most negative `H_min(t_j) − H_min(t_0)`.
    pub worst_slack: f64,
    pub worst_index: usize,
    pub tolerance: f64,
}

pub const MIN_H_REL_TOL: f64 = 1e-4;

/// `H_min(t_j) ≥ H_min(t_0) − 1e−4·H_min(t_0)` for every record.
pub fn check_min_h(records: &[MonitorRecord]) -> Result<MinHCheck> {
    if records.len() < 2 {
        return Err(Error::Insufficient("min-H check needs at least 2 records".into()));
    }
    let h0 = records[0].h_min;
    let tolerance = MIN_H_REL_TOL * h0;
    let (worst_index, worst_slack) = records
        .iter()
        .map(|r| r.h_min - h0)
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, s)| if s < acc.1 { (j, s) } else { acc });
    Ok(MinHCheck { pass: worst_slack >= -tolerance, worst_slack, worst_index, tolerance })
}

/// Tolerance model `max(rel·|RHS|, c_h h² + c_t dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackTolerance {
    pub rel: f64,
    pub c_h: f64,
    pub c_t: f64,
}

impl Default for SlackTolerance {
    fn default() -> Self {
        Self { rel: 1e-3, c_h: 0.0, c_t: 0.0 }
    }
}

impl SlackTolerance {
    pub fn at(&self, rhs: f64, h: f64, dt: f64) -> f64 {
        (self.rel * rhs.abs()).max(self.c_h * h * h + self.c_t * dt)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QInequalityReport {
    #[serde(skip)]
    pub slack: Vec<f64>,
    #[serde(skip)]
    pub lhs: Vec<f64>,
    #[serde(skip)]
    pub rhs: Vec<f64>,
    pub min_slack: f64,
    /// Smallest `slack + tol` over nodes; negative means failure.
    pub min_margin: f64,
    pub pass: bool,
}

/// Per-node pieces of the `Q` evolution inequality on the centre of a triple.
fn q_inequality_terms(triple: &StateTriple, ledger: &ConstantsLedger) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = ledger.k;
    let kf = k as f64;
    let ki = k as i32;
    let fields = DerivedFields::new(&triple.center)?;
    let mean = fields.mean();
    let q = q_field(mean, fields.a_norm_sq(), ledger)?.values;
    let dq = triple.time_derivative(|s| {
        let g = crate::axisym::build_geometry(s)?;
        Ok(q_field(g.mean(), &g.a_norm_sq, ledger)?.values)
    })?;
    let lap_q = fields.laplacian(&q);
    let hk1: Vec<f64> = mean.iter().map(|h| h.powi(ki - 1)).collect();
    let drift = fields.grad_dot(&hk1, &q);
    let n = fields.n();
    let lhs = (0..=n).map(|j| dq[j] - kf * hk1[j] * lap_q[j]).collect();
    let rhs = (0..=n)
        .map(|j| {
            2.0 * kf * kf / (kf - 1.0) * drift[j] - ledger.c1 * mean[j].powi(2 * ki - 2) * q[j]
                + ledger.c2 * mean[j].powi(ki - 3)
        })
        .collect();
    Ok((lhs, rhs))
}

/// Signed slack `RHS − LHS` of
/// `(∂_t − kH^{k−1}Δ)Q ≤ 2k²/(k−1)⟨∇H^{k−1},∇Q⟩ − C₁H^{2k−2}Q + C₂H^{k−3}`.
pub fn check_q_inequality(
    triple: &StateTriple,
    ledger: &ConstantsLedger,
    tol: &SlackTolerance,
) -> Result<QInequalityReport> {
    let (lhs, rhs) = q_inequality_terms(triple, ledger)?;
    let h = std::f64::consts::PI / triple.center.n() as f64;
    let slack: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| r - l).collect();
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    let min_margin = slack.iter().zip(&rhs).map(|(s, r)| s + tol.at(*r, h, triple.dt)).fold(f64::INFINITY, f64::min);
    Ok(QInequalityReport { slack, lhs, rhs, min_slack, min_margin, pass: min_margin >= 0.0 })
}

/// Fits `c_h` and `c_t` from the slack at `N` versus `2N` and at `dt`
/// versus `dt/2`, each Richardson-extrapolated and inflated by a factor 2.
/// `make(n)` must sample the same surface on both grids.
pub fn calibrate_slack_tolerance(
    make: &dyn Fn(usize) -> Result<crate::axisym::ProfileSurface>,
    n: usize,
    dt: f64,
    ledger: &ConstantsLedger,
) -> Result<SlackTolerance> {
    let slack = |n: usize, dt: f64| -> Result<Vec<f64>> {
        let t = StateTriple::linearized(&make(n)?, ledger.k, dt)?;
        let (l, r) = q_inequality_terms(&t, ledger)?;
        Ok(r.iter().zip(&l).map(|(r, l)| r - l).collect())
    };
    let coarse = slack(n, dt)?;
    let fine = slack(2 * n, dt)?;
    let half_dt = slack(n, 0.5 * dt)?;
    let h = std::f64::consts::PI / n as f64;
    let e_h = (0..=n).map(|j| (coarse[j] - fine[2 * j]).abs() * 4.0 / 3.0).fold(0.0, f64::max);
    let e_t = coarse.iter().zip(&half_dt).map(|(a, b)| (a - b).abs() * 4.0 / 3.0).fold(0.0, f64::max);
    Ok(SlackTolerance { rel: 1e-3, c_h: 2.0 * e_h / (h * h), c_t: 2.0 * e_t / dt })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QBoundReport {
    pub verdict: Verdict,
    pub checked: usize,
    /// Smallest `bound + tol − 𝒬` over eligible records.
    pub worst_slack: f64,
    /// `max(C₄/C₃, 𝒬(0))`
    pub c5: f64,
    /// `sqrt(C₅ H_cap^{2k})`
    pub c6: f64,
}

pub const QBOUND_REL_TOL: f64 = 1e-3;

/// Checks `𝒬(t) ≤ C₄/C₃ + (𝒬(0) − C₄/C₃)e^{−C₃t} + tol` on eligible records and
/// writes each record's `qbound_slack`. Times are measured from `records[0]`.
pub fn q_ode_bound(records: &mut [MonitorRecord], ledger: &ConstantsLedger) -> Result<QBoundReport> {
    let (Some(eq), Some(cap)) = (ledger.q_equilibrium(), ledger.h_cap) else {
        return Err(Error::Parameter("the Q bound needs H_cap".into()));
    };
    let Some(first) = records.first() else {
        return Err(Error::Insufficient("no records".into()));
    };
    let (t0, q0) = (first.t, first.q_max);
    let c5 = eq.max(q0);
    let c6 = (c5 * cap.powi(2 * ledger.k as i32)).sqrt();
    let mut checked = 0;
    let mut worst_slack = f64::INFINITY;
    for r in records.iter_mut() {
        let bound = ledger.q_bound(q0, r.t - t0).unwrap();
        let slack = bound - r.q_max;
        r.qbound_slack = Some(slack);
        if r.eligible {
            checked += 1;
            worst_slack = worst_slack.min(slack + QBOUND_REL_TOL * bound.abs());
        }
    }
    let verdict = match checked {
        0 => Verdict::Inconclusive,
        _ if worst_slack >= 0.0 => Verdict::Pass,
        _ => Verdict::Fail,
    };
    Ok(QBoundReport { verdict, checked, worst_slack, c5, c6 })
}

/// `∫ H^α dμ` by the trapezoid rule in `u` with weight `2πr|F_u|`.
pub fn lalpha_integrand(geom: &SurfaceGeometry, alpha: f64) -> f64 {
    let f: Vec<f64> = geom.mean().iter().map(|h| h.powf(alpha)).collect();
    geom.grid.integrate_trapezoid(&f)
}

/// Running `∫₀^t ∫ H^α dμ ds` with the trapezoid rule in time.
///
/// Panels are fed by their width rather than their end time: close to blow-up
/// the steps fall below the resolution of `t` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LAlphaAccumulator {
    pub alpha: f64,
    pub value: f64,
    last: Option<f64>,
}

impl LAlphaAccumulator {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::Parameter(format!("alpha must be >= 1, got {alpha}")));
        }
        Ok(Self { alpha, value: 0.0, last: None })
    }

    /// Restores a running value whose last panel ended with `integrand`.
    pub fn resume(alpha: f64, value: f64, integrand: f64) -> Self {
        Self { alpha, value, last: Some(integrand) }
    }

    /// Closes a panel of width `dt` ending at `integrand`. The first call only
    /// sets the left endpoint.
    pub fn push(&mut self, dt: f64, integrand: f64) {
        if let Some(f0) = self.last {
            self.value += 0.5 * dt * (f0 + integrand);
        }
        self.last = Some(integrand);
    }

    pub fn norm(&self) -> f64 {
        self.value.powf(1.0 / self.alpha)
    }
}

/// Growth of the accumulated integral against `H_max` along a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthAssessment {
    /// Geometric ratio of increments per doubling of `H_max`.
    pub increment_ratio: f64,
    /// Slope of the accumulator against `ln H_max` over the last doublings.
    pub slope_vs_log_h: f64,
    pub doublings: usize,
    pub divergent: bool,
}

/// Ratio at or above which per-doubling increments count as non-decaying.
pub const GROWTH_DIVERGENCE_RATIO: f64 = 0.97;

/// Interpolates the accumulator at `H_max = H₀·2^i` (linear in `ln H_max`)
/// and fits the increments. Needs `H_max` to grow by at least a factor 16.
pub fn assess_lalpha_growth(h_max: &[f64], accum: &[f64]) -> Result<GrowthAssessment> {
    let pts: Vec<(f64, f64)> = h_max.iter().zip(accum).map(|(h, a)| (h.ln(), *a)).collect();
    let Some(&(l0, _)) = pts.first() else {
        return Err(Error::Insufficient("no records".into()));
    };
    let l_end = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let doublings = ((l_end - l0) / std::f64::consts::LN_2).floor() as usize;
    if doublings < 4 {
        return Err(Error::Insufficient(format!("H_max grew by only {} doublings", doublings)));
    }
    let at = |l: f64| -> f64 {
        let i = pts.iter().position(|p| p.0 >= l).unwrap();
        if i == 0 {
            return pts[0].1;
        }
        let (a, b) = (pts[i - 1], pts[i]);
        if b.0 == a.0 {
            return b.1;
        }
        a.1 + (b.1 - a.1) * (l - a.0) / (b.0 - a.0)
    };
    let levels: Vec<f64> = (0..=doublings).map(|i| l0 + i as f64 * std::f64::consts::LN_2).collect();
    let vals: Vec<f64> = levels.iter().map(|l| at(*l)).collect();
    let incs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).max(f64::MIN_POSITIVE)).collect();
    // The early doublings carry the initial transient; fit the later half.
    let start = incs.len() / 2;
    let tail = &incs[start..];
    let idx: Vec<f64> = (0..tail.len()).map(|i| i as f64).collect();
    let (_, log_slope) = linear_fit(&idx, &tail.iter().map(|d| d.ln()).collect::<Vec<_>>());
    let increment_ratio = log_slope.exp();
    let (_, slope_vs_log_h) = linear_fit(&levels[start..], &vals[start..]);
    Ok(GrowthAssessment {
        increment_ratio,
        slope_vs_log_h,
        doublings,
        divergent: increment_ratio >= GROWTH_DIVERGENCE_RATIO,
    })
}
