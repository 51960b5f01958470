//! Closed-form H^k flow of round hyperspheres in `R^{n+1}`.
//!
//! A sphere of radius `R` has `H = n/R`, so the flow reduces to
//! `dR/dt = −(n/R)^k`, whence `R(t)^{k+1} = R₀^{k+1} − (k+1) n^k t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::monitors::ConstantsLedger;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereSolution {
    pub n: u32,
    pub k: u32,
    pub r0: f64,
}

/// Closed-form monitor values on a shrinking sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactMonitors {
    pub t: f64,
    pub radius: f64,
    pub mean: f64,
    pub a_norm_sq: f64,
    pub q: f64,
    pub h_min: f64,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LAlphaNorm {
    pub alpha: f64,
    /// `∫∫ H^α dμ dt`; `+∞` when divergent.
    pub integral: f64,
    /// `integral^{1/α}`.
    pub norm: f64,
    pub divergent: bool,
    /// Truncation study near `T_max` (only when `t_end = T_max`).
    pub truncation: Option<TruncationFit>,
}

/// Partial integrals at `t_m = T_max (1 − 10^{−m})`, `m = 2..=6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationFit {
    /// Least-squares slope `b` of `I(m) ≈ a + b m`.
    pub slope_per_decade: f64,
    /// Geometric decay ratio of consecutive increments `I(m+1) − I(m)`.
    pub increment_ratio: f64,
    /// `I(6)` plus the geometric tail, meaningful only when convergent.
    pub extrapolated: f64,
}

/// Increment ratio at or above which the partial integrals are declared
/// divergent.
pub const DIVERGENCE_RATIO: f64 = 0.99;

const TRUNCATION_DECADES: std::ops::RangeInclusive<i32> = 2..=6;

/// Area of the unit n-sphere in `R^{n+1}`.
pub fn unit_sphere_area(n: u32) -> f64 {
    use std::f64::consts::PI;
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n - 1) as f64 * unit_sphere_area(n - 2),
    }
}

impl SphereSolution {
    pub fn new(n: u32, k: u32, r0: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("n must be >= 2, got {n}")));
        }
        if k < 3 || k.is_multiple_of(2) {
            return Err(Error::Parameter(format!("k must be odd and >= 3, got {k}")));
        }
        if !(r0 > 0.0) {
            return Err(Error::Parameter(format!("R0 must be positive, got {r0}")));
        }
        Ok(Self { n, k, r0 })
    }

    fn rate(&self) -> f64 {
        (self.k + 1) as f64 * (self.n as f64).powi(self.k as i32)
    }

    pub fn t_max(&self) -> f64 {
        self.r0.powi(self.k as i32 + 1) / self.rate()
    }

    pub fn radius_at(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::Parameter(format!("negative time {t}")));
        }
        if t == 0.0 {
            return Ok(self.r0);
        }
        let t_max = self.t_max();
        if t >= t_max {
            return Err(Error::PastBlowup { t, t_max });
        }
        let s = self.r0.powi(self.k as i32 + 1) - self.rate() * t;
        Ok(s.powf(1.0 / (self.k + 1) as f64))
    }

    pub fn mean_at(&self, t: f64) -> Result<f64> {
        Ok(self.n as f64 / self.radius_at(t)?)
    }

    pub fn a_norm_sq_at(&self, t: f64) -> Result<f64> {
        let r = self.radius_at(t)?;
        Ok(self.n as f64 / (r * r))
    }

    pub fn exact_monitors(&self, t: f64, ledger: &ConstantsLedger) -> Result<ExactMonitors> {
        let radius = self.radius_at(t)?;
        let mean = self.n as f64 / radius;
        let a_norm_sq = self.n as f64 / (radius * radius);
        Ok(ExactMonitors {
            t,
            radius,
            mean,
            a_norm_sq,
            q: ledger.q(mean, a_norm_sq),
            h_min: mean,
            area: unit_sphere_area(self.n) * radius.powi(self.n as i32),
        })
    }

    /// `∫₀^{t} ∫ H^α dμ dt` in closed form. `t = T_max` is allowed.
    pub fn lalpha_integral(&self, alpha: f64, t: f64) -> f64 {
        let n = self.n as f64;
        let kp1 = (self.k + 1) as f64;
        let s0 = self.r0.powi(self.k as i32 + 1);
        let s = (s0 - self.rate() * t).max(0.0);
        let pref = n.powf(alpha) * unit_sphere_area(self.n) / self.rate();
        // ∫_s^{s0} σ^{q−1} dσ with q = (n − α)/(k+1) + 1
        let q = (n - alpha) / kp1 + 1.0;
        if s == 0.0 {
            return if q > 0.0 { pref * s0.powf(q) / q } else { f64::INFINITY };
        }
        let log_ratio = (s / s0).ln();
        if q == 0.0 {
            pref * (-log_ratio)
        } else {
            pref * s0.powf(q) * (-(q * log_ratio).exp_m1()) / q
        }
    }

    /// `∥H∥_{L^α(M×[0, t_end))}` with a divergence flag at `t_end = T_max`.
    pub fn l_alpha_norm(&self, alpha: f64, t_end: f64) -> Result<LAlphaNorm> {
        if !(alpha >= 1.0) {
            return Err(Error::Parameter(format!("alpha must be >= 1, got {alpha}")));
        }
        let t_max = self.t_max();
        if t_end > t_max || t_end < 0.0 {
            return Err(Error::Parameter(format!("t_end {t_end} outside [0, T_max = {t_max}]")));
        }
        if t_end < t_max {
            let integral = self.lalpha_integral(alpha, t_end);
            return Ok(LAlphaNorm {
                alpha,
                integral,
                norm: integral.powf(1.0 / alpha),
                divergent: false,
                truncation: None,
            });
        }

        let fit = self.truncation_fit(alpha);
        let divergent = fit.increment_ratio >= DIVERGENCE_RATIO;
        let integral = if divergent { f64::INFINITY } else { self.lalpha_integral(alpha, t_max) };
        Ok(LAlphaNorm { alpha, integral, norm: integral.powf(1.0 / alpha), divergent, truncation: Some(fit) })
    }

    fn truncation_fit(&self, alpha: f64) -> TruncationFit {
        let t_max = self.t_max();
        let ms: Vec<f64> = TRUNCATION_DECADES.map(f64::from).collect();
        let vals: Vec<f64> = ms.iter().map(|m| self.lalpha_integral(alpha, t_max * (1.0 - 10f64.powf(-m)))).collect();
        let (_, slope) = linear_fit(&ms, &vals);
        let incs: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
        let log_incs: Vec<f64> = incs.iter().map(|d| d.ln()).collect();
        let idx: Vec<f64> = (0..incs.len()).map(|i| i as f64).collect();
        let (_, log_slope) = linear_fit(&idx, &log_incs);
        let ratio = log_slope.exp();
        let last = *vals.last().unwrap();
        let tail = if ratio < 1.0 { incs.last().unwrap() * ratio / (1.0 - ratio) } else { f64::INFINITY };
        TruncationFit { slope_per_decade: slope, increment_ratio: ratio, extrapolated: last + tail }
    }
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}
