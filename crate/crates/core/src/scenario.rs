//! Scenario configuration shared by the command-line front end and the
//! examples: initial shape, flow parameters, monitor settings.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::axisym::{build_geometry, ProfileSurface};
use crate::error::{Error, Result};
use crate::flow::{sha256_hex, RunOptions, Scheme, StepControl};
use crate::monitors::ConstantsLedger;
use crate::residual::Form;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere { r0: f64 },
    Spheroid { a: f64, c: f64 },
    ProfileFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySettings {
    pub identities: Vec<String>,
    pub form: Form,
    /// `(N, dt)` refinement levels.
    pub levels: Vec<(usize, f64)>,
    pub consistency: bool,
    /// Multiplies the coefficient of one right-hand-side term, for negative
    /// controls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_term: Option<CorruptTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptTerm {
    pub index: usize,
    pub factor: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            identities: vec!["H_evo".into(), "A2_evo".into(), "Hpow_evo".into(), "ratio_evo_2k".into()],
            form: Form::Stated,
            levels: vec![(200, 1e-5), (400, 2.5e-6), (800, 6.25e-7)],
            consistency: true,
            corrupt_term: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub axis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub shape: Shape,
    pub n: u32,
    pub k: u32,
    /// Defaults to `n + k + 1`.
    pub alpha: Option<f64>,
    /// Secondary `L^α` accumulators carried along the same run.
    pub extra_alphas: Vec<f64>,
    #[serde(rename = "N")]
    pub nodes: usize,
    pub safety: f64,
    pub dt_min: f64,
    pub scheme: Scheme,
    pub t_end: Option<f64>,
    pub run_to_blowup: bool,
    pub blowup_h: f64,
    pub h_cap: Option<f64>,
    pub sample_every: Option<f64>,
    pub record_growth: f64,
    pub max_steps: Option<u64>,
    /// Evaluate the `Q` evolution inequality at each eligible record.
    pub check_q_inequality: bool,
    pub ell_override: Option<i32>,
    pub allow_outside_theorem: bool,
    pub output_dir: PathBuf,
    pub emit_gnuplot: bool,
    pub verify: VerifySettings,
    pub sweep: Option<SweepSettings>,
    /// Times at which the exact sphere table is written.
    pub exact_times: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Sphere { r0: 1.0 },
            n: 2,
            k: 3,
            alpha: None,
            extra_alphas: Vec::new(),
            nodes: 400,
            safety: 0.2,
            dt_min: 1e-40,
            scheme: Scheme::Euler,
            t_end: None,
            run_to_blowup: false,
            blowup_h: 1e6,
            h_cap: None,
            sample_every: None,
            record_growth: 1.05,
            max_steps: None,
            check_q_inequality: false,
            ell_override: None,
            allow_outside_theorem: false,
            output_dir: PathBuf::from("hkflow-out"),
            emit_gnuplot: false,
            verify: VerifySettings::default(),
            sweep: None,
            exact_times: Vec::new(),
        }
    }
}

/// Rejected configuration; maps to exit code 2.
pub fn invalid(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or((self.n + self.k + 1) as f64)
    }

    /// Checks parameter ranges. `discrete` adds the constraints of the
    /// axisymmetric backend, which only models surfaces in `R³`.
    pub fn validate(&self, discrete: bool) -> Result<()> {
        if self.k.is_multiple_of(2) {
            return Err(invalid(format!("k must be odd, got {}", self.k)));
        }
        if self.k < 3 {
            return Err(invalid(format!("k must be >= 3, got {}", self.k)));
        }
        if self.n < 2 {
            return Err(invalid(format!("n must be >= 2, got {}", self.n)));
        }
        if self.n + 1 < self.k && !self.allow_outside_theorem {
            return Err(invalid(format!(
                "n + 1 >= k is required (n = {}, k = {}); pass --allow-outside-theorem to explore beyond it",
                self.n, self.k
            )));
        }
        if discrete {
            if self.n != 2 {
                return Err(invalid("the axisymmetric backend needs n = 2"));
            }
            if self.nodes < crate::axisym::MIN_NODES {
                return Err(invalid(format!("N must be >= {}", crate::axisym::MIN_NODES)));
            }
            if self.t_end.is_none() && !self.run_to_blowup {
                return Err(invalid("set t_end or run_to_blowup"));
            }
            if let Some(t) = self.t_end {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(invalid(format!("t_end must be positive, got {t}")));
                }
            }
            self.step_control().validate()?;
        }
        if !(self.alpha() >= 1.0) || self.extra_alphas.iter().any(|a| !(*a >= 1.0)) {
            return Err(invalid("alpha must be >= 1"));
        }
        if let Some(e) = self.sample_every {
            if !(e > 0.0) {
                return Err(invalid("sample_every must be positive"));
            }
        }
        if !(self.record_growth > 1.0) {
            return Err(invalid("record_growth must exceed 1"));
        }
        if let Some(ell) = self.ell_override {
            let (lo, hi) = ConstantsLedger::ell_window(self.k);
            if !(lo..=hi).contains(&(ell as f64)) {
                return Err(invalid(format!("ell_override {ell} outside [{lo}, {hi}]")));
            }
        }
        match &self.shape {
            Shape::Sphere { r0 } if !(*r0 > 0.0) => Err(invalid("R0 must be positive")),
            Shape::Spheroid { a, c } if !(*a > 0.0 && *c > 0.0) => Err(invalid("spheroid axes must be positive")),
            _ => Ok(()),
        }
    }

    /// Initial profile with `N` intervals (profile files keep their own `N`).
    pub fn surface_at(&self, n: usize) -> Result<ProfileSurface> {
        match &self.shape {
            Shape::Sphere { r0 } => ProfileSurface::sphere(*r0, n),
            Shape::Spheroid { a, c } => ProfileSurface::spheroid(*a, *c, n),
            Shape::ProfileFile { path } => {
                let s = ProfileSurface::read(path)?;
                if s.n() != n {
                    return Err(invalid(format!("profile file has N = {}, requested {n}", s.n())));
                }
                Ok(s)
            }
        }
    }

    pub fn surface(&self) -> Result<ProfileSurface> {
        match &self.shape {
            Shape::ProfileFile { path } => ProfileSurface::read(path),
            _ => self.surface_at(self.nodes),
        }
    }

    /// Ledger built from `min H` of the initial surface. Fails with exit
    /// code 2 semantics when `H ≤ 0` somewhere.
    pub fn ledger(&self, surface: &ProfileSurface) -> Result<ConstantsLedger> {
        let geom = build_geometry(surface)?;
        let h_min0 = geom.h_min();
        if !(h_min0 > 0.0) {
            let nodes: Vec<usize> = (0..geom.mean().len()).filter(|&j| !(geom.mean()[j] > 0.0)).collect();
            return Err(Error::NonpositiveMean { first: nodes[0], nodes });
        }
        self.ledger_from(h_min0)
    }

    pub fn ledger_from(&self, h_min0: f64) -> Result<ConstantsLedger> {
        let l = ConstantsLedger::new(self.n, self.k, self.alpha(), h_min0, self.h_cap)?;
        match self.ell_override {
            Some(ell) => l.with_ell(ell),
            None => Ok(l),
        }
    }

    pub fn step_control(&self) -> StepControl {
        StepControl {
            safety: self.safety,
            dt_min: self.dt_min,
            h_cap: self.h_cap,
            scheme: self.scheme,
            blowup_h: self.blowup_h,
            ..StepControl::default()
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            t_end: if self.run_to_blowup { None } else { self.t_end },
            sample_every: self.sample_every,
            growth_factor: self.record_growth,
            max_steps: self.max_steps,
            q_inequality: None,
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        std::iter::once(self.alpha()).chain(self.extra_alphas.iter().copied()).collect()
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hash of the fields that determine the trajectory. Horizon, output
    /// and study settings are left out so a checkpoint can be resumed with
    /// a later `t_end` or into another directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            for key in
                ["t_end", "run_to_blowup", "max_steps", "output_dir", "emit_gnuplot", "verify", "sweep", "exact_times"]
            {
                obj.remove(key);
            }
        }
        sha256_hex(v.to_string().as_bytes())
    }

    /// Applies `key=value` overrides; `value` is parsed as JSON and falls
    /// back to a plain string.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for (key, raw) in overrides {
            let v: serde_json::Value =
                serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            set_path(&mut value, key, v)?;
        }
        serde_json::from_value(value).map_err(|e| invalid(format!("override: {e}")))
    }
}

/// Dotted-path assignment into a JSON object.
fn set_path(root: &mut serde_json::Value, key: &str, v: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| invalid(format!("cannot set `{key}`")))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), v);
            return Ok(());
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| serde_json::json!({}));
    }
    Ok(())
}
