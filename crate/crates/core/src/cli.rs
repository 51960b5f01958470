//! `hkflow run|verify|sweep|sphere-exact`: batch front end writing CSV and
//! JSON artifacts. Exit codes: 0 ok, 1 verdict failure, 2 invalid input.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::flow::{self, Checkpoint, FlowState, Status};
use crate::monitors::{
    assess_lalpha_growth, check_min_h, q_ode_bound, records_csv, GrowthAssessment, MinHCheck, MonitorRecord,
    QBoundReport, Verdict as QVerdict,
};
use crate::residual::{
    refinement_study, verify_square_completion, DerivedFields, Identity, Level, RefinementReport, TripleSource, Verdict,
};
use crate::scenario::{invalid, ScenarioConfig, Shape, SweepSettings};
use crate::sphere::SphereSolution;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

/// Text of the alarm raised when `|A|` blows up while `H` stays bounded.
pub const ALARM: &str = "LEMMA 3.1 VIOLATION";

#[derive(Debug, Parser)]
#[command(name = "hkflow", version, about = "H^k mean curvature flow of convex surfaces of revolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a surface and check the monitors along the way.
    Run {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run of the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evolution-identity residuals under (h, dt) refinement.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated identity names.
        #[arg(long, value_delimiter = ',')]
        identities: Vec<String>,
    },
    /// One run per value of a parameter, in parallel (HKFLOW_THREADS caps the pool).
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values; an empty list writes a header-only CSV.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
    /// Closed-form shrinking-sphere tables.
    SphereExact {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` override of any config field (dotted paths allowed).
    #[arg(long = "set", value_parser = parse_kv)]
    pub set: Vec<(String, String)>,
    #[arg(long, value_parser = ["sphere", "spheroid"])]
    pub shape: Option<String>,
    #[arg(long = "R0")]
    pub r0: Option<f64>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long = "N")]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub safety: Option<f64>,
    #[arg(long = "t-end")]
    pub t_end: Option<f64>,
    #[arg(long = "run-to-blowup")]
    pub run_to_blowup: bool,
    #[arg(long = "h-cap")]
    pub h_cap: Option<f64>,
    #[arg(long = "sample-every")]
    pub sample_every: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "allow-outside-theorem")]
    pub allow_outside_theorem: bool,
    #[arg(long = "emit-gnuplot")]
    pub emit_gnuplot: bool,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

impl Common {
    /// Config file, then `--set`, then the named flags.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let base = match &self.config {
            Some(p) => ScenarioConfig::from_json(&fs::read_to_string(p)?)?,
            None => ScenarioConfig::default(),
        };
        let mut c = base.with_overrides(&self.set)?;
        match self.shape.as_deref() {
            Some("sphere") => c.shape = Shape::Sphere { r0: self.r0.unwrap_or(1.0) },
            Some("spheroid") => {
                c.shape = Shape::Spheroid {
                    a: self.a.ok_or_else(|| invalid("--shape spheroid needs --a"))?,
                    c: self.c.ok_or_else(|| invalid("--shape spheroid needs --c"))?,
                }
            }
            _ => {
                if let (Some(r0), Shape::Sphere { .. }) = (self.r0, &c.shape) {
                    c.shape = Shape::Sphere { r0 };
                }
            }
        }
        if let Some(p) = &self.profile {
            c.shape = Shape::ProfileFile { path: p.clone() };
        }
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {$(
                if let Some(v) = self.$field.clone() { c.$target = v.into(); }
            )*};
        }
        set!(n => n, k => k, nodes => nodes, safety => safety, out => output_dir);
        if let Some(a) = self.alpha {
            c.alpha = Some(a);
        }
        if let Some(t) = self.t_end {
            c.t_end = Some(t);
            c.run_to_blowup = false;
        }
        if let Some(h) = self.h_cap {
            c.h_cap = Some(h);
        }
        if let Some(s) = self.sample_every {
            c.sample_every = Some(s);
        }
        c.run_to_blowup |= self.run_to_blowup;
        c.allow_outside_theorem |= self.allow_outside_theorem;
        c.emit_gnuplot |= self.emit_gnuplot;
        Ok(c)
    }
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Parameter(_)
            | Error::InvalidProfile(_)
            | Error::NonpositiveMean { .. }
            | Error::PoleRegularity { .. }
            | Error::SelfIntersecting { .. }
            | Error::UnknownIdentity(_)
            | Error::Malformed(_)
            | Error::VersionMismatch { .. }
            | Error::Io(_)
            | Error::Json(_)
    )
}

fn describe(e: &Error) -> String {
    match e {
        Error::NonpositiveMean { .. } => {
            format!("{e}; the flow is only defined for surfaces with H > 0 everywhere on M")
        }
        _ => e.to_string(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("hkflow: {}", describe(&e));
            if is_input_error(&e) {
                EXIT_INVALID
            } else {
                EXIT_VERDICT
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    let started = std::time::Instant::now();
    let (name, cfg, code) = match cmd {
        Command::Run { common, resume } => {
            let cfg = common.resolve()?;
            let summary = run_scenario(&cfg, resume.as_deref(), true)?;
            ("run", cfg, summary.exit_code())
        }
        Command::Verify { common, identities } => {
            let mut cfg = common.resolve()?;
            if !identities.is_empty() {
                cfg.verify.identities = identities;
            }
            let code = verify_scenario(&cfg)?.exit_code();
            ("verify", cfg, code)
        }
        Command::Sweep { common, axis, values } => {
            let mut cfg = common.resolve()?;
            let values = values.map(|v| parse_values(&v)).transpose()?;
            match (axis, values, cfg.sweep.take()) {
                (Some(axis), values, base) => {
                    let values = values.or(base.map(|b| b.values)).unwrap_or_default();
                    cfg.sweep = Some(SweepSettings { axis, values });
                }
                (None, Some(values), Some(base)) => cfg.sweep = Some(SweepSettings { axis: base.axis, values }),
                (None, _, base) => cfg.sweep = base,
            }
            let code = sweep_scenario(&cfg)?.exit_code();
            ("sweep", cfg, code)
        }
        Command::SphereExact { common } => {
            let cfg = common.resolve()?;
            sphere_exact(&cfg)?;
            ("sphere-exact", cfg, EXIT_OK)
        }
    };
    write_metadata(&cfg.output_dir, name, &cfg, code, started.elapsed().as_secs_f64())?;
    Ok(code)
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| invalid(format!("sweep value `{v}` is not a number"))))
        .collect()
}

/// Run metadata lives beside the data files so those stay byte-identical.
fn write_metadata(dir: &Path, command: &str, cfg: &ScenarioConfig, code: i32, elapsed: f64) -> Result<()> {
    let stamp = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "command": command,
        "package_version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
        "unix_time": stamp,
        "elapsed_seconds": elapsed,
        "exit_code": code,
    });
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct LAlphaSummary {
    pub alpha: f64,
    pub value: f64,
    pub norm: f64,
    /// Only assessed on runs to blow-up.
    pub growth: Option<GrowthAssessment>,
    pub divergent: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QInequalitySummary {
    pub checked: usize,
    pub failures: usize,
    pub min_slack: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub status: Status,
    pub t_final: f64,
    pub steps: u64,
    pub h_max_final: f64,
    pub min_h: Option<MinHCheck>,
    pub q_bound: Option<QBoundReport>,
    pub q_inequality: Option<QInequalitySummary>,
    pub lalpha: Vec<LAlphaSummary>,
    pub blowup: Option<flow::BlowupReport>,
    pub falsification_alarm: bool,
    pub volume_monotone: bool,
    pub pass: bool,
    #[serde(skip)]
    pub records: Vec<MonitorRecord>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_OK
        } else {
            EXIT_VERDICT
        }
    }
}

/// Volumes must decrease along the run, up to a relative slack of `1e−10`.
fn volume_monotone(records: &[MonitorRecord]) -> bool {
    records.windows(2).all(|w| w[1].volume <= w[0].volume * (1.0 + 1e-10))
}

fn any_alarm(records: &[MonitorRecord], cfg: &ScenarioConfig) -> bool {
    let a2_thr = cfg.blowup_h * cfg.blowup_h / cfg.n as f64;
    let h_bound = cfg.h_cap.unwrap_or(cfg.blowup_h);
    records.iter().any(|r| r.a2_max >= a2_thr && r.h_max <= h_bound)
}

/// Runs one scenario. With `write`, artifacts go to `cfg.output_dir`.
pub fn run_scenario(cfg: &ScenarioConfig, resume: Option<&Path>, write: bool) -> Result<RunSummary> {
    cfg.validate(true)?;
    let initial = cfg.surface()?;
    let ledger = cfg.ledger(&initial)?;
    let ctl = cfg.step_control();
    let hash = cfg.hash();
    let mut state = match resume {
        Some(p) => {
            let ck = Checkpoint::from_json(&fs::read_to_string(p)?)?;
            if ck.config_hash != hash {
                return Err(invalid("checkpoint was written by a different config"));
            }
            FlowState::restore(&ck)?
        }
        None => FlowState::new(initial.clone(), cfg.k, &cfg.alphas(), hash.clone())?,
    };
    let dir = &cfg.output_dir;
    if write {
        fs::create_dir_all(dir)?;
        if resume.is_none() {
            write_json(&dir.join("checkpoint_initial.json"), &state.checkpoint())?;
        }
    }
    let mut opts = cfg.run_options();
    if cfg.check_q_inequality {
        let make = |n: usize| cfg.surface_at(n);
        let dt = state.stable_dt(&ctl);
        opts.q_inequality = Some(match cfg.shape {
            Shape::ProfileFile { .. } => Default::default(),
            _ => crate::monitors::calibrate_slack_tolerance(&make, cfg.nodes, dt, &ledger)?,
        });
    }
    let out = match flow::run(&mut state, &ctl, &opts, &ledger) {
        Ok(o) => o,
        Err(e) if state.status == Status::Aborted => {
            eprintln!("hkflow: flow aborted: {}", state.abort_reason.clone().unwrap_or_else(|| e.to_string()));
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let mut records = out.records;

    let min_h = if resume.is_none() { check_min_h(&records).ok() } else { None };
    let q_bound = match cfg.h_cap {
        Some(_) if resume.is_none() => Some(q_ode_bound(&mut records, &ledger)?),
        _ => None,
    };
    let q_inequality = opts.q_inequality.map(|_| {
        let checked: Vec<&MonitorRecord> = records.iter().filter(|r| r.q_ineq_pass.is_some()).collect();
        QInequalitySummary {
            checked: checked.len(),
            failures: checked.iter().filter(|r| r.q_ineq_pass == Some(false)).count(),
            min_slack: checked.iter().filter_map(|r| r.slack_36_min).fold(f64::INFINITY, f64::min),
        }
    });
    let to_blowup = state.status == Status::BlownUp;
    let h: Vec<f64> = records.iter().map(|r| r.h_max).collect();
    let lalpha = state
        .lalpha
        .iter()
        .enumerate()
        .map(|(i, acc)| {
            let vals: Vec<f64> =
                records.iter().map(|r| if i == 0 { r.lalpha_accum } else { r.lalpha_extra[i - 1] }).collect();
            let growth = if to_blowup { assess_lalpha_growth(&h, &vals).ok() } else { None };
            LAlphaSummary {
                alpha: acc.alpha,
                value: acc.value,
                norm: acc.norm(),
                divergent: growth.map(|g| g.divergent),
                growth,
            }
        })
        .collect();
    let falsification_alarm = out.blowup.as_ref().is_some_and(|b| b.falsification_alarm) || any_alarm(&records, cfg);
    if falsification_alarm {
        eprintln!("hkflow: {ALARM}");
    }
    let volume_monotone = volume_monotone(&records);
    let pass = state.status != Status::Aborted
        && min_h.is_none_or(|m| m.pass)
        && q_bound.is_none_or(|q| q.verdict != QVerdict::Fail)
        && q_inequality.as_ref().is_none_or(|q| q.failures == 0)
        && !falsification_alarm
        && volume_monotone;
    let summary = RunSummary {
        config_hash: hash,
        status: state.status,
        t_final: state.t,
        steps: state.step_index,
        h_max_final: state.h_max(),
        min_h,
        q_bound,
        q_inequality,
        lalpha,
        blowup: out.blowup,
        falsification_alarm,
        volume_monotone,
        pass,
        records,
    };
    if write {
        fs::write(dir.join("monitors.csv"), records_csv(&summary.records))?;
        write_json(&dir.join("checkpoint_final.json"), &state.checkpoint())?;
        state.surface.write(&dir.join("final_profile.txt"))?;
        if let Some(b) = &summary.blowup {
            write_json(&dir.join("blowup.json"), b)?;
        }
        write_json(&dir.join("verdicts.json"), &json!({ "config": cfg, "ledger": ledger, "summary": summary }))?;
        if cfg.emit_gnuplot {
            fs::write(dir.join("monitors.gp"), GNUPLOT_MONITORS)?;
        }
    }
    Ok(summary)
}

const GNUPLOT_MONITORS: &str = "\
set datafile separator ','
set key autotitle columnhead
set logscale y
set xlabel 't'
set terminal pngcairo size 1200,800
set output 'monitors.png'
set multiplot layout 2,2
plot 'monitors.csv' using 1:3 with lines, '' using 1:4 with lines
plot 'monitors.csv' using 1:5 with lines
plot 'monitors.csv' using 1:6 with lines
unset logscale y
plot 'monitors.csv' using 1:7 with lines
unset multiplot
";

#[derive(Debug, Clone, Serialize)]
pub struct IdentityOutcome {
    pub identity: String,
    pub nodes: usize,
    pub dt: f64,
    pub max_residual: f64,
    pub l2_residual: f64,
    pub orders: serde_json::Value,
    pub verdict: Verdict,
    pub report: RefinementReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub identities: Vec<IdentityOutcome>,
    pub consistency: Option<serde_json::Value>,
    pub pass: bool,
}

impl VerifySummary {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_OK
        } else {
            EXIT_VERDICT
        }
    }
}

/// Largest relative discrepancy accepted by the square-completion check.
pub const CONSISTENCY_TOL: f64 = 1e-10;

pub fn verify_scenario(cfg: &ScenarioConfig) -> Result<VerifySummary> {
    cfg.validate(false)?;
    if cfg.n != 2 {
        return Err(invalid("verification runs on the axisymmetric backend (n = 2)"));
    }
    let v = &cfg.verify;
    if v.levels.len() < 3 {
        return Err(invalid("verify needs at least 3 refinement levels"));
    }
    let ell = cfg.ell_override.unwrap_or(-2 - cfg.k as i32);
    let ids: Vec<Identity> = v.identities.iter().map(|s| Identity::parse(s, ell)).collect::<Result<_>>()?;
    let levels: Vec<Level> = v.levels.iter().map(|&(n, dt)| Level { n, dt }).collect();
    let make = |n: usize| cfg.surface_at(n);
    let source = match cfg.shape {
        Shape::Sphere { r0 } => {
            // Mid-life, so the backward stencil stays at positive times.
            let sol = SphereSolution::new(2, cfg.k, r0)?;
            TripleSource::Sphere { sol, t: 0.25 * sol.t_max() }
        }
        _ => TripleSource::Linearized(&make),
    };
    let corrupt = v.corrupt_term.map(|c| (c.index, c.factor));
    let mut outcomes = Vec::new();
    for id in ids {
        let report = refinement_study(source, id, v.form, cfg.k, &levels, corrupt)?;
        let finest = levels.iter().max_by_key(|l| l.n).unwrap();
        let finest_row = report.table.iter().find(|r| r.1 == finest.dt).copied().unwrap_or((0.0, 0.0, f64::NAN));
        outcomes.push(IdentityOutcome {
            identity: report.identity.clone(),
            nodes: finest.n,
            dt: finest.dt,
            max_residual: finest_row.2,
            l2_residual: report.finest_l2,
            orders: json!({ "p_h": report.p_h, "p_t": report.p_t }),
            verdict: report.verdict,
            report,
        });
    }
    let consistency = if v.consistency {
        let finest = levels.iter().map(|l| l.n).max().unwrap();
        let fields = DerivedFields::new(&cfg.surface_at(finest)?)?;
        let rep = verify_square_completion(&fields, cfg.k, ell);
        Some(json!({
            "ell": ell,
            "nodes": finest,
            "max_relative": rep.max_relative,
            "tolerance": CONSISTENCY_TOL,
            "pass": rep.max_relative <= CONSISTENCY_TOL,
        }))
    } else {
        None
    };
    let pass = outcomes.iter().all(|o| o.verdict != Verdict::Fail)
        && consistency.as_ref().is_none_or(|c| c["pass"].as_bool() == Some(true));
    let summary = VerifySummary { identities: outcomes, consistency, pass };
    let ledger = cfg.ledger(&cfg.surface_at(levels[0].n)?)?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("verify.json"), &json!({ "config": cfg, "ledger": ledger, "summary": summary }))?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub exit_code: i32,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn exit_code(&self) -> i32 {
        self.rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK)
    }

    pub const CSV_HEADER: &'static str = "value,exit_code,status,t_final,H_max,steps,min_h_pass,lalpha,lalpha_norm,lalpha_divergent,increment_ratio,slope_vs_log_h,q_bound,alarm";

    pub fn csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let line = match &r.summary {
                Some(m) => {
                    let la = &m.lalpha[0];
                    let g = la.growth;
                    format!(
                        "{:e},{},{},{:e},{:e},{},{},{:e},{:e},{},{},{},{},{}",
                        r.value,
                        r.exit_code,
                        serde_json::to_value(m.status)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                            .unwrap_or_default(),
                        m.t_final,
                        m.h_max_final,
                        m.steps,
                        m.min_h.map(|c| c.pass.to_string()).unwrap_or_default(),
                        la.value,
                        la.norm,
                        la.divergent.map(|d| d.to_string()).unwrap_or_default(),
                        g.map(|g| format!("{:e}", g.increment_ratio)).unwrap_or_default(),
                        g.map(|g| format!("{:e}", g.slope_vs_log_h)).unwrap_or_default(),
                        m.q_bound.map(|q| format!("{:?}", q.verdict)).unwrap_or_default(),
                        m.falsification_alarm
                    )
                }
                None => format!("{:e},{},error,,,,,,,,,,,", r.value, r.exit_code),
            };
            s.push_str(&line);
            s.push('\n');
        }
        s
    }
}

pub const SWEEP_AXES: [&str; 5] = ["alpha", "N", "safety", "c", "k"];

/// Applies one sweep value to a copy of the base config.
pub fn sweep_config(base: &ScenarioConfig, axis: &str, value: f64, index: usize) -> Result<ScenarioConfig> {
    let mut c = base.clone();
    c.sweep = None;
    c.output_dir = base.output_dir.join(format!("{axis}_{index}"));
    let whole = |v: f64| -> Result<u64> {
        if v.fract() == 0.0 && v > 0.0 {
            Ok(v as u64)
        } else {
            Err(invalid(format!("{axis} needs a positive integer, got {v}")))
        }
    };
    match axis {
        "alpha" => c.alpha = Some(value),
        "N" => c.nodes = whole(value)? as usize,
        "safety" => c.safety = value,
        "k" => c.k = whole(value)? as u32,
        "c" => match &mut c.shape {
            Shape::Spheroid { c: cc, .. } => *cc = value,
            _ => return Err(invalid("axis c needs a spheroid shape")),
        },
        _ => return Err(invalid(format!("unknown sweep axis `{axis}`; expected one of {SWEEP_AXES:?}"))),
    }
    c.validate(true)?;
    Ok(c)
}

/// Thread count from `HKFLOW_THREADS`, if set and positive.
pub fn thread_cap() -> Option<usize> {
    std::env::var("HKFLOW_THREADS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

pub fn sweep_scenario(cfg: &ScenarioConfig) -> Result<SweepSummary> {
    let s = cfg.sweep.clone().ok_or_else(|| invalid("sweep needs an axis (config `sweep` or --axis)"))?;
    let configs: Vec<ScenarioConfig> =
        s.values.iter().enumerate().map(|(i, v)| sweep_config(cfg, &s.axis, *v, i)).collect::<Result<_>>()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::Parameter(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        use rayon::prelude::*;
        configs
            .par_iter()
            .zip(&s.values)
            .map(|(c, &value)| match run_scenario(c, None, true) {
                Ok(m) => SweepRow { value, exit_code: m.exit_code(), summary: Some(m), error: None },
                Err(e) => SweepRow {
                    value,
                    exit_code: if is_input_error(&e) { EXIT_INVALID } else { EXIT_VERDICT },
                    summary: None,
                    error: Some(e.to_string()),
                },
            })
            .collect()
    });
    let summary = SweepSummary { axis: s.axis, rows };
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("sweep.csv"), summary.csv())?;
    let ledger = cfg.surface().and_then(|s| cfg.ledger(&s)).ok();
    write_json(&cfg.output_dir.join("sweep.json"), &json!({ "config": cfg, "ledger": ledger, "summary": summary }))?;
    if cfg.emit_gnuplot {
        fs::write(
            cfg.output_dir.join("sweep.gp"),
            "set datafile separator ','\nset key autotitle columnhead\nplot 'sweep.csv' using 1:8 with linespoints\n",
        )?;
    }
    Ok(summary)
}

/// Writes `sphere_exact.csv` (t, R, H, |A|², Q, area) and `sphere_exact.json`
/// (T_max and the `L^α` norms).
pub fn sphere_exact(cfg: &ScenarioConfig) -> Result<serde_json::Value> {
    cfg.validate(false)?;
    let Shape::Sphere { r0 } = cfg.shape else {
        return Err(invalid("sphere-exact needs a sphere shape"));
    };
    let sol = SphereSolution::new(cfg.n, cfg.k, r0)?;
    let h0 = sol.mean_at(0.0)?;
    let ledger = cfg.ledger_from(h0)?;
    let t_max = sol.t_max();
    let times: Vec<f64> = if cfg.exact_times.is_empty() {
        (0..10).map(|i| t_max * i as f64 / 10.0).chain([0.99, 0.999, 0.9999].map(|f| f * t_max)).collect()
    } else {
        cfg.exact_times.clone()
    };
    let mut csv = String::from("t,R,H,A2,Q,area\n");
    for t in &times {
        let m = sol.exact_monitors(*t, &ledger)?;
        csv.push_str(&format!("{:e},{:e},{:e},{:e},{:e},{:e}\n", m.t, m.radius, m.mean, m.a_norm_sq, m.q, m.area));
    }
    let norms = cfg.alphas().iter().map(|a| sol.l_alpha_norm(*a, t_max)).collect::<Result<Vec<_>>>()?;
    let report = json!({ "config": cfg, "ledger": ledger, "t_max": t_max, "lalpha": norms });
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("sphere_exact.csv"), csv)?;
    write_json(&cfg.output_dir.join("sphere_exact.json"), &report)?;
    Ok(report)
}
