//! Pointwise residuals of the evolution identities of the H^k flow.
//!
//! Each identity has the shape `∂_t f = Σ terms`, where `f` is a scalar built
//! from `H` and `|A|²`. The left side is a central difference over a
//! [`StateTriple`]; every right-hand term is evaluated from the geometry of
//! the middle state.
//!
//! Two forms are available for the identities involving `|A|²`:
//!
//! * [`Form::Stated`] takes `∂_t|A|² = kH^{k−1}(Δ|A|² − 2|∇A|² + 2|A|⁴)`,
//!   the `k = 1` variation formula scaled by `kH^{k−1}`, and the ratio
//!   identities derived from it.
//! * [`Form::Corrected`] uses the first-variation formula
//!   `∂_t|A|² = kH^{k−1}Δ|A|² − 2kH^{k−1}|∇A|² + 2kH^{k−1}|A|⁴
//!   + 2(1−k)H^k tr A³ + 2k(k−1)H^{k−2} A(∇H,∇H)`,
//!   which agrees with the stated one only for `k = 1`.
//!
//! `H_evo` and `Hpow_evo` are identical in both forms.

use serde::{Deserialize, Serialize};

use crate::axisym::{build_geometry, flow_displacement, Curvatures, ProfileSurface, SurfaceGeometry};
use crate::error::{Error, Result};
use crate::geometry::fields::{completed_square, covariant_grad_a, grad_a_dot_a_dot_grad, GradA};
use crate::sphere::{linear_fit, SphereSolution};

/// Geometry of one state plus every derived field the identities need.
#[derive(Debug, Clone)]
pub struct DerivedFields {
    pub geometry: SurfaceGeometry,
    /// `∂_u H`
    pub mean_u: Vec<f64>,
    pub grad_mean_sq: Vec<f64>,
    pub lap_mean: Vec<f64>,
    pub lap_a2: Vec<f64>,
    pub grad_a: Vec<GradA>,
    pub grad_a_sq: Vec<f64>,
    /// `∇A·A·∇H = g^{ia} h^{jk} ∇_i h_{jk} ∂_a H`
    pub grad_a_a_grad_h: Vec<f64>,
    /// `tr A³ = κ₁³ + κ₂³`
    pub tr_a3: Vec<f64>,
    /// `A(∇H, ∇H) = h^{ij} ∂_i H ∂_j H`
    pub a_grad_h_grad_h: Vec<f64>,
}

impl DerivedFields {
    pub fn new(surface: &ProfileSurface) -> Result<Self> {
        Ok(Self::from_geometry(build_geometry(surface)?))
    }

    pub fn from_geometry(geometry: SurfaceGeometry) -> Self {
        let grid = &geometry.grid;
        let mean = geometry.curv.mean.clone();
        let mean_u = grid.d_even(&mean);
        let grad_mean_sq = grid.gradient_norm_sq(&mean);
        let lap_mean = grid.laplace_beltrami(&mean);
        let lap_a2 = grid.laplace_beltrami(&geometry.a_norm_sq);
        let h = geometry.h_matrices();
        let grad_a = covariant_grad_a(grid, &geometry.metric, &h);
        let grad_a_sq = grad_a.iter().map(|g| g.norm_sq).collect();
        let grad_a_a_grad_h = (0..=grid.n)
            .map(|j| match &geometry.metric[j] {
                Some(m) => grad_a_dot_a_dot_grad(&grad_a[j].tensor, &h[j], &m.g_inv, [mean_u[j], 0.0]),
                None => 0.0,
            })
            .collect();
        let tr_a3 = geometry
            .curv
            .kappa_meridian
            .iter()
            .zip(&geometry.curv.kappa_parallel)
            .map(|(a, b)| a.powi(3) + b.powi(3))
            .collect();
        let a_grad_h_grad_h = (0..=grid.n)
            .map(|j| {
                let e = grid.speed[j] * grid.speed[j];
                geometry.curv.kappa_meridian[j] * mean_u[j] * mean_u[j] / e
            })
            .collect();
        Self {
            geometry,
            mean_u,
            grad_mean_sq,
            lap_mean,
            lap_a2,
            grad_a,
            grad_a_sq,
            grad_a_a_grad_h,
            tr_a3,
            a_grad_h_grad_h,
        }
    }

    pub fn n(&self) -> usize {
        self.geometry.grid.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.geometry.curv.mean
    }

    pub fn a_norm_sq(&self) -> &[f64] {
        &self.geometry.a_norm_sq
    }

    /// `⟨∇a, ∇b⟩` for two even fields.
    pub fn grad_dot(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let grid = &self.geometry.grid;
        let (da, db) = (grid.d_even(a), grid.d_even(b));
        (0..=grid.n).map(|j| da[j] * db[j] / (grid.speed[j] * grid.speed[j])).collect()
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.geometry.grid.laplace_beltrami(f)
    }

    /// `|H∇A − c A⊗∇H|²` per node (zero at the poles).
    pub fn completed_square(&self, c: f64) -> Vec<f64> {
        let h = self.geometry.h_matrices();
        (0..=self.n())
            .map(|j| match &self.geometry.metric[j] {
                Some(m) => {
                    completed_square(&self.grad_a[j].tensor, &h[j], &m.g_inv, self.mean()[j], [self.mean_u[j], 0.0], c)
                }
                None => 0.0,
            })
            .collect()
    }

    fn map_mean(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.mean().iter().map(|h| f(*h)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Form {
    Stated,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Identity {
    /// `∂_t H`
    HEvo,
    /// `∂_t |A|²`
    A2Evo,
    /// `∂_t H^{ℓ+1}`
    HpowEvo { ell: i32 },
    /// `∂_t (|A|²/H^{ℓ+1})`
    RatioEvo { ell: i32 },
    /// `∂_t (|A|²/H^{2k})`
    RatioEvo2k,
}

impl Identity {
    pub fn name(&self) -> String {
        match self {
            Self::HEvo => "H_evo".into(),
            Self::A2Evo => "A2_evo".into(),
            Self::HpowEvo { ell } => format!("Hpow_evo({ell})"),
            Self::RatioEvo { ell } => format!("ratio_evo({ell})"),
            Self::RatioEvo2k => "ratio_evo_2k".into(),
        }
    }

    /// Parses `H_evo`, `A2_evo`, `Hpow_evo(-5)`, `ratio_evo(-5)`,
    /// `ratio_evo_2k`. A bare `Hpow_evo`/`ratio_evo` uses `default_ell`.
    pub fn parse(s: &str, default_ell: i32) -> Result<Self> {
        let s = s.trim();
        let with_ell = |rest: &str| -> Result<i32> {
            if rest.is_empty() {
                return Ok(default_ell);
            }
            rest.strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::UnknownIdentity(s.to_string()))
        };
        match s {
            "H_evo" => Ok(Self::HEvo),
            "A2_evo" => Ok(Self::A2Evo),
            "ratio_evo_2k" => Ok(Self::RatioEvo2k),
            _ if s.starts_with("Hpow_evo") => Ok(Self::HpowEvo { ell: with_ell(&s[8..])? }),
            _ if s.starts_with("ratio_evo") => Ok(Self::RatioEvo { ell: with_ell(&s[9..])? }),
            _ => Err(Error::UnknownIdentity(s.to_string())),
        }
    }

    /// The five identities with `ℓ = −2 − k`.
    pub fn all(k: u32) -> Vec<Self> {
        let ell = -2 - k as i32;
        vec![Self::HEvo, Self::A2Evo, Self::HpowEvo { ell }, Self::RatioEvo { ell }, Self::RatioEvo2k]
    }

    fn ratio_ell(&self, k: u32) -> Option<i32> {
        match self {
            Self::RatioEvo { ell } => Some(*ell),
            Self::RatioEvo2k => Some(2 * k as i32 - 1),
            _ => None,
        }
    }

    /// The evolved scalar `f`.
    pub fn evolved(&self, fields: &DerivedFields, k: u32) -> Vec<f64> {
        match self {
            Self::HEvo => fields.mean().to_vec(),
            Self::A2Evo => fields.a_norm_sq().to_vec(),
            Self::HpowEvo { ell } => fields.map_mean(|h| h.powi(ell + 1)),
            _ => {
                let ell = self.ratio_ell(k).unwrap();
                fields.a_norm_sq().iter().zip(fields.mean()).map(|(a, h)| a / h.powi(ell + 1)).collect()
            }
        }
    }

    /// Named right-hand-side terms of `∂_t f = Σ terms`.
    pub fn terms(&self, fields: &DerivedFields, k: u32, form: Form) -> Vec<(&'static str, Vec<f64>)> {
        let kf = k as f64;
        let ki = k as i32;
        let h = fields.mean();
        let a2 = fields.a_norm_sq();
        let g2 = &fields.grad_mean_sq;
        let nodes = 0..=fields.n();
        let pw = |e: i32| -> Vec<f64> { h.iter().map(|v| v.powi(e)).collect() };
        let hk1 = pw(ki - 1);
        let hk2 = pw(ki - 2);
        let diffusion = |f: &[f64]| -> Vec<f64> {
            let lap = fields.laplacian(f);
            lap.iter().zip(&hk1).map(|(l, p)| kf * p * l).collect()
        };

        match self {
            Self::HEvo => vec![
                ("kH^{k-1}ΔH", diffusion(h)),
                ("H^k|A|²", nodes.clone().map(|j| h[j].powi(ki) * a2[j]).collect()),
                ("k(k-1)H^{k-2}|∇H|²", nodes.map(|j| kf * (kf - 1.0) * hk2[j] * g2[j]).collect()),
            ],
            Self::A2Evo => {
                let mut t = vec![
                    ("kH^{k-1}Δ|A|²", diffusion(a2)),
                    ("-2kH^{k-1}|∇A|²", nodes.clone().map(|j| -2.0 * kf * hk1[j] * fields.grad_a_sq[j]).collect()),
                    ("2kH^{k-1}|A|⁴", nodes.clone().map(|j| 2.0 * kf * hk1[j] * a2[j] * a2[j]).collect()),
                ];
                match form {
                    Form::Stated => {
                        t.push((
                            "2k(k-1)H^{k-2}|∇H|²",
                            nodes.map(|j| 2.0 * kf * (kf - 1.0) * hk2[j] * g2[j]).collect(),
                        ));
                    }
                    Form::Corrected => {
                        t.push((
                            "2(1-k)H^k trA³",
                            nodes.clone().map(|j| 2.0 * (1.0 - kf) * h[j].powi(ki) * fields.tr_a3[j]).collect(),
                        ));
                        t.push((
                            "2k(k-1)H^{k-2}A(∇H,∇H)",
                            nodes.map(|j| 2.0 * kf * (kf - 1.0) * hk2[j] * fields.a_grad_h_grad_h[j]).collect(),
                        ));
                    }
                }
                t
            }
            Self::HpowEvo { ell } => {
                let l1 = (ell + 1) as f64;
                let f = fields.map_mean(|v| v.powi(ell + 1));
                vec![
                    ("kH^{k-1}ΔH^{ℓ+1}", diffusion(&f)),
                    ("(ℓ+1)H^{k+ℓ}|A|²", nodes.clone().map(|j| l1 * h[j].powi(ki + ell) * a2[j]).collect()),
                    (
                        "k(k-ℓ-1)(ℓ+1)H^{k+ℓ-2}|∇H|²",
                        nodes.map(|j| kf * (kf - l1) * l1 * h[j].powi(ki + ell - 2) * g2[j]).collect(),
                    ),
                ]
            }
            Self::RatioEvo { .. } | Self::RatioEvo2k => {
                let ell = self.ratio_ell(k).unwrap();
                let f = self.evolved(fields, k);
                let mut t = vec![("kH^{k-1}Δf", diffusion(&f))];
                t.extend(match form {
                    Form::Stated => ratio_terms_stated(fields, k, ell, &f),
                    Form::Corrected => ratio_terms_corrected(fields, k, ell),
                });
                t
            }
        }
    }

    pub fn rhs(&self, fields: &DerivedFields, k: u32, form: Form) -> Vec<f64> {
        self.rhs_scaled(fields, k, form, None)
    }

    /// Right side with term `index` multiplied by `factor`.
    pub fn rhs_scaled(&self, fields: &DerivedFields, k: u32, form: Form, scale: Option<(usize, f64)>) -> Vec<f64> {
        let mut out = vec![0.0; fields.n() + 1];
        for (i, (_, t)) in self.terms(fields, k, form).into_iter().enumerate() {
            let f = match scale {
                Some((idx, f)) if idx == i => f,
                _ => 1.0,
            };
            for (o, v) in out.iter_mut().zip(t) {
                *o += f * v;
            }
        }
        out
    }
}

/// Completed-square form of `(∂_t − kH^{k−1}Δ)(|A|²/H^{ℓ+1})` built on the stated `|A|²` evolution.
fn ratio_terms_stated(fields: &DerivedFields, k: u32, ell: i32, f: &[f64]) -> Vec<(&'static str, Vec<f64>)> {
    let kf = k as f64;
    let ki = k as i32;
    let l1 = (ell + 1) as f64;
    let h = fields.mean();
    let a2 = fields.a_norm_sq();
    let g2 = &fields.grad_mean_sq;
    let hk1: Vec<f64> = h.iter().map(|v| v.powi(ki - 1)).collect();
    let drift = fields.grad_dot(&hk1, f);
    let sq = fields.completed_square(l1 / 2.0);
    let nodes = 0..=fields.n();
    vec![
        ("k(ℓ+1)/(k-1)⟨∇H^{k-1},∇f⟩", drift.iter().map(|d| kf * l1 / (kf - 1.0) * d).collect()),
        (
            "-2k/H^{ℓ+4-k}[H∇A-(ℓ+1)/2 A∇H]²",
            nodes.clone().map(|j| -2.0 * kf * sq[j] / h[j].powi(ell + 4 - ki)).collect(),
        ),
        (
            "2k(k-1)/H^{ℓ+3-k}|∇H|²",
            nodes.clone().map(|j| 2.0 * kf * (kf - 1.0) * g2[j] / h[j].powi(ell + 3 - ki)).collect(),
        ),
        (
            "(2k-ℓ-1)/H^{ℓ+2-k}|A|⁴",
            nodes.clone().map(|j| (2.0 * kf - l1) * a2[j] * a2[j] / h[j].powi(ell + 2 - ki)).collect(),
        ),
        (
            "-k(ℓ+1)(2k-ℓ-1)/(2H^{ℓ+4-k})|A|²|∇H|²",
            nodes.map(|j| -kf * l1 * (2.0 * kf - l1) / 2.0 * a2[j] * g2[j] / h[j].powi(ell + 4 - ki)).collect(),
        ),
    ]
}

/// Product-rule expansion of `(∂_t − kH^{k−1}Δ)(|A|² H^m)`, `m = −(ℓ+1)`,
/// from the first-variation formulas for `H` and `|A|²`.
fn ratio_terms_corrected(fields: &DerivedFields, k: u32, ell: i32) -> Vec<(&'static str, Vec<f64>)> {
    let kf = k as f64;
    let ki = k as i32;
    let m = -(ell + 1);
    let mf = m as f64;
    let h = fields.mean();
    let a2 = fields.a_norm_sq();
    let g2 = &fields.grad_mean_sq;
    let nodes = 0..=fields.n();
    vec![
        (
            "H^m(-2kH^{k-1}|∇A|²+2kH^{k-1}|A|⁴)",
            nodes
                .clone()
                .map(|j| h[j].powi(m) * 2.0 * kf * h[j].powi(ki - 1) * (a2[j] * a2[j] - fields.grad_a_sq[j]))
                .collect(),
        ),
        (
            "H^m 2(1-k)H^k trA³",
            nodes.clone().map(|j| h[j].powi(m) * 2.0 * (1.0 - kf) * h[j].powi(ki) * fields.tr_a3[j]).collect(),
        ),
        (
            "H^m 2k(k-1)H^{k-2}A(∇H,∇H)",
            nodes
                .clone()
                .map(|j| h[j].powi(m) * 2.0 * kf * (kf - 1.0) * h[j].powi(ki - 2) * fields.a_grad_h_grad_h[j])
                .collect(),
        ),
        (
            "|A|² mH^{m-1}(H^k|A|²+k(k-1)H^{k-2}|∇H|²)",
            nodes
                .clone()
                .map(|j| {
                    a2[j]
                        * mf
                        * h[j].powi(m - 1)
                        * (h[j].powi(ki) * a2[j] + kf * (kf - 1.0) * h[j].powi(ki - 2) * g2[j])
                })
                .collect(),
        ),
        (
            "-|A|² k m(m-1)H^{k+m-3}|∇H|²",
            nodes.clone().map(|j| -a2[j] * kf * mf * (mf - 1.0) * h[j].powi(ki + m - 3) * g2[j]).collect(),
        ),
        (
            "-2kH^{k-1}⟨∇|A|²,∇H^m⟩",
            nodes
                .map(|j| -2.0 * kf * h[j].powi(ki - 1) * 2.0 * fields.grad_a_a_grad_h[j] * mf * h[j].powi(m - 1))
                .collect(),
        ),
    ]
}

/// Three states `dt` apart with matching node indices.
#[derive(Debug, Clone)]
pub struct StateTriple {
    pub minus: ProfileSurface,
    pub center: ProfileSurface,
    pub plus: ProfileSurface,
    pub dt: f64,
}

impl StateTriple {
    /// `F ± dt·(−H^k ν)`: the flow evolved infinitesimally in both directions.
    pub fn linearized(surface: &ProfileSurface, k: u32, dt: f64) -> Result<Self> {
        let curv = Curvatures::compute(surface.nodes());
        let vel = flow_displacement(&curv, k)?;
        let shift = |sign: f64| {
            let nodes = surface
                .nodes()
                .iter()
                .zip(&vel)
                .map(|(p, v)| [p[0] + sign * dt * v[0], p[1] + sign * dt * v[1]])
                .collect();
            ProfileSurface::from_nodes_unchecked(nodes)
        };
        Ok(Self { minus: shift(-1.0), center: surface.clone(), plus: shift(1.0), dt })
    }

    /// Analytic spheres at `R(t − dt)`, `R(t)`, `R(t + dt)` (n = 2).
    pub fn sphere_trajectory(sol: &SphereSolution, t: f64, dt: f64, n_nodes: usize) -> Result<Self> {
        if sol.n != 2 {
            return Err(Error::Parameter("discrete states need n = 2".into()));
        }
        let at = |t: f64| -> Result<ProfileSurface> { ProfileSurface::sphere(sol.radius_at(t)?, n_nodes) };
        Ok(Self { minus: at(t - dt)?, center: at(t)?, plus: at(t + dt)?, dt })
    }

    /// Builds a triple from three timed states; times must be equispaced.
    pub fn from_states(states: [(f64, &ProfileSurface); 3]) -> Result<Self> {
        let [(t0, a), (t1, b), (t2, c)] = states;
        let (d1, d2) = (t1 - t0, t2 - t1);
        if !(d1 > 0.0) || (d1 - d2).abs() > 1e-12 * d1 || a.n() != b.n() || b.n() != c.n() {
            return Err(Error::NonEquispaced);
        }
        Ok(Self { minus: a.clone(), center: b.clone(), plus: c.clone(), dt: 0.5 * (d1 + d2) })
    }

    /// Central difference `(f(t+dt) − f(t−dt)) / 2dt` of a per-node field.
    pub fn time_derivative(&self, f: impl Fn(&ProfileSurface) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let (fp, fm) = (f(&self.plus)?, f(&self.minus)?);
        Ok(fp.iter().zip(&fm).map(|(p, m)| (p - m) / (2.0 * self.dt)).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub identity: String,
    pub form: Form,
    pub nodes: usize,
    pub dt: f64,
    #[serde(skip)]
    pub residual: Vec<f64>,
    /// Max over interior nodes `0 < j < N`.
    pub max_residual: f64,
    /// `L²(dμ)` norm over the whole surface.
    pub l2_residual: f64,
    /// `|residual|` at the two poles.
    pub pole_residual: [f64; 2],
    /// Max `|∂_t f|` over interior nodes.
    pub lhs_scale: f64,
}

impl ResidualReport {
    pub fn relative_max(&self) -> f64 {
        self.max_residual / self.lhs_scale.max(f64::MIN_POSITIVE)
    }
}

/// Evaluates one identity on a state triple.
pub fn evaluate_identity(identity: Identity, form: Form, triple: &StateTriple, k: u32) -> Result<ResidualReport> {
    evaluate_identity_scaled(identity, form, triple, k, None)
}

/// [`evaluate_identity`] with one right-hand term rescaled (negative controls).
pub fn evaluate_identity_scaled(
    identity: Identity,
    form: Form,
    triple: &StateTriple,
    k: u32,
    scale: Option<(usize, f64)>,
) -> Result<ResidualReport> {
    let center = DerivedFields::new(&triple.center)?;
    if let Some(node) = center.mean().iter().position(|h| !(*h > 0.0)) {
        return Err(Error::NonpositiveMean { nodes: vec![node], first: node });
    }
    let evolved = |s: &ProfileSurface| -> Result<Vec<f64>> {
        let geom = build_geometry(s)?;
        let fields = LightFields::new(&geom);
        Ok(identity.evolved_light(&fields, k))
    };
    let lhs = triple.time_derivative(evolved)?;
    let rhs = identity.rhs_scaled(&center, k, form, scale);
    let residual: Vec<f64> = lhs.iter().zip(&rhs).map(|(l, r)| l - r).collect();
    if let Some(node) = residual.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite { node });
    }
    let n = center.n();
    let grid = &center.geometry.grid;
    let max_residual = residual[1..n].iter().map(|r| r.abs()).fold(0.0, f64::max);
    let area = grid.integrate_cells(&vec![1.0; n + 1]);
    let l2_residual = (grid.integrate_cells(&residual.iter().map(|r| r * r).collect::<Vec<_>>()) / area).sqrt();
    let lhs_scale = lhs[1..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(ResidualReport {
        identity: identity.name(),
        form,
        nodes: n,
        dt: triple.dt,
        max_residual,
        l2_residual,
        pole_residual: [residual[0].abs(), residual[n].abs()],
        lhs_scale,
        residual,
    })
}

/// Only `H` and `|A|²`; enough to evaluate the evolved scalars cheaply.
struct LightFields<'a> {
    mean: &'a [f64],
    a2: &'a [f64],
}

impl<'a> LightFields<'a> {
    fn new(g: &'a SurfaceGeometry) -> Self {
        Self { mean: &g.curv.mean, a2: &g.a_norm_sq }
    }
}

impl Identity {
    fn evolved_light(&self, f: &LightFields<'_>, k: u32) -> Vec<f64> {
        match self {
            Self::HEvo => f.mean.to_vec(),
            Self::A2Evo => f.a2.to_vec(),
            Self::HpowEvo { ell } => f.mean.iter().map(|h| h.powi(ell + 1)).collect(),
            _ => {
                let ell = self.ratio_ell(k).unwrap();
                f.a2.iter().zip(f.mean).map(|(a, h)| a / h.powi(ell + 1)).collect()
            }
        }
    }
}

/// Per-node comparison of the two algebraically equivalent expansions of
/// `(∂_t − kH^{k−1}Δ)(|A|²/H^{ℓ+1})`: the expanded form with the cross term
/// `∇A·A·∇H`, and the completed-square form. The gradient of `|A|²` is taken
/// as `2 h^{jk} ∇h_{jk}` in both, so the comparison is purely algebraic.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub ell: i32,
    pub nodes: usize,
    /// `|expanded − completed| / Σ|terms|` over interior nodes.
    pub max_relative: f64,
    #[serde(skip)]
    pub relative: Vec<f64>,
}

pub fn verify_square_completion(fields: &DerivedFields, k: u32, ell: i32) -> ConsistencyReport {
    let kf = k as f64;
    let ki = k as i32;
    let l1 = (ell + 1) as f64;
    let n = fields.n();
    let h = fields.mean();
    let a2 = fields.a_norm_sq();
    let sq = fields.completed_square(l1 / 2.0);
    let relative: Vec<f64> = (0..=n)
        .map(|j| {
            let (hj, a, g2, ga2, p) =
                (h[j], a2[j], fields.grad_mean_sq[j], fields.grad_a_sq[j], fields.grad_a_a_grad_h[j]);
            let hp = |e: i32| hj.powi(e);
            let expanded = [
                -2.0 * kf / hp(ell + 2 - ki) * ga2,
                (2.0 * kf - l1) / hp(ell + 2 - ki) * a * a,
                2.0 * kf * (kf - 1.0) / hp(ell + 3 - ki) * g2,
                -kf * l1 * (kf + l1) * a * g2 / hp(ell + 4 - ki),
                4.0 * kf * l1 / hp(ell + 4 - ki) * hj * p,
            ];
            // ⟨∇H^{k−1}, ∇(|A|²/H^{ℓ+1})⟩ with ∇|A|² = 2 A·∇A.
            let drift = (kf - 1.0) * hp(ki - 2) * (2.0 * p / hp(ell + 1) - l1 * a * g2 / hp(ell + 2));
            let completed = [
                kf * l1 / (kf - 1.0) * drift,
                -2.0 * kf / hp(ell + 4 - ki) * sq[j],
                2.0 * kf * (kf - 1.0) / hp(ell + 3 - ki) * g2,
                (2.0 * kf - l1) / hp(ell + 2 - ki) * a * a,
                -kf * l1 * (2.0 * kf - l1) / (2.0 * hp(ell + 4 - ki)) * a * g2,
            ];
            let scale: f64 = expanded.iter().chain(&completed).map(|v| v.abs()).sum();
            let diff = expanded.iter().sum::<f64>() - completed.iter().sum::<f64>();
            if scale == 0.0 {
                0.0
            } else {
                diff.abs() / scale
            }
        })
        .collect();
    let max_relative = relative[1..n].iter().copied().fold(0.0, f64::max);
    ConsistencyReport { ell, nodes: n, max_relative, relative }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    FloorReached,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Level {
    pub n: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub identity: String,
    pub form: Form,
    /// `(h, dt, max_residual)` with `h = π/N`.
    pub table: Vec<(f64, f64, f64)>,
    /// `(dt, max |D_dt f − D_{dt/2} f|)` at the finest `N`.
    pub time_table: Vec<(f64, f64)>,
    /// `L²` residual at the last level.
    pub finest_l2: f64,
    pub p_h: f64,
    pub p_t: f64,
    pub verdict: Verdict,
}

/// Minimum observed order for a passing refinement study.
pub const MIN_ORDER: f64 = 1.8;
/// Residuals below this fraction of `max|∂_t f|` count as roundoff.
pub const ROUNDOFF_FLOOR: f64 = 1e-9;
/// Relative residual accepted at a level that cannot be refined further.
pub const RESIDUAL_BOUND: f64 = 1e-6;
/// On exact spheres every field is constant over the surface, so the
/// node-to-node spread of a residual is pure roundoff. A level whose max
/// residual is within this multiple of its spread is at the floor.
pub const NOISE_SAFETY: f64 = 10.0;

fn spread(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)));
    hi - lo
}

/// Log-log slope over the levels above the roundoff floor. With fewer than
/// two such levels there is nothing to fit; the study then passes only if
/// each of them is within [`RESIDUAL_BOUND`].
fn floor_aware_order(rows: &[(f64, f64)], at_floor: &[bool], relative: &[f64]) -> (f64, bool) {
    let live: Vec<usize> = (0..rows.len()).filter(|&i| !at_floor[i]).collect();
    if live.len() < 2 {
        return (f64::NAN, live.iter().all(|&i| relative[i] <= RESIDUAL_BOUND));
    }
    let x: Vec<f64> = live.iter().map(|&i| rows[i].0.ln()).collect();
    let y: Vec<f64> = live.iter().map(|&i| rows[i].1.max(f64::MIN_POSITIVE).ln()).collect();
    let (_, p) = linear_fit(&x, &y);
    (p, p >= MIN_ORDER)
}

/// How the state triples of a refinement study are produced.
#[derive(Clone, Copy)]
pub enum TripleSource<'a> {
    /// `F ± dt V(F)` around the surface built at each level.
    Linearized(&'a dyn Fn(usize) -> Result<ProfileSurface>),
    /// Exact shrinking spheres around time `t`.
    Sphere { sol: SphereSolution, t: f64 },
}

impl TripleSource<'_> {
    fn triple(&self, n: usize, dt: f64, k: u32) -> Result<StateTriple> {
        match self {
            Self::Linearized(make) => StateTriple::linearized(&make(n)?, k, dt),
            Self::Sphere { sol, t } => StateTriple::sphere_trajectory(sol, *t, dt, n),
        }
    }
}

/// Residual orders under joint `(h, dt)` refinement.
///
/// `p_h` is the least-squares slope of `log max_residual` against `log h`
/// across the `levels` above the roundoff floor. Because the levels refine `h` and `dt` together, `p_t`
/// comes from a separate time-only sweep at the finest `N`: the Cauchy
/// differences of the central-difference left side at `8dt, 4dt, 2dt, dt`
/// with `dt` the coarsest level's step. Going below that step at the finest
/// `N` only measures roundoff in the second differences.
pub fn refinement_study(
    source: TripleSource<'_>,
    identity: Identity,
    form: Form,
    k: u32,
    levels: &[Level],
    scale: Option<(usize, f64)>,
) -> Result<RefinementReport> {
    if levels.len() < 3 {
        return Err(Error::Insufficient("refinement study needs at least 3 levels".into()));
    }
    let symmetric = matches!(source, TripleSource::Sphere { .. });
    let mut table = Vec::with_capacity(levels.len());
    let mut at_floor = Vec::with_capacity(levels.len());
    let mut relative = Vec::with_capacity(levels.len());
    let mut finest_l2 = 0.0;
    for lvl in levels {
        let triple = source.triple(lvl.n, lvl.dt, k)?;
        let rep = evaluate_identity_scaled(identity, form, &triple, k, scale)?;
        finest_l2 = rep.l2_residual;
        let noise = if symmetric { NOISE_SAFETY * spread(&rep.residual[1..rep.nodes]) } else { 0.0 };
        at_floor.push(rep.max_residual <= (ROUNDOFF_FLOOR * rep.lhs_scale).max(noise));
        relative.push(rep.relative_max());
        table.push((std::f64::consts::PI / lvl.n as f64, lvl.dt, rep.max_residual));
    }
    let (p_h, space_ok) =
        floor_aware_order(&table.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>(), &at_floor, &relative);

    let finest = levels.iter().max_by_key(|l| l.n).unwrap();
    let coarsest_dt = levels.iter().map(|l| l.dt).fold(0.0, f64::max);
    let dts: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|s| s * coarsest_dt).collect();
    let mut lhs = Vec::with_capacity(dts.len());
    for &dt in &dts {
        let triple = source.triple(finest.n, dt, k)?;
        lhs.push(triple.time_derivative(|s| {
            let g = build_geometry(s)?;
            Ok(identity.evolved_light(&LightFields::new(&g), k))
        })?);
    }
    let n = finest.n;
    let lhs_scale = lhs[0][1..n].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut time_table = Vec::with_capacity(dts.len() - 1);
    let mut t_floor = Vec::with_capacity(dts.len() - 1);
    for (w, dt) in lhs.windows(2).zip(&dts) {
        let diff: Vec<f64> = w[0][1..n].iter().zip(&w[1][1..n]).map(|(a, b)| a - b).collect();
        let d = diff.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let noise = if symmetric { NOISE_SAFETY * spread(&diff) } else { 0.0 };
        t_floor.push(d <= (ROUNDOFF_FLOOR * lhs_scale).max(noise));
        time_table.push((*dt, d));
    }
    let t_relative: Vec<f64> = time_table.iter().map(|r| r.1 / lhs_scale.max(f64::MIN_POSITIVE)).collect();
    let (p_t, time_ok) = floor_aware_order(&time_table, &t_floor, &t_relative);

    let verdict = match (space_ok, time_ok) {
        (true, true) if at_floor.iter().chain(&t_floor).all(|f| *f) => Verdict::FloorReached,
        (true, true) => Verdict::Pass,
        _ => Verdict::Fail,
    };
    Ok(RefinementReport { identity: identity.name(), form, table, time_table, finest_l2, p_h, p_t, verdict })
}
