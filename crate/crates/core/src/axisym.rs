//! Closed convex surfaces of revolution represented by a discrete profile.
//!
//! A [`ProfileSurface`] samples a profile map `u ↦ (r(u), z(u))` at
//! `u_j = jπ/N`, `j = 0..=N`, with both poles on the axis. Nodes are always
//! stored from the upper pole to the lower pole.
//!
//! Curvatures are computed per node from the three-point stencil
//! `(P_{j-1}, P_j, P_{j+1})`, reflecting across the axis at the poles:
//!
//! * κ₁ (meridian) is the signed curvature of the circle through the three
//!   points,
//! * ν is the rotated centered chord `P_{j+1} − P_{j−1}`,
//! * κ₂ (parallel) is `ν_r / r`, and equals κ₁ at the poles.
//!
//! All three are second-order accurate and exact on round spheres, so a
//! sphere stays a sphere to roundoff under the discrete flow.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::fields::neighbours;
use crate::geometry::{metric_from_chart, revolution_chart, shape_from_forms, AxisymGrid, MetricData, ShapeData};

pub const MIN_NODES: usize = 64;
pub const PROFILE_HEADER: &str = "# hkflow-profile v1";

/// Largest admissible `|z_1 − z_0| / r_1` at a pole; a smooth surface has
/// `O(du)` here, a cone tip has `O(1)`.
const POLE_SLOPE_LIMIT: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSurface {
    nodes: Vec<[f64; 2]>,
}

impl ProfileSurface {
    /// Validates and orients a profile. Pole radii must be exactly zero.
    pub fn new(mut nodes: Vec<[f64; 2]>) -> Result<Self> {
        if nodes.len() < MIN_NODES + 1 {
            return Err(Error::InvalidProfile(format!(
                "need N >= {MIN_NODES}, got N = {}",
                nodes.len().saturating_sub(1)
            )));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite coordinate".into()));
        }
        let n = nodes.len() - 1;
        if nodes[0][0] != 0.0 || nodes[n][0] != 0.0 {
            return Err(Error::InvalidProfile("pole nodes must have r = 0".into()));
        }
        if let Some(j) = (1..n).find(|&j| !(nodes[j][0] > 0.0)) {
            return Err(Error::InvalidProfile(format!("r <= 0 at interior node {j}")));
        }
        if nodes[0][1] < nodes[n][1] {
            nodes.reverse();
        }
        let surface = Self { nodes };
        surface.check_embedded()?;
        Ok(surface)
    }

    /// Trusted constructor for profiles produced by the flow itself.
    pub(crate) fn from_nodes_unchecked(nodes: Vec<[f64; 2]>) -> Self {
        Self { nodes }
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut Vec<[f64; 2]> {
        &mut self.nodes
    }

    /// Samples `u ↦ (r(u), z(u))` on `[0, π]`; pole radii are set to zero.
    pub fn from_map(n: usize, map: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let nodes = (0..=n)
            .map(|j| {
                let u = j as f64 * std::f64::consts::PI / n as f64;
                let (r, z) = map(u);
                [if j == 0 || j == n { 0.0 } else { r }, z]
            })
            .collect();
        Self::new(nodes)
    }

    pub fn sphere(radius: f64, n: usize) -> Result<Self> {
        Self::from_map(n, |u| (radius * u.sin(), radius * u.cos()))
    }

    /// Spheroid with equatorial semi-axis `a` and polar semi-axis `c`.
    pub fn spheroid(a: f64, c: f64, n: usize) -> Result<Self> {
        Self::from_map(n, |u| (a * u.sin(), c * u.cos()))
    }

    /// Spheroid scaled by `1 + amplitude·p(u)` with `p` a seeded random
    /// combination of `cos(mu)`, `m = 1..=4`, normalized to `max|p| ≤ 1`.
    pub fn perturbed_spheroid(a: f64, c: f64, n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm: f64 = coeffs.iter().map(|c| c.abs()).sum();
        Self::from_map(n, |u| {
            let p: f64 = coeffs.iter().enumerate().map(|(m, c)| c * ((m + 1) as f64 * u).cos()).sum();
            let f = 1.0 + amplitude * p / norm;
            (a * u.sin() * f, c * u.cos() * f)
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<[f64; 2]> {
        self.nodes
    }

    /// Number of intervals `N` (there are `N + 1` nodes).
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn chord_lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
    }

    pub fn min_spacing(&self) -> f64 {
        self.chord_lengths().fold(f64::INFINITY, f64::min)
    }

    /// `max / min` chord length.
    pub fn spacing_ratio(&self) -> f64 {
        let (lo, hi) = self.chord_lengths().fold((f64::INFINITY, 0.0_f64), |(lo, hi), c| (lo.min(c), hi.max(c)));
        hi / lo
    }

    /// Pairwise segment test plus interior `r > 0`.
    pub fn check_embedded(&self) -> Result<()> {
        let p = &self.nodes;
        let n = self.n();
        if let Some(j) = (1..n).find(|&j| !(p[j][0] > 0.0)) {
            return Err(Error::SelfIntersecting { first: j - 1, second: j });
        }
        for i in 0..n {
            for j in (i + 2)..n {
                if segments_cross(p[i], p[i + 1], p[j], p[j + 1]) {
                    return Err(Error::SelfIntersecting { first: i, second: j });
                }
            }
        }
        Ok(())
    }

    /// Length of the piecewise-cubic interpolant through the nodes.
    pub fn profile_length(&self) -> f64 {
        Interpolant::new(&self.nodes, 3).total_length()
    }

    /// Volume of the body bounded by the interpolated surface,
    /// `π ∫ r² (−dz)`.
    pub fn enclosed_volume(&self) -> f64 {
        Interpolant::new(&self.nodes, 3).volume()
    }

    /// Writes `# hkflow-profile v1 N=<N>` followed by one `r z` line per node.
    pub fn to_text(&self) -> String {
        let mut s = format!("{PROFILE_HEADER} N={}\n", self.n());
        for [r, z] in &self.nodes {
            let _ = writeln!(s, "{r} {z}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Malformed("empty profile".into()))?;
        let n: usize = header
            .strip_prefix(PROFILE_HEADER)
            .and_then(|rest| rest.trim().strip_prefix("N="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Malformed(format!("bad profile header `{header}`")))?;
        let mut nodes = Vec::with_capacity(n + 1);
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |t: Option<&str>| -> Result<f64> {
                t.and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Malformed(format!("bad profile line {}: `{line}`", i + 2)))
            };
            let r = parse(it.next())?;
            let z = parse(it.next())?;
            if it.next().is_some() {
                return Err(Error::Malformed(format!("extra columns on line {}", i + 2)));
            }
            nodes.push([r, z]);
        }
        if nodes.len() != n + 1 {
            return Err(Error::Malformed(format!("header says N={n} but found {} nodes", nodes.len())));
        }
        Self::new(nodes)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn segments_cross(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Per-node curvature data shared by the flow kernel and [`build_geometry`].
#[derive(Debug, Clone, Default)]
pub struct Curvatures {
    /// Outer unit normal in the `(r, z)` half-plane.
    pub normal: Vec<[f64; 2]>,
    pub kappa_meridian: Vec<f64>,
    pub kappa_parallel: Vec<f64>,
    pub mean: Vec<f64>,
    /// `|P_{j+1} − P_j|`, `j = 0..N`.
    pub segment: Vec<f64>,
    /// `|P_{j+1} − P_{j−1}|` with pole reflection.
    pub chord: Vec<f64>,
}

impl Curvatures {
    pub fn compute(nodes: &[[f64; 2]]) -> Self {
        let mut c = Self::default();
        c.compute_into(nodes);
        c
    }

    /// Recomputes in place, reusing the buffers.
    pub fn compute_into(&mut self, nodes: &[[f64; 2]]) {
        let n = nodes.len() - 1;
        let len = |x: f64, y: f64| (x * x + y * y).sqrt();
        self.segment.clear();
        self.segment.extend(nodes.windows(2).map(|w| len(w[1][0] - w[0][0], w[1][1] - w[0][1])));
        for v in [&mut self.kappa_meridian, &mut self.kappa_parallel, &mut self.mean, &mut self.chord] {
            v.resize(n + 1, 0.0);
        }
        self.normal.resize(n + 1, [0.0; 2]);
        for j in 0..=n {
            let (prev, next) = neighbours(nodes, j);
            let p = nodes[j];
            // Ghost nodes reflect across the axis, so a ghost segment is as
            // long as its mirror image.
            let la = self.segment[j.max(1) - 1];
            let lb = self.segment[j.min(n - 1)];
            let (ax, ay) = (p[0] - prev[0], p[1] - prev[1]);
            let (bx, by) = (next[0] - p[0], next[1] - p[1]);
            let (cx, cy) = (next[0] - prev[0], next[1] - prev[1]);
            let lc = len(cx, cy);
            let inv = 1.0 / lc;
            let kappa_m = -2.0 * (ax * by - ay * bx) * inv / (la * lb);
            let nu = [-cy * inv, cx * inv];
            let kappa_p = if j == 0 || j == n { kappa_m } else { nu[0] / p[0] };
            self.normal[j] = nu;
            self.kappa_meridian[j] = kappa_m;
            self.kappa_parallel[j] = kappa_p;
            self.mean[j] = kappa_m + kappa_p;
            self.chord[j] = lc;
        }
    }
}

/// Full per-node geometry of a profile surface.
#[derive(Debug, Clone)]
pub struct SurfaceGeometry {
    pub grid: AxisymGrid,
    pub curv: Curvatures,
    pub a_norm_sq: Vec<f64>,
    /// `None` at the two poles, where the `(u, φ)` chart degenerates.
    pub metric: Vec<Option<MetricData>>,
    /// At the poles `h` is expressed with `g_φφ` replaced by `g_uu`.
    pub shape: Vec<ShapeData>,
    /// κ₁ > 0 and κ₂ > 0 at every interior node.
    pub convex: bool,
}

impl SurfaceGeometry {
    pub fn mean(&self) -> &[f64] {
        &self.curv.mean
    }

    pub fn h_matrices(&self) -> Vec<Matrix2<f64>> {
        self.shape.iter().map(|s| s.h).collect()
    }

    pub fn h_min(&self) -> f64 {
        self.curv.mean.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.curv.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Metric, second fundamental form and curvatures at every node.
///
/// Fails with [`Error::PoleRegularity`] when the profile meets the axis at a
/// corner and with [`Error::NonFinite`] on NaN/∞ curvature. Non-convexity is
/// reported through [`SurfaceGeometry::convex`], not as an error.
pub fn build_geometry(surface: &ProfileSurface) -> Result<SurfaceGeometry> {
    let nodes = surface.nodes();
    let n = surface.n();
    for (pole, inner) in [(0, 1), (n, n - 1)] {
        let slope = (nodes[inner][1] - nodes[pole][1]).abs() / nodes[inner][0];
        if !(slope <= POLE_SLOPE_LIMIT) {
            return Err(Error::PoleRegularity { node: pole, slope });
        }
    }

    let grid = AxisymGrid::new(nodes);
    let curv = Curvatures::compute(nodes);
    if let Some(node) = curv.mean.iter().position(|h| !h.is_finite()) {
        return Err(Error::NonFinite { node });
    }

    let e: Vec<f64> = grid.speed.iter().map(|s| s * s).collect();
    let gpp: Vec<f64> = grid.r.iter().map(|r| r * r).collect();
    let de = grid.d_even(&e);
    let dg = grid.d_even(&gpp);

    let mut metric = Vec::with_capacity(n + 1);
    let mut shape = Vec::with_capacity(n + 1);
    let mut a_norm_sq = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let (k1, k2) = (curv.kappa_meridian[j], curv.kappa_parallel[j]);
        let nu = curv.normal[j];
        let nu3 = Vector3::new(nu[0], 0.0, nu[1]);
        if grid.is_pole(j) {
            let g_inv = Matrix2::identity() / e[j];
            let h = Matrix2::new(k1 * e[j], 0.0, 0.0, k2 * e[j]);
            metric.push(None);
            shape.push(shape_from_forms(nu3, &g_inv, h));
        } else {
            let (prev, next) = neighbours(nodes, j);
            let d1 = [(next[0] - prev[0]) / (2.0 * grid.du), (next[1] - prev[1]) / (2.0 * grid.du)];
            let d2 = [
                (next[0] - 2.0 * nodes[j][0] + prev[0]) / (grid.du * grid.du),
                (next[1] - 2.0 * nodes[j][1] + prev[1]) / (grid.du * grid.du),
            ];
            let sample = revolution_chart(nodes[j], d1, d2);
            let derivs = [Matrix2::new(de[j], 0.0, 0.0, dg[j]), Matrix2::zeros()];
            let m = metric_from_chart(&sample, &derivs, j)?;
            let h = Matrix2::new(k1 * e[j], 0.0, 0.0, k2 * gpp[j]);
            shape.push(shape_from_forms(nu3, &m.g_inv, h));
            metric.push(Some(m));
        }
        a_norm_sq.push(k1 * k1 + k2 * k2);
    }
    let convex = (1..n).all(|j| curv.kappa_meridian[j] > 0.0 && curv.kappa_parallel[j] > 0.0);
    Ok(SurfaceGeometry { grid, curv, a_norm_sq, metric, shape, convex })
}

/// Normal velocity `−H^k ν` at every node, in the `(r, z)` half-plane.
pub fn flow_displacement(curv: &Curvatures, k: u32) -> Result<Vec<[f64; 2]>> {
    let bad: Vec<usize> = curv.mean.iter().enumerate().filter(|(_, h)| !(**h > 0.0)).map(|(j, _)| j).collect();
    if let Some(&first) = bad.first() {
        return Err(Error::NonpositiveMean { first, nodes: bad });
    }
    Ok(curv
        .mean
        .iter()
        .zip(&curv.normal)
        .map(|(h, nu)| {
            let speed = h.powi(k as i32);
            [-speed * nu[0], -speed * nu[1]]
        })
        .collect())
}

/// Redistributes nodes to uniform arc length along a piecewise Lagrange
/// interpolant of odd `order` (3 = cubic). Poles stay on the axis.
pub fn resample(surface: &ProfileSurface, order: usize) -> Result<ProfileSurface> {
    let interp = Interpolant::new(surface.nodes(), order);
    let n = surface.n();
    let total = interp.total_length();
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(surface.nodes()[0]);
    let mut seg = 0;
    for i in 1..n {
        let target = total * i as f64 / n as f64;
        while seg + 1 < n && interp.cumulative[seg + 1] <= target {
            seg += 1;
        }
        let sigma = interp.invert_arc(seg, target - interp.cumulative[seg]);
        nodes.push(interp.eval(sigma));
    }
    nodes.push(surface.nodes()[n]);
    let out = ProfileSurface::from_nodes_unchecked(nodes);
    out.check_embedded()?;
    Ok(out)
}

const GAUSS_X: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GAUSS_W: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// Piecewise Lagrange interpolant in the node index, with nodes mirrored
/// across the axis beyond each pole.
struct Interpolant {
    ext: Vec<[f64; 2]>,
    pad: usize,
    order: usize,
    n: usize,
    cumulative: Vec<f64>,
}

impl Interpolant {
    fn new(nodes: &[[f64; 2]], order: usize) -> Self {
        assert!(order % 2 == 1, "interpolation order must be odd");
        let n = nodes.len() - 1;
        let pad = order.div_ceil(2);
        let mut ext = Vec::with_capacity(n + 1 + 2 * pad);
        for m in (1..=pad).rev() {
            ext.push([-nodes[m][0], nodes[m][1]]);
        }
        ext.extend_from_slice(nodes);
        for m in 1..=pad {
            ext.push([-nodes[n - m][0], nodes[n - m][1]]);
        }
        let mut me = Self { ext, pad, order, n, cumulative: Vec::new() };
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        for j in 0..n {
            let l = me.arc(j, j as f64 + 1.0);
            cum.push(cum[j] + l);
        }
        me.cumulative = cum;
        me
    }

    fn total_length(&self) -> f64 {
        self.cumulative[self.n]
    }

    /// Value and derivative with respect to σ in segment `seg`.
    fn eval_with_derivative(&self, seg: usize, sigma: f64) -> ([f64; 2], [f64; 2]) {
        let half = (self.order - 1) / 2;
        let start = seg as isize - half as isize;
        let m = self.order + 1;
        let xs: Vec<f64> = (0..m).map(|i| (start + i as isize) as f64).collect();
        let mut val = [0.0; 2];
        let mut der = [0.0; 2];
        for i in 0..m {
            let p = self.ext[(start + i as isize + self.pad as isize) as usize];
            let mut li = 1.0;
            let mut dli = 0.0;
            for jx in 0..m {
                if jx == i {
                    continue;
                }
                let denom = xs[i] - xs[jx];
                dli = dli * (sigma - xs[jx]) / denom + li / denom;
                li *= (sigma - xs[jx]) / denom;
            }
            val[0] += li * p[0];
            val[1] += li * p[1];
            der[0] += dli * p[0];
            der[1] += dli * p[1];
        }
        (val, der)
    }

    fn eval(&self, sigma: f64) -> [f64; 2] {
        let seg = (sigma.floor() as usize).min(self.n - 1);
        self.eval_with_derivative(seg, sigma).0
    }

    fn arc(&self, seg: usize, upper: f64) -> f64 {
        let lo = seg as f64;
        let half = 0.5 * (upper - lo);
        let mid = 0.5 * (upper + lo);
        GAUSS_X
            .iter()
            .zip(GAUSS_W)
            .map(|(x, w)| {
                let (_, d) = self.eval_with_derivative(seg, mid + half * x);
                w * d[0].hypot(d[1])
            })
            .sum::<f64>()
            * half
    }

    /// σ in segment `seg` such that the arc length from `seg` equals `target`.
    fn invert_arc(&self, seg: usize, target: f64) -> f64 {
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let mut sigma = seg as f64 + (target / seg_len).clamp(0.0, 1.0);
        for _ in 0..50 {
            let f = self.arc(seg, sigma) - target;
            let (_, d) = self.eval_with_derivative(seg, sigma);
            let step = f / d[0].hypot(d[1]);
            sigma = (sigma - step).clamp(seg as f64, seg as f64 + 1.0);
            if step.abs() < 1e-15 {
                break;
            }
        }
        sigma
    }

    fn volume(&self) -> f64 {
        let mut v = 0.0;
        for seg in 0..self.n {
            let mid = seg as f64 + 0.5;
            for (x, w) in GAUSS_X.iter().zip(GAUSS_W) {
                let (p, d) = self.eval_with_derivative(seg, mid + 0.5 * x);
                v += 0.5 * w * p[0] * p[0] * (-d[1]);
            }
        }
        std::f64::consts::PI * v
    }
}
