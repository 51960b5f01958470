//! Differential geometry of a two-dimensional chart `(u, φ) ↦ F(u, φ) ∈ R³`.
//!
//! Conventions used throughout the crate:
//!
//! * `ν` is the outer unit normal, `ν = F_u × F_φ / |F_u × F_φ|`. Profiles are
//!   always stored running from the upper pole to the lower pole, which makes
//!   this cross product point away from the enclosed body.
//! * `h_ij = −⟨ν, ∂²F/∂x^i∂x^j⟩`, `H = g^{ij} h_ij`. A round sphere of radius
//!   `R` has `H = 2/R > 0` and `|A|² = 2/R²`.
//! * Index 0 is `u` (meridian), index 1 is `φ` (parallel).

pub mod fields;

use nalgebra::{Matrix2, Vector3};

use crate::error::{Error, Result};

pub use fields::{AxisymGrid, GradA};

/// Position and derivatives of a chart at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSample {
    pub position: Vector3<f64>,
    /// `[∂F/∂u, ∂F/∂φ]`
    pub first_derivs: [Vector3<f64>; 2],
    /// `[∂²F/∂u², ∂²F/∂u∂φ, ∂²F/∂φ²]`
    pub second_derivs: [Vector3<f64>; 3],
}

impl ChartSample {
    pub fn second(&self, i: usize, j: usize) -> Vector3<f64> {
        match (i, j) {
            (0, 0) => self.second_derivs[0],
            (1, 1) => self.second_derivs[2],
            _ => self.second_derivs[1],
        }
    }

    /// Exact metric derivatives `∂_k g_ij = ⟨F_ki, F_j⟩ + ⟨F_i, F_kj⟩` from the
    /// sampled second derivatives. Used when the chart is known analytically.
    pub fn metric_derivatives(&self) -> [Matrix2<f64>; 2] {
        let f = &self.first_derivs;
        let mut out = [Matrix2::zeros(); 2];
        for (k, dk) in out.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    dk[(i, j)] = self.second(k, i).dot(&f[j]) + f[i].dot(&self.second(k, j));
                }
            }
        }
        out
    }
}

/// Christoffel symbols of the second kind, indexed `[m][i][j]` for `Γ^m_{ij}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Christoffel(pub [[[f64; 2]; 2]; 2]);

impl Christoffel {
    #[inline]
    pub fn get(&self, m: usize, i: usize, j: usize) -> f64 {
        self.0[m][i][j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricData {
    pub g: Matrix2<f64>,
    pub g_inv: Matrix2<f64>,
    pub sqrt_det_g: f64,
    pub christoffel: Christoffel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeData {
    pub nu: Vector3<f64>,
    pub h: Matrix2<f64>,
    pub mean: f64,
    pub a_norm_sq: f64,
    /// `(κ₁, κ₂)`; for surfaces of revolution κ₁ is the meridian curvature.
    pub principal: (f64, f64),
}

/// Induced metric, inverse, area density and Christoffel symbols.
///
/// `metric_derivs[k]` holds `∂_k g_ij`, supplied either by
/// [`ChartSample::metric_derivatives`] or by a grid stencil.
pub fn metric_from_chart(sample: &ChartSample, metric_derivs: &[Matrix2<f64>; 2], node: usize) -> Result<MetricData> {
    let f = &sample.first_derivs;
    let g = Matrix2::new(f[0].dot(&f[0]), f[0].dot(&f[1]), f[1].dot(&f[0]), f[1].dot(&f[1]));
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::DegenerateChart { node, det });
    }
    let g_inv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;

    let dg = metric_derivs;
    let mut gamma = [[[0.0; 2]; 2]; 2];
    for (m, gm) in gamma.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    s += g_inv[(m, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gm[i][j] = 0.5 * s;
            }
        }
    }

    Ok(MetricData { g, g_inv, sqrt_det_g: det.sqrt(), christoffel: Christoffel(gamma) })
}

/// Second fundamental form from the chart's second derivatives.
pub fn shape_from_chart(sample: &ChartSample, metric: &MetricData) -> ShapeData {
    let cross = sample.first_derivs[0].cross(&sample.first_derivs[1]);
    let nu = cross / cross.norm();
    let mut h = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            h[(i, j)] = -nu.dot(&sample.second(i, j));
        }
    }
    shape_from_forms(nu, &metric.g_inv, h)
}

/// Assembles [`ShapeData`] from a normal, the inverse metric and `h_ij`.
pub fn shape_from_forms(nu: Vector3<f64>, g_inv: &Matrix2<f64>, h: Matrix2<f64>) -> ShapeData {
    // Shape operator S = g^{-1} h.
    let s = g_inv * h;
    let mean = s.trace();
    let a_norm_sq = (s * s).trace();
    let gauss = s.determinant();
    let disc = (0.25 * mean * mean - gauss).max(0.0).sqrt();
    let (k_hi, k_lo) = (0.5 * mean + disc, 0.5 * mean - disc);
    // Report κ₁ as the eigenvalue whose eigenvector is closer to ∂_u.
    let principal = if (s[(0, 0)] - k_hi).abs() <= (s[(0, 0)] - k_lo).abs() { (k_hi, k_lo) } else { (k_lo, k_hi) };
    ShapeData { nu, h, mean, a_norm_sq, principal }
}

/// Chart of the surface of revolution of a profile `u ↦ (r(u), z(u))`,
/// evaluated at `φ = 0` from the profile and its first two derivatives.
pub fn revolution_chart(rz: [f64; 2], d1: [f64; 2], d2: [f64; 2]) -> ChartSample {
    let [r, z] = rz;
    ChartSample {
        position: Vector3::new(r, 0.0, z),
        first_derivs: [Vector3::new(d1[0], 0.0, d1[1]), Vector3::new(0.0, r, 0.0)],
        second_derivs: [Vector3::new(d2[0], 0.0, d2[1]), Vector3::new(0.0, d1[0], 0.0), Vector3::new(-r, 0.0, 0.0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sphere(u: f64, radius: f64) -> ChartSample {
        revolution_chart(
            [radius * u.sin(), radius * u.cos()],
            [radius * u.cos(), -radius * u.sin()],
            [-radius * u.sin(), -radius * u.cos()],
        )
    }

    fn spheroid(u: f64) -> ChartSample {
        revolution_chart([u.sin(), 2.0 * u.cos()], [u.cos(), -2.0 * u.sin()], [-u.sin(), -2.0 * u.cos()])
    }

    fn build(s: &ChartSample) -> (MetricData, ShapeData) {
        let m = metric_from_chart(s, &s.metric_derivatives(), 0).unwrap();
        let sh = shape_from_chart(s, &m);
        (m, sh)
    }

    #[test]
    fn sphere_metric_values() {
        let (m, _) = build(&sphere(PI / 2.0, 1.0));
        assert_relative_eq!(m.g, Matrix2::identity(), epsilon = 1e-15);
        let (m, _) = build(&sphere(PI / 3.0, 1.0));
        assert_relative_eq!(m.g, Matrix2::new(1.0, 0.0, 0.0, 0.75), epsilon = 1e-15);
        assert_relative_eq!(m.g * m.g_inv, Matrix2::identity(), epsilon = 1e-12);
    }

    #[test]
    fn sphere_shape_values() {
        for &(radius, mean, a2) in &[(1.0, 2.0, 2.0), (0.5, 4.0, 8.0)] {
            for &u in &[0.3, 1.0, 2.5] {
                let (_, sh) = build(&sphere(u, radius));
                assert_relative_eq!(sh.mean, mean, max_relative = 1e-12);
                assert_relative_eq!(sh.a_norm_sq, a2, max_relative = 1e-12);
                assert_relative_eq!(sh.nu.norm(), 1.0, epsilon = 1e-12);
                // outward
                assert!(sh.nu.dot(&sh_pos(u, radius)) > 0.0);
            }
        }
    }

    fn sh_pos(u: f64, radius: f64) -> Vector3<f64> {
        sphere(u, radius).position
    }

    #[test]
    fn degenerate_chart_is_reported() {
        let s = sphere(0.0, 1.0);
        let err = metric_from_chart(&s, &s.metric_derivatives(), 7).unwrap_err();
        assert!(matches!(err, Error::DegenerateChart { node: 7, .. }));
    }

    #[test]
    fn christoffels_are_symmetric() {
        let (m, _) = build(&spheroid(0.7));
        for mm in 0..2 {
            assert_eq!(m.christoffel.get(mm, 0, 1), m.christoffel.get(mm, 1, 0));
        }
        // Γ^u_φφ = −G'/(2E), G = sin²u, E = cos²u + 4 sin²u
        let u: f64 = 0.7;
        let e = u.cos().powi(2) + 4.0 * u.sin().powi(2);
        assert_relative_eq!(m.christoffel.get(0, 1, 1), -(u.sin() * u.cos()) / e, max_relative = 1e-12);
    }

    // Oracle: finite differences on the exact spheroid parametrization rotated about z.
    fn fd_chart(u: f64, phi: f64, eps: f64) -> [Vector3<f64>; 5] {
        let f = |u: f64, p: f64| Vector3::new(u.sin() * p.cos(), u.sin() * p.sin(), 2.0 * u.cos());
        let fu = (f(u + eps, phi) - f(u - eps, phi)) / (2.0 * eps);
        let fp = (f(u, phi + eps) - f(u, phi - eps)) / (2.0 * eps);
        let fuu = (f(u + eps, phi) - 2.0 * f(u, phi) + f(u - eps, phi)) / (eps * eps);
        let fpp = (f(u, phi + eps) - 2.0 * f(u, phi) + f(u, phi - eps)) / (eps * eps);
        let fup = (f(u + eps, phi + eps) - f(u + eps, phi - eps) - f(u - eps, phi + eps) + f(u - eps, phi - eps))
            / (4.0 * eps * eps);
        [fu, fp, fuu, fup, fpp]
    }

    #[test]
    fn spheroid_matches_finite_difference_oracle() {
        let eps = 1e-4;
        let [fu, fp, fuu, fup, fpp] = fd_chart(PI / 2.0, 0.0, eps);
        let g_uu = fu.dot(&fu);
        let g_pp = fp.dot(&fp);
        assert_relative_eq!(g_uu, 4.0, max_relative = 1e-7);
        assert_relative_eq!(g_pp, 1.0, max_relative = 1e-7);
        let (m, sh) = build(&spheroid(PI / 2.0));
        assert_relative_eq!(m.g[(0, 0)], g_uu, max_relative = 1e-7);
        assert_relative_eq!(m.g[(1, 1)], g_pp, max_relative = 1e-7);

        let nu = fu.cross(&fp).normalize();
        let kappa_mer = -nu.dot(&fuu) / g_uu;
        let kappa_par = -nu.dot(&fpp) / g_pp;
        assert!(nu.dot(&fup).abs() < 1e-6);
        assert_relative_eq!(kappa_mer, 0.25, max_relative = 1e-6);
        assert_relative_eq!(kappa_par, 1.0, max_relative = 1e-6);
        assert_relative_eq!(sh.principal.0, kappa_mer, max_relative = 1e-6);
        assert_relative_eq!(sh.principal.1, kappa_par, max_relative = 1e-6);
        assert_relative_eq!(sh.mean, 1.25, max_relative = 1e-12);
        assert_relative_eq!(sh.a_norm_sq, 1.0625, max_relative = 1e-12);

        // near the pole the curvatures approach 2 = c/a²
        let (_, sh) = build(&spheroid(1e-4));
        assert_relative_eq!(sh.principal.0, 2.0, max_relative = 1e-6);
        assert_relative_eq!(sh.principal.1, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn mean_curvature_and_norm_identities() {
        for &u in &[0.2, 0.9, 1.6, 2.8] {
            let (m, sh) = build(&spheroid(u));
            let trace = (m.g_inv * sh.h).trace();
            let (k1, k2) = sh.principal;
            assert_relative_eq!(trace, k1 + k2, max_relative = 1e-10);
            assert_relative_eq!(sh.a_norm_sq, k1 * k1 + k2 * k2, max_relative = 1e-10);
            assert!(sh.a_norm_sq >= 0.5 * sh.mean * sh.mean - 1e-12);
        }
    }
}
