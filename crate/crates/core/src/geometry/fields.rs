//! Grid operators for axisymmetric fields.
//!
//! Every field is a 1-D array over the profile nodes `u_j = jπ/N`; the φ
//! dependence enters only through `g_φφ = r²`. Scalar fields of the surface
//! are even across both poles, so one-sided pole stencils are written using
//! the mirrored ghost value `f_{-1} = f_1`.

use nalgebra::Matrix2;

use super::MetricData;

/// Third-order tensor `T_{ijk}` on a 2-D chart.
pub type Tensor3 = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone)]
pub struct AxisymGrid {
    pub n: usize,
    pub du: f64,
    pub r: Vec<f64>,
    /// `|∂F/∂u|` at nodes (centered chord over `2 du`).
    pub speed: Vec<f64>,
    /// `r` and `|∂F/∂u|` at half nodes `j + 1/2`, `j = 0..N`.
    pub r_half: Vec<f64>,
    pub speed_half: Vec<f64>,
    /// Finite-volume cell areas divided by `2π`; they sum the conservative
    /// Laplacian to exactly zero.
    pub cell: Vec<f64>,
}

impl AxisymGrid {
    /// `nodes` must run pole to pole with `r_0 = r_N = 0`.
    pub fn new(nodes: &[[f64; 2]]) -> Self {
        let n = nodes.len() - 1;
        let du = std::f64::consts::PI / n as f64;
        let r: Vec<f64> = nodes.iter().map(|p| p[0]).collect();
        let mut speed = vec![0.0; n + 1];
        for (j, s) in speed.iter_mut().enumerate() {
            let (prev, next) = neighbours(nodes, j);
            *s = ((next[0] - prev[0]).hypot(next[1] - prev[1])) / (2.0 * du);
        }
        let mut r_half = Vec::with_capacity(n);
        let mut speed_half = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = (nodes[j], nodes[j + 1]);
            r_half.push(0.5 * (a[0] + b[0]));
            speed_half.push((b[0] - a[0]).hypot(b[1] - a[1]) / du);
        }
        let mut cell = vec![0.0; n + 1];
        for j in 1..n {
            cell[j] = du * r[j] * speed[j];
        }
        cell[0] = 0.25 * du * r_half[0] * speed_half[0];
        cell[n] = 0.25 * du * r_half[n - 1] * speed_half[n - 1];
        Self { n, du, r, speed, r_half, speed_half, cell }
    }

    #[inline]
    pub fn is_pole(&self, j: usize) -> bool {
        j == 0 || j == self.n
    }

    /// Centered `∂_u f` for an even field; zero at the poles.
    pub fn d_even(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n + 1];
        for j in 1..n {
            out[j] = (f[j + 1] - f[j - 1]) / (2.0 * self.du);
        }
        out
    }

    /// Conservative Laplace–Beltrami operator
    /// `Δf = (1/(r|F_u|)) ∂_u (r ∂_u f / |F_u|)`.
    pub fn laplace_beltrami(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let flux: Vec<f64> =
            (0..n).map(|j| self.r_half[j] * (f[j + 1] - f[j]) / (self.du * self.speed_half[j])).collect();
        let mut out = vec![0.0; n + 1];
        out[0] = flux[0] / self.cell[0];
        for j in 1..n {
            out[j] = (flux[j] - flux[j - 1]) / self.cell[j];
        }
        out[n] = -flux[n - 1] / self.cell[n];
        out
    }

    /// `|∇f|² = g^{uu} (∂_u f)²`.
    pub fn gradient_norm_sq(&self, f: &[f64]) -> Vec<f64> {
        self.d_even(f).iter().zip(&self.speed).map(|(d, s)| d * d / (s * s)).collect()
    }

    /// `∫ f dμ` with the finite-volume cell areas.
    pub fn integrate_cells(&self, f: &[f64]) -> f64 {
        2.0 * std::f64::consts::PI * f.iter().zip(&self.cell).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `∫ f dμ` by the trapezoid rule in `u` with weight `2π r |F_u|`.
    /// Pole weights vanish.
    pub fn integrate_trapezoid(&self, f: &[f64]) -> f64 {
        let s: f64 = (1..self.n).map(|j| f[j] * self.r[j] * self.speed[j]).sum();
        2.0 * std::f64::consts::PI * self.du * s
    }
}

/// Covariant derivative of the second fundamental form at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradA {
    /// `∇_i h_{jk}`
    pub tensor: Tensor3,
    pub norm_sq: f64,
}

/// `∇_i h_{jk} = ∂_i h_{jk} − Γ^m_{ij} h_{mk} − Γ^m_{ik} h_{jm}` and `|∇A|²`
/// at every node. `metric[j]` is `None` at the poles, where the covariant
/// derivative vanishes by reflection symmetry. Pole entries of `h` are only
/// used through `h_uu`; the chart value `h_φφ = κ₂ r²` is zero there.
pub fn covariant_grad_a(grid: &AxisymGrid, metric: &[Option<MetricData>], h: &[Matrix2<f64>]) -> Vec<GradA> {
    let comp = |a: usize, b: usize| -> Vec<f64> { h.iter().map(|m| m[(a, b)]).collect() };
    let d_uu = grid.d_even(&comp(0, 0));
    let d_up = grid.d_even(&comp(0, 1));
    let mut pp = comp(1, 1);
    pp[0] = 0.0;
    pp[grid.n] = 0.0;
    let d_pp = grid.d_even(&pp);

    (0..=grid.n)
        .map(|node| {
            let Some(m) = metric[node].as_ref() else {
                return GradA::default();
            };
            let dh = [Matrix2::new(d_uu[node], d_up[node], d_up[node], d_pp[node]), Matrix2::zeros()];
            let hn = &h[node];
            let gam = &m.christoffel;
            let mut t = [[[0.0; 2]; 2]; 2];
            for (i, ti) in t.iter_mut().enumerate() {
                for (j, tij) in ti.iter_mut().enumerate() {
                    for (k, tijk) in tij.iter_mut().enumerate() {
                        let mut v = dh[i][(j, k)];
                        for mm in 0..2 {
                            v -= gam.get(mm, i, j) * hn[(mm, k)] + gam.get(mm, i, k) * hn[(j, mm)];
                        }
                        *tijk = v;
                    }
                }
            }
            GradA { tensor: t, norm_sq: norm_sq3(&t, &m.g_inv) }
        })
        .collect()
}

/// `g^{ia} g^{jb} g^{kc} T_{ijk} T_{abc}`.
pub fn norm_sq3(t: &Tensor3, g_inv: &Matrix2<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        for c in 0..2 {
                            s += g_inv[(i, a)] * g_inv[(j, b)] * g_inv[(k, c)] * t[i][j][k] * t[a][b][c];
                        }
                    }
                }
            }
        }
    }
    s
}

/// `∇A·A·∇H := g^{ia} h^{jk} ∇_i h_{jk} ∂_a H`, so that
/// `⟨∇|A|², ∇H⟩ = 2 ∇A·A·∇H`.
pub fn grad_a_dot_a_dot_grad(t: &Tensor3, h: &Matrix2<f64>, g_inv: &Matrix2<f64>, dh: [f64; 2]) -> f64 {
    let h_up = g_inv * h * g_inv;
    let mut s = 0.0;
    for i in 0..2 {
        for a in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    s += g_inv[(i, a)] * h_up[(j, k)] * t[i][j][k] * dh[a];
                }
            }
        }
    }
    s
}

/// `|H ∇A − c A ⊗ ∇H|²`, the full metric contraction of
/// `H ∇_i h_{jk} − c h_{jk} ∂_i H`.
pub fn completed_square(t: &Tensor3, h: &Matrix2<f64>, g_inv: &Matrix2<f64>, mean: f64, dh: [f64; 2], c: f64) -> f64 {
    let mut b = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                b[i][j][k] = mean * t[i][j][k] - c * h[(j, k)] * dh[i];
            }
        }
    }
    norm_sq3(&b, g_inv)
}

/// Neighbours of node `j` using the pole reflection `(r, z) ↦ (−r, z)`.
pub(crate) fn neighbours(nodes: &[[f64; 2]], j: usize) -> ([f64; 2], [f64; 2]) {
    let n = nodes.len() - 1;
    let prev = if j == 0 { [-nodes[1][0], nodes[1][1]] } else { nodes[j - 1] };
    let next = if j == n { [-nodes[n - 1][0], nodes[n - 1][1]] } else { nodes[j + 1] };
    (prev, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sphere_nodes(n: usize) -> Vec<[f64; 2]> {
        (0..=n)
            .map(|j| {
                let u = j as f64 * PI / n as f64;
                [if j == 0 || j == n { 0.0 } else { u.sin() }, u.cos()]
            })
            .collect()
    }

    fn us(n: usize) -> Vec<f64> {
        (0..=n).map(|j| j as f64 * PI / n as f64).collect()
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let grid = AxisymGrid::new(&sphere_nodes(128));
        let lap = grid.laplace_beltrami(&vec![3.5; 129]);
        assert!(lap.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn laplacian_first_harmonic_on_unit_sphere() {
        // Δ Y_1 = −2 Y_1 on S².
        let n = 400;
        let grid = AxisymGrid::new(&sphere_nodes(n));
        let f: Vec<f64> = us(n).iter().map(|u| u.cos()).collect();
        let lap = grid.laplace_beltrami(&f);
        let err = lap.iter().zip(&f).map(|(l, f)| (l + 2.0 * f).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-4, "max error {err:e}");
    }

    #[test]
    fn laplacian_is_conservative() {
        let n = 300;
        let grid = AxisymGrid::new(&sphere_nodes(n));
        for f in [
            us(n).iter().map(|u| (3.0 * u).cos() + u.cos().powi(2)).collect::<Vec<_>>(),
            us(n).iter().map(|u| (u.cos() * 2.0).exp()).collect(),
        ] {
            let lap = grid.laplace_beltrami(&f);
            let total = grid.integrate_cells(&lap);
            let scale = grid.integrate_cells(&lap.iter().map(|v| v.abs()).collect::<Vec<_>>());
            assert!(total.abs() <= 1e-8 * scale, "{total:e} vs {scale:e}");
        }
    }

    #[test]
    fn gradient_norm_on_unit_sphere() {
        let n = 400;
        let grid = AxisymGrid::new(&sphere_nodes(n));
        let f: Vec<f64> = us(n).iter().map(|u| u.cos()).collect();
        let g2 = grid.gradient_norm_sq(&f);
        for (u, v) in us(n).iter().zip(&g2) {
            assert!((v - u.sin().powi(2)).abs() <= 1e-6);
        }
        let f2: Vec<f64> = f.iter().map(|v| 2.0 * v).collect();
        let g2x = grid.gradient_norm_sq(&f2);
        for (a, b) in g2.iter().zip(&g2x) {
            assert_eq!(4.0 * a, *b);
        }
        assert!(grid.gradient_norm_sq(&vec![1.0; n + 1]).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn trapezoid_area_of_sphere() {
        let grid = AxisymGrid::new(&sphere_nodes(400));
        let area = grid.integrate_trapezoid(&vec![1.0; 401]);
        assert!((area / (4.0 * PI) - 1.0).abs() < 1e-4);
    }
}
