//! Nyström solution of the linear integral equations on [−q, q].
//!
//! Every dressed function is represented by its values at the Gauss nodes and
//! evaluated off the grid through the integral equation itself,
//! f(λ) = f₀(λ) − Σ_i w_i K(λ − x_i) f_i.  This is the analytic continuation of the
//! segment solution to |Im λ| < ζ, which is also where the curved-contour variants
//! live in the regions the solvers touch.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use roots::{find_root_brent, SimpleConvergency};
use serde::Serialize;

use crate::contours::InverseTable;
use crate::core_types::{reduce_ipi, ModelParams, Trotter, C64};
use crate::error::{QtmError, Result};
use crate::quadrature::{gl, QuadratureGrid};
use crate::special_functions::{
    eps0, eps0_d, kern, kern_d, kern_re, p0, p0_d, theta_v, trotter_cut_halfwidth, wn, wn_d,
};

pub const DEFAULT_ORDER: usize = 64;
const COND_MAX: f64 = 1e12;

#[inline]
pub fn kern_dd(l: C64, zeta: f64) -> C64 {
    let lr = reduce_ipi(l);
    let c = (lr * 2.0).cosh();
    let s = (lr * 2.0).sinh();
    let d = c - (2.0 * zeta).cos();
    -4.0 * (2.0 * zeta).sin() / PI * (c / (d * d) - 2.0 * s * s / (d * d * d))
}

#[inline]
pub fn eps0_dd(l: C64, p: &ModelParams) -> C64 {
    let sz = p.zeta.sin();
    let lr = reduce_ipi(l);
    let c = (lr * 2.0).cosh();
    let s = (lr * 2.0).sinh();
    let d = c - p.zeta.cos();
    8.0 * p.j * sz * sz * (2.0 * c / (d * d) - 4.0 * s * s / (d * d * d))
}

/// LU-factorised Nyström operator id + K on [−q, q].
#[derive(Debug, Clone)]
pub struct SegmentSolver {
    pub zeta: f64,
    pub q: f64,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub cond: f64,
    pub det: f64,
}

impl SegmentSolver {
    /// `order` Gauss nodes per panel, panels of length at most 3.
    pub fn new(zeta: f64, q: f64, order: usize) -> Result<Self> {
        let (x, w) = if q > 0.0 {
            let panels = ((2.0 * q) / 3.0).ceil().max(1.0) as usize;
            let g = QuadratureGrid::segment(C64::new(-q, 0.0), C64::new(q, 0.0), panels, order);
            (g.nodes.iter().map(|z| z.re).collect(), g.weights.iter().map(|z| z.re).collect())
        } else {
            (Vec::new(), Vec::new())
        };
        let n = x.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d + w[j] * kern_re(x[i] - x[j], zeta)
        });
        let (cond, det) = if n == 0 {
            (1.0, 1.0)
        } else {
            let sv = a.clone().singular_values();
            let smax = sv.max();
            let smin = sv.min();
            (if smin > 0.0 { smax / smin } else { f64::INFINITY }, a.determinant())
        };
        if !(cond < COND_MAX) {
            return Err(QtmError::SingularSystem(cond));
        }
        Ok(SegmentSolver { zeta, q, x, w, lu: a.lu(), cond, det })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn solve_real(&self, rhs: &[f64]) -> Vec<f64> {
        if rhs.is_empty() {
            return Vec::new();
        }
        let b = DVector::from_column_slice(rhs);
        self.lu.solve(&b).expect("factorised matrix is invertible").as_slice().to_vec()
    }

    pub fn solve(&self, rhs: &[C64]) -> Vec<C64> {
        let re: Vec<f64> = rhs.iter().map(|z| z.re).collect();
        let im: Vec<f64> = rhs.iter().map(|z| z.im).collect();
        let a = self.solve_real(&re);
        let b = self.solve_real(&im);
        a.into_iter().zip(b).map(|(r, i)| C64::new(r, i)).collect()
    }

    /// Σ_i w_i K(λ − x_i) f_i.
    pub fn correction(&self, l: C64, dens: &[C64]) -> C64 {
        self.x.iter().zip(&self.w).zip(dens).map(|((&x, &w), &f)| kern(l - x, self.zeta) * (w * f)).sum()
    }

    pub fn correction_re(&self, l: C64, dens: &[f64]) -> C64 {
        self.x.iter().zip(&self.w).zip(dens).map(|((&x, &w), &f)| kern(l - x, self.zeta) * (w * f)).sum()
    }

    pub fn correction_d_re(&self, l: C64, dens: &[f64]) -> C64 {
        self.x.iter().zip(&self.w).zip(dens).map(|((&x, &w), &f)| kern_d(l - x, self.zeta) * (w * f)).sum()
    }

    pub fn correction_dd_re(&self, l: C64, dens: &[f64]) -> C64 {
        self.x.iter().zip(&self.w).zip(dens).map(|((&x, &w), &f)| kern_dd(l - x, self.zeta) * (w * f)).sum()
    }

    pub fn correction_d(&self, l: C64, dens: &[C64]) -> C64 {
        self.x.iter().zip(&self.w).zip(dens).map(|((&x, &w), &f)| kern_d(l - x, self.zeta) * (w * f)).sum()
    }
}

/// General Nyström solve of f + K_grid f = rhs on an arbitrary complex grid.
pub fn solve_fredholm(grid: &QuadratureGrid, rhs: &[C64], zeta: f64) -> Result<Vec<C64>> {
    let n = grid.len();
    if n == 0 {
        return Ok(rhs.to_vec());
    }
    let a = fredholm_matrix(grid, zeta)?;
    let sv = a.clone().singular_values();
    let cond = sv.max() / sv.min();
    if !(cond < COND_MAX) {
        return Err(QtmError::SingularSystem(cond));
    }
    let b = DVector::from_column_slice(rhs);
    Ok(a.lu().solve(&b).ok_or(QtmError::SingularSystem(f64::INFINITY))?.as_slice().to_vec())
}

pub fn fredholm_matrix(grid: &QuadratureGrid, zeta: f64) -> Result<DMatrix<C64>> {
    let n = grid.len();
    let iz = C64::new(0.0, zeta);
    for i in 0..n {
        for j in 0..n {
            let d = grid.nodes[i] - grid.nodes[j];
            if (d - iz).norm() < 1e-10 || (d + iz).norm() < 1e-10 {
                return Err(QtmError::PoleOnContour);
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        d + grid.weights[j] * kern(grid.nodes[i] - grid.nodes[j], zeta)
    }))
}

/// Nyström determinant det[id + K] on [−Q, Q].
pub fn fredholm_det_segment(p: &ModelParams, q: f64) -> Result<f64> {
    fredholm_det_segment_order(p, q, DEFAULT_ORDER)
}

pub fn fredholm_det_segment_order(p: &ModelParams, q: f64, order: usize) -> Result<f64> {
    Ok(SegmentSolver::new(p.zeta, q, order)?.det)
}

fn eps_at_endpoint(p: &ModelParams, q: f64, order: usize) -> Result<f64> {
    let s = SegmentSolver::new(p.zeta, q, order)?;
    let rhs: Vec<f64> = s.x.iter().map(|&x| eps0(C64::new(x, 0.0), p).re).collect();
    let e = s.solve_real(&rhs);
    Ok(eps0(C64::new(q, 0.0), p).re - s.correction_re(C64::new(q, 0.0), &e).re)
}

/// Fermi point: the positive zero of Q ↦ ε(Q|Q).
pub fn fermi_point(p: &ModelParams, tol: f64) -> Result<f64> {
    fermi_point_order(p, tol, DEFAULT_ORDER)
}

pub fn fermi_point_order(p: &ModelParams, tol: f64, order: usize) -> Result<f64> {
    let f = |q: f64| eps_at_endpoint(p, q, order).unwrap_or(f64::NAN);
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(QtmError::NoBracket(hi));
        }
    }
    let mut conv = SimpleConvergency { eps: tol.min(1e-14), max_iter: 200 };
    let q = find_root_brent(0.0, hi, f, &mut conv).map_err(|_| QtmError::NoBracket(hi))?;
    Ok(q)
}

/// Values at the Gauss nodes of a function dressed by id + K on [−q, q],
/// γ′ solving (id + K)γ′ = g′ and γ(λ) = g(λ) + (1/2π)∫θ(μ − λ)γ′(μ)dμ.
#[derive(Debug, Clone)]
pub struct DressedDerivative {
    pub dens: Vec<C64>,
}

#[derive(Debug, Clone)]
pub struct DressedSuite {
    pub params: ModelParams,
    pub q: f64,
    pub seg: SegmentSolver,
    eps_n: Vec<f64>,
    z_n: Vec<f64>,
    pd_n: Vec<f64>,
    pub vf: f64,
    pub tau: f64,
    pub eps_dq: f64,
    /// ε′(q) from a 5-point finite difference, an independent check of `eps_dq`.
    pub eps_dq_fd: f64,
    inv_table: OnceLock<InverseTable>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub q: f64,
    pub v_f: f64,
    pub tau: f64,
    pub eps_prime_q: f64,
    pub z_q: f64,
    pub det_segment: f64,
    pub cond: f64,
}

pub fn dressed_suite(p: &ModelParams, order: usize) -> Result<DressedSuite> {
    let q = fermi_point_order(p, 1e-14, order)?;
    DressedSuite::with_q(p, q, order)
}

impl DressedSuite {
    pub fn with_q(p: &ModelParams, q: f64, order: usize) -> Result<Self> {
        let seg = SegmentSolver::new(p.zeta, q, order)?;
        let rhs: Vec<f64> = seg.x.iter().map(|&x| eps0(C64::new(x, 0.0), p).re).collect();
        let eps_n = seg.solve_real(&rhs);
        let z_n = seg.solve_real(&vec![1.0; seg.len()]);
        let rhs: Vec<f64> = seg.x.iter().map(|&x| p0_d(C64::new(x, 0.0), p.zeta).re).collect();
        let pd_n = seg.solve_real(&rhs);
        let mut s = DressedSuite {
            params: p.clone(),
            q,
            seg,
            eps_n,
            z_n,
            pd_n,
            vf: 0.0,
            tau: 0.0,
            eps_dq: 0.0,
            eps_dq_fd: 0.0,
            inv_table: OnceLock::new(),
        };
        let qc = C64::new(q, 0.0);
        s.eps_dq = s.eps_d(qc).re;
        s.vf = s.eps_dq / s.pprime(qc).re;
        let hs = 1e-4 * q.max(1e-3);
        let e = |x: f64| s.eps(C64::new(x, 0.0)).re;
        s.eps_dq_fd = (e(q - 2.0 * hs) - 8.0 * e(q - hs) + 8.0 * e(q + hs) - e(q + 2.0 * hs)) / (12.0 * hs);
        let hz = C64::new(0.0, p.zeta / 2.0);
        let integral = s.seg.correction_re(hz, &s.eps_n);
        s.tau = p.h - 2.0 * p.j * p.zeta.cos() - integral.re;
        Ok(s)
    }

    pub fn summary(&self) -> SuiteSummary {
        SuiteSummary {
            q: self.q,
            v_f: self.vf,
            tau: self.tau,
            eps_prime_q: self.eps_dq,
            z_q: self.z(C64::new(self.q, 0.0)).re,
            det_segment: self.seg.det,
            cond: self.seg.cond,
        }
    }

    /// Seed table for the inverses of ε, built on first use.
    pub fn inverse_table(&self) -> &InverseTable {
        self.inv_table.get_or_init(|| InverseTable::build(self))
    }

    pub fn zeta(&self) -> f64 {
        self.params.zeta
    }

    pub fn eps_nodes(&self) -> &[f64] {
        &self.eps_n
    }

    pub fn eps(&self, l: C64) -> C64 {
        eps0(l, &self.params) - self.seg.correction_re(l, &self.eps_n)
    }

    pub fn eps_d(&self, l: C64) -> C64 {
        eps0_d(l, &self.params) - self.seg.correction_d_re(l, &self.eps_n)
    }

    pub fn eps_dd(&self, l: C64) -> C64 {
        eps0_dd(l, &self.params) - self.seg.correction_dd_re(l, &self.eps_n)
    }

    pub fn z(&self, l: C64) -> C64 {
        C64::new(1.0, 0.0) - self.seg.correction_re(l, &self.z_n)
    }

    pub fn z_d(&self, l: C64) -> C64 {
        -self.seg.correction_d_re(l, &self.z_n)
    }

    pub fn pprime(&self, l: C64) -> C64 {
        p0_d(l, self.zeta()) - self.seg.correction_re(l, &self.pd_n)
    }

    /// Dressed momentum p(λ) = p₀(λ) − (1/2π)∫θ(λ − μ)p′(μ)dμ.
    pub fn mom(&self, l: C64) -> C64 {
        let z = self.zeta();
        let s: C64 = self
            .seg
            .x
            .iter()
            .zip(&self.seg.w)
            .zip(&self.pd_n)
            .map(|((&x, &w), &f)| theta_v(l - x, z) * (w * f))
            .sum();
        p0(l, z) - s / (2.0 * PI)
    }

    /// Node values of φ(·, μ).
    pub fn phi_density(&self, mu: C64) -> Vec<C64> {
        let z = self.zeta();
        let rhs: Vec<C64> = self.seg.x.iter().map(|&x| theta_v(C64::new(x, 0.0) - mu, z) / (2.0 * PI)).collect();
        self.seg.solve(&rhs)
    }

    pub fn phi_with(&self, l: C64, mu: C64, dens: &[C64]) -> C64 {
        theta_v(l - mu, self.zeta()) / (2.0 * PI) - self.seg.correction(l, dens)
    }

    pub fn phi(&self, l: C64, mu: C64) -> C64 {
        self.phi_with(l, mu, &self.phi_density(mu))
    }

    /// ∂_λ φ(λ, μ).
    pub fn phi_dl_with(&self, l: C64, mu: C64, dens: &[C64]) -> C64 {
        kern(l - mu, self.zeta()) - self.seg.correction_d(l, dens)
    }

    pub fn resolvent_density(&self, mu: C64) -> Vec<C64> {
        let z = self.zeta();
        let rhs: Vec<C64> = self.seg.x.iter().map(|&x| kern(C64::new(x, 0.0) - mu, z)).collect();
        self.seg.solve(&rhs)
    }

    pub fn resolvent_with(&self, l: C64, mu: C64, dens: &[C64]) -> C64 {
        kern(l - mu, self.zeta()) - self.seg.correction(l, dens)
    }

    pub fn resolvent(&self, l: C64, mu: C64) -> C64 {
        self.resolvent_with(l, mu, &self.resolvent_density(mu))
    }

    /// Dresses g′; the result evaluates γ and γ′ via [`DressedSuite::gamma`].
    pub fn dress<F: Fn(C64) -> C64>(&self, g_d: F) -> DressedDerivative {
        let rhs: Vec<C64> = self.seg.x.iter().map(|&x| g_d(C64::new(x, 0.0))).collect();
        DressedDerivative { dens: self.seg.solve(&rhs) }
    }

    /// (γ(λ), γ′(λ)) given g(λ), g′(λ) and the dressed node values.
    pub fn gamma(&self, l: C64, g: C64, g_d: C64, dd: &DressedDerivative) -> (C64, C64) {
        let z = self.zeta();
        let s: C64 = self
            .seg
            .x
            .iter()
            .zip(&self.seg.w)
            .zip(&dd.dens)
            .map(|((&x, &w), &f)| theta_v(C64::new(x, 0.0) - l, z) * (w * f))
            .sum();
        (g + s / (2.0 * PI), g_d - self.seg.correction(l, &dd.dens))
    }

    /// ∫_{−q}^{q} f(μ) dμ on the Nyström grid.
    pub fn integrate<F: Fn(f64) -> C64>(&self, f: F) -> C64 {
        self.seg.x.iter().zip(&self.seg.w).map(|(&x, &w)| f(x) * w).sum()
    }

    /// Residual of (id + K)ε = ε₀ at an arbitrary point, with an independent quadrature.
    pub fn eps_equation_residual(&self, l: C64, panels: usize, order: usize) -> C64 {
        let g = QuadratureGrid::segment(C64::new(-self.q, 0.0), C64::new(self.q, 0.0), panels, order);
        let int = g.integrate(|m| kern(l - m, self.zeta()) * self.eps(m));
        self.eps(l) + int - eps0(l, &self.params)
    }

    /// Membership in D_ε^{(↓)} + iπℤ.
    pub fn in_d_down(&self, l: C64) -> bool {
        let z = reduce_ipi(l);
        z.im <= 0.0 && z.im >= -self.zeta() / 2.0 && self.eps(z).re < 0.0
    }

    /// Membership in the closure of D_ε + iπℤ, with a band of half-width `tol` in Re ε treated as inside.
    pub fn in_d_closure(&self, l: C64, tol: f64) -> bool {
        let z = reduce_ipi(l);
        z.im.abs() <= self.zeta() / 2.0 && self.eps(z).re < tol
    }

    fn eps_ind(&self, l: C64) -> C64 {
        if self.in_d_down(l) {
            self.eps(reduce_ipi(l))
        } else {
            C64::new(0.0, 0.0)
        }
    }

    /// ε_c away from the strip, through the residue formula with k = 1.
    pub fn eps_c_full(&self, l: C64) -> C64 {
        let iz = C64::new(0.0, self.zeta());
        self.eps(l) + self.eps_ind(l - iz) - self.eps_ind(l + iz)
    }

    /// String energy ε_{c;k}^{(−)} through the residue formula.
    pub fn eps_ck(&self, l: C64, k: u32) -> C64 {
        let iz = C64::new(0.0, self.zeta());
        let kf = k as f64;
        let base: C64 = (0..k).map(|r| self.eps(l - iz * r as f64)).sum();
        base + self.eps_ind(l - iz * kf) + self.eps_ind(l - iz * (kf - 1.0)) - self.eps_ind(l + iz) - self.eps_ind(l)
    }
}

/// Segment solution of (id + K)W_N = h − T𝔴_N.
#[derive(Debug, Clone)]
pub struct TrotterDressed {
    pub n: u32,
    pub params: ModelParams,
    dens: Vec<C64>,
}

impl TrotterDressed {
    pub fn value(&self, l: C64, seg: &SegmentSolver) -> C64 {
        C64::new(self.params.h, 0.0) - self.params.t * wn(l, &self.params, self.n) - seg.correction(l, &self.dens)
    }

    pub fn derivative(&self, l: C64, seg: &SegmentSolver) -> C64 {
        -self.params.t * wn_d(l, &self.params, self.n) - seg.correction_d(l, &self.dens)
    }
}

pub fn trotter_dressed(p: &ModelParams, suite: &DressedSuite) -> Result<TrotterDressed> {
    let n = match p.trotter {
        Trotter::Finite(n) => n,
        Trotter::Infinite => return Err(QtmError::OutOfRegime("trotter_dressed needs a finite Trotter number".into())),
    };
    if trotter_cut_halfwidth(p, n) >= PI / 2.0 {
        return Err(QtmError::OutOfRegime(format!("N T = {} too small", n as f64 * p.t)));
    }
    let rhs: Vec<C64> = suite.seg.x.iter().map(|&x| C64::new(p.h, 0.0) - p.t * wn(C64::new(x, 0.0), p, n)).collect();
    Ok(TrotterDressed { n, params: p.clone(), dens: suite.seg.solve(&rhs) })
}

/// Piecewise Chebyshev interpolant of a real function on [0, b].
struct PiecewiseCheb {
    h: f64,
    nodes: Vec<f64>,
    bw: Vec<f64>,
    vals: Vec<Vec<f64>>,
}

impl PiecewiseCheb {
    fn new<F: Fn(f64) -> f64>(f: F, b: f64, h: f64, n: usize) -> Self {
        let panels = (b / h).ceil() as usize;
        let nodes: Vec<f64> = (0..n).map(|k| -((2 * k + 1) as f64 * PI / (2 * n) as f64).cos()).collect();
        let bw: Vec<f64> = (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                s * ((2 * k + 1) as f64 * PI / (2 * n) as f64).sin()
            })
            .collect();
        let vals = (0..panels)
            .map(|pi| {
                let a = pi as f64 * h;
                nodes.iter().map(|&t| f(a + 0.5 * h * (t + 1.0))).collect()
            })
            .collect();
        PiecewiseCheb { h, nodes, bw, vals }
    }

    fn eval(&self, x: f64) -> f64 {
        let pi = ((x / self.h) as usize).min(self.vals.len() - 1);
        let t = 2.0 * (x - pi as f64 * self.h) / self.h - 1.0;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..self.nodes.len() {
            let d = t - self.nodes[k];
            if d.abs() < 1e-15 {
                return self.vals[pi][k];
            }
            let c = self.bw[k] / d;
            num += c * self.vals[pi][k];
            den += c;
        }
        num / den
    }
}

fn kernel_alpha(x: f64, alpha: f64) -> f64 {
    (2.0 * alpha).sin() / (PI * ((2.0 * x).cosh() - (2.0 * alpha).cos()))
}

/// Resolvent of id + K on ℝ from its sech-convolution representation, real argument.
pub fn resolvent_line(x: f64, zeta: f64) -> f64 {
    let zt = PI * zeta / (2.0 * (PI - zeta));
    let lo = x.min(0.0) - 16.0;
    let hi = x.max(0.0) + 16.0;
    let g = QuadratureGrid::segment(C64::new(lo, 0.0), C64::new(hi, 0.0), ((hi - lo) / 0.5).ceil() as usize, 16);
    let s: f64 = g
        .nodes
        .iter()
        .zip(&g.weights)
        .map(|(m, w)| kernel_alpha(PI * m.re / (PI - zeta), zt) / (PI * (x - m.re) / zeta).cosh() * w.re)
        .sum();
    PI / (2.0 * zeta * (PI - zeta)) * s
}

pub fn eps_infinity(l: f64, p: &ModelParams) -> f64 {
    p.h * PI / (2.0 * (PI - p.zeta)) - 2.0 * PI * p.j * p.zeta.sin() / (p.zeta * (PI * l / p.zeta).cosh())
}

/// Solves ε = ε_∞ + ∫_{ℝ∖[−q,q]} R(λ − μ)ε(μ)dμ on [q, L] (using parity) and
/// returns max |ε_dual − ε| over points of [−q, q].
pub fn dual_representation_check(suite: &DressedSuite, cutoff: f64, tol: f64) -> Result<f64> {
    let p = &suite.params;
    let q = suite.q;
    let zeta = p.zeta;
    let tail = {
        // decay rate of R is min(π/ζ, 2π/(π−ζ))
        let rate = (PI / zeta).min(2.0 * PI / (PI - zeta));
        eps_infinity(cutoff, p).abs() * (-rate * (cutoff - q)).exp() / rate
    };
    if zeta < PI / 2.0 && tail > tol {
        return Err(QtmError::TruncationTooSmall(tail));
    }
    let rtab = PiecewiseCheb::new(|x| resolvent_line(x, zeta), 2.0 * cutoff + 1.0, 0.25, 16);
    let r = |x: f64| rtab.eval(x.abs());
    let panels = ((cutoff - q) / 0.5).ceil().max(1.0) as usize;
    let rule = gl(16);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for k in 0..panels {
        let a = q + (cutoff - q) * k as f64 / panels as f64;
        let b = q + (cutoff - q) * (k + 1) as f64 / panels as f64;
        for &(t, w) in &rule {
            xs.push(0.5 * (a + b) + 0.5 * (b - a) * t);
            ws.push(0.5 * (b - a) * w);
        }
    }
    let n = xs.len();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d - ws[j] * (r(xs[i] - xs[j]) + r(xs[i] + xs[j]))
    });
    let rhs = DVector::from_iterator(n, xs.iter().map(|&x| eps_infinity(x, p)));
    let sol = a.lu().solve(&rhs).ok_or(QtmError::SingularSystem(f64::INFINITY))?;
    let mut dev: f64 = 0.0;
    for k in 0..=40 {
        let l = -q + 2.0 * q * k as f64 / 40.0;
        let v: f64 = eps_infinity(l, p)
            + (0..n).map(|j| ws[j] * (r(l - xs[j]) + r(l + xs[j])) * sol[j]).sum::<f64>();
        dev = dev.max((v - suite.eps(C64::new(l, 0.0)).re).abs());
    }
    Ok(dev)
}

/// Integral ∫_{−q}^{q} K(λ − μ)dμ with the Nyström rule.
pub fn kernel_mass(suite: &DressedSuite, l: C64) -> C64 {
    suite.integrate(|m| kern(l - m, suite.zeta()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::params;

    #[test]
    fn free_fermion_suite() {
        let p = params(PI / 2.0, 2.0);
        let s = dressed_suite(&p, 64).unwrap();
        assert!((s.q - 0.5 * 2f64.acosh()).abs() < 1e-12);
        assert!((s.vf - 2.0 * 3f64.sqrt()).abs() < 1e-10);
        let l = C64::new(0.3, -0.2);
        assert!((s.z(l) - 1.0).norm() < 1e-14);
        assert!(s.phi(l, C64::new(0.1, 0.0)).norm() < 1e-12);
        assert!((s.mom(C64::new(s.q, 0.0)).re - PI / 3.0).abs() < 1e-12);
        assert!((s.eps(l) - eps0(l, &p)).norm() < 1e-13);
        assert_eq!(fredholm_det_segment(&p, s.q).unwrap(), 1.0);
    }

    #[test]
    fn empty_segment() {
        let p = params(1.3, 2.0);
        let seg = SegmentSolver::new(1.3, 0.0, 64).unwrap();
        assert!(seg.is_empty());
        assert_eq!(fredholm_det_segment(&p, 0.0).unwrap(), 1.0);
        let g = QuadratureGrid::default();
        assert_eq!(solve_fredholm(&g, &[], 1.3).unwrap(), Vec::<C64>::new());
    }

    #[test]
    fn fermi_point_near_upper_field() {
        let zeta: f64 = 1.3;
        let h = 4.0 * (1.0 + zeta.cos()) - 1e-6;
        let q = fermi_point(&params(zeta, h), 1e-14).unwrap();
        assert!(q < 1e-2);
    }

    #[test]
    fn interacting_suite() {
        let p = params(1.3, 2.0);
        let s = dressed_suite(&p, 64).unwrap();
        let qc = C64::new(s.q, 0.0);
        assert!(s.eps(qc).norm() < 1e-10);
        assert!(s.eps(C64::new(s.q - 1e-3, 0.0)).re < 0.0 && s.eps(C64::new(s.q + 1e-3, 0.0)).re > 0.0);
        assert!((s.eps_dq - s.eps_dq_fd).abs() < 1e-7);
        assert!(s.vf > 0.0);
        // parity of ε, and the Nyström equation off the grid with a different rule
        for k in 0..20 {
            let l = C64::new(-1.5 + 0.15 * k as f64, -0.3 + 0.02 * k as f64);
            assert!((s.eps(l) - s.eps(-l)).norm() < 1e-10);
            assert!(s.eps_equation_residual(l, 7, 24).norm() < 1e-10);
        }
        // Slavnov identities
        let zq = s.z(qc).re;
        assert!((1.0 + s.phi(qc, qc).re - 1.0 / (2.0 * zq) - zq / 2.0).abs() < 1e-8);
        assert!((s.phi(qc, -qc).re - 1.0 / (2.0 * zq) + zq / 2.0).abs() < 1e-8);
    }

    #[test]
    fn order_refinement() {
        let p = params(1.3, 2.0);
        let a = dressed_suite(&p, 64).unwrap();
        let b = dressed_suite(&p, 128).unwrap();
        assert!((a.q - b.q).abs() < 1e-8);
        assert!((a.seg.det - fredholm_det_segment_order(&p, a.q, 128).unwrap()).abs() < 1e-8);
        for k in 0..10 {
            let l = C64::new(-1.0 + 0.2 * k as f64, -0.1 * k as f64 / 2.0);
            assert!((a.eps(l) - b.eps(l)).norm() < 1e-8);
            assert!((a.z(l) - b.z(l)).norm() < 1e-8);
            assert!((a.mom(l) - b.mom(l)).norm() < 1e-8);
        }
    }

    #[test]
    fn dual_representation() {
        let p = params(PI / 2.0, 2.0);
        let s = dressed_suite(&p, 64).unwrap();
        assert!(dual_representation_check(&s, 12.0, 1e-9).unwrap() < 1e-9);
        let p = params(1.3, 2.0);
        let s = dressed_suite(&p, 64).unwrap();
        let dev = dual_representation_check(&s, 12.0, 1e-8).unwrap();
        assert!(dev < 1e-6, "dual deviation {}", dev);
        let e_inf = eps_infinity(0.0, &p);
        assert!((e_inf - (2.0 * PI / (2.0 * (PI - 1.3)) - 2.0 * PI * 1.3f64.sin() / 1.3)).abs() < 1e-14);
    }

    #[test]
    fn trotter_dressed_limit() {
        let p = params(1.3, 2.0).with_t(0.2);
        let s = dressed_suite(&p, 64).unwrap();
        let pts = [C64::new(0.2, 0.0), C64::new(0.9, -0.2), C64::new(-0.5, -0.4)];
        let mut errs = Vec::new();
        for n in [32u32, 64, 128, 256] {
            let pn = p.with_trotter(Trotter::Finite(n));
            let w = trotter_dressed(&pn, &s).unwrap();
            errs.push(pts.iter().map(|&l| (w.value(l, &s.seg) - s.eps(l)).norm()).fold(0.0, f64::max));
            assert!((w.value(pts[1], &s.seg) - w.value(-pts[1], &s.seg)).norm() < 1e-8);
        }
        let slope = (errs[3] / errs[0]).log2() / 3.0;
        assert!(slope <= -1.0, "slope {}", slope);
        let pf = params(PI / 2.0, 2.0).with_t(0.2).with_trotter(Trotter::Finite(32));
        let sf = dressed_suite(&pf, 64).unwrap();
        let w = trotter_dressed(&pf, &sf).unwrap();
        let l = C64::new(0.3, -0.1);
        assert!((w.value(l, &sf.seg) - (C64::new(2.0, 0.0) - 0.2 * wn(l, &pf, 32))).norm() < 1e-14);
    }
}
