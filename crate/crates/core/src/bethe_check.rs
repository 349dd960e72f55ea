//! Finite-Trotter cross-check: Bethe roots read off a solved NLIE, the Bethe
//! equations, the two representations of the eigenvalue and the norm determinant.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::core_types::{dist_ipi, ModelParams, Trotter, C64, I};
use crate::error::{QtmError, Result};
use crate::nlie::NlieSolution;
use crate::observables::{dress_direct, Bare};
use crate::special_functions::{kern, p0, p0_d};

const ADMISSIBLE_TOL: f64 = 1e-9;
const MATCH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct BetheRoot {
    pub root: C64,
    /// Zero of 1 + e^{−u/T} reached by the march (false for appended particles).
    pub from_march: bool,
    pub level: Option<usize>,
    pub residual: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BetheRootSet {
    pub n: u32,
    pub spin: i64,
    pub roots: Vec<BetheRoot>,
    /// Zeros of 1 + e^{−u/T} found along Re u = 0 before the particle/hole bookkeeping.
    pub zeros: Vec<C64>,
    pub max_residual: f64,
}

impl BetheRootSet {
    pub fn lambdas(&self) -> Vec<C64> {
        self.roots.iter().map(|r| r.root).collect()
    }

    pub fn n_prime(&self) -> i64 {
        self.n as i64 - self.spin
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,re,im,from_march,residual,admissible\n");
        for (k, r) in self.roots.iter().enumerate() {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{},{:.16e},{}\n",
                k, r.root.re, r.root.im, r.from_march, r.residual, r.admissible
            ));
        }
        s
    }
}

fn trotter_n(p: &ModelParams) -> Result<u32> {
    match p.trotter {
        Trotter::Finite(n) => Ok(n),
        Trotter::Infinite => Err(QtmError::HypothesisViolated("Bethe check needs a finite Trotter number".into())),
    }
}

/// Reduces the imaginary part into (−πT, πT].
fn wrap(z: C64, t: f64) -> C64 {
    let p = 2.0 * PI * t;
    C64::new(z.re, z.im - (z.im / p).round() * p)
}

/// Newton on u(λ) + i s = 0 mod 2πiT.
fn level_newton(sol: &NlieSolution, seed: C64, s: f64, t: f64) -> Option<C64> {
    let mut l = seed;
    for _ in 0..60 {
        let (u, ud) = sol.u_pair(l);
        if !u.is_finite() || !ud.is_finite() || ud.norm() == 0.0 {
            return None;
        }
        let r = wrap(u + I * s, t);
        let mut step = r / ud;
        let cap = 0.05 * (1.0 + l.norm());
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        l -= step;
        if step.norm() < 1e-14 * (1.0 + l.norm()) {
            return Some(l);
        }
    }
    let (u, _) = sol.u_pair(l);
    (wrap(u + I * s, t).norm() < 1e-11 * t).then_some(l)
}

/// Zeros of 1 + e^{−u/T} met when following Re u = 0 from q⁺ with Im u decreasing.
pub fn march_zeros(sol: &NlieSolution, count: usize) -> Result<Vec<C64>> {
    let t = sol.t();
    let mut l = sol.contour.q_plus;
    let mut s = 0.0;
    let mut ds = PI * t / 4.0;
    let mut zeros: Vec<C64> = Vec::new();
    let max_s = 2.0 * PI * t * (count as f64 + 8.0);
    while zeros.len() < count {
        if s > max_s {
            return Err(QtmError::CountMismatch { found: zeros.len() as i64, expected: count as i64 });
        }
        let next_level = PI * t * (2 * zeros.len() + 1) as f64;
        let target = (s + ds).min(next_level);
        let ud = sol.u_d(l);
        let pred = l - I * (target - s) / ud;
        match level_newton(sol, pred, target, t) {
            Some(nl) if (nl - pred).norm() <= 0.3 * (pred - l).norm().max(1e-9) => {
                l = nl;
                s = target;
                if target == next_level {
                    if zeros.iter().any(|z| (z - l).norm() < MATCH_TOL) {
                        return Err(QtmError::NoConvergence {
                            what: "zero march revisited a zero",
                            iters: zeros.len(),
                            residual: 0.0,
                        });
                    }
                    zeros.push(l);
                }
                ds = (ds * 1.5).min(PI * t / 3.0);
            }
            _ => {
                ds *= 0.5;
                if ds < 1e-9 * t {
                    return Err(QtmError::NoConvergence { what: "zero march", iters: zeros.len(), residual: s });
                }
            }
        }
    }
    Ok(zeros)
}

/// Bethe roots: marched zeros with holes removed and particles appended.
pub fn extract_bethe_roots(sol: &NlieSolution) -> Result<BetheRootSet> {
    let p = &sol.params;
    let n = trotter_n(p)?;
    let spin = sol.spin();
    let n_prime = n as i64 - spin;
    let all = sol.all_roots();
    let mut particles = Vec::new();
    let mut holes = Vec::new();
    for &(y, m) in all.entries() {
        if m.abs() != 1 {
            return Err(QtmError::HypothesisViolated("Bethe check requires simple roots".into()));
        }
        if m > 0 {
            particles.push(y)
        } else {
            holes.push(y)
        }
    }
    let n_zero = n_prime - particles.len() as i64 + holes.len() as i64;
    if n_zero < 0 {
        return Err(QtmError::CountMismatch { found: 0, expected: n_zero });
    }
    let zeros = march_zeros(sol, n_zero as usize)?;
    let mut roots = Vec::new();
    let mut removed = 0;
    for (k, &z) in zeros.iter().enumerate() {
        if holes.iter().any(|h| (h - z).norm() < MATCH_TOL * (1.0 + z.norm()).max(1.0) * 1e2) {
            removed += 1;
            continue;
        }
        roots.push(BetheRoot { root: z, from_march: true, level: Some(k), residual: f64::NAN, admissible: true });
    }
    if removed != holes.len() {
        return Err(QtmError::CountMismatch { found: removed as i64, expected: holes.len() as i64 });
    }
    for &y in &particles {
        roots.push(BetheRoot { root: y, from_march: false, level: None, residual: f64::NAN, admissible: true });
    }
    if roots.len() as i64 != n_prime {
        return Err(QtmError::CountMismatch { found: roots.len() as i64, expected: n_prime });
    }
    let lambdas: Vec<C64> = roots.iter().map(|r| r.root).collect();
    let flags = admissibility(&lambdas, p, n);
    let res = bae_residuals(&lambdas, p, n, spin);
    for ((r, f), e) in roots.iter_mut().zip(flags).zip(res) {
        r.admissible = f;
        r.residual = e;
    }
    let max_residual = roots.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(BetheRootSet { n, spin, roots, zeros, max_residual })
}

/// Per-root admissibility: no pair at distance iζ mod iπ, and none at the excluded points.
pub fn admissibility(lambdas: &[C64], p: &ModelParams, n: u32) -> Vec<bool> {
    let c = p.aleph() / n as f64;
    let iz = I * p.zeta;
    let excluded = [c - iz / 2.0, -c - iz / 2.0, c + iz / 2.0, -c - 1.5 * iz];
    lambdas
        .iter()
        .enumerate()
        .map(|(a, &la)| {
            let pair_ok = lambdas.iter().enumerate().all(|(b, &lb)| {
                a == b || (dist_ipi(la - lb, iz) > ADMISSIBLE_TOL && dist_ipi(la - lb, -iz) > ADMISSIBLE_TOL)
            });
            pair_ok && excluded.iter().all(|&e| dist_ipi(la, e) > ADMISSIBLE_TOL)
        })
        .collect()
}

fn lsh(z: C64) -> C64 {
    z.sinh().ln()
}

/// ln of the left-hand side of the Bethe equation for root `a`.
fn bae_log(lambdas: &[C64], a: usize, p: &ModelParams, n: u32, spin: i64) -> C64 {
    let t = p.t;
    let c = p.aleph() / n as f64;
    let iz = I * p.zeta;
    let la = lambdas[a];
    let mut l = C64::new(-p.h / t, PI * spin as f64);
    for &lk in lambdas {
        l += lsh(iz - la + lk) - lsh(iz + la - lk);
    }
    let nf = n as f64;
    l += nf * (lsh(la - c + iz / 2.0) + lsh(1.5 * iz + la + c) - lsh(la + c + iz / 2.0) - lsh(iz / 2.0 - la + c));
    l
}

fn bae_residuals(lambdas: &[C64], p: &ModelParams, n: u32, spin: i64) -> Vec<f64> {
    (0..lambdas.len()).map(|a| (bae_log(lambdas, a, p, n, spin).exp() + 1.0).norm()).collect()
}

/// max_a |LHS_a + 1| of the Bethe system.
pub fn bae_residual(rs: &BetheRootSet, p: &ModelParams) -> Result<f64> {
    let l = rs.lambdas();
    let flags = admissibility(&l, p, rs.n);
    if let Some(k) = flags.iter().position(|f| !f) {
        return Err(QtmError::NonAdmissible(format!("root {} at {}", k, l[k])));
    }
    Ok(bae_residuals(&l, p, rs.n, rs.spin).into_iter().fold(0.0, f64::max))
}

/// ln(e^a + e^b) without overflow.
fn log_add(a: C64, b: C64) -> C64 {
    let (m, o) = if a.re >= b.re { (a, b) } else { (b, a) };
    m + (1.0 + (o - m).exp()).ln()
}

/// ln Λ̂(ξ) from the two-term product formula (defined mod 2πi).
pub fn eigenvalue_product(xi: C64, rs: &BetheRootSet, p: &ModelParams) -> Result<C64> {
    let n = rs.n;
    let nf = n as f64;
    let t = p.t;
    let c = p.aleph() / nf;
    let iz = I * p.zeta;
    for r in &rs.roots {
        if dist_ipi(xi - r.root, iz / 2.0) < 1e-12 {
            return Err(QtmError::PoleHit { what: "eigenvalue product", at: xi });
        }
    }
    let s2 = 2.0 * lsh(-iz);
    let mut t1 = C64::new(p.h / (2.0 * t), PI * nf);
    let mut t2 = C64::new(-p.h / (2.0 * t), PI * nf);
    for r in &rs.roots {
        let d = xi - r.root;
        t1 += lsh(d + iz / 2.0) - lsh(d - iz / 2.0);
        t2 += lsh(d - 1.5 * iz) - lsh(d - iz / 2.0);
    }
    t1 += nf * (lsh(xi + c) + lsh(xi - c - iz) - s2);
    t2 += nf * (lsh(xi + c + iz) + lsh(xi - c) - s2);
    Ok(log_add(t1, t2))
}

/// ln Λ̂(ξ) from the contour-integral representation on the solved NLIE.
pub fn eigenvalue_integral(xi: C64, sol: &NlieSolution) -> Result<C64> {
    let p = &sol.params;
    let nf = trotter_n(p)? as f64;
    let c = p.aleph() / nf;
    let iz = I * p.zeta;
    let z = p.zeta;
    let g = move |l: C64| p0(l - xi, z);
    let g_d = move |l: C64| p0_d(l - xi, z);
    let bare = Bare { g: &g, g_d: &g_d, poles: vec![xi + iz / 2.0, xi - iz / 2.0] };
    let dressed = dress_direct(&bare, sol)?;
    // The monodromy term of the continuous logarithm reduces to iπ𝔰 once the
    // principal-branch log is used on the contour.
    let spin = I * PI * sol.spin() as f64;
    Ok(spin + p.h / (2.0 * p.t) + nf * (lsh(c + iz + xi) + lsh(c + iz - xi) - 2.0 * lsh(iz)) + I * dressed)
}

/// |e^{a−b} − 1|, insensitive to the 2πi ambiguity of the logarithms.
pub fn log_rel_diff(a: C64, b: C64) -> f64 {
    ((a - b).exp() - 1.0).norm()
}

#[derive(Debug, Clone, Serialize)]
pub struct GaudinReport {
    pub discrete_det: C64,
    pub fredholm: C64,
    pub matrix_det: C64,
    pub factorisation_residual: f64,
    /// ln 𝒩 including the a·d and sinh prefactors (mod 2πi).
    pub ln_norm: C64,
    pub n_nodes: usize,
    pub n_matrix: usize,
}

/// Norm determinant at the Bethe roots, and the same quantity as a Fredholm
/// determinant on the adapted contour times a finite matrix over the particle/hole roots.
pub fn gaudin_norm(rs: &BetheRootSet, sol: &NlieSolution) -> Result<GaudinReport> {
    let p = &sol.params;
    let t = p.t;
    let z = p.zeta;
    let n = rs.n;
    let lam = rs.lambdas();
    let m = lam.len();
    let ud: Vec<C64> = lam.iter().map(|&l| sol.u_d(l)).collect();
    let tpit = 2.0 * PI * I * t;

    let disc = DMatrix::from_fn(m, m, |a, b| {
        let d = if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        d + tpit * kern(lam[a] - lam[b], z) / ud[b]
    });
    let discrete_det = if m == 0 { C64::new(1.0, 0.0) } else { disc.determinant() };
    if discrete_det.norm() < 1e-12 {
        return Err(QtmError::SingularNorm(discrete_det.norm()));
    }

    // Nodes of the deformed contour with their kernel weights.
    let mut nodes: Vec<(C64, C64)> = Vec::new();
    for (&x, &w) in sol.suite.seg.x.iter().zip(&sol.suite.seg.w) {
        nodes.push((C64::new(x, 0.0), C64::new(w, 0.0)));
    }
    nodes.extend(sol.contour.seg_ends.iter().copied());
    for nd in &sol.contour.nodes {
        let f = if nd.outer { -1.0 / (1.0 + (nd.w / t).exp()) } else { 1.0 / (1.0 + (-nd.w / t).exp()) };
        let c = f * nd.dl;
        if c.norm() > 1e-17 {
            nodes.push((nd.mu, c));
        }
    }
    let nn = nodes.len();
    let a_mat = DMatrix::from_fn(nn, nn, |i, j| {
        let d = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        d + kern(nodes[i].0 - nodes[j].0, z) * nodes[j].1
    });
    let lu = a_mat.lu();
    let fredholm = lu.determinant();

    let ph: Vec<(C64, f64)> = sol
        .all_roots()
        .entries()
        .iter()
        .map(|&(y, mult)| (y, mult.signum() as f64))
        .collect();
    let k = ph.len();
    let matrix_det = if k == 0 {
        C64::new(1.0, 0.0)
    } else {
        let ud_r: Vec<C64> = ph.iter().map(|&(y, _)| sol.u_d(y)).collect();
        let b_mat = DMatrix::from_fn(nn, k, |i, b| ph[b].1 * tpit * kern(nodes[i].0 - ph[b].0, z) / ud_r[b]);
        let c_mat = DMatrix::from_fn(k, nn, |a, j| kern(ph[a].0 - nodes[j].0, z) * nodes[j].1);
        let d_mat = DMatrix::from_fn(k, k, |a, b| {
            let d = if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            d + ph[b].1 * tpit * kern(ph[a].0 - ph[b].0, z) / ud_r[b]
        });
        let x = lu.solve(&b_mat).ok_or(QtmError::SingularSystem(f64::INFINITY))?;
        (d_mat - c_mat * x).determinant()
    };
    let factorisation_residual = (discrete_det - fredholm * matrix_det).norm() / discrete_det.norm();

    let nf = n as f64;
    let c = p.aleph() / nf;
    let iz = I * z;
    let s2 = 2.0 * lsh(-iz);
    let mut ln_norm = discrete_det.ln();
    for (a, &la) in lam.iter().enumerate() {
        let ln_a = p.h / (2.0 * t) + nf * (lsh(la - c - iz / 2.0) + lsh(la + c + iz / 2.0) - s2);
        let ln_d = -p.h / (2.0 * t) + nf * (lsh(la + c + 1.5 * iz) + lsh(la - c + iz / 2.0) - s2);
        ln_norm += (ud[a] / t).ln() + ln_a + ln_d;
        for (b, &lb) in lam.iter().enumerate() {
            ln_norm += lsh(la - lb - iz);
            if a != b {
                ln_norm -= lsh(la - lb);
            }
        }
    }

    Ok(GaudinReport { discrete_det, fredholm, matrix_det, factorisation_residual, ln_norm, n_nodes: nn, n_matrix: k })
}

#[derive(Debug, Clone, Serialize)]
pub struct BetheCertificate {
    pub n: u32,
    pub t: f64,
    pub zeta: f64,
    pub spin: i64,
    pub n_roots: usize,
    pub max_bae_residual: f64,
    pub xi: [f64; 2],
    pub ln_lambda_product: [f64; 2],
    pub ln_lambda_integral: [f64; 2],
    pub eigenvalue_rel_diff: f64,
    pub gaudin: GaudinReport,
}

/// Full cross-check for one finite-Trotter solution.
pub fn certify(sol: &NlieSolution, xi: C64) -> Result<(BetheRootSet, BetheCertificate)> {
    let p = &sol.params;
    let rs = extract_bethe_roots(sol)?;
    let max_bae_residual = bae_residual(&rs, p)?;
    let lp = eigenvalue_product(xi, &rs, p)?;
    let li = eigenvalue_integral(xi, sol)?;
    let gaudin = gaudin_norm(&rs, sol)?;
    let cert = BetheCertificate {
        n: rs.n,
        t: p.t,
        zeta: p.zeta,
        spin: rs.spin,
        n_roots: rs.roots.len(),
        max_bae_residual,
        xi: [xi.re, xi.im],
        ln_lambda_product: [lp.re, lp.im],
        ln_lambda_integral: [li.re, li.im],
        eigenvalue_rel_diff: log_rel_diff(lp, li),
        gaudin,
    };
    Ok((rs, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::excitations::{solve_quantisation, ExcitationSpec};
    use crate::integral_equations::{dressed_suite, fredholm_matrix};
    use crate::nlie::{fixed_point_solve, NlieOptions, XConfig};
    use crate::quadrature::{gl, QuadratureGrid};
    use crate::special_functions::{ln1p_c, trotter_cut_halfwidth, trotter_driving, wn, wn_d};
    use crate::test_support::params;
    use std::f64::consts::FRAC_PI_2;

    fn finite(zeta: f64, t: f64, n: u32) -> ModelParams {
        params(zeta, 2.0).with_t(t).with_trotter(Trotter::Finite(n))
    }

    fn solve_empty(p: &ModelParams, order: usize) -> NlieSolution {
        let suite = dressed_suite(&p.with_trotter(Trotter::Infinite), order).unwrap();
        fixed_point_solve(p, &XConfig::empty(), &suite, &NlieOptions::default()).unwrap()
    }

    #[test]
    fn closure_at_n16() {
        let p = finite(1.3, 0.5, 16);
        let sol = solve_empty(&p, 64);
        let (rs, c) = certify(&sol, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(rs.roots.len(), 16);
        assert!(rs.roots.iter().all(|r| r.admissible));
        assert!(c.max_bae_residual < 1e-7, "{}", c.max_bae_residual);
        assert!(c.eigenvalue_rel_diff < 1e-6, "{}", c.eigenvalue_rel_diff);
        assert!(c.gaudin.factorisation_residual < 1e-5);
        assert_eq!(c.gaudin.matrix_det, C64::new(1.0, 0.0));
    }

    #[test]
    fn closure_with_excitations() {
        let p = finite(1.3, 0.3, 16);
        let suite = dressed_suite(&p.with_trotter(Trotter::Infinite), 64).unwrap();
        for spec in [ExcitationSpec::new(0, &[0], &[0], &[], &[]), ExcitationSpec::new(1, &[], &[0], &[], &[])] {
            let (sol, _) = solve_quantisation(&p, &spec, &suite, &NlieOptions::default()).unwrap();
            let (rs, c) = certify(&sol, C64::new(0.0, 0.0)).unwrap();
            assert_eq!(rs.n_prime(), 16 - spec.s);
            assert!(c.max_bae_residual < 1e-7);
            assert!(c.eigenvalue_rel_diff < 1e-6);
            assert!(c.gaudin.factorisation_residual < 1e-5);
            assert!(c.gaudin.matrix_det.norm() > 0.1);
        }
    }

    #[test]
    fn free_fermion_zeros_match_scalar_newton() {
        let p = finite(FRAC_PI_2, 0.5, 16);
        let sol = solve_empty(&p, 32);
        let rs = extract_bethe_roots(&sol).unwrap();
        let t = p.t;
        for (k, r) in rs.roots.iter().enumerate() {
            let level = r.level.unwrap();
            assert_eq!(level, k);
            let target = C64::new(0.0, -PI * t * (2 * level + 1) as f64);
            let mut l = r.root + C64::new(1e-5, -1e-5);
            for _ in 0..50 {
                let f = wrap(trotter_driving(l, &p).unwrap() - target, t);
                let fd = -t * wn_d(l, &p, 16);
                l -= f / fd;
            }
            assert!((l - r.root).norm() < 1e-10, "{} {}", l, r.root);
        }
    }

    // Continuous log of 1 + e^{−û/T} on a rectangle around the cut, with û = h − T𝔴_N.
    fn free_fermion_integral(p: &ModelParams, xi: C64, n: u32) -> C64 {
        let hz = p.zeta / 2.0;
        let (r, h) = (3.0, 0.7);
        let c = C64::new(0.0, -hz);
        let corners = [c + C64::new(r, -h), c + C64::new(r, h), c + C64::new(-r, h), c + C64::new(-r, -h)];
        let rule = gl(16);
        let mut acc = C64::new(0.0, 0.0);
        let mut prev: Option<C64> = None;
        for s in 0..4 {
            let (a, b) = (corners[s], corners[(s + 1) % 4]);
            let panels = 400;
            for k in 0..panels {
                let pa = a + (b - a) * (k as f64 / panels as f64);
                let pb = a + (b - a) * ((k + 1) as f64 / panels as f64);
                for &(x, w) in &rule {
                    let mu = pa + (pb - pa) * (0.5 * (1.0 + x));
                    let u = C64::new(p.h, 0.0) - p.t * wn(mu, p, n);
                    let mut f = ln1p_c((-u / p.t).exp());
                    if let Some(q) = prev {
                        f.im += ((q.im - f.im) / (2.0 * PI)).round() * 2.0 * PI;
                    }
                    prev = Some(f);
                    acc += p0_d(mu - xi, p.zeta) * f * (pb - pa) * (0.5 * w);
                }
            }
        }
        let nf = n as f64;
        let cc = p.aleph() / nf;
        let iz = I * p.zeta;
        p.h / (2.0 * p.t) + nf * (lsh(cc + iz + xi) + lsh(cc + iz - xi) - 2.0 * lsh(iz)) - acc / (2.0 * PI)
    }

    #[test]
    fn free_fermion_eigenvalue_and_norm() {
        let p = finite(FRAC_PI_2, 0.5, 16);
        let sol = solve_empty(&p, 32);
        let rs = extract_bethe_roots(&sol).unwrap();
        for xi in [C64::new(0.0, 0.0), C64::new(0.2, 0.05)] {
            let lp = eigenvalue_product(xi, &rs, &p).unwrap();
            let oracle = free_fermion_integral(&p, xi, 16);
            assert!(log_rel_diff(lp, oracle) < 1e-8, "{} {}", lp, oracle);
        }
        let g = gaudin_norm(&rs, &sol).unwrap();
        assert!((g.discrete_det - 1.0).norm() < 1e-12);
    }

    #[test]
    fn perturbed_root_has_linear_response() {
        let p = finite(1.3, 0.5, 16);
        let rs = extract_bethe_roots(&solve_empty(&p, 64)).unwrap();
        for k in [0, 5, 15] {
            let mut r2 = rs.clone();
            r2.roots[k].root += C64::new(1e-4, 0.0);
            let slope = bae_residual(&r2, &p).unwrap() / 1e-4;
            assert!((10.0..=1e5).contains(&slope), "{}", slope);
        }
    }

    #[test]
    fn non_admissible_input_rejected() {
        let p = finite(1.3, 0.5, 16);
        let mut rs = extract_bethe_roots(&solve_empty(&p, 64)).unwrap();
        rs.roots[1].root = rs.roots[0].root + I * p.zeta;
        assert!(matches!(bae_residual(&rs, &p), Err(QtmError::NonAdmissible(_))));
    }

    #[test]
    fn residual_decreases_with_quadrature_order() {
        let p = finite(1.3, 0.5, 16);
        let r: Vec<f64> = [8, 16, 32, 64, 128]
            .iter()
            .map(|&o| extract_bethe_roots(&solve_empty(&p, o)).unwrap().max_residual)
            .collect();
        assert!(r[1] < r[0] && r[2] < r[1]);
        // From order 32 on both sit at the round-off floor.
        assert!(r[4] <= r[3] * 1.05 && r[4] < 1e-11, "{:?}", r);
    }

    #[test]
    fn fredholm_factor_close_to_segment_determinant() {
        for (t, n) in [(0.2, 16), (0.1, 64), (0.05, 64)] {
            let p = finite(1.3, t, n);
            let sol = solve_empty(&p, 64);
            let g = gaudin_norm(&extract_bethe_roots(&sol).unwrap(), &sol).unwrap();
            let grid = QuadratureGrid::segment(sol.contour.q_minus, sol.contour.q_plus, 8, 16);
            let seg = fredholm_matrix(&grid, p.zeta).unwrap().determinant();
            let d = (g.fredholm - seg).norm();
            assert!(d < 0.05 * t * t, "T={} diff {}", t, d);
            if t <= 0.05 {
                assert!(d < 1e-4);
            }
        }
    }

    #[test]
    fn norm_determinant_floor() {
        let mut floor = f64::INFINITY;
        for t in [0.1, 0.15, 0.2, 0.3, 0.5] {
            let p = finite(1.3, t, 16);
            let suite = dressed_suite(&p.with_trotter(Trotter::Infinite), 64).unwrap();
            // At N = 16 the cut tip nears the real axis for T < 0.2; the default disk is too wide.
            let opts = NlieOptions { radius: Some(1.2 * trotter_cut_halfwidth(&p, 16)), ..NlieOptions::default() };
            let sol = fixed_point_solve(&p, &XConfig::empty(), &suite, &opts).unwrap();
            let g = gaudin_norm(&extract_bethe_roots(&sol).unwrap(), &sol).unwrap();
            floor = floor.min(g.discrete_det.norm());
        }
        assert!(floor > 0.5, "{}", floor);
    }

    #[test]
    fn requires_finite_trotter() {
        let p = params(1.3, 2.0).with_t(0.2);
        let sol = solve_empty(&p, 32);
        assert!(extract_bethe_roots(&sol).is_err());
    }
}
