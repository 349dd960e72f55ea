//! Eigenvalue exponents 𝒫(𝕐), ℰ(𝕐) and their low-T expansions, eigenvalue
//! ratios, correlation lengths and the conformal spectrum comparison.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::contours::Branch;
use crate::core_types::{reduce_ipi, ModelParams, SignedMultiset, C64, I};
use crate::error::{QtmError, Result};
use crate::excitations::{solve_quantisation, ExcitationSpec, RootSet};
use crate::integral_equations::DressedSuite;
use crate::nlie::{dist_to_polyline, NlieOptions, NlieSolution, U1};
use crate::special_functions::{eps0, eps0_d, p0, p0_d};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DressMode {
    Direct,
    Expansion,
}

/// Far roots and the counts of close roots per Fermi point (index 0 for σ = +, 1 for σ = −).
#[derive(Debug, Clone)]
pub struct Partition {
    pub far: SignedMultiset,
    pub ell: [i64; 2],
    pub upsilon: [f64; 2],
    pub spin: i64,
}

fn sidx(side: Branch) -> usize {
    match side {
        Branch::L => 1,
        _ => 0,
    }
}

impl Partition {
    /// Roots held fixed in the configuration are far; solved roots follow the flags of `rs`
    /// (all close when `rs` is absent).
    pub fn new(sol: &NlieSolution, rs: Option<&RootSet>) -> Self {
        let mut far = sol.config.fixed.clone();
        let mut ell = [0i64; 2];
        let mut upsilon = [0.0; 2];
        for (k, (tg, &r)) in sol.config.roots.iter().zip(&sol.roots).enumerate() {
            let is_far = rs.and_then(|s| s.entries.get(k)).map_or(false, |e| e.far);
            if is_far {
                far.add(r, tg.mult());
            } else {
                let i = sidx(tg.side);
                let sigma = if i == 0 { 1 } else { -1 };
                ell[i] += sigma * tg.mult();
                upsilon[i] += tg.n as f64 + 0.5;
            }
        }
        Partition { far, ell, upsilon, spin: sol.spin() }
    }
}

/// Values of 𝒢 and its expansion terms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DressedTerms {
    pub direct: C64,
    pub minus1: C64,
    pub zero: C64,
    /// Fermi-point brace term of the O(T) coefficient.
    pub one: C64,
    /// O(T) contribution of the close roots.
    pub one_close: C64,
    pub t: f64,
}

impl DressedTerms {
    pub fn expansion(&self) -> C64 {
        self.minus1 / self.t + self.zero + self.t * (self.one + self.one_close)
    }

    pub fn value(&self, mode: DressMode) -> C64 {
        match mode {
            DressMode::Direct => self.direct,
            DressMode::Expansion => self.expansion(),
        }
    }
}

/// A bare function g and its derivative, with the poles of g′.
pub struct Bare<'a> {
    pub g: &'a dyn Fn(C64) -> C64,
    pub g_d: &'a dyn Fn(C64) -> C64,
    pub poles: Vec<C64>,
}

pub fn bare_momentum_fn(p: &ModelParams) -> (impl Fn(C64) -> C64, impl Fn(C64) -> C64) {
    let z = p.zeta;
    (move |l| p0(l, z), move |l| p0_d(l, z))
}

pub fn bare_energy_fn(p: &ModelParams) -> (impl Fn(C64) -> C64 + '_, impl Fn(C64) -> C64 + '_) {
    (move |l| eps0(l, p), move |l| eps0_d(l, p))
}

/// The pole of p₀′ and ε₀′ in the lower strip.
pub fn bare_poles(p: &ModelParams) -> Vec<C64> {
    vec![C64::new(0.0, -p.zeta / 2.0), C64::new(0.0, p.zeta / 2.0)]
}

/// 𝒢(𝕐) = Σ_y m_y g(y) − ∮ g′ ℒn[1 + e^{−u/T}]/(2πi) on the adapted contour.
pub fn dress_direct(g: &Bare, sol: &NlieSolution) -> Result<C64> {
    let t = sol.t();
    let suite = &sol.suite;
    let c = &sol.contour;
    let poly = c.closed_polyline();
    for &pole in &g.poles {
        let z = reduce_ipi(pole);
        if (z - c.centre).norm() > 1e-12 && dist_to_polyline(&poly, z) < 0.5 * c.radius {
            return Err(QtmError::PoleConflict);
        }
    }
    let mut direct = C64::new(0.0, 0.0);
    for &(y, m) in sol.all_roots().entries() {
        direct += m as f64 * (g.g)(y);
    }
    let mut small = C64::new(0.0, 0.0);
    for n in &c.nodes {
        small += (g.g_d)(n.mu) * n.small_log(t) * n.dl;
    }
    let mut seg = suite.integrate(|x| {
        let l = C64::new(x, 0.0);
        (g.g_d)(l) * sol.u(l)
    });
    for &(nu, w) in &c.seg_ends {
        seg += (g.g_d)(nu) * sol.u(nu) * w;
    }
    Ok(direct - small / (2.0 * PI * I) - seg / (2.0 * PI * I * t))
}

/// 𝒢(𝕐) directly on the adapted contour together with its low-T expansion terms.
pub fn dress_quantity(g: &Bare, sol: &NlieSolution, part: &Partition) -> Result<DressedTerms> {
    let t = sol.t();
    let suite = &sol.suite;
    let direct = dress_direct(g, sol)?;

    let minus1 = -suite.integrate(|x| {
        let l = C64::new(x, 0.0);
        (g.g_d)(l) * suite.eps(l)
    }) / (2.0 * PI * I);

    let dd = suite.dress(|l| (g.g_d)(l));
    let gam = |l: C64| suite.gamma(l, (g.g)(l), (g.g_d)(l), &dd);
    let qp = C64::new(suite.q, 0.0);
    let (gq, gdq) = gam(qp);
    let (gmq, gdmq) = gam(-qp);
    let mut zero = C64::new(0.0, 0.0);
    for &(y, m) in part.far.entries() {
        zero += m as f64 * gam(y).0;
    }
    zero += part.ell[0] as f64 * gq - part.ell[1] as f64 * gmq;
    zero += part.spin as f64 / 2.0 * (gq - gmq);

    let u1 = U1::new(&part.far, part.spin, suite);
    let mut one = C64::new(0.0, 0.0);
    let mut one_close = C64::new(0.0, 0.0);
    for (i, (sigma, sq, gd)) in [(1.0, qp, gdq), (-1.0, -qp, gdmq)].into_iter().enumerate() {
        let a = u1.eval(sq)?;
        let pref = sigma * gd / suite.eps_d(sq);
        one += pref / (4.0 * PI * I) * (a * (a - 4.0 * PI * I * part.ell[i] as f64) + PI * PI / 3.0);
        one_close += pref * 2.0 * PI * I * part.upsilon[i];
    }
    Ok(DressedTerms { direct, minus1, zero, one, one_close, t })
}

pub fn momentum_p(sol: &NlieSolution, part: &Partition) -> Result<DressedTerms> {
    let (g, gd) = bare_momentum_fn(&sol.params);
    dress_quantity(&Bare { g: &g, g_d: &gd, poles: bare_poles(&sol.params) }, sol, part)
}

pub fn energy_e(sol: &NlieSolution, part: &Partition) -> Result<DressedTerms> {
    let p = &sol.params;
    let (g, gd) = bare_energy_fn(p);
    dress_quantity(&Bare { g: &g, g_d: &gd, poles: bare_poles(p) }, sol, part)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EigenvalueData {
    pub ln_lambda: C64,
    /// ln Λ(𝕐) − ln Λ(∅).
    pub ln_ratio: C64,
    /// None when |Λ(𝕐)/Λ(∅)| ≥ 1.
    pub xi: Option<f64>,
    pub phase: f64,
}

/// ln Λ = 𝔰iπ + h/2T − 2J cos ζ/T + i𝒫.
pub fn ln_lambda(p: &ModelParams, spin: i64, pp: C64) -> C64 {
    I * PI * spin as f64 + (p.h / (2.0 * p.t) - 2.0 * p.j * p.zeta.cos() / p.t) + I * pp
}

pub fn eigenvalue_and_lengths(p: &ModelParams, spin: i64, p_y: C64, p_empty: C64) -> EigenvalueData {
    let ln_y = ln_lambda(p, spin, p_y);
    let ln_ratio = ln_y - ln_lambda(p, 0, p_empty);
    let xi = if ln_ratio.re < 0.0 { Some(-1.0 / ln_ratio.re) } else { None };
    EigenvalueData { ln_lambda: ln_y, ln_ratio, xi, phase: ln_ratio.im }
}

/// As [`eigenvalue_and_lengths`], failing when ξ is undefined.
pub fn correlation_length(p: &ModelParams, spin: i64, p_y: C64, p_empty: C64) -> Result<f64> {
    let d = eigenvalue_and_lengths(p, spin, p_y, p_empty);
    d.xi.ok_or(QtmError::RatioGeqOne(d.ln_ratio.re.exp()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub label: String,
    pub t: f64,
    pub spin: i64,
    pub p: C64,
    pub e: C64,
    pub p_m1: C64,
    pub p0: C64,
    pub p1: C64,
    pub varpi1: C64,
    pub e_m1: C64,
    pub e0: C64,
    pub e1: C64,
    pub varsigma1: C64,
    pub v_f: f64,
    /// Υ^{(+)}, Υ^{(−)}.
    pub upsilon: [f64; 2],
    pub ln_lambda: C64,
    pub xi: Option<f64>,
    pub phase: f64,
    /// −(2πT/v_F) Σ_σ Υ^{(σ)}.
    pub lambda_ratio_low_t: f64,
    /// −2πT Σ_σ σ Υ^{(σ)}.
    pub energy_ratio_low_t: f64,
}

pub fn spectral_report(sol: &NlieSolution, rs: Option<&RootSet>, p_empty: C64) -> Result<SpectralReport> {
    let part = Partition::new(sol, rs);
    let pt = momentum_p(sol, &part)?;
    let et = energy_e(sol, &part)?;
    let t = sol.t();
    let v_f = sol.suite.vf;
    let ev = eigenvalue_and_lengths(&sol.params, sol.spin(), pt.direct, p_empty);
    Ok(SpectralReport {
        label: rs.map_or_else(|| "custom".to_string(), |r| r.spec.label()),
        t,
        spin: sol.spin(),
        p: pt.direct,
        e: et.direct,
        p_m1: pt.minus1,
        p0: pt.zero,
        p1: pt.one,
        varpi1: pt.one_close,
        e_m1: et.minus1,
        e0: et.zero,
        e1: et.one,
        varsigma1: et.one_close,
        v_f,
        upsilon: part.upsilon,
        ln_lambda: ev.ln_lambda,
        xi: ev.xi,
        phase: ev.phase,
        lambda_ratio_low_t: -2.0 * PI * t / v_f * (part.upsilon[0] + part.upsilon[1]),
        energy_ratio_low_t: -2.0 * PI * t * (part.upsilon[0] - part.upsilon[1]),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CftRow {
    pub spec: String,
    pub t: f64,
    pub upsilon_plus: f64,
    pub upsilon_minus: f64,
    /// i(𝒫(𝕐) − 𝒫(∅)).
    pub dln_re: f64,
    pub dln_im: f64,
    pub dln_pred: f64,
    pub dln_resid: f64,
    /// i(ℰ(𝕐) − ℰ(∅)).
    pub de_re: f64,
    pub de_im: f64,
    pub de_pred: f64,
    pub de_resid: f64,
}

/// Compares the exponent differences of each spec with the conformal predictions.
pub fn cft_spectrum_check(
    specs: &[ExcitationSpec],
    p: &ModelParams,
    ts: &[f64],
    suite: &DressedSuite,
    opts: &NlieOptions,
) -> Result<Vec<CftRow>> {
    let mut rows = Vec::new();
    for &t in ts {
        let pt = p.with_t(t);
        let (e_sol, _) = solve_quantisation(&pt, &ExcitationSpec::empty(), suite, opts)?;
        let e_part = Partition::new(&e_sol, None);
        let p_e = momentum_p(&e_sol, &e_part)?.direct;
        let en_e = energy_e(&e_sol, &e_part)?.direct;
        for spec in specs {
            if spec.s != 0 || spec.p_r.len() != spec.h_r.len() || spec.p_l.len() != spec.h_l.len() {
                return Err(QtmError::InvalidSpec(format!("{}: needs s = 0 and n_p = n_h per side", spec.label())));
            }
            let (sol, rs) = solve_quantisation(&pt, spec, suite, opts)?;
            let part = Partition::new(&sol, Some(&rs));
            let dln = I * (momentum_p(&sol, &part)?.direct - p_e);
            let de = I * (energy_e(&sol, &part)?.direct - en_e);
            let (up, um) = (spec.upsilon(1), spec.upsilon(-1));
            let dln_pred = -2.0 * PI * t / suite.vf * (up + um);
            let de_pred = -2.0 * PI * t * (up - um);
            rows.push(CftRow {
                spec: spec.label(),
                t,
                upsilon_plus: up,
                upsilon_minus: um,
                dln_re: dln.re,
                dln_im: dln.im,
                dln_pred,
                dln_resid: (dln - dln_pred).norm(),
                de_re: de.re,
                de_im: de.im,
                de_pred,
                de_resid: (de - de_pred).norm(),
            });
        }
    }
    Ok(rows)
}

/// Specs with at most `max_exc` excitations, integers in 0..=max_int, spins in `spins`,
/// obeying 𝔰 + |particles| = |holes|.
pub fn enumerate_specs(max_exc: usize, max_int: i64, spins: &[i64]) -> Vec<ExcitationSpec> {
    let singles: Vec<(usize, i64)> = (0..4).flat_map(|f| (0..=max_int).map(move |n| (f, n))).collect();
    let mut sets: Vec<Vec<(usize, i64)>> = vec![vec![]];
    let mut frontier = sets.clone();
    for _ in 0..max_exc {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in &singles {
                if s.last().map_or(true, |&l| c > l) {
                    let mut v = s.clone();
                    v.push(c);
                    next.push(v);
                }
            }
        }
        sets.extend(next.iter().cloned());
        frontier = next;
    }
    let mut out = Vec::new();
    for set in &sets {
        let mut spec = ExcitationSpec::empty();
        for &(f, n) in set {
            match f {
                0 => spec.p_r.push(n),
                1 => spec.h_r.push(n),
                2 => spec.p_l.push(n),
                _ => spec.h_l.push(n),
            }
        }
        for &s in spins {
            spec.s = s;
            if spec.balanced() {
                out.push(spec.clone());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub spec: String,
    pub spin: i64,
    pub im_p: f64,
    pub ln_abs_lambda: f64,
}

/// Solves every spec and records Im 𝒫 and ln|Λ|.
pub fn dominant_scan(
    specs: &[ExcitationSpec],
    p: &ModelParams,
    suite: &DressedSuite,
    opts: &NlieOptions,
) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::new();
    for spec in specs {
        let (sol, rs) = solve_quantisation(p, spec, suite, opts)?;
        let part = Partition::new(&sol, Some(&rs));
        let pp = momentum_p(&sol, &part)?.direct;
        rows.push(ScanRow {
            spec: spec.label(),
            spin: spec.s,
            im_p: pp.im,
            ln_abs_lambda: ln_lambda(p, spec.s, pp).re,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral_equations::dressed_suite;
    use crate::nlie::fixed_point_solve;
    use crate::nlie::XConfig;
    use crate::quadrature::QuadratureGrid;
    use crate::test_support::params;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn enumeration_counts() {
        let specs = enumerate_specs(2, 1, &[-1, 0, 1]);
        assert_eq!(specs.len(), 25);
        assert!(specs.iter().all(|s| s.balanced()));
    }

    #[test]
    fn free_fermion_direct_matches_real_line() {
        let p = params(FRAC_PI_2, 2.0).with_t(0.1);
        let suite = dressed_suite(&p, 64).unwrap();
        let sol = fixed_point_solve(&p, &XConfig::empty(), &suite, &NlieOptions::default()).unwrap();
        let pp = momentum_p(&sol, &Partition::new(&sol, None)).unwrap();
        // i𝒫 = (1/2π)∫_ℝ p₀′ ln(1 + e^{−ε₀/T}) at the free-fermion point.
        let g = QuadratureGrid::segment(C64::new(-12.0, 0.0), C64::new(12.0, 0.0), 480, 16);
        let line = g.integrate(|l| p0_d(l, p.zeta) * crate::special_functions::ln1p_c((-eps0(l, &p) / p.t).exp()));
        let want = -I * line / (2.0 * PI);
        assert!((pp.direct - want).norm() < 1e-9, "{} vs {}", pp.direct, want);
    }

    #[test]
    fn free_fermion_gamma_is_bare() {
        let p = params(FRAC_PI_2, 2.0).with_t(0.05);
        let suite = dressed_suite(&p, 64).unwrap();
        let spec = ExcitationSpec::new(-1, &[0], &[], &[], &[]);
        let (sol, _) = solve_quantisation(&p, &spec, &suite, &NlieOptions::default()).unwrap();
        let mut part = Partition::new(&sol, None);
        part.far = SignedMultiset::from_points(&[C64::new(0.3, -0.4)]);
        let et = energy_e(&sol, &part).unwrap();
        let q = suite.q;
        let want = eps0(C64::new(0.3, -0.4), &p)
            + (part.ell[0] as f64) * eps0(C64::new(q, 0.0), &p)
            - (part.ell[1] as f64) * eps0(C64::new(-q, 0.0), &p)
            - 0.5 * (eps0(C64::new(q, 0.0), &p) - eps0(C64::new(-q, 0.0), &p));
        assert!((et.zero - want).norm() < 1e-12);
    }

    #[test]
    fn expansion_tracks_direct() {
        let mut prev = None;
        for t in [0.1, 0.05] {
            let p = params(1.3, 2.0).with_t(t);
            let suite = dressed_suite(&p, 64).unwrap();
            let sol = fixed_point_solve(&p, &XConfig::empty(), &suite, &NlieOptions::default()).unwrap();
            let part = Partition::new(&sol, None);
            let d = momentum_p(&sol, &part).unwrap();
            let e = energy_e(&sol, &part).unwrap();
            // ℰ(∅) vanishes by parity of ε₀′.
            assert!(e.direct.norm() < 1e-12 && e.expansion().norm() < 1e-12);
            let r = (d.direct - d.expansion()).norm();
            if let Some(a) = prev {
                assert!(a / r > 3.0, "{}", a / r);
            }
            prev = Some(r);
        }
    }

    #[test]
    fn varpi_arithmetic() {
        // n_p = 2, n_h = 1 on the right with the lowest integers: Υ = ½ + 3/2 + ½.
        let s = ExcitationSpec::new(-1, &[0, 1], &[0], &[], &[]);
        let v_f = 3.0;
        let varpi = 2.0 * PI * I * (s.upsilon(1) + s.upsilon(-1)) / v_f;
        assert!((varpi - I * PI * 5.0 / v_f).norm() < 1e-15);
    }
}
