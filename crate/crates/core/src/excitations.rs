//! Particle/hole quantisation conditions coupled to the NLIE, their low-T root
//! expansions, classification diagnostics and the Trotter limit of the roots.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::contours::{winding_number, Branch};
use crate::core_types::{dist_ipi, reduce_ipi, ModelParams, SignedMultiset, Trotter, C64, I};
use crate::error::{QtmError, Result};
use crate::integral_equations::DressedSuite;
use crate::nlie::{
    dist_to_polyline, fixed_point_solve_seeded, NlieOptions, NlieSolution, RootKind, RootTarget, XConfig, U1,
};
use crate::special_functions::trotter_cut_halfwidth;

fn default_far_fraction() -> f64 {
    0.2
}

/// Quantum numbers of an excitation. `r` is the side with υ = +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSpec {
    #[serde(default)]
    pub s: i64,
    #[serde(default)]
    pub p_r: Vec<i64>,
    #[serde(default)]
    pub h_r: Vec<i64>,
    #[serde(default)]
    pub p_l: Vec<i64>,
    #[serde(default)]
    pub h_l: Vec<i64>,
    /// Integers with 2πT(n+½) above this fraction of the Im ε scale on the
    /// Fermi curve are treated as far.
    #[serde(default = "default_far_fraction")]
    pub far_fraction: f64,
}

impl Default for ExcitationSpec {
    fn default() -> Self {
        ExcitationSpec {
            s: 0,
            p_r: vec![],
            h_r: vec![],
            p_l: vec![],
            h_l: vec![],
            far_fraction: default_far_fraction(),
        }
    }
}

impl ExcitationSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(s: i64, p_r: &[i64], h_r: &[i64], p_l: &[i64], h_l: &[i64]) -> Self {
        ExcitationSpec {
            s,
            p_r: p_r.to_vec(),
            h_r: h_r.to_vec(),
            p_l: p_l.to_vec(),
            h_l: h_l.to_vec(),
            far_fraction: default_far_fraction(),
        }
    }

    fn families(&self) -> [(Branch, RootKind, &Vec<i64>); 4] {
        [
            (Branch::R, RootKind::Particle, &self.p_r),
            (Branch::R, RootKind::Hole, &self.h_r),
            (Branch::L, RootKind::Particle, &self.p_l),
            (Branch::L, RootKind::Hole, &self.h_l),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (_, _, v) in self.families() {
            if let Some(n) = v.iter().find(|&&n| n < 0) {
                return Err(QtmError::InvalidSpec(format!("negative integer {n}")));
            }
        }
        if !(self.far_fraction > 0.0) {
            return Err(QtmError::InvalidSpec("far_fraction must be positive".into()));
        }
        Ok(())
    }

    /// Repeated integers within a family: the roots coincide and no eigenstate results.
    pub fn is_degenerate(&self) -> bool {
        self.families().iter().any(|(_, _, v)| {
            let mut s = v.to_vec();
            s.sort_unstable();
            s.windows(2).any(|w| w[0] == w[1])
        })
    }

    /// 𝔰 + |particles| = |holes|.
    pub fn balanced(&self) -> bool {
        self.s + (self.p_r.len() + self.p_l.len()) as i64 == (self.h_r.len() + self.h_l.len()) as i64
    }

    /// Targets in the order R particles, R holes, L particles, L holes.
    pub fn targets(&self) -> Vec<RootTarget> {
        let mut out = Vec::new();
        for (side, kind, v) in self.families() {
            for &n in v {
                out.push(RootTarget { side, kind, n });
            }
        }
        out
    }

    pub fn xconfig(&self) -> XConfig {
        XConfig {
            fixed: SignedMultiset::default(),
            roots: self.targets(),
            spin: self.s,
        }
    }

    pub fn n_excitations(&self) -> usize {
        self.p_r.len() + self.h_r.len() + self.p_l.len() + self.h_l.len()
    }

    /// Υ^{(σ)} = Σ(p + ½) + Σ(h + ½) on side σ (+ for R).
    pub fn upsilon(&self, sigma: i64) -> f64 {
        let (p, h) = if sigma > 0 { (&self.p_r, &self.h_r) } else { (&self.p_l, &self.h_l) };
        p.iter().chain(h.iter()).map(|&n| n as f64 + 0.5).sum()
    }

    /// ℓ^{(σ)} = σ(n_p^{(σ)} − n_h^{(σ)}).
    pub fn ell(&self, sigma: i64) -> i64 {
        let (p, h) = if sigma > 0 { (&self.p_r, &self.h_r) } else { (&self.p_l, &self.h_l) };
        sigma * (p.len() as i64 - h.len() as i64)
    }

    /// Short label such as `s0_pR0_hR1`.
    pub fn label(&self) -> String {
        let mut s = format!("s{}", self.s);
        for (tag, v) in [("pR", &self.p_r), ("hR", &self.h_r), ("pL", &self.p_l), ("hL", &self.h_l)] {
            if !v.is_empty() {
                let nums: Vec<String> = v.iter().map(|n| n.to_string()).collect();
                s.push_str(&format!("_{tag}{}", nums.join("-")));
            }
        }
        s
    }
}

/// Linearised Im ε range of the Fermi curve: ε′(q) times the distance from q to the pole.
pub fn fermi_curve_im_scale(suite: &DressedSuite) -> f64 {
    let q = C64::new(suite.q, 0.0);
    suite.eps_d(q).re * (q + I * suite.zeta() / 2.0).norm()
}

/// Whether the integer n counts as a far excitation at temperature t.
pub fn is_far(n: i64, t: f64, suite: &DressedSuite, fraction: f64) -> bool {
    2.0 * PI * t * (n as f64 + 0.5) > fraction * fermi_curve_im_scale(suite)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootEntry {
    pub id: usize,
    pub side: Branch,
    pub kind: RootKind,
    pub n: i64,
    pub root: C64,
    pub order0: C64,
    pub order1: C64,
    pub order2: C64,
    pub residual: f64,
    pub far: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub max_re_eps: f64,
    /// max |Re ε(root)| / (T |ln T|).
    pub near_curve_constant: f64,
    pub min_pair_dist: f64,
    pub repulsion_bound: f64,
    pub repulsion_ok: bool,
    pub singular_count: usize,
    pub string_count: usize,
    pub particles_outside: bool,
    pub holes_inside: bool,
    pub min_abs_u_prime: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootSet {
    pub spec: ExcitationSpec,
    pub entries: Vec<RootEntry>,
    /// Repeated integers: not an eigenstate.
    pub degenerate: bool,
    pub jacobian_cond: f64,
    pub report: ClassificationReport,
}

impl RootSet {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.residual).fold(0.0, f64::max)
    }

    pub fn roots(&self) -> Vec<C64> {
        self.entries.iter().map(|e| e.root).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "root_id,side,kind,n,re,im,order0_re,order0_im,order1_re,order1_im,order2_re,order2_im,residual,far\n",
        );
        for e in &self.entries {
            s.push_str(&format!(
                "{},{:?},{:?},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                e.id,
                e.side,
                e.kind,
                e.n,
                e.root.re,
                e.root.im,
                e.order0.re,
                e.order0.im,
                e.order1.re,
                e.order1.im,
                e.order2.re,
                e.order2.im,
                e.residual,
                e.far
            ));
        }
        s
    }
}

/// Cumulative low-T predictions y₀, y₀ + T y₁, y₀ + T y₁ + T² y₂ for every target.
#[derive(Debug, Clone)]
pub struct RootExpansion {
    pub order0: Vec<C64>,
    pub order1: Vec<C64>,
    pub order2: Vec<C64>,
}

pub fn root_expansion_all(spec: &ExcitationSpec, suite: &DressedSuite, t: f64) -> Result<RootExpansion> {
    let targets = spec.targets();
    let mut y0 = Vec::with_capacity(targets.len());
    for tg in &targets {
        y0.push(tg.seed(suite, t)?);
    }
    let mut set = SignedMultiset::default();
    for (y, tg) in y0.iter().zip(&targets) {
        set.add(*y, tg.mult());
    }
    let u1 = U1::new(&set, spec.s, suite);
    let mut y1 = Vec::with_capacity(y0.len());
    for &y in &y0 {
        y1.push(-u1.eval(y)? / suite.eps_d(y));
    }
    // Fermi-point term shared by all roots: {u₁(σq)² + π²/3}/(2ε′(σq)).
    let mut brace = [C64::new(0.0, 0.0); 2];
    for (k, sigma) in [1.0, -1.0].into_iter().enumerate() {
        let sq = C64::new(sigma * suite.q, 0.0);
        let a = u1.eval(sq)?;
        brace[k] = sigma * (a * a + PI * PI / 3.0) / (2.0 * suite.eps_d(sq));
    }
    let mut y2 = Vec::with_capacity(y0.len());
    for (a, &y) in y0.iter().enumerate() {
        let ed = suite.eps_d(y);
        let mut num = suite.eps_dd(y) * y1[a] * y1[a] / 2.0 + u1.eval_d(y)? * y1[a];
        for (k, sigma) in [1.0, -1.0].into_iter().enumerate() {
            num += suite.resolvent(y, C64::new(sigma * suite.q, 0.0)) * brace[k];
        }
        for (b, tg) in targets.iter().enumerate() {
            num += 2.0 * PI * I * tg.mult() as f64 * suite.resolvent(y, y0[b]) * y1[b];
        }
        y2.push(-num / ed);
    }
    let order1: Vec<C64> = y0.iter().zip(&y1).map(|(a, b)| a + t * b).collect();
    let order2: Vec<C64> = order1.iter().zip(&y2).map(|(a, b)| a + t * t * b).collect();
    Ok(RootExpansion { order0: y0, order1, order2 })
}

/// Predicted roots truncated at `order` (0, 1 or 2), in [`ExcitationSpec::targets`] order.
pub fn root_low_t_expansion(spec: &ExcitationSpec, order: u8, suite: &DressedSuite, t: f64) -> Result<Vec<C64>> {
    let e = root_expansion_all(spec, suite, t)?;
    match order {
        0 => Ok(e.order0),
        1 => Ok(e.order1),
        2 => Ok(e.order2),
        _ => Err(QtmError::InvalidSpec(format!("expansion order {order}"))),
    }
}

/// Pairs (a, b) of particles with d_iπ(y_a, y_b + iζ) below the threshold.
pub fn string_candidates(particles: &[C64], zeta: f64, threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (a, &ya) in particles.iter().enumerate() {
        for (b, &yb) in particles.iter().enumerate() {
            if a != b && dist_ipi(ya, yb + I * zeta) < threshold {
                out.push((a, b));
            }
        }
    }
    out
}

pub const TOL_STRING: f64 = 1e-3;

pub fn classify_roots(rs: &[RootEntry], sol: &NlieSolution, p: &ModelParams) -> ClassificationReport {
    let t = p.t;
    let suite = &sol.suite;
    let closed = sol.contour.closed_polyline();
    let inside = |z: C64| winding_number(&closed, reduce_ipi(z)).abs() > 0.5;

    let max_re_eps = rs.iter().map(|e| suite.eps(e.root).re.abs()).fold(0.0, f64::max);
    let mut min_pair = f64::INFINITY;
    let mut min_target_gap = f64::INFINITY;
    for (a, ea) in rs.iter().enumerate() {
        for eb in &rs[a + 1..] {
            min_pair = min_pair.min(dist_ipi(ea.root, eb.root));
            let ta = RootTarget { side: ea.side, kind: ea.kind, n: ea.n }.target(t);
            let tb = RootTarget { side: eb.side, kind: eb.kind, n: eb.n }.target(t);
            if (ta - tb).norm() > 0.0 {
                min_target_gap = min_target_gap.min((ta - tb).norm());
            }
        }
    }
    let uds: Vec<f64> = rs.iter().map(|e| sol.u_d(e.root).norm()).collect();
    let max_ud = uds.iter().cloned().fold(0.0, f64::max);
    let min_ud = uds.iter().cloned().fold(f64::INFINITY, f64::min);
    let repulsion_bound = if min_target_gap.is_finite() && max_ud > 0.0 { min_target_gap / max_ud } else { 0.0 };

    let particles: Vec<C64> = rs.iter().filter(|e| e.kind == RootKind::Particle).map(|e| e.root).collect();
    let singular_count = particles.iter().filter(|&&y| inside(y - I * p.zeta)).count();
    let string_count = string_candidates(&particles, p.zeta, 10.0 * t * TOL_STRING).len();
    let particles_outside = particles.iter().all(|&y| !inside(y));
    let holes_inside = rs.iter().filter(|e| e.kind == RootKind::Hole).all(|e| inside(e.root));
    let ltl = t * t.ln().abs();
    ClassificationReport {
        max_re_eps,
        near_curve_constant: if ltl > 0.0 { max_re_eps / ltl } else { f64::INFINITY },
        min_pair_dist: min_pair,
        repulsion_bound,
        repulsion_ok: min_pair >= 0.5 * repulsion_bound,
        singular_count,
        string_count,
        particles_outside,
        holes_inside,
        min_abs_u_prime: min_ud,
    }
}

fn build_rootset(spec: &ExcitationSpec, sol: &NlieSolution, p: &ModelParams) -> Result<RootSet> {
    let t = p.t;
    let exp = root_expansion_all(spec, &sol.suite, t)?;
    let mut entries = Vec::new();
    for (id, (tg, &r)) in sol.config.roots.iter().zip(&sol.roots).enumerate() {
        entries.push(RootEntry {
            id,
            side: tg.side,
            kind: tg.kind,
            n: tg.n,
            root: r,
            order0: exp.order0[id],
            order1: exp.order1[id],
            order2: exp.order2[id],
            residual: (sol.u(r) - tg.target(t)).norm(),
            far: is_far(tg.n, t, &sol.suite, spec.far_fraction),
        });
    }
    let report = classify_roots(&entries, sol, p);
    Ok(RootSet {
        spec: spec.clone(),
        entries,
        degenerate: spec.is_degenerate(),
        jacobian_cond: sol.jacobian_cond,
        report,
    })
}

const CONTINUATION_STEPS: usize = 10;

/// Solves the quantisation conditions together with the NLIE.  When Newton
/// fails from the order-0 seeds the solve is continued down from 4T.
pub fn solve_quantisation(
    p: &ModelParams,
    spec: &ExcitationSpec,
    suite: &DressedSuite,
    opts: &NlieOptions,
) -> Result<(NlieSolution, RootSet)> {
    spec.validate()?;
    let cfg = spec.xconfig();
    let sol = match fixed_point_solve_seeded(p, &cfg, suite, opts, None) {
        Ok(s) => s,
        Err(QtmError::NewtonDiverged(_)) if !cfg.roots.is_empty() => continue_in_t(p, &cfg, suite, opts)?,
        Err(e) => return Err(e),
    };
    let rs = build_rootset(spec, &sol, p)?;
    Ok((sol, rs))
}

fn continue_in_t(p: &ModelParams, cfg: &XConfig, suite: &DressedSuite, opts: &NlieOptions) -> Result<NlieSolution> {
    let t_hi = (4.0 * p.t).min(0.5).max(p.t);
    let ratio = (p.t / t_hi).powf(1.0 / CONTINUATION_STEPS as f64);
    let mut seeds: Option<Vec<C64>> = None;
    let mut last = None;
    for k in 0..=CONTINUATION_STEPS {
        let t = if k == CONTINUATION_STEPS { p.t } else { t_hi * ratio.powi(k as i32) };
        let pk = p.with_t(t);
        let sol = fixed_point_solve_seeded(&pk, cfg, suite, opts, seeds.as_deref())?;
        seeds = Some(sol.roots.clone());
        last = Some(sol);
    }
    last.ok_or_else(|| QtmError::NewtonDiverged("continuation".into()))
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrotterSlopeReport {
    pub ns: Vec<u32>,
    /// max_a |x̂_a(N) − x_a|.
    pub root_dev: Vec<f64>,
    /// sup |û_N − u| over the infinite-Trotter contour away from the pole and the cut.
    pub u_dev: Vec<f64>,
    pub root_slope: f64,
    pub u_slope: f64,
}

pub fn trotter_root_convergence(
    p: &ModelParams,
    spec: &ExcitationSpec,
    ns: &[u32],
    suite: &DressedSuite,
    opts: &NlieOptions,
) -> Result<TrotterSlopeReport> {
    let pinf = p.with_trotter(Trotter::Infinite);
    let (inf, _) = solve_quantisation(&pinf, spec, suite, opts)?;
    let mut root_dev = Vec::new();
    let mut u_dev = Vec::new();
    // One exclusion set for every N, sized by the widest cut.
    let n_min = ns.iter().copied().min().unwrap_or(2);
    let excl = inf.contour.radius.max(2.0 * trotter_cut_halfwidth(&p.with_trotter(Trotter::Finite(n_min)), n_min));
    for &n in ns {
        let pn = p.with_trotter(Trotter::Finite(n));
        let (sol, _) = solve_quantisation(&pn, spec, suite, opts)?;
        let rd = sol.roots.iter().zip(&inf.roots).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let mut ud: f64 = 0.0;
        for node in &inf.contour.nodes {
            if (reduce_ipi(node.mu) - inf.contour.centre).norm() > excl {
                ud = ud.max((sol.u(node.mu) - node.w).norm());
            }
        }
        root_dev.push(rd);
        u_dev.push(ud);
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let root_slope = if root_dev.iter().all(|&d| d > 0.0) { loglog_slope(&xs, &root_dev) } else { f64::NEG_INFINITY };
    let u_slope = loglog_slope(&xs, &u_dev);
    Ok(TrotterSlopeReport { ns: ns.to_vec(), root_dev, u_dev, root_slope, u_slope })
}

/// Distance of z to the adapted contour, for diagnostics.
pub fn distance_to_contour(sol: &NlieSolution, z: C64) -> f64 {
    dist_to_polyline(&sol.contour.closed_polyline(), reduce_ipi(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral_equations::dressed_suite;
    use crate::test_support::params;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn spec_bookkeeping() {
        let s = ExcitationSpec::new(0, &[0], &[0], &[], &[]);
        assert!(s.balanced());
        assert_eq!(s.upsilon(1), 1.0);
        assert_eq!(s.ell(1), 0);
        assert_eq!(ExcitationSpec::new(0, &[0, 1], &[0], &[], &[]).ell(1), 1);
        assert!(ExcitationSpec::new(0, &[0, 0], &[0, 1], &[], &[]).is_degenerate());
        assert!(ExcitationSpec::new(0, &[-1], &[0], &[], &[]).validate().is_err());
        assert_eq!(ExcitationSpec::new(0, &[0], &[1], &[1], &[0]).label(), "s0_pR0_hR1_pL1_hL0");
    }

    #[test]
    fn free_fermion_roots_are_bare_preimages() {
        let p = params(FRAC_PI_2, 2.0);
        let suite = dressed_suite(&p, 64).unwrap();
        let spec = ExcitationSpec::new(0, &[0], &[0], &[], &[]);
        let (_, rs) = solve_quantisation(&p, &spec, &suite, &NlieOptions::default()).unwrap();
        for e in &rs.entries {
            assert!(e.residual < 1e-12, "{}", e.residual);
            assert!((e.root - e.order0).norm() < 1e-10);
            let target = RootTarget { side: e.side, kind: e.kind, n: e.n }.target(p.t);
            assert!((eps0(e.root, &p) - target).norm() < 1e-10);
        }
        assert_eq!(rs.report.singular_count, 0);
        assert!(rs.report.particles_outside && rs.report.holes_inside);
    }

    use crate::special_functions::eps0;

    #[test]
    fn degenerate_integers_coincide() {
        let p = params(1.3, 2.0);
        let suite = dressed_suite(&p, 64).unwrap();
        let spec = ExcitationSpec::new(0, &[0, 0], &[0, 1], &[], &[]);
        let (_, rs) = solve_quantisation(&p, &spec, &suite, &NlieOptions::default()).unwrap();
        assert!(rs.degenerate);
        assert!((rs.entries[0].root - rs.entries[1].root).norm() < 1e-8);
    }

    #[test]
    fn synthetic_string_is_flagged() {
        let y = C64::new(0.4, -0.2);
        let pts = [y, y - I * 1.3 + C64::new(1e-12, 0.0)];
        assert_eq!(string_candidates(&pts, 1.3, 1e-6), vec![(0, 1)]);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [64.0, 128.0, 256.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(-2)).collect();
        assert!((loglog_slope(&x, &y) + 2.0).abs() < 1e-12);
    }
}
