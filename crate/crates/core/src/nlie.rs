//! Fixed-point solution of the non-linear integral equation for the auxiliary function u.
//!
//! u is kept in a merged representation
//!
//!   u(λ) = g(λ) − Σ_i w_i K(λ − x_i) σ_i,   σ = (id + K)⁻¹ g on the Nyström nodes of [−q, q],
//!   g(λ) = D(λ) − iπ𝔰T − iT Σ_y m_y θ(λ − y) + Σ_j a_j K(λ − ν_j),
//!
//! where D is ε₀ or h − T𝔴_N and the point sources (ν_j, a_j) discretise the
//! segment corrections ∫_q^{q⁺}, ∫_{q⁻}^{−q} and the small logarithms
//! T ln(1 + e^{∓u/T}) on the contour.  The contour is parametrised by w = u(μ):
//! real windows [−δ, δ] through the zeroes q^{(±)}, straight legs in the w-plane
//! that leave the windows towards the pole at −iζ/2, and circular arcs around the
//! pole only when the legs reach the disk before the logarithms have decayed.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contours::{eps_inverse, newton_fn, winding_number, Branch};
use crate::core_types::{reduce_ipi, ModelParams, SignedMultiset, Trotter, C64, I};
use crate::error::{QtmError, Result};
use crate::integral_equations::{trotter_dressed, DressedSuite, TrotterDressed};
use crate::quadrature::gl;
use crate::special_functions::{eps0, eps0_d, kern, ln1p_c, theta_v, trotter_cut_halfwidth, wn, wn_d};

/// Σ_j c_j K(λ − ν_j) with the exponentials of the nodes cached.
#[derive(Debug, Clone, Default)]
pub struct KernelSum {
    s2: f64,
    c2: f64,
    ep: Vec<C64>,
    em: Vec<C64>,
    coef: Vec<C64>,
}

impl KernelSum {
    pub fn new(zeta: f64, nodes: &[C64], coef: &[C64]) -> Self {
        let mut ep = Vec::with_capacity(nodes.len());
        let mut em = Vec::with_capacity(nodes.len());
        for &n in nodes {
            let z = reduce_ipi(n);
            ep.push((2.0 * z).exp());
            em.push((-2.0 * z).exp());
        }
        KernelSum { s2: (2.0 * zeta).sin(), c2: (2.0 * zeta).cos(), ep, em, coef: coef.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.coef.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coef.is_empty()
    }

    /// (Σ c K(λ − ν), Σ c K′(λ − ν)).
    pub fn eval(&self, l: C64) -> (C64, C64) {
        if self.coef.is_empty() {
            return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        }
        let z = reduce_ipi(l);
        let a = (2.0 * z).exp();
        let b = (-2.0 * z).exp();
        let mut v = C64::new(0.0, 0.0);
        let mut d = C64::new(0.0, 0.0);
        for j in 0..self.coef.len() {
            let x = a * self.em[j];
            let y = b * self.ep[j];
            let ch = 0.5 * (x + y);
            let sh = 0.5 * (x - y);
            let inv = 1.0 / (ch - self.c2);
            let c = self.coef[j] * inv;
            v += c;
            d -= 2.0 * c * sh * inv;
        }
        (v * (self.s2 / PI), d * (self.s2 / PI))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RootKind {
    Particle,
    Hole,
}

/// A root fixed by a quantisation condition u(r) = ±2πiTυ_α(n + ½).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootTarget {
    pub side: Branch,
    pub kind: RootKind,
    pub n: i64,
}

impl RootTarget {
    pub fn target(&self, t: f64) -> C64 {
        let v = self.side.upsilon() * 2.0 * PI * t * (self.n as f64 + 0.5);
        match self.kind {
            RootKind::Particle => C64::new(0.0, v),
            RootKind::Hole => C64::new(0.0, -v),
        }
    }

    /// +1 for particles, −1 for holes.
    pub fn mult(&self) -> i64 {
        match self.kind {
            RootKind::Particle => 1,
            RootKind::Hole => -1,
        }
    }

    /// Order-0 position ε_α⁻¹(target) at temperature t.
    pub fn seed(&self, suite: &DressedSuite, t: f64) -> Result<C64> {
        eps_inverse(self.side, self.target(t), suite)
    }
}

/// Excitation data entering the equation: roots held fixed, roots solved by
/// quantisation, and the spin.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct XConfig {
    pub fixed: SignedMultiset,
    pub roots: Vec<RootTarget>,
    pub spin: i64,
}

impl XConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn n_particles(&self) -> i64 {
        let f: i64 = self.fixed.entries().iter().filter(|e| e.1 > 0).map(|e| e.1).sum();
        f + self.roots.iter().filter(|r| r.kind == RootKind::Particle).count() as i64
    }

    pub fn n_holes(&self) -> i64 {
        let f: i64 = self.fixed.entries().iter().filter(|e| e.1 < 0).map(|e| -e.1).sum();
        f + self.roots.iter().filter(|r| r.kind == RootKind::Hole).count() as i64
    }

    /// 𝔪 = −𝔰 − |particles| + |holes|.
    pub fn monodromy(&self) -> i64 {
        -self.spin - self.n_particles() + self.n_holes()
    }

    pub fn n_roots(&self) -> usize {
        (self.n_particles() + self.n_holes()) as usize
    }

    /// Distinct targets with their multiplicities.
    fn grouped(&self) -> Vec<(RootTarget, f64)> {
        let mut out: Vec<(RootTarget, f64)> = Vec::new();
        for r in &self.roots {
            if let Some(e) = out.iter_mut().find(|e| e.0 == *r) {
                e.1 += r.mult() as f64;
            } else {
                out.push((*r, r.mult() as f64));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlieOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Slope of the legs in the w-plane.
    pub kappa: f64,
    pub gl_nodes: usize,
    /// Panel length along windows and legs, in units of T.
    pub panel: f64,
    /// Fine panels end once Re|w|/T exceeds this.
    pub decay: f64,
    /// Legs continue on coarse panels up to |Re w| = tail, so the contour does not
    /// shrink with T.
    pub tail: f64,
    /// Disk radius override; default max(c_d T, 2 J sin ζ/(NT)).
    pub radius: Option<f64>,
    pub root_tol: f64,
}

impl Default for NlieOptions {
    fn default() -> Self {
        NlieOptions {
            tol: 1e-10,
            max_iter: 60,
            kappa: 0.5,
            gl_nodes: 12,
            panel: 2.0,
            decay: 41.5,
            tail: 3.0,
            radius: None,
            root_tol: 1e-12,
        }
    }
}

/// Driving term of the equation.
#[derive(Debug, Clone)]
struct Driving {
    p: ModelParams,
}

impl Driving {
    fn eval(&self, l: C64) -> (C64, C64) {
        match self.p.trotter {
            Trotter::Infinite => (eps0(l, &self.p), eps0_d(l, &self.p)),
            Trotter::Finite(n) => (C64::new(self.p.h, 0.0) - self.p.t * wn(l, &self.p, n), -self.p.t * wn_d(l, &self.p, n)),
        }
    }
}

/// One instance of the merged representation.
#[derive(Debug, Clone)]
struct UState {
    spin: i64,
    thetas: Vec<(C64, f64)>,
    src_nodes: Vec<C64>,
    src_coef: Vec<C64>,
    src: KernelSum,
    sigma: Vec<C64>,
    seg: KernelSum,
}

impl UState {
    fn g(&self, drv: &Driving, l: C64) -> (C64, C64) {
        let p = &drv.p;
        let (mut v, mut d) = drv.eval(l);
        v -= I * (PI * self.spin as f64 * p.t);
        for &(y, m) in &self.thetas {
            v -= I * (p.t * m) * theta_v(l - y, p.zeta);
            d -= I * (2.0 * PI * p.t * m) * kern(l - y, p.zeta);
        }
        let (sv, sd) = self.src.eval(l);
        (v + sv, d + sd)
    }

    fn eval(&self, drv: &Driving, l: C64) -> (C64, C64) {
        let (g, gd) = self.g(drv, l);
        let (c, cd) = self.seg.eval(l);
        (g - c, gd - cd)
    }

    fn build(drv: &Driving, suite: &DressedSuite, spin: i64, thetas: Vec<(C64, f64)>, src_nodes: Vec<C64>, src_coef: Vec<C64>) -> Self {
        let zeta = drv.p.zeta;
        let src = KernelSum::new(zeta, &src_nodes, &src_coef);
        let mut st = UState {
            spin,
            thetas,
            src_nodes,
            src_coef,
            src,
            sigma: Vec::new(),
            seg: KernelSum::default(),
        };
        let rhs: Vec<C64> = suite.seg.x.iter().map(|&x| st.g(drv, C64::new(x, 0.0)).0).collect();
        st.sigma = suite.seg.solve(&rhs);
        let nodes: Vec<C64> = suite.seg.x.iter().map(|&x| C64::new(x, 0.0)).collect();
        let coef: Vec<C64> = suite.seg.w.iter().zip(&st.sigma).map(|(&w, &s)| s * w).collect();
        st.seg = KernelSum::new(zeta, &nodes, &coef);
        st
    }
}

/// Contour pieces in counterclockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NliePiece {
    ROuterLeg,
    RWindow,
    RInnerLeg,
    TopArc,
    LInnerLeg,
    LWindow,
    LOuterLeg,
    BottomArc,
}

/// Quadrature node of the contour: position, value of the generating function,
/// its derivative and the oriented dλ weight.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContourNode {
    pub mu: C64,
    pub w: C64,
    pub du: C64,
    pub dl: C64,
    /// Re u > 0 side of the contour.
    pub outer: bool,
    pub piece: NliePiece,
}

impl ContourNode {
    /// ln(1 + e^{∓w/T}) with the sign making the exponential small.
    pub fn small_log(&self, t: f64) -> C64 {
        if self.outer {
            ln1p_c((-self.w / t).exp())
        } else {
            ln1p_c((self.w / t).exp())
        }
    }

    /// ℒn[1 + e^{−u/T}] with the branch of the contour.
    pub fn full_log(&self, t: f64) -> C64 {
        if self.outer {
            self.small_log(t)
        } else {
            -self.w / t + self.small_log(t)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NlieContour {
    pub q_plus: C64,
    pub q_minus: C64,
    pub delta: f64,
    pub radius: f64,
    pub centre: C64,
    pub nodes: Vec<ContourNode>,
    /// Nodes and dλ weights of the paths q → q⁺ and q⁻ → −q.
    pub seg_ends: Vec<(C64, C64)>,
    pub top_arc: bool,
    pub bottom_arc: bool,
}

impl NlieContour {
    pub fn polyline(&self) -> Vec<C64> {
        self.nodes.iter().map(|n| n.mu).collect()
    }

    /// Closed polyline; truncated legs are joined by straight segments.
    pub fn closed_polyline(&self) -> Vec<C64> {
        let mut p = self.polyline();
        if let Some(&f) = p.first() {
            p.push(f);
        }
        p
    }

    /// Boundary of the region between the inner part of the contour and the segment [q⁻, q⁺].
    pub fn inner_polyline(&self) -> Vec<C64> {
        let mut out = vec![self.q_plus];
        for n in &self.nodes {
            let take = match n.piece {
                NliePiece::RWindow | NliePiece::LWindow => n.w.re < 0.0,
                NliePiece::RInnerLeg | NliePiece::TopArc | NliePiece::LInnerLeg => true,
                _ => false,
            };
            if take {
                out.push(n.mu);
            }
        }
        out.push(self.q_minus);
        out.push(self.q_plus);
        out
    }

    pub fn in_disk(&self, l: C64) -> bool {
        (reduce_ipi(l) - self.centre).norm() <= self.radius
    }

    /// −(1/2πiT) ∮ u′/(1 + e^{u/T}) dλ, evaluated with the inner/outer splitting.
    pub fn index(&self, t: f64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for n in &self.nodes {
            let dw = n.du * n.dl;
            if n.outer {
                s += dw / (1.0 + (n.w / t).exp());
            } else {
                s -= dw / (1.0 + (-n.w / t).exp());
            }
        }
        -s / (2.0 * PI * I * t)
    }

    /// Sign changes of Re u along the closed contour.
    pub fn sign_changes(&self) -> usize {
        let n = self.nodes.len();
        (0..n).filter(|&k| (self.nodes[k].w.re > 0.0) != (self.nodes[(k + 1) % n].w.re > 0.0)).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("curve_id,idx,re,im\n");
        for (k, n) in self.nodes.iter().enumerate() {
            s.push_str(&format!("{:?},{},{:.16e},{:.16e}\n", n.piece, k, n.mu.re, n.mu.im));
        }
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub residual: f64,
    pub damped: bool,
    pub n_sources: usize,
}

const COARSE_PANEL: f64 = 0.25;

type UFn<'a> = dyn Fn(C64) -> (C64, C64) + 'a;

struct Path {
    samples: Vec<(f64, C64)>,
    hit: Option<f64>,
}

fn newton_tol(w: C64) -> f64 {
    1e-13 * (1.0 + w.norm())
}

/// Continues μ(s) with f(μ(s)) = w(s) from s = 0 to `s_max`, stopping on the disk.
fn march(f: &UFn, w: &dyn Fn(f64) -> C64, mu0: C64, s_max: f64, h0: f64, disk: (C64, f64)) -> Result<Path> {
    let mut samples = vec![(0.0, mu0)];
    let (mut s, mut mu, mut h) = (0.0, mu0, h0);
    let inside = |m: C64| (reduce_ipi(m) - disk.0).norm() <= disk.1;
    let mut steps = 0usize;
    while s < s_max {
        steps += 1;
        if steps > 200_000 {
            return Err(QtmError::NoConvergence { what: "contour march", iters: steps, residual: s_max - s });
        }
        let s1 = (s + h).min(s_max);
        let (v, d) = f(mu);
        let pred = mu + (w(s1) - v) / d;
        let ok = newton_fn(&|l| f(l), w(s1), pred, newton_tol(w(s1)))
            .filter(|m1| (m1 - pred).norm() <= 0.5 * (pred - mu).norm() + 1e-10);
        match ok {
            Some(m1) => {
                if inside(m1) {
                    let (mut a, mut b, mut ma) = (s, s1, mu);
                    for _ in 0..60 {
                        let c = 0.5 * (a + b);
                        let mc = newton_fn(&|l| f(l), w(c), ma, newton_tol(w(c))).ok_or(QtmError::WindowEscape(ma))?;
                        if inside(mc) {
                            b = c;
                        } else {
                            a = c;
                            ma = mc;
                        }
                    }
                    samples.push((a, ma));
                    return Ok(Path { samples, hit: Some(a) });
                }
                samples.push((s1, m1));
                s = s1;
                mu = m1;
                h = (h * 1.5).min(h0.max(0.05 * w(s).norm()));
            }
            None => {
                h *= 0.5;
                if h < 1e-9 * h0 {
                    return Err(QtmError::WindowEscape(mu));
                }
            }
        }
    }
    Ok(Path { samples, hit: None })
}

struct Ctx<'a> {
    drv: &'a Driving,
    suite: &'a DressedSuite,
    opts: &'a NlieOptions,
    delta: f64,
    radius: f64,
}

impl<'a> Ctx<'a> {
    fn t(&self) -> f64 {
        self.drv.p.t
    }

    fn centre(&self) -> C64 {
        C64::new(0.0, -self.drv.p.zeta / 2.0)
    }

    /// GL nodes on [0, s_end] along a path with known samples; panels of length
    /// `panel`·T up to `s_fine`, coarse beyond.
    #[allow(clippy::too_many_arguments)]
    fn place(
        &self,
        f: &UFn,
        w: &dyn Fn(f64) -> C64,
        path: &Path,
        s_end: f64,
        s_fine: f64,
        dw_sign: C64,
        outer: bool,
        piece: NliePiece,
    ) -> Result<Vec<ContourNode>> {
        let t = self.t();
        let rule = gl(self.opts.gl_nodes);
        let fine = s_end.min(s_fine);
        let nf = (fine / (self.opts.panel * t)).ceil().max(1.0) as usize;
        let mut bounds: Vec<f64> = (0..=nf).map(|k| fine * k as f64 / nf as f64).collect();
        if s_end > fine {
            let nc = ((s_end - fine) / COARSE_PANEL).ceil().max(1.0) as usize;
            bounds.extend((1..=nc).map(|k| fine + (s_end - fine) * k as f64 / nc as f64));
        }
        let np = bounds.len() - 1;
        let mut out = Vec::with_capacity(np * rule.len());
        let mut k = 0usize;
        for pi in 0..np {
            let (a, b) = (bounds[pi], bounds[pi + 1]);
            for &(x, wt) in &rule {
                let s = 0.5 * (a + b) + 0.5 * (b - a) * x;
                while k + 1 < path.samples.len() && path.samples[k + 1].0 <= s {
                    k += 1;
                }
                let seed = path.samples[k].1;
                let mu = newton_fn(&|l| f(l), w(s), seed, newton_tol(w(s))).ok_or(QtmError::WindowEscape(seed))?;
                let (v, du) = f(mu);
                let dw = dw_sign * (0.5 * (b - a) * wt);
                out.push(ContourNode { mu, w: v, du, dl: dw / du, outer, piece });
            }
        }
        Ok(out)
    }

    fn arc(&self, f: &UFn, from: C64, to: C64, outer: bool, piece: NliePiece) -> Result<Vec<ContourNode>> {
        let c = self.centre();
        let r = self.radius;
        let t = self.t();
        let a0 = (from - c).arg();
        let mut a1 = (to - c).arg();
        if a1 <= a0 {
            a1 += 2.0 * PI;
        }
        let dmax = f(from).1.norm().max(f(to).1.norm());
        let h = (2.0 * t / (dmax * r)).min(0.2);
        let np = ((a1 - a0) / h).ceil().max(1.0) as usize;
        let rule = gl(self.opts.gl_nodes);
        let mut out = Vec::with_capacity(np * rule.len());
        for pi in 0..np {
            let a = a0 + (a1 - a0) * pi as f64 / np as f64;
            let b = a0 + (a1 - a0) * (pi + 1) as f64 / np as f64;
            for &(x, wt) in &rule {
                let ang = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let e = C64::from_polar(r, ang);
                let mu = c + e;
                let (v, du) = f(mu);
                if (outer && v.re < 0.0) || (!outer && v.re > 0.0) {
                    return Err(QtmError::GeometryDegenerate(format!("Re u changes sign on the arc at {mu}")));
                }
                out.push(ContourNode { mu, w: v, du, dl: I * e * (0.5 * (b - a) * wt), outer, piece });
            }
        }
        Ok(out)
    }

    fn zero_near(&self, f: &UFn, seed: C64) -> Result<C64> {
        let z = newton_fn(&|l| f(l), C64::new(0.0, 0.0), seed, 1e-14).ok_or(QtmError::ZeroNotBracketed(seed.re))?;
        if (z - seed).norm() > 0.5 * self.suite.q.max(0.1) {
            return Err(QtmError::ZeroNotBracketed(seed.re));
        }
        Ok(z)
    }

    /// Contour adapted to f together with its quadrature.
    fn contour(&self, f: &UFn, seeds: (C64, C64)) -> Result<NlieContour> {
        let t = self.t();
        let delta = self.delta;
        let q_plus = self.zero_near(f, seeds.0)?;
        let q_minus = self.zero_near(f, seeds.1)?;
        let disk = (self.centre(), self.radius);
        let h0 = 0.25 * t;
        let kappa = self.opts.kappa;

        // windows: s ↦ ±s from the zero
        let wp = |s: f64| C64::new(s, 0.0);
        let wm = |s: f64| C64::new(-s, 0.0);
        let r_hi = march(f, &wp, q_plus, delta, h0, disk)?;
        let r_lo = march(f, &wm, q_plus, delta, h0, disk)?;
        let l_hi = march(f, &wp, q_minus, delta, h0, disk)?;
        let l_lo = march(f, &wm, q_minus, delta, h0, disk)?;
        if r_hi.hit.is_some() || r_lo.hit.is_some() || l_hi.hit.is_some() || l_lo.hit.is_some() {
            return Err(QtmError::GeometryDegenerate("window reaches the disk".into()));
        }
        let end = |p: &Path| p.samples.last().unwrap().1;

        let s_end = ((self.opts.decay * t - delta) / kappa).max(0.0);
        let s_tail = s_end.max((self.opts.tail - delta) / kappa);
        let dirs = [
            (C64::new(kappa, -1.0), delta, end(&r_hi)),  // R outer
            (C64::new(-kappa, -1.0), -delta, end(&r_lo)), // R inner
            (C64::new(-kappa, 1.0), -delta, end(&l_lo)),  // L inner
            (C64::new(kappa, 1.0), delta, end(&l_hi)),   // L outer
        ];
        let leg_w = |k: usize| {
            let (d, w0, _) = dirs[k];
            move |s: f64| C64::new(w0, 0.0) + d * s
        };
        let mut legs: Vec<Path> = Vec::with_capacity(4);
        for k in 0..4 {
            let w = leg_w(k);
            legs.push(march(f, &w, dirs[k].2, s_tail, h0, disk)?);
        }
        // a pair of legs that meets the disk is continued down to it and closed by an arc
        let far = 1e4 * (1.0 + 1.0 / t);
        let mut arc_pair = [false, false];
        for (pair, (a, b)) in [(0usize, 3usize), (1, 2)].into_iter().enumerate() {
            let early = |p: &Path| p.hit.map_or(false, |h| h < s_end);
            if early(&legs[a]) || early(&legs[b]) {
                arc_pair[pair] = true;
                for k in [a, b] {
                    if legs[k].hit.is_none() {
                        let w = leg_w(k);
                        let p = march(f, &w, dirs[k].2, far, h0, disk)?;
                        if p.hit.is_none() {
                            return Err(QtmError::GeometryDegenerate("leg does not reach the disk".into()));
                        }
                        legs[k] = p;
                    }
                }
            }
        }

        let mut nodes = Vec::new();
        let leg_len = |p: &Path| p.hit.unwrap_or(s_tail);
        // R outer leg, traversed towards the window
        {
            let w = leg_w(0);
            let mut v = self.place(f, &w, &legs[0], leg_len(&legs[0]), s_end, -dirs[0].0, true, NliePiece::ROuterLeg)?;
            v.reverse();
            nodes.extend(v);
        }
        // R window from +δ to −δ
        {
            let mut v = self.place(f, &wp, &r_hi, delta, delta, C64::new(-1.0, 0.0), true, NliePiece::RWindow)?;
            v.reverse();
            nodes.extend(v);
            let v = self.place(f, &wm, &r_lo, delta, delta, C64::new(-1.0, 0.0), false, NliePiece::RWindow)?;
            nodes.extend(v);
        }
        {
            let w = leg_w(1);
            nodes.extend(self.place(f, &w, &legs[1], leg_len(&legs[1]), s_end, dirs[1].0, false, NliePiece::RInnerLeg)?);
        }
        if arc_pair[1] {
            let from = legs[1].samples.last().unwrap().1;
            let to = legs[2].samples.last().unwrap().1;
            nodes.extend(self.arc(f, from, to, false, NliePiece::TopArc)?);
        }
        {
            let w = leg_w(2);
            let mut v = self.place(f, &w, &legs[2], leg_len(&legs[2]), s_end, -dirs[2].0, false, NliePiece::LInnerLeg)?;
            v.reverse();
            nodes.extend(v);
        }
        // L window from −δ to +δ
        {
            let mut v = self.place(f, &wm, &l_lo, delta, delta, C64::new(1.0, 0.0), false, NliePiece::LWindow)?;
            v.reverse();
            nodes.extend(v);
            nodes.extend(self.place(f, &wp, &l_hi, delta, delta, C64::new(1.0, 0.0), true, NliePiece::LWindow)?);
        }
        {
            let w = leg_w(3);
            nodes.extend(self.place(f, &w, &legs[3], leg_len(&legs[3]), s_end, dirs[3].0, true, NliePiece::LOuterLeg)?);
        }
        if arc_pair[0] {
            let from = legs[3].samples.last().unwrap().1;
            let to = legs[0].samples.last().unwrap().1;
            nodes.extend(self.arc(f, from, to, true, NliePiece::BottomArc)?);
        }

        let q = self.suite.q;
        let mut seg_ends = Vec::new();
        for (a, b) in [(C64::new(q, 0.0), q_plus), (q_minus, C64::new(-q, 0.0))] {
            for &(x, wt) in &gl(self.opts.gl_nodes) {
                seg_ends.push((a + (b - a) * (0.5 * (1.0 + x)), (b - a) * (0.5 * wt)));
            }
        }
        Ok(NlieContour {
            q_plus,
            q_minus,
            delta,
            radius: self.radius,
            centre: self.centre(),
            nodes,
            seg_ends,
            top_arc: arc_pair[1],
            bottom_arc: arc_pair[0],
        })
    }

    /// Point sources of 𝓛[f] on the contour of f.
    fn sources(&self, f: &UFn, c: &NlieContour) -> (Vec<C64>, Vec<C64>) {
        let t = self.t();
        let mut nodes = Vec::with_capacity(c.nodes.len() + c.seg_ends.len());
        let mut coef = Vec::with_capacity(nodes.capacity());
        for n in &c.nodes {
            let a = -t * n.dl * n.small_log(t);
            if a.norm() > 1e-22 {
                nodes.push(n.mu);
                coef.push(a);
            }
        }
        for &(nu, w) in &c.seg_ends {
            let a = -w * f(nu).0;
            if a.norm() > 1e-22 {
                nodes.push(nu);
                coef.push(a);
            }
        }
        (nodes, coef)
    }

    /// Newton on the solved roots with the sources held fixed.
    fn solve_roots(
        &self,
        spin: i64,
        fixed: &[(C64, f64)],
        targets: &[(RootTarget, f64)],
        seeds: &[C64],
        src: (Vec<C64>, Vec<C64>),
    ) -> Result<(UState, Vec<C64>, f64)> {
        let t = self.t();
        let mut roots = seeds.to_vec();
        let build = |roots: &[C64]| {
            let mut th = fixed.to_vec();
            th.extend(roots.iter().zip(targets).map(|(&r, tg)| (r, tg.1)));
            UState::build(self.drv, self.suite, spin, th, src.0.clone(), src.1.clone())
        };
        let n = roots.len();
        let mut st = build(&roots);
        if n == 0 {
            return Ok((st, roots, 1.0));
        }
        let mut cond;
        for it in 0..60 {
            let mut fv = Vec::with_capacity(n);
            let mut du = Vec::with_capacity(n);
            for (k, &r) in roots.iter().enumerate() {
                let (v, d) = st.eval(self.drv, r);
                fv.push(v - targets[k].0.target(t));
                du.push(d);
            }
            let res = fv.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mut jac = DMatrix::<C64>::zeros(n, n);
            for b in 0..n {
                let dens = self.suite.resolvent_density(roots[b]);
                for a in 0..n {
                    let r = self.suite.resolvent_with(roots[a], roots[b], &dens);
                    jac[(a, b)] = 2.0 * PI * I * t * targets[b].1 * r;
                }
            }
            for a in 0..n {
                jac[(a, a)] += du[a];
            }
            let sv = jac.clone().singular_values();
            cond = sv.max() / sv.min();
            if res < self.opts.root_tol {
                return Ok((st, roots, cond));
            }
            let rhs = nalgebra::DVector::from_vec(fv);
            let step = jac.lu().solve(&rhs).ok_or_else(|| QtmError::NewtonDiverged("singular root Jacobian".into()))?;
            let big = step.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let scale = if big > 0.1 { 0.1 / big } else { 1.0 };
            for a in 0..n {
                roots[a] -= step[a] * scale;
            }
            st = build(&roots);
            if it == 59 || !roots.iter().all(|r| r.is_finite()) {
                return Err(QtmError::NewtonDiverged(format!("root residual {res:e}")));
            }
        }
        Err(QtmError::NewtonDiverged("root system".into()))
    }
}

/// Solved auxiliary function with its contour and diagnostics.
#[derive(Debug, Clone)]
pub struct NlieSolution {
    pub params: ModelParams,
    pub suite: DressedSuite,
    pub opts: NlieOptions,
    pub config: XConfig,
    /// Positions of `config.roots`, in order.
    pub roots: Vec<C64>,
    pub contour: NlieContour,
    pub log: Vec<IterRecord>,
    /// Largest ratio r_{k+1}/r_k after the first step.
    pub rho: f64,
    /// Numerically evaluated monodromy index.
    pub index: C64,
    pub jacobian_cond: f64,
    trotter: Option<TrotterDressed>,
    drv: Driving,
    state: UState,
}

/// JSON view of a solution.
#[derive(Debug, Clone, Serialize)]
pub struct NlieRecord {
    pub trotter: Trotter,
    pub t: f64,
    pub spin: i64,
    pub monodromy: i64,
    pub index_re: f64,
    pub index_im: f64,
    pub q_plus: [f64; 2],
    pub q_minus: [f64; 2],
    pub roots: Vec<[f64; 2]>,
    pub iterations: Vec<IterRecord>,
    pub rho: f64,
    pub contour: Vec<[f64; 2]>,
    pub u: Vec<[f64; 2]>,
}

fn pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

impl NlieSolution {
    pub fn u(&self, l: C64) -> C64 {
        self.state.eval(&self.drv, l).0
    }

    pub fn u_d(&self, l: C64) -> C64 {
        self.state.eval(&self.drv, l).1
    }

    pub fn u_pair(&self, l: C64) -> (C64, C64) {
        self.state.eval(&self.drv, l)
    }

    pub fn t(&self) -> f64 {
        self.params.t
    }

    pub fn spin(&self) -> i64 {
        self.config.spin
    }

    /// 𝔪 implied by the excitation bookkeeping.
    pub fn monodromy(&self) -> i64 {
        self.config.monodromy()
    }

    /// Every root entering the equation, with multiplicity (+ particle, − hole).
    pub fn all_roots(&self) -> SignedMultiset {
        let mut m = self.config.fixed.clone();
        for (r, tg) in self.roots.iter().zip(&self.config.roots) {
            m.add(*r, tg.mult());
        }
        m
    }

    /// ε or W_N, the T → 0 limit of u without excitations.
    pub fn driving_dressed(&self, l: C64) -> C64 {
        match &self.trotter {
            Some(td) => td.value(l, &self.suite.seg),
            None => self.suite.eps(l),
        }
    }

    pub fn residual(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn fermi_residual(&self) -> f64 {
        self.u(self.contour.q_plus).norm().max(self.u(self.contour.q_minus).norm())
    }

    /// max |u − D − T u₁|/T² over the contour outside the disk.
    pub fn membership(&self) -> Result<f64> {
        let u1 = U1::new(&self.all_roots(), self.spin(), &self.suite);
        let t = self.t();
        let mut m: f64 = 0.0;
        for n in &self.contour.nodes {
            if (n.mu - self.contour.centre).norm() <= self.params.c_d * t {
                continue;
            }
            let d = n.w - self.driving_dressed(n.mu) - t * u1.eval(n.mu)?;
            m = m.max(d.norm() / (t * t));
        }
        Ok(m)
    }

    /// Stored and recomputed u agree at the contour nodes.
    pub fn node_values(&self) -> Vec<(C64, C64)> {
        self.contour.nodes.iter().map(|n| (n.mu, n.w)).collect()
    }

    pub fn record(&self) -> NlieRecord {
        NlieRecord {
            trotter: self.params.trotter,
            t: self.params.t,
            spin: self.spin(),
            monodromy: self.monodromy(),
            index_re: self.index.re,
            index_im: self.index.im,
            q_plus: pair(self.contour.q_plus),
            q_minus: pair(self.contour.q_minus),
            roots: self.roots.iter().map(|&r| pair(r)).collect(),
            iterations: self.log.clone(),
            rho: self.rho,
            contour: self.contour.nodes.iter().map(|n| pair(n.mu)).collect(),
            u: self.contour.nodes.iter().map(|n| pair(n.w)).collect(),
        }
    }

    /// Right-hand side of the equation at ξ, with the segment integral taken on an
    /// independent Gauss grid instead of the Nyström representation.
    pub fn rhs_direct(&self, xi: C64, panels: usize, order: usize) -> C64 {
        let p = &self.params;
        let t = p.t;
        let mut v = self.drv.eval(xi).0 - I * (PI * self.spin() as f64 * t);
        for &(y, m) in &self.state.thetas {
            v -= I * (t * m) * theta_v(xi - y, p.zeta);
        }
        let q = self.suite.q;
        let mut path = vec![(self.contour.q_minus, C64::new(-q, 0.0), 1usize)];
        path.push((C64::new(-q, 0.0), C64::new(q, 0.0), panels));
        path.push((C64::new(q, 0.0), self.contour.q_plus, 1));
        let rule = gl(order);
        for (a, b, np) in path {
            for k in 0..np {
                let pa = a + (b - a) * (k as f64 / np as f64);
                let pb = a + (b - a) * ((k + 1) as f64 / np as f64);
                for &(x, w) in &rule {
                    let l = 0.5 * (pa + pb) + 0.5 * (pb - pa) * x;
                    v -= kern(xi - l, p.zeta) * self.u(l) * (0.5 * (pb - pa) * w);
                }
            }
        }
        for n in &self.contour.nodes {
            v -= t * kern(xi - n.mu, p.zeta) * n.small_log(t) * n.dl;
        }
        v
    }

    /// Continuation of u to ξ.  The representation is corrected when ξ ∓ iζ lies in
    /// the region enclosed by the contour (by ∓Tℒn there) or between its inner part
    /// and [q⁻, q⁺] (by ±u there).
    pub fn analytic_continuation(&self, xi: C64) -> Result<C64> {
        let t = self.t();
        let zeta = self.params.zeta;
        let closed = self.contour.closed_polyline();
        let inner = self.contour.inner_polyline();
        let tol = 1e-6;
        let mut u = self.u(xi);
        for sgn in [-1.0, 1.0] {
            let l0 = reduce_ipi(xi + I * (sgn * zeta));
            if dist_to_polyline(&closed, l0) < tol || dist_to_polyline(&inner, l0) < tol {
                return Err(QtmError::UndecidableRegion(l0));
            }
            if winding_number(&closed, l0).abs() > 0.5 {
                let (w, _) = self.u_pair(l0);
                let lg = if w.re >= 0.0 { ln1p_c((-w / t).exp()) } else { -w / t + ln1p_c((w / t).exp()) };
                u += sgn * t * lg;
            } else if winding_number(&inner, l0).abs() > 0.5 {
                u -= sgn * self.u(l0);
            }
        }
        Ok(u)
    }
}

pub fn dist_to_polyline(poly: &[C64], z: C64) -> f64 {
    let mut best = f64::INFINITY;
    for w in poly.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b - a;
        let len2 = ab.norm_sqr();
        let s = if len2 > 0.0 { ((z - a) * ab.conj()).re / len2 } else { 0.0 };
        let p = a + ab * s.clamp(0.0, 1.0);
        best = best.min((z - p).norm());
    }
    best
}

fn disk_radius(p: &ModelParams, opts: &NlieOptions) -> f64 {
    if let Some(r) = opts.radius {
        return r;
    }
    let a = match p.trotter {
        Trotter::Finite(n) => trotter_cut_halfwidth(p, n),
        Trotter::Infinite => 0.0,
    };
    (p.c_d * p.t).max(2.0 * a)
}

fn check_config(p: &ModelParams, cfg: &XConfig, suite: &DressedSuite) -> Result<()> {
    if cfg.monodromy() != 0 {
        return Err(QtmError::HypothesisViolated(format!(
            "index 𝔪 = {} but the adapted contour carries index 0 (need 𝔰 + particles = holes)",
            cfg.monodromy()
        )));
    }
    let hz = C64::new(0.0, p.zeta / 2.0);
    let r = (p.c_d * p.t).max(1e-3);
    for &(y, _) in cfg.fixed.entries() {
        let z = reduce_ipi(y);
        if (z - hz).norm() < r || (z + hz).norm() < r {
            return Err(QtmError::HypothesisViolated(format!("root {y} inside the exclusion disk")));
        }
        if z.im.abs() >= p.zeta {
            return Err(QtmError::HypothesisViolated(format!("root {y} outside the strip |Im| < ζ")));
        }
    }
    if suite.q <= 0.0 {
        return Err(QtmError::OutOfRegime("no Fermi point".into()));
    }
    Ok(())
}

/// Fixed-point iteration u_{k+1} = 𝓛_T[u_k] from u₀ = D + T u₁, with the
/// quantisation conditions of the solved roots re-imposed in every sweep.
pub fn fixed_point_solve(p: &ModelParams, cfg: &XConfig, suite: &DressedSuite, opts: &NlieOptions) -> Result<NlieSolution> {
    fixed_point_solve_seeded(p, cfg, suite, opts, None)
}

/// As [`fixed_point_solve`], with explicit starting positions for `cfg.roots`.
pub fn fixed_point_solve_seeded(
    p: &ModelParams,
    cfg: &XConfig,
    suite: &DressedSuite,
    opts: &NlieOptions,
    seeds: Option<&[C64]>,
) -> Result<NlieSolution> {
    check_config(p, cfg, suite)?;
    let drv = Driving { p: p.clone() };
    let trotter = match p.trotter {
        Trotter::Finite(_) => Some(trotter_dressed(p, suite)?),
        Trotter::Infinite => None,
    };
    let ctx = Ctx { drv: &drv, suite, opts, delta: p.delta_t(cfg.n_roots()), radius: disk_radius(p, opts) };
    let fixed: Vec<(C64, f64)> = cfg.fixed.entries().iter().map(|&(z, m)| (z, m as f64)).collect();
    let grouped = cfg.grouped();
    let mut start = Vec::with_capacity(grouped.len());
    for (tg, _) in &grouped {
        let given = seeds.and_then(|s| cfg.roots.iter().position(|r| r == tg).map(|k| s[k]));
        start.push(match given {
            Some(z) => z,
            None => tg.seed(suite, p.t)?,
        });
    }
    let seeds = start;
    let (mut state, mut roots, _) = ctx.solve_roots(cfg.spin, &fixed, &grouped, &seeds, (Vec::new(), Vec::new()))?;
    let mut qseeds = (C64::new(suite.q, 0.0), C64::new(-suite.q, 0.0));
    let mut log = Vec::new();
    let mut damped = false;
    let mut prev = f64::INFINITY;
    let mut rho: f64 = 0.0;
    for iter in 1..=opts.max_iter {
        let f = |l: C64| state.eval(&drv, l);
        let c = ctx.contour(&f, qseeds)?;
        qseeds = (c.q_plus, c.q_minus);
        let (mut nodes, mut coef) = ctx.sources(&f, &c);
        if damped {
            coef.iter_mut().for_each(|a| *a *= 0.5);
            nodes.extend(state.src_nodes.iter().copied());
            coef.extend(state.src_coef.iter().map(|a| a * 0.5));
        }
        let n_sources = nodes.len();
        let (new_state, new_roots, new_cond) = ctx.solve_roots(cfg.spin, &fixed, &grouped, &roots, (nodes, coef))?;
        let mut res: f64 = 0.0;
        for n in &c.nodes {
            res = res.max((new_state.eval(&drv, n.mu).0 - n.w).norm());
        }
        for (a, b) in new_state.sigma.iter().zip(&state.sigma) {
            res = res.max((a - b).norm());
        }
        log.push(IterRecord { iter, residual: res, damped, n_sources });
        if iter > 1 && prev.is_finite() && prev > 0.0 {
            rho = rho.max(res / prev);
        }
        state = new_state;
        roots = new_roots;
        let cond = new_cond;
        if res < opts.tol {
            let f = |l: C64| state.eval(&drv, l);
            let contour = ctx.contour(&f, qseeds)?;
            let index = contour.index(p.t);
            let expanded: Vec<C64> = cfg
                .roots
                .iter()
                .map(|r| roots[grouped.iter().position(|g| g.0 == *r).unwrap()])
                .collect();
            return Ok(NlieSolution {
                params: p.clone(),
                suite: suite.clone(),
                opts: opts.clone(),
                config: cfg.clone(),
                roots: expanded,
                contour,
                log,
                rho,
                index,
                jacobian_cond: cond,
                trotter,
                drv,
                state,
            });
        }
        if iter > 1 && res > prev {
            damped = true;
        }
        prev = res;
    }
    Err(QtmError::MaxIterations(opts.max_iter))
}

/// Applies 𝓛_T to an arbitrary function f (value, derivative) with the roots of
/// `sol` held fixed, and returns the image as a closure-ready state.
fn apply_operator(sol: &NlieSolution, f: &UFn) -> Result<UState> {
    let p = &sol.params;
    let ctx = Ctx {
        drv: &sol.drv,
        suite: &sol.suite,
        opts: &sol.opts,
        delta: p.delta_t(sol.config.n_roots()),
        radius: disk_radius(p, &sol.opts),
    };
    let c = ctx.contour(f, (sol.contour.q_plus, sol.contour.q_minus))?;
    let (nodes, coef) = ctx.sources(f, &c);
    Ok(UState::build(&sol.drv, &sol.suite, sol.spin(), sol.state.thetas.clone(), nodes, coef))
}

/// Measured Lipschitz factor ‖𝓛f − 𝓛g‖/‖f − g‖ on a pair of perturbations of the
/// solution of size `amp`·T², sup norms over the contour outside the disk.
pub fn lipschitz_probe(sol: &NlieSolution, amp: f64) -> Result<f64> {
    let t = sol.t();
    let s = amp * t * t;
    let c1 = C64::new(0.7, 0.3) * s;
    let c2 = C64::new(-0.4, 0.5) * s;
    let b1 = move |l: C64| {
        let th = (0.5 * l).tanh();
        (c1 * (1.0 + 0.1 * th), c1 * 0.05 * (1.0 - th * th))
    };
    let b2 = move |l: C64| {
        let ch = (l - 0.2).cosh();
        (c2 * (1.0 + 0.1 / ch), -c2 * 0.1 * (l - 0.2).sinh() / (ch * ch))
    };
    let f = |l: C64| {
        let (u, d) = sol.u_pair(l);
        let (a, ad) = b1(l);
        (u + a, d + ad)
    };
    let g = |l: C64| {
        let (u, d) = sol.u_pair(l);
        let (a, ad) = b2(l);
        (u + a, d + ad)
    };
    let lf = apply_operator(sol, &f)?;
    let lg = apply_operator(sol, &g)?;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for n in &sol.contour.nodes {
        if sol.contour.in_disk(n.mu) {
            continue;
        }
        num = num.max((lf.eval(&sol.drv, n.mu).0 - lg.eval(&sol.drv, n.mu).0).norm());
        den = den.max((b1(n.mu).0 - b2(n.mu).0).norm());
    }
    let factor = num / den;
    if factor >= 1.0 {
        return Err(QtmError::NotContractive(factor));
    }
    Ok(factor)
}

/// u₁(·|𝕏) with the φ densities of the multiset cached.
pub struct U1<'a> {
    suite: &'a DressedSuite,
    spin: i64,
    pts: Vec<(C64, f64, Vec<C64>)>,
}

impl<'a> U1<'a> {
    pub fn new(x: &SignedMultiset, spin: i64, suite: &'a DressedSuite) -> Self {
        let pts = x.entries().iter().map(|&(y, m)| (y, m as f64, suite.phi_density(y))).collect();
        U1 { suite, spin, pts }
    }

    fn check(&self, l: C64) -> Result<()> {
        let z = self.suite.zeta();
        if !l.is_finite() || reduce_ipi(l).im.abs() >= z {
            return Err(QtmError::OutOfDomain(l));
        }
        Ok(())
    }

    pub fn eval(&self, l: C64) -> Result<C64> {
        self.check(l)?;
        let mut v = -I * PI * self.spin as f64 * self.suite.z(l);
        for (y, m, dens) in &self.pts {
            v -= 2.0 * PI * I * *m * self.suite.phi_with(l, *y, dens);
        }
        Ok(v)
    }

    pub fn eval_d(&self, l: C64) -> Result<C64> {
        self.check(l)?;
        let mut v = -I * PI * self.spin as f64 * self.suite.z_d(l);
        for (y, m, dens) in &self.pts {
            v -= 2.0 * PI * I * *m * self.suite.phi_dl_with(l, *y, dens);
        }
        Ok(v)
    }
}

/// u₁(λ|𝕏) = −iπ𝔰Z(λ) − 2πi Σ_y m_y φ(λ, y).
pub fn u1_eval(l: C64, x: &SignedMultiset, s: i64, suite: &DressedSuite) -> Result<C64> {
    U1::new(x, s, suite).eval(l)
}

/// u₂(λ|𝕏) = Σ_σ σ R(λ, σq)/(2ε′(σq)) {u₁(σq|𝕏)² + π²/3}.
pub fn u2_eval(l: C64, x: &SignedMultiset, s: i64, suite: &DressedSuite) -> Result<C64> {
    let u1 = U1::new(x, s, suite);
    u1.check(l)?;
    let mut v = C64::new(0.0, 0.0);
    for sigma in [1.0, -1.0] {
        let sq = C64::new(sigma * suite.q, 0.0);
        let a = u1.eval(sq)?;
        let br = a * a + PI * PI / 3.0;
        v += sigma * suite.resolvent(l, sq) / (2.0 * suite.eps_d(sq)) * br;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral_equations::dressed_suite;
    use crate::test_support::params;
    use std::f64::consts::FRAC_PI_2;

    fn solve(zeta: f64, t: f64, cfg: &XConfig) -> NlieSolution {
        let p = params(zeta, 2.0).with_t(t);
        let suite = dressed_suite(&p, 64).unwrap();
        fixed_point_solve(&p, cfg, &suite, &NlieOptions::default()).unwrap()
    }

    #[test]
    fn kernel_sum_matches_direct() {
        let zeta = 1.3;
        let nodes = [C64::new(0.3, -0.2), C64::new(-1.1, 0.05), C64::new(2.0, -0.6)];
        let coef = [C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.1, -1.0)];
        let ks = KernelSum::new(zeta, &nodes, &coef);
        let l = C64::new(0.7, -0.3);
        let direct: C64 = nodes.iter().zip(&coef).map(|(&n, &c)| c * kern(l - n, zeta)).sum();
        let (v, d) = ks.eval(l);
        assert!((v - direct).norm() < 1e-13);
        let h = 1e-5;
        let fd = (ks.eval(l + h).0 - ks.eval(l - h).0) / (2.0 * h);
        assert!((d - fd).norm() < 1e-8);
    }

    #[test]
    fn free_fermion_is_bare_energy() {
        let sol = solve(FRAC_PI_2, 0.1, &XConfig::empty());
        assert!(sol.log.len() <= 2, "{:?}", sol.log);
        for n in sol.contour.nodes.iter().step_by(17) {
            assert!((n.w - eps0(n.mu, &sol.params)).norm() < 1e-10);
        }
        let q = sol.suite.q;
        assert!((sol.contour.q_plus - q).norm() < 1e-12);
        assert!((sol.contour.q_minus + q).norm() < 1e-12);
    }

    #[test]
    fn empty_config_converges() {
        let sol = solve(1.3, 0.05, &XConfig::empty());
        assert!(sol.log.len() < 30);
        assert!(sol.fermi_residual() < 1e-8);
        assert!(sol.index.norm() < 1e-6, "index {}", sol.index);
        assert_eq!(sol.contour.sign_changes(), 2);
        assert!(sol.membership().unwrap() < 10.0);
        // u − ε − T²u₂ = O(T³) for the empty configuration, whose u₁ vanishes
        let t = sol.t();
        let x = SignedMultiset::new();
        for n in sol.contour.nodes.iter().step_by(23) {
            if n.w.norm() > 0.5 {
                continue;
            }
            let d = n.w - sol.suite.eps(n.mu) - t * t * u2_eval(n.mu, &x, 0, &sol.suite).unwrap();
            assert!(d.norm() < 0.2 * t * t, "{} at {}", d.norm(), n.mu);
        }
    }

    #[test]
    fn close_roots_satisfy_quantisation() {
        let cfg = XConfig {
            fixed: SignedMultiset::new(),
            roots: vec![
                RootTarget { side: Branch::R, kind: RootKind::Particle, n: 0 },
                RootTarget { side: Branch::R, kind: RootKind::Hole, n: 1 },
            ],
            spin: 0,
        };
        let sol = solve(1.3, 0.05, &cfg);
        for (r, tg) in sol.roots.iter().zip(&cfg.roots) {
            assert!((sol.u(*r) - tg.target(0.05)).norm() < 1e-10);
            assert!(r.re > 0.0);
        }
        assert!(sol.index.norm() < 1e-6);
    }

    #[test]
    fn bookkeeping_violation_rejected() {
        let p = params(1.3, 2.0).with_t(0.05);
        let suite = dressed_suite(&p, 64).unwrap();
        let cfg = XConfig { spin: 1, ..XConfig::empty() };
        assert!(matches!(
            fixed_point_solve(&p, &cfg, &suite, &NlieOptions::default()),
            Err(QtmError::HypothesisViolated(_))
        ));
    }

    #[test]
    fn continuation_matches_direct_rhs() {
        let sol = solve(1.3, 0.05, &XConfig::empty());
        let xi = C64::new(0.3, 0.1);
        let a = sol.analytic_continuation(xi).unwrap();
        let b = sol.rhs_direct(xi, 16, 24);
        assert!((a - b).norm() < 1e-7, "{}", (a - b).norm());
        for n in sol.contour.nodes.iter().step_by(31) {
            assert!((sol.analytic_continuation(n.mu).unwrap() - n.w).norm() < 1e-8);
        }
    }

    #[test]
    fn free_fermion_continuation() {
        let sol = solve(FRAC_PI_2, 0.1, &XConfig::empty());
        for z in [C64::new(0.2, 0.3), C64::new(1.5, -0.4), C64::new(0.1, -1.0), C64::new(-0.7, 1.2)] {
            let v = sol.analytic_continuation(z).unwrap();
            assert!((v - eps0(z, &sol.params)).norm() < 1e-9, "{z}: {v}");
        }
    }

    #[test]
    fn u1_examples() {
        let p = params(1.3, 2.0);
        let suite = dressed_suite(&p, 64).unwrap();
        let l = C64::new(0.4, -0.1);
        assert_eq!(u1_eval(l, &SignedMultiset::new(), 0, &suite).unwrap(), C64::new(0.0, 0.0));
        let pf = params(FRAC_PI_2, 2.0);
        let sf = dressed_suite(&pf, 64).unwrap();
        let y = C64::new(sf.q, 0.1);
        let v = u1_eval(l, &SignedMultiset::from_points(&[y]), 0, &sf).unwrap();
        assert!(v.norm() < 1e-14);
        assert!(u2_eval(l, &SignedMultiset::from_points(&[y]), 1, &sf).unwrap().norm() < 1e-14);
        assert!(matches!(u1_eval(C64::new(0.0, 1.4), &SignedMultiset::new(), 0, &suite), Err(QtmError::OutOfDomain(_))));
    }
}
