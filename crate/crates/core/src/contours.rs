//! Geometry in the rapidity plane: the two local inverses of ε, level lines of Re ε,
//! the reference contour around the Fermi curve and the contour adapted to a given
//! function f close to ε.

use std::f64::consts::PI;
use std::fmt::Write as _;

use roots::{find_root_brent, SimpleConvergency};
use serde::{Deserialize, Serialize};

use crate::core_types::{ModelParams, C64, I};
use crate::error::{QtmError, Result};
use crate::integral_equations::DressedSuite;

const TABLE_SIZE: usize = 200;
const NEWTON_MAX: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    L,
    R,
    Arc,
}

impl Branch {
    /// υ_R = 1, υ_L = −1.
    pub fn upsilon(self) -> f64 {
        match self {
            Branch::L => -1.0,
            _ => 1.0,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Branch::L => "L",
            Branch::R => "R",
            Branch::Arc => "arc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// Parameter increases along the samples.
    Increasing,
    /// Counterclockwise around −iζ/2.
    Ccw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracedCurve {
    pub points: Vec<C64>,
    pub params: Vec<f64>,
    pub branch: Branch,
    pub orientation: Orientation,
}

impl TracedCurve {
    fn reversed(mut self) -> Self {
        self.points.reverse();
        self.params.reverse();
        self
    }
}

/// Coarse table of ε on the right half strip, used to seed Newton.
#[derive(Debug, Clone)]
pub struct InverseTable {
    re_max: f64,
    im_half: f64,
    values: Vec<C64>,
}

impl InverseTable {
    pub fn build(suite: &DressedSuite) -> Self {
        let im_half = suite.zeta().min(PI / 2.0);
        let re_max = suite.q + 4.0;
        let mut values = Vec::with_capacity(TABLE_SIZE * TABLE_SIZE);
        for j in 0..TABLE_SIZE {
            for k in 0..TABLE_SIZE {
                values.push(suite.eps(Self::node(re_max, im_half, j, k)));
            }
        }
        InverseTable { re_max, im_half, values }
    }

    fn node(re_max: f64, im_half: f64, j: usize, k: usize) -> C64 {
        let n = TABLE_SIZE as f64;
        C64::new((j as f64 + 0.5) * re_max / n, -im_half + (k as f64 + 0.5) * 2.0 * im_half / n)
    }

    fn seed(&self, z: C64) -> C64 {
        let mut best = (f64::INFINITY, 0usize);
        for (i, v) in self.values.iter().enumerate() {
            let d = (v - z).norm_sqr();
            if d < best.0 {
                best = (d, i);
            }
        }
        Self::node(self.re_max, self.im_half, best.1 / TABLE_SIZE, best.1 % TABLE_SIZE)
    }
}

fn pole_lo(suite: &DressedSuite) -> C64 {
    C64::new(0.0, -suite.zeta() / 2.0)
}

/// Newton for ε(λ) = z with step limiting; `None` if it does not settle.
fn newton_eps(suite: &DressedSuite, z: C64, mut l: C64) -> Option<C64> {
    let tol = 1e-13 * (1.0 + z.norm());
    for _ in 0..NEWTON_MAX {
        let r = suite.eps(l) - z;
        if r.norm() < tol {
            return Some(l);
        }
        let d = suite.eps_d(l);
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let mut step = r / d;
        let cap = 0.25_f64.min(0.5 * (l - pole_lo(suite)).norm().min((l + pole_lo(suite)).norm()));
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        l -= step;
    }
    let r = suite.eps(l) - z;
    (r.norm() < 1e3 * tol).then_some(l)
}

/// Near-pole asymptotics of the right-branch inverse.
pub fn eps_inverse_asymptotic(z: C64, suite: &DressedSuite) -> C64 {
    let p = &suite.params;
    let a = 2.0 * p.j * p.zeta.sin();
    let dz = z - suite.tau;
    if z.im < 0.0 {
        pole_lo(suite) - I * a / dz
    } else {
        -pole_lo(suite) + I * a / dz
    }
}

fn in_right_half_strip(l: C64, zeta: f64) -> bool {
    l.re > -1e-9 && l.im.abs() < zeta.min(PI / 2.0)
}

/// λ in the half strip of `branch` with ε(λ) = z.
pub fn eps_inverse(branch: Branch, z: C64, suite: &DressedSuite) -> Result<C64> {
    let lr = eps_inverse_right(z, suite, None)?;
    Ok(match branch {
        Branch::L => -lr,
        _ => lr,
    })
}

/// Right-branch inverse, optionally seeded by a nearby point.
pub fn eps_inverse_right(z: C64, suite: &DressedSuite, seed: Option<C64>) -> Result<C64> {
    let zeta = suite.zeta();
    let asym = eps_inverse_asymptotic(z, suite);
    let near_pole = (asym - pole_lo(suite)).norm().min((asym + pole_lo(suite)).norm()) < 0.05;
    let mut seeds = Vec::with_capacity(3);
    if let Some(s) = seed {
        seeds.push(s);
    }
    if near_pole {
        seeds.push(asym);
    }
    seeds.push(suite.inverse_table().seed(z));
    let mut last = None;
    for s in seeds {
        if let Some(l) = newton_eps(suite, z, s) {
            if in_right_half_strip(l, zeta) {
                return Ok(C64::new(l.re.max(0.0), l.im));
            }
            last = Some(l);
        }
    }
    match last {
        Some(l) => Err(QtmError::OutOfImage(l)),
        None => Err(QtmError::NoConvergence { what: "eps_inverse", iters: NEWTON_MAX, residual: f64::NAN }),
    }
}

/// Level line ε(λ) = level + i t on one branch, from `start` (where t = t0) in the
/// direction `dir` of t, until the circle of radius `radius` around −iζ/2.
/// `dt` bounds the parameter step, `ds` the arclength step.
pub fn trace_level(
    suite: &DressedSuite,
    branch: Branch,
    level: f64,
    start: C64,
    t0: f64,
    dir: f64,
    radius: f64,
    dt: f64,
    ds: f64,
) -> Result<TracedCurve> {
    let centre = pole_lo(suite);
    let mut points = vec![start];
    let mut params = vec![t0];
    let mut l = start;
    let mut t = t0;
    let mut h = dt;
    let corrector = |l0: C64, t1: f64| -> Option<C64> {
        let z = C64::new(level, t1);
        let mut l = l0;
        for _ in 0..20 {
            let r = suite.eps(l) - z;
            if r.norm() < 1e-12 * (1.0 + z.norm()) {
                return Some(l);
            }
            l -= r / suite.eps_d(l);
        }
        None
    };
    for _ in 0..200_000 {
        let d = suite.eps_d(l);
        let step_t = h.min(ds * d.norm()).max(1e-14);
        let pred = l + I * (dir * step_t) / d;
        let next = corrector(pred, t + dir * step_t);
        let ok = match next {
            Some(n) => (n - pred).norm() <= 1e-2 * (pred - l).norm().max(1e-14),
            None => false,
        };
        if !ok {
            h = step_t * 0.5;
            if h < 1e-12 {
                return Err(QtmError::NoConvergence { what: "trace_level", iters: 0, residual: h });
            }
            continue;
        }
        let n = next.unwrap();
        let tn = t + dir * step_t;
        if (n - centre).norm() <= radius {
            // land on the circle by bisection in t
            let (mut ta, mut la, mut tb) = (t, l, tn);
            for _ in 0..80 {
                let tm = 0.5 * (ta + tb);
                let lm = corrector(la, tm)
                    .ok_or(QtmError::NoConvergence { what: "trace_level", iters: 80, residual: tm })?;
                if (lm - centre).norm() > radius {
                    ta = tm;
                    la = lm;
                } else {
                    tb = tm;
                }
                if (tb - ta).abs() < 1e-14 * (1.0 + ta.abs()) {
                    break;
                }
            }
            points.push(la);
            params.push(ta);
            return Ok(TracedCurve { points, params, branch, orientation: Orientation::Increasing });
        }
        if branch != Branch::Arc && !in_right_half_strip(n * branch.upsilon(), suite.zeta()) {
            return Err(QtmError::OutOfImage(n));
        }
        points.push(n);
        params.push(tn);
        l = n;
        t = tn;
        h = (h * 1.5).min(dt);
    }
    Err(QtmError::MaxIterations(200_000))
}

/// The Fermi curve C_ε: left branch from −q, right branch ending at q, both cut at the
/// disk of radius c_d T around −iζ/2.  Parameters are Im ε, increasing along each branch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FermiCurve {
    pub left: TracedCurve,
    pub right: TracedCurve,
}

pub fn trace_fermi_curve(suite: &DressedSuite, density: f64) -> Result<FermiCurve> {
    let p = &suite.params;
    let radius = p.c_d * p.t;
    let dt = 1.0 / density;
    let right = trace_level(suite, Branch::R, 0.0, C64::new(suite.q, 0.0), 0.0, -1.0, radius, dt, 0.02)?.reversed();
    let left = trace_level(suite, Branch::L, 0.0, C64::new(-suite.q, 0.0), 0.0, 1.0, radius, dt, 0.02)?;
    Ok(FermiCurve { left, right })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Junction {
    pub branch: Branch,
    /// +1 for the outer rail (Re ε = +δ), −1 for the inner one.
    pub sigma: i8,
    pub point: C64,
    /// ε at the junction.
    pub t: C64,
    /// Window end value the rail passes through.
    pub z: C64,
    /// Angle around −iζ/2, in the convention of [`junction_angle_expansion`].
    pub angle: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourPiece {
    pub kind: PieceKind,
    pub branch: Branch,
    pub points: Vec<C64>,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceKind {
    Rail,
    Window,
    Arc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceContour {
    pub delta: f64,
    pub radius: f64,
    pub centre: C64,
    /// Counterclockwise: R outer rail, R window, R inner rail, top arc, L inner rail,
    /// L window, L outer rail, bottom arc.
    pub pieces: Vec<ContourPiece>,
    pub junctions: Vec<Junction>,
}

impl ReferenceContour {
    pub fn polyline(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for piece in &self.pieces {
            for &z in &piece.points {
                if out.last().map_or(true, |l: &C64| (l - z).norm() > 1e-13) {
                    out.push(z);
                }
            }
        }
        out
    }

    pub fn winding_number(&self, z: C64) -> f64 {
        winding_number(&self.polyline(), z)
    }

    pub fn junction(&self, branch: Branch, sigma: i8) -> Option<&Junction> {
        self.junctions.iter().find(|j| j.branch == branch && j.sigma == sigma)
    }

    /// CSV with columns curve_id, idx, re, im, branch, parameter.
    pub fn to_csv(&self) -> String {
        pieces_csv(&self.pieces)
    }
}

pub fn pieces_csv(pieces: &[ContourPiece]) -> String {
    let mut s = String::from("curve_id,idx,re,im,branch,parameter\n");
    for (c, piece) in pieces.iter().enumerate() {
        for (i, (z, t)) in piece.points.iter().zip(&piece.params).enumerate() {
            let _ = writeln!(s, "{c},{i},{:.16e},{:.16e},{},{:.16e}", z.re, z.im, piece.branch.label(), t);
        }
    }
    s
}

/// Winding number of a closed polyline around z (the polyline is closed implicitly).
pub fn winding_number(poly: &[C64], z: C64) -> f64 {
    let n = poly.len();
    let mut total = 0.0;
    for k in 0..n {
        let a = poly[k] - z;
        let b = poly[(k + 1) % n] - z;
        total += (b / a).arg();
    }
    total / (2.0 * PI)
}

/// First-order angle of the junction y_α^{(σ)}.
pub fn junction_angle_expansion(suite: &DressedSuite, branch: Branch, sigma: i8, delta: f64) -> f64 {
    let p = &suite.params;
    let s = sigma as f64;
    let shift = if branch == Branch::L { -s * PI } else { 0.0 };
    shift + p.t * p.c_d * branch.upsilon() / (2.0 * p.j * p.zeta.sin()) * (suite.tau - s * delta)
}

/// Point on the circle |λ + iζ/2| = radius, on the side of `branch`, where Re ε = level.
fn circle_junction(suite: &DressedSuite, branch: Branch, sigma: i8, level: f64, radius: f64) -> Result<(C64, f64)> {
    let centre = pole_lo(suite);
    let f = |psi: f64| suite.eps(centre + C64::from_polar(radius, psi)).re - level;
    let (a, b) = match branch {
        Branch::L => (PI / 2.0 + 1e-3, 1.5 * PI - 1e-3),
        _ => (-PI / 2.0 + 1e-3, PI / 2.0 - 1e-3),
    };
    if f(a) * f(b) > 0.0 {
        return Err(QtmError::GeometryDegenerate(format!(
            "Re eps = {level} not reached on the disk boundary on branch {}",
            branch.label()
        )));
    }
    let mut conv = SimpleConvergency { eps: 1e-15, max_iter: 200 };
    let psi = find_root_brent(a, b, &f, &mut conv)
        .map_err(|_| QtmError::GeometryDegenerate("junction angle".into()))?;
    let angle = if branch == Branch::L && sigma > 0 { psi - 2.0 * PI } else { psi };
    Ok((centre + C64::from_polar(radius, psi), angle))
}

fn arc_piece(centre: C64, radius: f64, a0: f64, a1: f64, per_unit: f64) -> ContourPiece {
    let n = ((a1 - a0).abs() * per_unit).ceil().max(8.0) as usize;
    let params: Vec<f64> = (0..=n).map(|k| a0 + (a1 - a0) * k as f64 / n as f64).collect();
    ContourPiece {
        kind: PieceKind::Arc,
        branch: Branch::Arc,
        points: params.iter().map(|&t| centre + C64::from_polar(radius, t)).collect(),
        params,
    }
}

/// Rail through the real point `start` where ε = level (plus i·t0), toward the disk.
fn rail(suite: &DressedSuite, branch: Branch, start: C64, level: C64, radius: f64) -> Result<ContourPiece> {
    let dir = -branch.upsilon();
    let c = trace_level(suite, branch, level.re, start, level.im, dir, radius, 0.05, 0.01)?;
    Ok(ContourPiece { kind: PieceKind::Rail, branch, points: c.points, params: c.params })
}

fn window_real(a: f64, b: f64, branch: Branch, n: usize) -> ContourPiece {
    let params: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    ContourPiece {
        kind: PieceKind::Window,
        branch,
        points: params.iter().map(|&x| C64::new(x, 0.0)).collect(),
        params,
    }
}

fn check_disk(suite: &DressedSuite, radius: f64) -> Result<()> {
    let d = C64::new(suite.q, suite.zeta() / 2.0).norm();
    if d < 10.0 * radius {
        return Err(QtmError::GeometryDegenerate(format!("disk radius {radius} too close to the Fermi points")));
    }
    Ok(())
}

/// Assembles rails, windows and arcs in counterclockwise order.
fn assemble(
    suite: &DressedSuite,
    windows: [(ContourPiece, C64, C64); 2],
    radius: f64,
) -> Result<(Vec<ContourPiece>, Vec<Junction>)> {
    let centre = pole_lo(suite);
    let [(win_r, zr_out, zr_in), (win_l, zl_in, zl_out)] = windows;
    let r_out = rail(suite, Branch::R, win_r.points[0], zr_out, radius)?;
    let r_in = rail(suite, Branch::R, *win_r.points.last().unwrap(), zr_in, radius)?;
    let l_in = rail(suite, Branch::L, win_l.points[0], zl_in, radius)?;
    let l_out = rail(suite, Branch::L, *win_l.points.last().unwrap(), zl_out, radius)?;

    let angle_of = |z: C64, lo: f64| {
        let mut a = (z - centre).arg();
        while a < lo {
            a += 2.0 * PI;
        }
        while a >= lo + 2.0 * PI {
            a -= 2.0 * PI;
        }
        a
    };
    let y_r_out = *r_out.points.last().unwrap();
    let y_r_in = *r_in.points.last().unwrap();
    let y_l_in = *l_in.points.last().unwrap();
    let y_l_out = *l_out.points.last().unwrap();
    let a_r_out = angle_of(y_r_out, -PI / 2.0);
    let a_r_in = angle_of(y_r_in, -PI / 2.0);
    let a_l_in = angle_of(y_l_in, PI / 2.0);
    let a_l_out = angle_of(y_l_out, -1.5 * PI);
    if !(a_r_in < a_l_in && a_l_out < a_r_out) {
        return Err(QtmError::GeometryDegenerate("rails cross on the disk boundary".into()));
    }
    let junctions = vec![
        Junction { branch: Branch::R, sigma: 1, point: y_r_out, t: suite.eps(y_r_out), z: zr_out, angle: a_r_out },
        Junction { branch: Branch::R, sigma: -1, point: y_r_in, t: suite.eps(y_r_in), z: zr_in, angle: a_r_in },
        Junction { branch: Branch::L, sigma: -1, point: y_l_in, t: suite.eps(y_l_in), z: zl_in, angle: a_l_in },
        Junction { branch: Branch::L, sigma: 1, point: y_l_out, t: suite.eps(y_l_out), z: zl_out, angle: a_l_out },
    ];
    let per_unit = 64.0;
    let reverse = |p: ContourPiece| ContourPiece {
        points: p.points.into_iter().rev().collect(),
        params: p.params.into_iter().rev().collect(),
        ..p
    };
    let mut top = arc_piece(centre, radius, a_r_in, a_l_in, per_unit);
    let mut bottom = arc_piece(centre, radius, a_l_out, a_r_out, per_unit);
    // exact junction points at the arc ends
    top.points[0] = y_r_in;
    *top.points.last_mut().unwrap() = y_l_in;
    bottom.points[0] = y_l_out;
    *bottom.points.last_mut().unwrap() = y_r_out;
    let pieces = vec![reverse(r_out), win_r, r_in, top, reverse(l_in), win_l, l_out, bottom];
    Ok((pieces, junctions))
}

/// Reference contour for the empty configuration (M from the parameters with |Y| = 0).
pub fn build_ref_contour(suite: &DressedSuite, p: &ModelParams) -> Result<ReferenceContour> {
    build_ref_contour_ny(suite, p, 0)
}

pub fn build_ref_contour_ny(suite: &DressedSuite, p: &ModelParams, n_y: usize) -> Result<ReferenceContour> {
    let delta = p.delta_t(n_y);
    if delta <= 0.0 {
        return Err(QtmError::GeometryDegenerate(format!("delta_T = {delta} is not positive")));
    }
    let radius = p.c_d * p.t;
    check_disk(suite, radius)?;
    let x_out = eps_inverse(Branch::R, C64::new(delta, 0.0), suite)?.re;
    let x_in = eps_inverse(Branch::R, C64::new(-delta, 0.0), suite)?.re;
    let n = 32;
    let win_r = window_real(x_out, x_in, Branch::R, n);
    let win_l = window_real(-x_in, -x_out, Branch::L, n);
    let d = C64::new(delta, 0.0);
    let (pieces, junctions) = assemble(suite, [(win_r, d, -d), (win_l, -d, d)], radius)?;
    // consistency with the direct circle intersection
    for j in &junctions {
        let (y, _) = circle_junction(suite, j.branch, j.sigma, j.z.re, radius)?;
        if (y - j.point).norm() > 1e-8 * (1.0 + radius) {
            return Err(QtmError::GeometryDegenerate("rail ends off the junction".into()));
        }
    }
    Ok(ReferenceContour { delta, radius, centre: pole_lo(suite), pieces, junctions })
}

/// Junction angles solved directly on the circle, in the expansion convention.
pub fn junction_angles(suite: &DressedSuite, delta: f64, radius: f64) -> Result<Vec<(Branch, i8, f64)>> {
    let mut out = Vec::new();
    for branch in [Branch::R, Branch::L] {
        for sigma in [1i8, -1] {
            let (_, a) = circle_junction(suite, branch, sigma, sigma as f64 * delta, radius)?;
            out.push((branch, sigma, a));
        }
    }
    Ok(out)
}

/// Contour adapted to a function f close to ε, with its zeroes q^{(±)}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptedContour {
    pub q_plus: C64,
    pub q_minus: C64,
    pub delta: f64,
    pub radius: f64,
    pub pieces: Vec<ContourPiece>,
    pub junctions: Vec<Junction>,
    /// min |Re f| / δ over the samples off the windows.
    pub off_window_ratio: f64,
}

impl AdaptedContour {
    pub fn polyline(&self) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for piece in &self.pieces {
            for &z in &piece.points {
                if out.last().map_or(true, |l: &C64| (l - z).norm() > 1e-13) {
                    out.push(z);
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        pieces_csv(&self.pieces)
    }

    /// The bound |Re f| > δ/2 off the central windows.
    pub fn bound_holds(&self) -> bool {
        self.off_window_ratio > 0.5
    }
}

/// Complex Newton for f(λ) = target starting at `l`.
pub fn newton_fn<F: Fn(C64) -> (C64, C64)>(f: &F, target: C64, mut l: C64, tol: f64) -> Option<C64> {
    for _ in 0..NEWTON_MAX {
        let (v, d) = f(l);
        let r = v - target;
        if r.norm() < tol {
            return Some(l);
        }
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let mut step = r / d;
        if step.norm() > 0.25 {
            step *= 0.25 / step.norm();
        }
        l -= step;
    }
    None
}

/// Zero of f near σq.
pub fn fermi_root<F: Fn(C64) -> (C64, C64)>(f: &F, suite: &DressedSuite, sigma: f64) -> Result<C64> {
    let q = suite.q;
    let x0 = C64::new(sigma * q, 0.0);
    let probe = 0.25 * q.max(0.05);
    let ra = f(x0 - probe).0.re;
    let rb = f(x0 + probe).0.re;
    if ra * rb > 0.0 {
        return Err(QtmError::ZeroNotBracketed(sigma * q));
    }
    let z = newton_fn(f, C64::new(0.0, 0.0), x0, 1e-14).ok_or(QtmError::ZeroNotBracketed(sigma * q))?;
    if (z - x0).norm() > probe {
        return Err(QtmError::ZeroNotBracketed(sigma * q));
    }
    Ok(z)
}

/// f^{-1} of the real segment from `s0` to `s1`, continued from `start` where f = s0.
pub fn window_preimage<F: Fn(C64) -> (C64, C64)>(
    f: &F,
    start: C64,
    s0: f64,
    s1: f64,
    n: usize,
    escape: f64,
) -> Result<ContourPiece> {
    let mut pts = vec![start];
    let mut params = vec![s0];
    let mut l = start;
    let sub = 4;
    for k in 1..=n * sub {
        let s = s0 + (s1 - s0) * k as f64 / (n * sub) as f64;
        let (v, d) = f(l);
        let pred = l + (C64::new(s, 0.0) - v) / d;
        l = newton_fn(f, C64::new(s, 0.0), pred, 1e-13 * (1.0 + s.abs())).ok_or(QtmError::WindowEscape(pred))?;
        if (l - start).norm() > escape {
            return Err(QtmError::WindowEscape(l));
        }
        if k % sub == 0 {
            pts.push(l);
            params.push(s);
        }
    }
    Ok(ContourPiece { kind: PieceKind::Window, branch: if start.re > 0.0 { Branch::R } else { Branch::L }, points: pts, params })
}

/// Contour C_𝕏[f] for a function f (value, derivative) close to ε near the real axis.
pub fn adapt_contour<F: Fn(C64) -> (C64, C64)>(
    f: &F,
    suite: &DressedSuite,
    p: &ModelParams,
    n_y: usize,
    radius: f64,
) -> Result<AdaptedContour> {
    let delta = p.delta_t(n_y);
    if delta <= 0.0 {
        return Err(QtmError::GeometryDegenerate(format!("delta_T = {delta} is not positive")));
    }
    check_disk(suite, radius)?;
    let q_plus = fermi_root(f, suite, 1.0)?;
    let q_minus = fermi_root(f, suite, -1.0)?;
    let escape = 0.5 * C64::new(suite.q, suite.zeta() / 2.0).norm();
    let n = 32;
    let r_lo = window_preimage(f, q_plus, 0.0, -delta, n / 2, escape)?;
    let r_hi = window_preimage(f, q_plus, 0.0, delta, n / 2, escape)?;
    let l_lo = window_preimage(f, q_minus, 0.0, -delta, n / 2, escape)?;
    let l_hi = window_preimage(f, q_minus, 0.0, delta, n / 2, escape)?;
    let join = |hi: ContourPiece, lo: ContourPiece, branch: Branch| {
        let mut points: Vec<C64> = hi.points.into_iter().rev().collect();
        let mut params: Vec<f64> = hi.params.into_iter().rev().collect();
        points.extend(lo.points.into_iter().skip(1));
        params.extend(lo.params.into_iter().skip(1));
        ContourPiece { kind: PieceKind::Window, branch, points, params }
    };
    // R window runs from f = +δ to f = −δ, L window from −δ to +δ
    let win_r = join(r_hi, r_lo, Branch::R);
    let mut win_l = join(l_hi, l_lo, Branch::L);
    win_l.points.reverse();
    win_l.params.reverse();
    let zr_out = suite.eps(win_r.points[0]);
    let zr_in = suite.eps(*win_r.points.last().unwrap());
    let zl_in = suite.eps(win_l.points[0]);
    let zl_out = suite.eps(*win_l.points.last().unwrap());
    let (pieces, junctions) = assemble(suite, [(win_r, zr_out, zr_in), (win_l, zl_in, zl_out)], radius)?;
    let mut ratio = f64::INFINITY;
    for piece in pieces.iter().filter(|pc| pc.kind != PieceKind::Window) {
        for (i, &z) in piece.points.iter().enumerate() {
            // the window ends themselves sit exactly at |Re f| = δ
            if piece.kind == PieceKind::Rail && (i == 0 || i + 1 == piece.points.len()) {
                continue;
            }
            ratio = ratio.min(f(z).0.re.abs() / delta);
        }
    }
    Ok(AdaptedContour { q_plus, q_minus, delta, radius, pieces, junctions, off_window_ratio: ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integral_equations::dressed_suite;
    use crate::test_support::params;

    fn suite(zeta: f64, t: f64) -> DressedSuite {
        let p = params(zeta, 2.0).with_t(t);
        dressed_suite(&p, 64).unwrap()
    }

    #[test]
    fn inverse_at_fermi_points() {
        let s = suite(1.3, 0.05);
        let r = eps_inverse(Branch::R, C64::new(0.0, 0.0), &s).unwrap();
        let l = eps_inverse(Branch::L, C64::new(0.0, 0.0), &s).unwrap();
        assert!((r - s.q).norm() < 1e-10);
        assert!((l + s.q).norm() < 1e-10);
    }

    #[test]
    fn inverse_near_pole_asymptotics() {
        let s = suite(1.3, 0.05);
        let mut errs = Vec::new();
        for k in 0..4 {
            let z = C64::new(0.0, -40.0 * 2f64.powi(k));
            let l = eps_inverse(Branch::R, z, &s).unwrap();
            assert!((s.eps(l) - z).norm() < 1e-8 * z.norm());
            let err = (l - eps_inverse_asymptotic(z, &s)).norm();
            errs.push(err * (z - s.tau).norm_sqr());
        }
        // C/|z − τ|² with a stable C
        let c0 = errs[0];
        assert!(errs.iter().all(|&e| e < 2.0 * c0 + 1e-12), "{errs:?}");
    }

    #[test]
    fn double_cover_roundtrip() {
        use rand::{Rng, SeedableRng};
        let s = suite(1.3, 0.05);
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut count = 0;
        while count < 100 {
            let l0 = C64::new(rng.gen_range(0.05..3.0), rng.gen_range(-1.2..1.2));
            count += 1;
            let z = s.eps(l0);
            let r = eps_inverse(Branch::R, z, &s).unwrap();
            let l = eps_inverse(Branch::L, z, &s).unwrap();
            assert!((s.eps(r) - z).norm() < 1e-8);
            assert!((s.eps(l) - z).norm() < 1e-8);
            assert!((r - l).norm() > 1e-6);
        }
    }

    #[test]
    fn fermi_curve_traces() {
        let s = suite(1.3, 0.05);
        let c = trace_fermi_curve(&s, 20.0).unwrap();
        assert!((c.left.points[0] + s.q).norm() < 1e-8);
        assert!((c.right.points.last().unwrap() - s.q).norm() < 1e-8);
        for branch in [&c.left, &c.right] {
            assert!(branch.params.windows(2).all(|w| w[1] > w[0]));
            assert!(branch.points.iter().all(|&l| s.eps(l).re.abs() < 1e-8));
        }
    }

    #[test]
    fn free_fermion_curve_locus() {
        let s = suite(PI / 2.0, 0.05);
        let y = -PI / 8.0;
        // Re[2 − 4/cosh(2x + 2iy)] = 0, closed form
        let g = |x: f64| {
            let c = C64::new(2.0 * x, 2.0 * y).cosh();
            2.0 - (4.0 / c).re
        };
        let (mut a, mut b) = (0.0, 3.0);
        assert!(g(a) * g(b) < 0.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if g(a) * g(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        let oracle = 0.5 * (a + b);
        let c = trace_fermi_curve(&s, 20.0).unwrap();
        let pts = &c.right.points;
        let k = pts.windows(2).position(|w| (w[0].im - y) * (w[1].im - y) <= 0.0).unwrap();
        let (p0, p1) = (pts[k], pts[k + 1]);
        let mut x = p0.re + (p1.re - p0.re) * (y - p0.im) / (p1.im - p0.im);
        for _ in 0..30 {
            let l = C64::new(x, y);
            x -= s.eps(l).re / s.eps_d(l).re;
        }
        assert!((x - oracle).abs() < 1e-8, "{x} vs {oracle}");
    }

    #[test]
    fn reference_contour_winds_once() {
        let p = params(1.3, 2.0).with_t(0.05);
        let p = ModelParams { m: Some(4.0), ..p };
        let s = dressed_suite(&p, 64).unwrap();
        let c = build_ref_contour(&s, &p).unwrap();
        let poly = c.polyline();
        assert!((c.winding_number(C64::new(0.0, -1.3 / 2.0)) - 1.0).abs() < 1e-10);
        // closed: the bottom arc ends at the first point
        assert!((poly[0] - c.pieces.last().unwrap().points.last().unwrap()).norm() < 1e-10);
        let curve = trace_fermi_curve(&s, 10.0).unwrap();
        for &z in curve.left.points.iter().chain(&curve.right.points) {
            assert!((winding_number(&poly, z) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn junction_angles_follow_expansion() {
        let mut res = Vec::new();
        for t in [0.05, 0.025] {
            let p = ModelParams { m: Some(4.0), ..params(1.3, 2.0).with_t(t) };
            let s = dressed_suite(&p, 64).unwrap();
            let delta = p.delta_t(0);
            let angles = junction_angles(&s, delta, p.c_d * t).unwrap();
            let worst = angles
                .iter()
                .map(|&(b, sg, a)| (a - junction_angle_expansion(&s, b, sg, delta)).abs())
                .fold(0.0, f64::max);
            res.push(worst);
        }
        // at least the O(T²) decay of the first-order expansion
        let ratio = res[0] / res[1];
        assert!(ratio > 3.0, "{res:?}");
    }

    #[test]
    fn adapted_to_eps_is_through_fermi_points() {
        let p = params(PI / 2.0, 2.0).with_t(0.05);
        let s = dressed_suite(&p, 64).unwrap();
        let f = |l: C64| (s.eps(l), s.eps_d(l));
        let c = adapt_contour(&f, &s, &p, 0, p.c_d * p.t).unwrap();
        assert!((c.q_plus - s.q).norm() < 1e-12);
        assert!((c.q_minus + s.q).norm() < 1e-12);
        assert!(c.bound_holds());
        assert!((winding_number(&c.polyline(), C64::new(0.0, -PI / 4.0)) - 1.0).abs() < 1e-10);
        assert!(f(c.q_plus).1.re > 0.0 && -f(c.q_minus).1.re > 0.0);
    }
}
