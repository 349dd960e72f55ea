//! Bare quantities of the massless XXZ chain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::core_types::{dist_ipi, reduce_ipi, ModelParams, Trotter, C64, I};
use crate::error::{QtmError, Result};

pub const POLE_TOL: f64 = 1e-10;
/// Shift used for the + boundary value on a cut.
pub const CUT_SHIFT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchedFunctionValue {
    pub value: C64,
    pub on_cut: bool,
}

/// Principal log of 1 + w, accurate for small |w|.
pub fn ln1p_c(w: C64) -> C64 {
    let re = 0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p();
    C64::new(re, w.im.atan2(1.0 + w.re))
}

fn coth(z: C64) -> C64 {
    z.cosh() / z.sinh()
}

/// cosh(2λ) with the argument reduced modulo iπ.
#[inline]
fn cosh2(l: C64) -> C64 {
    (reduce_ipi(l) * 2.0).cosh()
}

#[inline]
pub fn eps0(l: C64, p: &ModelParams) -> C64 {
    let s = p.zeta.sin();
    C64::new(p.h, 0.0) - 4.0 * p.j * s * s / (cosh2(l) - p.zeta.cos())
}

#[inline]
pub fn eps0_d(l: C64, p: &ModelParams) -> C64 {
    let s = p.zeta.sin();
    let lr = reduce_ipi(l);
    let d = (lr * 2.0).cosh() - p.zeta.cos();
    8.0 * p.j * s * s * (lr * 2.0).sinh() / (d * d)
}

pub fn bare_energy(l: C64, p: &ModelParams) -> Result<C64> {
    let half = C64::new(0.0, p.zeta / 2.0);
    if dist_ipi(l, half) < POLE_TOL || dist_ipi(l, -half) < POLE_TOL {
        return Err(QtmError::PoleHit { what: "bare energy", at: l });
    }
    Ok(eps0(l, p))
}

#[inline]
pub fn kern(l: C64, zeta: f64) -> C64 {
    (2.0 * zeta).sin() / (PI * (cosh2(l) - (2.0 * zeta).cos()))
}

#[inline]
pub fn kern_d(l: C64, zeta: f64) -> C64 {
    let lr = reduce_ipi(l);
    let d = (lr * 2.0).cosh() - (2.0 * zeta).cos();
    -2.0 * (2.0 * zeta).sin() * (lr * 2.0).sinh() / (PI * d * d)
}

/// Real-argument kernel, used to assemble Nyström matrices.
#[inline]
pub fn kern_re(x: f64, zeta: f64) -> f64 {
    (2.0 * zeta).sin() / (PI * ((2.0 * x).cosh() - (2.0 * zeta).cos()))
}

pub fn kernel_k(l: C64, p: &ModelParams) -> Result<C64> {
    let z = C64::new(0.0, p.zeta);
    if dist_ipi(l, z) < POLE_TOL || dist_ipi(l, -z) < POLE_TOL {
        return Err(QtmError::PoleHit { what: "kernel", at: l });
    }
    Ok(kern(l, p.zeta))
}

/// Bare phase θ with its two-case branch prescription, iπ-periodic.
pub fn theta(l: C64, zeta: f64) -> BranchedFunctionValue {
    let zm = zeta.min(PI - zeta);
    let s2 = (PI - 2.0 * zeta).signum();
    let mut z = reduce_ipi(l);
    let on_cut = z.re > 0.0 && (z.im.abs() - zm).abs() < POLE_TOL;
    if on_cut {
        z.im += CUT_SHIFT;
    }
    let iz = C64::new(0.0, zeta);
    let value = if z.im.abs() < zm {
        I * ((iz + z).sinh() / (iz - z).sinh()).ln()
    } else {
        -PI * s2 + I * ((iz + z).sinh() / (z - iz).sinh()).ln()
    };
    BranchedFunctionValue { value, on_cut }
}

#[inline]
pub fn theta_v(l: C64, zeta: f64) -> C64 {
    theta(l, zeta).value
}

pub fn bare_phase(l: C64, p: &ModelParams) -> BranchedFunctionValue {
    theta(l, p.zeta)
}

#[inline]
pub fn p0(l: C64, zeta: f64) -> C64 {
    let hz = C64::new(0.0, zeta / 2.0);
    I * ((hz + l).sinh() / (hz - l).sinh()).ln()
}

#[inline]
pub fn p0_d(l: C64, zeta: f64) -> C64 {
    2.0 * zeta.sin() / (cosh2(l) - zeta.cos())
}

pub fn bare_momentum(l: C64, p: &ModelParams) -> Result<C64> {
    let half = C64::new(0.0, p.zeta / 2.0);
    if dist_ipi(l, half) < POLE_TOL || dist_ipi(l, -half) < POLE_TOL {
        return Err(QtmError::BranchPointHit { what: "bare momentum", at: l });
    }
    Ok(p0(l, p.zeta))
}

/// Half-length J sin ζ/(NT) of the vertical cut segments of 𝔴_N.
pub fn trotter_cut_halfwidth(p: &ModelParams, n: u32) -> f64 {
    p.j * p.zeta.sin() / (n as f64 * p.t)
}

/// ln[sinh(t − c)/sinh(t + c)] for c purely imaginary, via ln1p of the ratio minus one.
fn log_ratio(t: C64, c: C64) -> C64 {
    ln1p_c(-2.0 * t.cosh() * c.sinh() / (t + c).sinh())
}

/// 𝔴_N(ξ) without range checks.
pub fn wn(l: C64, p: &ModelParams, n: u32) -> C64 {
    let nf = n as f64;
    let c = p.aleph() / nf;
    let hz = C64::new(0.0, p.zeta / 2.0);
    let l = reduce_ipi(l);
    nf * (log_ratio(l + hz, c) - log_ratio(l - hz, c))
}

pub fn wn_d(l: C64, p: &ModelParams, n: u32) -> C64 {
    let nf = n as f64;
    let c = p.aleph() / nf;
    let hz = C64::new(0.0, p.zeta / 2.0);
    let l = reduce_ipi(l);
    nf * (coth(l - c + hz) - coth(l + c + hz) + coth(l + c - hz) - coth(l - c - hz))
}

/// Distance from λ to the two cut segments of 𝔴_N (modulo iπ).
pub fn trotter_cut_distance(l: C64, p: &ModelParams, n: u32) -> f64 {
    let a = trotter_cut_halfwidth(p, n);
    let mut best = f64::INFINITY;
    for centre in [-p.zeta / 2.0, p.zeta / 2.0] {
        for k in -1..=1 {
            let z = reduce_ipi(l);
            let c = centre + k as f64 * PI;
            let dy = (z.im - c).abs() - a;
            let d = if dy <= 0.0 { z.re.abs() } else { z.re.hypot(dy) };
            best = best.min(d);
        }
    }
    best
}

/// h − T𝔴_N(λ).
pub fn trotter_driving(l: C64, p: &ModelParams) -> Result<C64> {
    let n = match p.trotter {
        Trotter::Finite(n) => n,
        Trotter::Infinite => return bare_energy(l, p),
    };
    if trotter_cut_halfwidth(p, n) >= PI / 2.0 {
        return Err(QtmError::OutOfRegime(format!("N T = {} too small for the cut structure", n as f64 * p.t)));
    }
    if trotter_cut_distance(l, p, n) < POLE_TOL {
        return Err(QtmError::CutHit(l));
    }
    Ok(C64::new(p.h, 0.0) - p.t * wn(l, p, n))
}

/// String kernel K_k^{(−)} and string bare energy ε_{0;k}^{(−)}.
pub fn string_quantities(l: C64, k: u32, p: &ModelParams) -> Result<(C64, C64)> {
    let z = p.zeta;
    let kf = k as f64;
    let pts = [
        l - I * (kf * z),
        l - I * ((kf - 1.0) * z),
        l + I * z,
        l,
        l + I * (z / 2.0),
        l + I * ((0.5 - kf) * z),
    ];
    for &s in &pts {
        if dist_ipi(s, C64::new(0.0, 0.0)) < POLE_TOL {
            return Err(QtmError::PoleHit { what: "string quantities", at: l });
        }
    }
    let kk = (coth(pts[0]) + coth(pts[1]) - coth(pts[2]) - coth(pts[3])) / (2.0 * PI * I);
    let e = C64::new(kf * p.h, 0.0) - 2.0 * I * p.j * z.sin() * (coth(pts[4]) - coth(pts[5]));
    Ok((kk, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core_types::{validate_params, RawParams};
    use proptest::prelude::*;

    fn params(zeta: f64) -> ModelParams {
        validate_params(&RawParams { j: 1.0, zeta, h: 2.0, t: 0.2, trotter_n: None, m: None, c_d: None }).unwrap()
    }

    fn fd<F: Fn(C64) -> C64>(f: F, l: C64) -> C64 {
        let h = 1e-5;
        (f(l - 2.0 * h) - 8.0 * f(l - h) + 8.0 * f(l + h) - f(l + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn bare_energy_values() {
        let p = params(PI / 2.0);
        assert!((bare_energy(C64::new(0.0, 0.0), &p).unwrap() - C64::new(-2.0, 0.0)).norm() < 1e-14);
        let p = params(1.3);
        let v = bare_energy(C64::new(0.0, 0.0), &p).unwrap();
        assert!((v.re - (2.0 - 4.0 * (1.0 + 1.3f64.cos()))).abs() < 1e-13);
        assert!(matches!(bare_energy(C64::new(0.0, -0.65), &p), Err(QtmError::PoleHit { .. })));
        let l = C64::new(0.3, -0.2);
        assert!((fd(|x| eps0(x, &p), l) - eps0_d(l, &p)).norm() < 1e-8);
    }

    #[test]
    fn kernel_values() {
        let p = params(PI / 3.0);
        let k0 = kernel_k(C64::new(0.0, 0.0), &p).unwrap();
        assert!((k0.re - 0.183_776_298_473_929_9).abs() < 1e-10);
        let p = params(PI / 2.0);
        assert!(kernel_k(C64::new(0.4, 0.3), &p).unwrap().norm() < 1e-15);
        let p = params(1.3);
        assert!(matches!(kernel_k(C64::new(0.0, 1.3), &p), Err(QtmError::PoleHit { .. })));
    }

    #[test]
    fn theta_derivative_is_kernel() {
        let l = C64::new(0.3, 0.1);
        let d = fd(|x| theta_v(x, 1.3), l);
        let k = 2.0 * PI * kern(l, 1.3);
        assert!((d - k).norm() / k.norm() < 1e-6);
        assert!(theta_v(C64::new(0.0, 0.0), 1.3).norm() < 1e-15);
        for x in [-2.0, -0.3, 0.7, 5.0] {
            assert!(theta_v(C64::new(x, 0.0), PI / 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn theta_cut_flag() {
        let v = theta(C64::new(0.5, 1.3), 1.3);
        assert!(v.on_cut);
        let v = theta(C64::new(-0.5, 1.3), 1.3);
        assert!(!v.on_cut);
        // + boundary value approaches from above
        let above = theta_v(C64::new(0.5, 1.3 + 1e-7), 1.3);
        assert!((theta(C64::new(0.5, 1.3), 1.3).value - above).norm() < 1e-5);
    }

    #[test]
    fn momentum_values() {
        let p = params(PI / 2.0);
        let q = 0.5 * 2f64.acosh();
        let v = bare_momentum(C64::new(q, 0.0), &p).unwrap();
        assert!((v.re - PI / 3.0).abs() < 1e-12 && v.im.abs() < 1e-12);
        let l = C64::new(0.4, 0.0);
        let d = fd(|x| p0(x, 1.3), l);
        assert!((d - p0_d(l, 1.3)).norm() / d.norm() < 1e-6);
        assert!(matches!(bare_momentum(C64::new(0.0, 0.65), &params(1.3)), Err(QtmError::BranchPointHit { .. })));
    }

    #[test]
    fn trotter_limit() {
        let base = params(1.3);
        let l = C64::new(0.5, 0.0);
        let mut errs = Vec::new();
        for n in [16u32, 32, 64, 128] {
            let p = base.with_trotter(Trotter::Finite(n));
            errs.push((trotter_driving(l, &p).unwrap() - eps0(l, &base)).norm());
        }
        let slope = (errs[3] / errs[0]).log2() / 3.0;
        assert!((slope + 2.0).abs() < 0.15, "slope {}", slope);
        // asymptotic ratio is exactly 1/4
        assert!(((errs[3] / errs[2]).log2() + 2.0).abs() < 0.02);
        let p = base.with_trotter(Trotter::Finite(1 << 20));
        let l = C64::new(1.0, 0.2);
        assert!((trotter_driving(l, &p).unwrap() - eps0(l, &base)).norm() < 1e-9);
        let p = base.with_trotter(Trotter::Finite(32));
        let l = C64::new(0.4, -0.3);
        assert!((trotter_driving(l, &p).unwrap() - trotter_driving(-l, &p).unwrap()).norm() < 1e-12);
        assert!((fd(|x| wn(x, &p, 32), l) - wn_d(l, &p, 32)).norm() < 1e-6);
        let on_cut = C64::new(0.0, -0.65 + 0.5 * trotter_cut_halfwidth(&p, 32));
        assert!(matches!(trotter_driving(on_cut, &p), Err(QtmError::CutHit(_))));
    }

    #[test]
    fn trotter_cut_is_the_segment() {
        // just off the segment on both sides the log changes by a multiple of 2πi/N per term
        let p = params(1.3).with_trotter(Trotter::Finite(16));
        let a = trotter_cut_halfwidth(&p, 16);
        let y = -0.65 + 0.3 * a;
        let jump = wn(C64::new(1e-9, y), &p, 16) - wn(C64::new(-1e-9, y), &p, 16);
        assert!((jump.norm() / (2.0 * PI * 16.0) - 1.0).abs() < 1e-6);
        let y = -0.65 + 2.0 * a;
        let jump = wn(C64::new(1e-9, y), &p, 16) - wn(C64::new(-1e-9, y), &p, 16);
        assert!(jump.norm() < 1e-6);
    }

    #[test]
    fn string_examples() {
        let p = params(1.0);
        let l = C64::new(0.7, 0.1);
        let (_, e3) = string_quantities(l, 3, &p).unwrap();
        let direct: C64 = (0..3).map(|r| eps0(l - I * (r as f64), &p)).sum();
        assert!((e3 - direct).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn parity_and_periodicity(x in -2.0..2.0f64, y in -0.5..0.5f64) {
            let p = params(1.3);
            let l = C64::new(x, y);
            prop_assume!(dist_ipi(l, C64::new(0.0, 0.65)) > 0.05 && dist_ipi(l, C64::new(0.0, -0.65)) > 0.05);
            let ip = C64::new(0.0, PI);
            prop_assert!((eps0(l, &p) - eps0(-l, &p)).norm() < 1e-12 * (1.0 + eps0(l, &p).norm()));
            prop_assert!((kern(l, 1.3) - kern(-l, 1.3)).norm() < 1e-12);
            prop_assert!((theta_v(l, 1.3) + theta_v(-l, 1.3)).norm() < 1e-12);
            prop_assert!((p0(l, 1.3) + p0(-l, 1.3)).norm() < 1e-12);
            prop_assert!((eps0(l + ip, &p) - eps0(l, &p)).norm() < 1e-12 * (1.0 + eps0(l, &p).norm()));
            prop_assert!((kern(l + ip, 1.3) - kern(l, 1.3)).norm() < 1e-12);
            prop_assert!((theta_v(l + ip, 1.3) - theta_v(l, 1.3)).norm() < 1e-12);
            let d = fd(|z| theta_v(z, 1.3), l);
            prop_assert!((d - 2.0 * PI * kern(l, 1.3)).norm() < 1e-6 * (1.0 + d.norm()));
            let (k1, e1) = string_quantities(l, 1, &p).unwrap();
            prop_assert!((k1 - kern(l, 1.3)).norm() < 1e-12);
            prop_assert!((e1 - eps0(l, &p)).norm() < 1e-11 * (1.0 + e1.norm()));
        }
    }
}
