use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{QtmError, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Trotter number of the quantum transfer matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trotter {
    Infinite,
    Finite(u32),
}

/// Unvalidated parameter record, as read from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub j: f64,
    pub zeta: f64,
    pub h: f64,
    pub t: f64,
    #[serde(default)]
    pub trotter_n: Option<i64>,
    #[serde(default)]
    pub m: Option<f64>,
    #[serde(default)]
    pub c_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub j: f64,
    pub zeta: f64,
    pub h: f64,
    pub t: f64,
    pub trotter: Trotter,
    /// Exponent constant of delta_T; `None` means max(3, |Y|+1).
    pub m: Option<f64>,
    pub c_d: f64,
}

pub const DEFAULT_CD: f64 = 0.5;

impl ModelParams {
    pub fn delta(&self) -> f64 {
        self.zeta.cos()
    }

    pub fn aleph(&self) -> C64 {
        C64::new(0.0, -self.j * self.zeta.sin() / self.t)
    }

    pub fn zeta_m(&self) -> f64 {
        self.zeta.min(PI - self.zeta)
    }

    pub fn s2(&self) -> f64 {
        (PI - 2.0 * self.zeta).signum()
    }

    /// M used for a configuration with `n_y` roots in Y.
    pub fn m_for(&self, n_y: usize) -> f64 {
        self.m.unwrap_or_else(|| 3f64.max(n_y as f64 + 1.0))
    }

    pub fn delta_t(&self, n_y: usize) -> f64 {
        -self.m_for(n_y) * self.t * self.t.ln()
    }

    pub fn upper_field(&self) -> f64 {
        4.0 * self.j * (1.0 + self.delta())
    }

    pub fn with_t(&self, t: f64) -> Self {
        ModelParams { t, ..self.clone() }
    }

    pub fn with_trotter(&self, trotter: Trotter) -> Self {
        ModelParams { trotter, ..self.clone() }
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            j: self.j,
            zeta: self.zeta,
            h: self.h,
            t: self.t,
            trotter_n: match self.trotter {
                Trotter::Infinite => None,
                Trotter::Finite(n) => Some(n as i64),
            },
            m: self.m,
            c_d: Some(self.c_d),
        }
    }

    pub fn validate(&self) -> Result<ModelParams> {
        validate_params(&self.to_raw())
    }

    /// Non-fatal diagnostics; currently flags ζ/π close to a rational with small denominator.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let x = self.zeta / PI;
        for den in 1..=64u32 {
            let num = (x * den as f64).round();
            if (x * den as f64 - num).abs() < 1e-12 {
                w.push(format!("zeta/pi = {}/{} is rational", num, den));
                break;
            }
        }
        w
    }
}

pub fn validate_params(raw: &RawParams) -> Result<ModelParams> {
    if !(raw.j > 0.0) {
        return Err(QtmError::NonPositive(format!("J = {}", raw.j)));
    }
    if !(raw.t > 0.0) {
        return Err(QtmError::NonPositive(format!("T = {}", raw.t)));
    }
    if !(raw.zeta > 0.0 && raw.zeta <= PI / 2.0) {
        return Err(QtmError::OutOfRegime(format!("zeta = {} not in (0, pi/2]", raw.zeta)));
    }
    let hmax = 4.0 * raw.j * (1.0 + raw.zeta.cos());
    if !(raw.h > 0.0 && raw.h < hmax) {
        return Err(QtmError::OutOfRegime(format!("h = {} not in (0, {})", raw.h, hmax)));
    }
    let trotter = match raw.trotter_n {
        None => Trotter::Infinite,
        Some(n) if n > 0 && n % 2 == 0 && n <= u32::MAX as i64 => Trotter::Finite(n as u32),
        Some(n) => return Err(QtmError::OddTrotter(n)),
    };
    if let Some(m) = raw.m {
        if !(m > 0.0) {
            return Err(QtmError::NonPositive(format!("M = {}", m)));
        }
    }
    let c_d = raw.c_d.unwrap_or(DEFAULT_CD);
    if !(c_d > 0.0) {
        return Err(QtmError::NonPositive(format!("c_d = {}", c_d)));
    }
    Ok(ModelParams { j: raw.j, zeta: raw.zeta, h: raw.h, t: raw.t, trotter, m: raw.m, c_d })
}

/// Distance on ℂ/iπℤ.
pub fn dist_ipi(z: C64, w: C64) -> f64 {
    let d = z - w;
    let r = (d.im / PI).round();
    let mut best = f64::INFINITY;
    for k in [r - 1.0, r, r + 1.0] {
        best = best.min(C64::new(d.re, d.im - PI * k).norm());
    }
    best
}

/// Maps Im z into (−π/2, π/2].
pub fn reduce_ipi(z: C64) -> C64 {
    let k = ((z.im + PI / 2.0) / PI).floor();
    let mut im = z.im - k * PI;
    if im <= -PI / 2.0 {
        im += PI;
    }
    C64::new(z.re, im)
}

pub const MULTISET_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsOp {
    Sum,
    Difference,
}

/// Points of ℂ carrying signed integer multiplicities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignedMultiset {
    entries: Vec<(C64, i64)>,
}

impl SignedMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: &[C64]) -> Self {
        let mut m = Self::new();
        for &p in points {
            m.add(p, 1);
        }
        m
    }

    pub fn add(&mut self, z: C64, mult: i64) {
        if let Some(pos) = self.entries.iter().position(|(p, _)| (p - z).norm() < MULTISET_TOL) {
            self.entries[pos].1 += mult;
            if self.entries[pos].1 == 0 {
                self.entries.remove(pos);
            }
        } else if mult != 0 {
            self.entries.push((z, mult));
        }
    }

    pub fn entries(&self) -> &[(C64, i64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Weighted cardinality Σ multiplicities.
    pub fn cardinality(&self) -> i64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn multiplicity(&self, z: C64) -> i64 {
        self.entries
            .iter()
            .find(|(p, _)| (p - z).norm() < MULTISET_TOL)
            .map_or(0, |e| e.1)
    }

    pub fn weighted_sum<F: Fn(C64) -> C64>(&self, f: F) -> C64 {
        self.entries.iter().map(|&(z, m)| f(z) * m as f64).sum()
    }

    pub fn weighted_product<F: Fn(C64) -> C64>(&self, f: F) -> C64 {
        self.entries.iter().fold(C64::new(1.0, 0.0), |acc, &(z, m)| acc * f(z).powi(m as i32))
    }
}

pub fn ms_combine(a: &SignedMultiset, b: &SignedMultiset, op: MsOp) -> SignedMultiset {
    let mut out = a.clone();
    let sign = match op {
        MsOp::Sum => 1,
        MsOp::Difference => -1,
    };
    for &(z, m) in b.entries() {
        out.add(z, sign * m);
    }
    out
}
