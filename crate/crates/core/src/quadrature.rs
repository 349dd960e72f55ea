//! Composite Gauss–Legendre rules on straight panels and circular arcs.

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::core_types::{C64, I};

/// Nodes and weights of the n-point Gauss–Legendre rule on [−1, 1].
pub fn gl(n: usize) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(n.max(2)).expect("Gauss-Legendre degree >= 2");
    let mut v: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    v
}

/// Discretised contour; `weights` already include dλ.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `panels` equal pieces of the straight segment a → b.
    pub fn segment(a: C64, b: C64, panels: usize, n: usize) -> Self {
        let rule = gl(n);
        let mut g = QuadratureGrid::default();
        let panels = panels.max(1);
        for k in 0..panels {
            let pa = a + (b - a) * (k as f64 / panels as f64);
            let pb = a + (b - a) * ((k + 1) as f64 / panels as f64);
            let half = (pb - pa) * 0.5;
            let mid = (pa + pb) * 0.5;
            for &(x, w) in &rule {
                g.nodes.push(mid + half * x);
                g.weights.push(half * w);
            }
        }
        g
    }

    /// Arc of the circle |λ − centre| = r from angle t0 to t1.
    pub fn arc(centre: C64, r: f64, t0: f64, t1: f64, panels: usize, n: usize) -> Self {
        let rule = gl(n);
        let mut g = QuadratureGrid::default();
        let panels = panels.max(1);
        for k in 0..panels {
            let a = t0 + (t1 - t0) * k as f64 / panels as f64;
            let b = t0 + (t1 - t0) * (k + 1) as f64 / panels as f64;
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for &(x, w) in &rule {
                let t = mid + half * x;
                let e = C64::from_polar(r, t);
                g.nodes.push(centre + e);
                g.weights.push(I * e * (half * w));
            }
        }
        g
    }

    pub fn append(&mut self, other: QuadratureGrid) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }

    pub fn integrate<F: Fn(C64) -> C64>(&self, f: F) -> C64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| f(z) * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_sum_to_length() {
        let a = C64::new(-0.3, 0.1);
        let b = C64::new(1.2, -0.4);
        let g = QuadratureGrid::segment(a, b, 3, 16);
        let s: C64 = g.weights.iter().sum();
        assert!((s - (b - a)).norm() < 1e-12);
        let c = QuadratureGrid::arc(C64::new(0.0, -0.65), 0.1, -PI, PI, 4, 16);
        let s: C64 = c.weights.iter().sum();
        assert!(s.norm() < 1e-12);
        let res = c.integrate(|z| 1.0 / (z - C64::new(0.0, -0.65)));
        assert!((res - 2.0 * PI * I).norm() < 1e-12);
    }

    #[test]
    fn nodes_are_interior() {
        let g = QuadratureGrid::segment(C64::new(0.0, 0.0), C64::new(1.0, 0.0), 2, 8);
        assert!(g.nodes.iter().all(|z| z.re > 0.0 && z.re < 1.0 && (z.re - 0.5).abs() > 1e-6));
    }

    #[test]
    fn polynomial_exactness() {
        let g = QuadratureGrid::segment(C64::new(-1.0, 0.0), C64::new(1.0, 0.0), 1, 10);
        let v = g.integrate(|z| z.powi(18));
        assert!((v.re - 2.0 / 19.0).abs() < 1e-14);
    }
}
