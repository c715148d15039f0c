//! Collapsed Gauss-Legendre rules on the reference triangle.
//!
//! The square `[0,1]^2` is mapped onto the triangle by `(s, t) -> (s, t (1 - s))`.
//! With `m` Gauss points per direction the rule integrates every polynomial of
//! total degree `<= 2m - 2` exactly, and all weights are positive.

use thiserror::Error;

pub const MAX_DEGREE: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QuadratureError {
    #[error("unsupported quadrature degree {0} (supported: 1..={MAX_DEGREE})")]
    UnsupportedDegree(usize),
}

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    degree: usize,
    /// Barycentric coordinates `(1 - x - y, x, y)`.
    points: Vec<[f64; 3]>,
    /// Weights summing to the reference area 1/2.
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(degree: usize) -> Result<Self, QuadratureError> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(QuadratureError::UnsupportedDegree(degree));
        }
        let m = degree.div_ceil(2) + 1;
        let (nodes, w) = gauss_legendre_unit(m);
        let mut points = Vec::with_capacity(m * m);
        let mut weights = Vec::with_capacity(m * m);
        for (s, ws) in nodes.iter().zip(&w) {
            for (t, wt) in nodes.iter().zip(&w) {
                let x = *s;
                let y = t * (1.0 - s);
                points.push([1.0 - x - y, x, y]);
                weights.push(ws * wt * (1.0 - s));
            }
        }
        Ok(Self { degree, points, weights })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule, QuadratureError> {
    QuadratureRule::new(degree)
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `P_m(x)` and `P_m'(x)` by the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|v| v as f64).product()
    }

    /// Exact integral of `x^a y^b` over the reference triangle: `a! b! / (a + b + 2)!`.
    fn monomial_exact(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn integrate(rule: &QuadratureRule, a: usize, b: usize) -> f64 {
        rule.points()
            .iter()
            .zip(rule.weights())
            .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
            .sum()
    }

    #[test]
    fn weights_sum_to_half() {
        for d in 1..=MAX_DEGREE {
            let r = QuadratureRule::new(d).unwrap();
            let s: f64 = r.weights().iter().sum();
            assert!((s - 0.5).abs() < 1e-15, "degree {d}: {s}");
            assert!(r.weights().iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn x3y2_degree8() {
        let r = QuadratureRule::new(8).unwrap();
        assert!((monomial_exact(3, 2) - 1.0 / 420.0).abs() < 1e-18);
        assert!((integrate(&r, 3, 2) - 1.0 / 420.0).abs() < 1e-16);
    }

    #[test]
    fn exact_up_to_declared_degree() {
        for d in 1..=MAX_DEGREE {
            let r = QuadratureRule::new(d).unwrap();
            for a in 0..=d {
                for b in 0..=(d - a) {
                    let err = (integrate(&r, a, b) - monomial_exact(a, b)).abs();
                    assert!(err < 1e-15, "degree {d}, x^{a} y^{b}: {err}");
                }
            }
        }
    }

    #[test]
    fn constant_degree2() {
        let r = QuadratureRule::new(2).unwrap();
        assert!((integrate(&r, 0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn barycentric_points_inside() {
        let r = QuadratureRule::new(8).unwrap();
        for p in r.points() {
            assert!(p.iter().all(|l| *l >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unsupported_degrees() {
        assert_eq!(QuadratureRule::new(0).unwrap_err(), QuadratureError::UnsupportedDegree(0));
        assert_eq!(QuadratureRule::new(11).unwrap_err(), QuadratureError::UnsupportedDegree(11));
    }
}
