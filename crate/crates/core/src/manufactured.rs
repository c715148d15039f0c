//! Smooth exact solution on the unit square used for convergence studies,
//! together with the forcing terms that make it solve the discrete model.

use std::f64::consts::PI;

use crate::forms::SchemeParams;

/// Exact fields scaled by `cos t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub gamma: f64,
    pub mobility: f64,
    pub nu: f64,
    pub mu: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl Manufactured {
    pub fn new(p: &SchemeParams) -> Self {
        Self { gamma: p.gamma, mobility: p.mobility, nu: p.nu, mu: p.mu, lambda: p.lambda, sigma: p.sigma }
    }
}

// X(s) = cos^2(pi s) and its derivatives.
fn cx(s: f64, k: u32) -> f64 {
    let (a, b) = ((2.0 * PI * s).sin(), (2.0 * PI * s).cos());
    match k {
        0 => (PI * s).cos().powi(2),
        1 => -PI * a,
        2 => -2.0 * PI * PI * b,
        3 => 4.0 * PI.powi(3) * a,
        4 => 8.0 * PI.powi(4) * b,
        _ => unreachable!(),
    }
}

// a(s) = sin^2(pi s)
fn sa(s: f64, k: u32) -> f64 {
    match k {
        0 => (PI * s).sin().powi(2),
        1 => PI * (2.0 * PI * s).sin(),
        2 => 2.0 * PI * PI * (2.0 * PI * s).cos(),
        _ => unreachable!(),
    }
}

// b(s) = sin(2 pi s)
fn sb(s: f64, k: u32) -> f64 {
    match k {
        0 => (2.0 * PI * s).sin(),
        1 => 2.0 * PI * (2.0 * PI * s).cos(),
        2 => -4.0 * PI * PI * (2.0 * PI * s).sin(),
        _ => unreachable!(),
    }
}

// second derivative of X^3
fn cx3_dd(s: f64) -> f64 {
    let (x, d1, d2) = (cx(s, 0), cx(s, 1), cx(s, 2));
    6.0 * x * d1 * d1 + 3.0 * x * x * d2
}

impl Manufactured {
    pub fn phi(&self, x: [f64; 2], t: f64) -> f64 {
        t.cos() * cx(x[0], 0) * cx(x[1], 0)
    }

    pub fn grad_phi(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = t.cos();
        [c * cx(x[0], 1) * cx(x[1], 0), c * cx(x[0], 0) * cx(x[1], 1)]
    }

    fn lap_phi(&self, x: [f64; 2], t: f64) -> f64 {
        t.cos() * (cx(x[0], 2) * cx(x[1], 0) + cx(x[0], 0) * cx(x[1], 2))
    }

    fn grad_lap_phi(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = t.cos();
        [
            c * (cx(x[0], 3) * cx(x[1], 0) + cx(x[0], 1) * cx(x[1], 2)),
            c * (cx(x[0], 2) * cx(x[1], 1) + cx(x[0], 0) * cx(x[1], 3)),
        ]
    }

    fn bilap_phi(&self, x: [f64; 2], t: f64) -> f64 {
        t.cos() * (cx(x[0], 4) * cx(x[1], 0) + 2.0 * cx(x[0], 2) * cx(x[1], 2) + cx(x[0], 0) * cx(x[1], 4))
    }

    /// Chemical potential `-gamma lap phi + (phi^3 - phi) / gamma`.
    pub fn omega(&self, x: [f64; 2], t: f64) -> f64 {
        let p = self.phi(x, t);
        -self.gamma * self.lap_phi(x, t) + (p * p * p - p) / self.gamma
    }

    pub fn grad_omega(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let p = self.phi(x, t);
        let g = self.grad_phi(x, t);
        let gl = self.grad_lap_phi(x, t);
        let s = (3.0 * p * p - 1.0) / self.gamma;
        [-self.gamma * gl[0] + s * g[0], -self.gamma * gl[1] + s * g[1]]
    }

    fn lap_omega(&self, x: [f64; 2], t: f64) -> f64 {
        let c = t.cos();
        let (xx, yy) = (cx(x[0], 0), cx(x[1], 0));
        let lap_cube = c.powi(3) * (cx3_dd(x[0]) * yy.powi(3) + xx.powi(3) * cx3_dd(x[1]));
        -self.gamma * self.bilap_phi(x, t) + (lap_cube - self.lap_phi(x, t)) / self.gamma
    }

    pub fn u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = PI * t.cos();
        [c * sa(x[0], 0) * sb(x[1], 0), -c * sb(x[0], 0) * sa(x[1], 0)]
    }

    /// `g[c] = grad u_c`.
    pub fn grad_u(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let c = PI * t.cos();
        [
            [c * sa(x[0], 1) * sb(x[1], 0), c * sa(x[0], 0) * sb(x[1], 1)],
            [-c * sb(x[0], 1) * sa(x[1], 0), -c * sb(x[0], 0) * sa(x[1], 1)],
        ]
    }

    fn lap_u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = PI * t.cos();
        [
            c * (sa(x[0], 2) * sb(x[1], 0) + sa(x[0], 0) * sb(x[1], 2)),
            -c * (sb(x[0], 2) * sa(x[1], 0) + sb(x[0], 0) * sa(x[1], 2)),
        ]
    }

    pub fn p(&self, x: [f64; 2], t: f64) -> f64 {
        t.cos() * (2.0 * x[0] - 2.0) * (2.0 * x[1] - 1.0)
    }

    pub fn grad_p(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = t.cos();
        [c * 2.0 * (2.0 * x[1] - 1.0), c * 2.0 * (2.0 * x[0] - 2.0)]
    }

    pub fn b(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = t.cos();
        let (sx, cxx) = ((PI * x[0]).sin(), (PI * x[0]).cos());
        let (sy, cy) = ((PI * x[1]).sin(), (PI * x[1]).cos());
        [c * sx * cy, -c * sy * cxx]
    }

    /// `g[c] = grad B_c`.
    pub fn grad_b(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let c = PI * t.cos();
        let (sx, cxx) = ((PI * x[0]).sin(), (PI * x[0]).cos());
        let (sy, cy) = ((PI * x[1]).sin(), (PI * x[1]).cos());
        [[c * cxx * cy, -c * sx * sy], [c * sy * sx, -c * cy * cxx]]
    }

    pub fn curl_b(&self, x: [f64; 2], t: f64) -> f64 {
        2.0 * PI * t.cos() * (PI * x[0]).sin() * (PI * x[1]).sin()
    }

    /// Phase-field forcing.
    pub fn g_phi(&self, x: [f64; 2], t: f64) -> f64 {
        let phi_t = -t.sin() * cx(x[0], 0) * cx(x[1], 0);
        let g = self.grad_phi(x, t);
        let u = self.u(x, t);
        phi_t + g[0] * u[0] + g[1] * u[1] - self.mobility * self.gamma * self.lap_omega(x, t)
    }

    /// Momentum forcing.
    pub fn f_u(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let u = self.u(x, t);
        let gu = self.grad_u(x, t);
        let lu = self.lap_u(x, t);
        let gp = self.grad_p(x, t);
        let b = self.b(x, t);
        let cb = self.curl_b(x, t);
        let w = self.omega(x, t);
        let gphi = self.grad_phi(x, t);
        let rate = -t.tan();
        let lorentz = [cb * b[1] / self.mu, -cb * b[0] / self.mu];
        let mut out = [0.0; 2];
        for c in 0..2 {
            let adv = u[0] * gu[c][0] + u[1] * gu[c][1];
            out[c] = rate * u[c] - self.nu * lu[c] + adv + lorentz[c] + gp[c] - self.lambda * w * gphi[c];
        }
        out
    }

    /// Induction forcing.
    pub fn g_b(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let b = self.b(x, t);
        let gb = self.grad_b(x, t);
        let u = self.u(x, t);
        let gu = self.grad_u(x, t);
        let rate = -t.tan();
        // grad (u1 B2 - u2 B1)
        let gs = [0, 1].map(|d| gu[0][d] * b[1] + u[0] * gb[1][d] - gu[1][d] * b[0] - u[1] * gb[0][d]);
        let k = 2.0 * PI * PI / (self.mu * self.sigma);
        [rate * b[0] + k * b[0] - gs[1], rate * b[1] + k * b[1] + gs[0]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 1e-5;
    const TOL: f64 = 1e-6;

    fn m() -> Manufactured {
        Manufactured { gamma: 0.7, mobility: 1.3, nu: 0.9, mu: 1.1, lambda: 0.6, sigma: 2.0 }
    }

    fn samples() -> Vec<([f64; 2], f64)> {
        let mut v = Vec::new();
        for &x in &[0.13, 0.41, 0.77] {
            for &y in &[0.08, 0.52, 0.93] {
                for &t in &[0.0, 0.35, 1.0] {
                    v.push(([x, y], t));
                }
            }
        }
        v
    }

    fn d(f: impl Fn([f64; 2]) -> f64, x: [f64; 2], dir: usize) -> f64 {
        let (mut a, mut b) = (x, x);
        a[dir] += H;
        b[dir] -= H;
        (f(a) - f(b)) / (2.0 * H)
    }

    fn close(a: f64, b: f64, scale: f64) -> bool {
        (a - b).abs() <= TOL * scale.max(1.0)
    }

    #[test]
    fn one_dimensional_factors() {
        for s in [0.1, 0.37, 0.8] {
            for k in 0..4 {
                let fd = (cx(s + H, k) - cx(s - H, k)) / (2.0 * H);
                assert!(close(fd, cx(s, k + 1), cx(s, k + 1).abs()), "X^({}) at {s}", k + 1);
            }
            for k in 0..2 {
                let fd = (sa(s + H, k) - sa(s - H, k)) / (2.0 * H);
                assert!(close(fd, sa(s, k + 1), sa(s, k + 1).abs()));
                let fd = (sb(s + H, k) - sb(s - H, k)) / (2.0 * H);
                assert!(close(fd, sb(s, k + 1), sb(s, k + 1).abs()));
            }
            let c3 = |s: f64| cx(s, 0).powi(3);
            let h = 1e-4;
            let fd2 = (c3(s + h) - 2.0 * c3(s) + c3(s - h)) / (h * h);
            assert!((fd2 - cx3_dd(s)).abs() < 1e-5 * cx3_dd(s).abs().max(1.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = m();
        for (x, t) in samples() {
            for dir in 0..2 {
                let g = m.grad_phi(x, t)[dir];
                assert!(close(d(|y| m.phi(y, t), x, dir), g, g.abs()));
                let g = m.grad_omega(x, t)[dir];
                assert!(close(d(|y| m.omega(y, t), x, dir), g, g.abs()));
                let g = m.grad_p(x, t)[dir];
                assert!(close(d(|y| m.p(y, t), x, dir), g, g.abs()));
                let g = m.grad_lap_phi(x, t)[dir];
                assert!(close(d(|y| m.lap_phi(y, t), x, dir), g, g.abs()));
                for c in 0..2 {
                    let g = m.grad_u(x, t)[c][dir];
                    assert!(close(d(|y| m.u(y, t)[c], x, dir), g, g.abs()));
                    let g = m.grad_b(x, t)[c][dir];
                    assert!(close(d(|y| m.b(y, t)[c], x, dir), g, g.abs()));
                }
            }
        }
    }

    #[test]
    fn laplacians_match_divergence_of_gradients() {
        let m = m();
        for (x, t) in samples() {
            let lap = d(|y| m.grad_phi(y, t)[0], x, 0) + d(|y| m.grad_phi(y, t)[1], x, 1);
            assert!(close(lap, m.lap_phi(x, t), m.lap_phi(x, t).abs()));
            let bl = d(|y| m.grad_lap_phi(y, t)[0], x, 0) + d(|y| m.grad_lap_phi(y, t)[1], x, 1);
            assert!(close(bl, m.bilap_phi(x, t), m.bilap_phi(x, t).abs()));
            let lw = d(|y| m.grad_omega(y, t)[0], x, 0) + d(|y| m.grad_omega(y, t)[1], x, 1);
            assert!(close(lw, m.lap_omega(x, t), m.lap_omega(x, t).abs()));
            for c in 0..2 {
                let lu = d(|y| m.grad_u(y, t)[c][0], x, 0) + d(|y| m.grad_u(y, t)[c][1], x, 1);
                assert!(close(lu, m.lap_u(x, t)[c], m.lap_u(x, t)[c].abs()));
            }
        }
    }

    #[test]
    fn structural_identities() {
        let m = m();
        for (x, t) in samples() {
            let gu = m.grad_u(x, t);
            let gb = m.grad_b(x, t);
            assert!((gu[0][0] + gu[1][1]).abs() < 1e-12);
            assert!((gb[0][0] + gb[1][1]).abs() < 1e-12);
            assert!((gb[1][0] - gb[0][1] - m.curl_b(x, t)).abs() < 1e-12);
        }
        for s in [0.0, 0.3, 1.0] {
            for p in [[s, 0.0], [s, 1.0], [0.0, s], [1.0, s]] {
                let u = m.u(p, 0.4);
                assert!(u[0].abs() < 1e-12 && u[1].abs() < 1e-12);
            }
            // homogeneous Neumann data for phi and omega
            assert!(m.grad_phi([0.0, s], 0.2)[0].abs() < 1e-12);
            assert!(m.grad_omega([1.0, s], 0.2)[0].abs() < 1e-10);
            assert!(m.grad_omega([s, 0.0], 0.2)[1].abs() < 1e-10);
        }
    }

    #[test]
    fn forcing_terms_match_finite_difference_residuals() {
        let m = m();
        for (x, t) in samples() {
            // phase-field equation
            let phi_t = (m.phi(x, t + H) - m.phi(x, t - H)) / (2.0 * H);
            let g = m.grad_phi(x, t);
            let u = m.u(x, t);
            let lw = d(|y| m.grad_omega(y, t)[0], x, 0) + d(|y| m.grad_omega(y, t)[1], x, 1);
            let expect = phi_t + g[0] * u[0] + g[1] * u[1] - m.mobility * m.gamma * lw;
            let got = m.g_phi(x, t);
            assert!(close(expect, got, got.abs() * 10.0), "g_phi {expect} vs {got}");

            // momentum equation
            let f = m.f_u(x, t);
            let b = m.b(x, t);
            let cb = m.curl_b(x, t);
            for c in 0..2 {
                let ut = (m.u(x, t + H)[c] - m.u(x, t - H)[c]) / (2.0 * H);
                let lap = d(|y| m.grad_u(y, t)[c][0], x, 0) + d(|y| m.grad_u(y, t)[c][1], x, 1);
                let adv = u[0] * d(|y| m.u(y, t)[c], x, 0) + u[1] * d(|y| m.u(y, t)[c], x, 1);
                let lor = if c == 0 { cb * b[1] } else { -cb * b[0] } / m.mu;
                let gp = d(|y| m.p(y, t), x, c);
                let e = ut - m.nu * lap + adv + lor + gp - m.lambda * m.omega(x, t) * g[c];
                assert!(close(e, f[c], f[c].abs() * 10.0), "f_u[{c}] {e} vs {}", f[c]);
            }

            // induction equation with the vector curl of a scalar s = (d2 s, -d1 s)
            let gb = m.g_b(x, t);
            let cross = |y: [f64; 2]| {
                let (u, b) = (m.u(y, t), m.b(y, t));
                u[0] * b[1] - u[1] * b[0]
            };
            let curl_b = |y: [f64; 2]| m.curl_b(y, t);
            let rot = |s: &dyn Fn([f64; 2]) -> f64| [d(s, x, 1), -d(s, x, 0)];
            let cc = rot(&curl_b);
            let cu = rot(&cross);
            for c in 0..2 {
                let bt = (m.b(x, t + H)[c] - m.b(x, t - H)[c]) / (2.0 * H);
                let e = bt + cc[c] / (m.mu * m.sigma) - cu[c];
                assert!(close(e, gb[c], gb[c].abs() * 10.0), "g_b[{c}] {e} vs {}", gb[c]);
            }
        }
    }
}
