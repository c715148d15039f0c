//! Energy, mass, error norms against exact fields and convergence rates.

use thiserror::Error;

use crate::fespace::{CellBasis, FeSpace};
use crate::forms::SchemeParams;
use crate::manufactured::Manufactured;
use crate::scheme::{Spaces, StateFields};

/// Calls `f(weight, x, values, gradients)` at every quadrature point, where
/// `values[c]` and `gradients[c]` belong to component `c` of the FE function.
pub fn for_each_point<F>(space: &FeSpace, coeffs: &[f64], mut f: F)
where
    F: FnMut(f64, [f64; 2], &[f64], &[[f64; 2]]),
{
    let nc = space.components();
    let mut b = CellBasis::default();
    let mut local = Vec::new();
    let mut vals = vec![0.0; nc];
    let mut grads = vec![[0.0; 2]; nc];
    for cell in 0..space.mesh().n_cells() {
        space.cell_basis(cell, &mut b);
        let mut per_comp = Vec::with_capacity(nc);
        for c in 0..nc {
            space.gather(cell, c, coeffs, &mut local);
            per_comp.push(local.clone());
        }
        for q in 0..b.n_points {
            for c in 0..nc {
                let (v, g) = b.eval(q, &per_comp[c]);
                vals[c] = v;
                grads[c] = g;
            }
            f(b.jxw[q], b.points[q], &vals, &grads);
        }
    }
}

/// `‖u_h - u‖_{L2}` for a scalar or vector field.
pub fn l2_error(space: &FeSpace, coeffs: &[f64], exact: impl Fn([f64; 2]) -> Vec<f64>) -> f64 {
    let mut s = 0.0;
    for_each_point(space, coeffs, |w, x, v, _| {
        let e = exact(x);
        s += w * v.iter().zip(&e).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    });
    s.sqrt()
}

/// `‖grad (u_h - u)‖_{L2}`; `exact(x)[c]` is the gradient of component `c`.
pub fn h1_semi_error(space: &FeSpace, coeffs: &[f64], exact: impl Fn([f64; 2]) -> Vec<[f64; 2]>) -> f64 {
    let mut s = 0.0;
    for_each_point(space, coeffs, |w, x, _, g| {
        let e = exact(x);
        s += w * g.iter().zip(&e).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum::<f64>();
    });
    s.sqrt()
}

fn curl(g: &[[f64; 2]]) -> f64 {
    g[1][0] - g[0][1]
}

fn div(g: &[[f64; 2]]) -> f64 {
    g[0][0] + g[1][1]
}

/// `∫ phi_h` by the assembly rule (exact for the FE spaces used here).
pub fn total_mass(space: &FeSpace, phi: &[f64]) -> f64 {
    // per-cell sums combined with compensated summation
    let mut b = CellBasis::default();
    let mut local = Vec::new();
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for cell in 0..space.mesh().n_cells() {
        space.cell_basis(cell, &mut b);
        space.gather(cell, 0, phi, &mut local);
        let cell_sum: f64 = (0..b.n_points).map(|q| b.jxw[q] * b.eval(q, &local).0).sum();
        let t = sum + cell_sum;
        comp += if sum.abs() >= cell_sum.abs() { (sum - t) + cell_sum } else { (cell_sum - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Discrete energy and the dissipation integrals of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub energy: f64,
    /// `‖grad omega‖²`
    pub diss_omega: f64,
    /// `‖grad u‖²`
    pub diss_u: f64,
    /// `‖curl B‖²`
    pub diss_curl_b: f64,
    /// `‖div B‖²`
    pub diss_div_b: f64,
}

/// `lambda (gamma/2 ‖grad phi‖² + ∫F(phi)/gamma) + ½‖u‖² + ‖B‖²/(2 mu)` with
/// `F(phi) = (phi² - 1)² / 4`.
pub fn energy(spaces: &Spaces, state: &StateFields, params: &SchemeParams) -> EnergyReport {
    let (mut grad2, mut pot) = (0.0, 0.0);
    for_each_point(&spaces.scalar, &state.phi, |w, _, v, g| {
        grad2 += w * (g[0][0] * g[0][0] + g[0][1] * g[0][1]);
        pot += w * 0.25 * (v[0] * v[0] - 1.0).powi(2);
    });
    let mut diss_omega = 0.0;
    for_each_point(&spaces.scalar, &state.omega, |w, _, _, g| {
        diss_omega += w * (g[0][0] * g[0][0] + g[0][1] * g[0][1]);
    });
    let (mut u2, mut diss_u) = (0.0, 0.0);
    for_each_point(&spaces.velocity, &state.u, |w, _, v, g| {
        u2 += w * (v[0] * v[0] + v[1] * v[1]);
        diss_u += w * g.iter().map(|d| d[0] * d[0] + d[1] * d[1]).sum::<f64>();
    });
    let (mut b2, mut c2, mut d2) = (0.0, 0.0, 0.0);
    for_each_point(&spaces.magnetic, &state.b, |w, _, v, g| {
        b2 += w * (v[0] * v[0] + v[1] * v[1]);
        c2 += w * curl(g).powi(2);
        d2 += w * div(g).powi(2);
    });
    let energy = params.lambda * (0.5 * params.gamma * grad2 + pot / params.gamma) + 0.5 * u2 + b2 / (2.0 * params.mu);
    EnergyReport { energy, diss_omega, diss_u, diss_curl_b: c2, diss_div_b: d2 }
}

/// Error norms of a state against the manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorReport {
    pub l2_phi: f64,
    pub h1semi_phi: f64,
    pub l2_omega: f64,
    pub l2_u: f64,
    pub h1semi_u: f64,
    pub l2_p: f64,
    pub l2_b: f64,
    pub h1semi_b: f64,
    pub curl_b: f64,
    pub div_b: f64,
}

impl ErrorReport {
    pub const NAMES: [&'static str; 10] =
        ["l2_phi", "h1semi_phi", "l2_omega", "l2_u", "h1semi_u", "l2_p", "l2_B", "h1semi_B", "curl_B", "div_B"];

    pub fn values(&self) -> [f64; 10] {
        [
            self.l2_phi,
            self.h1semi_phi,
            self.l2_omega,
            self.l2_u,
            self.h1semi_u,
            self.l2_p,
            self.l2_b,
            self.h1semi_b,
            self.curl_b,
            self.div_b,
        ]
    }

    pub fn from_values(v: [f64; 10]) -> Self {
        Self {
            l2_phi: v[0],
            h1semi_phi: v[1],
            l2_omega: v[2],
            l2_u: v[3],
            h1semi_u: v[4],
            l2_p: v[5],
            l2_b: v[6],
            h1semi_b: v[7],
            curl_b: v[8],
            div_b: v[9],
        }
    }
}

/// Every norm of [`ErrorReport`] at time `t`. The pressure is compared after
/// removing the mean of both fields.
pub fn error_norms(spaces: &Spaces, state: &StateFields, exact: &Manufactured, t: f64) -> ErrorReport {
    let s = &spaces.scalar;
    let l2_phi = l2_error(s, &state.phi, |x| vec![exact.phi(x, t)]);
    let h1semi_phi = h1_semi_error(s, &state.phi, |x| vec![exact.grad_phi(x, t)]);
    let l2_omega = l2_error(s, &state.omega, |x| vec![exact.omega(x, t)]);
    let l2_u = l2_error(&spaces.velocity, &state.u, |x| exact.u(x, t).to_vec());
    let h1semi_u = h1_semi_error(&spaces.velocity, &state.u, |x| exact.grad_u(x, t).to_vec());
    let (mut ph_mean, mut p_mean) = (0.0, 0.0);
    for_each_point(s, &state.p, |w, x, v, _| {
        ph_mean += w * v[0];
        p_mean += w * exact.p(x, t);
    });
    let l2_p = l2_error(s, &state.p, |x| vec![exact.p(x, t) - p_mean + ph_mean]);
    let l2_b = l2_error(&spaces.magnetic, &state.b, |x| exact.b(x, t).to_vec());
    let h1semi_b = h1_semi_error(&spaces.magnetic, &state.b, |x| exact.grad_b(x, t).to_vec());
    let (mut c2, mut d2) = (0.0, 0.0);
    for_each_point(&spaces.magnetic, &state.b, |w, x, _, g| {
        let e = exact.grad_b(x, t);
        c2 += w * (curl(g) - curl(&e)).powi(2);
        d2 += w * (div(g) - div(&e)).powi(2);
    });
    ErrorReport {
        l2_phi,
        h1semi_phi,
        l2_omega,
        l2_u,
        h1semi_u,
        l2_p,
        l2_b,
        h1semi_b,
        curl_b: c2.sqrt(),
        div_b: d2.sqrt(),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("mesh sizes must be strictly decreasing (row {0})")]
    NonMonotone(usize),
    #[error("no rows")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub h: f64,
    pub dt: f64,
    pub errors: ErrorReport,
    /// `None` on the first row.
    pub rates: Option<[f64; 10]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

/// `rate = log(e_prev / e_cur) / log(h_prev / h_cur)` per norm.
pub fn rate_table(rows: &[(f64, f64, ErrorReport)]) -> Result<RateTable, RateError> {
    if rows.is_empty() {
        return Err(RateError::Empty);
    }
    let mut out = Vec::with_capacity(rows.len());
    for (i, &(h, dt, errors)) in rows.iter().enumerate() {
        let rates = if i == 0 {
            None
        } else {
            let (hp, _, ep) = rows[i - 1];
            if !(h < hp) {
                return Err(RateError::NonMonotone(i));
            }
            let (a, b) = (ep.values(), errors.values());
            Some(std::array::from_fn(|k| (a[k] / b[k]).ln() / (hp / h).ln()))
        };
        out.push(RateRow { h, dt, errors, rates });
    }
    Ok(RateTable { rows: out })
}

impl RateTable {
    /// Rate of norm `k` (see [`ErrorReport::NAMES`]) between the last two rows.
    pub fn final_rate(&self, k: usize) -> Option<f64> {
        self.rows.last()?.rates.map(|r| r[k])
    }
}
