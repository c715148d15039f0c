//! Assembly of the bilinear, trilinear and nonlinear forms of the scheme.
//!
//! All integrals use the shared degree-8 rule. Local indices of a vector
//! space are `component * n_local + i`, global indices
//! `component * n_scalar + dof`.

use thiserror::Error;

use crate::fespace::{CellBasis, FeSpace, SpaceDescriptor};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter {name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("final time {t_final} is shorter than the time step {dt}")]
    FinalTimeTooShort { t_final: f64, dt: f64 },
    #[error("newton_max must be at least 1")]
    NoNewtonIterations,
}

/// Physical and numerical parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    /// Interface width.
    pub gamma: f64,
    pub mobility: f64,
    /// Viscosity.
    pub nu: f64,
    /// Magnetic permeability.
    pub mu: f64,
    /// Capillary coefficient.
    pub lambda: f64,
    /// Electric conductivity.
    pub sigma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub lin_tol: f64,
    pub seed: u64,
    /// Keep an LU factorization across iterations and steps and use it to
    /// precondition GMRES on the current Jacobian, solved to a relative
    /// residual of [`REUSE_FORCING`]; refactor when GMRES needs more than
    /// [`REUSE_MAX_KRYLOV`] iterations.
    pub reuse_jacobian: bool,
}

/// Krylov iteration budget for a Newton update with reused factors.
pub const REUSE_MAX_KRYLOV: usize = 10;

/// Relative linear residual accepted for a Newton update with reused factors.
pub const REUSE_FORCING: f64 = 1e-4;

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            mobility: 1.0,
            nu: 1.0,
            mu: 1.0,
            lambda: 1.0,
            sigma: 1.0,
            dt: 1e-2,
            t_final: 1.0,
            newton_tol: 1e-10,
            newton_max: 20,
            lin_tol: 1e-10,
            seed: 0,
            reuse_jacobian: true,
        }
    }
}

impl SchemeParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("gamma", self.gamma),
            ("mobility", self.mobility),
            ("nu", self.nu),
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("sigma", self.sigma),
            ("dt", self.dt),
            ("newton_tol", self.newton_tol),
            ("lin_tol", self.lin_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        if self.t_final < self.dt * (1.0 - 1e-12) {
            return Err(ParamError::FinalTimeTooShort { t_final: self.t_final, dt: self.dt });
        }
        if self.newton_max == 0 {
            return Err(ParamError::NoNewtonIterations);
        }
        Ok(())
    }

    /// Number of time steps `K = round(T / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// A sparse operator labelled with the spaces of its rows and columns.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    pub matrix: CsrMatrix,
    pub row_space: SpaceDescriptor,
    pub col_space: SpaceDescriptor,
}

impl AssembledOperator {
    fn new(matrix: CsrMatrix, rows: &FeSpace, cols: &FeSpace) -> Self {
        debug_assert_eq!(matrix.n_rows(), rows.n_dofs());
        debug_assert_eq!(matrix.n_cols(), cols.n_dofs());
        Self { matrix, row_space: rows.descriptor(), col_space: cols.descriptor() }
    }

    pub fn transpose(&self) -> Self {
        Self { matrix: self.matrix.transpose(), row_space: self.col_space, col_space: self.row_space }
    }
}

fn same_mesh(a: &FeSpace, b: &FeSpace) {
    assert!(std::ptr::eq(a.mesh(), b.mesh()), "spaces must share one mesh");
}

/// Generic cell loop: `kernel(cell, row_basis, col_basis, local)` fills the
/// dense local matrix (row-major, `rows.n_local * rows.components` rows).
/// Zeros are kept so that the sparsity pattern depends only on the spaces.
fn assemble_pair_full<K>(rows: &FeSpace, cols: &FeSpace, mut kernel: K) -> CsrMatrix
where
    K: FnMut(usize, &CellBasis, &CellBasis, &mut [f64]),
{
    same_mesh(rows, cols);
    let mesh = rows.mesh();
    let (nlr, nlc) = (rows.n_local(), cols.n_local());
    let (nr, nc) = (nlr * rows.components(), nlc * cols.components());
    let mut local = vec![0.0; nr * nc];
    let mut rb = CellBasis::default();
    let mut cb = CellBasis::default();
    let mut trips = Vec::with_capacity(mesh.n_cells() * nr * nc);
    let shared = std::ptr::eq(rows, cols);
    for cell in 0..mesh.n_cells() {
        rows.cell_basis(cell, &mut rb);
        if !shared {
            cols.cell_basis(cell, &mut cb);
        }
        local.iter_mut().for_each(|v| *v = 0.0);
        kernel(cell, &rb, if shared { &rb } else { &cb }, &mut local);
        let (rd, cd) = (rows.cell_dofs(cell), cols.cell_dofs(cell));
        for a in 0..nr {
            let gr = (a / nlr) * rows.n_scalar() + rd[a % nlr];
            for b in 0..nc {
                trips.push((gr, (b / nlc) * cols.n_scalar() + cd[b % nlc], local[a * nc + b]));
            }
        }
    }
    CsrMatrix::from_triplets(rows.n_dofs(), cols.n_dofs(), &trips).expect("indices in range")
}

/// Value of a vector FE function at every quadrature point of a cell.
fn vector_at_points(space: &FeSpace, cell: usize, basis: &CellBasis, coeffs: &[f64], local: &mut Vec<f64>) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; basis.n_points];
    for c in 0..2 {
        space.gather(cell, c, coeffs, local);
        for (q, o) in out.iter_mut().enumerate() {
            o[c] = basis.eval(q, local).0;
        }
    }
    out
}

/// `M_ij = c (phi_j, phi_i)`, block diagonal over components.
pub fn assemble_mass(space: &FeSpace, c: f64) -> AssembledOperator {
    let nl = space.n_local();
    let ncomp = space.components();
    let n = nl * ncomp;
    let m = assemble_pair_full(space, space, |_, b, _, local| {
        for q in 0..b.n_points {
            let w = c * b.jxw[q];
            for i in 0..nl {
                let wi = w * b.value(q, i);
                for j in 0..nl {
                    let v = wi * b.value(q, j);
                    for comp in 0..ncomp {
                        local[(comp * nl + i) * n + comp * nl + j] += v;
                    }
                }
            }
        }
    });
    AssembledOperator::new(m, space, space)
}

/// `K_ij = c (grad phi_j, grad phi_i)`, block diagonal over components.
pub fn assemble_stiffness(space: &FeSpace, c: f64) -> AssembledOperator {
    let nl = space.n_local();
    let ncomp = space.components();
    let n = nl * ncomp;
    let m = assemble_pair_full(space, space, |_, b, _, local| {
        for q in 0..b.n_points {
            let w = c * b.jxw[q];
            for i in 0..nl {
                let gi = b.grad(q, i);
                for j in 0..nl {
                    let gj = b.grad(q, j);
                    let v = w * (gi[0] * gj[0] + gi[1] * gj[1]);
                    for comp in 0..ncomp {
                        local[(comp * nl + i) * n + comp * nl + j] += v;
                    }
                }
            }
        }
    });
    AssembledOperator::new(m, space, space)
}

/// `B_{q,v} = (q, div v)`: rows in the pressure space, columns in the velocity space.
pub fn assemble_div_coupling(velocity: &FeSpace, pressure: &FeSpace) -> AssembledOperator {
    assert_eq!(velocity.components(), 2);
    assert_eq!(pressure.components(), 1);
    let (nlp, nlu) = (pressure.n_local(), velocity.n_local());
    let nc = 2 * nlu;
    let m = assemble_pair_full(pressure, velocity, |_, pb, ub, local| {
        for q in 0..pb.n_points {
            let w = pb.jxw[q];
            for i in 0..nlp {
                let wi = w * pb.value(q, i);
                for j in 0..nlu {
                    let g = ub.grad(q, j);
                    local[i * nc + j] += wi * g[0];
                    local[i * nc + nlu + j] += wi * g[1];
                }
            }
        }
    });
    AssembledOperator::new(m, pressure, velocity)
}

/// Skew-symmetric convection `N_ij = b(u_prev, phi_j, phi_i)` with
/// `b(u, v, w) = 1/2 [(u . grad v, w) - (u . grad w, v)]`.
pub fn assemble_convection(velocity: &FeSpace, u_prev: &[f64]) -> AssembledOperator {
    assert_eq!(velocity.components(), 2);
    assert_eq!(u_prev.len(), velocity.n_dofs());
    let nl = velocity.n_local();
    let n = 2 * nl;
    let mut scratch = Vec::new();
    let m = assemble_pair_full(velocity, velocity, |cell, b, _, local| {
        let uq = vector_at_points(velocity, cell, b, u_prev, &mut scratch);
        for (q, u) in uq.iter().enumerate() {
            let w = 0.5 * b.jxw[q];
            for i in 0..nl {
                let gi = b.grad(q, i);
                let vi = b.value(q, i);
                let adv_i = u[0] * gi[0] + u[1] * gi[1];
                for j in 0..nl {
                    let gj = b.grad(q, j);
                    let adv_j = u[0] * gj[0] + u[1] * gj[1];
                    let v = w * (adv_j * vi - adv_i * b.value(q, j));
                    local[i * n + j] += v;
                    local[(nl + i) * n + nl + j] += v;
                }
            }
        }
    });
    AssembledOperator::new(m, velocity, velocity)
}

/// Phase transport pair: `T[xi, v] = ((grad phi_prev . v), xi)` and its transpose
/// `T^T[v, omega] = (omega grad phi_prev, v)`.
pub fn assemble_phase_transport(scalar: &FeSpace, velocity: &FeSpace, phi_prev: &[f64]) -> (AssembledOperator, AssembledOperator) {
    assert_eq!(scalar.components(), 1);
    assert_eq!(velocity.components(), 2);
    let (nls, nlu) = (scalar.n_local(), velocity.n_local());
    let nc = 2 * nlu;
    let mut loc = Vec::new();
    let m = assemble_pair_full(scalar, velocity, |cell, sb, ub, local| {
        scalar.gather(cell, 0, phi_prev, &mut loc);
        for q in 0..sb.n_points {
            let (_, gp) = sb.eval(q, &loc);
            let w = sb.jxw[q];
            for i in 0..nls {
                let wi = w * sb.value(q, i);
                for j in 0..nlu {
                    let vj = ub.value(q, j);
                    local[i * nc + j] += wi * gp[0] * vj;
                    local[i * nc + nlu + j] += wi * gp[1] * vj;
                }
            }
        }
    });
    let t = AssembledOperator::new(m, scalar, velocity);
    let tt = t.transpose();
    (t, tt)
}

/// Lorentz pair: `L[v, zeta] = c (curl zeta, v x B_prev)` with the 2D reductions
/// `curl zeta = d1 zeta2 - d2 zeta1`, `v x B = v1 B2 - v2 B1`; the second
/// operator is the transpose (induction coupling).
pub fn assemble_lorentz(magnetic: &FeSpace, velocity: &FeSpace, b_prev: &[f64], c: f64) -> (AssembledOperator, AssembledOperator) {
    assert_eq!(magnetic.components(), 2);
    assert_eq!(velocity.components(), 2);
    let (nlb, nlu) = (magnetic.n_local(), velocity.n_local());
    let nc = 2 * nlb;
    let mut scratch = Vec::new();
    let m = assemble_pair_full(velocity, magnetic, |cell, ub, bb, local| {
        let bq = vector_at_points(magnetic, cell, bb, b_prev, &mut scratch);
        for (q, bv) in bq.iter().enumerate() {
            let w = c * ub.jxw[q];
            for i in 0..nlu {
                let vi = w * ub.value(q, i);
                // v = phi_i e1 -> v x B = phi_i B2 ; v = phi_i e2 -> -phi_i B1
                let cross = [vi * bv[1], -vi * bv[0]];
                for j in 0..nlb {
                    let g = bb.grad(q, j);
                    // zeta = psi e1 -> curl = -d2 psi ; zeta = psi e2 -> curl = d1 psi
                    let curl = [-g[1], g[0]];
                    for a in 0..2 {
                        for d in 0..2 {
                            local[(a * nlu + i) * nc + d * nlb + j] += cross[a] * curl[d];
                        }
                    }
                }
            }
        }
    });
    let l = AssembledOperator::new(m, velocity, magnetic);
    let lt = l.transpose();
    (l, lt)
}

/// `A_ij = c_curl (curl phi_j, curl phi_i) + c_div (div phi_j, div phi_i)`.
pub fn assemble_curlcurl_divdiv(magnetic: &FeSpace, c_curl: f64, c_div: f64) -> AssembledOperator {
    assert_eq!(magnetic.components(), 2);
    let nl = magnetic.n_local();
    let n = 2 * nl;
    let m = assemble_pair_full(magnetic, magnetic, |_, b, _, local| {
        for q in 0..b.n_points {
            let w = b.jxw[q];
            for i in 0..nl {
                let gi = b.grad(q, i);
                let (curl_i, div_i) = ([-gi[1], gi[0]], [gi[0], gi[1]]);
                for j in 0..nl {
                    let gj = b.grad(q, j);
                    let (curl_j, div_j) = ([-gj[1], gj[0]], [gj[0], gj[1]]);
                    for a in 0..2 {
                        for d in 0..2 {
                            local[(a * nl + i) * n + d * nl + j] +=
                                w * (c_curl * curl_i[a] * curl_j[d] + c_div * div_i[a] * div_j[d]);
                        }
                    }
                }
            }
        }
    });
    AssembledOperator::new(m, magnetic, magnetic)
}

/// Convex-split double-well term: residual `c ((phi_iter^3 - phi_prev), psi_i)` and
/// its Jacobian `c (3 phi_iter^2 phi_j, psi_i)`.
pub fn cubic_term(space: &FeSpace, phi_iter: &[f64], phi_prev: &[f64], c: f64) -> (Vec<f64>, AssembledOperator) {
    assert_eq!(space.components(), 1);
    let nl = space.n_local();
    let mut residual = vec![0.0; space.n_dofs()];
    let (mut li, mut lp) = (Vec::new(), Vec::new());
    let jac = assemble_pair_full(space, space, |cell, b, _, local| {
        space.gather(cell, 0, phi_iter, &mut li);
        space.gather(cell, 0, phi_prev, &mut lp);
        let dofs = space.cell_dofs(cell);
        for q in 0..b.n_points {
            let (pi, _) = b.eval(q, &li);
            let (pp, _) = b.eval(q, &lp);
            let w = c * b.jxw[q];
            let r = w * (pi * pi * pi - pp);
            let d = w * 3.0 * pi * pi;
            for i in 0..nl {
                let vi = b.value(q, i);
                residual[dofs[i]] += r * vi;
                for j in 0..nl {
                    local[i * nl + j] += d * vi * b.value(q, j);
                }
            }
        }
    });
    (residual, AssembledOperator::new(jac, space, space))
}

/// Load vector `l_i = (g, phi_i)` of a scalar function.
pub fn assemble_source_scalar(space: &FeSpace, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    assert_eq!(space.components(), 1);
    let mut out = vec![0.0; space.n_dofs()];
    let mut b = CellBasis::default();
    for cell in 0..space.mesh().n_cells() {
        space.cell_basis(cell, &mut b);
        let dofs = space.cell_dofs(cell);
        for q in 0..b.n_points {
            let w = b.jxw[q] * g(b.points[q]);
            for (i, d) in dofs.iter().enumerate() {
                out[*d] += w * b.value(q, i);
            }
        }
    }
    out
}

/// Load vector `l_i = (g, phi_i)` of a vector function.
pub fn assemble_source_vector(space: &FeSpace, g: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    assert_eq!(space.components(), 2);
    let ns = space.n_scalar();
    let mut out = vec![0.0; space.n_dofs()];
    let mut b = CellBasis::default();
    for cell in 0..space.mesh().n_cells() {
        space.cell_basis(cell, &mut b);
        let dofs = space.cell_dofs(cell);
        for q in 0..b.n_points {
            let gv = g(b.points[q]);
            for (i, d) in dofs.iter().enumerate() {
                let w = b.jxw[q] * b.value(q, i);
                out[*d] += w * gv[0];
                out[ns + d] += w * gv[1];
            }
        }
    }
    out
}

/// `l_i = (grad f, grad phi_i)` for a scalar space (Ritz right-hand side).
pub fn assemble_gradient_load(space: &FeSpace, grad_f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    assert_eq!(space.components(), 1);
    let mut out = vec![0.0; space.n_dofs()];
    let mut b = CellBasis::default();
    for cell in 0..space.mesh().n_cells() {
        space.cell_basis(cell, &mut b);
        let dofs = space.cell_dofs(cell);
        for q in 0..b.n_points {
            let g = grad_f(b.points[q]);
            for (i, d) in dofs.iter().enumerate() {
                let gi = b.grad(q, i);
                out[*d] += b.jxw[q] * (g[0] * gi[0] + g[1] * gi[1]);
            }
        }
    }
    out
}

/// `l_i = c_curl (curl f, curl phi_i) + c_div (div f, div phi_i)` given the
/// Jacobian `jac_f[c] = grad f_c`.
pub fn assemble_curl_div_load(space: &FeSpace, jac_f: impl Fn([f64; 2]) -> [[f64; 2]; 2], c_curl: f64, c_div: f64) -> Vec<f64> {
    assert_eq!(space.components(), 2);
    let ns = space.n_scalar();
    let mut out = vec![0.0; space.n_dofs()];
    let mut b = CellBasis::default();
    for cell in 0..space.mesh().n_cells() {
        space.cell_basis(cell, &mut b);
        let dofs = space.cell_dofs(cell);
        for q in 0..b.n_points {
            let j = jac_f(b.points[q]);
            let curl = j[1][0] - j[0][1];
            let div = j[0][0] + j[1][1];
            for (i, d) in dofs.iter().enumerate() {
                let g = b.grad(q, i);
                let w = b.jxw[q];
                out[*d] += w * (c_curl * curl * -g[1] + c_div * div * g[0]);
                out[ns + d] += w * (c_curl * curl * g[0] + c_div * div * g[1]);
            }
        }
    }
    out
}
