//! Ritz, L² and Maxwell projections used for initial data.

use crate::fespace::{CellBasis, FeSpace};
use crate::forms::{
    assemble_curl_div_load, assemble_curlcurl_divdiv, assemble_gradient_load, assemble_mass, assemble_source_scalar,
    assemble_source_vector, assemble_stiffness,
};
use crate::mesh::Side;
use crate::sparse::{CsrMatrix, DirectSolver, SparseError};

/// Values of a vector function at the nodes of the given global DOFs, as
/// `(dof, value of the matching component)` pairs.
pub fn nodal_values(space: &FeSpace, dofs: &[usize], f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<(usize, f64)> {
    let ns = space.n_scalar();
    dofs.iter()
        .map(|&d| {
            let x = space.node(d % ns).expect("constrained DOFs sit on nodes");
            (d, f(x)[d / ns])
        })
        .collect()
}

/// Global DOFs carrying the tangential component on the given sides; corners
/// shared by two sides get both components.
pub fn tangential_dofs(space: &FeSpace, sides: &[Side]) -> Vec<usize> {
    let mut out: Vec<usize> = sides
        .iter()
        .flat_map(|&s| space.boundary_dofs(s, s.tangential_component()))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn solve_with_fixed(mut a: CsrMatrix, mut rhs: Vec<f64>, fixed: &[(usize, f64)], tol: f64) -> Result<Vec<f64>, SparseError> {
    for &(d, v) in fixed {
        a.set_identity_row(d)?;
        rhs[d] = v;
    }
    DirectSolver::new().solve(&a, &rhs, tol)
}

/// `(grad R f, grad psi) = (grad f, grad psi)` with `∫ R f = ∫ f`, solved with one
/// bordered Lagrange multiplier.
pub fn ritz_projection(
    space: &FeSpace,
    f: impl Fn([f64; 2]) -> f64,
    grad_f: impl Fn([f64; 2]) -> [f64; 2],
    tol: f64,
) -> Result<Vec<f64>, SparseError> {
    assert_eq!(space.components(), 1);
    let n = space.n_dofs();
    let k = assemble_stiffness(space, 1.0).matrix;
    let c = assemble_source_scalar(space, |_| 1.0);
    let mut trips = Vec::with_capacity(k.nnz() + 2 * n);
    k.push_triplets(0, 0, 1.0, &mut trips);
    for (i, ci) in c.iter().enumerate() {
        trips.push((i, n, *ci));
        trips.push((n, i, *ci));
    }
    let a = CsrMatrix::from_triplets(n + 1, n + 1, &trips)?;
    let mut rhs = assemble_gradient_load(space, grad_f);
    rhs.push(assemble_source_scalar(space, f).iter().sum());
    let mut x = DirectSolver::new().solve(&a, &rhs, tol)?;
    x.truncate(n);
    Ok(x)
}

/// `(P f, psi) = (f, psi)` for a scalar space; rows in `fixed` are replaced by
/// the given values.
pub fn l2_projection_scalar(
    space: &FeSpace,
    f: impl Fn([f64; 2]) -> f64,
    fixed: &[(usize, f64)],
    tol: f64,
) -> Result<Vec<f64>, SparseError> {
    let m = assemble_mass(space, 1.0).matrix;
    solve_with_fixed(m, assemble_source_scalar(space, f), fixed, tol)
}

/// Vector version of [`l2_projection_scalar`].
pub fn l2_projection_vector(
    space: &FeSpace,
    f: impl Fn([f64; 2]) -> [f64; 2],
    fixed: &[(usize, f64)],
    tol: f64,
) -> Result<Vec<f64>, SparseError> {
    let m = assemble_mass(space, 1.0).matrix;
    solve_with_fixed(m, assemble_source_vector(space, f), fixed, tol)
}

/// `(curl(f - P f), curl zeta) + (div(f - P f), div zeta) = 0` for every `zeta`
/// vanishing on the fixed DOFs, which carry the given boundary data.
/// `jac_f(x)[c]` is the gradient of component `c`.
pub fn maxwell_projection(
    space: &FeSpace,
    jac_f: impl Fn([f64; 2]) -> [[f64; 2]; 2],
    fixed: &[(usize, f64)],
    tol: f64,
) -> Result<Vec<f64>, SparseError> {
    let a = assemble_curlcurl_divdiv(space, 1.0, 1.0).matrix;
    solve_with_fixed(a, assemble_curl_div_load(space, jac_f, 1.0, 1.0), fixed, tol)
}

/// Vorticity `d1 u2 - d2 u1` of a vector FE field, L² projected onto the
/// scalar space.
pub fn vorticity(scalar: &FeSpace, velocity: &FeSpace, u: &[f64], tol: f64) -> Result<Vec<f64>, SparseError> {
    assert_eq!(scalar.components(), 1);
    assert_eq!(velocity.components(), 2);
    let mut rhs = vec![0.0; scalar.n_dofs()];
    let (mut bs, mut bu) = (CellBasis::default(), CellBasis::default());
    let (mut u1, mut u2) = (Vec::new(), Vec::new());
    for cell in 0..scalar.mesh().n_cells() {
        scalar.cell_basis(cell, &mut bs);
        velocity.cell_basis(cell, &mut bu);
        velocity.gather(cell, 0, u, &mut u1);
        velocity.gather(cell, 1, u, &mut u2);
        let dofs = scalar.cell_dofs(cell);
        for q in 0..bs.n_points {
            let w = bs.jxw[q] * (bu.eval(q, &u2).1[0] - bu.eval(q, &u1).1[1]);
            for (i, d) in dofs.iter().enumerate() {
                rhs[*d] += w * bs.value(q, i);
            }
        }
    }
    solve_with_fixed(assemble_mass(scalar, 1.0).matrix, rhs, &[], tol)
}
