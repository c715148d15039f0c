//! Finite element spaces on structured triangulations.
//!
//! Scalar DOFs are numbered vertices first (after periodic merging), then P2
//! edge midpoints, then per-cell bubbles. A vector space stacks its
//! components: global index = `component * n_scalar + scalar index`.

mod element;
mod quadrature;

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

pub use element::{eval_basis, ElementFamily};
pub use quadrature::{quadrature_rule, QuadratureError, QuadratureRule, MAX_DEGREE};

use crate::mesh::{Mesh, Side};

/// Exactness degree of the rule used for every assembled integral.
pub const ASSEMBLY_DEGREE: usize = 8;

/// The shared degree-8 rule.
pub fn assembly_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::new(ASSEMBLY_DEGREE).expect("degree 8 is supported"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Constraint {
    #[default]
    None,
    /// Members have zero mean; enforced by a Lagrange multiplier at solve time.
    ZeroMean,
}

/// Shape function values and reference gradients at every point of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    n_local: usize,
    n_points: usize,
    values: Vec<f64>,
    ref_grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(family: ElementFamily, rule: &QuadratureRule) -> Self {
        let n_local = family.n_local();
        let mut values = Vec::with_capacity(rule.len() * n_local);
        let mut ref_grads = Vec::with_capacity(rule.len() * n_local);
        for p in rule.points() {
            let (v, g) = family.eval(*p);
            values.extend(v);
            ref_grads.extend(g);
        }
        Self { n_local, n_points: rule.len(), values, ref_grads }
    }

    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Values of all local functions at point `q`.
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_local..(q + 1) * self.n_local]
    }

    pub fn ref_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.ref_grads[q * self.n_local..(q + 1) * self.n_local]
    }
}

/// Affine map of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub vertices: [[f64; 2]; 3],
    pub area: f64,
    /// Inverse transpose of the Jacobian; maps reference to physical gradients.
    pub jinv_t: [[f64; 2]; 2],
}

impl CellGeometry {
    pub fn new(mesh: &Mesh, cell: usize) -> Self {
        let v = mesh.cell_vertices(cell);
        let j = [[v[1][0] - v[0][0], v[2][0] - v[0][0]], [v[1][1] - v[0][1], v[2][1] - v[0][1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let jinv_t = [[j[1][1] / det, -j[1][0] / det], [-j[0][1] / det, j[0][0] / det]];
        Self { vertices: v, area: 0.5 * det, jinv_t }
    }

    pub fn map_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jinv_t[0][0] * g[0] + self.jinv_t[0][1] * g[1],
            self.jinv_t[1][0] * g[0] + self.jinv_t[1][1] * g[1],
        ]
    }

    pub fn map_point(&self, l: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }
}

/// Basis data of one cell at the points of the assembly rule.
#[derive(Debug, Clone, Default)]
pub struct CellBasis {
    pub n_local: usize,
    pub n_points: usize,
    /// Quadrature weight times Jacobian determinant.
    pub jxw: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl CellBasis {
    pub fn value(&self, q: usize, i: usize) -> f64 {
        self.values[q * self.n_local + i]
    }

    pub fn grad(&self, q: usize, i: usize) -> [f64; 2] {
        self.grads[q * self.n_local + i]
    }

    /// Scalar FE function value and gradient at point `q` from local coefficients.
    pub fn eval(&self, q: usize, local: &[f64]) -> (f64, [f64; 2]) {
        let mut v = 0.0;
        let mut g = [0.0; 2];
        let base = q * self.n_local;
        for (i, c) in local.iter().enumerate() {
            v += c * self.values[base + i];
            let d = self.grads[base + i];
            g[0] += c * d[0];
            g[1] += c * d[1];
        }
        (v, g)
    }
}

/// A continuous scalar or vector finite element space.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    family: ElementFamily,
    components: usize,
    n_scalar: usize,
    cell_dofs: Vec<usize>,
    side_dofs: [Vec<usize>; 4],
    nodes: Vec<Option<[f64; 2]>>,
    constraint: Constraint,
    tab: Arc<Tabulation>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, family: ElementFamily, components: usize, constraint: Constraint) -> Self {
        assert!(components == 1 || components == 2, "components must be 1 or 2");
        let nv = mesh.n_vertices();
        let mut vertex_dof = vec![usize::MAX; nv];
        let mut next = 0;
        for v in 0..nv {
            // Right-side vertices of a periodic mesh reuse their left partner's DOF.
            let slave = mesh.vertex_partner(v).is_some() && mesh.vertices()[v][0] == 1.0;
            if !slave {
                vertex_dof[v] = next;
                next += 1;
            }
        }
        for v in 0..nv {
            if vertex_dof[v] == usize::MAX {
                vertex_dof[v] = vertex_dof[mesh.vertex_partner(v).expect("periodic partner")];
            }
        }
        let mut nodes: Vec<Option<[f64; 2]>> = vec![None; next];
        for v in (0..nv).rev() {
            nodes[vertex_dof[v]] = Some(mesh.vertices()[v]);
        }

        let mut edge_dof = Vec::new();
        if family == ElementFamily::P2 {
            edge_dof = vec![usize::MAX; mesh.n_edges()];
            let right: BTreeSet<usize> = mesh
                .periodic()
                .map(|p| p.edges.iter().map(|(_, r)| *r).collect())
                .unwrap_or_default();
            for e in 0..mesh.n_edges() {
                if !right.contains(&e) {
                    edge_dof[e] = next;
                    let [a, b] = mesh.edges()[e];
                    let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                    nodes.push(Some([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]));
                    next += 1;
                }
            }
            for &e in &right {
                edge_dof[e] = edge_dof[mesh.edge_partner(e).expect("periodic partner")];
            }
        }

        let n_local = family.n_local();
        let mut cell_dofs = Vec::with_capacity(mesh.n_cells() * n_local);
        for (c, cell) in mesh.cells().iter().enumerate() {
            cell_dofs.extend(cell.iter().map(|&v| vertex_dof[v]));
            match family {
                ElementFamily::P1 => {}
                ElementFamily::P2 => cell_dofs.extend(mesh.cell_edges()[c].iter().map(|&e| edge_dof[e])),
                ElementFamily::P1Bubble => {
                    cell_dofs.push(next);
                    nodes.push(None);
                    next += 1;
                }
            }
        }

        let side_dofs = Side::ALL.map(|side| {
            let mut set: BTreeSet<usize> = mesh.side_vertices(side).iter().map(|&v| vertex_dof[v]).collect();
            if family == ElementFamily::P2 {
                set.extend(mesh.side_edges(side).map(|e| edge_dof[e]));
            }
            set.into_iter().collect()
        });

        let tab = Arc::new(Tabulation::new(family, assembly_rule()));
        Self { mesh, family, components, n_scalar: next, cell_dofs, side_dofs, nodes, constraint, tab }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> ElementFamily {
        self.family
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn n_local(&self) -> usize {
        self.family.n_local()
    }

    /// DOFs per component.
    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    pub fn n_dofs(&self) -> usize {
        self.components * self.n_scalar
    }

    /// Scalar DOF indices of a cell in local shape-function order.
    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        let nl = self.n_local();
        &self.cell_dofs[cell * nl..(cell + 1) * nl]
    }

    /// Nodal point of a scalar DOF (`None` for bubbles).
    pub fn node(&self, scalar_dof: usize) -> Option<[f64; 2]> {
        self.nodes[scalar_dof]
    }

    /// Global DOFs of one component whose basis functions have a nonzero trace on `side`.
    pub fn boundary_dofs(&self, side: Side, component: usize) -> Vec<usize> {
        assert!(component < self.components);
        self.side_dofs[side.index()].iter().map(|d| component * self.n_scalar + d).collect()
    }

    pub fn tabulation(&self) -> &Tabulation {
        &self.tab
    }

    /// Fill `out` with mapped basis data for `cell`.
    pub fn cell_basis(&self, cell: usize, out: &mut CellBasis) {
        let geo = CellGeometry::new(&self.mesh, cell);
        let rule = assembly_rule();
        let tab = &*self.tab;
        let (nl, nq) = (tab.n_local, tab.n_points);
        out.n_local = nl;
        out.n_points = nq;
        out.jxw.clear();
        out.points.clear();
        out.values.clear();
        out.grads.clear();
        for (q, (p, w)) in rule.points().iter().zip(rule.weights()).enumerate() {
            out.jxw.push(w * 2.0 * geo.area);
            out.points.push(geo.map_point(*p));
            out.values.extend_from_slice(tab.values(q));
            out.grads.extend(tab.ref_grads(q).iter().map(|g| geo.map_gradient(*g)));
        }
        debug_assert_eq!(out.values.len(), nl * nq);
    }

    /// Local coefficients of one component on a cell.
    pub fn gather(&self, cell: usize, component: usize, coeffs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let off = component * self.n_scalar;
        out.extend(self.cell_dofs(cell).iter().map(|&d| coeffs[off + d]));
    }

    /// Nodal interpolant of a scalar function; bubble coefficients are zero.
    pub fn interpolate_scalar(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        assert_eq!(self.components, 1, "scalar interpolation on a vector space");
        self.nodes.iter().map(|n| n.map_or(0.0, &f)).collect()
    }

    /// Nodal interpolant of a vector function.
    pub fn interpolate_vector(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        assert_eq!(self.components, 2, "vector interpolation on a scalar space");
        let mut out = vec![0.0; self.n_dofs()];
        for (d, n) in self.nodes.iter().enumerate() {
            if let Some(x) = n {
                let v = f(*x);
                out[d] = v[0];
                out[self.n_scalar + d] = v[1];
            }
        }
        out
    }

    /// Value (per component) and gradient (`grad[c] = d u_c`) of an FE function at a
    /// barycentric point of a cell.
    pub fn eval_in_cell(&self, cell: usize, bary: [f64; 3], coeffs: &[f64]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let geo = CellGeometry::new(&self.mesh, cell);
        let (vals, grads) = self.family.eval(bary);
        let dofs = self.cell_dofs(cell);
        let mut v = vec![0.0; self.components];
        let mut g = vec![[0.0; 2]; self.components];
        for c in 0..self.components {
            for (i, &d) in dofs.iter().enumerate() {
                let coef = coeffs[c * self.n_scalar + d];
                v[c] += coef * vals[i];
                let pg = geo.map_gradient(grads[i]);
                g[c][0] += coef * pg[0];
                g[c][1] += coef * pg[1];
            }
        }
        (v, g)
    }

    /// Values of an FE function at the mesh vertices (one row per vertex).
    pub fn vertex_values(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        let mesh = &*self.mesh;
        let mut out = vec![Vec::new(); mesh.n_vertices()];
        for (c, cell) in mesh.cells().iter().enumerate() {
            for (k, &v) in cell.iter().enumerate() {
                if out[v].is_empty() {
                    let mut l = [0.0; 3];
                    l[k] = 1.0;
                    out[v] = self.eval_in_cell(c, l, coeffs).0;
                }
            }
        }
        out
    }

    /// Lightweight description used to label assembled operators.
    pub fn descriptor(&self) -> SpaceDescriptor {
        SpaceDescriptor { family: self.family, components: self.components, n_dofs: self.n_dofs() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceDescriptor {
    pub family: ElementFamily,
    pub components: usize,
    pub n_dofs: usize,
}

pub fn make_space(mesh: Arc<Mesh>, family: ElementFamily, components: usize, constraint: Constraint) -> FeSpace {
    FeSpace::new(mesh, family, components, constraint)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn mesh(n: usize, periodic: bool) -> Arc<Mesh> {
        Arc::new(Mesh::structured(n, periodic).unwrap())
    }

    #[test]
    fn dof_counts_n8() {
        let m = mesh(8, false);
        assert_eq!(FeSpace::new(m.clone(), ElementFamily::P1, 1, Constraint::None).n_dofs(), 81);
        assert_eq!(FeSpace::new(m.clone(), ElementFamily::P2, 2, Constraint::None).n_dofs(), 2 * (81 + 208));
        assert_eq!(FeSpace::new(m, ElementFamily::P1Bubble, 2, Constraint::None).n_dofs(), 2 * (81 + 128));
    }

    #[test]
    fn periodic_dof_counts() {
        let n = 6;
        let m = mesh(n, true);
        let p1 = FeSpace::new(m.clone(), ElementFamily::P1, 1, Constraint::None);
        assert_eq!(p1.n_dofs(), (n + 1) * (n + 1) - (n + 1));
        let p2 = FeSpace::new(m.clone(), ElementFamily::P2, 1, Constraint::None);
        assert_eq!(p2.n_dofs(), n * (n + 1) + m.n_edges() - n);
        let pb = FeSpace::new(m.clone(), ElementFamily::P1Bubble, 1, Constraint::None);
        assert_eq!(pb.n_dofs(), n * (n + 1) + m.n_cells());
        // left and right vertices share a DOF
        for &(l, r) in &m.periodic().unwrap().vertices {
            let find = |v: usize| {
                m.cells().iter().enumerate().find_map(|(c, cell)| {
                    cell.iter().position(|&w| w == v).map(|k| p1.cell_dofs(c)[k])
                })
            };
            assert_eq!(find(l), find(r));
        }
    }

    #[test]
    fn bubble_dofs_in_one_cell() {
        let m = mesh(4, false);
        let s = FeSpace::new(m.clone(), ElementFamily::P1Bubble, 1, Constraint::None);
        let mut seen = vec![0; s.n_dofs()];
        for c in 0..m.n_cells() {
            seen[s.cell_dofs(c)[3]] += 1;
        }
        let bubbles: Vec<_> = seen.iter().enumerate().filter(|(d, _)| s.node(*d).is_none()).collect();
        assert_eq!(bubbles.len(), m.n_cells());
        assert!(bubbles.iter().all(|(_, k)| **k == 1));
    }

    #[test]
    fn boundary_dofs_have_trace_on_side() {
        let m = mesh(4, false);
        for fam in [ElementFamily::P1, ElementFamily::P2, ElementFamily::P1Bubble] {
            let s = FeSpace::new(m.clone(), fam, 2, Constraint::None);
            for side in Side::ALL {
                for comp in 0..2 {
                    let dofs = s.boundary_dofs(side, comp);
                    let expected = if fam == ElementFamily::P2 { 2 * 4 + 1 } else { 5 };
                    assert_eq!(dofs.len(), expected);
                    for d in dofs {
                        let x = s.node(d - comp * s.n_scalar()).expect("nodal dof");
                        let on = match side {
                            Side::Bottom => x[1] == 0.0,
                            Side::Top => x[1] == 1.0,
                            Side::Left => x[0] == 0.0,
                            Side::Right => x[0] == 1.0,
                        };
                        assert!(on, "{fam:?} {side:?} {x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_examples() {
        let m = mesh(5, false);
        let p1 = FeSpace::new(m.clone(), ElementFamily::P1, 1, Constraint::None);
        assert!(p1.interpolate_scalar(|_| 1.0).iter().all(|v| *v == 1.0));
        let ix = p1.interpolate_scalar(|x| x[0]);
        for (d, v) in ix.iter().enumerate() {
            assert_eq!(*v, p1.node(d).unwrap()[0]);
        }
    }

    /// Interpolating a polynomial of the family's degree reproduces it at every
    /// quadrature point of every cell.
    #[test]
    fn polynomial_reproduction() {
        let m = mesh(4, false);
        let rule = assembly_rule();
        for fam in [ElementFamily::P1, ElementFamily::P2, ElementFamily::P1Bubble] {
            let s = FeSpace::new(m.clone(), fam, 1, Constraint::None);
            let f = |x: [f64; 2]| match fam.degree() {
                1 => 0.3 + 2.0 * x[0] - 1.5 * x[1],
                _ => x[0] * x[0] - 0.7 * x[0] * x[1] + 2.0 * x[1] * x[1] + x[0] - 0.2,
            };
            let coeffs = s.interpolate_scalar(f);
            for c in 0..m.n_cells() {
                let geo = CellGeometry::new(&m, c);
                for p in rule.points() {
                    let (v, _) = s.eval_in_cell(c, *p, &coeffs);
                    assert!((v[0] - f(geo.map_point(*p))).abs() < 1e-13, "{fam:?}");
                }
            }
        }
    }

    #[test]
    fn p2_reproduces_x_squared() {
        let m = mesh(3, false);
        let s = FeSpace::new(m.clone(), ElementFamily::P2, 1, Constraint::None);
        let coeffs = s.interpolate_scalar(|x| x[0] * x[0]);
        let mut basis = CellBasis::default();
        let mut local = Vec::new();
        for c in 0..m.n_cells() {
            s.cell_basis(c, &mut basis);
            s.gather(c, 0, &coeffs, &mut local);
            for q in 0..basis.n_points {
                let (v, g) = basis.eval(q, &local);
                let x = basis.points[q];
                assert!((v - x[0] * x[0]).abs() < 1e-13);
                assert!((g[0] - 2.0 * x[0]).abs() < 1e-12 && g[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mapped_gradients_match_finite_differences() {
        let m = mesh(3, false);
        let eps = 1e-6;
        for fam in [ElementFamily::P1, ElementFamily::P2, ElementFamily::P1Bubble] {
            let s = FeSpace::new(m.clone(), fam, 1, Constraint::None);
            let coeffs: Vec<f64> = (0..s.n_dofs()).map(|i| ((i * 37 % 11) as f64) / 11.0 - 0.4).collect();
            for c in [0, 5, 11] {
                let geo = CellGeometry::new(&m, c);
                let l = [0.2, 0.5, 0.3];
                let x = geo.map_point(l);
                // physical point -> barycentric on this cell
                let to_bary = |p: [f64; 2]| {
                    let v = geo.vertices;
                    let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
                    let l1 = ((p[0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (p[1] - v[0][1])) / det;
                    let l2 = ((v[1][0] - v[0][0]) * (p[1] - v[0][1]) - (p[0] - v[0][0]) * (v[1][1] - v[0][1])) / det;
                    [1.0 - l1 - l2, l1, l2]
                };
                let (_, g) = s.eval_in_cell(c, l, &coeffs);
                let f = |p: [f64; 2]| s.eval_in_cell(c, to_bary(p), &coeffs).0[0];
                let fx = (f([x[0] + eps, x[1]]) - f([x[0] - eps, x[1]])) / (2.0 * eps);
                let fy = (f([x[0], x[1] + eps]) - f([x[0], x[1] - eps])) / (2.0 * eps);
                assert!((fx - g[0][0]).abs() < 1e-6, "{fam:?}");
                assert!((fy - g[0][1]).abs() < 1e-6, "{fam:?}");
            }
        }
    }
}
