//! Structured triangulations of the unit square.
//!
//! Every subsquare `[i/n, (i+1)/n] x [j/n, (j+1)/n]` is split along its
//! bottom-left to top-right diagonal into two counterclockwise triangles.
//! Periodicity in `x` is recorded as vertex/edge pairings only; the spaces
//! built on top of the mesh merge the paired degrees of freedom.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MeshError {
    #[error("mesh needs at least one cell per side, got n = {0}")]
    ZeroCells(usize),
}

/// Sides of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn index(self) -> usize {
        match self {
            Side::Bottom => 0,
            Side::Right => 1,
            Side::Top => 2,
            Side::Left => 3,
        }
    }

    /// Component of a vector field tangential to this side.
    pub fn tangential_component(self) -> usize {
        match self {
            Side::Bottom | Side::Top => 0,
            Side::Left | Side::Right => 1,
        }
    }

    /// Component of a vector field normal to this side.
    pub fn normal_component(self) -> usize {
        1 - self.tangential_component()
    }
}

/// Left/right identifications of a mesh periodic in `x`.
///
/// Pairs are stored as `(left, right)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPairs {
    pub vertices: Vec<(usize, usize)>,
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    vertices: Vec<[f64; 2]>,
    cells: Vec<[usize; 3]>,
    /// Edges as sorted vertex pairs.
    edges: Vec<[usize; 2]>,
    /// Local edge `e` of a cell is opposite to local vertex `e`.
    cell_edges: Vec<[usize; 3]>,
    boundary_edges: Vec<(usize, Side)>,
    periodic: Option<PeriodicPairs>,
    vertex_partner: Vec<Option<usize>>,
    edge_partner: Vec<Option<usize>>,
}

impl Mesh {
    /// Uniform mesh with `n` cells per side (`h = sqrt(2) / n`).
    pub fn structured(n: usize, periodic_x: bool) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroCells(n));
        }
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }

        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v11, v01) = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1));
                cells.push([v00, v10, v11]);
                cells.push([v00, v11, v01]);
            }
        }

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for cell in &cells {
            let mut local = [0; 3];
            for (e, slot) in local.iter_mut().enumerate() {
                let (a, b) = (cell[(e + 1) % 3], cell[(e + 2) % 3]);
                let key = [a.min(b), a.max(b)];
                *slot = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
            }
            cell_edges.push(local);
        }

        let mut boundary_edges = Vec::with_capacity(4 * n);
        for i in 0..n {
            boundary_edges.push((edge_index[&[vid(i, 0), vid(i + 1, 0)]], Side::Bottom));
        }
        for j in 0..n {
            boundary_edges.push((edge_index[&[vid(n, j), vid(n, j + 1)]], Side::Right));
        }
        for i in 0..n {
            boundary_edges.push((edge_index[&[vid(i, n), vid(i + 1, n)]], Side::Top));
        }
        for j in 0..n {
            boundary_edges.push((edge_index[&[vid(0, j), vid(0, j + 1)]], Side::Left));
        }

        let mut vertex_partner = vec![None; vertices.len()];
        let mut edge_partner = vec![None; edges.len()];
        let periodic = periodic_x.then(|| {
            let vpairs: Vec<_> = (0..=n).map(|j| (vid(0, j), vid(n, j))).collect();
            let epairs: Vec<_> = (0..n)
                .map(|j| {
                    (
                        edge_index[&[vid(0, j), vid(0, j + 1)]],
                        edge_index[&[vid(n, j), vid(n, j + 1)]],
                    )
                })
                .collect();
            for &(l, r) in &vpairs {
                vertex_partner[l] = Some(r);
                vertex_partner[r] = Some(l);
            }
            for &(l, r) in &epairs {
                edge_partner[l] = Some(r);
                edge_partner[r] = Some(l);
            }
            PeriodicPairs { vertices: vpairs, edges: epairs }
        });

        Ok(Self {
            n,
            vertices,
            cells,
            edges,
            cell_edges,
            boundary_edges,
            periodic,
            vertex_partner,
            edge_partner,
        })
    }

    /// Cells per side.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn boundary_edges(&self) -> &[(usize, Side)] {
        &self.boundary_edges
    }

    pub fn periodic(&self) -> Option<&PeriodicPairs> {
        self.periodic.as_ref()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic.is_some()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Periodic image of a vertex, if it lies on a paired side.
    pub fn vertex_partner(&self, v: usize) -> Option<usize> {
        self.vertex_partner[v]
    }

    pub fn edge_partner(&self, e: usize) -> Option<usize> {
        self.edge_partner[e]
    }

    pub fn cell_vertices(&self, c: usize) -> [[f64; 2]; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    /// Signed area of a cell (positive for counterclockwise ordering).
    pub fn signed_area(&self, c: usize) -> f64 {
        let [p0, p1, p2] = self.cell_vertices(c);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    /// Maximum cell diameter.
    pub fn size(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| {
                let p = self.cell_vertices(c);
                let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0]))
            })
            .fold(0.0, f64::max)
    }

    /// Vertices lying on a side (including both corners), ordered along the side.
    pub fn side_vertices(&self, side: Side) -> Vec<usize> {
        let n = self.n;
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        (0..=n)
            .map(|k| match side {
                Side::Bottom => vid(k, 0),
                Side::Top => vid(k, n),
                Side::Left => vid(0, k),
                Side::Right => vid(n, k),
            })
            .collect()
    }

    pub fn side_edges(&self, side: Side) -> impl Iterator<Item = usize> + '_ {
        self.boundary_edges.iter().filter(move |(_, s)| *s == side).map(|(e, _)| *e)
    }
}

/// Convenience wrapper used throughout the crate.
pub fn build_structured_mesh(n: usize, periodic_x: bool) -> Result<Mesh, MeshError> {
    Mesh::structured(n, periodic_x)
}

/// Maximum cell diameter of `mesh`.
pub fn mesh_size(mesh: &Mesh) -> f64 {
    mesh.size()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_edges(mesh: &Mesh) -> usize {
        let mut set = std::collections::BTreeSet::new();
        for c in mesh.cells() {
            for k in 0..3 {
                let (a, b) = (c[k], c[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.len()
    }

    #[test]
    fn single_square() {
        let m = Mesh::structured(1, false).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_cells(), 2);
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.boundary_edges().len(), 4);
        assert!((m.size() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn counts_n8() {
        let m = Mesh::structured(8, false).unwrap();
        assert_eq!(m.n_vertices(), 81);
        assert_eq!(m.n_cells(), 128);
        assert_eq!(m.n_edges(), 208);
        assert!((m.size() - 2f64.sqrt() / 8.0).abs() < 1e-15);
    }

    #[test]
    fn euler_relation_n4() {
        let m = Mesh::structured(4, false).unwrap();
        let e = brute_force_edges(&m);
        assert_eq!(e, 56);
        assert_eq!(e, m.n_edges());
        assert_eq!(m.n_vertices() as i64 - e as i64 + m.n_cells() as i64, 1);
    }

    #[test]
    fn size_matches_exhaustive_pair_distances() {
        let m = Mesh::structured(4, false).unwrap();
        let mut h: f64 = 0.0;
        for c in 0..m.n_cells() {
            let p = m.cell_vertices(c);
            for a in 0..3 {
                for b in 0..3 {
                    h = h.max(((p[a][0] - p[b][0]).powi(2) + (p[a][1] - p[b][1]).powi(2)).sqrt());
                }
            }
        }
        assert_eq!(m.size(), h);
    }

    #[test]
    fn zero_cells_rejected() {
        assert_eq!(Mesh::structured(0, false).unwrap_err(), MeshError::ZeroCells(0));
    }

    #[test]
    fn positive_areas_sum_to_one() {
        for n in [1, 3, 7] {
            let m = Mesh::structured(n, false).unwrap();
            let total: f64 = (0..m.n_cells()).map(|c| m.signed_area(c)).inspect(|a| assert!(*a > 0.0)).sum();
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn edge_adjacency() {
        let m = Mesh::structured(5, false).unwrap();
        let mut count = vec![0usize; m.n_edges()];
        for ce in m.cell_edges() {
            for &e in ce {
                count[e] += 1;
            }
        }
        let boundary: std::collections::HashSet<_> = m.boundary_edges().iter().map(|(e, _)| *e).collect();
        for (e, &k) in count.iter().enumerate() {
            assert_eq!(k, if boundary.contains(&e) { 1 } else { 2 }, "edge {e}");
        }
    }

    #[test]
    fn local_edges_are_opposite_vertices() {
        let m = Mesh::structured(3, false).unwrap();
        for (c, cell) in m.cells().iter().enumerate() {
            for e in 0..3 {
                let edge = m.edges()[m.cell_edges()[c][e]];
                assert!(!edge.contains(&cell[e]));
            }
        }
    }

    #[test]
    fn no_orphan_vertices() {
        let m = Mesh::structured(6, true).unwrap();
        let mut used = vec![false; m.n_vertices()];
        for c in m.cells() {
            for &v in c {
                used[v] = true;
            }
        }
        assert!(used.iter().all(|u| *u));
        assert!(m.edges().iter().flatten().all(|&v| v < m.n_vertices()));
    }

    #[test]
    fn periodic_pairing() {
        let m = Mesh::structured(6, true).unwrap();
        let pairs = m.periodic().unwrap();
        assert_eq!(pairs.vertices.len(), 7);
        assert_eq!(pairs.edges.len(), 6);
        for &(l, r) in &pairs.vertices {
            let (pl, pr) = (m.vertices()[l], m.vertices()[r]);
            assert_eq!(pl[1], pr[1]);
            assert_eq!((pl[0], pr[0]), (0.0, 1.0));
        }
        for v in 0..m.n_vertices() {
            if let Some(w) = m.vertex_partner(v) {
                assert_eq!(m.vertex_partner(w), Some(v));
            }
        }
        for e in 0..m.n_edges() {
            if let Some(f) = m.edge_partner(e) {
                assert_eq!(m.edge_partner(f), Some(e));
            }
        }
    }
}
