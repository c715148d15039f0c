//! Dense reference operators built from per-point evaluation of every global
//! basis function with a degree-10 rule. Shared by several test targets.
#![allow(dead_code)]

use std::sync::Arc;

use tpmhd_core::fespace::QuadratureRule;
use tpmhd_core::fespace::{ElementFamily, FeSpace};
use tpmhd_core::forms::AssembledOperator;
use tpmhd_core::mesh::Mesh;

pub struct Point {
    pub w: f64,
    pub x: [f64; 2],
    pub cell: usize,
    pub bary: [f64; 3],
}

pub fn points(mesh: &Mesh) -> Vec<Point> {
    let rule = QuadratureRule::new(10).unwrap();
    let wsum: f64 = rule.weights().iter().sum();
    let mut out = Vec::new();
    for c in 0..mesh.n_cells() {
        let v = mesh.cell_vertices(c);
        let area = mesh.signed_area(c).abs();
        for (l, w) in rule.points().iter().zip(rule.weights()) {
            let x = [0, 1].map(|d| l[0] * v[0][d] + l[1] * v[1][d] + l[2] * v[2][d]);
            out.push(Point { w: w * area / wsum, x, cell: c, bary: *l });
        }
    }
    out
}

/// (values, gradients) of every global basis function at a point.
pub fn basis_at(space: &FeSpace, p: &Point) -> Vec<(Vec<f64>, Vec<[f64; 2]>)> {
    let mut e = vec![0.0; space.n_dofs()];
    (0..space.n_dofs())
        .map(|d| {
            e[d] = 1.0;
            let r = space.eval_in_cell(p.cell, p.bary, &e);
            e[d] = 0.0;
            r
        })
        .collect()
}

pub fn field_at(space: &FeSpace, p: &Point, c: &[f64]) -> (Vec<f64>, Vec<[f64; 2]>) {
    space.eval_in_cell(p.cell, p.bary, c)
}

pub fn oracle<F>(rows: &FeSpace, cols: &FeSpace, mut f: F) -> Vec<Vec<f64>>
where
    F: FnMut(&Point, &(Vec<f64>, Vec<[f64; 2]>), &(Vec<f64>, Vec<[f64; 2]>)) -> f64,
{
    let mut m = vec![vec![0.0; cols.n_dofs()]; rows.n_dofs()];
    for p in points(rows.mesh()) {
        let rb = basis_at(rows, &p);
        let cb = basis_at(cols, &p);
        for (i, bi) in rb.iter().enumerate() {
            for (j, bj) in cb.iter().enumerate() {
                m[i][j] += p.w * f(&p, bi, bj);
            }
        }
    }
    m
}

pub fn assert_matches(label: &str, a: &AssembledOperator, o: &[Vec<f64>]) {
    let d = a.matrix.to_dense();
    assert_eq!(d.len(), o.len(), "{label}");
    for (r, (x, y)) in d.iter().zip(o).enumerate() {
        for (c, (p, q)) in x.iter().zip(y).enumerate() {
            assert!((p - q).abs() <= 1e-12, "{label} [{r},{c}]: {p} vs {q}");
        }
    }
}

pub fn mesh(n: usize) -> Arc<Mesh> {
    Arc::new(Mesh::structured(n, false).unwrap())
}

pub fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

pub const FAMILIES: [ElementFamily; 3] = [ElementFamily::P1, ElementFamily::P2, ElementFamily::P1Bubble];

pub fn curl(g: &[[f64; 2]]) -> f64 {
    g[1][0] - g[0][1]
}

pub fn div(g: &[[f64; 2]]) -> f64 {
    g[0][0] + g[1][1]
}
