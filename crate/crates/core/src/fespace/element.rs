//! Reference-element shape functions.
//!
//! Local ordering: vertex functions first (local vertex `i` has barycentric
//! coordinate `l[i]`), then P2 edge functions for the edges opposite local
//! vertices 0, 1, 2, or the single cubic bubble.

/// Gradients of the barycentric coordinates w.r.t. reference coordinates `(x, y)`.
const GRAD_BARY: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementFamily {
    P1,
    P2,
    /// P1 enriched by the cubic bubble `27 l0 l1 l2`.
    P1Bubble,
}

impl ElementFamily {
    pub fn n_local(self) -> usize {
        match self {
            ElementFamily::P1 => 3,
            ElementFamily::P2 => 6,
            ElementFamily::P1Bubble => 4,
        }
    }

    /// Polynomial degree reproduced exactly by the nodal interpolant.
    pub fn degree(self) -> usize {
        match self {
            ElementFamily::P1 | ElementFamily::P1Bubble => 1,
            ElementFamily::P2 => 2,
        }
    }

    /// Values and reference gradients of all local shape functions at a
    /// barycentric point.
    pub fn eval(self, l: [f64; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let g = GRAD_BARY;
        let mut vals = Vec::with_capacity(self.n_local());
        let mut grads = Vec::with_capacity(self.n_local());
        match self {
            ElementFamily::P1 | ElementFamily::P1Bubble => {
                vals.extend_from_slice(&l);
                grads.extend_from_slice(&g);
                if self == ElementFamily::P1Bubble {
                    vals.push(27.0 * l[0] * l[1] * l[2]);
                    let mut d = [0.0; 2];
                    for (k, dk) in d.iter_mut().enumerate() {
                        *dk = 27.0
                            * (g[0][k] * l[1] * l[2] + l[0] * g[1][k] * l[2] + l[0] * l[1] * g[2][k]);
                    }
                    grads.push(d);
                }
            }
            ElementFamily::P2 => {
                for i in 0..3 {
                    vals.push(l[i] * (2.0 * l[i] - 1.0));
                    let s = 4.0 * l[i] - 1.0;
                    grads.push([s * g[i][0], s * g[i][1]]);
                }
                for e in 0..3 {
                    let (a, b) = ((e + 1) % 3, (e + 2) % 3);
                    vals.push(4.0 * l[a] * l[b]);
                    grads.push([
                        4.0 * (g[a][0] * l[b] + l[a] * g[b][0]),
                        4.0 * (g[a][1] * l[b] + l[a] * g[b][1]),
                    ]);
                }
            }
        }
        (vals, grads)
    }

    /// Barycentric coordinates of the nodal points; `None` for the bubble.
    pub fn nodes(self) -> Vec<Option<[f64; 3]>> {
        let mut out = vec![
            Some([1.0, 0.0, 0.0]),
            Some([0.0, 1.0, 0.0]),
            Some([0.0, 0.0, 1.0]),
        ];
        match self {
            ElementFamily::P1 => {}
            ElementFamily::P1Bubble => out.push(None),
            ElementFamily::P2 => {
                out.push(Some([0.0, 0.5, 0.5]));
                out.push(Some([0.5, 0.0, 0.5]));
                out.push(Some([0.5, 0.5, 0.0]));
            }
        }
        out
    }
}

pub fn eval_basis(family: ElementFamily, point: [f64; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
    family.eval(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAMILIES: [ElementFamily; 3] = [ElementFamily::P1, ElementFamily::P2, ElementFamily::P1Bubble];

    fn bary(x: f64, y: f64) -> [f64; 3] {
        [1.0 - x - y, x, y]
    }

    #[test]
    fn p1_nodal_at_vertex() {
        let (v, _) = ElementFamily::P1.eval([1.0, 0.0, 0.0]);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn nodal_property() {
        for fam in FAMILIES {
            for (j, node) in fam.nodes().iter().enumerate() {
                let Some(p) = node else { continue };
                let (v, _) = fam.eval(*p);
                for (i, vi) in v.iter().enumerate().take(if fam == ElementFamily::P1Bubble { 3 } else { v.len() }) {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((vi - expected).abs() < 1e-15, "{fam:?} phi_{i} at node {j}");
                }
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for fam in [ElementFamily::P1, ElementFamily::P2, ElementFamily::P1Bubble] {
            for &(x, y) in &[(0.1, 0.2), (0.3, 0.3), (0.0, 0.7), (0.25, 0.5)] {
                let (v, g) = fam.eval(bary(x, y));
                let nodal = if fam == ElementFamily::P1Bubble { 3 } else { v.len() };
                let s: f64 = v[..nodal].iter().sum();
                assert!((s - 1.0).abs() < 1e-14);
                let gs = g[..nodal].iter().fold([0.0, 0.0], |a, d| [a[0] + d[0], a[1] + d[1]]);
                assert!(gs[0].abs() < 1e-13 && gs[1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn bubble_normalization_and_trace() {
        let (v, g) = ElementFamily::P1Bubble.eval([1.0 / 3.0; 3]);
        assert!((v[3] - 1.0).abs() < 1e-15);
        assert!(g[3][0].abs() < 1e-14 && g[3][1].abs() < 1e-14);
        for t in [0.0, 0.2, 0.5, 0.9] {
            for p in [[0.0, t, 1.0 - t], [t, 0.0, 1.0 - t], [t, 1.0 - t, 0.0]] {
                assert_eq!(ElementFamily::P1Bubble.eval(p).0[3], 0.0);
            }
        }
    }

    #[test]
    fn reference_gradients_match_finite_differences() {
        let eps = 1e-6;
        for fam in FAMILIES {
            let (x, y) = (0.21, 0.37);
            let (_, g) = fam.eval(bary(x, y));
            let (vxp, _) = fam.eval(bary(x + eps, y));
            let (vxm, _) = fam.eval(bary(x - eps, y));
            let (vyp, _) = fam.eval(bary(x, y + eps));
            let (vym, _) = fam.eval(bary(x, y - eps));
            for i in 0..fam.n_local() {
                let fx = (vxp[i] - vxm[i]) / (2.0 * eps);
                let fy = (vyp[i] - vym[i]) / (2.0 * eps);
                assert!((fx - g[i][0]).abs() < 1e-8, "{fam:?} {i}");
                assert!((fy - g[i][1]).abs() < 1e-8, "{fam:?} {i}");
            }
        }
    }
}
