//! Limit evaluation of Loop subdivision surfaces.
//!
//! Regular triangles are quartic box-spline patches. Triangles touching an
//! extraordinary vertex are refined locally with the Loop rules until the
//! sub-triangle containing the evaluation point is regular; the sub-patch
//! weights are then pulled back to the original control points. This is exact
//! (up to rounding) at every point except the extraordinary corner itself.
//!
//! The element chart is `(v, w)`, the barycentric weights of the second and
//! third corner; the first corner has weight `u = 1 - v - w`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::mesh::{loop_beta, Patch};

/// Refinement depth at which an evaluation point is treated as sitting on an
/// extraordinary vertex.
const MAX_DEPTH: usize = 52;

/// Monomials `v^a w^b` of the box-spline table, in column order.
const MONOMIALS: [(usize, usize); 15] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 4),
    (1, 0),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 0),
    (2, 1),
    (2, 2),
    (3, 0),
    (3, 1),
    (4, 0),
];

/// Twelve times the monomial coefficients of the twelve box-spline basis
/// functions.
const BOX_SPLINE: [[i8; 15]; 12] = [
    [1, -4, 6, -4, 1, -2, 6, -6, 2, 0, 0, 0, 2, -2, -1],
    [1, -2, 0, 2, -1, -4, 6, 0, -2, 6, -6, 0, -4, 2, 1],
    [1, -2, 0, 2, -1, 2, -6, 6, -2, 0, 0, 0, -4, 4, 2],
    [6, 0, -12, 8, -1, 0, -12, 12, -2, -12, 12, 0, 8, -2, -1],
    [1, 2, 0, -4, 2, -2, -6, 0, 4, 0, 6, 0, 2, -2, -1],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, -2, -1],
    [1, 2, 0, -4, 2, 4, 6, -12, 4, 6, -6, 0, -4, -2, -1],
    [1, 4, 6, -4, -1, 2, 6, -6, -2, 0, -12, 0, -4, 4, 2],
    [0, 0, 0, 2, -1, 0, 0, 0, -2, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 1],
    [0, 0, 0, 2, -1, 0, 0, 6, -2, 0, 6, 0, 2, -2, -1],
    [0, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0],
];

/// Box-spline basis functions of a regular patch as jets in `(v, w)`.
pub fn box_spline_basis(v: f64, w: f64) -> [Jet; 12] {
    let vj = Jet::variable(v, 0);
    let wj = Jet::variable(w, 1);
    let mut vp = [Jet::constant(1.0); 5];
    let mut wp = [Jet::constant(1.0); 5];
    for k in 1..5 {
        vp[k] = vp[k - 1] * vj;
        wp[k] = wp[k - 1] * wj;
    }
    let mono: [Jet; 15] = core::array::from_fn(|m| {
        let (a, b) = MONOMIALS[m];
        vp[a] * wp[b]
    });
    core::array::from_fn(|k| {
        let mut out = Jet::ZERO;
        for (c, m) in BOX_SPLINE[k].iter().zip(mono.iter()) {
            if *c != 0 {
                out += *m * (*c as f64 / 12.0);
            }
        }
        out
    })
}

/// Basis jets of `patch` at `(v, w)`, one per entry of `patch.points`.
///
/// Coordinates must lie in the closed element (tiny negative values from
/// rounding are clamped).
pub fn patch_basis(patch: &Patch, v: f64, w: f64) -> Result<Vec<Jet>> {
    if !(v.is_finite() && w.is_finite()) {
        return Err(Error::NonFinite("barycentric coordinates"));
    }
    if patch.is_regular() {
        // The box-spline polynomial is used as is just outside the element.
        let inside = v >= -EXTRAPOLATE && w >= -EXTRAPOLATE && v + w <= 1.0 + EXTRAPOLATE;
        let (v, w) = if inside { (v, w) } else { clamp_bary(v, w) };
        return Ok(box_spline_basis(v, w).to_vec());
    }
    let (v, w) = clamp_bary(v, w);
    let mut local = LocalMesh::from_patch(patch);
    local.evaluate(v, w)
}

const EXTRAPOLATE: f64 = 1e-6;

/// Like [`patch_basis`], but regular patches use the box-spline polynomial
/// up to `margin` outside the element. Only meant for root finding; the
/// extension is not the limit surface there.
pub fn patch_basis_extended(patch: &Patch, v: f64, w: f64, margin: f64) -> Result<Vec<Jet>> {
    if patch.is_regular() && v.is_finite() && w.is_finite() {
        let inside = v >= -margin && w >= -margin && v + w <= 1.0 + margin;
        if inside {
            return Ok(box_spline_basis(v, w).to_vec());
        }
    }
    patch_basis(patch, v, w)
}

fn clamp_bary(v: f64, w: f64) -> (f64, f64) {
    let mut v = v.max(0.0);
    let mut w = w.max(0.0);
    let s = v + w;
    if s > 1.0 {
        v /= s;
        w /= s;
    }
    (v, w)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Key {
    Vert(usize),
    Edge(usize, usize),
}

impl Key {
    fn edge(a: usize, b: usize) -> Key {
        Key::Edge(a.min(b), a.max(b))
    }
}

/// A triangle fan around a target triangle, with every local vertex written
/// as a combination of the original patch control points.
struct LocalMesh {
    stride: usize,
    rows: Vec<f64>,
    tris: Vec<[usize; 3]>,
    target: [usize; 3],
}

impl LocalMesh {
    fn from_patch(patch: &Patch) -> LocalMesh {
        let p = patch.points.len();
        let mut rows = vec![0.0; p * p];
        for i in 0..p {
            rows[i * p + i] = 1.0;
        }
        LocalMesh {
            stride: p,
            rows,
            tris: patch.local_tris.iter().map(|t| t.map(|x| x as usize)).collect(),
            target: [0, 1, 2],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.stride..(i + 1) * self.stride]
    }

    fn valence(&self, a: usize) -> usize {
        self.tris.iter().filter(|t| t.contains(&a)).count()
    }

    /// Counter-clockwise ring of `center` starting at `first`.
    fn ring_from(&self, center: usize, first: usize) -> Vec<usize> {
        let next = |b: usize| -> usize {
            for t in &self.tris {
                if let Some(k) = t.iter().position(|&x| x == center) {
                    if t[(k + 1) % 3] == b {
                        return t[(k + 2) % 3];
                    }
                }
            }
            unreachable!("incomplete ring in local subdivision")
        };
        let mut ring = vec![first];
        let mut cur = next(first);
        while cur != first {
            ring.push(cur);
            cur = next(cur);
        }
        ring
    }

    fn evaluate(&mut self, mut v: f64, mut w: f64) -> Result<Vec<Jet>> {
        let mut scale = 1.0;
        for _ in 0..MAX_DEPTH {
            let [a, b, c] = self.target;
            if self.valence(a) == 6 && self.valence(b) == 6 && self.valence(c) == 6 {
                return Ok(self.regular_weights(v, w, scale));
            }
            let u = 1.0 - v - w;
            let (child, s) = if u > 0.5 {
                v *= 2.0;
                w *= 2.0;
                ([Key::Vert(a), Key::edge(a, b), Key::edge(a, c)], 2.0)
            } else if v > 0.5 {
                v = 2.0 * v - 1.0;
                w *= 2.0;
                ([Key::edge(a, b), Key::Vert(b), Key::edge(b, c)], 2.0)
            } else if w > 0.5 {
                v *= 2.0;
                w = 2.0 * w - 1.0;
                ([Key::edge(a, c), Key::edge(b, c), Key::Vert(c)], 2.0)
            } else {
                v = 1.0 - 2.0 * v;
                w = 1.0 - 2.0 * w;
                ([Key::edge(b, c), Key::edge(a, c), Key::edge(a, b)], -2.0)
            };
            scale *= s;
            self.refine(child);
        }
        Err(Error::Singularity)
    }

    /// Replaces the fan by the refined fan around the child triangle `child`.
    fn refine(&mut self, child: [Key; 3]) {
        let mut keys: Vec<Key> = Vec::with_capacity(32);
        let mut tris: Vec<[usize; 3]> = Vec::with_capacity(32);
        let id = |k: Key, keys: &mut Vec<Key>| -> usize {
            match keys.iter().position(|&x| x == k) {
                Some(i) => i,
                None => {
                    keys.push(k);
                    keys.len() - 1
                }
            }
        };
        for &[a, b, c] in &self.tris {
            let (ab, bc, ca) = (Key::edge(a, b), Key::edge(b, c), Key::edge(c, a));
            let sub = [
                [Key::Vert(a), ab, ca],
                [ab, Key::Vert(b), bc],
                [ca, bc, Key::Vert(c)],
                [ab, bc, ca],
            ];
            for t in sub {
                if t.iter().any(|k| child.contains(k)) {
                    tris.push([id(t[0], &mut keys), id(t[1], &mut keys), id(t[2], &mut keys)]);
                }
            }
        }
        let target = child.map(|k| id(k, &mut keys));

        let stride = self.stride;
        let mut rows = vec![0.0; keys.len() * stride];
        for (i, key) in keys.iter().enumerate() {
            let out = &mut rows[i * stride..(i + 1) * stride];
            match *key {
                Key::Vert(a) => {
                    debug_assert!(self.target.contains(&a));
                    let ring: Vec<usize> = {
                        let t0 = self.tris.iter().find(|t| t.contains(&a)).unwrap();
                        let k = t0.iter().position(|&x| x == a).unwrap();
                        self.ring_from(a, t0[(k + 1) % 3])
                    };
                    let beta = loop_beta(ring.len());
                    let self_w = 1.0 - ring.len() as f64 * beta;
                    for (o, x) in out.iter_mut().zip(self.row(a)) {
                        *o = self_w * x;
                    }
                    for &r in &ring {
                        for (o, x) in out.iter_mut().zip(self.row(r)) {
                            *o += beta * x;
                        }
                    }
                }
                Key::Edge(a, b) => {
                    let mut opposite = [usize::MAX; 2];
                    let mut n = 0;
                    for t in &self.tris {
                        if t.contains(&a) && t.contains(&b) {
                            let o = *t.iter().find(|&&x| x != a && x != b).unwrap();
                            if n < 2 {
                                opposite[n] = o;
                            }
                            n += 1;
                        }
                    }
                    debug_assert_eq!(n, 2, "edge point outside the local fan");
                    for (o, x) in out.iter_mut().zip(self.row(a)) {
                        *o = 0.375 * x;
                    }
                    for (o, x) in out.iter_mut().zip(self.row(b)) {
                        *o += 0.375 * x;
                    }
                    for &c in &opposite[..n.min(2)] {
                        for (o, x) in out.iter_mut().zip(self.row(c)) {
                            *o += 0.125 * x;
                        }
                    }
                }
            }
        }
        self.rows = rows;
        self.tris = tris;
        self.target = target;
    }

    fn regular_weights(&self, v: f64, w: f64, scale: f64) -> Vec<Jet> {
        let [a, b, c] = self.target;
        let ru = self.ring_from(a, b);
        let rv = self.ring_from(b, c);
        let rw = self.ring_from(c, a);
        let order = [ru[4], ru[3], ru[5], a, ru[2], rv[3], b, c, rw[4], rv[4], rv[5], rw[3]];
        let basis = box_spline_basis(v, w);
        let mut out = vec![Jet::ZERO; self.stride];
        for (k, &li) in order.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(self.row(li)) {
                if x != 0.0 {
                    *o += basis[k] * x;
                }
            }
        }
        if scale != 1.0 {
            for o in out.iter_mut() {
                *o = o.rescale(scale);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ControlMesh;
    use crate::vec3::Vec3;

    /// Lattice positions of the twelve regular control points; the element is
    /// the triangle (4, 7, 8).
    const LATTICE: [(f64, f64); 12] = [
        (0.5, 1.0),
        (1.5, 1.0),
        (0.0, 0.0),
        (1.0, 0.0),
        (2.0, 0.0),
        (-0.5, -1.0),
        (0.5, -1.0),
        (1.5, -1.0),
        (2.5, -1.0),
        (0.0, -2.0),
        (1.0, -2.0),
        (2.0, -2.0),
    ];

    #[test]
    fn partition_of_unity_and_linear_precision() {
        for &(v, w) in &[(1.0 / 3.0, 1.0 / 3.0), (0.1, 0.7), (0.0, 0.0), (0.5, 0.5)] {
            let b = box_spline_basis(v, w);
            let mut sum = Jet::ZERO;
            let mut x = Jet::ZERO;
            let mut y = Jet::ZERO;
            for k in 0..12 {
                sum += b[k];
                x += b[k] * LATTICE[k].0;
                y += b[k] * LATTICE[k].1;
            }
            assert!((sum.value() - 1.0).abs() < 1e-14);
            for m in 1..10 {
                assert!(sum.0[m].abs() < 1e-13);
            }
            // The chart point is U + v (V - U) + w (W - U) with U, V, W = 4, 7, 8.
            let (ux, uy) = LATTICE[3];
            let ex = ux + v * (LATTICE[6].0 - ux) + w * (LATTICE[7].0 - ux);
            let ey = uy + v * (LATTICE[6].1 - uy) + w * (LATTICE[7].1 - uy);
            assert!((x.value() - ex).abs() < 1e-14 && (y.value() - ey).abs() < 1e-14);
            assert!((x.d1(0) - (LATTICE[6].0 - ux)).abs() < 1e-13);
            assert!((y.d1(1) - (LATTICE[7].1 - uy)).abs() < 1e-13);
            assert!(x.d2(0, 0).abs() < 1e-12 && y.d2(0, 1).abs() < 1e-12);
        }
    }

    fn random_positions(m: &ControlMesh, seed: u64) -> Vec<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        m.vertices()
            .iter()
            .flat_map(|p| {
                let q = *p * (1.0 + 0.2 * next());
                q.0
            })
            .collect()
    }

    fn eval(m: &ControlMesh, x: &[f64], t: usize, v: f64, w: f64) -> [Vec3; 10] {
        let patch = m.patch(t);
        let basis = patch_basis(patch, v, w).unwrap();
        let mut out = [Vec3::ZERO; 10];
        for (b, &p) in basis.iter().zip(patch.points.iter()) {
            let xp = Vec3::new(x[3 * p as usize], x[3 * p as usize + 1], x[3 * p as usize + 2]);
            for k in 0..10 {
                out[k] += xp * b.0[k];
            }
        }
        out
    }

    /// Forcing one refinement step on a regular patch must reproduce the
    /// direct box-spline evaluation.
    #[test]
    fn refinement_reproduces_box_spline() {
        let m = ControlMesh::icosphere(2).unwrap();
        let x = random_positions(&m, 3);
        let t = (0..m.num_triangles()).find(|&t| m.patch(t).is_regular()).unwrap();
        let [u, v, w] = m.triangles()[t];
        let mut pts = vec![u, v, w];
        let mut tri_ids = Vec::new();
        for c in [u, v, w] {
            for &tt in m.vertex_triangles(c as usize) {
                if !tri_ids.contains(&tt) {
                    tri_ids.push(tt);
                }
                for &q in &m.triangles()[tt as usize] {
                    if !pts.contains(&q) {
                        pts.push(q);
                    }
                }
            }
        }
        let local_tris: Vec<[u8; 3]> = tri_ids
            .iter()
            .map(|&tt| {
                m.triangles()[tt as usize].map(|q| pts.iter().position(|&p| p == q).unwrap() as u8)
            })
            .collect();
        let generic = Patch { points: pts.clone(), local_tris };
        for &(bv, bw) in &[(0.2, 0.3), (0.05, 0.9), (0.6, 0.1), (0.3, 0.3)] {
            let direct = eval(&m, &x, t, bv, bw);
            // Run the generic path with one forced refinement.
            let mut local = LocalMesh::from_patch(&generic);
            let uu = 1.0 - bv - bw;
            let (a, b, c) = (0, 1, 2);
            let (child, s, cv, cw) = if uu > 0.5 {
                ([Key::Vert(a), Key::edge(a, b), Key::edge(a, c)], 2.0, 2.0 * bv, 2.0 * bw)
            } else if bv > 0.5 {
                ([Key::edge(a, b), Key::Vert(b), Key::edge(b, c)], 2.0, 2.0 * bv - 1.0, 2.0 * bw)
            } else if bw > 0.5 {
                ([Key::edge(a, c), Key::edge(b, c), Key::Vert(c)], 2.0, 2.0 * bv, 2.0 * bw - 1.0)
            } else {
                ([Key::edge(b, c), Key::edge(a, c), Key::edge(a, b)], -2.0, 1.0 - 2.0 * bv, 1.0 - 2.0 * bw)
            };
            local.refine(child);
            let weights = local.regular_weights(cv, cw, s);
            for k in 0..10 {
                let mut p = Vec3::ZERO;
                for (wgt, &q) in weights.iter().zip(pts.iter()) {
                    let xq = Vec3::new(x[3 * q as usize], x[3 * q as usize + 1], x[3 * q as usize + 2]);
                    p += xq * wgt.0[k];
                }
                assert!((p - direct[k]).norm() < 1e-11 * (1.0 + direct[k].norm()), "coef {k}");
            }
        }
    }

    /// Positions and first derivatives agree across every shared edge.
    #[test]
    fn c1_across_edges() {
        let m = ControlMesh::icosphere(1).unwrap();
        let x = random_positions(&m, 11);
        for t in 0..m.num_triangles() {
            let tri = m.triangles()[t];
            for k in 0..3 {
                let nb = m.neighbors(t)[k] as usize;
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let s = 0.37;
                // Point a + s (b - a) in both charts.
                let bary_of = |tri: [u32; 3], pa: u32, pb: u32| -> (f64, f64) {
                    let mut bc = [0.0; 3];
                    bc[tri.iter().position(|&q| q == pa).unwrap()] = 1.0 - s;
                    bc[tri.iter().position(|&q| q == pb).unwrap()] = s;
                    (bc[1], bc[2])
                };
                let (v1, w1) = bary_of(tri, a, b);
                let ntri = m.triangles()[nb];
                let (v2, w2) = bary_of(ntri, a, b);
                let p = eval(&m, &x, t, v1, w1);
                let q = eval(&m, &x, nb, v2, w2);
                assert!((p[0] - q[0]).norm() < 1e-12, "position mismatch on tri {t} edge {k}");
                // Tangent along the edge and the normal direction must agree.
                let n1 = p[1].cross(&p[2]).normalized().unwrap();
                let n2 = q[1].cross(&q[2]).normalized().unwrap();
                assert!((n1 - n2).norm() < 1e-10, "normal mismatch on tri {t} edge {k}");
            }
        }
    }

    #[test]
    fn corner_matches_limit_position() {
        let m = ControlMesh::icosphere(1).unwrap();
        let x = random_positions(&m, 5);
        let limit = m.limit_positions(&x);
        for t in 0..m.num_triangles() {
            let tri = m.triangles()[t];
            // Near the first corner (extraordinary for irregular patches).
            let p = eval(&m, &x, t, 1e-9, 1e-9)[0];
            assert!((p - limit[tri[0] as usize]).norm() < 1e-6);
            if m.valence(tri[1] as usize) == 6 {
                let p = eval(&m, &x, t, 1.0, 0.0)[0];
                assert!((p - limit[tri[1] as usize]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_extraordinary_corner_is_singular() {
        let m = ControlMesh::icosphere(1).unwrap();
        let t = (0..m.num_triangles())
            .find(|&t| m.valence(m.triangles()[t][0] as usize) == 5)
            .unwrap();
        assert_eq!(patch_basis(m.patch(t), 0.0, 0.0).unwrap_err(), Error::Singularity);
    }

    #[test]
    fn irregular_partition_of_unity() {
        let m = ControlMesh::icosphere(0).unwrap();
        for t in 0..m.num_triangles() {
            let b = patch_basis(m.patch(t), 0.2, 0.45).unwrap();
            let mut sum = Jet::ZERO;
            for j in &b {
                sum += *j;
            }
            assert!((sum.value() - 1.0).abs() < 1e-13);
            for k in 1..10 {
                assert!(sum.0[k].abs() < 1e-10);
            }
        }
    }
}
