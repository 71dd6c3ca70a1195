//! Triangulated control nets for Loop subdivision surfaces.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::vec3::Vec3;
#[allow(unused_imports)]
use num_traits::Float;

/// Largest icosphere level accepted by [`ControlMesh::icosphere`].
pub const MAX_ICOSPHERE_LEVEL: u32 = 7;

/// Control points influencing one triangle of the limit surface.
///
/// For a regular triangle (all three corners of valence 6) `points` holds the
/// twelve box-spline control points in the standard ordering. Otherwise it
/// holds every vertex of the triangles touching the element, starting with
/// the element's own corners, and `local_tris` records those triangles in
/// indices into `points`.
#[derive(Clone, Debug)]
pub struct Patch {
    pub points: Vec<u32>,
    pub local_tris: Vec<[u8; 3]>,
}

impl Patch {
    pub fn is_regular(&self) -> bool {
        self.local_tris.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct ControlMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    /// Counter-clockwise one-ring of every vertex.
    rings: Vec<Vec<u32>>,
    /// `neighbors[t][k]` is the triangle across the edge opposite corner `k`.
    neighbors: Vec<[u32; 3]>,
    vertex_triangles: Vec<Vec<u32>>,
    patches: Vec<Patch>,
}

impl ControlMesh {
    /// Validates the connectivity and builds the one-ring and patch tables.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<ControlMesh> {
        let nv = vertices.len();
        let nt = triangles.len();
        if nv == 0 || nt == 0 {
            return Err(Error::Topology("empty mesh".into()));
        }
        let mut directed: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                if a as usize >= nv || b as usize >= nv {
                    return Err(Error::Topology(format!("triangle {t} references a missing vertex")));
                }
                if a == b {
                    return Err(Error::Topology(format!("triangle {t} is degenerate")));
                }
                if directed.insert((a, b), t as u32).is_some() {
                    return Err(Error::Topology(format!(
                        "directed edge ({a}, {b}) appears twice (inconsistent orientation or non-manifold edge)"
                    )));
                }
            }
        }
        let mut neighbors = Vec::with_capacity(nt);
        for (t, tri) in triangles.iter().enumerate() {
            let mut nb = [0u32; 3];
            for (k, slot) in nb.iter_mut().enumerate() {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                *slot = *directed.get(&(b, a)).ok_or_else(|| {
                    Error::Topology(format!("edge ({a}, {b}) of triangle {t} is a boundary edge"))
                })?;
            }
            neighbors.push(nb);
        }
        let n_edges = directed.len() / 2;
        let euler = nv as i64 - n_edges as i64 + nt as i64;
        if euler != 2 {
            return Err(Error::Topology(format!("Euler characteristic is {euler}, expected 2")));
        }

        let mut vertex_triangles = alloc::vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v as usize].push(t as u32);
            }
        }
        let mut rings = Vec::with_capacity(nv);
        for v in 0..nv {
            let tris = &vertex_triangles[v];
            if tris.len() < 3 {
                return Err(Error::Topology(format!("vertex {v} has valence {}", tris.len())));
            }
            // Around v, each triangle (v, b, c) leads from b to c.
            let mut next = BTreeMap::new();
            for &t in tris {
                let tri = triangles[t as usize];
                let k = tri.iter().position(|&x| x as usize == v).unwrap();
                next.insert(tri[(k + 1) % 3], tri[(k + 2) % 3]);
            }
            let start = *next.keys().next().unwrap();
            let mut ring = Vec::with_capacity(tris.len());
            let mut cur = start;
            loop {
                ring.push(cur);
                cur = match next.get(&cur) {
                    Some(&c) => c,
                    None => return Err(Error::Topology(format!("vertex {v} has an open fan"))),
                };
                if cur == start || ring.len() > tris.len() {
                    break;
                }
            }
            if ring.len() != tris.len() || cur != start {
                return Err(Error::Topology(format!("vertex {v} is not a manifold vertex")));
            }
            rings.push(ring);
        }

        let mut mesh = ControlMesh {
            vertices,
            triangles,
            rings,
            neighbors,
            vertex_triangles,
            patches: Vec::new(),
        };
        mesh.patches = (0..nt).map(|t| mesh.build_patch(t)).collect::<Result<_>>()?;
        Ok(mesh)
    }

    /// The icosahedron refined `level` times, vertices projected to the unit
    /// sphere, triangles oriented with outward normals.
    pub fn icosphere(level: u32) -> Result<ControlMesh> {
        if level > MAX_ICOSPHERE_LEVEL {
            return Err(Error::Size {
                what: "icosphere level",
                value: level as usize,
                limit: MAX_ICOSPHERE_LEVEL as usize,
            });
        }
        let phi = (1.0 + 5.0.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
        .collect();
        let mut tris: Vec<[u32; 3]> = alloc::vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for t in tris.iter_mut() {
            let [a, b, c] = t.map(|i| verts[i as usize]);
            if (b - a).cross(&(c - a)).dot(&(a + b + c)) < 0.0 {
                t.swap(1, 2);
            }
        }
        for _ in 0..level {
            let mut mid: BTreeMap<(u32, u32), u32> = BTreeMap::new();
            let mut midpoint = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                let key = (a.min(b), a.max(b));
                *mid.entry(key).or_insert_with(|| {
                    let p = (verts[a as usize] + verts[b as usize]).normalized().unwrap();
                    verts.push(p);
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(tris.len() * 4);
            for &[a, b, c] in &tris {
                let ab = midpoint(a, b, &mut verts);
                let bc = midpoint(b, c, &mut verts);
                let ca = midpoint(c, a, &mut verts);
                next.push([a, ab, ca]);
                next.push([ab, b, bc]);
                next.push([ca, bc, c]);
                next.push([ab, bc, ca]);
            }
            tris = next;
        }
        ControlMesh::new(verts, tris)
    }

    fn build_patch(&self, t: usize) -> Result<Patch> {
        let [u, v, w] = self.triangles[t];
        let regular = [u, v, w].iter().all(|&x| self.valence(x as usize) == 6);
        if regular {
            let ru = self.ring_from(u, v);
            let rv = self.ring_from(v, w);
            let rw = self.ring_from(w, u);
            if ru[1] != w || rv[1] != u || rw[1] != v {
                return Err(Error::Topology(format!("triangle {t} disagrees with its vertex rings")));
            }
            // Box-spline ordering: corners are points 4, 7, 8.
            let points = alloc::vec![
                ru[4], ru[3], ru[5], u, ru[2], rv[3], v, w, rw[4], rv[4], rv[5], rw[3]
            ];
            return Ok(Patch { points, local_tris: Vec::new() });
        }
        let mut points: Vec<u32> = alloc::vec![u, v, w];
        for (corner, first) in [(u, v), (v, w), (w, u)] {
            for x in self.ring_from(corner, first) {
                if !points.contains(&x) {
                    points.push(x);
                }
            }
        }
        if points.len() > u8::MAX as usize {
            return Err(Error::Size { what: "patch size", value: points.len(), limit: 255 });
        }
        let mut tri_ids: Vec<u32> = Vec::new();
        for c in [u, v, w] {
            for &tt in &self.vertex_triangles[c as usize] {
                if !tri_ids.contains(&tt) {
                    tri_ids.push(tt);
                }
            }
        }
        let local = |x: u32| points.iter().position(|&p| p == x).unwrap() as u8;
        let local_tris = tri_ids
            .iter()
            .map(|&tt| self.triangles[tt as usize].map(local))
            .collect();
        Ok(Patch { points, local_tris })
    }

    /// One-ring of `center` in counter-clockwise order starting at `first`.
    pub fn ring_from(&self, center: u32, first: u32) -> Vec<u32> {
        let ring = &self.rings[center as usize];
        let k = ring.iter().position(|&x| x == first).expect("not a neighbor");
        (0..ring.len()).map(|i| ring[(k + i) % ring.len()]).collect()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.triangles.len() * 3 / 2
    }

    pub fn valence(&self, v: usize) -> usize {
        self.rings[v].len()
    }

    pub fn vertex_valences(&self) -> Vec<usize> {
        self.rings.iter().map(Vec::len).collect()
    }

    pub fn ring(&self, v: usize) -> &[u32] {
        &self.rings[v]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[u32] {
        &self.vertex_triangles[v]
    }

    pub fn neighbors(&self, t: usize) -> [u32; 3] {
        self.neighbors[t]
    }

    pub fn patch(&self, t: usize) -> &Patch {
        &self.patches[t]
    }

    /// Limit-surface positions of every control vertex for the given control
    /// positions (flattened xyz).
    pub fn limit_positions(&self, x: &[f64]) -> Vec<Vec3> {
        let at = |i: u32| Vec3::new(x[3 * i as usize], x[3 * i as usize + 1], x[3 * i as usize + 2]);
        (0..self.num_vertices())
            .map(|v| {
                let ring = &self.rings[v];
                let n = ring.len() as f64;
                let w = 3.0 / (8.0 * loop_beta(ring.len()));
                let mut sum = at(v as u32) * w;
                for &r in ring {
                    sum += at(r);
                }
                sum * (1.0 / (w + n))
            })
            .collect()
    }

    /// Control positions flattened as `[x0, y0, z0, x1, ...]`.
    pub fn flat_positions(&self) -> Vec<f64> {
        self.vertices.iter().flat_map(|p| p.0).collect()
    }
}

/// Loop's vertex-rule weight for a vertex of valence `n`.
pub fn loop_beta(n: usize) -> f64 {
    let n = n as f64;
    let c = 0.375 + 0.25 * (2.0 * core::f64::consts::PI / n).cos();
    (0.625 - c * c) / n
}
