//! Differential geometry of the limit surface in element charts.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::mesh::ControlMesh;
use crate::subdivision::patch_basis;
use crate::vec3::{Sym2, Vec3};

/// Area elements at or below this value are treated as degenerate.
pub const SQRT_G_TOL: f64 = 1e-14;

/// Position, derivatives and curvature of a surface at one chart point.
///
/// Indices refer to the chart `(X¹, X²)`; `a2` holds `f,11`, `f,12`, `f,22`
/// and `a3` (when present) `f,111`, `f,112`, `f,122`, `f,222`.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceJet {
    pub position: Vec3,
    pub a: [Vec3; 2],
    pub a2: [Vec3; 3],
    pub a3: Option<[Vec3; 4]>,
    pub normal: Vec3,
    pub g_cov: Sym2,
    pub g_con: Sym2,
    pub b_cov: Sym2,
    pub mean_curvature: f64,
    pub gaussian_curvature: f64,
    pub sqrt_g: f64,
}

impl SurfaceJet {
    /// Completes a jet from raw chart derivatives. The normal is
    /// `a₁ × a₂ / √g`, and `H = ½ g^{αβ} b_{αβ}`, which is `-1` on the unit
    /// sphere with outward normal.
    pub fn from_derivatives(
        position: Vec3,
        a: [Vec3; 2],
        a2: [Vec3; 3],
        a3: Option<[Vec3; 4]>,
    ) -> Result<SurfaceJet> {
        let cross = a[0].cross(&a[1]);
        let sqrt_g = cross.norm();
        if !(sqrt_g > SQRT_G_TOL) {
            return Err(Error::DegenerateGeometry { sqrt_g });
        }
        let normal = cross * (1.0 / sqrt_g);
        let g_cov = Sym2([a[0].dot(&a[0]), a[0].dot(&a[1]), a[1].dot(&a[1])]);
        let g_con = g_cov.inverse().ok_or(Error::DegenerateGeometry { sqrt_g })?;
        let b_cov = Sym2([normal.dot(&a2[0]), normal.dot(&a2[1]), normal.dot(&a2[2])]);
        Ok(SurfaceJet {
            position,
            a,
            a2,
            a3,
            normal,
            g_cov,
            g_con,
            b_cov,
            mean_curvature: 0.5 * g_con.contract(&b_cov),
            gaussian_curvature: b_cov.det() / g_cov.det(),
            sqrt_g,
        })
    }

    /// Builds a jet from three component jets of the position.
    pub fn from_jets(f: &[Jet; 3], order: usize) -> Result<SurfaceJet> {
        let v = |k: usize| Vec3::new(f[0].0[k], f[1].0[k], f[2].0[k]);
        let a3 = (order >= 3).then(|| [v(6) * 6.0, v(7) * 2.0, v(8) * 2.0, v(9) * 6.0]);
        SurfaceJet::from_derivatives(v(0), [v(1), v(2)], [v(3) * 2.0, v(4), v(5) * 2.0], a3)
    }

    /// Contravariant tangents `a^α = g^{αβ} a_β`.
    pub fn a_con(&self) -> [Vec3; 2] {
        let gi = &self.g_con.0;
        [
            self.a[0] * gi[0] + self.a[1] * gi[1],
            self.a[0] * gi[1] + self.a[1] * gi[2],
        ]
    }
}

/// `(H, K, √g)` of a jet.
pub fn curvature_measures(jet: &SurfaceJet) -> (f64, f64, f64) {
    (jet.mean_curvature, jet.gaussian_curvature, jet.sqrt_g)
}

/// Control positions of vertex `i` in a flattened coordinate array.
#[inline]
pub fn control_point(x: &[f64], i: u32) -> Vec3 {
    let k = 3 * i as usize;
    Vec3::new(x[k], x[k + 1], x[k + 2])
}

/// Position jets of the limit surface for control positions `x`, given the
/// basis jets of an element's patch.
pub fn position_jets(mesh: &ControlMesh, element: usize, basis: &[Jet], x: &[f64]) -> [Jet; 3] {
    let mut f = [Jet::ZERO; 3];
    for (b, &p) in basis.iter().zip(mesh.patch(element).points.iter()) {
        let xp = control_point(x, p);
        for (fc, xc) in f.iter_mut().zip(xp.0) {
            *fc += *b * xc;
        }
    }
    f
}

fn check_bary(bary: [f64; 3]) -> Result<()> {
    let tol = 1e-12;
    if bary.iter().any(|&b| !b.is_finite()) {
        return Err(Error::NonFinite("barycentric coordinates"));
    }
    if bary.iter().any(|&b| b < -tol) || (bary.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("barycentric coordinates must be non-negative and sum to 1"));
    }
    Ok(())
}

/// Evaluates the limit surface of control positions `x` on `element` at
/// barycentric coordinates `bary` (weights of the element's three corners).
pub fn evaluate_jet(
    mesh: &ControlMesh,
    x: &[f64],
    element: usize,
    bary: [f64; 3],
    order: usize,
) -> Result<SurfaceJet> {
    check_bary(bary)?;
    let basis = match patch_basis(mesh.patch(element), bary[1], bary[2]) {
        Ok(b) => b,
        Err(Error::Singularity) if order < 3 => {
            return Err(Error::DegenerateGeometry { sqrt_g: 0.0 })
        }
        Err(e) => return Err(e),
    };
    SurfaceJet::from_jets(&position_jets(mesh, element, &basis, x), order)
}

/// Metric of the reference surface in an element chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceMetric {
    pub h_cov: Sym2,
    pub sqrt_h: f64,
}

/// Reference metric `h_{αβ} = R,α · R,β` of the mesh's own limit surface.
pub fn reference_metric(mesh: &ControlMesh, element: usize, bary: [f64; 3]) -> Result<ReferenceMetric> {
    let jet = evaluate_jet(mesh, &mesh.flat_positions(), element, bary, 1)?;
    Ok(ReferenceMetric { h_cov: jet.g_cov, sqrt_h: jet.sqrt_g })
}

/// Chart coordinates `(v, w)` and weight of the three-point Gauss rule on the
/// unit triangle.
pub const GAUSS_POINTS: [(f64, f64, f64); 3] = [
    (1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0),
    (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
    (1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0),
];

/// Precomputed shape data at every surface quadrature point.
#[derive(Clone, Debug)]
pub struct SurfaceQuadrature {
    /// `offsets[q]..offsets[q + 1]` indexes `ids` and `shape` for point `q`.
    offsets: Vec<u32>,
    ids: Vec<u32>,
    /// `[N, N,v, N,w, N,vv, N,vw, N,ww]` per control point.
    shape: Vec<[f64; 6]>,
    pub weight: Vec<f64>,
    pub element: Vec<u32>,
    pub reference: Vec<ReferenceMetric>,
    /// Reference limit position at each point.
    pub reference_position: Vec<Vec3>,
}

impl SurfaceQuadrature {
    pub fn new(mesh: &ControlMesh) -> Result<SurfaceQuadrature> {
        let n = mesh.num_triangles() * GAUSS_POINTS.len();
        let mut q = SurfaceQuadrature {
            offsets: Vec::with_capacity(n + 1),
            ids: Vec::with_capacity(n * 12),
            shape: Vec::with_capacity(n * 12),
            weight: Vec::with_capacity(n),
            element: Vec::with_capacity(n),
            reference: Vec::with_capacity(n),
            reference_position: Vec::with_capacity(n),
        };
        q.offsets.push(0);
        let xref = mesh.flat_positions();
        for t in 0..mesh.num_triangles() {
            let patch = mesh.patch(t);
            for &(v, w, wt) in &GAUSS_POINTS {
                let basis = patch_basis(patch, v, w)?;
                for (b, &p) in basis.iter().zip(patch.points.iter()) {
                    q.ids.push(p);
                    q.shape.push([b.0[0], b.0[1], b.0[2], 2.0 * b.0[3], b.0[4], 2.0 * b.0[5]]);
                }
                q.offsets.push(q.ids.len() as u32);
                let jet = SurfaceJet::from_jets(&position_jets(mesh, t, &basis, &xref), 2)?;
                q.weight.push(wt);
                q.element.push(t as u32);
                q.reference.push(ReferenceMetric { h_cov: jet.g_cov, sqrt_h: jet.sqrt_g });
                q.reference_position.push(jet.position);
            }
        }
        Ok(q)
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    /// Control vertex ids and shape data of point `q`.
    #[inline]
    pub fn point(&self, q: usize) -> (&[u32], &[[f64; 6]]) {
        let (a, b) = (self.offsets[q] as usize, self.offsets[q + 1] as usize);
        (&self.ids[a..b], &self.shape[a..b])
    }

    /// Position and first and second chart derivatives at point `q`.
    #[inline]
    pub fn derivatives(&self, q: usize, x: &[f64]) -> (Vec3, [Vec3; 2], [Vec3; 3]) {
        let (ids, shape) = self.point(q);
        let mut d = [[0.0f64; 3]; 6];
        for (&p, s) in ids.iter().zip(shape) {
            let k = 3 * p as usize;
            let xp = [x[k], x[k + 1], x[k + 2]];
            for (dj, sj) in d.iter_mut().zip(s) {
                dj[0] += sj * xp[0];
                dj[1] += sj * xp[1];
                dj[2] += sj * xp[2];
            }
        }
        (
            Vec3(d[0]),
            [Vec3(d[1]), Vec3(d[2])],
            [Vec3(d[3]), Vec3(d[4]), Vec3(d[5])],
        )
    }

    /// Surface jet at point `q` for control positions `x`.
    pub fn jet(&self, q: usize, x: &[f64]) -> Result<SurfaceJet> {
        let (f, a, a2) = self.derivatives(q, x);
        SurfaceJet::from_derivatives(f, a, a2, None)
    }
}
