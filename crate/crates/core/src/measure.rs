//! Scalar diagnostics of converged states.

use alloc::vec::Vec;

use crate::coupling::RodSample;
use crate::error::{Error, Result};
use crate::mesh::ControlMesh;
use crate::solver::principal_axes;
use crate::surface::evaluate_jet;
use crate::vec3::Vec3;
#[allow(unused_imports)]
use num_traits::Float;

/// Line tension predicted by the thin-neck expansion at neck radius
/// `r_star` and pressure `p` (to first order in `1/√p`).
pub fn perturbation_sigma(r_star: f64, p: f64) -> Result<f64> {
    if !(r_star > 0.0 && r_star < core::f64::consts::SQRT_2) {
        return Err(Error::Domain("neck radius must lie in (0, √2)"));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Domain("pressure must be positive"));
    }
    let r = r_star;
    let sigma0 = (r - r * r * r) / (2.0 - r * r).sqrt();
    let coeffs = [-0.98517, 3.36358, -2.15325, 0.84090, -0.93567];
    let sigma1 = coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c);
    Ok(sigma0 + sigma1 / p.sqrt())
}

/// Quadrature mean of the rod stretch.
pub fn mean_stretch(samples: &[RodSample]) -> f64 {
    let w: f64 = samples.iter().map(|s| s.weight).sum();
    samples.iter().map(|s| s.weight * s.strains.nu3).sum::<f64>() / w
}

/// Line tension read off the rod stretch, `(D/p)(ν̄₃ − 1)`; returns it with
/// `ν̄₃`.
pub fn measure_sigma(samples: &[RodSample], stretch_modulus: f64, p: f64) -> (f64, f64) {
    let nu = mean_stretch(samples);
    (stretch_modulus / p * (nu - 1.0), nu)
}

/// Distance of rod points from a symmetry axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeckRadius {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Weighted mean, min and max distance of `samples` from the line through
/// `origin` along `axis`.
pub fn neck_radius(samples: &[RodSample], origin: Vec3, axis: Vec3) -> Result<NeckRadius> {
    if samples.is_empty() {
        return Err(Error::Domain("neck radius needs a rod"));
    }
    let a = axis.normalized().ok_or(Error::Domain("axis must be nonzero"))?;
    let mut out = NeckRadius { mean: 0.0, min: f64::INFINITY, max: 0.0 };
    let mut wsum = 0.0;
    for s in samples {
        let d = s.position - origin;
        let r = (d - a * d.dot(&a)).norm();
        let w = if s.weight > 0.0 { s.weight } else { 1.0 };
        out.mean += w * r;
        wsum += w;
        out.min = out.min.min(r);
        out.max = out.max.max(r);
    }
    out.mean /= wsum;
    Ok(out)
}

/// RMS distance of rod points from their best-fit plane.
pub fn non_planarity(samples: &[RodSample]) -> f64 {
    let pts: Vec<Vec3> = samples.iter().map(|s| s.position).collect();
    if pts.len() < 3 {
        return 0.0;
    }
    let (vals, _, _) = principal_axes(&pts);
    vals[0].max(0.0).sqrt()
}

/// RMS deviation of the limit-point distances from the centroid, relative
/// to their mean.
pub fn asphericity(mesh: &ControlMesh, x: &[f64]) -> f64 {
    let pts = mesh.limit_positions(x);
    let n = pts.len() as f64;
    let mut c = Vec3::ZERO;
    for p in &pts {
        c += *p;
    }
    c *= 1.0 / n;
    let r: Vec<f64> = pts.iter().map(|p| (*p - c).norm()).collect();
    let mean = r.iter().sum::<f64>() / n;
    (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt() / mean
}

/// Quadrature mean of `|κ₃|`.
pub fn mean_twist(samples: &[RodSample]) -> f64 {
    let w: f64 = samples.iter().map(|s| s.weight).sum();
    samples.iter().map(|s| s.weight * s.strains.kappa[2].abs()).sum::<f64>() / w
}

/// Mean and Gaussian curvature per control vertex: the average over its
/// incident elements at the point with weight 2/3 on that vertex. Curvature
/// at the extraordinary points themselves is not well defined.
pub fn vertex_curvatures(mesh: &ControlMesh, x: &[f64]) -> Result<Vec<(f64, f64)>> {
    const INSET: f64 = 1.0 / 6.0;
    (0..mesh.num_vertices())
        .map(|v| {
            let tris = mesh.vertex_triangles(v);
            let (mut h, mut k) = (0.0, 0.0);
            for &t in tris {
                let corner = mesh.triangles()[t as usize].iter().position(|&c| c as usize == v).unwrap();
                let mut bary = [INSET; 3];
                bary[corner] = 1.0 - 2.0 * INSET;
                let jet = evaluate_jet(mesh, x, t as usize, bary, 2)?;
                h += jet.mean_curvature;
                k += jet.gaussian_curvature;
            }
            let n = tris.len() as f64;
            Ok((h / n, k / n))
        })
        .collect()
}
