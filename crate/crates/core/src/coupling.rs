//! Rod–surface coupling: locating rod points on the reference surface,
//! pulling surface jets back to the spherical rod chart, and routing rod
//! energy variations to surface and rod degrees of freedom.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};
use crate::jet::{invert_map, ChartPowers, Jet, Jet3};
use crate::mesh::ControlMesh;
use crate::rod::{
    directors, element_theta, energy_density, energy_density_variation, hermite_basis, rod_strains,
    slot_eta, slot_eta_d1, slot_eta_d2, slot_xi, strain_variations, PullbackJet, RodMaterial, RodReference,
    RodStrains, ThetaSample, ROD_GAUSS,
};
use crate::subdivision::{patch_basis, patch_basis_extended};
use crate::surface::position_jets;
use crate::vec3::{Mat3, Vec3};
#[allow(unused_imports)]
use num_traits::Float;

/// Converged locations have a tangent-plane residual below this.
pub const LOCATE_TOL: f64 = 1e-12;
/// Barycentric distance from an irregular corner below which evaluation is
/// moved into the element.
pub const CORNER_GUARD: f64 = 1e-6;
/// Size of that move.
pub const CORNER_NUDGE: f64 = 1e-5;

const EDGE_TOL: f64 = 1e-10;
// Clamped Newton may overshoot an edge by this much; the patch polynomial
// extends smoothly that far.
const EDGE_SLACK: f64 = 1e-7;
const MAX_NEWTON: usize = 60;
/// How far past a regular element Newton may wander before giving up on it.
const NEWTON_MARGIN: f64 = 0.5;

/// Spherical coordinates on the unit sphere, measured in a rotated frame:
/// `θ` labels the direction `Q (sin θ¹ cos θ², sin θ¹ sin θ², cos θ¹)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalChart {
    pub rotation: Mat3,
}

impl Default for SphericalChart {
    fn default() -> Self {
        SphericalChart { rotation: Mat3::IDENTITY }
    }
}

impl SphericalChart {
    /// Chart whose pole points along `axis`.
    pub fn with_pole(axis: Vec3) -> SphericalChart {
        let axis = axis.normalized().unwrap_or(Vec3::Z);
        SphericalChart { rotation: Mat3::rotation_between(Vec3::Z, axis) }
    }

    pub fn pole(&self) -> Vec3 {
        self.rotation.mul_vec(&Vec3::Z)
    }

    pub fn direction(&self, theta: [f64; 2]) -> Vec3 {
        let (s1, c1) = theta[0].sin_cos();
        let (s2, c2) = theta[1].sin_cos();
        self.rotation.mul_vec(&Vec3::new(s1 * c2, s1 * s2, c1))
    }

    /// Angles of the direction of `p`, with `θ² ∈ (-π, π]`.
    pub fn angles(&self, p: Vec3) -> [f64; 2] {
        let q = self.rotation.transpose().mul_vec(&p);
        let rho = (q.x() * q.x() + q.y() * q.y()).sqrt();
        [rho.atan2(q.z()), q.y().atan2(q.x())]
    }

    /// Angles of a point given as jets, continuous near the expansion point.
    pub fn angle_jets(&self, p: &Jet3) -> [Jet; 2] {
        let m = self.rotation.transpose().0;
        let q: Jet3 = core::array::from_fn(|i| p[0] * m[i][0] + p[1] * m[i][1] + p[2] * m[i][2]);
        let rho = (q[0] * q[0] + q[1] * q[1]).sqrt();
        [Jet::atan2(&rho, &q[2]), Jet::atan2(&q[1], &q[0])]
    }

    /// Re-expresses a point and tangent given in `self` in the chart `to`.
    /// The azimuth is returned in `(-π, π]`.
    pub fn transfer(&self, to: &SphericalChart, theta: [f64; 2], slope: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let t1 = Jet::variable(theta[0], 0);
        let t2 = Jet::variable(theta[1], 1);
        let s1 = t1.sin();
        let local = [s1 * t2.cos(), s1 * t2.sin(), t1.cos()];
        let m = self.rotation.0;
        let world: Jet3 = core::array::from_fn(|i| local[0] * m[i][0] + local[1] * m[i][1] + local[2] * m[i][2]);
        let ang = to.angle_jets(&world);
        let d = |j: &Jet| j.d1(0) * slope[0] + j.d1(1) * slope[1];
        ([ang[0].value(), ang[1].value()], [d(&ang[0]), d(&ang[1])])
    }
}

/// A point of the reference limit surface found by [`locate_point`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocateResult {
    pub element: usize,
    pub bary: [f64; 3],
    pub converged: bool,
    /// Tangent of the angle between the target direction and the located
    /// limit point.
    pub residual: f64,
}

fn corner_position(xref: &[f64], i: u32) -> Vec3 {
    let k = 3 * i as usize;
    Vec3::new(xref[k], xref[k + 1], xref[k + 2])
}

/// Barycentric coordinates where the ray along `dir` meets the plane of
/// control triangle `t`; `None` when the triangle faces away.
fn gnomonic(mesh: &ControlMesh, xref: &[f64], t: usize, dir: Vec3) -> Option<[f64; 3]> {
    let [a, b, c] = mesh.triangles()[t].map(|i| corner_position(xref, i));
    let l = [dir.dot(&b.cross(&c)), dir.dot(&c.cross(&a)), dir.dot(&a.cross(&b))];
    let s = l[0] + l[1] + l[2];
    (s > 0.0).then(|| [l[0] / s, l[1] / s, l[2] / s])
}

fn argmin(b: &[f64; 3]) -> usize {
    let mut k = 0;
    for i in 1..3 {
        if b[i] < b[k] {
            k = i;
        }
    }
    k
}

/// Walks the control net from `start` towards the triangle pierced by `dir`.
fn walk(mesh: &ControlMesh, xref: &[f64], dir: Vec3, start: usize) -> usize {
    let mut t = start.min(mesh.num_triangles() - 1);
    for _ in 0..mesh.num_triangles() {
        match gnomonic(mesh, xref, t, dir) {
            Some(b) if b.iter().all(|&x| x >= -1e-14) => return t,
            Some(b) => t = mesh.neighbors(t)[argmin(&b)] as usize,
            None => break,
        }
    }
    // Exhaustive fallback.
    let mut best = (f64::NEG_INFINITY, 0);
    for t in 0..mesh.num_triangles() {
        if let Some(b) = gnomonic(mesh, xref, t, dir) {
            let m = b[0].min(b[1]).min(b[2]);
            if m > best.0 {
                best = (m, t);
            }
        }
    }
    best.1
}

fn tangent_frame(dir: Vec3) -> [Vec3; 2] {
    let trial = if dir.x().abs() < 0.8 { Vec3::X } else { Vec3::Y };
    let e1 = dir.cross(&trial).normalized().unwrap_or(Vec3::Y);
    [e1, dir.cross(&e1)]
}

/// Moves a barycentric point off irregular corners of `element`.
fn guard_corners(mesh: &ControlMesh, element: usize, bary: [f64; 3], guard: f64, step: f64) -> ([f64; 3], bool) {
    let corners = mesh.triangles()[element];
    for k in 0..3 {
        if mesh.valence(corners[k] as usize) != 6 && bary[k] > 1.0 - guard {
            let mut b = bary;
            let target = 1.0 - step;
            let excess = b[k] - target;
            b[k] = target;
            let rest = b[(k + 1) % 3] + b[(k + 2) % 3];
            if rest > 0.0 {
                b[(k + 1) % 3] += excess * b[(k + 1) % 3] / rest;
                b[(k + 2) % 3] += excess * b[(k + 2) % 3] / rest;
            } else {
                b[(k + 1) % 3] += 0.5 * excess;
                b[(k + 2) % 3] += 0.5 * excess;
            }
            return (b, true);
        }
    }
    (bary, false)
}

fn clamp_into(b: [f64; 3]) -> [f64; 3] {
    let c = b.map(|x| x.max(0.0));
    let s = c[0] + c[1] + c[2];
    c.map(|x| x / s)
}

/// Newton iteration for the limit point of `element` along `dir`. Returns
/// the final coordinates (possibly outside the element) and the residual.
///
/// Without `clamp`, regular patches are iterated on their polynomial
/// extension so that the root is found before deciding which element owns
/// it; iterates farther out than that, or leaving an irregular patch, stop
/// early.
fn newton(mesh: &ControlMesh, xref: &[f64], element: usize, dir: Vec3, start: [f64; 3], clamp: bool) -> Result<([f64; 3], f64)> {
    let frame = tangent_frame(dir);
    let patch = mesh.patch(element);
    let margin = if clamp || !patch.is_regular() { 0.0 } else { NEWTON_MARGIN };
    let mut b = if start.iter().all(|&x| x >= -EDGE_SLACK) { start } else { clamp_into(start) };
    let mut res = f64::INFINITY;
    for _ in 0..MAX_NEWTON {
        b = guard_corners(mesh, element, b, 1e-12, 1e-12).0;
        let basis = if margin > 0.0 { patch_basis_extended(patch, b[1], b[2], margin)? } else { patch_basis(patch, b[1], b[2])? };
        let r = position_jets(mesh, element, &basis, xref);
        let p = Vec3::new(r[0].value(), r[1].value(), r[2].value());
        let pa = [0, 1].map(|a| Vec3::new(r[0].d1(a), r[1].d1(a), r[2].d1(a)));
        let den = dir.dot(&p);
        if !(den > 0.0) {
            return Err(Error::Locate { theta: [0.0; 2], residual: f64::INFINITY });
        }
        let f = [frame[0].dot(&p) / den, frame[1].dot(&p) / den];
        res = f[0].hypot(f[1]);
        if res < LOCATE_TOL {
            break;
        }
        let mut jac = [[0.0; 2]; 2];
        for i in 0..2 {
            for a in 0..2 {
                jac[i][a] = (frame[i].dot(&pa[a]) * den - frame[i].dot(&p) * dir.dot(&pa[a])) / (den * den);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !(det.abs() > 1e-300) {
            break;
        }
        let dv = -(jac[1][1] * f[0] - jac[0][1] * f[1]) / det;
        let dw = -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det;
        let next = [b[0] - dv - dw, b[1] + dv, b[2] + dw];
        if !clamp && next.iter().any(|&x| x < -EDGE_TOL - margin) {
            return Ok((next, res));
        }
        b = if clamp && next.iter().any(|&x| x < -EDGE_SLACK) { clamp_into(next) } else { next };
    }
    Ok((b, res))
}

/// Barycentric coordinates in `to` of the point of `from` nearest to `b`,
/// for triangles sharing an edge.
fn carry_across(mesh: &ControlMesh, from: usize, to: usize, b: [f64; 3]) -> [f64; 3] {
    let b = clamp_into(b);
    let src = mesh.triangles()[from];
    let dst = mesh.triangles()[to];
    let mut out = [0.0; 3];
    for (k, v) in dst.iter().enumerate() {
        if let Some(j) = src.iter().position(|s| s == v) {
            out[k] = b[j];
        }
    }
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.map(|x| x / s)
    } else {
        [1.0 / 3.0; 3]
    }
}

/// Locates the reference limit-surface point in direction `chart.direction(θ)`.
///
/// The search walks the control net from `hint`, then runs Newton on the
/// element charts, crossing to neighbors when the iterate leaves an element.
/// Points on shared edges or corners are reported in the lowest-indexed
/// element containing them.
pub fn locate_point(
    mesh: &ControlMesh,
    xref: &[f64],
    chart: &SphericalChart,
    theta: [f64; 2],
    hint: Option<usize>,
) -> Result<LocateResult> {
    if !(theta[0].is_finite() && theta[1].is_finite()) {
        return Err(Error::NonFinite("rod coordinates"));
    }
    let dir = chart.direction(theta);
    let mut t = walk(mesh, xref, dir, hint.unwrap_or(0));
    let mut start = gnomonic(mesh, xref, t, dir).unwrap_or([1.0 / 3.0; 3]);
    let mut visited: Vec<usize> = Vec::new();
    let fail = |residual| Error::Locate { theta, residual };
    let (mut bary, mut res);
    loop {
        let clamp = visited.contains(&t) || visited.len() > 8;
        visited.push(t);
        let (b, r) = newton(mesh, xref, t, dir, start, clamp).map_err(|_| fail(f64::INFINITY))?;
        res = r;
        if b.iter().all(|&x| x >= -EDGE_TOL) || clamp {
            bary = b;
            break;
        }
        let next = mesh.neighbors(t)[argmin(&b)] as usize;
        start = if res < 1e-10 { carry_across(mesh, t, next, b) } else { gnomonic(mesh, xref, next, dir).unwrap_or([1.0 / 3.0; 3]) };
        t = next;
    }
    if !(res < 1e-10) {
        return Err(fail(res));
    }
    // Canonical owner for points on element boundaries.
    let zeros: Vec<usize> = (0..3).filter(|&k| bary[k] < EDGE_TOL).collect();
    if !zeros.is_empty() {
        let corners = mesh.triangles()[t];
        let candidates: Vec<usize> = if zeros.len() == 1 {
            Vec::from([mesh.neighbors(t)[zeros[0]] as usize])
        } else {
            let k = (0..3).find(|k| !zeros.contains(k)).unwrap_or(0);
            mesh.vertex_triangles(corners[k] as usize).iter().map(|&x| x as usize).collect()
        };
        let mut cands: Vec<usize> = candidates.into_iter().filter(|&c| c < t).collect();
        cands.sort_unstable();
        for c in cands {
            let s = gnomonic(mesh, xref, c, dir).unwrap_or([1.0 / 3.0; 3]);
            if let Ok((b, r)) = newton(mesh, xref, c, dir, s, true) {
                if r < 1e-10 && b.iter().all(|&x| x >= -EDGE_TOL) {
                    t = c;
                    bary = b;
                    res = r;
                    break;
                }
            }
        }
    }
    Ok(LocateResult { element: t, bary: clamp_into(bary), converged: true, residual: res })
}

/// Surface data pulled back to the rod chart together with the shape jets
/// of the owning patch, which carry perturbations of control points into
/// the same chart.
#[derive(Clone, Debug)]
pub struct Pullback {
    pub jet: PullbackJet,
    pub element: usize,
    pub bary: [f64; 3],
    /// Shape-function jets in `θ`, aligned with the patch's control points.
    pub shape: Vec<Jet>,
    /// Set when the point was moved off an irregular corner.
    pub nudged: bool,
}

/// Evaluates the limit surface of control positions `x` at a located point
/// and re-expands everything in the spherical chart.
pub fn pullback_jet(
    mesh: &ControlMesh,
    xref: &[f64],
    x: &[f64],
    chart: &SphericalChart,
    located: &LocateResult,
    order: usize,
) -> Result<Pullback> {
    let (bary, nudged) = guard_corners(mesh, located.element, located.bary, CORNER_GUARD, CORNER_NUDGE);
    let element = located.element;
    let basis = patch_basis(mesh.patch(element), bary[1], bary[2])?;
    let reference = position_jets(mesh, element, &basis, xref);
    let forward = chart.angle_jets(&reference);
    let delta = invert_map(&forward).ok_or(Error::DegenerateGeometry { sqrt_g: 0.0 })?;
    let powers = ChartPowers::new(&delta);
    let shape: Vec<Jet> = basis.iter().map(|b| powers.compose(b)).collect();
    let mut f = [Jet::ZERO; 3];
    for (s, &p) in shape.iter().zip(mesh.patch(element).points.iter()) {
        let k = 3 * p as usize;
        for c in 0..3 {
            f[c] += *s * x[k + c];
        }
    }
    let jet = PullbackJet::from_position_jets(&f, order)?;
    Ok(Pullback { jet, element, bary, shape, nudged })
}

/// A rod with its material and its chart on the reference surface, plus a
/// per-quadrature-point cache of located elements.
#[derive(Debug)]
pub struct RodCoupling {
    pub reference: RodReference,
    pub material: RodMaterial,
    pub chart: SphericalChart,
    hints: Vec<AtomicU32>,
}

impl Clone for RodCoupling {
    fn clone(&self) -> Self {
        RodCoupling {
            reference: self.reference.clone(),
            material: self.material,
            chart: self.chart,
            hints: self.hints.iter().map(|h| AtomicU32::new(h.load(Ordering::Relaxed))).collect(),
        }
    }
}

/// Everything known about the rod at one quadrature point.
#[derive(Clone, Debug)]
pub struct RodPoint {
    pub element: usize,
    /// Arclength in the reference configuration.
    pub s: f64,
    /// Quadrature weight times element length.
    pub weight: f64,
    pub theta: ThetaSample,
    pub pullback: Pullback,
}

impl RodCoupling {
    pub fn new(reference: RodReference, material: RodMaterial, chart: SphericalChart) -> RodCoupling {
        let n = reference.num_elements() * ROD_GAUSS.len();
        RodCoupling { reference, material, chart, hints: (0..n).map(|_| AtomicU32::new(0)).collect() }
    }

    pub fn num_points(&self) -> usize {
        self.hints.len()
    }

    /// Locates and pulls back the surface at every rod quadrature point.
    pub fn points(&self, mesh: &ControlMesh, xref: &[f64], x: &[f64], dofs: &[f64], order: usize) -> Result<Vec<RodPoint>> {
        if dofs.len() != self.reference.num_dofs() {
            return Err(Error::Dimension { expected: self.reference.num_dofs(), got: dofs.len() });
        }
        if dofs.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("rod degrees of freedom"));
        }
        let h = self.reference.element_length();
        let mut out = Vec::with_capacity(self.num_points());
        for e in 0..self.reference.num_elements() {
            for (q, &(s, w)) in ROD_GAUSS.iter().enumerate() {
                let k = e * ROD_GAUSS.len() + q;
                let theta = element_theta(&self.reference, dofs, e, s);
                if !(theta.theta[0] > 0.0 && theta.theta[0] < core::f64::consts::PI) {
                    return Err(Error::Domain("rod reached a pole of its chart"));
                }
                let hint = self.hints[k].load(Ordering::Relaxed) as usize;
                let located = locate_point(mesh, xref, &self.chart, theta.theta, Some(hint))?;
                self.hints[k].store(located.element as u32, Ordering::Relaxed);
                let pullback = pullback_jet(mesh, xref, x, &self.chart, &located, order)?;
                out.push(RodPoint { element: e, s: (e as f64 + s) * h, weight: w * h, theta, pullback });
            }
        }
        Ok(out)
    }

    pub fn energy(&self, mesh: &ControlMesh, xref: &[f64], x: &[f64], dofs: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for p in self.points(mesh, xref, x, dofs, 2)? {
            let st = rod_strains(&p.pullback.jet, p.theta.d1, p.theta.d2, &self.reference)?;
            total += energy_density(&st, &self.material) * p.weight;
        }
        Ok(total)
    }

    /// Rod energy with its gradient accumulated into `grad_x` (surface
    /// control positions) and `grad_rod` (rod DOFs).
    pub fn energy_gradient(
        &self,
        mesh: &ControlMesh,
        xref: &[f64],
        x: &[f64],
        dofs: &[f64],
        grad_x: &mut [f64],
        grad_rod: &mut [f64],
    ) -> Result<f64> {
        let mut total = 0.0;
        let h = self.reference.element_length();
        for p in self.points(mesh, xref, x, dofs, 3)? {
            let (st, var) = strain_variations(&p.pullback.jet, p.theta.d1, p.theta.d2, &self.reference)?;
            total += energy_density(&st, &self.material) * p.weight;
            let mut form = energy_density_variation(&st, &var, &self.material);
            for c in form.iter_mut() {
                *c *= p.weight;
            }
            assemble_coupled_gradient(mesh, &self.reference, &form, &p, h, grad_x, grad_rod);
        }
        Ok(total)
    }

    /// Positions, directors and strains at every quadrature point.
    pub fn samples(&self, mesh: &ControlMesh, xref: &[f64], x: &[f64], dofs: &[f64]) -> Result<Vec<RodSample>> {
        self.points(mesh, xref, x, dofs, 2)?
            .into_iter()
            .map(|p| {
                let jet = &p.pullback.jet;
                Ok(RodSample {
                    s: p.s,
                    weight: p.weight,
                    theta: p.theta.theta,
                    position: jet.position,
                    directors: directors(jet, p.theta.d1)?,
                    strains: rod_strains(jet, p.theta.d1, p.theta.d2, &self.reference)?,
                })
            })
            .collect()
    }

    /// Same as [`RodCoupling::samples`] at arbitrary arclengths.
    pub fn samples_at(&self, mesh: &ControlMesh, xref: &[f64], x: &[f64], dofs: &[f64], s: &[f64]) -> Result<Vec<RodSample>> {
        s.iter()
            .map(|&s| {
                let th = crate::rod::interpolate_theta(&self.reference, dofs, s)?;
                let located = locate_point(mesh, xref, &self.chart, th.theta, None)?;
                let pb = pullback_jet(mesh, xref, x, &self.chart, &located, 2)?;
                Ok(RodSample {
                    s,
                    weight: 0.0,
                    theta: th.theta,
                    position: pb.jet.position,
                    directors: directors(&pb.jet, th.d1)?,
                    strains: rod_strains(&pb.jet, th.d1, th.d2, &self.reference)?,
                })
            })
            .collect()
    }
}

/// Rod state at one point.
#[derive(Clone, Copy, Debug)]
pub struct RodSample {
    pub s: f64,
    pub weight: f64,
    pub theta: [f64; 2],
    pub position: Vec3,
    /// `d₁`, `d₂`, `d₃`.
    pub directors: [Vec3; 3],
    pub strains: RodStrains,
}

/// Expands a linear form at one rod point over the patch control points
/// (the `η` slots) and the rod element's Hermite DOFs (the `ξ` slots).
pub fn assemble_coupled_gradient(
    mesh: &ControlMesh,
    reference: &RodReference,
    form: &crate::rod::Form,
    point: &RodPoint,
    h: f64,
    grad_x: &mut [f64],
    grad_rod: &mut [f64],
) {
    let patch = mesh.patch(point.pullback.element);
    for (n, &v) in point.pullback.shape.iter().zip(patch.points.iter()) {
        let base = 3 * v as usize;
        for k in 0..3 {
            let mut g = form[slot_eta(k)] * n.value();
            for a in 0..2 {
                g += form[slot_eta_d1(a, k)] * n.d1(a);
                for b in a..2 {
                    g += form[slot_eta_d2(a, b, k)] * n.d2(a, b);
                }
            }
            grad_x[base + k] += g;
        }
    }
    let s_local = point.s / h - point.element as f64;
    let basis = hermite_basis(s_local, h);
    let ids = reference.element_dofs(point.element);
    for a in 0..2 {
        for j in 0..4 {
            grad_rod[ids[a][j]] +=
                form[slot_xi(0, a)] * basis[0][j] + form[slot_xi(1, a)] * basis[1][j] + form[slot_xi(2, a)] * basis[2][j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::evaluate_jet;
    use core::f64::consts::PI;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    fn limit_point(mesh: &ControlMesh, xref: &[f64], t: usize, b: [f64; 3]) -> Vec3 {
        evaluate_jet(mesh, xref, t, b, 1).unwrap().position
    }

    #[test]
    fn locate_round_trips_element_centers() {
        let mesh = ControlMesh::icosphere(2).unwrap();
        let xref = mesh.flat_positions();
        let chart = SphericalChart::default();
        for t in (0..mesh.num_triangles()).step_by(7) {
            let p = limit_point(&mesh, &xref, t, [1.0 / 3.0; 3]);
            let loc = locate_point(&mesh, &xref, &chart, chart.angles(p), None).unwrap();
            assert_eq!(loc.element, t);
            for b in loc.bary {
                assert!((b - 1.0 / 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn locate_on_shared_edge_prefers_lower_index() {
        let mesh = ControlMesh::icosphere(2).unwrap();
        let xref = mesh.flat_positions();
        let chart = SphericalChart::with_pole(Vec3::new(0.3, -0.2, 0.9));
        for t in [5usize, 77, 200, 311] {
            let p = limit_point(&mesh, &xref, t, [0.4, 0.6, 0.0]);
            let other = mesh.neighbors(t)[2] as usize;
            let loc = locate_point(&mesh, &xref, &chart, chart.angles(p), Some(other)).unwrap();
            assert_eq!(loc.element, t.min(other));
            assert!(loc.bary.iter().any(|b| b.abs() < 1e-10));
        }
    }

    #[test]
    fn locate_sweep_residual() {
        let mesh = ControlMesh::icosphere(3).unwrap();
        let xref = mesh.flat_positions();
        let chart = SphericalChart::with_pole(Vec3::new(1.0, 2.0, 0.5));
        let mut seed = 7u64;
        let mut hint = None;
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let th = [0.01 + (PI - 0.02) * lcg(&mut seed), 2.0 * PI * lcg(&mut seed) - PI];
            let loc = locate_point(&mesh, &xref, &chart, th, hint).unwrap();
            hint = Some(loc.element);
            let p = limit_point(&mesh, &xref, loc.element, loc.bary);
            let dir = chart.direction(th);
            worst = worst.max(p.normalized().unwrap().cross(&dir).norm());
        }
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn locate_near_shared_edges() {
        // rays grazing control edges, where Newton overshoots into the
        // neighbor from both sides
        let mesh = ControlMesh::icosphere(4).unwrap();
        let xref = mesh.flat_positions();
        let chart = SphericalChart::default();
        let mut seed = 11u64;
        let mut hint = 0;
        for t in 0..mesh.num_triangles() {
            let tri = mesh.triangles()[t];
            let p: [Vec3; 3] = tri.map(|v| mesh.vertices()[v as usize]);
            for _ in 0..20 {
                let a = lcg(&mut seed);
                let eps = 2e-2 * (lcg(&mut seed) - 0.5);
                let q = p[0] * (a - 0.5 * eps) + p[1] * (1.0 - a - 0.5 * eps) + p[2] * eps;
                let th = chart.angles(q);
                let loc = locate_point(&mesh, &xref, &chart, th, Some(hint)).unwrap();
                hint = loc.element;
                let x = limit_point(&mesh, &xref, loc.element, loc.bary);
                assert!(x.normalized().unwrap().cross(&chart.direction(th)).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn locate_is_deterministic() {
        let mesh = ControlMesh::icosphere(2).unwrap();
        let xref = mesh.flat_positions();
        let chart = SphericalChart::default();
        let a = locate_point(&mesh, &xref, &chart, [1.0, 2.0], Some(3)).unwrap();
        let b = locate_point(&mesh, &xref, &chart, [1.0, 2.0], Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pullback_of_reference_is_radial() {
        let mesh = ControlMesh::icosphere(3).unwrap();
        let xref = mesh.flat_positions();
        let chart = SphericalChart::with_pole(Vec3::new(0.1, 0.2, 1.0));
        let th = [1.2, 0.7];
        let loc = locate_point(&mesh, &xref, &chart, th, None).unwrap();
        let pb = pullback_jet(&mesh, &xref, &xref, &chart, &loc, 3).unwrap();
        let dir = chart.direction(th);
        assert!(pb.jet.position.normalized().unwrap().cross(&dir).norm() < 1e-10);
        // Tangents of the radial map are orthogonal to the sphere chart
        // tangents' complement: f,α stays close to the analytic sphere.
        let d = [0, 1].map(|a| {
            let mut tp = th;
            tp[a] += 1e-6;
            let mut tm = th;
            tm[a] -= 1e-6;
            let eval = |t: [f64; 2]| {
                let l = locate_point(&mesh, &xref, &chart, t, Some(loc.element)).unwrap();
                pullback_jet(&mesh, &xref, &xref, &chart, &l, 2).unwrap().jet.position
            };
            (eval(tp) - eval(tm)) * (1.0 / 2e-6)
        });
        for a in 0..2 {
            assert!((d[a] - pb.jet.tangents[a]).norm() < 1e-6 * pb.jet.tangents[a].norm());
        }
    }

    #[test]
    fn pullback_agrees_across_shared_edge() {
        let mesh = ControlMesh::icosphere(2).unwrap();
        let xref = mesh.flat_positions();
        let mut x = xref.clone();
        let mut seed = 3u64;
        for v in x.iter_mut() {
            *v += 0.05 * (lcg(&mut seed) - 0.5);
        }
        let chart = SphericalChart::default();
        for t in [4usize, 50, 123] {
            let p = limit_point(&mesh, &xref, t, [0.3, 0.7, 0.0]);
            let th = chart.angles(p);
            let other = mesh.neighbors(t)[2] as usize;
            let l1 = locate_point(&mesh, &xref, &chart, th, Some(t)).unwrap();
            // Express the same point in the other element explicitly.
            let s = gnomonic(&mesh, &xref, other, chart.direction(th)).unwrap();
            let (b2, _) = newton(&mesh, &xref, other, chart.direction(th), s, true).unwrap();
            let l2 = LocateResult { element: other, bary: clamp_into(b2), converged: true, residual: 0.0 };
            let a = pullback_jet(&mesh, &xref, &x, &chart, &l1, 2).unwrap().jet;
            let b = pullback_jet(&mesh, &xref, &x, &chart, &l2, 2).unwrap().jet;
            assert!((a.position - b.position).norm() < 1e-8);
            for k in 0..2 {
                assert!((a.tangents[k] - b.tangents[k]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn chart_transfer_round_trip() {
        let a = SphericalChart::with_pole(Vec3::new(0.2, 0.1, 1.0));
        let b = SphericalChart::with_pole(Vec3::new(-0.5, 0.8, 0.3));
        let th = [1.1, 0.4];
        let sl = [0.3, -0.9];
        let (t2, s2) = a.transfer(&b, th, sl);
        assert!((a.direction(th) - b.direction(t2)).norm() < 1e-14);
        let (t3, s3) = b.transfer(&a, t2, s2);
        for k in 0..2 {
            assert!((t3[k] - th[k]).abs() < 1e-12 && (s3[k] - sl[k]).abs() < 1e-12);
        }
    }

    fn ring_setup(level: u32) -> (ControlMesh, Vec<f64>, Vec<f64>, RodCoupling, Vec<f64>) {
        let mesh = ControlMesh::icosphere(level).unwrap();
        let xref = mesh.flat_positions();
        let mut seed = 11u64;
        let x: Vec<f64> = xref.iter().map(|v| v * 1.02 + 0.04 * (lcg(&mut seed) - 0.5)).collect();
        let reference = RodReference::circular(1.6 * PI, 9).unwrap();
        let material = RodMaterial { stretch: 30.0, bend: 1.5 };
        let chart = SphericalChart::with_pole(Vec3::new(0.1, -0.2, 1.0));
        let coupling = RodCoupling::new(reference, material, chart);
        let h = coupling.reference.element_length();
        let mut dofs = Vec::new();
        for k in 0..9 {
            let s = h * k as f64;
            let wob = 0.15 * (3.0 * s).sin();
            dofs.extend_from_slice(&[1.2 + wob, 0.45 * (3.0 * s).cos(), 1.25 * s + 0.1 * (2.0 * s).sin(), 1.25 + 0.2 * (2.0 * s).cos()]);
        }
        (mesh, xref, x, coupling, dofs)
    }

    #[test]
    fn coupled_gradient_matches_finite_differences() {
        let (mesh, xref, x, coupling, dofs) = ring_setup(2);
        let mut gx = alloc::vec![0.0; x.len()];
        let mut gr = alloc::vec![0.0; dofs.len()];
        coupling.energy_gradient(&mesh, &xref, &x, &dofs, &mut gx, &mut gr).unwrap();
        let scale = gx.iter().chain(gr.iter()).fold(0.0f64, |m, g| m.max(g.abs()));
        let h = 1e-6;
        let mut seed = 5u64;
        for _ in 0..40 {
            let i = (lcg(&mut seed) * x.len() as f64) as usize;
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (coupling.energy(&mesh, &xref, &xp, &dofs).unwrap() - coupling.energy(&mesh, &xref, &xm, &dofs).unwrap()) / (2.0 * h);
            assert!((fd - gx[i]).abs() < 1e-6 * scale, "x[{i}]: {fd} vs {}", gx[i]);
        }
        for i in 0..dofs.len() {
            let mut dp = dofs.clone();
            dp[i] += h;
            let mut dm = dofs.clone();
            dm[i] -= h;
            let fd = (coupling.energy(&mesh, &xref, &x, &dp).unwrap() - coupling.energy(&mesh, &xref, &x, &dm).unwrap()) / (2.0 * h);
            assert!((fd - gr[i]).abs() < 1e-6 * scale, "rod[{i}]: {fd} vs {}", gr[i]);
        }
    }

    #[test]
    fn surface_vertices_away_from_rod_get_no_rod_gradient() {
        let (mesh, xref, x, coupling, dofs) = ring_setup(2);
        let mut gx = alloc::vec![0.0; x.len()];
        let mut gr = alloc::vec![0.0; dofs.len()];
        coupling.energy_gradient(&mesh, &xref, &x, &dofs, &mut gx, &mut gr).unwrap();
        let pts = coupling.points(&mesh, &xref, &x, &dofs, 2).unwrap();
        let mut support = alloc::vec![false; mesh.num_vertices()];
        for p in &pts {
            for &v in &mesh.patch(p.pullback.element).points {
                support[v as usize] = true;
            }
        }
        let mut outside = 0;
        for v in 0..mesh.num_vertices() {
            if !support[v] {
                outside += 1;
                assert!(gx[3 * v..3 * v + 3].iter().all(|&g| g == 0.0));
            }
        }
        assert!(outside > 0);
    }

    #[test]
    fn xi_variation_vanishes_on_stress_free_sphere() {
        // Circle of radius L/2π on a sphere of that radius: zero energy, zero
        // rod gradient.
        let mesh = ControlMesh::icosphere(3).unwrap();
        let xref = mesh.flat_positions();
        let len = PI;
        let reference = RodReference::circular(len, 12).unwrap();
        let coupling = RodCoupling::new(reference, RodMaterial { stretch: 10.0, bend: 1.0 }, SphericalChart::default());
        let h = coupling.reference.element_length();
        let dofs: Vec<f64> = (0..12).flat_map(|k| [PI / 2.0, 0.0, 2.0 * PI * h * k as f64 / len, 2.0 * PI / len]).collect();
        let pts = coupling.points(&mesh, &xref, &xref, &dofs, 3).unwrap();
        // Replace the surface with the exact sphere at each point.
        let mut gr = alloc::vec![0.0; dofs.len()];
        let mut gx = alloc::vec![0.0; xref.len()];
        for mut p in pts {
            p.pullback.jet = crate::rod::sphere_pullback(len / (2.0 * PI), p.theta.theta).unwrap();
            let (st, var) = strain_variations(&p.pullback.jet, p.theta.d1, p.theta.d2, &coupling.reference).unwrap();
            let form = energy_density_variation(&st, &var, &coupling.material);
            assemble_coupled_gradient(&mesh, &coupling.reference, &form, &p, h, &mut gx, &mut gr);
        }
        assert!(gr.iter().all(|g| g.abs() < 1e-10));
    }
}
