//! Membrane energies, constraint integrals and their first variations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::surface::{SurfaceJet, SurfaceQuadrature};
use crate::vec3::{Sym2, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MembraneParams {
    /// Bending stiffness.
    pub c: f64,
    /// Gaussian stiffness (reported only).
    pub c_g: f64,
    /// Preferred mean curvature.
    pub c0: f64,
    /// Osmotic pressure.
    pub p: f64,
}

impl Default for MembraneParams {
    fn default() -> Self {
        MembraneParams { c: 1.0, c_g: 0.0, c0: 0.0, p: 0.0 }
    }
}

/// Integrated membrane quantities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MembraneTerms {
    pub helfrich: f64,
    /// `c_g ∫K da`, a topological constant on closed surfaces.
    pub gaussian: f64,
    pub volume: f64,
    pub area: f64,
    pub harmonic: f64,
    /// `∫ R J dA`, reference positions weighted by the area ratio.
    pub mass: Vec3,
}

/// Gradients of the membrane integrals with respect to the flattened control
/// positions.
#[derive(Clone, Debug, Default)]
pub struct MembraneGradients {
    /// Helfrich energy minus pressure times volume.
    pub bending: Vec<f64>,
    pub harmonic: Vec<f64>,
    pub area: Vec<f64>,
    pub mass: [Vec<f64>; 3],
}

impl MembraneGradients {
    pub fn zeros(n: usize) -> Self {
        MembraneGradients {
            bending: vec![0.0; n],
            harmonic: vec![0.0; n],
            area: vec![0.0; n],
            mass: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    fn reset(&mut self, n: usize) {
        for v in [&mut self.bending, &mut self.harmonic, &mut self.area]
            .into_iter()
            .chain(self.mass.iter_mut())
        {
            v.clear();
            v.resize(n, 0.0);
        }
    }
}

/// Coefficients of a pointwise first variation: the integrand changes by
/// `f·η + a[α]·η,α + aa[k]·η,k` with `k` running over `11, 12, 22` (the mixed
/// coefficient already counts both orderings).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointVariation {
    pub value: f64,
    pub f: Vec3,
    pub a: [Vec3; 2],
    pub aa: [Vec3; 3],
}

impl PointVariation {
    /// Applies the variation to a perturbation field given by its value and
    /// chart derivatives.
    pub fn apply(&self, eta: Vec3, eta_a: [Vec3; 2], eta_aa: [Vec3; 3]) -> f64 {
        self.f.dot(&eta)
            + self.a[0].dot(&eta_a[0])
            + self.a[1].dot(&eta_a[1])
            + self.aa[0].dot(&eta_aa[0])
            + self.aa[1].dot(&eta_aa[1])
            + self.aa[2].dot(&eta_aa[2])
    }
}

fn mat_con(g_con: &Sym2, m: &Sym2) -> Sym2 {
    // g^{-1} m g^{-1}
    let g = [[g_con.0[0], g_con.0[1]], [g_con.0[1], g_con.0[2]]];
    let mm = [[m.0[0], m.0[1]], [m.0[1], m.0[2]]];
    let mut t = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            t[i][j] = g[i][0] * mm[0][j] + g[i][1] * mm[1][j];
        }
    }
    let e = |i: usize, j: usize| t[i][0] * g[0][j] + t[i][1] * g[1][j];
    Sym2([e(0, 0), e(0, 1), e(1, 1)])
}

/// `Σ_γ M^{αγ} a_γ` for a symmetric `M`.
fn raise(m: &Sym2, a: &[Vec3; 2]) -> [Vec3; 2] {
    [a[0] * m.0[0] + a[1] * m.0[1], a[0] * m.0[1] + a[1] * m.0[2]]
}

/// Helfrich integrand `c (H - C₀)² √g` per unit chart area and its variation.
pub fn helfrich_variation(jet: &SurfaceJet, params: &MembraneParams) -> PointVariation {
    let j = jet.sqrt_g;
    let dh = jet.mean_curvature - params.c0;
    let a_con = jet.a_con();
    let gi = &jet.g_con;
    let b_con = mat_con(gi, &jet.b_cov);
    let lap = jet.a2[0] * gi.0[0] + jet.a2[1] * (2.0 * gi.0[1]) + jet.a2[2] * gi.0[2];
    let bent = raise(&b_con, &jet.a);
    let n = jet.normal;
    let mut a = [Vec3::ZERO; 2];
    for k in 0..2 {
        let dh_da = -bent[k] - n * (0.5 * lap.dot(&a_con[k]));
        a[k] = dh_da * (2.0 * params.c * dh * j) + a_con[k] * (params.c * dh * dh * j);
    }
    let s = params.c * dh * j;
    PointVariation {
        value: params.c * dh * dh * j,
        f: Vec3::ZERO,
        a,
        aa: [n * (s * gi.0[0]), n * (2.0 * s * gi.0[1]), n * (s * gi.0[2])],
    }
}

/// Volume integrand `⅓ f·n √g` and its variation.
pub fn volume_variation(jet: &SurfaceJet) -> PointVariation {
    let f = jet.position;
    let [a1, a2] = jet.a;
    let third = 1.0 / 3.0;
    let cross = a1.cross(&a2);
    PointVariation {
        value: third * f.dot(&cross),
        f: cross * third,
        a: [a2.cross(&f) * third, f.cross(&a1) * third],
        aa: [Vec3::ZERO; 3],
    }
}

/// Harmonic-map integrand `½ g^{αβ} h_{αβ} √g` and its variation.
pub fn harmonic_variation(jet: &SurfaceJet, h_cov: &Sym2) -> PointVariation {
    let j = jet.sqrt_g;
    let trace = jet.g_con.contract(h_cov);
    let k_con = mat_con(&jet.g_con, h_cov);
    let kk = raise(&k_con, &jet.a);
    let a_con = jet.a_con();
    PointVariation {
        value: 0.5 * trace * j,
        f: Vec3::ZERO,
        a: [
            (a_con[0] * (0.5 * trace) - kk[0]) * j,
            (a_con[1] * (0.5 * trace) - kk[1]) * j,
        ],
        aa: [Vec3::ZERO; 3],
    }
}

/// Evaluates every membrane integral over the quadrature, optionally
/// accumulating their gradients.
pub fn membrane_terms(
    quad: &SurfaceQuadrature,
    x: &[f64],
    params: &MembraneParams,
    mut grads: Option<&mut MembraneGradients>,
) -> Result<MembraneTerms> {
    if let Some(g) = grads.as_deref_mut() {
        g.reset(x.len());
    }
    let mut t = MembraneTerms::default();
    // Volume is measured from the control centroid, which makes its
    // quadrature exactly translation invariant.
    let nv = x.len() / 3;
    let mut center = Vec3::ZERO;
    for c in x.chunks_exact(3) {
        center += Vec3::new(c[0], c[1], c[2]);
    }
    center *= 1.0 / nv.max(1) as f64;
    let mut flux = Vec3::ZERO;
    for q in 0..quad.len() {
        let jet = quad.jet(q, x)?;
        let w = quad.weight[q];
        let j = jet.sqrt_g;
        let dh = jet.mean_curvature - params.c0;
        let h = &quad.reference[q].h_cov;
        let r = quad.reference_position[q];

        t.helfrich += params.c * dh * dh * j * w;
        t.gaussian += params.c_g * jet.gaussian_curvature * j * w;
        t.volume += (jet.position - center).dot(&jet.normal) * j * w / 3.0;
        t.area += j * w;
        t.harmonic += 0.5 * jet.g_con.contract(h) * j * w;
        t.mass += r * (j * w);

        let Some(g) = grads.as_deref_mut() else { continue };
        let helf = helfrich_variation(&jet, params);
        let vol = volume_variation(&SurfaceJet { position: jet.position - center, ..jet });
        flux += jet.normal * (j * w);
        let hm = harmonic_variation(&jet, h);
        let a_con = jet.a_con();
        let area = [a_con[0] * j, a_con[1] * j];
        let p = params.p;
        let bend_f = vol.f * (-p);
        let bend_a = [helf.a[0] - vol.a[0] * p, helf.a[1] - vol.a[1] * p];
        let (ids, shape) = quad.point(q);
        for (&id, s) in ids.iter().zip(shape) {
            let k = 3 * id as usize;
            let bend = (bend_f * s[0]
                + bend_a[0] * s[1]
                + bend_a[1] * s[2]
                + helf.aa[0] * s[3]
                + helf.aa[1] * s[4]
                + helf.aa[2] * s[5])
                * w;
            let harm = (hm.a[0] * s[1] + hm.a[1] * s[2]) * w;
            let ar = (area[0] * s[1] + area[1] * s[2]) * w;
            for c in 0..3 {
                g.bending[k + c] += bend[c];
                g.harmonic[k + c] += harm[c];
                g.area[k + c] += ar[c];
                for m in 0..3 {
                    g.mass[m][k + c] += r[m] * ar[c];
                }
            }
        }
    }
    if let Some(g) = grads.as_mut() {
        let shift = flux * (params.p / (3.0 * nv as f64));
        for c in g.bending.chunks_exact_mut(3) {
            c[0] += shift[0];
            c[1] += shift[1];
            c[2] += shift[2];
        }
    }
    if !(t.helfrich.is_finite() && t.volume.is_finite() && t.harmonic.is_finite()) {
        return Err(Error::NonFinite("membrane energy"));
    }
    Ok(t)
}

pub fn helfrich_energy(quad: &SurfaceQuadrature, x: &[f64], params: &MembraneParams) -> Result<f64> {
    Ok(membrane_terms(quad, x, params, None)?.helfrich)
}

pub fn enclosed_volume(quad: &SurfaceQuadrature, x: &[f64]) -> Result<f64> {
    Ok(membrane_terms(quad, x, &MembraneParams::default(), None)?.volume)
}

pub fn surface_area(quad: &SurfaceQuadrature, x: &[f64]) -> Result<f64> {
    Ok(membrane_terms(quad, x, &MembraneParams::default(), None)?.area)
}

pub fn harmonic_map_energy(quad: &SurfaceQuadrature, x: &[f64]) -> Result<f64> {
    Ok(membrane_terms(quad, x, &MembraneParams::default(), None)?.harmonic)
}

pub fn zero_mass_residual(quad: &SurfaceQuadrature, x: &[f64]) -> Result<Vec3> {
    Ok(membrane_terms(quad, x, &MembraneParams::default(), None)?.mass)
}

/// Gradient of `E_Helf - p V`.
pub fn membrane_weak_form(quad: &SurfaceQuadrature, x: &[f64], params: &MembraneParams) -> Result<Vec<f64>> {
    let mut g = MembraneGradients::zeros(x.len());
    membrane_terms(quad, x, params, Some(&mut g))?;
    Ok(g.bending)
}

/// Gradient of the harmonic-map energy.
pub fn harmonic_weak_form(quad: &SurfaceQuadrature, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = MembraneGradients::zeros(x.len());
    membrane_terms(quad, x, &MembraneParams::default(), Some(&mut g))?;
    Ok(g.harmonic)
}
