//! Inextensible-frame Cosserat rod living on a surface.
//!
//! The rod center line is `r(S) = f(θ(S))` where `θ = (θ¹, θ²)` are
//! spherical Lagrangian coordinates interpolated with Hermite cubics. The
//! director triad is anchored to the surface: `d₁ = n`, `d₃ = r′/ν₃` and
//! `d₂ = d₃ × d₁`.

use crate::error::{Error, Result};
use crate::jet::{jet3_cross, jet3_d1, jet3_d2, jet3_d3, jet3_diff, jet3_dot, jet3_scale, jet3_value, Jet, Jet3};
use crate::vec3::Vec3;
#[allow(unused_imports)]
use num_traits::Float;

/// Stretch at or below this value is rejected.
pub const NU3_TOL: f64 = 1e-8;

/// Gauss–Legendre points and weights on `[0, 1]`.
pub const ROD_GAUSS: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Reference length, frame rates and discretization of a rod.
#[derive(Clone, Debug, PartialEq)]
pub struct RodReference {
    pub length: f64,
    /// Antisymmetric frame rates `α_ij` of the stress-free state.
    pub alpha: [[f64; 3]; 3],
    pub n_nodes: usize,
    /// Periodic rod: the last element joins the last node to the first.
    pub closed: bool,
    /// Turns of `θ²` over one period of a closed rod.
    pub winding: i32,
}

impl RodReference {
    pub fn new(length: f64, alpha: [[f64; 3]; 3], n_nodes: usize, closed: bool) -> Result<RodReference> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Domain("rod length must be positive"));
        }
        let min_nodes = if closed { 3 } else { 2 };
        if n_nodes < min_nodes {
            return Err(Error::Domain("too few rod nodes"));
        }
        for i in 0..3 {
            for j in 0..3 {
                if !alpha[i][j].is_finite() || (alpha[i][j] + alpha[j][i]).abs() > 1e-12 {
                    return Err(Error::Domain("frame rates must be finite and antisymmetric"));
                }
            }
        }
        Ok(RodReference { length, alpha, n_nodes, closed, winding: i32::from(closed) })
    }

    /// Stress-free state is a straight rod.
    pub fn straight(length: f64, n_nodes: usize) -> Result<RodReference> {
        RodReference::new(length, [[0.0; 3]; 3], n_nodes, false)
    }

    /// Closed rod whose stress-free state is a circle of radius `L/2π`
    /// bending about `d₂` (`α₁₃ = -α₃₁ = 2π/L`).
    pub fn circular(length: f64, n_nodes: usize) -> Result<RodReference> {
        let k = 2.0 * core::f64::consts::PI / length;
        let mut alpha = [[0.0; 3]; 3];
        alpha[0][2] = k;
        alpha[2][0] = -k;
        RodReference::new(length, alpha, n_nodes, true)
    }

    /// Builds the antisymmetric matrix from `(α₁₂, α₁₃, α₂₃)`.
    pub fn alpha_from(upper: [f64; 3]) -> [[f64; 3]; 3] {
        let [a12, a13, a23] = upper;
        [[0.0, a12, a13], [-a12, 0.0, a23], [-a13, -a23, 0.0]]
    }

    pub fn num_elements(&self) -> usize {
        if self.closed {
            self.n_nodes
        } else {
            self.n_nodes - 1
        }
    }

    pub fn element_length(&self) -> f64 {
        self.length / self.num_elements() as f64
    }

    pub fn num_dofs(&self) -> usize {
        4 * self.n_nodes
    }

    /// Node indices of element `e` and the `θ²` offset added to the second.
    pub fn element_nodes(&self, e: usize) -> (usize, usize, f64) {
        if self.closed && e + 1 == self.n_nodes {
            (e, 0, 2.0 * core::f64::consts::PI * self.winding as f64)
        } else {
            (e, e + 1, 0.0)
        }
    }

    /// Global DOF indices touched by element `e`, ordered as the Hermite
    /// basis for each coordinate: `[θ^α(a), θ^α′(a), θ^α(b), θ^α′(b)]`.
    pub fn element_dofs(&self, e: usize) -> [[usize; 4]; 2] {
        let (a, b, _) = self.element_nodes(e);
        let d = |n: usize, c: usize, k: usize| 4 * n + 2 * c + k;
        [
            [d(a, 0, 0), d(a, 0, 1), d(b, 0, 0), d(b, 0, 1)],
            [d(a, 1, 0), d(a, 1, 1), d(b, 1, 0), d(b, 1, 1)],
        ]
    }
}

/// Stretching modulus `D` and bending/twisting modulus `E`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodMaterial {
    pub stretch: f64,
    pub bend: f64,
}

/// Cubic Hermite shape functions on an element of length `h` at local
/// coordinate `s ∈ [0, 1]`. Rows are values, first and second derivatives
/// with respect to arclength; columns follow `[value₀, slope₀, value₁,
/// slope₁]`, with slopes measured per unit arclength.
pub fn hermite_basis(s: f64, h: f64) -> [[f64; 4]; 3] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        [1.0 - 3.0 * s2 + 2.0 * s3, h * (s - 2.0 * s2 + s3), 3.0 * s2 - 2.0 * s3, h * (s3 - s2)],
        [
            (-6.0 * s + 6.0 * s2) / h,
            1.0 - 4.0 * s + 3.0 * s2,
            (6.0 * s - 6.0 * s2) / h,
            3.0 * s2 - 2.0 * s,
        ],
        [
            (-6.0 + 12.0 * s) / (h * h),
            (-4.0 + 6.0 * s) / h,
            (6.0 - 12.0 * s) / (h * h),
            (6.0 * s - 2.0) / h,
        ],
    ]
}

/// Lagrangian coordinates and their first two arclength derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThetaSample {
    pub theta: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

/// Interpolates element `e` at local coordinate `s`.
pub fn element_theta(reference: &RodReference, dofs: &[f64], e: usize, s: f64) -> ThetaSample {
    let basis = hermite_basis(s, reference.element_length());
    let (_, _, offset) = reference.element_nodes(e);
    let ids = reference.element_dofs(e);
    let mut out = ThetaSample { theta: [0.0; 2], d1: [0.0; 2], d2: [0.0; 2] };
    for c in 0..2 {
        let mut v = [dofs[ids[c][0]], dofs[ids[c][1]], dofs[ids[c][2]], dofs[ids[c][3]]];
        if c == 1 {
            v[2] += offset;
        }
        let dot = |row: &[f64; 4]| row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        out.theta[c] = dot(&basis[0]);
        out.d1[c] = dot(&basis[1]);
        out.d2[c] = dot(&basis[2]);
    }
    out
}

/// Interpolates the rod at arclength `s ∈ [0, L]`.
pub fn interpolate_theta(reference: &RodReference, dofs: &[f64], s: f64) -> Result<ThetaSample> {
    if dofs.len() != reference.num_dofs() {
        return Err(Error::Dimension { expected: reference.num_dofs(), got: dofs.len() });
    }
    if !(0.0..=reference.length).contains(&s) {
        return Err(Error::Domain("arclength outside [0, L]"));
    }
    let h = reference.element_length();
    let e = ((s / h) as usize).min(reference.num_elements() - 1);
    Ok(element_theta(reference, dofs, e, (s - e as f64 * h) / h))
}

#[inline]
fn sym(a: usize, b: usize) -> usize {
    a + b
}

/// Surface quantities pulled back to the rod's spherical chart at one point:
/// `f̂`, its derivatives in `θ`, the normal and its derivatives, and the dual
/// tangents `a^μ` with their first derivatives.
#[derive(Clone, Copy, Debug)]
pub struct PullbackJet {
    pub position: Vec3,
    pub tangents: [Vec3; 2],
    /// `f̂,11`, `f̂,12`, `f̂,22`.
    pub hessian: [Vec3; 3],
    /// `f̂,111`, `f̂,112`, `f̂,122`, `f̂,222`; zero when `order < 3`.
    pub third: [Vec3; 4],
    pub normal: Vec3,
    pub normal_grad: [Vec3; 2],
    /// Zero when `order < 3`.
    pub normal_hessian: [Vec3; 3],
    pub dual: [Vec3; 2],
    /// `dual_grad[μ][α] = a^μ,α`.
    pub dual_grad: [[Vec3; 2]; 2],
    pub order: usize,
}

impl PullbackJet {
    /// Builds the pull-back from position jets in the spherical chart. With
    /// `order = 3` the jets must be accurate to third order.
    pub fn from_position_jets(f: &Jet3, order: usize) -> Result<PullbackJet> {
        let a = [jet3_diff(f, 0), jet3_diff(f, 1)];
        let cross = jet3_cross(&a[0], &a[1]);
        let gg = jet3_dot(&cross, &cross);
        if !(gg.value() > 1e-28) {
            return Err(Error::DegenerateGeometry { sqrt_g: gg.value().max(0.0).sqrt() });
        }
        let n = jet3_scale(&cross, &gg.sqrt().recip());
        let g11 = jet3_dot(&a[0], &a[0]);
        let g12 = jet3_dot(&a[0], &a[1]);
        let g22 = jet3_dot(&a[1], &a[1]);
        let inv_det = (g11 * g22 - g12 * g12).recip();
        let c11 = g22 * inv_det;
        let c12 = -(g12 * inv_det);
        let c22 = g11 * inv_det;
        let add = |x: Jet3, y: Jet3| [x[0] + y[0], x[1] + y[1], x[2] + y[2]];
        let dual = [
            add(jet3_scale(&a[0], &c11), jet3_scale(&a[1], &c12)),
            add(jet3_scale(&a[0], &c12), jet3_scale(&a[1], &c22)),
        ];
        let full = order >= 3;
        let third = if full {
            [jet3_d3(f, 0, 0, 0), jet3_d3(f, 0, 0, 1), jet3_d3(f, 0, 1, 1), jet3_d3(f, 1, 1, 1)]
        } else {
            [Vec3::ZERO; 4]
        };
        let normal_hessian = if full {
            [jet3_d2(&n, 0, 0), jet3_d2(&n, 0, 1), jet3_d2(&n, 1, 1)]
        } else {
            [Vec3::ZERO; 3]
        };
        Ok(PullbackJet {
            position: jet3_value(f),
            tangents: [jet3_d1(f, 0), jet3_d1(f, 1)],
            hessian: [jet3_d2(f, 0, 0), jet3_d2(f, 0, 1), jet3_d2(f, 1, 1)],
            third,
            normal: jet3_value(&n),
            normal_grad: [jet3_d1(&n, 0), jet3_d1(&n, 1)],
            normal_hessian,
            dual: [jet3_value(&dual[0]), jet3_value(&dual[1])],
            dual_grad: [
                [jet3_d1(&dual[0], 0), jet3_d1(&dual[0], 1)],
                [jet3_d1(&dual[1], 0), jet3_d1(&dual[1], 1)],
            ],
            order,
        })
    }

    /// `f̂,αβ`.
    pub fn hess(&self, a: usize, b: usize) -> Vec3 {
        self.hessian[sym(a, b)]
    }

    /// `f̂,αβγ`.
    pub fn third(&self, a: usize, b: usize, c: usize) -> Vec3 {
        self.third[a + b + c]
    }

    /// `n̂,αβ`.
    pub fn normal_hess(&self, a: usize, b: usize) -> Vec3 {
        self.normal_hessian[sym(a, b)]
    }
}

/// Exact pull-back of a sphere of the given radius centered at the origin,
/// `f(θ) = ρ (sin θ¹ cos θ², sin θ¹ sin θ², cos θ¹)`.
pub fn sphere_pullback(radius: f64, theta: [f64; 2]) -> Result<PullbackJet> {
    let t1 = Jet::variable(theta[0], 0);
    let t2 = Jet::variable(theta[1], 1);
    let s1 = t1.sin();
    let f = [s1 * t2.cos() * radius, s1 * t2.sin() * radius, t1.cos() * radius];
    PullbackJet::from_position_jets(&f, 3)
}

/// Stretch, bending and twist strains.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RodStrains {
    pub nu3: f64,
    /// `κ₁`, `κ₂`, `κ₃`.
    pub kappa: [f64; 3],
}

/// Kinematic quantities shared by strains and their variations.
struct Kinematics {
    r2: Vec3,
    nu3: f64,
    d2: Vec3,
    d3: Vec3,
    /// `dn̂/dS`.
    m: Vec3,
}

fn kinematics(pb: &PullbackJet, td1: [f64; 2], td2: [f64; 2]) -> Result<Kinematics> {
    let r1 = pb.tangents[0] * td1[0] + pb.tangents[1] * td1[1];
    let mut r2 = pb.tangents[0] * td2[0] + pb.tangents[1] * td2[1];
    for a in 0..2 {
        for b in 0..2 {
            r2 += pb.hess(a, b) * (td1[a] * td1[b]);
        }
    }
    let nu3 = r1.norm();
    if !(nu3 > NU3_TOL) {
        return Err(Error::DegenerateStretch { nu3 });
    }
    let d3 = r1 * (1.0 / nu3);
    let d2 = d3.cross(&pb.normal);
    let m = pb.normal_grad[0] * td1[0] + pb.normal_grad[1] * td1[1];
    Ok(Kinematics { r2, nu3, d2, d3, m })
}

/// Strains at a point with `θ′ = td1` and `θ″ = td2`.
pub fn rod_strains(pb: &PullbackJet, td1: [f64; 2], td2: [f64; 2], reference: &RodReference) -> Result<RodStrains> {
    let k = kinematics(pb, td1, td2)?;
    let al = &reference.alpha;
    Ok(RodStrains {
        nu3: k.nu3,
        kappa: [
            -k.r2.dot(&k.d2) / k.nu3 + al[2][1],
            k.r2.dot(&pb.normal) / k.nu3 - al[2][0],
            k.m.dot(&k.d2) - al[0][1],
        ],
    })
}

/// The director triad `(d₁, d₂, d₃)`.
pub fn directors(pb: &PullbackJet, td1: [f64; 2]) -> Result<[Vec3; 3]> {
    let k = kinematics(pb, td1, [0.0; 2])?;
    Ok([pb.normal, k.d2, k.d3])
}

/// Energy per unit reference length.
pub fn energy_density(strains: &RodStrains, material: &RodMaterial) -> f64 {
    let [k1, k2, k3] = strains.kappa;
    0.5 * material.stretch * (strains.nu3 - 1.0).powi(2) + 0.5 * material.bend * (k1 * k1 + k2 * k2 + k3 * k3)
}

/// Integrates the rod energy with three Gauss points per element; `pullback`
/// supplies the surface data at `(element, point, θ)`.
pub fn rod_energy<F>(reference: &RodReference, material: &RodMaterial, dofs: &[f64], mut pullback: F) -> Result<f64>
where
    F: FnMut(usize, usize, [f64; 2]) -> Result<PullbackJet>,
{
    if dofs.len() != reference.num_dofs() {
        return Err(Error::Dimension { expected: reference.num_dofs(), got: dofs.len() });
    }
    let h = reference.element_length();
    let mut total = 0.0;
    for e in 0..reference.num_elements() {
        for (q, &(s, w)) in ROD_GAUSS.iter().enumerate() {
            let th = element_theta(reference, dofs, e, s);
            let pb = pullback(e, q, th.theta)?;
            let strains = rod_strains(&pb, th.d1, th.d2, reference)?;
            total += energy_density(&strains, material) * w * h;
        }
    }
    Ok(total)
}

/// Number of slots in a linear form over the perturbation data at a point.
pub const SLOTS: usize = 24;

/// Slot of `η` component `k`.
pub const fn slot_eta(k: usize) -> usize {
    k
}

/// Slot of `η̂,α` component `k`.
pub const fn slot_eta_d1(a: usize, k: usize) -> usize {
    3 + 3 * a + k
}

/// Slot of `η̂,αβ` component `k` (`11`, `12`, `22` stored once each).
pub const fn slot_eta_d2(a: usize, b: usize, k: usize) -> usize {
    9 + 3 * (a + b) + k
}

/// Slot of `ξ^α` and its first two arclength derivatives (`order` 0, 1, 2).
pub const fn slot_xi(order: usize, a: usize) -> usize {
    18 + 2 * order + a
}

/// Vector-valued linear form.
pub type VecForm = [Vec3; SLOTS];
/// Scalar linear form.
pub type Form = [f64; SLOTS];

fn dot_form(f: &VecForm, v: &Vec3) -> Form {
    let mut out = [0.0; SLOTS];
    for (o, c) in out.iter_mut().zip(f.iter()) {
        *o = c.dot(v);
    }
    out
}

fn cross_form(f: &VecForm, v: &Vec3) -> VecForm {
    let mut out = [Vec3::ZERO; SLOTS];
    for (o, c) in out.iter_mut().zip(f.iter()) {
        *o = c.cross(v);
    }
    out
}

fn axpy_form(out: &mut Form, s: f64, f: &Form) {
    for (o, c) in out.iter_mut().zip(f.iter()) {
        *o += s * c;
    }
}

fn add_eta_outer(form: &mut VecForm, slot: impl Fn(usize) -> usize, v: Vec3, e: Vec3) {
    // Contribution `v (e·η)` for the slot family given by `slot`.
    for k in 0..3 {
        form[slot(k)] += v * e[k];
    }
}

/// Linear forms of the strain variations. Applied to the slot values
/// `[η̂, η̂,α, η̂,αβ, ξ^α, ξ^α′, ξ^α″]` they give `δν₃` and `δκ_i`.
#[derive(Clone, Copy, Debug)]
pub struct StrainVariations {
    pub nu3: Form,
    pub kappa: [Form; 3],
}

/// Strains and their first variations.
pub fn strain_variations(
    pb: &PullbackJet,
    td1: [f64; 2],
    td2: [f64; 2],
    reference: &RodReference,
) -> Result<(RodStrains, StrainVariations)> {
    if pb.order < 3 {
        return Err(Error::Domain("strain variations need a third-order pull-back"));
    }
    let strains = rod_strains(pb, td1, td2, reference)?;
    let k = kinematics(pb, td1, td2)?;
    let n = pb.normal;
    let mut dr1 = [Vec3::ZERO; SLOTS];
    let mut dr2 = [Vec3::ZERO; SLOTS];
    let mut dn = [Vec3::ZERO; SLOTS];
    let mut dm = [Vec3::ZERO; SLOTS];
    for a in 0..2 {
        for c in 0..3 {
            dr1[slot_eta_d1(a, c)][c] += td1[a];
            dr2[slot_eta_d1(a, c)][c] += td2[a];
            for b in 0..2 {
                dr2[slot_eta_d2(a, b, c)][c] += td1[a] * td1[b];
            }
        }
        let mut xi_r1 = Vec3::ZERO;
        let mut xi_r2 = Vec3::ZERO;
        let mut xi1_r2 = Vec3::ZERO;
        let mut xi_m = Vec3::ZERO;
        for b in 0..2 {
            xi_r1 += pb.hess(a, b) * td1[b];
            xi_r2 += pb.hess(a, b) * td2[b];
            xi1_r2 += pb.hess(a, b) * (2.0 * td1[b]);
            xi_m += pb.normal_hess(a, b) * td1[b];
            for c in 0..2 {
                xi_r2 += pb.third(a, b, c) * (td1[b] * td1[c]);
            }
        }
        dr1[slot_xi(0, a)] = xi_r1;
        dr1[slot_xi(1, a)] = pb.tangents[a];
        dr2[slot_xi(0, a)] = xi_r2;
        dr2[slot_xi(1, a)] = xi1_r2;
        dr2[slot_xi(2, a)] = pb.tangents[a];
        dn[slot_xi(0, a)] = pb.normal_grad[a];
        dm[slot_xi(0, a)] = xi_m;
        dm[slot_xi(1, a)] = pb.normal_grad[a];

        // δn = -a^μ (n·η,μ); its arclength derivative.
        let mu = a;
        add_eta_outer(&mut dn, |c| slot_eta_d1(mu, c), -pb.dual[mu], n);
        for al in 0..2 {
            let t = td1[al];
            add_eta_outer(&mut dm, |c| slot_eta_d1(mu, c), -pb.dual_grad[mu][al] * t, n);
            add_eta_outer(&mut dm, |c| slot_eta_d1(mu, c), -pb.dual[mu] * t, pb.normal_grad[al]);
            add_eta_outer(&mut dm, |c| slot_eta_d2(mu, al, c), -pb.dual[mu] * t, n);
        }
    }

    let nu3 = k.nu3;
    let dnu3 = dot_form(&dr1, &k.d3);
    // δd₃ = (δr′ − d₃ δν₃) / ν₃
    let mut dd3 = [Vec3::ZERO; SLOTS];
    for s in 0..SLOTS {
        dd3[s] = (dr1[s] - k.d3 * dnu3[s]) * (1.0 / nu3);
    }
    // δd₂ = δd₃ × n + d₃ × δn
    let mut dd2 = cross_form(&dd3, &n);
    let d3_dn = cross_form(&dn, &k.d3);
    for s in 0..SLOTS {
        dd2[s] -= d3_dn[s];
    }

    let r2n = k.r2.dot(&n);
    let r2d2 = k.r2.dot(&k.d2);
    let mut dk2 = dot_form(&dr2, &n);
    axpy_form(&mut dk2, 1.0, &dot_form(&dn, &k.r2));
    for v in dk2.iter_mut() {
        *v /= nu3;
    }
    axpy_form(&mut dk2, -r2n / (nu3 * nu3), &dnu3);

    let mut dk1 = dot_form(&dr2, &k.d2);
    axpy_form(&mut dk1, 1.0, &dot_form(&dd2, &k.r2));
    for v in dk1.iter_mut() {
        *v /= -nu3;
    }
    axpy_form(&mut dk1, r2d2 / (nu3 * nu3), &dnu3);

    let mut dk3 = dot_form(&dm, &k.d2);
    axpy_form(&mut dk3, 1.0, &dot_form(&dd2, &k.m));

    Ok((strains, StrainVariations { nu3: dnu3, kappa: [dk1, dk2, dk3] }))
}

/// Linear form of the energy density variation.
pub fn energy_density_variation(strains: &RodStrains, var: &StrainVariations, material: &RodMaterial) -> Form {
    let mut out = [0.0; SLOTS];
    axpy_form(&mut out, material.stretch * (strains.nu3 - 1.0), &var.nu3);
    for i in 0..3 {
        axpy_form(&mut out, material.bend * strains.kappa[i], &var.kappa[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::jet3_value;
    use core::f64::consts::PI;

    fn equator_dofs(reference: &RodReference, theta1: f64, rate: f64) -> alloc::vec::Vec<f64> {
        let h = reference.element_length();
        let mut d = alloc::vec::Vec::new();
        for k in 0..reference.n_nodes {
            d.extend_from_slice(&[theta1, 0.0, rate * h * k as f64, rate]);
        }
        d
    }

    #[test]
    fn hermite_interpolates_nodes_and_cubics() {
        let h = 0.7;
        let b = hermite_basis(0.0, h);
        assert_eq!(b[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(b[1], [0.0, 1.0, 0.0, 0.0]);
        let b = hermite_basis(1.0, h);
        assert!((b[0][2] - 1.0).abs() < 1e-15 && b[0][0].abs() < 1e-15);
        // S³ on [0, h]
        let data = [0.0, 0.0, h * h * h, 3.0 * h * h];
        let m = hermite_basis(0.5, h);
        let at = |row: &[f64; 4]| row.iter().zip(&data).map(|(a, b)| a * b).sum::<f64>();
        let s = 0.5 * h;
        assert!((at(&m[0]) - s * s * s).abs() < 1e-14);
        assert!((at(&m[1]) - 3.0 * s * s).abs() < 1e-14);
        assert!((at(&m[2]) - 6.0 * s).abs() < 1e-13);
        // constant data
        let c = [2.5, 0.0, 2.5, 0.0];
        for s in [0.1, 0.4, 0.9] {
            let m = hermite_basis(s, h);
            let v: f64 = m[0].iter().zip(&c).map(|(a, b)| a * b).sum();
            let d: f64 = m[1].iter().zip(&c).map(|(a, b)| a * b).sum();
            assert!((v - 2.5).abs() < 1e-14 && d.abs() < 1e-13);
        }
    }

    #[test]
    fn equator_interpolation_is_linear_and_wraps() {
        let r = RodReference::circular(PI, 8).unwrap();
        let rate = 2.0 * PI / r.length;
        let d = equator_dofs(&r, PI / 2.0, rate);
        for i in 0..=40 {
            let s = r.length * i as f64 / 40.0;
            let t = interpolate_theta(&r, &d, s).unwrap();
            assert!((t.theta[1] - rate * s).abs() < 1e-12);
            assert!(t.d2[0].abs() < 1e-12 && t.d2[1].abs() < 1e-12);
        }
        assert!(interpolate_theta(&r, &d, r.length * 1.01).is_err());
    }

    #[test]
    fn interpolant_is_c1_at_nodes() {
        let r = RodReference::straight(2.0, 6).unwrap();
        let mut x = 0.3_f64;
        let d: alloc::vec::Vec<f64> = (0..r.num_dofs())
            .map(|_| {
                x = (x * 7.31 + 0.17).fract();
                x
            })
            .collect();
        for e in 0..r.num_elements() - 1 {
            let left = element_theta(&r, &d, e, 1.0);
            let right = element_theta(&r, &d, e + 1, 0.0);
            for c in 0..2 {
                assert!((left.theta[c] - right.theta[c]).abs() < 1e-12);
                assert!((left.d1[c] - right.d1[c]).abs() < 1e-12);
                assert!((left.theta[c] - d[4 * (e + 1) + 2 * c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_pullback_matches_identity() {
        let th = [0.9, -2.1];
        let pb = sphere_pullback(1.0, th).unwrap();
        assert!((pb.position - pb.normal).norm() < 1e-14);
        assert!((pb.tangents[0] - Vec3::new(th[0].cos() * th[1].cos(), th[0].cos() * th[1].sin(), -th[0].sin())).norm() < 1e-14);
        // dual tangents are orthonormal to the tangents
        for m in 0..2 {
            for a in 0..2 {
                let want = if m == a { 1.0 } else { 0.0 };
                assert!((pb.dual[m].dot(&pb.tangents[a]) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn great_circle_strains() {
        let r = RodReference::straight(2.0 * PI, 5).unwrap();
        for s in [0.0, 0.3, 1.7] {
            let pb = sphere_pullback(1.0, [PI / 2.0, s]).unwrap();
            let st = rod_strains(&pb, [0.0, 1.0], [0.0, 0.0], &r).unwrap();
            assert!((st.nu3 - 1.0).abs() < 1e-12);
            assert!(st.kappa[0].abs() < 1e-12);
            assert!((st.kappa[1] + 1.0).abs() < 1e-12);
            assert!(st.kappa[2].abs() < 1e-12);
        }
        let c = RodReference::circular(2.0 * PI, 5).unwrap();
        let pb = sphere_pullback(1.0, [PI / 2.0, 0.4]).unwrap();
        let st = rod_strains(&pb, [0.0, 1.0], [0.0, 0.0], &c).unwrap();
        assert!(st.kappa.iter().all(|k| k.abs() < 1e-12));
    }

    #[test]
    fn latitude_circle_strains() {
        let t1 = PI / 3.0;
        let r = RodReference::straight(1.0, 3).unwrap();
        let pb = sphere_pullback(1.0, [t1, 0.8]).unwrap();
        let st = rod_strains(&pb, [0.0, 1.0 / t1.sin()], [0.0; 2], &r).unwrap();
        assert!((st.nu3 - 1.0).abs() < 1e-12);
        // geodesic curvature cot θ¹, normal curvature -1, no twist
        assert!((st.kappa[0] - 1.0 / t1.tan()).abs() < 1e-12);
        assert!((st.kappa[1] + 1.0).abs() < 1e-12);
        assert!(st.kappa[2].abs() < 1e-12);
    }

    #[test]
    fn degenerate_stretch_is_rejected() {
        let r = RodReference::straight(1.0, 3).unwrap();
        let pb = sphere_pullback(1.0, [1.0, 0.0]).unwrap();
        assert!(matches!(rod_strains(&pb, [0.0, 1e-10], [0.0; 2], &r), Err(Error::DegenerateStretch { .. })));
    }

    #[test]
    fn energy_values() {
        // Great circle, straight reference: E/2 κ₂² L.
        let r = RodReference::straight(2.0 * PI, 9).unwrap();
        let d = equator_dofs(&r, PI / 2.0, 1.0);
        let mat = RodMaterial { stretch: 7.0, bend: 2.0 };
        let e = rod_energy(&r, &mat, &d, |_, _, th| sphere_pullback(1.0, th)).unwrap();
        assert!((e - 2.0 * PI).abs() < 1e-10);

        // Uniform stretch 1.1 on a great circle with matching circular frame.
        let r = RodReference::circular(PI, 7).unwrap();
        let radius = 1.1 * r.length / (2.0 * PI);
        let d = equator_dofs(&r, PI / 2.0, 2.0 * PI / r.length);
        let mat = RodMaterial { stretch: 100.0, bend: 0.0 };
        let e = rod_energy(&r, &mat, &d, |_, _, th| sphere_pullback(radius, th)).unwrap();
        assert!((e - 0.5 * PI).abs() < 1e-10);
    }

    #[test]
    fn circular_reference_state_has_zero_energy() {
        for (len, nodes) in [(PI, 31), (2.6 * PI, 12), (2.0 * PI, 5)] {
            let r = RodReference::circular(len, nodes).unwrap();
            let radius = len / (2.0 * PI);
            let d = equator_dofs(&r, PI / 2.0, 2.0 * PI / len);
            let mat = RodMaterial { stretch: 100.0, bend: 3.0 };
            let e = rod_energy(&r, &mat, &d, |_, _, th| sphere_pullback(radius, th)).unwrap();
            assert!(e.abs() < 1e-10, "{e}");
        }
    }

    #[test]
    fn refinement_preserves_energy_of_exact_data() {
        let mat = RodMaterial { stretch: 10.0, bend: 1.0 };
        let t1 = 1.1;
        let rate = 1.0 / t1.sin();
        let mut energies = [0.0; 2];
        for (i, n) in [5, 9].into_iter().enumerate() {
            let r = RodReference::straight(2.0, n).unwrap();
            let d = equator_dofs(&r, t1, rate * 1.05);
            energies[i] = rod_energy(&r, &mat, &d, |_, _, th| sphere_pullback(1.0, th)).unwrap();
        }
        assert!((energies[0] - energies[1]).abs() < 1e-8 * energies[0]);
    }

    #[test]
    fn director_triad_is_orthonormal_and_unsheared() {
        let pb = sphere_pullback(1.3, [1.2, 0.4]).unwrap();
        let td1 = [0.3, -0.8];
        let [d1, d2, d3] = directors(&pb, td1).unwrap();
        let r1 = pb.tangents[0] * td1[0] + pb.tangents[1] * td1[1];
        for (a, b) in [(d1, d2), (d1, d3), (d2, d3)] {
            assert!(a.dot(&b).abs() < 1e-12);
        }
        for d in [d1, d2, d3] {
            assert!((d.norm() - 1.0).abs() < 1e-12);
        }
        assert!((d1.dot(&d2.cross(&d3)) - 1.0).abs() < 1e-12);
        assert!(r1.dot(&d1).abs() < 1e-12 && r1.dot(&d2).abs() < 1e-12);
    }

    // Finite-difference oracle for the variation forms. The surface is an
    // analytic bumpy ellipsoid plus ε η(θ), the rod path θ(S) + ε ξ(S).

    fn surface(theta: [f64; 2], eps: f64, eta_coef: f64) -> Jet3 {
        let t1 = Jet::variable(theta[0], 0);
        let t2 = Jet::variable(theta[1], 1);
        let (s1, c1, s2, c2) = (t1.sin(), t1.cos(), t2.sin(), t2.cos());
        let bump = Jet::constant(1.0) + (t1 * t2).sin() * 0.1;
        let base = [s1 * c2 * 1.2 * bump, s1 * s2 * 0.9, c1 * bump];
        let eta = perturbation(t1, t2, eta_coef);
        [base[0] + eta[0] * eps, base[1] + eta[1] * eps, base[2] + eta[2] * eps]
    }

    fn perturbation(t1: Jet, t2: Jet, coef: f64) -> Jet3 {
        [
            (t1 * 2.0 + t2).cos() * coef + t2 * t2 * 0.3,
            (t1 * t2).sin() * 0.7 - t1 * t1 * t1 * 0.2 * coef,
            t1.cos() * t2.sin() * coef + Jet::constant(0.4),
        ]
    }

    fn path(s: f64, eps: f64) -> ThetaSample {
        // θ(S) + ε ξ(S), with derivatives.
        let th = [1.1 + 0.3 * s + 0.2 * s * s, 0.4 + 0.9 * s - 0.1 * s * s * s];
        let d1 = [0.3 + 0.4 * s, 0.9 - 0.3 * s * s];
        let d2 = [0.4, -0.6 * s];
        let xi = [(2.0 * s).sin(), 0.5 * s * s - 0.2];
        let xi1 = [2.0 * (2.0 * s).cos(), s];
        let xi2 = [-4.0 * (2.0 * s).sin(), 1.0];
        ThetaSample {
            theta: [th[0] + eps * xi[0], th[1] + eps * xi[1]],
            d1: [d1[0] + eps * xi1[0], d1[1] + eps * xi1[1]],
            d2: [d2[0] + eps * xi2[0], d2[1] + eps * xi2[1]],
        }
    }

    fn slot_values(s: f64, theta: [f64; 2], eta_coef: f64, with_eta: bool, with_xi: bool) -> Form {
        let mut v = [0.0; SLOTS];
        if with_eta {
            let eta = perturbation(Jet::variable(theta[0], 0), Jet::variable(theta[1], 1), eta_coef);
            let val = jet3_value(&eta);
            for k in 0..3 {
                v[slot_eta(k)] = val[k];
                for a in 0..2 {
                    v[slot_eta_d1(a, k)] = jet3_d1(&eta, a)[k];
                    for b in a..2 {
                        v[slot_eta_d2(a, b, k)] = jet3_d2(&eta, a, b)[k];
                    }
                }
            }
        }
        if with_xi {
            let p0 = path(s, 0.0);
            let p1 = path(s, 1.0);
            for a in 0..2 {
                v[slot_xi(0, a)] = p1.theta[a] - p0.theta[a];
                v[slot_xi(1, a)] = p1.d1[a] - p0.d1[a];
                v[slot_xi(2, a)] = p1.d2[a] - p0.d2[a];
            }
        }
        v
    }

    fn strains_at(s: f64, eps_eta: f64, eps_xi: f64, coef: f64, r: &RodReference) -> RodStrains {
        let p = path(s, eps_xi);
        let pb = PullbackJet::from_position_jets(&surface(p.theta, eps_eta, coef), 3).unwrap();
        rod_strains(&pb, p.d1, p.d2, r).unwrap()
    }

    fn check_variations(with_eta: bool, with_xi: bool, coef: f64, s: f64) {
        let mut r = RodReference::straight(1.0, 3).unwrap();
        r.alpha = RodReference::alpha_from([0.3, -0.7, 0.2]);
        let p = path(s, 0.0);
        let pb = PullbackJet::from_position_jets(&surface(p.theta, 0.0, coef), 3).unwrap();
        let (st, var) = strain_variations(&pb, p.d1, p.d2, &r).unwrap();
        let slots = slot_values(s, p.theta, coef, with_eta, with_xi);
        let apply = |f: &Form| f.iter().zip(&slots).map(|(a, b)| a * b).sum::<f64>();
        let h = 1e-5;
        let (ee, ex) = (f64::from(u8::from(with_eta)), f64::from(u8::from(with_xi)));
        let plus = strains_at(s, h * ee, h * ex, coef, &r);
        let minus = strains_at(s, -h * ee, -h * ex, coef, &r);
        let fd_nu = (plus.nu3 - minus.nu3) / (2.0 * h);
        let scale = 1.0 + st.kappa.iter().fold(st.nu3.abs(), |m, k| m.max(k.abs()));
        assert!((apply(&var.nu3) - fd_nu).abs() < 1e-6 * scale, "nu3 {} vs {}", apply(&var.nu3), fd_nu);
        for i in 0..3 {
            let fd = (plus.kappa[i] - minus.kappa[i]) / (2.0 * h);
            let an = apply(&var.kappa[i]);
            assert!((an - fd).abs() < 1e-6 * scale.max(fd.abs()), "kappa{} {} vs {}", i + 1, an, fd);
        }
    }

    #[test]
    fn variations_match_finite_differences() {
        for (k, s) in [0.0, 0.35, 0.8, 1.3].into_iter().enumerate() {
            let coef = 0.5 + 0.3 * k as f64;
            check_variations(true, false, coef, s);
            check_variations(false, true, coef, s);
            check_variations(true, true, coef, s);
        }
    }

    #[test]
    fn translation_leaves_strains_unchanged() {
        let r = RodReference::straight(1.0, 3).unwrap();
        let p = path(0.4, 0.0);
        let pb = PullbackJet::from_position_jets(&surface(p.theta, 0.0, 1.0), 3).unwrap();
        let (_, var) = strain_variations(&pb, p.d1, p.d2, &r).unwrap();
        for k in 0..3 {
            for f in core::iter::once(&var.nu3).chain(var.kappa.iter()) {
                assert_eq!(f[slot_eta(k)], 0.0);
            }
        }
    }

    #[test]
    fn great_circle_xi_variation_of_bending() {
        let r = RodReference::straight(2.0 * PI, 5).unwrap();
        let pb = sphere_pullback(1.0, [PI / 2.0, 0.3]).unwrap();
        let (_, var) = strain_variations(&pb, [0.0, 1.0], [0.0; 2], &r).unwrap();
        // ξ¹ = ε cos(2S) around S = 0.3 tilts the rod off the equator.
        let s0 = 0.3;
        let xi = |s: f64| [(2.0 * s).cos(), -4.0 * (2.0 * s).sin(), -4.0 * (2.0 * s).cos()];
        let kappa2 = |eps: f64| {
            let [x, x1, x2] = xi(s0);
            let pb = sphere_pullback(1.0, [PI / 2.0 + eps * x, s0]).unwrap();
            rod_strains(&pb, [eps * x1, 1.0], [eps * x2, 0.0], &r).unwrap().kappa[1]
        };
        let h = 1e-5;
        let fd = (kappa2(h) - kappa2(-h)) / (2.0 * h);
        let [x, x1, x2] = xi(s0);
        let an = var.kappa[1][slot_xi(0, 0)] * x + var.kappa[1][slot_xi(1, 0)] * x1 + var.kappa[1][slot_xi(2, 0)] * x2;
        assert!((an - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{an} vs {fd}");
    }
}
