//! Truncated bivariate Taylor polynomials.
//!
//! A [`Jet`] holds the Taylor coefficients of a scalar function of two
//! variables about a fixed point, up to total degree three. Arithmetic on jets
//! propagates derivatives exactly, which is how the chain rules between the
//! element charts and the spherical rod chart are carried out.
//!
//! Coefficient `c[idx(i, j)]` multiplies `δ₁^i δ₂^j`; the derivative
//! `∂^{i+j} f / ∂x₁^i ∂x₂^j` is `i! j! c[idx(i, j)]`.

use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::vec3::Vec3;
#[allow(unused_imports)]
use num_traits::Float;

pub const JET_LEN: usize = 10;

/// Exponents `(i, j)` of each stored monomial.
pub const MONOMIALS: [(usize, usize); JET_LEN] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

#[inline]
pub const fn idx(i: usize, j: usize) -> usize {
    let n = i + j;
    n * (n + 1) / 2 + j
}

const fn product_table() -> [(u8, u8, u8); 35] {
    let mut out = [(0u8, 0u8, 0u8); 35];
    let mut n = 0;
    let mut a = 0;
    while a < JET_LEN {
        let mut b = 0;
        while b < JET_LEN {
            let (i1, j1) = MONOMIALS[a];
            let (i2, j2) = MONOMIALS[b];
            if i1 + j1 + i2 + j2 <= 3 {
                out[n] = (a as u8, b as u8, idx(i1 + i2, j1 + j2) as u8);
                n += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

static PRODUCTS: [(u8, u8, u8); 35] = product_table();

const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet(pub [f64; JET_LEN]);

impl Jet {
    pub const ZERO: Jet = Jet([0.0; JET_LEN]);

    pub fn constant(c: f64) -> Jet {
        let mut j = Jet::ZERO;
        j.0[0] = c;
        j
    }

    /// The coordinate function `x_k` about a point where it equals `value`.
    pub fn variable(value: f64, k: usize) -> Jet {
        let mut j = Jet::constant(value);
        j.0[1 + k] = 1.0;
        j
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// Partial derivative `∂^{i+j}/∂x₁^i ∂x₂^j` at the expansion point.
    #[inline]
    pub fn deriv(&self, i: usize, j: usize) -> f64 {
        self.0[idx(i, j)] * FACT[i] * FACT[j]
    }

    /// First derivative along coordinate `a`.
    #[inline]
    pub fn d1(&self, a: usize) -> f64 {
        self.0[1 + a]
    }

    /// Second derivative `∂²/∂x_a ∂x_b`.
    #[inline]
    pub fn d2(&self, a: usize, b: usize) -> f64 {
        match a + b {
            0 => 2.0 * self.0[3],
            1 => self.0[4],
            _ => 2.0 * self.0[5],
        }
    }

    /// Third derivative `∂³/∂x_a ∂x_b ∂x_c`.
    #[inline]
    pub fn d3(&self, a: usize, b: usize, c: usize) -> f64 {
        match a + b + c {
            0 => 6.0 * self.0[6],
            1 => 2.0 * self.0[7],
            2 => 2.0 * self.0[8],
            _ => 6.0 * self.0[9],
        }
    }

    /// Builds a jet from partial derivatives listed in monomial order
    /// (value, ∂₁, ∂₂, ∂₁₁, ∂₁₂, ∂₂₂, ∂₁₁₁, ∂₁₁₂, ∂₁₂₂, ∂₂₂₂).
    pub fn from_derivatives(d: [f64; JET_LEN]) -> Jet {
        let mut j = Jet::ZERO;
        for (k, &(a, b)) in MONOMIALS.iter().enumerate() {
            j.0[k] = d[k] / (FACT[a] * FACT[b]);
        }
        j
    }

    /// Scales the coefficients of total degree `n` by `s^n`, i.e. rewrites
    /// the jet for the chart `x' = x / s`.
    pub fn rescale(&self, s: f64) -> Jet {
        let mut out = *self;
        let s2 = s * s;
        let s3 = s2 * s;
        out.0[1] *= s;
        out.0[2] *= s;
        for c in &mut out.0[3..6] {
            *c *= s2;
        }
        for c in &mut out.0[6..10] {
            *c *= s3;
        }
        out
    }

    /// Partial derivative with respect to coordinate `k` as a jet. The
    /// degree-three coefficients of the result are unknown and set to zero.
    pub fn diff(&self, k: usize) -> Jet {
        let mut out = Jet::ZERO;
        for (m, &(i, j)) in MONOMIALS.iter().enumerate().take(6) {
            let (src, factor) = if k == 0 {
                (idx(i + 1, j), (i + 1) as f64)
            } else {
                (idx(i, j + 1), (j + 1) as f64)
            };
            out.0[m] = factor * self.0[src];
        }
        out
    }

    /// `g ∘ self` for a univariate `g` given its value and first three
    /// derivatives at `self.value()`.
    pub fn apply(&self, g: [f64; 4]) -> Jet {
        let mut d = *self;
        d.0[0] = 0.0;
        let d2 = d * d;
        let d3 = d2 * d;
        let mut out = d * g[1] + d2 * (0.5 * g[2]) + d3 * (g[3] / 6.0);
        out.0[0] = g[0];
        out
    }

    pub fn recip(&self) -> Jet {
        let x = self.value();
        let r = 1.0 / x;
        self.apply([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sqrt(&self) -> Jet {
        let x = self.value();
        let s = x.sqrt();
        self.apply([s, 0.5 / s, -0.25 / (s * x), 0.375 / (s * x * x)])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.apply([s, c, -s, -c])
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.apply([c, -s, -c, s])
    }

    /// Angle of the planar vector `(x, y)`, continuous near the expansion
    /// point and with value `atan2(y₀, x₀)` there.
    pub fn atan2(y: &Jet, x: &Jet) -> Jet {
        let (x0, y0) = (x.value(), y.value());
        let phi0 = y0.atan2(x0);
        // Angle between (x0, y0) and (x, y): atan(cross / dot).
        let cross = *y * x0 - *x * y0;
        let dot = *x * x0 + *y * y0;
        let t = cross * dot.recip();
        let mut out = t.apply([0.0, 1.0, 0.0, -2.0]);
        out.0[0] = phi0;
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        r += o;
        r
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, o: Jet) {
        for (a, b) in self.0.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        let mut r = self;
        for (a, b) in r.0.iter_mut().zip(o.0.iter()) {
            *a -= b;
        }
        r
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, s: f64) -> Jet {
        let mut r = self;
        for a in r.0.iter_mut() {
            *a *= s;
        }
        r
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let mut r = [0.0; JET_LEN];
        for &(a, b, c) in PRODUCTS.iter() {
            r[c as usize] += self.0[a as usize] * o.0[b as usize];
        }
        Jet(r)
    }
}

/// Monomials `δx₁^i δx₂^j` of a chart change, precomputed so that many jets
/// can be composed with the same map cheaply.
pub struct ChartPowers([Jet; JET_LEN]);

impl ChartPowers {
    /// `delta` holds the increments `x(y) − x(y₀)` as jets in the new chart
    /// (zero constant terms).
    pub fn new(delta: &[Jet; 2]) -> ChartPowers {
        let mut p = [Jet::ZERO; JET_LEN];
        p[0] = Jet::constant(1.0);
        p[1] = delta[0];
        p[2] = delta[1];
        p[3] = delta[0] * delta[0];
        p[4] = delta[0] * delta[1];
        p[5] = delta[1] * delta[1];
        p[6] = p[3] * delta[0];
        p[7] = p[3] * delta[1];
        p[8] = p[4] * delta[1];
        p[9] = p[5] * delta[1];
        ChartPowers(p)
    }

    /// Re-expands `f` (a jet in the old chart) in the new chart.
    pub fn compose(&self, f: &Jet) -> Jet {
        let mut out = Jet::ZERO;
        for (c, p) in f.0.iter().zip(self.0.iter()) {
            if *c != 0.0 {
                out += *p * *c;
            }
        }
        out
    }
}

/// Inverts a chart map. Given the forward map `y(x)` as two jets in `x`,
/// returns the increments `x(y) − x₀` as jets in `y`. `None` when the
/// Jacobian is singular.
pub fn invert_map(forward: &[Jet; 2]) -> Option<[Jet; 2]> {
    let j = [
        [forward[0].d1(0), forward[0].d1(1)],
        [forward[1].d1(0), forward[1].d1(1)],
    ];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return None;
    }
    let inv = [
        [j[1][1] / det, -j[0][1] / det],
        [-j[1][0] / det, j[0][0] / det],
    ];
    let mut nonlinear = *forward;
    for n in nonlinear.iter_mut() {
        n.0[0] = 0.0;
        n.0[1] = 0.0;
        n.0[2] = 0.0;
    }
    let dy = [Jet::variable(0.0, 0), Jet::variable(0.0, 1)];
    let apply_inv = |r: [Jet; 2]| -> [Jet; 2] {
        [
            r[0] * inv[0][0] + r[1] * inv[0][1],
            r[1] * inv[1][1] + r[0] * inv[1][0],
        ]
    };
    let mut dx = apply_inv(dy);
    // Each sweep fixes one more order of the expansion.
    for _ in 0..3 {
        let powers = ChartPowers::new(&dx);
        let q = [powers.compose(&nonlinear[0]), powers.compose(&nonlinear[1])];
        dx = apply_inv([dy[0] - q[0], dy[1] - q[1]]);
    }
    Some(dx)
}

/// A vector-valued jet, one [`Jet`] per Cartesian component.
pub type Jet3 = [Jet; 3];

pub fn jet3_from(v: Vec3) -> Jet3 {
    [Jet::constant(v[0]), Jet::constant(v[1]), Jet::constant(v[2])]
}

pub fn jet3_value(v: &Jet3) -> Vec3 {
    Vec3::new(v[0].value(), v[1].value(), v[2].value())
}

pub fn jet3_d1(v: &Jet3, a: usize) -> Vec3 {
    Vec3::new(v[0].d1(a), v[1].d1(a), v[2].d1(a))
}

pub fn jet3_d2(v: &Jet3, a: usize, b: usize) -> Vec3 {
    Vec3::new(v[0].d2(a, b), v[1].d2(a, b), v[2].d2(a, b))
}

pub fn jet3_d3(v: &Jet3, a: usize, b: usize, c: usize) -> Vec3 {
    Vec3::new(v[0].d3(a, b, c), v[1].d3(a, b, c), v[2].d3(a, b, c))
}

pub fn jet3_diff(v: &Jet3, k: usize) -> Jet3 {
    [v[0].diff(k), v[1].diff(k), v[2].diff(k)]
}

pub fn jet3_dot(a: &Jet3, b: &Jet3) -> Jet {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn jet3_cross(a: &Jet3, b: &Jet3) -> Jet3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn jet3_scale(a: &Jet3, s: &Jet) -> Jet3 {
    [a[0] * *s, a[1] * *s, a[2] * *s]
}
