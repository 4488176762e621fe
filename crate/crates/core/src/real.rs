//! Scalar abstraction shared by density evaluation and gradient evaluation.
//!
//! Model procedures are written once over [`Real`]. Running them with `f64`
//! evaluates the log-density; running them with [`Dual`] carries sparse
//! first-order partials with respect to the unconstrained trace coordinates.
//! Every primitive that is not plain arithmetic (distribution log-densities,
//! transforms, special functions) supplies its own closed-form partial
//! derivatives through [`Real::lift`] / [`Real::combine`], so gradients are the
//! chain-rule composition of per-primitive score functions.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use smallvec::SmallVec;

pub trait Real:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(value: f64) -> Self;

    /// Independent variable `index` taking `value`.
    fn variable(index: usize, value: f64) -> Self;

    fn value(&self) -> f64;

    /// Adds the partial derivatives into a dense gradient; coordinates past its end are dropped.
    fn accumulate_partials(&self, gradient: &mut [f64]);

    /// Result of a scalar function `g` applied to `self`, given `g(self)` and `g'(self)`.
    fn lift(&self, value: f64, derivative: f64) -> Self;

    /// Result of a function of several arguments, given its value and the
    /// partial derivative with respect to each argument.
    fn combine(value: f64, terms: &[(&Self, f64)]) -> Self;

    fn exp(&self) -> Self {
        let v = self.value().exp();
        self.lift(v, v)
    }

    fn ln(&self) -> Self {
        let v = self.value();
        self.lift(v.ln(), 1.0 / v)
    }

    fn sqrt(&self) -> Self {
        let v = self.value().sqrt();
        self.lift(v, 0.5 / v)
    }

    fn powi(&self, n: i32) -> Self {
        let v = self.value();
        match n {
            0 => Self::constant(1.0),
            _ => self.lift(v.powi(n), f64::from(n) * v.powi(n - 1)),
        }
    }

    fn square(&self) -> Self {
        let v = self.value();
        self.lift(v * v, 2.0 * v)
    }

    /// `1 / (1 + exp(-x))`.
    fn logistic(&self) -> Self {
        let s = logistic(self.value());
        self.lift(s, s * (1.0 - s))
    }

    /// `ln(1 + exp(x))`.
    fn softplus(&self) -> Self {
        let v = self.value();
        self.lift(softplus(v), logistic(v))
    }

    /// `max(x, 0)`; the derivative is taken as zero at and below the kink.
    fn positive_part(&self) -> Self {
        if self.value() > 0.0 {
            self.clone()
        } else {
            Self::constant(0.0)
        }
    }

    /// `max(x, floor)` with `floor` a constant.
    fn floor_at(&self, floor: f64) -> Self {
        if self.value() >= floor {
            self.clone()
        } else {
            Self::constant(floor)
        }
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Real for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }

    #[inline]
    fn variable(_index: usize, value: f64) -> Self {
        value
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn accumulate_partials(&self, _gradient: &mut [f64]) {}

    #[inline]
    fn lift(&self, value: f64, _derivative: f64) -> Self {
        value
    }

    #[inline]
    fn combine(value: f64, _terms: &[(&Self, f64)]) -> Self {
        value
    }

    // Skip the derivative computations of the provided methods.
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }

    #[inline]
    fn ln(&self) -> Self {
        f64::ln(*self)
    }

    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }

    #[inline]
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }

    #[inline]
    fn square(&self) -> Self {
        self * self
    }

    #[inline]
    fn logistic(&self) -> Self {
        logistic(*self)
    }

    #[inline]
    fn softplus(&self) -> Self {
        softplus(*self)
    }
}

type Partials = SmallVec<[(u32, f64); 4]>;

/// Forward-mode dual number with sparse partials, sorted by coordinate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dual {
    value: f64,
    partials: Partials,
}

impl Dual {
    pub fn new(value: f64, mut partials: Vec<(u32, f64)>) -> Self {
        partials.sort_unstable_by_key(|&(i, _)| i);
        let mut d = Dual {
            value,
            partials: Partials::new(),
        };
        for (i, p) in partials {
            d.push_coalesced(i, p);
        }
        d
    }

    /// Non-zero partials as `(coordinate, ∂/∂coordinate)`, sorted by coordinate.
    pub fn partials(&self) -> &[(u32, f64)] {
        &self.partials
    }

    /// Dense gradient of length `dim`.
    pub fn gradient(&self, dim: usize) -> Vec<f64> {
        let mut g = vec![0.0; dim];
        for &(i, p) in &self.partials {
            g[i as usize] += p;
        }
        g
    }

    fn push_coalesced(&mut self, index: u32, p: f64) {
        match self.partials.last_mut() {
            Some(last) if last.0 == index => last.1 += p,
            _ => self.partials.push((index, p)),
        }
    }

    fn scaled(value: f64, a: &Dual, ca: f64) -> Dual {
        Dual {
            value,
            partials: a.partials.iter().map(|&(i, p)| (i, ca * p)).collect(),
        }
    }

    /// `ca·∂a + cb·∂b`, merging two sorted partial lists.
    fn merged(value: f64, a: &Dual, ca: f64, b: &Dual, cb: f64) -> Dual {
        if b.partials.is_empty() {
            return Dual::scaled(value, a, ca);
        }
        if a.partials.is_empty() {
            return Dual::scaled(value, b, cb);
        }
        let mut out = Partials::with_capacity(a.partials.len() + b.partials.len());
        let (mut ia, mut ib) = (0, 0);
        let (pa, pb) = (&a.partials, &b.partials);
        while ia < pa.len() && ib < pb.len() {
            let (ka, va) = pa[ia];
            let (kb, vb) = pb[ib];
            if ka == kb {
                out.push((ka, ca * va + cb * vb));
                ia += 1;
                ib += 1;
            } else if ka < kb {
                out.push((ka, ca * va));
                ia += 1;
            } else {
                out.push((kb, cb * vb));
                ib += 1;
            }
        }
        out.extend(pa[ia..].iter().map(|&(k, v)| (k, ca * v)));
        out.extend(pb[ib..].iter().map(|&(k, v)| (k, cb * v)));
        Dual {
            value,
            partials: out,
        }
    }
}

impl Real for Dual {
    fn constant(value: f64) -> Self {
        Dual {
            value,
            partials: Partials::new(),
        }
    }

    fn variable(index: usize, value: f64) -> Self {
        let mut partials = Partials::new();
        partials.push((index as u32, 1.0));
        Dual { value, partials }
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn accumulate_partials(&self, gradient: &mut [f64]) {
        for &(i, p) in &self.partials {
            if let Some(g) = gradient.get_mut(i as usize) {
                *g += p;
            }
        }
    }

    fn lift(&self, value: f64, derivative: f64) -> Self {
        Dual::scaled(value, self, derivative)
    }

    fn combine(value: f64, terms: &[(&Self, f64)]) -> Self {
        let active: SmallVec<[&(&Dual, f64); 8]> = terms
            .iter()
            .filter(|(d, _)| !d.partials.is_empty())
            .collect();
        match active.as_slice() {
            [] => Dual::constant(value),
            [(a, ca)] => Dual::scaled(value, a, *ca),
            [(a, ca), (b, cb)] => Dual::merged(value, a, *ca, b, *cb),
            _ => {
                let mut all: SmallVec<[(u32, f64); 16]> = SmallVec::new();
                for (d, c) in active {
                    all.extend(d.partials.iter().map(|&(i, p)| (i, c * p)));
                }
                all.sort_unstable_by_key(|&(i, _)| i);
                let mut out = Dual::constant(value);
                for (i, p) in all {
                    out.push_coalesced(i, p);
                }
                out
            }
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::merged(self.value + rhs.value, &self, 1.0, &rhs, 1.0)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::merged(self.value - rhs.value, &self, 1.0, &rhs, -1.0)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::merged(self.value * rhs.value, &self, rhs.value, &rhs, self.value)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let q = self.value / rhs.value;
        Dual::merged(q, &self, 1.0 / rhs.value, &rhs, -q / rhs.value)
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::scaled(-self.value, &self, -1.0)
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(mut self, rhs: f64) -> Dual {
        self.value += rhs;
        self
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(mut self, rhs: f64) -> Dual {
        self.value -= rhs;
        self
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(mut self, rhs: f64) -> Dual {
        self.value *= rhs;
        for p in &mut self.partials {
            p.1 *= rhs;
        }
        self
    }
}

impl Div<f64> for Dual {
    type Output = Dual;
    fn div(self, rhs: f64) -> Dual {
        self * (1.0 / rhs)
    }
}

/// Forward-mode dual number with a dense gradient over at most `N` coordinates.
///
/// Variables with index `N` or above are treated as constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseDual<const N: usize> {
    value: f64,
    gradient: [f64; N],
}

impl<const N: usize> DenseDual<N> {
    pub fn gradient(&self) -> &[f64; N] {
        &self.gradient
    }

    #[inline]
    fn with(value: f64, a: &Self, ca: f64) -> Self {
        DenseDual {
            value,
            gradient: std::array::from_fn(|i| ca * a.gradient[i]),
        }
    }

    #[inline]
    fn with2(value: f64, a: &Self, ca: f64, b: &Self, cb: f64) -> Self {
        DenseDual {
            value,
            gradient: std::array::from_fn(|i| ca * a.gradient[i] + cb * b.gradient[i]),
        }
    }
}

impl<const N: usize> Real for DenseDual<N> {
    #[inline]
    fn constant(value: f64) -> Self {
        DenseDual {
            value,
            gradient: [0.0; N],
        }
    }

    fn variable(index: usize, value: f64) -> Self {
        let mut d = Self::constant(value);
        if index < N {
            d.gradient[index] = 1.0;
        }
        d
    }

    #[inline]
    fn value(&self) -> f64 {
        self.value
    }

    fn accumulate_partials(&self, gradient: &mut [f64]) {
        for (g, p) in gradient.iter_mut().zip(&self.gradient) {
            *g += p;
        }
    }

    #[inline]
    fn lift(&self, value: f64, derivative: f64) -> Self {
        Self::with(value, self, derivative)
    }

    fn combine(value: f64, terms: &[(&Self, f64)]) -> Self {
        let mut out = Self::constant(value);
        for (d, c) in terms {
            for (o, p) in out.gradient.iter_mut().zip(&d.gradient) {
                *o += c * p;
            }
        }
        out
    }
}

impl<const N: usize> Add for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::with2(self.value + rhs.value, &self, 1.0, &rhs, 1.0)
    }
}

impl<const N: usize> Sub for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::with2(self.value - rhs.value, &self, 1.0, &rhs, -1.0)
    }
}

impl<const N: usize> Mul for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::with2(self.value * rhs.value, &self, rhs.value, &rhs, self.value)
    }
}

impl<const N: usize> Div for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Self::with2(q, &self, 1.0 / rhs.value, &rhs, -q / rhs.value)
    }
}

impl<const N: usize> Neg for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::with(-self.value, &self, -1.0)
    }
}

impl<const N: usize> Add<f64> for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.value += rhs;
        self
    }
}

impl<const N: usize> Sub<f64> for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.value -= rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        Self::with(self.value * rhs, &self, rhs)
    }
}

impl<const N: usize> Div<f64> for DenseDual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

/// Dense accumulator for a sum of [`Real`] terms.
#[derive(Clone, Debug)]
pub(crate) struct Accumulator {
    pub value: f64,
    pub gradient: Vec<f64>,
}

impl Accumulator {
    pub fn new(dim: usize) -> Self {
        Accumulator {
            value: 0.0,
            gradient: vec![0.0; dim],
        }
    }

    pub fn add<R: Real>(&mut self, term: &R) {
        self.value += term.value();
        term.accumulate_partials(&mut self.gradient);
    }
}
