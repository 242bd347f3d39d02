//! Truncated Taylor-series arithmetic in one variable.
//!
//! A [`Jet`] carries the normalized Taylor coefficients `g⁽ⁱ⁾(a)/i!` of some
//! function `g` at an anchor `a`, for `i = 0..=order`. Arithmetic on jets
//! propagates those coefficients exactly up to the truncation order, so
//! evaluating an expression on [`Jet::variable`] yields the expression's
//! derivatives at the anchor.
//!
//! All operands of a binary operation must share anchor and order. Mixing
//! them is a programming error and panics.

use std::ops::{Add, Mul, Neg, Sub};

use crate::dists::Distribution;
use crate::error::{Error, Result};

/// Highest supported derivative order.
pub const MAX_ORDER: usize = 12;

const LEN: usize = MAX_ORDER + 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    anchor: f64,
    order: usize,
    coeffs: [f64; LEN],
}

impl Jet {
    /// The identity function `t ↦ t` expanded at `anchor`: coefficients `(anchor, 1, 0, …)`.
    pub fn variable(anchor: f64, order: usize) -> Self {
        let mut jet = Self::constant(anchor, anchor, order);
        if order >= 1 {
            jet.coeffs[1] = 1.0;
        }
        jet
    }

    /// A constant function expanded at `anchor`.
    pub fn constant(value: f64, anchor: f64, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds cap {MAX_ORDER}");
        let mut coeffs = [0.0; LEN];
        coeffs[0] = value;
        Jet { anchor, order, coeffs }
    }

    /// Builds a jet from explicit normalized coefficients.
    pub fn from_coeffs(anchor: f64, coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("a jet needs at least one coefficient"));
        }
        let order = coeffs.len() - 1;
        if order > MAX_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        let mut jet = Self::constant(0.0, anchor, order);
        jet.coeffs[..coeffs.len()].copy_from_slice(coeffs);
        Ok(jet)
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Normalized coefficients `g⁽ⁱ⁾/i!`, length `order + 1`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..=self.order]
    }

    /// The `i`th derivative `coeffs[i] · i!`.
    pub fn derivative(&self, i: usize) -> f64 {
        assert!(i <= self.order, "derivative {i} beyond jet order {}", self.order);
        self.coeffs[i] * factorial(i)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs().iter().all(|c| c.is_finite())
    }

    fn like(&self) -> Self {
        Self::constant(0.0, self.anchor, self.order)
    }

    fn check_compatible(&self, other: &Jet) {
        assert!(
            self.order == other.order && self.anchor.to_bits() == other.anchor.to_bits(),
            "jet mismatch: (anchor {}, order {}) vs (anchor {}, order {})",
            self.anchor,
            self.order,
            other.anchor,
            other.order
        );
    }

    /// Quotient of two series; the divisor's constant term must be nonzero.
    pub fn div(&self, rhs: &Jet) -> Result<Jet> {
        self.check_compatible(rhs);
        let b0 = rhs.coeffs[0];
        if b0 == 0.0 {
            return Err(Error::DivisionByZero);
        }
        let mut out = self.like();
        for k in 0..=self.order {
            let mut acc = self.coeffs[k];
            for i in 1..=k {
                acc -= rhs.coeffs[i] * out.coeffs[k - i];
            }
            out.coeffs[k] = acc / b0;
        }
        Ok(out)
    }

    /// `1 / self`.
    pub fn recip(&self) -> Result<Jet> {
        Jet::constant(1.0, self.anchor, self.order).div(self)
    }

    pub fn exp(&self) -> Jet {
        let mut out = self.like();
        out.coeffs[0] = self.coeffs[0].exp();
        for k in 1..=self.order {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.coeffs[j] * out.coeffs[k - j];
            }
            out.coeffs[k] = acc / k as f64;
        }
        out
    }

    /// Natural logarithm; requires a positive constant term.
    pub fn ln(&self) -> Result<Jet> {
        let a0 = self.coeffs[0];
        if !(a0 > 0.0) {
            return Err(Error::domain(format!("ln of a series with constant term {a0}")));
        }
        let mut out = self.like();
        out.coeffs[0] = a0.ln();
        for k in 1..=self.order {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * out.coeffs[j] * self.coeffs[k - j];
            }
            out.coeffs[k] = (self.coeffs[k] - acc / k as f64) / a0;
        }
        Ok(out)
    }

    /// Integer power by repeated squaring. Negative exponents go through [`Jet::recip`].
    pub fn powi(&self, p: i32) -> Result<Jet> {
        let mut base = if p < 0 { self.recip()? } else { *self };
        let mut e = p.unsigned_abs();
        let mut acc = Jet::constant(1.0, self.anchor, self.order);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        Ok(acc)
    }

    /// Real power. Integral exponents use [`Jet::powi`]; others use `exp(p·ln a)`
    /// and require a positive constant term.
    pub fn powf(&self, p: f64) -> Result<Jet> {
        if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
            return self.powi(p as i32);
        }
        if !(self.coeffs[0] > 0.0) {
            return Err(Error::domain(format!(
                "non-integer power {p} of a series with constant term {}",
                self.coeffs[0]
            )));
        }
        Ok((self.ln()? * p).exp())
    }
}

/// Jet of `γ(u) = Q(u)·u^{n−2}` at `u`.
///
/// For an auction with price rank `k` the equilibrium needs `order = k − 2`.
pub fn gamma_jet(d: &Distribution, u: f64, n: usize, order: usize) -> Result<Jet> {
    if n < 3 {
        return Err(Error::InvalidAuction(format!("gamma jet needs n ≥ 3, got {n}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("gamma jet: u={u} outside (0, 1)")));
    }
    let q = d.quantile_jet(u, order)?;
    Ok(q * Jet::variable(u, order).powi((n - 2) as i32)?)
}

pub(crate) fn factorial(i: usize) -> f64 {
    (1..=i).fold(1.0, |acc, j| acc * j as f64)
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        self.check_compatible(&rhs);
        for i in 0..=self.order {
            self.coeffs[i] += rhs.coeffs[i];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        self.check_compatible(&rhs);
        for i in 0..=self.order {
            self.coeffs[i] -= rhs.coeffs[i];
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.check_compatible(&rhs);
        let mut out = self.like();
        for k in 0..=self.order {
            let mut acc = 0.0;
            for i in 0..=k {
                acc += self.coeffs[i] * rhs.coeffs[k - i];
            }
            out.coeffs[k] = acc;
        }
        out
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for c in &mut self.coeffs[..=self.order] {
            *c = -*c;
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for c in &mut self.coeffs[..=self.order] {
            *c *= rhs;
        }
        self
    }
}

/// `c - jet`.
impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn jet(c: &[f64]) -> Jet {
        Jet::from_coeffs(0.0, c).unwrap()
    }

    #[test]
    fn variable_seeds() {
        assert_eq!(Jet::variable(0.5, 2).coeffs(), &[0.5, 1.0, 0.0]);
        assert_eq!(Jet::variable(0.0, 0).coeffs(), &[0.0]);
        assert_eq!(Jet::variable(0.25, 3).coeffs(), &[0.25, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn products_and_quotients() {
        let a = jet(&[1.0, 1.0, 0.0]);
        assert_eq!((a * a).coeffs(), &[1.0, 2.0, 1.0]);
        assert_eq!((a * a).derivative(2), 2.0);
        assert_eq!((jet(&[2.0, 0.0, 0.0]) * jet(&[3.0, 0.0, 0.0])).coeffs(), &[6.0, 0.0, 0.0]);
        let q = jet(&[1.0, 1.0]).div(&jet(&[1.0, -1.0])).unwrap();
        assert_eq!(q.coeffs(), &[1.0, 2.0]);
    }

    #[test]
    fn division_by_zero_constant_term() {
        assert_eq!(jet(&[1.0, 1.0]).div(&jet(&[0.0, 1.0])), Err(Error::DivisionByZero));
    }

    #[test]
    fn elementary_functions() {
        assert_eq!(jet(&[1.0, 1.0]).powf(2.0).unwrap().coeffs(), &[1.0, 2.0]);
        let l = jet(&[1.0, 1.0, 0.0]).ln().unwrap();
        assert_eq!(l.coeffs(), &[0.0, 1.0, -0.5]);
        let e = jet(&[0.0, 1.0, 0.0]).exp();
        assert_eq!(e.coeffs(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn ln_and_fractional_pow_reject_nonpositive() {
        assert!(matches!(jet(&[0.0, 1.0]).ln(), Err(Error::Domain(_))));
        assert!(matches!(jet(&[-1.0, 1.0]).powf(0.5), Err(Error::Domain(_))));
        // integral powers are fine at zero
        assert_eq!(jet(&[0.0, 1.0, 0.0]).powf(2.0).unwrap().coeffs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn known_series() {
        // 1/(1-t) = Σ tⁱ
        let t = Jet::variable(0.0, 8);
        let g = (1.0 - t).recip().unwrap();
        for c in g.coeffs() {
            assert_relative_eq!(*c, 1.0, max_relative = 1e-15);
        }
        // sqrt(1+t) = 1 + t/2 - t²/8 + t³/16 - 5t⁴/128
        let s = (t + 1.0).powf(0.5).unwrap();
        let expected = [1.0, 0.5, -0.125, 0.0625, -5.0 / 128.0];
        for (c, e) in s.coeffs().iter().zip(expected) {
            assert_relative_eq!(*c, e, max_relative = 1e-14);
        }
        // t^{-2} at anchor 2: derivatives -2·t^{-3}, 6·t^{-4}
        let x = Jet::variable(2.0, 2);
        let p = x.powi(-2).unwrap();
        assert_relative_eq!(p.derivative(0), 0.25);
        assert_relative_eq!(p.derivative(1), -0.25);
        assert_relative_eq!(p.derivative(2), 6.0 / 16.0);
    }

    #[test]
    fn exp_ln_inverse() {
        let x = Jet::variable(0.7, MAX_ORDER);
        let y = (x * x + 1.0).ln().unwrap().exp();
        let z = x * x + 1.0;
        for (a, b) in y.coeffs().iter().zip(z.coeffs()) {
            assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    #[should_panic(expected = "jet mismatch")]
    fn mixed_order_is_contract_violation() {
        let _ = Jet::variable(0.5, 2) + Jet::variable(0.5, 3);
    }

    #[test]
    fn gamma_jet_examples() {
        let g = gamma_jet(&Distribution::Uniform, 0.5, 4, 1).unwrap();
        assert_relative_eq!(g.derivative(0), 0.125);
        assert_relative_eq!(g.derivative(1), 0.75);
        for u in [0.2, 0.7] {
            let g = gamma_jet(&Distribution::power(1.0).unwrap(), u, 6, 0).unwrap();
            assert_relative_eq!(g.value(), u.powi(5), max_relative = 1e-15);
        }
        let g = gamma_jet(&Distribution::power(2.0).unwrap(), 0.25, 4, 2).unwrap();
        assert_relative_eq!(g.derivative(0), 0.25f64.powf(2.5), max_relative = 1e-14);
        assert_relative_eq!(g.derivative(2), 1.875, max_relative = 1e-14);
        assert!(gamma_jet(&Distribution::Uniform, 0.5, 2, 1).is_err());
        assert!(gamma_jet(&Distribution::Uniform, 1.0, 4, 1).is_err());
    }

    #[test]
    fn gamma_jet_matches_finite_differences() {
        let dists = [
            Distribution::Uniform,
            Distribution::power(0.5).unwrap(),
            Distribution::power(2.0).unwrap(),
            Distribution::exponential(1.0).unwrap(),
            Distribution::fat_tail(2.0).unwrap(),
        ];
        let h = 1e-3;
        for d in &dists {
            for n in [3usize, 5, 8] {
                let gamma = |v: f64| d.quantile(v).unwrap() * v.powi(n as i32 - 2);
                for u in crate::dists::linear_grid(0.1, 0.9, 9) {
                    let jet = gamma_jet(d, u, n, 4).unwrap();
                    for i in 1..=4usize {
                        let raw = |h: f64| {
                            let mut acc = 0.0;
                            let mut binom = 1.0;
                            for j in 0..=i {
                                let x = u + (i as f64 / 2.0 - j as f64) * h;
                                acc += if j % 2 == 0 { binom } else { -binom } * gamma(x);
                                binom = binom * (i - j) as f64 / (j + 1) as f64;
                            }
                            acc / h.powi(i as i32)
                        };
                        let fd = (4.0 * raw(h) - raw(2.0 * h)) / 3.0;
                        let want = jet.derivative(i);
                        let floor = 64.0 * f64::EPSILON * gamma(u).abs() * 2f64.powi(i as i32) / h.powi(i as i32);
                        let tol = 1e-5 * want.abs() + floor;
                        assert!((fd - want).abs() <= tol, "{d} n={n} u={u} i={i}: {fd} vs {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn order_cap() {
        assert_eq!(Jet::from_coeffs(0.0, &[0.0; 14]), Err(Error::OrderTooHigh(13)));
    }

    fn arb_jet(order: usize) -> impl Strategy<Value = Jet> {
        prop::collection::vec(-2.0f64..2.0, order + 1).prop_map(|c| Jet::from_coeffs(0.3, &c).unwrap())
    }

    proptest! {
        #[test]
        fn product_rule_first_coefficient(a in arb_jet(4), b in arb_jet(4)) {
            let p = a * b;
            let expected = a.coeffs()[0] * b.coeffs()[1] + a.coeffs()[1] * b.coeffs()[0];
            prop_assert_eq!(p.derivative(1), expected);
        }

        #[test]
        fn ring_laws(a in arb_jet(5), b in arb_jet(5), c in arb_jet(5)) {
            let close = |x: Jet, y: Jet| x.coeffs().iter().zip(y.coeffs()).all(|(p, q)| (p - q).abs() <= 1e-14 * (1.0 + p.abs().max(q.abs())) * 10.0);
            prop_assert!(close(a + b, b + a));
            prop_assert!(close((a + b) + c, a + (b + c)));
            prop_assert!(close(a * b, b * a));
            prop_assert!(close((a * b) * c, a * (b * c)));
        }

        #[test]
        fn division_inverts_multiplication(a in arb_jet(6), mut b in arb_jet(6)) {
            b.coeffs[0] = 1.0 + b.coeffs[0].abs();
            let back = (a * b).div(&b).unwrap();
            for (x, y) in back.coeffs().iter().zip(a.coeffs()) {
                prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
            }
        }

        #[test]
        fn polynomial_derivatives_exact(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, c2 in -2.0f64..2.0, u in -1.0f64..1.0) {
            // g(t) = c0 + c1 t + c2 t², derivatives at u by hand
            let t = Jet::variable(u, 3);
            let g = t * t * c2 + t * c1 + c0;
            prop_assert!((g.derivative(1) - (c1 + 2.0 * c2 * u)).abs() <= 1e-14);
            prop_assert_eq!(g.derivative(2), 2.0 * c2);
            prop_assert_eq!(g.derivative(3), 0.0);
        }
    }
}
