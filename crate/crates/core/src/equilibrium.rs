//! Equilibrium bid functions.
//!
//! The main path is [`bid_generic`], which sums quantile derivatives:
//!
//! ```text
//! β(Q(u)) = Σ_{i=0}^{k−2} [ Π_{j=1}^{i} (k−1−j)/(n−k+j) ] · uⁱ · Q⁽ⁱ⁾(u)/i!
//! ```
//!
//! (the bracket equals `C(k−2,i)·i!·(n−k)!/(n−k+i)!`). [`bid_gamma_ratio`]
//! evaluates the same function as `γ⁽ᵏ⁻²⁾(u) / ((k−2)!·C(n−2,k−2)·u^{n−k})`
//! and exists as an independent cross-check; it loses accuracy as `u → 0`.
//! Closed forms for the built-in families do not use jets at all.

use crate::dists::Distribution;
use crate::error::{Error, Result};
use crate::jets::{factorial, gamma_jet, Jet, MAX_ORDER};

/// An auction with `n` bidders where the winner pays the `k`th highest bid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct AuctionSpec {
    n: usize,
    k: usize,
}

#[derive(serde::Deserialize)]
struct RawSpec {
    n: usize,
    k: usize,
}

impl TryFrom<RawSpec> for AuctionSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        AuctionSpec::new(raw.n, raw.k)
    }
}

impl AuctionSpec {
    /// Requires `k ≥ 2`, `n > k` and `k − 2 ≤` [`MAX_ORDER`].
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidAuction(format!("price rank k={k} must be at least 2")));
        }
        if n <= k {
            return Err(Error::InvalidAuction(format!("need more bidders than the price rank (n={n}, k={k})")));
        }
        if k - 2 > MAX_ORDER {
            return Err(Error::InvalidAuction(format!("k={k} needs derivative order {} > {MAX_ORDER}", k - 2)));
        }
        Ok(AuctionSpec { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of quantile derivatives the bid function depends on.
    pub fn order(&self) -> usize {
        self.k - 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BidPoint {
    pub u: f64,
    pub x: f64,
    pub beta: f64,
}

/// Equilibrium bids sampled on a quantile grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BidCurve {
    pub spec: AuctionSpec,
    pub dist: Distribution,
    pub points: Vec<BidPoint>,
}

fn check_open_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("quantile level {u} outside (0, 1)")))
    }
}

/// `C(n, r)` as a float, by a running product.
pub(crate) fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (1..=r).fold(1.0, |acc, j| acc * (n - r + j) as f64 / j as f64)
}

/// Bid at quantile `u` from a quantile jet of order `k − 2` anchored at `u`.
pub fn bid_from_quantile_jet(spec: &AuctionSpec, q: &Jet) -> f64 {
    debug_assert_eq!(q.order(), spec.order());
    let (n, k) = (spec.n, spec.k);
    let u = q.anchor();
    let c = q.coeffs();
    let mut acc = c[0];
    let mut weight = 1.0;
    for i in 1..=k - 2 {
        weight *= (k - 1 - i) as f64 / (n - k + i) as f64 * u;
        acc += weight * c[i];
    }
    acc
}

/// Equilibrium bid `β(Q(u))` for any distribution.
///
/// For `k = 2` this is `Q(u)`: the second-price auction is truthful.
pub fn bid_generic(spec: &AuctionSpec, d: &Distribution, u: f64) -> Result<f64> {
    check_open_unit(u)?;
    if spec.k == 2 {
        return d.quantile(u);
    }
    let q = d.quantile_jet(u, spec.order())?;
    Ok(bid_from_quantile_jet(spec, &q))
}

/// The bid as `γ⁽ᵏ⁻²⁾(u) / ((k−2)!·C(n−2,k−2)·u^{n−k})` with `γ(u) = Q(u)u^{n−2}`.
pub fn bid_gamma_ratio(spec: &AuctionSpec, d: &Distribution, u: f64) -> Result<f64> {
    check_open_unit(u)?;
    let (n, k) = (spec.n, spec.k);
    let g = gamma_jet(d, u, n, k - 2)?;
    Ok(g.coeffs()[k - 2] / (binomial(n - 2, k - 2) * u.powi((n - k) as i32)))
}

/// Slope of the linear equilibrium for `F(x) = x^α`:
/// `Π_{j=1}^{k−2} (n−1−j+1/α)/(n−1−j)`, the telescoped form of
/// `Γ(n−k+1)Γ(n−1+1/α) / (Γ(n−1)Γ(n−k+1+1/α))`.
pub fn power_coefficient(spec: &AuctionSpec, alpha: f64) -> f64 {
    let inv = alpha.recip();
    (1..=spec.k - 2).fold(1.0, |acc, j| {
        let m = (spec.n - 1 - j) as f64;
        acc * (m + inv) / m
    })
}

/// Closed-form bid for `F(x) = x^α` at valuation `x ∈ [0, 1]`.
pub fn bid_closed_power(spec: &AuctionSpec, alpha: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("valuation {x} outside [0, 1]")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    Ok(power_coefficient(spec, alpha) * x)
}

/// Weights `C(k−2,i)·(n−k)!/(n−k+i)!` for `i = 0..=k−2`.
fn leibniz_weights(spec: &AuctionSpec) -> Vec<f64> {
    let (n, k) = (spec.n, spec.k);
    let mut ratio = 1.0;
    (0..=k - 2)
        .map(|i| {
            if i > 0 {
                ratio /= (n - k + i) as f64;
            }
            binomial(k - 2, i) * ratio
        })
        .collect()
}

/// Closed-form bid for `F(x) = 1 − e^{−λx}` at quantile `u`, using
/// `Q⁽ⁱ⁾(u) = (i−1)!/(λ(1−u)ⁱ)`.
pub fn bid_closed_exponential(spec: &AuctionSpec, lambda: f64, u: f64) -> Result<f64> {
    check_open_unit(u)?;
    let odds = u / (1.0 - u);
    let w = leibniz_weights(spec);
    let mut tail = 0.0;
    for (i, wi) in w.iter().enumerate().skip(1) {
        tail += wi * factorial(i - 1) * odds.powi(i as i32);
    }
    Ok((-(-u).ln_1p() + tail) / lambda)
}

/// Closed-form bid for `F(x) = 1 − x^{−c}` on `[1, ∞)` at quantile `u`, using
/// `Q⁽ⁱ⁾(u) = (1/c)(1/c+1)…(1/c+i−1)·(1−u)^{−1/c−i}`.
pub fn bid_closed_fattail(spec: &AuctionSpec, c: f64, u: f64) -> Result<f64> {
    check_open_unit(u)?;
    let inv = c.recip();
    let base = (1.0 - u).powf(-inv);
    let w = leibniz_weights(spec);
    let mut acc = 0.0;
    let mut rising = 1.0;
    for (i, wi) in w.iter().enumerate() {
        if i > 0 {
            rising *= inv + (i - 1) as f64;
        }
        acc += wi * rising * (u / (1.0 - u)).powi(i as i32);
    }
    Ok(base * acc)
}

/// First-order approximation `x + (k−2)/(n−k+1)·F(x)/f(x)` at `x = Q(u)`.
///
/// Exact when `k = 3`; for larger `k` the neglected terms are `O(1/n²)`.
pub fn bid_asymptotic(spec: &AuctionSpec, d: &Distribution, u: f64) -> Result<f64> {
    check_open_unit(u)?;
    let x = d.quantile(u)?;
    if spec.k == 2 {
        return Ok(x);
    }
    let hazard_inv = d.cdf(x)? / d.pdf(x)?;
    Ok(x + (spec.k - 2) as f64 / (spec.n - spec.k + 1) as f64 * hazard_inv)
}

/// Samples [`bid_generic`] on a strictly increasing grid inside `(0, 1)`.
pub fn bid_curve(spec: &AuctionSpec, d: &Distribution, grid: &[f64]) -> Result<BidCurve> {
    let mut points = Vec::with_capacity(grid.len());
    let mut prev = 0.0;
    for (index, &u) in grid.iter().enumerate() {
        let at = |e: Error| Error::AtGridPoint { index, u, source: Box::new(e) };
        if !(u > prev && u < 1.0) {
            return Err(at(Error::domain("grid must be strictly increasing inside (0, 1)")));
        }
        prev = u;
        let x = d.quantile(u).map_err(at)?;
        let beta = bid_generic(spec, d, u).map_err(at)?;
        points.push(BidPoint { u, x, beta });
    }
    Ok(BidCurve { spec: *spec, dist: d.clone(), points })
}
