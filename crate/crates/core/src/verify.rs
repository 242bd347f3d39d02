//! Independent checks on a computed bid function.
//!
//! * [`characterization_residual`] plugs a bid function into the integral
//!   equilibrium condition, written in quantile space:
//!   `R(u) = ∫₀ᵘ [Q(u) − β(z)] z^{n−k} (u−z)^{k−3} dz`, normalized by
//!   `S(u) = Q(u) u^{n−2} B(n−k+1, k−2)`.
//! * [`psi_crosscheck`] rebuilds `γ⁽ᵏ⁻²⁾` by differentiating
//!   `ψ₀(u) = ∫₀ᵘ Q(z) z^{n−2} dz` numerically `k−1` times.
//! * [`lemma1_check`] confirms `d^{r+1}/du^{r+1} ∫₀ᵘ q̂(z)(u−z)^r z^m dz = r! q̂(u) u^m`.
//! * [`check_monotone`] checks that bids increase with valuation.
//!
//! None of these go through the Leibniz sum used by the solver, so agreement
//! is evidence that the solver is right.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dists::{default_grid, Distribution};
use crate::equilibrium::{bid_curve, bid_generic, binomial, AuctionSpec, BidCurve};
use crate::error::{Error, Result};
use crate::jets::{factorial, gamma_jet};
use crate::quadrature::GaussLegendre;

/// Finite-difference step for the ψ and Lemma 1 checks.
pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub residual: f64,
    pub psi: f64,
    pub lemma1: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual: 1e-8, psi: 1e-4, lemma1: 1e-3 }
    }
}

/// Relative characterization residual `R(u)/S(u)` of `beta` (a bid function of the quantile level).
pub fn characterization_residual(
    spec: &AuctionSpec,
    d: &Distribution,
    beta: impl Fn(f64) -> Result<f64>,
    u: f64,
) -> Result<f64> {
    let (n, k) = (spec.n(), spec.k());
    if k < 3 {
        return Err(Error::InvalidAuction("the characterization residual needs k ≥ 3".into()));
    }
    if !(u < 1.0) || u.is_nan() {
        return Err(Error::domain(format!("residual at u={u} outside (0, 1)")));
    }
    if u < 1e-6 {
        return Err(Error::Quadrature(format!("u={u} below 1e-6")));
    }
    let qu = d.quantile(u)?;
    let rule = GaussLegendre::default_rule();
    let breaks = residual_panels(u, k == 3);
    let (a, b) = ((n - k) as i32, (k - 3) as i32);
    let r = rule.try_integrate_panels(&breaks, |z| Ok::<_, Error>((qu - beta(z)?) * z.powi(a) * (u - z).powi(b)))?;
    let beta_fn = 1.0 / ((k - 2) as f64 * binomial(n - 2, k - 2));
    let s = qu * u.powi((n - 2) as i32) * beta_fn;
    Ok(r / s)
}

/// Panel breakpoints on `[0, u]`, graded geometrically toward `z = 0`
/// (where `Q` may have a fractional power) and toward `z = 1` (where
/// unbounded quantiles blow up), with an extra split at `u/2` when asked.
fn residual_panels(u: f64, split_half: bool) -> Vec<f64> {
    let mut breaks = vec![0.0];
    breaks.extend((1..=5).rev().map(|j| u * 0.25f64.powi(j)));
    if split_half {
        breaks.push(0.5 * u);
    }
    let gap = 1.0 - u;
    let mut toward_one: Vec<f64> = (1..).map(|j| 1.0 - gap * 4f64.powi(j)).take_while(|&z| z > 0.0).collect();
    toward_one.reverse();
    breaks.extend(toward_one);
    breaks.push(u);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-3 * u * 0.25f64.powi(5));
    breaks
}

/// Minimum slope `(βᵢ₊₁−βᵢ)/(xᵢ₊₁−xᵢ)` over adjacent points, and whether it is positive.
///
/// A curve with fewer than two points is vacuously increasing (slope `+∞`).
pub fn check_monotone(curve: &BidCurve) -> (bool, f64) {
    let min_slope = curve
        .points
        .windows(2)
        .map(|w| (w[1].beta - w[0].beta) / (w[1].x - w[0].x))
        .fold(f64::INFINITY, f64::min);
    (min_slope > 0.0, min_slope)
}

/// Whether `Q⁽ⁱ⁾(u) > 0` for `1 ≤ i ≤ max_order` on every grid point; also returns the smallest such derivative.
pub fn quantile_derivatives_positive(d: &Distribution, grid: &[f64], max_order: usize) -> Result<(bool, f64)> {
    let mut min = f64::INFINITY;
    for &u in grid {
        let q = d.quantile_jet(u, max_order)?;
        for i in 1..=max_order {
            min = min.min(q.derivative(i));
        }
    }
    Ok((min > 0.0, min))
}

/// `m`th derivative of `f` at `u` by `m`-fold central differencing with one Richardson step.
///
/// The stencil of the coarse pass reaches `u ± 2mh`; it must stay inside `(0, 1)`.
pub fn central_derivative(f: impl Fn(f64) -> Result<f64>, u: f64, m: usize, h: f64) -> Result<f64> {
    let reach = 2.0 * m as f64 * h;
    if !(u - reach > 0.0 && u + reach < 1.0) {
        return Err(Error::Stencil(format!("order {m} at u={u} with h={h}")));
    }
    let pass = |h: f64| -> Result<f64> {
        let mut acc = 0.0;
        let mut c = 1.0;
        for j in 0..=m {
            let x = u + (m as f64 - 2.0 * j as f64) * h;
            acc += if j % 2 == 0 { c } else { -c } * f(x)?;
            c = c * (m - j) as f64 / (j + 1) as f64;
        }
        Ok(acc / (2.0 * h).powi(m as i32))
    };
    Ok((4.0 * pass(h)? - pass(2.0 * h)?) / 3.0)
}

fn relative_deviation(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Relative deviation between the numerically differentiated `ψ₀` and the jet value of `γ⁽ᵏ⁻²⁾(u)`.
pub fn psi_crosscheck(spec: &AuctionSpec, d: &Distribution, u: f64) -> Result<f64> {
    let (n, k) = (spec.n(), spec.k());
    if k < 3 {
        return Err(Error::InvalidAuction("the psi cross-check needs k ≥ 3".into()));
    }
    if !(u > 0.05 && u < 0.95) {
        return Err(Error::domain(format!("psi cross-check at u={u} outside (0.05, 0.95)")));
    }
    let rule = GaussLegendre::default_rule();
    let p = (n - 2) as i32;
    let psi0 = |v: f64| rule.try_integrate(0.0, v, |z| Ok::<_, Error>(d.quantile(z)? * z.powi(p)));
    // ψ₀ grows like u^(n−1), so below the midpoint the step shrinks with u
    let h = FD_STEP * (2.0 * u).min(1.0);
    let numeric = central_derivative(psi0, u, k - 1, h)?;
    let exact = gamma_jet(d, u, n, k - 2)?.derivative(k - 2);
    Ok(relative_deviation(numeric, exact))
}

/// Relative deviation between the `(r+1)`th numerical derivative of
/// `H_r(u) = ∫₀ᵘ q̂(z)(u−z)^r z^m dz` and `r!·q̂(u)·u^m`.
pub fn lemma1_check(m: f64, r: usize, qhat: impl Fn(f64) -> f64, u: f64) -> Result<f64> {
    if !(m > 0.0) {
        return Err(Error::domain(format!("m={m} must be positive")));
    }
    if r > 3 {
        return Err(Error::domain(format!("r={r} exceeds 3")));
    }
    if !(0.1..=0.9).contains(&u) {
        return Err(Error::domain(format!("u={u} outside [0.1, 0.9]")));
    }
    let rule = GaussLegendre::default_rule();
    let h_r = |v: f64| Ok(rule.integrate(0.0, v, |z| qhat(z) * (v - z).powi(r as i32) * z.powf(m)));
    let numeric = central_derivative(h_r, u, r + 1, FD_STEP)?;
    let exact = factorial(r) * qhat(u) * u.powf(m);
    Ok(relative_deviation(numeric, exact))
}

/// One tabulated `(q̂, r, m)` case for [`lemma1_check`].
#[derive(Clone, Copy, Debug)]
pub struct Lemma1Case {
    pub name: &'static str,
    pub m: f64,
    pub r: usize,
    pub qhat: fn(f64) -> f64,
}

/// Bounded test functions paired with kernel exponents.
pub fn lemma1_table() -> [Lemma1Case; 6] {
    [
        Lemma1Case { name: "one", m: 1.0, r: 0, qhat: |_| 1.0 },
        Lemma1Case { name: "z", m: 1.0, r: 1, qhat: |z| z },
        Lemma1Case { name: "z^2", m: 2.0, r: 2, qhat: |z| z * z },
        Lemma1Case { name: "1-exp(-z)", m: 0.5, r: 3, qhat: |z| -(-z).exp_m1() },
        Lemma1Case { name: "z/(1+z)", m: 2.5, r: 3, qhat: |z| z / (1.0 + z) },
        Lemma1Case { name: "sqrt(z)", m: 3.0, r: 2, qhat: f64::sqrt },
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Checked,
    Skipped,
}

/// Result of [`full_report`].
///
/// Serialized as TOML; the key set is stable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub distribution: String,
    pub grid: Vec<f64>,
    pub residual_status: CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_note: Option<String>,
    pub residuals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    pub monotone: bool,
    pub min_slope: f64,
    /// `Q⁽ⁱ⁾ > 0` for `1 ≤ i ≤ k−2` on the grid; sufficient for monotone bids, not required.
    pub derivative_condition: bool,
    pub psi_status: CheckStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_max_dev: Option<f64>,
    pub lemma1_max_dev: f64,
    pub spec: AuctionSpec,
    pub tolerances: Tolerances,
}

impl VerificationReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are all TOML-representable")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { pos: e.span().map_or(0, |s| s.start), msg: e.message().to_string() })
    }
}

/// Grid points where the ψ and Lemma 1 checks run.
fn inner_grid(grid: &[f64]) -> Vec<f64> {
    grid.iter().copied().filter(|u| (0.1..=0.9).contains(u)).collect()
}

/// Runs every check over the default grid.
///
/// The residual section is skipped for `k = 2` (no integral condition); the
/// ψ section is skipped unless `3 ≤ k ≤ 5`, beyond which repeated finite
/// differencing cannot reach the tolerance.
pub fn full_report(spec: &AuctionSpec, d: &Distribution) -> Result<VerificationReport> {
    full_report_on(spec, d, &default_grid())
}

/// [`full_report`] on a caller-chosen grid.
pub fn full_report_on(spec: &AuctionSpec, d: &Distribution, grid: &[f64]) -> Result<VerificationReport> {
    let tol = Tolerances::default();
    let grid = grid.to_vec();
    let k = spec.k();

    let curve = bid_curve(spec, d, &grid)?;
    let (monotone, min_slope) = check_monotone(&curve);

    let (residual_status, residual_note, residuals) = if k >= 3 {
        let values = grid
            .par_iter()
            .enumerate()
            .map(|(index, &u)| {
                characterization_residual(spec, d, |z| bid_generic(spec, d, z), u)
                    .map_err(|e| Error::AtGridPoint { index, u, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()?;
        (CheckStatus::Checked, None, values)
    } else {
        (CheckStatus::Skipped, Some("k = 2: truthful bidding, no integral condition".to_string()), Vec::new())
    };
    let max_residual = residuals.iter().map(|r| r.abs()).reduce(f64::max);

    let derivative_condition = if k >= 3 { quantile_derivatives_positive(d, &grid, k - 2)?.0 } else { true };

    let inner = inner_grid(&grid);
    let (psi_status, psi_note, psi_max_dev) = if (3..=5).contains(&k) {
        let devs = inner
            .par_iter()
            .map(|&u| psi_crosscheck(spec, d, u))
            .collect::<Result<Vec<_>>>()?;
        (CheckStatus::Checked, None, devs.into_iter().reduce(f64::max))
    } else {
        let why = if k < 3 { "k = 2: no derivatives to compare" } else { "k > 5: finite differences too noisy" };
        (CheckStatus::Skipped, Some(why.to_string()), None)
    };

    let mut lemma1_max_dev = 0.0f64;
    for case in lemma1_table() {
        for &u in &inner {
            lemma1_max_dev = lemma1_max_dev.max(lemma1_check(case.m, case.r, case.qhat, u)?);
        }
    }

    let passed = monotone
        && max_residual.is_none_or(|r| r <= tol.residual)
        && psi_max_dev.is_none_or(|p| p <= tol.psi)
        && lemma1_max_dev <= tol.lemma1;

    Ok(VerificationReport {
        passed,
        distribution: d.id(),
        grid,
        residual_status,
        residual_note,
        residuals,
        max_residual,
        monotone,
        min_slope,
        derivative_condition,
        psi_status,
        psi_note,
        psi_max_dev,
        lemma1_max_dev,
        spec: *spec,
        tolerances: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{BidPoint, BidCurve};

    fn spec(n: usize, k: usize) -> AuctionSpec {
        AuctionSpec::new(n, k).unwrap()
    }

    #[test]
    fn residual_vanishes_for_uniform_k3() {
        let s = spec(5, 3);
        let d = Distribution::Uniform;
        for u in [0.01, 0.3, 0.5, 0.99] {
            let r = characterization_residual(&s, &d, |z| Ok(4.0 / 3.0 * z), u).unwrap();
            assert!(r.abs() <= 1e-14, "u={u}: {r}");
        }
    }

    #[test]
    fn residual_of_truthful_bidding_is_one_quarter() {
        // ∫₀ᵘ (u − z) z² dz / (u · u³ · B(3, 1)) = (u⁴/12)/(u⁴/3)
        let s = spec(5, 3);
        for u in [0.2, 0.5, 0.9] {
            let r = characterization_residual(&s, &Distribution::Uniform, Ok, u).unwrap();
            assert!((r - 0.25).abs() < 1e-14, "u={u}: {r}");
        }
    }

    #[test]
    fn residual_of_equilibrium_is_small() {
        for d in [Distribution::Uniform, Distribution::exponential(1.0).unwrap(), Distribution::fat_tail(2.0).unwrap(), Distribution::power(2.0).unwrap()] {
            for (n, k) in [(5, 3), (7, 4), (10, 6)] {
                let s = spec(n, k);
                let r = characterization_residual(&s, &d, |z| bid_generic(&s, &d, z), 0.5).unwrap();
                assert!(r.abs() <= 1e-8, "{d} n={n} k={k}: {r}");
            }
        }
    }

    #[test]
    fn panels_are_sorted_and_cover_the_interval() {
        for (u, half) in [(0.005, true), (0.5, false), (0.9, true), (0.995, false)] {
            let b = residual_panels(u, half);
            assert_eq!(b[0], 0.0);
            assert_eq!(*b.last().unwrap(), u);
            assert!(b.windows(2).all(|w| w[0] < w[1]), "{b:?}");
        }
    }

    #[test]
    fn residual_errors() {
        let s = spec(5, 3);
        assert!(matches!(characterization_residual(&s, &Distribution::Uniform, Ok, 1e-7), Err(Error::Quadrature(_))));
        assert!(characterization_residual(&spec(5, 2), &Distribution::Uniform, Ok, 0.5).is_err());
        assert!(characterization_residual(&s, &Distribution::Uniform, Ok, 1.0).is_err());
    }

    fn curve_of(pts: &[(f64, f64)]) -> BidCurve {
        BidCurve {
            spec: spec(5, 3),
            dist: Distribution::Uniform,
            points: pts.iter().map(|&(x, beta)| BidPoint { u: x, x, beta }).collect(),
        }
    }

    #[test]
    fn monotonicity() {
        let c = bid_curve(&spec(5, 3), &Distribution::Uniform, &default_grid()).unwrap();
        let (ok, slope) = check_monotone(&c);
        assert!(ok);
        assert!((slope - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(check_monotone(&curve_of(&[(0.1, 1.0), (0.2, 1.0), (0.3, 1.0)])), (false, 0.0));
        let (ok, _) = check_monotone(&curve_of(&[(0.1, 1.0), (0.2, 0.9)]));
        assert!(!ok);
        let e = Distribution::exponential(1.0).unwrap();
        let c = bid_curve(&spec(5, 4), &e, &default_grid()).unwrap();
        assert!(check_monotone(&c).0);
    }

    #[test]
    fn psi_examples() {
        let dev = psi_crosscheck(&spec(5, 3), &Distribution::Uniform, 0.5).unwrap();
        assert!(dev <= 1e-6, "{dev}");
        let dev = psi_crosscheck(&spec(6, 3), &Distribution::power(1.0).unwrap(), 0.3).unwrap();
        assert!(dev <= 1e-6, "{dev}");
        let dev = psi_crosscheck(&spec(6, 4), &Distribution::exponential(1.0).unwrap(), 0.5).unwrap();
        assert!(dev <= 1e-4, "{dev}");
        assert!(psi_crosscheck(&spec(6, 4), &Distribution::Uniform, 0.03).is_err());
        assert!(psi_crosscheck(&spec(6, 2), &Distribution::Uniform, 0.5).is_err());
    }

    #[test]
    fn psi_is_tight_for_k3() {
        let dists = [
            Distribution::Uniform,
            Distribution::power(0.5).unwrap(),
            Distribution::power(3.0).unwrap(),
            Distribution::exponential(2.0).unwrap(),
            Distribution::fat_tail(3.0).unwrap(),
        ];
        for d in &dists {
            for n in 4..=12 {
                for u in crate::dists::linear_grid(0.1, 0.9, 9) {
                    let dev = psi_crosscheck(&spec(n, 3), d, u).unwrap();
                    assert!(dev <= 1e-6, "{d} n={n} u={u}: {dev}");
                }
            }
        }
    }

    #[test]
    fn lemma1_examples() {
        assert!(lemma1_check(1.0, 0, |_| 1.0, 0.5).unwrap() <= 1e-8);
        assert!(lemma1_check(1.0, 1, |z| z, 0.5).unwrap() <= 1e-3);
        assert!(lemma1_check(2.0, 2, |z| z * z, 0.5).unwrap() <= 1e-3);
        assert!(lemma1_check(1.0, 4, |z| z, 0.5).is_err());
        assert!(lemma1_check(1.0, 1, |z| z, 0.95).is_err());
        assert!(lemma1_check(0.0, 1, |z| z, 0.5).is_err());
    }

    #[test]
    fn central_derivative_of_polynomials() {
        // exact up to roundoff for degree ≤ m + 3 after Richardson
        let f = |x: f64| Ok(x.powi(5));
        let d3 = central_derivative(f, 0.5, 3, 1e-3).unwrap();
        assert!((d3 - 60.0 * 0.25).abs() < 1e-6, "{d3}");
        assert!(matches!(central_derivative(f, 0.001, 2, 1e-3), Err(Error::Stencil(_))));
    }

    #[test]
    fn report_for_uniform() {
        let r = full_report(&spec(5, 3), &Distribution::Uniform).unwrap();
        assert!(r.passed);
        assert!(r.monotone);
        assert!(r.max_residual.unwrap() <= 1e-12);
        assert_eq!(r.residuals.len(), r.grid.len());
        let back = VerificationReport::from_toml(&r.to_toml()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn report_skips_residual_for_vickrey() {
        let r = full_report(&spec(5, 2), &Distribution::Uniform).unwrap();
        assert_eq!(r.residual_status, CheckStatus::Skipped);
        assert_eq!(r.psi_status, CheckStatus::Skipped);
        assert!(r.residuals.is_empty());
        assert!(r.passed);
        assert!(r.to_toml().contains("residual_status = \"skipped\""));
    }

    #[test]
    fn report_for_exponential() {
        let r = full_report(&spec(10, 5), &Distribution::exponential(1.0).unwrap()).unwrap();
        assert!(r.max_residual.unwrap() <= 1e-8, "{:?}", r.max_residual);
        assert!(r.derivative_condition);
        assert!(r.passed);
    }
}
