//! Valuation distributions, handled mainly through their quantile function.
//!
//! Built-in families:
//!
//! | family        | F(x)            | Q(u)                | support  |
//! |---------------|-----------------|---------------------|----------|
//! | `Uniform`     | x               | u                   | [0, 1]   |
//! | `Power(α)`    | x^α             | u^{1/α}             | [0, 1]   |
//! | `Exponential` | 1 − e^{−λx}     | −ln(1 − u)/λ        | [0, ∞)   |
//! | `FatTail(c)`  | 1 − x^{−c}      | (1 − u)^{−1/c}      | [1, ∞)   |
//!
//! A [`CustomDistribution`] is given by a quantile expression; its CDF is
//! recovered by bisection.

mod expr;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use expr::Expr;

use crate::error::{Error, Result};
use crate::jets::{Jet, MAX_ORDER};

/// Lower end of the default quantile grid.
pub const GRID_LO: f64 = 0.005;
/// Upper end of the default quantile grid.
pub const GRID_HI: f64 = 0.995;
/// Number of points in the default quantile grid.
pub const GRID_LEN: usize = 101;

/// `len` equally spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..len).map(|i| lo + (hi - lo) * i as f64 / (len - 1) as f64).collect(),
    }
}

/// The default quantile grid: 101 points on `[0.005, 0.995]`.
pub fn default_grid() -> Vec<f64> {
    linear_grid(GRID_LO, GRID_HI, GRID_LEN)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Support {
    lower: f64,
    upper: f64,
}

impl Support {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && lower >= 0.0 && lower < upper) || upper.is_nan() {
            return Err(Error::Validation(format!("invalid support [{lower}, {upper}]")));
        }
        Ok(Support { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    /// Upper end; `f64::INFINITY` for unbounded supports.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.upper.is_finite()
    }
}

/// A distribution given by a quantile expression.
#[derive(Clone, Debug)]
pub struct CustomDistribution {
    source: Arc<str>,
    expr: Arc<Expr>,
    support: Support,
}

impl CustomDistribution {
    /// Parses and validates a quantile expression.
    ///
    /// The expression must be finite and strictly increasing on the default
    /// grid, with a finite nonnegative value at `u = 0`. The upper end of the
    /// support is its value at `u = 1`, or `+∞` if that is not finite.
    pub fn new(source: &str) -> Result<Self> {
        let expr = Expr::parse(source)?;
        let lower = expr.eval(0.0);
        if !lower.is_finite() || lower < 0.0 {
            return Err(Error::Validation(format!("quantile at u=0 is {lower}; need a finite value ≥ 0")));
        }
        let grid = default_grid();
        let mut prev = lower;
        for &u in &grid {
            let x = expr.eval(u);
            if !x.is_finite() {
                return Err(Error::Validation(format!("quantile not finite at u={u}")));
            }
            if x <= prev {
                return Err(Error::Validation(format!("quantile not strictly increasing at u={u}")));
            }
            prev = x;
        }
        let top = expr.eval(1.0);
        let upper = if top.is_finite() { top } else { f64::INFINITY };
        if upper <= prev {
            return Err(Error::Validation(format!("quantile at u=1 is {top}; not increasing")));
        }
        let support = Support::new(lower, upper)?;
        Ok(CustomDistribution { source: source.trim().into(), expr: Arc::new(expr), support })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl PartialEq for CustomDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    Uniform,
    Power { alpha: f64 },
    Exponential { lambda: f64 },
    FatTail { c: f64 },
    Custom(CustomDistribution),
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Validation(format!("{name} must be a positive finite number, got {v}")))
    }
}

impl Distribution {
    pub fn power(alpha: f64) -> Result<Self> {
        Ok(Distribution::Power { alpha: positive("alpha", alpha)? })
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        Ok(Distribution::Exponential { lambda: positive("lambda", lambda)? })
    }

    pub fn fat_tail(c: f64) -> Result<Self> {
        Ok(Distribution::FatTail { c: positive("c", c)? })
    }

    pub fn custom(source: &str) -> Result<Self> {
        Ok(Distribution::Custom(CustomDistribution::new(source)?))
    }

    pub fn support(&self) -> Support {
        match self {
            Distribution::Uniform | Distribution::Power { .. } => Support { lower: 0.0, upper: 1.0 },
            Distribution::Exponential { .. } => Support { lower: 0.0, upper: f64::INFINITY },
            Distribution::FatTail { .. } => Support { lower: 1.0, upper: f64::INFINITY },
            Distribution::Custom(c) => c.support,
        }
    }

    /// Short identifier in the same grammar accepted by [`FromStr`].
    pub fn id(&self) -> String {
        self.to_string()
    }

    /// Distribution function `F(x)`. Values above a finite upper support clamp to 1.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        let s = self.support();
        if x.is_nan() || x < s.lower {
            return Err(Error::domain(format!("cdf: x={x} below support lower end {}", s.lower)));
        }
        if x >= s.upper {
            return Ok(1.0);
        }
        Ok(match self {
            Distribution::Uniform => x,
            Distribution::Power { alpha } => x.powf(*alpha),
            Distribution::Exponential { lambda } => -(-lambda * x).exp_m1(),
            Distribution::FatTail { c } => -(-c * x.ln()).exp_m1(),
            Distribution::Custom(d) => invert_quantile(&d.expr, x),
        })
    }

    /// Density `f(x)`, defined on the closed support.
    pub fn pdf(&self, x: f64) -> Result<f64> {
        let s = self.support();
        if x.is_nan() || x < s.lower || x > s.upper {
            return Err(Error::domain(format!("pdf: x={x} outside support [{}, {}]", s.lower, s.upper)));
        }
        Ok(match self {
            Distribution::Uniform => 1.0,
            Distribution::Power { alpha } => alpha * x.powf(alpha - 1.0),
            Distribution::Exponential { lambda } => lambda * (-lambda * x).exp(),
            Distribution::FatTail { c } => c * x.powf(-c - 1.0),
            Distribution::Custom(d) => {
                let u = invert_quantile(&d.expr, x);
                let q = d.expr.eval_jet(&Jet::variable(u, 1))?;
                1.0 / q.derivative(1)
            }
        })
    }

    /// Quantile function `Q(u)`.
    ///
    /// `u = 1` is only accepted for bounded supports.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("quantile level {u} outside [0, 1]")));
        }
        if u == 1.0 && !self.support().is_bounded() {
            return Err(Error::Range("quantile at u=1 of an unbounded distribution".into()));
        }
        Ok(match self {
            Distribution::Uniform => u,
            Distribution::Power { alpha } => u.powf(alpha.recip()),
            Distribution::Exponential { lambda } => -(-u).ln_1p() / lambda,
            Distribution::FatTail { c } => (-(-u).ln_1p() / c).exp(),
            Distribution::Custom(d) => {
                if u == 1.0 {
                    d.support.upper
                } else {
                    d.expr.eval(u)
                }
            }
        })
    }

    /// Jet of `Q` at `u`: coefficient `i` is `Q⁽ⁱ⁾(u)/i!`.
    pub fn quantile_jet(&self, u: f64, order: usize) -> Result<Jet> {
        if order > MAX_ORDER {
            return Err(Error::OrderTooHigh(order));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::domain(format!("quantile level {u} outside [0, 1]")));
        }
        let t = Jet::variable(u, order);
        let q = match self {
            Distribution::Uniform => t,
            Distribution::Power { alpha } => t.powf(alpha.recip())?,
            Distribution::Exponential { lambda } => -(1.0 - t).ln()? * lambda.recip(),
            Distribution::FatTail { c } => (1.0 - t).powf(-c.recip())?,
            Distribution::Custom(d) => d.expr.eval_jet(&t)?,
        };
        if !q.is_finite() {
            return Err(Error::domain(format!("quantile derivatives diverge at u={u}")));
        }
        Ok(q)
    }
}

/// Solves `Q(u) = x` for `u` by bisection on `[0, 1]`.
fn invert_quantile(expr: &Expr, x: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let q = expr.eval(mid);
        if q < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick whichever bracket end reproduces x more closely
    if (expr.eval(lo) - x).abs() <= (expr.eval(hi) - x).abs() {
        lo
    } else {
        hi
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Power { alpha } => write!(f, "power:alpha={alpha}"),
            Distribution::Exponential { lambda } => write!(f, "exp:lambda={lambda}"),
            Distribution::FatTail { c } => write!(f, "fattail:c={c}"),
            Distribution::Custom(d) => write!(f, "custom:expr={}", d.source),
        }
    }
}

/// Parses the distribution grammar:
/// `uniform`, `power:alpha=<real>`, `exp:lambda=<real>`, `fattail:c=<real>`,
/// `custom:file=<path>` or `custom:expr=<quantile expression>`.
///
/// `custom:file=` reads the file from disk.
impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, arg) = match s.split_once(':') {
            Some((fam, rest)) => (fam, Some(rest)),
            None => (s, None),
        };
        let param = |key: &str| -> Result<&str> {
            let arg = arg.ok_or_else(|| Error::Config(format!("'{family}' needs '{key}=<value>'")))?;
            match arg.split_once('=') {
                Some((k, v)) if k.trim() == key => Ok(v.trim()),
                _ => Err(Error::Config(format!("'{family}' expects '{key}=<value>', got '{arg}'"))),
            }
        };
        let real = |key: &str| -> Result<f64> {
            let v = param(key)?;
            v.parse::<f64>().map_err(|_| Error::Config(format!("{key}: '{v}' is not a number")))
        };
        match family {
            "uniform" if arg.is_none() => Ok(Distribution::Uniform),
            "power" => Distribution::power(real("alpha")?),
            "exp" => Distribution::exponential(real("lambda")?),
            "fattail" => Distribution::fat_tail(real("c")?),
            "custom" => {
                let arg = arg.ok_or_else(|| Error::Config("'custom' needs 'file=<path>' or 'expr=<q>'".into()))?;
                match arg.split_once('=') {
                    Some(("file", path)) => {
                        let text = std::fs::read_to_string(path.trim())
                            .map_err(|e| Error::Config(format!("cannot read '{}': {e}", path.trim())))?;
                        Distribution::custom(&text)
                    }
                    Some(("expr", src)) => Distribution::custom(src),
                    _ => Err(Error::Config(format!("'custom' expects 'file=<path>' or 'expr=<q>', got '{arg}'"))),
                }
            }
            _ => Err(Error::Config(format!("unknown distribution '{s}'"))),
        }
    }
}

/// Parses a distribution spec without touching the filesystem; `custom:file=` is rejected.
pub fn parse_spec_offline(s: &str) -> Result<Distribution> {
    if s.trim_start().starts_with("custom:file") {
        return Err(Error::Config("file-backed distributions are not allowed here".into()));
    }
    s.parse()
}
