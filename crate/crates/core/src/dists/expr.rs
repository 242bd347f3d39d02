//! Quantile expressions for user-supplied distributions.
//!
//! Grammar (whitespace insignificant, `#` starts a comment running to end of line):
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := atom ("^" unary)?          right-associative
//! atom    := number | "u" | ("exp" | "ln") "(" expr ")" | "(" expr ")"
//! number  := digits ["." digits] [("e" | "E") ["+" | "-"] digits]
//! ```
//!
//! `u` is the quantile level. Example: `-ln(1 - u) / 2` is the exponential
//! quantile with rate 2.

use std::fmt;

use crate::error::{Error, Result};
use crate::jets::Jet;

const MAX_DEPTH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Ln(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, depth: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Plain floating-point evaluation. Non-finite results are returned as is.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var => u,
            Expr::Neg(a) => -a.eval(u),
            Expr::Add(a, b) => a.eval(u) + b.eval(u),
            Expr::Sub(a, b) => a.eval(u) - b.eval(u),
            Expr::Mul(a, b) => a.eval(u) * b.eval(u),
            Expr::Div(a, b) => a.eval(u) / b.eval(u),
            Expr::Pow(a, b) => a.eval(u).powf(b.eval(u)),
            Expr::Exp(a) => a.eval(u).exp(),
            Expr::Ln(a) => a.eval(u).ln(),
        }
    }

    fn depends_on_u(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var => true,
            Expr::Neg(a) | Expr::Exp(a) | Expr::Ln(a) => a.depends_on_u(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on_u() || b.depends_on_u()
            }
        }
    }

    /// Evaluates the expression on a jet, giving its derivatives at `x.anchor()`.
    pub fn eval_jet(&self, x: &Jet) -> Result<Jet> {
        let konst = |c: f64| Jet::constant(c, x.anchor(), x.order());
        Ok(match self {
            Expr::Num(c) => konst(*c),
            Expr::Var => *x,
            Expr::Neg(a) => -a.eval_jet(x)?,
            Expr::Add(a, b) => a.eval_jet(x)? + b.eval_jet(x)?,
            Expr::Sub(a, b) => a.eval_jet(x)? - b.eval_jet(x)?,
            Expr::Mul(a, b) => a.eval_jet(x)? * b.eval_jet(x)?,
            Expr::Div(a, b) => a.eval_jet(x)?.div(&b.eval_jet(x)?)?,
            Expr::Pow(a, b) => {
                let base = a.eval_jet(x)?;
                if b.depends_on_u() {
                    (base.ln()? * b.eval_jet(x)?).exp()
                } else {
                    base.powf(b.eval(x.anchor()))?
                }
            }
            Expr::Exp(a) => a.eval_jet(x)?.exp(),
            Expr::Ln(a) => a.eval_jet(x)?.ln()?,
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_min(f, 0)
    }
}

impl Expr {
    /// Binding strength, matching the grammar levels.
    fn prec(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::Var | Expr::Exp(_) | Expr::Ln(_) => 5,
        }
    }

    /// Writes `self`, parenthesized only if it binds looser than `min`.
    fn write_min(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let wrap = self.prec() < min;
        if wrap {
            f.write_str("(")?;
        }
        let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr, p: u8| {
            a.write_min(f, p)?;
            f.write_str(op)?;
            b.write_min(f, p + 1)
        };
        match self {
            Expr::Num(c) => write!(f, "{c:?}")?,
            Expr::Var => f.write_str("u")?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.write_min(f, 3)?;
            }
            Expr::Add(a, b) => bin(f, a, " + ", b, 1)?,
            Expr::Sub(a, b) => bin(f, a, " - ", b, 1)?,
            Expr::Mul(a, b) => bin(f, a, " * ", b, 2)?,
            Expr::Div(a, b) => bin(f, a, " / ", b, 2)?,
            Expr::Pow(a, b) => {
                a.write_min(f, 5)?;
                f.write_str("^")?;
                b.write_min(f, 3)?;
            }
            Expr::Exp(a) => write!(f, "exp({a})")?,
            Expr::Ln(a) => write!(f, "ln({a})")?,
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(&c) = self.src.get(self.pos) {
            if c == b'#' {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                break;
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        self.enter()?;
        let e = if self.eat(b'-') { Expr::Neg(Box::new(self.unary()?)) } else { self.power()? };
        self.depth -= 1;
        Ok(e)
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = &self.src[start..self.pos];
                match word {
                    b"u" => Ok(Expr::Var),
                    b"exp" | b"ln" => {
                        if !self.eat(b'(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        let arg = Box::new(self.expr()?);
                        if !self.eat(b')') {
                            return Err(self.err("expected ')'"));
                        }
                        Ok(if word == b"exp" { Expr::Exp(arg) } else { Expr::Ln(arg) })
                    }
                    _ => {
                        self.pos = start;
                        Err(self.err("unknown identifier"))
                    }
                }
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(self.err("malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.err("malformed exponent"));
            }
        }
        // the slice is pure ASCII digits/signs/dots by construction
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => Err(Error::Parse { pos: start, msg: format!("number '{text}' out of range") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2 * u ^ 2 ^ 1").unwrap();
        assert_eq!(e.eval(3.0), 19.0);
        assert_eq!(Expr::parse("-u^2").unwrap().eval(3.0), -9.0);
        assert_eq!(Expr::parse("8 / 4 / 2").unwrap().eval(0.0), 1.0);
        assert_eq!(Expr::parse("2 - 3 - 4").unwrap().eval(0.0), -5.0);
        assert_eq!(Expr::parse("2^-1").unwrap().eval(0.0), 0.5);
    }

    #[test]
    fn functions_and_comments() {
        let e = Expr::parse("# exponential, rate 1\n-ln(1 - u)").unwrap();
        assert!((e.eval(0.5) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(Expr::parse("exp(0)").unwrap().eval(0.0), 1.0);
        assert_eq!(Expr::parse("1.5e1 + .5").unwrap().eval(0.0), 15.5);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in ["", "u +", "(u", "sin(u)", "1e", "u u", "ln u", "2 $ 3", ".", "exp()"] {
            assert!(matches!(Expr::parse(bad), Err(Error::Parse { .. })), "accepted {bad:?}");
        }
    }

    #[test]
    fn deep_nesting_is_bounded() {
        let src = "(".repeat(500) + "u" + &")".repeat(500);
        assert!(Expr::parse(&src).is_err());
        let src = "-".repeat(500) + "u";
        assert!(Expr::parse(&src).is_err());
    }

    #[test]
    fn jet_evaluation_matches_closed_form() {
        // (1-u)^(-1/2): derivatives (1/2)(3/2)…(1-u)^{-1/2-i}
        let e = Expr::parse("(1 - u) ^ (-1/2)").unwrap();
        let j = e.eval_jet(&Jet::variable(0.5, 3)).unwrap();
        let mut rising = 1.0;
        for i in 0..=3 {
            let expected = rising * 0.5f64.powf(-0.5 - i as f64);
            assert!((j.derivative(i) - expected).abs() <= 1e-12 * expected);
            rising *= 0.5 + i as f64;
        }
        // exponent depending on u: u^u, derivative u^u (ln u + 1)
        let e = Expr::parse("u ^ u").unwrap();
        let j = e.eval_jet(&Jet::variable(0.5, 1)).unwrap();
        let v = 0.5f64.powf(0.5);
        assert!((j.derivative(1) - v * (0.5f64.ln() + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn display_uses_minimal_parentheses() {
        for (src, want) in [
            ("((1 - u))", "1.0 - u"),
            ("1 - (u - 2)", "1.0 - (u - 2.0)"),
            ("(1 - u) - 2", "1.0 - u - 2.0"),
            ("(1 - u) ^ (-1/2)", "(1.0 - u)^(-1.0 / 2.0)"),
            ("u ^ -2", "u^-2.0"),
            ("u ^ 2 ^ 3", "u^2.0^3.0"),
            ("(u ^ 2) ^ 3", "(u^2.0)^3.0"),
            ("-u ^ 2", "-u^2.0"),
            ("(-u) ^ 2", "(-u)^2.0"),
            ("2 / (u * 3)", "2.0 / (u * 3.0)"),
        ] {
            assert_eq!(Expr::parse(src).unwrap().to_string(), want, "{src}");
        }
    }

    #[test]
    fn long_chains_survive_reprinting() {
        let src = vec!["u"; 200].join(" + ");
        let e = Expr::parse(&src).unwrap();
        assert_eq!(Expr::parse(&e.to_string()).unwrap(), e);
    }

    #[test]
    fn overflowing_literals_are_rejected() {
        assert!(matches!(Expr::parse("1e999 * u"), Err(Error::Parse { pos: 0, .. })));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(0.0f64..1e3).prop_map(Expr::Num), Just(Expr::Var)];
        leaf.prop_recursive(6, 48, 2, |inner| {
            let b = |e: Expr| Box::new(e);
            prop_oneof![
                inner.clone().prop_map(move |a| Expr::Neg(b(a))),
                inner.clone().prop_map(move |a| Expr::Exp(b(a))),
                inner.clone().prop_map(move |a| Expr::Ln(b(a))),
                (inner.clone(), inner.clone(), 0..5u8).prop_map(move |(x, y, op)| {
                    let (x, y) = (b(x), b(y));
                    match op {
                        0 => Expr::Add(x, y),
                        1 => Expr::Sub(x, y),
                        2 => Expr::Mul(x, y),
                        3 => Expr::Div(x, y),
                        _ => Expr::Pow(x, y),
                    }
                }),
            ]
        })
    }

    proptest! {
        #[test]
        fn printed_trees_reparse_exactly(e in arb_expr()) {
            let printed = e.to_string();
            prop_assert_eq!(Expr::parse(&printed).unwrap(), e, "{}", printed);
        }

        #[test]
        fn display_reparses_to_same_value(a in 0.1f64..5.0, b in 0.1f64..5.0, u in 0.01f64..0.99) {
            let src = format!("{a} * u ^ {b} + ln(1 + u) / {a} - exp(-u)");
            let e = Expr::parse(&src).unwrap();
            let again = Expr::parse(&e.to_string()).unwrap();
            prop_assert_eq!(&e, &again);
            prop_assert_eq!(e.eval(u), again.eval(u));
        }

        #[test]
        fn never_panics_on_arbitrary_text(s in "[u0-9eElnxp+*/^().# \\-]{0,40}") {
            let _ = Expr::parse(&s);
        }
    }
}
