//! Kernel expressions such as `brownian(diffusion=0.1) + matern32(lengthscale=5, variance=1) * cosine(period=24, variance=1)`.
//!
//! Grammar (`*` binds tighter than `+`):
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := factor ('*' factor)*
//! factor := name '(' [arg (',' arg)*] ')' | '(' expr ')'
//! arg    := key '=' number
//! ```
//!
//! Several latent kernels are written as a `;`-separated list.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::StateSpaceKernel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum KernelExpr {
    Matern32 { lengthscale: f64, variance: f64 },
    Cosine { period: f64, variance: f64 },
    Brownian { diffusion: f64 },
    Sum(Box<KernelExpr>, Box<KernelExpr>),
    Product(Box<KernelExpr>, Box<KernelExpr>),
}

impl KernelExpr {
    pub fn matern32(lengthscale: f64, variance: f64) -> Self {
        KernelExpr::Matern32 {
            lengthscale,
            variance,
        }
    }

    pub fn cosine(period: f64, variance: f64) -> Self {
        KernelExpr::Cosine { period, variance }
    }

    pub fn brownian(diffusion: f64) -> Self {
        KernelExpr::Brownian { diffusion }
    }

    pub fn plus(self, other: KernelExpr) -> Self {
        KernelExpr::Sum(Box::new(self), Box::new(other))
    }

    pub fn times(self, other: KernelExpr) -> Self {
        KernelExpr::Product(Box::new(self), Box::new(other))
    }

    pub fn build(&self) -> Result<StateSpaceKernel> {
        match self {
            KernelExpr::Matern32 {
                lengthscale,
                variance,
            } => StateSpaceKernel::matern32(*lengthscale, *variance),
            KernelExpr::Cosine { period, variance } => StateSpaceKernel::cosine(*period, *variance),
            KernelExpr::Brownian { diffusion } => StateSpaceKernel::brownian(*diffusion),
            KernelExpr::Sum(a, b) => Ok(StateSpaceKernel::add(&a.build()?, &b.build()?)),
            KernelExpr::Product(a, b) => StateSpaceKernel::multiply(&a.build()?, &b.build()?),
        }
    }

    /// Leaf parameters in depth-first order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut Vec<f64>) {
        match self {
            KernelExpr::Matern32 {
                lengthscale,
                variance,
            } => out.extend([*lengthscale, *variance]),
            KernelExpr::Cosine { period, variance } => out.extend([*period, *variance]),
            KernelExpr::Brownian { diffusion } => out.push(*diffusion),
            KernelExpr::Sum(a, b) | KernelExpr::Product(a, b) => {
                a.collect_params(out);
                b.collect_params(out);
            }
        }
    }

    /// Same structure with parameters replaced in [`params`](Self::params) order.
    pub fn with_params(&self, values: &[f64]) -> Result<Self> {
        let mut it = values.iter().copied();
        let out = self.replace_params(&mut it)?;
        if it.next().is_some() {
            return Err(Error::Config(format!(
                "too many parameters for kernel `{self}`"
            )));
        }
        Ok(out)
    }

    fn replace_params(&self, it: &mut impl Iterator<Item = f64>) -> Result<Self> {
        let mut next = || {
            it.next()
                .ok_or_else(|| Error::Config(format!("too few parameters for kernel `{self}`")))
        };
        Ok(match self {
            KernelExpr::Matern32 { .. } => KernelExpr::Matern32 {
                lengthscale: next()?,
                variance: next()?,
            },
            KernelExpr::Cosine { .. } => KernelExpr::Cosine {
                period: next()?,
                variance: next()?,
            },
            KernelExpr::Brownian { .. } => KernelExpr::Brownian {
                diffusion: next()?,
            },
            KernelExpr::Sum(a, b) => {
                KernelExpr::Sum(Box::new(a.replace_params(it)?), Box::new(b.replace_params(it)?))
            }
            KernelExpr::Product(a, b) => KernelExpr::Product(
                Box::new(a.replace_params(it)?),
                Box::new(b.replace_params(it)?),
            ),
        })
    }
}

impl fmt::Display for KernelExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelExpr::Matern32 {
                lengthscale,
                variance,
            } => write!(f, "matern32(lengthscale={lengthscale:?}, variance={variance:?})"),
            KernelExpr::Cosine { period, variance } => {
                write!(f, "cosine(period={period:?}, variance={variance:?})")
            }
            KernelExpr::Brownian { diffusion } => write!(f, "brownian(diffusion={diffusion:?})"),
            // Operators parse left-associatively, so a right operand of the
            // same operator keeps its parentheses.
            KernelExpr::Sum(a, b) => match **b {
                KernelExpr::Sum(..) => write!(f, "{a} + ({b})"),
                _ => write!(f, "{a} + {b}"),
            },
            KernelExpr::Product(a, b) => {
                match **a {
                    KernelExpr::Sum(..) => write!(f, "({a})")?,
                    _ => write!(f, "{a}")?,
                }
                match **b {
                    KernelExpr::Sum(..) | KernelExpr::Product(..) => write!(f, " * ({b})"),
                    _ => write!(f, " * {b}"),
                }
            }
        }
    }
}

impl FromStr for KernelExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tokens = tokenize(s)?;
        let mut p = Parser { tokens, pos: 0 };
        let expr = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(expr)
    }
}

impl Serialize for KernelExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for KernelExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a `;`-separated list of latent kernel expressions.
pub fn parse_latent_list(s: &str) -> Result<Vec<KernelExpr>> {
    let out: Vec<KernelExpr> = s
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config("empty kernel list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(f64),
    Sym(char),
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "()+*,=".contains(c) {
            out.push(Token::Sym(c));
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if c.is_ascii_digit() || c == '.' || c == '-' {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("invalid number `{text}` in kernel expression")))?;
            out.push(Token::Number(v));
        } else {
            return Err(Error::Config(format!(
                "unexpected character `{c}` in kernel expression `{s}`"
            )));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn error(&self, msg: &str) -> Error {
        Error::Config(format!("kernel expression: {msg} at token {}", self.pos))
    }

    fn peek_sym(&self, c: char) -> bool {
        matches!(self.tokens.get(self.pos), Some(Token::Sym(s)) if *s == c)
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.peek_sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<KernelExpr> {
        let mut lhs = self.term()?;
        while self.peek_sym('+') {
            self.pos += 1;
            lhs = lhs.plus(self.term()?);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<KernelExpr> {
        let mut lhs = self.factor()?;
        while self.peek_sym('*') {
            self.pos += 1;
            lhs = lhs.times(self.factor()?);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<KernelExpr> {
        if self.peek_sym('(') {
            self.pos += 1;
            let e = self.expr()?;
            self.expect_sym(')')?;
            return Ok(e);
        }
        let name = match self.tokens.get(self.pos) {
            Some(Token::Ident(n)) => n.clone(),
            _ => return Err(self.error("expected kernel name")),
        };
        self.pos += 1;
        self.expect_sym('(')?;
        let mut args: Vec<(String, f64)> = Vec::new();
        while !self.peek_sym(')') {
            let key = match self.tokens.get(self.pos) {
                Some(Token::Ident(k)) => k.clone(),
                _ => return Err(self.error("expected argument name")),
            };
            self.pos += 1;
            self.expect_sym('=')?;
            let value = match self.tokens.get(self.pos) {
                Some(Token::Number(v)) => *v,
                _ => return Err(self.error("expected number")),
            };
            self.pos += 1;
            args.push((key, value));
            if !self.peek_sym(')') {
                self.expect_sym(',')?;
            }
        }
        self.pos += 1;
        leaf(&name, &args)
    }
}

fn leaf(name: &str, args: &[(String, f64)]) -> Result<KernelExpr> {
    let get = |key: &str, default: Option<f64>| -> Result<f64> {
        args.iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .or(default)
            .ok_or_else(|| Error::Config(format!("kernel `{name}` is missing `{key}`")))
    };
    let allowed: &[&str] = match name {
        "matern32" => &["lengthscale", "variance"],
        "cosine" => &["period", "variance"],
        "brownian" => &["diffusion"],
        _ => return Err(Error::Config(format!("unknown kernel `{name}`"))),
    };
    if let Some((k, _)) = args.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        return Err(Error::Config(format!("kernel `{name}` has no argument `{k}`")));
    }
    Ok(match name {
        "matern32" => KernelExpr::matern32(get("lengthscale", None)?, get("variance", Some(1.0))?),
        "cosine" => KernelExpr::cosine(get("period", None)?, get("variance", Some(1.0))?),
        _ => KernelExpr::brownian(get("diffusion", None)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_leaf_kernels() {
        let e: KernelExpr = "matern32(lengthscale=130, variance=1)".parse().unwrap();
        assert_eq!(e, KernelExpr::matern32(130.0, 1.0));
        let e: KernelExpr = "cosine(period=24, variance=1)".parse().unwrap();
        assert_eq!(e, KernelExpr::cosine(24.0, 1.0));
        let e: KernelExpr = "brownian(diffusion=0.1)".parse().unwrap();
        assert_eq!(e, KernelExpr::brownian(0.1));
    }

    #[test]
    fn precedence_and_parentheses() {
        let e: KernelExpr = "brownian(diffusion=1e-2) + matern32(lengthscale=5) * cosine(period=24)"
            .parse()
            .unwrap();
        let want = KernelExpr::brownian(0.01)
            .plus(KernelExpr::matern32(5.0, 1.0).times(KernelExpr::cosine(24.0, 1.0)));
        assert_eq!(e, want);
        let e: KernelExpr = "(matern32(lengthscale=1) + brownian(diffusion=2)) * cosine(period=3)"
            .parse()
            .unwrap();
        assert!(matches!(e, KernelExpr::Product(..)));
        assert_eq!(e.to_string().parse::<KernelExpr>().unwrap(), e);
    }

    #[test]
    fn display_round_trips_exact_values() {
        let e = KernelExpr::matern32(0.1 + 0.2, 1.0 / 3.0).plus(KernelExpr::brownian(1e-300));
        let back: KernelExpr = e.to_string().parse().unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "",
            "matern(lengthscale=1)",
            "matern32(period=1)",
            "matern32(lengthscale=)",
            "matern32(lengthscale=1",
            "cosine(period=1) +",
            "cosine(period=1) cosine(period=2)",
            "cosine(period=1) $",
        ] {
            assert!(bad.parse::<KernelExpr>().is_err(), "{bad:?} parsed");
        }
    }

    #[test]
    fn latent_list() {
        let l = parse_latent_list("matern32(lengthscale=130); matern32(lengthscale=10)").unwrap();
        assert_eq!(l.len(), 2);
        assert!(parse_latent_list(" ; ").is_err());
    }

    #[test]
    fn params_replace_in_order() {
        let e = KernelExpr::brownian(0.1)
            .plus(KernelExpr::matern32(5.0, 1.0).times(KernelExpr::cosine(24.0, 2.0)));
        assert_eq!(e.params(), vec![0.1, 5.0, 1.0, 24.0, 2.0]);
        let e2 = e.with_params(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(e2.params(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(e.with_params(&[1.0]).is_err());
        assert!(e.with_params(&[1.0; 6]).is_err());
    }
}
