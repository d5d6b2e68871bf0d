//! Named analytic potential families.
//!
//! A [`Potential`] is a sum of terms written as `name params…` and joined with
//! `+`, e.g. `"linear 1 + gauss 2 0.37 0.1"`. Recognised terms:
//!
//! | term            | value at `x` on `(0, L)`            |
//! |-----------------|-------------------------------------|
//! | `zero`          | `0`                                 |
//! | `linear a`      | `a·x`                               |
//! | `quadratic a`   | `a·x²`                              |
//! | `cosine a k`    | `a·cos(kπx/L)`                      |
//! | `gauss a x0 w`  | `a·exp(−(x−x0)²/(2w²))`             |

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;
// Unused when std is linked: its inherent float methods take precedence.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{input, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Zero,
    Linear { a: f64 },
    Quadratic { a: f64 },
    Cosine { a: f64, k: f64 },
    Gauss { a: f64, x0: f64, w: f64 },
}

impl Term {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            Term::Zero => 0.0,
            Term::Linear { a } => a * x,
            Term::Quadratic { a } => a * x * x,
            Term::Cosine { a, k } => a * (k * PI * x / length).cos(),
            Term::Gauss { a, x0, w } => {
                let d = x - x0;
                a * (-(d * d) / (2.0 * w * w)).exp()
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Zero => write!(f, "zero"),
            Term::Linear { a } => write!(f, "linear {a:?}"),
            Term::Quadratic { a } => write!(f, "quadratic {a:?}"),
            Term::Cosine { a, k } => write!(f, "cosine {a:?} {k:?}"),
            Term::Gauss { a, x0, w } => write!(f, "gauss {a:?} {x0:?} {w:?}"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let name = parts.next().ok_or_else(|| input("empty potential term"))?;
        let params = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| input(alloc::format!("bad number {p:?} in potential term {s:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(input(alloc::format!("non-finite parameter in {s:?}")));
        }
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(input(alloc::format!("term {name:?} takes {n} parameter(s), got {}", params.len())))
            }
        };
        let term = match name {
            "zero" => {
                want(0)?;
                Term::Zero
            }
            "linear" => {
                want(1)?;
                Term::Linear { a: params[0] }
            }
            "quadratic" => {
                want(1)?;
                Term::Quadratic { a: params[0] }
            }
            "cosine" => {
                want(2)?;
                Term::Cosine { a: params[0], k: params[1] }
            }
            "gauss" => {
                want(3)?;
                if params[2] <= 0.0 {
                    return Err(input("gauss width must be positive"));
                }
                Term::Gauss { a: params[0], x0: params[1], w: params[2] }
            }
            other => return Err(input(alloc::format!("unknown potential family {other:?}"))),
        };
        Ok(term)
    }
}

/// Sum of analytic terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    terms: Vec<Term>,
}

impl Potential {
    pub fn zero() -> Self {
        Self { terms: alloc::vec![Term::Zero] }
    }

    pub fn new(terms: Vec<Term>) -> Self {
        if terms.is_empty() {
            Self::zero()
        } else {
            Self { terms }
        }
    }

    pub fn linear(a: f64) -> Self {
        Self::new(alloc::vec![Term::Linear { a }])
    }

    pub fn gauss(a: f64, x0: f64, w: f64) -> Self {
        Self::new(alloc::vec![Term::Gauss { a, x0, w }])
    }

    pub fn constant(c: f64) -> Self {
        Self::new(alloc::vec![Term::Cosine { a: c, k: 0.0 }])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn eval(&self, x: f64, length: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(x, length)).sum()
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        f.write_str(&parts.join(" + "))
    }
}

impl FromStr for Potential {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let terms = s.split('+').map(|t| t.trim().parse()).collect::<Result<Vec<Term>>>()?;
        Ok(Self::new(terms))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_sums() {
        let p: Potential = "linear 1 + gauss 2 0.37 0.1".parse().unwrap();
        assert_eq!(p.terms().len(), 2);
        let again: Potential = p.to_string().parse().unwrap();
        assert_eq!(p, again);
        assert!((p.eval(0.37, 1.0) - 2.37).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_terms() {
        assert!("linear".parse::<Potential>().is_err());
        assert!("wobble 1".parse::<Potential>().is_err());
        assert!("gauss 1 0.5 0".parse::<Potential>().is_err());
        assert!("cosine 1 x".parse::<Potential>().is_err());
    }

    #[test]
    fn cosine_uses_domain_length() {
        let t = Term::Cosine { a: 1.0, k: 2.0 };
        assert!((t.eval(0.5, 2.0) - (PI / 2.0).cos()).abs() < 1e-15);
    }
}
