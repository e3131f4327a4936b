//! Multivariate polynomials in the position coordinates `x1, x2, x3`, used to
//! describe position-dependent metric coefficients with exact derivatives.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Maximum number of position variables.
pub const MAX_VARS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
struct Monomial {
    coef: f64,
    powers: [u32; MAX_VARS],
}

/// A polynomial `Σ c · x1^p1 · x2^p2 · x3^p3`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: Vec<Monomial>,
}

/// Value, gradient and Hessian of a polynomial at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyJet {
    pub value: f64,
    pub grad: [f64; MAX_VARS],
    pub hess: [[f64; MAX_VARS]; MAX_VARS],
}

fn pow_derivs(x: f64, p: u32) -> (f64, f64, f64) {
    // x^p, p x^(p-1), p (p-1) x^(p-2)
    match p {
        0 => (1.0, 0.0, 0.0),
        1 => (x, 1.0, 0.0),
        _ => {
            let pm2 = x.powi(p as i32 - 2);
            let pf = p as f64;
            (pm2 * x * x, pf * pm2 * x, pf * (pf - 1.0) * pm2)
        }
    }
}

impl Poly {
    pub fn constant(c: f64) -> Self {
        if c == 0.0 {
            return Self::default();
        }
        Poly {
            terms: vec![Monomial {
                coef: c,
                powers: [0; MAX_VARS],
            }],
        }
    }

    /// Adds `coef · Π x_i^powers[i]`.
    pub fn with_term(mut self, coef: f64, powers: &[u32]) -> Self {
        let mut p = [0u32; MAX_VARS];
        for (slot, &e) in p.iter_mut().zip(powers) {
            *slot = e;
        }
        if let Some(m) = self.terms.iter_mut().find(|m| m.powers == p) {
            m.coef += coef;
        } else {
            self.terms.push(Monomial { coef, powers: p });
        }
        self.terms.retain(|m| m.coef != 0.0);
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|m| m.powers == [0; MAX_VARS])
    }

    /// Highest variable index (1-based) that appears, 0 for constants.
    pub fn max_variable(&self) -> usize {
        self.terms
            .iter()
            .flat_map(|m| m.powers.iter().enumerate().filter(|(_, &e)| e > 0))
            .map(|(i, _)| i + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|m| {
                m.powers
                    .iter()
                    .zip(x.iter().chain(std::iter::repeat(&0.0)))
                    .fold(m.coef, |acc, (&e, &xi)| acc * pow_derivs(xi, e).0)
            })
            .sum()
    }

    pub fn jet(&self, x: &[f64]) -> PolyJet {
        let mut out = PolyJet {
            value: 0.0,
            grad: [0.0; MAX_VARS],
            hess: [[0.0; MAX_VARS]; MAX_VARS],
        };
        let mut xs = [0.0; MAX_VARS];
        for (slot, &v) in xs.iter_mut().zip(x) {
            *slot = v;
        }
        for m in &self.terms {
            let d: [(f64, f64, f64); MAX_VARS] =
                std::array::from_fn(|i| pow_derivs(xs[i], m.powers[i]));
            let prod_except = |skip: &[usize]| -> f64 {
                (0..MAX_VARS)
                    .filter(|i| !skip.contains(i))
                    .map(|i| d[i].0)
                    .product::<f64>()
            };
            out.value += m.coef * prod_except(&[]);
            for i in 0..MAX_VARS {
                if m.powers[i] == 0 {
                    continue;
                }
                out.grad[i] += m.coef * d[i].1 * prod_except(&[i]);
                out.hess[i][i] += m.coef * d[i].2 * prod_except(&[i]);
                for j in 0..MAX_VARS {
                    if j != i && m.powers[j] > 0 {
                        out.hess[i][j] += m.coef * d[i].1 * d[j].1 * prod_except(&[i, j]);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, m) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{}", m.coef)?;
            for (i, &e) in m.powers.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

/// Parses expressions such as `"1 + 0.1*x1^2 - 2*x1*x2"`.
///
/// Terms are separated by `+`/`-`; each term is a `*`-separated product of
/// numbers and powers `x1`, `x2^3`, ... (`x`, `y`, `z` are accepted as aliases).
impl FromStr for Poly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::Parse("empty polynomial".into()));
        }
        // split into signed terms, keeping exponent signs out of the picture
        let mut terms: Vec<(f64, String)> = Vec::new();
        let mut sign = 1.0;
        let mut current = String::new();
        for c in compact.chars() {
            let in_exponent = current.len() >= 2
                && current.ends_with(['e', 'E'])
                && current[..current.len() - 1].ends_with(|p: char| p.is_ascii_digit() || p == '.');
            if (c == '+' || c == '-') && !in_exponent {
                if !current.is_empty() {
                    terms.push((sign, std::mem::take(&mut current)));
                    sign = 1.0;
                }
                if c == '-' {
                    sign = -sign;
                }
            } else {
                current.push(c);
            }
        }
        if current.is_empty() {
            return Err(Error::Parse(format!("trailing operator in {s:?}")));
        }
        terms.push((sign, current));

        let mut poly = Poly::default();
        for (sign, body) in terms {
            let mut coef = sign;
            let mut powers = [0u32; MAX_VARS];
            for factor in body.split('*') {
                if factor.is_empty() {
                    return Err(Error::Parse(format!("empty factor in {s:?}")));
                }
                let (base, exp) = match factor.split_once('^') {
                    Some((b, e)) => (
                        b,
                        e.parse::<u32>()
                            .map_err(|_| Error::Parse(format!("bad exponent {e:?}")))?,
                    ),
                    None => (factor, 1),
                };
                let var = match base {
                    "x1" | "x" => Some(0),
                    "x2" | "y" => Some(1),
                    "x3" | "z" => Some(2),
                    _ => None,
                };
                match var {
                    Some(i) => powers[i] += exp,
                    None => {
                        let value: f64 = base
                            .parse()
                            .map_err(|_| Error::Parse(format!("unknown factor {base:?}")))?;
                        coef *= value.powi(exp as i32);
                    }
                }
            }
            poly = poly.with_term(coef, &powers);
        }
        Ok(poly)
    }
}
