//! Arithmetic expressions in one variable `x`.
//!
//! Grammar: numbers, `x`, `+ - * / ^`, parentheses, `sqrt`, `sin`, `cos`,
//! `exp`, `ln`, `abs` and the constants `pi`/`PI`/`π` and `e`/`E`.

use crate::error::{Error, Result};
use exmex::prelude::*;
use exmex::FlatEx;

#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    flat: FlatEx<f64>,
    uses_x: bool,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Expr> {
        let normalized = normalize_constants(source);
        let flat = exmex::parse::<f64>(&normalized)
            .map_err(|e| Error::Expr(format!("{source:?}: {e}")))?;
        let vars: Vec<String> = flat.var_names().iter().map(|s| s.to_string()).collect();
        if let Some(bad) = vars.iter().find(|v| v.as_str() != "x") {
            return Err(Error::Expr(format!("{source:?}: unknown symbol {bad:?}")));
        }
        Ok(Expr {
            source: source.to_string(),
            uses_x: !vars.is_empty(),
            flat,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let r = if self.uses_x {
            self.flat.eval(&[x])
        } else {
            self.flat.eval(&[])
        };
        r.unwrap_or(f64::NAN)
    }
}

/// Parse a constant: a number, `inf`, `-inf`, or an expression without `x`.
pub fn parse_constant(source: &str) -> Result<f64> {
    let t = source.trim();
    match t {
        "inf" | "+inf" | "infinity" => return Ok(f64::INFINITY),
        "-inf" | "-infinity" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    let e = Expr::parse(t)?;
    if e.uses_x {
        return Err(Error::Expr(format!("{source:?}: constant expected")));
    }
    let v = e.eval(0.0);
    if v.is_nan() {
        return Err(Error::Expr(format!("{source:?}: not a number")));
    }
    Ok(v)
}

fn normalize_constants(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if word == "pi" {
                out.push_str("PI");
            } else {
                out.push_str(&word);
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_basic_grammar() {
        let e = Expr::parse("x + 2*x^2 - sqrt(4) + exp(0) + sin(pi/2)").unwrap();
        assert!((e.eval(1.0) - (1.0 + 2.0 - 2.0 + 1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_symbols() {
        assert!(Expr::parse("y + 1").is_err());
        assert!(Expr::parse("x +").is_err());
    }

    #[test]
    fn constants() {
        assert_eq!(parse_constant("inf").unwrap(), f64::INFINITY);
        assert!((parse_constant("41/14").unwrap() - 41.0 / 14.0).abs() < 1e-15);
        assert!((parse_constant("2*pi").unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!(parse_constant("x").is_err());
    }

    #[test]
    fn pi_inside_identifiers_is_untouched() {
        let e = Expr::parse("sin(pi*x)").unwrap();
        assert!(e.eval(1.0).abs() < 1e-12);
    }
}
