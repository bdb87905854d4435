//! Parsers for the textual CLI arguments: query sets, initial densities,
//! domains and number lists.

use crate::distribution::InitialDistribution;
use crate::error::{Error, Result};
use crate::geometry::{HyperRectangle, Polyhedron};
use crate::systems::SystemId;

fn arg_err(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| arg_err(format!("expected a number, found {s:?}")))?;
    if v.is_nan() {
        return Err(arg_err("NaN is not a valid number"));
    }
    Ok(v)
}

/// Comma-separated list of numbers.
pub fn number_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(number).collect()
}

/// Comma-separated list of positive integers.
pub fn usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| arg_err(format!("expected a non-negative integer, found {t:?}")))
        })
        .collect()
}

/// Coordinate names of a state space: the system's names when known,
/// otherwise `x1 … xn` (or `x` in one dimension).
pub fn state_names(system: Option<SystemId>, dim: usize) -> Vec<String> {
    match system {
        Some(id) if id.state_names().len() == dim => id.state_names().iter().map(|s| s.to_string()).collect(),
        _ if dim == 1 => vec!["x".into()],
        _ => (1..=dim).map(|i| format!("x{i}")).collect(),
    }
}

/// Parses `"lo,hi;lo,hi;…"` into a box.
pub fn domain(s: &str) -> Result<HyperRectangle> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let v = number_list(part)?;
        if v.len() != 2 {
            return Err(arg_err(format!("domain interval {part:?} needs exactly two numbers")));
        }
        lo.push(v[0]);
        hi.push(v[1]);
    }
    if lo.is_empty() {
        return Err(arg_err("empty domain"));
    }
    HyperRectangle::new(lo, hi)
}

/// Linear form `Σ coef·name + constant`.
fn linear_form(expr: &str, names: &[String]) -> Result<(Vec<f64>, f64)> {
    let mut coef = vec![0.0; names.len()];
    let mut constant = 0.0;
    let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(arg_err("empty side of a constraint"));
    }
    // Split into signed terms, keeping exponent signs such as `1e-3` intact.
    let bytes = s.as_bytes();
    let mut terms = Vec::new();
    let mut start = 0;
    for i in 1..bytes.len() {
        let c = bytes[i];
        let after_exp = matches!(bytes[i - 1], b'e' | b'E') && i >= 2 && bytes[i - 2].is_ascii_digit();
        if (c == b'+' || c == b'-') && !after_exp && bytes[i - 1] != b'*' {
            terms.push(&s[start..i]);
            start = i;
        }
    }
    terms.push(&s[start..]);
    for term in terms {
        let (sign, body) = match term.as_bytes()[0] {
            b'+' => (1.0, &term[1..]),
            b'-' => (-1.0, &term[1..]),
            _ => (1.0, term),
        };
        if body.is_empty() {
            return Err(arg_err(format!("dangling sign in {expr:?}")));
        }
        let (factor, name) = match body.split_once('*') {
            Some((a, b)) => (number(a)?, Some(b)),
            None => match body.parse::<f64>() {
                Ok(v) => (v, None),
                Err(_) => {
                    // Allow a leading coefficient written without `*`, e.g. `2x`.
                    let split = body
                        .find(|c: char| c.is_ascii_alphabetic())
                        .ok_or_else(|| arg_err(format!("cannot parse term {term:?}")))?;
                    let f = if split == 0 { 1.0 } else { number(&body[..split])? };
                    (f, Some(&body[split..]))
                }
            },
        };
        match name {
            None => constant += sign * factor,
            Some(n) => {
                let j = names.iter().position(|x| x == n).ok_or_else(|| {
                    arg_err(format!(
                        "unknown state variable {n:?}; expected one of {}",
                        names.join(", ")
                    ))
                })?;
                coef[j] += sign * factor;
            }
        }
    }
    Ok((coef, constant))
}

/// Parses a conjunction of linear constraints such as
/// `"x>=-0.5,x<=0,y>=-0.5,y<=0"` or `"x+2*y<=1"` into `{x | A·x ≤ b}`.
/// Strict and non-strict inequalities are treated alike; `=` adds both
/// directions.
pub fn linear_set(s: &str, names: &[String]) -> Result<Polyhedron> {
    let mut p = Polyhedron::whole_space(names.len());
    let mut any = false;
    for item in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (pos, op) = ["<=", ">=", "==", "<", ">", "="]
            .iter()
            .find_map(|op| item.find(op).map(|i| (i, *op)))
            .ok_or_else(|| arg_err(format!("constraint {item:?} has no comparison operator")))?;
        let (lhs, rhs) = (&item[..pos], &item[pos + op.len()..]);
        let (cl, kl) = linear_form(lhs, names)?;
        let (cr, kr) = linear_form(rhs, names)?;
        // lhs − rhs ⋚ 0  ⇔  (cl − cr)·x ⋚ kr − kl
        let row: Vec<f64> = cl.iter().zip(&cr).map(|(a, b)| a - b).collect();
        if row.iter().all(|v| *v == 0.0) {
            return Err(arg_err(format!(
                "constraint {item:?} does not involve any state variable"
            )));
        }
        let rhs = kr - kl;
        match op {
            "<=" | "<" => p.push(row, rhs),
            ">=" | ">" => p.push(row.iter().map(|v| -v).collect(), -rhs),
            _ => {
                p.push(row.clone(), rhs);
                p.push(row.iter().map(|v| -v).collect(), -rhs);
            }
        }
        any = true;
    }
    if !any {
        return Err(arg_err("empty constraint set"));
    }
    Ok(p)
}

fn broadcast(key: &str, v: Vec<f64>, dim: usize) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v),
        n => Err(arg_err(format!("{key} has {n} entries, expected 1 or {dim}"))),
    }
}

/// Parses `uniform` or `gauss:mu=a,b,sigma=s` into an initial density on
/// `support`. Scalars broadcast over all coordinates; `mu` defaults to the
/// center of the support.
pub fn rho0(s: &str, support: &HyperRectangle) -> Result<InitialDistribution> {
    let s = s.trim();
    let dim = support.dim();
    if s == "uniform" {
        return InitialDistribution::uniform(support.clone());
    }
    let Some(body) = s.strip_prefix("gauss:").or_else(|| s.strip_prefix("gaussian:")) else {
        return Err(arg_err(format!(
            "unknown initial density {s:?}; use `uniform` or `gauss:mu=...,sigma=...`"
        )));
    };
    let mut mu: Vec<f64> = Vec::new();
    let mut sigma: Vec<f64> = Vec::new();
    let mut current: Option<&str> = None;
    for tok in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let value = match tok.split_once('=') {
            Some((k, v)) => {
                current = Some(match k.trim() {
                    "mu" => "mu",
                    "sigma" => "sigma",
                    other => return Err(arg_err(format!("unknown Gaussian parameter {other:?}"))),
                });
                v
            }
            None => tok,
        };
        let v = number(value)?;
        match current {
            Some("mu") => mu.push(v),
            Some(_) => sigma.push(v),
            None => return Err(arg_err(format!("value {tok:?} precedes any `mu=` or `sigma=`"))),
        }
    }
    if sigma.is_empty() {
        return Err(arg_err("Gaussian initial density needs sigma="));
    }
    let mu = if mu.is_empty() {
        support.lo.iter().zip(&support.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    } else {
        broadcast("mu", mu, dim)?
    };
    let sigma = broadcast("sigma", sigma, dim)?;
    InitialDistribution::truncated_gaussian(support.clone(), mu, sigma)
}
