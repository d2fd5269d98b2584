//! Solver method strings: `fp`, `aa2`, `aa3:c0=1e4`, `aa1:beta=0.7`, ...

use std::fmt;
use std::str::FromStr;

use anderson_core::AAConfig;
use anyhow::{bail, Context};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    FixedPoint,
    Anderson {
        depth: usize,
        coeff_bound: Option<f64>,
        damping: f64,
    },
}

impl Method {
    pub fn aa(depth: usize) -> Self {
        Method::Anderson {
            depth,
            coeff_bound: None,
            damping: 1.0,
        }
    }

    pub fn is_anderson(&self) -> bool {
        matches!(self, Method::Anderson { .. })
    }

    pub fn coeff_bound(&self) -> Option<f64> {
        match self {
            Method::Anderson { coeff_bound, .. } => *coeff_bound,
            Method::FixedPoint => None,
        }
    }

    pub fn damping(&self) -> f64 {
        match self {
            Method::Anderson { damping, .. } => *damping,
            Method::FixedPoint => 1.0,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Method::Anderson { depth, .. } => *depth,
            Method::FixedPoint => 0,
        }
    }

    /// Overrides the box bound and damping of an AA method; no-op for `fp`.
    pub fn with_overrides(self, coeff_bound: Option<f64>, damping: Option<f64>) -> Self {
        match self {
            Method::Anderson {
                depth,
                coeff_bound: c,
                damping: b,
            } => Method::Anderson {
                depth,
                coeff_bound: coeff_bound.or(c),
                damping: damping.unwrap_or(b),
            },
            Method::FixedPoint => self,
        }
    }

    pub fn aa_config(&self, tol: f64, max_iterations: usize) -> Option<AAConfig> {
        match *self {
            Method::Anderson {
                depth,
                coeff_bound,
                damping,
            } => {
                let mut c = AAConfig::new(depth)
                    .with_damping(damping)
                    .with_tolerance(tol)
                    .with_max_iterations(max_iterations);
                c.coeff_bound = coeff_bound;
                Some(c)
            }
            Method::FixedPoint => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::FixedPoint => write!(f, "fp"),
            Method::Anderson {
                depth,
                coeff_bound,
                damping,
            } => {
                write!(f, "aa{depth}")?;
                if let Some(c) = coeff_bound {
                    write!(f, ":c0={c:e}")?;
                }
                if *damping != 1.0 {
                    write!(f, ":beta={damping}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let mut parts = s.trim().split(':');
        let head = parts.next().unwrap_or("").to_ascii_lowercase();
        if head == "fp" {
            if parts.next().is_some() {
                bail!("fp takes no options: {s:?}");
            }
            return Ok(Method::FixedPoint);
        }
        let depth: usize = head
            .strip_prefix("aa")
            .with_context(|| format!("unknown method {s:?}"))?
            .parse()
            .with_context(|| format!("bad depth in {s:?}"))?;
        if depth == 0 {
            bail!("AA depth must be at least 1: {s:?}");
        }
        let mut method = Method::aa(depth);
        for opt in parts {
            let (key, value) = opt
                .split_once('=')
                .with_context(|| format!("expected key=value in {s:?}"))?;
            let v: f64 = value
                .parse()
                .with_context(|| format!("bad number {value:?} in {s:?}"))?;
            method = match key {
                "c0" => method.with_overrides(Some(v), None),
                "beta" => method.with_overrides(None, Some(v)),
                _ => bail!("unknown option {key:?} in {s:?}"),
            };
        }
        if let Some(c) = method.coeff_bound() {
            if !(c > 0.0) {
                bail!("c0 must be positive: {s:?}");
            }
        }
        let b = method.damping();
        if !(b > 0.0 && b <= 1.0) {
            bail!("beta must lie in (0, 1]: {s:?}");
        }
        Ok(method)
    }
}

pub fn parse_methods(items: &[String]) -> anyhow::Result<Vec<Method>> {
    items
        .iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for s in ["fp", "aa1", "aa3:c0=1e4", "aa2:beta=0.7", "aa2:c0=1e4:beta=0.7"] {
            let m: Method = s.parse().unwrap();
            let again: Method = m.to_string().parse().unwrap();
            assert_eq!(m, again, "{s}");
        }
        assert_eq!("aa2:c0=1e4:beta=0.7".parse::<Method>().unwrap().to_string(), "aa2:c0=1e4:beta=0.7");
        assert_eq!("AA3".parse::<Method>().unwrap(), Method::aa(3));
    }

    #[test]
    fn rejects_bad_strings() {
        for s in ["", "aa0", "aa", "gmres", "aa2:c0", "aa2:c0=-1", "aa2:beta=0", "aa2:beta=1.5", "fp:beta=0.5", "aa2:x=1"] {
            assert!(s.parse::<Method>().is_err(), "{s}");
        }
    }

    #[test]
    fn comma_lists() {
        let m = parse_methods(&["fp,aa1".into(), "aa2".into()]).unwrap();
        assert_eq!(m, vec![Method::FixedPoint, Method::aa(1), Method::aa(2)]);
    }
}
