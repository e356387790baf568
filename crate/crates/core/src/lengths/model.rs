use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::corpus::ClassTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthKind {
    #[default]
    Poisson,
    Gaussian,
    Box,
    Triangle,
}

impl FromStr for LengthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(Self::Poisson),
            "gaussian" => Ok(Self::Gaussian),
            "box" => Ok(Self::Box),
            "triangle" => Ok(Self::Triangle),
            other => Err(Error::Config(format!("unknown length kind {other:?}"))),
        }
    }
}

impl fmt::Display for LengthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Poisson => "poisson",
            Self::Gaussian => "gaussian",
            Self::Box => "box",
            Self::Triangle => "triangle",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Support {
    lo: usize,
    hi: usize,
    log_norm: f64,
    /// Set when no integer in range has positive weight; all mass sits here.
    point: Option<usize>,
}

/// Class-conditional segment length distribution `p(l|c)`.
///
/// Poisson is the untruncated distribution. The other kinds are discretized
/// on `[1, max_len]` and renormalized there; box and triangle are zero outside
/// `[mu - sigma, mu + sigma]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthModel {
    kind: LengthKind,
    lambda: Vec<f64>,
    sigma: Vec<f64>,
    max_len: usize,
    supports: Vec<Support>,
}

impl LengthModel {
    /// Uses `max_len = ceil(max lambda + 5 max sigma)`.
    pub fn new(kind: LengthKind, lambda: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let lmax = lambda.iter().copied().fold(0.0, f64::max);
        let smax = sigma.iter().copied().fold(0.0, f64::max);
        let max_len = (lmax + 5.0 * smax).ceil().max(1.0) as usize;
        Self::with_max_len(kind, lambda, sigma, max_len)
    }

    pub fn with_max_len(kind: LengthKind, lambda: Vec<f64>, sigma: Vec<f64>, max_len: usize) -> Result<Self> {
        if lambda.len() != sigma.len() || lambda.is_empty() {
            return Err(Error::Validation("length model needs one (lambda, sigma) per class".into()));
        }
        if lambda.iter().chain(&sigma).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation("length model parameters must be positive and finite".into()));
        }
        if max_len == 0 {
            return Err(Error::Validation("max length must be positive".into()));
        }
        let supports = lambda
            .iter()
            .zip(&sigma)
            .map(|(&mu, &sd)| support(kind, mu, sd, max_len))
            .collect();
        Ok(Self {
            kind,
            lambda,
            sigma,
            max_len,
            supports,
        })
    }

    pub fn kind(&self) -> LengthKind {
        self.kind
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn num_classes(&self) -> usize {
        self.lambda.len()
    }

    /// Truncation bound for the non-Poisson kinds.
    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Suggested decoder length limit: `ceil(max lambda + 5 max sigma)`.
    pub fn suggested_limit(&self) -> usize {
        let lmax = self.lambda.iter().copied().fold(0.0, f64::max);
        let smax = self.sigma.iter().copied().fold(0.0, f64::max);
        (lmax + 5.0 * smax).ceil().max(1.0) as usize
    }

    /// `ln p(l|c)`, or `-inf` outside the support.
    pub fn log_pmf(&self, class: usize, len: usize) -> f64 {
        let mu = self.lambda[class];
        if self.kind == LengthKind::Poisson {
            let l = len as f64;
            return l * mu.ln() - mu - ln_gamma(l + 1.0);
        }
        let s = &self.supports[class];
        if let Some(p) = s.point {
            return if len == p { 0.0 } else { f64::NEG_INFINITY };
        }
        if len < s.lo || len > s.hi {
            return f64::NEG_INFINITY;
        }
        log_weight(self.kind, mu, self.sigma[class], len) - s.log_norm
    }
}

fn log_weight(kind: LengthKind, mu: f64, sd: f64, len: usize) -> f64 {
    let l = len as f64;
    match kind {
        LengthKind::Poisson => unreachable!("poisson is evaluated in closed form"),
        LengthKind::Gaussian => -((l - mu) * (l - mu)) / (2.0 * sd * sd),
        LengthKind::Box => {
            if (l - mu).abs() <= sd {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        LengthKind::Triangle => {
            let w = 1.0 - (l - mu).abs() / sd;
            if w > 0.0 {
                w.ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

fn support(kind: LengthKind, mu: f64, sd: f64, max_len: usize) -> Support {
    let (lo, hi) = match kind {
        // evaluated in closed form, never truncated
        LengthKind::Poisson => return Support { lo: 0, hi: usize::MAX, log_norm: 0.0, point: None },
        LengthKind::Gaussian => (1, max_len),
        LengthKind::Box | LengthKind::Triangle => {
            let lo = (mu - sd).ceil().max(1.0);
            let hi = (mu + sd).floor().min(max_len as f64);
            (lo as usize, hi.max(0.0) as usize)
        }
    };
    let logs: Vec<f64> = (lo..=hi)
        .map(|l| log_weight(kind, mu, sd, l))
        .collect();
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > hi || peak == f64::NEG_INFINITY {
        let point = (mu.round() as usize).clamp(1, max_len);
        return Support { lo: point, hi: point, log_norm: 0.0, point: Some(point) };
    }
    let log_norm = peak + logs.iter().map(|&x| (x - peak).exp()).sum::<f64>().ln();
    Support { lo, hi, log_norm, point: None }
}

/// Writes the kind on the first line, then `name lambda sigma` per class.
pub fn save_length_model(path: &Path, model: &LengthModel, classes: &ClassTable) -> Result<()> {
    let mut out = format!("{}\n", model.kind);
    for c in 0..model.num_classes() {
        out.push_str(&format!("{} {} {}\n", classes.name(c), model.lambda[c], model.sigma[c]));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_length_model(path: &Path, classes: &ClassTable) -> Result<LengthModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty length model"))?;
    let kind: LengthKind = first.trim().parse().map_err(|e: Error| Error::parse(path, 1, e.to_string()))?;
    let mut lambda = vec![None; classes.len()];
    let mut sigma = vec![0.0; classes.len()];
    for (i, line) in lines {
        let lineno = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [name, l, s] = toks[..] else {
            return Err(Error::parse(path, lineno, "expected `name lambda sigma`"));
        };
        let c = classes
            .id(name)
            .ok_or_else(|| Error::parse(path, lineno, format!("unknown class {name:?}")))?;
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {t:?}")))
        };
        lambda[c] = Some(num(l)?);
        sigma[c] = num(s)?;
    }
    let lambda = lambda
        .into_iter()
        .enumerate()
        .map(|(c, l)| l.ok_or_else(|| Error::parse(path, 0, format!("missing class {:?}", classes.name(c)))))
        .collect::<Result<Vec<_>>>()?;
    LengthModel::new(kind, lambda, sigma).map_err(|e| Error::parse(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_pmf(m: &LengthModel, c: usize, upto: usize) -> f64 {
        (0..=upto).map(|l| m.log_pmf(c, l).exp()).sum()
    }

    #[test]
    fn poisson_closed_form() {
        let m = LengthModel::new(LengthKind::Poisson, vec![1.0], vec![1.0]).unwrap();
        assert!((m.log_pmf(0, 1) + 1.0).abs() < 1e-12);
        let m = LengthModel::new(LengthKind::Poisson, vec![40.0], vec![1.0]).unwrap();
        assert!((sum_pmf(&m, 0, 400) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn box_outside_support() {
        let m = LengthModel::new(LengthKind::Box, vec![10.0], vec![2.0]).unwrap();
        assert_eq!(m.log_pmf(0, 13), f64::NEG_INFINITY);
        assert_eq!(m.log_pmf(0, 7), f64::NEG_INFINITY);
        // support {8,...,12}
        assert!((m.log_pmf(0, 12) + 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn triangle_peak_and_zero_ends() {
        let m = LengthModel::new(LengthKind::Triangle, vec![10.0], vec![4.0]).unwrap();
        assert_eq!(m.log_pmf(0, 14), f64::NEG_INFINITY);
        assert_eq!(m.log_pmf(0, 6), f64::NEG_INFINITY);
        assert!(m.log_pmf(0, 10) > m.log_pmf(0, 11));
        // weights .25 .5 .75 1 .75 .5 .25 -> total 4
        assert!((m.log_pmf(0, 10) - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_support_is_point_mass() {
        let m = LengthModel::new(LengthKind::Triangle, vec![10.3], vec![0.2]).unwrap();
        assert_eq!(m.log_pmf(0, 10), 0.0);
        assert_eq!(m.log_pmf(0, 11), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_kinds_normalize() {
        for kind in [LengthKind::Gaussian, LengthKind::Box, LengthKind::Triangle] {
            let m = LengthModel::new(kind, vec![3.0, 50.0, 120.0], vec![15.0, 15.0, 40.0]).unwrap();
            for c in 0..3 {
                let total = sum_pmf(&m, c, m.max_len() + 5);
                assert!((total - 1.0).abs() < 1e-9, "{kind} class {c}: {total}");
            }
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(LengthModel::new(LengthKind::Poisson, vec![0.0], vec![1.0]).is_err());
        assert!(LengthModel::new(LengthKind::Poisson, vec![1.0], vec![]).is_err());
        assert!("cauchy".parse::<LengthKind>().is_err());
    }

    #[test]
    fn roundtrip_file() {
        let classes = ClassTable::new(vec!["background".into(), "a_b".into()], 0).unwrap();
        let m = LengthModel::new(LengthKind::Triangle, vec![33.25, 1.0 / 3.0], vec![15.0, 17.5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lengths.txt");
        save_length_model(&p, &m, &classes).unwrap();
        assert_eq!(load_length_model(&p, &classes).unwrap(), m);
    }
}
