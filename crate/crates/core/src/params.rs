//! Resolution of `auto` hyper-parameters.

use std::fmt;
use std::str::FromStr;

use crate::dataset::KroneckerDataset;
use crate::error::{Error, Result};
use crate::gram::h_cts_mc;
use crate::metrics::format_real;
use crate::network::default_tau;

/// Monte-Carlo draws used to estimate λ for the automatic step size.
pub const AUTO_ETA_SAMPLES: u64 = 100_000;

/// A real-valued setting that may be left to a default rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Param {
    #[default]
    Auto,
    Value(f64),
}

impl FromStr for Param {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Param::Auto);
        }
        let v: f64 = s.parse().map_err(|_| format!("expected a number or `auto`, got `{s}`"))?;
        if !v.is_finite() || v < 0.0 {
            return Err(format!("expected a finite non-negative value, got `{s}`"));
        }
        Ok(Param::Value(v))
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Auto => f.write_str("auto"),
            Param::Value(v) => write!(f, "{v}"),
        }
    }
}

/// `η = λ̂·S_batch / n³`.
pub fn auto_eta(lambda_hat: f64, s_batch: usize, n: usize) -> f64 {
    lambda_hat * s_batch as f64 / (n as f64).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub tau: f64,
    pub eta: f64,
    /// Estimated `λ_min(H^cts)`, present when the step size was automatic.
    pub lambda_hat: Option<f64>,
    pub lambda_se: Option<f64>,
    pub seed: u64,
}

impl fmt::Display for Resolved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tau={} eta={}", format_real(self.tau), format_real(self.eta))?;
        match (self.lambda_hat, self.lambda_se) {
            (Some(l), Some(se)) => write!(f, " lambda_hat={} lambda_se={}", format_real(l), format_real(se))?,
            (Some(l), None) => write!(f, " lambda_hat={}", format_real(l))?,
            _ => f.write_str(" lambda_hat=n/a")?,
        }
        write!(f, " seed={}", self.seed)
    }
}

pub fn resolve_tau(tau: Param, m: usize) -> f64 {
    match tau {
        Param::Auto => default_tau(m),
        Param::Value(v) => v,
    }
}

/// Resolves τ and η. An automatic step size needs `λ̂ > 0`.
pub fn resolve(
    ds: &KroneckerDataset,
    m: usize,
    tau: Param,
    eta: Param,
    s_batch: usize,
    seed: u64,
) -> Result<Resolved> {
    let tau = resolve_tau(tau, m);
    let (eta, lambda_hat, lambda_se) = match eta {
        Param::Value(v) => (v, None, None),
        Param::Auto => {
            let report = h_cts_mc(ds, tau, AUTO_ETA_SAMPLES, seed)?;
            if report.lambda_min <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "automatic step size needs lambda_hat > 0 (estimated {}); pass an explicit step size",
                    report.lambda_min
                )));
            }
            (
                auto_eta(report.lambda_min, s_batch, ds.n()),
                Some(report.lambda_min),
                report.lambda_se,
            )
        }
    };
    Ok(Resolved {
        tau,
        eta,
        lambda_hat,
        lambda_se,
        seed,
    })
}
