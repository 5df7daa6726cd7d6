//! Monte Carlo critical values for the spectrum-based tests.
//!
//! The ω spectrum of the residual matrix does not depend on μ, the main
//! effects or σ, so the null distribution is simulated from i.i.d. standard
//! normal cells. Replication `r` draws from stream `(seed, r)`, which makes
//! the parallel run bit-identical to a sequential one.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::statistics::omnibus_statistic;
use super::{check_alpha, uninformative_warning, Method, RejectionSide};
use crate::distributions::{normal_from, RngStream};
use crate::error::{AdditivityError, Result};
use crate::tabular::{fit_additive, spectrum, DataMatrix};

pub const DEFAULT_CALIBRATION_REPLICATIONS: usize = 10_000;
pub const MIN_CALIBRATION_REPLICATIONS: usize = 1_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCritical {
    pub method: Method,
    pub a: usize,
    pub b: usize,
    pub alpha_level: f64,
    pub replications: usize,
    pub critical_value: f64,
    pub seed: u64,
}

impl MonteCarloCritical {
    /// Critical value from an already simulated null sample.
    pub fn from_null_sample(
        method: Method,
        a: usize,
        b: usize,
        alpha_level: f64,
        seed: u64,
        mut null: Vec<f64>,
    ) -> Result<Self> {
        check_alpha(alpha_level)?;
        let n = null.len();
        if n == 0 {
            return Err(AdditivityError::Config("empty null sample".into()));
        }
        null.sort_by(f64::total_cmp);
        let rank = match method.rejection_side() {
            RejectionSide::High => high_side_rank(alpha_level, n),
            RejectionSide::Low => low_side_rank(alpha_level, n),
        };
        Ok(MonteCarloCritical {
            method,
            a,
            b,
            alpha_level,
            replications: n,
            critical_value: null[rank - 1],
            seed,
        })
    }

    /// True when the layout leaves a single eigenvalue and every statistic is constant.
    pub fn is_uninformative(&self) -> bool {
        self.a.min(self.b) - 1 == 1
    }
}

/// Guards `(1 - alpha) * n` against representation error, e.g. `0.95 * 1000`.
fn scaled(p: f64, n: usize) -> f64 {
    let x = p * n as f64;
    let r = x.round();
    if (x - r).abs() < 1e-9 * n.max(1) as f64 {
        r
    } else {
        x
    }
}

/// 1-based rank `⌈(1-α)N⌉` clamped to `[1, N]`.
pub fn high_side_rank(alpha_level: f64, n: usize) -> usize {
    (scaled(1.0 - alpha_level, n).ceil() as usize).clamp(1, n)
}

/// 1-based rank `⌊αN⌋` clamped to `[1, N]`.
pub fn low_side_rank(alpha_level: f64, n: usize) -> usize {
    (scaled(alpha_level, n).floor() as usize).clamp(1, n)
}

/// Null statistics for `replications` standard-normal `a×b` layouts.
pub fn simulate_null(
    method: Method,
    a: usize,
    b: usize,
    replications: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !method.is_omnibus() {
        return Err(AdditivityError::Config(format!(
            "{method} uses an F reference, not Monte Carlo calibration"
        )));
    }
    if a < 2 || b < 2 {
        return Err(AdditivityError::DimensionTooSmall { rows: a, cols: b });
    }
    (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(seed, r).rng();
            let cells = normal_from(&mut rng, a * b, 0.0, 1.0)?;
            let data = DataMatrix::from_fn(a, b, |i, j| cells[i * b + j])?;
            omnibus_statistic(&spectrum(&fit_additive(&data)?)?, method)
        })
        .collect()
}

/// Simulates the null distribution of an omnibus statistic and returns its
/// critical value at `alpha_level`.
pub fn calibrate(
    method: Method,
    a: usize,
    b: usize,
    alpha_level: f64,
    replications: usize,
    seed: u64,
) -> Result<MonteCarloCritical> {
    check_alpha(alpha_level)?;
    if replications < MIN_CALIBRATION_REPLICATIONS {
        return Err(AdditivityError::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_REPLICATIONS} replications, got {replications}"
        )));
    }
    let null = simulate_null(method, a, b, replications, seed)?;
    let cal = MonteCarloCritical::from_null_sample(method, a, b, alpha_level, seed, null)?;
    if cal.is_uninformative() {
        warn!("{}", uninformative_warning(a, b));
    }
    Ok(cal)
}
