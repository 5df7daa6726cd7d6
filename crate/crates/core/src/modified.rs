//! Modified Tukey test.
//!
//! The multiplicative-interaction model
//!
//! ```text
//! y_ij = mu + alpha_i + beta_j + k * alpha_i * beta_j + e_ij
//! ```
//!
//! is fitted by alternating conditional least squares started from the
//! additive fit, and compared with the additive model through the drop in
//! residual sum of squares, `F = (RSS0 - RSS) / (RSS / (ab - a - b))` on
//! `(1, ab - a - b)` degrees of freedom.
//!
//! For small layouts the F reference is anti-conservative; the permutation
//! and parametric-bootstrap variants replace it with a resampled null.
//!
//! `mu` is held at the grand mean throughout and the effects are not
//! re-centered after updating.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{
    check_alpha, high_side_rank, Method, Reference, RejectionSide, ResamplingKind, TestOutcome,
};
use crate::distributions::{f_cdf, f_quantile, normal_from, permutation_from, FParams, RngStream};
use crate::error::{AdditivityError, Result};
use crate::tabular::{fit_additive, AdditiveFit, DataMatrix};

const NEGLIGIBLE: f64 = 1e-12;
const DIVISION_GUARD: f64 = 1e-12;

/// How each update sees the other parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// alpha, then beta using the new alpha, then k using both new effects.
    #[default]
    Sequential,
    /// Every update uses the previous iteration's values only.
    Snapshot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iterations: usize,
    pub mode: UpdateMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            iterations: 1,
            mode: UpdateMode::Sequential,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionStage {
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteractionFit {
    pub grand_mean: f64,
    /// Additive effects and Tukey's slope.
    pub stage0: InteractionStage,
    /// Estimates after the last iteration.
    pub stage1: InteractionStage,
    pub iterations: usize,
    pub rss: f64,
    pub rss0: f64,
    pub s2: f64,
    /// `ab - a - b`
    pub df_error: u64,
    /// Sum of squares about the grand mean, the scale for zero checks.
    pub total_ss: f64,
}

impl InteractionFit {
    /// `RSS0 - RSS`, the permutation statistic.
    pub fn rss_drop(&self) -> f64 {
        self.rss0 - self.rss
    }

    fn perfect_fit(&self) -> bool {
        self.rss <= NEGLIGIBLE * self.total_ss
    }

    fn exactly_additive(&self) -> bool {
        self.rss0 <= NEGLIGIBLE * self.total_ss
    }
}

fn df_error(a: usize, b: usize) -> Result<u64> {
    let df = (a * b) as i64 - a as i64 - b as i64;
    if df < 1 {
        return Err(AdditivityError::InsufficientDf {
            method: Method::ModifiedTukey,
            detail: format!("ab - a - b = {df} for a {a}x{b} layout"),
        });
    }
    Ok(df as u64)
}

fn rss_of(y: &DMatrix<f64>, mu: f64, alpha: &DVector<f64>, beta: &DVector<f64>, k: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            let e = y[(i, j)] - mu - alpha[i] - beta[j] - k * alpha[i] * beta[j];
            s += e * e;
        }
    }
    s
}

fn update_alpha(y: &DMatrix<f64>, mu: f64, beta: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
    let w: Vec<f64> = beta.iter().map(|bj| 1.0 + k * bj).collect();
    let denom: f64 = w.iter().map(|x| x * x).sum();
    if denom < DIVISION_GUARD {
        return Err(AdditivityError::DivisionGuard(format!(
            "row update denominator sum_j (1 + k beta_j)^2 = {denom:e}"
        )));
    }
    Ok(DVector::from_fn(y.nrows(), |i, _| {
        (0..y.ncols())
            .map(|j| (y[(i, j)] - mu - beta[j]) * w[j])
            .sum::<f64>()
            / denom
    }))
}

fn update_beta(y: &DMatrix<f64>, mu: f64, alpha: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
    let w: Vec<f64> = alpha.iter().map(|ai| 1.0 + k * ai).collect();
    let denom: f64 = w.iter().map(|x| x * x).sum();
    if denom < DIVISION_GUARD {
        return Err(AdditivityError::DivisionGuard(format!(
            "column update denominator sum_i (1 + k alpha_i)^2 = {denom:e}"
        )));
    }
    Ok(DVector::from_fn(y.ncols(), |j, _| {
        (0..y.nrows())
            .map(|i| (y[(i, j)] - mu - alpha[i]) * w[i])
            .sum::<f64>()
            / denom
    }))
}

/// Least-squares slope of the residual on `alpha_i * beta_j`.
fn update_k(y: &DMatrix<f64>, mu: f64, alpha: &DVector<f64>, beta: &DVector<f64>) -> Result<f64> {
    let ssa: f64 = alpha.iter().map(|x| x * x).sum();
    let ssb: f64 = beta.iter().map(|x| x * x).sum();
    let denom = ssa * ssb;
    if !(denom > 0.0) {
        return Err(AdditivityError::DivisionGuard(format!(
            "slope denominator sum alpha^2 * sum beta^2 = {denom:e}"
        )));
    }
    let mut num = 0.0;
    for i in 0..y.nrows() {
        for j in 0..y.ncols() {
            num += (y[(i, j)] - alpha[i] - beta[j] - mu) * alpha[i] * beta[j];
        }
    }
    Ok(num / denom)
}

/// Fits the multiplicative-interaction model by `options.iterations` rounds
/// of conditional least-squares updates.
///
/// With more than one iteration the loop stops early once the RSS changes
/// by less than `1e-12 * RSS0`.
pub fn fit_interaction(data: &DataMatrix, options: &FitOptions) -> Result<InteractionFit> {
    let additive = fit_additive(data)?;
    fit_interaction_from(data, &additive, options)
}

fn fit_interaction_from(
    data: &DataMatrix,
    additive: &AdditiveFit,
    options: &FitOptions,
) -> Result<InteractionFit> {
    let (a, b) = (data.rows(), data.cols());
    let df_error = df_error(a, b)?;
    let y = data.values();
    let mu = additive.grand_mean;
    let total_ss: f64 = y.iter().map(|v| (v - mu).powi(2)).sum();

    let alpha0 = additive.row_effects.clone();
    let beta0 = additive.col_effects.clone();
    let ssa: f64 = alpha0.iter().map(|x| x * x).sum();
    let ssb: f64 = beta0.iter().map(|x| x * x).sum();
    if ssa * b as f64 <= NEGLIGIBLE * total_ss || ssb * a as f64 <= NEGLIGIBLE * total_ss {
        return Err(AdditivityError::DegenerateData(
            "row or column effects are all zero, the interaction slope is undefined".into(),
        ));
    }
    let k0 = update_k(y, mu, &alpha0, &beta0)?;

    let (mut alpha, mut beta, mut k) = (alpha0.clone(), beta0.clone(), k0);
    let mut rss = rss_of(y, mu, &alpha, &beta, k);
    let mut done = 0;
    for _ in 0..options.iterations {
        let (next_alpha, next_beta, next_k) = match options.mode {
            UpdateMode::Sequential => {
                let na = update_alpha(y, mu, &beta, k)?;
                let nb = update_beta(y, mu, &na, k)?;
                let nk = update_k(y, mu, &na, &nb)?;
                (na, nb, nk)
            }
            UpdateMode::Snapshot => {
                let na = update_alpha(y, mu, &beta, k)?;
                let nb = update_beta(y, mu, &alpha, k)?;
                let nk = update_k(y, mu, &alpha, &beta)?;
                (na, nb, nk)
            }
        };
        alpha = next_alpha;
        beta = next_beta;
        k = next_k;
        let next_rss = rss_of(y, mu, &alpha, &beta, k);
        done += 1;
        let delta = (rss - next_rss).abs();
        rss = next_rss;
        if options.iterations > 1 && delta < 1e-12 * additive.rss0 {
            break;
        }
    }

    Ok(InteractionFit {
        grand_mean: mu,
        stage0: InteractionStage {
            alpha: alpha0,
            beta: beta0,
            k: k0,
        },
        stage1: InteractionStage { alpha, beta, k },
        iterations: done,
        rss,
        rss0: additive.rss0,
        s2: rss / df_error as f64,
        df_error,
        total_ss,
    })
}

/// Modified Tukey test against the F reference with default fit options.
pub fn modified_tukey_test(data: &DataMatrix, alpha_level: f64) -> Result<TestOutcome> {
    modified_tukey_test_with(data, alpha_level, &FitOptions::default())
}

/// Modified Tukey test against the `F(1, ab - a - b)` reference.
///
/// The decision is `RSS0 > RSS (1 + q / (ab - a - b))` with `q` the upper
/// F quantile; the reported statistic is the equivalent F ratio.
pub fn modified_tukey_test_with(
    data: &DataMatrix,
    alpha_level: f64,
    options: &FitOptions,
) -> Result<TestOutcome> {
    check_alpha(alpha_level)?;
    let fit = fit_interaction(data, options)?;
    let df = FParams::new(1, fit.df_error)?;
    let critical = f_quantile(1.0 - alpha_level, df)?;
    let mut warnings = Vec::new();

    let (statistic, reject) = if fit.perfect_fit() && fit.exactly_additive() {
        warnings.push("residuals are identically zero, there is no interaction to detect".into());
        (0.0, false)
    } else if fit.perfect_fit() {
        warnings.push("interaction model fits exactly (RSS = 0)".into());
        (f64::INFINITY, true)
    } else {
        let statistic = fit.rss_drop() / fit.s2;
        let reject = fit.rss0 > fit.rss * (1.0 + critical / fit.df_error as f64);
        (statistic, reject)
    };
    let p_value = if statistic.is_infinite() {
        0.0
    } else {
        1.0 - f_cdf(statistic.max(0.0), df)?
    };

    Ok(TestOutcome {
        method: Method::ModifiedTukey,
        statistic,
        reference: Reference::F(df),
        critical_value: critical,
        alpha_level,
        reject,
        rejection_side: RejectionSide::High,
        p_value: Some(p_value),
        warnings,
    })
}

/// Resampling set-up for the small-sample adjustments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplingConfig {
    pub kind: ResamplingKind,
    pub n_samples: usize,
    pub stream: RngStream,
    pub fit: FitOptions,
}

pub const MIN_RESAMPLES: usize = 100;

impl ResamplingConfig {
    pub fn new(kind: ResamplingKind, n_samples: usize, stream: RngStream) -> Self {
        ResamplingConfig {
            kind,
            n_samples,
            stream,
            fit: FitOptions::default(),
        }
    }

    fn validate(&self, expected: ResamplingKind) -> Result<()> {
        if self.kind != expected {
            return Err(AdditivityError::Config(format!(
                "expected a {expected:?} configuration, got {:?}",
                self.kind
            )));
        }
        if self.n_samples < MIN_RESAMPLES {
            return Err(AdditivityError::Config(format!(
                "resampling needs at least {MIN_RESAMPLES} samples, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }

    fn reference(&self) -> Reference {
        Reference::Resampling {
            resampling: self.kind,
            samples: self.n_samples,
            seed: self.stream.seed,
            stream_id: self.stream.stream_id,
        }
    }
}

/// Resampled statistics; degenerate replicates are `-inf`.
fn resample<F>(config: &ResamplingConfig, build: F) -> Result<Vec<f64>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<(DataMatrix, Statistic)> + Sync,
{
    let n = config.n_samples;
    let stats: Vec<Option<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = config.stream.substream(t).rng();
            let (synthetic, which) = build(&mut rng).ok()?;
            let fit = fit_interaction(&synthetic, &config.fit).ok()?;
            Some(which.of(&fit))
        })
        .collect();
    let degenerate = stats.iter().filter(|s| s.is_none()).count();
    // more than 1% degenerate replicates
    if degenerate * 100 > n {
        return Err(AdditivityError::ResamplingDegeneracy {
            degenerate,
            total: n,
        });
    }
    Ok(stats
        .into_iter()
        .map(|s| s.unwrap_or(f64::NEG_INFINITY))
        .collect())
}

#[derive(Debug, Clone, Copy)]
enum Statistic {
    RssDrop,
    AbsSlope,
}

impl Statistic {
    fn of(&self, fit: &InteractionFit) -> f64 {
        match self {
            Statistic::RssDrop => fit.rss_drop(),
            Statistic::AbsSlope => fit.stage1.k.abs(),
        }
    }
}

fn monte_carlo_p(sampled: &[f64], observed: f64) -> f64 {
    let extreme = sampled.iter().filter(|&&s| s >= observed).count();
    (1 + extreme) as f64 / (sampled.len() + 1) as f64
}

/// Permutation version of the modified test.
///
/// Residuals of the additive fit are permuted over all `a·b` cells and added
/// back to the fitted additive structure. The statistic is `RSS0 - RSS` and
/// the critical value the `⌈(1-α)N⌉`-th order statistic of its permutation
/// distribution; ties do not reject.
pub fn permutation_test(
    data: &DataMatrix,
    alpha_level: f64,
    config: &ResamplingConfig,
) -> Result<TestOutcome> {
    check_alpha(alpha_level)?;
    config.validate(ResamplingKind::Permutation)?;
    let additive = fit_additive(data)?;
    let fit = fit_interaction_from(data, &additive, &config.fit)?;
    let observed = fit.rss_drop();

    let (a, b) = (data.rows(), data.cols());
    let residuals: Vec<f64> = (0..a * b)
        .map(|c| additive.residuals[(c / b, c % b)])
        .collect();
    let mut sampled = resample(config, |rng| {
        let perm = permutation_from(rng, a * b);
        let synthetic = DataMatrix::from_fn(a, b, |i, j| {
            additive.fitted(i, j) + residuals[perm[i * b + j]]
        })?;
        Ok((synthetic, Statistic::RssDrop))
    })?;
    sampled.sort_by(f64::total_cmp);
    let critical = sampled[high_side_rank(alpha_level, sampled.len()) - 1];

    let mut out = TestOutcome::decide(
        Method::ModifiedTukey,
        observed,
        config.reference(),
        critical,
        alpha_level,
    );
    out.p_value = Some(monte_carlo_p(&sampled, observed));
    Ok(out)
}

/// Parametric-bootstrap version of the modified test.
///
/// Fresh normal errors with variance `s² = RSS / (ab - a - b)` are added to
/// the fitted additive structure. The statistic is `|k|` after the final
/// iteration; the hypothesis is rejected when more than `(1-α)·100%` of the
/// bootstrap statistics lie strictly below the observed one.
pub fn bootstrap_test(
    data: &DataMatrix,
    alpha_level: f64,
    config: &ResamplingConfig,
) -> Result<TestOutcome> {
    check_alpha(alpha_level)?;
    config.validate(ResamplingKind::Bootstrap)?;
    let additive = fit_additive(data)?;
    let fit = fit_interaction_from(data, &additive, &config.fit)?;
    let observed = fit.stage1.k.abs();

    if fit.perfect_fit() {
        let (statistic, warning) = if fit.exactly_additive() {
            (
                0.0,
                "residuals are identically zero, there is no interaction to detect",
            )
        } else {
            (
                f64::INFINITY,
                "interaction model fits exactly (s^2 = 0), no resampling performed",
            )
        };
        let mut out = TestOutcome::decide(
            Method::ModifiedTukey,
            statistic,
            config.reference(),
            0.0,
            alpha_level,
        );
        out.warnings.push(warning.into());
        out.p_value = Some(if out.reject { 0.0 } else { 1.0 });
        return Ok(out);
    }

    let (a, b) = (data.rows(), data.cols());
    let sd = fit.s2.sqrt();
    let mut sampled = resample(config, |rng| {
        let noise = normal_from(rng, a * b, 0.0, sd)?;
        let synthetic = DataMatrix::from_fn(a, b, |i, j| additive.fitted(i, j) + noise[i * b + j])?;
        Ok((synthetic, Statistic::AbsSlope))
    })?;
    sampled.sort_by(f64::total_cmp);
    // #{s < obs} > (1-α)N  <=>  obs > s_(m) with m = ⌊(1-α)N⌋ + 1
    let n = sampled.len();
    let m = bootstrap_rank(alpha_level, n);
    let critical = if m > n { f64::INFINITY } else { sampled[m - 1] };

    let mut out = TestOutcome::decide(
        Method::ModifiedTukey,
        observed,
        config.reference(),
        critical,
        alpha_level,
    );
    out.p_value = Some(monte_carlo_p(&sampled, observed));
    Ok(out)
}

/// 1-based rank `⌊(1-α)N⌋ + 1`.
fn bootstrap_rank(alpha_level: f64, n: usize) -> usize {
    let x = (1.0 - alpha_level) * n as f64;
    let r = x.round();
    let x = if (x - r).abs() < 1e-9 * n as f64 {
        r
    } else {
        x
    };
    x.floor() as usize + 1
}

/// Dispatches on `config.kind`.
pub fn resampling_test(
    data: &DataMatrix,
    alpha_level: f64,
    config: &ResamplingConfig,
) -> Result<TestOutcome> {
    match config.kind {
        ResamplingKind::Permutation => permutation_test(data, alpha_level, config),
        ResamplingKind::Bootstrap => bootstrap_test(data, alpha_level, config),
    }
}
