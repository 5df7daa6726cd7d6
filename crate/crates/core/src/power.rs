//! Power studies under a mixed two-way model.
//!
//! Data follow `y_ij = mu + alpha_i + beta_j + gamma_ij + e_ij` with fixed
//! row effects, random column effects `beta_j ~ N(0, sigma_beta2)` and
//! `e_ij ~ N(0, sigma2)`. Interaction scheme A is `gamma_ij = k alpha_i beta_j`;
//! scheme B is `gamma_ij = k alpha_i delta_j` with an independent
//! `delta_j ~ N(0, sigma_beta2)`.
//!
//! Every replicate is generated once per grid point and shared by all tests
//! evaluated there, so power differences between tests are paired.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classic::{
    calibrate, run_classic_test, Method, MonteCarloCritical, DEFAULT_CALIBRATION_REPLICATIONS,
};
use crate::distributions::{derive_seed, normal_from, RngStream};
use crate::error::{AdditivityError, Result};
use crate::modified::modified_tukey_test;
use crate::tabular::DataMatrix;

/// Fixed row effects of the reference design (a = 10).
pub const REFERENCE_ROW_EFFECTS: [f64; 10] = [
    -2.03, -1.92, -1.27, -0.70, 0.46, 0.61, 0.84, 0.94, 1.07, 2.00,
];
pub const REFERENCE_SIGMA_BETA2: f64 = 2.0;
pub const REFERENCE_B_VALUES: [usize; 2] = [10, 50];
pub const DEFAULT_REPLICATIONS: usize = 10_000;
pub const FAST_REPLICATIONS: usize = 1_000;
pub const MIN_POWER_REPLICATIONS: usize = 100;

/// Interaction k-values 0, 1.2, ..., 12.
pub fn default_k_grid() -> Vec<f64> {
    (0..=10).map(|i| 1.2 * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    None,
    A,
    B,
}

impl Scheme {
    fn tag(&self) -> u64 {
        match self {
            Scheme::None => 0,
            Scheme::A => 1,
            Scheme::B => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::None => "none",
            Scheme::A => "A",
            Scheme::B => "B",
        })
    }
}

impl FromStr for Scheme {
    type Err = AdditivityError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" | "0" => Ok(Scheme::None),
            "A" | "a" => Ok(Scheme::A),
            "B" | "b" => Ok(Scheme::B),
            other => Err(AdditivityError::Config(format!(
                "unknown interaction scheme '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub a: usize,
    pub b: usize,
    pub mu: f64,
    pub alpha: Vec<f64>,
    pub sigma_beta2: f64,
    pub sigma2: f64,
    pub scheme: Scheme,
    pub k: f64,
}

impl GeneratorConfig {
    /// Reference design: a = 10, fixed row effects, sigma_beta2 = 2, sigma2 = 1, mu = 0.
    pub fn reference(b: usize, scheme: Scheme, k: f64) -> Self {
        GeneratorConfig {
            a: REFERENCE_ROW_EFFECTS.len(),
            b,
            mu: 0.0,
            alpha: REFERENCE_ROW_EFFECTS.to_vec(),
            sigma_beta2: REFERENCE_SIGMA_BETA2,
            sigma2: 1.0,
            scheme,
            k,
        }
    }

    pub fn at(&self, point: &GridPoint) -> GeneratorConfig {
        GeneratorConfig {
            b: point.b,
            scheme: point.scheme,
            k: point.k,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.a < 2 || self.b < 2 {
            return Err(AdditivityError::DimensionTooSmall {
                rows: self.a,
                cols: self.b,
            });
        }
        if self.alpha.len() != self.a {
            return Err(AdditivityError::Config(format!(
                "{} row effects for a = {}",
                self.alpha.len(),
                self.a
            )));
        }
        let sum: f64 = self.alpha.iter().sum();
        let scale: f64 = self.alpha.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
        if sum.abs() > 1e-9 * scale {
            return Err(AdditivityError::Config(format!(
                "row effects sum to {sum}, not 0"
            )));
        }
        if !(self.sigma_beta2 >= 0.0 && self.sigma2 >= 0.0) {
            return Err(AdditivityError::Config("variances must be >= 0".into()));
        }
        if !(self.mu.is_finite() && self.k.is_finite()) {
            return Err(AdditivityError::Config("mu and k must be finite".into()));
        }
        Ok(())
    }
}

/// Draws one dataset: column effects, then (scheme B) delta, then the errors.
pub fn generate(config: &GeneratorConfig, stream: &RngStream) -> Result<DataMatrix> {
    config.validate()?;
    let (a, b) = (config.a, config.b);
    let mut rng = stream.rng();
    let sd_beta = config.sigma_beta2.sqrt();
    let beta = normal_from(&mut rng, b, 0.0, sd_beta)?;
    let interaction_cols = match config.scheme {
        Scheme::None => vec![0.0; b],
        Scheme::A => beta.clone(),
        Scheme::B => normal_from(&mut rng, b, 0.0, sd_beta)?,
    };
    let eps = normal_from(&mut rng, a * b, 0.0, config.sigma2.sqrt())?;
    let k = if config.scheme == Scheme::None {
        0.0
    } else {
        config.k
    };
    DataMatrix::from_fn(a, b, |i, j| {
        config.mu
            + config.alpha[i]
            + beta[j]
            + k * config.alpha[i] * interaction_cols[j]
            + eps[i * b + j]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub scheme: Scheme,
    pub k: f64,
    pub b: usize,
}

impl GridPoint {
    /// Base stream of the point; replicate r uses `substream(r)`.
    pub fn stream(&self, seed: u64) -> RngStream {
        RngStream::new(
            derive_seed(seed, &[self.scheme.tag(), self.b as u64, self.k.to_bits()]),
            0,
        )
    }
}

/// Full cross product of schemes A/B, b in {10, 50} and the default k grid.
pub fn reference_grid() -> Vec<GridPoint> {
    let mut grid = Vec::new();
    for scheme in [Scheme::A, Scheme::B] {
        for b in REFERENCE_B_VALUES {
            for k in default_k_grid() {
                grid.push(GridPoint { scheme, k, b });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub test: Method,
    pub scheme: Scheme,
    pub k: f64,
    pub b: usize,
    pub replications: usize,
    pub rejections: usize,
    pub power: f64,
    pub seed: u64,
}

impl PowerCell {
    /// Binomial standard error of the power estimate.
    pub fn standard_error(&self) -> f64 {
        (self.power * (1.0 - self.power) / self.replications as f64).sqrt()
    }
}

fn calibration_seed(seed: u64) -> u64 {
    derive_seed(seed, &[0xCA11_B8A7E])
}

fn rejects(
    data: &DataMatrix,
    method: Method,
    alpha_level: f64,
    calibration: Option<&MonteCarloCritical>,
) -> Result<bool> {
    let out = match method {
        Method::ModifiedTukey => modified_tukey_test(data, alpha_level)?,
        m => run_classic_test(data, m, alpha_level, calibration, None)?,
    };
    Ok(out.reject)
}

/// Rejection counts for several tests on shared replicates.
fn count_rejections(
    config: &GeneratorConfig,
    tests: &[Method],
    calibrations: &[Option<MonteCarloCritical>],
    alpha_level: f64,
    replications: usize,
    base: &RngStream,
) -> Result<Vec<usize>> {
    let per_rep: Vec<Vec<bool>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate(config, &base.substream(r))?;
            tests
                .iter()
                .zip(calibrations)
                .map(|(&m, cal)| {
                    rejects(&data, m, alpha_level, cal.as_ref()).map_err(|e| {
                        AdditivityError::DegenerateData(format!(
                            "replicate {r} ({} k={} b={}, test {m}): {e}",
                            config.scheme, config.k, config.b
                        ))
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut counts = vec![0; tests.len()];
    for row in per_rep {
        for (c, hit) in counts.iter_mut().zip(row) {
            *c += hit as usize;
        }
    }
    Ok(counts)
}

fn check_replications(replications: usize) -> Result<()> {
    if replications < MIN_POWER_REPLICATIONS {
        return Err(AdditivityError::Config(format!(
            "power estimation needs at least {MIN_POWER_REPLICATIONS} replications, got {replications}"
        )));
    }
    Ok(())
}

/// Estimates the rejection rate of `test` over `replications` datasets.
///
/// Omnibus tests use `calibration` when given, otherwise they are calibrated
/// once from a seed derived from `base_stream`.
pub fn estimate_power(
    config: &GeneratorConfig,
    test: Method,
    alpha_level: f64,
    replications: usize,
    base_stream: &RngStream,
    calibration: Option<&MonteCarloCritical>,
) -> Result<PowerCell> {
    check_replications(replications)?;
    config.validate()?;
    let cal = match (test.is_omnibus(), calibration) {
        (true, Some(c)) => Some(c.clone()),
        (true, None) => Some(calibrate(
            test,
            config.a,
            config.b,
            alpha_level,
            DEFAULT_CALIBRATION_REPLICATIONS,
            calibration_seed(base_stream.seed),
        )?),
        (false, _) => None,
    };
    let counts = count_rejections(
        config,
        &[test],
        &[cal],
        alpha_level,
        replications,
        base_stream,
    )?;
    Ok(PowerCell {
        test,
        scheme: config.scheme,
        k: config.k,
        b: config.b,
        replications,
        rejections: counts[0],
        power: counts[0] as f64 / replications as f64,
        seed: base_stream.seed,
    })
}

/// Evaluates every test at every grid point.
///
/// Omnibus critical values are computed once per (test, b) with
/// `calibration_replications` null draws.
pub fn run_grid(
    template: &GeneratorConfig,
    grid: &[GridPoint],
    tests: &[Method],
    alpha_level: f64,
    replications: usize,
    calibration_replications: usize,
    seed: u64,
) -> Result<Vec<PowerCell>> {
    if grid.is_empty() || tests.is_empty() {
        return Err(AdditivityError::Config(
            "power grid and test list must be non-empty".into(),
        ));
    }
    check_replications(replications)?;

    let mut calibrations: BTreeMap<(Method, usize), MonteCarloCritical> = BTreeMap::new();
    for point in grid {
        for &t in tests.iter().filter(|t| t.is_omnibus()) {
            if let Entry::Vacant(slot) = calibrations.entry((t, point.b)) {
                slot.insert(calibrate(
                    t,
                    template.a,
                    point.b,
                    alpha_level,
                    calibration_replications,
                    calibration_seed(seed),
                )?);
            }
        }
    }

    let mut cells = Vec::with_capacity(grid.len() * tests.len());
    for point in grid {
        let config = template.at(point);
        config.validate()?;
        let cals: Vec<Option<MonteCarloCritical>> = tests
            .iter()
            .map(|t| calibrations.get(&(*t, point.b)).cloned())
            .collect();
        let counts = count_rejections(
            &config,
            tests,
            &cals,
            alpha_level,
            replications,
            &point.stream(seed),
        )?;
        for (&test, rejections) in tests.iter().zip(counts) {
            cells.push(PowerCell {
                test,
                scheme: point.scheme,
                k: point.k,
                b: point.b,
                replications,
                rejections,
                power: rejections as f64 / replications as f64,
                seed,
            });
        }
    }
    Ok(cells)
}

pub const POWER_TSV_HEADER: &str = "scheme\tk\tb\ttest\treplications\trejections\tpower\tseed";

pub fn write_power_tsv<W: Write>(mut out: W, cells: &[PowerCell]) -> std::io::Result<()> {
    writeln!(out, "{POWER_TSV_HEADER}")?;
    for c in cells {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.scheme, c.k, c.b, c.test, c.replications, c.rejections, c.power, c.seed
        )?;
    }
    Ok(())
}
