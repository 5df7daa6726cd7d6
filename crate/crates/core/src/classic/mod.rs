//! The classical additivity tests.
//!
//! Tukey and Mandel are referred to F distributions. Johnson–Graybill, LBI
//! and Tusell are functions of the residual spectrum whose null
//! distribution depends only on the layout size, so their critical values
//! come from Monte Carlo calibration (see [`calibrate`]).

mod cache;
mod calibration;
mod statistics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, CriticalValueCache};
pub use calibration::{
    calibrate, high_side_rank, low_side_rank, simulate_null, MonteCarloCritical,
    DEFAULT_CALIBRATION_REPLICATIONS,
};
pub use statistics::{
    mandel_statistic, omnibus_statistic, tukey_statistic, MandelDf, MandelStatistic, TukeyStatistic,
};

use crate::distributions::{f_cdf, f_quantile, FParams, RngStream};
use crate::error::{AdditivityError, Result};
use crate::tabular::{fit_additive, spectrum, DataMatrix};

/// Identifies a test of the additivity hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tukey,
    Mandel,
    JohnsonGraybill,
    Lbi,
    Tusell,
    ModifiedTukey,
}

impl Method {
    pub const CLASSIC: [Method; 5] = [
        Method::Tukey,
        Method::Mandel,
        Method::JohnsonGraybill,
        Method::Lbi,
        Method::Tusell,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Tukey => "tukey",
            Method::Mandel => "mandel",
            Method::JohnsonGraybill => "johnson_graybill",
            Method::Lbi => "lbi",
            Method::Tusell => "tusell",
            Method::ModifiedTukey => "modified_tukey",
        }
    }

    /// Spectrum-based tests needing Monte Carlo critical values.
    pub fn is_omnibus(&self) -> bool {
        matches!(self, Method::JohnsonGraybill | Method::Lbi | Method::Tusell)
    }

    pub fn rejection_side(&self) -> RejectionSide {
        match self {
            Method::Tusell => RejectionSide::Low,
            _ => RejectionSide::High,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = AdditivityError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "tukey" => Ok(Method::Tukey),
            "mandel" => Ok(Method::Mandel),
            "jg" | "johnson_graybill" => Ok(Method::JohnsonGraybill),
            "lbi" => Ok(Method::Lbi),
            "tusell" => Ok(Method::Tusell),
            "mtukey" | "modified_tukey" => Ok(Method::ModifiedTukey),
            other => Err(AdditivityError::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionSide {
    High,
    Low,
}

impl RejectionSide {
    pub fn rejects(&self, statistic: f64, critical_value: f64) -> bool {
        match self {
            RejectionSide::High => statistic > critical_value,
            RejectionSide::Low => statistic < critical_value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingKind {
    Permutation,
    Bootstrap,
}

/// Where the critical value of a test came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    F(FParams),
    MonteCarlo(MonteCarloCritical),
    Resampling {
        resampling: ResamplingKind,
        samples: usize,
        seed: u64,
        stream_id: u64,
    },
}

/// Result of one test of the additivity hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    #[serde(with = "crate::float_serde")]
    pub statistic: f64,
    pub reference: Reference,
    #[serde(with = "crate::float_serde")]
    pub critical_value: f64,
    pub alpha_level: f64,
    pub reject: bool,
    pub rejection_side: RejectionSide,
    #[serde(with = "crate::float_serde::option", default)]
    pub p_value: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TestOutcome {
    /// Builds an outcome whose decision follows from the statistic and the
    /// critical value.
    pub fn decide(
        method: Method,
        statistic: f64,
        reference: Reference,
        critical_value: f64,
        alpha_level: f64,
    ) -> TestOutcome {
        let rejection_side = method.rejection_side();
        TestOutcome {
            method,
            statistic,
            reference,
            critical_value,
            alpha_level,
            reject: rejection_side.rejects(statistic, critical_value),
            rejection_side,
            p_value: None,
            warnings: Vec::new(),
        }
    }
}

pub(crate) fn check_alpha(alpha_level: f64) -> Result<()> {
    if alpha_level > 0.0 && alpha_level < 1.0 {
        Ok(())
    } else {
        Err(AdditivityError::Domain(format!(
            "significance level must lie in (0, 1), got {alpha_level}"
        )))
    }
}

/// Upper-tail F p-value; an infinite statistic maps to 0.
fn f_p_value(statistic: f64, df: FParams) -> Result<f64> {
    if statistic.is_infinite() {
        return Ok(0.0);
    }
    Ok(1.0 - f_cdf(statistic.max(0.0), df)?)
}

fn uninformative_warning(a: usize, b: usize) -> String {
    format!(
        "uninformative test: min(a, b) - 1 = 1 for a {a}x{b} layout, the omnibus statistic is constant"
    )
}

/// Runs one of the five classical tests with default options.
///
/// Omnibus methods need either a matching `calibration` or a `stream` to
/// calibrate on the fly with [`DEFAULT_CALIBRATION_REPLICATIONS`] draws.
pub fn run_classic_test(
    data: &DataMatrix,
    method: Method,
    alpha_level: f64,
    calibration: Option<&MonteCarloCritical>,
    stream: Option<RngStream>,
) -> Result<TestOutcome> {
    run_classic_test_with(
        data,
        method,
        alpha_level,
        calibration,
        stream,
        MandelDf::default(),
    )
}

pub fn run_classic_test_with(
    data: &DataMatrix,
    method: Method,
    alpha_level: f64,
    calibration: Option<&MonteCarloCritical>,
    stream: Option<RngStream>,
    mandel_df: MandelDf,
) -> Result<TestOutcome> {
    check_alpha(alpha_level)?;
    match method {
        Method::Tukey => {
            let t = tukey_statistic(data)?;
            let crit = f_quantile(1.0 - alpha_level, t.df)?;
            let mut out =
                TestOutcome::decide(method, t.statistic, Reference::F(t.df), crit, alpha_level);
            out.p_value = Some(f_p_value(t.statistic, t.df)?);
            Ok(out)
        }
        Method::Mandel => {
            let m = mandel_statistic(data, mandel_df)?;
            let crit = f_quantile(1.0 - alpha_level, m.df)?;
            let mut out =
                TestOutcome::decide(method, m.statistic, Reference::F(m.df), crit, alpha_level);
            out.p_value = Some(f_p_value(m.statistic, m.df)?);
            Ok(out)
        }
        Method::JohnsonGraybill | Method::Lbi | Method::Tusell => {
            run_omnibus(data, method, alpha_level, calibration, stream)
        }
        Method::ModifiedTukey => Err(AdditivityError::Config(
            "modified Tukey is not a classical test; use modified::modified_tukey_test".into(),
        )),
    }
}

fn run_omnibus(
    data: &DataMatrix,
    method: Method,
    alpha_level: f64,
    calibration: Option<&MonteCarloCritical>,
    stream: Option<RngStream>,
) -> Result<TestOutcome> {
    let (a, b) = (data.rows(), data.cols());
    let spec = spectrum(&fit_additive(data)?)?;
    let statistic = omnibus_statistic(&spec, method)?;

    let (critical, p_value) = match (calibration, stream) {
        (Some(cal), _) => {
            if cal.method != method || cal.a != a || cal.b != b || cal.alpha_level != alpha_level {
                return Err(AdditivityError::CalibrationMismatch(format!(
                    "calibration is for {} {}x{} at alpha {}, test needs {} {}x{} at alpha {}",
                    cal.method, cal.a, cal.b, cal.alpha_level, method, a, b, alpha_level
                )));
            }
            (cal.clone(), None)
        }
        (None, Some(stream)) => {
            let null = simulate_null(method, a, b, DEFAULT_CALIBRATION_REPLICATIONS, stream.seed)?;
            let cal = MonteCarloCritical::from_null_sample(
                method,
                a,
                b,
                alpha_level,
                stream.seed,
                null.clone(),
            )?;
            let extreme = null
                .iter()
                .filter(|&&s| match method.rejection_side() {
                    RejectionSide::High => s >= statistic,
                    RejectionSide::Low => s <= statistic,
                })
                .count();
            let p = (1 + extreme) as f64 / (null.len() + 1) as f64;
            (cal, Some(p))
        }
        (None, None) => {
            return Err(AdditivityError::Config(format!(
                "{method} needs a Monte Carlo calibration or a random stream to calibrate"
            )))
        }
    };

    let crit_value = critical.critical_value;
    let mut out = TestOutcome::decide(
        method,
        statistic,
        Reference::MonteCarlo(critical),
        crit_value,
        alpha_level,
    );
    out.p_value = p_value;
    if a.min(b) - 1 == 1 {
        out.reject = false;
        out.warnings.push(uninformative_warning(a, b));
    }
    Ok(out)
}
