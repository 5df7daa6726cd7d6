use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Method;
use crate::distributions::FParams;
use crate::error::{AdditivityError, Result};
use crate::tabular::{fit_additive, AdditiveFit, DataMatrix, SpectrumSummary};

/// Relative size below which a sum of squares counts as zero.
pub(crate) const NEGLIGIBLE: f64 = 1e-12;

/// Total sum of squares about the grand mean; the scale for zero checks.
pub(crate) fn centered_ss(fit: &AdditiveFit, data: &DataMatrix) -> f64 {
    data.values()
        .iter()
        .map(|y| (y - fit.grand_mean).powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyStatistic {
    pub statistic: f64,
    pub ms_int: f64,
    pub ms_error: f64,
    pub df: FParams,
}

/// Tukey's one-degree-of-freedom statistic `MS_int / MS_error`.
pub fn tukey_statistic(data: &DataMatrix) -> Result<TukeyStatistic> {
    let (a, b) = (data.rows(), data.cols());
    let cells = (a - 1) * (b - 1);
    if cells <= 1 {
        return Err(AdditivityError::InsufficientDf {
            method: Method::Tukey,
            detail: format!("(a-1)(b-1)-1 = {} for a {a}x{b} layout", cells as i64 - 1),
        });
    }
    let fit = fit_additive(data)?;
    let sst = centered_ss(&fit, data);
    let ssa: f64 = fit.row_effects.iter().map(|x| x * x).sum();
    let ssb: f64 = fit.col_effects.iter().map(|x| x * x).sum();
    if ssa * b as f64 <= NEGLIGIBLE * sst || ssb * a as f64 <= NEGLIGIBLE * sst {
        return Err(AdditivityError::DegenerateData(
            "row or column effects are all zero, Tukey's interaction term is undefined".into(),
        ));
    }

    let y = data.values();
    let mut cross = 0.0;
    for i in 0..a {
        for j in 0..b {
            cross += y[(i, j)] * fit.row_effects[i] * fit.col_effects[j];
        }
    }
    let ms_int = cross * cross / (ssa * ssb);
    let error_ss = sst - a as f64 * ssb - b as f64 * ssa - ms_int;
    if error_ss <= NEGLIGIBLE * sst {
        return Err(AdditivityError::DegenerateData(
            "error mean square is zero, the data fit the multiplicative model exactly".into(),
        ));
    }
    let df2 = (cells - 1) as u64;
    let ms_error = error_ss / df2 as f64;
    Ok(TukeyStatistic {
        statistic: ms_int / ms_error,
        ms_int,
        ms_error,
        df: FParams::new(1, df2)?,
    })
}

/// Second degree of freedom used for Mandel's F reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MandelDf {
    /// `(a-1)(b-2)`, the divisor of the error mean square.
    #[default]
    ErrorDivisor,
    /// `(a-1)(b-1)`, the value stated alongside the original formula.
    Stated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MandelStatistic {
    pub statistic: f64,
    /// Per-row regression slopes on the column effects.
    pub slopes: DVector<f64>,
    pub df: FParams,
}

/// Mandel's rows-regression statistic.
///
/// A zero error sum of squares with a nonzero slope spread gives an infinite
/// statistic; exactly equal slopes give 0.
pub fn mandel_statistic(data: &DataMatrix, df_rule: MandelDf) -> Result<MandelStatistic> {
    let (a, b) = (data.rows(), data.cols());
    if b < 3 {
        return Err(AdditivityError::InsufficientDf {
            method: Method::Mandel,
            detail: format!("need at least 3 columns, got {b}"),
        });
    }
    let fit = fit_additive(data)?;
    let sst = centered_ss(&fit, data);
    let ssb: f64 = fit.col_effects.iter().map(|x| x * x).sum();
    if ssb * a as f64 <= NEGLIGIBLE * sst {
        return Err(AdditivityError::DegenerateData(
            "column effects are all zero, row slopes are undefined".into(),
        ));
    }
    let y = data.values();
    let slopes = DVector::from_fn(a, |i, _| {
        (0..b).map(|j| y[(i, j)] * fit.col_effects[j]).sum::<f64>() / ssb
    });

    let between: f64 = slopes.iter().map(|z| (z - 1.0).powi(2)).sum::<f64>() * ssb;
    let mut within = 0.0;
    for i in 0..a {
        let row_mean = fit.grand_mean + fit.row_effects[i];
        for j in 0..b {
            within += ((y[(i, j)] - row_mean) - slopes[i] * fit.col_effects[j]).powi(2);
        }
    }
    let df1 = (a - 1) as u64;
    let divisor = ((a - 1) * (b - 2)) as f64;
    let df2 = match df_rule {
        MandelDf::ErrorDivisor => ((a - 1) * (b - 2)) as u64,
        MandelDf::Stated => ((a - 1) * (b - 1)) as u64,
    };
    let tol = NEGLIGIBLE * sst;
    let statistic = if between <= tol {
        0.0
    } else if within <= tol {
        f64::INFINITY
    } else {
        (between / df1 as f64) / (within / divisor)
    };
    Ok(MandelStatistic {
        statistic,
        slopes,
        df: FParams::new(df1, df2)?,
    })
}

/// Johnson–Graybill (`ω₁`), LBI (`Σω²`) or Tusell (`Πω`) statistic.
pub fn omnibus_statistic(spec: &SpectrumSummary, method: Method) -> Result<f64> {
    if spec.kappa.iter().sum::<f64>() <= 0.0 {
        return Err(AdditivityError::DegenerateSpectrum);
    }
    match method {
        Method::JohnsonGraybill => Ok(spec.omega[0]),
        Method::Lbi => Ok(spec.omega.iter().map(|w| w * w).sum()),
        Method::Tusell => Ok(spec.omega.iter().product()),
        other => Err(AdditivityError::Config(format!(
            "{other} is not a spectrum-based test"
        ))),
    }
}
