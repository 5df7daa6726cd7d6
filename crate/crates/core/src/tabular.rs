//! Two-way layout with one observation per cell.
//!
//! [`DataMatrix`] holds the a×b grid, [`fit_additive`] removes the estimated
//! main effects by double centering and [`spectrum`] extracts the eigenvalues
//! of the residual Gram matrix that drive the omnibus tests.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{AdditivityError, Result};

/// Observations `y[i][j]`, rows are levels of the first factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = values.shape();
        if rows < 2 || cols < 2 {
            return Err(AdditivityError::DimensionTooSmall { rows, cols });
        }
        for i in 0..rows {
            for j in 0..cols {
                if !values[(i, j)].is_finite() {
                    return Err(AdditivityError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(DataMatrix {
            values,
            row_labels: None,
            col_labels: None,
        })
    }

    /// Builds a matrix from row-major nested vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let a = rows.len();
        let b = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != b) {
            return Err(AdditivityError::Shape(format!(
                "row {i} has {} cells, expected {b}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(a, b, |i, j| rows[i][j]))
    }

    pub fn from_fn(a: usize, b: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(a, b, f))
    }

    pub fn with_labels(
        mut self,
        row_labels: Option<Vec<String>>,
        col_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(l) = &row_labels {
            if l.len() != self.rows() {
                return Err(AdditivityError::Shape(format!(
                    "{} row labels for {} rows",
                    l.len(),
                    self.rows()
                )));
            }
        }
        if let Some(l) = &col_labels {
            if l.len() != self.cols() {
                return Err(AdditivityError::Shape(format!(
                    "{} column labels for {} columns",
                    l.len(),
                    self.cols()
                )));
            }
        }
        self.row_labels = row_labels;
        self.col_labels = col_labels;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    /// Swaps the roles of the two factors.
    pub fn transpose(&self) -> DataMatrix {
        DataMatrix {
            values: self.values.transpose(),
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
        }
    }

    /// Applies `f` cellwise; fails if any resulting cell is not finite.
    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<DataMatrix> {
        let values = self.values.map(f);
        let mut out = DataMatrix::new(values)?;
        out.row_labels = self.row_labels.clone();
        out.col_labels = self.col_labels.clone();
        Ok(out)
    }
}

/// Least-squares fit of the additive model `y = mu + alpha_i + beta_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveFit {
    pub grand_mean: f64,
    pub row_effects: DVector<f64>,
    pub col_effects: DVector<f64>,
    pub residuals: DMatrix<f64>,
    pub rss0: f64,
}

impl AdditiveFit {
    pub fn rows(&self) -> usize {
        self.residuals.nrows()
    }

    pub fn cols(&self) -> usize {
        self.residuals.ncols()
    }

    /// Fitted additive value for cell `(i, j)`.
    pub fn fitted(&self, i: usize, j: usize) -> f64 {
        self.grand_mean + self.row_effects[i] + self.col_effects[j]
    }
}

pub fn fit_additive(data: &DataMatrix) -> Result<AdditiveFit> {
    let y = data.values();
    let (a, b) = y.shape();
    if a < 2 || b < 2 {
        return Err(AdditivityError::DimensionTooSmall { rows: a, cols: b });
    }
    let grand_mean = y.mean();
    let row_means = DVector::from_fn(a, |i, _| y.row(i).mean());
    let col_means = DVector::from_fn(b, |j, _| y.column(j).mean());
    let row_effects = row_means.add_scalar(-grand_mean);
    let col_effects = col_means.add_scalar(-grand_mean);
    let residuals = DMatrix::from_fn(a, b, |i, j| {
        y[(i, j)] - row_means[i] - col_means[j] + grand_mean
    });
    let rss0 = residuals.iter().map(|r| r * r).sum();
    Ok(AdditiveFit {
        grand_mean,
        row_effects,
        col_effects,
        residuals,
        rss0,
    })
}

/// Ordered eigenvalues of `R Rᵀ` (`kappa`) and their normalized shares (`omega`).
///
/// Always holds exactly `min(a, b) - 1` entries, zero-padded when the
/// residual matrix has lower rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub kappa: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SpectrumSummary {
    /// Builds a summary from already computed eigenvalues (any order).
    pub fn from_eigenvalues(mut kappa: Vec<f64>) -> Result<Self> {
        kappa.sort_by(|x, y| y.total_cmp(x));
        let scale = kappa.iter().fold(0.0_f64, |m, k| m.max(k.abs()));
        let tol = scale * 1e-12;
        for k in kappa.iter_mut() {
            if *k < tol {
                *k = 0.0;
            }
        }
        let total: f64 = kappa.iter().sum();
        if !(total > 0.0) {
            return Err(AdditivityError::DegenerateSpectrum);
        }
        let omega = kappa.iter().map(|k| k / total).collect();
        Ok(SpectrumSummary { kappa, omega })
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }
}

pub fn spectrum(fit: &AdditiveFit) -> Result<SpectrumSummary> {
    let r = &fit.residuals;
    let (a, b) = r.shape();
    let m = a.min(b) - 1;
    // RRᵀ and RᵀR share their nonzero eigenvalues; factor the smaller one.
    let gram = if a <= b {
        r * r.transpose()
    } else {
        r.transpose() * r
    };
    let mut eig: Vec<f64> = SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig.truncate(m);
    SpectrumSummary::from_eigenvalues(eig)
}
