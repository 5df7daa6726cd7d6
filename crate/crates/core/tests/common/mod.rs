//! Direct transcriptions of the test statistics on plain nested vectors.
//!
//! Nothing here calls into the library's numerical code, so agreement with
//! the library is an independent check.

#![allow(dead_code)]

use additivity::distributions::sample_normal;
use additivity::{DataMatrix, RngStream};

pub type Grid = Vec<Vec<f64>>;

pub fn random_grid(a: usize, b: usize, seed: u64, id: u64) -> Grid {
    let z = sample_normal(&RngStream::new(seed, id), a * b, 0.0, 1.0).unwrap();
    (0..a).map(|i| z[i * b..(i + 1) * b].to_vec()).collect()
}

pub fn to_matrix(y: &Grid) -> DataMatrix {
    DataMatrix::from_rows(y).unwrap()
}

pub fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300)
}

pub struct Means {
    pub grand: f64,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
}

pub fn means(y: &Grid) -> Means {
    let a = y.len();
    let b = y[0].len();
    let mut grand = 0.0;
    let mut rows = vec![0.0; a];
    let mut cols = vec![0.0; b];
    for i in 0..a {
        for j in 0..b {
            grand += y[i][j];
            rows[i] += y[i][j];
            cols[j] += y[i][j];
        }
    }
    Means {
        grand: grand / (a * b) as f64,
        rows: rows.iter().map(|s| s / b as f64).collect(),
        cols: cols.iter().map(|s| s / a as f64).collect(),
    }
}

pub fn residuals(y: &Grid) -> Grid {
    let m = means(y);
    y.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, v)| v - m.rows[i] - m.cols[j] + m.grand)
                .collect()
        })
        .collect()
}

pub fn rss0(y: &Grid) -> f64 {
    residuals(y).iter().flatten().map(|r| r * r).sum()
}

/// Tukey's S_T from the printed mean squares.
pub fn tukey(y: &Grid) -> f64 {
    let a = y.len();
    let b = y[0].len();
    let m = means(y);
    let mut num = 0.0;
    for i in 0..a {
        for j in 0..b {
            num += y[i][j] * (m.rows[i] - m.grand) * (m.cols[j] - m.grand);
        }
    }
    let sr: f64 = m.rows.iter().map(|r| (r - m.grand).powi(2)).sum();
    let sc: f64 = m.cols.iter().map(|c| (c - m.grand).powi(2)).sum();
    let ms_int = num * num / (sr * sc);
    let mut total = 0.0;
    for row in y {
        for v in row {
            total += (v - m.grand).powi(2);
        }
    }
    let ms_error =
        (total - a as f64 * sc - b as f64 * sr - ms_int) / (((a - 1) * (b - 1)) as f64 - 1.0);
    ms_int / ms_error
}

/// Mandel's S_M as printed, rows regressed on column means.
pub fn mandel(y: &Grid) -> f64 {
    let a = y.len();
    let b = y[0].len();
    let m = means(y);
    let sc: f64 = m.cols.iter().map(|c| (c - m.grand).powi(2)).sum();
    let z: Vec<f64> = (0..a)
        .map(|i| (0..b).map(|j| y[i][j] * (m.cols[j] - m.grand)).sum::<f64>() / sc)
        .collect();
    let num = z.iter().map(|zi| (zi - 1.0).powi(2)).sum::<f64>() * sc / (a - 1) as f64;
    let mut den = 0.0;
    for i in 0..a {
        for j in 0..b {
            den += ((y[i][j] - m.rows[i]) - z[i] * (m.cols[j] - m.grand)).powi(2);
        }
    }
    num / (den / ((a - 1) * (b - 2)) as f64)
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
pub fn jacobi_eigenvalues(mut s: Grid) -> Vec<f64> {
    let n = s.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| s[p][q] * s[p][q])
            .sum();
        let diag: f64 = (0..n).map(|p| s[p][p] * s[p][p]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if s[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[k][p];
                    let skq = s[k][q];
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[p][k];
                    let sqk = s[q][k];
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
            }
        }
    }
    (0..n).map(|i| s[i][i]).collect()
}

/// Eigenvalues of R Rᵀ (always the a×a Gram), top min(a,b)-1, decreasing.
pub fn kappa(y: &Grid) -> Vec<f64> {
    let r = residuals(y);
    let a = r.len();
    let b = r[0].len();
    let gram: Grid = (0..a)
        .map(|i| {
            (0..a)
                .map(|k| (0..b).map(|j| r[i][j] * r[k][j]).sum())
                .collect()
        })
        .collect();
    let mut ev = jacobi_eigenvalues(gram);
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev.truncate(a.min(b) - 1);
    ev.iter().map(|&k| k.max(0.0)).collect()
}

pub fn omega(y: &Grid) -> Vec<f64> {
    let k = kappa(y);
    let s: f64 = k.iter().sum();
    k.iter().map(|x| x / s).collect()
}

pub fn johnson_graybill(y: &Grid) -> f64 {
    omega(y)[0]
}

pub fn lbi(y: &Grid) -> f64 {
    omega(y).iter().map(|w| w * w).sum()
}

pub fn tusell(y: &Grid) -> f64 {
    omega(y).iter().product()
}

/// Slope with the residual written out as `y - alpha - beta - mu`.
pub fn k0(y: &Grid) -> f64 {
    let m = means(y);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, row) in y.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let al = m.rows[i] - m.grand;
            let be = m.cols[j] - m.grand;
            num += (v - al - be - m.grand) * al * be;
            den += al * al * be * be;
        }
    }
    num / den
}

/// One sequential round alpha -> beta -> k, then the full-model RSS.
pub fn rss_one_iteration(y: &Grid) -> (f64, f64) {
    let a = y.len();
    let b = y[0].len();
    let m = means(y);
    let mu = m.grand;
    let be0: Vec<f64> = m.cols.iter().map(|c| c - mu).collect();
    let k = k0(y);

    let mut al1 = vec![0.0; a];
    for i in 0..a {
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..b {
            num += (y[i][j] - mu - be0[j]) * (1.0 + k * be0[j]);
            den += (1.0 + k * be0[j]).powi(2);
        }
        al1[i] = num / den;
    }
    let mut be1 = vec![0.0; b];
    for j in 0..b {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..a {
            num += (y[i][j] - mu - al1[i]) * (1.0 + k * al1[i]);
            den += (1.0 + k * al1[i]).powi(2);
        }
        be1[j] = num / den;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a {
        for j in 0..b {
            num += (y[i][j] - al1[i] - be1[j] - mu) * al1[i] * be1[j];
            den += al1[i].powi(2) * be1[j].powi(2);
        }
    }
    let k1 = num / den;
    let mut rss = 0.0;
    for i in 0..a {
        for j in 0..b {
            rss += (y[i][j] - mu - al1[i] - be1[j] - k1 * al1[i] * be1[j]).powi(2);
        }
    }
    (rss, k1)
}

pub fn modified_f(y: &Grid) -> f64 {
    let a = y.len();
    let b = y[0].len();
    let (rss, _) = rss_one_iteration(y);
    (rss0(y) - rss) / (rss / (a * b - a - b) as f64)
}

/// Additive least-squares fit by normal equations on a sum-to-zero design.
/// Returns (mu, alpha, beta).
pub fn additive_least_squares(y: &Grid) -> (f64, Vec<f64>, Vec<f64>) {
    let a = y.len();
    let b = y[0].len();
    let p = 1 + (a - 1) + (b - 1);
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for i in 0..a {
        for j in 0..b {
            let mut x = vec![0.0; p];
            x[0] = 1.0;
            if i < a - 1 {
                x[1 + i] = 1.0;
            } else {
                for r in 0..a - 1 {
                    x[1 + r] = -1.0;
                }
            }
            if j < b - 1 {
                x[a + j] = 1.0;
            } else {
                for c in 0..b - 1 {
                    x[a + c] = -1.0;
                }
            }
            for u in 0..p {
                xty[u] += x[u] * y[i][j];
                for v in 0..p {
                    xtx[u][v] += x[u] * x[v];
                }
            }
        }
    }
    let theta = gauss_solve(xtx, xty);
    let mut alpha: Vec<f64> = theta[1..a].to_vec();
    alpha.push(-alpha.iter().sum::<f64>());
    let mut beta: Vec<f64> = theta[a..].to_vec();
    beta.push(-beta.iter().sum::<f64>());
    (theta[0], alpha, beta)
}

fn gauss_solve(mut m: Grid, mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        v.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            v[r] -= f * v[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (v[r] - s) / m[r][r];
    }
    x
}
