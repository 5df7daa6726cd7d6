mod common;

use additivity::classic::{mandel_statistic, omnibus_statistic, tukey_statistic, MandelDf};
use additivity::modified::{fit_interaction, modified_tukey_test, FitOptions};
use additivity::{fit_additive, spectrum, DataMatrix, Method};
use common::*;

#[test]
fn two_by_two_against_least_squares() {
    let y = vec![vec![1.0, 2.0], vec![3.0, 5.0]];
    let (mu, alpha, beta) = additive_least_squares(&y);
    assert!((mu - 2.75).abs() < 1e-12);
    assert!((alpha[0] + 1.25).abs() < 1e-12 && (alpha[1] - 1.25).abs() < 1e-12);
    assert!((beta[0] + 0.75).abs() < 1e-12 && (beta[1] - 0.75).abs() < 1e-12);

    let fit = fit_additive(&to_matrix(&y)).unwrap();
    assert!((fit.grand_mean - mu).abs() < 1e-12);
    let rss: f64 = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (y[i][j] - mu - alpha[i] - beta[j]).powi(2))
        .sum();
    assert!((rss - 0.25).abs() < 1e-12);
    assert!((fit.rss0 - rss).abs() < 1e-12);

    // 2x2 Gram matrix eigenvalue via the characteristic polynomial
    let r = residuals(&y);
    let g = [
        [
            r[0][0] * r[0][0] + r[0][1] * r[0][1],
            r[0][0] * r[1][0] + r[0][1] * r[1][1],
        ],
        [
            r[1][0] * r[0][0] + r[1][1] * r[0][1],
            r[1][0] * r[1][0] + r[1][1] * r[1][1],
        ],
    ];
    let tr = g[0][0] + g[1][1];
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    let top = 0.5 * (tr + (tr * tr - 4.0 * det).sqrt());
    assert!((top - 0.25).abs() < 1e-12);
    let s = spectrum(&fit).unwrap();
    assert!((s.kappa[0] - top).abs() < 1e-12);
}

#[test]
fn additive_fit_matches_least_squares_on_random_grids() {
    for id in 0..20 {
        let a = 2 + (id as usize % 4);
        let b = 3 + (id as usize % 5);
        let y = random_grid(a, b, 101, id);
        let (mu, alpha, beta) = additive_least_squares(&y);
        let fit = fit_additive(&to_matrix(&y)).unwrap();
        assert!((fit.grand_mean - mu).abs() < 1e-10);
        for i in 0..a {
            assert!((fit.row_effects[i] - alpha[i]).abs() < 1e-10);
        }
        for j in 0..b {
            assert!((fit.col_effects[j] - beta[j]).abs() < 1e-10);
        }
    }
}

/// Power iteration with deflation, run until successive estimates agree to 1e-12.
fn power_iteration_spectrum(gram: &[Vec<f64>], count: usize) -> Vec<f64> {
    let n = gram.len();
    let mut m: Vec<Vec<f64>> = gram.to_vec();
    let mut out = Vec::new();
    for e in 0..count {
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i + e) as f64).sin()).collect();
        let mut lambda = 0.0;
        for _ in 0..200_000 {
            let w: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| m[i][j] * v[j]).sum())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
            let rq: f64 = (0..n)
                .map(|i| next[i] * (0..n).map(|j| m[i][j] * next[j]).sum::<f64>())
                .sum();
            let converged = (rq - lambda).abs() <= 1e-12 * rq.abs();
            lambda = rq;
            v = next;
            if converged {
                break;
            }
        }
        out.push(lambda);
        for i in 0..n {
            for j in 0..n {
                m[i][j] -= lambda * v[i] * v[j];
            }
        }
    }
    out
}

#[test]
fn random_four_by_five_spectrum_against_power_iteration() {
    let y = random_grid(4, 5, 2024, 0);
    let r = residuals(&y);
    let gram: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            (0..4)
                .map(|k| (0..5).map(|j| r[i][j] * r[k][j]).sum())
                .collect()
        })
        .collect();
    let oracle = power_iteration_spectrum(&gram, 3);
    let s = spectrum(&fit_additive(&to_matrix(&y)).unwrap()).unwrap();
    assert_eq!(s.len(), 3);
    for (lib, ora) in s.kappa.iter().zip(&oracle) {
        assert!(rel_close(*lib, *ora, 1e-9), "{lib} vs {ora}");
    }
    let jac = kappa(&y);
    for (lib, ora) in s.kappa.iter().zip(&jac) {
        assert!(rel_close(*lib, *ora, 1e-9), "{lib} vs {ora}");
    }
}

#[test]
fn tukey_on_seeded_three_by_four() {
    let y = random_grid(3, 4, 7, 3);
    let lib = tukey_statistic(&to_matrix(&y)).unwrap();
    assert!(rel_close(lib.statistic, tukey(&y), 1e-9));
    assert_eq!(lib.df.df1, 1);
    assert_eq!(lib.df.df2, 5);
}

#[test]
fn mandel_on_seeded_five_by_five() {
    let y = random_grid(5, 5, 7, 5);
    let lib = mandel_statistic(&to_matrix(&y), MandelDf::default()).unwrap();
    assert!(rel_close(lib.statistic, mandel(&y), 1e-9));
    assert_eq!((lib.df.df1, lib.df.df2), (4, 12));
}

#[test]
fn k0_on_seeded_ten_by_ten() {
    let y = random_grid(10, 10, 77, 0);
    let fit = fit_interaction(&to_matrix(&y), &FitOptions::default()).unwrap();
    let r = residuals(&y);
    let m = means(&y);
    let al: Vec<f64> = m.rows.iter().map(|x| x - m.grand).collect();
    let be: Vec<f64> = m.cols.iter().map(|x| x - m.grand).collect();
    let mut num = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            num += r[i][j] * al[i] * be[j];
        }
    }
    let den = al.iter().map(|x| x * x).sum::<f64>() * be.iter().map(|x| x * x).sum::<f64>();
    assert!(rel_close(fit.stage0.k, num / den, 1e-10));
    assert!(rel_close(fit.stage0.k, k0(&y), 1e-10));
    assert!(fit.rss <= fit.rss0);
}

#[test]
fn full_pipeline_against_oracles() {
    for id in 0..30 {
        let a = 3 + (id as usize % 6);
        let b = 3 + (id as usize * 7 % 10);
        let y = random_grid(a, b, 4242, id);
        let d = to_matrix(&y);
        let spec = spectrum(&fit_additive(&d).unwrap()).unwrap();
        assert!(rel_close(
            omnibus_statistic(&spec, Method::JohnsonGraybill).unwrap(),
            johnson_graybill(&y),
            1e-9
        ));
        assert!(rel_close(
            omnibus_statistic(&spec, Method::Lbi).unwrap(),
            lbi(&y),
            1e-9
        ));
        assert!(rel_close(
            omnibus_statistic(&spec, Method::Tusell).unwrap(),
            tusell(&y),
            1e-9
        ));
        let fit = fit_interaction(&d, &FitOptions::default()).unwrap();
        let (rss, k1) = rss_one_iteration(&y);
        assert!(rel_close(fit.rss, rss, 1e-9));
        assert!(rel_close(fit.stage1.k, k1, 1e-9));
        let out = modified_tukey_test(&d, 0.05).unwrap();
        assert!(rel_close(out.statistic, modified_f(&y), 1e-9));
    }
}

#[test]
fn tall_and_wide_layouts_share_spectrum() {
    let y = random_grid(7, 4, 31, 0);
    let d = to_matrix(&y);
    let s = spectrum(&fit_additive(&d).unwrap()).unwrap();
    let t = spectrum(&fit_additive(&d.transpose()).unwrap()).unwrap();
    assert_eq!(s.len(), 3);
    for (x, y) in s.kappa.iter().zip(&t.kappa) {
        assert!(rel_close(*x, *y, 1e-10));
    }
    let oracle = kappa(&y);
    for (x, o) in s.kappa.iter().zip(&oracle) {
        assert!(rel_close(*x, *o, 1e-9));
    }
}

#[test]
fn data_matrix_round_trip_from_grid() {
    let y = random_grid(3, 6, 5, 5);
    let d = DataMatrix::from_rows(&y).unwrap();
    for i in 0..3 {
        for j in 0..6 {
            assert_eq!(d.get(i, j), y[i][j]);
        }
    }
}
