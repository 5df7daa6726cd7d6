//! F reference distribution and seeded sampling.
//!
//! The F distribution function is evaluated through the regularized
//! incomplete beta function (continued fraction, modified Lentz), and its
//! quantile by bisection on the beta scale, where the CDF is monotone and
//! the search interval is bounded.
//!
//! Random streams are ChaCha8 generators addressed by `(seed, stream_id)`:
//! ChaCha supports 2^64 independent streams per key, so parallel work gets
//! one stream per unit of work and results do not depend on scheduling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{AdditivityError, Result};

/// Degrees of freedom of an F distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FParams {
    pub df1: u64,
    pub df2: u64,
}

impl FParams {
    pub fn new(df1: u64, df2: u64) -> Result<Self> {
        if df1 == 0 || df2 == 0 {
            return Err(AdditivityError::Domain(format!(
                "F degrees of freedom must be positive, got ({df1}, {df2})"
            )));
        }
        Ok(FParams { df1, df2 })
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
///
/// Takes both `x` and `1 - x` so callers that know the complement exactly
/// do not lose precision near 1.
fn beta_reg(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * one_minus_x.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, one_minus_x) / b
    }
}

/// `P(F <= x)` for `F ~ F(df1, df2)`.
pub fn f_cdf(x: f64, p: FParams) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(AdditivityError::Domain(format!(
            "F cdf argument must be >= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let (d1, d2) = (p.df1 as f64, p.df2 as f64);
    let denom = d1 * x + d2;
    let cdf = beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / denom, d2 / denom);
    Ok(cdf.clamp(0.0, 1.0))
}

/// Inverse of [`f_cdf`] for `0 < prob < 1`.
pub fn f_quantile(prob: f64, p: FParams) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(AdditivityError::Domain(format!(
            "F quantile probability must lie in (0, 1), got {prob}"
        )));
    }
    let (d1, d2) = (p.df1 as f64, p.df2 as f64);
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    // Bisection on t = d1 x / (d1 x + d2) in (0, 1).
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid, 1.0 - mid) < prob {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok(d2 * t / (d1 * (1.0 - t)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of tags into a new seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Address of a reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream `index` under a key derived from this stream's address.
    ///
    /// Used for nested work (a test run on stream s spawning its own
    /// resamples), so children of different parents never collide.
    pub fn substream(&self, index: u64) -> RngStream {
        let key = splitmix64(splitmix64(self.seed) ^ self.stream_id.rotate_left(32));
        RngStream {
            seed: key,
            stream_id: index,
        }
    }
}

/// Draws `n` i.i.d. normal values from the start of `stream`.
pub fn sample_normal(stream: &RngStream, n: usize, mean: f64, sd: f64) -> Result<Vec<f64>> {
    let mut rng = stream.rng();
    normal_from(&mut rng, n, mean, sd)
}

pub(crate) fn normal_from<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    mean: f64,
    sd: f64,
) -> Result<Vec<f64>> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(AdditivityError::Domain(format!(
            "standard deviation must be finite and >= 0, got {sd}"
        )));
    }
    Ok((0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mean + sd * z
        })
        .collect())
}

/// Uniform random permutation of `0..n` drawn from the start of `stream`.
pub fn sample_permutation(stream: &RngStream, n: usize) -> Vec<usize> {
    let mut rng = stream.rng();
    permutation_from(&mut rng, n)
}

pub(crate) fn permutation_from<R: rand::Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}
