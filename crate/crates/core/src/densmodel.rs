//! Density/intensity model on `[0, 1]`.
//!
//! Under the null the sample is uniform. The alternative `f_{r,I}` raises the
//! density on a sub-interval `I` by a factor `r` and renormalizes. Windows are
//! pairs of order-statistic indices, so the scan runs over `{1, ..., n}` just
//! as in the Gaussian model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Order statistics `Y_(1) <= ... <= Y_(n)` in `[0, 1]`, `n >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    points: Vec<f64>,
}

impl PointSample {
    /// Sorts `points`; fails if fewer than two or any lies outside `[0, 1]`.
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidSize(format!(
                "point sample needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!("point {} = {} outside [0, 1]", i + 1, points[i])));
        }
        points.sort_by(f64::total_cmp);
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Pair of order-statistic indices, `1 <= j < k <= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderWindow {
    pub j: usize,
    pub k: usize,
}

impl OrderWindow {
    pub fn new(j: usize, k: usize) -> Self {
        Self { j, k }
    }

    /// Points in the closed interval `[Y_(j), Y_(k)]`.
    pub fn count(&self) -> usize {
        self.k - self.j + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityAlternative {
    pub r: f64,
    pub lo: f64,
    pub hi: f64,
}

impl DensityAlternative {
    pub fn new(r: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::Domain(format!("elevation ratio must be finite and >= 1, got {r}")));
        }
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Domain(format!("interval [{lo}, {hi}] is not a sub-interval of [0, 1]")));
        }
        Ok(Self { r, lo, hi })
    }

    /// Probability mass of `I` under `f_{r,I}`.
    pub fn mass_inside(&self) -> f64 {
        let len = self.hi - self.lo;
        self.r * len / (self.r * len + 1.0 - len)
    }

    /// Inverse CDF of `f_{r,I}`; piecewise linear with three pieces.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.r == 1.0 {
            return u;
        }
        let len = self.hi - self.lo;
        let z = self.r * len + 1.0 - len;
        let below = self.lo / z;
        let inside = self.r * len / z;
        if u < below {
            u * z
        } else if u < below + inside {
            self.lo + (u - below) * z / self.r
        } else {
            (self.hi + (u - below - inside) * z).min(1.0)
        }
    }
}

/// Square root of twice the one-sided log likelihood ratio for an elevated
/// density on `[Y_(j), Y_(k)]`.
///
/// Depends on the sample only through `n`, the count `m = k - j + 1` and the
/// uniform mass `p = Y_(k) - Y_(j)`.
pub fn density_stat(sample: &PointSample, win: OrderWindow) -> Result<f64> {
    let n = sample.len();
    if !(1 <= win.j && win.j < win.k && win.k <= n) {
        return Err(Error::WindowOutOfRange { j: win.j, k: win.k, n });
    }
    let p = sample.points[win.k - 1] - sample.points[win.j - 1];
    if p <= 0.0 {
        return Err(Error::DegenerateWindow { j: win.j, k: win.k });
    }
    Ok(sqrt_2_log_lr(n, win.count(), p))
}

/// `sqrt(2 logLR)` as a function of `(n, m, p)`; zero unless `m / n > p`.
#[inline]
pub fn sqrt_2_log_lr(n: usize, m: usize, p: f64) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    if mf / nf <= p {
        return 0.0;
    }
    let mut llr = mf * (mf / (nf * p)).ln();
    if m < n {
        let rest = nf - mf;
        llr += rest * (rest / (nf * (1.0 - p))).ln();
    }
    (2.0 * llr).max(0.0).sqrt()
}

pub(crate) fn fill_uniform_sorted(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.gen::<f64>();
    }
    out.sort_unstable_by(f64::total_cmp);
}

pub fn simulate_uniform(n: usize, seed: u64) -> Result<PointSample> {
    simulate_uniform_stream(n, seed, 0)
}

pub fn simulate_uniform_stream(n: usize, seed: u64, stream: u64) -> Result<PointSample> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("point sample needs n >= 2, got {n}")));
    }
    let mut points = vec![0.0; n];
    fill_uniform_sorted(&mut rng::stream(seed, stream), &mut points);
    Ok(PointSample { points })
}

/// `n` draws from `f_{r,I}` by inverse CDF applied to the same uniform
/// stream `simulate_uniform` uses, so `r = 1` reproduces it exactly.
pub fn simulate_alternative(n: usize, alt: &DensityAlternative, seed: u64) -> Result<PointSample> {
    simulate_alternative_stream(n, alt, seed, 0)
}

pub fn simulate_alternative_stream(
    n: usize,
    alt: &DensityAlternative,
    seed: u64,
    stream: u64,
) -> Result<PointSample> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("point sample needs n >= 2, got {n}")));
    }
    let mut rng = rng::stream(seed, stream);
    let mut points: Vec<f64> = (0..n).map(|_| alt.quantile(rng.gen::<f64>())).collect();
    points.sort_unstable_by(f64::total_cmp);
    Ok(PointSample { points })
}
