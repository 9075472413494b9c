//! Gaussian sequence model: observations `Y_i = mu * 1(j <= i <= k) + Z_i`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// Observations `Y_1..Y_n`. Always non-empty with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    values: Vec<f64>,
}

impl Sequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSize("sequence must hold at least one value".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("value at index {} is not finite", i + 1)));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A closed interval `[j, k]` of 1-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub j: usize,
    pub k: usize,
}

impl Window {
    pub fn new(j: usize, k: usize) -> Self {
        Self { j, k }
    }

    pub fn width(&self) -> usize {
        self.k + 1 - self.j
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.j >= 1 && self.j <= self.k && self.k <= n {
            Ok(())
        } else {
            Err(Error::WindowOutOfRange { j: self.j, k: self.k, n })
        }
    }

    /// Number of indices shared with `other`.
    pub fn overlap(&self, other: &Window) -> usize {
        let lo = self.j.max(other.j);
        let hi = self.k.min(other.k);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }

    pub fn symmetric_difference(&self, other: &Window) -> usize {
        self.width() + other.width() - 2 * self.overlap(other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub mu: f64,
    pub window: Window,
}

impl SignalSpec {
    pub fn new(mu: f64, window: Window) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("signal amplitude must be finite and >= 0, got {mu}")));
        }
        Ok(Self { mu, window })
    }

    /// Width-`w` window centered in `1..=n`.
    pub fn centered(mu: f64, n: usize, w: usize) -> Result<Self> {
        if w == 0 || w > n {
            return Err(Error::InvalidSize(format!("signal width {w} not in [1, {n}]")));
        }
        let j = (n - w) / 2 + 1;
        Self::new(mu, Window::new(j, j + w - 1))
    }
}

/// `sums[0] = 0`, `sums[i] = Y_1 + ... + Y_i`, accumulated with Neumaier
/// compensation so that each stored prefix is within an ulp or so of the
/// exact running sum.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSums {
    sums: Vec<f64>,
}

impl PrefixSums {
    pub fn from_slice(values: &[f64]) -> Self {
        let mut sums = Vec::with_capacity(values.len() + 1);
        sums.push(0.0);
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        for &v in values {
            let t = s + v;
            if s.abs() >= v.abs() {
                c += (s - t) + v;
            } else {
                c += (v - t) + s;
            }
            s = t;
            sums.push(s + c);
        }
        Self { sums }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sums
    }

    /// Number of observations `n`.
    pub fn n(&self) -> usize {
        self.sums.len() - 1
    }

    /// Sum over the half-open index range `(a, b]`. No bounds checks beyond
    /// slice indexing.
    #[inline]
    pub fn range_sum(&self, a: usize, b: usize) -> f64 {
        self.sums[b] - self.sums[a]
    }

    pub fn window_sum(&self, win: Window) -> Result<f64> {
        win.check(self.n())?;
        Ok(self.range_sum(win.j - 1, win.k))
    }
}

pub fn prefix_sums(seq: &Sequence) -> PrefixSums {
    PrefixSums::from_slice(seq.values())
}

/// Standardized window sum `sum_{i=j}^k Y_i / sqrt(k - j + 1)`.
pub fn window_stat(ps: &PrefixSums, win: Window) -> Result<f64> {
    let sum = ps.window_sum(win)?;
    Ok(sum / (win.width() as f64).sqrt())
}

pub(crate) fn fill_standard_normal(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// `n` i.i.d. N(0, 1) draws from stream `(seed, 0)`.
pub fn simulate_null(n: usize, seed: u64) -> Result<Sequence> {
    simulate_null_stream(n, seed, 0)
}

pub fn simulate_null_stream(n: usize, seed: u64, stream: u64) -> Result<Sequence> {
    if n == 0 {
        return Err(Error::InvalidSize("cannot simulate an empty sequence".into()));
    }
    let mut values = vec![0.0; n];
    fill_standard_normal(&mut rng::stream(seed, stream), &mut values);
    Ok(Sequence { values })
}

pub fn inject_signal(seq: &Sequence, sig: &SignalSpec) -> Result<Sequence> {
    sig.window.check(seq.len())?;
    let mut values = seq.values.clone();
    for v in &mut values[sig.window.j - 1..sig.window.k] {
        *v += sig.mu;
    }
    Ok(Sequence { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(v: &[f64]) -> Sequence {
        Sequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn prefix_sums_examples() {
        assert_eq!(prefix_sums(&seq(&[1.0, 2.0, 3.0])).as_slice(), &[0.0, 1.0, 3.0, 6.0]);
        assert_eq!(prefix_sums(&seq(&[0.0; 4])).as_slice(), &[0.0; 5]);
        assert_eq!(prefix_sums(&seq(&[-1.0])).as_slice(), &[0.0, -1.0]);
    }

    #[test]
    fn compensation_beats_naive_accumulation() {
        // 1e16 swamps the unit terms under naive summation.
        let mut v = vec![1e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1e16);
        let ps = prefix_sums(&seq(&v));
        assert_eq!(ps.as_slice()[v.len()], 1000.0);
    }

    #[test]
    fn window_stat_examples() {
        let ps = prefix_sums(&seq(&[1.0, 2.0, 3.0]));
        let s = window_stat(&ps, Window::new(2, 3)).unwrap();
        assert!((s - 5.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((s - 3.53553).abs() < 1e-5);
        assert_eq!(window_stat(&ps, Window::new(1, 1)).unwrap(), 1.0);
        let zeros = prefix_sums(&seq(&[0.0; 5]));
        assert_eq!(window_stat(&zeros, Window::new(2, 5)).unwrap(), 0.0);
    }

    #[test]
    fn window_stat_rejects_out_of_range() {
        let ps = prefix_sums(&seq(&[1.0, 2.0, 3.0]));
        for w in [Window::new(0, 1), Window::new(2, 4), Window::new(3, 2)] {
            assert!(matches!(window_stat(&ps, w), Err(Error::WindowOutOfRange { .. })));
        }
    }

    #[test]
    fn null_simulation_is_deterministic() {
        let a = simulate_null(5, 99).unwrap();
        let b = simulate_null(5, 99).unwrap();
        let bits = |s: &Sequence| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&simulate_null(5, 100).unwrap()));
        assert!(matches!(simulate_null(0, 1), Err(Error::InvalidSize(_))));
    }

    #[test]
    fn null_simulation_moments() {
        let n = 100_000;
        let s = simulate_null(n, 2024).unwrap();
        let mean = s.values().iter().sum::<f64>() / n as f64;
        let var = s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((0.95..=1.05).contains(&var), "var {var}");
    }

    #[test]
    fn inject_signal_examples() {
        let out = inject_signal(&seq(&[0.0; 3]), &SignalSpec::new(2.0, Window::new(2, 2)).unwrap()).unwrap();
        assert_eq!(out.values(), &[0.0, 2.0, 0.0]);
        let base = seq(&[0.3, -1.2, 4.0]);
        let same = inject_signal(&base, &SignalSpec::new(0.0, Window::new(1, 3)).unwrap()).unwrap();
        assert_eq!(same, base);
        let out = inject_signal(&seq(&[1.0, 1.0]), &SignalSpec::new(0.5, Window::new(1, 2)).unwrap()).unwrap();
        assert_eq!(out.values(), &[1.5, 1.5]);
        let bad = SignalSpec::new(1.0, Window::new(2, 4)).unwrap();
        assert!(inject_signal(&base, &bad).is_err());
        assert!(SignalSpec::new(-0.1, Window::new(1, 1)).is_err());
    }

    #[test]
    fn centered_signal_placement() {
        let s = SignalSpec::centered(1.0, 10_000, 1000).unwrap();
        assert_eq!(s.window, Window::new(4501, 5500));
        assert_eq!(SignalSpec::centered(1.0, 5, 5).unwrap().window, Window::new(1, 5));
    }

    #[test]
    fn sequence_rejects_bad_input() {
        assert!(Sequence::new(vec![]).is_err());
        assert!(Sequence::new(vec![1.0, f64::NAN]).is_err());
    }
}
