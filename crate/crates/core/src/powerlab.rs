//! Power studies for the Gaussian sequence model.
//!
//! All experiments draw replicate `r` from stream `(seed, r)`, so different
//! calibrations evaluated with the same seed see exactly the same noise.
//! With shared noise the rejection of each replicate is monotone in the
//! signal amplitude, so the empirical power curve is the empirical CDF of
//! per-replicate critical amplitudes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_many, CalibrationKind, CalibrationTable, CriticalValueVector, Model, TableKey};
use crate::error::{Error, Result};
use crate::rng;
use crate::seqmodel::{self, PrefixSums, SignalSpec, Window};
use crate::sparsegrid::{build_collection_1d, SparseCollection, WindowFamily};

pub const TABLE_SCHEMA_VERSION: u32 = 1;

/// Detection boundary `(sqrt 2 + eps) sqrt(log(n/w) / w)`; zero at `w = n`.
pub fn boundary_mu(n: usize, w: usize, eps: f64) -> f64 {
    let (n, w) = (n as f64, w as f64);
    (std::f64::consts::SQRT_2 + eps) * ((n / w).ln() / w).max(0.0).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub kind: CalibrationKind,
    pub n: usize,
    pub w: usize,
    pub mu: f64,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
    pub mc_se: f64,
    pub seed: u64,
    pub calibration_hash: String,
    pub cal_reps: Option<usize>,
    pub cal_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedExponent {
    pub kind: CalibrationKind,
    pub n: usize,
    pub w: usize,
    /// Amplitude at which the empirical power reaches 1/2.
    pub mu_star: f64,
    /// `w mu_star^2 / (2 log(n/w))`; 1 means the boundary constant is met.
    pub exponent: f64,
    /// One-sigma Monte Carlo error of `exponent`.
    pub exponent_se: f64,
    pub reps: usize,
    pub seed: u64,
    pub calibration_hash: String,
    pub cal_reps: Option<usize>,
    pub cal_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub schema_version: u32,
    pub kind: CalibrationKind,
    pub n: usize,
    pub w: usize,
    pub mu: f64,
    pub alpha: f64,
    pub reps: usize,
    pub rejections: usize,
    pub power: f64,
    pub mc_se: f64,
    pub mu_star: Option<f64>,
    pub exponent: Option<f64>,
    pub exponent_se: Option<f64>,
    pub seed: u64,
    pub calibration_hash: String,
    pub cal_reps: Option<usize>,
    pub cal_seed: Option<u64>,
}

pub fn rows_to_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from(
        "schema_version,kind,n,w,mu,alpha,reps,rejections,power,mc_se,mu_star,exponent,exponent_se,seed,calibration_hash,cal_reps,cal_seed\n",
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.schema_version,
            r.kind,
            r.n,
            r.w,
            r.mu,
            r.alpha,
            r.reps,
            r.rejections,
            r.power,
            r.mc_se,
            opt(r.mu_star),
            opt(r.exponent),
            opt(r.exponent_se),
            r.seed,
            r.calibration_hash,
            r.cal_reps.map(|v| v.to_string()).unwrap_or_default(),
            r.cal_seed.map(|v| v.to_string()).unwrap_or_default()
        );
    }
    out
}

/// Gaussian sequence setup of size `n` with one calibration per kind.
#[derive(Debug, Clone)]
pub struct PowerLab {
    n: usize,
    coll: SparseCollection,
    calibrations: BTreeMap<CalibrationKind, CriticalValueVector>,
}

impl PowerLab {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self { n, coll: build_collection_1d(n)?, calibrations: BTreeMap::new() })
    }

    /// Calibrates `kinds` from one shared null simulation.
    pub fn calibrated(n: usize, kinds: &[CalibrationKind], alpha: f64, reps: usize, seed: u64) -> Result<Self> {
        let mut lab = Self::new(n)?;
        for cv in calibrate_many(Model::Gaussian, &lab.coll, kinds, alpha, reps, seed)? {
            lab.insert(cv)?;
        }
        Ok(lab)
    }

    /// Like `calibrated`, but reads and fills a calibration table.
    pub fn calibrated_with_table(
        n: usize,
        kinds: &[CalibrationKind],
        alpha: f64,
        reps: usize,
        seed: u64,
        table: &CalibrationTable,
    ) -> Result<Self> {
        let mut lab = Self::new(n)?;
        let mut missing = Vec::new();
        for &kind in kinds {
            let key = lab.table_key(kind, alpha, reps, seed);
            match table.get(&key) {
                Ok(Some(cv)) => lab.insert(cv)?,
                Ok(None) | Err(Error::ChecksumMismatch(_)) => missing.push(kind),
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            for cv in calibrate_many(Model::Gaussian, &lab.coll, &missing, alpha, reps, seed)? {
                let key = lab.table_key(cv.kind, alpha, reps, seed);
                table.put(&key, &cv)?;
                lab.insert(cv)?;
            }
        }
        Ok(lab)
    }

    pub fn table_key(&self, kind: CalibrationKind, alpha: f64, reps: usize, seed: u64) -> TableKey {
        let simulated = kind.is_simulated();
        TableKey {
            kind,
            model: Model::Gaussian,
            n: self.n,
            alpha,
            reps: if simulated { reps } else { 0 },
            seed: if simulated { seed } else { 0 },
            collection_hash: self.coll.fingerprint().to_string(),
        }
    }

    pub fn insert(&mut self, cv: CriticalValueVector) -> Result<()> {
        cv.check_against(&self.coll, Model::Gaussian)?;
        self.calibrations.insert(cv.kind, cv);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn collection(&self) -> &SparseCollection {
        &self.coll
    }

    fn provenance(&self, kind: CalibrationKind) -> Result<(String, Option<usize>, Option<u64>)> {
        let cv = self.calibration(kind)?;
        Ok((cv.digest(), cv.provenance.map(|p| p.reps), cv.provenance.map(|p| p.seed)))
    }

    pub fn calibration(&self, kind: CalibrationKind) -> Result<&CriticalValueVector> {
        self.calibrations
            .get(&kind)
            .ok_or_else(|| Error::Configuration(format!("no {kind} calibration for n = {}", self.n)))
    }

    fn signal(&self, w: usize, mu: f64) -> Result<SignalSpec> {
        SignalSpec::centered(mu, self.n, w)
    }

    fn noise(&self, seed: u64, rep: u64, buf: &mut [f64]) {
        seqmodel::fill_standard_normal(&mut rng::stream(seed, rep), buf);
    }

    /// Per-replicate rejection decisions for a centered width-`w` signal.
    pub fn rejections(&self, kind: CalibrationKind, w: usize, mu: f64, reps: usize, seed: u64) -> Result<Vec<bool>> {
        let cv = self.calibration(kind)?;
        let signal = self.signal(w, mu)?;
        let windows = self.coll.windows();
        Ok((0..reps as u64)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.n],
                |buf, rep| {
                    self.noise(seed, rep, buf);
                    for v in &mut buf[signal.window.j - 1..signal.window.k] {
                        *v += signal.mu;
                    }
                    let ps = PrefixSums::from_slice(buf);
                    let sums = ps.as_slice();
                    windows.iter().zip(&cv.thresholds).any(|(win, &t)| {
                        (sums[win.k] - sums[win.j - 1]) / ((win.k + 1 - win.j) as f64).sqrt() > t
                    })
                },
            )
            .collect())
    }

    pub fn estimate_power(&self, kind: CalibrationKind, w: usize, mu: f64, reps: usize, seed: u64) -> Result<PowerPoint> {
        if reps == 0 {
            return Err(Error::Experiment("power needs at least one replicate".into()));
        }
        let rejections = self.rejections(kind, w, mu, reps, seed)?.into_iter().filter(|r| *r).count();
        let power = rejections as f64 / reps as f64;
        let (calibration_hash, cal_reps, cal_seed) = self.provenance(kind)?;
        Ok(PowerPoint {
            kind,
            n: self.n,
            w,
            mu,
            reps,
            rejections,
            power,
            mc_se: (power * (1.0 - power) / reps as f64).sqrt(),
            seed,
            calibration_hash,
            cal_reps,
            cal_seed,
        })
    }

    /// Smallest amplitude at which each replicate rejects.
    ///
    /// A member with sum `S`, width `v` and overlap `o > 0` with the signal
    /// exceeds threshold `t` once `mu > (t sqrt(v) - S) / o`; replicates that
    /// already reject without signal get 0.
    pub fn critical_amplitudes(&self, kind: CalibrationKind, w: usize, reps: usize, seed: u64) -> Result<Vec<f64>> {
        let cv = self.calibration(kind)?;
        let signal = self.signal(w, 0.0)?.window;
        let windows = self.coll.windows();
        Ok((0..reps as u64)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.n],
                |buf, rep| {
                    self.noise(seed, rep, buf);
                    let ps = PrefixSums::from_slice(buf);
                    let sums = ps.as_slice();
                    let mut best = f64::INFINITY;
                    for (win, &t) in windows.iter().zip(&cv.thresholds) {
                        let sum = sums[win.k] - sums[win.j - 1];
                        let root = ((win.k + 1 - win.j) as f64).sqrt();
                        if sum / root > t {
                            return 0.0;
                        }
                        let overlap = win.overlap(&signal);
                        if overlap > 0 {
                            best = best.min((t * root - sum) / overlap as f64);
                        }
                    }
                    best
                },
            )
            .collect())
    }

    pub fn realized_exponent(&self, kind: CalibrationKind, w: usize, reps: usize, seed: u64) -> Result<RealizedExponent> {
        if w == 0 || w >= self.n {
            return Err(Error::Experiment(format!("realized exponent needs 1 <= w < n, got w = {w}")));
        }
        if reps < 4 {
            return Err(Error::Experiment("realized exponent needs at least 4 replicates".into()));
        }
        let mut amps = self.critical_amplitudes(kind, w, reps, seed)?;
        amps.sort_unstable_by(f64::total_cmp);
        let rank = |q: f64| ((reps as f64 * q).ceil() as usize).clamp(1, reps) - 1;
        let mu_star = amps[rank(0.5)];
        if !mu_star.is_finite() || mu_star <= 0.0 {
            return Err(Error::Experiment(format!("power never crosses 1/2 for {kind} at w = {w}")));
        }
        // one binomial standard deviation of the median's rank on each side
        let half_band = 0.5 / (reps as f64).sqrt();
        let lo = amps[rank(0.5 - half_band)];
        let hi = amps[rank(0.5 + half_band)];
        let mu_se = 0.5 * (hi - lo);
        let log_ratio = 2.0 * (self.n as f64 / w as f64).ln();
        let exponent = w as f64 * mu_star * mu_star / log_ratio;
        let (calibration_hash, cal_reps, cal_seed) = self.provenance(kind)?;
        Ok(RealizedExponent {
            kind,
            n: self.n,
            w,
            mu_star,
            exponent,
            exponent_se: 2.0 * exponent * mu_se / mu_star,
            reps,
            seed,
            calibration_hash,
            cal_reps,
            cal_seed,
        })
    }

    /// One row per `(kind, w)`: power at `boundary_mu(n, w, eps)` and, for
    /// `w < n`, the realized exponent. All rows share the noise streams.
    pub fn compare_table(
        &self,
        kinds: &[CalibrationKind],
        widths: &[usize],
        eps: f64,
        reps: usize,
        seed: u64,
    ) -> Result<Vec<CompareRow>> {
        for &w in widths {
            if w == 0 || w > self.n {
                return Err(Error::Configuration(format!("width {w} outside [1, {}]", self.n)));
            }
        }
        let mut rows = Vec::with_capacity(kinds.len() * widths.len());
        for &kind in kinds {
            let alpha = self.calibration(kind)?.alpha;
            for &w in widths {
                let mu = boundary_mu(self.n, w, eps);
                let p = self.estimate_power(kind, w, mu, reps, seed)?;
                let ex = if w < self.n { Some(self.realized_exponent(kind, w, reps, seed)?) } else { None };
                rows.push(CompareRow {
                    schema_version: TABLE_SCHEMA_VERSION,
                    kind,
                    n: self.n,
                    w,
                    mu,
                    alpha,
                    reps,
                    rejections: p.rejections,
                    power: p.power,
                    mc_se: p.mc_se,
                    mu_star: ex.as_ref().map(|e| e.mu_star),
                    exponent: ex.as_ref().map(|e| e.exponent),
                    exponent_se: ex.as_ref().map(|e| e.exponent_se),
                    seed,
                    calibration_hash: p.calibration_hash,
                    cal_reps: p.cal_reps,
                    cal_seed: p.cal_seed,
                });
            }
        }
        Ok(rows)
    }
}

/// Signal window used by every experiment at `(n, w)`.
pub fn signal_window(n: usize, w: usize) -> Result<Window> {
    Ok(SignalSpec::centered(0.0, n, w)?.window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary_mu(500, 500, 0.3), 0.0);
        let v = boundary_mu(10_000, 100, 0.0);
        assert!((v - (2.0 * 100f64.ln() / 100.0).sqrt()).abs() < 1e-15);
        assert!((v - 0.30349).abs() < 1e-5);
        assert!(boundary_mu(10_000, 100, 0.5) > v);
    }

    #[test]
    fn missing_calibration_is_a_configuration_error() {
        let lab = PowerLab::new(64).unwrap();
        assert!(matches!(
            lab.estimate_power(CalibrationKind::Sac, 8, 1.0, 10, 1),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn exponent_requires_w_below_n() {
        let lab = PowerLab::calibrated(32, &[CalibrationKind::Bonferroni], 0.05, 0, 0).unwrap();
        assert!(lab.realized_exponent(CalibrationKind::Bonferroni, 32, 100, 1).is_err());
    }

    #[test]
    fn critical_amplitudes_agree_with_direct_rejection() {
        let lab = PowerLab::calibrated(128, &[CalibrationKind::Bonferroni], 0.1, 0, 0).unwrap();
        let kind = CalibrationKind::Bonferroni;
        let amps = lab.critical_amplitudes(kind, 16, 200, 77).unwrap();
        for mu in [0.0, 0.3, 0.6, 1.0, 1.5] {
            let direct = lab.rejections(kind, 16, mu, 200, 77).unwrap();
            for (r, (&a, &rej)) in amps.iter().zip(&direct).enumerate() {
                // exact up to rounding at the boundary itself
                if (a - mu).abs() > 1e-9 {
                    assert_eq!(rej, a < mu || (a == 0.0), "rep {r}: amplitude {a}, mu {mu}");
                }
            }
        }
    }
}
