//! Size-dependent critical values.
//!
//! Five calibrations are supported. Three of them subtract a width-dependent
//! penalty and calibrate the maximum of what is left by simulation
//! (`Traditional` uses no penalty). `Blocked` assigns harmonic significance
//! levels to blocks of similar window size and tunes one scalar so the joint
//! level is exact. `Bonferroni` splits the level over the sparse collection
//! directly and needs no simulation.

mod table;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densmodel;
use crate::error::{Error, Result};
use crate::scanner::NullScan;
use crate::sparsegrid::WindowFamily;

pub use table::{CalibrationTable, Lookup, TableEntry, TableKey};

/// Simulation size used when the caller does not ask for one.
pub const DEFAULT_REPS: usize = 10_000;

const BISECTION_STEPS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibrationKind {
    Traditional,
    #[serde(rename = "ds")]
    DuembgenSpokoiny,
    Sac,
    Blocked,
    Bonferroni,
}

impl CalibrationKind {
    pub const ALL: [CalibrationKind; 5] = [
        CalibrationKind::Traditional,
        CalibrationKind::DuembgenSpokoiny,
        CalibrationKind::Sac,
        CalibrationKind::Blocked,
        CalibrationKind::Bonferroni,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CalibrationKind::Traditional => "traditional",
            CalibrationKind::DuembgenSpokoiny => "ds",
            CalibrationKind::Sac => "sac",
            CalibrationKind::Blocked => "blocked",
            CalibrationKind::Bonferroni => "bonferroni",
        }
    }

    pub fn has_penalty(&self) -> bool {
        matches!(self, CalibrationKind::DuembgenSpokoiny | CalibrationKind::Sac)
    }

    pub fn is_simulated(&self) -> bool {
        !matches!(self, CalibrationKind::Bonferroni)
    }
}

impl fmt::Display for CalibrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CalibrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "traditional" | "trad" => Ok(CalibrationKind::Traditional),
            "ds" | "duembgen-spokoiny" | "dumbgen-spokoiny" => Ok(CalibrationKind::DuembgenSpokoiny),
            "sac" => Ok(CalibrationKind::Sac),
            "blocked" => Ok(CalibrationKind::Blocked),
            "bonferroni" => Ok(CalibrationKind::Bonferroni),
            other => Err(Error::Configuration(format!("unknown calibration kind '{other}'"))),
        }
    }
}

/// Data model a calibration was simulated under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Gaussian,
    Density,
    Grid2d,
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Gaussian => "gaussian",
            Model::Density => "density",
            Model::Grid2d => "grid2d",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Model::Gaussian),
            "density" => Ok(Model::Density),
            "grid2d" => Ok(Model::Grid2d),
            other => Err(Error::Configuration(format!("unknown model '{other}'"))),
        }
    }
}

/// Width penalty subtracted before maximizing: `sqrt(2 log(n/w))` for
/// DS, `sqrt(2 log[(e n / w)(1 + log w)^2])` for SAC, zero for
/// the traditional scan.
pub fn penalty(kind: CalibrationKind, n: usize, w: usize) -> Result<f64> {
    if w == 0 || w > n {
        return Err(Error::Domain(format!("width {w} outside [1, {n}]")));
    }
    Ok(penalty_unchecked(kind, n as f64, w as f64))
}

fn penalty_unchecked(kind: CalibrationKind, n: f64, w: f64) -> f64 {
    match kind {
        CalibrationKind::DuembgenSpokoiny => (2.0 * (n / w).ln()).max(0.0).sqrt(),
        CalibrationKind::Sac => {
            let bracket = std::f64::consts::E * n / w * (1.0 + w.ln()).powi(2);
            (2.0 * bracket.ln()).sqrt()
        }
        _ => 0.0,
    }
}

fn penalties<F: WindowFamily + ?Sized>(family: &F, kind: CalibrationKind) -> Vec<f64> {
    let n = family.ambient() as f64;
    (0..family.len()).map(|i| penalty_unchecked(kind, n, family.size(i) as f64)).collect()
}

fn required_reps(alpha: f64) -> usize {
    (10.0 / alpha).ceil() as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_reps(alpha: f64, reps: usize) -> Result<()> {
    check_alpha(alpha)?;
    let required = required_reps(alpha);
    if reps < required {
        return Err(Error::InsufficientReplication { reps, required });
    }
    Ok(())
}

/// 1-based rank of the conservative empirical `(1 - level)` quantile.
fn quantile_rank(reps: usize, level: f64) -> usize {
    (((reps as f64) * (1.0 - level)).ceil() as usize).clamp(1, reps)
}

/// Upper-tail standard normal quantile: `z` with `P(Z > z) = p`.
pub fn normal_upper_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Null tail of the density statistic for a window holding `m` of `n`
/// uniform points: the covered mass is `Beta(m - 1, n - m + 2)` and the
/// statistic falls as the mass grows, so `P(stat > t) = I_{p_t}(m - 1, n - m + 2)`
/// where `p_t` is the mass at which the statistic equals `t`.
pub fn density_upper_quantile(n: usize, m: usize, level: f64) -> f64 {
    if m < 2 || n < 2 {
        return 0.0;
    }
    let (a, b) = ((m - 1) as f64, (n - m + 2) as f64);
    let cdf = |p: f64| statrs::function::beta::beta_reg(a, b, p);
    let top = m as f64 / n as f64;
    if cdf(top) <= level {
        return 0.0;
    }
    // bisect in log p; keep the side whose tail is at most `level`
    let (mut lo, mut hi) = ((f64::MIN_POSITIVE).ln(), top.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid.exp()) <= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    densmodel::sqrt_2_log_lr(n, m, lo.exp())
}

/// Simulated values of a penalized null maximum, in replicate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullMaxSample {
    values: Vec<f64>,
}

impl NullMaxSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientReplication { reps: 0, required: 1 });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reps(&self) -> usize {
        self.values.len()
    }

    /// `ceil(reps (1 - alpha))`-th order statistic.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        sorted[quantile_rank(sorted.len(), alpha) - 1]
    }
}

/// Per-replicate reductions of one null simulation, shared by every
/// simulated calibration kind.
#[derive(Debug, Clone)]
pub struct NullSummaries {
    pub reps: usize,
    pub seed: u64,
    pub model: Model,
    /// `max_i stat_i`
    pub traditional: Vec<f64>,
    /// `max_i (stat_i - pen_DS(w_i))`
    pub ds: Vec<f64>,
    /// `max_i (stat_i - pen_SAC(w_i))`
    pub sac: Vec<f64>,
    /// Block indices with at least one member.
    pub block_ids: Vec<usize>,
    /// `block_max[r * block_ids.len() + b]`
    pub block_max: Vec<f64>,
}

impl NullSummaries {
    pub fn sample(&self, kind: CalibrationKind) -> Result<NullMaxSample> {
        let values = match kind {
            CalibrationKind::Traditional => self.traditional.clone(),
            CalibrationKind::DuembgenSpokoiny => self.ds.clone(),
            CalibrationKind::Sac => self.sac.clone(),
            other => {
                return Err(Error::Configuration(format!("{other} has no single null maximum")));
            }
        };
        NullMaxSample::new(values)
    }

    fn block_column(&self, b: usize) -> Vec<f64> {
        let nb = self.block_ids.len();
        (0..self.reps).map(|r| self.block_max[r * nb + b]).collect()
    }
}

/// Runs `reps` null replicates (stream `r` of `seed` for replicate `r`) and
/// reduces each to the maxima every simulated calibration needs.
pub fn simulate_null_summaries<F: NullScan + ?Sized>(
    model: Model,
    family: &F,
    reps: usize,
    seed: u64,
) -> Result<NullSummaries> {
    if reps == 0 {
        return Err(Error::InsufficientReplication { reps, required: 1 });
    }
    if family.is_empty() {
        return Err(Error::Configuration("window family is empty".into()));
    }
    let pen_ds = penalties(family, CalibrationKind::DuembgenSpokoiny);
    let pen_sac = penalties(family, CalibrationKind::Sac);
    let blocks = family.blocks();
    let nb = blocks.len();

    let per_rep: Vec<(f64, f64, f64, Vec<f64>)> = (0..reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; family.len()],
            |stats, rep| -> Result<(f64, f64, f64, Vec<f64>)> {
                family.null_stats(model, seed, rep, stats)?;
                let mut trad = f64::NEG_INFINITY;
                let mut ds = f64::NEG_INFINITY;
                let mut sac = f64::NEG_INFINITY;
                let mut bmax = Vec::with_capacity(nb);
                for (_, range) in &blocks {
                    let mut m = f64::NEG_INFINITY;
                    for i in range.clone() {
                        let s = stats[i];
                        m = m.max(s);
                        ds = ds.max(s - pen_ds[i]);
                        sac = sac.max(s - pen_sac[i]);
                    }
                    trad = trad.max(m);
                    bmax.push(m);
                }
                Ok((trad, ds, sac, bmax))
            },
        )
        .collect::<Result<_>>()?;

    let mut out = NullSummaries {
        reps,
        seed,
        model,
        traditional: Vec::with_capacity(reps),
        ds: Vec::with_capacity(reps),
        sac: Vec::with_capacity(reps),
        block_ids: blocks.iter().map(|(b, _)| *b).collect(),
        block_max: Vec::with_capacity(reps * nb),
    };
    for (t, d, s, b) in per_rep {
        out.traditional.push(t);
        out.ds.push(d);
        out.sac.push(s);
        out.block_max.extend(b);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub reps: usize,
    pub seed: u64,
}

/// Per-member thresholds over a window family.
///
/// Rejecting when any member statistic exceeds its threshold has null
/// probability at most `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueVector {
    pub kind: CalibrationKind,
    pub model: Model,
    pub alpha: f64,
    pub ambient: usize,
    pub collection_hash: String,
    pub thresholds: Vec<f64>,
    /// Simulated quantile added to the penalty (`q_n` for the traditional
    /// scan, `kappa_n` for the penalized ones).
    pub offset: Option<f64>,
    /// Tuned scalar of the blocked scan.
    pub tuned_level: Option<f64>,
    /// `(block index, threshold)` for the blocked scan.
    pub block_thresholds: Option<Vec<(usize, f64)>>,
    pub provenance: Option<Provenance>,
}

impl CriticalValueVector {
    pub fn threshold(&self, i: usize) -> f64 {
        self.thresholds[i]
    }

    /// First 16 hex digits of the SHA-256 of the JSON encoding.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("vector serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// Errors unless this vector was built for `family` under `model`.
    pub fn check_against<F: WindowFamily + ?Sized>(&self, family: &F, model: Model) -> Result<()> {
        if self.model != model {
            return Err(Error::Configuration(format!(
                "critical values were built for the {} model, not {}",
                self.model, model
            )));
        }
        if self.collection_hash != family.fingerprint() || self.thresholds.len() != family.len() {
            return Err(Error::Configuration(format!(
                "critical values were built for collection {} ({} windows), got {} ({} windows)",
                self.collection_hash,
                self.thresholds.len(),
                family.fingerprint(),
                family.len()
            )));
        }
        Ok(())
    }
}

fn base_vector<F: WindowFamily + ?Sized>(
    family: &F,
    kind: CalibrationKind,
    model: Model,
    alpha: f64,
    thresholds: Vec<f64>,
) -> CriticalValueVector {
    CriticalValueVector {
        kind,
        model,
        alpha,
        ambient: family.ambient(),
        collection_hash: family.fingerprint().to_string(),
        thresholds,
        offset: None,
        tuned_level: None,
        block_thresholds: None,
        provenance: None,
    }
}

/// `kappa_n(alpha)`: the simulated `(1 - alpha)` quantile of
/// `max_i (stat_i - penalty(w_i))` under the null.
pub fn mc_penalized_quantile<F: NullScan + ?Sized>(
    model: Model,
    family: &F,
    kind: CalibrationKind,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<f64> {
    if !matches!(
        kind,
        CalibrationKind::Traditional | CalibrationKind::DuembgenSpokoiny | CalibrationKind::Sac
    ) {
        return Err(Error::Configuration(format!("{kind} is not a penalized calibration")));
    }
    check_reps(alpha, reps)?;
    let summaries = simulate_null_summaries(model, family, reps, seed)?;
    Ok(summaries.sample(kind)?.quantile(alpha))
}

/// Builds the critical values of `kind` from an existing null simulation.
pub fn calibrate_from_summaries<F: WindowFamily + ?Sized>(
    family: &F,
    summaries: &NullSummaries,
    kind: CalibrationKind,
    alpha: f64,
) -> Result<CriticalValueVector> {
    check_reps(alpha, summaries.reps)?;
    let provenance = Some(Provenance { reps: summaries.reps, seed: summaries.seed });
    match kind {
        CalibrationKind::Traditional | CalibrationKind::DuembgenSpokoiny | CalibrationKind::Sac => {
            let offset = summaries.sample(kind)?.quantile(alpha);
            let thresholds = penalties(family, kind).into_iter().map(|p| p + offset).collect();
            let mut cv = base_vector(family, kind, summaries.model, alpha, thresholds);
            cv.offset = Some(offset);
            cv.provenance = provenance;
            Ok(cv)
        }
        CalibrationKind::Blocked => {
            let tuned = tune_blocked(summaries, alpha)?;
            let mut thresholds = vec![0.0; family.len()];
            for ((_, range), (_, t)) in family.blocks().iter().zip(&tuned.block_thresholds) {
                thresholds[range.clone()].fill(*t);
            }
            let mut cv = base_vector(family, kind, summaries.model, alpha, thresholds);
            cv.tuned_level = Some(tuned.level);
            cv.block_thresholds = Some(tuned.block_thresholds);
            cv.provenance = provenance;
            Ok(cv)
        }
        CalibrationKind::Bonferroni => bonferroni_calibration(family, summaries.model, alpha),
    }
}

/// Single entry point for all five kinds. Bonferroni ignores `reps`/`seed`.
pub fn calibrate<F: NullScan + ?Sized>(
    model: Model,
    family: &F,
    kind: CalibrationKind,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<CriticalValueVector> {
    if kind == CalibrationKind::Bonferroni {
        return bonferroni_calibration(family, model, alpha);
    }
    check_reps(alpha, reps)?;
    let summaries = simulate_null_summaries(model, family, reps, seed)?;
    calibrate_from_summaries(family, &summaries, kind, alpha)
}

/// Calibrates several kinds off one shared null simulation. Each result is
/// identical to what `calibrate` returns for the same `(reps, seed)`.
pub fn calibrate_many<F: NullScan + ?Sized>(
    model: Model,
    family: &F,
    kinds: &[CalibrationKind],
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<CriticalValueVector>> {
    let summaries = if kinds.iter().any(|k| k.is_simulated()) {
        check_reps(alpha, reps)?;
        Some(simulate_null_summaries(model, family, reps, seed)?)
    } else {
        None
    };
    kinds
        .iter()
        .map(|&kind| match &summaries {
            Some(s) if kind.is_simulated() => calibrate_from_summaries(family, s, kind, alpha),
            _ => bonferroni_calibration(family, model, alpha),
        })
        .collect()
}

#[derive(Debug, Clone)]
struct BlockedTuning {
    level: f64,
    block_thresholds: Vec<(usize, f64)>,
}

struct BlockColumns {
    ids: Vec<usize>,
    sorted: Vec<Vec<f64>>,
    reps: usize,
}

impl BlockColumns {
    fn thresholds(&self, t: f64) -> Vec<f64> {
        self.ids
            .iter()
            .zip(&self.sorted)
            .map(|(&id, col)| {
                let level = (t / (id as f64 + 1.0)).min(1.0);
                col[quantile_rank(self.reps, level) - 1]
            })
            .collect()
    }
}

impl NullSummaries {
    fn block_columns(&self) -> BlockColumns {
        BlockColumns {
            ids: self.block_ids.clone(),
            sorted: (0..self.block_ids.len())
                .map(|b| {
                    let mut col = self.block_column(b);
                    col.sort_unstable_by(f64::total_cmp);
                    col
                })
                .collect(),
            reps: self.reps,
        }
    }

    /// Per-block thresholds at harmonic scale `t`: block `l` gets the
    /// empirical `(1 - t/(l+1))` quantile of its simulated maxima.
    pub fn block_thresholds(&self, t: f64) -> Vec<(usize, f64)> {
        let columns = self.block_columns();
        columns.ids.iter().copied().zip(columns.thresholds(t)).collect()
    }

    /// Fraction of replicates in which some block maximum exceeds its threshold.
    pub fn joint_rejection_rate(&self, block_thresholds: &[(usize, f64)]) -> f64 {
        let t: Vec<f64> = block_thresholds.iter().map(|(_, t)| *t).collect();
        joint_rejection(self, &t)
    }
}

fn joint_rejection(summaries: &NullSummaries, thresholds: &[f64]) -> f64 {
    let nb = thresholds.len();
    let hits = summaries
        .block_max
        .chunks_exact(nb)
        .filter(|row| row.iter().zip(thresholds).any(|(m, t)| m > t))
        .count();
    hits as f64 / summaries.reps as f64
}

/// Block `l` gets level `t / (l + 1)`; its threshold is the matching
/// empirical quantile of the simulated block maxima. `t` is bisected over
/// `[alpha / B, alpha * B]` so the joint rejection rate on the same
/// simulation matches `alpha`; the conservative side of the final bracket
/// is returned.
fn tune_blocked(summaries: &NullSummaries, alpha: f64) -> Result<BlockedTuning> {
    let nb = summaries.block_ids.len();
    if nb == 0 {
        return Err(Error::CalibrationFailure("no non-empty blocks".into()));
    }
    let columns = summaries.block_columns();
    let rate = |t: f64| joint_rejection(summaries, &columns.thresholds(t));

    let mut lo = alpha / nb as f64;
    let mut hi = alpha * nb as f64;
    let (rate_lo, rate_hi) = (rate(lo), rate(hi));
    if rate_lo > alpha || rate_hi < alpha {
        return Err(Error::CalibrationFailure(format!(
            "joint level not bracketed: rate({lo:.3e}) = {rate_lo:.4}, rate({hi:.3e}) = {rate_hi:.4}, target {alpha}"
        )));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if rate(mid) <= alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let achieved = rate(lo);
    let tolerance = 1.0 / (summaries.reps as f64).sqrt();
    if (achieved - alpha).abs() > tolerance {
        return Err(Error::CalibrationFailure(format!(
            "tuned joint level {achieved:.4} misses target {alpha} by more than {tolerance:.4}"
        )));
    }
    let block_thresholds = columns.ids.iter().copied().zip(columns.thresholds(lo)).collect();
    Ok(BlockedTuning { level: lo, block_thresholds })
}

/// Blocked scan calibration with a single tuned harmonic scalar.
pub fn blocked_calibration<F: NullScan + ?Sized>(
    model: Model,
    family: &F,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> Result<CriticalValueVector> {
    calibrate(model, family, CalibrationKind::Blocked, alpha, reps, seed)
}

/// Per-member significance levels of the weighted Bonferroni scan.
///
/// Non-empty block `l` gets `alpha * (1/(l+1)) / H` with `H` summing
/// `1/(l+1)` over non-empty blocks, split evenly over its members. Empty
/// blocks drop out of `H`, which spreads their share proportionally.
pub fn bonferroni_levels<F: WindowFamily + ?Sized>(family: &F, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let blocks = family.blocks();
    if blocks.is_empty() {
        return Err(Error::Configuration("window family is empty".into()));
    }
    let harmonic: f64 = blocks.iter().map(|(b, _)| 1.0 / (*b as f64 + 1.0)).sum();
    let mut levels = vec![0.0; family.len()];
    for (b, range) in &blocks {
        let block_level = alpha * (1.0 / (*b as f64 + 1.0)) / harmonic;
        levels[range.clone()].fill(block_level / range.len() as f64);
    }
    Ok(levels)
}

/// Weighted Bonferroni thresholds from exact per-member null tails: the
/// standard normal for Gaussian data, `density_upper_quantile` for points.
pub fn bonferroni_calibration<F: WindowFamily + ?Sized>(
    family: &F,
    model: Model,
    alpha: f64,
) -> Result<CriticalValueVector> {
    let levels = bonferroni_levels(family, alpha)?;
    let thresholds = match model {
        Model::Gaussian | Model::Grid2d => levels.into_iter().map(normal_upper_quantile).collect(),
        Model::Density => {
            let n = family.ambient();
            // levels are constant within a block, so thresholds repeat by width
            let mut memo = std::collections::HashMap::new();
            levels
                .iter()
                .enumerate()
                .map(|(i, &level)| {
                    let m = family.size(i);
                    *memo.entry((m, level.to_bits())).or_insert_with(|| density_upper_quantile(n, m, level))
                })
                .collect()
        }
    };
    Ok(base_vector(family, CalibrationKind::Bonferroni, model, alpha, thresholds))
}
