//! Evaluating scans: the exhaustive oracle, the sparse fast scans, and
//! threshold application.

use serde::{Deserialize, Serialize};

use crate::calibrate::{penalty, CalibrationKind, CriticalValueVector, Model};
use crate::densmodel::{self, PointSample};
use crate::error::{Error, Result};
use crate::rng;
use crate::seqmodel::{self, PrefixSums, Sequence, Window};
use crate::sparsegrid::{Rect, RectCollection, SparseCollection, WindowFamily};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A scanned region: an interval or a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Region {
    Rect(Rect),
    Interval(Window),
}

impl Region {
    fn order_key(&self) -> (usize, usize, usize, usize) {
        match *self {
            Region::Interval(w) => (w.j, w.k, 0, 0),
            // ties resolve by smallest start, then end, row before column
            Region::Rect(r) => (r.j as usize, r.j2 as usize, r.k as usize, r.k2 as usize),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub window: Region,
    pub stat: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub collection_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionInfo {
    pub ambient: usize,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub kind: CalibrationKind,
    pub model: Model,
    pub alpha: f64,
    pub max_stat: f64,
    pub argmax: Region,
    pub penalized_max: Option<f64>,
    pub rejected: bool,
    pub exceedances: Vec<Exceedance>,
    pub provenance: ReportProvenance,
    pub collection: CollectionInfo,
}

/// Exhaustive scan over all `n(n+1)/2` windows by direct running sums.
/// Ties go to the smallest `j`, then the smallest `k`.
pub fn naive_scan(seq: &Sequence) -> (f64, Window) {
    let y = seq.values();
    let mut best = (f64::NEG_INFINITY, Window::new(1, 1));
    for j in 0..y.len() {
        let mut sum = 0.0;
        for (k, v) in y.iter().enumerate().skip(j) {
            sum += v;
            let stat = sum / ((k - j + 1) as f64).sqrt();
            if stat > best.0 {
                best = (stat, Window::new(j + 1, k + 1));
            }
        }
    }
    best
}

/// Standardized sums of every collection member, in collection order.
pub fn interval_stats(ps: &PrefixSums, coll: &SparseCollection, out: &mut [f64]) {
    let sums = ps.as_slice();
    for (o, w) in out.iter_mut().zip(coll.windows()) {
        *o = (sums[w.k] - sums[w.j - 1]) / ((w.k + 1 - w.j) as f64).sqrt();
    }
}

/// `sqrt(2 logLR)` of every member; singletons and zero-mass windows give 0.
pub fn density_stats(sample: &PointSample, coll: &SparseCollection, out: &mut [f64]) {
    let pts = sample.points();
    let n = pts.len();
    for (o, w) in out.iter_mut().zip(coll.windows()) {
        *o = if w.j < w.k {
            let p = pts[w.k - 1] - pts[w.j - 1];
            if p > 0.0 {
                densmodel::sqrt_2_log_lr(n, w.k - w.j + 1, p)
            } else {
                0.0
            }
        } else {
            0.0
        };
    }
}

/// Observations on an `n1 x n2` grid with a 2D prefix-sum table.
#[derive(Debug, Clone, PartialEq)]
pub struct GridData {
    n1: usize,
    n2: usize,
    values: Vec<f64>,
    // (n1 + 1) x (n2 + 1), row-major, zero first row and column
    table: Vec<f64>,
}

impl GridData {
    /// `values` in row-major order.
    pub fn new(n1: usize, n2: usize, values: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidSize(format!("grid must be non-empty, got {n1}x{n2}")));
        }
        if values.len() != n1 * n2 {
            return Err(Error::InvalidSize(format!(
                "grid {n1}x{n2} needs {} values, got {}",
                n1 * n2,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("grid cell {} is not finite", i + 1)));
        }
        let stride = n2 + 1;
        let mut table = vec![0.0; (n1 + 1) * stride];
        for r in 0..n1 {
            let row = PrefixSums::from_slice(&values[r * n2..(r + 1) * n2]);
            for c in 0..=n2 {
                table[(r + 1) * stride + c] = table[r * stride + c] + row.as_slice()[c];
            }
        }
        Ok(Self { n1, n2, values, table })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[(row - 1) * self.n2 + col - 1]
    }

    #[inline]
    pub fn rect_sum(&self, r: &Rect) -> f64 {
        let s = self.n2 + 1;
        let (r0, r1, c0, c1) = (r.j as usize - 1, r.k as usize, r.j2 as usize - 1, r.k2 as usize);
        self.table[r1 * s + c1] - self.table[r0 * s + c1] - self.table[r1 * s + c0] + self.table[r0 * s + c0]
    }

    pub fn rect_stat(&self, r: &Rect) -> f64 {
        self.rect_sum(r) / (r.area() as f64).sqrt()
    }
}

pub fn rect_stats(grid: &GridData, rects: &RectCollection, out: &mut [f64]) {
    for (o, r) in out.iter_mut().zip(rects.rects()) {
        *o = grid.rect_stat(r);
    }
}

/// Window families that can simulate their own null statistics.
pub trait NullScan: WindowFamily {
    /// Fills `out` with member statistics of null replicate `(seed, rep)`.
    fn null_stats(&self, model: Model, seed: u64, rep: u64, out: &mut [f64]) -> Result<()>;
}

impl NullScan for SparseCollection {
    fn null_stats(&self, model: Model, seed: u64, rep: u64, out: &mut [f64]) -> Result<()> {
        let mut rng = rng::stream(seed, rep);
        let mut data = vec![0.0; self.n()];
        match model {
            Model::Gaussian => {
                seqmodel::fill_standard_normal(&mut rng, &mut data);
                interval_stats(&PrefixSums::from_slice(&data), self, out);
            }
            Model::Density => {
                if self.n() < 2 {
                    return Err(Error::InvalidSize("density model needs n >= 2".into()));
                }
                densmodel::fill_uniform_sorted(&mut rng, &mut data);
                density_stats(&PointSample::new(data)?, self, out);
            }
            Model::Grid2d => {
                return Err(Error::Configuration("interval collections do not support the grid2d model".into()));
            }
        }
        Ok(())
    }
}

impl NullScan for RectCollection {
    fn null_stats(&self, model: Model, seed: u64, rep: u64, out: &mut [f64]) -> Result<()> {
        if model != Model::Grid2d {
            return Err(Error::Configuration(format!("rectangle collections only support grid2d, not {model}")));
        }
        let (n1, n2) = self.dims();
        let mut data = vec![0.0; n1 * n2];
        seqmodel::fill_standard_normal(&mut rng::stream(seed, rep), &mut data);
        rect_stats(&GridData::new(n1, n2, data)?, self, out);
        Ok(())
    }
}

/// Applies `cv` to precomputed member statistics.
pub fn build_report<F, R>(family: &F, cv: &CriticalValueVector, stats: &[f64], region: R) -> Result<ScanReport>
where
    F: WindowFamily + ?Sized,
    R: Fn(usize) -> Region,
{
    if stats.len() != cv.thresholds.len() || stats.is_empty() {
        return Err(Error::Configuration("statistics and thresholds differ in length".into()));
    }
    let mut best: Option<(f64, Region)> = None;
    let mut exceedances = Vec::new();
    for (i, (&stat, &threshold)) in stats.iter().zip(&cv.thresholds).enumerate() {
        let reg = region(i);
        let better = match &best {
            None => true,
            Some((b, r)) => stat > *b || (stat == *b && reg.order_key() < r.order_key()),
        };
        if better {
            best = Some((stat, reg));
        }
        if stat > threshold {
            exceedances.push(Exceedance { window: reg, stat, threshold });
        }
    }
    let (max_stat, argmax) = best.expect("non-empty");
    let penalized_max = if cv.kind.has_penalty() {
        let n = family.ambient();
        let mut m = f64::NEG_INFINITY;
        for (i, &stat) in stats.iter().enumerate() {
            m = m.max(stat - penalty(cv.kind, n, family.size(i))?);
        }
        Some(m)
    } else {
        None
    };
    Ok(ScanReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind: cv.kind,
        model: cv.model,
        alpha: cv.alpha,
        max_stat,
        argmax,
        penalized_max,
        rejected: !exceedances.is_empty(),
        exceedances,
        provenance: ReportProvenance {
            seed: cv.provenance.map(|p| p.seed),
            reps: cv.provenance.map(|p| p.reps),
            collection_hash: family.fingerprint().to_string(),
        },
        collection: CollectionInfo { ambient: family.ambient(), members: family.len() },
    })
}

/// Sparse scan of a Gaussian sequence; cost proportional to `|coll|`.
pub fn fast_scan(seq: &Sequence, coll: &SparseCollection, cv: &CriticalValueVector) -> Result<ScanReport> {
    if seq.len() != coll.n() {
        return Err(Error::Configuration(format!(
            "sequence has {} values but the collection was built for n = {}",
            seq.len(),
            coll.n()
        )));
    }
    cv.check_against(coll, Model::Gaussian)?;
    let mut stats = vec![0.0; coll.len()];
    interval_stats(&seqmodel::prefix_sums(seq), coll, &mut stats);
    build_report(coll, cv, &stats, |i| Region::Interval(coll.windows()[i]))
}

/// Sparse scan of a point sample over order-statistic windows.
pub fn fast_scan_density(
    sample: &PointSample,
    coll: &SparseCollection,
    cv: &CriticalValueVector,
) -> Result<ScanReport> {
    if sample.len() != coll.n() {
        return Err(Error::Configuration(format!(
            "sample has {} points but the collection was built for n = {}",
            sample.len(),
            coll.n()
        )));
    }
    cv.check_against(coll, Model::Density)?;
    let mut stats = vec![0.0; coll.len()];
    density_stats(sample, coll, &mut stats);
    build_report(coll, cv, &stats, |i| Region::Interval(coll.windows()[i]))
}

pub fn fast_scan_2d(grid: &GridData, rects: &RectCollection, cv: &CriticalValueVector) -> Result<ScanReport> {
    if grid.dims() != rects.dims() {
        return Err(Error::Configuration(format!(
            "grid is {:?} but the rectangles were built for {:?}",
            grid.dims(),
            rects.dims()
        )));
    }
    cv.check_against(rects, Model::Grid2d)?;
    let mut stats = vec![0.0; rects.len()];
    rect_stats(grid, rects, &mut stats);
    build_report(rects, cv, &stats, |i| Region::Rect(rects.rects()[i]))
}
