//! Sparse approximating collections of scan windows.
//!
//! Windows are grouped by length into dyadic levels. Level `l` holds the
//! intervals `(a, b]` with `b - a` in `[2^l, 2^(l+1))` whose endpoints lie on
//! the grid `{0, d_l, 2 d_l, ...} ∪ {n}`. The spacing `d_l` grows with `l` at
//! a rate that keeps the whole collection near-linear in `n` while every
//! interval stays within `d_l` of some member.
//!
//! In two dimensions the same levels index base squares of side `2^l`, and
//! each square anchor spawns rectangles of equal area with aspect ratios
//! `m^k`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seqmodel::Window;

fn spacing_for(base: f64, count: f64) -> usize {
    // count = number of disjoint base windows needed to cover the domain
    let denom = (2.0 * (std::f64::consts::E * count).ln()).sqrt();
    ((base / denom).ceil() as usize).max(1)
}

/// Grid spacing `d_l = ceil(2^l / sqrt(2 log(e n 2^-l)))` for level `l`.
pub fn grid_spacing(n: usize, ell: u32) -> Result<usize> {
    if ell >= usize::BITS || n == 0 || (1usize << ell) > n {
        return Err(Error::InvalidLevel { ell, n });
    }
    let base = (1usize << ell) as f64;
    Ok(spacing_for(base, n as f64 / base))
}

/// Per-axis spacing for 2D level `l`: squares of area `4^l` over `N` cells.
pub fn grid_spacing_2d(cells: usize, ell: u32) -> Result<usize> {
    if 2 * ell >= usize::BITS || cells == 0 || (1usize << (2 * ell)) > cells {
        return Err(Error::InvalidLevel { ell, n: cells });
    }
    let side = (1usize << ell) as f64;
    Ok(spacing_for(side, cells as f64 / (side * side)))
}

fn axis_grid(n: usize, spacing: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (0..=n).step_by(spacing).collect();
    if *grid.last().unwrap() != n {
        grid.push(n);
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub ell: u32,
    pub spacing: usize,
    /// Indices of this level's members within the collection.
    pub range: Range<usize>,
}

impl Level {
    /// Smallest and largest width admitted at this level.
    pub fn band(&self, n: usize) -> (usize, usize) {
        let lo = 1usize << self.ell;
        (lo, (2 * lo - 1).min(n))
    }
}

/// Shared view of a window family used by calibration and scanning.
pub trait WindowFamily: Sync {
    /// `n` for intervals, `n1 * n2` for rectangles.
    fn ambient(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Number of cells covered by member `i`.
    fn size(&self, i: usize) -> usize;
    /// `(block index, member range)` pairs, smallest sizes first. Block
    /// indices are level numbers, so empty levels leave gaps.
    fn blocks(&self) -> Vec<(usize, Range<usize>)>;
    fn fingerprint(&self) -> &str;
}

/// Level-structured sparse set of intervals over `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCollection {
    n: usize,
    windows: Vec<Window>,
    levels: Vec<Level>,
    fingerprint: String,
}

impl SparseCollection {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level_of(&self, index: usize) -> &Level {
        let pos = self.levels.partition_point(|l| l.range.end <= index);
        &self.levels[pos]
    }

    pub fn contains(&self, win: Window) -> bool {
        self.position(win).is_some()
    }

    pub fn position(&self, win: Window) -> Option<usize> {
        if win.check(self.n).is_err() {
            return None;
        }
        let level = self.levels.get(width_level(win.width()) as usize)?;
        let members = &self.windows[level.range.clone()];
        members.binary_search(&win).ok().map(|p| level.range.start + p)
    }

    /// The same collection without width-1 windows, for order-statistic
    /// scans where a single point spans no mass. Level 0 is kept, empty.
    pub fn without_singletons(&self) -> Self {
        let mut windows = Vec::with_capacity(self.windows.len());
        let mut levels = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let start = windows.len();
            windows.extend(self.windows[level.range.clone()].iter().filter(|w| w.j < w.k));
            levels.push(Level { range: start..windows.len(), ..level.clone() });
        }
        Self::assemble(self.n, windows, levels)
    }

    fn assemble(n: usize, windows: Vec<Window>, levels: Vec<Level>) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"intervals");
        hasher.update((n as u64).to_le_bytes());
        for level in &levels {
            for w in &windows[level.range.clone()] {
                hasher.update(level.ell.to_le_bytes());
                hasher.update((w.j as u64).to_le_bytes());
                hasher.update((w.k as u64).to_le_bytes());
            }
        }
        let fingerprint = hex::encode(&hasher.finalize()[..8]);
        Self { n, windows, levels, fingerprint }
    }

    /// CSV with columns `level,j,k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,j,k\n");
        for level in &self.levels {
            for w in &self.windows[level.range.clone()] {
                let _ = writeln!(out, "{},{},{}", level.ell, w.j, w.k);
            }
        }
        out
    }
}

impl WindowFamily for SparseCollection {
    fn ambient(&self) -> usize {
        self.n
    }

    fn len(&self) -> usize {
        self.windows.len()
    }

    fn size(&self, i: usize) -> usize {
        self.windows[i].width()
    }

    fn blocks(&self) -> Vec<(usize, Range<usize>)> {
        self.levels
            .iter()
            .filter(|l| !l.range.is_empty())
            .map(|l| (l.ell as usize, l.range.clone()))
            .collect()
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Level whose band `[2^l, 2^(l+1))` holds width `w >= 1`.
pub fn width_level(w: usize) -> u32 {
    usize::BITS - 1 - w.leading_zeros()
}

pub fn build_collection_1d(n: usize) -> Result<SparseCollection> {
    if n == 0 {
        return Err(Error::InvalidSize("collection needs n >= 1".into()));
    }
    let mut windows = Vec::new();
    let mut levels = Vec::new();
    let mut ell = 0u32;
    while ell < usize::BITS && (1usize << ell) <= n {
        let spacing = grid_spacing(n, ell)?;
        let lo = 1usize << ell;
        let hi = (2 * lo - 1).min(n);
        let grid = axis_grid(n, spacing);
        let start = windows.len();
        for (i, &a) in grid.iter().enumerate() {
            let rest = &grid[i + 1..];
            let first = rest.partition_point(|&b| b - a < lo);
            let last = rest.partition_point(|&b| b - a <= hi);
            windows.extend(rest[first..last].iter().map(|&b| Window::new(a + 1, b)));
        }
        levels.push(Level { ell, spacing, range: start..windows.len() });
        ell += 1;
    }
    Ok(SparseCollection::assemble(n, windows, levels))
}

/// Nearest member at the level of `win`'s width, by symmetric difference.
///
/// Candidates are the grid points bracketing each endpoint; ties go to the
/// member that comes first in collection order.
pub fn approximating_member(coll: &SparseCollection, win: Window) -> Result<Window> {
    win.check(coll.n)?;
    let level = &coll.levels[width_level(win.width()) as usize];
    let (lo, hi) = level.band(coll.n);
    let bracket = |x: usize| -> [usize; 2] {
        let down = x / level.spacing * level.spacing;
        let up = (down + level.spacing).min(coll.n);
        [down, up]
    };
    let mut best: Option<(usize, Window)> = None;
    for a in bracket(win.j - 1) {
        for b in bracket(win.k) {
            if b <= a || b - a < lo || b - a > hi {
                continue;
            }
            let cand = Window::new(a + 1, b);
            if !coll.contains(cand) {
                continue;
            }
            let diff = cand.symmetric_difference(&win);
            if best.is_none_or(|(d, w)| diff < d || (diff == d && cand < w)) {
                best = Some((diff, cand));
            }
        }
    }
    best.map(|(_, w)| w).ok_or_else(|| {
        Error::Domain(format!("no member approximates ({}, {}) at level {}", win.j, win.k, level.ell))
    })
}

/// Axis-parallel rectangle: rows `j..=k`, columns `j2..=k2`, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub j: u32,
    pub k: u32,
    pub j2: u32,
    pub k2: u32,
}

impl Rect {
    pub fn rows(&self) -> usize {
        (self.k + 1 - self.j) as usize
    }

    pub fn cols(&self) -> usize {
        (self.k2 + 1 - self.j2) as usize
    }

    pub fn area(&self) -> usize {
        self.rows() * self.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectGroup {
    pub ell: u32,
    pub aspect: i32,
    pub spacing: usize,
    pub rows: usize,
    pub cols: usize,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RectCollection {
    n1: usize,
    n2: usize,
    aspect_base: f64,
    rects: Vec<Rect>,
    groups: Vec<RectGroup>,
    fingerprint: String,
}

impl RectCollection {
    pub fn dims(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn aspect_base(&self) -> f64 {
        self.aspect_base
    }

    pub fn rects(&self) -> &[Rect] {
        &self.rects
    }

    pub fn groups(&self) -> &[RectGroup] {
        &self.groups
    }

    pub fn contains(&self, rect: &Rect) -> bool {
        self.groups.iter().any(|g| {
            g.rows == rect.rows() && g.cols == rect.cols() && self.rects[g.range.clone()].binary_search(rect).is_ok()
        })
    }

    /// CSV with columns `level,j,k,j2,k2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,j,k,j2,k2\n");
        for g in &self.groups {
            for r in &self.rects[g.range.clone()] {
                let _ = writeln!(out, "{},{},{},{},{}", g.ell, r.j, r.k, r.j2, r.k2);
            }
        }
        out
    }
}

impl WindowFamily for RectCollection {
    fn ambient(&self) -> usize {
        self.n1 * self.n2
    }

    fn len(&self) -> usize {
        self.rects.len()
    }

    fn size(&self, i: usize) -> usize {
        self.rects[i].area()
    }

    fn blocks(&self) -> Vec<(usize, Range<usize>)> {
        let mut out: Vec<(usize, Range<usize>)> = Vec::new();
        for g in &self.groups {
            match out.last_mut() {
                Some((ell, r)) if *ell == g.ell as usize => r.end = g.range.end,
                _ => out.push((g.ell as usize, g.range.clone())),
            }
        }
        out
    }

    fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

// ceil() that tolerates representation error in m^k * a
fn side_length(x: f64) -> usize {
    ((x - 1e-9).ceil() as usize).max(1)
}

fn anchors(n: usize, spacing: usize, side: usize) -> Vec<usize> {
    let mut out: Vec<usize> = axis_grid(n, spacing).into_iter().filter(|&a| a + side <= n).collect();
    let flush = n - side;
    if out.last() != Some(&flush) {
        out.push(flush);
    }
    out
}

/// Rectangles built from gridded base squares of side `2^l` with aspect
/// ratios `m^k`, `k = 0, ±1, ±2, ...`, over an `n1 x n2` grid.
///
/// Anchors (lower corners) lie on the per-axis grid `{0, d_l, 2 d_l, ...}`,
/// plus one flush against the far edge. Rectangles that do not fit are
/// dropped, and a rectangle produced by more than one `(l, k)` is kept only
/// at its first occurrence.
pub fn build_collection_2d(n1: usize, n2: usize, m: f64) -> Result<RectCollection> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidSize(format!("grid must be non-empty, got {n1}x{n2}")));
    }
    if n1 > u32::MAX as usize || n2 > u32::MAX as usize {
        return Err(Error::InvalidSize("grid side exceeds u32 range".into()));
    }
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::Domain(format!("aspect base must be > 1, got {m}")));
    }
    let cells = n1 * n2;
    let mut rects = Vec::new();
    let mut groups = Vec::new();
    let mut seen: HashSet<Rect> = HashSet::new();
    let mut ell = 0u32;
    while 2 * ell < usize::BITS && (1usize << (2 * ell)) <= cells {
        let spacing = grid_spacing_2d(cells, ell)?;
        let a = (1usize << ell) as f64;
        let mut aspects = Vec::new();
        for sign in [1i32, -1] {
            let mut k = if sign > 0 { 0 } else { -1 };
            loop {
                let rows = side_length(m.powi(k) * a);
                let cols = side_length(m.powi(-k) * a);
                if (sign > 0 && rows > n1) || (sign < 0 && cols > n2) {
                    break;
                }
                if rows <= n1 && cols <= n2 {
                    aspects.push((k, rows, cols));
                }
                k += sign;
            }
        }
        aspects.sort_unstable_by_key(|&(k, _, _)| k);
        for (k, rows, cols) in aspects {
            let start = rects.len();
            for &x in &anchors(n1, spacing, rows) {
                for &y in &anchors(n2, spacing, cols) {
                    let r = Rect { j: x as u32 + 1, k: (x + rows) as u32, j2: y as u32 + 1, k2: (y + cols) as u32 };
                    if seen.insert(r) {
                        rects.push(r);
                    }
                }
            }
            rects[start..].sort_unstable();
            if rects.len() > start {
                groups.push(RectGroup { ell, aspect: k, spacing, rows, cols, range: start..rects.len() });
            }
        }
        ell += 1;
    }
    let mut hasher = Sha256::new();
    hasher.update(b"rects");
    hasher.update((n1 as u64).to_le_bytes());
    hasher.update((n2 as u64).to_le_bytes());
    hasher.update(m.to_le_bytes());
    for r in &rects {
        for v in [r.j, r.k, r.j2, r.k2] {
            hasher.update(v.to_le_bytes());
        }
    }
    let fingerprint = hex::encode(&hasher.finalize()[..8]);
    Ok(RectCollection { n1, n2, aspect_base: m, rects, groups, fingerprint })
}
