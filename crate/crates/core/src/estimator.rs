//! Estimators fitted from replay samples.
//!
//! The multinomial [`HittingTable`] is the tabular minimizer of the expected
//! negative log-likelihood: per-key label counts, normalized at query time
//! with a small pseudo-count. The scalar regressors and the free-space
//! classifier are the baselines it is compared against.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;

use crate::agent::{Action, Pose};
use crate::error::EstimatorError;
use crate::gridmap::{Compass, GridMap};
use crate::replay::{label_egocentric, ReplayConfig, ReplaySample};
use crate::rollout::Trajectory;

pub const DEFAULT_ALPHA_S: f64 = 1e-3;

/// (x, y, heading)
pub type CellKey = (i32, i32, u8);

/// Per-(cell, heading) multinomial counts over `k + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTable {
    pub compass: Compass,
    pub k: u16,
    pub alpha_s: f64,
    counts: BTreeMap<CellKey, Vec<u64>>,
}

fn normalize(counts: Option<&[u64]>, bins: usize, alpha_s: f64) -> Option<Vec<f64>> {
    let total: u64 = counts.map_or(0, |c| c.iter().sum());
    let denom = total as f64 + bins as f64 * alpha_s;
    if denom <= 0.0 {
        return None;
    }
    Some(match counts {
        Some(c) => c.iter().map(|&n| (n as f64 + alpha_s) / denom).collect(),
        None => vec![alpha_s / denom; bins],
    })
}

fn check_k(samples: &[ReplaySample], k: u16) -> Result<(), EstimatorError> {
    match samples.iter().find(|s| s.k != k) {
        Some(s) => Err(EstimatorError::MixedK { expected: k, found: s.k }),
        None => Ok(()),
    }
}

impl HittingTable {
    pub fn empty(compass: Compass, k: u16, alpha_s: f64) -> Self {
        HittingTable { compass, k, alpha_s, counts: BTreeMap::new() }
    }

    pub fn bins(&self) -> usize {
        self.k as usize + 1
    }

    pub fn counts(&self, key: CellKey) -> Option<&[u64]> {
        self.counts.get(&key).map(Vec::as_slice)
    }

    pub fn sample_count(&self, key: CellKey) -> u64 {
        self.counts(key).map_or(0, |c| c.iter().sum())
    }

    /// Number of samples over all headings of a cell.
    pub fn cell_count(&self, x: i32, y: i32) -> u64 {
        (0..self.compass.count()).map(|h| self.sample_count((x, y, h))).sum()
    }

    pub fn keys(&self) -> impl Iterator<Item = CellKey> + '_ {
        self.counts.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// `(count_t + alpha_s) / (N + (k + 1) alpha_s)`; `None` when there is
    /// neither data nor smoothing to define a distribution.
    pub fn distribution(&self, key: CellKey) -> Option<Vec<f64>> {
        normalize(self.counts(key), self.bins(), self.alpha_s)
    }

    pub fn add(&mut self, key: CellKey, label: u16) {
        self.add_count(key, label, 1);
    }

    pub fn add_count(&mut self, key: CellKey, label: u16, n: u64) {
        let bins = self.bins();
        self.counts.entry(key).or_insert_with(|| vec![0; bins])[label as usize] += n;
    }

    /// Adds another table's counts. Tables must agree on `k`, `alpha_s` and headings.
    pub fn merge_from(&mut self, other: &HittingTable) -> Result<(), EstimatorError> {
        if self.k != other.k || self.alpha_s.to_bits() != other.alpha_s.to_bits() || self.compass != other.compass {
            return Err(EstimatorError::Mismatch(format!(
                "(k={}, alpha_s={}, H={}) vs (k={}, alpha_s={}, H={})",
                self.k,
                self.alpha_s,
                self.compass.count(),
                other.k,
                other.alpha_s,
                other.compass.count()
            )));
        }
        for (key, c) in &other.counts {
            let dst = self.counts.entry(*key).or_insert_with(|| vec![0; c.len()]);
            for (d, s) in dst.iter_mut().zip(c) {
                *d += s;
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W, comment: Option<&str>) -> io::Result<()> {
        writeln!(out, "# hitting-table v1")?;
        writeln!(out, "# k={} alpha_s={} headings={}", self.k, self.alpha_s, self.compass.count())?;
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        let bins: Vec<String> = (0..self.bins()).map(|i| format!("c{i}")).collect();
        writeln!(out, "x,y,heading,{}", bins.join(","))?;
        for ((x, y, h), c) in &self.counts {
            let c: Vec<String> = c.iter().map(u64::to_string).collect();
            writeln!(out, "{x},{y},{h},{}", c.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, EstimatorError> {
        let fmt = |line: usize, message: String| EstimatorError::Format { line, message };
        let mut meta: Option<(u16, f64, Compass)> = None;
        let mut table: Option<HittingTable> = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            if let Some(rest) = line.strip_prefix("# ") {
                if rest.starts_with("k=") {
                    let mut k = None;
                    let mut alpha = None;
                    let mut h = None;
                    for kv in rest.split_whitespace() {
                        match kv.split_once('=') {
                            Some(("k", v)) => k = v.parse::<u16>().ok(),
                            Some(("alpha_s", v)) => alpha = v.parse::<f64>().ok(),
                            Some(("headings", v)) => h = v.parse::<u8>().ok().and_then(Compass::from_count),
                            _ => {}
                        }
                    }
                    match (k, alpha, h) {
                        (Some(k), Some(a), Some(h)) => meta = Some((k, a, h)),
                        _ => return Err(fmt(lineno, format!("bad metadata {rest:?}"))),
                    }
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if line.starts_with("x,") {
                let (k, a, h) = meta.ok_or_else(|| fmt(lineno, "header before metadata".into()))?;
                table = Some(HittingTable::empty(h, k, a));
                continue;
            }
            let t = table.as_mut().ok_or_else(|| fmt(lineno, "row before header".into()))?;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 + t.bins() {
                return Err(fmt(lineno, format!("expected {} fields, got {}", 3 + t.bins(), fields.len())));
            }
            let bad = |e: std::num::ParseIntError| fmt(lineno, e.to_string());
            let key = (
                fields[0].parse::<i32>().map_err(bad)?,
                fields[1].parse::<i32>().map_err(bad)?,
                fields[2].parse::<u8>().map_err(bad)?,
            );
            let counts = fields[3..].iter().map(|f| f.parse::<u64>().map_err(bad)).collect::<Result<Vec<_>, _>>()?;
            t.counts.insert(key, counts);
        }
        table.ok_or_else(|| fmt(0, "missing header".into()))
    }
}

/// Counts samples per (cell, heading).
pub fn fit_table(samples: &[ReplaySample], compass: Compass, k: u16, alpha_s: f64) -> Result<HittingTable, EstimatorError> {
    check_k(samples, k)?;
    let mut t = HittingTable::empty(compass, k, alpha_s);
    for s in samples {
        t.add(s.key(), s.label);
    }
    Ok(t)
}

/// Fits `shards` partial tables in parallel and merges them.
pub fn fit_table_sharded(
    samples: &[ReplaySample],
    compass: Compass,
    k: u16,
    alpha_s: f64,
    shards: usize,
) -> Result<HittingTable, EstimatorError> {
    let chunk = samples.len().div_ceil(shards.max(1)).max(1);
    let parts = samples
        .par_chunks(chunk)
        .map(|c| fit_table(c, compass, k, alpha_s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = HittingTable::empty(compass, k, alpha_s);
    for p in &parts {
        out.merge_from(p)?;
    }
    Ok(out)
}

/// Sums the counts of compatible tables.
pub fn merge(tables: &[HittingTable]) -> Result<HittingTable, EstimatorError> {
    let first = tables.first().ok_or(EstimatorError::EmptyModel)?;
    let mut out = HittingTable::empty(first.compass, first.k, first.alpha_s);
    for t in tables {
        out.merge_from(t)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEntry {
    pub value: f64,
    pub count: u64,
}

/// A scalar per (cell, heading), reported only where samples exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub compass: Compass,
    pub entries: BTreeMap<CellKey, ScalarEntry>,
}

impl ScalarField {
    pub fn get(&self, key: CellKey) -> Option<ScalarEntry> {
        self.entries.get(&key).copied()
    }
}

fn group_labels(samples: &[ReplaySample]) -> BTreeMap<CellKey, Vec<u16>> {
    let mut g: BTreeMap<CellKey, Vec<u16>> = BTreeMap::new();
    for s in samples {
        g.entry(s.key()).or_default().push(s.label);
    }
    g
}

/// Per-key sample mean (the squared-loss minimizer). Clamped `k+` labels count as `k`.
pub fn fit_mean(samples: &[ReplaySample], compass: Compass) -> ScalarField {
    let entries = group_labels(samples)
        .into_iter()
        .map(|(key, labels)| {
            let n = labels.len() as u64;
            let sum: u64 = labels.iter().map(|&l| l as u64).sum();
            (key, ScalarEntry { value: sum as f64 / n as f64, count: n })
        })
        .collect();
    ScalarField { compass, entries }
}

/// Per-key lower sample median (an absolute-loss minimizer).
pub fn fit_median(samples: &[ReplaySample], compass: Compass) -> ScalarField {
    let entries = group_labels(samples)
        .into_iter()
        .map(|(key, mut labels)| {
            labels.sort_unstable();
            let n = labels.len();
            (key, ScalarEntry { value: labels[(n - 1) / 2] as f64, count: n as u64 })
        })
        .collect();
    ScalarField { compass, entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VisitStats {
    pub visits: u64,
    pub collisions: u64,
}

/// Per-cell collision frequency over visits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FreeSpaceMap {
    pub cells: BTreeMap<(i32, i32), VisitStats>,
}

impl FreeSpaceMap {
    /// `None` for cells never visited.
    pub fn probability(&self, x: i32, y: i32) -> Option<f64> {
        self.cells
            .get(&(x, y))
            .filter(|s| s.visits > 0)
            .map(|s| s.collisions as f64 / s.visits as f64)
    }

    pub fn visits(&self, x: i32, y: i32) -> u64 {
        self.cells.get(&(x, y)).map_or(0, |s| s.visits)
    }
}

pub fn fit_freespace(trajectories: &[Trajectory]) -> FreeSpaceMap {
    let mut m = FreeSpaceMap::default();
    for traj in trajectories {
        for s in &traj.steps {
            let e = m.cells.entry(s.pose.cell()).or_default();
            e.visits += 1;
            e.collisions += u64::from(s.collided);
        }
    }
    m
}

/// Range-sensor layout for egocentric conditioning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanConfig {
    /// Beam directions relative to the pose heading, in eighth turns.
    pub offsets: Vec<i8>,
    pub levels: u8,
    pub max_range: u32,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { offsets: vec![-2, -1, 0, 1, 2], levels: 8, max_range: 16 }
    }
}

/// Quantized beam ranges, one per configured offset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScanSignature(pub Vec<u8>);

impl ScanSignature {
    pub fn l1(&self, other: &ScanSignature) -> u32 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs()).sum()
    }
}

/// Ray-marches each beam; the range is the step count to the first occupied
/// cell (an adjacent wall is range 1), clamped to `max_range` and quantized
/// uniformly to `levels` bins.
pub fn scan_signature(map: &GridMap, compass: Compass, pose: Pose, cfg: &ScanConfig) -> ScanSignature {
    let base = pose.heading as i32 * 8 / compass.count() as i32;
    let beams = cfg
        .offsets
        .iter()
        .map(|&off| {
            let (dx, dy) = Compass::Eight.dir((base + off as i32).rem_euclid(8) as u8);
            let mut r = 1;
            while r < cfg.max_range && map.is_free(pose.x + dx * r as i32, pose.y + dy * r as i32) {
                r += 1;
            }
            let level = ((r - 1) as u64 * cfg.levels as u64 / cfg.max_range as u64) as u8;
            level.min(cfg.levels - 1)
        })
        .collect();
    ScanSignature(beams)
}

/// A sample keyed by what the agent sensed and what it did next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EgoSample {
    pub signature: ScanSignature,
    pub action: Action,
    pub label: u16,
    pub k: u16,
}

/// Egocentric labels with the scan taken at the true pose of each step.
pub fn egocentric_samples(
    map: &GridMap,
    trajectories: &[Trajectory],
    replay: &ReplayConfig,
    scan: &ScanConfig,
) -> Vec<EgoSample> {
    trajectories
        .iter()
        .flat_map(|t| {
            label_egocentric(t, replay).into_iter().map(move |s| EgoSample {
                signature: scan_signature(map, t.compass, Pose::new(s.x, s.y, s.heading), scan),
                action: s.action,
                label: s.label,
                k: s.k,
            })
        })
        .collect()
}

/// Time-to-collision distribution conditioned on (observation, next action).
#[derive(Debug, Clone, PartialEq)]
pub struct EgocentricModel {
    pub k: u16,
    pub alpha_s: f64,
    counts: BTreeMap<(ScanSignature, Action), Vec<u64>>,
}

/// Result of an egocentric query, naming the stored key that answered it.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoPrediction {
    pub distribution: Vec<f64>,
    pub matched: (ScanSignature, Action),
    pub exact: bool,
}

pub fn fit_egocentric(samples: &[EgoSample], k: u16, alpha_s: f64) -> Result<EgocentricModel, EstimatorError> {
    if let Some(s) = samples.iter().find(|s| s.k != k) {
        return Err(EstimatorError::MixedK { expected: k, found: s.k });
    }
    let mut counts: BTreeMap<(ScanSignature, Action), Vec<u64>> = BTreeMap::new();
    for s in samples {
        counts
            .entry((s.signature.clone(), s.action))
            .or_insert_with(|| vec![0; k as usize + 1])[s.label as usize] += 1;
    }
    Ok(EgocentricModel { k, alpha_s, counts })
}

impl EgocentricModel {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Exact lookup, else the nearest stored signature by L1 distance among
    /// keys with the same action (any action if none share it). Ties go to
    /// the key with more samples, then to the smaller key.
    pub fn predict(&self, signature: &ScanSignature, action: Action) -> Result<EgoPrediction, EstimatorError> {
        let key = (signature.clone(), action);
        let bins = self.k as usize + 1;
        if let Some(c) = self.counts.get(&key) {
            let distribution = normalize(Some(c), bins, self.alpha_s).ok_or(EstimatorError::EmptyModel)?;
            return Ok(EgoPrediction { distribution, matched: key, exact: true });
        }
        let same_action = self.counts.keys().any(|(_, a)| *a == action);
        let best = self
            .counts
            .iter()
            .filter(|((_, a), _)| !same_action || *a == action)
            .min_by(|(ka, ca), (kb, cb)| {
                let da = ka.0.l1(signature);
                let db = kb.0.l1(signature);
                let na: u64 = ca.iter().sum();
                let nb: u64 = cb.iter().sum();
                da.cmp(&db).then(nb.cmp(&na)).then(ka.cmp(kb))
            })
            .ok_or(EstimatorError::EmptyModel)?;
        let distribution = normalize(Some(best.1), bins, self.alpha_s).ok_or(EstimatorError::EmptyModel)?;
        Ok(EgoPrediction { distribution, matched: best.0.clone(), exact: false })
    }
}
