//! Distribution similarity, retrieval, and evaluation metrics.

use std::cmp::Ordering;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::decode::{floorplan, Floorplan, FloorplanSource};
use crate::error::MetricError;
use crate::estimator::HittingTable;
use crate::gridmap::{ground_truth_steps, Compass, DistField, GridMap};

/// Identifies where a profile came from: a scene and a cell in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ProfileKey {
    pub scene: String,
    pub x: i32,
    pub y: i32,
}

/// One time-to-collision distribution per heading.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleProfile {
    pub key: ProfileKey,
    pub rows: Vec<Vec<f64>>,
}

impl AngleProfile {
    /// Profile of a cell, or `None` if some heading has no distribution.
    pub fn from_table(table: &HittingTable, scene: &str, x: i32, y: i32) -> Option<Self> {
        let rows = (0..table.compass.count())
            .map(|h| table.distribution((x, y, h)))
            .collect::<Option<Vec<_>>>()?;
        Some(AngleProfile { key: ProfileKey { scene: scene.to_string(), x, y }, rows })
    }

    /// Cyclically shifts headings: row `h` of the result is row `h + by` of `self`.
    pub fn rotated(&self, by: usize) -> Self {
        let n = self.rows.len();
        let rows = (0..n).map(|h| self.rows[(h + by) % n].clone()).collect();
        AngleProfile { key: self.key.clone(), rows }
    }
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Base-2 Jensen-Shannon divergence, in `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m)).clamp(0.0, 1.0)
}

/// Rotation-aligned dissimilarity: the minimum over cyclic heading offsets of
/// the mean per-heading JSD.
pub fn jsd_aligned(p1: &AngleProfile, p2: &AngleProfile) -> Result<f64, MetricError> {
    let h = p1.rows.len();
    if h == 0 || h != p2.rows.len() || p1.rows.iter().chain(&p2.rows).any(|r| r.len() != p1.rows[0].len()) {
        return Err(MetricError::ShapeMismatch(format!(
            "profiles {:?} and {:?} differ in headings or bins",
            p1.key, p2.key
        )));
    }
    Ok((0..h)
        .map(|theta| (0..h).map(|a| jsd(&p1.rows[a], &p2.rows[(a + theta) % h])).sum::<f64>() / h as f64)
        .fold(f64::INFINITY, f64::min))
}

/// The `m` closest corpus profiles, ascending by [`jsd_aligned`], ties by key.
/// With `one_per_scene`, only the best match of each scene is kept.
pub fn nearest_neighbors(
    query: &AngleProfile,
    corpus: &[AngleProfile],
    m: usize,
    one_per_scene: bool,
) -> Result<Vec<(ProfileKey, f64)>, MetricError> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut scored = corpus
        .par_iter()
        .map(|c| jsd_aligned(query, c).map(|d| (c.key.clone(), d)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let mut seen = std::collections::BTreeSet::new();
    Ok(scored
        .into_iter()
        .filter(|(k, _)| !one_per_scene || seen.insert(k.scene.clone()))
        .take(m)
        .collect())
}

/// Probability that a positive pair scores lower (more similar) than a
/// negative pair, ties counting one half. Computed from mid-ranks.
pub fn auroc(scores: &[f64], positive: &[bool]) -> Result<f64, MetricError> {
    if scores.len() != positive.len() {
        return Err(MetricError::ShapeMismatch(format!("{} scores vs {} labels", scores.len(), positive.len())));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_neg = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based mid-rank of the tie block i..=j
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_neg += mid * order[i..=j].iter().filter(|&&o| !positive[o]).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_neg - nn * (nn + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryClass {
    Open,
    WallAdjacent,
    Corridor,
    Corner,
}

impl GeometryClass {
    pub fn name(self) -> &'static str {
        match self {
            GeometryClass::Open => "open",
            GeometryClass::WallAdjacent => "wall-adjacent",
            GeometryClass::Corridor => "corridor",
            GeometryClass::Corner => "corner",
        }
    }
}

/// Rule-based scene labels per cell (`None` for occupied cells and for
/// cells one step from a wall, which fit no class).
///
/// In order: a free cell with walls on two opposite sides is a corridor,
/// with walls on two orthogonal sides a corner, with any adjacent wall
/// wall-adjacent; cells at least two steps from any wall are open.
pub fn geometry_labels(map: &GridMap) -> Vec<Option<GeometryClass>> {
    let steps = ground_truth_steps(map, Compass::Four);
    let mut out = vec![None; map.width() * map.height()];
    for (x, y) in map.free_cells() {
        let wall = |dx: i32, dy: i32| map.is_occupied(x + dx, y + dy);
        let (e, s, w, n) = (wall(1, 0), wall(0, 1), wall(-1, 0), wall(0, -1));
        let idx = y as usize * map.width() + x as usize;
        out[idx] = if (e && w) || (n && s) {
            Some(GeometryClass::Corridor)
        } else if (e || w) && (n || s) {
            Some(GeometryClass::Corner)
        } else if steps[idx] == Some(0) {
            Some(GeometryClass::WallAdjacent)
        } else if steps[idx].is_some_and(|d| d >= 2) {
            Some(GeometryClass::Open)
        } else {
            None
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub pct_within_delta: f64,
    pub iou: f64,
    pub n_cells: usize,
    pub delta: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "mae,rmse,pct_within_delta,iou,n_cells,delta";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{},{}",
            self.mae, self.rmse, self.pct_within_delta, self.iou, self.n_cells, self.delta
        )
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        writeln!(out, "{}", self.csv_row())
    }
}

/// Intersection over union of the free sets.
pub fn floorplan_iou(pred: &Floorplan, truth: &Floorplan) -> Result<f64, MetricError> {
    iou_masked(pred, truth, None)
}

/// IoU restricted to cells where `mask` is true.
pub fn iou_masked(pred: &Floorplan, truth: &Floorplan, mask: Option<&[bool]>) -> Result<f64, MetricError> {
    if pred.free.len() != truth.free.len() {
        return Err(MetricError::ShapeMismatch("floorplans differ in size".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..pred.free.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        inter += usize::from(pred.free[i] && truth.free[i]);
        union += usize::from(pred.free[i] || truth.free[i]);
    }
    if union == 0 {
        return Err(MetricError::Undefined("both floorplans are empty".into()));
    }
    Ok(inter as f64 / union as f64)
}

/// MAE, RMSE and fraction within `delta` over cells where both fields are
/// metric (and `eval_mask` allows); IoU over the whole grid.
pub fn field_metrics(
    pred: &DistField,
    truth: &DistField,
    delta: f64,
    eval_mask: Option<&[bool]>,
) -> Result<MetricsReport, MetricError> {
    if pred.width != truth.width || pred.height != truth.height {
        return Err(MetricError::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let residuals: Vec<f64> = (0..pred.values.len())
        .filter(|&i| eval_mask.is_none_or(|m| m[i]))
        .filter_map(|i| Some(pred.values[i].meters()? - truth.values[i].meters()?))
        .collect();
    if residuals.is_empty() {
        return Err(MetricError::Undefined("no evaluable cells".into()));
    }
    let n = residuals.len() as f64;
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / n;
    let rmse = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    // tolerate representation error at the threshold itself
    let within = residuals.iter().filter(|r| r.abs() <= delta + 1e-12).count() as f64 / n;
    let iou = floorplan_iou(
        &floorplan(FloorplanSource::Field(pred), f64::INFINITY),
        &floorplan(FloorplanSource::Field(truth), f64::INFINITY),
    )?;
    Ok(MetricsReport { mae, rmse: rmse.max(mae), pct_within_delta: within, iou, n_cells: residuals.len(), delta })
}

/// F1 of `prob >= threshold` against binary truth.
pub fn binary_f1(pred_probs: &[f64], truth: &[bool], threshold: f64) -> Result<f64, MetricError> {
    if pred_probs.len() != truth.len() {
        return Err(MetricError::ShapeMismatch(format!("{} vs {}", pred_probs.len(), truth.len())));
    }
    if !truth.iter().any(|&t| t) {
        return Err(MetricError::Undefined("no positive examples".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred_probs.iter().zip(truth) {
        match (p >= threshold, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Orders by dissimilarity then key; shared by retrieval output.
pub fn cmp_scored(a: &(ProfileKey, f64), b: &(ProfileKey, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0))
}
