//! Reading distances out of time-to-collision distributions.

use serde::{Deserialize, Serialize};

use crate::error::DecodeError;
use crate::estimator::{FreeSpaceMap, HittingTable, ScalarField};
use crate::gridmap::{Compass, DistField, FieldValue, GridShape, Provenance};

pub const DEFAULT_EPS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub eps: f64,
    pub interpolate: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { eps: DEFAULT_EPS, interpolate: true }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(DecodeError::InvalidParameter(format!("eps must be in (0, 1), got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub steps: f64,
    /// Decoding landed in the `k+` bin; `steps` is then exactly `k`.
    pub saturated: bool,
}

/// First time the cumulative probability reaches `eps`.
///
/// With interpolation, the mass of the selected bin `i` is spread uniformly
/// over `[i - 0.5, i + 0.5]` and the crossing point is returned, clamped to
/// `[0, k]`. The terminal bin means "k or more" and always decodes to `k`.
pub fn eps_decode(dist: &[f64], eps: f64, interpolate: bool) -> Result<Decoded, DecodeError> {
    if dist.is_empty() || !dist.iter().any(|&p| p > 0.0) {
        return Err(DecodeError::ZeroMass);
    }
    let k = dist.len() - 1;
    let mut before = 0.0;
    let mut bin = k;
    for (i, &p) in dist.iter().enumerate() {
        if before + p >= eps {
            bin = i;
            break;
        }
        before += p;
    }
    if bin == k {
        return Ok(Decoded { steps: k as f64, saturated: true });
    }
    let steps = if interpolate {
        let p = dist[bin];
        (bin as f64 - 0.5 + (eps - before) / p).clamp(0.0, k as f64)
    } else {
        bin as f64
    };
    Ok(Decoded { steps, saturated: false })
}

/// Exact probability of colliding within `K` steps: `sum_{t < K} p_t`.
pub fn binary_within_k(dist: &[f64], within: usize) -> Result<f64, DecodeError> {
    if within == 0 || within >= dist.len() {
        return Err(DecodeError::InvalidParameter(format!(
            "K must be in [1, {}], got {within}",
            dist.len() - 1
        )));
    }
    Ok(dist[..within].iter().sum())
}

/// Decoded collision time per (cell, heading), in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadingMap {
    pub width: usize,
    pub height: usize,
    pub compass: Compass,
    /// Indexed `(y * width + x) * H + heading`; `None` is unknown.
    pub values: Vec<Option<f64>>,
    pub saturated: Vec<bool>,
}

impl HeadingMap {
    pub fn get(&self, x: i32, y: i32, heading: u8) -> Option<f64> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return None;
        }
        let h = self.compass.count() as usize;
        self.values[(y as usize * self.width + x as usize) * h + heading as usize]
    }

    /// One field per heading, for export.
    pub fn heading_field(&self, heading: u8) -> DistField {
        let values = (0..self.height as i32)
            .flat_map(|y| (0..self.width as i32).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x, y, heading).map_or(FieldValue::Unknown, FieldValue::Meters))
            .collect();
        DistField { width: self.width, height: self.height, values, provenance: Provenance::Decoded }
    }
}

/// Applies [`eps_decode`] to every observed (cell, heading) of the grid.
pub fn per_heading_map(table: &HittingTable, shape: &GridShape, cfg: &DecodeConfig) -> Result<HeadingMap, DecodeError> {
    cfg.validate()?;
    let h = table.compass.count() as usize;
    let mut values = vec![None; shape.len() * h];
    let mut saturated = vec![false; shape.len() * h];
    for key @ (x, y, heading) in table.keys() {
        if !shape.contains(x, y) || table.sample_count(key) == 0 {
            continue;
        }
        let dist = table.distribution(key).ok_or(DecodeError::ZeroMass)?;
        let d = eps_decode(&dist, cfg.eps, cfg.interpolate)?;
        let idx = shape.index(x, y) * h + heading as usize;
        values[idx] = Some(d.steps * shape.step_size);
        saturated[idx] = d.saturated;
    }
    Ok(HeadingMap { width: shape.width, height: shape.height, compass: table.compass, values, saturated })
}

fn min_over_headings(width: usize, height: usize, h: usize, values: &[Option<f64>]) -> DistField {
    let values = (0..width * height)
        .map(|c| {
            values[c * h..(c + 1) * h]
                .iter()
                .flatten()
                .copied()
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
                .map_or(FieldValue::Unknown, FieldValue::Meters)
        })
        .collect();
    DistField { width, height, values, provenance: Provenance::Decoded }
}

/// Per cell, the minimum decoded time over observed headings.
pub fn distance_field(table: &HittingTable, shape: &GridShape, cfg: &DecodeConfig) -> Result<DistField, DecodeError> {
    let m = per_heading_map(table, shape, cfg)?;
    Ok(heading_map_to_field(&m))
}

pub fn heading_map_to_field(m: &HeadingMap) -> DistField {
    min_over_headings(m.width, m.height, m.compass.count() as usize, &m.values)
}

/// Distance field from a scalar regressor (mean or median steps per heading).
pub fn scalar_distance_field(field: &ScalarField, shape: &GridShape) -> DistField {
    let h = field.compass.count() as usize;
    let mut values = vec![None; shape.len() * h];
    for (&(x, y, heading), e) in &field.entries {
        if shape.contains(x, y) {
            values[shape.index(x, y) * h + heading as usize] = Some(e.value * shape.step_size);
        }
    }
    min_over_headings(shape.width, shape.height, h, &values)
}

/// Binary free-space grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Floorplan {
    pub width: usize,
    pub height: usize,
    pub free: Vec<bool>,
}

impl Floorplan {
    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }
}

pub enum FloorplanSource<'a> {
    /// Free where the field has a metric value no larger than the threshold.
    Field(&'a DistField),
    /// Free where the observed collision frequency is below the threshold.
    FreeSpace(&'a FreeSpaceMap, usize, usize),
}

/// Thresholds a field or classifier into a floorplan; unknown cells are occupied.
pub fn floorplan(source: FloorplanSource<'_>, threshold: f64) -> Floorplan {
    match source {
        FloorplanSource::Field(f) => Floorplan {
            width: f.width,
            height: f.height,
            free: f.values.iter().map(|v| v.meters().is_some_and(|m| m <= threshold)).collect(),
        },
        FloorplanSource::FreeSpace(fs, width, height) => Floorplan {
            width,
            height,
            free: (0..height as i32)
                .flat_map(|y| (0..width as i32).map(move |x| (x, y)))
                .map(|(x, y)| fs.probability(x, y).is_some_and(|p| p < threshold))
                .collect(),
        },
    }
}
