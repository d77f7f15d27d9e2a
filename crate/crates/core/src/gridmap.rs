//! Occupancy-grid world model.
//!
//! A [`GridMap`] is a walled, row-major occupancy grid. Besides parsing,
//! serialization and procedural generation, this module owns the
//! ground-truth distance function: the minimum number of forward steps
//! (with free rotation) after which a forward move would bump into an
//! occupied cell.

use std::collections::VecDeque;
use std::fmt;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::MapError;

/// Default metric length of one forward step.
pub const DEFAULT_STEP_SIZE: f64 = 0.25;

/// Heading quantization of the world.
///
/// Headings are numbered clockwise in screen coordinates (x right, y down),
/// starting east. Turning left decrements the heading index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Compass {
    Four,
    Eight,
}

const DIRS4: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];
const DIRS8: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

impl Compass {
    pub fn from_count(h: u8) -> Option<Self> {
        match h {
            4 => Some(Compass::Four),
            8 => Some(Compass::Eight),
            _ => None,
        }
    }

    pub fn count(self) -> u8 {
        match self {
            Compass::Four => 4,
            Compass::Eight => 8,
        }
    }

    /// Unit grid offset for a heading index (taken modulo the heading count).
    pub fn dir(self, heading: u8) -> (i32, i32) {
        match self {
            Compass::Four => DIRS4[(heading % 4) as usize],
            Compass::Eight => DIRS8[(heading % 8) as usize],
        }
    }

    pub fn dirs(self) -> &'static [(i32, i32)] {
        match self {
            Compass::Four => &DIRS4,
            Compass::Eight => &DIRS8,
        }
    }

    /// Adds a signed number of heading increments, wrapping around.
    pub fn rotate(self, heading: u8, delta: i32) -> u8 {
        let h = self.count() as i32;
        (heading as i32 + delta).rem_euclid(h) as u8
    }
}

impl Default for Compass {
    fn default() -> Self {
        Compass::Four
    }
}

impl From<Compass> for u8 {
    fn from(c: Compass) -> u8 {
        c.count()
    }
}

impl TryFrom<u8> for Compass {
    type Error = String;

    fn try_from(h: u8) -> Result<Self, Self::Error> {
        Compass::from_count(h).ok_or_else(|| format!("heading count must be 4 or 8, got {h}"))
    }
}

/// Grid dimensions plus the metric step length; enough to lay out a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridShape {
    pub width: usize,
    pub height: usize,
    pub step_size: f64,
}

impl GridShape {
    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn index(&self, x: i32, y: i32) -> usize {
        y as usize * self.width + x as usize
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Walled occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
    step_size: f64,
}

impl GridMap {
    /// Builds a map from row-major occupancy flags, checking every invariant.
    pub fn new(
        width: usize,
        height: usize,
        occupied: Vec<bool>,
        step_size: f64,
    ) -> Result<Self, MapError> {
        if width < 3 || height < 3 {
            return Err(MapError::Invalid(format!(
                "map must be at least 3x3, got {width}x{height}"
            )));
        }
        if occupied.len() != width * height {
            return Err(MapError::Invalid(format!(
                "expected {} cells, got {}",
                width * height,
                occupied.len()
            )));
        }
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(MapError::Invalid(format!("step size must be positive, got {step_size}")));
        }
        let map = GridMap { width, height, occupied, step_size };
        if let Some((x, y)) = map.border_cells().find(|&(x, y)| map.is_free(x, y)) {
            return Err(MapError::Invalid(format!("border cell ({x}, {y}) is free")));
        }
        if map.free_count() == 0 {
            return Err(MapError::Invalid("map has no free cells".into()));
        }
        Ok(map)
    }

    /// Empty walled room.
    pub fn empty_room(width: usize, height: usize) -> Result<Self, MapError> {
        let mut occ = vec![false; width * height];
        for y in 0..height {
            for x in 0..width {
                occ[y * width + x] = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
            }
        }
        GridMap::new(width, height, occ, DEFAULT_STEP_SIZE)
    }

    pub fn with_step_size(mut self, step_size: f64) -> Result<Self, MapError> {
        if !(step_size > 0.0 && step_size.is_finite()) {
            return Err(MapError::Invalid(format!("step size must be positive, got {step_size}")));
        }
        self.step_size = step_size;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn shape(&self) -> GridShape {
        GridShape { width: self.width, height: self.height, step_size: self.step_size }
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        self.shape().contains(x, y)
    }

    /// Off-map coordinates count as occupied.
    pub fn is_occupied(&self, x: i32, y: i32) -> bool {
        !self.in_bounds(x, y) || self.occupied[y as usize * self.width + x as usize]
    }

    pub fn is_free(&self, x: i32, y: i32) -> bool {
        !self.is_occupied(x, y)
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn free_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| !o).count()
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::with_capacity(self.free_count());
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                if self.is_free(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn border_cells(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        let (w, h) = (self.width as i32, self.height as i32);
        (0..w)
            .flat_map(move |x| [(x, 0), (x, h - 1)])
            .chain((0..h).flat_map(move |y| [(0, y), (w - 1, y)]))
    }

    /// True when a forward step from `(x, y)` along `heading` would collide.
    pub fn blocked(&self, x: i32, y: i32, compass: Compass, heading: u8) -> bool {
        let (dx, dy) = compass.dir(heading);
        self.is_occupied(x + dx, y + dy)
    }

    /// Parses the ASCII format: `#` occupied, `.` free, one row per line.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let lines: Vec<&str> = text
            .split('\n')
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect();
        // a single trailing newline terminates the last row
        let lines = match lines.split_last() {
            Some((last, rest)) if last.is_empty() => rest.to_vec(),
            _ => lines,
        };
        if lines.is_empty() {
            return Err(MapError::Parse { line: 1, column: 1, message: "empty map".into() });
        }
        let width = lines[0].chars().count();
        let height = lines.len();
        let mut occ = Vec::with_capacity(width * height);
        for (row, line) in lines.iter().enumerate() {
            let mut n = 0;
            for (col, ch) in line.chars().enumerate() {
                match ch {
                    '#' => occ.push(true),
                    '.' => occ.push(false),
                    other => {
                        return Err(MapError::Parse {
                            line: row + 1,
                            column: col + 1,
                            message: format!("illegal character {other:?}"),
                        })
                    }
                }
                n += 1;
            }
            if n != width {
                return Err(MapError::Parse {
                    line: row + 1,
                    column: n.min(width) + 1,
                    message: format!("ragged row: expected {width} cells, found {n}"),
                });
            }
        }
        if width < 3 || height < 3 {
            return Err(MapError::Parse {
                line: 1,
                column: 1,
                message: format!("map must be at least 3x3, got {width}x{height}"),
            });
        }
        for y in 0..height {
            for x in 0..width {
                let border = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
                if border && !occ[y * width + x] {
                    return Err(MapError::Parse {
                        line: y + 1,
                        column: x + 1,
                        message: "border is not enclosed".into(),
                    });
                }
            }
        }
        GridMap::new(width, height, occ, DEFAULT_STEP_SIZE)
    }

    /// Serializes to the ASCII format, one newline-terminated row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.occupied[y * self.width + x] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    /// Stable content identifier (FNV-1a over the ASCII form).
    pub fn id(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_text().bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Where a distance field came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    GroundTruth,
    Decoded,
}

/// Per-cell value of a distance field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldValue {
    Occupied,
    Unknown,
    Meters(f64),
}

impl FieldValue {
    pub fn meters(self) -> Option<f64> {
        match self {
            FieldValue::Meters(m) => Some(m),
            _ => None,
        }
    }
}

/// Row-major distance field in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DistField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<FieldValue>,
    pub provenance: Provenance,
}

impl DistField {
    pub fn get(&self, x: i32, y: i32) -> FieldValue {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return FieldValue::Unknown;
        }
        self.values[y as usize * self.width + x as usize]
    }

    pub fn max_meters(&self) -> Option<f64> {
        self.values
            .iter()
            .filter_map(|v| v.meters())
            .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.max(m))))
    }

    pub fn min_meters(&self) -> Option<f64> {
        self.values
            .iter()
            .filter_map(|v| v.meters())
            .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.min(m))))
    }

    /// Row-major CSV; occupied cells are `occ`, unknown cells `unk`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| match self.values[y * self.width + x] {
                    FieldValue::Occupied => "occ".to_string(),
                    FieldValue::Unknown => "unk".to_string(),
                    FieldValue::Meters(m) => format!("{m:.4}"),
                })
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Plain (P2) grayscale PGM scaled by the field maximum; non-metric cells are 0.
    pub fn write_pgm<W: Write>(&self, mut out: W, comment: Option<&str>) -> io::Result<()> {
        writeln!(out, "P2")?;
        if let Some(c) = comment {
            for line in c.lines() {
                writeln!(out, "# {line}")?;
            }
        }
        writeln!(out, "{} {}", self.width, self.height)?;
        writeln!(out, "255")?;
        let d_max = self.max_meters().unwrap_or(0.0);
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| pgm_level(self.values[y * self.width + x].meters(), d_max).to_string())
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

pub(crate) fn pgm_level(value: Option<f64>, d_max: f64) -> u8 {
    match value {
        Some(d) if d_max > 0.0 => (255.0 * d / d_max).round().clamp(0.0, 255.0) as u8,
        _ => 0,
    }
}

/// Ground-truth distance function.
///
/// Multi-source BFS over free cells using the heading neighborhoods of
/// `compass`. Seeds are free cells with at least one occupied neighbor among
/// those directions; a cell's value is its BFS depth times the step size.
pub fn ground_truth_df(map: &GridMap, compass: Compass) -> DistField {
    let steps = ground_truth_steps(map, compass);
    let values = steps
        .iter()
        .map(|s| match s {
            None => FieldValue::Occupied,
            Some(d) => FieldValue::Meters(*d as f64 * map.step_size()),
        })
        .collect();
    DistField {
        width: map.width(),
        height: map.height(),
        values,
        provenance: Provenance::GroundTruth,
    }
}

/// BFS depths (in steps) behind [`ground_truth_df`]; `None` for occupied cells.
pub fn ground_truth_steps(map: &GridMap, compass: Compass) -> Vec<Option<u32>> {
    let shape = map.shape();
    let mut depth: Vec<Option<u32>> = vec![None; shape.len()];
    let mut queue = VecDeque::new();
    for (x, y) in map.free_cells() {
        let seed = compass.dirs().iter().any(|&(dx, dy)| map.is_occupied(x + dx, y + dy));
        if seed {
            depth[shape.index(x, y)] = Some(0);
            queue.push_back((x, y));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let d = depth[shape.index(x, y)].expect("queued cells have a depth");
        for &(dx, dy) in compass.dirs() {
            let (nx, ny) = (x + dx, y + dy);
            if map.is_free(nx, ny) && depth[shape.index(nx, ny)].is_none() {
                depth[shape.index(nx, ny)] = Some(d + 1);
                queue.push_back((nx, ny));
            }
        }
    }
    depth
}

/// Procedural map families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Rooms,
    Corridors,
    RandomObstacles,
}

impl std::str::FromStr for MapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rooms" => Ok(MapKind::Rooms),
            "corridors" => Ok(MapKind::Corridors),
            "random-obstacles" => Ok(MapKind::RandomObstacles),
            other => Err(format!("unknown map kind {other:?}")),
        }
    }
}

const GENERATION_RETRIES: u64 = 16;

/// Deterministic map generator. Every result is enclosed and has a single
/// 4-connected free region.
pub fn generate_map(
    kind: MapKind,
    seed: u64,
    width: usize,
    height: usize,
    density: f64,
) -> Result<GridMap, MapError> {
    if width < 8 || height < 8 {
        return Err(MapError::Generation(format!(
            "maps must be at least 8x8, got {width}x{height}"
        )));
    }
    if !(0.0..0.5).contains(&density) {
        return Err(MapError::Generation(format!("density must be in [0, 0.5), got {density}")));
    }
    for attempt in 0..GENERATION_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut grid = Canvas::walled(width, height);
        match kind {
            MapKind::Rooms => grid.divide_rooms(&mut rng),
            MapKind::Corridors => grid.carve_corridors(&mut rng),
            MapKind::RandomObstacles => {}
        }
        grid.scatter(&mut rng, density);
        if grid.connect() {
            return GridMap::new(width, height, grid.occ, DEFAULT_STEP_SIZE);
        }
    }
    Err(MapError::Generation(format!(
        "no connected free region after {GENERATION_RETRIES} attempts"
    )))
}

struct Canvas {
    w: usize,
    h: usize,
    occ: Vec<bool>,
}

impl Canvas {
    fn walled(w: usize, h: usize) -> Self {
        let mut occ = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                occ[y * w + x] = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            }
        }
        Canvas { w, h, occ }
    }

    fn interior(&self, x: usize, y: usize) -> bool {
        x > 0 && y > 0 && x + 1 < self.w && y + 1 < self.h
    }

    fn set(&mut self, x: usize, y: usize, occupied: bool) {
        if self.interior(x, y) {
            self.occ[y * self.w + x] = occupied;
        }
    }

    /// Recursive division into rooms joined by one-cell doors.
    fn divide_rooms(&mut self, rng: &mut ChaCha8Rng) {
        const MIN_ROOM: usize = 4;
        let mut stack = vec![(1usize, 1usize, self.w - 2, self.h - 2)];
        while let Some((x0, y0, rw, rh)) = stack.pop() {
            let can_v = rw >= 2 * MIN_ROOM + 1;
            let can_h = rh >= 2 * MIN_ROOM + 1;
            let vertical = match (can_v, can_h) {
                (false, false) => continue,
                (true, false) => true,
                (false, true) => false,
                (true, true) => {
                    if rw == rh {
                        rng.gen_bool(0.5)
                    } else {
                        rw > rh
                    }
                }
            };
            if vertical {
                let wx = x0 + rng.gen_range(MIN_ROOM..=rw - MIN_ROOM - 1);
                let door = y0 + rng.gen_range(0..rh);
                for y in y0..y0 + rh {
                    if y != door {
                        self.set(wx, y, true);
                    }
                }
                stack.push((x0, y0, wx - x0, rh));
                stack.push((wx + 1, y0, x0 + rw - wx - 1, rh));
            } else {
                let wy = y0 + rng.gen_range(MIN_ROOM..=rh - MIN_ROOM - 1);
                let door = x0 + rng.gen_range(0..rw);
                for x in x0..x0 + rw {
                    if x != door {
                        self.set(x, wy, true);
                    }
                }
                stack.push((x0, y0, rw, wy - y0));
                stack.push((x0, wy + 1, rw, y0 + rh - wy - 1));
            }
        }
    }

    /// Randomized depth-first maze on odd coordinates plus a few loops.
    fn carve_corridors(&mut self, rng: &mut ChaCha8Rng) {
        for y in 1..self.h - 1 {
            for x in 1..self.w - 1 {
                self.set(x, y, true);
            }
        }
        let cols = (self.w - 1) / 2;
        let rows = (self.h - 1) / 2;
        let mut seen = vec![false; cols * rows];
        let mut stack = vec![(0usize, 0usize)];
        seen[0] = true;
        self.set(1, 1, false);
        while let Some(&(cx, cy)) = stack.last() {
            let mut next: Vec<(usize, usize)> = Vec::with_capacity(4);
            if cx > 0 && !seen[cy * cols + cx - 1] {
                next.push((cx - 1, cy));
            }
            if cx + 1 < cols && !seen[cy * cols + cx + 1] {
                next.push((cx + 1, cy));
            }
            if cy > 0 && !seen[(cy - 1) * cols + cx] {
                next.push((cx, cy - 1));
            }
            if cy + 1 < rows && !seen[(cy + 1) * cols + cx] {
                next.push((cx, cy + 1));
            }
            match next.choose(rng) {
                None => {
                    stack.pop();
                }
                Some(&(nx, ny)) => {
                    seen[ny * cols + nx] = true;
                    self.set(2 * nx + 1, 2 * ny + 1, false);
                    self.set(cx + nx + 1, cy + ny + 1, false);
                    stack.push((nx, ny));
                }
            }
        }
        // knock out some extra walls so the maze has loops
        let extra = (cols * rows) / 6;
        for _ in 0..extra {
            let x = rng.gen_range(1..self.w - 1);
            let y = rng.gen_range(1..self.h - 1);
            self.set(x, y, false);
        }
    }

    fn scatter(&mut self, rng: &mut ChaCha8Rng, density: f64) {
        if density <= 0.0 {
            return;
        }
        for y in 1..self.h - 1 {
            for x in 1..self.w - 1 {
                if rng.gen_bool(density) {
                    self.set(x, y, true);
                }
            }
        }
    }

    fn components(&self) -> (Vec<usize>, usize) {
        const NONE: usize = usize::MAX;
        let mut label = vec![NONE; self.w * self.h];
        let mut n = 0;
        for start in 0..self.occ.len() {
            if self.occ[start] || label[start] != NONE {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            label[start] = n;
            while let Some(i) = queue.pop_front() {
                let (x, y) = (i % self.w, i / self.w);
                for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                    let j = ny * self.w + nx;
                    if !self.occ[j] && label[j] == NONE {
                        label[j] = n;
                        queue.push_back(j);
                    }
                }
            }
            n += 1;
        }
        (label, n)
    }

    /// Carves shortest interior paths until all free cells form one region.
    /// Returns false when there is no free cell at all.
    fn connect(&mut self) -> bool {
        loop {
            let (label, n) = self.components();
            if n == 0 {
                return false;
            }
            if n == 1 {
                return true;
            }
            let mut sizes = vec![0usize; n];
            for &l in label.iter().filter(|&&l| l != usize::MAX) {
                sizes[l] += 1;
            }
            let main = (0..n).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
            let other = (0..n).find(|&c| c != main).unwrap();
            // BFS through interior cells from `other` to `main`
            let mut prev = vec![usize::MAX; self.occ.len()];
            let mut queue: VecDeque<usize> =
                (0..label.len()).filter(|&i| label[i] == other).collect();
            for &i in &queue {
                prev[i] = i;
            }
            let mut hit = None;
            while let Some(i) = queue.pop_front() {
                if label[i] == main {
                    hit = Some(i);
                    break;
                }
                let (x, y) = (i % self.w, i / self.w);
                for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                    let j = ny * self.w + nx;
                    if self.interior(nx, ny) && prev[j] == usize::MAX {
                        prev[j] = i;
                        queue.push_back(j);
                    }
                }
            }
            let mut cur = hit.expect("interior is connected");
            while prev[cur] != cur {
                self.occ[cur] = false;
                cur = prev[cur];
            }
        }
    }
}
