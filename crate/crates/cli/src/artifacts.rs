//! File names and readers/writers for run-directory artifacts.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use collision_replay::estimator::{FreeSpaceMap, HittingTable, ScalarEntry, ScalarField, VisitStats};
use collision_replay::gridmap::Compass;
use collision_replay::replay::Regime;

use crate::Failure;

pub const CONFIG: &str = "config.toml";
pub const TRAJECTORIES: &str = "trajectories.jsonl";
pub const FREESPACE: &str = "freespace.csv";
pub const METRICS: &str = "metrics.csv";

pub const REGIMES: [Regime; 2] = [Regime::Oracle, Regime::DeadReckoned];

pub fn table_name(regime: Regime) -> String {
    format!("table-{}.csv", regime.name())
}

/// `mean` or `median` scalar fit for a regime.
pub fn scalar_name(stat: &str, regime: Regime) -> String {
    format!("{stat}-{}.csv", regime.name())
}

pub fn hash_comment(hash: &str) -> String {
    format!("config_hash={hash}")
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(_) => Err(Failure::Missing(path.to_path_buf()).into()),
    }
}

/// Fails with a missing-artifact error unless `path` was produced under `hash`.
pub fn check_hash(path: &Path, hash: &str) -> Result<()> {
    let mut first = String::new();
    let mut lines = open(path)?.lines();
    for _ in 0..4 {
        match lines.next() {
            Some(line) => first.push_str(&line?),
            None => break,
        }
    }
    if first.contains(hash) {
        Ok(())
    } else {
        Err(Failure::Missing(PathBuf::from(format!("{} (stale: produced under another config)", path.display()))).into())
    }
}

pub fn read_table(dir: &Path, regime: Regime, hash: &str) -> Result<HittingTable> {
    let path = dir.join(table_name(regime));
    check_hash(&path, hash)?;
    HittingTable::read_csv(open(&path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn write_scalar<W: Write>(field: &ScalarField, hash: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {}", hash_comment(hash))?;
    writeln!(out, "# headings={}", field.compass.count())?;
    writeln!(out, "x,y,heading,value,count")?;
    for (&(x, y, h), e) in &field.entries {
        writeln!(out, "{x},{y},{h},{},{}", e.value, e.count)?;
    }
    Ok(())
}

pub fn read_scalar(path: &Path, hash: &str) -> Result<ScalarField> {
    check_hash(path, hash)?;
    let mut compass = None;
    let mut field = None;
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if let Some(h) = line.strip_prefix("# headings=") {
            compass = h.parse().ok().and_then(Compass::from_count);
            continue;
        }
        if line.starts_with('#') || line.starts_with("x,") || line.is_empty() {
            continue;
        }
        let Some(c) = compass else { bail!("{}: missing headings line", path.display()) };
        let field = field.get_or_insert_with(|| ScalarField { compass: c, entries: Default::default() });
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (|| -> Option<_> {
            Some((
                (f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?),
                ScalarEntry { value: f.get(3)?.parse().ok()?, count: f.get(4)?.parse().ok()? },
            ))
        })();
        let Some((key, entry)) = parsed.filter(|_| f.len() == 5) else {
            bail!("{}:{}: malformed row", path.display(), n + 1)
        };
        field.entries.insert(key, entry);
    }
    match (field, compass) {
        (Some(f), _) => Ok(f),
        (None, Some(c)) => Ok(ScalarField { compass: c, entries: Default::default() }),
        (None, None) => bail!("{}: missing headings line", path.display()),
    }
}

pub fn write_freespace<W: Write>(fs: &FreeSpaceMap, hash: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {}", hash_comment(hash))?;
    writeln!(out, "x,y,visits,collisions,probability")?;
    for (&(x, y), s) in &fs.cells {
        writeln!(out, "{x},{y},{},{},{:.6}", s.visits, s.collisions, s.collisions as f64 / s.visits as f64)?;
    }
    Ok(())
}

pub fn read_freespace(path: &Path, hash: &str) -> Result<FreeSpaceMap> {
    check_hash(path, hash)?;
    let mut map = FreeSpaceMap::default();
    for (n, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.starts_with("x,") || line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let parsed = (|| -> Option<_> {
            Some((
                (f.first()?.parse().ok()?, f.get(1)?.parse().ok()?),
                VisitStats { visits: f.get(2)?.parse().ok()?, collisions: f.get(3)?.parse().ok()? },
            ))
        })();
        let Some((cell, stats)) = parsed else { bail!("{}:{}: malformed row", path.display(), n + 1) };
        map.cells.insert(cell, stats);
    }
    Ok(map)
}
