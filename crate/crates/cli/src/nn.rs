//! Nearest-neighbour lookup over fitted runs.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Result;
use collision_replay::analysis::{geometry_labels, nearest_neighbors, AngleProfile, GeometryClass, ProfileKey};
use collision_replay::replay::Regime;

use crate::artifacts::{self, hash_comment};
use crate::config::{self, Resolved};
use crate::Failure;

/// A profile together with the geometry class of its cell.
pub struct Entry {
    pub profile: AngleProfile,
    pub class: Option<GeometryClass>,
}

pub fn scene_name(dir: &Path) -> String {
    dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn load_run(dir: &Path) -> Result<Resolved> {
    config::load(&dir.join(artifacts::CONFIG), Some(dir))
}

/// Profiles of every free cell with at least `min_samples` samples.
pub fn run_profiles(run: &Resolved, scene: &str, regime: Regime, min_samples: u64) -> Result<Vec<Entry>> {
    let table = artifacts::read_table(&run.out_dir, regime, &run.hash)?;
    let labels = geometry_labels(&run.map);
    let w = run.map.width();
    Ok(run
        .map
        .free_cells()
        .into_iter()
        .filter(|&(x, y)| table.cell_count(x, y) >= min_samples.max(1))
        .filter_map(|(x, y)| {
            let profile = AngleProfile::from_table(&table, scene, x, y)?;
            Some(Entry { profile, class: labels[y as usize * w + x as usize] })
        })
        .collect())
}

pub struct NnQuery {
    pub runs: Vec<PathBuf>,
    pub query_run: Option<PathBuf>,
    pub cell: (i32, i32),
    pub m: usize,
    pub per_scene: bool,
    pub regime: Regime,
    pub min_samples: u64,
}

pub fn nn<W: Write>(q: &NnQuery, mut out: W) -> Result<()> {
    let query_dir = q.query_run.as_ref().or(q.runs.first()).ok_or_else(|| Failure::Usage("need at least one --run".into()))?;
    let mut corpus = Vec::new();
    let mut hashes = Vec::new();
    for dir in &q.runs {
        let run = load_run(dir)?;
        corpus.extend(run_profiles(&run, &scene_name(dir), q.regime, q.min_samples)?);
        hashes.push(run.hash);
    }
    let scene = scene_name(query_dir);
    let key = ProfileKey { scene: scene.clone(), x: q.cell.0, y: q.cell.1 };
    let query = match corpus.iter().find(|e| e.profile.key == key) {
        Some(e) => e.profile.clone(),
        None if q.runs.contains(query_dir) => {
            return Err(Failure::UnknownKey(format!("no profile for cell ({}, {}) in {scene}", q.cell.0, q.cell.1)).into())
        }
        None => {
            let run = load_run(query_dir)?;
            run_profiles(&run, &scene, q.regime, q.min_samples)?
                .into_iter()
                .find(|e| e.profile.key == key)
                .ok_or_else(|| Failure::UnknownKey(format!("no profile for cell ({}, {}) in {scene}", q.cell.0, q.cell.1)))?
                .profile
        }
    };
    let profiles: Vec<AngleProfile> = corpus.iter().map(|e| e.profile.clone()).collect();
    let ranked = nearest_neighbors(&query, &profiles, q.m, q.per_scene)?;
    writeln!(out, "# {}", hash_comment(&hashes.join(",")))?;
    writeln!(out, "rank,scene,x,y,dissimilarity,geometry")?;
    for (i, (k, d)) in ranked.iter().enumerate() {
        let class = corpus.iter().find(|e| &e.profile.key == k).and_then(|e| e.class).map_or("none", |c| c.name());
        writeln!(out, "{},{},{},{},{:.6},{}", i + 1, k.scene, k.x, k.y, d, class)?;
    }
    Ok(())
}
