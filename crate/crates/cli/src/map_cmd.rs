//! Map generation, conversion and statistics.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use collision_replay::gridmap::{generate_map, ground_truth_df, Compass, GridMap, MapKind};

use crate::artifacts::create;
use crate::Failure;

pub fn read_map(path: &Path) -> Result<GridMap> {
    let text = fs::read_to_string(path).map_err(|_| Failure::Missing(path.to_path_buf()))?;
    Ok(GridMap::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?)
}

pub fn generate(kind: MapKind, seed: u64, (w, h): (usize, usize), density: f64) -> Result<GridMap> {
    if !(0.0..0.5).contains(&density) {
        return Err(Failure::Usage(format!("--density must be in [0, 0.5), got {density}")).into());
    }
    Ok(generate_map(kind, seed, w, h, density).map_err(|e| Failure::Generation(e.to_string()))?)
}

pub fn stats(map: &GridMap, compass: Compass) -> String {
    let df = ground_truth_df(map, compass);
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}"));
    format!(
        "size {}x{}\nfree cells {}\nheadings {}\ndf min {} m\ndf max {} m\n",
        map.width(),
        map.height(),
        map.free_count(),
        compass.count(),
        fmt(df.min_meters()),
        fmt(df.max_meters())
    )
}

/// Writes the map's ground-truth distance field as PGM, CSV, or map text,
/// chosen by the output extension.
pub fn convert(map: &GridMap, compass: Compass, out: &Path) -> Result<()> {
    let mut w = create(out)?;
    let comment = format!("map_id={}", map.id());
    match out.extension().and_then(|e| e.to_str()) {
        Some("pgm") => ground_truth_df(map, compass).write_pgm(&mut w, Some(&comment))?,
        Some("csv") => {
            writeln!(w, "# {comment}")?;
            ground_truth_df(map, compass).write_csv(&mut w)?
        }
        Some("map") | Some("txt") => w.write_all(map.to_text().as_bytes())?,
        _ => return Err(Failure::Usage(format!("{}: output must end in .pgm, .csv, .map or .txt", out.display())).into()),
    }
    w.flush()?;
    Ok(())
}
