//! The config-driven stages: walk, fit, decode, eval.

use std::fmt::Write as _;
use std::io::Write;

use anyhow::{Context, Result};
use collision_replay::analysis::{field_metrics, iou_masked, MetricsReport};
use collision_replay::decode::{
    floorplan, heading_map_to_field, per_heading_map, scalar_distance_field, DecodeConfig, Floorplan, FloorplanSource,
};
use collision_replay::estimator::{fit_freespace, fit_mean, fit_median, fit_table_sharded, HittingTable};
use collision_replay::gridmap::{ground_truth_df, DistField, GridMap};
use collision_replay::replay::{label_remote, Regime, ReplaySample};
use collision_replay::rollout::{read_jsonl, run_batch, write_jsonl, Trajectory};
use rayon::prelude::*;

use crate::artifacts::{self, create, hash_comment, REGIMES};
use crate::config::Resolved;

pub fn walk(run: &Resolved) -> Result<Vec<Trajectory>> {
    let cfg = run.config.walk_config()?;
    let trajs = run_batch(&run.map, &cfg, run.config.walks.count, run.config.walks.seed);
    let mut out = create(&run.out_dir.join(artifacts::CONFIG))?;
    out.write_all(run.to_toml()?.as_bytes())?;
    out.flush()?;
    let mut out = create(&run.out_dir.join(artifacts::TRAJECTORIES))?;
    for t in &trajs {
        write_jsonl(t, &cfg, Some(&run.hash), &mut out)?;
    }
    out.flush()?;
    Ok(trajs)
}

pub fn load_trajectories(run: &Resolved) -> Result<Vec<Trajectory>> {
    let path = run.out_dir.join(artifacts::TRAJECTORIES);
    artifacts::check_hash(&path, &run.hash)?;
    let logs = read_jsonl(artifacts::open(&path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(logs.into_iter().map(|(t, _)| t).collect())
}

pub fn replay_samples(run: &Resolved, trajs: &[Trajectory], regime: Regime) -> Result<Vec<ReplaySample>> {
    let cfg = run.config.replay_config()?.with_regime(regime);
    Ok(trajs.par_iter().flat_map_iter(|t| label_remote(t, &cfg, Some(&run.map))).collect())
}

pub fn fit(run: &Resolved) -> Result<()> {
    let trajs = load_trajectories(run)?;
    let compass = run.config.compass()?;
    let comment = hash_comment(&run.hash);
    for regime in REGIMES {
        let samples = replay_samples(run, &trajs, regime)?;
        let c = &run.config;
        let table = fit_table_sharded(&samples, compass, c.replay.k, c.estimator.alpha_s, c.estimator.shards.max(1))?;
        let mut out = create(&run.out_dir.join(artifacts::table_name(regime)))?;
        table.write_csv(&mut out, Some(&comment))?;
        out.flush()?;
        for (stat, field) in [("mean", fit_mean(&samples, compass)), ("median", fit_median(&samples, compass))] {
            let mut out = create(&run.out_dir.join(artifacts::scalar_name(stat, regime)))?;
            artifacts::write_scalar(&field, &run.hash, &mut out)?;
            out.flush()?;
        }
    }
    let mut out = create(&run.out_dir.join(artifacts::FREESPACE))?;
    artifacts::write_freespace(&fit_freespace(&trajs), &run.hash, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Decoded distance fields of one run, keyed by `(model, regime)`.
pub struct DecodedRun {
    pub truth: DistField,
    pub fields: Vec<(&'static str, Regime, DistField)>,
    pub tables: Vec<(Regime, HittingTable)>,
    pub freespace: Floorplan,
    pub visits: Vec<u64>,
}

pub fn decode_run(run: &Resolved, dcfg: &DecodeConfig) -> Result<DecodedRun> {
    let compass = run.config.compass()?;
    let shape = run.map.shape();
    let mut fields = Vec::new();
    let mut tables = Vec::new();
    for regime in REGIMES {
        let table = artifacts::read_table(&run.out_dir, regime, &run.hash)?;
        let hm = per_heading_map(&table, &shape, dcfg)?;
        fields.push(("classification", regime, heading_map_to_field(&hm)));
        for (stat, model) in [("mean", "regression-l2"), ("median", "regression-l1")] {
            let path = run.out_dir.join(artifacts::scalar_name(stat, regime));
            let scalar = artifacts::read_scalar(&path, &run.hash)?;
            fields.push((model, regime, scalar_distance_field(&scalar, &shape)));
        }
        tables.push((regime, table));
    }
    let fs = artifacts::read_freespace(&run.out_dir.join(artifacts::FREESPACE), &run.hash)?;
    let (w, h) = (run.map.width(), run.map.height());
    let freespace = floorplan(FloorplanSource::FreeSpace(&fs, w, h), run.config.decode.freespace_threshold);
    let visits = (0..h as i32).flat_map(|y| (0..w as i32).map(move |x| (x, y))).map(|(x, y)| fs.visits(x, y)).collect();
    Ok(DecodedRun { truth: ground_truth_df(&run.map, compass), fields, tables, freespace, visits })
}

fn write_field(run: &Resolved, name: &str, field: &DistField, comment: &str) -> Result<()> {
    let mut out = create(&run.out_dir.join(format!("{name}.csv")))?;
    writeln!(out, "# {comment}")?;
    field.write_csv(&mut out)?;
    out.flush()?;
    let mut out = create(&run.out_dir.join(format!("{name}.pgm")))?;
    field.write_pgm(&mut out, Some(comment))?;
    out.flush()?;
    Ok(())
}

pub fn decode(run: &Resolved, eps_override: Option<f64>) -> Result<()> {
    let mut dcfg = run.config.decode_config()?;
    let mut comment = hash_comment(&run.hash);
    if let Some(eps) = eps_override {
        dcfg.eps = eps;
        dcfg.validate().map_err(|e| crate::Failure::Usage(e.to_string()))?;
        write!(comment, " eps={eps}")?;
    }
    let decoded = decode_run(run, &dcfg)?;
    write_field(run, "df-truth", &decoded.truth, &comment)?;
    for (model, regime, field) in &decoded.fields {
        write_field(run, &format!("df-{model}-{}", regime.name()), field, &comment)?;
    }
    for (regime, table) in &decoded.tables {
        let hm = per_heading_map(table, &run.map.shape(), &dcfg)?;
        for h in 0..hm.compass.count() {
            let mut out = create(&run.out_dir.join(format!("df-classification-{}-h{h}.pgm", regime.name())))?;
            hm.heading_field(h).write_pgm(&mut out, Some(&comment))?;
            out.flush()?;
        }
    }
    let mut out = create(&run.out_dir.join("floorplan-free-space.pgm"))?;
    write_floorplan_pgm(&decoded.freespace, &comment, &mut out)?;
    out.flush()?;
    Ok(())
}

fn write_floorplan_pgm<W: Write>(plan: &Floorplan, comment: &str, mut out: W) -> Result<()> {
    writeln!(out, "P2\n# {comment}\n{} {}\n255", plan.width, plan.height)?;
    for row in plan.free.chunks(plan.width) {
        let px: Vec<&str> = row.iter().map(|&f| if f { "255" } else { "0" }).collect();
        writeln!(out, "{}", px.join(" "))?;
    }
    Ok(())
}

/// One row of the evaluation table.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub model: String,
    pub regime: String,
    pub report: MetricsReport,
    /// Fraction of scored cells where the prediction exceeds the truth.
    pub pct_over: f64,
}

fn sample_mask(map: &GridMap, table: &HittingTable, min_samples: u64) -> Vec<bool> {
    (0..map.height() as i32)
        .flat_map(|y| (0..map.width() as i32).map(move |x| (x, y)))
        .map(|(x, y)| map.is_free(x, y) && table.cell_count(x, y) >= min_samples.max(1))
        .collect()
}

pub fn eval_rows(run: &Resolved) -> Result<Vec<EvalRow>> {
    let dcfg = run.config.decode_config()?;
    let decoded = decode_run(run, &dcfg)?;
    let ev = &run.config.eval;
    let mut rows = Vec::new();
    for (model, regime, field) in &decoded.fields {
        let table = &decoded.tables.iter().find(|(r, _)| r == regime).expect("both regimes decoded").1;
        let mask = sample_mask(&run.map, table, ev.min_samples);
        let report = field_metrics(field, &decoded.truth, ev.delta, Some(&mask))?;
        let (over, n) = field
            .values
            .iter()
            .zip(&decoded.truth.values)
            .zip(&mask)
            .filter(|(_, &m)| m)
            .filter_map(|((p, t), _)| Some((p.meters()?, t.meters()?)))
            .fold((0usize, 0usize), |(o, n), (p, t)| (o + usize::from(p > t), n + 1));
        rows.push(EvalRow {
            model: model.to_string(),
            regime: regime.name().to_string(),
            report,
            pct_over: over as f64 / n as f64,
        });
    }
    let truth_plan = Floorplan { width: run.map.width(), height: run.map.height(), free: run.map.occupancy().iter().map(|o| !o).collect() };
    let visited: Vec<bool> = decoded.visits.iter().map(|&v| v >= ev.min_visits.max(1)).collect();
    let iou = iou_masked(&decoded.freespace, &truth_plan, Some(&visited))?;
    rows.push(EvalRow {
        model: "free-space".into(),
        regime: "observed".into(),
        report: MetricsReport {
            mae: f64::NAN,
            rmse: f64::NAN,
            pct_within_delta: f64::NAN,
            iou,
            n_cells: visited.iter().filter(|&&v| v).count(),
            delta: ev.delta,
        },
        pct_over: f64::NAN,
    });
    Ok(rows)
}

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

pub fn eval(run: &Resolved) -> Result<Vec<EvalRow>> {
    let rows = eval_rows(run)?;
    let mut out = create(&run.out_dir.join(artifacts::METRICS))?;
    writeln!(out, "# {}", hash_comment(&run.hash))?;
    writeln!(out, "model,regime,mae,rmse,pct_within_delta,iou,n_cells,delta,pct_over")?;
    for r in &rows {
        let m = &r.report;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.model,
            r.regime,
            fmt_metric(m.mae),
            fmt_metric(m.rmse),
            fmt_metric(m.pct_within_delta),
            fmt_metric(m.iou),
            m.n_cells,
            m.delta,
            fmt_metric(r.pct_over)
        )?;
    }
    out.flush()?;
    Ok(rows)
}

pub fn render_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<16} {:<14} {:>7} {:>7} {:>9} {:>6} {:>6}\n",
        "model", "regime", "MAE", "RMSE", "%<=delta", "IoU", "cells"
    );
    let cell = |v: f64, pct: bool| match (v.is_nan(), pct) {
        (true, _) => "-".to_string(),
        (false, true) => format!("{:.1}", 100.0 * v),
        (false, false) => format!("{v:.3}"),
    };
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            s,
            "{:<16} {:<14} {:>7} {:>7} {:>9} {:>6} {:>6}",
            r.model,
            r.regime,
            cell(m.mae, false),
            cell(m.rmse, false),
            cell(m.pct_within_delta, true),
            cell(m.iou, false),
            m.n_cells
        );
    }
    s
}
