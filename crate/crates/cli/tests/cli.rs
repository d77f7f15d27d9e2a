use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use collision_replay::analysis::{geometry_labels, GeometryClass};
use collision_replay_cli::config;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collision-replay"))
}

fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/demo.toml")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

/// Metric cells of a distance-field CSV, row-major; `None` for `occ`/`unk`.
fn read_field(path: &Path) -> Vec<Option<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split(',').map(|v| v.parse().ok()).collect::<Vec<_>>())
        .collect()
}

#[test]
fn map_gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |name: &str| {
        let path = dir.path().join(name);
        run_ok(bin().args(["map", "gen", "--kind", "rooms", "--seed", "7", "--size", "32x32", "--out"]).arg(&path));
        fs::read(path).unwrap()
    };
    let a = gen("a.map");
    assert_eq!(a, gen("b.map"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 32);
}

#[test]
fn invalid_size_is_a_usage_error() {
    for size in ["5x5", "32", "axb"] {
        let out = bin().args(["map", "gen", "--kind", "rooms", "--size", size]).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{size}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("invalid value"));
    }
}

#[test]
fn map_stats_on_empty_room() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("room.map");
    fs::write(&path, "#######\n#.....#\n#.....#\n#.....#\n#.....#\n#.....#\n#######\n").unwrap();
    let out = run_ok(bin().args(["map", "stats", "--input"]).arg(&path));
    let text = stdout(&out);
    assert!(text.contains("free cells 25"), "{text}");
    assert!(text.contains("df max 0.50 m"), "{text}");
}

#[test]
fn map_convert_writes_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.pgm");
    run_ok(bin().args(["map", "convert", "--input"]).arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/demo.map")).arg("--out").arg(&out));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("P2\n# map_id="));
    let missing = bin().args(["map", "stats", "--input", "/nonexistent.map"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(4));
}

#[test]
fn ruin_reports_closed_forms() {
    let text = stdout(&run_ok(bin().args(["ruin", "--z", "20", "--a", "51", "--p", "0.8"])));
    assert!(text.contains("expected_duration       33.3333"), "{text}");
    assert!(text.contains("shortest_path_prob      0.011529"), "{text}");
    let text = stdout(&run_ok(bin().args(["ruin", "--z", "25", "--a", "50", "--p", "0.5"])));
    assert!(text.contains("ruin_probability        0.500000"), "{text}");
    for bad in [["--z", "0", "--a", "5", "--p", "0.5"], ["--z", "2", "--a", "5", "--p", "1.5"]] {
        assert_eq!(bin().arg("ruin").args(bad).output().unwrap().status.code(), Some(2));
    }
}

#[test]
fn ruin_monte_carlo_is_reproducible() {
    let args = ["ruin", "--z", "20", "--a", "51", "--p", "0.8", "--mc", "1000000", "--seed", "1"];
    let a = run_ok(bin().args(args));
    let b = run_ok(bin().env("COLLISION_REPLAY_THREADS", "2").args(args));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("mc_episodes             1000000"));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let out = bin().env("COLLISION_REPLAY_THREADS", "zero").args(["ruin", "--z", "2", "--a", "5", "--p", "0.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stages_report_missing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for stage in ["fit", "decode", "eval"] {
        let res = bin().args([stage, "--config"]).arg(demo_config()).arg("--out").arg(&out).output().unwrap();
        assert_eq!(res.status.code(), Some(4), "{stage}");
        assert!(String::from_utf8_lossy(&res.stderr).contains("trajectories.jsonl") || stage != "fit");
    }
    let res = bin().args(["walk", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn stale_artifacts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(bin().args(["walk", "--config"]).arg(demo_config()).arg("--out").arg(&out));
    let other = write_config(dir.path(), "other.toml", "[map]\nkind = \"corridors\"\nseed = 2\nwidth = 16\nheight = 16\n");
    let res = bin().args(["fit", "--config"]).arg(&other).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(4));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[map]\nkind = \"rooms\"\n[policy]\np_forward = 0.9\n");
    let res = bin().args(["walk", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
    let cfg = write_config(dir.path(), "typo.toml", "[map]\nkind = \"rooms\"\n[walks]\ncuont = 3\n");
    assert_eq!(bin().args(["walk", "--config"]).arg(&cfg).output().unwrap().status.code(), Some(2));
}

#[test]
fn every_artifact_embeds_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    run_ok(bin().args(["run", "--config"]).arg(demo_config()).arg("--out").arg(&out));
    let resolved = config::load(&demo_config(), Some(&out)).unwrap();
    let mut n = 0;
    for entry in fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let head: String = fs::read_to_string(&path).unwrap().lines().take(4).collect();
        assert!(head.contains(&resolved.hash), "{} lacks the hash", path.display());
        n += 1;
    }
    assert!(n > 20);
    // the written config resolves to the same experiment
    let reloaded = config::load(&out.join("config.toml"), Some(&out)).unwrap();
    assert_eq!(reloaded.hash, resolved.hash);
    assert_eq!(reloaded.map, resolved.map);
}

#[test]
fn larger_eps_never_decodes_closer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = demo_config();
    run_ok(bin().args(["walk", "--config"]).arg(&cfg).arg("--out").arg(&out));
    run_ok(bin().args(["fit", "--config"]).arg(&cfg).arg("--out").arg(&out));
    let field = |eps: &str| {
        run_ok(bin().args(["decode", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--eps", eps]));
        read_field(&out.join("df-classification-dead-reckoned.csv"))
    };
    let lo = field("0.05");
    let hi = field("0.5");
    let mut compared = 0;
    for (a, b) in lo.iter().zip(&hi) {
        if let (Some(a), Some(b)) = (a, b) {
            assert!(b >= a, "{b} < {a}");
            compared += 1;
        }
    }
    assert!(compared > 100);
    let bad = bin().args(["decode", "--config"]).arg(&cfg).arg("--out").arg(&out).args(["--eps", "1.5"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn classification_beats_mean_regressor_on_demo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "demo.toml",
        &format!("[map]\nfile = {:?}\n[walks]\ncount = 50\n", Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/demo.map")),
    );
    let out = dir.path().join("run");
    run_ok(bin().args(["run", "--config"]).arg(&cfg).arg("--out").arg(&out));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mae = |model: &str| -> f64 {
        let line = metrics.lines().find(|l| l.starts_with(&format!("{model},dead-reckoned,"))).unwrap();
        line.split(',').nth(2).unwrap().parse().unwrap()
    };
    assert!(mae("classification") < mae("regression-l2"), "{metrics}");
}

fn corridor_corpus(dir: &Path) -> Vec<PathBuf> {
    (1..=3)
        .map(|seed| {
            let cfg = write_config(
                dir,
                &format!("c{seed}.toml"),
                &format!("[map]\nkind = \"corridors\"\nseed = {seed}\nwidth = 21\nheight = 21\ndensity = 0.0\n[walks]\ncount = 30\nseed = {seed}\n"),
            );
            let out = dir.join(format!("scene-{seed}"));
            run_ok(bin().args(["walk", "--config"]).arg(&cfg).arg("--out").arg(&out));
            run_ok(bin().args(["fit", "--config"]).arg(&cfg).arg("--out").arg(&out));
            out
        })
        .collect()
}

fn nn_rows(runs: &[PathBuf], extra: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg("nn");
    for r in runs {
        cmd.arg("--run").arg(r);
    }
    cmd.args(extra).output().unwrap()
}

#[test]
fn nearest_neighbour_queries() {
    let dir = tempfile::tempdir().unwrap();
    let runs = corridor_corpus(dir.path());
    let run = collision_replay_cli::nn::load_run(&runs[0]).unwrap();
    let labels = geometry_labels(&run.map);
    let table = collision_replay_cli::artifacts::read_table(&runs[0], collision_replay::replay::Regime::Oracle, &run.hash).unwrap();
    let (x, y) = run
        .map
        .free_cells()
        .into_iter()
        .filter(|&(x, y)| labels[y as usize * run.map.width() + x as usize] == Some(GeometryClass::Corridor))
        .max_by_key(|&(x, y)| (table.cell_count(x, y), -x, -y))
        .unwrap();
    let cell = format!("{x},{y}");

    let out = nn_rows(&runs, &["--cell", &cell, "--m", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][1..5], ["scene-1", &x.to_string(), &y.to_string(), "0.000000"]);
    let corridors = rows.iter().filter(|r| r[5] == "corridor").count();
    assert!(corridors >= 3, "{text}");

    let out = nn_rows(&runs, &["--cell", &cell, "--m", "5", "--per-scene"]);
    let text = stdout(&out);
    let scenes: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    let mut unique = scenes.clone();
    unique.sort();
    unique.dedup();
    assert_eq!(unique.len(), scenes.len());
    assert_eq!(scenes.len(), 3);

    let out = nn_rows(&runs, &["--cell", "0,0"]);
    assert_eq!(out.status.code(), Some(4));
}
