use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use collision_replay::gridmap::{Compass, MapKind};
use collision_replay::replay::Regime;
use collision_replay_cli::artifacts::create;
use collision_replay_cli::config::{self, Resolved};
use collision_replay_cli::nn::{self, NnQuery};
use collision_replay_cli::ruin_cmd::{self, RuinArgs};
use collision_replay_cli::{exit_code, init_threads, map_cmd, pipeline};

#[derive(Parser)]
#[command(name = "collision-replay", version, about = "Collision replay experiments on grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, convert or inspect maps.
    #[command(subcommand)]
    Map(MapCommand),
    /// Run seeded random walks and log trajectories.
    Walk(RunArgs),
    /// Replay-label trajectories and fit hitting-time tables and baselines.
    Fit(RunArgs),
    /// Decode fitted models into distance fields (CSV and PGM).
    Decode(DecodeArgs),
    /// Score decoded fields against the ground truth.
    Eval(RunArgs),
    /// walk, fit, decode and eval in one go.
    Run(RunArgs),
    /// Gambler's-ruin analytics with optional Monte Carlo check.
    Ruin(RuinCli),
    /// Rank cells across runs by rotation-aligned profile similarity.
    Nn(NnCli),
}

#[derive(Subcommand)]
enum MapCommand {
    /// Generate a seeded map.
    Gen {
        #[arg(long, value_parser = parse_kind)]
        kind: MapKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// WIDTHxHEIGHT, each at least 8.
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 0.1)]
        density: f64,
        /// Output map file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a map's ground-truth distance field as .pgm/.csv, or re-emit it as .map.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4, value_parser = parse_headings)]
        headings: u8,
    },
    /// Print free-cell count and distance-field range.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4, value_parser = parse_headings)]
        headings: u8,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config's `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Decoding threshold, overriding the config's `decode.eps`.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Args)]
struct RuinCli {
    #[arg(long)]
    z: u32,
    #[arg(long)]
    a: u32,
    /// Probability of stepping toward the near wall.
    #[arg(long)]
    p: f64,
    /// Monte Carlo episodes (0 disables).
    #[arg(long, default_value_t = 0)]
    mc: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Last step tabulated and simulated; defaults to 10a.
    #[arg(long)]
    t_max: Option<u64>,
    /// Write the ruin-time pmf table here.
    #[arg(long)]
    pmf_out: Option<PathBuf>,
    /// Write the short-path table (starts 1..=a/2) here.
    #[arg(long)]
    short_path_out: Option<PathBuf>,
    /// Biases for the short-path table.
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.7,0.8,0.9")]
    curve_p: Vec<f64>,
}

#[derive(Args)]
struct NnCli {
    /// Fitted run directories forming the corpus.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// Run holding the query cell; defaults to the first --run.
    #[arg(long)]
    query_run: Option<PathBuf>,
    /// Query cell as X,Y.
    #[arg(long, value_parser = parse_cell)]
    cell: (i32, i32),
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Keep only the best match per run.
    #[arg(long)]
    per_scene: bool,
    #[arg(long, default_value = "oracle")]
    regime: Regime,
    /// Minimum samples for a cell to enter the corpus.
    #[arg(long, default_value_t = 30)]
    min_samples: u64,
}

fn parse_kind(s: &str) -> Result<MapKind, String> {
    s.parse()
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let (w, h) = (parse(w)?, parse(h)?);
    if w < 8 || h < 8 {
        return Err(format!("each side must be at least 8, got {w}x{h}"));
    }
    Ok((w, h))
}

fn parse_cell(s: &str) -> Result<(i32, i32), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(x)?, parse(y)?))
}

fn parse_headings(s: &str) -> Result<u8, String> {
    match s {
        "4" => Ok(4),
        "8" => Ok(8),
        _ => Err(format!("headings must be 4 or 8, got {s:?}")),
    }
}

fn compass(h: u8) -> Compass {
    Compass::from_count(h).expect("validated by clap")
}

fn load(args: &RunArgs) -> Result<Resolved> {
    config::load(&args.config, args.out.as_deref())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            let mut out = create(p)?;
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Map(MapCommand::Gen { kind, seed, size, density, out }) => {
            let map = map_cmd::generate(kind, seed, size, density)?;
            write_or_print(out.as_deref(), &map.to_text())?;
            eprint!("{}", map_cmd::stats(&map, Compass::Four));
        }
        Command::Map(MapCommand::Convert { input, out, headings }) => {
            map_cmd::convert(&map_cmd::read_map(&input)?, compass(headings), &out)?;
        }
        Command::Map(MapCommand::Stats { input, headings }) => {
            print!("{}", map_cmd::stats(&map_cmd::read_map(&input)?, compass(headings)));
        }
        Command::Walk(args) => {
            let r = load(&args)?;
            let trajs = pipeline::walk(&r)?;
            println!("{} walks written to {} (config {})", trajs.len(), r.out_dir.display(), r.hash);
        }
        Command::Fit(args) => {
            let r = load(&args)?;
            pipeline::fit(&r)?;
            println!("fitted tables written to {}", r.out_dir.display());
        }
        Command::Decode(args) => {
            let r = load(&args.run)?;
            pipeline::decode(&r, args.eps)?;
            println!("decoded fields written to {}", r.out_dir.display());
        }
        Command::Eval(args) => {
            let r = load(&args)?;
            print!("{}", pipeline::render_table(&pipeline::eval(&r)?));
        }
        Command::Run(args) => {
            let r = load(&args)?;
            pipeline::walk(&r)?;
            pipeline::fit(&r)?;
            pipeline::decode(&r, None)?;
            print!("{}", pipeline::render_table(&pipeline::eval(&r)?));
        }
        Command::Ruin(a) => {
            let args = RuinArgs { z: a.z, a: a.a, p: a.p, mc: a.mc, seed: a.seed, t_max: a.t_max, curve_p: a.curve_p };
            let report = ruin_cmd::compute(&args)?;
            print!("{}", report.summary());
            if let Some(path) = &a.pmf_out {
                let mut out = create(path)?;
                report.write_pmf_csv(&mut out)?;
                out.flush()?;
            }
            if let Some(path) = &a.short_path_out {
                let mut out = create(path)?;
                ruin_cmd::write_short_path_csv(&args, &report.hash, &mut out)?;
                out.flush()?;
            }
        }
        Command::Nn(a) => {
            let q = NnQuery {
                runs: a.runs,
                query_run: a.query_run,
                cell: a.cell,
                m: a.m,
                per_scene: a.per_scene,
                regime: a.regime,
                min_samples: a.min_samples,
            };
            nn::nn(&q, io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
