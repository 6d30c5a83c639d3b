use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use marsbench::eval::MetricsReport;
use marsbench::harness::{load_config, run_pipeline, BenchConfig, ExternalTrajectories, PipelineOutcome, Stage};

/// Desk-scale planetary SLAM benchmark.
#[derive(Parser, Debug)]
#[command(name = "marsbench", version, about)]
struct Cli {
    /// JSON configuration; defaults apply to every omitted field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Re-run stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the terrain and rock field; write world.obj/.stl/.sdf.
    GenTerrain,
    /// Sample the rover path; write a TUM trajectory and an actor SDF.
    GenPath,
    /// Render sensor frames along the path.
    Simulate,
    /// Run the reference ICP odometry over the simulated frames.
    Odom,
    /// Score an estimated trajectory against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the pipeline (all stages unless `--stages` is given).
    Run {
        /// Comma-separated subset of gen, gen_terrain, gen_path, simulate, odom, eval.
        #[arg(long, value_parser = parse_stages)]
        stages: Option<StageList>,
    },
}

#[derive(Clone, Debug)]
struct StageList(Vec<Stage>);

fn parse_stages(s: &str) -> Result<StageList, String> {
    Stage::parse_list(s).map(StageList)
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Ground-truth TUM file (default: the run's simulated ground truth).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Estimated TUM file (default: the run's odometry output).
    #[arg(long)]
    est: Option<PathBuf>,
    /// Drift segment length in meters.
    #[arg(long, allow_negative_numbers = true)]
    segment_len: Option<f64>,
    /// Fraction of matched pairs used for alignment.
    #[arg(long, allow_negative_numbers = true)]
    align_fraction: Option<f64>,
    /// Maximum timestamp gap for a correspondence, in seconds.
    #[arg(long, allow_negative_numbers = true)]
    max_dt: Option<f64>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()?.join(p)
    })
}

fn build_config(cli: &Cli) -> Result<BenchConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => BenchConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::Evaluate(a) = &cli.command {
        if let Some(v) = a.segment_len {
            cfg.eval.segment_len = v;
        }
        if let Some(v) = a.align_fraction {
            cfg.eval.align_fraction = v;
        }
        if let Some(v) = a.max_dt {
            cfg.eval.max_dt = v;
        }
        if a.gt.is_some() || a.est.is_some() {
            let ext = cfg.external.get_or_insert(ExternalTrajectories {
                groundtruth: None,
                estimate: None,
            });
            if let Some(gt) = &a.gt {
                ext.groundtruth = Some(absolute(gt)?);
            }
            if let Some(est) = &a.est {
                ext.estimate = Some(absolute(est)?);
            }
        }
    }
    Ok(cfg)
}

fn print_report(r: &MetricsReport) {
    println!("pairs          {}", r.metadata.pairs);
    println!("aligned on     {} pairs", r.alignment.pairs_used);
    println!("ATE rms        {:.4} m", r.ate_rms);
    println!("ATE median     {:.4} m", r.ate_median);
    println!("drift median   {:.3} %", r.drift_median * 100.0);
    println!("drift rms      {:.3} %", r.drift_rms * 100.0);
}

fn print_outcome(o: &PipelineOutcome, json: bool) -> Result<()> {
    if json {
        let out = match &o.report {
            Some(r) => serde_json::to_string_pretty(r)?,
            None => serde_json::to_string_pretty(&o.manifest)?,
        };
        println!("{out}");
        return Ok(());
    }
    let names = |s: &[Stage]| s.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ");
    if !o.executed.is_empty() {
        println!("ran            {}", names(&o.executed));
    }
    if !o.skipped.is_empty() {
        println!("up to date     {}", names(&o.skipped));
    }
    println!("run directory  {}", o.run_dir.display());
    if let Some(r) = &o.report {
        print_report(r);
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let stages = match &cli.command {
        Command::GenTerrain => vec![Stage::GenTerrain],
        Command::GenPath => vec![Stage::GenPath],
        Command::Simulate => vec![Stage::Simulate],
        Command::Odom => vec![Stage::Odom],
        Command::Evaluate(_) => vec![Stage::Eval],
        Command::Run { stages } => stages.as_ref().map_or_else(|| Stage::ALL.to_vec(), |s| s.0.clone()),
    };
    let outcome = run_pipeline(&cfg, &stages, cli.force).context("pipeline failed")?;
    print_outcome(&outcome, cli.json)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
