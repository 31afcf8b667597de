use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use starnoma_core::harness::export::{amplitudes_csv, powers_csv, write_records};
use starnoma_core::harness::{
    dump_optimal_config, final_mean, run_convergence, run_element_sweep, run_power_sweep, ExperimentConfig, RunRecord,
};
use starnoma_core::rl::checkpoint;
use starnoma_core::Error;

#[derive(Parser)]
#[command(name = "starnoma", version, about = "Multi-STAR-RIS NOMA beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seed list overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Episode count overriding the config.
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Run cells one after another instead of in parallel.
    #[arg(long, global = true)]
    serial: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (algorithm, seed) pair and export reward traces.
    Converge,
    /// Train MAPPO for each element count in the sweep.
    SweepElements,
    /// Train every algorithm at each transmit budget in the sweep.
    SweepPower,
    /// Evaluate a trained checkpoint on the fixed layout and export amplitudes and powers.
    DumpOptimal {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Channel draw to evaluate; defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate the config, then print its hash.
    ValidateConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_toml(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(e) = cli.episodes {
        cfg.hp.episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn export(dir: &Path, cfg: &ExperimentConfig, records: &[RunRecord], checkpoints: bool) -> Result<Value, Error> {
    let files = write_records(dir, records, cfg.system.users)?;
    if checkpoints {
        let ck = dir.join("checkpoints");
        fs::create_dir_all(&ck)?;
        for r in records {
            let name = format!("{}_seed{}.ckpt", r.cell.algorithm.name(), r.cell.seed);
            checkpoint::save(&ck.join(name), r.cell.algorithm, &r.agents)?;
        }
    }
    let runs: Vec<Value> = records
        .iter()
        .map(|r| {
            json!({
                "algorithm": r.cell.algorithm.name(),
                "seed": r.cell.seed,
                "p_max_dbm": r.cell.p_max_dbm,
                "elements": r.elements,
                "final_mean_reward": final_mean(&r.trace, 50),
                "wall_clock_s": r.wall_clock.as_secs_f64(),
            })
        })
        .collect();
    Ok(json!({
        "config_hash": cfg.hash(),
        "out": dir,
        "files": files.len(),
        "runs": runs,
    }))
}

fn run(cli: &Cli) -> Result<Value, Error> {
    let cfg = load_config(cli)?;
    let parallel = !cli.serial;
    match &cli.command {
        Command::ValidateConfig => Ok(json!({ "valid": true, "config_hash": cfg.hash() })),
        Command::Converge => {
            let records = run_convergence(&cfg, parallel)?;
            export(&cli.out.join("converge"), &cfg, &records, true)
        }
        Command::SweepElements => {
            let records = run_element_sweep(&cfg, parallel)?;
            export(&cli.out.join("sweep-elements"), &cfg, &records, false)
        }
        Command::SweepPower => {
            let records = run_power_sweep(&cfg, parallel)?;
            export(&cli.out.join("sweep-power"), &cfg, &records, false)
        }
        Command::DumpOptimal { checkpoint: path, seed } => {
            let (algorithm, agents) = checkpoint::load(path)?;
            let seed = seed.unwrap_or(cfg.seeds[0]);
            let report = dump_optimal_config(&cfg, &agents, seed)?;
            let dir = cli.out.join("dump-optimal");
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("amplitudes.csv"), amplitudes_csv(&report)?)?;
            fs::write(dir.join("powers.csv"), powers_csv(&report)?)?;
            let value = json!({ "algorithm": algorithm.name(), "seed": seed, "report": report });
            let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Parse(e.to_string()))?;
            fs::write(dir.join("report.json"), text)?;
            Ok(value)
        }
    }
}

fn error_report(e: &Error) -> Value {
    let problems = match e {
        Error::Config(p) => p.clone(),
        _ => Vec::new(),
    };
    json!({ "error": e.kind(), "message": e.to_string(), "problems": problems })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string(), "problems": [] }));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_report(&e));
            ExitCode::FAILURE
        }
    }
}
