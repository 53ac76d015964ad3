//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::cycle::{self, CycleReport};
use crate::engine::{self, Selector};
use crate::evolve;
use crate::io::{self, CurveWriter};
use crate::oracle::{self, CycleFamily};
use crate::ppo;
use crate::seeds;
use crate::settings::RunSettings;
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "carnot",
    about = "Heat-engine cycle optimization: evolutionary and gradient-based trainers \
             with a brute-force cycle oracle",
    after_help = "Config files hold one key=value pair per line (# comments). Every key \
                  can be overridden with --set key=value. Outputs: learning-curve CSV \
                  (self-describing header), trajectory JSONL, and binary checkpoints."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Config file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set n_generations=50 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for files produced by the run.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a population by elitist evolution.
    Evolve {
        /// Master seed (required; fixes every random choice of the run).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train a policy with PPO on the budgeted engine.
    Ppo {
        /// Master seed (required).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Roll out a checkpointed policy deterministically and export the
    /// trajectory.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Brute-force the best cycle of a family on the configured grid.
    Oracle {
        /// One of: carnot, stirling, otto, hybrid.
        #[arg(long)]
        family: String,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Detect the cycle in an exported trajectory and fit its branches.
    Fit {
        /// Trajectory JSONL produced by `rollout`, `evolve`, or `ppo`.
        #[arg(long)]
        trajectory: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn resolve_settings(common: &CommonArgs) -> Result<RunSettings> {
    let mut settings = RunSettings::default();
    if let Some(path) = &common.config {
        settings.apply_file(path)?;
    }
    for pair in &common.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("--set expects key=value, got `{pair}`")))?;
        settings.apply_kv(key.trim(), value.trim())?;
    }
    settings.finalize()?;
    Ok(settings)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require_seed(seed: Option<u64>, cmd: &str) -> Result<u64> {
    seed.ok_or_else(|| Error::usage(format!("`{cmd}` requires --seed <N>")))
}

fn print_report(report: &CycleReport) -> Result<()> {
    let json = serde_json::to_string(report)
        .map_err(|e| Error::Runtime(format!("report serialization: {e}")))?;
    println!("{json}");
    Ok(())
}

fn run_evolve(seed: u64, common: &CommonArgs) -> Result<()> {
    let mut settings = resolve_settings(common)?;
    settings.evo.seed = seed;
    ensure_out_dir(&common.out)?;
    let csv_path = common.out.join(format!("evolve_{seed}.csv"));
    let meta = [
        ("config_hash", settings.config_hash()),
        ("seed", seed.to_string()),
    ];
    let mut csv = CurveWriter::create(
        &csv_path,
        &meta,
        "generation,max_eta,mean_eta,n_defined,best_eta",
    )?;
    let mut csv_err = None;
    let run = evolve::run_with(&settings.evo, &settings.engine, |stats, _best| {
        let row = [
            stats.generation.to_string(),
            io::csv_cell(stats.max),
            io::csv_cell(stats.mean),
            stats.n_defined.to_string(),
            io::csv_cell(stats.best_ever),
        ];
        if let Err(e) = csv.row(&row) {
            csv_err = Some(e);
            return false;
        }
        true
    })?;
    csv.finish()?;
    if let Some(e) = csv_err {
        return Err(e);
    }

    let ckpt_path = common.out.join(format!("evolve_best_{seed}.bin"));
    io::save_checkpoint(&ckpt_path, &run.best)?;

    // Export the best policy's deterministic trajectory and its cycle.
    let mut rng = seeds::child_rng(seed, u64::MAX, 0);
    let traj = engine::rollout(&settings.engine, &run.best, Selector::Argmax, &mut rng)?;
    io::export_trajectory(
        &settings.engine,
        &traj,
        &common.out.join(format!("evolve_best_{seed}.jsonl")),
    )?;
    match cycle::detect_cycle(&settings.engine, &traj) {
        Some(report) => print_report(&report)?,
        None => println!("null"),
    }
    eprintln!(
        "evolve: seed {seed}, {} generations, best fitness {:.6} (generation {})",
        run.stats.len(),
        run.best_fitness,
        run.best_generation
    );
    Ok(())
}

fn run_ppo(seed: u64, common: &CommonArgs) -> Result<()> {
    let mut settings = resolve_settings(common)?;
    settings.ppo.seed = seed;
    settings.engine.budgets_enabled = true;
    settings.finalize()?;
    ensure_out_dir(&common.out)?;
    let csv_path = common.out.join(format!("ppo_{seed}.csv"));
    let meta = [
        ("config_hash", settings.config_hash()),
        ("seed", seed.to_string()),
    ];
    let mut csv = CurveWriter::create(
        &csv_path,
        &meta,
        "update_index,env_steps,mean_return,best_eta,loss_clip,loss_vf,entropy",
    )?;
    let mut csv_err = None;
    let run = ppo::train_with(&settings.ppo, &settings.engine, |rec| {
        let row = [
            rec.update_index.to_string(),
            rec.env_steps.to_string(),
            io::csv_cell(Some(rec.mean_return)),
            io::csv_cell(rec.best_eta),
            io::csv_cell(Some(rec.loss_clip)),
            io::csv_cell(Some(rec.loss_vf)),
            io::csv_cell(Some(rec.entropy)),
        ];
        if let Err(e) = csv.row(&row) {
            csv_err = Some(e);
            return false;
        }
        true
    })?;
    csv.finish()?;
    if let Some(e) = csv_err {
        return Err(e);
    }

    io::save_checkpoint(
        &common.out.join(format!("ppo_final_{seed}.bin")),
        &run.final_params,
    )?;
    if let Some(best) = &run.best {
        io::save_checkpoint(&common.out.join(format!("ppo_best_{seed}.bin")), &best.params)?;
        io::export_trajectory(
            &settings.engine,
            &best.trajectory,
            &common.out.join(format!("ppo_best_{seed}.jsonl")),
        )?;
        eprintln!(
            "ppo: seed {seed}, {} updates, best episode eta {:.6} at {} env steps",
            run.records.len(),
            best.eta,
            best.env_steps
        );
    } else {
        eprintln!(
            "ppo: seed {seed}, {} updates, no episode with defined efficiency",
            run.records.len()
        );
    }
    // The most efficient closed cycle seen in any training episode.
    match &run.best_cycle {
        Some(best_cycle) => print_report(&best_cycle.report)?,
        None => println!("null"),
    }
    Ok(())
}

fn run_rollout(checkpoint: &Path, common: &CommonArgs) -> Result<()> {
    let settings = resolve_settings(common)?;
    let params = io::load_checkpoint(checkpoint)?;
    let cfg = &settings.engine;
    let expected_in = cfg.n_inputs();
    if params.shape.n_in != expected_in {
        return Err(Error::usage(format!(
            "checkpoint has {} inputs but the configured engine observes {expected_in}",
            params.shape.n_in
        )));
    }
    let m = cfg.action_set.len();
    if params.shape.n_out != m && params.shape.n_out != m + 1 {
        return Err(Error::usage(format!(
            "checkpoint has {} outputs but the action set has {m} actions",
            params.shape.n_out
        )));
    }
    // A value head, if present, sits on the last output and never competes
    // in the argmax; restrict the logits to the action outputs.
    struct ActionHead<'a> {
        params: &'a crate::policy::Params,
        m: usize,
    }
    impl crate::policy::Policy for ActionHead<'_> {
        fn logits(&self, obs: &[f64]) -> Vec<f64> {
            let mut out = self.params.forward(obs);
            out.truncate(self.m);
            out
        }
    }
    ensure_out_dir(&common.out)?;
    let mut rng = seeds::child_rng(0, 0, 0);
    let traj = engine::rollout(cfg, &ActionHead { params: &params, m }, Selector::Argmax, &mut rng)?;
    io::export_trajectory(cfg, &traj, &common.out.join("rollout.jsonl"))?;
    match cycle::detect_cycle(cfg, &traj) {
        Some(report) => print_report(&report)?,
        None => println!("null"),
    }
    Ok(())
}

fn run_oracle(family: &str, common: &CommonArgs) -> Result<()> {
    let settings = resolve_settings(common)?;
    let family = CycleFamily::parse(family)?;
    let report = oracle::oracle_best_cycle(&settings.engine, family)?;
    print_report(&report)
}

fn run_fit(trajectory: &Path, common: &CommonArgs) -> Result<()> {
    let settings = resolve_settings(common)?;
    let points = io::load_trajectory(trajectory)?;
    if points.len() < 2 {
        return Err(Error::Runtime("trajectory too short to contain a cycle".into()));
    }
    // Scan the recorded states for the first repeat, then rebuild the
    // enclosed cycle through the engine.
    let cfg = &settings.engine;
    let mut found: Option<CycleReport> = None;
    'outer: for t2 in 1..points.len() {
        for t1 in 0..t2 {
            if (points[t1].v - points[t2].v).abs() <= cycle::CYCLE_TOL
                && (points[t1].temp - points[t2].temp).abs() <= cycle::CYCLE_TOL
            {
                let actions: Vec<_> = points[t1 + 1..=t2].iter().map(|p| p.action).collect();
                found = Some(CycleReport::build(
                    cfg,
                    points[t1].v,
                    points[t1].temp,
                    &actions,
                )?);
                break 'outer;
            }
        }
    }
    let report = found.ok_or_else(|| Error::Runtime("no closed cycle in trajectory".into()))?;
    let fits = cycle::fit_branches(&report);
    let json = serde_json::json!({
        "cycle": serde_json::to_value(&report)
            .map_err(|e| Error::Runtime(format!("serialization: {e}")))?,
        "fits": serde_json::to_value(&fits)
            .map_err(|e| Error::Runtime(format!("serialization: {e}")))?,
    });
    println!("{json}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Evolve { seed, common } => run_evolve(require_seed(*seed, "evolve")?, common),
        Cmd::Ppo { seed, common } => run_ppo(require_seed(*seed, "ppo")?, common),
        Cmd::Rollout { checkpoint, common } => run_rollout(checkpoint, common),
        Cmd::Oracle { family, common } => run_oracle(family, common),
        Cmd::Fit { trajectory, common } => run_fit(trajectory, common),
    }
}

/// Parses and runs a full command line (including the program name).
/// Returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            eprint!("{e}");
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::Usage(_)) | Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        std::iter::once("carnot".to_string())
            .chain(s.iter().map(|x| x.to_string()))
            .collect()
    }

    #[test]
    fn missing_seed_is_a_usage_error() {
        assert_eq!(run(args(&["evolve"])), 1);
        assert_eq!(run(args(&["ppo"])), 1);
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(run(args(&["frobnicate"])), 1);
    }

    #[test]
    fn unknown_config_key_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert_eq!(
            run(args(&[
                "oracle",
                "--family",
                "stirling",
                "--set",
                "bogus_key=1",
                "--out",
                out.to_str().unwrap(),
            ])),
            1
        );
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(args(&["--help"])), 0);
    }
}
