//! Seed calibration runs for the stochastic acceptance checks.
//! Usage: calibrate <evolve|stirling|otto|irrev|ppo> <seed> [max_gens|steps]

use carnot::cycle;
use carnot::engine::{self, EngineConfig, Selector};
use carnot::evolve::{self, EvoConfig};
use carnot::oracle::{oracle_best_cycle, CycleFamily};
use carnot::ppo::{self, PpoConfig};
use carnot::seeds;
use carnot::settings::RunSettings;

/// Evolution probe that stops when the best policy's best closed cycle
/// satisfies a predicate, evaluated every 10 generations.
fn evolve_cycle_probe(
    engine_cfg: &EngineConfig,
    seed: u64,
    max_gens: usize,
    good: impl Fn(&cycle::CycleReport) -> bool,
) {
    let evo = EvoConfig { seed, n_generations: max_gens, ..EvoConfig::default() };
    let t0 = std::time::Instant::now();
    let mut last: Option<cycle::CycleReport> = None;
    let run = evolve::run_with(&evo, engine_cfg, |stats, best| {
        if stats.generation % 10 == 0 || stats.generation == max_gens {
            let mut rng = seeds::child_rng(0, 0, 0);
            let traj = engine::rollout(engine_cfg, best, Selector::Argmax, &mut rng).unwrap();
            if let Some(report) = cycle::best_cycle_in(engine_cfg, &traj) {
                let done = good(&report);
                if done {
                    println!(
                        "seed {seed}: cycle target hit at generation {} [{:?}]",
                        stats.generation,
                        t0.elapsed()
                    );
                }
                last = Some(report);
                return !done;
            }
        }
        true
    })
    .unwrap();
    println!(
        "seed {seed}: done after {} generations, best fitness {:.6} [{:?}]",
        run.stats.len(),
        run.best_fitness,
        t0.elapsed()
    );
    match last {
        Some(report) => {
            let mut actions: Vec<String> =
                report.actions.iter().map(|x| x.to_string()).collect();
            actions.dedup();
            println!(
                "seed {seed}: best-cycle eta {:?} period {} actions(dedup) {:?}",
                report.eta, report.period, actions
            );
        }
        None => println!("seed {seed}: best policy closes no cycle"),
    }
}

fn evolve_probe(engine_cfg: &EngineConfig, seed: u64, max_gens: usize, targets: &[(f64, &str)]) {
    let evo = EvoConfig { seed, n_generations: max_gens, ..EvoConfig::default() };
    let t0 = std::time::Instant::now();
    let mut hits: Vec<(String, usize)> = Vec::new();
    let run = evolve::run_with(&evo, engine_cfg, |stats, _| {
        if let Some(best) = stats.best_ever {
            for (thr, name) in targets {
                if best >= *thr && !hits.iter().any(|(n, _)| n == name) {
                    hits.push((name.to_string(), stats.generation));
                    println!(
                        "seed {seed}: target {name} ({thr:.6}) hit at generation {} [{:?}]",
                        stats.generation,
                        t0.elapsed()
                    );
                }
            }
        }
        hits.len() < targets.len()
    })
    .unwrap();
    println!(
        "seed {seed}: done after {} generations, best {:.6} [{:?}]",
        run.stats.len(),
        run.best_fitness,
        t0.elapsed()
    );
    let mut rng = seeds::child_rng(0, 0, 0);
    let traj = engine::rollout(engine_cfg, &run.best, Selector::Argmax, &mut rng).unwrap();
    match cycle::detect_cycle(engine_cfg, &traj) {
        Some(report) => {
            let actions: Vec<String> = {
                let mut a: Vec<String> = report.actions.iter().map(|x| x.to_string()).collect();
                a.dedup();
                a
            };
            println!(
                "seed {seed}: cycle period {} eta {:?} actions(dedup) {:?}",
                report.period, report.eta, actions
            );
        }
        None => println!("seed {seed}: no cycle detected"),
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("evolve");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let budget: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2000);

    match mode {
        "evolve" => {
            let cfg = EngineConfig::default();
            let carnot = oracle_best_cycle(&cfg, CycleFamily::CarnotLike).unwrap().eta.unwrap();
            println!("carnot oracle {carnot:.9}");
            evolve_probe(
                &cfg,
                seed,
                budget,
                &[(0.35, "c3_floor"), (carnot - 1e-3, "c3_carnot")],
            );
        }
        "stirling" => {
            let mut s = RunSettings::default();
            s.apply_kv("action_set", "no_adiabats").unwrap();
            s.finalize().unwrap();
            let stirling =
                oracle_best_cycle(&s.engine, CycleFamily::StirlingRect).unwrap().eta.unwrap();
            println!("stirling oracle {stirling:.9}");
            evolve_cycle_probe(&s.engine, seed, budget, |r| {
                r.eta.is_some_and(|e| (e - stirling).abs() <= 1e-3)
            });
        }
        "otto" => {
            let mut s = RunSettings::default();
            s.apply_kv("action_set", "no_isothermals").unwrap();
            s.apply_kv("v_min", "1.9").unwrap();
            s.finalize().unwrap();
            let otto = oracle_best_cycle(&s.engine, CycleFamily::OttoRect).unwrap().eta.unwrap();
            println!("otto oracle {otto:.9}");
            evolve_cycle_probe(&s.engine, seed, budget, |r| {
                r.eta.is_some_and(|e| (e - otto).abs() <= 1e-3)
            });
        }
        "otto2" => {
            let mut s = RunSettings::default();
            s.apply_kv("action_set", "no_isothermals").unwrap();
            s.apply_kv("v_min", "1.9").unwrap();
            s.apply_kv("v_max", "3.9").unwrap();
            s.apply_kv("dv", "0.2").unwrap();
            s.finalize().unwrap();
            let otto = oracle_best_cycle(&s.engine, CycleFamily::OttoRect).unwrap().eta.unwrap();
            println!("otto2 oracle {otto:.9}");
            evolve_cycle_probe(&s.engine, seed, budget, |r| {
                r.eta.is_some_and(|e| (e - otto).abs() <= 1e-3)
            });
        }
        "irrev" => {
            let mut s = RunSettings::default();
            s.apply_kv("action_set", "irreversible").unwrap();
            s.finalize().unwrap();
            let stirling =
                oracle_best_cycle(&s.engine, CycleFamily::StirlingRect).unwrap().eta.unwrap();
            let hybrid = oracle_best_cycle(&s.engine, CycleFamily::IrreversibleHybrid)
                .unwrap()
                .eta
                .unwrap();
            println!("stirling oracle {stirling:.9}, hybrid oracle {hybrid:.9}");
            evolve_cycle_probe(&s.engine, seed, budget, |r| {
                use carnot::engine::Action;
                r.actions.iter().any(|a| a.is_irreversible())
                    && r.actions.contains(&Action::IsochoricHeat)
                    && r.eta.is_some_and(|e| e >= stirling - 1e-6)
            });
        }
        "ppo" => {
            let cfg = EngineConfig::budgeted();
            let ppo_cfg = PpoConfig { seed, total_steps: budget, ..PpoConfig::default() };
            let t0 = std::time::Instant::now();
            let run = ppo::train_with(&ppo_cfg, &cfg, |rec| {
                if rec.update_index % 200 == 0 {
                    println!(
                        "seed {seed}: update {} steps {} best_eta {:?} entropy {:.4} [{:?}]",
                        rec.update_index, rec.env_steps, rec.best_eta, rec.entropy,
                        t0.elapsed()
                    );
                }
                true
            })
            .unwrap();
            println!("seed {seed}: trained {} updates [{:?}]", run.records.len(), t0.elapsed());
            match &run.best {
                Some(best) => {
                    println!(
                        "seed {seed}: best episode eta {:.6} at env step {} (len {})",
                        best.eta,
                        best.env_steps,
                        best.trajectory.len()
                    );
                    match cycle::best_cycle_in(&cfg, &best.trajectory) {
                        Some(report) => println!(
                            "seed {seed}: best closed cycle eta {:?} period {}",
                            report.eta, report.period
                        ),
                        None => println!("seed {seed}: no closed cycle in best episode"),
                    }
                }
                None => println!("seed {seed}: no episode with defined eta"),
            }
        }
        other => {
            eprintln!("unknown mode {other}");
            std::process::exit(1);
        }
    }
}
