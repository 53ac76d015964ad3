//! Elitist evolutionary trainer.
//!
//! Each generation the whole population is scored by a deterministic argmax
//! rollout, the top `n_survivors` are kept bit-identical, and the remainder
//! is refilled with Gaussian-mutated copies of uniformly drawn survivors.
//! Fitness of survivors is cached (the engine is deterministic, so
//! re-evaluation would be a no-op). Undefined efficiencies score negative
//! infinity and therefore rank below every defined value.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use rand::Rng;

use crate::engine::{self, EngineConfig, Selector};
use crate::policy::{NetShape, Params};
use crate::seeds;
use crate::Result;

/// What a rollout is scored by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitnessMetric {
    /// Maximum running efficiency along the trajectory.
    MaxEta,
    /// Net work at the end of the trajectory (budgeted comparison runs).
    TerminalDeltaW,
}

#[derive(Debug, Clone)]
pub struct EvoConfig {
    pub pop_size: usize,
    pub n_survivors: usize,
    pub epsilon: f64,
    pub n_generations: usize,
    pub seed: u64,
    pub fitness: FitnessMetric,
    pub n_hidden: usize,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            pop_size: 100,
            n_survivors: 25,
            epsilon: 0.05,
            n_generations: 500,
            seed: 0,
            fitness: FitnessMetric::MaxEta,
            n_hidden: 1024,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_survivors == 0 || self.n_survivors >= self.pop_size {
            return Err(crate::Error::config(format!(
                "require 0 < n_survivors < pop_size, got {} / {}",
                self.n_survivors, self.pop_size
            )));
        }
        if self.epsilon < 0.0 {
            return Err(crate::Error::config("epsilon must be >= 0"));
        }
        if self.n_generations == 0 {
            return Err(crate::Error::config("n_generations must be >= 1"));
        }
        if self.n_hidden == 0 {
            return Err(crate::Error::config("n_hidden must be >= 1"));
        }
        Ok(())
    }
}

/// Per-generation summary statistics over defined fitnesses.
#[derive(Debug, Clone, Copy)]
pub struct GenStats {
    /// 1-based generation index; generation 1 is the random population.
    pub generation: usize,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub n_defined: usize,
    /// Best fitness seen in any generation so far.
    pub best_ever: Option<f64>,
}

/// A scored population member. Fitness is `NEG_INFINITY` when undefined.
#[derive(Debug, Clone)]
pub struct Member {
    pub params: Params,
    pub fitness: f64,
}

/// One full generation with its statistics.
#[derive(Debug, Clone)]
pub struct Generation {
    pub index: usize,
    pub members: Vec<Member>,
    pub stats: GenStats,
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct EvoRun {
    pub stats: Vec<GenStats>,
    pub best: Params,
    pub best_fitness: f64,
    pub best_generation: usize,
}

/// Scores one parameter set by a deterministic argmax rollout.
/// Returns `None` when the metric is undefined for the trajectory.
pub fn evaluate(cfg: &EngineConfig, params: &Params, metric: FitnessMetric) -> Option<f64> {
    // Argmax rollouts never consume randomness; the stream label is moot.
    let mut rng = seeds::child_rng(0, 0, 0);
    let traj = engine::rollout(cfg, params, Selector::Argmax, &mut rng)
        .expect("rollout over validated config");
    match metric {
        FitnessMetric::MaxEta => traj.eta_best,
        FitnessMetric::TerminalDeltaW => Some(traj.cum_w),
    }
}

fn fitness_of(cfg: &EngineConfig, params: &Params, metric: FitnessMetric) -> f64 {
    evaluate(cfg, params, metric).unwrap_or(f64::NEG_INFINITY)
}

/// Indices of the `n_survivors` highest fitnesses, stable under ties, with
/// undefined (negative-infinity) fitnesses ranking last.
pub fn select_by(fitness: &[f64], n_survivors: usize) -> Vec<usize> {
    assert!(fitness.len() >= n_survivors, "not enough members to select from");
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then_with(|| a.cmp(&b)));
    order.truncate(n_survivors);
    order
}

/// Indices of the `n_survivors` highest-fitness members.
pub fn select(members: &[Member], n_survivors: usize) -> Vec<usize> {
    let fitness: Vec<f64> = members.iter().map(|m| m.fitness).collect();
    select_by(&fitness, n_survivors)
}

/// Survivors retained bit-identical plus mutated children of uniformly
/// drawn survivors, up to `pop_size` members.
pub fn refill<R: Rng>(
    survivors: &[Params],
    pop_size: usize,
    epsilon: f64,
    rng: &mut R,
) -> Vec<Params> {
    assert!(!survivors.is_empty(), "refill needs at least one survivor");
    let mut next: Vec<Params> = survivors.to_vec();
    while next.len() < pop_size {
        let parent = &survivors[rng.random_range(0..survivors.len())];
        next.push(parent.mutate(epsilon, rng));
    }
    next
}

fn evaluate_members(
    cfg: &EngineConfig,
    members: &mut [(Params, Option<f64>)],
    metric: FitnessMetric,
) {
    #[cfg(feature = "parallel")]
    {
        members.par_iter_mut().for_each(|(params, fit)| {
            if fit.is_none() {
                *fit = Some(fitness_of(cfg, params, metric));
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (params, fit) in members.iter_mut() {
            if fit.is_none() {
                *fit = Some(fitness_of(cfg, params, metric));
            }
        }
    }
}

/// Sequential population scoring, independent of the `parallel` feature.
/// Exists so benchmarks can compare execution modes; results are identical.
pub fn evaluate_population_serial(
    cfg: &EngineConfig,
    population: &[Params],
    metric: FitnessMetric,
) -> Vec<f64> {
    population.iter().map(|p| fitness_of(cfg, p, metric)).collect()
}

/// Population scoring using the configured execution mode.
pub fn evaluate_population(
    cfg: &EngineConfig,
    population: &[Params],
    metric: FitnessMetric,
) -> Vec<f64> {
    #[cfg(feature = "parallel")]
    {
        population
            .par_iter()
            .map(|p| fitness_of(cfg, p, metric))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        evaluate_population_serial(cfg, population, metric)
    }
}

/// Runs the full loop, invoking `on_generation` after each generation is
/// scored. Returning `false` from the callback stops the run early.
pub fn run_with<F>(evo: &EvoConfig, engine_cfg: &EngineConfig, mut on_generation: F) -> Result<EvoRun>
where
    F: FnMut(&GenStats, &Params) -> bool,
{
    evo.validate()?;
    engine_cfg.validate()?;
    let shape = NetShape::new(engine_cfg.n_inputs(), evo.n_hidden, engine_cfg.action_set.len());

    // Generation 1: independent init stream per slot.
    let mut members: Vec<(Params, Option<f64>)> = (0..evo.pop_size)
        .map(|slot| (Params::init(&shape, &mut seeds::child_rng(evo.seed, 0, slot as u64)), None))
        .collect();

    let mut stats_log = Vec::with_capacity(evo.n_generations);
    let mut best: Option<(Params, f64, usize)> = None;

    for g in 1..=evo.n_generations {
        evaluate_members(engine_cfg, &mut members, evo.fitness);

        let fitness: Vec<f64> = members.iter().map(|(_, f)| f.expect("evaluated")).collect();
        let defined: Vec<f64> = fitness.iter().cloned().filter(|f| f.is_finite()).collect();
        let gen_max = defined
            .iter()
            .cloned()
            .fold(None, |acc: Option<f64>, f| Some(acc.map_or(f, |a| a.max(f))));
        if let Some(m) = gen_max {
            let improved = best.as_ref().map_or(true, |(_, bf, _)| m > *bf);
            if improved {
                let idx = fitness.iter().position(|&f| f == m).expect("max present");
                best = Some((members[idx].0.clone(), m, g));
            }
        }
        let stats = GenStats {
            generation: g,
            max: gen_max,
            mean: (!defined.is_empty())
                .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            n_defined: defined.len(),
            best_ever: best.as_ref().map(|(_, f, _)| *f),
        };
        stats_log.push(stats);

        let best_params = best.as_ref().map(|(p, _, _)| p).unwrap_or(&members[0].0);
        if !on_generation(&stats, best_params) || g == evo.n_generations {
            break;
        }

        let survivor_idx = select_by(&fitness, evo.n_survivors);
        let survivors: Vec<Params> =
            survivor_idx.iter().map(|&i| members[i].0.clone()).collect();
        let survivor_fitness: Vec<f64> = survivor_idx.iter().map(|&i| fitness[i]).collect();
        let mut rng = seeds::child_rng(evo.seed, g as u64, u64::MAX);
        let refilled = refill(&survivors, evo.pop_size, evo.epsilon, &mut rng);
        members = refilled
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let cached = (i < evo.n_survivors).then(|| survivor_fitness[i]);
                (p, cached)
            })
            .collect();
    }

    let (best_params, best_fitness, best_generation) = best
        .unwrap_or_else(|| (members[0].0.clone(), f64::NEG_INFINITY, 1));
    Ok(EvoRun { stats: stats_log, best: best_params, best_fitness, best_generation })
}

/// Runs the full configured number of generations.
pub fn run(evo: &EvoConfig, engine_cfg: &EngineConfig) -> Result<EvoRun> {
    run_with(evo, engine_cfg, |_, _| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Action;

    fn tiny_evo(seed: u64) -> EvoConfig {
        EvoConfig {
            pop_size: 12,
            n_survivors: 3,
            n_generations: 4,
            seed,
            n_hidden: 16,
            ..EvoConfig::default()
        }
    }

    fn member(fitness: f64) -> Member {
        let shape = NetShape::new(2, 2, 2);
        Member { params: Params::zeros(&shape), fitness }
    }

    #[test]
    fn select_ranks_undefined_below_defined() {
        let members = vec![
            member(0.4),
            member(f64::NEG_INFINITY),
            member(0.1),
            member(0.3),
        ];
        assert_eq!(select(&members, 2), vec![0, 3]);
    }

    #[test]
    fn select_degenerates_to_stable_order_when_all_undefined() {
        let members: Vec<Member> =
            (0..4).map(|_| member(f64::NEG_INFINITY)).collect();
        assert_eq!(select(&members, 3), vec![0, 1, 2]);
    }

    #[test]
    fn select_with_full_population_is_identity() {
        let members = vec![member(0.1), member(0.2), member(0.3)];
        let mut idx = select(&members, 3);
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 1, 2]);
    }

    #[test]
    fn refill_keeps_survivors_bit_identical() {
        let shape = NetShape::new(2, 8, 4);
        let survivors: Vec<Params> = (0..25)
            .map(|i| Params::init(&shape, &mut seeds::child_rng(1, 0, i)))
            .collect();
        let next = refill(&survivors, 100, 0.05, &mut seeds::child_rng(1, 1, 0));
        assert_eq!(next.len(), 100);
        for (a, b) in survivors.iter().zip(&next) {
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn refill_with_zero_epsilon_copies_parents() {
        let shape = NetShape::new(2, 4, 2);
        let survivors: Vec<Params> = (0..3)
            .map(|i| Params::init(&shape, &mut seeds::child_rng(2, 0, i)))
            .collect();
        let next = refill(&survivors, 10, 0.0, &mut seeds::child_rng(2, 1, 0));
        for child in &next[3..] {
            assert!(survivors.iter().any(|s| s.data == child.data));
        }
    }

    #[test]
    fn refill_draws_parents_uniformly() {
        let shape = NetShape::new(1, 1, 1);
        // Tag each parent by an identifiable parameter value.
        let survivors: Vec<Params> = (0..25)
            .map(|i| Params { shape, data: vec![i as f64 * 1000.0, 0.0, 0.0] })
            .collect();
        let n_children = 100_000;
        let next = refill(&survivors, 25 + n_children, 0.05, &mut seeds::child_rng(7, 1, 0));
        let mut counts = vec![0usize; 25];
        for child in &next[25..] {
            let tag = (child.data[0] / 1000.0).round() as usize;
            counts[tag] += 1;
        }
        let expected = n_children as f64 / 25.0;
        let sigma = (n_children as f64 * (1.0 / 25.0) * (24.0 / 25.0)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 3.0 * sigma,
                "parent {i} drawn {c} times, expected {expected}"
            );
        }
    }

    #[test]
    fn single_generation_reports_initial_population_only() {
        let evo = EvoConfig { n_generations: 1, ..tiny_evo(3) };
        let run = run(&evo, &EngineConfig::default()).unwrap();
        assert_eq!(run.stats.len(), 1);
        assert_eq!(run.stats[0].generation, 1);
    }

    #[test]
    fn max_fitness_is_monotone_under_elitism() {
        let evo = EvoConfig { n_generations: 12, ..tiny_evo(5) };
        let run = run(&evo, &EngineConfig::default()).unwrap();
        let maxes: Vec<f64> = run
            .stats
            .iter()
            .map(|s| s.max.unwrap_or(f64::NEG_INFINITY))
            .collect();
        for w in maxes.windows(2) {
            assert!(w[1] >= w[0], "max fitness regressed: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn identical_seeds_give_identical_stats_streams() {
        let evo = tiny_evo(11);
        let a = run(&evo, &EngineConfig::default()).unwrap();
        let b = run(&evo, &EngineConfig::default()).unwrap();
        assert_eq!(a.stats.len(), b.stats.len());
        for (x, y) in a.stats.iter().zip(&b.stats) {
            assert_eq!(x.max, y.max);
            assert_eq!(x.mean, y.mean);
            assert_eq!(x.n_defined, y.n_defined);
        }
        assert_eq!(a.best.data, b.best.data);
    }

    #[test]
    fn parallel_and_serial_scoring_agree() {
        let shape = NetShape::new(2, 16, 8);
        let population: Vec<Params> = (0..8)
            .map(|i| Params::init(&shape, &mut seeds::child_rng(13, 0, i)))
            .collect();
        let cfg = EngineConfig::default();
        let par = evaluate_population(&cfg, &population, FitnessMetric::MaxEta);
        let ser = evaluate_population_serial(&cfg, &population, FitnessMetric::MaxEta);
        assert_eq!(par, ser);
    }

    #[test]
    fn deterministic_evaluation_is_repeatable() {
        let shape = NetShape::new(2, 16, 8);
        let p = Params::init(&shape, &mut seeds::child_rng(21, 0, 0));
        let cfg = EngineConfig::default();
        let a = evaluate(&cfg, &p, FitnessMetric::MaxEta);
        let b = evaluate(&cfg, &p, FitnessMetric::MaxEta);
        assert_eq!(a, b);
    }

    #[test]
    fn all_zero_params_score_at_most_zero() {
        // Argmax of all-zero logits picks the first action
        // (AdiabaticCompress), which clamps at v_min without hot heat.
        let cfg = EngineConfig::default();
        let shape = NetShape::new(2, 16, cfg.action_set.len());
        let p = Params::zeros(&shape);
        let fit = evaluate(&cfg, &p, FitnessMetric::MaxEta);
        assert!(fit.map_or(true, |f| f <= 0.0), "fitness {fit:?}");
        assert_eq!(cfg.action_set[0], Action::AdiabaticCompress);
    }
}
