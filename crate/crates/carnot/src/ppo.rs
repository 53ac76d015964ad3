//! Proximal policy optimization, written from scratch on the budgeted
//! engine.
//!
//! Rollout collection and optimization alternate: each update collects
//! exactly `batch_size` environment steps (episodes may span batches; the
//! cut end is bootstrapped with the value estimate), computes generalized
//! advantage estimates, then takes `epochs_per_batch` full-batch gradient
//! steps on the clipped-surrogate + value + entropy objective with Adam.
//!
//! The reward is the paper-style terminal net work `W*_K − W*_0`; a dense
//! per-step variant exists behind `dense_reward` for experimentation.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::cycle::{self, CycleReport};
use crate::engine::{self, EngineConfig, Trajectory};
use crate::policy::{self, NetShape, Params};
use crate::seeds;
use crate::{Error, Result};

/// Chunk width for batch reductions. Gradients accumulate per chunk and
/// chunks combine in index order, so parallel and sequential execution
/// produce bit-identical sums.
const REDUCE_CHUNK: usize = 32;

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub clip_eps: f64,
    /// Value-loss weight.
    pub c1: f64,
    /// Entropy weight.
    pub c2: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub gae_lambda: f64,
    pub epochs_per_batch: usize,
    pub seed: u64,
    pub n_hidden: usize,
    /// Non-default shaping: reward every applied step with its dW instead
    /// of the terminal net work.
    pub dense_reward: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr: 2.5e-4,
            gamma: 0.99,
            clip_eps: 0.2,
            c1: 0.5,
            c2: 0.01,
            batch_size: 128,
            total_steps: 2_000_000,
            gae_lambda: 0.95,
            epochs_per_batch: 4,
            seed: 0,
            n_hidden: 1024,
            dense_reward: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_steps == 0 || self.epochs_per_batch == 0 {
            return Err(Error::config("batch_size, total_steps, epochs_per_batch must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("gamma and gae_lambda must lie in [0, 1]"));
        }
        if self.clip_eps <= 0.0 || self.lr <= 0.0 {
            return Err(Error::config("clip_eps and lr must be positive"));
        }
        if self.n_hidden == 0 {
            return Err(Error::config("n_hidden must be >= 1"));
        }
        Ok(())
    }
}

/// One collected environment step.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

/// Transitions with their advantage estimates and value targets.
/// Advantages are normalized batch-wise; value targets are raw
/// (advantage + value before normalization).
#[derive(Debug, Clone)]
pub struct AdvantageBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

/// Generalized advantage estimation over a batch of transitions.
///
/// `bootstrap_value` is the value estimate of the state following the last
/// transition; it is ignored when that transition is terminal. Episode
/// boundaries inside the batch are handled through the `done` flags.
pub fn compute_advantages(
    transitions: Vec<Transition>,
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<AdvantageBatch> {
    if transitions.is_empty() {
        return Err(Error::usage("compute_advantages: empty transition batch"));
    }
    let n = transitions.len();
    let mut advantages = vec![0.0; n];
    let mut carry = 0.0;
    for t in (0..n).rev() {
        let tr = &transitions[t];
        let non_terminal = if tr.done { 0.0 } else { 1.0 };
        let next_value =
            if t + 1 == n { bootstrap_value } else { transitions[t + 1].value };
        let delta = tr.reward + gamma * next_value * non_terminal - tr.value;
        carry = delta + gamma * gae_lambda * non_terminal * carry;
        advantages[t] = carry;
    }
    let value_targets: Vec<f64> = advantages
        .iter()
        .zip(&transitions)
        .map(|(a, tr)| a + tr.value)
        .collect();

    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a = (*a - mean) / (std + 1e-8);
    }

    Ok(AdvantageBatch { transitions, advantages, value_targets })
}

/// Loss components of one evaluation. `total` is the descent objective
/// (negated maximization target); the parts are reported unnegated.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: f64,
    /// Mean clipped surrogate (the quantity being maximized).
    pub clip: f64,
    /// Mean squared value error.
    pub vf: f64,
    /// Mean policy entropy.
    pub entropy: f64,
}

fn sample_loss_and_upstream(
    params: &Params,
    cfg: &PpoConfig,
    n_actions: usize,
    tr: &Transition,
    advantage: f64,
    value_target: f64,
) -> (f64, f64, f64, Vec<f64>) {
    let outputs = params.forward(&tr.obs);
    let logits = &outputs[..n_actions];
    let value = outputs[n_actions];
    let probs = policy::softmax(logits);
    let log_prob = probs[tr.action].ln();
    let ratio = (log_prob - tr.log_prob).exp();

    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * advantage;
    // Gradient flows through the branch the min picks; ties go to the
    // unclipped branch, where both derivatives coincide anyway.
    let (surrogate, dsurr_dratio) = if unclipped <= clipped {
        (unclipped, advantage)
    } else {
        (clipped, 0.0)
    };

    let entropy = policy::entropy(&probs);
    let vf = (value - value_target) * (value - value_target);

    let mut upstream = vec![0.0; n_actions + 1];
    for k in 0..n_actions {
        let indicator = if k == tr.action { 1.0 } else { 0.0 };
        let dratio_dzk = ratio * (indicator - probs[k]);
        let dentropy_dzk = -probs[k] * (probs[k].ln() + entropy);
        upstream[k] = -dsurr_dratio * dratio_dzk - cfg.c2 * dentropy_dzk;
    }
    upstream[n_actions] = cfg.c1 * 2.0 * (value - value_target);

    (surrogate, vf, entropy, upstream)
}

/// Full PPO objective and its exact parameter gradient over a batch.
///
/// Old log-probabilities live in the transitions. Returns the scalar
/// descent loss with its components and the mean gradient.
pub fn ppo_loss(
    params: &Params,
    batch: &AdvantageBatch,
    cfg: &PpoConfig,
) -> (LossParts, Vec<f64>) {
    assert!(!batch.transitions.is_empty(), "ppo_loss over empty batch");
    let n_actions = params.shape.n_out - 1;
    let n = batch.transitions.len();
    let inv_n = 1.0 / n as f64;

    // (surrogate sum, vf sum, entropy sum, gradient) per fixed chunk.
    let chunk_result = |range: std::ops::Range<usize>| {
        let mut sums = (0.0, 0.0, 0.0);
        let mut grad = vec![0.0; params.shape.len()];
        for i in range {
            let tr = &batch.transitions[i];
            let (surr, vf, ent, upstream) = sample_loss_and_upstream(
                params,
                cfg,
                n_actions,
                tr,
                batch.advantages[i],
                batch.value_targets[i],
            );
            sums.0 += surr;
            sums.1 += vf;
            sums.2 += ent;
            let scaled: Vec<f64> = upstream.iter().map(|u| u * inv_n).collect();
            params.backward_into(&tr.obs, &scaled, &mut grad);
        }
        (sums, grad)
    };

    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(REDUCE_CHUNK)
        .map(|s| s..(s + REDUCE_CHUNK).min(n))
        .collect();

    #[cfg(feature = "parallel")]
    let chunks: Vec<_> = ranges.into_par_iter().map(chunk_result).collect();
    #[cfg(not(feature = "parallel"))]
    let chunks: Vec<_> = ranges.into_iter().map(chunk_result).collect();

    let mut grad = vec![0.0; params.shape.len()];
    let mut sums = (0.0, 0.0, 0.0);
    for (s, g) in chunks {
        sums.0 += s.0;
        sums.1 += s.1;
        sums.2 += s.2;
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi;
        }
    }

    let clip = sums.0 * inv_n;
    let vf = sums.1 * inv_n;
    let entropy = sums.2 * inv_n;
    let total = -clip + cfg.c1 * vf - cfg.c2 * entropy;
    (LossParts { total, clip, vf, entropy }, grad)
}

/// Adam optimizer state (β₁ = 0.9, β₂ = 0.999, ε = 1e−8).
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(n_params: usize) -> Adam {
        Adam { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    /// One descent step at step size `lr`.
    pub fn step(&mut self, params: &mut Params, grad: &[f64], lr: f64) {
        assert_eq!(grad.len(), params.data.len(), "gradient/parameter shape mismatch");
        assert_eq!(grad.len(), self.m.len(), "optimizer state shape mismatch");
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..grad.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params.data[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Per-update training record, one CSV row each.
#[derive(Debug, Clone, Copy)]
pub struct UpdateRecord {
    pub update_index: usize,
    pub env_steps: usize,
    /// Mean return of episodes completed during this batch; NaN if none.
    pub mean_return: f64,
    /// Best trajectory efficiency seen so far over the whole run.
    pub best_eta: Option<f64>,
    pub loss_clip: f64,
    pub loss_vf: f64,
    pub entropy: f64,
}

/// Best episode observed during training, by trajectory efficiency.
#[derive(Debug, Clone)]
pub struct BestEpisode {
    pub eta: f64,
    pub params: Params,
    pub trajectory: Trajectory,
    pub env_steps: usize,
}

/// Best closed cycle observed in any training episode, by cycle
/// efficiency. Distinct from `BestEpisode`: a high running efficiency does
/// not require a closed loop and vice versa.
#[derive(Debug, Clone)]
pub struct BestCycle {
    pub report: CycleReport,
    pub env_steps: usize,
}

#[derive(Debug)]
pub struct PpoRun {
    pub records: Vec<UpdateRecord>,
    pub best: Option<BestEpisode>,
    pub best_cycle: Option<BestCycle>,
    pub final_params: Params,
}

/// Runs PPO training, calling `on_update` after each optimization round.
/// Returning `false` stops early.
pub fn train_with<F>(ppo: &PpoConfig, engine_cfg: &EngineConfig, mut on_update: F) -> Result<PpoRun>
where
    F: FnMut(&UpdateRecord) -> bool,
{
    ppo.validate()?;
    engine_cfg.validate()?;
    if !engine_cfg.budgets_enabled {
        return Err(Error::config("ppo training requires the budgeted engine variant"));
    }
    let n_actions = engine_cfg.action_set.len();
    let shape = NetShape::new(engine_cfg.n_inputs(), ppo.n_hidden, n_actions + 1);
    let mut params = Params::init(&shape, &mut seeds::child_rng(ppo.seed, 0, 0));
    // Unit-variance output weights over a wide hidden layer produce logits
    // on the order of sqrt(n_hidden): the softmax starts saturated and its
    // gradients vanish. Scale the output block so the starting policy is
    // near-uniform and exploration is possible.
    let out_scale = 1.0 / (ppo.n_hidden as f64).sqrt();
    let out_offset = shape.n_in * shape.n_hidden + shape.n_hidden;
    for w in &mut params.data[out_offset..] {
        *w *= out_scale;
    }
    let mut adam = Adam::new(shape.len());
    let mut rng = seeds::child_rng(ppo.seed, 1, 0);

    let mut state = engine::reset(engine_cfg)?;
    let mut episode = Trajectory::new(state);
    let mut records = Vec::new();
    let mut best: Option<BestEpisode> = None;
    let mut best_cycle: Option<BestCycle> = None;
    let mut env_steps = 0usize;
    let mut update_index = 0usize;

    while env_steps < ppo.total_steps {
        let mut transitions: Vec<Transition> = Vec::with_capacity(ppo.batch_size);
        let mut completed_returns: Vec<f64> = Vec::new();

        while transitions.len() < ppo.batch_size {
            let obs = policy::observe(engine_cfg, &state);
            let outputs = params.forward(&obs);
            let (action_idx, log_prob, _probs) =
                policy::act_softmax(&outputs[..n_actions], &mut rng);
            let value = outputs[n_actions];
            let action = engine_cfg.action_set[action_idx];
            let outcome = engine::apply(engine_cfg, &state, action)?;

            let mut done = false;
            let mut reward = 0.0;
            if !outcome.feasible {
                // Episode ends on the rejected action; budgets unchanged.
                done = true;
                episode.ended_infeasible = true;
                if !ppo.dense_reward {
                    reward = state.w_budget.unwrap_or(0.0) - engine_cfg.w0_budget;
                }
            } else {
                episode.push(state, action, outcome);
                state = outcome.next;
                if ppo.dense_reward {
                    reward = outcome.dw;
                }
                if state.step >= engine_cfg.k_max {
                    done = true;
                    if !ppo.dense_reward {
                        reward = state.w_budget.unwrap_or(0.0) - engine_cfg.w0_budget;
                    }
                }
            }
            transitions.push(Transition { obs, action: action_idx, log_prob, reward, value, done });
            env_steps += 1;

            if done {
                let ep_return = if ppo.dense_reward {
                    episode.cum_w
                } else {
                    reward
                };
                completed_returns.push(ep_return);
                if let Some(eta) = episode.eta_best {
                    let improved = best.as_ref().map_or(true, |b| eta > b.eta);
                    if improved {
                        best = Some(BestEpisode {
                            eta,
                            params: params.clone(),
                            trajectory: episode.clone(),
                            env_steps,
                        });
                    }
                }
                if let Some(report) = cycle::best_cycle_in(engine_cfg, &episode) {
                    if let Some(eta) = report.eta {
                        let improved = best_cycle
                            .as_ref()
                            .map_or(true, |b| b.report.eta.map_or(true, |be| eta > be));
                        if improved {
                            best_cycle = Some(BestCycle { report, env_steps });
                        }
                    }
                }
                state = engine::reset(engine_cfg)?;
                episode = Trajectory::new(state);
            }
        }

        let bootstrap = if transitions.last().map_or(true, |t| t.done) {
            0.0
        } else {
            let obs = policy::observe(engine_cfg, &state);
            params.forward(&obs)[n_actions]
        };
        let batch =
            compute_advantages(transitions, bootstrap, ppo.gamma, ppo.gae_lambda)?;

        let mut first_parts: Option<LossParts> = None;
        for _ in 0..ppo.epochs_per_batch {
            let (parts, grad) = ppo_loss(&params, &batch, ppo);
            if first_parts.is_none() {
                first_parts = Some(parts);
            }
            adam.step(&mut params, &grad, ppo.lr);
        }
        let parts = first_parts.expect("at least one epoch");

        update_index += 1;
        let mean_return = if completed_returns.is_empty() {
            f64::NAN
        } else {
            completed_returns.iter().sum::<f64>() / completed_returns.len() as f64
        };
        let record = UpdateRecord {
            update_index,
            env_steps,
            mean_return,
            best_eta: best.as_ref().map(|b| b.eta),
            loss_clip: parts.clip,
            loss_vf: parts.vf,
            entropy: parts.entropy,
        };
        records.push(record);
        if !on_update(&record) {
            break;
        }
    }

    Ok(PpoRun { records, best, best_cycle, final_params: params })
}

/// Runs the full configured number of environment steps.
pub fn train(ppo: &PpoConfig, engine_cfg: &EngineConfig) -> Result<PpoRun> {
    train_with(ppo, engine_cfg, |_| true)
}
