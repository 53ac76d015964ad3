//! Quasi-static ideal-gas heat engine with a discrete action set.
//!
//! The working substance is a monatomic ideal gas in a frictionless
//! container whose volume moves on a fixed-increment grid between `v_min`
//! and `v_max`. It can touch a hot or cold reservoir or be insulated.
//! Every action reports the work done by the gas (`dw`), the total heat
//! into the gas (`dq`), and the portion of that heat drawn from the hot
//! reservoir (`dq_in`), which is what the efficiency functional counts.
//!
//! An optional budgeted variant gates each action on non-negative work and
//! heat budgets; that variant is what the gradient-based trainer runs on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::policy::{self, Policy};
use crate::{Error, Result};

/// Absolute tolerance for recognizing a volume as a grid point.
const VOL_SNAP_TOL: f64 = 1e-9;

/// The elementary thermodynamic processes available to a policy.
///
/// The two `Irrev*` actions are the lossy compression/expansion variant;
/// they are only meaningful in configs whose action set includes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    AdiabaticCompress,
    AdiabaticExpand,
    IsothermalCompressHot,
    IsothermalExpandHot,
    IsothermalCompressCold,
    IsothermalExpandCold,
    IsochoricHeat,
    IsochoricCool,
    IrrevCompress,
    IrrevExpand,
}

impl Action {
    /// The eight canonical actions, in network-output order.
    pub const CANONICAL: [Action; 8] = [
        Action::AdiabaticCompress,
        Action::AdiabaticExpand,
        Action::IsothermalCompressHot,
        Action::IsothermalExpandHot,
        Action::IsothermalCompressCold,
        Action::IsothermalExpandCold,
        Action::IsochoricHeat,
        Action::IsochoricCool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Action::AdiabaticCompress => "adiabatic_compress",
            Action::AdiabaticExpand => "adiabatic_expand",
            Action::IsothermalCompressHot => "isothermal_compress_hot",
            Action::IsothermalExpandHot => "isothermal_expand_hot",
            Action::IsothermalCompressCold => "isothermal_compress_cold",
            Action::IsothermalExpandCold => "isothermal_expand_cold",
            Action::IsochoricHeat => "isochoric_heat",
            Action::IsochoricCool => "isochoric_cool",
            Action::IrrevCompress => "irrev_compress",
            Action::IrrevExpand => "irrev_expand",
        }
    }

    pub fn parse(s: &str) -> Result<Action> {
        let all = [
            Action::AdiabaticCompress,
            Action::AdiabaticExpand,
            Action::IsothermalCompressHot,
            Action::IsothermalExpandHot,
            Action::IsothermalCompressCold,
            Action::IsothermalExpandCold,
            Action::IsochoricHeat,
            Action::IsochoricCool,
            Action::IrrevCompress,
            Action::IrrevExpand,
        ];
        all.into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown action `{s}`")))
    }

    /// The action that moves the volume (or reservoir target) the other way.
    pub fn opposite(self) -> Action {
        match self {
            Action::AdiabaticCompress => Action::AdiabaticExpand,
            Action::AdiabaticExpand => Action::AdiabaticCompress,
            Action::IsothermalCompressHot => Action::IsothermalExpandHot,
            Action::IsothermalExpandHot => Action::IsothermalCompressHot,
            Action::IsothermalCompressCold => Action::IsothermalExpandCold,
            Action::IsothermalExpandCold => Action::IsothermalCompressCold,
            Action::IsochoricHeat => Action::IsochoricCool,
            Action::IsochoricCool => Action::IsochoricHeat,
            Action::IrrevCompress => Action::IrrevExpand,
            Action::IrrevExpand => Action::IrrevCompress,
        }
    }

    pub fn is_irreversible(self) -> bool {
        matches!(self, Action::IrrevCompress | Action::IrrevExpand)
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Static parameters of the engine.
///
/// `nkb` is the product N·k_B treated as a single energy scale; efficiency
/// is a ratio and does not depend on it.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub t_hot: f64,
    pub t_cold: f64,
    pub nkb: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub dv: f64,
    pub k_max: usize,
    pub action_set: Vec<Action>,
    pub k_loss: f64,
    pub budgets_enabled: bool,
    pub w0_budget: f64,
    pub q0_budget: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let mut cfg = EngineConfig {
            t_hot: 500.0,
            t_cold: 300.0,
            nkb: 1.0,
            v_min: 1.0,
            v_max: 4.0,
            dv: 0.1,
            k_max: 200,
            action_set: Action::CANONICAL.to_vec(),
            k_loss: 0.4,
            budgets_enabled: false,
            w0_budget: 0.0,
            q0_budget: 0.0,
        };
        cfg.w0_budget = cfg.analytic_carnot_work();
        cfg.q0_budget = 5.0 * cfg.analytic_carnot_heat();
        cfg
    }
}

impl EngineConfig {
    /// Default config with budgets enabled (the gradient-trainer variant).
    pub fn budgeted() -> Self {
        EngineConfig { budgets_enabled: true, ..EngineConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_hot > self.t_cold && self.t_cold > 0.0) {
            return Err(Error::config(format!(
                "require t_hot > t_cold > 0, got t_hot={} t_cold={}",
                self.t_hot, self.t_cold
            )));
        }
        if !(self.v_max > self.v_min && self.v_min > 0.0) {
            return Err(Error::config(format!(
                "require v_max > v_min > 0, got v_max={} v_min={}",
                self.v_max, self.v_min
            )));
        }
        if !(self.dv > 0.0 && self.dv <= self.v_max - self.v_min) {
            return Err(Error::config(format!(
                "require 0 < dv <= v_max - v_min, got dv={}",
                self.dv
            )));
        }
        if self.k_max < 1 {
            return Err(Error::config("require k_max >= 1"));
        }
        if !(0.0..1.0).contains(&self.k_loss) {
            return Err(Error::config(format!(
                "require 0 <= k_loss < 1, got {}",
                self.k_loss
            )));
        }
        if self.nkb <= 0.0 {
            return Err(Error::config(format!("require nkb > 0, got {}", self.nkb)));
        }
        if self.action_set.is_empty() {
            return Err(Error::config("action_set must not be empty"));
        }
        if self.budgets_enabled && (self.w0_budget < 0.0 || self.q0_budget < 0.0) {
            return Err(Error::config("budgets must be >= 0 when enabled"));
        }
        Ok(())
    }

    /// Number of policy inputs this variant observes.
    pub fn n_inputs(&self) -> usize {
        if self.budgets_enabled {
            4
        } else {
            2
        }
    }

    /// Heat drawn from the hot reservoir by one ideal (continuous) Carnot
    /// cycle spanning the full volume range: the hot isotherm runs from
    /// `v_min` to the volume where the adiabat just reaches `v_max`.
    pub fn analytic_carnot_heat(&self) -> f64 {
        let adiabat_ratio = (self.t_hot / self.t_cold).powf(1.5);
        self.nkb * self.t_hot * (self.v_max / self.v_min / adiabat_ratio).ln()
    }

    /// Work produced by that same ideal Carnot cycle.
    pub fn analytic_carnot_work(&self) -> f64 {
        (1.0 - self.t_cold / self.t_hot) * self.analytic_carnot_heat()
    }

    /// The volumes reachable by repeated compression from `v_max`,
    /// largest first. The last entry is exactly `v_min` when the range is
    /// an integer multiple of `dv` (clamping snaps to the boundary).
    pub fn volume_grid(&self) -> Vec<f64> {
        let mut grid = vec![self.v_max];
        let mut v = self.v_max;
        loop {
            let next = stepped_volume(self, v, false);
            if next == v {
                break;
            }
            grid.push(next);
            v = next;
        }
        grid
    }
}

/// Instantaneous state of the gas. Budgets are `Some` only in the budgeted
/// variant. Pressure is always derived via `pressure`, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineState {
    pub v: f64,
    pub t: f64,
    pub w_budget: Option<f64>,
    pub q_budget: Option<f64>,
    pub step: usize,
}

impl EngineState {
    /// Ideal-gas pressure at this state.
    pub fn pressure(&self, cfg: &EngineConfig) -> f64 {
        cfg.nkb * self.t / self.v
    }
}

/// Everything produced by applying one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Work done by the gas.
    pub dw: f64,
    /// Total heat into the gas, including reservoir equilibration.
    pub dq: f64,
    /// Heat counted from the hot reservoir: equal to `dq` exactly when
    /// `dq > 0` and the final temperature is the hot reservoir temperature,
    /// zero otherwise.
    pub dq_in: f64,
    pub next: EngineState,
    /// False when a budget gate rejected the action; `next` is then the
    /// unchanged input state.
    pub feasible: bool,
}

/// Initial state: fully expanded, equilibrated with the cold reservoir.
pub fn reset(cfg: &EngineConfig) -> Result<EngineState> {
    cfg.validate()?;
    Ok(EngineState {
        v: cfg.v_max,
        t: cfg.t_cold,
        w_budget: cfg.budgets_enabled.then_some(cfg.w0_budget),
        q_budget: cfg.budgets_enabled.then_some(cfg.q0_budget),
        step: 0,
    })
}

/// One volume increment, clamped to the bounds.
///
/// Volumes that sit on the grid anchored at `v_max` step by index
/// arithmetic, so repeated moves do not accumulate rounding; a move that
/// would leave the range stops exactly at the boundary.
fn stepped_volume(cfg: &EngineConfig, v: f64, expand: bool) -> f64 {
    let n = ((cfg.v_max - v) / cfg.dv).round();
    let on_grid = n >= 0.0 && (cfg.v_max - n * cfg.dv - v).abs() <= VOL_SNAP_TOL;
    if expand {
        let target = if on_grid { cfg.v_max - (n - 1.0) * cfg.dv } else { v + cfg.dv };
        if target > cfg.v_max {
            cfg.v_max
        } else {
            target
        }
    } else {
        let target = if on_grid { cfg.v_max - (n + 1.0) * cfg.dv } else { v - cfg.dv };
        if target < cfg.v_min {
            cfg.v_min
        } else {
            target
        }
    }
}

/// Applies one action to a state.
///
/// Returns a usage error if the action is not in the configured set. In the
/// budgeted variant an action whose work cost or hot-heat draw exceeds the
/// remaining budget is reported infeasible and leaves the state unchanged.
pub fn apply(cfg: &EngineConfig, state: &EngineState, action: Action) -> Result<StepOutcome> {
    if !cfg.action_set.contains(&action) {
        return Err(Error::usage(format!(
            "action `{action}` is not in the configured action set"
        )));
    }
    let (v_i, t_i) = (state.v, state.t);
    let c = 1.5 * cfg.nkb;

    let (v_f, t_f, dw, dq) = match action {
        Action::AdiabaticCompress | Action::AdiabaticExpand => {
            let v_f = stepped_volume(cfg, v_i, action == Action::AdiabaticExpand);
            let ratio = (v_i / v_f).powf(2.0 / 3.0);
            (v_f, t_i * ratio, -c * t_i * (ratio - 1.0), 0.0)
        }
        Action::IsothermalCompressHot
        | Action::IsothermalExpandHot
        | Action::IsothermalCompressCold
        | Action::IsothermalExpandCold => {
            let expand = matches!(
                action,
                Action::IsothermalExpandHot | Action::IsothermalExpandCold
            );
            let t_r = if matches!(
                action,
                Action::IsothermalCompressHot | Action::IsothermalExpandHot
            ) {
                cfg.t_hot
            } else {
                cfg.t_cold
            };
            let v_f = stepped_volume(cfg, v_i, expand);
            let dw = cfg.nkb * t_r * (v_f / v_i).ln();
            // Equilibration heat c·(T_r − T_i) is included for both
            // reservoirs; it only counts toward dq_in at the hot one.
            (v_f, t_r, dw, dw + c * (t_r - t_i))
        }
        Action::IsochoricHeat | Action::IsochoricCool => {
            let t_r = if action == Action::IsochoricHeat { cfg.t_hot } else { cfg.t_cold };
            (v_i, t_r, 0.0, c * (t_r - t_i))
        }
        Action::IrrevCompress | Action::IrrevExpand => {
            let v_f = stepped_volume(cfg, v_i, action == Action::IrrevExpand);
            let ratio = (v_i / v_f).powf(2.0 / 3.0);
            // A full increment attenuates T·V^(2/3) by one factor of
            // (1 − k_loss); a clamped partial move scales the exponent.
            let frac = (v_f - v_i).abs() / cfg.dv;
            let t_f = t_i * ratio * (1.0 - cfg.k_loss).powf(frac);
            let dw = -c * t_i * (ratio - 1.0);
            // Work matches the reversible adiabat; the temperature deficit
            // is heat lost to the environment and never reaches dq_in.
            (v_f, t_f, dw, c * (t_f - t_i * ratio))
        }
    };

    let dq_in = if dq > 0.0 && t_f == cfg.t_hot { dq } else { 0.0 };

    if cfg.budgets_enabled {
        let w = state.w_budget.unwrap_or(cfg.w0_budget);
        let q = state.q_budget.unwrap_or(cfg.q0_budget);
        if w < -dw || q < dq_in {
            return Ok(StepOutcome { dw, dq, dq_in, next: *state, feasible: false });
        }
        let next = EngineState {
            v: v_f,
            t: t_f,
            w_budget: Some(w + dw),
            q_budget: Some(q - dq_in),
            step: state.step + 1,
        };
        return Ok(StepOutcome { dw, dq, dq_in, next, feasible: true });
    }

    let next = EngineState {
        v: v_f,
        t: t_f,
        w_budget: None,
        q_budget: None,
        step: state.step + 1,
    };
    Ok(StepOutcome { dw, dq, dq_in, next, feasible: true })
}

/// One recorded step: the state acted upon, the chosen action, and what it
/// produced.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub state: EngineState,
    pub action: Action,
    pub outcome: StepOutcome,
}

/// An ordered sequence of applied steps with running efficiency bookkeeping.
///
/// `eta_by_step[t]` is defined iff the cumulative hot-reservoir heat after
/// step `t` is positive, in which case it equals cumulative work over
/// cumulative hot heat. `eta_best` is the maximum over defined entries.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub start: EngineState,
    pub steps: Vec<TrajectoryStep>,
    pub cum_w: f64,
    pub cum_q_in: f64,
    pub eta_by_step: Vec<Option<f64>>,
    pub eta_best: Option<f64>,
    /// True when a budgeted rollout stopped because the selected action was
    /// infeasible.
    pub ended_infeasible: bool,
}

impl Trajectory {
    pub fn new(start: EngineState) -> Self {
        Trajectory {
            start,
            steps: Vec::new(),
            cum_w: 0.0,
            cum_q_in: 0.0,
            eta_by_step: Vec::new(),
            eta_best: None,
            ended_infeasible: false,
        }
    }

    /// Appends an applied step and updates the running sums.
    pub fn push(&mut self, state: EngineState, action: Action, outcome: StepOutcome) {
        self.cum_w += outcome.dw;
        self.cum_q_in += outcome.dq_in;
        let eta = (self.cum_q_in > 0.0).then(|| self.cum_w / self.cum_q_in);
        if let Some(e) = eta {
            if self.eta_best.map_or(true, |best| e > best) {
                self.eta_best = Some(e);
            }
        }
        self.eta_by_step.push(eta);
        self.steps.push(TrajectoryStep { state, action, outcome });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The visited states: start followed by each step's result.
    pub fn states(&self) -> impl Iterator<Item = EngineState> + '_ {
        std::iter::once(self.start).chain(self.steps.iter().map(|s| s.outcome.next))
    }

    pub fn final_state(&self) -> EngineState {
        self.steps.last().map_or(self.start, |s| s.outcome.next)
    }
}

/// Maximum running efficiency of a trajectory; absent when the cumulative
/// hot-reservoir heat never becomes positive.
pub fn efficiency(traj: &Trajectory) -> Option<f64> {
    traj.eta_best
}

/// How an action index is chosen from the policy outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    /// Deterministic: highest logit wins, ties to the lowest index.
    Argmax,
    /// Stochastic: sample from the softmax distribution.
    Softmax,
}

/// Runs a policy for up to `k_max` steps from the reset state.
///
/// A budgeted rollout stops early when the selected action is infeasible;
/// the rejected step is not recorded, only flagged. Argmax rollouts are
/// fully deterministic and never consume the generator.
pub fn rollout<P: Policy, R: Rng>(
    cfg: &EngineConfig,
    policy: &P,
    selector: Selector,
    rng: &mut R,
) -> Result<Trajectory> {
    let start = reset(cfg)?;
    let mut traj = Trajectory::new(start);
    let mut state = start;
    // Deterministic policies repeat their choice at repeated states; cache
    // by exact bit pattern to skip redundant forward passes.
    let mut seen: Vec<(u64, u64, usize)> = Vec::new();
    for _ in 0..cfg.k_max {
        let idx = if selector == Selector::Argmax {
            let key = (state.v.to_bits(), state.t.to_bits());
            match seen.iter().find(|(v, t, _)| *v == key.0 && *t == key.1) {
                Some(&(_, _, idx)) => idx,
                None => {
                    let obs = policy::observe(cfg, &state);
                    let idx = policy::act_argmax(&policy.logits(&obs));
                    seen.push((key.0, key.1, idx));
                    idx
                }
            }
        } else {
            let obs = policy::observe(cfg, &state);
            policy::act_softmax(&policy.logits(&obs), rng).0
        };
        let action = cfg.action_set[idx];
        let outcome = apply(cfg, &state, action)?;
        if !outcome.feasible {
            traj.ended_infeasible = true;
            break;
        }
        traj.push(state, action, outcome);
        state = outcome.next;
    }
    Ok(traj)
}

/// Replays an explicit action sequence from a given state, ignoring budgets.
/// Used by the oracle and cycle tooling.
pub fn replay(cfg: &EngineConfig, start: EngineState, actions: &[Action]) -> Result<Trajectory> {
    let mut traj = Trajectory::new(start);
    let mut state = start;
    for &action in actions {
        let outcome = apply(cfg, &state, action)?;
        traj.push(state, action, outcome);
        state = outcome.next;
    }
    Ok(traj)
}
