//! Closed-cycle detection, replay-consistent cycle reports, and
//! equation-of-state branch fitting.

use serde::Serialize;

use crate::engine::{self, Action, EngineConfig, EngineState, Trajectory};
use crate::{Error, Result};

/// Absolute tolerance on (V, T) when recognizing a repeated state. Grid
/// volumes are exact; temperatures accumulate rounding across adiabats.
pub const CYCLE_TOL: f64 = 1e-9;

/// One branch of a cycle: a maximal run of consecutive identical actions,
/// with the (V, P) points the gas occupies while on that branch.
#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub action: Action,
    pub points: Vec<(f64, f64)>,
}

/// A closed cycle, reported so that replaying `actions` from
/// (`start_v`, `start_t`) reproduces every number in it.
#[derive(Debug, Clone, Serialize)]
pub struct CycleReport {
    pub period: usize,
    pub start_v: f64,
    pub start_t: f64,
    pub actions: Vec<Action>,
    /// Efficiency over one period; absent when the period draws no heat
    /// from the hot reservoir (e.g. a trivial fixed point).
    pub eta: Option<f64>,
    pub cum_w: f64,
    pub cum_q_in: f64,
    pub branches: Vec<Branch>,
}

impl CycleReport {
    /// Builds a report by replaying `actions` from a start state through
    /// the engine (budgets disabled). Fails if the sequence does not
    /// return to its start within `CYCLE_TOL`.
    pub fn build(
        cfg: &EngineConfig,
        start_v: f64,
        start_t: f64,
        actions: &[Action],
    ) -> Result<CycleReport> {
        let physics = physics_config(cfg);
        let start = EngineState { v: start_v, t: start_t, w_budget: None, q_budget: None, step: 0 };
        let traj = engine::replay(&physics, start, actions)?;
        let end = traj.final_state();
        if (end.v - start_v).abs() > CYCLE_TOL || (end.t - start_t).abs() > CYCLE_TOL {
            return Err(Error::Runtime(format!(
                "action sequence does not close: ends at (V={}, T={})",
                end.v, end.t
            )));
        }
        Ok(CycleReport {
            period: actions.len(),
            start_v,
            start_t,
            actions: actions.to_vec(),
            eta: (traj.cum_q_in > 0.0).then(|| traj.cum_w / traj.cum_q_in),
            cum_w: traj.cum_w,
            cum_q_in: traj.cum_q_in,
            branches: branches_of(&physics, &traj),
        })
    }

    /// Replays the report and checks its numbers reproduce to relative
    /// tolerance `tol`.
    pub fn verify_replay(&self, cfg: &EngineConfig, tol: f64) -> Result<()> {
        let rebuilt = CycleReport::build(cfg, self.start_v, self.start_t, &self.actions)?;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        if rel(rebuilt.cum_w, self.cum_w) > tol || rel(rebuilt.cum_q_in, self.cum_q_in) > tol {
            return Err(Error::Runtime("cycle report does not replay".into()));
        }
        match (rebuilt.eta, self.eta) {
            (None, None) => Ok(()),
            (Some(a), Some(b)) if rel(a, b) <= tol => Ok(()),
            _ => Err(Error::Runtime("cycle efficiency does not replay".into())),
        }
    }
}

/// The same physics with budgets ignored and every action admissible;
/// cycle reports describe the engine's dynamics, not a particular budget
/// history or action-set restriction.
fn physics_config(cfg: &EngineConfig) -> EngineConfig {
    let mut physics = cfg.clone();
    physics.budgets_enabled = false;
    physics.action_set = vec![
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
    physics
}

/// Groups a trajectory's steps into branches of consecutive identical
/// actions. The point before a step is included only when the gas was
/// already on the branch's curve (it is for adiabats and irreversible
/// moves; for isothermal steps only when no equilibration happened, and
/// never for isochores, which contribute their endpoint column).
fn branches_of(cfg: &EngineConfig, traj: &Trajectory) -> Vec<Branch> {
    let mut branches: Vec<Branch> = Vec::new();
    for step in &traj.steps {
        let on_curve_before = match step.action {
            Action::AdiabaticCompress | Action::AdiabaticExpand => true,
            Action::IrrevCompress | Action::IrrevExpand => true,
            Action::IsothermalCompressHot | Action::IsothermalExpandHot => {
                step.state.t == cfg.t_hot
            }
            Action::IsothermalCompressCold | Action::IsothermalExpandCold => {
                step.state.t == cfg.t_cold
            }
            Action::IsochoricHeat | Action::IsochoricCool => false,
        };
        let next_point = (step.outcome.next.v, step.outcome.next.pressure(cfg));
        match branches.last_mut() {
            Some(branch) if branch.action == step.action => {
                branch.points.push(next_point);
            }
            _ => {
                let mut points = Vec::new();
                if on_curve_before {
                    points.push((step.state.v, step.state.pressure(cfg)));
                }
                points.push(next_point);
                branches.push(Branch { action: step.action, points });
            }
        }
    }
    branches
}

/// Finds the earliest repeated (V, T) pair in a deterministic trajectory
/// and reports the enclosed period. Absent when no state repeats.
pub fn detect_cycle(cfg: &EngineConfig, traj: &Trajectory) -> Option<CycleReport> {
    let states: Vec<EngineState> = traj.states().collect();
    for t2 in 1..states.len() {
        for t1 in 0..t2 {
            if (states[t1].v - states[t2].v).abs() <= CYCLE_TOL
                && (states[t1].t - states[t2].t).abs() <= CYCLE_TOL
            {
                let actions: Vec<Action> =
                    traj.steps[t1..t2].iter().map(|s| s.action).collect();
                return CycleReport::build(cfg, states[t1].v, states[t1].t, &actions).ok();
            }
        }
    }
    None
}

/// Scans every closed (V, T)-repeat segment of a trajectory and returns the
/// one with the highest defined efficiency. Unlike `detect_cycle`, this is
/// phase-insensitive and suits stochastic trajectories whose early wander
/// closes low-quality loops.
pub fn best_cycle_in(cfg: &EngineConfig, traj: &Trajectory) -> Option<CycleReport> {
    let states: Vec<EngineState> = traj.states().collect();
    let n = states.len();
    let mut w_prefix = vec![0.0; n];
    let mut q_prefix = vec![0.0; n];
    for (i, step) in traj.steps.iter().enumerate() {
        w_prefix[i + 1] = w_prefix[i] + step.outcome.dw;
        q_prefix[i + 1] = q_prefix[i] + step.outcome.dq_in;
    }
    let mut best: Option<(f64, usize, usize)> = None;
    for t2 in 1..n {
        for t1 in 0..t2 {
            if (states[t1].v - states[t2].v).abs() <= CYCLE_TOL
                && (states[t1].t - states[t2].t).abs() <= CYCLE_TOL
            {
                let q = q_prefix[t2] - q_prefix[t1];
                if q > 0.0 {
                    let eta = (w_prefix[t2] - w_prefix[t1]) / q;
                    if best.map_or(true, |(b, _, _)| eta > b) {
                        best = Some((eta, t1, t2));
                    }
                }
            }
        }
    }
    let (_, t1, t2) = best?;
    let actions: Vec<Action> = traj.steps[t1..t2].iter().map(|s| s.action).collect();
    CycleReport::build(cfg, states[t1].v, states[t1].t, &actions).ok()
}

/// Least-squares power-law fit of one branch: ln P = b·ln V + ln a.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub max_residual: f64,
}

/// A branch fit; `fit` is absent for branches with fewer than three
/// distinct volumes (isochores in particular).
#[derive(Debug, Clone, Serialize)]
pub struct BranchFit {
    pub action: Action,
    pub fit: Option<PowerFit>,
}

/// Fits every branch of a cycle report.
pub fn fit_branches(report: &CycleReport) -> Vec<BranchFit> {
    report
        .branches
        .iter()
        .map(|branch| {
            let mut volumes: Vec<u64> = branch.points.iter().map(|p| p.0.to_bits()).collect();
            volumes.sort_unstable();
            volumes.dedup();
            let fit = (volumes.len() >= 3).then(|| power_fit(&branch.points));
            BranchFit { action: branch.action, fit }
        })
        .collect()
}

fn power_fit(points: &[(f64, f64)]) -> PowerFit {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let b = sxy / sxx;
    let ln_a = y_mean - b * x_mean;
    let max_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (b * x + ln_a)).abs())
        .fold(0.0, f64::max);
    PowerFit { exponent: b, prefactor: ln_a.exp(), max_residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Selector;
    use crate::policy::Policy;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A hand-scripted discretized Carnot rollout on the default grid.
    fn carnot_script() -> Vec<Action> {
        let mut actions = Vec::new();
        actions.extend(std::iter::repeat(Action::IsothermalCompressCold).take(19)); // 4.0 -> 2.1
        actions.extend(std::iter::repeat(Action::AdiabaticCompress).take(11)); // 2.1 -> 1.0
        actions.push(Action::IsochoricHeat);
        actions.extend(std::iter::repeat(Action::IsothermalExpandHot).take(9)); // 1.0 -> 1.9
        actions.extend(std::iter::repeat(Action::AdiabaticExpand).take(21)); // 1.9 -> 4.0
        actions.push(Action::IsochoricCool);
        actions
    }

    #[test]
    fn scripted_carnot_cycle_closes_near_carnot_efficiency() {
        let cfg = EngineConfig::default();
        let report = CycleReport::build(&cfg, 4.0, 300.0, &carnot_script()).unwrap();
        let eta = report.eta.unwrap();
        assert!((eta - 0.4).abs() < 0.02, "eta {eta}");
        assert!(eta < 0.4);
        report.verify_replay(&cfg, 1e-12).unwrap();
    }

    struct ScriptPolicy {
        cfg: EngineConfig,
        table: Vec<((u64, u64), usize)>,
    }

    impl ScriptPolicy {
        /// A lookup-table policy that replays a scripted cycle: maps each
        /// visited (V, T) to the scripted action's index.
        fn from_script(cfg: &EngineConfig, actions: &[Action]) -> ScriptPolicy {
            let start = engine::reset(cfg).unwrap();
            let traj = engine::replay(cfg, start, actions).unwrap();
            let mut table = Vec::new();
            for step in &traj.steps {
                let key = (step.state.v.to_bits(), step.state.t.to_bits());
                let idx = cfg.action_set.iter().position(|&a| a == step.action).unwrap();
                if !table.iter().any(|(k, _)| *k == key) {
                    table.push((key, idx));
                }
            }
            ScriptPolicy { cfg: cfg.clone(), table }
        }
    }

    impl Policy for ScriptPolicy {
        fn logits(&self, obs: &[f64]) -> Vec<f64> {
            // Invert the observation scaling to recover (V, T) exactly.
            let t = obs[0] * (self.cfg.t_hot - self.cfg.t_cold) + self.cfg.t_cold;
            let v = obs[1] * (self.cfg.v_max - self.cfg.v_min) + self.cfg.v_min;
            let mut logits = vec![0.0; self.cfg.action_set.len()];
            if let Some((_, idx)) = self
                .table
                .iter()
                .find(|((vb, tb), _)| {
                    (f64::from_bits(*vb) - v).abs() < 1e-9
                        && (f64::from_bits(*tb) - t).abs() < 1e-9
                })
            {
                logits[*idx] = 1.0;
            }
            logits
        }
    }

    #[test]
    fn scripted_carnot_policy_rollout_detects_the_cycle() {
        let cfg = EngineConfig::default();
        let policy = ScriptPolicy::from_script(&cfg, &carnot_script());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = engine::rollout(&cfg, &policy, Selector::Argmax, &mut rng).unwrap();
        let eta = traj.eta_best.unwrap();
        assert!((eta - 0.4).abs() < 0.02, "eta_best {eta}");
        let report = detect_cycle(&cfg, &traj).unwrap();
        assert_eq!(report.period, carnot_script().len());
        assert!((report.eta.unwrap() - 0.4).abs() < 0.02);
    }

    #[test]
    fn constant_isochoric_policy_yields_period_one() {
        let cfg = EngineConfig::default();
        struct Heat;
        impl Policy for Heat {
            fn logits(&self, _obs: &[f64]) -> Vec<f64> {
                let mut l = vec![0.0; 8];
                l[6] = 1.0;
                l
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = engine::rollout(&cfg, &Heat, Selector::Argmax, &mut rng).unwrap();
        let report = detect_cycle(&cfg, &traj).unwrap();
        assert_eq!(report.period, 1);
        assert!(report.eta.is_none());
    }

    #[test]
    fn monotone_compression_reaches_a_boundary_fixed_point() {
        let cfg = EngineConfig::default();
        struct Compress;
        impl Policy for Compress {
            fn logits(&self, _obs: &[f64]) -> Vec<f64> {
                let mut l = vec![0.0; 8];
                l[0] = 1.0; // AdiabaticCompress
                l
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = engine::rollout(&cfg, &Compress, Selector::Argmax, &mut rng).unwrap();
        let report = detect_cycle(&cfg, &traj).unwrap();
        assert_eq!(report.period, 1);
        assert!((report.start_v - cfg.v_min).abs() < 1e-12);
    }

    #[test]
    fn isothermal_branch_fits_inverse_volume_law() {
        let cfg = EngineConfig::default();
        let report = CycleReport::build(&cfg, 4.0, 300.0, &carnot_script()).unwrap();
        let fits = fit_branches(&report);
        for (branch, fit) in report.branches.iter().zip(&fits) {
            match branch.action {
                Action::IsothermalCompressCold | Action::IsothermalExpandHot => {
                    let f = fit.fit.as_ref().expect("isothermal branch fittable");
                    assert!(
                        (f.exponent + 1.0).abs() < 1e-6,
                        "{:?} exponent {}",
                        branch.action,
                        f.exponent
                    );
                }
                Action::AdiabaticCompress | Action::AdiabaticExpand => {
                    let f = fit.fit.as_ref().expect("adiabatic branch fittable");
                    assert!(
                        (f.exponent + 5.0 / 3.0).abs() < 1e-3,
                        "{:?} exponent {}",
                        branch.action,
                        f.exponent
                    );
                }
                Action::IsochoricHeat | Action::IsochoricCool => {
                    assert!(fit.fit.is_none(), "isochore must be unfittable");
                }
                _ => {}
            }
        }
    }

    #[test]
    fn best_cycle_prefers_the_efficient_segment() {
        // A trajectory that first closes a useless loop (heat/cool at fixed
        // volume), then runs a scripted Carnot cycle.
        let cfg = EngineConfig::default();
        let mut actions = vec![
            Action::IsochoricHeat,
            Action::IsochoricCool,
            Action::IsochoricHeat,
            Action::IsochoricCool,
        ];
        actions.extend(carnot_script());
        let start = engine::reset(&cfg).unwrap();
        let traj = engine::replay(&cfg, start, &actions).unwrap();
        let first = detect_cycle(&cfg, &traj).unwrap();
        assert_eq!(first.period, 2); // the heat/cool flip-flop
        let best = best_cycle_in(&cfg, &traj).unwrap();
        assert!((best.eta.unwrap() - 0.4).abs() < 0.02);
    }

    #[test]
    fn no_repeat_means_no_cycle() {
        let cfg = EngineConfig::default();
        let start = engine::reset(&cfg).unwrap();
        let actions = vec![Action::AdiabaticCompress; 5];
        let traj = engine::replay(&cfg, start, &actions).unwrap();
        assert!(detect_cycle(&cfg, &traj).is_none());
    }
}
