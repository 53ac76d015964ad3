//! Flat key=value run configuration.
//!
//! Config files hold one `key=value` pair per line with `#` comments; the
//! CLI applies them in order and then any `--set key=value` overrides. The
//! canonical string of the resolved settings is hashed into every output
//! file header so runs are identifiable.

use std::path::Path;

use crate::engine::{Action, EngineConfig};
use crate::evolve::{EvoConfig, FitnessMetric};
use crate::io;
use crate::ppo::PpoConfig;
use crate::{Error, Result};

/// All tunable settings for a run. Budgets default to the work/heat of one
/// ideal Carnot cycle on the configured geometry (heat scaled by five)
/// unless set explicitly.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub engine: EngineConfig,
    pub evo: EvoConfig,
    pub ppo: PpoConfig,
    w0_explicit: bool,
    q0_explicit: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            engine: EngineConfig::default(),
            evo: EvoConfig::default(),
            ppo: PpoConfig::default(),
            w0_explicit: false,
            q0_explicit: false,
        }
    }
}

const KEYS: &[&str] = &[
    "t_hot",
    "t_cold",
    "nkb",
    "v_min",
    "v_max",
    "dv",
    "k_max",
    "action_set",
    "k_loss",
    "budgets_enabled",
    "w0_budget",
    "q0_budget",
    "n_hidden",
    "pop_size",
    "n_survivors",
    "epsilon",
    "n_generations",
    "fitness",
    "lr",
    "gamma",
    "clip_eps",
    "c1",
    "c2",
    "batch_size",
    "total_steps",
    "gae_lambda",
    "epochs_per_batch",
    "dense_reward",
];

fn parse_action_set(value: &str) -> Result<Vec<Action>> {
    let preset = match value {
        "full" => Some(Action::CANONICAL.to_vec()),
        "no_adiabats" => Some(vec![
            Action::IsothermalCompressHot,
            Action::IsothermalExpandHot,
            Action::IsothermalCompressCold,
            Action::IsothermalExpandCold,
            Action::IsochoricHeat,
            Action::IsochoricCool,
        ]),
        "no_isothermals" => Some(vec![
            Action::AdiabaticCompress,
            Action::AdiabaticExpand,
            Action::IsochoricHeat,
            Action::IsochoricCool,
        ]),
        // The lossy variant: isotherms and isochores plus the lossy pair.
        "irreversible" => Some(vec![
            Action::IsothermalCompressHot,
            Action::IsothermalExpandHot,
            Action::IsothermalCompressCold,
            Action::IsothermalExpandCold,
            Action::IsochoricHeat,
            Action::IsochoricCool,
            Action::IrrevCompress,
            Action::IrrevExpand,
        ]),
        _ => None,
    };
    if let Some(set) = preset {
        return Ok(set);
    }
    let mut set = Vec::new();
    for name in value.split(',') {
        let action = Action::parse(name.trim())?;
        if !set.contains(&action) {
            set.push(action);
        }
    }
    if set.is_empty() {
        return Err(Error::usage("action_set must not be empty"));
    }
    Ok(set)
}

fn action_set_string(set: &[Action]) -> String {
    set.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")
}

impl RunSettings {
    /// Applies one `key=value` pair. Unknown keys list the valid ones.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad_num =
            |k: &str, v: &str| Error::usage(format!("invalid value `{v}` for key `{k}`"));
        let f = |v: &str, k: &str| v.parse::<f64>().map_err(|_| bad_num(k, v));
        let u = |v: &str, k: &str| v.parse::<usize>().map_err(|_| bad_num(k, v));
        let b = |v: &str, k: &str| v.parse::<bool>().map_err(|_| bad_num(k, v));
        match key {
            "t_hot" => self.engine.t_hot = f(value, key)?,
            "t_cold" => self.engine.t_cold = f(value, key)?,
            "nkb" => self.engine.nkb = f(value, key)?,
            "v_min" => self.engine.v_min = f(value, key)?,
            "v_max" => self.engine.v_max = f(value, key)?,
            "dv" => self.engine.dv = f(value, key)?,
            "k_max" => self.engine.k_max = u(value, key)?,
            "action_set" => self.engine.action_set = parse_action_set(value)?,
            "k_loss" => self.engine.k_loss = f(value, key)?,
            "budgets_enabled" => self.engine.budgets_enabled = b(value, key)?,
            "w0_budget" => {
                self.engine.w0_budget = f(value, key)?;
                self.w0_explicit = true;
            }
            "q0_budget" => {
                self.engine.q0_budget = f(value, key)?;
                self.q0_explicit = true;
            }
            "n_hidden" => {
                let n = u(value, key)?;
                self.evo.n_hidden = n;
                self.ppo.n_hidden = n;
            }
            "pop_size" => self.evo.pop_size = u(value, key)?,
            "n_survivors" => self.evo.n_survivors = u(value, key)?,
            "epsilon" => self.evo.epsilon = f(value, key)?,
            "n_generations" => self.evo.n_generations = u(value, key)?,
            "fitness" => {
                self.evo.fitness = match value {
                    "max_eta" => FitnessMetric::MaxEta,
                    "terminal_dw" => FitnessMetric::TerminalDeltaW,
                    _ => {
                        return Err(Error::usage(format!(
                            "invalid fitness `{value}` (expected max_eta|terminal_dw)"
                        )))
                    }
                }
            }
            "lr" => self.ppo.lr = f(value, key)?,
            "gamma" => self.ppo.gamma = f(value, key)?,
            "clip_eps" => self.ppo.clip_eps = f(value, key)?,
            "c1" => self.ppo.c1 = f(value, key)?,
            "c2" => self.ppo.c2 = f(value, key)?,
            "batch_size" => self.ppo.batch_size = u(value, key)?,
            "total_steps" => self.ppo.total_steps = u(value, key)?,
            "gae_lambda" => self.ppo.gae_lambda = f(value, key)?,
            "epochs_per_batch" => self.ppo.epochs_per_batch = u(value, key)?,
            "dense_reward" => self.ppo.dense_reward = b(value, key)?,
            _ => {
                return Err(Error::usage(format!(
                    "unknown key `{key}`; valid keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Loads a config file: one `key=value` per line, `#` comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::usage(format!(
                    "{}:{}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Recomputes derived defaults after all overrides are in.
    pub fn finalize(&mut self) -> Result<()> {
        if !self.w0_explicit {
            self.engine.w0_budget = self.engine.analytic_carnot_work();
        }
        if !self.q0_explicit {
            self.engine.q0_budget = 5.0 * self.engine.analytic_carnot_heat();
        }
        self.engine.validate()
    }

    /// Canonical one-line-per-key rendering of the resolved settings.
    pub fn canonical_string(&self) -> String {
        let e = &self.engine;
        let v = &self.evo;
        let p = &self.ppo;
        [
            format!("t_hot={}", e.t_hot),
            format!("t_cold={}", e.t_cold),
            format!("nkb={}", e.nkb),
            format!("v_min={}", e.v_min),
            format!("v_max={}", e.v_max),
            format!("dv={}", e.dv),
            format!("k_max={}", e.k_max),
            format!("action_set={}", action_set_string(&e.action_set)),
            format!("k_loss={}", e.k_loss),
            format!("budgets_enabled={}", e.budgets_enabled),
            format!("w0_budget={}", e.w0_budget),
            format!("q0_budget={}", e.q0_budget),
            format!("n_hidden={}", v.n_hidden),
            format!("pop_size={}", v.pop_size),
            format!("n_survivors={}", v.n_survivors),
            format!("epsilon={}", v.epsilon),
            format!("n_generations={}", v.n_generations),
            format!(
                "fitness={}",
                match v.fitness {
                    FitnessMetric::MaxEta => "max_eta",
                    FitnessMetric::TerminalDeltaW => "terminal_dw",
                }
            ),
            format!("lr={}", p.lr),
            format!("gamma={}", p.gamma),
            format!("clip_eps={}", p.clip_eps),
            format!("c1={}", p.c1),
            format!("c2={}", p.c2),
            format!("batch_size={}", p.batch_size),
            format!("total_steps={}", p.total_steps),
            format!("gae_lambda={}", p.gae_lambda),
            format!("epochs_per_batch={}", p.epochs_per_batch),
            format!("dense_reward={}", p.dense_reward),
        ]
        .join("\n")
    }

    pub fn config_hash(&self) -> String {
        io::fnv1a_hex(&self.canonical_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_lists_valid_keys() {
        let mut s = RunSettings::default();
        let err = s.apply_kv("not_a_key", "1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key"));
        assert!(msg.contains("t_hot"));
    }

    #[test]
    fn presets_select_expected_action_sets() {
        let full = parse_action_set("full").unwrap();
        assert_eq!(full.len(), 8);
        let stirlingish = parse_action_set("no_adiabats").unwrap();
        assert_eq!(stirlingish.len(), 6);
        assert!(!stirlingish.contains(&Action::AdiabaticCompress));
        let ottoish = parse_action_set("no_isothermals").unwrap();
        assert_eq!(ottoish.len(), 4);
        let irrev = parse_action_set("irreversible").unwrap();
        assert_eq!(irrev.len(), 8);
        assert!(irrev.contains(&Action::IrrevExpand));
    }

    #[test]
    fn explicit_action_list_parses() {
        let set = parse_action_set("isochoric_heat, isochoric_cool").unwrap();
        assert_eq!(set, vec![Action::IsochoricHeat, Action::IsochoricCool]);
        assert!(parse_action_set("isochoric_warm").is_err());
    }

    #[test]
    fn budgets_follow_geometry_unless_explicit() {
        let mut s = RunSettings::default();
        s.apply_kv("budgets_enabled", "true").unwrap();
        s.apply_kv("t_hot", "600").unwrap();
        s.finalize().unwrap();
        assert!((s.engine.w0_budget - s.engine.analytic_carnot_work()).abs() < 1e-12);

        let mut s2 = RunSettings::default();
        s2.apply_kv("budgets_enabled", "true").unwrap();
        s2.apply_kv("w0_budget", "99").unwrap();
        s2.finalize().unwrap();
        assert_eq!(s2.engine.w0_budget, 99.0);
    }

    #[test]
    fn config_file_round_trips_through_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nt_hot = 550\npop_size=40\n").unwrap();
        let mut a = RunSettings::default();
        a.apply_file(&path).unwrap();
        a.finalize().unwrap();
        let mut b = RunSettings::default();
        b.apply_kv("t_hot", "550").unwrap();
        b.apply_kv("pop_size", "40").unwrap();
        b.finalize().unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        assert_eq!(a.engine.t_hot, 550.0);
    }
}
