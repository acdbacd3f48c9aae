//! Periodic probes: train plain DQN, and at every epoch boundary re-solve a
//! copy of the last layer for each regularizer setting, evaluate it, and
//! carry on training from the untouched weights.

use crate::dqn::evaluate_record;
use crate::error::{Error, Result};
use crate::srl::{RegularizerKind, SrlConfig, SrlKind};

use super::{apply_ls_update, ls_dataset, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicConfig {
    pub run: RunConfig,
    pub kind: SrlKind,
    pub regularizers: Vec<RegularizerKind>,
    pub lambdas: Vec<f64>,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            kind: SrlKind::Fqi,
            regularizers: vec![RegularizerKind::BayesianPrior],
            lambdas: vec![1e-2, 1.0, 1e2],
        }
    }
}

impl PeriodicConfig {
    /// One probe per (regularizer, λ); `none` ignores λ and appears once.
    pub fn probes(&self) -> Vec<(RegularizerKind, f64)> {
        let mut out = Vec::new();
        for &reg in &self.regularizers {
            if reg == RegularizerKind::None {
                out.push((reg, 0.0));
            } else {
                out.extend(self.lambdas.iter().map(|&l| (reg, l)));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        if self.probes().is_empty() {
            return Err(Error::Config(
                "periodic evaluation needs at least one probe".into(),
            ));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(
                "periodic.lambdas must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Mean evaluation return per epoch: the DQN baseline, then one column per
/// probe. A failed solve shows up as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicTable {
    pub columns: Vec<String>,
    pub epochs: Vec<usize>,
    pub steps: Vec<u64>,
    pub values: Vec<Vec<f64>>,
}

pub(crate) fn probe_column(reg: RegularizerKind, lambda: f64) -> String {
    match reg {
        RegularizerKind::None => "none".to_string(),
        r => format!("{}_{}", r.name(), lambda),
    }
}

/// Runs the probe protocol; epochs fall every `run.n_drl` steps.
pub fn periodic_eval_run(cfg: &PeriodicConfig) -> Result<PeriodicTable> {
    cfg.validate()?;
    let run = &cfg.run;
    let probes = cfg.probes();
    let mut agent = run.build_agent()?;
    let eval_env = agent.env().clone();
    let mut columns = vec!["dqn".to_string()];
    columns.extend(probes.iter().map(|&(r, l)| probe_column(r, l)));
    let mut table = PeriodicTable {
        columns,
        epochs: Vec::new(),
        steps: Vec::new(),
        values: Vec::new(),
    };
    let mut epoch = 0;
    while agent.steps() < run.total_steps {
        agent.step()?;
        let steps = agent.steps();
        if steps % run.n_drl != 0 {
            continue;
        }
        epoch += 1;
        let eval = |net: &_| {
            evaluate_record(
                net,
                &eval_env,
                run.eval_episodes,
                run.dqn.eval_epsilon,
                run.seed,
                epoch,
                steps,
            )
            .map(|r| r.mean_return)
        };
        let mut row = vec![eval(&agent.net)?];
        let data = ls_dataset(run, &agent, run.srl.n_srl, epoch as u64)?;
        for &(regularizer, lambda) in &probes {
            let srl = SrlConfig {
                kind: cfg.kind,
                regularizer,
                lambda,
                ..run.srl.clone()
            };
            let mut probe = agent.net.clone();
            let diag =
                apply_ls_update(&mut probe, &data, &srl, run.dqn.gamma, false, epoch, steps)?;
            row.push(match diag.status {
                super::UpdateStatus::Applied => eval(&probe)?,
                super::UpdateStatus::Skipped => f64::NAN,
            });
        }
        table.epochs.push(epoch);
        table.steps.push(steps);
        table.values.push(row);
    }
    Ok(table)
}
