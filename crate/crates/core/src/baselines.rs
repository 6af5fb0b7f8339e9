//! Reference engines: importance sampling from the prior and a single
//! global Metropolis-Hastings chain over whole traces.

use rand::Rng;
use serde::Serialize;

use crate::dist::lse;
use crate::error::{DccError, Result};
use crate::interp::{run_prior, KernelParams, Program};
use crate::local::propose_at;
use crate::measure::{EmpiricalMeasure, Particle};
use crate::rng::Stream;
use crate::trace::{Path, Trace};

#[derive(Clone, Debug)]
pub struct BaselineResult<O> {
    pub measure: EmpiricalMeasure<O>,
    pub log_z: Option<f64>,
    /// `(executions, log Z)` at regular checkpoints, importance sampling only.
    pub trajectory: Vec<(u64, f64)>,
    /// Index into `paths` of the state after every step, chain only.
    pub visits: Vec<u32>,
    pub paths: Vec<Path>,
    pub accepted: u64,
    pub executions: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BaselineSummary {
    pub log_z: Option<f64>,
    pub accepted: u64,
    pub executions: u64,
    pub distinct_paths: usize,
    pub trajectory: Vec<(u64, f64)>,
}

impl<O> BaselineResult<O> {
    pub fn summary(&self) -> BaselineSummary {
        BaselineSummary {
            log_z: self.log_z,
            accepted: self.accepted,
            executions: self.executions,
            distinct_paths: self.paths.len(),
            trajectory: self.trajectory.clone(),
        }
    }

    /// Probability of paths satisfying `pred` under the returned measure.
    pub fn path_probability(&self, pred: impl Fn(&Path) -> bool) -> f64 {
        self.measure.expectation(|p| pred(&p.path) as u8 as f64)
    }
}

/// `budget` prior executions weighted by their likelihood.
pub fn run_is<P: Program>(program: &P, budget: u64, rng: &mut Stream) -> Result<BaselineResult<P::Output>>
where
    P::Output: Clone,
{
    if budget == 0 {
        return Err(DccError::Contract("budget must be positive".into()));
    }
    let every = (budget / 100).max(1);
    let mut items = Vec::new();
    let mut log_sum = f64::NEG_INFINITY;
    let mut trajectory = Vec::new();
    let mut paths = std::collections::HashSet::new();
    for i in 1..=budget {
        let t = run_prior(program, rng)?;
        let lw = t.log_likelihood();
        log_sum = lse([log_sum, lw].into_iter());
        paths.insert(t.path());
        if lw > f64::NEG_INFINITY {
            items.push((Particle::from_trace(&t), lw));
        }
        if i % every == 0 || i == budget {
            trajectory.push((i, log_sum - (i as f64).ln()));
        }
    }
    let log_z = log_sum - (budget as f64).ln();
    let mut paths: Vec<Path> = paths.into_iter().collect();
    paths.sort();
    Ok(BaselineResult {
        measure: EmpiricalMeasure::from_log_weights(items)?,
        log_z: Some(log_z),
        trajectory,
        visits: Vec::new(),
        paths,
        accepted: 0,
        executions: budget,
    })
}

/// Single-site Metropolis-Hastings over whole traces, started from a prior
/// draw (or `init`). Every site, split-marked or not, can be chosen, so the
/// chain may change path; repeated states are stored once with a count.
pub fn run_rmh<P: Program>(
    program: &P,
    budget: u64,
    kernel: &KernelParams,
    init: Option<Trace<P::Output>>,
    rng: &mut Stream,
) -> Result<BaselineResult<P::Output>>
where
    P::Output: Clone,
{
    if budget == 0 {
        return Err(DccError::Contract("budget must be positive".into()));
    }
    let mut used = 0;
    let mut current = match init {
        Some(t) => t,
        None => {
            used += 1;
            run_prior(program, rng)?
        }
    };
    let mut paths: Vec<Path> = vec![current.path()];
    let mut path_id: u32 = 0;
    let mut runs: Vec<(Particle<P::Output>, u64)> = vec![(Particle::from_trace(&current), 0)];
    let mut visits = Vec::new();
    let mut accepted = 0;
    while used < budget {
        let n = current.draws().len();
        if n > 0 {
            let i = rng.random_range(0..n);
            used += 1;
            let proposed = propose_at(program, &current, i, kernel, kernel.rw_scale, rng)?;
            let u: f64 = rng.random();
            if let Some(p) = proposed {
                let n_new = p.trace.draws().len();
                let log_alpha = p.trace.log_gamma() - current.log_gamma()
                    + p.log_correction
                    + (n as f64).ln()
                    - (n_new as f64).ln();
                if p.trace.log_gamma() > f64::NEG_INFINITY && u.ln() < log_alpha {
                    accepted += 1;
                    let path = p.trace.path();
                    if path != paths[path_id as usize] {
                        path_id = match paths.iter().position(|q| *q == path) {
                            Some(j) => j as u32,
                            None => {
                                paths.push(path);
                                (paths.len() - 1) as u32
                            }
                        };
                    }
                    current = p.trace;
                    runs.push((Particle::from_trace(&current), 0));
                }
            }
        } else {
            used += 1;
        }
        runs.last_mut().expect("non-empty").1 += 1;
        visits.push(path_id);
    }
    Ok(BaselineResult {
        measure: EmpiricalMeasure::from_counts(runs)?,
        log_z: None,
        trajectory: Vec::new(),
        visits,
        paths,
        accepted,
        executions: used,
    })
}
