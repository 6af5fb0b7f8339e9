//! The divide-conquer-combine loop.
//!
//! Discovery finds SLPs from prior runs and from exploring proposals, the
//! allocator picks one active SLP per iteration for a round of local
//! inference, and at the end the per-SLP approximations are merged with
//! weights proportional to their evidence estimates.

use rand::Rng;
use serde::Serialize;

use crate::alloc::{select_slp, utilities, SlpStats, UtilityInputs};
use crate::config::DccConfig;
use crate::dist::lse;
use crate::error::{DccError, Result};
use crate::interp::{run_prior, Program, DEFAULT_N_THRESH};
use crate::local::{estimate_pi_k, local_round, pimais_round, propose_at};
use crate::measure::{EmpiricalMeasure, Normalization, Particle};
use crate::registry::{add_stats, Registry, RegistryParams, Status, WarmUp};
use crate::rng::stream;
use crate::trace::{on_path, Path};

/// One line of the iteration log.
#[derive(Clone, Debug, Serialize)]
pub struct IterLog {
    pub iter: u64,
    pub slp_id: usize,
    pub path_digest: String,
    #[serde(rename = "log_Zk")]
    pub log_zk: f64,
    #[serde(rename = "log_Z_overall")]
    pub log_z_overall: f64,
    #[serde(rename = "S_k")]
    pub s_k: u64,
    pub utility: f64,
    pub executions: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utilities: Option<Vec<(usize, f64)>>,
}

/// Final per-SLP state.
#[derive(Clone, Debug, Serialize)]
pub struct SlpEstimate {
    pub id: usize,
    pub path: Path,
    pub log_z: f64,
    pub c: u64,
    pub s: u64,
    pub status: Status,
}

#[derive(Clone, Debug)]
pub struct DccResult<O> {
    pub slps: Vec<SlpEstimate>,
    /// Evidence estimate of the overflow SLP, `-inf` if it never got mass.
    pub overflow_log_z: f64,
    pub log_z: f64,
    pub measure: EmpiricalMeasure<O>,
    pub log: Vec<IterLog>,
    pub config: DccConfig,
    pub executions: u64,
    pub iterations: u64,
}

impl<O> DccResult<O> {
    /// Structured summary. Particle values and weights are included so two
    /// runs can be compared byte for byte.
    pub fn to_json(&self) -> serde_json::Value {
        let particles: Vec<_> = self.measure.particles().iter().map(|p| (p.path.digest(), &p.values, p.weight)).collect();
        serde_json::json!({
            "log_z": self.log_z,
            "overflow_log_z": self.overflow_log_z,
            "executions": self.executions,
            "iterations": self.iterations,
            "config": self.config,
            "slps": self.slps,
            "particles": particles,
        })
    }

    /// The iteration log as JSON lines.
    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|l| serde_json::to_string(l).expect("log lines serialise") + "\n").collect()
    }
}

/// Merge per-SLP measures with weights `Z_k / sum Z`. Records with zero
/// evidence contribute nothing.
pub fn combine<O>(records: Vec<(f64, EmpiricalMeasure<O>)>) -> Result<(f64, EmpiricalMeasure<O>)> {
    let log_z = lse(records.iter().map(|(lz, _)| *lz));
    if records.is_empty() || log_z == f64::NEG_INFINITY {
        return Err(DccError::NoMass);
    }
    let mut particles = Vec::new();
    for (lz, m) in records {
        if lz == f64::NEG_INFINITY {
            continue;
        }
        let scale = (lz - log_z).exp();
        particles.extend(m.into_particles().into_iter().map(|mut p| {
            p.weight *= scale;
            p
        }));
    }
    Ok((log_z, EmpiricalMeasure::from_normalized(particles, Normalization::SelfNormalized)))
}

/// Posterior probability that the path satisfies `pred`.
pub fn path_posterior<O>(result: &DccResult<O>, pred: impl Fn(&Path) -> bool) -> f64 {
    let regular: f64 = result.slps.iter().filter(|s| pred(&s.path)).map(|s| (s.log_z - result.log_z).exp()).sum();
    let overflow: f64 = if result.overflow_log_z > f64::NEG_INFINITY {
        let share = (result.overflow_log_z - result.log_z).exp();
        let ids: Vec<&Path> = result.slps.iter().map(|s| &s.path).collect();
        let of_mass: f64 = result
            .measure
            .particles()
            .iter()
            .filter(|p| !ids.contains(&&p.path) && pred(&p.path))
            .map(|p| p.weight)
            .sum();
        of_mass.min(share)
    } else {
        0.0
    };
    regular + overflow
}

/// Mean of `f` under the combined posterior.
pub fn expectation<O>(result: &DccResult<O>, f: impl FnMut(&Particle<O>) -> f64) -> f64 {
    result.measure.expectation(f)
}

/// Log pointwise predictive density of `n_test` held-out points:
/// `sum_n log sum_p w_p exp(log_pred(n, p))`.
pub fn lppd<O>(measure: &EmpiricalMeasure<O>, n_test: usize, log_pred: impl Fn(usize, &Particle<O>) -> f64) -> Result<f64> {
    if n_test == 0 {
        return Err(DccError::Contract("empty test set".into()));
    }
    if measure.is_empty() {
        return Err(DccError::EmptyMeasure);
    }
    let log_w: Vec<f64> = measure.particles().iter().map(|p| p.weight.ln()).collect();
    Ok((0..n_test)
        .map(|n| lse(measure.particles().iter().zip(&log_w).map(|(p, lw)| lw + log_pred(n, p))))
        .sum())
}

fn utility_inputs<O>(reg: &Registry<O>, cfg: &DccConfig) -> UtilityInputs {
    let mut log_w_th = f64::NEG_INFINITY;
    for r in reg.records() {
        if let Some(z) = r.zstats() {
            log_w_th = log_w_th.max(z.max_log_w());
        }
    }
    let slps = reg
        .active()
        .iter()
        .map(|&id| {
            let r = reg.record(id);
            let z = r.zstats().expect("active records have chains");
            SlpStats { id, s: r.s, log_z: z.log_z(), log_var: z.log_var().unwrap_or(f64::NEG_INFINITY), psi: z.psi() }
        })
        .collect();
    UtilityInputs { slps, log_w_th, params: cfg.alloc }
}

/// Local round plus importance round on record `id`.
fn allocate<P: Program>(reg: &mut Registry<P::Output>, id: usize, program: &P, cfg: &DccConfig) -> Result<u64>
where
    P::Output: Clone,
{
    let r = reg.record_mut(id);
    let path = r.path.clone();
    let state = r.local.as_mut().expect("allocated records have chains");
    let out = local_round(program, &path, state, &cfg.local, cfg.sweeps)?;
    let mut stats = out.stats;
    stats.executions += pimais_round(program, &path, state, &cfg.local)?;
    r.best_log_gamma = r.best_log_gamma.max(state.best_log_gamma);
    for t in out.off_path {
        reg.record_proposal(t);
    }
    Ok(stats.executions)
}

/// Exploring proposals from chains of record `id`; any proposal that leaves
/// the SLP is recorded whether or not it would be accepted.
fn explore<P: Program>(reg: &mut Registry<P::Output>, id: usize, program: &P, cfg: &DccConfig, rng: &mut crate::rng::Stream) -> Result<u64>
where
    P::Output: Clone,
{
    let r = reg.record(id);
    let path = r.path.clone();
    if path.is_empty() || cfg.global_fanout == 0 {
        return Ok(0);
    }
    let split: Vec<usize> = (0..path.len()).filter(|&i| path.addresses()[i].split_value.is_some()).collect();
    let chains = &r.local.as_ref().expect("explored records have chains").chains;
    let n = chains.len();
    let start = rng.random_range(0..n);
    let picks: Vec<_> = (0..cfg.global_fanout).map(|j| chains[(start + j) % n].trace.clone()).collect();
    let mut used = 0;
    for trace in picks {
        let pos = if !split.is_empty() && rng.random::<f64>() < cfg.global_split_bias {
            split[rng.random_range(0..split.len())]
        } else {
            rng.random_range(0..path.len())
        };
        used += 1;
        if let Some(p) = propose_at(program, &trace, pos, &cfg.global_kernel, cfg.global_kernel.rw_scale, rng)? {
            if !on_path(&p.trace, &path) {
                reg.record_proposal(p.trace);
            }
        }
    }
    Ok(used)
}

/// Run the full algorithm until the execution budget is spent.
pub fn run_dcc<P: Program>(program: &P, cfg: &DccConfig) -> Result<DccResult<P::Output>>
where
    P::Output: Clone,
{
    cfg.validate()?;
    let mut discovery_rng = stream(cfg.seed, 0);
    let mut explore_rng = stream(cfg.seed, 1);
    let mut refresh_rng = stream(cfg.seed, 2);
    let n_thresh = cfg.n_thresh.or(program.n_thresh()).unwrap_or(DEFAULT_N_THRESH);
    let params = RegistryParams { c0_base: cfg.c0_base, active_cap: cfg.active_cap, n_thresh, evict_by: cfg.evict_by };
    let mut reg = Registry::init_discovery(program, params, cfg.t0, &mut discovery_rng)?;
    let mut used = cfg.t0 as u64;
    let batch = cfg.local.n_chains * cfg.local.m;
    if reg.overflow().is_some() {
        used += reg.overflow_round(program, batch, &mut refresh_rng)?;
    }
    let warm = WarmUp { local: &cfg.local, t_init: cfg.t_init, seed: cfg.seed };
    let mut log = Vec::new();
    let mut t: u64 = 0;
    used += reg.promote_eligible(program, t, warm)?.stats.executions;
    while used < cfg.budget && cfg.max_iters.is_none_or(|m| t < m) {
        if reg.active().is_empty() {
            reg.record_proposal(run_prior(program, &mut discovery_rng)?);
            used += 1;
            used += reg.promote_eligible(program, t, warm)?.stats.executions;
            continue;
        }
        let inputs = utility_inputs(&reg, cfg);
        let us = utilities(&inputs)?;
        let id = select_slp(&inputs)?;
        let utility = us[inputs.slps.iter().position(|s| s.id == id).expect("selected id is active")];
        used += allocate(&mut reg, id, program, cfg)?;
        reg.record_mut(id).s += 1;
        used += explore(&mut reg, id, program, cfg, &mut explore_rng)?;

        if refresh_rng.random::<f64>() < cfg.refresh_prob {
            let pool = reg.non_active();
            let slots = pool.len() + reg.overflow().is_some() as usize;
            if slots > 0 {
                let pick = refresh_rng.random_range(0..slots);
                if pick == pool.len() {
                    used += reg.overflow_round(program, batch, &mut refresh_rng)?;
                } else if reg.record(pool[pick]).local.is_none() {
                    let mut stats = Default::default();
                    add_stats(&mut stats, reg.initialise(pool[pick], program, warm)?);
                    used += stats.executions;
                } else {
                    used += allocate(&mut reg, pool[pick], program, cfg)?;
                }
            }
        }

        let r = reg.record(id);
        let overall = lse(reg.records().iter().map(|r| r.log_z()).chain(reg.overflow().map(|o| o.zstats.log_z())));
        log.push(IterLog {
            iter: t,
            slp_id: id,
            path_digest: r.path.digest(),
            log_zk: r.log_z(),
            log_z_overall: overall,
            s_k: r.s,
            utility,
            executions: used,
            utilities: cfg.log_utilities.then(|| inputs.slps.iter().map(|s| s.id).zip(us.iter().copied()).collect()),
        });
        t += 1;
        used += reg.promote_eligible(program, t, warm)?.stats.executions;
    }
    finish(reg, cfg, log, used, t)
}

fn finish<O: Clone>(reg: Registry<O>, cfg: &DccConfig, log: Vec<IterLog>, executions: u64, iterations: u64) -> Result<DccResult<O>> {
    if reg.records().is_empty() && reg.overflow().is_none() {
        return Err(DccError::NoSlps("no prior execution produced a trace".into()));
    }
    let mut parts = Vec::new();
    for r in reg.records() {
        let Some(state) = &r.local else { continue };
        let lz = state.zstats.log_z();
        if lz == f64::NEG_INFINITY {
            continue;
        }
        let measure = match estimate_pi_k(state, cfg.local.mode) {
            Ok(m) => m,
            // Fall back to the current chain states when nothing was retained.
            Err(DccError::EmptyMeasure) | Err(DccError::NoMass) => {
                EmpiricalMeasure::unweighted(state.chains.iter().map(|c| Particle::from_trace(&c.trace)).map(|mut p| {
                    p.path = r.path.clone();
                    p
                }).collect())?
            }
            Err(e) => return Err(e),
        };
        parts.push((lz, measure));
    }
    let overflow_log_z = reg.overflow().map_or(f64::NEG_INFINITY, |o| o.zstats.log_z());
    if overflow_log_z > f64::NEG_INFINITY {
        let of = reg.overflow().expect("checked");
        parts.push((overflow_log_z, EmpiricalMeasure::from_log_weights(of.particles.clone())?));
    }
    if parts.is_empty() {
        let found = reg.records().len();
        return Err(DccError::NoSlps(format!("{found} SLPs discovered but none has a positive evidence estimate")));
    }
    let (log_z, measure) = combine(parts)?;
    let slps = reg
        .records()
        .iter()
        .map(|r| SlpEstimate { id: r.id, path: r.path.clone(), log_z: r.log_z(), c: r.c, s: r.s, status: r.status })
        .collect();
    Ok(DccResult { slps, overflow_log_z, log_z, measure, log, config: cfg.clone(), executions, iterations })
}
