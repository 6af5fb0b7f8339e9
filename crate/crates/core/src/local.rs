//! Inference inside one SLP: parallel single-site Metropolis-within-Gibbs
//! chains for the posterior, and chain-centred adaptive importance sampling
//! for the marginal likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{lse, SupportClass, TruncatedGaussian, LN_SQRT_2PI};
use crate::error::{DccError, Result};
use crate::interp::{execute, CenteredHandler, DrawStore, Halt, KernelParams, Program, ReplayHandler, Target};
use crate::measure::{EmpiricalMeasure, Particle, PiMode};
use crate::rng::{child_stream, Stream};
use crate::trace::{on_path, Path, Trace};
use crate::zstats::ZStats;

/// Target acceptance rate of the optional random-walk scale adaptation.
const TARGET_ACCEPT: f64 = 0.44;

/// Knobs of the per-SLP inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalParams {
    pub n_chains: usize,
    /// Importance samples per chain per round.
    pub m: usize,
    pub kernel: KernelParams,
    /// Robbins-Monro adaptation of each site's random-walk scale.
    pub rw_adapt: bool,
    /// Scale of the Gaussian importance components.
    pub pimais_scale: f64,
    /// Set the component scale per site from the within-chain spread of the
    /// samples gathered so far; `pimais_scale` is used until enough exist.
    pub pimais_adapt: bool,
    pub mode: PiMode,
    /// Bound on the retained samples per SLP; beyond it the store is thinned.
    pub retain_cap: usize,
}

impl Default for LocalParams {
    fn default() -> Self {
        LocalParams {
            n_chains: 10,
            m: 10,
            kernel: KernelParams::default(),
            rw_adapt: false,
            pimais_scale: 1.0,
            pimais_adapt: false,
            mode: PiMode::Mcmc,
            retain_cap: 20_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn var(&self) -> Option<f64> {
        (self.n >= 2).then(|| self.m2 / (self.n - 1) as f64)
    }
}

/// One MCMC chain confined to an SLP.
#[derive(Clone, Debug)]
pub struct ChainState<O> {
    pub trace: Trace<O>,
    /// Random-walk scale per path position.
    pub scales: Vec<f64>,
    walks: Vec<(u64, u64)>,
    moments: Vec<Welford>,
    rng: Stream,
}

impl<O: Clone> ChainState<O> {
    pub fn new(trace: Trace<O>, rw_scale: f64, rng: Stream) -> Self {
        let n = trace.draws().len();
        ChainState { trace, scales: vec![rw_scale; n], walks: vec![(0, 0); n], moments: vec![Welford::default(); n], rng }
    }

    pub fn log_gamma(&self) -> f64 {
        self.trace.log_gamma()
    }

    pub fn values(&self) -> Vec<f64> {
        self.trace.values()
    }

    fn record_moments(&mut self) {
        for (w, d) in self.moments.iter_mut().zip(self.trace.draws()) {
            w.push(d.value);
        }
    }
}

#[derive(Debug)]
pub struct StepOutcome<O> {
    pub accepted: bool,
    /// A proposal that left the SLP, for discovery.
    pub off_path: Option<Trace<O>>,
    pub executions: u64,
}

/// Path positions a local move may change: everything except split-marked
/// draws, which would leave the SLP by construction.
pub fn eligible_positions(path: &Path) -> Vec<usize> {
    path.addresses().iter().enumerate().filter(|(_, a)| a.split_value.is_none()).map(|(i, _)| i).collect()
}

pub(crate) struct Proposed<O> {
    pub trace: Trace<O>,
    /// Every term of the log acceptance ratio except the change in log joint.
    pub log_correction: f64,
    pub used_walk: bool,
}

/// Propose a new value for `position` and re-execute, replaying every other
/// draw. Used by both the local chains and the global exploration step.
pub(crate) fn propose_at<P: Program>(
    program: &P,
    current: &Trace<P::Output>,
    position: usize,
    kernel: &KernelParams,
    scale: f64,
    rng: &mut Stream,
) -> Result<Option<Proposed<P::Output>>> {
    let store = DrawStore::from_trace(current);
    let key = current.draws()[position].address.key();
    let mut handler = ReplayHandler::new(&store, Some(Target { key, kernel, scale }));
    match execute(program, &mut handler, rng) {
        Ok(trace) => {
            let proposal = handler.proposal.expect("target site is always reached on replay");
            let log_correction = proposal.log_q_ratio + handler.unused_log_prior() - handler.fresh_log_prior;
            Ok(Some(Proposed { trace, log_correction, used_walk: proposal.used_walk }))
        }
        Err(Halt::Reject) => Ok(None),
        Err(Halt::OffPath) => Err(DccError::Contract("replay cannot depart a path".into())),
        Err(Halt::Fail(e)) => Err(e),
    }
}

/// One single-site update of `chain` on `path`. With `greedy`, the proposal
/// is accepted only if it strictly increases the log joint.
pub fn local_mh_step<P: Program>(
    program: &P,
    path: &Path,
    chain: &mut ChainState<P::Output>,
    eligible: &[usize],
    kernel: &KernelParams,
    greedy: bool,
    rw_adapt: bool,
) -> Result<StepOutcome<P::Output>> {
    if eligible.is_empty() {
        return Ok(StepOutcome { accepted: false, off_path: None, executions: 0 });
    }
    let i = eligible[chain.rng.random_range(0..eligible.len())];
    let scale = chain.scales[i];
    let proposed = propose_at(program, &chain.trace, i, kernel, scale, &mut chain.rng)?;
    let u: f64 = chain.rng.random();
    let Some(Proposed { trace, log_correction, used_walk }) = proposed else {
        return Ok(StepOutcome { accepted: false, off_path: None, executions: 1 });
    };
    if !on_path(&trace, path) {
        return Ok(StepOutcome { accepted: false, off_path: Some(trace), executions: 1 });
    }
    let old = chain.trace.log_gamma();
    let new = trace.log_gamma();
    let accepted = if greedy {
        new > old
    } else {
        let log_alpha = new - old + log_correction;
        new > f64::NEG_INFINITY && u.ln() < log_alpha
    };
    if rw_adapt && !greedy && used_walk {
        let (n, hits) = &mut chain.walks[i];
        *n += 1;
        *hits += accepted as u64;
        let rate = (*n as f64).powf(-0.6).min(0.5);
        let a = if accepted { 1.0 } else { 0.0 };
        chain.scales[i] = (chain.scales[i].ln() + rate * (a - TARGET_ACCEPT)).exp().clamp(1e-6, 1e3);
    }
    if accepted {
        chain.trace = trace;
    }
    Ok(StepOutcome { accepted, off_path: None, executions: 1 })
}

/// Samples kept for the posterior approximation, thinned by doubling the
/// stride whenever the cap is exceeded.
#[derive(Clone, Debug)]
pub(crate) struct Retained<O> {
    items: Vec<(Particle<O>, f64)>,
    cap: usize,
    stride: u64,
    seen: u64,
}

impl<O> Retained<O> {
    fn new(cap: usize) -> Self {
        Retained { items: Vec::new(), cap: cap.max(2), stride: 1, seen: 0 }
    }

    fn push(&mut self, make: impl FnOnce() -> (Particle<O>, f64)) {
        self.seen += 1;
        if self.seen % self.stride != 0 {
            return;
        }
        self.items.push(make());
        if self.items.len() > self.cap {
            let mut i = 0;
            self.items.retain(|_| {
                i += 1;
                i % 2 == 0
            });
            self.stride *= 2;
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }
}

/// Counters of one round of local inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RoundStats {
    pub executions: u64,
    pub updates: u64,
    pub accepted: u64,
}

#[derive(Debug)]
pub struct LocalOutcome<O> {
    pub stats: RoundStats,
    pub off_path: Vec<Trace<O>>,
}

/// Chains, weight statistics and retained samples of one active SLP.
#[derive(Clone, Debug)]
pub struct LocalState<O> {
    pub chains: Vec<ChainState<O>>,
    pub eligible: Vec<usize>,
    pub zstats: ZStats,
    pub best_log_gamma: f64,
    pub(crate) retained: Retained<O>,
    pimais_rng: Stream,
}

impl<O: Clone> LocalState<O> {
    /// Start `n_chains` chains at `seed_trace`. Random streams derive from
    /// `(seed, stream_id)`.
    pub fn new(seed_trace: &Trace<O>, path: &Path, params: &LocalParams, seed: u64, stream_id: u64) -> Self {
        let chains = (0..params.n_chains.max(1))
            .map(|n| ChainState::new(seed_trace.clone(), params.kernel.rw_scale, child_stream(seed, stream_id, n as u64)))
            .collect();
        LocalState {
            chains,
            eligible: eligible_positions(path),
            zstats: ZStats::new(),
            best_log_gamma: seed_trace.log_gamma(),
            retained: Retained::new(params.retain_cap),
            pimais_rng: child_stream(seed, stream_id, u64::MAX),
        }
    }

    pub fn log_z(&self) -> f64 {
        self.zstats.log_z()
    }

    pub fn retained_len(&self) -> usize {
        self.retained.len()
    }

    fn note_best(&mut self) {
        for c in &self.chains {
            self.best_log_gamma = self.best_log_gamma.max(c.log_gamma());
        }
    }
}

/// `steps` greedy single-site updates per chain.
pub fn greedy_warm_up<P: Program>(
    program: &P,
    path: &Path,
    state: &mut LocalState<P::Output>,
    params: &LocalParams,
    steps: usize,
) -> Result<LocalOutcome<P::Output>> {
    let mut out = LocalOutcome { stats: RoundStats::default(), off_path: Vec::new() };
    for chain in &mut state.chains {
        for _ in 0..steps {
            let step = local_mh_step(program, path, chain, &state.eligible, &params.kernel, true, false)?;
            out.stats.executions += step.executions;
            out.stats.updates += 1;
            out.stats.accepted += step.accepted as u64;
            out.off_path.extend(step.off_path);
        }
    }
    state.note_best();
    Ok(out)
}

/// Advance every chain by `sweeps` sweeps of `n_x` single-site updates,
/// retaining the state after each sweep in MCMC mode.
pub fn local_round<P: Program>(
    program: &P,
    path: &Path,
    state: &mut LocalState<P::Output>,
    params: &LocalParams,
    sweeps: usize,
) -> Result<LocalOutcome<P::Output>> {
    let mut out = LocalOutcome { stats: RoundStats::default(), off_path: Vec::new() };
    let per_sweep = state.eligible.len().max(1);
    let LocalState { chains, eligible, retained, .. } = state;
    for chain in chains.iter_mut() {
        for _ in 0..sweeps {
            for _ in 0..per_sweep {
                let step = local_mh_step(program, path, chain, eligible, &params.kernel, false, params.rw_adapt)?;
                out.stats.executions += step.executions;
                out.stats.updates += 1;
                out.stats.accepted += step.accepted as u64;
                out.off_path.extend(step.off_path);
            }
            chain.record_moments();
            if params.mode == PiMode::Mcmc {
                retained.push(|| (particle(path, &chain.trace), 0.0));
            }
        }
    }
    state.note_best();
    Ok(out)
}

fn particle<O: Clone>(path: &Path, trace: &Trace<O>) -> Particle<O> {
    Particle { path: path.clone(), values: trace.values(), output: trace.output().clone(), weight: 0.0 }
}

/// Per-position scale of the importance components; zero marks positions
/// that are not Gaussian-proposed.
pub fn pimais_scales<O>(state: &LocalState<O>, path: &Path, params: &LocalParams) -> Vec<f64> {
    let first = &state.chains[0].trace;
    (0..path.len())
        .map(|p| {
            let d = &first.draws()[p];
            if d.address.split_value.is_some() || d.support != SupportClass::Continuous {
                return 0.0;
            }
            if params.pimais_adapt {
                let vars: Vec<f64> = state.chains.iter().filter_map(|c| c.moments[p].var()).collect();
                if vars.len() == state.chains.len() {
                    let pooled = vars.iter().sum::<f64>() / vars.len() as f64;
                    return pooled.sqrt().clamp(1e-4, params.pimais_scale);
                }
            }
            params.pimais_scale
        })
        .collect()
}

/// One round of chain-centred importance sampling: `m` draws from each of the
/// `N` Gaussian components centred on the chains, weighted against the full
/// equal-weight mixture. Returns the number of executions.
pub fn pimais_round<P: Program>(
    program: &P,
    path: &Path,
    state: &mut LocalState<P::Output>,
    params: &LocalParams,
) -> Result<u64> {
    let scales = pimais_scales(state, path, params);
    let centers: Vec<Vec<f64>> = state.chains.iter().map(|c| c.values()).collect();
    let gaussian: Vec<usize> = (0..path.len()).filter(|&p| scales[p] > 0.0).collect();
    let ln_n = (centers.len() as f64).ln();
    let mut executions = 0;
    for center in &centers {
        for _ in 0..params.m {
            let mut handler = CenteredHandler { path, center, scales: &scales, discrete_log_prior: 0.0, bounds: vec![None; path.len()] };
            executions += 1;
            let log_w = match execute(program, &mut handler, &mut state.pimais_rng) {
                Ok(t) if on_path(&t, path) && t.log_gamma() > f64::NEG_INFINITY => {
                    let log_q_mix = lse(centers.iter().map(|c| {
                        gaussian
                            .iter()
                            .map(|&p| {
                                let x = t.draws()[p].value;
                                match handler.bounds[p] {
                                    Some((lo, hi)) => TruncatedGaussian::new(c[p], scales[p], lo, hi).log_density(x),
                                    None => {
                                        let z = (x - c[p]) / scales[p];
                                        -0.5 * z * z - scales[p].ln() - LN_SQRT_2PI
                                    }
                                }
                            })
                            .sum::<f64>()
                    })) - ln_n;
                    let log_w = t.log_gamma() - handler.discrete_log_prior - log_q_mix;
                    if params.mode == PiMode::Is {
                        state.retained.push(|| (particle(path, &t), log_w));
                    }
                    state.best_log_gamma = state.best_log_gamma.max(t.log_gamma());
                    log_w
                }
                Ok(_) | Err(Halt::OffPath) | Err(Halt::Reject) => f64::NEG_INFINITY,
                Err(Halt::Fail(e)) => return Err(e),
            };
            state.zstats.push(log_w);
        }
    }
    Ok(executions)
}

/// The SLP's posterior approximation under `mode`: the retained chain states
/// unweighted, or the retained importance samples self-normalised.
pub fn estimate_pi_k<O: Clone>(state: &LocalState<O>, mode: PiMode) -> Result<EmpiricalMeasure<O>> {
    let items = state.retained.items.clone();
    match mode {
        PiMode::Mcmc => EmpiricalMeasure::unweighted(items.into_iter().map(|(p, _)| p).collect()),
        PiMode::Is => EmpiricalMeasure::from_log_weights(items),
    }
}

/// Log-weights of the retained importance samples, for auditing.
pub fn retained_log_weights<O>(state: &LocalState<O>) -> Vec<f64> {
    state.retained.items.iter().map(|(_, w)| *w).collect()
}
