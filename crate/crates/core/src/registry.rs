//! SLP discovery and bookkeeping: every path ever proposed is remembered in
//! the total stack; those proposed often enough are promoted to the active
//! stack and get chains of their own.

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::interp::{run_prior, Program};
use crate::local::{greedy_warm_up, pimais_round, LocalParams, LocalState, RoundStats};
use crate::measure::Particle;
use crate::trace::{Path, Trace};
use crate::zstats::ZStats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Discovered,
    Active,
    Evicted,
}

#[derive(Clone, Debug)]
pub struct SlpRecord<O> {
    pub id: usize,
    pub path: Path,
    /// Number of proposals that landed on this path.
    pub c: u64,
    /// Number of allocations received while active.
    pub s: u64,
    pub status: Status,
    /// Highest-scoring proposing trace, used to start the chains.
    pub(crate) seed: Option<Trace<O>>,
    pub local: Option<LocalState<O>>,
    pub best_log_gamma: f64,
}

impl<O> SlpRecord<O> {
    pub fn log_z(&self) -> f64 {
        self.local.as_ref().map_or(f64::NEG_INFINITY, |l| l.zstats.log_z())
    }

    pub fn zstats(&self) -> Option<&ZStats> {
        self.local.as_ref().map(|l| &l.zstats)
    }
}

/// Catch-all for traces longer than the draw threshold, estimated by prior
/// importance sampling.
#[derive(Clone, Debug)]
pub struct OverflowRecord<O> {
    pub c: u64,
    pub zstats: ZStats,
    pub(crate) particles: Vec<(Particle<O>, f64)>,
}

impl<O> Default for OverflowRecord<O> {
    fn default() -> Self {
        OverflowRecord { c: 0, zstats: ZStats::new(), particles: Vec::new() }
    }
}

/// Which active record leaves when the active stack is full.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictBy {
    /// Smallest evidence estimate.
    Evidence,
    /// Smallest best log joint seen by the chains.
    #[default]
    BestLogGamma,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegistryParams {
    pub c0_base: u64,
    pub active_cap: usize,
    pub n_thresh: usize,
    pub evict_by: EvictBy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recorded {
    New(usize),
    Seen(usize),
    Overflow,
}

/// Settings for bringing an SLP's chains up.
#[derive(Clone, Copy, Debug)]
pub struct WarmUp<'a> {
    pub local: &'a LocalParams,
    pub t_init: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Promotion {
    pub promoted: Vec<usize>,
    pub evicted: Vec<usize>,
    pub stats: RoundStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecordSummary {
    pub id: usize,
    pub path: String,
    pub digest: String,
    pub c: u64,
    pub s: u64,
    pub status: Status,
    pub log_z: f64,
    pub best_log_gamma: f64,
}

#[derive(Clone, Debug)]
pub struct Registry<O> {
    records: Vec<SlpRecord<O>>,
    index: HashMap<Path, usize>,
    active: Vec<usize>,
    overflow: Option<OverflowRecord<O>>,
    params: RegistryParams,
}

impl<O: Clone> Registry<O> {
    pub fn new(params: RegistryParams) -> Self {
        Registry { records: Vec::new(), index: HashMap::new(), active: Vec::new(), overflow: None, params }
    }

    /// Register the paths of `t0` prior executions.
    pub fn init_discovery<P: Program<Output = O>>(
        program: &P,
        params: RegistryParams,
        t0: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let mut reg = Registry::new(params);
        for _ in 0..t0 {
            reg.record_proposal(run_prior(program, rng)?);
        }
        Ok(reg)
    }

    /// Count a proposal landing on the trace's path, creating the record if
    /// the path is new. Acceptance of the proposal is irrelevant.
    pub fn record_proposal(&mut self, trace: Trace<O>) -> Recorded {
        if trace.draws().len() > self.params.n_thresh {
            self.overflow.get_or_insert_with(OverflowRecord::default).c += 1;
            return Recorded::Overflow;
        }
        let path = trace.path();
        if let Some(&id) = self.index.get(&path) {
            let r = &mut self.records[id];
            r.c += 1;
            if r.status == Status::Discovered && r.seed.as_ref().is_some_and(|s| trace.log_gamma() > s.log_gamma()) {
                r.best_log_gamma = r.best_log_gamma.max(trace.log_gamma());
                r.seed = Some(trace);
            }
            return Recorded::Seen(id);
        }
        let id = self.records.len();
        self.index.insert(path.clone(), id);
        self.records.push(SlpRecord {
            id,
            path,
            c: 1,
            s: 0,
            status: Status::Discovered,
            best_log_gamma: trace.log_gamma(),
            seed: Some(trace),
            local: None,
        });
        Recorded::New(id)
    }

    /// Promotion threshold after `t` iterations; grows without bound but
    /// only logarithmically.
    pub fn c0(&self, t: u64) -> u64 {
        self.params.c0_base * (2.0 + t as f64 / 1000.0).log2().ceil() as u64
    }

    /// Discovered records whose proposal count has reached the threshold.
    pub fn eligible(&self, t: u64) -> Vec<usize> {
        let c0 = self.c0(t);
        self.records.iter().filter(|r| r.status == Status::Discovered && r.c >= c0).map(|r| r.id).collect()
    }

    /// Promote every eligible record, warming up its chains. When the
    /// active stack is full the lowest-ranked active record under
    /// `evict_by` is evicted first; ties go to the newest record.
    pub fn promote_eligible<P: Program<Output = O>>(&mut self, program: &P, t: u64, warm: WarmUp<'_>) -> Result<Promotion> {
        let mut out = Promotion::default();
        for id in self.eligible(t) {
            if self.active.len() >= self.params.active_cap {
                let (pos, _) = self
                    .active
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let (ra, rb) = (&self.records[**a], &self.records[**b]);
                        let primary = match self.params.evict_by {
                            EvictBy::Evidence => ra.log_z().total_cmp(&rb.log_z()),
                            EvictBy::BestLogGamma => std::cmp::Ordering::Equal,
                        };
                        primary.then(ra.best_log_gamma.total_cmp(&rb.best_log_gamma)).then(b.cmp(a))
                    })
                    .expect("cap is positive");
                let gone = self.active.remove(pos);
                self.records[gone].status = Status::Evicted;
                out.evicted.push(gone);
            }
            // A refresh round may already have started this record's chains.
            if self.records[id].local.is_none() {
                let stats = self.initialise(id, program, warm)?;
                add_stats(&mut out.stats, stats);
            }
            self.records[id].status = Status::Active;
            self.active.push(id);
            out.promoted.push(id);
        }
        Ok(out)
    }

    /// Start chains at the record's seed, run the greedy warm-up and one
    /// importance round. Off-path proposals met on the way are recorded.
    pub fn initialise<P: Program<Output = O>>(&mut self, id: usize, program: &P, warm: WarmUp<'_>) -> Result<RoundStats> {
        let r = &mut self.records[id];
        let seed = r.seed.take().expect("uninitialised record keeps its seed trace");
        let mut state = LocalState::new(&seed, &r.path, warm.local, warm.seed, 0x5eed_0000 + id as u64);
        let path = r.path.clone();
        let out = greedy_warm_up(program, &path, &mut state, warm.local, warm.t_init)?;
        let mut stats = out.stats;
        stats.executions += pimais_round(program, &path, &mut state, warm.local)?;
        let r = &mut self.records[id];
        r.best_log_gamma = r.best_log_gamma.max(state.best_log_gamma);
        r.local = Some(state);
        for t in out.off_path {
            self.record_proposal(t);
        }
        Ok(stats)
    }

    /// `n` prior executions scored against the overflow SLP.
    pub fn overflow_round<P: Program<Output = O>>(&mut self, program: &P, n: usize, rng: &mut dyn RngCore) -> Result<u64> {
        let n_thresh = self.params.n_thresh;
        let of = self.overflow.get_or_insert_with(OverflowRecord::default);
        for _ in 0..n {
            let t = run_prior(program, rng)?;
            if t.draws().len() > n_thresh {
                let lw = t.log_likelihood();
                of.zstats.push(lw);
                if lw > f64::NEG_INFINITY {
                    of.particles.push((Particle::from_trace(&t), lw));
                }
            } else {
                of.zstats.push(f64::NEG_INFINITY);
            }
        }
        Ok(n as u64)
    }

    pub fn report(&self) -> Vec<RecordSummary> {
        self.records
            .iter()
            .map(|r| RecordSummary {
                id: r.id,
                path: r.path.to_string(),
                digest: r.path.digest(),
                c: r.c,
                s: r.s,
                status: r.status,
                log_z: r.log_z(),
                best_log_gamma: r.best_log_gamma,
            })
            .collect()
    }
}

impl<O> Registry<O> {
    pub fn records(&self) -> &[SlpRecord<O>] {
        &self.records
    }

    pub fn record(&self, id: usize) -> &SlpRecord<O> {
        &self.records[id]
    }

    pub(crate) fn record_mut(&mut self, id: usize) -> &mut SlpRecord<O> {
        &mut self.records[id]
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn overflow(&self) -> Option<&OverflowRecord<O>> {
        self.overflow.as_ref()
    }

    pub fn params(&self) -> &RegistryParams {
        &self.params
    }

    pub fn find(&self, path: &Path) -> Option<usize> {
        self.index.get(path).copied()
    }

    /// Ids of records that are neither active nor the overflow record.
    pub fn non_active(&self) -> Vec<usize> {
        self.records.iter().filter(|r| r.status != Status::Active).map(|r| r.id).collect()
    }
}

pub(crate) fn add_stats(into: &mut RoundStats, s: RoundStats) {
    into.executions += s.executions;
    into.updates += s.updates;
    into.accepted += s.accepted;
}
