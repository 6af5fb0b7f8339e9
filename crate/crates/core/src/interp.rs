//! Runs generative programs under interchangeable sample handlers.
//!
//! A [`Program`] is ordinary Rust code that requests draws and scores
//! observations through a [`Ctx`]. What a `sample` request returns depends on
//! the handler driving the execution: fresh prior draws, values replayed from
//! an earlier trace, values pinned to a fixed path, or proposals centred on a
//! chain state.

use std::collections::HashMap;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::{log_add_exp, std_normal_cdf, Distribution, Support, SupportClass, TruncatedGaussian};
use crate::error::{DccError, Result};
use crate::trace::{Address, Draw, DrawKey, ObserveTerm, Path, Site, Trace};

/// Default bound on the number of draws before a trace is treated as overflow.
pub const DEFAULT_N_THRESH: usize = 1000;

/// Executions that reach this many draws are aborted outright.
const HARD_DRAW_CAP: usize = 1_000_000;

/// A generative model written against the effect context.
///
/// Given identical answers to its `sample` requests, `run` must issue the same
/// requests in the same order and return the same output.
pub trait Program {
    type Output: Clone;

    fn name(&self) -> &str;

    fn run(&self, ctx: &mut Ctx<'_>) -> std::result::Result<Self::Output, Halt>;

    /// Traces with more draws than this are routed to the overflow record.
    fn n_thresh(&self) -> Option<usize> {
        None
    }
}

/// Non-local exit from a program execution.
#[derive(Debug)]
pub enum Halt {
    /// The execution left the path it was pinned to.
    OffPath,
    /// A proposed value has zero prior density; the move is rejected before
    /// the rest of the program runs.
    Reject,
    Fail(DccError),
}

impl From<DccError> for Halt {
    fn from(e: DccError) -> Self {
        Halt::Fail(e)
    }
}

pub(crate) struct Request<'r> {
    pub key: DrawKey,
    pub position: usize,
    pub dist: &'r Distribution,
    pub split: bool,
}

pub(crate) trait Handler {
    fn choose(&mut self, req: &Request<'_>, rng: &mut dyn RngCore) -> std::result::Result<f64, Halt>;
}

/// Effect context handed to [`Program::run`].
pub struct Ctx<'a> {
    handler: &'a mut dyn Handler,
    rng: &'a mut dyn RngCore,
    draws: Vec<Draw>,
    observes: Vec<ObserveTerm>,
    counts: Vec<(Site, u32)>,
}

impl<'a> Ctx<'a> {
    fn new(handler: &'a mut dyn Handler, rng: &'a mut dyn RngCore) -> Self {
        Ctx { handler, rng, draws: Vec::new(), observes: Vec::new(), counts: Vec::new() }
    }

    fn next_occurrence(&mut self, site: Site) -> u32 {
        match self.counts.iter_mut().find(|(s, _)| *s == site) {
            Some((_, c)) => {
                *c += 1;
                *c
            }
            None => {
                self.counts.push((site, 0));
                0
            }
        }
    }

    fn draw(&mut self, site: Site, dist: &Distribution, split: bool) -> std::result::Result<f64, Halt> {
        if dist.support_class() == SupportClass::ObserveOnly {
            return Err(Halt::Fail(DccError::Model {
                site: site.to_string(),
                message: "observe-only distribution used in sample".into(),
            }));
        }
        if self.draws.len() >= HARD_DRAW_CAP {
            return Err(Halt::Fail(DccError::Model {
                site: site.to_string(),
                message: format!("execution exceeded {HARD_DRAW_CAP} draws"),
            }));
        }
        let occurrence = self.next_occurrence(site);
        let req = Request { key: DrawKey { site, occurrence }, position: self.draws.len(), dist, split };
        let value = self.handler.choose(&req, self.rng)?;
        let log_prior = dist.log_density(value);
        let split_value = if split { Some(value as i64) } else { None };
        self.draws.push(Draw {
            address: Address { site, occurrence, split_value },
            value,
            log_prior,
            support: dist.support_class(),
        });
        Ok(value)
    }

    /// Draw a value at `site`.
    pub fn sample(&mut self, site: impl Into<Site>, dist: &Distribution) -> std::result::Result<f64, Halt> {
        self.draw(site.into(), dist, false)
    }

    /// Draw a discrete value whose outcome becomes part of the path.
    pub fn sample_split(&mut self, site: impl Into<Site>, dist: &Distribution) -> std::result::Result<i64, Halt> {
        let site = site.into();
        if !dist.is_discrete() {
            return Err(Halt::Fail(DccError::Model {
                site: site.to_string(),
                message: "only discrete draws can be split-marked".into(),
            }));
        }
        self.draw(site, dist, true).map(|v| v as i64)
    }

    /// Score `value` under `dist`.
    pub fn observe(&mut self, site: impl Into<Site>, dist: &Distribution, value: f64) -> std::result::Result<(), Halt> {
        let log_lik = dist.log_density(value);
        self.observes.push(ObserveTerm { site: site.into(), value, log_lik });
        Ok(())
    }

    /// Number of draws made so far in this execution.
    pub fn draw_count(&self) -> usize {
        self.draws.len()
    }
}

pub(crate) fn execute<P: Program>(
    program: &P,
    handler: &mut dyn Handler,
    rng: &mut dyn RngCore,
) -> std::result::Result<Trace<P::Output>, Halt> {
    let mut ctx = Ctx::new(handler, rng);
    let output = program.run(&mut ctx)?;
    let n_thresh = program.n_thresh().unwrap_or(DEFAULT_N_THRESH);
    Ok(Trace::new(ctx.draws, ctx.observes, output, n_thresh))
}

fn into_result<T>(r: std::result::Result<T, Halt>) -> Result<T> {
    match r {
        Ok(t) => Ok(t),
        Err(Halt::Fail(e)) => Err(e),
        Err(Halt::OffPath) => Err(DccError::Contract("unexpected path departure".into())),
        Err(Halt::Reject) => Err(DccError::Contract("unexpected rejection".into())),
    }
}

struct PriorHandler;

impl Handler for PriorHandler {
    fn choose(&mut self, req: &Request<'_>, rng: &mut dyn RngCore) -> std::result::Result<f64, Halt> {
        Ok(req.dist.sample(rng)?)
    }
}

/// Execute with every draw taken from its prior. Observations are scored but
/// never condition the execution.
pub fn run_prior<P: Program>(program: &P, rng: &mut dyn RngCore) -> Result<Trace<P::Output>> {
    into_result(execute(program, &mut PriorHandler, rng))
}

#[derive(Clone, Copy, Debug)]
pub struct StoredDraw {
    pub value: f64,
    pub support: SupportClass,
    pub log_prior: f64,
}

/// Values keyed by draw address, consumed by replaying executions.
#[derive(Clone, Debug, Default)]
pub struct DrawStore {
    index: HashMap<DrawKey, usize>,
    entries: Vec<StoredDraw>,
}

impl DrawStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_trace<O>(trace: &Trace<O>) -> Self {
        let mut store = DrawStore::new();
        for d in trace.draws() {
            store.insert(d.address.key(), StoredDraw { value: d.value, support: d.support, log_prior: d.log_prior });
        }
        store
    }

    /// Insert or overwrite the value at `key`.
    pub fn insert(&mut self, key: DrawKey, draw: StoredDraw) {
        match self.index.get(&key) {
            Some(&i) => self.entries[i] = draw,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(draw);
            }
        }
    }

    pub fn get(&self, key: &DrawKey) -> Option<&StoredDraw> {
        self.index.get(key).map(|&i| &self.entries[i])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Single-site proposal kernel: a mixture of a prior resample and a local
/// random walk around the current value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Probability of resampling the chosen site from its prior.
    pub p_prior: f64,
    /// Standard deviation of the Gaussian random walk on continuous sites.
    pub rw_scale: f64,
    /// When set, integer-valued sites also get a discretised Gaussian walk
    /// with scale `max(1, int_rw_rel * |value|)`. Index-valued sites are
    /// always resampled from the prior.
    pub int_rw_rel: Option<f64>,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { p_prior: 0.5, rw_scale: 0.5, int_rw_rel: None }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Proposal {
    pub value: f64,
    /// `log q(old | new) - log q(new | old)`.
    pub log_q_ratio: f64,
    pub used_walk: bool,
}

fn int_walk_scale(rel: f64, v: f64) -> f64 {
    (rel * v.abs()).max(1.0)
}

fn int_walk_log_prob(from: f64, to: f64, rel: f64) -> f64 {
    let s = int_walk_scale(rel, from);
    let d = to - from;
    let p = std_normal_cdf((d + 0.5) / s) - std_normal_cdf((d - 0.5) / s);
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Draw a proposal for one site. `scale` overrides the kernel's continuous
/// random-walk scale (per-site adaptation).
pub(crate) fn propose_site(
    dist: &Distribution,
    old: f64,
    kernel: &KernelParams,
    scale: f64,
    rng: &mut dyn RngCore,
) -> std::result::Result<Proposal, Halt> {
    let class = dist.support_class();
    let walk_ok = match class {
        SupportClass::Continuous => true,
        SupportClass::Integer => kernel.int_rw_rel.is_some(),
        _ => false,
    };
    if !walk_ok || kernel.p_prior >= 1.0 {
        let value = dist.sample(rng)?;
        let log_q_ratio = dist.log_density(old) - dist.log_density(value);
        return Ok(Proposal { value, log_q_ratio, used_walk: false });
    }
    let use_prior = kernel.p_prior > 0.0 && rng.random::<f64>() < kernel.p_prior;
    let value = if use_prior {
        dist.sample(rng)?
    } else if class == SupportClass::Continuous {
        let z: f64 = rng.sample(StandardNormal);
        old + scale * z
    } else {
        let rel = kernel.int_rw_rel.unwrap_or(0.0);
        let z: f64 = rng.sample(StandardNormal);
        old + (int_walk_scale(rel, old) * z).round()
    };
    let walk_log = |from: f64, to: f64| -> f64 {
        if class == SupportClass::Continuous {
            let z = (to - from) / scale;
            -0.5 * z * z - scale.ln() - crate::dist::LN_SQRT_2PI
        } else {
            int_walk_log_prob(from, to, kernel.int_rw_rel.unwrap_or(0.0))
        }
    };
    let (lp, lw) = (kernel.p_prior.ln(), (1.0 - kernel.p_prior).ln());
    let fwd = log_add_exp(lp + dist.log_density(value), lw + walk_log(old, value));
    let rev = log_add_exp(lp + dist.log_density(old), lw + walk_log(value, old));
    Ok(Proposal { value, log_q_ratio: rev - fwd, used_walk: !use_prior })
}

pub(crate) struct Target<'k> {
    pub key: DrawKey,
    pub kernel: &'k KernelParams,
    pub scale: f64,
}

/// Replays stored values where compatible and draws fresh values otherwise.
/// With a target, the value at the target address is replaced by a proposal.
pub(crate) struct ReplayHandler<'s, 'k> {
    store: &'s DrawStore,
    target: Option<Target<'k>>,
    consumed: Vec<bool>,
    pub reused: usize,
    pub fresh: usize,
    pub fresh_log_prior: f64,
    pub proposal: Option<Proposal>,
}

impl<'s, 'k> ReplayHandler<'s, 'k> {
    pub fn new(store: &'s DrawStore, target: Option<Target<'k>>) -> Self {
        ReplayHandler {
            store,
            target,
            consumed: vec![false; store.len()],
            reused: 0,
            fresh: 0,
            fresh_log_prior: 0.0,
            proposal: None,
        }
    }

    /// Sum of stored log priors never consumed by the replay.
    pub fn unused_log_prior(&self) -> f64 {
        self.store
            .entries
            .iter()
            .zip(&self.consumed)
            .filter(|(_, used)| !**used)
            .map(|(e, _)| e.log_prior)
            .sum()
    }
}

impl Handler for ReplayHandler<'_, '_> {
    fn choose(&mut self, req: &Request<'_>, rng: &mut dyn RngCore) -> std::result::Result<f64, Halt> {
        let slot = self.store.index.get(&req.key).copied();
        if let Some(target) = &self.target {
            if target.key == req.key {
                let i = slot.expect("proposal target must be in the store");
                let old = self.store.entries[i].value;
                let proposal = propose_site(req.dist, old, target.kernel, target.scale, rng)?;
                if req.dist.log_density(proposal.value) == f64::NEG_INFINITY {
                    return Err(Halt::Reject);
                }
                self.consumed[i] = true;
                self.proposal = Some(proposal);
                return Ok(proposal.value);
            }
        }
        if let Some(i) = slot {
            let stored = self.store.entries[i];
            if stored.support == req.dist.support_class() && req.dist.log_density(stored.value) > f64::NEG_INFINITY {
                self.consumed[i] = true;
                self.reused += 1;
                return Ok(stored.value);
            }
        }
        let value = req.dist.sample(rng)?;
        self.fresh += 1;
        self.fresh_log_prior += req.dist.log_density(value);
        Ok(value)
    }
}

/// Result of a replaying execution.
#[derive(Clone, Debug)]
pub struct Replay<O> {
    pub trace: Trace<O>,
    pub reused: usize,
    pub fresh: usize,
}

/// Execute reusing values from `store` wherever the address exists and the
/// stored value is valid under the current distribution; everything else is
/// drawn fresh from the prior.
pub fn run_replay<P: Program>(program: &P, store: &DrawStore, rng: &mut dyn RngCore) -> Result<Replay<P::Output>> {
    let mut handler = ReplayHandler::new(store, None);
    let trace = into_result(execute(program, &mut handler, rng))?;
    Ok(Replay { trace, reused: handler.reused, fresh: handler.fresh })
}

/// Forces each draw to the given value, departing if the program asks for a
/// different address than the path prescribes.
struct PinnedHandler<'a> {
    path: &'a Path,
    values: &'a [f64],
}

impl Handler for PinnedHandler<'_> {
    fn choose(&mut self, req: &Request<'_>, _rng: &mut dyn RngCore) -> std::result::Result<f64, Halt> {
        let addr = self.path.addresses().get(req.position).ok_or(Halt::OffPath)?;
        if addr.key() != req.key || addr.split_value.is_some() != req.split {
            return Err(Halt::OffPath);
        }
        let value = self.values[req.position];
        if let Some(s) = addr.split_value {
            if value as i64 != s {
                return Err(Halt::OffPath);
            }
        }
        Ok(value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Score {
    OnPath(f64),
    Departed,
}

/// `log gamma_k` of fixed draws on `path`, or `Departed` if the execution
/// needs a draw the path does not provide.
pub fn score_trace<P: Program>(program: &P, path: &Path, values: &[f64]) -> Result<Score> {
    if values.len() != path.len() {
        return Err(DccError::Contract(format!(
            "{} values supplied for a path of length {}",
            values.len(),
            path.len()
        )));
    }
    let mut handler = PinnedHandler { path, values };
    let mut rng = crate::rng::stream(0, 0);
    match execute(program, &mut handler, &mut rng) {
        Ok(trace) if trace.draws().len() == path.len() => Ok(Score::OnPath(trace.log_gamma())),
        Ok(_) | Err(Halt::OffPath) => Ok(Score::Departed),
        Err(Halt::Reject) => Ok(Score::OnPath(f64::NEG_INFINITY)),
        Err(Halt::Fail(e)) => Err(e),
    }
}

/// Draws a path-constrained proposal: split sites keep the path's value,
/// continuous sites are Gaussian around `center`, other discrete sites come
/// from their prior.
pub(crate) struct CenteredHandler<'a> {
    pub path: &'a Path,
    pub center: &'a [f64],
    pub scales: &'a [f64],
    /// Log prior mass of the discrete non-split draws, which enters the
    /// proposal density.
    pub discrete_log_prior: f64,
    /// Support of each bounded continuous draw met so far, by position.
    pub bounds: Vec<Option<(f64, f64)>>,
}

impl Handler for CenteredHandler<'_> {
    fn choose(&mut self, req: &Request<'_>, rng: &mut dyn RngCore) -> std::result::Result<f64, Halt> {
        let addr = self.path.addresses().get(req.position).ok_or(Halt::OffPath)?;
        if addr.key() != req.key || addr.split_value.is_some() != req.split {
            return Err(Halt::OffPath);
        }
        if let Some(s) = addr.split_value {
            return Ok(s as f64);
        }
        if req.dist.support_class() == SupportClass::Continuous {
            let (c, s) = (self.center[req.position], self.scales[req.position]);
            if let Support::Interval { lo, hi } = req.dist.support() {
                self.bounds[req.position] = Some((lo, hi));
                return Ok(TruncatedGaussian::new(c, s, lo, hi).sample(rng));
            }
            let z: f64 = rng.sample(StandardNormal);
            Ok(c + s * z)
        } else {
            let v = req.dist.sample(rng)?;
            self.discrete_log_prior += req.dist.log_density(v);
            Ok(v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::two_branch::TwoBranch;
    use crate::rng::stream;
    use crate::trace::path_of;

    struct NoDraws;
    impl Program for NoDraws {
        type Output = ();
        fn name(&self) -> &str {
            "no-draws"
        }
        fn run(&self, ctx: &mut Ctx<'_>) -> std::result::Result<(), Halt> {
            ctx.observe("y", &Distribution::normal(0.0, 1.0)?, 0.0)
        }
    }

    fn find_trace(model: &TwoBranch, negative: bool) -> Trace<f64> {
        let mut rng = stream(1, 0);
        loop {
            let t = run_prior(model, &mut rng).unwrap();
            if (t.draws()[0].value < 0.0) == negative {
                return t;
            }
        }
    }

    #[test]
    fn program_without_draws() {
        let t = run_prior(&NoDraws, &mut stream(0, 0)).unwrap();
        assert!(path_of(&t).is_empty());
        assert!((t.log_gamma() + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn prior_run_follows_branch_structure() {
        let model = TwoBranch::new(0.0);
        let neg = find_trace(&model, true);
        assert_eq!(path_of(&neg).to_string(), "[l1:0 l4:0]");
        let pos = find_trace(&model, false);
        assert_eq!(path_of(&pos).to_string(), "[l1:0 l7:0 l8:0]");
    }

    #[test]
    fn prior_runs_are_deterministic_per_seed() {
        let model = TwoBranch::new(0.0);
        let a = run_prior(&model, &mut stream(9, 3)).unwrap();
        let b = run_prior(&model, &mut stream(9, 3)).unwrap();
        assert_eq!(a.to_record(), b.to_record());
    }

    #[test]
    fn replay_of_own_draws_is_exact() {
        let model = TwoBranch::new(0.0);
        for seed in 0..20 {
            let t = run_prior(&model, &mut stream(seed, 0)).unwrap();
            let r = run_replay(&model, &DrawStore::from_trace(&t), &mut stream(seed, 1)).unwrap();
            assert_eq!(r.reused, t.draws().len());
            assert_eq!(r.fresh, 0);
            assert_eq!(r.trace.log_gamma().to_bits(), t.log_gamma().to_bits());
            assert_eq!(path_of(&r.trace), path_of(&t));
        }
    }

    #[test]
    fn replay_after_branch_flip_draws_fresh_values() {
        let model = TwoBranch::new(0.0);
        let t = find_trace(&model, true);
        let mut store = DrawStore::from_trace(&t);
        let key = t.draws()[0].address.key();
        store.insert(key, StoredDraw { value: 1.0, support: SupportClass::Continuous, log_prior: 0.0 });
        let r = run_replay(&model, &store, &mut stream(4, 4)).unwrap();
        assert_eq!(path_of(&r.trace).to_string(), "[l1:0 l7:0 l8:0]");
        assert_eq!(r.reused, 1);
        assert_eq!(r.fresh, 2);
    }

    #[test]
    fn empty_store_matches_prior_run() {
        let model = TwoBranch::new(0.0);
        let a = run_prior(&model, &mut stream(2, 2)).unwrap();
        let b = run_replay(&model, &DrawStore::new(), &mut stream(2, 2)).unwrap();
        assert_eq!(a.to_record(), b.trace.to_record());
    }

    #[test]
    fn score_matches_closed_form_on_second_branch() {
        let model = TwoBranch::new(0.0);
        let pos = find_trace(&model, false);
        let path = path_of(&pos);
        let n = |x: f64, m: f64, s: f64| Distribution::normal(m, s).unwrap().log_density(x);
        let expected = n(1.0, 0.0, 2.0) + n(5.0, 5.0, 2.0) + n(5.0, 5.0, 2.0) + n(0.0, 5.0, 2.0);
        match score_trace(&model, &path, &[1.0, 5.0, 5.0]).unwrap() {
            Score::OnPath(v) => assert!((v - expected).abs() < 1e-12),
            Score::Departed => panic!("should stay on path"),
        }
        assert_eq!(score_trace(&model, &path, &[-1.0, 5.0, 5.0]).unwrap(), Score::Departed);
    }

    #[test]
    fn score_equals_replayed_log_gamma() {
        let model = TwoBranch::new(0.0);
        for seed in 0..10 {
            let t = run_prior(&model, &mut stream(seed, 5)).unwrap();
            let r = run_replay(&model, &DrawStore::from_trace(&t), &mut stream(seed, 6)).unwrap();
            let s = score_trace(&model, &path_of(&t), &t.values()).unwrap();
            assert_eq!(s, Score::OnPath(r.trace.log_gamma()));
        }
    }

    #[test]
    fn split_marking_requires_discrete_distribution() {
        struct BadSplit;
        impl Program for BadSplit {
            type Output = ();
            fn name(&self) -> &str {
                "bad"
            }
            fn run(&self, ctx: &mut Ctx<'_>) -> std::result::Result<(), Halt> {
                ctx.sample_split("x", &Distribution::normal(0.0, 1.0)?)?;
                Ok(())
            }
        }
        assert!(matches!(run_prior(&BadSplit, &mut stream(0, 0)), Err(DccError::Model { .. })));
    }

    #[test]
    fn support_class_change_forces_fresh_draw() {
        struct Switch(bool);
        impl Program for Switch {
            type Output = f64;
            fn name(&self) -> &str {
                "switch"
            }
            fn run(&self, ctx: &mut Ctx<'_>) -> std::result::Result<f64, Halt> {
                let d = if self.0 { Distribution::poisson(3.0)? } else { Distribution::normal(0.5, 1.0)? };
                ctx.sample("x", &d)
            }
        }
        let t = run_prior(&Switch(false), &mut stream(0, 0)).unwrap();
        let r = run_replay(&Switch(true), &DrawStore::from_trace(&t), &mut stream(0, 1)).unwrap();
        assert_eq!(r.fresh, 1);
        assert_eq!(r.trace.draws()[0].support, SupportClass::Integer);
    }

    #[test]
    fn integer_walk_ratio_accounts_for_asymmetric_scale() {
        let d = Distribution::poisson(90.0).unwrap();
        let kernel = KernelParams { p_prior: 0.0, rw_scale: 0.5, int_rw_rel: Some(0.2) };
        let mut rng = stream(3, 3);
        for _ in 0..50 {
            let p = propose_site(&d, 40.0, &kernel, 0.5, &mut rng).unwrap();
            let expected = int_walk_log_prob(p.value, 40.0, 0.2) - int_walk_log_prob(40.0, p.value, 0.2);
            assert!((p.log_q_ratio - expected).abs() < 1e-12);
            assert_eq!(p.value.fract(), 0.0);
        }
    }
}
