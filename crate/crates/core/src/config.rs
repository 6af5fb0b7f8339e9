//! Engine configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alloc::AllocParams;
use crate::error::{DccError, Result};
use crate::interp::KernelParams;
use crate::local::LocalParams;
use crate::measure::PiMode;
use crate::registry::EvictBy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DccConfig {
    /// Total program executions allowed, discovery and warm-up included.
    pub budget: u64,
    /// Optional cap on main-loop iterations.
    pub max_iters: Option<u64>,
    pub seed: u64,
    /// Prior executions used for initial discovery.
    pub t0: usize,
    /// Greedy single-site steps per chain when an SLP is activated.
    pub t_init: usize,
    /// Base of the promotion threshold `c0_base * ceil(log2(2 + t/1000))`.
    pub c0_base: u64,
    pub active_cap: usize,
    pub evict_by: EvictBy,
    /// MwG sweeps per chain per allocation.
    pub sweeps: usize,
    pub local: LocalParams,
    pub alloc: AllocParams,
    /// Kernel of the path-exploring proposals.
    pub global_kernel: KernelParams,
    /// Exploring proposals per iteration, made from the selected SLP's
    /// chains in turn.
    pub global_fanout: usize,
    /// Probability that an exploring proposal targets a split-marked site
    /// rather than a uniformly chosen one.
    pub global_split_bias: f64,
    /// Per-iteration probability of a round on a random non-active SLP.
    pub refresh_prob: f64,
    /// Overrides the program's draw-count threshold for the overflow SLP.
    pub n_thresh: Option<usize>,
    pub log_utilities: bool,
}

impl Default for DccConfig {
    fn default() -> Self {
        DccConfig {
            budget: 10_000,
            max_iters: None,
            seed: 0,
            t0: 100,
            t_init: 20,
            c0_base: 3,
            active_cap: 50,
            evict_by: EvictBy::BestLogGamma,
            sweeps: 1,
            local: LocalParams::default(),
            alloc: AllocParams::default(),
            global_kernel: KernelParams { p_prior: 1.0, rw_scale: 0.5, int_rw_rel: None },
            global_fanout: 1,
            global_split_bias: 0.0,
            refresh_prob: 0.01,
            n_thresh: None,
            log_utilities: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| DccError::Config(format!("bad value for {key}: {v:?}")))
}

fn parse_opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl DccConfig {
    /// Set one field from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "budget" => self.budget = parse(key, v)?,
            "max_iters" => self.max_iters = parse_opt(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "t0" => self.t0 = parse(key, v)?,
            "t_init" => self.t_init = parse(key, v)?,
            "c0_base" => self.c0_base = parse(key, v)?,
            "active_cap" => self.active_cap = parse(key, v)?,
            "evict_by" => {
                self.evict_by = match v {
                    "evidence" => EvictBy::Evidence,
                    "best_log_gamma" => EvictBy::BestLogGamma,
                    _ => return Err(DccError::Config(format!("evict_by must be evidence or best_log_gamma, got {v:?}"))),
                }
            }
            "sweeps" => self.sweeps = parse(key, v)?,
            "n_chains" => self.local.n_chains = parse(key, v)?,
            "m" => self.local.m = parse(key, v)?,
            "p_prior" => self.local.kernel.p_prior = parse(key, v)?,
            "rw_scale" => self.local.kernel.rw_scale = parse(key, v)?,
            "int_rw_rel" => self.local.kernel.int_rw_rel = parse_opt(key, v)?,
            "rw_adapt" => self.local.rw_adapt = parse(key, v)?,
            "pimais_scale" => self.local.pimais_scale = parse(key, v)?,
            "pimais_adapt" => self.local.pimais_adapt = parse(key, v)?,
            "pi_mode" => {
                self.local.mode = match v {
                    "mcmc" => PiMode::Mcmc,
                    "is" => PiMode::Is,
                    _ => return Err(DccError::Config(format!("pi_mode must be mcmc or is, got {v:?}"))),
                }
            }
            "retain_cap" => self.local.retain_cap = parse(key, v)?,
            "delta" => self.alloc.delta = parse(key, v)?,
            "beta" => self.alloc.beta = parse(key, v)?,
            "kappa" => self.alloc.kappa = parse(key, v)?,
            "t_a" => self.alloc.t_a = parse(key, v)?,
            "global_p_prior" => self.global_kernel.p_prior = parse(key, v)?,
            "global_rw_scale" => self.global_kernel.rw_scale = parse(key, v)?,
            "global_int_rw_rel" => self.global_kernel.int_rw_rel = parse_opt(key, v)?,
            "global_fanout" => self.global_fanout = parse(key, v)?,
            "global_split_bias" => self.global_split_bias = parse(key, v)?,
            "refresh_prob" => self.refresh_prob = parse(key, v)?,
            "n_thresh" => self.n_thresh = parse_opt(key, v)?,
            "log_utilities" => self.log_utilities = parse(key, v)?,
            _ => return Err(DccError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DccError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = DccConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let l = &self.local;
        let g = &self.global_kernel;
        let mode = match l.mode {
            PiMode::Mcmc => "mcmc",
            PiMode::Is => "is",
        };
        let evict = match self.evict_by {
            EvictBy::Evidence => "evidence",
            EvictBy::BestLogGamma => "best_log_gamma",
        };
        let rows: Vec<(&str, String)> = vec![
            ("budget", self.budget.to_string()),
            ("max_iters", opt(&self.max_iters)),
            ("seed", self.seed.to_string()),
            ("t0", self.t0.to_string()),
            ("t_init", self.t_init.to_string()),
            ("c0_base", self.c0_base.to_string()),
            ("active_cap", self.active_cap.to_string()),
            ("evict_by", evict.to_string()),
            ("sweeps", self.sweeps.to_string()),
            ("n_chains", l.n_chains.to_string()),
            ("m", l.m.to_string()),
            ("p_prior", l.kernel.p_prior.to_string()),
            ("rw_scale", l.kernel.rw_scale.to_string()),
            ("int_rw_rel", opt(&l.kernel.int_rw_rel)),
            ("rw_adapt", l.rw_adapt.to_string()),
            ("pimais_scale", l.pimais_scale.to_string()),
            ("pimais_adapt", l.pimais_adapt.to_string()),
            ("pi_mode", mode.to_string()),
            ("retain_cap", l.retain_cap.to_string()),
            ("delta", self.alloc.delta.to_string()),
            ("beta", self.alloc.beta.to_string()),
            ("kappa", self.alloc.kappa.to_string()),
            ("t_a", self.alloc.t_a.to_string()),
            ("global_p_prior", g.p_prior.to_string()),
            ("global_rw_scale", g.rw_scale.to_string()),
            ("global_int_rw_rel", opt(&g.int_rw_rel)),
            ("global_fanout", self.global_fanout.to_string()),
            ("global_split_bias", self.global_split_bias.to_string()),
            ("refresh_prob", self.refresh_prob.to_string()),
            ("n_thresh", opt(&self.n_thresh)),
            ("log_utilities", self.log_utilities.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DccError::Config(m.to_string()));
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if self.local.n_chains == 0 || self.local.m == 0 {
            return bad("n_chains and m must be positive");
        }
        if self.t0 == 0 {
            return bad("t0 must be at least 1");
        }
        if self.c0_base == 0 || self.active_cap == 0 {
            return bad("c0_base and active_cap must be positive");
        }
        for p in [self.local.kernel.p_prior, self.global_kernel.p_prior, self.global_split_bias, self.refresh_prob, self.alloc.delta] {
            if !unit(p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(self.local.kernel.rw_scale > 0.0 && self.global_kernel.rw_scale > 0.0 && self.local.pimais_scale > 0.0) {
            return bad("scales must be positive");
        }
        if !(self.alloc.beta > 0.0 && self.alloc.kappa >= 0.0 && self.alloc.t_a >= 1.0) {
            return bad("need beta > 0, kappa >= 0, t_a >= 1");
        }
        Ok(())
    }
}
