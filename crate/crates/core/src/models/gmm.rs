//! One-dimensional Gaussian mixture with an unknown number of clusters.
//!
//! `K = 1 + Poisson(rate)` is split-marked, so every K is its own SLP. Cluster
//! `k` has its mean confined to the k-th of K equal slices of `[0, 20]`, and
//! the assignments are marginalised out of the likelihood.

use crate::dist::Distribution;
use crate::interp::{Ctx, Halt, Program};
use crate::trace::Path;

pub const LO: f64 = 0.0;
pub const HI: f64 = 20.0;
pub const OBS_STD: f64 = 0.1;
pub const OPEN_RATE: f64 = 9.0;
pub const MISSPEC_RATE: f64 = 90.0;

#[derive(Clone, Debug)]
pub struct Gmm {
    pub rate: f64,
    pub data: Vec<f64>,
    name: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmOutput {
    pub k: usize,
    pub mus: Vec<f64>,
}

impl Gmm {
    /// `K ~ Poisson(9) + 1`.
    pub fn open(data: Vec<f64>) -> Self {
        Gmm { rate: OPEN_RATE, data, name: "gmm-open" }
    }

    /// `K ~ Poisson(90) + 1`, a prior far from the truth.
    pub fn misspecified(data: Vec<f64>) -> Self {
        Gmm { rate: MISSPEC_RATE, data, name: "gmm-misspec" }
    }

    pub fn with_rate(rate: f64, data: Vec<f64>) -> Self {
        Gmm { rate, data, name: "gmm" }
    }
}

/// Bounds of cluster `k` (0-based) out of `k_total`.
pub fn slice_bounds(k: usize, k_total: usize) -> (f64, f64) {
    let w = (HI - LO) / k_total as f64;
    (LO + k as f64 * w, LO + (k + 1) as f64 * w)
}

/// Number of clusters encoded in a GMM path.
pub fn k_of_path(path: &Path) -> Option<usize> {
    path.split_value("K").map(|v| v as usize + 1)
}

impl Program for Gmm {
    type Output = GmmOutput;

    fn name(&self) -> &str {
        self.name
    }

    fn run(&self, ctx: &mut Ctx<'_>) -> Result<GmmOutput, Halt> {
        let k = ctx.sample_split("K", &Distribution::poisson(self.rate)?)? as usize + 1;
        let mut mus = Vec::with_capacity(k);
        for i in 0..k {
            let (lo, hi) = slice_bounds(i, k);
            mus.push(ctx.sample("mu", &Distribution::uniform(lo, hi)?)?);
        }
        let lik = Distribution::gmm_obs_lik(mus.clone(), OBS_STD)?;
        for &y in &self.data {
            ctx.observe("y", &lik, y)?;
        }
        Ok(GmmOutput { k, mus })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::run_prior;
    use crate::rng::stream;

    #[test]
    fn prior_trace_has_one_plus_k_draws() {
        let m = Gmm::open(vec![1.0, 2.0]);
        for seed in 0..20 {
            let t = run_prior(&m, &mut stream(seed, 0)).unwrap();
            let k = t.output().k;
            assert_eq!(t.draws().len(), 1 + k);
            assert_eq!(k_of_path(&t.path()), Some(k));
            for (i, mu) in t.output().mus.iter().enumerate() {
                let (lo, hi) = slice_bounds(i, k);
                assert!(*mu >= lo && *mu < hi);
            }
        }
    }

    #[test]
    fn single_cluster_spans_the_whole_range() {
        assert_eq!(slice_bounds(0, 1), (0.0, 20.0));
    }
}
