//! Streaming statistics of importance weights, kept in log space.

use serde::Serialize;

use crate::dist::{log_add_exp, log_sub_exp};
use crate::error::{DccError, Result};

/// Running sums of importance weights for one SLP, across every round ever
/// run on it.
#[derive(Clone, Debug, Serialize)]
pub struct ZStats {
    count: u64,
    log_sum: f64,
    log_sum_sq: f64,
    max_log_w: f64,
    // Welford moments over the finite log-weights.
    n_finite: u64,
    mean: f64,
    m2: f64,
}

impl Default for ZStats {
    fn default() -> Self {
        ZStats {
            count: 0,
            log_sum: f64::NEG_INFINITY,
            log_sum_sq: f64::NEG_INFINITY,
            max_log_w: f64::NEG_INFINITY,
            n_finite: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }
}

/// Derived quantities used by the allocator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightSummary {
    pub log_z: f64,
    /// Log of the population variance of the weights; `-inf` when the
    /// variance is zero or not yet defined.
    pub log_var: f64,
    /// Mean and standard deviation of the finite log-weights.
    pub psi: Option<(f64, f64)>,
    pub max_log_w: f64,
}

impl ZStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one log-weight. `-inf` (an off-path or zero-density sample) still
    /// counts towards the denominator.
    pub fn push(&mut self, log_w: f64) {
        debug_assert!(!log_w.is_nan());
        self.count += 1;
        self.log_sum = log_add_exp(self.log_sum, log_w);
        self.log_sum_sq = log_add_exp(self.log_sum_sq, 2.0 * log_w);
        self.max_log_w = self.max_log_w.max(log_w);
        if log_w.is_finite() {
            self.n_finite += 1;
            let d = log_w - self.mean;
            self.mean += d / self.n_finite as f64;
            self.m2 += d * (log_w - self.mean);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn log_sum(&self) -> f64 {
        self.log_sum
    }

    pub fn log_sum_sq(&self) -> f64 {
        self.log_sum_sq
    }

    pub fn max_log_w(&self) -> f64 {
        self.max_log_w
    }

    /// `log Z_hat`: log of the mean weight, or `-inf` before any weight.
    pub fn log_z(&self) -> f64 {
        if self.count == 0 {
            f64::NEG_INFINITY
        } else {
            self.log_sum - (self.count as f64).ln()
        }
    }

    pub fn log_var(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(DccError::NotReady { have: self.count, need: 2 });
        }
        let ln_c = (self.count as f64).ln();
        let (second, first_sq) = (self.log_sum_sq - ln_c, 2.0 * (self.log_sum - ln_c));
        // Relative variances this small are accumulated rounding error.
        if second - first_sq < 1e-12 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(log_sub_exp(second, first_sq))
    }

    pub fn psi(&self) -> Option<(f64, f64)> {
        match self.n_finite {
            0 => None,
            1 => Some((self.mean, 0.0)),
            n => Some((self.mean, (self.m2 / n as f64).sqrt())),
        }
    }
}

pub fn weight_summary(z: &ZStats) -> Result<WeightSummary> {
    Ok(WeightSummary { log_z: z.log_z(), log_var: z.log_var()?, psi: z.psi(), max_log_w: z.max_log_w() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn from(ws: &[f64]) -> ZStats {
        let mut z = ZStats::new();
        for w in ws {
            z.push(w.ln());
        }
        z
    }

    #[test]
    fn empty_stats_are_negative_infinity() {
        let z = ZStats::new();
        assert_eq!(z.log_z(), f64::NEG_INFINITY);
        assert_eq!(z.log_sum_sq(), f64::NEG_INFINITY);
        assert!(matches!(weight_summary(&z), Err(DccError::NotReady { have: 0, need: 2 })));
    }

    #[test]
    fn equal_weights_have_zero_variance() {
        let s = weight_summary(&from(&[2.5; 7])).unwrap();
        assert!((s.log_z - 2.5f64.ln()).abs() < 1e-12);
        assert_eq!(s.log_var, f64::NEG_INFINITY);
    }

    #[test]
    fn two_weights() {
        let s = weight_summary(&from(&[1.0, 3.0])).unwrap();
        assert!((s.log_z - 2f64.ln()).abs() < 1e-12);
        assert!(s.log_var.abs() < 1e-12);
    }

    #[test]
    fn lognormal_moments() {
        let mut rng = crate::rng::stream(11, 0);
        let mut z = ZStats::new();
        for _ in 0..10_000 {
            z.push(rng.sample::<f64, _>(StandardNormal));
        }
        let s = weight_summary(&z).unwrap();
        let e = std::f64::consts::E;
        assert!((s.log_z.exp() / e.sqrt() - 1.0).abs() < 0.05);
        assert!((s.log_var.exp() / (e * (e - 1.0)) - 1.0).abs() < 0.10);
        let (m, sd) = s.psi.unwrap();
        assert!(m.abs() < 0.05 && (sd - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_weights_advance_the_count() {
        let mut z = ZStats::new();
        z.push(f64::NEG_INFINITY);
        z.push(0.0);
        assert_eq!(z.count(), 2);
        assert!((z.log_z() - 0.5f64.ln()).abs() < 1e-12);
        assert_eq!(z.psi(), Some((0.0, 0.0)));
    }
}
