//! Primitive distributions used by `sample` and `observe` statements.
//!
//! Every density is evaluated in log space. Values are carried as `f64`
//! regardless of support; integer-valued distributions expect integral values
//! and score anything else as impossible.

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::error::{DccError, Result};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Coarse support class, used to decide whether a stored value may be reused
/// when a site is re-executed with different parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize)]
pub enum SupportClass {
    Continuous,
    Integer,
    Index,
    ObserveOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    RealLine,
    Interval { lo: f64, hi: f64 },
    NonNegativeIntegers,
    Indices(usize),
    ObserveOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    Poisson { rate: f64 },
    Categorical { probs: Vec<f64> },
    /// Equal-weight Gaussian mixture likelihood with shared standard deviation.
    /// Only usable in `observe`.
    GmmObsLik { mus: Vec<f64>, std: f64 },
}

/// A validated distribution. Construct through the named constructors, which
/// reject non-finite or out-of-range parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    kind: Kind,
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(DccError::Parameter(format!("{name} must be finite, got {v}")))
    }
}

impl Distribution {
    /// Normal parameterised by its standard deviation.
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        finite("mean", mean)?;
        finite("std", std)?;
        if std <= 0.0 {
            return Err(DccError::Parameter(format!("std must be positive, got {std}")));
        }
        Ok(Self { kind: Kind::Normal { mean, std } })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if hi <= lo {
            return Err(DccError::Parameter(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { kind: Kind::Uniform { lo, hi } })
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        finite("rate", rate)?;
        if rate <= 0.0 {
            return Err(DccError::Parameter(format!("rate must be positive, got {rate}")));
        }
        Ok(Self { kind: Kind::Poisson { rate } })
    }

    pub fn categorical(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(DccError::Parameter("categorical needs at least one outcome".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DccError::Parameter(format!("probabilities must be finite and >= 0: {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DccError::Parameter(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { kind: Kind::Categorical { probs } })
    }

    pub fn gmm_obs_lik(mus: Vec<f64>, std: f64) -> Result<Self> {
        if mus.is_empty() {
            return Err(DccError::Contract("mixture likelihood needs at least one mean".into()));
        }
        for &m in &mus {
            finite("mu", m)?;
        }
        finite("std", std)?;
        if std <= 0.0 {
            return Err(DccError::Parameter(format!("std must be positive, got {std}")));
        }
        Ok(Self { kind: Kind::GmmObsLik { mus, std } })
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn support(&self) -> Support {
        match &self.kind {
            Kind::Normal { .. } => Support::RealLine,
            Kind::Uniform { lo, hi } => Support::Interval { lo: *lo, hi: *hi },
            Kind::Poisson { .. } => Support::NonNegativeIntegers,
            Kind::Categorical { probs } => Support::Indices(probs.len()),
            Kind::GmmObsLik { .. } => Support::ObserveOnly,
        }
    }

    pub fn support_class(&self) -> SupportClass {
        match &self.kind {
            Kind::Normal { .. } | Kind::Uniform { .. } => SupportClass::Continuous,
            Kind::Poisson { .. } => SupportClass::Integer,
            Kind::Categorical { .. } => SupportClass::Index,
            Kind::GmmObsLik { .. } => SupportClass::ObserveOnly,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.support_class(), SupportClass::Integer | SupportClass::Index)
    }

    /// Exact log density (continuous) or log mass (discrete). Values outside
    /// the support give `-inf`.
    pub fn log_density(&self, value: f64) -> f64 {
        if value.is_nan() {
            return f64::NEG_INFINITY;
        }
        match &self.kind {
            Kind::Normal { mean, std } => {
                let z = (value - mean) / std;
                -0.5 * z * z - std.ln() - LN_SQRT_2PI
            }
            Kind::Uniform { lo, hi } => {
                if value >= *lo && value <= *hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Poisson { rate } => {
                if value < 0.0 || value.fract() != 0.0 || !value.is_finite() {
                    return f64::NEG_INFINITY;
                }
                value * rate.ln() - rate - ln_gamma(value + 1.0)
            }
            Kind::Categorical { probs } => {
                if value < 0.0 || value.fract() != 0.0 || value >= probs.len() as f64 {
                    return f64::NEG_INFINITY;
                }
                probs[value as usize].ln()
            }
            Kind::GmmObsLik { mus, std } => mixture_log_lik(mus, *std, value),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match &self.kind {
            Kind::Normal { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(mean + std * z)
            }
            Kind::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                Ok(lo + (hi - lo) * u)
            }
            Kind::Poisson { rate } => Ok(poisson_inversion(*rate, rng.random())),
            Kind::Categorical { probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(i as f64);
                    }
                }
                // rounding left a sliver above the last cumulative sum
                let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                Ok(last as f64)
            }
            Kind::GmmObsLik { .. } => Err(DccError::Unsupported(
                "the mixture likelihood can only be observed, not sampled".into(),
            )),
        }
    }
}

/// Inversion by sequential search.
fn poisson_inversion(rate: f64, u: f64) -> f64 {
    let mut k = 0u64;
    let mut p = (-rate).exp();
    let mut cdf = p;
    let cap = (rate + 60.0 * rate.sqrt() + 60.0) as u64;
    while u > cdf && k < cap {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
    }
    k as f64
}

/// `log(sum(exp(xs)))`, stable for large magnitudes. `-inf` when every entry
/// is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(DccError::Contract("log_sum_exp of an empty slice".into()));
    }
    Ok(lse(xs.iter().copied()))
}

/// Iterator form of [`log_sum_exp`]; an empty iterator yields `-inf`.
pub(crate) fn lse<I>(xs: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(exp(a) - exp(b))`, `-inf` when the difference is not positive.
pub(crate) fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// Log of the equal-weight mixture of `Normal(mu_k, std)` evaluated at `y`.
pub fn gmm_obs_log_lik(mus: &[f64], std: f64, y: f64) -> Result<f64> {
    if mus.is_empty() {
        return Err(DccError::Contract("mixture likelihood needs at least one mean".into()));
    }
    if !(std > 0.0) {
        return Err(DccError::Parameter(format!("std must be positive, got {std}")));
    }
    Ok(mixture_log_lik(mus, std, y))
}

fn mixture_log_lik(mus: &[f64], std: f64, y: f64) -> f64 {
    let inv = 1.0 / std;
    let quad = |m: f64| {
        let z = (y - m) * inv;
        -0.5 * z * z
    };
    let max = mus.iter().map(|&m| quad(m)).fold(f64::NEG_INFINITY, f64::max);
    // Components more than 50 nats below the closest one cannot change the sum.
    let sum: f64 = mus
        .iter()
        .map(|&m| quad(m) - max)
        .filter(|&d| d > -50.0)
        .map(f64::exp)
        .sum();
    max + sum.ln() - std.ln() - LN_SQRT_2PI - (mus.len() as f64).ln()
}

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Inverse of [`std_normal_cdf`] on `(0, 1)`.
pub(crate) fn std_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

/// A Gaussian of scale `s` truncated to `[lo, hi]`, with its centre first
/// clamped into the interval so the retained mass never vanishes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TruncatedGaussian {
    center: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    log_mass: f64,
}

impl TruncatedGaussian {
    pub(crate) fn new(center: f64, scale: f64, lo: f64, hi: f64) -> Self {
        let center = center.clamp(lo, hi);
        let cdf_lo = std_normal_cdf((lo - center) / scale);
        let cdf_hi = std_normal_cdf((hi - center) / scale);
        TruncatedGaussian { center, scale, lo, hi, cdf_lo, log_mass: (cdf_hi - cdf_lo).ln() }
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = self.cdf_lo + rng.random::<f64>() * self.log_mass.exp();
        (self.center + self.scale * std_normal_quantile(u)).clamp(self.lo, self.hi)
    }

    pub(crate) fn log_density(&self, x: f64) -> f64 {
        if !(self.lo..=self.hi).contains(&x) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.center) / self.scale;
        -0.5 * z * z - self.scale.ln() - LN_SQRT_2PI - self.log_mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn truncated_gaussian_integrates_and_stays_inside() {
        for (c, s, lo, hi) in [(0.5, 0.3, 0.0, 1.0), (-3.0, 0.5, 0.0, 1.0), (2.0, 10.0, 1.0, 1.5)] {
            let g = TruncatedGaussian::new(c, s, lo, hi);
            let n = 20_000;
            let h = (hi - lo) / n as f64;
            let mass: f64 = (0..n).map(|i| g.log_density(lo + (i as f64 + 0.5) * h).exp() * h).sum();
            assert!((mass - 1.0).abs() < 1e-6, "{mass}");
            let mut rng = stream(5, 0);
            let xs: Vec<f64> = (0..5000).map(|_| g.sample(&mut rng)).collect();
            assert!(xs.iter().all(|x| (lo..=hi).contains(x)));
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let exact: f64 = (0..n).map(|i| { let x = lo + (i as f64 + 0.5) * h; x * g.log_density(x).exp() * h }).sum();
            assert!((mean - exact).abs() < 0.02 * (hi - lo), "{mean} vs {exact}");
        }
        assert!((std_normal_quantile(0.9) - 1.281_551_565_544_600_4).abs() < 1e-12);
    }

    #[test]
    fn log_density_reference_values() {
        let n = Distribution::normal(0.0, 1.0).unwrap();
        assert!((n.log_density(0.0) + 0.918_938_533_204_672_7).abs() < 1e-12);
        let u = Distribution::uniform(0.0, 20.0).unwrap();
        assert!((u.log_density(5.0) + 20f64.ln()).abs() < 1e-12);
        assert_eq!(u.log_density(21.0), f64::NEG_INFINITY);
        // 4 ln 9 - 9 - ln 24, evaluated with mpmath at 50 digits
        let p = Distribution::poisson(9.0).unwrap();
        assert!((p.log_density(4.0) - (-3.389_155_521_003_068)).abs() < 1e-9);
        assert_eq!(p.log_density(2.5), f64::NEG_INFINITY);
        assert_eq!(p.log_density(-1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(Distribution::normal(0.0, 0.0).is_err());
        assert!(Distribution::normal(f64::NAN, 1.0).is_err());
        assert!(Distribution::uniform(1.0, 1.0).is_err());
        assert!(Distribution::poisson(-2.0).is_err());
        assert!(Distribution::categorical(vec![0.5, 0.6]).is_err());
        assert!(Distribution::categorical(vec![-0.5, 1.5]).is_err());
        assert!(Distribution::gmm_obs_lik(vec![], 1.0).is_err());
    }

    #[test]
    fn degenerate_categorical_always_returns_first_index() {
        let c = Distribution::categorical(vec![1.0, 0.0, 0.0]).unwrap();
        let mut rng = stream(3, 0);
        for _ in 0..1000 {
            assert_eq!(c.sample(&mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn mixture_likelihood_cannot_be_sampled() {
        let g = Distribution::gmm_obs_lik(vec![0.0], 1.0).unwrap();
        assert!(matches!(g.sample(&mut stream(0, 0)), Err(DccError::Unsupported(_))));
    }

    #[test]
    fn normal_sample_mean_within_clt_bound() {
        let (mu, sigma) = (3.0, 2.0);
        let d = Distribution::normal(mu, sigma).unwrap();
        let mut rng = stream(11, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| d.sample(&mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - mu).abs() < 4.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn shifted_poisson_frequency_matches_pmf() {
        // K = 1 + Poisson(9); exact P(K = 10) = P(Poisson(9) = 9)
        let d = Distribution::poisson(9.0).unwrap();
        let exact = d.log_density(9.0).exp();
        let mut rng = stream(5, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| d.sample(&mut rng).unwrap() + 1.0 == 10.0).count();
        let freq = hits as f64 / n as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((freq - exact).abs() < 3.0 * se, "freq {freq} exact {exact}");
    }

    #[test]
    fn continuous_densities_integrate_to_one() {
        let cases = [
            (Distribution::normal(1.5, 0.7).unwrap(), -10.0, 13.0),
            (Distribution::uniform(-2.0, 3.0).unwrap(), -2.0, 3.0),
        ];
        for (d, a, b) in cases {
            let n = 200_000;
            let h = (b - a) / n as f64;
            // midpoint rule
            let total: f64 = (0..n).map(|i| d.log_density(a + (i as f64 + 0.5) * h).exp() * h).sum();
            assert!((total - 1.0).abs() < 1e-4, "{d:?}: {total}");
        }
    }

    #[test]
    fn discrete_masses_sum_to_one() {
        for rate in [0.5, 9.0, 90.0] {
            let d = Distribution::poisson(rate).unwrap();
            let mut total = 0.0;
            let mut k = 0.0;
            while total < 1.0 - 1e-12 && k < 10_000.0 {
                total += d.log_density(k).exp();
                k += 1.0;
            }
            assert!((total - 1.0).abs() < 1e-10, "rate {rate}: {total}");
        }
        let c = Distribution::categorical(vec![0.3, 0.3, 0.2, 0.2]).unwrap();
        let total: f64 = (0..4).map(|k| c.log_density(k as f64).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn log_sum_exp_examples() {
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        assert!((log_sum_exp(&[0.0, 0.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        // -1000 + log(1 + e^-0.5), evaluated with mpmath
        let v = log_sum_exp(&[-1000.0, -1000.5]).unwrap();
        assert!((v - (-999.525_923_015_819_9)).abs() < 1e-10, "{v}");
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(log_sum_exp(&[]).is_err());
        assert!((log_sum_exp(&[700.0, 699.0]).unwrap() - (700.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn gmm_obs_log_lik_examples() {
        let single = Distribution::normal(2.0, 0.3).unwrap().log_density(1.1);
        assert!((gmm_obs_log_lik(&[2.0], 0.3, 1.1).unwrap() - single).abs() < 1e-12);
        assert!((gmm_obs_log_lik(&[2.0, 2.0], 0.3, 1.1).unwrap() - single).abs() < 1e-12);
        // second component sits 100 std away, contributing e^-5000
        let expected = 0.5f64.ln() + Distribution::normal(0.0, 0.1).unwrap().log_density(0.0);
        assert!((gmm_obs_log_lik(&[0.0, 10.0], 0.1, 0.0).unwrap() - expected).abs() < 1e-12);
        assert!(gmm_obs_log_lik(&[], 0.1, 0.0).is_err());
    }

    #[test]
    fn log_sub_exp_clamps() {
        assert_eq!(log_sub_exp(1.0, 1.0), f64::NEG_INFINITY);
        assert!((log_sub_exp(2f64.ln(), 0.0) - 0.0).abs() < 1e-15);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lse_is_permutation_invariant_and_shift_equivariant(
                xs in prop::collection::vec(-700.0f64..700.0, 1..20),
                c in -100.0f64..100.0,
            ) {
                let base = log_sum_exp(&xs).unwrap();
                let mut rev = xs.clone();
                rev.reverse();
                prop_assert!((log_sum_exp(&rev).unwrap() - base).abs() <= 1e-12 * base.abs().max(1.0));
                let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
                let s = log_sum_exp(&shifted).unwrap();
                prop_assert!((s - (base + c)).abs() <= 1e-12 * (base.abs() + c.abs()).max(1.0));
            }
        }
    }
}
