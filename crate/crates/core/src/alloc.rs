//! Choosing which SLP receives the next round of local inference.
//!
//! Each active SLP gets a utility combining an exploitation reward `tau`, a
//! targeted exploration term `p` and an optimism bonus:
//!
//! ```text
//! U_k = (1/S_k) * ((1-delta) tau_k / max tau + delta p_k / max p
//!                  + beta log(sum S) / sqrt(S_k))
//! ```
//!
//! The leading `1/S_k` multiplies the bonus too, so the bonus decays like
//! `S_k^(-3/2)`.

use serde::{Deserialize, Serialize};

use crate::dist::{log_add_exp, std_normal_cdf};
use crate::error::{DccError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocParams {
    pub delta: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Look-ahead batch size of the exploration term.
    pub t_a: f64,
}

impl Default for AllocParams {
    fn default() -> Self {
        AllocParams { delta: 0.5, beta: 1.0, kappa: 1.0, t_a: 100.0 }
    }
}

/// Allocation-relevant statistics of one SLP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlpStats {
    pub id: usize,
    pub s: u64,
    pub log_z: f64,
    pub log_var: f64,
    pub psi: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct UtilityInputs {
    pub slps: Vec<SlpStats>,
    /// Largest log-weight seen across all SLPs.
    pub log_w_th: f64,
    pub params: AllocParams,
}

/// `log tau = 0.5 * log(Z^2 + (1 + kappa) sigma^2)`.
pub fn tau_hat(log_z: f64, log_var: f64, kappa: f64) -> f64 {
    0.5 * log_add_exp(2.0 * log_z, (1.0 + kappa).ln() + log_var)
}

/// Chance that the best of `t_a` further log-weights, modelled as
/// `N(mean, std)`, beats `log_w_th`. Without any log-weights the SLP gets
/// the maximal value 1.
pub fn p_hat(psi: Option<(f64, f64)>, log_w_th: f64, t_a: f64) -> f64 {
    let Some((mean, std)) = psi else { return 1.0 };
    if log_w_th == f64::NEG_INFINITY {
        return 1.0;
    }
    // log Psi(log_w_th), computed through the upper tail for accuracy near 1.
    let log_cdf = if std > 0.0 {
        let z = (log_w_th - mean) / std;
        if z > 0.0 {
            (-std_normal_cdf(-z)).ln_1p()
        } else {
            std_normal_cdf(z).ln()
        }
    } else if log_w_th >= mean {
        0.0
    } else {
        f64::NEG_INFINITY
    };
    -(t_a * log_cdf).exp_m1()
}

/// Utility of every SLP in `inputs`, in input order.
pub fn utilities(inputs: &UtilityInputs) -> Result<Vec<f64>> {
    if inputs.slps.is_empty() {
        return Err(DccError::Contract("no active SLP to allocate to".into()));
    }
    let p = &inputs.params;
    let log_taus: Vec<f64> = inputs.slps.iter().map(|s| tau_hat(s.log_z, s.log_var, p.kappa)).collect();
    let p_hats: Vec<f64> = inputs.slps.iter().map(|s| p_hat(s.psi, inputs.log_w_th, p.t_a)).collect();
    let max_log_tau = log_taus.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_p = p_hats.iter().cloned().fold(0.0, f64::max);
    let total_s: u64 = inputs.slps.iter().map(|s| s.s).sum();
    let log_total = if total_s > 0 { (total_s as f64).ln() } else { 0.0 };
    Ok(inputs
        .slps
        .iter()
        .zip(log_taus.iter().zip(&p_hats))
        .map(|(slp, (&lt, &ph))| {
            if slp.s == 0 {
                return f64::INFINITY;
            }
            let tau_ratio = if max_log_tau == f64::NEG_INFINITY { 1.0 } else { (lt - max_log_tau).exp() };
            let p_ratio = if max_p > 0.0 { ph / max_p } else { 1.0 };
            let s = slp.s as f64;
            ((1.0 - p.delta) * tau_ratio + p.delta * p_ratio + p.beta * log_total / s.sqrt()) / s
        })
        .collect())
}

/// Id of the SLP with the largest utility; ties go to the smallest id.
pub fn select_slp(inputs: &UtilityInputs) -> Result<usize> {
    let us = utilities(inputs)?;
    let mut best: Option<(f64, usize)> = None;
    for (u, slp) in us.iter().zip(&inputs.slps) {
        best = match best {
            Some((bu, bid)) if bu > *u || (bu == *u && bid < slp.id) => Some((bu, bid)),
            _ => Some((*u, slp.id)),
        };
    }
    Ok(best.expect("non-empty").1)
}
