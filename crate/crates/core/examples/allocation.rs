//! How the allocator splits effort between SLPs: utilities for a few
//! hand-made situations, then the utility trace of a real run.
//!
//! `cargo run --release --example allocation`

use std::collections::BTreeMap;

use dcc::alloc::{p_hat, select_slp, tau_hat, utilities, AllocParams, SlpStats, UtilityInputs};
use dcc::config::DccConfig;
use dcc::engine::run_dcc;
use dcc::models::TwoBranch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = AllocParams::default();
    // Same evidence, but the second SLP has an uncertain estimate and has
    // been visited less.
    let slps = vec![
        SlpStats { id: 0, s: 40, log_z: -3.0, log_var: -9.0, psi: Some((-6.0, 1.0)) },
        SlpStats { id: 1, s: 10, log_z: -3.0, log_var: -4.0, psi: Some((-6.0, 2.0)) },
        SlpStats { id: 2, s: 25, log_z: -8.0, log_var: -20.0, psi: Some((-12.0, 0.5)) },
    ];
    let inputs = UtilityInputs { slps: slps.clone(), log_w_th: -2.5, params };
    for (s, u) in slps.iter().zip(utilities(&inputs)?) {
        println!(
            "SLP {}: tau = {:.4}  p = {:.4}  utility = {u:.5}",
            s.id,
            tau_hat(s.log_z, s.log_var, params.kappa).exp(),
            p_hat(s.psi, inputs.log_w_th, params.t_a)
        );
    }
    println!("selected: SLP {}", select_slp(&inputs)?);

    let cfg = DccConfig { budget: 20_000, log_utilities: true, ..Default::default() };
    let r = run_dcc(&TwoBranch::new(0.0), &cfg)?;
    let mut rounds: BTreeMap<usize, u64> = BTreeMap::new();
    for line in &r.log {
        *rounds.entry(line.slp_id).or_default() += 1;
    }
    println!("two-branch rounds per SLP: {rounds:?}");
    for line in r.log.iter().step_by(r.log.len().div_ceil(8).max(1)) {
        println!("iter {:4}  chose {}  utilities {:?}", line.iter, line.slp_id, line.utilities.as_deref().unwrap_or(&[]));
    }
    Ok(())
}
