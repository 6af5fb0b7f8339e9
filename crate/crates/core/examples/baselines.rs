//! The two reference engines next to DCC: prior importance sampling and a
//! single global Metropolis-Hastings chain.
//!
//! `cargo run --release --example baselines`

use std::collections::BTreeMap;

use dcc::baselines::{run_is, run_rmh};
use dcc::config::DccConfig;
use dcc::data::{gmm_data, Dataset};
use dcc::engine::{path_posterior, run_dcc};
use dcc::interp::KernelParams;
use dcc::models::gmm::k_of_path;
use dcc::models::{Gmm, TwoBranch};
use dcc::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = TwoBranch::new(0.0);
    let (z1, z2) = model.exact_evidence();
    println!("two-branch: exact log Z = {:.4}, P(first branch) = {:.4}", (z1 + z2).ln(), z1 / (z1 + z2));
    let budget = 20_000;
    let is = run_is(&model, budget, &mut stream(0, 0))?;
    let rmh = run_rmh(&model, budget, &KernelParams::default(), None, &mut stream(0, 1))?;
    let dcc = run_dcc(&model, &DccConfig { budget, ..Default::default() })?;
    let short = |p: &dcc::trace::Path| p.len() == 2;
    println!("  IS   log Z = {:.4}  P = {:.4}", is.log_z.unwrap(), is.path_probability(short));
    println!("  RMH  (no evidence)  P = {:.4}  acceptance {:.2}", rmh.path_probability(short), rmh.accepted as f64 / rmh.executions as f64);
    println!("  DCC  log Z = {:.4}  P = {:.4}", dcc.log_z, path_posterior(&dcc, short));

    // A global chain started from a Poisson(90) prior draw stays near K = 90.
    let Dataset::Gmm { ys } = gmm_data(0) else { unreachable!() };
    let model = Gmm::misspecified(ys);
    let rmh = run_rmh(&model, 200_000, &KernelParams::default(), None, &mut stream(0, 2))?;
    let mut visits: BTreeMap<usize, u64> = BTreeMap::new();
    for &v in &rmh.visits {
        *visits.entry(k_of_path(&rmh.paths[v as usize]).unwrap_or(0)).or_default() += 1;
    }
    println!("misspecified GMM, global RMH: steps per K = {visits:?}");
    println!("  p(K = 5) = {:.4}", rmh.path_probability(|p| k_of_path(p) == Some(5)));
    Ok(())
}
