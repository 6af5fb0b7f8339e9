//! Posterior over the number of clusters of a Gaussian mixture.
//!
//! `cargo run --release --example gmm -- [budget] [seed] [key=value ...]`

use dcc::experiment::ModelName;
use dcc::data::{gmm_data, Dataset};
use dcc::engine::{path_posterior, run_dcc};
use dcc::models::gmm::k_of_path;
use dcc::models::Gmm;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let budget = args.first().map_or(Ok(100_000), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let Dataset::Gmm { ys } = gmm_data(0) else { unreachable!() };
    // Start from the tuned settings; extra `key=value` arguments override them.
    let mut cfg = ModelName::GmmOpen.default_config();
    cfg.budget = budget;
    cfg.seed = seed;
    for kv in args.iter().skip(2) {
        cfg.apply_text(kv)?;
    }
    let t = std::time::Instant::now();
    let r = run_dcc(&Gmm::open(ys), &cfg)?;
    println!("log Z = {:.3}  ({} iterations, {} executions, {:.1?})", r.log_z, r.iterations, r.executions, t.elapsed());
    let mut by_k: Vec<(usize, f64, u64)> =
        r.slps.iter().filter_map(|s| Some((k_of_path(&s.path)?, s.log_z, s.s))).collect();
    by_k.sort_by_key(|x| x.0);
    for (k, lz, s) in &by_k {
        println!("K = {k:2}  log Z_k = {lz:10.3}  rounds = {s}");
    }
    println!("{} SLPs discovered", r.slps.len());
    println!("p(K = 5 | y) = {:.4}", path_posterior(&r, |p| k_of_path(p) == Some(5)));
    Ok(())
}
