//! The smallest program with stochastic support: the sign of one draw picks
//! between two straight-line programs of different dimension.
//!
//! `cargo run --release --example two_branch -- [budget] [seed]`

use dcc::config::DccConfig;
use dcc::engine::{expectation, path_posterior, run_dcc};
use dcc::models::TwoBranch;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let budget = args.first().map_or(Ok(20_000), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(0), |s| s.parse())?;

    let model = TwoBranch::new(0.0);
    let (z1, z2) = model.exact_evidence();
    let r = run_dcc(&model, &DccConfig { budget, seed, ..Default::default() })?;

    for s in &r.slps {
        println!("SLP {} {}  log Z_k = {:.4}  rounds = {}", s.id, s.path, s.log_z, s.s);
    }
    println!("log Z      estimate {:.4}  exact {:.4}", r.log_z, (z1 + z2).ln());
    let short = path_posterior(&r, |p| p.len() == 2);
    println!("P(x1 < 0)  estimate {:.4}  exact {:.4}", short, z1 / (z1 + z2));
    println!("E[output]  {:.4}", expectation(&r, |p| p.output));
    Ok(())
}
