//! Symbolic regression with a probabilistic grammar: DCC against prior
//! importance sampling on held-out predictive density.
//!
//! `cargo run --release --example function_induction -- [budget] [seed] [key=value ...]`

use dcc::baselines::run_is;
use dcc::experiment::ModelName;
use dcc::data::{pcfg_data, Dataset};
use dcc::engine::{lppd, run_dcc};
use dcc::models::pcfg::predictive_log_density;
use dcc::models::Pcfg;
use dcc::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let budget = args.first().map_or(Ok(100_000), |s| s.parse())?;
    let seed = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let Dataset::Pcfg { train, test } = pcfg_data(0) else { unreachable!() };
    let (xs, ys) = train.into_iter().unzip();
    let model = Pcfg::new(xs, ys);
    // Start from the tuned settings; extra `key=value` arguments override them.
    let mut cfg = ModelName::PcfgFn.default_config();
    cfg.budget = budget;
    cfg.seed = seed;
    for kv in args.iter().skip(2) {
        cfg.apply_text(kv)?;
    }
    let score = |n: usize, p: &dcc::measure::Particle<dcc::models::Expr>| predictive_log_density(&p.output, test[n].0, test[n].1);

    let t = std::time::Instant::now();
    let r = run_dcc(&model, &cfg)?;
    println!("DCC  log Z = {:8.3}  LPPD = {:8.3}  ({} SLPs, {:.1?})", r.log_z, lppd(&r.measure, test.len(), score)?, r.slps.len(), t.elapsed());
    let mut top: Vec<_> = r.slps.iter().filter(|s| s.log_z.is_finite()).collect();
    top.sort_by(|a, b| b.log_z.total_cmp(&a.log_z));
    for s in top.iter().take(4) {
        let best = r.measure.particles().iter().filter(|p| p.path == s.path).max_by(|a, b| a.weight.total_cmp(&b.weight));
        let shown = best.map_or_else(String::new, |p| p.output.to_string());
        println!("  log Z_k = {:9.3}  S = {:4}  e.g. {shown}", s.log_z, s.s);
    }

    let is = run_is(&model, budget, &mut stream(seed, 99))?;
    println!("IS   log Z = {:8.3}  LPPD = {:8.3}", is.log_z.unwrap_or(f64::NAN), lppd(&is.measure, test.len(), score)?);
    Ok(())
}
