//! Writing a new program: Bayesian polynomial regression with an unknown
//! degree. The degree is a split-marked draw, so each degree is its own
//! straight-line program, and the evidence of each is available in closed
//! form to check against.
//!
//! `cargo run --release --example custom_model`

use dcc::config::DccConfig;
use dcc::dist::Distribution;
use dcc::engine::{path_posterior, run_dcc};
use dcc::interp::{Ctx, Halt, Program};
use dcc::rng::stream;
use rand::Rng;

const NOISE: f64 = 0.3;
const MAX_DEGREE: usize = 3;

struct PolyFit {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Program for PolyFit {
    type Output = Vec<f64>;

    fn name(&self) -> &str {
        "poly-fit"
    }

    fn run(&self, ctx: &mut Ctx<'_>) -> Result<Vec<f64>, Halt> {
        let uniform = Distribution::categorical(vec![0.25; MAX_DEGREE + 1])?;
        let degree = ctx.sample_split("degree", &uniform)? as usize;
        let prior = Distribution::normal(0.0, 1.0)?;
        let coef: Vec<f64> = (0..=degree).map(|_| ctx.sample("coef", &prior)).collect::<Result<_, _>>()?;
        let noise = Distribution::normal(0.0, NOISE)?;
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            let fit: f64 = coef.iter().rev().fold(0.0, |acc, c| acc * x + c);
            ctx.observe("y", &noise, y - fit)?;
        }
        Ok(coef)
    }
}

/// `log N(y; 0, F F^T + s^2 I)` for the design matrix of `degree`.
fn exact_log_evidence(xs: &[f64], ys: &[f64], degree: usize) -> f64 {
    let n = xs.len();
    let mut cov = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            cov[i][j] = (0..=degree).map(|d| xs[i].powi(d as i32) * xs[j].powi(d as i32)).sum::<f64>();
        }
        cov[i][i] += NOISE * NOISE;
    }
    // Cholesky factor, then forward substitution.
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            l[i][j] = if i == j { (cov[i][i] - s).sqrt() } else { (cov[i][j] - s) / l[j][j] };
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (ys[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let log_det: f64 = (0..n).map(|i| l[i][i].ln()).sum();
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = stream(11, 0);
    let xs: Vec<f64> = (0..20).map(|i| -1.0 + i as f64 / 10.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 - 1.5 * x + 0.8 * x * x + NOISE * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let model = PolyFit { xs: xs.clone(), ys: ys.clone() };

    let r = run_dcc(&model, &DccConfig { budget: 50_000, ..Default::default() })?;
    let exact: Vec<f64> = (0..=MAX_DEGREE).map(|d| exact_log_evidence(&xs, &ys, d) - ((MAX_DEGREE + 1) as f64).ln()).collect();
    let exact_total = exact.iter().map(|e| e.exp()).sum::<f64>().ln();
    for d in 0..=MAX_DEGREE {
        let est = r.slps.iter().find(|s| s.path.split_value("degree") == Some(d as i64)).map_or(f64::NEG_INFINITY, |s| s.log_z);
        let post = path_posterior(&r, |p| p.split_value("degree") == Some(d as i64));
        println!("degree {d}: log Z_k {est:9.3} (exact {:9.3})  posterior {post:.3} (exact {:.3})", exact[d], (exact[d] - exact_total).exp());
    }
    println!("log Z {:.3} (exact {:.3})", r.log_z, exact_total);
    Ok(())
}
