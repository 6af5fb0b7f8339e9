//! Function induction with a probabilistic grammar.
//!
//! `e -> x | x^2 | sin(a*e) | a*e + b*e`, depth at most three, no plus
//! directly under a plus. Each rule choice is split-marked, so every
//! expression shape is its own SLP; the coefficients are `N(0, 1)`.

use std::fmt;

use crate::dist::Distribution;
use crate::interp::{Ctx, Halt, Program};

pub const MAX_DEPTH: u32 = 3;
pub const OBS_STD: f64 = 0.5;

const RULE_PROBS: [f64; 4] = [0.3, 0.3, 0.2, 0.2];
const AFTER_PLUS_PROBS: [f64; 3] = [0.35, 0.35, 0.3];
const LEAF_PROBS: [f64; 2] = [0.5, 0.5];

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    X,
    X2,
    Sin(f64, Box<Expr>),
    Plus(f64, Box<Expr>, f64, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::X => x,
            Expr::X2 => x * x,
            Expr::Sin(a, e) => (a * e.eval(x)).sin(),
            Expr::Plus(a, l, b, r) => a * l.eval(x) + b * r.eval(x),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::X => f.write_str("x"),
            Expr::X2 => f.write_str("x^2"),
            Expr::Sin(a, e) => write!(f, "sin({a:.3}*{e})"),
            Expr::Plus(a, l, b, r) => write!(f, "({a:.3}*{l} + {b:.3}*{r})"),
        }
    }
}

/// The rule that produced the parent node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Parent {
    Root,
    Sin,
    Plus,
}

/// The ground-truth function used to generate data.
pub fn target_fn(x: f64) -> f64 {
    -x + 2.0 * (5.0 * x * x).sin()
}

#[derive(Clone, Debug)]
pub struct Pcfg {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Pcfg {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len(), "inputs and outputs must pair up");
        Pcfg { xs, ys }
    }

    fn gen(&self, ctx: &mut Ctx<'_>, depth: u32, parent: Parent) -> Result<Expr, Halt> {
        let rule = if depth < MAX_DEPTH {
            if parent == Parent::Plus {
                ctx.sample_split("rule_np", &Distribution::categorical(AFTER_PLUS_PROBS.to_vec())?)?
            } else {
                ctx.sample_split("rule", &Distribution::categorical(RULE_PROBS.to_vec())?)?
            }
        } else {
            ctx.sample_split("rule_leaf", &Distribution::categorical(LEAF_PROBS.to_vec())?)?
        };
        let std_normal = Distribution::normal(0.0, 1.0)?;
        Ok(match rule {
            0 => {
                if parent == Parent::Root {
                    ctx.sample("x_unused", &std_normal)?;
                }
                Expr::X
            }
            1 => {
                ctx.sample("x2_unused", &std_normal)?;
                Expr::X2
            }
            2 => {
                let a = ctx.sample("sin_a", &std_normal)?;
                Expr::Sin(a, Box::new(self.gen(ctx, depth + 1, Parent::Sin)?))
            }
            _ => {
                let a = ctx.sample("plus_a", &std_normal)?;
                let b = ctx.sample("plus_b", &std_normal)?;
                let l = self.gen(ctx, depth + 1, Parent::Plus)?;
                let r = self.gen(ctx, depth + 1, Parent::Plus)?;
                Expr::Plus(a, Box::new(l), b, Box::new(r))
            }
        })
    }
}

/// `log N(y; f(x), 0.5)` for a sampled expression.
pub fn predictive_log_density(expr: &Expr, x: f64, y: f64) -> f64 {
    let z = (y - expr.eval(x)) / OBS_STD;
    -0.5 * z * z - OBS_STD.ln() - crate::dist::LN_SQRT_2PI
}

impl Program for Pcfg {
    type Output = Expr;

    fn name(&self) -> &str {
        "pcfg-fn"
    }

    fn run(&self, ctx: &mut Ctx<'_>) -> Result<Expr, Halt> {
        let f = self.gen(ctx, 1, Parent::Root)?;
        let obs = Distribution::normal(0.0, OBS_STD)?;
        for (&x, &y) in self.xs.iter().zip(&self.ys) {
            // Shift the observation instead of rebuilding the distribution.
            ctx.observe("y", &obs, y - f.eval(x))?;
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{run_prior, score_trace, Score};
    use crate::rng::stream;
    use crate::trace::{Address, Path, Site};
    use std::collections::HashSet;

    fn count_shapes(depth: u32, after_plus: bool) -> usize {
        if depth == MAX_DEPTH {
            return 2;
        }
        let sin = count_shapes(depth + 1, false);
        if after_plus {
            2 + sin
        } else {
            2 + sin + count_shapes(depth + 1, true).pow(2)
        }
    }

    #[test]
    fn grammar_has_26_shapes() {
        assert_eq!(count_shapes(1, false), 26);
        let m = Pcfg::new(vec![0.0], vec![0.0]);
        let mut rng = stream(5, 0);
        let paths: HashSet<Path> = (0..20_000).map(|_| run_prior(&m, &mut rng).unwrap().path()).collect();
        assert_eq!(paths.len(), 26);
    }

    #[test]
    fn bare_x_needs_one_rule_draw() {
        let m = Pcfg::new(vec![1.0], vec![1.0]);
        let mut rng = stream(6, 0);
        let t = (0..1000).map(|_| run_prior(&m, &mut rng).unwrap()).find(|t| *t.output() == Expr::X).unwrap();
        assert_eq!(t.draws().iter().filter(|d| d.address.split_value.is_some()).count(), 1);
    }

    #[test]
    fn fixed_structure_score_unrolls_by_hand() {
        // sin(a * x^2) with a = 0.7 and a dummy draw of 0.1 under x^2.
        let addr = |site: &'static str, split: Option<i64>| Address { site: Site(site), occurrence: 0, split_value: split };
        let path = Path::new(vec![
            addr("rule", Some(2)),
            addr("sin_a", None),
            Address { site: Site("rule"), occurrence: 1, split_value: Some(1) },
            addr("x2_unused", None),
        ]);
        let xs = vec![-1.0, 0.25, 1.2];
        let ys = vec![0.5, -0.3, 0.9];
        let m = Pcfg::new(xs.clone(), ys.clone());
        let Score::OnPath(v) = score_trace(&m, &path, &[2.0, 0.7, 1.0, 0.1]).unwrap() else { panic!() };
        let ln = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut expected = 0.2f64.ln() + ln(0.7, 0.0, 1.0) + 0.3f64.ln() + ln(0.1, 0.0, 1.0);
        for (x, y) in xs.iter().zip(&ys) {
            expected += ln(*y, (0.7 * x * x).sin(), 0.5);
        }
        assert!((v - expected).abs() < 1e-10);
    }

    #[test]
    fn expression_evaluation() {
        let e = Expr::Plus(-1.0, Box::new(Expr::X), 2.0, Box::new(Expr::Sin(5.0, Box::new(Expr::X2))));
        for x in [-1.3, 0.0, 0.4] {
            assert!((e.eval(x) - target_fn(x)).abs() < 1e-12);
        }
    }
}
