//! The two-branch program: the sign of the first draw decides whether the
//! observation depends on one or two further latents.
//!
//! ```text
//! x1 ~ N(0, 2)
//! if x1 < 0 { x2 ~ N(-5, 2); y ~ N(x2, 2) }
//! else      { x2 ~ N(5, 2); x3 ~ N(x2, 2); y ~ N(x3, 2) }
//! ```

use crate::dist::Distribution;
use crate::interp::{Ctx, Halt, Program};

pub const STD: f64 = 2.0;

#[derive(Clone, Debug)]
pub struct TwoBranch {
    pub y: f64,
}

impl TwoBranch {
    pub fn new(y: f64) -> Self {
        TwoBranch { y }
    }

    /// Exact `(Z1, Z2)`: each branch is a linear-Gaussian chain, so the
    /// evidence is half the marginal density of `y`.
    pub fn exact_evidence(&self) -> (f64, f64) {
        let n = |x: f64, m: f64, v: f64| Distribution::normal(m, v.sqrt()).unwrap().log_density(x).exp();
        let s2 = STD * STD;
        (0.5 * n(self.y, -5.0, 2.0 * s2), 0.5 * n(self.y, 5.0, 3.0 * s2))
    }
}

impl Program for TwoBranch {
    type Output = f64;

    fn name(&self) -> &str {
        "two-branch"
    }

    fn run(&self, ctx: &mut Ctx<'_>) -> Result<f64, Halt> {
        let x1 = ctx.sample("l1", &Distribution::normal(0.0, STD)?)?;
        let last = if x1 < 0.0 {
            ctx.sample("l4", &Distribution::normal(-5.0, STD)?)?
        } else {
            let x2 = ctx.sample("l7", &Distribution::normal(5.0, STD)?)?;
            ctx.sample("l8", &Distribution::normal(x2, STD)?)?
        };
        ctx.observe("y1", &Distribution::normal(last, STD)?, self.y)?;
        Ok(last)
    }
}
