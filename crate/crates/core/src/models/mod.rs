//! Programs used by the experiments and examples.

pub mod gmm;
pub mod pcfg;
pub mod two_branch;

pub use gmm::{Gmm, GmmOutput};
pub use pcfg::{Expr, Pcfg};
pub use two_branch::TwoBranch;
