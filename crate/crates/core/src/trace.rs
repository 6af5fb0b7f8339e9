//! Execution traces, addresses and paths.
//!
//! A trace records every `sample` reached during one execution together with
//! the log prior of the drawn value, plus the log likelihood of every
//! `observe`. The ordered addresses of the draws form the trace's [`Path`];
//! traces sharing a path belong to the same straight-line program.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::Serialize;

use crate::dist::SupportClass;
use crate::error::{DccError, Result};

/// Static identifier of a `sample` or `observe` statement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Site(pub &'static str);

impl From<&'static str> for Site {
    fn from(s: &'static str) -> Self {
        Site(s)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

/// Site plus the number of earlier hits of that site in the same execution.
/// Split-marked sites also carry their drawn value, so each value of such a
/// site opens a separate path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Address {
    pub site: Site,
    pub occurrence: u32,
    pub split_value: Option<i64>,
}

impl Address {
    pub fn key(&self) -> DrawKey {
        DrawKey { site: self.site, occurrence: self.occurrence }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.site, self.occurrence)?;
        if let Some(v) = self.split_value {
            write!(f, "#{v}")?;
        }
        Ok(())
    }
}

/// Replay key of a draw: the address without its split value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DrawKey {
    pub site: Site,
    pub occurrence: u32,
}

/// The ordered address sequence of a trace.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Path(Arc<[Address]>);

impl Hash for Path {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state);
    }
}

impl Path {
    pub fn new(addresses: Vec<Address>) -> Self {
        Path(addresses.into())
    }

    pub fn addresses(&self) -> &[Address] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Split value recorded at the first occurrence of `site`, if any.
    pub fn split_value(&self, site: &str) -> Option<i64> {
        self.0.iter().find(|a| a.site.0 == site).and_then(|a| a.split_value)
    }

    /// Stable 64-bit FNV-1a digest of the textual form, used in run logs.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Path{self}")
    }
}

impl Serialize for Path {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub address: Address,
    pub value: f64,
    pub log_prior: f64,
    pub support: SupportClass,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObserveTerm {
    pub site: Site,
    pub value: f64,
    pub log_lik: f64,
}

/// One complete program execution. Immutable once built by the interpreter.
#[derive(Clone, Debug)]
pub struct Trace<O> {
    pub(crate) draws: Vec<Draw>,
    pub(crate) observes: Vec<ObserveTerm>,
    pub(crate) log_gamma: f64,
    pub(crate) output: O,
    pub(crate) overflow: bool,
}

impl<O> Trace<O> {
    pub(crate) fn new(draws: Vec<Draw>, observes: Vec<ObserveTerm>, output: O, n_thresh: usize) -> Self {
        let log_gamma = draws.iter().map(|d| d.log_prior).sum::<f64>()
            + observes.iter().map(|o| o.log_lik).sum::<f64>();
        let overflow = draws.len() > n_thresh;
        Trace { draws, observes, log_gamma, output, overflow }
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn observes(&self) -> &[ObserveTerm] {
        &self.observes
    }

    pub fn log_gamma(&self) -> f64 {
        self.log_gamma
    }

    pub fn log_prior(&self) -> f64 {
        self.draws.iter().map(|d| d.log_prior).sum()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.observes.iter().map(|o| o.log_lik).sum()
    }

    pub fn output(&self) -> &O {
        &self.output
    }

    /// True when the trace drew more values than the program's `n_thresh`.
    pub fn is_overflow(&self) -> bool {
        self.overflow
    }

    pub fn values(&self) -> Vec<f64> {
        self.draws.iter().map(|d| d.value).collect()
    }

    pub fn path(&self) -> Path {
        path_of(self)
    }

    /// Single-line text form: draws as `site:occ[#split]=value[log_prior]`,
    /// then observes as `site=value[log_lik]`, then the total.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        for d in &self.draws {
            out.push_str(&format!("{}={:?}[{:?}] ", d.address, d.value, d.log_prior));
        }
        out.push('|');
        for o in &self.observes {
            out.push_str(&format!(" {}={:?}[{:?}]", o.site, o.value, o.log_lik));
        }
        out.push_str(&format!(" | log_gamma={:?}", self.log_gamma));
        out
    }
}

pub fn path_of<O>(trace: &Trace<O>) -> Path {
    Path::new(trace.draws.iter().map(|d| d.address).collect())
}

/// True when the trace's addresses are exactly `path`.
pub fn on_path<O>(trace: &Trace<O>, path: &Path) -> bool {
    trace.draws.len() == path.len() && trace.draws.iter().zip(path.addresses()).all(|(d, a)| d.address == *a)
}

/// `log gamma_k`: the trace's log joint if it lies on `slp_path`, else `-inf`.
pub fn log_gamma_k<O>(trace: &Trace<O>, slp_path: &Path) -> f64 {
    if on_path(trace, slp_path) {
        trace.log_gamma
    } else {
        f64::NEG_INFINITY
    }
}

/// A parsed text record, with owned site names.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub draws: Vec<(String, u32, Option<i64>, f64, f64)>,
    pub observes: Vec<(String, f64, f64)>,
    pub log_gamma: f64,
}

impl TraceRecord {
    pub fn parse(line: &str) -> Result<Self> {
        let bad = |m: &str| DccError::Contract(format!("malformed trace record ({m}): {line}"));
        let mut parts = line.split('|');
        let (draws_s, obs_s, total_s) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(bad("expected three sections")),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("number"));
        // `name=value[term]`
        let entry = |tok: &str| -> Result<(String, f64, f64)> {
            let (name, rest) = tok.split_once('=').ok_or_else(|| bad("missing ="))?;
            let (value, term) = rest.split_once('[').ok_or_else(|| bad("missing ["))?;
            let term = term.strip_suffix(']').ok_or_else(|| bad("missing ]"))?;
            Ok((name.to_string(), num(value)?, num(term)?))
        };
        let mut draws = Vec::new();
        for tok in draws_s.split_whitespace() {
            let (addr, value, lp) = entry(tok)?;
            let (site, occ) = addr.split_once(':').ok_or_else(|| bad("missing :"))?;
            let (occ, split) = match occ.split_once('#') {
                Some((o, s)) => (o, Some(s.parse::<i64>().map_err(|_| bad("split"))?)),
                None => (occ, None),
            };
            let occ = occ.parse::<u32>().map_err(|_| bad("occurrence"))?;
            draws.push((site.to_string(), occ, split, value, lp));
        }
        let observes = obs_s.split_whitespace().map(entry).collect::<Result<Vec<_>>>()?;
        let log_gamma = total_s
            .trim()
            .strip_prefix("log_gamma=")
            .ok_or_else(|| bad("total"))
            .and_then(num)?;
        Ok(TraceRecord { draws, observes, log_gamma })
    }
}
