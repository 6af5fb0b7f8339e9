//! The experiment harness: named models with their datasets and tuned
//! settings, per-seed runs of any engine, and quantile summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{run_is, run_rmh, BaselineResult};
use crate::config::DccConfig;
use crate::data::{gmm_data, pcfg_data, Dataset};
use crate::engine::{lppd, path_posterior, run_dcc, DccResult, SlpEstimate};
use crate::error::{DccError, Result};
use crate::measure::EmpiricalMeasure;
use crate::models::gmm::k_of_path;
use crate::models::pcfg::predictive_log_density;
use crate::models::{Expr, Gmm, Pcfg, TwoBranch};
use crate::rng::stream;
use crate::trace::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    TwoBranch,
    GmmOpen,
    GmmMisspec,
    PcfgFn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Dcc,
    Is,
    Rmh,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [ModelName::TwoBranch, ModelName::GmmOpen, ModelName::GmmMisspec, ModelName::PcfgFn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::TwoBranch => "two-branch",
            ModelName::GmmOpen => "gmm-open",
            ModelName::GmmMisspec => "gmm-misspec",
            ModelName::PcfgFn => "pcfg-fn",
        }
    }

    /// Budget used when none is given.
    pub fn default_budget(self) -> u64 {
        match self {
            ModelName::TwoBranch => 20_000,
            ModelName::GmmOpen | ModelName::PcfgFn => 100_000,
            ModelName::GmmMisspec => 200_000,
        }
    }

    /// Tuned engine settings, as `key = value` text on top of the defaults.
    pub fn tuned_settings(self) -> &'static str {
        match self {
            ModelName::TwoBranch => "",
            ModelName::GmmOpen => {
                "rw_adapt = true
                 pimais_adapt = true
                 pimais_scale = 0.05
                 global_split_bias = 0.5
                 global_fanout = 2"
            }
            ModelName::GmmMisspec => {
                "n_chains = 4
                 m = 5
                 t_init = 100
                 c0_base = 1
                 rw_adapt = true
                 pimais_adapt = true
                 pimais_scale = 0.05
                 global_p_prior = 0
                 global_int_rw_rel = 0.5
                 global_split_bias = 1
                 global_fanout = 4"
            }
            ModelName::PcfgFn => {
                "rw_scale = 1.0
                 pi_mode = is"
            }
        }
    }

    pub fn default_config(self) -> DccConfig {
        let mut cfg = DccConfig { budget: self.default_budget(), ..Default::default() };
        cfg.apply_text(self.tuned_settings()).expect("tuned settings are valid");
        cfg
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = DccError;
    fn from_str(s: &str) -> Result<Self> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| DccError::Config(format!("unknown model {s:?}; expected two-branch, gmm-open, gmm-misspec or pcfg-fn")))
    }
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Dcc => "dcc",
            Engine::Is => "is",
            Engine::Rmh => "rmh",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = DccError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dcc" => Ok(Engine::Dcc),
            "is" => Ok(Engine::Is),
            "rmh" => Ok(Engine::Rmh),
            _ => Err(DccError::Config(format!("unknown engine {s:?}; expected dcc, is or rmh"))),
        }
    }
}

/// A model together with where its data comes from.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: ModelName,
    pub data_seed: u64,
    /// Load the dataset from this CSV instead of generating it.
    pub data_file: Option<PathBuf>,
}

impl ModelSpec {
    pub fn new(name: ModelName) -> Self {
        ModelSpec { name, data_seed: 0, data_file: None }
    }

    /// The dataset, if the model has one.
    pub fn dataset(&self) -> Result<Option<Dataset>> {
        let expected_gmm = matches!(self.name, ModelName::GmmOpen | ModelName::GmmMisspec);
        let data = match (&self.data_file, self.name) {
            (_, ModelName::TwoBranch) => return Ok(None),
            (Some(path), _) => Dataset::read(path)?,
            (None, ModelName::PcfgFn) => pcfg_data(self.data_seed),
            (None, _) => gmm_data(self.data_seed),
        };
        if matches!(data, Dataset::Gmm { .. }) != expected_gmm {
            return Err(DccError::Config(format!("dataset does not fit model {}", self.name)));
        }
        Ok(Some(data))
    }

    pub fn build(&self) -> Result<Built> {
        Ok(match (self.name, self.dataset()?) {
            (ModelName::TwoBranch, _) => Built::TwoBranch(TwoBranch::new(0.0)),
            (ModelName::GmmOpen, Some(Dataset::Gmm { ys })) => Built::Gmm(Gmm::open(ys)),
            (ModelName::GmmMisspec, Some(Dataset::Gmm { ys })) => Built::Gmm(Gmm::misspecified(ys)),
            (ModelName::PcfgFn, Some(Dataset::Pcfg { train, test })) => {
                let (xs, ys) = train.into_iter().unzip();
                Built::Pcfg(Pcfg::new(xs, ys), test)
            }
            _ => unreachable!("dataset kind checked above"),
        })
    }
}

/// A constructed model. Programs differ in output type, so they are kept
/// apart rather than boxed.
#[derive(Clone, Debug)]
pub enum Built {
    TwoBranch(TwoBranch),
    Gmm(Gmm),
    Pcfg(Pcfg, Vec<(f64, f64)>),
}

/// Everything recorded about one seeded run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SeedReport {
    pub model: String,
    pub engine: String,
    pub seed: u64,
    pub budget: u64,
    pub executions: u64,
    pub log_z: Option<f64>,
    /// `(log Z_hat - log Z)^2` where the exact evidence is known.
    pub sq_log_z_error: Option<f64>,
    /// Two-branch: posterior probability of the first branch.
    pub p_first_branch: Option<f64>,
    /// GMM: posterior probability of five clusters.
    pub p_k5: Option<f64>,
    /// Mixture models: number of distinct cluster counts visited or found.
    pub distinct_k: Option<usize>,
    pub lppd: Option<f64>,
    pub distinct_paths: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub slps: Vec<SlpRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trajectory: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlpRow {
    pub id: usize,
    pub path: String,
    /// Absent until the SLP has a finite estimate.
    pub log_z: Option<f64>,
    pub rounds: u64,
    pub status: String,
}

impl From<&SlpEstimate> for SlpRow {
    fn from(s: &SlpEstimate) -> Self {
        let status = serde_json::to_value(s.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        SlpRow { id: s.id, path: s.path.digest(), log_z: s.log_z.is_finite().then_some(s.log_z), rounds: s.s, status }
    }
}

/// One run's report plus its JSON-lines log.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub report: SeedReport,
    pub log: String,
}

enum Outcome<O> {
    Dcc(DccResult<O>),
    Baseline(BaselineResult<O>),
}

impl<O> Outcome<O> {
    fn measure(&self) -> &EmpiricalMeasure<O> {
        match self {
            Outcome::Dcc(r) => &r.measure,
            Outcome::Baseline(r) => &r.measure,
        }
    }

    fn path_probability(&self, pred: impl Fn(&Path) -> bool) -> f64 {
        match self {
            Outcome::Dcc(r) => path_posterior(r, pred),
            Outcome::Baseline(r) => r.path_probability(pred),
        }
    }

    fn paths(&self) -> Vec<Path> {
        match self {
            Outcome::Dcc(r) => r.slps.iter().map(|s| s.path.clone()).collect(),
            Outcome::Baseline(r) => r.paths.clone(),
        }
    }

    fn fill(&self, report: &mut SeedReport) -> String {
        match self {
            Outcome::Dcc(r) => {
                report.executions = r.executions;
                report.log_z = Some(r.log_z);
                report.slps = r.slps.iter().map(SlpRow::from).collect();
                r.log_jsonl()
            }
            Outcome::Baseline(r) => {
                report.executions = r.executions;
                report.log_z = r.log_z;
                report.trajectory = r.trajectory.clone();
                r.trajectory
                    .iter()
                    .map(|(n, lz)| serde_json::json!({ "executions": n, "log_Z": lz }).to_string() + "\n")
                    .collect()
            }
        }
    }
}

fn run_engine<P: crate::interp::Program>(program: &P, engine: Engine, cfg: &DccConfig) -> Result<Outcome<P::Output>>
where
    P::Output: Clone,
{
    Ok(match engine {
        Engine::Dcc => Outcome::Dcc(run_dcc(program, cfg)?),
        Engine::Is => Outcome::Baseline(run_is(program, cfg.budget, &mut stream(cfg.seed, 0xba5e))?),
        Engine::Rmh => Outcome::Baseline(run_rmh(program, cfg.budget, &cfg.local.kernel, None, &mut stream(cfg.seed, 0xba5f))?),
    })
}

/// Run one engine on one seed. `cfg.seed` and `cfg.budget` are honoured by
/// every engine; the rest only by DCC.
pub fn run_seed(spec: &ModelSpec, engine: Engine, cfg: &DccConfig) -> Result<SeedRun> {
    let mut report = SeedReport {
        model: spec.name.to_string(),
        engine: engine.to_string(),
        seed: cfg.seed,
        budget: cfg.budget,
        ..Default::default()
    };
    let log = match spec.build()? {
        Built::TwoBranch(m) => {
            let out = run_engine(&m, engine, cfg)?;
            let (z1, z2) = m.exact_evidence();
            let log = out.fill(&mut report);
            report.sq_log_z_error = report.log_z.map(|lz| (lz - (z1 + z2).ln()).powi(2));
            report.p_first_branch = Some(out.path_probability(|p| p.len() == 2));
            report.distinct_paths = out.paths().len();
            log
        }
        Built::Gmm(m) => {
            let out = run_engine(&m, engine, cfg)?;
            let log = out.fill(&mut report);
            report.p_k5 = Some(out.path_probability(|p| k_of_path(p) == Some(5)));
            let paths = out.paths();
            let mut ks: Vec<usize> = paths.iter().filter_map(k_of_path).collect();
            ks.sort_unstable();
            ks.dedup();
            report.distinct_k = Some(ks.len());
            report.distinct_paths = paths.len();
            log
        }
        Built::Pcfg(m, test) => {
            let out = run_engine(&m, engine, cfg)?;
            let log = out.fill(&mut report);
            let score = |n: usize, p: &crate::measure::Particle<Expr>| predictive_log_density(&p.output, test[n].0, test[n].1);
            report.lppd = Some(lppd(out.measure(), test.len(), score)?);
            report.distinct_paths = out.paths().len();
            log
        }
    };
    Ok(SeedRun { report, log })
}

/// Median and inter-quartile range of one metric across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub mean: f64,
    pub n: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Quantiles {
            median: quantile(&v, 0.5),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            n: v.len(),
        })
    }
}

/// Aggregate of all seeds of one model and engine.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub engine: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, Quantiles>,
    pub per_seed: BTreeMap<String, Vec<Option<f64>>>,
}

pub fn summarize(reports: &[SeedReport]) -> Vec<Summary> {
    let mut groups: BTreeMap<(String, String), Vec<&SeedReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.model.clone(), r.engine.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((model, engine), mut rs)| {
            rs.sort_by_key(|r| r.seed);
            let columns: [(&str, fn(&SeedReport) -> Option<f64>); 7] = [
                ("log_z", |r| r.log_z),
                ("sq_log_z_error", |r| r.sq_log_z_error),
                ("p_first_branch", |r| r.p_first_branch),
                ("p_k5", |r| r.p_k5),
                ("distinct_k", |r| r.distinct_k.map(|k| k as f64)),
                ("lppd", |r| r.lppd),
                ("distinct_paths", |r| Some(r.distinct_paths as f64)),
            ];
            let mut metrics = BTreeMap::new();
            let mut per_seed = BTreeMap::new();
            for (name, get) in columns {
                let vals: Vec<Option<f64>> = rs.iter().map(|r| get(r)).collect();
                if vals.iter().all(Option::is_none) {
                    continue;
                }
                let present: Vec<f64> = vals.iter().flatten().copied().collect();
                if let Some(q) = Quantiles::of(&present) {
                    metrics.insert(name.to_string(), q);
                }
                per_seed.insert(name.to_string(), vals);
            }
            Summary { model, engine, seeds: rs.iter().map(|r| r.seed).collect(), metrics, per_seed }
        })
        .collect()
}

/// File stem of one seed's log.
pub fn run_file_name(model: ModelName, engine: Engine, seed: u64) -> String {
    format!("{model}_{engine}_seed{seed}.jsonl")
}

/// Run `seeds` and, if `out` is given, write one JSON-lines file per seed
/// (log lines followed by a final `{"report": ...}` line) and
/// `summary.json`.
pub fn run_experiment(spec: &ModelSpec, engine: Engine, base: &DccConfig, seeds: &[u64], out: Option<&FsPath>) -> Result<(Vec<SeedReport>, Vec<Summary>)> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
    }
    let mut reports = Vec::new();
    for &seed in seeds {
        let cfg = DccConfig { seed, ..base.clone() };
        let run = run_seed(spec, engine, &cfg)?;
        if let Some(dir) = out {
            let mut text = run.log;
            text.push_str(&serde_json::json!({ "report": &run.report }).to_string());
            text.push('\n');
            std::fs::write(dir.join(run_file_name(spec.name, engine, seed)), text)?;
        }
        reports.push(run.report);
    }
    let summary = summarize(&reports);
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok((reports, summary))
}

/// Collect the reports of every run file in `dir`.
pub fn read_reports(dir: &FsPath) -> Result<Vec<SeedReport>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f)?;
        let Some(last) = text.lines().rev().find(|l| !l.trim().is_empty()) else { continue };
        let v: serde_json::Value = serde_json::from_str(last)?;
        if let Some(r) = v.get("report") {
            out.push(serde_json::from_value(r.clone())?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in ModelName::ALL {
            assert_eq!(m.as_str().parse::<ModelName>().unwrap(), m);
            m.default_config().validate().unwrap();
        }
        assert!("gmm".parse::<ModelName>().is_err());
        assert!("smc".parse::<Engine>().is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let q = Quantiles::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.median, q.q25, q.q75, q.mean), (3.0, 2.0, 4.0, 3.0));
        let q = Quantiles::of(&[1.0, 2.0]).unwrap();
        assert_eq!((q.median, q.q25, q.q75), (1.5, 1.25, 1.75));
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn data_kind_must_fit_model() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.csv");
        pcfg_data(0).write(&f).unwrap();
        let spec = ModelSpec { name: ModelName::GmmOpen, data_seed: 0, data_file: Some(f.clone()) };
        assert!(matches!(spec.build(), Err(DccError::Config(_))));
        let spec = ModelSpec { name: ModelName::PcfgFn, data_seed: 0, data_file: Some(f) };
        assert!(matches!(spec.build(), Ok(Built::Pcfg(..))));
    }

    #[test]
    fn files_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::new(ModelName::TwoBranch);
        let cfg = DccConfig { budget: 2000, ..Default::default() };
        let (reports, summary) = run_experiment(&spec, Engine::Is, &cfg, &[0, 1, 2], Some(dir.path())).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports.iter().all(|r| r.trajectory.last().unwrap().0 == 2000));
        let back = read_reports(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        let again = summarize(&back);
        assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&summary).unwrap());
        assert_eq!(summary[0].seeds, vec![0, 1, 2]);
        assert!(summary[0].metrics.contains_key("sq_log_z_error"));
    }
}
