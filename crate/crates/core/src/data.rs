//! Synthetic datasets and their CSV form.

use std::path::Path as FsPath;

use rand::Rng;
use rand_distr::{Distribution as _, Normal, Uniform};

use crate::error::{DccError, Result};
use crate::models::gmm::{slice_bounds, OBS_STD as GMM_STD};
use crate::models::pcfg::{target_fn, OBS_STD as PCFG_STD};
use crate::rng::stream;

pub const GMM_POINTS: usize = 150;
pub const GMM_TRUE_K: usize = 5;
pub const PCFG_TRAIN: usize = 30;
pub const PCFG_TEST: usize = 30;
pub const PCFG_X_RANGE: (f64, f64) = (-1.5, 1.5);

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Gmm { ys: Vec<f64> },
    Pcfg { train: Vec<(f64, f64)>, test: Vec<(f64, f64)> },
}

/// 150 points from five clusters whose means follow the model prior for
/// `K = 5`; each point picks its cluster uniformly.
pub fn gmm_data(seed: u64) -> Dataset {
    let mut rng = stream(seed, 0xda7a);
    let mus: Vec<f64> = (0..GMM_TRUE_K)
        .map(|k| {
            let (lo, hi) = slice_bounds(k, GMM_TRUE_K);
            rng.random_range(lo..hi)
        })
        .collect();
    let noise = Normal::new(0.0, GMM_STD).expect("valid std");
    let ys = (0..GMM_POINTS)
        .map(|_| mus[rng.random_range(0..GMM_TRUE_K)] + noise.sample(&mut rng))
        .collect();
    Dataset::Gmm { ys }
}

/// Noisy samples of `-x + 2 sin(5 x^2)` at uniform inputs.
pub fn pcfg_data(seed: u64) -> Dataset {
    let mut rng = stream(seed, 0xda7b);
    let xs = Uniform::new(PCFG_X_RANGE.0, PCFG_X_RANGE.1).expect("valid range");
    let noise = Normal::new(0.0, PCFG_STD).expect("valid std");
    let mut draw = |n: usize| -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                let x = xs.sample(&mut rng);
                (x, target_fn(x) + noise.sample(&mut rng))
            })
            .collect()
    };
    let train = draw(PCFG_TRAIN);
    let test = draw(PCFG_TEST);
    Dataset::Pcfg { train, test }
}

impl Dataset {
    /// CSV with a header row. Floats use the shortest round-tripping form.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            Dataset::Gmm { ys } => {
                w.write_record(["y"])?;
                for y in ys {
                    w.write_record([format!("{y:?}")])?;
                }
            }
            Dataset::Pcfg { train, test } => {
                w.write_record(["split", "x", "y"])?;
                for (split, rows) in [("train", train), ("test", test)] {
                    for (x, y) in rows {
                        w.write_record([split.to_string(), format!("{x:?}"), format!("{y:?}")])?;
                    }
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let bad = |m: String| DccError::Config(format!("dataset: {m}"));
        let headers: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
        match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["y"] => {
                let mut ys = Vec::new();
                for rec in r.records() {
                    ys.push(num(&rec.map_err(|e| bad(e.to_string()))?[0])?);
                }
                Ok(Dataset::Gmm { ys })
            }
            ["split", "x", "y"] => {
                let (mut train, mut test) = (Vec::new(), Vec::new());
                for rec in r.records() {
                    let rec = rec.map_err(|e| bad(e.to_string()))?;
                    let row = (num(&rec[1])?, num(&rec[2])?);
                    match &rec[0] {
                        "train" => train.push(row),
                        "test" => test.push(row),
                        s => return Err(bad(format!("unknown split {s:?}"))),
                    }
                }
                Ok(Dataset::Pcfg { train, test })
            }
            _ => Err(bad(format!("unrecognised header {headers:?}"))),
        }
    }

    pub fn write(&self, path: &FsPath) -> Result<()> {
        Ok(std::fs::write(path, self.to_csv()?)?)
    }

    pub fn read(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Dataset::from_csv(&text)
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Gmm { ys } => ys.len(),
            Dataset::Pcfg { train, .. } => train.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
