pub mod alloc;
pub mod baselines;
pub mod config;
pub mod data;
pub mod dist;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod interp;
pub mod local;
pub mod measure;
pub mod models;
pub mod registry;
pub mod rng;
pub mod trace;
pub mod zstats;
