//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes plain numbers or text and returns a JSON
//! string, so the page needs no generated TypeScript types. The Rust-side
//! functions behind them are public and tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ssc_core::bench::{run_replication, BenchConfig};
use ssc_core::km::km_table;
use ssc_core::lowrank::RankPolicy;
use ssc_core::panel::{CensoredObservation, DonorPool, Treatment};
use ssc_core::simgen::Model;
use ssc_core::ssc::{bootstrap, BootstrapConfig};

#[derive(Debug, Serialize)]
pub struct Curves {
    pub t: Vec<f64>,
    pub truth: Vec<f64>,
    pub ssc: Vec<f64>,
    pub oracle: Vec<f64>,
    pub pre_target: Vec<f64>,
    pub pre_fit: Vec<f64>,
    pub ssc_error: f64,
    pub oracle_error: f64,
    pub rank_used: usize,
    pub singular_values: Vec<f64>,
    pub censoring: f64,
}

#[derive(Debug, Serialize)]
pub struct Band {
    pub t: Vec<f64>,
    pub lower: Vec<f64>,
    pub point: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Vec<f64>,
    /// Share of grid points where the truth lies inside the band.
    pub coverage: f64,
}

#[derive(Debug, Serialize)]
pub struct KmCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub n: usize,
    pub censored: usize,
}

fn bench_config(rank: &str) -> Result<BenchConfig, String> {
    let policy: RankPolicy = rank.parse().map_err(|e: ssc_core::Error| e.to_string())?;
    Ok(BenchConfig::default().with_rank_policy(policy))
}

fn model(name: &str) -> Result<Model, String> {
    name.parse().map_err(|e: ssc_core::Error| e.to_string())
}

/// One simulated replication: the held-out truth next to both estimates.
pub fn curves(model_name: &str, k: usize, seed: u64, rank: &str) -> Result<Curves, String> {
    let cfg = bench_config(rank)?;
    let rep = run_replication(&cfg, model(model_name)?, k, seed).map_err(|e| e.to_string())?;
    Ok(Curves {
        ssc_error: rep.ssc_error(),
        oracle_error: rep.oracle_error(),
        t: rep.grid.timestamps().to_vec(),
        truth: rep.truth,
        rank_used: rep.ssc.weights.rank_used,
        singular_values: rep.ssc.singular_values,
        ssc: rep.ssc.counterfactual,
        oracle: rep.oracle,
        pre_target: rep.ssc.pre_target,
        pre_fit: rep.ssc.pre_fit,
        censoring: rep.sim.achieved_censoring,
    })
}

pub fn band(model_name: &str, k: usize, seed: u64, replicates: usize, level: f64) -> Result<Band, String> {
    let cfg = BenchConfig::default();
    let rep = run_replication(&cfg, model(model_name)?, k, seed).map_err(|e| e.to_string())?;
    let data = &rep.sim.dataset;
    let pool = DonorPool::from_dataset(data, &rep.sim.target_unit).map_err(|e| e.to_string())?;
    let boot = BootstrapConfig { replicates, level, seed };
    let b = bootstrap(data, &pool, &rep.grid, &cfg.options, &boot).map_err(|e| e.to_string())?;
    let inside = rep
        .truth
        .iter()
        .zip(b.lower.iter().zip(&b.upper))
        .filter(|(t, (l, u))| *l <= *t && *t <= *u)
        .count();
    Ok(Band {
        t: rep.grid.timestamps().to_vec(),
        coverage: inside as f64 / rep.truth.len() as f64,
        lower: b.lower,
        point: b.point,
        upper: b.upper,
        truth: rep.truth,
    })
}

/// Parses `time,event` lines (commas, tabs or spaces; `#` starts a comment;
/// a non-numeric first line is taken as a header).
pub fn parse_observations(text: &str) -> Result<Vec<CensoredObservation>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let time = match fields[0].parse::<f64>() {
            Ok(t) => t,
            Err(_) if out.is_empty() => continue,
            Err(_) => return Err(format!("line {}: `{}` is not a time", i + 1, fields[0])),
        };
        let event = match fields.get(1).copied() {
            None | Some("1") => true,
            Some("0") => false,
            Some(other) => return Err(format!("line {}: event must be 0 or 1, got `{other}`", i + 1)),
        };
        let obs = CensoredObservation::new(time, event, Treatment::Control)
            .map_err(|e| format!("line {}: {e}", i + 1))?;
        out.push(obs);
    }
    Ok(out)
}

pub fn km(text: &str) -> Result<KmCurve, String> {
    let cell = parse_observations(text)?;
    let steps = km_table(&cell).map_err(|e| e.to_string())?;
    Ok(KmCurve {
        times: steps.iter().map(|s| s.time).collect(),
        survival: steps.iter().map(|s| s.survival).collect(),
        at_risk: steps.iter().map(|s| s.at_risk).collect(),
        events: steps.iter().map(|s| s.events).collect(),
        n: cell.len(),
        censored: cell.iter().filter(|o| !o.event).count(),
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, String> {
    value.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
}

#[wasm_bindgen]
pub fn simulate_curves(model: &str, k: usize, seed: u64, rank: &str) -> Result<String, String> {
    to_json(curves(model, k, seed, rank))
}

#[wasm_bindgen]
pub fn bootstrap_band(model: &str, k: usize, seed: u64, replicates: usize, level: f64) -> Result<String, String> {
    to_json(band(model, k, seed, replicates, level))
}

#[wasm_bindgen]
pub fn kaplan_meier(text: &str) -> Result<String, String> {
    to_json(km(text))
}
