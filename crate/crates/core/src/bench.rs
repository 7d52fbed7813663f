//! Replication harness: simulate, estimate with SSC and the parametric
//! oracle, and score both against the held-out truth.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lowrank::RankPolicy;
use crate::metrics::{summarize_errors, sup_norm_error, ErrorRecord, ErrorSummary, Estimator};
use crate::panel::DonorPool;
use crate::simgen::{generate_panel, oracle_estimate, DgpConfig, Model, SimulatedPanel};
use crate::ssc::{estimate, make_grid, EstimateOptions, EvaluationGrid, SscResult};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub models: Vec<Model>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_units: usize,
    pub rank: usize,
    pub lambda: f64,
    pub target_censoring: f64,
    pub grid_points: usize,
    pub horizon_quantile: f64,
    pub options: EstimateOptions,
}

impl Default for BenchConfig {
    /// Two models, `K ∈ {100, 300, 700}`, seeds 1–20.
    fn default() -> Self {
        Self {
            models: vec![Model::Cox, Model::Aalen],
            ks: vec![100, 300, 700],
            seeds: (1..=20).collect(),
            n_units: 20,
            rank: 4,
            lambda: 0.05,
            target_censoring: 0.10,
            grid_points: 100,
            horizon_quantile: 0.90,
            options: EstimateOptions::default(),
        }
    }
}

impl BenchConfig {
    pub fn dgp(&self, model: Model, k: usize, seed: u64) -> DgpConfig {
        DgpConfig {
            model,
            n_units: self.n_units,
            rank: self.rank,
            k,
            lambda: self.lambda,
            target_censoring: self.target_censoring,
            seed,
        }
    }

    pub fn with_rank_policy(mut self, policy: RankPolicy) -> Self {
        self.options.rank_policy = policy;
        self
    }
}

/// Everything one replication produces, curves included.
#[derive(Clone, Debug)]
pub struct Replication {
    pub sim: SimulatedPanel,
    pub grid: EvaluationGrid,
    pub truth: Vec<f64>,
    pub ssc: SscResult,
    pub oracle: Vec<f64>,
}

impl Replication {
    pub fn ssc_error(&self) -> f64 {
        sup_norm_error(&self.ssc.counterfactual, &self.truth).expect("grid lengths agree")
    }

    pub fn oracle_error(&self) -> f64 {
        sup_norm_error(&self.oracle, &self.truth).expect("grid lengths agree")
    }
}

pub fn run_replication(config: &BenchConfig, model: Model, k: usize, seed: u64) -> Result<Replication> {
    let sim = generate_panel(&config.dgp(model, k, seed))?;
    let grid = make_grid(&sim.dataset, config.horizon_quantile, config.grid_points)?;
    let pool = DonorPool::from_dataset(&sim.dataset, &sim.target_unit)?;
    let ssc = estimate(&sim.dataset, &pool, &grid, &config.options)?;
    let oracle = oracle_estimate(&sim)?.curve(grid.timestamps());
    let truth = sim.target_truth().on_grid(grid.timestamps());
    Ok(Replication {
        sim,
        grid,
        truth,
        ssc,
        oracle,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub model: Model,
    pub k: usize,
    pub seed: u64,
    pub ssc_error: Option<f64>,
    pub oracle_error: Option<f64>,
    pub rank_used: Option<usize>,
    pub nu: Option<f64>,
    pub censoring: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rows: Vec<ReplicationRow>,
    pub summaries: Vec<ErrorSummary>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }

    pub fn summary(&self, model: Model, k: usize, estimator: Estimator) -> Option<&ErrorSummary> {
        self.summaries
            .iter()
            .find(|s| s.model == model && s.k == k && s.estimator == estimator)
    }
}

/// Runs every `(model, K, seed)`; a failed replication is recorded in its
/// row and excluded from the summaries.
pub fn run_bench(config: &BenchConfig) -> BenchReport {
    run_bench_with(config, |_| {})
}

pub fn run_bench_with(config: &BenchConfig, mut on_row: impl FnMut(&ReplicationRow)) -> BenchReport {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &model in &config.models {
        for &k in &config.ks {
            for &seed in &config.seeds {
                let row = match run_replication(config, model, k, seed) {
                    Ok(rep) => {
                        let (se, oe) = (rep.ssc_error(), rep.oracle_error());
                        for (estimator, error) in [(Estimator::Ssc, se), (Estimator::Oracle, oe)] {
                            records.push(ErrorRecord {
                                model,
                                k,
                                estimator,
                                seed,
                                error,
                            });
                        }
                        ReplicationRow {
                            model,
                            k,
                            seed,
                            ssc_error: Some(se),
                            oracle_error: Some(oe),
                            rank_used: Some(rep.ssc.weights.rank_used),
                            nu: Some(rep.sim.nu),
                            censoring: Some(rep.sim.achieved_censoring),
                            failure: None,
                        }
                    }
                    Err(e) => ReplicationRow {
                        model,
                        k,
                        seed,
                        ssc_error: None,
                        oracle_error: None,
                        rank_used: None,
                        nu: None,
                        censoring: None,
                        failure: Some(e.to_string()),
                    },
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    BenchReport {
        rows,
        summaries: summarize_errors(&records),
    }
}
