//! Synthetic survival control.
//!
//! The counterfactual post-period survival curve of a treated unit is built
//! from control units in four steps:
//!
//! 1. Kaplan–Meier curves for every donor in both periods and for the target
//!    in the pre-period.
//! 2. Each curve is sampled on a common grid `0 = t₁ < … < t_T₀ = τ̃`.
//! 3. Principal component regression of the target's pre-period vector on
//!    the donors' pre-period matrix gives weights `ŵ`.
//! 4. The counterfactual is `Σ_m ŵ_m Ŝ_{1,m}(t)`.
//!
//! The raw combination can leave `[0, 1]` and need not be monotone; the
//! result keeps it alongside the post-processed curve.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::isotonic;
use crate::km::km_fit;
use crate::lowrank::{pcr_weights_from_factors, select_rank, svd, PcrWeights, RankPolicy};
use crate::metrics::quantile;
use crate::panel::{DonorPool, PanelDataset, Period};

pub const DEFAULT_HORIZON_QUANTILE: f64 = 0.90;
pub const DEFAULT_GRID_POINTS: usize = 100;

/// Equally spaced timestamps on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationGrid {
    horizon: f64,
    timestamps: Vec<f64>,
}

impl EvaluationGrid {
    pub fn linspace(horizon: f64, points: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("grid horizon must be positive, got {horizon}")));
        }
        let timestamps = match points {
            0 => return Err(Error::InvalidArgument("grid needs at least one point".into())),
            1 => vec![0.0],
            n => {
                let step = horizon / (n - 1) as f64;
                let mut ts: Vec<f64> = (0..n).map(|i| i as f64 * step).collect();
                ts[n - 1] = horizon;
                ts
            }
        };
        Ok(Self { horizon, timestamps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Horizon is the (linear-interpolation) empirical `horizon_quantile` of all
/// pooled observed times.
pub fn make_grid(data: &PanelDataset, horizon_quantile: f64, points: usize) -> Result<EvaluationGrid> {
    if !(horizon_quantile > 0.0 && horizon_quantile <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon quantile must be in (0, 1], got {horizon_quantile}"
        )));
    }
    let mut times = data.pooled_times();
    if times.is_empty() {
        return Err(Error::InvalidArgument("dataset has no observations".into()));
    }
    times.sort_by(f64::total_cmp);
    EvaluationGrid::linspace(quantile(&times, horizon_quantile), points)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateOptions {
    pub rank_policy: RankPolicy,
    pub clip: bool,
    pub isotonic: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            rank_policy: RankPolicy::default(),
            clip: true,
            isotonic: false,
        }
    }
}

impl EstimateOptions {
    pub fn postprocess(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = if self.isotonic {
            isotonic::non_increasing(raw)
        } else {
            raw.to_vec()
        };
        if self.clip {
            out.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        out
    }
}

/// Grid-sampled curves feeding the regression: columns are donors.
#[derive(Clone, Debug)]
pub struct CurvePanel {
    pub pre_controls: DMatrix<f64>,
    pub post_controls: DMatrix<f64>,
    pub pre_target: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub weights: PcrWeights,
    pub singular_values: Vec<f64>,
    pub pre_fit: Vec<f64>,
    pub raw_counterfactual: Vec<f64>,
    pub counterfactual: Vec<f64>,
}

/// Steps 3 and 4 on already-sampled curves.
pub fn synthesize(curves: &CurvePanel, options: &EstimateOptions) -> Result<Synthesis> {
    let (t0, n0) = curves.pre_controls.shape();
    if curves.post_controls.shape() != (t0, n0) {
        return Err(Error::InvalidArgument("pre and post control matrices differ in shape".into()));
    }
    let factors = svd(&curves.pre_controls)?;
    let rank = select_rank(&factors.singular_values, options.rank_policy);
    let weights = pcr_weights_from_factors(&curves.pre_controls, &factors, &curves.pre_target, rank)?;
    let w = nalgebra::DVector::from_column_slice(&weights.weights);
    let pre_fit = (&curves.pre_controls * &w).as_slice().to_vec();
    let raw_counterfactual = (&curves.post_controls * &w).as_slice().to_vec();
    let counterfactual = options.postprocess(&raw_counterfactual);
    Ok(Synthesis {
        weights,
        singular_values: factors.singular_values,
        pre_fit,
        raw_counterfactual,
        counterfactual,
    })
}

#[derive(Clone, Debug)]
pub struct SscResult {
    pub weights: PcrWeights,
    pub singular_values: Vec<f64>,
    /// Post-processed per the options (clipped by default).
    pub counterfactual: Vec<f64>,
    pub raw_counterfactual: Vec<f64>,
    pub pre_fit: Vec<f64>,
    pub pre_target: Vec<f64>,
    pub grid: EvaluationGrid,
    pub donor_order: Vec<String>,
}

/// Per-donor grid vectors, computed once and shared by bootstrap replicates.
struct SampledPool {
    pre_target: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl SampledPool {
    fn build(data: &PanelDataset, pool: &DonorPool, grid: &EvaluationGrid) -> Result<Self> {
        let sample = |period: Period, unit: &str| -> Result<Vec<f64>> {
            let cell = data.require_cell(period, unit)?;
            km_fit(cell)?.subsample_on_grid(grid.timestamps())
        };
        let pre_target = sample(Period::Pre, pool.target_unit())?;
        let mut pre = Vec::with_capacity(pool.len());
        let mut post = Vec::with_capacity(pool.len());
        for unit in pool.control_units() {
            pre.push(sample(Period::Pre, unit)?);
            post.push(sample(Period::Post, unit)?);
        }
        Ok(Self { pre_target, pre, post })
    }

    fn curves(&self, donors: &[usize]) -> CurvePanel {
        let t0 = self.pre_target.len();
        CurvePanel {
            pre_controls: DMatrix::from_fn(t0, donors.len(), |r, c| self.pre[donors[c]][r]),
            post_controls: DMatrix::from_fn(t0, donors.len(), |r, c| self.post[donors[c]][r]),
            pre_target: self.pre_target.clone(),
        }
    }
}

pub fn estimate(
    data: &PanelDataset,
    pool: &DonorPool,
    grid: &EvaluationGrid,
    options: &EstimateOptions,
) -> Result<SscResult> {
    if data.cell(Period::Post, pool.target_unit()).is_none() {
        return Err(Error::EmptyCell {
            period: Period::Post.to_string(),
            unit: pool.target_unit().to_string(),
        });
    }
    let sampled = SampledPool::build(data, pool, grid)?;
    let all: Vec<usize> = (0..pool.len()).collect();
    let syn = synthesize(&sampled.curves(&all), options)?;
    Ok(SscResult {
        weights: syn.weights,
        singular_values: syn.singular_values,
        counterfactual: syn.counterfactual,
        raw_counterfactual: syn.raw_counterfactual,
        pre_fit: syn.pre_fit,
        pre_target: sampled.pre_target,
        grid: grid.clone(),
        donor_order: pool.control_units().to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 500,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Draws per replicate before the whole bootstrap is declared degenerate.
const MAX_RESAMPLE_ATTEMPTS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapBand {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub point: Vec<f64>,
    pub level: f64,
    pub replicates: usize,
}

/// Pointwise percentile band over donor-pool resamples.
///
/// Each replicate draws `N₀` donors with replacement from the pool (units,
/// not patients) and reruns the synthesis, reselecting the rank under the
/// same policy. Replicate `b` uses ChaCha stream `b` of the master seed, so
/// the band depends only on the inputs and the seed.
pub fn bootstrap(
    data: &PanelDataset,
    pool: &DonorPool,
    grid: &EvaluationGrid,
    options: &EstimateOptions,
    config: &BootstrapConfig,
) -> Result<BootstrapBand> {
    if pool.len() < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two donors".into()));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {}", config.level)));
    }
    let point = estimate(data, pool, grid, options)?.counterfactual;
    let sampled = SampledPool::build(data, pool, grid)?;
    let n0 = pool.len();

    let mut replicates: Vec<Vec<f64>> = Vec::with_capacity(config.replicates);
    for b in 0..config.replicates {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(b as u64);
        let mut outcome = None;
        for _ in 0..MAX_RESAMPLE_ATTEMPTS {
            let donors: Vec<usize> = (0..n0).map(|_| rng.random_range(0..n0)).collect();
            if let Ok(syn) = synthesize(&sampled.curves(&donors), options) {
                outcome = Some(syn.counterfactual);
                break;
            }
        }
        match outcome {
            Some(curve) => replicates.push(curve),
            None => {
                return Err(Error::Bootstrap(format!(
                    "replicate {b} degenerate after {MAX_RESAMPLE_ATTEMPTS} resamples"
                )))
            }
        }
    }

    let alpha = (1.0 - config.level) / 2.0;
    let t0 = grid.len();
    let mut lower = Vec::with_capacity(t0);
    let mut upper = Vec::with_capacity(t0);
    let mut column = vec![0.0; replicates.len()];
    for t in 0..t0 {
        for (slot, rep) in column.iter_mut().zip(&replicates) {
            *slot = rep[t];
        }
        column.sort_by(f64::total_cmp);
        lower.push(quantile(&column, alpha));
        upper.push(quantile(&column, 1.0 - alpha));
    }
    Ok(BootstrapBand {
        lower,
        upper,
        point,
        level: config.level,
        replicates: config.replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CensoredObservation, Treatment};

    fn obs(time: f64, event: bool, treatment: Treatment) -> CensoredObservation {
        CensoredObservation::new(time, event, treatment).unwrap()
    }

    /// Units with given pre/post event times; the last unit is the target.
    fn panel(units: &[(&str, Vec<f64>, Vec<f64>)]) -> PanelDataset {
        let mut b = PanelDataset::builder(Vec::new());
        let target = units.last().unwrap().0;
        for (unit, pre, post) in units {
            for &t in pre {
                b.push(unit, Period::Pre, obs(t, true, Treatment::Control)).unwrap();
            }
            let tr = if *unit == target { Treatment::Treated } else { Treatment::Control };
            for &t in post {
                b.push(unit, Period::Post, obs(t, true, tr)).unwrap();
            }
        }
        b.finish()
    }

    #[test]
    fn grid_endpoints() {
        let g = EvaluationGrid::linspace(10.0, 2).unwrap();
        assert_eq!(g.timestamps(), [0.0, 10.0]);
        let g = EvaluationGrid::linspace(10.0, 100).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.timestamps()[0], 0.0);
        assert_eq!(*g.timestamps().last().unwrap(), 10.0);
        assert!(g.timestamps().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grid_from_constant_times() {
        let data = panel(&[("a", vec![10.0; 4], vec![10.0; 3]), ("t", vec![10.0], vec![10.0])]);
        let g = make_grid(&data, 0.9, 100).unwrap();
        assert_eq!(g.horizon(), 10.0);
    }

    #[test]
    fn grid_quantile_of_one_to_hundred() {
        let times: Vec<f64> = (1..=100).map(f64::from).collect();
        let data = panel(&[("a", times[..50].to_vec(), times[50..99].to_vec()), ("t", vec![], vec![100.0])]);
        let g = make_grid(&data, 0.90, 100).unwrap();
        // sorted-array oracle, linear interpolation: position 0.9·99 = 89.1
        let sorted = times.clone();
        let pos = 0.9 * 99.0;
        let expected = sorted[89] + (pos - 89.0) * (sorted[90] - sorted[89]);
        assert!((g.horizon() - expected).abs() < 1e-12);
        assert!((g.horizon() - 90.1).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_bad_quantile() {
        let data = panel(&[("a", vec![1.0], vec![1.0]), ("t", vec![1.0], vec![1.0])]);
        assert!(make_grid(&data, 0.0, 10).is_err());
        assert!(make_grid(&data, 1.5, 10).is_err());
    }

    #[test]
    fn single_copycat_donor() {
        let pre = vec![1.0, 2.0, 3.0, 4.0];
        let data = panel(&[("d", pre.clone(), vec![0.5, 1.0, 6.0]), ("t", pre, vec![9.0])]);
        let pool = DonorPool::from_dataset(&data, "t").unwrap();
        let grid = EvaluationGrid::linspace(5.0, 30).unwrap();
        let res = estimate(&data, &pool, &grid, &EstimateOptions::default()).unwrap();
        assert!((res.weights.weights[0] - 1.0).abs() < 1e-12);
        let donor_post = km_fit(data.require_cell(Period::Post, "d").unwrap())
            .unwrap()
            .subsample_on_grid(grid.timestamps())
            .unwrap();
        for (a, b) in res.counterfactual.iter().zip(&donor_post) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_donor_cell_is_named() {
        let mut b = PanelDataset::builder(Vec::new());
        b.push("d", Period::Pre, obs(1.0, true, Treatment::Control)).unwrap();
        b.push("t", Period::Pre, obs(1.0, true, Treatment::Control)).unwrap();
        b.push("t", Period::Post, obs(1.0, true, Treatment::Treated)).unwrap();
        let data = b.finish();
        let pool = DonorPool::new(vec!["d".into()], "t".into()).unwrap();
        let grid = EvaluationGrid::linspace(2.0, 5).unwrap();
        let err = estimate(&data, &pool, &grid, &EstimateOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "empty cell (1, d)");
    }

    #[test]
    fn postprocess_clips_and_projects() {
        let raw = [1.02, 0.7, 0.75, -0.1];
        let clip = EstimateOptions::default().postprocess(&raw);
        assert_eq!(clip, vec![1.0, 0.7, 0.75, 0.0]);
        let iso = EstimateOptions { isotonic: true, ..Default::default() }.postprocess(&raw);
        assert!(iso.windows(2).all(|w| w[0] >= w[1]));
        assert!(iso.iter().all(|v| (0.0..=1.0).contains(v)));
        let none = EstimateOptions { clip: false, ..Default::default() }.postprocess(&raw);
        assert_eq!(none, raw.to_vec());
    }

    #[test]
    fn identical_donors_give_zero_width_band() {
        let pre = vec![1.0, 2.0, 3.0];
        let post = vec![1.5, 2.5, 4.0];
        let data = panel(&[
            ("a", pre.clone(), post.clone()),
            ("b", pre.clone(), post.clone()),
            ("c", pre.clone(), post),
            ("t", pre, vec![1.0]),
        ]);
        let pool = DonorPool::from_dataset(&data, "t").unwrap();
        let grid = EvaluationGrid::linspace(4.0, 20).unwrap();
        let cfg = BootstrapConfig { replicates: 50, level: 0.9, seed: 3 };
        let band = bootstrap(&data, &pool, &grid, &EstimateOptions::default(), &cfg).unwrap();
        for t in 0..grid.len() {
            assert!((band.upper[t] - band.lower[t]).abs() < 1e-12);
            assert!((band.point[t] - band.lower[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_needs_two_donors() {
        let data = panel(&[("a", vec![1.0], vec![1.0]), ("t", vec![1.0], vec![1.0])]);
        let pool = DonorPool::from_dataset(&data, "t").unwrap();
        let grid = EvaluationGrid::linspace(2.0, 5).unwrap();
        let err = bootstrap(&data, &pool, &grid, &EstimateOptions::default(), &BootstrapConfig::default());
        assert!(err.is_err());
    }
}
