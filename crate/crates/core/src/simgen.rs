//! Simulated panels with known counterfactuals.
//!
//! Unit factors `Vₙ`, period factors `Uₚ` and the coefficient vectors are
//! drawn i.i.d. standard normal once per seed. Event times are exponential
//! with a cell-specific rate:
//!
//! * Cox: `λ · exp(β₁ᵀVₙ + β₂ᵀUₚ)`
//! * Aalen: `λ₀ + β₁ᵀVₙ + β₂ᵀUₚ`, with `λ₀ = 0.05 − min_{p,n}(β₁ᵀVₙ + β₂ᵀUₚ)`
//!
//! Censoring is `Exp(ν)` with one `ν` per simulation, tuned on a pooled pilot
//! sample. All randomness comes from ChaCha8 keyed by the seed, with a
//! separate stream per `(cell, purpose)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{maximize, Evaluation, NewtonOptions};
use crate::panel::{CensoredObservation, PanelDataset, Period, Treatment};

/// Floor on every Aalen rate after choosing the baseline.
pub const AALEN_RATE_FLOOR: f64 = 0.05;
pub const PILOT_SIZE: usize = 100_000;
pub const DEFAULT_CENSORING_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Cox,
    Aalen,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Cox => "cox",
            Model::Aalen => "aalen",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cox" => Ok(Model::Cox),
            "aalen" => Ok(Model::Aalen),
            _ => Err(Error::InvalidArgument(format!("unknown model `{s}` (cox | aalen)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub model: Model,
    pub n_units: usize,
    pub rank: usize,
    /// Observations per (period, unit) cell.
    pub k: usize,
    /// Cox baseline rate.
    pub lambda: f64,
    pub target_censoring: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(model: Model, k: usize, seed: u64) -> Self {
        Self {
            model,
            n_units: 20,
            rank: 4,
            k,
            lambda: 0.05,
            target_censoring: 0.10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_units < 2 {
            return bad("n_units must be at least 2");
        }
        if self.rank < 1 {
            return bad("rank must be at least 1");
        }
        if self.k < 1 {
            return bad("k must be at least 1");
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.target_censoring > 0.0 && self.target_censoring < 1.0) {
            return bad("target_censoring must be in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentFactors {
    /// `N × r`, row `n` is `Vₙ`.
    pub unit: DMatrix<f64>,
    /// `2 × r`, row `p` is `Uₚ`.
    pub period: DMatrix<f64>,
    pub beta_unit: Vec<f64>,
    pub beta_period: Vec<f64>,
}

// ChaCha stream layout
const FACTOR_STREAM: u64 = 0;
const EVENT: u64 = 0;
const CENSOR: u64 = 1;
const PILOT_EVENT: u64 = 2;
const PILOT_CENSOR: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn cell_stream(seed: u64, n_units: usize, unit: usize, period: Period, purpose: u64) -> ChaCha8Rng {
    let cell = period.code() as u64 * n_units as u64 + unit as u64;
    stream(seed, 1 + 4 * cell + purpose)
}

pub fn sample_factors(config: &DgpConfig) -> LatentFactors {
    let mut rng = stream(config.seed, FACTOR_STREAM);
    let r = config.rank;
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let unit = DMatrix::from_fn(config.n_units, r, |_, _| normal());
    let period = DMatrix::from_fn(2, r, |_, _| normal());
    let beta_unit = (0..r).map(|_| normal()).collect();
    let beta_period = (0..r).map(|_| normal()).collect();
    LatentFactors {
        unit,
        period,
        beta_unit,
        beta_period,
    }
}

/// Exponential survival `S(t) = exp(−rate · t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialSurvival {
    pub rate: f64,
}

impl ExponentialSurvival {
    pub fn evaluate(&self, t: f64) -> f64 {
        (-self.rate * t).exp()
    }

    pub fn on_grid(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&t| self.evaluate(t)).collect()
    }
}

/// `τ = −ln W / rate`, the inverse of the exponential survival function.
pub fn inverse_transform(w: f64, rate: f64) -> f64 {
    -w.ln() / rate
}

/// A configured data-generating process with its frozen factors.
#[derive(Clone, Debug)]
pub struct Dgp {
    pub config: DgpConfig,
    pub factors: LatentFactors,
    /// `λ₀` for the Aalen model.
    pub aalen_baseline: Option<f64>,
}

impl Dgp {
    pub fn new(config: DgpConfig) -> Result<Self> {
        config.validate()?;
        let factors = sample_factors(&config);
        let mut dgp = Self {
            config,
            factors,
            aalen_baseline: None,
        };
        if config.model == Model::Aalen {
            let min_index = (0..config.n_units)
                .flat_map(|n| Period::BOTH.map(|p| (n, p)))
                .map(|(n, p)| dgp.linear_index(n, p))
                .fold(f64::INFINITY, f64::min);
            dgp.aalen_baseline = Some(AALEN_RATE_FLOOR - min_index);
        }
        Ok(dgp)
    }

    pub fn unit_index(&self, unit: usize) -> f64 {
        self.factors
            .unit
            .row(unit)
            .iter()
            .zip(&self.factors.beta_unit)
            .map(|(v, b)| v * b)
            .sum()
    }

    pub fn period_index(&self, period: Period) -> f64 {
        self.factors
            .period
            .row(period.code() as usize)
            .iter()
            .zip(&self.factors.beta_period)
            .map(|(u, b)| u * b)
            .sum()
    }

    /// `β₁ᵀVₙ + β₂ᵀUₚ`.
    pub fn linear_index(&self, unit: usize, period: Period) -> f64 {
        self.unit_index(unit) + self.period_index(period)
    }

    pub fn rate(&self, unit: usize, period: Period) -> f64 {
        let idx = self.linear_index(unit, period);
        match self.config.model {
            Model::Cox => self.config.lambda * idx.exp(),
            Model::Aalen => self.aalen_baseline.expect("aalen baseline") + idx,
        }
    }

    pub fn true_survival(&self, unit: usize, period: Period) -> ExponentialSurvival {
        ExponentialSurvival {
            rate: self.rate(unit, period),
        }
    }

    /// Cell parameters the panel can identify: the two period intercepts
    /// followed by the unit coefficients. Cox intercepts are on the log scale.
    pub fn identifiable_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + self.config.rank);
        for p in Period::BOTH {
            let pi = self.period_index(p);
            out.push(match self.config.model {
                Model::Cox => self.config.lambda.ln() + pi,
                Model::Aalen => self.aalen_baseline.expect("aalen baseline") + pi,
            });
        }
        out.extend_from_slice(&self.factors.beta_unit);
        out
    }

    pub fn sample_events(&self, unit: usize, period: Period, k: usize) -> Vec<f64> {
        let rng = cell_stream(self.config.seed, self.config.n_units, unit, period, EVENT);
        self.draw_events(rng, unit, period, k)
    }

    fn draw_events(&self, mut rng: ChaCha8Rng, unit: usize, period: Period, k: usize) -> Vec<f64> {
        let rate = self.rate(unit, period);
        assert!(rate > 0.0, "non-positive hazard rate {rate}");
        (0..k)
            .map(|_| {
                let w = 1.0 - rng.random::<f64>();
                inverse_transform(w, rate)
            })
            .collect()
    }

    /// `Exp(ν)` censoring times for one cell, drawn from their own stream.
    pub fn sample_censoring(&self, unit: usize, period: Period, k: usize, nu: f64) -> Vec<f64> {
        let mut rng = cell_stream(self.config.seed, self.config.n_units, unit, period, CENSOR);
        (0..k)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                e / nu
            })
            .collect()
    }

    /// Pilot events pooled over all cells, about [`PILOT_SIZE`] in total.
    pub fn pilot_events(&self) -> Vec<f64> {
        let n = self.config.n_units;
        let per_cell = PILOT_SIZE.div_ceil(2 * n);
        let mut out = Vec::with_capacity(per_cell * 2 * n);
        for period in Period::BOTH {
            for unit in 0..n {
                let rng = cell_stream(self.config.seed, n, unit, period, PILOT_EVENT);
                out.extend(self.draw_events(rng, unit, period, per_cell));
            }
        }
        out
    }
}

/// Fraction of `events` censored when censoring is `unit_exponentials / ν`.
pub fn censoring_fraction(events: &[f64], unit_exponentials: &[f64], nu: f64) -> f64 {
    let censored = events
        .iter()
        .zip(unit_exponentials)
        .filter(|(tau, e)| **e / nu < **tau)
        .count();
    censored as f64 / events.len() as f64
}

/// Finds `ν` so that `C ~ Exp(ν)` censors the pilot events at the target
/// rate. Censoring draws are `E / ν` with fixed `E ~ Exp(1)`, so the censored
/// fraction is monotone in `ν` and bisection on `log ν` applies.
pub fn tune_censoring<R: Rng>(pilot: &[f64], target: f64, tolerance: f64, rng: &mut R) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target censoring must be in (0, 1), got {target}")));
    }
    if pilot.is_empty() {
        return Err(Error::InvalidArgument("empty pilot sample".into()));
    }
    let unit: Vec<f64> = (0..pilot.len()).map(|_| Exp1.sample(rng)).collect();
    let frac = |nu: f64| censoring_fraction(pilot, &unit, nu);

    let mean = pilot.iter().sum::<f64>() / pilot.len() as f64;
    let mut lo = 1.0 / mean;
    let mut hi = lo;
    for _ in 0..200 {
        if frac(lo) <= target {
            break;
        }
        lo /= 2.0;
    }
    for _ in 0..200 {
        if frac(hi) >= target {
            break;
        }
        hi *= 2.0;
    }
    if frac(lo) > target || frac(hi) < target {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..200 {
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
        let mid = (lo * hi).sqrt();
        if frac(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = (lo * hi).sqrt();
    if (frac(nu) - target).abs() > tolerance {
        return Err(Error::Bracket { lo, hi });
    }
    Ok(nu)
}

#[derive(Clone, Debug)]
pub struct SimulatedPanel {
    pub dataset: PanelDataset,
    pub dgp: Dgp,
    pub nu: f64,
    pub achieved_censoring: f64,
    pub target_unit: String,
    pub target_index: usize,
}

impl SimulatedPanel {
    pub fn unit_name(index: usize) -> String {
        (index + 1).to_string()
    }

    /// The held-out truth: the target's post-period survival under control.
    pub fn target_truth(&self) -> ExponentialSurvival {
        self.dgp.true_survival(self.target_index, Period::Post)
    }
}

/// Units are named `"1"`..`"N"`; unit `"1"` is treated in the post-period.
/// Its post-period rows are drawn from the control model, so they carry the
/// counterfactual the estimators try to recover.
pub fn generate_panel(config: &DgpConfig) -> Result<SimulatedPanel> {
    simulate(Dgp::new(*config)?)
}

/// [`generate_panel`] for an already constructed process, e.g. one with
/// hand-set factors.
pub fn simulate(dgp: Dgp) -> Result<SimulatedPanel> {
    let config = dgp.config;
    config.validate()?;
    let n = config.n_units;

    let mut pilot_rng = stream(config.seed, 1 + 4 * (2 * n as u64) + PILOT_CENSOR);
    let nu = tune_censoring(
        &dgp.pilot_events(),
        config.target_censoring,
        DEFAULT_CENSORING_TOLERANCE,
        &mut pilot_rng,
    )?;

    let target_index = 0;
    let mut builder = PanelDataset::builder(Vec::new());
    let mut censored = 0usize;
    for period in Period::BOTH {
        for unit in 0..n {
            let name = SimulatedPanel::unit_name(unit);
            let treatment = if unit == target_index && period == Period::Post {
                Treatment::Treated
            } else {
                Treatment::Control
            };
            let events = dgp.sample_events(unit, period, config.k);
            let censoring = dgp.sample_censoring(unit, period, config.k, nu);
            for (tau, c) in events.into_iter().zip(censoring) {
                let event = tau <= c;
                censored += usize::from(!event);
                builder.push(&name, period, CensoredObservation::new(tau.min(c), event, treatment)?)?;
            }
        }
    }
    let dataset = builder.finish();
    let total = (2 * n * config.k) as f64;
    Ok(SimulatedPanel {
        dataset,
        dgp,
        nu,
        achieved_censoring: censored as f64 / total,
        target_unit: SimulatedPanel::unit_name(target_index),
        target_index,
    })
}

#[derive(Clone, Debug)]
pub struct OracleFit {
    /// Period intercepts then unit coefficients (see [`Dgp::identifiable_params`]).
    pub params: Vec<f64>,
    pub target_rate: f64,
    pub iterations: usize,
}

impl OracleFit {
    pub fn curve(&self, grid: &[f64]) -> Vec<f64> {
        ExponentialSurvival { rate: self.target_rate }.on_grid(grid)
    }
}

const AALEN_BARRIER: f64 = 1e-6;

/// Maximum likelihood for the correctly specified exponential model given
/// the true unit factors, fitted on every cell except the target's
/// post-period cell.
///
/// Period factors enter only through the period, so the fit uses a free
/// intercept per period: `log rate = a_p + βᵀVₙ` (Cox) or
/// `rate = a_p + βᵀVₙ` (Aalen). The Aalen fit keeps every cell's rate
/// positive with a log barrier, starting from equal rates
/// `max(0.05, events / exposure)`.
pub fn oracle_estimate(sim: &SimulatedPanel) -> Result<OracleFit> {
    let dgp = &sim.dgp;
    let n = dgp.config.n_units;
    let r = dgp.config.rank;
    let dim = 2 + r;

    struct CellStats {
        z: Vec<f64>,
        events: f64,
        exposure: f64,
        train: bool,
    }
    let mut cells = Vec::with_capacity(2 * n);
    for period in Period::BOTH {
        for unit in 0..n {
            let mut z = vec![0.0; dim];
            z[period.code() as usize] = 1.0;
            for j in 0..r {
                z[2 + j] = dgp.factors.unit[(unit, j)];
            }
            let train = !(unit == sim.target_index && period == Period::Post);
            let (events, exposure) = if train {
                let obs = sim.dataset.require_cell(period, &SimulatedPanel::unit_name(unit))?;
                (
                    obs.iter().filter(|o| o.event).count() as f64,
                    obs.iter().map(|o| o.time).sum::<f64>(),
                )
            } else {
                (0.0, 0.0)
            };
            cells.push(CellStats {
                z,
                events,
                exposure,
                train,
            });
        }
    }
    let total_events: f64 = cells.iter().map(|c| c.events).sum();
    let total_exposure: f64 = cells.iter().map(|c| c.exposure).sum();
    if total_events == 0.0 {
        return Err(Error::Optimizer("oracle: no events in training cells".into()));
    }
    let dot = |z: &[f64], th: &[f64]| -> f64 { z.iter().zip(th).map(|(a, b)| a * b).sum() };
    let opts = NewtonOptions {
        tolerance: 1e-10,
        gradient_scale: 1.0 / total_events,
        max_iterations: 200,
        ..Default::default()
    };

    let (params, iterations) = match dgp.config.model {
        Model::Cox => {
            let objective = |th: &[f64]| -> Evaluation {
                let mut v = 0.0;
                let mut g = nalgebra::DVector::zeros(dim);
                let mut h = DMatrix::zeros(dim, dim);
                for c in cells.iter().filter(|c| c.train) {
                    let eta = dot(&c.z, th);
                    let mu = c.exposure * eta.exp();
                    v += c.events * eta - mu;
                    let z = nalgebra::DVector::from_column_slice(&c.z);
                    g.axpy(c.events - mu, &z, 1.0);
                    h.ger(-mu, &z, &z, 1.0);
                }
                Some((v, g, h))
            };
            let mut start = vec![0.0; dim];
            let a = (total_events / total_exposure).ln();
            start[0] = a;
            start[1] = a;
            let out = maximize(objective, start, &opts)?;
            (out.x, out.iterations)
        }
        Model::Aalen => {
            let objective = |th: &[f64]| -> Evaluation {
                let mut v = 0.0;
                let mut g = nalgebra::DVector::zeros(dim);
                let mut h = DMatrix::zeros(dim, dim);
                for c in &cells {
                    let rate = dot(&c.z, th);
                    if !(rate > 0.0) {
                        return None;
                    }
                    let z = nalgebra::DVector::from_column_slice(&c.z);
                    let weight = c.events + AALEN_BARRIER;
                    v += weight * rate.ln() - c.exposure * rate;
                    g.axpy(weight / rate - c.exposure, &z, 1.0);
                    h.ger(-weight / (rate * rate), &z, &z, 1.0);
                }
                Some((v, g, h))
            };
            let mut start = vec![0.0; dim];
            let a = AALEN_RATE_FLOOR.max(total_events / total_exposure);
            start[0] = a;
            start[1] = a;
            let out = maximize(objective, start, &opts)?;
            (out.x, out.iterations)
        }
    };

    let target = &cells[n + sim.target_index];
    let index = dot(&target.z, &params);
    let target_rate = match dgp.config.model {
        Model::Cox => index.exp(),
        Model::Aalen => index,
    };
    Ok(OracleFit {
        params,
        target_rate,
        iterations,
    })
}

/// Terms needed so the truncated exponential series is within `eps` of
/// `exp(x)` on `|x| ≤ bound`: `⌈5 · max(bound, ln(1/eps))⌉`.
pub fn taylor_terms(bound: f64, eps: f64) -> usize {
    (5.0 * bound.max((1.0 / eps).ln())).ceil() as usize
}

/// `Σ_{k<terms} x^k / k!`.
pub fn truncated_exp(x: f64, terms: usize) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 0..terms {
        sum += term;
        term *= x / (k + 1) as f64;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_are_deterministic_and_shaped() {
        let cfg = DgpConfig::new(Model::Cox, 100, 9);
        let a = sample_factors(&cfg);
        let b = sample_factors(&cfg);
        assert_eq!(a, b);
        assert_eq!(a.unit.shape(), (20, 4));
        assert_eq!(a.period.shape(), (2, 4));
        let c = sample_factors(&DgpConfig { seed: 10, ..cfg });
        assert_ne!(a, c);
    }

    #[test]
    fn cox_truth_formula() {
        let cfg = DgpConfig::new(Model::Cox, 10, 1);
        let mut dgp = Dgp::new(cfg).unwrap();
        assert_eq!(dgp.true_survival(3, Period::Pre).evaluate(0.0), 1.0);
        dgp.factors.beta_unit = vec![0.0; 4];
        dgp.factors.beta_period = vec![0.0; 4];
        let s = dgp.true_survival(3, Period::Post).evaluate(10.0);
        assert!((s - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn aalen_minimum_cell_has_floor_rate() {
        for seed in 1..=5 {
            let dgp = Dgp::new(DgpConfig::new(Model::Aalen, 10, seed)).unwrap();
            let rates: Vec<f64> = (0..20)
                .flat_map(|n| Period::BOTH.map(|p| dgp.rate(n, p)))
                .collect();
            let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((min - AALEN_RATE_FLOOR).abs() < 1e-12);
            assert!(rates.iter().all(|r| *r > 0.0));
        }
    }

    #[test]
    fn inverse_transform_identity() {
        assert!((inverse_transform((-1.0f64).exp(), 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn competing_exponentials_oracle() {
        // events ~ Exp(λ), censoring ~ Exp(ν): censored share ν / (λ + ν)
        let lambda = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let pilot: Vec<f64> = (0..PILOT_SIZE)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                e / lambda
            })
            .collect();
        let nu = tune_censoring(&pilot, 0.10, 0.01, &mut rng).unwrap();
        let analytic = lambda * 0.10 / 0.90;
        assert!((nu / analytic - 1.0).abs() < 0.05, "nu={nu} analytic={analytic}");
        let nu_half = tune_censoring(&pilot, 0.5, 0.01, &mut rng).unwrap();
        assert!((nu_half / lambda - 1.0).abs() < 0.05, "nu={nu_half}");
    }

    #[test]
    fn tuner_rejects_bad_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(tune_censoring(&[1.0, 2.0], 0.0, 0.01, &mut rng).is_err());
        assert!(tune_censoring(&[1.0, 2.0], 1.0, 0.01, &mut rng).is_err());
    }

    #[test]
    fn truncated_series() {
        assert_eq!(truncated_exp(0.7, 1), 1.0);
        assert!((truncated_exp(1.0, 30) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(taylor_terms(0.5, 0.1), 12);
    }

    #[test]
    fn config_validation() {
        let ok = DgpConfig::new(Model::Cox, 100, 1);
        assert!(ok.validate().is_ok());
        assert!(DgpConfig { n_units: 1, ..ok }.validate().is_err());
        assert!(DgpConfig { target_censoring: 1.0, ..ok }.validate().is_err());
        assert!(DgpConfig { lambda: 0.0, ..ok }.validate().is_err());
        assert!(DgpConfig { k: 0, ..ok }.validate().is_err());
    }
}
