//! Cox proportional hazards with Breslow ties and baseline, plus the plug-in
//! marginal hazard of a population under control.
//!
//! The fitted hazard of subject `i` is `dΛ̂(t) · exp(β̂ᵀxᵢ)`. Because `Λ̂` is
//! a step function, hazards are carried as increments at event times; a
//! rate per unit time is reported only after dividing by a time spacing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::km::StepSurvival;
use crate::optim::{maximize, Evaluation, NewtonOptions};
use crate::panel::{CensoredObservation, Treatment};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
/// Bound on the standardized coefficient norm; beyond it we report separation.
const SEPARATION_NORM: f64 = 30.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CoxDesign {
    times: Vec<f64>,
    events: Vec<bool>,
    rows: Vec<Vec<f64>>,
    treatment_column: Option<usize>,
}

impl CoxDesign {
    pub fn new(times: Vec<f64>, events: Vec<bool>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != events.len() || times.len() != rows.len() {
            return Err(Error::InvalidArgument("times, events and rows differ in length".into()));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument("times must be finite and nonnegative".into()));
        }
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidArgument("covariate vectors differ in length".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariate".into()));
        }
        Ok(Self {
            times,
            events,
            rows,
            treatment_column: None,
        })
    }

    /// Covariates of each observation, with the treatment indicator appended
    /// as the last regressor when `include_treatment` is set.
    pub fn from_observations(obs: &[CensoredObservation], include_treatment: bool) -> Result<Self> {
        let rows = obs
            .iter()
            .map(|o| {
                let mut r = o.covariates.clone();
                if include_treatment {
                    r.push(f64::from(o.treatment.code()));
                }
                r
            })
            .collect::<Vec<_>>();
        let mut design = Self::new(
            obs.iter().map(|o| o.time).collect(),
            obs.iter().map(|o| o.event).collect(),
            rows,
        )?;
        if include_treatment {
            design.treatment_column = Some(design.n_covariates() - 1);
        }
        Ok(design)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|e| **e).count()
    }

    /// `(time, event, covariates)` per subject, in input order.
    pub fn subjects(&self) -> impl Iterator<Item = (f64, bool, &[f64])> + '_ {
        self.times
            .iter()
            .zip(&self.events)
            .zip(&self.rows)
            .map(|((&t, &e), x)| (t, e, x.as_slice()))
    }
}

/// Breslow partial log-likelihood with its gradient and Hessian.
pub fn partial_likelihood(design: &CoxDesign, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let p = design.n_covariates();
    assert_eq!(beta.len(), p, "coefficient length");
    let n = design.len();
    let eta: Vec<f64> = design
        .rows
        .iter()
        .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shift = if shift.is_finite() { shift } else { 0.0 };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| design.times[b].total_cmp(&design.times[a]));

    let mut ll = 0.0;
    let mut grad = DVector::zeros(p);
    let mut hess = DMatrix::zeros(p, p);
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    let mut i = 0;
    while i < n {
        let t = design.times[order[i]];
        let mut j = i;
        while j < n && design.times[order[j]] == t {
            let k = order[j];
            let w = (eta[k] - shift).exp();
            let x = DVector::from_column_slice(&design.rows[k]);
            s0 += w;
            s1.axpy(w, &x, 1.0);
            s2.ger(w, &x, &x, 1.0);
            j += 1;
        }
        let mean = &s1 / s0;
        let cov = &s2 / s0 - &mean * mean.transpose();
        for &k in &order[i..j] {
            if design.events[k] {
                ll += eta[k] - shift - s0.ln();
                grad += DVector::from_column_slice(&design.rows[k]) - &mean;
                hess -= &cov;
            }
        }
        i = j;
    }
    (ll, grad, hess)
}

/// Non-decreasing step function with `Λ(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulativeHazard {
    pub times: Vec<f64>,
    pub increments: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl CumulativeHazard {
    pub fn evaluate(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    /// Gradient norm divided by the number of events, on the fitting scale.
    pub gradient_norm: f64,
    pub newton_decrements: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoxFit {
    /// Coefficients on the original covariate scale; the treatment
    /// coefficient is last when treatment was a regressor.
    pub beta: Vec<f64>,
    pub baseline_cumhaz: CumulativeHazard,
    pub convergence: Convergence,
    pub treatment_column: Option<usize>,
}

impl CoxFit {
    /// Covariate count expected by prediction (treatment excluded).
    pub fn n_covariates(&self) -> usize {
        self.beta.len() - usize::from(self.treatment_column.is_some())
    }

    /// `β̂ᵀx` with the treatment entry set to control.
    pub fn risk_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_covariates() {
            return Err(Error::InvalidArgument(format!(
                "expected {} covariates, got {}",
                self.n_covariates(),
                x.len()
            )));
        }
        let mut it = x.iter();
        Ok((0..self.beta.len())
            .map(|j| {
                if Some(j) == self.treatment_column {
                    0.0
                } else {
                    self.beta[j] * it.next().expect("length checked")
                }
            })
            .sum())
    }
}

/// Newton–Raphson from β = 0 with step halving, on centred and scaled
/// covariates. Constant columns are not identifiable next to the baseline
/// and keep a zero coefficient.
pub fn cox_fit(design: &CoxDesign) -> Result<CoxFit> {
    if design.is_empty() || design.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let n = design.len() as f64;
    let p = design.n_covariates();

    let mut centre = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let m = design.rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let v = design.rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
        centre[j] = m;
        scale[j] = v.sqrt();
    }
    let active: Vec<usize> = (0..p).filter(|&j| scale[j] > 1e-12 * (1.0 + centre[j].abs())).collect();

    let standardized = CoxDesign {
        times: design.times.clone(),
        events: design.events.clone(),
        rows: design
            .rows
            .iter()
            .map(|r| active.iter().map(|&j| (r[j] - centre[j]) / scale[j]).collect())
            .collect(),
        treatment_column: None,
    };

    let mut beta = vec![0.0; p];
    let convergence = if active.is_empty() {
        Convergence {
            iterations: 0,
            gradient_norm: 0.0,
            newton_decrements: Vec::new(),
        }
    } else {
        let objective = |b: &[f64]| -> Evaluation { Some(partial_likelihood(&standardized, b)) };
        let opts = NewtonOptions {
            tolerance: GRADIENT_TOLERANCE,
            gradient_scale: 1.0 / design.n_events() as f64,
            max_iterations: MAX_ITERATIONS,
            max_norm: SEPARATION_NORM,
            ..Default::default()
        };
        let out = maximize(objective, vec![0.0; active.len()], &opts)?;
        let norm = out.x.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM {
            return Err(Error::Separation { norm });
        }
        for (k, &j) in active.iter().enumerate() {
            beta[j] = out.x[k] / scale[j];
        }
        Convergence {
            iterations: out.iterations,
            gradient_norm: out.gradient_norm,
            newton_decrements: out.decrements,
        }
    };

    let baseline_cumhaz = breslow(design, &beta);
    Ok(CoxFit {
        beta,
        baseline_cumhaz,
        convergence,
        treatment_column: design.treatment_column,
    })
}

/// `Λ̂(t) = Σ_{t_j ≤ t} d_j / Σ_{i ∈ R(t_j)} exp(βᵀxᵢ)`.
pub fn breslow(design: &CoxDesign, beta: &[f64]) -> CumulativeHazard {
    let n = design.len();
    let risk: Vec<f64> = design
        .rows
        .iter()
        .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>().exp())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| design.times[b].total_cmp(&design.times[a]));

    let mut steps = Vec::new();
    let mut at_risk = 0.0;
    let mut i = 0;
    while i < n {
        let t = design.times[order[i]];
        let mut j = i;
        let mut d = 0usize;
        while j < n && design.times[order[j]] == t {
            at_risk += risk[order[j]];
            d += usize::from(design.events[order[j]]);
            j += 1;
        }
        if d > 0 {
            steps.push((t, d as f64 / at_risk));
        }
        i = j;
    }
    steps.reverse();
    let mut cumulative = Vec::with_capacity(steps.len());
    let mut acc = 0.0;
    for &(_, inc) in &steps {
        acc += inc;
        cumulative.push(acc);
    }
    CumulativeHazard {
        times: steps.iter().map(|s| s.0).collect(),
        increments: steps.iter().map(|s| s.1).collect(),
        cumulative,
    }
}

/// `Ŝ(t | x) = exp(−Λ̂(t) · exp(β̂ᵀx))`, treatment set to control.
pub fn predict_survival(fit: &CoxFit, x: &[f64]) -> Result<StepSurvival> {
    let r = fit.risk_score(x)?.exp();
    let mut values: Vec<f64> = fit
        .baseline_cumhaz
        .cumulative
        .iter()
        .map(|l| (-l * r).exp().clamp(0.0, 1.0))
        .collect();
    // keep monotone under rounding
    for k in 1..values.len() {
        values[k] = values[k].min(values[k - 1]);
    }
    StepSurvival::new(fit.baseline_cumhaz.times.clone(), values)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalHazard {
    /// Baseline event times.
    pub timestamps: Vec<f64>,
    /// Survival-weighted mean of the conditional hazard increments.
    pub increments: Vec<f64>,
    /// Increment divided by the gap to the previous event time (or to 0).
    pub values: Vec<f64>,
}

impl MarginalHazard {
    /// Hazard rate per bin of `edges`: increments in `(e_k, e_{k+1}]` summed
    /// and divided by the bin width. Returns `edges.len() − 1` values.
    pub fn on_grid(&self, edges: &[f64]) -> Result<Vec<f64>> {
        if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("bin edges must be strictly increasing".into()));
        }
        Ok(edges
            .windows(2)
            .map(|w| {
                let sum: f64 = self
                    .timestamps
                    .iter()
                    .zip(&self.increments)
                    .filter(|(t, _)| **t > w[0] && **t <= w[1])
                    .map(|(_, inc)| inc)
                    .sum();
                sum / (w[1] - w[0])
            })
            .collect())
    }
}

/// Plug-in marginal hazard under control for a population of covariate rows:
/// at each event time, `Σᵢ dΛ̂ rᵢ Ŝᵢ / Σᵢ Ŝᵢ` with `rᵢ = exp(β̂ᵀxᵢ)`.
pub fn marginal_counterfactual_hazard(fit: &CoxFit, rows: &[Vec<f64>]) -> Result<MarginalHazard> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("marginal hazard needs at least one row".into()));
    }
    let risks = rows
        .iter()
        .map(|x| fit.risk_score(x).map(f64::exp))
        .collect::<Result<Vec<_>>>()?;
    let base = &fit.baseline_cumhaz;
    let mut increments = Vec::with_capacity(base.times.len());
    let mut values = Vec::with_capacity(base.times.len());
    let mut prev = 0.0;
    for (k, &t) in base.times.iter().enumerate() {
        let cum = base.cumulative[k];
        // Ŝᵢ = exp(-cum·rᵢ); normalise in log space against the largest Ŝᵢ
        let min_exponent = risks.iter().map(|r| cum * r).fold(f64::INFINITY, f64::min);
        let (mut num, mut den) = (0.0, 0.0);
        for r in &risks {
            let s = (-(cum * r) + min_exponent).exp();
            num += base.increments[k] * r * s;
            den += s;
        }
        let inc = num / den;
        increments.push(inc);
        let gap = t - prev;
        values.push(inc / gap.max(f64::EPSILON));
        prev = t;
    }
    Ok(MarginalHazard {
        timestamps: base.times.clone(),
        increments,
        values,
    })
}

/// Whether a set of observations has any treated subject.
pub fn has_treated(obs: &[CensoredObservation]) -> bool {
    obs.iter().any(|o| o.treatment == Treatment::Treated)
}
