#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use ssc_core::panel::CensoredObservation;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Minimiser of `‖y − M w‖` over `w` in the span of the top-`rank`
/// eigenvectors of `MᵀM`, from the normal equations of the reduced problem.
pub fn projected_normal_equations(m: &DMatrix<f64>, y: &[f64], rank: usize) -> DVector<f64> {
    let basis = top_eigenvectors(m, rank);
    let reduced = m * &basis;
    let lhs = reduced.transpose() * &reduced;
    let rhs = reduced.transpose() * DVector::from_column_slice(y);
    let z = lhs.cholesky().expect("reduced normal equations are positive definite").solve(&rhs);
    basis * z
}

/// Orthogonal projection of `x` onto the span of the top-`rank` eigenvectors
/// of `MᵀM`, the row space when `M` has that rank.
pub fn row_space_projection(m: &DMatrix<f64>, x: &DVector<f64>, rank: usize) -> DVector<f64> {
    let basis = top_eigenvectors(m, rank);
    &basis * (basis.transpose() * x)
}

fn top_eigenvectors(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.transpose() * m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    DMatrix::from_fn(m.ncols(), rank, |r, c| eig.eigenvectors[(r, order[c])])
}

/// `1 − F̂(t)` for uncensored samples.
pub fn one_minus_ecdf(samples: &[f64], t: f64) -> f64 {
    let at_or_below = samples.iter().filter(|&&s| s <= t).count();
    1.0 - at_or_below as f64 / samples.len() as f64
}

pub fn exponential_cell(rng: &mut ChaCha8Rng, n: usize, rate: f64, censor_rate: Option<f64>) -> Vec<CensoredObservation> {
    let event = Exp::new(rate).unwrap();
    let censor = censor_rate.map(|c| Exp::new(c).unwrap());
    (0..n)
        .map(|_| {
            let tau: f64 = event.sample(rng);
            match &censor {
                Some(c) => {
                    let c: f64 = c.sample(rng);
                    if tau <= c {
                        CensoredObservation::event(tau)
                    } else {
                        CensoredObservation::censored(c)
                    }
                }
                None => CensoredObservation::event(tau),
            }
        })
        .collect()
}

/// Times rounded to a coarse lattice so that ties appear.
pub fn tied_cell(rng: &mut ChaCha8Rng, n: usize) -> Vec<CensoredObservation> {
    (0..n)
        .map(|_| {
            let t = rng.random_range(1..=12) as f64 * 0.5;
            if rng.random_bool(0.7) {
                CensoredObservation::event(t)
            } else {
                CensoredObservation::censored(t)
            }
        })
        .collect()
}

pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

/// Random Cox design: `n` subjects, `p` normal covariates, exponential
/// event times with log-rate `xᵀβ_true` and independent exponential censoring.
pub fn random_cox_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> ssc_core::cox::CoxDesign {
    let beta_true: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x = normal_vec(rng, p);
        let rate = 0.1 * x.iter().zip(&beta_true).map(|(a, b)| a * b).sum::<f64>().exp();
        let tau: f64 = Exp::new(rate).unwrap().sample(rng);
        let c: f64 = Exp::new(0.03).unwrap().sample(rng);
        times.push(tau.min(c));
        events.push(tau <= c);
        rows.push(x);
    }
    ssc_core::cox::CoxDesign::new(times, events, rows).unwrap()
}

/// Largest `‖g − g_fd‖ / max(‖g‖, 1)` over random coefficient vectors.
pub fn score_check(design: &ssc_core::cox::CoxDesign, rng: &mut ChaCha8Rng, draws: usize) -> f64 {
    let p = design.n_covariates();
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad, _) = ssc_core::cox::partial_likelihood(design, &beta);
        let fd = central_difference(|b| ssc_core::cox::partial_likelihood(design, b).0, &beta, 1e-5);
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(diff / grad.norm().max(1.0));
    }
    worst
}

/// Two groups of `k` uncensored exponentials with rates `base` and `2·base`;
/// the covariate is the group indicator.
pub fn rate_ratio_two_design(rng: &mut ChaCha8Rng, k: usize, base: f64) -> ssc_core::cox::CoxDesign {
    let mut times = Vec::with_capacity(2 * k);
    let mut rows = Vec::with_capacity(2 * k);
    for (group, rate) in [(0.0, base), (1.0, 2.0 * base)] {
        let dist = Exp::new(rate).unwrap();
        for _ in 0..k {
            times.push(dist.sample(rng));
            rows.push(vec![group]);
        }
    }
    let events = vec![true; times.len()];
    ssc_core::cox::CoxDesign::new(times, events, rows).unwrap()
}

/// Checks symmetry, identity of indiscernibles and the triangle inequality
/// of the sup-norm distance on `triples` random grid vectors.
pub fn sup_norm_axioms_hold(rng: &mut ChaCha8Rng, triples: usize) -> bool {
    use ssc_core::metrics::sup_norm_error as d;
    (0..triples).all(|_| {
        let n = rng.random_range(1..=100);
        let a = normal_vec(rng, n);
        let b = normal_vec(rng, n);
        let c = normal_vec(rng, n);
        let (ab, ba) = (d(&a, &b).unwrap(), d(&b, &a).unwrap());
        let (ac, cb) = (d(&a, &c).unwrap(), d(&c, &b).unwrap());
        ab == ba && d(&a, &a).unwrap() == 0.0 && (ab > 0.0) == (a != b) && ab <= ac + cb + 1e-15
    })
}

/// Largest change of the SMD under common affine maps `x ↦ s·x + c`.
pub fn smd_affine_deviation(rng: &mut ChaCha8Rng, trials: usize) -> f64 {
    use ssc_core::metrics::smd;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let a: Vec<f64> = normal_vec(rng, 40);
        let b: Vec<f64> = normal_vec(rng, 55).into_iter().map(|x| 0.3 + 1.5 * x).collect();
        let mut s: f64 = rng.random_range(0.1..10.0);
        if rng.random_bool(0.5) {
            s = -s;
        }
        let c: f64 = rng.random_range(-100.0..100.0);
        let map = |xs: &[f64]| xs.iter().map(|x| s * x + c).collect::<Vec<_>>();
        let before = smd(&a, &b).unwrap();
        let after = smd(&map(&a), &map(&b)).unwrap();
        worst = worst.max((before - after).abs());
    }
    worst
}

/// Fraction of null Welch tests (both groups standard normal) with p < 0.05.
pub fn null_t_rejection_rate(seed: u64, draws: usize) -> f64 {
    use ssc_core::metrics::{two_sample_test, TestKind};
    let mut rng = rng(seed);
    let rejections = (0..draws)
        .filter(|_| {
            let a = normal_vec(&mut rng, 50);
            let b = normal_vec(&mut rng, 50);
            two_sample_test(&a, &b, TestKind::T).unwrap() < 0.05
        })
        .count();
    rejections as f64 / draws as f64
}

/// Noiseless rank-2 panel: curves are unit-specific mixtures of two
/// exponentials with period-specific rates. The target mixes donors 0 and 3
/// with weights 0.3 and 0.7. Returns the panel and the target's post truth.
pub fn rank_two_panel(grid: &[f64]) -> (ssc_core::ssc::CurvePanel, Vec<f64>) {
    let mix = [0.1, 0.35, 0.6, 0.8, 0.95, 0.2, 0.5];
    let target = 0.3 * mix[0] + 0.7 * mix[3];
    let curve = |a: f64, rates: (f64, f64), t: f64| a * (-rates.0 * t).exp() + (1.0 - a) * (-rates.1 * t).exp();
    let (pre, post) = ((0.02, 0.15), (0.04, 0.09));
    let build = |rates| DMatrix::from_fn(grid.len(), mix.len(), |r, c| curve(mix[c], rates, grid[r]));
    let panel = ssc_core::ssc::CurvePanel {
        pre_controls: build(pre),
        post_controls: build(post),
        pre_target: grid.iter().map(|&t| curve(target, pre, t)).collect(),
    };
    (panel, grid.iter().map(|&t| curve(target, post, t)).collect())
}

/// Largest ℓ₂ gap between the closed-form weights and the oracle on random
/// `rows × cols` problems with a random rank.
pub fn closed_form_gap(seed: u64, instances: usize, rows: usize, cols: usize) -> f64 {
    let mut rng = rng(seed);
    (0..instances)
        .map(|_| {
            let m = normal_matrix(&mut rng, rows, cols);
            let y = normal_vec(&mut rng, rows);
            let rank = rng.random_range(1..=cols);
            let w = DVector::from_vec(ssc_core::lowrank::pcr_weights(&m, &y, rank).unwrap().weights);
            (w - projected_normal_equations(&m, &y, rank)).norm()
        })
        .fold(0.0, f64::max)
}

/// Largest gap between KM and `1 − ECDF` over random uncensored cells.
pub fn km_ecdf_gap(seed: u64, cells: usize) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..cells {
        let n = 5 + i % 40;
        let cell: Vec<CensoredObservation> = if i % 3 == 0 {
            tied_cell(&mut rng, n).into_iter().map(|o| CensoredObservation::event(o.time)).collect()
        } else {
            exponential_cell(&mut rng, n, 0.2, None)
        };
        let times: Vec<f64> = cell.iter().map(|o| o.time).collect();
        let fit = ssc_core::km::km_fit(&cell).unwrap();
        let max = times.iter().copied().fold(0.0, f64::max);
        let probes = times
            .iter()
            .flat_map(|&t| [t, (t - 1e-9).max(0.0)])
            .chain((0..=400).map(|k| max * 1.1 * k as f64 / 400.0));
        for t in probes {
            worst = worst.max((fit.evaluate(t) - one_minus_ecdf(&times, t)).abs());
        }
    }
    worst
}
