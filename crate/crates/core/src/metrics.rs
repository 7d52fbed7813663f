//! Error metrics, error summaries and covariate balance diagnostics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::simgen::Model;
use crate::special::{chi2_sf, student_t_two_sided};

/// Linear-interpolation quantile of an ascending slice (position `q·(n−1)`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if hi == lo {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with `n − 1` denominator; zero for a single value.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sup_norm_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `|μ_a − μ_b| / sqrt((s_a² + s_b²) / 2)`.
pub fn smd(group_a: &[f64], group_b: &[f64]) -> Result<f64> {
    if group_a.len() < 2 || group_b.len() < 2 {
        return Err(Error::InvalidArgument("each group needs at least two samples".into()));
    }
    let pooled = (sample_variance(group_a) + sample_variance(group_b)) / 2.0;
    if !(pooled > 0.0) {
        return Err(Error::InvalidArgument("zero pooled variance".into()));
    }
    Ok((mean(group_a) - mean(group_b)).abs() / pooled.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestKind {
    /// Welch's unequal-variance t-test.
    T,
    /// Pearson chi-squared on the 2×2 table, no continuity correction.
    Chi2,
}

/// Two-sided p-value comparing two samples. For `Chi2` the samples must be
/// coded 0/1.
pub fn two_sample_test(group_a: &[f64], group_b: &[f64], kind: TestKind) -> Result<f64> {
    match kind {
        TestKind::T => welch_t_test(group_a, group_b),
        TestKind::Chi2 => chi2_test(group_a, group_b),
    }
}

fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument("t-test needs at least two samples per group".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(Error::InvalidArgument("t-test with zero variance in both groups".into()));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(student_t_two_sided(t, df))
}

fn chi2_test(a: &[f64], b: &[f64]) -> Result<f64> {
    let count = |xs: &[f64]| -> Result<f64> {
        xs.iter().try_fold(0.0, |acc, &x| match x {
            v if v == 1.0 => Ok(acc + 1.0),
            v if v == 0.0 => Ok(acc),
            v => Err(Error::InvalidArgument(format!("chi-squared test needs 0/1 samples, got {v}"))),
        })
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ones_a, ones_b) = (count(a)?, count(b)?);
    let observed = [[ones_a, na - ones_a], [ones_b, nb - ones_b]];
    let total = na + nb;
    let col = [ones_a + ones_b, total - ones_a - ones_b];
    let row = [na, nb];
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = row[i] * col[j] / total;
            if !(expected > 0.0) {
                return Err(Error::InvalidArgument("degenerate 2x2 table: zero expected count".into()));
            }
            stat += (observed[i][j] - expected).powi(2) / expected;
        }
    }
    Ok(chi2_sf(stat, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Ssc,
    Oracle,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Ssc => "ssc",
            Estimator::Oracle => "oracle",
        })
    }
}

/// One replication's sup-norm error for one estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRecord {
    pub model: Model,
    pub k: usize,
    pub estimator: Estimator,
    pub seed: u64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSummary {
    pub model: Model,
    pub k: usize,
    pub estimator: Estimator,
    pub seeds: Vec<u64>,
    pub per_replication: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Set when the sd is a convention rather than an estimate.
    pub note: Option<String>,
}

/// Groups records by `(model, K, estimator)` and reports mean ± sd.
pub fn summarize_errors(records: &[ErrorRecord]) -> Vec<ErrorSummary> {
    let mut groups: BTreeMap<(Model, usize, Estimator), (Vec<u64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.model, r.k, r.estimator)).or_default();
        g.0.push(r.seed);
        g.1.push(r.error);
    }
    groups
        .into_iter()
        .map(|((model, k, estimator), (seeds, errs))| {
            let note = (errs.len() == 1).then(|| "single replication: sd reported as 0".to_string());
            ErrorSummary {
                model,
                k,
                estimator,
                seeds,
                mean: mean(&errs),
                sd: sample_variance(&errs).sqrt(),
                per_replication: errs,
                note,
            }
        })
        .collect()
}

/// One row per `(model, K)`: `dgp,K,replications,ssc_mean,ssc_sd,oracle_mean,oracle_sd`.
/// A missing estimator leaves its cells empty.
pub fn write_error_table<W: Write>(summaries: &[ErrorSummary], writer: W) -> Result<()> {
    let mut rows: BTreeMap<(Model, usize), [Option<&ErrorSummary>; 2]> = BTreeMap::new();
    for s in summaries {
        let slot = match s.estimator {
            Estimator::Ssc => 0,
            Estimator::Oracle => 1,
        };
        rows.entry((s.model, s.k)).or_default()[slot] = Some(s);
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["dgp", "K", "replications", "ssc_mean", "ssc_sd", "oracle_mean", "oracle_sd"])?;
    for ((model, k), [ssc, oracle]) in rows {
        let reps = ssc.or(oracle).map_or(0, |s| s.per_replication.len());
        let cells = |s: Option<&ErrorSummary>| match s {
            Some(s) => [fmt_f64(s.mean), fmt_f64(s.sd)],
            None => [String::new(), String::new()],
        };
        let [sm, ss] = cells(ssc);
        let [om, os] = cells(oracle);
        wtr.write_record([model.to_string(), k.to_string(), reps.to_string(), sm, ss, om, os])?;
    }
    wtr.flush()?;
    Ok(())
}
