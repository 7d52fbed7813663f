//! Thin SVD, rank selection and principal component regression weights.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are discarded.
pub const RELATIVE_SV_THRESHOLD: f64 = 1e-10;

/// Thin SVD `M = U diag(s) Vᵀ` restricted to the retained singular values.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub left_vectors: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub right_vectors: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        &self.left_vectors * s * self.right_vectors.transpose()
    }
}

pub fn svd(matrix: &DMatrix<f64>) -> Result<SvdFactors> {
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("matrix is empty".into()));
    }
    let dense = faer::Mat::<f64>::from_fn(rows, cols, |r, c| matrix[(r, c)]);
    let decomposition = dense
        .thin_svd()
        .map_err(|e| Error::InvalidArgument(format!("svd did not converge: {e:?}")))?;
    let u = decomposition.U();
    let v = decomposition.V();
    let sigma = decomposition.S().column_vector();
    let s: Vec<f64> = (0..rows.min(cols)).map(|i| sigma[i]).collect();

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let top = order.first().map_or(0.0, |&i| s[i]);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| top > 0.0 && s[i] > RELATIVE_SV_THRESHOLD * top)
        .collect();

    let left_vectors = DMatrix::from_fn(rows, kept.len(), |r, c| u[(r, kept[c])]);
    let right_vectors = DMatrix::from_fn(cols, kept.len(), |r, c| v[(r, kept[c])]);
    let singular_values = kept.iter().map(|&i| s[i]).collect();
    Ok(SvdFactors {
        left_vectors,
        singular_values,
        right_vectors,
    })
}

/// How many principal components the regression keeps.
///
/// There is no elbow rule: it has no formal definition to implement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankPolicy {
    /// Largest ratio `s_i / s_{i+1}`; all values when fewer than three exist.
    Gap,
    /// Smallest `k` capturing the given share of `Σ s_i²`.
    Energy(f64),
    Fixed(usize),
}

/// Share of squared singular mass retained by the default policy.
pub const DEFAULT_ENERGY: f64 = 0.9999;

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Energy(DEFAULT_ENERGY)
    }
}

impl fmt::Display for RankPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankPolicy::Gap => write!(f, "gap"),
            RankPolicy::Energy(theta) => write!(f, "energy:{theta}"),
            RankPolicy::Fixed(k) => write!(f, "fixed:{k}"),
        }
    }
}

impl FromStr for RankPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown rank policy `{s}` (gap | energy:θ | fixed:k)"));
        if s == "gap" {
            return Ok(RankPolicy::Gap);
        }
        let (name, arg) = s.split_once(':').ok_or_else(bad)?;
        match name {
            "energy" => {
                let theta: f64 = arg.parse().map_err(|_| bad())?;
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(Error::InvalidArgument(format!("energy share must be in (0, 1], got {theta}")));
                }
                Ok(RankPolicy::Energy(theta))
            }
            "fixed" => {
                let k: usize = arg.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(Error::InvalidArgument("fixed rank must be at least 1".into()));
                }
                Ok(RankPolicy::Fixed(k))
            }
            _ => Err(bad()),
        }
    }
}

/// Returns 0 only for an empty spectrum.
pub fn select_rank(singular_values: &[f64], policy: RankPolicy) -> usize {
    let n = singular_values.len();
    if n == 0 {
        return 0;
    }
    match policy {
        RankPolicy::Gap => {
            if n < 3 {
                return n;
            }
            let mut best = 1;
            let mut best_ratio = f64::NEG_INFINITY;
            for i in 0..n - 1 {
                let ratio = singular_values[i] / singular_values[i + 1];
                if ratio > best_ratio {
                    best_ratio = ratio;
                    best = i + 1;
                }
            }
            best
        }
        RankPolicy::Energy(theta) => {
            let total: f64 = singular_values.iter().map(|s| s * s).sum();
            let mut acc = 0.0;
            for (i, s) in singular_values.iter().enumerate() {
                acc += s * s;
                if acc >= theta * total {
                    return i + 1;
                }
            }
            n
        }
        RankPolicy::Fixed(k) => k.clamp(1, n),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcrWeights {
    pub weights: Vec<f64>,
    pub rank_used: usize,
    /// `‖y − M w‖₂` on the pre-period.
    pub pre_fit_residual: f64,
}

/// `ŵ = Σ_{i ≤ r₀} (1/s_i) v_i u_iᵀ y`, the minimum-norm least-squares fit of
/// `y` by the columns of `M` restricted to its top-`r₀` right singular space.
pub fn pcr_weights(pre_controls: &DMatrix<f64>, pre_target: &[f64], rank: usize) -> Result<PcrWeights> {
    let factors = svd(pre_controls)?;
    pcr_weights_from_factors(pre_controls, &factors, pre_target, rank)
}

pub fn pcr_weights_from_factors(
    pre_controls: &DMatrix<f64>,
    factors: &SvdFactors,
    pre_target: &[f64],
    rank: usize,
) -> Result<PcrWeights> {
    if pre_target.len() != pre_controls.nrows() {
        return Err(Error::InvalidArgument(format!(
            "target has {} entries, control matrix has {} rows",
            pre_target.len(),
            pre_controls.nrows()
        )));
    }
    if rank == 0 || rank > factors.rank() {
        return Err(Error::Rank(format!(
            "requested rank {rank} but {} singular values retained",
            factors.rank()
        )));
    }
    let y = DVector::from_column_slice(pre_target);
    let mut w = DVector::zeros(pre_controls.ncols());
    for i in 0..rank {
        let coef = factors.left_vectors.column(i).dot(&y) / factors.singular_values[i];
        w.axpy(coef, &factors.right_vectors.column(i), 1.0);
    }
    let residual = (&y - pre_controls * &w).norm();
    Ok(PcrWeights {
        weights: w.as_slice().to_vec(),
        rank_used: rank,
        pre_fit_residual: residual,
    })
}
