//! Statistical comparison of evolved populations.
//!
//! Two labelled groups of parameter vectors are reduced to one dimension
//! with a two-class Fisher discriminant, then compared with a Mann-Whitney
//! U test and a Cliff's delta effect size. Families of p-values are
//! adjusted with the Holm step-down procedure. All functions are pure.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Ridge added to the within-class scatter when it is singular.
const SCATTER_RIDGE: f64 = 1e-9;

/// Largest per-group size for which the U distribution is enumerated
/// exactly; larger samples use the tie-corrected normal approximation.
const EXACT_LIMIT: usize = 8;

/// Errors raised by the comparison routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("group {label} has {count} samples but at least 2 are required")]
    DegenerateGroup { label: String, count: usize },
    #[error("vector dimensions disagree: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("within-class scatter is singular even after regularization")]
    SingularScatter,
}

/// A labelled collection of equal-length parameter vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    pub label: String,
    pub vectors: Vec<Vec<f64>>,
}

impl GroupSample {
    pub fn new(label: impl Into<String>, vectors: Vec<Vec<f64>>) -> Self {
        Self {
            label: label.into(),
            vectors,
        }
    }

    fn dimension(&self) -> Result<usize, StatsError> {
        let mut dims = self.vectors.iter().map(Vec::len);
        let first = dims.next().ok_or(StatsError::EmptySample)?;
        for d in dims {
            if d != first {
                return Err(StatsError::DimensionMismatch {
                    left: first,
                    right: d,
                });
            }
        }
        Ok(first)
    }

    fn require_two(&self) -> Result<(), StatsError> {
        if self.vectors.len() < 2 {
            return Err(StatsError::DegenerateGroup {
                label: self.label.clone(),
                count: self.vectors.len(),
            });
        }
        Ok(())
    }

    fn mean(&self, dim: usize) -> DVector<f64> {
        let mut mu = DVector::zeros(dim);
        for v in &self.vectors {
            mu += DVector::from_column_slice(v);
        }
        mu / self.vectors.len() as f64
    }

    fn scatter_about(&self, mu: &DVector<f64>, dim: usize) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(dim, dim);
        for v in &self.vectors {
            let d = DVector::from_column_slice(v) - mu;
            s += &d * d.transpose();
        }
        s
    }
}

/// Unit discriminant direction plus the two groups' 1-D projections.
pub type Projection = (Vec<f64>, (Vec<f64>, Vec<f64>));

/// Two-class Fisher discriminant: direction and per-group 1-D projections.
///
/// The direction solves `S_w w = mu_a - mu_b` for the pooled within-class
/// scatter `S_w` and is unit-normalized. A singular scatter is ridged with
/// a tiny multiple of the identity. When the group means coincide the
/// direction is arbitrary; the first axis is returned.
pub fn lda_project(a: &GroupSample, b: &GroupSample) -> Result<Projection, StatsError> {
    a.require_two()?;
    b.require_two()?;
    let dim = a.dimension()?;
    let dim_b = b.dimension()?;
    if dim != dim_b {
        return Err(StatsError::DimensionMismatch {
            left: dim,
            right: dim_b,
        });
    }

    let mu_a = a.mean(dim);
    let mu_b = b.mean(dim);
    let scatter = a.scatter_about(&mu_a, dim) + b.scatter_about(&mu_b, dim);
    let diff = &mu_a - &mu_b;

    let solved = scatter
        .clone()
        .lu()
        .solve(&diff)
        .filter(|w| w.iter().all(|c| c.is_finite()))
        .or_else(|| {
            let ridged = scatter + DMatrix::identity(dim, dim) * SCATTER_RIDGE;
            ridged.lu().solve(&diff)
        })
        .ok_or(StatsError::SingularScatter)?;

    let norm = solved.norm();
    let direction = if norm > f64::EPSILON {
        solved / norm
    } else {
        let mut e0 = DVector::zeros(dim);
        e0[0] = 1.0;
        e0
    };

    let project = |g: &GroupSample| {
        g.vectors
            .iter()
            .map(|v| DVector::from_column_slice(v).dot(&direction))
            .collect()
    };
    let projections = (project(a), project(b));
    Ok((direction.iter().copied().collect(), projections))
}

/// Midranks of the pooled sample, in pooled order.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).expect("finite values"));
    let mut ranks = vec![0.0; pooled.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        // Tied block [start, end): every member gets the average rank.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// U statistic for the subset of pooled ranks belonging to the first group.
fn u_from_ranks(ranks: &[f64], x_indices: &[usize], n_x: usize, n_y: usize) -> f64 {
    let rank_sum: f64 = x_indices.iter().map(|&i| ranks[i]).sum();
    let u_x = rank_sum - (n_x * (n_x + 1)) as f64 / 2.0;
    let u_y = (n_x * n_y) as f64 - u_x;
    u_x.min(u_y)
}

/// Exact two-sided tail: share of equally likely group assignments whose
/// U is at most the observed one.
fn exact_p(pooled: &[f64], n_x: usize, u_obs: f64) -> f64 {
    let ranks = midranks(pooled);
    let n = pooled.len();
    let mut tail = 0usize;
    let mut total = 0usize;
    for combo in (0..n).combinations(n_x) {
        total += 1;
        if u_from_ranks(&ranks, &combo, n_x, n - n_x) <= u_obs + 1e-9 {
            tail += 1;
        }
    }
    tail as f64 / total as f64
}

/// Two-sided tie-corrected normal approximation with continuity correction.
fn normal_p(pooled: &[f64], n_x: usize, n_y: usize, u_obs: f64) -> f64 {
    let n = pooled.len() as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let tie_term: f64 = sorted
        .chunk_by(|a, b| a == b)
        .map(|block| {
            let t = block.len() as f64;
            t * t * t - t
        })
        .sum();

    let prod = (n_x * n_y) as f64;
    let mean = prod / 2.0;
    let variance = prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        // Every pooled value is identical: no evidence either way.
        return 1.0;
    }
    let z = (u_obs - mean + 0.5) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * normal.cdf(z)).min(1.0)
}

/// Two-sided Mann-Whitney U test with midrank tie handling.
///
/// Returns `(U, p)` with `U = min(U_x, U_y)`. Groups of at most
/// `EXACT_LIMIT` each are tested by exact enumeration of assignments;
/// larger ones by the tie-corrected normal approximation.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n_x, n_y) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    let ranks = midranks(&pooled);
    let x_indices: Vec<usize> = (0..n_x).collect();
    let u = u_from_ranks(&ranks, &x_indices, n_x, n_y);

    let p = if n_x <= EXACT_LIMIT && n_y <= EXACT_LIMIT {
        exact_p(&pooled, n_x, u)
    } else {
        normal_p(&pooled, n_x, n_y, u)
    };
    Ok((u, p))
}

/// Cliff's delta: dominance rate over all cross-group pairs, in [-1, 1].
pub fn cliffs_delta(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut net = 0i64;
    for &a in x {
        for &b in y {
            net += match a.partial_cmp(&b).expect("finite values") {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    Ok(net as f64 / (x.len() * y.len()) as f64)
}

/// Holm step-down adjustment, returned in the original order.
///
/// The i-th smallest p becomes `max over j <= i of min(1, (m - j) p_(j))`
/// with zero-based j, which preserves the rejection monotonicity of the
/// unadjusted step-down procedure.
pub fn holm_correction(pvalues: &[f64]) -> Vec<f64> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvalues[i].partial_cmp(&pvalues[j]).expect("finite values"));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &idx) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * pvalues[idx]).min(1.0));
        adjusted[idx] = running;
    }
    adjusted
}
