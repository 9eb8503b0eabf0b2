//! Statistical and linear-algebra primitives shared by the metrics.
//!
//! Everything here is a pure function of its inputs. Conventions for the
//! degenerate cases (zero vectors, constant vectors, rank ties) are fixed so
//! that every metric built on top is deterministic.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-empty vector of finite scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        ensure_finite(&values)?;
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ScoreVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Ordinal ranks, 1 = largest value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Rank of feature `i` (1-based rank, 0-based index).
    pub fn rank_of(&self, i: usize) -> usize {
        self.0[i]
    }
}

pub(crate) fn ensure_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

fn ensure_same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Cosine similarity in `[-1, 1]`.
///
/// Two zero vectors are perfectly similar (1); exactly one zero vector gives 0.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_same_len(a, b)?;
    if a.is_empty() {
        return Err(Error::Empty);
    }
    ensure_finite(a)?;
    ensure_finite(b)?;

    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (dot / (na * nb)).clamp(-1.0, 1.0),
    })
}

/// Average (fractional) ranks in ascending order, 1-based. Ties share the
/// mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let shared = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = shared;
        }
        start = end;
    }
    ranks
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Pearson correlation. Returns `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
///
/// If either vector is constant the coefficient is undefined in the usual
/// sense; we return 1 when the two vectors are element-wise identical and 0
/// otherwise.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure_same_len(a, b)?;
    if a.len() < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: a.len(),
        });
    }
    ensure_finite(a)?;
    ensure_finite(b)?;

    if is_constant(a) || is_constant(b) {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    // Ranks of a non-constant vector always have positive variance.
    Ok(pearson(&ra, &rb).unwrap_or(0.0))
}

/// Shannon entropy of the L1-normalised absolute values, in `[0, ln n]`.
///
/// Returns `None` for an all-zero vector, where the distribution is undefined.
pub fn normalized_entropy_complexity(v: &[f64]) -> Result<Option<f64>> {
    if v.is_empty() {
        return Err(Error::Empty);
    }
    ensure_finite(v)?;
    let total: f64 = v.iter().map(|x| x.abs()).sum();
    if total == 0.0 {
        return Ok(None);
    }
    let h = v
        .iter()
        .map(|x| x.abs() / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>();
    Ok(Some(h.clamp(0.0, (v.len() as f64).ln())))
}

/// Trapezoid-rule area under `ys` over `xs`, divided by the x-span so that a
/// constant curve of height `c` scores `c`.
pub fn trapezoid_auc(xs: &[f64], ys: &[f64]) -> Result<f64> {
    ensure_same_len(xs, ys)?;
    if xs.len() < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: xs.len(),
        });
    }
    ensure_finite(xs)?;
    ensure_finite(ys)?;
    if let Some(i) = xs.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NotIncreasing(i + 1));
    }
    let area: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    Ok(area / (xs[xs.len() - 1] - xs[0]))
}

/// Unbiased per-column variance (denominator `K - 1`) of a `K x n` matrix.
///
/// Uses Welford's update so one pass suffices for long ensembles.
pub fn covariance_diagonal<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>> {
    if rows.len() < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: rows.len(),
        });
    }
    let n = rows[0].as_ref().len();
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for (k, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: row.len(),
            });
        }
        ensure_finite(row)?;
        let count = (k + 1) as f64;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = x - *m;
            *m += delta / count;
            *s += delta * (x - *m);
        }
    }
    let denom = (rows.len() - 1) as f64;
    Ok(m2.into_iter().map(|s| (s / denom).max(0.0)).collect())
}

/// Descending ordinal ranks: rank 1 is the largest value and ties go to the
/// lower feature index first.
pub fn descending_ranks(v: &[f64]) -> Result<RankVector> {
    if v.is_empty() {
        return Err(Error::Empty);
    }
    ensure_finite(v)?;
    let mut order: Vec<usize> = (0..v.len()).collect();
    // sort_by is stable, so equal values keep ascending index order.
    order.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0; v.len()];
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
    Ok(RankVector(ranks))
}

pub fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Sample standard deviation (denominator `N - 1`).
pub fn sample_std(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v)?;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (v.len() - 1) as f64).sqrt())
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mid = s.len() / 2;
    Some(if s.len() % 2 == 0 {
        0.5 * (s[mid - 1] + s[mid])
    } else {
        s[mid]
    })
}
