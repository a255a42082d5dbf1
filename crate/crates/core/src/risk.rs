//! Empirical risk measures over objective samples under input noise.
//!
//! Value-at-risk, Chebyshev scalarizations, the multivariate value-at-risk
//! (MVaR) set and the mapping between MVaR points and scalarization weights.
//! All objectives are maximized; an MVaR point `z` of a sample matrix is a
//! maximal vector such that at least a fraction `alpha` of the rows dominate
//! or equal it.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::pareto::{pareto_front, weakly_dominates, ParetoFront, MAX_EXACT_OBJECTIVES};

/// Mutually non-dominated set of MVaR points.
pub type MvarSet = ParetoFront;

/// Risk level `alpha` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RiskLevel(f64);

impl RiskLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "risk level must lie in (0, 1], got {alpha}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Smallest count `k` with `k / n >= alpha`, evaluated in floating point
    /// exactly as the coverage check is.
    pub fn required_count(self, n: usize) -> usize {
        let nf = n as f64;
        let mut k = ((self.0 * nf).ceil() as usize).min(n);
        while k > 0 && ((k - 1) as f64) / nf >= self.0 {
            k -= 1;
        }
        while k < n && (k as f64) / nf < self.0 {
            k += 1;
        }
        k.max(1)
    }
}

impl TryFrom<f64> for RiskLevel {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RiskLevel> for f64 {
    fn from(r: RiskLevel) -> f64 {
        r.0
    }
}

/// Tolerance on the simplex constraint of a [`WeightVector`].
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("weights must be positive, got {w:?}")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidParameter(format!("weights must sum to 1, got {sum}")));
        }
        Ok(Self(w))
    }

    /// Normalize positive raw weights onto the simplex.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidParameter(format!("cannot normalize weights {raw:?}")));
        }
        Self::new(raw.iter().map(|v| v / sum).collect())
    }

    /// Uniform draw from the positive simplex via normalized exponentials.
    pub fn sample_uniform<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        loop {
            let raw: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
            if raw.iter().all(|&v| v > 0.0) {
                if let Ok(w) = Self::normalized(&raw) {
                    return w;
                }
            }
        }
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
}

/// `n_samples x n_objectives` realizations of the objectives of one design,
/// optionally paired with the constraint values of the same realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSampleMatrix {
    n_objectives: usize,
    values: Vec<f64>,
    n_constraints: usize,
    constraints: Vec<f64>,
}

impl ObjectiveSampleMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map(Vec::len).ok_or(Error::Empty("sample matrix"))?;
        let mut values = Vec::with_capacity(rows.len() * m);
        for r in rows {
            check_len(m, r.len())?;
            values.extend_from_slice(r);
        }
        Ok(Self {
            n_objectives: m,
            values,
            n_constraints: 0,
            constraints: Vec::new(),
        })
    }

    pub fn with_constraints(rows: &[Vec<f64>], constraints: &[Vec<f64>]) -> Result<Self> {
        let mut out = Self::new(rows)?;
        check_len(rows.len(), constraints.len())?;
        let v = constraints.first().map_or(0, Vec::len);
        for c in constraints {
            check_len(v, c.len())?;
            out.constraints.extend_from_slice(c);
        }
        out.n_constraints = v;
        Ok(out)
    }

    /// Build from row-major storage.
    pub fn from_flat(n_objectives: usize, values: Vec<f64>) -> Result<Self> {
        if n_objectives == 0 || values.is_empty() {
            return Err(Error::Empty("sample matrix"));
        }
        if !values.len().is_multiple_of(n_objectives) {
            return Err(Error::DimensionMismatch {
                expected: n_objectives,
                got: values.len() % n_objectives,
            });
        }
        Ok(Self {
            n_objectives,
            values,
            n_constraints: 0,
            constraints: Vec::new(),
        })
    }

    pub fn from_flat_with_constraints(
        n_objectives: usize,
        values: Vec<f64>,
        n_constraints: usize,
        constraints: Vec<f64>,
    ) -> Result<Self> {
        let mut out = Self::from_flat(n_objectives, values)?;
        if n_constraints > 0 {
            check_len(out.n_samples() * n_constraints, constraints.len())?;
            out.n_constraints = n_constraints;
            out.constraints = constraints;
        }
        Ok(out)
    }

    pub fn n_samples(&self) -> usize {
        self.values.len() / self.n_objectives
    }

    pub fn n_objectives(&self) -> usize {
        self.n_objectives
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_objectives..(i + 1) * self.n_objectives]
    }

    pub fn constraint_row(&self, i: usize) -> Option<&[f64]> {
        (self.n_constraints > 0).then(|| &self.constraints[i * self.n_constraints..(i + 1) * self.n_constraints])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_objectives)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Subtract `offset` from every row (e.g. the reference point, making
    /// in-range objectives positive).
    pub fn shifted(&self, offset: &[f64]) -> Result<Self> {
        check_len(self.n_objectives, offset.len())?;
        let mut out = self.clone();
        for row in out.values.chunks_exact_mut(self.n_objectives) {
            for (v, o) in row.iter_mut().zip(offset) {
                *v -= o;
            }
        }
        Ok(out)
    }

    /// Number of rows that dominate or equal `z`.
    pub fn coverage_count(&self, z: &[f64]) -> usize {
        self.rows().filter(|r| weakly_dominates(r, z)).count()
    }
}

/// Add `offset` back onto every point of a set computed on shifted samples.
pub fn unshift(set: &MvarSet, offset: &[f64]) -> Result<MvarSet> {
    let pts: Vec<Vec<f64>> = set
        .points()
        .iter()
        .map(|p| p.iter().zip(offset).map(|(v, o)| v + o).collect())
        .collect();
    pareto_front(&pts)
}

/// Empirical value-at-risk: the largest `z` with `#(samples >= z) / n >= alpha`,
/// i.e. the `(n - ceil(alpha n) + 1)`-th smallest sample.
pub fn var_alpha(samples: &[f64], alpha: RiskLevel) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut buf = samples.to_vec();
    Ok(var_in_place(&mut buf, alpha))
}

/// Same as [`var_alpha`] but reorders `buf`.
pub(crate) fn var_in_place(buf: &mut [f64], alpha: RiskLevel) -> f64 {
    let n = buf.len();
    let pos = n - alpha.required_count(n);
    let (_, v, _) = buf.select_nth_unstable_by(pos, |a, b| a.total_cmp(b));
    *v
}

/// Index of the sample realizing the empirical VaR. Equal values are ordered
/// by sample index, so ties resolve to the lowest index.
pub fn var_index(samples: &[f64], alpha: RiskLevel) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let n = samples.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let pos = n - alpha.required_count(n);
    idx.select_nth_unstable_by(pos, |&a, &b| samples[a].total_cmp(&samples[b]).then(a.cmp(&b)));
    let v = samples[idx[pos]];
    // Among the samples tied at the VaR value, pick the lowest index.
    Ok((0..n).find(|&i| samples[i] == v).unwrap_or(idx[pos]))
}

/// Chebyshev scalarization `min_i w_i (y_i - r_i)`.
pub fn chebyshev(y: &[f64], w: &WeightVector, r: &[f64]) -> Result<f64> {
    check_len(w.len(), y.len())?;
    check_len(w.len(), r.len())?;
    Ok(y.iter()
        .zip(w.as_slice())
        .zip(r)
        .map(|((y, w), r)| w * (y - r))
        .fold(f64::INFINITY, f64::min))
}

#[inline]
pub(crate) fn chebyshev0(y: &[f64], w: &[f64]) -> f64 {
    y.iter().zip(w).map(|(y, w)| w * y).fold(f64::INFINITY, f64::min)
}

/// Augmented Chebyshev scalarization `min_i w_i y_i + beta * sum_i w_i y_i`.
pub fn augmented_chebyshev(y: &[f64], w: &WeightVector, beta: f64) -> Result<f64> {
    check_len(w.len(), y.len())?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
    }
    Ok(augmented_chebyshev0(y, w.as_slice(), beta))
}

#[inline]
pub(crate) fn augmented_chebyshev0(y: &[f64], w: &[f64], beta: f64) -> f64 {
    let mut min = f64::INFINITY;
    let mut sum = 0.0;
    for (y, w) in y.iter().zip(w) {
        let t = w * y;
        min = min.min(t);
        sum += t;
    }
    min + beta * sum
}

/// Weights whose scalarization VaR recovers `z`: `w_i = (1/z_i) / sum_j (1/z_j)`.
pub fn weights_from_point(z: &[f64]) -> Result<WeightVector> {
    if z.is_empty() {
        return Err(Error::Empty("point"));
    }
    if let Some(bad) = z.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "weights need a strictly positive point, found coordinate {bad}; shift objectives first"
        )));
    }
    let inv: Vec<f64> = z.iter().map(|v| 1.0 / v).collect();
    let norm: f64 = inv.iter().sum();
    let mut w: Vec<f64> = inv.iter().map(|v| v / norm).collect();
    // Absorb rounding so the simplex check holds to machine precision.
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        w.iter_mut().for_each(|v| *v /= sum);
    }
    WeightVector::new(w)
}

/// The point `v / w` where `v` is the VaR of the Chebyshev scalarization of the
/// rows. Coordinates are rounded down onto the covering rows so that the
/// coverage count `#(rows >= z) >= ceil(alpha n)` holds exactly in floating point.
pub fn point_from_weights(samples: &ObjectiveSampleMatrix, w: &WeightVector, alpha: RiskLevel) -> Result<Vec<f64>> {
    check_len(samples.n_objectives(), w.len())?;
    let w = w.as_slice();
    let scal: Vec<f64> = samples.rows().map(|r| chebyshev0(r, w)).collect();
    let mut buf = scal.clone();
    let v = var_in_place(&mut buf, alpha);
    let mut z: Vec<f64> = w.iter().map(|wi| v / wi).collect();
    for (row, s) in samples.rows().zip(&scal) {
        if *s >= v {
            for (zj, yj) in z.iter_mut().zip(row) {
                if *yj < *zj {
                    *zj = *yj;
                }
            }
        }
    }
    // Coordinates within rounding of a sample value are moved onto it when
    // that keeps the coverage count.
    let k = alpha.required_count(samples.n_samples());
    let mut snapped = z.clone();
    let mut moved = false;
    for (j, zj) in snapped.iter_mut().enumerate() {
        let tol = 1e-12 * zj.abs().max(1.0);
        let nearest = samples
            .rows()
            .map(|r| r[j])
            .filter(|y| (y - *zj).abs() <= tol)
            .min_by(|a, b| (a - *zj).abs().total_cmp(&(b - *zj).abs()));
        if let Some(y) = nearest {
            if y != *zj {
                *zj = y;
                moved = true;
            }
        }
    }
    if moved && samples.coverage_count(&snapped) >= k {
        return Ok(snapped);
    }
    Ok(z)
}

fn check_objectives(samples: &ObjectiveSampleMatrix) -> Result<()> {
    let m = samples.n_objectives();
    if m > MAX_EXACT_OBJECTIVES {
        return Err(Error::UnsupportedDimension(m));
    }
    Ok(())
}

/// Exact empirical MVaR set of a sample matrix.
///
/// Sweeps the first coordinate in descending order and recurses on the rows
/// at or above each threshold; in two dimensions the inner problem is a
/// running k-th largest value. Produces the same set as counting over the
/// independent-VaR-bounded coordinate grid ([`mvar_bounded_grid`]).
pub fn mvar_exact(samples: &ObjectiveSampleMatrix, alpha: RiskLevel) -> Result<MvarSet> {
    check_objectives(samples)?;
    let k = alpha.required_count(samples.n_samples());
    let rows: Vec<&[f64]> = samples.rows().collect();
    let pts = mvar_recursive(&rows, k, 0);
    pareto_front(&pts)
}

fn mvar_recursive(rows: &[&[f64]], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let m = rows.first().map_or(0, |r| r.len());
    if rows.len() < k || m == 0 {
        return Vec::new();
    }
    if dim + 1 == m {
        let mut col: Vec<f64> = rows.iter().map(|r| r[dim]).collect();
        let pos = col.len() - k;
        let (_, v, _) = col.select_nth_unstable_by(pos, |a, b| a.total_cmp(b));
        return vec![vec![*v]];
    }
    let mut sorted: Vec<&[f64]> = rows.to_vec();
    sorted.sort_by(|a, b| b[dim].total_cmp(&a[dim]));
    let mut out = Vec::new();
    if dim + 2 == m {
        // Running top-k of the last coordinate as the first threshold decreases.
        let mut heap: BinaryHeap<Reverse<OrdF64>> = BinaryHeap::with_capacity(k + 1);
        let mut last_second = f64::NEG_INFINITY;
        let mut i = 0;
        while i < sorted.len() {
            let threshold = sorted[i][dim];
            while i < sorted.len() && sorted[i][dim] == threshold {
                let v = sorted[i][dim + 1];
                if heap.len() < k {
                    heap.push(Reverse(OrdF64(v)));
                } else if v > heap.peek().map_or(f64::NEG_INFINITY, |r| r.0 .0) {
                    heap.pop();
                    heap.push(Reverse(OrdF64(v)));
                }
                i += 1;
            }
            if heap.len() == k {
                let second = heap.peek().map_or(f64::NEG_INFINITY, |r| r.0 .0);
                if second > last_second {
                    out.push(vec![threshold, second]);
                    last_second = second;
                }
            }
        }
        return out;
    }
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i][dim];
        while i < sorted.len() && sorted[i][dim] == threshold {
            i += 1;
        }
        if i >= k {
            for tail in mvar_recursive(&sorted[..i], k, dim + 1) {
                let mut p = Vec::with_capacity(m - dim);
                p.push(threshold);
                p.extend(tail);
                out.push(p);
            }
        }
    }
    // Keep only the maximal suffixes for this level.
    pareto_front(&out).map(ParetoFront::into_points).unwrap_or(out)
}

#[derive(Clone, Copy, PartialEq)]
struct OrdF64(f64);
impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// MVaR by counting over the coordinate grid bounded above by the
/// independent per-objective VaR. Cost grows as `((1 - alpha) n)^M`.
pub fn mvar_bounded_grid(samples: &ObjectiveSampleMatrix, alpha: RiskLevel) -> Result<MvarSet> {
    check_objectives(samples)?;
    let m = samples.n_objectives();
    let k = alpha.required_count(samples.n_samples());
    let axes: Vec<Vec<f64>> = (0..m)
        .map(|j| {
            let col = samples.column(j);
            let bound = var_alpha(&col, alpha).expect("non-empty column");
            let mut vals: Vec<f64> = col.into_iter().filter(|v| *v <= bound).collect();
            vals.sort_by(|a, b| a.total_cmp(b));
            vals.dedup();
            vals
        })
        .collect();
    let mut survivors = Vec::new();
    let mut idx = vec![0usize; m];
    let mut z = vec![0.0; m];
    'grid: loop {
        for j in 0..m {
            z[j] = axes[j][idx[j]];
        }
        if samples.coverage_count(&z) >= k {
            survivors.push(z.clone());
        }
        for j in 0..m {
            idx[j] += 1;
            if idx[j] < axes[j].len() {
                continue 'grid;
            }
            idx[j] = 0;
        }
        break;
    }
    pareto_front(&survivors)
}

/// Pareto set of the points recovered from a finite family of scalarization weights.
pub fn mvar_via_scalarizations(
    samples: &ObjectiveSampleMatrix,
    alpha: RiskLevel,
    weights: &[WeightVector],
) -> Result<MvarSet> {
    if weights.is_empty() {
        return Err(Error::Empty("weight list"));
    }
    let pts = weights
        .iter()
        .map(|w| point_from_weights(samples, w, alpha))
        .collect::<Result<Vec<_>>>()?;
    pareto_front(&pts)
}

/// MVaR of a set of designs: the Pareto set of the union of per-design MVaR sets.
pub fn global_mvar(per_design: &[ObjectiveSampleMatrix], alpha: RiskLevel) -> Result<MvarSet> {
    let mut union = Vec::new();
    for s in per_design {
        union.extend(mvar_exact(s, alpha)?.into_points());
    }
    pareto_front(&union)
}

/// How the feasibility indicator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FeasibilityMode {
    /// `1[c_v > 0 for all v]`.
    Exact,
    /// `prod_v sigmoid(c_v / temperature)`.
    Sigmoid { temperature: f64 },
}

/// Default sigmoid temperature on the standardized constraint scale.
pub const DEFAULT_SIGMOID_TEMPERATURE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityConfig {
    pub mode: FeasibilityMode,
    /// Infeasibility cost, one entry per objective or a single shared value.
    pub infeasibility_cost: Vec<f64>,
}

impl FeasibilityConfig {
    pub fn exact(cost: f64) -> Self {
        Self {
            mode: FeasibilityMode::Exact,
            infeasibility_cost: vec![cost],
        }
    }

    pub fn sigmoid(temperature: f64, cost: Vec<f64>) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be > 0, got {temperature}"
            )));
        }
        Ok(Self {
            mode: FeasibilityMode::Sigmoid { temperature },
            infeasibility_cost: cost,
        })
    }

    pub(crate) fn cost(&self, j: usize) -> f64 {
        match self.infeasibility_cost.len() {
            0 => 0.0,
            1 => self.infeasibility_cost[0],
            _ => self.infeasibility_cost[j],
        }
    }

    /// Feasibility weight of one realization's constraint values.
    pub fn indicator(&self, c: &[f64]) -> f64 {
        match self.mode {
            FeasibilityMode::Exact => {
                if c.iter().all(|&v| v > 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            FeasibilityMode::Sigmoid { temperature } => c.iter().map(|&v| sigmoid(v / temperature)).product(),
        }
    }

    /// Apply `(y + cost) * weight - cost` to one objective row in place.
    pub fn weight_row(&self, y: &mut [f64], c: &[f64]) {
        if c.is_empty() {
            return;
        }
        let ind = self.indicator(c);
        for (j, v) in y.iter_mut().enumerate() {
            let lam = self.cost(j);
            *v = (*v + lam) * ind - lam;
        }
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Feasibility-weighted objectives; the identity when there are no constraints.
pub fn feasibility_weight(
    samples: &ObjectiveSampleMatrix,
    config: &FeasibilityConfig,
) -> Result<ObjectiveSampleMatrix> {
    if let FeasibilityMode::Sigmoid { temperature } = config.mode {
        if !(temperature > 0.0) {
            return Err(Error::InvalidParameter("sigmoid temperature must be > 0".into()));
        }
    }
    let n_cost = config.infeasibility_cost.len();
    if n_cost > 1 {
        check_len(samples.n_objectives(), n_cost)?;
    }
    let mut out = ObjectiveSampleMatrix {
        n_objectives: samples.n_objectives,
        values: samples.values.clone(),
        n_constraints: 0,
        constraints: Vec::new(),
    };
    if samples.n_constraints == 0 {
        return Ok(out);
    }
    let m = samples.n_objectives;
    for (i, row) in out.values.chunks_exact_mut(m).enumerate() {
        let c = samples.constraint_row(i).ok_or(Error::MissingConstraints)?;
        config.weight_row(row, c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn mat(rows: &[&[f64]]) -> ObjectiveSampleMatrix {
        ObjectiveSampleMatrix::new(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn risk_level_bounds() {
        assert!(RiskLevel::new(0.0).is_err());
        assert!(RiskLevel::new(1.0001).is_err());
        assert!(RiskLevel::new(1.0).is_ok());
        assert_eq!(alpha(0.8).required_count(10), 8);
        assert_eq!(alpha(2.0 / 3.0).required_count(3), 2);
        assert_eq!(alpha(0.7).required_count(10), 7);
        assert_eq!(alpha(1e-9).required_count(5), 1);
    }

    #[test]
    fn var_examples() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(var_alpha(&s, alpha(0.8)).unwrap(), 3.0);
        assert_eq!(var_alpha(&[5.0; 7], alpha(0.37)).unwrap(), 5.0);
        assert_eq!(var_alpha(&[4.0, -1.0, 2.0], alpha(1.0)).unwrap(), -1.0);
        assert_eq!(var_alpha(&[], alpha(0.5)), Err(Error::Empty("samples")));
    }

    #[test]
    fn var_index_ties_resolve_to_lowest_index() {
        let s = [2.0, 1.0, 1.0, 3.0];
        assert_eq!(var_index(&s, alpha(1.0)).unwrap(), 1);
        assert_eq!(var_index(&s, alpha(0.25)).unwrap(), 3);
    }

    #[test]
    fn chebyshev_examples() {
        let half = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(chebyshev(&[2.0, 4.0], &half, &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(chebyshev(&[3.0, -2.0], &half, &[3.0, -2.0]).unwrap(), 0.0);
        let w = WeightVector::normalized(&[1.0, 2.0]).unwrap();
        assert!((chebyshev(&[3.0, 3.0], &w, &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(chebyshev(&[1.0], &half, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn augmented_chebyshev_examples() {
        let half = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let y = [2.0, 4.0];
        assert_eq!(
            augmented_chebyshev(&y, &half, 0.0).unwrap(),
            chebyshev(&y, &half, &[0.0, 0.0]).unwrap()
        );
        assert!((augmented_chebyshev(&y, &half, 0.05).unwrap() - 1.15).abs() < 1e-15);
        assert_eq!(augmented_chebyshev(&[0.0, 0.0], &half, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn weights_from_point_examples() {
        let w = weights_from_point(&[1.0, 2.0]).unwrap();
        assert!((w.as_slice()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.as_slice()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(weights_from_point(&[7.5, 7.5]).unwrap().as_slice(), &[0.5, 0.5]);
        for v in weights_from_point(&[1.0, 1.0, 1.0]).unwrap().as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(matches!(weights_from_point(&[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.0, 0.0]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn point_from_weights_examples() {
        let s = mat(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]);
        let half = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(point_from_weights(&s, &half, alpha(2.0 / 3.0)).unwrap(), vec![1.0, 1.0]);

        let single = mat(&[&[2.0, 5.0]]);
        let w = WeightVector::normalized(&[1.0, 3.0]).unwrap();
        let z = point_from_weights(&single, &w, alpha(1.0)).unwrap();
        let v = chebyshev(&[2.0, 5.0], &w, &[0.0, 0.0]).unwrap();
        assert!((z[0] - v / w.as_slice()[0]).abs() < 1e-12);
        assert!((z[1] - v / w.as_slice()[1]).abs() < 1e-12);

        let y = [1.5, 4.0, 0.25];
        let same = mat(&[&y, &y, &y, &y]);
        let z = point_from_weights(&same, &weights_from_point(&y).unwrap(), alpha(0.5)).unwrap();
        for (a, b) in z.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mvar_exact_examples() {
        let s = mat(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]);
        let set = mvar_exact(&s, alpha(2.0 / 3.0)).unwrap();
        assert_eq!(set.points(), &[vec![2.0, 1.0], vec![1.0, 2.0]]);

        let y = [0.3, -1.0, 2.0];
        let same = mat(&[&y, &y, &y]);
        assert_eq!(mvar_exact(&same, alpha(0.9)).unwrap().points(), &[y.to_vec()]);

        let rows = mat(&[&[1.0, 3.0, 0.0], &[2.0, 2.0, 1.0], &[0.0, 0.0, 0.0], &[3.0, 1.0, -1.0]]);
        let set = mvar_exact(&rows, alpha(0.25)).unwrap();
        let front = pareto_front(&rows.rows().map(<[f64]>::to_vec).collect::<Vec<_>>()).unwrap();
        assert_eq!(set, front);
    }

    #[test]
    fn mvar_rejects_five_objectives() {
        let s = mat(&[&[1.0; 5]]);
        assert_eq!(mvar_exact(&s, alpha(0.5)), Err(Error::UnsupportedDimension(5)));
    }

    #[test]
    fn bounded_grid_matches_sweep_on_example() {
        let s = mat(&[&[1.0, 3.0, 2.0], &[2.0, 2.0, 2.0], &[3.0, 1.0, 0.5], &[0.5, 0.5, 3.0]]);
        for a in [0.25, 0.5, 0.75, 1.0] {
            assert_eq!(
                mvar_exact(&s, alpha(a)).unwrap(),
                mvar_bounded_grid(&s, alpha(a)).unwrap()
            );
        }
    }

    #[test]
    fn scalarization_examples() {
        let s = mat(&[&[1.0, 3.0], &[2.0, 2.0], &[3.0, 1.0]]);
        let ws = vec![
            WeightVector::normalized(&[2.0, 1.0]).unwrap(),
            WeightVector::normalized(&[1.0, 2.0]).unwrap(),
        ];
        let set = mvar_via_scalarizations(&s, alpha(2.0 / 3.0), &ws).unwrap();
        assert_eq!(set.points(), &[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let one = mvar_via_scalarizations(&s, alpha(2.0 / 3.0), &ws[..1]).unwrap();
        assert_eq!(one.len(), 1);
        assert!(mvar_via_scalarizations(&s, alpha(0.5), &[]).is_err());
    }

    #[test]
    fn global_mvar_examples() {
        let a = mat(&[&[1.0, 3.0], &[1.0, 3.0]]);
        let b = mat(&[&[3.0, 1.0], &[3.0, 1.0]]);
        let set = global_mvar(&[a.clone(), b], alpha(1.0)).unwrap();
        assert_eq!(set.points(), &[vec![3.0, 1.0], vec![1.0, 3.0]]);
        assert_eq!(
            global_mvar(&[a.clone(), a.clone()], alpha(1.0)).unwrap(),
            mvar_exact(&a, alpha(1.0)).unwrap()
        );
        assert!(global_mvar(&[], alpha(0.5)).unwrap().is_empty());
    }

    #[test]
    fn feasibility_examples() {
        let rows = vec![vec![2.0, 4.0], vec![1.0, 1.0]];
        let ok = ObjectiveSampleMatrix::with_constraints(&rows, &[vec![1.0], vec![0.5]]).unwrap();
        let out = feasibility_weight(&ok, &FeasibilityConfig::exact(3.0)).unwrap();
        assert_eq!(out.row(0), &[2.0, 4.0]);
        assert_eq!(out.row(1), &[1.0, 1.0]);

        let bad = ObjectiveSampleMatrix::with_constraints(&rows, &[vec![0.0], vec![0.5]]).unwrap();
        let out = feasibility_weight(&bad, &FeasibilityConfig::exact(0.0)).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);

        let neg = ObjectiveSampleMatrix::with_constraints(&rows[..1], &[vec![-1.0]]).unwrap();
        let out = feasibility_weight(&neg, &FeasibilityConfig::exact(10.0)).unwrap();
        assert_eq!(out.row(0), &[-10.0, -10.0]);

        let plain = ObjectiveSampleMatrix::new(&rows).unwrap();
        assert_eq!(
            feasibility_weight(&plain, &FeasibilityConfig::exact(10.0)).unwrap(),
            plain
        );
    }

    #[test]
    fn sigmoid_mode_approaches_indicator() {
        let cfg = FeasibilityConfig::sigmoid(1e-3, vec![0.0]).unwrap();
        assert!(cfg.indicator(&[0.1]) > 1.0 - 1e-12);
        assert!(cfg.indicator(&[-0.1]) < 1e-12);
        assert_eq!(cfg.indicator(&[0.0]), 0.5);
        assert!(FeasibilityConfig::sigmoid(0.0, vec![]).is_err());
    }
}
