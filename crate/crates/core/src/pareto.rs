//! Pareto dominance, frontier extraction and exact hypervolume.
//!
//! Every objective is maximized. Hypervolume is exact for up to four
//! objectives: a sorted sweep in two dimensions and recursive slicing along
//! the last coordinate above that.

use std::cmp::Ordering;

use crate::error::{check_len, Error, Result};

/// Largest number of objectives supported by the exact hypervolume routines.
pub const MAX_EXACT_OBJECTIVES: usize = 4;

/// `true` iff `a` is at least as good as `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_len(a.len(), b.len())?;
    Ok(dominates_unchecked(a, b))
}

pub(crate) fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Component-wise `a >= b`.
pub(crate) fn weakly_dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y)
}

/// Descending lexicographic order; used for deterministic tie-breaking.
pub(crate) fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// A mutually non-dominated set of objective vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoFront {
    points: Vec<Vec<f64>>,
    reference: Option<Vec<f64>>,
}

impl ParetoFront {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Points in descending lexicographic order.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec<f64>> {
        self.points
    }

    pub fn reference(&self) -> Option<&[f64]> {
        self.reference.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Attach a reference point, dropping members that are not component-wise
    /// at least as large as it.
    pub fn with_reference(mut self, reference: Vec<f64>) -> Result<Self> {
        if let Some(p) = self.points.first() {
            check_len(reference.len(), p.len())?;
        }
        self.points.retain(|p| weakly_dominates(p, &reference));
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn hypervolume(&self, reference: &[f64]) -> Result<f64> {
        hypervolume(&self.points, reference)
    }
}

fn validate(points: &[Vec<f64>]) -> Result<usize> {
    let Some(first) = points.first() else {
        return Ok(0);
    };
    let m = first.len();
    for p in points {
        check_len(m, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite objective vector {p:?}")));
        }
    }
    Ok(m)
}

/// Non-dominated subset of `points` with duplicates collapsed to one representative.
pub fn pareto_front(points: &[Vec<f64>]) -> Result<ParetoFront> {
    let m = validate(points)?;
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| lex_desc(a, b));
    sorted.dedup_by(|a, b| a == b);

    // A dominating point always precedes the points it dominates in this order.
    let mut front: Vec<Vec<f64>> = Vec::new();
    if m == 2 {
        let mut best_second = f64::NEG_INFINITY;
        for p in sorted {
            if p[1] > best_second {
                best_second = p[1];
                front.push(p.clone());
            }
        }
    } else {
        for p in sorted {
            if !front.iter().any(|q| weakly_dominates(q, p)) {
                front.push(p.clone());
            }
        }
    }
    Ok(ParetoFront {
        points: front,
        reference: None,
    })
}

/// Lebesgue measure of the union of boxes `[reference, y]` over the front of `points`.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let m = reference.len();
    if m > MAX_EXACT_OBJECTIVES {
        return Err(Error::UnsupportedDimension(m));
    }
    validate(points)?;
    for p in points {
        check_len(m, p.len())?;
    }
    if m == 0 {
        return Err(Error::Empty("reference point"));
    }
    // Closed boxes: a coordinate equal to the reference contributes zero measure.
    let inside: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(v, r)| v > r))
        .cloned()
        .collect();
    if inside.is_empty() {
        return Ok(0.0);
    }
    let mut front = pareto_front(&inside)?.into_points();
    Ok(hv_recursive(&mut front, reference, m))
}

fn hv_recursive(points: &mut [Vec<f64>], reference: &[f64], m: usize) -> f64 {
    match m {
        1 => points.iter().map(|p| p[0] - reference[0]).fold(0.0, f64::max),
        2 => hv_2d(points, reference),
        _ => {
            let last = m - 1;
            points.sort_by(|a, b| b[last].total_cmp(&a[last]).then_with(|| lex_desc(a, b)));
            let mut total = 0.0;
            for i in 0..points.len() {
                let top = points[i][last];
                let bottom = points.get(i + 1).map_or(reference[last], |p| p[last]);
                let height = top - bottom;
                if height <= 0.0 {
                    continue;
                }
                let mut slice: Vec<Vec<f64>> = points[..=i].iter().map(|p| p[..last].to_vec()).collect();
                total += height * hv_recursive(&mut slice, &reference[..last], last);
            }
            total
        }
    }
}

fn hv_2d(points: &mut [Vec<f64>], reference: &[f64]) -> f64 {
    points.sort_by(|a, b| lex_desc(a, b));
    let mut area = 0.0;
    let mut y_max = reference[1];
    for p in points.iter() {
        if p[1] > y_max {
            area += (p[0] - reference[0]) * (p[1] - y_max);
            y_max = p[1];
        }
    }
    area
}

/// `HV(front ∪ new) - HV(front)`, never negative.
pub fn hv_improvement(new: &[Vec<f64>], front: &ParetoFront, reference: &[f64]) -> Result<f64> {
    let base = front.points();
    let covered = new.iter().all(|y| base.iter().any(|p| weakly_dominates(p, y)));
    if covered {
        // Still validates shapes for a consistent error surface.
        hypervolume(new, reference)?;
        return Ok(0.0);
    }
    let mut union: Vec<Vec<f64>> = base.to_vec();
    union.extend_from_slice(new);
    let after = hypervolume(&union, reference)?;
    let before = hypervolume(base, reference)?;
    Ok((after - before).max(0.0))
}
