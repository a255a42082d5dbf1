//! Input-noise processes `P(xi; x)` and the perturbation `x ⋄ xi`.
//!
//! Perturbations are reparameterized: a fixed matrix of base uniforms is
//! pushed through inverse CDFs (and a covariance square root) so the realized
//! noise is a deterministic, continuous function of the design.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_len, Error, Result};
use crate::qmc::sobol;
use crate::risk::sigmoid;

/// Base uniforms are clamped into `[U_CLAMP, 1 - U_CLAMP]` before the inverse normal CDF.
pub const U_CLAMP: f64 = 1e-10;

/// Standard normal quantile of a uniform, with the tails clamped.
pub fn inverse_normal(u: f64) -> f64 {
    thread_local! {
        static STD: Normal = Normal::standard();
    }
    STD.with(|n| n.inverse_cdf(u.clamp(U_CLAMP, 1.0 - U_CLAMP)))
}

/// Design-dependent per-dimension noise scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", rename_all = "kebab-case")]
pub enum ScaleFunction {
    /// `base * (1 + sigmoid(1 - 2 x_0))` in every dimension.
    Sigmoid { base: f64 },
    /// `factor * x_j` in dimension `j` (negative coordinates give zero).
    Proportional { factor: f64 },
}

impl ScaleFunction {
    fn value(&self, x: &[f64], j: usize) -> f64 {
        match *self {
            Self::Sigmoid { base } => base * (1.0 + sigmoid(1.0 - 2.0 * x[0])),
            Self::Proportional { factor } => factor * x[j].max(0.0),
        }
    }

    /// `d scale_j / d x_k`.
    fn derivative(&self, x: &[f64], j: usize, k: usize) -> f64 {
        match *self {
            Self::Sigmoid { base } => {
                if k == 0 {
                    let s = sigmoid(1.0 - 2.0 * x[0]);
                    -2.0 * base * s * (1.0 - s)
                } else {
                    0.0
                }
            }
            Self::Proportional { factor } => {
                if j == k && x[j] > 0.0 {
                    factor
                } else {
                    0.0
                }
            }
        }
    }
}

/// Parametric family of the noise distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    /// `x + xi`, `xi ~ N(0, diag(std^2))`.
    AdditiveGaussian { std: Vec<f64> },
    /// `x ∘ xi`, `xi ~ N(1, diag(std^2))`.
    MultiplicativeGaussian { std: Vec<f64> },
    /// `x + xi`, `xi ~ U[-half_width, half_width]`.
    AdditiveUniform { half_width: Vec<f64> },
    /// `x + xi`, `xi ~ N(0, covariance)`.
    CorrelatedGaussian { covariance: Vec<Vec<f64>> },
    /// `x + xi`, `xi_j ~ N(0, scale_j(x)^2)`.
    HeteroskedasticGaussian { scale: ScaleFunction },
}

/// Whether the scalar scales of Gaussian kinds are standard deviations or variances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleConvention {
    #[default]
    Std,
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProcess {
    #[serde(flatten)]
    pub kind: NoiseKind,
    /// Dimensions left unperturbed.
    #[serde(default)]
    pub noise_free: Vec<usize>,
    #[serde(default)]
    pub convention: ScaleConvention,
}

/// Fixed base uniforms shared by every design within one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSet {
    base: Vec<Vec<f64>>,
}

impl PerturbationSet {
    pub fn new(base: Vec<Vec<f64>>) -> Result<Self> {
        let d = base.first().map(Vec::len).ok_or(Error::Empty("perturbation base"))?;
        for row in &base {
            check_len(d, row.len())?;
            if row.iter().any(|u| !(0.0..1.0).contains(u)) {
                return Err(Error::Domain("base uniforms must lie in [0, 1)".into()));
            }
        }
        Ok(Self { base })
    }

    /// `n` scrambled Sobol points in `d` dimensions.
    pub fn sobol(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self::new(sobol(d, n, Some(seed))?)
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.base
    }
}

impl NoiseProcess {
    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            noise_free: Vec::new(),
            convention: ScaleConvention::Std,
        }
    }

    pub fn additive_gaussian(std: Vec<f64>) -> Self {
        Self::new(NoiseKind::AdditiveGaussian { std })
    }

    pub fn multiplicative_gaussian(std: Vec<f64>) -> Self {
        Self::new(NoiseKind::MultiplicativeGaussian { std })
    }

    pub fn with_noise_free(mut self, dims: Vec<usize>) -> Self {
        self.noise_free = dims;
        self
    }

    pub fn with_convention(mut self, convention: ScaleConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn is_multiplicative(&self) -> bool {
        matches!(self.kind, NoiseKind::MultiplicativeGaussian { .. })
    }

    fn neutral(&self) -> f64 {
        if self.is_multiplicative() {
            1.0
        } else {
            0.0
        }
    }

    fn to_std(&self, s: f64) -> f64 {
        match self.convention {
            ScaleConvention::Std => s,
            ScaleConvention::Variance => s.max(0.0).sqrt(),
        }
    }

    /// Per-dimension scales (broadcasting a single entry) after the convention.
    fn scales(&self, v: &[f64], d: usize) -> Result<Vec<f64>> {
        let out: Vec<f64> = match v.len() {
            1 => vec![v[0]; d],
            n if n == d => v.to_vec(),
            n => return Err(Error::DimensionMismatch { expected: d, got: n }),
        };
        if out.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::InvalidParameter(format!("noise scales must be >= 0, got {v:?}")));
        }
        Ok(out.into_iter().map(|s| self.to_std(s)).collect())
    }

    /// Symmetric square root of the covariance.
    fn covariance_root(cov: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
        check_len(d, cov.len())?;
        for row in cov {
            check_len(d, row.len())?;
        }
        let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        if (0..d).any(|i| (0..d).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * (1.0 + m[(i, j)].abs()))) {
            return Err(Error::NotPositiveSemidefinite);
        }
        let eig = SymmetricEigen::new(m);
        let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * max.max(1e-300)) {
            return Err(Error::NotPositiveSemidefinite);
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt) * eig.eigenvectors.transpose())
    }

    /// Validate parameters against the design dimension.
    pub fn validate(&self, d: usize) -> Result<()> {
        match &self.kind {
            NoiseKind::AdditiveGaussian { std } | NoiseKind::MultiplicativeGaussian { std } => {
                self.scales(std, d).map(|_| ())
            }
            NoiseKind::AdditiveUniform { half_width } => self.scales(half_width, d).map(|_| ()),
            NoiseKind::CorrelatedGaussian { covariance } => Self::covariance_root(covariance, d).map(|_| ()),
            NoiseKind::HeteroskedasticGaussian { .. } => Ok(()),
        }?;
        if let Some(&bad) = self.noise_free.iter().find(|&&j| j >= d) {
            return Err(Error::InvalidParameter(format!(
                "noise-free dimension {bad} out of range"
            )));
        }
        Ok(())
    }

    /// Realized noise `xi` for every base row at design `x`.
    pub fn draw_perturbations(&self, base: &PerturbationSet, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = x.len();
        check_len(d, base.dim())?;
        let mut out: Vec<Vec<f64>> = match &self.kind {
            NoiseKind::AdditiveGaussian { std } => {
                let s = self.scales(std, d)?;
                map_rows(base, |j, u| s[j] * inverse_normal(u))
            }
            NoiseKind::MultiplicativeGaussian { std } => {
                let s = self.scales(std, d)?;
                map_rows(base, |j, u| 1.0 + s[j] * inverse_normal(u))
            }
            NoiseKind::AdditiveUniform { half_width } => {
                let h = self.scales(half_width, d)?;
                map_rows(base, |j, u| h[j] * (2.0 * u - 1.0))
            }
            NoiseKind::CorrelatedGaussian { covariance } => {
                let root = Self::covariance_root(covariance, d)?;
                base.rows()
                    .iter()
                    .map(|row| {
                        let z: Vec<f64> = row.iter().map(|&u| inverse_normal(u)).collect();
                        (0..d).map(|i| (0..d).map(|k| root[(i, k)] * z[k]).sum()).collect()
                    })
                    .collect()
            }
            NoiseKind::HeteroskedasticGaussian { scale } => {
                let s: Vec<f64> = (0..d).map(|j| self.to_std(scale.value(x, j))).collect();
                map_rows(base, |j, u| s[j] * inverse_normal(u))
            }
        };
        if !self.noise_free.is_empty() {
            let neutral = self.neutral();
            for row in &mut out {
                for &j in &self.noise_free {
                    if j < d {
                        row[j] = neutral;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `x ⋄ xi` for every realized perturbation.
    pub fn perturbed_designs(&self, base: &PerturbationSet, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let xis = self.draw_perturbations(base, x)?;
        let mult = self.is_multiplicative();
        Ok(xis.iter().map(|xi| apply_perturbation(x, xi, mult)).collect())
    }

    /// Vector-Jacobian product `(d (x ⋄ xi(x)) / dx)^T g` for one base row.
    pub fn pullback(&self, x: &[f64], base_row: &[f64], g: &[f64]) -> Vec<f64> {
        let d = x.len();
        let free = |j: usize| self.noise_free.contains(&j);
        match &self.kind {
            NoiseKind::MultiplicativeGaussian { std } => {
                let s = self.scales(std, d).unwrap_or_else(|_| vec![0.0; d]);
                (0..d)
                    .map(|j| {
                        let xi = if free(j) {
                            1.0
                        } else {
                            1.0 + s[j] * inverse_normal(base_row[j])
                        };
                        g[j] * xi
                    })
                    .collect()
            }
            NoiseKind::HeteroskedasticGaussian { scale } => {
                let mut out = g.to_vec();
                for j in (0..d).filter(|&j| !free(j)) {
                    let z = inverse_normal(base_row[j]);
                    let sj = scale.value(x, j);
                    // d std / d scale under the variance convention.
                    let conv = match self.convention {
                        ScaleConvention::Std => 1.0,
                        ScaleConvention::Variance if sj > 0.0 => 0.5 / sj.sqrt(),
                        ScaleConvention::Variance => 0.0,
                    };
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += g[j] * z * conv * scale.derivative(x, j, k);
                    }
                }
                out
            }
            _ => g.to_vec(),
        }
    }
}

fn map_rows(base: &PerturbationSet, f: impl Fn(usize, f64) -> f64) -> Vec<Vec<f64>> {
    base.rows()
        .iter()
        .map(|row| row.iter().enumerate().map(|(j, &u)| f(j, u)).collect())
        .collect()
}

/// `x + xi` (additive) or `x ∘ xi` (multiplicative); never clamped to the box.
pub fn apply_perturbation(x: &[f64], xi: &[f64], multiplicative: bool) -> Vec<f64> {
    if multiplicative {
        x.iter().zip(xi).map(|(a, b)| a * b).collect()
    } else {
        x.iter().zip(xi).map(|(a, b)| a + b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n: usize, d: usize) -> PerturbationSet {
        PerturbationSet::sobol(n, d, 3).unwrap()
    }

    #[test]
    fn zero_scale_gives_neutral_noise() {
        let b = base(16, 2);
        let add = NoiseProcess::additive_gaussian(vec![0.0]);
        assert!(add
            .draw_perturbations(&b, &[0.3, 0.4])
            .unwrap()
            .iter()
            .flatten()
            .all(|v| *v == 0.0));
        let mult = NoiseProcess::multiplicative_gaussian(vec![0.0, 0.0]);
        assert!(mult
            .draw_perturbations(&b, &[0.3, 0.4])
            .unwrap()
            .iter()
            .flatten()
            .all(|v| *v == 1.0));
    }

    #[test]
    fn median_uniform_maps_to_zero() {
        let b = PerturbationSet::new(vec![vec![0.5, 0.5]]).unwrap();
        let p = NoiseProcess::additive_gaussian(vec![0.05]);
        assert_eq!(p.draw_perturbations(&b, &[0.1, 0.1]).unwrap(), vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn apply_examples() {
        assert_eq!(apply_perturbation(&[0.2, 0.7], &[0.0, 0.0], false), vec![0.2, 0.7]);
        assert_eq!(apply_perturbation(&[0.2, 0.7], &[1.0, 1.0], true), vec![0.2, 0.7]);
        let p = apply_perturbation(&[0.2, 0.2], &[0.05, -0.05], false);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.15).abs() < 1e-15);
    }

    #[test]
    fn noise_free_dimensions_are_neutral() {
        let b = base(8, 2);
        let p = NoiseProcess::multiplicative_gaussian(vec![0.1]).with_noise_free(vec![1]);
        for row in p.draw_perturbations(&b, &[0.5, 0.5]).unwrap() {
            assert_eq!(row[1], 1.0);
        }
    }

    #[test]
    fn rejects_bad_covariance_and_shapes() {
        let b = base(4, 2);
        let p = NoiseProcess::new(NoiseKind::CorrelatedGaussian {
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        });
        assert_eq!(
            p.draw_perturbations(&b, &[0.0, 0.0]),
            Err(Error::NotPositiveSemidefinite)
        );
        let q = NoiseProcess::additive_gaussian(vec![0.1, 0.1, 0.1]);
        assert!(matches!(
            q.draw_perturbations(&b, &[0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(q.draw_perturbations(&b, &[0.0]).is_err());
    }

    #[test]
    fn variance_convention_takes_square_root() {
        let b = PerturbationSet::new(vec![vec![0.8]]).unwrap();
        let std = NoiseProcess::additive_gaussian(vec![0.2]);
        let var = NoiseProcess::additive_gaussian(vec![0.04]).with_convention(ScaleConvention::Variance);
        let a = std.draw_perturbations(&b, &[0.0]).unwrap()[0][0];
        let c = var.draw_perturbations(&b, &[0.0]).unwrap()[0][0];
        assert!((a - c).abs() < 1e-15);
    }

    #[test]
    fn heteroskedastic_pullback_matches_finite_difference() {
        let b = base(4, 2);
        let p = NoiseProcess::new(NoiseKind::HeteroskedasticGaussian {
            scale: ScaleFunction::Sigmoid { base: 0.05 },
        });
        let x = [0.3, 0.6];
        let g = [0.7, -1.3];
        let h = 1e-6;
        for (r, row) in b.rows().iter().enumerate() {
            let analytic = p.pullback(&x, row, &g);
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fp = &p.perturbed_designs(&b, &xp).unwrap()[r];
                let fm = &p.perturbed_designs(&b, &xm).unwrap()[r];
                let fd: f64 = (0..2).map(|j| g[j] * (fp[j] - fm[j]) / (2.0 * h)).sum();
                assert!((fd - analytic[k]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let p = NoiseProcess::new(NoiseKind::HeteroskedasticGaussian {
            scale: ScaleFunction::Proportional { factor: 0.2 },
        });
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<NoiseProcess>(&s).unwrap(), p);
    }
}
