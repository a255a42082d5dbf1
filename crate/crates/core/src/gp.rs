//! Independent per-output Gaussian-process surrogates.
//!
//! Matérn-5/2 ARD kernels on inputs normalized to the unit cube, targets
//! standardized per output, hyperparameters by bounded maximum likelihood.
//! Provides exact posteriors, joint sampling (plain and baseline-cached),
//! random-Fourier-feature sample paths and UCB bounds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::optim::{minimize_box, Bounds, LocalConfig};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Diagonal jitter levels tried in order when a factorization fails.
pub const JITTER_LEVELS: [f64; 3] = [1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Per-dimension lengthscales on the unit cube.
    pub lengthscales: Vec<f64>,
    /// Signal variance on the standardized target scale.
    pub signal_variance: f64,
    /// Observation-noise variance on the standardized target scale.
    pub noise_variance: f64,
}

impl Hyperparameters {
    /// Matérn-5/2 covariance between two normalized inputs.
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        matern52(a, b, &self.lengthscales, self.signal_variance)
    }
}

/// `s2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)` with `r` the ARD-scaled distance.
#[inline]
pub fn matern52(a: &[f64], b: &[f64], ls: &[f64], s2: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum();
    let r = r2.sqrt();
    s2 * (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

/// Bounded maximum-likelihood settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub restarts: usize,
    pub lengthscale_bounds: (f64, f64),
    pub signal_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
    /// Fix the noise variance instead of fitting it.
    pub fixed_noise: Option<f64>,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            lengthscale_bounds: (1e-3, 10.0),
            signal_bounds: (1e-2, 1e2),
            noise_bounds: (1e-6, 1.0),
            fixed_noise: None,
            seed: 0,
            max_iter: 200,
        }
    }
}

impl FitConfig {
    /// Interpolating fit: the noise variance pinned at a negligible level.
    pub fn noiseless() -> Self {
        Self {
            fixed_noise: Some(1e-10),
            ..Self::default()
        }
    }
}

/// Lower Cholesky factor with the jitter that made it succeed.
fn cholesky_jittered(mut m: DMatrix<f64>, base_jitter: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    let mut added = 0.0;
    for level in std::iter::once(base_jitter).chain(JITTER_LEVELS) {
        if level < added {
            continue;
        }
        for i in 0..n {
            m[(i, i)] += level - added;
        }
        added = level;
        if let Some(l) = cholesky_lower(&m) {
            return Ok((l, added));
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Blocked right-looking Cholesky; `None` if a pivot is not positive.
pub(crate) fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    const NB: usize = 64;
    if n <= NB {
        return nalgebra::Cholesky::new(a.clone()).map(|c| c.unpack());
    }
    let mut m = a.clone();
    let mut k = 0;
    while k < n {
        let b = NB.min(n - k);
        let diag = m.view((k, k), (b, b)).clone_owned();
        let l11 = nalgebra::Cholesky::new(diag)?.unpack();
        m.view_mut((k, k), (b, b)).copy_from(&l11);
        if k + b < n {
            let rest = n - k - b;
            // L21 = A21 L11^{-T}
            let a21 = m.view((k + b, k), (rest, b)).clone_owned();
            let mut l21t = a21.transpose();
            if !l11.solve_lower_triangular_mut(&mut l21t) {
                return None;
            }
            let l21 = l21t.transpose();
            m.view_mut((k + b, k), (rest, b)).copy_from(&l21);
            // A22 -= L21 L21^T (lower triangle suffices, but a full gemm is faster here).
            let mut a22 = m.view_mut((k + b, k + b), (rest, rest));
            a22.gemm(-1.0, &l21, &l21t, 1.0);
        }
        k += b;
    }
    m.fill_upper_triangle(0.0, 1);
    if m.diagonal().iter().all(|v| *v > 0.0 && v.is_finite()) {
        Some(m)
    } else {
        None
    }
}

/// `L^{-1} B` for lower-triangular `L`.
fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = b.clone();
    l.solve_lower_triangular_mut(&mut out);
    out
}

/// Inverse of a lower-triangular matrix.
pub(crate) fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    solve_lower(l, &DMatrix::identity(l.nrows(), l.nrows()))
}

/// Fitted state of one output.
#[derive(Debug, Clone)]
pub struct OutputGp {
    hyp: Hyperparameters,
    y_mean: f64,
    y_std: f64,
    /// Cholesky factor of `K + noise I` on the normalized training inputs.
    chol: DMatrix<f64>,
    /// `(K + noise I)^{-1} y_standardized`.
    alpha: DVector<f64>,
}

impl OutputGp {
    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hyp
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_std(&self) -> f64 {
        self.y_std
    }
}

/// Multi-output surrogate: one independent GP per output column.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    bounds: Bounds,
    x_unit: Vec<Vec<f64>>,
    outputs: Vec<OutputGp>,
}

/// Negative log marginal likelihood and its gradient in
/// `(log lengthscales, log signal variance, log noise variance)`.
pub fn neg_log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], hyp: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
    let n = x.len();
    let d = hyp.lengthscales.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = hyp.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let mut kn = k.clone();
    for i in 0..n {
        kn[(i, i)] += hyp.noise_variance;
    }
    let l = cholesky_lower(&kn).ok_or(Error::NotPositiveDefinite)?;
    let yv = DVector::from_column_slice(y);
    let mut alpha = yv.clone();
    l.solve_lower_triangular_mut(&mut alpha);
    let quad = alpha.norm_squared();
    l.tr_solve_lower_triangular_mut(&mut alpha);
    let logdet: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
    let nll = 0.5 * quad + logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    let linv = invert_lower(&l);
    let kinv = linv.transpose() * &linv;
    // W = alpha alpha^T - K^{-1}; d(-LML)/dθ = -0.5 tr(W dK/dθ).
    let w = &alpha * alpha.transpose() - kinv;
    let mut grad = vec![0.0; d + 2];
    let mut sq = vec![0.0; d];
    for i in 0..n {
        grad[d] += w[(i, i)] * k[(i, i)];
        grad[d + 1] += w[(i, i)] * hyp.noise_variance;
        for j in 0..i {
            // Symmetric pair counted twice.
            let wij = 2.0 * w[(i, j)];
            grad[d] += wij * k[(i, j)];
            let mut r2 = 0.0;
            for t in 0..d {
                let q = (x[i][t] - x[j][t]) / hyp.lengthscales[t];
                sq[t] = q * q;
                r2 += sq[t];
            }
            let r = r2.sqrt();
            let common = hyp.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp();
            for t in 0..d {
                grad[t] += wij * common * sq[t];
            }
        }
    }
    for g in &mut grad {
        *g *= -0.5;
    }
    Ok((nll, grad))
}

impl SurrogateModel {
    /// Fit one GP per column of `y` on designs `x` inside `bounds`.
    pub fn fit(x: &[Vec<f64>], y: &[Vec<f64>], bounds: &Bounds, config: &FitConfig) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 observations, got {}",
                x.len()
            )));
        }
        check_len(x.len(), y.len())?;
        let d = bounds.dim();
        for xi in x {
            check_len(d, xi.len())?;
        }
        let m = y[0].len();
        for yi in y {
            check_len(m, yi.len())?;
            if yi.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite observation".into()));
            }
        }
        let x_unit: Vec<Vec<f64>> = x.iter().map(|xi| bounds.to_unit(xi)).collect();
        let outputs = (0..m)
            .map(|j| {
                let col: Vec<f64> = y.iter().map(|r| r[j]).collect();
                let mut cfg = config.clone();
                cfg.seed = config.seed.wrapping_add(j as u64);
                fit_output(&x_unit, &col, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bounds: bounds.clone(),
            x_unit,
            outputs,
        })
    }

    /// Condition on data with given hyperparameters (no likelihood search).
    pub fn with_hyperparameters(
        x: &[Vec<f64>],
        y: &[Vec<f64>],
        bounds: &Bounds,
        hyps: &[Hyperparameters],
    ) -> Result<Self> {
        check_len(x.len(), y.len())?;
        let x_unit: Vec<Vec<f64>> = x.iter().map(|xi| bounds.to_unit(xi)).collect();
        let outputs = hyps
            .iter()
            .enumerate()
            .map(|(j, h)| {
                let col: Vec<f64> = y.iter().map(|r| r[j]).collect();
                let (mean, std) = standardize(&col);
                let ys: Vec<f64> = col.iter().map(|v| (v - mean) / std).collect();
                condition(&x_unit, &ys, h.clone(), mean, std)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bounds: bounds.clone(),
            x_unit,
            outputs,
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_train(&self) -> usize {
        self.x_unit.len()
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn outputs(&self) -> &[OutputGp] {
        &self.outputs
    }

    pub fn hyperparameters(&self) -> Vec<Hyperparameters> {
        self.outputs.iter().map(|o| o.hyp.clone()).collect()
    }

    fn normalize(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let span: Vec<f64> = self
            .bounds
            .lower
            .iter()
            .zip(&self.bounds.upper)
            .map(|(l, u)| if u > l { u - l } else { 1.0 })
            .collect();
        xs.iter()
            .map(|x| {
                x.iter()
                    .zip(&self.bounds.lower)
                    .zip(&span)
                    .map(|((v, l), s)| (v - l) / s)
                    .collect()
            })
            .collect()
    }

    fn cross(&self, o: &OutputGp, a: &[Vec<f64>], b: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| o.hyp.kernel(&a[i], &b[j]))
    }

    fn self_cov(&self, o: &OutputGp, a: &[Vec<f64>]) -> DMatrix<f64> {
        let n = a.len();
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = o.hyp.kernel(&a[i], &a[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Standardized posterior mean vector and `V = L^{-1} K_{X,*}` for one output.
    fn mean_and_v(&self, o: &OutputGp, xu: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let kx = self.cross(o, &self.x_unit, xu);
        let mean = kx.transpose() * &o.alpha;
        (mean, solve_lower(&o.chol, &kx))
    }

    /// Standardized posterior covariance for one output.
    fn std_cov(&self, o: &OutputGp, xu: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let (mean, v) = self.mean_and_v(o, xu);
        let mut cov = self.self_cov(o, xu);
        cov.gemm_tr(-1.0, &v, &v, 1.0);
        symmetrize(&mut cov);
        (mean, cov)
    }

    /// Posterior means (`q x M`) and per-output covariances (`q x q`), original units.
    pub fn posterior(&self, xs: &[Vec<f64>]) -> Posterior {
        let xu = self.normalize(xs);
        let mut means = vec![vec![0.0; self.outputs.len()]; xs.len()];
        let mut covs = Vec::with_capacity(self.outputs.len());
        for (j, o) in self.outputs.iter().enumerate() {
            let (mean, cov) = self.std_cov(o, &xu);
            for (i, m) in mean.iter().enumerate() {
                means[i][j] = o.y_mean + o.y_std * m;
            }
            covs.push(cov * (o.y_std * o.y_std));
        }
        Posterior { mean: means, cov: covs }
    }

    /// Posterior means and marginal variances (`q x M` each), original units.
    pub fn marginals(&self, xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xu = self.normalize(xs);
        let q = xs.len();
        let m = self.outputs.len();
        let mut means = vec![vec![0.0; m]; q];
        let mut vars = vec![vec![0.0; m]; q];
        for (j, o) in self.outputs.iter().enumerate() {
            let (mean, v) = self.mean_and_v(o, &xu);
            for i in 0..q {
                means[i][j] = o.y_mean + o.y_std * mean[i];
                let prior = o.hyp.signal_variance;
                let var = (prior - v.column(i).norm_squared()).max(0.0);
                vars[i][j] = var * o.y_std * o.y_std;
            }
        }
        (means, vars)
    }

    /// Posterior means only (`q x M`), original units.
    pub fn mean(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let xu = self.normalize(xs);
        let m = self.outputs.len();
        let mut means = vec![vec![0.0; m]; xs.len()];
        for (j, o) in self.outputs.iter().enumerate() {
            let kx = self.cross(o, &self.x_unit, &xu);
            let mu = kx.transpose() * &o.alpha;
            for (i, v) in mu.iter().enumerate() {
                means[i][j] = o.y_mean + o.y_std * v;
            }
        }
        means
    }

    /// Joint posterior samples at `xs`: `mean + chol(cov) z` per output.
    /// `normals[j]` is `p x n_samples`; returns `p x n_samples` per output.
    pub fn sample_joint(&self, xs: &[Vec<f64>], normals: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        check_len(self.outputs.len(), normals.len())?;
        let xu = self.normalize(xs);
        self.outputs
            .iter()
            .zip(normals)
            .map(|(o, z)| {
                check_len(xs.len(), z.nrows())?;
                let (mean, cov) = self.std_cov(o, &xu);
                let (l, _) = cholesky_jittered(cov, 0.0)?;
                Ok(to_original(o, &mean, l * z))
            })
            .collect()
    }

    /// Cached sampler conditioning candidate samples on fixed baseline samples.
    pub fn joint_sampler(&self, baseline: &[Vec<f64>], normals: &[DMatrix<f64>]) -> Result<JointSampler<'_>> {
        JointSampler::new(self, baseline, normals)
    }

    /// Upper and lower confidence bounds `mean ± zeta * std` (`q x M` each).
    pub fn ucb_bounds(&self, xs: &[Vec<f64>], zeta: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let m = self.outputs.len();
        if zeta.len() != 1 {
            check_len(m, zeta.len())?;
        }
        if zeta.iter().any(|z| !(*z >= 0.0)) {
            return Err(Error::InvalidParameter("zeta must be >= 0".into()));
        }
        let z = |j: usize| if zeta.len() == 1 { zeta[0] } else { zeta[j] };
        let (means, vars) = self.marginals(xs);
        let mut lower = means.clone();
        let mut upper = means;
        for (i, (lo, up)) in lower.iter_mut().zip(upper.iter_mut()).enumerate() {
            for j in 0..m {
                let w = z(j) * vars[i][j].sqrt();
                lo[j] -= w;
                up[j] += w;
            }
        }
        Ok((lower, upper))
    }

    /// Approximate posterior sample path from `n_features` random Fourier features.
    pub fn draw_rff_path(&self, n_features: usize, seed: u64) -> Result<RffPath> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outputs = self
            .outputs
            .iter()
            .map(|o| {
                let mut f = RffOutput::draw(&o.hyp, self.bounds.dim(), n_features, &mut rng)?;
                // Standardized targets recovered from alpha: y = (K + noise I) alpha.
                let ll = &o.chol * o.chol.transpose();
                let ys = ll * &o.alpha;
                f.condition(&self.x_unit, ys.as_slice(), o.hyp.noise_variance, &mut rng)?;
                f.y_mean = o.y_mean;
                f.y_std = o.y_std;
                Ok(f)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RffPath {
            bounds: self.bounds.clone(),
            outputs,
        })
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn to_original(o: &OutputGp, mean: &DVector<f64>, mut s: DMatrix<f64>) -> DMatrix<f64> {
    for c in 0..s.ncols() {
        for r in 0..s.nrows() {
            s[(r, c)] = o.y_mean + o.y_std * (mean[r] + s[(r, c)]);
        }
    }
    s
}

fn standardize(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // Constant targets keep unit scale so the fit stays well posed.
    let std = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
    (mean, std)
}

fn condition(x: &[Vec<f64>], ys: &[f64], hyp: Hyperparameters, y_mean: f64, y_std: f64) -> Result<OutputGp> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = hyp.kernel(&x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += hyp.noise_variance;
    }
    let (chol, _) = cholesky_jittered(k, 0.0)?;
    let mut alpha = DVector::from_column_slice(ys);
    chol.solve_lower_triangular_mut(&mut alpha);
    chol.tr_solve_lower_triangular_mut(&mut alpha);
    Ok(OutputGp {
        hyp,
        y_mean,
        y_std,
        chol,
        alpha,
    })
}

fn fit_output(x: &[Vec<f64>], y: &[f64], cfg: &FitConfig) -> Result<OutputGp> {
    let d = x[0].len();
    let (mean, std) = standardize(y);
    let ys: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();

    let fit_noise = cfg.fixed_noise.is_none();
    let np = d + 1 + usize::from(fit_noise);
    let mut lo = vec![cfg.lengthscale_bounds.0.ln(); d];
    let mut hi = vec![cfg.lengthscale_bounds.1.ln(); d];
    lo.push(cfg.signal_bounds.0.ln());
    hi.push(cfg.signal_bounds.1.ln());
    if fit_noise {
        lo.push(cfg.noise_bounds.0.ln());
        hi.push(cfg.noise_bounds.1.ln());
    }
    let unpack = |t: &[f64]| Hyperparameters {
        lengthscales: t[..d].iter().map(|v| v.exp()).collect(),
        signal_variance: t[d].exp(),
        noise_variance: if fit_noise {
            t[d + 1].exp()
        } else {
            cfg.fixed_noise.unwrap_or(0.0)
        },
    };
    let objective = |t: &[f64]| match neg_log_marginal_likelihood(x, &ys, &unpack(t)) {
        Ok((v, g)) => (v, g[..np].to_vec()),
        Err(_) => (f64::INFINITY, vec![0.0; np]),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = Vec::with_capacity(cfg.restarts.max(1));
    let mut first = vec![(0.3f64).ln(); d];
    first.push(0.0);
    if fit_noise {
        first.push((1e-3f64).ln());
    }
    for (v, (l, h)) in first.iter_mut().zip(lo.iter().zip(&hi)) {
        *v = v.clamp(*l, *h);
    }
    starts.push(first);
    while starts.len() < cfg.restarts.max(1) {
        let s: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..=*h)).collect();
        starts.push(s);
    }
    let local = LocalConfig {
        x_tol: 1e-8,
        max_iter: cfg.max_iter,
        g_tol: 1e-8,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let (t, v) = minimize_box(objective, s, &lo, &hi, &local);
        if v.is_finite() && best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((t, v));
        }
    }
    let (t, _) = best.ok_or(Error::NotPositiveDefinite)?;
    condition(x, &ys, unpack(&t), mean, std)
}

/// Exact Gaussian posterior in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    /// `q x M` means.
    pub mean: Vec<Vec<f64>>,
    /// One `q x q` covariance per output.
    pub cov: Vec<DMatrix<f64>>,
}

/// Standard normals in a `rows x cols` matrix from a seeded stream.
pub fn standard_normals(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

struct BaselineBlock {
    /// Inverse of the Cholesky factor of the baseline posterior covariance.
    l_inv: DMatrix<f64>,
    /// Whitened training cross-covariance `L_X^{-1} K_{X,b}`.
    v_b: DMatrix<f64>,
    jitter: f64,
    /// Baseline normals; candidate draws reuse them through the cross-covariance.
    z_b: DMatrix<f64>,
    /// Standardized baseline samples `mu_b + L_b Z_b`.
    samples: DMatrix<f64>,
}

/// Joint sampler that factors the baseline block once and conditions every
/// candidate block on the same baseline draws. Equivalent to one joint
/// Cholesky of `[baseline; candidates]` with the same normals.
pub struct JointSampler<'a> {
    model: &'a SurrogateModel,
    baseline_unit: Vec<Vec<f64>>,
    blocks: Vec<BaselineBlock>,
    n_samples: usize,
}

impl<'a> JointSampler<'a> {
    fn new(model: &'a SurrogateModel, baseline: &[Vec<f64>], normals: &[DMatrix<f64>]) -> Result<Self> {
        check_len(model.outputs.len(), normals.len())?;
        if baseline.is_empty() {
            return Err(Error::Empty("baseline"));
        }
        let n_samples = normals[0].ncols();
        let baseline_unit = model.normalize(baseline);
        let blocks = model
            .outputs
            .iter()
            .zip(normals)
            .map(|(o, z)| {
                check_len(baseline.len(), z.nrows())?;
                check_len(n_samples, z.ncols())?;
                let (mean, v_b) = model.mean_and_v(o, &baseline_unit);
                let mut cov = model.self_cov(o, &baseline_unit);
                cov.gemm_tr(-1.0, &v_b, &v_b, 1.0);
                symmetrize(&mut cov);
                let (l, jitter) = cholesky_jittered(cov, 0.0)?;
                let mut samples = &l * z;
                for c in 0..n_samples {
                    for r in 0..baseline.len() {
                        samples[(r, c)] += mean[r];
                    }
                }
                Ok(BaselineBlock {
                    l_inv: invert_lower(&l),
                    v_b,
                    jitter,
                    z_b: z.clone(),
                    samples,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            baseline_unit,
            blocks,
            n_samples,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_baseline(&self) -> usize {
        self.baseline_unit.len()
    }

    /// Baseline samples (`b x n_samples` per output), original units.
    pub fn baseline_samples(&self) -> Vec<DMatrix<f64>> {
        self.model
            .outputs
            .iter()
            .zip(&self.blocks)
            .map(|(o, b)| b.samples.map(|v| o.y_mean + o.y_std * v))
            .collect()
    }

    /// Candidate samples jointly consistent with the baseline draws
    /// (`c x n_samples` per output), original units.
    pub fn candidate_samples(&self, candidates: &[Vec<f64>], normals: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        check_len(self.blocks.len(), normals.len())?;
        let cu = self.model.normalize(candidates);
        let c = cu.len();
        self.model
            .outputs
            .iter()
            .zip(&self.blocks)
            .zip(normals)
            .map(|((o, blk), z_c)| {
                check_len(c, z_c.nrows())?;
                check_len(self.n_samples, z_c.ncols())?;
                let (mean, v_c) = self.model.mean_and_v(o, &cu);
                // Posterior cross-covariance candidates x baseline.
                let mut s_cb = self.model.cross(o, &cu, &self.baseline_unit);
                s_cb.gemm_tr(-1.0, &v_c, &blk.v_b, 1.0);
                let mut s_cc = self.model.self_cov(o, &cu);
                s_cc.gemm_tr(-1.0, &v_c, &v_c, 1.0);
                // U = S_cb L_b^{-T}
                let u = &s_cb * blk.l_inv.transpose();
                s_cc.gemm(-1.0, &u, &u.transpose(), 1.0);
                symmetrize(&mut s_cc);
                let (l_s, _) = cholesky_jittered(s_cc, blk.jitter)?;
                let mut out = &u * &blk.z_b;
                out.gemm(1.0, &l_s, z_c, 1.0);
                Ok(to_original(o, &mean, out))
            })
            .collect()
    }
}

/// Random-feature approximation of one output's posterior sample path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffOutput {
    /// `F x d` frequencies on the unit cube.
    pub omega: Vec<Vec<f64>>,
    pub phase: Vec<f64>,
    pub weights: Vec<f64>,
    /// `sqrt(2 signal_variance / F)`.
    pub amplitude: f64,
    pub y_mean: f64,
    pub y_std: f64,
}

impl RffOutput {
    /// Prior features with standard-normal weights.
    pub fn draw<R: Rng>(hyp: &Hyperparameters, d: usize, n_features: usize, rng: &mut R) -> Result<Self> {
        check_len(d, hyp.lengthscales.len())?;
        if n_features == 0 {
            return Err(Error::InvalidParameter("need at least one feature".into()));
        }
        // Matérn-5/2 spectral density: multivariate t with 5 degrees of freedom.
        let chi = ChiSquared::new(5.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let omega: Vec<Vec<f64>> = (0..n_features)
            .map(|_| {
                let g: f64 = chi.sample(rng);
                let scale = (5.0 / g).sqrt();
                hyp.lengthscales
                    .iter()
                    .map(|l| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * scale / l
                    })
                    .collect()
            })
            .collect();
        let phase = (0..n_features)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let weights = (0..n_features).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self {
            omega,
            phase,
            weights,
            amplitude: (2.0 * hyp.signal_variance / n_features as f64).sqrt(),
            y_mean: 0.0,
            y_std: 1.0,
        })
    }

    /// Replace the prior weights by a draw from the Bayesian linear-regression
    /// posterior given `(x, y)` (Matheron update of the prior draw).
    fn condition<R: Rng>(&mut self, x: &[Vec<f64>], y: &[f64], noise: f64, rng: &mut R) -> Result<()> {
        let n = x.len();
        let f = self.weights.len();
        let phi = DMatrix::from_fn(n, f, |i, j| {
            let w = &self.omega[j];
            self.amplitude * (w.iter().zip(&x[i]).map(|(a, c)| a * c).sum::<f64>() + self.phase[j]).cos()
        });
        let theta0 = DVector::from_column_slice(&self.weights);
        let eps = DVector::from_fn(n, |_, _| noise.sqrt() * rng.sample::<f64, _>(StandardNormal));
        let resid = DVector::from_column_slice(y) - &phi * &theta0 - eps;
        let mut gram = &phi * phi.transpose();
        for i in 0..n {
            gram[(i, i)] += noise;
        }
        let (l, _) = cholesky_jittered(gram, 0.0)?;
        let mut sol = resid;
        l.solve_lower_triangular_mut(&mut sol);
        l.tr_solve_lower_triangular_mut(&mut sol);
        let theta = theta0 + phi.transpose() * sol;
        self.weights = theta.as_slice().to_vec();
        Ok(())
    }

    /// Value on the standardized scale at a unit-cube point.
    pub fn eval_unit(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for ((w, b), th) in self.omega.iter().zip(&self.phase).zip(&self.weights) {
            let arg = w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
            v += self.amplitude * th * arg.cos();
        }
        v
    }

    /// Value and unit-cube gradient on the standardized scale.
    pub fn eval_grad_unit(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; x.len()];
        for ((w, b), th) in self.omega.iter().zip(&self.phase).zip(&self.weights) {
            let arg = w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
            v += self.amplitude * th * arg.cos();
            let s = -self.amplitude * th * arg.sin();
            for (gj, wj) in g.iter_mut().zip(w) {
                *gj += s * wj;
            }
        }
        (v, g)
    }
}

/// Deterministic approximate posterior sample of every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffPath {
    pub bounds: Bounds,
    pub outputs: Vec<RffOutput>,
}

impl RffPath {
    /// Unconditioned path from the prior.
    pub fn from_prior(hyps: &[Hyperparameters], bounds: &Bounds, n_features: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outputs = hyps
            .iter()
            .map(|h| RffOutput::draw(h, bounds.dim(), n_features, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bounds: bounds.clone(),
            outputs,
        })
    }

    fn unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.bounds.lower.iter().zip(&self.bounds.upper))
            .map(|(v, (l, u))| if u > l { (v - l) / (u - l) } else { v - l })
            .collect()
    }

    /// Path values of every output at `x` (original units).
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let u = self.unit(x);
        self.outputs
            .iter()
            .map(|o| o.y_mean + o.y_std * o.eval_unit(&u))
            .collect()
    }

    /// Values and gradients with respect to `x` (original units); one gradient row per output.
    pub fn eval_grad(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let u = self.unit(x);
        let span: Vec<f64> = self
            .bounds
            .lower
            .iter()
            .zip(&self.bounds.upper)
            .map(|(l, h)| if h > l { h - l } else { 1.0 })
            .collect();
        let mut vals = Vec::with_capacity(self.outputs.len());
        let mut grads = Vec::with_capacity(self.outputs.len());
        for o in &self.outputs {
            let (v, g) = o.eval_grad_unit(&u);
            vals.push(o.y_mean + o.y_std * v);
            grads.push(g.iter().zip(&span).map(|(gj, s)| o.y_std * gj / s).collect());
        }
        (vals, grads)
    }
}

/// Practical UCB multiplier `2 ln(n^2 pi^2 / 0.6)`.
pub fn practical_zeta(n: usize) -> f64 {
    let n = n as f64;
    2.0 * (n * n * std::f64::consts::PI.powi(2) / 0.6).ln()
}
