//! Box-constrained local minimization and multi-start acquisition maximization.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::noise::NoiseProcess;
use crate::noise::PerturbationSet;
use crate::qmc::sobol;
use crate::risk::{var_index, RiskLevel};

/// Stopping rules for [`minimize_box`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    /// Stop once a step moves every coordinate by less than this.
    pub x_tol: f64,
    pub max_iter: usize,
    /// Stop once the projected gradient's sup-norm falls below this.
    pub g_tol: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            x_tol: 1e-6,
            max_iter: 200,
            g_tol: 1e-12,
        }
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Coordinates pinned at a bound with the gradient pushing outward.
fn active_set(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0) || lo == hi)
        .collect()
}

/// Projected BFGS with Armijo backtracking. `f` returns the value and the
/// gradient; non-finite values are treated as `+inf`. Returns the best point
/// visited and its value.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], cfg: &LocalConfig) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let d = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let eval = |f: &mut F, x: &[f64]| {
        let (v, g) = f(x);
        if v.is_finite() && g.iter().all(|gi| gi.is_finite()) {
            (v, g)
        } else {
            (f64::INFINITY, vec![0.0; d])
        }
    };
    let (mut fx, mut g) = eval(&mut f, &x);
    if !fx.is_finite() {
        return (x, fx);
    }
    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            h[i * d + i] = 1.0;
        }
    };
    let mut h = vec![0.0; d * d];
    identity(&mut h);
    let mut fresh = true;

    for _ in 0..cfg.max_iter {
        let active = active_set(&x, &g, lower, upper);
        let pg = g
            .iter()
            .zip(&active)
            .map(|(gi, a)| if *a { 0.0 } else { gi.abs() })
            .fold(0.0, f64::max);
        if pg <= cfg.g_tol {
            break;
        }
        let mut dir: Vec<f64> = (0..d)
            .map(|i| {
                if active[i] {
                    0.0
                } else {
                    -(0..d).filter(|&j| !active[j]).map(|j| h[i * d + j] * g[j]).sum::<f64>()
                }
            })
            .collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            identity(&mut h);
            fresh = true;
            dir = (0..d).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
            slope = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        // Scale the first steepest-descent step to the box size.
        let mut t = 1.0;
        if fresh {
            let span = lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| hi - lo)
                .fold(0.0, f64::max)
                .max(1e-12);
            let dn = dir.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if dn > 0.0 {
                t = (0.25 * span / dn).min(1.0).max(1e-3 / dn.max(1.0));
            }
        }
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            project(&mut xn, lower, upper);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let step = xn.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if step == 0.0 {
                break;
            }
            let (fn_, gn) = eval(&mut f, &xn);
            if fn_ <= fx + 1e-4 * decrease {
                accepted = Some((xn, fn_, gn, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, step)) = accepted else {
            if fresh {
                break;
            }
            identity(&mut h);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let small_change = (fx - fn_).abs() <= 1e-15 * fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if step < cfg.x_tol || small_change {
            break;
        }
        let ss: f64 = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let yy: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if sy > 1e-10 * ss * yy {
            bfgs_update(&mut h, &s, &y, sy, fresh);
            fresh = false;
        }
    }
    (x, fx)
}

/// Inverse-Hessian BFGS update; the first update rescales the identity.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, rescale: bool) {
    let d = s.len();
    if rescale {
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let gamma = sy / yy;
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = if i == j { gamma } else { 0.0 };
            }
        }
    }
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..d).map(|i| (0..d).map(|j| h[i * d + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..d {
        for j in 0..d {
            h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// How local ascent obtains search directions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Central differences on the unit cube.
    #[default]
    FiniteDifference,
    /// Gradients supplied by the acquisition itself.
    SamplePath,
    /// Compass pattern search.
    DerivativeFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub raw_candidates: usize,
    pub n_restarts: usize,
    pub x_tol: f64,
    pub max_iter: usize,
    pub gradient_mode: GradientMode,
    /// Central-difference step on the unit cube.
    pub fd_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            raw_candidates: 512,
            n_restarts: 10,
            x_tol: 1e-6,
            max_iter: 200,
            gradient_mode: GradientMode::FiniteDifference,
            fd_step: 1e-5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.raw_candidates == 0 || self.n_restarts == 0 || self.max_iter == 0 {
            return Err(Error::InvalidParameter("optimizer counts must be >= 1".into()));
        }
        if !(self.x_tol > 0.0) || !(self.fd_step > 0.0) {
            return Err(Error::InvalidParameter("optimizer tolerances must be > 0".into()));
        }
        Ok(())
    }
}

/// Scalar field to maximize. `gradient` is consulted only in sample-path mode.
pub trait Acquisition {
    fn value(&mut self, x: &[f64]) -> f64;

    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let _ = x;
        None
    }

    /// Values for a batch of points; override to share work across the batch.
    fn values(&mut self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.value(x)).collect()
    }
}

impl<F: FnMut(&[f64]) -> f64> Acquisition for F {
    fn value(&mut self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Domain box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::Empty("bounds"));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(Error::InvalidParameter(format!("invalid box {lower:?} .. {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (lo + v * (hi - lo)).clamp(*lo, *hi))
            .collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        project(x, &self.lower, &self.upper);
    }
}

/// Multi-start maximization over the box: score Sobol raw candidates, ascend
/// locally from the best `n_restarts`, return the best point found. Ties keep
/// the earliest raw candidate / restart.
pub fn optimize_acquisition<A: Acquisition + ?Sized>(
    acq: &mut A,
    bounds: &Bounds,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    config.validate()?;
    let d = bounds.dim();
    let raw_unit = sobol(d, config.raw_candidates, Some(seed))?;
    let raw: Vec<Vec<f64>> = raw_unit.iter().map(|u| bounds.from_unit(u)).collect();
    let values = acq.values(&raw);
    let mut order: Vec<usize> = (0..raw.len()).filter(|&i| values[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::NonFiniteAcquisition);
    }
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut best_x = raw[order[0]].clone();
    let mut best_v = values[order[0]];

    let lower = vec![0.0; d];
    let upper: Vec<f64> = (0..d)
        .map(|j| if bounds.upper[j] > bounds.lower[j] { 1.0 } else { 0.0 })
        .collect();
    for &start in order.iter().take(config.n_restarts) {
        let u0 = bounds.to_unit(&raw[start]);
        let (u, v) = local_ascent(acq, bounds, &u0, &lower, &upper, config);
        if v > best_v {
            best_v = v;
            best_x = bounds.from_unit(&u);
        }
    }
    bounds.clamp(&mut best_x);
    Ok((best_x, best_v))
}

fn local_ascent<A: Acquisition + ?Sized>(
    acq: &mut A,
    bounds: &Bounds,
    u0: &[f64],
    lower: &[f64],
    upper: &[f64],
    config: &OptimizerConfig,
) -> (Vec<f64>, f64) {
    let local = LocalConfig {
        x_tol: config.x_tol,
        max_iter: config.max_iter,
        ..LocalConfig::default()
    };
    let d = u0.len();
    let span: Vec<f64> = bounds.upper.iter().zip(&bounds.lower).map(|(h, l)| h - l).collect();
    match config.gradient_mode {
        GradientMode::DerivativeFree => compass_search(|u| acq.value(&bounds.from_unit(u)), u0, upper, config),
        GradientMode::SamplePath => {
            let (u, v) = minimize_box(
                |u| {
                    let x = bounds.from_unit(u);
                    match acq.value_and_gradient(&x) {
                        Some((v, g)) => (-v, g.iter().zip(&span).map(|(gi, s)| -gi * s).collect()),
                        None => (f64::INFINITY, vec![0.0; d]),
                    }
                },
                u0,
                lower,
                upper,
                &local,
            );
            (u, -v)
        }
        GradientMode::FiniteDifference => {
            let h = config.fd_step;
            let (u, v) = minimize_box(
                |u| {
                    let f0 = acq.value(&bounds.from_unit(u));
                    let mut g = vec![0.0; d];
                    for j in 0..d {
                        if upper[j] == 0.0 {
                            continue;
                        }
                        let mut up = u.to_vec();
                        let mut dn = u.to_vec();
                        up[j] = (u[j] + h).min(1.0);
                        dn[j] = (u[j] - h).max(0.0);
                        let fp = acq.value(&bounds.from_unit(&up));
                        let fm = acq.value(&bounds.from_unit(&dn));
                        g[j] = -(fp - fm) / (up[j] - dn[j]);
                    }
                    (-f0, g)
                },
                u0,
                lower,
                upper,
                &local,
            );
            (u, -v)
        }
    }
}

/// Compass search on the unit cube, halving the step on failure.
fn compass_search<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    u0: &[f64],
    upper: &[f64],
    config: &OptimizerConfig,
) -> (Vec<f64>, f64) {
    let mut u = u0.to_vec();
    let mut fu = f(&u);
    let mut step = 0.1;
    let mut iters = 0;
    while step >= config.x_tol && iters < config.max_iter * u.len().max(1) * 2 {
        let mut improved = false;
        'dirs: for j in 0..u.len() {
            if upper[j] == 0.0 {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut c = u.clone();
                c[j] = (c[j] + sign * step).clamp(0.0, 1.0);
                if c[j] == u[j] {
                    continue;
                }
                iters += 1;
                let fc = f(&c);
                if fc > fu {
                    u = c;
                    fu = fc;
                    improved = true;
                    break 'dirs;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (u, fu)
}

/// Gradient of the empirical VaR of `path(x ⋄ xi)` over fixed perturbations:
/// the path gradient at the sample realizing the VaR (lowest index on ties),
/// pulled back through the perturbation map.
pub fn var_path_gradient<P>(
    path: P,
    x: &[f64],
    noise: &NoiseProcess,
    base: &PerturbationSet,
    alpha: RiskLevel,
) -> Result<Vec<f64>>
where
    P: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let pts = noise.perturbed_designs(base, x)?;
    let evals: Vec<(f64, Vec<f64>)> = pts.iter().map(|p| path(p)).collect();
    let values: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let i = var_index(&values, alpha)?;
    Ok(noise.pullback(x, &base.rows()[i], &evals[i].1))
}
