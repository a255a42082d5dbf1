//! MARS acquisition functions, ParEGO baselines, baseline pruning and
//! sequential-greedy batch generation.
//!
//! Model outputs are ordered objectives first, then constraint slacks
//! (feasible when positive). Every per-design objective `psi` is built as
//! feasibility weighting, normalization to `[lower, upper] -> [0, 1]`,
//! clipping, scalarization and finally a risk functional over the input-noise
//! perturbations (VaR for MARS, the mean for the expectation baseline, the
//! single nominal value for plain ParEGO).

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::gp::{practical_zeta, standard_normals, JointSampler, RffPath, SurrogateModel};
use crate::noise::{NoiseProcess, PerturbationSet};
use crate::optim::{optimize_acquisition, var_path_gradient, Acquisition, Bounds, GradientMode, OptimizerConfig};
use crate::pareto::pareto_front;
use crate::risk::{
    augmented_chebyshev0, global_mvar, var_in_place, FeasibilityConfig, FeasibilityMode, ObjectiveSampleMatrix,
    RiskLevel, WeightVector, DEFAULT_SIGMOID_TEMPERATURE,
};

/// Acquisition strategies exposed to the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MarsNei,
    MarsTs,
    MarsUcb,
    ExpParego,
    Parego,
    Sobol,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::MarsNei,
        Method::MarsTs,
        Method::MarsUcb,
        Method::ExpParego,
        Method::Parego,
        Method::Sobol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MarsNei => "mars-nei",
            Method::MarsTs => "mars-ts",
            Method::MarsUcb => "mars-ucb",
            Method::ExpParego => "exp-parego",
            Method::Parego => "parego",
            Method::Sobol => "sobol",
        }
    }

    /// Whether the method needs a fitted surrogate.
    pub fn is_model_based(self) -> bool {
        self != Method::Sobol
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "method",
                name: s.to_string(),
            })
    }
}

/// Tunables shared by all acquisition functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcqSettings {
    pub n_xi: usize,
    pub n_mc: usize,
    pub n_prune: usize,
    /// Augmented-Chebyshev coefficient of the ParEGO baselines.
    pub beta: f64,
    pub rff_features: usize,
    /// Sigmoid temperature on the standardized constraint scale.
    pub sigmoid_temperature: f64,
    /// Range normalized objectives are clipped to before scalarization.
    pub clip: (f64, f64),
    /// UCB multiplier; `None` uses the practical schedule in the number of evaluations.
    pub zeta: Option<f64>,
    pub optimizer: OptimizerConfig,
}

impl Default for AcqSettings {
    fn default() -> Self {
        Self {
            n_xi: 32,
            n_mc: 256,
            n_prune: 2048,
            beta: 0.05,
            rff_features: 512,
            sigmoid_temperature: DEFAULT_SIGMOID_TEMPERATURE,
            clip: (-1.0, 2.0),
            zeta: None,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl AcqSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_xi == 0 || self.n_mc == 0 || self.n_prune == 0 || self.rff_features == 0 {
            return Err(Error::InvalidParameter("acquisition counts must be >= 1".into()));
        }
        if !(self.sigmoid_temperature > 0.0) || !(self.beta >= 0.0) || !(self.clip.0 < self.clip.1) {
            return Err(Error::InvalidParameter("invalid acquisition settings".into()));
        }
        self.optimizer.validate()
    }
}

/// Feasibility weighting, normalization, clipping and weights of one scalarization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalarization {
    pub weights: WeightVector,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub clip: Option<(f64, f64)>,
    pub feasibility: FeasibilityConfig,
    /// Per-constraint divisor applied before the feasibility indicator.
    pub constraint_scale: Vec<f64>,
}

impl Scalarization {
    /// Plain Chebyshev scalarization with reference 0 on already-normalized values.
    pub fn identity(weights: WeightVector) -> Self {
        let m = weights.len();
        Self {
            weights,
            lower: vec![0.0; m],
            upper: vec![1.0; m],
            clip: None,
            feasibility: FeasibilityConfig::exact(0.0),
            constraint_scale: Vec::new(),
        }
    }

    pub fn n_objectives(&self) -> usize {
        self.weights.len()
    }

    /// Feasibility weight of a raw constraint row.
    fn indicator(&self, c: &[f64]) -> f64 {
        if c.is_empty() {
            return 1.0;
        }
        let scaled: Vec<f64> = c
            .iter()
            .enumerate()
            .map(|(v, x)| x / self.constraint_scale.get(v).copied().unwrap_or(1.0))
            .collect();
        self.feasibility.indicator(&scaled)
    }

    /// Feasibility-weighted objective row (original units).
    pub fn weighted(&self, y: &[f64], c: &[f64], out: &mut [f64]) {
        out.copy_from_slice(y);
        if !c.is_empty() {
            let ind = self.indicator(c);
            for (j, v) in out.iter_mut().enumerate() {
                let lam = self.feasibility.cost(j);
                *v = (*v + lam) * ind - lam;
            }
        }
    }

    /// Normalize and clip a weighted row in place.
    pub fn normalize(&self, row: &mut [f64]) {
        for ((v, l), u) in row.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = (*v - l) / (u - l);
            if let Some((a, b)) = self.clip {
                *v = v.clamp(a, b);
            }
        }
    }

    /// Chebyshev value (reference 0) of one raw row.
    pub fn chebyshev(&self, y: &[f64], c: &[f64]) -> f64 {
        let mut row = vec![0.0; y.len()];
        self.weighted(y, c, &mut row);
        self.normalize(&mut row);
        row.iter()
            .zip(self.weights.as_slice())
            .map(|(v, w)| v * w)
            .fold(f64::INFINITY, f64::min)
    }

    /// Chebyshev value and its gradient given output gradients
    /// (`grads[k]` is the gradient of output `k`: objectives then constraints).
    pub fn chebyshev_grad(&self, vals: &[f64], grads: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let m = self.n_objectives();
        let d = grads.first().map_or(0, Vec::len);
        let (y, c) = vals.split_at(m);
        let (gy, gc) = grads.split_at(m);
        let (ind, dind) = if c.is_empty() {
            (1.0, vec![0.0; d])
        } else {
            let ind = self.indicator(c);
            let mut dind = vec![0.0; d];
            if let FeasibilityMode::Sigmoid { temperature } = self.feasibility.mode {
                for (v, (cv, g)) in c.iter().zip(gc).enumerate() {
                    let s = self.constraint_scale.get(v).copied().unwrap_or(1.0);
                    let sig = crate::risk::sigmoid(cv / (s * temperature));
                    let k = ind * (1.0 - sig) / (s * temperature);
                    for (a, b) in dind.iter_mut().zip(g) {
                        *a += k * b;
                    }
                }
            }
            (ind, dind)
        };
        let mut best = f64::INFINITY;
        let mut best_j = 0;
        let mut best_active = false;
        for j in 0..m {
            let lam = if c.is_empty() { 0.0 } else { self.feasibility.cost(j) };
            let weighted = (y[j] + lam) * ind - lam;
            let mut n = (weighted - self.lower[j]) / (self.upper[j] - self.lower[j]);
            let mut active = true;
            if let Some((a, b)) = self.clip {
                if n < a || n > b {
                    active = false;
                }
                n = n.clamp(a, b);
            }
            let v = self.weights.as_slice()[j] * n;
            if v < best {
                best = v;
                best_j = j;
                best_active = active;
            }
        }
        let mut g = vec![0.0; d];
        if best_active {
            let j = best_j;
            let lam = if c.is_empty() { 0.0 } else { self.feasibility.cost(j) };
            let k = self.weights.as_slice()[j] / (self.upper[j] - self.lower[j]);
            for t in 0..d {
                g[t] = k * (ind * gy[j][t] + (y[j] + lam) * dind[t]);
            }
        }
        (best, g)
    }
}

/// Per-design risk functional over perturbation samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskObjective {
    /// VaR over perturbations of the Chebyshev scalarization.
    Mars(RiskLevel),
    /// Augmented Chebyshev of the mean over perturbations.
    Expectation { beta: f64 },
    /// Augmented Chebyshev of the nominal value.
    Nominal { beta: f64 },
}

impl RiskObjective {
    /// Whether the design is evaluated at its perturbations.
    pub fn perturbed(&self) -> bool {
        !matches!(self, RiskObjective::Nominal { .. })
    }

    /// `psi` of every design for every sample. `samples[k]` holds output `k`
    /// (`designs * pts x n_samples`), rows grouped by design.
    pub fn evaluate(
        &self,
        scal: &Scalarization,
        samples: &[DMatrix<f64>],
        pts_per_design: usize,
    ) -> Result<DMatrix<f64>> {
        let m = scal.n_objectives();
        if samples.len() < m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: samples.len(),
            });
        }
        let rows = samples[0].nrows();
        let n = samples[0].ncols();
        if pts_per_design == 0 || !rows.is_multiple_of(pts_per_design) {
            return Err(Error::InvalidParameter("rows must group evenly by design".into()));
        }
        let designs = rows / pts_per_design;
        let v = samples.len() - m;
        let w = scal.weights.as_slice();
        let mut out = DMatrix::zeros(designs, n);
        let mut y = vec![0.0; m];
        let mut c = vec![0.0; v];
        let mut row = vec![0.0; m];
        let mut buf = vec![0.0; pts_per_design];
        let mut acc = vec![0.0; m];
        for s in 0..n {
            for dsg in 0..designs {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for k in 0..pts_per_design {
                    let r = dsg * pts_per_design + k;
                    for j in 0..m {
                        y[j] = samples[j][(r, s)];
                    }
                    for t in 0..v {
                        c[t] = samples[m + t][(r, s)];
                    }
                    scal.weighted(&y, &c, &mut row);
                    match self {
                        RiskObjective::Mars(_) => {
                            scal.normalize(&mut row);
                            buf[k] = row.iter().zip(w).map(|(a, b)| a * b).fold(f64::INFINITY, f64::min);
                        }
                        _ => {
                            for (a, b) in acc.iter_mut().zip(&row) {
                                *a += b;
                            }
                        }
                    }
                }
                out[(dsg, s)] = match *self {
                    RiskObjective::Mars(alpha) => var_in_place(&mut buf, alpha),
                    RiskObjective::Expectation { beta } | RiskObjective::Nominal { beta } => {
                        acc.iter_mut().for_each(|a| *a /= pts_per_design as f64);
                        scal.normalize(&mut acc);
                        augmented_chebyshev0(&acc, w, beta)
                    }
                };
            }
        }
        Ok(out)
    }
}

/// MARS objective of one design's sample matrix: VaR over rows of the
/// scalarized, normalized rows.
pub fn mars_risk_objective(samples: &ObjectiveSampleMatrix, scal: &Scalarization, alpha: RiskLevel) -> Result<f64> {
    check_len(scal.n_objectives(), samples.n_objectives())?;
    let mut vals: Vec<f64> = (0..samples.n_samples())
        .map(|i| scal.chebyshev(samples.row(i), samples.constraint_row(i).unwrap_or(&[])))
        .collect();
    Ok(var_in_place(&mut vals, alpha))
}

/// Problem facts the acquisition functions need.
#[derive(Debug, Clone)]
pub struct ProblemView<'a> {
    pub bounds: &'a Bounds,
    pub noise: &'a NoiseProcess,
    pub reference: &'a [f64],
    pub alpha: RiskLevel,
    pub n_objectives: usize,
    pub n_constraints: usize,
}

/// Evaluated designs with their objective and constraint observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

impl History {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Objectives followed by constraints, the surrogate's output layout.
    pub fn outputs(&self) -> Vec<Vec<f64>> {
        self.y
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let mut r = y.clone();
                if let Some(c) = self.c.get(i) {
                    r.extend_from_slice(c);
                }
                r
            })
            .collect()
    }
}

/// Seed offsets of the per-iteration random streams.
mod stream {
    pub const PERTURBATIONS: u64 = 1;
    pub const CANDIDATE_NORMALS: u64 = 2;
    pub const BASELINE_NORMALS: u64 = 3;
    pub const PRUNE_NORMALS: u64 = 4;
    pub const WEIGHTS: u64 = 5;
    pub const RFF: u64 = 6;
    pub const OPTIMIZER: u64 = 7;
}

/// Independent seed for `(stream, index)` under a master seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined key.
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-iteration state: the model, fixed perturbations and fixed normals.
pub struct AcquisitionContext<'a> {
    pub model: &'a SurrogateModel,
    pub problem: ProblemView<'a>,
    pub history: &'a History,
    pub settings: AcqSettings,
    pub perturbations: PerturbationSet,
    /// Infeasibility cost per objective.
    pub infeasibility_cost: Vec<f64>,
    /// Standardization scale of each constraint output.
    pub constraint_scale: Vec<f64>,
    seed: u64,
    candidate_normals: Vec<DMatrix<f64>>,
    /// Prune samples for nominal and perturbed objectives.
    prune_cache: [OnceCell<Vec<DMatrix<f64>>>; 2],
}

impl<'a> AcquisitionContext<'a> {
    pub fn new(
        model: &'a SurrogateModel,
        problem: ProblemView<'a>,
        history: &'a History,
        settings: AcqSettings,
        seed: u64,
    ) -> Result<Self> {
        settings.validate()?;
        if history.is_empty() {
            return Err(Error::Empty("evaluated designs"));
        }
        let m = problem.n_objectives;
        check_len(m + problem.n_constraints, model.n_outputs())?;
        check_len(m, problem.reference.len())?;
        let d = problem.bounds.dim();
        let perturbations = PerturbationSet::sobol(settings.n_xi, d, derive_seed(seed, stream::PERTURBATIONS, 0))?;
        let candidate_normals = (0..model.n_outputs())
            .map(|k| {
                standard_normals(
                    settings.n_xi,
                    settings.n_mc,
                    derive_seed(seed, stream::CANDIDATE_NORMALS, k as u64),
                )
            })
            .collect();

        // lambda_j = max(0, -min_i(mu_ij - 6 sigma_ij)) over evaluated designs.
        let (mu, var) = model.marginals(&history.x);
        let infeasibility_cost = (0..m)
            .map(|j| {
                let lo = mu
                    .iter()
                    .zip(&var)
                    .map(|(a, v)| a[j] - 6.0 * v[j].sqrt())
                    .fold(f64::INFINITY, f64::min);
                (-lo).max(0.0)
            })
            .collect();
        let constraint_scale = model.outputs()[m..].iter().map(|o| o.y_std()).collect();
        Ok(Self {
            model,
            problem,
            history,
            settings,
            perturbations,
            infeasibility_cost,
            constraint_scale,
            seed,
            candidate_normals,
            prune_cache: [OnceCell::new(), OnceCell::new()],
        })
    }

    pub fn n_objectives(&self) -> usize {
        self.problem.n_objectives
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn constrained(&self) -> bool {
        self.problem.n_constraints > 0
    }

    /// Perturbed copies `x ⋄ xi` of a design under the fixed perturbations.
    pub fn perturbed(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.problem.noise.perturbed_designs(&self.perturbations, x)
    }

    fn points(&self, xs: &[Vec<f64>], perturbed: bool) -> Result<Vec<Vec<f64>>> {
        if !perturbed {
            return Ok(xs.to_vec());
        }
        let mut out = Vec::with_capacity(xs.len() * self.settings.n_xi);
        for x in xs {
            out.extend(self.perturbed(x)?);
        }
        Ok(out)
    }

    fn feasibility(&self, mode: FeasibilityMode) -> FeasibilityConfig {
        FeasibilityConfig {
            mode,
            infeasibility_cost: self.infeasibility_cost.clone(),
        }
    }

    fn sigmoid_mode(&self) -> FeasibilityMode {
        FeasibilityMode::Sigmoid {
            temperature: self.settings.sigmoid_temperature,
        }
    }

    /// Observed output range per objective, used to widen degenerate bounds.
    fn observed_range(&self) -> Vec<f64> {
        (0..self.n_objectives())
            .map(|j| {
                let (lo, hi) = self
                    .history
                    .y
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
                        (a.min(y[j]), b.max(y[j]))
                    });
                hi - lo
            })
            .collect()
    }

    fn expand(&self, lower: &[f64], mut upper: Vec<f64>) -> Vec<f64> {
        let range = self.observed_range();
        for j in 0..upper.len() {
            if !(upper[j] > lower[j]) {
                let r = if range[j].is_finite() { range[j] } else { 0.0 };
                upper[j] = lower[j] + r.max(1e-6);
            }
        }
        upper
    }

    /// Rows of posterior means at the perturbed copies of every evaluated design,
    /// feasibility-weighted with the exact indicator.
    fn posterior_mean_matrices(&self) -> Result<Vec<ObjectiveSampleMatrix>> {
        let m = self.n_objectives();
        let exact = Scalarization {
            weights: WeightVector::new(vec![1.0 / m as f64; m])?,
            lower: vec![0.0; m],
            upper: vec![1.0; m],
            clip: None,
            feasibility: self.feasibility(FeasibilityMode::Exact),
            constraint_scale: vec![1.0; self.problem.n_constraints],
        };
        let pts = self.points(&self.history.x, true)?;
        let means = self.model.mean(&pts);
        let n_xi = self.settings.n_xi;
        means
            .chunks(n_xi)
            .map(|rows| {
                let weighted: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| {
                        let mut out = vec![0.0; m];
                        exact.weighted(&r[..m], &r[m..], &mut out);
                        out
                    })
                    .collect();
                ObjectiveSampleMatrix::new(&weighted)
            })
            .collect()
    }

    /// `(lower, upper)` for MARS: the reference point and the ideal point of the
    /// global MVaR of posterior-mean sample matrices over evaluated designs.
    pub fn normalization_bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mats = self.posterior_mean_matrices()?;
        let set = global_mvar(&mats, self.problem.alpha)?;
        let lower = self.problem.reference.to_vec();
        let upper = ideal(set.points(), self.n_objectives());
        Ok((lower.clone(), self.expand(&lower, upper)))
    }

    /// `(nadir, ideal)` of the observed Pareto front (feasible points when any).
    pub fn nominal_bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let feasible: Vec<Vec<f64>> = self
            .history
            .y
            .iter()
            .enumerate()
            .filter(|(i, _)| self.history.c.get(*i).is_none_or(|c| c.iter().all(|v| *v > 0.0)))
            .map(|(_, y)| y.clone())
            .collect();
        let pool = if feasible.is_empty() {
            self.history.y.clone()
        } else {
            feasible
        };
        self.front_bounds(&pool)
    }

    /// `(nadir, ideal)` of the Pareto front of posterior-mean expectations.
    pub fn expectation_bounds(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let means: Vec<Vec<f64>> = self
            .posterior_mean_matrices()?
            .iter()
            .map(|mat| {
                let n = mat.n_samples() as f64;
                (0..mat.n_objectives())
                    .map(|j| mat.column(j).iter().sum::<f64>() / n)
                    .collect()
            })
            .collect();
        self.front_bounds(&means)
    }

    fn front_bounds(&self, pts: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.n_objectives();
        let front = pareto_front(pts)?;
        let upper = ideal(front.points(), m);
        let lower: Vec<f64> = (0..m)
            .map(|j| front.points().iter().map(|p| p[j]).fold(f64::INFINITY, f64::min))
            .collect();
        Ok((lower.clone(), self.expand(&lower, upper)))
    }

    /// The risk functional and scalarization a method optimizes for weight `w`.
    pub fn objective_for(&self, method: Method, w: WeightVector) -> Result<(RiskObjective, Scalarization)> {
        let beta = self.settings.beta;
        let (risk, (lower, upper), mode) = match method {
            Method::MarsNei | Method::MarsTs | Method::MarsUcb => (
                RiskObjective::Mars(self.problem.alpha),
                self.normalization_bounds()?,
                self.sigmoid_mode(),
            ),
            Method::ExpParego => (
                RiskObjective::Expectation { beta },
                self.expectation_bounds()?,
                FeasibilityMode::Exact,
            ),
            Method::Parego => (
                RiskObjective::Nominal { beta },
                self.nominal_bounds()?,
                FeasibilityMode::Exact,
            ),
            Method::Sobol => return Err(Error::UnsupportedMethod("sobol".into())),
        };
        Ok((
            risk,
            Scalarization {
                weights: w,
                lower,
                upper,
                clip: Some(self.settings.clip),
                feasibility: self.feasibility(mode),
                constraint_scale: self.constraint_scale.clone(),
            },
        ))
    }

    /// Joint posterior samples of every evaluated design, drawn once per context.
    fn prune_samples(&self, perturbed: bool) -> Result<&Vec<DMatrix<f64>>> {
        let cell = &self.prune_cache[usize::from(perturbed)];
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        let pts = self.points(&self.history.x, perturbed)?;
        let normals: Vec<DMatrix<f64>> = (0..self.model.n_outputs())
            .map(|k| {
                standard_normals(
                    pts.len(),
                    self.settings.n_prune,
                    derive_seed(self.seed, stream::PRUNE_NORMALS, k as u64),
                )
            })
            .collect();
        let samples = self.model.sample_joint(&pts, &normals)?;
        Ok(cell.get_or_init(|| samples))
    }

    /// Indices of evaluated designs that maximize `psi` in at least one joint
    /// posterior sample (ties to the lowest index).
    pub fn prune_baseline(&self, risk: &RiskObjective, scal: &Scalarization) -> Result<Vec<usize>> {
        let n = self.history.len();
        if n == 1 {
            return Ok(vec![0]);
        }
        let samples = self.prune_samples(risk.perturbed())?;
        let pts = if risk.perturbed() { self.settings.n_xi } else { 1 };
        let psi = risk.evaluate(scal, samples, pts)?;
        Ok(argmax_union(&psi))
    }

    /// NEI acquisition over the pruned baseline plus `pending` designs.
    pub fn nei(&self, risk: RiskObjective, scal: Scalarization, pending: &[Vec<f64>], index: u64) -> Result<Nei<'_>> {
        let keep = self.prune_baseline(&risk, &scal)?;
        let mut baseline: Vec<Vec<f64>> = keep.iter().map(|&i| self.history.x[i].clone()).collect();
        baseline.extend(pending.iter().cloned());
        let pts_per_design = if risk.perturbed() { self.settings.n_xi } else { 1 };
        let base_pts = self.points(&baseline, risk.perturbed())?;
        let normals: Vec<DMatrix<f64>> = (0..self.model.n_outputs())
            .map(|k| {
                standard_normals(
                    base_pts.len(),
                    self.settings.n_mc,
                    derive_seed(self.seed, stream::BASELINE_NORMALS, (index << 8) | k as u64),
                )
            })
            .collect();
        let sampler = self.model.joint_sampler(&base_pts, &normals)?;
        let psi = risk.evaluate(&scal, &sampler.baseline_samples(), pts_per_design)?;
        let best: Vec<f64> = (0..psi.ncols())
            .map(|s| psi.column(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let cand_normals = self
            .candidate_normals
            .iter()
            .map(|z| z.rows(0, pts_per_design).clone_owned())
            .collect();
        Ok(Nei {
            ctx: self,
            risk,
            scal,
            sampler,
            best_baseline: best,
            cand_normals,
            baseline_designs: baseline,
        })
    }

    /// MARS-TS objective on a freshly drawn RFF path.
    pub fn ts(&self, scal: Scalarization, index: u64) -> Result<Ts<'_>> {
        let path = self
            .model
            .draw_rff_path(self.settings.rff_features, derive_seed(self.seed, stream::RFF, index))?;
        Ok(Ts { ctx: self, scal, path })
    }

    /// MARS-UCB objective; unconstrained problems only.
    pub fn ucb(&self, scal: Scalarization, zeta: Option<f64>) -> Result<Ucb<'_>> {
        if self.constrained() {
            return Err(Error::UnsupportedMethod(Method::MarsUcb.name().into()));
        }
        let zeta = zeta
            .or(self.settings.zeta)
            .unwrap_or_else(|| practical_zeta(self.history.len()));
        if !(zeta >= 0.0) {
            return Err(Error::InvalidParameter("zeta must be >= 0".into()));
        }
        Ok(Ucb { ctx: self, scal, zeta })
    }

    fn weight_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, stream::WEIGHTS, 0))
    }

    /// `q` designs chosen one at a time, each with a fresh uniform-simplex
    /// weight, paired with the acquisition value it was selected at.
    /// Model-free `sobol` values are NaN.
    pub fn generate_batch(&self, method: Method, q: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        if q == 0 {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        let mut rng = self.weight_rng();
        let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(q);
        let mut values = Vec::with_capacity(q);
        for i in 0..q as u64 {
            let (x, v) = match method {
                Method::Sobol => {
                    let u: Vec<f64> = (0..self.problem.bounds.dim()).map(|_| rng.random()).collect();
                    (self.problem.bounds.from_unit(&u), f64::NAN)
                }
                _ => {
                    let w = WeightVector::sample_uniform(self.n_objectives(), &mut rng);
                    self.select(method, w, &chosen, i)?
                }
            };
            chosen.push(x);
            values.push(v);
        }
        Ok(chosen.into_iter().zip(values).collect())
    }

    /// Maximize one method's acquisition for weight `w`; returns the design and value.
    pub fn select(&self, method: Method, w: WeightVector, pending: &[Vec<f64>], index: u64) -> Result<(Vec<f64>, f64)> {
        let (risk, scal) = self.objective_for(method, w)?;
        let opt_seed = derive_seed(self.seed, stream::OPTIMIZER, index);
        let bounds = self.problem.bounds;
        let mut cfg = self.settings.optimizer;
        match method {
            Method::MarsNei | Method::ExpParego | Method::Parego => {
                let mut acq = self.nei(risk, scal, pending, index)?;
                optimize_acquisition(&mut acq, bounds, &cfg, opt_seed)
            }
            Method::MarsTs => {
                let mut acq = self.ts(scal, index)?;
                if cfg.gradient_mode == GradientMode::FiniteDifference {
                    cfg.gradient_mode = GradientMode::SamplePath;
                }
                optimize_acquisition(&mut acq, bounds, &cfg, opt_seed)
            }
            Method::MarsUcb => {
                let mut acq = self.ucb(scal, None)?;
                optimize_acquisition(&mut acq, bounds, &cfg, opt_seed)
            }
            Method::Sobol => Err(Error::UnsupportedMethod("sobol".into())),
        }
    }
}

fn ideal(points: &[Vec<f64>], m: usize) -> Vec<f64> {
    (0..m)
        .map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Union over samples (columns) of the row attaining the maximum; ties to the lowest row.
pub fn argmax_union(psi: &DMatrix<f64>) -> Vec<usize> {
    let mut keep = vec![false; psi.nrows()];
    for s in 0..psi.ncols() {
        let col = psi.column(s);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i] > col[best] {
                best = i;
            }
        }
        keep[best] = true;
    }
    let out: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    if out.is_empty() {
        vec![0]
    } else {
        out
    }
}

/// `(1/N) sum_s [psi_c(s) - best_b(s)]^+` for candidate sets.
pub struct Nei<'c> {
    ctx: &'c AcquisitionContext<'c>,
    risk: RiskObjective,
    scal: Scalarization,
    sampler: JointSampler<'c>,
    best_baseline: Vec<f64>,
    cand_normals: Vec<DMatrix<f64>>,
    baseline_designs: Vec<Vec<f64>>,
}

impl Nei<'_> {
    pub fn baseline(&self) -> &[Vec<f64>] {
        &self.baseline_designs
    }

    /// Improvement of the best of `candidates` over the baseline, averaged over samples.
    pub fn evaluate(&self, candidates: &[Vec<f64>]) -> Result<f64> {
        let pts_per = if self.risk.perturbed() {
            self.ctx.settings.n_xi
        } else {
            1
        };
        let mut best_c = vec![f64::NEG_INFINITY; self.best_baseline.len()];
        for x in candidates {
            let pts = self.ctx.points(std::slice::from_ref(x), self.risk.perturbed())?;
            let samples = self.sampler.candidate_samples(&pts, &self.cand_normals)?;
            let psi = self.risk.evaluate(&self.scal, &samples, pts_per)?;
            for (b, v) in best_c.iter_mut().zip(psi.row(0).iter()) {
                *b = b.max(*v);
            }
        }
        let n = self.best_baseline.len() as f64;
        Ok(best_c
            .iter()
            .zip(&self.best_baseline)
            .map(|(c, b)| (c - b).max(0.0))
            .sum::<f64>()
            / n)
    }
}

impl Acquisition for Nei<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.evaluate(&[x.to_vec()]).unwrap_or(f64::NAN)
    }
}

/// VaR over perturbations of the scalarized RFF path.
pub struct Ts<'c> {
    ctx: &'c AcquisitionContext<'c>,
    scal: Scalarization,
    path: RffPath,
}

impl Ts<'_> {
    pub fn path(&self) -> &RffPath {
        &self.path
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let m = self.scal.n_objectives();
        let mut vals: Vec<f64> = self
            .ctx
            .perturbed(x)?
            .iter()
            .map(|p| {
                let v = self.path.eval(p);
                self.scal.chebyshev(&v[..m], &v[m..])
            })
            .collect();
        Ok(var_in_place(&mut vals, self.ctx.problem.alpha))
    }

    pub fn evaluate_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let scalar = |p: &[f64]| {
            let (v, g) = self.path.eval_grad(p);
            self.scal.chebyshev_grad(&v, &g)
        };
        let value = self.evaluate(x)?;
        let grad = var_path_gradient(
            scalar,
            x,
            self.ctx.problem.noise,
            &self.ctx.perturbations,
            self.ctx.problem.alpha,
        )?;
        Ok((value, grad))
    }
}

impl Acquisition for Ts<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.evaluate(x).unwrap_or(f64::NAN)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.evaluate_with_gradient(x).ok()
    }
}

/// VaR over perturbations of the scalarized upper confidence bound.
pub struct Ucb<'c> {
    ctx: &'c AcquisitionContext<'c>,
    scal: Scalarization,
    zeta: f64,
}

impl Ucb<'_> {
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let pts = self.ctx.perturbed(x)?;
        let (_, upper) = self.ctx.model.ucb_bounds(&pts, &[self.zeta])?;
        let mut vals: Vec<f64> = upper.iter().map(|u| self.scal.chebyshev(u, &[])).collect();
        Ok(var_in_place(&mut vals, self.ctx.problem.alpha))
    }
}

impl Acquisition for Ucb<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.evaluate(x).unwrap_or(f64::NAN)
    }
}
