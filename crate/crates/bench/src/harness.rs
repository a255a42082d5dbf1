//! The BO loop, MVaR hypervolume tracking and regret evaluation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use anyhow::{bail, Context};
use mars_core::acquisition::{derive_seed, AcquisitionContext, History, Method, ProblemView};
use mars_core::gp::{FitConfig, SurrogateModel};
use mars_core::noise::PerturbationSet;
use mars_core::pareto::{hypervolume, pareto_front};
use mars_core::problems::{problem, ProblemSpec};
use mars_core::qmc::{scale_to_box, Sobol};
use mars_core::risk::{mvar_exact, FeasibilityConfig, FeasibilityMode, ObjectiveSampleMatrix, RiskLevel};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Regret below this is reported at the floor before taking log10.
pub const REGRET_FLOOR: f64 = 1e-12;

/// Seed streams derived from the master seed.
pub mod stream {
    pub const INIT: u64 = 101;
    pub const FIT: u64 = 102;
    pub const ACQUISITION: u64 = 103;
}

/// One evaluated design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// 0 for initial designs, then the BO iteration that proposed the design.
    pub iter: usize,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub c: Vec<f64>,
    pub acq_value: Option<f64>,
    /// MVaR hypervolume of all designs evaluated so far.
    pub mvar_hv: f64,
    pub log_regret: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub init: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub seeds: Seeds,
    pub d: usize,
    pub m: usize,
    pub v: usize,
    /// Hypervolume of the reference ("true") global MVaR set regret is measured against.
    pub true_hv: f64,
    pub rows: Vec<Row>,
    /// Iteration failures that were retried.
    pub failures: Vec<String>,
}

impl RunRecord {
    pub fn designs(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.x.clone()).collect()
    }

    pub fn final_log_regret(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.log_regret)
    }

    pub fn final_hv(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.mvar_hv)
    }
}

pub fn log_regret(true_hv: f64, hv: f64) -> f64 {
    (true_hv - hv).max(REGRET_FLOOR).log10()
}

/// Per-row log10 regret of a record against `true_hv`.
pub fn evaluate_regret(record: &RunRecord, true_hv: f64) -> Vec<f64> {
    record.rows.iter().map(|r| log_regret(true_hv, r.mvar_hv)).collect()
}

/// Replace a record's regret series with one against `true_hv`.
pub fn rescore(record: &mut RunRecord, true_hv: f64) {
    record.true_hv = true_hv;
    for r in &mut record.rows {
        r.log_regret = log_regret(true_hv, r.mvar_hv);
    }
}

/// True-function MVaR of designs under fixed evaluation perturbations.
///
/// Constrained problems use exact feasibility weighting with a cost that sends
/// infeasible samples strictly below the reference point.
pub struct MvarEvaluator {
    pub problem: ProblemSpec,
    pub alpha: RiskLevel,
    perturbations: PerturbationSet,
    feasibility: FeasibilityConfig,
}

impl MvarEvaluator {
    pub fn new(problem: ProblemSpec, alpha: RiskLevel, n_xi_eval: usize, eval_seed: u64) -> anyhow::Result<Self> {
        let perturbations = PerturbationSet::sobol(n_xi_eval, problem.d, eval_seed)?;
        let feasibility = FeasibilityConfig {
            mode: FeasibilityMode::Exact,
            infeasibility_cost: problem.reference.iter().map(|r| r.abs() + 1.0).collect(),
        };
        Ok(Self {
            problem,
            alpha,
            perturbations,
            feasibility,
        })
    }

    /// Feasibility-weighted objective samples at every perturbation of `x`.
    pub fn sample_matrix(&self, x: &[f64]) -> anyhow::Result<ObjectiveSampleMatrix> {
        let pts = self.problem.noise.perturbed_designs(&self.perturbations, x)?;
        let m = self.problem.m;
        let mut flat = Vec::with_capacity(pts.len() * m);
        for p in &pts {
            let e = self.problem.evaluate(p)?;
            let mut y = e.objectives;
            if !e.constraints.is_empty() {
                self.feasibility.weight_row(&mut y, &e.constraints);
            }
            flat.extend(y);
        }
        Ok(ObjectiveSampleMatrix::from_flat(m, flat)?)
    }

    pub fn design_mvar(&self, x: &[f64]) -> anyhow::Result<Vec<Vec<f64>>> {
        Ok(mvar_exact(&self.sample_matrix(x)?, self.alpha)?.into_points())
    }

    /// Global MVaR of a design set and its hypervolume.
    pub fn estimate_global_mvar(&self, designs: &[Vec<f64>]) -> anyhow::Result<(Vec<Vec<f64>>, f64)> {
        let mut front = RunningFront::new(self.problem.reference.clone());
        for x in designs {
            front.add(self.design_mvar(x)?)?;
        }
        Ok((front.points, front.hv))
    }
}

/// Incrementally maintained Pareto front with its hypervolume.
#[derive(Debug, Clone)]
pub struct RunningFront {
    reference: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub hv: f64,
}

impl RunningFront {
    pub fn new(reference: Vec<f64>) -> Self {
        Self {
            reference,
            points: Vec::new(),
            hv: 0.0,
        }
    }

    pub fn add(&mut self, new: Vec<Vec<f64>>) -> anyhow::Result<f64> {
        if new.is_empty() {
            return Ok(self.hv);
        }
        let mut all = std::mem::take(&mut self.points);
        all.extend(new);
        self.points = pareto_front(&all)?.into_points();
        self.hv = hypervolume(&self.points, &self.reference)?;
        Ok(self.hv)
    }
}

/// `n` evenly spaced points per dimension spanning the box, endpoints included.
pub fn dense_grid(lower: &[f64], upper: &[f64], n: usize) -> Vec<Vec<f64>> {
    let d = lower.len();
    let axis = |j: usize, i: usize| {
        if n == 1 {
            0.5 * (lower[j] + upper[j])
        } else {
            lower[j] + (upper[j] - lower[j]) * i as f64 / (n - 1) as f64
        }
    };
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|j| {
                    let i = k % n;
                    k /= n;
                    axis(j, i)
                })
                .collect()
        })
        .collect()
}

type GridKey = (String, u64, usize, usize, u64);

/// Dense-grid global MVaR front and hypervolume, memoized per process.
/// `grid` is the per-dimension resolution of a 2-D grid; other dimensions
/// keep the total of `grid^2` designs.
pub fn grid_reference(
    problem: &ProblemSpec,
    alpha: RiskLevel,
    n_xi_eval: usize,
    grid: usize,
    eval_seed: u64,
) -> anyhow::Result<Arc<(Vec<Vec<f64>>, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<GridKey, Arc<(Vec<Vec<f64>>, f64)>>>> = OnceLock::new();
    let key = (
        problem.name.to_string(),
        alpha.value().to_bits(),
        n_xi_eval,
        grid,
        eval_seed,
    );
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let eval = MvarEvaluator::new(problem.clone(), alpha, n_xi_eval, eval_seed)?;
    // Same total design count for every dimension: `grid^2` points.
    let per_dim = (grid as f64).powf(2.0 / problem.d as f64).round() as usize;
    let designs = dense_grid(&problem.domain.lower, &problem.domain.upper, per_dim.max(1));
    // Merge in chunks so the candidate pool stays small.
    let mut front = RunningFront::new(problem.reference.clone());
    for chunk in designs.chunks(256) {
        let mut pts = Vec::new();
        for x in chunk {
            pts.extend(eval.design_mvar(x)?);
        }
        front.add(pts)?;
    }
    let value = Arc::new((front.points, front.hv));
    cache.lock().expect("cache poisoned").insert(key, value.clone());
    Ok(value)
}

/// Global MVaR hypervolume of the dense grid together with every design of `records`.
pub fn union_reference_hv(records: &[RunRecord], grid: usize) -> anyhow::Result<f64> {
    let first = records.first().context("no records")?;
    let cfg = &first.config;
    let spec = problem(&cfg.problem)?;
    let alpha = RiskLevel::new(cfg.alpha.unwrap_or(spec.alpha.value()))?;
    for r in records {
        if r.config.problem != cfg.problem || r.config.n_xi_eval != cfg.n_xi_eval || r.config.eval_seed != cfg.eval_seed
        {
            bail!("records disagree on problem or evaluation perturbations");
        }
    }
    let base = grid_reference(&spec, alpha, cfg.n_xi_eval, grid, cfg.eval_seed)?;
    let eval = MvarEvaluator::new(spec.clone(), alpha, cfg.n_xi_eval, cfg.eval_seed)?;
    let mut front = RunningFront::new(spec.reference.clone());
    front.add(base.0.clone())?;
    for r in records {
        let mut pts = Vec::new();
        for x in r.designs() {
            pts.extend(eval.design_mvar(&x)?);
        }
        front.add(pts)?;
    }
    Ok(front.hv)
}

/// Run one trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<RunRecord> {
    cfg.validate()?;
    let spec = problem(&cfg.problem)?;
    let alpha = RiskLevel::new(cfg.alpha.unwrap_or(spec.alpha.value()))?;
    let d = spec.d;
    let n_init = cfg.n_init.unwrap_or(2 * (d + 1));
    let seeds = Seeds {
        master: cfg.seed,
        init: derive_seed(cfg.seed, stream::INIT, 0),
        eval: cfg.eval_seed,
    };
    let reference = grid_reference(&spec, alpha, cfg.n_xi_eval, cfg.grid, cfg.eval_seed)?;
    let true_hv = reference.1;
    let evaluator = MvarEvaluator::new(spec.clone(), alpha, cfg.n_xi_eval, cfg.eval_seed)?;
    let mut front = RunningFront::new(spec.reference.clone());
    let mut sobol = Sobol::new(d, Some(seeds.init))?;
    let next_sobol = |sobol: &mut Sobol| {
        let mut p = vec![sobol.next_point()];
        scale_to_box(&mut p, &spec.domain.lower, &spec.domain.upper);
        p.pop().expect("one point")
    };

    let mut record = RunRecord {
        config: cfg.clone(),
        version: VERSION.to_string(),
        seeds,
        d,
        m: spec.m,
        v: spec.v,
        true_hv,
        rows: Vec::new(),
        failures: Vec::new(),
    };
    let mut history = History::default();
    let mut observe = |x: Vec<f64>,
                       iter: usize,
                       acq_value: Option<f64>,
                       wall: f64,
                       record: &mut RunRecord,
                       history: &mut History|
     -> anyhow::Result<()> {
        let e = spec.evaluate(&x)?;
        let hv = front.add(evaluator.design_mvar(&x)?)?;
        history.x.push(x.clone());
        history.y.push(e.objectives.clone());
        history.c.push(e.constraints.clone());
        record.rows.push(Row {
            iter,
            x,
            f: e.objectives,
            c: e.constraints,
            acq_value,
            mvar_hv: hv,
            log_regret: log_regret(true_hv, hv),
            wall_time_s: wall,
        });
        Ok(())
    };

    for _ in 0..n_init {
        let x = next_sobol(&mut sobol);
        observe(x, 0, None, 0.0, &mut record, &mut history)?;
    }

    for it in 1..=cfg.iters {
        let start = Instant::now();
        let batch: Vec<(Vec<f64>, Option<f64>)> = if cfg.method == Method::Sobol {
            (0..cfg.batch).map(|_| (next_sobol(&mut sobol), None)).collect()
        } else {
            let mut attempt = 0;
            loop {
                match propose(cfg, &spec, alpha, &history, it, attempt) {
                    Ok(b) => break b.into_iter().map(|(x, v)| (x, Some(v))).collect(),
                    Err(e) if attempt == 0 => {
                        record.failures.push(format!("iteration {it}: {e:#}"));
                        attempt += 1;
                    }
                    Err(e) => return Err(e.context(format!("iteration {it} failed after retry"))),
                }
            }
        };
        let wall = if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 };
        for (x, v) in batch {
            observe(x, it, v.filter(|v| v.is_finite()), wall, &mut record, &mut history)?;
        }
    }
    Ok(record)
}

/// Fit the surrogate and generate one batch. A retry raises the noise floor
/// (extra jitter) and reseeds the fit.
fn propose(
    cfg: &ExperimentConfig,
    spec: &ProblemSpec,
    alpha: RiskLevel,
    history: &History,
    it: usize,
    attempt: u64,
) -> anyhow::Result<Vec<(Vec<f64>, f64)>> {
    let mut fit = FitConfig {
        restarts: cfg.fit_restarts.max(1),
        seed: derive_seed(cfg.seed, stream::FIT, ((it as u64) << 1) | attempt),
        ..FitConfig::default()
    };
    if attempt > 0 {
        fit.noise_bounds.0 = 1e-4;
    }
    let model = SurrogateModel::fit(&history.x, &history.outputs(), &spec.domain, &fit)?;
    let view = ProblemView {
        bounds: &spec.domain,
        noise: &spec.noise,
        reference: &spec.reference,
        alpha,
        n_objectives: spec.m,
        n_constraints: spec.v,
    };
    let seed = derive_seed(cfg.seed, stream::ACQUISITION, ((it as u64) << 1) | attempt);
    let ctx = AcquisitionContext::new(&model, view, history, cfg.acq_settings(), seed)?;
    Ok(ctx.generate_batch(cfg.method, cfg.batch)?)
}
