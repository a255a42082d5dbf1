//! Synthetic benchmark problems, all posed as maximization.
//!
//! Constraint slacks are feasible when positive. Every evaluator is total on
//! its expanded domain so perturbed designs near the box edge stay finite.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::noise::{NoiseKind, NoiseProcess, ScaleFunction};
use crate::optim::Bounds;
use crate::risk::RiskLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Toy,
    Gmm(usize),
    BraninCurrin,
}

/// A registered benchmark: evaluator, domains, noise, risk level and reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub d: usize,
    pub m: usize,
    pub v: usize,
    pub domain: Bounds,
    /// Box the evaluator is guaranteed finite on; covers the perturbed designs.
    pub expanded: Bounds,
    pub noise: NoiseProcess,
    pub alpha: RiskLevel,
    pub reference: Vec<f64>,
    family: Family,
}

/// Objective and constraint values of one design.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    pub constraints: Vec<f64>,
}

impl ProblemSpec {
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        crate::error::check_len(self.d, x.len())?;
        Ok(match self.family {
            Family::Toy => {
                let (a, b) = eval_toy1d(x[0]);
                Evaluation {
                    objectives: vec![a, b],
                    constraints: Vec::new(),
                }
            }
            Family::Gmm(m) => Evaluation {
                objectives: eval_gmm(x, m)?,
                constraints: Vec::new(),
            },
            Family::BraninCurrin => {
                let (y, c) = eval_branin_currin(x);
                Evaluation {
                    objectives: y.to_vec(),
                    constraints: vec![c],
                }
            }
        })
    }
}

/// Names of every registered problem.
pub const PROBLEM_NAMES: [&str; 14] = [
    "toy1d",
    "gmm2-mult",
    "gmm2-corr",
    "gmm2-hetero",
    "gmm2-std005",
    "gmm2-std01",
    "gmm2-std02",
    "gmm3-a09",
    "gmm3-a08",
    "gmm3-a07",
    "gmm4-a09",
    "gmm4-a08",
    "cbc-hetero",
    "cbc-homo",
];

fn square(d: usize, lo: f64, hi: f64) -> Bounds {
    Bounds::new(vec![lo; d], vec![hi; d]).expect("static bounds are valid")
}

/// Look up a registered problem.
pub fn problem(name: &str) -> Result<ProblemSpec> {
    let gauss = |s: f64| NoiseProcess::additive_gaussian(vec![s]);
    let (family, alpha, reference, noise, margin): (Family, f64, Vec<f64>, NoiseProcess, f64) = match name {
        "toy1d" => (Family::Toy, 0.9, vec![-14.1951, -3.1887], gauss(0.1), 0.4),
        "gmm2-mult" => (
            Family::Gmm(2),
            0.9,
            vec![0.3752, 0.3548],
            NoiseProcess::multiplicative_gaussian(vec![0.07]),
            0.3,
        ),
        "gmm2-corr" => (
            Family::Gmm(2),
            0.9,
            vec![0.2727, 0.2583],
            NoiseProcess::new(NoiseKind::CorrelatedGaussian {
                covariance: vec![vec![0.0025, -0.002], vec![-0.002, 0.0025]],
            }),
            0.3,
        ),
        "gmm2-hetero" => (
            Family::Gmm(2),
            0.8,
            vec![0.3465, 0.3036],
            NoiseProcess::new(NoiseKind::HeteroskedasticGaussian {
                scale: ScaleFunction::Proportional { factor: 0.2 },
            }),
            0.6,
        ),
        "gmm2-std005" => (Family::Gmm(2), 0.9, vec![0.2756, 0.2368], gauss(0.05), 0.3),
        "gmm2-std01" => (Family::Gmm(2), 0.9, vec![0.1047, 0.1112], gauss(0.1), 0.3),
        "gmm2-std02" => (Family::Gmm(2), 0.9, vec![0.0160, 0.0131], gauss(0.2), 0.6),
        "gmm3-a09" => (Family::Gmm(3), 0.9, vec![0.2733, 0.0051, 0.1538], gauss(0.05), 0.3),
        "gmm3-a08" => (Family::Gmm(3), 0.8, vec![0.0420, 0.0180, 0.1952], gauss(0.05), 0.3),
        "gmm3-a07" => (Family::Gmm(3), 0.7, vec![0.0537, -0.0517, -0.0021], gauss(0.05), 0.3),
        "gmm4-a09" => (
            Family::Gmm(4),
            0.9,
            vec![0.0264, -0.0396, 0.0619, 0.1689],
            gauss(0.05),
            0.3,
        ),
        "gmm4-a08" => (
            Family::Gmm(4),
            0.8,
            vec![0.0322, -0.0398, 0.1168, -0.0023],
            gauss(0.05),
            0.3,
        ),
        "cbc-hetero" => (
            Family::BraninCurrin,
            0.7,
            vec![-194.9376, -12.2969],
            NoiseProcess::new(NoiseKind::HeteroskedasticGaussian {
                scale: ScaleFunction::Sigmoid { base: 0.05 },
            }),
            0.3,
        ),
        "cbc-homo" => (Family::BraninCurrin, 0.7, vec![-195.4667, -12.4984], gauss(0.05), 0.3),
        _ => {
            return Err(Error::Unknown {
                kind: "problem",
                name: name.to_string(),
            })
        }
    };
    let name = PROBLEM_NAMES.iter().copied().find(|n| *n == name).expect("registered");
    let (d, m, v, hi) = match family {
        Family::Toy => (1, 2, 0, 0.7),
        Family::Gmm(m) => (2, m, 0, 1.0),
        Family::BraninCurrin => (2, 2, 1, 1.0),
    };
    Ok(ProblemSpec {
        name,
        d,
        m,
        v,
        domain: square(d, 0.0, hi),
        expanded: square(d, -margin, hi + margin),
        noise,
        alpha: RiskLevel::new(alpha)?,
        reference,
        family,
    })
}

pub fn reference_point(name: &str) -> Result<Vec<f64>> {
    problem(name).map(|p| p.reference)
}

pub fn noise_spec(name: &str) -> Result<NoiseProcess> {
    problem(name).map(|p| p.noise)
}

/// The one-dimensional two-objective toy problem.
pub fn eval_toy1d(x: f64) -> (f64, f64) {
    let p1 = 2.4 - 10.0 * x - 0.1 * x * x;
    let p2 = 2.0 * x - 0.1 * x * x;
    let p3 = (x - 0.5).powi(2) + 0.1 * (30.0 * x).sin();
    let p4 = 1.0 / (1.0 + ((x - 0.2) / 0.005).exp());
    let f1 = 30.0 - 30.0 * (p1 * p4 + p2 * (1.0 - p4) + p3);
    let p6 = |t: f64| {
        let s = (PI * t).sin().powi(2);
        s + (t - 1.0).powi(2) * (1.0 + 10.0 * s)
    };
    let p5 = |t: f64| p6(1.0 + (t - 1.0) / 4.0) - 0.75 * t * t + 9.0955;
    let f2 = p5((x * 0.95 + 0.03) * 20.0 - 10.0);
    (f1, f2)
}

const GMM_POS: [[[f64; 2]; 3]; 4] = [
    [[0.2, 0.2], [0.8, 0.2], [0.5, 0.7]],
    [[0.07, 0.2], [0.4, 0.8], [0.85, 0.1]],
    [[0.08, 0.21], [0.45, 0.75], [0.86, 0.1]],
    [[0.09, 0.19], [0.44, 0.72], [0.89, 0.13]],
];
const GMM_VAR: [[f64; 3]; 4] = [
    [0.04, 0.01, 0.01],
    [0.04, 0.01, 0.0025],
    [0.04, 0.01, 0.0049],
    [0.0225, 0.0049, 0.0081],
];
const GMM_CONS: [[f64; 3]; 4] = [[0.5, 0.7, 0.7], [0.5, 0.7, 0.7], [0.5, 0.7, 0.9], [0.5, 0.7, 0.9]];

/// Mode locations and heights of GMM output `i`.
pub fn gmm_modes(i: usize) -> [([f64; 2], f64); 3] {
    std::array::from_fn(|j| (GMM_POS[i][j], GMM_CONS[i][j]))
}

/// First `m` GMM objectives. `2 pi var cons phi(x; pos, var I)` reduces to
/// `cons exp(-|x - pos|^2 / (2 var))`.
pub fn eval_gmm(x: &[f64], m: usize) -> Result<Vec<f64>> {
    if !(2..=4).contains(&m) {
        return Err(Error::InvalidParameter(format!(
            "GMM supports 2..=4 objectives, got {m}"
        )));
    }
    crate::error::check_len(2, x.len())?;
    Ok((0..m)
        .map(|i| {
            (0..3)
                .map(|j| {
                    let p = GMM_POS[i][j];
                    let r2 = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
                    GMM_CONS[i][j] * (-r2 / (2.0 * GMM_VAR[i][j])).exp()
                })
                .sum()
        })
        .collect())
}

/// Branin on its native domain `[-5, 10] x [0, 15]`.
pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Currin on the unit square; the `x2 -> 0+` limit of the exponential factor
/// (value 1) is used for `x2 <= 0`.
pub fn currin(x1: f64, x2: f64) -> f64 {
    let factor = if x2 > 0.0 { 1.0 - (-1.0 / (2.0 * x2)).exp() } else { 1.0 };
    let num = 2300.0 * x1.powi(3) + 1900.0 * x1 * x1 + 2092.0 * x1 + 60.0;
    let den = 100.0 * x1.powi(3) + 500.0 * x1 * x1 + 4.0 * x1 + 20.0;
    factor * num / den
}

/// Negated Branin and Currin on the unit square and the disk constraint slack.
pub fn eval_branin_currin(x: &[f64]) -> ([f64; 2], f64) {
    let (u1, u2) = (15.0 * x[0] - 5.0, 15.0 * x[1]);
    let slack = 50.0 - (u1 - 2.5).powi(2) - (u2 - 7.5).powi(2);
    ([-branin(u1, u2), -currin(x[0], x[1])], slack)
}
