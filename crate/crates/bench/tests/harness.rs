use std::fs;
use std::process::Command;

use mars_bench::export::{csv_string, export, load_records, mean_two_se, summarize, write_record};
use mars_bench::harness::{
    evaluate_regret, grid_reference, log_regret, run_experiment, union_reference_hv, MvarEvaluator, RunningFront,
    REGRET_FLOOR,
};
use mars_bench::ExperimentConfig;
use mars_core::acquisition::Method;
use mars_core::problems::problem;

/// Desk-sized configuration: small sample counts, a coarse reference grid.
fn quick(problem: &str, method: Method, iters: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        problem: problem.into(),
        method,
        seed,
        iters,
        n_xi: 8,
        n_mc: 32,
        n_prune: 64,
        n_xi_eval: 32,
        raw_candidates: 64,
        n_restarts: 2,
        max_iter: 30,
        rff_features: 128,
        fit_restarts: 2,
        grid: 20,
        ..ExperimentConfig::default()
    }
}

#[test]
fn zero_iterations_keep_only_initial_designs() {
    for (name, d) in [("toy1d", 1), ("gmm2-mult", 2), ("cbc-homo", 2)] {
        let rec = run_experiment(&quick(name, Method::MarsNei, 0, 1)).unwrap();
        assert_eq!(rec.rows.len(), 2 * (d + 1), "{name}");
        assert!(rec.rows.iter().all(|r| r.iter == 0 && r.acq_value.is_none()));
    }
}

#[test]
fn sobol_hv_uses_exactly_its_own_designs() {
    let cfg = quick("gmm2-mult", Method::Sobol, 6, 4);
    let rec = run_experiment(&cfg).unwrap();
    assert_eq!(rec.rows.len(), 12);
    assert!(rec.rows.iter().all(|r| r.acq_value.is_none()));
    let spec = problem("gmm2-mult").unwrap();
    let eval = MvarEvaluator::new(spec.clone(), spec.alpha, cfg.n_xi_eval, cfg.eval_seed).unwrap();
    let (_, hv) = eval.estimate_global_mvar(&rec.designs()).unwrap();
    assert_eq!(rec.final_hv(), hv);
    // Sobol designs continue one scrambled sequence: all distinct.
    let xs = rec.designs();
    for i in 0..xs.len() {
        for j in 0..i {
            assert_ne!(xs[i], xs[j]);
        }
    }
}

#[test]
fn identical_configs_give_identical_records() {
    for method in [Method::MarsNei, Method::MarsTs, Method::Parego] {
        let cfg = ExperimentConfig {
            batch: 2,
            ..quick("toy1d", method, 2, 9)
        };
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b, "{method}");
        assert_eq!(csv_string(&a), csv_string(&b));
        assert_eq!(a.rows.len(), 4 + 2 * 2);
        assert!(a.rows.iter().all(|r| r.wall_time_s == 0.0));
    }
}

#[test]
fn regret_series_nonincreasing_for_every_method() {
    for (name, methods) in [
        ("toy1d", Method::ALL.to_vec()),
        (
            "cbc-homo",
            vec![
                Method::MarsNei,
                Method::MarsTs,
                Method::ExpParego,
                Method::Parego,
                Method::Sobol,
            ],
        ),
    ] {
        for method in methods {
            let rec = run_experiment(&quick(name, method, 2, 3)).unwrap();
            for w in rec.rows.windows(2) {
                assert!(w[1].mvar_hv >= w[0].mvar_hv, "{name} {method}");
                assert!(w[1].log_regret <= w[0].log_regret, "{name} {method}");
            }
            if method.is_model_based() {
                assert!(rec.rows.iter().filter(|r| r.iter > 0).all(|r| r.acq_value.is_some()));
            }
        }
    }
}

#[test]
fn ucb_on_constrained_problem_aborts() {
    let err = run_experiment(&quick("cbc-homo", Method::MarsUcb, 1, 0)).unwrap_err();
    assert!(format!("{err:#}").contains("mars-ucb"), "{err:#}");
}

#[test]
fn global_mvar_estimates() {
    let spec = problem("toy1d").unwrap();
    let eval = MvarEvaluator::new(spec.clone(), spec.alpha, 32, 0).unwrap();
    let x = vec![0.3];
    let own = eval.design_mvar(&x).unwrap();
    let (_, hv) = eval.estimate_global_mvar(std::slice::from_ref(&x)).unwrap();
    assert_eq!(hv, mars_core::pareto::hypervolume(&own, &spec.reference).unwrap());
    let mut designs = vec![x];
    let mut prev = hv;
    for v in [0.05, 0.2, 0.45, 0.6] {
        designs.push(vec![v]);
        let (_, h) = eval.estimate_global_mvar(&designs).unwrap();
        assert!(h >= prev);
        prev = h;
    }

    let mut front = RunningFront::new(vec![0.0, 0.0]);
    front.add(vec![vec![1.0, 3.0]]).unwrap();
    assert_eq!(front.add(vec![vec![3.0, 1.0]]).unwrap(), 5.0);
    assert_eq!(front.add(vec![vec![2.0, 2.0]]).unwrap(), 6.0);
}

#[test]
fn regret_evaluation() {
    assert_eq!(log_regret(3.0, 3.0), REGRET_FLOOR.log10());
    assert_eq!(log_regret(100.0, 0.0), 2.0);
    let rec = run_experiment(&quick("toy1d", Method::Sobol, 3, 2)).unwrap();
    let series = evaluate_regret(&rec, rec.true_hv);
    assert_eq!(series, rec.rows.iter().map(|r| r.log_regret).collect::<Vec<_>>());
    assert!(series.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn union_reference_covers_grid_and_runs() {
    let recs: Vec<_> = [Method::Sobol, Method::MarsNei]
        .into_iter()
        .map(|m| run_experiment(&quick("gmm2-mult", m, 2, 5)).unwrap())
        .collect();
    let spec = problem("gmm2-mult").unwrap();
    let grid = grid_reference(&spec, spec.alpha, 32, 20, 0).unwrap();
    let hv = union_reference_hv(&recs, 20).unwrap();
    assert!(hv >= grid.1);
    assert!(recs.iter().all(|r| hv >= r.final_hv()));
    let other = run_experiment(&ExperimentConfig {
        eval_seed: 1,
        ..quick("gmm2-mult", Method::Sobol, 0, 5)
    })
    .unwrap();
    assert!(union_reference_hv(&[recs[0].clone(), other], 20).is_err());
}

#[test]
fn export_files_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let rec = run_experiment(&quick("cbc-homo", Method::Sobol, 3, 0)).unwrap();
    let path = write_record(&rec, dir.path()).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iter,x_0,x_1,f_0,f_1,c_0,mvar_hv,log_regret,wall_time_s");
    assert_eq!(lines.len(), 1 + 6 + 3);
    // 17 significant digits round-trip every float.
    let hv: f64 = lines.last().unwrap().split(',').nth(6).unwrap().parse().unwrap();
    assert_eq!(hv, rec.final_hv());
    assert_eq!(load_records(dir.path()).unwrap(), vec![rec.clone()]);

    let same = summarize(&[rec.clone(), rec.clone(), rec.clone()]).unwrap();
    assert_eq!(same.len(), 1);
    assert_eq!(same[0].two_se, 0.0);

    // Three synthetic records with final log regrets -1, -2, -4.5.
    let synthetic: Vec<_> = [(1, -1.0), (2, -2.0), (3, -4.5)]
        .into_iter()
        .map(|(seed, v)| {
            let mut r = rec.clone();
            r.config.seed = seed;
            r.rows.last_mut().unwrap().log_regret = v;
            r
        })
        .collect();
    let summary = export(&synthetic, dir.path()).unwrap();
    assert_eq!(summary[0].n, 3);
    assert_eq!(summary[0].mean_final_log_regret, -2.5);
    // Sample variance ((1.5)^2 + 0.5^2 + 2^2) / 2 = 3.25.
    assert!((summary[0].two_se - 2.0 * (3.25f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(mean_two_se(&[7.0]), (7.0, 0.0));
    assert!(dir.path().join("summary.json").exists());
    // The seed-0 record written above plus the three synthetic ones.
    assert_eq!(load_records(dir.path()).unwrap().len(), 4);
}

#[test]
fn cli_run_evaluate_summarize() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "problem = \"toy1d\"\nn-xi = 8\nn-mc = 32\nn-prune = 64\nraw-candidates = 64\nn-restarts = 2\nmax-iter = 30\nfit-restarts = 2\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_mars-bench");
    for method in ["sobol", "mars-nei"] {
        let out = Command::new(bin)
            .args(["run", "--config"])
            .arg(&cfg)
            .args([
                "--method",
                method,
                "--iters",
                "2",
                "--seed",
                "1",
                "--n-xi-eval",
                "32",
                "--grid",
                "20",
            ])
            .args(["--set", "rff-features=64", "--out"])
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = dir.path().join("toy1d_mars-nei_seed1.csv");
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 4 + 2);

    let out = Command::new(bin)
        .args(["evaluate", "--problem", "toy1d", "--grid", "20", "--runs"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let recs = load_records(dir.path()).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].true_hv, recs[1].true_hv);

    let out = Command::new(bin)
        .args(["summarize", "--runs"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("mars-nei"));

    let bad = Command::new(bin)
        .args(["run", "--problem", "nope", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!bad.status.success());
}
