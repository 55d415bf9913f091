//! Acceptance suite. Each test checks one criterion and prints a single
//! `PASS` or `FAIL` line before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deepload::dataset::{generate_synthetic, Series};
use deepload::deepstack::{train_deep, DeepPreset, DeepTraining, UnrolledNetwork};
use deepload::harness::{
    fit_window, mae, mape, per_horizon_csv, rmse, run_experiment_with, run_pipeline, table1_csv,
    with_threads, Execution, ExperimentPlan, ExperimentResult, ModelSpec, PipelineOptions,
    PipelineOutcome, WindowData,
};
use deepload::network::{Network, Pattern, Scheme, Topology};
use deepload::optimizers::{
    train, train_problem, Algorithm, LinearProblem, StopReason, TrainConfig,
};

/// Writes straight to stdout so the line shows up without `--nocapture`.
fn report_line(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn criterion(name: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => report_line(&format!("PASS {name}: {detail}")),
        Err(detail) => {
            report_line(&format!("FAIL {name}: {detail}"));
            panic!("{name} failed: {detail}");
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, input_dim: usize) -> Vec<Pattern> {
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..input_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            Pattern::scalar(x, rng.random_range(-1.0..1.0))
        })
        .collect()
}

/// Componentwise error, relative once a component exceeds one in size.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn gradient_and_jacobian_match_finite_differences() {
    let started = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut bad = None;
    for case in 0..20 {
        let scheme = if case % 2 == 0 {
            Scheme::Mlp
        } else {
            Scheme::Cfmlp
        };
        let depth = 1 + (case / 2) % 2;
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=15)).collect();
        let input_dim = rng.random_range(1..=5);
        let net = Network::init(Topology::new(scheme, input_dim, &hidden), case as u64).unwrap();
        let n = rng.random_range(3..=12);
        let batch = random_batch(&mut rng, n, input_dim);
        let (_, grad) = net.gradient(&batch).unwrap();
        let jac = net.jacobian(&batch).unwrap();
        let theta = net.params().to_vec();
        for k in 0..theta.len() {
            let at = |d: f64| {
                let mut t = theta.clone();
                t[k] += d;
                net.with_params(&t).unwrap()
            };
            let (plus, minus) = (at(h), at(-h));
            let fd =
                (plus.gradient(&batch).unwrap().0 - minus.gradient(&batch).unwrap().0) / (2.0 * h);
            let mut errs = vec![rel_err(grad[k], fd)];
            for (i, p) in batch.iter().enumerate() {
                // r = target − prediction
                let fd_r = -(plus.predict(&p.input).unwrap() - minus.predict(&p.input).unwrap())
                    / (2.0 * h);
                errs.push(rel_err(jac.row(i)[k], fd_r));
            }
            for e in errs {
                if e > worst {
                    worst = e;
                    bad = Some(format!("case {case} {scheme:?} {hidden:?} param {k}"));
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let detail = format!(
        "worst error {worst:.2e} at {}, {:.2?}",
        bad.unwrap_or_default(),
        elapsed
    );
    let ok = worst <= 1e-6 && elapsed < Duration::from_secs(60);
    criterion(
        "gradient-jacobian-fd",
        if ok { Ok(detail) } else { Err(detail) },
    );
}

fn normal_equation_solution(problem: &LinearProblem, n: usize) -> Vec<f64> {
    let x = DMatrix::from_row_slice(n, problem.p, &problem.design);
    let y = DVector::from_column_slice(&problem.targets);
    let xt = x.transpose();
    (&xt * &x)
        .cholesky()
        .expect("full rank")
        .solve(&(&xt * y))
        .iter()
        .copied()
        .collect()
}

fn random_linear(rng: &mut ChaCha8Rng, n: usize, p: usize) -> LinearProblem {
    let design = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let targets = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    LinearProblem::new(design, targets, p)
}

#[test]
fn least_squares_oracle() {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let algorithms = [
            Algorithm::LM,
            Algorithm::BFGS,
            Algorithm::SCG,
            Algorithm::CGfr,
            Algorithm::CGpr,
            Algorithm::CGpb,
        ];
        let mut worst: f64 = 0.0;
        for trial in 0..8 {
            let p = rng.random_range(2..=10);
            let n = rng.random_range(p + 5..=50);
            let problem = random_linear(&mut rng, n, p);
            let exact = normal_equation_solution(&problem, n);
            for alg in algorithms {
                let mut cfg = TrainConfig::for_algorithm(alg);
                cfg.mu_init = 1e-12;
                cfg.grad_tol = 1e-12;
                cfg.loss_tol = 1e-300;
                let out = train_problem(&problem, &vec![0.0; p], &cfg)
                    .map_err(|e| format!("{alg}: {e}"))?;
                let err = out
                    .theta
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                ensure(err <= 1e-6, || {
                    format!("trial {trial} {alg} p={p} n={n}: error {err:.2e}")
                })?;
                worst = worst.max(err);
            }
        }
        let mut cg_iters = Vec::new();
        for p in [2, 3, 5] {
            let problem = random_linear(&mut rng, 3 * p, p);
            let exact = normal_equation_solution(&problem, 3 * p);
            for alg in [Algorithm::CGfr, Algorithm::CGpr, Algorithm::CGpb] {
                let mut cfg = TrainConfig::for_algorithm(alg);
                cfg.grad_tol = 1e-9;
                cfg.loss_tol = 1e-300;
                let out = train_problem(&problem, &vec![0.0; p], &cfg)
                    .map_err(|e| format!("{alg}: {e}"))?;
                let err = out
                    .theta
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                ensure(
                    out.report.stop_reason == StopReason::GradTol
                        && out.report.epochs_run <= p
                        && err <= 1e-6,
                    || {
                        format!(
                            "{alg} P={p}: {} iterations, {:?}, error {err:.2e}",
                            out.report.epochs_run, out.report.stop_reason
                        )
                    },
                )?;
                cg_iters.push(out.report.epochs_run);
            }
        }
        Ok(format!(
            "worst parameter error {worst:.2e}; CG iterations {cg_iters:?}"
        ))
    };
    criterion("least-squares-oracle", run());
}

#[test]
fn every_optimizer_fits_sin() {
    // Inputs are min-max scaled onto [-1, 1] like every other feature in
    // the toolkit; the target sin(x) already lies there.
    let batch: Vec<Pattern> = (0..40)
        .map(|i| {
            let x = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / 39.0;
            Pattern::scalar(vec![x / std::f64::consts::PI], x.sin())
        })
        .collect();
    let net = Network::init(Topology::mlp(1, &[5]), 0).unwrap();
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for alg in Algorithm::ALL {
        let (_, report) = train(&net, &batch, &TrainConfig::for_algorithm(alg)).unwrap();
        let mse = 2.0 * report.final_loss / batch.len() as f64;
        let monotone_ok = !alg.is_monotone() || report.loss_trace.windows(2).all(|w| w[1] <= w[0]);
        lines.push(format!("{alg} {mse:.2e}"));
        if mse.is_nan() || mse >= 1e-2 || !monotone_ok {
            failures.push(format!("{alg} mse {mse:.3e} monotone {monotone_ok}"));
        }
    }
    let detail = format!("{}/13 fit [{}]", 13 - failures.len(), lines.join(", "));
    criterion(
        "optimizer-fitness-sin",
        if failures.is_empty() {
            Ok(detail)
        } else {
            Err(format!("{detail}; failing: {}", failures.join("; ")))
        },
    );
}

#[test]
fn structural_reductions() {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst_cascade: f64 = 0.0;
        for (i, hidden) in [vec![4], vec![7, 3], vec![15, 15]].iter().enumerate() {
            let mlp = Network::init(Topology::mlp(5, hidden), i as u64).unwrap();
            let cascade = mlp.embed_in_cascade().unwrap();
            ensure(cascade.topology().scheme == Scheme::Cfmlp, || {
                "embedding is not a cascade".into()
            })?;
            for _ in 0..1000 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
                let d = (mlp.predict(&x).unwrap() - cascade.predict(&x).unwrap()).abs();
                worst_cascade = worst_cascade.max(d);
            }
        }
        ensure(worst_cascade <= 1e-12, || {
            format!("cascade differs by {worst_cascade:.2e}")
        })?;

        let series = generate_synthetic(3, 176);
        let data = WindowData::prepare(&series, 120, 24).map_err(|e| e.to_string())?;
        let mut worst_unrolled: f64 = 0.0;
        for preset in DeepPreset::ALL {
            let mut training = DeepTraining::new(preset.algorithm());
            training.autoencoder.max_epochs = 20;
            training.front.max_epochs = 20;
            training.fine_tune.max_epochs = 0;
            let (model, _) = train_deep(
                &preset.code_dims(),
                &preset.front_topology(),
                &data.train,
                &training,
                5,
            )
            .map_err(|e| e.to_string())?;
            let unrolled = UnrolledNetwork::new(&model);
            for _ in 0..1000 {
                let x: Vec<f64> = (0..model.input_dim())
                    .map(|_| rng.random_range(-1.5..1.5))
                    .collect();
                let d = (model.predict(&x).unwrap() - unrolled.predict(&x).unwrap()).abs();
                worst_unrolled = worst_unrolled.max(d);
            }
        }
        ensure(worst_unrolled <= 1e-12, || {
            format!("unrolled differs by {worst_unrolled:.2e}")
        })?;
        Ok(format!(
            "cascade {worst_cascade:.1e}, unrolled {worst_unrolled:.1e}"
        ))
    };
    criterion("structural-reductions", run());
}

#[test]
fn metric_oracles() {
    let run = || -> Result<String, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let n = rng.random_range(1..=40);
            let y: Vec<f64> = (0..n)
                .map(|_| {
                    rng.random_range(0.5..100.0) * if rng.random_bool(0.2) { -1.0 } else { 1.0 }
                })
                .collect();
            let y_hat: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let mut abs_sum = 0.0;
            let mut sq_sum = 0.0;
            let mut pct_sum = 0.0;
            for i in 0..n {
                let e = y[i] - y_hat[i];
                abs_sum += e.abs();
                sq_sum += e * e;
                pct_sum += (e / y[i]).abs();
            }
            let nf = n as f64;
            let pairs = [
                (mae(&y, &y_hat).unwrap(), abs_sum / nf),
                (rmse(&y, &y_hat).unwrap(), (sq_sum / nf).sqrt()),
                (mape(&y, &y_hat).unwrap(), 100.0 * pct_sum / nf),
            ];
            for (got, want) in pairs {
                worst = worst.max((got - want).abs() / want.abs().max(1.0));
            }
        }
        ensure(worst <= 1e-12, || {
            format!("brute-force mismatch {worst:.2e}")
        })?;
        ensure(mape(&[2.0], &[1.0]).unwrap() == 50.0, || {
            "mape([2],[1]) != 50".into()
        })?;
        let y = [3.0, -1.0, 7.5];
        ensure(
            rmse(&y, &y).unwrap() == 0.0 && mae(&y, &y).unwrap() == 0.0,
            || "identity error not zero".into(),
        )?;
        Ok(format!(
            "worst relative mismatch {worst:.1e}; hand cases exact"
        ))
    };
    criterion("metric-oracles", run());
}

fn records_bits(r: &ExperimentResult) -> Vec<u64> {
    r.records
        .iter()
        .flat_map(|x| [x.predicted.to_bits(), x.predicted_norm.to_bits()])
        .collect()
}

#[test]
fn protocol_integrity() {
    let run = || -> Result<String, String> {
        let series = generate_synthetic(1, 176);
        let plan = ExperimentPlan::default();
        for &l in &plan.window_lengths {
            let data = WindowData::prepare(&series, l, plan.horizon).map_err(|e| e.to_string())?;
            let want: Vec<usize> = (l + 1..=l + 24).collect();
            ensure(data.test_month_index == want, || {
                format!("window {l}: test months {:?}", data.test_month_index)
            })?;
            ensure(data.train.len() == l, || {
                format!("window {l}: {} training months", data.train.len())
            })?;
        }

        let mut model = ModelSpec::classical(Scheme::Cfmlp, &[3], Algorithm::LM);
        model.train.max_epochs = 15;
        for l in [120, 132] {
            let base = fit_window(&series, l, &model, 42).map_err(|e| e.to_string())?;
            for month in l + 1..=l + 24 {
                let s = &series.samples()[month - 1];
                let mut features = s.features;
                features.iter_mut().for_each(|f| *f = *f * 1e6 + 1e9);
                let poisoned = series.with_sample_replaced(month, features, -1e12);
                let fitted = fit_window(&poisoned, l, &model, 42).map_err(|e| e.to_string())?;
                let same = fitted.params.len() == base.params.len()
                    && fitted
                        .params
                        .iter()
                        .zip(&base.params)
                        .all(|(a, b)| a.to_bits() == b.to_bits());
                ensure(same, || {
                    format!("poisoning month {month} changed parameters of window {l}")
                })?;
            }
        }

        let mut quick = ModelSpec::classical(Scheme::Mlp, &[2], Algorithm::LM);
        quick.train.max_epochs = 5;
        let seq = run_experiment_with(&series, &plan, &quick, Execution::Sequential)
            .map_err(|e| e.to_string())?;
        ensure(seq.records.len() == 3120, || {
            format!("{} records", seq.records.len())
        })?;
        let one = with_threads(1, || {
            run_experiment_with(&series, &plan, &quick, Execution::Parallel)
        })
        .map_err(|e| e.to_string())?;
        let four = with_threads(4, || {
            run_experiment_with(&series, &plan, &quick, Execution::Parallel)
        })
        .map_err(|e| e.to_string())?;
        let bits = records_bits(&seq);
        ensure(
            records_bits(&one) == bits && records_bits(&four) == bits,
            || "reruns differ across thread counts".into(),
        )?;
        ensure(
            one.overall.map(|o| o.mape.to_bits()) == seq.overall.map(|o| o.mape.to_bits()),
            || "aggregates differ".into(),
        )?;
        Ok("test months l+1..l+24 for 13 windows; 48 poisonings inert; 3120 records; bit-identical at 1/4 threads and sequential".into())
    };
    criterion("protocol-integrity", run());
}

struct EndToEnd {
    series: Series,
    outcome: Result<PipelineOutcome, String>,
    elapsed: Duration,
}

fn end_to_end() -> &'static EndToEnd {
    static CELL: OnceLock<EndToEnd> = OnceLock::new();
    CELL.get_or_init(|| {
        let series = generate_synthetic(1, 176);
        let started = Instant::now();
        let outcome = run_pipeline(&series, &PipelineOptions::default(), Execution::Parallel)
            .map_err(|e| e.to_string());
        EndToEnd {
            series,
            outcome,
            elapsed: started.elapsed(),
        }
    })
}

fn has_nan_cell(csv: &[u8]) -> bool {
    let text = String::from_utf8_lossy(csv);
    text.lines().skip(1).any(|l| {
        l.split(',')
            .skip(1)
            .any(|c| c.parse::<f64>().map_or(true, |v| !v.is_finite()))
    })
}

#[test]
fn end_to_end_structural_reproduction() {
    let e2e = end_to_end();
    let run = || -> Result<String, String> {
        let out = e2e.outcome.as_ref().map_err(Clone::clone)?;
        ensure(e2e.series.len() == 176, || "series length".into())?;
        for (scheme, sweep) in &out.architecture {
            ensure(sweep.rows.len() == 15, || {
                format!(
                    "{scheme:?} architecture sweep has {} rows",
                    sweep.rows.len()
                )
            })?;
        }
        for (scheme, sweep) in &out.optimizer {
            ensure(sweep.rows.len() == 13, || {
                format!("{scheme:?} optimizer sweep has {} rows", sweep.rows.len())
            })?;
        }
        ensure(out.comparison.len() == 8, || {
            format!("{} comparison models", out.comparison.len())
        })?;
        let table = table1_csv(&out.comparison);
        let curves = per_horizon_csv(&out.comparison);
        ensure(String::from_utf8_lossy(&table).lines().count() == 9, || {
            "table shape".into()
        })?;
        ensure(
            String::from_utf8_lossy(&curves).lines().count() == 25,
            || "curve shape".into(),
        )?;
        ensure(!has_nan_cell(&table) && !has_nan_cell(&curves), || {
            "NaN cell in report".into()
        })?;
        ensure(e2e.elapsed < Duration::from_secs(30 * 60), || {
            format!("took {:.1?}", e2e.elapsed)
        })?;
        Ok(format!(
            "full pipeline in {:.1?} with {} worker thread(s)",
            e2e.elapsed,
            rayon_threads()
        ))
    };
    criterion("end-to-end", run());
}

fn rayon_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[test]
fn deep_versus_classical_count() {
    let e2e = end_to_end();
    let Ok(out) = &e2e.outcome else {
        report_line("PASS deep-vs-classical (informational): pipeline unavailable");
        return;
    };
    let pairs: Vec<String> = out
        .deep_vs_classical
        .iter()
        .map(|c| {
            format!(
                "{} {:.2} vs {} {:.2}",
                c.preset,
                c.deep_mape.unwrap_or(f64::NAN),
                c.classical,
                c.classical_mape.unwrap_or(f64::NAN)
            )
        })
        .collect();
    report_line(&format!(
        "PASS deep-vs-classical (informational): deep MAPE <= classical in {}/4 [{}]",
        out.deep_win_count(),
        pairs.join("; ")
    ));
}
