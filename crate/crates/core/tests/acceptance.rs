//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fbc_core::analysis::proxy_a_distance;
use fbc_core::eval::HiddenLabelEvaluator;
use fbc_core::models::ModelShape;
use fbc_core::objectives::Hyperparams;
use fbc_core::synthdata::{generate, Scenario, ScenarioSpec};
use fbc_core::trainer::{local_features, run, Schedule, TrainConfig, TrainOutcome};
use fbc_core::verify::{
    gradient_check, grl_negation_failures, run_suite, taylor_slope_mean, VerifyOptions,
};

const SEEDS: u64 = 5;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(name: &'static str, passed: bool, detail: String) -> Outcome {
    Outcome {
        name,
        passed,
        detail,
    }
}

#[derive(Clone, Copy)]
enum Variant {
    Full,
    SourceOnly,
    GradientOnly,
    LocalOnly,
    NoDiversity,
}

impl Variant {
    fn config(self, seed: u64) -> TrainConfig {
        let hp = Hyperparams::default();
        let (hp, schedule) = match self {
            Variant::Full => (hp, Schedule::Cyclic),
            Variant::SourceOnly => (hp, Schedule::SourceOnly),
            Variant::GradientOnly => (
                Hyperparams {
                    lambda_adv: 0.0,
                    gamma: 0.0,
                    ..hp
                },
                Schedule::Cyclic,
            ),
            Variant::LocalOnly => (Hyperparams { gamma: 0.0, ..hp }, Schedule::Joint),
            Variant::NoDiversity => (Hyperparams { gamma: 0.0, ..hp }, Schedule::Cyclic),
        };
        TrainConfig::new(hp, schedule, seed)
    }
}

struct Trained {
    accuracy: f64,
    target_entropy: f64,
    gip_first: f64,
    gip_last: f64,
    pad_before: f64,
    pad_after: f64,
    elapsed: Duration,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(
    out: &TrainOutcome,
    data: &fbc_core::synthdata::Dataset,
    seed: u64,
    elapsed: Duration,
    pad: bool,
) -> Trained {
    let m = &out.metrics;
    let last = m.last().expect("episodes ran");
    let k = (m.len() / 10).max(1);
    let gip =
        |r: &[fbc_core::trainer::EpisodeMetrics]| mean(r.iter().map(|e| e.grad_inner_product));
    let distance = |params| {
        let (s, t) =
            local_features(&ModelShape::default(), params, &data.source, &data.target).unwrap();
        proxy_a_distance(&s, &t, seed).unwrap().proxy_a_distance
    };
    Trained {
        accuracy: last.target_accuracy.expect("evaluator attached"),
        target_entropy: last.target_entropy,
        gip_first: gip(&m[..k]),
        gip_last: gip(&m[m.len() - k..]),
        pad_before: if pad {
            distance(&out.initial_params)
        } else {
            f64::NAN
        },
        pad_after: if pad { distance(&out.params) } else { f64::NAN },
        elapsed,
    }
}

fn train(scenario: Scenario, variant: Variant, seed: u64) -> Trained {
    let data = generate(&ScenarioSpec::preset(scenario, seed)).unwrap();
    let evaluator = HiddenLabelEvaluator::new(data.target.clone(), data.hidden.clone()).unwrap();
    let start = Instant::now();
    let out = run(
        &variant.config(seed),
        &data.source,
        &data.target,
        Some(&evaluator),
    )
    .unwrap();
    let elapsed = start.elapsed();
    assert!(out.failure.is_none(), "{:?}", out.failure);
    summarize(&out, &data, seed, elapsed, matches!(variant, Variant::Full))
}

/// Every (scenario, variant) pair over all seeds, one thread per seed.
fn experiments() -> Vec<Vec<(Scenario, &'static str, Trained)>> {
    let plan: [(Scenario, &str, Variant); 7] = [
        (Scenario::ShiftGauss, "full", Variant::Full),
        (Scenario::ShiftGauss, "source_only", Variant::SourceOnly),
        (Scenario::ShiftGauss, "g_only", Variant::GradientOnly),
        (Scenario::ShiftGauss, "l_only", Variant::LocalOnly),
        (Scenario::ShiftGauss, "no_diversity", Variant::NoDiversity),
        (Scenario::Fog, "g_only", Variant::GradientOnly),
        (Scenario::Fog, "l_only", Variant::LocalOnly),
    ];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..SEEDS)
            .map(|seed| {
                s.spawn(move || {
                    plan.iter()
                        .map(|&(sc, name, v)| (sc, name, train(sc, v, seed)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn pick<'a>(
    runs: &'a [Vec<(Scenario, &'static str, Trained)>],
    scenario: Scenario,
    name: &str,
) -> Vec<&'a Trained> {
    runs.iter()
        .map(|seed_runs| {
            seed_runs
                .iter()
                .find(|(sc, n, _)| *sc == scenario && *n == name)
                .map(|(_, _, t)| t)
                .unwrap()
        })
        .collect()
}

fn fbc(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fbc"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let check = gradient_check().unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        "gradient correctness",
        check.measured <= 1e-6 && secs <= 30.0,
        format!(
            "max rel err {:.3e} (<= 1e-6), {secs:.2}s (<= 30s)",
            check.measured
        ),
    )
}

fn taylor_expansion(quadratic: f64) -> Outcome {
    let start = Instant::now();
    let slope = taylor_slope_mean().unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        "taylor expansion",
        quadratic <= 1e-8 && (1.7..=2.3).contains(&slope) && secs <= 60.0,
        format!("quadratic residual {quadratic:.3e} (<= 1e-8), mean slope {slope:.4} in [1.7, 2.3], {secs:.2}s"),
    )
}

fn product_rule(quadratic: f64, mlp: f64) -> Outcome {
    outcome(
        "product rule",
        quadratic <= 1e-6 && mlp <= 1e-4,
        format!("quadratic {quadratic:.3e} (<= 1e-6), mlp {mlp:.3e} (<= 1e-4)"),
    )
}

fn grl_contract() -> Outcome {
    let failures = grl_negation_failures(false).unwrap();
    outcome(
        "grl contract",
        failures == 0,
        format!("{failures} of 10 seeds not exactly negated"),
    )
}

fn efficacy(runs: &[Vec<(Scenario, &'static str, Trained)>]) -> Outcome {
    let full = pick(runs, Scenario::ShiftGauss, "full");
    let base = pick(runs, Scenario::ShiftGauss, "source_only");
    let (a, b) = (
        mean(full.iter().map(|t| t.accuracy)),
        mean(base.iter().map(|t| t.accuracy)),
    );
    let slowest = full
        .iter()
        .chain(&base)
        .map(|t| t.elapsed.as_secs_f64())
        .fold(0.0, f64::max);
    let margin = 100.0 * (a - b);
    outcome(
        "adaptation efficacy",
        margin >= 5.0 && slowest <= 60.0,
        format!("full {a:.4} vs source-only {b:.4}, margin {margin:.2} points (>= 5), slowest run {slowest:.2}s"),
    )
}

fn ablation(runs: &[Vec<(Scenario, &'static str, Trained)>]) -> Outcome {
    let acc = |sc, n| mean(pick(runs, sc, n).iter().map(|t| t.accuracy));
    let (sg, sl) = (
        acc(Scenario::ShiftGauss, "g_only"),
        acc(Scenario::ShiftGauss, "l_only"),
    );
    let (fg, fl) = (acc(Scenario::Fog, "g_only"), acc(Scenario::Fog, "l_only"));
    outcome(
        "ablation ordering",
        sg >= sl && fl >= fg,
        format!("shift-gauss G {sg:.4} >= L {sl:.4}; fog L {fl:.4} >= G {fg:.4}"),
    )
}

fn diversity(runs: &[Vec<(Scenario, &'static str, Trained)>]) -> Outcome {
    let with = pick(runs, Scenario::ShiftGauss, "full");
    let without = pick(runs, Scenario::ShiftGauss, "no_diversity");
    let diff = mean(
        with.iter()
            .zip(&without)
            .map(|(a, b)| a.target_entropy - b.target_entropy),
    );
    let lower = with
        .iter()
        .zip(&without)
        .filter(|(a, b)| a.target_entropy < b.target_entropy)
        .count();
    outcome(
        "diversity effect",
        diff < 0.0,
        format!("mean paired entropy change {diff:.4e} (< 0), lower on {lower} of {SEEDS} seeds"),
    )
}

fn divergence(runs: &[Vec<(Scenario, &'static str, Trained)>]) -> Outcome {
    let full = pick(runs, Scenario::ShiftGauss, "full");
    let diff = mean(full.iter().map(|t| t.pad_after - t.pad_before));
    let lower = full.iter().filter(|t| t.pad_after < t.pad_before).count();
    outcome(
        "divergence diagnostic",
        diff < 0.0,
        format!("mean paired proxy A-distance change {diff:.4} (< 0), lower on {lower} of {SEEDS} seeds"),
    )
}

fn alignment_trend(runs: &[Vec<(Scenario, &'static str, Trained)>]) -> Outcome {
    let full = pick(runs, Scenario::ShiftGauss, "full");
    let rising = full.iter().filter(|t| t.gip_last > t.gip_first).count();
    outcome(
        "gradient alignment trend",
        rising >= 4,
        format!("final 10% above first 10% in {rising} of {SEEDS} runs (>= 4)"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let commands = [
        "gen-data --scenario fog --seed 3 --out data",
        "train --source data/source.csv --target data/target.csv --hidden-labels data/hidden_labels.csv \
         --episodes 6 --pad-every 3 --seed 3 --metrics m.jsonl --params p.csv --divergence-report div.json",
        "verify --report verify.json",
        "report m.jsonl --verify verify.json --csv report.csv",
    ];
    let files = [
        "data/source.csv",
        "data/target.csv",
        "data/hidden_labels.csv",
        "m.jsonl",
        "p.csv",
        "div.json",
        "verify.json",
        "report.csv",
    ];
    let invoke = |sub: &str| {
        let d = dir.path().join(sub);
        std::fs::create_dir(&d).unwrap();
        let stdout: Vec<Vec<u8>> = commands
            .iter()
            .map(|c| {
                let o = fbc(&c.split_whitespace().collect::<Vec<_>>(), &d);
                assert_eq!(
                    o.status.code(),
                    Some(0),
                    "{c}: {}",
                    String::from_utf8_lossy(&o.stderr)
                );
                o.stdout
            })
            .collect();
        let contents: Vec<Vec<u8>> = files
            .iter()
            .map(|f| std::fs::read(d.join(f)).unwrap())
            .collect();
        (stdout, contents)
    };
    let (a, b) = (invoke("a"), invoke("b"));
    let mut differing: Vec<String> = files
        .iter()
        .zip(a.1.iter().zip(&b.1))
        .filter(|(_, (x, y))| x != y)
        .map(|(f, _)| f.to_string())
        .collect();
    differing.extend(
        commands
            .iter()
            .zip(a.0.iter().zip(&b.0))
            .filter(|(_, (x, y))| x != y)
            .map(|(c, _)| format!("stdout of `{}`", c.split_whitespace().next().unwrap())),
    );
    outcome(
        "determinism",
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "{} output files and all stdout byte-identical across two invocations",
                files.len()
            )
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn verify_suite() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = fbc(&["verify"], dir.path());
    let secs = start.elapsed().as_secs_f64();
    let code = o.status.code();
    outcome(
        "verify suite",
        code == Some(0) && secs <= 120.0,
        format!("exit {code:?}, {secs:.2}s (<= 120s)"),
    )
}

#[test]
fn acceptance() {
    let suite = run_suite(VerifyOptions::default());
    let measured = |n: &str| suite.check(n).unwrap().measured;

    let runs = experiments();
    let results = [
        gradient_correctness(),
        taylor_expansion(measured("taylor_quadratic_exact")),
        product_rule(
            measured("product_rule_quadratic"),
            measured("product_rule_mlp"),
        ),
        grl_contract(),
        efficacy(&runs),
        ablation(&runs),
        diversity(&runs),
        divergence(&runs),
        alignment_trend(&runs),
        determinism(),
        verify_suite(),
    ];
    for (i, r) in results.iter().enumerate() {
        println!(
            "[{}] {:>2}. {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            i + 1,
            r.name,
            r.detail
        );
    }
    let failed: Vec<&str> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.name)
        .collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
