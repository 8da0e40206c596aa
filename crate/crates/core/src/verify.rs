//! The numerical verification suite behind the `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    grad_inner_product, product_rule_check, product_rule_check_with, taylor_residual,
    taylor_residual_with,
};
use crate::error::Result;
use crate::models::{ModelShape, Reversal, DISC_SEGMENTS, EXTRACTOR_SEGMENTS};
use crate::numeric::tape::LOG_EPS;
use crate::numeric::{
    finite_diff_grad, hessian_vector_product, max_relative_error, value_and_grad, Gradient, Layout,
    Matrix, ParamVector, Tape, Var, DEFAULT_FD_STEP, DEFAULT_HVP_STEP,
};
use crate::objectives::{
    entropy_scene, AdversarialTerm, Hyperparams, ScenePseudoLabels, SourcePhaseLoss,
    SourceTaskLoss, TargetPhaseLoss, TargetTaskLoss,
};
use crate::synthdata::{generate, Dataset, Scenario, ScenarioSpec, SourceScene, TargetScene};
use crate::trainer::{
    cyclic_episode, generate_pseudo_labels, meta_update, run, sgd_step, write_metrics_jsonl,
    Schedule, TrainConfig,
};

/// Seeded configurations in the gradient check.
pub const GRADIENT_CONFIGS: usize = 20;
/// Largest parameter count allowed in the gradient check.
pub const GRADIENT_MAX_PARAMS: usize = 2000;
pub const GRADIENT_TOLERANCE: f64 = 1e-6;
pub const QUADRATIC_TOLERANCE: f64 = 1e-8;
pub const PRODUCT_RULE_QUADRATIC_TOLERANCE: f64 = 1e-6;
pub const PRODUCT_RULE_MLP_TOLERANCE: f64 = 1e-4;
/// Step sizes of the residual scaling fit.
pub const TAYLOR_ALPHAS: [f64; 4] = [2e-2, 1e-2, 5e-3, 2.5e-3];
pub const TAYLOR_SLOPE_RANGE: (f64, f64) = (1.7, 2.3);
pub const TAYLOR_SEEDS: u64 = 10;
pub const GRL_SEEDS: u64 = 10;
pub const PRODUCT_RULE_SEEDS: u64 = 10;

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    /// Fault injection: compute the "reversed" leg of the GRL sign checks
    /// without the reversal.
    pub perturb_grl: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// Human-readable acceptance condition on `measured`.
    pub threshold: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub total: usize,
    pub failed: usize,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn at_most(name: &str, measured: f64, limit: f64) -> Check {
    Check {
        name: name.into(),
        measured,
        threshold: format!("<= {limit:e}"),
        passed: measured <= limit,
    }
}

fn within(name: &str, measured: f64, (lo, hi): (f64, f64)) -> Check {
    Check {
        name: name.into(),
        measured,
        threshold: format!("in [{lo}, {hi}]"),
        passed: (lo..=hi).contains(&measured),
    }
}

/// Count of failing cases out of the whole, which must be zero.
fn no_failures(name: &str, failures: usize) -> Check {
    Check {
        name: name.into(),
        measured: failures as f64,
        threshold: "== 0 failing cases".into(),
        passed: failures == 0,
    }
}

fn errored(name: &str, e: &crate::Error) -> Check {
    Check {
        name: name.into(),
        measured: f64::NAN,
        threshold: format!("error: {e}"),
        passed: false,
    }
}

type CheckFn = fn(VerifyOptions) -> Result<Check>;

/// Runs every check; a check that errors is recorded as failed.
pub fn run_suite(opts: VerifyOptions) -> VerifyReport {
    let suite: Vec<(&str, CheckFn)> = vec![
        ("autodiff_vs_finite_difference", |_| gradient_check()),
        ("hvp_quadratic_exact", |_| hvp_quadratic()),
        ("hvp_symmetry", |_| hvp_symmetry()),
        ("taylor_quadratic_exact", |_| taylor_quadratic()),
        ("taylor_residual_slope", |_| taylor_slope()),
        ("taylor_small_step_relative", |_| taylor_small_step()),
        ("product_rule_quadratic", |_| product_rule_quadratic()),
        ("product_rule_mlp", |_| product_rule_mlp()),
        ("grl_extractor_negation", grl_extractor_negation),
        ("grl_discriminator_unreversed", grl_discriminator_unreversed),
        ("grad_inner_product_symmetry", |_| gip_symmetry()),
        ("meta_update_fixed_point", |_| meta_fixed_point()),
        ("sequential_sgd_equivalence", |_| sequential_equivalence()),
        ("training_determinism", |_| training_determinism()),
        ("probability_normalisation", |_| probability_normalisation()),
        ("entropy_bounds", |_| entropy_bounds()),
    ];
    let checks: Vec<Check> = suite
        .into_iter()
        .map(|(name, f)| f(opts).unwrap_or_else(|e| errored(name, &e)))
        .collect();
    let failed = checks.iter().filter(|c| !c.passed).count();
    VerifyReport {
        passed: failed == 0,
        total: checks.len(),
        failed,
        checks,
    }
}

/// Random features and labels for one scene.
fn random_scene(
    rows: usize,
    d_in: usize,
    outputs: usize,
    rng: &mut ChaCha8Rng,
) -> (SourceScene, TargetScene) {
    let normal = Normal::new(0.0, 1.5).expect("valid std");
    let data = (0..rows * d_in).map(|_| normal.sample(rng)).collect();
    let features = Matrix::from_vec(rows, d_in, data).expect("sized");
    let labels = (0..rows).map(|_| rng.random_range(0..outputs)).collect();
    let data = (0..rows * d_in).map(|_| normal.sample(rng) + 0.5).collect();
    let target = Matrix::from_vec(rows, d_in, data).expect("sized");
    (
        SourceScene {
            scene_id: 0,
            features,
            labels,
        },
        TargetScene {
            scene_id: 0,
            features: target,
        },
    )
}

fn random_shape(rng: &mut ChaCha8Rng) -> ModelShape {
    ModelShape {
        d_in: rng.random_range(2..=6),
        d_low: rng.random_range(2..=10),
        d_high: rng.random_range(2..=10),
        categories: rng.random_range(1..=4),
        disc_hidden: rng.random_range(2..=8),
    }
}

/// Initialisation with a wider spread so that every nonlinearity is
/// exercised away from its linear regime.
fn wide_init(shape: &ModelShape, rng: &mut ChaCha8Rng) -> ParamVector {
    let mut p = shape.init(rng);
    p.values_mut().iter_mut().for_each(|v| *v *= 5.0);
    p
}

fn all_labels(scene: &TargetScene, outputs: usize, rng: &mut ChaCha8Rng) -> ScenePseudoLabels {
    let rows = scene.features.rows();
    ScenePseudoLabels {
        labels: (0..rows).map(|_| rng.random_range(0..outputs)).collect(),
        confidence: vec![1.0; rows],
        retained: (0..rows).map(|_| rng.random_bool(0.7)).collect(),
    }
}

/// Worst autodiff-vs-central-difference error over the seeded
/// configurations, alternating between the two phase losses.
pub fn gradient_check() -> Result<Check> {
    let mut worst = 0.0f64;
    let mut oversized = 0;
    for seed in 0..GRADIENT_CONFIGS as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = random_shape(&mut rng);
        let theta = wide_init(&shape, &mut rng);
        if theta.len() > GRADIENT_MAX_PARAMS {
            oversized += 1;
        }
        let (src, tgt) = random_scene(
            rng.random_range(1..=6),
            shape.d_in,
            shape.outputs(),
            &mut rng,
        );
        let hp = Hyperparams::default();
        let err = if seed % 2 == 0 {
            let loss = SourcePhaseLoss {
                reversal: Reversal::Unreversed,
                ..SourcePhaseLoss::new(&shape, &src, &tgt, &hp)
            };
            compare(&loss, &theta)?
        } else {
            let pseudo = all_labels(&tgt, shape.outputs(), &mut rng);
            compare(&TargetPhaseLoss::new(&shape, &tgt, &pseudo, &hp), &theta)?
        };
        worst = worst.max(err);
    }
    let mut c = at_most("autodiff_vs_finite_difference", worst, GRADIENT_TOLERANCE);
    if oversized > 0 {
        c.passed = false;
        c.threshold +=
            &format!(" ({oversized} configurations over {GRADIENT_MAX_PARAMS} parameters)");
    }
    Ok(c)
}

fn compare<O: crate::numeric::Objective>(loss: &O, theta: &ParamVector) -> Result<f64> {
    let (_, ad) = value_and_grad(loss, theta)?;
    let fd = finite_diff_grad(loss, theta, DEFAULT_FD_STEP)?;
    Ok(max_relative_error(ad.values(), fd.values()))
}

fn flat(values: Vec<f64>) -> ParamVector {
    let layout = Layout::new().push("theta", 1, values.len()).into_shared();
    ParamVector::from_values(layout, values).expect("sized")
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = rng.random_range(-1.0..1.0);
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    m
}

/// `½·θᵀAθ`.
pub fn quadratic(a: Matrix) -> impl for<'t> Fn(&mut Tape<'t>) -> Result<Var> {
    move |tape: &mut Tape<'_>| {
        let theta = tape.param("theta")?;
        let zero = tape.constant(Matrix::zeros(1, a.rows()));
        let w = tape.constant(a.clone());
        let a_theta = tape.affine(theta, w, zero);
        let prod = tape.mul(a_theta, theta);
        let s = tape.sum(prod);
        Ok(tape.scale(s, 0.5))
    }
}

fn random_flat(n: usize, rng: &mut ChaCha8Rng) -> ParamVector {
    flat((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn hvp_quadratic() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let a = random_symmetric(n, &mut rng);
        let theta = random_flat(n, &mut rng);
        let v = random_flat(n, &mut rng);
        let v = Gradient::from_values(theta.layout().clone(), v.into_values())?;
        let hv = hessian_vector_product(&quadratic(a.clone()), &theta, &v, DEFAULT_HVP_STEP)?;
        let exact: Vec<f64> = a
            .iter_rows()
            .map(|r| crate::numeric::matrix::dot(r, v.values()))
            .collect();
        worst = worst.max(max_relative_error(&exact, hv.values()));
    }
    Ok(at_most("hvp_quadratic_exact", worst, QUADRATIC_TOLERANCE))
}

fn detector_case(seed: u64) -> Result<(ModelShape, ParamVector, Dataset, Vec<ScenePseudoLabels>)> {
    let shape = ModelShape::default();
    let theta = shape.init(&mut ChaCha8Rng::seed_from_u64(seed));
    let data = generate(&ScenarioSpec {
        n_source: 1,
        n_target: 1,
        ..ScenarioSpec::preset(Scenario::ShiftGauss, 1000 + seed)
    })?;
    let pseudo = generate_pseudo_labels(&shape, &theta, &data.target, 0.0)?;
    Ok((shape, theta, data, pseudo))
}

/// `|⟨u, Hv⟩ − ⟨v, Hu⟩| / max(|⟨u, Hv⟩|, |⟨v, Hu⟩|)` on the detector's task loss.
fn hvp_symmetry() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let (shape, theta, data, _) = detector_case(seed)?;
        let loss = SourceTaskLoss {
            shape: &shape,
            scenes: &data.source,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = theta.layout().clone();
        let u = Gradient::from_values(
            layout.clone(),
            random_flat(theta.len(), &mut rng).into_values(),
        )?;
        let v = Gradient::from_values(layout, random_flat(theta.len(), &mut rng).into_values())?;
        let uhv = u.dot(&hessian_vector_product(
            &loss,
            &theta,
            &v,
            DEFAULT_HVP_STEP,
        )?)?;
        let vhu = v.dot(&hessian_vector_product(
            &loss,
            &theta,
            &u,
            DEFAULT_HVP_STEP,
        )?)?;
        worst = worst.max((uhv - vhu).abs() / uhv.abs().max(vhu.abs()));
    }
    Ok(at_most("hvp_symmetry", worst, 1e-5))
}

fn taylor_quadratic() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 10;
        let a = random_symmetric(n, &mut rng);
        let b = random_symmetric(n, &mut rng);
        let theta = random_flat(n, &mut rng);
        let r = taylor_residual_with(&theta, &quadratic(a), &quadratic(b), 0.05)?;
        worst = worst.max(r.residual_norm);
    }
    Ok(at_most(
        "taylor_quadratic_exact",
        worst,
        QUADRATIC_TOLERANCE,
    ))
}

fn episode_residual(seed: u64, alpha: f64) -> Result<crate::analysis::GradientReport> {
    let (shape, theta, data, pseudo) = detector_case(seed)?;
    let hp = Hyperparams {
        alpha,
        ..Hyperparams::default()
    };
    taylor_residual(
        &shape,
        &theta,
        &data.source[0],
        &data.target[0],
        &pseudo[0],
        &hp,
    )
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Mean over seeds of the fitted residual-vs-step exponent of one real
/// episode on the detector.
pub fn taylor_slope_mean() -> Result<f64> {
    let mut total = 0.0;
    for seed in 0..TAYLOR_SEEDS {
        let residuals = TAYLOR_ALPHAS
            .iter()
            .map(|&a| episode_residual(seed, a).map(|r| r.residual_norm))
            .collect::<Result<Vec<_>>>()?;
        total += log_log_slope(&TAYLOR_ALPHAS, &residuals);
    }
    Ok(total / TAYLOR_SEEDS as f64)
}

fn taylor_slope() -> Result<Check> {
    Ok(within(
        "taylor_residual_slope",
        taylor_slope_mean()?,
        TAYLOR_SLOPE_RANGE,
    ))
}

fn taylor_small_step() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let r = episode_residual(seed, 1e-2)?;
        worst = worst.max(r.residual_norm / r.g_e.norm());
    }
    Ok(at_most("taylor_small_step_relative", worst, 1e-2))
}

/// Worst relative error of the product-rule identity on quadratic pairs.
pub fn product_rule_quadratic_error() -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let a = random_symmetric(n, &mut rng);
        let b = random_symmetric(n, &mut rng);
        let theta = random_flat(n, &mut rng);
        worst = worst.max(product_rule_check_with(
            &theta,
            &quadratic(a),
            &quadratic(b),
        )?);
    }
    Ok(worst)
}

fn product_rule_quadratic() -> Result<Check> {
    Ok(at_most(
        "product_rule_quadratic",
        product_rule_quadratic_error()?,
        PRODUCT_RULE_QUADRATIC_TOLERANCE,
    ))
}

/// Worst relative error of the product-rule identity on seeded detector
/// task-loss pairs.
pub fn product_rule_mlp_error() -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..PRODUCT_RULE_SEEDS {
        let (shape, theta, data, pseudo) = detector_case(seed)?;
        worst = worst.max(product_rule_check(
            &shape,
            &theta,
            &data.source,
            &data.target,
            &pseudo,
        )?);
    }
    Ok(worst)
}

fn product_rule_mlp() -> Result<Check> {
    Ok(at_most(
        "product_rule_mlp",
        product_rule_mlp_error()?,
        PRODUCT_RULE_MLP_TOLERANCE,
    ))
}

/// Gradients of the adversarial term alone with and without reversal.
/// Under fault injection both legs skip the reversal.
pub fn adversarial_gradients(seed: u64, perturb: bool) -> Result<(Gradient, Gradient)> {
    let (shape, theta, data, _) = detector_case(seed)?;
    let hp = Hyperparams::default();
    let base = SourcePhaseLoss::new(&shape, &data.source[0], &data.target[0], &hp);
    let reversed = SourcePhaseLoss {
        reversal: if perturb {
            Reversal::Unreversed
        } else {
            Reversal::Reversed
        },
        ..base
    };
    let plain = SourcePhaseLoss {
        reversal: Reversal::Unreversed,
        ..base
    };
    let (_, g_rev) = value_and_grad(&AdversarialTerm(reversed), &theta)?;
    let (_, g_plain) = value_and_grad(&AdversarialTerm(plain), &theta)?;
    Ok((g_rev, g_plain))
}

/// Number of seeds on which the extractor gradient through the reversal is
/// not the exact elementwise negation of the plain one (or is all zero).
pub fn grl_negation_failures(perturb: bool) -> Result<usize> {
    let mut failures = 0;
    for seed in 0..GRL_SEEDS {
        let (rev, plain) = adversarial_gradients(seed, perturb)?;
        let mut ok = true;
        let mut nonzero = false;
        for name in EXTRACTOR_SEGMENTS {
            for (r, p) in rev.segment(name)?.iter().zip(plain.segment(name)?) {
                ok &= *r == -*p;
                nonzero |= *p != 0.0;
            }
        }
        failures += usize::from(!(ok && nonzero));
    }
    Ok(failures)
}

fn grl_extractor_negation(opts: VerifyOptions) -> Result<Check> {
    Ok(no_failures(
        "grl_extractor_negation",
        grl_negation_failures(opts.perturb_grl)?,
    ))
}

fn grl_discriminator_unreversed(opts: VerifyOptions) -> Result<Check> {
    let mut failures = 0;
    for seed in 0..GRL_SEEDS {
        let (rev, plain) = adversarial_gradients(seed, opts.perturb_grl)?;
        for name in DISC_SEGMENTS {
            if rev.segment(name)? != plain.segment(name)? {
                failures += 1;
                break;
            }
        }
    }
    Ok(no_failures("grl_discriminator_unreversed", failures))
}

fn gip_symmetry() -> Result<Check> {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let (shape, theta, data, pseudo) = detector_case(seed)?;
        let forward = grad_inner_product(&shape, &theta, &data.source, &data.target, &pseudo)?;
        let s = SourceTaskLoss {
            shape: &shape,
            scenes: &data.source,
        };
        let t = TargetTaskLoss {
            shape: &shape,
            scenes: &data.target,
            pseudo: &pseudo,
        };
        let swapped = crate::analysis::grad_inner_product_with(&theta, &t, &s)?;
        worst = worst.max((forward - swapped).abs());
    }
    Ok(at_most("grad_inner_product_symmetry", worst, 0.0))
}

fn meta_fixed_point() -> Result<Check> {
    let mut failures = 0;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_flat(50, &mut rng);
        let beta = rng.random_range(-1.0..2.0);
        failures += usize::from(meta_update(&theta, &theta, beta)? != theta);
    }
    Ok(no_failures("meta_update_fixed_point", failures))
}

/// Two cyclic episodes with full adoption on one scene per domain versus
/// the explicit four-step SGD trajectory.
fn sequential_equivalence() -> Result<Check> {
    let mut failures = 0;
    for seed in 0..3 {
        let (shape, theta, data, _) = detector_case(seed)?;
        let hp = Hyperparams::default();
        let (s, t) = (&data.source[0], &data.target[0]);
        let mut manual = theta.clone();
        for _ in 0..2 {
            manual = sgd_step(&manual, &SourcePhaseLoss::new(&shape, s, t, &hp), hp.alpha)?.1;
            let pseudo = generate_pseudo_labels(&shape, &manual, &data.target, hp.tau)?;
            manual = sgd_step(
                &manual,
                &TargetPhaseLoss::new(&shape, t, &pseudo[0], &hp),
                hp.alpha,
            )?
            .1;
        }
        let mut cyc = theta;
        for e in 0..2 {
            cyc = cyclic_episode(&shape, &cyc, &data.source, &data.target, &hp, e)?.theta;
        }
        failures += usize::from(cyc != manual);
    }
    Ok(no_failures("sequential_sgd_equivalence", failures))
}

fn training_determinism() -> Result<Check> {
    let data = generate(&ScenarioSpec {
        n_source: 10,
        n_target: 10,
        ..ScenarioSpec::preset(Scenario::Fog, 5)
    })?;
    let cfg = TrainConfig {
        pad_every: 2,
        ..TrainConfig::new(
            Hyperparams {
                episodes: 3,
                ..Hyperparams::default()
            },
            Schedule::Cyclic,
            5,
        )
    };
    let bytes = || -> Result<(Vec<u8>, ParamVector)> {
        let out = run(&cfg, &data.source, &data.target, None)?;
        let mut buf = Vec::new();
        write_metrics_jsonl(&mut buf, &out.metrics).expect("in-memory write");
        Ok((buf, out.params))
    };
    let (a, b) = (bytes()?, bytes()?);
    Ok(no_failures("training_determinism", usize::from(a != b)))
}

fn extreme_cases() -> Result<Vec<Matrix>> {
    let mut out = Vec::new();
    for (seed, scale) in [(0u64, 1.0), (1, 30.0), (2, 1e3)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ModelShape::default();
        let mut theta = shape.init(&mut rng);
        theta.values_mut().iter_mut().for_each(|v| *v *= scale);
        let (src, _) = random_scene(50, shape.d_in, shape.outputs(), &mut rng);
        out.push(shape.predict(&theta, &src.features)?);
    }
    Ok(out)
}

fn probability_normalisation() -> Result<Check> {
    let mut worst = 0.0f64;
    for probs in extreme_cases()? {
        for row in probs.iter_rows() {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(at_most("probability_normalisation", worst, 1e-12))
}

/// Largest violation of `−ln(1+ε) ≤ H ≤ ln(C+1)` by per-instance
/// entropies, `ε` being the smoothing constant inside the logarithm.
fn entropy_bounds() -> Result<Check> {
    let floor = -(1.0 + LOG_EPS).ln();
    let mut worst = 0.0f64;
    for probs in extreme_cases()? {
        let max = (probs.cols() as f64).ln();
        for r in 0..probs.rows() {
            let h = entropy_scene(&probs.select_rows(&[r]));
            worst = worst.max(floor - h).max(h - max);
        }
    }
    Ok(at_most("entropy_bounds", worst, 1e-15))
}
