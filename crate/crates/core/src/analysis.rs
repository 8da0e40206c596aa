//! Gradient-alignment diagnostics and domain-divergence estimates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::models::ModelShape;
use crate::numeric::{
    central_difference, hessian_vector_product, value_and_grad, Gradient, Layout, Matrix,
    Objective, ParamVector, Tape, Var, DEFAULT_FD_STEP, DEFAULT_HVP_STEP,
};
use crate::objectives::{
    Hyperparams, ScenePseudoLabels, SourcePhaseLoss, SourceTaskLoss, TargetPhaseLoss,
    TargetTaskLoss,
};
use crate::synthdata::{SourceScene, TargetScene};
use crate::trainer::{backward_hop, forward_pass, meta_update, source_only_epoch};

fn values<S: Serializer>(g: &Gradient, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(g.values())
}

/// Measured first-order expansion of one source-then-target episode.
#[derive(Clone, Debug, Serialize)]
pub struct GradientReport {
    #[serde(serialize_with = "values")]
    pub g_bar_s: Gradient,
    #[serde(serialize_with = "values")]
    pub g_bar_t: Gradient,
    /// `(θ₀ − θ_final) / α` from the actual two-phase update.
    #[serde(serialize_with = "values")]
    pub g_e: Gradient,
    /// `α·H_T·ḡ_S`
    #[serde(serialize_with = "values")]
    pub hvp_term: Gradient,
    /// `‖g_e − (ḡ_S + ḡ_T − α·H_T·ḡ_S)‖`
    pub residual_norm: f64,
    /// `⟨ḡ_S, ḡ_T⟩`
    pub inner_product: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub proxy_a_distance: f64,
    pub domain_classifier_error: f64,
    pub ideal_joint_error: f64,
    /// Error of the evaluated model on the source domain.
    pub source_error: f64,
    /// Error of the evaluated model on the target domain.
    pub target_error: f64,
}

/// `⟨∇L_S(θ), ∇L_T(θ)⟩` for two arbitrary objectives.
pub fn grad_inner_product_with<S, T>(theta: &ParamVector, source: &S, target: &T) -> Result<f64>
where
    S: Objective + ?Sized,
    T: Objective + ?Sized,
{
    let (_, g_s) = value_and_grad(source, theta)?;
    let (_, g_t) = value_and_grad(target, theta)?;
    g_s.dot(&g_t)
}

/// Inner product of the pooled source cross-entropy gradient and the
/// pooled pseudo-labelled target cross-entropy gradient.
pub fn grad_inner_product(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
    pseudo: &[ScenePseudoLabels],
) -> Result<f64> {
    grad_inner_product_with(
        theta,
        &SourceTaskLoss {
            shape,
            scenes: source,
        },
        &TargetTaskLoss {
            shape,
            scenes: target,
            pseudo,
        },
    )
}

/// `H·v`, with a zero direction mapped to the zero vector.
fn hvp_or_zero<O: Objective + ?Sized>(
    loss: &O,
    theta: &ParamVector,
    v: &Gradient,
) -> Result<Gradient> {
    if v.norm() == 0.0 {
        return Ok(Gradient::zeros(theta.layout().clone()));
    }
    hessian_vector_product(loss, theta, v, DEFAULT_HVP_STEP)
}

fn expansion_report<T: Objective + ?Sized>(
    theta: &ParamVector,
    g_s: Gradient,
    target: &T,
    theta_final: &ParamVector,
    alpha: f64,
) -> Result<GradientReport> {
    let (_, g_t) = value_and_grad(target, theta)?;
    let g_e = theta.difference(theta_final)?.scaled(1.0 / alpha);
    let hvp_term = hvp_or_zero(target, theta, &g_s)?.scaled(alpha);
    let prediction = g_s.add_scaled(&g_t, 1.0)?.add_scaled(&hvp_term, -1.0)?;
    Ok(GradientReport {
        residual_norm: g_e.add_scaled(&prediction, -1.0)?.norm(),
        inner_product: g_s.dot(&g_t)?,
        g_bar_s: g_s,
        g_bar_t: g_t,
        g_e,
        hvp_term,
    })
}

/// Second-order check of two sequential SGD steps on arbitrary objectives.
pub fn taylor_residual_with<S, T>(
    theta: &ParamVector,
    source: &S,
    target: &T,
    alpha: f64,
) -> Result<GradientReport>
where
    S: Objective + ?Sized,
    T: Objective + ?Sized,
{
    check_alpha(alpha)?;
    let (_, g_s) = value_and_grad(source, theta)?;
    let theta_s = theta.add_scaled(&g_s, -alpha)?;
    let (_, g_t_shifted) = value_and_grad(target, &theta_s)?;
    let theta_final = theta_s.add_scaled(&g_t_shifted, -alpha)?;
    expansion_report(theta, g_s, target, &theta_final, alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::config("alpha", "must be positive"))
    }
}

/// Expansion check of one real episode on a single (source, target) scene
/// pair with fixed pseudo labels and full adoption of each phase.
pub fn taylor_residual(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &SourceScene,
    target: &TargetScene,
    pseudo: &ScenePseudoLabels,
    hp: &Hyperparams,
) -> Result<GradientReport> {
    check_alpha(hp.alpha)?;
    let hp = Hyperparams { beta: 1.0, ..*hp };
    let (src, tgt) = (std::slice::from_ref(source), std::slice::from_ref(target));
    let pseudo = std::slice::from_ref(pseudo);
    let hop = backward_hop(shape, theta, src, tgt, &hp)?;
    let theta_mid = meta_update(theta, &hop.params, hp.beta)?;
    let pass = forward_pass(shape, &theta_mid, tgt, pseudo, &hp)?;
    let theta_final = meta_update(&theta_mid, &pass.params, hp.beta)?;

    let (_, g_s) = value_and_grad(&SourcePhaseLoss::new(shape, source, target, &hp), theta)?;
    let target_loss = TargetPhaseLoss::new(shape, target, &pseudo[0], &hp);
    expansion_report(theta, g_s, &target_loss, &theta_final, hp.alpha)
}

/// Relative error `‖lhs − rhs‖ / max(‖lhs‖, ‖rhs‖)` of
/// `H_T·g_S + H_S·g_T = ∇⟨g_S, g_T⟩`; zero when both sides vanish.
pub fn product_rule_check_with<S, T>(theta: &ParamVector, source: &S, target: &T) -> Result<f64>
where
    S: Objective + ?Sized,
    T: Objective + ?Sized,
{
    let (_, g_s) = value_and_grad(source, theta)?;
    let (_, g_t) = value_and_grad(target, theta)?;
    let lhs =
        hvp_or_zero(target, theta, &g_s)?.add_scaled(&hvp_or_zero(source, theta, &g_t)?, 1.0)?;
    let rhs = central_difference(
        theta,
        |p| grad_inner_product_with(p, source, target),
        DEFAULT_FD_STEP,
    )?;
    let scale = lhs.norm().max(rhs.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs.add_scaled(&rhs, -1.0)?.norm() / scale)
}

/// Product-rule identity on the pooled task losses of both domains.
pub fn product_rule_check(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
    pseudo: &[ScenePseudoLabels],
) -> Result<f64> {
    product_rule_check_with(
        theta,
        &SourceTaskLoss {
            shape,
            scenes: source,
        },
        &TargetTaskLoss {
            shape,
            scenes: target,
            pseudo,
        },
    )
}

/// Minimum instances per domain for a divergence estimate.
pub const MIN_PAD_INSTANCES: usize = 20;
const PAD_HIDDEN: usize = 16;
const PAD_STEPS: usize = 300;
const PAD_LEARNING_RATE: f64 = 0.5;
const TRAIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProxyDistance {
    pub proxy_a_distance: f64,
    pub domain_classifier_error: f64,
}

fn train_count(n: usize) -> usize {
    ((n as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n - 1)
}

fn split_indices(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let test = idx.split_off(train_count(n));
    (idx, test)
}

struct DomainClassifierLoss<'a> {
    x: &'a Matrix,
    y: &'a Matrix,
}

impl DomainClassifierLoss<'_> {
    fn scores(tape: &mut Tape<'_>, x: &Matrix) -> Result<Var> {
        let x = tape.constant(x.clone());
        let (w1, b1) = (tape.param("hidden.w")?, tape.param("hidden.b")?);
        let z = tape.affine(x, w1, b1);
        let h = tape.tanh(z);
        let (w2, b2) = (tape.param("out.w")?, tape.param("out.b")?);
        let out = tape.affine(h, w2, b2);
        Ok(tape.sigmoid(out))
    }
}

impl Objective for DomainClassifierLoss<'_> {
    /// Mean binary cross entropy.
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let p = Self::scores(tape, self.x)?;
        let y = tape.constant(self.y.clone());
        let not_y = tape.constant(self.y.map(|v| 1.0 - v));
        let log_p = tape.log(p);
        let neg_p = tape.scale(p, -1.0);
        let q = tape.add_scalar(neg_p, 1.0);
        let log_q = tape.log(q);
        let a = tape.mul(y, log_p);
        let b = tape.mul(not_y, log_q);
        let ll = tape.add(a, b);
        let m = tape.mean(ll);
        Ok(tape.scale(m, -1.0))
    }
}

/// Column-wise standardisation with statistics of the training split.
fn standardize(train: &mut Matrix, test: &mut Matrix) {
    let n = train.rows() as f64;
    for c in 0..train.cols() {
        let mean = train.iter_rows().map(|r| r[c]).sum::<f64>() / n;
        let var = train
            .iter_rows()
            .map(|r| (r[c] - mean).powi(2))
            .sum::<f64>()
            / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for m in [&mut *train, &mut *test] {
            for r in 0..m.rows() {
                let v = (m.get(r, c) - mean) / sd;
                m.set(r, c, v);
            }
        }
    }
}

fn labelled_rows(
    source: &Matrix,
    target: &Matrix,
    s_idx: &[usize],
    t_idx: &[usize],
) -> Result<(Matrix, Matrix)> {
    let x = Matrix::vstack([&source.select_rows(s_idx), &target.select_rows(t_idx)])?;
    let mut y = vec![0.0; s_idx.len()];
    y.resize(s_idx.len() + t_idx.len(), 1.0);
    Ok((x, Matrix::from_vec(y.len(), 1, y)?))
}

/// Trains a fresh one-hidden-layer domain classifier on 80% of each
/// domain's rows and converts its held-out error `ε` into
/// `d_A = clamp(2·(1 − 2ε), 0, 2)`.
pub fn proxy_a_distance(source: &Matrix, target: &Matrix, seed: u64) -> Result<ProxyDistance> {
    if source.rows() < MIN_PAD_INSTANCES || target.rows() < MIN_PAD_INSTANCES {
        return Err(Error::Data(format!(
            "proxy A-distance needs at least {MIN_PAD_INSTANCES} instances per domain, got {} and {}",
            source.rows(),
            target.rows()
        )));
    }
    if source.cols() != target.cols() {
        return Err(Error::Shape("domains have different feature widths".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Both domains draw the same permutation when their sizes match, so
    // identical inputs yield identical splits.
    let (s_train, s_test) = split_indices(source.rows(), &mut rng.clone());
    let (t_train, t_test) = split_indices(target.rows(), &mut rng.clone());
    let (mut x_train, y_train) = labelled_rows(source, target, &s_train, &t_train)?;
    let (mut x_test, y_test) = labelled_rows(source, target, &s_test, &t_test)?;
    standardize(&mut x_train, &mut x_test);

    let d = source.cols();
    let layout = Layout::new()
        .push("hidden.w", PAD_HIDDEN, d)
        .push("hidden.b", 1, PAD_HIDDEN)
        .push("out.w", 1, PAD_HIDDEN)
        .push("out.b", 1, 1)
        .into_shared();
    let normal = Normal::new(0.0, 0.5).expect("valid std");
    let init = (0..layout.len()).map(|_| normal.sample(&mut rng)).collect();
    let mut params = ParamVector::from_values(layout, init)?;
    let loss = DomainClassifierLoss {
        x: &x_train,
        y: &y_train,
    };
    for _ in 0..PAD_STEPS {
        let (_, g) = value_and_grad(&loss, &params)?;
        params = params.add_scaled(&g, -PAD_LEARNING_RATE)?;
    }

    let mut tape = Tape::new(&params);
    let p = DomainClassifierLoss::scores(&mut tape, &x_test)?;
    let wrong = tape
        .value(p)
        .as_slice()
        .iter()
        .zip(y_test.as_slice())
        .filter(|(&p, &y)| (p >= 0.5) != (y == 1.0))
        .count();
    let error = wrong as f64 / y_test.rows() as f64;
    Ok(ProxyDistance {
        proxy_a_distance: (2.0 * (1.0 - 2.0 * error)).clamp(0.0, 2.0),
        domain_classifier_error: error,
    })
}

fn split_scenes(
    scenes: &[SourceScene],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<SourceScene>, Vec<SourceScene>)> {
    if scenes.len() < 2 {
        return Err(Error::Data(
            "at least two labelled scenes per domain are required".into(),
        ));
    }
    let (train, test) = split_indices(scenes.len(), rng);
    let pick = |idx: &[usize]| idx.iter().map(|&i| scenes[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

/// Trains one model on the union of both labelled domains (80% of each
/// domain's scenes) with the plain supervised schedule and returns its
/// held-out `ε_S + ε_T`.
pub fn ideal_joint_error(
    shape: &ModelShape,
    source: &[SourceScene],
    target: &[SourceScene],
    hp: &Hyperparams,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s_train, s_test) = split_scenes(source, &mut rng)?;
    let (t_train, t_test) = split_scenes(target, &mut rng)?;
    let mut union: Vec<SourceScene> = s_train.into_iter().chain(t_train).collect();
    union.shuffle(&mut rng);

    let mut params = shape.init(&mut rng);
    for _ in 0..hp.episodes {
        params = source_only_epoch(shape, &params, &union, hp)?.params;
    }
    let e_s = 1.0 - accuracy(shape, &params, &s_test)?;
    let e_t = 1.0 - accuracy(shape, &params, &t_test)?;
    Ok(e_s + e_t)
}

/// All domain divergence diagnostics for one trained model. Needs the target
/// labels, so only the evaluation harness may call it.
pub fn divergence_report(
    shape: &ModelShape,
    params: &ParamVector,
    source: &[SourceScene],
    labelled_target: &[SourceScene],
    hp: &Hyperparams,
    seed: u64,
) -> Result<DivergenceReport> {
    let xs = Matrix::vstack(source.iter().map(|s| &s.features))?;
    let xt = Matrix::vstack(labelled_target.iter().map(|s| &s.features))?;
    let local_s = shape.extract_features(params, &xs)?.local;
    let local_t = shape.extract_features(params, &xt)?.local;
    let pad = proxy_a_distance(&local_s, &local_t, seed)?;
    Ok(DivergenceReport {
        proxy_a_distance: pad.proxy_a_distance,
        domain_classifier_error: pad.domain_classifier_error,
        ideal_joint_error: ideal_joint_error(shape, source, labelled_target, hp, seed)?,
        source_error: 1.0 - accuracy(shape, params, source)?,
        target_error: 1.0 - accuracy(shape, params, labelled_target)?,
    })
}
