//! Forward-backward cyclic training.
//!
//! One episode: backward hopping (per-scene SGD on the source-phase loss,
//! starting from the shared parameters), a meta update of the shared
//! parameters toward the hop result, pseudo labelling of every target scene
//! with the updated shared model, forward passing (per-scene SGD on the
//! target-phase loss) and a second meta update.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{grad_inner_product, proxy_a_distance};
use crate::error::{Error, Result};
use crate::eval::{HiddenLabelEvaluator, TargetEvaluator};
use crate::models::ModelShape;
use crate::numeric::{argmax, value_and_grad, Matrix, Objective, ParamVector, Tape, Var};
use crate::objectives::{
    entropy_on_tape, mean_entropy, Hyperparams, ScenePseudoLabels, SourcePhaseLoss, TargetPhaseLoss,
};
use crate::synthdata::{csv_err, generate, ScenarioSpec, SourceScene, TargetScene};

/// Pseudo labels for every target scene, in scene order.
pub type PseudoLabels = Vec<ScenePseudoLabels>;

/// How the shared parameters are driven each episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Backward hopping then forward passing on pseudo labels.
    Cyclic,
    /// One simultaneous step per source scene on the summed objective; no
    /// pseudo labels, no sequential phases.
    Joint,
    /// Plain SGD on source cross entropy.
    SourceOnly,
}

/// Result of one SGD phase.
#[derive(Clone, Debug)]
pub struct PhaseOutcome {
    pub params: ParamVector,
    /// Mean per-step loss over the pass.
    pub mean_loss: f64,
}

pub fn sgd_step<O: Objective + ?Sized>(
    theta: &ParamVector,
    loss: &O,
    alpha: f64,
) -> Result<(f64, ParamVector)> {
    let (value, grad) = value_and_grad(loss, theta)?;
    Ok((value, theta.add_scaled(&grad, -alpha)?))
}

fn require_scenes(source: usize, target: usize) -> Result<()> {
    if source == 0 {
        return Err(Error::Data("at least one source scene is required".into()));
    }
    if target == 0 {
        return Err(Error::Data("at least one target scene is required".into()));
    }
    Ok(())
}

/// One pass of per-scene SGD on the source-phase loss. Source scene `i` is
/// paired with target scene `i mod N_T` for the adversarial term.
pub fn backward_hop(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
    hp: &Hyperparams,
) -> Result<PhaseOutcome> {
    require_scenes(source.len(), target.len())?;
    let mut params = theta.clone();
    let mut total = 0.0;
    for (i, scene) in source.iter().enumerate() {
        let loss = SourcePhaseLoss::new(shape, scene, &target[i % target.len()], hp);
        let (value, next) = sgd_step(&params, &loss, hp.alpha)?;
        total += value;
        params = next;
    }
    Ok(PhaseOutcome {
        params,
        mean_loss: total / source.len() as f64,
    })
}

/// Argmax labels (ties to the lowest index); instances whose top
/// probability is below `tau` are marked as not retained.
pub fn generate_pseudo_labels(
    shape: &ModelShape,
    theta: &ParamVector,
    target: &[TargetScene],
    tau: f64,
) -> Result<PseudoLabels> {
    target
        .iter()
        .map(|scene| {
            let probs = shape.predict(theta, &scene.features)?;
            let labels: Vec<usize> = probs.iter_rows().map(argmax).collect();
            let confidence: Vec<f64> = probs
                .iter_rows()
                .zip(&labels)
                .map(|(row, &l)| row[l])
                .collect();
            let retained = confidence.iter().map(|&c| c >= tau).collect();
            Ok(ScenePseudoLabels {
                labels,
                confidence,
                retained,
            })
        })
        .collect()
}

/// One pass of per-scene SGD on the target-phase loss.
pub fn forward_pass(
    shape: &ModelShape,
    theta: &ParamVector,
    target: &[TargetScene],
    pseudo: &[ScenePseudoLabels],
    hp: &Hyperparams,
) -> Result<PhaseOutcome> {
    if pseudo.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} pseudo-label sets for {} target scenes",
            pseudo.len(),
            target.len()
        )));
    }
    let mut params = theta.clone();
    let mut total = 0.0;
    for (scene, labels) in target.iter().zip(pseudo) {
        let loss = TargetPhaseLoss::new(shape, scene, labels, hp);
        let (value, next) = sgd_step(&params, &loss, hp.alpha)?;
        total += value;
        params = next;
    }
    Ok(PhaseOutcome {
        params,
        mean_loss: if target.is_empty() {
            0.0
        } else {
            total / target.len() as f64
        },
    })
}

/// `θ + β·(θ_phase − θ)`; `β = 1` adopts `θ_phase` exactly.
pub fn meta_update(
    theta: &ParamVector,
    theta_phase: &ParamVector,
    beta: f64,
) -> Result<ParamVector> {
    if !theta.same_layout(theta_phase.layout()) {
        return Err(Error::LayoutMismatch);
    }
    if beta == 1.0 {
        return Ok(theta_phase.clone());
    }
    theta.add_scaled(&theta_phase.difference(theta)?, beta)
}

/// Everything one cyclic episode produced.
#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub episode: usize,
    /// Shared parameters at the end of the episode.
    pub theta: ParamVector,
    /// End of backward hopping.
    pub theta_s: ParamVector,
    /// End of forward passing.
    pub theta_t: ParamVector,
    /// Shared parameters after the source-phase meta update; the pseudo
    /// labels and forward passing start here.
    pub theta_mid: ParamVector,
    pub pseudo_labels: PseudoLabels,
    pub source_loss: f64,
    pub target_loss: f64,
}

pub fn cyclic_episode(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
    hp: &Hyperparams,
    episode: usize,
) -> Result<EpisodeState> {
    let hop = backward_hop(shape, theta, source, target, hp)?;
    let theta_mid = meta_update(theta, &hop.params, hp.beta)?;
    let pseudo_labels = generate_pseudo_labels(shape, &theta_mid, target, hp.tau)?;
    let pass = forward_pass(shape, &theta_mid, target, &pseudo_labels, hp)?;
    let theta_next = meta_update(&theta_mid, &pass.params, hp.beta)?;
    Ok(EpisodeState {
        episode,
        theta: theta_next,
        theta_s: hop.params,
        theta_t: pass.params,
        theta_mid,
        pseudo_labels,
        source_loss: hop.mean_loss,
        target_loss: pass.mean_loss,
    })
}

/// Source-phase loss plus the target minimum-entropy term, evaluated at one
/// point: the objective without the sequential structure.
struct JointLoss<'a> {
    source: SourcePhaseLoss<'a>,
    gamma: f64,
}

impl Objective for JointLoss<'_> {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let src = self.source.build(tape)?;
        if self.gamma == 0.0 {
            return Ok(src);
        }
        let (_, probs) = self
            .source
            .shape
            .probs_on_tape(tape, &self.source.target.features)?;
        let h = entropy_on_tape(tape, probs);
        let h = tape.scale(h, self.gamma);
        Ok(tape.add(src, h))
    }
}

/// One pass of simultaneous (non-cyclic) SGD over the source scenes.
pub fn joint_epoch(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
    hp: &Hyperparams,
) -> Result<PhaseOutcome> {
    require_scenes(source.len(), target.len())?;
    let mut params = theta.clone();
    let mut total = 0.0;
    for (i, scene) in source.iter().enumerate() {
        let loss = JointLoss {
            source: SourcePhaseLoss::new(shape, scene, &target[i % target.len()], hp),
            gamma: hp.gamma,
        };
        let (value, next) = sgd_step(&params, &loss, hp.alpha)?;
        total += value;
        params = next;
    }
    Ok(PhaseOutcome {
        params,
        mean_loss: total / source.len() as f64,
    })
}

/// One pass of SGD on source cross entropy only.
pub fn source_only_epoch(
    shape: &ModelShape,
    theta: &ParamVector,
    source: &[SourceScene],
    hp: &Hyperparams,
) -> Result<PhaseOutcome> {
    if source.is_empty() {
        return Err(Error::Data("at least one source scene is required".into()));
    }
    let ce_only = Hyperparams {
        lambda_adv: 0.0,
        gamma: 0.0,
        ..*hp
    };
    let mut params = theta.clone();
    let mut total = 0.0;
    // The target scene is unused when λ_adv is zero.
    let placeholder = TargetScene {
        scene_id: 0,
        features: Matrix::zeros(0, shape.d_in),
    };
    for scene in source {
        let loss = SourcePhaseLoss::new(shape, scene, &placeholder, &ce_only);
        let (value, next) = sgd_step(&params, &loss, hp.alpha)?;
        total += value;
        params = next;
    }
    Ok(PhaseOutcome {
        params,
        mean_loss: total / source.len() as f64,
    })
}

/// Per-episode record, written as one JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub source_loss: f64,
    pub target_loss: Option<f64>,
    pub grad_inner_product: f64,
    pub source_entropy: f64,
    pub target_entropy: f64,
    pub target_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_label_count: Option<usize>,
    pub proxy_a_distance: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub shape: ModelShape,
    pub hp: Hyperparams,
    pub schedule: Schedule,
    /// Seed of the parameter initialisation.
    pub seed: u64,
    /// Compute the proxy A-distance every `pad_every` episodes (0 = never).
    pub pad_every: usize,
}

impl TrainConfig {
    pub fn new(hp: Hyperparams, schedule: Schedule, seed: u64) -> Self {
        Self {
            shape: ModelShape::default(),
            hp,
            schedule,
            seed,
            pad_every: 0,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<EpisodeMetrics>,
    pub initial_params: ParamVector,
    pub params: ParamVector,
    /// Set when a numeric failure aborted training; `metrics` then holds
    /// the completed episodes and `params` the last accepted parameters.
    pub failure: Option<Error>,
}

/// Low-level features of every instance of both domains.
pub fn local_features(
    shape: &ModelShape,
    params: &ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
) -> Result<(Matrix, Matrix)> {
    let xs = Matrix::vstack(source.iter().map(|s| &s.features))?;
    let xt = Matrix::vstack(target.iter().map(|s| &s.features))?;
    Ok((
        shape.extract_features(params, &xs)?.local,
        shape.extract_features(params, &xt)?.local,
    ))
}

struct EpisodeSummary {
    source_loss: f64,
    target_loss: Option<f64>,
    pseudo_label_count: Option<usize>,
}

fn episode_metrics(
    cfg: &TrainConfig,
    theta: &ParamVector,
    episode: usize,
    summary: EpisodeSummary,
    source: &[SourceScene],
    target: &[TargetScene],
    evaluator: Option<&dyn TargetEvaluator>,
) -> Result<EpisodeMetrics> {
    let shape = &cfg.shape;
    let pseudo = generate_pseudo_labels(shape, theta, target, cfg.hp.tau)?;
    let gip = grad_inner_product(shape, theta, source, target, &pseudo)?;
    let proxy = if cfg.pad_every > 0 && (episode + 1).is_multiple_of(cfg.pad_every) {
        let (ls, lt) = local_features(shape, theta, source, target)?;
        Some(proxy_a_distance(&ls, &lt, cfg.seed.wrapping_add(episode as u64))?.proxy_a_distance)
    } else {
        None
    };
    Ok(EpisodeMetrics {
        episode,
        source_loss: summary.source_loss,
        target_loss: summary.target_loss,
        grad_inner_product: gip,
        source_entropy: mean_entropy(shape, theta, source.iter().map(|s| &s.features))?,
        target_entropy: mean_entropy(shape, theta, target.iter().map(|s| &s.features))?,
        target_accuracy: evaluator
            .map(|e| e.target_accuracy(shape, theta))
            .transpose()?,
        pseudo_label_count: summary.pseudo_label_count,
        proxy_a_distance: proxy,
    })
}

/// Runs `cfg.hp.episodes` episodes from a seeded initialisation.
pub fn run(
    cfg: &TrainConfig,
    source: &[SourceScene],
    target: &[TargetScene],
    evaluator: Option<&dyn TargetEvaluator>,
) -> Result<TrainOutcome> {
    let initial = cfg.shape.init(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    run_from(cfg, initial, source, target, evaluator)
}

/// Like [`run`], starting from explicit parameters.
pub fn run_from(
    cfg: &TrainConfig,
    initial: ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
    evaluator: Option<&dyn TargetEvaluator>,
) -> Result<TrainOutcome> {
    cfg.shape.check_params(&initial)?;
    require_scenes(source.len(), target.len())?;
    let mut theta = initial.clone();
    let mut metrics = Vec::with_capacity(cfg.hp.episodes);
    let mut failure = None;

    for episode in 0..cfg.hp.episodes {
        let step = (|| -> Result<(ParamVector, EpisodeMetrics)> {
            let (next, summary) = match cfg.schedule {
                Schedule::Cyclic => {
                    let st = cyclic_episode(&cfg.shape, &theta, source, target, &cfg.hp, episode)?;
                    let count = st.pseudo_labels.iter().map(|p| p.retained_count()).sum();
                    let summary = EpisodeSummary {
                        source_loss: st.source_loss,
                        target_loss: Some(st.target_loss),
                        pseudo_label_count: Some(count),
                    };
                    (st.theta, summary)
                }
                Schedule::Joint => {
                    let out = joint_epoch(&cfg.shape, &theta, source, target, &cfg.hp)?;
                    let summary = EpisodeSummary {
                        source_loss: out.mean_loss,
                        target_loss: None,
                        pseudo_label_count: None,
                    };
                    (out.params, summary)
                }
                Schedule::SourceOnly => {
                    let out = source_only_epoch(&cfg.shape, &theta, source, &cfg.hp)?;
                    let summary = EpisodeSummary {
                        source_loss: out.mean_loss,
                        target_loss: None,
                        pseudo_label_count: None,
                    };
                    (out.params, summary)
                }
            };
            let m = episode_metrics(cfg, &next, episode, summary, source, target, evaluator)?;
            Ok((next, m))
        })();
        match step {
            Ok((next, m)) => {
                theta = next;
                metrics.push(m);
            }
            Err(e @ (Error::NonFiniteLoss { .. } | Error::NonFiniteParams)) => {
                failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }

    Ok(TrainOutcome {
        metrics,
        initial_params: initial,
        params: theta,
        failure,
    })
}

fn run_scenario(
    spec: &ScenarioSpec,
    hp: &Hyperparams,
    seed: u64,
    schedule: Schedule,
) -> Result<TrainOutcome> {
    let data = generate(spec)?;
    let evaluator = HiddenLabelEvaluator::new(data.target.clone(), data.hidden)?;
    let cfg = TrainConfig {
        shape: ModelShape {
            categories: spec.categories,
            ..ModelShape::default()
        },
        ..TrainConfig::new(*hp, schedule, seed)
    };
    run(&cfg, &data.source, &data.target, Some(&evaluator))
}

/// Cyclic training on a generated scenario, evaluated against its hidden labels.
pub fn train(spec: &ScenarioSpec, hp: &Hyperparams, seed: u64) -> Result<TrainOutcome> {
    run_scenario(spec, hp, seed, Schedule::Cyclic)
}

/// Source-only baseline with the same episode budget.
pub fn train_source_only(spec: &ScenarioSpec, hp: &Hyperparams, seed: u64) -> Result<TrainOutcome> {
    run_scenario(spec, hp, seed, Schedule::SourceOnly)
}

pub fn write_metrics_jsonl<W: Write>(
    mut out: W,
    metrics: &[EpisodeMetrics],
) -> std::io::Result<()> {
    for m in metrics {
        serde_json::to_writer(&mut out, m)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Flat `segment,index,value` CSV of a parameter vector.
pub fn save_params(path: impl AsRef<Path>, params: &ParamVector) -> Result<()> {
    let path = path.as_ref();
    let err = |e| csv_err(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["segment", "index", "value"]).map_err(err)?;
    for seg in params.layout().segments() {
        for (i, v) in params.values()[seg.range()].iter().enumerate() {
            w.write_record([seg.name.as_str(), &i.to_string(), &v.to_string()])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a parameter CSV back into the given model's layout.
pub fn load_params(path: impl AsRef<Path>, shape: &ModelShape) -> Result<ParamVector> {
    let path = path.as_ref();
    let layout = shape.layout().into_shared();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut expected = layout
        .segments()
        .iter()
        .flat_map(|s| (0..s.len()).map(move |i| (s.name.as_str(), i)));
    let mut values = Vec::with_capacity(layout.len());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let (name, idx) = expected
            .next()
            .ok_or_else(|| Error::parse(path, line, "more rows than the model has parameters"))?;
        if &rec[0] != name || rec[1].parse::<usize>().ok() != Some(idx) {
            return Err(Error::parse(path, line, format!("expected {name},{idx}")));
        }
        let v: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid value `{}`", &rec[2])))?;
        values.push(v);
    }
    if values.len() != layout.len() {
        return Err(Error::parse(
            path,
            0,
            format!("{} rows for {} parameters", values.len(), layout.len()),
        ));
    }
    ParamVector::from_values(layout, values)
}
