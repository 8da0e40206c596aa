//! Loss terms and the per-phase objectives of the cyclic trainer.
//!
//! Every entropy and cross entropy here is a mean over instances. The
//! adversarial term uses the least-squares form with source scored toward 0
//! and target toward 1, each side normalised by its own instance count.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{grl, ModelShape, Reversal};
use crate::numeric::tape::LOG_EPS;
use crate::numeric::{Matrix, Objective, Tape, Var};
use crate::synthdata::{SourceScene, TargetScene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Inner SGD learning rate.
    pub alpha: f64,
    /// Meta-update interpolation rate.
    pub beta: f64,
    /// Diversity (entropy) weight.
    pub gamma: f64,
    /// Adversarial weight.
    pub lambda_adv: f64,
    /// Number of episodes.
    pub episodes: usize,
    /// Pseudo-label confidence threshold.
    pub tau: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 1.0,
            gamma: 0.1,
            lambda_adv: 0.5,
            episodes: 30,
            tau: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be non-negative"));
        }
        if !(self.lambda_adv >= 0.0 && self.lambda_adv.is_finite()) {
            return Err(Error::config("lambda_adv", "must be non-negative"));
        }
        if self.episodes < 1 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Pseudo labels for one target scene.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePseudoLabels {
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
    /// Instances whose confidence reached the threshold.
    pub retained: Vec<bool>,
}

impl ScenePseudoLabels {
    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    fn picks(&self, row_offset: usize) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .zip(&self.retained)
            .enumerate()
            .filter(|(_, (_, &keep))| keep)
            .map(|(i, (&l, _))| (row_offset + i, l))
            .collect()
    }
}

fn check_labels(labels: &[usize], rows: usize, categories: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{} labels for {rows} instances",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= categories) {
        return Err(Error::Label {
            label: bad,
            categories,
        });
    }
    Ok(())
}

/// Mean over instances of `−ln(p[label] + ε)`.
pub fn cross_entropy_scene(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(labels, probs.rows(), probs.cols())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -(probs.get(i, l) + LOG_EPS).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean over instances of `−Σ_c p_c ln(p_c + ε)`.
pub fn entropy_scene(probs: &Matrix) -> f64 {
    if probs.rows() == 0 {
        return 0.0;
    }
    let total: f64 = probs
        .iter_rows()
        .map(|row| -row.iter().map(|&p| p * (p + LOG_EPS).ln()).sum::<f64>())
        .sum();
    total / probs.rows() as f64
}

/// `½·mean(s_S²) + ½·mean((1 − s_T)²)`.
pub fn adversarial_loss(scores_source: &[f64], scores_target: &[f64]) -> f64 {
    let mean = |xs: &[f64], f: &dyn Fn(f64) -> f64| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().map(|&x| f(x)).sum::<f64>() / xs.len() as f64
        }
    };
    0.5 * mean(scores_source, &|s| s * s) + 0.5 * mean(scores_target, &|t| (1.0 - t) * (1.0 - t))
}

/// Mean cross entropy over the `(row, label)` picks of a probability node.
pub fn cross_entropy_on_tape(tape: &mut Tape<'_>, probs: Var, picks: Vec<(usize, usize)>) -> Var {
    let p = tape.pick(probs, picks);
    let logp = tape.log(p);
    let m = tape.mean(logp);
    tape.scale(m, -1.0)
}

/// Mean row entropy of a probability node.
pub fn entropy_on_tape(tape: &mut Tape<'_>, probs: Var) -> Var {
    let rows = tape.value(probs).rows().max(1);
    let logp = tape.log(probs);
    let plogp = tape.mul(probs, logp);
    let s = tape.sum(plogp);
    tape.scale(s, -1.0 / rows as f64)
}

pub fn adversarial_on_tape(tape: &mut Tape<'_>, scores_source: Var, scores_target: Var) -> Var {
    let sq_s = tape.square(scores_source);
    let term_s = tape.mean(sq_s);
    let neg_t = tape.scale(scores_target, -1.0);
    let one_minus_t = tape.add_scalar(neg_t, 1.0);
    let sq_t = tape.square(one_minus_t);
    let term_t = tape.mean(sq_t);
    let sum = tape.add(term_s, term_t);
    tape.scale(sum, 0.5)
}

fn weighted_sum(tape: &mut Tape<'_>, terms: &[(Var, f64)]) -> Var {
    let mut acc: Option<Var> = None;
    for &(v, w) in terms {
        let scaled = if w == 1.0 { v } else { tape.scale(v, w) };
        acc = Some(match acc {
            None => scaled,
            Some(a) => tape.add(a, scaled),
        });
    }
    acc.expect("at least one term")
}

/// Backward-hopping loss for one (source, target) scene pair:
/// `CE(source) + λ_adv·L_adv(source, target) − γ·H(source)`.
#[derive(Clone, Copy, Debug)]
pub struct SourcePhaseLoss<'a> {
    pub shape: &'a ModelShape,
    pub source: &'a SourceScene,
    pub target: &'a TargetScene,
    pub lambda_adv: f64,
    pub gamma: f64,
    pub reversal: Reversal,
}

impl<'a> SourcePhaseLoss<'a> {
    pub fn new(
        shape: &'a ModelShape,
        source: &'a SourceScene,
        target: &'a TargetScene,
        hp: &Hyperparams,
    ) -> Self {
        Self {
            shape,
            source,
            target,
            lambda_adv: hp.lambda_adv,
            gamma: hp.gamma,
            reversal: Reversal::Reversed,
        }
    }

    /// Tape nodes for the three components `(ce, adv, entropy)`; `adv` is
    /// absent when λ_adv is zero.
    pub fn components(&self, tape: &mut Tape<'_>) -> Result<(Var, Option<Var>, Var)> {
        let shape = self.shape;
        check_labels(
            &self.source.labels,
            self.source.features.rows(),
            shape.outputs(),
        )?;
        let (feats, probs) = shape.probs_on_tape(tape, &self.source.features)?;
        let picks = self.source.labels.iter().copied().enumerate().collect();
        let ce = cross_entropy_on_tape(tape, probs, picks);
        let entropy = entropy_on_tape(tape, probs);

        let adv = if self.lambda_adv != 0.0 {
            let target = shape.features_on_tape(tape, &self.target.features)?;
            let (local_s, local_t) = match self.reversal {
                Reversal::Reversed => (grl(tape, feats.local), grl(tape, target.local)),
                Reversal::Unreversed => (feats.local, target.local),
            };
            let d_s = shape.discriminate_on_tape(tape, local_s)?;
            let d_t = shape.discriminate_on_tape(tape, local_t)?;
            Some(adversarial_on_tape(tape, d_s, d_t))
        } else {
            None
        };
        Ok((ce, adv, entropy))
    }
}

impl Objective for SourcePhaseLoss<'_> {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let (ce, adv, entropy) = self.components(tape)?;
        let mut terms = vec![(ce, 1.0)];
        if let Some(adv) = adv {
            terms.push((adv, self.lambda_adv));
        }
        if self.gamma != 0.0 {
            terms.push((entropy, -self.gamma));
        }
        Ok(weighted_sum(tape, &terms))
    }
}

/// The unweighted adversarial component of a source-phase loss on its own.
#[derive(Clone, Copy, Debug)]
pub struct AdversarialTerm<'a>(pub SourcePhaseLoss<'a>);

impl Objective for AdversarialTerm<'_> {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let (_, adv, _) = self.0.components(tape)?;
        adv.ok_or_else(|| Error::config("lambda_adv", "adversarial term is disabled"))
    }
}

/// Forward-passing loss for one target scene:
/// `CE(retained pseudo labels) + γ·H(all instances)`.
#[derive(Clone, Copy, Debug)]
pub struct TargetPhaseLoss<'a> {
    pub shape: &'a ModelShape,
    pub target: &'a TargetScene,
    pub pseudo: &'a ScenePseudoLabels,
    pub gamma: f64,
}

impl<'a> TargetPhaseLoss<'a> {
    pub fn new(
        shape: &'a ModelShape,
        target: &'a TargetScene,
        pseudo: &'a ScenePseudoLabels,
        hp: &Hyperparams,
    ) -> Self {
        Self {
            shape,
            target,
            pseudo,
            gamma: hp.gamma,
        }
    }

    pub fn components(&self, tape: &mut Tape<'_>) -> Result<(Var, Var)> {
        let rows = self.target.features.rows();
        check_labels(&self.pseudo.labels, rows, self.shape.outputs())?;
        if self.pseudo.retained.len() != rows {
            return Err(Error::Shape(
                "pseudo-label mask length differs from scene".into(),
            ));
        }
        let (_, probs) = self.shape.probs_on_tape(tape, &self.target.features)?;
        let ce = cross_entropy_on_tape(tape, probs, self.pseudo.picks(0));
        let entropy = entropy_on_tape(tape, probs);
        Ok((ce, entropy))
    }
}

impl Objective for TargetPhaseLoss<'_> {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let (ce, entropy) = self.components(tape)?;
        if self.gamma == 0.0 {
            return Ok(ce);
        }
        Ok(weighted_sum(tape, &[(ce, 1.0), (entropy, self.gamma)]))
    }
}

/// Pooled cross entropy over every labelled source instance.
#[derive(Clone, Copy, Debug)]
pub struct SourceTaskLoss<'a> {
    pub shape: &'a ModelShape,
    pub scenes: &'a [SourceScene],
}

impl Objective for SourceTaskLoss<'_> {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        let x = Matrix::vstack(self.scenes.iter().map(|s| &s.features))?;
        let mut picks = Vec::with_capacity(x.rows());
        for s in self.scenes {
            check_labels(&s.labels, s.features.rows(), self.shape.outputs())?;
            let off = picks.len();
            picks.extend(s.labels.iter().enumerate().map(|(i, &l)| (off + i, l)));
        }
        let (_, probs) = self.shape.probs_on_tape(tape, &x)?;
        Ok(cross_entropy_on_tape(tape, probs, picks))
    }
}

/// Pooled cross entropy over every retained pseudo-labelled target instance.
#[derive(Clone, Copy, Debug)]
pub struct TargetTaskLoss<'a> {
    pub shape: &'a ModelShape,
    pub scenes: &'a [TargetScene],
    pub pseudo: &'a [ScenePseudoLabels],
}

impl Objective for TargetTaskLoss<'_> {
    fn build(&self, tape: &mut Tape<'_>) -> Result<Var> {
        if self.pseudo.len() != self.scenes.len() {
            return Err(Error::Shape(
                "one pseudo-label set per target scene required".into(),
            ));
        }
        let x = Matrix::vstack(self.scenes.iter().map(|s| &s.features))?;
        let mut picks = Vec::new();
        let mut off = 0;
        for (s, p) in self.scenes.iter().zip(self.pseudo) {
            check_labels(&p.labels, s.features.rows(), self.shape.outputs())?;
            picks.extend(p.picks(off));
            off += s.features.rows();
        }
        let (_, probs) = self.shape.probs_on_tape(tape, &x)?;
        Ok(cross_entropy_on_tape(tape, probs, picks))
    }
}

/// `−H(source predictions) + H(target predictions)`, pooled over instances.
pub fn diversity_value(
    shape: &ModelShape,
    params: &crate::numeric::ParamVector,
    source: &[SourceScene],
    target: &[TargetScene],
) -> Result<f64> {
    let h_s = mean_entropy(shape, params, source.iter().map(|s| &s.features))?;
    let h_t = mean_entropy(shape, params, target.iter().map(|s| &s.features))?;
    Ok(-h_s + h_t)
}

/// Mean prediction entropy over all instances of the given scenes.
pub fn mean_entropy<'a>(
    shape: &ModelShape,
    params: &crate::numeric::ParamVector,
    scenes: impl IntoIterator<Item = &'a Matrix>,
) -> Result<f64> {
    let x = Matrix::vstack(scenes)?;
    if x.rows() == 0 {
        return Ok(0.0);
    }
    Ok(entropy_scene(&shape.predict(params, &x)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{evaluate, value_and_grad, ParamVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    fn one_hot(labels: &[usize], classes: usize) -> Matrix {
        let mut m = Matrix::zeros(labels.len(), classes);
        for (i, &l) in labels.iter().enumerate() {
            m.set(i, l, 1.0);
        }
        m
    }

    fn random_probs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let u = Uniform::new(0.01, 1.0).unwrap();
        let mut m = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let row: Vec<f64> = (0..cols).map(|_| u.sample(rng)).collect();
            let s: f64 = row.iter().sum();
            for (c, v) in row.iter().enumerate() {
                m.set(r, c, v / s);
            }
        }
        m
    }

    fn scenes(seed: u64, k: usize) -> (ModelShape, ParamVector, SourceScene, TargetScene) {
        let shape = ModelShape::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = shape.init(&mut rng);
        let n = Normal::new(0.0, 1.5).unwrap();
        let src = SourceScene {
            scene_id: 0,
            features: Matrix::from_vec(k, 6, (0..k * 6).map(|_| n.sample(&mut rng)).collect())
                .unwrap(),
            labels: (0..k).map(|i| i % 4).collect(),
        };
        let tgt = TargetScene {
            scene_id: 0,
            features: Matrix::from_vec(
                k + 2,
                6,
                (0..(k + 2) * 6).map(|_| n.sample(&mut rng)).collect(),
            )
            .unwrap(),
        };
        (shape, params, src, tgt)
    }

    #[test]
    fn cross_entropy_extremes() {
        let probs = one_hot(&[0, 3, 2], 4);
        assert!(cross_entropy_scene(&probs, &[0, 3, 2]).unwrap() <= 1e-11);
        let uniform = Matrix::filled(5, 4, 0.25);
        let ce = cross_entropy_scene(&uniform, &[0, 1, 2, 3, 0]).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn cross_entropy_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = random_probs(&mut rng, 6, 4);
        let labels = [3, 1, 0, 2, 2, 3];
        let mut oracle = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            oracle -= (probs.get(i, l) + 1e-12).ln();
        }
        oracle /= 6.0;
        assert!((cross_entropy_scene(&probs, &labels).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_labels() {
        let probs = Matrix::filled(2, 4, 0.25);
        assert!(matches!(
            cross_entropy_scene(&probs, &[0, 4]),
            Err(Error::Label {
                label: 4,
                categories: 4
            })
        ));
    }

    #[test]
    fn entropy_bounds_and_extremes() {
        assert!(entropy_scene(&one_hot(&[1, 2], 4)).abs() <= 1e-10);
        assert!((entropy_scene(&Matrix::filled(3, 4, 0.25)) - 4f64.ln()).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let h = entropy_scene(&random_probs(&mut rng, 4, 4));
            assert!((0.0..=4f64.ln() + 1e-12).contains(&h));
        }
    }

    #[test]
    fn adversarial_loss_values() {
        assert_eq!(adversarial_loss(&[0.0; 3], &[1.0; 5]), 0.0);
        assert!((adversarial_loss(&[0.5; 3], &[0.5; 5]) - 0.25).abs() < 1e-15);
        assert_eq!(adversarial_loss(&[1.0; 3], &[0.0; 5]), 1.0);
    }

    #[test]
    fn source_phase_reduces_to_cross_entropy() {
        let (shape, params, src, tgt) = scenes(3, 5);
        let hp = Hyperparams {
            lambda_adv: 0.0,
            gamma: 0.0,
            ..Hyperparams::default()
        };
        let loss = evaluate(&SourcePhaseLoss::new(&shape, &src, &tgt, &hp), &params).unwrap();
        let probs = shape.predict(&params, &src.features).unwrap();
        let ce = cross_entropy_scene(&probs, &src.labels).unwrap();
        assert!((loss - ce).abs() < 1e-14);
    }

    #[test]
    fn entropy_bonus_lowers_source_loss_by_gamma_h() {
        let (shape, params, src, tgt) = scenes(4, 5);
        let without = Hyperparams {
            gamma: 0.0,
            ..Hyperparams::default()
        };
        let with = Hyperparams {
            gamma: 0.3,
            ..Hyperparams::default()
        };
        let a = evaluate(&SourcePhaseLoss::new(&shape, &src, &tgt, &without), &params).unwrap();
        let b = evaluate(&SourcePhaseLoss::new(&shape, &src, &tgt, &with), &params).unwrap();
        let h = entropy_scene(&shape.predict(&params, &src.features).unwrap());
        assert!(b < a);
        assert!(((a - b) - 0.3 * h).abs() < 1e-13);
    }

    #[test]
    fn source_phase_is_sum_of_parts() {
        let (shape, params, src, tgt) = scenes(5, 7);
        let hp = Hyperparams::default();
        let loss = evaluate(&SourcePhaseLoss::new(&shape, &src, &tgt, &hp), &params).unwrap();
        let probs = shape.predict(&params, &src.features).unwrap();
        let fs = shape.extract_features(&params, &src.features).unwrap();
        let ft = shape.extract_features(&params, &tgt.features).unwrap();
        let ds = shape.domain_discriminate(&params, &fs.local).unwrap();
        let dt = shape.domain_discriminate(&params, &ft.local).unwrap();
        let oracle = cross_entropy_scene(&probs, &src.labels).unwrap()
            + 0.5 * adversarial_loss(&ds, &dt)
            - 0.1 * entropy_scene(&probs);
        assert!((loss - oracle).abs() < 1e-13, "{loss} vs {oracle}");
    }

    fn pseudo_for(probs: &Matrix, tau: f64) -> ScenePseudoLabels {
        let labels: Vec<usize> = probs.iter_rows().map(crate::numeric::argmax).collect();
        let confidence: Vec<f64> = probs.iter_rows().zip(&labels).map(|(r, &l)| r[l]).collect();
        let retained = confidence.iter().map(|&c| c >= tau).collect();
        ScenePseudoLabels {
            labels,
            confidence,
            retained,
        }
    }

    #[test]
    fn target_phase_is_sum_of_parts() {
        let (shape, params, _, tgt) = scenes(6, 6);
        let probs = shape.predict(&params, &tgt.features).unwrap();
        let mut pseudo = pseudo_for(&probs, 0.0);
        pseudo.retained[1] = false;
        pseudo.retained[4] = false;
        let hp = Hyperparams::default();
        let loss = evaluate(&TargetPhaseLoss::new(&shape, &tgt, &pseudo, &hp), &params).unwrap();
        let kept: Vec<usize> = (0..probs.rows()).filter(|&i| pseudo.retained[i]).collect();
        let kept_labels: Vec<usize> = kept.iter().map(|&i| pseudo.labels[i]).collect();
        let oracle = cross_entropy_scene(&probs.select_rows(&kept), &kept_labels).unwrap()
            + 0.1 * entropy_scene(&probs);
        assert!((loss - oracle).abs() < 1e-13);

        let no_gamma = Hyperparams { gamma: 0.0, ..hp };
        let ce_only = evaluate(
            &TargetPhaseLoss::new(&shape, &tgt, &pseudo, &no_gamma),
            &params,
        )
        .unwrap();
        assert!(
            (ce_only - cross_entropy_scene(&probs.select_rows(&kept), &kept_labels).unwrap()).abs()
                < 1e-13
        );
    }

    #[test]
    fn target_phase_with_empty_retained_set_and_no_gamma_is_flat() {
        let (shape, params, _, tgt) = scenes(7, 4);
        let probs = shape.predict(&params, &tgt.features).unwrap();
        let pseudo = pseudo_for(&probs, 1.0);
        assert_eq!(pseudo.retained_count(), 0);
        let hp = Hyperparams {
            gamma: 0.0,
            ..Hyperparams::default()
        };
        let (v, g) =
            value_and_grad(&TargetPhaseLoss::new(&shape, &tgt, &pseudo, &hp), &params).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn diversity_value_signs() {
        let shape = ModelShape::default();
        let (_, params, src, _) = scenes(8, 5);
        // identical predictions on both sides cancel
        let same_target = TargetScene {
            scene_id: 0,
            features: src.features.clone(),
        };
        let d =
            diversity_value(&shape, &params, std::slice::from_ref(&src), &[same_target]).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn diversity_extremes_from_entropies() {
        let uniform = entropy_scene(&Matrix::filled(4, 4, 0.25));
        let confident = entropy_scene(&one_hot(&[0, 1, 2, 3], 4));
        assert!(((-confident + uniform) - 4f64.ln()).abs() < 1e-10);
        assert!(((-uniform + confident) + 4f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let bad = Hyperparams {
            tau: 1.5,
            ..Hyperparams::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { key, .. }) if key == "tau"));
    }
}
