//! The miniature detector and its per-instance domain classifier.
//!
//! All weights live in one [`ParamVector`]: the detector stages
//! (`low`, `high`, `head`) followed by the domain classifier (`disc.*`).
//! A scene is a `K x d_in` matrix, one row per instance; the domain
//! classifier scores each instance's low-level feature independently, the
//! way a convolutional discriminator scores each spatial location.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{Layout, Matrix, ParamVector, Tape, Var};

pub const LOW_W: &str = "low.w";
pub const LOW_B: &str = "low.b";
pub const HIGH_W: &str = "high.w";
pub const HIGH_B: &str = "high.b";
pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";
pub const DISC_HIDDEN_W: &str = "disc.hidden.w";
pub const DISC_HIDDEN_B: &str = "disc.hidden.b";
pub const DISC_OUT_W: &str = "disc.out.w";
pub const DISC_OUT_B: &str = "disc.out.b";

/// Segments that make up the feature extractor.
pub const EXTRACTOR_SEGMENTS: [&str; 4] = [LOW_W, LOW_B, HIGH_W, HIGH_B];
pub const HEAD_SEGMENTS: [&str; 2] = [HEAD_W, HEAD_B];
pub const DISC_SEGMENTS: [&str; 4] = [DISC_HIDDEN_W, DISC_HIDDEN_B, DISC_OUT_W, DISC_OUT_B];

pub const INIT_STD: f64 = 0.1;

/// Architecture sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub d_in: usize,
    pub d_low: usize,
    pub d_high: usize,
    /// Foreground categories; the head has one extra background output.
    pub categories: usize,
    pub disc_hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        Self {
            d_in: 6,
            d_low: 16,
            d_high: 16,
            categories: 3,
            disc_hidden: 16,
        }
    }
}

impl ModelShape {
    /// Number of head outputs, `C + 1`.
    pub fn outputs(&self) -> usize {
        self.categories + 1
    }

    /// Index of the background category.
    pub fn background(&self) -> usize {
        self.categories
    }

    pub fn layout(&self) -> Layout {
        Layout::new()
            .push(LOW_W, self.d_low, self.d_in)
            .push(LOW_B, 1, self.d_low)
            .push(HIGH_W, self.d_high, self.d_low)
            .push(HIGH_B, 1, self.d_high)
            .push(HEAD_W, self.outputs(), self.d_high)
            .push(HEAD_B, 1, self.outputs())
            .push(DISC_HIDDEN_W, self.disc_hidden, self.d_low)
            .push(DISC_HIDDEN_B, 1, self.disc_hidden)
            .push(DISC_OUT_W, 1, self.disc_hidden)
            .push(DISC_OUT_B, 1, 1)
    }

    /// Every weight drawn from `N(0, INIT_STD²)`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let layout = self.layout().into_shared();
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let values = (0..layout.len()).map(|_| normal.sample(rng)).collect();
        ParamVector::from_values(layout, values).expect("layout length")
    }

    pub fn check_params(&self, params: &ParamVector) -> Result<()> {
        if **params.layout() != self.layout() {
            return Err(Error::LayoutMismatch);
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.d_in {
            return Err(Error::Shape(format!(
                "instance features have length {}, expected {}",
                x.cols(),
                self.d_in
            )));
        }
        Ok(())
    }
}

/// Whether the adversarial path into the extractor passes through the
/// gradient reversal layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reversal {
    Reversed,
    /// Plain backpropagation; used to compare against the reversed path.
    Unreversed,
}

/// Gradient reversal layer on a tape.
pub fn grl(tape: &mut Tape<'_>, x: Var) -> Var {
    tape.grad_reverse(x)
}

/// Tape handles for one scene's features.
#[derive(Clone, Copy, Debug)]
pub struct FeatureVars {
    pub local: Var,
    pub high: Var,
}

/// Per-instance features in plain matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSplit {
    /// `K x d_low`
    pub local: Matrix,
    /// `K x d_high`
    pub high: Matrix,
}

impl ModelShape {
    pub fn features_on_tape(&self, tape: &mut Tape<'_>, x: &Matrix) -> Result<FeatureVars> {
        self.check_input(x)?;
        let x = tape.constant(x.clone());
        let (w1, b1) = (tape.param(LOW_W)?, tape.param(LOW_B)?);
        let z1 = tape.affine(x, w1, b1);
        let local = tape.tanh(z1);
        let (w2, b2) = (tape.param(HIGH_W)?, tape.param(HIGH_B)?);
        let z2 = tape.affine(local, w2, b2);
        let high = tape.tanh(z2);
        Ok(FeatureVars { local, high })
    }

    pub fn logits_on_tape(&self, tape: &mut Tape<'_>, high: Var) -> Result<Var> {
        let (w, b) = (tape.param(HEAD_W)?, tape.param(HEAD_B)?);
        Ok(tape.affine(high, w, b))
    }

    /// Row-wise class probabilities for a scene.
    pub fn probs_on_tape(&self, tape: &mut Tape<'_>, x: &Matrix) -> Result<(FeatureVars, Var)> {
        let feats = self.features_on_tape(tape, x)?;
        let logits = self.logits_on_tape(tape, feats.high)?;
        Ok((feats, tape.softmax_rows(logits)))
    }

    /// Per-instance domain score in (0, 1), as a `K x 1` column.
    pub fn discriminate_on_tape(&self, tape: &mut Tape<'_>, local: Var) -> Result<Var> {
        let (w1, b1) = (tape.param(DISC_HIDDEN_W)?, tape.param(DISC_HIDDEN_B)?);
        let z = tape.affine(local, w1, b1);
        let h = tape.tanh(z);
        let (w2, b2) = (tape.param(DISC_OUT_W)?, tape.param(DISC_OUT_B)?);
        let out = tape.affine(h, w2, b2);
        Ok(tape.sigmoid(out))
    }

    /// `local = tanh(W₁x + b₁)`, `high = tanh(W₂·local + b₂)` per instance.
    pub fn extract_features(&self, params: &ParamVector, x: &Matrix) -> Result<FeatureSplit> {
        let mut tape = Tape::new(params);
        let f = self.features_on_tape(&mut tape, x)?;
        Ok(FeatureSplit {
            local: tape.value(f.local).clone(),
            high: tape.value(f.high).clone(),
        })
    }

    /// Softmax over the head logits, one row per instance.
    pub fn classify(&self, params: &ParamVector, features: &FeatureSplit) -> Result<Matrix> {
        if features.high.cols() != self.d_high {
            return Err(Error::Shape(format!(
                "high-level features have length {}, expected {}",
                features.high.cols(),
                self.d_high
            )));
        }
        if features.local.rows() != features.high.rows() {
            return Err(Error::Shape("local/high instance counts differ".into()));
        }
        let mut tape = Tape::new(params);
        let high = tape.constant(features.high.clone());
        let logits = self.logits_on_tape(&mut tape, high)?;
        let probs = tape.softmax_rows(logits);
        Ok(tape.value(probs).clone())
    }

    /// Convenience: features then probabilities.
    pub fn predict(&self, params: &ParamVector, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new(params);
        let (_, probs) = self.probs_on_tape(&mut tape, x)?;
        Ok(tape.value(probs).clone())
    }

    pub fn domain_discriminate(&self, params: &ParamVector, local: &Matrix) -> Result<Vec<f64>> {
        if local.cols() != self.d_low {
            return Err(Error::Shape(format!(
                "local features have length {}, expected {}",
                local.cols(),
                self.d_low
            )));
        }
        let mut tape = Tape::new(params);
        let l = tape.constant(local.clone());
        let scores = self.discriminate_on_tape(&mut tape, l)?;
        Ok(tape.value(scores).as_slice().to_vec())
    }
}
