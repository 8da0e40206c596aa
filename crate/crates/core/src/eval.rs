//! Evaluation harness: the only code that reads hidden target labels.

use crate::error::{Error, Result};
use crate::models::ModelShape;
use crate::numeric::{argmax, Matrix, ParamVector};
use crate::synthdata::{HiddenLabels, SourceScene, TargetScene};

/// Scores a model on the target domain without exposing the labels.
pub trait TargetEvaluator {
    fn target_accuracy(&self, shape: &ModelShape, params: &ParamVector) -> Result<f64>;
}

/// Holds target scenes together with their hidden labels.
pub struct HiddenLabelEvaluator {
    scenes: Vec<TargetScene>,
    hidden: HiddenLabels,
}

impl HiddenLabelEvaluator {
    pub fn new(scenes: Vec<TargetScene>, hidden: HiddenLabels) -> Result<Self> {
        for s in &scenes {
            match hidden.get(s.scene_id) {
                Some(l) if l.len() == s.features.rows() => {}
                Some(l) => {
                    return Err(Error::Data(format!(
                        "scene {} has {} hidden labels for {} instances",
                        s.scene_id,
                        l.len(),
                        s.features.rows()
                    )))
                }
                None => {
                    return Err(Error::Data(format!(
                        "no hidden labels for target scene {}",
                        s.scene_id
                    )))
                }
            }
        }
        Ok(Self { scenes, hidden })
    }

    /// Target scenes paired with their labels, as labelled scenes.
    pub fn labelled_scenes(&self) -> Vec<SourceScene> {
        self.scenes
            .iter()
            .map(|s| SourceScene {
                scene_id: s.scene_id,
                features: s.features.clone(),
                labels: self.hidden.get(s.scene_id).expect("checked").to_vec(),
            })
            .collect()
    }
}

impl TargetEvaluator for HiddenLabelEvaluator {
    fn target_accuracy(&self, shape: &ModelShape, params: &ParamVector) -> Result<f64> {
        let labelled = self.labelled_scenes();
        accuracy(shape, params, &labelled)
    }
}

/// Fraction of instances whose argmax prediction equals the label.
pub fn accuracy(shape: &ModelShape, params: &ParamVector, scenes: &[SourceScene]) -> Result<f64> {
    let x = Matrix::vstack(scenes.iter().map(|s| &s.features))?;
    if x.rows() == 0 {
        return Err(Error::Data("no instances to evaluate".into()));
    }
    let probs = shape.predict(params, &x)?;
    let correct = scenes
        .iter()
        .flat_map(|s| s.labels.iter())
        .zip(probs.iter_rows())
        .filter(|(&l, row)| argmax(row) == l)
        .count();
    Ok(correct as f64 / x.rows() as f64)
}
