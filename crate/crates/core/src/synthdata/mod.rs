//! Synthetic bag-of-instances scenes with a controlled domain shift.
//!
//! Every instance has `d_in = 6` features: four informative channels laid
//! out as two rings of class means (plane A holds class `c` at angle
//! `2πc/C`, plane B at twice that angle) and two "texture" channels whose
//! mean also depends on the class. Background instances are centred at the
//! origin and dominate each scene with probability `ρ`.
//!
//! Target scenes are drawn from the same class conditionals and then
//! shifted: `shift-gauss` applies `scale·R(angle)·x + translation` to both
//! informative planes, while `fog` adds a bias and Gaussian noise to the
//! texture channels only.

mod csv_io;

pub(crate) use csv_io::csv_err;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

pub use csv_io::{
    load_hidden_labels, load_source, load_target, save_hidden_labels, save_source, save_target,
};

pub const INFORMATIVE_DIMS: usize = 4;
pub const TEXTURE_DIMS: usize = 2;
pub const FEATURE_DIMS: usize = INFORMATIVE_DIMS + TEXTURE_DIMS;

/// Radius of the ring of foreground class means in each informative plane.
pub const CLASS_RADIUS: f64 = 2.0;
pub const CLASS_STD: f64 = 0.7;
pub const BACKGROUND_STD: f64 = 0.6;
/// Radius of the class-dependent texture means.
pub const TEXTURE_SIGNAL: f64 = 1.5;
pub const TEXTURE_STD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    ShiftGauss,
    Fog,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ShiftGauss => "shift-gauss",
            Scenario::Fog => "fog",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift-gauss" => Ok(Scenario::ShiftGauss),
            "fog" => Ok(Scenario::Fog),
            other => Err(Error::config(
                "scenario",
                format!("unknown scenario `{other}` (expected shift-gauss or fog)"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub seed: u64,
    pub n_source: usize,
    pub n_target: usize,
    /// Instances per scene.
    pub instances: usize,
    /// Probability that an instance is background.
    pub background_fraction: f64,
    /// Foreground categories.
    pub categories: usize,
    pub rotation_deg: f64,
    pub scale: f64,
    pub translation: f64,
    pub fog_noise: f64,
    pub fog_bias: f64,
}

impl ScenarioSpec {
    /// The default shift for a scenario.
    pub fn preset(scenario: Scenario, seed: u64) -> Self {
        let base = Self {
            scenario,
            seed,
            n_source: 100,
            n_target: 100,
            instances: 10,
            background_fraction: 0.5,
            categories: 3,
            rotation_deg: 0.0,
            scale: 1.0,
            translation: 0.0,
            fog_noise: 0.0,
            fog_bias: 0.0,
        };
        match scenario {
            Scenario::ShiftGauss => Self {
                rotation_deg: 60.0,
                scale: 1.0,
                translation: 0.0,
                ..base
            },
            Scenario::Fog => Self {
                fog_noise: 0.5,
                fog_bias: 2.0,
                ..base
            },
        }
    }

    /// Same scenario with every shift parameter neutral.
    pub fn without_shift(mut self) -> Self {
        self.rotation_deg = 0.0;
        self.scale = 1.0;
        self.translation = 0.0;
        self.fog_noise = 0.0;
        self.fog_bias = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_source < 1 {
            return Err(Error::config("n_source", "must be at least 1"));
        }
        if self.n_target < 1 {
            return Err(Error::config("n_target", "must be at least 1"));
        }
        if self.instances < 1 {
            return Err(Error::config("instances", "must be at least 1"));
        }
        if self.categories < 1 {
            return Err(Error::config("categories", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.background_fraction) {
            return Err(Error::config("background_fraction", "must lie in [0, 1)"));
        }
        for (key, v) in [
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("translation", self.translation),
            ("fog_noise", self.fog_noise),
            ("fog_bias", self.fog_bias),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        if self.scale <= 0.0 {
            return Err(Error::config("scale", "must be positive"));
        }
        if self.fog_noise < 0.0 {
            return Err(Error::config("fog_noise", "must be non-negative"));
        }
        Ok(())
    }

    fn class_angle(&self, class: usize) -> f64 {
        std::f64::consts::TAU * class as f64 / self.categories as f64
    }

    /// Analytic mean of a source class; `class == categories` is background.
    pub fn source_class_mean(&self, class: usize) -> Vec<f64> {
        if class >= self.categories {
            return vec![0.0; FEATURE_DIMS];
        }
        let a = self.class_angle(class);
        vec![
            CLASS_RADIUS * a.cos(),
            CLASS_RADIUS * a.sin(),
            CLASS_RADIUS * (2.0 * a).cos(),
            CLASS_RADIUS * (2.0 * a).sin(),
            TEXTURE_SIGNAL * a.cos(),
            TEXTURE_SIGNAL * a.sin(),
        ]
    }

    /// Analytic mean of a target class after the domain shift.
    pub fn target_class_mean(&self, class: usize) -> Vec<f64> {
        let mut m = self.source_class_mean(class);
        self.shift_in_place(&mut m, None);
        m
    }

    /// Applies the deterministic part of the shift, plus texture noise when
    /// an RNG is given.
    fn shift_in_place(&self, x: &mut [f64], rng: Option<&mut ChaCha8Rng>) {
        match self.scenario {
            Scenario::ShiftGauss => {
                let (s, c) = self.rotation_deg.to_radians().sin_cos();
                for plane in [0, 2] {
                    let (u, v) = (x[plane], x[plane + 1]);
                    x[plane] = self.scale * (c * u - s * v) + self.translation;
                    x[plane + 1] = self.scale * (s * u + c * v) + self.translation;
                }
            }
            Scenario::Fog => {
                let mut rng = rng;
                for t in &mut x[INFORMATIVE_DIMS..] {
                    *t += self.fog_bias;
                    if let Some(r) = rng.as_deref_mut() {
                        if self.fog_noise > 0.0 {
                            let z: f64 = StandardNormal.sample(r);
                            *t += self.fog_noise * z;
                        }
                    }
                }
            }
        }
    }
}

/// A labelled source scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceScene {
    pub scene_id: u64,
    /// `K x d_in`
    pub features: Matrix,
    /// Category per instance; the background index is `C`.
    pub labels: Vec<usize>,
}

/// A target scene as the trainer sees it: features only.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetScene {
    pub scene_id: u64,
    pub features: Matrix,
}

/// Evaluation-only labels for target scenes, keyed by scene id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HiddenLabels {
    labels: BTreeMap<u64, Vec<usize>>,
}

impl HiddenLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scene_id: u64, labels: Vec<usize>) {
        self.labels.insert(scene_id, labels);
    }

    pub fn get(&self, scene_id: u64) -> Option<&[usize]> {
        self.labels.get(&scene_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[usize])> {
        self.labels.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Output of [`generate`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub source: Vec<SourceScene>,
    pub target: Vec<TargetScene>,
    pub hidden: HiddenLabels,
}

fn draw_label(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> usize {
    if rng.random::<f64>() < spec.background_fraction {
        spec.categories
    } else {
        rng.random_range(0..spec.categories)
    }
}

fn draw_instance(spec: &ScenarioSpec, label: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mean = spec.source_class_mean(label);
    let informative_std = if label == spec.categories {
        BACKGROUND_STD
    } else {
        CLASS_STD
    };
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    mean.iter()
        .enumerate()
        .map(|(d, m)| {
            let std = if d < INFORMATIVE_DIMS {
                informative_std
            } else {
                TEXTURE_STD
            };
            m + std * n.sample(rng)
        })
        .collect()
}

/// Draws source scenes, then target scenes, from one seeded stream.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut source = Vec::with_capacity(spec.n_source);
    for id in 0..spec.n_source {
        let labels: Vec<usize> = (0..spec.instances)
            .map(|_| draw_label(spec, &mut rng))
            .collect();
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| draw_instance(spec, l, &mut rng))
            .collect();
        source.push(SourceScene {
            scene_id: id as u64,
            features: Matrix::from_rows(&rows)?,
            labels,
        });
    }

    let mut target = Vec::with_capacity(spec.n_target);
    let mut hidden = HiddenLabels::new();
    for id in 0..spec.n_target {
        let labels: Vec<usize> = (0..spec.instances)
            .map(|_| draw_label(spec, &mut rng))
            .collect();
        let mut rows = Vec::with_capacity(labels.len());
        for &l in &labels {
            let mut x = draw_instance(spec, l, &mut rng);
            spec.shift_in_place(&mut x, Some(&mut rng));
            rows.push(x);
        }
        target.push(TargetScene {
            scene_id: id as u64,
            features: Matrix::from_rows(&rows)?,
        });
        hidden.insert(id as u64, labels);
    }

    Ok(Dataset {
        source,
        target,
        hidden,
    })
}
