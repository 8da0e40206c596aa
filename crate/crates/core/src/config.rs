//! Run configuration: flat `key = value` files, command-line overrides and
//! built-in defaults, in that order of precedence (flags win).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::objectives::Hyperparams;
use crate::synthdata::{Scenario, ScenarioSpec};
use crate::trainer::Schedule;

/// Every recognised key.
pub const KEYS: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "lambda_adv",
    "episodes",
    "tau",
    "seed",
    "scenario",
    "n_source",
    "n_target",
    "instances",
    "background_fraction",
    "categories",
    "rotation_deg",
    "scale",
    "translation",
    "fog_noise",
    "fog_bias",
    "source",
    "target",
    "hidden_labels",
    "metrics",
    "params",
    "divergence_report",
    "enable_adv",
    "enable_diversity",
    "enable_gradient_alignment",
    "source_only",
    "pad_every",
];

/// Raw key/value pairs from one configuration layer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Entries(BTreeMap<String, String>);

impl Entries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces one entry, rejecting unknown keys.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "unknown key"));
        }
        self.0.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// `key=value` as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair, "expected KEY=VALUE"))?;
        self.set(k.trim(), v.trim())
    }

    /// Parses a configuration file body; `path` is used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut out = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i as u64 + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    path,
                    line_no,
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::parse(path, line_no, format!("unknown key `{k}`")));
            }
            if out.0.contains_key(k) {
                return Err(Error::parse(path, line_no, format!("duplicate key `{k}`")));
            }
            out.0.insert(k.to_owned(), v.to_owned());
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// `self` layered over `base`: keys present here win.
    pub fn over(mut self, base: &Entries) -> Entries {
        for (k, v) in &base.0 {
            self.0.entry(k.clone()).or_insert_with(|| v.clone());
        }
        self
    }
}

/// Fully resolved settings of one `train` or `gen-data` invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub hp: Hyperparams,
    pub seed: u64,
    pub spec: ScenarioSpec,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub hidden_labels: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub divergence_report: Option<PathBuf>,
    pub enable_adv: bool,
    pub enable_diversity: bool,
    pub enable_gradient_alignment: bool,
    pub source_only: bool,
    pub pad_every: usize,
}

fn parsed<T: FromStr>(entries: &Entries, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match entries.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|e| Error::config(key, format!("invalid value `{v}`: {e}"))),
    }
}

fn flag(entries: &Entries, key: &str, default: bool) -> Result<bool> {
    match entries.get(key) {
        None => Ok(default),
        Some("true" | "1" | "yes" | "on") => Ok(true),
        Some("false" | "0" | "no" | "off") => Ok(false),
        Some(v) => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
    }
}

fn path(entries: &Entries, key: &str) -> Option<PathBuf> {
    entries
        .get(key)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

impl RunConfig {
    /// Resolves entries against the built-in defaults and validates them.
    pub fn resolve(entries: &Entries) -> Result<Self> {
        let d = Hyperparams::default();
        let hp = Hyperparams {
            alpha: parsed(entries, "alpha", d.alpha)?,
            beta: parsed(entries, "beta", d.beta)?,
            gamma: parsed(entries, "gamma", d.gamma)?,
            lambda_adv: parsed(entries, "lambda_adv", d.lambda_adv)?,
            episodes: parsed(entries, "episodes", d.episodes)?,
            tau: parsed(entries, "tau", d.tau)?,
        };
        hp.validate()?;

        let seed = parsed(entries, "seed", 0u64)?;
        let scenario = entries
            .get("scenario")
            .map_or(Ok(Scenario::ShiftGauss), str::parse)?;
        let p = ScenarioSpec::preset(scenario, seed);
        let spec = ScenarioSpec {
            n_source: parsed(entries, "n_source", p.n_source)?,
            n_target: parsed(entries, "n_target", p.n_target)?,
            instances: parsed(entries, "instances", p.instances)?,
            background_fraction: parsed(entries, "background_fraction", p.background_fraction)?,
            categories: parsed(entries, "categories", p.categories)?,
            rotation_deg: parsed(entries, "rotation_deg", p.rotation_deg)?,
            scale: parsed(entries, "scale", p.scale)?,
            translation: parsed(entries, "translation", p.translation)?,
            fog_noise: parsed(entries, "fog_noise", p.fog_noise)?,
            fog_bias: parsed(entries, "fog_bias", p.fog_bias)?,
            ..p
        };
        spec.validate()?;

        let cfg = Self {
            hp,
            seed,
            spec,
            source: path(entries, "source"),
            target: path(entries, "target"),
            hidden_labels: path(entries, "hidden_labels"),
            metrics: path(entries, "metrics"),
            params: path(entries, "params"),
            divergence_report: path(entries, "divergence_report"),
            enable_adv: flag(entries, "enable_adv", true)?,
            enable_diversity: flag(entries, "enable_diversity", true)?,
            enable_gradient_alignment: flag(entries, "enable_gradient_alignment", true)?,
            source_only: flag(entries, "source_only", false)?,
            pad_every: parsed(entries, "pad_every", 0usize)?,
        };
        cfg.check_paths()?;
        Ok(cfg)
    }

    fn check_paths(&self) -> Result<()> {
        let named = [
            ("source", &self.source),
            ("target", &self.target),
            ("hidden_labels", &self.hidden_labels),
            ("metrics", &self.metrics),
            ("params", &self.params),
            ("divergence_report", &self.divergence_report),
        ];
        for (i, (ka, a)) in named.iter().enumerate() {
            for (kb, b) in &named[i + 1..] {
                if let (Some(a), Some(b)) = (a, b) {
                    if a == b {
                        return Err(Error::config(*kb, format!("same path as `{ka}`")));
                    }
                }
            }
        }
        if self.source.is_some() != self.target.is_some() {
            return Err(Error::config(
                if self.source.is_some() {
                    "target"
                } else {
                    "source"
                },
                "source and target files must be given together",
            ));
        }
        Ok(())
    }

    /// Hyperparameters after the ablation switches.
    pub fn effective_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lambda_adv: if self.enable_adv {
                self.hp.lambda_adv
            } else {
                0.0
            },
            gamma: if self.enable_diversity {
                self.hp.gamma
            } else {
                0.0
            },
            ..self.hp
        }
    }

    pub fn schedule(&self) -> Schedule {
        if self.source_only {
            Schedule::SourceOnly
        } else if self.enable_gradient_alignment {
            Schedule::Cyclic
        } else {
            Schedule::Joint
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_value(key: &str, variant: usize) -> &'static str {
        match (key, variant) {
            ("scenario", 0) => "fog",
            ("scenario", _) => "shift-gauss",
            (
                "source" | "target" | "hidden_labels" | "metrics" | "params" | "divergence_report",
                0,
            ) => "file_a",
            (
                "source" | "target" | "hidden_labels" | "metrics" | "params" | "divergence_report",
                _,
            ) => "file_b",
            ("enable_adv" | "enable_diversity" | "enable_gradient_alignment", 0) => "false",
            ("source_only", 0) => "true",
            ("enable_adv" | "enable_diversity" | "enable_gradient_alignment", _) => "on",
            ("source_only", _) => "off",
            ("tau" | "background_fraction", 0) => "0.25",
            ("tau" | "background_fraction", _) => "0.75",
            ("scale", 0) => "1.5",
            (_, 0) => "4",
            (_, _) => "7",
        }
    }

    /// Projects one key out of a resolved configuration as text.
    fn observe(cfg: &RunConfig, key: &str) -> String {
        let hp = &cfg.hp;
        let s = &cfg.spec;
        let p = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        match key {
            "alpha" => hp.alpha.to_string(),
            "beta" => hp.beta.to_string(),
            "gamma" => hp.gamma.to_string(),
            "lambda_adv" => hp.lambda_adv.to_string(),
            "episodes" => hp.episodes.to_string(),
            "tau" => hp.tau.to_string(),
            "seed" => cfg.seed.to_string(),
            "scenario" => s.scenario.to_string(),
            "n_source" => s.n_source.to_string(),
            "n_target" => s.n_target.to_string(),
            "instances" => s.instances.to_string(),
            "background_fraction" => s.background_fraction.to_string(),
            "categories" => s.categories.to_string(),
            "rotation_deg" => s.rotation_deg.to_string(),
            "scale" => s.scale.to_string(),
            "translation" => s.translation.to_string(),
            "fog_noise" => s.fog_noise.to_string(),
            "fog_bias" => s.fog_bias.to_string(),
            "source" => p(&cfg.source),
            "target" => p(&cfg.target),
            "hidden_labels" => p(&cfg.hidden_labels),
            "metrics" => p(&cfg.metrics),
            "params" => p(&cfg.params),
            "divergence_report" => p(&cfg.divergence_report),
            "enable_adv" => cfg.enable_adv.to_string(),
            "enable_diversity" => cfg.enable_diversity.to_string(),
            "enable_gradient_alignment" => cfg.enable_gradient_alignment.to_string(),
            "source_only" => cfg.source_only.to_string(),
            "pad_every" => cfg.pad_every.to_string(),
            other => panic!("unobserved key {other}"),
        }
    }

    /// Source and target paths must appear together.
    fn companion(entries: &mut Entries, key: &str, value: &str) {
        let other = match key {
            "source" => "target",
            "target" => "source",
            _ => return,
        };
        entries.set(other, format!("{value}_companion")).unwrap();
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let default = RunConfig::resolve(&Entries::new()).unwrap();
        for &key in KEYS {
            let (file_v, flag_v) = (sample_value(key, 0), sample_value(key, 1));

            let mut file = Entries::new();
            file.set(key, file_v).unwrap();
            companion(&mut file, key, file_v);
            let only_file = RunConfig::resolve(&Entries::new().over(&file)).unwrap();

            let mut flags = Entries::new();
            flags.set(key, flag_v).unwrap();
            companion(&mut flags, key, flag_v);
            let both = RunConfig::resolve(&flags.clone().over(&file)).unwrap();

            let from_file = observe(&only_file, key);
            let from_flag = observe(&both, key);
            assert_ne!(
                from_file,
                observe(&default, key),
                "{key}: file value indistinguishable from default"
            );
            assert_ne!(from_file, from_flag, "{key}");
            assert_eq!(
                from_flag,
                observe(&RunConfig::resolve(&flags).unwrap(), key),
                "{key}"
            );
        }
    }

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::resolve(&Entries::new()).unwrap();
        assert_eq!(cfg.hp, Hyperparams::default());
        assert_eq!(cfg.hp.lambda_adv, 0.5);
        assert_eq!(cfg.hp.gamma, 0.1);
        assert_eq!(cfg.schedule(), Schedule::Cyclic);
        assert_eq!(cfg.spec, ScenarioSpec::preset(Scenario::ShiftGauss, 0));
    }

    #[test]
    fn file_syntax() {
        let text = "# comment\n\nalpha = 0.1  # trailing\n  scenario=fog\n";
        let e = Entries::parse(text, Path::new("c.cfg")).unwrap();
        assert_eq!(e.get("alpha"), Some("0.1"));
        assert_eq!(e.get("scenario"), Some("fog"));
    }

    #[test]
    fn file_errors_name_the_line() {
        for (text, line) in [
            ("alpha = 1\nnonsense\n", 2),
            ("bogus = 1\n", 1),
            ("alpha = 1\n\nalpha = 2\n", 3),
        ] {
            match Entries::parse(text, Path::new("c.cfg")) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_values_name_the_key() {
        for (key, value) in [
            ("alpha", "-1"),
            ("episodes", "x"),
            ("scenario", "snow"),
            ("background_fraction", "1.0"),
            ("enable_adv", "maybe"),
            ("tau", "2"),
        ] {
            let mut e = Entries::new();
            e.set(key, value).unwrap();
            match RunConfig::resolve(&e) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key),
                other => panic!("{key}: {other:?}"),
            }
        }
    }

    #[test]
    fn paths_must_be_distinct() {
        let mut e = Entries::new();
        e.set("metrics", "out").unwrap();
        e.set("params", "out").unwrap();
        assert!(matches!(RunConfig::resolve(&e), Err(Error::Config { .. })));
    }

    #[test]
    fn ablation_switches() {
        let mut e = Entries::new();
        e.set("enable_adv", "false").unwrap();
        e.set("enable_diversity", "false").unwrap();
        e.set("enable_gradient_alignment", "false").unwrap();
        let cfg = RunConfig::resolve(&e).unwrap();
        let hp = cfg.effective_hyperparams();
        assert_eq!((hp.lambda_adv, hp.gamma), (0.0, 0.0));
        assert_eq!(cfg.schedule(), Schedule::Joint);
        e.set("source_only", "true").unwrap();
        assert_eq!(
            RunConfig::resolve(&e).unwrap().schedule(),
            Schedule::SourceOnly
        );
    }

    #[test]
    fn set_pair_rejects_unknown_keys() {
        let mut e = Entries::new();
        assert!(e.set_pair("alpha=0.2").is_ok());
        assert!(e.set_pair("nope=1").is_err());
        assert!(e.set_pair("alpha").is_err());
    }
}
