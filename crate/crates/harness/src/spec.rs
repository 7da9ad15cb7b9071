use std::path::Path;

use poison_core::{Combination, LossKind};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::presets::Preset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Logreg,
}

impl ModelKind {
    pub fn loss(self) -> LossKind {
        match self {
            ModelKind::Svm => LossKind::Hinge,
            ModelKind::Logreg => LossKind::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Beta,
    Labelflip,
    Bilevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthKind {
    #[default]
    Euclidean,
    Squared,
}

/// Whether wall-clock columns are measured or written as zero. Zeroed
/// timings make every output file a pure function of the spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    #[default]
    Record,
    Omit,
}

/// Attack knobs. Fields irrelevant to the chosen attack are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSettings {
    /// Prototypes per point; `None` picks 15 for d ≤ 1000 and 30 above.
    pub k: Option<usize>,
    pub alpha: f64,
    pub stop_threshold: f64,
    pub max_iters: usize,
    pub bandwidth: BandwidthKind,
    pub combination: Combination,
    /// Bilevel step length; `None` is 2% of the box diagonal.
    pub step_size: Option<f64>,
    pub max_outer_iters: usize,
    pub retrain_tol: f64,
}

impl Default for AttackSettings {
    fn default() -> Self {
        Self {
            k: None,
            alpha: 0.01,
            stop_threshold: 1e-5,
            max_iters: 5000,
            bandwidth: BandwidthKind::Euclidean,
            combination: Combination::Linear,
            step_size: None,
            max_outer_iters: 100,
            retrain_tol: 1e-6,
        }
    }
}

fn default_repetitions() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: Preset,
    pub model: ModelKind,
    pub reg_c: Vec<f64>,
    pub attack: AttackKind,
    /// Poison count over clean training count.
    pub fractions: Vec<f64>,
    /// Fixed poison count used for every positive fraction instead of
    /// `round(fraction * n_train)`.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub attack_config: AttackSettings,
    pub seed: u64,
    #[serde(default)]
    pub timings: TimingMode,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Spec(msg.into())
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Spec(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return Err(bad("name must be non-empty and use only [A-Za-z0-9._-]"));
        }
        if self.reg_c.is_empty() {
            return Err(bad("reg_c list is empty"));
        }
        if let Some(c) = self.reg_c.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(bad(format!("reg_c values must be positive, got {c}")));
        }
        if self.fractions.is_empty() {
            return Err(bad("fractions list is empty"));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(0.0..=0.5).contains(*f)) {
            return Err(bad(format!("fractions must lie in [0, 0.5], got {f}")));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions must be at least 1"));
        }
        if self.count == Some(0) {
            return Err(bad("count must be positive when given"));
        }
        let a = &self.attack_config;
        if a.k == Some(0) {
            return Err(bad("k must be at least 1"));
        }
        if !(a.alpha > 0.0 && a.alpha.is_finite()) {
            return Err(bad("alpha must be positive"));
        }
        if !(a.stop_threshold >= 0.0) || a.max_iters == 0 {
            return Err(bad("stop_threshold must be non-negative and max_iters positive"));
        }
        if a.step_size.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return Err(bad("step_size must be non-negative"));
        }
        if !(a.retrain_tol > 0.0) {
            return Err(bad("retrain_tol must be positive"));
        }
        if self.attack == AttackKind::Bilevel && self.dataset.classes().len() != 2 {
            return Err(bad("the bilevel attack supports binary presets only"));
        }
        Ok(())
    }

    /// Poison count for `fraction` given `n_train` clean training points.
    pub fn poison_count(&self, fraction: f64, n_train: usize) -> usize {
        if fraction == 0.0 {
            0
        } else {
            self.count.unwrap_or_else(|| (fraction * n_train as f64).round() as usize)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"name":"t","dataset":"mnist-4v0","model":"svm","reg_c":[1],
        "attack":"beta","fractions":[0,0.2],"seed":3}"#;

    #[test]
    fn defaults_fill_in() {
        let s = ExperimentSpec::from_json(MINIMAL).unwrap();
        assert_eq!(s.repetitions, 5);
        assert_eq!(s.attack_config, AttackSettings::default());
        assert_eq!(s.timings, TimingMode::Record);
        assert_eq!(s.poison_count(0.2, 400), 80);
        assert_eq!(s.poison_count(0.0, 400), 0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"seed\":3", "\"seed\":3,\"sed\":4");
        assert!(matches!(ExperimentSpec::from_json(&text), Err(HarnessError::Spec(_))));
        let text = MINIMAL.replace("\"seed\":3", "\"seed\":3,\"attack_config\":{\"kk\":2}");
        assert!(ExperimentSpec::from_json(&text).is_err());
    }

    #[test]
    fn range_checks() {
        for (from, to) in [
            ("[0,0.2]", "[0,0.6]"),
            ("\"reg_c\":[1]", "\"reg_c\":[]"),
            ("\"reg_c\":[1]", "\"reg_c\":[-1]"),
            ("\"seed\":3", "\"seed\":3,\"repetitions\":0"),
            ("\"mnist-4v0\"", "\"mnist-triplet-375\",\"attack\":\"bilevel\",\"x\":1"),
        ] {
            assert!(ExperimentSpec::from_json(&MINIMAL.replace(from, to)).is_err(), "{to}");
        }
        let tri = MINIMAL.replace("\"mnist-4v0\"", "\"mnist-triplet-375\"").replace("beta", "bilevel");
        assert!(ExperimentSpec::from_json(&tri).is_err());
    }

    #[test]
    fn count_overrides_positive_fractions() {
        let s = ExperimentSpec::from_json(&MINIMAL.replace("\"seed\":3", "\"seed\":3,\"count\":100")).unwrap();
        assert_eq!(s.poison_count(0.2, 400), 100);
        assert_eq!(s.poison_count(0.0, 400), 0);
    }
}
