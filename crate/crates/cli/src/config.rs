//! TOML run configuration shared by `train`, `bench` and `gen-data`.

use std::fmt;
use std::path::{Path, PathBuf};

use alpa_core::datagen::{generate, load_csv, LabeledDataset, LongTailProfile};
use alpa_core::losses::LossSpec;
use alpa_core::trainer::{Architecture, TrainConfig};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer};

pub const SCHEMA_VERSION: u32 = 1;

/// Configuration problems; the binary maps these to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub training: TrainingSection,
    pub loss: Option<LossSpec>,
    pub bench: Option<BenchSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Exactly one of `csv` or `generate`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub csv: Option<PathBuf>,
    pub generate: Option<LongTailProfile>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub train_fraction: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
        }
    }
}

/// Every [`TrainConfig`] field except the loss and the seed.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub architecture: Architecture,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub weight_decay: f64,
    pub init_scale: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let d = TrainConfig::new(LossSpec::bce());
        Self {
            architecture: d.architecture,
            hidden_units: d.hidden_units,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            adam_beta1: d.adam_beta1,
            adam_beta2: d.adam_beta2,
            weight_decay: d.weight_decay,
            init_scale: d.init_scale,
        }
    }
}

impl TrainingSection {
    pub fn to_train_config(&self, loss: LossSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            loss,
            architecture: self.architecture,
            hidden_units: self.hidden_units,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            weight_decay: self.weight_decay,
            seed,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub losses: Vec<LabeledLoss>,
}

/// A `[[bench.losses]]` entry: `label` plus the [`LossSpec`] keys.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledLoss {
    pub label: String,
    pub spec: LossSpec,
}

// Split by hand so unknown loss keys are still rejected.
impl<'de> Deserialize<'de> for LabeledLoss {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(deserializer)?;
        let label = match table.remove("label") {
            Some(toml::Value::String(label)) => label,
            Some(_) => return Err(D::Error::custom("`label` must be a string")),
            None => return Err(D::Error::missing_field("label")),
        };
        let spec = toml::Value::Table(table)
            .try_into()
            .map_err(D::Error::custom)?;
        Ok(Self { label, spec })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl RunConfig {
    /// Parses and validates a config; relative dataset paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| config_error(format!("invalid config: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(config_error(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        if config.seeds.is_empty() {
            return Err(config_error("`seeds` must list at least one seed"));
        }
        match (&config.dataset.csv, &config.dataset.generate) {
            (Some(_), Some(_)) => {
                return Err(config_error(
                    "`dataset` must set exactly one of `csv` or `generate`, found both",
                ))
            }
            (None, None) => {
                return Err(config_error(
                    "`dataset` must set exactly one of `csv` or `generate`, found neither",
                ))
            }
            _ => {}
        }
        if let Some(path) = &mut config.dataset.csv {
            if path.is_relative() {
                *path = base_dir.join(&*path);
            }
        }
        if let Some(profile) = &config.dataset.generate {
            profile
                .validate()
                .map_err(|e| config_error(format!("dataset.generate: {e}")))?;
        }
        let frac = config.split.train_fraction;
        if !(frac > 0.0 && frac < 1.0) {
            return Err(config_error(format!(
                "split.train_fraction must lie in (0, 1), got {frac}"
            )));
        }
        let probe = config.training.to_train_config(LossSpec::bce(), 0);
        probe
            .validate()
            .map_err(|e| config_error(format!("training: {e}")))?;
        if let Some(loss) = &config.loss {
            loss.validate()
                .map_err(|e| config_error(format!("loss: {e}")))?;
        }
        if let Some(bench) = &config.bench {
            for entry in &bench.losses {
                entry
                    .spec
                    .validate()
                    .map_err(|e| config_error(format!("bench.losses `{}`: {e}", entry.label)))?;
            }
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// The `[loss]` section, required by `train`.
    pub fn require_loss(&self) -> Result<&LossSpec, ConfigError> {
        self.loss
            .as_ref()
            .ok_or_else(|| config_error("missing required key `loss` (add a [loss] section)"))
    }

    /// The `[[bench.losses]]` entries, at least two with distinct labels.
    pub fn require_bench_losses(&self) -> Result<&[LabeledLoss], ConfigError> {
        let losses = self
            .bench
            .as_ref()
            .map(|b| b.losses.as_slice())
            .ok_or_else(|| config_error("missing required key `bench.losses`"))?;
        if losses.len() < 2 {
            return Err(config_error(format!(
                "benchmark needs ≥ 2 losses, `bench.losses` has {}",
                losses.len()
            )));
        }
        for (i, entry) in losses.iter().enumerate() {
            if losses[..i].iter().any(|other| other.label == entry.label) {
                return Err(config_error(format!(
                    "duplicate bench loss label `{}`",
                    entry.label
                )));
            }
        }
        Ok(losses)
    }

    pub fn load_dataset(&self) -> anyhow::Result<LabeledDataset> {
        Ok(match (&self.dataset.csv, &self.dataset.generate) {
            (Some(path), _) => load_csv(path)?,
            (None, Some(profile)) => generate(profile)?,
            (None, None) => unreachable!("validated at parse time"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alpa_core::losses::{AlpaVariant, LossKind};

    const BASE: &str = r#"
schema_version = 1
seeds = [3, 4]

[dataset.generate]
num_classes = 3
n_max = 30
imbalance_ratio = 3.0
decay = "exponential"
dims = 2
cluster_separation = 4.0
noise_sigma = 1.0
seed = 9
"#;

    fn parse(extra: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(&format!("{BASE}{extra}"), Path::new("/tmp"))
    }

    #[test]
    fn defaults_follow_trainer_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.split.train_fraction, 0.8);
        assert_eq!(c.training.learning_rate, 1e-4);
        assert_eq!(c.training.batch_size, 128);
        assert_eq!(c.training.weight_decay, 1e-3);
        assert_eq!(c.training.adam_beta1, 0.9);
        assert_eq!(c.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn loss_sections() {
        let c = parse("[loss]\nkind = \"alpa\"\nvariant = \"v2\"\n").unwrap();
        assert_eq!(
            c.require_loss().unwrap().alpa_params().unwrap(),
            LossSpec::alpa(AlpaVariant::V2).alpa_params().unwrap()
        );

        let err = parse("").unwrap().require_loss().unwrap_err();
        assert!(err.0.contains("`loss`"), "{err}");

        let bench = parse(
            "[[bench.losses]]\nlabel = \"CE\"\nkind = \"ce\"\n\
             [[bench.losses]]\nlabel = \"ALPA\"\nkind = \"alpa\"\nvariant = \"v1\"\n",
        )
        .unwrap();
        let losses = bench.require_bench_losses().unwrap();
        assert_eq!(losses[0].spec.kind, LossKind::Ce);
        assert_eq!(losses[1].label, "ALPA");

        let single = parse("[[bench.losses]]\nlabel = \"CE\"\nkind = \"ce\"\n").unwrap();
        assert!(single
            .require_bench_losses()
            .unwrap_err()
            .0
            .contains("benchmark needs ≥ 2 losses"));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(parse("[training]\nepochs = 0\n")
            .unwrap_err()
            .0
            .contains("epochs"));
        assert!(parse("[training]\nlerning_rate = 1.0\n")
            .unwrap_err()
            .0
            .contains("lerning_rate"));
        assert!(parse("[dataset]\ncsv = \"x.csv\"\n").is_err());
        assert!(parse("[split]\ntrain_fraction = 1.0\n").is_err());
        assert!(parse("[loss]\nkind = \"alpa\"\nvariant = \"v2\"\nalpha = 2.0\n").is_err());
        assert!(parse("[loss]\nkind = \"focal\"\ngama_pos = 2.0\n")
            .unwrap_err()
            .0
            .contains("gama_pos"));
        let typo = "[[bench.losses]]\nlabel = \"A\"\nkind = \"ce\"\n\
                    [[bench.losses]]\nlabel = \"B\"\nkind = \"ce\"\nmargn = 0.1\n";
        assert!(parse(typo).unwrap_err().0.contains("margn"));
        let err = RunConfig::parse(
            "schema_version = 2\n[dataset]\ncsv = \"a\"\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(err.0.contains("schema_version"));
        let err =
            RunConfig::parse("seeds = [1]\n[dataset]\ncsv = \"a\"\n", Path::new(".")).unwrap_err();
        assert!(err.0.contains("schema_version"), "{err}");
    }

    #[test]
    fn relative_csv_resolves_against_config_dir() {
        let c = RunConfig::parse(
            "schema_version = 1\n[dataset]\ncsv = \"data/x.csv\"\n",
            Path::new("/srv/run"),
        )
        .unwrap();
        assert_eq!(c.dataset.csv.unwrap(), PathBuf::from("/srv/run/data/x.csv"));
    }
}
