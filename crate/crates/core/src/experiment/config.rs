use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackKind, AttackModelConfig};
use crate::data::{CsvSchema, SplitPlan, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_BINS;
use crate::purifier::{Arm, PurifierConfig};
use crate::target::ClassifierConfig;

/// Where the rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataConfig {
    Synth(SynthSpec),
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Export latent scatter points for plotting.
    #[serde(default = "default_true")]
    pub scatter: bool,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_true() -> bool {
    true
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            scatter: true,
        }
    }
}

/// One experiment: a dataset, a split, a target recipe, a defense recipe
/// and the attacks to run against each arm, repeated over `seeds`.
///
/// Seeds inside the sub-configs are ignored: every stage draws its seed
/// from the run seed, so a run is fully determined by the file and the
/// seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    /// Output directory; relative paths resolve against the config file.
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    #[serde(default = "all_arms")]
    pub arms: Vec<Arm>,
    pub attacks: Vec<AttackKind>,
    pub data: DataConfig,
    pub split: SplitPlan,
    pub target: ClassifierConfig,
    pub purifier: PurifierConfig,
    #[serde(default)]
    pub attack_model: AttackModelConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn all_arms() -> Vec<Arm> {
    Arm::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `out` and CSV paths are taken relative
    /// to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        if let DataConfig::Csv { path: p, .. } = &mut cfg.data {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("duplicate seed".into()));
        }
        if let DataConfig::Synth(s) = &self.data {
            s.validate()?;
        }
        self.target.fit.validate()?;
        self.purifier.cvae.fit.validate()?;
        if self.eval.bins == 0 {
            return Err(Error::Config("eval.bins must be positive".into()));
        }
        Ok(())
    }

    /// Replaces the seed list with a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }

    /// The desk-scale purchase-like experiment: 20 classes, 64 binary
    /// features, 2000 rows per partition, every attack on every arm.
    pub fn desk(out: impl Into<PathBuf>) -> Self {
        Self {
            name: "desk-purchase".into(),
            out: out.into(),
            seeds: vec![1, 2, 3, 4, 5],
            arms: all_arms(),
            attacks: vec![
                AttackKind::Nsh,
                AttackKind::Mlleaks,
                AttackKind::Adaptive,
                AttackKind::Blindmi,
                AttackKind::Gap,
                AttackKind::Transfer,
                AttackKind::Boundary,
                AttackKind::Inversion,
            ],
            data: DataConfig::Synth(SynthSpec::purchase_like(6000, 0)),
            split: SplitPlan::desk(0),
            target: ClassifierConfig::desk_overfit(0),
            purifier: PurifierConfig::desk(20, 0),
            attack_model: AttackModelConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::desk("runs/desk");
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn parse_errors_are_config_errors() {
        assert!(matches!(
            ExperimentConfig::from_toml("name = 3"),
            Err(Error::Config(_))
        ));
        let mut cfg = ExperimentConfig::desk("x");
        cfg.seeds = vec![1, 1];
        assert!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).is_err());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, ExperimentConfig::desk("out").to_toml().unwrap()).unwrap();
        assert_eq!(
            ExperimentConfig::load(&path).unwrap().out,
            dir.path().join("out")
        );
        assert!(matches!(
            ExperimentConfig::load(&dir.path().join("nope.toml")),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn shipped_desk_config_matches_the_builtin() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml");
        let cfg = ExperimentConfig::load(&path).unwrap();
        let builtin = ExperimentConfig::desk(cfg.out.clone());
        assert_eq!(cfg.attacks, builtin.attacks);
        assert_eq!(cfg.data, builtin.data);
        assert_eq!(cfg.target.hidden, builtin.target.hidden);
        assert_eq!(cfg.target.fit.epochs, builtin.target.fit.epochs);
        assert_eq!(
            cfg.purifier.cvae.latent_dim,
            builtin.purifier.cvae.latent_dim
        );
        assert_eq!(cfg.purifier.cvae.lambda, builtin.purifier.cvae.lambda);
        assert_eq!(cfg.purifier.cvae.sigma, builtin.purifier.cvae.sigma);
        assert_eq!(cfg.purifier.knn, builtin.purifier.knn);
    }
}
