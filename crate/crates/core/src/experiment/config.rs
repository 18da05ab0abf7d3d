//! TOML experiment configuration and validation.

use crate::cads::CadsConfig;
use crate::data::digits::DigitsConfig;
use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "spectral")]
    Spectral,
    #[serde(rename = "mnist-select")]
    MnistSelect,
    #[serde(rename = "noisy-sources")]
    NoisySources,
    #[serde(rename = "surrogate-study")]
    SurrogateStudy,
    #[serde(rename = "cost-study")]
    CostStudy,
}

impl ExperimentKind {
    pub fn dir_name(&self) -> &'static str {
        match self {
            ExperimentKind::Spectral => "spectral",
            ExperimentKind::MnistSelect => "mnist-select",
            ExperimentKind::NoisySources => "noisy-sources",
            ExperimentKind::SurrogateStudy => "surrogate-study",
            ExperimentKind::CostStudy => "cost-study",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub sources: SourcesSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub cads: CadsSection,
    #[serde(default)]
    pub surrogate: SurrogateSection,
    #[serde(default)]
    pub gen: Option<GenSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::config(format!("config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CoreError::config("seeds: must be nonempty"));
        }
        match self.kind {
            ExperimentKind::Spectral => self.spectral.validate(),
            ExperimentKind::MnistSelect => {
                self.select.validate()?;
                self.surrogate.validate()?;
                self.cads.validate("cads")
            }
            ExperimentKind::NoisySources => {
                self.sources.validate()?;
                self.surrogate.validate()?;
                self.cads.validate("cads")
            }
            ExperimentKind::SurrogateStudy => {
                self.select.validate()?;
                self.surrogate.validate()?;
                self.study.validate()
            }
            ExperimentKind::CostStudy => self.cost.validate(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub n: usize,
    pub noise_sigma: f64,
    pub x_range: (f64, f64),
    pub val_n: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            n: 50_000,
            noise_sigma: 0.1,
            x_range: (-10.0, 10.0),
            val_n: 10_000,
            steps: 160,
            batch_size: 1000,
            lr: 3e-4,
            hidden: vec![100, 100],
        }
    }
}

impl SpectralSection {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.val_n == 0 || self.steps == 0 || self.batch_size == 0 {
            return Err(CoreError::config("spectral: n, val_n, steps, batch_size must be >= 1"));
        }
        if self.lr <= 0.0 {
            return Err(CoreError::config("spectral.lr: must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// MNIST IDX files from `select.mnist_dir`.
    Mnist,
    /// The bundled distorted handwritten-digit corpus.
    Digits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectMethod {
    Random,
    BilevelCads,
    CadsE,
}

impl SelectMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SelectMethod::Random => "random",
            SelectMethod::BilevelCads => "bilevel-cads",
            SelectMethod::CadsE => "cads-e",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum DecodeKind {
    /// Deterministic mask from thresholding the inclusion probabilities.
    Threshold(f64),
    /// One draw from the final policy.
    Sample,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    pub source: DataSource,
    pub mnist_dir: Option<PathBuf>,
    pub train_n: usize,
    pub val_n: usize,
    pub test_n: usize,
    pub budget: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub normalize: bool,
    /// Seed of the pool shuffle that picks the training subset.
    pub pool_seed: u64,
    pub inits: Vec<f64>,
    pub methods: Vec<SelectMethod>,
    pub decode: DecodeKind,
    pub bilevel_outer_iters: usize,
    pub cads_e_outer_iters: usize,
    /// Run convnet passes in f32 (halves cell runtimes; metrics-level
    /// results are unaffected).
    pub fast_math: bool,
    /// Charge forward-only evaluation passes at this fraction of a
    /// sample-usage (accounting sensitivity studies).
    pub eval_charge_fraction: f64,
    /// Persist final model checkpoints next to the policies.
    pub save_checkpoints: bool,
    pub digits: DigitsConfig,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            source: DataSource::Digits,
            mnist_dir: None,
            train_n: 1000,
            val_n: 1000,
            test_n: 2000,
            budget: 20_000,
            batch_size: 1000,
            lr: 5e-3,
            normalize: true,
            pool_seed: 77,
            inits: vec![0.2, 0.4, 0.6, 0.8],
            methods: vec![SelectMethod::Random, SelectMethod::BilevelCads, SelectMethod::CadsE],
            decode: DecodeKind::Sample,
            bilevel_outer_iters: 30,
            cads_e_outer_iters: 300,
            fast_math: true,
            eval_charge_fraction: 0.0,
            save_checkpoints: false,
            digits: DigitsConfig::default(),
        }
    }
}

impl SelectSection {
    pub(crate) fn validate_public(&self) -> Result<()> {
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        if self.train_n == 0 || self.val_n == 0 || self.test_n == 0 {
            return Err(CoreError::config("select: train_n, val_n, test_n must be >= 1"));
        }
        if self.budget == 0 {
            return Err(CoreError::config("select.budget: must be >= 1"));
        }
        for (i, &v) in self.inits.iter().enumerate() {
            if !(0.0 < v && v < 1.0) {
                return Err(CoreError::config(format!("select.inits[{i}]: must be in (0, 1)")));
            }
        }
        if self.methods.is_empty() {
            return Err(CoreError::config("select.methods: must be nonempty"));
        }
        if self.source == DataSource::Mnist {
            let dir = self
                .mnist_dir
                .as_ref()
                .ok_or_else(|| CoreError::config("select.mnist_dir: required for source = \"mnist\""))?;
            for f in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"] {
                if !dir.join(f).exists() {
                    return Err(CoreError::config(format!(
                        "select.mnist_dir: missing {}",
                        dir.join(f).display()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceMethod {
    Uniform,
    Full,
    BestSource,
    CadsS,
}

impl SourceMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SourceMethod::Uniform => "uniform",
            SourceMethod::Full => "full",
            SourceMethod::BestSource => "best-source",
            SourceMethod::CadsS => "cads-s",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourcesSection {
    pub classes: usize,
    pub dim: usize,
    pub per_source: usize,
    pub noise_levels: Vec<f64>,
    pub separation: f64,
    pub val_n: usize,
    pub test_n: usize,
    pub budgets: Vec<u64>,
    pub batch_size: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub methods: Vec<SourceMethod>,
    pub uniform_ratio: f64,
    pub sigma0: f64,
    pub outer_iters: usize,
    /// Seed of the data generation (fixed across run seeds).
    pub data_seed: u64,
}

impl Default for SourcesSection {
    fn default() -> Self {
        SourcesSection {
            classes: 10,
            dim: 16,
            per_source: 900,
            noise_levels: vec![0.0, 0.225, 0.45, 0.675, 0.90],
            separation: 3.0,
            val_n: 1000,
            test_n: 1000,
            budgets: vec![2_250, 22_500],
            batch_size: 128,
            lr: 5e-3,
            hidden: vec![64],
            methods: vec![
                SourceMethod::Uniform,
                SourceMethod::Full,
                SourceMethod::BestSource,
                SourceMethod::CadsS,
            ],
            uniform_ratio: 0.5,
            sigma0: 0.05,
            outer_iters: 100,
            data_seed: 33,
        }
    }
}

impl SourcesSection {
    fn validate(&self) -> Result<()> {
        if self.noise_levels.is_empty() {
            return Err(CoreError::config("sources.noise_levels: must be nonempty"));
        }
        for (i, &p) in self.noise_levels.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::config(format!(
                    "sources.noise_levels[{i}]: must be in [0, 1]"
                )));
            }
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return Err(CoreError::config("sources.budgets: must be nonempty and positive"));
        }
        if !(0.0 < self.uniform_ratio && self.uniform_ratio <= 1.0) {
            return Err(CoreError::config("sources.uniform_ratio: must be in (0, 1]"));
        }
        if self.sigma0 <= 0.0 {
            return Err(CoreError::config("sources.sigma0: must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub heldout: usize,
    pub k_values: Vec<usize>,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection { heldout: 10, k_values: vec![4, 5] }
    }
}

impl StudySection {
    fn validate(&self) -> Result<()> {
        if self.heldout < 10 {
            return Err(CoreError::config("study.heldout: must be >= 10"));
        }
        if self.k_values.iter().any(|&k| !(3..=10).contains(&k)) {
            return Err(CoreError::config("study.k_values: entries must lie in 3..=10"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub n_epochs: Vec<u64>,
    pub k_subsets: usize,
    pub outer_m: usize,
    pub dataset_n: usize,
    pub classes: usize,
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub measure_iters: usize,
    pub tolerance: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            n_epochs: vec![5, 20],
            k_subsets: 5,
            outer_m: 100,
            dataset_n: 200,
            classes: 4,
            dim: 8,
            hidden: vec![16],
            measure_iters: 3,
            tolerance: 0.10,
        }
    }
}

impl CostSection {
    fn validate(&self) -> Result<()> {
        if self.n_epochs.is_empty() || self.n_epochs.contains(&0) {
            return Err(CoreError::config("cost.n_epochs: must be nonempty and positive"));
        }
        if self.k_subsets == 0 || self.outer_m == 0 || self.measure_iters == 0 {
            return Err(CoreError::config("cost: k_subsets, outer_m, measure_iters must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CadsSection {
    pub alpha: f64,
    pub k_subsets: usize,
    pub lr_theta: f64,
    pub lr_s: f64,
    pub variance_reduction: bool,
    pub grad_clip_norm: Option<f64>,
    pub ltrn_cap: usize,
    pub val_batch: Option<usize>,
    pub common_inner_seeds: bool,
    pub reset_theta_each_iter: bool,
}

impl Default for CadsSection {
    fn default() -> Self {
        CadsSection {
            alpha: 1.0,
            k_subsets: 5,
            lr_theta: 5e-3,
            lr_s: 5e-2,
            variance_reduction: true,
            grad_clip_norm: Some(5.0),
            ltrn_cap: 2048,
            val_batch: None,
            common_inner_seeds: false,
            reset_theta_each_iter: false,
        }
    }
}

impl CadsSection {
    fn validate(&self, path: &str) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(CoreError::config(format!("{path}.alpha: must be >= 0")));
        }
        if self.k_subsets == 0 {
            return Err(CoreError::config(format!("{path}.k_subsets: must be >= 1")));
        }
        if self.lr_theta <= 0.0 || self.lr_s <= 0.0 {
            return Err(CoreError::config(format!("{path}: learning rates must be positive")));
        }
        Ok(())
    }

    /// Assemble the optimizer config for a concrete run.
    pub fn build(&self, outer_iters: usize, budget_c: u64, seed: u64) -> CadsConfig {
        CadsConfig {
            alpha: self.alpha,
            k_subsets: self.k_subsets,
            lr_theta: self.lr_theta,
            lr_s: self.lr_s,
            outer_iters,
            variance_reduction: self.variance_reduction,
            grad_clip_norm: self.grad_clip_norm,
            seed,
            budget_c,
            ltrn_cap: self.ltrn_cap,
            val_batch: self.val_batch,
            common_inner_seeds: self.common_inner_seeds,
            reset_theta_each_iter: self.reset_theta_each_iter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateSection {
    pub fractions: Vec<f64>,
    pub size_floor: usize,
    pub replicates: usize,
    /// Reuse a persisted fit instead of collecting probes.
    pub reuse_fit: Option<PathBuf>,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection {
            fractions: crate::surrogate::DEFAULT_FRACTIONS.to_vec(),
            size_floor: crate::surrogate::DEFAULT_SIZE_FLOOR,
            replicates: 1,
            reuse_fit: None,
        }
    }
}

impl SurrogateSection {
    fn validate(&self) -> Result<()> {
        for (i, &f) in self.fractions.iter().enumerate() {
            if !(0.0 < f && f <= 1.0) {
                return Err(CoreError::config(format!(
                    "surrogate.fractions[{i}]: must be in (0, 1]"
                )));
            }
        }
        if self.replicates == 0 {
            return Err(CoreError::config("surrogate.replicates: must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    SpectralLow,
    SpectralHigh,
    Digits,
    BlobSources,
}

/// Parameters for the `gen-data` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub dataset: GenKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output CSV filename (relative to the output directory).
    pub out: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
kind = "spectral"
seeds = [0, 1, 2]
"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.spectral.steps, 160);
        assert_eq!(cfg.spectral.n, 50_000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml(
            r#"
kind = "spectral"
seeds = [0]
nonsense = 1
"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn validation_points_at_offending_field() {
        let cfg = ExperimentConfig::from_toml(
            r#"
kind = "mnist-select"
seeds = [0]
[select]
inits = [0.2, 1.5]
"#,
        )
        .unwrap();
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("select.inits[1]"), "{msg}");
    }

    #[test]
    fn empty_seeds_invalid() {
        let cfg = ExperimentConfig::from_toml("kind = \"spectral\"\nseeds = []\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
