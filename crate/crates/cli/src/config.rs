//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use convsparse::classifier::SvmParams;
use convsparse::dictionary::MosaVariant;
use convsparse::features::{FeatureKind, FeatureParams, GaborParams};
use convsparse::sparse_coding::Lambda;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Overrides the `root` of every data section.
pub const DATA_ENV: &str = "CONVSPARSE_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ClusterShifted,
    Classify,
    SweepPatch,
    Dist,
    GenShifted,
    ExportAtoms,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ClusterShifted => "cluster-shifted",
            ExperimentKind::Classify => "classify",
            ExperimentKind::SweepPatch => "sweep-patch",
            ExperimentKind::Dist => "dist",
            ExperimentKind::GenShifted => "gen-shifted",
            ExperimentKind::ExportAtoms => "export-atoms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub data: DataSpec,
    #[serde(default)]
    pub scale: ScaleSpec,
    #[serde(default)]
    pub cluster: ClusterSpec,
    #[serde(default)]
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub svm: SvmSpec,
    #[serde(default)]
    pub dist: DistSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// MNIST-style IDX image and label files.
    #[default]
    Idx,
    /// Delimited text, one series per row with its label (UCR archive layout).
    Ucr,
    /// Built-in digit glyphs (distance demonstrations only).
    Glyphs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub format: DataFormat,
    /// Base directory for relative paths; itself relative to the config file.
    #[serde(default)]
    pub root: Option<PathBuf>,
    /// IDX: training images and labels.
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// UCR: train and test files.
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    /// Label column for delimited files: "first" or "last".
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Optional reshape of delimited rows, e.g. [16, 16].
    #[serde(default)]
    pub shape: Option<Vec<usize>>,
}

fn default_delimiter() -> String {
    "\t".into()
}

fn default_label_column() -> String {
    "first".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionSpec {
    #[default]
    First,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    /// Samples per class for clustering, distance and generation runs.
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    /// Total training sizes; 0 means the full training set.
    #[serde(default = "default_train_sizes")]
    pub train_sizes: Vec<usize>,
    /// Total test size when the test split is carved from one file; 0 means
    /// the full test file.
    #[serde(default)]
    pub test_size: usize,
    #[serde(default)]
    pub selection: SelectionSpec,
}

fn default_per_class() -> usize {
    100
}

fn default_train_sizes() -> Vec<usize> {
    vec![500, 1000, 2000, 5000, 10000, 0]
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self {
            per_class: default_per_class(),
            train_sizes: default_train_sizes(),
            test_size: 0,
            selection: SelectionSpec::First,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Frame sizes; the mean shift of frame `f` over 28×28 digits is `(f - 28) / 2`.
    #[serde(default = "default_frames")]
    pub frames: Vec<usize>,
    /// Seeds to repeat over; the top-level seed when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_atom")]
    pub atom: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_km_iters")]
    pub km_iters: usize,
    #[serde(default = "default_si_iters")]
    pub si_iters: usize,
    #[serde(default)]
    pub variant: VariantSpec,
}

fn default_frames() -> Vec<usize> {
    vec![28, 32, 36, 44, 56]
}

fn default_atom() -> Vec<usize> {
    vec![28, 28]
}

fn default_k() -> usize {
    10
}

fn default_km_iters() -> usize {
    100
}

fn default_si_iters() -> usize {
    50
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            frames: default_frames(),
            seeds: Vec::new(),
            atom: default_atom(),
            k: default_k(),
            km_iters: default_km_iters(),
            si_iters: default_si_iters(),
            variant: VariantSpec::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VariantSpec {
    #[default]
    Uniform,
    Weighted,
}

impl From<VariantSpec> for MosaVariant {
    fn from(v: VariantSpec) -> Self {
        match v {
            VariantSpec::Uniform => MosaVariant::Uniform,
            VariantSpec::Weighted => MosaVariant::Weighted,
        }
    }
}

/// One feature extractor and its hyperparameters; unset fields keep the
/// extractor defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: String,
    /// Column name in results; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    pub atoms: Option<usize>,
    pub sparsity: Option<usize>,
    pub dict_iters: Option<usize>,
    pub patch: Option<Vec<usize>>,
    pub stride: Option<usize>,
    pub max_fit: Option<usize>,
    /// CDL sparsity weight relative to the largest correlation of each sample.
    pub lambda: Option<f64>,
    pub coding_iters: Option<usize>,
    pub coding_tol: Option<f64>,
    pub update_iters: Option<usize>,
    pub pool: Option<Vec<usize>>,
    pub pca_dims: Option<usize>,
    pub gabor: Option<GaborSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaborSpec {
    pub scales: Option<usize>,
    pub orientations: Option<usize>,
    pub size: Option<usize>,
    pub wavelength: Option<f64>,
    pub sigma_ratio: Option<f64>,
    pub gamma: Option<f64>,
}

impl MethodSpec {
    pub fn of_kind(kind: FeatureKind) -> Self {
        Self {
            kind: kind.name().into(),
            name: None,
            atoms: None,
            sparsity: None,
            dict_iters: None,
            patch: None,
            stride: None,
            max_fit: None,
            lambda: None,
            coding_iters: None,
            coding_tol: None,
            update_iters: None,
            pool: None,
            pca_dims: None,
            gabor: None,
        }
    }

    pub fn feature_kind(&self) -> Result<FeatureKind, CliError> {
        self.kind
            .parse()
            .map_err(|_| CliError::Config(format!("unknown method {:?}", self.kind)))
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.to_uppercase())
    }

    pub fn params(&self) -> Result<FeatureParams, CliError> {
        let mut p = FeatureParams::new(self.feature_kind()?);
        if let Some(v) = self.atoms {
            p.n_atoms = v;
        }
        if let Some(v) = self.sparsity {
            p.sparsity = v;
        }
        if let Some(v) = self.dict_iters {
            p.dict_iters = v;
        }
        if let Some(v) = &self.patch {
            p.patch_shape = v.clone();
        }
        if let Some(v) = self.stride {
            p.stride = v;
        }
        if let Some(v) = self.max_fit {
            p.max_fit = v;
        }
        if let Some(v) = self.lambda {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("lambda must be positive, got {v}")));
            }
            p.coding.lambda = Lambda::RelativeToMax(v);
        }
        if let Some(v) = self.coding_iters {
            p.coding.max_iters = v;
        }
        if let Some(v) = self.coding_tol {
            p.coding.tol = v;
        }
        if let Some(v) = self.update_iters {
            p.update_iters = v;
        }
        if let Some(v) = &self.pool {
            p.pool = v.clone();
        }
        if let Some(v) = self.pca_dims {
            p.pca_dims = v;
        }
        if let Some(g) = &self.gabor {
            let d = GaborParams::default();
            p.gabor = GaborParams {
                scales: g.scales.unwrap_or(d.scales),
                orientations: g.orientations.unwrap_or(d.orientations),
                size: g.size.unwrap_or(d.size),
                wavelength: g.wavelength.unwrap_or(d.wavelength),
                sigma_ratio: g.sigma_ratio.unwrap_or(d.sigma_ratio),
                gamma: g.gamma.unwrap_or(d.gamma),
            };
        }
        if p.pool.iter().any(|&c| c == 0) || p.patch_shape.iter().any(|&c| c == 0) || p.stride == 0 {
            return Err(CliError::Config(format!("{}: zero pool, patch or stride", self.label())));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Patch / kernel extents; square for 2D data.
    #[serde(default = "default_patches")]
    pub patches: Vec<usize>,
    /// PDL stride as a fraction of the patch extent (at least 1 sample).
    #[serde(default = "default_stride_fraction")]
    pub stride_fraction: f64,
    /// When set, the PDL atom count is chosen per patch so that its feature
    /// length is as close as possible to this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_dim: Option<usize>,
}

fn default_patches() -> Vec<usize> {
    vec![4, 8, 16, 32]
}

fn default_stride_fraction() -> f64 {
    0.5
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            patches: default_patches(),
            stride_fraction: default_stride_fraction(),
            match_dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmSpec {
    #[serde(default = "default_svm_lambda")]
    pub lambda: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_svm_lambda() -> f64 {
    1e-4
}

fn default_epochs() -> usize {
    20
}

impl Default for SvmSpec {
    fn default() -> Self {
        Self {
            lambda: default_svm_lambda(),
            epochs: default_epochs(),
        }
    }
}

impl SvmSpec {
    pub fn params(&self, seed: u64) -> SvmParams {
        SvmParams {
            lambda: self.lambda,
            epochs: self.epochs,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistSpec {
    /// Frame for shifted copies of the samples; no shifting when absent.
    #[serde(default)]
    pub frame: Option<usize>,
    /// Shift search bound per axis; full overlap when absent.
    #[serde(default)]
    pub max_shift: Option<usize>,
    #[serde(default)]
    pub normalized_xcorr: bool,
}

impl Default for DistSpec {
    fn default() -> Self {
        Self {
            frame: None,
            max_shift: None,
            normalized_xcorr: false,
        }
    }
}

/// A parsed configuration plus the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses TOML text; errors carry `origin:line:`.
pub fn parse_config(text: &str, origin: &str) -> Result<Config, CliError> {
    let config: Config = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
        CliError::Config(format!("{origin}:{line}: {}", e.message()))
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config = parse_config(&text, &path.display().to_string())?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, base_dir })
}

impl Config {
    pub fn validate(&self) -> Result<(), CliError> {
        for m in &self.methods {
            m.params()?;
        }
        let mut labels: Vec<String> = self.methods.iter().map(|m| m.label()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.methods.len() {
            return Err(CliError::Config("method names must be unique".into()));
        }
        if self.cluster.k == 0 || self.cluster.atom.is_empty() || self.cluster.atom.iter().any(|&a| a == 0) {
            return Err(CliError::Config("cluster.k and cluster.atom must be positive".into()));
        }
        if !(self.svm.lambda > 0.0) || self.svm.epochs == 0 {
            return Err(CliError::Config("svm.lambda and svm.epochs must be positive".into()));
        }
        if !(self.sweep.stride_fraction > 0.0 && self.sweep.stride_fraction <= 1.0) {
            return Err(CliError::Config("sweep.stride_fraction must be in (0, 1]".into()));
        }
        if self.sweep.match_dim == Some(0) {
            return Err(CliError::Config("sweep.match_dim must be positive".into()));
        }
        let needs_methods = matches!(
            self.experiment,
            ExperimentKind::Classify | ExperimentKind::SweepPatch | ExperimentKind::ExportAtoms
        );
        if needs_methods && self.methods.is_empty() {
            return Err(CliError::Config(format!("{} needs at least one [[methods]] entry", self.experiment.name())));
        }
        Ok(())
    }

    /// Short content hash of the configuration, excluding the seed.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seed");
        }
        let digest = Sha256::digest(serde_json::to_string(&value).expect("json").as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Multiplies every sample count by `factor` (at least 1 where nonzero).
    pub fn apply_scale(&mut self, factor: f64) -> Result<(), CliError> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(CliError::Config(format!("--scale must be positive, got {factor}")));
        }
        let f = |n: usize| if n == 0 { 0 } else { ((n as f64 * factor).round() as usize).max(1) };
        self.scale.per_class = f(self.scale.per_class);
        self.scale.train_sizes = self.scale.train_sizes.iter().map(|&n| f(n)).collect();
        self.scale.test_size = f(self.scale.test_size);
        Ok(())
    }
}

impl LoadedConfig {
    /// Resolves a data path: absolute paths are kept, relative ones join the
    /// data root (`CONVSPARSE_DATA`, else `data.root`, else the config dir).
    pub fn data_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let root = match std::env::var_os(DATA_ENV) {
            Some(r) => PathBuf::from(r),
            None => match &self.config.data.root {
                Some(r) if r.is_absolute() => r.clone(),
                Some(r) => self.base_dir.join(r),
                None => self.base_dir.clone(),
            },
        };
        root.join(p)
    }
}
