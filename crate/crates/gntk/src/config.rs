//! Experiment configuration. Every field has a default, and the defaults
//! are the ring experiment: 100-node ring, two ReLU layers, `σ_w² = 32`,
//! `σ_b² = 0`, six training nodes, `η = 0.1`, and layer-wise sampling
//! without replacement at `q = 1/2` next to the unsampled kernel.

use std::path::{Path, PathBuf};

use gntk_core::dsl::NetworkProgram;
use gntk_core::graph::{figure1_split, identity_features};
use gntk_core::linalg::{self, SymmetricSpectrum};
use gntk_core::sampling::{fastgcn_probabilities, uniform_probabilities};
use gntk_core::{ActivationKind, FeatureMoment, GcnHyper, GraphSpec, Mat, Normalization, SamplingScheme, SchemeSchedule, TrainSplit};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::graph_io::{self, LoadedGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    /// Overrides the normalization of the graph source.
    pub normalization: Option<Normalization>,
    pub features: FeatureSource,
    pub architecture: Architecture,
    pub hyper: HyperConfig,
    pub schemes: Vec<SchemeEntry>,
    pub split: SplitSource,
    pub eta: f64,
    pub times: Vec<f64>,
    pub epsilon: f64,
    pub seed: u64,
    pub n_paths: usize,
    pub output_dir: Option<PathBuf>,
    pub oracle: OracleConfig,
    pub finite: FiniteConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            graph: GraphSource::Builtin("ring100".into()),
            normalization: None,
            features: FeatureSource::Named("identity".into()),
            architecture: Architecture::Gcn,
            hyper: HyperConfig::default(),
            schemes: vec![
                SchemeEntry {
                    name: Some("none".into()),
                    scheme: ScheduleSpec::Single(SchemeSpec::None),
                },
                SchemeEntry {
                    name: Some("layer_without_replacement".into()),
                    scheme: ScheduleSpec::Single(SchemeSpec::LayerWithoutReplacement {
                        q: InclusionSpec::Constant(0.5),
                    }),
                },
            ],
            split: SplitSource::Named("figure1".into()),
            eta: 0.1,
            times: vec![0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 1.0, 10.0, 100.0],
            epsilon: gntk_core::dynamics::DEFAULT_EPSILON,
            seed: 0,
            n_paths: 10,
            output_dir: None,
            oracle: OracleConfig::default(),
            finite: FiniteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphSource {
    /// `"ring100"`
    Builtin(String),
    /// Edge-list JSON, relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSource {
    /// `"identity"`: `X⁽⁰⁾ = I`, `C⁽⁰⁾ = I / N`.
    Named(String),
    /// Explicit `C⁽⁰⁾`, row-major.
    Moment { moment: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Gcn,
    Graphsage,
    Program(NetworkProgram),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperConfig {
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    pub n_layers: usize,
    pub activation: ActivationKind,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            sigma_w2: 32.0,
            sigma_b2: 0.0,
            n_layers: 2,
            activation: ActivationKind::Relu,
        }
    }
}

impl From<HyperConfig> for GcnHyper {
    fn from(h: HyperConfig) -> Self {
        GcnHyper {
            sigma_w2: h.sigma_w2,
            sigma_b2: h.sigma_b2,
            n_layers: h.n_layers,
            activation: h.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub scheme: ScheduleSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    PerLayer(Vec<SchemeSpec>),
    Single(SchemeSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeSpec {
    None,
    LayerWithReplacement { p: ProbSpec, n_samples: usize },
    LayerWithoutReplacement { q: InclusionSpec },
    NodeWise { fanout: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    /// `"uniform"` or `"fastgcn"`
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InclusionSpec {
    Constant(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSource {
    /// `"figure1"`: the six ring nodes nearest `±0.5, ±1.5, ±2.5`.
    Named(String),
    Explicit { train_idx: Vec<usize>, y_b: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub enabled: bool,
    /// Width of every hidden layer of the random networks.
    pub hidden_width: usize,
    pub n_trials: usize,
    pub mask_draws: usize,
    pub moment_samples: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            enabled: true,
            hidden_width: 1024,
            n_trials: 100,
            mask_draws: 100_000,
            moment_samples: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiniteConfig {
    pub enabled: bool,
    pub hidden_widths: Vec<usize>,
    pub n_networks: usize,
    /// Gradient steps at which outputs are recorded; the last is the run
    /// length.
    pub steps: Vec<usize>,
    /// Defaults to the experiment's `eta`.
    pub eta: Option<f64>,
    /// Normalization of the adjacency seen by the finite networks.
    pub normalization: Option<Normalization>,
}

impl Default for FiniteConfig {
    fn default() -> Self {
        FiniteConfig {
            enabled: true,
            hidden_widths: vec![100],
            n_networks: 10,
            steps: vec![0, 1, 2, 5, 10, 20, 50, 100, 200, 500],
            eta: None,
            // gradient descent at η = 0.1 diverges on the raw ring
            normalization: Some(Normalization::Row),
        }
    }
}

/// Named presets for `--preset`.
pub fn preset(name: &str) -> CliResult<ExperimentConfig> {
    match name {
        "figure1" => Ok(ExperimentConfig::default()),
        other => Err(CliError::InvalidConfig(format!("unknown preset {other:?}"))),
    }
}

/// Read a config file. Relative paths inside resolve against its directory.
pub fn load_config(path: &Path) -> CliResult<(ExperimentConfig, PathBuf)> {
    if !path.exists() {
        return Err(CliError::ConfigNotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| CliError::ConfigParse(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: GraphSpec,
    pub loaded: LoadedGraph,
    pub c0: FeatureMoment,
    /// Input features for the finite networks, `X Xᵀ / d₀ = C⁽⁰⁾`.
    pub x0: Mat,
    pub hyper: GcnHyper,
    pub schemes: Vec<(String, SchemeSchedule)>,
    pub split: TrainSplit,
}

impl Experiment {
    pub fn finite_eta(&self) -> f64 {
        self.config.finite.eta.unwrap_or(self.config.eta)
    }

    pub fn finite_graph(&self) -> CliResult<GraphSpec> {
        match self.config.finite.normalization {
            Some(mode) => Ok(self.loaded.spec(mode)?),
            None => Ok(self.graph.clone()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidConfig(msg.into())
}

fn check_positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_increasing<T: PartialOrd + Copy + std::fmt::Debug>(name: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if let Some(w) = v.windows(2).find(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(invalid(format!("{name} must be strictly increasing ({:?} then {:?})", w[0], w[1])));
    }
    Ok(())
}

fn scheme_kind(spec: &SchemeSpec) -> &'static str {
    match spec {
        SchemeSpec::None => "none",
        SchemeSpec::LayerWithReplacement { .. } => "layer_with_replacement",
        SchemeSpec::LayerWithoutReplacement { .. } => "layer_without_replacement",
        SchemeSpec::NodeWise { .. } => "node_wise",
    }
}

fn resolve_scheme(spec: &SchemeSpec, graph: &GraphSpec) -> CliResult<SamplingScheme> {
    let n = graph.n_nodes();
    let scheme = match spec {
        SchemeSpec::None => SamplingScheme::None,
        SchemeSpec::LayerWithReplacement { p, n_samples } => {
            let p = match p {
                ProbSpec::Named(name) if name == "uniform" => uniform_probabilities(n),
                ProbSpec::Named(name) if name == "fastgcn" => fastgcn_probabilities(graph.adjacency())?,
                ProbSpec::Named(other) => {
                    return Err(invalid(format!("unknown sampling distribution {other:?} (uniform | fastgcn | list)")))
                }
                ProbSpec::Explicit(p) => p.clone(),
            };
            SamplingScheme::LayerWithReplacement { p, n_samples: *n_samples }
        }
        SchemeSpec::LayerWithoutReplacement { q } => SamplingScheme::LayerWithoutReplacement {
            q: match q {
                InclusionSpec::Constant(v) => vec![*v; n],
                InclusionSpec::Explicit(q) => q.clone(),
            },
        },
        SchemeSpec::NodeWise { fanout } => SamplingScheme::NodeWise { fanout: *fanout },
    };
    scheme.validate(n)?;
    Ok(scheme)
}

fn resolve_features(source: &FeatureSource, n: usize) -> CliResult<(FeatureMoment, Mat)> {
    match source {
        FeatureSource::Named(name) if name == "identity" => Ok((identity_features(n), Mat::identity(n, n))),
        FeatureSource::Named(other) => Err(invalid(format!("unknown feature source {other:?}"))),
        FeatureSource::Moment { moment } => {
            if moment.len() != n || moment.iter().any(|r| r.len() != n) {
                return Err(invalid(format!("feature moment must be {n}x{n}")));
            }
            let flat: Vec<f64> = moment.iter().flatten().copied().collect();
            let c0 = FeatureMoment::new(Mat::from_row_slice(n, n, &flat))?;
            // X = √n F with F Fᵀ = C⁽⁰⁾, so X Xᵀ / n = C⁽⁰⁾
            let factor = SymmetricSpectrum::new(c0.matrix())?.psd_sqrt_factor();
            Ok((c0, factor * (n as f64).sqrt()))
        }
    }
}

fn resolve_split(source: &SplitSource, n: usize) -> CliResult<TrainSplit> {
    match source {
        SplitSource::Named(name) if name == "figure1" => {
            if n != gntk_core::graph::RING_NODES {
                return Err(invalid("split \"figure1\" needs the 100-node ring"));
            }
            Ok(figure1_split())
        }
        SplitSource::Named(other) => Err(invalid(format!("unknown split {other:?}"))),
        SplitSource::Explicit { train_idx, y_b } => Ok(TrainSplit::new(n, train_idx.clone(), y_b.clone())?),
    }
}

/// Validate `config` and build the graph, features, schemes and split.
pub fn resolve(config: ExperimentConfig, base_dir: &Path) -> CliResult<Experiment> {
    check_positive("eta", config.eta)?;
    check_positive("epsilon", config.epsilon)?;
    check_increasing("times", &config.times)?;
    if config.times[0] != 0.0 || config.times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("times must be finite and start at 0"));
    }
    let hyper: GcnHyper = config.hyper.into();
    hyper.validate()?;

    let loaded = graph_io::load(&config.graph, base_dir)?;
    let mode = config.normalization.unwrap_or(loaded.normalization);
    let graph = loaded.spec(mode)?;
    let n = graph.n_nodes();
    let (c0, x0) = resolve_features(&config.features, n)?;
    let split = resolve_split(&config.split, n)?;

    if config.schemes.is_empty() {
        return Err(invalid("schemes is empty"));
    }
    let mut schemes = Vec::with_capacity(config.schemes.len());
    for entry in &config.schemes {
        let (default_name, schedule) = match &entry.scheme {
            ScheduleSpec::Single(s) => (scheme_kind(s).to_string(), SchemeSchedule::Broadcast(resolve_scheme(s, &graph)?)),
            ScheduleSpec::PerLayer(list) => (
                list.iter().map(scheme_kind).collect::<Vec<_>>().join("+"),
                SchemeSchedule::PerLayer(list.iter().map(|s| resolve_scheme(s, &graph)).collect::<CliResult<_>>()?),
            ),
        };
        schedule.validate(hyper.n_layers, n)?;
        let name = entry.name.clone().unwrap_or(default_name);
        if name.is_empty() || name.contains([',', '"', '\n']) {
            return Err(invalid(format!("scheme name {name:?} must be nonempty without commas or quotes")));
        }
        if schemes.iter().any(|(other, _)| *other == name) {
            return Err(invalid(format!("duplicate scheme name {name:?}")));
        }
        schemes.push((name, schedule));
    }
    if let Architecture::Program(program) = &config.architecture {
        gntk_core::dsl::validate_program(program)?;
        if schemes.iter().any(|(_, s)| *s != SchemeSchedule::none()) {
            return Err(invalid("a custom program carries its own sampling blocks; use scheme kind \"none\""));
        }
    }

    if config.finite.enabled {
        check_increasing("finite.steps", &config.finite.steps)?;
        if let Some(eta) = config.finite.eta {
            check_positive("finite.eta", eta)?;
        }
        if config.finite.hidden_widths.len() + 1 != hyper.n_layers || config.finite.hidden_widths.contains(&0) {
            return Err(invalid(format!(
                "finite.hidden_widths needs {} positive entries (one per hidden layer)",
                hyper.n_layers - 1
            )));
        }
    }
    if config.oracle.enabled && (config.oracle.hidden_width == 0 || config.oracle.n_trials == 0) {
        return Err(invalid("oracle.hidden_width and oracle.n_trials must be positive"));
    }
    debug_assert!(linalg::max_asymmetry(c0.matrix()) <= linalg::SYMMETRY_TOL);

    Ok(Experiment {
        config,
        graph,
        loaded,
        c0,
        x0,
        hyper,
        schemes,
        split,
    })
}
