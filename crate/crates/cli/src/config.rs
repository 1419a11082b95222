//! The run configuration: one TOML document covering data paths, backends, weights,
//! split spec and mode flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use relgen_core::backend::mock::{Faults, FusionBehavior};
use relgen_core::blending::{BlendMode, TrainDevMode, DEFAULT_TRIO};
use relgen_core::generation::{validate_backends, BackendKind, GeneratorBackend};
use relgen_core::ranking::WeightConfig;
use relgen_core::scoring::{Metric, ReferenceKind};
use relgen_core::types::SplitSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub registry: PathBuf,
    pub tuples: PathBuf,
    pub templates: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contexts: Option<PathBuf>,
}

/// Where a model-backed service lives. No endpoint means the in-process mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding a bearer token. The token itself is
    /// never written anywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
}

fn default_timeout() -> u64 {
    120
}

impl Default for ServiceRef {
    fn default() -> Self {
        Self {
            endpoint: None,
            token_env: None,
            timeout_secs: default_timeout(),
            max_in_flight: None,
            requests_per_second: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(flatten)]
    pub backend: GeneratorBackend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
    /// Prices per 1,000 whitespace tokens, for the cost table.
    #[serde(default)]
    pub prompt_cost_per_1k: f64,
    #[serde(default)]
    pub output_cost_per_1k: f64,
    /// Scripted misbehaviour; only honoured by mock backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faults: Option<Faults>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fusion: Option<FusionBehavior>,
}

impl BackendConfig {
    pub fn service(&self) -> ServiceRef {
        ServiceRef {
            endpoint: self.backend.endpoint.clone(),
            token_env: self.token_env.clone(),
            timeout_secs: self.timeout_secs,
            max_in_flight: self.max_in_flight,
            requests_per_second: self.requests_per_second,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub quota_per_bucket: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub test_per_bucket: usize,
    pub dev_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    /// Template backend producing gold sentences.
    pub gold: String,
    /// Context-grounded backend, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ecb: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraserConfig {
    pub id: String,
    #[serde(flatten)]
    pub service: ServiceRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SilverConfig {
    pub a: ParaphraserConfig,
    pub b: ParaphraserConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    #[serde(default)]
    pub service: ServiceRef,
    #[serde(default = "default_chunk")]
    pub chunk_size: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            service: ServiceRef::default(),
            chunk_size: default_chunk(),
        }
    }
}

fn default_chunk() -> usize {
    64
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub reference: ReferenceKind,
    /// Optional `metric = weight` file; entries in `weights` apply on top.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<PathBuf>,
    #[serde(default)]
    pub weights: BTreeMap<String, f64>,
    #[serde(default)]
    pub priority: Vec<String>,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            reference: ReferenceKind::default(),
            weights_file: None,
            weights: BTreeMap::new(),
            priority: Vec::new(),
        }
    }
}

fn default_trio() -> Vec<String> {
    DEFAULT_TRIO.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlendConfig {
    /// Fusion backend id.
    pub fuser: String,
    #[serde(default)]
    pub mode: BlendMode,
    #[serde(default)]
    pub train_dev_mode: TrainDevMode,
    #[serde(default = "default_trio")]
    pub trio: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RcStyle {
    ZeroShot,
    FewShot,
}

impl RcStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            RcStyle::ZeroShot => "zero-shot",
            RcStyle::FewShot => "few-shot-cot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub id: String,
    pub style: RcStyle,
    #[serde(flatten)]
    pub service: ServiceRef,
    /// Mock that answers from the gold labels, optionally corrupted.
    #[serde(default)]
    pub oracle: bool,
    #[serde(default)]
    pub error_rate: f64,
    #[serde(default)]
    pub unparseable_rate: f64,
    #[serde(default)]
    pub prompt_cost_per_1k: f64,
    #[serde(default)]
    pub output_cost_per_1k: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcConfig {
    /// Offer only the classes present in the evaluated split.
    #[serde(default)]
    pub class_subset: bool,
    #[serde(default = "default_rc_chunk")]
    pub chunk: usize,
    #[serde(default)]
    pub classifiers: Vec<ClassifierConfig>,
}

fn default_rc_chunk() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataPaths,
    pub sample: SampleConfig,
    pub split: SplitConfig,
    pub generation: GenerationConfig,
    pub backends: Vec<BackendConfig>,
    pub silver: SilverConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub ranking: RankingConfig,
    pub blend: BlendConfig,
    #[serde(default)]
    pub rc: RcConfig,
}

/// A validated config together with the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
}

impl Config {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_path_buf(),
            source,
        })
    }

    pub fn backend(&self, id: &str) -> Option<&BackendConfig> {
        self.backends.iter().find(|b| b.backend.id == id)
    }

    pub fn split_spec(&self) -> Result<SplitSpec, ConfigError> {
        SplitSpec::new(
            self.split.test_per_bucket,
            self.split.dev_fraction,
            self.seed,
        )
        .map_err(|e| invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let backends: Vec<GeneratorBackend> =
            self.backends.iter().map(|b| b.backend.clone()).collect();
        validate_backends(&backends).map_err(|e| invalid(e.to_string()))?;
        if self.sample.quota_per_bucket == 0 {
            return Err(invalid("sample.quota_per_bucket must be at least 1"));
        }
        self.split_spec()?;
        let expect_kind = |id: &str, kind: BackendKind, role: &str| match self.backend(id) {
            Some(b) if b.backend.kind == kind => Ok(()),
            Some(b) => Err(invalid(format!(
                "{role} backend {id} has kind {}, expected {kind}",
                b.backend.kind
            ))),
            None => Err(invalid(format!("{role} backend {id} is not configured"))),
        };
        expect_kind(&self.generation.gold, BackendKind::Template, "gold")?;
        if let Some(ecb) = &self.generation.ecb {
            expect_kind(ecb, BackendKind::Ecb, "ecb")?;
            if self.data.contexts.is_none() {
                return Err(invalid("an ecb backend needs data.contexts"));
            }
        }
        expect_kind(&self.blend.fuser, BackendKind::FusionModel, "fuser")?;
        for b in &self.backends {
            if b.backend.kind == BackendKind::RemoteModel && b.backend.endpoint.is_none() {
                return Err(invalid(format!(
                    "remote-model backend {} needs an endpoint (use kind = \"mock\" for offline runs)",
                    b.backend.id
                )));
            }
        }
        if self.blend.train_dev_mode == TrainDevMode::FixedTrio {
            for id in &self.blend.trio {
                match self.backend(id) {
                    Some(b) if b.backend.kind.is_rankable() => {}
                    _ => {
                        return Err(invalid(format!(
                            "trio member {id} is not a configured generator"
                        )))
                    }
                }
            }
        }
        if self.ranking.k == 0 {
            return Err(invalid("ranking.k must be at least 1"));
        }
        for name in self.ranking.weights.keys() {
            name.parse::<Metric>().map_err(invalid)?;
        }
        if self.silver.a.id == self.silver.b.id {
            return Err(invalid("silver paraphrasers must differ"));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.rc.classifiers {
            if !seen.insert((c.id.as_str(), c.style)) {
                return Err(invalid(format!(
                    "classifier {} {} listed twice",
                    c.id,
                    c.style.as_str()
                )));
            }
            for (name, v) in [
                ("error_rate", c.error_rate),
                ("unparseable_rate", c.unparseable_rate),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(format!(
                        "classifier {}: {name} outside [0, 1]",
                        c.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form. Formatting, comments and key order in
    /// the TOML source do not change it.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&canonical_json(
            serde_json::to_value(self).expect("config serializes"),
        ))
        .expect("json");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn canonical_json(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let sorted: BTreeMap<String, Value> = map
                .into_iter()
                .map(|(k, v)| (k, canonical_json(v)))
                .collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical_json).collect()),
        other => other,
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Config::parse(&text, path)?;
        config.validate()?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Default weights, then the weights file, then inline overrides.
    pub fn weights(&self) -> Result<WeightConfig, ConfigError> {
        let mut w = WeightConfig::default();
        if let Some(file) = &self.config.ranking.weights_file {
            let path = self.resolve(file);
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Read {
                path: path.clone(),
                source,
            })?;
            w.apply_overrides(&text)
                .map_err(|e| invalid(e.to_string()))?;
        }
        let inline: String = self
            .config
            .ranking
            .weights
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        w.apply_overrides(&inline)
            .map_err(|e| invalid(e.to_string()))?;
        w.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"
seed = 7

[data]
registry = "registry.tsv"
tuples = "tuples.jsonl"
templates = "templates.tsv"
contexts = "contexts.jsonl"

[sample]
quota_per_bucket = 5

[split]
test_per_bucket = 1
dev_fraction = 0.2

[generation]
gold = "gold"
ecb = "ecb"

[[backends]]
id = "gold"
kind = "template"

[[backends]]
id = "ecb"
kind = "ecb"

[[backends]]
id = "llama"
kind = "mock"
prompt_style = "numbered"

[[backends]]
id = "gpt-3.5"
kind = "mock"

[[backends]]
id = "flan-t5-webnlg"
kind = "mock"

[[backends]]
id = "gemini-pro"
kind = "fusion-model"

[silver]
a = { id = "pegasus" }
b = { id = "humarin" }

[blend]
fuser = "gemini-pro"
"#;

    #[test]
    fn sample_parses_and_validates() {
        let c = Config::parse(SAMPLE, Path::new("x.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.backends[2].backend.batch_size, 60);
        assert_eq!(c.ranking.k, 3);
        assert_eq!(c.blend.trio, default_trio());
    }

    #[test]
    fn digest_ignores_formatting_and_key_order() {
        let a = Config::parse(SAMPLE, Path::new("a")).unwrap();
        let reordered = SAMPLE.replace(
            "[split]\ntest_per_bucket = 1\ndev_fraction = 0.2",
            "[split]\n# comment\ndev_fraction   =   0.2\ntest_per_bucket=1",
        );
        let b = Config::parse(&reordered, Path::new("b")).unwrap();
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn rejects_unknown_roles_and_keys() {
        let bad = SAMPLE.replace("fuser = \"gemini-pro\"", "fuser = \"llama\"");
        let c = Config::parse(&bad, Path::new("x")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("fuser"));

        let typo = SAMPLE.replace("[sample]", "[sample]\nquota = 3");
        assert!(Config::parse(&typo, Path::new("x")).is_err());

        let remote = SAMPLE.replace(
            "id = \"llama\"\nkind = \"mock\"",
            "id = \"llama\"\nkind = \"remote-model\"",
        );
        let c = Config::parse(&remote, Path::new("x")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("endpoint"));
    }

    #[test]
    fn inline_weights_override_defaults() {
        let text = format!("{SAMPLE}\n[ranking]\nweights = {{ bleu = 2.0 }}\n");
        let loaded = LoadedConfig {
            config: Config::parse(&text, Path::new("x")).unwrap(),
            base_dir: PathBuf::from("."),
        };
        let w = loaded.weights().unwrap();
        assert_eq!(w.get(Metric::Bleu), 2.0);
        assert_eq!(w.get(Metric::Grammar), 0.5);
    }
}
