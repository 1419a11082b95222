//! Stage execution over one run directory.
//!
//! Layout under the run directory:
//!
//! ```text
//! manifest.json
//! sample/    tuples.jsonl report.json
//! generate/  <backend>.raw.jsonl silver.jsonl
//! map/       candidates.jsonl reports.json
//! score/     scores.jsonl
//! rank/      rankings.jsonl weights.txt
//! blend/     dataset.jsonl outcomes.jsonl report.json
//! final/     train.jsonl dev.jsonl test.jsonl header.json
//! eval/      <model>.<style>.predictions.jsonl reports.json
//! report/    final_scores.jsonl report.json report.txt
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use relgen_core::backend::mock::{
    MockCorrector, MockEmbedder, MockJudge, MockParaphraser, MockSentiment, MockTextModel,
    OracleClassifier,
};
use relgen_core::backend::{
    HttpTransport, Paraphraser, RateLimiter, RemoteClient, RetryPolicy, TextModel,
};
use relgen_core::blending::{
    consolidate, BlendMaterials, BlendOutcome, ConsolidationConfig, ConsolidationReport,
};
use relgen_core::buckets::{build_buckets, sample_balanced};
use relgen_core::generation::{
    generate_raw, map_raw, whitespace_tokens, BackendKind, Engine, FileContextProvider,
    GenerationReport, PromptStyle as GenStyle, RawBatch,
};
use relgen_core::ranking::{rank_by_tuple, Priority, TupleRanking, WeightConfig};
use relgen_core::rc_eval::{
    build_few_shot_cot_prompt, build_zero_shot_prompt, classify, compute_metrics, Exemplar,
    Prediction, PromptStyle, UnparseableReason,
};
use relgen_core::registry::Registry;
use relgen_core::scoring::{score_candidates, References, ScoreRecord, ScoringBackends};
use relgen_core::splits::assign_splits;
use relgen_core::store::{read_jsonl, write_atomic, write_jsonl, StoreError, TEMP_SUFFIX};
use relgen_core::templates::{silver_generate, SilverSentence, TemplateSet};
use relgen_core::types::{BucketKey, CandidateSentence, DatasetInstance, RelationTuple, Split};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{
    BackendConfig, ClassifierConfig, ConfigError, LoadedConfig, RcStyle, ServiceRef,
};
use crate::manifest::{sha256_file, BackendInfo, RunManifest, Stage};
use crate::report::{self, GeneratorInfo, RcResult, ReportInputs, RunInfo, DATASET_LABEL};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage} needs stage {missing} to be complete first")]
    UpstreamMissing { stage: Stage, missing: Stage },
    #[error(transparent)]
    ConfigInvalid(#[from] ConfigError),
    #[error(
        "run directory {dir} was created with config digest {found}, current config has {expected}; use a fresh --run-dir"
    )]
    ConfigChanged {
        dir: PathBuf,
        found: String,
        expected: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("stage {stage}: {message}")]
    Stage { stage: Stage, message: String },
}

fn stage_err(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage, message }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

/// What a stage hands back for its marker.
struct StageOutput {
    outputs: Vec<PathBuf>,
    inputs: BTreeMap<String, String>,
    summary: Value,
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub instance_id: String,
    pub raw: String,
    /// `(t1, r, t2)` or `UNPARSEABLE`.
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparseable: Option<UnparseableReason>,
}

impl From<&Prediction> for PredictionLine {
    fn from(p: &Prediction) -> Self {
        Self {
            instance_id: p.instance_id.clone(),
            raw: p.raw.clone(),
            label: p.label_text(),
            unparseable: p.unparseable,
        }
    }
}

/// The run-manifest header written next to the final dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub run_id: String,
    pub config_digest: String,
    pub seed: u64,
    pub mode: String,
    pub train_dev_mode: String,
    pub reference: String,
    pub weights: WeightConfig,
    pub backends: BTreeMap<String, BackendInfo>,
    pub counts: BTreeMap<Split, usize>,
}

pub fn stage_dir(stage: Stage) -> &'static str {
    match stage {
        Stage::Split => "final",
        Stage::EvalRc => "eval",
        other => other.as_str(),
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Scoring models behind one service, or the in-process mocks.
enum Scorers {
    Remote(Box<RemoteClient>),
    Mock(MockEmbedder),
}

impl Scorers {
    fn backends(&self) -> ScoringBackends<'_> {
        match self {
            Scorers::Remote(c) => ScoringBackends {
                corrector: c.as_ref(),
                embedder: c.as_ref(),
                sentiment: c.as_ref(),
                judge: c.as_ref(),
            },
            Scorers::Mock(embedder) => ScoringBackends {
                corrector: &MockCorrector,
                embedder,
                sentiment: &MockSentiment,
                judge: &MockJudge,
            },
        }
    }
}

pub struct Pipeline {
    cfg: LoadedConfig,
    run_dir: PathBuf,
    manifest: RunManifest,
    /// `data:<role>` → SHA-256 of each input data file.
    data: BTreeMap<String, String>,
    weights: WeightConfig,
}

impl Pipeline {
    /// Opens (or starts) the run in `run_dir`. A run directory is tied to one config digest.
    pub fn open(cfg: LoadedConfig, run_dir: &Path) -> Result<Self, PipelineError> {
        cfg.config.validate()?;
        let weights = cfg.weights()?;
        let digest = cfg.config.digest();
        std::fs::create_dir_all(run_dir).map_err(|source| PipelineError::Io {
            path: run_dir.to_path_buf(),
            source,
        })?;
        let manifest = match RunManifest::load(run_dir)? {
            Some(m) if m.config_digest != digest => {
                return Err(PipelineError::ConfigChanged {
                    dir: run_dir.to_path_buf(),
                    found: m.config_digest,
                    expected: digest,
                })
            }
            Some(m) => m,
            None => RunManifest::new(&digest, cfg.config.seed),
        };
        let mut data = BTreeMap::new();
        let d = &cfg.config.data;
        let mut files = vec![
            ("registry", Some(&d.registry)),
            ("tuples", Some(&d.tuples)),
            ("templates", Some(&d.templates)),
            ("contexts", d.contexts.as_ref()),
            ("weights", cfg.config.ranking.weights_file.as_ref()),
        ];
        for (role, path) in files.drain(..) {
            if let Some(p) = path {
                let path = cfg.resolve(p);
                let sum =
                    sha256_file(&path).map_err(|source| ConfigError::Read { path, source })?;
                data.insert(format!("data:{role}"), sum);
            }
        }
        Ok(Self {
            cfg,
            run_dir: run_dir.to_path_buf(),
            manifest,
            data,
            weights,
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn is_complete(&self, stage: Stage) -> bool {
        self.manifest.is_complete(stage, &self.run_dir, &self.data)
    }

    /// Runs `stage` unless it is already complete (or `force` is set).
    pub fn run(&mut self, stage: Stage, force: bool) -> Result<StageStatus, PipelineError> {
        if !force && self.is_complete(stage) {
            log::info!("{stage}: complete, nothing to do");
            return Ok(StageStatus::Skipped);
        }
        for up in stage.upstream() {
            if !self.is_complete(*up) {
                return Err(PipelineError::UpstreamMissing {
                    stage,
                    missing: *up,
                });
            }
        }
        self.clear_partials(stage)?;
        log::info!("{stage}: running");
        let out = match stage {
            Stage::Sample => self.sample()?,
            Stage::Generate => self.generate()?,
            Stage::Map => self.map()?,
            Stage::Score => self.score()?,
            Stage::Rank => self.rank()?,
            Stage::Blend => self.blend()?,
            Stage::Split => self.split()?,
            Stage::EvalRc => self.eval_rc()?,
            Stage::Report => self.report()?,
        };
        self.manifest
            .mark(stage, &self.run_dir, &out.outputs, out.inputs, out.summary)
            .map_err(|source| PipelineError::Io {
                path: self.run_dir.clone(),
                source,
            })?;
        self.manifest.save(&self.run_dir)?;
        Ok(StageStatus::Ran)
    }

    /// Every stage in order; completed stages are skipped unless `force`.
    pub fn run_all(&mut self, force: bool) -> Result<Vec<(Stage, StageStatus)>, PipelineError> {
        Stage::ALL
            .into_iter()
            .map(|s| self.run(s, force).map(|st| (s, st)))
            .collect()
    }

    /// Leftovers from an interrupted write are never read; remove them before rerunning.
    fn clear_partials(&self, stage: Stage) -> Result<(), PipelineError> {
        let dir = self.run_dir.join(stage_dir(stage));
        let Ok(entries) = std::fs::read_dir(&dir) else {
            return Ok(());
        };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.to_string_lossy().ends_with(TEMP_SUFFIX) {
                std::fs::remove_file(&path).map_err(|source| PipelineError::Io { path, source })?;
            }
        }
        Ok(())
    }

    // ---- file helpers ----

    fn path(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    fn write_lines<T: Serialize>(
        &self,
        rel: &str,
        records: &[T],
    ) -> Result<PathBuf, PipelineError> {
        write_jsonl(&self.path(rel), records)?;
        Ok(PathBuf::from(rel))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(StoreError::from)?;
        text.push('\n');
        write_atomic(&self.path(rel), text.as_bytes())?;
        Ok(PathBuf::from(rel))
    }

    fn write_text(&self, rel: &str, text: &str) -> Result<PathBuf, PipelineError> {
        write_atomic(&self.path(rel), text.as_bytes())?;
        Ok(PathBuf::from(rel))
    }

    fn read_lines<T: DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>, PipelineError> {
        Ok(read_jsonl(&self.path(rel))?)
    }

    fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, PipelineError> {
        let path = self.path(rel);
        let text = std::fs::read_to_string(&path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(serde_json::from_str(&text).map_err(StoreError::from)?)
    }

    fn read_data(&self, p: &Path) -> Result<String, PipelineError> {
        let path = self.cfg.resolve(p);
        std::fs::read_to_string(&path)
            .map_err(|source| PipelineError::ConfigInvalid(ConfigError::Read { path, source }))
    }

    fn data_inputs(&self, roles: &[&str]) -> BTreeMap<String, String> {
        roles
            .iter()
            .filter_map(|r| {
                let k = format!("data:{r}");
                self.data.get(&k).map(|v| (k, v.clone()))
            })
            .collect()
    }

    fn registry(&self) -> Result<Registry, PipelineError> {
        Registry::parse(&self.read_data(&self.cfg.config.data.registry)?)
            .map_err(|e| stage_err(Stage::Sample)(e.to_string()))
    }

    fn templates(&self) -> Result<TemplateSet, PipelineError> {
        TemplateSet::parse(&self.read_data(&self.cfg.config.data.templates)?)
            .map_err(|e| stage_err(Stage::Sample)(e.to_string()))
    }

    fn sampled(&self) -> Result<Vec<RelationTuple>, PipelineError> {
        self.read_lines("sample/tuples.jsonl")
    }

    fn tuple_index(tuples: &[RelationTuple]) -> HashMap<String, RelationTuple> {
        tuples.iter().map(|t| (t.id.clone(), t.clone())).collect()
    }

    fn candidates(&self) -> Result<Vec<CandidateSentence>, PipelineError> {
        self.read_lines("map/candidates.jsonl")
    }

    fn silver_map(&self) -> Result<HashMap<String, String>, PipelineError> {
        let silver: Vec<SilverSentence> = self.read_lines("generate/silver.jsonl")?;
        Ok(silver.into_iter().map(|s| (s.tuple_id, s.text)).collect())
    }

    fn gold_map(&self, candidates: &[CandidateSentence]) -> HashMap<String, String> {
        let gold = &self.cfg.config.generation.gold;
        candidates
            .iter()
            .filter(|c| &c.generator_id == gold)
            .map(|c| (c.tuple_id.clone(), c.text.clone()))
            .collect()
    }

    /// Backends that produce candidates, in config order.
    fn generators(&self) -> impl Iterator<Item = &BackendConfig> {
        self.cfg
            .config
            .backends
            .iter()
            .filter(|b| b.backend.kind != BackendKind::FusionModel)
    }

    fn is_rankable(&self, generator: &str) -> bool {
        self.cfg
            .config
            .backend(generator)
            .is_some_and(|b| b.backend.kind.is_rankable())
    }

    // ---- backends ----

    fn remote(
        &self,
        id: &str,
        svc: &ServiceRef,
        retry: RetryPolicy,
    ) -> Result<Option<RemoteClient>, PipelineError> {
        let Some(endpoint) = &svc.endpoint else {
            return Ok(None);
        };
        let token = match &svc.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ConfigError::Invalid(format!(
                    "backend {id}: environment variable {var} is not set"
                ))
            })?),
            None => None,
        };
        let transport = HttpTransport::new(endpoint, Duration::from_secs(svc.timeout_secs), token);
        let mut client = RemoteClient::new(id, Arc::new(transport)).with_retry(retry);
        if svc.max_in_flight.is_some() || svc.requests_per_second.is_some() {
            client = client.with_limiter(RateLimiter::new(
                svc.max_in_flight.unwrap_or(usize::MAX),
                svc.requests_per_second,
            ));
        }
        Ok(Some(client))
    }

    /// The model behind a generator or fuser. Retries happen in the caller, which
    /// applies the backend's own policy, so the client makes one attempt.
    fn text_model(&self, b: &BackendConfig) -> Result<Box<dyn TextModel>, PipelineError> {
        let once = RetryPolicy {
            max_attempts: 1,
            base_delay_ms: 0,
        };
        if let Some(c) = self.remote(&b.backend.id, &b.service(), once)? {
            return Ok(Box::new(c));
        }
        let mut m = MockTextModel::new(&b.backend.id);
        if let Some(f) = &b.faults {
            m = m.with_faults(f.clone());
        }
        if let Some(f) = b.fusion {
            m = m.with_fusion(f);
        }
        Ok(Box::new(m))
    }

    fn paraphraser(
        &self,
        id: &str,
        svc: &ServiceRef,
    ) -> Result<Box<dyn Paraphraser>, PipelineError> {
        Ok(match self.remote(id, svc, RetryPolicy::default())? {
            Some(c) => Box::new(c),
            None => Box::new(MockParaphraser::new(id)),
        })
    }

    fn scorers(&self) -> Result<Scorers, PipelineError> {
        Ok(
            match self.remote(
                "scorer",
                &self.cfg.config.scoring.service,
                RetryPolicy::default(),
            )? {
                Some(c) => Scorers::Remote(Box::new(c)),
                None => Scorers::Mock(MockEmbedder::default()),
            },
        )
    }

    fn classifier(
        &self,
        c: &ClassifierConfig,
        test: &[DatasetInstance],
    ) -> Result<Box<dyn TextModel>, PipelineError> {
        if c.oracle {
            let truth = test.iter().map(|i| {
                (
                    (i.sentence.clone(), i.tuple.e1.clone(), i.tuple.e2.clone()),
                    i.tuple.key(),
                )
            });
            return Ok(Box::new(
                OracleClassifier::new(&c.id, truth).with_noise(c.error_rate, c.unparseable_rate),
            ));
        }
        Ok(
            match self.remote(&c.id, &c.service, RetryPolicy::default())? {
                Some(client) => Box::new(client),
                None => Box::new(MockTextModel::new(&c.id)),
            },
        )
    }

    fn service_info(
        &self,
        id: &str,
        kind: &str,
        svc: &ServiceRef,
    ) -> Result<BackendInfo, PipelineError> {
        let version = match self.remote(id, svc, RetryPolicy::default())? {
            None => "mock".to_string(),
            Some(client) => match client.health() {
                Ok(h) => {
                    let models: Vec<String> =
                        h.models.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    models.join(",")
                }
                Err(e) => format!("unknown ({e})"),
            },
        };
        Ok(BackendInfo {
            kind: kind.to_string(),
            endpoint: svc.endpoint.clone(),
            version,
        })
    }

    /// Generators under their id; paraphrasers, scorer and classifiers under `role:id`.
    fn inventory(&self) -> Result<BTreeMap<String, BackendInfo>, PipelineError> {
        let c = &self.cfg.config;
        let mut out = BTreeMap::new();
        for b in &c.backends {
            let info = if b.backend.kind == BackendKind::Template {
                BackendInfo {
                    kind: b.backend.kind.as_str().into(),
                    endpoint: None,
                    version: "templates".into(),
                }
            } else {
                self.service_info(&b.backend.id, b.backend.kind.as_str(), &b.service())?
            };
            out.insert(b.backend.id.clone(), info);
        }
        for p in [&c.silver.a, &c.silver.b] {
            out.insert(
                format!("silver:{}", p.id),
                self.service_info(&p.id, "paraphraser", &p.service)?,
            );
        }
        out.insert(
            "scorer".into(),
            self.service_info("scorer", "scorer", &c.scoring.service)?,
        );
        for cl in &c.rc.classifiers {
            let info = if cl.oracle {
                BackendInfo {
                    kind: "classifier".into(),
                    endpoint: None,
                    version: "oracle".into(),
                }
            } else {
                self.service_info(&cl.id, "classifier", &cl.service)?
            };
            out.insert(format!("rc:{}", cl.id), info);
        }
        Ok(out)
    }

    // ---- stages ----

    fn sample(&mut self) -> Result<StageOutput, PipelineError> {
        let err = stage_err(Stage::Sample);
        let c = &self.cfg.config;
        let registry = self.registry()?;
        let tuples: Vec<RelationTuple> = read_jsonl(&self.cfg.resolve(&c.data.tuples))?;
        for t in &tuples {
            registry
                .admit(t)
                .map_err(|e| err(format!("tuple {}: {e}", t.id)))?;
        }
        let build = build_buckets(&tuples).map_err(|e| err(e.to_string()))?;
        let (sampled, report) = sample_balanced(&build.buckets, c.sample.quota_per_bucket, c.seed)
            .map_err(|e| err(e.to_string()))?;
        self.templates()?
            .ensure_covers(build.buckets.keys())
            .map_err(|e| err(e.to_string()))?;
        let empty: Vec<String> = registry
            .iter()
            .filter(|k| !build.buckets.contains_key(*k))
            .map(BucketKey::to_string)
            .collect();
        let summary = json!({
            "registry_keys": registry.len(),
            "buckets": report.buckets,
            "selected": report.selected,
            "duplicates_dropped": build.duplicates_dropped,
            "underfilled": report.underfilled,
            "empty_buckets": empty,
        });
        let outputs = vec![
            self.write_lines("sample/tuples.jsonl", &sampled)?,
            self.write_json("sample/report.json", &summary)?,
        ];
        Ok(StageOutput {
            outputs,
            inputs: self.data_inputs(&["registry", "tuples", "templates"]),
            summary,
        })
    }

    fn generate(&mut self) -> Result<StageOutput, PipelineError> {
        let err = stage_err(Stage::Generate);
        let tuples = self.sampled()?;
        let templates = self.templates()?;
        let contexts = match &self.cfg.config.data.contexts {
            Some(p) => FileContextProvider::load(&self.cfg.resolve(p))?,
            None => FileContextProvider::default(),
        };
        let mut outputs = Vec::new();
        let mut summary = serde_json::Map::new();
        let generators: Vec<BackendConfig> = self.generators().cloned().collect();
        for b in &generators {
            let model = match b.backend.kind {
                BackendKind::Template => None,
                _ => Some(self.text_model(b)?),
            };
            let engine = match (b.backend.kind, model.as_deref()) {
                (BackendKind::Template, _) => Engine::Templates(&templates),
                (BackendKind::Ecb, Some(m)) => Engine::Ecb {
                    model: m,
                    contexts: &contexts,
                },
                (_, Some(m)) => Engine::Model(m),
                (kind, None) => {
                    return Err(err(format!("no model for {kind} backend {}", b.backend.id)))
                }
            };
            let raw = generate_raw(&b.backend, engine, &tuples).map_err(|e| err(e.to_string()))?;
            let failed = raw.iter().filter(|r| r.outputs.is_none()).count();
            summary.insert(
                b.backend.id.clone(),
                json!({"batches": raw.len(), "failed_batches": failed}),
            );
            outputs.push(self.write_lines(&format!("generate/{}.raw.jsonl", b.backend.id), &raw)?);
        }

        let golds: Vec<(RelationTuple, String)> = tuples
            .iter()
            .map(|t| templates.fill(t).map(|s| (t.clone(), s)))
            .collect::<Result<_, _>>()
            .map_err(|e| err(e.to_string()))?;
        let s = &self.cfg.config.silver;
        let pa = self.paraphraser(&s.a.id, &s.a.service)?;
        let pb = self.paraphraser(&s.b.id, &s.b.service)?;
        let silver = silver_generate(&golds, pa.as_ref(), pb.as_ref());
        let failures: Vec<String> = silver
            .failures
            .iter()
            .map(|f| format!("{} on {}: {}", f.paraphraser_id, f.tuple_id, f.error))
            .collect();
        summary.insert(
            "silver".into(),
            json!({
                "sentences": silver.silvers.len(),
                "fallbacks": silver.silvers.iter().filter(|s| s.fallback).count(),
                "failures": failures,
            }),
        );
        outputs.push(self.write_lines("generate/silver.jsonl", &silver.silvers)?);
        self.manifest.backends = self.inventory()?;
        Ok(StageOutput {
            outputs,
            inputs: self.data_inputs(&["templates", "contexts"]),
            summary: Value::Object(summary),
        })
    }

    fn map(&mut self) -> Result<StageOutput, PipelineError> {
        let err = stage_err(Stage::Map);
        let tuples = self.sampled()?;
        let index = Self::tuple_index(&tuples);
        let mut candidates = Vec::new();
        let mut reports: Vec<GenerationReport> = Vec::new();
        for b in self.generators() {
            let raw: Vec<RawBatch> =
                self.read_lines(&format!("generate/{}.raw.jsonl", b.backend.id))?;
            let mut run = map_raw(&raw, &index).map_err(|e| err(e.to_string()))?;
            run.report.generator_id = b.backend.id.clone();
            candidates.extend(run.candidates);
            reports.push(run.report);
        }
        candidates.sort_by(|a: &CandidateSentence, b: &CandidateSentence| {
            (index[&a.tuple_id].key(), &a.tuple_id, &a.generator_id).cmp(&(
                index[&b.tuple_id].key(),
                &b.tuple_id,
                &b.generator_id,
            ))
        });
        let summary: serde_json::Map<String, Value> = reports
            .iter()
            .map(|r| {
                (
                    r.generator_id.clone(),
                    json!({
                        "candidates": r.candidates,
                        "failed_batches": r.failed_batches,
                        "drops": r.drops,
                    }),
                )
            })
            .collect();
        let outputs = vec![
            self.write_lines("map/candidates.jsonl", &candidates)?,
            self.write_json("map/reports.json", &reports)?,
        ];
        Ok(StageOutput {
            outputs,
            inputs: BTreeMap::new(),
            summary: Value::Object(summary),
        })
    }

    fn score_texts(
        &self,
        candidates: &[CandidateSentence],
        tuples: &HashMap<String, RelationTuple>,
        gold: &HashMap<String, String>,
        silver: &HashMap<String, String>,
        stage: Stage,
    ) -> Result<Vec<ScoreRecord>, PipelineError> {
        let scorers = self.scorers()?;
        let refs = References {
            tuples,
            gold,
            silver,
        };
        let records = score_candidates(
            candidates,
            &refs,
            scorers.backends(),
            self.cfg.config.ranking.reference,
            self.cfg.config.scoring.chunk_size,
        )
        .map_err(|e| stage_err(stage)(e.to_string()))?;
        for r in &records {
            r.scores.validate().map_err(|e| {
                stage_err(stage)(format!("{} / {}: {e}", r.tuple_id, r.generator_id))
            })?;
        }
        Ok(records)
    }

    fn score(&mut self) -> Result<StageOutput, PipelineError> {
        let tuples = Self::tuple_index(&self.sampled()?);
        let candidates = self.candidates()?;
        let gold = self.gold_map(&candidates);
        let silver = self.silver_map()?;
        let gold_id = &self.cfg.config.generation.gold;
        let (to_score, skipped): (Vec<CandidateSentence>, Vec<CandidateSentence>) = candidates
            .into_iter()
            .filter(|c| &c.generator_id != gold_id)
            .partition(|c| gold.contains_key(&c.tuple_id) && silver.contains_key(&c.tuple_id));
        let records = self.score_texts(&to_score, &tuples, &gold, &silver, Stage::Score)?;
        let summary = json!({"scored": records.len(), "skipped_without_reference": skipped.len()});
        Ok(StageOutput {
            outputs: vec![self.write_lines("score/scores.jsonl", &records)?],
            inputs: BTreeMap::new(),
            summary,
        })
    }

    fn scored_candidates(
        &self,
    ) -> Result<Vec<(CandidateSentence, relgen_core::scoring::ScoreVector)>, PipelineError> {
        let candidates = self.candidates()?;
        let by_key: HashMap<(&str, &str), &CandidateSentence> = candidates
            .iter()
            .map(|c| ((c.tuple_id.as_str(), c.generator_id.as_str()), c))
            .collect();
        let scores: Vec<ScoreRecord> = self.read_lines("score/scores.jsonl")?;
        scores
            .iter()
            .map(|s| {
                by_key
                    .get(&(s.tuple_id.as_str(), s.generator_id.as_str()))
                    .map(|c| ((*c).clone(), s.scores))
                    .ok_or_else(|| {
                        stage_err(Stage::Rank)(format!(
                            "score for {} / {} has no candidate",
                            s.tuple_id, s.generator_id
                        ))
                    })
            })
            .collect()
    }

    fn rank(&mut self) -> Result<StageOutput, PipelineError> {
        let scored = self.scored_candidates()?;
        let rankable = |g: &str| self.is_rankable(g);
        let priority = Priority(self.cfg.config.ranking.priority.clone());
        let rankings = rank_by_tuple(
            &scored,
            &rankable,
            &self.weights,
            &priority,
            Some(self.cfg.config.ranking.k),
        );
        let summary = json!({"tuples": rankings.len()});
        let outputs = vec![
            self.write_lines("rank/rankings.jsonl", &rankings)?,
            self.write_text("rank/weights.txt", &self.weights.to_text())?,
        ];
        Ok(StageOutput {
            outputs,
            inputs: self.data_inputs(&["weights"]),
            summary,
        })
    }

    fn blend(&mut self) -> Result<StageOutput, PipelineError> {
        let err = stage_err(Stage::Blend);
        let c = &self.cfg.config;
        let tuples = self.sampled()?;
        let spec = c.split_spec()?;
        let assigned = assign_splits(tuples, &spec).map_err(|e| err(e.to_string()))?;

        let candidates = self.candidates()?;
        let order: HashMap<&str, usize> = c
            .backends
            .iter()
            .enumerate()
            .map(|(i, b)| (b.backend.id.as_str(), i))
            .collect();
        let mut all: HashMap<String, Vec<CandidateSentence>> = HashMap::new();
        let mut gold = HashMap::new();
        let mut ecb = HashMap::new();
        for cand in &candidates {
            if cand.generator_id == c.generation.gold {
                gold.insert(cand.tuple_id.clone(), cand.clone());
            } else if Some(&cand.generator_id) == c.generation.ecb.as_ref() {
                ecb.insert(cand.tuple_id.clone(), cand.clone());
            } else if self.is_rankable(&cand.generator_id) {
                all.entry(cand.tuple_id.clone())
                    .or_default()
                    .push(cand.clone());
            }
        }
        for v in all.values_mut() {
            v.sort_by_key(|c| {
                order
                    .get(c.generator_id.as_str())
                    .copied()
                    .unwrap_or(usize::MAX)
            });
        }
        let rankings: Vec<TupleRanking> = self.read_lines("rank/rankings.jsonl")?;
        let ranked: HashMap<String, Vec<CandidateSentence>> = rankings
            .into_iter()
            .map(|t| {
                (
                    t.tuple_id,
                    t.ranked.into_iter().map(|r| r.candidate).collect(),
                )
            })
            .collect();

        let fuser_cfg = c
            .backend(&c.blend.fuser)
            .ok_or_else(|| err(format!("fuser {} is not configured", c.blend.fuser)))?;
        let fuser = self.text_model(fuser_cfg)?;
        let config = ConsolidationConfig {
            train_dev_mode: c.blend.train_dev_mode,
            trio: c.blend.trio.clone(),
            blend_mode: c.blend.mode,
            retry: fuser_cfg.backend.retry,
        };
        let materials = BlendMaterials {
            rankings: &ranked,
            candidates: &all,
            gold: &gold,
            ecb: &ecb,
        };
        let (mut instances, outcomes, report) =
            consolidate(&assigned, &materials, fuser.as_ref(), &config);
        instances.sort_by(|a, b| (a.tuple.key(), &a.tuple.id).cmp(&(b.tuple.key(), &b.tuple.id)));
        let rank_of: HashMap<&str, usize> = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| (inst.tuple.id.as_str(), i))
            .collect();
        let mut outcomes: Vec<BlendOutcome> = outcomes;
        outcomes.sort_by_key(|o| {
            rank_of
                .get(o.tuple_id.as_str())
                .copied()
                .unwrap_or(usize::MAX)
        });
        let summary = serde_json::to_value(&report).map_err(StoreError::from)?;
        let outputs = vec![
            self.write_lines("blend/dataset.jsonl", &instances)?,
            self.write_lines("blend/outcomes.jsonl", &outcomes)?,
            self.write_json("blend/report.json", &report)?,
        ];
        Ok(StageOutput {
            outputs,
            inputs: BTreeMap::new(),
            summary,
        })
    }

    fn split(&mut self) -> Result<StageOutput, PipelineError> {
        let err = stage_err(Stage::Split);
        let instances: Vec<DatasetInstance> = self.read_lines("blend/dataset.jsonl")?;
        let mut seen = HashSet::new();
        for i in &instances {
            if !seen.insert(i.tuple.id.as_str()) {
                return Err(err(format!("instance {} appears twice", i.tuple.id)));
            }
            if i.sentence.contains('\n') || !i.tuple.entities_in(&i.sentence) {
                return Err(err(format!(
                    "instance {} does not contain both entities",
                    i.tuple.id
                )));
            }
        }
        let mut outputs = Vec::new();
        let mut counts = BTreeMap::new();
        for split in [Split::Train, Split::Dev, Split::Test] {
            let part: Vec<&DatasetInstance> =
                instances.iter().filter(|i| i.split == split).collect();
            counts.insert(split, part.len());
            outputs.push(self.write_lines(&format!("final/{split}.jsonl"), &part)?);
        }
        let c = &self.cfg.config;
        let header = DatasetHeader {
            run_id: self.manifest.run_id.clone(),
            config_digest: self.manifest.config_digest.clone(),
            seed: c.seed,
            mode: kebab(&c.blend.mode),
            train_dev_mode: kebab(&c.blend.train_dev_mode),
            reference: kebab(&c.ranking.reference),
            weights: self.weights.clone(),
            backends: self.manifest.backends.clone(),
            counts: counts.clone(),
        };
        outputs.push(self.write_json("final/header.json", &header)?);
        Ok(StageOutput {
            outputs,
            inputs: BTreeMap::new(),
            summary: serde_json::to_value(&counts).map_err(StoreError::from)?,
        })
    }

    fn eval_rc(&mut self) -> Result<StageOutput, PipelineError> {
        let err = stage_err(Stage::EvalRc);
        let c = &self.cfg.config;
        let test: Vec<DatasetInstance> = self.read_lines("final/test.jsonl")?;
        let mut registry = self.registry()?;
        if c.rc.class_subset {
            let keys: Vec<BucketKey> = test.iter().map(|i| i.tuple.key()).collect();
            registry = registry.subset(keys.iter());
        }
        let golds: Vec<(String, BucketKey)> = test
            .iter()
            .map(|i| (i.tuple.id.clone(), i.tuple.key()))
            .collect();
        let mut outputs = Vec::new();
        let mut results = Vec::new();
        for cl in &c.rc.classifiers {
            let style = match cl.style {
                RcStyle::ZeroShot => PromptStyle::ZeroShot,
                RcStyle::FewShot => PromptStyle::FewShotCot(vec![Exemplar::blankenese()]),
            };
            let model = self.classifier(cl, &test)?;
            let preds = classify(&test, &registry, &style, model.as_ref(), c.rc.chunk)
                .map_err(|e| err(e.to_string()))?;
            let report = compute_metrics(&golds, &preds).map_err(|e| err(e.to_string()))?;
            let mut prompt_tokens = 0;
            for i in &test {
                let p = match &style {
                    PromptStyle::ZeroShot => build_zero_shot_prompt(i, &registry),
                    PromptStyle::FewShotCot(ex) => build_few_shot_cot_prompt(i, &registry, ex)
                        .map_err(|e| err(e.to_string()))?,
                };
                prompt_tokens += whitespace_tokens(&p);
            }
            let output_tokens = preds.iter().map(|p| whitespace_tokens(&p.raw)).sum();
            let lines: Vec<PredictionLine> = preds.iter().map(PredictionLine::from).collect();
            outputs.push(self.write_lines(
                &format!("eval/{}.{}.predictions.jsonl", cl.id, cl.style.as_str()),
                &lines,
            )?);
            results.push(RcResult {
                model: cl.id.clone(),
                prompting: cl.style.as_str().to_string(),
                prompt_tokens,
                output_tokens,
                prompt_cost_per_1k: cl.prompt_cost_per_1k,
                output_cost_per_1k: cl.output_cost_per_1k,
                report,
            });
        }
        let summary: Vec<Value> = results
            .iter()
            .map(|r| json!({"model": r.model, "prompting": r.prompting, "f1": r.report.f1, "unparseable": r.report.unparseable}))
            .collect();
        outputs.push(self.write_json("eval/reports.json", &results)?);
        Ok(StageOutput {
            outputs,
            inputs: self.data_inputs(&["registry"]),
            summary: Value::Array(summary),
        })
    }

    fn report(&mut self) -> Result<StageOutput, PipelineError> {
        let c = &self.cfg.config;
        let tuples = Self::tuple_index(&self.sampled()?);
        let candidates = self.candidates()?;
        let gold = self.gold_map(&candidates);
        let silver = self.silver_map()?;
        let scores: Vec<ScoreRecord> = self.read_lines("score/scores.jsonl")?;
        let generation: Vec<GenerationReport> = self.read_json("map/reports.json")?;
        let rankings: Vec<TupleRanking> = self.read_lines("rank/rankings.jsonl")?;
        let consolidation: ConsolidationReport = self.read_json("blend/report.json")?;
        let rc: Vec<RcResult> = self.read_json("eval/reports.json")?;

        let mut dataset: Vec<DatasetInstance> = Vec::new();
        for split in [Split::Train, Split::Dev, Split::Test] {
            dataset.extend(self.read_lines::<DatasetInstance>(&format!("final/{split}.jsonl"))?);
        }
        dataset.sort_by(|a, b| (a.tuple.key(), &a.tuple.id).cmp(&(b.tuple.key(), &b.tuple.id)));
        let finals: Vec<CandidateSentence> = dataset
            .iter()
            .filter_map(|i| CandidateSentence::new(&i.tuple.id, DATASET_LABEL, &i.sentence))
            .filter(|c| gold.contains_key(&c.tuple_id) && silver.contains_key(&c.tuple_id))
            .collect();
        let final_scores = self.score_texts(&finals, &tuples, &gold, &silver, Stage::Report)?;

        let mut texts: HashMap<(String, String), String> = candidates
            .into_iter()
            .map(|c| ((c.tuple_id, c.generator_id), c.text))
            .collect();
        texts.extend(
            finals
                .into_iter()
                .map(|c| ((c.tuple_id, c.generator_id), c.text)),
        );

        let generators: Vec<GeneratorInfo> = self
            .generators()
            .map(|b| GeneratorInfo {
                id: b.backend.id.clone(),
                kind: b.backend.kind.as_str().to_string(),
                method: match (b.backend.kind, b.backend.style()) {
                    (BackendKind::Template, _) => "template".into(),
                    (BackendKind::Ecb, _) => "context-grounded".into(),
                    (_, GenStyle::Numbered) => format!("batched ({})", b.backend.batch_size),
                    (_, GenStyle::Single) => "per tuple".into(),
                },
                prompt_cost_per_1k: b.prompt_cost_per_1k,
                output_cost_per_1k: b.output_cost_per_1k,
            })
            .collect();
        let run = RunInfo {
            run_id: self.manifest.run_id.clone(),
            config_digest: self.manifest.config_digest.clone(),
            seed: c.seed,
            mode: kebab(&c.blend.mode),
            train_dev_mode: kebab(&c.blend.train_dev_mode),
            reference: kebab(&c.ranking.reference),
        };
        let report = report::build(
            &ReportInputs {
                run,
                generators: &generators,
                generation: &generation,
                scores: &scores,
                silver: &silver,
                rankings: &rankings,
                k: c.ranking.k,
                consolidation: &consolidation,
                final_scores: &final_scores,
                rc: &rc,
            },
            &texts,
        );
        let outputs = vec![
            self.write_lines("report/final_scores.jsonl", &final_scores)?,
            self.write_json("report/report.json", &report)?,
            self.write_text("report/report.txt", &report.render())?,
        ];
        Ok(StageOutput {
            outputs,
            inputs: BTreeMap::new(),
            summary: json!({"final_instances": final_scores.len()}),
        })
    }
}
