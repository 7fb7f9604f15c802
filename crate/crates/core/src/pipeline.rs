//! End-to-end runs: describe → embed → similarity matrix → evaluate, with
//! every stage persisted as a plain file keyed by a fingerprint of the
//! settings it depends on. A stage whose output already exists is skipped.
//!
//! ```text
//! <out_dir>/descriptions/<fp>.jsonl   one DescriptionRecord per sample
//! <out_dir>/runlog/<fp>.jsonl         request timings of the describe stage
//! <out_dir>/embeddings/<fp>.jsonl     the embedded text units per sample
//! <out_dir>/matrix/<fp>.bin           query × database similarities
//! <report_dir>/report.json, per_query.csv
//! <cache_dir>/descriptions.jsonl      response cache
//! <cache_dir>/embeddings/<encoder>/   sentence-vector cache, one per encoder
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::describer::{
    read_jsonl, resolve_prompt, write_jsonl, ChatEndpoint, Clock, DatasetKey, DecodeMode, DecodeParams, DescribeError,
    DescribeJob, Describer, DescriptionCache, DescriptionRecord, FrameDirectory, HttpChatEndpoint, RunLogEntry,
    Strategy, SystemClock,
};
use crate::digest::{hex_parts, json_fingerprint};
use crate::embedder::{
    EmbedEndpoint, EmbedError, Embedder, EmbeddingSet, HttpEmbedEndpoint, SplitMode, VectorCache, DEFAULT_EMBEDDER_ID,
};
use crate::endpoint::{HttpConfig, API_BASE_VAR, API_KEY_VAR, EMBED_BASE_VAR, EMBED_KEY_VAR};
use crate::manifest::{parse_choices, BenchmarkManifest, ManifestError, Protocol, Role, SampleRecord};
use crate::metrics::{self, ChoiceOutcome, EvaluationReport, MetricsError};
use crate::mock::{FixedClock, HashingEmbedder, MockChat};
use crate::retry::RetryPolicy;
use crate::simkernel::{self, SimError, SimilarityMatrix};

/// Dimension of the mock encoder when the config leaves it open.
pub const MOCK_EMBED_DIM: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Describe(#[from] DescribeError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 endpoint failure, 4 data inconsistency.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Describe(DescribeError::MissingInstruction) => 2,
            PipelineError::Describe(DescribeError::EndpointUnavailable { .. })
            | PipelineError::Embed(EmbedError::EndpointUnavailable { .. }) => 3,
            PipelineError::Io(_) | PipelineError::Describe(DescribeError::Io(_)) => 1,
            _ => 4,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Chat and embedding endpoints reached over HTTP.
    #[default]
    Http,
    /// Deterministic offline endpoints from [`crate::mock`].
    Mock,
}

fn default_embedder() -> String {
    DEFAULT_EMBEDDER_ID.to_string()
}
fn default_fps() -> f64 {
    1.0
}
fn default_max_frames() -> usize {
    32
}
fn default_max_tokens() -> u32 {
    512
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from("cache")
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_media_root() -> PathBuf {
    PathBuf::from(".")
}
fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub protocol: Protocol,
    /// Choice sets, for classification.
    #[serde(default)]
    pub choices: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetKey,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub custom_instruction: Option<String>,
    pub model_id: String,
    #[serde(default = "default_embedder")]
    pub embedder_id: String,
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default = "default_fps")]
    pub fps: f64,
    #[serde(default = "default_max_frames")]
    pub max_frames: usize,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub split_mode: SplitMode,
    #[serde(default)]
    pub constrained: bool,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Root of image files and extracted clip frames.
    #[serde(default = "default_media_root")]
    pub media_root: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub backend: Backend,
}

impl RunConfig {
    /// Defaults for everything but the required fields.
    pub fn new(manifest: impl Into<PathBuf>, protocol: Protocol, model_id: impl Into<String>) -> Self {
        RunConfig {
            manifest: manifest.into(),
            protocol,
            choices: None,
            dataset: DatasetKey::default(),
            strategy: Strategy::default(),
            custom_instruction: None,
            model_id: model_id.into(),
            embedder_id: default_embedder(),
            embed_dim: None,
            fps: default_fps(),
            max_frames: default_max_frames(),
            max_output_tokens: default_max_tokens(),
            split_mode: SplitMode::default(),
            constrained: false,
            cache_dir: default_cache_dir(),
            out_dir: default_out_dir(),
            media_root: default_media_root(),
            workers: default_workers(),
            backend: Backend::default(),
        }
    }

    /// Parse a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.manifest, &mut cfg.cache_dir, &mut cfg.out_dir, &mut cfg.media_root] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(c) = cfg.choices.as_mut().filter(|c| c.is_relative()) {
            *c = base.join(&*c);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.max_frames == 0 || self.max_output_tokens == 0 || self.workers == 0 {
            return bad("max_frames, max_output_tokens and workers must be positive".into());
        }
        if self.embed_dim == Some(0) {
            return bad("embed_dim must be positive".into());
        }
        if !self.manifest.is_file() {
            return bad(format!("manifest {} not found", self.manifest.display()));
        }
        match (&self.choices, self.protocol) {
            (None, Protocol::Classification) => return bad("classification needs a `choices` file".into()),
            (Some(c), _) if !c.is_file() => return bad(format!("choices file {} not found", c.display())),
            _ => {}
        }
        if self.dataset == DatasetKey::Custom
            && self.strategy == Strategy::TaskAware
            && self.custom_instruction.as_deref().is_none_or(|s| s.trim().is_empty())
        {
            return bad("dataset `custom` needs `custom_instruction`".into());
        }
        Ok(())
    }

    pub fn decode(&self) -> DecodeParams {
        DecodeParams { mode: DecodeMode::Greedy, max_output_tokens: self.max_output_tokens }
    }
}

/// Fingerprints of each stage's output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprints {
    pub descriptions: String,
    pub embeddings: String,
    pub matrix: String,
    /// Everything that affects the report.
    pub config: String,
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(hex_parts(&[&std::fs::read(path)?]))
}

pub fn fingerprints(cfg: &RunConfig) -> Result<Fingerprints> {
    let manifest = file_digest(&cfg.manifest)?;
    let choices = cfg.choices.as_deref().map(file_digest).transpose()?;
    #[derive(Serialize)]
    struct Describe<'a> {
        stage: &'static str,
        manifest: &'a str,
        dataset: DatasetKey,
        strategy: Strategy,
        custom_instruction: &'a Option<String>,
        model_id: &'a str,
        fps: f64,
        max_frames: usize,
        decode: DecodeParams,
        backend: Backend,
    }
    let descriptions = json_fingerprint(&Describe {
        stage: "descriptions",
        manifest: &manifest,
        dataset: cfg.dataset,
        strategy: cfg.strategy,
        custom_instruction: &cfg.custom_instruction,
        model_id: &cfg.model_id,
        fps: cfg.fps,
        max_frames: cfg.max_frames,
        decode: cfg.decode(),
        backend: cfg.backend,
    });
    let embeddings =
        json_fingerprint(&("embeddings", &descriptions, &cfg.embedder_id, cfg.embed_dim, cfg.split_mode, cfg.backend));
    let matrix = json_fingerprint(&("matrix", &embeddings, cfg.protocol));
    let config = json_fingerprint(&("report", &matrix, &choices, cfg.protocol, cfg.constrained));
    Ok(Fingerprints { descriptions, embeddings, matrix, config })
}

pub fn load_manifest(cfg: &RunConfig) -> Result<BenchmarkManifest> {
    let file = std::fs::File::open(&cfg.manifest)
        .map_err(|e| PipelineError::Config(format!("cannot open manifest {}: {e}", cfg.manifest.display())))?;
    let mut m = BenchmarkManifest::from_jsonl(cfg.protocol, BufReader::new(file))?;
    if let Some(path) = &cfg.choices {
        let sets = parse_choices(BufReader::new(std::fs::File::open(path)?))?;
        m = m.with_choices(sets)?;
    }
    Ok(m)
}

/// The model services a run talks to.
#[derive(Clone)]
pub struct Endpoints {
    pub chat: Arc<dyn ChatEndpoint>,
    pub embed: Arc<dyn EmbedEndpoint>,
    pub clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
}

impl Endpoints {
    /// HTTP clients from the environment, or the deterministic mocks (whose
    /// clock is frozen so repeated runs write identical files).
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        match cfg.backend {
            Backend::Mock => Ok(Endpoints {
                chat: Arc::new(MockChat::new(cfg.model_id.clone())),
                embed: Arc::new(HashingEmbedder::new(cfg.embedder_id.clone(), cfg.embed_dim.unwrap_or(MOCK_EMBED_DIM))),
                clock: Arc::new(FixedClock(0)),
                retry: RetryPolicy::immediate(1),
            }),
            Backend::Http => {
                let chat = HttpConfig::from_env(API_BASE_VAR, API_KEY_VAR)
                    .ok_or_else(|| PipelineError::Config(format!("{API_BASE_VAR} is not set")))?;
                let embed = HttpConfig::from_env(EMBED_BASE_VAR, EMBED_KEY_VAR).unwrap_or_else(|| chat.clone());
                Ok(Endpoints {
                    chat: Arc::new(HttpChatEndpoint::new(chat, cfg.model_id.clone())),
                    embed: Arc::new(HttpEmbedEndpoint::new(embed, cfg.embedder_id.clone())),
                    clock: Arc::new(SystemClock),
                    retry: RetryPolicy::default(),
                })
            }
        }
    }
}

/// What a run produced and what it cost.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: EvaluationReport,
    pub fingerprints: Fingerprints,
    pub report_path: PathBuf,
    pub csv_path: PathBuf,
    pub describe_calls: usize,
    pub embed_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EmbeddingUnits {
    sample_id: String,
    units: Vec<String>,
}

fn sanitize(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Write a file atomically so an interrupted stage never leaves a partial artifact.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub struct Pipeline {
    pub config: RunConfig,
    endpoints: Endpoints,
    fingerprints: Fingerprints,
    manifest: BenchmarkManifest,
    describe_calls: usize,
    embed_calls: usize,
}

impl Pipeline {
    pub fn new(config: RunConfig, endpoints: Endpoints) -> Result<Self> {
        config.validate()?;
        let manifest = load_manifest(&config)?;
        let fingerprints = fingerprints(&config)?;
        Ok(Pipeline { config, endpoints, fingerprints, manifest, describe_calls: 0, embed_calls: 0 })
    }

    pub fn manifest(&self) -> &BenchmarkManifest {
        &self.manifest
    }

    pub fn fingerprints(&self) -> &Fingerprints {
        &self.fingerprints
    }

    pub fn descriptions_path(&self) -> PathBuf {
        self.config.out_dir.join("descriptions").join(format!("{}.jsonl", self.fingerprints.descriptions))
    }

    pub fn runlog_path(&self) -> PathBuf {
        self.config.out_dir.join("runlog").join(format!("{}.jsonl", self.fingerprints.descriptions))
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.config.out_dir.join("embeddings").join(format!("{}.jsonl", self.fingerprints.embeddings))
    }

    pub fn matrix_path(&self) -> PathBuf {
        self.config.out_dir.join("matrix").join(format!("{}.bin", self.fingerprints.matrix))
    }

    pub fn vector_cache_dir(&self) -> PathBuf {
        self.config.cache_dir.join("embeddings").join(sanitize(&self.config.embedder_id))
    }

    /// Samples in ascending id order.
    fn sorted_samples(&self) -> Vec<&SampleRecord> {
        let mut v: Vec<&SampleRecord> = self.manifest.samples.iter().collect();
        v.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        v
    }

    /// Describe every sample, or read the stage output if it exists.
    pub fn describe(&mut self) -> Result<Vec<DescriptionRecord>> {
        let path = self.descriptions_path();
        if path.is_file() {
            return Ok(read_jsonl(&path)?);
        }
        let cache = DescriptionCache::open(&self.config.cache_dir.join("descriptions.jsonl"))?;
        let describer = Describer::new(self.endpoints.chat.clone(), cache)
            .with_clock(self.endpoints.clock.clone())
            .with_retry(self.endpoints.retry);
        let source = FrameDirectory { root: self.config.media_root.clone() };
        let cfg = &self.config;
        let prompt =
            |s: &SampleRecord| resolve_prompt(cfg.dataset, cfg.strategy, s.kind, cfg.custom_instruction.as_deref());
        let job = DescribeJob {
            source: &source,
            prompt: &prompt,
            decode: cfg.decode(),
            fps: cfg.fps,
            max_frames: cfg.max_frames,
            workers: cfg.workers,
        };
        let samples = self.sorted_samples();
        let result = describer.describe_samples(&samples, &job);
        self.describe_calls += describer.network_calls();
        let (records, log) = result?;
        write_atomic(&self.runlog_path(), |p| write_jsonl(p, &log))?;
        write_atomic(&path, |p| write_jsonl(p, &records))?;
        Ok(records)
    }

    fn embedder(&self) -> Result<Embedder> {
        let cache = VectorCache::open(&self.vector_cache_dir(), &self.config.embedder_id, self.config.embed_dim)
            .map_err(EmbedError::from)?;
        let mut e = Embedder::new(self.endpoints.embed.clone(), cache)?
            .with_retry(self.endpoints.retry)
            .with_workers(self.config.workers);
        if let Some(d) = self.config.embed_dim {
            e = e.with_dim(d)?;
        }
        Ok(e)
    }

    /// Embedding sets for every sample, in ascending id order.
    pub fn embed(&mut self) -> Result<Vec<EmbeddingSet>> {
        let path = self.embeddings_path();
        let units: Vec<EmbeddingUnits> = if path.is_file() {
            read_jsonl(&path)?
        } else {
            let descriptions = self.describe()?;
            let by_id: BTreeMap<&str, &DescriptionRecord> =
                descriptions.iter().map(|d| (d.sample_id.as_str(), d)).collect();
            self.sorted_samples()
                .iter()
                .map(|s| {
                    let d = by_id
                        .get(s.sample_id.as_str())
                        .ok_or_else(|| PipelineError::Inconsistent(format!("no description for `{}`", s.sample_id)))?;
                    Ok(EmbeddingUnits { sample_id: s.sample_id.clone(), units: self.config.split_mode.units(&d.text) })
                })
                .collect::<Result<_>>()?
        };
        let embedder = self.embedder()?;
        let flat: Vec<String> = units.iter().flat_map(|u| u.units.iter().cloned()).collect();
        let result = embedder.embed_texts(&flat);
        self.embed_calls += embedder.network_calls();
        let mut vectors = result?.into_iter();
        let sets = units
            .iter()
            .map(|u| {
                EmbeddingSet::new(
                    u.sample_id.as_str(),
                    embedder.model_id(),
                    vectors.by_ref().take(u.units.len()).collect(),
                )
            })
            .collect();
        if !path.is_file() {
            write_atomic(&path, |p| write_jsonl(p, &units))?;
        }
        Ok(sets)
    }

    /// Query × database similarities, or the stored matrix if present.
    pub fn matrix(&mut self) -> Result<SimilarityMatrix> {
        let path = self.matrix_path();
        if path.is_file() {
            return Ok(SimilarityMatrix::load(&path)?);
        }
        let sets = self.embed()?;
        let queries: Vec<EmbeddingSet> = sets
            .iter()
            .filter(|s| self.manifest.get(&s.sample_id).is_some_and(|r| r.role == Role::Query))
            .cloned()
            .collect();
        let m = simkernel::similarity_matrix(&queries, &sets)?;
        write_atomic(&path, |p| m.save(p))?;
        Ok(m)
    }

    fn classify(&mut self) -> Result<EvaluationReport> {
        let sets = self.embed()?;
        let embedder = self.embedder()?;
        let choices = self.manifest.choices.clone().unwrap_or_default();
        let mut outcomes = Vec::with_capacity(sets.len());
        for set in &sets {
            let cs = choices
                .get(&set.sample_id)
                .ok_or_else(|| PipelineError::Inconsistent(format!("no choices for `{}`", set.sample_id)))?;
            let choice_sets = cs
                .choices
                .iter()
                .map(|c| embedder.embed_whole_text(&set.sample_id, c))
                .collect::<Result<Vec<_>, _>>()?;
            let c = simkernel::classify(set, &choice_sets)?;
            outcomes.push(ChoiceOutcome {
                sample_id: set.sample_id.clone(),
                predicted: c.index,
                answer: cs.answer,
                unscored: c.unscored,
            });
        }
        self.embed_calls += embedder.network_calls();
        Ok(metrics::classification_report(&outcomes)?)
    }

    /// Compute the report and write it (with the per-query CSV) to `report_dir`.
    pub fn evaluate(&mut self, report_dir: &Path) -> Result<RunSummary> {
        let report = match self.manifest.protocol {
            Protocol::Classification => self.classify()?,
            Protocol::InterPair => {
                let m = self.matrix()?;
                metrics::inter_pair_map(&self.manifest, &m, self.config.constrained || self.manifest.constrained)?
            }
            Protocol::IntraPair => {
                let m = self.matrix()?;
                metrics::pair_map(&self.manifest, &m)?
            }
        }
        .with_fingerprint(self.fingerprints.config.clone());
        std::fs::create_dir_all(report_dir)?;
        let report_path = report_dir.join("report.json");
        let csv_path = report_dir.join("per_query.csv");
        report.write_json(&report_path)?;
        report.write_csv(&csv_path)?;
        Ok(RunSummary {
            report,
            fingerprints: self.fingerprints.clone(),
            report_path,
            csv_path,
            describe_calls: self.describe_calls,
            embed_calls: self.embed_calls,
        })
    }

    pub fn run_log(&self) -> Result<Vec<RunLogEntry>> {
        Ok(read_jsonl(&self.runlog_path())?)
    }
}

/// Run every stage and write the report into the configured output directory.
pub fn run(config: RunConfig, endpoints: Endpoints) -> Result<RunSummary> {
    let out = config.out_dir.clone();
    Pipeline::new(config, endpoints)?.evaluate(&out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Fps(Vec<f64>),
    Embedder(Vec<String>),
    /// Both split modes.
    SplitMode,
}

impl Sweep {
    fn points(&self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        match self {
            Sweep::Fps(values) => {
                values.iter().map(|&f| (format!("fps={f}"), RunConfig { fps: f, ..base.clone() })).collect()
            }
            Sweep::Embedder(ids) => ids
                .iter()
                .map(|id| (format!("embedder={id}"), RunConfig { embedder_id: id.clone(), ..base.clone() }))
                .collect(),
            Sweep::SplitMode => [SplitMode::SplitMax, SplitMode::WholeText]
                .iter()
                .map(|&m| (format!("split={m}"), RunConfig { split_mode: m, ..base.clone() }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: String,
    pub config: RunConfig,
    pub summary: RunSummary,
}

/// One run per sweep point, each reporting into `<out_dir>/ablation/<label>/`.
/// Stage outputs and caches are shared wherever the settings coincide.
pub fn ablate(
    base: &RunConfig,
    sweep: &Sweep,
    endpoints: impl Fn(&RunConfig) -> Result<Endpoints>,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (label, cfg) in sweep.points(base) {
        let dir = base.out_dir.join("ablation").join(sanitize(&label));
        let summary = Pipeline::new(cfg.clone(), endpoints(&cfg)?)?.evaluate(&dir)?;
        rows.push(AblationRow { label, config: cfg, summary });
    }
    Ok(rows)
}

/// Plain-text table of an ablation, one line per sweep point.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::from("| setting | metric | value | descriptions |\n|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.1} | {} |",
            r.label,
            r.summary.report.metric,
            r.summary.report.value_1dp,
            &r.summary.fingerprints.descriptions[..12]
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.jsonl"), "").unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "manifest = \"m.jsonl\"\nprotocol = \"intra_pair\"\nmodel_id = \"mllm\"\nbackend = \"mock\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.manifest, dir.path().join("m.jsonl"));
        assert_eq!(cfg.fps, 1.0);
        assert_eq!(cfg.split_mode, SplitMode::SplitMax);
        assert_eq!(cfg.embedder_id, "GTE-Large-8152");
        assert_eq!(cfg.max_output_tokens, 512);
        assert_eq!(cfg.strategy, Strategy::TaskAware);
        cfg.validate().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_errors_map_to_exit_code_two() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "manifest = \"m.jsonl\"\nprotocol = \"intra_pair\"\nmodel_id = \"x\"\nbogus = 1\n")
            .unwrap();
        assert_eq!(RunConfig::load(&path).unwrap_err().exit_code(), 2);
        let mut cfg = RunConfig::new(dir.path().join("missing.jsonl"), Protocol::IntraPair, "x");
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
        std::fs::write(dir.path().join("m.jsonl"), "").unwrap();
        cfg.manifest = dir.path().join("m.jsonl");
        cfg.fps = 0.0;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn every_artifact_field_moves_the_fingerprint() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.jsonl"), "{}\n").unwrap();
        let base = RunConfig::new(dir.path().join("m.jsonl"), Protocol::IntraPair, "x");
        let fp = fingerprints(&base).unwrap();
        let variants: Vec<(RunConfig, [bool; 3])> = vec![
            // [descriptions, embeddings, config] expected to change
            (RunConfig { fps: 3.0, ..base.clone() }, [true, true, true]),
            (RunConfig { model_id: "y".into(), ..base.clone() }, [true, true, true]),
            (RunConfig { strategy: Strategy::General, ..base.clone() }, [true, true, true]),
            (RunConfig { max_frames: 7, ..base.clone() }, [true, true, true]),
            (RunConfig { max_output_tokens: 8, ..base.clone() }, [true, true, true]),
            (RunConfig { dataset: DatasetKey::Vsr, ..base.clone() }, [true, true, true]),
            (RunConfig { embedder_id: "e2".into(), ..base.clone() }, [false, true, true]),
            (RunConfig { embed_dim: Some(8), ..base.clone() }, [false, true, true]),
            (RunConfig { split_mode: SplitMode::WholeText, ..base.clone() }, [false, true, true]),
            (RunConfig { constrained: true, ..base.clone() }, [false, false, true]),
            (RunConfig { workers: 9, out_dir: "elsewhere".into(), ..base.clone() }, [false, false, false]),
        ];
        for (cfg, [d, e, c]) in variants {
            let f = fingerprints(&cfg).unwrap();
            assert_eq!(f.descriptions != fp.descriptions, d, "{cfg:?}");
            assert_eq!(f.embeddings != fp.embeddings, e, "{cfg:?}");
            assert_eq!(f.config != fp.config, c, "{cfg:?}");
        }
        std::fs::write(dir.path().join("m.jsonl"), "{ }\n").unwrap();
        assert_ne!(fingerprints(&base).unwrap().descriptions, fp.descriptions);
    }
}
