//! Textual descriptions of samples from a multimodal chat model: frame
//! sampling, prompt resolution, deterministic decoding, retries and a
//! persistent response cache.

mod chat;
mod frames;
mod prompt;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use chat::{ChatEndpoint, ChatReply, ChatRequest, HttpChatEndpoint};
pub use frames::{
    encode_frame, frame_timestamps, sample_frames, uniform_subsample, EncodedFrame, FrameDirectory, FrameSource,
    InputKind, MediaError, MediaInput, StillImages, JPEG_QUALITY, MAX_SIDE,
};
pub use prompt::{resolve_prompt, DatasetKey, PromptConfig, Strategy};

use crate::digest::hex_parts;
use crate::endpoint::EndpointError;
use crate::manifest::SampleRecord;
use crate::retry::RetryPolicy;

#[derive(Debug, thiserror::Error)]
pub enum DescribeError {
    #[error("custom dataset requires an instruction text")]
    MissingInstruction,
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("chat endpoint unavailable for `{sample}` after {attempts} attempts: {source}")]
    EndpointUnavailable { sample: String, attempts: u32, source: EndpointError },
    #[error("run log has no completed samples")]
    NoData,
    #[error("run log spans no time (was it written with a frozen clock?)")]
    NoElapsedTime,
    #[error("corrupt description file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodeParams {
    pub mode: DecodeMode,
    pub max_output_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { mode: DecodeMode::Greedy, max_output_tokens: 512 }
    }
}

/// One model response. `text` is empty when the model refused.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub sample_id: String,
    pub model_id: String,
    pub prompt_fingerprint: String,
    pub text: String,
    pub latency_ms: u64,
    /// Unix milliseconds at request start.
    pub created_at: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refused: bool,
}

/// Millisecond wall clock; injectable so recorded timings can be reproduced.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// When a sample was processed, for throughput accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub sample_id: String,
    pub started_ms: u64,
    pub finished_ms: u64,
    pub cached: bool,
    pub attempts: u32,
}

/// Completed samples per second of wall-clock span (first start to last finish).
pub fn measure_throughput(log: &[RunLogEntry]) -> Result<f64, DescribeError> {
    let start = log.iter().map(|e| e.started_ms).min().ok_or(DescribeError::NoData)?;
    let end = log.iter().map(|e| e.finished_ms).max().ok_or(DescribeError::NoData)?;
    if end <= start {
        return Err(DescribeError::NoElapsedTime);
    }
    Ok(log.len() as f64 / ((end - start) as f64 / 1000.0))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, DescribeError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| DescribeError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(rows)
}

/// Drop an unfinished trailing sentence from a response cut off by the token
/// limit. Text without any sentence end is kept whole.
pub fn trim_partial_sentence(text: &str) -> &str {
    let closers = ['"', '\'', ')', ']', '\u{201d}', '\u{2019}'];
    let mut cut = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '\n' {
            cut = Some(i);
        } else if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            while let Some(&(j, n)) = chars.peek() {
                if matches!(n, '.' | '!' | '?') || closers.contains(&n) {
                    end = j + n.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            if text[end..].chars().next().is_none_or(char::is_whitespace) {
                cut = Some(end);
            }
        }
    }
    match cut {
        Some(end) if !text[..end].trim().is_empty() => text[..end].trim_end(),
        _ => text,
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    record: DescriptionRecord,
}

/// Append-only JSONL store of responses keyed by (model, prompt, decode, media).
pub struct DescriptionCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, DescriptionRecord>>,
    file: Mutex<File>,
}

impl DescriptionCache {
    pub fn open(path: &Path) -> Result<Self, DescribeError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let raw = std::fs::read_to_string(path)?;
            let complete = raw.rfind('\n').map_or(0, |p| p + 1);
            if complete < raw.len() {
                // A torn final line from an interrupted run.
                OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
            }
            for line in raw[..complete].lines().filter(|l| !l.trim().is_empty()) {
                let entry: CacheLine = serde_json::from_str(line)
                    .map_err(|e| DescribeError::Corrupt { path: path.to_path_buf(), reason: e.to_string() })?;
                entries.insert(entry.key, entry.record);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(DescriptionCache { path: path.to_path_buf(), entries: Mutex::new(entries), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn get(&self, key: &str) -> Option<DescriptionRecord> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, key: &str, record: &DescriptionRecord) -> std::io::Result<()> {
        let mut file = self.file.lock().unwrap();
        if self.entries.lock().unwrap().contains_key(key) {
            return Ok(());
        }
        let line =
            serde_json::to_string(&CacheLine { key: key.to_string(), record: record.clone() }).expect("serializes");
        writeln!(file, "{line}")?;
        file.flush()?;
        self.entries.lock().unwrap().insert(key.to_string(), record.clone());
        Ok(())
    }
}

pub fn description_key(model_id: &str, prompt: &PromptConfig, decode: &DecodeParams, media: &MediaInput) -> String {
    let decode = serde_json::to_string(decode).expect("decode params serialize");
    hex_parts(&[
        b"description",
        model_id.as_bytes(),
        prompt.fingerprint().as_bytes(),
        decode.as_bytes(),
        media.fingerprint().as_bytes(),
    ])
}

/// How to turn samples into model calls.
pub struct DescribeJob<'a> {
    pub source: &'a dyn FrameSource,
    pub prompt: &'a (dyn Fn(&SampleRecord) -> Result<PromptConfig, DescribeError> + Sync),
    pub decode: DecodeParams,
    pub fps: f64,
    pub max_frames: usize,
    pub workers: usize,
}

struct Outcome {
    key: String,
    record: DescriptionRecord,
    log: RunLogEntry,
    fresh: bool,
}

pub struct Describer {
    endpoint: Arc<dyn ChatEndpoint>,
    cache: DescriptionCache,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
    calls: AtomicUsize,
}

impl Describer {
    pub fn new(endpoint: Arc<dyn ChatEndpoint>, cache: DescriptionCache) -> Self {
        Describer {
            endpoint,
            cache,
            clock: Arc::new(SystemClock),
            retry: RetryPolicy::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn model_id(&self) -> &str {
        self.endpoint.model_id()
    }

    pub fn cache(&self) -> &DescriptionCache {
        &self.cache
    }

    /// Endpoint requests issued so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn run_one(
        &self,
        sample_id: &str,
        media: &MediaInput,
        prompt: &PromptConfig,
        decode: &DecodeParams,
    ) -> Result<Outcome, DescribeError> {
        let key = description_key(self.model_id(), prompt, decode, media);
        let started = self.clock.now_ms();
        if let Some(mut record) = self.cache.get(&key) {
            record.sample_id = sample_id.to_string();
            let log = RunLogEntry {
                sample_id: sample_id.into(),
                started_ms: started,
                finished_ms: self.clock.now_ms(),
                cached: true,
                attempts: 0,
            };
            return Ok(Outcome { key, record, log, fresh: false });
        }
        let request = ChatRequest { media, prompt, decode };
        let result = self.retry.run(
            || {
                self.calls.fetch_add(1, Ordering::SeqCst);
                self.endpoint.complete(&request)
            },
            EndpointError::is_transient,
        );
        let finished = self.clock.now_ms();
        let (text, refused, attempts) = match result {
            Ok((reply, attempts)) => {
                let text = if reply.finish_reason.as_deref() == Some("length") {
                    trim_partial_sentence(&reply.text).to_string()
                } else {
                    reply.text
                };
                (text, false, attempts)
            }
            Err((EndpointError::Refused(why), attempts)) => {
                tracing::warn!(sample = sample_id, reason = %why, "model refused; recording an empty description");
                (String::new(), true, attempts)
            }
            Err((source, attempts)) => {
                return Err(DescribeError::EndpointUnavailable { sample: sample_id.into(), attempts, source })
            }
        };
        let record = DescriptionRecord {
            sample_id: sample_id.into(),
            model_id: self.model_id().into(),
            prompt_fingerprint: prompt.fingerprint(),
            text,
            latency_ms: finished.saturating_sub(started),
            created_at: started,
            refused,
        };
        let log = RunLogEntry {
            sample_id: sample_id.into(),
            started_ms: started,
            finished_ms: finished,
            cached: false,
            attempts,
        };
        Ok(Outcome { key, record, log, fresh: true })
    }

    /// Describe one input, serving identical requests from the cache.
    pub fn describe(
        &self,
        sample_id: &str,
        media: &MediaInput,
        prompt: &PromptConfig,
        decode: &DecodeParams,
    ) -> Result<(DescriptionRecord, RunLogEntry), DescribeError> {
        let out = self.run_one(sample_id, media, prompt, decode)?;
        if out.fresh {
            self.cache.insert(&out.key, &out.record)?;
        }
        Ok((out.record, out.log))
    }

    /// Describe samples in ascending id order with up to `workers` concurrent
    /// requests. Cache appends follow that order, so artifacts do not depend
    /// on scheduling; completed work stays cached if a later sample fails.
    pub fn describe_samples(
        &self,
        samples: &[&SampleRecord],
        job: &DescribeJob<'_>,
    ) -> Result<(Vec<DescriptionRecord>, Vec<RunLogEntry>), DescribeError> {
        let mut ordered: Vec<&SampleRecord> = samples.to_vec();
        ordered.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let process = |s: &SampleRecord| -> Result<Outcome, DescribeError> {
            let prompt = (job.prompt)(s)?;
            let media = sample_frames(job.source, s, job.fps, job.max_frames)?;
            self.run_one(&s.sample_id, &media, &prompt, &job.decode)
        };
        let mut records = Vec::with_capacity(ordered.len());
        let mut log = Vec::with_capacity(ordered.len());
        for chunk in ordered.chunks(job.workers.max(1)) {
            let results: Vec<Result<Outcome, DescribeError>> = if chunk.len() == 1 {
                vec![process(chunk[0])]
            } else {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk.iter().map(|s| scope.spawn(move || process(s))).collect();
                    handles.into_iter().map(|h| h.join().expect("describe worker panicked")).collect()
                })
            };
            let mut first_err = None;
            for r in results {
                match r {
                    Ok(out) => {
                        if out.fresh {
                            self.cache.insert(&out.key, &out.record)?;
                        }
                        records.push(out.record);
                        log.push(out.log);
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        Ok((records, log))
    }
}
