//! Benchmark manifests: which samples exist, what class each one carries, and
//! how they are cut out of the source footage.
//!
//! A manifest is a line-delimited JSON file with one sample per line. The
//! evaluation protocol is not stored in the file; it is supplied by whoever
//! loads it and the loader re-checks the protocol's invariants.

mod actions;
mod annotation;
mod plan;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

pub use actions::{Action, PairId, Polarity, UnknownAction, INTRA_PAIR_CLASS_COUNTS};
pub use annotation::{
    compute_clip_spec, distractor_clip_spec, parse_annotations, read_annotations, union_box, ActivityAnnotation,
    ActorTrack, AnnotationLine, ClipOptions, PixelBox, Source, TrackBox,
};
pub use plan::{emit_extraction_plan, ExtractionPlan, PlanRow};
pub use stats::{manifest_stats, StatsReport, DURATION_BUCKETS, RESOLUTION_BUCKETS};

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("activity `{0}` has no actor boxes inside its time span")]
    MissingGeometry(String),
    #[error("sample `{0}` belongs to the drive forward / reverse pair, which the inter-pair protocol excludes")]
    ExcludedPair(String),
    #[error("sample `{0}` is a distractor, which the intra-pair protocol does not allow")]
    DistractorNotAllowed(String),
    #[error("sample `{sample_id}` lacks {missing} needed for extraction")]
    IncompleteSpec { sample_id: String, missing: &'static str },
    #[error("two plan rows write to `{0}`")]
    DuplicateOutput(String),
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("invalid annotation `{id}`: {reason}")]
    InvalidAnnotation { id: String, reason: String },
    #[error("invalid sample `{id}`: {reason}")]
    InvalidSample { id: String, reason: String },
    #[error(transparent)]
    UnknownAction(#[from] UnknownAction),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ManifestError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    InterPair,
    IntraPair,
    Classification,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::InterPair => "inter_pair",
            Protocol::IntraPair => "intra_pair",
            Protocol::Classification => "classification",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Video,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Query,
    Distractor,
}

/// Integer pixel crop, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct CropBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl CropBox {
    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }
}

impl From<[u32; 4]> for CropBox {
    fn from([x0, y0, x1, y1]: [u32; 4]) -> Self {
        CropBox { x0, y0, x1, y1 }
    }
}

impl From<CropBox> for [u32; 4] {
    fn from(b: CropBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Time span in seconds, serialized as `[start_s, end_s]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn new(start: f64, end: f64) -> Self {
        Span { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl From<[f64; 2]> for Span {
    fn from([start, end]: [f64; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [f64; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// One benchmark sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    /// Source reference: a video identifier for clips, an image path for images.
    pub media: String,
    pub kind: MediaKind,
    pub class: Option<Action>,
    pub role: Role,
    pub crop: Option<CropBox>,
    pub span: Option<Span>,
}

impl SampleRecord {
    pub fn query(id: impl Into<String>, class: Action) -> Self {
        let id = id.into();
        SampleRecord {
            media: id.clone(),
            sample_id: id,
            kind: MediaKind::Video,
            class: Some(class),
            role: Role::Query,
            crop: None,
            span: None,
        }
    }

    pub fn distractor(id: impl Into<String>) -> Self {
        let id = id.into();
        SampleRecord {
            media: id.clone(),
            sample_id: id,
            kind: MediaKind::Video,
            class: None,
            role: Role::Distractor,
            crop: None,
            span: None,
        }
    }

    pub fn pair(&self) -> Option<PairId> {
        self.class.map(Action::pair)
    }

    fn check(&self, protocol: Protocol) -> Result<()> {
        let invalid =
            |reason: &str| ManifestError::InvalidSample { id: self.sample_id.clone(), reason: reason.to_string() };
        if self.sample_id.is_empty() {
            return Err(invalid("empty sample id"));
        }
        match (self.role, self.class) {
            (Role::Distractor, Some(_)) => return Err(invalid("distractor carries a class")),
            (Role::Query, None) if protocol != Protocol::Classification => {
                return Err(invalid("query without a class"))
            }
            _ => {}
        }
        if let Some(span) = self.span {
            if !(span.start.is_finite() && span.end.is_finite() && span.start < span.end) {
                return Err(invalid("span start must precede span end"));
            }
        }
        if let Some(c) = self.crop {
            if c.x0 >= c.x1 || c.y0 >= c.y1 {
                return Err(invalid("empty crop box"));
            }
        }
        Ok(())
    }
}

/// Candidate sentences for one classification sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceSet {
    pub sample_id: String,
    pub choices: Vec<String>,
    /// Index of the single correct choice.
    pub answer: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkManifest {
    pub protocol: Protocol,
    pub samples: Vec<SampleRecord>,
    /// Classification only, keyed by sample id.
    pub choices: Option<BTreeMap<String, ChoiceSet>>,
    /// Restrict every database to the query samples.
    pub constrained: bool,
}

impl BenchmarkManifest {
    pub fn new(protocol: Protocol, samples: Vec<SampleRecord>) -> Result<Self> {
        let m = BenchmarkManifest { protocol, samples, choices: None, constrained: false };
        m.validate()?;
        Ok(m)
    }

    pub fn queries(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.role == Role::Query)
    }

    pub fn distractors(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.role == Role::Distractor)
    }

    pub fn get(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Check every protocol invariant.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(ManifestError::DuplicateSample(s.sample_id.clone()));
            }
            s.check(self.protocol)?;
            match self.protocol {
                Protocol::InterPair => {
                    if s.pair() == Some(PairId::DriveReverse) {
                        return Err(ManifestError::ExcludedPair(s.sample_id.clone()));
                    }
                }
                Protocol::IntraPair => {
                    if s.role == Role::Distractor {
                        return Err(ManifestError::DistractorNotAllowed(s.sample_id.clone()));
                    }
                }
                Protocol::Classification => {
                    if s.role == Role::Distractor {
                        return Err(ManifestError::InvalidSample {
                            id: s.sample_id.clone(),
                            reason: "classification manifests hold queries only".into(),
                        });
                    }
                }
            }
        }
        if self.protocol == Protocol::Classification {
            let choices = self.choices.as_ref();
            for s in &self.samples {
                let set = choices.and_then(|c| c.get(&s.sample_id)).ok_or_else(|| ManifestError::InvalidSample {
                    id: s.sample_id.clone(),
                    reason: "no choice set".into(),
                })?;
                if set.choices.len() < 2 || set.answer >= set.choices.len() {
                    return Err(ManifestError::InvalidSample {
                        id: s.sample_id.clone(),
                        reason: "needs at least two choices and one valid answer index".into(),
                    });
                }
            }
        } else if self.choices.is_some() {
            return Err(ManifestError::InvalidSample {
                id: String::new(),
                reason: "choices are only allowed in classification manifests".into(),
            });
        }
        Ok(())
    }

    /// Serialize to the line-delimited manifest format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let line = ManifestLine::from(s);
            out.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse a manifest file under the given protocol. Classification manifests
    /// additionally need their choice sets, see [`BenchmarkManifest::with_choices`].
    pub fn from_jsonl(protocol: Protocol, reader: impl BufRead) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine =
                serde_json::from_str(&line).map_err(|source| ManifestError::Parse { line: i + 1, source })?;
            samples.push(parsed.into_sample()?);
        }
        let m = BenchmarkManifest { protocol, samples, choices: None, constrained: false };
        if protocol != Protocol::Classification {
            m.validate()?;
        }
        Ok(m)
    }

    pub fn with_choices(mut self, sets: Vec<ChoiceSet>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for set in sets {
            let id = set.sample_id.clone();
            if map.insert(id.clone(), set).is_some() {
                return Err(ManifestError::DuplicateSample(id));
            }
        }
        self.choices = Some(map);
        self.validate()?;
        Ok(self)
    }

    pub fn constrained(mut self, constrained: bool) -> Self {
        self.constrained = constrained;
        self
    }
}

/// Parse a choices sidecar file: one [`ChoiceSet`] per line.
pub fn parse_choices(reader: impl BufRead) -> Result<Vec<ChoiceSet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ManifestError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// On-disk shape of one manifest line. Field order is the file format.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestLine {
    sample_id: String,
    kind: MediaKind,
    media: String,
    class: Option<Action>,
    pair_id: Option<PairId>,
    role: Role,
    crop: Option<CropBox>,
    span: Option<Span>,
}

impl From<&SampleRecord> for ManifestLine {
    fn from(s: &SampleRecord) -> Self {
        ManifestLine {
            sample_id: s.sample_id.clone(),
            kind: s.kind,
            media: s.media.clone(),
            class: s.class,
            pair_id: s.pair(),
            role: s.role,
            crop: s.crop,
            span: s.span,
        }
    }
}

impl ManifestLine {
    fn into_sample(self) -> Result<SampleRecord> {
        if self.pair_id != self.class.map(Action::pair) {
            return Err(ManifestError::InvalidSample {
                id: self.sample_id,
                reason: "pair_id does not match class".into(),
            });
        }
        Ok(SampleRecord {
            sample_id: self.sample_id,
            media: self.media,
            kind: self.kind,
            class: self.class,
            role: self.role,
            crop: self.crop,
            span: self.span,
        })
    }
}

/// Build an inter-pair manifest. Opposite actions share their pair as the
/// unified class; an empty distractor list yields a queries-only manifest
/// flagged as constrained.
pub fn build_inter_pair_manifest(
    queries: Vec<SampleRecord>,
    distractors: Vec<SampleRecord>,
) -> Result<BenchmarkManifest> {
    for q in &queries {
        if q.role != Role::Query {
            return Err(ManifestError::InvalidSample { id: q.sample_id.clone(), reason: "expected a query".into() });
        }
        if q.pair() == Some(PairId::DriveReverse) {
            return Err(ManifestError::ExcludedPair(q.sample_id.clone()));
        }
    }
    for d in &distractors {
        if d.role != Role::Distractor || d.class.is_some() {
            return Err(ManifestError::InvalidSample {
                id: d.sample_id.clone(),
                reason: "distractors carry no class".into(),
            });
        }
    }
    let constrained = distractors.is_empty();
    let mut samples = queries;
    samples.extend(distractors);
    Ok(BenchmarkManifest::new(Protocol::InterPair, samples)?.constrained(constrained))
}

/// Build an intra-pair manifest; every sample is a query and all seven pairs are allowed.
pub fn build_intra_pair_manifest(queries: Vec<SampleRecord>) -> Result<BenchmarkManifest> {
    if let Some(d) = queries.iter().find(|s| s.role == Role::Distractor || s.class.is_none()) {
        return Err(ManifestError::DistractorNotAllowed(d.sample_id.clone()));
    }
    BenchmarkManifest::new(Protocol::IntraPair, queries)
}

/// Query samples with the given per-class counts, ids `<class>_<nnnn>`. Used to
/// rebuild the published intra-pair class distribution without the footage.
pub fn synthetic_queries(counts: &[(Action, usize)]) -> Vec<SampleRecord> {
    counts
        .iter()
        .flat_map(|&(action, n)| {
            (0..n).map(move |i| SampleRecord::query(format!("{}_{:04}", action.as_str(), i), action))
        })
        .collect()
}

/// The intra-pair manifest rebuilt from the published per-class counts.
pub fn published_intra_manifest() -> BenchmarkManifest {
    build_intra_pair_manifest(synthetic_queries(&INTRA_PAIR_CLASS_COUNTS))
        .expect("published counts form a valid manifest")
}
