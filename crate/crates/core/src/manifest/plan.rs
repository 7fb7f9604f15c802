use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkManifest, CropBox, ManifestError, MediaKind, Result, Span};

/// One clip for an external extractor to cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub source: String,
    pub crop: CropBox,
    pub span: Span,
    pub output: String,
}

/// Declarative clip-extraction instructions, grouped by source video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExtractionPlan {
    pub rows: Vec<PlanRow>,
}

impl ExtractionPlan {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("plan row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(&line).map_err(|source| ManifestError::Parse { line: i + 1, source })?);
        }
        Ok(ExtractionPlan { rows })
    }
}

fn file_stem(sample_id: &str) -> String {
    sample_id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// List every video clip as (source, crop, span, output). Nothing is read or
/// written here; the plan feeds an external extractor.
pub fn emit_extraction_plan(m: &BenchmarkManifest, out_dir: &Path) -> Result<ExtractionPlan> {
    let mut rows = Vec::new();
    let mut outputs = HashSet::new();
    for s in m.samples.iter().filter(|s| s.kind == MediaKind::Video) {
        let incomplete = |missing| ManifestError::IncompleteSpec { sample_id: s.sample_id.clone(), missing };
        let crop = s.crop.ok_or_else(|| incomplete("a crop box"))?;
        let span = s.span.ok_or_else(|| incomplete("a time span"))?;
        let output = out_dir.join(format!("{}.mp4", file_stem(&s.sample_id))).to_string_lossy().into_owned();
        if !outputs.insert(output.clone()) {
            return Err(ManifestError::DuplicateOutput(output));
        }
        rows.push(PlanRow { source: s.media.clone(), crop, span, output });
    }
    // Stable, so rows of one source keep manifest order.
    rows.sort_by(|a, b| a.source.cmp(&b.source));
    Ok(ExtractionPlan { rows })
}
