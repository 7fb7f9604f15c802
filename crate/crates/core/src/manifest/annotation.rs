//! Activity annotation ingestion and clip geometry.
//!
//! Input is one normalized activity per line:
//!
//! ```text
//! {"activity_id":"a1","source":"meva","action_label":"person_opens_trunk",
//!  "start_frame":60,"end_frame":210,"fps":30.0,"scene_id":"2018-03-07.G330",
//!  "actors":[{"actor_id":"p1","boxes":[[60,10,10,20,30],[61,11,10,21,30]]}]}
//! ```
//!
//! MEVA and VIRAT exports are converted into this shape upstream; only their
//! activity names are understood here (see [`Action::from_label`]).

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Action, CropBox, ManifestError, MediaKind, Result, Role, SampleRecord, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[serde(alias = "MEVA")]
    Meva,
    #[serde(alias = "VIRAT")]
    Virat,
    #[serde(alias = "OTHER")]
    Other,
}

/// Axis-aligned box in (possibly fractional) pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl PixelBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        PixelBox { x0, y0, x1, y1 }
    }

    pub fn contains(&self, other: &PixelBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }

    fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x0 < self.x1 && self.y0 < self.y1
    }
}

/// One box of an actor track, serialized as `[frame, x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u64, f64, f64, f64, f64)", into = "(u64, f64, f64, f64, f64)")]
pub struct TrackBox {
    pub frame: u64,
    pub bbox: PixelBox,
}

impl From<(u64, f64, f64, f64, f64)> for TrackBox {
    fn from((frame, x0, y0, x1, y1): (u64, f64, f64, f64, f64)) -> Self {
        TrackBox { frame, bbox: PixelBox::new(x0, y0, x1, y1) }
    }
}

impl From<TrackBox> for (u64, f64, f64, f64, f64) {
    fn from(b: TrackBox) -> Self {
        (b.frame, b.bbox.x0, b.bbox.y0, b.bbox.x1, b.bbox.y1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    pub actor_id: String,
    pub boxes: Vec<TrackBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityAnnotation {
    pub activity_id: String,
    pub source: Source,
    pub action_label: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub scene_id: String,
    pub actors: Vec<ActorTrack>,
}

impl ActivityAnnotation {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| ManifestError::InvalidAnnotation { id: self.activity_id.clone(), reason };
        if self.start_frame >= self.end_frame {
            return Err(invalid("start_frame must precede end_frame".into()));
        }
        if self.actors.is_empty() {
            return Err(invalid("no actors".into()));
        }
        for actor in &self.actors {
            let mut last: Option<u64> = None;
            for b in &actor.boxes {
                if !b.bbox.is_valid() {
                    return Err(invalid(format!("actor `{}` has a degenerate box", actor.actor_id)));
                }
                if last.is_some_and(|f| f >= b.frame) {
                    return Err(invalid(format!(
                        "actor `{}` frame indices are not strictly increasing",
                        actor.actor_id
                    )));
                }
                last = Some(b.frame);
            }
        }
        Ok(())
    }

    fn boxes_in_span(&self) -> impl Iterator<Item = &PixelBox> {
        self.actors
            .iter()
            .flat_map(|a| a.boxes.iter())
            .filter(|b| (self.start_frame..=self.end_frame).contains(&b.frame))
            .map(|b| &b.bbox)
    }
}

/// One annotation line: the activity plus the frame rate of its source video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationLine {
    pub activity_id: String,
    pub source: Source,
    pub action_label: String,
    pub start_frame: u64,
    pub end_frame: u64,
    pub fps: f64,
    pub scene_id: String,
    pub actors: Vec<ActorTrack>,
}

impl AnnotationLine {
    pub fn into_parts(self) -> (ActivityAnnotation, f64) {
        (
            ActivityAnnotation {
                activity_id: self.activity_id,
                source: self.source,
                action_label: self.action_label,
                start_frame: self.start_frame,
                end_frame: self.end_frame,
                scene_id: self.scene_id,
                actors: self.actors,
            },
            self.fps,
        )
    }
}

pub fn parse_annotations(reader: impl BufRead) -> Result<Vec<AnnotationLine>> {
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

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationLine>> {
    let f = std::fs::File::open(path)?;
    parse_annotations(std::io::BufReader::new(f))
}

/// Crop construction parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipOptions {
    /// Fraction of the ROI width/height added on each side.
    pub padding: f64,
    /// Source frame size `(width, height)`; the crop is clamped to it when known.
    pub frame_size: Option<(u32, u32)>,
}

impl Default for ClipOptions {
    fn default() -> Self {
        ClipOptions { padding: 0.05, frame_size: None }
    }
}

/// Coordinate-wise union of boxes, `None` for an empty input.
pub fn union_box<'a>(boxes: impl IntoIterator<Item = &'a PixelBox>) -> Option<PixelBox> {
    boxes.into_iter().fold(None, |acc, b| {
        Some(match acc {
            None => *b,
            Some(u) => PixelBox::new(u.x0.min(b.x0), u.y0.min(b.y0), u.x1.max(b.x1), u.y1.max(b.y1)),
        })
    })
}

fn padded_crop(roi: PixelBox, opts: &ClipOptions) -> Option<CropBox> {
    let pad_x = opts.padding * (roi.x1 - roi.x0);
    let pad_y = opts.padding * (roi.y1 - roi.y0);
    let (max_x, max_y) =
        opts.frame_size.map(|(w, h)| (w as f64, h as f64)).unwrap_or((u32::MAX as f64, u32::MAX as f64));
    // Round outward so no actor pixel is lost.
    let x0 = (roi.x0 - pad_x).floor().clamp(0.0, max_x);
    let y0 = (roi.y0 - pad_y).floor().clamp(0.0, max_y);
    let x1 = (roi.x1 + pad_x).ceil().clamp(0.0, max_x);
    let y1 = (roi.y1 + pad_y).ceil().clamp(0.0, max_y);
    (x0 < x1 && y0 < y1).then_some(CropBox { x0: x0 as u32, y0: y0 as u32, x1: x1 as u32, y1: y1 as u32 })
}

fn clip_geometry(a: &ActivityAnnotation, fps: f64, opts: &ClipOptions) -> Result<(CropBox, Span)> {
    a.validate()?;
    if !(fps.is_finite() && fps > 0.0) {
        return Err(ManifestError::InvalidAnnotation {
            id: a.activity_id.clone(),
            reason: format!("fps must be positive, got {fps}"),
        });
    }
    let roi = union_box(a.boxes_in_span()).ok_or_else(|| ManifestError::MissingGeometry(a.activity_id.clone()))?;
    let crop = padded_crop(roi, opts).ok_or_else(|| ManifestError::MissingGeometry(a.activity_id.clone()))?;
    let span = Span::new(a.start_frame as f64 / fps, a.end_frame as f64 / fps);
    Ok((crop, span))
}

/// Turn an activity annotation into a query clip: the crop encloses every
/// actor box inside the activity's frame range and the span covers exactly
/// that range.
pub fn compute_clip_spec(a: &ActivityAnnotation, fps: f64, opts: &ClipOptions) -> Result<SampleRecord> {
    let class: Action = a.action_label.parse()?;
    let (crop, span) = clip_geometry(a, fps, opts)?;
    Ok(SampleRecord {
        sample_id: a.activity_id.clone(),
        media: a.scene_id.clone(),
        kind: MediaKind::Video,
        class: Some(class),
        role: Role::Query,
        crop: Some(crop),
        span: Some(span),
    })
}

/// Same geometry as [`compute_clip_spec`] for a class-less distractor activity.
/// The label is not checked against the action vocabulary.
pub fn distractor_clip_spec(a: &ActivityAnnotation, fps: f64, opts: &ClipOptions) -> Result<SampleRecord> {
    let (crop, span) = clip_geometry(a, fps, opts)?;
    Ok(SampleRecord {
        sample_id: a.activity_id.clone(),
        media: a.scene_id.clone(),
        kind: MediaKind::Video,
        class: None,
        role: Role::Distractor,
        crop: Some(crop),
        span: Some(span),
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[allow(clippy::type_complexity)]
    fn activity(actors: Vec<Vec<(u64, f64, f64, f64, f64)>>, start: u64, end: u64) -> ActivityAnnotation {
        ActivityAnnotation {
            activity_id: "act".into(),
            source: Source::Meva,
            action_label: "open_trunk".into(),
            start_frame: start,
            end_frame: end,
            scene_id: "scene".into(),
            actors: actors
                .into_iter()
                .enumerate()
                .map(|(i, boxes)| ActorTrack {
                    actor_id: format!("actor{i}"),
                    boxes: boxes.into_iter().map(TrackBox::from).collect(),
                })
                .collect(),
        }
    }

    const NO_PAD: ClipOptions = ClipOptions { padding: 0.0, frame_size: None };

    #[test]
    fn single_box_crop() {
        let a = activity(vec![vec![(5, 10.0, 10.0, 20.0, 30.0)]], 0, 10);
        let s = compute_clip_spec(&a, 30.0, &NO_PAD).unwrap();
        assert_eq!(s.crop, Some(CropBox { x0: 10, y0: 10, x1: 20, y1: 30 }));
        assert_eq!(s.kind, MediaKind::Video);
        assert_eq!(s.class, Some(Action::OpenTrunk));
    }

    #[test]
    fn two_actor_union() {
        let a = activity(vec![vec![(1, 0.0, 0.0, 10.0, 10.0)], vec![(2, 5.0, 5.0, 20.0, 20.0)]], 0, 10);
        let s = compute_clip_spec(&a, 30.0, &NO_PAD).unwrap();
        assert_eq!(s.crop, Some(CropBox { x0: 0, y0: 0, x1: 20, y1: 20 }));
    }

    #[test]
    fn span_from_frames() {
        // Oracle: whole seconds and remainder frames computed in integers.
        fn frame_to_seconds(frame: u64, fps: u64) -> f64 {
            (frame / fps) as f64 + (frame % fps) as f64 / fps as f64
        }
        let a = activity(vec![vec![(100, 0.0, 0.0, 4.0, 4.0)]], 60, 210);
        let s = compute_clip_spec(&a, 30.0, &NO_PAD).unwrap();
        let span = s.span.unwrap();
        assert_eq!(span.start, frame_to_seconds(60, 30));
        assert_eq!(span.end, frame_to_seconds(210, 30));
        assert_eq!((span.start, span.end), (2.0, 7.0));
    }

    #[test]
    fn padding_rounds_outward_and_clamps() {
        let a = activity(vec![vec![(1, 10.0, 10.0, 110.0, 50.0)]], 0, 10);
        let opts = ClipOptions { padding: 0.05, frame_size: Some((112, 200)) };
        let s = compute_clip_spec(&a, 30.0, &opts).unwrap();
        // width 100 -> 5 px, height 40 -> 2 px; right edge clamped to 112.
        assert_eq!(s.crop, Some(CropBox { x0: 5, y0: 8, x1: 112, y1: 52 }));

        let frac = activity(vec![vec![(1, 10.4, 10.6, 20.2, 20.7)]], 0, 10);
        let s = compute_clip_spec(&frac, 30.0, &NO_PAD).unwrap();
        assert_eq!(s.crop, Some(CropBox { x0: 10, y0: 10, x1: 21, y1: 21 }));
    }

    #[test]
    fn boxes_outside_span_are_ignored() {
        let a = activity(vec![vec![(1, 0.0, 0.0, 5.0, 5.0), (50, 100.0, 100.0, 200.0, 200.0)]], 10, 40);
        let err = compute_clip_spec(&a, 30.0, &NO_PAD).unwrap_err();
        assert!(matches!(err, ManifestError::MissingGeometry(_)));
    }

    #[test]
    fn invalid_annotations() {
        let backwards = activity(vec![vec![(1, 0.0, 0.0, 5.0, 5.0)]], 10, 10);
        assert!(compute_clip_spec(&backwards, 30.0, &NO_PAD).is_err());
        let unordered = activity(vec![vec![(3, 0.0, 0.0, 5.0, 5.0), (2, 0.0, 0.0, 5.0, 5.0)]], 0, 10);
        assert!(compute_clip_spec(&unordered, 30.0, &NO_PAD).is_err());
        let degenerate = activity(vec![vec![(3, 5.0, 0.0, 5.0, 5.0)]], 0, 10);
        assert!(compute_clip_spec(&degenerate, 30.0, &NO_PAD).is_err());
        let no_actor = activity(vec![], 0, 10);
        assert!(compute_clip_spec(&no_actor, 30.0, &NO_PAD).is_err());
        let ok = activity(vec![vec![(3, 0.0, 0.0, 5.0, 5.0)]], 0, 10);
        assert!(compute_clip_spec(&ok, 0.0, &NO_PAD).is_err());
    }

    #[test]
    fn unknown_label_is_rejected_but_distractors_pass() {
        let mut a = activity(vec![vec![(3, 0.0, 0.0, 5.0, 5.0)]], 0, 10);
        a.action_label = "person_talks_to_person".into();
        assert!(matches!(compute_clip_spec(&a, 30.0, &NO_PAD), Err(ManifestError::UnknownAction(_))));
        let d = distractor_clip_spec(&a, 30.0, &NO_PAD).unwrap();
        assert_eq!(d.role, Role::Distractor);
        assert_eq!(d.class, None);
    }

    #[test]
    fn parses_annotation_line() {
        let line = r#"{"activity_id":"a1","source":"MEVA","action_label":"person_opens_trunk","start_frame":60,"end_frame":210,"fps":30.0,"scene_id":"s1","actors":[{"actor_id":"p1","boxes":[[60,10,10,20,30],[61,11,10,21,30]]}]}"#;
        let parsed = parse_annotations(line.as_bytes()).unwrap();
        let (a, fps) = parsed.into_iter().next().unwrap().into_parts();
        assert_eq!(fps, 30.0);
        assert_eq!(a.source, Source::Meva);
        let s = compute_clip_spec(&a, fps, &NO_PAD).unwrap();
        assert_eq!(s.crop, Some(CropBox { x0: 10, y0: 10, x1: 21, y1: 30 }));
    }

    fn arb_box() -> impl Strategy<Value = PixelBox> {
        (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64)
            .prop_map(|(x, y, w, h)| PixelBox::new(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn union_contains_every_box(boxes in prop::collection::vec(arb_box(), 1..20)) {
            let u = union_box(&boxes).unwrap();
            for b in &boxes {
                prop_assert!(u.contains(b));
            }
            let min_x0 = boxes.iter().map(|b| b.x0).fold(f64::INFINITY, f64::min);
            let min_y0 = boxes.iter().map(|b| b.y0).fold(f64::INFINITY, f64::min);
            let max_x1 = boxes.iter().map(|b| b.x1).fold(f64::NEG_INFINITY, f64::max);
            let max_y1 = boxes.iter().map(|b| b.y1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(u, PixelBox::new(min_x0, min_y0, max_x1, max_y1));
        }
    }
}
