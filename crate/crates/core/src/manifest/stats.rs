use std::collections::BTreeMap;

use serde::Serialize;

use super::{BenchmarkManifest, Protocol, Role};

/// Upper edges (seconds, exclusive) of the clip-duration buckets. Longer clips
/// land in a final overflow bucket.
pub const DURATION_BUCKETS: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// Upper edges (pixels, exclusive) of the crop longest-side buckets.
pub const RESOLUTION_BUCKETS: [u32; 5] = [64, 128, 256, 512, 1024];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub protocol: Protocol,
    pub total: usize,
    pub queries: usize,
    pub distractors: usize,
    pub class_count: usize,
    pub pair_count: usize,
    pub per_class: BTreeMap<String, usize>,
    pub per_pair: BTreeMap<String, usize>,
    pub durations: Vec<Bucket>,
    pub missing_span: usize,
    pub resolutions: Vec<Bucket>,
    pub missing_crop: usize,
}

fn bucket_labels<T: std::fmt::Display>(edges: &[T], unit: &str) -> Vec<Bucket> {
    let mut out = Vec::with_capacity(edges.len() + 1);
    let mut lo = String::from("0");
    for e in edges {
        out.push(Bucket { label: format!("[{lo},{e}){unit}"), count: 0 });
        lo = e.to_string();
    }
    out.push(Bucket { label: format!(">={lo}{unit}"), count: 0 });
    out
}

/// Class counts, duration and crop-size distributions, and role totals.
pub fn manifest_stats(m: &BenchmarkManifest) -> StatsReport {
    let mut per_class = BTreeMap::new();
    let mut per_pair = BTreeMap::new();
    let mut durations = bucket_labels(&DURATION_BUCKETS, "s");
    let mut resolutions = bucket_labels(&RESOLUTION_BUCKETS, "px");
    let (mut queries, mut distractors, mut missing_span, mut missing_crop) = (0, 0, 0, 0);

    for s in &m.samples {
        match s.role {
            Role::Query => queries += 1,
            Role::Distractor => distractors += 1,
        }
        if let Some(class) = s.class {
            *per_class.entry(class.as_str().to_string()).or_insert(0) += 1;
            *per_pair.entry(class.pair().as_str().to_string()).or_insert(0) += 1;
        }
        match s.span {
            Some(span) => {
                let d = span.duration();
                let i = DURATION_BUCKETS.iter().position(|&e| d < e).unwrap_or(DURATION_BUCKETS.len());
                durations[i].count += 1;
            }
            None => missing_span += 1,
        }
        match s.crop {
            Some(c) => {
                let side = c.width().max(c.height());
                let i = RESOLUTION_BUCKETS.iter().position(|&e| side < e).unwrap_or(RESOLUTION_BUCKETS.len());
                resolutions[i].count += 1;
            }
            None => missing_crop += 1,
        }
    }

    StatsReport {
        protocol: m.protocol,
        total: m.samples.len(),
        queries,
        distractors,
        class_count: per_class.len(),
        pair_count: per_pair.len(),
        per_class,
        per_pair,
        durations,
        missing_span,
        resolutions,
        missing_crop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{build_inter_pair_manifest, published_intra_manifest, Action, CropBox, SampleRecord, Span};

    #[test]
    fn empty_manifest_is_all_zero() {
        let m = BenchmarkManifest::new(Protocol::IntraPair, vec![]).unwrap();
        let r = manifest_stats(&m);
        assert_eq!((r.total, r.queries, r.distractors, r.class_count, r.pair_count), (0, 0, 0, 0, 0));
        assert!(r.durations.iter().chain(&r.resolutions).all(|b| b.count == 0));
    }

    #[test]
    fn published_counts_sum() {
        let r = manifest_stats(&published_intra_manifest());
        assert_eq!(r.total, 2300);
        assert_eq!(r.class_count, 14);
        assert_eq!(r.pair_count, 7);
        assert_eq!(r.per_class["open_vehicle_door"], 303);
        assert_eq!(r.per_class["close_vehicle_door"], 301);
        assert_eq!(r.per_class["load_vehicle"], 54);
        assert_eq!(r.per_class["unload_vehicle"], 61);
        assert_eq!(r.per_pair["open_close_trunk"], 97);
    }

    #[test]
    fn matches_brute_force_tally() {
        let classes = [
            Action::Start,
            Action::Stop,
            Action::Start,
            Action::TurnLeft,
            Action::OpenTrunk,
            Action::CloseTrunk,
            Action::OpenTrunk,
        ];
        let mut queries = Vec::new();
        for (i, c) in classes.iter().enumerate() {
            let mut s = SampleRecord::query(format!("q{i}"), *c);
            s.span = Some(Span::new(0.0, 0.5 + 1.5 * i as f64));
            s.crop = Some(CropBox { x0: 0, y0: 0, x1: 40 * (i as u32 + 1), y1: 30 });
            queries.push(s);
        }
        let distractors = (0..3).map(|i| SampleRecord::distractor(format!("d{i}"))).collect();
        let m = build_inter_pair_manifest(queries.clone(), distractors).unwrap();
        let r = manifest_stats(&m);

        // Independent tally over the raw inputs.
        let count = |a: Action| classes.iter().filter(|&&c| c == a).count();
        assert_eq!(r.total, 10);
        assert_eq!(r.queries, 7);
        assert_eq!(r.distractors, 3);
        assert_eq!(r.per_class["start"], count(Action::Start));
        assert_eq!(r.per_class["open_trunk"], count(Action::OpenTrunk));
        assert_eq!(r.per_pair["start_stop"], 3);
        assert_eq!(r.missing_span, 3);
        assert_eq!(r.missing_crop, 3);
        let mut durations = vec![0usize; DURATION_BUCKETS.len() + 1];
        for q in &queries {
            let d = q.span.unwrap().duration();
            durations[(d.floor() as usize).min(DURATION_BUCKETS.len())] += 1;
        }
        assert_eq!(r.durations.iter().map(|b| b.count).collect::<Vec<_>>(), durations);
        let res: usize = r.resolutions.iter().map(|b| b.count).sum();
        assert_eq!(res, 7);
        assert_eq!(r.resolutions[0].label, "[0,64)px");
        assert_eq!(r.resolutions[0].count, 1);
    }
}
