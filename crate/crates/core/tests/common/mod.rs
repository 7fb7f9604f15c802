//! A small synthetic corpus for end-to-end runs against the mock backend.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use maxsim_core::digest::sha256_parts;
use maxsim_core::manifest::{
    build_inter_pair_manifest, build_intra_pair_manifest, synthetic_queries, Action, BenchmarkManifest, PairId,
    Protocol, SampleRecord,
};
use maxsim_core::pipeline::{Backend, RunConfig};

/// Write `frames` distinct PNG frames, one second apart, for each sample.
pub fn write_frames(media_root: &Path, samples: &[SampleRecord], frames: usize) {
    for s in samples {
        let dir = media_root.join(&s.sample_id);
        std::fs::create_dir_all(&dir).unwrap();
        for k in 0..frames {
            let h = sha256_parts(&[s.sample_id.as_bytes(), &(k as u64).to_le_bytes()]);
            let img = RgbImage::from_fn(24, 16, |x, y| {
                let i = ((x / 8 + 3 * (y / 8)) as usize * 3) % 30;
                Rgb([h[i], h[i + 1], h[i + 2]])
            });
            img.save(dir.join(format!("{}.png", k * 1000))).unwrap();
        }
    }
}

pub fn intra_counts(per_class: usize) -> Vec<(Action, usize)> {
    Action::ALL.iter().map(|&a| (a, per_class)).collect()
}

/// An intra-pair manifest of `per_class` samples for every action.
pub fn intra_manifest(per_class: usize) -> BenchmarkManifest {
    build_intra_pair_manifest(synthetic_queries(&intra_counts(per_class))).unwrap()
}

/// Inter-pair queries from every pair but drive/reverse, plus distractors.
pub fn inter_manifest(per_class: usize, distractors: usize) -> BenchmarkManifest {
    let counts: Vec<(Action, usize)> =
        Action::ALL.iter().filter(|a| a.pair() != PairId::DriveReverse).map(|&a| (a, per_class)).collect();
    let ds = (0..distractors).map(|i| SampleRecord::distractor(format!("person_{i:04}"))).collect();
    build_inter_pair_manifest(synthetic_queries(&counts), ds).unwrap()
}

/// Lay out a manifest, its frames and a mock-backend config under `root`.
pub fn corpus(root: &Path, manifest: &BenchmarkManifest) -> RunConfig {
    std::fs::create_dir_all(root).unwrap();
    let manifest_path = root.join("manifest.jsonl");
    std::fs::write(&manifest_path, manifest.to_jsonl()).unwrap();
    let media = root.join("media");
    write_frames(&media, &manifest.samples, 3);
    let mut cfg = RunConfig::new(manifest_path, manifest.protocol, "mock-mllm");
    cfg.backend = Backend::Mock;
    cfg.media_root = media;
    cfg.cache_dir = root.join("cache");
    cfg.out_dir = root.join("out");
    cfg.workers = 3;
    cfg
}

pub fn protocol_name(p: Protocol) -> &'static str {
    match p {
        Protocol::InterPair => "inter_pair",
        Protocol::IntraPair => "intra_pair",
        Protocol::Classification => "classification",
    }
}

/// Every regular file under `dir`, as (relative path, bytes), sorted.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push((p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
