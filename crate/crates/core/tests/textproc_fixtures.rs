//! The sentence-splitter fixture corpus. Each row carries the input, the
//! expected split, the output of an untrained Punkt tokenizer for reference,
//! and a note explaining any difference between the two.

use maxsim_core::textproc::split;
use serde::Deserialize;

#[derive(Deserialize)]
struct Row {
    input: String,
    expected: Vec<String>,
    punkt: Vec<String>,
    divergence: String,
}

fn rows() -> Vec<Row> {
    include_str!("fixtures/sentences.jsonl").lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn corpus_is_large_enough() {
    let rows = rows();
    assert!(rows.len() >= 50);
    assert!(rows.iter().map(|r| r.expected.len()).sum::<usize>() >= 100);
}

#[test]
fn splits_match_expected() {
    for r in rows() {
        assert_eq!(split(&r.input).into_vec(), r.expected, "input: {:?}", r.input);
    }
}

#[test]
fn every_divergence_is_explained() {
    for r in rows() {
        assert_eq!(r.expected != r.punkt, !r.divergence.is_empty(), "input: {:?}", r.input);
    }
}

#[test]
fn emitted_sentences_are_fixed_points() {
    for r in rows() {
        for s in &r.expected {
            assert_eq!(split(s).into_vec(), std::slice::from_ref(s), "from {:?}", r.input);
        }
    }
}
