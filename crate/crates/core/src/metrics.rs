//! Ranking and retrieval metrics: sample-level AP, inter-pair mAP, intra-pair
//! Pair-mAP, classification accuracy and Monte-Carlo random baselines.
//!
//! AP is uninterpolated with R = number of relevant items in the query's
//! database. A query never appears in its own database, queries with R = 0 are
//! left out of every mean (and counted), ties rank by ascending sample id.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::{BenchmarkManifest, PairId, Protocol, Role};
use crate::simkernel::SimilarityMatrix;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),
    #[error("average precision is undefined without relevant items")]
    UndefinedAp,
    #[error("{0} is not supported for {1} manifests")]
    WrongProtocol(&'static str, Protocol),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Ranking key: NaN sinks to the bottom and `-0.0` ties with `0.0`.
fn score_key(x: f64) -> f64 {
    if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x + 0.0
    }
}

fn rank_by<K: Ord>(scores: &[f64], tiebreak: impl Fn(usize) -> K) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| {
        score_key(scores[b]).total_cmp(&score_key(scores[a])).then_with(|| tiebreak(a).cmp(&tiebreak(b)))
    });
    idx
}

/// Database positions ordered by descending score, ties by ascending id.
/// Sentinel scores sort below every real similarity, so they come last.
pub fn rank_indices(scores: &[f64], db_ids: &[String]) -> Vec<usize> {
    assert_eq!(scores.len(), db_ids.len(), "one score per database id");
    rank_by(scores, |i| db_ids[i].as_str())
}

pub fn rank(scores: &[f64], db_ids: &[String]) -> Vec<String> {
    rank_indices(scores, db_ids).into_iter().map(|i| db_ids[i].clone()).collect()
}

/// AP of a ranked relevance pattern; `None` when nothing is relevant.
pub fn ap_from_flags(flags: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in flags.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

pub fn average_precision(ranking: &[String], relevant: &HashSet<String>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(MetricsError::UndefinedAp);
    }
    let flags: Vec<bool> = ranking.iter().map(|id| relevant.contains(id)).collect();
    if flags.iter().filter(|&&f| f).count() != relevant.len() {
        return Err(MetricsError::InconsistentInputs("relevant ids missing from the ranking".into()));
    }
    Ok(ap_from_flags(&flags).expect("relevant set is non-empty"))
}

/// Fraction of exact matches, as a percentage.
pub fn accuracy<T: PartialEq>(predictions: &[T], gold: &[T]) -> Result<f64> {
    if predictions.len() != gold.len() || gold.is_empty() {
        return Err(MetricsError::InconsistentInputs(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(100.0 * hits as f64 / gold.len() as f64)
}

/// Round a percentage to one decimal, as reported.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub queries: usize,
    pub scored: usize,
    pub mean_ap: Option<f64>,
    pub mean_ap_1dp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair: String,
    pub queries: usize,
    pub scored: usize,
    pub map: Option<f64>,
    pub map_1dp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub sample_id: String,
    pub class: String,
    pub group: String,
    pub relevant: usize,
    pub database: usize,
    pub ap: Option<f64>,
}

/// Metric values are percentages; `*_1dp` fields carry the rounded figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub protocol: Protocol,
    pub config_fingerprint: Option<String>,
    pub metric: String,
    pub value: f64,
    pub value_1dp: f64,
    pub constrained: bool,
    pub queries: usize,
    pub scored_queries: usize,
    /// Queries without any relevant database item.
    pub skipped_queries: usize,
    /// Classification items whose description was empty.
    pub unscored: usize,
    pub per_class: Vec<ClassRow>,
    pub per_pair: Vec<PairRow>,
    #[serde(skip)]
    pub per_query: Vec<QueryRow>,
}

impl EvaluationReport {
    pub fn with_fingerprint(mut self, fp: impl Into<String>) -> Self {
        self.config_fingerprint = Some(fp.into());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["sample_id", "class", "group", "relevant", "database", "ap"])?;
        for q in &self.per_query {
            w.write_record([
                q.sample_id.clone(),
                q.class.clone(),
                q.group.clone(),
                q.relevant.to_string(),
                q.database.to_string(),
                q.ap.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Who is ranked against whom for one group of queries.
struct Group {
    label: String,
    queries: Vec<usize>,
    pool: Vec<usize>,
}

/// Index-based view of a retrieval manifest.
pub struct RetrievalPlan<'a> {
    manifest: &'a BenchmarkManifest,
    protocol: Protocol,
    constrained: bool,
    /// Position of each sample in ascending-id order, for tie-breaks.
    order: Vec<u32>,
    /// Relevance label: the unified pair for inter-pair, the action for intra-pair.
    label: Vec<Option<u8>>,
    groups: Vec<Group>,
}

impl<'a> RetrievalPlan<'a> {
    pub fn new(manifest: &'a BenchmarkManifest, constrained: bool) -> Result<Self> {
        let protocol = manifest.protocol;
        let samples = &manifest.samples;
        let mut by_id: Vec<usize> = (0..samples.len()).collect();
        by_id.sort_by(|&a, &b| samples[a].sample_id.cmp(&samples[b].sample_id));
        let mut order = vec![0u32; samples.len()];
        for (rank, &i) in by_id.iter().enumerate() {
            order[i] = rank as u32;
        }
        let is_query = |i: usize| samples[i].role == Role::Query && samples[i].class.is_some();
        // Reduction order is by query id so results never depend on input order.
        let sorted_queries = |pred: &dyn Fn(usize) -> bool| -> Vec<usize> {
            by_id.iter().copied().filter(|&i| is_query(i) && pred(i)).collect()
        };

        let (label, groups) = match protocol {
            Protocol::InterPair => {
                let label = samples
                    .iter()
                    .map(|s| if s.role == Role::Query { s.pair().map(|p| p as u8) } else { None })
                    .collect();
                let pool: Vec<usize> =
                    if constrained { sorted_queries(&|_| true) } else { (0..samples.len()).collect() };
                let groups = vec![Group { label: "all".into(), queries: sorted_queries(&|_| true), pool }];
                (label, groups)
            }
            Protocol::IntraPair => {
                let label = samples.iter().map(|s| s.class.map(|a| a as u8)).collect();
                let groups = PairId::ALL
                    .iter()
                    .map(|&p| {
                        let qs = sorted_queries(&|i| samples[i].pair() == Some(p));
                        Group { label: p.as_str().into(), pool: qs.clone(), queries: qs }
                    })
                    .collect();
                (label, groups)
            }
            Protocol::Classification => return Err(MetricsError::WrongProtocol("ranked retrieval", protocol)),
        };
        Ok(RetrievalPlan { manifest, protocol, constrained, order, label, groups })
    }

    /// Score every query with `row(query, database)`, which returns one score
    /// per database sample (indices into `manifest.samples`).
    pub fn evaluate(&self, row: impl Fn(usize, &[usize]) -> Vec<f64> + Sync) -> EvaluationReport {
        let samples = &self.manifest.samples;
        let mut per_query = Vec::new();
        let mut per_pair = Vec::new();
        let mut group_maps = Vec::new();
        for g in &self.groups {
            let results: Vec<QueryRow> = g
                .queries
                .par_iter()
                .map(|&q| {
                    let db: Vec<usize> = g.pool.iter().copied().filter(|&d| d != q).collect();
                    let scores = row(q, &db);
                    assert_eq!(scores.len(), db.len(), "row closure must score every database item");
                    let ranked = rank_by(&scores, |i| self.order[db[i]]);
                    let flags: Vec<bool> = ranked.iter().map(|&i| self.label[db[i]] == self.label[q]).collect();
                    let s = &samples[q];
                    QueryRow {
                        sample_id: s.sample_id.clone(),
                        class: s.class.map_or_else(String::new, |a| a.as_str().to_string()),
                        group: match self.protocol {
                            Protocol::InterPair => s.pair().map_or_else(String::new, |p| p.as_str().to_string()),
                            _ => g.label.clone(),
                        },
                        relevant: flags.iter().filter(|&&f| f).count(),
                        database: db.len(),
                        ap: ap_from_flags(&flags),
                    }
                })
                .collect();
            if self.protocol == Protocol::IntraPair {
                let map = mean(results.iter().filter_map(|r| r.ap));
                let scored = results.iter().filter(|r| r.ap.is_some()).count();
                if let Some(m) = map {
                    group_maps.push(m);
                }
                per_pair.push(PairRow {
                    pair: g.label.clone(),
                    queries: results.len(),
                    scored,
                    map: map.map(|m| 100.0 * m),
                    map_1dp: map.map(|m| round1(100.0 * m)),
                });
            }
            per_query.extend(results);
        }

        let value = match self.protocol {
            Protocol::IntraPair => mean(group_maps.iter().copied()),
            _ => mean(per_query.iter().filter_map(|r| r.ap)),
        }
        .map_or(0.0, |v| 100.0 * v);
        let per_class = class_table(&per_query, self.protocol);
        let scored = per_query.iter().filter(|r| r.ap.is_some()).count();
        EvaluationReport {
            protocol: self.protocol,
            config_fingerprint: None,
            metric: if self.protocol == Protocol::IntraPair { "Pair-mAP" } else { "mAP" }.into(),
            value,
            value_1dp: round1(value),
            constrained: self.constrained,
            queries: per_query.len(),
            scored_queries: scored,
            skipped_queries: per_query.len() - scored,
            unscored: 0,
            per_class,
            per_pair,
            per_query,
        }
    }

    /// Score from a similarity matrix whose rows and columns cover the plan.
    pub fn evaluate_matrix(&self, matrix: &SimilarityMatrix) -> Result<EvaluationReport> {
        let samples = &self.manifest.samples;
        let rows: HashMap<&str, usize> = matrix.query_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let cols: HashMap<&str, usize> = matrix.db_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut row_of = vec![usize::MAX; samples.len()];
        let mut col_of = vec![usize::MAX; samples.len()];
        for g in &self.groups {
            for &q in &g.queries {
                row_of[q] = *rows.get(samples[q].sample_id.as_str()).ok_or_else(|| {
                    MetricsError::InconsistentInputs(format!("query `{}` has no matrix row", samples[q].sample_id))
                })?;
            }
            for &d in &g.pool {
                col_of[d] = *cols.get(samples[d].sample_id.as_str()).ok_or_else(|| {
                    MetricsError::InconsistentInputs(format!("sample `{}` has no matrix column", samples[d].sample_id))
                })?;
            }
        }
        Ok(self.evaluate(|q, db| {
            let r = matrix.row(row_of[q]);
            db.iter().map(|&d| r[col_of[d]]).collect()
        }))
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut sum) = (0usize, 0.0);
    for x in xs {
        n += 1;
        sum += x;
    }
    (n > 0).then(|| sum / n as f64)
}

fn class_table(rows: &[QueryRow], protocol: Protocol) -> Vec<ClassRow> {
    let mut by: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let key = if protocol == Protocol::InterPair { &r.group } else { &r.class };
        let e = by.entry(key.clone()).or_default();
        e.0 += 1;
        e.1.extend(r.ap);
    }
    by.into_iter()
        .map(|(class, (queries, aps))| {
            let m = mean(aps.iter().copied()).map(|v| 100.0 * v);
            ClassRow { class, queries, scored: aps.len(), mean_ap: m, mean_ap_1dp: m.map(round1) }
        })
        .collect()
}

/// Inter-pair mAP: each query against every other sample (or every other
/// query when `constrained`), relevant when it shares the unified pair class.
pub fn inter_pair_map(
    manifest: &BenchmarkManifest,
    matrix: &SimilarityMatrix,
    constrained: bool,
) -> Result<EvaluationReport> {
    if manifest.protocol != Protocol::InterPair {
        return Err(MetricsError::WrongProtocol("inter-pair mAP", manifest.protocol));
    }
    RetrievalPlan::new(manifest, constrained)?.evaluate_matrix(matrix)
}

/// Pair-mAP: within each opposite pair, each query against the other samples
/// of the pair; the unweighted mean of per-pair mAP.
pub fn pair_map(manifest: &BenchmarkManifest, matrix: &SimilarityMatrix) -> Result<EvaluationReport> {
    if manifest.protocol != Protocol::IntraPair {
        return Err(MetricsError::WrongProtocol("Pair-mAP", manifest.protocol));
    }
    RetrievalPlan::new(manifest, false)?.evaluate_matrix(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub sample_id: String,
    pub predicted: usize,
    pub answer: usize,
    pub unscored: bool,
}

/// Accuracy report for multiple-choice classification.
pub fn classification_report(outcomes: &[ChoiceOutcome]) -> Result<EvaluationReport> {
    let predicted: Vec<usize> = outcomes.iter().map(|o| o.predicted).collect();
    let gold: Vec<usize> = outcomes.iter().map(|o| o.answer).collect();
    let value = accuracy(&predicted, &gold)?;
    Ok(EvaluationReport {
        protocol: Protocol::Classification,
        config_fingerprint: None,
        metric: "accuracy".into(),
        value,
        value_1dp: round1(value),
        constrained: false,
        queries: outcomes.len(),
        scored_queries: outcomes.iter().filter(|o| !o.unscored).count(),
        skipped_queries: 0,
        unscored: outcomes.iter().filter(|o| o.unscored).count(),
        per_class: Vec::new(),
        per_pair: Vec::new(),
        per_query: outcomes
            .iter()
            .map(|o| QueryRow {
                sample_id: o.sample_id.clone(),
                class: o.answer.to_string(),
                group: o.predicted.to_string(),
                relevant: 1,
                database: 0,
                ap: Some(if o.predicted == o.answer { 1.0 } else { 0.0 }),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Mean metric over trials, as a percentage.
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Monte-Carlo expectation of the protocol metric under i.i.d. uniform
/// scores. Deterministic for a given seed, independent of thread count.
pub fn random_baseline(manifest: &BenchmarkManifest, protocol: Protocol, trials: usize, seed: u64) -> Result<Baseline> {
    let trials = trials.max(1);
    let values: Vec<f64> = match protocol {
        Protocol::InterPair | Protocol::IntraPair => {
            let mut m = manifest.clone();
            m.protocol = protocol;
            let plan = RetrievalPlan::new(&m, manifest.constrained)?;
            (0..trials)
                .map(|t| {
                    plan.evaluate(|q, db| {
                        let mut rng = trial_rng(seed, t, q);
                        db.iter().map(|_| rng.gen::<f64>()).collect()
                    })
                    .value
                })
                .collect()
        }
        Protocol::Classification => {
            let sets: Vec<_> = manifest
                .choices
                .as_ref()
                .ok_or_else(|| MetricsError::InconsistentInputs("classification manifest has no choices".into()))?
                .values()
                .collect();
            if sets.is_empty() {
                return Err(MetricsError::InconsistentInputs("no choice sets".into()));
            }
            (0..trials)
                .map(|t| {
                    let hits = sets
                        .iter()
                        .enumerate()
                        .filter(|(i, c)| {
                            let mut rng = trial_rng(seed, t, *i);
                            let scores: Vec<f64> = c.choices.iter().map(|_| rng.gen()).collect();
                            let best = (0..scores.len()).fold(0, |b, j| if scores[j] > scores[b] { j } else { b });
                            best == c.answer
                        })
                        .count();
                    100.0 * hits as f64 / sets.len() as f64
                })
                .collect()
        }
    };
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stderr = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(Baseline { mean, stderr, trials })
}

fn trial_rng(seed: u64, trial: usize, item: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
    rng.set_stream(item as u64);
    rng
}

#[cfg(test)]
mod tests {
    use num_rational::Ratio;
    use proptest::prelude::*;

    use super::*;
    use crate::manifest::{build_inter_pair_manifest, build_intra_pair_manifest, Action, SampleRecord};
    use crate::simkernel::SENTINEL;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    /// Exact AP: mean over relevant ranks of the precision of the prefix ending there.
    fn rational_ap(flags: &[bool]) -> Option<Ratio<u64>> {
        let r = flags.iter().filter(|&&f| f).count() as u64;
        if r == 0 {
            return None;
        }
        let mut total = Ratio::from_integer(0);
        for k in 0..flags.len() {
            if flags[k] {
                let in_prefix = flags[..=k].iter().filter(|&&f| f).count() as u64;
                total += Ratio::new(in_prefix, k as u64 + 1);
            }
        }
        Some(total / r)
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&[0.9, 0.1, 0.5], &ids(3)), ["d0", "d2", "d1"]);
        let ids = vec!["c".to_string(), "a".into(), "b".into()];
        assert_eq!(rank(&[0.3, 0.3, 0.3], &ids), ["a", "b", "c"]);
        assert_eq!(rank(&[SENTINEL, -1.0, f64::NAN], &ids), ["a", "c", "b"]);
        assert_eq!(rank(&[0.0, -0.0, 0.0], &ids), ["a", "b", "c"]);
    }

    #[test]
    fn ap_examples() {
        assert_eq!(ap_from_flags(&[true, true, false, false]), Some(1.0));
        assert_eq!(ap_from_flags(&[false, true]), Some(0.5));
        assert!((ap_from_flags(&[true, false, true]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(ap_from_flags(&[false, false]), None);
        let ranking = ids(3);
        let rel: HashSet<String> = ["d0".to_string(), "d2".to_string()].into();
        assert!((average_precision(&ranking, &rel).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(matches!(average_precision(&ranking, &HashSet::new()), Err(MetricsError::UndefinedAp)));
        let stray: HashSet<String> = ["zz".to_string()].into();
        assert!(matches!(average_precision(&ranking, &stray), Err(MetricsError::InconsistentInputs(_))));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        let gold = [0; 10];
        let pred = [0, 0, 0, 0, 0, 0, 0, 1, 1, 1];
        assert_eq!(round1(accuracy(&pred, &gold).unwrap()), 70.0);
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    fn q(id: &str, a: Action) -> SampleRecord {
        SampleRecord::query(id, a)
    }

    fn oracle_matrix(m: &BenchmarkManifest, same: impl Fn(&SampleRecord, &SampleRecord) -> bool) -> SimilarityMatrix {
        let ids: Vec<String> = m.samples.iter().map(|s| s.sample_id.clone()).collect();
        let mut v = Vec::new();
        for a in &m.samples {
            for b in &m.samples {
                v.push(if same(a, b) { 1.0 } else { 0.0 });
            }
        }
        SimilarityMatrix::from_values(ids.clone(), ids, v)
    }

    #[test]
    fn perfect_inter_retrieval() {
        let m = build_inter_pair_manifest(
            vec![q("a", Action::Start), q("b", Action::Stop), q("c", Action::TurnLeft), q("d", Action::TurnRight)],
            vec![SampleRecord::distractor("x")],
        )
        .unwrap();
        let mat = oracle_matrix(&m, |a, b| a.pair().is_some() && a.pair() == b.pair());
        let r = inter_pair_map(&m, &mat, false).unwrap();
        assert_eq!(r.value_1dp, 100.0);
        assert_eq!(r.queries, 4);
        assert_eq!(r.per_class.len(), 2);
    }

    #[test]
    fn toy_inter_matches_hand_computation() {
        // a,b: start_stop; c: turn_left_right; x: distractor.
        let m = build_inter_pair_manifest(
            vec![q("a", Action::Start), q("b", Action::Stop), q("c", Action::TurnLeft)],
            vec![SampleRecord::distractor("x")],
        )
        .unwrap();
        let ids: Vec<String> = ["a", "b", "c", "x"].iter().map(|s| s.to_string()).collect();
        #[rustfmt::skip]
        let v = vec![
            0.0, 0.2, 0.9, 0.5,   // a: c, x, b  -> b at rank 3 -> 1/3
            0.7, 0.0, 0.1, 0.9,   // b: x, a, c  -> a at rank 2 -> 1/2
            0.5, 0.5, 0.0, 0.5,   // c: no relevant item
            0.0, 0.0, 0.0, 0.0,
        ];
        let mat = SimilarityMatrix::from_values(ids.clone(), ids, v);
        let r = inter_pair_map(&m, &mat, false).unwrap();
        assert_eq!(r.skipped_queries, 1);
        assert!((r.value - 100.0 * (1.0 / 3.0 + 0.5) / 2.0).abs() < 1e-9);
        // Constrained: the distractor leaves the database.
        let r = inter_pair_map(&m, &mat, true).unwrap();
        assert!((r.value - 100.0 * (0.5 + 1.0) / 2.0).abs() < 1e-9);
        let csv_dir = tempfile::tempdir().unwrap();
        r.write_csv(&csv_dir.path().join("q.csv")).unwrap();
        let text = std::fs::read_to_string(csv_dir.path().join("q.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn missing_matrix_ids_are_inconsistent() {
        let m = build_intra_pair_manifest(vec![q("a", Action::Start), q("b", Action::Stop)]).unwrap();
        let mat = SimilarityMatrix::from_values(vec!["a".into()], vec!["a".into(), "b".into()], vec![1.0, 0.0]);
        assert!(matches!(pair_map(&m, &mat), Err(MetricsError::InconsistentInputs(_))));
    }

    #[test]
    fn pair_map_is_mean_of_pair_maps() {
        let m = build_intra_pair_manifest(vec![
            q("s1", Action::Start),
            q("s2", Action::Start),
            q("t1", Action::Stop),
            q("l1", Action::TurnLeft),
            q("l2", Action::TurnLeft),
            q("r1", Action::TurnRight),
        ])
        .unwrap();
        let ids: Vec<String> = m.samples.iter().map(|s| s.sample_id.clone()).collect();
        let n = ids.len();
        let mut v = vec![0.0; n * n];
        let at =
            |a: &str, b: &str| ids.iter().position(|x| x == a).unwrap() * n + ids.iter().position(|x| x == b).unwrap();
        // s1: [t1, s2] -> 0.5 ; s2: [s1, t1] -> 1.0 ; t1: none relevant.
        v[at("s1", "t1")] = 0.9;
        v[at("s1", "s2")] = 0.1;
        v[at("s2", "s1")] = 0.9;
        // => mAP_p(start_stop) = 0.75
        // l1: [l2, r1] -> 1.0 ; l2: [r1, l1] -> 0.5 ; r1: none.
        v[at("l1", "l2")] = 0.9;
        v[at("l2", "r1")] = 0.9;
        // => mAP_p(turn) = 0.75
        let mat = SimilarityMatrix::from_values(ids.clone(), ids.clone(), v);
        let r = pair_map(&m, &mat).unwrap();
        assert_eq!(r.skipped_queries, 2);
        let maps: Vec<f64> = r.per_pair.iter().filter_map(|p| p.map).collect();
        assert_eq!(maps.len(), 2);
        assert!((r.value - maps.iter().sum::<f64>() / 2.0).abs() < 1e-9);
        assert!((r.value - 75.0).abs() < 1e-9);
    }

    #[test]
    fn pair_map_is_unweighted_mean_of_hand_built_pairs() {
        let m = build_intra_pair_manifest(vec![
            q("s1", Action::Start),
            q("s2", Action::Start),
            q("t1", Action::Stop),
            q("t2", Action::Stop),
            q("t3", Action::Stop),
            q("l1", Action::TurnLeft),
            q("l2", Action::TurnLeft),
            q("r1", Action::TurnRight),
            q("r2", Action::TurnRight),
            q("r3", Action::TurnRight),
        ])
        .unwrap();
        // Desired relevance pattern of each query's ranking.
        let patterns: HashMap<&str, Vec<bool>> = [
            ("s1", vec![false, true, false, false]), // 1/2
            ("s2", vec![false, true, false, false]), // 1/2
            ("t1", vec![false, true, false, true]),  // 1/2
            ("t2", vec![true, false, false, true]),  // 3/4
            ("t3", vec![true, false, false, true]),  // 3/4  -> mAP_p = 0.6
            ("l1", vec![true, false, false, false]), // 1
            ("l2", vec![true, false, false, false]), // 1
            ("r1", vec![false, true, false, true]),  // 1/2
            ("r2", vec![true, false, false, true]),  // 3/4
            ("r3", vec![true, false, false, true]),  // 3/4  -> mAP_p = 0.8
        ]
        .into();
        let plan = RetrievalPlan::new(&m, false).unwrap();
        let r = plan.evaluate(|qi, db| {
            let query = &m.samples[qi];
            let (mut rel, mut irr): (Vec<usize>, Vec<usize>) =
                (0..db.len()).partition(|&k| m.samples[db[k]].class == query.class);
            let mut scores = vec![0.0; db.len()];
            for (pos, &is_rel) in patterns[query.sample_id.as_str()].iter().enumerate() {
                let k = if is_rel { rel.remove(0) } else { irr.remove(0) };
                scores[k] = (db.len() - pos) as f64;
            }
            scores
        });
        let maps: Vec<f64> = r.per_pair.iter().filter_map(|p| p.map).collect();
        assert_eq!(maps.len(), 2);
        assert!((maps[0] - 60.0).abs() < 1e-9 && (maps[1] - 80.0).abs() < 1e-9, "{maps:?}");
        assert!((r.value - 70.0).abs() < 1e-9);
    }

    /// Expected AP over all equally likely orderings of a database with
    /// `r` relevant and `n - r` irrelevant items, by exhaustive enumeration.
    fn exhaustive_expected_ap(r: usize, n: usize) -> f64 {
        let mut total = 0.0;
        let mut count = 0;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize == r {
                let flags: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
                total += ap_from_flags(&flags).unwrap();
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn random_baseline_matches_exhaustive_enumeration() {
        // One pair, two samples per action: each query sees 1 relevant of 3.
        let m = build_intra_pair_manifest(vec![
            q("a1", Action::Start),
            q("a2", Action::Start),
            q("b1", Action::Stop),
            q("b2", Action::Stop),
        ])
        .unwrap();
        let expected = 100.0 * exhaustive_expected_ap(1, 3);
        let b = random_baseline(&m, Protocol::IntraPair, 4000, 7).unwrap();
        assert!((b.mean - expected).abs() < 4.0 * b.stderr, "{b:?} vs {expected}");
        // Determinism.
        assert_eq!(
            random_baseline(&m, Protocol::IntraPair, 50, 7).unwrap(),
            random_baseline(&m, Protocol::IntraPair, 50, 7).unwrap()
        );
    }

    #[test]
    fn random_inter_baseline_counts_distractors() {
        // Start and stop merge into one class; each query sees 1 relevant among
        // the other query and two distractors.
        let m = build_inter_pair_manifest(
            vec![q("a", Action::Start), q("b", Action::Stop)],
            vec![SampleRecord::distractor("x"), SampleRecord::distractor("y")],
        )
        .unwrap();
        let expected = 100.0 * exhaustive_expected_ap(1, 3);
        let b = random_baseline(&m, Protocol::InterPair, 4000, 11).unwrap();
        assert!((b.mean - expected).abs() < 4.0 * b.stderr, "{b:?} vs {expected}");
        // Without distractors the only candidate is relevant.
        let c = random_baseline(&m.clone().constrained(true), Protocol::InterPair, 10, 11).unwrap();
        assert_eq!(c.mean, 100.0);
    }

    #[test]
    fn random_baseline_single_class_is_perfect() {
        let m =
            build_inter_pair_manifest(vec![q("a", Action::Start), q("b", Action::Stop), q("c", Action::Start)], vec![])
                .unwrap();
        let b = random_baseline(&m, Protocol::InterPair, 5, 1).unwrap();
        assert_eq!(b.mean, 100.0);
        assert_eq!(b.stderr, 0.0);
    }

    #[test]
    fn classification_report_counts() {
        let outcomes: Vec<ChoiceOutcome> = (0..10)
            .map(|i| ChoiceOutcome {
                sample_id: format!("s{i}"),
                predicted: usize::from(i >= 7),
                answer: 0,
                unscored: i == 9,
            })
            .collect();
        let r = classification_report(&outcomes).unwrap();
        assert_eq!(r.value_1dp, 70.0);
        assert_eq!(r.unscored, 1);
    }

    fn flags_strategy() -> impl Strategy<Value = Vec<bool>> {
        prop::collection::vec(any::<bool>(), 1..=8)
    }

    proptest! {
        #[test]
        fn ap_matches_rational_oracle(flags in flags_strategy()) {
            match (ap_from_flags(&flags), rational_ap(&flags)) {
                (None, None) => {}
                (Some(a), Some(r)) => {
                    let exact = *r.numer() as f64 / *r.denom() as f64;
                    prop_assert!((a - exact).abs() <= 1e-12);
                }
                other => prop_assert!(false, "mismatch {:?}", other),
            }
        }

        #[test]
        fn ap_is_one_iff_relevant_first(flags in flags_strategy()) {
            if let Some(ap) = ap_from_flags(&flags) {
                let r = flags.iter().filter(|&&f| f).count();
                let perfect = flags[..r].iter().all(|&f| f);
                prop_assert_eq!(ap == 1.0, perfect);
            }
        }

        #[test]
        fn tail_permutation_invariance(flags in flags_strategy(), seed in any::<u64>()) {
            if let Some(last) = flags.iter().rposition(|&f| f) {
                let mut tail = flags[last + 1..].to_vec();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rand::seq::SliceRandom::shuffle(&mut tail[..], &mut rng);
                let mut permuted = flags[..=last].to_vec();
                permuted.extend(tail);
                prop_assert_eq!(ap_from_flags(&flags), ap_from_flags(&permuted));
            }
        }

        #[test]
        fn promoting_a_relevant_item_never_hurts(flags in flags_strategy(), pos in 1usize..8) {
            if pos < flags.len() && flags[pos] && !flags[pos - 1] {
                let mut better = flags.clone();
                better.swap(pos, pos - 1);
                prop_assert!(ap_from_flags(&better).unwrap() >= ap_from_flags(&flags).unwrap());
            }
        }

        #[test]
        fn rank_matches_reference_sort(scores in prop::collection::vec(prop_oneof![Just(0.5f64), -1.0f64..1.0], 100)) {
            let ids: Vec<String> = (0..100).map(|i| format!("{:03}", (i * 37) % 100)).collect();
            let mut pairs: Vec<(f64, &String)> = scores.iter().copied().zip(&ids).collect();
            // Reference: stable sort by id, then stable sort by descending score.
            pairs.sort_by(|a, b| a.1.cmp(b.1));
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let expected: Vec<String> = pairs.into_iter().map(|(_, id)| id.clone()).collect();
            prop_assert_eq!(rank(&scores, &ids), expected);
        }
    }
}
