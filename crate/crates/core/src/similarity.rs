//! Component similarity: TF-IDF vectors, cosine, and three comparison modes.
//!
//! Features are word unigrams plus character 3-grams taken inside each
//! token, both over [`text::tokenize`] output. Inverse document frequency
//! is smoothed, `ln((1 + N) / (1 + df)) + 1`, and fitted on the texts of a
//! single comparison.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::bundle::ComponentKind;
use crate::flatten::{component_value, flatten_value, overall_text, top_field, FieldText};
use crate::model::TmkModel;
use crate::text;

/// Sparse feature vector.
pub type Vector = BTreeMap<String, f64>;

/// Turns a batch of texts into vectors. Implementations may fit corpus
/// statistics on the batch.
pub trait Embedder {
    fn embed(&self, texts: &[&str]) -> Vec<Vector>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TfIdf;

fn features(text: &str) -> BTreeMap<String, f64> {
    let mut tf = BTreeMap::new();
    for token in text::tokenize(text) {
        let chars: Vec<char> = token.chars().collect();
        for gram in chars.windows(3) {
            *tf.entry(format!("c:{}", gram.iter().collect::<String>()))
                .or_insert(0.0) += 1.0;
        }
        *tf.entry(format!("w:{token}")).or_insert(0.0) += 1.0;
    }
    tf
}

impl Embedder for TfIdf {
    fn embed(&self, texts: &[&str]) -> Vec<Vector> {
        let counts: Vec<BTreeMap<String, f64>> = texts.iter().map(|t| features(t)).collect();
        let mut df: BTreeMap<&str, f64> = BTreeMap::new();
        for doc in &counts {
            for key in doc.keys() {
                *df.entry(key.as_str()).or_insert(0.0) += 1.0;
            }
        }
        let n = texts.len() as f64;
        let idf: BTreeMap<&str, f64> = df
            .into_iter()
            .map(|(k, d)| (k, ((1.0 + n) / (1.0 + d)).ln() + 1.0))
            .collect();
        counts
            .iter()
            .map(|doc| doc.iter().map(|(k, tf)| (k.clone(), tf * idf[k.as_str()])).collect())
            .collect()
    }
}

/// TF-IDF vectors of `texts`, with IDF fitted on `texts`.
pub fn vectorize(texts: &[&str]) -> Vec<Vector> {
    TfIdf.embed(texts)
}

/// Cosine in [0, 1]; 0 when either vector is zero.
pub fn cosine(a: &Vector, b: &Vector) -> f64 {
    let norm = |v: &Vector| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // walk the shared keys in sorted order so the sum is the same either way round
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let shared: BTreeSet<&String> = small.keys().filter(|k| large.contains_key(*k)).collect();
    let dot: f64 = shared.into_iter().map(|k| a[k] * b[k]).sum();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("cannot compare a {0} component with a {1} component")]
    KindMismatch(&'static str, &'static str),
}

/// One component of a model as a JSON tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub kind: ComponentKind,
    pub value: Value,
}

impl Component {
    pub fn of(model: &TmkModel, kind: ComponentKind) -> Self {
        Self {
            kind,
            value: component_value(model, kind),
        }
    }
}

fn same_kind(a: &Component, b: &Component) -> Result<(), SimilarityError> {
    if a.kind == b.kind {
        Ok(())
    } else {
        Err(SimilarityError::KindMismatch(a.kind.as_str(), b.kind.as_str()))
    }
}

/// Vectors for a fixed set of texts, with equal-text pairs scored 1.
struct Scorer {
    norms: Vec<String>,
    vectors: Vec<Vector>,
}

impl Scorer {
    fn new(embedder: &dyn Embedder, texts: &[&str]) -> Self {
        Self {
            norms: texts.iter().map(|t| text::normalize(t)).collect(),
            vectors: embedder.embed(texts),
        }
    }

    fn score(&self, i: usize, j: usize) -> f64 {
        if self.norms[i] == self.norms[j] {
            1.0
        } else {
            cosine(&self.vectors[i], &self.vectors[j])
        }
    }
}

pub fn overall_similarity_with(embedder: &dyn Embedder, a: &Component, b: &Component) -> Result<f64, SimilarityError> {
    same_kind(a, b)?;
    let ta = overall_text(&flatten_value(&a.value));
    let tb = overall_text(&flatten_value(&b.value));
    Ok(Scorer::new(embedder, &[&ta, &tb]).score(0, 1))
}

/// Cosine of the two components' concatenated leaf texts.
pub fn overall_similarity(a: &Component, b: &Component) -> Result<f64, SimilarityError> {
    overall_similarity_with(&TfIdf, a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldMatch {
    pub path: String,
    pub matched_path: Option<String>,
    pub score: f64,
}

fn directional(
    scorer: &Scorer,
    from: &[FieldText],
    from_off: usize,
    to: &[FieldText],
    to_off: usize,
) -> (f64, Vec<FieldMatch>) {
    let mut matches = Vec::with_capacity(from.len());
    for (i, f) in from.iter().enumerate() {
        let bucket: Vec<usize> = (0..to.len())
            .filter(|&j| top_field(&to[j].path) == top_field(&f.path))
            .collect();
        let candidates: Vec<usize> = if bucket.is_empty() {
            (0..to.len()).collect()
        } else {
            bucket
        };
        let mut best: Option<(usize, f64)> = None;
        for j in candidates {
            let s = scorer.score(from_off + i, to_off + j);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((j, s));
            }
        }
        matches.push(FieldMatch {
            path: f.path.clone(),
            matched_path: best.map(|(j, _)| to[j].path.clone()),
            score: best.map_or(0.0, |(_, s)| s),
        });
    }
    let score = match (from.is_empty(), to.is_empty()) {
        (true, true) => 1.0,
        (true, false) => 0.0,
        _ => matches.iter().map(|m| m.score).sum::<f64>() / from.len() as f64,
    };
    (score, matches)
}

/// Direction-averaged per-field score plus the A-to-B field matches.
pub fn per_field_score_with(embedder: &dyn Embedder, a: &[FieldText], b: &[FieldText]) -> (f64, Vec<FieldMatch>) {
    let texts: Vec<&str> = a.iter().chain(b).map(|f| f.text.as_str()).collect();
    let scorer = Scorer::new(embedder, &texts);
    let (ab, details) = directional(&scorer, a, 0, b, a.len());
    let (ba, _) = directional(&scorer, b, a.len(), a, 0);
    ((ab + ba) / 2.0, details)
}

pub fn per_field_score(a: &[FieldText], b: &[FieldText]) -> f64 {
    per_field_score_with(&TfIdf, a, b).0
}

/// Each leaf of A is scored against its best leaf in B under the same
/// top-level field (any leaf if that field is absent from B), averaged over
/// A; the result averages both directions.
pub fn per_field_similarity(a: &Component, b: &Component) -> Result<f64, SimilarityError> {
    same_kind(a, b)?;
    Ok(per_field_score(&flatten_value(&a.value), &flatten_value(&b.value)))
}

fn leaf_text(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some(String::new()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn collect_leaves(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Array(items) => items.iter().for_each(|i| collect_leaves(i, out)),
        Value::Object(map) => map.values().for_each(|i| collect_leaves(i, out)),
        leaf => out.extend(leaf_text(leaf)),
    }
}

struct DictScorer {
    index: BTreeMap<String, usize>,
    scorer: Scorer,
}

impl DictScorer {
    fn leaf(&self, a: &str, b: &str) -> f64 {
        self.scorer.score(self.index[a], self.index[b])
    }

    fn value(&self, a: &Value, b: &Value) -> f64 {
        match (a, b) {
            (Value::Object(ma), Value::Object(mb)) => {
                let keys: BTreeSet<&String> = ma.keys().chain(mb.keys()).collect();
                if keys.is_empty() {
                    return 1.0;
                }
                let total: f64 = keys
                    .iter()
                    .map(|k| match (ma.get(*k), mb.get(*k)) {
                        (Some(x), Some(y)) => self.value(x, y),
                        _ => 0.0,
                    })
                    .sum();
                total / keys.len() as f64
            }
            (Value::Array(xa), Value::Array(xb)) => {
                if xa.is_empty() && xb.is_empty() {
                    return 1.0;
                }
                let grid: Vec<Vec<f64>> = xa
                    .iter()
                    .map(|x| xb.iter().map(|y| self.value(x, y)).collect())
                    .collect();
                let transposed: Vec<Vec<f64>> = (0..xb.len())
                    .map(|j| (0..xa.len()).map(|i| grid[i][j]).collect())
                    .collect();
                let denom = xa.len().max(xb.len()) as f64;
                (greedy(&grid) + greedy(&transposed)) / (2.0 * denom)
            }
            (Value::Object(_) | Value::Array(_), _) | (_, Value::Object(_) | Value::Array(_)) => 0.0,
            _ => match (leaf_text(a), leaf_text(b)) {
                (Some(x), Some(y)) => self.leaf(&x, &y),
                _ => 0.0,
            },
        }
    }
}

/// Sum of scores over a greedy one-to-one pairing: repeatedly take the best
/// remaining pair, earliest row then column on ties.
fn greedy(grid: &[Vec<f64>]) -> f64 {
    let rows = grid.len();
    let cols = grid.first().map_or(0, Vec::len);
    let mut pairs: Vec<(f64, usize, usize)> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (grid[i][j], i, j)))
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_r, mut used_c) = (vec![false; rows], vec![false; cols]);
    let mut total = 0.0;
    for (s, i, j) in pairs {
        if !used_r[i] && !used_c[j] {
            used_r[i] = true;
            used_c[j] = true;
            total += s;
        }
    }
    total
}

pub fn dict_symmetric_values_with(embedder: &dyn Embedder, a: &Value, b: &Value) -> f64 {
    let mut leaves = Vec::new();
    collect_leaves(a, &mut leaves);
    collect_leaves(b, &mut leaves);
    let mut index = BTreeMap::new();
    let mut texts = Vec::new();
    for leaf in leaves {
        if !index.contains_key(&leaf) {
            index.insert(leaf.clone(), texts.len());
            texts.push(leaf);
        }
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    DictScorer {
        index,
        scorer: Scorer::new(embedder, &refs),
    }
    .value(a, b)
}

/// Recursive structural score. Objects average over the union of keys, a
/// missing key scoring 0; arrays pair elements greedily, unmatched elements
/// scoring 0, and average the pairing over both argument orders; leaves use
/// cosine.
pub fn dict_symmetric_values(a: &Value, b: &Value) -> f64 {
    dict_symmetric_values_with(&TfIdf, a, b)
}

pub fn dict_symmetric_similarity(a: &Component, b: &Component) -> Result<f64, SimilarityError> {
    same_kind(a, b)?;
    Ok(dict_symmetric_values(&a.value, &b.value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComponentSimilarity {
    pub overall: f64,
    pub per_field: f64,
    pub dict_symmetric: f64,
    pub field_details: Vec<FieldMatch>,
}

impl ComponentSimilarity {
    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Overall => self.overall,
            Metric::PerField => self.per_field,
            Metric::DictSymmetric => self.dict_symmetric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub task: ComponentSimilarity,
    pub method: ComponentSimilarity,
    pub knowledge: ComponentSimilarity,
}

impl SimilarityReport {
    pub fn component(&self, kind: ComponentKind) -> &ComponentSimilarity {
        match kind {
            ComponentKind::Task => &self.task,
            ComponentKind::Method => &self.method,
            ComponentKind::Knowledge => &self.knowledge,
        }
    }

    /// All nine scores, component-major.
    pub fn scores(&self) -> Vec<f64> {
        ComponentKind::ALL
            .iter()
            .flat_map(|k| Metric::ALL.iter().map(move |m| self.component(*k).metric(*m)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    Overall,
    PerField,
    DictSymmetric,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Self::Overall, Self::PerField, Self::DictSymmetric];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Overall => "overall",
            Self::PerField => "perField",
            Self::DictSymmetric => "dictSymmetric",
        }
    }
}

pub fn compare_models_with(embedder: &dyn Embedder, a: &TmkModel, b: &TmkModel) -> SimilarityReport {
    let component = |kind| {
        let (ca, cb) = (Component::of(a, kind), Component::of(b, kind));
        let overall = overall_similarity_with(embedder, &ca, &cb).expect("same kind");
        let (per_field, field_details) =
            per_field_score_with(embedder, &flatten_value(&ca.value), &flatten_value(&cb.value));
        ComponentSimilarity {
            overall,
            per_field,
            dict_symmetric: dict_symmetric_values_with(embedder, &ca.value, &cb.value),
            field_details,
        }
    };
    SimilarityReport {
        task: component(ComponentKind::Task),
        method: component(ComponentKind::Method),
        knowledge: component(ComponentKind::Knowledge),
    }
}

pub fn compare_models(a: &TmkModel, b: &TmkModel) -> SimilarityReport {
    compare_models_with(&TfIdf, a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub component: String,
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusAggregate {
    pub rows: Vec<AggregateRow>,
}

/// Mean and population SD of `values`; both 0 for an empty slice.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate(reports: &[SimilarityReport]) -> CorpusAggregate {
    let mut rows = Vec::new();
    for kind in ComponentKind::ALL {
        for metric in Metric::ALL {
            let values: Vec<f64> = reports.iter().map(|r| r.component(kind).metric(metric)).collect();
            let (mean, sd) = mean_sd(&values);
            rows.push(AggregateRow {
                component: kind.title().to_string(),
                metric: metric.as_str().to_string(),
                mean,
                sd,
                n: values.len(),
            });
        }
    }
    CorpusAggregate { rows }
}

impl CorpusAggregate {
    /// `component,metric,mean,sd,n` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("component,metric,mean,sd,n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                r.component, r.metric, r.mean, r.sd, r.n
            ));
        }
        out
    }
}
