//! Unit-normalised diversity features and intra-batch distance metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::parser::{ArcFeaturizer, ParseTree};
use crate::seed::mix64;
use crate::treebank::Sentence;
use crate::{Error, Result};

/// Grandparent relation of tokens attached to the root.
pub const ROOT_SYMBOL: &str = "⊤";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Averaged,
    Subgraph,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Averaged, FeatureKind::Subgraph];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Averaged => "averaged",
            FeatureKind::Subgraph => "subgraph",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "averaged" => Ok(FeatureKind::Averaged),
            "subgraph" => Ok(FeatureKind::Subgraph),
            other => Err(Error::Config(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// Unit vector attached to a sentence or to one of its tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityFeature {
    pub owner: String,
    /// 1-based token position for token-level features.
    pub token: Option<usize>,
    pub kind: FeatureKind,
    pub vector: Vec<f64>,
}

/// Scale `v` to unit length; a zero vector becomes `e_1`.
pub fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        if let Some(first) = v.first_mut() {
            *first = 1.0;
        }
    }
    v
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Maps a token to a dense vector before averaging.
pub trait TokenEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, sentence: &Sentence, featurizer: &ArcFeaturizer, m: usize) -> Vec<f64>;
}

/// Signed random projection of a token's hashed indicators: every
/// indicator contributes a seeded `±1` pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub dim: usize,
    pub seed: u64,
}

impl Default for Projection {
    fn default() -> Self {
        Projection { dim: 64, seed: 0x5eed }
    }
}

impl TokenEncoder for Projection {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentence: &Sentence, featurizer: &ArcFeaturizer, m: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for ind in featurizer.token_indicators(sentence, m) {
            for (chunk, block) in v.chunks_mut(64).enumerate() {
                let bits = mix64(self.seed ^ mix64(ind ^ (chunk as u64).wrapping_mul(0xA24B_AED4_963E_E407)));
                for (k, x) in block.iter_mut().enumerate() {
                    *x += if bits >> k & 1 == 1 { 1.0 } else { -1.0 };
                }
            }
        }
        v
    }
}

/// Sentence feature (mean of token encodings, normalised) together with
/// the normalised token features.
pub fn averaged_features_with<E: TokenEncoder>(sentence: &Sentence, encoder: &E) -> (DiversityFeature, Vec<DiversityFeature>) {
    let fz = ArcFeaturizer::new(sentence, 20);
    let d = encoder.dim();
    let mut mean = vec![0.0; d];
    let mut tokens = Vec::with_capacity(sentence.len());
    for m in 1..=sentence.len() {
        let v = encoder.encode(sentence, &fz, m);
        for (a, b) in mean.iter_mut().zip(&v) {
            *a += b / sentence.len() as f64;
        }
        tokens.push(DiversityFeature { owner: sentence.id.clone(), token: Some(m), kind: FeatureKind::Averaged, vector: normalize(v) });
    }
    let sent = DiversityFeature { owner: sentence.id.clone(), token: None, kind: FeatureKind::Averaged, vector: normalize(mean) };
    (sent, tokens)
}

pub fn averaged_features(sentence: &Sentence, projection: &Projection) -> DiversityFeature {
    averaged_features_with(sentence, projection).0
}

pub fn token_averaged_features(sentence: &Sentence, projection: &Projection) -> Vec<DiversityFeature> {
    averaged_features_with(sentence, projection).1
}

pub type SubgraphKey = (String, String);

/// The `(grandparent relation, parent relation)` key of every token.
pub fn subgraph_keys(tree: &ParseTree) -> Vec<SubgraphKey> {
    tree.heads
        .iter()
        .zip(&tree.rels)
        .map(|(&h, rel)| {
            let r1 = if h == 0 { ROOT_SYMBOL.to_string() } else { tree.rels[h - 1].clone() };
            (r1, rel.clone())
        })
        .collect()
}

/// Subgraph key dimensions and document frequencies. The last dimension
/// collects keys never seen during fitting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubgraphVocabulary {
    index: BTreeMap<SubgraphKey, usize>,
    df: Vec<usize>,
    n_docs: usize,
}

impl SubgraphVocabulary {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn is_fitted(&self) -> bool {
        self.n_docs > 0
    }

    /// Feature dimension, including the out-of-vocabulary slot.
    pub fn dim(&self) -> usize {
        self.index.len() + 1
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn oov_index(&self) -> usize {
        self.index.len()
    }

    pub fn index_of(&self, key: &SubgraphKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn df(&self, key: &SubgraphKey) -> usize {
        self.index_of(key).map_or(0, |i| self.df[i])
    }

    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, key: &SubgraphKey) -> f64 {
        self.idf_at(self.index_of(key).unwrap_or(self.oov_index()))
    }

    fn idf_at(&self, dim: usize) -> f64 {
        let df = self.df.get(dim).copied().unwrap_or(0);
        ((1.0 + self.n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    fn dim_of(&self, key: &SubgraphKey) -> usize {
        self.index_of(key).unwrap_or(self.oov_index())
    }
}

pub fn fit_subgraph_vocab(pool: &[ParseTree]) -> Result<SubgraphVocabulary> {
    if pool.is_empty() {
        return Err(Error::arg("cannot fit a subgraph vocabulary on an empty pool"));
    }
    let mut df: BTreeMap<SubgraphKey, usize> = BTreeMap::new();
    for tree in pool {
        let mut keys = subgraph_keys(tree);
        keys.sort();
        keys.dedup();
        for k in keys {
            *df.entry(k).or_default() += 1;
        }
    }
    let mut index = BTreeMap::new();
    let mut counts = Vec::with_capacity(df.len());
    for (i, (k, c)) in df.into_iter().enumerate() {
        index.insert(k, i);
        counts.push(c);
    }
    Ok(SubgraphVocabulary { index, df: counts, n_docs: pool.len() })
}

/// tf-idf weighted subgraph counts of a predicted tree, normalised.
pub fn subgraph_counts(owner: &str, tree: &ParseTree, vocab: &SubgraphVocabulary) -> Result<DiversityFeature> {
    if !vocab.is_fitted() {
        return Err(Error::State("subgraph vocabulary has not been fitted".into()));
    }
    let mut v = vec![0.0; vocab.dim()];
    for key in subgraph_keys(tree) {
        v[vocab.dim_of(&key)] += 1.0;
    }
    for (i, x) in v.iter_mut().enumerate() {
        if *x != 0.0 {
            *x *= vocab.idf_at(i);
        }
    }
    Ok(DiversityFeature { owner: owner.to_string(), token: None, kind: FeatureKind::Subgraph, vector: normalize(v) })
}

/// Token-level subgraph features: the one-hot of each token's own key.
pub fn token_subgraph_features(owner: &str, tree: &ParseTree, vocab: &SubgraphVocabulary) -> Result<Vec<DiversityFeature>> {
    if !vocab.is_fitted() {
        return Err(Error::State("subgraph vocabulary has not been fitted".into()));
    }
    Ok(subgraph_keys(tree)
        .iter()
        .enumerate()
        .map(|(i, key)| {
            let mut v = vec![0.0; vocab.dim()];
            let d = vocab.dim_of(key);
            v[d] = vocab.idf_at(d);
            DiversityFeature { owner: owner.to_string(), token: Some(i + 1), kind: FeatureKind::Subgraph, vector: normalize(v) }
        })
        .collect())
}

/// Intra-batch average and minimal cosine distance.
pub fn ibad_ibmd(batch: &[&[f64]]) -> Result<(f64, f64)> {
    let n = batch.len();
    if n < 2 {
        return Err(Error::arg("intra-batch distances need at least two items"));
    }
    let mut total = 0.0;
    let mut min_sum = 0.0;
    for i in 0..n {
        let mut min = f64::INFINITY;
        for j in 0..n {
            if i != j {
                let d = 1.0 - cosine(batch[i], batch[j]);
                total += d;
                min = min.min(d);
            }
        }
        min_sum += min;
    }
    Ok((total / (n * (n - 1)) as f64, min_sum / n as f64))
}

/// One row per feature: owner, token, kind, then the vector entries.
pub fn write_features_csv<W: Write>(features: &[DiversityFeature], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    let d = features.iter().map(|f| f.vector.len()).max().unwrap_or(0);
    let mut header = vec!["owner".to_string(), "token".to_string(), "kind".to_string()];
    header.extend((0..d).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for f in features {
        let mut row = vec![f.owner.clone(), f.token.map_or(String::new(), |t| t.to_string()), f.kind.to_string()];
        row.extend(f.vector.iter().map(|x| format!("{x:.9}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
