//! Sentence- and token-level quality measures.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::parser::{decode_cle_with, ParserModel};
use crate::seed::{derive_seed, rng};
use crate::structured::MarginalTable;
use crate::treebank::Sentence;
use crate::{Error, Result};

/// Floor applied to quality values before kernel construction.
pub const QUALITY_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Amp,
    Bald,
    Id,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Amp, Strategy::Bald, Strategy::Id];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Amp => "amp",
            Strategy::Bald => "bald",
            Strategy::Id => "id",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "amp" => Ok(Strategy::Amp),
            "bald" => Ok(Strategy::Bald),
            "id" => Ok(Strategy::Id),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub sentence_id: String,
    pub strategy: Strategy,
    pub sentence_q: f64,
    pub token_q: Vec<f64>,
}

/// One minus the mean marginal of the decoded arcs.
pub fn amp(sentence_id: &str, marginals: &MarginalTable, decoded: &[usize]) -> Result<QualityScore> {
    let n = marginals.n();
    if decoded.len() != n {
        return Err(Error::arg(format!("decoded tree has {} tokens, marginals have {n}", decoded.len())));
    }
    crate::tree::check_heads(decoded).map_err(|d| Error::arg(d.to_string()))?;
    let token_q: Vec<f64> = decoded.iter().enumerate().map(|(i, &h)| (1.0 - marginals.get(h, i + 1)).clamp(0.0, 1.0)).collect();
    let sentence_q = (token_q.iter().sum::<f64>() / n as f64).clamp(0.0, 1.0);
    Ok(QualityScore { sentence_id: sentence_id.to_string(), strategy: Strategy::Amp, sentence_q, token_q })
}

/// Per-token disagreement `1 - count(mode) / K` of a committee's head
/// predictions. Ties in the mode go to the smaller head.
pub fn committee_disagreement(predictions: &[Vec<usize>]) -> Result<Vec<f64>> {
    let k = predictions.len();
    if k == 0 {
        return Err(Error::arg("committee must have at least one member"));
    }
    let n = predictions[0].len();
    if predictions.iter().any(|p| p.len() != n) {
        return Err(Error::arg("committee predictions differ in length"));
    }
    if predictions.iter().flatten().any(|&h| h > n) {
        return Err(Error::arg("committee prediction has a head out of range"));
    }
    let mut counts = vec![0usize; n + 1];
    Ok((0..n)
        .map(|m| {
            counts.iter_mut().for_each(|c| *c = 0);
            for p in predictions {
                counts[p[m]] += 1;
            }
            let mode_count = counts.iter().max().copied().unwrap_or(0);
            1.0 - mode_count as f64 / k as f64
        })
        .collect())
}

/// Head of the committee mode for each token (smallest head on ties).
pub fn committee_mode(predictions: &[Vec<usize>]) -> Vec<usize> {
    let n = predictions.first().map_or(0, |p| p.len());
    (0..n)
        .map(|m| {
            let mut counts = vec![0usize; n + 1];
            for p in predictions {
                counts[p[m]] += 1;
            }
            let mut best = 0;
            for (h, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = h;
                }
            }
            best
        })
        .collect()
}

/// Committee disagreement over `k` dropout-perturbed decodes.
pub fn bald(model: &ParserModel, sentence: &Sentence, k: usize, seed: u64) -> Result<QualityScore> {
    if k == 0 {
        return Err(Error::arg("committee size must be at least 1"));
    }
    let mode = model.hyper().root_mode;
    let mut predictions = Vec::with_capacity(k);
    for member in 0..k {
        let table = model.score_sentence(sentence, Some(derive_seed(seed, member as u64, "bald")))?;
        predictions.push(decode_cle_with(&table, mode));
    }
    let token_q = committee_disagreement(&predictions)?;
    let sentence_q = token_q.iter().sum::<f64>() / token_q.len() as f64;
    Ok(QualityScore { sentence_id: sentence.id.clone(), strategy: Strategy::Bald, sentence_q, token_q })
}

/// AMP scaled by each sentence's mean cosine similarity to the pool
/// (self included). `features` are unit vectors aligned with `amp_scores`.
pub fn information_density(amp_scores: &[QualityScore], features: &[Vec<f64>]) -> Result<Vec<QualityScore>> {
    if amp_scores.is_empty() {
        return Err(Error::arg("information density needs a non-empty pool"));
    }
    if amp_scores.len() != features.len() {
        return Err(Error::arg("one feature vector is needed per scored sentence"));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::arg("feature vectors differ in dimension"));
    }
    let n = features.len() as f64;
    let mut centroid = vec![0.0; d];
    for f in features {
        for (c, v) in centroid.iter_mut().zip(f) {
            *c += v / n;
        }
    }
    Ok(amp_scores
        .iter()
        .zip(features)
        .map(|(s, f)| {
            let density = f.iter().zip(&centroid).map(|(a, b)| a * b).sum::<f64>().clamp(0.0, 1.0);
            QualityScore {
                sentence_id: s.sentence_id.clone(),
                strategy: Strategy::Id,
                sentence_q: s.sentence_q * density,
                token_q: s.token_q.iter().map(|q| q * density).collect(),
            }
        })
        .collect())
}

/// Independent uniform scores for every sentence and token.
pub fn random_quality(pool: &[&Sentence], seed: u64) -> Vec<QualityScore> {
    let mut r = rng(seed);
    pool.iter()
        .map(|s| QualityScore {
            sentence_id: s.id.clone(),
            strategy: Strategy::Random,
            sentence_q: r.gen::<f64>(),
            token_q: (0..s.len()).map(|_| r.gen::<f64>()).collect(),
        })
        .collect()
}

/// CSV dump: `sentence_id,strategy,sentence_q,token_q` with token values
/// joined by spaces.
pub fn write_quality_csv<W: Write>(scores: &[QualityScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sentence_id", "strategy", "sentence_q", "token_q"])?;
    for s in scores {
        let tokens = s.token_q.iter().map(|q| format!("{q:.6}")).collect::<Vec<_>>().join(" ");
        w.write_record([s.sentence_id.as_str(), s.strategy.as_str(), &format!("{:.6}", s.sentence_q), &tokens])?;
    }
    w.flush()?;
    Ok(())
}
