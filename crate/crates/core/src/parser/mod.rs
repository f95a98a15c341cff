//! Edge-factored log-linear dependency parser.

mod cle;
mod features;
mod table;

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use cle::{decode_cle, decode_cle_with};
pub use features::{distance_bin, extract_arc_features, root_indicator, signed_distance_indicator, ArcFeaturizer, FeatureVector};
pub use table::{tree_score, ArcScoreTable, ParseTree, RootMode, PROB_FLOOR};

use crate::seed::{mix64, rng, unit_interval};
use crate::treebank::Sentence;
use crate::{Error, Result};

const DUMP_FORMAT: &str = "dppal-parser-weights";
const DUMP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// log2 of the arc feature space.
    pub hash_bits: u32,
    /// log2 of each relation label's feature space.
    pub rel_hash_bits: u32,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Feature dropout probability for committee scoring.
    pub p_drop: f64,
    pub root_mode: RootMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { hash_bits: 20, rel_hash_bits: 16, learning_rate: 0.1, epochs: 30, p_drop: 0.33, root_mode: RootMode::Multi }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=28).contains(&self.hash_bits) || !(1..=28).contains(&self.rel_hash_bits) {
            return Err(Error::Config("hash bits must lie in 1..=28".into()));
        }
        if self.rel_hash_bits > self.hash_bits {
            return Err(Error::Config("rel_hash_bits cannot exceed hash_bits".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::Config("p_drop must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Arc scorer plus relation labeler.
#[derive(Clone, Debug, PartialEq)]
pub struct ParserModel {
    hyper: Hyperparams,
    arc_weights: Vec<f64>,
    labels: Vec<String>,
    rel_weights: Vec<Vec<f64>>,
}

impl ParserModel {
    /// Zero-initialised model with an empty label inventory.
    pub fn new(hyper: Hyperparams) -> Result<Self> {
        hyper.validate()?;
        let dim = 1usize << hyper.hash_bits;
        Ok(ParserModel { hyper, arc_weights: vec![0.0; dim], labels: Vec::new(), rel_weights: Vec::new() })
    }

    /// Zero-initialised model over a fixed label inventory.
    pub fn with_labels<S: AsRef<str>>(hyper: Hyperparams, labels: &[S]) -> Result<Self> {
        let mut model = Self::new(hyper)?;
        model.add_labels(labels.iter().map(|l| l.as_ref()));
        Ok(model)
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn arc_weights(&self) -> &[f64] {
        &self.arc_weights
    }

    pub fn dim(&self) -> usize {
        self.arc_weights.len()
    }

    fn add_labels<'a>(&mut self, labels: impl Iterator<Item = &'a str>) {
        let rel_dim = 1usize << self.hyper.rel_hash_bits;
        for l in labels {
            if let Err(pos) = self.labels.binary_search_by(|x| x.as_str().cmp(l)) {
                self.labels.insert(pos, l.to_string());
                self.rel_weights.insert(pos, vec![0.0; rel_dim]);
            }
        }
    }

    fn rel_mask(&self) -> u32 {
        ((1u64 << self.hyper.rel_hash_bits) - 1) as u32
    }

    fn rel_logits(&self, feats: &[u32]) -> Vec<f64> {
        let mask = self.rel_mask();
        self.rel_weights.iter().map(|w| feats.iter().map(|&f| w[(f & mask) as usize]).sum()).collect()
    }

    /// Attachment scores and probabilities for one sentence. With a dropout
    /// seed, each feature id is zeroed independently with probability
    /// `p_drop`.
    pub fn score_sentence(&self, sentence: &Sentence, dropout: Option<u64>) -> Result<ArcScoreTable> {
        let n = sentence.len();
        let fz = ArcFeaturizer::new(sentence, self.hyper.hash_bits);
        let mut buf = Vec::with_capacity(20);
        let p_drop = self.hyper.p_drop;
        ArcScoreTable::from_fn(n, |h, m| {
            buf.clear();
            fz.arc_into(h, m, &mut buf);
            match dropout {
                Some(seed) if p_drop > 0.0 => buf
                    .iter()
                    .filter(|&&f| unit_interval(mix64(seed ^ mix64(f as u64))) >= p_drop)
                    .map(|&f| self.arc_weights[f as usize])
                    .sum(),
                _ => buf.iter().map(|&f| self.arc_weights[f as usize]).sum(),
            }
        })
    }

    /// Independent per-arc relation labels; ties go to the lexicographically
    /// smallest label.
    pub fn label_relations(&self, sentence: &Sentence, heads: &[usize]) -> Result<Vec<String>> {
        if self.labels.is_empty() {
            return Err(Error::State("relation label inventory is empty".into()));
        }
        if heads.len() != sentence.len() {
            return Err(Error::arg("head array length differs from sentence length"));
        }
        crate::tree::check_heads(heads).map_err(|d| Error::arg(d.to_string()))?;
        let fz = ArcFeaturizer::new(sentence, self.hyper.hash_bits);
        let mut buf = Vec::with_capacity(20);
        Ok(heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                buf.clear();
                fz.arc_into(h, i + 1, &mut buf);
                let logits = self.rel_logits(&buf);
                let mut best = 0;
                for (k, &v) in logits.iter().enumerate() {
                    if v > logits[best] {
                        best = k;
                    }
                }
                self.labels[best].clone()
            })
            .collect())
    }

    /// Decode and label one sentence.
    pub fn parse(&self, sentence: &Sentence) -> Result<ParseTree> {
        let table = self.score_sentence(sentence, None)?;
        let heads = decode_cle_with(&table, self.hyper.root_mode);
        let rels = self.label_relations(sentence, &heads)?;
        ParseTree::new(heads, rels)
    }

    /// Train on the annotated tokens of `sentences` with per-token SGD.
    pub fn train(&mut self, sentences: &[Sentence], epochs: usize, seed: u64) -> Result<()> {
        self.fit(sentences, epochs, seed, false).map(|_| ())
    }

    /// Like [`train`](Self::train), returning the mean per-token loss over
    /// the annotated tokens after each epoch.
    pub fn train_with_losses(&mut self, sentences: &[Sentence], epochs: usize, seed: u64) -> Result<Vec<f64>> {
        self.fit(sentences, epochs, seed, true)
    }

    fn fit(&mut self, sentences: &[Sentence], epochs: usize, seed: u64, track: bool) -> Result<Vec<f64>> {
        let annotated: usize = sentences.iter().map(|s| s.tokens.iter().filter(|t| t.annotated).count()).sum();
        if annotated == 0 {
            return Err(Error::arg("training data has no annotated tokens"));
        }
        self.add_labels(sentences.iter().flat_map(|s| s.tokens.iter()).filter(|t| t.annotated).filter_map(|t| t.gold_rel.as_deref()));
        let mut order: Vec<usize> = (0..sentences.len()).filter(|&i| sentences[i].tokens.iter().any(|t| t.annotated)).collect();
        let mut rng = rng(seed);
        let mut losses = Vec::with_capacity(if track { epochs } else { 0 });
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                self.sgd_sentence(&sentences[i]);
            }
            if track {
                losses.push(self.loss(sentences) / annotated as f64);
            }
        }
        Ok(losses)
    }

    fn sgd_sentence(&mut self, sentence: &Sentence) {
        let n = sentence.len();
        let lr = self.hyper.learning_rate;
        let rel_mask = self.rel_mask();
        let fz = ArcFeaturizer::new(sentence, self.hyper.hash_bits);
        let mut feats: Vec<Vec<u32>> = vec![Vec::with_capacity(20); n + 1];
        let mut scores = vec![0.0; n + 1];
        for (i, tok) in sentence.tokens.iter().enumerate() {
            if !tok.annotated {
                continue;
            }
            let m = i + 1;
            let gold = tok.gold_head.expect("annotated token carries a gold head");
            for h in 0..=n {
                feats[h].clear();
                if h != m {
                    fz.arc_into(h, m, &mut feats[h]);
                    scores[h] = feats[h].iter().map(|&f| self.arc_weights[f as usize]).sum();
                }
            }
            let probs = softmax_excluding(&scores, m);
            for h in 0..=n {
                if h == m {
                    continue;
                }
                let g = probs[h] - if h == gold { 1.0 } else { 0.0 };
                if g != 0.0 {
                    for &f in &feats[h] {
                        self.arc_weights[f as usize] -= lr * g;
                    }
                }
            }

            let Some(rel) = tok.gold_rel.as_deref() else { continue };
            let target = self.labels.binary_search_by(|x| x.as_str().cmp(rel)).expect("label registered before fit");
            let logits = self.rel_logits(&feats[gold]);
            let probs = softmax_excluding(&logits, usize::MAX);
            for (k, w) in self.rel_weights.iter_mut().enumerate() {
                let g = probs[k] - if k == target { 1.0 } else { 0.0 };
                if g != 0.0 {
                    for &f in &feats[gold] {
                        w[(f & rel_mask) as usize] -= lr * g;
                    }
                }
            }
        }
    }

    /// Summed arc plus relation cross-entropy over annotated tokens.
    pub fn loss(&self, sentences: &[Sentence]) -> f64 {
        let mut total = 0.0;
        let mut buf = Vec::with_capacity(20);
        for s in sentences {
            if !s.tokens.iter().any(|t| t.annotated) {
                continue;
            }
            let table = match self.score_sentence(s, None) {
                Ok(t) => t,
                Err(_) => continue,
            };
            let fz = ArcFeaturizer::new(s, self.hyper.hash_bits);
            for (i, tok) in s.tokens.iter().enumerate() {
                if !tok.annotated {
                    continue;
                }
                let gold = tok.gold_head.expect("annotated token carries a gold head");
                total -= table.log_att(gold, i + 1);
                if let Some(rel) = tok.gold_rel.as_deref() {
                    if let Ok(k) = self.labels.binary_search_by(|x| x.as_str().cmp(rel)) {
                        buf.clear();
                        fz.arc_into(gold, i + 1, &mut buf);
                        let probs = softmax_excluding(&self.rel_logits(&buf), usize::MAX);
                        total -= probs[k].max(PROB_FLOOR).ln();
                    }
                }
            }
        }
        total
    }

    /// JSON dump: a header line followed by the non-zero weights.
    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        let dump = WeightDump {
            header: DumpHeader {
                format: DUMP_FORMAT.into(),
                version: DUMP_VERSION,
                hash_bits: self.hyper.hash_bits,
                rel_hash_bits: self.hyper.rel_hash_bits,
                hyperparams: self.hyper.clone(),
                labels: self.labels.clone(),
            },
            arc: sparse(&self.arc_weights),
            rel: self.rel_weights.iter().map(|w| sparse(w)).collect(),
        };
        serde_json::to_writer(&mut out, &dump)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let dump: WeightDump = serde_json::from_reader(input)?;
        let h = dump.header;
        if h.format != DUMP_FORMAT || h.version != DUMP_VERSION {
            return Err(Error::Config(format!("unsupported weight dump {} v{}", h.format, h.version)));
        }
        if h.hash_bits != h.hyperparams.hash_bits || h.rel_hash_bits != h.hyperparams.rel_hash_bits {
            return Err(Error::Config("weight dump header disagrees with its hyperparameters".into()));
        }
        if dump.rel.len() != h.labels.len() || !h.labels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("weight dump label inventory is malformed".into()));
        }
        let mut model = ParserModel::with_labels(h.hyperparams, &h.labels)?;
        dense_into(&dump.arc, &mut model.arc_weights)?;
        for (w, s) in model.rel_weights.iter_mut().zip(&dump.rel) {
            dense_into(s, w)?;
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    format: String,
    version: u32,
    hash_bits: u32,
    rel_hash_bits: u32,
    hyperparams: Hyperparams,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct WeightDump {
    header: DumpHeader,
    arc: Vec<(u32, f64)>,
    rel: Vec<Vec<(u32, f64)>>,
}

fn sparse(w: &[f64]) -> Vec<(u32, f64)> {
    w.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i as u32, v)).collect()
}

fn dense_into(entries: &[(u32, f64)], w: &mut [f64]) -> Result<()> {
    for &(i, v) in entries {
        let slot = w.get_mut(i as usize).ok_or_else(|| Error::Config(format!("weight index {i} out of range")))?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("weight {i} is not finite")));
        }
        *slot = v;
    }
    Ok(())
}

/// Softmax over `v`, with entry `skip` fixed at probability zero.
fn softmax_excluding(v: &[f64], skip: usize) -> Vec<f64> {
    let max = v.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &x)| x).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = v.iter().enumerate().map(|(i, &x)| if i == skip { 0.0 } else { (x - max).exp() }).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Token;

    fn small() -> Hyperparams {
        Hyperparams { hash_bits: 16, rel_hash_bits: 12, ..Hyperparams::default() }
    }

    fn annotated(mut s: Sentence) -> Sentence {
        s.tokens.iter_mut().for_each(|t| t.annotated = true);
        s
    }

    fn toy_corpus() -> Vec<Sentence> {
        let rows: [&[(&str, &str, usize, &str)]; 5] = [
            &[("the", "DET", 2, "det"), ("dog", "NOUN", 3, "nsubj"), ("barked", "VERB", 0, "root")],
            &[("a", "DET", 2, "det"), ("cat", "NOUN", 3, "nsubj"), ("slept", "VERB", 0, "root"), (".", "PUNCT", 3, "punct")],
            &[("dogs", "NOUN", 2, "nsubj"), ("chase", "VERB", 0, "root"), ("cats", "NOUN", 2, "obj")],
            &[("she", "PRON", 2, "nsubj"), ("saw", "VERB", 0, "root"), ("the", "DET", 4, "det"), ("bird", "NOUN", 2, "obj")],
            &[("run", "VERB", 0, "root"), ("!", "PUNCT", 1, "punct")],
        ];
        rows.iter()
            .enumerate()
            .map(|(k, r)| {
                let toks = r.iter().enumerate().map(|(i, &(f, u, h, l))| Token::new(i + 1, f, Some(u), Some(h), Some(l))).collect();
                annotated(Sentence::new(format!("t{k}"), toks))
            })
            .collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let model = ParserModel::new(small()).unwrap();
        let s = &toy_corpus()[0];
        let t = model.score_sentence(s, None).unwrap();
        for m in 1..=3 {
            for h in (0..=3).filter(|&h| h != m) {
                assert!((t.att(h, m) - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn columns_are_distributions_after_training() {
        let mut model = ParserModel::new(small()).unwrap();
        let data = toy_corpus();
        model.train(&data, 5, 1).unwrap();
        for s in &data {
            let t = model.score_sentence(s, Some(9)).unwrap();
            for m in 1..=s.len() {
                let col = t.column(m);
                assert!(col.iter().all(|&p| p >= 0.0));
                assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dropout_is_seeded_and_off_at_zero_rate() {
        let mut model = ParserModel::new(small()).unwrap();
        let data = toy_corpus();
        model.train(&data, 3, 2).unwrap();
        let s = &data[3];
        assert_eq!(model.score_sentence(s, Some(4)).unwrap(), model.score_sentence(s, Some(4)).unwrap());
        assert_ne!(model.score_sentence(s, Some(4)).unwrap(), model.score_sentence(s, None).unwrap());
        let mut off = model.clone();
        off.hyper.p_drop = 0.0;
        assert_eq!(off.score_sentence(s, Some(4)).unwrap(), off.score_sentence(s, None).unwrap());
    }

    #[test]
    fn memorizes_a_two_token_sentence() {
        let s = annotated(Sentence::new(
            "x",
            vec![Token::new(1, "He", Some("PRON"), Some(2), Some("nsubj")), Token::new(2, "left", Some("VERB"), Some(0), Some("root"))],
        ));
        let mut model = ParserModel::new(small()).unwrap();
        model.train(std::slice::from_ref(&s), 50, 0).unwrap();
        let t = model.score_sentence(&s, None).unwrap();
        assert!(t.att(2, 1) > 0.9);
        assert!(t.att(0, 2) > 0.9);
    }

    #[test]
    fn zero_epochs_leave_weights_untouched() {
        let mut model = ParserModel::new(small()).unwrap();
        model.train(&toy_corpus(), 0, 0).unwrap();
        assert!(model.arc_weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_corpus();
        let mut a = ParserModel::new(small()).unwrap();
        let mut b = ParserModel::new(small()).unwrap();
        a.train(&data, 4, 11).unwrap();
        b.train(&data, 4, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unannotated_data_is_rejected() {
        let mut data = toy_corpus();
        data.iter_mut().flat_map(|s| s.tokens.iter_mut()).for_each(|t| t.annotated = false);
        let mut model = ParserModel::new(small()).unwrap();
        assert!(matches!(model.train(&data, 1, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn loss_is_non_increasing() {
        let mut model = ParserModel::new(small()).unwrap();
        let losses = model.train_with_losses(&toy_corpus(), 30, 5).unwrap();
        for w in losses[2..].windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "{losses:?}");
        }
    }

    #[test]
    fn root_children_are_labeled_root() {
        let data = toy_corpus();
        let mut model = ParserModel::new(small()).unwrap();
        model.train(&data, 20, 3).unwrap();
        let probe = Sentence::new(
            "p",
            vec![
                Token::new(1, "the", Some("DET"), None, None),
                Token::new(2, "cat", Some("NOUN"), None, None),
                Token::new(3, "chase", Some("VERB"), None, None),
            ],
        );
        let rels = model.label_relations(&probe, &[2, 3, 0]).unwrap();
        assert_eq!(rels[2], "root");
    }

    #[test]
    fn label_tie_break_and_inventory() {
        let s = &toy_corpus()[0];
        let model = ParserModel::with_labels(small(), &["obj", "det", "root"]).unwrap();
        assert_eq!(model.label_relations(s, &[2, 3, 0]).unwrap(), vec!["det"; 3]);
        let one = ParserModel::with_labels(small(), &["dep"]).unwrap();
        assert_eq!(one.label_relations(s, &[2, 3, 0]).unwrap(), vec!["dep"; 3]);
        let none = ParserModel::new(small()).unwrap();
        assert!(matches!(none.label_relations(s, &[2, 3, 0]), Err(Error::State(_))));
    }

    #[test]
    fn json_dump_round_trips() {
        let mut model = ParserModel::new(small()).unwrap();
        model.train(&toy_corpus(), 2, 8).unwrap();
        let mut buf = Vec::new();
        model.write_json(&mut buf).unwrap();
        let back = ParserModel::read_json(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }
}
