//! Round-based active-learning simulation.
//!
//! Each round scores the unlabeled pool with the current model, picks
//! sentences (stage 1) and then tokens within them (stage 2), reveals the
//! gold arcs of the chosen tokens, retrains from scratch and evaluates.

mod config;
pub mod output;

use std::collections::HashMap;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{Profile, RunConfig};

use crate::diversity::{
    averaged_features, averaged_features_with, fit_subgraph_vocab, ibad_ibmd, subgraph_counts, token_subgraph_features, DiversityFeature,
    FeatureKind, SubgraphVocabulary,
};
use crate::dpp::{greedy_map, pretrim, SelectionKernel, PRETRIM_LIMIT};
use crate::parser::{decode_cle_with, ParseTree, ParserModel};
use crate::quality::{amp, bald, information_density, random_quality, QualityScore, Strategy};
use crate::seed::derive_seed;
use crate::structured::arc_marginals_with;
use crate::treebank::{duplicate_corpus, read_conllu, seed_pool, Corpus, PoolState};
use crate::{synthetic, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 0 is the seed-set model; round `r` follows the `r`-th selection.
    pub round: usize,
    pub las: f64,
    pub uas: f64,
    pub tokens_annotated: usize,
    pub new_tokens: usize,
    /// Intra-batch distances of the stage-1 sentences, per feature kind.
    pub ibad_averaged: Option<f64>,
    pub ibmd_averaged: Option<f64>,
    pub ibad_subgraph: Option<f64>,
    pub ibmd_subgraph: Option<f64>,
    /// The unlabeled pool could not fill the budgets.
    pub exhausted: bool,
    /// A greedy MAP selection ran out of positive gains.
    pub dpp_fallback: bool,
    pub wall_ms: u64,
}

impl RoundRecord {
    pub fn ibad(&self, kind: FeatureKind) -> Option<f64> {
        match kind {
            FeatureKind::Averaged => self.ibad_averaged,
            FeatureKind::Subgraph => self.ibad_subgraph,
        }
    }

    pub fn ibmd(&self, kind: FeatureKind) -> Option<f64> {
        match kind {
            FeatureKind::Averaged => self.ibmd_averaged,
            FeatureKind::Subgraph => self.ibmd_subgraph,
        }
    }
}

/// What one round picked, by sentence id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSelection {
    pub repeat: usize,
    pub round: usize,
    pub sentences: Vec<String>,
    pub tokens: Vec<(String, usize)>,
}

/// Train and held-out corpora of a run.
#[derive(Clone, Debug)]
pub struct Data {
    pub train: Corpus,
    pub test: Corpus,
    pub synthetic: bool,
}

/// Read (or generate) the corpora named by `config` and apply duplication.
pub fn load_data(config: &RunConfig) -> Result<Data> {
    let (base, test, synthetic) = match &config.corpus_path {
        Some(path) => {
            let corpus = read_conllu(path)?;
            let (train, test) = match &config.test_path {
                Some(t) => (corpus, read_conllu(t)?),
                None => corpus.split_tail(config.test_fraction)?,
            };
            (train, test, false)
        }
        None => {
            let (train, test) = synthetic::generate_split(config.synthetic_train, config.synthetic_test, config.seed)?;
            (train, test, true)
        }
    };
    base.require_gold()?;
    test.require_gold()?;
    let train = if config.fold > 1 { duplicate_corpus(&base, config.fold)? } else { base };
    Ok(Data { train, test, synthetic })
}

/// `(UAS, LAS)` in percent over every test token.
pub fn evaluate(model: &ParserModel, test: &Corpus) -> Result<(f64, f64)> {
    let total = test.token_count();
    if total == 0 {
        return Err(Error::arg("cannot evaluate on an empty test set"));
    }
    let counts: Vec<(usize, usize)> = test
        .sentences
        .par_iter()
        .map(|s| {
            let tree = model.parse(s)?;
            Ok(attachment_counts(s, &tree))
        })
        .collect::<Result<_>>()?;
    let (head, both) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((100.0 * head as f64 / total as f64, 100.0 * both as f64 / total as f64))
}

/// Correct heads, and correct heads with correct labels.
pub fn attachment_counts(sentence: &crate::treebank::Sentence, tree: &ParseTree) -> (usize, usize) {
    let mut head = 0;
    let mut both = 0;
    for (t, (h, r)) in sentence.tokens.iter().zip(tree.heads.iter().zip(&tree.rels)) {
        if t.gold_head == Some(*h) {
            head += 1;
            if t.gold_rel.as_deref() == Some(r.as_str()) {
                both += 1;
            }
        }
    }
    (head, both)
}

/// Per-sentence model outputs used by both selection stages.
struct Scored {
    pos: usize,
    quality: QualityScore,
    tree: ParseTree,
    averaged: Vec<f64>,
}

/// Read-only inputs shared by every round of one repeat.
pub struct RunContext<'a> {
    pub config: &'a RunConfig,
    pub train: &'a Corpus,
    pub test: &'a Corpus,
    pub repeat: usize,
}

impl RunContext<'_> {
    pub fn repeat_seed(&self) -> u64 {
        derive_seed(self.config.seed, self.repeat as u64, "repeat")
    }

    fn round_seed(&self, round: usize, tag: &str) -> u64 {
        derive_seed(self.repeat_seed(), round as u64, tag)
    }

    /// Seed pool of this repeat.
    pub fn initial_state(&self) -> Result<PoolState> {
        seed_pool(self.train, self.config.n_seed_sentences, self.round_seed(0, "seed-pool"))
    }

    /// Model trained from scratch on the annotated part of `state`.
    pub fn train_model(&self, state: &PoolState) -> Result<ParserModel> {
        let mut model = ParserModel::new(self.config.parser_hyper())?;
        let data = state.annotated_sentences(self.train);
        model.train(&data, self.config.parser.epochs, self.round_seed(state.round(), "train"))?;
        Ok(model)
    }

    fn score_pool(&self, model: &ParserModel, pool: &[usize], round: usize) -> Result<Vec<Scored>> {
        let cfg = self.config;
        let mode = model.hyper().root_mode;
        let projection = cfg.projection();
        let bald_seed = self.round_seed(round, "bald");
        let random_seed = self.round_seed(round, "random");
        let mut scored: Vec<Scored> = pool
            .par_iter()
            .map(|&pos| {
                let s = &self.train.sentences[pos];
                let table = model.score_sentence(s, None)?;
                let heads = decode_cle_with(&table, mode);
                let rels = model.label_relations(s, &heads)?;
                let quality = match cfg.strategy {
                    Strategy::Amp | Strategy::Id => amp(&s.id, &arc_marginals_with(&table, mode)?, &heads)?,
                    Strategy::Bald => bald(model, s, cfg.k_bald, derive_seed(bald_seed, pos as u64, "sentence"))?,
                    Strategy::Random => random_quality(&[s], derive_seed(random_seed, pos as u64, "sentence")).remove(0),
                };
                let averaged = averaged_features(s, &projection).vector;
                Ok(Scored { pos, quality, tree: ParseTree::new(heads, rels)?, averaged })
            })
            .collect::<Result<_>>()?;
        if cfg.strategy == Strategy::Id {
            let amp_scores: Vec<QualityScore> = scored.iter().map(|s| s.quality.clone()).collect();
            let feats: Vec<Vec<f64>> = scored.iter().map(|s| s.averaged.clone()).collect();
            for (s, q) in scored.iter_mut().zip(information_density(&amp_scores, &feats)?) {
                s.quality = q;
            }
        }
        Ok(scored)
    }

    /// Quality scores and sentence features of the unlabeled pool under
    /// `model`, as the next round would see them.
    pub fn inspect_pool(&self, state: &PoolState, model: &ParserModel) -> Result<PoolSnapshot> {
        let pool = state.unlabeled_sentences();
        if pool.is_empty() {
            return Err(Error::State("the unlabeled pool is empty".into()));
        }
        let scored = self.score_pool(model, &pool, state.round() + 1)?;
        let trees: Vec<ParseTree> = scored.iter().map(|s| s.tree.clone()).collect();
        let vocab = fit_subgraph_vocab(&trees)?;
        let mut averaged = Vec::with_capacity(scored.len());
        let mut subgraph = Vec::with_capacity(scored.len());
        let mut quality = Vec::with_capacity(scored.len());
        for s in scored {
            let id = &self.train.sentences[s.pos].id;
            subgraph.push(subgraph_counts(id, &s.tree, &vocab)?);
            averaged.push(DiversityFeature { owner: id.clone(), token: None, kind: FeatureKind::Averaged, vector: s.averaged });
            quality.push(s.quality);
        }
        Ok(PoolSnapshot { quality, averaged, subgraph })
    }

    /// One selection round on top of `state` using `model` (trained on the
    /// annotations of `state`).
    pub fn run_round(&self, state: &PoolState, model: &ParserModel) -> Result<RoundOutcome> {
        let start = Instant::now();
        let cfg = self.config;
        let round = state.round() + 1;
        let pool = state.unlabeled_sentences();
        if pool.is_empty() {
            return Err(Error::State("the unlabeled pool is empty".into()));
        }
        let scored = self.score_pool(model, &pool, round)?;
        let trees: Vec<ParseTree> = scored.iter().map(|s| s.tree.clone()).collect();
        let vocab = fit_subgraph_vocab(&trees)?;
        let subgraph: Vec<Vec<f64>> = scored
            .iter()
            .map(|s| subgraph_counts(&self.train.sentences[s.pos].id, &s.tree, &vocab).map(|f| f.vector))
            .collect::<Result<_>>()?;

        // stage 1: sentences, sized by their unannotated tokens
        let sizes: Vec<usize> = scored.iter().map(|s| state.mask(s.pos).iter().filter(|&&a| !a).count()).collect();
        let q: Vec<f64> = scored.iter().map(|s| s.quality.sentence_q).collect();
        let avg: Vec<Vec<f64>> = scored.iter().map(|s| s.averaged.clone()).collect();
        let phi = match cfg.diversity_kind {
            FeatureKind::Averaged => &avg,
            FeatureKind::Subgraph => &subgraph,
        };
        let (stage1, fallback1) = select(&q, phi, &sizes, cfg.sentence_stage_token_budget, cfg.use_dpp)?;

        // stage 2: unannotated tokens of the stage-1 sentences
        let mut cands: Vec<(usize, usize)> = Vec::new();
        let mut token_q = Vec::new();
        let mut token_phi = Vec::new();
        for &k in &stage1 {
            let s = &scored[k];
            let sentence = &self.train.sentences[s.pos];
            let feats = match cfg.diversity_kind {
                FeatureKind::Averaged => averaged_features_with(sentence, &cfg.projection()).1,
                FeatureKind::Subgraph => token_subgraph_features(&sentence.id, &s.tree, &vocab)?,
            };
            for (i, f) in feats.into_iter().enumerate() {
                if !state.is_annotated(s.pos, i + 1) {
                    cands.push((s.pos, i + 1));
                    token_q.push(s.quality.token_q[i]);
                    token_phi.push(f.vector);
                }
            }
        }
        let unit = vec![1; cands.len()];
        let (stage2, fallback2) = select(&token_q, &token_phi, &unit, cfg.token_budget_per_round, cfg.use_dpp)?;
        let picks: Vec<(usize, usize)> = stage2.iter().map(|&k| cands[k]).collect();
        let exhausted = picks.len() < cfg.token_budget_per_round;

        let next = state.annotate(&picks)?;
        let next_model = self.train_model(&next)?;
        let (uas, las) = evaluate(&next_model, self.test)?;

        let batch = |vs: &[Vec<f64>]| -> Option<(f64, f64)> {
            let b: Vec<&[f64]> = stage1.iter().map(|&k| vs[k].as_slice()).collect();
            ibad_ibmd(&b).ok()
        };
        let da = batch(&avg);
        let ds = batch(&subgraph);

        let record = RoundRecord {
            round,
            las,
            uas,
            tokens_annotated: next.labeled_count(),
            new_tokens: picks.len(),
            ibad_averaged: da.map(|d| d.0),
            ibmd_averaged: da.map(|d| d.1),
            ibad_subgraph: ds.map(|d| d.0),
            ibmd_subgraph: ds.map(|d| d.1),
            exhausted,
            dpp_fallback: fallback1 || fallback2,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        let selection = RoundSelection {
            repeat: self.repeat,
            round,
            sentences: stage1.iter().map(|&k| self.train.sentences[scored[k].pos].id.clone()).collect(),
            tokens: picks.iter().map(|&(s, m)| (self.train.sentences[s].id.clone(), m)).collect(),
        };
        debug!(
            "repeat {} round {round}: {} sentences, {} tokens, LAS {las:.2}, UAS {uas:.2}",
            self.repeat,
            selection.sentences.len(),
            picks.len()
        );
        Ok(RoundOutcome { state: next, model: next_model, record, selection, vocab })
    }

    /// Seed, then run every configured round (stopping early when the pool
    /// runs dry). `on_round` sees each outcome as it is produced.
    pub fn run(&self, mut on_round: impl FnMut(&RoundOutcome) -> Result<()>) -> Result<RunTrace> {
        let state = self.initial_state()?;
        self.resume(state, &mut on_round)
    }

    /// Continue from an existing pool state.
    pub fn resume(&self, mut state: PoolState, mut on_round: impl FnMut(&RoundOutcome) -> Result<()>) -> Result<RunTrace> {
        let start = Instant::now();
        let mut model = self.train_model(&state)?;
        let mut records = Vec::new();
        let mut selections = Vec::new();
        if state.round() == 0 {
            let (uas, las) = evaluate(&model, self.test)?;
            records.push(RoundRecord {
                round: 0,
                las,
                uas,
                tokens_annotated: state.labeled_count(),
                new_tokens: 0,
                ibad_averaged: None,
                ibmd_averaged: None,
                ibad_subgraph: None,
                ibmd_subgraph: None,
                exhausted: false,
                dpp_fallback: false,
                wall_ms: start.elapsed().as_millis() as u64,
            });
        }
        while state.round() < self.config.rounds && state.unlabeled_count() > 0 {
            let out = self.run_round(&state, &model)?;
            on_round(&out)?;
            records.push(out.record);
            selections.push(out.selection);
            state = out.state;
            model = out.model;
        }
        info!("{} repeat {} finished after {} rounds", self.config.arm(), self.repeat, state.round());
        Ok(RunTrace { repeat: self.repeat, records, selections, final_state: state })
    }
}

pub struct PoolSnapshot {
    pub quality: Vec<QualityScore>,
    pub averaged: Vec<DiversityFeature>,
    pub subgraph: Vec<DiversityFeature>,
}

pub struct RoundOutcome {
    pub state: PoolState,
    pub model: ParserModel,
    pub record: RoundRecord,
    pub selection: RoundSelection,
    pub vocab: SubgraphVocabulary,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub repeat: usize,
    pub records: Vec<RoundRecord>,
    pub selections: Vec<RoundSelection>,
    pub final_state: PoolState,
}

/// Pick candidates under a size budget. Without DPP: descending quality
/// (ties to the smaller index) while the selected size is below budget.
/// With DPP: greedy MAP over the quality-diversity kernel.
fn select(q: &[f64], phi: &[Vec<f64>], sizes: &[usize], budget: usize, use_dpp: bool) -> Result<(Vec<usize>, bool)> {
    if !use_dpp {
        let mut order: Vec<usize> = (0..q.len()).collect();
        order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
        let mut total = 0;
        let mut out = Vec::new();
        for i in order {
            if total >= budget {
                break;
            }
            total += sizes[i];
            out.push(i);
        }
        return Ok((out, false));
    }
    let keep = pretrim(q, PRETRIM_LIMIT);
    let kernel = SelectionKernel::new(
        keep.iter().map(|&i| q[i]).collect(),
        keep.iter().map(|&i| phi[i].clone()).collect(),
        keep.iter().map(|&i| sizes[i]).collect(),
    )?;
    let sel = greedy_map(&kernel, budget);
    for step in &sel.steps {
        debug!(
            "dpp pick {} log-gain {:.4} cumulative size {}{}",
            keep[step.item],
            step.log_gain,
            step.cumulative_size,
            if step.fallback { " (quality fallback)" } else { "" }
        );
    }
    Ok((sel.steps.iter().map(|s| keep[s.item]).collect(), sel.used_fallback()))
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregated learning curve row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub round: usize,
    pub strategy: Strategy,
    pub use_dpp: bool,
    pub mean_las: f64,
    pub std_las: f64,
    pub mean_uas: f64,
    pub std_uas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiversityRow {
    pub round: usize,
    pub strategy: Strategy,
    pub use_dpp: bool,
    pub kind: FeatureKind,
    pub mean_ibad: f64,
    pub std_ibad: f64,
    pub mean_ibmd: f64,
    pub std_ibmd: f64,
}

pub struct ExperimentReport {
    pub config: RunConfig,
    pub synthetic_corpus: bool,
    pub runs: Vec<RunTrace>,
}

impl ExperimentReport {
    fn rounds(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.runs.iter().flat_map(|t| t.records.iter().map(|r| r.round)).collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    fn at(&self, round: usize) -> Vec<&RoundRecord> {
        self.runs.iter().filter_map(|t| t.records.iter().find(|r| r.round == round)).collect()
    }

    pub fn curve(&self) -> Vec<CurveRow> {
        self.rounds()
            .into_iter()
            .map(|round| {
                let recs = self.at(round);
                let (mean_las, std_las) = mean_std(&recs.iter().map(|r| r.las).collect::<Vec<_>>());
                let (mean_uas, std_uas) = mean_std(&recs.iter().map(|r| r.uas).collect::<Vec<_>>());
                CurveRow { round, strategy: self.config.strategy, use_dpp: self.config.use_dpp, mean_las, std_las, mean_uas, std_uas }
            })
            .collect()
    }

    pub fn diversity(&self) -> Vec<DiversityRow> {
        let mut rows = Vec::new();
        for round in self.rounds() {
            let recs = self.at(round);
            for kind in FeatureKind::ALL {
                let ibad: Vec<f64> = recs.iter().filter_map(|r| r.ibad(kind)).collect();
                let ibmd: Vec<f64> = recs.iter().filter_map(|r| r.ibmd(kind)).collect();
                if ibad.is_empty() {
                    continue;
                }
                let (mean_ibad, std_ibad) = mean_std(&ibad);
                let (mean_ibmd, std_ibmd) = mean_std(&ibmd);
                rows.push(DiversityRow {
                    round,
                    strategy: self.config.strategy,
                    use_dpp: self.config.use_dpp,
                    kind,
                    mean_ibad,
                    std_ibad,
                    mean_ibmd,
                    std_ibmd,
                });
            }
        }
        rows
    }

    pub fn selections(&self) -> impl Iterator<Item = &RoundSelection> {
        self.runs.iter().flat_map(|t| t.selections.iter())
    }
}

/// Run `n_repeats` independent repeats (in parallel) on prepared data.
pub fn run_experiment_on(config: &RunConfig, data: &Data, n_repeats: usize) -> Result<ExperimentReport> {
    config.validate()?;
    if n_repeats == 0 {
        return Err(Error::arg("n_repeats must be at least 1"));
    }
    let runs: Vec<RunTrace> = (0..n_repeats)
        .into_par_iter()
        .map(|repeat| RunContext { config, train: &data.train, test: &data.test, repeat }.run(|_| Ok(())))
        .collect::<Result<_>>()?;
    Ok(ExperimentReport { config: config.clone(), synthetic_corpus: data.synthetic, runs })
}

pub fn run_experiment(config: &RunConfig, n_repeats: usize) -> Result<ExperimentReport> {
    let data = load_data(config)?;
    run_experiment_on(config, &data, n_repeats)
}

/// Pairs of distinct stage-1 sentences in one round that share an origin.
pub fn origin_duplicate_pairs(train: &Corpus, selection: &RoundSelection) -> usize {
    let positions = train.position_map();
    let mut counts = HashMap::<&str, usize>::new();
    for id in &selection.sentences {
        if let Some(&p) = positions.get(id.as_str()) {
            let origin = train.sentences[p].origin.as_str();
            *counts.entry(origin).or_default() += 1;
        }
    }
    counts.values().map(|&c| c * (c.saturating_sub(1)) / 2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::{Sentence, Token};

    #[test]
    fn evaluation_counts() {
        let s =
            Sentence::new("s", (1..=10).map(|i| Token::new(i, "w", Some("X"), Some(if i == 1 { 0 } else { 1 }), Some("dep"))).collect());
        let mut heads = s.gold_heads().unwrap();
        let mut rels = vec!["dep".to_string(); 10];
        heads[9] = 2;
        rels[8] = "obj".into();
        let tree = ParseTree::new(heads, rels).unwrap();
        assert_eq!(attachment_counts(&s, &tree), (9, 8));
    }

    #[test]
    fn statistics() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn plain_selection_checks_budget_before_adding() {
        let q = [0.1, 0.9, 0.5, 0.9];
        let (sel, _) = select(&q, &[], &[5, 3, 4, 3], 5, false).unwrap();
        assert_eq!(sel, vec![1, 3]);
        let (all, _) = select(&q, &[], &[1, 1, 1, 1], 10, false).unwrap();
        assert_eq!(all, vec![1, 3, 2, 0]);
    }
}
