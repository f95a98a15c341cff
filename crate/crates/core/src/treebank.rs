//! CoNLL-U corpora and the labeled/unlabeled pool bookkeeping.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::tree::{check_heads, TreeDefect};
use crate::{Error, Result};

const EMPTY: &str = "_";

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: Option<String>,
    pub xpos: String,
    pub feats: String,
    pub gold_head: Option<usize>,
    pub gold_rel: Option<String>,
    pub deps: String,
    pub misc: String,
    /// Head and relation have been revealed to the learner.
    pub annotated: bool,
}

impl Token {
    /// A token carrying only a form, POS tag and gold arc.
    pub fn new(index: usize, form: &str, upos: Option<&str>, head: Option<usize>, rel: Option<&str>) -> Self {
        Token {
            index,
            form: form.to_string(),
            lemma: EMPTY.to_string(),
            upos: upos.map(str::to_string),
            xpos: EMPTY.to_string(),
            feats: EMPTY.to_string(),
            gold_head: head,
            gold_rel: rel.map(str::to_string),
            deps: EMPTY.to_string(),
            misc: EMPTY.to_string(),
            annotated: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sentence {
    pub id: String,
    /// Identifier of the sentence this one was copied from; equal to `id`
    /// for sentences read from disk.
    pub origin: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        let id = id.into();
        Sentence { origin: id.clone(), id, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Gold head array, if every token has a gold head.
    pub fn gold_heads(&self) -> Option<Vec<usize>> {
        self.tokens.iter().map(|t| t.gold_head).collect()
    }

    /// Gold relation array, if every token has a gold relation.
    pub fn gold_rels(&self) -> Option<Vec<String>> {
        self.tokens.iter().map(|t| t.gold_rel.clone()).collect()
    }

    pub fn has_full_gold(&self) -> bool {
        self.tokens.iter().all(|t| t.gold_head.is_some() && t.gold_rel.is_some())
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        for t in &self.tokens {
            if let Some(h) = t.gold_head {
                if h > n || h == t.index {
                    return Err(Error::Validation { id: self.id.clone(), msg: format!("token {} has invalid head {h}", t.index) });
                }
            }
            if t.annotated && (t.gold_head.is_none() || t.gold_rel.is_none()) {
                return Err(Error::Validation { id: self.id.clone(), msg: format!("token {} is annotated without a gold arc", t.index) });
            }
        }
        if let Some(heads) = self.gold_heads() {
            check_heads(&heads).map_err(|d| Error::Validation {
                id: self.id.clone(),
                msg: match d {
                    TreeDefect::Cycle { token } => format!("gold heads contain a cycle through token {token}"),
                    other => other.to_string(),
                },
            })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    /// Build a corpus, checking id uniqueness and every gold tree.
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(sentences.len());
        for s in &sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation { id: s.id.clone(), msg: "duplicate sentence id".into() });
            }
            if s.is_empty() {
                return Err(Error::Validation { id: s.id.clone(), msg: "sentence has no tokens".into() });
            }
            s.validate()?;
        }
        Ok(Corpus { sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Reject sentences without complete gold trees. Gold arcs are the
    /// annotation oracle in simulation, so they must all be present.
    pub fn require_gold(&self) -> Result<()> {
        match self.sentences.iter().find(|s| !s.has_full_gold()) {
            Some(s) => Err(Error::Validation { id: s.id.clone(), msg: "missing gold head or relation".into() }),
            None => Ok(()),
        }
    }

    pub fn position_map(&self) -> HashMap<&str, usize> {
        self.sentences.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect()
    }

    /// Split off the last `fraction` of sentences (at least one) as a held-out set.
    pub fn split_tail(mut self, fraction: f64) -> Result<(Corpus, Corpus)> {
        if !(0.0..1.0).contains(&fraction) || self.len() < 2 {
            return Err(Error::arg("cannot split corpus with this fraction"));
        }
        let held = ((self.len() as f64 * fraction).round() as usize).clamp(1, self.len() - 1);
        let tail = self.sentences.split_off(self.len() - held);
        Ok((self, Corpus { sentences: tail }))
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn opt_field(s: &str) -> Option<String> {
    (s != EMPTY).then(|| s.to_string())
}

/// Read a CoNLL-U file. All tokens come back unannotated.
pub fn read_conllu(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = File::open(path)?;
    parse_conllu(BufReader::new(file))
}

pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut sent_id: Option<String> = None;
    let mut start_line = 0;

    let flush = |tokens: &mut Vec<Token>, sent_id: &mut Option<String>, sentences: &mut Vec<Sentence>| {
        if !tokens.is_empty() {
            let id = sent_id.take().unwrap_or_else(|| format!("s{}", sentences.len() + 1));
            sentences.push(Sentence::new(id, std::mem::take(tokens)));
        }
        *sent_id = None;
    };

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut sent_id, &mut sentences);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(id) = comment.trim().strip_prefix("sent_id") {
                let id = id.trim_start().trim_start_matches('=').trim();
                if !id.is_empty() {
                    sent_id = Some(id.to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(parse_err(lineno, format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        // multiword ranges and empty nodes
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0].parse().map_err(|_| parse_err(lineno, format!("invalid token id {:?}", cols[0])))?;
        if tokens.is_empty() {
            start_line = lineno;
        }
        if index != tokens.len() + 1 {
            return Err(parse_err(lineno, format!("token id {index} out of sequence (sentence starting at line {start_line})")));
        }
        let gold_head = match cols[6] {
            EMPTY => None,
            h => Some(h.parse::<usize>().map_err(|_| parse_err(lineno, format!("non-integer HEAD {h:?}")))?),
        };
        tokens.push(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: opt_field(cols[3]),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            gold_head,
            gold_rel: opt_field(cols[7]),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
            annotated: false,
        });
    }
    flush(&mut tokens, &mut sent_id, &mut sentences);
    Corpus::new(sentences)
}

pub fn write_conllu<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for s in &corpus.sentences {
        writeln!(out, "# sent_id = {}", s.id)?;
        for t in &s.tokens {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index,
                t.form,
                t.lemma,
                t.upos.as_deref().unwrap_or(EMPTY),
                t.xpos,
                t.feats,
                t.gold_head.map_or_else(|| EMPTY.to_string(), |h| h.to_string()),
                t.gold_rel.as_deref().unwrap_or(EMPTY),
                t.deps,
                t.misc,
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_conllu_file(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_conllu(corpus, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Repeat every sentence `fold` times, copy-major: all first copies, then
/// all second copies, and so on. Copies share `origin` and get ids
/// `"{id}#{copy}"`.
pub fn duplicate_corpus(corpus: &Corpus, fold: usize) -> Result<Corpus> {
    if fold == 0 {
        return Err(Error::arg("duplication fold must be at least 1"));
    }
    let mut sentences = Vec::with_capacity(corpus.len() * fold);
    for copy in 0..fold {
        for s in &corpus.sentences {
            let mut dup = s.clone();
            dup.id = format!("{}#{copy}", s.id);
            sentences.push(dup);
        }
    }
    Ok(Corpus { sentences })
}

/// Which tokens of the training corpus have been annotated, and the round.
///
/// Positions refer to the corpus the state was created from. States are
/// values: [`PoolState::annotate`] returns a new state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolState {
    annotated: Vec<Vec<bool>>,
    round: usize,
    seed: u64,
}

impl PoolState {
    pub fn empty(corpus: &Corpus, seed: u64) -> Self {
        PoolState { annotated: corpus.sentences.iter().map(|s| vec![false; s.len()]).collect(), round: 0, seed }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sentence_count(&self) -> usize {
        self.annotated.len()
    }

    pub fn is_annotated(&self, sentence: usize, token: usize) -> bool {
        self.annotated[sentence][token - 1]
    }

    pub fn mask(&self, sentence: usize) -> &[bool] {
        &self.annotated[sentence]
    }

    pub fn labeled_count(&self) -> usize {
        self.annotated.iter().flatten().filter(|&&a| a).count()
    }

    pub fn unlabeled_count(&self) -> usize {
        self.annotated.iter().flatten().filter(|&&a| !a).count()
    }

    /// `(sentence position, 1-based token index)` of every annotated token.
    pub fn labeled_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.annotated
            .iter()
            .enumerate()
            .flat_map(|(s, mask)| mask.iter().enumerate().filter(|(_, &a)| a).map(move |(i, _)| (s, i + 1)))
            .collect()
    }

    /// Positions of sentences with at least one unannotated token.
    pub fn unlabeled_sentences(&self) -> Vec<usize> {
        (0..self.annotated.len()).filter(|&s| self.annotated[s].iter().any(|&a| !a)).collect()
    }

    /// Sentences with at least one annotated token, with `annotated` flags set.
    pub fn annotated_sentences(&self, corpus: &Corpus) -> Vec<Sentence> {
        corpus
            .sentences
            .iter()
            .zip(&self.annotated)
            .filter(|(_, mask)| mask.iter().any(|&a| a))
            .map(|(s, mask)| {
                let mut s = s.clone();
                for (t, &a) in s.tokens.iter_mut().zip(mask) {
                    t.annotated = a;
                }
                s
            })
            .collect()
    }

    /// Reveal the given tokens and advance the round by one.
    pub fn annotate(&self, picks: &[(usize, usize)]) -> Result<PoolState> {
        let mut next = self.clone();
        for &(s, m) in picks {
            let slot = next
                .annotated
                .get_mut(s)
                .and_then(|mask| mask.get_mut(m.wrapping_sub(1)))
                .ok_or_else(|| Error::arg(format!("no token ({s}, {m}) in pool")))?;
            if *slot {
                return Err(Error::State(format!("token ({s}, {m}) is already annotated")));
            }
            *slot = true;
        }
        next.round += 1;
        Ok(next)
    }

    pub fn to_checkpoint(&self, corpus: &Corpus) -> PoolCheckpoint {
        let labeled = corpus
            .sentences
            .iter()
            .zip(&self.annotated)
            .filter(|(_, mask)| mask.iter().any(|&a| a))
            .map(|(s, mask)| LabeledSentence {
                id: s.id.clone(),
                tokens: mask.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i + 1).collect(),
            })
            .collect();
        PoolCheckpoint { round: self.round, rng_seed: self.seed, labeled }
    }

    pub fn from_checkpoint(corpus: &Corpus, ckpt: &PoolCheckpoint) -> Result<Self> {
        let mut state = PoolState::empty(corpus, ckpt.rng_seed);
        state.round = ckpt.round;
        let positions = corpus.position_map();
        for entry in &ckpt.labeled {
            let &s =
                positions.get(entry.id.as_str()).ok_or_else(|| Error::arg(format!("checkpoint names unknown sentence {}", entry.id)))?;
            for &m in &entry.tokens {
                let slot = state.annotated[s]
                    .get_mut(m.wrapping_sub(1))
                    .ok_or_else(|| Error::arg(format!("checkpoint token {m} out of range in {}", entry.id)))?;
                *slot = true;
            }
        }
        Ok(state)
    }
}

/// JSON form of a [`PoolState`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolCheckpoint {
    pub round: usize,
    pub rng_seed: u64,
    pub labeled: Vec<LabeledSentence>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub tokens: Vec<usize>,
}

/// Fully annotate `n_seed` sentences drawn uniformly without replacement.
pub fn seed_pool(corpus: &Corpus, n_seed: usize, rng_seed: u64) -> Result<PoolState> {
    if n_seed > corpus.len() {
        return Err(Error::arg(format!("cannot seed {n_seed} sentences from a corpus of {}", corpus.len())));
    }
    let mut state = PoolState::empty(corpus, rng_seed);
    let mut rng = seed::rng(rng_seed);
    for s in index::sample(&mut rng, corpus.len(), n_seed) {
        state.annotated[s].iter_mut().for_each(|a| *a = true);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HE_LEFT: &str = "1\tHe\the\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\tleft\tleave\tVERB\t_\t_\t0\troot\t_\t_\n\n";

    fn parse(s: &str) -> Result<Corpus> {
        parse_conllu(s.as_bytes())
    }

    #[test]
    fn reads_minimal_sentence() {
        let c = parse(HE_LEFT).unwrap();
        assert_eq!(c.len(), 1);
        let s = &c.sentences[0];
        assert_eq!(s.len(), 2);
        assert_eq!(s.gold_heads(), Some(vec![2, 0]));
        assert!(s.tokens.iter().all(|t| !t.annotated));
        assert_eq!(s.id, "s1");
    }

    #[test]
    fn skips_multiword_ranges_and_empty_nodes() {
        let text = "# sent_id = x\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\t_\tAUX\t_\t_\t0\troot\t_\t_\n\
                    2\tn't\t_\tPART\t_\t_\t1\tadvmod\t_\t_\n2.1\tgone\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let c = parse(text).unwrap();
        let s = &c.sentences[0];
        assert_eq!(s.id, "x");
        assert_eq!(s.len(), 2);
        assert_eq!(s.tokens[0].form, "do");
        assert_eq!(s.tokens[1].form, "n't");
    }

    #[test]
    fn rejects_cyclic_gold_tree() {
        let text = "# sent_id = loop\n1\ta\t_\t_\t_\t_\t2\tdep\t_\t_\n2\tb\t_\t_\t_\t_\t1\tdep\t_\t_\n";
        match parse(text) {
            Err(Error::Validation { id, .. }) => assert_eq!(id, "loop"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn reports_line_of_malformed_input() {
        let text = "1\ta\t_\t_\t_\t_\t0\troot\t_\t_\n2\tb\t_\n";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "1\ta\t_\t_\t_\t_\tzero\troot\t_\t_\n";
        assert!(matches!(parse(text), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn missing_heads_load_but_fail_gold_requirement() {
        let text = "1\ta\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
        let c = parse(text).unwrap();
        assert!(c.require_gold().is_err());
        assert!(parse(HE_LEFT).unwrap().require_gold().is_ok());
    }

    fn three() -> Corpus {
        let text = format!("{HE_LEFT}{HE_LEFT}{HE_LEFT}")
            .split("\n\n")
            .filter(|b| !b.is_empty())
            .enumerate()
            .map(|(i, b)| format!("# sent_id = t{i}\n{b}\n\n"))
            .collect::<String>();
        parse(&text).unwrap()
    }

    #[test]
    fn duplication_groups_by_origin() {
        let c = three();
        let d = duplicate_corpus(&c, 2).unwrap();
        assert_eq!(d.len(), 6);
        let mut groups: HashMap<&str, usize> = HashMap::new();
        for s in &d.sentences {
            *groups.entry(s.origin.as_str()).or_default() += 1;
        }
        assert_eq!(groups.len(), 3);
        assert!(groups.values().all(|&k| k == 2));
        // copy-major order
        assert_eq!(d.sentences[0].origin, "t0");
        assert_eq!(d.sentences[3].origin, "t0");
        assert!(Corpus::new(d.sentences.clone()).is_ok(), "ids must stay unique");

        let one = duplicate_corpus(&c, 1).unwrap();
        for (a, b) in one.sentences.iter().zip(&c.sentences) {
            assert_eq!(a.tokens, b.tokens);
            assert_ne!(a.id, b.id);
        }
        let single = Corpus { sentences: vec![c.sentences[0].clone()] };
        let five = duplicate_corpus(&single, 5).unwrap();
        assert_eq!(five.len(), 5);
        assert!(five.sentences.iter().all(|s| s.tokens == single.sentences[0].tokens));
        assert!(duplicate_corpus(&c, 0).is_err());
    }

    fn corpus_of(n: usize) -> Corpus {
        let sentences = (0..n)
            .map(|i| {
                Sentence::new(
                    format!("c{i}"),
                    vec![Token::new(1, "a", Some("X"), Some(0), Some("root")), Token::new(2, "b", Some("X"), Some(1), Some("dep"))],
                )
            })
            .collect();
        Corpus::new(sentences).unwrap()
    }

    #[test]
    fn seeding_is_uniform_subset_and_deterministic() {
        let c = corpus_of(200);
        let a = seed_pool(&c, 128, 1).unwrap();
        let b = seed_pool(&c, 128, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.round(), 0);
        let full = (0..200).filter(|&s| a.mask(s).iter().all(|&x| x)).count();
        assert_eq!(full, 128);
        assert_eq!(a.unlabeled_sentences().len(), 72);
        assert_eq!(a.labeled_count(), 256);

        let z = seed_pool(&c, 0, 9).unwrap();
        assert_eq!(z.labeled_count(), 0);
        assert!(seed_pool(&c, 201, 1).is_err());
    }

    #[test]
    fn annotate_advances_round_and_refuses_repeats() {
        let c = corpus_of(3);
        let p = PoolState::empty(&c, 0);
        let q = p.annotate(&[(0, 1), (2, 2)]).unwrap();
        assert_eq!(q.round(), 1);
        assert_eq!(q.labeled_count(), 2);
        assert!(q.is_annotated(2, 2));
        assert!(matches!(q.annotate(&[(0, 1)]), Err(Error::State(_))));
        assert!(q.annotate(&[(0, 3)]).is_err());
        let annotated = q.annotated_sentences(&c);
        assert_eq!(annotated.len(), 2);
        assert!(annotated[0].tokens[0].annotated && !annotated[0].tokens[1].annotated);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let c = corpus_of(5);
        let seeded = seed_pool(&c, 2, 3).unwrap();
        let open = seeded.unlabeled_sentences()[0];
        let p = seeded.annotate(&[(open, 2)]).unwrap();
        let json = serde_json::to_string(&p.to_checkpoint(&c)).unwrap();
        let ckpt: PoolCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(PoolState::from_checkpoint(&c, &ckpt).unwrap(), p);
    }
}
