//! Deterministic English-like treebank generator.
//!
//! Sentences come from a small phrase grammar (subject, optional auxiliary,
//! verb, object, prepositional phrases, adverbs, coordination) with
//! Zipf-distributed word choice. Prepositions carry an attachment bias so
//! that noun versus verb attachment is learnable but not trivial.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seed::{derive_seed, rng};
use crate::treebank::{Corpus, Sentence, Token};
use crate::Result;

const NOUNS: &[&str] = &[
    "company",
    "year",
    "market",
    "share",
    "price",
    "stock",
    "government",
    "bank",
    "plan",
    "group",
    "business",
    "investor",
    "rate",
    "sale",
    "month",
    "week",
    "president",
    "program",
    "bond",
    "industry",
    "trader",
    "interest",
    "firm",
    "profit",
    "contract",
    "analyst",
    "unit",
    "loss",
    "issue",
    "board",
    "law",
    "court",
    "report",
    "deal",
    "official",
    "system",
    "fund",
    "executive",
    "state",
    "country",
    "product",
    "offer",
    "debt",
    "team",
    "city",
    "student",
    "teacher",
    "school",
    "book",
    "letter",
    "house",
    "car",
    "road",
    "river",
    "child",
    "parent",
    "doctor",
    "hospital",
    "policy",
    "tax",
    "budget",
    "agency",
    "worker",
    "union",
    "strike",
    "factory",
    "machine",
    "computer",
    "network",
    "phone",
    "customer",
    "service",
    "store",
    "price",
    "airline",
    "flight",
    "engine",
    "model",
    "design",
    "study",
    "result",
    "test",
    "drug",
    "patient",
    "farmer",
    "crop",
    "weather",
    "storm",
    "island",
    "bridge",
    "tower",
    "museum",
    "painting",
    "artist",
    "song",
    "film",
    "director",
    "actor",
    "story",
    "paper",
    "editor",
    "judge",
    "lawyer",
    "case",
    "trial",
    "vote",
    "election",
    "party",
    "leader",
    "minister",
    "army",
    "officer",
    "garden",
    "kitchen",
    "window",
    "door",
    "table",
    "chair",
    "friend",
    "neighbor",
    "village",
    "mountain",
];
const VERBS: &[&str] = &[
    "said",
    "bought",
    "sold",
    "reported",
    "expected",
    "made",
    "took",
    "offered",
    "raised",
    "cut",
    "approved",
    "announced",
    "received",
    "gave",
    "found",
    "built",
    "opened",
    "closed",
    "signed",
    "rejected",
    "lost",
    "won",
    "wrote",
    "read",
    "saw",
    "called",
    "moved",
    "paid",
    "asked",
    "left",
    "held",
    "ran",
    "bought",
    "showed",
    "planned",
    "started",
    "ended",
    "helped",
    "owned",
    "used",
    "needed",
    "wanted",
    "visited",
    "painted",
    "sent",
    "carried",
    "watched",
    "followed",
    "studied",
    "changed",
    "fixed",
    "broke",
    "filled",
    "covered",
    "reached",
];
const ADJS: &[&str] = &[
    "new",
    "big",
    "small",
    "major",
    "old",
    "large",
    "high",
    "low",
    "public",
    "foreign",
    "early",
    "late",
    "strong",
    "weak",
    "local",
    "federal",
    "financial",
    "recent",
    "long",
    "short",
    "young",
    "red",
    "green",
    "quiet",
    "busy",
    "final",
    "first",
    "last",
    "important",
    "common",
    "private",
    "easy",
    "hard",
    "cheap",
    "rich",
];
const ADVS: &[&str] = &[
    "also",
    "still",
    "already",
    "recently",
    "quickly",
    "only",
    "again",
    "never",
    "often",
    "probably",
    "slowly",
    "finally",
    "yesterday",
    "today",
    "later",
    "soon",
];
const DETS: &[&str] = &["the", "a", "this", "that", "some", "every", "its", "their", "no", "another"];
const PRONS: &[&str] = &["it", "he", "she", "they", "we", "i", "you", "someone"];
const AUXS: &[&str] = &["will", "has", "had", "would", "could", "may", "might", "should"];
const NUMS: &[&str] = &["two", "three", "four", "five", "ten", "100", "1990", "20", "several", "million"];
/// Prepositions with their probability of attaching to a noun.
const ADPS: &[(&str, f64)] = &[
    ("of", 0.95),
    ("in", 0.35),
    ("for", 0.4),
    ("on", 0.3),
    ("with", 0.45),
    ("at", 0.2),
    ("from", 0.5),
    ("by", 0.15),
    ("about", 0.7),
    ("into", 0.1),
    ("after", 0.1),
    ("under", 0.3),
];

/// Zipf draw of a rank in `0..n` with exponent 1.
fn zipf(rng: &mut ChaCha8Rng, n: usize) -> usize {
    let h: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.gen::<f64>() * h;
    for r in 1..=n {
        u -= 1.0 / r as f64;
        if u <= 0.0 {
            return r - 1;
        }
    }
    n - 1
}

struct Builder {
    forms: Vec<String>,
    tags: Vec<&'static str>,
    heads: Vec<usize>,
    rels: Vec<&'static str>,
}

impl Builder {
    /// Append a token and return its 1-based position.
    fn push(&mut self, form: &str, tag: &'static str, rel: &'static str) -> usize {
        self.forms.push(form.to_string());
        self.tags.push(tag);
        self.heads.push(0);
        self.rels.push(rel);
        self.forms.len()
    }

    fn attach(&mut self, dep: usize, head: usize) {
        self.heads[dep - 1] = head;
    }

    fn word(&mut self, rng: &mut ChaCha8Rng, list: &[&str], tag: &'static str, rel: &'static str) -> usize {
        let w = list[zipf(rng, list.len())];
        self.push(w, tag, rel)
    }

    /// Noun phrase; returns the head noun. `depth` limits nested modifiers.
    fn noun_phrase(&mut self, rng: &mut ChaCha8Rng, rel: &'static str, depth: usize) -> usize {
        let mut pre = Vec::new();
        if rng.gen_bool(0.75) {
            pre.push(self.word(rng, DETS, "DET", "det"));
        }
        if rng.gen_bool(0.12) {
            pre.push(self.word(rng, NUMS, "NUM", "nummod"));
        }
        let n_adj = if rng.gen_bool(0.35) { 1 + usize::from(rng.gen_bool(0.2)) } else { 0 };
        for _ in 0..n_adj {
            pre.push(self.word(rng, ADJS, "ADJ", "amod"));
        }
        if rng.gen_bool(0.15) {
            pre.push(self.word(rng, NOUNS, "NOUN", "compound"));
        }
        let head = self.word(rng, NOUNS, "NOUN", rel);
        for p in pre {
            self.attach(p, head);
        }
        if depth > 0 && rng.gen_bool(0.3) {
            let (adp, noun_bias) = ADPS[zipf(rng, ADPS.len())];
            if rng.gen_bool(noun_bias) {
                let case = self.push(adp, "ADP", "case");
                let obj = self.noun_phrase(rng, "nmod", depth - 1);
                self.attach(case, obj);
                self.attach(obj, head);
            }
        }
        head
    }

    fn subject(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if rng.gen_bool(0.3) {
            self.word(rng, PRONS, "PRON", "nsubj")
        } else {
            self.noun_phrase(rng, "nsubj", 1)
        }
    }

    /// Verb phrase after the subject; returns the verb.
    fn predicate(&mut self, rng: &mut ChaCha8Rng, subj: Option<usize>, rel: &'static str) -> usize {
        let mut pre = Vec::new();
        if rng.gen_bool(0.25) {
            pre.push(self.word(rng, AUXS, "AUX", "aux"));
        }
        if rng.gen_bool(0.15) {
            pre.push(self.word(rng, ADVS, "ADV", "advmod"));
        }
        let verb = self.word(rng, VERBS, "VERB", rel);
        for p in pre.into_iter().chain(subj) {
            self.attach(p, verb);
        }
        if rng.gen_bool(0.8) {
            let obj = self.noun_phrase(rng, "obj", 2);
            self.attach(obj, verb);
        }
        let n_pp = [0usize, 0, 1, 1, 1, 2][rng.gen_range(0..6)];
        for _ in 0..n_pp {
            let (adp, _) = ADPS[zipf(rng, ADPS.len())];
            let case = self.push(adp, "ADP", "case");
            let obl = self.noun_phrase(rng, "obl", 1);
            self.attach(case, obl);
            self.attach(obl, verb);
        }
        if rng.gen_bool(0.15) {
            let adv = self.word(rng, ADVS, "ADV", "advmod");
            self.attach(adv, verb);
        }
        verb
    }

    fn sentence(rng: &mut ChaCha8Rng) -> Builder {
        let mut b = Builder { forms: Vec::new(), tags: Vec::new(), heads: Vec::new(), rels: Vec::new() };
        let fronted = rng.gen_bool(0.1).then(|| b.word(rng, ADVS, "ADV", "advmod"));
        let subj = b.subject(rng);
        let root = b.predicate(rng, Some(subj), "root");
        b.attach(root, 0);
        if let Some(a) = fronted {
            b.attach(a, root);
        }
        if rng.gen_bool(0.2) {
            if rng.gen_bool(0.5) {
                let comma = b.push(",", "PUNCT", "punct");
                b.attach(comma, root);
            }
            let cc = b.push("and", "CCONJ", "cc");
            let second_subj = rng.gen_bool(0.5).then(|| b.subject(rng));
            let conj = b.predicate(rng, second_subj, "conj");
            b.attach(cc, conj);
            b.attach(conj, root);
        }
        let stop = b.push(if rng.gen_bool(0.9) { "." } else { "!" }, "PUNCT", "punct");
        b.attach(stop, root);
        b
    }
}

/// `count` sentences with ids `{prefix}{k}`.
pub fn generate(count: usize, seed: u64, prefix: &str) -> Result<Corpus> {
    let sentences = (0..count)
        .map(|k| {
            let mut r = rng(derive_seed(seed, k as u64, "synthetic"));
            let b = Builder::sentence(&mut r);
            let tokens = (0..b.forms.len())
                .map(|i| {
                    let mut t = Token::new(i + 1, &b.forms[i], Some(b.tags[i]), Some(b.heads[i]), Some(b.rels[i]));
                    t.lemma = b.forms[i].to_lowercase();
                    t
                })
                .collect();
            Sentence::new(format!("{prefix}{k}"), tokens)
        })
        .collect();
    Corpus::new(sentences)
}

/// Disjoint train and test corpora drawn from the same grammar.
pub fn generate_split(train: usize, test: usize, seed: u64) -> Result<(Corpus, Corpus)> {
    Ok((generate(train, derive_seed(seed, 0, "train"), "train-")?, generate(test, derive_seed(seed, 1, "test"), "test-")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_valid_and_deterministic() {
        let a = generate(200, 7, "s").unwrap();
        let b = generate(200, 7, "s").unwrap();
        assert_eq!(a, b);
        a.require_gold().unwrap();
        let mean = a.token_count() as f64 / a.len() as f64;
        assert!((6.0..40.0).contains(&mean), "mean length {mean}");
        assert_ne!(a, generate(200, 8, "s").unwrap());
    }

    #[test]
    fn every_sentence_has_a_root_verb() {
        let c = generate(50, 1, "s").unwrap();
        for s in &c.sentences {
            let roots: Vec<_> = s.tokens.iter().filter(|t| t.gold_head == Some(0)).collect();
            assert_eq!(roots.len(), 1);
            assert_eq!(roots[0].upos.as_deref(), Some("VERB"));
            assert_eq!(roots[0].gold_rel.as_deref(), Some("root"));
        }
    }
}
