//! Hashed sparse indicator features for candidate arcs.

use crate::seed::{hash_str, mix64};
use crate::treebank::Sentence;
use crate::{Error, Result};

const ROOT: &str = "<root>";
const BOS: &str = "<s>";
const EOS: &str = "</s>";
const NO_TAG: &str = "_";

/// Sparse feature vector with strictly increasing indices.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Sort and merge raw hashed ids; colliding ids add up.
    pub fn from_raw(mut raw: Vec<u32>) -> Self {
        raw.sort_unstable();
        let mut indices: Vec<u32> = Vec::with_capacity(raw.len());
        let mut values: Vec<f64> = Vec::with_capacity(raw.len());
        for id in raw {
            if indices.last() == Some(&id) {
                *values.last_mut().unwrap() += 1.0;
            } else {
                indices.push(id);
                values.push(1.0);
            }
        }
        FeatureVector { indices, values }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| weights[i as usize] * v).sum()
    }
}

/// Bucket for the absolute head-modifier distance: 1..5 exact, 6 for 6-10, 7 beyond.
pub fn distance_bin(h: usize, m: usize) -> u64 {
    match h.abs_diff(m) {
        d @ 1..=5 => d as u64,
        6..=10 => 6,
        _ => 7,
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Template {
    HeadForm = 1,
    HeadTag,
    ModForm,
    ModTag,
    HeadFormTag,
    ModFormTag,
    HeadFormModForm,
    HeadTagModTag,
    HeadFormModTag,
    HeadTagModForm,
    SignedDistance,
    Direction,
    TagsDistance,
    HeadFormModFormDir,
    HeadPrevTags,
    HeadNextTags,
    ModPrevTags,
    ModNextTags,
    RootAttachment,
}

#[inline]
fn key(t: Template, a: u64, b: u64, c: u64) -> u64 {
    mix64(mix64(mix64((t as u64).wrapping_mul(0x2545_F491_4F6C_DD1D) ^ a) ^ b) ^ c)
}

/// Token attributes of one sentence, hashed once and reused for every arc.
///
/// Position 0 is the root; positions outside `0..=n` read as sentence
/// boundary symbols.
#[derive(Clone, Debug)]
pub struct ArcFeaturizer {
    forms: Vec<u64>,
    tags: Vec<u64>,
    mask: u64,
}

impl ArcFeaturizer {
    pub fn new(sentence: &Sentence, hash_bits: u32) -> Self {
        let n = sentence.len();
        // slot 0 = before root, slot p + 1 = position p, slot n + 2 = after last token
        let mut forms = Vec::with_capacity(n + 3);
        let mut tags = Vec::with_capacity(n + 3);
        forms.push(hash_str(BOS));
        tags.push(hash_str(BOS));
        forms.push(hash_str(ROOT));
        tags.push(hash_str(ROOT));
        for t in &sentence.tokens {
            forms.push(hash_str(&t.form.to_lowercase()));
            tags.push(hash_str(t.upos.as_deref().unwrap_or(NO_TAG)));
        }
        forms.push(hash_str(EOS));
        tags.push(hash_str(EOS));
        ArcFeaturizer { forms, tags, mask: (1u64 << hash_bits) - 1 }
    }

    pub fn len(&self) -> usize {
        self.forms.len() - 3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn tag(&self, pos: usize, offset: isize) -> u64 {
        self.tags[(pos as isize + 1 + offset) as usize]
    }

    #[inline]
    fn form(&self, pos: usize) -> u64 {
        self.forms[pos + 1]
    }

    /// Append the hashed feature ids of arc `h -> m` to `out`.
    pub fn arc_into(&self, h: usize, m: usize, out: &mut Vec<u32>) {
        use Template::*;
        let (hf, ht, mf, mt) = (self.form(h), self.tag(h, 0), self.form(m), self.tag(m, 0));
        let dir: u64 = if h < m { 1 } else { 2 };
        let signed = distance_bin(h, m) * 2 + dir;
        let keys = [
            key(HeadForm, hf, 0, 0),
            key(HeadTag, ht, 0, 0),
            key(ModForm, mf, 0, 0),
            key(ModTag, mt, 0, 0),
            key(HeadFormTag, hf, ht, 0),
            key(ModFormTag, mf, mt, 0),
            key(HeadFormModForm, hf, mf, 0),
            key(HeadTagModTag, ht, mt, 0),
            key(HeadFormModTag, hf, mt, 0),
            key(HeadTagModForm, ht, mf, 0),
            key(SignedDistance, signed, 0, 0),
            key(Direction, dir, 0, 0),
            key(TagsDistance, ht, mt, signed),
            key(HeadFormModFormDir, hf, mf, dir),
            key(HeadPrevTags, self.tag(h, -1), ht, mt ^ dir.rotate_left(17)),
            key(HeadNextTags, ht, self.tag(h, 1), mt ^ dir.rotate_left(17)),
            key(ModPrevTags, ht, self.tag(m, -1), mt ^ dir.rotate_left(17)),
            key(ModNextTags, ht, mt, self.tag(m, 1) ^ dir.rotate_left(17)),
        ];
        out.extend(keys.iter().map(|&k| (k & self.mask) as u32));
        if h == 0 {
            out.push((key(RootAttachment, 1, 0, 0) & self.mask) as u32);
        }
    }

    /// Hashed ids of the token-level indicators at position `m` (form, tag,
    /// neighbouring tags and forms, suffix).
    pub fn token_indicators(&self, sentence: &Sentence, m: usize) -> [u64; 7] {
        let form = &sentence.tokens[m - 1].form;
        let suffix: String = form.to_lowercase().chars().rev().take(3).collect();
        [
            mix64(self.form(m) ^ 0x11),
            mix64(self.tag(m, 0) ^ 0x22),
            mix64(self.tag(m, -1) ^ 0x33),
            mix64(self.tag(m, 1) ^ 0x44),
            mix64(self.forms[m] ^ 0x55),
            mix64(self.forms[m + 2] ^ 0x66),
            mix64(hash_str(&suffix) ^ 0x77),
        ]
    }
}

/// Feature vector of arc `h -> m`.
pub fn extract_arc_features(sentence: &Sentence, h: usize, m: usize, hash_bits: u32) -> Result<FeatureVector> {
    let n = sentence.len();
    if h > n || m == 0 || m > n || h == m {
        return Err(Error::arg(format!("arc ({h}, {m}) is not a candidate in a sentence of length {n}")));
    }
    let mut raw = Vec::with_capacity(20);
    ArcFeaturizer::new(sentence, hash_bits).arc_into(h, m, &mut raw);
    Ok(FeatureVector::from_raw(raw))
}

/// Id of the root-attachment indicator in a hash space of `hash_bits` bits.
pub fn root_indicator(hash_bits: u32) -> u32 {
    (key(Template::RootAttachment, 1, 0, 0) & ((1u64 << hash_bits) - 1)) as u32
}

/// Id of the signed-distance indicator for arc `h -> m`.
pub fn signed_distance_indicator(h: usize, m: usize, hash_bits: u32) -> u32 {
    let dir: u64 = if h < m { 1 } else { 2 };
    (key(Template::SignedDistance, distance_bin(h, m) * 2 + dir, 0, 0) & ((1u64 << hash_bits) - 1)) as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Token;

    fn sentence() -> Sentence {
        Sentence::new(
            "s",
            vec![
                Token::new(1, "The", Some("DET"), Some(2), Some("det")),
                Token::new(2, "dog", Some("NOUN"), Some(3), Some("nsubj")),
                Token::new(3, "barked", Some("VERB"), Some(0), Some("root")),
            ],
        )
    }

    #[test]
    fn root_arcs_carry_root_indicator() {
        let s = sentence();
        let f = extract_arc_features(&s, 0, 1, 20).unwrap();
        assert!(f.indices.contains(&root_indicator(20)));
        let g = extract_arc_features(&s, 2, 1, 20).unwrap();
        assert!(!g.indices.contains(&root_indicator(20)));
    }

    #[test]
    fn deterministic_and_sorted() {
        let s = sentence();
        let a = extract_arc_features(&s, 3, 2, 20).unwrap();
        let b = extract_arc_features(&s, 3, 2, 20).unwrap();
        assert_eq!(a, b);
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(a.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn direction_changes_distance_indicator() {
        let s = sentence();
        let left = extract_arc_features(&s, 3, 1, 20).unwrap();
        let right = extract_arc_features(&s, 1, 3, 20).unwrap();
        let l = signed_distance_indicator(3, 1, 20);
        let r = signed_distance_indicator(1, 3, 20);
        assert_ne!(l, r);
        assert!(left.indices.contains(&l) && !left.indices.contains(&r));
        assert!(right.indices.contains(&r) && !right.indices.contains(&l));
    }

    #[test]
    fn distance_bins() {
        let bins: Vec<u64> = [1, 2, 3, 4, 5, 6, 10, 11, 40].iter().map(|&d| distance_bin(0, d)).collect();
        assert_eq!(bins, vec![1, 2, 3, 4, 5, 6, 6, 7, 7]);
    }

    #[test]
    fn rejects_non_candidate_arcs() {
        let s = sentence();
        assert!(extract_arc_features(&s, 2, 2, 20).is_err());
        assert!(extract_arc_features(&s, 4, 1, 20).is_err());
        assert!(extract_arc_features(&s, 1, 0, 20).is_err());
    }

    #[test]
    fn collisions_merge_into_values() {
        let f = FeatureVector::from_raw(vec![5, 3, 5, 9]);
        assert_eq!(f.indices, vec![3, 5, 9]);
        assert_eq!(f.values, vec![1.0, 2.0, 1.0]);
    }
}
