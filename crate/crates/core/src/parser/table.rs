use serde::{Deserialize, Serialize};

use crate::tree::check_heads;
use crate::{Error, Result};

/// Floor applied to attachment probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Whether the root may take more than one dependent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootMode {
    #[default]
    Multi,
    Single,
}

/// Arc scores of one sentence, `(n + 1) x n`: row `h` in `0..=n` is the
/// candidate head, column `m` in `1..=n` the modifier.
///
/// `att_prob` is the column-wise softmax of `log_scores`; the diagonal
/// `(m, m)` is never a candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScoreTable {
    n: usize,
    log_scores: Vec<f64>,
    att_prob: Vec<f64>,
}

impl ArcScoreTable {
    /// Build from raw scores laid out row-major as `scores[h * n + (m - 1)]`.
    /// Diagonal entries are ignored.
    pub fn from_log_scores(n: usize, mut log_scores: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("sentence length must be at least 1"));
        }
        if log_scores.len() != (n + 1) * n {
            return Err(Error::arg(format!("score table for n={n} needs {} entries, got {}", (n + 1) * n, log_scores.len())));
        }
        for m in 1..=n {
            log_scores[m * n + m - 1] = f64::NEG_INFINITY;
        }
        if log_scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
            return Err(Error::Numeric("score table contains NaN or +inf".into()));
        }
        let mut att_prob = vec![0.0; log_scores.len()];
        for m in 1..=n {
            let col = |h: usize| h * n + m - 1;
            let max = (0..=n).map(|h| log_scores[col(h)]).fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::Numeric(format!("column {m} has no finite candidate")));
            }
            let z: f64 = (0..=n).map(|h| (log_scores[col(h)] - max).exp()).sum();
            for h in 0..=n {
                att_prob[col(h)] = (log_scores[col(h)] - max).exp() / z;
            }
        }
        Ok(ArcScoreTable { n, log_scores, att_prob })
    }

    /// Build from a score function over candidate arcs.
    pub fn from_fn(n: usize, mut score: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut s = vec![f64::NEG_INFINITY; (n + 1) * n];
        for h in 0..=n {
            for m in 1..=n {
                if h != m {
                    s[h * n + m - 1] = score(h, m);
                }
            }
        }
        Self::from_log_scores(n, s)
    }

    /// All-zero scores: every column uniform over its `n` candidates.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_fn(n, |_, _| 0.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, h: usize, m: usize) -> usize {
        debug_assert!(h <= self.n && (1..=self.n).contains(&m));
        h * self.n + m - 1
    }

    pub fn log_score(&self, h: usize, m: usize) -> f64 {
        self.log_scores[self.idx(h, m)]
    }

    pub fn att(&self, h: usize, m: usize) -> f64 {
        self.att_prob[self.idx(h, m)]
    }

    /// `ln max(att, PROB_FLOOR)`, the arc's contribution to a tree score.
    pub fn log_att(&self, h: usize, m: usize) -> f64 {
        if h == m {
            return f64::NEG_INFINITY;
        }
        self.att(h, m).max(PROB_FLOOR).ln()
    }

    /// Attachment distribution of modifier `m` over heads `0..=n`.
    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..=self.n).map(|h| self.att(h, m)).collect()
    }
}

/// Dependency tree with one head and one relation per token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseTree {
    pub heads: Vec<usize>,
    pub rels: Vec<String>,
}

impl ParseTree {
    pub fn new(heads: Vec<usize>, rels: Vec<String>) -> Result<Self> {
        if heads.len() != rels.len() {
            return Err(Error::arg("heads and relations differ in length"));
        }
        check_heads(&heads).map_err(|d| Error::arg(d.to_string()))?;
        Ok(ParseTree { heads, rels })
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }
}

/// Sum of log attachment probabilities of the arcs in `heads`.
pub fn tree_score(table: &ArcScoreTable, heads: &[usize]) -> Result<f64> {
    if heads.len() != table.n() {
        return Err(Error::arg(format!("tree has {} tokens, table has {}", heads.len(), table.n())));
    }
    check_heads(heads).map_err(|d| Error::arg(d.to_string()))?;
    Ok(heads.iter().enumerate().map(|(i, &h)| table.log_att(h, i + 1)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_columns() {
        let t = ArcScoreTable::uniform(3).unwrap();
        for m in 1..=3 {
            for h in 0..=3 {
                let expect = if h == m { 0.0 } else { 1.0 / 3.0 };
                assert!((t.att(h, m) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_token_tree_scores_zero() {
        let t = ArcScoreTable::uniform(1).unwrap();
        assert_eq!(t.att(0, 1), 1.0);
        assert_eq!(tree_score(&t, &[0]).unwrap(), 0.0);
    }

    #[test]
    fn two_token_uniform_tree_score() {
        let t = ArcScoreTable::uniform(2).unwrap();
        for heads in [[0, 0], [0, 1], [2, 0]] {
            let s = tree_score(&t, &heads).unwrap();
            assert!((s - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_score_is_product_of_arc_probabilities() {
        // column 1: P(0)=0.1, P(2)=0.9; column 2: P(0)=0.8, P(1)=0.2
        let p = [[0.1, 0.8], [0.0, 0.2], [0.9, 0.0]];
        let t = ArcScoreTable::from_fn(2, |h, m| f64::ln(p[h][m - 1])).unwrap();
        assert!((t.att(2, 1) - 0.9).abs() < 1e-12);
        let s = tree_score(&t, &[2, 0]).unwrap();
        assert!((s - 0.72f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_trees_are_rejected() {
        let t = ArcScoreTable::uniform(2).unwrap();
        assert!(tree_score(&t, &[2, 1]).is_err());
        assert!(tree_score(&t, &[0]).is_err());
    }
}
