//! Partition function and arc marginals over arborescences (matrix-tree
//! theorem), with a brute-force enumeration oracle for small sentences.

use crate::linalg::Lu;
use crate::parser::{ArcScoreTable, RootMode, PROB_FLOOR};
use crate::tree::is_tree;
use crate::{Error, Result};

/// Largest sentence length accepted by [`enumerate_arborescences`].
pub const MAX_ENUMERATION_LEN: usize = 6;

/// Non-negative arc weights `w(h, m)`, laid out like [`ArcScoreTable`].
#[derive(Clone, Debug, PartialEq)]
pub struct ArcWeights {
    n: usize,
    w: Vec<f64>,
}

impl ArcWeights {
    /// `w(h, m) = max(att(h, m), PROB_FLOOR)`, so `ln w` is the arc's
    /// tree-score contribution.
    pub fn from_table(table: &ArcScoreTable) -> Self {
        let n = table.n();
        let mut w = vec![0.0; (n + 1) * n];
        for h in 0..=n {
            for m in 1..=n {
                if h != m {
                    w[h * n + m - 1] = table.att(h, m).max(PROB_FLOOR);
                }
            }
        }
        ArcWeights { n, w }
    }

    /// Weights `exp(theta(h, m))`; the diagonal is ignored.
    pub fn from_log_weights(n: usize, mut theta: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("sentence length must be at least 1"));
        }
        let mut w = vec![0.0; (n + 1) * n];
        for h in 0..=n {
            for m in 1..=n {
                if h != m {
                    let v = theta(h, m).exp();
                    if !v.is_finite() {
                        return Err(Error::Numeric(format!("arc weight ({h}, {m}) is not finite")));
                    }
                    w[h * n + m - 1] = v;
                }
            }
        }
        Ok(ArcWeights { n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, h: usize, m: usize) -> f64 {
        if h == m {
            0.0
        } else {
            self.w[h * self.n + m - 1]
        }
    }

    /// Laplacian over tokens `1..=n` after dividing each column by its
    /// largest weight. Returns the matrix and `sum ln(scale)`.
    fn laplacian(&self, mode: RootMode) -> Result<(Vec<f64>, f64)> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        let mut log_scale = 0.0;
        for m in 1..=n {
            let c = (0..=n).map(|h| self.get(h, m)).fold(0.0, f64::max);
            if c.is_nan() || c <= 0.0 {
                return Err(Error::Numeric(format!("no arc with positive weight enters token {m}")));
            }
            log_scale += c.ln();
            let col = m - 1;
            for h in 1..=n {
                if h != m {
                    let v = self.get(h, m) / c;
                    a[(h - 1) * n + col] -= v;
                    a[col * n + col] += v;
                }
            }
            let root = self.get(0, m) / c;
            // single-root: row 0 is replaced by the root weights
            match mode {
                RootMode::Multi => a[col * n + col] += root,
                RootMode::Single => a[col] = root,
            }
        }
        Ok((a, log_scale))
    }

    fn factor(&self, mode: RootMode) -> Result<(Lu, f64)> {
        let (a, log_scale) = self.laplacian(mode)?;
        let lu = Lu::new(self.n, a).ok_or_else(|| Error::Numeric("Laplacian is singular".into()))?;
        Ok((lu, log_scale))
    }

    /// `ln` of the total weight of all arborescences rooted at 0.
    pub fn log_partition(&self, mode: RootMode) -> Result<f64> {
        let (lu, log_scale) = self.factor(mode)?;
        let (sign, log_det) = lu.log_det();
        if sign <= 0.0 || !log_det.is_finite() {
            return Err(Error::Numeric("Laplacian determinant is not positive".into()));
        }
        Ok(log_det + log_scale)
    }

    /// Probability of each arc under the tree distribution proportional to
    /// the product of arc weights.
    pub fn marginals(&self, mode: RootMode) -> Result<MarginalTable> {
        let n = self.n;
        let (lu, _) = self.factor(mode)?;
        let inv = lu.inverse();
        let at = |row: usize, col: usize| inv[row * n + col];
        let mut mar = vec![0.0; (n + 1) * n];
        for m in 1..=n {
            let c = (0..=n).map(|h| self.get(h, m)).fold(0.0, f64::max);
            let col = m - 1;
            for h in 0..=n {
                if h == m {
                    continue;
                }
                let w = self.get(h, m) / c;
                // d ln det / d A[r][c] = inv[c][r]; each weight enters the
                // matrix at the cells it was added to.
                let grad = match (mode, h) {
                    (RootMode::Multi, 0) => at(col, col),
                    (RootMode::Multi, _) => at(col, col) - at(col, h - 1),
                    (RootMode::Single, 0) => at(col, 0),
                    (RootMode::Single, _) => {
                        let diag = if col != 0 { at(col, col) } else { 0.0 };
                        let off = if h != 1 { at(col, h - 1) } else { 0.0 };
                        diag - off
                    }
                };
                mar[h * n + col] = (w * grad).clamp(0.0, 1.0);
            }
        }
        Ok(MarginalTable { n, mar })
    }
}

/// `P(head(m) = h)` for every candidate arc.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalTable {
    n: usize,
    mar: Vec<f64>,
}

impl MarginalTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, h: usize, m: usize) -> f64 {
        if h == m {
            0.0
        } else {
            self.mar[h * self.n + m - 1]
        }
    }

    pub fn column(&self, m: usize) -> Vec<f64> {
        (0..=self.n).map(|h| self.get(h, m)).collect()
    }
}

pub fn log_partition(table: &ArcScoreTable) -> Result<f64> {
    log_partition_with(table, RootMode::Multi)
}

pub fn log_partition_with(table: &ArcScoreTable, mode: RootMode) -> Result<f64> {
    ArcWeights::from_table(table).log_partition(mode)
}

pub fn arc_marginals(table: &ArcScoreTable) -> Result<MarginalTable> {
    arc_marginals_with(table, RootMode::Multi)
}

pub fn arc_marginals_with(table: &ArcScoreTable, mode: RootMode) -> Result<MarginalTable> {
    ArcWeights::from_table(table).marginals(mode)
}

/// Every head array of length `n` that forms an arborescence rooted at 0,
/// in lexicographic order.
pub fn enumerate_arborescences(n: usize) -> Result<Arborescences> {
    if !(1..=MAX_ENUMERATION_LEN).contains(&n) {
        return Err(Error::arg(format!("enumeration supports 1..={MAX_ENUMERATION_LEN} tokens, got {n}")));
    }
    Ok(Arborescences { next: Some(vec![0; n]) })
}

pub struct Arborescences {
    next: Option<Vec<usize>>,
}

impl Iterator for Arborescences {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        loop {
            let cur = self.next.take()?;
            let n = cur.len();
            let mut succ = cur.clone();
            let mut i = n;
            while i > 0 {
                i -= 1;
                if succ[i] < n {
                    succ[i] += 1;
                    self.next = Some(succ);
                    break;
                }
                succ[i] = 0;
            }
            if is_tree(&cur) {
                return Some(cur);
            }
        }
    }
}

/// Brute-force `ln Z` and marginals by summing over every arborescence.
pub fn enumerate_marginals(weights: &ArcWeights, mode: RootMode) -> Result<(f64, MarginalTable)> {
    let n = weights.n();
    let mut scores = Vec::new();
    let mut trees = Vec::new();
    for heads in enumerate_arborescences(n)? {
        if mode == RootMode::Single && crate::tree::root_children(&heads) != 1 {
            continue;
        }
        let s: f64 = heads.iter().enumerate().map(|(i, &h)| weights.get(h, i + 1).ln()).sum();
        scores.push(s);
        trees.push(heads);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let mut mar = vec![0.0; (n + 1) * n];
    for (s, heads) in scores.iter().zip(&trees) {
        let p = (s - max).exp() / z;
        for (i, &h) in heads.iter().enumerate() {
            mar[h * n + i] += p;
        }
    }
    Ok((max + z.ln(), MarginalTable { n, mar }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arborescence_counts() {
        let counts: Vec<usize> = (1..=4).map(|n| enumerate_arborescences(n).unwrap().count()).collect();
        assert_eq!(counts, vec![1, 3, 16, 125]);
        assert!(enumerate_arborescences(7).is_err());
        assert!(enumerate_arborescences(0).is_err());
    }

    #[test]
    fn two_token_trees() {
        let trees: Vec<Vec<usize>> = enumerate_arborescences(2).unwrap().collect();
        assert_eq!(trees, vec![vec![0, 0], vec![0, 1], vec![2, 0]]);
    }

    #[test]
    fn all_ones_determinant_counts_trees() {
        let w = ArcWeights::from_log_weights(3, |_, _| 0.0).unwrap();
        assert!((w.log_partition(RootMode::Multi).unwrap() - 16f64.ln()).abs() < 1e-12);
        // single-root: n^(n-2) trees per root child times n children
        assert!((w.log_partition(RootMode::Single).unwrap() - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_token() {
        let t = ArcScoreTable::uniform(1).unwrap();
        assert!(log_partition(&t).unwrap().abs() < 1e-15);
        assert!((arc_marginals(&t).unwrap().get(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_token_uniform() {
        let t = ArcScoreTable::uniform(2).unwrap();
        assert!((log_partition(&t).unwrap() - 0.75f64.ln()).abs() < 1e-12);
        let mar = arc_marginals(&t).unwrap();
        for (h, m, p) in [(0, 1, 2.0 / 3.0), (2, 1, 1.0 / 3.0), (0, 2, 2.0 / 3.0), (1, 2, 1.0 / 3.0)] {
            assert!((mar.get(h, m) - p).abs() < 1e-12);
        }
    }
}
