//! L-ensemble kernels with a quality-diversity decomposition and greedy
//! MAP selection under a size budget.

use serde::{Deserialize, Serialize};

use crate::quality::QUALITY_FLOOR;
use crate::{Error, Result};

/// Largest ground set accepted by [`brute_force_map`].
pub const MAX_BRUTE_FORCE: usize = 15;

/// Candidate pools above this size are trimmed by quality before selection.
pub const PRETRIM_LIMIT: usize = 5000;

/// A Cholesky pivot `d^2 <= ZERO_GAIN_TOL * L_ii` counts as a zero gain.
pub const ZERO_GAIN_TOL: f64 = 1e-10;

/// `L_ij = q_i <phi_i, phi_j> q_j` over a ground set, evaluated on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionKernel {
    q: Vec<f64>,
    phi: Vec<Vec<f64>>,
    sizes: Vec<usize>,
}

impl SelectionKernel {
    /// Qualities are clamped to at least [`QUALITY_FLOOR`].
    pub fn new(q: Vec<f64>, phi: Vec<Vec<f64>>, sizes: Vec<usize>) -> Result<Self> {
        if q.len() != phi.len() || q.len() != sizes.len() {
            return Err(Error::arg("quality, feature and size lists differ in length"));
        }
        if let Some(d) = phi.first().map(Vec::len) {
            if phi.iter().any(|p| p.len() != d) {
                return Err(Error::arg("feature vectors differ in dimension"));
            }
        }
        if q.iter().chain(phi.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("kernel inputs must be finite".into()));
        }
        let q = q.into_iter().map(|x| x.max(QUALITY_FLOOR)).collect();
        Ok(SelectionKernel { q, phi, sizes })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn quality(&self, i: usize) -> f64 {
        self.q[i]
    }

    pub fn size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    #[inline]
    fn entry(&self, i: usize, j: usize) -> f64 {
        let dot: f64 = self.phi[i].iter().zip(&self.phi[j]).map(|(a, b)| a * b).sum();
        self.q[i] * dot * self.q[j]
    }

    pub fn kernel_entry(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.len() || j >= self.len() {
            return Err(Error::arg(format!("kernel index ({i}, {j}) out of range for {} items", self.len())));
        }
        Ok(self.entry(i, j))
    }

    /// `ln det L_B`, or `-inf` when the submatrix is singular.
    pub fn subset_log_det(&self, subset: &[usize]) -> Result<f64> {
        if let Some(&bad) = subset.iter().find(|&&i| i >= self.len()) {
            return Err(Error::arg(format!("kernel index {bad} out of range for {} items", self.len())));
        }
        let k = subset.len();
        let mut chol = vec![0.0; k * k];
        let mut log_det = 0.0;
        for a in 0..k {
            for b in 0..=a {
                let mut s = self.entry(subset[a], subset[b]);
                for c in 0..b {
                    s -= chol[a * k + c] * chol[b * k + c];
                }
                if a == b {
                    let diag = self.entry(subset[a], subset[a]);
                    if s <= ZERO_GAIN_TOL * diag {
                        return Ok(f64::NEG_INFINITY);
                    }
                    chol[a * k + a] = s.sqrt();
                    log_det += s.ln();
                } else {
                    chol[a * k + b] = s / chol[b * k + b];
                }
            }
        }
        Ok(log_det)
    }
}

/// One greedy step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub item: usize,
    /// `ln det L_{Y+i} - ln det L_Y`; `-inf` for a zero gain.
    pub log_gain: f64,
    /// `ln det L_Y` after the step.
    pub log_det: f64,
    pub cumulative_size: usize,
    /// The pick came from the quality fallback because every gain was zero.
    pub fallback: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub steps: Vec<SelectionStep>,
}

impl Selection {
    pub fn items(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.item).collect()
    }

    pub fn total_size(&self) -> usize {
        self.steps.last().map_or(0, |s| s.cumulative_size)
    }

    pub fn used_fallback(&self) -> bool {
        self.steps.iter().any(|s| s.fallback)
    }
}

/// Greedy MAP under a size budget: keep adding the item that maximises
/// `det L_Y` while the selected size is below `budget`.
///
/// Chosen items leave the candidate set. Ties go to the smallest index.
/// Once every remaining gain is zero, the rest are taken by descending
/// quality.
pub fn greedy_map(kernel: &SelectionKernel, budget: usize) -> Selection {
    let n = kernel.len();
    let mut steps: Vec<SelectionStep> = Vec::new();
    let mut chosen = vec![false; n];
    // Chen et al. incremental Cholesky: c[i] holds row i of L_{Y,i} solved
    // against the current factor; gain[i] = det(L_{Y+i}) / det(L_Y).
    let mut c: Vec<Vec<f64>> = vec![Vec::new(); n];
    let diag: Vec<f64> = (0..n).map(|i| kernel.entry(i, i)).collect();
    let mut gain = diag.clone();
    let mut total = 0usize;
    let mut log_det = 0.0;
    let mut saturated = false;

    while total < budget && steps.len() < n {
        let mut best: Option<usize> = None;
        if !saturated {
            for i in 0..n {
                if !chosen[i] && gain[i] > ZERO_GAIN_TOL * diag[i] && best.is_none_or(|b| gain[i] > gain[b]) {
                    best = Some(i);
                }
            }
            saturated = best.is_none();
        }
        let (j, fallback) = match best {
            Some(j) => (j, false),
            None => {
                let mut f: Option<usize> = None;
                for i in (0..n).filter(|&i| !chosen[i]) {
                    if f.is_none_or(|b| kernel.q[i] > kernel.q[b]) {
                        f = Some(i);
                    }
                }
                (f.expect("an unchosen item remains"), true)
            }
        };
        chosen[j] = true;
        total += kernel.sizes[j];
        let log_gain = if fallback { f64::NEG_INFINITY } else { gain[j].ln() };
        log_det += log_gain;
        steps.push(SelectionStep { item: j, log_gain, log_det, cumulative_size: total, fallback });

        if !fallback {
            let dj = gain[j].sqrt();
            let cj = std::mem::take(&mut c[j]);
            for i in 0..n {
                if chosen[i] {
                    continue;
                }
                let dot: f64 = cj.iter().zip(&c[i]).map(|(a, b)| a * b).sum();
                let e = (kernel.entry(j, i) - dot) / dj;
                c[i].push(e);
                gain[i] -= e * e;
            }
            c[j] = cj;
        }
    }
    Selection { steps }
}

/// Exhaustive MAP over budget-maximal subsets: every subset whose total
/// size fits in `budget` and that cannot take another item.
pub fn brute_force_map(kernel: &SelectionKernel, budget: usize) -> Result<Vec<usize>> {
    let n = kernel.len();
    if n > MAX_BRUTE_FORCE {
        return Err(Error::arg(format!("brute force supports at most {MAX_BRUTE_FORCE} items, got {n}")));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1u32 << n) {
        let subset: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let size: usize = subset.iter().map(|&i| kernel.sizes[i]).sum();
        if size > budget {
            continue;
        }
        let maximal = (0..n).all(|i| mask >> i & 1 == 1 || size + kernel.sizes[i] > budget);
        if !maximal {
            continue;
        }
        let ld = if subset.is_empty() { 0.0 } else { kernel.subset_log_det(&subset)? };
        if best.as_ref().is_none_or(|(b, _)| ld > *b) {
            best = Some((ld, subset));
        }
    }
    Ok(best.map(|(_, s)| s).unwrap_or_default())
}

/// Indices of the `limit` highest-quality candidates, in original order.
/// Ties keep the smaller index.
pub fn pretrim(q: &[f64], limit: usize) -> Vec<usize> {
    if q.len() <= limit {
        return (0..q.len()).collect();
    }
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
    order.truncate(limit);
    order.sort_unstable();
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    #[test]
    fn kernel_entries() {
        let k = SelectionKernel::new(vec![0.5, 0.2, 0.5], vec![unit(2, 0), unit(2, 0), unit(2, 1)], vec![1; 3]).unwrap();
        assert!((k.kernel_entry(0, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((k.kernel_entry(0, 1).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(k.kernel_entry(0, 2).unwrap(), 0.0);
        assert!(k.kernel_entry(0, 3).is_err());
    }

    #[test]
    fn subset_determinants() {
        let k = SelectionKernel::new(vec![0.5, 0.2, 1.0, 1.0], vec![unit(2, 0), unit(2, 0), unit(2, 0), unit(2, 1)], vec![1; 4]).unwrap();
        assert!((k.subset_log_det(&[0]).unwrap() - 0.25f64.ln()).abs() < 1e-12);
        assert_eq!(k.subset_log_det(&[0, 1]).unwrap(), f64::NEG_INFINITY);
        assert!(k.subset_log_det(&[2, 3]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_features_fall_back_to_quality_order() {
        let q = vec![0.3, 0.9, 0.5, 0.7];
        let k = SelectionKernel::new(q, vec![unit(3, 0); 4], vec![1; 4]).unwrap();
        let sel = greedy_map(&k, 4);
        assert_eq!(sel.items(), vec![1, 3, 2, 0]);
        assert!(!sel.steps[0].fallback && sel.steps[1].fallback);
    }

    #[test]
    fn duplicate_pair_is_not_co_selected() {
        let phi = vec![unit(2, 0), unit(2, 0), vec![0.6, 0.8]];
        let k = SelectionKernel::new(vec![0.9, 0.9, 0.1], phi, vec![1; 3]).unwrap();
        assert_eq!(greedy_map(&k, 2).items(), vec![0, 2]);
    }

    #[test]
    fn budget_is_checked_before_each_add() {
        let phi = (0..4).map(|i| unit(4, i)).collect();
        let k = SelectionKernel::new(vec![1.0, 0.9, 0.8, 0.7], phi, vec![3, 3, 3, 3]).unwrap();
        let sel = greedy_map(&k, 5);
        assert_eq!(sel.items(), vec![0, 1]);
        assert_eq!(sel.total_size(), 6);
        assert!(greedy_map(&k, 0).steps.is_empty());
        let empty = SelectionKernel::new(vec![], vec![], vec![]).unwrap();
        assert!(greedy_map(&empty, 10).steps.is_empty());
    }

    #[test]
    fn brute_force_examples() {
        let single = SelectionKernel::new(vec![0.4], vec![unit(1, 0)], vec![1]).unwrap();
        assert_eq!(brute_force_map(&single, 1).unwrap(), vec![0]);
        assert!(brute_force_map(&single, 0).unwrap().is_empty());

        // an orthogonal high-quality triple among correlated low-quality items
        let mut phi: Vec<Vec<f64>> = (0..3).map(|i| unit(4, i)).collect();
        let mut q = vec![1.0, 0.95, 0.9];
        for _ in 0..4 {
            phi.push(vec![0.5; 4]);
            q.push(0.3);
        }
        let k = SelectionKernel::new(q, phi, vec![1; 7]).unwrap();
        assert_eq!(brute_force_map(&k, 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(greedy_map(&k, 3).items(), vec![0, 1, 2]);
    }

    #[test]
    fn pretrim_keeps_top_quality_in_order() {
        assert_eq!(pretrim(&[0.1, 0.9, 0.5, 0.9], 2), vec![1, 3]);
        assert_eq!(pretrim(&[0.1, 0.2], 5), vec![0, 1]);
    }
}
