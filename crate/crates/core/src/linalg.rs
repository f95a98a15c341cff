//! Small dense linear algebra: LU with partial pivoting.

/// Pivots below this magnitude are treated as singular.
pub(crate) const PIVOT_TOL: f64 = 1e-300;

/// LU factorisation `P A = L U` of a row-major square matrix.
#[derive(Clone, Debug)]
pub(crate) struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    /// Factorise `a` (row-major, `n x n`). Returns `None` when a pivot
    /// falls below [`PIVOT_TOL`].
    pub(crate) fn new(n: usize, mut a: Vec<f64>) -> Option<Lu> {
        debug_assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best.is_nan() || best < PIVOT_TOL {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / pivot;
                a[r * n + k] = f;
                if f != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= f * a[k * n + c];
                    }
                }
            }
        }
        Some(Lu { n, lu: a, perm, sign })
    }

    /// `(sign, ln |det|)`.
    pub(crate) fn log_det(&self) -> (f64, f64) {
        let mut sign = self.sign;
        let mut log = 0.0;
        for k in 0..self.n {
            let d = self.lu[k * self.n + k];
            if d < 0.0 {
                sign = -sign;
            }
            log += d.abs().ln();
        }
        (sign, log)
    }

    /// Solve `A x = b` in place.
    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for (l, yj) in self.lu[i * n..i * n + i].iter().zip(&y[..i]) {
                s -= l * yj;
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for (u, yj) in self.lu[i * n + i + 1..(i + 1) * n].iter().zip(&y[i + 1..]) {
                s -= u * yj;
            }
            y[i] = s / self.lu[i * n + i];
        }
        b.copy_from_slice(&y);
    }

    /// Row-major inverse.
    pub(crate) fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|x| *x = 0.0);
            col[j] = 1.0;
            self.solve(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn determinant_and_inverse_of_small_matrix() {
        // [[0, 2], [3, 4]] needs a row swap; det = -6
        let lu = Lu::new(2, vec![0.0, 2.0, 3.0, 4.0]).unwrap();
        let (s, l) = lu.log_det();
        assert_eq!(s, -1.0);
        assert!((l - 6f64.ln()).abs() < 1e-14);
        let inv = lu.inverse();
        let expect = [-4.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 0.0];
        for (a, b) in inv.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_detected() {
        assert!(Lu::new(2, vec![1.0, 2.0, 2.0, 4.0]).is_none());
    }
}
