//! Dense LU factorization with partial pivoting, `P A = L U`.

#[derive(Clone, Debug)]
pub(crate) struct DenseLu {
    n: usize,
    /// Unit-lower `L` below the diagonal and `U` on and above it, row-major.
    lu: Vec<f64>,
    /// Row `i` of `P A` is row `perm[i]` of `A`.
    perm: Vec<usize>,
}

#[derive(Debug)]
pub(crate) struct Singular {
    pub(crate) column: usize,
}

impl DenseLu {
    /// Factors a row-major `n x n` matrix.
    pub(crate) fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, Singular> {
        debug_assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= 1e-14 * scale {
                return Err(Singular { column: k });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != 0.0 {
                    let (top, bottom) = a.split_at_mut(i * n);
                    let row_k = &top[k * n + k + 1..k * n + n];
                    let row_i = &mut bottom[k + 1..n];
                    for (x, y) in row_i.iter_mut().zip(row_k) {
                        *x -= f * y;
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: a, perm })
    }

    /// Solves `A x = b` in place.
    pub(crate) fn solve(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.n;
        work.clear();
        work.extend(self.perm.iter().map(|&p| b[p]));
        for i in 0..n {
            let row = &self.lu[i * n..i * n + i];
            let s: f64 = row.iter().zip(&work[..i]).map(|(l, x)| l * x).sum();
            work[i] -= s;
        }
        for i in (0..n).rev() {
            let row = &self.lu[i * n + i + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&work[i + 1..]).map(|(u, x)| u * x).sum();
            work[i] = (work[i] - s) / self.lu[i * n + i];
        }
        b.copy_from_slice(work);
    }

    /// Solves `A^T x = b` in place.
    pub(crate) fn solve_transpose(&self, b: &mut [f64], work: &mut Vec<f64>) {
        let n = self.n;
        work.clear();
        work.extend_from_slice(b);
        // U^T t = b, forward
        for i in 0..n {
            let mut s = work[i];
            for k in 0..i {
                s -= self.lu[k * n + i] * work[k];
            }
            work[i] = s / self.lu[i * n + i];
        }
        // L^T v = t, backward, unit diagonal
        for i in (0..n).rev() {
            let mut s = work[i];
            for k in (i + 1)..n {
                s -= self.lu[k * n + i] * work[k];
            }
            work[i] = s;
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = work[i];
        }
    }
}
