//! Dense least squares by Householder QR with column pivoting, completed to a
//! complete orthogonal decomposition for rank-deficient systems.

use crate::error::{Error, Result};
use crate::scalar::{count, Real};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::arg(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        self.data
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(&self.data[r * self.cols..(r + 1) * self.cols]) {
                *o = *o + a * yr;
            }
        }
        out
    }

    fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }
}

/// Householder QR factorization A·P = Q·R stored compactly.
#[derive(Debug, Clone)]
struct Qr<T> {
    // R in the upper triangle, Householder vectors (unit leading entry
    // implied) below the diagonal.
    packed: Matrix<T>,
    tau: Vec<T>,
    perm: Vec<usize>,
}

fn householder_qr<T: Real>(mut a: Matrix<T>, pivot: bool) -> Qr<T> {
    let (m, n) = (a.rows, a.cols);
    let steps = m.min(n);
    let mut tau = vec![T::zero(); steps];
    let mut perm: Vec<usize> = (0..n).collect();

    for k in 0..steps {
        if pivot {
            let norm2 = |a: &Matrix<T>, c: usize| -> T {
                (k..m).map(|r| a.get(r, c) * a.get(r, c)).sum()
            };
            let (best, _) = (k..n)
                .map(|c| (c, norm2(&a, c)))
                .fold((k, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best != k {
                for r in 0..m {
                    let tmp = a.get(r, k);
                    a.set(r, k, a.get(r, best));
                    a.set(r, best, tmp);
                }
                perm.swap(k, best);
            }
        }

        let x0 = a.get(k, k);
        let sigma: T = (k + 1..m).map(|r| a.get(r, k) * a.get(r, k)).sum();
        if sigma == T::zero() {
            tau[k] = T::zero();
            continue;
        }
        let norm = (x0 * x0 + sigma).sqrt();
        let beta = if x0 >= T::zero() { -norm } else { norm };
        tau[k] = (beta - x0) / beta;
        let scale = T::one() / (x0 - beta);
        for r in k + 1..m {
            a.set(r, k, a.get(r, k) * scale);
        }
        a.set(k, k, beta);

        for c in k + 1..n {
            let mut dot = a.get(k, c);
            for r in k + 1..m {
                dot = dot + a.get(r, k) * a.get(r, c);
            }
            let f = tau[k] * dot;
            a.set(k, c, a.get(k, c) - f);
            for r in k + 1..m {
                a.set(r, c, a.get(r, c) - f * a.get(r, k));
            }
        }
    }
    Qr {
        packed: a,
        tau,
        perm,
    }
}

impl<T: Real> Qr<T> {
    /// Overwrites `b` with Qᵀ·b.
    fn apply_qt(&self, b: &mut [T]) {
        let m = self.packed.rows;
        for (k, &tau) in self.tau.iter().enumerate() {
            if tau == T::zero() {
                continue;
            }
            let mut dot = b[k];
            for r in k + 1..m {
                dot = dot + self.packed.get(r, k) * b[r];
            }
            let f = tau * dot;
            b[k] = b[k] - f;
            for r in k + 1..m {
                b[r] = b[r] - f * self.packed.get(r, k);
            }
        }
    }

    /// Overwrites `x` (length m) with Q·x.
    fn apply_q(&self, x: &mut [T]) {
        let m = self.packed.rows;
        for (k, &tau) in self.tau.iter().enumerate().rev() {
            if tau == T::zero() {
                continue;
            }
            let mut dot = x[k];
            for r in k + 1..m {
                dot = dot + self.packed.get(r, k) * x[r];
            }
            let f = tau * dot;
            x[k] = x[k] - f;
            for r in k + 1..m {
                x[r] = x[r] - f * self.packed.get(r, k);
            }
        }
    }

    fn numerical_rank(&self) -> usize {
        let steps = self.tau.len();
        if steps == 0 {
            return 0;
        }
        let lead = self.packed.get(0, 0).abs();
        if lead == T::zero() {
            return 0;
        }
        let tol = count::<T>(self.packed.rows.max(self.packed.cols)) * T::epsilon() * lead;
        (0..steps)
            .take_while(|&k| self.packed.get(k, k).abs() > tol)
            .count()
    }
}

/// Least-squares solution and its numerical rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution<T> {
    pub x: Vec<T>,
    pub rank: usize,
}

/// Minimum-norm minimizer of ‖A·x − b‖².
pub fn lstsq<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<LstsqSolution<T>> {
    if b.len() != a.rows {
        return Err(Error::arg(format!(
            "right-hand side has {} entries, matrix has {} rows",
            b.len(),
            a.rows
        )));
    }
    let n = a.cols;
    let qr = householder_qr(a.clone(), true);
    let rank = qr.numerical_rank();
    let mut qtb = b.to_vec();
    qr.apply_qt(&mut qtb);

    let mut y = vec![T::zero(); n];
    if rank == n {
        back_substitute(&qr.packed, &qtb[..n], &mut y);
    } else if rank > 0 {
        // [R11 R12] = S̃ᵀ·Q2ᵀ from the QR of its transpose; the minimum-norm
        // solution of [R11 R12]·y = c is y = Q2·S̃⁻ᵀ·c.
        let mut top = Matrix::zeros(rank, n);
        for r in 0..rank {
            for c in r..n {
                top.set(r, c, qr.packed.get(r, c));
            }
        }
        let qr2 = householder_qr(top.transpose(), false);
        let mut w = vec![T::zero(); n];
        for i in 0..rank {
            let mut acc = qtb[i];
            for j in 0..i {
                acc = acc - qr2.packed.get(j, i) * w[j];
            }
            w[i] = acc / qr2.packed.get(i, i);
        }
        qr2.apply_q(&mut w);
        y = w;
    }
    let mut x = vec![T::zero(); n];
    for (k, &p) in qr.perm.iter().enumerate() {
        x[p] = y[k];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("least-squares solution is not finite"));
    }
    Ok(LstsqSolution { x, rank })
}

/// Minimizer of ‖A·x − b‖² + λ‖x‖², solved as an augmented least-squares
/// problem.
pub fn lstsq_ridge<T: Real>(a: &Matrix<T>, b: &[T], lambda: T) -> Result<LstsqSolution<T>> {
    if !(lambda >= T::zero()) {
        return Err(Error::arg(format!("ridge parameter must be >= 0, got {lambda}")));
    }
    if lambda == T::zero() {
        return lstsq(a, b);
    }
    let (m, n) = (a.rows, a.cols);
    let mut aug = Matrix::zeros(m + n, n);
    aug.data[..m * n].copy_from_slice(&a.data);
    let s = lambda.sqrt();
    for i in 0..n {
        aug.set(m + i, i, s);
    }
    let mut rhs = b.to_vec();
    rhs.resize(m + n, T::zero());
    lstsq(&aug, &rhs)
}

fn back_substitute<T: Real>(r: &Matrix<T>, c: &[T], y: &mut [T]) {
    let n = y.len();
    for i in (0..n).rev() {
        let mut acc = c[i];
        for j in i + 1..n {
            acc = acc - r.get(i, j) * y[j];
        }
        y[i] = acc / r.get(i, i);
    }
}
