//! Dense linear algebra over [`Real`]: packed lower-triangular storage for the
//! large Gram/Cholesky work and a small square matrix type for `P_I`.

use rug::ops::NegAssign;
use rug::Float;

use crate::precision::{Precision, Real};

/// Lower triangle of an `n × n` matrix stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Packed {
    n: usize,
    data: Vec<Real>,
}

#[inline]
fn tri(i: usize) -> usize {
    i * (i + 1) / 2
}

impl Packed {
    pub fn zeros(n: usize, prec: Precision) -> Self {
        Packed {
            n,
            data: vec![prec.zero(); tri(n)],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Real) -> Self {
        let mut data = Vec::with_capacity(tri(n));
        for i in 0..n {
            for j in 0..=i {
                data.push(f(i, j));
            }
        }
        Packed { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)` with `j ≤ i`.
    pub fn get(&self, i: usize, j: usize) -> &Real {
        debug_assert!(j <= i && i < self.n);
        &self.data[tri(i) + j]
    }

    /// Symmetric read: `(i, j)` or `(j, i)`, whichever is stored.
    pub fn sym(&self, i: usize, j: usize) -> &Real {
        if j <= i {
            self.get(i, j)
        } else {
            self.get(j, i)
        }
    }

    /// Stored row `i`, i.e. entries `(i, 0..=i)`.
    pub fn row(&self, i: usize) -> &[Real] {
        &self.data[tri(i)..tri(i + 1)]
    }

    fn row_mut(&mut self, i: usize) -> &mut [Real] {
        &mut self.data[tri(i)..tri(i + 1)]
    }

    /// Truncates to the leading `n × n` block.
    pub fn truncate(&mut self, n: usize) {
        if n < self.n {
            self.n = n;
            self.data.truncate(tri(n));
        }
    }

    /// In-place Cholesky–Banachiewicz factorization `A = L Lᵀ`.
    ///
    /// On failure returns the index of the first pivot that is not strictly
    /// positive; the contents are then partially overwritten.
    pub fn cholesky_in_place(&mut self) -> Result<(), usize> {
        for i in 0..self.n {
            let (head, tail) = self.data.split_at_mut(tri(i));
            let row_i = &mut tail[..=i];
            for j in 0..=i {
                let row_j: &[Real] = if j < i { &head[tri(j)..tri(j) + j + 1] } else { &[] };
                let mut s = row_i[j].clone();
                if j < i {
                    for k in 0..j {
                        s -= &row_i[k] * &row_j[k];
                    }
                    s /= &row_j[j];
                } else {
                    for k in 0..i {
                        s -= row_i[k].clone().square();
                    }
                    if s.is_sign_negative() || s.is_zero() || !s.is_finite() {
                        return Err(i);
                    }
                    s.sqrt_mut();
                }
                row_i[j] = s;
            }
        }
        Ok(())
    }

    /// Inverse of a lower-triangular factor (stored in `self`).
    pub fn lower_inverse(&self) -> Packed {
        let prec = self.data.first().map(|x| x.prec()).unwrap_or(64);
        let mut inv = Packed {
            n: self.n,
            data: Vec::with_capacity(self.data.len()),
        };
        for i in 0..self.n {
            let li = self.row(i);
            let mut acc: Vec<Real> = vec![Float::new(prec); i + 1];
            for k in 0..i {
                let xk = inv.row(k);
                for j in 0..=k {
                    acc[j] += &li[k] * &xk[j];
                }
            }
            let diag = Float::with_val(prec, 1) / &li[i];
            for a in acc.iter_mut().take(i) {
                *a *= &diag;
                a.neg_assign();
            }
            acc[i] = diag;
            inv.data.extend(acc);
        }
        inv
    }

    /// Solves `L x = b` by forward substitution for a lower factor `L`.
    pub fn forward_solve(&self, b: &[Real]) -> Vec<Real> {
        let mut x: Vec<Real> = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut s = b[i].clone();
            for k in 0..i {
                s -= &row[k] * &x[k];
            }
            s /= &row[i];
            x.push(s);
        }
        x
    }

    /// Solves `Lᵀ x = b` by back substitution for a lower factor `L`.
    pub fn backward_solve_transposed(&self, b: &[Real]) -> Vec<Real> {
        let mut x: Vec<Real> = b.to_vec();
        for i in (0..self.n).rev() {
            x[i] /= self.get(i, i);
            let xi = x[i].clone();
            let row = self.row(i);
            for k in 0..i {
                x[k] -= &row[k] * &xi;
            }
        }
        x
    }

    pub fn set(&mut self, i: usize, j: usize, v: Real) {
        self.row_mut(i)[j] = v;
    }
}

/// Small dense square matrix, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<Real>,
}

impl Matrix {
    pub fn zeros(n: usize, prec: Precision) -> Self {
        Matrix {
            n,
            data: vec![prec.zero(); n * n],
        }
    }

    pub fn identity(n: usize, prec: Precision) -> Self {
        let mut m = Self::zeros(n, prec);
        for i in 0..n {
            m[(i, i)] = prec.int(1);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Real>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n, "matrix must be square");
            data.extend(r);
        }
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn precision_bits(&self) -> u32 {
        self.data.first().map(|x| x.prec()).unwrap_or(64)
    }

    pub fn row(&self, i: usize) -> &[Real] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }

    /// Leading `k × k` block.
    pub fn submatrix_leading(&self, k: usize) -> Matrix {
        let mut data = Vec::with_capacity(k * k);
        for i in 0..k {
            data.extend_from_slice(&self.row(i)[..k]);
        }
        Matrix { n: k, data }
    }

    /// Trailing block with the first `skip` rows and columns removed.
    pub fn submatrix(&self, skip: usize) -> Matrix {
        let m = self.n - skip;
        let mut data = Vec::with_capacity(m * m);
        for i in skip..self.n {
            data.extend_from_slice(&self.row(i)[skip..]);
        }
        Matrix { n: m, data }
    }

    pub fn mul_vec(&self, v: &[Real]) -> Vec<Real> {
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `⟨v|A|v⟩`.
    pub fn quad_form(&self, v: &[Real]) -> Real {
        dot(v, &self.mul_vec(v))
    }

    /// Frobenius norm, used to scale residual tolerances.
    pub fn frobenius(&self) -> Real {
        let mut s = Float::new(self.precision_bits());
        for x in &self.data {
            s += x.clone().square();
        }
        s.sqrt()
    }

    /// Cholesky factor as a packed lower triangle, or the failing pivot.
    pub fn cholesky(&self) -> Result<Packed, usize> {
        let mut p = Packed::from_fn(self.n, |i, j| self[(i, j)].clone());
        p.cholesky_in_place()?;
        Ok(p)
    }

    /// Solves `A x = b` with Gaussian elimination and partial pivoting.
    /// Returns `None` when a pivot vanishes exactly.
    pub fn lu_solve(&self, b: &[Real]) -> Option<Vec<Real>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x: Vec<Real> = b.to_vec();
        for col in 0..n {
            let piv = (col..n).max_by(|&r, &s| {
                a[r * n + col]
                    .as_abs()
                    .partial_cmp(&*a[s * n + col].as_abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })?;
            if a[piv * n + col].is_zero() {
                return None;
            }
            if piv != col {
                for k in 0..n {
                    a.swap(piv * n + k, col * n + k);
                }
                x.swap(piv, col);
            }
            for r in col + 1..n {
                let f = Float::with_val(a[r * n + col].prec(), &a[r * n + col] / &a[col * n + col]);
                for k in col..n {
                    let t = Float::with_val(f.prec(), &f * &a[col * n + k]);
                    a[r * n + k] -= t;
                }
                let t = Float::with_val(f.prec(), &f * &x[col]);
                x[r] -= t;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = Float::with_val(x[i].prec(), &a[i * n + k] * &x[k]);
                x[i] -= t;
            }
            x[i] /= &a[i * n + i];
        }
        Some(x)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = Real;
    fn index(&self, (i, j): (usize, usize)) -> &Real {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Real {
        &mut self.data[i * self.n + j]
    }
}

pub fn dot(a: &[Real], b: &[Real]) -> Real {
    let prec = a.first().map(|x| x.prec()).unwrap_or(64);
    let mut s = Float::new(prec);
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm(v: &[Real]) -> Real {
    dot(v, v).sqrt()
}

pub fn normalize(v: &mut [Real]) {
    let n = norm(v);
    for x in v.iter_mut() {
        *x /= &n;
    }
}
