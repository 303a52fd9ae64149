//! Dense linear algebra over F_p: row reduction, rank, kernels, and
//! congruence diagonalisation of symmetric matrices.

use serde::{Deserialize, Serialize};

use crate::field::Fp;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u32>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<u32>) -> Self {
        assert_eq!(rows * cols, data.len());
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: u32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn mul(&self, other: &Matrix, f: Fp) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let s: u64 = (0..self.cols)
                    .map(|k| (self.get(i, k) * other.get(k, j)) as u64)
                    .sum();
                out.set(i, j, (s % f.p() as u64) as u32);
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[u32], f: Fp) -> Vec<u32> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| f.dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, k: u32, f: Fp) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f.mul(x, k)).collect(),
        }
    }

    /// `self + k * other`.
    pub fn add_scaled(&self, other: &Matrix, k: u32, f: Fp) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f.add(a, f.mul(b, k)))
                .collect(),
        }
    }

    /// `B * self * Bᵀ` for a matrix `B` whose rows are vectors in the
    /// coordinate space of `self`.
    pub fn congruent(&self, b: &Matrix, f: Fp) -> Matrix {
        b.mul(self, f).mul(&b.transpose(), f)
    }

    /// Reduced row echelon form in place; returns the pivot columns.
    pub fn rref(&mut self, f: Fp) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(sel) = (row..self.rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            if sel != row {
                for j in 0..self.cols {
                    self.data.swap(sel * self.cols + j, row * self.cols + j);
                }
            }
            let inv = f.inv(self.get(row, col)).expect("nonzero pivot");
            for j in 0..self.cols {
                let v = f.mul(self.get(row, j), inv);
                self.set(row, j, v);
            }
            for r in 0..self.rows {
                if r == row {
                    continue;
                }
                let k = self.get(r, col);
                if k == 0 {
                    continue;
                }
                for j in 0..self.cols {
                    let v = f.sub(self.get(r, j), f.mul(k, self.get(row, j)));
                    self.set(r, j, v);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self, f: Fp) -> usize {
        self.clone().rref(f).len()
    }

    /// Basis (as rows) of the right kernel `{x : self · x = 0}`.
    pub fn kernel(&self, f: Fp) -> Vec<Vec<u32>> {
        let mut m = self.clone();
        let pivots = m.rref(f);
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&fc| {
                let mut v = vec![0u32; self.cols];
                v[fc] = 1;
                for (r, &pc) in pivots.iter().enumerate() {
                    v[pc] = f.neg(m.get(r, fc));
                }
                v
            })
            .collect()
    }

    /// Some solution of `self · x = b`, if one exists.
    pub fn solve(&self, b: &[u32], f: Fp) -> Option<Vec<u32>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = Matrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug.set(i, j, self.get(i, j));
            }
            aug.set(i, self.cols, b[i]);
        }
        let pivots = aug.rref(f);
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![0u32; self.cols];
        for (r, &pc) in pivots.iter().enumerate() {
            x[pc] = aug.get(r, self.cols);
        }
        Some(x)
    }

    /// Inverse of a square matrix, if invertible.
    pub fn inverse(&self, f: Fp) -> Option<Matrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut aug = Matrix::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, self.get(i, j));
            }
            aug.set(i, n + i, 1);
        }
        let pivots = aug.rref(f);
        if pivots.len() < n || pivots[n - 1] >= n {
            return None;
        }
        let mut inv = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv.set(i, j, aug.get(i, n + j));
            }
        }
        Some(inv)
    }

    /// Congruence diagonalisation of a symmetric matrix: returns `(S, diag)`
    /// with `Sᵀ · self · S = diag(diag)` and `S` invertible. Needs p odd.
    pub fn diagonalize_symmetric(&self, f: Fp) -> (Matrix, Vec<u32>) {
        assert!(self.is_symmetric());
        let n = self.rows;
        let mut a = self.clone();
        // Columns of S accumulate the change of basis.
        let mut s = Matrix::identity(n);
        let add_col_row = |a: &mut Matrix, s: &mut Matrix, dst: usize, src: usize, k: u32| {
            // basis change e_dst += k e_src: column op then matching row op.
            for r in 0..n {
                let v = f.add(a.get(r, dst), f.mul(k, a.get(r, src)));
                a.set(r, dst, v);
            }
            for c in 0..n {
                let v = f.add(a.get(dst, c), f.mul(k, a.get(src, c)));
                a.set(dst, c, v);
            }
            for r in 0..n {
                let v = f.add(s.get(r, dst), f.mul(k, s.get(r, src)));
                s.set(r, dst, v);
            }
        };
        let swap = |a: &mut Matrix, s: &mut Matrix, i: usize, j: usize| {
            for r in 0..n {
                let (x, y) = (a.get(r, i), a.get(r, j));
                a.set(r, i, y);
                a.set(r, j, x);
            }
            for c in 0..n {
                let (x, y) = (a.get(i, c), a.get(j, c));
                a.set(i, c, y);
                a.set(j, c, x);
            }
            for r in 0..n {
                let (x, y) = (s.get(r, i), s.get(r, j));
                s.set(r, i, y);
                s.set(r, j, x);
            }
        };
        for i in 0..n {
            if a.get(i, i) == 0 {
                if let Some(j) = (i + 1..n).find(|&j| a.get(j, j) != 0) {
                    swap(&mut a, &mut s, i, j);
                } else if let Some(j) = (i + 1..n).find(|&j| a.get(i, j) != 0) {
                    // a_ii = a_jj = 0, a_ij != 0: e_i += e_j gives 2 a_ij on the diagonal.
                    add_col_row(&mut a, &mut s, i, j, 1);
                } else {
                    continue;
                }
            }
            let d = a.get(i, i);
            let dinv = f.inv(d).expect("nonzero diagonal");
            for j in i + 1..n {
                let k = a.get(i, j);
                if k != 0 {
                    add_col_row(&mut a, &mut s, j, i, f.neg(f.mul(k, dinv)));
                }
            }
        }
        let diag = (0..n).map(|i| a.get(i, i)).collect();
        (s, diag)
    }
}

/// Extends the independent rows `base` (vectors in F_p^dim) by standard basis
/// vectors to a basis of F_p^dim; returns only the added vectors.
pub fn complement(base: &[Vec<u32>], dim: usize, f: Fp) -> Vec<Vec<u32>> {
    let mut rows: Vec<Vec<u32>> = base.to_vec();
    let mut added = Vec::new();
    let mut rank = if rows.is_empty() {
        0
    } else {
        Matrix::from_rows(&rows, dim).rank(f)
    };
    for e in 0..dim {
        if rank == dim {
            break;
        }
        let mut v = vec![0u32; dim];
        v[e] = 1;
        rows.push(v.clone());
        let r = Matrix::from_rows(&rows, dim).rank(f);
        if r > rank {
            rank = r;
            added.push(v);
        } else {
            rows.pop();
        }
    }
    added
}
