//! Index arithmetic on F_p^k under the little-endian mixed-radix encoding
//! (coordinate 0 least significant).

use crate::error::{Error, Result};
use crate::field::Fp;

/// Largest `len` for which an explicit addition table is built.
const TABLE_LIMIT: usize = 1024;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    field: Fp,
    dim: usize,
    len: usize,
    powers: Vec<usize>,
}

impl Grid {
    pub fn new(field: Fp, dim: usize) -> Self {
        let p = field.order();
        let powers: Vec<usize> = (0..=dim).map(|k| p.pow(k as u32)).collect();
        Grid {
            field,
            dim,
            len: powers[dim],
            powers,
        }
    }

    /// Grid whose length is exactly `len`; errors unless `len = p^k`.
    pub fn for_len(field: Fp, len: usize) -> Result<Self> {
        let p = field.order();
        let mut dim = 0;
        let mut acc = 1usize;
        while acc < len {
            acc *= p;
            dim += 1;
        }
        if acc != len || len == 0 {
            return Err(Error::NotAPowerOfP { len, p: field.p() });
        }
        Ok(Grid::new(field, dim))
    }

    #[inline]
    pub fn field(&self) -> Fp {
        self.field
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.powers[axis]
    }

    pub fn digits(&self, mut i: usize) -> Vec<u32> {
        let p = self.field.order();
        (0..self.dim)
            .map(|_| {
                let d = (i % p) as u32;
                i /= p;
                d
            })
            .collect()
    }

    pub fn index(&self, digits: &[u32]) -> usize {
        debug_assert_eq!(digits.len(), self.dim);
        digits
            .iter()
            .zip(&self.powers)
            .map(|(&d, &w)| d as usize * w)
            .sum()
    }

    /// Index of the digitwise combination `a + k·b`.
    #[inline]
    pub fn add_scaled(&self, mut a: usize, mut b: usize, k: u32) -> usize {
        let p = self.field.order();
        let k = k as usize;
        let mut out = 0;
        for w in &self.powers[..self.dim] {
            let s = (a % p + k * (b % p)) % p;
            out += s * w;
            a /= p;
            b /= p;
        }
        out
    }

    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        self.add_scaled(a, b, 1)
    }

    #[inline]
    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.add_scaled(a, b, self.field.p() - 1)
    }

    #[inline]
    pub fn scale(&self, a: usize, k: u32) -> usize {
        self.add_scaled(0, a, k % self.field.p())
    }

    #[inline]
    pub fn neg(&self, a: usize) -> usize {
        self.scale(a, self.field.p() - 1)
    }

    /// Dot product of the digit vectors of `a` and `b`, mod p.
    pub fn dot(&self, mut a: usize, mut b: usize) -> u32 {
        let p = self.field.order();
        let mut s = 0usize;
        for _ in 0..self.dim {
            s += (a % p) * (b % p);
            a /= p;
            b /= p;
        }
        (s % p) as u32
    }

    /// Precomputed `a + b` lookup when the grid is small enough.
    pub fn add_table(&self) -> Option<AddTable> {
        (self.len <= TABLE_LIMIT).then(|| {
            let n = self.len;
            let mut t = vec![0u16; n * n];
            for a in 0..n {
                for b in 0..n {
                    t[a * n + b] = self.add(a, b) as u16;
                }
            }
            AddTable { n, table: t }
        })
    }
}

pub struct AddTable {
    n: usize,
    table: Vec<u16>,
}

impl AddTable {
    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        self.table[a * self.n + b] as usize
    }

    /// Row `a + ·`, contiguous over the second argument.
    #[inline]
    pub fn row(&self, a: usize) -> &[u16] {
        &self.table[a * self.n..(a + 1) * self.n]
    }
}
