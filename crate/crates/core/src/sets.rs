//! Test sets in F_p^n: generators, 4-term progression search and the
//! newline-delimited index file format.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Fp;
use crate::grid::Grid;
use crate::linalg::Matrix;
use crate::quadratic::QuadraticForm;
use crate::space::AffineSpace;

/// Membership mask over the canonical points of `F_p^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointSet {
    pub field: Fp,
    pub n: usize,
    pub members: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    p: u32,
    n: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    density: Option<f64>,
}

impl PointSet {
    pub fn new(field: Fp, n: usize, members: Vec<bool>) -> Result<Self> {
        let len = Grid::new(field, n).len();
        if members.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: members.len(),
            });
        }
        Ok(PointSet { field, n, members })
    }

    pub fn space(&self) -> AffineSpace {
        AffineSpace::full(self.field, self.n).expect("set sizes are capped")
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.members.len() as f64
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.members.len()).filter(|&i| self.members[i]).collect()
    }

    /// Header line `{"p":…,"n":…,"count":…,"density":…}` then one index per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            p: self.field.p(),
            n: self.n,
            count: self.count(),
            density: Some(self.density()),
        };
        let io = |e: std::io::Error| Error::Parse(e.to_string());
        writeln!(out, "{}", serde_json::to_string(&header).map_err(|e| Error::Parse(e.to_string()))?).map_err(io)?;
        for i in self.indices() {
            writeln!(out, "{i}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Parse("empty set file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let header: Header = serde_json::from_str(&first).map_err(|e| Error::Parse(format!("header: {e}")))?;
        let field = Fp::new(header.p)?;
        let len = field
            .order()
            .checked_pow(header.n as u32)
            .filter(|&l| l <= crate::space::DEFAULT_MAX_POINTS)
            .ok_or(Error::SpaceTooLarge {
                p: header.p,
                dim: header.n,
                limit: crate::space::DEFAULT_MAX_POINTS,
            })?;
        let mut members = vec![false; len];
        let mut count = 0;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let i: usize = t
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: not an index: {t:?}", lineno + 2)))?;
            if i >= len {
                return Err(Error::Parse(format!("line {}: index {i} out of range", lineno + 2)));
            }
            if std::mem::replace(&mut members[i], true) {
                return Err(Error::Parse(format!("line {}: duplicate index {i}", lineno + 2)));
            }
            count += 1;
        }
        if count != header.count {
            return Err(Error::Parse(format!("header count {} but {count} indices", header.count)));
        }
        PointSet::new(field, header.n, members)
    }
}

/// Each point independently with probability `alpha`.
pub fn random<R: Rng + ?Sized>(field: Fp, n: usize, alpha: f64, rng: &mut R) -> Result<PointSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("density must lie in [0, 1], got {alpha}")));
    }
    let len = Grid::new(field, n).len();
    PointSet::new(field, n, (0..len).map(|_| rng.gen_bool(alpha)).collect())
}

fn random_independent_rows<R: Rng + ?Sized>(field: Fp, n: usize, k: usize, rng: &mut R) -> Vec<Vec<u32>> {
    loop {
        let rows: Vec<Vec<u32>> = (0..k).map(|_| (0..n).map(|_| rng.gen_range(0..field.p())).collect()).collect();
        if k == 0 || Matrix::from_rows(&rows, n).rank(field) == k {
            return rows;
        }
    }
}

/// A uniformly chosen `dim`-dimensional affine subspace of `F_p^n`.
pub fn random_affine_subspace<R: Rng + ?Sized>(field: Fp, n: usize, dim: usize, rng: &mut R) -> Result<AffineSpace> {
    if dim > n {
        return Err(Error::InvalidParameter(format!("dimension {dim} exceeds n = {n}")));
    }
    let basis = random_independent_rows(field, n, dim, rng);
    let t = (0..n).map(|_| rng.gen_range(0..field.p())).collect();
    AffineSpace::new(field, basis, crate::space::Point(t))
}

/// A random affine subspace of codimension `codim`.
pub fn subspace<R: Rng + ?Sized>(field: Fp, n: usize, codim: usize, rng: &mut R) -> Result<PointSet> {
    if codim > n {
        return Err(Error::InvalidParameter(format!("codimension {codim} exceeds n = {n}")));
    }
    let normals = random_independent_rows(field, n, codim, rng);
    let values: Vec<u32> = (0..codim).map(|_| rng.gen_range(0..field.p())).collect();
    let w = AffineSpace::full(field, n)?;
    let members = w
        .enumerate()
        .map(|x| normals.iter().zip(&values).all(|(a, &v)| field.dot(a, &x.0) == v))
        .collect();
    PointSet::new(field, n, members)
}

/// `{x : φ(x) = value}`.
pub fn quad_level_set(phi: &QuadraticForm, value: u32) -> Result<PointSet> {
    let w = phi.domain();
    if w.dim() != w.ambient_dim() {
        return Err(Error::InvalidParameter("level sets are taken on the whole space".into()));
    }
    let f = w.field();
    let members = phi.values().iter().map(|&v| v == value % f.p()).collect();
    PointSet::new(f, w.ambient_dim(), members)
}

/// `x_0² + … + x_{k−1}²`.
pub fn sum_of_squares(field: Fp, n: usize, k: usize) -> Result<QuadraticForm> {
    let w = AffineSpace::full(field, n)?;
    let mono: Vec<(usize, usize, u32)> = (0..k.min(n)).map(|i| (i, i, 1)).collect();
    QuadraticForm::from_monomials(w, &mono, &[], 0)
}

/// Union of `k` random affine hyperplanes.
pub fn union_subspaces<R: Rng + ?Sized>(field: Fp, n: usize, k: usize, rng: &mut R) -> Result<PointSet> {
    let len = Grid::new(field, n).len();
    let mut members = vec![false; len];
    for _ in 0..k {
        let h = subspace(field, n, 1.min(n), rng)?;
        for (m, b) in members.iter_mut().zip(h.members) {
            *m |= b;
        }
    }
    PointSet::new(field, n, members)
}

/// Whether `x` completes a progression with distinct terms together with
/// three members of `set`.
fn completes_progression(grid: &Grid, set: &[bool], x: usize) -> bool {
    let f = grid.field();
    let n = grid.len();
    for h in 1..n {
        for pos in 0..4u32 {
            let start = grid.add_scaled(x, h, f.neg(pos));
            if (0..4u32).filter(|&j| j != pos).all(|j| set[grid.add_scaled(start, h, j)]) {
                return true;
            }
        }
    }
    false
}

/// Greedy progression-free set. Seed 0 scans points in canonical order;
/// other seeds scan a seeded random permutation.
pub fn ap_free_greedy(field: Fp, n: usize, seed: u64) -> Result<PointSet> {
    let grid = Grid::new(field, n);
    let mut order: Vec<usize> = (0..grid.len()).collect();
    if seed != 0 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut members = vec![false; order.len()];
    for &x in &order {
        if !completes_progression(&grid, &members, x) {
            members[x] = true;
        }
    }
    PointSet::new(field, n, members)
}

/// Greedy thinning of an existing set: keeps members in canonical order while
/// no progression with distinct terms appears.
pub fn thin_to_ap_free(set: &PointSet) -> PointSet {
    let grid = Grid::new(set.field, set.n);
    let mut members = vec![false; set.members.len()];
    for x in (0..members.len()).filter(|&x| set.members[x]) {
        if !completes_progression(&grid, &members, x) {
            members[x] = true;
        }
    }
    PointSet {
        field: set.field,
        n: set.n,
        members,
    }
}

/// First `(x, h)` with `h ≠ 0` and `x + ih ∈ A` for `i = 0..3`, in
/// lexicographic order of `(x, h)` indices.
pub fn find_progression(space: &AffineSpace, members: &[bool]) -> Option<(usize, usize)> {
    let grid = space.grid();
    let n = grid.len();
    for x in (0..n).filter(|&x| members[x]) {
        for h in 1..n {
            let x1 = grid.add(x, h);
            if !members[x1] {
                continue;
            }
            let x2 = grid.add(x1, h);
            if members[x2] && members[grid.add(x2, h)] {
                return Some((x, h));
            }
        }
    }
    None
}
