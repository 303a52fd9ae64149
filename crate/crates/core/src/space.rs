//! Points of F_p^n and affine subspaces `W = w + Ẇ` with canonical enumeration.
//!
//! A space stores a basis of Ẇ and a translate `w`. The point with canonical
//! index `i` is `w + Σ c_j b_j` where `c` is the little-endian base-p expansion
//! of `i`, so index 0 is the translate itself. Every dense function array in
//! the crate is laid out in this order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Fp;
use crate::grid::Grid;
use crate::linalg::{complement, Matrix};

/// Default cap on `p^dim` for any space that gets enumerated.
pub const DEFAULT_MAX_POINTS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<u32>);

impl Point {
    pub fn zero(n: usize) -> Self {
        Point(vec![0; n])
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn add(&self, other: &Point, f: Fp) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(&a, &b)| f.add(a, b)).collect())
    }

    pub fn sub(&self, other: &Point, f: Fp) -> Point {
        Point(self.0.iter().zip(&other.0).map(|(&a, &b)| f.sub(a, b)).collect())
    }

    pub fn scale(&self, k: u32, f: Fp) -> Point {
        Point(self.0.iter().map(|&a| f.mul(a, k)).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// Canonical index in the full space F_p^n.
    pub fn index(&self, f: Fp) -> usize {
        let p = f.order();
        self.0.iter().rev().fold(0, |acc, &c| acc * p + c as usize)
    }

    pub fn from_index(index: usize, n: usize, f: Fp) -> Point {
        Point(Grid::new(f, n).digits(index))
    }
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    p: u32,
    ambient_dim: usize,
    basis: Vec<Vec<u32>>,
    translate: Vec<u32>,
}

/// Coset `w + span(basis)` in F_p^n.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct AffineSpace {
    field: Fp,
    ambient_dim: usize,
    basis: Vec<Vec<u32>>,
    translate: Vec<u32>,
    // coordinate extraction: pivot columns of the basis and the inverse of the
    // basis restricted to them.
    pivots: Vec<usize>,
    pivot_inv: Matrix,
}

impl PartialEq for AffineSpace {
    fn eq(&self, other: &Self) -> bool {
        self.field == other.field
            && self.ambient_dim == other.ambient_dim
            && self.basis == other.basis
            && self.translate == other.translate
    }
}

impl Eq for AffineSpace {}

impl TryFrom<SpaceRepr> for AffineSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        let field = Fp::new(r.p)?;
        if r.translate.len() != r.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: r.ambient_dim,
                got: r.translate.len(),
            });
        }
        AffineSpace::new(field, r.basis, Point(r.translate))
    }
}

impl From<AffineSpace> for SpaceRepr {
    fn from(s: AffineSpace) -> Self {
        SpaceRepr {
            p: s.field.p(),
            ambient_dim: s.ambient_dim,
            basis: s.basis,
            translate: s.translate,
        }
    }
}

impl AffineSpace {
    /// The whole space F_p^n with the standard basis.
    pub fn full(field: Fp, n: usize) -> Result<Self> {
        let basis = (0..n)
            .map(|i| {
                let mut e = vec![0; n];
                e[i] = 1;
                e
            })
            .collect();
        AffineSpace::new(field, basis, Point::zero(n))
    }

    pub fn new(field: Fp, basis: Vec<Vec<u32>>, translate: Point) -> Result<Self> {
        AffineSpace::with_limit(field, basis, translate, DEFAULT_MAX_POINTS)
    }

    pub fn with_limit(
        field: Fp,
        basis: Vec<Vec<u32>>,
        translate: Point,
        max_points: usize,
    ) -> Result<Self> {
        let n = translate.dim();
        let p = field.p();
        for b in &basis {
            if b.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
        }
        if basis.iter().flatten().chain(&translate.0).any(|&x| x >= p) {
            return Err(Error::InvalidParameter(format!(
                "coordinates must be residues in [0, {p})"
            )));
        }
        let dim = basis.len();
        match (field.order()).checked_pow(dim as u32) {
            Some(len) if len <= max_points => {}
            _ => {
                return Err(Error::SpaceTooLarge {
                    p,
                    dim,
                    limit: max_points,
                })
            }
        }
        let (pivots, pivot_inv) = if dim == 0 {
            (Vec::new(), Matrix::zeros(0, 0))
        } else {
            let bm = Matrix::from_rows(&basis, n);
            let mut red = bm.clone();
            let pivots = red.rref(field);
            if pivots.len() < dim {
                return Err(Error::DependentBasis);
            }
            let mut bp = Matrix::zeros(dim, dim);
            for j in 0..dim {
                for (k, &pc) in pivots.iter().enumerate() {
                    bp.set(j, k, bm.get(j, pc));
                }
            }
            let inv = bp.inverse(field).ok_or(Error::DependentBasis)?;
            (pivots, inv)
        };
        Ok(AffineSpace {
            field,
            ambient_dim: n,
            basis,
            translate: translate.0,
            pivots,
            pivot_inv,
        })
    }

    #[inline]
    pub fn field(&self) -> Fp {
        self.field
    }

    #[inline]
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `|W| = p^dim`.
    #[inline]
    pub fn len(&self) -> usize {
        self.field.order().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn basis(&self) -> &[Vec<u32>] {
        &self.basis
    }

    pub fn translate(&self) -> Point {
        Point(self.translate.clone())
    }

    pub fn basis_matrix(&self) -> Matrix {
        Matrix::from_rows(&self.basis, self.ambient_dim)
    }

    /// Index arithmetic in basis coordinates.
    pub fn grid(&self) -> Grid {
        Grid::new(self.field, self.dim())
    }

    /// `w + Σ coeffs_j b_j`.
    pub fn embed(&self, coeffs: &[u32]) -> Point {
        Point(self.embed_direction(coeffs, Some(&self.translate)))
    }

    /// `Σ coeffs_j b_j` (+ optional offset).
    fn embed_direction(&self, coeffs: &[u32], offset: Option<&[u32]>) -> Vec<u32> {
        let f = self.field;
        let mut acc: Vec<u64> = match offset {
            Some(o) => o.iter().map(|&x| x as u64).collect(),
            None => vec![0; self.ambient_dim],
        };
        for (c, b) in coeffs.iter().zip(&self.basis) {
            if *c == 0 {
                continue;
            }
            for (a, &x) in acc.iter_mut().zip(b) {
                *a += (*c * x) as u64;
            }
        }
        acc.into_iter().map(|a| (a % f.p() as u64) as u32).collect()
    }

    /// Direction vector of Ẇ with the given basis coefficients.
    pub fn direction(&self, coeffs: &[u32]) -> Point {
        Point(self.embed_direction(coeffs, None))
    }

    pub fn point(&self, index: usize) -> Point {
        self.embed(&self.grid().digits(index))
    }

    pub fn enumerate(&self) -> impl Iterator<Item = Point> + '_ {
        let g = self.grid();
        (0..self.len()).map(move |i| self.embed(&g.digits(i)))
    }

    /// Basis coefficients of a direction vector, if it lies in Ẇ.
    pub fn direction_coords(&self, v: &[u32]) -> Option<Vec<u32>> {
        if v.len() != self.ambient_dim {
            return None;
        }
        let f = self.field;
        let dim = self.dim();
        let c: Vec<u32> = (0..dim)
            .map(|k| {
                let s: u64 = self
                    .pivots
                    .iter()
                    .enumerate()
                    .map(|(j, &pc)| (v[pc] * self.pivot_inv.get(j, k)) as u64)
                    .sum();
                (s % f.p() as u64) as u32
            })
            .collect();
        (self.embed_direction(&c, None) == v).then_some(c)
    }

    /// The `dim × n` matrix `L` with `coords(x) = L·(x − w)` for `x ∈ W`.
    pub fn coordinate_map(&self) -> Matrix {
        let mut l = Matrix::zeros(self.dim(), self.ambient_dim);
        for (j, &pc) in self.pivots.iter().enumerate() {
            for k in 0..self.dim() {
                l.set(k, pc, self.pivot_inv.get(j, k));
            }
        }
        l
    }

    /// Basis coefficients of `x`, if `x ∈ W`.
    pub fn coords(&self, x: &Point) -> Option<Vec<u32>> {
        if x.dim() != self.ambient_dim {
            return None;
        }
        let d: Vec<u32> = x
            .0
            .iter()
            .zip(&self.translate)
            .map(|(&a, &b)| self.field.sub(a, b))
            .collect();
        self.direction_coords(&d)
    }

    pub fn index_of(&self, x: &Point) -> Option<usize> {
        self.coords(x).map(|c| self.grid().index(&c))
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.coords(x).is_some()
    }

    pub fn contains_direction(&self, v: &[u32]) -> bool {
        self.direction_coords(v).is_some()
    }

    /// `other ⊆ self`.
    pub fn contains_space(&self, other: &AffineSpace) -> bool {
        self.field == other.field
            && self.ambient_dim == other.ambient_dim
            && self.contains(&other.translate())
            && other.basis.iter().all(|b| self.contains_direction(b))
    }

    /// Codimension of `self` inside `parent`.
    pub fn codim_in(&self, parent: &AffineSpace) -> Result<usize> {
        if !parent.contains_space(self) {
            return Err(Error::NotContained);
        }
        Ok(parent.dim() - self.dim())
    }

    /// Equality as point sets.
    pub fn same_set(&self, other: &AffineSpace) -> bool {
        self.dim() == other.dim() && self.contains_space(other)
    }

    /// Canonical indices, inside `parent`, of the points of `self` in canonical order.
    pub fn indices_in(&self, parent: &AffineSpace) -> Result<Vec<usize>> {
        let base = parent.coords(&self.translate()).ok_or(Error::NotContained)?;
        let steps: Vec<Vec<u32>> = self
            .basis
            .iter()
            .map(|b| parent.direction_coords(b).ok_or(Error::NotContained))
            .collect::<Result<_>>()?;
        let g = self.grid();
        let pg = parent.grid();
        let f = self.field;
        Ok((0..self.len())
            .map(|i| {
                let c = g.digits(i);
                let mut acc = base.clone();
                for (k, s) in c.iter().zip(&steps) {
                    for (a, &x) in acc.iter_mut().zip(s) {
                        *a = f.add(*a, f.mul(*k, x));
                    }
                }
                pg.index(&acc)
            })
            .collect())
    }

    /// Subspace of `self` described in basis coordinates: translate
    /// `coords(translate_coords)` and directions `Σ v_j b_j` for each row `v`.
    pub fn subspace_from_coords(
        &self,
        basis_coords: &[Vec<u32>],
        translate_coords: &[u32],
    ) -> Result<AffineSpace> {
        let basis = basis_coords
            .iter()
            .map(|v| self.embed_direction(v, None))
            .collect();
        AffineSpace::new(self.field, basis, self.embed(translate_coords))
    }

    /// `W ∩ {x : ⟨normal, x⟩ = value}`. `None` when empty.
    pub fn intersect_with_hyperplane(&self, normal: &[u32], value: u32) -> Option<AffineSpace> {
        assert_eq!(normal.len(), self.ambient_dim);
        let f = self.field;
        let on_w = f.dot(normal, &self.translate);
        let slopes: Vec<u32> = self.basis.iter().map(|b| f.dot(normal, b)).collect();
        let Some(j0) = slopes.iter().position(|&a| a != 0) else {
            return (on_w == value % f.p()).then(|| self.clone());
        };
        let inv = f.inv(slopes[j0]).expect("nonzero slope");
        let basis = self
            .basis
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != j0)
            .map(|(j, b)| {
                let k = f.neg(f.mul(slopes[j], inv));
                b.iter()
                    .zip(&self.basis[j0])
                    .map(|(&x, &y)| f.add(x, f.mul(k, y)))
                    .collect()
            })
            .collect();
        let t = f.mul(f.sub(value % f.p(), on_w), inv);
        let translate = Point(
            self.translate
                .iter()
                .zip(&self.basis[j0])
                .map(|(&x, &y)| f.add(x, f.mul(t, y)))
                .collect(),
        );
        Some(AffineSpace::new(f, basis, translate).expect("hyperplane section is valid"))
    }

    /// `w + ker(M)` for a symmetric matrix `M` acting on basis coordinates.
    pub fn kernel_subspace(&self, matrix: &Matrix) -> Result<AffineSpace> {
        if matrix.rows() != self.dim() || matrix.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: matrix.rows(),
            });
        }
        let ker = matrix.kernel(self.field);
        self.subspace_from_coords(&ker, &vec![0; self.dim()])
    }

    /// The cosets of `sub_directions` (rows, in basis coordinates, independent)
    /// inside `self`, in a deterministic order.
    pub fn cosets(&self, sub_directions: &[Vec<u32>]) -> Result<Vec<AffineSpace>> {
        let f = self.field;
        let comp = complement(sub_directions, self.dim(), f);
        let g = Grid::new(f, comp.len());
        (0..g.len())
            .map(|i| {
                let s = g.digits(i);
                let mut t = vec![0u32; self.dim()];
                for (k, v) in s.iter().zip(&comp) {
                    for (a, &x) in t.iter_mut().zip(v) {
                        *a = f.add(*a, f.mul(*k, x));
                    }
                }
                self.subspace_from_coords(sub_directions, &t)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f5() -> Fp {
        Fp::new(5).unwrap()
    }

    fn random_space(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> AffineSpace {
        let f = f5();
        loop {
            let basis: Vec<Vec<u32>> = (0..dim)
                .map(|_| (0..n).map(|_| rng.gen_range(0..5)).collect())
                .collect();
            let t = Point((0..n).map(|_| rng.gen_range(0..5)).collect());
            if let Ok(s) = AffineSpace::new(f, basis, t) {
                return s;
            }
        }
    }

    #[test]
    fn full_space_enumeration() {
        let w = AffineSpace::full(f5(), 2).unwrap();
        let pts: Vec<Point> = w.enumerate().collect();
        assert_eq!(pts.len(), 25);
        assert_eq!(pts[0], Point(vec![0, 0]));
        assert_eq!(pts[1], Point(vec![1, 0]));
        for (i, x) in pts.iter().enumerate() {
            assert_eq!(x.index(f5()), i);
            assert_eq!(w.index_of(x), Some(i));
        }
    }

    #[test]
    fn line_enumeration() {
        let w = AffineSpace::new(f5(), vec![vec![1, 0]], Point(vec![0, 3])).unwrap();
        let pts: Vec<Point> = w.enumerate().collect();
        assert_eq!(pts.len(), 5);
        for (t, x) in pts.iter().enumerate() {
            assert_eq!(x, &Point(vec![t as u32, 3]));
        }
    }

    #[test]
    fn random_coset_differences_lie_in_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_space(&mut rng, 4, 2);
        let pts: Vec<Point> = w.enumerate().collect();
        assert_eq!(pts.len(), 25);
        assert_eq!(pts[0], w.translate());
        let mut seen = std::collections::HashSet::new();
        for x in &pts {
            assert!(seen.insert(x.clone()));
            for y in &pts {
                // membership solved independently by row reduction on [basis | diff]
                let d = x.sub(y, f5());
                let mut rows = w.basis().to_vec();
                rows.push(d.0.clone());
                assert_eq!(Matrix::from_rows(&rows, 4).rank(f5()), 2);
            }
        }
    }

    #[test]
    fn index_round_trip_on_random_spaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in 0..=3 {
            let w = random_space(&mut rng, 4, dim);
            for i in 0..w.len() {
                assert_eq!(w.index_of(&w.point(i)), Some(i));
            }
        }
    }

    #[test]
    fn dependent_basis_rejected() {
        let r = AffineSpace::new(f5(), vec![vec![1, 2], vec![2, 4]], Point(vec![0, 0]));
        assert_eq!(r.unwrap_err(), Error::DependentBasis);
    }

    #[test]
    fn size_cap() {
        let r = AffineSpace::with_limit(
            f5(),
            AffineSpace::full(f5(), 3).unwrap().basis().to_vec(),
            Point::zero(3),
            100,
        );
        assert!(matches!(r, Err(Error::SpaceTooLarge { .. })));
    }

    #[test]
    fn hyperplane_examples() {
        let f = f5();
        let w = AffineSpace::full(f, 2).unwrap();
        let h = w.intersect_with_hyperplane(&[1, 0], 2).unwrap();
        assert_eq!(h.len(), 5);
        assert!(h.enumerate().all(|x| x.0[0] == 2));
        assert_eq!(h.codim_in(&w).unwrap(), 1);

        let line = AffineSpace::new(f, vec![vec![1, 0]], Point(vec![0, 3])).unwrap();
        let same = line.intersect_with_hyperplane(&[0, 1], 3).unwrap();
        assert!(same.same_set(&line));
        assert!(line.intersect_with_hyperplane(&[0, 1], 1).is_none());

        let w3 = AffineSpace::full(f, 3).unwrap();
        let a = w3.intersect_with_hyperplane(&[1, 2, 3], 1).unwrap();
        let b = a.intersect_with_hyperplane(&[0, 1, 4], 2).unwrap();
        assert_eq!(b.codim_in(&w3).unwrap(), 2);
        // brute-force solution count of the two constraints
        let count = w3
            .enumerate()
            .filter(|x| f.dot(&[1, 2, 3], &x.0) == 1 && f.dot(&[0, 1, 4], &x.0) == 2)
            .count();
        assert_eq!(count, 5);
        assert!(b.enumerate().all(|x| f.dot(&[1, 2, 3], &x.0) == 1 && f.dot(&[0, 1, 4], &x.0) == 2));
    }

    #[test]
    fn hyperplane_sizes_match_brute_force() {
        let f = f5();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let dim = rng.gen_range(1..=4);
            let w = random_space(&mut rng, 4, dim);
            let normal: Vec<u32> = (0..4).map(|_| rng.gen_range(0..5)).collect();
            let value = rng.gen_range(0..5);
            let brute = w.enumerate().filter(|x| f.dot(&normal, &x.0) == value).count();
            match w.intersect_with_hyperplane(&normal, value) {
                None => assert_eq!(brute, 0),
                Some(h) => {
                    assert_eq!(h.len(), brute);
                    assert!(w.contains_space(&h));
                    let constant = w.basis().iter().all(|b| f.dot(&normal, b) == 0);
                    assert_eq!(h.len(), if constant { w.len() } else { w.len() / 5 });
                }
            }
        }
    }

    #[test]
    fn kernel_subspace_examples() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        assert!(w.kernel_subspace(&Matrix::zeros(3, 3)).unwrap().same_set(&w));
        let k = w.kernel_subspace(&Matrix::identity(3)).unwrap();
        assert_eq!(k.len(), 1);
        assert_eq!(k.codim_in(&w).unwrap(), 3);

        let w4 = AffineSpace::full(f, 4).unwrap();
        let v = [1u32, 2, 0, 3];
        let u = [0u32, 1, 4, 1];
        // M = v vᵀ + u uᵀ, rank 2
        let mut m = Matrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                m.set(i, j, f.add(f.mul(v[i], v[j]), f.mul(u[i], u[j])));
            }
        }
        assert_eq!(m.rank(f), 2);
        let k = w4.kernel_subspace(&m).unwrap();
        assert_eq!(k.codim_in(&w4).unwrap(), 2);
        for x in k.enumerate() {
            assert!(m.mul_vec(&x.0, f).iter().all(|&c| c == 0));
        }
    }

    #[test]
    fn codimension_is_additive() {
        let f = f5();
        let w = AffineSpace::full(f, 4).unwrap();
        let a = w.intersect_with_hyperplane(&[1, 1, 0, 0], 3).unwrap();
        let b = a.intersect_with_hyperplane(&[0, 1, 2, 0], 1).unwrap();
        let c = b.intersect_with_hyperplane(&[0, 0, 0, 1], 4).unwrap();
        assert_eq!(
            c.codim_in(&w).unwrap(),
            c.codim_in(&a).unwrap() + a.codim_in(&w).unwrap()
        );
        assert_eq!(c.codim_in(&b).unwrap(), 1);
        assert!(w.codim_in(&a).is_err());
    }

    #[test]
    fn indices_in_parent_and_cosets() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        let sub = w.intersect_with_hyperplane(&[1, 2, 0], 4).unwrap();
        let idx = sub.indices_in(&w).unwrap();
        for (i, &j) in idx.iter().enumerate() {
            assert_eq!(w.point(j), sub.point(i));
        }
        let cosets = w.cosets(&[vec![1, 0, 0]]).unwrap();
        assert_eq!(cosets.len(), 25);
        let mut covered = vec![false; 125];
        for c in &cosets {
            for j in c.indices_in(&w).unwrap() {
                assert!(!covered[j]);
                covered[j] = true;
            }
        }
        assert!(covered.into_iter().all(|b| b));
    }

    #[test]
    fn json_shape() {
        let w = AffineSpace::new(f5(), vec![vec![1, 0]], Point(vec![0, 3])).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"p":5,"ambient_dim":2,"basis":[[1,0]],"translate":[0,3]}"#);
        let back: AffineSpace = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }
}
