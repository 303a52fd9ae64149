//! Quadratic functions `φ(x) = xᵀMx + rᵀx + c` on affine subspaces of F_p^n.
//!
//! A form keeps its ambient coefficients together with its domain `W`. The
//! local form `φ̇(t) = φ(w + Σ t_j b_j)` in the domain's basis coordinates is
//! derived on demand; rank is always the rank of the local matrix `B M Bᵀ`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::field::Fp;
use crate::grid::Grid;
use crate::linalg::Matrix;
use crate::par;
use crate::space::{AffineSpace, Point};
use crate::transform::{exact_character_sum, roots, CyclotomicInt};

/// A quadratic function in the basis coordinates of some space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalForm {
    pub field: Fp,
    pub m: Matrix,
    pub r: Vec<u32>,
    pub c: u32,
}

impl LocalForm {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn evaluate(&self, t: &[u32]) -> u32 {
        let f = self.field;
        let mt = self.m.mul_vec(t, f);
        f.add(f.add(f.dot(t, &mt), f.dot(&self.r, t)), self.c)
    }

    /// Values at every point of F_p^dim in canonical order.
    ///
    /// Walks the mixed-radix counter; each digit step is `t ↦ t + e_j` (mod p),
    /// so `q` and `Mt` update in O(dim).
    pub fn values(&self) -> Vec<u32> {
        let f = self.field;
        let k = self.dim();
        let p = f.p();
        let len = Grid::new(f, k).len();
        let mut out = Vec::with_capacity(len);
        let mut digits = vec![0u32; k];
        let mut mt = vec![0u32; k];
        let mut q = self.c;
        out.push(q);
        for _ in 1..len {
            let mut j = 0;
            loop {
                // q(t + e_j) = q(t) + 2(Mt)_j + M_jj + r_j
                let step = f.add(
                    f.add(f.mul(2, mt[j]), self.m.get(j, j)),
                    self.r[j],
                );
                q = f.add(q, step);
                for (i, v) in mt.iter_mut().enumerate() {
                    *v = f.add(*v, self.m.get(i, j));
                }
                digits[j] += 1;
                if digits[j] == p {
                    digits[j] = 0;
                    j += 1;
                } else {
                    break;
                }
            }
            out.push(q);
        }
        out
    }

    pub fn rank(&self) -> usize {
        self.m.rank(self.field)
    }

    /// Whether `r ∈ Im(M)`, equivalently the linear part vanishes on `ker M`.
    pub fn linear_part_in_image(&self) -> bool {
        self.dim() == 0 || self.m.solve(&self.r, self.field).is_some()
    }
}

/// Wire format `{M: row-major residues, r, c}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormRecord {
    #[serde(rename = "M")]
    pub m: Vec<u32>,
    pub r: Vec<u32>,
    pub c: u32,
}

#[derive(Clone, Debug)]
pub struct QuadraticForm {
    m: Matrix,
    r: Vec<u32>,
    c: u32,
    domain: AffineSpace,
    rank_cache: OnceLock<usize>,
}

impl PartialEq for QuadraticForm {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.r == other.r && self.c == other.c && self.domain == other.domain
    }
}

impl Serialize for QuadraticForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.record().serialize(s)
    }
}

impl QuadraticForm {
    pub fn new(m: Matrix, r: Vec<u32>, c: u32, domain: AffineSpace) -> Result<Self> {
        let n = domain.ambient_dim();
        let p = domain.field().p();
        if m.rows() != n || m.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.rows(),
            });
        }
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        if !m.is_symmetric() {
            return Err(Error::InvalidParameter("quadratic matrix must be symmetric".into()));
        }
        if m.data().iter().chain(&r).chain(std::iter::once(&c)).any(|&x| x >= p) {
            return Err(Error::InvalidParameter(format!("coefficients must be residues mod {p}")));
        }
        Ok(QuadraticForm {
            m,
            r,
            c,
            domain,
            rank_cache: OnceLock::new(),
        })
    }

    /// Builds a form from monomial coefficients: `quad` lists `(i, j, a)` for the
    /// monomial `a·x_i x_j`; off-diagonal terms are split symmetrically with 2⁻¹.
    pub fn from_monomials(
        domain: AffineSpace,
        quad: &[(usize, usize, u32)],
        linear: &[u32],
        c: u32,
    ) -> Result<Self> {
        let f = domain.field();
        let n = domain.ambient_dim();
        let mut m = Matrix::zeros(n, n);
        for &(i, j, a) in quad {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch { expected: n, got: i.max(j) + 1 });
            }
            let a = a % f.p();
            if i == j {
                m.set(i, i, f.add(m.get(i, i), a));
            } else {
                let h = f.mul(a, f.half());
                m.set(i, j, f.add(m.get(i, j), h));
                m.set(j, i, f.add(m.get(j, i), h));
            }
        }
        let r = if linear.is_empty() { vec![0; n] } else { linear.iter().map(|&x| x % f.p()).collect() };
        QuadraticForm::new(m, r, c % f.p(), domain)
    }

    pub fn constant(domain: AffineSpace, c: u32) -> Self {
        let n = domain.ambient_dim();
        let c = c % domain.field().p();
        QuadraticForm::new(Matrix::zeros(n, n), vec![0; n], c, domain).expect("valid constant form")
    }

    /// Uniformly random symmetric `M`, `r` and `c` on `domain`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, domain: &AffineSpace) -> Self {
        let n = domain.ambient_dim();
        let p = domain.field().p();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rng.gen_range(0..p);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        let r = (0..n).map(|_| rng.gen_range(0..p)).collect();
        QuadraticForm::new(m, r, rng.gen_range(0..p), domain.clone()).expect("valid random form")
    }

    /// The ambient form on `domain` whose local form is `local`.
    pub fn from_local(domain: AffineSpace, local: &LocalForm) -> Result<Self> {
        let f = domain.field();
        let k = domain.dim();
        if local.dim() != k || local.m.rows() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: local.dim(),
            });
        }
        let l = domain.coordinate_map();
        let lt = l.transpose();
        let m = local.m.congruent(&lt, f);
        let w = domain.translate();
        let mw = m.mul_vec(&w.0, f);
        let ltr = if k == 0 { vec![0; domain.ambient_dim()] } else { lt.mul_vec(&local.r, f) };
        let r = ltr.iter().zip(&mw).map(|(&a, &b)| f.sub(a, f.mul(2, b))).collect();
        let lw = l.mul_vec(&w.0, f);
        let c = f.add(f.sub(f.dot(&w.0, &mw), f.dot(&local.r, &lw)), local.c);
        QuadraticForm::new(m, r, c, domain)
    }

    pub fn from_record(record: &FormRecord, domain: AffineSpace) -> Result<Self> {
        let n = domain.ambient_dim();
        if record.m.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: record.m.len(),
            });
        }
        QuadraticForm::new(
            Matrix::from_flat(n, n, record.m.clone()),
            record.r.clone(),
            record.c,
            domain,
        )
    }

    pub fn record(&self) -> FormRecord {
        FormRecord {
            m: self.m.data().to_vec(),
            r: self.r.clone(),
            c: self.c,
        }
    }

    pub fn field(&self) -> Fp {
        self.domain.field()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.m
    }

    pub fn linear(&self) -> &[u32] {
        &self.r
    }

    pub fn constant_term(&self) -> u32 {
        self.c
    }

    pub fn domain(&self) -> &AffineSpace {
        &self.domain
    }

    /// `xᵀMx + rᵀx + c` at an ambient point.
    pub fn evaluate(&self, x: &Point) -> u32 {
        let f = self.field();
        let mx = self.m.mul_vec(&x.0, f);
        f.add(f.add(f.dot(&x.0, &mx), f.dot(&self.r, &x.0)), self.c)
    }

    /// The form in the domain's basis coordinates.
    pub fn local(&self) -> LocalForm {
        let f = self.field();
        let b = self.domain.basis_matrix();
        let w = self.domain.translate();
        let m = self.m.congruent(&b, f);
        let mw = self.m.mul_vec(&w.0, f);
        let lin: Vec<u32> = mw
            .iter()
            .zip(&self.r)
            .map(|(&a, &r)| f.add(f.mul(2, a), r))
            .collect();
        let r = if self.domain.dim() == 0 { Vec::new() } else { b.mul_vec(&lin, f) };
        LocalForm {
            field: f,
            m,
            r,
            c: self.evaluate(&w),
        }
    }

    /// Values on the domain in canonical order.
    pub fn values(&self) -> Vec<u32> {
        self.local().values()
    }

    /// Same ambient coefficients, smaller domain.
    pub fn restrict(&self, sub: &AffineSpace) -> Result<QuadraticForm> {
        if !self.domain.contains_space(sub) {
            return Err(Error::NotContained);
        }
        QuadraticForm::new(self.m.clone(), self.r.clone(), self.c, sub.clone())
    }

    /// Rank of the local matrix; computed once per instance.
    pub fn rank(&self) -> usize {
        *self.rank_cache.get_or_init(|| self.local().rank())
    }

    /// Recomputes the rank, bypassing the cache; used to audit cached values.
    pub fn verify_rank(&self) -> bool {
        self.local().rank() == self.rank()
    }

    pub fn scaled(&self, k: u32) -> QuadraticForm {
        let f = self.field();
        QuadraticForm::new(
            self.m.scale(k, f),
            self.r.iter().map(|&x| f.mul(x, k)).collect(),
            f.mul(self.c, k),
            self.domain.clone(),
        )
        .expect("scaling preserves validity")
    }

    /// `Σ λ_i φ_i` over forms sharing a domain.
    pub fn combination(forms: &[QuadraticForm], lambda: &[u32]) -> Result<QuadraticForm> {
        let first = forms.first().ok_or_else(|| Error::InvalidParameter("no forms".into()))?;
        if forms.len() != lambda.len() {
            return Err(Error::DimensionMismatch {
                expected: forms.len(),
                got: lambda.len(),
            });
        }
        let f = first.field();
        let n = first.domain.ambient_dim();
        let mut m = Matrix::zeros(n, n);
        let mut r = vec![0u32; n];
        let mut c = 0u32;
        for (phi, &l) in forms.iter().zip(lambda) {
            if phi.domain != first.domain {
                return Err(Error::DomainMismatch);
            }
            if l == 0 {
                continue;
            }
            m = m.add_scaled(&phi.m, l, f);
            for (a, &b) in r.iter_mut().zip(&phi.r) {
                *a = f.add(*a, f.mul(l, b));
            }
            c = f.add(c, f.mul(l, phi.c));
        }
        QuadraticForm::new(m, r, c, first.domain.clone())
    }

    pub fn linear_part_in_image(&self) -> bool {
        self.local().linear_part_in_image()
    }

    /// `|E_{x∈W} e_p(φ(x))|` by direct floating-point summation.
    pub fn gauss_sum_magnitude(&self) -> f64 {
        let roots = roots(self.field());
        let vals = self.values();
        let terms: Vec<Complex64> = vals.iter().map(|&v| roots[v as usize]).collect();
        (par::pairwise_sum_c(&terms) / vals.len() as f64).norm()
    }

    /// `Σ_{x∈W} ζ^{φ(x)}` exactly.
    pub fn gauss_sum_exact(&self) -> CyclotomicInt {
        exact_character_sum(self, &self.domain)
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

    #[test]
    fn from_local_round_trip() {
        let f = f5();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let w = AffineSpace::new(f, vec![vec![1, 2, 0, 4], vec![0, 0, 1, 3]], Point(vec![2, 1, 0, 4])).unwrap();
        for _ in 0..20 {
            let phi = QuadraticForm::random(&mut rng, &w);
            let local = phi.local();
            let back = QuadraticForm::from_local(w.clone(), &local).unwrap();
            assert_eq!(back.values(), phi.values());
            assert_eq!(back.local(), local);
        }
    }

    #[test]
    fn evaluate_examples() {
        let w2 = AffineSpace::full(f5(), 2).unwrap();
        let c = QuadraticForm::constant(w2.clone(), 3);
        assert!(w2.enumerate().all(|x| c.evaluate(&x) == 3));

        let w1 = AffineSpace::full(f5(), 1).unwrap();
        let sq = QuadraticForm::from_monomials(w1, &[(0, 0, 1)], &[], 0).unwrap();
        assert_eq!(sq.evaluate(&Point(vec![2])), 4);

        let xy = QuadraticForm::from_monomials(w2, &[(0, 1, 1)], &[], 0).unwrap();
        assert_eq!(xy.matrix().get(0, 1), 3);
        assert_eq!(xy.matrix().get(1, 0), 3);
        assert_eq!(xy.evaluate(&Point(vec![2, 3])), 1);
    }

    #[test]
    fn local_values_agree_with_ambient_evaluation() {
        let f = f5();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = AffineSpace::new(f, vec![vec![1, 2, 0, 1], vec![0, 1, 1, 3]], Point(vec![4, 0, 2, 1])).unwrap();
        for _ in 0..10 {
            let phi = QuadraticForm::random(&mut rng, &w);
            let vals = phi.values();
            for (i, x) in w.enumerate().enumerate() {
                assert_eq!(vals[i], phi.evaluate(&x));
                assert_eq!(phi.local().evaluate(&w.grid().digits(i)), vals[i]);
            }
        }
    }

    #[test]
    fn restrict_examples() {
        let f = f5();
        let w = AffineSpace::full(f, 2).unwrap();
        let sq = QuadraticForm::from_monomials(w.clone(), &[(0, 0, 1)], &[], 0).unwrap();
        let full = sq.restrict(&w).unwrap();
        assert_eq!(full.values(), sq.values());
        let line = AffineSpace::new(f, vec![vec![0, 1]], Point(vec![0, 0])).unwrap();
        let r = sq.restrict(&line).unwrap();
        assert_eq!(r.rank(), 0);
        assert!(r.values().iter().all(|&v| v == 0));

        let other = AffineSpace::full(f, 2).unwrap().intersect_with_hyperplane(&[1, 0], 1).unwrap();
        assert_eq!(r.restrict(&other).unwrap_err(), Error::NotContained);
    }

    #[test]
    fn restriction_of_rank_three_form() {
        let f = f5();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = AffineSpace::full(f, 4).unwrap();
        let mut checked = 0;
        while checked < 20 {
            let phi = QuadraticForm::random(&mut rng, &w);
            if phi.rank() != 3 {
                continue;
            }
            let normal: Vec<u32> = (0..4).map(|_| rng.gen_range(0..5)).collect();
            let Some(h) = w.intersect_with_hyperplane(&normal, rng.gen_range(0..5)) else { continue };
            if h.dim() != 3 {
                continue;
            }
            let r = phi.restrict(&h).unwrap();
            // rank can drop by at most 2 under a codimension-1 restriction
            assert!((1..=3).contains(&r.rank()));
            let vals = r.values();
            for (i, x) in h.enumerate().enumerate() {
                assert_eq!(vals[i], phi.evaluate(&x));
            }
            checked += 1;
        }
    }

    #[test]
    fn restriction_can_drop_rank_by_two() {
        // x0·x1 has rank 2 on F_5^2 but vanishes on the line x1 = 0.
        let f = f5();
        let w = AffineSpace::full(f, 2).unwrap();
        let xy = QuadraticForm::from_monomials(w.clone(), &[(0, 1, 1)], &[], 0).unwrap();
        let line = w.intersect_with_hyperplane(&[0, 1], 0).unwrap();
        assert_eq!(xy.rank(), 2);
        assert_eq!(xy.restrict(&line).unwrap().rank(), 0);
    }

    #[test]
    fn rank_examples() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        assert_eq!(QuadraticForm::constant(w.clone(), 1).rank(), 0);
        let id = QuadraticForm::new(Matrix::identity(3), vec![0; 3], 0, w.clone()).unwrap();
        assert_eq!(id.rank(), 3);
        let w2 = AffineSpace::full(f, 2).unwrap();
        let hyp = QuadraticForm::new(Matrix::from_rows(&[vec![0, 1], vec![1, 0]], 2), vec![0, 0], 0, w2).unwrap();
        assert_eq!(hyp.rank(), 2);
        assert!(hyp.verify_rank());
    }

    #[test]
    fn gauss_sum_examples() {
        let f = f5();
        let w1 = AffineSpace::full(f, 1).unwrap();
        let sq = QuadraticForm::from_monomials(w1.clone(), &[(0, 0, 1)], &[], 0).unwrap();
        assert!((sq.gauss_sum_magnitude() - 5f64.powf(-0.5)).abs() < 1e-9);
        let lin = QuadraticForm::from_monomials(w1.clone(), &[], &[1], 0).unwrap();
        assert!(lin.gauss_sum_magnitude() < 1e-12);
        assert!(!lin.linear_part_in_image());
        assert!((QuadraticForm::constant(w1.clone(), 2).gauss_sum_magnitude() - 1.0).abs() < 1e-12);

        let exact = sq.gauss_sum_exact();
        assert_eq!(exact.counts, vec![1, 2, 0, 0, 2]);
        assert_eq!(exact.norm_sqr(), Some(5));
        let lin_exact = lin.gauss_sum_exact();
        assert_eq!(lin_exact.counts, vec![1, 1, 1, 1, 1]);
        assert!(lin_exact.is_zero());
        assert_eq!(QuadraticForm::constant(w1, 0).gauss_sum_exact().counts, vec![5, 0, 0, 0, 0]);
    }

    #[test]
    fn scaling_preserves_rank() {
        let f = f5();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = AffineSpace::full(f, 4).unwrap();
        for _ in 0..50 {
            let phi = QuadraticForm::random(&mut rng, &w);
            for k in 1..5 {
                assert_eq!(phi.scaled(k).rank(), phi.rank());
            }
        }
    }

    #[test]
    fn combination_is_pointwise() {
        let f = f5();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = AffineSpace::full(f, 3).unwrap();
        let forms = vec![QuadraticForm::random(&mut rng, &w), QuadraticForm::random(&mut rng, &w)];
        let comb = QuadraticForm::combination(&forms, &[2, 3]).unwrap();
        for x in w.enumerate() {
            let expect = f.add(f.mul(2, forms[0].evaluate(&x)), f.mul(3, forms[1].evaluate(&x)));
            assert_eq!(comb.evaluate(&x), expect);
        }
    }

    #[test]
    fn record_round_trip() {
        let f = f5();
        let w = AffineSpace::full(f, 2).unwrap();
        let xy = QuadraticForm::from_monomials(w.clone(), &[(0, 1, 1), (1, 1, 2)], &[1, 0], 4).unwrap();
        let s = serde_json::to_string(&xy).unwrap();
        assert_eq!(s, r#"{"M":[0,3,3,2],"r":[1,0],"c":4}"#);
        let rec: FormRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(QuadraticForm::from_record(&rec, w).unwrap(), xy);
    }
}
