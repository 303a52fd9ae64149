//! Factors (finite partitions), conditional expectation and energy, quadratic
//! factors with the rank separation condition, and local quadratic factors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::field::Fp;
use crate::function::SpaceFunction;
use crate::grid::Grid;
use crate::linalg::Matrix;
use crate::par;
use crate::quadratic::{FormRecord, QuadraticForm};
use crate::space::{AffineSpace, Point};

/// Default cap on the complexity accepted by [`QuadraticFactor::rank_separation`].
pub const DEFAULT_COMPLEXITY_CAP: usize = 8;

/// Partition of `0..len` given by a dense atom label per index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    atom_of: Vec<u32>,
    atom_count: usize,
}

impl Factor {
    /// The factor `{W}`.
    pub fn trivial(len: usize) -> Self {
        Factor {
            atom_of: vec![0; len],
            atom_count: usize::from(len > 0),
        }
    }

    /// Singletons.
    pub fn discrete(len: usize) -> Self {
        Factor {
            atom_of: (0..len as u32).collect(),
            atom_count: len,
        }
    }

    /// Relabels arbitrary labels densely, in order of first occurrence.
    pub fn from_labels<L: Eq + std::hash::Hash + Copy>(labels: &[L]) -> Self {
        let mut ids: HashMap<L, u32> = HashMap::new();
        let atom_of = labels
            .iter()
            .map(|l| {
                let next = ids.len() as u32;
                *ids.entry(*l).or_insert(next)
            })
            .collect();
        Factor {
            atom_of,
            atom_count: ids.len(),
        }
    }

    /// Relabels by sorted order of the labels (so atom ids follow label order).
    pub fn from_sorted_labels(labels: &[usize]) -> Self {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let pos: HashMap<usize, u32> = distinct
            .iter()
            .enumerate()
            .map(|(i, &l)| (l, i as u32))
            .collect();
        Factor {
            atom_of: labels.iter().map(|l| pos[l]).collect(),
            atom_count: distinct.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.atom_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atom_of.is_empty()
    }

    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    pub fn atom_of(&self) -> &[u32] {
        &self.atom_of
    }

    pub fn atom(&self, index: usize) -> usize {
        self.atom_of[index] as usize
    }

    pub fn atom_sizes(&self) -> Vec<usize> {
        let mut s = vec![0usize; self.atom_count];
        for &a in &self.atom_of {
            s[a as usize] += 1;
        }
        s
    }

    /// Members of each atom, in increasing index order.
    pub fn atoms(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.atom_count];
        for (i, &a) in self.atom_of.iter().enumerate() {
            out[a as usize].push(i);
        }
        out
    }

    /// `self` refines `coarser` iff `coarser` is constant on each atom of `self`.
    pub fn refines(&self, coarser: &Factor) -> bool {
        if self.len() != coarser.len() {
            return false;
        }
        let mut seen: Vec<Option<u32>> = vec![None; self.atom_count];
        self.atom_of
            .iter()
            .zip(&coarser.atom_of)
            .all(|(&a, &b)| match seen[a as usize] {
                Some(prev) => prev == b,
                None => {
                    seen[a as usize] = Some(b);
                    true
                }
            })
    }

    pub fn same_partition(&self, other: &Factor) -> bool {
        self.refines(other) && other.refines(self)
    }

    /// `B ∨ B'`: atoms are the nonempty pairwise intersections.
    pub fn join(&self, other: &Factor) -> Result<Factor> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let pairs: Vec<(u32, u32)> = self
            .atom_of
            .iter()
            .zip(&other.atom_of)
            .map(|(&a, &b)| (a, b))
            .collect();
        Ok(Factor::from_labels(&pairs))
    }

    /// Atom means of `values`, one per atom.
    pub fn atom_means(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut sums = vec![Complex64::new(0.0, 0.0); self.atom_count];
        let mut counts = vec![0usize; self.atom_count];
        for (&a, v) in self.atom_of.iter().zip(values) {
            sums[a as usize] += v;
            counts[a as usize] += 1;
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &c)| s / c as f64)
            .collect()
    }

    pub fn is_measurable(&self, values: &[Complex64], tol: f64) -> Option<usize> {
        let mut first: Vec<Option<Complex64>> = vec![None; self.atom_count];
        for (&a, v) in self.atom_of.iter().zip(values) {
            match first[a as usize] {
                Some(u) if (u - v).norm() > tol => return Some(a as usize),
                Some(_) => {}
                None => first[a as usize] = Some(*v),
            }
        }
        None
    }
}

/// `E(f|B)`: replaces `f` by its atom means.
pub fn conditional_expectation(f: &SpaceFunction, b: &Factor) -> Result<SpaceFunction> {
    if f.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: f.len(),
        });
    }
    let means = b.atom_means(f.values());
    let values = b.atom_of().iter().map(|&a| means[a as usize]).collect();
    SpaceFunction::new(f.domain().clone(), values)
}

/// `‖E(f|B)‖²_{L²(W)}`.
pub fn energy(f: &SpaceFunction, b: &Factor) -> Result<f64> {
    if f.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: f.len(),
        });
    }
    let means = b.atom_means(f.values());
    let sizes = b.atom_sizes();
    let terms: Vec<f64> = means
        .iter()
        .zip(&sizes)
        .map(|(m, &s)| m.norm_sqr() * s as f64)
        .collect();
    Ok(par::pairwise_sum(&terms) / f.len() as f64)
}

/// Result of checking `rank(Σ λ_i φ_i) ≥ r` over all nonzero λ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankSeparation {
    pub level: usize,
    pub holds: bool,
    /// Smallest rank over all projective combinations (`None` when d = 0).
    pub min_rank: Option<usize>,
    /// First violating combination in enumeration order, with its rank.
    pub witness: Option<(Vec<u32>, usize)>,
    pub combinations: usize,
}

/// Projective representatives of `F_p^d \ {0}`: the last nonzero coordinate is 1.
pub fn projective_points(f: Fp, d: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for last in 0..d {
        let g = Grid::new(f, last);
        for i in 0..g.len() {
            let mut lambda = g.digits(i);
            lambda.push(1);
            lambda.resize(d, 0);
            out.push(lambda);
        }
    }
    out
}

/// Rank of `Σ λ_i M_i` for local matrices sharing a coordinate space.
pub fn combination_rank(mats: &[Matrix], lambda: &[u32], f: Fp) -> usize {
    let k = mats.first().map_or(0, |m| m.rows());
    let mut acc = Matrix::zeros(k, k);
    for (m, &l) in mats.iter().zip(lambda) {
        if l != 0 {
            acc = acc.add_scaled(m, l, f);
        }
    }
    acc.rank(f)
}

/// `B_{φ_1..φ_d}` on a common domain.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticFactor {
    domain: AffineSpace,
    forms: Vec<QuadraticForm>,
    claimed_rank: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFactorRecord {
    pub domain: AffineSpace,
    pub forms: Vec<FormRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub claimed_rank: Option<usize>,
}

impl QuadraticFactor {
    pub fn new(domain: AffineSpace, forms: Vec<QuadraticForm>) -> Result<Self> {
        if forms.iter().any(|phi| phi.domain() != &domain) {
            return Err(Error::DomainMismatch);
        }
        Ok(QuadraticFactor {
            domain,
            forms,
            claimed_rank: None,
        })
    }

    pub fn trivial(domain: AffineSpace) -> Self {
        QuadraticFactor {
            domain,
            forms: Vec::new(),
            claimed_rank: None,
        }
    }

    /// Records an advisory rank claim; checked by [`QuadraticFactor::verified`].
    pub fn with_claimed_rank(mut self, r: usize) -> Self {
        self.claimed_rank = Some(r);
        self
    }

    pub fn claimed_rank(&self) -> Option<usize> {
        self.claimed_rank
    }

    pub fn domain(&self) -> &AffineSpace {
        &self.domain
    }

    pub fn forms(&self) -> &[QuadraticForm] {
        &self.forms
    }

    pub fn complexity(&self) -> usize {
        self.forms.len()
    }

    pub fn field(&self) -> Fp {
        self.domain.field()
    }

    pub fn record(&self) -> QuadraticFactorRecord {
        QuadraticFactorRecord {
            domain: self.domain.clone(),
            forms: self.forms.iter().map(|phi| phi.record()).collect(),
            claimed_rank: self.claimed_rank,
        }
    }

    pub fn from_record(rec: &QuadraticFactorRecord) -> Result<Self> {
        let forms = rec
            .forms
            .iter()
            .map(|r| QuadraticForm::from_record(r, rec.domain.clone()))
            .collect::<Result<_>>()?;
        let mut q = QuadraticFactor::new(rec.domain.clone(), forms)?;
        q.claimed_rank = rec.claimed_rank;
        Ok(q)
    }

    pub fn push(&mut self, phi: QuadraticForm) -> Result<()> {
        if phi.domain() != &self.domain {
            return Err(Error::DomainMismatch);
        }
        self.forms.push(phi);
        self.claimed_rank = None;
        Ok(())
    }

    pub fn restrict(&self, sub: &AffineSpace) -> Result<QuadraticFactor> {
        let forms = self
            .forms
            .iter()
            .map(|phi| phi.restrict(sub))
            .collect::<Result<_>>()?;
        QuadraticFactor::new(sub.clone(), forms)
    }

    /// `Φ(x) = (φ_1(x), …, φ_d(x))`.
    pub fn configuration_map(&self, x: &Point) -> Point {
        Point(self.forms.iter().map(|phi| phi.evaluate(x)).collect())
    }

    pub fn configuration_grid(&self) -> Grid {
        Grid::new(self.field(), self.complexity())
    }

    /// Canonical index of `Φ(x)` in F_p^d for every point of the domain.
    pub fn configuration_indices(&self) -> Vec<usize> {
        let n = self.domain.len();
        let mut idx = vec![0usize; n];
        let mut weight = 1usize;
        for phi in &self.forms {
            for (slot, v) in idx.iter_mut().zip(phi.values()) {
                *slot += v as usize * weight;
            }
            weight *= self.field().order();
        }
        idx
    }

    /// The induced partition, atoms numbered in increasing order of `Φ`.
    pub fn factor(&self) -> Factor {
        Factor::from_sorted_labels(&self.configuration_indices())
    }

    /// Local matrices of the forms in the domain's coordinates.
    pub fn local_matrices(&self) -> Vec<Matrix> {
        self.forms.iter().map(|phi| phi.local().m).collect()
    }

    /// Exhaustive check over the `(p^d − 1)/(p − 1)` projective combinations.
    pub fn rank_separation(&self, r: usize, cap: usize) -> Result<RankSeparation> {
        let d = self.complexity();
        if d > cap {
            return Err(Error::ComplexityCap { d, cap });
        }
        let f = self.field();
        let mats = self.local_matrices();
        let lambdas = projective_points(f, d);
        let ranks = par::map_slice(&lambdas, |l| combination_rank(&mats, l, f));
        let witness = lambdas
            .iter()
            .zip(&ranks)
            .find(|(_, &rk)| rk < r)
            .map(|(l, &rk)| (l.clone(), rk));
        Ok(RankSeparation {
            level: r,
            holds: witness.is_none(),
            min_rank: ranks.iter().copied().min(),
            witness,
            combinations: lambdas.len(),
        })
    }

    pub fn rank_separation_check(&self, r: usize) -> Result<RankSeparation> {
        self.rank_separation(r, DEFAULT_COMPLEXITY_CAP)
    }

    /// Largest `r` for which the separation condition holds (`usize::MAX` at d = 0).
    pub fn verified_rank(&self) -> Result<usize> {
        Ok(self
            .rank_separation(0, DEFAULT_COMPLEXITY_CAP)?
            .min_rank
            .unwrap_or(usize::MAX))
    }

    /// Errors unless separation holds at level `r`.
    pub fn require_rank(&self, r: usize) -> Result<RankSeparation> {
        let check = self.rank_separation_check(r)?;
        if let Some((lambda, rank)) = &check.witness {
            return Err(Error::RankSeparation {
                required: r,
                lambda: lambda.clone(),
                rank: *rank,
            });
        }
        Ok(check)
    }

    /// Re-checks the advisory claim, if any.
    pub fn verified(&self) -> Result<()> {
        if let Some(r) = self.claimed_rank {
            self.require_rank(r)?;
        }
        Ok(())
    }
}

/// `𝐟 : F_p^d → C` with `f = 𝐟 ∘ Φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorFunction {
    pub p: u32,
    pub d: usize,
    pub values: Vec<Complex64>,
}

impl FactorFunction {
    pub fn grid(&self) -> Grid {
        Grid::new(Fp::new(self.p).expect("valid modulus"), self.d)
    }

    /// `𝐟 ∘ Φ` on the factor's domain.
    pub fn compose(&self, q: &QuadraticFactor) -> Result<SpaceFunction> {
        let values = q
            .configuration_indices()
            .iter()
            .map(|&y| self.values[y])
            .collect();
        SpaceFunction::new(q.domain().clone(), values)
    }
}

/// Tolerance for the measurability check in [`push_to_configuration`].
pub const MEASURABILITY_TOL: f64 = 1e-12;

/// Transfers a `Q`-measurable function to configuration space; unoccupied
/// configurations get 0.
pub fn push_to_configuration(f: &SpaceFunction, q: &QuadraticFactor) -> Result<FactorFunction> {
    if f.domain() != q.domain() {
        return Err(Error::DomainMismatch);
    }
    let grid = q.configuration_grid();
    let cfg = q.configuration_indices();
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut set = vec![false; grid.len()];
    for (&y, v) in cfg.iter().zip(f.values()) {
        if set[y] {
            if (values[y] - v).norm() > MEASURABILITY_TOL {
                return Err(Error::NotMeasurable { atom: y });
            }
        } else {
            values[y] = *v;
            set[y] = true;
        }
    }
    Ok(FactorFunction {
        p: q.field().p(),
        d: q.complexity(),
        values,
    })
}

/// One atom of `B1` with the quadratic factor living on it.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalAtom {
    pub space: AffineSpace,
    pub factor: QuadraticFactor,
}

/// `(B1, B2)`: a partition of `W` into affine subspaces, each carrying a
/// quadratic factor.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalQuadraticFactor {
    domain: AffineSpace,
    atoms: Vec<LocalAtom>,
}

impl LocalQuadraticFactor {
    pub fn trivial(domain: AffineSpace) -> Self {
        LocalQuadraticFactor {
            atoms: vec![LocalAtom {
                space: domain.clone(),
                factor: QuadraticFactor::trivial(domain.clone()),
            }],
            domain,
        }
    }

    /// Builds and validates that the atoms partition `domain`.
    pub fn new(domain: AffineSpace, atoms: Vec<LocalAtom>) -> Result<Self> {
        let mut covered = vec![false; domain.len()];
        for atom in &atoms {
            if atom.factor.domain() != &atom.space {
                return Err(Error::DomainMismatch);
            }
            for i in atom.space.indices_in(&domain)? {
                if covered[i] {
                    return Err(Error::Inconsistent("B1 atoms overlap".into()));
                }
                covered[i] = true;
            }
        }
        if covered.iter().any(|c| !c) {
            return Err(Error::Inconsistent("B1 atoms do not cover W".into()));
        }
        Ok(LocalQuadraticFactor { domain, atoms })
    }

    pub fn domain(&self) -> &AffineSpace {
        &self.domain
    }

    pub fn atoms(&self) -> &[LocalAtom] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<LocalAtom> {
        self.atoms
    }

    /// Largest codimension of a `B1` atom in `W`.
    pub fn codim_bound(&self) -> usize {
        self.atoms
            .iter()
            .map(|a| self.domain.dim() - a.space.dim())
            .max()
            .unwrap_or(0)
    }

    pub fn complexity(&self) -> usize {
        self.atoms
            .iter()
            .map(|a| a.factor.complexity())
            .max()
            .unwrap_or(0)
    }

    /// Index lists of each `B1` atom inside `W`.
    pub fn atom_indices(&self) -> Result<Vec<Vec<usize>>> {
        self.atoms
            .iter()
            .map(|a| a.space.indices_in(&self.domain))
            .collect()
    }

    pub fn b1(&self) -> Result<Factor> {
        let mut labels = vec![0usize; self.domain.len()];
        for (k, idx) in self.atom_indices()?.iter().enumerate() {
            for &i in idx {
                labels[i] = k;
            }
        }
        Ok(Factor::from_sorted_labels(&labels))
    }

    /// `B2`: atom = (B1 atom, configuration value of its factor).
    pub fn b2(&self) -> Result<Factor> {
        let mut labels = vec![(0usize, 0usize); self.domain.len()];
        for (k, (atom, idx)) in self.atoms.iter().zip(self.atom_indices()?).enumerate() {
            for (&i, y) in idx.iter().zip(atom.factor.configuration_indices()) {
                labels[i] = (k, y);
            }
        }
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let pos: HashMap<(usize, usize), usize> =
            distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let dense: Vec<usize> = labels.iter().map(|l| pos[l]).collect();
        Ok(Factor::from_sorted_labels(&dense))
    }

    /// Whether every atom's factor has rank separation at level `r`.
    pub fn rank_at_least(&self, r: usize) -> Result<bool> {
        for a in &self.atoms {
            if !a.factor.rank_separation_check(r)?.holds {
                return Ok(false);
            }
        }
        Ok(true)
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

    fn random_real(rng: &mut ChaCha8Rng, w: &AffineSpace) -> SpaceFunction {
        let v: Vec<f64> = (0..w.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SpaceFunction::real(w.clone(), &v).unwrap()
    }

    fn random_factor(rng: &mut ChaCha8Rng, len: usize, atoms: usize) -> Factor {
        let labels: Vec<usize> = (0..len).map(|_| rng.gen_range(0..atoms)).collect();
        Factor::from_labels(&labels)
    }

    #[test]
    fn conditional_expectation_examples() {
        let w = AffineSpace::full(f5(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_real(&mut rng, &w);
        let triv = conditional_expectation(&f, &Factor::trivial(25)).unwrap();
        assert!(triv.values().iter().all(|v| (v - f.mean()).norm() < 1e-12));
        let disc = conditional_expectation(&f, &Factor::discrete(25)).unwrap();
        assert_eq!(disc.values(), f.values());

        // two atoms: the line x1 = 0 (5 points) and its complement (20 points)
        let labels: Vec<usize> = w.enumerate().map(|x| usize::from(x.0[1] != 0)).collect();
        let b = Factor::from_labels(&labels);
        assert_eq!(b.atom_sizes(), vec![5, 20]);
        let mask: Vec<bool> = labels.iter().map(|&l| l == 0).collect();
        let ind = SpaceFunction::indicator(w.clone(), &mask).unwrap();
        let e = conditional_expectation(&ind, &b).unwrap();
        assert_eq!(e.values(), ind.values());
    }

    #[test]
    fn projection_is_orthogonal() {
        let w = AffineSpace::full(f5(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let f = random_real(&mut rng, &w);
            let b = random_factor(&mut rng, 125, 7);
            let e = conditional_expectation(&f, &b).unwrap();
            let resid = f.sub(&e).unwrap();
            // B-measurable test function
            let g_atoms: Vec<f64> = (0..b.atom_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ip: f64 = resid
                .values()
                .iter()
                .zip(b.atom_of())
                .map(|(r, &a)| r.re * g_atoms[a as usize])
                .sum::<f64>()
                / 125.0;
            assert!(ip.abs() < 1e-9);
        }
    }

    #[test]
    fn energy_examples_and_monotonicity() {
        let w = AffineSpace::full(f5(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_real(&mut rng, &w);
        let alpha = f.mean().re;
        assert!((energy(&f, &Factor::trivial(125)).unwrap() - alpha * alpha).abs() < 1e-12);
        assert!((energy(&f, &Factor::discrete(125)).unwrap() - f.mean_sq()).abs() < 1e-12);
        for _ in 0..100 {
            let f = random_real(&mut rng, &w);
            let b = random_factor(&mut rng, 125, 4);
            let b2 = b.join(&random_factor(&mut rng, 125, 3)).unwrap();
            assert!(b2.refines(&b));
            let (e1, e2) = (energy(&f, &b).unwrap(), energy(&f, &b2).unwrap());
            assert!(e2 >= e1 - 1e-9);
            // tower property
            let inner = conditional_expectation(&f, &b2).unwrap();
            let outer = conditional_expectation(&inner, &b).unwrap();
            let direct = conditional_expectation(&f, &b).unwrap();
            for (a, c) in outer.values().iter().zip(direct.values()) {
                assert!((a - c).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn join_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random_factor(&mut rng, 25, 3);
        assert!(b.join(&Factor::trivial(25)).unwrap().same_partition(&b));
        assert!(b.join(&b).unwrap().same_partition(&b));
        let x = random_factor(&mut rng, 25, 2);
        let y = random_factor(&mut rng, 25, 2);
        let j = x.join(&y).unwrap();
        assert!(j.atom_count() <= 4);
        assert!(j.refines(&x) && j.refines(&y));
        for a in 0..25 {
            for c in 0..25 {
                let same_pair = x.atom(a) == x.atom(c) && y.atom(a) == y.atom(c);
                assert_eq!(j.atom(a) == j.atom(c), same_pair);
            }
        }
    }

    #[test]
    fn join_of_quadratic_factors_concatenates_forms() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let forms: Vec<QuadraticForm> = (0..3).map(|_| QuadraticForm::random(&mut rng, &w)).collect();
        let a = QuadraticFactor::new(w.clone(), forms[..1].to_vec()).unwrap();
        let b = QuadraticFactor::new(w.clone(), forms[1..].to_vec()).unwrap();
        let ab = QuadraticFactor::new(w.clone(), forms.clone()).unwrap();
        assert!(a.factor().join(&b.factor()).unwrap().same_partition(&ab.factor()));
    }

    #[test]
    fn rank_separation_examples() {
        let f = f5();
        let w = AffineSpace::full(f, 4).unwrap();
        let phi = QuadraticForm::from_monomials(w.clone(), &[(0, 0, 1), (1, 1, 1), (2, 2, 1)], &[], 0).unwrap();
        let q = QuadraticFactor::new(w.clone(), vec![phi.clone()]).unwrap();
        let chk = q.rank_separation_check(3).unwrap();
        assert!(chk.holds);
        assert_eq!(chk.combinations, 1);

        let q2 = QuadraticFactor::new(w.clone(), vec![phi.clone(), phi.scaled(2)]).unwrap();
        let chk = q2.rank_separation_check(1).unwrap();
        assert!(!chk.holds);
        // λ = (−2, 1)
        assert_eq!(chk.witness, Some((vec![3, 1], 0)));
        assert!(matches!(q2.require_rank(1), Err(Error::RankSeparation { .. })));

        let big = QuadraticFactor::new(w.clone(), vec![phi.clone(); 9]).unwrap();
        assert!(matches!(big.rank_separation_check(1), Err(Error::ComplexityCap { d: 9, cap: 8 })));
    }

    #[test]
    fn rank_separation_matches_exhaustive_enumeration() {
        let f = f5();
        let w = AffineSpace::full(f, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut done = 0;
        while done < 10 {
            let a = QuadraticForm::random(&mut rng, &w);
            let b = QuadraticForm::random(&mut rng, &w);
            if a.rank() < 4 || b.rank() < 4 {
                continue;
            }
            let q = QuadraticFactor::new(w.clone(), vec![a.clone(), b.clone()]).unwrap();
            let mut min_all = usize::MAX;
            for l0 in 0..5u32 {
                for l1 in 0..5u32 {
                    if l0 == 0 && l1 == 0 {
                        continue;
                    }
                    let c = QuadraticForm::combination(&[a.clone(), b.clone()], &[l0, l1]).unwrap();
                    min_all = min_all.min(c.rank());
                }
            }
            let chk = q.rank_separation_check(2).unwrap();
            assert_eq!(chk.holds, min_all >= 2);
            assert_eq!(chk.min_rank, Some(min_all));
            assert_eq!(chk.combinations, 6);
            done += 1;
        }
    }

    #[test]
    fn configuration_map_examples() {
        let f = f5();
        let w = AffineSpace::full(f, 2).unwrap();
        let triv = QuadraticFactor::trivial(w.clone());
        assert_eq!(triv.configuration_map(&Point(vec![1, 2])), Point(vec![]));
        assert_eq!(triv.factor().atom_count(), 1);
        let x0 = QuadraticForm::from_monomials(w.clone(), &[], &[1, 0], 0).unwrap();
        let q = QuadraticFactor::new(w.clone(), vec![x0]).unwrap();
        assert_eq!(q.configuration_map(&Point(vec![3, 1])), Point(vec![3]));
        assert_eq!(q.factor().atom_sizes(), vec![5; 5]);
    }

    #[test]
    fn progression_identity_in_configuration_space() {
        let f = f5();
        let w = AffineSpace::full(f, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let forms: Vec<QuadraticForm> = (0..3).map(|_| QuadraticForm::random(&mut rng, &w)).collect();
        let q = QuadraticFactor::new(w.clone(), forms).unwrap();
        for _ in 0..200 {
            let x = Point((0..4).map(|_| rng.gen_range(0..5)).collect());
            let h = Point((0..4).map(|_| rng.gen_range(0..5)).collect());
            let at = |i: u32| q.configuration_map(&x.add(&h.scale(i, f), f));
            let (a, b, c, d) = (at(0), at(1), at(2), at(3));
            for j in 0..3 {
                let s = f.sub(f.add(a.0[j], f.mul(3, c.0[j])), f.add(f.mul(3, b.0[j]), d.0[j]));
                assert_eq!(s, 0);
            }
        }
    }

    #[test]
    fn push_to_configuration_round_trip() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = QuadraticFactor::new(
            w.clone(),
            vec![QuadraticForm::random(&mut rng, &w), QuadraticForm::random(&mut rng, &w)],
        )
        .unwrap();
        let c = SpaceFunction::constant(w.clone(), Complex64::new(0.3, 0.0));
        let ff = push_to_configuration(&c, &q).unwrap();
        let occupied: std::collections::HashSet<usize> = q.configuration_indices().into_iter().collect();
        for (y, v) in ff.values.iter().enumerate() {
            let expect = if occupied.contains(&y) { 0.3 } else { 0.0 };
            assert!((v.re - expect).abs() < 1e-15);
        }

        let mask: Vec<bool> = (0..125).map(|_| rng.gen_bool(0.4)).collect();
        let ind = SpaceFunction::indicator(w.clone(), &mask).unwrap();
        let e = conditional_expectation(&ind, &q.factor()).unwrap();
        let ff = push_to_configuration(&e, &q).unwrap();
        assert!(ff.values.iter().all(|v| (0.0..=1.0).contains(&v.re)));
        let back = ff.compose(&q).unwrap();
        for (a, b) in back.values().iter().zip(e.values()) {
            assert!((a - b).norm() < 1e-15);
        }

        assert!(matches!(push_to_configuration(&ind, &q), Err(Error::NotMeasurable { .. })) || q.factor().atom_count() == 125);
    }

    #[test]
    fn local_factor_partitions() {
        let f = f5();
        let w = AffineSpace::full(f, 2).unwrap();
        let atoms: Vec<LocalAtom> = w
            .cosets(&[vec![1, 0]])
            .unwrap()
            .into_iter()
            .map(|s| LocalAtom {
                factor: QuadraticFactor::trivial(s.clone()),
                space: s,
            })
            .collect();
        let lq = LocalQuadraticFactor::new(w.clone(), atoms.clone()).unwrap();
        assert_eq!(lq.codim_bound(), 1);
        assert_eq!(lq.b1().unwrap().atom_count(), 5);
        assert!(lq.b2().unwrap().refines(&lq.b1().unwrap()));
        assert!(LocalQuadraticFactor::new(w.clone(), atoms[..4].to_vec()).is_err());
    }
}
