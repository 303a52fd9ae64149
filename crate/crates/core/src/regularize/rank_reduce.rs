//! Restoring rank separation by passing to subspaces.
//!
//! Each round looks for a combination `Σ λ_i φ_i` of the surviving forms whose
//! rank on the current direction space `U` is below `r + 2c` (`c` forms already
//! removed), shrinks `U` to the kernel of that combination and drops the pivot
//! form. Restricting a form to a subspace of codimension `c'` lowers its rank
//! by at most `2c'`, so the survivors keep rank `≥ r` on every final atom. On
//! each coset of `U` the removed combinations are affine-linear; cutting by
//! their level sets gives the `B1` atoms.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{combination_rank, projective_points, LocalAtom, LocalQuadraticFactor, QuadraticFactor};
use crate::field::Fp;
use crate::grid::Grid;
use crate::linalg::{complement, Matrix};

/// One reduction round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RemovedForm {
    /// Coefficients over all input forms; zero outside the forms active at the time.
    pub lambda: Vec<u32>,
    pub pivot: usize,
    /// Rank of the combination on `U` when it was found.
    pub rank: usize,
    pub threshold: usize,
    pub codim_after: usize,
}

#[derive(Clone, Debug)]
pub struct RankReduction {
    pub local: LocalQuadraticFactor,
    pub removed: Vec<RemovedForm>,
    pub survivors: Vec<usize>,
    /// Codimension of the common direction space `U` in `Ẇ`.
    pub kernel_codim: usize,
}

/// `d·r + d² + d`.
pub fn codim_bound(d: usize, r: usize) -> usize {
    d * r + d * d + d
}

struct Combination {
    m: Matrix,
    r: Vec<u32>,
}

fn rows_times(z: &[Vec<u32>], basis: &[Vec<u32>], k: usize, f: Fp) -> Vec<Vec<u32>> {
    z.iter()
        .map(|coef| {
            let mut v = vec![0u32; k];
            for (&c, b) in coef.iter().zip(basis) {
                if c != 0 {
                    for (a, &x) in v.iter_mut().zip(b) {
                        *a = f.add(*a, f.mul(c, x));
                    }
                }
            }
            v
        })
        .collect()
}

fn span_point(coeffs: &[u32], vectors: &[Vec<u32>], k: usize, f: Fp) -> Vec<u32> {
    rows_times(&[coeffs.to_vec()], vectors, k, f).pop().expect("one row")
}

/// Reduces `b` to a local quadratic factor of rank `≥ r` on every atom whose
/// `B2` refines `b`; every guarantee is re-verified before returning.
pub fn rank_reduce(b: &QuadraticFactor, r: usize, cap: usize) -> Result<RankReduction> {
    let d = b.complexity();
    if d > cap {
        return Err(Error::ComplexityCap { d, cap });
    }
    let w = b.domain();
    let f = w.field();
    let k = w.dim();
    let locals: Vec<_> = b.forms().iter().map(|phi| phi.local()).collect();
    let mut active: Vec<usize> = (0..d).collect();
    let mut u_basis: Vec<Vec<u32>> = (0..k)
        .map(|i| {
            let mut e = vec![0; k];
            e[i] = 1;
            e
        })
        .collect();
    let mut removed = Vec::new();
    let mut combos = Vec::new();

    loop {
        let threshold = r + 2 * removed.len();
        if active.is_empty() {
            break;
        }
        let bu = Matrix::from_rows(&u_basis, k);
        let restricted: Vec<Matrix> = active.iter().map(|&i| locals[i].m.congruent(&bu, f)).collect();
        let found = projective_points(f, active.len()).into_iter().find_map(|lambda| {
            let rank = combination_rank(&restricted, &lambda, f);
            (rank < threshold).then_some((lambda, rank))
        });
        let Some((lambda, rank)) = found else { break };

        let mut full = vec![0u32; d];
        let mut cm = Matrix::zeros(k, k);
        let mut cr = vec![0u32; k];
        let mut cu = Matrix::zeros(u_basis.len(), u_basis.len());
        for ((&i, &l), rm) in active.iter().zip(&lambda).zip(&restricted) {
            if l == 0 {
                continue;
            }
            full[i] = l;
            cm = cm.add_scaled(&locals[i].m, l, f);
            for (a, &x) in cr.iter_mut().zip(&locals[i].r) {
                *a = f.add(*a, f.mul(l, x));
            }
            cu = cu.add_scaled(rm, l, f);
        }
        let pivot_pos = lambda.iter().rposition(|&l| l != 0).expect("nonzero λ");
        let pivot = active.remove(pivot_pos);
        let z = cu.kernel(f);
        u_basis = rows_times(&z, &u_basis, k, f);
        removed.push(RemovedForm {
            lambda: full,
            pivot,
            rank,
            threshold,
            codim_after: k - u_basis.len(),
        });
        combos.push(Combination { m: cm, r: cr });
    }

    let survivors = active;
    let kernel_codim = k - u_basis.len();
    let u = u_basis.len();
    let bu = Matrix::from_rows(&u_basis, k);
    let comp = complement(&u_basis, k, f);
    let cg = Grid::new(f, comp.len());
    let mut atoms = Vec::new();
    for ci in 0..cg.len() {
        let t = span_point(&cg.digits(ci), &comp, k, f);
        // linear part of each removed combination on t + U, in U coordinates
        let g: Vec<Vec<u32>> = combos
            .iter()
            .map(|c| {
                let mt = c.m.mul_vec(&t, f);
                let v: Vec<u32> = mt.iter().zip(&c.r).map(|(&a, &b)| f.add(f.mul(2, a), b)).collect();
                if u == 0 {
                    Vec::new()
                } else {
                    bu.mul_vec(&v, f)
                }
            })
            .collect();
        let ker = Matrix::from_rows(&g, u).kernel(f);
        let cut = complement(&ker, u, f);
        let dirs = rows_times(&ker, &u_basis, k, f);
        let sg = Grid::new(f, cut.len());
        for si in 0..sg.len() {
            let step = span_point(&sg.digits(si), &cut, u, f);
            let offset = span_point(&step, &u_basis, k, f);
            let tr: Vec<u32> = t.iter().zip(&offset).map(|(&a, &b)| f.add(a, b)).collect();
            let space = w.subspace_from_coords(&dirs, &tr)?;
            let forms = survivors
                .iter()
                .map(|&i| b.forms()[i].restrict(&space))
                .collect::<Result<Vec<_>>>()?;
            let factor = QuadraticFactor::new(space.clone(), forms)?.with_claimed_rank(r);
            atoms.push(LocalAtom { space, factor });
        }
    }
    let local = LocalQuadraticFactor::new(w.clone(), atoms)?;
    let out = RankReduction {
        local,
        removed,
        survivors,
        kernel_codim,
    };
    validate(b, r, &out)?;
    Ok(out)
}

/// Post-hoc audit: codimension bound, per-atom separation, `B2` refines `B`
/// and equals `B ∨ B1`.
pub fn validate(b: &QuadraticFactor, r: usize, red: &RankReduction) -> Result<()> {
    let d = b.complexity();
    let codim = red.local.codim_bound();
    if codim > codim_bound(d, r) {
        return Err(Error::TheoryViolation(format!(
            "rank reduction codimension {codim} exceeds {}",
            codim_bound(d, r)
        )));
    }
    for (i, atom) in red.local.atoms().iter().enumerate() {
        let chk = atom.factor.rank_separation_check(r)?;
        if let Some((lambda, rank)) = chk.witness {
            return Err(Error::TheoryViolation(format!(
                "atom {i}: combination {lambda:?} has rank {rank} < {r}"
            )));
        }
    }
    let b2 = red.local.b2()?;
    let base = b.factor();
    if !b2.refines(&base) {
        return Err(Error::TheoryViolation("B2 does not refine the input factor".into()));
    }
    if !b2.same_partition(&base.join(&red.local.b1()?)?) {
        return Err(Error::TheoryViolation("B2 differs from B ∨ B1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::QuadraticForm;
    use crate::space::AffineSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f5() -> Fp {
        Fp::new(5).unwrap()
    }

    fn diag(w: &AffineSpace, coeffs: &[u32], lin: &[u32]) -> QuadraticForm {
        let mono: Vec<(usize, usize, u32)> = coeffs.iter().enumerate().filter(|(_, &a)| a != 0).map(|(i, &a)| (i, i, a)).collect();
        QuadraticForm::from_monomials(w.clone(), &mono, lin, 0).unwrap()
    }

    #[test]
    fn already_separated_is_unchanged() {
        let w = AffineSpace::full(f5(), 4).unwrap();
        let phi = diag(&w, &[1, 1, 1, 1], &[]);
        let b = QuadraticFactor::new(w.clone(), vec![phi]).unwrap();
        let red = rank_reduce(&b, 3, 8).unwrap();
        assert_eq!(red.local.atoms().len(), 1);
        assert!(red.removed.is_empty());
        assert!(red.local.b2().unwrap().same_partition(&b.factor()));
    }

    #[test]
    fn dependent_pair_needs_one_round() {
        let w = AffineSpace::full(f5(), 4).unwrap();
        let phi = diag(&w, &[1, 2, 1, 3], &[]);
        let psi = QuadraticForm::combination(&[phi.clone(), diag(&w, &[0, 0, 0, 0], &[1, 0, 2, 0])], &[2, 1]).unwrap();
        let b = QuadraticFactor::new(w.clone(), vec![phi, psi]).unwrap();
        for r in 1..=3 {
            let red = rank_reduce(&b, r, 8).unwrap();
            assert_eq!(red.removed[0].lambda, vec![3, 1]);
            // the linear cut costs φ up to 2 in rank, so r = 3 also drops φ
            assert_eq!(red.removed.len(), if r < 3 { 1 } else { 2 });
            assert!(red.local.codim_bound() <= 2 * r + 6);
        }
    }

    #[test]
    fn linear_form_cuts_into_cosets() {
        let w = AffineSpace::full(f5(), 3).unwrap();
        let phi = diag(&w, &[0, 0, 0], &[1, 2, 0]);
        let b = QuadraticFactor::new(w.clone(), vec![phi]).unwrap();
        let red = rank_reduce(&b, 1, 8).unwrap();
        assert_eq!(red.kernel_codim, 0);
        assert_eq!(red.local.atoms().len(), 5);
        assert!(red.local.atoms().iter().all(|a| a.factor.complexity() == 0 && a.space.dim() == 2));
    }

    #[test]
    fn rank_two_drop_example() {
        // x0·x1 has rank 2; r = 3 forces a kernel of the whole form
        let w = AffineSpace::full(f5(), 2).unwrap();
        let phi = QuadraticForm::from_monomials(w.clone(), &[(0, 1, 1)], &[], 0).unwrap();
        let b = QuadraticFactor::new(w.clone(), vec![phi]).unwrap();
        let red = rank_reduce(&b, 3, 8).unwrap();
        assert_eq!(red.local.atoms().len(), 25);
    }

    #[test]
    fn random_degenerate_factors() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..30 {
            let d = rng.gen_range(1..=3);
            let mut forms: Vec<QuadraticForm> = (0..d).map(|_| QuadraticForm::random(&mut rng, &w)).collect();
            if d > 1 {
                let lam: Vec<u32> = (0..d - 1).map(|_| rng.gen_range(0..5)).collect();
                let extra = QuadraticForm::combination(&forms[..d - 1], &lam).unwrap();
                forms[d - 1] = QuadraticForm::combination(&[extra, diag(&w, &[0, 0, 0], &[1, 0, 3])], &[1, 1]).unwrap();
            }
            let b = QuadraticFactor::new(w.clone(), forms).unwrap();
            let r = rng.gen_range(1..=3);
            rank_reduce(&b, r, 8).unwrap();
        }
    }
}
