//! Inverse-U³ oracles: given `g` on an affine space, produce a partition into
//! affine pieces with one quadratic phase per piece that correlates with `g`.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Fp;
use crate::function::SpaceFunction;
use crate::grid::Grid;
use crate::linalg::Matrix;
use crate::par;
use crate::quadratic::{LocalForm, QuadraticForm};
use crate::space::AffineSpace;
use crate::transform::{dft, roots};

#[derive(Clone, Debug, Serialize)]
pub struct OraclePiece {
    pub space: AffineSpace,
    pub form: QuadraticForm,
    /// `|E_{x∈piece} g(x) e(−φ(x))|`.
    pub correlation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleResult {
    pub pieces: Vec<OraclePiece>,
    /// Size-weighted mean correlation over the pieces.
    pub score: f64,
}

impl OracleResult {
    fn single(piece: OraclePiece) -> Self {
        OracleResult {
            score: piece.correlation,
            pieces: vec![piece],
        }
    }

    fn from_pieces(pieces: Vec<OraclePiece>) -> Self {
        let total: usize = pieces.iter().map(|p| p.space.len()).sum();
        let score = pieces
            .iter()
            .map(|p| p.correlation * p.space.len() as f64 / total as f64)
            .sum();
        OracleResult { pieces, score }
    }

    /// Checks that the pieces partition `w` and each form lives on its piece.
    pub fn validate(&self, w: &AffineSpace) -> Result<()> {
        let mut covered = vec![false; w.len()];
        for piece in &self.pieces {
            if piece.form.domain() != &piece.space {
                return Err(Error::DomainMismatch);
            }
            for i in piece.space.indices_in(w)? {
                if std::mem::replace(&mut covered[i], true) {
                    return Err(Error::Inconsistent("oracle pieces overlap".into()));
                }
            }
        }
        if covered.contains(&false) {
            return Err(Error::Inconsistent("oracle pieces do not cover the atom".into()));
        }
        Ok(())
    }
}

pub trait InverseOracle: Send + Sync {
    fn name(&self) -> &'static str;

    /// `g` lives on its own domain; `seed` drives any randomness.
    fn find(&self, g: &SpaceFunction, seed: u64) -> Result<OracleResult>;
}

/// `|E g·e(−φ)|` for `φ` given by its values on the domain.
pub fn correlation(g: &[Complex64], phi_values: &[u32], f: Fp) -> f64 {
    let r = roots(f);
    let p = f.p() as usize;
    let terms: Vec<Complex64> = g
        .iter()
        .zip(phi_values)
        .map(|(v, &a)| v * r[(p - a as usize) % p])
        .collect();
    (par::pairwise_sum_c(&terms) / g.len() as f64).norm()
}

/// For a fixed homogeneous part `q`, the linear part maximising the
/// correlation: the largest coefficient of `g·e(−q)`. Ties go to the lowest
/// frequency index.
fn best_linear(g: &[Complex64], q: &[u32], f: Fp, r: &[Complex64]) -> (usize, f64) {
    let p = f.p() as usize;
    let h: Vec<Complex64> = g
        .iter()
        .zip(q)
        .map(|(v, &a)| v * r[(p - a as usize) % p])
        .collect();
    let c = dft(&h, f).expect("power-of-p length");
    argmax(c.values.iter().map(|z| z.norm()))
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

fn piece(space: &AffineSpace, m: Matrix, r: Vec<u32>, g: &[Complex64]) -> Result<OraclePiece> {
    let f = space.field();
    let local = LocalForm { field: f, m, r, c: 0 };
    let form = QuadraticForm::from_local(space.clone(), &local)?;
    let correlation = correlation(g, &local.values(), f);
    Ok(OraclePiece {
        space: space.clone(),
        form,
        correlation,
    })
}

/// Upper-triangular entries `(i, j)`, `i ≤ j`, in row order.
fn entries(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect()
}

fn symmetric_from(coeffs: &[u32], k: usize) -> Matrix {
    let mut m = Matrix::zeros(k, k);
    for (&(i, j), &c) in entries(k).iter().zip(coeffs) {
        m.set(i, j, c);
        m.set(j, i, c);
    }
    m
}

/// Hard ceiling on the number of symmetric matrices the exhaustive oracle
/// may enumerate (`5^10`).
pub const EXHAUSTIVE_MATRIX_LIMIT: usize = 9_765_625;

/// Searches every symmetric `M` and linear part at codimension 0; the
/// returned phase is a global maximiser of the correlation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExhaustiveOracle {
    pub max_dim: usize,
}

impl Default for ExhaustiveOracle {
    fn default() -> Self {
        ExhaustiveOracle { max_dim: 3 }
    }
}

impl ExhaustiveOracle {
    pub fn feasible(&self, f: Fp, k: usize) -> bool {
        k <= self.max_dim
            && f.order()
                .checked_pow((k * (k + 1) / 2) as u32)
                .is_some_and(|c| c <= EXHAUSTIVE_MATRIX_LIMIT)
    }

    /// `(M, linear part, correlation)` of the best phase, in basis coordinates.
    pub fn search(&self, g: &SpaceFunction) -> Result<(Matrix, Vec<u32>, f64)> {
        let w = g.domain();
        let f = w.field();
        let k = w.dim();
        if !self.feasible(f, k) {
            return Err(Error::OracleDimension { dim: k, cap: self.max_dim });
        }
        let grid = w.grid();
        let n = grid.len();
        let p = f.p();
        let ents = entries(k);
        // q(t) = Σ_e coeff_e · mono_e(t)
        let mono: Vec<Vec<u32>> = (0..n)
            .map(|t| {
                let d = grid.digits(t);
                ents.iter()
                    .map(|&(i, j)| {
                        let v = f.mul(d[i], d[j]);
                        if i == j {
                            v
                        } else {
                            f.mul(2, v)
                        }
                    })
                    .collect()
            })
            .collect();
        let mgrid = Grid::new(f, ents.len());
        let r = roots(f);
        let vals = g.values();
        const BLOCK: usize = 4096;
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for start in (0..mgrid.len()).step_by(BLOCK) {
            let end = (start + BLOCK).min(mgrid.len());
            let results = par::map_range(end - start, |o| {
                let coeffs = mgrid.digits(start + o);
                let q: Vec<u32> = mono
                    .iter()
                    .map(|mt| mt.iter().zip(&coeffs).fold(0, |acc, (&a, &b)| (acc + a * b) % p))
                    .collect();
                best_linear(vals, &q, f, &r)
            });
            for (o, (xi, c)) in results.into_iter().enumerate() {
                if c > best.2 {
                    best = (start + o, xi, c);
                }
            }
        }
        let m = symmetric_from(&mgrid.digits(best.0), k);
        Ok((m, grid.digits(best.1), best.2))
    }
}

impl InverseOracle for ExhaustiveOracle {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn find(&self, g: &SpaceFunction, _seed: u64) -> Result<OracleResult> {
        let (m, r, _) = self.search(g)?;
        Ok(OracleResult::single(piece(g.domain(), m, r, g.values())?))
    }
}

/// Best correlation over all `(M, r)` by direct summation, looping over the
/// linear part outside the matrix. Independent of [`ExhaustiveOracle`]; meant
/// for cross-checking on tiny spaces.
pub fn brute_force_best(g: &SpaceFunction) -> Result<f64> {
    let w = g.domain();
    let f = w.field();
    let k = w.dim();
    if w.len() > 125 || k > 3 {
        return Err(Error::OracleDimension { dim: k, cap: 3 });
    }
    let grid = w.grid();
    let mgrid = Grid::new(f, k * (k + 1) / 2);
    let r = roots(f);
    let p = f.p() as usize;
    let mut best = 0.0f64;
    for lin in 0..grid.len() {
        let rv = grid.digits(lin);
        for mi in 0..mgrid.len() {
            let m = symmetric_from(&mgrid.digits(mi), k);
            let local = LocalForm { field: f, m, r: rv.clone(), c: 0 };
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..grid.len() {
                let a = local.evaluate(&grid.digits(t)) as usize;
                acc += g.values()[t] * r[(p - a) % p];
            }
            best = best.max(acc.norm() / grid.len() as f64);
        }
    }
    Ok(best)
}

/// Heuristic oracle: reads `2M` off the peaks of `Δ_h g`, votes over random
/// solves, then fits the linear part; cuts by linear phases when the fit is
/// weak.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeFitOracle {
    /// Random solves tried per fit.
    pub trials: usize,
    /// Shifts sampled when the space has more points than this.
    pub samples: usize,
    pub depth_cap: usize,
    /// Correlation at which a piece is accepted without cutting.
    pub accept: f64,
}

impl Default for DerivativeFitOracle {
    fn default() -> Self {
        DerivativeFitOracle {
            trials: 64,
            samples: 256,
            depth_cap: 2,
            accept: 0.9,
        }
    }
}

struct Peak {
    h: Vec<u32>,
    xi: Vec<u32>,
    weight: f64,
}

impl DerivativeFitOracle {
    fn peaks(&self, g: &[Complex64], grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<Peak> {
        let n = grid.len();
        let mut hs: Vec<usize> = (1..n).collect();
        if hs.len() > self.samples {
            hs.shuffle(rng);
            hs.truncate(self.samples);
            hs.sort_unstable();
        }
        let f = grid.field();
        par::map_slice(&hs, |&h| {
            // Δ_h g(t) = g(t + h)·conj g(t) peaks at 2Mh for a pure phase
            let d: Vec<Complex64> = (0..n).map(|t| g[grid.add(t, h)] * g[t].conj()).collect();
            let c = dft(&d, f).expect("power-of-p length");
            let (xi, weight) = argmax(c.values.iter().map(|z| z.norm()));
            Peak {
                h: grid.digits(h),
                xi: grid.digits(xi),
                weight,
            }
        })
    }

    /// Symmetric `M` agreeing with the most peak weight.
    fn fit_matrix(&self, peaks: &[Peak], k: usize, f: Fp, rng: &mut ChaCha8Rng) -> Matrix {
        let agreement = |m: &Matrix| -> f64 {
            peaks
                .iter()
                .filter(|pk| m.mul_vec(&pk.h, f).iter().map(|&v| f.mul(2, v)).eq(pk.xi.iter().copied()))
                .map(|pk| pk.weight)
                .sum()
        };
        let mut best = Matrix::zeros(k, k);
        let mut best_score = agreement(&best);
        if peaks.len() < k {
            return best;
        }
        let half = f.half();
        for _ in 0..self.trials {
            let pick: Vec<&Peak> = peaks.choose_multiple(rng, k).collect();
            let h = Matrix::from_rows(&pick.iter().map(|pk| pk.h.clone()).collect::<Vec<_>>(), k);
            let Some(hinv) = h.inverse(f) else { continue };
            // H·(2M) = Ξ, rows h_i and ξ_i
            let xi = Matrix::from_rows(&pick.iter().map(|pk| pk.xi.clone()).collect::<Vec<_>>(), k);
            let two_m = hinv.mul(&xi, f);
            let sym = two_m.add_scaled(&two_m.transpose(), 1, f).scale(f.mul(half, half), f);
            let s = agreement(&sym);
            if s > best_score {
                best = sym;
                best_score = s;
            }
        }
        best
    }

    fn fit(&self, space: &AffineSpace, g: &[Complex64], rng: &mut ChaCha8Rng) -> Result<OraclePiece> {
        let f = space.field();
        let k = space.dim();
        let grid = space.grid();
        let m = if k == 0 {
            Matrix::zeros(0, 0)
        } else {
            let peaks = self.peaks(g, &grid, rng);
            self.fit_matrix(&peaks, k, f, rng)
        };
        let q = LocalForm {
            field: f,
            m: m.clone(),
            r: vec![0; k],
            c: 0,
        }
        .values();
        let (xi, _) = best_linear(g, &q, f, &roots(f));
        piece(space, m, grid.digits(xi), g)
    }

    fn search(&self, space: &AffineSpace, g: &[Complex64], depth: usize, rng: &mut ChaCha8Rng) -> Result<OracleResult> {
        let whole = self.fit(space, g, rng)?;
        if whole.correlation >= self.accept || depth >= self.depth_cap || space.dim() == 0 {
            return Ok(OracleResult::single(whole));
        }
        let f = space.field();
        let grid = space.grid();
        let c = dft(g, f)?;
        let (xi, _) = argmax(c.values.iter().enumerate().map(|(i, z)| if i == 0 { -1.0 } else { z.norm() }));
        let normal = grid.digits(xi);
        let ker = Matrix::from_rows(&[normal.clone()], space.dim()).kernel(f);
        let cosets = space.cosets(&ker)?;
        let mut pieces = Vec::new();
        for coset in &cosets {
            let idx = coset.indices_in(space)?;
            let sub: Vec<Complex64> = idx.iter().map(|&i| g[i]).collect();
            pieces.extend(self.search(coset, &sub, depth + 1, rng)?.pieces);
        }
        let split = OracleResult::from_pieces(pieces);
        Ok(if split.score > whole.correlation {
            split
        } else {
            OracleResult::single(whole)
        })
    }
}

impl InverseOracle for DerivativeFitOracle {
    fn name(&self) -> &'static str {
        "derivative-fit"
    }

    fn find(&self, g: &SpaceFunction, seed: u64) -> Result<OracleResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.search(g.domain(), g.values(), 0, &mut rng)
    }
}

/// Oracle selection carried in run parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OracleConfig {
    Exhaustive(ExhaustiveOracle),
    DerivativeFit(DerivativeFitOracle),
    /// Exhaustive where feasible, derivative-fit otherwise.
    Auto {
        exhaustive: ExhaustiveOracle,
        fallback: DerivativeFitOracle,
    },
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig::Auto {
            exhaustive: ExhaustiveOracle::default(),
            fallback: DerivativeFitOracle::default(),
        }
    }
}

impl InverseOracle for OracleConfig {
    fn name(&self) -> &'static str {
        match self {
            OracleConfig::Exhaustive(o) => o.name(),
            OracleConfig::DerivativeFit(o) => o.name(),
            OracleConfig::Auto { .. } => "auto",
        }
    }

    fn find(&self, g: &SpaceFunction, seed: u64) -> Result<OracleResult> {
        match self {
            OracleConfig::Exhaustive(o) => o.find(g, seed),
            OracleConfig::DerivativeFit(o) => o.find(g, seed),
            OracleConfig::Auto { exhaustive, fallback } => {
                if exhaustive.feasible(g.domain().field(), g.domain().dim()) {
                    exhaustive.find(g, seed)
                } else {
                    fallback.find(g, seed)
                }
            }
        }
    }
}

/// Uniform random seed stream for per-atom oracle calls.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng.gen()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f5() -> Fp {
        Fp::new(5).unwrap()
    }

    fn phase_of(phi: &QuadraticForm) -> SpaceFunction {
        let r = roots(phi.field());
        SpaceFunction::bounded(phi.domain().clone(), phi.values().iter().map(|&a| r[a as usize]).collect()).unwrap()
    }

    fn differs_by_constant(a: &QuadraticForm, b: &QuadraticForm) -> bool {
        let f = a.field();
        let (va, vb) = (a.values(), b.values());
        va.iter().zip(&vb).all(|(&x, &y)| f.sub(x, y) == f.sub(va[0], vb[0]))
    }

    #[test]
    fn exhaustive_recovers_planted_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for n in 1..=3 {
            let w = AffineSpace::full(f5(), n).unwrap();
            for _ in 0..3 {
                let psi = QuadraticForm::random(&mut rng, &w);
                let res = ExhaustiveOracle::default().find(&phase_of(&psi), 0).unwrap();
                assert!((res.score - 1.0).abs() < 1e-9);
                assert!(differs_by_constant(&res.pieces[0].form, &psi));
            }
        }
    }

    #[test]
    fn exhaustive_on_constant_and_cap() {
        let w = AffineSpace::full(f5(), 2).unwrap();
        let g = SpaceFunction::constant(w.clone(), Complex64::new(0.4, 0.0));
        let res = ExhaustiveOracle::default().find(&g, 0).unwrap();
        assert!((res.score - 0.4).abs() < 1e-12);
        let local = res.pieces[0].form.local();
        assert!(local.m.is_zero() && local.r.iter().all(|&x| x == 0));
        let big = AffineSpace::full(f5(), 4).unwrap();
        let g = SpaceFunction::constant(big, Complex64::new(1.0, 0.0));
        assert!(matches!(ExhaustiveOracle::default().find(&g, 0), Err(Error::OracleDimension { .. })));
    }

    #[test]
    fn exhaustive_agrees_with_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let w = AffineSpace::full(f5(), 2).unwrap();
        for _ in 0..5 {
            let v = (0..25).map(|_| Complex64::new(if rng.gen_bool(0.5) { 1.0 } else { -1.0 }, 0.0)).collect();
            let g = SpaceFunction::bounded(w.clone(), v).unwrap();
            let (_, _, score) = ExhaustiveOracle::default().search(&g).unwrap();
            assert!((score - brute_force_best(&g).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_fit_recovers_planted_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let w = AffineSpace::full(f5(), 3).unwrap();
        let mut done = 0;
        while done < 5 {
            let psi = QuadraticForm::random(&mut rng, &w);
            if psi.rank() < 2 {
                continue;
            }
            let res = DerivativeFitOracle::default().find(&phase_of(&psi), done).unwrap();
            assert!(res.score >= 0.99);
            assert!(differs_by_constant(&res.pieces[0].form, &psi));
            done += 1;
        }
    }

    #[test]
    fn derivative_fit_on_noisy_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let w = AffineSpace::full(f5(), 3).unwrap();
        let psi = loop {
            let psi = QuadraticForm::random(&mut rng, &w);
            if psi.rank() >= 2 {
                break psi;
            }
        };
        let clean = phase_of(&psi);
        let v = clean
            .values()
            .iter()
            .map(|z| z * 0.5 + Complex64::from_polar(0.5, rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        let g = SpaceFunction::bounded(w.clone(), v).unwrap();
        let mut scores: Vec<f64> = (0..5).map(|s| DerivativeFitOracle::default().find(&g, s).unwrap().score).collect();
        scores.sort_by(f64::total_cmp);
        assert!(scores[2] >= 0.2, "{scores:?}");
    }

    #[test]
    fn oracle_output_partitions_the_atom() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let w = AffineSpace::new(f5(), vec![vec![1, 0, 2, 0], vec![0, 1, 1, 0], vec![0, 0, 0, 1]], crate::space::Point(vec![0, 3, 0, 1])).unwrap();
        let v = (0..w.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
        let g = SpaceFunction::bounded(w.clone(), v).unwrap();
        for oracle in [OracleConfig::default(), OracleConfig::DerivativeFit(DerivativeFitOracle { accept: 1.1, ..Default::default() })] {
            let res = oracle.find(&g, 7).unwrap();
            res.validate(&w).unwrap();
            for p in &res.pieces {
                let idx = p.space.indices_in(&w).unwrap();
                let sub: Vec<Complex64> = idx.iter().map(|&i| g.values()[i]).collect();
                assert!((correlation(&sub, &p.form.values(), f5()) - p.correlation).abs() < 1e-12);
            }
        }
    }
}
