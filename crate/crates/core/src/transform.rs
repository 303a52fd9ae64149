//! Additive characters and the Fourier transform on F_p^d.
//!
//! The forward transform is normalised as an expectation,
//! `f̂(ξ) = E_x f(x) e_p(−ξ·x)`, so `f̂(0)` is the mean of `f`; the inverse is
//! the plain sum `f(x) = Σ_ξ f̂(ξ) e_p(ξ·x)`. Transforms run one axis at a
//! time with a naive length-p kernel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::Result;
use crate::field::Fp;
use crate::grid::Grid;
use crate::par;
use crate::quadratic::QuadraticForm;
use crate::space::AffineSpace;

/// `e_p(a) = exp(2πi a / p)`.
pub fn character(a: u32, f: Fp) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (a % f.p()) as f64 / f.p() as f64)
}

/// `[e_p(0), …, e_p(p−1)]`.
pub fn roots(f: Fp) -> Vec<Complex64> {
    (0..f.p()).map(|a| character(a, f)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierCoefficients {
    pub p: u32,
    pub dim: usize,
    pub values: Vec<Complex64>,
}

impl FourierCoefficients {
    pub fn grid(&self) -> Grid {
        Grid::new(Fp::new(self.p).expect("valid modulus"), self.dim)
    }

    pub fn at(&self, xi: usize) -> Complex64 {
        self.values[xi]
    }

    /// `Σ_ξ |f̂(ξ)|²`.
    pub fn energy(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().map(|c| c.norm_sqr()).collect();
        par::pairwise_sum(&v)
    }
}

fn transform_axes(values: &mut [Complex64], grid: &Grid, inverse: bool) {
    let f = grid.field();
    let p = f.order();
    let roots = roots(f);
    let scale = if inverse { 1.0 } else { 1.0 / p as f64 };
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        let block = stride * p;
        par::for_each_chunk_mut(values, block, |_, chunk| {
            let mut line = vec![Complex64::new(0.0, 0.0); p];
            for o in 0..stride {
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = chunk[o + j * stride];
                }
                for k in 0..p {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, &v) in line.iter().enumerate() {
                        let e = (j * k) % p;
                        // forward uses e(−jk/p), inverse e(+jk/p)
                        let r = if inverse { roots[e] } else { roots[(p - e) % p] };
                        acc += v * r;
                    }
                    chunk[o + k * stride] = acc * scale;
                }
            }
        });
    }
}

/// Forward transform of an array of length `p^d`.
pub fn dft(values: &[Complex64], f: Fp) -> Result<FourierCoefficients> {
    let grid = Grid::for_len(f, values.len())?;
    let mut out = values.to_vec();
    transform_axes(&mut out, &grid, false);
    Ok(FourierCoefficients {
        p: f.p(),
        dim: grid.dim(),
        values: out,
    })
}

pub fn dft_real(values: &[f64], f: Fp) -> Result<FourierCoefficients> {
    let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    dft(&v, f)
}

pub fn idft(coeffs: &FourierCoefficients) -> Vec<Complex64> {
    let grid = coeffs.grid();
    let mut out = coeffs.values.clone();
    transform_axes(&mut out, &grid, true);
    out
}

/// Quadratic-time transform straight from the definition.
pub fn naive_dft(values: &[Complex64], f: Fp) -> Result<FourierCoefficients> {
    let grid = Grid::for_len(f, values.len())?;
    let roots = roots(f);
    let p = f.p() as usize;
    let n = values.len();
    let out = par::map_range(n, |xi| {
        let terms: Vec<Complex64> = (0..n)
            .map(|x| values[x] * roots[(p - grid.dot(xi, x) as usize) % p])
            .collect();
        par::pairwise_sum_c(&terms) / n as f64
    });
    Ok(FourierCoefficients {
        p: f.p(),
        dim: grid.dim(),
        values: out,
    })
}

/// Exact element `Σ_a counts[a] ζ_p^a` of Z[ζ_p].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CyclotomicInt {
    pub p: u32,
    pub counts: Vec<i64>,
}

impl PartialEq for CyclotomicInt {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.canonical().counts == other.canonical().counts
    }
}

impl CyclotomicInt {
    pub fn zero(p: u32) -> Self {
        CyclotomicInt {
            p,
            counts: vec![0; p as usize],
        }
    }

    pub fn from_counts(p: u32, counts: Vec<i64>) -> Self {
        assert_eq!(counts.len(), p as usize);
        CyclotomicInt { p, counts }
    }

    /// Representative with minimum coefficient 0, using `1 + ζ + … + ζ^{p−1} = 0`.
    pub fn canonical(&self) -> CyclotomicInt {
        let m = *self.counts.iter().min().expect("p > 0");
        CyclotomicInt {
            p: self.p,
            counts: self.counts.iter().map(|&c| c - m).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.canonical().counts.iter().all(|&c| c == 0)
    }

    /// Complex conjugate: `ζ^a ↦ ζ^{−a}`.
    pub fn conj(&self) -> CyclotomicInt {
        let p = self.p as usize;
        let counts = (0..p).map(|a| self.counts[(p - a) % p]).collect();
        CyclotomicInt { p: self.p, counts }
    }

    pub fn mul(&self, other: &CyclotomicInt) -> CyclotomicInt {
        assert_eq!(self.p, other.p);
        let p = self.p as usize;
        let mut counts = vec![0i64; p];
        for (a, &x) in self.counts.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (b, &y) in other.counts.iter().enumerate() {
                counts[(a + b) % p] += x * y;
            }
        }
        CyclotomicInt { p: self.p, counts }
    }

    /// The value as a rational integer, when it is one (all non-constant
    /// coefficients equal).
    pub fn as_integer(&self) -> Option<i64> {
        let c = &self.counts;
        c[1..].iter().all(|&x| x == c[1]).then(|| c[0] - c[1])
    }

    /// `|z|²` computed exactly as `z · z̄`; `None` never happens for a genuine
    /// element of Z[ζ_p] but is surfaced rather than unwrapped.
    pub fn norm_sqr(&self) -> Option<i64> {
        self.mul(&self.conj()).as_integer()
    }

    pub fn to_complex(&self) -> Complex64 {
        let f = Fp::new(self.p).expect("valid modulus");
        let terms: Vec<Complex64> = self
            .counts
            .iter()
            .enumerate()
            .map(|(a, &c)| character(a as u32, f) * c as f64)
            .collect();
        par::pairwise_sum_c(&terms)
    }
}

/// `Σ_{x∈W} ζ_p^{φ(x)}` computed exactly.
pub fn exact_character_sum(phi: &QuadraticForm, space: &AffineSpace) -> CyclotomicInt {
    let p = space.field().p();
    let mut acc = CyclotomicInt::zero(p);
    for x in space.enumerate() {
        acc.counts[phi.evaluate(&x) as usize] += 1;
    }
    acc
}
