//! Gowers U² and U³ norms, the progression operator `T_W`, and numerical
//! checks of the inequalities that tie them to quadratic factors.
//!
//! All loops run in the basis coordinates of the domain, where `x + h` is
//! digitwise addition of canonical indices.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factor::{conditional_expectation, push_to_configuration, FactorFunction, QuadraticFactor};
use crate::field::Fp;
use crate::function::SpaceFunction;
use crate::grid::Grid;
use crate::linalg::Matrix;
use crate::par;
use crate::transform::{dft, roots};

/// Largest domain accepted by [`u3_eighth_naive`].
pub const NAIVE_U3_LIMIT: usize = 625;

/// Slack used by the pass/fail predicates.
pub const INEQUALITY_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn common_domain(fs: &[&SpaceFunction]) -> Result<Grid> {
    for g in &fs[1..] {
        fs[0].same_domain(g)?;
    }
    Ok(fs[0].domain().grid())
}

/// `x ↦ x + h` for every `x` of the grid.
fn shift(grid: &Grid, h: usize) -> Vec<u32> {
    (0..grid.len()).map(|x| grid.add(x, h) as u32).collect()
}

/// `T_W(f0,f1,f2,f3) = E_{x∈W, h∈Ẇ} f0(x) f1(x+h) f2(x+2h) f3(x+3h)`, with
/// `h = 0` included.
pub fn t_count(f0: &SpaceFunction, f1: &SpaceFunction, f2: &SpaceFunction, f3: &SpaceFunction) -> Result<Complex64> {
    let grid = common_domain(&[f0, f1, f2, f3])?;
    let (v0, v1, v2, v3) = (f0.values(), f1.values(), f2.values(), f3.values());
    let n = grid.len();
    let per_h = par::map_range(n, |h| {
        let s = shift(&grid, h);
        let mut acc = ZERO;
        for x in 0..n {
            let x1 = s[x] as usize;
            let x2 = s[x1] as usize;
            let x3 = s[x2] as usize;
            acc += v0[x] * v1[x1] * v2[x2] * v3[x3];
        }
        acc
    });
    Ok(par::pairwise_sum_c(&per_h) / (n * n) as f64)
}

/// `T_W(f) = T_W(f,f,f,f)`.
pub fn t_count_single(f: &SpaceFunction) -> Complex64 {
    t_count(f, f, f, f).expect("shared domain")
}

/// `T_W` through the transform: the sum of `∏ f̂_i(ξ_i)` over
/// `Σ ξ_i = Σ i·ξ_i = 0`, parametrised as `(a + 2b, −2a − 3b, a, b)`.
pub fn t_count_fourier(f0: &SpaceFunction, f1: &SpaceFunction, f2: &SpaceFunction, f3: &SpaceFunction) -> Result<Complex64> {
    let grid = common_domain(&[f0, f1, f2, f3])?;
    let f = grid.field();
    let h: Vec<Vec<Complex64>> = [f0, f1, f2, f3]
        .iter()
        .map(|g| dft(g.values(), f).map(|c| c.values))
        .collect::<Result<_>>()?;
    let n = grid.len();
    let per_a = par::map_range(n, |a| {
        let a2 = grid.scale(a, 2);
        let mut acc = ZERO;
        for b in 0..n {
            let xi0 = grid.add_scaled(a, b, 2);
            let xi1 = grid.neg(grid.add_scaled(a2, b, 3));
            acc += h[0][xi0] * h[1][xi1] * h[2][a] * h[3][b];
        }
        acc
    });
    Ok(par::pairwise_sum_c(&per_a))
}

/// Progressions with distinct terms inside `A`: `|W|²·T_W(1_A) − |A|`.
pub fn nontrivial_progressions(indicator: &SpaceFunction) -> f64 {
    let n = indicator.len() as f64;
    let members: f64 = indicator.values().iter().map(|v| v.re).sum();
    n * n * t_count_single(indicator).re - members
}

/// `‖g‖⁴_{U²} = Σ_ξ |ĝ(ξ)|⁴` for values on a grid of length `p^k`.
pub fn u2_fourth(values: &[Complex64], f: Fp) -> Result<f64> {
    let c = dft(values, f)?;
    let q: Vec<f64> = c.values.iter().map(|z| z.norm_sqr().powi(2)).collect();
    Ok(par::pairwise_sum(&q))
}

pub fn u2_norm(g: &SpaceFunction) -> f64 {
    u2_fourth(g.values(), g.domain().field())
        .expect("domain length is a power of p")
        .max(0.0)
        .powf(0.25)
}

/// `‖f‖⁸_{U³} = E_h ‖Δ_h f‖⁴_{U²}` with `Δ_h f(x) = f(x)·conj f(x+h)`.
pub fn u3_eighth_fast(f: &SpaceFunction) -> f64 {
    let grid = f.domain().grid();
    let field = grid.field();
    let v = f.values();
    let n = grid.len();
    let per_h = par::map_range(n, |h| {
        let s = shift(&grid, h);
        let d: Vec<Complex64> = (0..n).map(|x| v[x] * v[s[x] as usize].conj()).collect();
        u2_fourth(&d, field).expect("power-of-p length")
    });
    par::pairwise_sum(&per_h) / n as f64
}

pub fn u3_norm(f: &SpaceFunction) -> f64 {
    u3_eighth_fast(f).max(0.0).powf(0.125)
}

const LANES: usize = 4;

/// `Σ_h conj(a_h)·b_h` over split real/imaginary slices.
fn conj_dot(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let mut sr = [0.0; LANES];
    let mut si = [0.0; LANES];
    let (ca, cb) = (ar.chunks_exact(LANES), br.chunks_exact(LANES));
    let (ta, tb) = (ca.remainder(), cb.remainder());
    let mut tail = (0.0, 0.0);
    let (cai, cbi) = (ai.chunks_exact(LANES), bi.chunks_exact(LANES));
    let (tai, tbi) = (cai.remainder(), cbi.remainder());
    for (((a, b), ia), ib) in ca.zip(cb).zip(cai).zip(cbi) {
        for l in 0..LANES {
            sr[l] += a[l] * b[l] + ia[l] * ib[l];
            si[l] += a[l] * ib[l] - ia[l] * b[l];
        }
    }
    for (((a, b), ia), ib) in ta.iter().zip(tb).zip(tai).zip(tbi) {
        tail.0 += a * b + ia * ib;
        tail.1 += a * ib - ia * b;
    }
    (sr.iter().sum::<f64>() + tail.0, si.iter().sum::<f64>() + tail.1)
}

/// Eighth power straight from the definition, a sum over all
/// `(x, h1, h2, h3)`. For fixed `h1` the summand is
/// `g(x)·conj g(x+h2)·conj g(x+h3)·g(x+h2+h3)` with `g = Δ_{h1} f`, and it is
/// symmetric in `(h1, h2, h3)`, so only `h1 ≤ h2 ≤ h3` is visited with
/// multiplicities 1, 3 or 6.
pub fn u3_eighth_naive(f: &SpaceFunction) -> Result<f64> {
    let grid = f.domain().grid();
    let n = grid.len();
    if n > NAIVE_U3_LIMIT {
        return Err(Error::NaiveTooLarge {
            size: n,
            limit: NAIVE_U3_LIMIT,
        });
    }
    let table = grid.add_table().expect("small grid");
    let v = f.values();
    let per_h1 = par::map_range(n, |h1| {
        let g: Vec<Complex64> = (0..n).map(|y| v[y] * v[table.row(y)[h1] as usize].conj()).collect();
        // re[y·n + h] + i·im[y·n + h] = g(y + h)
        let mut re = vec![0.0; n * n];
        let mut im = vec![0.0; n * n];
        for y in 0..n {
            for (h, &z) in table.row(y).iter().enumerate() {
                re[y * n + h] = g[z as usize].re;
                im[y * n + h] = g[z as usize].im;
            }
        }
        let mut acc = ZERO;
        for x in 0..n {
            let rx = table.row(x);
            for h2 in h1..n {
                let x2 = rx[h2] as usize;
                let outer = g[x] * g[x2].conj();
                let (a, b) = (x * n, x2 * n);
                let diag = Complex64::new(re[a + h2], -im[a + h2]) * Complex64::new(re[b + h2], im[b + h2]);
                let (tr, ti) = conj_dot(
                    &re[a + h2 + 1..a + n],
                    &im[a + h2 + 1..a + n],
                    &re[b + h2 + 1..b + n],
                    &im[b + h2 + 1..b + n],
                );
                let tail = Complex64::new(tr, ti);
                let inner = if h1 == h2 { diag + tail * 3.0 } else { diag * 3.0 + tail * 6.0 };
                acc += outer * inner;
            }
        }
        acc
    });
    let total = par::pairwise_sum_c(&per_h1);
    Ok(total.re / (n as f64).powi(4))
}

pub fn u3_norm_naive(f: &SpaceFunction) -> Result<f64> {
    Ok(u3_eighth_naive(f)?.max(0.0).powf(0.125))
}

/// `‖f‖⁸_{U³} = E_{h1,h2} |E_x Δ_{h1} Δ_{h2} f(x)|²`: the definition with the
/// `h3` average folded into a square. Cubic time, no transforms.
pub fn u3_eighth_cube(f: &SpaceFunction) -> f64 {
    let grid = f.domain().grid();
    let n = grid.len();
    let v = f.values();
    let shifts: Vec<Vec<u32>> = (0..n).map(|h| shift(&grid, h)).collect();
    let per_h1 = par::map_range(n, |h1| {
        let s1 = &shifts[h1];
        let mut acc = 0.0;
        for (h2, s2) in shifts.iter().enumerate() {
            let s12 = &shifts[grid.add(h1, h2)];
            let mut m = ZERO;
            for x in 0..n {
                m += v[x] * v[s1[x] as usize].conj() * v[s2[x] as usize].conj() * v[s12[x] as usize];
            }
            acc += m.norm_sqr();
        }
        acc
    });
    par::pairwise_sum(&per_h1) / (n as f64).powi(4)
}

#[derive(Clone, Debug, Serialize)]
pub struct GvnReport {
    pub t: Complex64,
    pub norms: [f64; 4],
    pub min_norm: f64,
    pub pass: bool,
}

/// `|T_W(f0,…,f3)| ≤ min_i ‖f_i‖_{U³}` for bounded inputs.
pub fn gvn_bound_check(fs: [&SpaceFunction; 4]) -> Result<GvnReport> {
    for f in fs {
        f.check_bounded()?;
    }
    let t = t_count(fs[0], fs[1], fs[2], fs[3])?;
    let norms = fs.map(u3_norm);
    let min_norm = norms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(GvnReport {
        t,
        norms,
        min_norm,
        pass: t.norm() <= min_norm + INEQUALITY_TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct TelescopingReport {
    pub difference: Complex64,
    pub telescoped: Complex64,
    pub identity_error: f64,
    pub bound: f64,
    pub identity_holds: bool,
    pub pass: bool,
}

/// `T(f) − T(g)` against the four-term telescoping sum and `4‖f − g‖_{U³}`.
pub fn telescoping_bound_check(f: &SpaceFunction, g: &SpaceFunction) -> Result<TelescopingReport> {
    f.check_bounded()?;
    g.check_bounded()?;
    let e = f.sub(g)?;
    let difference = t_count_single(f) - t_count_single(g);
    let telescoped = t_count(&e, g, g, g)? + t_count(f, &e, g, g)? + t_count(f, f, &e, g)? + t_count(f, f, f, &e)?;
    let identity_error = (difference - telescoped).norm();
    let bound = 4.0 * u3_norm(&e);
    let identity_holds = identity_error <= IDENTITY_TOL;
    Ok(TelescopingReport {
        difference,
        telescoped,
        identity_error,
        bound,
        identity_holds,
        pass: identity_holds && difference.norm() <= bound + INEQUALITY_TOL,
    })
}

/// Largest imaginary part tolerated for a "real" configuration function.
pub const REAL_TOL: f64 = 1e-12;

fn check_real(ff: &FactorFunction) -> Result<()> {
    match ff.values.iter().position(|z| z.im.abs() > REAL_TOL) {
        Some(index) => Err(Error::NotReal {
            index,
            imag: ff.values[index].im,
        }),
        None => Ok(()),
    }
}

/// `Σ_ξ |𝐟̂(ξ)|² |𝐟̂(3ξ)|²` on `F_p^d`; `𝐟` must be real.
pub fn fourier_ap_count(ff: &FactorFunction) -> Result<f64> {
    check_real(ff)?;
    let grid = ff.grid();
    let c = dft(&ff.values, grid.field())?;
    let terms: Vec<f64> = (0..grid.len())
        .map(|xi| c.values[xi].norm_sqr() * c.values[grid.scale(xi, 3)].norm_sqr())
        .collect();
    Ok(par::pairwise_sum(&terms))
}

/// `(ξ, −3ξ, 3ξ, −ξ)`: the tuples on which `m ≡ 1`.
pub fn in_constraint_set(xi: &[Vec<u32>; 4], f: Fp) -> bool {
    let d = xi[0].len();
    (0..d).all(|j| {
        let a = xi[0][j];
        xi[1][j] == f.mul(f.neg(3), a) && xi[2][j] == f.mul(3, a) && xi[3][j] == f.neg(a)
    })
}

pub fn constraint_tuple(xi: &[u32], f: Fp) -> [Vec<u32>; 4] {
    let s = |k: u32| xi.iter().map(|&a| f.mul(k, a)).collect::<Vec<u32>>();
    [s(1), s(f.neg(3)), s(3), s(f.neg(1))]
}

/// `m(ξ0,…,ξ3) = E_{x∈W, h∈Ẇ} e(Σ_i ξ_i·Φ(x + ih))`.
pub fn m_coefficient(q: &QuadraticFactor, xi: &[Vec<u32>; 4]) -> Result<Complex64> {
    let d = q.complexity();
    if xi.iter().any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xi.iter().map(|v| v.len()).find(|&l| l != d).unwrap_or(d),
        });
    }
    let f = q.field();
    let p = f.order();
    let vals: Vec<Vec<u32>> = q.forms().iter().map(|phi| phi.values()).collect();
    let phase: Vec<Vec<u8>> = xi
        .iter()
        .map(|x| {
            (0..q.domain().len())
                .map(|pt| {
                    let s = vals.iter().zip(x).fold(0u32, |acc, (v, &c)| f.add(acc, f.mul(c, v[pt])));
                    s as u8
                })
                .collect()
        })
        .collect();
    let grid = q.domain().grid();
    let n = grid.len();
    let per_h = par::map_range(n, |h| {
        let s = shift(&grid, h);
        let mut counts = vec![0u64; p];
        for x in 0..n {
            let x1 = s[x] as usize;
            let x2 = s[x1] as usize;
            let x3 = s[x2] as usize;
            let e = phase[0][x] as usize + phase[1][x1] as usize + phase[2][x2] as usize + phase[3][x3] as usize;
            counts[e % p] += 1;
        }
        counts
    });
    let mut counts = vec![0u64; p];
    for c in per_h {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    let r = roots(f);
    let total: Complex64 = counts.iter().zip(&r).map(|(&c, z)| z * c as f64).sum();
    Ok(total / (n * n) as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct AveragingReport {
    pub mean_w: Complex64,
    pub mean_config: Complex64,
    pub difference: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `|E_W f − E_{F^d} 𝐟| ≤ p^{(d−r)/2}` for a bounded measurable `f`.
pub fn averaging_lemma_check(q: &QuadraticFactor, f: &SpaceFunction, r: usize) -> Result<AveragingReport> {
    q.require_rank(r)?;
    f.check_bounded()?;
    let ff = push_to_configuration(f, q)?;
    let mean_w = f.mean();
    let mean_config = par::pairwise_sum_c(&ff.values) / ff.values.len() as f64;
    let difference = (mean_w - mean_config).norm();
    let p = q.field().p() as f64;
    let bound = p.powf((q.complexity() as f64 - r as f64) / 2.0);
    Ok(AveragingReport {
        mean_w,
        mean_config,
        difference,
        bound,
        pass: difference <= bound + INEQUALITY_TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OscillationSample {
    pub xi: [Vec<u32>; 4],
    pub in_sigma: bool,
    pub m: Complex64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountingReport {
    pub t_direct: f64,
    pub fourier: f64,
    pub difference: f64,
    pub bound: f64,
    pub main_term_pass: bool,
    pub oscillation_bound: f64,
    pub samples: Vec<OscillationSample>,
    pub pass: bool,
}

/// Checks `|m − 1_Σ| ≤ p^{−r/2}` (off Σ) or `|m − 1| ≤ 1e−10` (on Σ).
pub fn oscillation_sample(q: &QuadraticFactor, xi: [Vec<u32>; 4], r: usize) -> Result<OscillationSample> {
    let f = q.field();
    let in_sigma = in_constraint_set(&xi, f);
    let m = m_coefficient(q, &xi)?;
    let pass = if in_sigma {
        (m - Complex64::new(1.0, 0.0)).norm() <= IDENTITY_TOL
    } else {
        m.norm() <= (f.p() as f64).powf(-(r as f64) / 2.0) + INEQUALITY_TOL
    };
    Ok(OscillationSample { xi, in_sigma, m, pass })
}

/// `|T_W(f) − Σ_ξ|𝐟̂(ξ)|²|𝐟̂(3ξ)|²| ≤ p^{(4d−r)/2}` plus the given
/// oscillation samples.
pub fn counting_lemma_check(
    q: &QuadraticFactor,
    f: &SpaceFunction,
    r: usize,
    xis: Vec<[Vec<u32>; 4]>,
) -> Result<CountingReport> {
    q.require_rank(r)?;
    f.check_bounded()?;
    let ff = push_to_configuration(f, q)?;
    let fourier = fourier_ap_count(&ff)?;
    let t = t_count_single(f);
    let d = q.complexity() as f64;
    let p = q.field().p() as f64;
    let bound = p.powf((4.0 * d - r as f64) / 2.0);
    let difference = (t - Complex64::new(fourier, 0.0)).norm();
    let samples = xis
        .into_iter()
        .map(|xi| oscillation_sample(q, xi, r))
        .collect::<Result<Vec<_>>>()?;
    let main_term_pass = difference <= bound + INEQUALITY_TOL;
    let pass = main_term_pass && samples.iter().all(|s| s.pass);
    Ok(CountingReport {
        t_direct: t.re,
        fourier,
        difference,
        bound,
        main_term_pass,
        oscillation_bound: p.powf(-(r as f64) / 2.0),
        samples,
        pass,
    })
}

/// How `T_W(E(1_A|B))` is evaluated in [`positivity_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TRoute {
    Direct,
    Structured,
}

#[derive(Clone, Debug, Serialize)]
pub struct PositivityReport {
    pub alpha: f64,
    pub density: f64,
    pub d: usize,
    pub verified_rank: usize,
    pub t: f64,
    pub rhs: f64,
    pub route: TRoute,
    pub pass: bool,
}

/// Domains up to this size use the direct `O(|W|²)` evaluation by default.
pub const DIRECT_T_LIMIT: usize = 15_625;

/// `T_W(E(1_A|B)) ≥ α⁴ − 5p^{−3d}` for a factor of rank at least `10d`.
pub fn positivity_check(q: &QuadraticFactor, members: &[bool], alpha: f64, route: Option<TRoute>) -> Result<PositivityReport> {
    let d = q.complexity();
    let check = q.require_rank(10 * d)?;
    let w = q.domain();
    if members.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: members.len(),
        });
    }
    let density = members.iter().filter(|&&b| b).count() as f64 / w.len() as f64;
    if density < alpha {
        return Err(Error::InvalidParameter(format!("density {density} is below α = {alpha}")));
    }
    let route = route.unwrap_or(if w.len() <= DIRECT_T_LIMIT || d > 1 {
        TRoute::Direct
    } else {
        TRoute::Structured
    });
    let t = match route {
        TRoute::Direct => {
            let ind = SpaceFunction::indicator(w.clone(), members)?;
            let e = conditional_expectation(&ind, &q.factor())?;
            t_count_single(&e).re
        }
        TRoute::Structured => structured_t(q, &atom_densities(q, members))?,
    };
    let p = q.field().p() as f64;
    let rhs = alpha.powi(4) - 5.0 * p.powf(-3.0 * d as f64);
    Ok(PositivityReport {
        alpha,
        density,
        d,
        verified_rank: check.min_rank.unwrap_or(usize::MAX),
        t,
        rhs,
        route,
        pass: t >= rhs - INEQUALITY_TOL,
    })
}

/// `𝐟 = E(1_A|B)` on configuration space; unoccupied configurations get 0.
pub fn atom_densities(q: &QuadraticFactor, members: &[bool]) -> FactorFunction {
    let grid = q.configuration_grid();
    let mut hits = vec![0u64; grid.len()];
    let mut sizes = vec![0u64; grid.len()];
    for (y, &m) in q.configuration_indices().iter().zip(members) {
        sizes[*y] += 1;
        hits[*y] += u64::from(m);
    }
    FactorFunction {
        p: q.field().p(),
        d: q.complexity(),
        values: hits
            .iter()
            .zip(&sizes)
            .map(|(&a, &s)| Complex64::new(if s == 0 { 0.0 } else { a as f64 / s as f64 }, 0.0))
            .collect(),
    }
}

/// Joint law of `(φ(x), 2xᵀMh + r·h, hᵀMh)` for uniform `x ∈ W`, `h ∈ Ẇ`,
/// as probabilities indexed by `a + p·b + p²·q`. Needs complexity 1.
pub fn progression_law(q: &QuadraticFactor) -> Result<Vec<f64>> {
    if q.complexity() != 1 {
        return Err(Error::InvalidParameter("progression law needs exactly one form".into()));
    }
    let f = q.field();
    let p = f.order();
    let local = q.forms()[0].local();
    let k = local.dim();
    let (s, diag) = local.m.diagonalize_symmetric(f);
    // in coordinates t = S·u: uᵀ D u + (Sᵀ r)·u + c
    let lin = s.transpose().mul_vec(&local.r, f);
    let mut law = vec![0.0; p * p * p];
    law[local.c as usize] = 1.0;
    let pp = (p * p) as f64;
    for i in 0..k {
        let (dd, ss) = (diag[i], lin[i]);
        let mut step = vec![0.0; p * p * p];
        for u in 0..p as u32 {
            for v in 0..p as u32 {
                let a = f.add(f.mul(dd, f.mul(u, u)), f.mul(ss, u));
                let b = f.add(f.mul(2, f.mul(dd, f.mul(u, v))), f.mul(ss, v));
                let c = f.mul(dd, f.mul(v, v));
                step[a as usize + p * (b as usize + p * c as usize)] += 1.0 / pp;
            }
        }
        law = convolve3(&law, &step, p);
    }
    Ok(law)
}

fn convolve3(a: &[f64], b: &[f64], p: usize) -> Vec<f64> {
    let split = |i: usize| (i % p, (i / p) % p, i / (p * p));
    let mut out = vec![0.0; a.len()];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let (a0, a1, a2) = split(i);
        for (j, &y) in b.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let (b0, b1, b2) = split(j);
            out[(a0 + b0) % p + p * ((a1 + b1) % p + p * ((a2 + b2) % p))] += x * y;
        }
    }
    out
}

/// `T_W(𝐟 ∘ φ)` for a single form, through [`progression_law`]:
/// `φ(x + ih) = a + i·b + i²·q`.
pub fn structured_t(q: &QuadraticFactor, ff: &FactorFunction) -> Result<f64> {
    check_real(ff)?;
    if q.complexity() == 0 {
        return Ok(ff.values[0].re.powi(4));
    }
    let law = progression_law(q)?;
    let f = q.field();
    let p = f.order();
    let terms: Vec<f64> = law
        .iter()
        .enumerate()
        .map(|(idx, &w)| {
            let (a, b, c) = ((idx % p) as u32, ((idx / p) % p) as u32, (idx / (p * p)) as u32);
            let prod: f64 = (0..4u32)
                .map(|i| ff.values[f.add(a, f.add(f.mul(i, b), f.mul(i * i, c))) as usize].re)
                .product();
            w * prod
        })
        .collect();
    Ok(par::pairwise_sum(&terms))
}

/// Re-expresses `f` in a new basis of the same affine space: returns values
/// at `w' + Σ u_j b'_j` where the new basis is `S·B` (rows) and the new
/// translate is the point with index `shift`.
pub fn rebase(f: &SpaceFunction, s: &Matrix, shift_index: usize) -> Result<SpaceFunction> {
    let w = f.domain();
    let field = w.field();
    let k = w.dim();
    if s.rows() != k || s.cols() != k || s.rank(field) != k {
        return Err(Error::DependentBasis);
    }
    let grid = w.grid();
    let t0 = grid.digits(shift_index);
    let new_basis: Vec<Vec<u32>> = (0..k).map(|i| w.direction(&s.row(i))).map(|pt| pt.0).collect();
    let new_space = crate::space::AffineSpace::new(field, new_basis, w.embed(&t0))?;
    let values = (0..grid.len())
        .map(|u| {
            let du = grid.digits(u);
            // coordinates in the old basis: t0 + Sᵀ u
            let st = s.transpose().mul_vec(&du, field);
            let old: Vec<u32> = st.iter().zip(&t0).map(|(&a, &b)| field.add(a, b)).collect();
            f.values()[grid.index(&old)]
        })
        .collect();
    SpaceFunction::new(new_space, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::QuadraticForm;
    use crate::space::AffineSpace;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f5() -> Fp {
        Fp::new(5).unwrap()
    }

    fn random_bounded(rng: &mut ChaCha8Rng, w: &AffineSpace) -> SpaceFunction {
        let v = (0..w.len())
            .map(|_| Complex64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        SpaceFunction::bounded(w.clone(), v).unwrap()
    }

    fn random_real(rng: &mut ChaCha8Rng, w: &AffineSpace) -> SpaceFunction {
        let v: Vec<f64> = (0..w.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        SpaceFunction::real(w.clone(), &v).unwrap()
    }

    fn phase(phi: &QuadraticForm) -> SpaceFunction {
        let r = roots(phi.field());
        let v = phi.values().iter().map(|&a| r[a as usize]).collect();
        SpaceFunction::bounded(phi.domain().clone(), v).unwrap()
    }

    #[test]
    fn t_count_examples() {
        let w = AffineSpace::full(f5(), 2).unwrap();
        let one = SpaceFunction::constant(w.clone(), Complex64::new(1.0, 0.0));
        assert!((t_count_single(&one) - 1.0).norm() < 1e-12);
        let a = SpaceFunction::constant(w.clone(), Complex64::new(0.3, 0.0));
        assert!((t_count_single(&a).re - 0.3f64.powi(4)).abs() < 1e-12);

        let mask: Vec<bool> = w.enumerate().map(|x| x.0[1] == 2).collect();
        let ind = SpaceFunction::indicator(w.clone(), &mask).unwrap();
        let mut count = 0;
        for x in w.enumerate() {
            for h in w.enumerate() {
                let f = w.field();
                if (0..4).all(|i| x.add(&h.scale(i, f), f).0[1] == 2) {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 25);
        assert!((t_count_single(&ind).re - 0.04).abs() < 1e-12);
        assert!((nontrivial_progressions(&ind) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn t_count_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=3 {
            let w = AffineSpace::full(f5(), n).unwrap();
            let fs: Vec<SpaceFunction> = (0..4).map(|_| random_bounded(&mut rng, &w)).collect();
            let a = t_count(&fs[0], &fs[1], &fs[2], &fs[3]).unwrap();
            let b = t_count_fourier(&fs[0], &fs[1], &fs[2], &fs[3]).unwrap();
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn t_count_rejects_mismatched_domains() {
        let w2 = AffineSpace::full(f5(), 2).unwrap();
        let w1 = AffineSpace::full(f5(), 1).unwrap();
        let a = SpaceFunction::constant(w2, Complex64::new(1.0, 0.0));
        let b = SpaceFunction::constant(w1, Complex64::new(1.0, 0.0));
        assert!(t_count(&a, &a, &a, &b).is_err());
    }

    #[test]
    fn u3_examples() {
        let w = AffineSpace::full(f5(), 2).unwrap();
        let one = SpaceFunction::constant(w.clone(), Complex64::new(1.0, 0.0));
        assert!((u3_norm(&one) - 1.0).abs() < 1e-12);
        let a = SpaceFunction::constant(w.clone(), Complex64::new(0.6, 0.0));
        assert!((u3_norm(&a) - 0.6).abs() < 1e-12);
        assert!((u3_norm_naive(&a).unwrap() - 0.6).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let phi = QuadraticForm::random(&mut rng, &w);
            let e = phase(&phi);
            assert!((u3_norm_naive(&e).unwrap() - 1.0).abs() < 1e-9);
            assert!((u3_norm(&e) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn u3_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w2 = AffineSpace::full(f5(), 2).unwrap();
        for _ in 0..50 {
            let f = random_bounded(&mut rng, &w2);
            let fast = u3_eighth_fast(&f);
            assert!((fast - u3_eighth_naive(&f).unwrap()).abs() < 1e-8);
            assert!((fast - u3_eighth_cube(&f)).abs() < 1e-8);
        }
        let w3 = AffineSpace::full(f5(), 3).unwrap();
        for _ in 0..10 {
            let f = random_bounded(&mut rng, &w3);
            let fast = u3_norm(&f);
            assert!((fast - u3_norm_naive(&f).unwrap()).abs() < 1e-8);
        }
        let big = AffineSpace::full(f5(), 5).unwrap();
        let f = SpaceFunction::constant(big, Complex64::new(1.0, 0.0));
        assert!(matches!(u3_eighth_naive(&f), Err(Error::NaiveTooLarge { .. })));
    }

    #[test]
    fn u3_on_proper_affine_subspace() {
        let f = f5();
        let w = AffineSpace::new(f, vec![vec![1, 2, 0], vec![0, 1, 1]], crate::space::Point(vec![3, 0, 4])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let g = random_bounded(&mut rng, &w);
        assert!((u3_eighth_fast(&g) - u3_eighth_naive(&g).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn gvn_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let w = AffineSpace::full(f5(), 2).unwrap();
        let one = SpaceFunction::bounded(w.clone(), vec![Complex64::new(1.0, 0.0); 25]).unwrap();
        let rep = gvn_bound_check([&one, &one, &one, &one]).unwrap();
        assert!(rep.pass && (rep.t.norm() - 1.0).abs() < 1e-12 && (rep.min_norm - 1.0).abs() < 1e-12);
        for _ in 0..50 {
            let fs: Vec<SpaceFunction> = (0..4).map(|_| random_bounded(&mut rng, &w)).collect();
            assert!(gvn_bound_check([&fs[0], &fs[1], &fs[2], &fs[3]]).unwrap().pass);
            // u3 dominates the mean
            assert!(u3_norm(&fs[0]) + 1e-12 >= fs[0].mean().norm());
        }
        let unb = SpaceFunction::real(w, &[2.0; 25]).unwrap();
        assert!(matches!(gvn_bound_check([&unb, &one, &one, &one]), Err(Error::Unbounded { .. })));
    }

    #[test]
    fn telescoping_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let w = AffineSpace::full(f5(), 2).unwrap();
        let zero = SpaceFunction::bounded(w.clone(), vec![ZERO; 25]).unwrap();
        for _ in 0..20 {
            let f = random_bounded(&mut rng, &w);
            let g = random_bounded(&mut rng, &w);
            let rep = telescoping_bound_check(&f, &g).unwrap();
            assert!(rep.pass && rep.identity_holds);
            let same = telescoping_bound_check(&f, &f).unwrap();
            assert!(same.difference.norm() < 1e-15 && same.bound < 1e-12);
            assert!(telescoping_bound_check(&f, &zero).unwrap().pass);
        }
    }

    fn tuple_sum(ff: &FactorFunction) -> Complex64 {
        let grid = ff.grid();
        let f = grid.field();
        let c = dft(&ff.values, f).unwrap();
        let mut total = ZERO;
        let n = grid.len();
        for a in 0..n {
            for b in 0..n {
                for cc in 0..n {
                    for d in 0..n {
                        let xi = [grid.digits(a), grid.digits(b), grid.digits(cc), grid.digits(d)];
                        if in_constraint_set(&xi, f) {
                            total += c.values[a] * c.values[b] * c.values[cc] * c.values[d];
                        }
                    }
                }
            }
        }
        total
    }

    #[test]
    fn fourier_ap_count_examples() {
        let ff = FactorFunction { p: 5, d: 2, values: vec![Complex64::new(0.4, 0.0); 25] };
        assert!((fourier_ap_count(&ff).unwrap() - 0.4f64.powi(4)).abs() < 1e-12);
        let ff0 = FactorFunction { p: 5, d: 0, values: vec![Complex64::new(0.7, 0.0)] };
        assert!((fourier_ap_count(&ff0).unwrap() - 0.7f64.powi(4)).abs() < 1e-12);
        let cx = FactorFunction { p: 5, d: 1, values: vec![Complex64::new(0.0, 0.5); 5] };
        assert!(matches!(fourier_ap_count(&cx), Err(Error::NotReal { .. })));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for d in 1..=2 {
            for _ in 0..10 {
                let len = 5usize.pow(d as u32);
                let values = (0..len).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
                let ff = FactorFunction { p: 5, d, values };
                let a = fourier_ap_count(&ff).unwrap();
                let b = tuple_sum(&ff);
                assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
                let zero_term = dft(&ff.values, f5()).unwrap().values[0].norm().powi(4);
                assert!(a + 1e-15 >= zero_term);
            }
        }
    }

    fn full_rank_factor(n: usize) -> QuadraticFactor {
        let w = AffineSpace::full(f5(), n).unwrap();
        let mono: Vec<(usize, usize, u32)> = (0..n).map(|i| (i, i, 1 + (i as u32 % 2))).collect();
        let phi = QuadraticForm::from_monomials(w.clone(), &mono, &[], 0).unwrap();
        QuadraticFactor::new(w, vec![phi]).unwrap()
    }

    #[test]
    fn m_coefficient_on_and_off_sigma() {
        let q = full_rank_factor(4);
        let f = f5();
        for a in 1..5 {
            let xi = constraint_tuple(&[a], f);
            assert!((m_coefficient(&q, &xi).unwrap() - 1.0).norm() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for _ in 0..30 {
            let xi: [Vec<u32>; 4] = std::array::from_fn(|_| vec![rng.gen_range(0..5)]);
            let s = oscillation_sample(&q, xi, 4).unwrap();
            assert!(s.pass, "{s:?}");
        }
    }

    #[test]
    fn averaging_and_counting_lemmas() {
        let q = full_rank_factor(4);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let w = q.domain().clone();
        let cfg = q.configuration_indices();
        for _ in 0..5 {
            let atom: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = cfg.iter().map(|&y| atom[y]).collect();
            let f = SpaceFunction::bounded(w.clone(), v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).unwrap();
            assert!(averaging_lemma_check(&q, &f, 4).unwrap().pass);
            let rep = counting_lemma_check(&q, &f, 4, vec![constraint_tuple(&[2], f5())]).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        let trivial = QuadraticFactor::trivial(w.clone());
        let c = SpaceFunction::bounded(w.clone(), vec![Complex64::new(0.3, 0.0); w.len()]).unwrap();
        let rep = averaging_lemma_check(&trivial, &c, 100).unwrap();
        assert!(rep.difference < 1e-15);
        let rep = counting_lemma_check(&trivial, &c, 100, vec![]).unwrap();
        assert!(rep.difference < 1e-12);
        // rank hypothesis not met
        assert!(matches!(averaging_lemma_check(&q, &c, 5), Err(Error::RankSeparation { .. })));
    }

    #[test]
    fn structured_route_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for n in 1..=4 {
            let w = AffineSpace::full(f5(), n).unwrap();
            for _ in 0..5 {
                let q = QuadraticFactor::new(w.clone(), vec![QuadraticForm::random(&mut rng, &w)]).unwrap();
                let members: Vec<bool> = (0..w.len()).map(|_| rng.gen_bool(0.5)).collect();
                let ff = atom_densities(&q, &members);
                let ind = SpaceFunction::indicator(w.clone(), &members).unwrap();
                let e = conditional_expectation(&ind, &q.factor()).unwrap();
                let direct = t_count_single(&e).re;
                let structured = structured_t(&q, &ff).unwrap();
                assert!((direct - structured).abs() < 1e-12, "{direct} vs {structured}");
            }
        }
        // proper affine subspace
        let w = AffineSpace::new(f5(), vec![vec![1, 1, 0], vec![0, 2, 1]], crate::space::Point(vec![1, 0, 3])).unwrap();
        let q = QuadraticFactor::new(w.clone(), vec![QuadraticForm::random(&mut rng, &w)]).unwrap();
        let members: Vec<bool> = (0..w.len()).map(|_| rng.gen_bool(0.3)).collect();
        let e = conditional_expectation(&SpaceFunction::indicator(w.clone(), &members).unwrap(), &q.factor()).unwrap();
        assert!((t_count_single(&e).re - structured_t(&q, &atom_densities(&q, &members)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn positivity_examples() {
        let w = AffineSpace::full(f5(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let trivial = QuadraticFactor::trivial(w.clone());
        let all = vec![true; 125];
        let rep = positivity_check(&trivial, &all, 1.0, None).unwrap();
        assert!(rep.pass && (rep.t - 1.0).abs() < 1e-12);
        let members: Vec<bool> = (0..125).map(|_| rng.gen_bool(0.5)).collect();
        let alpha = members.iter().filter(|&&b| b).count() as f64 / 125.0;
        let rep = positivity_check(&trivial, &members, alpha, None).unwrap();
        assert!(rep.pass && (rep.t - alpha.powi(4)).abs() < 1e-12);
        let q = full_rank_factor(3);
        assert!(matches!(positivity_check(&q, &members, alpha, None), Err(Error::RankSeparation { .. })));
        assert!(positivity_check(&trivial, &members, alpha + 0.1, None).is_err());
    }

    #[test]
    fn t_count_is_basis_invariant() {
        let f = f5();
        let w = AffineSpace::full(f, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let g = random_bounded(&mut rng, &w);
            let s = loop {
                let m = Matrix::from_flat(3, 3, (0..9).map(|_| rng.gen_range(0..5)).collect());
                if m.rank(f) == 3 {
                    break m;
                }
            };
            let moved = rebase(&g, &s, rng.gen_range(0..125)).unwrap();
            assert!(moved.domain().same_set(&w));
            assert!((t_count_single(&g) - t_count_single(&moved)).norm() < 1e-10);
            assert!((u3_norm(&g) - u3_norm(&moved)).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gvn_holds_for_real_functions(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = AffineSpace::full(f5(), 2).unwrap();
            let fs: Vec<SpaceFunction> = (0..4).map(|_| random_real(&mut rng, &w)).collect();
            let fs: Vec<SpaceFunction> = fs.into_iter().map(|f| SpaceFunction::bounded(w.clone(), f.into_values()).unwrap()).collect();
            prop_assert!(gvn_bound_check([&fs[0], &fs[1], &fs[2], &fs[3]]).unwrap().pass);
        }
    }
}
