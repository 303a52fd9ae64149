//! Seeded verification suites. Each suite draws its instances from a seed
//! derived from `(seed, suite, instance)` and emits one [`CheckRecord`] per
//! inequality or identity checked.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::factor::{conditional_expectation, energy, FactorFunction, QuadraticFactor};
use crate::field::Fp;
use crate::function::SpaceFunction;
use crate::gowers::{
    averaging_lemma_check, constraint_tuple, in_constraint_set, counting_lemma_check, gvn_bound_check, oscillation_sample,
    positivity_check, telescoping_bound_check, u3_eighth_cube, u3_eighth_fast, u3_eighth_naive, IDENTITY_TOL,
    INEQUALITY_TOL, NAIVE_U3_LIMIT,
};
use crate::par;
use crate::quadratic::QuadraticForm;
use crate::regularize::oracle::derive_seed;
use crate::regularize::pipeline::Relation;
use crate::regularize::rank_reduce::{codim_bound, rank_reduce};
use crate::sets::random_affine_subspace;
use crate::space::AffineSpace;
use crate::transform::{dft, idft, naive_dft};

/// Agreement required between the fast, naive and cube U³ evaluations.
pub const U3_AGREEMENT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Gauss,
    Gvn,
    Telescoping,
    Averaging,
    Counting,
    Oscillation,
    Positivity,
    RankReduce,
    Refine,
    U3Agreement,
    Plancherel,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Gauss,
        Suite::Gvn,
        Suite::Telescoping,
        Suite::Averaging,
        Suite::Counting,
        Suite::Oscillation,
        Suite::Positivity,
        Suite::RankReduce,
        Suite::Refine,
        Suite::U3Agreement,
        Suite::Plancherel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gauss => "gauss",
            Suite::Gvn => "gvn",
            Suite::Telescoping => "telescoping",
            Suite::Averaging => "averaging",
            Suite::Counting => "counting",
            Suite::Oscillation => "oscillation",
            Suite::Positivity => "positivity",
            Suite::RankReduce => "rank-reduce",
            Suite::Refine => "refine",
            Suite::U3Agreement => "u3-agreement",
            Suite::Plancherel => "plancherel",
        }
    }

    pub fn parse(s: &str) -> Result<Suite> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite {s:?}")))
    }

    pub fn default_count(self) -> usize {
        match self {
            Suite::Gauss => 500,
            Suite::Gvn => 200,
            Suite::Telescoping => 100,
            Suite::Averaging | Suite::Counting | Suite::Oscillation | Suite::RankReduce | Suite::U3Agreement => 50,
            Suite::Positivity => 30,
            Suite::Refine | Suite::Plancherel => 20,
        }
    }

    /// Seed stream; the counting and oscillation suites reuse the averaging
    /// stream so all three see the same factors.
    fn stream(self) -> u64 {
        let base = match self {
            Suite::Counting | Suite::Oscillation => Suite::Averaging,
            s => s,
        };
        Suite::ALL.iter().position(|&s| s == base).expect("listed") as u64 + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub p: u32,
    pub n: usize,
    pub seed: u64,
    /// Instances per suite; `None` takes [`Suite::default_count`].
    pub count: Option<usize>,
    /// Adds wall-clock time to every record (output is then not reproducible).
    pub timing: bool,
}

impl SuiteConfig {
    pub fn field(&self) -> Result<Fp> {
        Fp::new(self.p)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.field()?;
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        AffineSpace::full(f, self.n)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub lemma: String,
    pub instance: usize,
    /// Enough to regenerate the instance: field, dimensions, derived seed and
    /// any parameters drawn from it.
    pub inputs: Value,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
}

fn record(lemma: &str, inputs: &Value, lhs: f64, relation: Relation, rhs: f64, tolerance: f64) -> CheckRecord {
    let pass = match relation {
        Relation::AtMost => lhs <= rhs + tolerance,
        Relation::AtLeast => lhs >= rhs - tolerance,
        Relation::Equal => (lhs - rhs).abs() <= tolerance,
    };
    CheckRecord {
        suite: String::new(),
        lemma: lemma.into(),
        instance: 0,
        inputs: inputs.clone(),
        lhs,
        relation,
        rhs,
        tolerance,
        pass,
        wall_ms: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub instances: usize,
    pub checks: usize,
    pub failures: usize,
    pub pass: bool,
}

pub fn summarize(suite: Suite, instances: usize, records: &[CheckRecord]) -> SuiteSummary {
    let failures = records.iter().filter(|r| !r.pass).count();
    SuiteSummary {
        suite: suite.name().into(),
        instances,
        checks: records.len(),
        failures,
        pass: failures == 0 && !records.is_empty(),
    }
}

fn random_bounded<R: Rng + ?Sized>(rng: &mut R, w: &AffineSpace) -> SpaceFunction {
    let v = (0..w.len())
        .map(|_| Complex64::from_polar(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    SpaceFunction::bounded(w.clone(), v).expect("magnitudes are at most 1")
}

fn random_factor<R: Rng + ?Sized>(rng: &mut R, w: &AffineSpace, d: usize) -> Result<QuadraticFactor> {
    QuadraticFactor::new(w.clone(), (0..d).map(|_| QuadraticForm::random(rng, w)).collect())
}

/// A factor with a built-in dependency: either the last form is a
/// combination of the others plus a linear term, or one form has rank ≤ 2.
pub fn degenerate_factor<R: Rng + ?Sized>(rng: &mut R, w: &AffineSpace, d: usize) -> Result<QuadraticFactor> {
    let f = w.field();
    let k = w.ambient_dim();
    let mut forms: Vec<QuadraticForm> = (0..d).map(|_| QuadraticForm::random(rng, w)).collect();
    let lin: Vec<u32> = (0..k).map(|_| rng.gen_range(0..f.p())).collect();
    let linear = QuadraticForm::from_monomials(w.clone(), &[], &lin, rng.gen_range(0..f.p()))?;
    if d > 1 && rng.gen_bool(0.5) {
        let lam: Vec<u32> = (0..d - 1).map(|_| rng.gen_range(0..f.p())).collect();
        let dep = QuadraticForm::combination(&forms[..d - 1], &lam)?;
        forms[d - 1] = QuadraticForm::combination(&[dep, linear], &[1, 1])?;
    } else {
        let i = rng.gen_range(0..d);
        let a = rng.gen_range(0..k);
        let b = rng.gen_range(0..k);
        let c = rng.gen_range(1..f.p());
        let low = QuadraticForm::from_monomials(w.clone(), &[(a.min(b), a.max(b), c)], &[], 0)?;
        forms[i] = QuadraticForm::combination(&[low, linear], &[1, 1])?;
    }
    QuadraticFactor::new(w.clone(), forms)
}

fn exact_subset<R: Rng + ?Sized>(rng: &mut R, len: usize, alpha: f64) -> Vec<bool> {
    let k = ((alpha * len as f64).ceil() as usize).clamp(1, len);
    let mut members = vec![false; len];
    for i in sample(rng, len, k) {
        members[i] = true;
    }
    members
}

type Instance = Result<Vec<CheckRecord>>;

fn gauss(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 1 + i % n;
    let w = random_affine_subspace(f, n, dim, &mut rng)?;
    let phi = QuadraticForm::random(&mut rng, &w);
    let rank = phi.rank();
    let inputs = json!({"p": f.p(), "n": n, "dim": dim, "seed": seed, "rank": rank, "form": phi.record()});
    let p = f.p() as f64;
    let mut out = vec![record(
        "gauss-inequality",
        &inputs,
        phi.gauss_sum_magnitude(),
        Relation::AtMost,
        p.powf(-(rank as f64) / 2.0),
        INEQUALITY_TOL,
    )];
    if phi.linear_part_in_image() {
        let exact = phi.gauss_sum_exact().norm_sqr().ok_or_else(|| {
            Error::Inconsistent("|Σ|² of a Gauss sum is not a rational integer".into())
        })?;
        out.push(record(
            "gauss-exact-equality",
            &inputs,
            exact as f64,
            Relation::Equal,
            p.powi((2 * dim - rank) as i32),
            0.0,
        ));
    }
    Ok(out)
}

fn u3_pair_records(g: &SpaceFunction, inputs: &Value, label: &str) -> Result<Vec<CheckRecord>> {
    if g.len() > NAIVE_U3_LIMIT {
        return Ok(Vec::new());
    }
    let fast = u3_eighth_fast(g).max(0.0).powf(0.125);
    let naive = u3_eighth_naive(g)?.max(0.0).powf(0.125);
    Ok(vec![record(
        &format!("{label}-fast-vs-naive"),
        inputs,
        (fast - naive).abs(),
        Relation::AtMost,
        U3_AGREEMENT_TOL,
        0.0,
    )])
}

fn gvn(f: Fp, n: usize, _i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let fs: Vec<SpaceFunction> = (0..4).map(|_| random_bounded(&mut rng, &w)).collect();
    let inputs = json!({"p": f.p(), "n": n, "seed": seed});
    let rep = gvn_bound_check([&fs[0], &fs[1], &fs[2], &fs[3]])?;
    let mut out = vec![record("gvn", &inputs, rep.t.norm(), Relation::AtMost, rep.min_norm, INEQUALITY_TOL)];
    for g in &fs {
        out.extend(u3_pair_records(g, &inputs, "u3")?);
    }
    Ok(out)
}

fn telescoping(f: Fp, n: usize, _i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let a = random_bounded(&mut rng, &w);
    let b = random_bounded(&mut rng, &w);
    let inputs = json!({"p": f.p(), "n": n, "seed": seed});
    let rep = telescoping_bound_check(&a, &b)?;
    Ok(vec![
        record("telescoping-identity", &inputs, rep.identity_error, Relation::AtMost, 0.0, IDENTITY_TOL),
        record(
            "telescoping-bound",
            &inputs,
            rep.difference.norm(),
            Relation::AtMost,
            rep.bound,
            INEQUALITY_TOL,
        ),
    ])
}

struct FactorInstance {
    q: QuadraticFactor,
    r: usize,
    inputs: Value,
}

fn verified_factor(f: Fp, n: usize, i: usize, rng: &mut ChaCha8Rng, seed: u64) -> Result<FactorInstance> {
    let d = 1 + i % 2;
    let w = AffineSpace::full(f, n)?;
    let q = random_factor(rng, &w, d)?;
    let r = q.verified_rank()?;
    let inputs = json!({"p": f.p(), "n": n, "seed": seed, "d": d, "r": r, "factor": q.record()});
    Ok(FactorInstance { q, r, inputs })
}

fn random_configuration_function(rng: &mut ChaCha8Rng, q: &QuadraticFactor, real: bool) -> FactorFunction {
    let len = q.field().order().pow(q.complexity() as u32);
    let values = (0..len)
        .map(|_| {
            if real {
                Complex64::new(rng.gen_range(-1.0..=1.0), 0.0)
            } else {
                Complex64::from_polar(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..std::f64::consts::TAU))
            }
        })
        .collect();
    FactorFunction {
        p: q.field().p(),
        d: q.complexity(),
        values,
    }
}

fn averaging(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = verified_factor(f, n, i, &mut rng, seed)?;
    let g = random_configuration_function(&mut rng, &inst.q, false).compose(&inst.q)?;
    let rep = averaging_lemma_check(&inst.q, &g, inst.r)?;
    Ok(vec![record("averaging", &inst.inputs, rep.difference, Relation::AtMost, rep.bound, INEQUALITY_TOL)])
}

fn counting(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = verified_factor(f, n, i, &mut rng, seed)?;
    let g = random_configuration_function(&mut rng, &inst.q, true).compose(&inst.q)?;
    let rep = counting_lemma_check(&inst.q, &g, inst.r, Vec::new())?;
    Ok(vec![record(
        "counting",
        &inst.inputs,
        rep.difference,
        Relation::AtMost,
        rep.bound,
        INEQUALITY_TOL,
    )])
}

fn oscillation(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = verified_factor(f, n, i, &mut rng, seed)?;
    let d = inst.q.complexity();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..d).map(|_| rng.gen_range(0..f.p())).collect() };
    let on = constraint_tuple(&draw(&mut rng), f);
    let off = loop {
        let xi = [draw(&mut rng), draw(&mut rng), draw(&mut rng), draw(&mut rng)];
        if !in_constraint_set(&xi, f) {
            break xi;
        }
    };
    let mut out = Vec::new();
    for xi in [on, off] {
        let s = oscillation_sample(&inst.q, xi.clone(), inst.r)?;
        let inputs = json!({"instance": inst.inputs, "xi": xi});
        out.push(if s.in_sigma {
            record("m-on-sigma", &inputs, (s.m - 1.0).norm(), Relation::AtMost, 0.0, IDENTITY_TOL)
        } else {
            record(
                "m-off-sigma",
                &inputs,
                s.m.norm(),
                Relation::AtMost,
                (f.p() as f64).powf(-(inst.r as f64) / 2.0),
                INEQUALITY_TOL,
            )
        });
    }
    Ok(out)
}

/// Densities used by the positivity suite.
pub const POSITIVITY_ALPHAS: [f64; 3] = [0.2, 0.5, 0.8];

fn positivity(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let alpha = POSITIVITY_ALPHAS[i % 3];
    // rank ≥ 10d is only reachable with d ≥ 1 once n ≥ 10
    let d = if i % 2 == 1 { n / 10 } else { 0 }.min(1);
    let q = loop {
        let q = random_factor(&mut rng, &w, d)?;
        if q.rank_separation_check(10 * d)?.holds {
            break q;
        }
    };
    let members = exact_subset(&mut rng, w.len(), alpha);
    let rep = positivity_check(&q, &members, alpha, None)?;
    let inputs = json!({
        "p": f.p(), "n": n, "seed": seed, "alpha": alpha, "d": d,
        "verified_rank": rep.verified_rank.min(n), "route": rep.route, "factor": q.record(),
    });
    Ok(vec![record("positivity", &inputs, rep.t, Relation::AtLeast, rep.rhs, INEQUALITY_TOL)])
}

fn rank_reduce_suite(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let d = 1 + i % 3;
    let r = rng.gen_range(1..=3);
    let b = degenerate_factor(&mut rng, &w, d)?;
    let red = rank_reduce(&b, r, d)?;
    let inputs = json!({"p": f.p(), "n": n, "seed": seed, "d": d, "r": r, "factor": b.record()});
    let failing = red
        .local
        .atoms()
        .iter()
        .map(|a| a.factor.rank_separation_check(r).map(|c| !c.holds))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&bad| bad)
        .count();
    let b2 = red.local.b2()?;
    let joined = b.factor().join(&red.local.b1()?)?;
    Ok(vec![
        record(
            "rank-reduce-codim",
            &inputs,
            red.local.codim_bound() as f64,
            Relation::AtMost,
            codim_bound(d, r) as f64,
            0.0,
        ),
        record("rank-reduce-atom-rank-failures", &inputs, failing as f64, Relation::Equal, 0.0, 0.0),
        record(
            "rank-reduce-refines",
            &inputs,
            b2.refines(&b.factor()) as u8 as f64,
            Relation::Equal,
            1.0,
            0.0,
        ),
        record(
            "rank-reduce-join",
            &inputs,
            b2.same_partition(&joined) as u8 as f64,
            Relation::Equal,
            1.0,
            0.0,
        ),
    ])
}

fn refine(f: Fp, n: usize, i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let d = i % 3;
    let coarse = random_factor(&mut rng, &w, d)?;
    let mut fine = coarse.clone();
    fine.push(QuadraticForm::random(&mut rng, &w))?;
    let members = exact_subset(&mut rng, w.len(), 0.5);
    let ind = SpaceFunction::indicator(w.clone(), &members)?;
    let e0 = energy(&ind, &coarse.factor())?;
    let e1 = energy(&ind, &fine.factor())?;
    let c0 = conditional_expectation(&ind, &coarse.factor())?;
    let c1 = conditional_expectation(&ind, &fine.factor())?;
    let gap = c1.sub(&c0)?.mean_sq();
    let inputs = json!({"p": f.p(), "n": n, "seed": seed, "d": d});
    Ok(vec![
        record("refine-energy-monotone", &inputs, e1, Relation::AtLeast, e0, INEQUALITY_TOL),
        record("refine-pythagoras", &inputs, e1 - e0, Relation::Equal, gap, IDENTITY_TOL),
    ])
}

fn u3_agreement(f: Fp, n: usize, _i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let g = random_bounded(&mut rng, &w);
    let inputs = json!({"p": f.p(), "n": n, "seed": seed});
    let mut out = u3_pair_records(&g, &inputs, "u3")?;
    if g.len() <= NAIVE_U3_LIMIT {
        let fast = u3_eighth_fast(&g).max(0.0).powf(0.125);
        let cube = u3_eighth_cube(&g).max(0.0).powf(0.125);
        out.push(record(
            "u3-fast-vs-cube",
            &inputs,
            (fast - cube).abs(),
            Relation::AtMost,
            U3_AGREEMENT_TOL,
            0.0,
        ));
    }
    Ok(out)
}

fn plancherel(f: Fp, n: usize, _i: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = AffineSpace::full(f, n)?;
    let g = random_bounded(&mut rng, &w);
    let inputs = json!({"p": f.p(), "n": n, "seed": seed});
    let coeffs = dft(g.values(), f)?;
    let back = idft(&coeffs);
    let round_trip = back
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let mut out = vec![
        record("plancherel", &inputs, coeffs.energy(), Relation::Equal, g.mean_sq(), IDENTITY_TOL),
        record("inverse-round-trip", &inputs, round_trip, Relation::AtMost, 0.0, IDENTITY_TOL),
    ];
    if g.len() <= NAIVE_U3_LIMIT {
        let slow = naive_dft(g.values(), f)?;
        let err = slow
            .values
            .iter()
            .zip(&coeffs.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        out.push(record("fast-vs-naive-transform", &inputs, err, Relation::AtMost, 0.0, IDENTITY_TOL));
    }
    Ok(out)
}

/// Runs `suite` on `F_p^n`. Records come back in instance order whatever the
/// thread count.
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<(Vec<CheckRecord>, SuiteSummary)> {
    cfg.validate()?;
    let f = cfg.field()?;
    let n = cfg.n;
    let count = cfg.count.unwrap_or(suite.default_count());
    let run: fn(Fp, usize, usize, u64) -> Instance = match suite {
        Suite::Gauss => gauss,
        Suite::Gvn => gvn,
        Suite::Telescoping => telescoping,
        Suite::Averaging => averaging,
        Suite::Counting => counting,
        Suite::Oscillation => oscillation,
        Suite::Positivity => positivity,
        Suite::RankReduce => rank_reduce_suite,
        Suite::Refine => refine,
        Suite::U3Agreement => u3_agreement,
        Suite::Plancherel => plancherel,
    };
    let per_instance = par::map_range(count, |i| {
        let seed = derive_seed(cfg.seed, suite.stream(), i as u64);
        let start = Instant::now();
        let recs = run(f, n, i, seed);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        recs.map(|rs| {
            rs.into_iter()
                .map(|mut r| {
                    r.suite = suite.name().into();
                    r.instance = i;
                    r.wall_ms = cfg.timing.then_some(ms);
                    r
                })
                .collect::<Vec<_>>()
        })
    });
    let mut records = Vec::new();
    for r in per_instance {
        records.extend(r?);
    }
    let summary = summarize(suite, count, &records);
    Ok((records, summary))
}
