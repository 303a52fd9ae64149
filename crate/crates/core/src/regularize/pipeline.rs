//! From a dense set to a subspace carrying many 4-term progressions, with a
//! certificate whose lines are each re-evaluated along a second route.

use serde::Serialize;

use super::kvn::{approximation_error, kvn_run, KvnOutcome, KvnParams};
use crate::error::{Error, Result};
use crate::factor::conditional_expectation;
use crate::function::SpaceFunction;
use crate::gowers::{
    positivity_check, t_count_fourier, t_count_single, u3_eighth_naive, INEQUALITY_TOL, NAIVE_U3_LIMIT,
};
use crate::par;
use crate::sets::find_progression;
use crate::space::AffineSpace;

/// Agreement required between two evaluation routes of the same quantity.
pub const ROUTE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertificateLine {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    /// Second evaluation of `lhs`, when one exists.
    pub cross_check: Option<f64>,
    pub pass: bool,
}

impl CertificateLine {
    fn new(name: &str, lhs: f64, relation: Relation, rhs: f64, tol: f64, cross_check: Option<f64>) -> Self {
        let holds = match relation {
            Relation::AtMost => lhs <= rhs + tol,
            Relation::AtLeast => lhs >= rhs - tol,
            Relation::Equal => (lhs - rhs).abs() <= tol,
        };
        let agrees = cross_check.map_or(true, |c| (c - lhs).abs() <= ROUTE_TOL * lhs.abs().max(1.0));
        CertificateLine {
            name: name.into(),
            lhs,
            relation,
            rhs,
            cross_check,
            pass: holds && agrees,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RichSubspace {
    pub outcome: KvnOutcome,
    pub rank_target: usize,
    /// `|{(x, h) ∈ W' × Ẇ' : x + ih ∈ A, i = 0..3}|`, `h = 0` included.
    pub count: u64,
    pub certificate: Vec<CertificateLine>,
}

impl RichSubspace {
    pub fn pass(&self) -> bool {
        self.certificate.iter().all(|l| l.pass)
    }
}

/// Counts pairs `(x, h)` in `W'` (index arithmetic) with all four terms in `A`.
pub fn count_progressions(space: &AffineSpace, members: &[bool]) -> u64 {
    let grid = space.grid();
    let n = grid.len();
    let per_x = par::map_range(n, |x| {
        if !members[x] {
            return 0u64;
        }
        (0..n)
            .filter(|&h| {
                let x1 = grid.add(x, h);
                let x2 = grid.add(x1, h);
                members[x1] && members[x2] && members[grid.add(x2, h)]
            })
            .count() as u64
    });
    per_x.iter().sum()
}

/// Runs the regularity iteration with `η = ε` and `r = 10·complexity_cap`,
/// then certifies the progression count on the chosen subspace.
pub fn find_rich_subspace(w: &AffineSpace, members: &[bool], epsilon: f64, base: &KvnParams) -> Result<RichSubspace> {
    let rank_target = (10 * base.complexity_cap).max(1);
    let params = KvnParams {
        epsilon,
        eta: epsilon,
        rank_target,
        ..base.clone()
    };
    let outcome = kvn_run(w, members, &params)?;
    let sub = &outcome.subspace;
    let local: Vec<bool> = sub.indices_in(w)?.into_iter().map(|i| members[i]).collect();
    let q = &outcome.factor;
    let d = q.complexity();
    let p = w.field().p() as f64;
    let size = sub.len() as f64;
    let mut lines = Vec::new();

    let approx = approximation_error(q, &local)?;
    let ind = SpaceFunction::indicator(sub.clone(), &local)?;
    let e = conditional_expectation(&ind, &q.factor())?;
    let naive = if sub.len() <= NAIVE_U3_LIMIT {
        Some(u3_eighth_naive(&ind.sub(&e)?)?.max(0.0).powf(0.125))
    } else {
        None
    };
    lines.push(CertificateLine::new(
        "approximation ≤ η",
        approx,
        Relation::AtMost,
        params.eta,
        INEQUALITY_TOL,
        naive,
    ));

    let t_a = t_count_single(&ind).re;
    let t_a_fourier = t_count_fourier(&ind, &ind, &ind, &ind)?.re;
    let t_e = t_count_single(&e).re;
    lines.push(CertificateLine::new(
        "T(1_A) ≥ T(E(1_A|B)) − 4·approximation",
        t_a,
        Relation::AtLeast,
        t_e - 4.0 * approx,
        INEQUALITY_TOL,
        Some(t_a_fourier),
    ));

    let floor = (outcome.alpha - epsilon).max(0.0);
    let pos = positivity_check(q, &local, floor, None)?;
    lines.push(CertificateLine::new(
        "T(E(1_A|B)) ≥ (α − ε)⁴ − 5p^(−3d)",
        pos.t,
        Relation::AtLeast,
        pos.rhs,
        INEQUALITY_TOL,
        Some(t_e),
    ));

    let chained = floor.powi(4) - 5.0 * p.powf(-3.0 * d as f64) - 4.0 * params.eta;
    lines.push(CertificateLine::new(
        "T(1_A) ≥ (α − ε)⁴ − 5p^(−3d) − 4η",
        t_a,
        Relation::AtLeast,
        chained,
        INEQUALITY_TOL,
        None,
    ));

    let count = count_progressions(sub, &local);
    lines.push(CertificateLine::new(
        "count = |W'|²·T(1_A)",
        count as f64,
        Relation::Equal,
        size * size * t_a,
        ROUTE_TOL * (size * size).max(1.0),
        None,
    ));

    Ok(RichSubspace {
        outcome,
        rank_target,
        count,
        certificate: lines,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ApFreeReport {
    pub alpha: f64,
    pub epsilon: f64,
    pub subspace_size: usize,
    pub count: u64,
    /// `|W' ∩ A|`, the progressions with `h = 0`.
    pub trivial: u64,
    pub nontrivial: u64,
    /// Whether `count ≥ (α⁴ − ε)|W'|²` was observed on the chosen subspace.
    pub premise_holds: bool,
    pub size_bound: f64,
    pub bound_holds: bool,
    pub pass: bool,
    pub rich: RichSubspace,
}

/// For a progression-free `A`, runs [`find_rich_subspace`] with `ε = α⁴/2`
/// and reports `|W'|` against `2/α⁴`.
pub fn deduce_ap_free_bound(w: &AffineSpace, members: &[bool], base: &KvnParams) -> Result<ApFreeReport> {
    if members.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: members.len(),
        });
    }
    if let Some((start, step)) = find_progression(w, members) {
        return Err(Error::ContainsProgression { start, step });
    }
    let alpha = members.iter().filter(|&&b| b).count() as f64 / w.len() as f64;
    if alpha == 0.0 {
        return Err(Error::EmptySet);
    }
    let epsilon = alpha.powi(4) / 2.0;
    let rich = find_rich_subspace(w, members, epsilon, base)?;
    let sub = &rich.outcome.subspace;
    let trivial = sub
        .indices_in(w)?
        .into_iter()
        .filter(|&i| members[i])
        .count() as u64;
    let nontrivial = rich.count - trivial;
    let size = sub.len();
    let size_f = size as f64;
    let premise_holds = rich.count as f64 >= (alpha.powi(4) - epsilon) * size_f * size_f;
    let size_bound = 2.0 / alpha.powi(4);
    let bound_holds = size_f <= size_bound;
    if premise_holds && nontrivial == 0 && !bound_holds {
        return Err(Error::Inconsistent(format!(
            "|W'| = {size} with {trivial} progressions contradicts |W'|²α⁴/2 ≤ count"
        )));
    }
    Ok(ApFreeReport {
        alpha,
        epsilon,
        subspace_size: size,
        count: rich.count,
        trivial,
        nontrivial,
        premise_holds,
        size_bound,
        bound_holds,
        pass: nontrivial == 0 && (!premise_holds || bound_holds),
        rich,
    })
}
