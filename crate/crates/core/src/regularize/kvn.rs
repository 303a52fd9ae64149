//! Energy-increment construction of a local quadratic factor that makes most
//! of `W` regular for a set `A`, followed by the choice of one dense regular
//! atom.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::oracle::{derive_seed, InverseOracle, OracleConfig};
use super::rank_reduce::rank_reduce;
use crate::error::{Error, Result};
use crate::factor::{conditional_expectation, LocalAtom, QuadraticFactor};
use crate::function::SpaceFunction;
use crate::gowers::{u3_eighth_naive, u3_norm};
use crate::par;
use crate::space::AffineSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KvnParams {
    pub epsilon: f64,
    pub eta: f64,
    pub rank_target: usize,
    pub complexity_cap: usize,
    pub iteration_cap: usize,
    pub delta_min: f64,
    pub oracle: OracleConfig,
    pub seed: u64,
    /// Every `spot_check_stride`-th atom of at most [`SPOT_CHECK_MAX`] points
    /// also gets a naive U³ evaluation; 0 disables.
    pub spot_check_stride: usize,
}

/// Largest atom that receives a naive spot check.
pub const SPOT_CHECK_MAX: usize = 125;
const SPOT_CHECK_TOL: f64 = 1e-8;

impl Default for KvnParams {
    fn default() -> Self {
        KvnParams {
            epsilon: 0.2,
            eta: 0.3,
            rank_target: 1,
            complexity_cap: 4,
            iteration_cap: 64,
            delta_min: 1e-6,
            oracle: OracleConfig::default(),
            seed: 0,
            spot_check_stride: 20,
        }
    }
}

impl KvnParams {
    pub fn validate(&self) -> Result<()> {
        let open = |x: f64| x > 0.0 && x < 0.5;
        if !open(self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1/2), got {}", self.epsilon)));
        }
        if !open(self.eta) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1/2), got {}", self.eta)));
        }
        if self.rank_target == 0 || self.complexity_cap == 0 || self.iteration_cap == 0 {
            return Err(Error::InvalidParameter("rank target and caps must be positive".into()));
        }
        if self.delta_min.is_nan() || self.delta_min <= 0.0 {
            return Err(Error::InvalidParameter("delta_min must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub atom_count: usize,
    pub regular_mass: f64,
    pub energy: f64,
    pub max_codim: usize,
    pub complexity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomReport {
    pub id: usize,
    pub size: usize,
    pub density: f64,
    pub u3: f64,
    pub regular: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KvnOutcome {
    pub subspace: AffineSpace,
    #[serde(serialize_with = "serialize_factor")]
    pub factor: QuadraticFactor,
    pub atom_id: usize,
    pub alpha: f64,
    pub density: f64,
    pub approximation: f64,
    pub verified_rank: Option<usize>,
    pub log: Vec<IterationRecord>,
}

fn serialize_factor<S: serde::Serializer>(q: &QuadraticFactor, s: S) -> std::result::Result<S::Ok, S::Error> {
    q.record().serialize(s)
}

struct AtomState {
    atom: LocalAtom,
    indices: Vec<usize>,
}

/// `(E(1_A|B2) on the atom, ‖1_A − E(1_A|B2)‖_{U³}, density)`.
fn atom_regularity(atom: &LocalAtom, members: &[bool]) -> Result<(SpaceFunction, SpaceFunction, f64)> {
    let ind = SpaceFunction::indicator(atom.space.clone(), members)?;
    let e = conditional_expectation(&ind, &atom.factor.factor())?;
    let g = ind.sub(&e)?;
    let density = ind.mean().re;
    Ok((e, g, density))
}

/// `‖1_A − E(1_A|B)‖_{U³(W')}` recomputed from the space and the factor alone.
pub fn approximation_error(factor: &QuadraticFactor, members_on_space: &[bool]) -> Result<f64> {
    let atom = LocalAtom {
        space: factor.domain().clone(),
        factor: factor.clone(),
    };
    let (_, g, _) = atom_regularity(&atom, members_on_space)?;
    Ok(u3_norm(&g))
}

fn members_of(indices: &[usize], members: &[bool]) -> Vec<bool> {
    indices.iter().map(|&i| members[i]).collect()
}

/// Runs the iteration on `A ⊆ W` given as a membership mask over `W`.
pub fn kvn_run(w: &AffineSpace, members: &[bool], params: &KvnParams) -> Result<KvnOutcome> {
    params.validate()?;
    if members.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: members.len(),
        });
    }
    let n = w.len() as f64;
    let alpha = members.iter().filter(|&&b| b).count() as f64 / n;
    if alpha == 0.0 {
        return Err(Error::EmptySet);
    }
    let mut atoms = vec![AtomState {
        atom: LocalAtom {
            space: w.clone(),
            factor: QuadraticFactor::trivial(w.clone()),
        },
        indices: (0..w.len()).collect(),
    }];
    let mut log: Vec<IterationRecord> = Vec::new();

    for iteration in 0.. {
        let reports = par::map_range(atoms.len(), |id| -> Result<(AtomReport, SpaceFunction, Vec<Complex64>)> {
            let st = &atoms[id];
            let local = members_of(&st.indices, members);
            let (e, g, density) = atom_regularity(&st.atom, &local)?;
            let u3 = u3_norm(&g);
            if params.spot_check_stride > 0 && id % params.spot_check_stride == 0 && g.len() <= SPOT_CHECK_MAX {
                let naive = u3_eighth_naive(&g)?.max(0.0).powf(0.125);
                if (naive - u3).abs() > SPOT_CHECK_TOL {
                    return Err(Error::Inconsistent(format!("atom {id}: fast U³ {u3} vs naive {naive}")));
                }
            }
            let report = AtomReport {
                id,
                size: st.indices.len(),
                density,
                u3,
                regular: u3 <= params.eta,
            };
            Ok((report, g, e.into_values()))
        });
        let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;

        let energy_terms: Vec<f64> = reports
            .iter()
            .flat_map(|(_, _, e)| e.iter().map(|v| v.norm_sqr()))
            .collect();
        let energy = par::pairwise_sum(&energy_terms) / n;
        let regular_mass = reports
            .iter()
            .filter(|(r, _, _)| r.regular)
            .map(|(r, _, _)| r.size)
            .sum::<usize>() as f64
            / n;
        let record = IterationRecord {
            iteration,
            atom_count: atoms.len(),
            regular_mass,
            energy,
            max_codim: atoms.iter().map(|a| w.dim() - a.atom.space.dim()).max().unwrap_or(0),
            complexity: atoms.iter().map(|a| a.atom.factor.complexity()).max().unwrap_or(0),
        };
        if let Some(prev) = log.last() {
            let increment = energy - prev.energy;
            if increment < params.delta_min {
                return Err(Error::EnergyStall {
                    iteration,
                    increment,
                    delta_min: params.delta_min,
                });
            }
        }
        log.push(record);

        if regular_mass >= 1.0 - params.epsilon / 2.0 {
            return select(members, atoms, &reports, alpha, params, log);
        }
        if iteration >= params.iteration_cap {
            return Err(Error::IterationCap { cap: params.iteration_cap });
        }

        let refined = par::map_range(atoms.len(), |id| -> Result<Vec<AtomState>> {
            let (report, g, _) = &reports[id];
            let st = &atoms[id];
            if report.regular {
                return Ok(vec![AtomState {
                    atom: st.atom.clone(),
                    indices: st.indices.clone(),
                }]);
            }
            let seed = derive_seed(params.seed, iteration as u64, id as u64);
            let found = params.oracle.find(g, seed)?;
            let mut out = Vec::new();
            for piece in found.pieces {
                let mut forms = st.atom.factor.restrict(&piece.space)?.forms().to_vec();
                forms.push(piece.form);
                if forms.len() > params.complexity_cap {
                    return Err(Error::TheoryViolation(format!(
                        "complexity {} exceeds cap {} at iteration {iteration}",
                        forms.len(),
                        params.complexity_cap
                    )));
                }
                let joined = QuadraticFactor::new(piece.space.clone(), forms)?;
                let reduced = rank_reduce(&joined, params.rank_target, params.complexity_cap)?;
                for atom in reduced.local.into_atoms() {
                    let idx = atom.space.indices_in(&st.atom.space)?;
                    out.push(AtomState {
                        indices: idx.iter().map(|&i| st.indices[i]).collect(),
                        atom,
                    });
                }
            }
            Ok(out)
        });
        let mut next = Vec::new();
        for r in refined {
            next.extend(r?);
        }
        atoms = next;
    }
    unreachable!("the loop returns")
}

fn select(
    members: &[bool],
    atoms: Vec<AtomState>,
    reports: &[(AtomReport, SpaceFunction, Vec<Complex64>)],
    alpha: f64,
    params: &KvnParams,
    log: Vec<IterationRecord>,
) -> Result<KvnOutcome> {
    let threshold = alpha - params.epsilon;
    let chosen = reports
        .iter()
        .map(|(r, _, _)| r)
        .filter(|r| r.regular && r.density >= threshold)
        .fold(None::<&AtomReport>, |best, r| match best {
            Some(b) if b.density >= r.density => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| {
            Error::TheoryViolation(format!(
                "none of {} atoms is regular with density ≥ α − ε = {threshold:.6}",
                atoms.len()
            ))
        })?;
    let st = &atoms[chosen.id];
    let local = members_of(&st.indices, members);
    let factor = st.atom.factor.clone();
    let approximation = approximation_error(&factor, &local)?;
    let density = local.iter().filter(|&&b| b).count() as f64 / local.len() as f64;
    let sep = factor.rank_separation_check(params.rank_target)?;
    if approximation > params.eta {
        return Err(Error::TheoryViolation(format!(
            "recomputed approximation {approximation} exceeds η = {}",
            params.eta
        )));
    }
    if density < threshold {
        return Err(Error::TheoryViolation(format!("density {density} below α − ε = {threshold}")));
    }
    if !sep.holds || factor.complexity() > params.complexity_cap {
        return Err(Error::TheoryViolation("selected factor fails rank separation".into()));
    }
    Ok(KvnOutcome {
        subspace: st.atom.space.clone(),
        factor,
        atom_id: chosen.id,
        alpha,
        density,
        approximation,
        verified_rank: sep.min_rank,
        log,
    })
}
