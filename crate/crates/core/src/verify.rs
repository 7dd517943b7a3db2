//! Brute-force oracles: symmetry checks, orbits, the joint-satisfiability
//! guarantee for breaker families, and sampled fundamental-region checks.
//!
//! Everything here is exact. Points of `U^N` are enumerated in mixed radix
//! with variable 0 as the least significant digit. Permutations act on
//! points through [`Permutation::act`], the action that matches polynomial
//! substitution.

use std::collections::{BTreeSet, HashSet, VecDeque};

use num_rational::BigRational;
use num_traits::Zero;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binpack::BinPackingInstance;
use crate::model::IpModel;
use crate::perm::{Permutation, VarMap};
use crate::poly::{rational, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("enumeration needs {needed} points, guard allows {limit}")]
    PointGuard { needed: u128, limit: u64 },
    #[error("closure exceeds the guard of {limit} elements")]
    ClosureGuard { limit: usize },
    #[error("permutation acts on {perm} variables, model has {model}")]
    SizeMismatch { perm: usize, model: usize },
    #[error("no generators given")]
    NoGenerators,
    #[error(transparent)]
    Poly(#[from] PolyError),
}

impl VerifyError {
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            VerifyError::PointGuard { .. } | VerifyError::ClosureGuard { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guard {
    pub max_points: u64,
    pub max_orbit: usize,
}

impl Default for Guard {
    fn default() -> Self {
        Self {
            max_points: 1 << 20,
            max_orbit: 100_000,
        }
    }
}

/// Mixed-radix enumeration of `U^N` for a model.
struct PointSpace<'a> {
    radices: Vec<&'a [i64]>,
    total: u64,
}

impl<'a> PointSpace<'a> {
    fn new(model: &'a IpModel, guard: &Guard) -> Result<Self, VerifyError> {
        let radices: Vec<&[i64]> = model.domains().iter().map(|d| d.values()).collect();
        let mut total: u128 = 1;
        for r in &radices {
            total = total.saturating_mul(r.len() as u128);
        }
        if total > guard.max_points as u128 {
            return Err(VerifyError::PointGuard {
                needed: total,
                limit: guard.max_points,
            });
        }
        Ok(Self {
            radices,
            total: total as u64,
        })
    }

    /// Visits every point together with its digit vector and rank.
    fn for_each(&self, mut f: impl FnMut(u64, &[usize], &[i64])) {
        let n = self.radices.len();
        let mut digits = vec![0usize; n];
        let mut point: Vec<i64> = self.radices.iter().map(|r| r[0]).collect();
        for rank in 0..self.total {
            f(rank, &digits, &point);
            for i in 0..n {
                digits[i] += 1;
                if digits[i] < self.radices[i].len() {
                    point[i] = self.radices[i][digits[i]];
                    break;
                }
                digits[i] = 0;
                point[i] = self.radices[i][0];
            }
        }
    }
}

/// Returns a point `x` where `perm` breaks the objective or the
/// feasibility of `model`, or `None` when `perm` is a symmetry.
/// Feasibility covers domains, linear rows and side constraints.
pub fn symmetry_violation<M: VarMap + ?Sized>(
    perm: &M,
    model: &IpModel,
    guard: &Guard,
) -> Result<Option<Vec<i64>>, VerifyError> {
    let n = model.num_vars();
    if perm.domain_len() != n {
        return Err(VerifyError::SizeMismatch {
            perm: perm.domain_len(),
            model: n,
        });
    }
    let space = PointSpace::new(model, guard)?;
    let image: Vec<usize> = (0..n).map(|i| perm.image_of(i)).collect();
    if (0..n).any(|i| model.domains()[i] != model.domains()[image[i]]) {
        // some point leaves U^N; report the all-minimum point
        return Ok(Some(
            model.domains().iter().map(|d| d.values()[0]).collect(),
        ));
    }
    let mut strides = vec![1u64; n];
    for i in 1..n {
        strides[i] = strides[i - 1] * space.radices[i - 1].len() as u64;
    }
    let mut objective = Vec::with_capacity(space.total as usize);
    let mut feasible = Vec::with_capacity(space.total as usize);
    space.for_each(|_, _, x| {
        objective.push(model.objective_value(x));
        feasible.push(model.satisfies_linear(x) && model.satisfies_side(x));
    });
    let mut violation = None;
    space.for_each(|rank, digits, x| {
        if violation.is_some() {
            return;
        }
        let moved: u64 = (0..n).map(|i| digits[image[i]] as u64 * strides[i]).sum();
        let (r, m) = (rank as usize, moved as usize);
        if objective[r] != objective[m] || feasible[r] != feasible[m] {
            violation = Some(x.to_vec());
        }
    });
    Ok(violation)
}

/// `true` iff `f(Px) = f(x)` and `x` feasible ⇔ `Px` feasible on all of `U^N`.
pub fn check_symmetry<M: VarMap + ?Sized>(
    perm: &M,
    model: &IpModel,
    guard: &Guard,
) -> Result<bool, VerifyError> {
    Ok(symmetry_violation(perm, model, guard)?.is_none())
}

/// Exhaustive feasible set of a model, with objective values.
#[derive(Debug, Clone)]
pub struct Enumeration {
    feasible: Vec<(i128, Vec<i64>)>,
}

impl Enumeration {
    /// Enumerates `U^N`, keeping points that satisfy the linear rows and the
    /// model's own side constraints. Points are sorted by objective value,
    /// ties in enumeration order.
    pub fn of(model: &IpModel, guard: &Guard) -> Result<Self, VerifyError> {
        let space = PointSpace::new(model, guard)?;
        let mut feasible = Vec::new();
        space.for_each(|_, _, x| {
            if model.satisfies_linear(x) && model.satisfies_side(x) {
                feasible.push((model.objective_value(x), x.to_vec()));
            }
        });
        feasible.sort_by_key(|(v, _)| *v);
        Ok(Self { feasible })
    }

    pub fn feasible_points(&self) -> impl Iterator<Item = (i128, &[i64])> + '_ {
        self.feasible.iter().map(|(v, x)| (*v, x.as_slice()))
    }

    pub fn optimum(&self) -> Option<i128> {
        self.feasible.first().map(|(v, _)| *v)
    }

    pub fn optimal_points(&self) -> impl Iterator<Item = &[i64]> + '_ {
        let best = self.optimum();
        self.feasible
            .iter()
            .take_while(move |(v, _)| Some(*v) == best)
            .map(|(_, x)| x.as_slice())
    }

    /// Optimum and first optimal point after additionally imposing
    /// `p(x) <= 0` for every `p` in `extra`.
    pub fn optimum_with(
        &self,
        extra: &[Polynomial],
    ) -> Result<Option<(i128, Vec<i64>)>, VerifyError> {
        for (v, x) in &self.feasible {
            if satisfies_all(extra, x)? {
                return Ok(Some((*v, x.clone())));
            }
        }
        Ok(None)
    }
}

fn satisfies_all(polys: &[Polynomial], x: &[i64]) -> Result<bool, PolyError> {
    for p in polys {
        if p.evaluate_int(x)? > 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Orbit of an integer point and the member maximizing `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrbitReport {
    pub orbit: BTreeSet<Vec<i64>>,
    pub witness: Vec<i64>,
    pub witness_value: i128,
}

/// Closure of `{x}` under the generators and their inverses. The witness is
/// the smallest orbit member (in lexicographic order) attaining the
/// maximum of `h`.
pub fn orbit(
    x: &[i64],
    generators: &[Permutation],
    h: &Polynomial,
    guard: &Guard,
) -> Result<OrbitReport, VerifyError> {
    let moves: Vec<Permutation> = generators
        .iter()
        .flat_map(|g| [g.clone(), g.inverse()])
        .collect();
    for g in &moves {
        if g.len() != x.len() {
            return Err(VerifyError::SizeMismatch {
                perm: g.len(),
                model: x.len(),
            });
        }
    }
    let mut orbit = BTreeSet::new();
    orbit.insert(x.to_vec());
    let mut queue = VecDeque::from([x.to_vec()]);
    while let Some(p) = queue.pop_front() {
        for g in &moves {
            let q = g.act(&p);
            if !orbit.contains(&q) {
                if orbit.len() >= guard.max_orbit {
                    return Err(VerifyError::ClosureGuard {
                        limit: guard.max_orbit,
                    });
                }
                orbit.insert(q.clone());
                queue.push_back(q);
            }
        }
    }
    let mut best: Option<(i128, &Vec<i64>)> = None;
    for p in &orbit {
        let v = h.evaluate_int(p)?;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, p));
        }
    }
    let (witness_value, witness) = best.expect("orbit contains x");
    Ok(OrbitReport {
        witness: witness.clone(),
        witness_value,
        orbit,
    })
}

/// All elements of the group generated by `generators`, identity first.
pub fn group_closure(
    generators: &[Permutation],
    guard: &Guard,
) -> Result<Vec<Permutation>, VerifyError> {
    let n = generators.first().ok_or(VerifyError::NoGenerators)?.len();
    if let Some(g) = generators.iter().find(|g| g.len() != n) {
        return Err(VerifyError::SizeMismatch {
            perm: g.len(),
            model: n,
        });
    }
    let id = Permutation::identity(n);
    let mut seen: HashSet<Permutation> = HashSet::from([id.clone()]);
    let mut elements = vec![id.clone()];
    let mut queue = VecDeque::from([id]);
    while let Some(p) = queue.pop_front() {
        for g in generators {
            let q = g.compose(&p).expect("sizes checked");
            if seen.insert(q.clone()) {
                if elements.len() >= guard.max_orbit {
                    return Err(VerifyError::ClosureGuard {
                        limit: guard.max_orbit,
                    });
                }
                elements.push(q.clone());
                queue.push_back(q);
            }
        }
    }
    Ok(elements)
}

/// Whether some optimum of the model satisfies every breaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Theorem1Report {
    pub holds: bool,
    /// Optimum of the model without the breakers, `None` if infeasible.
    pub optimum: Option<i128>,
    /// An optimal point satisfying every breaker.
    pub witness: Option<Vec<i64>>,
}

/// Checks that some optimal solution of `model` satisfies all `breakers`
/// simultaneously. An infeasible model holds vacuously.
pub fn check_theorem1(
    model: &IpModel,
    breakers: &[Polynomial],
    guard: &Guard,
) -> Result<Theorem1Report, VerifyError> {
    theorem1_on(&Enumeration::of(model, guard)?, breakers)
}

/// Same as [`check_theorem1`] on a precomputed enumeration.
pub fn theorem1_on(
    enumeration: &Enumeration,
    breakers: &[Polynomial],
) -> Result<Theorem1Report, VerifyError> {
    let optimum = enumeration.optimum();
    if optimum.is_none() {
        return Ok(Theorem1Report {
            holds: true,
            optimum,
            witness: None,
        });
    }
    for x in enumeration.optimal_points() {
        if satisfies_all(breakers, x)? {
            return Ok(Theorem1Report {
                holds: true,
                optimum,
                witness: Some(x.to_vec()),
            });
        }
    }
    Ok(Theorem1Report {
        holds: false,
        optimum,
        witness: None,
    })
}

/// Outcome of the sampled fundamental-region checks for
/// `F = {x : h(Px) < h(x) for all P != id}`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionReport {
    pub samples: usize,
    pub group_order: usize,
    /// Samples found in F.
    pub in_region: usize,
    /// (a) strict-inequality membership disagrees with "x is the unique
    /// maximizer of h over its orbit".
    pub membership_violations: usize,
    /// (b) samples found in both F and PF for some P != id.
    pub overlap_violations: usize,
    /// (c) samples not covered by the closure of any PF.
    pub cover_violations: usize,
    /// Nonidentity elements whose set `L_P` no sample witnessed.
    pub unwitnessed: Vec<Permutation>,
}

impl RegionReport {
    pub fn checks_pass(&self) -> bool {
        self.membership_violations == 0
            && self.overlap_violations == 0
            && self.cover_violations == 0
    }

    /// Every `L_P` was witnessed nonempty, so the premise holds.
    pub fn premise_witnessed(&self) -> bool {
        self.unwitnessed.is_empty()
    }
}

/// Random rational point: numerators in `[-bound, bound]`, denominators in
/// `[1, bound]`.
pub fn random_rational_point<R: Rng + ?Sized>(
    n: usize,
    bound: i64,
    rng: &mut R,
) -> Vec<BigRational> {
    (0..n)
        .map(|_| rational(rng.gen_range(-bound..=bound), rng.gen_range(1..=bound)))
        .collect()
}

/// Sampled checks of the fundamental-region property over the group
/// generated by `generators`.
pub fn check_fundamental_region<R: Rng + ?Sized>(
    generators: &[Permutation],
    h: &Polynomial,
    samples: usize,
    rng: &mut R,
    guard: &Guard,
) -> Result<RegionReport, VerifyError> {
    let group = group_closure(generators, guard)?;
    let n = group[0].len();
    let inverses: Vec<Permutation> = group.iter().map(Permutation::inverse).collect();
    let mut witnessed = vec![false; group.len()];
    witnessed[0] = true;
    let mut report = RegionReport {
        samples,
        group_order: group.len(),
        ..RegionReport::default()
    };
    let in_f = |x: &[BigRational]| -> Result<bool, VerifyError> {
        let hx = h.evaluate_at(x)?;
        for p in &group[1..] {
            if h.evaluate_at(&p.act(x))? >= hx {
                return Ok(false);
            }
        }
        Ok(true)
    };
    for _ in 0..samples {
        let x = random_rational_point(n, 9, rng);
        // h(Px) for every P in the group
        let values: Vec<BigRational> = group
            .iter()
            .map(|p| h.evaluate_at(&p.act(&x)))
            .collect::<Result<_, _>>()?;
        let hx = &values[0];
        let strict = values[1..].iter().all(|v| v < hx);
        for (k, v) in values.iter().enumerate().skip(1) {
            if (v - hx) < BigRational::zero() {
                witnessed[k] = true;
            }
        }
        // (a) second route: unique argmax over the orbit values
        let max = values.iter().max().expect("group is nonempty");
        let argmax: Vec<usize> = (0..values.len()).filter(|&k| &values[k] == max).collect();
        let unique_at_id = argmax == [0];
        if strict != unique_at_id || strict != in_f(&x)? {
            report.membership_violations += 1;
        }
        if strict {
            report.in_region += 1;
        }
        // (b) x in PF iff P^{-1} x in F
        if strict {
            for inv in &inverses[1..] {
                if in_f(&inv.act(&x))? {
                    report.overlap_violations += 1;
                    break;
                }
            }
        }
        // (c) pick P maximizing h(P^{-1} x); then x lies in closure(PF):
        // h(U x) <= h(P^{-1} x) for every U.
        let inv_values: Vec<BigRational> = inverses
            .iter()
            .map(|q| h.evaluate_at(&q.act(&x)))
            .collect::<Result<_, _>>()?;
        let best = (0..group.len())
            .max_by(|&a, &b| inv_values[a].cmp(&inv_values[b]))
            .expect("group is nonempty");
        let z = inverses[best].act(&x);
        let hz = &inv_values[best];
        let covered = values.iter().all(|v| v <= hz)
            && group
                .iter()
                .map(|q| h.evaluate_at(&q.act(&z)))
                .collect::<Result<Vec<_>, _>>()?
                .iter()
                .all(|v| v <= hz);
        if !covered {
            report.cover_violations += 1;
        }
    }
    report.unwitnessed = group
        .iter()
        .zip(&witnessed)
        .filter(|(_, &w)| !w)
        .map(|(p, _)| p.clone())
        .collect();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LinearExistence {
    /// A linear form with every nonidentity `L_P` witnessed nonempty.
    Found(Polynomial),
    /// The group is trivial; the condition holds vacuously.
    Trivial,
    /// No witness within the retry budget. Never read as a refutation.
    Inconclusive,
}

impl LinearExistence {
    pub fn succeeded(&self) -> bool {
        !matches!(self, LinearExistence::Inconclusive)
    }
}

/// Searches random integer linear forms with pairwise distinct
/// coefficients for one whose sets `L_P` are all nonempty.
pub fn check_linear_existence<R: Rng + ?Sized>(
    generators: &[Permutation],
    retries: usize,
    rng: &mut R,
    guard: &Guard,
) -> Result<LinearExistence, VerifyError> {
    let group = group_closure(generators, guard)?;
    if group.len() == 1 {
        return Ok(LinearExistence::Trivial);
    }
    let n = group[0].len();
    for _ in 0..retries {
        let mut coeffs: Vec<i64> = Vec::with_capacity(n);
        while coeffs.len() < n {
            let c = rng.gen_range(-(4 * n as i64)..=4 * n as i64);
            if !coeffs.contains(&c) {
                coeffs.push(c);
            }
        }
        let h = Polynomial::from_terms(
            coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| (crate::poly::Monomial::var(i), c)),
        );
        // the coefficient vector itself is the natural candidate point
        let mut candidates = vec![coeffs
            .iter()
            .map(|&c| crate::poly::rational_int(c))
            .collect::<Vec<_>>()];
        candidates.extend((0..16).map(|_| random_rational_point(n, 9, rng)));
        let all = group[1..].iter().all(|p| {
            candidates.iter().any(|x| {
                let diff = h.evaluate_at(&p.act(x)).expect("dense point")
                    - h.evaluate_at(x).expect("dense point");
                diff < BigRational::zero()
            })
        });
        if all {
            return Ok(LinearExistence::Found(h));
        }
    }
    Ok(LinearExistence::Inconclusive)
}

/// Exhaustive optimum of a bin-packing instance by enumerating set
/// partitions of the items (restricted growth strings). Independent of the
/// 0-1 model: a partition is feasible when it has at most `bins` blocks
/// and every block fits. Returns `None` when no packing exists.
pub fn bin_packing_optimum_by_partitions(inst: &BinPackingInstance) -> Option<usize> {
    let m = inst.items();
    if m == 0 {
        return Some(0);
    }
    let sizes = inst.sizes();
    let cap = inst.capacity();
    let mut best: Option<usize> = None;
    let mut loads: Vec<u64> = Vec::with_capacity(m);

    fn rec(
        i: usize,
        sizes: &[u64],
        cap: u64,
        max_blocks: usize,
        loads: &mut Vec<u64>,
        best: &mut Option<usize>,
    ) {
        if i == sizes.len() {
            let used = loads.len();
            if best.is_none_or(|b| used < b) {
                *best = Some(used);
            }
            return;
        }
        for b in 0..loads.len() {
            if loads[b] + sizes[i] <= cap {
                loads[b] += sizes[i];
                rec(i + 1, sizes, cap, max_blocks, loads, best);
                loads[b] -= sizes[i];
            }
        }
        if loads.len() < max_blocks {
            loads.push(sizes[i]);
            rec(i + 1, sizes, cap, max_blocks, loads, best);
            loads.pop();
        }
    }

    rec(0, sizes, cap, inst.bins(), &mut loads, &mut best);
    best
}

/// One entry of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub instance: String,
    pub seed: Option<u64>,
    pub result: CheckResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckResult {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
    pub guard_settings: Guard,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.result != CheckResult::Fail)
    }
}
