//! Distance-based revision.
//!
//! [`revise_qa`] revises one normal-form conjunction by another with a
//! best-first search over pairs of refinements (one for each operand). The
//! cost of a state is the sum over ordered variable pairs of the smallest
//! neighbourhood distance between the two remaining relations; it never
//! decreases under refinement and is exact once both sides are scenarios.
//!
//! [`revise`] lifts this to arbitrary formulas of the propositional closure:
//! both operands are put in negation-free DNF, every pair of disjuncts is
//! revised with a shrinking `distmax` bound, and the scenarios of the
//! cheapest pairs are collected. [`contract`] is `psi | revise(psi, !mu)`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::sync::atomic::{AtomicU32, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::algebra::{AlgebraSpec, Relation};
use crate::closure::{self, ClosureFormula};
use crate::qcn::{self, QAFormula, QcnError, Scenario, VariableUniverse};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RevisionError {
    #[error(transparent)]
    Qcn(#[from] QcnError),
    #[error("time budget exceeded")]
    TimeBudgetExceeded,
}

/// Result of revising one conjunction by another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevisionOutcome {
    /// No pair of models within the distance bound (or an operand is inconsistent).
    Failure,
    /// The minimal distance and every model of the new beliefs attaining it.
    Revised {
        delta: u32,
        scenarios: BTreeSet<Scenario>,
    },
}

/// A pair of refinements explored by the search, with its admissible cost.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub phi_psi: QAFormula,
    pub phi_mu: QAFormula,
    pub lower_bound: u32,
}

/// Sum over ordered pairs of the minimal distance between the two relations
/// of that pair. `None` if some pair has an empty relation.
pub fn lower_bound(psi: &QAFormula, mu: &QAFormula, a: &AlgebraSpec) -> Option<u32> {
    let n = psi.size();
    let mut total = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += a.min_distance(psi.rel(i, j), mu.rel(i, j))?;
            }
        }
    }
    Some(total)
}

// Upper bound shared between concurrent searches; u32::MAX stands for +inf.
struct Bound(AtomicU32);

impl Bound {
    fn new(distmax: Option<u32>) -> Self {
        Bound(AtomicU32::new(distmax.unwrap_or(u32::MAX)))
    }

    fn get(&self) -> u32 {
        self.0.load(AtomicOrdering::Relaxed)
    }

    fn lower_to(&self, v: u32) {
        self.0.fetch_min(v, AtomicOrdering::Relaxed);
    }
}

struct Node {
    state: SearchState,
    decided: usize,
    seq: u64,
}

impl Node {
    fn key(&self) -> (Reverse<u32>, usize, Reverse<u64>) {
        (
            Reverse(self.state.lower_bound),
            self.decided,
            Reverse(self.seq),
        )
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: lowest cost first, then most decided pairs, then FIFO
        self.key().cmp(&other.key())
    }
}

struct Search<'a> {
    algebra: &'a AlgebraSpec,
    memo: HashMap<(Relation, Relation), u32>,
    deadline: Option<Instant>,
}

impl Search<'_> {
    fn cost(&mut self, psi: &QAFormula, mu: &QAFormula) -> u32 {
        let n = psi.size();
        let mut total = 0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let key = (psi.rel(i, j), mu.rel(i, j));
                let a = self.algebra;
                total += *self.memo.entry(key).or_insert_with(|| {
                    a.min_distance(key.0, key.1)
                        .expect("closed formulas have no empty relation")
                });
            }
        }
        total
    }

    fn run(
        &mut self,
        psi: &QAFormula,
        mu: &QAFormula,
        bound: &Bound,
    ) -> Result<RevisionOutcome, RevisionError> {
        if psi.universe() != mu.universe() {
            return Err(QcnError::UniverseMismatch.into());
        }
        let a = self.algebra;
        let mut psi0 = psi.clone();
        let mut mu0 = mu.clone();
        if !psi0.close_in_place(a) || !mu0.close_in_place(a) {
            return Ok(RevisionOutcome::Failure);
        }

        let mut heap = BinaryHeap::new();
        let mut seen: HashSet<(QAFormula, QAFormula)> = HashSet::new();
        let mut seq = 0u64;
        let f0 = self.cost(&psi0, &mu0);
        if f0 <= bound.get() {
            seen.insert((psi0.clone(), mu0.clone()));
            heap.push(Node {
                decided: decided_pairs(&psi0) + decided_pairs(&mu0),
                state: SearchState {
                    phi_psi: psi0,
                    phi_mu: mu0,
                    lower_bound: f0,
                },
                seq,
            });
        }

        let mut delta: Option<u32> = None;
        let mut found = BTreeSet::new();
        let mut pops = 0u64;
        while let Some(node) = heap.pop() {
            if pops.is_multiple_of(1024) {
                if let Some(deadline) = self.deadline {
                    if Instant::now() >= deadline {
                        return Err(RevisionError::TimeBudgetExceeded);
                    }
                }
            }
            pops += 1;
            let f = node.state.lower_bound;
            if delta.is_some_and(|d| f > d) || f > bound.get() {
                break;
            }
            let SearchState {
                phi_psi, phi_mu, ..
            } = node.state;

            let Some((on_mu, i, j)) = branch_pair(&phi_psi, &phi_mu) else {
                // both sides are closed scenarios: the cost is the exact distance
                delta.get_or_insert(f);
                found.insert(Scenario::new(phi_mu).expect("final state is a scenario"));
                continue;
            };

            let side = if on_mu { &phi_mu } else { &phi_psi };
            for b in side.rel(i, j).iter() {
                let mut child = side.clone();
                if !child.refine(i, j, Relation::singleton(b), a) {
                    continue;
                }
                let (cp, cm) = if on_mu {
                    (phi_psi.clone(), child)
                } else {
                    (child, phi_mu.clone())
                };
                let cf = self.cost(&cp, &cm);
                debug_assert!(cf >= f, "cost must not decrease under refinement");
                if cf > bound.get() || delta.is_some_and(|d| cf > d) {
                    continue;
                }
                if !seen.insert((cp.clone(), cm.clone())) {
                    continue;
                }
                seq += 1;
                heap.push(Node {
                    decided: decided_pairs(&cp) + decided_pairs(&cm),
                    state: SearchState {
                        phi_psi: cp,
                        phi_mu: cm,
                        lower_bound: cf,
                    },
                    seq,
                });
            }
        }

        Ok(match delta {
            Some(delta) => RevisionOutcome::Revised {
                delta,
                scenarios: found,
            },
            None => RevisionOutcome::Failure,
        })
    }
}

fn decided_pairs(phi: &QAFormula) -> usize {
    phi.pairs()
        .filter(|&(i, j)| phi.rel(i, j).is_singleton())
        .count()
}

// The unordered pair to split next: smallest relation with at least two
// members, the old-beliefs side first on ties, then pair order.
fn branch_pair(psi: &QAFormula, mu: &QAFormula) -> Option<(bool, usize, usize)> {
    let mut best: Option<(usize, bool, usize, usize)> = None;
    for (on_mu, side) in [(false, psi), (true, mu)] {
        for (i, j) in side.pairs() {
            let len = side.rel(i, j).len();
            if len >= 2 && best.is_none_or(|(l, ..)| len < l) {
                best = Some((len, on_mu, i, j));
            }
        }
    }
    best.map(|(_, on_mu, i, j)| (on_mu, i, j))
}

/// Revises the conjunction `psi_i` by `mu_j`. `distmax = None` is +inf.
/// Returns the minimal scenario distance between their models and every
/// model of `mu_j` at that distance, or `Failure` if that distance exceeds
/// `distmax` or an operand is inconsistent.
pub fn revise_qa(
    psi_i: &QAFormula,
    mu_j: &QAFormula,
    distmax: Option<u32>,
    a: &AlgebraSpec,
) -> Result<RevisionOutcome, RevisionError> {
    Search {
        algebra: a,
        memo: HashMap::new(),
        deadline: None,
    }
    .run(psi_i, mu_j, &Bound::new(distmax))
}

/// A revision (or contraction) problem over a fixed variable universe.
#[derive(Debug, Clone)]
pub struct RevisionProblem<'a> {
    pub psi: ClosureFormula,
    pub mu: ClosureFormula,
    pub universe: Arc<VariableUniverse>,
    pub algebra: &'a AlgebraSpec,
}

impl<'a> RevisionProblem<'a> {
    /// Uses the variables of `psi` then `mu` as universe.
    pub fn new(psi: ClosureFormula, mu: ClosureFormula, algebra: &'a AlgebraSpec) -> Self {
        let mut universe = VariableUniverse::default();
        psi.collect_vars(&mut universe);
        mu.collect_vars(&mut universe);
        Self::with_universe(psi, mu, Arc::new(universe), algebra)
    }

    pub fn with_universe(
        psi: ClosureFormula,
        mu: ClosureFormula,
        universe: Arc<VariableUniverse>,
        algebra: &'a AlgebraSpec,
    ) -> Self {
        RevisionProblem {
            psi,
            mu,
            universe,
            algebra,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RevisionOptions {
    /// Pass the best distance found so far to later disjunct pairs.
    pub use_distmax: bool,
    /// Revise disjunct pairs on the rayon thread pool.
    pub parallel: bool,
    pub deadline: Option<Instant>,
    /// Upper bound on the distance; pairs further apart count as failures.
    pub distmax: Option<u32>,
}

impl Default for RevisionOptions {
    fn default() -> Self {
        RevisionOptions {
            use_distmax: true,
            parallel: false,
            deadline: None,
            distmax: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevisionKind {
    /// Regular case: scenarios of the new beliefs closest to the old ones.
    Revised,
    /// The new beliefs are inconsistent; the result is UNSAT.
    InconsistentMu,
    /// The old beliefs are inconsistent; the result is equivalent to the new beliefs.
    InconsistentPsi,
    /// Every model of the new beliefs is further than the `distmax` option.
    BeyondDistmax,
}

#[derive(Debug, Clone)]
pub struct RevisionResult {
    pub universe: Arc<VariableUniverse>,
    pub kind: RevisionKind,
    /// Minimal distance, defined when both operands are consistent.
    pub delta: Option<u32>,
    /// Result disjuncts, sorted. Scenarios when `kind` is `Revised`.
    pub disjuncts: Vec<QAFormula>,
}

impl RevisionResult {
    pub fn is_unsat(&self) -> bool {
        self.kind == RevisionKind::InconsistentMu
    }

    pub fn formula(&self, a: &AlgebraSpec) -> ClosureFormula {
        if self.disjuncts.is_empty() {
            return ClosureFormula::unsat(&self.universe);
        }
        ClosureFormula::or(self.disjuncts.iter().map(|d| closure::qa_to_formula(d, a)))
    }
}

// DNF disjuncts that are consistent, closed.
fn consistent_disjuncts(
    f: &ClosureFormula,
    universe: &Arc<VariableUniverse>,
    a: &AlgebraSpec,
) -> Result<Vec<QAFormula>, QcnError> {
    let dnf = closure::to_dnf_won(f, universe.clone(), a)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for d in dnf.disjuncts {
        let closed = qcn::path_closure(&d, a);
        if closed.has_empty() || !qcn::is_consistent(&closed, a) {
            continue;
        }
        if seen.insert(closed.clone()) {
            out.push(closed);
        }
    }
    Ok(out)
}

pub fn revise_with(
    problem: &RevisionProblem<'_>,
    options: &RevisionOptions,
) -> Result<RevisionResult, RevisionError> {
    let a = problem.algebra;
    let universe = &problem.universe;
    let psis = consistent_disjuncts(&problem.psi, universe, a)?;
    let mus = consistent_disjuncts(&problem.mu, universe, a)?;

    if mus.is_empty() {
        return Ok(RevisionResult {
            universe: universe.clone(),
            kind: RevisionKind::InconsistentMu,
            delta: None,
            disjuncts: Vec::new(),
        });
    }
    if psis.is_empty() {
        let mut disjuncts = mus;
        disjuncts.sort();
        return Ok(RevisionResult {
            universe: universe.clone(),
            kind: RevisionKind::InconsistentPsi,
            delta: None,
            disjuncts,
        });
    }

    let pairs: Vec<(usize, usize)> = (0..psis.len())
        .flat_map(|i| (0..mus.len()).map(move |j| (i, j)))
        .collect();
    let search = |i: usize, j: usize, bound: &Bound| {
        Search {
            algebra: a,
            memo: HashMap::new(),
            deadline: options.deadline,
        }
        .run(&psis[i], &mus[j], bound)
    };

    let cap = options.distmax;
    let mut distmax: Option<u32> = cap;
    let mut result: BTreeSet<Scenario> = BTreeSet::new();
    if options.parallel {
        let shared = Bound::new(cap);
        let unbounded = Bound::new(cap);
        let outcomes: Vec<RevisionOutcome> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let bound = if options.use_distmax {
                    &shared
                } else {
                    &unbounded
                };
                let outcome = search(i, j, bound)?;
                if let RevisionOutcome::Revised { delta, .. } = &outcome {
                    shared.lower_to(*delta);
                }
                Ok(outcome)
            })
            .collect::<Result<_, RevisionError>>()?;
        for outcome in outcomes {
            accumulate(&mut distmax, &mut result, outcome);
        }
    } else {
        for &(i, j) in &pairs {
            let bound = Bound::new(if options.use_distmax { distmax } else { cap });
            let outcome = search(i, j, &bound)?;
            accumulate(&mut distmax, &mut result, outcome);
        }
    }

    if result.is_empty() {
        return Ok(RevisionResult {
            universe: universe.clone(),
            kind: RevisionKind::BeyondDistmax,
            delta: None,
            disjuncts: Vec::new(),
        });
    }
    let disjuncts: Vec<QAFormula> = result.into_iter().map(Scenario::into_formula).collect();
    Ok(RevisionResult {
        universe: universe.clone(),
        kind: RevisionKind::Revised,
        delta: distmax,
        disjuncts,
    })
}

// Keeps the outcomes of minimal distance: a strictly smaller distance
// replaces the result, an equal one extends it.
fn accumulate(
    distmax: &mut Option<u32>,
    result: &mut BTreeSet<Scenario>,
    outcome: RevisionOutcome,
) {
    if let RevisionOutcome::Revised { delta, scenarios } = outcome {
        match *distmax {
            Some(d) if delta > d => {}
            Some(d) if delta == d => result.extend(scenarios),
            _ => {
                *distmax = Some(delta);
                *result = scenarios;
            }
        }
    }
}

/// `psi` revised by `mu`, as a disjunction of scenarios.
pub fn revise(problem: &RevisionProblem<'_>) -> Result<ClosureFormula, QcnError> {
    match revise_with(problem, &RevisionOptions::default()) {
        Ok(r) => Ok(r.formula(problem.algebra)),
        Err(RevisionError::Qcn(e)) => Err(e),
        Err(RevisionError::TimeBudgetExceeded) => unreachable!("no deadline set"),
    }
}

pub fn contract_with(
    problem: &RevisionProblem<'_>,
    options: &RevisionOptions,
) -> Result<ClosureFormula, RevisionError> {
    let negated = RevisionProblem {
        psi: problem.psi.clone(),
        mu: problem.mu.clone().negate(),
        universe: problem.universe.clone(),
        algebra: problem.algebra,
    };
    let revised = revise_with(&negated, options)?;
    Ok(ClosureFormula::or([
        problem.psi.clone(),
        revised.formula(problem.algebra),
    ]))
}

/// Contraction of `psi` by `mu`: `psi | revise(psi, !mu)`.
pub fn contract(problem: &RevisionProblem<'_>) -> Result<ClosureFormula, QcnError> {
    match contract_with(problem, &RevisionOptions::default()) {
        Ok(f) => Ok(f),
        Err(RevisionError::Qcn(e)) => Err(e),
        Err(RevisionError::TimeBudgetExceeded) => unreachable!("no deadline set"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::{parse, ModelOracle};
    use crate::qcn::{normalize, Constraint};

    fn allen() -> AlgebraSpec {
        AlgebraSpec::allen()
    }

    fn u3() -> Arc<VariableUniverse> {
        Arc::new(VariableUniverse::new(["x", "y", "z"]))
    }

    fn qa(a: &AlgebraSpec, u: &Arc<VariableUniverse>, cs: &[(&str, &str, &str)]) -> QAFormula {
        let cs: Vec<Constraint> = cs
            .iter()
            .map(|(x, r, y)| {
                Constraint::new(*x, a.relation_from_names(r.split_whitespace()).unwrap(), *y)
            })
            .collect();
        normalize(&cs, u.clone(), a).unwrap()
    }

    #[test]
    fn motivating_example_by_search() {
        let a = allen();
        let u = u3();
        let psi = qa(&a, &u, &[("x", "eq", "y"), ("y", "eq", "z")]);
        let mu = qa(&a, &u, &[("x", "d", "z"), ("z", "di", "x")]);
        let RevisionOutcome::Revised { delta, scenarios } = revise_qa(&psi, &mu, None, &a).unwrap()
        else {
            panic!("expected a revision");
        };
        assert_eq!(delta, 8);
        let expected: BTreeSet<Scenario> = [
            [("x", "d", "y"), ("y", "eq", "z"), ("x", "d", "z")],
            [("x", "s", "y"), ("y", "f", "z"), ("x", "d", "z")],
            [("x", "f", "y"), ("y", "s", "z"), ("x", "d", "z")],
            [("x", "eq", "y"), ("y", "d", "z"), ("x", "d", "z")],
        ]
        .iter()
        .map(|cs| Scenario::new(qa(&a, &u, cs)).unwrap())
        .collect();
        assert_eq!(scenarios, expected);

        assert_eq!(
            revise_qa(&psi, &mu, Some(7), &a).unwrap(),
            RevisionOutcome::Failure
        );
        assert!(matches!(
            revise_qa(&psi, &mu, Some(8), &a).unwrap(),
            RevisionOutcome::Revised { delta: 8, .. }
        ));
    }

    #[test]
    fn consistent_operands_give_their_conjunction() {
        let a = allen();
        let u = u3();
        let psi = qa(&a, &u, &[("x", "b m", "y")]);
        let mu = qa(&a, &u, &[("x", "m o", "y"), ("y", "b", "z")]);
        let RevisionOutcome::Revised { delta, scenarios } = revise_qa(&psi, &mu, None, &a).unwrap()
        else {
            panic!("expected a revision");
        };
        assert_eq!(delta, 0);
        let oracle = ModelOracle::new(u.clone(), &a, 3).unwrap();
        assert_eq!(scenarios, oracle.models_of_qa(&psi.conjoin(&mu).unwrap()));
    }

    #[test]
    fn inconsistent_operand_fails() {
        let a = allen();
        let u = u3();
        let bad = qa(
            &a,
            &u,
            &[("x", "b", "y"), ("y", "b", "z"), ("x", "bi", "z")],
        );
        let good = qa(&a, &u, &[]);
        assert_eq!(
            revise_qa(&bad, &good, None, &a).unwrap(),
            RevisionOutcome::Failure
        );
        assert_eq!(
            revise_qa(&good, &bad, None, &a).unwrap(),
            RevisionOutcome::Failure
        );
        let other = Arc::new(VariableUniverse::new(["x", "y"]));
        assert!(revise_qa(&good, &QAFormula::top(other, &a), None, &a).is_err());
    }

    #[test]
    fn lower_bound_is_monotone_and_exact() {
        let a = allen();
        let u = u3();
        let psi = qa(&a, &u, &[("x", "eq", "y"), ("y", "eq", "z")]);
        let mu = qa(&a, &u, &[("x", "d", "z")]);
        let coarse = lower_bound(&psi, &mu, &a).unwrap();
        let finer = qa(&a, &u, &[("x", "d", "z"), ("x", "s", "y")]);
        assert!(lower_bound(&psi, &finer, &a).unwrap() >= coarse);
        let sigma = Scenario::new(qa(
            &a,
            &u,
            &[("x", "d", "y"), ("y", "eq", "z"), ("x", "d", "z")],
        ))
        .unwrap();
        let all_eq = Scenario::new(qa(
            &a,
            &u,
            &[("x", "eq", "y"), ("y", "eq", "z"), ("x", "eq", "z")],
        ))
        .unwrap();
        assert_eq!(
            lower_bound(&all_eq, &sigma, &a).unwrap(),
            qcn::scenario_distance(&all_eq, &sigma, &a).unwrap()
        );
    }

    #[test]
    fn degenerate_operands() {
        let a = allen();
        let psi = parse("x {eq} y", &a).unwrap().0;
        let unsat = parse("x {} y", &a).unwrap().0;
        let r = revise_with(
            &RevisionProblem::new(psi.clone(), unsat.clone(), &a),
            &RevisionOptions::default(),
        )
        .unwrap();
        assert_eq!(r.kind, RevisionKind::InconsistentMu);
        assert!(r.is_unsat());

        let mu = parse("x {b m} y", &a).unwrap().0;
        let r = revise_with(
            &RevisionProblem::new(unsat, mu.clone(), &a),
            &RevisionOptions::default(),
        )
        .unwrap();
        assert_eq!(r.kind, RevisionKind::InconsistentPsi);
        let oracle = ModelOracle::new(r.universe.clone(), &a, 3).unwrap();
        assert!(oracle.equivalent(&r.formula(&a), &mu).unwrap());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let a = allen();
        let psi = parse("x {eq} y & y {eq} z | x {b} z", &a).unwrap().0;
        let mu = parse("(x {d} z | x {bi} z) & !(y {eq} z)", &a).unwrap().0;
        let problem = RevisionProblem::new(psi, mu, &a);
        let seq = revise_with(&problem, &RevisionOptions::default()).unwrap();
        let par = revise_with(
            &problem,
            &RevisionOptions {
                parallel: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq.delta, par.delta);
        assert_eq!(seq.disjuncts, par.disjuncts);
    }

    #[test]
    fn distmax_option_caps_the_distance() {
        let a = allen();
        let psi = parse("x {eq} y & y {eq} z", &a).unwrap().0;
        let mu = parse("x {d} z", &a).unwrap().0;
        let problem = RevisionProblem::new(psi, mu, &a);
        for parallel in [false, true] {
            let capped = |distmax| RevisionOptions {
                parallel,
                distmax: Some(distmax),
                ..Default::default()
            };
            let r = revise_with(&problem, &capped(7)).unwrap();
            assert_eq!(r.kind, RevisionKind::BeyondDistmax);
            assert!(r.disjuncts.is_empty() && !r.is_unsat());
            let r = revise_with(&problem, &capped(8)).unwrap();
            assert_eq!(
                (r.kind, r.delta, r.disjuncts.len()),
                (RevisionKind::Revised, Some(8), 4)
            );
        }
    }

    #[test]
    fn contraction_of_inconsistent_mu_is_psi() {
        let a = allen();
        let psi = parse("x {d} y & y {s} z", &a).unwrap().0;
        let mu = parse("x {} z", &a).unwrap().0;
        let problem = RevisionProblem::new(psi.clone(), mu, &a);
        let c = contract(&problem).unwrap();
        let oracle = ModelOracle::new(problem.universe.clone(), &a, 3).unwrap();
        assert!(oracle.equivalent(&c, &psi).unwrap());
    }
}
