//! Qualitative constraint networks in normal form: one relation per ordered
//! pair of variables, algebraic closure, scenario enumeration, consistency
//! and the scenario distance used by revision.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use indexmap::IndexSet;
use thiserror::Error;

use crate::algebra::{AlgebraSpec, BaseRelation, Relation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QcnError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("constraint relates `{0}` to itself")]
    SelfConstraint(String),
    #[error("formula contains an empty relation")]
    EmptyRelationPresent,
    #[error("formulas are over different variable universes")]
    UniverseMismatch,
    #[error("formula is not a scenario")]
    NotAScenario,
    #[error("scenario cannot be realized by intervals: {0}")]
    Unrealizable(String),
}

/// The ordered set of variables a formula ranges over.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VariableUniverse {
    vars: IndexSet<String>,
}

impl VariableUniverse {
    pub fn new<I, S>(vars: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        VariableUniverse {
            vars: vars.into_iter().map(Into::into).collect(),
        }
    }

    /// Adds a variable if absent and returns its index.
    pub fn insert(&mut self, var: &str) -> usize {
        match self.vars.get_index_of(var) {
            Some(i) => i,
            None => self.vars.insert_full(var.to_string()).0,
        }
    }

    pub fn index_of(&self, var: &str) -> Option<usize> {
        self.vars.get_index_of(var)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.vars[i]
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(String::as_str)
    }

    pub fn contains(&self, var: &str) -> bool {
        self.vars.contains(var)
    }
}

/// `x rel y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Constraint {
    pub x: String,
    pub rel: Relation,
    pub y: String,
}

impl Constraint {
    pub fn new(x: impl Into<String>, rel: Relation, y: impl Into<String>) -> Self {
        Constraint {
            x: x.into(),
            rel,
            y: y.into(),
        }
    }
}

/// A conjunction of constraints in normal form.
///
/// Equality, hashing and ordering look at the relations only; comparing
/// formulas over different universes is a logic error.
#[derive(Clone)]
pub struct QAFormula {
    universe: Arc<VariableUniverse>,
    // row-major n x n, the diagonal holds the identity relation
    rels: Vec<Relation>,
}

impl PartialEq for QAFormula {
    fn eq(&self, other: &Self) -> bool {
        self.rels == other.rels
    }
}

impl Eq for QAFormula {}

impl Hash for QAFormula {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rels.hash(state);
    }
}

impl PartialOrd for QAFormula {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QAFormula {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rels.cmp(&other.rels)
    }
}

impl fmt::Debug for QAFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.size();
        let mut m = f.debug_map();
        for i in 0..n {
            for j in i + 1..n {
                m.entry(
                    &format_args!("({}, {})", self.universe.name(i), self.universe.name(j)),
                    &self.rel(i, j),
                );
            }
        }
        m.finish()
    }
}

impl QAFormula {
    /// The formula with every pair unconstrained.
    pub fn top(universe: Arc<VariableUniverse>, a: &AlgebraSpec) -> QAFormula {
        let n = universe.len();
        let mut rels = vec![a.full(); n * n];
        for i in 0..n {
            rels[i * n + i] = a.identity_relation();
        }
        QAFormula { universe, rels }
    }

    pub fn universe(&self) -> &Arc<VariableUniverse> {
        &self.universe
    }

    pub fn size(&self) -> usize {
        self.universe.len()
    }

    /// `rel_of(x, y)` by variable index.
    pub fn rel(&self, i: usize, j: usize) -> Relation {
        self.rels[i * self.size() + j]
    }

    /// `rel_of(x, y)` by variable name.
    pub fn rel_of(&self, x: &str, y: &str) -> Option<Relation> {
        let i = self.universe.index_of(x)?;
        let j = self.universe.index_of(y)?;
        Some(self.rel(i, j))
    }

    /// Sets one direction only; callers keep the converse in sync when needed.
    pub fn set_directed(&mut self, i: usize, j: usize, r: Relation) {
        let n = self.size();
        self.rels[i * n + j] = r;
    }

    /// Sets `rel(i, j) = r` and `rel(j, i) = inverse(r)`.
    pub fn set(&mut self, i: usize, j: usize, r: Relation, a: &AlgebraSpec) {
        self.set_directed(i, j, r);
        self.set_directed(j, i, a.inverse(r));
    }

    pub fn has_empty(&self) -> bool {
        self.rels.iter().any(|r| r.is_empty())
    }

    pub fn is_scenario(&self) -> bool {
        self.rels.iter().all(|r| r.is_singleton())
    }

    /// Unordered pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.size();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Pairwise intersection with another formula over the same universe.
    pub fn conjoin(&self, other: &QAFormula) -> Result<QAFormula, QcnError> {
        if self.universe != other.universe {
            return Err(QcnError::UniverseMismatch);
        }
        Ok(QAFormula {
            universe: self.universe.clone(),
            rels: self
                .rels
                .iter()
                .zip(&other.rels)
                .map(|(a, b)| *a & *b)
                .collect(),
        })
    }

    /// Constraints for every pair `i < j` whose relation is not universal.
    pub fn constraints(&self, a: &AlgebraSpec) -> Vec<Constraint> {
        let full = a.full();
        self.pairs()
            .filter(|&(i, j)| self.rel(i, j) != full)
            .map(|(i, j)| {
                Constraint::new(self.universe.name(i), self.rel(i, j), self.universe.name(j))
            })
            .collect()
    }

    /// Canonical textual form in the formula grammar.
    pub fn display<'a>(&'a self, a: &'a AlgebraSpec) -> impl fmt::Display + 'a {
        FormulaDisplay {
            formula: self,
            algebra: a,
        }
    }

    // Tightens rel(i, j) by `r`. Returns true if it changed.
    fn tighten(&mut self, i: usize, j: usize, r: Relation, a: &AlgebraSpec) -> bool {
        let old = self.rel(i, j);
        let new = old & r;
        if new == old {
            return false;
        }
        self.set(i, j, new, a);
        true
    }

    // Work-queue algebraic closure starting from the given pairs.
    // Returns false as soon as some relation becomes empty.
    fn propagate(
        &mut self,
        a: &AlgebraSpec,
        seeds: impl IntoIterator<Item = (usize, usize)>,
    ) -> bool {
        let n = self.size();
        let mut queued = vec![false; n * n];
        let mut queue = VecDeque::new();
        let push =
            |queue: &mut VecDeque<(usize, usize)>, queued: &mut [bool], i: usize, j: usize| {
                let (i, j) = if i < j { (i, j) } else { (j, i) };
                if !queued[i * n + j] {
                    queued[i * n + j] = true;
                    queue.push_back((i, j));
                }
            };
        for (i, j) in seeds {
            push(&mut queue, &mut queued, i, j);
        }
        while let Some((i, j)) = queue.pop_front() {
            queued[i * n + j] = false;
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                // paths through the edge in both of its directions
                for (x, y) in [(i, j), (j, i)] {
                    // x -> y -> k constrains (x, k)
                    let c = a.compose(self.rel(x, y), self.rel(y, k));
                    if self.tighten(x, k, c, a) {
                        if self.rel(x, k).is_empty() {
                            return false;
                        }
                        push(&mut queue, &mut queued, x, k);
                    }
                    // k -> x -> y constrains (k, y)
                    let c = a.compose(self.rel(k, x), self.rel(x, y));
                    if self.tighten(k, y, c, a) {
                        if self.rel(k, y).is_empty() {
                            return false;
                        }
                        push(&mut queue, &mut queued, k, y);
                    }
                }
            }
        }
        true
    }

    // Makes every pair converse-consistent. Returns false on an empty relation.
    fn close_converses(&mut self, a: &AlgebraSpec) -> bool {
        let pairs: Vec<_> = self.pairs().collect();
        for (i, j) in pairs {
            let r = self.rel(i, j) & a.inverse(self.rel(j, i));
            self.set(i, j, r, a);
        }
        !self.has_empty()
    }

    // In-place closure. Returns false if the result has an empty relation.
    pub(crate) fn close_in_place(&mut self, a: &AlgebraSpec) -> bool {
        if !self.close_converses(a) {
            return false;
        }
        let pairs: Vec<_> = self.pairs().collect();
        self.propagate(a, pairs)
    }

    // Refines pair (i, j) to `r` and propagates from it.
    pub(crate) fn refine(&mut self, i: usize, j: usize, r: Relation, a: &AlgebraSpec) -> bool {
        self.set(i, j, r, a);
        !r.is_empty() && self.propagate(a, [(i, j)])
    }
}

struct FormulaDisplay<'a> {
    formula: &'a QAFormula,
    algebra: &'a AlgebraSpec,
}

impl fmt::Display for FormulaDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let phi = self.formula;
        let mut constraints = phi.constraints(self.algebra);
        if constraints.is_empty() && phi.size() >= 2 {
            constraints.push(Constraint::new(
                phi.universe.name(0),
                phi.rel(0, 1),
                phi.universe.name(1),
            ));
        }
        for (k, c) in constraints.iter().enumerate() {
            if k > 0 {
                f.write_str(" & ")?;
            }
            write!(
                f,
                "{} {{{}}} {}",
                c.x,
                self.algebra.relation_names(c.rel),
                c.y
            )?;
        }
        Ok(())
    }
}

/// Builds the normal form of a conjunction of constraints: per ordered pair,
/// the intersection of every stated relation and of the inverse of every
/// relation stated on the converse pair; unconstrained pairs are universal.
pub fn normalize(
    constraints: &[Constraint],
    universe: Arc<VariableUniverse>,
    a: &AlgebraSpec,
) -> Result<QAFormula, QcnError> {
    let mut phi = QAFormula::top(universe, a);
    for c in constraints {
        let i = phi
            .universe
            .index_of(&c.x)
            .ok_or_else(|| QcnError::UnknownVariable(c.x.clone()))?;
        let j = phi
            .universe
            .index_of(&c.y)
            .ok_or_else(|| QcnError::UnknownVariable(c.y.clone()))?;
        if i == j {
            return Err(QcnError::SelfConstraint(c.x.clone()));
        }
        let r = phi.rel(i, j) & c.rel;
        phi.set(i, j, r, a);
    }
    Ok(phi)
}

/// Algebraic closure: refines every `rel(x, z)` by `compose(rel(x, y), rel(y, z))`
/// until fixpoint. Models are preserved; an empty relation signals inconsistency.
pub fn path_closure(phi: &QAFormula, a: &AlgebraSpec) -> QAFormula {
    let mut out = phi.clone();
    out.close_in_place(a);
    out
}

pub fn is_arc_consistent(phi: &QAFormula, a: &AlgebraSpec) -> bool {
    !phi.has_empty()
        && phi
            .pairs()
            .all(|(i, j)| phi.rel(i, j) == a.inverse(phi.rel(j, i)))
}

pub fn is_path_consistent(phi: &QAFormula, a: &AlgebraSpec) -> bool {
    let n = phi.size();
    for x in 0..n {
        for y in 0..n {
            if y == x {
                continue;
            }
            for z in 0..n {
                if z == x || z == y {
                    continue;
                }
                if !phi
                    .rel(x, z)
                    .is_subset(a.compose(phi.rel(x, y), phi.rel(y, z)))
                {
                    return false;
                }
            }
        }
    }
    true
}

/// Lazily enumerates the scenarios of `phi`: one base relation per unordered
/// pair, with the inverse on the converse pair. Choices whose inverse is not
/// allowed on the converse pair are skipped.
pub fn scenarios<'a>(phi: &QAFormula, a: &'a AlgebraSpec) -> Result<ScenarioIter<'a>, QcnError> {
    if phi.has_empty() {
        return Err(QcnError::EmptyRelationPresent);
    }
    let pairs: Vec<(usize, usize)> = phi.pairs().collect();
    let choices: Vec<Vec<BaseRelation>> = pairs
        .iter()
        .map(|&(i, j)| {
            let back = phi.rel(j, i);
            phi.rel(i, j)
                .iter()
                .filter(|&b| back.contains(a.base_inverse(b)))
                .collect()
        })
        .collect();
    let exhausted = choices.iter().any(Vec::is_empty);
    Ok(ScenarioIter {
        base: QAFormula::top(phi.universe.clone(), a),
        algebra: a,
        pairs,
        choices,
        cursor: None,
        exhausted,
    })
}

pub struct ScenarioIter<'a> {
    base: QAFormula,
    algebra: &'a AlgebraSpec,
    pairs: Vec<(usize, usize)>,
    choices: Vec<Vec<BaseRelation>>,
    cursor: Option<Vec<usize>>,
    exhausted: bool,
}

impl Iterator for ScenarioIter<'_> {
    type Item = Scenario;

    fn next(&mut self) -> Option<Scenario> {
        if self.exhausted {
            return None;
        }
        match &mut self.cursor {
            None => self.cursor = Some(vec![0; self.pairs.len()]),
            Some(cursor) => {
                // odometer increment, last pair fastest
                let mut k = cursor.len();
                loop {
                    if k == 0 {
                        self.exhausted = true;
                        return None;
                    }
                    k -= 1;
                    cursor[k] += 1;
                    if cursor[k] < self.choices[k].len() {
                        break;
                    }
                    cursor[k] = 0;
                }
            }
        }
        let cursor = self.cursor.as_ref().unwrap();
        let mut sigma = self.base.clone();
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            sigma.set(
                i,
                j,
                Relation::singleton(self.choices[k][cursor[k]]),
                self.algebra,
            );
        }
        Some(Scenario(sigma))
    }
}

/// Decides consistency by backtracking over pair refinements with algebraic
/// closure after each choice.
pub fn is_consistent(phi: &QAFormula, a: &AlgebraSpec) -> bool {
    find_consistent_scenario(phi, a).is_some()
}

/// Some consistent scenario of `phi`, if any.
pub fn find_consistent_scenario(phi: &QAFormula, a: &AlgebraSpec) -> Option<Scenario> {
    let mut start = phi.clone();
    if !start.close_in_place(a) {
        return None;
    }
    backtrack_one(start, a).map(Scenario)
}

fn backtrack_one(phi: QAFormula, a: &AlgebraSpec) -> Option<QAFormula> {
    // smallest non-singleton relation first, ties in pair order
    let branch = phi
        .pairs()
        .filter(|&(i, j)| phi.rel(i, j).len() >= 2)
        .min_by_key(|&(i, j)| phi.rel(i, j).len());
    let Some((i, j)) = branch else {
        return Some(phi);
    };
    for b in phi.rel(i, j).iter() {
        let mut child = phi.clone();
        if child.refine(i, j, Relation::singleton(b), a) {
            if let Some(found) = backtrack_one(child, a) {
                return Some(found);
            }
        }
    }
    None
}

/// Every consistent scenario of `phi`, in pair-lexicographic order.
pub fn consistent_scenarios(phi: &QAFormula, a: &AlgebraSpec) -> Vec<Scenario> {
    let mut out = Vec::new();
    let mut start = phi.clone();
    if start.close_in_place(a) {
        let pairs: Vec<_> = start.pairs().collect();
        enumerate_all(start, &pairs, 0, a, &mut out);
    }
    out
}

fn enumerate_all(
    phi: QAFormula,
    pairs: &[(usize, usize)],
    k: usize,
    a: &AlgebraSpec,
    out: &mut Vec<Scenario>,
) {
    let Some(&(i, j)) = pairs.get(k) else {
        out.push(Scenario(phi));
        return;
    };
    let r = phi.rel(i, j);
    if r.is_singleton() {
        enumerate_all(phi, pairs, k + 1, a, out);
        return;
    }
    for b in r.iter() {
        let mut child = phi.clone();
        if child.refine(i, j, Relation::singleton(b), a) {
            enumerate_all(child, pairs, k + 1, a, out);
        }
    }
}

/// A normal-form formula with a single base relation on every pair.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scenario(QAFormula);

impl Scenario {
    pub fn new(phi: QAFormula) -> Result<Scenario, QcnError> {
        if phi.is_scenario() {
            Ok(Scenario(phi))
        } else {
            Err(QcnError::NotAScenario)
        }
    }

    pub fn base(&self, i: usize, j: usize) -> BaseRelation {
        self.0
            .rel(i, j)
            .as_base()
            .expect("scenario relations are singletons")
    }

    pub fn formula(&self) -> &QAFormula {
        &self.0
    }

    pub fn into_formula(self) -> QAFormula {
        self.0
    }
}

impl std::ops::Deref for Scenario {
    type Target = QAFormula;
    fn deref(&self) -> &QAFormula {
        &self.0
    }
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.0, f)
    }
}

/// Sum over ordered pairs `x != y` of the neighbourhood distance between
/// the two scenarios' base relations.
pub fn scenario_distance(
    sigma: &Scenario,
    tau: &Scenario,
    a: &AlgebraSpec,
) -> Result<u32, QcnError> {
    if sigma.universe != tau.universe {
        return Err(QcnError::UniverseMismatch);
    }
    let n = sigma.size();
    let mut d = 0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                d += a.rel_distance(sigma.base(i, j), tau.base(i, j));
            }
        }
    }
    Ok(d)
}

/// A closed interval `[start, end]` with `start < end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub start: i64,
    pub end: i64,
}

/// Intervals assigned to the variables of a universe, in universe order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalAssignment {
    pub intervals: Vec<(String, Interval)>,
}

impl IntervalAssignment {
    pub fn get(&self, var: &str) -> Option<Interval> {
        self.intervals
            .iter()
            .find(|(v, _)| v == var)
            .map(|(_, i)| *i)
    }
}

// Orderings of (a1 vs a2, a1 vs b2, b1 vs a2, b1 vs b2) for x = [a1, b1], y = [a2, b2].
fn allen_endpoint_order(name: &str) -> Option<[Ordering; 4]> {
    use Ordering::*;
    Some(match name {
        "b" => [Less, Less, Less, Less],
        "m" => [Less, Less, Equal, Less],
        "o" => [Less, Less, Greater, Less],
        "s" => [Equal, Less, Greater, Less],
        "d" => [Greater, Less, Greater, Less],
        "f" => [Greater, Less, Greater, Equal],
        "eq" => [Equal, Less, Greater, Equal],
        "bi" => [Greater, Greater, Greater, Greater],
        "mi" => [Greater, Equal, Greater, Greater],
        "oi" => [Greater, Less, Greater, Greater],
        "si" => [Equal, Less, Greater, Greater],
        "di" => [Less, Less, Greater, Greater],
        "fi" => [Less, Less, Greater, Equal],
        _ => return None,
    })
}

/// The Allen base relation holding between two intervals.
pub fn allen_relation_name(x: Interval, y: Interval) -> &'static str {
    let (a1, b1, a2, b2) = (x.start, x.end, y.start, y.end);
    if a1 == a2 && b1 == b2 {
        "eq"
    } else if b1 < a2 {
        "b"
    } else if b2 < a1 {
        "bi"
    } else if a2 == b1 {
        "m"
    } else if a1 == b2 {
        "mi"
    } else if a1 < a2 && a2 < b1 && b1 < b2 {
        "o"
    } else if a2 < a1 && a1 < b2 && b2 < b1 {
        "oi"
    } else if a1 == a2 {
        if b1 < b2 {
            "s"
        } else {
            "si"
        }
    } else if b1 == b2 {
        if a1 > a2 {
            "f"
        } else {
            "fi"
        }
    } else if a1 > a2 {
        "d"
    } else {
        "di"
    }
}

/// Constructs integer (hence rational) intervals satisfying an Allen scenario
/// by ordering its endpoints.
pub fn realize_allen_scenario(
    sigma: &Scenario,
    a: &AlgebraSpec,
) -> Result<IntervalAssignment, QcnError> {
    let n = sigma.size();
    let points = 2 * n;
    let start = |v: usize| 2 * v;
    let end = |v: usize| 2 * v + 1;

    // union-find over equal endpoints
    let mut parent: Vec<usize> = (0..points).collect();
    fn find(parent: &mut [usize], mut p: usize) -> usize {
        while parent[p] != p {
            parent[p] = parent[parent[p]];
            p = parent[p];
        }
        p
    }
    let mut less: Vec<(usize, usize)> = (0..n).map(|v| (start(v), end(v))).collect();
    for (i, j) in sigma.pairs() {
        let name = a.base_name(sigma.base(i, j));
        let order = allen_endpoint_order(name)
            .ok_or_else(|| QcnError::Unrealizable(format!("`{name}` is not an Allen relation")))?;
        let lhs = [start(i), start(i), end(i), end(i)];
        let rhs = [start(j), end(j), start(j), end(j)];
        for k in 0..4 {
            match order[k] {
                Ordering::Less => less.push((lhs[k], rhs[k])),
                Ordering::Greater => less.push((rhs[k], lhs[k])),
                Ordering::Equal => {
                    let (p, q) = (find(&mut parent, lhs[k]), find(&mut parent, rhs[k]));
                    parent[p] = q;
                }
            }
        }
    }

    // longest-path layering of the strict order over equality classes
    let mut succ = vec![Vec::new(); points];
    let mut indegree = vec![0usize; points];
    for (p, q) in less {
        let (p, q) = (find(&mut parent, p), find(&mut parent, q));
        if p == q {
            return Err(QcnError::Unrealizable(
                "endpoint must be both equal and smaller".into(),
            ));
        }
        succ[p].push(q);
        indegree[q] += 1;
    }
    let roots: Vec<usize> = (0..points).filter(|&p| find(&mut parent, p) == p).collect();
    let mut level = vec![0i64; points];
    let mut queue: VecDeque<usize> = roots
        .iter()
        .copied()
        .filter(|&p| indegree[p] == 0)
        .collect();
    let mut seen = 0;
    while let Some(p) = queue.pop_front() {
        seen += 1;
        for &q in &succ[p] {
            level[q] = level[q].max(level[p] + 1);
            indegree[q] -= 1;
            if indegree[q] == 0 {
                queue.push_back(q);
            }
        }
    }
    if seen != roots.len() {
        return Err(QcnError::Unrealizable("cyclic endpoint order".into()));
    }

    let intervals: Vec<(String, Interval)> = (0..n)
        .map(|v| {
            let s = level[find(&mut parent, start(v))];
            let e = level[find(&mut parent, end(v))];
            (
                sigma.universe.name(v).to_string(),
                Interval { start: s, end: e },
            )
        })
        .collect();

    for (i, j) in sigma.pairs() {
        let got = allen_relation_name(intervals[i].1, intervals[j].1);
        if got != a.base_name(sigma.base(i, j)) {
            return Err(QcnError::Unrealizable(format!(
                "{} {} {} realized as {got}",
                intervals[i].0,
                a.base_name(sigma.base(i, j)),
                intervals[j].0
            )));
        }
    }
    Ok(IntervalAssignment { intervals })
}
