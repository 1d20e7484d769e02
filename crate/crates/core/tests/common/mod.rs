#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qrev::algebra::{AlgebraSpec, Relation};
use qrev::closure::{ClosureFormula, ModelOracle};
use qrev::qcn::{Constraint, Scenario, VariableUniverse};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn universe(vars: &[&str]) -> Arc<VariableUniverse> {
    Arc::new(VariableUniverse::new(vars.iter().copied()))
}

pub fn rel(a: &AlgebraSpec, names: &str) -> Relation {
    a.relation_from_names(names.split_whitespace()).unwrap()
}

/// Non-empty relation, biased toward small ones.
pub fn random_relation(rng: &mut impl Rng, a: &AlgebraSpec) -> Relation {
    let n = a.base_count();
    let size = match rng.gen_range(0..10) {
        0..=3 => 1,
        4..=6 => rng.gen_range(2..=3),
        7..=8 => rng.gen_range(4..n),
        _ => n,
    };
    let mut bases: Vec<usize> = (0..n).collect();
    bases.shuffle(rng);
    Relation::from_bases(bases[..size].iter().copied())
}

pub fn random_atom(rng: &mut impl Rng, a: &AlgebraSpec, vars: &[&str]) -> ClosureFormula {
    let i = rng.gen_range(0..vars.len());
    let mut j = rng.gen_range(0..vars.len() - 1);
    if j >= i {
        j += 1;
    }
    ClosureFormula::atom(vars[i], random_relation(rng, a), vars[j])
}

/// Random closure formula of nesting depth at most `depth`.
pub fn random_formula(
    rng: &mut impl Rng,
    a: &AlgebraSpec,
    vars: &[&str],
    depth: usize,
) -> ClosureFormula {
    if depth == 0 || rng.gen_bool(0.3) {
        return random_atom(rng, a, vars);
    }
    match rng.gen_range(0..5) {
        0 => random_formula(rng, a, vars, depth - 1).negate(),
        1 | 2 => {
            let k = rng.gen_range(2..=3);
            ClosureFormula::and((0..k).map(|_| random_formula(rng, a, vars, depth - 1)))
        }
        _ => {
            let k = rng.gen_range(2..=3);
            ClosureFormula::or((0..k).map(|_| random_formula(rng, a, vars, depth - 1)))
        }
    }
}

/// Random formula with at least one model.
pub fn random_consistent(
    rng: &mut impl Rng,
    oracle: &ModelOracle<'_>,
    vars: &[&str],
    depth: usize,
) -> ClosureFormula {
    loop {
        let f = random_formula(rng, oracle.algebra(), vars, depth);
        if !oracle.models(&f).unwrap().is_empty() {
            return f;
        }
    }
}

/// Brute-force distance-based revision: the models of `mu` closest to the
/// models of `psi`. Returns the minimal distance (if both are consistent).
pub fn brute_force_revision(
    oracle: &ModelOracle<'_>,
    psi: &ClosureFormula,
    mu: &ClosureFormula,
) -> (Option<u32>, BTreeSet<Scenario>) {
    let a = oracle.algebra();
    let n = oracle.universe().len();
    let mp = oracle.models(psi).unwrap();
    let mm = oracle.models(mu).unwrap();
    if mp.is_empty() {
        return (None, mm);
    }
    let mut best = u32::MAX;
    let mut out = BTreeSet::new();
    for w in &mm {
        let d = mp
            .iter()
            .map(|s| {
                let mut total = 0;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            total += a.rel_distance(s.base(i, j), w.base(i, j));
                        }
                    }
                }
                total
            })
            .min()
            .unwrap();
        match d.cmp(&best) {
            Ordering::Less => {
                best = d;
                out.clear();
                out.insert(w.clone());
            }
            Ordering::Equal => {
                out.insert(w.clone());
            }
            Ordering::Greater => {}
        }
    }
    ((!mm.is_empty()).then_some(best), out)
}

/// Shuffles conjunct and disjunct order.
pub fn reorder(rng: &mut impl Rng, f: &ClosureFormula) -> ClosureFormula {
    match f {
        ClosureFormula::Atom(_) => f.clone(),
        ClosureFormula::Not(g) => reorder(rng, g).negate(),
        ClosureFormula::And(cs) => {
            let mut cs: Vec<_> = cs.iter().map(|c| reorder(rng, c)).collect();
            cs.shuffle(rng);
            ClosureFormula::And(cs)
        }
        ClosureFormula::Or(cs) => {
            let mut cs: Vec<_> = cs.iter().map(|c| reorder(rng, c)).collect();
            cs.shuffle(rng);
            ClosureFormula::Or(cs)
        }
    }
}

/// Rewrites random atoms `x r y` as `y r^-1 x`.
pub fn converse_rewrite(rng: &mut impl Rng, a: &AlgebraSpec, f: &ClosureFormula) -> ClosureFormula {
    map_atoms(f, &mut |c| {
        if rng.gen_bool(0.5) {
            ClosureFormula::Atom(Constraint::new(c.y.clone(), a.inverse(c.rel), c.x.clone()))
        } else {
            ClosureFormula::Atom(c.clone())
        }
    })
}

/// Splits random atoms `x (r1 | r2) y` into `x r1 y | x r2 y`.
pub fn split_relations(rng: &mut impl Rng, f: &ClosureFormula) -> ClosureFormula {
    map_atoms(f, &mut |c| {
        let bases: Vec<usize> = c.rel.iter().collect();
        if bases.len() < 2 || rng.gen_bool(0.3) {
            return ClosureFormula::Atom(c.clone());
        }
        let cut = rng.gen_range(1..bases.len());
        let left = Relation::from_bases(bases[..cut].iter().copied());
        let right = Relation::from_bases(bases[cut..].iter().copied());
        ClosureFormula::Or(vec![
            ClosureFormula::Atom(Constraint::new(c.x.clone(), left, c.y.clone())),
            ClosureFormula::Atom(Constraint::new(c.x.clone(), right, c.y.clone())),
        ])
    })
}

fn map_atoms(
    f: &ClosureFormula,
    g: &mut impl FnMut(&Constraint) -> ClosureFormula,
) -> ClosureFormula {
    match f {
        ClosureFormula::Atom(c) => g(c),
        ClosureFormula::Not(h) => ClosureFormula::Not(Box::new(map_atoms(h, g))),
        ClosureFormula::And(cs) => {
            ClosureFormula::And(cs.iter().map(|c| map_atoms(c, g)).collect())
        }
        ClosureFormula::Or(cs) => ClosureFormula::Or(cs.iter().map(|c| map_atoms(c, g)).collect()),
    }
}

/// A random syntactic variant with the same models.
pub fn variant(rng: &mut impl Rng, a: &AlgebraSpec, f: &ClosureFormula) -> ClosureFormula {
    let f = split_relations(rng, f);
    let f = converse_rewrite(rng, a, &f);
    reorder(rng, &f)
}

/// Rational number `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy)]
pub struct Rat {
    pub num: i64,
    pub den: i64,
}

impl Rat {
    pub fn random(rng: &mut impl Rng) -> Rat {
        let den = rng.gen_range(1..=4);
        Rat {
            num: rng.gen_range(0..=6 * den),
            den,
        }
    }
}

impl PartialEq for Rat {
    fn eq(&self, o: &Rat) -> bool {
        self.num * o.den == o.num * self.den
    }
}

impl PartialOrd for Rat {
    fn partial_cmp(&self, o: &Rat) -> Option<Ordering> {
        Some((self.num * o.den).cmp(&(o.num * self.den)))
    }
}

/// Random interval with rational endpoints, start strictly before end.
pub fn random_interval(rng: &mut impl Rng) -> (Rat, Rat) {
    loop {
        let (s, e) = (Rat::random(rng), Rat::random(rng));
        if s < e {
            return (s, e);
        }
    }
}

/// Allen base relation between two intervals, from the endpoint
/// definitions.
pub fn allen_by_endpoints(x: (Rat, Rat), y: (Rat, Rat)) -> &'static str {
    let ((xs, xe), (ys, ye)) = (x, y);
    if xe < ys {
        "b"
    } else if ye < xs {
        "bi"
    } else if xe == ys {
        "m"
    } else if ye == xs {
        "mi"
    } else if xs == ys && xe == ye {
        "eq"
    } else if xs == ys {
        if xe < ye {
            "s"
        } else {
            "si"
        }
    } else if xe == ye {
        if xs > ys {
            "f"
        } else {
            "fi"
        }
    } else if ys < xs && xe < ye {
        "d"
    } else if xs < ys && ye < xe {
        "di"
    } else if xs < ys {
        "o"
    } else {
        "oi"
    }
}
