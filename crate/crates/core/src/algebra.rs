//! Qualitative algebras as data: base relations, inverses, composition
//! table and conceptual neighbourhood distance, plus the set algebra of
//! relations (unions of base relations) over them.

use std::collections::VecDeque;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

/// Maximum number of base relations an algebra may declare.
pub const MAX_BASE_RELATIONS: usize = 64;

const ALLEN_DOC: &str = include_str!("algebras/allen.qa");
const RCC8_DOC: &str = include_str!("algebras/rcc8.qa");

/// Index of a base relation in its algebra's declaration order.
pub type BaseRelation = usize;

/// A set of base relations, encoded as a bit mask over declaration order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Relation(u64);

impl Relation {
    pub const EMPTY: Relation = Relation(0);

    pub fn from_bits(bits: u64) -> Self {
        Relation(bits)
    }

    pub fn singleton(base: BaseRelation) -> Self {
        debug_assert!(base < MAX_BASE_RELATIONS);
        Relation(1u64 << base)
    }

    pub fn from_bases<I: IntoIterator<Item = BaseRelation>>(bases: I) -> Self {
        bases
            .into_iter()
            .fold(Relation::EMPTY, |acc, b| acc | Relation::singleton(b))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_singleton(self) -> bool {
        self.0.is_power_of_two()
    }

    /// The single member of a singleton relation.
    pub fn as_base(self) -> Option<BaseRelation> {
        self.is_singleton()
            .then(|| self.0.trailing_zeros() as usize)
    }

    pub fn contains(self, base: BaseRelation) -> bool {
        base < MAX_BASE_RELATIONS && self.0 & (1u64 << base) != 0
    }

    pub fn is_subset(self, other: Relation) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: Relation) -> Relation {
        Relation(self.0 | other.0)
    }

    pub fn intersection(self, other: Relation) -> Relation {
        Relation(self.0 & other.0)
    }

    /// Members in increasing index order.
    pub fn iter(self) -> impl Iterator<Item = BaseRelation> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(b)
            }
        })
    }
}

impl std::ops::BitOr for Relation {
    type Output = Relation;
    fn bitor(self, rhs: Relation) -> Relation {
        self.union(rhs)
    }
}

impl std::ops::BitAnd for Relation {
    type Output = Relation;
    fn bitand(self, rhs: Relation) -> Relation {
        self.intersection(rhs)
    }
}

impl fmt::Debug for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown base relation `{name}`")]
    UnknownRelation { line: usize, name: String },
    #[error("duplicate base relation name `{0}`")]
    DuplicateRelationName(String),
    #[error("no `relations` declaration")]
    MissingRelations,
    #[error("an algebra needs between 2 and {MAX_BASE_RELATIONS} base relations, got {0}")]
    BadRelationCount(usize),
    #[error("no `identity` declaration")]
    MissingIdentity,
    #[error("inverse map is not an involution at `{0}`")]
    NonInvolutiveInverse(String),
    #[error("identity `{0}` is not its own inverse")]
    IdentityNotSelfInverse(String),
    #[error("missing inverse for `{0}`")]
    MissingInverse(String),
    #[error("composition table has no entry for ({0}, {1})")]
    IncompleteCompositionTable(String, String),
    #[error("line {line}: duplicate table entry for ({first}, {second})")]
    DuplicateTableEntry {
        line: usize,
        first: String,
        second: String,
    },
    #[error("neighbourhood graph is disconnected: `{0}` unreachable from `{1}`")]
    DisconnectedNeighborGraph(String, String),
    #[error("unknown built-in algebra `{0}`")]
    UnknownBuiltin(String),
}

/// A validated qualitative algebra. Immutable after loading.
#[derive(Clone)]
pub struct AlgebraSpec {
    name: String,
    names: Vec<String>,
    identity: BaseRelation,
    inverse: Vec<BaseRelation>,
    // row-major |B| x |B|, indexed [first * n + second]
    table: Vec<Relation>,
    neighbors: Vec<Vec<BaseRelation>>,
    dist: Vec<u32>,
    source: String,
    /// Whether arc and path consistency of a scenario decides its
    /// consistency in this algebra. True for Allen and RCC8.
    pub assume_closure_decides: bool,
}

impl fmt::Debug for AlgebraSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlgebraSpec")
            .field("name", &self.name)
            .field("relations", &self.names)
            .finish_non_exhaustive()
    }
}

impl AlgebraSpec {
    /// The built-in Allen interval algebra.
    pub fn allen() -> AlgebraSpec {
        AlgebraSpec::parse(ALLEN_DOC).expect("embedded Allen document is valid")
    }

    /// The built-in RCC8 algebra.
    pub fn rcc8() -> AlgebraSpec {
        AlgebraSpec::parse(RCC8_DOC).expect("embedded RCC8 document is valid")
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["allen", "rcc8"]
    }

    pub fn builtin(name: &str) -> Result<AlgebraSpec, AlgebraError> {
        match name.to_ascii_lowercase().as_str() {
            "allen" => Ok(Self::allen()),
            "rcc8" => Ok(Self::rcc8()),
            _ => Err(AlgebraError::UnknownBuiltin(name.to_string())),
        }
    }

    /// The embedded document text of a built-in algebra.
    pub fn builtin_document(name: &str) -> Option<&'static str> {
        match name.to_ascii_lowercase().as_str() {
            "allen" => Some(ALLEN_DOC),
            "rcc8" => Some(RCC8_DOC),
            _ => None,
        }
    }

    /// Parses and validates an algebra-spec document.
    pub fn parse(text: &str) -> Result<AlgebraSpec, AlgebraError> {
        let mut name = String::from("unnamed");
        let mut index: Option<IndexMap<String, ()>> = None;
        let mut identity: Option<BaseRelation> = None;
        let mut inverse: Vec<Option<BaseRelation>> = Vec::new();
        let mut table: Vec<Option<Relation>> = Vec::new();
        let mut edges: Vec<(BaseRelation, BaseRelation)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            let Some((&keyword, args)) = tokens.split_first() else {
                continue;
            };
            let syntax = |message: &str| AlgebraError::Syntax {
                line,
                message: message.to_string(),
            };

            if keyword == "algebra" {
                match args {
                    [n] => name = n.to_string(),
                    _ => return Err(syntax("expected `algebra <name>`")),
                }
                continue;
            }
            if keyword == "relations" {
                if index.is_some() {
                    return Err(syntax("`relations` declared twice"));
                }
                let mut map = IndexMap::new();
                for tok in args {
                    if tok == &"*" || tok == &":" {
                        return Err(syntax("reserved token used as a relation name"));
                    }
                    if map.insert(tok.to_string(), ()).is_some() {
                        return Err(AlgebraError::DuplicateRelationName(tok.to_string()));
                    }
                }
                if map.len() < 2 || map.len() > MAX_BASE_RELATIONS {
                    return Err(AlgebraError::BadRelationCount(map.len()));
                }
                inverse = vec![None; map.len()];
                table = vec![None; map.len() * map.len()];
                index = Some(map);
                continue;
            }

            let map = index.as_ref().ok_or(AlgebraError::MissingRelations)?;
            let n = map.len();
            let lookup = |tok: &str| {
                map.get_index_of(tok)
                    .ok_or_else(|| AlgebraError::UnknownRelation {
                        line,
                        name: tok.to_string(),
                    })
            };

            match keyword {
                "identity" => match args {
                    [tok] => identity = Some(lookup(tok)?),
                    _ => return Err(syntax("expected `identity <relation>`")),
                },
                "inverse" => match args {
                    [a, b] => {
                        let (a, b) = (lookup(a)?, lookup(b)?);
                        for (from, to) in [(a, b), (b, a)] {
                            match inverse[from] {
                                Some(prev) if prev != to => {
                                    return Err(AlgebraError::NonInvolutiveInverse(
                                        map.get_index(from).unwrap().0.clone(),
                                    ))
                                }
                                _ => inverse[from] = Some(to),
                            }
                        }
                    }
                    _ => return Err(syntax("expected `inverse <relation> <relation>`")),
                },
                "table" => {
                    let [first, second, colon, rest @ ..] = args else {
                        return Err(syntax("expected `table <first> <second> : <result>...`"));
                    };
                    if *colon != ":" {
                        return Err(syntax("expected `:` after the two operands"));
                    }
                    let (first, second) = (lookup(first)?, lookup(second)?);
                    let result = if rest == ["*"] {
                        Relation::from_bits(full_bits(n))
                    } else {
                        let mut r = Relation::EMPTY;
                        for tok in rest {
                            r = r | Relation::singleton(lookup(tok)?);
                        }
                        r
                    };
                    let slot = &mut table[first * n + second];
                    if slot.is_some() {
                        return Err(AlgebraError::DuplicateTableEntry {
                            line,
                            first: map.get_index(first).unwrap().0.clone(),
                            second: map.get_index(second).unwrap().0.clone(),
                        });
                    }
                    *slot = Some(result);
                }
                "neighbor" | "neighbour" => match args {
                    [a, b] => edges.push((lookup(a)?, lookup(b)?)),
                    _ => return Err(syntax("expected `neighbor <relation> <relation>`")),
                },
                other => return Err(syntax(&format!("unknown directive `{other}`"))),
            }
        }

        let map = index.ok_or(AlgebraError::MissingRelations)?;
        let names: Vec<String> = map.into_keys().collect();
        let n = names.len();
        let identity = identity.ok_or(AlgebraError::MissingIdentity)?;

        let inverse: Vec<BaseRelation> = inverse
            .into_iter()
            .enumerate()
            .map(|(i, inv)| inv.ok_or_else(|| AlgebraError::MissingInverse(names[i].clone())))
            .collect::<Result<_, _>>()?;
        for (i, &inv) in inverse.iter().enumerate() {
            if inverse[inv] != i {
                return Err(AlgebraError::NonInvolutiveInverse(names[i].clone()));
            }
        }
        if inverse[identity] != identity {
            return Err(AlgebraError::IdentityNotSelfInverse(
                names[identity].clone(),
            ));
        }

        let table: Vec<Relation> = table
            .into_iter()
            .enumerate()
            .map(|(k, entry)| {
                entry.ok_or_else(|| {
                    AlgebraError::IncompleteCompositionTable(
                        names[k / n].clone(),
                        names[k % n].clone(),
                    )
                })
            })
            .collect::<Result<_, _>>()?;

        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b && !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        let dist = all_pairs_bfs(&neighbors);
        for b in 1..n {
            if dist[b] == u32::MAX {
                return Err(AlgebraError::DisconnectedNeighborGraph(
                    names[b].clone(),
                    names[0].clone(),
                ));
            }
        }

        Ok(AlgebraSpec {
            name,
            names,
            identity,
            inverse,
            table,
            neighbors,
            dist,
            source: text.to_string(),
            assume_closure_decides: true,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The document this algebra was loaded from.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn base_count(&self) -> usize {
        self.names.len()
    }

    pub fn base_name(&self, b: BaseRelation) -> &str {
        &self.names[b]
    }

    pub fn base_names(&self) -> &[String] {
        &self.names
    }

    pub fn base_index(&self, name: &str) -> Option<BaseRelation> {
        self.names.iter().position(|n| n == name)
    }

    pub fn identity(&self) -> BaseRelation {
        self.identity
    }

    pub fn identity_relation(&self) -> Relation {
        Relation::singleton(self.identity)
    }

    /// The universal relation (every base relation).
    pub fn full(&self) -> Relation {
        Relation::from_bits(full_bits(self.names.len()))
    }

    pub fn base_inverse(&self, b: BaseRelation) -> BaseRelation {
        self.inverse[b]
    }

    pub fn inverse(&self, r: Relation) -> Relation {
        Relation::from_bases(r.iter().map(|b| self.inverse[b]))
    }

    pub fn complement(&self, r: Relation) -> Relation {
        Relation::from_bits(!r.bits() & self.full().bits())
    }

    pub fn compose_base(&self, first: BaseRelation, second: BaseRelation) -> Relation {
        self.table[first * self.names.len() + second]
    }

    /// If `x first y` and `y second z`, the relation entailed between `x` and `z`.
    pub fn compose(&self, first: Relation, second: Relation) -> Relation {
        let n = self.names.len();
        let mut out = Relation::EMPTY;
        let full = self.full();
        for b1 in first.iter() {
            let row = &self.table[b1 * n..(b1 + 1) * n];
            for b2 in second.iter() {
                out = out | row[b2];
            }
            if out == full {
                break;
            }
        }
        out
    }

    pub fn neighbors(&self, b: BaseRelation) -> &[BaseRelation] {
        &self.neighbors[b]
    }

    /// Shortest-path length between two base relations in the neighbourhood graph.
    pub fn rel_distance(&self, r1: BaseRelation, r2: BaseRelation) -> u32 {
        self.dist[r1 * self.names.len() + r2]
    }

    /// `min { dist(r, s) : r in a, s in b }`, or `None` if either is empty.
    pub fn min_distance(&self, a: Relation, b: Relation) -> Option<u32> {
        if !(a & b).is_empty() {
            return Some(0);
        }
        a.iter()
            .flat_map(|r| b.iter().map(move |s| (r, s)))
            .map(|(r, s)| self.rel_distance(r, s))
            .min()
    }

    /// Parses a whitespace-separated list of base relation names.
    pub fn relation_from_names<'a, I>(&self, names: I) -> Option<Relation>
    where
        I: IntoIterator<Item = &'a str>,
    {
        names
            .into_iter()
            .map(|n| self.base_index(n).map(Relation::singleton))
            .try_fold(Relation::EMPTY, |acc, r| r.map(|r| acc | r))
    }

    /// Base relation names of `r`, space-separated, in declaration order.
    pub fn relation_names(&self, r: Relation) -> String {
        r.iter()
            .map(|b| self.names[b].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl PartialEq for AlgebraSpec {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.identity == other.identity
            && self.inverse == other.inverse
            && self.table == other.table
            && self.dist == other.dist
    }
}

impl Eq for AlgebraSpec {}

fn full_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

fn all_pairs_bfs(neighbors: &[Vec<BaseRelation>]) -> Vec<u32> {
    let n = neighbors.len();
    let mut dist = vec![u32::MAX; n * n];
    for src in 0..n {
        let row = &mut dist[src * n..(src + 1) * n];
        row[src] = 0;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for &v in &neighbors[u] {
                if row[v] == u32::MAX {
                    row[v] = row[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}
