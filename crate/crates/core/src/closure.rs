//! The propositional closure of a qualitative algebra: formulas built from
//! constraints with `&`, `|` and `!`, their textual syntax, negation-free
//! disjunctive normal forms, and the brute-force model semantics over
//! consistent scenarios.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::algebra::{AlgebraSpec, Relation};
use crate::qcn::{self, Constraint, QAFormula, QcnError, Scenario, VariableUniverse};

/// Default bound on the universe size accepted by the model oracle.
pub const DEFAULT_ORACLE_BOUND: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClosureFormula {
    Atom(Constraint),
    And(Vec<ClosureFormula>),
    Or(Vec<ClosureFormula>),
    Not(Box<ClosureFormula>),
}

impl ClosureFormula {
    pub fn atom(x: impl Into<String>, rel: Relation, y: impl Into<String>) -> Self {
        ClosureFormula::Atom(Constraint::new(x, rel, y))
    }

    /// Conjunction with nested conjunctions flattened. A single operand is
    /// returned unchanged.
    pub fn and(children: impl IntoIterator<Item = ClosureFormula>) -> Self {
        let mut flat = Vec::new();
        for c in children {
            match c {
                ClosureFormula::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "empty conjunction");
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            ClosureFormula::And(flat)
        }
    }

    /// Disjunction with nested disjunctions flattened.
    pub fn or(children: impl IntoIterator<Item = ClosureFormula>) -> Self {
        let mut flat = Vec::new();
        for c in children {
            match c {
                ClosureFormula::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        assert!(!flat.is_empty(), "empty disjunction");
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            ClosureFormula::Or(flat)
        }
    }

    pub fn negate(self) -> Self {
        ClosureFormula::Not(Box::new(self))
    }

    pub fn has_negation(&self) -> bool {
        match self {
            ClosureFormula::Atom(_) => false,
            ClosureFormula::Not(_) => true,
            ClosureFormula::And(cs) | ClosureFormula::Or(cs) => cs.iter().any(Self::has_negation),
        }
    }

    /// Visits every atom.
    pub fn atoms(&self) -> Vec<&Constraint> {
        let mut out = Vec::new();
        fn walk<'a>(f: &'a ClosureFormula, out: &mut Vec<&'a Constraint>) {
            match f {
                ClosureFormula::Atom(c) => out.push(c),
                ClosureFormula::Not(inner) => walk(inner, out),
                ClosureFormula::And(cs) | ClosureFormula::Or(cs) => {
                    cs.iter().for_each(|c| walk(c, out))
                }
            }
        }
        walk(self, &mut out);
        out
    }

    /// Adds every variable mentioned by the formula to `universe`.
    pub fn collect_vars(&self, universe: &mut VariableUniverse) {
        for c in self.atoms() {
            universe.insert(&c.x);
            universe.insert(&c.y);
        }
    }

    /// The unsatisfiable formula `x {} y` over the first two variables.
    pub fn unsat(universe: &VariableUniverse) -> ClosureFormula {
        assert!(universe.len() >= 2, "UNSAT needs two variables");
        ClosureFormula::atom(universe.name(0), Relation::EMPTY, universe.name(1))
    }

    pub fn display<'a>(&'a self, a: &'a AlgebraSpec) -> impl fmt::Display + 'a {
        ClosureDisplay {
            formula: self,
            algebra: a,
        }
    }
}

struct ClosureDisplay<'a> {
    formula: &'a ClosureFormula,
    algebra: &'a AlgebraSpec,
}

impl ClosureDisplay<'_> {
    // ctx: 0 = top / disjunct, 1 = conjunct, 2 = operand of `!`
    fn write(&self, f: &mut fmt::Formatter<'_>, node: &ClosureFormula, ctx: u8) -> fmt::Result {
        match node {
            ClosureFormula::Atom(c) => {
                write!(
                    f,
                    "{} {{{}}} {}",
                    c.x,
                    self.algebra.relation_names(c.rel),
                    c.y
                )
            }
            ClosureFormula::Not(inner) => {
                f.write_str("!")?;
                self.write(f, inner, 2)
            }
            ClosureFormula::And(cs) => self.write_list(f, cs, " & ", 1, ctx > 1),
            ClosureFormula::Or(cs) => self.write_list(f, cs, " | ", 0, ctx > 0),
        }
    }

    fn write_list(
        &self,
        f: &mut fmt::Formatter<'_>,
        cs: &[ClosureFormula],
        sep: &str,
        child_ctx: u8,
        parens: bool,
    ) -> fmt::Result {
        if parens {
            f.write_str("(")?;
        }
        for (k, c) in cs.iter().enumerate() {
            if k > 0 {
                f.write_str(sep)?;
            }
            self.write(f, c, child_ctx)?;
        }
        if parens {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for ClosureDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.formula, 0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("{0}")]
    Syntax(String),
    #[error("unknown relation `{0}`")]
    UnknownRelationToken(String),
    #[error("constraint relates `{0}` to itself")]
    SelfConstraint(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClosureError {
    #[error(transparent)]
    Qcn(#[from] QcnError),
    #[error("universe has {size} variables, the model oracle is bounded to {bound}")]
    UniverseTooLarge { size: usize, bound: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok<'s> {
    Ident(&'s str),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Bang,
    Amp,
    Pipe,
    End,
}

struct Parser<'s, 'a> {
    src: &'s str,
    pos: usize,
    end: usize,
    algebra: &'a AlgebraSpec,
    universe: VariableUniverse,
}

fn is_var_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_var_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl<'s, 'a> Parser<'s, 'a> {
    fn error(&self, offset: usize, kind: ParseErrorKind) -> ParseError {
        let (line, col) = line_col(self.src, offset);
        ParseError { line, col, kind }
    }

    fn syntax(&self, offset: usize, msg: impl Into<String>) -> ParseError {
        self.error(offset, ParseErrorKind::Syntax(msg.into()))
    }

    fn skip_trivia(&mut self) {
        let rest = &self.src[self.pos..self.end];
        let mut chars = rest.char_indices().peekable();
        let mut skipped = rest.len();
        let mut in_comment = false;
        while let Some(&(i, c)) = chars.peek() {
            if in_comment {
                if c == '\n' {
                    in_comment = false;
                }
            } else if c == '#' {
                in_comment = true;
            } else if !c.is_whitespace() {
                skipped = i;
                break;
            }
            chars.next();
        }
        self.pos += skipped;
    }

    // Returns the next token and its start offset without consuming it.
    fn peek(&mut self) -> Result<(Tok<'s>, usize), ParseError> {
        self.skip_trivia();
        let start = self.pos;
        let rest = &self.src[start..self.end];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '!' => Tok::Bang,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            c if is_var_start(c) => {
                let len = rest.find(|c: char| !is_var_char(c)).unwrap_or(rest.len());
                Tok::Ident(&rest[..len])
            }
            other => return Err(self.syntax(start, format!("unexpected character `{other}`"))),
        };
        Ok((tok, start))
    }

    fn bump(&mut self, tok: &Tok<'_>) {
        self.pos += match tok {
            Tok::Ident(s) => s.len(),
            Tok::End => 0,
            _ => 1,
        };
    }

    fn expect(&mut self, want: Tok<'static>, what: &str) -> Result<(), ParseError> {
        let (tok, at) = self.peek()?;
        if tok != want {
            return Err(self.syntax(at, format!("expected {what}")));
        }
        self.bump(&tok);
        Ok(())
    }

    fn formula(&mut self) -> Result<ClosureFormula, ParseError> {
        let mut parts = vec![self.conj()?];
        while let (Tok::Pipe, _) = self.peek()? {
            self.bump(&Tok::Pipe);
            parts.push(self.conj()?);
        }
        Ok(ClosureFormula::or(parts))
    }

    fn conj(&mut self) -> Result<ClosureFormula, ParseError> {
        let mut parts = vec![self.unary()?];
        while let (Tok::Amp, _) = self.peek()? {
            self.bump(&Tok::Amp);
            parts.push(self.unary()?);
        }
        Ok(ClosureFormula::and(parts))
    }

    fn unary(&mut self) -> Result<ClosureFormula, ParseError> {
        let (tok, at) = self.peek()?;
        match tok {
            Tok::Bang => {
                self.bump(&tok);
                Ok(self.unary()?.negate())
            }
            Tok::LParen => {
                self.bump(&tok);
                let inner = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Tok::Ident(x) => {
                self.bump(&tok);
                let rel = self.relation()?;
                let (tok, y_at) = self.peek()?;
                let Tok::Ident(y) = tok else {
                    return Err(self.syntax(y_at, "expected a variable after the relation"));
                };
                self.bump(&tok);
                if x == y {
                    return Err(self.error(at, ParseErrorKind::SelfConstraint(x.to_string())));
                }
                self.universe.insert(x);
                self.universe.insert(y);
                Ok(ClosureFormula::atom(x, rel, y))
            }
            Tok::End => Err(self.syntax(at, "unexpected end of formula")),
            _ => Err(self.syntax(at, "expected a constraint, `!` or `(`")),
        }
    }

    // `{ tok* }`; tokens are whitespace separated, `*` is the universal relation.
    fn relation(&mut self) -> Result<Relation, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let close = match self.src[self.pos..self.end].find('}') {
            Some(k) => self.pos + k,
            None => return Err(self.syntax(self.pos, "unterminated relation, expected `}`")),
        };
        let body = &self.src[self.pos..close];
        let mut rel = Relation::EMPTY;
        for (k, tok) in body
            .split_whitespace()
            .map(|t| (t.as_ptr() as usize - self.src.as_ptr() as usize, t))
        {
            if tok == "*" {
                rel = rel | self.algebra.full();
                continue;
            }
            match self.algebra.base_index(tok) {
                Some(b) => rel = rel | Relation::singleton(b),
                None => {
                    return Err(self.error(k, ParseErrorKind::UnknownRelationToken(tok.to_string())))
                }
            }
        }
        self.pos = close + 1;
        Ok(rel)
    }
}

/// Parses one formula. Returns the formula and the variables it mentions,
/// in order of first occurrence.
pub fn parse(
    text: &str,
    a: &AlgebraSpec,
) -> Result<(ClosureFormula, VariableUniverse), ParseError> {
    parse_span(text, 0, text.len(), a, VariableUniverse::default())
}

fn parse_span(
    src: &str,
    start: usize,
    end: usize,
    a: &AlgebraSpec,
    universe: VariableUniverse,
) -> Result<(ClosureFormula, VariableUniverse), ParseError> {
    let mut p = Parser {
        src,
        pos: start,
        end,
        algebra: a,
        universe,
    };
    let f = p.formula()?;
    let (tok, at) = p.peek()?;
    if tok != Tok::End {
        return Err(p.syntax(at, "unexpected input after formula"));
    }
    Ok((f, p.universe))
}

/// An input document: an optional `vars` header, then either a bare formula
/// or `psi:` and `mu:` sections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemDocument {
    /// Declared variables followed by every mentioned variable.
    pub universe: VariableUniverse,
    pub psi: Option<ClosureFormula>,
    pub mu: Option<ClosureFormula>,
    pub body: Option<ClosureFormula>,
}

pub fn parse_document(text: &str, a: &AlgebraSpec) -> Result<ProblemDocument, ParseError> {
    let mut universe = VariableUniverse::default();
    // (name, content start offset) for each section header
    let mut sections: Vec<(&str, usize)> = Vec::new();
    let mut body_start = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let code = line.split('#').next().unwrap_or("");
        let trimmed = code.trim_start();
        let lead = code.len() - trimmed.len();
        let mut words = trimmed.split_whitespace();
        if words.clone().next() == Some("vars") && !code.contains('{') {
            if !sections.is_empty() || body_start.is_some() {
                let (line_no, _) = line_col(text, offset);
                return Err(ParseError {
                    line: line_no,
                    col: lead + 1,
                    kind: ParseErrorKind::Syntax("`vars` must precede the formulas".into()),
                });
            }
            words.next();
            for v in words {
                if !v.starts_with(is_var_start) || !v.chars().all(is_var_char) {
                    let col_off = v.as_ptr() as usize - text.as_ptr() as usize;
                    let (l, c) = line_col(text, col_off);
                    return Err(ParseError {
                        line: l,
                        col: c,
                        kind: ParseErrorKind::Syntax(format!("invalid variable name `{v}`")),
                    });
                }
                universe.insert(v);
            }
        } else if let Some(name) = ["psi:", "mu:"].iter().find(|h| trimmed.starts_with(**h)) {
            sections.push((&name[..name.len() - 1], offset + lead + name.len()));
        } else if !trimmed.trim().is_empty() && sections.is_empty() && body_start.is_none() {
            body_start = Some(offset);
        }
        offset += line.len();
    }

    let mut doc = ProblemDocument {
        universe: VariableUniverse::default(),
        psi: None,
        mu: None,
        body: None,
    };
    if sections.is_empty() {
        let start = body_start.unwrap_or(text.len());
        let (f, u) = parse_span(text, start, text.len(), a, universe)?;
        doc.body = Some(f);
        doc.universe = u;
        return Ok(doc);
    }
    if let Some(start) = body_start {
        let (l, c) = line_col(text, start);
        return Err(ParseError {
            line: l,
            col: c,
            kind: ParseErrorKind::Syntax("text before the first section".into()),
        });
    }
    // section content runs to the start of the next header line
    let header_line_starts: Vec<usize> = sections
        .iter()
        .map(|&(name, content)| content - name.len() - 1)
        .map(|hdr| text[..hdr].rfind('\n').map_or(0, |nl| nl + 1))
        .collect();
    for (k, &(name, content)) in sections.iter().enumerate() {
        let end = header_line_starts.get(k + 1).copied().unwrap_or(text.len());
        let (f, u) = parse_span(text, content, end, a, universe)?;
        universe = u;
        let slot = if name == "psi" {
            &mut doc.psi
        } else {
            &mut doc.mu
        };
        if slot.is_some() {
            let (l, c) = line_col(text, content);
            return Err(ParseError {
                line: l,
                col: c,
                kind: ParseErrorKind::Syntax(format!("section `{name}` given twice")),
            });
        }
        *slot = Some(f);
    }
    doc.universe = universe;
    Ok(doc)
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |nl| {
        before[nl + 1..].chars().count()
    }) + 1;
    (line, col)
}

/// A negation-free disjunctive normal form: each disjunct is a normal-form
/// conjunction. UNSAT is a single disjunct holding an empty relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DNF {
    pub universe: Arc<VariableUniverse>,
    pub disjuncts: Vec<QAFormula>,
}

impl DNF {
    fn from_disjuncts(
        universe: Arc<VariableUniverse>,
        disjuncts: Vec<QAFormula>,
        a: &AlgebraSpec,
    ) -> DNF {
        if disjuncts.is_empty() {
            let mut unsat = QAFormula::top(universe.clone(), a);
            if universe.len() >= 2 {
                unsat.set(0, 1, Relation::EMPTY, a);
            }
            return DNF {
                universe,
                disjuncts: vec![unsat],
            };
        }
        DNF {
            universe,
            disjuncts,
        }
    }

    pub fn is_unsat(&self) -> bool {
        self.disjuncts.iter().all(QAFormula::has_empty)
    }

    pub fn to_formula(&self, a: &AlgebraSpec) -> ClosureFormula {
        ClosureFormula::or(self.disjuncts.iter().map(|d| qa_to_formula(d, a)))
    }
}

/// A normal-form conjunction as a closure formula (constraints on pairs
/// `i < j` that are not universal).
pub fn qa_to_formula(phi: &QAFormula, a: &AlgebraSpec) -> ClosureFormula {
    let universe = phi.universe();
    if let Some((i, j)) = phi.pairs().find(|&(i, j)| phi.rel(i, j).is_empty()) {
        return ClosureFormula::atom(universe.name(i), Relation::EMPTY, universe.name(j));
    }
    let atoms: Vec<ClosureFormula> = phi
        .constraints(a)
        .into_iter()
        .map(ClosureFormula::Atom)
        .collect();
    if atoms.is_empty() {
        assert!(universe.len() >= 2, "tautology needs two variables");
        return ClosureFormula::atom(universe.name(0), a.full(), universe.name(1));
    }
    ClosureFormula::and(atoms)
}

fn dedup(list: Vec<QAFormula>) -> Vec<QAFormula> {
    let mut seen = HashSet::with_capacity(list.len());
    list.into_iter()
        .filter(|d| seen.insert(d.clone()))
        .collect()
}

// DNF of `phi` (or of its negation when `positive` is false), dropping
// disjuncts with an empty relation.
fn dnf_rec(
    phi: &ClosureFormula,
    positive: bool,
    universe: &Arc<VariableUniverse>,
    a: &AlgebraSpec,
) -> Result<Vec<QAFormula>, QcnError> {
    match (phi, positive) {
        (ClosureFormula::Atom(c), _) => {
            let rel = if positive { c.rel } else { a.complement(c.rel) };
            let d = qcn::normalize(
                &[Constraint::new(c.x.clone(), rel, c.y.clone())],
                universe.clone(),
                a,
            )?;
            Ok(if d.has_empty() { Vec::new() } else { vec![d] })
        }
        (ClosureFormula::Not(inner), _) => dnf_rec(inner, !positive, universe, a),
        (ClosureFormula::And(cs), true) | (ClosureFormula::Or(cs), false) => {
            let mut acc = vec![QAFormula::top(universe.clone(), a)];
            for c in cs {
                let child = dnf_rec(c, positive, universe, a)?;
                let mut next = Vec::with_capacity(acc.len() * child.len());
                for l in &acc {
                    for r in &child {
                        let m = l.conjoin(r)?;
                        if !m.has_empty() {
                            next.push(m);
                        }
                    }
                }
                acc = dedup(next);
                if acc.is_empty() {
                    break;
                }
            }
            Ok(acc)
        }
        (ClosureFormula::Or(cs), true) | (ClosureFormula::And(cs), false) => {
            let mut acc = Vec::new();
            for c in cs {
                acc.extend(dnf_rec(c, positive, universe, a)?);
            }
            Ok(dedup(acc))
        }
    }
}

/// Negation-free DNF: negations pushed to the atoms and replaced by the
/// complement relation, conjunctions distributed over disjunctions, each
/// conjunct normalized.
pub fn to_dnf_won(
    phi: &ClosureFormula,
    universe: Arc<VariableUniverse>,
    a: &AlgebraSpec,
) -> Result<DNF, QcnError> {
    let disjuncts = dnf_rec(phi, true, &universe, a)?;
    Ok(DNF::from_disjuncts(universe, disjuncts, a))
}

/// Negation-free DNF whose constraints are all base relations.
pub fn to_dnf_base(
    phi: &ClosureFormula,
    universe: Arc<VariableUniverse>,
    a: &AlgebraSpec,
) -> Result<DNF, QcnError> {
    let won = to_dnf_won(phi, universe.clone(), a)?;
    if won.is_unsat() {
        return Ok(won);
    }
    let full = a.full();
    let mut out = Vec::new();
    for d in &won.disjuncts {
        let split: Vec<(usize, usize)> = d
            .pairs()
            .filter(|&(i, j)| d.rel(i, j) != full && !d.rel(i, j).is_singleton())
            .collect();
        let mut acc = vec![d.clone()];
        for &(i, j) in &split {
            let mut next = Vec::new();
            for partial in &acc {
                for b in d.rel(i, j).iter() {
                    let mut s = partial.clone();
                    s.set(i, j, Relation::singleton(b), a);
                    next.push(s);
                }
            }
            acc = next;
        }
        out.extend(acc);
    }
    Ok(DNF::from_disjuncts(universe, dedup(out), a))
}

/// Whether scenario `sigma` satisfies `phi`.
pub fn satisfies(sigma: &Scenario, phi: &ClosureFormula) -> Result<bool, QcnError> {
    Ok(match phi {
        ClosureFormula::Atom(c) => {
            let u = sigma.universe();
            let i = u
                .index_of(&c.x)
                .ok_or_else(|| QcnError::UnknownVariable(c.x.clone()))?;
            let j = u
                .index_of(&c.y)
                .ok_or_else(|| QcnError::UnknownVariable(c.y.clone()))?;
            c.rel.contains(sigma.base(i, j))
        }
        ClosureFormula::Not(inner) => !satisfies(sigma, inner)?,
        ClosureFormula::And(cs) => {
            for c in cs {
                if !satisfies(sigma, c)? {
                    return Ok(false);
                }
            }
            true
        }
        ClosureFormula::Or(cs) => {
            for c in cs {
                if satisfies(sigma, c)? {
                    return Ok(true);
                }
            }
            false
        }
    })
}

/// Brute-force model semantics over a fixed universe: the set of all
/// consistent scenarios, computed once.
pub struct ModelOracle<'a> {
    algebra: &'a AlgebraSpec,
    universe: Arc<VariableUniverse>,
    omega: Vec<Scenario>,
}

impl<'a> ModelOracle<'a> {
    pub fn new(
        universe: Arc<VariableUniverse>,
        a: &'a AlgebraSpec,
        bound: usize,
    ) -> Result<Self, ClosureError> {
        if universe.len() > bound {
            return Err(ClosureError::UniverseTooLarge {
                size: universe.len(),
                bound,
            });
        }
        let omega = qcn::consistent_scenarios(&QAFormula::top(universe.clone(), a), a);
        Ok(ModelOracle {
            algebra: a,
            universe,
            omega,
        })
    }

    pub fn universe(&self) -> &Arc<VariableUniverse> {
        &self.universe
    }

    pub fn algebra(&self) -> &AlgebraSpec {
        self.algebra
    }

    /// All consistent scenarios.
    pub fn omega(&self) -> &[Scenario] {
        &self.omega
    }

    pub fn models(&self, phi: &ClosureFormula) -> Result<BTreeSet<Scenario>, QcnError> {
        let mut out = BTreeSet::new();
        for sigma in &self.omega {
            if satisfies(sigma, phi)? {
                out.insert(sigma.clone());
            }
        }
        Ok(out)
    }

    pub fn models_of_qa(&self, phi: &QAFormula) -> BTreeSet<Scenario> {
        self.omega
            .iter()
            .filter(|s| s.pairs().all(|(i, j)| phi.rel(i, j).contains(s.base(i, j))))
            .cloned()
            .collect()
    }

    pub fn equivalent(&self, f1: &ClosureFormula, f2: &ClosureFormula) -> Result<bool, QcnError> {
        Ok(self.models(f1)? == self.models(f2)?)
    }
}

pub fn models(
    phi: &ClosureFormula,
    universe: Arc<VariableUniverse>,
    a: &AlgebraSpec,
    bound: usize,
) -> Result<BTreeSet<Scenario>, ClosureError> {
    Ok(ModelOracle::new(universe, a, bound)?.models(phi)?)
}

pub fn equivalent(
    f1: &ClosureFormula,
    f2: &ClosureFormula,
    universe: Arc<VariableUniverse>,
    a: &AlgebraSpec,
    bound: usize,
) -> Result<bool, ClosureError> {
    Ok(ModelOracle::new(universe, a, bound)?.equivalent(f1, f2)?)
}

/// A scenario as a conjunction of base-relation constraints on pairs `i < j`.
pub fn scenario_to_formula(sigma: &Scenario) -> ClosureFormula {
    let u = sigma.universe();
    ClosureFormula::and(
        sigma
            .pairs()
            .map(|(i, j)| ClosureFormula::atom(u.name(i), sigma.rel(i, j), u.name(j))),
    )
}

/// The disjunction of a set of scenarios; its models are exactly that set.
/// The empty set gives the UNSAT formula.
pub fn scenarios_to_formula<'s, I>(
    universe: &Arc<VariableUniverse>,
    scenarios: I,
) -> Result<ClosureFormula, QcnError>
where
    I: IntoIterator<Item = &'s Scenario>,
{
    let mut parts = Vec::new();
    for s in scenarios {
        if s.universe() != universe {
            return Err(QcnError::UniverseMismatch);
        }
        parts.push(scenario_to_formula(s));
    }
    if parts.is_empty() {
        return Ok(ClosureFormula::unsat(universe));
    }
    Ok(ClosureFormula::or(parts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn allen() -> AlgebraSpec {
        AlgebraSpec::allen()
    }

    fn p(text: &str, a: &AlgebraSpec) -> ClosureFormula {
        parse(text, a).unwrap().0
    }

    fn u(vars: &[&str]) -> Arc<VariableUniverse> {
        Arc::new(VariableUniverse::new(vars.iter().copied()))
    }

    #[test]
    fn parse_examples() {
        let a = allen();
        let (f, universe) = parse("x {d} z & z {di} x", &a).unwrap();
        assert!(matches!(&f, ClosureFormula::And(cs) if cs.len() == 2));
        assert_eq!(universe.iter().collect::<Vec<_>>(), ["x", "z"]);

        let f = p("!(c1 {eq} c2)", &a);
        assert!(
            matches!(&f, ClosureFormula::Not(inner) if matches!(**inner, ClosureFormula::Atom(_)))
        );

        let f = p("x {b m} y | x {o} y", &a);
        assert!(matches!(&f, ClosureFormula::Or(cs) if cs.len() == 2));
    }

    #[test]
    fn parse_flattens_and_keeps_precedence() {
        let a = allen();
        let f = p("(x {b} y & y {b} z) & (z {b} w | w {m} x) & !x {eq} w", &a);
        let ClosureFormula::And(cs) = &f else {
            panic!("{f:?}")
        };
        assert_eq!(cs.len(), 4);
        assert!(matches!(cs[2], ClosureFormula::Or(_)));
        assert!(matches!(cs[3], ClosureFormula::Not(_)));
    }

    #[test]
    fn parse_errors_report_positions() {
        let a = allen();
        let err = parse("x {b} y &\n  x {zz} z", &a).unwrap_err();
        assert_eq!((err.line, err.col), (2, 6));
        assert_eq!(err.kind, ParseErrorKind::UnknownRelationToken("zz".into()));

        let err = parse("x {b} x", &a).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::SelfConstraint("x".into()));

        let err = parse("x {b} y )", &a).unwrap_err();
        assert_eq!((err.line, err.col), (1, 9));
        assert!(matches!(
            parse("x {b y", &a).unwrap_err().kind,
            ParseErrorKind::Syntax(_)
        ));
        assert!(matches!(
            parse("", &a).unwrap_err().kind,
            ParseErrorKind::Syntax(_)
        ));
        assert!(matches!(
            parse("x {b} 9y", &a).unwrap_err().kind,
            ParseErrorKind::Syntax(_)
        ));
    }

    #[test]
    fn empty_braces_and_star() {
        let a = allen();
        assert_eq!(
            p("x {} y", &a),
            ClosureFormula::atom("x", Relation::EMPTY, "y")
        );
        assert_eq!(p("x {*} y", &a), ClosureFormula::atom("x", a.full(), "y"));
    }

    #[test]
    fn printing_round_trips() {
        let a = allen();
        for text in [
            "x {d} z & z {di} x",
            "!(c1 {eq} c2)",
            "x {b m} y | x {o} y",
            "!!x {b} y",
            "(x {b} y | y {m} z) & !(x {o} z & y {s} z) | x {} y",
            "!(x {b} y | !(y {eq} z))",
        ] {
            let f = p(text, &a);
            let printed = f.display(&a).to_string();
            assert_eq!(p(&printed, &a), f, "{text} -> {printed}");
        }
    }

    #[test]
    fn document_sections() {
        let a = allen();
        let doc = parse_document(
            "# motivations\nvars x y z\npsi: x {eq} y &\n  y {eq} z\nmu:\n x {d} z & z {di} x\n",
            &a,
        )
        .unwrap();
        assert_eq!(doc.universe.iter().collect::<Vec<_>>(), ["x", "y", "z"]);
        assert!(doc.psi.is_some() && doc.mu.is_some() && doc.body.is_none());

        let doc = parse_document("x {b} y", &a).unwrap();
        assert_eq!(doc.body, Some(p("x {b} y", &a)));

        let err = parse_document("psi: x {b} y\nmu: x {q} y\n", &a).unwrap_err();
        assert_eq!((err.line, err.col), (2, 8));
    }

    #[test]
    fn dnf_won_examples() {
        let a = allen();
        let universe = u(&["x", "y", "z"]);
        let dnf = to_dnf_won(&p("x {d} z", &a), universe.clone(), &a).unwrap();
        assert_eq!(dnf.disjuncts.len(), 1);

        let dnf = to_dnf_won(&p("!(x {*} y)", &a), universe.clone(), &a).unwrap();
        assert_eq!(dnf.disjuncts.len(), 1);
        assert!(dnf.is_unsat());

        let f = p("(x {eq} p1 | x {eq} p2) & !(x {eq} p1)", &a);
        let universe = u(&["x", "p1", "p2"]);
        let dnf = to_dnf_won(&f, universe.clone(), &a).unwrap();
        assert!(!dnf.to_formula(&a).has_negation());
        let oracle = ModelOracle::new(universe, &a, 3).unwrap();
        assert!(oracle.equivalent(&f, &dnf.to_formula(&a)).unwrap());
        let expected = p("x {eq} p2 & !(x {eq} p1)", &a);
        assert!(oracle.equivalent(&f, &expected).unwrap());
    }

    #[test]
    fn dnf_base_examples() {
        let a = allen();
        let universe = u(&["x", "y"]);
        let dnf = to_dnf_base(&p("x {m o} y", &a), universe.clone(), &a).unwrap();
        let printed: BTreeSet<String> = dnf
            .disjuncts
            .iter()
            .map(|d| d.display(&a).to_string())
            .collect();
        assert_eq!(
            printed,
            BTreeSet::from(["x {m} y".to_string(), "x {o} y".to_string()])
        );

        let dnf = to_dnf_base(&p("x {m} y & x {o} y", &a), universe.clone(), &a).unwrap();
        assert!(dnf.is_unsat());

        let s = p("x {b} y", &a);
        let dnf = to_dnf_base(&s, universe, &a).unwrap();
        assert_eq!(dnf.disjuncts.len(), 1);
        assert_eq!(qa_to_formula(&dnf.disjuncts[0], &a), s);
    }

    #[test]
    fn models_examples() {
        let a = allen();
        let universe = u(&["x", "y", "z"]);
        let oracle = ModelOracle::new(universe.clone(), &a, 4).unwrap();
        let psi = oracle.models(&p("x {eq} y & y {eq} z", &a)).unwrap();
        assert_eq!(psi.len(), 1);
        let only = psi.iter().next().unwrap();
        assert!(only.pairs().all(|(i, j)| only.base(i, j) == a.identity()));

        let taut = oracle.models(&p("x {*} y", &a)).unwrap();
        assert_eq!(taut.len(), oracle.omega().len());

        let big = u(&["a", "b", "c", "d", "e"]);
        assert!(matches!(
            ModelOracle::new(big, &a, 4),
            Err(ClosureError::UniverseTooLarge { size: 5, bound: 4 })
        ));
    }

    #[test]
    fn representability_small_cases() {
        let a = allen();
        let universe = u(&["x", "y", "z"]);
        let oracle = ModelOracle::new(universe.clone(), &a, 4).unwrap();
        let sigma = oracle.omega()[17].clone();
        let f = scenarios_to_formula(&universe, [&sigma]).unwrap();
        assert_eq!(oracle.models(&f).unwrap(), BTreeSet::from([sigma]));

        let f = scenarios_to_formula(&universe, []).unwrap();
        assert!(oracle.models(&f).unwrap().is_empty());

        let other = Arc::new(VariableUniverse::new(["x", "y"]));
        let s2 = ModelOracle::new(other, &a, 4).unwrap().omega()[0].clone();
        assert_eq!(
            scenarios_to_formula(&universe, [&s2]),
            Err(QcnError::UniverseMismatch)
        );
    }

    #[test]
    fn equivalence_examples() {
        let a = allen();
        let universe = u(&["x", "y"]);
        let oracle = ModelOracle::new(universe, &a, 4).unwrap();
        assert!(!oracle
            .equivalent(&p("x {b} y", &a), &p("x {m} y", &a))
            .unwrap());
        let f = p("x {b m o} y", &a);
        assert!(oracle.equivalent(&f.clone().negate().negate(), &f).unwrap());
    }

    #[test]
    fn negation_is_complement() {
        let a = allen();
        let universe = u(&["x", "y"]);
        let oracle = ModelOracle::new(universe, &a, 4).unwrap();
        for bits in 0..(1u64 << 13) {
            let r = Relation::from_bits(bits);
            let neg = ClosureFormula::atom("x", r, "y").negate();
            let comp = ClosureFormula::atom("x", a.complement(r), "y");
            assert_eq!(oracle.models(&neg).unwrap(), oracle.models(&comp).unwrap());
        }
    }
}
