//! Free distributive lattice terms over named generators.
//!
//! Terms are joins and meets over generator names. Every term has a unique
//! *antichain normal form*: a join of meets, written as a set of clauses
//! (each clause a set of generator names), with absorbed clauses pruned so
//! the clauses form an antichain under inclusion. Order is decided on
//! normal forms: `s ≤ t` iff every clause of `s` contains some clause of
//! `t`. Free distributive lattices embed into powers of the two-element
//! lattice, so the all-assignments evaluation used by the test suites is a
//! complete independent oracle for the same order.
//!
//! `expand_vi` performs the substitution `v_i ↦ (U ∨ S_i) ∧ V` and
//! renormalizes, which is how the generated sublattice over the
//! constructed classes is reasoned about symbolically.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A lattice term: a generator, or a join/meet of at least one subterm.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeTerm {
    Generator(String),
    Join(Vec<LatticeTerm>),
    Meet(Vec<LatticeTerm>),
}

impl LatticeTerm {
    pub fn gen(name: impl Into<String>) -> Self {
        LatticeTerm::Generator(name.into())
    }

    /// Join of a nonempty list. Panics on an empty list: the algebra has
    /// no bottom element.
    pub fn join(terms: Vec<LatticeTerm>) -> Self {
        assert!(!terms.is_empty(), "join of an empty list");
        LatticeTerm::Join(terms)
    }

    /// Meet of a nonempty list. Panics on an empty list: the algebra has
    /// no top element.
    pub fn meet(terms: Vec<LatticeTerm>) -> Self {
        assert!(!terms.is_empty(), "meet of an empty list");
        LatticeTerm::Meet(terms)
    }

    pub fn generators(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_generators(&mut out);
        out
    }

    fn collect_generators<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            LatticeTerm::Generator(g) => {
                out.insert(g.as_str());
            }
            LatticeTerm::Join(ts) | LatticeTerm::Meet(ts) => {
                for t in ts {
                    t.collect_generators(out);
                }
            }
        }
    }

    /// Truth value under a {0,1} assignment of the generators; unassigned
    /// generators count as false.
    pub fn eval(&self, assignment: &BTreeSet<String>) -> bool {
        match self {
            LatticeTerm::Generator(g) => assignment.contains(g),
            LatticeTerm::Join(ts) => ts.iter().any(|t| t.eval(assignment)),
            LatticeTerm::Meet(ts) => ts.iter().all(|t| t.eval(assignment)),
        }
    }
}

impl fmt::Display for LatticeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LatticeTerm::Generator(g) => write!(f, "{g}"),
            LatticeTerm::Join(ts) => {
                write!(f, "(join")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                write!(f, ")")
            }
            LatticeTerm::Meet(ts) => {
                write!(f, "(meet")?;
                for t in ts {
                    write!(f, " {t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Join-of-meets normal form whose clauses form an antichain under
/// inclusion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntichainNF {
    clauses: BTreeSet<BTreeSet<String>>,
}

impl AntichainNF {
    pub fn clauses(&self) -> &BTreeSet<BTreeSet<String>> {
        &self.clauses
    }

    /// `self ≤ other` in the free distributive lattice: every clause of
    /// `self` contains some clause of `other`.
    pub fn leq(&self, other: &AntichainNF) -> bool {
        self.clauses.iter().all(|c| other.clauses.iter().any(|d| d.is_subset(c)))
    }

    /// Renders the normal form back into a term (join of meets, sorted).
    pub fn to_term(&self) -> LatticeTerm {
        let meets: Vec<LatticeTerm> = self
            .clauses
            .iter()
            .map(|c| {
                let gens: Vec<LatticeTerm> =
                    c.iter().map(|g| LatticeTerm::gen(g.clone())).collect();
                if gens.len() == 1 {
                    gens.into_iter().next().unwrap()
                } else {
                    LatticeTerm::Meet(gens)
                }
            })
            .collect();
        if meets.len() == 1 {
            meets.into_iter().next().unwrap()
        } else {
            LatticeTerm::Join(meets)
        }
    }

    fn from_clauses<I: IntoIterator<Item = BTreeSet<String>>>(iter: I) -> Self {
        let raw: Vec<BTreeSet<String>> = iter.into_iter().collect();
        // absorption: drop any clause containing another
        let mut clauses = BTreeSet::new();
        'outer: for c in &raw {
            for d in &raw {
                if d != c && d.is_subset(c) {
                    continue 'outer;
                }
            }
            clauses.insert(c.clone());
        }
        AntichainNF { clauses }
    }
}

impl fmt::Display for AntichainNF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in &self.clauses {
            if !first {
                write!(f, " v ")?;
            }
            first = false;
            write!(f, "{{")?;
            let names: Vec<&str> = c.iter().map(String::as_str).collect();
            write!(f, "{}", names.join(" "))?;
            write!(f, "}}")?;
        }
        Ok(())
    }
}

/// Distributes meets over joins and prunes absorbed clauses.
pub fn normalize(term: &LatticeTerm) -> AntichainNF {
    match term {
        LatticeTerm::Generator(g) => {
            AntichainNF { clauses: BTreeSet::from([BTreeSet::from([g.clone()])]) }
        }
        LatticeTerm::Join(ts) => {
            assert!(!ts.is_empty(), "join of an empty list");
            AntichainNF::from_clauses(ts.iter().flat_map(|t| normalize(t).clauses))
        }
        LatticeTerm::Meet(ts) => {
            assert!(!ts.is_empty(), "meet of an empty list");
            let mut acc: Vec<BTreeSet<String>> = vec![BTreeSet::new()];
            for t in ts {
                let nf = normalize(t);
                let mut next = Vec::with_capacity(acc.len() * nf.clauses.len());
                for c in &acc {
                    for d in &nf.clauses {
                        let mut u = c.clone();
                        u.extend(d.iter().cloned());
                        next.push(u);
                    }
                }
                acc = next;
            }
            AntichainNF::from_clauses(acc)
        }
    }
}

/// Order decision on terms via normal forms.
pub fn leq(s: &LatticeTerm, t: &LatticeTerm) -> bool {
    normalize(s).leq(&normalize(t))
}

/// `⋁_{i∈I} g_i ≥ ⋀_{j∈J} g_j` holds among free generators exactly when
/// the index sets intersect.
pub fn generator_criterion(i_set: &BTreeSet<u32>, j_set: &BTreeSet<u32>) -> bool {
    assert!(!i_set.is_empty() && !j_set.is_empty());
    !i_set.is_disjoint(j_set)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FdlError {
    #[error("generator index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: u32, limit: u32 },
    #[error("expected a v-generator, found {0:?}")]
    NotAVGenerator(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Substitutes `v_i ↦ (U ∨ S_i) ∧ V` throughout a term over v-generators
/// `v0..v{k-1}` and returns the normalized result over `{U, V, S0..}`.
pub fn expand_vi(term: &LatticeTerm, k: u32) -> Result<LatticeTerm, FdlError> {
    let substituted = substitute_vi(term, k)?;
    Ok(normalize(&substituted).to_term())
}

fn substitute_vi(term: &LatticeTerm, k: u32) -> Result<LatticeTerm, FdlError> {
    match term {
        LatticeTerm::Generator(g) => {
            let index = parse_v_index(g)?;
            if index >= k {
                return Err(FdlError::IndexOutOfRange { index, limit: k });
            }
            Ok(LatticeTerm::meet(vec![
                LatticeTerm::join(vec![
                    LatticeTerm::gen("U"),
                    LatticeTerm::gen(format!("S{index}")),
                ]),
                LatticeTerm::gen("V"),
            ]))
        }
        LatticeTerm::Join(ts) => {
            Ok(LatticeTerm::join(ts.iter().map(|t| substitute_vi(t, k)).collect::<Result<_, _>>()?))
        }
        LatticeTerm::Meet(ts) => {
            Ok(LatticeTerm::meet(ts.iter().map(|t| substitute_vi(t, k)).collect::<Result<_, _>>()?))
        }
    }
}

fn parse_v_index(name: &str) -> Result<u32, FdlError> {
    name.strip_prefix('v')
        .and_then(|rest| rest.parse::<u32>().ok())
        .ok_or_else(|| FdlError::NotAVGenerator(name.to_string()))
}

/// Parses the s-expression term syntax, e.g. `(join v0 (meet v1 v2))`.
pub fn parse_term(input: &str) -> Result<LatticeTerm, FdlError> {
    let tokens = tokenize(input)?;
    let mut pos = 0;
    let term = parse_expr(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(FdlError::Parse(format!("trailing input after term: {:?}", &tokens[pos..])));
    }
    Ok(term)
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Open,
    Close,
    Symbol(String),
}

fn tokenize(input: &str) -> Result<Vec<Token>, FdlError> {
    let mut out = Vec::new();
    let mut chars = input.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '(' => {
                out.push(Token::Open);
                chars.next();
            }
            ')' => {
                out.push(Token::Close);
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            c if c.is_alphanumeric() || c == '_' => {
                let mut sym = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        sym.push(c);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Token::Symbol(sym));
            }
            other => return Err(FdlError::Parse(format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

fn parse_expr(tokens: &[Token], pos: &mut usize) -> Result<LatticeTerm, FdlError> {
    match tokens.get(*pos) {
        Some(Token::Symbol(s)) => {
            *pos += 1;
            Ok(LatticeTerm::gen(s.clone()))
        }
        Some(Token::Open) => {
            *pos += 1;
            let head = match tokens.get(*pos) {
                Some(Token::Symbol(s)) if s == "join" || s == "meet" => s.clone(),
                other => {
                    return Err(FdlError::Parse(format!(
                        "expected 'join' or 'meet' after '(', found {other:?}"
                    )))
                }
            };
            *pos += 1;
            let mut args = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some(Token::Close) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => args.push(parse_expr(tokens, pos)?),
                    None => return Err(FdlError::Parse("unbalanced parenthesis".into())),
                }
            }
            if args.is_empty() {
                return Err(FdlError::Parse(format!("({head}) needs at least one argument")));
            }
            Ok(if head == "join" { LatticeTerm::join(args) } else { LatticeTerm::meet(args) })
        }
        other => Err(FdlError::Parse(format!("expected a term, found {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(name: &str) -> LatticeTerm {
        LatticeTerm::gen(name)
    }

    fn clauses(nf: &AntichainNF) -> Vec<Vec<&str>> {
        nf.clauses().iter().map(|c| c.iter().map(String::as_str).collect()).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(clauses(&normalize(&g("x1"))), vec![vec!["x1"]]);

        // absorption
        let t = LatticeTerm::join(vec![g("x1"), LatticeTerm::meet(vec![g("x1"), g("x2")])]);
        assert_eq!(clauses(&normalize(&t)), vec![vec!["x1"]]);

        // (x1 v x2) ∧ (x1 v x3) = x1 v (x2 ∧ x3)
        let t = LatticeTerm::meet(vec![
            LatticeTerm::join(vec![g("x1"), g("x2")]),
            LatticeTerm::join(vec![g("x1"), g("x3")]),
        ]);
        assert_eq!(clauses(&normalize(&t)), vec![vec!["x1"], vec!["x2", "x3"]]);
    }

    #[test]
    fn normalize_is_idempotent() {
        let t = LatticeTerm::meet(vec![
            LatticeTerm::join(vec![g("a"), g("b"), LatticeTerm::meet(vec![g("c"), g("a")])]),
            LatticeTerm::join(vec![g("c"), g("b")]),
        ]);
        let nf = normalize(&t);
        assert_eq!(normalize(&nf.to_term()), nf);
    }

    #[test]
    fn every_normal_form_is_an_antichain() {
        let t = LatticeTerm::meet(vec![
            LatticeTerm::join(vec![g("a"), g("b")]),
            LatticeTerm::join(vec![g("b"), g("c")]),
            LatticeTerm::join(vec![g("a"), g("c")]),
        ]);
        let nf = normalize(&t);
        for c in nf.clauses() {
            for d in nf.clauses() {
                assert!(c == d || !c.is_subset(d));
            }
        }
    }

    #[test]
    fn leq_examples() {
        assert!(leq(&LatticeTerm::meet(vec![g("x1"), g("x2")]), &g("x1")));
        assert!(!leq(&g("x1"), &g("x2")));
        let s = LatticeTerm::meet(vec![LatticeTerm::join(vec![g("x1"), g("x2")]), g("x3")]);
        let t = LatticeTerm::join(vec![g("x3"), g("x1")]);
        assert!(leq(&s, &t));
        assert!(!leq(&t, &s));
    }

    #[test]
    fn criterion_matches_intersection() {
        let set = |xs: &[u32]| xs.iter().copied().collect::<BTreeSet<u32>>();
        assert!(generator_criterion(&set(&[1]), &set(&[1])));
        assert!(!generator_criterion(&set(&[1, 2]), &set(&[3])));
    }

    #[test]
    fn criterion_agrees_with_leq_on_small_index_sets() {
        let gens = |xs: &BTreeSet<u32>| xs.iter().map(|i| g(&format!("g{i}"))).collect::<Vec<_>>();
        let subsets: Vec<BTreeSet<u32>> =
            (1u32..32).map(|mask| (0..5).filter(|b| mask & (1 << b) != 0).collect()).collect();
        for i_set in &subsets {
            for j_set in &subsets {
                let join_i = LatticeTerm::join(gens(i_set));
                let meet_j = LatticeTerm::meet(gens(j_set));
                assert_eq!(
                    generator_criterion(i_set, j_set),
                    leq(&meet_j, &join_i),
                    "I={i_set:?} J={j_set:?}"
                );
            }
        }
    }

    #[test]
    fn expand_single_v_generator() {
        let out = expand_vi(&g("v0"), 1).unwrap();
        let expected = LatticeTerm::meet(vec![LatticeTerm::join(vec![g("U"), g("S0")]), g("V")]);
        assert_eq!(normalize(&out), normalize(&expected));
    }

    #[test]
    fn expand_join_collapses_to_joined_separators() {
        // v0 v v1 = (U v S0 v S1) ∧ V after absorption
        let out = expand_vi(&LatticeTerm::join(vec![g("v0"), g("v1")]), 2).unwrap();
        let expected =
            LatticeTerm::meet(vec![LatticeTerm::join(vec![g("U"), g("S0"), g("S1")]), g("V")]);
        assert_eq!(normalize(&out), normalize(&expected));
    }

    #[test]
    fn expand_meet_collapses_to_met_separators() {
        let out = expand_vi(&LatticeTerm::meet(vec![g("v0"), g("v1")]), 2).unwrap();
        let expected = LatticeTerm::meet(vec![
            LatticeTerm::join(vec![g("U"), LatticeTerm::meet(vec![g("S0"), g("S1")])]),
            g("V"),
        ]);
        assert_eq!(normalize(&out), normalize(&expected));
    }

    #[test]
    fn expand_rejects_bad_generators() {
        assert_eq!(expand_vi(&g("v3"), 2), Err(FdlError::IndexOutOfRange { index: 3, limit: 2 }));
        assert!(matches!(expand_vi(&g("x0"), 2), Err(FdlError::NotAVGenerator(_))));
    }

    // symbolic shadow of the incomparability facts: for disjoint I and J
    // the met substituted generators never sink below U alone
    #[test]
    fn met_substitutions_are_not_below_u() {
        let t = expand_vi(&LatticeTerm::meet(vec![g("v0"), g("v1")]), 2).unwrap();
        assert!(!leq(&t, &g("U")));
        assert!(!leq(&g("U"), &expand_vi(&LatticeTerm::join(vec![g("v0"), g("v1")]), 2).unwrap()));
    }

    #[test]
    fn parser_roundtrip() {
        let t = parse_term("(join v0 (meet v1 v2))").unwrap();
        assert_eq!(t, LatticeTerm::join(vec![g("v0"), LatticeTerm::meet(vec![g("v1"), g("v2")])]));
        assert_eq!(parse_term(&t.to_string()).unwrap(), t);
        assert!(parse_term("(join)").is_err());
        assert!(parse_term("(or a b)").is_err());
        assert!(parse_term("(join a").is_err());
        assert!(parse_term("a b").is_err());
    }

    // the all-assignments oracle: valid because the algebra embeds into
    // powers of the two-element lattice
    fn oracle_leq(s: &LatticeTerm, t: &LatticeTerm) -> bool {
        let names: BTreeSet<String> =
            s.generators().into_iter().chain(t.generators()).map(str::to_string).collect();
        let names: Vec<String> = names.into_iter().collect();
        for mask in 0u32..(1 << names.len()) {
            let assignment: BTreeSet<String> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| n.clone())
                .collect();
            if s.eval(&assignment) && !t.eval(&assignment) {
                return false;
            }
        }
        true
    }

    #[test]
    fn leq_agrees_with_all_assignments_oracle_on_an_enumeration() {
        // all terms of shape (g | g∘g | g∘(g∘g)) over three generators
        let gens = ["a", "b", "c"];
        let mut terms: Vec<LatticeTerm> = gens.iter().map(|n| g(n)).collect();
        let base = terms.clone();
        for x in &base {
            for y in &base {
                terms.push(LatticeTerm::join(vec![x.clone(), y.clone()]));
                terms.push(LatticeTerm::meet(vec![x.clone(), y.clone()]));
            }
        }
        let snapshot = terms.clone();
        for x in &base {
            for y in snapshot.iter().skip(3).take(12) {
                terms.push(LatticeTerm::join(vec![x.clone(), y.clone()]));
                terms.push(LatticeTerm::meet(vec![x.clone(), y.clone()]));
            }
        }
        for s in &terms {
            for t in &terms {
                assert_eq!(leq(s, t), oracle_leq(s, t), "s={s} t={t}");
            }
        }
    }
}
