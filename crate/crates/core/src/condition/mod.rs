//! State conditions in disjunctive normal form over finite-domain variables.
//!
//! A [`Condition`] is a disjunction of [`Clause`]s, each a conjunction of
//! [`Atom`]s. The empty clause list is `false`; a single empty clause is
//! `true`. All reasoning (satisfiability, entailment) is decided by exhaustive
//! enumeration over the declared variable domains, capped so that degenerate
//! specs are rejected instead of hanging.

mod enumerate;
mod parse;

pub use enumerate::{assignment_space, ValuationIter, ENUMERATION_CAP};
pub use parse::parse_condition;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditionError {
    #[error("variable `{0}` is not bound in the valuation")]
    UnboundVariable(String),
    #[error("variable `{0}` is not declared")]
    UndeclaredVariable(String),
    #[error("assignment space of {space} valuations exceeds the enumeration cap of {cap}")]
    EnumerationCapExceeded { space: u128, cap: u128 },
    #[error("predicate `{predicate}` does not match the domain of `{var}`")]
    PredicateDomainMismatch { var: String, predicate: String },
    #[error("operand `{operand}` is outside the domain of `{var}`")]
    OperandOutsideDomain { var: String, operand: String },
    #[error("clause is empty: `true` has no violation targets")]
    EmptyClause,
    #[error("parse error at byte {at}: {msg}")]
    Parse { at: usize, msg: String },
    #[error("domain of `{0}` is empty")]
    EmptyDomain(String),
}

/// Finite domain of a state variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Boolean,
    Enum { labels: Vec<String> },
    IntRange { lo: i64, hi: i64 },
    SetOf { universe: Vec<String> },
}

impl DomainKind {
    pub fn is_set(&self) -> bool {
        matches!(self, DomainKind::SetOf { .. })
    }

    /// Number of distinct values this domain admits (subsets for sets).
    pub fn cardinality(&self) -> u128 {
        match self {
            DomainKind::Boolean => 2,
            DomainKind::Enum { labels } => labels.len() as u128,
            DomainKind::IntRange { lo, hi } => (hi - lo + 1) as u128,
            DomainKind::SetOf { universe } => 1u128 << universe.len().min(126),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub domain: DomainKind,
}

impl VarDecl {
    pub fn validate(&self) -> Result<(), ConditionError> {
        match &self.domain {
            DomainKind::Enum { labels } => {
                if labels.is_empty() {
                    return Err(ConditionError::EmptyDomain(self.name.clone()));
                }
                let set: BTreeSet<_> = labels.iter().collect();
                if set.len() != labels.len() {
                    return Err(ConditionError::OperandOutsideDomain {
                        var: self.name.clone(),
                        operand: "duplicate enum label".into(),
                    });
                }
            }
            DomainKind::IntRange { lo, hi } => {
                if lo > hi {
                    return Err(ConditionError::EmptyDomain(self.name.clone()));
                }
            }
            DomainKind::SetOf { universe } => {
                let set: BTreeSet<_> = universe.iter().collect();
                if set.len() != universe.len() {
                    return Err(ConditionError::OperandOutsideDomain {
                        var: self.name.clone(),
                        operand: "duplicate set element".into(),
                    });
                }
            }
            DomainKind::Boolean => {}
        }
        Ok(())
    }
}

/// A concrete value bound to a variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Label(String),
    Set(BTreeSet<String>),
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Label(s) => s.clone(),
            Value::Set(s) => {
                let inner: Vec<_> = s.iter().cloned().collect();
                format!("{{{}}}", inner.join(","))
            }
        }
    }

    pub fn in_domain(&self, domain: &DomainKind) -> bool {
        match (self, domain) {
            (Value::Bool(_), DomainKind::Boolean) => true,
            (Value::Int(i), DomainKind::IntRange { lo, hi }) => *lo <= *i && *i <= *hi,
            (Value::Label(l), DomainKind::Enum { labels }) => labels.iter().any(|x| x == l),
            (Value::Set(s), DomainKind::SetOf { universe }) => {
                s.iter().all(|e| universe.iter().any(|u| u == e))
            }
            _ => false,
        }
    }
}

/// Atom predicate: scalar equality or set membership, and their negations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Eq,
    Neq,
    Contains,
    NotContains,
}

impl Predicate {
    pub fn negated(self) -> Predicate {
        match self {
            Predicate::Eq => Predicate::Neq,
            Predicate::Neq => Predicate::Eq,
            Predicate::Contains => Predicate::NotContains,
            Predicate::NotContains => Predicate::Contains,
        }
    }

    fn order_key(self) -> u8 {
        match self {
            Predicate::Eq => 0,
            Predicate::Neq => 1,
            Predicate::Contains => 2,
            Predicate::NotContains => 3,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Predicate::Eq => "==",
            Predicate::Neq => "!=",
            Predicate::Contains => "in",
            Predicate::NotContains => "not in",
        };
        f.write_str(s)
    }
}

/// Single literal over one variable.
///
/// For scalar domains the operand is the compared value; for set domains it
/// is the element whose membership is tested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub var: String,
    pub predicate: Predicate,
    pub operand: Value,
}

impl Atom {
    pub fn eq(var: impl Into<String>, operand: Value) -> Atom {
        Atom { var: var.into(), predicate: Predicate::Eq, operand }
    }

    pub fn neq(var: impl Into<String>, operand: Value) -> Atom {
        Atom { var: var.into(), predicate: Predicate::Neq, operand }
    }

    pub fn contains(var: impl Into<String>, elem: impl Into<String>) -> Atom {
        Atom { var: var.into(), predicate: Predicate::Contains, operand: Value::Label(elem.into()) }
    }

    pub fn not_contains(var: impl Into<String>, elem: impl Into<String>) -> Atom {
        Atom {
            var: var.into(),
            predicate: Predicate::NotContains,
            operand: Value::Label(elem.into()),
        }
    }

    pub fn negated(&self) -> Atom {
        Atom { var: self.var.clone(), predicate: self.predicate.negated(), operand: self.operand.clone() }
    }

    pub fn evaluate(&self, val: &Valuation) -> Result<bool, ConditionError> {
        let bound = val
            .bindings
            .get(&self.var)
            .ok_or_else(|| ConditionError::UnboundVariable(self.var.clone()))?;
        Ok(match self.predicate {
            Predicate::Eq => bound == &self.operand,
            Predicate::Neq => bound != &self.operand,
            Predicate::Contains | Predicate::NotContains => {
                let member = match (bound, &self.operand) {
                    (Value::Set(s), Value::Label(e)) => s.contains(e),
                    _ => false,
                };
                if self.predicate == Predicate::Contains {
                    member
                } else {
                    !member
                }
            }
        })
    }

    /// Atoms are syntactically contradictory when no valuation can satisfy
    /// both, detectable without enumeration.
    fn contradicts(&self, other: &Atom) -> bool {
        if self.var != other.var {
            return false;
        }
        match (self.predicate, other.predicate) {
            (Predicate::Eq, Predicate::Eq) => self.operand != other.operand,
            (Predicate::Eq, Predicate::Neq) | (Predicate::Neq, Predicate::Eq) => {
                self.operand == other.operand
            }
            (Predicate::Contains, Predicate::NotContains)
            | (Predicate::NotContains, Predicate::Contains) => self.operand == other.operand,
            _ => false,
        }
    }

    fn order_key(&self) -> (String, u8, String) {
        (self.var.clone(), self.predicate.order_key(), self.operand.render())
    }

    pub fn validate(&self, decls: &[VarDecl]) -> Result<(), ConditionError> {
        let decl = decls
            .iter()
            .find(|d| d.name == self.var)
            .ok_or_else(|| ConditionError::UndeclaredVariable(self.var.clone()))?;
        let scalar_pred = matches!(self.predicate, Predicate::Eq | Predicate::Neq);
        if decl.domain.is_set() == scalar_pred {
            return Err(ConditionError::PredicateDomainMismatch {
                var: self.var.clone(),
                predicate: self.predicate.to_string(),
            });
        }
        let ok = match (&decl.domain, &self.operand) {
            (DomainKind::SetOf { universe }, Value::Label(e)) => universe.iter().any(|u| u == e),
            (domain, value) => value.in_domain(domain),
        };
        if !ok {
            return Err(ConditionError::OperandOutsideDomain {
                var: self.var.clone(),
                operand: self.operand.render(),
            });
        }
        Ok(())
    }
}

/// Conjunction of atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clause {
    pub literals: Vec<Atom>,
}

impl Clause {
    pub fn new(literals: Vec<Atom>) -> Clause {
        Clause { literals }
    }

    pub fn evaluate(&self, val: &Valuation) -> Result<bool, ConditionError> {
        for lit in &self.literals {
            if !lit.evaluate(val)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// True when a pair of literals rules the clause out syntactically.
    fn syntactically_contradictory(&self) -> bool {
        for (i, a) in self.literals.iter().enumerate() {
            for b in &self.literals[i + 1..] {
                if a.contradicts(b) {
                    return true;
                }
            }
        }
        false
    }

    /// `self` subsumes `other` when every literal of `self` occurs in
    /// `other`, i.e. `other` is at least as constrained.
    fn subsumes(&self, other: &Clause) -> bool {
        self.literals.iter().all(|l| other.literals.contains(l))
    }

    fn normalized(&self) -> Clause {
        let mut lits = self.literals.clone();
        lits.sort_by_key(|a| a.order_key());
        lits.dedup();
        Clause { literals: lits }
    }
}

/// DNF condition. Structural equality on normalized values implies logical
/// equality; the reverse does not hold in general.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub clauses: Vec<Clause>,
}

impl Condition {
    /// The condition satisfied by every valuation.
    pub fn tautology() -> Condition {
        Condition { clauses: vec![Clause::new(Vec::new())] }
    }

    /// The condition satisfied by no valuation.
    pub fn contradiction() -> Condition {
        Condition { clauses: Vec::new() }
    }

    pub fn from_clause(clause: Clause) -> Condition {
        Condition { clauses: vec![clause] }.normalized()
    }

    pub fn single(atom: Atom) -> Condition {
        Condition::from_clause(Clause::new(vec![atom]))
    }

    pub fn is_true(&self) -> bool {
        self.clauses.iter().any(|c| c.literals.is_empty())
    }

    pub fn is_false(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Variables mentioned by any literal.
    pub fn variables(&self) -> BTreeSet<String> {
        self.clauses
            .iter()
            .flat_map(|c| c.literals.iter().map(|l| l.var.clone()))
            .collect()
    }

    pub fn mentions(&self, var: &str) -> bool {
        self.clauses.iter().any(|c| c.literals.iter().any(|l| l.var == var))
    }

    pub fn evaluate(&self, val: &Valuation) -> Result<bool, ConditionError> {
        for clause in &self.clauses {
            if clause.evaluate(val)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Canonical form: literals sorted and deduplicated, syntactically
    /// contradictory clauses dropped, subsumed clauses removed, clauses
    /// sorted. Idempotent.
    pub fn normalized(&self) -> Condition {
        let mut clauses: Vec<Clause> = self
            .clauses
            .iter()
            .map(Clause::normalized)
            .filter(|c| !c.syntactically_contradictory())
            .collect();
        // An empty clause is `true` and absorbs everything else.
        if clauses.iter().any(|c| c.literals.is_empty()) {
            return Condition::tautology();
        }
        clauses.sort_by(|a, b| clause_order(a, b));
        clauses.dedup();
        let mut kept: Vec<Clause> = Vec::new();
        'outer: for clause in clauses {
            for other in &kept {
                if other.subsumes(&clause) {
                    continue 'outer;
                }
            }
            kept.retain(|k| !clause.subsumes(k));
            kept.push(clause);
        }
        kept.sort_by(|a, b| clause_order(a, b));
        Condition { clauses: kept }
    }

    pub fn validate(&self, decls: &[VarDecl]) -> Result<(), ConditionError> {
        for clause in &self.clauses {
            for lit in &clause.literals {
                lit.validate(decls)?;
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        parse::render_condition(self)
    }
}

fn clause_order(a: &Clause, b: &Clause) -> std::cmp::Ordering {
    let ka: Vec<_> = a.literals.iter().map(|l| l.order_key()).collect();
    let kb: Vec<_> = b.literals.iter().map(|l| l.order_key()).collect();
    ka.cmp(&kb)
}

/// Total assignment of declared variables to concrete values.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Valuation {
    pub bindings: std::collections::BTreeMap<String, Value>,
}

impl Valuation {
    pub fn new() -> Valuation {
        Valuation::default()
    }

    pub fn bind(&mut self, var: impl Into<String>, value: Value) {
        self.bindings.insert(var.into(), value);
    }

    pub fn get(&self, var: &str) -> Option<&Value> {
        self.bindings.get(var)
    }

    /// Check that every binding respects its declared domain and that every
    /// declared variable is bound.
    pub fn validate(&self, decls: &[VarDecl]) -> Result<(), ConditionError> {
        for decl in decls {
            let value = self
                .bindings
                .get(&decl.name)
                .ok_or_else(|| ConditionError::UnboundVariable(decl.name.clone()))?;
            if !value.in_domain(&decl.domain) {
                return Err(ConditionError::OperandOutsideDomain {
                    var: decl.name.clone(),
                    operand: value.render(),
                });
            }
        }
        for var in self.bindings.keys() {
            if !decls.iter().any(|d| &d.name == var) {
                return Err(ConditionError::UndeclaredVariable(var.clone()));
            }
        }
        Ok(())
    }
}

/// True iff some total valuation over `decls` satisfies `cond`.
pub fn is_satisfiable(cond: &Condition, decls: &[VarDecl]) -> Result<bool, ConditionError> {
    if cond.is_false() {
        return Ok(false);
    }
    if cond.is_true() {
        return Ok(true);
    }
    for val in ValuationIter::new(decls)? {
        if cond.evaluate(&val)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// True iff every valuation satisfying `a` also satisfies `b`.
///
/// Clause-wise syntactic subsumption answers the common cases without
/// enumeration; it is only ever used to answer `true`.
pub fn entails(a: &Condition, b: &Condition, decls: &[VarDecl]) -> Result<bool, ConditionError> {
    if a.is_false() || b.is_true() {
        return Ok(true);
    }
    let na = a.normalized();
    let nb = b.normalized();
    let fast = na
        .clauses
        .iter()
        .all(|ca| nb.clauses.iter().any(|cb| cb.subsumes(ca)));
    if fast {
        return Ok(true);
    }
    for val in ValuationIter::new(decls)? {
        if a.evaluate(&val)? && !b.evaluate(&val)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff `a` and `b` are satisfied by exactly the same valuations.
pub fn equivalent(a: &Condition, b: &Condition, decls: &[VarDecl]) -> Result<bool, ConditionError> {
    Ok(entails(a, b, decls)? && entails(b, a, decls)?)
}

/// Plain conjunction `a && b` as normalized DNF (clause cross product).
pub fn conjoin(a: &Condition, b: &Condition) -> Condition {
    let mut clauses = Vec::new();
    for ca in &a.clauses {
        for cb in &b.clauses {
            let mut lits = ca.literals.clone();
            lits.extend(cb.literals.iter().cloned());
            clauses.push(Clause::new(lits));
        }
    }
    Condition { clauses }.normalized()
}

/// Negation of a DNF condition, itself in normalized DNF.
pub fn negate(cond: &Condition) -> Condition {
    // ¬(c1 ∨ … ∨ cn) = ¬c1 ∧ … ∧ ¬cn; each ¬ci is a disjunction of negated
    // literals, so the product enumerates one literal choice per clause.
    let mut acc = Condition::tautology();
    for clause in &cond.clauses {
        let negated = Condition {
            clauses: clause
                .literals
                .iter()
                .map(|lit| Clause::new(vec![lit.negated()]))
                .collect(),
        };
        acc = conjoin(&acc, &negated);
        if acc.is_false() {
            return acc;
        }
    }
    acc.normalized()
}

/// `a ∧ ¬b`, the strengthening construction of the flow-update rules.
pub fn conjoin_negation(a: &Condition, b: &Condition) -> Condition {
    conjoin(a, &negate(b))
}

/// `a ∨ b`, the merging construction of the flow-update rules.
pub fn disjoin(a: &Condition, b: &Condition) -> Condition {
    let mut clauses = a.clauses.clone();
    clauses.extend(b.clauses.iter().cloned());
    Condition { clauses }.normalized()
}

/// One single-clause condition per disjunct, in normalized clause order.
pub fn partition_disjuncts(cond: &Condition) -> Vec<Condition> {
    cond.normalized()
        .clauses
        .into_iter()
        .map(|c| Condition { clauses: vec![c] })
        .collect()
}

/// For each literal of a clause, the condition in which exactly that literal
/// is negated and all others hold.
pub fn minimal_violation_targets(
    clause: &Clause,
) -> Result<Vec<(Atom, Condition)>, ConditionError> {
    if clause.literals.is_empty() {
        return Err(ConditionError::EmptyClause);
    }
    let normalized = clause.normalized();
    let mut out = Vec::new();
    for (i, lit) in normalized.literals.iter().enumerate() {
        let mut lits = normalized.literals.clone();
        lits[i] = lit.negated();
        out.push((lit.clone(), Condition::from_clause(Clause::new(lits))));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
