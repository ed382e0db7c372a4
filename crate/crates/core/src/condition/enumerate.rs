//! Exhaustive valuation enumeration over finite domains.

use std::collections::BTreeSet;

use super::{ConditionError, DomainKind, Valuation, Value, VarDecl};

/// Hard cap on the total assignment space, 2^20 valuations.
pub const ENUMERATION_CAP: u128 = 1 << 20;

/// Total number of assignments over the declared domains.
pub fn assignment_space(decls: &[VarDecl]) -> u128 {
    decls
        .iter()
        .map(|d| d.domain.cardinality())
        .fold(1u128, |acc, c| acc.saturating_mul(c))
}

/// Odometer-style iterator over every total valuation of `decls`.
///
/// Set variables enumerate all subsets of their universe. Construction fails
/// when the assignment space exceeds [`ENUMERATION_CAP`].
pub struct ValuationIter {
    decls: Vec<VarDecl>,
    counters: Vec<u64>,
    done: bool,
}

impl ValuationIter {
    pub fn new(decls: &[VarDecl]) -> Result<ValuationIter, ConditionError> {
        let space = assignment_space(decls);
        if space > ENUMERATION_CAP {
            return Err(ConditionError::EnumerationCapExceeded { space, cap: ENUMERATION_CAP });
        }
        Ok(ValuationIter {
            decls: decls.to_vec(),
            counters: vec![0; decls.len()],
            done: false,
        })
    }

    fn value_at(decl: &VarDecl, idx: u64) -> Value {
        match &decl.domain {
            DomainKind::Boolean => Value::Bool(idx == 1),
            DomainKind::Enum { labels } => Value::Label(labels[idx as usize].clone()),
            DomainKind::IntRange { lo, .. } => Value::Int(lo + idx as i64),
            DomainKind::SetOf { universe } => {
                let mut set = BTreeSet::new();
                for (bit, elem) in universe.iter().enumerate() {
                    if idx & (1 << bit) != 0 {
                        set.insert(elem.clone());
                    }
                }
                Value::Set(set)
            }
        }
    }
}

impl Iterator for ValuationIter {
    type Item = Valuation;

    fn next(&mut self) -> Option<Valuation> {
        if self.done {
            return None;
        }
        let mut val = Valuation::new();
        for (decl, counter) in self.decls.iter().zip(&self.counters) {
            val.bind(decl.name.clone(), Self::value_at(decl, *counter));
        }
        // Advance the odometer.
        let mut i = 0;
        loop {
            if i == self.decls.len() {
                self.done = true;
                break;
            }
            self.counters[i] += 1;
            if (self.counters[i] as u128) < self.decls[i].domain.cardinality() {
                break;
            }
            self.counters[i] = 0;
            i += 1;
        }
        Some(val)
    }
}
