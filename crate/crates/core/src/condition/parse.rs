//! Render/parse grammar for conditions.
//!
//! ```text
//! condition := "true" | "false" | clause ("||" clause)*
//! clause    := atom ("&&" atom)*
//! atom      := var "==" literal | var "!=" literal
//!            | literal "in" var | literal "not" "in" var
//! literal   := bare-word | integer | 'single quoted'
//! ```
//!
//! The parser accepts exactly what [`render_condition`] emits plus arbitrary
//! whitespace, so parse∘render is the identity on normalized conditions.

use super::{Atom, Clause, Condition, ConditionError, Predicate, Value};

pub fn render_condition(cond: &Condition) -> String {
    if cond.is_true() {
        return "true".into();
    }
    if cond.is_false() {
        return "false".into();
    }
    cond.clauses
        .iter()
        .map(render_clause)
        .collect::<Vec<_>>()
        .join(" || ")
}

fn render_clause(clause: &Clause) -> String {
    clause
        .literals
        .iter()
        .map(render_atom)
        .collect::<Vec<_>>()
        .join(" && ")
}

fn render_atom(atom: &Atom) -> String {
    match atom.predicate {
        Predicate::Eq => format!("{} == {}", atom.var, render_value(&atom.operand)),
        Predicate::Neq => format!("{} != {}", atom.var, render_value(&atom.operand)),
        Predicate::Contains => format!("{} in {}", render_value(&atom.operand), atom.var),
        Predicate::NotContains => {
            format!("{} not in {}", render_value(&atom.operand), atom.var)
        }
    }
}

fn is_bare(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && s != "true"
        && s != "false"
        && s != "in"
        && s != "not"
        && s.parse::<i64>().is_err()
}

fn render_value(value: &Value) -> String {
    match value {
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Label(s) if is_bare(s) => s.clone(),
        Value::Label(s) => format!("'{}'", s),
        Value::Set(_) => unreachable!("set values never appear as atom operands"),
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ConditionError> {
        Err(ConditionError::Parse { at: self.pos, msg: msg.into() })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.src.len()
    }

    /// Bare word, integer, or single-quoted string.
    fn token(&mut self) -> Result<String, ConditionError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        if let Some(stripped) = rest.strip_prefix('\'') {
            match stripped.find('\'') {
                Some(end) => {
                    let word = stripped[..end].to_string();
                    self.pos += end + 2;
                    Ok(word)
                }
                None => self.err("unterminated quoted literal"),
            }
        } else {
            let end = rest
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'))
                .unwrap_or(rest.len());
            if end == 0 {
                return self.err("expected identifier or literal");
            }
            let word = rest[..end].to_string();
            self.pos += end;
            Ok(word)
        }
    }

    fn value_from(word: String, quoted: bool) -> Value {
        if quoted {
            return Value::Label(word);
        }
        if word == "true" {
            return Value::Bool(true);
        }
        if word == "false" {
            return Value::Bool(false);
        }
        if let Ok(i) = word.parse::<i64>() {
            return Value::Int(i);
        }
        Value::Label(word)
    }

    fn atom(&mut self) -> Result<Atom, ConditionError> {
        self.skip_ws();
        let quoted = self.src[self.pos..].starts_with('\'');
        let first = self.token()?;
        self.skip_ws();
        if self.eat("==") {
            let quoted_rhs = {
                self.skip_ws();
                self.src[self.pos..].starts_with('\'')
            };
            let rhs = self.token()?;
            return Ok(Atom { var: first, predicate: Predicate::Eq, operand: Self::value_from(rhs, quoted_rhs) });
        }
        if self.eat("!=") {
            let quoted_rhs = {
                self.skip_ws();
                self.src[self.pos..].starts_with('\'')
            };
            let rhs = self.token()?;
            return Ok(Atom { var: first, predicate: Predicate::Neq, operand: Self::value_from(rhs, quoted_rhs) });
        }
        // Membership forms put the element first.
        if self.eat("not") {
            if !self.eat("in") {
                return self.err("expected `in` after `not`");
            }
            let var = self.token()?;
            return Ok(Atom {
                var,
                predicate: Predicate::NotContains,
                operand: Value::Label(first),
            });
        }
        if self.eat("in") {
            let var = self.token()?;
            return Ok(Atom { var, predicate: Predicate::Contains, operand: Value::Label(first) });
        }
        let _ = quoted;
        self.err("expected `==`, `!=`, `in`, or `not in`")
    }

    fn clause(&mut self) -> Result<Clause, ConditionError> {
        let mut literals = vec![self.atom()?];
        while self.eat("&&") {
            literals.push(self.atom()?);
        }
        Ok(Clause::new(literals))
    }

    fn condition(&mut self) -> Result<Condition, ConditionError> {
        self.skip_ws();
        if self.eat("true") {
            if !self.at_end() {
                return self.err("unexpected input after `true`");
            }
            return Ok(Condition::tautology());
        }
        if self.eat("false") {
            if !self.at_end() {
                return self.err("unexpected input after `false`");
            }
            return Ok(Condition::contradiction());
        }
        let mut clauses = vec![self.clause()?];
        while self.eat("||") {
            clauses.push(self.clause()?);
        }
        if !self.at_end() {
            return self.err("unexpected trailing input");
        }
        Ok(Condition { clauses })
    }
}

/// Parse the textual grammar into a (non-normalized) condition.
pub fn parse_condition(src: &str) -> Result<Condition, ConditionError> {
    Parser { src, pos: 0 }.condition()
}
