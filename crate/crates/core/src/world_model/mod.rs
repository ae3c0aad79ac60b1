//! The symbolic layer: a knowledge base of types, objects, predicates and
//! facts, plus the grounding rules that turn anchor features into facts.

mod grounding;
mod snapshot;

pub use grounding::{
    declare_rule_predicates, default_rules, ground, zone_centroid, zone_symbol, Encoder, Feature,
    GroundingRule, SizeCategory,
};
pub use snapshot::{restore, snapshot, SNAPSHOT_SCHEMA_VERSION};
pub(crate) use snapshot::snapshot_with_digest;

use std::hash::{Hash, Hasher};

use indexmap::{IndexMap, IndexSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Argument type for string literals.
pub const STRING_TYPE: &str = "string";
/// Argument type for numeric literals.
pub const NUMBER_TYPE: &str = "number";
/// Type assigned to every object created by acquisition.
pub const OBJECT_TYPE: &str = "object";

/// A fact argument.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Object(String),
    Symbol(String),
    Number(f64),
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Term::Object(a), Term::Object(b)) => a == b,
            (Term::Symbol(a), Term::Symbol(b)) => a == b,
            (Term::Number(a), Term::Number(b)) => a.to_bits() == b.to_bits(),
            _ => false,
        }
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Term::Object(s) | Term::Symbol(s) => s.hash(state),
            Term::Number(v) => v.to_bits().hash(state),
        }
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Term::Object(s) => write!(f, "{s}"),
            Term::Symbol(s) => write!(f, "{s:?}"),
            Term::Number(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Fact {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Fact {
            predicate: predicate.into(),
            args,
        }
    }
}

impl std::fmt::Display for Fact {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Predicate signature. A functional predicate holds at most one fact per
/// subject (its first argument).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateDecl {
    pub name: String,
    pub arg_types: Vec<String>,
    #[serde(default)]
    pub functional: bool,
}

impl PredicateDecl {
    pub fn new(name: impl Into<String>, arg_types: &[&str], functional: bool) -> Self {
        PredicateDecl {
            name: name.into(),
            arg_types: arg_types.iter().map(|s| s.to_string()).collect(),
            functional,
        }
    }

    pub fn arity(&self) -> usize {
        self.arg_types.len()
    }
}

#[derive(Debug, Clone)]
pub enum Declaration {
    Type(String),
    Predicate(PredicateDecl),
}

/// Pattern for [`KnowledgeBase::query`]; `None` slots match anything.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub predicate: String,
    pub args: Vec<Option<Term>>,
}

impl Pattern {
    pub fn new(predicate: impl Into<String>, args: Vec<Option<Term>>) -> Self {
        Pattern {
            predicate: predicate.into(),
            args,
        }
    }

    fn matches(&self, fact: &Fact) -> bool {
        fact.predicate == self.predicate
            && fact.args.len() == self.args.len()
            && self
                .args
                .iter()
                .zip(&fact.args)
                .all(|(p, a)| p.as_ref().is_none_or(|p| p == a))
    }
}

/// Four-set knowledge base. Facts keep insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    types: IndexSet<String>,
    objects: IndexMap<String, String>,
    predicates: IndexMap<String, PredicateDecl>,
    facts: IndexSet<Fact>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        self.types.iter().map(String::as_str)
    }

    /// `(object_id, type)` pairs in creation order.
    pub fn objects(&self) -> impl Iterator<Item = (&str, &str)> {
        self.objects.iter().map(|(o, t)| (o.as_str(), t.as_str()))
    }

    pub fn predicates(&self) -> impl Iterator<Item = &PredicateDecl> {
        self.predicates.values()
    }

    pub fn facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter()
    }

    pub fn fact_count(&self) -> usize {
        self.facts.len()
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn has_object(&self, id: &str) -> bool {
        self.objects.contains_key(id)
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.get(name)
    }

    /// Adds a type or predicate. Identical re-declaration is a no-op.
    pub fn declare(&mut self, decl: Declaration) -> Result<()> {
        match decl {
            Declaration::Type(name) => {
                if name == STRING_TYPE || name == NUMBER_TYPE {
                    return Err(Error::validation(format!(
                        "type name {name:?} is reserved for literals"
                    )));
                }
                self.types.insert(name);
                Ok(())
            }
            Declaration::Predicate(p) => {
                for t in &p.arg_types {
                    if !self.is_known_arg_type(t) {
                        return Err(Error::validation(format!(
                            "predicate {}: unknown argument type {t:?}",
                            p.name
                        )));
                    }
                }
                match self.predicates.get(&p.name) {
                    Some(existing) if existing == &p => Ok(()),
                    Some(existing) => Err(Error::validation(format!(
                        "conflicting redeclaration of predicate {}: existing arity {} {:?} (functional={}), new arity {} {:?} (functional={})",
                        p.name,
                        existing.arity(),
                        existing.arg_types,
                        existing.functional,
                        p.arity(),
                        p.arg_types,
                        p.functional
                    ))),
                    None => {
                        self.predicates.insert(p.name.clone(), p);
                        Ok(())
                    }
                }
            }
        }
    }

    pub fn declare_type(&mut self, name: impl Into<String>) -> Result<()> {
        self.declare(Declaration::Type(name.into()))
    }

    pub fn declare_predicate(&mut self, decl: PredicateDecl) -> Result<()> {
        self.declare(Declaration::Predicate(decl))
    }

    fn is_known_arg_type(&self, t: &str) -> bool {
        t == STRING_TYPE || t == NUMBER_TYPE || self.types.contains(t)
    }

    pub fn add_object(&mut self, id: impl Into<String>, type_name: &str) -> Result<()> {
        let id = id.into();
        if !self.types.contains(type_name) {
            return Err(Error::validation(format!(
                "object {id}: undeclared type {type_name:?}"
            )));
        }
        if self.objects.contains_key(&id) {
            return Err(Error::validation(format!("duplicate object id {id}")));
        }
        self.objects.insert(id, type_name.to_string());
        Ok(())
    }

    /// Checks a fact against its predicate declaration and the object set.
    pub fn check_fact(&self, fact: &Fact) -> Result<()> {
        let decl = self.predicates.get(&fact.predicate).ok_or_else(|| {
            Error::validation(format!("undeclared predicate in fact {fact}"))
        })?;
        if decl.arity() != fact.args.len() {
            return Err(Error::validation(format!(
                "fact {fact}: arity {} does not match declared arity {}",
                fact.args.len(),
                decl.arity()
            )));
        }
        for (arg, ty) in fact.args.iter().zip(&decl.arg_types) {
            let ok = match arg {
                Term::Symbol(_) => ty == STRING_TYPE,
                Term::Number(v) => ty == NUMBER_TYPE && v.is_finite(),
                Term::Object(o) => match self.objects.get(o) {
                    Some(obj_ty) => obj_ty == ty,
                    None => {
                        return Err(Error::validation(format!(
                            "fact {fact}: unknown object {o}"
                        )))
                    }
                },
            };
            if !ok {
                return Err(Error::validation(format!(
                    "fact {fact}: argument {arg} does not have type {ty}"
                )));
            }
        }
        Ok(())
    }

    /// Removes `retractions`, then inserts `upserts`. For functional
    /// predicates an upsert replaces any fact with the same subject. The
    /// whole batch is checked before anything changes.
    pub fn apply_facts(&mut self, upserts: &[Fact], retractions: &[Fact]) -> Result<()> {
        for f in retractions.iter().chain(upserts) {
            self.check_fact(f)?;
        }
        for f in retractions {
            self.facts.shift_remove(f);
        }
        for f in upserts {
            if self.facts.contains(f) {
                continue;
            }
            let functional = self.predicates[&f.predicate].functional;
            if functional {
                if let Some(subject) = f.args.first() {
                    self.facts
                        .retain(|g| !(g.predicate == f.predicate && g.args.first() == Some(subject)));
                }
            }
            self.facts.insert(f.clone());
        }
        Ok(())
    }

    /// All facts unifying with `pattern`, in insertion order.
    pub fn query(&self, pattern: &Pattern) -> Vec<&Fact> {
        self.facts.iter().filter(|f| pattern.matches(f)).collect()
    }

    /// Facts whose first argument is `object_id`.
    pub fn facts_about(&self, object_id: &str) -> Vec<&Fact> {
        self.facts
            .iter()
            .filter(|f| matches!(f.args.first(), Some(Term::Object(o)) if o == object_id))
            .collect()
    }

    /// Checks every knowledge-base invariant.
    pub fn validate(&self) -> Result<()> {
        for (id, ty) in &self.objects {
            if !self.types.contains(ty) {
                return Err(Error::validation(format!(
                    "object {id} has undeclared type {ty}"
                )));
            }
        }
        for p in self.predicates.values() {
            for t in &p.arg_types {
                if !self.is_known_arg_type(t) {
                    return Err(Error::validation(format!(
                        "predicate {} has unknown argument type {t}",
                        p.name
                    )));
                }
            }
        }
        for f in &self.facts {
            self.check_fact(f)?;
        }
        for p in self.predicates.values().filter(|p| p.functional) {
            let mut subjects = std::collections::HashSet::new();
            for f in self.facts.iter().filter(|f| f.predicate == p.name) {
                if !subjects.insert(f.args.first()) {
                    return Err(Error::validation(format!(
                        "functional predicate {} has several values for one subject",
                        p.name
                    )));
                }
            }
        }
        Ok(())
    }
}
