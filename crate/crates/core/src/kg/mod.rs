//! Hyper-relational causal knowledge graphs.
//!
//! Causal links are stored as [`QualifiedLink`]s (an unqualified causal link
//! is a qualified link with an empty qualifier set). Type membership and
//! opaque context statements are plain [`Triple`]s.

mod build;
mod format;
mod split;
mod stats;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use build::{build_kg, causal_entity_id, type_entity_id, ContextTriple};
pub use format::{parse_kg, parse_kg_fragment, serialize_kg, serialize_kg_with_generator};
pub use split::{partition_sizes, split_kg, KgSplit, SplitRatios};
pub use stats::{kg_stats, KgStats};
pub use vocab::Vocab;

/// Identifier of an entity. Non-empty and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Validation("empty entity id".into()));
        }
        if id.chars().any(char::is_whitespace) {
            return Err(Error::Validation(format!("entity id {id:?} contains whitespace")));
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EntityId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        EntityId::new(s)
    }
}

impl From<EntityId> for String {
    fn from(e: EntityId) -> String {
        e.0
    }
}

/// Relation vocabulary. `Context` carries an opaque label and is written as
/// `ctx:<label>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Relation {
    Causes,
    CausedBy,
    CausesType,
    CausedByType,
    HasMediator,
    HasMediatorType,
    TypeOf,
    Context(String),
}

impl Relation {
    pub const CORE: [Relation; 7] = [
        Relation::Causes,
        Relation::CausedBy,
        Relation::CausesType,
        Relation::CausedByType,
        Relation::HasMediator,
        Relation::HasMediatorType,
        Relation::TypeOf,
    ];

    pub fn name(&self) -> String {
        match self {
            Relation::Context(label) => format!("ctx:{label}"),
            other => other.core_name().to_string(),
        }
    }

    fn core_name(&self) -> &'static str {
        match self {
            Relation::Causes => "causes",
            Relation::CausedBy => "causedBy",
            Relation::CausesType => "causesType",
            Relation::CausedByType => "causedByType",
            Relation::HasMediator => "hasMediator",
            Relation::HasMediatorType => "hasMediatorType",
            Relation::TypeOf => "typeOf",
            Relation::Context(_) => "ctx",
        }
    }

    fn name_parts(&self) -> (&'static str, &str) {
        match self {
            Relation::Context(label) => ("ctx:", label.as_str()),
            core => (core.core_name(), ""),
        }
    }

    /// Relations allowed as the main relation of a qualified link.
    pub fn is_causal(&self) -> bool {
        matches!(
            self,
            Relation::Causes | Relation::CausedBy | Relation::CausesType | Relation::CausedByType
        )
    }

    /// Relations allowed in qualifier position.
    pub fn is_qualifier(&self) -> bool {
        matches!(self, Relation::HasMediator | Relation::HasMediatorType)
    }

    /// Relations allowed in plain triples.
    pub fn is_plain(&self) -> bool {
        matches!(self, Relation::TypeOf | Relation::Context(_))
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Relation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if let Some(label) = s.strip_prefix("ctx:") {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(Error::Validation(format!("invalid context label in {s:?}")));
            }
            return Ok(Relation::Context(label.to_string()));
        }
        Relation::CORE
            .iter()
            .find(|r| r.core_name() == s)
            .cloned()
            .ok_or_else(|| Error::Validation(format!("unknown relation {s:?}")))
    }
}

// Relations order by their written name so that in-memory order matches the
// serialized line order.
impl Ord for Relation {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a, b) = (self.name_parts(), other.name_parts());
        a.0.bytes()
            .chain(a.1.bytes())
            .cmp(b.0.bytes().chain(b.1.bytes()))
    }
}

impl PartialOrd for Relation {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// One `(qualifier relation, entity)` pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qualifier {
    pub relation: Relation,
    pub entity: EntityId,
}

impl Qualifier {
    pub fn new(relation: Relation, entity: EntityId) -> Result<Self> {
        if !relation.is_qualifier() {
            return Err(Error::Validation(format!(
                "{relation} cannot be used as a qualifier relation"
            )));
        }
        Ok(Qualifier { relation, entity })
    }
}

/// Canonically sorted, duplicate-free qualifier set.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qualifiers(Vec<Qualifier>);

impl Qualifiers {
    pub fn empty() -> Self {
        Qualifiers(Vec::new())
    }

    pub fn new(mut pairs: Vec<Qualifier>) -> Self {
        pairs.sort();
        pairs.dedup();
        Qualifiers(pairs)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Qualifier> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Qualifier] {
        &self.0
    }
}

impl FromIterator<Qualifier> for Qualifiers {
    fn from_iter<I: IntoIterator<Item = Qualifier>>(iter: I) -> Self {
        Qualifiers::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a Qualifiers {
    type Item = &'a Qualifier;
    type IntoIter = std::slice::Iter<'a, Qualifier>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// A causal hyper-relational fact `<head, relation, tail, qualifiers>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QualifiedLink {
    pub head: EntityId,
    pub relation: Relation,
    pub tail: EntityId,
    pub qualifiers: Qualifiers,
}

impl QualifiedLink {
    pub fn new(
        head: EntityId,
        relation: Relation,
        tail: EntityId,
        qualifiers: Qualifiers,
    ) -> Result<Self> {
        if !relation.is_causal() {
            return Err(Error::Validation(format!(
                "{relation} is not a causal relation"
            )));
        }
        Ok(QualifiedLink {
            head,
            relation,
            tail,
            qualifiers,
        })
    }

    /// Every entity mentioned: head, tail and qualifier entities.
    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        [&self.head, &self.tail]
            .into_iter()
            .chain(self.qualifiers.iter().map(|q| &q.entity))
    }

    /// Every relation mentioned, including qualifier relations.
    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        std::iter::once(&self.relation).chain(self.qualifiers.iter().map(|q| &q.relation))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: Relation,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: Relation, tail: EntityId) -> Result<Self> {
        if !relation.is_plain() {
            return Err(Error::Validation(format!(
                "{relation} cannot appear in a plain triple"
            )));
        }
        Ok(Triple {
            head,
            relation,
            tail,
        })
    }
}

/// `C` holds causal relations only; `CT` adds entity-type links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    C,
    CT,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::C => "C",
            Variant::CT => "CT",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" | "c" => Ok(Variant::C),
            "CT" | "ct" => Ok(Variant::CT),
            _ => Err(Error::Validation(format!("unknown variant {s:?} (expected C or CT)"))),
        }
    }
}

/// Immutable causal knowledge graph.
///
/// A graph is either *full* (a complete build, satisfying every structural
/// law) or a *fragment* (one part of a split, which shares the full graph's
/// type table but holds only a subset of its links).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    variant: Variant,
    mediated: bool,
    entity_types: BTreeMap<EntityId, EntityId>,
    triples: BTreeSet<Triple>,
    qlinks: BTreeSet<QualifiedLink>,
}

impl KnowledgeGraph {
    /// Assembles and fully validates a graph.
    pub fn new(
        variant: Variant,
        mediated: bool,
        entity_types: BTreeMap<EntityId, EntityId>,
        triples: BTreeSet<Triple>,
        qlinks: BTreeSet<QualifiedLink>,
    ) -> Result<Self> {
        let kg = KnowledgeGraph {
            variant,
            mediated,
            entity_types,
            triples,
            qlinks,
        };
        kg.validate()?;
        Ok(kg)
    }

    /// Assembles a split fragment; only registration and qualifier rules are
    /// checked.
    pub fn fragment(
        variant: Variant,
        mediated: bool,
        entity_types: BTreeMap<EntityId, EntityId>,
        triples: BTreeSet<Triple>,
        qlinks: BTreeSet<QualifiedLink>,
    ) -> Result<Self> {
        let kg = KnowledgeGraph {
            variant,
            mediated,
            entity_types,
            triples,
            qlinks,
        };
        kg.validate_fragment()?;
        Ok(kg)
    }

    pub fn empty(variant: Variant, mediated: bool) -> Self {
        KnowledgeGraph {
            variant,
            mediated,
            entity_types: BTreeMap::new(),
            triples: BTreeSet::new(),
            qlinks: BTreeSet::new(),
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn mediated(&self) -> bool {
        self.mediated
    }

    pub fn entity_types(&self) -> &BTreeMap<EntityId, EntityId> {
        &self.entity_types
    }

    pub fn triples(&self) -> &BTreeSet<Triple> {
        &self.triples
    }

    pub fn qlinks(&self) -> &BTreeSet<QualifiedLink> {
        &self.qlinks
    }

    pub fn type_of(&self, e: &EntityId) -> Option<&EntityId> {
        self.entity_types.get(e)
    }

    pub fn is_type_entity(&self, e: &EntityId) -> bool {
        self.type_entities().contains(e)
    }

    pub fn type_entities(&self) -> BTreeSet<&EntityId> {
        self.entity_types.values().collect()
    }

    /// Every registered entity: causal entities, type entities and context
    /// entities.
    pub fn entities(&self) -> BTreeSet<&EntityId> {
        let mut out: BTreeSet<&EntityId> = self.entity_types.keys().collect();
        out.extend(self.entity_types.values());
        for t in &self.triples {
            out.insert(&t.head);
            out.insert(&t.tail);
        }
        out
    }

    /// Relations that occur in links, qualifiers or triples.
    pub fn relations(&self) -> BTreeSet<&Relation> {
        let mut out: BTreeSet<&Relation> = self.qlinks.iter().flat_map(|l| l.relations()).collect();
        out.extend(self.triples.iter().map(|t| &t.relation));
        out
    }

    pub fn is_empty(&self) -> bool {
        self.qlinks.is_empty() && self.triples.is_empty()
    }

    fn validate_fragment(&self) -> Result<()> {
        let types = self.type_entities();
        for e in self.entity_types.keys() {
            if types.contains(e) {
                return Err(Error::Validation(format!(
                    "{e} is registered both as a causal entity and as a type"
                )));
            }
        }
        let known = |e: &EntityId| self.entity_types.contains_key(e) || types.contains(e);
        for l in &self.qlinks {
            for e in l.entities() {
                if !known(e) {
                    return Err(Error::Validation(format!(
                        "link {} {} {} references unregistered entity {e}",
                        l.head, l.relation, l.tail
                    )));
                }
            }
            if !self.mediated && !l.qualifiers.is_empty() {
                return Err(Error::Validation(format!(
                    "qualifiers present on {} {} {} in a non-mediated graph",
                    l.head, l.relation, l.tail
                )));
            }
        }
        for t in &self.triples {
            if t.relation == Relation::TypeOf {
                match self.entity_types.get(&t.head) {
                    Some(ty) if *ty == t.tail => {}
                    _ => {
                        return Err(Error::Validation(format!(
                            "typeOf triple {} -> {} disagrees with the type table",
                            t.head, t.tail
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    /// Checks every structural law of a complete graph.
    pub fn validate(&self) -> Result<()> {
        self.validate_fragment()?;

        let type_links = self
            .triples
            .iter()
            .filter(|t| t.relation == Relation::TypeOf)
            .count();
        match self.variant {
            Variant::C => {
                if !self.triples.is_empty() {
                    return Err(Error::Validation(
                        "variant C graphs hold causal relations only".into(),
                    ));
                }
            }
            Variant::CT => {
                // typeOf triples agree with the table (fragment check), so one
                // per causal entity is a count comparison.
                if type_links != self.entity_types.len() {
                    return Err(Error::Validation(format!(
                        "variant CT needs one typeOf triple per causal entity ({} entities, {} triples)",
                        self.entity_types.len(),
                        type_links
                    )));
                }
            }
        }

        for l in &self.qlinks {
            let mirror = |relation: Relation, head: &EntityId, tail: &EntityId| QualifiedLink {
                head: head.clone(),
                relation,
                tail: tail.clone(),
                qualifiers: l.qualifiers.clone(),
            };
            let require = |link: QualifiedLink, law: &str| -> Result<()> {
                if self.qlinks.contains(&link) {
                    Ok(())
                } else {
                    Err(Error::Validation(format!(
                        "{law}: {} {} {} has no {} {} {}",
                        l.head, l.relation, l.tail, link.head, link.relation, link.tail
                    )))
                }
            };
            match l.relation {
                Relation::Causes => {
                    require(mirror(Relation::CausedBy, &l.tail, &l.head), "inverse closure")?;
                    let (th, tt) = match (self.type_of(&l.head), self.type_of(&l.tail)) {
                        (Some(a), Some(b)) => (a, b),
                        _ => {
                            return Err(Error::Validation(format!(
                                "causal link {} -> {} between untyped entities",
                                l.head, l.tail
                            )))
                        }
                    };
                    require(mirror(Relation::CausesType, &l.head, tt), "reification")?;
                    require(mirror(Relation::CausedByType, &l.tail, th), "reification")?;
                }
                Relation::CausedBy => {
                    require(mirror(Relation::Causes, &l.tail, &l.head), "inverse closure")?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}
