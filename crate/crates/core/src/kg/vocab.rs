use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Relation};

/// Dense index over entities and relations, in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entities: Vec<EntityId>,
    relations: Vec<Relation>,
    entity_index: HashMap<EntityId, usize>,
    relation_index: HashMap<Relation, usize>,
}

impl Vocab {
    /// Vocabulary of a graph. Every core relation is always present so that
    /// qualifier relations have rows even in unmediated graphs.
    pub fn from_kg(kg: &KnowledgeGraph) -> Self {
        let entities: Vec<EntityId> = kg.entities().into_iter().cloned().collect();
        let mut relations: Vec<Relation> = Relation::CORE.to_vec();
        relations.extend(kg.relations().into_iter().cloned());
        Self::from_parts(entities, relations)
    }

    pub fn from_parts(mut entities: Vec<EntityId>, mut relations: Vec<Relation>) -> Self {
        entities.sort();
        entities.dedup();
        relations.sort();
        relations.dedup();
        let entity_index = entities.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        let relation_index = relations.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        Vocab {
            entities,
            relations,
            entity_index,
            relation_index,
        }
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity(&self, e: &EntityId) -> Result<usize> {
        self.entity_index
            .get(e)
            .copied()
            .ok_or_else(|| Error::Unknown(format!("entity {e}")))
    }

    pub fn relation(&self, r: &Relation) -> Result<usize> {
        self.relation_index
            .get(r)
            .copied()
            .ok_or_else(|| Error::Unknown(format!("relation {r}")))
    }
}
