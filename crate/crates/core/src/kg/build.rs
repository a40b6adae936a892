use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CausalNetwork, MediatedChain};
use crate::kg::{
    EntityId, KnowledgeGraph, QualifiedLink, Qualifier, Qualifiers, Relation, Triple, Variant,
};

/// Namespaced id of a network node: `<network>/<node>`.
pub fn causal_entity_id(net: &str, node: &str) -> Result<EntityId> {
    EntityId::new(format!("{net}/{node}"))
}

/// Global id of an event type: `type/<event type>`.
pub fn type_entity_id(event_type: &str) -> Result<EntityId> {
    EntityId::new(format!("type/{event_type}"))
}

/// An opaque context statement, written as `ctx:<label>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTriple {
    pub head: String,
    pub label: String,
    pub tail: String,
}

/// Builds the causal knowledge graph for a set of networks.
///
/// `chains[i]` holds the mediated chains of `nets[i]`; it is ignored unless
/// `mediated` is set. Context triples are only accepted for the `CT`
/// variant, since `C` graphs are restricted to causal relations.
pub fn build_kg(
    nets: &[CausalNetwork],
    chains: &[Vec<MediatedChain>],
    variant: Variant,
    mediated: bool,
    context: Option<&[ContextTriple]>,
) -> Result<KnowledgeGraph> {
    if mediated && chains.len() != nets.len() {
        return Err(Error::Build(format!(
            "{} chain sets supplied for {} networks",
            chains.len(),
            nets.len()
        )));
    }

    let mut entity_types: BTreeMap<EntityId, EntityId> = BTreeMap::new();
    let mut qlinks: BTreeSet<QualifiedLink> = BTreeSet::new();
    let mut triples: BTreeSet<Triple> = BTreeSet::new();

    for (i, net) in nets.iter().enumerate() {
        let mut local: BTreeMap<&str, (EntityId, EntityId)> = BTreeMap::new();
        for (node, info) in net.nodes() {
            let id = causal_entity_id(net.id(), node).map_err(build_err)?;
            let ty = type_entity_id(&info.event_type).map_err(build_err)?;
            if entity_types.insert(id.clone(), ty.clone()).is_some() {
                return Err(Error::Build(format!("entity {id} defined by two networks")));
            }
            local.insert(node.as_str(), (id, ty));
        }
        let lookup = |node: &str| {
            local.get(node).ok_or_else(|| {
                Error::Build(format!("network {} has no node {node}", net.id()))
            })
        };

        for (src, dst, _) in net.edges() {
            let (u, tu) = lookup(src)?;
            let (v, tv) = lookup(dst)?;
            emit_causal(&mut qlinks, u, tu, v, tv, &Qualifiers::empty());
        }

        if mediated {
            for chain in &chains[i] {
                let (a, ta) = lookup(&chain.cause)?;
                let (b, tb) = lookup(&chain.mediator)?;
                let (c, tc) = lookup(&chain.effect)?;
                if net.score(&chain.cause, &chain.mediator).is_none()
                    || net.score(&chain.mediator, &chain.effect).is_none()
                {
                    return Err(Error::Build(format!(
                        "chain {} -> {} -> {} is not a path of network {}",
                        chain.cause,
                        chain.mediator,
                        chain.effect,
                        net.id()
                    )));
                }
                let q = Qualifiers::new(vec![
                    Qualifier::new(Relation::HasMediator, b.clone())?,
                    Qualifier::new(Relation::HasMediatorType, tb.clone())?,
                ]);
                emit_causal(&mut qlinks, a, ta, c, tc, &q);
            }
        }
    }

    if variant == Variant::CT {
        for (e, ty) in &entity_types {
            triples.insert(Triple::new(e.clone(), Relation::TypeOf, ty.clone())?);
        }
    }

    if let Some(ctx) = context.filter(|c| !c.is_empty()) {
        if variant == Variant::C {
            return Err(Error::Build(
                "context triples require the CT variant; C holds causal relations only".into(),
            ));
        }
        let net_ids: BTreeSet<&str> = nets.iter().map(CausalNetwork::id).collect();
        let types: BTreeSet<&EntityId> = entity_types.values().collect();
        for c in ctx {
            let relation: Relation = format!("ctx:{}", c.label).parse().map_err(build_err)?;
            let head = context_entity(&c.head, &entity_types, &types, &net_ids)?;
            let tail = context_entity(&c.tail, &entity_types, &types, &net_ids)?;
            triples.insert(Triple::new(head, relation, tail)?);
        }
    }

    KnowledgeGraph::new(variant, mediated, entity_types, triples, qlinks).map_err(build_err)
}

/// causes / causedBy plus both reified type links, all sharing `q`.
fn emit_causal(
    out: &mut BTreeSet<QualifiedLink>,
    u: &EntityId,
    tu: &EntityId,
    v: &EntityId,
    tv: &EntityId,
    q: &Qualifiers,
) {
    let link = |h: &EntityId, r: Relation, t: &EntityId| QualifiedLink {
        head: h.clone(),
        relation: r,
        tail: t.clone(),
        qualifiers: q.clone(),
    };
    out.insert(link(u, Relation::Causes, v));
    out.insert(link(v, Relation::CausedBy, u));
    out.insert(link(u, Relation::CausesType, tv));
    out.insert(link(v, Relation::CausedByType, tu));
}

/// Context endpoints are either registered entities or fresh ones; a fresh
/// id may not impersonate a type or a node of a known network.
fn context_entity(
    raw: &str,
    entity_types: &BTreeMap<EntityId, EntityId>,
    types: &BTreeSet<&EntityId>,
    net_ids: &BTreeSet<&str>,
) -> Result<EntityId> {
    let id = EntityId::new(raw).map_err(build_err)?;
    if entity_types.contains_key(&id) || types.contains(&id) {
        return Ok(id);
    }
    if raw.starts_with("type/") {
        return Err(Error::Build(format!("context references unknown type entity {raw}")));
    }
    if let Some((prefix, _)) = raw.split_once('/') {
        if net_ids.contains(prefix) {
            return Err(Error::Build(format!(
                "context references unknown node {raw} of network {prefix}"
            )));
        }
    }
    Ok(id)
}

fn build_err(e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Build(m),
        other => other,
    }
}
