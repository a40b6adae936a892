//! Random fixtures and brute-force oracles shared by the integration tests.
//! Nothing here calls into the code it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use causalkg::ingest::{CausalNetwork, RawCeg, RawEdge, RawNode};
use causalkg::kg::{KnowledgeGraph, Relation, Variant};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random scored digraph with 2 to `max_nodes` nodes; may contain cycles,
/// score-1 edges and isolated nodes.
pub fn random_digraph(id: &str, max_nodes: usize, rng: &mut ChaCha8Rng) -> RawCeg {
    let n = rng.gen_range(2..=max_nodes);
    let p = rng.gen_range(0.1..0.45);
    let nodes = (0..n)
        .map(|i| RawNode {
            id: format!("v{i}"),
            description: String::new(),
            event_type: format!("T{}", rng.gen_range(0..4)),
            participants: Vec::new(),
        })
        .collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(p) {
                edges.push(RawEdge {
                    src: format!("v{u}"),
                    dst: format!("v{v}"),
                    score: rng.gen_range(1..=5),
                });
            }
        }
    }
    RawCeg {
        id: id.to_string(),
        nodes,
        edges,
    }
}

/// Adjacency of a network over its node names.
pub fn adjacency(net: &CausalNetwork) -> (Vec<String>, Vec<Vec<bool>>) {
    let names: Vec<String> = net.nodes().keys().cloned().collect();
    let pos = |s: &str| names.iter().position(|n| n == s).expect("edge endpoint is a node");
    let mut adj = vec![vec![false; names.len()]; names.len()];
    for (s, d, _) in net.edges() {
        adj[pos(s)][pos(d)] = true;
    }
    (names, adj)
}

/// Cycle check by boolean transitive closure.
pub fn has_cycle(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let mut reach = adj.to_vec();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).any(|i| reach[i][i])
}

/// Longest path (in edges) by exhaustive simple-path enumeration.
pub fn longest_path(adj: &[Vec<bool>]) -> usize {
    fn walk(adj: &[Vec<bool>], v: usize, seen: &mut Vec<bool>) -> usize {
        let mut best = 0;
        for w in 0..adj.len() {
            if adj[v][w] && !seen[w] {
                seen[w] = true;
                best = best.max(1 + walk(adj, w, seen));
                seen[w] = false;
            }
        }
        best
    }
    (0..adj.len())
        .map(|s| {
            let mut seen = vec![false; adj.len()];
            seen[s] = true;
            walk(adj, s, &mut seen)
        })
        .max()
        .unwrap_or(0)
}

/// Number of directed 2-edge paths `a -> b -> c` with distinct nodes.
pub fn two_paths(adj: &[Vec<bool>]) -> usize {
    let n = adj.len();
    let mut count = 0;
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a != b && b != c && a != c && adj[a][b] && adj[b][c] {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Filtered rank by sorting: candidates ordered by descending score, gold
/// rank is the midpoint of the run of candidates tied with it, halves
/// rounded up. `None` when the gold itself is filtered.
pub fn oracle_rank(
    scores: &[f64],
    gold: usize,
    known: &BTreeSet<usize>,
    test: &BTreeSet<usize>,
    paper_literal: bool,
) -> Option<usize> {
    let excluded: BTreeSet<usize> = if paper_literal {
        if known.contains(&gold) {
            return None;
        }
        known.clone()
    } else {
        known.union(test).copied().filter(|c| *c != gold).collect()
    };
    let mut pool: Vec<(f64, usize)> = (0..scores.len())
        .filter(|c| !excluded.contains(c))
        .map(|c| (scores[c], c))
        .collect();
    pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let g = scores[gold];
    let first = pool.iter().position(|(s, _)| *s == g)? + 1;
    let last = pool.iter().rposition(|(s, _)| *s == g)? + 1;
    Some(((first + last) as f64 / 2.0).round() as usize)
}

/// Every structural law a built graph must satisfy; returns the first
/// violation.
pub fn check_kg_laws(kg: &KnowledgeGraph) -> Result<(), String> {
    let qs: HashSet<_> = kg.qlinks().iter().collect();
    let find = |h: &causalkg::kg::EntityId, r: Relation, t: &causalkg::kg::EntityId, q| {
        qs.iter().any(|l| &l.head == h && l.relation == r && &l.tail == t && &l.qualifiers == q)
    };
    for l in kg.qlinks() {
        match l.relation {
            Relation::Causes => {
                if !find(&l.tail, Relation::CausedBy, &l.head, &l.qualifiers) {
                    return Err(format!("no causedBy inverse of {} -> {}", l.head, l.tail));
                }
                let th = kg.type_of(&l.head).ok_or("unregistered head")?;
                let tt = kg.type_of(&l.tail).ok_or("unregistered tail")?;
                if !find(&l.head, Relation::CausesType, tt, &l.qualifiers) {
                    return Err(format!("missing causesType for {} -> {}", l.head, l.tail));
                }
                if !find(&l.tail, Relation::CausedByType, th, &l.qualifiers) {
                    return Err(format!("missing causedByType for {} -> {}", l.head, l.tail));
                }
            }
            Relation::CausedBy => {
                if !find(&l.tail, Relation::Causes, &l.head, &l.qualifiers) {
                    return Err(format!("no causes inverse of {} <- {}", l.tail, l.head));
                }
            }
            _ => {}
        }
        if !kg.mediated() && !l.qualifiers.is_empty() {
            return Err("qualifiers in an unmediated graph".into());
        }
    }
    let mut type_of_count: BTreeMap<&causalkg::kg::EntityId, usize> = BTreeMap::new();
    for t in kg.triples() {
        if t.relation == Relation::TypeOf {
            *type_of_count.entry(&t.head).or_default() += 1;
            if kg.type_of(&t.head) != Some(&t.tail) {
                return Err(format!("typeOf of {} disagrees with the type table", t.head));
            }
        }
    }
    match kg.variant() {
        Variant::C => {
            if !type_of_count.is_empty() {
                return Err("typeOf triple in a C graph".into());
            }
        }
        Variant::CT => {
            for e in kg.entity_types().keys() {
                if type_of_count.get(e) != Some(&1) {
                    return Err(format!("{e} lacks exactly one typeOf triple"));
                }
            }
        }
    }
    Ok(())
}
