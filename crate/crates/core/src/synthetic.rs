//! Seeded synthetic corpora with known mediator structure.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::{extract_mediated_chains, prune_corpus, RawCeg, RawEdge, RawNode};
use crate::kg::{build_kg, split_kg, KgSplit, KnowledgeGraph, SplitRatios, Variant};
use crate::numeric::rng;

fn node(id: &str, event_type: &str) -> RawNode {
    RawNode {
        id: id.to_string(),
        description: format!("{event_type} event"),
        event_type: event_type.to_string(),
        participants: Vec::new(),
    }
}

fn edge(src: &str, dst: &str, score: u8) -> RawEdge {
    RawEdge {
        src: src.to_string(),
        dst: dst.to_string(),
        score,
    }
}

/// Corpus in which the effect type of every chain is a fixed function of
/// its mediator type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediatorCorpusConfig {
    pub networks: usize,
    /// Mediator types `M0..`; mediator type `Mi` always leads to `Ei`.
    pub mediator_types: usize,
    pub cause_types: usize,
    pub min_chains: usize,
    pub max_chains: usize,
    pub seed: u64,
}

impl Default for MediatorCorpusConfig {
    fn default() -> Self {
        MediatorCorpusConfig {
            networks: 130,
            mediator_types: 3,
            cause_types: 3,
            min_chains: 2,
            max_chains: 3,
            seed: 0,
        }
    }
}

/// Each network has one cause `a` and chains `a -> bi -> ci`. The mediators
/// of a network carry distinct types drawn from `M0..`, and `ci` has type
/// `Ei` where `bi` has type `Mi`. Cause types and scores are random.
pub fn mediator_corpus(cfg: &MediatorCorpusConfig) -> Vec<RawCeg> {
    let mut rng = rng::seeded(cfg.seed);
    let max_chains = cfg.max_chains.min(cfg.mediator_types).max(1);
    let min_chains = cfg.min_chains.clamp(1, max_chains);
    (0..cfg.networks)
        .map(|n| {
            let k = rng.gen_range(min_chains..=max_chains);
            let cause_type = format!("C{}", rng.gen_range(0..cfg.cause_types.max(1)));
            let mut nodes = vec![node("a", &cause_type)];
            let mut edges = Vec::new();
            let mut mediators = sample(&mut rng, cfg.mediator_types, k).into_vec();
            mediators.sort_unstable();
            for (i, m) in mediators.into_iter().enumerate() {
                let (b, c) = (format!("b{i}"), format!("c{i}"));
                nodes.push(node(&b, &format!("M{m}")));
                nodes.push(node(&c, &format!("E{m}")));
                edges.push(edge("a", &b, rng.gen_range(2..=5)));
                edges.push(edge(&b, &c, rng.gen_range(2..=5)));
            }
            RawCeg {
                id: format!("net{n:03}"),
                nodes,
                edges,
            }
        })
        .collect()
}

/// Three five-node networks with eight edges and seven mediated chains
/// each, over five event types: 15 causal entities and 5 type entities.
/// The mediated `C` build has at most 180 links (type links coincide when
/// siblings share a type); `CT` adds 15 `typeOf` triples.
pub fn overfit_corpus(seed: u64) -> Vec<RawCeg> {
    let mut rng = rng::seeded(seed);
    let pattern = [
        ("a", "b"),
        ("a", "c"),
        ("a", "d"),
        ("b", "d"),
        ("c", "d"),
        ("b", "e"),
        ("c", "e"),
        ("d", "e"),
    ];
    (0..3)
        .map(|n| RawCeg {
            id: format!("fit{n}"),
            nodes: ["a", "b", "c", "d", "e"]
                .iter()
                .map(|id| node(id, &format!("T{}", rng.gen_range(0..5))))
                .collect(),
            edges: pattern
                .iter()
                .map(|(s, d)| edge(s, d, rng.gen_range(2..=5)))
                .collect(),
        })
        .collect()
}

/// Preprocesses `corpus` and builds one graph from the accepted networks.
pub fn build_from_corpus(corpus: &[RawCeg], variant: Variant, mediated: bool) -> Result<KnowledgeGraph> {
    let (nets, _) = prune_corpus(corpus);
    let chains: Vec<_> = nets.iter().map(extract_mediated_chains).collect();
    build_kg(&nets, &chains, variant, mediated, None)
}

/// [`build_from_corpus`] followed by [`split_kg`].
pub fn split_from_corpus(
    corpus: &[RawCeg],
    variant: Variant,
    mediated: bool,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<KgSplit> {
    split_kg(&build_from_corpus(corpus, variant, mediated)?, ratios, seed)
}
