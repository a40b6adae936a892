//! Causal event graph corpora: parsing, preprocessing into causal networks,
//! and serial-chain (mediator) extraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNode {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub event_type: String,
    #[serde(default)]
    pub participants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEdge {
    pub src: String,
    pub dst: String,
    pub score: u8,
}

/// One annotated causal event graph as it appears in a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCeg {
    pub id: String,
    pub nodes: Vec<RawNode>,
    pub edges: Vec<RawEdge>,
}

impl RawCeg {
    /// Checks that node ids are unique, every edge endpoint is declared and
    /// every score lies in `1..=5`.
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("CEG with empty id".into()));
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return Err(Error::Validation(format!("CEG {}: node with empty id", self.id)));
            }
            if !seen.insert(n.id.as_str()) {
                return Err(Error::Validation(format!(
                    "CEG {}: duplicate node id {}",
                    self.id, n.id
                )));
            }
        }
        for e in &self.edges {
            for end in [&e.src, &e.dst] {
                if !seen.contains(end.as_str()) {
                    return Err(Error::Validation(format!(
                        "CEG {}: edge {} -> {} references undeclared node {}",
                        self.id, e.src, e.dst, end
                    )));
                }
            }
            if !(1..=5).contains(&e.score) {
                return Err(Error::Validation(format!(
                    "CEG {}: edge {} -> {} has score {} outside 1..=5",
                    self.id, e.src, e.dst, e.score
                )));
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CorpusDoc {
    Bare(Vec<serde_json::Value>),
    Wrapped {
        #[allow(dead_code)]
        header: serde_json::Value,
        cegs: Vec<serde_json::Value>,
    },
}

/// Parses a corpus document: a JSON array of CEG objects, or an object with
/// a `header` and a `cegs` array (the form written by [`write_networks`]).
pub fn parse_ceg_corpus(bytes: &[u8]) -> Result<Vec<RawCeg>> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "input is not UTF-8"))?;
    let doc: CorpusDoc = serde_json::from_str(text).map_err(|e| {
        Error::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let records = match doc {
        CorpusDoc::Bare(v) => v,
        CorpusDoc::Wrapped { cegs, .. } => cegs,
    };
    records
        .into_iter()
        .enumerate()
        .map(|(i, value)| {
            let ceg: RawCeg = serde_json::from_value(value)
                .map_err(|e| Error::parse(format!("record {i}"), e.to_string()))?;
            ceg.validate()?;
            Ok(ceg)
        })
        .collect()
}

/// Serializes networks in corpus form, wrapped with a header object.
pub fn write_networks(nets: &[CausalNetwork], header: serde_json::Value) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Doc {
        header: serde_json::Value,
        cegs: Vec<RawCeg>,
    }
    let doc = Doc {
        header,
        cegs: nets.iter().map(CausalNetwork::to_raw).collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc)
        .map_err(|e| Error::Validation(format!("serializing networks: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetNode {
    pub event_type: String,
    pub description: String,
    pub participants: Vec<String>,
}

/// A preprocessed causal network: acyclic, scores in `2..=5`, no isolated
/// nodes, and a longest directed path of at least two edges.
///
/// Only [`preprocess`] constructs values of this type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalNetwork {
    id: String,
    nodes: BTreeMap<String, NetNode>,
    edges: BTreeMap<(String, String), u8>,
}

impl CausalNetwork {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn nodes(&self) -> &BTreeMap<String, NetNode> {
        &self.nodes
    }

    pub fn event_type(&self, node: &str) -> Option<&str> {
        self.nodes.get(node).map(|n| n.event_type.as_str())
    }

    /// Edges as `(src, dst, score)` in lexicographic `(src, dst)` order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u8)> {
        self.edges
            .iter()
            .map(|((s, d), sc)| (s.as_str(), d.as_str(), *sc))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn score(&self, src: &str, dst: &str) -> Option<u8> {
        self.edges.get(&(src.to_string(), dst.to_string())).copied()
    }

    /// Re-encodes the network in corpus form.
    pub fn to_raw(&self) -> RawCeg {
        RawCeg {
            id: self.id.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|(id, n)| RawNode {
                    id: id.clone(),
                    description: n.description.clone(),
                    event_type: n.event_type.clone(),
                    participants: n.participants.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|((s, d), sc)| RawEdge {
                    src: s.clone(),
                    dst: d.clone(),
                    score: *sc,
                })
                .collect(),
        }
    }

    /// Number of edges on the longest directed path.
    pub fn depth(&self) -> usize {
        longest_path(&self.edges)
    }

    /// Builds a network without the depth requirement, for unit tests that
    /// need graphs smaller than any accepted network.
    #[cfg(test)]
    pub(crate) fn unchecked(id: &str, nodes: &[(&str, &str)], edges: &[(&str, &str, u8)]) -> Self {
        CausalNetwork {
            id: id.into(),
            nodes: nodes
                .iter()
                .map(|(n, t)| {
                    (
                        (*n).to_string(),
                        NetNode {
                            event_type: (*t).into(),
                            description: String::new(),
                            participants: vec![],
                        },
                    )
                })
                .collect(),
            edges: edges
                .iter()
                .map(|(s, d, sc)| (((*s).to_string(), (*d).to_string()), *sc))
                .collect(),
        }
    }
}

/// Why a CEG did not become a causal network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rejection {
    NoCausalLinks,
    TooShallow { depth: usize },
}

impl Rejection {
    /// Stable key used in rejection histograms.
    pub fn reason(&self) -> &'static str {
        match self {
            Rejection::NoCausalLinks => "no causal links",
            Rejection::TooShallow { .. } => "depth below 2",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NoCausalLinks => f.write_str("no causal links"),
            Rejection::TooShallow { depth } => write!(f, "depth {depth} below 2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preprocessed {
    Accepted(CausalNetwork),
    Rejected(Rejection),
}

/// Turns a raw CEG into a causal network.
///
/// Score-1 edges are dropped. The rest are inserted greedily in descending
/// score order (ties broken by `(src, dst)`), skipping any edge that would
/// close a directed cycle or duplicate an existing edge. Nodes left without
/// edges are dropped.
pub fn preprocess(ceg: &RawCeg) -> Preprocessed {
    let mut candidates: Vec<&RawEdge> = ceg.edges.iter().filter(|e| e.score > 1).collect();
    candidates.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| a.src.cmp(&b.src))
            .then_with(|| a.dst.cmp(&b.dst))
    });

    let mut edges: BTreeMap<(String, String), u8> = BTreeMap::new();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in candidates {
        let key = (e.src.clone(), e.dst.clone());
        if edges.contains_key(&key) || reaches(&succ, &e.dst, &e.src) {
            continue;
        }
        edges.insert(key, e.score);
        succ.entry(e.src.as_str()).or_default().push(e.dst.as_str());
    }

    if edges.is_empty() {
        return Preprocessed::Rejected(Rejection::NoCausalLinks);
    }
    let depth = longest_path(&edges);
    if depth < 2 {
        return Preprocessed::Rejected(Rejection::TooShallow { depth });
    }

    let used: BTreeSet<&str> = edges
        .keys()
        .flat_map(|(s, d)| [s.as_str(), d.as_str()])
        .collect();
    let nodes = ceg
        .nodes
        .iter()
        .filter(|n| used.contains(n.id.as_str()))
        .map(|n| {
            (
                n.id.clone(),
                NetNode {
                    event_type: n.event_type.clone(),
                    description: n.description.clone(),
                    participants: n.participants.clone(),
                },
            )
        })
        .collect();
    Preprocessed::Accepted(CausalNetwork {
        id: ceg.id.clone(),
        nodes,
        edges,
    })
}

/// True if `to` is reachable from `from` (including `from == to`).
fn reaches(succ: &BTreeMap<&str, Vec<&str>>, from: &str, to: &str) -> bool {
    let mut stack = vec![from];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if !seen.insert(n) {
            continue;
        }
        if let Some(next) = succ.get(n) {
            stack.extend(next.iter().copied());
        }
    }
    false
}

/// Longest path length (in edges) of an acyclic edge set.
fn longest_path(edges: &BTreeMap<(String, String), u8>) -> usize {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut indeg: BTreeMap<&str, usize> = BTreeMap::new();
    for (s, d) in edges.keys() {
        succ.entry(s).or_default().push(d);
        indeg.entry(s).or_insert(0);
        *indeg.entry(d).or_insert(0) += 1;
    }
    let mut depth: BTreeMap<&str, usize> = indeg.keys().map(|k| (*k, 0)).collect();
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
    let mut best = 0;
    while let Some(n) = ready.pop() {
        let dn = depth[n];
        best = best.max(dn);
        for &m in succ.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let dm = depth.get_mut(m).expect("registered");
            *dm = (*dm).max(dn + 1);
            let k = indeg.get_mut(m).expect("registered");
            *k -= 1;
            if *k == 0 {
                ready.push(m);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PruneSummary {
    pub total: usize,
    pub accepted: usize,
    pub rejected: BTreeMap<String, usize>,
}

/// Preprocesses every CEG, keeping accepted networks in input order.
pub fn prune_corpus(cegs: &[RawCeg]) -> (Vec<CausalNetwork>, PruneSummary) {
    let results: Vec<Preprocessed> = cegs.par_iter().map(preprocess).collect();
    let mut summary = PruneSummary {
        total: cegs.len(),
        ..Default::default()
    };
    let mut nets = Vec::new();
    for r in results {
        match r {
            Preprocessed::Accepted(n) => nets.push(n),
            Preprocessed::Rejected(why) => {
                *summary.rejected.entry(why.reason().to_string()).or_default() += 1;
            }
        }
    }
    summary.accepted = nets.len();
    (nets, summary)
}

/// A serial structure `cause -> mediator -> effect`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MediatedChain {
    pub cause: String,
    pub mediator: String,
    pub effect: String,
    pub scores: (u8, u8),
}

/// One chain per directed two-edge path, sorted by `(cause, mediator, effect)`.
pub fn extract_mediated_chains(net: &CausalNetwork) -> Vec<MediatedChain> {
    let mut out_edges: BTreeMap<&str, Vec<(&str, u8)>> = BTreeMap::new();
    for (s, d, sc) in net.edges() {
        out_edges.entry(s).or_default().push((d, sc));
    }
    let mut chains = Vec::new();
    for (a, b, s1) in net.edges() {
        for &(c, s2) in out_edges.get(b).map(Vec::as_slice).unwrap_or(&[]) {
            if c == a {
                continue;
            }
            chains.push(MediatedChain {
                cause: a.to_string(),
                mediator: b.to_string(),
                effect: c.to_string(),
                scores: (s1, s2),
            });
        }
    }
    chains.sort();
    chains
}
