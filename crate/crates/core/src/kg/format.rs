//! Line-oriented text encoding of a [`KnowledgeGraph`].
//!
//! ```text
//! #causalkg v1
//! #variant C|CT
//! #mediated true|false
//! [#generator <free text>]
//! E <entity> <type>
//! T <head> <relation> <tail>
//! Q <head> <relation> <tail> (<qualifier relation> <qualifier entity>)*
//! ```
//!
//! Fields are tab-separated, lines end with LF and the record lines are
//! sorted bytewise, so equal graphs encode to identical bytes.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, QualifiedLink, Qualifier, Qualifiers, Relation, Triple, Variant};

const MAGIC: &str = "#causalkg v1";

pub fn serialize_kg(kg: &KnowledgeGraph) -> Vec<u8> {
    encode(kg, None)
}

/// Like [`serialize_kg`] with an extra `#generator` header line recording
/// provenance (tool version, configuration digest).
pub fn serialize_kg_with_generator(kg: &KnowledgeGraph, generator: &str) -> Vec<u8> {
    let clean: String = generator
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    encode(kg, Some(&clean))
}

fn encode(kg: &KnowledgeGraph, generator: Option<&str>) -> Vec<u8> {
    let mut lines: Vec<String> = Vec::with_capacity(
        kg.entity_types().len() + kg.triples().len() + kg.qlinks().len(),
    );
    for (e, ty) in kg.entity_types() {
        lines.push(format!("E\t{e}\t{ty}"));
    }
    for t in kg.triples() {
        lines.push(format!("T\t{}\t{}\t{}", t.head, t.relation, t.tail));
    }
    for l in kg.qlinks() {
        let mut s = format!("Q\t{}\t{}\t{}", l.head, l.relation, l.tail);
        for q in &l.qualifiers {
            s.push('\t');
            s.push_str(&q.relation.name());
            s.push('\t');
            s.push_str(q.entity.as_str());
        }
        lines.push(s);
    }
    lines.sort_unstable();

    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("#variant {}\n", kg.variant()));
    out.push_str(&format!("#mediated {}\n", kg.mediated()));
    if let Some(g) = generator {
        out.push_str("#generator ");
        out.push_str(g);
        out.push('\n');
    }
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    out.into_bytes()
}

/// Parses and fully validates a complete graph.
pub fn parse_kg(bytes: &[u8]) -> Result<KnowledgeGraph> {
    let p = parse_parts(bytes)?;
    KnowledgeGraph::new(p.variant, p.mediated, p.entity_types, p.triples, p.qlinks)
}

/// Parses one part of a split (registration rules only).
pub fn parse_kg_fragment(bytes: &[u8]) -> Result<KnowledgeGraph> {
    let p = parse_parts(bytes)?;
    KnowledgeGraph::fragment(p.variant, p.mediated, p.entity_types, p.triples, p.qlinks)
}

struct Parts {
    variant: Variant,
    mediated: bool,
    entity_types: BTreeMap<EntityId, EntityId>,
    triples: BTreeSet<Triple>,
    qlinks: BTreeSet<QualifiedLink>,
}

fn parse_parts(bytes: &[u8]) -> Result<Parts> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "input is not UTF-8"))?;
    let mut lines = text.split_terminator('\n').enumerate().map(|(i, l)| (i + 1, l));

    let mut header = |expect: &str| -> Result<String> {
        match lines.next() {
            Some((n, l)) => l
                .strip_prefix(expect)
                .map(str::to_string)
                .ok_or_else(|| Error::parse(format!("line {n}"), format!("expected `{expect}...`"))),
            None => Err(Error::parse("end of input", format!("missing `{expect}` header"))),
        }
    };
    let magic = header(MAGIC)?;
    if !magic.is_empty() {
        return Err(Error::parse("line 1", "unsupported format version"));
    }
    let variant: Variant = header("#variant ")?
        .parse()
        .map_err(|e: Error| Error::parse("line 2", e.to_string()))?;
    let mediated = match header("#mediated ")?.as_str() {
        "true" => true,
        "false" => false,
        other => return Err(Error::parse("line 3", format!("bad #mediated value {other:?}"))),
    };

    let mut entity_types = BTreeMap::new();
    let mut triples = BTreeSet::new();
    let mut qlinks = BTreeSet::new();

    for (n, line) in lines {
        let at = || format!("line {n}");
        let wrap = |e: Error| Error::parse(at(), e.to_string());
        if line.starts_with("#generator") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let entity = |s: &str| EntityId::new(s).map_err(wrap);
        let relation = |s: &str| s.parse::<Relation>().map_err(wrap);
        match fields[0] {
            "E" => {
                if fields.len() != 3 {
                    return Err(Error::parse(at(), "E record needs 2 fields"));
                }
                let e = entity(fields[1])?;
                let ty = entity(fields[2])?;
                if let Some(prev) = entity_types.insert(e.clone(), ty.clone()) {
                    if prev != ty {
                        return Err(Error::parse(at(), format!("{e} has two types")));
                    }
                }
            }
            "T" => {
                if fields.len() != 4 {
                    return Err(Error::parse(at(), "T record needs 3 fields"));
                }
                let t = Triple::new(entity(fields[1])?, relation(fields[2])?, entity(fields[3])?)
                    .map_err(wrap)?;
                triples.insert(t);
            }
            "Q" => {
                if fields.len() < 4 {
                    return Err(Error::parse(at(), "Q record needs at least 3 fields"));
                }
                let rest = &fields[4..];
                if !rest.len().is_multiple_of(2) {
                    return Err(Error::parse(at(), "odd number of qualifier fields"));
                }
                let mut pairs = Vec::with_capacity(rest.len() / 2);
                for pair in rest.chunks(2) {
                    pairs.push(Qualifier::new(relation(pair[0])?, entity(pair[1])?).map_err(wrap)?);
                }
                let l = QualifiedLink::new(
                    entity(fields[1])?,
                    relation(fields[2])?,
                    entity(fields[3])?,
                    Qualifiers::new(pairs),
                )
                .map_err(wrap)?;
                qlinks.insert(l);
            }
            tag => return Err(Error::parse(at(), format!("unknown record tag {tag:?}"))),
        }
    }
    Ok(Parts {
        variant,
        mediated,
        entity_types,
        triples,
        qlinks,
    })
}
