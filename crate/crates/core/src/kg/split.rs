use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, QualifiedLink, Relation};
use crate::numeric::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, valid, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Validation(format!("split ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Train/validation/test graphs over one vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct KgSplit {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
}

impl KgSplit {
    /// Every link of every part: the filter universe for ranking.
    pub fn all_qlinks(&self) -> impl Iterator<Item = &QualifiedLink> {
        self.train
            .qlinks()
            .iter()
            .chain(self.valid.qlinks())
            .chain(self.test.qlinks())
    }

    /// Checks disjointness and that valid/test vocabulary is covered by train.
    pub fn check(&self) -> Result<()> {
        for (name, part) in [("valid", &self.valid), ("test", &self.test)] {
            if let Some(l) = part.qlinks().iter().find(|l| self.train.qlinks().contains(l)) {
                return Err(Error::Split(format!(
                    "{} {} {} is in both train and {name}",
                    l.head, l.relation, l.tail
                )));
            }
        }
        if let Some(l) = self.valid.qlinks().iter().find(|l| self.test.qlinks().contains(l)) {
            return Err(Error::Split(format!(
                "{} {} {} is in both valid and test",
                l.head, l.relation, l.tail
            )));
        }
        let cov = Coverage::of(&self.train);
        for (name, part) in [("valid", &self.valid), ("test", &self.test)] {
            if let Some(l) = part.qlinks().iter().find(|l| !cov.covers(l)) {
                return Err(Error::Split(format!(
                    "{name} link {} {} {} uses vocabulary absent from train",
                    l.head, l.relation, l.tail
                )));
            }
        }
        Ok(())
    }
}

/// Number of links assigned to (train, valid, test) before coverage repair.
pub fn partition_sizes(n: usize, ratios: &SplitRatios) -> (usize, usize, usize) {
    let valid = ((n as f64) * ratios.valid).round() as usize;
    let test = ((n as f64) * ratios.test).round() as usize;
    let valid = valid.min(n);
    let test = test.min(n - valid);
    (n - valid - test, valid, test)
}

struct Coverage<'a> {
    entities: HashSet<&'a EntityId>,
    relations: HashSet<&'a Relation>,
}

impl<'a> Coverage<'a> {
    fn of(kg: &'a KnowledgeGraph) -> Self {
        let mut c = Coverage {
            entities: HashSet::new(),
            relations: HashSet::new(),
        };
        for l in kg.qlinks() {
            c.add(l);
        }
        for t in kg.triples() {
            c.entities.insert(&t.head);
            c.entities.insert(&t.tail);
            c.relations.insert(&t.relation);
        }
        c
    }

    fn add(&mut self, l: &'a QualifiedLink) {
        self.entities.extend(l.entities());
        self.relations.extend(l.relations());
    }

    fn covers(&self, l: &QualifiedLink) -> bool {
        l.entities().all(|e| self.entities.contains(e))
            && l.relations().all(|r| self.relations.contains(r))
    }
}

/// Seeded random partition of the qualified links, followed by a repair pass
/// that moves any valid/test link with vocabulary unseen in train into train.
/// Plain triples always go to train.
pub fn split_kg(kg: &KnowledgeGraph, ratios: &SplitRatios, seed: u64) -> Result<KgSplit> {
    ratios.validate()?;
    let mut links: Vec<&QualifiedLink> = kg.qlinks().iter().collect();
    if links.len() < 3 {
        return Err(Error::Split(format!(
            "{} links cannot be split three ways",
            links.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    links.shuffle(&mut rng);

    let (n_train, n_valid, _) = partition_sizes(links.len(), ratios);
    let mut train: Vec<&QualifiedLink> = links[..n_train].to_vec();
    let mut cov = Coverage {
        entities: HashSet::new(),
        relations: HashSet::new(),
    };
    for l in &train {
        cov.add(l);
    }
    for t in kg.triples() {
        cov.entities.insert(&t.head);
        cov.entities.insert(&t.tail);
        cov.relations.insert(&t.relation);
    }

    // Coverage only grows, so one ordered pass reaches the fixed point.
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for (i, l) in links[n_train..].iter().enumerate() {
        if !cov.covers(l) {
            cov.add(l);
            train.push(l);
        } else if i < n_valid {
            valid.push(*l);
        } else {
            test.push(*l);
        }
    }
    if valid.is_empty() || test.is_empty() {
        return Err(Error::Split(format!(
            "graph too small: after coverage repair valid has {} and test has {} links",
            valid.len(),
            test.len()
        )));
    }

    let part = |ls: Vec<&QualifiedLink>, with_triples: bool| {
        let qlinks: BTreeSet<QualifiedLink> = ls.into_iter().cloned().collect();
        let triples = if with_triples {
            kg.triples().clone()
        } else {
            BTreeSet::new()
        };
        KnowledgeGraph::fragment(
            kg.variant(),
            kg.mediated(),
            kg.entity_types().clone(),
            triples,
            qlinks,
        )
    };
    let split = KgSplit {
        train: part(train, true)?,
        valid: part(valid, false)?,
        test: part(test, false)?,
    };
    split.check()?;
    Ok(split)
}
