//! Causal prediction and explanation queries, filtered ranking and the
//! MRR / Hits@K summary.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, Qualifiers, Relation, Vocab};
use crate::models::{IndexLink, IndexQuery, TailScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// `(cause, causesType, ?)`: rank effect types.
    Prediction,
    /// `(effect, causedByType, ?)`: rank cause types.
    Explanation,
}

impl Task {
    pub fn relation(self) -> Relation {
        match self {
            Task::Prediction => Relation::CausesType,
            Task::Explanation => Relation::CausedByType,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Prediction => "prediction",
            Task::Explanation => "explanation",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prediction" => Ok(Task::Prediction),
            "explanation" => Ok(Task::Explanation),
            _ => Err(Error::Validation(format!(
                "unknown task {s:?} (expected prediction or explanation)"
            ))),
        }
    }
}

/// Which known links are removed from the candidate list before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Train, valid and test links, except the gold link itself.
    #[default]
    Standard,
    /// Train and valid links only.
    PaperLiteral,
}

impl FilterMode {
    pub fn name(self) -> &'static str {
        match self {
            FilterMode::Standard => "standard",
            FilterMode::PaperLiteral => "paper-literal",
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(FilterMode::Standard),
            "paper-literal" => Ok(FilterMode::PaperLiteral),
            _ => Err(Error::Validation(format!(
                "unknown filter mode {s:?} (expected standard or paper-literal)"
            ))),
        }
    }
}

/// Candidate pool for the gold tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidates {
    #[default]
    All,
    /// Type entities only.
    Types,
}

impl Candidates {
    pub fn name(self) -> &'static str {
        match self {
            Candidates::All => "all",
            Candidates::Types => "types",
        }
    }
}

impl fmt::Display for Candidates {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Candidates {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Candidates::All),
            "types" => Ok(Candidates::Types),
            _ => Err(Error::Validation(format!(
                "unknown candidate pool {s:?} (expected all or types)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub filter: FilterMode,
    pub candidates: Candidates,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Query {
    pub task: Task,
    pub anchor: EntityId,
    pub relation: Relation,
    pub qualifiers: Qualifiers,
    pub gold: EntityId,
}

/// One query per `causesType` (prediction) or `causedByType` (explanation)
/// link of `kg`, sorted.
pub fn build_queries(kg: &KnowledgeGraph, task: Task) -> Vec<Query> {
    let rel = task.relation();
    let mut out: Vec<Query> = kg
        .qlinks()
        .iter()
        .filter(|l| l.relation == rel)
        .map(|l| Query {
            task,
            anchor: l.head.clone(),
            relation: l.relation.clone(),
            qualifiers: l.qualifiers.clone(),
            gold: l.tail.clone(),
        })
        .collect();
    out.sort();
    out
}

/// Query resolved against a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexedQuery {
    pub query: IndexQuery,
    pub gold: usize,
}

impl IndexedQuery {
    pub fn resolve(q: &Query, vocab: &Vocab) -> Result<Self> {
        let quals = q
            .qualifiers
            .iter()
            .map(|p| Ok((vocab.relation(&p.relation)?, vocab.entity(&p.entity)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(IndexedQuery {
            query: IndexQuery::new(vocab.entity(&q.anchor)?, vocab.relation(&q.relation)?, quals),
            gold: vocab.entity(&q.gold)?,
        })
    }

    pub fn from_link(l: &IndexLink) -> Self {
        IndexedQuery {
            query: l.query(),
            gold: l.tail,
        }
    }
}

/// True tails per `(anchor, relation, qualifiers)` key, split by origin so
/// that both filter modes can be answered from one index.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    known: HashMap<IndexQuery, HashSet<usize>>,
    test: HashMap<IndexQuery, HashSet<usize>>,
}

impl FilterIndex {
    /// `known` holds train and valid links; `test` holds test links.
    pub fn new(known: &[IndexLink], test: &[IndexLink]) -> Self {
        let mut idx = FilterIndex::default();
        for l in known {
            idx.known.entry(l.query()).or_default().insert(l.tail);
        }
        for l in test {
            idx.test.entry(l.query()).or_default().insert(l.tail);
        }
        idx
    }

    /// Candidates removed before ranking `gold` for `query`.
    pub fn excluded(&self, query: &IndexQuery, gold: usize, mode: FilterMode) -> Result<HashSet<usize>> {
        let known = self.known.get(query);
        let mut out: HashSet<usize> = known.cloned().unwrap_or_default();
        match mode {
            FilterMode::Standard => {
                if let Some(t) = self.test.get(query) {
                    out.extend(t);
                }
                out.remove(&gold);
            }
            FilterMode::PaperLiteral => {
                if out.contains(&gold) {
                    return Err(Error::Eval(format!(
                        "gold tail {gold} of query {query:?} is a train/valid link and would be filtered out"
                    )));
                }
            }
        }
        Ok(out)
    }
}

/// Rank of `gold` among the non-excluded candidates of `pool` (all
/// entities when `None`). Ties count as the mean of the optimistic and
/// pessimistic rank, rounded half up.
pub fn rank_from_scores(
    scores: &[f64],
    gold: usize,
    excluded: &HashSet<usize>,
    pool: Option<&[bool]>,
) -> Result<usize> {
    if gold >= scores.len() {
        return Err(Error::Eval(format!("gold index {gold} outside {} candidates", scores.len())));
    }
    if excluded.contains(&gold) {
        return Err(Error::Eval(format!("gold candidate {gold} is filtered out")));
    }
    if pool.is_some_and(|p| !p[gold]) {
        return Err(Error::Eval(format!("gold candidate {gold} is outside the candidate pool")));
    }
    let sg = scores[gold];
    if !sg.is_finite() {
        return Err(Error::NonFinite(format!("gold score {sg}")));
    }
    let mut higher = 0usize;
    let mut tied = 0usize;
    for (c, &s) in scores.iter().enumerate() {
        if c == gold || excluded.contains(&c) || pool.is_some_and(|p| !p[c]) {
            continue;
        }
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("candidate {c} score {s}")));
        }
        if s > sg {
            higher += 1;
        } else if s == sg {
            tied += 1;
        }
    }
    let optimistic = higher + 1;
    let pessimistic = higher + tied + 1;
    Ok((optimistic + pessimistic).div_ceil(2))
}

pub fn filtered_rank(
    scorer: &dyn TailScorer,
    query: &IndexedQuery,
    filter: &FilterIndex,
    mode: FilterMode,
    pool: Option<&[bool]>,
) -> Result<usize> {
    let scores = scorer.score_tails(&query.query)?;
    let excluded = filter.excluded(&query.query, query.gold, mode)?;
    rank_from_scores(&scores, query.gold, &excluded, pool)
}

/// Type-entity mask over `vocab`, for [`Candidates::Types`].
pub fn type_pool(kg: &KnowledgeGraph, vocab: &Vocab) -> Vec<bool> {
    let types = kg.type_entities();
    vocab.entities().iter().map(|e| types.contains(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hits {
    #[serde(rename = "1")]
    pub at1: f64,
    #[serde(rename = "3")]
    pub at3: f64,
    #[serde(rename = "10")]
    pub at10: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits: Hits,
}

pub fn metrics_from_ranks(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::Eval("no queries to evaluate".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Eval("ranks start at 1".into()));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|r| **r <= k).count() as f64 / n;
    Ok(Metrics {
        mrr: ranks.iter().map(|r| 1.0 / *r as f64).sum::<f64>() / n,
        hits: Hits {
            at1: hits(1),
            at3: hits(3),
            at10: hits(10),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub mrr: f64,
    pub hits: Hits,
    pub n_queries: usize,
    pub filter_mode: FilterMode,
    pub candidates: Candidates,
    pub ranks: Vec<usize>,
}

/// Ranks every query against a frozen scorer, in parallel, and summarizes.
pub fn evaluate(
    scorer: &dyn TailScorer,
    task: &str,
    queries: &[IndexedQuery],
    filter: &FilterIndex,
    config: &EvalConfig,
    pool: Option<&[bool]>,
) -> Result<MetricsReport> {
    if queries.is_empty() {
        return Err(Error::Eval(format!("{task}: empty query set")));
    }
    let pool = match config.candidates {
        Candidates::All => None,
        Candidates::Types => Some(pool.ok_or_else(|| {
            Error::Eval("type-only candidates requested without a type pool".into())
        })?),
    };
    let ranks = queries
        .par_iter()
        .map(|q| filtered_rank(scorer, q, filter, config.filter, pool))
        .collect::<Result<Vec<_>>>()?;
    let m = metrics_from_ranks(&ranks)?;
    Ok(MetricsReport {
        task: task.to_string(),
        mrr: m.mrr,
        hits: m.hits,
        n_queries: ranks.len(),
        filter_mode: config.filter,
        candidates: config.candidates,
        ranks,
    })
}
