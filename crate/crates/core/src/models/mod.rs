//! Embedding models and the index-level view of a graph they consume.

pub mod base;
pub mod hyper;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Vocab};

pub use base::{init_model, BaseModel, BaseModelKind, Norm};
pub use hyper::{Composition, EdgeList, EncoderState, HyperConfig, HyperModel, IndexQuery};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    TransE,
    DistMult,
    HolE,
    ComplEx,
    Hyper,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::TransE,
        ModelKind::DistMult,
        ModelKind::HolE,
        ModelKind::ComplEx,
        ModelKind::Hyper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::HolE => "hole",
            ModelKind::ComplEx => "complex",
            ModelKind::Hyper => "hyper",
        }
    }

    pub fn base(self) -> Option<BaseModelKind> {
        match self {
            ModelKind::TransE => Some(BaseModelKind::TransE),
            ModelKind::DistMult => Some(BaseModelKind::DistMult),
            ModelKind::HolE => Some(BaseModelKind::HolE),
            ModelKind::ComplEx => Some(BaseModelKind::ComplEx),
            ModelKind::Hyper => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        ModelKind::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("unknown model kind code {code}")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown model {s:?} (expected transe, distmult, hole, complex or hyper)"
                ))
            })
    }
}

/// Model selection and shape. `norm` applies to TransE only; `hyper` to the
/// mediator-aware model only (its `dim` is taken from here).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub norm: Norm,
    pub hyper: HyperConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Hyper,
            dim: 32,
            norm: Norm::L1,
            hyper: HyperConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn hyper_config(&self) -> HyperConfig {
        HyperConfig {
            dim: self.dim,
            ..self.hyper
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("model.dim must be positive".into()));
        }
        if self.kind == ModelKind::Hyper {
            self.hyper_config().validate()?;
        }
        Ok(())
    }

    pub fn init(&self, n_entities: usize, n_relations: usize, seed: u64) -> Result<Model> {
        self.validate()?;
        Ok(match self.kind.base() {
            Some(kind) => Model::Base(init_model(kind, n_entities, n_relations, self.dim, seed)?.with_norm(self.norm)),
            None => Model::Hyper(HyperModel::init(n_entities, n_relations, self.hyper_config(), seed)?),
        })
    }

    pub fn restore(&self, params: crate::numeric::ParamStore) -> Result<Model> {
        self.validate()?;
        Ok(match self.kind.base() {
            Some(kind) => Model::Base(BaseModel::from_params(kind, self.dim, self.norm, params)?),
            None => Model::Hyper(HyperModel::from_params(self.hyper_config(), params)?),
        })
    }
}

/// A qualified link or plain triple in vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexLink {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
    /// Sorted `(relation, entity)` qualifier pairs.
    pub quals: Vec<(usize, usize)>,
}

impl IndexLink {
    pub fn query(&self) -> IndexQuery {
        IndexQuery::new(self.head, self.relation, self.quals.clone())
    }
}

/// Every qualified link and plain triple of `kg`, in canonical order.
pub fn index_links(kg: &KnowledgeGraph, vocab: &Vocab) -> Result<Vec<IndexLink>> {
    let mut out = Vec::with_capacity(kg.qlinks().len() + kg.triples().len());
    for l in kg.qlinks() {
        let mut quals = l
            .qualifiers
            .iter()
            .map(|q| Ok((vocab.relation(&q.relation)?, vocab.entity(&q.entity)?)))
            .collect::<Result<Vec<_>>>()?;
        quals.sort_unstable();
        out.push(IndexLink {
            head: vocab.entity(&l.head)?,
            relation: vocab.relation(&l.relation)?,
            tail: vocab.entity(&l.tail)?,
            quals,
        });
    }
    for t in kg.triples() {
        out.push(IndexLink {
            head: vocab.entity(&t.head)?,
            relation: vocab.relation(&t.relation)?,
            tail: vocab.entity(&t.tail)?,
            quals: Vec::new(),
        });
    }
    Ok(out)
}

pub fn edge_list(links: &[IndexLink]) -> EdgeList {
    let mut g = EdgeList::default();
    for l in links {
        g.push(l.head, l.relation, l.tail, l.quals.clone());
    }
    g
}

/// A trained model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Base(BaseModel),
    Hyper(HyperModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Base(m) => match m.kind() {
                BaseModelKind::TransE => ModelKind::TransE,
                BaseModelKind::DistMult => ModelKind::DistMult,
                BaseModelKind::HolE => ModelKind::HolE,
                BaseModelKind::ComplEx => ModelKind::ComplEx,
            },
            Model::Hyper(_) => ModelKind::Hyper,
        }
    }

    pub fn params(&self) -> &crate::numeric::ParamStore {
        match self {
            Model::Base(m) => m.params(),
            Model::Hyper(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut crate::numeric::ParamStore {
        match self {
            Model::Base(m) => m.params_mut(),
            Model::Hyper(m) => m.params_mut(),
        }
    }

    pub fn n_entities(&self) -> usize {
        match self {
            Model::Base(m) => m.n_entities(),
            Model::Hyper(m) => m.n_entities(),
        }
    }

    /// Frozen scorer for ranking. The hyper model is encoded once over
    /// `graph`; baselines ignore it.
    pub fn scorer(&self, graph: &EdgeList) -> Result<Scorer<'_>> {
        Ok(match self {
            Model::Base(m) => Scorer::Base(m),
            Model::Hyper(m) => Scorer::Hyper {
                model: m,
                state: m.encode(graph)?,
            },
        })
    }
}

/// Scores every candidate tail of a query. Higher is more plausible.
pub trait TailScorer: Sync {
    fn n_entities(&self) -> usize;
    fn score_tails(&self, query: &IndexQuery) -> Result<Vec<f64>>;
}

pub enum Scorer<'a> {
    Base(&'a BaseModel),
    Hyper {
        model: &'a HyperModel,
        state: EncoderState,
    },
}

impl TailScorer for Scorer<'_> {
    fn n_entities(&self) -> usize {
        match self {
            Scorer::Base(m) => m.n_entities(),
            Scorer::Hyper { state, .. } => state.entity.rows(),
        }
    }

    /// Baselines drop the qualifiers. The hyper model returns decoder
    /// logits: the sigmoid is monotone, so ranks are the same as for the
    /// probabilities, and logits do not saturate into ties.
    fn score_tails(&self, query: &IndexQuery) -> Result<Vec<f64>> {
        match self {
            Scorer::Base(m) => m.score_tails(query.head, query.relation),
            Scorer::Hyper { model, state } => Ok(model
                .decode_logits(state, std::slice::from_ref(query))?
                .into_vec()),
        }
    }
}
