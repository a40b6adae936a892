//! Optimization loop with validation-based early stopping.

pub mod checkpoint;
pub mod loss;
pub mod sampling;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, FilterIndex, IndexedQuery};
use crate::kg::{KgSplit, Relation, Vocab};
use crate::models::{edge_list, index_links, EdgeList, IndexLink, IndexQuery, Model};
use crate::numeric::{adam_step, rng, AdamConfig, OptimState, ParamStore};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use loss::margin_loss_and_grad;
pub use sampling::{sample_negatives, Corruption, NegativeSampler, Side};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Negatives per positive (baselines).
    pub negatives: usize,
    /// Hinge margin (baselines).
    pub margin: f64,
    /// Label smoothing of the 1-vs-all targets (hyper model).
    pub label_smoothing: f64,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: 0.01,
            negatives: 4,
            margin: 1.0,
            label_smoothing: 0.1,
            patience: 5,
            eval_every: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("train.{what} must be positive")));
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr");
        }
        if self.negatives == 0 {
            return bad("negatives");
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad("margin");
        }
        if self.patience == 0 {
            return bad("patience");
        }
        if self.eval_every == 0 {
            return bad("eval_every");
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return Err(Error::Validation(format!(
                "train.label_smoothing {} outside [0, 0.5)",
                self.label_smoothing
            )));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }
}

/// A split resolved against one vocabulary.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub vocab: Vocab,
    pub train: Vec<IndexLink>,
    pub valid: Vec<IndexLink>,
    pub test: Vec<IndexLink>,
    /// Message-passing graph: every training link.
    pub graph: EdgeList,
}

impl TrainData {
    pub fn from_split(split: &KgSplit) -> Result<Self> {
        Self::with_vocab(split, Vocab::from_kg(&split.train))
    }

    pub fn with_vocab(split: &KgSplit, vocab: Vocab) -> Result<Self> {
        let train = index_links(&split.train, &vocab)?;
        let valid = index_links(&split.valid, &vocab)?;
        let test = index_links(&split.test, &vocab)?;
        Ok(TrainData {
            graph: edge_list(&train),
            vocab,
            train,
            valid,
            test,
        })
    }

    /// Filter over every known link; queries of any part are ranked
    /// against it.
    pub fn filter(&self) -> FilterIndex {
        let mut known = self.train.clone();
        known.extend(self.valid.iter().cloned());
        FilterIndex::new(&known, &self.test)
    }

    /// Validation queries: the `causesType`/`causedByType` links of the
    /// valid part, or all of its links when it has none.
    pub fn validation_queries(&self) -> Vec<IndexedQuery> {
        let typed: Vec<usize> = [Relation::CausesType, Relation::CausedByType]
            .iter()
            .filter_map(|r| self.vocab.relation(r).ok())
            .collect();
        let mut qs: Vec<IndexedQuery> = self
            .valid
            .iter()
            .filter(|l| typed.contains(&l.relation))
            .map(IndexedQuery::from_link)
            .collect();
        if qs.is_empty() {
            qs = self.valid.iter().map(IndexedQuery::from_link).collect();
        }
        qs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_mrr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation round (the initial model when no
    /// round ran).
    pub model: Model,
    pub optim: OptimState,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mrr: Option<f64>,
}

/// Validation MRR of `model` over `queries`, standard filter, all
/// candidates.
pub fn validation_mrr(
    model: &Model,
    graph: &EdgeList,
    queries: &[IndexedQuery],
    filter: &FilterIndex,
) -> Result<f64> {
    let scorer = model.scorer(graph)?;
    Ok(evaluate(&scorer, "validation", queries, filter, &EvalConfig::default(), None)?.mrr)
}

/// Hyper-model training examples: one per distinct `(head, relation, Q)`
/// with every true training tail.
pub fn group_queries(links: &[IndexLink]) -> (Vec<IndexQuery>, Vec<Vec<usize>>) {
    let mut groups: BTreeMap<IndexQuery, Vec<usize>> = BTreeMap::new();
    for l in links {
        groups.entry(l.query()).or_default().push(l.tail);
    }
    groups
        .into_iter()
        .map(|(q, mut ts)| {
            ts.sort_unstable();
            ts.dedup();
            (q, ts)
        })
        .unzip()
}

/// Baseline positives: training links with qualifiers stripped, deduplicated.
pub fn plain_links(links: &[IndexLink]) -> Vec<IndexLink> {
    let mut out: Vec<IndexLink> = links
        .iter()
        .map(|l| IndexLink {
            quals: Vec::new(),
            ..l.clone()
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

enum Examples {
    Base {
        positives: Vec<IndexLink>,
        sampler: NegativeSampler,
    },
    Hyper {
        queries: Vec<IndexQuery>,
        targets: Vec<Vec<usize>>,
    },
}

impl Examples {
    fn len(&self) -> usize {
        match self {
            Examples::Base { positives, .. } => positives.len(),
            Examples::Hyper { queries, .. } => queries.len(),
        }
    }
}

fn batch_loss(
    model: &Model,
    params: &ParamStore,
    examples: &Examples,
    batch: &[usize],
    data: &TrainData,
    cfg: &TrainConfig,
    rng: &mut rng::Rng,
) -> Result<(f64, ParamStore)> {
    match (model, examples) {
        (Model::Base(m), Examples::Base { positives, sampler }) => {
            let mut pairs = Vec::with_capacity(batch.len() * cfg.negatives);
            for &i in batch {
                let pos = &positives[i];
                for c in sampler.sample(pos, cfg.negatives, rng) {
                    pairs.push((pos.clone(), c.link));
                }
            }
            margin_loss_and_grad(m, params, &pairs, cfg.margin)
        }
        (Model::Hyper(m), Examples::Hyper { queries, targets }) => {
            let qs: Vec<IndexQuery> = batch.iter().map(|&i| queries[i].clone()).collect();
            let ts: Vec<Vec<usize>> = batch.iter().map(|&i| targets[i].clone()).collect();
            m.loss_and_grad(params, &data.graph, &qs, &ts, cfg.label_smoothing)
        }
        _ => unreachable!("examples are built for the model family"),
    }
}

/// Mean training loss over all examples under the current parameters
/// (no update).
pub fn full_loss(model: &Model, data: &TrainData, cfg: &TrainConfig) -> Result<f64> {
    let examples = build_examples(model, data)?;
    let mut rng = rng::seeded(rng::derive(cfg.seed, 0xfeed));
    let idx: Vec<usize> = (0..examples.len()).collect();
    let mut total = 0.0;
    for batch in idx.chunks(cfg.batch_size) {
        let (l, _) = batch_loss(model, model.params(), &examples, batch, data, cfg, &mut rng)?;
        total += l * batch.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

fn build_examples(model: &Model, data: &TrainData) -> Result<Examples> {
    if data.train.is_empty() {
        return Err(Error::Validation("no training links".into()));
    }
    Ok(match model {
        Model::Base(_) => {
            let positives = plain_links(&data.train);
            let sampler = NegativeSampler::new(data.vocab.n_entities(), &positives)?;
            Examples::Base { positives, sampler }
        }
        Model::Hyper(_) => {
            let (queries, targets) = group_queries(&data.train);
            Examples::Hyper { queries, targets }
        }
    })
}

/// Trains `model` on `data.train`. Every `eval_every` epochs the validation
/// MRR is computed; the best parameters are kept and training stops after
/// `patience` rounds without improvement.
pub fn train(model: Model, data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.n_entities() != data.vocab.n_entities() {
        return Err(Error::Dimension(format!(
            "model has {} entity rows, vocabulary has {}",
            model.n_entities(),
            data.vocab.n_entities()
        )));
    }
    let mut optim = OptimState::new(model.params());
    let mut history = Vec::new();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            optim,
            history,
            best_epoch: 0,
            best_val_mrr: None,
        });
    }

    let examples = build_examples(&model, data)?;
    let queries = data.validation_queries();
    let filter = data.filter();
    let adam = cfg.adam();
    let mut rng = rng::seeded(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let mut current = model;
    let mut best: Option<(Model, OptimState, usize, f64)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (l, grads) =
                batch_loss(&current, current.params(), &examples, batch, data, cfg, &mut rng)?;
            adam_step(current.params_mut(), &grads, &mut optim, &adam)?;
            total += l * batch.len() as f64;
        }
        let loss = total / examples.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch} loss {loss}")));
        }

        let mut record = EpochRecord {
            epoch,
            loss,
            val_mrr: None,
        };
        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let mrr = validation_mrr(&current, &data.graph, &queries, &filter)?;
            record.val_mrr = Some(mrr);
            if best.as_ref().is_none_or(|b| mrr > b.3) {
                best = Some((current.clone(), optim.clone(), epoch, mrr));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        history.push(record);
        if stale >= cfg.patience {
            break;
        }
    }

    let (model, optim, best_epoch, mrr) = best.expect("the last epoch is always evaluated");
    Ok(TrainOutcome {
        model,
        optim,
        history,
        best_epoch,
        best_val_mrr: Some(mrr),
    })
}
