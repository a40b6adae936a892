//! Mediator-aware model: a qualifier-conditioned message-passing encoder
//! over the training graph and a linearized-query decoder.
//!
//! Encoder layer, for each node `v`:
//!
//! ```text
//! gamma(r, Q) = alpha * r + (1 - alpha) * W_q * sum_{(qr, qe) in Q} phi(qr, qe)   (Q non-empty)
//!             = r                                                               (Q empty)
//! h_v' = tanh( W_in  * mean_{(u, r, Q) -> v} phi(h_u, gamma(r, Q))
//!            + W_out * mean_{v -> (u, r, Q)} phi(h_u, gamma(r, Q))
//!            + W_self * h_v )
//! r'   = W_rel * r
//! ```
//!
//! Decoder: the query `(h, r, Q)` becomes the token sequence
//! `[h, gamma(r, Q), qr_1, qe_1, ...]`, optionally mixed by one residual
//! self-attention block, mean-pooled, passed through `tanh(W x + b)` and
//! scored against every entity row. Probabilities are `sigmoid` of those
//! scores.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::sigmoid;
use crate::numeric::{rng, ParamStore, Tape, Tensor, Var};

pub const ENTITY: &str = "entity";
pub const RELATION: &str = "relation";
pub const W_Q: &str = "w_q";
pub const W_REL: &str = "w_rel";
pub const DEC_W: &str = "decoder.w";
pub const DEC_B: &str = "decoder.b";
pub const ATTN_Q: &str = "decoder.attn_q";
pub const ATTN_K: &str = "decoder.attn_k";
pub const ATTN_V: &str = "decoder.attn_v";

fn layer_name(layer: usize, part: &str) -> String {
    format!("layer{layer}.{part}")
}

/// Composition used for both qualifier pairs and relation messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    /// Element-wise product.
    Mul,
    /// Element-wise difference `a - b`.
    Sub,
    /// Complex rotation; rows hold `[re | im]` halves.
    Rotate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperConfig {
    pub dim: usize,
    pub layers: usize,
    pub alpha: f64,
    pub composition: Composition,
    pub attention: bool,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            dim: 32,
            layers: 1,
            alpha: 0.8,
            composition: Composition::Mul,
            attention: false,
        }
    }
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("hyper.dim must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("hyper.alpha {} outside [0, 1]", self.alpha)));
        }
        if self.composition == Composition::Rotate && !self.dim.is_multiple_of(2) {
            return Err(Error::Validation("rotation composition needs an even dim".into()));
        }
        Ok(())
    }
}

/// Training graph in index form. Edge `i` runs `src[i] -> dst[i]` under
/// relation `rel[i]` with qualifier pairs `quals[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeList {
    pub src: Vec<usize>,
    pub rel: Vec<usize>,
    pub dst: Vec<usize>,
    pub quals: Vec<Vec<(usize, usize)>>,
}

impl EdgeList {
    pub fn push(&mut self, src: usize, rel: usize, dst: usize, mut quals: Vec<(usize, usize)>) {
        quals.sort_unstable();
        self.src.push(src);
        self.rel.push(rel);
        self.dst.push(dst);
        self.quals.push(quals);
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Query in index form: anchor entity, relation, qualifier pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexQuery {
    pub head: usize,
    pub relation: usize,
    pub quals: Vec<(usize, usize)>,
}

impl IndexQuery {
    pub fn new(head: usize, relation: usize, mut quals: Vec<(usize, usize)>) -> Self {
        quals.sort_unstable();
        IndexQuery {
            head,
            relation,
            quals,
        }
    }
}

/// One position of a linearized query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Head(usize),
    /// The relation merged with all qualifiers.
    Merged(usize),
    QualRelation(usize),
    QualEntity(usize),
    Pad,
}

/// `[head, merged relation, (qualifier relation, qualifier entity)*]`,
/// right-padded to a fixed width; `mask` marks the real positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearizedQuery {
    pub tokens: Vec<Token>,
    pub mask: Vec<bool>,
}

impl LinearizedQuery {
    pub fn new(q: &IndexQuery, width: usize) -> Self {
        let mut tokens = vec![Token::Head(q.head), Token::Merged(q.relation)];
        for &(r, e) in &q.quals {
            tokens.push(Token::QualRelation(r));
            tokens.push(Token::QualEntity(e));
        }
        let real = tokens.len();
        let width = width.max(real);
        tokens.resize(width, Token::Pad);
        let mask = (0..width).map(|i| i < real).collect();
        LinearizedQuery { tokens, mask }
    }

    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Entity and relation states after encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub entity: Tensor,
    pub relation: Tensor,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperModel {
    config: HyperConfig,
    params: ParamStore,
}

/// Tape handles for every parameter.
struct Vars(BTreeMap<String, Var>);

impl Vars {
    fn get(&self, name: &str) -> Var {
        self.0[name]
    }
}

impl HyperModel {
    /// Embedding tables use the same uniform `6/sqrt(dim)` rule as the
    /// baselines; square matrices use a Glorot-uniform bound.
    pub fn init(n_entities: usize, n_relations: usize, config: HyperConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if n_entities == 0 || n_relations == 0 {
            return Err(Error::Validation("model vocabulary must be non-empty".into()));
        }
        let d = config.dim;
        let mut rng = rng::seeded(seed);
        let mut uniform = |rows: usize, cols: usize, bound: f64| {
            let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
            Tensor::from_vec(rows, cols, data).expect("init shape")
        };
        let emb = 6.0 / (d as f64).sqrt();
        let glorot = (6.0 / (2.0 * d as f64)).sqrt();

        let mut params = ParamStore::new();
        params.insert(ENTITY, uniform(n_entities, d, emb))?;
        params.insert(RELATION, uniform(n_relations, d, emb))?;
        params.insert(W_Q, uniform(d, d, glorot))?;
        params.insert(W_REL, uniform(d, d, glorot))?;
        for l in 0..config.layers {
            for part in ["w_in", "w_out", "w_self"] {
                params.insert(layer_name(l, part), uniform(d, d, glorot))?;
            }
        }
        params.insert(DEC_W, uniform(d, d, glorot))?;
        params.insert(DEC_B, Tensor::zeros(1, d))?;
        if config.attention {
            for name in [ATTN_Q, ATTN_K, ATTN_V] {
                params.insert(name, uniform(d, d, glorot))?;
            }
        }
        Ok(HyperModel { config, params })
    }

    pub fn from_params(config: HyperConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let reference = HyperModel::init(
            params.get(ENTITY)?.rows(),
            params.get(RELATION)?.rows(),
            config,
            0,
        )?;
        if !reference.params.same_layout(&params) {
            return Err(Error::Dimension(
                "stored parameters do not match the hyper model layout".into(),
            ));
        }
        Ok(HyperModel { config, params })
    }

    pub fn config(&self) -> &HyperConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn n_entities(&self) -> usize {
        self.params.get(ENTITY).map(Tensor::rows).unwrap_or(0)
    }

    pub fn n_relations(&self) -> usize {
        self.params.get(RELATION).map(Tensor::rows).unwrap_or(0)
    }

    fn leaves(&self, tape: &mut Tape, params: &ParamStore) -> Vars {
        Vars(
            params
                .iter()
                .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
                .collect(),
        )
    }

    fn compose(&self, tape: &mut Tape, a: Var, b: Var) -> Var {
        match self.config.composition {
            Composition::Mul => tape.mul(a, b),
            Composition::Sub => tape.sub(a, b),
            Composition::Rotate => tape.complex_mul(a, b),
        }
    }

    /// Merged relation rows for a batch of `(relation, qualifiers)` items.
    /// Items without qualifiers get their relation row unchanged.
    fn merge_on_tape(
        &self,
        tape: &mut Tape,
        w_q: Var,
        ent: Var,
        rel: Var,
        items: &[(usize, &[(usize, usize)])],
    ) -> Var {
        let rel_rows = tape.gather(rel, items.iter().map(|(r, _)| *r).collect());
        let mut owner = Vec::new();
        let mut q_rel = Vec::new();
        let mut q_ent = Vec::new();
        for (i, (_, quals)) in items.iter().enumerate() {
            for &(qr, qe) in *quals {
                owner.push(i);
                q_rel.push(qr);
                q_ent.push(qe);
            }
        }
        if owner.is_empty() {
            return rel_rows;
        }
        let qr = tape.gather(rel, q_rel);
        let qe = tape.gather(ent, q_ent);
        let comp = self.compose(tape, qr, qe);
        let summed = tape.segment_sum(comp, owner, items.len());
        let hq = tape.matmul_nt(summed, w_q);
        let mask = items.iter().map(|(_, q)| !q.is_empty()).collect();
        tape.mix(rel_rows, hq, self.config.alpha, mask)
    }

    fn layer_on_tape(
        &self,
        tape: &mut Tape,
        vars: &Vars,
        layer: usize,
        ent: Var,
        rel: Var,
        graph: &EdgeList,
    ) -> (Var, Var) {
        let n = tape.value(ent).rows();
        let w_self = vars.get(&layer_name(layer, "w_self"));
        let mut pre = tape.matmul_nt(ent, w_self);
        if !graph.is_empty() {
            let items: Vec<(usize, &[(usize, usize)])> = graph
                .rel
                .iter()
                .zip(&graph.quals)
                .map(|(r, q)| (*r, q.as_slice()))
                .collect();
            let gamma = self.merge_on_tape(tape, vars.get(W_Q), ent, rel, &items);

            let h_src = tape.gather(ent, graph.src.clone());
            let msg_in = self.compose(tape, h_src, gamma);
            let agg_in = tape.segment_mean(msg_in, graph.dst.clone(), n);
            let in_term = tape.matmul_nt(agg_in, vars.get(&layer_name(layer, "w_in")));

            let h_dst = tape.gather(ent, graph.dst.clone());
            let msg_out = self.compose(tape, h_dst, gamma);
            let agg_out = tape.segment_mean(msg_out, graph.src.clone(), n);
            let out_term = tape.matmul_nt(agg_out, vars.get(&layer_name(layer, "w_out")));

            pre = tape.add(pre, in_term);
            pre = tape.add(pre, out_term);
        }
        let ent_next = tape.tanh(pre);
        let rel_next = tape.matmul_nt(rel, vars.get(W_REL));
        (ent_next, rel_next)
    }

    fn encode_on_tape(&self, tape: &mut Tape, vars: &Vars, graph: &EdgeList) -> (Var, Var) {
        let mut ent = vars.get(ENTITY);
        let mut rel = vars.get(RELATION);
        for l in 0..self.config.layers {
            (ent, rel) = self.layer_on_tape(tape, vars, l, ent, rel, graph);
        }
        (ent, rel)
    }

    /// Query logits (`batch × entities`) from encoded states.
    fn decode_on_tape(
        &self,
        tape: &mut Tape,
        vars: &Vars,
        ent: Var,
        rel: Var,
        queries: &[IndexQuery],
    ) -> Var {
        let b = queries.len();
        let items: Vec<(usize, &[(usize, usize)])> =
            queries.iter().map(|q| (q.relation, q.quals.as_slice())).collect();
        let merged = self.merge_on_tape(tape, vars.get(W_Q), ent, rel, &items);
        let heads = tape.gather(ent, queries.iter().map(|q| q.head).collect());

        // Token rows: heads (0..b), merged (b..2b), then qualifier relations
        // and entities. `order` lists rows query by query in linearized order.
        let width = queries.iter().map(|q| 2 + 2 * q.quals.len()).max().unwrap_or(2);
        let mut q_rel = Vec::new();
        let mut q_ent = Vec::new();
        let mut order = Vec::new();
        let mut seg = Vec::new();
        let mut ranges = Vec::with_capacity(b);
        let total_quals: usize = queries.iter().map(|q| q.quals.len()).sum();
        let mut next_qual = 0;
        for (i, q) in queries.iter().enumerate() {
            let lin = LinearizedQuery::new(q, width);
            let start = order.len();
            for (tok, real) in lin.tokens.iter().zip(&lin.mask) {
                if !real {
                    continue;
                }
                let row = match *tok {
                    Token::Head(_) => i,
                    Token::Merged(_) => b + i,
                    Token::QualRelation(r) => {
                        q_rel.push(r);
                        2 * b + next_qual
                    }
                    Token::QualEntity(e) => {
                        q_ent.push(e);
                        let row = 2 * b + total_quals + next_qual;
                        next_qual += 1;
                        row
                    }
                    Token::Pad => unreachable!("masked out"),
                };
                order.push(row);
                seg.push(i);
            }
            ranges.push((start, order.len()));
        }
        let mut parts = vec![heads, merged];
        if total_quals > 0 {
            parts.push(tape.gather(rel, q_rel));
            parts.push(tape.gather(ent, q_ent));
        }
        let stacked = tape.concat(parts);
        let mut tokens = tape.gather(stacked, order);
        if self.config.attention {
            tokens = tape.self_attention(
                tokens,
                ranges,
                vars.get(ATTN_Q),
                vars.get(ATTN_K),
                vars.get(ATTN_V),
            );
        }
        let pooled = tape.segment_mean(tokens, seg, b);
        let proj = tape.matmul_nt(pooled, vars.get(DEC_W));
        let biased = tape.add_row(proj, vars.get(DEC_B));
        let x = tape.tanh(biased);
        tape.matmul_nt(x, ent)
    }

    /// Runs the encoder over `graph`.
    pub fn encode(&self, graph: &EdgeList) -> Result<EncoderState> {
        self.check_graph(graph)?;
        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape, &self.params);
        let (ent, rel) = self.encode_on_tape(&mut tape, &vars, graph);
        Ok(EncoderState {
            entity: tape.value(ent).clone(),
            relation: tape.value(rel).clone(),
            layers: self.config.layers,
        })
    }

    /// Applies encoder layer `layer` once to `state`.
    pub fn message_passing_layer(
        &self,
        layer: usize,
        state: &EncoderState,
        graph: &EdgeList,
    ) -> Result<EncoderState> {
        if layer >= self.config.layers {
            return Err(Error::Validation(format!(
                "layer {layer} out of range ({} layers)",
                self.config.layers
            )));
        }
        self.check_indices(graph, state.entity.rows(), state.relation.rows())?;
        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape, &self.params);
        let ent = tape.leaf(state.entity.clone());
        let rel = tape.leaf(state.relation.clone());
        let (e2, r2) = self.layer_on_tape(&mut tape, &vars, layer, ent, rel, graph);
        Ok(EncoderState {
            entity: tape.value(e2).clone(),
            relation: tape.value(r2).clone(),
            layers: state.layers + 1,
        })
    }

    /// Merges relation row `relation` of `state` with `quals`.
    pub fn merge_relation(
        &self,
        state: &EncoderState,
        relation: usize,
        quals: &[(usize, usize)],
    ) -> Result<Vec<f64>> {
        let q = IndexQuery::new(0, relation, quals.to_vec());
        self.check_query(&q, state)?;
        let mut tape = Tape::new();
        let w_q = tape.leaf(self.params.get(W_Q)?.clone());
        let ent = tape.leaf(state.entity.clone());
        let rel = tape.leaf(state.relation.clone());
        let merged = self.merge_on_tape(&mut tape, w_q, ent, rel, &[(q.relation, &q.quals)]);
        Ok(tape.value(merged).row(0).to_vec())
    }

    /// Raw scores (pre-sigmoid) of every entity for each query.
    pub fn decode_logits(&self, state: &EncoderState, queries: &[IndexQuery]) -> Result<Tensor> {
        if queries.is_empty() {
            return Ok(Tensor::zeros(0, state.entity.rows()));
        }
        for q in queries {
            self.check_query(q, state)?;
        }
        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape, &self.params);
        let ent = tape.leaf(state.entity.clone());
        let rel = tape.leaf(state.relation.clone());
        let logits = self.decode_on_tape(&mut tape, &vars, ent, rel, queries);
        let out = tape.value(logits).clone();
        if !out.is_finite() {
            return Err(Error::NonFinite("decoder scores".into()));
        }
        Ok(out)
    }

    /// Probability of every entity completing `query`.
    pub fn decode_query(&self, state: &EncoderState, query: &IndexQuery) -> Result<Vec<f64>> {
        let logits = self.decode_logits(state, std::slice::from_ref(query))?;
        Ok(logits.row(0).iter().map(|z| sigmoid(*z)).collect())
    }

    /// Mean label-smoothed binary cross-entropy of the 1-vs-all targets and
    /// its gradient w.r.t. every parameter. `targets[i]` lists the true tails
    /// of `queries[i]`.
    pub fn loss_and_grad(
        &self,
        params: &ParamStore,
        graph: &EdgeList,
        queries: &[IndexQuery],
        targets: &[Vec<usize>],
        smoothing: f64,
    ) -> Result<(f64, ParamStore)> {
        if queries.is_empty() || queries.len() != targets.len() {
            return Err(Error::Validation("loss needs one target set per query".into()));
        }
        let n = params.get(ENTITY)?.rows();
        let mut y = Tensor::zeros(queries.len(), n);
        let off = smoothing / n as f64;
        for (i, ts) in targets.iter().enumerate() {
            let row = y.row_mut(i);
            row.iter_mut().for_each(|v| *v = off);
            for &t in ts {
                if t >= n {
                    return Err(Error::Unknown(format!("target entity index {t}")));
                }
                row[t] = (1.0 - smoothing) + off;
            }
        }

        let mut tape = Tape::new();
        let vars = self.leaves(&mut tape, params);
        let (ent, rel) = self.encode_on_tape(&mut tape, &vars, graph);
        let logits = self.decode_on_tape(&mut tape, &vars, ent, rel, queries);
        let loss = tape.bce_with_logits(logits, y);
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("hyper-model loss {value}")));
        }
        let mut g = tape.backward(loss)?;
        let mut grads = params.zeros_like();
        for (name, var) in &vars.0 {
            if let Some(t) = g.take(*var) {
                *grads.get_mut(name)? = t;
            }
        }
        Ok((value, grads))
    }

    fn check_indices(&self, graph: &EdgeList, n_ent: usize, n_rel: usize) -> Result<()> {
        let bad_e = graph
            .src
            .iter()
            .chain(&graph.dst)
            .chain(graph.quals.iter().flatten().map(|(_, e)| e))
            .find(|&&e| e >= n_ent);
        if let Some(e) = bad_e {
            return Err(Error::Unknown(format!("edge entity index {e} (vocabulary {n_ent})")));
        }
        let bad_r = graph
            .rel
            .iter()
            .chain(graph.quals.iter().flatten().map(|(r, _)| r))
            .find(|&&r| r >= n_rel);
        if let Some(r) = bad_r {
            return Err(Error::Unknown(format!("edge relation index {r} (vocabulary {n_rel})")));
        }
        Ok(())
    }

    fn check_graph(&self, graph: &EdgeList) -> Result<()> {
        self.check_indices(graph, self.n_entities(), self.n_relations())
    }

    fn check_query(&self, q: &IndexQuery, state: &EncoderState) -> Result<()> {
        let (ne, nr) = (state.entity.rows(), state.relation.rows());
        if q.head >= ne || q.quals.iter().any(|(_, e)| *e >= ne) {
            return Err(Error::Unknown(format!("query entity outside vocabulary of {ne}")));
        }
        if q.relation >= nr || q.quals.iter().any(|(r, _)| *r >= nr) {
            return Err(Error::Unknown(format!("query relation outside vocabulary of {nr}")));
        }
        Ok(())
    }
}
