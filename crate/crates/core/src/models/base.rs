//! Mediator-blind baseline scorers: TransE, DistMult, HolE and ComplEx.
//!
//! All four score plain `(head, relation, tail)` index triples; qualifiers
//! are never consulted. Higher scores mean more plausible triples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::linalg::{circular_correlation, dot, l2_norm};
use crate::numeric::{rng, ParamStore, Tensor};

pub const ENTITY: &str = "entity";
pub const RELATION: &str = "relation";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseModelKind {
    TransE,
    DistMult,
    HolE,
    ComplEx,
}

impl BaseModelKind {
    /// Stored row width: ComplEx packs `[re | im]` halves.
    pub fn width(self, dim: usize) -> usize {
        match self {
            BaseModelKind::ComplEx => 2 * dim,
            _ => dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    kind: BaseModelKind,
    dim: usize,
    norm: Norm,
    params: ParamStore,
}

/// Gradients of one triple score w.r.t. the three embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGrad {
    pub head: Vec<f64>,
    pub relation: Vec<f64>,
    pub tail: Vec<f64>,
}

/// Uniform `[-6/sqrt(dim), 6/sqrt(dim)]` tables; TransE relation rows are
/// L2-normalized afterwards.
pub fn init_model(
    kind: BaseModelKind,
    n_entities: usize,
    n_relations: usize,
    dim: usize,
    seed: u64,
) -> Result<BaseModel> {
    if n_entities == 0 || n_relations == 0 || dim == 0 {
        return Err(Error::Validation(format!(
            "model sizes must be positive (entities {n_entities}, relations {n_relations}, dim {dim})"
        )));
    }
    let width = kind.width(dim);
    let bound = 6.0 / (dim as f64).sqrt();
    let mut rng = rng::seeded(seed);
    let mut table = |rows: usize| {
        let data = (0..rows * width).map(|_| rng.gen_range(-bound..=bound)).collect();
        Tensor::from_vec(rows, width, data).expect("table shape")
    };
    let entity = table(n_entities);
    let mut relation = table(n_relations);
    if kind == BaseModelKind::TransE {
        for r in 0..relation.rows() {
            let row = relation.row_mut(r);
            let n = l2_norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    }
    let mut params = ParamStore::new();
    params.insert(ENTITY, entity)?;
    params.insert(RELATION, relation)?;
    Ok(BaseModel {
        kind,
        dim,
        norm: Norm::L1,
        params,
    })
}

impl BaseModel {
    /// Reassembles a model from stored parameters.
    pub fn from_params(kind: BaseModelKind, dim: usize, norm: Norm, params: ParamStore) -> Result<Self> {
        let width = kind.width(dim);
        for name in [ENTITY, RELATION] {
            let t = params.get(name)?;
            if t.cols() != width || t.rows() == 0 {
                return Err(Error::Dimension(format!(
                    "{name} table is {:?}, expected width {width}",
                    t.shape()
                )));
            }
        }
        if params.len() != 2 {
            return Err(Error::Validation("baseline models hold exactly two tables".into()));
        }
        Ok(BaseModel {
            kind,
            dim,
            norm,
            params,
        })
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn kind(&self) -> BaseModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
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

    fn rows(&self, h: usize, r: usize, t: usize) -> Result<(&[f64], &[f64], &[f64])> {
        let ent = self.params.get(ENTITY)?;
        let rel = self.params.get(RELATION)?;
        if h >= ent.rows() || t >= ent.rows() {
            return Err(Error::Unknown(format!(
                "entity index {} outside vocabulary of {}",
                h.max(t),
                ent.rows()
            )));
        }
        if r >= rel.rows() {
            return Err(Error::Unknown(format!(
                "relation index {r} outside vocabulary of {}",
                rel.rows()
            )));
        }
        Ok((ent.row(h), rel.row(r), ent.row(t)))
    }

    pub fn score(&self, h: usize, r: usize, t: usize) -> Result<f64> {
        let (eh, er, et) = self.rows(h, r, t)?;
        Ok(score_rows(self.kind, self.norm, eh, er, et))
    }

    pub fn score_gradient(&self, h: usize, r: usize, t: usize) -> Result<TripleGrad> {
        let (eh, er, et) = self.rows(h, r, t)?;
        Ok(grad_rows(self.kind, self.norm, eh, er, et))
    }

    /// Scores of `(h, r, t)` for every entity `t`.
    pub fn score_tails(&self, h: usize, r: usize) -> Result<Vec<f64>> {
        let ent = self.params.get(ENTITY)?;
        let (eh, er, _) = self.rows(h, r, h)?;
        if self.kind == BaseModelKind::HolE {
            // The score is linear in the tail: fold head and relation once.
            let w = grad_rows(self.kind, self.norm, eh, er, eh).tail;
            return Ok((0..ent.rows()).map(|t| dot(&w, ent.row(t))).collect());
        }
        Ok((0..ent.rows())
            .map(|t| score_rows(self.kind, self.norm, eh, er, ent.row(t)))
            .collect())
    }
}

pub fn score_rows(kind: BaseModelKind, norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match kind {
        BaseModelKind::TransE => {
            let diff = h.iter().zip(r).zip(t).map(|((a, b), c)| a + b - c);
            match norm {
                Norm::L1 => -diff.map(f64::abs).sum::<f64>(),
                Norm::L2 => -diff.map(|x| x * x).sum::<f64>().sqrt(),
            }
        }
        BaseModelKind::DistMult => h.iter().zip(r).zip(t).map(|((a, b), c)| a * b * c).sum(),
        BaseModelKind::HolE => dot(r, &circular_correlation(h, t).expect("equal widths")),
        BaseModelKind::ComplEx => {
            let d = h.len() / 2;
            let (hr, hi) = h.split_at(d);
            let (rr, ri) = r.split_at(d);
            let (tr, ti) = t.split_at(d);
            (0..d)
                .map(|i| {
                    hr[i] * rr[i] * tr[i] + hi[i] * rr[i] * ti[i] + hr[i] * ri[i] * ti[i]
                        - hi[i] * ri[i] * tr[i]
                })
                .sum()
        }
    }
}

pub fn grad_rows(kind: BaseModelKind, norm: Norm, h: &[f64], r: &[f64], t: &[f64]) -> TripleGrad {
    let n = h.len();
    match kind {
        BaseModelKind::TransE => {
            let diff: Vec<f64> = (0..n).map(|i| h[i] + r[i] - t[i]).collect();
            // d(-||x||)/dx; the subgradient at zero is taken as zero.
            let g: Vec<f64> = match norm {
                Norm::L1 => diff
                    .iter()
                    .map(|x| if *x > 0.0 { -1.0 } else if *x < 0.0 { 1.0 } else { 0.0 })
                    .collect(),
                Norm::L2 => {
                    let len = l2_norm(&diff);
                    if len == 0.0 {
                        vec![0.0; n]
                    } else {
                        diff.iter().map(|x| -x / len).collect()
                    }
                }
            };
            TripleGrad {
                head: g.clone(),
                relation: g.clone(),
                tail: g.iter().map(|x| -x).collect(),
            }
        }
        BaseModelKind::DistMult => TripleGrad {
            head: (0..n).map(|i| r[i] * t[i]).collect(),
            relation: (0..n).map(|i| h[i] * t[i]).collect(),
            tail: (0..n).map(|i| h[i] * r[i]).collect(),
        },
        BaseModelKind::HolE => {
            // score = sum_k r[k] sum_i h[i] t[(i+k) mod n]
            let head = (0..n)
                .map(|i| (0..n).map(|k| r[k] * t[(i + k) % n]).sum())
                .collect();
            let tail = (0..n)
                .map(|j| (0..n).map(|k| r[k] * h[(j + n - k) % n]).sum())
                .collect();
            TripleGrad {
                head,
                relation: circular_correlation(h, t).expect("equal widths"),
                tail,
            }
        }
        BaseModelKind::ComplEx => {
            let d = n / 2;
            let mut head = vec![0.0; n];
            let mut relation = vec![0.0; n];
            let mut tail = vec![0.0; n];
            for i in 0..d {
                let (hr, hi, rr, ri, tr, ti) = (h[i], h[d + i], r[i], r[d + i], t[i], t[d + i]);
                head[i] = rr * tr + ri * ti;
                head[d + i] = rr * ti - ri * tr;
                relation[i] = hr * tr + hi * ti;
                relation[d + i] = hr * ti - hi * tr;
                tail[i] = hr * rr - hi * ri;
                tail[d + i] = hi * rr + hr * ri;
            }
            TripleGrad {
                head,
                relation,
                tail,
            }
        }
    }
}
