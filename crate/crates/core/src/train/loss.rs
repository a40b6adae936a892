//! Training objectives: margin ranking for the baselines, label-smoothed
//! 1-vs-all cross-entropy for the hyper model.

use crate::error::{Error, Result};
use crate::models::base::{grad_rows, score_rows, ENTITY, RELATION};
use crate::models::{BaseModel, IndexLink};
use crate::numeric::ParamStore;

/// Mean over pairs of `max(0, margin - s(pos) + s(neg))` under `params`,
/// with its gradient. Qualifiers are ignored.
pub fn margin_loss_and_grad(
    model: &BaseModel,
    params: &ParamStore,
    pairs: &[(IndexLink, IndexLink)],
    margin: f64,
) -> Result<(f64, ParamStore)> {
    if pairs.is_empty() {
        return Err(Error::Validation("empty training batch".into()));
    }
    let ent = params.get(ENTITY)?;
    let rel = params.get(RELATION)?;
    let mut grads = params.zeros_like();
    let n = pairs.len() as f64;
    let mut total = 0.0;
    let check = |l: &IndexLink| -> Result<()> {
        if l.head >= ent.rows() || l.tail >= ent.rows() || l.relation >= rel.rows() {
            return Err(Error::Unknown(format!("link {l:?} outside the model vocabulary")));
        }
        Ok(())
    };
    let (kind, norm) = (model.kind(), model.norm());
    for (pos, neg) in pairs {
        check(pos)?;
        check(neg)?;
        let sp = score_rows(kind, norm, ent.row(pos.head), rel.row(pos.relation), ent.row(pos.tail));
        let sn = score_rows(kind, norm, ent.row(neg.head), rel.row(neg.relation), ent.row(neg.tail));
        let hinge = margin - sp + sn;
        if hinge <= 0.0 {
            continue;
        }
        total += hinge;
        for (link, sign) in [(pos, -1.0 / n), (neg, 1.0 / n)] {
            let g = grad_rows(kind, norm, ent.row(link.head), rel.row(link.relation), ent.row(link.tail));
            let ge = grads.get_mut(ENTITY)?;
            axpy(ge.row_mut(link.head), &g.head, sign);
            axpy(ge.row_mut(link.tail), &g.tail, sign);
            axpy(grads.get_mut(RELATION)?.row_mut(link.relation), &g.relation, sign);
        }
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("margin loss {loss}")));
    }
    Ok((loss, grads))
}

fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
