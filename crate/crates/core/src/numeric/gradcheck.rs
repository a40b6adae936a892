use rand::seq::index;

use crate::error::{Error, Result};
use crate::numeric::rng;
use crate::numeric::tensor::ParamStore;

/// Default finite-difference step.
pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Compares analytic gradients against central finite differences.
///
/// `f` returns the objective and its gradient (same layout as `params`).
/// `samples` coordinates are drawn without replacement, uniformly over all
/// scalar entries; when `samples` exceeds the parameter count every
/// coordinate is checked. Returns the largest
/// `|g_analytic - g_fd| / max(1, |g_fd|)`.
pub fn grad_check<F>(f: F, params: &ParamStore, eps: f64, samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(f64, ParamStore)>,
{
    let (value, grads) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("objective at the base point".into()));
    }
    if !grads.same_layout(params) {
        return Err(Error::Dimension("gradient layout differs from parameters".into()));
    }

    // Flat addressing over the name-ordered tensors.
    let layout: Vec<(String, usize)> = params.iter().map(|(n, t)| (n.clone(), t.len())).collect();
    let total: usize = layout.iter().map(|(_, n)| *n).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut rng = rng::seeded(seed);
    let picks = index::sample(&mut rng, total, samples.min(total)).into_vec();

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for flat in picks {
        let (name, offset) = locate(&layout, flat);
        let base = probe.get(name)?.data()[offset];

        probe.get_mut(name)?.data_mut()[offset] = base + eps;
        let (up, _) = f(&probe)?;
        probe.get_mut(name)?.data_mut()[offset] = base - eps;
        let (down, _) = f(&probe)?;
        probe.get_mut(name)?.data_mut()[offset] = base;

        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective near {name}[{offset}]")));
        }
        let fd = (up - down) / (2.0 * eps);
        let analytic = grads.get(name)?.data()[offset];
        let err = (analytic - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn locate(layout: &[(String, usize)], mut flat: usize) -> (&str, usize) {
    for (name, n) in layout {
        if flat < *n {
            return (name, flat);
        }
        flat -= n;
    }
    unreachable!("flat index within total")
}
