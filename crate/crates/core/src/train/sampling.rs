//! Uniform head/tail corruption.

use std::collections::HashSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::IndexLink;
use crate::numeric::rng::{self, Rng as Generator};

/// Attempts per corruption before a collision with a training link is kept.
pub const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Head,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corruption {
    pub link: IndexLink,
    pub side: Side,
}

/// Draws corruptions of training links over a fixed entity range.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    n_entities: usize,
    known: HashSet<IndexLink>,
}

impl NegativeSampler {
    pub fn new(n_entities: usize, train: &[IndexLink]) -> Result<Self> {
        if n_entities < 2 {
            return Err(Error::Sampling(format!(
                "cannot corrupt links over a vocabulary of {n_entities} entity"
            )));
        }
        Ok(NegativeSampler {
            n_entities,
            known: train.iter().cloned().collect(),
        })
    }

    pub fn is_known(&self, link: &IndexLink) -> bool {
        self.known.contains(link)
    }

    /// `k` corruptions of `link`: a fair coin picks head or tail, which is
    /// replaced by a uniformly drawn different entity. Qualifiers are kept.
    pub fn sample(&self, link: &IndexLink, k: usize, rng: &mut Generator) -> Vec<Corruption> {
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let mut attempt = 0;
            loop {
                let side = if rng.gen_bool(0.5) { Side::Head } else { Side::Tail };
                let current = match side {
                    Side::Head => link.head,
                    Side::Tail => link.tail,
                };
                // uniform over the other n - 1 entities
                let mut e = rng.gen_range(0..self.n_entities - 1);
                if e >= current {
                    e += 1;
                }
                let mut c = link.clone();
                match side {
                    Side::Head => c.head = e,
                    Side::Tail => c.tail = e,
                }
                attempt += 1;
                if !self.known.contains(&c) || attempt >= MAX_RESAMPLES {
                    out.push(Corruption { link: c, side });
                    break;
                }
            }
        }
        out
    }
}

/// Seeded convenience wrapper over [`NegativeSampler::sample`].
pub fn sample_negatives(
    link: &IndexLink,
    sampler: &NegativeSampler,
    k: usize,
    seed: u64,
) -> Result<Vec<Corruption>> {
    if k == 0 {
        return Err(Error::Sampling("need at least one negative per positive".into()));
    }
    Ok(sampler.sample(link, k, &mut rng::seeded(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link(h: usize, r: usize, t: usize) -> IndexLink {
        IndexLink {
            head: h,
            relation: r,
            tail: t,
            quals: vec![(1, 2)],
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = NegativeSampler::new(20, &[link(0, 0, 1)]).unwrap();
        let a = sample_negatives(&link(0, 0, 1), &s, 2, 5).unwrap();
        let b = sample_negatives(&link(0, 0, 1), &s, 2, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn replacement_differs_and_qualifiers_kept() {
        let s = NegativeSampler::new(5, &[]).unwrap();
        let pos = link(2, 0, 3);
        for c in sample_negatives(&pos, &s, 500, 1).unwrap() {
            match c.side {
                Side::Head => assert!(c.link.head != 2 && c.link.tail == 3),
                Side::Tail => assert!(c.link.tail != 3 && c.link.head == 2),
            }
            assert_eq!(c.link.quals, pos.quals);
            assert!(c.link.head < 5 && c.link.tail < 5);
        }
    }

    #[test]
    fn known_links_are_avoided() {
        // every tail corruption except tail 4 is a training link
        let train: Vec<IndexLink> = (0..4).map(|t| link(0, 0, t)).collect();
        let s = NegativeSampler::new(5, &train).unwrap();
        for c in sample_negatives(&link(0, 0, 1), &s, 200, 3).unwrap() {
            assert!(!s.is_known(&c.link));
        }
    }

    #[test]
    fn saturated_vocabulary_keeps_collision() {
        let train = vec![link(0, 0, 1), link(1, 0, 1), link(0, 0, 0)];
        let s = NegativeSampler::new(2, &train).unwrap();
        let out = sample_negatives(&link(0, 0, 1), &s, 3, 0).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn singleton_vocabulary_errors() {
        assert!(matches!(NegativeSampler::new(1, &[]), Err(Error::Sampling(_))));
    }

    #[test]
    fn coin_is_fair_within_three_sigma() {
        let s = NegativeSampler::new(50, &[]).unwrap();
        let n = 10_000;
        let heads = sample_negatives(&link(0, 0, 1), &s, n, 99)
            .unwrap()
            .iter()
            .filter(|c| c.side == Side::Head)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((heads - n as f64 / 2.0).abs() < 3.0 * sigma, "heads {heads}");
    }

    #[test]
    fn replacement_is_uniform_chi_square() {
        let n_ent = 11;
        let s = NegativeSampler::new(n_ent, &[]).unwrap();
        let mut counts = vec![0f64; n_ent];
        let mut total = 0.0;
        for c in sample_negatives(&link(0, 0, 0), &s, 40_000, 7).unwrap() {
            if c.side == Side::Tail {
                counts[c.link.tail] += 1.0;
                total += 1.0;
            }
        }
        assert_eq!(counts[0], 0.0);
        let expected = total / (n_ent - 1) as f64;
        let chi2: f64 = counts[1..].iter().map(|o| (o - expected).powi(2) / expected).sum();
        // 9 degrees of freedom, 0.999 quantile
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }
}
