use std::collections::HashSet;

use rand::Rng;

use super::options::SamplingMode;
use crate::error::{Error, Result};

/// Precomputed sampler over the support of a weight vector.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    support: Vec<usize>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl BlockSampler {
    pub fn new(p: &[f64]) -> Self {
        let mut support = Vec::new();
        let mut weights = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (i, &w) in p.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                support.push(i);
                weights.push(w);
                cumulative.push(acc);
            }
        }
        Self { support, weights, cumulative }
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Draws a block of at most `l` distinct indices from the support.
    ///
    /// Returns [`Error::ExactlyLowRank`] when the support is empty.
    pub fn sample<R: Rng + ?Sized>(&self, l: usize, mode: SamplingMode, rng: &mut R) -> Result<Vec<usize>> {
        let len = self.support.len();
        if len == 0 {
            return Err(Error::ExactlyLowRank);
        }
        let block = match mode {
            SamplingMode::DiagIid => {
                let total = self.cumulative[len - 1];
                let mut seen = HashSet::with_capacity(l);
                let mut out = Vec::with_capacity(l);
                for _ in 0..l {
                    let u = rng.random::<f64>() * total;
                    let k = self.cumulative.partition_point(|&c| c <= u).min(len - 1);
                    if seen.insert(k) {
                        out.push(self.support[k]);
                    }
                }
                out
            }
            SamplingMode::DiagNoReplace => {
                // Efraimidis–Spirakis: the top-ℓ keys ln(u)/w, in key order,
                // are distributed as sequential weighted draws.
                let mut keys: Vec<(f64, usize)> = self
                    .weights
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| ((1.0 - rng.random::<f64>()).ln() / w, k))
                    .collect();
                let by_key = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
                let take = l.min(len);
                if take < len {
                    keys.select_nth_unstable_by(take - 1, by_key);
                    keys.truncate(take);
                }
                keys.sort_unstable_by(by_key);
                keys.into_iter().map(|(_, k)| self.support[k]).collect()
            }
            SamplingMode::Uniform => rand::seq::index::sample(rng, len, l.min(len))
                .into_iter()
                .map(|k| self.support[k])
                .collect(),
        };
        Ok(block)
    }
}

/// Draws a coordinate block from weights `p`; see [`BlockSampler::sample`].
pub fn sample_block<R: Rng + ?Sized>(p: &[f64], l: usize, mode: SamplingMode, rng: &mut R) -> Result<Vec<usize>> {
    BlockSampler::new(p).sample(l, mode, rng)
}
