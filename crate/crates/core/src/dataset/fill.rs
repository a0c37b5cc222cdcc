//! Fill levels for the scratchpad and examples sections of training samples.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompleteScene, FillLevel};
use crate::error::{Error, Result};

/// Shares of empty, partial and full sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FillDistribution {
    pub empty: f64,
    pub partial: f64,
    pub full: f64,
}

impl Default for FillDistribution {
    fn default() -> Self {
        Self {
            empty: 0.2,
            partial: 0.3,
            full: 0.5,
        }
    }
}

impl FillDistribution {
    pub fn as_array(&self) -> [f64; 3] {
        [self.empty, self.partial, self.full]
    }

    pub fn validate(&self) -> Result<()> {
        let shares = self.as_array();
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Validation("fill shares must be non-negative".into()));
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "fill shares sum to {sum}, not 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillTarget {
    Scratchpad,
    Examples,
}

/// Integer counts summing to `n` that follow `shares` as closely as possible:
/// floors first, then one extra item to the largest fractional parts (earlier
/// classes win ties).
pub fn largest_remainder(n: usize, shares: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Labels one section of every scene so that level counts follow
/// `distribution`. Which scene gets which level comes from a seeded shuffle.
pub fn set_fill_levels(
    scenes: &[CompleteScene],
    distribution: &FillDistribution,
    target: FillTarget,
    seed: u64,
) -> Result<Vec<CompleteScene>> {
    distribution.validate()?;
    let counts = largest_remainder(scenes.len(), &distribution.as_array());
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = scenes.to_vec();
    let mut next = order.into_iter();
    for (level, count) in FillLevel::ALL.into_iter().zip(counts) {
        for i in next.by_ref().take(count) {
            match target {
                FillTarget::Scratchpad => out[i].scratchpad_fill = level,
                FillTarget::Examples => out[i].examples_fill = level,
            }
        }
    }
    Ok(out)
}
