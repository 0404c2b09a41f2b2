//! Monte Carlo estimators.
//!
//! Replica `i` of a task draws from stream `i` of a seed derived from the
//! master seed and the task's tags, and (for fresh environments) realizes
//! its environment from a seed derived from the replica id. Replicas run in
//! parallel; results are collected in replica order and reduced
//! sequentially, so outputs do not depend on the worker count.

mod box_decay;
mod direction;
mod mixing;
mod moments;
mod survival;

pub use box_decay::{box_failure_prob, fit_decay, BoxFailure, DecayFit, DecayModel, LineFit};
pub use direction::{direction_estimate, DirectionStats};
pub use mixing::{mixing_profile, MixingPair, MixingPoint, MixingProfile};
pub use moments::{regeneration_second_moment, RegenerationMoments, SecondMoment};
pub use survival::{stacked_box_lower_bound, survival_prob_d, StackedBound, SurvivalPoint};

pub(crate) use box_decay::TASK_BOX;
pub(crate) use direction::TASK_DIRECTION;
pub(crate) use mixing::{TASK_MIX, TASK_MIX_CAL};
pub(crate) use moments::TASK_REGEN;
pub(crate) use survival::TASK_SURVIVAL;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentModel;
use crate::error::Result;
use crate::rng::{derive_seed, StreamRng};

const ENV_TAG: u64 = 0xE7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Replicas attempted.
    pub n: u64,
    pub censored: u64,
    pub ci95: [f64; 2],
}

impl MCEstimate {
    pub fn new(mean: f64, stderr: f64, n: u64, censored: u64) -> Self {
        assert!(censored <= n);
        Self { mean, stderr, n, censored, ci95: [mean - 1.96 * stderr, mean + 1.96 * stderr] }
    }

    /// Sample mean and `sd / sqrt(m)` over the `m` uncensored samples.
    pub fn from_samples(xs: &[f64], censored: u64) -> Self {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let stderr = if xs.len() > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (var / m).sqrt()
        } else {
            0.0
        };
        Self::new(mean, stderr, xs.len() as u64 + censored, censored)
    }

    /// `hits` successes among `n` uncensored Bernoulli samples.
    pub fn from_bernoulli(hits: u64, n: u64, censored: u64) -> Self {
        let m = n as f64;
        let p = hits as f64 / m;
        let stderr = if n > 1 { (p * (1.0 - p) / (m - 1.0)).sqrt() } else { 0.0 };
        Self::new(p, stderr, n + censored, censored)
    }

    pub fn covers(&self, x: f64) -> bool {
        self.ci95[0] <= x && x <= self.ci95[1]
    }
}

/// Where each replica's environment comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSource {
    /// One quenched environment for all replicas.
    Shared(EnvironmentModel),
    /// An independent realization per replica (annealed sampling).
    Fresh(EnvironmentModel),
}

impl EnvSource {
    pub fn template(&self) -> &EnvironmentModel {
        match self {
            EnvSource::Shared(e) | EnvSource::Fresh(e) => e,
        }
    }

    pub fn for_replica(&self, replica: u64) -> EnvironmentModel {
        match self {
            EnvSource::Shared(e) => e.clone(),
            EnvSource::Fresh(e) => e.with_seed(derive_seed(e.seed(), &[ENV_TAG, replica])),
        }
    }
}

/// Stream for replica `replica` of the task identified by `tags`.
pub fn replica_rng(seed: u64, tags: &[u64], replica: u64) -> StreamRng {
    StreamRng::new(derive_seed(seed, tags), replica)
}

/// Runs `f` for replicas `0..n` in parallel and returns results in
/// replica order.
pub fn par_replicas<T, F>(n: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

pub(crate) fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}
