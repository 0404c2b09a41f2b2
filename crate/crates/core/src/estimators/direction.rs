use serde::{Deserialize, Serialize};

use super::{angle_between, par_replicas, replica_rng, EnvSource, MCEstimate};
use crate::error::{Error, Result};
use crate::geometry::{DirectionSpec, Site};
use crate::walk::{WalkMode, Walker};

pub(crate) const TASK_DIRECTION: u64 = 0xD1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub n: u64,
    /// `X_n / |X_n|_2` per replica, excluding walks at the origin.
    pub unit_vectors: Vec<Vec<f64>>,
    pub at_origin: u64,
    /// Normalized sum of the unit vectors.
    pub mean_direction: Vec<f64>,
    /// `1 - |mean of unit vectors|_2`.
    pub dispersion: MCEstimate,
    /// Angle between `X_n` and the reference direction, per replica.
    pub angle_to_reference: MCEstimate,
    /// Fraction of replicas with `X_n . l > 0`.
    pub positive_fraction: MCEstimate,
    /// `|X_n|_2 / n`.
    pub speed: MCEstimate,
    /// Mean of `X_n / n`.
    pub velocity: Vec<f64>,
}

/// Directional statistics of `X_n` for every `n` of an increasing ladder,
/// all read off the same replicas.
pub fn direction_estimate(
    env: &EnvSource,
    reference: &DirectionSpec,
    ladder: &[u64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<DirectionStats>> {
    if ladder.is_empty() || ladder[0] == 0 || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("step ladder must be positive and increasing".into()));
    }
    if replicas < 2 {
        return Err(Error::Config("direction estimates need at least 2 replicas".into()));
    }
    let d = env.template().dim();
    if reference.dim() != d {
        return Err(Error::Config("reference direction dimension differs from environment".into()));
    }
    let snapshots = par_replicas(replicas, |i| {
        let env = env.for_replica(i);
        let mut rng = replica_rng(seed, &[TASK_DIRECTION], i);
        let mut w = Walker::new(&env, &WalkMode::Quenched, Site::origin(d));
        let mut out = Vec::with_capacity(ladder.len());
        for &n in ladder {
            while (w.time() as u64) < n {
                w.step(&mut rng)?;
            }
            out.push(w.position());
        }
        Ok(out)
    })?;
    let l = reference.l();
    ladder
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let xs: Vec<Site> = snapshots.iter().map(|s| s[k]).collect();
            summarize(n, &xs, l)
        })
        .collect()
}

fn summarize(n: u64, xs: &[Site], l: &[f64]) -> Result<DirectionStats> {
    let d = l.len();
    let mut units = Vec::with_capacity(xs.len());
    let mut at_origin = 0;
    for x in xs {
        let norm = x.l2_norm();
        if norm == 0.0 {
            at_origin += 1;
            continue;
        }
        units.push(x.coords().iter().map(|&c| c as f64 / norm).collect::<Vec<f64>>());
    }
    if units.is_empty() {
        return Err(Error::DegenerateSample(format!("every replica is at the origin at n = {n}")));
    }
    let m = units.len() as f64;
    let mut sum = vec![0.0; d];
    for u in &units {
        for (s, v) in sum.iter_mut().zip(u) {
            *s += v;
        }
    }
    let resultant = sum.iter().map(|s| s * s).sum::<f64>().sqrt() / m;
    let mean_direction: Vec<f64> = if resultant > 0.0 {
        sum.iter().map(|s| s / (resultant * m)).collect()
    } else {
        vec![0.0; d]
    };
    // spread of the projections onto the mean direction
    let proj: Vec<f64> = units.iter().map(|u| u.iter().zip(&mean_direction).map(|(a, b)| a * b).sum()).collect();
    let proj_est = MCEstimate::from_samples(&proj, at_origin);
    let dispersion = MCEstimate::new(1.0 - resultant, proj_est.stderr, proj_est.n, at_origin);

    let angles: Vec<f64> = xs
        .iter()
        .filter(|x| x.l2_norm() > 0.0)
        .map(|x| angle_between(&x.coords().iter().map(|&c| c as f64).collect::<Vec<_>>(), l))
        .collect();
    let positive = xs.iter().filter(|x| x.dot_f64(l) > 0.0).count() as u64;
    let speeds: Vec<f64> = xs.iter().map(|x| x.l2_norm() / n as f64).collect();
    let mut velocity = vec![0.0; d];
    for x in xs {
        for (v, &c) in velocity.iter_mut().zip(x.coords()) {
            *v += c as f64 / n as f64 / xs.len() as f64;
        }
    }
    Ok(DirectionStats {
        n,
        unit_vectors: units,
        at_origin,
        mean_direction,
        dispersion,
        angle_to_reference: MCEstimate::from_samples(&angles, at_origin),
        positive_fraction: MCEstimate::from_bernoulli(positive, xs.len() as u64, 0),
        speed: MCEstimate::from_samples(&speeds, 0),
        velocity,
    })
}
