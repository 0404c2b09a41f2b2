use serde::{Deserialize, Serialize};

use super::{par_replicas, replica_rng, EnvSource, MCEstimate};
use crate::error::{Error, Result};
use crate::geometry::{Alpha, DirectionSpec, Site};
use crate::regeneration::{build_pattern, simulate_augmented, tau_sequence_on, RegenerationRecord};
use crate::walk::EpsilonLaw;

pub(crate) const TASK_REGEN: u64 = 0x2E;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecondMoment {
    pub pattern_len: usize,
    /// Estimate of `E[(kappa^L X_tau . l)^2]` over uncensored replicas;
    /// `None` when every replica was censored.
    pub estimate: Option<MCEstimate>,
    pub censor_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegenerationMoments {
    pub per_len: Vec<SecondMoment>,
    /// Largest over smallest available estimate exceeds 10.
    pub spread_flag: bool,
    /// First records of every replica, per pattern length.
    #[serde(skip)]
    pub records: Vec<Vec<RegenerationRecord>>,
    /// Consecutive pairs `(tau_i, tau_{i+1})` checked for increasing level.
    pub sequence_pairs: u64,
    pub sequence_violations: u64,
}

/// Second moment of `kappa^L X_{tau^(L)} . l` for each `L`. One augmented
/// path per replica serves all pattern lengths; each replica also checks
/// the first `seq_count` terms of its tau sequence.
#[allow(clippy::too_many_arguments)]
pub fn regeneration_second_moment(
    env: &EnvSource,
    dir: &DirectionSpec,
    kappa: f64,
    alpha: Alpha,
    lens: &[usize],
    replicas: u64,
    horizon: usize,
    seq_count: usize,
    seed: u64,
) -> Result<RegenerationMoments> {
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!("kappa must be positive, got {kappa}")));
    }
    let law = EpsilonLaw::new(dir, kappa).map_err(|e| Error::Precondition(e.to_string()))?;
    if replicas == 0 || lens.is_empty() {
        return Err(Error::Config("need replicas and at least one pattern length".into()));
    }
    let patterns = lens.iter().map(|&l| build_pattern(dir, l, alpha)).collect::<Result<Vec<_>>>()?;
    if let Some(p) = patterns.iter().find(|p| p.len() > horizon) {
        return Err(Error::Config(format!("horizon {horizon} below pattern length {}", p.len())));
    }
    let d = dir.dim();
    let per_replica = par_replicas(replicas, |i| {
        let env = env.for_replica(i);
        let mut rng = replica_rng(seed, &[TASK_REGEN], i);
        let traj = simulate_augmented(&env, &law, Site::origin(d), horizon, &mut rng)?;
        let mut firsts = Vec::with_capacity(patterns.len());
        let (mut pairs, mut bad) = (0u64, 0u64);
        for p in &patterns {
            let seq = tau_sequence_on(&traj, p, seq_count.max(1))?;
            for w in seq.windows(2) {
                pairs += 1;
                let (a, b) = (w[0].x_tau.unwrap(), w[1].x_tau.unwrap());
                if dir.level(&b) <= dir.level(&a) {
                    bad += 1;
                }
            }
            firsts.push(match seq.into_iter().next() {
                Some(r) => r,
                None => crate::regeneration::detect_on_trajectory(&traj, p, 0)?,
            });
        }
        Ok((firsts, pairs, bad))
    })?;

    let mut records: Vec<Vec<RegenerationRecord>> = vec![Vec::with_capacity(replicas as usize); patterns.len()];
    let (mut sequence_pairs, mut sequence_violations) = (0, 0);
    for (firsts, pairs, bad) in per_replica {
        sequence_pairs += pairs;
        sequence_violations += bad;
        for (k, r) in firsts.into_iter().enumerate() {
            records[k].push(r);
        }
    }
    let q = dir.q();
    let per_len: Vec<SecondMoment> = patterns
        .iter()
        .zip(&records)
        .map(|(p, recs)| {
            let kl = kappa.powi(p.len() as i32);
            let xs: Vec<f64> = recs
                .iter()
                .filter_map(|r| r.x_tau)
                .map(|x| (kl * dir.level(&x) as f64 / q).powi(2))
                .collect();
            let censored = recs.len() as u64 - xs.len() as u64;
            SecondMoment {
                pattern_len: p.len(),
                estimate: (!xs.is_empty()).then(|| MCEstimate::from_samples(&xs, censored)),
                censor_fraction: censored as f64 / recs.len() as f64,
            }
        })
        .collect();
    let means: Vec<f64> = per_len.iter().filter_map(|m| m.estimate.map(|e| e.mean)).collect();
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread_flag = means.len() >= 2 && !(hi <= 10.0 * lo);
    Ok(RegenerationMoments { per_len, spread_flag, records, sequence_pairs, sequence_violations })
}
