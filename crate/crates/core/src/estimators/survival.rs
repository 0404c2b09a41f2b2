use serde::{Deserialize, Serialize};

use super::{par_replicas, replica_rng, EnvSource, MCEstimate};
use crate::error::{Error, Result};
use crate::geometry::ConeSpec;
use crate::walk::{WalkMode, Walker};

pub(crate) const TASK_SURVIVAL: u64 = 0x5D;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub horizon: u64,
    /// `P[D' > horizon]`.
    pub estimate: MCEstimate,
}

/// Survival curve of the cone exit time `D'` from the cone's vertex, over
/// an increasing horizon ladder. Every replica runs to its exit or to the
/// last horizon, so the curve is nonincreasing by construction.
pub fn survival_prob_d(
    env: &EnvSource,
    cone: &ConeSpec,
    horizons: &[u64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<SurvivalPoint>> {
    if horizons.is_empty() || horizons[0] == 0 || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("horizon ladder must be positive and increasing".into()));
    }
    if replicas == 0 {
        return Err(Error::Config("replicas must be positive".into()));
    }
    let last = *horizons.last().unwrap();
    let start = cone.vertex();
    let exits = par_replicas(replicas, |i| {
        let env = env.for_replica(i);
        let mut rng = replica_rng(seed, &[TASK_SURVIVAL], i);
        let mut w = Walker::new(&env, &WalkMode::Quenched, start);
        while (w.time() as u64) < last {
            w.step(&mut rng)?;
            if !cone.contains(&w.position()) {
                return Ok(Some(w.time() as u64));
            }
        }
        Ok(None)
    })?;
    Ok(horizons
        .iter()
        .map(|&h| {
            let alive = exits.iter().filter(|e| e.map_or(true, |t| t > h)).count() as u64;
            SurvivalPoint { horizon: h, estimate: MCEstimate::from_bernoulli(alive, replicas, 0) }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedBound {
    /// Lower bounds `J_0, J_1, ..` on passing the first `i + 1` boxes.
    pub j: Vec<f64>,
    /// Thresholds chosen at each step.
    pub thresholds: Vec<f64>,
    /// `J` after the last measured box, clamped at 0.
    pub y: f64,
    /// `push * (1 - 2 (d - 1) (1 - y))`, clamped at 0.
    pub bound: f64,
}

/// Stacked-box lower bound on cone survival from measured per-box exit
/// failures.
///
/// `fail[i]` is the failure probability of the box of depth `2^{m+i}` and
/// half-width `2 c 2^{m+i}`. With `J_0 = 1 - fail[0]`, each further box
/// contributes `J_i >= (1 - t) (J_{i-1} - |F_{i-1}| fail[i] / t)`, where
/// `|F_{i-1}| <= (sum_{j<i} 2c 2^{m+j+1})^{d-1}` counts entry points and
/// `t` is chosen optimally. The half-space bounds for the `2(d-1)` tilted
/// directions then combine with the probability `push` of the initial
/// forced path.
pub fn stacked_box_lower_bound(fail: &[f64], m: u32, c: f64, d: usize, push: f64) -> Result<StackedBound> {
    if fail.is_empty() {
        return Err(Error::InsufficientData("no box estimates".into()));
    }
    if fail.iter().any(|f| !(0.0..=1.0).contains(f)) || !(0.0..=1.0).contains(&push) || d < 2 {
        return Err(Error::Precondition("probabilities must lie in [0, 1] and d >= 2".into()));
    }
    let mut j = vec![1.0 - fail[0]];
    let mut thresholds = Vec::new();
    let mut width_sum = 0.0;
    for i in 1..fail.len() {
        width_sum += 2.0 * c * 2f64.powi((m as i32) + i as i32);
        let a = width_sum.powi(d as i32 - 1) * fail[i];
        let prev = *j.last().unwrap();
        if prev <= 0.0 {
            j.push(0.0);
            thresholds.push(1.0);
            continue;
        }
        // maximizes (1 - t)(prev - a / t)
        let t = if a == 0.0 { 0.0 } else { (a / prev).sqrt().min(1.0) };
        let next = if a == 0.0 { prev } else { (1.0 - t) * (prev - a / t) };
        j.push(next.max(0.0));
        thresholds.push(t);
    }
    let y = j.last().unwrap().max(0.0);
    let bound = (push * (1.0 - 2.0 * (d as f64 - 1.0) * (1.0 - y))).max(0.0);
    Ok(StackedBound { j, thresholds, y, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentModel;
    use crate::geometry::{make_direction, Alpha, Site};

    #[test]
    fn forced_walk_always_survives() {
        let env = EnvSource::Shared(EnvironmentModel::homogeneous(&[1.0, 0.0, 0.0, 0.0]).unwrap());
        let cone = ConeSpec::new(Site::origin(2), make_direction(&[1, 0]).unwrap(), Alpha::Ratio(1, 9)).unwrap();
        let curve = survival_prob_d(&env, &cone, &[10, 100, 1000], 20, 0).unwrap();
        assert!(curve.iter().all(|p| p.estimate.mean == 1.0));
    }

    #[test]
    fn curve_nonincreasing_and_monotone_in_alpha() {
        let env = EnvSource::Fresh(
            EnvironmentModel::new(2, crate::environment::ModelKind::IidUe { floors: vec![0.3, 0.05, 0.05, 0.05] }, 4)
                .unwrap(),
        );
        let dir = make_direction(&[1, 0]).unwrap();
        let ladder = [10, 100, 1000];
        let mut prev: Option<Vec<f64>> = None;
        // decreasing alpha widens the cone
        for a in [Alpha::Ratio(1, 1), Alpha::Ratio(1, 3), Alpha::Ratio(1, 9)] {
            let cone = ConeSpec::new(Site::origin(2), dir.clone(), a).unwrap();
            let curve: Vec<f64> =
                survival_prob_d(&env, &cone, &ladder, 300, 7).unwrap().iter().map(|p| p.estimate.mean).collect();
            assert!(curve.windows(2).all(|w| w[1] <= w[0]));
            if let Some(p) = prev {
                assert!(curve.iter().zip(&p).all(|(wide, narrow)| wide >= narrow));
            }
            prev = Some(curve);
        }
    }

    #[test]
    fn perfect_boxes_give_push_probability() {
        let b = stacked_box_lower_bound(&[0.0, 0.0, 0.0], 1, 1.0, 2, 0.09).unwrap();
        assert_eq!(b.y, 1.0);
        assert_eq!(b.bound, 0.09);
    }

    #[test]
    fn stacked_bound_hand_computed() {
        // m = 0, c = 1, d = 2: |F_0| <= 2 * 2 = 4
        // J_0 = 0.99; a = 4 * 1e-4; t = sqrt(a / J_0)
        let b = stacked_box_lower_bound(&[0.01, 1e-4], 0, 1.0, 2, 1.0).unwrap();
        let t = (4e-4f64 / 0.99).sqrt();
        let want = (1.0 - t) * (0.99 - 4e-4 / t);
        assert!((b.j[1] - want).abs() < 1e-15);
        assert!((b.bound - (1.0 - 2.0 * (1.0 - want))).abs() < 1e-15);
        // any other threshold gives less
        for s in [0.001, 0.01, 0.05, 0.5] {
            assert!((1.0 - s) * (0.99 - 4e-4 / s) <= want + 1e-15);
        }
    }

    #[test]
    fn large_failures_clamp_to_zero() {
        let b = stacked_box_lower_bound(&[0.3, 0.2, 0.1], 1, 2.0, 2, 0.1).unwrap();
        assert_eq!(b.bound, 0.0);
        assert!(b.j.iter().all(|&v| v >= 0.0));
    }
}
