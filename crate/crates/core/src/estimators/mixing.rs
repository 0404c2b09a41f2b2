use serde::{Deserialize, Serialize};

use super::{par_replicas, EnvSource};
use crate::environment::EnvironmentModel;
use crate::error::{Error, Result};
use crate::geometry::{Alpha, ConeSpec, DirectionSpec, HalfSpaceSpec, Site};
use crate::rng::derive_seed;

pub(crate) const TASK_MIX: u64 = 0x31;
pub(crate) const TASK_MIX_CAL: u64 = 0x32;
const MIN_PA: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingPair {
    pub a_site: Vec<i64>,
    pub b_site: Vec<i64>,
    pub p_a: f64,
    pub p_b: f64,
    pub p_b_given_a: f64,
    pub phi: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingPoint {
    pub r: f64,
    /// Max over tested pairs of `|P[B | A] - P[B]|`.
    pub phi: f64,
    /// Standard error of the maximizing pair.
    pub stderr: f64,
    pub pairs: Vec<MixingPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingProfile {
    pub family: String,
    pub threshold: f64,
    pub points: Vec<MixingPoint>,
    pub warnings: Vec<String>,
}

/// Empirical cone-mixing coefficients over threshold events
/// `{omega(z, e) >= median}` with `e` the first pattern direction,
/// `z ∈ {0, -e}` on the half-space side and `z ∈ {k u, (k + 1) u}`,
/// `k = ceil(r / |u|_2)`, inside the cone `C(r l, l, alpha)`.
#[allow(clippy::too_many_arguments)]
pub fn mixing_profile(
    env: &EnvironmentModel,
    dir: &DirectionSpec,
    alpha: Alpha,
    rs: &[f64],
    replicas: u64,
    calibration: u64,
    seed: u64,
) -> Result<MixingProfile> {
    if replicas < 2 || calibration == 0 {
        return Err(Error::Config("mixing needs replicas >= 2 and a calibration sample".into()));
    }
    if rs.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Config("separations must be positive".into()));
    }
    let d = dir.dim();
    let e = *dir.eps_set().first().ok_or_else(|| Error::Config("empty forced-step set".into()))?;
    let origin = Site::origin(d);
    let a_sites = vec![origin, origin.step(e ^ 1)];
    let half = HalfSpaceSpec::new(origin.step(dir.eps_set()[0]), dir.clone());
    debug_assert!(a_sites.iter().all(|z| half.contains(z) || dir.level(z) == 0));

    let cal = EnvSource::Fresh(env.with_seed(derive_seed(seed, &[TASK_MIX_CAL])));
    let mut cal_values = par_replicas(calibration, |i| Ok(cal.for_replica(i).kernel_at(&origin).prob(e)))?;
    cal_values.sort_by(f64::total_cmp);
    let threshold = cal_values[(cal_values.len() - 1) / 2];

    let q = dir.q();
    let mut b_sets = Vec::with_capacity(rs.len());
    for &r in rs {
        let k = (r / q).ceil() as i64;
        let ku: Vec<i64> = dir.u().iter().map(|c| c * k).collect();
        let sites = vec![origin.offset(&ku), origin.offset(&ku).offset(dir.u())];
        let rl: Vec<i64> = ku.clone();
        let cone = ConeSpec::new(origin.offset(&rl), dir.clone(), alpha)?;
        debug_assert!(sites.iter().all(|z| cone.contains(z)));
        b_sets.push(sites);
    }

    let main = EnvSource::Fresh(env.with_seed(derive_seed(seed, &[TASK_MIX])));
    let indicators = par_replicas(replicas, |i| {
        let w = main.for_replica(i);
        let ev = |z: &Site| w.kernel_at(z).prob(e) >= threshold;
        let a: Vec<bool> = a_sites.iter().map(ev).collect();
        let b: Vec<Vec<bool>> = b_sets.iter().map(|s| s.iter().map(ev).collect()).collect();
        Ok((a, b))
    })?;

    let n = replicas as f64;
    let mut warnings = Vec::new();
    let mut points = Vec::with_capacity(rs.len());
    for (ri, &r) in rs.iter().enumerate() {
        let mut pairs = Vec::new();
        for (ai, za) in a_sites.iter().enumerate() {
            let n_a = indicators.iter().filter(|(a, _)| a[ai]).count() as f64;
            if n_a / n < MIN_PA {
                warnings.push(format!("r = {r}: P[A] at {:?} below {MIN_PA}, pair skipped", za));
                continue;
            }
            for (bi, zb) in b_sets[ri].iter().enumerate() {
                let n_b = indicators.iter().filter(|(_, b)| b[ri][bi]).count() as f64;
                let n_ab = indicators.iter().filter(|(a, b)| a[ai] && b[ri][bi]).count() as f64;
                let p_b = n_b / n;
                let cond = n_ab / n_a;
                let var = p_b * (1.0 - p_b) * (1.0 / n_a - 1.0 / n);
                pairs.push(MixingPair {
                    a_site: za.coords().to_vec(),
                    b_site: zb.coords().to_vec(),
                    p_a: n_a / n,
                    p_b,
                    p_b_given_a: cond,
                    phi: (cond - p_b).abs(),
                    stderr: var.max(0.0).sqrt(),
                });
            }
        }
        let best = pairs.iter().max_by(|x, y| x.phi.total_cmp(&y.phi));
        let (phi, stderr) = best.map_or((0.0, 0.0), |p| (p.phi, p.stderr));
        points.push(MixingPoint { r, phi, stderr, pairs });
    }
    Ok(MixingProfile {
        family: format!(
            "threshold events omega(z, {}) >= calibrated median; A sites {{0, -e}}, B sites {{k u, (k+1) u}}, k = ceil(r/|u|_2)",
            crate::geometry::unit_name(e)
        ),
        threshold,
        points,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{example_law, ModelKind};
    use crate::geometry::make_direction;

    fn within(p: &MixingProfile, k: f64) {
        for pt in &p.points {
            assert!(pt.phi >= 0.0);
            assert!(pt.phi <= k * pt.stderr.max(1e-12), "r = {}: phi {} se {}", pt.r, pt.phi, pt.stderr);
        }
    }

    #[test]
    fn iid_environment_is_mixing() {
        let env = EnvironmentModel::new(2, ModelKind::IidUe { floors: vec![0.1; 4] }, 3).unwrap();
        let p = mixing_profile(&env, &make_direction(&[1, 0]).unwrap(), Alpha::Ratio(1, 2), &[1.0, 3.0, 8.0], 20_000, 2_001, 1)
            .unwrap();
        assert!(p.warnings.is_empty());
        within(&p, 4.0);
    }

    #[test]
    fn column_environment_beyond_first_column() {
        let env = EnvironmentModel::new(2, ModelKind::ColumnE1 { law: example_law() }, 3).unwrap();
        let p = mixing_profile(&env, &make_direction(&[1, 0]).unwrap(), Alpha::Ratio(1, 2), &[1.0, 2.0, 5.0], 20_000, 2_001, 2)
            .unwrap();
        // the larger p (probability 0.6) is the calibrated median
        assert_eq!(p.threshold, 0.375);
        within(&p, 4.0);
    }

    #[test]
    fn dependence_is_detected_inside_a_block() {
        // all tested sites share one block when the range is huge
        let env = EnvironmentModel::new(2, ModelKind::FiniteRangeMixing { floors: vec![0.1; 4], range: 1000 }, 3).unwrap();
        let p = mixing_profile(&env, &make_direction(&[1, 0]).unwrap(), Alpha::Ratio(1, 2), &[2.0], 20_000, 2_001, 3).unwrap();
        // sites straddle block -1 / 0 for the -e1 site only; 0 and (2,0) share a block
        assert!(p.points[0].phi > 6.0 * p.points[0].stderr);
    }
}
