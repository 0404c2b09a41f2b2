use serde::{Deserialize, Serialize};

use super::{par_replicas, replica_rng, EnvSource, MCEstimate};
use crate::error::{Error, Result};
use crate::geometry::{BoxClass, BoxSpec, DirectionSpec, Site};
use crate::walk::{WalkMode, Walker};

pub(crate) const TASK_BOX: u64 = 0xB0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BoxOutcome {
    Front,
    Failure,
    Censored,
}

/// Box-exit failure at one scale `L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxFailure {
    pub scale: f64,
    pub failures: u64,
    pub censored: u64,
    /// Failure fraction if every censored replica had succeeded / failed.
    pub lower: f64,
    pub upper: f64,
    /// Midpoint of `[lower, upper]`, stderr inflated by the half-width.
    pub estimate: MCEstimate,
}

/// `P_0[X_{T_B} not in ∂+B]` for `B = B_{L, cL, l}(0)`, per `L`.
pub fn box_failure_prob(
    env: &EnvSource,
    dir: &DirectionSpec,
    c: f64,
    scales: &[f64],
    replicas: u64,
    step_cap: u64,
    seed: u64,
) -> Result<Vec<BoxFailure>> {
    if replicas == 0 {
        return Err(Error::Config("replicas must be positive".into()));
    }
    if !(c > 0.0) {
        return Err(Error::Config(format!("c must be positive, got {c}")));
    }
    if scales.is_empty() || scales.windows(2).any(|w| w[1] <= w[0]) || scales[0] <= 0.0 {
        return Err(Error::Config("box scales must be positive and increasing".into()));
    }
    let d = dir.dim();
    let mut out = Vec::with_capacity(scales.len());
    for (k, &l) in scales.iter().enumerate() {
        let b = BoxSpec::new(Site::origin(d), l, c * l, dir.clone())?;
        let outcomes = par_replicas(replicas, |i| {
            let env = env.for_replica(i);
            let mut rng = replica_rng(seed, &[TASK_BOX, k as u64], i);
            let mut w = Walker::new(&env, &WalkMode::Quenched, Site::origin(d));
            while w.time() < step_cap as usize {
                w.step(&mut rng)?;
                let x = w.position();
                if !b.is_interior(&x) {
                    return Ok(match b.classify(&x) {
                        BoxClass::PositiveBoundary => BoxOutcome::Front,
                        _ => BoxOutcome::Failure,
                    });
                }
            }
            Ok(BoxOutcome::Censored)
        })?;
        let failures = outcomes.iter().filter(|o| **o == BoxOutcome::Failure).count() as u64;
        let censored = outcomes.iter().filter(|o| **o == BoxOutcome::Censored).count() as u64;
        let n = replicas as f64;
        let lower = failures as f64 / n;
        let upper = (failures + censored) as f64 / n;
        let mid = 0.5 * (lower + upper);
        let sd = if replicas > 1 { (mid * (1.0 - mid) / (n - 1.0)).sqrt() } else { 0.0 };
        let estimate = MCEstimate::new(mid, sd + 0.5 * (upper - lower), replicas, censored);
        out.push(BoxFailure { scale: l, failures, censored, lower, upper, estimate });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `p_L ~ A L^{-M}`
    Polynomial,
    /// `p_L ~ A e^{-r L}`
    Exponential,
}

/// Least squares line `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn ols(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit { slope, intercept, r2 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub scales: Vec<f64>,
    pub polynomial: LineFit,
    pub exponential: LineFit,
    /// `M` in `L^{-M}`.
    pub exponent: f64,
    /// `r` in `e^{-r L}`.
    pub rate: f64,
    pub winner: DecayModel,
}

/// Regresses `ln p` on `ln L` and on `L`; the larger `R^2` wins (ties go
/// to the polynomial model). Non-positive or non-finite points are dropped.
pub fn fit_decay(scales: &[f64], estimates: &[f64]) -> Result<DecayFit> {
    if scales.len() != estimates.len() {
        return Err(Error::InsufficientData("scales and estimates differ in length".into()));
    }
    let (xs, ps): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .zip(estimates)
        .filter(|(l, p)| **l > 0.0 && **p > 0.0 && p.is_finite())
        .map(|(l, p)| (*l, *p))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} usable scales, need 3", xs.len())));
    }
    let logp: Vec<f64> = ps.iter().map(|p| p.ln()).collect();
    let logl: Vec<f64> = xs.iter().map(|l| l.ln()).collect();
    let polynomial = ols(&logl, &logp);
    let exponential = ols(&xs, &logp);
    let winner = if exponential.r2 > polynomial.r2 { DecayModel::Exponential } else { DecayModel::Polynomial };
    Ok(DecayFit {
        scales: xs,
        exponent: -polynomial.slope,
        rate: -exponential.slope,
        polynomial,
        exponential,
        winner,
    })
}
