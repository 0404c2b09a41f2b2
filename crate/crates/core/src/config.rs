//! Experiment configuration: JSON with a schema version, validated in full
//! before any computation.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::environment::{check_uniform_ellipticity, EnvironmentModel, ModelKind, TransitionKernel};
use crate::error::{Error, Result};
use crate::estimators::EnvSource;
use crate::geometry::{make_direction, Alpha, ConeSpec, DirectionSpec, Site};
use crate::oracles::{check_domain, cube, MAX_ENUM_STEPS};
use crate::regeneration::{build_pattern, PatternSpec};
use crate::rng::derive_seed;
use crate::walk::EpsilonLaw;

pub const SCHEMA_VERSION: u32 = 1;
const ENV_SEED_TAG: u64 = 0xE0;

/// Integer direction, either `[1, -2]` or `"1,-2"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DirectionRepr", into = "Vec<i64>")]
pub struct DirectionInput(pub Vec<i64>);

#[derive(Deserialize)]
#[serde(untagged)]
enum DirectionRepr {
    List(Vec<i64>),
    Text(String),
}

impl TryFrom<DirectionRepr> for DirectionInput {
    type Error = Error;
    fn try_from(r: DirectionRepr) -> Result<Self> {
        match r {
            DirectionRepr::List(v) => Ok(DirectionInput(v)),
            DirectionRepr::Text(s) => parse_direction(&s).map(DirectionInput),
        }
    }
}

impl From<DirectionInput> for Vec<i64> {
    fn from(d: DirectionInput) -> Self {
        d.0
    }
}

/// Parses `"1,-2"`, `"(1, -2)"` or `"[1 -2]"` into integer components.
pub fn parse_direction(s: &str) -> Result<Vec<i64>> {
    let t = s.trim();
    let t = t
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .or_else(|| t.strip_prefix('[').and_then(|r| r.strip_suffix(']')))
        .unwrap_or(t);
    let parts: Vec<&str> = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        return Err(Error::InvalidDirection(format!("no components in {s:?}")));
    }
    parts
        .iter()
        .map(|p| p.parse::<i64>().map_err(|e| Error::InvalidDirection(format!("component {p:?}: {e}"))))
        .collect()
}

/// Cone parameter: a number or an exact ratio `"a/b"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AlphaRepr", into = "AlphaRepr")]
pub struct AlphaInput(pub Alpha);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<AlphaRepr> for AlphaInput {
    type Error = Error;
    fn try_from(r: AlphaRepr) -> Result<Self> {
        match r {
            AlphaRepr::Number(a) => Ok(AlphaInput(Alpha::Real(a))),
            AlphaRepr::Text(s) => parse_alpha(&s).map(AlphaInput),
        }
    }
}

impl From<AlphaInput> for AlphaRepr {
    fn from(a: AlphaInput) -> Self {
        match a.0 {
            Alpha::Real(x) => AlphaRepr::Number(x),
            Alpha::Ratio(p, q) => AlphaRepr::Text(format!("{p}/{q}")),
        }
    }
}

pub fn parse_alpha(s: &str) -> Result<Alpha> {
    let bad = || Error::InvalidGeometry(format!("alpha {s:?} is neither a number nor a ratio a/b"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p = p.trim().parse::<i64>().map_err(|_| bad())?;
            let q = q.trim().parse::<i64>().map_err(|_| bad())?;
            Ok(Alpha::Ratio(p, q))
        }
        None => s.trim().parse::<f64>().map(Alpha::Real).map_err(|_| bad()),
    }
}

fn default_dim() -> usize {
    2
}

fn default_one() -> u64 {
    1
}

fn default_push() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub model: ModelKind,
    /// Defaults to a seed derived from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Realize an independent environment for every replica.
    #[serde(default)]
    pub fresh_per_replica: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackedConfig {
    /// Box `i` has depth `2^{m+i}` and half-width `2 c 2^{m+i}`.
    pub m: u32,
    pub boxes: usize,
    pub c: f64,
    pub replicas: u64,
    pub step_cap: u64,
    #[serde(default = "default_push")]
    pub push: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KalikowRealization {
    pub weight: f64,
    /// One kernel per site of `sites`, in order.
    pub kernels: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Trajectory {
        steps: usize,
        #[serde(default = "default_one")]
        replicas: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<Vec<i64>>,
        /// Forced-step direction; required with `kappa`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u: Option<DirectionInput>,
        /// Augmented mode when present.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
        /// Detects `tau` on each path when present.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pattern_len: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<AlphaInput>,
    },
    BoxDecay {
        u: DirectionInput,
        c: f64,
        scales: Vec<f64>,
        replicas: u64,
        step_cap: u64,
    },
    Direction {
        u: DirectionInput,
        ladder: Vec<u64>,
        replicas: u64,
    },
    Survival {
        u: DirectionInput,
        alpha: AlphaInput,
        horizons: Vec<u64>,
        replicas: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stacked: Option<StackedConfig>,
    },
    Regeneration {
        u: DirectionInput,
        kappa: f64,
        alpha: AlphaInput,
        lens: Vec<usize>,
        replicas: u64,
        horizon: usize,
        #[serde(default = "default_one")]
        sequence: u64,
    },
    Mixing {
        u: DirectionInput,
        alpha: AlphaInput,
        separations: Vec<f64>,
        replicas: u64,
        calibration: u64,
    },
    OracleEnumerate {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<Vec<i64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u: Option<DirectionInput>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kappa: Option<f64>,
    },
    OraclePattern {
        u: DirectionInput,
        len: usize,
        alpha: AlphaInput,
        kappa: f64,
        n: usize,
    },
    OracleChung {
        p: Vec<f64>,
        start: i64,
        a: i64,
        b: i64,
    },
    OracleKalikow {
        sites: Vec<Vec<i64>>,
        realizations: Vec<KalikowRealization>,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Trajectory { .. } => "trajectory",
            Experiment::BoxDecay { .. } => "box-decay",
            Experiment::Direction { .. } => "direction",
            Experiment::Survival { .. } => "survival",
            Experiment::Regeneration { .. } => "regeneration",
            Experiment::Mixing { .. } => "mixing",
            Experiment::OracleEnumerate { .. } => "oracle-enumerate",
            Experiment::OraclePattern { .. } => "oracle-pattern",
            Experiment::OracleChung { .. } => "oracle-chung",
            Experiment::OracleKalikow { .. } => "oracle-kalikow",
        }
    }

    pub fn verb(&self) -> Verb {
        match self {
            Experiment::Trajectory { .. } => Verb::Simulate,
            Experiment::BoxDecay { .. }
            | Experiment::Direction { .. }
            | Experiment::Survival { .. }
            | Experiment::Regeneration { .. }
            | Experiment::Mixing { .. } => Verb::Estimate,
            _ => Verb::Oracle,
        }
    }

    fn needs_environment(&self) -> bool {
        !matches!(
            self,
            Experiment::OraclePattern { .. } | Experiment::OracleChung { .. } | Experiment::OracleKalikow { .. }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    Simulate,
    Estimate,
    Oracle,
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verb::Simulate => "simulate",
            Verb::Estimate => "estimate",
            Verb::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentConfig>,
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// The config with run-placement fields cleared; two configs that differ
    /// only in worker count or output directory share a digest.
    pub fn canonical(&self) -> ExperimentConfig {
        ExperimentConfig { workers: None, out: None, ..self.clone() }
    }

    pub fn digest(&self) -> String {
        crate::oracles::inputs_digest(&self.canonical())
    }

    pub fn environment_seed(&self) -> Option<u64> {
        self.environment.as_ref().map(|e| e.seed.unwrap_or_else(|| derive_seed(self.seed, &[ENV_SEED_TAG])))
    }
}

/// Everything the runner needs, built and checked up front.
#[derive(Clone, Debug)]
pub struct Plan {
    pub config: ExperimentConfig,
    pub env: Option<EnvSource>,
    pub dir: Option<DirectionSpec>,
    pub patterns: Vec<PatternSpec>,
    pub law: Option<EpsilonLaw>,
    pub cone: Option<ConeSpec>,
    pub kernels: Vec<(f64, Vec<TransitionKernel>)>,
    pub sites: Vec<Site>,
}

fn field(name: &str, e: Error) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("{name}: {m}")),
        other => Error::Config(format!("{name}: {other}")),
    }
}

fn invalid(name: &str, msg: impl Into<String>) -> Error {
    Error::Config(format!("{name}: {}", msg.into()))
}

fn positive_count(name: &str, n: u64, min: u64) -> Result<()> {
    if n < min {
        return Err(invalid(name, format!("must be at least {min}, got {n}")));
    }
    Ok(())
}

fn increasing<T: PartialOrd + Copy + fmt::Debug + Default>(name: &str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        return Err(invalid(name, "must not be empty"));
    }
    if !(xs[0] > T::default()) || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(name, format!("must be positive and strictly increasing, got {xs:?}")));
    }
    Ok(())
}

fn direction(name: &str, u: &DirectionInput, dim: Option<usize>) -> Result<DirectionSpec> {
    let d = make_direction(&u.0).map_err(|e| field(name, e))?;
    if let Some(dim) = dim {
        if d.dim() != dim {
            return Err(invalid(name, format!("has {} components but the environment has dimension {dim}", d.dim())));
        }
    }
    Ok(d)
}

fn start_site(name: &str, start: &Option<Vec<i64>>, dim: usize) -> Result<Site> {
    match start {
        None => Ok(Site::origin(dim)),
        Some(v) if v.len() == dim => Site::try_new(v).map_err(|e| field(name, e)),
        Some(v) => Err(invalid(name, format!("has {} components, expected {dim}", v.len()))),
    }
}

fn epsilon_law(env: &EnvironmentModel, dir: &DirectionSpec, kappa: f64) -> Result<EpsilonLaw> {
    if !(kappa > 0.0) {
        return Err(invalid("experiment.kappa", format!("must be positive, got {kappa}")));
    }
    let law = EpsilonLaw::new(dir, kappa).map_err(|e| field("experiment.kappa", e))?;
    let report = check_uniform_ellipticity(env, dir, kappa, &cube(env.dim(), 4)).map_err(|e| field("experiment.kappa", e))?;
    if !report.passes {
        return Err(invalid(
            "experiment.kappa",
            format!("environment is not elliptic at 2 kappa = {}: min forced-step probability {}", 2.0 * kappa, report.min_prob),
        ));
    }
    Ok(law)
}

/// Checks every precondition of the configured experiment.
pub fn validate(config: &ExperimentConfig) -> Result<Plan> {
    if config.schema_version != SCHEMA_VERSION {
        return Err(invalid("schema_version", format!("expected {SCHEMA_VERSION}")));
    }
    if config.workers == Some(0) {
        return Err(invalid("workers", "must be positive"));
    }
    let exp = &config.experiment;
    let env = match (&config.environment, exp.needs_environment()) {
        (Some(e), _) => {
            let model = EnvironmentModel::new(e.dim, e.model.clone(), config.environment_seed().unwrap())
                .map_err(|err| field("environment.model", err))?;
            Some(if e.fresh_per_replica { EnvSource::Fresh(model) } else { EnvSource::Shared(model) })
        }
        (None, true) => return Err(invalid("environment", format!("required by {}", exp.name()))),
        (None, false) => None,
    };
    let dim = env.as_ref().map(|e| e.template().dim());
    let mut plan = Plan {
        config: config.clone(),
        env,
        dir: None,
        patterns: Vec::new(),
        law: None,
        cone: None,
        kernels: Vec::new(),
        sites: Vec::new(),
    };
    match exp {
        Experiment::Trajectory { steps, replicas, start, u, kappa, pattern_len, alpha } => {
            let dim = dim.unwrap();
            if *steps == 0 {
                return Err(invalid("experiment.steps", "must be positive"));
            }
            positive_count("experiment.replicas", *replicas, 1)?;
            plan.sites = vec![start_site("experiment.start", start, dim)?];
            if let Some(u) = u {
                plan.dir = Some(direction("experiment.u", u, Some(dim))?);
            }
            if let Some(k) = kappa {
                let dir = plan.dir.as_ref().ok_or_else(|| invalid("experiment.u", "required with kappa"))?;
                plan.law = Some(epsilon_law(plan.env.as_ref().unwrap().template(), dir, *k)?);
            }
            if let Some(l) = pattern_len {
                if plan.law.is_none() {
                    return Err(invalid("experiment.pattern_len", "requires kappa (augmented mode)"));
                }
                let a = alpha.ok_or_else(|| invalid("experiment.alpha", "required with pattern_len"))?;
                let p = build_pattern(plan.dir.as_ref().unwrap(), *l, a.0).map_err(|e| field("experiment.pattern_len", e))?;
                if p.len() > *steps {
                    return Err(invalid("experiment.steps", format!("must be at least the pattern length {l}")));
                }
                plan.patterns.push(p);
            }
        }
        Experiment::BoxDecay { u, c, scales, replicas, step_cap } => {
            plan.dir = Some(direction("experiment.u", u, dim)?);
            if !(*c > 0.0) || !c.is_finite() {
                return Err(invalid("experiment.c", format!("must be positive, got {c}")));
            }
            increasing("experiment.scales", scales)?;
            positive_count("experiment.replicas", *replicas, 1)?;
            positive_count("experiment.step_cap", *step_cap, 1)?;
        }
        Experiment::Direction { u, ladder, replicas } => {
            plan.dir = Some(direction("experiment.u", u, dim)?);
            increasing("experiment.ladder", ladder)?;
            positive_count("experiment.replicas", *replicas, 2)?;
        }
        Experiment::Survival { u, alpha, horizons, replicas, stacked } => {
            let d = direction("experiment.u", u, dim)?;
            plan.cone = Some(ConeSpec::new(Site::origin(d.dim()), d.clone(), alpha.0).map_err(|e| field("experiment.alpha", e))?);
            plan.dir = Some(d);
            increasing("experiment.horizons", horizons)?;
            positive_count("experiment.replicas", *replicas, 1)?;
            if let Some(s) = stacked {
                if s.boxes == 0 {
                    return Err(invalid("experiment.stacked.boxes", "must be positive"));
                }
                if !(s.c > 0.0) || !s.c.is_finite() {
                    return Err(invalid("experiment.stacked.c", "must be positive"));
                }
                if !(0.0..=1.0).contains(&s.push) {
                    return Err(invalid("experiment.stacked.push", "must lie in [0, 1]"));
                }
                if dim.unwrap() < 2 {
                    return Err(invalid("experiment.stacked", "needs dimension at least 2"));
                }
                if s.m as usize + s.boxes > 40 {
                    return Err(invalid("experiment.stacked.boxes", "box depths overflow"));
                }
                positive_count("experiment.stacked.replicas", s.replicas, 1)?;
                positive_count("experiment.stacked.step_cap", s.step_cap, 1)?;
            }
        }
        Experiment::Regeneration { u, kappa, alpha, lens, replicas, horizon, sequence } => {
            let d = direction("experiment.u", u, dim)?;
            plan.law = Some(epsilon_law(plan.env.as_ref().unwrap().template(), &d, *kappa)?);
            increasing("experiment.lens", lens)?;
            for &l in lens {
                plan.patterns.push(build_pattern(&d, l, alpha.0).map_err(|e| field("experiment.lens", e))?);
            }
            if lens.iter().any(|&l| l > *horizon) {
                return Err(invalid("experiment.horizon", "must be at least every pattern length"));
            }
            positive_count("experiment.replicas", *replicas, 1)?;
            positive_count("experiment.sequence", *sequence, 1)?;
            plan.dir = Some(d);
        }
        Experiment::Mixing { u, alpha, separations, replicas, calibration } => {
            let d = direction("experiment.u", u, dim)?;
            ConeSpec::new(Site::origin(d.dim()), d.clone(), alpha.0).map_err(|e| field("experiment.alpha", e))?;
            plan.dir = Some(d);
            if separations.is_empty() || separations.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                return Err(invalid("experiment.separations", "must be non-empty and positive"));
            }
            positive_count("experiment.replicas", *replicas, 2)?;
            positive_count("experiment.calibration", *calibration, 1)?;
        }
        Experiment::OracleEnumerate { n, start, u, kappa } => {
            let dim = dim.unwrap();
            if *n > MAX_ENUM_STEPS {
                return Err(field("experiment.n", Error::SizeGuard(format!("n = {n} exceeds {MAX_ENUM_STEPS}"))));
            }
            plan.sites = vec![start_site("experiment.start", start, dim)?];
            match (u, kappa) {
                (Some(u), Some(k)) => {
                    let d = direction("experiment.u", u, Some(dim))?;
                    plan.law = Some(epsilon_law(plan.env.as_ref().unwrap().template(), &d, *k)?);
                    plan.dir = Some(d);
                }
                (None, None) => {}
                _ => return Err(invalid("experiment.kappa", "u and kappa go together")),
            }
        }
        Experiment::OraclePattern { u, len, alpha, kappa, n: _ } => {
            let d = direction("experiment.u", u, None)?;
            if !(*kappa > 0.0) {
                return Err(invalid("experiment.kappa", format!("must be positive, got {kappa}")));
            }
            plan.law = Some(EpsilonLaw::new(&d, *kappa).map_err(|e| field("experiment.kappa", e))?);
            plan.patterns.push(build_pattern(&d, *len, alpha.0).map_err(|e| field("experiment.len", e))?);
            plan.dir = Some(d);
        }
        Experiment::OracleChung { p, start, a, b } => {
            if *b <= a.saturating_add(1) {
                return Err(invalid("experiment.b", format!("degenerate interval [{a}, {b}]")));
            }
            if !(a < start && start < b) {
                return Err(invalid("experiment.start", format!("{start} outside ({a}, {b})")));
            }
            if p.len() as i128 != *b as i128 - *a as i128 - 1 {
                return Err(invalid("experiment.p", format!("expected {} interior values, got {}", b - a - 1, p.len())));
            }
            if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
                return Err(invalid("experiment.p", format!("{bad} outside (0, 1)")));
            }
        }
        Experiment::OracleKalikow { sites, realizations } => {
            let d = sites.first().map(|s| s.len()).ok_or_else(|| invalid("experiment.sites", "must not be empty"))?;
            let mut v = Vec::with_capacity(sites.len());
            for (i, s) in sites.iter().enumerate() {
                if s.len() != d {
                    return Err(invalid(&format!("experiment.sites[{i}]"), "dimension differs from the first site"));
                }
                v.push(Site::try_new(s).map_err(|e| field(&format!("experiment.sites[{i}]"), e))?);
            }
            check_domain(&v).map_err(|e| field("experiment.sites", e))?;
            if realizations.is_empty() {
                return Err(invalid("experiment.realizations", "must not be empty"));
            }
            for (r, real) in realizations.iter().enumerate() {
                let name = format!("experiment.realizations[{r}]");
                if !(real.weight > 0.0) || !real.weight.is_finite() {
                    return Err(invalid(&format!("{name}.weight"), "must be positive"));
                }
                if real.kernels.len() != v.len() {
                    return Err(invalid(&format!("{name}.kernels"), format!("expected {} kernels", v.len())));
                }
                let mut ks = Vec::with_capacity(v.len());
                for (i, k) in real.kernels.iter().enumerate() {
                    let kname = format!("{name}.kernels[{i}]");
                    if k.len() != 2 * d {
                        return Err(invalid(&kname, format!("expected {} probabilities", 2 * d)));
                    }
                    ks.push(TransitionKernel::new(k).map_err(|e| field(&kname, e))?);
                }
                plan.kernels.push((real.weight, ks));
            }
            plan.sites = v;
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BOX: &str = r#"{
        "schema_version": 1,
        "seed": 7,
        "environment": {"model": {"kind": "iid_ue", "floors": [0.3, 0.05, 0.05, 0.05]}},
        "experiment": {"kind": "box-decay", "u": [1, 0], "c": 1.0, "scales": [4, 8], "replicas": 10, "step_cap": 1000}
    }"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_json(BOX).unwrap();
        assert_eq!(cfg.experiment.name(), "box-decay");
        assert_eq!(cfg.experiment.verb(), Verb::Estimate);
        let plan = validate(&cfg).unwrap();
        assert!(matches!(plan.env, Some(EnvSource::Shared(_))));
    }

    #[test]
    fn directions_and_alphas_in_text_form() {
        assert_eq!(parse_direction("1,-2").unwrap(), vec![1, -2]);
        assert_eq!(parse_direction(" (3, 0) ").unwrap(), vec![3, 0]);
        assert_eq!(parse_direction("[1 1 0]").unwrap(), vec![1, 1, 0]);
        assert!(parse_direction("").is_err());
        assert!(parse_direction("1,x").is_err());
        assert_eq!(parse_alpha("1/9").unwrap(), Alpha::Ratio(1, 9));
        assert_eq!(parse_alpha("0.5").unwrap(), Alpha::Real(0.5));
        assert!(parse_alpha("one").is_err());
        let cfg = ExperimentConfig::from_json(&BOX.replace("[1, 0]", "\"1,0\"")).unwrap();
        assert!(matches!(&cfg.experiment, Experiment::BoxDecay { u, .. } if u.0 == vec![1, 0]));
    }

    #[test]
    fn unknown_model_names_the_field() {
        let err = ExperimentConfig::from_json(&BOX.replace("iid_ue", "marble")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("environment.model"), "{msg}");
        assert!(msg.contains("marble"), "{msg}");
    }

    #[test]
    fn unknown_kind_and_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(&BOX.replace("box-decay", "box-party")).is_err());
        let err = ExperimentConfig::from_json(&BOX.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1")).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn schema_version_is_checked() {
        let err = ExperimentConfig::from_json(&BOX.replace("\"schema_version\": 1", "\"schema_version\": 9")).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn zero_replicas_fails_validation() {
        let cfg = ExperimentConfig::from_json(&BOX.replace("\"replicas\": 10", "\"replicas\": 0")).unwrap();
        let err = validate(&cfg).unwrap_err();
        assert!(err.to_string().contains("experiment.replicas"), "{err}");
    }

    #[test]
    fn dimension_mismatch_and_missing_environment() {
        let cfg = ExperimentConfig::from_json(&BOX.replace("[1, 0]", "[1, 0, 0]")).unwrap();
        assert!(validate(&cfg).unwrap_err().to_string().contains("experiment.u"));
        let mut cfg = ExperimentConfig::from_json(BOX).unwrap();
        cfg.environment = None;
        assert!(validate(&cfg).unwrap_err().to_string().contains("environment"));
    }

    #[test]
    fn ellipticity_is_checked_for_kappa() {
        let text = r#"{
            "schema_version": 1,
            "environment": {"model": {"kind": "iid_ue", "floors": [0.3, 0.05, 0.05, 0.05]}},
            "experiment": {"kind": "regeneration", "u": [1, 0], "kappa": 0.2, "alpha": "1/9",
                           "lens": [2], "replicas": 4, "horizon": 100}
        }"#;
        let err = validate(&ExperimentConfig::from_json(text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("experiment.kappa"), "{err}");
        let ok = text.replace("0.2,", "0.15,");
        validate(&ExperimentConfig::from_json(&ok).unwrap()).unwrap();
    }

    #[test]
    fn oracle_preconditions() {
        let chung = |p: &str, s: i64, a: i64, b: i64| {
            let text = format!(
                r#"{{"schema_version": 1, "experiment": {{"kind": "oracle-chung", "p": {p}, "start": {s}, "a": {a}, "b": {b}}}}}"#
            );
            validate(&ExperimentConfig::from_json(&text).unwrap())
        };
        assert!(chung("[0.6]", 0, -1, 1).is_ok());
        assert!(chung("[]", 0, 0, 1).is_err());
        assert!(chung("[0.6]", 1, -1, 1).is_err());
        assert!(chung("[1.0]", 0, -1, 1).is_err());
        let text = r#"{"schema_version": 1, "environment": {"model": {"kind": "homogeneous", "probs": [0.25, 0.25, 0.25, 0.25]}},
                       "experiment": {"kind": "oracle-enumerate", "n": 7}}"#;
        assert!(validate(&ExperimentConfig::from_json(text).unwrap()).unwrap_err().to_string().contains("experiment.n"));
    }

    #[test]
    fn digest_ignores_placement() {
        let a = ExperimentConfig::from_json(BOX).unwrap();
        let mut b = a.clone();
        b.workers = Some(8);
        b.out = Some("/tmp/x".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 8;
        assert_ne!(a.digest(), b.digest());
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        let env = (prop::collection::vec(0.0f64..0.2, 4), any::<Option<u64>>(), any::<bool>()).prop_map(|(floors, seed, fresh)| {
            EnvironmentConfig { dim: 2, model: ModelKind::IidUe { floors }, seed, fresh_per_replica: fresh }
        });
        let exp = prop_oneof![
            (1u64..100, prop::collection::vec(1u64..1000, 1..4)).prop_map(|(replicas, ladder)| Experiment::Direction {
                u: DirectionInput(vec![1, 1]),
                ladder,
                replicas
            }),
            (1usize..4, 1u64..9, 0.01f64..0.3).prop_map(|(len, q, kappa)| Experiment::OraclePattern {
                u: DirectionInput(vec![1, 0]),
                len,
                alpha: AlphaInput(Alpha::Ratio(1, q as i64)),
                kappa,
                n: 10
            }),
            (0.1f64..1.0).prop_map(|a| Experiment::Survival {
                u: DirectionInput(vec![2, -1]),
                alpha: AlphaInput(Alpha::Real(a)),
                horizons: vec![1, 10],
                replicas: 3,
                stacked: Some(StackedConfig { m: 1, boxes: 2, c: 0.5, replicas: 3, step_cap: 9, push: 0.25 })
            }),
        ];
        (any::<u64>(), prop::option::of(1usize..16), prop::option::of(env), exp).prop_map(|(seed, workers, environment, experiment)| {
            ExperimentConfig { schema_version: SCHEMA_VERSION, seed, workers, out: None, environment, experiment }
        })
    }

    proptest! {
        #[test]
        fn config_round_trips(cfg in arb_config()) {
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.digest(), cfg.digest());
        }
    }
}
