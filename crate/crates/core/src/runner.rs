//! Executes a validated experiment on a dedicated thread pool and emits its
//! report.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use crate::config::{validate, Experiment, ExperimentConfig, Plan, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::estimators::{
    box_failure_prob, direction_estimate, fit_decay, mixing_profile, par_replicas, regeneration_second_moment,
    replica_rng, stacked_box_lower_bound, survival_prob_d, EnvSource, TASK_BOX, TASK_DIRECTION, TASK_MIX, TASK_MIX_CAL,
    TASK_REGEN, TASK_SURVIVAL,
};
use crate::oracles::{
    avoidance_dp, bonferroni_lower_bound, chung_hitting, enumerate_path_law, inputs_digest, kalikow_kernel,
    pairwise_occurrence_sum, total_variation, OracleRecord, PathLaw,
};
use crate::regeneration::{detect_on_trajectory, write_regeneration_csv, RegenerationRecord};
use crate::report::{emit_report, Artifact, EstimatorRow, RunReport, StreamInfo, Summary};
use crate::rng::derive_seed;
use crate::walk::{run_until, Symbol, WalkMode};

pub(crate) const TASK_TRAJECTORY: u64 = 0x7A;

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    /// Rejected before any work started.
    Invalid(Error),
    Runtime(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Invalid(e) => write!(f, "invalid configuration: {e}"),
            RunError::Runtime(e) => write!(f, "run failed: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Outcome {
    results: Value,
    artifacts: Vec<Artifact>,
    streams: Vec<StreamInfo>,
    warnings: Vec<String>,
}

/// Validates, runs and writes the report into `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> std::result::Result<RunReport, RunError> {
    let plan = validate(config).map_err(RunError::Invalid)?;
    let workers = config.workers.unwrap_or_else(default_workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Runtime(Error::Io(e.to_string())))?;
    let t0 = Instant::now();
    let outcome = pool.install(|| execute(&plan)).map_err(RunError::Runtime)?;
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        kind: config.experiment.name().into(),
        config_digest: config.digest(),
        master_seed: config.seed,
        streams: outcome.streams,
        outputs: Vec::new(),
        results: outcome.results,
        warnings: outcome.warnings,
    };
    emit_report(out, summary, &outcome.artifacts, t0.elapsed().as_secs_f64()).map_err(RunError::Runtime)
}

fn env_info(plan: &Plan) -> Value {
    match &plan.env {
        None => Value::Null,
        Some(e) => json!({
            "model": e.template().name(),
            "seed": e.template().seed(),
            "fresh_per_replica": matches!(e, EnvSource::Fresh(_)),
        }),
    }
}

fn execute(plan: &Plan) -> Result<Outcome> {
    let cfg = &plan.config;
    let seed = cfg.seed;
    let mut out = Outcome { results: Value::Null, artifacts: Vec::new(), streams: Vec::new(), warnings: Vec::new() };
    match &cfg.experiment {
        Experiment::Trajectory { steps, replicas, .. } => {
            let env = plan.env.as_ref().unwrap();
            let mode = match &plan.law {
                Some(l) => WalkMode::Augmented(l.clone()),
                None => WalkMode::Quenched,
            };
            let start = plan.sites[0];
            let runs = par_replicas(*replicas, |i| {
                let env = env.for_replica(i);
                let mut rng = replica_rng(seed, &[TASK_TRAJECTORY], i);
                let mut traj = run_until(&env, start, &mode, &[], Some(*steps), &mut rng)?;
                traj.stream_id = Some(i);
                let rec = plan.patterns.first().map(|p| detect_on_trajectory(&traj, p, 0)).transpose()?;
                let mut csv = Vec::new();
                traj.write_csv(&mut csv)?;
                Ok((traj.end(), rec, csv))
            })?;
            let width = replicas.saturating_sub(1).to_string().len().max(4);
            let mut rows: Vec<(u64, RegenerationRecord)> = Vec::new();
            let mut ends = Vec::new();
            for (i, (end, rec, csv)) in runs.into_iter().enumerate() {
                out.artifacts.push(Artifact { file: format!("trajectory_{i:0width$}.csv"), bytes: csv });
                ends.push(end.coords().to_vec());
                if let Some(r) = rec {
                    rows.push((i as u64, r));
                }
            }
            if !plan.patterns.is_empty() {
                let mut csv = Vec::new();
                write_regeneration_csv(env.template().dim(), &rows, &mut csv)?;
                out.artifacts.push(Artifact { file: "regeneration.csv".into(), bytes: csv });
            }
            out.streams.push(StreamInfo::new("trajectory", derive_seed(seed, &[TASK_TRAJECTORY]), *replicas));
            out.results = json!({
                "environment": env_info(plan),
                "mode": if plan.law.is_some() { "augmented" } else { "quenched" },
                "steps": steps,
                "end_positions": ends,
                "tau": rows.iter().map(|(_, r)| r.tau).collect::<Vec<_>>(),
            });
        }
        Experiment::BoxDecay { c, scales, replicas, step_cap, .. } => {
            let dir = plan.dir.as_ref().unwrap();
            let boxes = box_failure_prob(plan.env.as_ref().unwrap(), dir, *c, scales, *replicas, *step_cap, seed)?;
            let rows: Vec<EstimatorRow> = boxes.iter().map(|b| EstimatorRow::new(b.scale, &b.estimate)).collect();
            out.artifacts.push(Artifact::estimator("box_decay", &rows));
            for (k, l) in scales.iter().enumerate() {
                out.streams.push(StreamInfo::new(format!("box L={l}"), derive_seed(seed, &[TASK_BOX, k as u64]), *replicas));
            }
            // the smallest scale is left out of the fit
            let est: Vec<f64> = boxes.iter().map(|b| b.estimate.mean).collect();
            let fit = match fit_decay(&scales[1.min(scales.len())..], &est[1.min(est.len())..]) {
                Ok(f) => serde_json::to_value(f).unwrap(),
                Err(e) => {
                    out.warnings.push(format!("decay fit: {e}"));
                    Value::Null
                }
            };
            out.results = json!({ "environment": env_info(plan), "boxes": boxes, "fit": fit });
        }
        Experiment::Direction { ladder, replicas, .. } => {
            let stats = direction_estimate(plan.env.as_ref().unwrap(), plan.dir.as_ref().unwrap(), ladder, *replicas, seed)?;
            let table = |name: &str, f: &dyn Fn(&crate::estimators::DirectionStats) -> crate::estimators::MCEstimate| {
                let rows: Vec<EstimatorRow> = stats.iter().map(|s| EstimatorRow::new(s.n as f64, &f(s))).collect();
                Artifact::estimator(name, &rows)
            };
            out.artifacts.push(table("direction_dispersion", &|s| s.dispersion));
            out.artifacts.push(table("direction_angle", &|s| s.angle_to_reference));
            out.artifacts.push(table("direction_positive", &|s| s.positive_fraction));
            out.artifacts.push(table("direction_speed", &|s| s.speed));
            let mut units = String::from("n");
            for i in 0..plan.dir.as_ref().unwrap().dim() {
                units.push_str(&format!(",u_{}", i + 1));
            }
            units.push('\n');
            for s in &stats {
                for u in &s.unit_vectors {
                    units.push_str(&s.n.to_string());
                    for c in u {
                        units.push(',');
                        units.push_str(&crate::report::fmt_float(*c));
                    }
                    units.push('\n');
                }
            }
            out.artifacts.push(Artifact { file: "direction_units.csv".into(), bytes: units.into_bytes() });
            out.streams.push(StreamInfo::new("direction", derive_seed(seed, &[TASK_DIRECTION]), *replicas));
            let per_n: Vec<Value> = stats
                .iter()
                .map(|s| {
                    json!({
                        "n": s.n,
                        "at_origin": s.at_origin,
                        "mean_direction": s.mean_direction,
                        "velocity": s.velocity,
                    })
                })
                .collect();
            out.results = json!({ "environment": env_info(plan), "ladder": per_n });
        }
        Experiment::Survival { horizons, replicas, stacked, .. } => {
            let env = plan.env.as_ref().unwrap();
            let curve = survival_prob_d(env, plan.cone.as_ref().unwrap(), horizons, *replicas, seed)?;
            let rows: Vec<EstimatorRow> = curve.iter().map(|p| EstimatorRow::new(p.horizon as f64, &p.estimate)).collect();
            out.artifacts.push(Artifact::estimator("survival", &rows));
            out.streams.push(StreamInfo::new("survival", derive_seed(seed, &[TASK_SURVIVAL]), *replicas));
            let mut bound = Value::Null;
            if let Some(s) = stacked {
                let depths: Vec<f64> = (0..s.boxes).map(|i| 2f64.powi((s.m as usize + i) as i32)).collect();
                let dir = plan.dir.as_ref().unwrap();
                let boxes = box_failure_prob(env, dir, 2.0 * s.c, &depths, s.replicas, s.step_cap, seed)?;
                let rows: Vec<EstimatorRow> = boxes.iter().map(|b| EstimatorRow::new(b.scale, &b.estimate)).collect();
                out.artifacts.push(Artifact::estimator("stacked_boxes", &rows));
                for (k, l) in depths.iter().enumerate() {
                    out.streams.push(StreamInfo::new(format!("box L={l}"), derive_seed(seed, &[TASK_BOX, k as u64]), s.replicas));
                }
                let fails: Vec<f64> = boxes.iter().map(|b| b.estimate.mean).collect();
                let b = stacked_box_lower_bound(&fails, s.m, s.c, dir.dim(), s.push)?;
                let plateau = curve.last().unwrap().estimate;
                if b.bound > plateau.ci95[1] {
                    out.warnings.push(format!("stacked bound {} exceeds the survival plateau CI {:?}", b.bound, plateau.ci95));
                }
                bound = serde_json::to_value(b).unwrap();
            }
            out.results = json!({ "environment": env_info(plan), "curve": curve, "stacked_bound": bound });
        }
        Experiment::Regeneration { kappa, alpha, lens, replicas, horizon, sequence, .. } => {
            let dir = plan.dir.as_ref().unwrap();
            let env = plan.env.as_ref().unwrap();
            let m = regeneration_second_moment(env, dir, *kappa, alpha.0, lens, *replicas, *horizon, *sequence as usize, seed)?;
            let mut rows = Vec::new();
            let mut errors = Vec::new();
            for s in &m.per_len {
                match &s.estimate {
                    Some(e) => rows.push(EstimatorRow::new(s.pattern_len as f64, e)),
                    None => errors.push(json!({
                        "pattern_len": s.pattern_len,
                        "error": Error::InsufficientData(format!("every record censored at L = {}", s.pattern_len)).to_string(),
                    })),
                }
            }
            out.artifacts.push(Artifact::estimator("regeneration_moments", &rows));
            let mut recs: Vec<(u64, RegenerationRecord)> = Vec::new();
            for per_l in &m.records {
                recs.extend(per_l.iter().enumerate().map(|(i, r)| (i as u64, r.clone())));
            }
            let mut csv = Vec::new();
            write_regeneration_csv(dir.dim(), &recs, &mut csv)?;
            out.artifacts.push(Artifact { file: "regeneration.csv".into(), bytes: csv });
            out.streams.push(StreamInfo::new("regeneration", derive_seed(seed, &[TASK_REGEN]), *replicas));
            if m.spread_flag {
                out.warnings.push("second-moment estimates vary by more than a factor of 10".into());
            }
            out.results = json!({
                "environment": env_info(plan),
                "per_len": m.per_len,
                "spread_flag": m.spread_flag,
                "sequence_pairs": m.sequence_pairs,
                "sequence_violations": m.sequence_violations,
                "errors": errors,
            });
        }
        Experiment::Mixing { alpha, separations, replicas, calibration, .. } => {
            let env = plan.env.as_ref().unwrap().template();
            let p = mixing_profile(env, plan.dir.as_ref().unwrap(), alpha.0, separations, *replicas, *calibration, seed)?;
            let rows: Vec<EstimatorRow> = p
                .points
                .iter()
                .map(|pt| EstimatorRow { scale: pt.r, mean: pt.phi, stderr: pt.stderr, n: *replicas, censored: 0 })
                .collect();
            out.artifacts.push(Artifact::estimator("mixing", &rows));
            out.streams.push(StreamInfo::new("mixing environments", derive_seed(seed, &[TASK_MIX]), *replicas));
            out.streams.push(StreamInfo::new("mixing calibration", derive_seed(seed, &[TASK_MIX_CAL]), *calibration));
            out.warnings.extend(p.warnings.iter().cloned());
            out.results = json!({ "environment": env_info(plan), "profile": p });
        }
        Experiment::OracleEnumerate { n, .. } => {
            let env = plan.env.as_ref().unwrap().template();
            let start = plan.sites[0];
            let q = enumerate_path_law(env, start, *n, &WalkMode::Quenched)?;
            let mut value = json!({ "n": n, "start": start.coords(), "quenched": path_law_json(&q) });
            if let Some(law) = &plan.law {
                let a = enumerate_path_law(env, start, *n, &WalkMode::Augmented(law.clone()))?;
                value["augmented"] = path_law_json(&a);
                value["total_variation"] = json!(total_variation(&q, &a));
            }
            out.artifacts.push(oracle_artifact(plan, value, "full path enumeration"));
        }
        Experiment::OraclePattern { kappa, n, .. } => {
            let law = plan.law.as_ref().unwrap();
            let symbols: Vec<Symbol> = plan.patterns[0].symbols().iter().map(|&e| Symbol::forced(e)).collect();
            let r = avoidance_dp(&symbols, law, *n);
            let value = json!({
                "pattern": symbols.iter().map(|s| s.label()).collect::<Vec<_>>(),
                "avoidance": r,
                "pairwise_sum": pairwise_occurrence_sum(&symbols, *kappa),
                "bonferroni_lower_bound": bonferroni_lower_bound(&symbols, *kappa),
            });
            out.artifacts.push(oracle_artifact(plan, value, "prefix-automaton dynamic programming"));
        }
        Experiment::OracleChung { p, start, a, b } => {
            let value = json!(chung_hitting(p, *start, *a, *b)?);
            out.artifacts.push(oracle_artifact(plan, value, "log-space birth-death solution"));
        }
        Experiment::OracleKalikow { .. } => {
            let k = kalikow_kernel(&plan.sites, &plan.kernels)?;
            let value = json!({
                "sites": k.sites.iter().map(|s| s.coords().to_vec()).collect::<Vec<_>>(),
                "probs": k.probs,
                "drift": k.drift,
                "green": k.green,
            });
            out.artifacts.push(oracle_artifact(plan, value, "green function linear solve"));
        }
    }
    Ok(out)
}

fn path_law_json(law: &PathLaw) -> Value {
    let paths: Vec<Value> = law
        .probs
        .iter()
        .map(|(steps, p)| {
            let labels: Vec<String> = steps.iter().map(|&e| crate::geometry::unit_name(e as usize)).collect();
            json!([labels.join(" "), p])
        })
        .collect();
    json!({ "total": law.total(), "paths": paths })
}

fn oracle_artifact(plan: &Plan, value: Value, method: &str) -> Artifact {
    let inputs = json!({ "environment": plan.config.environment, "experiment": plan.config.experiment });
    let record = OracleRecord { value, method: method.into(), inputs_digest: inputs_digest(&inputs) };
    Artifact::json("oracle", &record)
}
