//! Approximate regeneration times.
//!
//! `S_k` is the first time `n >= max(L, R_{k-1})` such that `X_{n-L}` is a
//! strict record in direction `l` and the last `L` symbols spell the
//! pattern; `R_k = S_k + D' o theta_{S_k}` is the next exit from the cone
//! anchored at `X_{S_k}`. With a finite horizon `N`, "`R_k` infinite" means
//! "no exit up to `N`", and `tau = S_K` for the first such `k`.

use std::collections::VecDeque;
use std::io::Write;

use crate::environment::EnvironmentModel;
use crate::error::{Error, Result};
use crate::geometry::{unit_index, Alpha, ConeSpec, DirectionSpec, Site};
use crate::rng::UniformSource;
use crate::walk::{AugmentedTrajectory, EpsilonLaw, StopCause, Symbol, WalkMode, Walker};

/// The forced-step pattern of length `L`.
#[derive(Clone, Debug)]
pub struct PatternSpec {
    dir: DirectionSpec,
    symbols: Vec<usize>,
    cone: ConeSpec,
}

/// `|u_1|` copies of `sgn(u_1) e_1`, then `|u_2|` copies of `sgn(u_2) e_2`,
/// and so on, repeated `L / p` times.
pub fn build_pattern(dir: &DirectionSpec, len: usize, alpha: Alpha) -> Result<PatternSpec> {
    let p = dir.p();
    if len == 0 || len as i64 % p != 0 {
        return Err(Error::PatternLength { len, p });
    }
    let cone = ConeSpec::new(Site::origin(dir.dim()), dir.clone(), alpha)?;
    let mut base = Vec::with_capacity(p as usize);
    for (axis, &c) in dir.u().iter().enumerate() {
        for _ in 0..c.abs() {
            base.push(unit_index(axis, c.signum()));
        }
    }
    let mut x = Site::origin(dir.dim());
    for (k, &e) in base.iter().enumerate() {
        x = x.step(e);
        if !cone.contains(&x) {
            return Err(Error::ConeViolation { prefix: k + 1 });
        }
    }
    let symbols = base.iter().copied().cycle().take(len).collect();
    Ok(PatternSpec { dir: dir.clone(), symbols, cone })
}

impl PatternSpec {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn dir(&self) -> &DirectionSpec {
        &self.dir
    }

    /// The cone `C(0, l, alpha)`; re-anchored at each `X_{S_k}`.
    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    /// `(L / p) u`.
    pub fn displacement(&self) -> Vec<i64> {
        let reps = self.symbols.len() as i64 / self.dir.p();
        self.dir.u().iter().map(|c| c * reps).collect()
    }
}

/// Relative exit time `D'` from the cone re-anchored at `X_{from}`, or
/// `None` if the trajectory stays inside to its end.
pub fn cone_exit_time(traj: &AugmentedTrajectory, cone: &ConeSpec, from: usize) -> Option<usize> {
    assert!(from <= traj.len(), "start index beyond trajectory");
    let mut it = traj.positions().skip(from);
    let anchored = cone.anchored_at(it.next().unwrap());
    it.position(|x| !anchored.contains(&x)).map(|i| i + 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attempt {
    pub s: usize,
    /// `None` when the walk stayed in the cone up to the horizon.
    pub r: Option<usize>,
    pub x_s: Site,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegenerationRecord {
    /// Time the detection started from (0 except inside a tau sequence).
    pub origin: usize,
    pub pattern_len: usize,
    pub horizon: usize,
    pub attempts: Vec<Attempt>,
    /// 1-based index of the successful attempt.
    pub k: Option<usize>,
    pub tau: Option<usize>,
    pub x_tau: Option<Site>,
}

impl RegenerationRecord {
    /// True when the horizon was reached while searching for the next `S`.
    pub fn censored(&self) -> bool {
        self.tau.is_none()
    }
}

enum Phase {
    Searching { from: usize },
    Watching { cone: ConeSpec },
}

/// Online detector fed one step at a time.
pub struct RegenerationDetector<'a> {
    pattern: &'a PatternSpec,
    origin: usize,
    time: usize,
    max_level: i64,
    // record flag of X_j for the last L + 1 positions
    records: VecDeque<bool>,
    eps: VecDeque<Symbol>,
    phase: Phase,
    attempts: Vec<Attempt>,
}

impl<'a> RegenerationDetector<'a> {
    /// Starts watching at absolute time `origin` from position `start`.
    pub fn new(pattern: &'a PatternSpec, origin: usize, start: Site) -> Self {
        let len = pattern.len();
        let mut records = VecDeque::with_capacity(len + 2);
        // the max over the empty set is -infinity
        records.push_back(true);
        Self {
            pattern,
            origin,
            time: 0,
            max_level: pattern.dir.level(&start),
            records,
            eps: VecDeque::with_capacity(len + 1),
            phase: Phase::Searching { from: len },
            attempts: Vec::new(),
        }
    }

    /// Feeds `eps_n` and `X_{n+1}`.
    pub fn push(&mut self, symbol: Symbol, next: Site) {
        let len = self.pattern.len();
        self.time += 1;
        let n = self.time;
        let level = self.pattern.dir.level(&next);
        self.records.push_back(level > self.max_level);
        self.max_level = self.max_level.max(level);
        if self.records.len() > len + 1 {
            self.records.pop_front();
        }
        self.eps.push_back(symbol);
        if self.eps.len() > len {
            self.eps.pop_front();
        }

        if let Phase::Watching { cone } = &self.phase {
            if !cone.contains(&next) {
                self.attempts.last_mut().unwrap().r = Some(n + self.origin);
                self.phase = Phase::Searching { from: n };
            }
        }
        if let Phase::Searching { from } = self.phase {
            if n >= from && n >= len && self.window_matches() {
                self.attempts.push(Attempt { s: n + self.origin, r: None, x_s: next });
                self.phase = Phase::Watching { cone: self.pattern.cone.anchored_at(next) };
            }
        }
    }

    fn window_matches(&self) -> bool {
        // records[0] is the flag of X_{n-L}
        self.records.len() == self.pattern.len() + 1
            && self.records[0]
            && self
                .eps
                .iter()
                .zip(&self.pattern.symbols)
                .all(|(s, &e)| *s == Symbol::forced(e))
    }

    pub fn finish(self) -> RegenerationRecord {
        let horizon = self.time + self.origin;
        let (k, tau, x_tau) = match self.phase {
            Phase::Watching { .. } => {
                let a = self.attempts.last().unwrap();
                (Some(self.attempts.len()), Some(a.s), Some(a.x_s))
            }
            Phase::Searching { .. } => (None, None, None),
        };
        RegenerationRecord {
            origin: self.origin,
            pattern_len: self.pattern.len(),
            horizon,
            attempts: self.attempts,
            k,
            tau,
            x_tau,
        }
    }
}

/// Runs detection over a stored augmented trajectory, starting at `from`.
pub fn detect_on_trajectory(traj: &AugmentedTrajectory, pattern: &PatternSpec, from: usize) -> Result<RegenerationRecord> {
    if traj.eps.len() != traj.len() {
        return Err(Error::Precondition("regeneration needs an augmented trajectory".into()));
    }
    let mut pos = traj.positions().skip(from);
    let mut det = RegenerationDetector::new(pattern, from, pos.next().expect("start beyond trajectory"));
    for (sym, x) in traj.eps[from..].iter().zip(pos) {
        det.push(*sym, x);
    }
    Ok(det.finish())
}

fn check_horizon(pattern: &PatternSpec, horizon: usize) -> Result<()> {
    if horizon < pattern.len() {
        return Err(Error::Config(format!("horizon {horizon} below pattern length {}", pattern.len())));
    }
    Ok(())
}

/// Simulates `horizon` augmented steps from `start` and detects `tau`
/// without storing the path.
pub fn detect_tau(
    env: &EnvironmentModel,
    pattern: &PatternSpec,
    law: &EpsilonLaw,
    start: Site,
    horizon: usize,
    src: &mut impl UniformSource,
) -> Result<RegenerationRecord> {
    check_horizon(pattern, horizon)?;
    let mode = WalkMode::Augmented(law.clone());
    let mut walker = Walker::new(env, &mode, start);
    let mut det = RegenerationDetector::new(pattern, 0, start);
    for _ in 0..horizon {
        let (_, sym) = walker.step(src)?;
        det.push(sym.unwrap(), walker.position());
    }
    Ok(det.finish())
}

/// Simulates and keeps the trajectory.
pub fn simulate_augmented(
    env: &EnvironmentModel,
    law: &EpsilonLaw,
    start: Site,
    horizon: usize,
    src: &mut impl UniformSource,
) -> Result<AugmentedTrajectory> {
    let mode = WalkMode::Augmented(law.clone());
    let mut walker = Walker::new(env, &mode, start);
    let mut steps = Vec::with_capacity(horizon);
    let mut eps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (e, sym) = walker.step(src)?;
        steps.push(e as u8);
        eps.push(sym.unwrap());
    }
    Ok(AugmentedTrajectory { start, steps, eps, stop: StopCause::Censored, stream_id: None })
}

/// `tau_i = tau_1 o theta_{tau_{i-1}} + tau_{i-1}` on one trajectory of
/// length `horizon`; stops early at the first censored detection.
pub fn tau_sequence_on(traj: &AugmentedTrajectory, pattern: &PatternSpec, count: usize) -> Result<Vec<RegenerationRecord>> {
    let mut out = Vec::with_capacity(count);
    let mut from = 0;
    while out.len() < count {
        let rec = detect_on_trajectory(traj, pattern, from)?;
        let Some(t) = rec.tau else { break };
        out.push(rec);
        from = t;
    }
    Ok(out)
}

pub fn tau_sequence(
    env: &EnvironmentModel,
    pattern: &PatternSpec,
    law: &EpsilonLaw,
    count: usize,
    horizon: usize,
    src: &mut impl UniformSource,
) -> Result<Vec<RegenerationRecord>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    check_horizon(pattern, horizon)?;
    let traj = simulate_augmented(env, law, Site::origin(env.dim()), horizon, src)?;
    tau_sequence_on(&traj, pattern, count)
}

/// Columns: replica id, L, K, tau, X_tau components, censor flag, horizon.
pub fn write_regeneration_csv(dim: usize, rows: &[(u64, RegenerationRecord)], mut w: impl Write) -> Result<()> {
    let mut header = vec!["replica".to_string(), "L".into(), "K".into(), "tau".into()];
    header.extend((1..=dim).map(|i| format!("x_tau_{i}")));
    header.extend(["censored".to_string(), "horizon".into()]);
    writeln!(w, "{}", header.join(","))?;
    for (id, r) in rows {
        let mut f = vec![id.to_string(), r.pattern_len.to_string()];
        f.push(r.k.map(|k| k.to_string()).unwrap_or_default());
        f.push(r.tau.map(|t| t.to_string()).unwrap_or_default());
        match r.x_tau {
            Some(x) => f.extend(x.coords().iter().map(|c| c.to_string())),
            None => f.extend(std::iter::repeat(String::new()).take(dim)),
        }
        f.push(u8::from(r.censored()).to_string());
        f.push(r.horizon.to_string());
        writeln!(w, "{}", f.join(","))?;
    }
    Ok(())
}
