//! Quenched walks and the forced-step (epsilon-augmented) decomposition.
//!
//! In augmented mode each step first draws a symbol from
//! `W = E ∪ {0}`: a symbol `e ∈ E` (probability `kappa` each) forces the
//! step `e`; the symbol `0` lets the walk move with the residual kernel
//! `(omega(x, e) - kappa 1_{e ∈ E}) / (1 - kappa |E|)`. Averaged over the
//! symbols this is exactly the quenched kernel.
//!
//! Draw order is fixed: one uniform per quenched step; two per augmented
//! step (symbol, then residual), the second consumed even when the step is
//! forced so that step `k` always reads draws `2k` and `2k + 1`.

use std::io::Write;

use crate::environment::{EnvironmentModel, TransitionKernel};
use crate::error::{Error, Result};
use crate::geometry::{unit_name, DirectionSpec, Site};
use crate::rng::UniformSource;

/// Symbol of `W = E ∪ {0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Zero,
    Forced(u8),
}

impl Symbol {
    pub fn forced(e: usize) -> Self {
        Symbol::Forced(e as u8)
    }

    pub fn label(&self) -> String {
        match self {
            Symbol::Zero => "0".into(),
            Symbol::Forced(e) => unit_name(*e as usize),
        }
    }
}

/// The product law `Q` of the symbol stream.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonLaw {
    kappa: f64,
    eps: Vec<usize>,
}

impl EpsilonLaw {
    /// `E` is built from the signs of `dir`; requires `0 < kappa |E| < 1`.
    pub fn new(dir: &DirectionSpec, kappa: f64) -> Result<Self> {
        let eps = dir.eps_set();
        if eps.is_empty() {
            return Err(Error::InvalidDirection("empty forced-step set".into()));
        }
        if !(kappa > 0.0) {
            return Err(Error::InvalidLaw(format!("kappa must be positive, got {kappa}")));
        }
        if kappa * eps.len() as f64 >= 1.0 {
            return Err(Error::InvalidLaw(format!(
                "kappa |E| = {} must be below 1",
                kappa * eps.len() as f64
            )));
        }
        Ok(Self { kappa, eps })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn eps_set(&self) -> &[usize] {
        &self.eps
    }

    #[inline]
    pub fn in_eps(&self, e: usize) -> bool {
        self.eps.contains(&e)
    }

    pub fn zero_prob(&self) -> f64 {
        1.0 - self.kappa * self.eps.len() as f64
    }

    pub fn prob(&self, s: Symbol) -> f64 {
        match s {
            Symbol::Zero => self.zero_prob(),
            Symbol::Forced(e) if self.in_eps(e as usize) => self.kappa,
            Symbol::Forced(_) => 0.0,
        }
    }

    /// All symbols of `W`, `0` first.
    pub fn alphabet(&self) -> Vec<Symbol> {
        std::iter::once(Symbol::Zero)
            .chain(self.eps.iter().map(|&e| Symbol::forced(e)))
            .collect()
    }

    #[inline]
    pub fn symbol_from_uniform(&self, u: f64) -> Symbol {
        let k = (u / self.kappa) as usize;
        if k < self.eps.len() {
            Symbol::forced(self.eps[k])
        } else {
            Symbol::Zero
        }
    }
}

pub fn sample_epsilon(law: &EpsilonLaw, src: &mut impl UniformSource) -> Symbol {
    law.symbol_from_uniform(src.next_f64())
}

/// Fails when `kernel(e) < kappa` for some `e ∈ E`.
#[inline]
pub fn check_residual(kernel: &TransitionKernel, law: &EpsilonLaw) -> Result<()> {
    for &e in &law.eps {
        let p = kernel.prob(e);
        if p < law.kappa {
            return Err(Error::EllipticityViolation { direction: e, prob: p, kappa: law.kappa });
        }
    }
    Ok(())
}

/// Residual kernel probabilities.
pub fn residual_kernel(kernel: &TransitionKernel, law: &EpsilonLaw) -> Result<Vec<f64>> {
    check_residual(kernel, law)?;
    let z = law.zero_prob();
    Ok((0..kernel.probs().len())
        .map(|e| {
            let sub = if law.in_eps(e) { law.kappa } else { 0.0 };
            (kernel.prob(e) - sub) / z
        })
        .collect())
}

#[inline]
fn residual_draw(kernel: &TransitionKernel, law: &EpsilonLaw, u: f64) -> usize {
    // inverse CDF of the residual kernel without normalizing: compare
    // against u (1 - kappa |E|)
    let target = u * law.zero_prob();
    let n = kernel.probs().len();
    let mut acc = 0.0;
    for e in 0..n {
        acc += kernel.prob(e) - if law.in_eps(e) { law.kappa } else { 0.0 };
        if target < acc {
            return e;
        }
    }
    // rounding left target just above the total; fall back to the last
    // direction with positive residual mass
    (0..n)
        .rev()
        .find(|&e| kernel.prob(e) - if law.in_eps(e) { law.kappa } else { 0.0 } > 0.0)
        .unwrap_or(n - 1)
}

#[inline]
fn quenched_draw(kernel: &TransitionKernel, u: f64) -> usize {
    let n = kernel.probs().len();
    let mut acc = 0.0;
    for e in 0..n {
        acc += kernel.prob(e);
        if u < acc {
            return e;
        }
    }
    (0..n).rev().find(|&e| kernel.prob(e) > 0.0).unwrap_or(n - 1)
}

#[inline]
fn augmented_step_with(kernel: &TransitionKernel, symbol: Symbol, law: &EpsilonLaw, u: f64) -> Result<usize> {
    check_residual(kernel, law)?;
    Ok(match symbol {
        Symbol::Forced(e) => e as usize,
        Symbol::Zero => residual_draw(kernel, law, u),
    })
}

/// One augmented step given its symbol; draws one uniform only when the
/// symbol is `0`.
pub fn step_augmented(
    kernel: &TransitionKernel,
    symbol: Symbol,
    law: &EpsilonLaw,
    src: &mut impl UniformSource,
) -> Result<usize> {
    check_residual(kernel, law)?;
    match symbol {
        Symbol::Forced(e) => Ok(e as usize),
        Symbol::Zero => Ok(residual_draw(kernel, law, src.next_f64())),
    }
}

pub fn step_quenched(kernel: &TransitionKernel, src: &mut impl UniformSource) -> usize {
    quenched_draw(kernel, src.next_f64())
}

#[derive(Clone, Debug, PartialEq)]
pub enum WalkMode {
    Quenched,
    Augmented(EpsilonLaw),
}

/// Streaming walker: holds the position and advances one step at a time.
pub struct Walker<'a> {
    env: &'a EnvironmentModel,
    mode: &'a WalkMode,
    pos: Site,
    time: usize,
}

impl<'a> Walker<'a> {
    pub fn new(env: &'a EnvironmentModel, mode: &'a WalkMode, start: Site) -> Self {
        Self { env, mode, pos: start, time: 0 }
    }

    #[inline]
    pub fn position(&self) -> Site {
        self.pos
    }

    #[inline]
    pub fn time(&self) -> usize {
        self.time
    }

    /// Advances one step; returns the displacement index and, in augmented
    /// mode, the symbol that drove it.
    #[inline]
    pub fn step(&mut self, src: &mut impl UniformSource) -> Result<(usize, Option<Symbol>)> {
        let kernel = self.env.kernel_at(&self.pos);
        let out = match self.mode {
            WalkMode::Quenched => (quenched_draw(&kernel, src.next_f64()), None),
            WalkMode::Augmented(law) => {
                let symbol = law.symbol_from_uniform(src.next_f64());
                let u = src.next_f64();
                (augmented_step_with(&kernel, symbol, law, u)?, Some(symbol))
            }
        };
        self.pos = self.pos.step(out.0);
        self.time += 1;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopCause {
    /// Index of the first predicate (in declaration order) that fired.
    Predicate(usize),
    /// Step cap reached without any predicate firing.
    Censored,
}

/// A walk path with the symbol stream that drove it.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedTrajectory {
    pub start: Site,
    /// Displacement index of each step.
    pub steps: Vec<u8>,
    /// Symbols `eps_0, eps_1, ..`; empty for quenched walks.
    pub eps: Vec<Symbol>,
    pub stop: StopCause,
    pub stream_id: Option<u64>,
}

impl AugmentedTrajectory {
    /// Number of steps `n` (positions `X_0..X_n`).
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn is_augmented(&self) -> bool {
        !self.eps.is_empty() || self.steps.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Site> + '_ {
        let mut cur = self.start;
        std::iter::once(self.start).chain(self.steps.iter().map(move |&e| {
            cur = cur.step(e as usize);
            cur
        }))
    }

    pub fn end(&self) -> Site {
        self.positions().last().unwrap()
    }

    pub fn position_at(&self, n: usize) -> Site {
        self.positions().nth(n).expect("time beyond trajectory")
    }

    /// One record per position: time, coordinates, and the symbol driving
    /// the next step (empty on the last row or for quenched walks).
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let d = self.start.dim();
        let header: Vec<String> = std::iter::once("time".to_string())
            .chain((1..=d).map(|i| format!("x{i}")))
            .chain(std::iter::once("eps".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.positions().enumerate() {
            let coords: Vec<String> = x.coords().iter().map(|c| c.to_string()).collect();
            let eps = self.eps.get(t).map(|s| s.label()).unwrap_or_default();
            writeln!(w, "{t},{},{eps}", coords.join(","))?;
        }
        Ok(())
    }
}

/// A stopping rule evaluated after every step on `(position, time)`.
pub type StopPredicate<'a> = &'a dyn Fn(&Site, usize) -> bool;

/// Runs the walk until a predicate fires (checked after each step, in
/// declaration order) or `step_cap` steps have been taken.
pub fn run_until(
    env: &EnvironmentModel,
    start: Site,
    mode: &WalkMode,
    predicates: &[StopPredicate<'_>],
    step_cap: Option<usize>,
    src: &mut impl UniformSource,
) -> Result<AugmentedTrajectory> {
    if predicates.is_empty() && step_cap.is_none() {
        return Err(Error::Config("walk needs a stop predicate or a step cap".into()));
    }
    if step_cap == Some(0) {
        return Err(Error::Config("step cap must be at least 1".into()));
    }
    if start.dim() != env.dim() {
        return Err(Error::Config("start point dimension differs from environment".into()));
    }
    let augmented = matches!(mode, WalkMode::Augmented(_));
    let cap = step_cap.unwrap_or(usize::MAX);
    let mut walker = Walker::new(env, mode, start);
    let mut steps = Vec::new();
    let mut eps = Vec::new();
    let mut stop = StopCause::Censored;
    while walker.time() < cap {
        let (e, sym) = walker.step(src)?;
        steps.push(e as u8);
        if augmented {
            eps.push(sym.unwrap());
        }
        let (x, t) = (walker.position(), walker.time());
        if let Some(i) = predicates.iter().position(|p| p(&x, t)) {
            stop = StopCause::Predicate(i);
            break;
        }
    }
    Ok(AugmentedTrajectory { start, steps, eps, stop, stream_id: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ModelKind;
    use crate::geometry::{make_direction, BoxClass, BoxSpec};
    use crate::rng::{ScriptedSource, StreamRng};

    fn law(u: &[i64], kappa: f64) -> EpsilonLaw {
        EpsilonLaw::new(&make_direction(u).unwrap(), kappa).unwrap()
    }

    #[test]
    fn q_weights() {
        let l = law(&[1, 1], 0.05);
        assert!((l.zero_prob() - 0.9).abs() < 1e-15);
        assert_eq!(l.prob(Symbol::forced(0)), 0.05);
        assert_eq!(l.prob(Symbol::forced(2)), 0.05);
        assert_eq!(l.prob(Symbol::forced(1)), 0.0);
        let total: f64 = l.alphabet().iter().map(|&s| l.prob(s)).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn invalid_laws() {
        let dir = make_direction(&[1, 1]).unwrap();
        assert!(matches!(EpsilonLaw::new(&dir, 0.6), Err(Error::InvalidLaw(_))));
        assert!(matches!(EpsilonLaw::new(&dir, 0.0), Err(Error::InvalidLaw(_))));
    }

    #[test]
    fn symbol_frequencies() {
        let l = law(&[1, 1], 0.05);
        let mut rng = StreamRng::new(1, 0);
        let n = 200_000;
        let mut zero = 0usize;
        let mut e1 = 0usize;
        for _ in 0..n {
            match sample_epsilon(&l, &mut rng) {
                Symbol::Zero => zero += 1,
                Symbol::Forced(0) => e1 += 1,
                _ => {}
            }
        }
        let f0 = zero as f64 / n as f64;
        let f1 = e1 as f64 / n as f64;
        assert!((f0 - 0.9).abs() < 4.0 * (0.09 / n as f64).sqrt());
        assert!((f1 - 0.05).abs() < 4.0 * (0.0475 / n as f64).sqrt());
    }

    #[test]
    fn forced_step_is_deterministic() {
        let l = law(&[1, 1], 0.05);
        let k = TransitionKernel::new(&[0.4, 0.1, 0.4, 0.1]).unwrap();
        let mut src = ScriptedSource::new(vec![], vec![0.999]);
        assert_eq!(step_augmented(&k, Symbol::forced(0), &l, &mut src).unwrap(), 0);
    }

    #[test]
    fn residual_probabilities() {
        let l = law(&[1, 1], 0.05);
        let k = TransitionKernel::new(&[0.4, 0.1, 0.4, 0.1]).unwrap();
        let r = residual_kernel(&k, &l).unwrap();
        assert!((r[0] - 0.35 / 0.9).abs() < 1e-15);
        assert!((r[0] - 0.38889).abs() < 1e-5);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the inverse CDF boundary sits at 0.35/0.9
        let mut below = ScriptedSource::new(vec![], vec![0.35 / 0.9 - 1e-9]);
        let mut above = ScriptedSource::new(vec![], vec![0.35 / 0.9 + 1e-9]);
        assert_eq!(step_augmented(&k, Symbol::Zero, &l, &mut below).unwrap(), 0);
        assert_eq!(step_augmented(&k, Symbol::Zero, &l, &mut above).unwrap(), 1);
    }

    #[test]
    fn ellipticity_violation() {
        let l = law(&[1, 0], 0.05);
        let k = TransitionKernel::new(&[0.04, 0.46, 0.25, 0.25]).unwrap();
        let mut src = ScriptedSource::new(vec![], vec![0.5]);
        assert!(matches!(
            step_augmented(&k, Symbol::Zero, &l, &mut src),
            Err(Error::EllipticityViolation { .. })
        ));
    }

    #[test]
    fn forced_path_exits_box_through_front() {
        let env = EnvironmentModel::homogeneous(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = BoxSpec::new(Site::origin(2), 4.0, 4.0, make_direction(&[1, 0]).unwrap()).unwrap();
        let out = |x: &Site, _t: usize| !b.is_interior(x);
        let mut rng = StreamRng::new(0, 0);
        let tr = run_until(&env, Site::origin(2), &WalkMode::Quenched, &[&out], Some(100), &mut rng).unwrap();
        assert_eq!(tr.stop, StopCause::Predicate(0));
        assert_eq!(tr.len(), 4);
        assert_eq!(b.classify(&tr.end()), BoxClass::PositiveBoundary);
    }

    #[test]
    fn step_cap_censors() {
        let env = EnvironmentModel::homogeneous(&[0.25; 4]).unwrap();
        let never = |_: &Site, _: usize| false;
        let mut rng = StreamRng::new(0, 0);
        let tr = run_until(&env, Site::origin(2), &WalkMode::Quenched, &[&never], Some(10), &mut rng).unwrap();
        assert_eq!(tr.stop, StopCause::Censored);
        assert_eq!(tr.len(), 10);
    }

    #[test]
    fn predicates_resolve_in_declaration_order() {
        let env = EnvironmentModel::homogeneous(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let a = |_: &Site, t: usize| t == 3;
        let b = |_: &Site, t: usize| t >= 3;
        let mut rng = StreamRng::new(0, 0);
        let tr = run_until(&env, Site::origin(2), &WalkMode::Quenched, &[&b, &a], None, &mut rng).unwrap();
        assert_eq!(tr.stop, StopCause::Predicate(0));
        let mut rng = StreamRng::new(0, 0);
        let tr = run_until(&env, Site::origin(2), &WalkMode::Quenched, &[&a, &b], None, &mut rng).unwrap();
        assert_eq!(tr.stop, StopCause::Predicate(0));
        assert_eq!(tr.len(), 3);
    }

    #[test]
    fn no_stop_rule_is_config_error() {
        let env = EnvironmentModel::homogeneous(&[0.25; 4]).unwrap();
        let mut rng = StreamRng::new(0, 0);
        let r = run_until(&env, Site::origin(2), &WalkMode::Quenched, &[], None, &mut rng);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn augmented_paths_respect_forced_symbols_and_are_reproducible() {
        let dir = make_direction(&[1, 1]).unwrap();
        let env = EnvironmentModel::new(2, ModelKind::IidUe { floors: vec![0.2, 0.02, 0.2, 0.02] }, 8).unwrap();
        let mode = WalkMode::Augmented(EpsilonLaw::new(&dir, 0.1).unwrap());
        let run = || {
            let mut rng = StreamRng::new(42, 7);
            run_until(&env, Site::origin(2), &mode, &[], Some(5_000), &mut rng).unwrap()
        };
        let tr = run();
        assert_eq!(tr, run());
        assert_eq!(tr.eps.len(), tr.len());
        let pos: Vec<Site> = tr.positions().collect();
        for k in 0..tr.len() {
            assert_eq!((pos[k + 1].minus(&pos[k])).iter().map(|c| c.abs()).sum::<i64>(), 1);
            if let Symbol::Forced(e) = tr.eps[k] {
                assert_eq!(tr.steps[k], e);
            }
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let env = EnvironmentModel::homogeneous(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let mode = WalkMode::Augmented(law(&[1, 0], 0.5));
        let mut src = ScriptedSource::new(vec![0.1, 0.0, 0.9, 0.0], vec![0.5]);
        let tr = run_until(&env, Site::origin(2), &mode, &[], Some(2), &mut src).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "time,x1,x2,eps\n0,0,0,+e1\n1,1,0,0\n2,2,0,\n");
    }
}
