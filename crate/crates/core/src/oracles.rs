//! Exact small-scale computations used to anchor the Monte Carlo code.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::environment::{EnvironmentModel, TransitionKernel};
use crate::error::{Error, Result};
use crate::geometry::Site;
use crate::regeneration::PatternSpec;
use crate::walk::{residual_kernel, Symbol, WalkMode};

pub const MAX_ENUM_STEPS: usize = 6;
const MAX_ENUM_LEAVES: f64 = 5e7;

/// Exact law of the first `n` steps, keyed by the step sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLaw {
    pub start: Site,
    pub n: usize,
    pub probs: BTreeMap<Vec<u8>, f64>,
}

impl PathLaw {
    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn prob(&self, steps: &[u8]) -> f64 {
        self.probs.get(steps).copied().unwrap_or(0.0)
    }
}

pub fn total_variation(a: &PathLaw, b: &PathLaw) -> f64 {
    let mut keys: Vec<&Vec<u8>> = a.probs.keys().chain(b.probs.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys.iter().map(|k| (a.prob(k) - b.prob(k)).abs()).sum::<f64>()
}

/// Full enumeration; in augmented mode every symbol stream is summed out
/// explicitly, with its residual kernel.
pub fn enumerate_path_law(env: &EnvironmentModel, start: Site, n: usize, mode: &WalkMode) -> Result<PathLaw> {
    if n > MAX_ENUM_STEPS {
        return Err(Error::SizeGuard(format!("n = {n} exceeds {MAX_ENUM_STEPS}")));
    }
    let branch = match mode {
        WalkMode::Quenched => 2 * env.dim(),
        WalkMode::Augmented(law) => 2 * env.dim() * (law.eps_set().len() + 1),
    };
    if (branch as f64).powi(n as i32) > MAX_ENUM_LEAVES {
        return Err(Error::SizeGuard(format!("{branch}^{n} leaves")));
    }
    let mut probs = BTreeMap::new();
    let mut path = Vec::with_capacity(n);
    recurse(env, mode, start, n, 1.0, &mut path, &mut probs)?;
    Ok(PathLaw { start, n, probs })
}

fn recurse(
    env: &EnvironmentModel,
    mode: &WalkMode,
    x: Site,
    left: usize,
    mass: f64,
    path: &mut Vec<u8>,
    out: &mut BTreeMap<Vec<u8>, f64>,
) -> Result<()> {
    if left == 0 {
        *out.entry(path.clone()).or_insert(0.0) += mass;
        return Ok(());
    }
    let kernel = env.kernel_at(&x);
    let moves: Vec<(usize, f64)> = match mode {
        WalkMode::Quenched => kernel.probs().iter().copied().enumerate().collect(),
        WalkMode::Augmented(law) => {
            let residual = residual_kernel(&kernel, law)?;
            let mut m = Vec::new();
            for s in law.alphabet() {
                let qs = law.prob(s);
                match s {
                    Symbol::Forced(e) => m.push((e as usize, qs)),
                    Symbol::Zero => m.extend(residual.iter().enumerate().map(|(e, &r)| (e, qs * r))),
                }
            }
            m
        }
    };
    for (e, p) in moves {
        if p <= 0.0 {
            continue;
        }
        path.push(e as u8);
        recurse(env, mode, x.step(e), left - 1, mass * p, path, out)?;
        path.pop();
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceResult {
    pub prob: f64,
    pub log_prob: f64,
    /// Number of constrained windows, `max(0, n - L + 2)`.
    pub windows: usize,
}

/// Prefix-function automaton over `W`: `next[state][symbol]`.
fn pattern_automaton(pattern: &[Symbol], alphabet: &[Symbol]) -> Vec<Vec<usize>> {
    let l = pattern.len();
    let mut fail = vec![0usize; l + 1];
    for i in 1..l {
        let mut k = fail[i];
        while k > 0 && pattern[i] != pattern[k] {
            k = fail[k];
        }
        fail[i + 1] = if pattern[i] == pattern[k] { k + 1 } else { 0 };
    }
    (0..l)
        .map(|state| {
            alphabet
                .iter()
                .map(|s| {
                    let mut k = state;
                    while k > 0 && pattern[k] != *s {
                        k = fail[k];
                    }
                    if pattern[k] == *s {
                        k + 1
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect()
}

/// `Q[D_{0,n}]`: no window `(eps_m, .., eps_{m+L-1})`, `0 <= m <= n-L+1`,
/// spells the pattern.
pub fn pattern_avoidance_prob(pattern: &PatternSpec, law: &crate::walk::EpsilonLaw, n: usize) -> AvoidanceResult {
    let symbols: Vec<Symbol> = pattern.symbols().iter().map(|&e| Symbol::forced(e)).collect();
    avoidance_dp(&symbols, law, n)
}

pub fn avoidance_dp(pattern: &[Symbol], law: &crate::walk::EpsilonLaw, n: usize) -> AvoidanceResult {
    *avoidance_curve(pattern, law, n).last().unwrap()
}

/// `Q[D_{0,n}]` for every `n` in `0..=n_max` from a single DP pass.
pub fn avoidance_curve(pattern: &[Symbol], law: &crate::walk::EpsilonLaw, n_max: usize) -> Vec<AvoidanceResult> {
    let l = pattern.len();
    assert!(l >= 1, "empty pattern");
    let alphabet = law.alphabet();
    let weights: Vec<f64> = alphabet.iter().map(|&s| law.prob(s)).collect();
    let next = pattern_automaton(pattern, &alphabet);
    let mut out = Vec::with_capacity(n_max + 1);
    let mut dist = vec![0.0; l];
    dist[0] = 1.0;
    let mut log_scale = 0.0;
    // after the pass for symbol eps_n
    for n in 0..=n_max {
        if n + 2 <= l {
            out.push(AvoidanceResult { prob: 1.0, log_prob: 0.0, windows: 0 });
        }
        let mut nd = vec![0.0; l];
        for (state, &m) in dist.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (a, &w) in weights.iter().enumerate() {
                let t = next[state][a];
                if t < l {
                    nd[t] += m * w;
                }
            }
        }
        dist = nd;
        if n + 2 <= l {
            continue;
        }
        let total: f64 = dist.iter().sum();
        if total == 0.0 {
            out.push(AvoidanceResult { prob: 0.0, log_prob: f64::NEG_INFINITY, windows: n + 2 - l });
            continue;
        }
        if total < 1e-200 {
            dist.iter_mut().for_each(|v| *v /= total);
            log_scale += total.ln();
        }
        let log_prob = log_scale + dist.iter().sum::<f64>().ln();
        out.push(AvoidanceResult { prob: log_prob.exp(), log_prob, windows: n + 2 - l });
    }
    out
}

/// Exact `sum_{0 <= i < j <= L^2 - L} Q[A_i ∩ A_j]`, `A_i` the event that the
/// window at `i` spells the pattern.
pub fn pairwise_occurrence_sum(pattern: &[Symbol], kappa: f64) -> f64 {
    let l = pattern.len();
    let j = l * l - l;
    let mut sum = 0.0;
    for s in 1..=j {
        let pairs = (j + 1 - s) as f64;
        let joint = if s >= l {
            kappa.powi(2 * l as i32)
        } else if pattern[s..] == pattern[..l - s] {
            kappa.powi((l + s) as i32)
        } else {
            0.0
        };
        sum += pairs * joint;
    }
    sum
}

/// `(L^2 - L + 1) kappa^L - pairwise`, a lower bound on `Q[D_{0,L^2}^c]`.
pub fn bonferroni_lower_bound(pattern: &[Symbol], kappa: f64) -> f64 {
    let l = pattern.len();
    (l * l - l + 1) as f64 * kappa.powi(l as i32) - pairwise_occurrence_sum(pattern, kappa)
}

/// Probability that a nearest-neighbour walk on `a..=b` with right-step
/// probabilities `p[i]` at site `a + 1 + i` hits `a` before `b`.
pub fn chung_hitting(p: &[f64], start: i64, a: i64, b: i64) -> Result<f64> {
    if b <= a + 1 {
        return Err(Error::Precondition(format!("degenerate interval [{a}, {b}]")));
    }
    if !(a < start && start < b) {
        return Err(Error::Precondition(format!("start {start} outside ({a}, {b})")));
    }
    if p.len() as i64 != b - a - 1 {
        return Err(Error::Precondition(format!("expected {} interior values, got {}", b - a - 1, p.len())));
    }
    if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Precondition(format!("p = {bad} outside (0, 1)")));
    }
    // log prod_{m=a+1}^{k} rho_m for k = a..b-1
    let mut logs = Vec::with_capacity(p.len() + 1);
    logs.push(0.0);
    for &pi in p {
        let prev = *logs.last().unwrap();
        logs.push(prev + ((1.0 - pi) / pi).ln());
    }
    let lse = |xs: &[f64]| {
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    let k0 = (start - a) as usize;
    Ok((lse(&logs[k0..]) - lse(&logs)).exp())
}

/// Kalikow's averaged kernel on a finite set `V`.
#[derive(Clone, Debug, PartialEq)]
pub struct KalikowKernel {
    pub sites: Vec<Site>,
    pub probs: Vec<Vec<f64>>,
    pub drift: Vec<Vec<f64>>,
    /// Green function `g_r(x)` of each realization, indexed like `sites`.
    pub green: Vec<Vec<f64>>,
}

impl KalikowKernel {
    pub fn index_of(&self, x: &Site) -> Option<usize> {
        self.sites.iter().position(|s| s == x)
    }
}

/// Rejects a site set that is empty, repeats a site or is not
/// nearest-neighbour connected.
pub fn check_domain(v: &[Site]) -> Result<()> {
    check_connected(v).map(|_| ())
}

fn check_connected(v: &[Site]) -> Result<HashMap<Site, usize>> {
    let index: HashMap<Site, usize> = v.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    if index.len() != v.len() {
        return Err(Error::Precondition("repeated site in V".into()));
    }
    let d = v.first().ok_or_else(|| Error::Precondition("empty V".into()))?.dim();
    let origin = Site::origin(d);
    let Some(&o) = index.get(&origin) else {
        return Err(Error::Precondition("V must contain the origin".into()));
    };
    let mut seen = vec![false; v.len()];
    seen[o] = true;
    let mut queue = VecDeque::from([origin]);
    while let Some(x) = queue.pop_front() {
        for e in 0..2 * d {
            if let Some(&j) = index.get(&x.step(e)) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(x.step(e));
                }
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Precondition("V is not connected".into()));
    }
    Ok(index)
}

/// Expected visits to each site of `V` before exiting, from the origin.
fn green_function(v: &[Site], index: &HashMap<Site, usize>, kernels: &[TransitionKernel]) -> Result<Vec<f64>> {
    let n = v.len();
    let d = v[0].dim();
    // every site reachable from 0 must be able to leave V
    let mut exits = vec![false; n];
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, x) in v.iter().enumerate() {
        for e in 0..2 * d {
            if kernels[i].prob(e) > 0.0 {
                match index.get(&x.step(e)) {
                    Some(&j) => rev[j].push(i),
                    None => exits[i] = true,
                }
            }
        }
    }
    let mut can_exit = exits.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| exits[i]).collect();
    while let Some(j) = queue.pop_front() {
        for &i in &rev[j] {
            if !can_exit[i] {
                can_exit[i] = true;
                queue.push_back(i);
            }
        }
    }
    let o = index[&Site::origin(d)];
    let mut reach = vec![false; n];
    reach[o] = true;
    let mut queue = VecDeque::from([o]);
    while let Some(i) = queue.pop_front() {
        for e in 0..2 * d {
            if kernels[i].prob(e) > 0.0 {
                if let Some(&j) = index.get(&v[i].step(e)) {
                    if !reach[j] {
                        reach[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    if let Some(bad) = (0..n).find(|&i| reach[i] && !can_exit[i]) {
        return Err(Error::AbsorbingDefect(format!("walk cannot leave V from {:?}", v[bad])));
    }
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, x) in v.iter().enumerate() {
        for e in 0..2 * d {
            if let Some(&j) = index.get(&x.step(e)) {
                m[(i, j)] -= kernels[i].prob(e);
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[o] = 1.0;
    let g = m
        .transpose()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::AbsorbingDefect("singular system".into()))?;
    Ok(g.iter().map(|&x| x.max(0.0)).collect())
}

/// `P_V(x, x+e) = sum_r w_r g_r(x) omega_r(x, e) / sum_r w_r g_r(x)` for a
/// finite weighted family of deterministic environments given on `V`.
pub fn kalikow_kernel(v: &[Site], realizations: &[(f64, Vec<TransitionKernel>)]) -> Result<KalikowKernel> {
    let index = check_connected(v)?;
    if realizations.is_empty() {
        return Err(Error::Precondition("no realizations".into()));
    }
    let d = v[0].dim();
    let mut green = Vec::with_capacity(realizations.len());
    for (w, kernels) in realizations {
        if !(*w > 0.0) {
            return Err(Error::Precondition(format!("weight {w} must be positive")));
        }
        if kernels.len() != v.len() || kernels.iter().any(|k| k.dim() != d) {
            return Err(Error::Precondition("realization does not match V".into()));
        }
        green.push(green_function(v, &index, kernels)?);
    }
    let mut probs = Vec::with_capacity(v.len());
    let mut drift = Vec::with_capacity(v.len());
    for (i, x) in v.iter().enumerate() {
        let den: f64 = realizations.iter().zip(&green).map(|((w, _), g)| w * g[i]).sum();
        if !(den > 0.0) {
            return Err(Error::Precondition(format!("site {x:?} is never visited")));
        }
        let row: Vec<f64> = (0..2 * d)
            .map(|e| {
                realizations
                    .iter()
                    .zip(&green)
                    .map(|((w, ks), g)| (w * g[i] / den) * ks[i].prob(e))
                    .sum::<f64>()
            })
            .collect();
        let mut dr = vec![0.0; d];
        for (e, p) in row.iter().enumerate() {
            dr[e / 2] += if e % 2 == 0 { *p } else { -*p };
        }
        probs.push(row);
        drift.push(dr);
    }
    Ok(KalikowKernel { sites: v.to_vec(), probs, drift, green })
}

/// Kernels of a model on `V`, as input for [`kalikow_kernel`].
pub fn kernels_on(env: &EnvironmentModel, v: &[Site]) -> Vec<TransitionKernel> {
    v.iter().map(|x| env.kernel_at(x)).collect()
}

/// The sites of `[-r, r]^d`.
pub fn cube(d: usize, r: i64) -> Vec<Site> {
    let side = (2 * r + 1) as usize;
    (0..side.pow(d as u32))
        .map(|mut k| {
            let mut c = vec![0i64; d];
            for ci in c.iter_mut() {
                *ci = (k % side) as i64 - r;
                k /= side;
            }
            Site::new(&c)
        })
        .collect()
}

/// JSON record emitted by the `oracle` verb.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub value: serde_json::Value,
    pub method: String,
    pub inputs_digest: String,
}

/// Hex SHA-256 of the compact JSON serialization with object keys sorted.
pub fn inputs_digest<T: Serialize>(inputs: &T) -> String {
    let value = serde_json::to_value(inputs).expect("serializable inputs");
    let bytes = serde_json::to_vec(&value).expect("serializable inputs");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::ModelKind;
    use crate::geometry::{make_direction, Alpha};
    use crate::regeneration::build_pattern;
    use crate::walk::EpsilonLaw;
    use proptest::prelude::*;

    fn dir(u: &[i64]) -> crate::geometry::DirectionSpec {
        make_direction(u).unwrap()
    }

    #[test]
    fn one_step_law() {
        let env = EnvironmentModel::homogeneous(&[0.4, 0.1, 0.4, 0.1]).unwrap();
        let law = enumerate_path_law(&env, Site::origin(2), 1, &WalkMode::Quenched).unwrap();
        assert_eq!(law.probs.len(), 4);
        assert_eq!(law.prob(&[0]), 0.4);
        assert_eq!(law.prob(&[1]), 0.1);
        assert_eq!(law.prob(&[2]), 0.4);
        assert_eq!(law.prob(&[3]), 0.1);
    }

    #[test]
    fn enumeration_guard() {
        let env = EnvironmentModel::homogeneous(&[0.25; 4]).unwrap();
        assert!(matches!(
            enumerate_path_law(&env, Site::origin(2), 7, &WalkMode::Quenched),
            Err(Error::SizeGuard(_))
        ));
    }

    #[test]
    fn quenched_and_augmented_laws_coincide() {
        let env = EnvironmentModel::new(2, ModelKind::IidUe { floors: vec![0.2, 0.05, 0.2, 0.05] }, 3).unwrap();
        let law = EpsilonLaw::new(&dir(&[1, 1]), 0.1).unwrap();
        for n in 1..=4 {
            let q = enumerate_path_law(&env, Site::origin(2), n, &WalkMode::Quenched).unwrap();
            let a = enumerate_path_law(&env, Site::origin(2), n, &WalkMode::Augmented(law.clone())).unwrap();
            assert!((q.total() - 1.0).abs() < 1e-12);
            assert!((a.total() - 1.0).abs() < 1e-12);
            assert!(total_variation(&q, &a) <= 1e-12);
        }
    }

    fn naive_avoidance(pattern: &[Symbol], law: &EpsilonLaw, n: usize) -> f64 {
        // sum over all symbol strings of length n + 1
        let alphabet = law.alphabet();
        let l = pattern.len();
        let mut total = 0.0;
        let count = alphabet.len().pow(n as u32 + 1);
        for mut code in 0..count {
            let mut s = Vec::with_capacity(n + 1);
            let mut p = 1.0;
            for _ in 0..=n {
                let a = alphabet[code % alphabet.len()];
                code /= alphabet.len();
                p *= law.prob(a);
                s.push(a);
            }
            let hit = (0..s.len()).any(|m| m + l <= s.len() && s[m..m + l] == *pattern);
            if !hit {
                total += p;
            }
        }
        total
    }

    #[test]
    fn avoidance_single_symbol_closed_form() {
        let d = dir(&[1, 0]);
        let law = EpsilonLaw::new(&d, 0.2).unwrap();
        let pat = build_pattern(&d, 1, Alpha::Ratio(1, 2)).unwrap();
        for n in [0, 1, 5, 40] {
            let r = pattern_avoidance_prob(&pat, &law, n);
            assert!((r.prob - 0.8f64.powi(n as i32 + 1)).abs() < 1e-15);
            assert_eq!(r.windows, n + 1);
        }
    }

    #[test]
    fn avoidance_examples() {
        let d = dir(&[1, 1]);
        let law = EpsilonLaw::new(&d, 0.05).unwrap();
        let pat = build_pattern(&d, 2, Alpha::Ratio(1, 2)).unwrap();
        let r = pattern_avoidance_prob(&pat, &law, 2);
        assert!((r.prob - 0.995).abs() < 1e-15);
        assert_eq!(r.windows, 2);
        let long = build_pattern(&d, 6, Alpha::Ratio(1, 2)).unwrap();
        assert_eq!(pattern_avoidance_prob(&long, &law, 4).prob, 1.0);
        assert_eq!(pattern_avoidance_prob(&long, &law, 4).windows, 0);
    }

    #[test]
    fn avoidance_matches_brute_force() {
        let d = dir(&[1, 1]);
        let law = EpsilonLaw::new(&d, 0.2).unwrap();
        let e1 = Symbol::forced(0);
        let e2 = Symbol::forced(2);
        for pattern in [vec![e1, e2], vec![e1, e1], vec![e1, e2, e1], vec![e1, e1, e2, e1]] {
            for n in 0..7 {
                let dp = avoidance_dp(&pattern, &law, n).prob;
                assert!((dp - naive_avoidance(&pattern, &law, n)).abs() < 1e-12, "{pattern:?} {n} {dp} {}", naive_avoidance(&pattern, &law, n));
            }
            let curve = avoidance_curve(&pattern, &law, 6);
            assert_eq!(curve.len(), 7);
            for (n, r) in curve.iter().enumerate() {
                assert!((r.prob - naive_avoidance(&pattern, &law, n)).abs() < 1e-12);
                assert_eq!(r.windows, (n + 2).saturating_sub(pattern.len()));
            }
        }
    }

    #[test]
    fn avoidance_log_scale_for_long_runs() {
        let d = dir(&[1, 0]);
        let law = EpsilonLaw::new(&d, 0.3).unwrap();
        let pat = build_pattern(&d, 1, Alpha::Ratio(1, 2)).unwrap();
        let r = pattern_avoidance_prob(&pat, &law, 9999);
        assert!((r.log_prob - 10_000.0 * 0.7f64.ln()).abs() < 1e-9 * 10_000.0);
    }

    fn naive_pairwise(pattern: &[Symbol], kappa: f64) -> f64 {
        // direct: for each pair, the joint window constraints either agree
        // (product over the union of fixed positions) or conflict
        let l = pattern.len();
        let j = l * l - l;
        let mut sum = 0.0;
        for i1 in 0..=j {
            for i2 in i1 + 1..=j {
                let mut fixed: HashMap<usize, Symbol> = HashMap::new();
                let mut ok = true;
                for (start, _) in [(i1, 0), (i2, 1)] {
                    for k in 0..l {
                        match fixed.get(&(start + k)) {
                            Some(s) if *s != pattern[k] => ok = false,
                            _ => {
                                fixed.insert(start + k, pattern[k]);
                            }
                        }
                    }
                }
                if ok {
                    sum += kappa.powi(fixed.len() as i32);
                }
            }
        }
        sum
    }

    #[test]
    fn pairwise_sum_matches_direct_count() {
        let e1 = Symbol::forced(0);
        let e2 = Symbol::forced(2);
        for pattern in [vec![e1, e2], vec![e1, e1, e1], vec![e1, e2, e1, e2], vec![e1, e1, e2, e1, e1]] {
            for kappa in [0.05, 0.2] {
                let a = pairwise_occurrence_sum(&pattern, kappa);
                let b = naive_pairwise(&pattern, kappa);
                assert!((a - b).abs() <= 1e-13 * b, "{pattern:?} {a} {b}");
            }
        }
    }

    #[test]
    fn bonferroni_bound_and_closed_shape() {
        for (u, kappa) in [(vec![1i64, 0], 0.05), (vec![1, 0], 0.2), (vec![1, 1], 0.05), (vec![1, 1], 0.2)] {
            let d = dir(&u);
            let law = EpsilonLaw::new(&d, kappa).unwrap();
            let mut worst_c = 0.0f64;
            for l in 2..=12usize {
                let Ok(pat) = build_pattern(&d, l, Alpha::Ratio(1, 2)) else { continue };
                let syms: Vec<Symbol> = pat.symbols().iter().map(|&e| Symbol::forced(e)).collect();
                let exact_hit = 1.0 - pattern_avoidance_prob(&pat, &law, l * l).prob;
                let lower = bonferroni_lower_bound(&syms, kappa);
                assert!(lower <= exact_hit + 1e-15, "L={l}");
                let pw = pairwise_occurrence_sum(&syms, kappa);
                let kl = kappa.powi(l as i32);
                let lf = l as f64;
                let shape = lf * lf * kl * (1.0 - kappa.powi(l as i32 + 1)) / (1.0 - kappa) + lf.powi(4) * kl * kl;
                assert!(pw <= shape * (1.0 + 1e-12), "L={l}");
                worst_c = worst_c.max(pw / (lf * lf * kl));
            }
            // bounded fitted constant
            assert!(worst_c < 1.0 / (1.0 - kappa) + 1.0, "c = {worst_c}");
        }
    }

    #[test]
    fn chung_examples() {
        assert!((chung_hitting(&[0.6], 0, -1, 1).unwrap() - 0.4).abs() < 1e-15);
        assert!(matches!(chung_hitting(&[], 0, 0, 1), Err(Error::Precondition(_))));
        assert!(matches!(chung_hitting(&[0.5], 2, -1, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn chung_gamblers_ruin() {
        for p in [0.3, 0.5, 0.6, 0.9] {
            for (a, b, s) in [(-3i64, 4i64, 0i64), (-10, 10, 0), (-1, 20, 5)] {
                let v = vec![p; (b - a - 1) as usize];
                let got = chung_hitting(&v, s, a, b).unwrap();
                let want = if p == 0.5 {
                    (b - s) as f64 / (b - a) as f64
                } else {
                    let r: f64 = (1.0 - p) / p;
                    (r.powi((s - a) as i32) - r.powi((b - a) as i32)) / (1.0 - r.powi((b - a) as i32))
                };
                assert!((got - want).abs() < 1e-12, "p={p} {a} {b} {s}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn chung_matches_dense_solve() {
        // interior sites 1, 2, 3; V_0 = 1, V_4 = 0
        let p = [0.3, 0.8, 0.55];
        let mut m = DMatrix::<f64>::zeros(3, 3);
        let mut rhs = DVector::<f64>::zeros(3);
        for i in 0..3 {
            m[(i, i)] = 1.0;
            if i > 0 {
                m[(i, i - 1)] = -(1.0 - p[i]);
            } else {
                rhs[i] = 1.0 - p[i];
            }
            if i < 2 {
                m[(i, i + 1)] = -p[i];
            }
        }
        let sol = m.lu().solve(&rhs).unwrap();
        for s in 1..=3 {
            let got = chung_hitting(&p, s, 0, 4).unwrap();
            assert!((got - sol[(s - 1) as usize]).abs() < 1e-12);
        }
    }

    #[test]
    fn chung_extreme_drift_stays_finite() {
        let v = vec![0.01; 999];
        let got = chung_hitting(&v, 500, 0, 1000).unwrap();
        assert!(got.is_finite() && (got - 1.0).abs() < 1e-12);
        let v = vec![0.99; 999];
        let got = chung_hitting(&v, 500, 0, 1000).unwrap();
        assert!((0.0..1e-12).contains(&got));
    }

    #[test]
    fn kalikow_single_realization_is_identity() {
        let env = EnvironmentModel::new(2, ModelKind::IidUe { floors: vec![0.1; 4] }, 5).unwrap();
        let v = cube(2, 1);
        let ks = kernels_on(&env, &v);
        let k = kalikow_kernel(&v, &[(1.0, ks.clone())]).unwrap();
        for (i, row) in k.probs.iter().enumerate() {
            for (e, p) in row.iter().enumerate() {
                assert!((p - ks[i].prob(e)).abs() < 1e-12);
            }
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn kalikow_absorbing_defect() {
        // a site that only steps back and forth within V
        let v = vec![Site::new(&[0, 0]), Site::new(&[1, 0])];
        let ks = vec![
            TransitionKernel::new(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
            TransitionKernel::new(&[0.0, 1.0, 0.0, 0.0]).unwrap(),
        ];
        assert!(matches!(kalikow_kernel(&v, &[(1.0, ks)]), Err(Error::AbsorbingDefect(_))));
    }

    #[test]
    fn kalikow_rejects_bad_v() {
        let v = vec![Site::new(&[0, 0]), Site::new(&[2, 0])];
        let ks = vec![TransitionKernel::uniform(2); 2];
        assert!(matches!(kalikow_kernel(&v, &[(1.0, ks)]), Err(Error::Precondition(_))));
    }

    #[test]
    fn green_function_one_dimensional_check() {
        // V = {0} in d = 2: exactly one visit
        let v = vec![Site::origin(2)];
        let k = kalikow_kernel(&v, &[(1.0, vec![TransitionKernel::uniform(2)])]).unwrap();
        assert!((k.green[0][0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn digest_is_stable() {
        let a = inputs_digest(&serde_json::json!({"n": 3, "kappa": 0.05}));
        let b = inputs_digest(&serde_json::json!({"n": 3, "kappa": 0.05}));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        assert_ne!(a, inputs_digest(&serde_json::json!({"n": 4, "kappa": 0.05})));
    }

    proptest! {
        #[test]
        fn path_law_normalized(seed in 0u64..10_000, n in 1usize..=3) {
            let env = EnvironmentModel::new(2, ModelKind::IidUe { floors: vec![0.15, 0.05, 0.15, 0.05] }, seed).unwrap();
            let law = EpsilonLaw::new(&dir(&[1, 1]), 0.07).unwrap();
            let q = enumerate_path_law(&env, Site::origin(2), n, &WalkMode::Quenched).unwrap();
            let a = enumerate_path_law(&env, Site::origin(2), n, &WalkMode::Augmented(law)).unwrap();
            prop_assert!((q.total() - 1.0).abs() < 1e-12);
            prop_assert!(total_variation(&q, &a) <= 1e-12);
        }

        #[test]
        fn avoidance_monotone_and_block_bound(reps in 1usize..=3, kappa in 0.05f64..0.45, n in 0usize..200) {
            let d = dir(&[1, 1]);
            let law = EpsilonLaw::new(&d, kappa).unwrap();
            let pat = build_pattern(&d, 2 * reps, Alpha::Ratio(1, 2)).unwrap();
            let l = pat.len();
            let a = pattern_avoidance_prob(&pat, &law, n).prob;
            let b = pattern_avoidance_prob(&pat, &law, n + 1).prob;
            prop_assert!(b <= a);
            let block = pattern_avoidance_prob(&pat, &law, l * l).prob;
            let k = (n + 1) / (l * l + l);
            prop_assert!(a <= block.powi(k as i32) * (1.0 + 1e-12));
        }

        #[test]
        fn chung_monotone_in_p(ps in prop::collection::vec(0.05f64..0.95, 2..12), i in 0usize..12, bump in 0.0f64..0.04, s in 1i64..12) {
            let i = i % ps.len();
            let s = 1 + (s - 1) % ps.len() as i64;
            let b = ps.len() as i64 + 1;
            let lo = chung_hitting(&ps, s, 0, b).unwrap();
            let mut raised = ps.clone();
            raised[i] += bump;
            let hi = chung_hitting(&raised, s, 0, b).unwrap();
            prop_assert!(hi <= lo + 1e-12);
        }

        #[test]
        fn kalikow_drift_in_green_weighted_hull(seed in 0u64..1000, w in 0.05f64..0.95) {
            let v = cube(2, 1);
            let e1 = EnvironmentModel::new(2, ModelKind::IidUe { floors: vec![0.1; 4] }, seed).unwrap();
            let e2 = e1.with_seed(seed + 17);
            let (k1, k2) = (kernels_on(&e1, &v), kernels_on(&e2, &v));
            let k = kalikow_kernel(&v, &[(w, k1.clone()), (1.0 - w, k2.clone())]).unwrap();
            for i in 0..v.len() {
                prop_assert!((k.probs[i].iter().sum::<f64>() - 1.0).abs() < 1e-10);
                let (g1, g2) = (k.green[0][i], k.green[1][i]);
                let t = w * g1 / (w * g1 + (1.0 - w) * g2);
                let d1 = k1[i].drift();
                let d2 = k2[i].drift();
                for c in 0..2 {
                    prop_assert!((k.drift[i][c] - (t * d1[c] + (1.0 - t) * d2[c])).abs() < 1e-12);
                }
            }
        }
    }
}
