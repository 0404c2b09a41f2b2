//! Random environments realized lazily on the infinite lattice.
//!
//! `kernel_at` is a pure function of `(seed, site)`: every random quantity
//! attached to a site (or a column, or a block) is obtained by hashing its
//! coordinates under the model seed, so nothing is ever stored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DirectionSpec, Site, MAX_DIM};
use crate::rng::{site_hash, unit_f64};

const SUM_TOL: f64 = 1e-12;

const TAG_IID: u64 = 0x11;
const TAG_COLUMN: u64 = 0x21;
const TAG_ROW: u64 = 0x22;
const TAG_BLOCK: u64 = 0x31;
const TAG_SITE: u64 = 0x32;

/// One-step transition probabilities at a site, indexed like
/// [`crate::geometry::unit_vector`].
#[derive(Clone, Copy, PartialEq)]
pub struct TransitionKernel {
    probs: [f64; 2 * MAX_DIM],
    dim: u8,
}

impl std::fmt::Debug for TransitionKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TransitionKernel{:?}", self.probs())
    }
}

impl TransitionKernel {
    /// Validates non-negativity and normalization (to 1e-12).
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.len() % 2 != 0 || probs.len() < 2 || probs.len() > 2 * MAX_DIM {
            return Err(Error::InvalidEnvironment(format!(
                "kernel needs 2d entries, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidEnvironment(format!("negative or non-finite entry in {probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidEnvironment(format!("kernel sums to {sum}")));
        }
        Ok(Self::from_probs(probs))
    }

    fn from_probs(probs: &[f64]) -> Self {
        let mut p = [0.0; 2 * MAX_DIM];
        p[..probs.len()].copy_from_slice(probs);
        Self { probs: p, dim: (probs.len() / 2) as u8 }
    }

    /// Simple symmetric walk kernel.
    pub fn uniform(dim: usize) -> Self {
        Self::from_probs(&vec![1.0 / (2 * dim) as f64; 2 * dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn prob(&self, e: usize) -> f64 {
        self.probs[e]
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs[..2 * self.dim as usize]
    }

    /// `sum_e e * omega(e)`.
    pub fn drift(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|axis| self.probs[2 * axis] - self.probs[2 * axis + 1])
            .collect()
    }
}

/// Finite-support law of the site variable `p`, with `rho = (1 - p) / p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PLawRepr", into = "PLawRepr")]
pub struct PLaw {
    values: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PLawRepr {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<PLawRepr> for PLaw {
    type Error = Error;
    fn try_from(r: PLawRepr) -> Result<Self> {
        PLaw::new(r.values, r.weights)
    }
}

impl From<PLaw> for PLawRepr {
    fn from(p: PLaw) -> Self {
        PLawRepr { values: p.values, weights: p.weights }
    }
}

impl PLaw {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::InvalidLaw("values and weights must be non-empty and equally long".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::InvalidLaw(format!("values must lie in (0,1): {values:?}")));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidLaw(format!("weights must be positive: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidLaw(format!("weights sum to {sum}")));
        }
        Ok(Self { values, weights })
    }

    /// Normalizes arbitrary positive weights before validating.
    pub fn normalized(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidLaw("weights must have positive sum".into()));
        }
        Self::new(values, weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(vec![p], vec![1.0])
    }

    /// `a` with probability `wa`, `b` otherwise.
    pub fn two_point(a: f64, wa: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![wa, 1.0 - wa])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Inverse-CDF sample from a uniform in [0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (v, w) in self.values.iter().zip(&self.weights) {
            acc += w;
            if u < acc {
                return *v;
            }
        }
        *self.values.last().unwrap()
    }

    pub fn mean_log_rho(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&p, w)| w * ((1.0 - p) / p).ln())
            .sum()
    }

    /// `E[rho^k]`.
    pub fn rho_moment(&self, k: f64) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(&p, w)| w * (k * ((1.0 - p) / p).ln()).exp())
            .sum()
    }
}

/// Named environment models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// The same kernel at every site.
    Homogeneous { probs: Vec<f64> },
    /// I.i.d. kernels: `floors[e]` plus the remaining mass split by a
    /// uniform point of the simplex.
    IidUe { floors: Vec<f64> },
    /// Column environment on Z^2: `omega((i,j)) = omega_i` with
    /// `omega_i(+-e2) = 1/4`, `omega_i(e1) = p_i/2`, `omega_i(-e1) = 1/2 - p_i/2`.
    ColumnE1 { law: PLaw },
    /// Product environment on Z^2: the e1 components come from `p_i`
    /// (column `i`), the e2 components from an independent `p'_j` (row `j`).
    ProductColumns { law: PLaw },
    /// Like `IidUe`, but the simplex weights share a component drawn per
    /// `range`-aligned block, so kernels are dependent within a block and
    /// independent across blocks.
    FiniteRangeMixing { floors: Vec<f64>, range: u32 },
}

impl ModelKind {
    fn tag(&self) -> &'static str {
        match self {
            ModelKind::Homogeneous { .. } => "homogeneous",
            ModelKind::IidUe { .. } => "iid_ue",
            ModelKind::ColumnE1 { .. } => "column_e1",
            ModelKind::ProductColumns { .. } => "product_columns",
            ModelKind::FiniteRangeMixing { .. } => "finite_range_mixing",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentModel {
    dim: usize,
    kind: ModelKind,
    seed: u64,
}

fn validate_floors(dim: usize, floors: &[f64]) -> Result<()> {
    if floors.len() != 2 * dim {
        return Err(Error::InvalidEnvironment(format!(
            "floors needs {} entries, got {}",
            2 * dim,
            floors.len()
        )));
    }
    if floors.iter().any(|&f| !(f >= 0.0)) {
        return Err(Error::InvalidEnvironment("floors must be non-negative".into()));
    }
    if floors.iter().sum::<f64>() > 1.0 + SUM_TOL {
        return Err(Error::InvalidEnvironment("floors sum above 1".into()));
    }
    Ok(())
}

impl EnvironmentModel {
    pub fn new(dim: usize, kind: ModelKind, seed: u64) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidEnvironment(format!("dimension {dim} outside 2..={MAX_DIM}")));
        }
        match &kind {
            ModelKind::Homogeneous { probs } => {
                let k = TransitionKernel::new(probs)?;
                if k.dim() != dim {
                    return Err(Error::InvalidEnvironment("kernel dimension mismatch".into()));
                }
            }
            ModelKind::IidUe { floors } => validate_floors(dim, floors)?,
            ModelKind::FiniteRangeMixing { floors, range } => {
                validate_floors(dim, floors)?;
                if *range == 0 {
                    return Err(Error::InvalidEnvironment("range must be at least 1".into()));
                }
            }
            ModelKind::ColumnE1 { .. } | ModelKind::ProductColumns { .. } => {
                if dim != 2 {
                    return Err(Error::InvalidEnvironment(format!("{} is defined on Z^2 only", kind.tag())));
                }
            }
        }
        Ok(Self { dim, kind, seed })
    }

    pub fn homogeneous(probs: &[f64]) -> Result<Self> {
        Self::new(probs.len() / 2, ModelKind::Homogeneous { probs: probs.to_vec() }, 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn name(&self) -> &'static str {
        self.kind.tag()
    }

    /// Same model under another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// The `p` variable attached to column `i` (column models only).
    pub fn column_p(&self, i: i64) -> Option<f64> {
        match &self.kind {
            ModelKind::ColumnE1 { law } | ModelKind::ProductColumns { law } => {
                Some(law.sample(unit_f64(site_hash(self.seed, TAG_COLUMN, &[i], 0))))
            }
            _ => None,
        }
    }

    /// The `p'` variable attached to row `j` (product model only).
    pub fn row_p(&self, j: i64) -> Option<f64> {
        match &self.kind {
            ModelKind::ProductColumns { law } => {
                Some(law.sample(unit_f64(site_hash(self.seed, TAG_ROW, &[j], 0))))
            }
            _ => None,
        }
    }

    #[inline]
    pub fn kernel_at(&self, x: &Site) -> TransitionKernel {
        debug_assert_eq!(x.dim(), self.dim);
        match &self.kind {
            ModelKind::Homogeneous { probs } => TransitionKernel::from_probs(probs),
            ModelKind::IidUe { floors } => {
                let mut w = [0.0; 2 * MAX_DIM];
                for (e, we) in w.iter_mut().enumerate().take(2 * self.dim) {
                    *we = exp_variate(site_hash(self.seed, TAG_IID, x.coords(), e as u64));
                }
                simplex_kernel(floors, &w[..2 * self.dim])
            }
            ModelKind::FiniteRangeMixing { floors, range } => {
                let r = *range as i64;
                let mut block = [0i64; MAX_DIM];
                for (b, &c) in block.iter_mut().zip(x.coords()) {
                    *b = c.div_euclid(r);
                }
                let block = &block[..self.dim];
                let mut w = [0.0; 2 * MAX_DIM];
                for (e, we) in w.iter_mut().enumerate().take(2 * self.dim) {
                    *we = exp_variate(site_hash(self.seed, TAG_BLOCK, block, e as u64))
                        + exp_variate(site_hash(self.seed, TAG_SITE, x.coords(), e as u64));
                }
                simplex_kernel(floors, &w[..2 * self.dim])
            }
            ModelKind::ColumnE1 { .. } => {
                let p = self.column_p(x.coords()[0]).unwrap();
                let back = 0.5 - 0.5 * p;
                TransitionKernel::from_probs(&[0.5 * p, back, 0.25, 0.25])
            }
            ModelKind::ProductColumns { .. } => {
                let p = self.column_p(x.coords()[0]).unwrap();
                let q = self.row_p(x.coords()[1]).unwrap();
                TransitionKernel::from_probs(&[0.5 * p, 0.5 - 0.5 * p, 0.5 * q, 0.5 - 0.5 * q])
            }
        }
    }

    /// Every kernel the model can produce, when that set is finite.
    pub fn support_kernels(&self) -> Option<Vec<TransitionKernel>> {
        match &self.kind {
            ModelKind::Homogeneous { probs } => Some(vec![TransitionKernel::from_probs(probs)]),
            ModelKind::ColumnE1 { law } => Some(
                law.values()
                    .iter()
                    .map(|&p| TransitionKernel::from_probs(&[0.5 * p, 0.5 - 0.5 * p, 0.25, 0.25]))
                    .collect(),
            ),
            ModelKind::ProductColumns { law } => {
                let mut out = Vec::new();
                for &p in law.values() {
                    for &q in law.values() {
                        out.push(TransitionKernel::from_probs(&[
                            0.5 * p,
                            0.5 - 0.5 * p,
                            0.5 * q,
                            0.5 - 0.5 * q,
                        ]));
                    }
                }
                Some(out)
            }
            ModelKind::IidUe { .. } | ModelKind::FiniteRangeMixing { .. } => None,
        }
    }
}

/// Exponential(1) variate from 64 random bits.
#[inline]
fn exp_variate(bits: u64) -> f64 {
    -(1.0 - unit_f64(bits)).ln()
}

#[inline]
fn simplex_kernel(floors: &[f64], w: &[f64]) -> TransitionKernel {
    let rest = 1.0 - floors.iter().sum::<f64>();
    let total: f64 = w.iter().sum();
    let mut p = [0.0; 2 * MAX_DIM];
    for e in 0..w.len() {
        p[e] = floors[e] + rest * w[e] / total;
    }
    TransitionKernel { probs: p, dim: (w.len() / 2) as u8 }
}

pub fn kernel_at(env: &EnvironmentModel, x: &Site) -> TransitionKernel {
    env.kernel_at(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityReport {
    pub passes: bool,
    /// `min_{x, e in E} omega(x, e) - 2 kappa` over what was checked.
    pub worst_margin: f64,
    pub min_prob: f64,
    /// True when the check ran over the full (finite) support of the model
    /// rather than over sampled sites.
    pub exact: bool,
}

/// Checks `min_{e in E} omega(x, e) >= 2 kappa`. Finite-support models are
/// checked exactly over their support; the others over `sites`.
pub fn check_uniform_ellipticity(
    env: &EnvironmentModel,
    dir: &DirectionSpec,
    kappa: f64,
    sites: &[Site],
) -> Result<EllipticityReport> {
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!("kappa must be positive, got {kappa}")));
    }
    let eps = dir.eps_set();
    if eps.is_empty() {
        return Err(Error::InvalidDirection("empty forced-step set".into()));
    }
    let (kernels, exact) = match env.support_kernels() {
        Some(k) => (k, true),
        None => {
            if sites.is_empty() {
                return Err(Error::Precondition("no sites to sample".into()));
            }
            (sites.iter().map(|x| env.kernel_at(x)).collect(), false)
        }
    };
    let min_prob = kernels
        .iter()
        .flat_map(|k| eps.iter().map(move |&e| k.prob(e)))
        .fold(f64::INFINITY, f64::min);
    let worst_margin = min_prob - 2.0 * kappa;
    Ok(EllipticityReport { passes: worst_margin >= 0.0, worst_margin, min_prob, exact })
}

/// Root `kappa > 0` of `E[rho^kappa] = 1`.
pub fn kks_kappa(law: &PLaw) -> Result<f64> {
    let mean_log = law.mean_log_rho();
    if mean_log >= 0.0 {
        return Err(Error::NoRoot(format!("E[ln rho] = {mean_log} is not negative")));
    }
    let f = |k: f64| law.rho_moment(k) - 1.0;
    let mut hi = 1.0;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::NoRoot("E[rho^k] < 1 on (0, 64]".into()));
        }
    }
    // f is convex with f(0) = 0 and f'(0) = E[ln rho] < 0, so it is negative
    // on (0, root) and positive after.
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = if f(lo).abs() <= f(hi).abs() && lo > 0.0 { lo } else { hi };
    Ok(root)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transience {
    TransientPlus,
    TransientMinus,
    Recurrent,
}

/// Sign of `E[ln rho]` with a 1e-12 dead band.
pub fn solomon_transience(law: &PLaw) -> Transience {
    let m = law.mean_log_rho();
    if m < -1e-12 {
        Transience::TransientPlus
    } else if m.abs() <= 1e-12 {
        Transience::Recurrent
    } else {
        Transience::TransientMinus
    }
}

/// The two-point law used by the column and product examples.
pub fn example_law() -> PLaw {
    PLaw::two_point(0.75, 0.6, 0.3).expect("valid law")
}
