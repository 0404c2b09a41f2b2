//! Lattice points, rational directions, cones, boxes and half-spaces.
//!
//! Directions are always carried with their integer representative `u`
//! so that every comparison that can be done in integers (half-space
//! membership, record levels along `l`) is exact.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

const PARALLEL_EPS: f64 = 1e-8;

/// A point of Z^d, d <= [`MAX_DIM`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    coords: [i64; MAX_DIM],
    dim: u8,
}

impl Site {
    /// Panics if `coords` is empty or longer than [`MAX_DIM`].
    pub fn new(coords: &[i64]) -> Self {
        Self::try_new(coords).expect("site dimension out of range")
    }

    pub fn try_new(coords: &[i64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::InvalidGeometry(format!(
                "dimension {} outside 1..={MAX_DIM}",
                coords.len()
            )));
        }
        let mut c = [0i64; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { coords: c, dim: coords.len() as u8 })
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(&vec![0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    /// The neighbour `self + e` where `e` is the unit vector with index
    /// `dir` (see [`unit_vector`]).
    #[inline]
    pub fn step(&self, dir: usize) -> Site {
        let mut s = *self;
        let axis = dir / 2;
        debug_assert!(axis < s.dim());
        if dir % 2 == 0 {
            s.coords[axis] += 1;
        } else {
            s.coords[axis] -= 1;
        }
        s
    }

    pub fn offset(&self, delta: &[i64]) -> Site {
        let mut s = *self;
        for (c, d) in s.coords.iter_mut().zip(delta) {
            *c += d;
        }
        s
    }

    pub fn minus(&self, other: &Site) -> Vec<i64> {
        self.coords().iter().zip(other.coords()).map(|(a, b)| a - b).collect()
    }

    #[inline]
    pub fn dot_int(&self, v: &[i64]) -> i64 {
        self.coords().iter().zip(v).map(|(a, b)| a * b).sum()
    }

    #[inline]
    pub fn dot_f64(&self, v: &[f64]) -> f64 {
        self.coords().iter().zip(v).map(|(&a, b)| a as f64 * b).sum()
    }

    pub fn l1_norm(&self) -> i64 {
        self.coords().iter().map(|c| c.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coords().iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt()
    }

    pub fn sup_distance(&self, other: &Site) -> i64 {
        self.coords().iter().zip(other.coords()).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

/// Unit vectors are indexed `2i -> +e_i`, `2i+1 -> -e_i`. Returns
/// `(axis, sign)`.
#[inline]
pub fn unit_vector(index: usize) -> (usize, i64) {
    (index / 2, if index % 2 == 0 { 1 } else { -1 })
}

pub fn unit_index(axis: usize, sign: i64) -> usize {
    2 * axis + usize::from(sign < 0)
}

pub fn unit_name(index: usize) -> String {
    let (axis, sign) = unit_vector(index);
    format!("{}e{}", if sign > 0 { "+" } else { "-" }, axis + 1)
}

/// A rational direction `l = u / |u|_2` together with an orthogonal frame
/// whose first column is `l`.
#[derive(Clone, Debug)]
pub struct DirectionSpec {
    u: Vec<i64>,
    l: Vec<f64>,
    q: f64,
    p: i64,
    rotation: DMatrix<f64>,
}

/// Keeps `x . u` exact in `i64` for any reachable `x`.
pub const MAX_COMPONENT: u64 = 1 << 20;

/// Builds the direction spanned by the integer vector `u`.
///
/// The frame is Gram-Schmidt on `l, e_1, .., e_d`, skipping candidates
/// whose residual norm is below 1e-8.
pub fn make_direction(u: &[i64]) -> Result<DirectionSpec> {
    let d = u.len();
    if d < 2 || d > MAX_DIM {
        return Err(Error::InvalidDirection(format!("dimension {d} outside 2..={MAX_DIM}")));
    }
    if u.iter().all(|&c| c == 0) {
        return Err(Error::InvalidDirection("zero vector".into()));
    }
    if let Some(c) = u.iter().find(|c| c.unsigned_abs() > MAX_COMPONENT) {
        return Err(Error::InvalidDirection(format!("component {c} exceeds {MAX_COMPONENT} in magnitude")));
    }
    let q = u.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt();
    let l: Vec<f64> = u.iter().map(|&c| c as f64 / q).collect();
    let p = u.iter().map(|c| c.abs()).sum();

    let mut basis: Vec<DVector<f64>> = vec![DVector::from_column_slice(&l)];
    for k in 0..d {
        if basis.len() == d {
            break;
        }
        let mut v = DVector::<f64>::zeros(d);
        v[k] = 1.0;
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let n = v.norm();
        if n > PARALLEL_EPS {
            basis.push(v / n);
        }
    }
    debug_assert_eq!(basis.len(), d);
    let rotation = DMatrix::from_columns(&basis);
    Ok(DirectionSpec { u: u.to_vec(), l, q, p, rotation })
}

impl DirectionSpec {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[i64] {
        &self.u
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    /// Scale with `u = q l`, i.e. `|u|_2`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `|u|_1`.
    pub fn p(&self) -> i64 {
        self.p
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    /// Column `i` (0-based) of the frame, i.e. `R(e_{i+1})`.
    pub fn frame_vector(&self, i: usize) -> Vec<f64> {
        self.rotation.column(i).iter().copied().collect()
    }

    /// Coordinates of `v` in the frame, `R^T v`.
    pub fn to_frame(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        (self.rotation.transpose() * v).iter().copied().collect()
    }

    /// The forced-step set: `sgn(l_i) e_i` for every axis with `l_i != 0`.
    pub fn eps_set(&self) -> Vec<usize> {
        self.u
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| unit_index(i, c.signum()))
            .collect()
    }

    /// `x . u` in exact integer arithmetic; orders points along `l`.
    #[inline]
    pub fn level(&self, x: &Site) -> i64 {
        x.dot_int(&self.u)
    }

    /// True when the frame consists of signed unit vectors, i.e. `u` lies on
    /// a coordinate axis.
    pub fn is_axis_aligned(&self) -> bool {
        self.rotation.iter().all(|&v| v == 0.0 || v == 1.0 || v == -1.0)
    }
}

/// Cone opening parameter, optionally known as an exact ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Alpha {
    Real(f64),
    Ratio(i64, i64),
}

impl Alpha {
    pub fn value(&self) -> f64 {
        match *self {
            Alpha::Real(a) => a,
            Alpha::Ratio(a, b) => a as f64 / b as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Alpha::Real(a) => a > 0.0 && a <= 1.0,
            Alpha::Ratio(a, b) => a > 0 && b > 0 && a <= b,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidGeometry(format!("alpha {self:?} outside (0, 1]")))
        }
    }
}

/// `C(x, l, alpha)`: the intersection of the half-spaces
/// `(z - x) . l_{+-i} >= 0`, `i = 2..d`.
#[derive(Clone, Debug)]
pub struct ConeSpec {
    vertex: Site,
    dir: DirectionSpec,
    alpha: Alpha,
    normals: Vec<Vec<f64>>,
    exact_normals: Option<Vec<Vec<i64>>>,
}

impl ConeSpec {
    pub fn new(vertex: Site, dir: DirectionSpec, alpha: Alpha) -> Result<Self> {
        alpha.validate()?;
        if vertex.dim() != dir.dim() {
            return Err(Error::InvalidGeometry("cone vertex/direction dimension mismatch".into()));
        }
        let a = alpha.value();
        let l = dir.l().to_vec();
        let mut normals = Vec::with_capacity(2 * (dir.dim() - 1));
        for i in 1..dir.dim() {
            let r = dir.frame_vector(i);
            for sign in [1.0, -1.0] {
                let v: Vec<f64> = l.iter().zip(&r).map(|(li, ri)| li + sign * a * ri).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                normals.push(v.into_iter().map(|x| x / n).collect());
            }
        }
        // With an axis-aligned frame and a rational alpha = a/b the normals
        // are positive multiples of b l +- a R(e_i), which are integral.
        let exact_normals = match alpha {
            Alpha::Ratio(num, den) if dir.is_axis_aligned() => {
                let mut out = Vec::new();
                for i in 1..dir.dim() {
                    let r = dir.frame_vector(i);
                    for sign in [1i64, -1] {
                        out.push(
                            l.iter()
                                .zip(&r)
                                .map(|(li, ri)| den * (*li as i64) + sign * num * (*ri as i64))
                                .collect(),
                        );
                    }
                }
                Some(out)
            }
            _ => None,
        };
        Ok(Self { vertex, dir, alpha, normals, exact_normals })
    }

    pub fn vertex(&self) -> Site {
        self.vertex
    }

    pub fn dir(&self) -> &DirectionSpec {
        &self.dir
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    /// Unit face normals in the order `l_{+2}, l_{-2}, l_{+3}, ...`.
    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    pub fn uses_exact_arithmetic(&self) -> bool {
        self.exact_normals.is_some()
    }

    /// Same cone re-anchored at another vertex.
    pub fn anchored_at(&self, vertex: Site) -> ConeSpec {
        ConeSpec { vertex, ..self.clone() }
    }

    /// Membership of `vertex + delta`.
    #[inline]
    pub fn contains_offset(&self, delta: &[i64]) -> bool {
        if let Some(exact) = &self.exact_normals {
            return exact
                .iter()
                .all(|n| n.iter().zip(delta).map(|(a, b)| a * b).sum::<i64>() >= 0);
        }
        self.normals
            .iter()
            .all(|n| n.iter().zip(delta).map(|(a, &b)| a * b as f64).sum::<f64>() >= 0.0)
    }

    pub fn contains(&self, z: &Site) -> bool {
        let mut delta = [0i64; MAX_DIM];
        let d = self.vertex.dim();
        for k in 0..d {
            delta[k] = z.coords()[k] - self.vertex.coords()[k];
        }
        self.contains_offset(&delta[..d])
    }
}

pub fn cone_contains(cone: &ConeSpec, z: &Site) -> bool {
    cone.contains(z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoxClass {
    Interior,
    PositiveBoundary,
    OtherBoundary,
    Outside,
}

/// `B_{L,L',l}(x) = x + R((-L, L) x (-L', L')^{d-1}) ∩ Z^d`.
#[derive(Clone, Debug)]
pub struct BoxSpec {
    center: Site,
    depth: f64,
    half_width: f64,
    dir: DirectionSpec,
    frame: [[f64; MAX_DIM]; MAX_DIM],
}

impl BoxSpec {
    pub fn new(center: Site, depth: f64, half_width: f64, dir: DirectionSpec) -> Result<Self> {
        if !(depth > 0.0 && half_width > 0.0) {
            return Err(Error::InvalidGeometry(format!(
                "box sizes must be positive (L = {depth}, L' = {half_width})"
            )));
        }
        if center.dim() != dir.dim() {
            return Err(Error::InvalidGeometry("box center/direction dimension mismatch".into()));
        }
        let mut frame = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, col) in frame.iter_mut().enumerate().take(dir.dim()) {
            col[..dir.dim()].copy_from_slice(&dir.frame_vector(i));
        }
        Ok(Self { center, depth, half_width, dir, frame })
    }

    pub fn center(&self) -> Site {
        self.center
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dir(&self) -> &DirectionSpec {
        &self.dir
    }

    #[inline]
    fn frame_coord(&self, z: &Site, i: usize) -> f64 {
        let zc = z.coords();
        let cc = self.center.coords();
        (0..zc.len()).map(|k| (zc[k] - cc[k]) as f64 * self.frame[i][k]).sum()
    }

    #[inline]
    pub fn is_interior(&self, z: &Site) -> bool {
        self.frame_coord(z, 0).abs() < self.depth
            && (1..z.dim()).all(|i| self.frame_coord(z, i).abs() < self.half_width)
    }

    /// Classification of a point that is known not to be interior but to
    /// have an interior neighbour (e.g. the exit point of a walk).
    pub fn boundary_class(&self, z: &Site) -> BoxClass {
        if self.frame_coord(z, 0) >= self.depth {
            BoxClass::PositiveBoundary
        } else {
            BoxClass::OtherBoundary
        }
    }

    pub fn classify(&self, z: &Site) -> BoxClass {
        if self.is_interior(z) {
            return BoxClass::Interior;
        }
        let touches = (0..2 * z.dim()).any(|e| self.is_interior(&z.step(e)));
        if touches {
            self.boundary_class(z)
        } else {
            BoxClass::Outside
        }
    }
}

pub fn box_exit_class(b: &BoxSpec, z: &Site) -> BoxClass {
    b.classify(z)
}

/// `H_{x,l} = { y : y . l < x . l }`.
#[derive(Clone, Debug)]
pub struct HalfSpaceSpec {
    anchor: Site,
    dir: DirectionSpec,
}

impl HalfSpaceSpec {
    pub fn new(anchor: Site, dir: DirectionSpec) -> Self {
        Self { anchor, dir }
    }

    pub fn contains(&self, z: &Site) -> bool {
        self.dir.level(z) < self.dir.level(&self.anchor)
    }
}

pub fn halfspace_contains(h: &HalfSpaceSpec, z: &Site) -> bool {
    h.contains(z)
}
