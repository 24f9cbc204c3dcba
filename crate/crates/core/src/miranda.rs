//! Sign conditions on the faces of an `n`-rectangle and zero finding by
//! bisection.
//!
//! Face checks are sampled on a lattice, so they are evidence rather than a
//! proof.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::grid::sup_norm;
use crate::newton::{deflated_newton, fd_jacobian, NewtonOutcome, NewtonSettings, NewtonSystem};

pub const DEFAULT_SAMPLES: usize = 33;
pub const MAX_FACE_POINTS: usize = 100_000;
pub const DEFAULT_MAX_DEPTH: usize = 80;
/// Samples per dimension when re-checking faces of sub-rectangles.
const CHILD_SAMPLES: usize = 9;
/// Each child of a split extends this fraction of the parent edge past the
/// midpoint.
const OVERLAP: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MirandaError {
    #[error("invalid rectangle: {0}")]
    BadRectangle(String),
    #[error("field returned {got} components, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("face conditions fail for coordinate(s) {failed:?}")]
    FacesFail { failed: Vec<usize>, report: FaceReport },
    #[error("no zero found within depth {max_depth} ({boxes} boxes examined)")]
    NotFound { max_depth: usize, boxes: usize },
    #[error("lower corner must be strictly positive, got {0:?}")]
    NonPositiveCorner(Vec<f64>),
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rectangle {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, MirandaError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(MirandaError::BadRectangle(format!(
                "corner dimensions {} and {} must agree and be nonzero",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (a, b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(MirandaError::BadRectangle(format!("need a_{i} < b_{i}, got [{a}, {b}]", i = i + 1)));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn max_edge(&self) -> (usize, f64) {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, e)| if e > best.1 { (i, e) } else { best })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| a <= v && v <= b)
    }

    pub fn translated(&self, shift: &[f64]) -> Self {
        let add = |v: &[f64]| v.iter().zip(shift).map(|(a, s)| a + s).collect();
        Self { lower: add(&self.lower), upper: add(&self.upper) }
    }

    fn split(&self, axis: usize) -> [Rectangle; 2] {
        let (a, b) = (self.lower[axis], self.upper[axis]);
        let mid = 0.5 * (a + b);
        let pad = OVERLAP * (b - a);
        let mut left = self.clone();
        left.upper[axis] = (mid + pad).min(b);
        let mut right = self.clone();
        right.lower[axis] = (mid - pad).max(a);
        [left, right]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FaceCondition {
    /// `g_i >= 0` on `x_i = a_i` and `g_i <= 0` on `x_i = b_i`.
    A,
    /// `g_i <= 0` on `x_i = a_i` and `g_i >= 0` on `x_i = b_i`.
    B,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceReport {
    pub conditions: Vec<FaceCondition>,
    pub samples_per_dim: usize,
    pub points: usize,
    pub tol: f64,
}

impl FaceReport {
    pub fn failed(&self) -> Vec<usize> {
        self.conditions.iter().enumerate().filter(|(_, c)| **c == FaceCondition::Fail).map(|(i, _)| i + 1).collect()
    }

    pub fn pass(&self) -> bool {
        self.failed().is_empty()
    }
}

fn eval_checked<G>(g: &G, x: &[f64]) -> Result<Vec<f64>, MirandaError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    let v = g(x)?;
    if v.len() != x.len() {
        return Err(MirandaError::DimensionMismatch { expected: x.len(), got: v.len() });
    }
    if let Some(&bad) = v.iter().find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(bad).into());
    }
    Ok(v)
}

/// Visits the lattice with `s` points per axis over `rect`, with axis `fixed`
/// (if any) pinned to `value`.
fn for_lattice(
    rect: &Rectangle,
    s: usize,
    fixed: Option<(usize, f64)>,
    mut visit: impl FnMut(&[f64]) -> Result<(), MirandaError>,
) -> Result<(), MirandaError> {
    let n = rect.dim();
    let free: Vec<usize> = (0..n).filter(|&k| fixed.map_or(true, |(f, _)| f != k)).collect();
    let mut x = rect.lower.clone();
    if let Some((axis, value)) = fixed {
        x[axis] = value;
    }
    let coord = |k: usize, j: usize| {
        if j + 1 == s {
            rect.upper[k]
        } else {
            rect.lower[k] + (rect.upper[k] - rect.lower[k]) * j as f64 / (s - 1) as f64
        }
    };
    let mut idx = vec![0usize; free.len()];
    loop {
        for (slot, &k) in free.iter().enumerate() {
            x[k] = coord(k, idx[slot]);
        }
        visit(&x)?;
        let mut slot = 0;
        loop {
            if slot == free.len() {
                return Ok(());
            }
            idx[slot] += 1;
            if idx[slot] < s {
                break;
            }
            idx[slot] = 0;
            slot += 1;
        }
    }
}

/// Largest per-axis sample count `<= requested` keeping `faces * s^free`
/// under [`MAX_FACE_POINTS`].
fn capped_samples(requested: usize, free_dims: usize, faces: usize) -> usize {
    let mut s = requested.max(2);
    while s > 2 && (faces as f64) * (s as f64).powi(free_dims as i32) > MAX_FACE_POINTS as f64 {
        s -= 1;
    }
    s
}

/// Classifies every coordinate by the signs of `g_i` on its two opposite
/// faces, sampled on a lattice with `samples_per_dim` points per free axis.
pub fn check_faces<G>(g: &G, rect: &Rectangle, samples_per_dim: usize) -> Result<FaceReport, MirandaError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    let n = rect.dim();
    let s = capped_samples(samples_per_dim, n - 1, 2 * n);
    // signs[i] = [min on a-face, max on a-face, min on b-face, max on b-face]
    let mut ext = vec![[f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY]; n];
    let mut scale = 0.0_f64;
    let mut points = 0;
    for i in 0..n {
        for (side, value) in [(0, rect.lower[i]), (2, rect.upper[i])] {
            for_lattice(rect, s, Some((i, value)), |x| {
                let v = eval_checked(g, x)?;
                points += 1;
                scale = scale.max(sup_norm(&v));
                let gi = v[i];
                ext[i][side] = ext[i][side].min(gi);
                ext[i][side + 1] = ext[i][side + 1].max(gi);
                Ok(())
            })?;
        }
    }
    let tol = 1e-12 * scale.max(1.0);
    let conditions = ext
        .iter()
        .map(|&[a_min, a_max, b_min, b_max]| {
            if a_min >= -tol && b_max <= tol {
                FaceCondition::A
            } else if a_max <= tol && b_min >= -tol {
                FaceCondition::B
            } else {
                FaceCondition::Fail
            }
        })
        .collect();
    Ok(FaceReport { conditions, samples_per_dim: s, points, tol })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroOptions {
    /// Required `||g(x)||_inf`.
    pub tol: f64,
    pub max_depth: usize,
    pub samples_per_dim: usize,
    /// Finish with damped Newton once boxes are below `sqrt(tol)`.
    pub polish: bool,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_depth: DEFAULT_MAX_DEPTH, samples_per_dim: DEFAULT_SAMPLES, polish: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub depth: usize,
    pub boxes: usize,
    pub polished: bool,
    pub faces: FaceReport,
}

/// `J^{-1} g` with `J` the forward-difference Jacobian at the box center,
/// or `None` when `J` is singular.
fn preconditioner<G>(g: &G, rect: &Rectangle) -> Result<Option<DMatrix<f64>>, MirandaError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    let c = rect.center();
    let g0 = eval_checked(g, &c)?;
    let jac = fd_jacobian(|x| eval_checked(g, x), &c, &g0)?;
    Ok(jac.try_inverse())
}

fn qualifies<G>(g: &G, rect: &Rectangle) -> Result<bool, MirandaError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    let report = match preconditioner(g, rect)? {
        Some(p) => {
            let h = |x: &[f64]| -> Result<Vec<f64>, EvalError> {
                let v = g(x)?;
                Ok((&p * DVector::from_vec(v)).iter().copied().collect())
            };
            check_faces(&h, rect, CHILD_SAMPLES)?
        }
        None => check_faces(g, rect, CHILD_SAMPLES)?,
    };
    Ok(report.pass())
}

struct Field<'a, G> {
    g: &'a G,
    rect: &'a Rectangle,
}

impl<G> NewtonSystem for Field<'_, G>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    type Error = MirandaError;

    fn dim(&self) -> usize {
        self.rect.dim()
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, MirandaError> {
        eval_checked(self.g, x)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, MirandaError> {
        let g0 = eval_checked(self.g, x)?;
        fd_jacobian(|y| eval_checked(self.g, y), x, &g0)
    }

    fn project(&self, x: &mut [f64]) {
        for (v, (a, b)) in x.iter_mut().zip(self.rect.lower.iter().zip(&self.rect.upper)) {
            *v = v.clamp(*a, *b);
        }
    }
}

/// Finds `x` in `rect` with `||g(x)||_inf < tol`.
///
/// Requires the face conditions on `rect`. Sub-rectangles are kept when
/// `J^{-1} g` (Jacobian at their center) still satisfies the face
/// conditions; the search is depth-first on the longest edge.
pub fn find_zero<G>(g: &G, rect: &Rectangle, opts: &ZeroOptions) -> Result<ZeroResult, MirandaError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    if !(opts.tol > 0.0) {
        return Err(MirandaError::BadTolerance(opts.tol));
    }
    let faces = check_faces(g, rect, opts.samples_per_dim)?;
    if !faces.pass() {
        return Err(MirandaError::FacesFail { failed: faces.failed(), report: faces });
    }
    let polish_edge = opts.tol.sqrt();
    let mut stack = vec![(rect.clone(), 0usize)];
    let mut boxes = 0;
    while let Some((r, depth)) = stack.pop() {
        boxes += 1;
        let c = r.center();
        let gc = eval_checked(g, &c)?;
        let res = sup_norm(&gc);
        if res < opts.tol {
            return Ok(ZeroResult { x: c, residual: res, depth, boxes, polished: false, faces });
        }
        let (axis, edge) = r.max_edge();
        if opts.polish && edge <= polish_edge {
            let settings = NewtonSettings { tol: opts.tol, max_iter: 50, ..NewtonSettings::default() };
            if let Ok(NewtonOutcome::Converged { x, residual, .. }) =
                deflated_newton(&Field { g, rect }, &c, &[], &settings)
            {
                return Ok(ZeroResult { x, residual, depth, boxes, polished: true, faces });
            }
        }
        if depth >= opts.max_depth || edge <= f64::EPSILON * (1.0 + c[axis].abs()) {
            continue;
        }
        let [left, right] = r.split(axis);
        let keep_right = qualifies(g, &right)?;
        let keep_left = qualifies(g, &left)?;
        if keep_right {
            stack.push((right, depth + 1));
        }
        if keep_left {
            stack.push((left, depth + 1));
        }
    }
    Err(MirandaError::NotFound { max_depth: opts.max_depth, boxes })
}

/// Shift that moves `rect` into the open positive orthant: `(1 - min a_i)`
/// in every coordinate when some `a_i <= 0`, zero otherwise.
pub fn positive_shift(rect: &Rectangle) -> Vec<f64> {
    let min = rect.lower.iter().copied().fold(f64::INFINITY, f64::min);
    let amount = if min > 0.0 { 0.0 } else { 1.0 - min };
    vec![amount; rect.dim()]
}

/// `f(x) = lambda g(x) + x`, whose fixed points on the rectangle are the
/// zeros of `g`.
#[derive(Debug, Clone)]
pub struct PmReduction<G> {
    g: G,
    pub lambda: f64,
    /// Sampled `max |g_i|` over the rectangle.
    pub sup_g: f64,
    pub samples_per_dim: usize,
}

impl<G> PmReduction<G>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, MirandaError> {
        let v = eval_checked(&self.g, x)?;
        Ok(v.iter().zip(x).map(|(gi, xi)| self.lambda * gi + xi).collect())
    }
}

/// `lambda = min(a / (1.1 G), 1)` with `a = min_i a_i` and `G` the sampled
/// sup of `|g_i|`; `lambda = 1` when `g` vanishes on every sample.
pub fn pm_to_fixed_point<G>(g: G, rect: &Rectangle, samples_per_dim: usize) -> Result<PmReduction<G>, MirandaError>
where
    G: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    if rect.lower.iter().any(|&a| a <= 0.0) {
        return Err(MirandaError::NonPositiveCorner(rect.lower.clone()));
    }
    let n = rect.dim();
    let s = capped_samples(samples_per_dim, n, 1);
    let mut sup_g = 0.0_f64;
    for_lattice(rect, s, None, |x| {
        sup_g = sup_g.max(sup_norm(&eval_checked(&g, x)?));
        Ok(())
    })?;
    let a = rect.lower.iter().copied().fold(f64::INFINITY, f64::min);
    let lambda = if sup_g == 0.0 { 1.0 } else { (a / (1.1 * sup_g)).min(1.0) };
    Ok(PmReduction { g, lambda, sup_g, samples_per_dim: s })
}

/// Fixed point of a nonnegative map `f` in `[r_1, R_1] x ... x [r_n, R_n]`,
/// found as a zero of `x - f(x)` once every coordinate passes the face test.
pub fn kp_fixed_point_rn<F>(f: &F, r: &[f64], big_r: &[f64], opts: &ZeroOptions) -> Result<ZeroResult, MirandaError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, EvalError>,
{
    if r.iter().any(|&v| !(v > 0.0)) {
        return Err(MirandaError::BadRectangle(format!("inner radii must be positive, got {r:?}")));
    }
    let rect = Rectangle::new(r.to_vec(), big_r.to_vec())?;
    let g = |x: &[f64]| -> Result<Vec<f64>, EvalError> {
        let fx = f(x)?;
        Ok(x.iter().zip(fx).map(|(a, b)| a - b).collect())
    };
    find_zero(&g, &rect, opts)
}
