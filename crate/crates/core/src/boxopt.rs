//! Sampled extrema of a bivariate function over an axis-aligned rectangle.
//!
//! Variables tagged nondecreasing are pinned to the relevant corner
//! coordinate; the remaining variables are searched on a uniform grid,
//! followed by one refinement pass around the best cell. Results for
//! untagged variables are sampled bounds (an upper bound on the minimum, a
//! lower bound on the maximum), not verified enclosures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::EvalError;

pub const DEFAULT_GRID_N: usize = 129;
const SPOT_CHECKS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoxOptError {
    #[error("rectangle bounds out of order or non-finite: [{lo:?}, {hi:?}]")]
    BadRect { lo: [f64; 2], hi: [f64; 2] },
    #[error("grid_n must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("declared nondecreasing in variable {var}, but f({lo:?}) = {f_lo} > f({hi:?}) = {f_hi}")]
    MonotonicityViolation { var: usize, lo: [f64; 2], hi: [f64; 2], f_lo: f64, f_hi: f64 },
    #[error("evaluation failed at {at:?}: {source}")]
    Eval { at: [f64; 2], source: EvalError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Nondecreasing,
    Unknown,
}

/// Declared monotonicity of `f(u1, u2)` in each variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonotoneTag(pub [Monotonicity; 2]);

impl MonotoneTag {
    pub const BOTH: MonotoneTag = MonotoneTag([Monotonicity::Nondecreasing, Monotonicity::Nondecreasing]);
    pub const UNKNOWN: MonotoneTag = MonotoneTag([Monotonicity::Unknown, Monotonicity::Unknown]);

    pub fn is_nondecreasing(&self, var: usize) -> bool {
        self.0[var] == Monotonicity::Nondecreasing
    }

    pub fn fully_monotone(&self) -> bool {
        self.is_nondecreasing(0) && self.is_nondecreasing(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self, BoxOptError> {
        let ok = (0..2).all(|i| lo[i].is_finite() && hi[i].is_finite() && lo[i] <= hi[i]);
        if !ok {
            return Err(BoxOptError::BadRect { lo, hi });
        }
        Ok(Self { lo, hi })
    }
}

/// A sampled extremum and where it was attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub at: [f64; 2],
    /// False only when every variable was pinned by monotonicity.
    pub sampled: bool,
    pub evaluations: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Sense {
    Min,
    Max,
}

impl Sense {
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Sense::Min => a < b,
            Sense::Max => a > b,
        }
    }
}

pub fn box_min<F>(f: F, rect: Rect, tag: MonotoneTag, grid_n: usize) -> Result<Extremum, BoxOptError>
where
    F: FnMut(f64, f64) -> Result<f64, EvalError>,
{
    extremum(f, rect, tag, grid_n, Sense::Min)
}

pub fn box_max<F>(f: F, rect: Rect, tag: MonotoneTag, grid_n: usize) -> Result<Extremum, BoxOptError>
where
    F: FnMut(f64, f64) -> Result<f64, EvalError>,
{
    extremum(f, rect, tag, grid_n, Sense::Max)
}

/// Spot-checks declared monotonicity on `SPOT_CHECKS` random ordered pairs
/// per tagged variable. Deterministic.
pub fn verify_monotone<F>(mut f: F, rect: Rect, tag: MonotoneTag) -> Result<(), BoxOptError>
where
    F: FnMut(f64, f64) -> Result<f64, EvalError>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d6f_6e6f);
    for var in (0..2).filter(|&v| tag.is_nondecreasing(v)) {
        if rect.lo[var] == rect.hi[var] {
            continue;
        }
        for _ in 0..SPOT_CHECKS {
            let mut lo = [0.0; 2];
            for (k, x) in lo.iter_mut().enumerate() {
                *x = sample(&mut rng, rect.lo[k], rect.hi[k]);
            }
            let mut hi = lo;
            hi[var] = sample(&mut rng, lo[var], rect.hi[var]);
            let f_lo = eval_at(&mut f, lo)?;
            let f_hi = eval_at(&mut f, hi)?;
            if f_hi < f_lo - 1e-12 * (1.0 + f_lo.abs()) {
                return Err(BoxOptError::MonotonicityViolation { var, lo, hi, f_lo, f_hi });
            }
        }
    }
    Ok(())
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn eval_at<F>(f: &mut F, at: [f64; 2]) -> Result<f64, BoxOptError>
where
    F: FnMut(f64, f64) -> Result<f64, EvalError>,
{
    let v = f(at[0], at[1]).map_err(|source| BoxOptError::Eval { at, source })?;
    if !v.is_finite() {
        return Err(BoxOptError::Eval { at, source: EvalError::NonFinite(v) });
    }
    Ok(v)
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi == lo {
        return vec![lo];
    }
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

fn extremum<F>(mut f: F, rect: Rect, tag: MonotoneTag, grid_n: usize, sense: Sense) -> Result<Extremum, BoxOptError>
where
    F: FnMut(f64, f64) -> Result<f64, EvalError>,
{
    let rect = Rect::new(rect.lo, rect.hi)?;
    if grid_n < 2 {
        return Err(BoxOptError::GridTooSmall(grid_n));
    }
    verify_monotone(&mut f, rect, tag)?;

    // Pin nondecreasing variables at the relevant edge.
    let mut lo = rect.lo;
    let mut hi = rect.hi;
    for var in 0..2 {
        if tag.is_nondecreasing(var) {
            let edge = match sense {
                Sense::Min => rect.lo[var],
                Sense::Max => rect.hi[var],
            };
            lo[var] = edge;
            hi[var] = edge;
        }
    }
    let sampled = lo != hi;

    let mut evaluations = 0;
    let mut scan = |lo: [f64; 2], hi: [f64; 2], f: &mut F| -> Result<(f64, [f64; 2], [usize; 2], [Vec<f64>; 2]), BoxOptError> {
        let xs = axis(lo[0], hi[0], grid_n);
        let ys = axis(lo[1], hi[1], grid_n);
        let mut best = (f64::NAN, [0.0; 2], [0usize; 2]);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                let v = eval_at(f, [x, y])?;
                evaluations += 1;
                if best.0.is_nan() || sense.better(v, best.0) {
                    best = (v, [x, y], [i, j]);
                }
            }
        }
        Ok((best.0, best.1, best.2, [xs, ys]))
    };

    let (mut value, mut at, idx, axes) = scan(lo, hi, &mut f)?;
    if sampled {
        let mut sub_lo = [0.0; 2];
        let mut sub_hi = [0.0; 2];
        for var in 0..2 {
            let a = &axes[var];
            let k = idx[var];
            sub_lo[var] = a[k.saturating_sub(1)];
            sub_hi[var] = a[(k + 1).min(a.len() - 1)];
        }
        let (v2, at2, _, _) = scan(sub_lo, sub_hi, &mut f)?;
        if sense.better(v2, value) {
            value = v2;
            at = at2;
        }
    }
    Ok(Extremum { value, at, sampled, evaluations })
}
