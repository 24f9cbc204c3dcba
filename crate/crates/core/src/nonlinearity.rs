//! Nonlinearities `f_i(u1, u2) >= 0` together with their monotonicity tags.

use std::fmt;
use std::sync::Arc;

use crate::boxopt::MonotoneTag;
use crate::expr::{EvalError, Expr};

type NativeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Expr(Expr),
    Native(NativeFn),
}

/// A continuous map `R_+^2 -> R_+`.
#[derive(Clone)]
pub struct Nonlinearity {
    source: Source,
    tag: MonotoneTag,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = match &self.source {
            Source::Expr(e) => e.render(),
            Source::Native(_) => "<native>".to_string(),
        };
        f.debug_struct("Nonlinearity").field("source", &src).field("tag", &self.tag).finish()
    }
}

impl Nonlinearity {
    pub fn from_expr(expr: Expr, tag: MonotoneTag) -> Self {
        Self { source: Source::Expr(expr), tag }
    }

    pub fn parse(src: &str, tag: MonotoneTag) -> Result<Self, crate::expr::ParseError> {
        Ok(Self::from_expr(Expr::parse(src)?, tag))
    }

    pub fn native(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, tag: MonotoneTag) -> Self {
        Self { source: Source::Native(Arc::new(f)), tag }
    }

    pub fn constant(c: f64) -> Self {
        Self::native(move |_, _| c, MonotoneTag::BOTH)
    }

    pub fn tag(&self) -> MonotoneTag {
        self.tag
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.source {
            Source::Expr(e) => Some(e),
            Source::Native(_) => None,
        }
    }

    /// Finite, nonnegative value at `(u1, u2)`.
    pub fn eval(&self, u1: f64, u2: f64) -> Result<f64, EvalError> {
        let v = match &self.source {
            Source::Expr(e) => e.eval(u1, u2)?,
            Source::Native(f) => f(u1, u2),
        };
        if !v.is_finite() {
            return Err(EvalError::NonFinite(v));
        }
        if v < 0.0 {
            return Err(EvalError::Negative { value: v });
        }
        Ok(v)
    }
}
