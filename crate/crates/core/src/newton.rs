//! Damped Newton iteration with deflation against known roots.
//!
//! The deflated residual is `G(x) = M(x) F(x)` with
//! `M(x) = prod_k (1 / ||x - x_k||_inf^2 + 1)`. Its Newton step is a scalar
//! multiple of the plain Newton step for `F`, so only `F` and its Jacobian
//! are ever factorised.

use nalgebra::{DMatrix, DVector};

use crate::grid::sup_norm;

pub trait NewtonSystem {
    type Error;

    fn dim(&self) -> usize;

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, Self::Error>;

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, Self::Error>;

    /// Maps a trial point back into the admissible set.
    fn project(&self, _x: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Stop once `||F(x)||_inf < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Smallest damping factor tried by the backtracking line search.
    pub min_damping: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 60, min_damping: 1.0 / 4096.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NewtonOutcome {
    Converged { x: Vec<f64>, iterations: usize, residual: f64 },
    Failed { x: Vec<f64>, iterations: usize, residual: f64, reason: &'static str },
}

impl NewtonOutcome {
    pub fn converged(&self) -> bool {
        matches!(self, NewtonOutcome::Converged { .. })
    }
}

fn deflation(x: &[f64], known: &[Vec<f64>]) -> (f64, Vec<f64>) {
    // log M and its (sub)gradient with respect to x
    let mut log_m = 0.0;
    let mut grad = vec![0.0; x.len()];
    for k in known {
        let (mut j_star, mut dist) = (0, 0.0_f64);
        for (j, (a, b)) in x.iter().zip(k).enumerate() {
            let d = (a - b).abs();
            if d > dist {
                dist = d;
                j_star = j;
            }
        }
        if dist == 0.0 {
            return (f64::INFINITY, grad);
        }
        let inv2 = 1.0 / (dist * dist);
        log_m += (inv2 + 1.0).ln();
        let dlog_ddist = -2.0 * inv2 / dist / (inv2 + 1.0);
        grad[j_star] += dlog_ddist * (x[j_star] - k[j_star]).signum();
    }
    (log_m, grad)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs damped Newton on `sys` from `x0`, deflating the roots in `known`.
///
/// Evaluation errors at `x0` are returned; errors at trial points count as
/// rejected steps.
pub fn deflated_newton<S: NewtonSystem>(
    sys: &S,
    x0: &[f64],
    known: &[Vec<f64>],
    settings: &NewtonSettings,
) -> Result<NewtonOutcome, S::Error> {
    let mut x = x0.to_vec();
    sys.project(&mut x);
    let mut f = sys.residual(&x)?;
    let merit = |x: &[f64], f: &[f64]| {
        let (log_m, _) = deflation(x, known);
        log_m + norm2(f).ln()
    };
    let mut current = merit(&x, &f);

    for iter in 0..settings.max_iter {
        let res = sup_norm(&f);
        if res < settings.tol {
            return Ok(NewtonOutcome::Converged { x, iterations: iter, residual: res });
        }
        let jac = sys.jacobian(&x)?;
        let rhs = DVector::from_iterator(f.len(), f.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            return Ok(NewtonOutcome::Failed { x, iterations: iter, residual: res, reason: "singular Jacobian" });
        };
        let (_, grad) = deflation(&x, known);
        let slope: f64 = grad.iter().zip(step.iter()).map(|(g, d)| g * d).sum();
        let denom = 1.0 - slope;
        let tau = if denom.abs() > 1e-12 { 1.0 / denom } else { 1.0 };

        let mut damping = 1.0;
        let mut accepted = None;
        while damping >= settings.min_damping {
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + damping * tau * d).collect();
            sys.project(&mut trial);
            if let Ok(ft) = sys.residual(&trial) {
                let m = merit(&trial, &ft);
                if m == f64::NEG_INFINITY || (m.is_finite() && m <= current + (1.0 - 1e-4 * damping).ln()) {
                    accepted = Some((trial, ft, m));
                    break;
                }
            }
            damping *= 0.5;
        }
        match accepted {
            Some((xn, fnew, m)) => {
                x = xn;
                f = fnew;
                current = m;
            }
            None => {
                return Ok(NewtonOutcome::Failed { x, iterations: iter, residual: res, reason: "line search stalled" });
            }
        }
    }
    let res = sup_norm(&f);
    if res < settings.tol {
        Ok(NewtonOutcome::Converged { x, iterations: settings.max_iter, residual: res })
    } else {
        Ok(NewtonOutcome::Failed { x, iterations: settings.max_iter, residual: res, reason: "iteration limit" })
    }
}

/// Forward-difference Jacobian of a vector map.
pub fn fd_jacobian<E>(
    mut g: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    x: &[f64],
    g0: &[f64],
) -> Result<DMatrix<f64>, E> {
    let n = x.len();
    let m = g0.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-7 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let gp = g(&xp)?;
        for i in 0..m {
            jac[(i, j)] = (gp[i] - g0[i]) / h;
        }
        xp[j] = x[j];
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    /// x^2 - 1 = 0 componentwise in one dimension: roots at +-1.
    struct Quadratic;

    impl NewtonSystem for Quadratic {
        type Error = Infallible;
        fn dim(&self) -> usize {
            1
        }
        fn residual(&self, x: &[f64]) -> Result<Vec<f64>, Infallible> {
            Ok(vec![x[0] * x[0] - 1.0])
        }
        fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, Infallible> {
            Ok(DMatrix::from_element(1, 1, 2.0 * x[0]))
        }
    }

    #[test]
    fn converges_to_nearby_root() {
        let out = deflated_newton(&Quadratic, &[3.0], &[], &NewtonSettings::default()).unwrap();
        match out {
            NewtonOutcome::Converged { x, .. } => assert!((x[0] - 1.0).abs() < 1e-10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deflation_finds_the_other_root() {
        let out = deflated_newton(&Quadratic, &[3.0], &[vec![1.0]], &NewtonSettings::default()).unwrap();
        match out {
            NewtonOutcome::Converged { x, .. } => assert!((x[0] + 1.0).abs() < 1e-10, "{x:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fd_jacobian_of_linear_map_is_exact_enough() {
        let g = |x: &[f64]| Ok::<_, Infallible>(vec![2.0 * x[0] + x[1], -x[0] + 3.0 * x[1]]);
        let x = [0.3, -0.7];
        let j = fd_jacobian(g, &x, &g(&x).unwrap()).unwrap();
        let expected = [[2.0, 1.0], [-1.0, 3.0]];
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[(i, k)] - expected[i][k]).abs() < 1e-6);
            }
        }
    }
}
