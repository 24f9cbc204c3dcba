//! Radial solutions of the Dirichlet `(p1, p2)`-Laplacian system on the unit
//! ball of `R^n`, written as the fixed-point problem
//!
//! ```text
//! T_i(u)(r) = ∫_r^1 phi_{p_i}^{-1}( s^{1-n} ∫_0^s τ^{n-1} f_i(u1(τ), u2(τ)) dτ ) ds.
//! ```
//!
//! Both nested integrals use product integration: the integrand's smooth
//! factor (`f_i` inside, `F_i` outside) is interpolated linearly on each grid
//! cell and the power weights are integrated exactly.

use serde::Serialize;
use thiserror::Error;

use crate::boxopt::{verify_monotone, BoxOptError, Rect};
use crate::certificate::{Certificate, GridMeta, InequalityRecord, LevelCertificate, StructuralCheck};
use crate::cones::{phi_min, Behaviour, ConeError, PhiSection, Regime, Window};
use crate::expr::EvalError;
use crate::grid::{node, GridError, GridFunction, GridPair};
use crate::nonlinearity::Nonlinearity;
use crate::solution::{Method, SolutionRecord};

pub const DEFAULT_NODES: usize = 513;
/// Region on which declared monotonicity is spot-checked.
const MONOTONE_CHECK_BOX: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("need p > n >= 2, got p = {p}, n = {n}")]
    BadExponent { p: f64, n: u32 },
    #[error("nonlinearity f{0} must be declared nondecreasing in both variables")]
    NotMonotone(usize),
    #[error("input component {component} is not in the cone: {reason}")]
    NotInCone { component: usize, reason: &'static str },
    #[error(transparent)]
    Monotonicity(#[from] BoxOptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("grid has {got} nodes, problem uses {expected}")]
    GridSize { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialSolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {iterations} iterations (last step {step:e}, residual {residual:e})")]
    NoConvergence { iterations: usize, step: f64, residual: f64 },
    #[error("component {component} left the section at iteration {iteration}: {value} > {bound}")]
    SectionEscape { component: usize, value: f64, bound: f64, iteration: usize },
    #[error(transparent)]
    Problem(#[from] RadialError),
}

/// `|t|^{p-2} t`
pub fn phi_p(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(p - 2.0) * t
    }
}

/// `sign(y) |y|^{1/(p-1)}`
pub fn phi_p_inv(y: f64, p: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y.signum() * y.abs().powf(1.0 / (p - 1.0))
    }
}

/// `((p - n)/(p - 1)) (1 - b) a^{n/(p-1)}`
pub fn cone_constant(p: f64, n: u32, a: f64, b: f64) -> Result<f64, RadialError> {
    if !(n >= 2 && p > n as f64 && p.is_finite()) {
        return Err(RadialError::BadExponent { p, n });
    }
    Window::interior(a, b)?;
    let nf = n as f64;
    Ok((p - nf) / (p - 1.0) * (1.0 - b) * a.powf(nf / (p - 1.0)))
}

/// Lower Harnack profile `((p - n)/(p - 1)) (1 - r) r^{n/(p-1)}`.
pub fn harnack_profile(r: f64, p: f64, n: u32) -> f64 {
    let nf = n as f64;
    (p - nf) / (p - 1.0) * (1.0 - r) * r.powf(nf / (p - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PParams {
    pub p: [f64; 2],
    pub n: u32,
    pub window: Window,
}

impl PParams {
    pub fn new(p: [f64; 2], n: u32, window: Window) -> Result<Self, RadialError> {
        let window = Window::interior(window.a, window.b)?;
        for &pi in &p {
            cone_constant(pi, n, window.a, window.b)?;
        }
        Ok(Self { p, n, window })
    }

    pub fn cone_constants(&self) -> [f64; 2] {
        self.p.map(|p| cone_constant(p, self.n, self.window.a, self.window.b).expect("validated"))
    }

    /// `(b - a) a^{n-1} (1 - b)^{p_i - 1}`
    pub fn lower_factor(&self, i: usize) -> f64 {
        let Window { a, b } = self.window;
        (b - a) * a.powi(self.n as i32 - 1) * (1.0 - b).powf(self.p[i] - 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct RadialProblem {
    params: PParams,
    nonlinearities: [Nonlinearity; 2],
    nodes: usize,
    /// Per cell `[s_j, s_{j+1}]`: exact weights of `f_j` and `f_{j+1}` in
    /// `∫ τ^{n-1} f dτ` under linear interpolation of `f`.
    inner_weights: Vec<[f64; 2]>,
}

impl RadialProblem {
    pub fn new(params: PParams, nonlinearities: [Nonlinearity; 2], nodes: usize) -> Result<Self, RadialError> {
        if nodes < 2 {
            return Err(GridError::TooFewNodes(nodes).into());
        }
        let rect = Rect::new([0.0, 0.0], [MONOTONE_CHECK_BOX; 2])?;
        for (i, f) in nonlinearities.iter().enumerate() {
            if !f.tag().fully_monotone() {
                return Err(RadialError::NotMonotone(i + 1));
            }
            verify_monotone(|u, v| f.eval(u, v), rect, f.tag())?;
        }
        let n = params.n as i32;
        let inner_weights = (0..nodes - 1)
            .map(|j| {
                let (lo, hi) = (node(j, nodes), node(j + 1, nodes));
                let h = hi - lo;
                let m0 = (hi.powi(n) - lo.powi(n)) / n as f64;
                let m1 = (hi.powi(n + 1) - lo.powi(n + 1)) / (n + 1) as f64;
                [(hi * m0 - m1) / h, (m1 - lo * m0) / h]
            })
            .collect();
        Ok(Self { params, nonlinearities, nodes, inner_weights })
    }

    pub fn params(&self) -> &PParams {
        &self.params
    }

    pub fn nonlinearities(&self) -> &[Nonlinearity; 2] {
        &self.nonlinearities
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    fn check_input(&self, u: &GridPair) -> Result<(), RadialError> {
        if u.len() != self.nodes {
            return Err(RadialError::GridSize { expected: self.nodes, got: u.len() });
        }
        for i in 0..2 {
            let c = u.component(i);
            if !c.is_nonnegative() {
                return Err(RadialError::NotInCone { component: i + 1, reason: "negative value" });
            }
            if !c.is_nonincreasing(1e-12 * (1.0 + c.sup_norm())) {
                return Err(RadialError::NotInCone { component: i + 1, reason: "not nonincreasing" });
            }
        }
        Ok(())
    }

    fn apply_component(&self, i: usize, f: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        let q = 1.0 / (self.params.p[i] - 1.0);
        let dim = self.params.n as i32;
        let mut big_f = vec![0.0; n];
        let mut acc = 0.0;
        for j in 0..n - 1 {
            let [w0, w1] = self.inner_weights[j];
            acc += w0 * f[j] + w1 * f[j + 1];
            big_f[j + 1] = acc / node(j + 1, n).powi(dim - 1);
        }
        let mut out = vec![0.0; n];
        for j in (0..n - 1).rev() {
            let h = node(j + 1, n) - node(j, n);
            out[j] = out[j + 1] + h * mean_power(big_f[j], big_f[j + 1], q);
        }
        out
    }

    /// `T(u)` at every node; `u` must be nonnegative and nonincreasing.
    pub fn apply_t(&self, u: &GridPair) -> Result<GridPair, RadialError> {
        self.check_input(u)?;
        let mut f = [Vec::with_capacity(self.nodes), Vec::with_capacity(self.nodes)];
        for (&a, &b) in u.u1.values().iter().zip(u.u2.values()) {
            for i in 0..2 {
                f[i].push(self.nonlinearities[i].eval(a, b)?);
            }
        }
        Ok(GridPair::new(
            GridFunction::new(self.apply_component(0, &f[0]))?,
            GridFunction::new(self.apply_component(1, &f[1]))?,
        )?)
    }

    pub fn residual(&self, u: &GridPair) -> Result<f64, RadialError> {
        Ok(self.apply_t(u)?.distance(u))
    }

    /// `max |T_N(u) - T_{N'}(u)|` over the coarse nodes, where `N'` keeps
    /// every other node. Needs an odd node count.
    pub fn grid_error(&self, u: &GridPair) -> Result<f64, RadialError> {
        let fine = self.apply_t(u)?;
        if self.nodes % 2 == 0 || self.nodes < 3 {
            return Err(GridError::TooFewNodes(self.nodes).into());
        }
        let coarse_n = (self.nodes + 1) / 2;
        let coarse = RadialProblem::new(self.params, self.nonlinearities.clone(), coarse_n)?;
        let thin = |g: &GridFunction| GridFunction::new(g.values().iter().step_by(2).copied().collect());
        let cu = GridPair::new(thin(&u.u1)?, thin(&u.u2)?)?;
        let ct = coarse.apply_t(&cu)?;
        let mut err = 0.0_f64;
        for i in 0..2 {
            for (k, v) in ct.component(i).values().iter().enumerate() {
                err = err.max((v - fine.component(i).values()[2 * k]).abs());
            }
        }
        Ok(err)
    }

    /// Corner evaluations of the four inequalities of `regime` together with
    /// the ordering of `alpha`, `beta` that regime needs.
    pub fn check_conditions(&self, alpha: [f64; 2], beta: [f64; 2], regime: Regime) -> Result<Certificate, RadialError> {
        let c = self.params.cone_constants();
        let f = |i: usize, x: f64, y: f64| self.nonlinearities[i].eval(x, y);
        let lower_rhs = |i: usize| beta[i].powf(self.params.p[i] - 1.0) / self.params.lower_factor(i);
        let upper_rhs = |i: usize| alpha[i].powf(self.params.p[i] - 1.0);

        // Arguments of f_i at the phi-floor face and at the norm-ceiling face.
        // Component j enters through its own section: for a compressive j the
        // floor face sees u_j >= beta_j and the ceiling sees ||u_j|| <= alpha_j;
        // an expansive j gives u_j >= c_j alpha_j and ||u_j|| <= beta_j / c_j.
        let floor_arg = |j: usize| match regime.0[j] {
            Behaviour::Compressive => beta[j],
            Behaviour::Expansive => c[j] * alpha[j],
        };
        let ceiling_arg = |j: usize| match regime.0[j] {
            Behaviour::Compressive => alpha[j],
            Behaviour::Expansive => beta[j] / c[j],
        };
        let mut records = Vec::with_capacity(4);
        for i in 0..2 {
            let j = 1 - i;
            let mut lo = [0.0; 2];
            lo[i] = beta[i];
            lo[j] = floor_arg(j);
            let mut hi = [0.0; 2];
            hi[i] = alpha[i];
            hi[j] = ceiling_arg(j);
            let k = i + 1;
            records.push(InequalityRecord::greater(
                format!("f{k}({}, {}) > beta{k}^(p{k}-1) / ((b-a) a^(n-1) (1-b)^(p{k}-1))", lo[0], lo[1]),
                f(i, lo[0], lo[1])?,
                lower_rhs(i),
            ));
            records.push(InequalityRecord::less(
                format!("f{k}({}, {}) < alpha{k}^(p{k}-1)", hi[0], hi[1]),
                f(i, hi[0], hi[1])?,
                upper_rhs(i),
            ));
        }

        let mut structural = Vec::new();
        for i in 0..2 {
            let k = i + 1;
            structural.push(match regime.0[i] {
                Behaviour::Compressive => StructuralCheck::new(
                    format!("beta{k}/c{k} < alpha{k}"),
                    beta[i] / c[i] < alpha[i],
                    format!("{} vs {}", beta[i] / c[i], alpha[i]),
                ),
                Behaviour::Expansive => StructuralCheck::new(
                    format!("alpha{k} < beta{k}"),
                    alpha[i] < beta[i],
                    format!("{} vs {}", alpha[i], beta[i]),
                ),
            });
        }
        let nonempty = PhiSection::for_regime(alpha, beta, self.params.window, regime);
        structural.push(StructuralCheck::new(
            "section nonempty (constant witness)",
            nonempty.is_ok(),
            match nonempty {
                Ok(_) => "constant function between floor and ceiling".to_string(),
                Err(e) => e.to_string(),
            },
        ));

        let level = LevelCertificate::new(alpha, beta, regime, records, structural);
        let meta = GridMeta {
            nodes: Some(self.nodes),
            sampled_extrema: false,
            strictness_rule: GridMeta::strictness_rule(),
            ..GridMeta::default()
        };
        let mut constants = Vec::new();
        for i in 0..2 {
            constants.push((format!("c{}", i + 1), c[i]));
            constants.push((format!("D{}", i + 1), self.params.lower_factor(i)));
        }
        Ok(Certificate::new("plaplacian", vec![level], Vec::new(), meta, constants))
    }

    /// Picard iteration `u <- T(u)` on the phi-section.
    pub fn solve_radial(&self, section: &PhiSection, init: &GridPair, opts: &RadialSolveOptions) -> Result<SolutionRecord, RadialSolveError> {
        if !(opts.tol > 0.0) {
            return Err(RadialSolveError::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
        }
        if section.window() != self.params.window {
            return Err(RadialSolveError::InvalidInput("section window differs from the problem window".into()));
        }
        self.check_input(init)?;
        let window = section.window();
        let measure = |u: &GridPair| ([phi_min(&u.u1, window), phi_min(&u.u2, window)], u.norms());
        let (phi0, norms0) = measure(init);
        if !section.contains_closed(phi0, norms0) {
            return Err(RadialSolveError::InvalidInput(format!(
                "initial guess outside the section (phi = {phi0:?}, norms = {norms0:?})"
            )));
        }
        let mut u = init.clone();
        let mut step = f64::INFINITY;
        for iteration in 1..=opts.max_iter {
            let next = self.apply_t(&u)?;
            let (phi, norms) = measure(&next);
            for i in 0..2 {
                let (_, ceiling) = section.measured(i, phi[i], norms[i]);
                let bound = 1.1 * section.outer()[i];
                if ceiling > bound {
                    return Err(RadialSolveError::SectionEscape { component: i + 1, value: ceiling, bound, iteration });
                }
            }
            step = next.distance(&u);
            u = next;
            if step < opts.tol {
                let residual = self.residual(&u)?;
                let inside = section.strict_membership(phi, norms);
                return Ok(SolutionRecord { u, residual, norms, phi: Some(phi), inside, method: Method::Picard, iterations: iteration });
            }
        }
        let residual = self.residual(&u)?;
        Err(RadialSolveError::NoConvergence { iterations: opts.max_iter, step, residual })
    }
}

/// Mean of `x^q` over a cell on which `x` runs linearly from `a` to `b`.
fn mean_power(a: f64, b: f64, q: f64) -> f64 {
    let scale = a.max(b);
    if scale <= 0.0 {
        return 0.0;
    }
    if (b - a).abs() <= 1e-6 * scale {
        return (0.5 * (a + b)).powf(q);
    }
    (b.powf(q + 1.0) - a.powf(q + 1.0)) / ((q + 1.0) * (b - a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RadialSolveOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnackReport {
    pub pass: bool,
    pub monotone: bool,
    /// Smallest of `(v_k - v_{k+1}) / ||v||` and `(v_k - bound_k) / ||v||`;
    /// negative where a check is violated.
    pub worst_margin: f64,
    pub worst_node: usize,
}

/// Checks `v` nonincreasing and `v(r) >= ((p-n)/(p-1))(1-r) r^{n/(p-1)} ||v||`
/// at every node, both up to `tol * ||v||`.
pub fn harnack_check(v: &GridFunction, p: f64, n: u32, tol: f64) -> HarnackReport {
    let values = v.values();
    let len = values.len();
    let norm = v.sup_norm();
    if norm == 0.0 {
        return HarnackReport { pass: true, monotone: true, worst_margin: 0.0, worst_node: 0 };
    }
    let mut worst = (f64::INFINITY, 0);
    let mut monotone = true;
    let mut bound_ok = true;
    for k in 0..len {
        let bound = harnack_profile(node(k, len), p, n) * norm;
        let margin = (values[k] - bound) / norm;
        if margin < -tol {
            bound_ok = false;
        }
        if margin < worst.0 {
            worst = (margin, k);
        }
        if k + 1 < len {
            let drop = (values[k] - values[k + 1]) / norm;
            if drop < -tol {
                monotone = false;
            }
            if drop < worst.0 {
                worst = (drop, k);
            }
        }
    }
    HarnackReport { pass: monotone && bound_ok, monotone, worst_margin: worst.0, worst_node: worst.1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxopt::MonotoneTag;

    fn window() -> Window {
        Window::new(0.25, 0.75).unwrap()
    }

    fn constant_problem(c: f64, nodes: usize) -> RadialProblem {
        let params = PParams::new([3.0, 3.0], 2, window()).unwrap();
        RadialProblem::new(params, [Nonlinearity::constant(c), Nonlinearity::constant(c)], nodes).unwrap()
    }

    #[test]
    fn phi_p_values() {
        assert_eq!(phi_p(-1.5, 2.0), -1.5);
        assert_eq!(phi_p(2.0, 4.0), 8.0);
        assert_eq!(phi_p_inv(9.0, 3.0), 3.0);
        assert_eq!(phi_p_inv(-8.0, 4.0), -2.0);
        assert_eq!(phi_p(0.0, 1.5), 0.0);
    }

    #[test]
    fn cone_constant_values() {
        assert!((cone_constant(3.0, 2, 0.25, 0.75).unwrap() - 1.0 / 32.0).abs() < 1e-15);
        let expected = 2.0 / 3.0 * 0.25 * 0.25_f64.powf(2.0 / 3.0);
        assert!((cone_constant(4.0, 2, 0.25, 0.75).unwrap() - expected).abs() < 1e-15);
        assert!((cone_constant(4.0, 2, 0.25, 0.75).unwrap() - 0.06615).abs() < 1e-5);
        assert!(cone_constant(2.0, 2, 0.25, 0.75).is_err());
        assert!(cone_constant(3.0, 3, 0.25, 0.75).is_err());
        let mut last = f64::INFINITY;
        for b in [0.5, 0.7, 0.9, 0.99, 0.999] {
            let c = cone_constant(3.0, 2, 0.25, b).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    #[test]
    fn unit_source_closed_form() {
        let p = constant_problem(1.0, 513);
        let out = p.apply_t(&GridPair::zeros(513).unwrap()).unwrap();
        for (k, v) in out.u1.values().iter().enumerate() {
            let r = node(k, 513);
            let exact = 2.0_f64.sqrt() / 3.0 * (1.0 - r.powf(1.5));
            assert!((v - exact).abs() < 1e-12, "r = {r}: {v} vs {exact}");
        }
        assert_eq!(out.u1.values()[512], 0.0);
    }

    #[test]
    fn zero_source_gives_zero() {
        let p = constant_problem(0.0, 33);
        let out = p.apply_t(&GridPair::constant(33, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(out.norms(), [0.0, 0.0]);
    }

    #[test]
    fn rejects_non_cone_input() {
        let p = constant_problem(1.0, 33);
        let rising = GridPair::new(GridFunction::from_fn(33, |r| r).unwrap(), GridFunction::zeros(33).unwrap()).unwrap();
        assert!(matches!(p.apply_t(&rising), Err(RadialError::NotInCone { component: 1, .. })));
    }

    #[test]
    fn requires_monotone_tags() {
        let params = PParams::new([3.0, 3.0], 2, window()).unwrap();
        let f = Nonlinearity::native(|u, _| u, MonotoneTag::UNKNOWN);
        let err = RadialProblem::new(params, [f, Nonlinearity::constant(1.0)], 33).unwrap_err();
        assert_eq!(err, RadialError::NotMonotone(1));
        let liar = Nonlinearity::native(|u, _| (u - 50.0).abs(), MonotoneTag::BOTH);
        assert!(matches!(
            RadialProblem::new(params, [Nonlinearity::constant(1.0), liar], 33),
            Err(RadialError::Monotonicity(_))
        ));
    }

    #[test]
    fn constant_cc_certificate() {
        let p = constant_problem(0.5, 65);
        let cert = p.check_conditions([1.0, 1.0], [0.01, 0.01], Regime::CC).unwrap();
        assert!(cert.pass, "{:?}", cert.failures());
        let ineq: Vec<_> = cert.inequalities().collect();
        assert!((ineq[0].rhs - 128e-4).abs() < 1e-15);
        assert_eq!(ineq[1].rhs, 1.0);
        assert_eq!(cert.expected_index, vec![1]);
    }

    #[test]
    fn constant_above_ceiling_fails_upper() {
        let p = constant_problem(1.5, 65);
        let cert = p.check_conditions([1.0, 1.0], [0.01, 0.01], Regime::CC).unwrap();
        assert!(!cert.pass);
        let ineq: Vec<_> = cert.inequalities().collect();
        assert!(ineq[0].pass && !ineq[1].pass);
    }

    #[test]
    fn cc_ordering_is_structural() {
        let p = constant_problem(0.5, 65);
        let cert = p.check_conditions([0.5, 1.0], [0.02, 0.01], Regime::CC).unwrap();
        // 0.02 * 32 = 0.64 > 0.5
        assert!(!cert.levels[0].structural[0].pass);
        assert!(cert.levels[0].structural[1].pass);
        assert!(!cert.pass);
    }

    #[test]
    fn ce_corner_arguments() {
        let params = PParams::new([3.0, 3.0], 2, window()).unwrap();
        let f = Nonlinearity::native(|u, v| u + v, MonotoneTag::BOTH);
        let p = RadialProblem::new(params, [f.clone(), f], 33).unwrap();
        let cert = p.check_conditions([1.0, 0.5], [0.01, 2.0], Regime::CE).unwrap();
        let ineq: Vec<_> = cert.inequalities().collect();
        let c2 = 1.0 / 32.0;
        assert_eq!(ineq[0].lhs, 0.01 + c2 * 0.5);
        assert_eq!(ineq[1].lhs, 1.0 + 2.0 / c2);
        assert_eq!(ineq[2].lhs, 0.01 + 2.0);
        assert_eq!(ineq[3].lhs, 1.0 + 0.5);
        assert_eq!(cert.expected_index, vec![-1]);
    }

    #[test]
    fn harnack_examples() {
        assert!(harnack_check(&GridFunction::constant(65, 1.0).unwrap(), 3.0, 2, 1e-12).pass);
        let rising = harnack_check(&GridFunction::from_fn(65, |r| r).unwrap(), 3.0, 2, 1e-12);
        assert!(!rising.pass && !rising.monotone);
        // decreasing, but far below the profile near r = 1/2
        let dip = GridFunction::from_fn(65, |r| if r < 0.1 { 1.0 } else { 1e-3 * (1.0 - r) }).unwrap();
        let report = harnack_check(&dip, 3.0, 2, 1e-12);
        assert!(report.monotone && !report.pass);
    }

    #[test]
    fn constant_source_solves_in_two_steps() {
        let p = constant_problem(0.5, 513);
        let section = PhiSection::compressive([0.01, 0.01], [1.0, 1.0], window()).unwrap();
        let init = GridPair::constant(513, 0.5, 0.5).unwrap();
        let rec = p.solve_radial(&section, &init, &RadialSolveOptions::default()).unwrap();
        assert!(rec.iterations <= 2);
        assert!(rec.inside_region());
        assert!((rec.norms[0] - 1.0 / 3.0).abs() < 1e-12);
        let phi = rec.phi.unwrap();
        assert!((phi[0] - (1.0 - 0.75_f64.powf(1.5)) / 3.0).abs() < 1e-12);
        assert!(harnack_check(&rec.u.u1, 3.0, 2, 1e-12).pass);
    }

    #[test]
    fn init_outside_section_rejected() {
        let p = constant_problem(0.5, 33);
        let section = PhiSection::compressive([0.01, 0.01], [1.0, 1.0], window()).unwrap();
        let init = GridPair::constant(33, 2.0, 0.5).unwrap();
        assert!(matches!(
            p.solve_radial(&section, &init, &RadialSolveOptions::default()),
            Err(RadialSolveError::InvalidInput(_))
        ));
    }

    #[test]
    fn bounded_sqrt_source_localizes() {
        let params = PParams::new([3.0, 3.0], 2, window()).unwrap();
        let f1 = Nonlinearity::native(|u, _| u.sqrt().min(10.0) + 0.01, MonotoneTag::BOTH);
        let f2 = Nonlinearity::native(|_, v| v.sqrt().min(10.0) + 0.01, MonotoneTag::BOTH);
        let p = RadialProblem::new(params, [f1, f2], 257).unwrap();
        let (alpha, beta) = ([5.0, 5.0], [0.01, 0.01]);
        let cert = p.check_conditions(alpha, beta, Regime::CC).unwrap();
        assert!(cert.pass, "{:?}", cert.failures());
        let section = PhiSection::compressive(beta, alpha, window()).unwrap();
        let init = GridPair::constant(257, 1.0, 1.0).unwrap();
        let rec = p.solve_radial(&section, &init, &RadialSolveOptions::default()).unwrap();
        assert!(rec.inside_region(), "{rec:?}");
        assert!(rec.residual < 1e-10);
    }

    #[test]
    fn grid_error_is_small_for_smooth_sources() {
        let p = constant_problem(1.0, 129);
        let e = p.grid_error(&GridPair::zeros(129).unwrap()).unwrap();
        assert!(e < 1e-12, "{e}");
    }
}
