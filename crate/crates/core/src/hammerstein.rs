//! Two-component Hammerstein systems
//!
//! ```text
//! u_i(t) = ∫_0^1 k_i(t, s) g_i(s) f_i(u1(s), u2(s)) ds,   i = 1, 2,
//! ```
//!
//! on the product of cones `{v >= 0, min_[a,b] v >= c_i ||v||_inf}`.
//!
//! Kernel integrals use composite Simpson with the `s`-range split at `s = t`,
//! where Green's-function kernels have a derivative kink.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::boxopt::{box_max, box_min, BoxOptError, Extremum, Rect};
use crate::certificate::{Certificate, GridMeta, InequalityRecord, LevelCertificate, StructuralCheck};
use crate::cones::{retract_grid, Behaviour, ConeBox, ConeError, Regime, Window};
use crate::expr::{EvalError, Expr};
use crate::grid::{node, GridError, GridFunction, GridPair};
use crate::newton::{deflated_newton, NewtonOutcome, NewtonSettings, NewtonSystem};
use crate::nonlinearity::Nonlinearity;
use crate::quad::{simpson, split_weights};
use crate::solution::{Method, SolutionRecord};

pub const DEFAULT_NODES: usize = 257;
pub const DEFAULT_QUAD_N: usize = 1025;
/// Outward drift beyond `R_i` tolerated by Picard before giving up.
pub const ESCAPE_FACTOR: f64 = 1.1;
const H3_GRID: usize = 129;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HammersteinError {
    #[error("quad_n must be odd and at least 9, got {0}")]
    BadQuadrature(usize),
    #[error("cone constant must lie in (0, 1], got {0}")]
    BadConeConstant(f64),
    #[error("kernels use different windows: {0:?} vs {1:?}")]
    WindowMismatch(Window, Window),
    #[error("tabulated data needs at least 2 points per axis and a square layout")]
    BadTable,
    #[error("kernel bound hypothesis violated: {0}")]
    H3Violation(H3Report),
    #[error("non-finite integrand {value} at t = {t}, s = {s}")]
    NonFiniteIntegrand { t: f64, s: f64, value: f64 },
    #[error("kernel evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid parameter level: {0}")]
    BadLevel(String),
    #[error(transparent)]
    BoxOpt(#[from] BoxOptError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("grid has {got} nodes, problem uses {expected}")]
    GridSize { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no convergence after {iterations} iterations (last step {step:e}, residual {residual:e})")]
    NoConvergence { iterations: usize, step: f64, residual: f64 },
    #[error("component {component} left the region at iteration {iteration}: norm {norm} > bound {bound}")]
    BoxEscape { component: usize, norm: f64, bound: f64, iteration: usize },
    #[error("no new solution found from {seeds} seeds")]
    NotFound { seeds: usize },
    #[error(transparent)]
    Problem(#[from] HammersteinError),
}

impl From<EvalError> for SolveError {
    fn from(e: EvalError) -> Self {
        SolveError::Problem(HammersteinError::Eval(e))
    }
}

impl From<GridError> for SolveError {
    fn from(e: GridError) -> Self {
        SolveError::Problem(HammersteinError::Grid(e))
    }
}

impl From<ConeError> for SolveError {
    fn from(e: ConeError) -> Self {
        SolveError::Problem(HammersteinError::Cone(e))
    }
}

/// Values on a uniform grid of `[0, 1]`, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1 {
    values: Vec<f64>,
}

impl Table1 {
    pub fn new(values: Vec<f64>) -> Result<Self, HammersteinError> {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(HammersteinError::BadTable);
        }
        Ok(Self { values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        GridFunction::new(self.values.clone()).expect("validated").interpolate(x)
    }
}

/// Values on a uniform `m x m` grid of `[0, 1]^2` (row = `t`, column = `s`),
/// bilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2 {
    m: usize,
    values: Vec<f64>,
}

impl Table2 {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, HammersteinError> {
        let m = rows.len();
        if m < 2 || rows.iter().any(|r| r.len() != m) {
            return Err(HammersteinError::BadTable);
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HammersteinError::BadTable);
        }
        Ok(Self { m, values })
    }

    pub fn eval(&self, t: f64, s: f64) -> f64 {
        let m = self.m;
        let locate = |x: f64| {
            let y = x.clamp(0.0, 1.0) * (m - 1) as f64;
            let k = (y.floor() as usize).min(m - 2);
            (k, y - k as f64)
        };
        let (i, ft) = locate(t);
        let (j, fs) = locate(s);
        let v = |a: usize, b: usize| self.values[a * m + b];
        let top = v(i, j) * (1.0 - fs) + v(i, j + 1) * fs;
        let bot = v(i + 1, j) * (1.0 - fs) + v(i + 1, j + 1) * fs;
        top * (1.0 - ft) + bot * ft
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `s(1 - t)` for `s <= t`, `t(1 - s)` otherwise.
    GreenDirichlet,
    Tabulated(Table2),
    /// Expression in `t`, `s`.
    Expression(Expr),
}

/// A function of `s` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    One,
    Expression(Expr),
    Tabulated(Table1),
}

impl ScalarFn {
    pub fn parse(src: &str) -> Result<Self, crate::expr::ParseError> {
        Ok(ScalarFn::Expression(Expr::parse_with_vars(src, &["s"])?))
    }

    pub fn eval(&self, s: f64) -> Result<f64, EvalError> {
        match self {
            ScalarFn::One => Ok(1.0),
            ScalarFn::Expression(e) => e.evaluate(&[s]),
            ScalarFn::Tabulated(t) => Ok(t.eval(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// `g_i`
    pub weight: ScalarFn,
    /// `Phi_i`
    pub bound: ScalarFn,
    pub window: Window,
    /// `c_i`
    pub cone_constant: f64,
}

impl KernelSpec {
    pub fn new(
        kind: KernelKind,
        weight: ScalarFn,
        bound: ScalarFn,
        window: Window,
        cone_constant: f64,
    ) -> Result<Self, HammersteinError> {
        if !(cone_constant > 0.0 && cone_constant <= 1.0) {
            return Err(HammersteinError::BadConeConstant(cone_constant));
        }
        Ok(Self { kind, weight, bound, window, cone_constant })
    }

    /// The Dirichlet Green's function with `g = 1`, `Phi(s) = s(1 - s)`,
    /// window `[1/4, 3/4]` and `c = 1/4`.
    pub fn green_dirichlet_standard() -> Self {
        Self::new(
            KernelKind::GreenDirichlet,
            ScalarFn::One,
            ScalarFn::parse("s*(1-s)").expect("valid"),
            Window::new(0.25, 0.75).expect("valid"),
            0.25,
        )
        .expect("valid")
    }

    pub fn kernel(&self, t: f64, s: f64) -> Result<f64, EvalError> {
        match &self.kind {
            KernelKind::GreenDirichlet => Ok(if s <= t { s * (1.0 - t) } else { t * (1.0 - s) }),
            KernelKind::Tabulated(table) => Ok(table.eval(t, s)),
            KernelKind::Expression(e) => e.evaluate(&[t, s]),
        }
    }

    fn integrand(&self, t: f64, s: f64) -> Result<f64, HammersteinError> {
        let value = self.kernel(t, s)? * self.weight.eval(s)?;
        if !value.is_finite() {
            return Err(HammersteinError::NonFiniteIntegrand { t, s, value });
        }
        Ok(value)
    }

    /// `∫_lo^hi k(t, s) g(s) ds`, split at `s = t` when `t` is inside.
    fn kernel_integral(&self, t: f64, lo: f64, hi: f64, points: usize) -> Result<f64, HammersteinError> {
        let f = |s| self.integrand(t, s);
        if lo < t && t < hi {
            Ok(simpson(f, lo, t, points)? + simpson(f, t, hi, points)?)
        } else {
            simpson(f, lo, hi, points)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H3Issue {
    pub check: &'static str,
    pub t: f64,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of the sampled kernel hypothesis checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct H3Report {
    pub samples: usize,
    /// `∫_a^b Phi g ds`
    pub bound_weight_integral: f64,
    /// First violations found (capped).
    pub issues: Vec<H3Issue>,
    pub issue_count: usize,
}

impl std::fmt::Display for H3Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} sampled violation(s)", self.issue_count)?;
        if let Some(first) = self.issues.first() {
            write!(
                f,
                ", first: {} at t = {}, s = {} ({} vs {})",
                first.check, first.t, first.s, first.lhs, first.rhs
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelConstants {
    /// `inf_{t in [a,b]} ∫_a^b k(t,s) g(s) ds`
    pub a: f64,
    /// `sup_{t in [0,1]} ∫_0^1 k(t,s) g(s) ds`
    pub b: f64,
    pub quad_n: usize,
    pub h3: H3Report,
}

fn h3_report(spec: &KernelSpec, quad_n: usize) -> Result<H3Report, HammersteinError> {
    const MAX_ISSUES: usize = 20;
    let mut issues = Vec::new();
    let mut issue_count = 0;
    let mut push = |check, t, s, lhs, rhs| {
        issue_count += 1;
        if issues.len() < MAX_ISSUES {
            issues.push(H3Issue { check, t, s, lhs, rhs });
        }
    };
    let (a, b) = (spec.window.a, spec.window.b);
    let c = spec.cone_constant;
    let mut samples = 0;
    for j in 0..H3_GRID {
        let s = node(j, H3_GRID);
        let g = spec.weight.eval(s)?;
        let phi = spec.bound.eval(s)?;
        if g < 0.0 {
            push("g >= 0", 0.0, s, g, 0.0);
        }
        if phi < 0.0 {
            push("Phi >= 0", 0.0, s, phi, 0.0);
        }
        let slack = 1e-12 * (1.0 + phi.abs());
        for i in 0..H3_GRID {
            let t = node(i, H3_GRID);
            let k = spec.kernel(t, s)?;
            samples += 1;
            if !k.is_finite() {
                return Err(HammersteinError::NonFiniteIntegrand { t, s, value: k });
            }
            if k < 0.0 {
                push("k >= 0", t, s, k, 0.0);
            }
            if k > phi + slack {
                push("k(t,s) <= Phi(s)", t, s, k, phi);
            }
            let tw = a + (b - a) * node(i, H3_GRID);
            let kw = spec.kernel(tw, s)?;
            if c * phi > kw + slack {
                push("c Phi(s) <= k(t,s) on [a,b]", tw, s, c * phi, kw);
            }
        }
    }
    let bound_weight_integral = simpson(
        |s| -> Result<f64, HammersteinError> { Ok(spec.bound.eval(s)? * spec.weight.eval(s)?) },
        a,
        b,
        quad_n,
    )?;
    if !(bound_weight_integral > 0.0) {
        push("∫_a^b Phi g > 0", a, b, bound_weight_integral, 0.0);
    }
    Ok(H3Report { samples, bound_weight_integral, issues, issue_count })
}

/// Kernel constants `A` and `B` plus the sampled kernel hypothesis report.
///
/// The inf over `t in [a, b]` and the sup over `t in [0, 1]` are taken over
/// `quad_n` uniform samples; each integral uses `quad_n` Simpson points on
/// either side of `s = t`.
pub fn kernel_constants(spec: &KernelSpec, quad_n: usize) -> Result<KernelConstants, HammersteinError> {
    if quad_n < 9 || quad_n % 2 == 0 {
        return Err(HammersteinError::BadQuadrature(quad_n));
    }
    let h3 = h3_report(spec, quad_n)?;
    if h3.issue_count > 0 {
        return Err(HammersteinError::H3Violation(h3));
    }
    let (wa, wb) = (spec.window.a, spec.window.b);
    let mut a = f64::INFINITY;
    for i in 0..quad_n {
        let t = wa + (wb - wa) * node(i, quad_n);
        a = a.min(spec.kernel_integral(t, wa, wb, quad_n)?);
    }
    let mut b = f64::NEG_INFINITY;
    for i in 0..quad_n {
        let t = node(i, quad_n);
        b = b.max(spec.kernel_integral(t, 0.0, 1.0, quad_n)?);
    }
    Ok(KernelConstants { a, b, quad_n, h3 })
}

/// One parameter level `(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelParams {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
}

impl LevelParams {
    pub fn new(alpha: [f64; 2], beta: [f64; 2]) -> Result<Self, HammersteinError> {
        for i in 0..2 {
            let (a, b) = (alpha[i], beta[i]);
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(HammersteinError::BadLevel(format!(
                    "alpha_{0} and beta_{0} must be positive and finite",
                    i + 1
                )));
            }
            if a == b {
                return Err(HammersteinError::BadLevel(format!("alpha_{0} = beta_{0} = {a}", i + 1)));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn r(&self) -> [f64; 2] {
        [self.alpha[0].min(self.beta[0]), self.alpha[1].min(self.beta[1])]
    }

    pub fn big_r(&self) -> [f64; 2] {
        [self.alpha[0].max(self.beta[0]), self.alpha[1].max(self.beta[1])]
    }

    pub fn cone_box(&self) -> ConeBox {
        ConeBox::from_levels(self.alpha, self.beta).expect("validated level")
    }

    pub fn regime(&self) -> Regime {
        Regime::from_levels(self.alpha, self.beta)
    }
}

/// `m_i` (min over the lower box) and `M_i` (max over the upper box).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxConstants {
    pub m: [Extremum; 2],
    pub big_m: [Extremum; 2],
}

impl BoxConstants {
    pub fn sampled(&self) -> bool {
        self.m.iter().chain(&self.big_m).any(|e| e.sampled)
    }
}

#[derive(Debug, Clone)]
pub struct HammersteinProblem {
    kernels: [KernelSpec; 2],
    nonlinearities: [Nonlinearity; 2],
    constants: [KernelConstants; 2],
    nodes: usize,
    /// Row-major `nodes x nodes` quadrature matrices including `k` and `g`.
    weights: [Vec<f64>; 2],
}

impl HammersteinProblem {
    pub fn new(
        kernels: [KernelSpec; 2],
        nonlinearities: [Nonlinearity; 2],
        nodes: usize,
        quad_n: usize,
    ) -> Result<Self, HammersteinError> {
        if nodes < 2 {
            return Err(GridError::TooFewNodes(nodes).into());
        }
        if kernels[0].window != kernels[1].window {
            return Err(HammersteinError::WindowMismatch(kernels[0].window, kernels[1].window));
        }
        let constants = [kernel_constants(&kernels[0], quad_n)?, kernel_constants(&kernels[1], quad_n)?];
        let weights = [weight_matrix(&kernels[0], nodes)?, weight_matrix(&kernels[1], nodes)?];
        Ok(Self { kernels, nonlinearities, constants, nodes, weights })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn kernels(&self) -> &[KernelSpec; 2] {
        &self.kernels
    }

    pub fn nonlinearities(&self) -> &[Nonlinearity; 2] {
        &self.nonlinearities
    }

    pub fn constants(&self) -> &[KernelConstants; 2] {
        &self.constants
    }

    pub fn window(&self) -> Window {
        self.kernels[0].window
    }

    pub fn cone_constants(&self) -> [f64; 2] {
        [self.kernels[0].cone_constant, self.kernels[1].cone_constant]
    }

    /// `m_1` over `[c1 beta1, beta1] x [c2 r2, R2]`,
    /// `m_2` over `[c1 r1, R1] x [c2 beta2, beta2]`,
    /// `M_1` over `[0, alpha1] x [0, R2]`, `M_2` over `[0, R1] x [0, alpha2]`.
    pub fn compute_m_m(&self, level: &LevelParams, grid_n: usize) -> Result<BoxConstants, HammersteinError> {
        let [c1, c2] = self.cone_constants();
        let (alpha, beta, r, big_r) = (level.alpha, level.beta, level.r(), level.big_r());
        let lower = [
            Rect::new([c1 * beta[0], c2 * r[1]], [beta[0], big_r[1]])?,
            Rect::new([c1 * r[0], c2 * beta[1]], [big_r[0], beta[1]])?,
        ];
        let upper = [
            Rect::new([0.0, 0.0], [alpha[0], big_r[1]])?,
            Rect::new([0.0, 0.0], [big_r[0], alpha[1]])?,
        ];
        let mut m = [None, None];
        let mut big_m = [None, None];
        for i in 0..2 {
            let f = &self.nonlinearities[i];
            m[i] = Some(box_min(|u, v| f.eval(u, v), lower[i], f.tag(), grid_n)?);
            big_m[i] = Some(box_max(|u, v| f.eval(u, v), upper[i], f.tag(), grid_n)?);
        }
        Ok(BoxConstants { m: m.map(Option::unwrap), big_m: big_m.map(Option::unwrap) })
    }

    fn level_certificate(&self, level: &LevelParams, grid_n: usize) -> Result<(LevelCertificate, bool), HammersteinError> {
        let mm = self.compute_m_m(level, grid_n)?;
        let mut records = Vec::with_capacity(4);
        for i in 0..2 {
            let KernelConstants { a, b, .. } = self.constants[i];
            let k = i + 1;
            records.push(InequalityRecord::greater(format!("A{k}*m{k} > beta{k}"), a * mm.m[i].value, level.beta[i]));
            records.push(InequalityRecord::less(format!("B{k}*M{k} < alpha{k}"), b * mm.big_m[i].value, level.alpha[i]));
        }
        Ok((LevelCertificate::new(level.alpha, level.beta, level.regime(), records, Vec::new()), mm.sampled()))
    }

    fn grid_meta(&self, grid_n: usize, sampled: bool) -> GridMeta {
        GridMeta {
            quad_n: Some(self.constants[0].quad_n),
            grid_n: Some(grid_n),
            t_samples: Some(self.constants[0].quad_n),
            nodes: Some(self.nodes),
            sampled_extrema: sampled,
            strictness_rule: GridMeta::strictness_rule(),
        }
    }

    fn constant_list(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (i, k) in self.constants.iter().enumerate() {
            out.push((format!("A{}", i + 1), k.a));
            out.push((format!("B{}", i + 1), k.b));
            out.push((format!("c{}", i + 1), self.kernels[i].cone_constant));
        }
        out
    }

    /// Four inequalities `A_i m_i > beta_i`, `B_i M_i < alpha_i`.
    pub fn check_existence(&self, level: &LevelParams, grid_n: usize) -> Result<Certificate, HammersteinError> {
        let level = LevelParams::new(level.alpha, level.beta)?;
        let (cert, sampled) = self.level_certificate(&level, grid_n)?;
        Ok(Certificate::new("hammerstein", vec![cert], Vec::new(), self.grid_meta(grid_n, sampled), self.constant_list()))
    }

    /// Twelve inequalities over three levels plus the nesting and
    /// disjointness conditions that make the three solutions distinct.
    pub fn check_multiplicity(&self, levels: &[LevelParams; 3], grid_n: usize) -> Result<Certificate, HammersteinError> {
        let mut certs = Vec::with_capacity(3);
        let mut sampled = false;
        for level in levels {
            let level = LevelParams::new(level.alpha, level.beta)?;
            let (cert, s) = self.level_certificate(&level, grid_n)?;
            sampled |= s;
            certs.push(cert);
        }
        let outer = &levels[2];
        let (r3, big_r3) = (outer.r(), outer.big_r());
        let mut nested = true;
        let mut detail = Vec::new();
        for (j, level) in levels[..2].iter().enumerate() {
            for i in 0..2 {
                for (name, v) in [("alpha", level.alpha[i]), ("beta", level.beta[i])] {
                    if !(r3[i] <= v && v <= big_r3[i]) {
                        nested = false;
                        detail.push(format!("{name}_{}^{} = {v} outside [{}, {}]", i + 1, j + 1, r3[i], big_r3[i]));
                    }
                }
            }
        }
        let nesting = StructuralCheck::new(
            "nesting: levels 1 and 2 inside level 3",
            nested,
            if nested { "all alpha, beta of levels 1, 2 lie in [r^3, R^3]".to_string() } else { detail.join("; ") },
        );
        let (big_r1, r2) = (levels[0].big_r(), levels[1].r());
        let separating: Vec<usize> = (0..2).filter(|&i| big_r1[i] < r2[i]).collect();
        let disjoint = StructuralCheck::new(
            "disjointness: some R_i^1 < r_i^2",
            !separating.is_empty(),
            match separating.first() {
                Some(&i) => format!("R_{0}^1 = {1} < r_{0}^2 = {2}", i + 1, big_r1[i], r2[i]),
                None => format!("R^1 = {big_r1:?}, r^2 = {r2:?}"),
            },
        );
        Ok(Certificate::new(
            "hammerstein",
            certs,
            vec![nesting, disjoint],
            self.grid_meta(grid_n, sampled),
            self.constant_list(),
        ))
    }

    fn check_grid(&self, u: &GridPair) -> Result<(), HammersteinError> {
        if u.len() != self.nodes {
            return Err(HammersteinError::GridSize { expected: self.nodes, got: u.len() });
        }
        Ok(())
    }

    fn nonlinearity_values(&self, u: &GridPair) -> Result<[Vec<f64>; 2], EvalError> {
        let eval = |f: &Nonlinearity| -> Result<Vec<f64>, EvalError> {
            u.u1.values().iter().zip(u.u2.values()).map(|(&a, &b)| f.eval(a, b)).collect()
        };
        Ok([eval(&self.nonlinearities[0])?, eval(&self.nonlinearities[1])?])
    }

    fn integrate(&self, i: usize, values: &[f64]) -> Vec<f64> {
        let n = self.nodes;
        self.weights[i].chunks_exact(n).map(|row| row.iter().zip(values).map(|(w, v)| w * v).sum()).collect()
    }

    /// `T(u)` at every grid node.
    pub fn apply_t(&self, u: &GridPair) -> Result<GridPair, HammersteinError> {
        self.check_grid(u)?;
        let [f1, f2] = self.nonlinearity_values(u)?;
        Ok(GridPair::new(GridFunction::new(self.integrate(0, &f1))?, GridFunction::new(self.integrate(1, &f2))?)?)
    }

    /// `||u - T(u)||_inf` over both components.
    pub fn residual(&self, u: &GridPair) -> Result<f64, HammersteinError> {
        Ok(self.apply_t(u)?.distance(u))
    }

    fn record(
        &self,
        u: GridPair,
        membership: impl Fn([f64; 2]) -> [bool; 2],
        method: Method,
        iterations: usize,
    ) -> Result<SolutionRecord, HammersteinError> {
        let residual = self.residual(&u)?;
        let norms = u.norms();
        let inside = membership(norms);
        Ok(SolutionRecord { u, residual, norms, phi: None, inside, method, iterations })
    }

    /// Fixed-point iteration `u <- T(u)` inside the annular box.
    ///
    /// A component whose norm drops below `r_i` is retracted back onto the
    /// inner sphere; one that exceeds `1.1 R_i` aborts the run.
    pub fn solve_picard(&self, cone_box: &ConeBox, init: &GridPair, opts: &PicardOptions) -> Result<SolutionRecord, SolveError> {
        if !(opts.tol > 0.0) {
            return Err(SolveError::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
        }
        self.check_grid(init)?;
        if !init.u1.is_nonnegative() || !init.u2.is_nonnegative() {
            return Err(SolveError::InvalidInput("initial guess must be nonnegative".into()));
        }
        if !cone_box.contains_closed(init.norms()) {
            return Err(SolveError::InvalidInput(format!(
                "initial norms {:?} outside the box [{:?}, {:?}]",
                init.norms(),
                cone_box.inner(),
                cone_box.outer()
            )));
        }
        let (inner, outer) = (cone_box.inner(), cone_box.outer());
        let mut u = init.clone();
        let mut step = f64::INFINITY;
        for iteration in 1..=opts.max_iter {
            let next = self.apply_t(&u)?;
            let mut parts = [next.u1, next.u2];
            for i in 0..2 {
                let norm = parts[i].sup_norm();
                if norm > ESCAPE_FACTOR * outer[i] {
                    return Err(SolveError::BoxEscape { component: i + 1, norm, bound: ESCAPE_FACTOR * outer[i], iteration });
                }
                if norm < inner[i] {
                    parts[i] = retract_grid(&parts[i], inner[i], outer[i])?;
                }
            }
            let [u1, u2] = parts;
            let next = GridPair::new(u1, u2)?;
            step = next.distance(&u);
            u = next;
            if step < opts.tol {
                let rec = self.record(u, |norms| cone_box.strict_membership(norms), Method::Picard, iteration)?;
                if rec.residual < opts.tol * (1.0 + rec.norms[0].max(rec.norms[1])) {
                    return Ok(rec);
                }
                // settled on the retracted map, not on T
                return Err(SolveError::NoConvergence { iterations: iteration, step, residual: rec.residual });
            }
        }
        let residual = self.residual(&u)?;
        Err(SolveError::NoConvergence { iterations: opts.max_iter, step, residual })
    }

    /// Multistart damped Newton on `F(u) = u - T(u)`, deflated against
    /// `known` and against any root it finds outside the region.
    ///
    /// Seeds have the profile `4t(1-t)` scaled to norms on a geometric
    /// lattice of the target box, followed by `opts.random_seeds` random
    /// norms drawn from `opts.seed`. Each seed is first relaxed by block
    /// sweeps (a Picard step on compressive components, a Newton solve of
    /// each expansive component with the other held fixed); full Newton is
    /// started whenever a sweep reaches a new lowest residual.
    pub fn solve_deflated_newton(
        &self,
        region: &SearchRegion,
        known: &[SolutionRecord],
        opts: &NewtonOptions,
    ) -> Result<SolutionRecord, SolveError> {
        if !(opts.tol > 0.0) {
            return Err(SolveError::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
        }
        let n = self.nodes;
        let seeds = seed_norms(&region.target, opts.random_seeds, opts.seed);
        let mut deflate: Vec<Vec<f64>> = known.iter().map(|r| r.u.to_stacked()).collect();
        let settings = NewtonSettings { tol: opts.tol, max_iter: opts.max_iter, min_damping: 1e-8 };
        let system = CollocationSystem { problem: self };
        let is_new = |x: &[f64], deflate: &[Vec<f64>]| {
            deflate.iter().all(|k| {
                let d = x.iter().zip(k).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
                d > 1e-6 * crate::grid::sup_norm(k).max(1.0)
            })
        };
        for norms in &seeds {
            let mut u = GridPair::new(
                GridFunction::from_fn(n, |t| norms[0] * 4.0 * t * (1.0 - t))?,
                GridFunction::from_fn(n, |t| norms[1] * 4.0 * t * (1.0 - t))?,
            )?;
            let mut best = f64::INFINITY;
            let mut attempts = 0;
            for sweep in 0..=opts.warm_sweeps {
                if sweep > 0 {
                    u = self.block_sweep(&u, region.regime, &settings)?;
                }
                let res = self.residual(&u)?;
                if !(res < 0.7 * best) {
                    continue;
                }
                best = res;
                attempts += 1;
                if attempts > opts.restarts_per_seed {
                    break;
                }
                let Ok(NewtonOutcome::Converged { x, iterations, .. }) =
                    deflated_newton(&system, &u.to_stacked(), &deflate, &settings)
                else {
                    continue;
                };
                if !is_new(&x, &deflate) {
                    continue;
                }
                let rec = self.record(GridPair::from_stacked(&x)?, |m| region.membership(m), Method::DeflatedNewton, iterations)?;
                if rec.residual < opts.tol && region.admits(rec.norms) {
                    return Ok(rec);
                }
                // a genuine root elsewhere: deflate it from now on
                deflate.push(x);
            }
        }
        Err(SolveError::NotFound { seeds: seeds.len() })
    }

    fn block_sweep(&self, u: &GridPair, regime: Regime, settings: &NewtonSettings) -> Result<GridPair, HammersteinError> {
        let mut current = u.clone();
        for i in 0..2 {
            let updated = match regime.0[i] {
                Behaviour::Compressive => self.apply_t(&current)?.component(i).clone(),
                Behaviour::Expansive => {
                    let block = BlockSystem { problem: self, frozen: &current, component: i };
                    match deflated_newton(&block, current.component(i).values(), &[], settings)? {
                        NewtonOutcome::Converged { x, .. } | NewtonOutcome::Failed { x, .. } => GridFunction::new(x)?,
                    }
                }
            };
            current = if i == 0 { GridPair::new(updated, current.u2)? } else { GridPair::new(current.u1, updated)? };
        }
        Ok(current)
    }

    /// `∂f_i/∂u_l` at every node, by forward differences.
    fn node_partials(&self, u1: &[f64], u2: &[f64]) -> Result<[[Vec<f64>; 2]; 2], EvalError> {
        let n = u1.len();
        let mut partials = [[vec![0.0; n], vec![0.0; n]], [vec![0.0; n], vec![0.0; n]]];
        for j in 0..n {
            let h1 = 1e-7 * u1[j].abs().max(1.0);
            let h2 = 1e-7 * u2[j].abs().max(1.0);
            for (i, f) in self.nonlinearities.iter().enumerate() {
                let base = f.eval(u1[j], u2[j])?;
                partials[i][0][j] = (f.eval(u1[j] + h1, u2[j])? - base) / h1;
                partials[i][1][j] = (f.eval(u1[j], u2[j] + h2)? - base) / h2;
            }
        }
        Ok(partials)
    }

    /// Adds `-W_i diag(d)` into the block of `jac` at (`row`, `col`).
    fn subtract_weighted(&self, jac: &mut DMatrix<f64>, i: usize, d: &[f64], row: usize, col: usize) {
        let n = self.nodes;
        let w = &self.weights[i];
        for k in 0..n {
            let wrow = &w[k * n..(k + 1) * n];
            for j in 0..n {
                jac[(row + k, col + j)] -= wrow[j] * d[j];
            }
        }
    }

    /// Solves every level in turn, then (for three levels) searches the
    /// level-3 box outside the closed level-1 and level-2 boxes.
    pub fn solve_levels(&self, levels: &[LevelParams], settings: &SolveSettings) -> Vec<LevelOutcome> {
        let mut found: Vec<SolutionRecord> = Vec::new();
        let mut outcomes = Vec::new();
        let mut targets: Vec<(String, SearchRegion)> = Vec::new();
        if levels.len() == 3 {
            targets.push(("level 1".into(), SearchRegion::for_level(&levels[0])));
            targets.push(("level 2".into(), SearchRegion::for_level(&levels[1])));
            targets.push((
                "level 3 minus levels 1, 2".into(),
                // Nothing is known about which components attract near a
                // solution in the set difference, so every block is solved
                // by Newton during warm-up.
                SearchRegion {
                    exclude: vec![levels[0].cone_box(), levels[1].cone_box()],
                    ..SearchRegion::new(levels[2].cone_box(), Regime::EE)
                },
            ));
        } else {
            for (j, level) in levels.iter().enumerate() {
                targets.push((format!("level {}", j + 1), SearchRegion::for_level(level)));
            }
        }
        for (label, region) in targets {
            let mut attempts = Vec::new();
            let mut result = None;
            if region.exclude.is_empty() {
                let init = geometric_mid_init(&region.target, self.nodes);
                match init.map_err(SolveError::from).and_then(|u| self.solve_picard(&region.target, &u, &settings.picard)) {
                    Ok(rec) if region.admits(rec.norms) && rec.residual < settings.newton.tol => {
                        attempts.push("picard: converged".to_string());
                        result = Some(Ok(rec));
                    }
                    Ok(rec) => attempts.push(format!("picard: converged outside target (norms {:?})", rec.norms)),
                    Err(e) => attempts.push(format!("picard: {e}")),
                }
            }
            let result = result.unwrap_or_else(|| {
                let r = self.solve_deflated_newton(&region, &found, &settings.newton);
                attempts.push(match &r {
                    Ok(_) => "deflated newton: converged".to_string(),
                    Err(e) => format!("deflated newton: {e}"),
                });
                r
            });
            if let Ok(rec) = &result {
                found.push(rec.clone());
            }
            outcomes.push(LevelOutcome { label, region, attempts, result });
        }
        outcomes
    }
}

fn weight_matrix(spec: &KernelSpec, n: usize) -> Result<Vec<f64>, HammersteinError> {
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        let t = node(k, n);
        let w = split_weights(n, k);
        for (j, wj) in w.iter().enumerate() {
            out.push(wj * spec.integrand(t, node(j, n))?);
        }
    }
    Ok(out)
}

fn geometric_mid_init(b: &ConeBox, n: usize) -> Result<GridPair, GridError> {
    let (r, big_r) = (b.inner(), b.outer());
    GridPair::constant(n, (r[0] * big_r[0]).sqrt(), (r[1] * big_r[1]).sqrt())
}

fn seed_norms(b: &ConeBox, random: usize, seed: u64) -> Vec<[f64; 2]> {
    let (r, big_r) = (b.inner(), b.outer());
    let at = |i: usize, theta: f64| r[i] * (big_r[i] / r[i]).powf(theta);
    const LATTICE: [(f64, f64); 9] = [
        (0.5, 0.5),
        (0.5, 0.1),
        (0.5, 0.9),
        (0.1, 0.5),
        (0.9, 0.5),
        (0.1, 0.1),
        (0.1, 0.9),
        (0.9, 0.1),
        (0.9, 0.9),
    ];
    let mut out: Vec<[f64; 2]> = LATTICE.iter().map(|&(a, b)| [at(0, a), at(1, b)]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let (a, b): (f64, f64) = (rng.random(), rng.random());
        out.push([at(0, a), at(1, b)]);
    }
    out
}

/// Where a solver is allowed to report a solution: strictly inside
/// `target`, and outside every closed box in `exclude`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRegion {
    pub target: ConeBox,
    pub exclude: Vec<ConeBox>,
    /// Which components the solver treats as compressive (attracting under
    /// Picard) and which as expansive.
    pub regime: Regime,
}

impl SearchRegion {
    pub fn new(target: ConeBox, regime: Regime) -> Self {
        Self { target, exclude: Vec::new(), regime }
    }

    pub fn for_level(level: &LevelParams) -> Self {
        Self::new(level.cone_box(), level.regime())
    }

    pub fn membership(&self, norms: [f64; 2]) -> [bool; 2] {
        let excluded = self.exclude.iter().any(|b| b.contains_closed(norms));
        let inside = self.target.strict_membership(norms);
        if excluded {
            [false, false]
        } else {
            inside
        }
    }

    pub fn admits(&self, norms: [f64; 2]) -> bool {
        self.membership(norms).iter().all(|&b| b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Required `||u - T(u)||_inf`.
    pub tol: f64,
    pub max_iter: usize,
    pub random_seeds: usize,
    pub seed: u64,
    /// Full Newton attempts per seed.
    pub restarts_per_seed: usize,
    /// Block sweeps per seed before giving up on it.
    pub warm_sweeps: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 60, random_seeds: 4, seed: 0, restarts_per_seed: 4, warm_sweeps: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveSettings {
    pub picard: PicardOptions,
    pub newton: NewtonOptions,
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub label: String,
    pub region: SearchRegion,
    pub attempts: Vec<String>,
    pub result: Result<SolutionRecord, SolveError>,
}

fn clamp_nonnegative(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

struct CollocationSystem<'a> {
    problem: &'a HammersteinProblem,
}

impl NewtonSystem for CollocationSystem<'_> {
    type Error = HammersteinError;

    fn dim(&self) -> usize {
        2 * self.problem.nodes
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, HammersteinError> {
        let u = GridPair::from_stacked(x)?;
        let tu = self.problem.apply_t(&u)?;
        Ok(x.iter().zip(tu.to_stacked()).map(|(a, b)| a - b).collect())
    }

    /// `I - W_i diag(∂f_i/∂u_l)`
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, HammersteinError> {
        let p = self.problem;
        let n = p.nodes;
        let (u1, u2) = x.split_at(n);
        let partials = p.node_partials(u1, u2)?;
        let mut jac = DMatrix::identity(2 * n, 2 * n);
        for i in 0..2 {
            for l in 0..2 {
                p.subtract_weighted(&mut jac, i, &partials[i][l], i * n, l * n);
            }
        }
        Ok(jac)
    }

    fn project(&self, x: &mut [f64]) {
        clamp_nonnegative(x);
    }
}

/// `u_i = T_i(u)` in the unknown `u_i` alone, the other component frozen.
struct BlockSystem<'a> {
    problem: &'a HammersteinProblem,
    frozen: &'a GridPair,
    component: usize,
}

impl BlockSystem<'_> {
    fn assemble(&self, x: &[f64]) -> Result<GridPair, GridError> {
        let v = GridFunction::new(x.to_vec())?;
        if self.component == 0 {
            GridPair::new(v, self.frozen.u2.clone())
        } else {
            GridPair::new(self.frozen.u1.clone(), v)
        }
    }
}

impl NewtonSystem for BlockSystem<'_> {
    type Error = HammersteinError;

    fn dim(&self) -> usize {
        self.problem.nodes
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>, HammersteinError> {
        let tu = self.problem.apply_t(&self.assemble(x)?)?;
        Ok(x.iter().zip(tu.component(self.component).values()).map(|(a, b)| a - b).collect())
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, HammersteinError> {
        let p = self.problem;
        let u = self.assemble(x)?;
        let partials = p.node_partials(u.u1.values(), u.u2.values())?;
        let i = self.component;
        let mut jac = DMatrix::identity(p.nodes, p.nodes);
        p.subtract_weighted(&mut jac, i, &partials[i][i], 0, 0);
        Ok(jac)
    }

    fn project(&self, x: &mut [f64]) {
        clamp_nonnegative(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_problem(c1: f64, c2: f64, nodes: usize) -> HammersteinProblem {
        let k = KernelSpec::green_dirichlet_standard();
        HammersteinProblem::new([k.clone(), k], [Nonlinearity::constant(c1), Nonlinearity::constant(c2)], nodes, 65).unwrap()
    }

    #[test]
    fn green_constants_match_closed_form() {
        let k = kernel_constants(&KernelSpec::green_dirichlet_standard(), 1025).unwrap();
        assert!((k.a - 1.0 / 16.0).abs() < 1e-6, "A = {}", k.a);
        assert!((k.b - 1.0 / 8.0).abs() < 1e-6, "B = {}", k.b);
        assert_eq!(k.h3.issue_count, 0);
    }

    #[test]
    fn constant_kernel_constants() {
        let spec = KernelSpec::new(
            KernelKind::Expression(Expr::parse_with_vars("1", &["t", "s"]).unwrap()),
            ScalarFn::One,
            ScalarFn::One,
            Window::new(0.25, 0.75).unwrap(),
            1.0,
        )
        .unwrap();
        let k = kernel_constants(&spec, 65).unwrap();
        assert!((k.a - 0.5).abs() < 1e-12);
        assert!((k.b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_kernel_violates_h3() {
        let spec = KernelSpec::new(
            KernelKind::Expression(Expr::parse_with_vars("abs(t-s)", &["t", "s"]).unwrap()),
            ScalarFn::One,
            ScalarFn::One,
            Window::new(0.25, 0.75).unwrap(),
            0.1,
        )
        .unwrap();
        match kernel_constants(&spec, 65) {
            Err(HammersteinError::H3Violation(report)) => {
                assert!(report.issues.iter().any(|i| i.check.starts_with("c Phi")));
            }
            other => panic!("expected kernel bound violation, got {other:?}"),
        }
    }

    #[test]
    fn quadrature_size_validated() {
        let spec = KernelSpec::green_dirichlet_standard();
        assert_eq!(kernel_constants(&spec, 8), Err(HammersteinError::BadQuadrature(8)));
        assert_eq!(kernel_constants(&spec, 10), Err(HammersteinError::BadQuadrature(10)));
    }

    #[test]
    fn tabulated_kernel_agrees_with_builtin() {
        let m = 65;
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let t = node(i, m);
                (0..m).map(|j| {
                    let s = node(j, m);
                    if s <= t { s * (1.0 - t) } else { t * (1.0 - s) }
                }).collect()
            })
            .collect();
        let mut spec = KernelSpec::green_dirichlet_standard();
        spec.kind = KernelKind::Tabulated(Table2::new(rows).unwrap());
        let k = kernel_constants(&spec, 129).unwrap();
        assert!((k.a - 1.0 / 16.0).abs() < 1e-6);
        assert!((k.b - 1.0 / 8.0).abs() < 1e-6);
    }

    #[test]
    fn apply_t_of_constant_nonlinearity() {
        let p = constant_problem(1.0, 0.0, 129);
        let out = p.apply_t(&GridPair::zeros(129).unwrap()).unwrap();
        for (k, v) in out.u1.values().iter().enumerate() {
            let t = node(k, 129);
            assert!((v - t * (1.0 - t) / 2.0).abs() < 1e-8);
        }
        assert!(out.u2.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn picard_rejects_bad_input() {
        let p = constant_problem(1.0, 1.0, 33);
        let b = ConeBox::new([0.05, 0.05], [1.0, 1.0]).unwrap();
        let init = GridPair::constant(33, 0.5, 0.5).unwrap();
        let opts = PicardOptions { tol: 0.0, max_iter: 10 };
        assert!(matches!(p.solve_picard(&b, &init, &opts), Err(SolveError::InvalidInput(_))));
        let outside = GridPair::constant(33, 2.0, 0.5).unwrap();
        assert!(matches!(
            p.solve_picard(&b, &outside, &PicardOptions::default()),
            Err(SolveError::InvalidInput(_))
        ));
    }

    #[test]
    fn picard_constant_nonlinearity_two_steps() {
        let p = constant_problem(1.0, 1.0, 129);
        let b = ConeBox::new([0.05, 0.05], [1.0, 1.0]).unwrap();
        let init = GridPair::constant(129, 0.5, 0.5).unwrap();
        let rec = p.solve_picard(&b, &init, &PicardOptions::default()).unwrap();
        assert!(rec.iterations <= 2);
        assert!(rec.residual < 1e-12);
        assert!(rec.inside_region());
        assert!((rec.norms[0] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn level_validation() {
        assert!(matches!(LevelParams::new([1.0, 2.0], [1.0, 3.0]), Err(HammersteinError::BadLevel(_))));
        assert!(matches!(LevelParams::new([-1.0, 2.0], [1.0, 3.0]), Err(HammersteinError::BadLevel(_))));
    }

    #[test]
    fn monotone_corner_m() {
        let k = KernelSpec::green_dirichlet_standard();
        let f1 = Nonlinearity::native(|u, v| u * v, crate::boxopt::MonotoneTag::BOTH);
        let p = HammersteinProblem::new([k.clone(), k], [f1, Nonlinearity::constant(7.0)], 33, 65).unwrap();
        // beta_1 = 1, alpha_2 = 2 < beta_2 = 4 so r_2 = 2
        let level = LevelParams::new([3.0, 2.0], [1.0, 4.0]).unwrap();
        let mm = p.compute_m_m(&level, 129).unwrap();
        assert_eq!(mm.m[0].value, 0.125);
        assert_eq!(mm.m[1].value, 7.0);
        assert_eq!(mm.big_m[1].value, 7.0);
    }

    #[test]
    fn zero_nonlinearity_fails_existence() {
        let p = constant_problem(0.0, 0.0, 33);
        let cert = p.check_existence(&LevelParams::new([1.0, 1.0], [0.1, 0.1]).unwrap(), 33).unwrap();
        assert!(!cert.pass);
        assert_eq!(cert.levels[0].inequalities.len(), 4);
        assert!(!cert.levels[0].inequalities[0].pass);
        assert!(cert.levels[0].inequalities[1].pass);
    }
}
