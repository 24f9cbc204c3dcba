//! Randomized suites shared by the property tests and the acceptance run.
//!
//! Each suite returns `Err(description)` on the first counterexample. Runs
//! are deterministic: the proptest RNG is seeded with a fixed value.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use kpcert::boxopt::{box_max, box_min, MonotoneTag, Rect};
use kpcert::cones::retract_component;
use kpcert::expr::{BinaryOp, Expr, Node, Piece, UnaryOp};
use kpcert::grid::{sup_norm, GridFunction, GridPair};
use kpcert::miranda::{check_faces, find_zero, FaceCondition, Rectangle, ZeroOptions};
use kpcert::nonlinearity::Nonlinearity;
use kpcert::plaplacian::{harnack_check, phi_p, phi_p_inv, PParams, RadialProblem};

pub const CASES: u32 = 1000;

pub const EXAMPLE_H: &str = "piecewise(u1; 0,1: cbrt(u1); 1,10: u1^3; 10,inf: cbrt(u1-10)+1000)";

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Nonnegative vector with sup-norm exactly `norm`.
fn vector_with_norm(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0_f64, len).prop_flat_map(|v| {
        let k = v.len();
        (0..k).prop_map(move |peak| {
            let mut v = v.clone();
            v[peak] = 1.0;
            v
        })
    })
}

fn radii() -> impl Strategy<Value = (f64, f64)> {
    (1e-3..10.0_f64, 1.01..100.0_f64).prop_map(|(r, ratio)| (r, r * ratio))
}

fn direction(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..2.0_f64, len).prop_map(|mut h| {
        h[0] += 0.1;
        h
    })
}

/// `rho(rho(u)) = rho(u)` for `||u|| <= R`.
pub fn retraction_idempotence(cases: u32) -> Result<(), String> {
    let strat = (vector_with_norm(2..40), radii(), 0.0..1.0_f64).prop_flat_map(|(u, rr, s)| {
        let len = u.len();
        (Just(u), Just(rr), Just(s), direction(len))
    });
    run(cases, strat, |(u, (r, big_r), s, h)| {
        let u: Vec<f64> = u.iter().map(|x| x * s * big_r).collect();
        let once = retract_component(&u, r, big_r, &h).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let twice = retract_component(&once, r, big_r, &h).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let gap = once.iter().zip(&twice).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
        check(gap <= 1e-12 * big_r, || format!("rho not idempotent: gap {gap}"))
    })
}

/// Below the inner sphere the retraction lands exactly on `||.|| = r`;
/// inside the annulus it is the identity.
pub fn retraction_norm(cases: u32) -> Result<(), String> {
    let strat = (vector_with_norm(2..40), radii(), 0.0..1.0_f64).prop_flat_map(|(u, rr, s)| {
        let len = u.len();
        (Just(u), Just(rr), Just(s), direction(len))
    });
    run(cases, strat, |(u, (r, big_r), s, h)| {
        let u: Vec<f64> = u.iter().map(|x| x * s * big_r).collect();
        let out = retract_component(&u, r, big_r, &h).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let norm = sup_norm(&u);
        if norm < r {
            check(sup_norm(&out) == r, || format!("norm {} != r = {r}", sup_norm(&out)))?;
            check(out.iter().all(|&x| x >= 0.0), || "left the cone".into())
        } else {
            check(out == u, || "moved a point of the annulus".into())
        }
    })
}

/// Continuity across `||u|| = r`: moving from norm `r` to `r - delta` moves
/// the image by at most `1e4 * delta`.
pub fn retraction_seam(cases: u32) -> Result<(), String> {
    let delta = 1e-8;
    let strat = (vector_with_norm(2..40), radii()).prop_flat_map(|(u, rr)| {
        let len = u.len();
        (Just(u), Just(rr), direction(len))
    });
    run(cases, strat, |(u, (r, big_r), h)| {
        let on: Vec<f64> = u.iter().map(|x| x * r).collect();
        let below: Vec<f64> = u.iter().map(|x| x * (r - delta)).collect();
        let a = retract_component(&on, r, big_r, &h).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = retract_component(&below, r, big_r, &h).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let gap = a.iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
        check(gap <= 1e4 * delta, || format!("seam jump {gap} for delta {delta}"))
    })
}

pub fn phi_p_round_trip(cases: u32) -> Result<(), String> {
    let strat = (prop::sample::select(vec![2.5, 3.0, 4.0, 7.0]), -1e3..1e3_f64);
    run(cases, strat, |(p, t)| {
        let back = phi_p_inv(phi_p(t, p), p);
        check((back - t).abs() <= 1e-12 * t.abs().max(1.0), || format!("p = {p}: {t} -> {back}"))
    })
}

/// Nondecreasing test functions `a + b u^k + c v^m + d min(u, v) + e u v`.
fn monotone_coefficients() -> impl Strategy<Value = [f64; 7]> {
    (0.0..5.0_f64, 0.0..3.0_f64, 0.25..3.0_f64, 0.0..3.0_f64, 0.25..3.0_f64, 0.0..2.0_f64, 0.0..1.0_f64)
        .prop_map(|(a, b, k, c, m, d, e)| [a, b, k, c, m, d, e])
}

fn monotone_eval(q: &[f64; 7], u: f64, v: f64) -> f64 {
    q[0] + q[1] * u.powf(q[2]) + q[3] * v.powf(q[4]) + q[5] * u.min(v) + q[6] * u * v
}

/// Monotone shortcut equals the extremum of a dense grid scan.
pub fn boxopt_shortcut_vs_grid(cases: u32) -> Result<(), String> {
    let rect = (0.0..10.0_f64, 0.0..10.0_f64, 0.01..10.0_f64, 0.01..10.0_f64)
        .prop_map(|(x, y, w, h)| Rect::new([x, y], [x + w, y + h]).unwrap());
    run(cases, (monotone_coefficients(), rect), |(q, rect)| {
        let f = |u: f64, v: f64| Ok(monotone_eval(&q, u, v));
        let lo = box_min(f, rect, MonotoneTag::BOTH, 33).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let hi = box_max(f, rect, MonotoneTag::BOTH, 33).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let n = 41;
        for i in 0..n {
            for j in 0..n {
                let u = rect.lo[0] + (rect.hi[0] - rect.lo[0]) * i as f64 / (n - 1) as f64;
                let v = rect.lo[1] + (rect.hi[1] - rect.lo[1]) * j as f64 / (n - 1) as f64;
                let x = monotone_eval(&q, u, v);
                gmin = gmin.min(x);
                gmax = gmax.max(x);
            }
        }
        let tol = 1e-12 * (1.0 + gmax.abs());
        check(!lo.sampled && !hi.sampled, || "shortcut fell back to sampling".into())?;
        check((lo.value - gmin).abs() <= tol, || format!("min {} vs grid {gmin}", lo.value))?;
        check((hi.value - gmax).abs() <= tol, || format!("max {} vs grid {gmax}", hi.value))
    })
}

fn leaf() -> impl Strategy<Value = Node> {
    prop_oneof![
        (0.0..100.0_f64).prop_map(Node::Const),
        (0..=9u32).prop_map(|k| Node::Const(k as f64)),
        (0..2usize).prop_map(Node::Var),
    ]
}

fn node_tree() -> impl Strategy<Value = Node> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        let unary = prop::sample::select(vec![
            UnaryOp::Neg,
            UnaryOp::Abs,
            UnaryOp::Sin,
            UnaryOp::Cos,
            UnaryOp::Sqrt,
            UnaryOp::Cbrt,
            UnaryOp::Exp,
        ]);
        let binary = prop::sample::select(vec![
            BinaryOp::Add,
            BinaryOp::Sub,
            BinaryOp::Mul,
            BinaryOp::Div,
            BinaryOp::Pow,
            BinaryOp::Min,
            BinaryOp::Max,
        ]);
        let breaks = prop::collection::vec(0.01..5.0_f64, 0..3);
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, x)| Node::Unary(op, Box::new(x))),
            (binary, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Node::Binary(op, Box::new(a), Box::new(b))),
            (0..2usize, breaks, prop::collection::vec(inner, 3)).prop_map(|(var, gaps, bodies)| {
                let mut cuts = vec![0.0];
                for g in gaps {
                    let next = cuts.last().unwrap() + g;
                    cuts.push(next);
                }
                cuts.push(f64::INFINITY);
                let pieces = cuts
                    .windows(2)
                    .zip(bodies.into_iter().cycle())
                    .map(|(w, body)| Piece { lo: w[0], hi: w[1], body })
                    .collect();
                Node::Piecewise { var, pieces }
            }),
        ]
    })
}

/// `parse(render(e))` rebuilds the same tree, and evaluation agrees.
pub fn expr_round_trip(cases: u32) -> Result<(), String> {
    let vars = ["u1", "u2"];
    run(cases, (node_tree(), 0.0..20.0_f64, 0.0..20.0_f64), |(root, a, b)| {
        let e = Expr::from_node(root, &vars);
        let text = e.render();
        let back = Expr::parse_with_vars(&text, &vars).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        check(back.root() == e.root(), || format!("tree changed for {text}"))?;
        check(back.render() == text, || format!("render not stable for {text}"))?;
        match (e.evaluate(&[a, b]), back.evaluate(&[a, b])) {
            (Ok(x), Ok(y)) => check(x.to_bits() == y.to_bits(), || format!("{text}: {x} vs {y}")),
            (Err(x), Err(y)) => check(x == y, || format!("{text}: {x} vs {y}")),
            (x, y) => Err(TestCaseError::fail(format!("{text}: {x:?} vs {y:?}"))),
        }
    })
}

/// The Example's `h` is continuous at its breakpoints `u1 = 1` and `u1 = 10`:
/// `|h(x + e) - h(x)| <= 2 |e|^{1/3} + 400 |e|` for `|e| <= 1e-3`.
pub fn example_h_continuity(cases: u32) -> Result<(), String> {
    let h = Expr::parse(EXAMPLE_H).map_err(|e| e.to_string())?;
    if !h.continuity_warnings().is_empty() {
        return Err(format!("breakpoint warnings: {:?}", h.continuity_warnings()));
    }
    let strat = (prop::sample::select(vec![1.0, 10.0]), -1e-3..1e-3_f64);
    run(cases, strat, |(x, e)| {
        let at = h.evaluate(&[x, 0.0]).map_err(|err| TestCaseError::fail(err.to_string()))?;
        let near = h.evaluate(&[x + e, 0.0]).map_err(|err| TestCaseError::fail(err.to_string()))?;
        let bound = 2.0 * e.abs().cbrt() + 400.0 * e.abs() + 1e-12;
        check((near - at).abs() <= bound, || format!("h jumps by {} at {x} + {e}", near - at))
    })
}

/// Random nondecreasing nonlinearity built from the same family as the
/// boxopt suite.
fn radial_nonlinearity(q: [f64; 7], swap: bool) -> Nonlinearity {
    Nonlinearity::native(
        move |u, v| if swap { monotone_eval(&q, v, u) } else { monotone_eval(&q, u, v) },
        MonotoneTag::BOTH,
    )
}

/// Nonnegative nonincreasing profile `s (1 - r^k)^m + floor`.
fn cone_profile(nodes: usize, s: f64, k: f64, m: f64, floor: f64) -> GridFunction {
    GridFunction::from_fn(nodes, |r| s * (1.0 - r.powf(k)).max(0.0).powf(m) + floor).unwrap()
}

#[derive(Debug, Clone)]
pub struct HarnackCase {
    pub p: [f64; 2],
    pub n: u32,
    pub q: [[f64; 7]; 2],
    pub shape: [(f64, f64, f64, f64); 2],
}

pub fn harnack_case() -> impl Strategy<Value = HarnackCase> {
    let shape = (0.01..5.0_f64, 0.5..4.0_f64, 0.5..3.0_f64, 0.0..0.5_f64);
    prop_oneof![Just(2u32), Just(3u32)]
        .prop_flat_map(move |n| {
            let ps: Vec<f64> = [2.5, 3.0, 4.0].into_iter().filter(|&p| p > n as f64).collect();
            (
                Just(n),
                prop::sample::select(ps.clone()),
                prop::sample::select(ps),
                monotone_coefficients(),
                monotone_coefficients(),
                shape.clone(),
                shape.clone(),
            )
        })
        .prop_map(|(n, p1, p2, q1, q2, s1, s2)| HarnackCase { p: [p1, p2], n, q: [q1, q2], shape: [s1, s2] })
}

/// Outcome of one Harnack case: the worst margin seen and the tolerance.
pub fn run_harnack_case(c: &HarnackCase, nodes: usize) -> Result<(f64, f64), String> {
    let window = kpcert::cones::Window::new(0.25, 0.75).unwrap();
    let params = PParams::new(c.p, c.n, window).map_err(|e| e.to_string())?;
    let problem = RadialProblem::new(params, [radial_nonlinearity(c.q[0], false), radial_nonlinearity(c.q[1], true)], nodes)
        .map_err(|e| e.to_string())?;
    let [(s1, k1, m1, f1), (s2, k2, m2, f2)] = c.shape;
    let u = GridPair::new(cone_profile(nodes, s1, k1, m1, f1), cone_profile(nodes, s2, k2, m2, f2)).unwrap();
    let tu = problem.apply_t(&u).map_err(|e| e.to_string())?;
    let err = problem.grid_error(&u).map_err(|e| e.to_string())?;
    let mut worst = f64::INFINITY;
    let mut tol_used = 0.0_f64;
    for i in 0..2 {
        let v = tu.component(i);
        let norm = v.sup_norm();
        let tol = 5.0 * err / norm + 1e-14;
        let report = harnack_check(v, c.p[i], c.n, tol);
        if !report.pass {
            return Err(format!("component {}: {report:?} at tol {tol:e} for {c:?}", i + 1));
        }
        if v.values()[nodes - 1] != 0.0 {
            return Err(format!("component {} does not vanish at r = 1", i + 1));
        }
        worst = worst.min(report.worst_margin);
        tol_used = tol_used.max(tol);
    }
    Ok((worst, tol_used))
}

/// `count` random radial problems; every `T(u)` passes the Harnack check.
pub fn harnack_suite(count: u32, nodes: usize) -> Result<(), String> {
    run(count, harnack_case(), |c| run_harnack_case(&c, nodes).map(|_| ()).map_err(TestCaseError::fail))
}

#[derive(Debug, Clone)]
pub struct PlantedSystem {
    pub m: [[f64; 2]; 2],
    pub zero: [f64; 2],
}

impl PlantedSystem {
    pub fn eval(&self, x: &[f64]) -> [f64; 2] {
        let d = [x[0] - self.zero[0], x[1] - self.zero[1]];
        [self.m[0][0] * d[0] + self.m[0][1] * d[1], self.m[1][0] * d[0] + self.m[1][1] * d[1]]
    }
}

/// Diagonally dominant `M` with random diagonal signs and a zero in
/// `[0.3, 0.7]^2`, so the face conditions hold on the unit square.
pub fn planted_system() -> impl Strategy<Value = PlantedSystem> {
    (
        1.0..3.0_f64,
        1.0..3.0_f64,
        any::<bool>(),
        any::<bool>(),
        -0.2..0.2_f64,
        -0.2..0.2_f64,
        0.3..0.7_f64,
        0.3..0.7_f64,
    )
        .prop_map(|(d1, d2, s1, s2, o1, o2, z1, z2)| {
            let d1 = if s1 { d1 } else { -d1 };
            let d2 = if s2 { d2 } else { -d2 };
            PlantedSystem { m: [[d1, o1 * d1.abs()], [o2 * d2.abs(), d2]], zero: [z1, z2] }
        })
}

/// Cells of the `resolution` grid on the unit square in which both
/// components change sign at the corners.
pub fn sign_change_cells(sys: &PlantedSystem, resolution: f64) -> Vec<[usize; 2]> {
    let n = (1.0 / resolution).round() as usize;
    let at = |i: usize, j: usize| sys.eval(&[i as f64 / n as f64, j as f64 / n as f64]);
    let mut prev: Vec<[f64; 2]> = (0..=n).map(|j| at(0, j)).collect();
    let mut cells = Vec::new();
    for i in 1..=n {
        let row: Vec<[f64; 2]> = (0..=n).map(|j| at(i, j)).collect();
        for j in 0..n {
            let corners = [prev[j], prev[j + 1], row[j], row[j + 1]];
            let straddles = |k: usize| {
                let lo = corners.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
                let hi = corners.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
                lo <= 0.0 && hi >= 0.0
            };
            if straddles(0) && straddles(1) {
                cells.push([i - 1, j]);
            }
        }
        prev = row;
    }
    cells
}

/// Finds the planted zero and checks it against the grid oracle.
pub fn run_planted(sys: &PlantedSystem, opts: &ZeroOptions) -> Result<f64, String> {
    let rect = Rectangle::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let g = |x: &[f64]| Ok(sys.eval(x).to_vec());
    let faces = check_faces(&g, &rect, 33).map_err(|e| e.to_string())?;
    if faces.conditions.contains(&FaceCondition::Fail) {
        return Err(format!("face check failed for {sys:?}"));
    }
    let z = find_zero(&g, &rect, opts).map_err(|e| format!("{e} for {sys:?}"))?;
    let err = (z.x[0] - sys.zero[0]).abs().max((z.x[1] - sys.zero[1]).abs());
    if err > 1e-10 {
        return Err(format!("zero off by {err} for {sys:?}"));
    }
    let res = 1e-3;
    let cells = sign_change_cells(sys, res);
    if cells.is_empty() {
        return Err("grid oracle found no sign-change cell".into());
    }
    let cell_of = |x: f64| ((x / res).floor() as usize).min(999);
    let home = [cell_of(z.x[0]), cell_of(z.x[1])];
    for c in &cells {
        if c[0].abs_diff(home[0]) > 1 || c[1].abs_diff(home[1]) > 1 {
            return Err(format!("second sign-change cell {c:?} away from {home:?}"));
        }
    }
    Ok(err)
}

pub fn planted_suite(count: u32, opts: &ZeroOptions) -> Result<f64, String> {
    let worst = std::cell::Cell::new(0.0_f64);
    run(count, planted_system(), |sys| {
        let err = run_planted(&sys, opts).map_err(TestCaseError::fail)?;
        worst.set(worst.get().max(err));
        Ok(())
    })?;
    Ok(worst.get())
}
