//! Cone-section geometry shared by the problem modules.
//!
//! All norms are sup-norms: `max |u_k|` over grid nodes or vector entries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{sup_norm, GridFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("radii must satisfy 0 < r < R, got r = {inner}, R = {outer} (component {component})")]
    BadRadii { component: usize, inner: f64, outer: f64 },
    #[error("window must satisfy {lower_limit} <= a < b <= {upper_limit}, got [{a}, {b}]")]
    BadWindow { a: f64, b: f64, lower_limit: f64, upper_limit: f64 },
    #[error("phi-section component {component} is empty: inner bound {inner} exceeds outer bound {outer}")]
    EmptySection { component: usize, inner: f64, outer: f64 },
    #[error("norm {norm} exceeds the outer radius {outer}")]
    OutsideOuterBall { norm: f64, outer: f64 },
    #[error("direction h must be nonzero and nonnegative")]
    BadDirection,
    #[error("element has a negative entry {value} at index {index}")]
    NotInCone { index: usize, value: f64 },
    #[error("direction length {h} does not match element length {u}")]
    LengthMismatch { u: usize, h: usize },
}

/// Annular section `r_i <= ||u_i|| <= R_i`, componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeBox {
    inner: [f64; 2],
    outer: [f64; 2],
}

impl ConeBox {
    pub fn new(inner: [f64; 2], outer: [f64; 2]) -> Result<Self, ConeError> {
        for component in 0..2 {
            let (r, big_r) = (inner[component], outer[component]);
            if !(r > 0.0 && r < big_r && big_r.is_finite()) {
                return Err(ConeError::BadRadii { component, inner: r, outer: big_r });
            }
        }
        Ok(Self { inner, outer })
    }

    /// Radii from a parameter level: `r_i = min(alpha_i, beta_i)`, `R_i = max`.
    pub fn from_levels(alpha: [f64; 2], beta: [f64; 2]) -> Result<Self, ConeError> {
        let inner = [alpha[0].min(beta[0]), alpha[1].min(beta[1])];
        let outer = [alpha[0].max(beta[0]), alpha[1].max(beta[1])];
        Self::new(inner, outer)
    }

    #[inline]
    pub fn inner(&self) -> [f64; 2] {
        self.inner
    }

    #[inline]
    pub fn outer(&self) -> [f64; 2] {
        self.outer
    }

    pub fn contains_closed(&self, norms: [f64; 2]) -> bool {
        (0..2).all(|i| self.inner[i] <= norms[i] && norms[i] <= self.outer[i])
    }

    /// Strict membership per component: `r_i < ||u_i|| < R_i`.
    pub fn strict_membership(&self, norms: [f64; 2]) -> [bool; 2] {
        [0, 1].map(|i| self.inner[i] < norms[i] && norms[i] < self.outer[i])
    }

    pub fn contains_open(&self, norms: [f64; 2]) -> bool {
        self.strict_membership(norms).iter().all(|&b| b)
    }

    /// Closed-box inclusion `self ⊆ other`.
    pub fn is_inside(&self, other: &ConeBox) -> bool {
        (0..2).all(|i| other.inner[i] <= self.inner[i] && self.outer[i] <= other.outer[i])
    }

    /// True when some component's radius intervals do not overlap.
    pub fn is_disjoint_from(&self, other: &ConeBox) -> bool {
        (0..2).any(|i| self.outer[i] < other.inner[i] || other.outer[i] < self.inner[i])
    }
}

/// An interval `[a, b]` of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub a: f64,
    pub b: f64,
}

impl Window {
    /// Any window with `0 <= a < b <= 1`.
    pub fn new(a: f64, b: f64) -> Result<Self, ConeError> {
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(ConeError::BadWindow { a, b, lower_limit: 0.0, upper_limit: 1.0 });
        }
        Ok(Self { a, b })
    }

    /// A window strictly inside `(0, 1)`.
    pub fn interior(a: f64, b: f64) -> Result<Self, ConeError> {
        if !(0.0 < a && a < b && b < 1.0) {
            return Err(ConeError::BadWindow { a, b, lower_limit: 0.0, upper_limit: 1.0 });
        }
        Ok(Self { a, b })
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    #[inline]
    pub fn contains(&self, t: f64) -> bool {
        self.a <= t && t <= self.b
    }
}

/// Compression or expansion behaviour of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behaviour {
    Compressive,
    Expansive,
}

impl Behaviour {
    /// Behaviour implied by a parameter pair: `beta < alpha` is compressive.
    pub fn from_levels(alpha: f64, beta: f64) -> Self {
        if beta < alpha {
            Behaviour::Compressive
        } else {
            Behaviour::Expansive
        }
    }

    pub fn short(self) -> char {
        match self {
            Behaviour::Compressive => 'C',
            Behaviour::Expansive => 'E',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Regime(pub [Behaviour; 2]);

impl Regime {
    pub const CC: Regime = Regime([Behaviour::Compressive, Behaviour::Compressive]);
    pub const CE: Regime = Regime([Behaviour::Compressive, Behaviour::Expansive]);
    pub const EC: Regime = Regime([Behaviour::Expansive, Behaviour::Compressive]);
    pub const EE: Regime = Regime([Behaviour::Expansive, Behaviour::Expansive]);

    pub fn from_levels(alpha: [f64; 2], beta: [f64; 2]) -> Self {
        Regime([
            Behaviour::from_levels(alpha[0], beta[0]),
            Behaviour::from_levels(alpha[1], beta[1]),
        ])
    }

    pub fn swapped(self) -> Self {
        Regime([self.0[1], self.0[0]])
    }

    pub fn expansive_count(self) -> usize {
        self.0.iter().filter(|&&b| b == Behaviour::Expansive).count()
    }

    pub fn label(self) -> String {
        self.0.iter().map(|b| b.short()).collect()
    }
}

/// Fixed-point index of the operator over the section for a given regime:
/// `+1` when both components agree, `-1` when they differ.
pub fn expected_index(regime: Regime) -> i32 {
    match regime.0 {
        [Behaviour::Compressive, Behaviour::Compressive] => 1,
        [Behaviour::Expansive, Behaviour::Expansive] => 1,
        _ => -1,
    }
}

/// Retraction of the closed ball `||u|| <= R` onto the annulus `r <= ||u|| <= R`.
///
/// Inside the annulus `u` is returned unchanged. Below the inner radius the
/// result is `r w / ||w||` with `w = u + (r - ||u||)^2 h`.
pub fn retract_component(u: &[f64], r: f64, big_r: f64, h: &[f64]) -> Result<Vec<f64>, ConeError> {
    if !(r > 0.0 && r < big_r) {
        return Err(ConeError::BadRadii { component: 0, inner: r, outer: big_r });
    }
    if u.len() != h.len() {
        return Err(ConeError::LengthMismatch { u: u.len(), h: h.len() });
    }
    if h.iter().any(|&x| !(x >= 0.0)) || sup_norm(h) == 0.0 {
        return Err(ConeError::BadDirection);
    }
    if let Some((index, &value)) = u.iter().enumerate().find(|(_, &x)| !(x >= 0.0)) {
        return Err(ConeError::NotInCone { index, value });
    }
    let norm = sup_norm(u);
    if norm > big_r {
        return Err(ConeError::OutsideOuterBall { norm, outer: big_r });
    }
    if norm >= r {
        return Ok(u.to_vec());
    }
    let shift = (r - norm) * (r - norm);
    let w: Vec<f64> = u.iter().zip(h).map(|(x, y)| x + shift * y).collect();
    let scale = r / sup_norm(&w);
    let mut out: Vec<f64> = w.into_iter().map(|x| x * scale).collect();
    // Exact norm r in the retracted branch; the scaling can be off by an ulp.
    if let Some(peak) = out.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *peak = r;
    }
    Ok(out)
}

/// [`retract_component`] on a grid function with the constant-one direction.
pub fn retract_grid(u: &GridFunction, r: f64, big_r: f64) -> Result<GridFunction, ConeError> {
    let h = vec![1.0; u.len()];
    let out = retract_component(u.values(), r, big_r, &h)?;
    Ok(GridFunction::new(out).expect("retraction keeps values finite"))
}

/// Minimum of `u` over the window, including linearly interpolated values at
/// window endpoints that fall between nodes.
pub fn phi_min(u: &GridFunction, window: Window) -> f64 {
    let mut best = u.interpolate(window.a).min(u.interpolate(window.b));
    for (t, &v) in u.nodes().zip(u.values()) {
        if window.contains(t) {
            best = best.min(v);
        }
    }
    best
}

/// Per-component shape of a phi-section.
///
/// A compressive component lives in `phi(u) >= inner`, `||u|| <= outer`;
/// an expansive one in `||u|| >= inner`, `phi(u) <= outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSection {
    inner: [f64; 2],
    outer: [f64; 2],
    window: Window,
    regime: Regime,
}

impl PhiSection {
    pub fn new(inner: [f64; 2], outer: [f64; 2], window: Window, regime: Regime) -> Result<Self, ConeError> {
        let window = Window::interior(window.a, window.b)?;
        for component in 0..2 {
            let (lo, hi) = (inner[component], outer[component]);
            if !(lo > 0.0 && hi > 0.0 && hi.is_finite()) {
                return Err(ConeError::BadRadii { component, inner: lo, outer: hi });
            }
            // constant witness with value `hi` (compressive) or `lo` (expansive)
            if lo > hi {
                return Err(ConeError::EmptySection { component, inner: lo, outer: hi });
            }
        }
        Ok(Self { inner, outer, window, regime })
    }

    /// All-compressive section `beta_i < phi_i(u_i)`, `||u_i|| < alpha_i`.
    pub fn compressive(beta: [f64; 2], alpha: [f64; 2], window: Window) -> Result<Self, ConeError> {
        Self::new(beta, alpha, window, Regime::CC)
    }

    /// Section matching a regime and a parameter level. Compressive
    /// components take `beta` as the phi floor and `alpha` as the norm
    /// ceiling; expansive components take `alpha` as the norm floor and
    /// `beta` as the phi ceiling.
    pub fn for_regime(alpha: [f64; 2], beta: [f64; 2], window: Window, regime: Regime) -> Result<Self, ConeError> {
        let mut inner = [0.0; 2];
        let mut outer = [0.0; 2];
        for i in 0..2 {
            match regime.0[i] {
                Behaviour::Compressive => {
                    inner[i] = beta[i];
                    outer[i] = alpha[i];
                }
                Behaviour::Expansive => {
                    inner[i] = alpha[i];
                    outer[i] = beta[i];
                }
            }
        }
        Self::new(inner, outer, window, regime)
    }

    pub fn inner(&self) -> [f64; 2] {
        self.inner
    }

    pub fn outer(&self) -> [f64; 2] {
        self.outer
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// The (floor, ceiling) quantities of component `i`: `(phi, norm)` when
    /// compressive, `(norm, phi)` when expansive.
    pub fn measured(&self, i: usize, phi: f64, norm: f64) -> (f64, f64) {
        match self.regime.0[i] {
            Behaviour::Compressive => (phi, norm),
            Behaviour::Expansive => (norm, phi),
        }
    }

    pub fn contains_closed(&self, phi: [f64; 2], norms: [f64; 2]) -> bool {
        (0..2).all(|i| {
            let (lo, hi) = self.measured(i, phi[i], norms[i]);
            self.inner[i] <= lo && hi <= self.outer[i]
        })
    }

    pub fn strict_membership(&self, phi: [f64; 2], norms: [f64; 2]) -> [bool; 2] {
        [0, 1].map(|i| {
            let (lo, hi) = self.measured(i, phi[i], norms[i]);
            self.inner[i] < lo && hi < self.outer[i]
        })
    }
}
