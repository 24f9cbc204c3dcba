//! Machine-checkable records of the hypotheses behind an existence claim.

use serde::Serialize;

use crate::cones::{expected_index, Regime};

pub const SCHEMA_VERSION: u32 = 1;

/// Slack demanded on top of strict inequality: sampled extrema and quadrature
/// cannot certify strictness exactly.
pub fn safety_margin(rhs: f64) -> f64 {
    1e-9 * (1.0 + rhs.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
}

/// One inequality `lhs > rhs` or `lhs < rhs`.
///
/// `margin` is signed: positive when the inequality holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRecord {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
}

impl InequalityRecord {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let margin = match relation {
            Relation::Greater => lhs - rhs,
            Relation::Less => rhs - lhs,
        };
        let pass = margin.is_finite() && margin > safety_margin(rhs);
        Self { name: name.into(), lhs, relation, rhs, margin, pass }
    }

    pub fn greater(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Greater, rhs)
    }

    pub fn less(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Less, rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuralCheck {
    pub name: String,
    pub detail: String,
    pub pass: bool,
}

impl StructuralCheck {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), detail: detail.into(), pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCertificate {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    /// `min(alpha_i, beta_i)`
    pub r: [f64; 2],
    /// `max(alpha_i, beta_i)`
    #[serde(rename = "R")]
    pub big_r: [f64; 2],
    pub inequalities: Vec<InequalityRecord>,
    pub structural: Vec<StructuralCheck>,
    pub regime: Regime,
    pub expected_index: i32,
    pub pass: bool,
}

impl LevelCertificate {
    pub fn new(
        alpha: [f64; 2],
        beta: [f64; 2],
        regime: Regime,
        inequalities: Vec<InequalityRecord>,
        structural: Vec<StructuralCheck>,
    ) -> Self {
        let pass = inequalities.iter().all(|r| r.pass) && structural.iter().all(|s| s.pass);
        Self {
            alpha,
            beta,
            r: [alpha[0].min(beta[0]), alpha[1].min(beta[1])],
            big_r: [alpha[0].max(beta[0]), alpha[1].max(beta[1])],
            inequalities,
            structural,
            regime,
            expected_index: expected_index(regime),
            pass,
        }
    }
}

/// How the numbers in a certificate were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct GridMeta {
    /// Simpson points per sub-interval for kernel constants.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_n: Option<usize>,
    /// Nodes per axis for sampled box extrema.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    /// Number of `t` samples used for the inf/sup in the kernel constants.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_samples: Option<usize>,
    /// Solution grid nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// True when some extremum came from grid sampling rather than a
    /// monotone corner evaluation.
    pub sampled_extrema: bool,
    pub strictness_rule: String,
}

impl GridMeta {
    pub fn strictness_rule() -> String {
        "margin > 1e-9 * (1 + |rhs|)".to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub schema: u32,
    pub problem: String,
    pub levels: Vec<LevelCertificate>,
    /// Checks that relate several levels (nesting, disjointness).
    pub structural: Vec<StructuralCheck>,
    pub regime: Vec<Regime>,
    pub expected_index: Vec<i32>,
    pub grid_meta: GridMeta,
    /// Extra constants the checks depend on, by name.
    pub constants: Vec<(String, f64)>,
    pub pass: bool,
}

impl Certificate {
    pub fn new(
        problem: impl Into<String>,
        levels: Vec<LevelCertificate>,
        structural: Vec<StructuralCheck>,
        grid_meta: GridMeta,
        constants: Vec<(String, f64)>,
    ) -> Self {
        let pass = levels.iter().all(|l| l.pass) && structural.iter().all(|s| s.pass);
        Self {
            schema: SCHEMA_VERSION,
            problem: problem.into(),
            regime: levels.iter().map(|l| l.regime).collect(),
            expected_index: levels.iter().map(|l| l.expected_index).collect(),
            levels,
            structural,
            grid_meta,
            constants,
            pass,
        }
    }

    pub fn inequalities(&self) -> impl Iterator<Item = &InequalityRecord> {
        self.levels.iter().flat_map(|l| l.inequalities.iter())
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (j, level) in self.levels.iter().enumerate() {
            for r in level.inequalities.iter().filter(|r| !r.pass) {
                out.push(format!("level {}: {}", j + 1, r.name));
            }
            for s in level.structural.iter().filter(|s| !s.pass) {
                out.push(format!("level {}: {}", j + 1, s.name));
            }
        }
        out.extend(self.structural.iter().filter(|s| !s.pass).map(|s| s.name.clone()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins_are_signed() {
        let r = InequalityRecord::greater("x", 3.0, 1.0);
        assert_eq!(r.margin, 2.0);
        assert!(r.pass);
        let r = InequalityRecord::less("x", 3.0, 1.0);
        assert_eq!(r.margin, -2.0);
        assert!(!r.pass);
        // equality is not strict
        assert!(!InequalityRecord::greater("x", 1.0, 1.0).pass);
        assert!(!InequalityRecord::greater("x", f64::NAN, 1.0).pass);
    }

    #[test]
    fn overall_pass_requires_everything() {
        let ok = LevelCertificate::new([1.0, 1.0], [0.5, 0.5], Regime::CC, vec![InequalityRecord::greater("a", 2.0, 1.0)], vec![]);
        let bad_struct = LevelCertificate::new(
            [1.0, 1.0],
            [0.5, 0.5],
            Regime::CC,
            vec![InequalityRecord::greater("a", 2.0, 1.0)],
            vec![StructuralCheck::new("s", false, "")],
        );
        assert!(ok.pass);
        assert!(!bad_struct.pass);
        let c = Certificate::new("t", vec![ok.clone()], vec![], GridMeta::default(), vec![]);
        assert!(c.pass);
        let c = Certificate::new("t", vec![ok], vec![StructuralCheck::new("n", false, "")], GridMeta::default(), vec![]);
        assert!(!c.pass);
        assert_eq!(c.failures(), vec!["n".to_string()]);
    }
}
