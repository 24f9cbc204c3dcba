use serde::Serialize;

use crate::grid::GridPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Picard,
    DeflatedNewton,
}

/// A computed fixed point.
///
/// `residual` is `||u - T(u)||_inf` recomputed when the record is built;
/// `inside` holds strict membership of each component in the target region.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionRecord {
    pub u: GridPair,
    pub residual: f64,
    pub norms: [f64; 2],
    /// `min over [a, b]` of each component, for phi-section problems.
    pub phi: Option<[f64; 2]>,
    pub inside: [bool; 2],
    pub method: Method,
    pub iterations: usize,
}

impl SolutionRecord {
    pub fn inside_region(&self) -> bool {
        self.inside.iter().all(|&b| b)
    }
}

/// Serializable summary of a [`SolutionRecord`] without the grid values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionSummary {
    pub residual: f64,
    pub norms: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<[f64; 2]>,
    pub inside: [bool; 2],
    pub method: Method,
    pub iterations: usize,
}

impl From<&SolutionRecord> for SolutionSummary {
    fn from(r: &SolutionRecord) -> Self {
        Self {
            residual: r.residual,
            norms: r.norms,
            phi: r.phi,
            inside: r.inside,
            method: r.method,
            iterations: r.iterations,
        }
    }
}
