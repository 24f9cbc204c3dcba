//! JSON problem configuration.
//!
//! Every struct rejects unknown keys. Numbers may be given as JSON numbers
//! or as constant expressions such as `"2^9 + 10"`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use kpcert::boxopt::{MonotoneTag, Monotonicity};
use kpcert::cones::{Behaviour, Regime, Window};
use kpcert::expr::Expr;
use kpcert::hammerstein::{
    HammersteinProblem, KernelKind, KernelSpec, LevelParams, NewtonOptions, PicardOptions, ScalarFn, SolveSettings,
    Table1, Table2,
};
use kpcert::miranda::{Rectangle, ZeroOptions};
use kpcert::nonlinearity::Nonlinearity;
use kpcert::plaplacian::{PParams, RadialProblem, RadialSolveOptions};

use crate::CliError;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Hammerstein,
    Plaplacian,
    Miranda,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema: u32,
    pub problem: ProblemKind,
    #[serde(default)]
    pub hammerstein: Option<HammersteinConfig>,
    #[serde(default)]
    pub plaplacian: Option<PlaplacianConfig>,
    #[serde(default)]
    pub miranda: Option<MirandaConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A JSON number or a constant expression.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Value(f64),
    Expr(String),
}

impl Number {
    pub fn value(&self) -> Result<f64, CliError> {
        match self {
            Number::Value(v) => Ok(*v),
            Number::Expr(src) => {
                let e = Expr::parse_with_vars(src, &[]).map_err(|err| CliError::Config(format!("`{src}`: {err}")))?;
                e.evaluate(&[]).map_err(|err| CliError::Config(format!("`{src}`: {err}")))
            }
        }
    }
}

fn pair(v: &[Number; 2]) -> Result<[f64; 2], CliError> {
    Ok([v[0].value()?, v[1].value()?])
}

fn window(v: &[Number; 2]) -> Result<Window, CliError> {
    let [a, b] = pair(v)?;
    Window::new(a, b).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrTwo<T> {
    Two([T; 2]),
    One(T),
}

impl<T: Clone> OneOrTwo<T> {
    fn both(&self) -> [T; 2] {
        match self {
            OneOrTwo::Two(v) => v.clone(),
            OneOrTwo::One(v) => [v.clone(), v.clone()],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    /// Expression in `u1`, `u2`.
    pub expr: String,
    /// Declared monotonicity in `(u1, u2)`.
    #[serde(default = "unknown_tag")]
    pub monotone: [Monotonicity; 2],
}

fn unknown_tag() -> [Monotonicity; 2] {
    MonotoneTag::UNKNOWN.0
}

impl NonlinearityConfig {
    fn build(&self, name: &str) -> Result<Nonlinearity, CliError> {
        let nl = Nonlinearity::parse(&self.expr, MonotoneTag(self.monotone))
            .map_err(|e| CliError::Config(format!("{name}: `{}`: {e}", self.expr)))?;
        if let Some(w) = nl.expr().and_then(|e| e.continuity_warnings().into_iter().next()) {
            eprintln!("warning: {name} is discontinuous: {w:?}");
        }
        Ok(nl)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKindConfig {
    GreenDirichlet,
    /// Expression in `t`, `s`.
    Expression { expr: String },
    /// Square table on a uniform grid of `[0, 1]^2`, rows indexed by `t`.
    Tabulated { values: Vec<Vec<f64>> },
}

/// Scalar function of `s`: an expression or a table on a uniform grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ScalarConfig {
    Expr(String),
    Table { tabulated: Vec<f64> },
}

impl ScalarConfig {
    fn build(&self, name: &str) -> Result<ScalarFn, CliError> {
        match self {
            ScalarConfig::Expr(src) if src.trim() == "1" => Ok(ScalarFn::One),
            ScalarConfig::Expr(src) => ScalarFn::parse(src).map_err(|e| CliError::Config(format!("{name}: `{src}`: {e}"))),
            ScalarConfig::Table { tabulated } => Table1::new(tabulated.clone())
                .map(ScalarFn::Tabulated)
                .map_err(|e| CliError::Config(format!("{name}: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kernel: KernelKindConfig,
    /// `g`, default `1`.
    #[serde(default)]
    pub weight: Option<ScalarConfig>,
    /// `Phi`
    pub bound: ScalarConfig,
    pub window: [Number; 2],
    pub cone_constant: Number,
}

impl KernelConfig {
    fn build(&self, name: &str) -> Result<KernelSpec, CliError> {
        let kind = match &self.kernel {
            KernelKindConfig::GreenDirichlet => KernelKind::GreenDirichlet,
            KernelKindConfig::Expression { expr } => Expr::parse_with_vars(expr, &["t", "s"])
                .map(KernelKind::Expression)
                .map_err(|e| CliError::Config(format!("{name}: `{expr}`: {e}")))?,
            KernelKindConfig::Tabulated { values } => Table2::new(values.clone())
                .map(KernelKind::Tabulated)
                .map_err(|e| CliError::Config(format!("{name}: {e}")))?,
        };
        let weight = match &self.weight {
            Some(w) => w.build(&format!("{name}.weight"))?,
            None => ScalarFn::One,
        };
        let bound = self.bound.build(&format!("{name}.bound"))?;
        KernelSpec::new(kind, weight, bound, window(&self.window)?, self.cone_constant.value()?)
            .map_err(|e| CliError::Config(format!("{name}: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub alpha: [Number; 2],
    pub beta: [Number; 2],
}

impl LevelConfig {
    fn build(&self, j: usize) -> Result<LevelParams, CliError> {
        LevelParams::new(pair(&self.alpha)?, pair(&self.beta)?)
            .map_err(|e| CliError::Config(format!("level {}: {e}", j + 1)))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HammersteinConfig {
    /// One kernel for both components or one per component.
    pub kernels: OneOrTwo<KernelConfig>,
    pub f1: NonlinearityConfig,
    pub f2: NonlinearityConfig,
    /// One level for existence, three for multiplicity.
    pub levels: Vec<LevelConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaplacianConfig {
    pub p: [Number; 2],
    pub n: u32,
    pub window: [Number; 2],
    pub f1: NonlinearityConfig,
    pub f2: NonlinearityConfig,
    pub alpha: [Number; 2],
    pub beta: [Number; 2],
    /// `CC`, `CE`, `EC` or `EE`; inferred from `alpha`, `beta` when absent.
    #[serde(default)]
    pub regime: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirandaConfig {
    /// Variable names, default `x1 .. xn`.
    #[serde(default)]
    pub vars: Option<Vec<String>>,
    /// One expression per component of `g`.
    pub field: Vec<String>,
    pub lower: Vec<Number>,
    pub upper: Vec<Number>,
    #[serde(default)]
    pub polish: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Solution grid nodes `N`.
    pub nodes: Option<usize>,
    /// Simpson points for kernel constants.
    pub quad_n: Option<usize>,
    /// Nodes per axis for sampled box extrema.
    pub grid_n: Option<usize>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Multistart seed.
    pub seed: Option<u64>,
    pub random_seeds: Option<usize>,
    /// Face lattice points per dimension (Miranda).
    pub samples_per_dim: Option<usize>,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn load(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let cfg: Config = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.schema != SCHEMA {
        return Err(CliError::Config(format!("unsupported schema {}, expected {SCHEMA}", cfg.schema)));
    }
    let blocks = [
        ("hammerstein", cfg.hammerstein.is_some(), ProblemKind::Hammerstein),
        ("plaplacian", cfg.plaplacian.is_some(), ProblemKind::Plaplacian),
        ("miranda", cfg.miranda.is_some(), ProblemKind::Miranda),
    ];
    for (name, present, kind) in blocks {
        if present != (kind == cfg.problem) {
            return Err(CliError::Config(if present {
                format!("block `{name}` given for a {:?} problem", cfg.problem)
            } else {
                format!("missing block `{name}`")
            }));
        }
    }
    Ok(cfg)
}

pub struct HammersteinSetup {
    pub problem: HammersteinProblem,
    pub levels: Vec<LevelParams>,
    pub grid_n: usize,
    pub quad_n: usize,
    pub settings: SolveSettings,
}

pub struct RadialSetup {
    pub problem: RadialProblem,
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub regime: Regime,
    pub options: RadialSolveOptions,
}

pub struct MirandaSetup {
    pub field: Vec<Expr>,
    pub rect: Rectangle,
    pub options: ZeroOptions,
}

impl MirandaSetup {
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, kpcert::expr::EvalError> {
        self.field.iter().map(|e| e.evaluate(x)).collect()
    }
}

impl Config {
    pub fn out_dir(&self, o: &Overrides) -> PathBuf {
        o.out.clone().or_else(|| self.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
    }

    fn seed(&self, o: &Overrides) -> u64 {
        o.seed.or(self.solver.seed).unwrap_or(0)
    }

    pub fn hammerstein(&self, o: &Overrides) -> Result<HammersteinSetup, CliError> {
        let h = self.hammerstein.as_ref().ok_or_else(|| CliError::Config("not a hammerstein config".into()))?;
        if !(h.levels.len() == 1 || h.levels.len() == 3) {
            return Err(CliError::Config(format!("need 1 or 3 levels, got {}", h.levels.len())));
        }
        let levels = h.levels.iter().enumerate().map(|(j, l)| l.build(j)).collect::<Result<Vec<_>, _>>()?;
        let [k1, k2] = h.kernels.both();
        let kernels = [k1.build("kernel 1")?, k2.build("kernel 2")?];
        let nls = [h.f1.build("f1")?, h.f2.build("f2")?];
        let s = &self.solver;
        let nodes = o.grid.or(s.nodes).unwrap_or(kpcert::hammerstein::DEFAULT_NODES);
        let quad_n = s.quad_n.unwrap_or(kpcert::hammerstein::DEFAULT_QUAD_N);
        let grid_n = s.grid_n.unwrap_or(kpcert::boxopt::DEFAULT_GRID_N);
        let problem = HammersteinProblem::new(kernels, nls, nodes, quad_n).map_err(CliError::Hammerstein)?;
        let mut picard = PicardOptions::default();
        let mut newton = NewtonOptions { seed: self.seed(o), ..NewtonOptions::default() };
        if let Some(tol) = s.tol {
            if !(tol > 0.0) {
                return Err(CliError::Config(format!("tolerance must be positive, got {tol}")));
            }
            picard.tol = tol.min(picard.tol);
            newton.tol = tol;
        }
        if let Some(m) = s.max_iter {
            picard.max_iter = m;
        }
        if let Some(r) = s.random_seeds {
            newton.random_seeds = r;
        }
        Ok(HammersteinSetup { problem, levels, grid_n, quad_n, settings: SolveSettings { picard, newton } })
    }

    pub fn radial(&self, o: &Overrides) -> Result<RadialSetup, CliError> {
        let p = self.plaplacian.as_ref().ok_or_else(|| CliError::Config("not a plaplacian config".into()))?;
        let params = PParams::new(pair(&p.p)?, p.n, window(&p.window)?).map_err(|e| CliError::Config(e.to_string()))?;
        let nodes = o.grid.or(self.solver.nodes).unwrap_or(kpcert::plaplacian::DEFAULT_NODES);
        let problem = RadialProblem::new(params, [p.f1.build("f1")?, p.f2.build("f2")?], nodes)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let alpha = pair(&p.alpha)?;
        let beta = pair(&p.beta)?;
        for i in 0..2 {
            if !(alpha[i] > 0.0 && beta[i] > 0.0) || alpha[i] == beta[i] {
                return Err(CliError::Config(format!(
                    "alpha{0} and beta{0} must be positive and distinct, got {1} and {2}",
                    i + 1,
                    alpha[i],
                    beta[i]
                )));
            }
        }
        let regime = match p.regime.as_deref() {
            None => Regime::from_levels(alpha, beta),
            Some(label) => parse_regime(label)?,
        };
        let mut options = RadialSolveOptions::default();
        if let Some(tol) = self.solver.tol {
            options.tol = tol;
        }
        if let Some(m) = self.solver.max_iter {
            options.max_iter = m;
        }
        Ok(RadialSetup { problem, alpha, beta, regime, options })
    }

    pub fn miranda(&self) -> Result<MirandaSetup, CliError> {
        let m = self.miranda.as_ref().ok_or_else(|| CliError::Config("not a miranda config".into()))?;
        let n = m.field.len();
        let vars: Vec<String> = match &m.vars {
            Some(v) => v.clone(),
            None => (1..=n).map(|i| format!("x{i}")).collect(),
        };
        if vars.len() != n || m.lower.len() != n || m.upper.len() != n {
            return Err(CliError::Config(format!(
                "field has {n} components but {} variables, {} lower and {} upper bounds",
                vars.len(),
                m.lower.len(),
                m.upper.len()
            )));
        }
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        let field = m
            .field
            .iter()
            .enumerate()
            .map(|(i, src)| {
                Expr::parse_with_vars(src, &names).map_err(|e| CliError::Config(format!("g{}: `{src}`: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lower = m.lower.iter().map(Number::value).collect::<Result<Vec<_>, _>>()?;
        let upper = m.upper.iter().map(Number::value).collect::<Result<Vec<_>, _>>()?;
        let rect = Rectangle::new(lower, upper).map_err(|e| CliError::Config(e.to_string()))?;
        let mut options = ZeroOptions::default();
        if let Some(tol) = self.solver.tol {
            options.tol = tol;
        }
        if let Some(s) = self.solver.samples_per_dim {
            options.samples_per_dim = s;
        }
        if let Some(d) = self.solver.max_depth {
            options.max_depth = d;
        }
        if let Some(p) = m.polish {
            options.polish = p;
        }
        Ok(MirandaSetup { field, rect, options })
    }
}

fn parse_regime(label: &str) -> Result<Regime, CliError> {
    let mut out = [Behaviour::Compressive; 2];
    let chars: Vec<char> = label.trim().chars().collect();
    if chars.len() != 2 {
        return Err(CliError::Config(format!("regime must be two letters from C/E, got `{label}`")));
    }
    for (slot, c) in out.iter_mut().zip(chars) {
        *slot = match c.to_ascii_uppercase() {
            'C' => Behaviour::Compressive,
            'E' => Behaviour::Expansive,
            _ => return Err(CliError::Config(format!("regime must be two letters from C/E, got `{label}`"))),
        };
    }
    Ok(Regime(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_miranda(extra: &str) -> String {
        format!(
            r#"{{"schema": 1, "problem": "miranda", {extra}
                "miranda": {{"field": ["x1 - 0.5"], "lower": [0], "upper": [1]}}}}"#
        )
    }

    #[test]
    fn accepts_minimal_config() {
        let cfg = parse(&minimal_miranda("")).unwrap();
        assert_eq!(cfg.problem, ProblemKind::Miranda);
        let setup = cfg.miranda().unwrap();
        assert_eq!(setup.eval(&[0.75]).unwrap(), vec![0.25]);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(parse(&minimal_miranda(r#""colour": 3,"#)), Err(CliError::Config(_))));
        let nested = r#"{"schema": 1, "problem": "miranda",
            "miranda": {"field": ["x1"], "lower": [0], "upper": [1], "extra": true}}"#;
        assert!(parse(nested).is_err());
    }

    #[test]
    fn rejects_missing_or_wrong_schema() {
        let no_schema = r#"{"problem": "miranda", "miranda": {"field": ["x1"], "lower": [0], "upper": [1]}}"#;
        assert!(parse(no_schema).is_err());
        let wrong = r#"{"schema": 2, "problem": "miranda", "miranda": {"field": ["x1"], "lower": [0], "upper": [1]}}"#;
        assert!(parse(wrong).is_err());
    }

    #[test]
    fn rejects_mismatched_blocks() {
        let text = r#"{"schema": 1, "problem": "hammerstein",
            "miranda": {"field": ["x1"], "lower": [0], "upper": [1]}}"#;
        assert!(parse(text).is_err());
    }

    #[test]
    fn numbers_accept_constant_expressions() {
        let n: Number = serde_json::from_str(r#""2^9 + 10""#).unwrap();
        assert_eq!(n.value().unwrap(), 522.0);
        let n: Number = serde_json::from_str(r#""2^(-9)""#).unwrap();
        assert_eq!(n.value().unwrap(), 1.0 / 512.0);
        let n: Number = serde_json::from_str("0.25").unwrap();
        assert_eq!(n.value().unwrap(), 0.25);
        let bad: Number = serde_json::from_str(r#""u1 + 1""#).unwrap();
        assert!(bad.value().is_err());
    }

    #[test]
    fn regime_labels() {
        assert_eq!(parse_regime("CE").unwrap(), Regime::CE);
        assert_eq!(parse_regime("ee").unwrap(), Regime::EE);
        assert!(parse_regime("CX").is_err());
        assert!(parse_regime("C").is_err());
    }
}
