//! Command implementations behind the `kpcert` binary.
//!
//! Exit codes: 0 pass or found, 1 usage or configuration error,
//! 2 certificate or face-condition failure, 3 solver nonconvergence.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use kpcert::certificate::{Certificate, SCHEMA_VERSION};
use kpcert::cones::{ConeBox, PhiSection, Regime};
use kpcert::grid::GridPair;
use kpcert::hammerstein::{HammersteinError, KernelConstants, SolveError};
use kpcert::miranda::{check_faces, find_zero, FaceCondition, FaceReport, MirandaError, Rectangle, ZeroResult};
use kpcert::plaplacian::{harnack_check, HarnackReport, RadialSolveError};
use kpcert::solution::SolutionSummary;

use config::{Config, Overrides, ProblemKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Hammerstein(HammersteinError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Hammerstein(HammersteinError::H3Violation(_)) => EXIT_FAIL,
            _ => EXIT_CONFIG,
        }
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: PathBuf,
    pub overrides: Overrides,
}

impl Invocation {
    fn load(&self) -> Result<(Config, PathBuf), CliError> {
        let cfg = config::load(&self.config)?;
        let dir = cfg.out_dir(&self.overrides);
        Ok((cfg, dir))
    }
}

/// Runs a command and turns errors into exit codes with a diagnostic on
/// standard error.
pub fn finish(result: Result<i32, CliError>) -> i32 {
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct H3Failure<'a> {
    schema: u32,
    problem: &'static str,
    pass: bool,
    error: String,
    h3: &'a kpcert::hammerstein::H3Report,
}

fn report_h3(dir: &Path, err: &CliError) -> Result<(), CliError> {
    if let CliError::Hammerstein(HammersteinError::H3Violation(report)) = err {
        let doc = H3Failure { schema: SCHEMA_VERSION, problem: "hammerstein", pass: false, error: err.to_string(), h3: report };
        let path = output::write_json(dir, "h3_report.json", &doc)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn print_certificate(cert: &Certificate) {
    for (j, level) in cert.levels.iter().enumerate() {
        println!(
            "level {}: alpha = {:?}, beta = {:?}, regime {}, index {}",
            j + 1,
            level.alpha,
            level.beta,
            level.regime.label(),
            level.expected_index
        );
        for rec in &level.inequalities {
            let verdict = if rec.pass { "PASS" } else { "FAIL" };
            println!("  {verdict}  {}  lhs = {:.6e}  rhs = {:.6e}  margin = {:+.6e}", rec.name, rec.lhs, rec.rhs, rec.margin);
        }
        for s in &level.structural {
            println!("  {}  {}  ({})", if s.pass { "PASS" } else { "FAIL" }, s.name, s.detail);
        }
    }
    for s in &cert.structural {
        println!("{}  {}  ({})", if s.pass { "PASS" } else { "FAIL" }, s.name, s.detail);
    }
    let total = cert.inequalities().count();
    let passed = cert.inequalities().filter(|r| r.pass).count();
    println!("certificate: {passed}/{total} inequalities pass; overall {}", if cert.pass { "PASS" } else { "FAIL" });
}

fn hammerstein_certificate(setup: &config::HammersteinSetup) -> Result<Certificate, CliError> {
    let levels = &setup.levels;
    let cert = if levels.len() == 3 {
        setup.problem.check_multiplicity(&[levels[0], levels[1], levels[2]], setup.grid_n)
    } else {
        setup.problem.check_existence(&levels[0], setup.grid_n)
    };
    cert.map_err(CliError::Hammerstein)
}

fn write_certificate(dir: &Path, cert: &Certificate) -> Result<(), CliError> {
    print_certificate(cert);
    let path = output::write_json(dir, "certificate.json", cert)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn print_constants(constants: &[KernelConstants; 2]) {
    for (i, k) in constants.iter().enumerate() {
        println!("kernel {}: A = {:.12}, B = {:.12} (quad_n = {})", i + 1, k.a, k.b, k.quad_n);
    }
}

/// `check`: evaluates the certificate (or the Miranda face conditions).
pub fn cmd_check(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, dir) = inv.load()?;
    match cfg.problem {
        ProblemKind::Hammerstein => {
            let setup = match cfg.hammerstein(&inv.overrides) {
                Ok(s) => s,
                Err(e) => {
                    report_h3(&dir, &e)?;
                    return Err(e);
                }
            };
            print_constants(setup.problem.constants());
            let cert = hammerstein_certificate(&setup)?;
            write_certificate(&dir, &cert)?;
            Ok(if cert.pass { EXIT_OK } else { EXIT_FAIL })
        }
        ProblemKind::Plaplacian => {
            let setup = cfg.radial(&inv.overrides)?;
            let cert = radial_certificate(&setup)?;
            write_certificate(&dir, &cert)?;
            Ok(if cert.pass { EXIT_OK } else { EXIT_FAIL })
        }
        ProblemKind::Miranda => {
            let setup = cfg.miranda()?;
            let faces = faces(&setup)?;
            let doc = MirandaDoc::new(&setup.rect, faces, None);
            let path = output::write_json(&dir, "miranda.json", &doc)?;
            eprintln!("wrote {}", path.display());
            Ok(if doc.faces.pass() { EXIT_OK } else { EXIT_FAIL })
        }
    }
}

fn radial_certificate(setup: &config::RadialSetup) -> Result<Certificate, CliError> {
    setup
        .problem
        .check_conditions(setup.alpha, setup.beta, setup.regime)
        .map_err(|e| CliError::Runtime(e.to_string()))
}

#[derive(Serialize)]
struct RegionDoc {
    inner: [f64; 2],
    outer: [f64; 2],
    exclude: Vec<BoxDoc>,
}

#[derive(Serialize)]
struct BoxDoc {
    inner: [f64; 2],
    outer: [f64; 2],
}

impl From<&ConeBox> for BoxDoc {
    fn from(b: &ConeBox) -> Self {
        Self { inner: b.inner(), outer: b.outer() }
    }
}

#[derive(Serialize)]
struct SolutionEntry {
    label: String,
    region: RegionDoc,
    found: bool,
    attempts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<SolutionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct SolveDoc {
    schema: u32,
    problem: &'static str,
    nodes: usize,
    seed: u64,
    certificate_checked: bool,
    count: usize,
    solutions: Vec<SolutionEntry>,
}

/// `solve`: certificate first (unless skipped), then the solvers.
pub fn cmd_solve(inv: &Invocation, skip_check: bool) -> Result<i32, CliError> {
    let (cfg, dir) = inv.load()?;
    match cfg.problem {
        ProblemKind::Hammerstein => solve_hammerstein(&cfg, inv, &dir, skip_check),
        ProblemKind::Plaplacian => solve_radial(&cfg, inv, &dir, skip_check),
        ProblemKind::Miranda => miranda(&cfg, &dir),
    }
}

fn solve_hammerstein(cfg: &Config, inv: &Invocation, dir: &Path, skip_check: bool) -> Result<i32, CliError> {
    let setup = match cfg.hammerstein(&inv.overrides) {
        Ok(s) => s,
        Err(e) => {
            report_h3(dir, &e)?;
            return Err(e);
        }
    };
    if !skip_check {
        let cert = hammerstein_certificate(&setup)?;
        write_certificate(dir, &cert)?;
        if !cert.pass {
            eprintln!("certificate failed; rerun with --skip-check to search anyway");
            return Ok(EXIT_FAIL);
        }
    }
    let outcomes = setup.problem.solve_levels(&setup.levels, &setup.settings);
    let mut entries = Vec::new();
    let mut count = 0;
    for outcome in outcomes {
        let region = RegionDoc {
            inner: outcome.region.target.inner(),
            outer: outcome.region.target.outer(),
            exclude: outcome.region.exclude.iter().map(BoxDoc::from).collect(),
        };
        let mut entry = SolutionEntry {
            label: outcome.label.clone(),
            region,
            found: false,
            attempts: outcome.attempts,
            solution: None,
            csv: None,
            error: None,
        };
        match &outcome.result {
            Ok(rec) => {
                count += 1;
                let name = format!("solution_{count}.csv");
                output::write_atomic(dir, &name, &output::grid_pair_csv(&rec.u, "t")?)?;
                println!(
                    "{}: found, norms = [{:.6e}, {:.6e}], residual = {:.3e}, {:?} in {} iterations",
                    outcome.label, rec.norms[0], rec.norms[1], rec.residual, rec.method, rec.iterations
                );
                entry.found = true;
                entry.solution = Some(SolutionSummary::from(rec));
                entry.csv = Some(name);
            }
            Err(e) => {
                println!("{}: not found ({e})", outcome.label);
                if let SolveError::Problem(inner) = e {
                    return Err(CliError::Hammerstein(inner.clone()));
                }
                entry.error = Some(e.to_string());
            }
        }
        entries.push(entry);
    }
    let doc = SolveDoc {
        schema: SCHEMA_VERSION,
        problem: "hammerstein",
        nodes: setup.problem.nodes(),
        seed: setup.settings.newton.seed,
        certificate_checked: !skip_check,
        count,
        solutions: entries,
    };
    let path = output::write_json(dir, "solutions.json", &doc)?;
    eprintln!("wrote {}", path.display());
    Ok(if count > 0 { EXIT_OK } else { EXIT_NO_CONVERGENCE })
}

#[derive(Serialize)]
struct RadialDoc {
    schema: u32,
    problem: &'static str,
    nodes: usize,
    regime: Regime,
    section: SectionDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    solution: Option<SolutionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<Certificate>,
}

#[derive(Serialize)]
struct SectionDoc {
    inner: [f64; 2],
    outer: [f64; 2],
}

fn solve_radial(cfg: &Config, inv: &Invocation, dir: &Path, skip_check: bool) -> Result<i32, CliError> {
    let setup = cfg.radial(&inv.overrides)?;
    let certificate = if skip_check {
        None
    } else {
        let cert = radial_certificate(&setup)?;
        write_certificate(dir, &cert)?;
        if !cert.pass {
            eprintln!("certificate failed; rerun with --skip-check to search anyway");
            return Ok(EXIT_FAIL);
        }
        Some(cert)
    };
    let window = setup.problem.params().window;
    let section = PhiSection::for_regime(setup.alpha, setup.beta, window, setup.regime)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (inner, outer) = (section.inner(), section.outer());
    let n = setup.problem.nodes();
    // Constants have phi = norm, so any value between the bounds is admissible.
    let init = GridPair::constant(n, (inner[0] * outer[0]).sqrt(), (inner[1] * outer[1]).sqrt())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut doc = RadialDoc {
        schema: SCHEMA_VERSION,
        problem: "plaplacian",
        nodes: n,
        regime: setup.regime,
        section: SectionDoc { inner, outer },
        solution: None,
        csv: None,
        error: None,
        certificate,
    };
    let code = match setup.problem.solve_radial(&section, &init, &setup.options) {
        Ok(rec) => {
            let name = "radial_solution.csv".to_string();
            output::write_atomic(dir, &name, &output::grid_pair_csv(&rec.u, "r")?)?;
            let phi = rec.phi.unwrap_or([f64::NAN; 2]);
            println!(
                "solution: norms = [{:.6e}, {:.6e}], phi = [{:.6e}, {:.6e}], residual = {:.3e}, {} iterations, inside = {:?}",
                rec.norms[0], rec.norms[1], phi[0], phi[1], rec.residual, rec.iterations, rec.inside
            );
            doc.solution = Some(SolutionSummary::from(&rec));
            doc.csv = Some(name);
            EXIT_OK
        }
        Err(RadialSolveError::InvalidInput(msg)) => return Err(CliError::Runtime(msg)),
        Err(RadialSolveError::Problem(e)) => return Err(CliError::Runtime(e.to_string())),
        Err(e) => {
            println!("no solution: {e}");
            doc.error = Some(e.to_string());
            EXIT_NO_CONVERGENCE
        }
    };
    let path = output::write_json(dir, "radial_solution.json", &doc)?;
    eprintln!("wrote {}", path.display());
    Ok(code)
}

#[derive(Serialize)]
struct MirandaDoc {
    schema: u32,
    problem: &'static str,
    lower: Vec<f64>,
    upper: Vec<f64>,
    faces: FaceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    zero: Option<ZeroResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl MirandaDoc {
    fn new(rect: &Rectangle, faces: FaceReport, zero: Option<ZeroResult>) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            problem: "miranda",
            lower: rect.lower().to_vec(),
            upper: rect.upper().to_vec(),
            faces,
            zero,
            error: None,
        }
    }
}

fn faces(setup: &config::MirandaSetup) -> Result<FaceReport, CliError> {
    let g = |x: &[f64]| setup.eval(x);
    let report = check_faces(&g, &setup.rect, setup.options.samples_per_dim).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("coordinate  condition  (A: g_i >= 0 on x_i = a_i, <= 0 on x_i = b_i; B: reversed)");
    for (i, c) in report.conditions.iter().enumerate() {
        let label = match c {
            FaceCondition::A => "A",
            FaceCondition::B => "B",
            FaceCondition::Fail => "FAIL",
        };
        println!("  x{:<9} {label}", i + 1);
    }
    println!("{} face points, {} per axis, tol {:.1e}", report.points, report.samples_per_dim, report.tol);
    Ok(report)
}

/// `miranda`: face classification and, when it passes, the zero.
pub fn cmd_miranda(inv: &Invocation) -> Result<i32, CliError> {
    let (cfg, dir) = inv.load()?;
    if cfg.problem != ProblemKind::Miranda {
        return Err(CliError::Config(format!("`miranda` needs a miranda config, got {:?}", cfg.problem)));
    }
    miranda(&cfg, &dir)
}

fn miranda(cfg: &Config, dir: &Path) -> Result<i32, CliError> {
    let setup = cfg.miranda()?;
    let report = faces(&setup)?;
    let mut doc = MirandaDoc::new(&setup.rect, report.clone(), None);
    let code = if !report.pass() {
        println!("face conditions fail for coordinate(s) {:?}", report.failed());
        doc.error = Some(format!("face conditions fail for coordinate(s) {:?}", report.failed()));
        EXIT_FAIL
    } else {
        let g = |x: &[f64]| setup.eval(x);
        match find_zero(&g, &setup.rect, &setup.options) {
            Ok(z) => {
                println!("zero: {:?}, |g| = {:.3e}, depth {}, polished {}", z.x, z.residual, z.depth, z.polished);
                doc.zero = Some(z);
                EXIT_OK
            }
            Err(e @ MirandaError::NotFound { .. }) => {
                println!("{e}");
                doc.error = Some(e.to_string());
                EXIT_NO_CONVERGENCE
            }
            Err(MirandaError::FacesFail { failed, .. }) => {
                doc.error = Some(format!("face conditions fail for coordinate(s) {failed:?}"));
                EXIT_FAIL
            }
            Err(e) => return Err(CliError::Runtime(e.to_string())),
        }
    };
    let path = output::write_json(dir, "miranda.json", &doc)?;
    eprintln!("wrote {}", path.display());
    Ok(code)
}

#[derive(Serialize)]
struct HarnackDoc {
    schema: u32,
    input: String,
    p: [f64; 2],
    n: u32,
    tol: f64,
    components: [HarnackReport; 2],
    pass: bool,
}

/// `harnack`: checks both components of a radial solution CSV against the
/// cone inequality of the configured exponents.
pub fn cmd_harnack(inv: &Invocation, input: &Path, tol: f64) -> Result<i32, CliError> {
    let (cfg, dir) = inv.load()?;
    if !(tol >= 0.0) {
        return Err(CliError::Config(format!("tolerance must be nonnegative, got {tol}")));
    }
    let p = cfg
        .plaplacian
        .as_ref()
        .ok_or_else(|| CliError::Config("`harnack` needs a plaplacian config for p and n".into()))?;
    let exps = [p.p[0].value()?, p.p[1].value()?];
    for &pi in &exps {
        if !(pi > p.n as f64) || p.n < 2 {
            return Err(CliError::Config(format!("need p > n >= 2, got p = {pi}, n = {}", p.n)));
        }
    }
    let u = output::read_grid_pair_csv(input)?;
    let components = [0, 1].map(|i| harnack_check(u.component(i), exps[i], p.n, tol));
    for (i, r) in components.iter().enumerate() {
        println!(
            "u{}: {}  monotone = {}, worst margin = {:+.3e} at node {}",
            i + 1,
            if r.pass { "PASS" } else { "FAIL" },
            r.monotone,
            r.worst_margin,
            r.worst_node
        );
    }
    let pass = components.iter().all(|r| r.pass);
    let doc = HarnackDoc {
        schema: SCHEMA_VERSION,
        input: input.display().to_string(),
        p: exps,
        n: p.n,
        tol,
        components,
        pass,
    };
    let path = output::write_json(&dir, "harnack.json", &doc)?;
    eprintln!("wrote {}", path.display());
    Ok(if pass { EXIT_OK } else { EXIT_FAIL })
}
