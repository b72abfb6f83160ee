//! Command-line front end: argument parsing, command dispatch and JSON
//! reports.
//!
//! Every run produces one JSON object on stdout (and in `--out` when
//! given). Successful runs yield a report
//!
//! ```json
//! { "command": "...", "config": {...}, "residuals": {...},
//!   "verdicts": {...}, "failures": [...], "details": {...},
//!   "timing": { "elapsed_ms": ... } }
//! ```
//!
//! and failures before a report exists yield a diagnostic
//! `{ "command", "error": { "kind", "field", "message" }, "exit_code" }`.
//! Exit codes: 0 all checks passed, 1 a named check failed, 2 input or
//! contract error. Everything except `timing` is a deterministic function
//! of the configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use modular_ppt::choi::{self, MapTable};
use modular_ppt::cones::{self, ConeQuery};
use modular_ppt::constructions;
use modular_ppt::gns;
use modular_ppt::io::{self, MatrixFile, MatrixKind};
use modular_ppt::linalg::{self, Subsystem};
use modular_ppt::optim::{self, PptSetSpec};
use modular_ppt::{rng, BipartiteShape, CMatrix, Complex, Density64, Error, Hermitian64};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "modular-ppt", version, about = "PPT states through decomposable maps and natural cones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,

    /// Input matrix file.
    #[arg(long = "in", global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,

    /// Also write the report here (atomically).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Dimensions `N` or `NxM`.
    #[arg(long, global = true, value_name = "NxM")]
    pub dims: Option<String>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, global = true)]
    pub samples: Option<usize>,

    /// Tolerance override, repeatable.
    #[arg(long, global = true, value_name = "KEY=VAL")]
    pub tol: Vec<String>,

    #[arg(long, global = true)]
    pub iters: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    /// Modular identities on the GNS space of a faithful state.
    GnsVerify,
    /// Cone duality, U-images and (for `NxM`) the commutant cone.
    ConeCheck,
    /// Choi operator analysis of a map.
    Choi,
    /// Partial transpose spectrum of a density matrix.
    PptCheck,
    /// `min Tr(D h)` over PPT densities.
    Minimize,
    /// PPT states from the cone intersection.
    Construct,
    /// Anticommutator criterion on `C^2 (x) C^m`.
    Anticomm,
    /// Square-root probe of PPT.
    Experiment,
    /// Inclusion evidence for the map and state hierarchies.
    Hierarchy,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GnsVerify => "gns-verify",
            Self::ConeCheck => "cone-check",
            Self::Choi => "choi",
            Self::PptCheck => "ppt-check",
            Self::Minimize => "minimize",
            Self::Construct => "construct",
            Self::Anticomm => "anticomm",
            Self::Experiment => "experiment",
            Self::Hierarchy => "hierarchy",
        }
    }

    /// Tolerance keys and defaults.
    fn tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::GnsVerify => &[("residual", 1e-10)],
            Self::ConeCheck => &[("pairing", 1e-10)],
            Self::Choi => &[("psd", 1e-10)],
            Self::PptCheck => &[("psd", 1e-10)],
            Self::Minimize => &[("feas", 1e-8)],
            Self::Construct => &[("distance", 1e-3)],
            Self::Anticomm => &[],
            Self::Experiment => &[],
            Self::Hierarchy => &[],
        }
    }
}

/// Validated run configuration, echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub seed: u64,
    pub tol: BTreeMap<String, f64>,
    pub dims: Option<BipartiteShape>,
    pub samples: Option<usize>,
    pub iters: Option<usize>,
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    pub out_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: CommandKind) -> Self {
        Self { command, seed: 0, tol: BTreeMap::new(), dims: None, samples: None, iters: None, input: None, out_path: None }
    }

    pub fn from_cli(cli: &Cli) -> Result<Self, Error> {
        let dims = cli.dims.as_deref().map(str::parse).transpose()?;
        let mut tol = BTreeMap::new();
        for item in &cli.tol {
            let (k, v) = item.split_once('=').ok_or_else(|| parse_err("tol", format!("expected KEY=VAL, got {item:?}")))?;
            let v: f64 = v.trim().parse().map_err(|_| parse_err("tol", format!("{v:?} is not a number")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(parse_err("tol", format!("{k} must be a finite non-negative number")));
            }
            tol.insert(k.trim().to_string(), v);
        }
        if cli.samples == Some(0) {
            return Err(parse_err("samples", "must be at least 1".into()));
        }
        Ok(Self {
            command: cli.command,
            seed: cli.seed,
            tol,
            dims,
            samples: cli.samples,
            iters: cli.iters,
            input: cli.input.clone(),
            out_path: cli.out.clone(),
        })
    }

    fn check_tolerances(&self) -> Result<(), Error> {
        let known = self.command.tolerances();
        for key in self.tol.keys() {
            if !known.iter().any(|(k, _)| k == key) {
                let names: Vec<&str> = known.iter().map(|(k, _)| *k).collect();
                return Err(parse_err(
                    "tol",
                    format!("unknown key {key:?} for {} (known: {})", self.command.name(), names.join(", ")),
                ));
            }
        }
        Ok(())
    }

    fn tolerance(&self, key: &str) -> f64 {
        self.tol.get(key).copied().unwrap_or_else(|| {
            self.command.tolerances().iter().find(|(k, _)| *k == key).map(|(_, v)| *v).expect("known tolerance key")
        })
    }

    fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    fn require_dims(&self) -> Result<BipartiteShape, Error> {
        self.dims.ok_or_else(|| parse_err("dims", format!("{} needs --dims", self.command.name())))
    }

    fn require_input(&self) -> Result<&Path, Error> {
        self.input.as_deref().ok_or_else(|| parse_err("in", format!("{} needs --in", self.command.name())))
    }
}

fn parse_err(field: &str, message: String) -> Error {
    Error::Parse { field: field.into(), message }
}

/// Residuals, verdicts and named failures of one run.
#[derive(Debug, Default)]
struct Findings {
    residuals: BTreeMap<String, f64>,
    verdicts: BTreeMap<String, bool>,
    failures: Vec<String>,
    details: BTreeMap<String, Value>,
}

impl Findings {
    fn residual(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.into(), value);
    }

    fn verdict(&mut self, name: &str, value: bool) {
        self.verdicts.insert(name.into(), value);
    }

    /// A verdict that must hold; recorded as a failure otherwise.
    fn check(&mut self, name: &str, value: bool) {
        self.verdict(name, value);
        if !value {
            self.failures.push(name.into());
        }
    }

    fn detail<S: Serialize>(&mut self, name: &str, value: &S) {
        self.details.insert(name.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }
}

/// Result of [`run_command`]: the exit code and the JSON body.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit_code: i32,
    pub body: Value,
}

/// Diagnostic object for a failed run.
pub fn diagnostic(command: Option<&str>, err: &Error) -> Value {
    let (kind, field) = match err {
        Error::DimensionLimit { .. } => ("dimension_limit", None),
        Error::Shape(_) => ("shape", None),
        Error::Contract(_) => ("contract", None),
        Error::NotFaithful { .. } => ("not_faithful", None),
        Error::Condition(_) => ("condition", None),
        Error::Consistency(_) => ("consistency", None),
        Error::Parse { field, .. } => ("parse", Some(field.clone())),
        Error::Io(_) => ("io", None),
    };
    json!({
        "command": command,
        "error": { "kind": kind, "field": field, "message": err.to_string() },
        "exit_code": exit_code_of(err),
    })
}

fn exit_code_of(err: &Error) -> i32 {
    match err {
        // Two independent routes disagreeing is a failed check, not bad input.
        Error::Consistency(_) => EXIT_ASSERTION,
        _ => EXIT_INPUT,
    }
}

/// Runs one command and returns its report or diagnostic. Does not write
/// files.
pub fn run_command(cfg: &RunConfig) -> Outcome {
    let start = Instant::now();
    let result = cfg.check_tolerances().and_then(|()| dispatch(cfg));
    match result {
        Ok(f) => {
            let exit_code = if f.failures.is_empty() { EXIT_OK } else { EXIT_ASSERTION };
            let body = json!({
                "command": cfg.command.name(),
                "config": cfg,
                "residuals": f.residuals,
                "verdicts": f.verdicts,
                "failures": f.failures,
                "details": f.details,
                "exit_code": exit_code,
                "timing": { "elapsed_ms": start.elapsed().as_secs_f64() * 1e3 },
            });
            Outcome { exit_code, body }
        }
        Err(e) => Outcome { exit_code: exit_code_of(&e), body: diagnostic(Some(cfg.command.name()), &e) },
    }
}

/// The report without its `timing` field.
pub fn report_body(body: &Value) -> Value {
    let mut b = body.clone();
    if let Some(obj) = b.as_object_mut() {
        obj.remove("timing");
    }
    b
}

/// Parses arguments, runs, prints and writes the result; returns the exit
/// code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let err = parse_err("arguments", e.render().to_string().trim().to_string());
            println!("{}", pretty(&diagnostic(None, &err)));
            return EXIT_INPUT;
        }
    };
    let outcome = match RunConfig::from_cli(&cli) {
        Ok(cfg) => run_command(&cfg),
        Err(e) => Outcome { exit_code: EXIT_INPUT, body: diagnostic(Some(cli.command.name()), &e) },
    };
    let text = pretty(&outcome.body);
    if let Some(path) = &cli.out {
        if let Err(e) = io::write_atomic(path, text.as_bytes()) {
            println!("{}", pretty(&diagnostic(Some(cli.command.name()), &e)));
            return EXIT_INPUT;
        }
    }
    print!("{text}");
    outcome.exit_code
}

fn pretty(v: &Value) -> String {
    io::report_json(v).unwrap_or_else(|_| format!("{v}\n"))
}

fn dispatch(cfg: &RunConfig) -> Result<Findings, Error> {
    match cfg.command {
        CommandKind::GnsVerify => gns_verify(cfg),
        CommandKind::ConeCheck => cone_check(cfg),
        CommandKind::Choi => choi_cmd(cfg),
        CommandKind::PptCheck => ppt_check(cfg),
        CommandKind::Minimize => minimize(cfg),
        CommandKind::Construct => construct(cfg),
        CommandKind::Anticomm => anticomm(cfg),
        CommandKind::Experiment => experiment(cfg),
        CommandKind::Hierarchy => hierarchy(cfg),
    }
}

/// Loads `--in`, requiring `kind` when given and resolving the bipartite
/// shape from `--dims` or the file.
fn load(cfg: &RunConfig, kind: Option<MatrixKind>) -> Result<(MatrixFile, Option<BipartiteShape>), Error> {
    let path = cfg.require_input()?;
    let file = io::load_matrix(path).map_err(|e| match e {
        Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
        e => e,
    })?;
    if file.rows != file.cols {
        return Err(parse_err("rows", format!("expected a square matrix, got {}x{}", file.rows, file.cols)));
    }
    let shape = match (cfg.dims, file.shape) {
        (Some(d), Some(f)) if d != f => {
            return Err(parse_err("shape", format!("file declares {f} but --dims is {d}")));
        }
        (Some(d), _) | (None, Some(d)) => Some(d),
        (None, None) => None,
    };
    if let Some(s) = shape {
        if s.total() != file.rows {
            return Err(parse_err("dims", format!("{s} does not match a {}x{} matrix", file.rows, file.cols)));
        }
    }
    match kind {
        Some(MatrixKind::Density) => {
            Density64::new(file.matrix())?;
        }
        Some(MatrixKind::Hermitian) => {
            Hermitian64::new(file.matrix())?;
        }
        _ => {}
    }
    Ok((file, shape))
}

fn require_shape(shape: Option<BipartiteShape>) -> Result<BipartiteShape, Error> {
    shape.ok_or_else(|| parse_err("dims", "bipartite dimensions needed: pass --dims NxM or a file with `shape`".into()))
}

fn gns_verify(cfg: &RunConfig) -> Result<Findings, Error> {
    let rho = if cfg.input.is_some() {
        Density64::new(load(cfg, Some(MatrixKind::Density))?.0.matrix())?
    } else {
        let n = cfg.require_dims()?.total();
        gns::random_faithful(&mut rng::seeded(cfg.seed), n)
    };
    let ctx = gns::build_gns(&rho)?;
    let rep = ctx.verify_modular_identities(cfg.samples_or(100), cfg.seed)?;
    let tol = cfg.tolerance("residual");
    let mut f = Findings::default();
    for (name, value) in &rep.residuals {
        f.residual(name, *value);
        if *value > tol {
            f.failures.push(name.clone());
        }
    }
    f.verdict("identities", rep.max_residual <= tol);
    f.verdict("condition_warning", rep.condition_warning);
    f.detail("dim", &rep.dim);
    f.detail("condition_ratio", &rep.condition_ratio);
    f.detail("negative_control_commutant", &rep.negative_control_commutant);
    Ok(f)
}

fn cone_check(cfg: &RunConfig) -> Result<Findings, Error> {
    let dims = cfg.require_dims()?;
    let samples = cfg.samples_or(200);
    let tol = cfg.tolerance("pairing");
    let mut f = Findings::default();
    if dims.dim_b == 1 {
        let ctx = gns::build_gns(&gns::random_faithful(&mut rng::seeded(cfg.seed), dims.dim_a))?;
        let mut duality = Vec::new();
        for beta in [0.0, 0.125, 0.25, 0.375, 0.5] {
            let d = cones::duality_check(&ctx, beta, samples, cfg.seed)?;
            let u = cones::u_maps_cones(&ctx, beta, samples, cfg.seed)?;
            f.residual(&format!("min_pairing_beta_{beta}"), d.min_pairing);
            f.residual(&format!("polar_residual_beta_{beta}"), u.polar_residual);
            f.check(&format!("duality_beta_{beta}"), d.min_pairing >= -tol && d.separated == d.outside_samples);
            f.check(&format!("u_maps_beta_{beta}"), u.passed);
            duality.push(json!({ "duality": d, "u_map": u }));
        }
        f.detail("beta_grid", &duality);
        if cfg.input.is_some() {
            let (file, _) = load(cfg, None)?;
            let xi = ctx.vector(file.matrix())?;
            let v = cones::natural_cone_membership(&ctx, &xi)?;
            f.verdict("input_in_natural_cone", v.inside);
            let q = ConeQuery::new(0.0, cones::CONE_TOL)?;
            f.verdict("input_in_v0", cones::v_beta_membership(&ctx, &q, &xi)?.inside);
            f.detail("input_membership", &v);
        }
    } else {
        let c = cones::random_composite::<f64>(dims, cfg.seed)?;
        let rep = cones::commutant_cone_check(&c, samples, cfg.seed)?;
        f.residual("generator_residual", rep.generator_residual);
        f.residual("min_pairing_transposed_vs_commutant", rep.min_pairing_transposed_vs_commutant);
        for (name, v) in c.factorization_residuals() {
            f.residual(&format!("factorization_{name}"), *v);
        }
        f.check("commutant_cone", rep.passed);
        f.detail("commutant", &rep);
        if cfg.input.is_some() {
            let (file, _) = load(cfg, None)?;
            let xi = c.joint().vector(file.matrix())?;
            let v = cones::pn_intersection_membership(&c, &xi)?;
            f.verdict("input_in_intersection", v.inside);
            f.detail("input_membership", &v);
        }
    }
    Ok(f)
}

fn choi_cmd(cfg: &RunConfig) -> Result<Findings, Error> {
    let (h, shape) = if cfg.input.is_some() {
        let (file, shape) = load(cfg, None)?;
        (file.matrix(), require_shape(shape)?)
    } else {
        let d = cfg.require_dims()?;
        let t = MapTable::<f64>::transposition(d.dim_a);
        let shape = BipartiteShape::new(d.dim_a, d.dim_a)?;
        (choi::choi_matrix(&t), shape)
    };
    let tol = cfg.tolerance("psd");
    let mut f = Findings::default();
    let map = choi::map_from_choi_matrix(&h, shape)?;
    f.check("choi_round_trip_exact", choi::choi_matrix(&map) == h);
    let herm = map.is_hermiticity_preserving(tol);
    f.verdict("hermiticity_preserving", herm);
    if herm {
        let min = linalg::min_eigenvalue(&h);
        let min_gamma = linalg::min_eigenvalue(&linalg::partial_transpose(&h, shape, Subsystem::A)?);
        f.residual("choi_min_eig", min);
        f.residual("choi_partial_transpose_min_eig", min_gamma);
        f.verdict("completely_positive", min >= -tol);
        f.verdict("completely_copositive", min_gamma >= -tol);
        let op = Hermitian64::from_hermitian_part(h.clone());
        let pairing = choi::dual_pairing_test(&op, shape, cfg.samples_or(20), cfg.seed, true)?;
        f.residual("min_ppt_pairing", pairing.min_value);
        f.verdict("certified_not_decomposable", pairing.certified_negative);
        f.detail("pairing", &pairing);
    }
    f.detail("shape", &shape);
    Ok(f)
}

fn ppt_check(cfg: &RunConfig) -> Result<Findings, Error> {
    let (file, shape) = load(cfg, Some(MatrixKind::Density))?;
    let shape = require_shape(shape)?;
    let d = Density64::new(file.matrix())?;
    let tol = cfg.tolerance("psd");
    let gamma = linalg::partial_transpose(d.matrix(), shape, Subsystem::B)?;
    let min = linalg::min_eigenvalue(&gamma);
    let mut f = Findings::default();
    f.residual("min_eig_gamma", min);
    f.verdict("ppt", min >= -tol);
    if let Some(w) = optim::npt_witness(&d, shape)? {
        let value = linalg::hs_inner(w.matrix(), d.matrix()).re;
        f.residual("witness_value", value);
        f.detail("witness", &MatrixFile::new(w.matrix(), Some(shape), Some(MatrixKind::Hermitian)));
    }
    f.detail("ppt", &(min >= -tol));
    f.detail("min_eig_gamma", &min);
    Ok(f)
}

fn minimize(cfg: &RunConfig) -> Result<Findings, Error> {
    let (file, shape) = load(cfg, Some(MatrixKind::Hermitian))?;
    let shape = require_shape(shape)?;
    let h = Hermitian64::new(file.matrix())?;
    let mut spec = PptSetSpec::new(shape).with_seed(cfg.seed);
    spec.tol_feas = cfg.tolerance("feas");
    if let Some(it) = cfg.iters {
        spec.outer_iters = it;
    }
    let res = optim::min_trace_over_ppt(&h, &spec)?;
    let mut f = Findings::default();
    f.residual("value", res.value);
    f.residual("spread", res.spread);
    f.residual("feasibility_residual", res.trace.feasibility_residual);
    f.verdict("low_confidence", res.trace.low_confidence);
    f.check("minimizer_feasible", res.trace.feasibility_residual <= spec.tol_feas);
    f.detail("restart_values", &res.restart_values);
    f.detail("iterates", &res.trace.iterates);
    f.detail("step_rule", &res.trace.step_rule);
    f.detail("minimizer", &MatrixFile::new(res.minimizer.matrix(), Some(shape), Some(MatrixKind::Density)));
    Ok(f)
}

fn construct(cfg: &RunConfig) -> Result<Findings, Error> {
    let dims = cfg.require_dims()?;
    let c = cones::random_composite::<f64>(dims, cfg.seed)?;
    let samples = cfg.samples_or(10);
    let iters = cfg.iters.unwrap_or(constructions::SEPARABLE_ITERS);
    let threshold = cfg.tolerance("distance");
    let mut f = Findings::default();
    let (mut outside, mut density_ppt, mut candidates) = (0, 0, 0);
    let mut reports = Vec::new();
    let mut states = Vec::new();
    for s in 0..samples as u64 {
        let (d, mut rep) = constructions::construct_ppt_from_cone_with(&c, cfg.seed.wrapping_add(s), iters)?;
        rep.candidate = rep.cone_verdict.inside && rep.separable.upper_bound > threshold;
        outside += !rep.cone_verdict.inside as usize;
        density_ppt += rep.density_ppt as usize;
        candidates += rep.candidate as usize;
        if states.len() < constructions::MAX_COUNTEREXAMPLES {
            states.push(MatrixFile::new(d.matrix(), Some(dims), Some(MatrixKind::Density)));
        }
        reports.push(rep);
    }
    f.check("all_in_intersection", outside == 0);
    f.residual("min_cone_certificate", reports.iter().map(|r| r.cone_verdict.certificate).fold(f64::INFINITY, f64::min));
    f.detail("samples", &samples);
    f.detail("density_ppt", &density_ppt);
    f.detail("candidates", &candidates);
    f.detail("reports", &reports);
    f.detail("states", &states);
    Ok(f)
}

fn anticomm(cfg: &RunConfig) -> Result<Findings, Error> {
    let mut f = Findings::default();
    if cfg.input.is_some() {
        let (file, _) = load(cfg, Some(MatrixKind::Density))?;
        let rho = Density64::new(file.matrix())?;
        let e1 = nalgebra::DVector::from_vec(vec![Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]);
        let sys = constructions::anticommutator_system(&rho, &e1)?;
        f.detail("nullity", &sys.nullity);
        f.detail("singular_values", &sys.singular_values);
        match constructions::make_instance(rho, e1)? {
            Some(inst) => {
                let v = constructions::verify_anticommutator_ppt(&inst)?;
                f.residual("residual", v.residual);
                f.residual("min_eig_gamma", v.min_eig_gamma);
                f.verdict("degenerate", v.degenerate);
                f.check("conclusion_holds", !v.falsified);
                f.detail("instance", &inst.record());
            }
            None => f.verdict("solution_exists", false),
        }
        return Ok(f);
    }
    let dims = cfg.require_dims()?;
    if dims.dim_a != 2 {
        return Err(Error::Contract(format!("anticomm needs dimensions 2xM, got {dims}")));
    }
    let rep = constructions::anticommutator_suite::<f64>(dims.dim_b, cfg.samples_or(200), cfg.seed)?;
    f.residual("max_residual", rep.max_residual);
    for (class, t) in &rep.by_class {
        f.residual(&format!("min_eig_gamma_{class}"), t.min_eig_gamma);
        f.check(&format!("no_falsification_{class}"), t.falsifications == 0);
    }
    f.detail("suite", &rep);
    Ok(f)
}

fn experiment(cfg: &RunConfig) -> Result<Findings, Error> {
    let dims = cfg.require_dims()?;
    let rep = constructions::sqrt_ppt_experiment::<f64>(dims, cfg.samples_or(1000), cfg.seed)?;
    let mut f = Findings::default();
    f.residual("max_positive_control_residual", rep.max_positive_control_residual);
    f.check("positive_control", rep.positive_control_failures == 0);
    let mut reverified = 0.0f64;
    for c in &rep.counterexamples {
        reverified = reverified.max(c.reverify()?);
    }
    f.residual("counterexample_reverification", reverified);
    f.check("counterexamples_reverify", reverified <= 1e-9);
    f.detail("experiment", &rep);
    Ok(f)
}

fn hierarchy(cfg: &RunConfig) -> Result<Findings, Error> {
    let dims = cfg.require_dims()?;
    let rep = choi::hierarchy_report::<f64>(dims, cfg.seed)?;
    let mut f = Findings::default();
    f.residual("transposition_choi_min_eig", rep.transposition_choi_min_eig);
    f.residual("cp_stormer_min_eig", rep.cp_stormer_min_eig);
    f.residual("separable_min_pt_eig", rep.separable_min_pt_eig);
    f.residual("singlet_pt_min_eig", rep.singlet_pt_min_eig);
    f.check("hierarchy", rep.passed);
    f.detail("report", &rep);
    Ok(f)
}

/// Writes `m` as a matrix file; used by tests and scripts.
pub fn write_matrix(path: &Path, m: &CMatrix, shape: Option<BipartiteShape>, kind: Option<MatrixKind>) -> Result<(), Error> {
    io::save_matrix(path, &MatrixFile::new(m, shape, kind))
}
