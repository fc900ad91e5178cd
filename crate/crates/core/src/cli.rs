//! Command-line front end: `fundamental`, `bound`, `attractor`, `figure`
//! (benchmark presets) and `rerun` (replay a recorded manifest). Every run
//! emits CSV data plus a TOML manifest sufficient to reproduce it
//! byte-for-byte.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attractor_estimator::{
    classify_report, direct_basin_probe, estimate_mu, find_roots, freeze_avg, freeze_sup,
    map_to_ellipsoid, splitting_value_search, write_root_table_csv, AttractorError,
    AttractorReport, EllipsoidSpec, SplitCriterion, TheoremCase,
};
use crate::bounds_engine::{
    auxiliary_solve, envelope_from_polynomial, linear_bound, linear_l_from_energy,
    write_bounds_csv, BoundTrajectory, BoundsError,
};
use crate::integrator::{integrate_ivp, IntegratorConfig};
use crate::linear_analysis::{
    compute_fundamental, estimate_max_lyapunov, spectral_floor, write_csv as write_fundamental_csv,
    AnalysisError, FundamentalData, Normalization,
};
use crate::system_model::{
    parse_config, to_config_string, vdp_preset, ModelError, QuasiPeriodicScalar, SystemSpec,
    VdpParams,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INCONCLUSIVE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<BoundsError> for CliError {
    fn from(e: BoundsError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<AttractorError> for CliError {
    fn from(e: AttractorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::integrator::IntegrateError> for CliError {
    fn from(e: crate::integrator::IntegrateError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("i/o error: {e}"))
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tvbound",
    about = "Solution bounds and attractor estimates for nonlinear time-varying systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NormArg {
    Identity,
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EnvelopeArg {
    Linear,
    Nonlinear,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sup,
    Avg,
    Numeric,
    Probe,
    All,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fundamental-matrix analysis: sigma_max/min, p, k and running averages
    Fundamental {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = NormArg::Frozen)]
        normalization: NormArg,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Actual norm vs the linear and nonlinear upper bounds
    Bound {
        config: PathBuf,
        /// Initial state, comma-separated components
        #[arg(long, default_value = "1,0")]
        x0: String,
        #[arg(long, value_enum, default_value_t = EnvelopeArg::Both)]
        envelope: EnvelopeArg,
        #[arg(long, default_value_t = 100.0)]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trapping/stability-region estimates and their nesting
    Attractor {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::All)]
        method: MethodArg,
        /// Probe direction, comma-separated components
        #[arg(long, default_value = "1,0")]
        direction: String,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce a benchmark figure: fig1, fig2.1, fig2.2, fig3.1, fig3.2,
    /// fig3.3 or fig4
    Figure {
        name: String,
        #[arg(long, default_value = "figures")]
        out_dir: PathBuf,
    },
    /// Replay a recorded run manifest
    Rerun { manifest: PathBuf },
}

#[derive(Debug, Serialize, Deserialize)]
struct IntegratorSettings {
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    grid_step: f64,
    escape_radius: f64,
}

impl From<&IntegratorConfig> for IntegratorSettings {
    fn from(c: &IntegratorConfig) -> Self {
        IntegratorSettings {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            max_step: c.max_step,
            grid_step: c.grid_step,
            escape_radius: c.escape_radius,
        }
    }
}

/// Recorded invocation; replaying `argv` with the same inputs reproduces the
/// output files byte-for-byte (all grids and seeds are fixed).
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    command: String,
    argv: Vec<String>,
    seed: u64,
    integrator: IntegratorSettings,
    resolved_config: Option<String>,
    outputs: Vec<String>,
    #[serde(default)]
    assumptions: Vec<String>,
}

pub fn run(args: &[String]) -> u8 {
    let mut argv = vec!["tvbound".to_string()];
    argv.extend(args.iter().cloned());
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with success status
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command, args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command, args: &[String]) -> Result<u8, CliError> {
    match command {
        Command::Fundamental { config, normalization, t_end, out } => {
            cmd_fundamental(config, *normalization, *t_end, out.as_deref(), args)
        }
        Command::Bound { config, x0, envelope, t_end, out } => {
            cmd_bound(config, x0, *envelope, *t_end, out.as_deref(), args)
        }
        Command::Attractor { config, method, direction, t_end, out } => {
            cmd_attractor(config, *method, direction, *t_end, out.as_deref(), args)
        }
        Command::Figure { name, out_dir } => cmd_figure(name, out_dir, args),
        Command::Rerun { manifest } => cmd_rerun(manifest),
    }
}

fn load_config(path: &Path) -> Result<SystemSpec, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("config not found: {}", path.display())));
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn parse_vector(text: &str, expected_dim: usize, what: &str) -> Result<DVector<f64>, CliError> {
    let components: Result<Vec<f64>, _> =
        text.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let components =
        components.map_err(|e| CliError::Usage(format!("cannot parse {what} '{text}': {e}")))?;
    if components.len() != expected_dim {
        return Err(CliError::Usage(format!(
            "{what} has {} components, system dimension is {expected_dim}",
            components.len()
        )));
    }
    Ok(DVector::from_vec(components))
}

fn forcing_grid(spec: &SystemSpec, fd: &FundamentalData) -> Vec<f64> {
    fd.times.iter().map(|&t| spec.forcing_norm(t)).collect()
}

fn write_manifest(
    csv_out: &Path,
    command: &str,
    args: &[String],
    spec: Option<&SystemSpec>,
    cfg: &IntegratorConfig,
    outputs: &[&Path],
    assumptions: &[String],
) -> Result<PathBuf, CliError> {
    let manifest = RunManifest {
        command: command.to_string(),
        argv: args.to_vec(),
        seed: 0,
        integrator: IntegratorSettings::from(cfg),
        resolved_config: spec.map(to_config_string),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        assumptions: assumptions.to_vec(),
    };
    let path = csv_out.with_extension("manifest.toml");
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| CliError::Numerical(format!("manifest serialization: {e}")))?;
    fs::write(&path, text)?;
    Ok(path)
}

fn cmd_rerun(manifest_path: &Path) -> Result<u8, CliError> {
    if !manifest_path.exists() {
        return Err(CliError::Usage(format!(
            "manifest not found: {}",
            manifest_path.display()
        )));
    }
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| CliError::Usage(format!("cannot read manifest: {e}")))?;
    let manifest: RunManifest =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid manifest: {e}")))?;
    Ok(run(&manifest.argv))
}

fn cmd_fundamental(
    config: &Path,
    normalization: NormArg,
    t_end: f64,
    out: Option<&Path>,
    args: &[String],
) -> Result<u8, CliError> {
    let spec = load_config(config)?;
    let cfg = IntegratorConfig::default();
    let norm = match normalization {
        NormArg::Identity => Normalization::Identity,
        NormArg::Frozen => Normalization::FrozenReference,
    };
    let fd = compute_fundamental(&spec, norm, spec.t0 + t_end, &cfg)?;

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("fundamental.csv"));
    let mut file = fs::File::create(&out)?;
    write_fundamental_csv(&fd, &mut file)?;
    write_manifest(&out, "fundamental", args, Some(&spec), &cfg, &[&out], &[])?;

    let chi = estimate_max_lyapunov(&fd, 0.25);
    let floor = spectral_floor(&fd);
    let mean_k = fd.k.iter().sum::<f64>() / fd.k.len() as f64;
    println!("wrote {}", out.display());
    println!("chi_bar_max = {chi:.6}");
    println!("spectral_floor = {floor:.6e}");
    println!("mean_k = {mean_k:.6}");
    Ok(EXIT_OK)
}

struct BoundRun {
    fd: FundamentalData,
    actual_norm: Vec<f64>,
    linear: Option<BoundTrajectory>,
    nonlinear: Option<BoundTrajectory>,
}

fn compute_bounds(
    spec: &SystemSpec,
    x0: &DVector<f64>,
    envelope: EnvelopeArg,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<BoundRun, CliError> {
    let fd = compute_fundamental(spec, Normalization::FrozenReference, spec.t0 + t_end, cfg)?;
    let forcing = forcing_grid(spec, &fd);

    let mut rhs = |t: f64, x: &DVector<f64>, out: &mut DVector<f64>| spec.eval_rhs_into(t, x, out);
    let actual = integrate_ivp(&mut rhs, spec.t0, x0, spec.t0 + t_end, cfg)?;
    let actual_norm = actual.norms();

    let linear = if matches!(envelope, EnvelopeArg::Linear | EnvelopeArg::Both) {
        let l = if spec.nonlinear.terms().is_empty() {
            0.0
        } else {
            linear_l_from_energy(spec, x0)?
        };
        Some(linear_bound(&fd, &QuasiPeriodicScalar::constant(l), &forcing, x0)?)
    } else {
        None
    };
    let nonlinear = if matches!(envelope, EnvelopeArg::Nonlinear | EnvelopeArg::Both) {
        let env = envelope_from_polynomial(&spec.nonlinear);
        let x0_scalar = fd.initial_scalar_bound(x0);
        Some(auxiliary_solve(&fd, &env, &forcing, x0_scalar, cfg)?)
    } else {
        None
    };
    Ok(BoundRun { fd, actual_norm, linear, nonlinear })
}

fn max_violation(actual: &[f64], bound: &BoundTrajectory) -> f64 {
    actual
        .iter()
        .zip(bound.values.iter())
        .map(|(&a, &b)| if b.is_finite() { a - b } else { f64::NEG_INFINITY })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn ratio_argmax(times: &[f64], actual: &[f64], bound: &BoundTrajectory) -> f64 {
    let mut best = (f64::NEG_INFINITY, times[0]);
    for i in 0..times.len() {
        if bound.values[i].is_finite() && actual[i] > 0.0 {
            let r = bound.values[i] / actual[i];
            if r > best.0 {
                best = (r, times[i]);
            }
        }
    }
    best.1
}

fn cmd_bound(
    config: &Path,
    x0_text: &str,
    envelope: EnvelopeArg,
    t_end: f64,
    out: Option<&Path>,
    args: &[String],
) -> Result<u8, CliError> {
    let spec = load_config(config)?;
    let x0 = parse_vector(x0_text, spec.linear.dimension(), "--x0")?;
    let cfg = IntegratorConfig::default();
    let run = compute_bounds(&spec, &x0, envelope, t_end, &cfg)?;

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("bound.csv"));
    let mut file = fs::File::create(&out)?;
    write_bounds_csv(
        &run.fd.times,
        Some(&run.actual_norm),
        run.linear.as_ref(),
        run.nonlinear.as_ref(),
        &mut file,
    )?;
    write_manifest(&out, "bound", args, Some(&spec), &cfg, &[&out], &[])?;

    println!("wrote {}", out.display());
    for (label, bound) in [("linear", &run.linear), ("nonlinear", &run.nonlinear)] {
        if let Some(b) = bound {
            println!("{label}_max_violation = {:.6e}", max_violation(&run.actual_norm, b));
            println!(
                "{label}_ratio_max_at_t = {:.4}",
                ratio_argmax(&run.fd.times, &run.actual_norm, b)
            );
            if let Some(t) = b.blowup_time {
                println!("{label}_bound_blowup_t = {t:.4}");
            }
        }
    }
    Ok(EXIT_OK)
}

struct AttractorRun {
    sup_report: Option<AttractorReport>,
    avg_report: Option<AttractorReport>,
    mu: Option<f64>,
    splitting_value: Option<f64>,
    probe_value: Option<f64>,
    /// Intercepts along the probe direction, by method label.
    intercepts: Vec<(&'static str, f64)>,
    ellipsoids: Vec<(&'static str, EllipsoidSpec)>,
    notes: Vec<String>,
}

fn report_radius(report: &AttractorReport) -> Option<f64> {
    report.basin_radius.filter(|&d| d > 0.0).or(report.trapping_level.filter(|&d| d > 0.0))
}

fn run_attractor(
    spec: &SystemSpec,
    method: MethodArg,
    direction: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<AttractorRun, CliError> {
    let fd = compute_fundamental(spec, Normalization::FrozenReference, spec.t0 + t_end, cfg)?;
    let forcing = forcing_grid(spec, &fd);
    let envelope = envelope_from_polynomial(&spec.nonlinear);
    let criterion = if spec.has_forcing() {
        SplitCriterion::StaysBounded
    } else {
        SplitCriterion::DecaysToZero
    };

    let mut out = AttractorRun {
        sup_report: None,
        avg_report: None,
        mu: None,
        splitting_value: None,
        probe_value: None,
        intercepts: Vec::new(),
        ellipsoids: Vec::new(),
        notes: Vec::new(),
    };

    let want = |m: MethodArg| method == m || method == MethodArg::All;

    if want(MethodArg::Sup) {
        let frozen = freeze_sup(&fd, &envelope, &forcing)?;
        let roots = find_roots(&frozen, frozen.default_scan_ceiling())?;
        let report = classify_report(&roots, &frozen, None)?;
        if let Some(r) = report_radius(&report) {
            let ell = map_to_ellipsoid(&fd, r)?;
            out.intercepts.push(("sup", ell.intercept_amplitude(direction)));
            out.ellipsoids.push(("sup", ell));
        } else {
            out.notes.push(format!("sup: no finite estimate ({})", report.case.label()));
        }
        out.sup_report = Some(report);
    }

    let mut x_guess = 1.0f64;
    if want(MethodArg::Avg) {
        let frozen = freeze_avg(&fd, &envelope, &forcing, t_end)?;
        let roots = find_roots(&frozen, frozen.default_scan_ceiling())?;
        let mut mu = 0.0f64;
        let mut reliable = true;
        for root in &roots.roots {
            let est = estimate_mu(&fd, &envelope, &forcing, root.value, root.class, cfg)?;
            reliable &= est.reliable;
            if est.mu.is_finite() {
                mu = mu.max(est.mu);
            }
        }
        if !reliable {
            out.notes.push("avg: mu estimate unreliable (early escape)".into());
        }
        let report = classify_report(&roots, &frozen, Some(mu))?;
        out.mu = Some(mu);
        if let Some(r) = report_radius(&report) {
            x_guess = r;
            let ell = map_to_ellipsoid(&fd, r)?;
            out.intercepts.push(("avg", ell.intercept_amplitude(direction)));
            out.ellipsoids.push(("avg", ell));
        } else {
            out.notes.push(format!("avg: no finite estimate ({})", report.case.label()));
        }
        out.avg_report = Some(report);
    }

    if want(MethodArg::Numeric) {
        match splitting_value_search(
            &fd,
            &envelope,
            &forcing,
            1e-2 * x_guess,
            10.0 * x_guess,
            criterion,
            cfg,
        ) {
            Ok(x_split) => {
                out.splitting_value = Some(x_split);
                let ell = map_to_ellipsoid(&fd, x_split)?;
                out.intercepts.push(("numeric", ell.intercept_amplitude(direction)));
                out.ellipsoids.push(("numeric", ell));
            }
            Err(e) => out.notes.push(format!("numeric: {e}")),
        }
    }

    if want(MethodArg::Probe) {
        let s_guess = out
            .intercepts
            .iter()
            .rev()
            .map(|&(_, s)| s)
            .next()
            .unwrap_or_else(|| x_guess / fd.initial_scalar_bound(&(direction / direction.norm())));
        match direct_basin_probe(
            spec,
            direction,
            0.1 * s_guess,
            5.0 * s_guess,
            t_end,
            criterion,
            cfg,
        ) {
            Ok(s) => {
                out.probe_value = Some(s);
                out.intercepts.push(("probe", s));
            }
            Err(e) => out.notes.push(format!("probe: {e}")),
        }
    }

    Ok(out)
}

fn cmd_attractor(
    config: &Path,
    method: MethodArg,
    direction_text: &str,
    t_end: f64,
    out: Option<&Path>,
    args: &[String],
) -> Result<u8, CliError> {
    let spec = load_config(config)?;
    let direction = parse_vector(direction_text, spec.linear.dimension(), "--direction")?;
    let cfg = IntegratorConfig::default();
    let run = run_attractor(&spec, method, &direction, t_end, &cfg)?;

    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("attractor.csv"));
    let mut file = fs::File::create(&out)?;
    let reports: Vec<&AttractorReport> =
        run.sup_report.iter().chain(run.avg_report.iter()).collect();
    write_root_table_csv(&reports, &mut file)?;

    let mut outputs: Vec<PathBuf> = vec![out.clone()];
    if spec.linear.dimension() == 2 {
        for (label, ell) in &run.ellipsoids {
            let path = out.with_extension(format!("boundary_{label}.csv"));
            let mut f = fs::File::create(&path)?;
            use std::io::Write;
            writeln!(f, "# angle [rad], intercept [1]")?;
            for (angle, s) in ell.boundary_polyline(256) {
                writeln!(f, "{angle:.12e},{s:.12e}")?;
            }
            outputs.push(path);
        }
    }
    let output_refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&out, "attractor", args, Some(&spec), &cfg, &output_refs, &[])?;

    println!("wrote {}", out.display());
    if let Some(mu) = run.mu {
        println!("mu = {mu:.6}");
    }
    if let Some(x) = run.splitting_value {
        println!("splitting_value = {x:.6}");
    }
    if let Some(s) = run.probe_value {
        println!("probe_value = {s:.6}");
    }
    for (label, s) in &run.intercepts {
        println!("intercept_{label} = {s:.6}");
    }
    // nesting summary: analytic <= numeric <= probe along the direction
    let mut prev: Option<(&str, f64)> = None;
    for &(label, s) in &run.intercepts {
        if let Some((plabel, ps)) = prev {
            println!("gap_{plabel}_to_{label} = {:.6}", s - ps);
        }
        prev = Some((label, s));
    }
    for note in &run.notes {
        println!("note: {note}");
    }

    let growth = |r: &Option<AttractorReport>| {
        r.as_ref().map_or(false, |rep| {
            matches!(rep.case, TheoremCase::Growth | TheoremCase::Inconclusive) || rep.inconclusive
        })
    };
    let any_estimate = !run.intercepts.is_empty();
    if !any_estimate && (growth(&run.sup_report) || growth(&run.avg_report)) {
        println!("verdict: no finite estimate");
        return Ok(EXIT_INCONCLUSIVE);
    }
    Ok(EXIT_OK)
}

// --- figure presets -------------------------------------------------------

fn fig2_params(a: f64) -> VdpParams {
    VdpParams {
        alpha2: 0.1,
        omega2: 2.0 * std::f64::consts::PI,
        a1: 0.5,
        a2: 0.5,
        r1: std::f64::consts::PI,
        r2: 7.0,
        a,
        ..Default::default()
    }
}

fn fig3_params(a1: f64, a: f64) -> VdpParams {
    VdpParams {
        alpha2: -0.05,
        a1,
        a2: a1,
        r1: 3.2 * std::f64::consts::PI,
        r2: 13.0,
        a,
        omega2: 8.0 * std::f64::consts::PI,
        ..Default::default()
    }
}

/// Initial state used for the Fig. 2 bound runs: small enough that the
/// nonlinear bound stays finite over the horizon (the source material does
/// not state the value used).
pub const FIG2_X0: [f64; 2] = [0.1, 0.1];

pub fn figure_spec(name: &str) -> Option<SystemSpec> {
    let params = match name {
        "fig1" => fig2_params(0.0),
        "fig2.1" => fig2_params(0.0),
        "fig2.2" => fig2_params(0.01),
        "fig3.1" => fig3_params(0.1, 0.01),
        "fig3.2" => fig3_params(5.0, 0.0),
        "fig3.3" | "fig4" => fig3_params(5.0, 0.05),
        _ => return None,
    };
    Some(vdp_preset(params))
}

fn cmd_figure(name: &str, out_dir: &Path, args: &[String]) -> Result<u8, CliError> {
    let spec = figure_spec(name)
        .ok_or_else(|| CliError::Usage(format!("unknown figure '{name}' (expected fig1, fig2.1, fig2.2, fig3.1, fig3.2, fig3.3 or fig4)")))?;
    fs::create_dir_all(out_dir)?;
    let cfg = IntegratorConfig::default();
    let stem = name.replace('.', "_");
    let csv = out_dir.join(format!("{stem}.csv"));
    let config_path = out_dir.join(format!("{stem}.config.toml"));
    fs::write(&config_path, to_config_string(&spec))?;
    let mut assumptions: Vec<String> = Vec::new();

    use std::io::Write;
    let code = match name {
        "fig1" => {
            let t_end = 200.0;
            let fd_id = compute_fundamental(&spec, Normalization::Identity, t_end, &cfg)?;
            let fd_fr = compute_fundamental(&spec, Normalization::FrozenReference, t_end, &cfg)?;
            let mut f = fs::File::create(&csv)?;
            writeln!(f, "# t [time], p_identity [1/time], p_bar_identity [1/time], p_frozen [1/time]")?;
            for i in 0..fd_id.times.len() {
                writeln!(
                    f,
                    "{:.12e},{:.12e},{:.12e},{:.12e}",
                    fd_id.times[i], fd_id.p[i], fd_id.p_bar[i], fd_fr.p[i]
                )?;
            }
            EXIT_OK
        }
        "fig2.1" | "fig2.2" => {
            let x0 = DVector::from_vec(FIG2_X0.to_vec());
            assumptions.push(format!("x0 = ({}, {}) (unstated in the source)", FIG2_X0[0], FIG2_X0[1]));
            let run = compute_bounds(&spec, &x0, EnvelopeArg::Both, 100.0, &cfg)?;
            let mut f = fs::File::create(&csv)?;
            write_bounds_csv(
                &run.fd.times,
                Some(&run.actual_norm),
                run.linear.as_ref(),
                run.nonlinear.as_ref(),
                &mut f,
            )?;
            EXIT_OK
        }
        "fig3.1" | "fig3.2" | "fig3.3" => {
            let direction = DVector::from_vec(vec![1.0, 0.0]);
            let run = run_attractor(&spec, MethodArg::All, &direction, 200.0, &cfg)?;
            let mut f = fs::File::create(&csv)?;
            let reports: Vec<&AttractorReport> =
                run.sup_report.iter().chain(run.avg_report.iter()).collect();
            write_root_table_csv(&reports, &mut f)?;
            for (label, ell) in &run.ellipsoids {
                let path = out_dir.join(format!("{stem}.boundary_{label}.csv"));
                let mut bf = fs::File::create(&path)?;
                writeln!(bf, "# angle [rad], intercept [1]")?;
                for (angle, s) in ell.boundary_polyline(256) {
                    writeln!(bf, "{angle:.12e},{s:.12e}")?;
                }
            }
            if let Some(mu) = run.mu {
                println!("mu = {mu:.6}");
            }
            for (label, s) in &run.intercepts {
                println!("intercept_{label} = {s:.6}");
            }
            for note in &run.notes {
                println!("note: {note}");
            }
            EXIT_OK
        }
        "fig4" => {
            let fd = compute_fundamental(&spec, Normalization::FrozenReference, 200.0, &cfg)?;
            let mut f = fs::File::create(&csv)?;
            writeln!(f, "# t [time], p [1/time], k [1], p_bar [1/time], k_bar [1]")?;
            for i in 0..fd.times.len() {
                writeln!(
                    f,
                    "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                    fd.times[i], fd.p[i], fd.k[i], fd.p_bar[i], fd.k_bar[i]
                )?;
            }
            EXIT_OK
        }
        _ => unreachable!(),
    };

    write_manifest(&csv, "figure", args, Some(&spec), &cfg, &[&csv, &config_path], &assumptions)?;
    println!("wrote {}", csv.display());
    Ok(code)
}
