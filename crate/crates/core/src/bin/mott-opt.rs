//! Command-line surface over scene files: approximation precompute,
//! static contact solves, accuracy sweeps, trajectory optimization, and
//! oracle-backed validation.
//!
//! Exit codes: 0 when the command's postcondition holds, 1 when a solve
//! or validation fails, 2 for usage, IO, parse, and schema problems.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use mott_opt::bodies::SmoothBody;
use mott_opt::mott::{mott_residual, solve_static_mott_traced, MottOptions};
use mott_opt::nlp::NlpStatus;
use mott_opt::scene::{
    approximate_scene, containment_stats, distance_sweep, parse_trajectory_csv, render_svg,
    sidecar_path, validate_trajectory, write_trajectory_csv, ApproxFile, GeometrySpec, Scene,
    SceneError,
};
use mott_opt::trajopt::solve_trajectory_restarts;

#[derive(Parser)]
#[command(name = "mott-opt", version, about = "Differentiable collision detection and collision-free trajectory optimization over scene files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute smoothing data for the scene's polytope bodies.
    Approximate(ApproximateArgs),
    /// Solve the static contact system for one body pair.
    Mott(MottArgs),
    /// Benchmark smoothed contact solves against exact hull distances.
    DistanceSweep(SweepArgs),
    /// Solve the scene's trajectory problem and write it as CSV.
    Trajopt(TrajoptArgs),
    /// Audit a trajectory CSV against its scene with the sampling oracle.
    Validate(ValidateArgs),
}

/// Failures split by exit code: a solve or validation that ran and came
/// back negative versus a problem with the inputs themselves.
enum CmdError {
    Failed(String),
    Input(String),
}

impl From<SceneError> for CmdError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. }
            | SceneError::Parse(_)
            | SceneError::Invalid(_)
            | SceneError::ApproximationMissing(_)
            | SceneError::Schema(_)
            | SceneError::Body(_) => CmdError::Input(e.to_string()),
            SceneError::TrajOpt(_) | SceneError::Mott(_) | SceneError::Oracle(_) => {
                CmdError::Failed(e.to_string())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Approximate(a) => run_approximate(&a),
        Command::Mott(a) => run_mott(&a),
        Command::DistanceSweep(a) => run_sweep(&a),
        Command::Trajopt(a) => run_trajopt(&a),
        Command::Validate(a) => run_validate(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Failed(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(CmdError::Input(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CmdError> {
    fs::write(path, text)
        .map_err(|e| CmdError::Input(format!("cannot write {}: {e}", path.display())))
}

/// The sidecar next to the scene file; only scenes with polytope bodies
/// require one to exist.
fn load_sidecar(scene: &Scene, scene_path: &Path) -> Result<ApproxFile, CmdError> {
    let path = sidecar_path(scene_path);
    if path.exists() {
        return Ok(ApproxFile::load(&path)?);
    }
    let needs = scene
        .bodies
        .iter()
        .any(|b| matches!(b.geometry, GeometrySpec::Polytope { .. }));
    if needs {
        Err(CmdError::Input(format!(
            "{} not found; run the approximate command first",
            path.display()
        )))
    } else {
        Ok(ApproxFile { bodies: Vec::new() })
    }
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let mut s = String::from("[");
    for (k, x) in v.iter().enumerate() {
        if k > 0 {
            s.push_str(", ");
        }
        write!(s, "{x:.6}").unwrap();
    }
    s.push(']');
    s
}

fn status_name(s: NlpStatus) -> &'static str {
    match s {
        NlpStatus::Converged => "converged",
        NlpStatus::MaxIterations => "max_iterations",
        NlpStatus::Stalled => "stalled",
    }
}

// ---------------------------------------------------------------------------
// approximate

#[derive(Args)]
struct ApproximateArgs {
    /// Scene file to read.
    #[arg(long)]
    scene: PathBuf,
    /// Report on this body only; the sidecar still covers every polytope.
    #[arg(long)]
    body: Option<String>,
    /// Interior samples per body for the containment report.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run_approximate(args: &ApproximateArgs) -> Result<(), CmdError> {
    let scene = Scene::load(&args.scene)?;
    if let Some(name) = &args.body {
        let k = scene
            .body_index(name)
            .ok_or_else(|| CmdError::Input(format!("scene has no body named \"{name}\"")))?;
        if !matches!(scene.bodies[k].geometry, GeometrySpec::Polytope { .. }) {
            return Err(CmdError::Input(format!(
                "body \"{name}\" is not a polytope; nothing to approximate"
            )));
        }
    }
    let approx = approximate_scene(&scene)?;
    let out = sidecar_path(&args.scene);
    write_file(&out, &approx.to_json())?;
    println!("wrote {}", out.display());
    let smooth = scene.smooth_bodies(&approx)?;
    for (b, sb) in scene.bodies.iter().zip(&smooth) {
        let SmoothBody::Superquad(sq) = sb else {
            continue;
        };
        if args.body.as_ref().is_some_and(|n| n != &b.name) {
            continue;
        }
        let stats = containment_stats(sq, args.samples, args.seed);
        println!(
            "{}: {} facets, ybar in [{:.6}, {:.6}], center {}, {}/{} interior samples, max facet excess {:.3e}",
            b.name,
            sq.offsets.nrows(),
            sq.ybar.min(),
            sq.ybar.max(),
            fmt_vec(&sq.center),
            stats.accepted,
            args.samples,
            stats.max_facet_excess,
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mott

#[derive(Args)]
struct MottArgs {
    /// Scene file to read.
    #[arg(long)]
    scene: PathBuf,
    /// Body pair as two comma-separated names; defaults to the scene's
    /// first resolved pair.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pair: Option<Vec<String>>,
    /// Also write the solution as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Residual tolerance of the contact solve.
    #[arg(long, default_value_t = 1e-8)]
    tol_feas: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

#[derive(Serialize)]
struct MottReport {
    pair: [String; 2],
    phi: f64,
    a: Vec<f64>,
    x_i: Vec<f64>,
    x_j: Vec<f64>,
    residual_inf: f64,
    iterations: usize,
    wall_ms: f64,
}

fn run_mott(args: &MottArgs) -> Result<(), CmdError> {
    let scene = Scene::load(&args.scene)?;
    let approx = load_sidecar(&scene, &args.scene)?;
    let smooth = scene.smooth_bodies(&approx)?;
    let (i, j) = match &args.pair {
        Some(names) => {
            let k = |n: &String| {
                scene
                    .body_index(n)
                    .ok_or_else(|| CmdError::Input(format!("scene has no body named \"{n}\"")))
            };
            let (i, j) = (k(&names[0])?, k(&names[1])?);
            if i == j {
                return Err(CmdError::Input(format!(
                    "pair names both resolve to \"{}\"",
                    names[0]
                )));
            }
            (i, j)
        }
        None => *scene
            .resolved_pairs()?
            .first()
            .ok_or_else(|| CmdError::Input("scene resolves no pairs".into()))?,
    };
    let pose_i = scene.bodies[i].initial_pose.to_pose();
    let pose_j = scene.bodies[j].initial_pose.to_pose();
    let opts = MottOptions {
        tol: args.tol_feas,
        max_iter: args.max_iter,
        enforce_uniqueness: true,
    };
    let t0 = Instant::now();
    let (v, iterations) = solve_static_mott_traced(&smooth[i], &pose_i, &smooth[j], &pose_j, &opts)
        .map_err(|e| CmdError::Failed(format!("contact solve failed: {e}")))?;
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let residual_inf = mott_residual(&smooth[i], &pose_i, &smooth[j], &pose_j, &v)
        .map_err(|e| CmdError::Failed(format!("residual evaluation failed: {e}")))?
        .inf_norm();
    println!("pair {}/{}", scene.bodies[i].name, scene.bodies[j].name);
    println!("phi {:.6}", v.phi);
    println!("a   {}", fmt_vec(&v.a));
    println!("x_i {}", fmt_vec(&v.x_i));
    println!("x_j {}", fmt_vec(&v.x_j));
    println!("residual {residual_inf:.3e}, {iterations} iterations, {wall_ms:.3} ms");
    if let Some(out) = &args.out {
        let report = MottReport {
            pair: [scene.bodies[i].name.clone(), scene.bodies[j].name.clone()],
            phi: v.phi,
            a: v.a.iter().copied().collect(),
            x_i: v.x_i.iter().copied().collect(),
            x_j: v.x_j.iter().copied().collect(),
            residual_inf,
            iterations,
            wall_ms,
        };
        write_file(out, &to_json(&report))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// distance-sweep

#[derive(Args)]
struct SweepArgs {
    /// Random polytope pairs to draw.
    #[arg(long, default_value_t = 120)]
    samples: usize,
    /// Smoothing exponents to benchmark.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 3, 5, 7, 9])]
    rho: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_sweep(args: &SweepArgs) -> Result<(), CmdError> {
    if args.samples == 0 {
        return Err(CmdError::Input("--samples must be positive".into()));
    }
    let rows = distance_sweep(args.samples, &args.rho, args.seed)?;
    let mut csv = String::from("rho,mean_solve_ms,mean_abs_pct_error,n_pairs,n_failed\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{:.3},{:.4},{},{}",
            r.rho, r.mean_solve_ms, r.mean_abs_pct_error, r.n_pairs, r.n_failed
        )
        .unwrap();
    }
    match &args.out {
        Some(out) => {
            write_file(out, &csv)?;
            eprintln!("wrote {}", out.display());
        }
        None => print!("{csv}"),
    }
    if let Some(r) = rows.iter().find(|r| r.n_failed == r.n_pairs) {
        return Err(CmdError::Failed(format!(
            "every pair failed to solve at rho {}",
            r.rho
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// trajopt

#[derive(Args)]
struct TrajoptArgs {
    /// Scene file to read.
    #[arg(long)]
    scene: PathBuf,
    /// Trajectory CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Also render the knot poses to an SVG here.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Override the scene's feasibility tolerance.
    #[arg(long)]
    tol_feas: Option<f64>,
    /// Override the scene's optimality tolerance.
    #[arg(long)]
    tol_opt: Option<f64>,
    /// Override the scene's outer-iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Serialize)]
struct TrajReport {
    status: &'static str,
    attempt: usize,
    horizon: usize,
    iterations: usize,
    outer_iterations: usize,
    wall_ms: f64,
    min_phi: f64,
    max_contact_residual: f64,
    csv: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    svg: Option<String>,
}

#[derive(Serialize)]
struct TrajDiagnostics {
    status: &'static str,
    attempt: usize,
    iterations: usize,
    outer_iterations: usize,
    feas_eq: f64,
    feas_ineq: f64,
    stationarity: f64,
    complementarity: f64,
    min_phi: f64,
    max_contact_residual: f64,
    violation_history: Vec<f64>,
}

fn run_trajopt(args: &TrajoptArgs) -> Result<(), CmdError> {
    let scene = Scene::load(&args.scene)?;
    let approx = load_sidecar(&scene, &args.scene)?;
    let spec = scene.to_trajopt_spec(&approx)?;
    let mut opts = scene
        .solver
        .as_ref()
        .map_or_else(Default::default, |s| s.to_options());
    if let Some(t) = args.tol_feas {
        opts.tol_feas = t;
    }
    if let Some(t) = args.tol_opt {
        opts.tol_opt = t;
    }
    if let Some(n) = args.max_iter {
        opts.max_outer = n;
    }
    let t0 = Instant::now();
    let (traj, attempt) = solve_trajectory_restarts(&spec, &opts, 9)
        .map_err(|e| CmdError::Failed(format!("trajectory solve failed: {e}")))?;
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let audit = traj
        .audit(&spec)
        .map_err(|e| CmdError::Failed(format!("trajectory audit failed: {e}")))?;
    let converged = matches!(traj.solution.status, NlpStatus::Converged);
    let clean = converged
        && audit.max_mott_residual <= 1e-6
        && audit.min_phi >= spec.phi_min - 1e-6
        && audit.endpoint_err_init <= 1e-6
        && audit.endpoint_err_final <= 1e-6
        && audit.max_velocity_excess <= 1e-6;
    if !clean {
        let diag = TrajDiagnostics {
            status: status_name(traj.solution.status),
            attempt,
            iterations: traj.solution.iterations,
            outer_iterations: traj.solution.outer_iterations,
            feas_eq: traj.solution.kkt_report.feas_eq,
            feas_ineq: traj.solution.kkt_report.feas_ineq,
            stationarity: traj.solution.kkt_report.stationarity,
            complementarity: traj.solution.kkt_report.complementarity,
            min_phi: audit.min_phi,
            max_contact_residual: audit.max_mott_residual,
            violation_history: traj.solution.violation_history.clone(),
        };
        let diag_path = args.out.with_extension("diag.json");
        write_file(&diag_path, &to_json(&diag))?;
        return Err(CmdError::Failed(format!(
            "trajectory solve did not reach a clean solution (status {}, best attempt {}); diagnostics in {}",
            diag.status,
            attempt,
            diag_path.display()
        )));
    }
    write_file(&args.out, &write_trajectory_csv(&scene, &spec, &traj)?)?;
    let svg = match &args.svg {
        Some(path) => {
            let knot_poses: Vec<_> = traj.knots.iter().map(|k| spec.poses_at(k)).collect();
            write_file(path, &render_svg(&scene, &knot_poses)?)?;
            Some(path.display().to_string())
        }
        None => None,
    };
    let report = TrajReport {
        status: status_name(traj.solution.status),
        attempt,
        horizon: spec.horizon,
        iterations: traj.solution.iterations,
        outer_iterations: traj.solution.outer_iterations,
        wall_ms,
        min_phi: audit.min_phi,
        max_contact_residual: audit.max_mott_residual,
        csv: args.out.display().to_string(),
        svg,
    };
    print!("{}", to_json(&report));
    Ok(())
}

// ---------------------------------------------------------------------------
// validate

#[derive(Args)]
struct ValidateArgs {
    /// Trajectory CSV to audit.
    traj: PathBuf,
    /// Scene file the trajectory belongs to.
    #[arg(long)]
    scene: PathBuf,
    /// Sampling positions per knot interval.
    #[arg(long, default_value_t = 10)]
    upsample: usize,
    /// Interior samples per body per position.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_validate(args: &ValidateArgs) -> Result<(), CmdError> {
    if args.upsample == 0 {
        return Err(CmdError::Input("--upsample must be positive".into()));
    }
    let scene = Scene::load(&args.scene)?;
    let approx = load_sidecar(&scene, &args.scene)?;
    let text = fs::read_to_string(&args.traj)
        .map_err(|e| CmdError::Input(format!("cannot read {}: {e}", args.traj.display())))?;
    let parsed = parse_trajectory_csv(&scene, &text)?;
    let report = validate_trajectory(&scene, &approx, &parsed, args.upsample, args.samples)?;
    let json = to_json(&report);
    print!("{json}");
    if let Some(out) = &args.out {
        write_file(out, &json)?;
    }
    if report.pass {
        return Ok(());
    }
    let mut reasons = Vec::new();
    for p in &report.pairs {
        let name = format!("{}/{}", p.bodies[0], p.bodies[1]);
        if p.min_phi_csv < -1e-6 {
            reasons.push(format!("{name}: recorded clearance {:.6}", p.min_phi_csv));
        }
        if p.max_phi_mismatch > 1e-4 {
            reasons.push(format!(
                "{name}: recorded clearance off by {:.3e} from a fresh solve",
                p.max_phi_mismatch
            ));
        }
        if !p.overlap_positions.is_empty() {
            reasons.push(format!(
                "{name}: interior overlap at knots {:?}, positions {:?}",
                p.overlap_knots, p.overlap_positions
            ));
        }
        if !p.solve_failures.is_empty() {
            reasons.push(format!(
                "{name}: static solve failed at knots {:?}",
                p.solve_failures
            ));
        }
    }
    Err(CmdError::Failed(format!(
        "validation failed: {}",
        reasons.join("; ")
    )))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
