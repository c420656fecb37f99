//! Command-line front end: `param` (ball parameterization), `omt`
//! (transport-cost refinement), `check` (property suites on a mesh), and
//! `gen` (synthetic meshes).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use ballmap::boundary;
use ballmap::io::{self, MeshSource, SyntheticKind};
use ballmap::laplacian;
use ballmap::linsolve::SolverKind;
use ballmap::mesh::{folding_count, BoundaryMap, TetMesh, Vec3, VertexMap};
use ballmap::report::{self, MeshStats, RunReport};
use ballmap::vomt::{self, Accel, VomtConfig};
use ballmap::vsem::{self, InitialLaplacian, VsemConfig};

#[derive(Parser)]
#[command(
    name = "ballmap",
    about = "Volume-preserving ball parameterizations of tetrahedral meshes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a volume-/mass-preserving ball parameterization.
    Param(ParamArgs),
    /// Refine the parameterization into an optimal-mass-transport map.
    Omt(OmtArgs),
    /// Run the property and diagnostic suites on a mesh.
    Check(CheckArgs),
    /// Generate synthetic meshes.
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Direct,
    Cg,
}

impl From<SolverArg> for SolverKind {
    fn from(value: SolverArg) -> Self {
        match value {
            SolverArg::Direct => SolverKind::Direct,
            SolverArg::Cg => SolverKind::ConjugateGradient,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AccelArg {
    None,
    Nesterov,
    Fista,
}

impl From<AccelArg> for Accel {
    fn from(value: AccelArg) -> Self {
        match value {
            AccelArg::None => Accel::None,
            AccelArg::Nesterov => Accel::Nesterov,
            AccelArg::Fista => Accel::Fista,
        }
    }
}

#[derive(Args)]
struct InputArgs {
    /// Mesh file (.msh, .vtk, .node/.ele pair).
    mesh: PathBuf,
    /// Per-tet density file (measure becomes density times volume).
    #[arg(long)]
    density: Option<PathBuf>,
    /// Boundary map: `auto` or `file:PATH`.
    #[arg(long, default_value = "auto")]
    boundary: String,
    /// Refinement passes of the automatic boundary map.
    #[arg(long, default_value_t = 50)]
    boundary_refine: usize,
    /// Skip the measure normalization to the unit-ball volume.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args)]
struct OutputArgs {
    /// Write the run report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-iteration history (CSV).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Write the mapped mesh (.msh or .vtk).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock timing in the report (makes reports
    /// nondeterministic between runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct ParamArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Energy-decrease tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Maximum solver iterations (up to 900 with --diagnostic).
    #[arg(long, default_value_t = 5)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "direct")]
    solver: SolverArg,
    /// Long-horizon run recording every iterate; enables the spectral panel.
    #[arg(long)]
    diagnostic: bool,
    /// Convergence panel output (CSV; a JSON summary is written alongside).
    #[arg(long)]
    panel: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OmtArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Acceleration mode.
    #[arg(long, value_enum, default_value = "fista")]
    accel: AccelArg,
    /// Cost-decrease tolerance.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Maximum outer iterations.
    #[arg(long, default_value_t = 2)]
    max_iter: usize,
    /// Maximum iterations of the inner projection solver.
    #[arg(long, default_value_t = 5)]
    inner_max_iter: usize,
    /// Energy-decrease tolerance of the inner projection solver.
    #[arg(long, default_value_t = 1e-9)]
    inner_tol: f64,
    #[arg(long, value_enum, default_value = "direct")]
    solver: SolverArg,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Seed for the randomized property checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the pass/fail summary (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["ball", "single_tet", "convex"])))]
struct GenArgs {
    /// Unit-ball mesh from a warped cube grid.
    #[arg(long)]
    ball: bool,
    /// The reference tetrahedron.
    #[arg(long)]
    single_tet: bool,
    /// Randomized convex mesh (seeded linear image of the ball).
    #[arg(long)]
    convex: bool,
    /// Grid refinement (cells per axis).
    #[arg(long, default_value_t = 3)]
    refine: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output mesh path (.msh or .vtk).
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Param(args) => run_param(args),
        Command::Omt(args) => run_omt(args),
        Command::Check(args) => run_check(args),
        Command::Gen(args) => run_gen(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn load_input(input: &InputArgs) -> ballmap::Result<(TetMesh, BoundaryMap)> {
    let source = MeshSource::from_path(&input.mesh)?;
    let mesh = io::load_or_build(&source, input.density.as_deref())?;
    let mesh = if input.no_normalize {
        mesh
    } else {
        mesh.normalize_total_measure()
    };
    let boundary = match input.boundary.as_str() {
        "auto" => boundary::compute(&mesh, input.boundary_refine)?,
        spec => match spec.strip_prefix("file:") {
            Some(path) => io::read_boundary_map(Path::new(path), &mesh)?,
            None => {
                return Err(ballmap::Error::Invalid(format!(
                    "--boundary must be 'auto' or 'file:PATH', got '{spec}'"
                )))
            }
        },
    };
    Ok((mesh, boundary))
}

fn run_param(args: ParamArgs) -> ballmap::Result<ExitCode> {
    let started = std::time::Instant::now();
    let (mesh, bnd) = load_input(&args.input)?;
    let max_iter = args.max_iter.min(900);
    let config = VsemConfig {
        tolerance: args.tol,
        max_iters: max_iter,
        solver: args.solver.into(),
    };

    let (map, rows, termination) = if args.diagnostic {
        let history = vsem::run_recorded(
            &mesh,
            &bnd,
            config.solver,
            config.max_iters,
            InitialLaplacian::Identity,
        )?;
        if let Some(panel_path) = &args.panel {
            let panel = ballmap::diagnostics::convergence_panel(&mesh, &history, true)?;
            std::fs::write(panel_path, panel.to_csv())
                .map_err(|e| ballmap::Error::io(panel_path, e))?;
            let json_path = panel_path.with_extension("json");
            let json = format!(
                "{}\n",
                serde_json::to_string_pretty(&panel).expect("panel serializes")
            );
            std::fs::write(&json_path, json).map_err(|e| ballmap::Error::io(&json_path, e))?;
        }
        let rows = diagnostic_rows(&mesh, &history);
        let map = history.last().expect("nonempty history").clone();
        (map, rows, "diagnostic-horizon".to_string())
    } else {
        let (map, rep) = vsem::run(&mesh, &bnd, &config, InitialLaplacian::Identity)?;
        let rows = report::history_rows(&rep);
        let term = enum_name(&rep.termination);
        (map, rows, term)
    };

    if let Some(history_path) = &args.output.history {
        report::write_history(history_path, &rows, false)?;
    }
    if let Some(out) = &args.output.out {
        io::write_mesh(out, &mesh, Some(&map))?;
    }
    let sf = laplacian::stretch_factors(&mesh, &map);
    let run_report = RunReport {
        schema_version: report::SCHEMA_VERSION,
        mode: "param".into(),
        mesh: MeshStats::of(&mesh),
        config: serde_json::json!({
            "tolerance": config.tolerance,
            "max_iters": config.max_iters,
            "solver": config.solver,
            "boundary": args.input.boundary,
            "boundary_refine": args.input.boundary_refine,
            "diagnostic": args.diagnostic,
        }),
        stretch_mean: sf.mean,
        stretch_std: sf.std,
        energy: rows.last().map(|r| r.energy).unwrap_or(0.0),
        cost: None,
        foldings: folding_count(&mesh, &map),
        termination,
        timing_seconds: args.output.timing.then(|| started.elapsed().as_secs_f64()),
        history_files: args
            .output
            .history
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        notes: vec![],
    };
    if let Some(path) = &args.output.report {
        run_report.write(path)?;
    } else {
        print!("{}", run_report.to_json());
    }
    Ok(ExitCode::SUCCESS)
}

fn diagnostic_rows(mesh: &TetMesh, history: &[VertexMap]) -> Vec<report::HistoryRow> {
    history
        .iter()
        .enumerate()
        .map(|(m, map)| {
            let sf = laplacian::stretch_factors(mesh, map);
            report::HistoryRow {
                iter: m,
                energy: laplacian::energy(mesh, map),
                eps_norm: (m > 0).then(|| {
                    map.interleaved_diff(&history[m - 1])
                        .iter()
                        .map(|e| e * e)
                        .sum::<f64>()
                        .sqrt()
                }),
                sigma_mean: sf.mean,
                sigma_std: sf.std,
                cost: None,
            }
        })
        .collect()
}

fn run_omt(args: OmtArgs) -> ballmap::Result<ExitCode> {
    let started = std::time::Instant::now();
    let (mesh, bnd) = load_input(&args.input)?;
    let config = VomtConfig {
        tolerance: args.tol,
        max_iters: args.max_iter,
        accel: args.accel.into(),
        inner: VsemConfig {
            tolerance: args.inner_tol,
            max_iters: args.inner_max_iter,
            solver: args.solver.into(),
        },
    };
    let (map, rep) = vomt::run(&mesh, &bnd, &config)?;
    let rows = report::vomt_history_rows(&rep);

    if let Some(history_path) = &args.output.history {
        report::write_history(history_path, &rows, true)?;
    }
    if let Some(out) = &args.output.out {
        io::write_mesh(out, &mesh, Some(&map))?;
    }
    let sf = laplacian::stretch_factors(&mesh, &map);
    let nu = vomt::vertex_measure(&mesh);
    let run_report = RunReport {
        schema_version: report::SCHEMA_VERSION,
        mode: "omt".into(),
        mesh: MeshStats::of(&mesh),
        config: serde_json::to_value(&config).expect("config serializes"),
        stretch_mean: sf.mean,
        stretch_std: sf.std,
        energy: laplacian::energy(&mesh, &map),
        cost: Some(vomt::cost(&mesh, &map, &nu)),
        foldings: rep.foldings,
        termination: enum_name(&rep.termination),
        timing_seconds: args.output.timing.then(|| started.elapsed().as_secs_f64()),
        history_files: args
            .output
            .history
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        notes: vec![
            "boundary map: area-preserving substitute (no boundary transport optimization)"
                .to_string(),
        ],
    };
    if let Some(path) = &args.output.report {
        run_report.write(path)?;
    } else {
        print!("{}", run_report.to_json());
    }
    Ok(ExitCode::SUCCESS)
}

fn enum_name<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "unknown".to_string())
}

fn run_gen(args: GenArgs) -> ballmap::Result<ExitCode> {
    let kind = if args.ball {
        SyntheticKind::Ball {
            refine: args.refine,
        }
    } else if args.single_tet {
        SyntheticKind::SingleTet
    } else {
        SyntheticKind::RandomConvex {
            refine: args.refine,
            seed: args.seed,
        }
    };
    let mesh = io::load_or_build(&MeshSource::Synthetic(kind), None)?;
    io::write_mesh(&args.out, &mesh, None)?;
    eprintln!(
        "wrote {} ({} vertices, {} tets)",
        args.out.display(),
        mesh.vertex_count(),
        mesh.tet_count()
    );
    Ok(ExitCode::SUCCESS)
}

// ---- check: property suites on a user mesh ----

#[derive(serde::Serialize)]
struct CheckOutcome {
    name: String,
    passed: bool,
    detail: String,
}

fn run_check(args: CheckArgs) -> ballmap::Result<ExitCode> {
    use rand::Rng;
    use rand::SeedableRng;

    let source = MeshSource::from_path(&args.input.mesh)?;
    let mesh = io::load_or_build(&source, args.input.density.as_deref())?;
    let mesh = mesh.normalize_total_measure();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut outcomes: Vec<CheckOutcome> = Vec::new();

    let random_map = |rng: &mut rand_chacha::ChaCha8Rng| {
        VertexMap::new(
            (0..mesh.vertex_count())
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                })
                .collect(),
        )
    };

    // energy identity: trace form against the per-tet form
    {
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let map = random_map(&mut rng);
            let e_trace = laplacian::energy(&mesh, &map);
            let e_per_tet: f64 = mesh
                .tets()
                .iter()
                .enumerate()
                .map(|(t, tet)| {
                    let v = ballmap::signed_volume(&map.tet_images(tet));
                    3.0 * v * v / (2.0 * mesh.measures()[t])
                })
                .sum();
            worst = worst.max((e_trace - e_per_tet).abs() / e_per_tet.max(1.0));
        }
        outcomes.push(CheckOutcome {
            name: "energy-identity".into(),
            passed: worst <= 1e-10,
            detail: format!("max relative deviation {worst:.3e} (limit 1e-10)"),
        });
    }

    // gradient against central finite differences on sampled entries
    {
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let map = random_map(&mut rng);
            let grad = laplacian::energy_gradient(&mesh, &map);
            let norm: f64 = grad.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
            let h = 1e-5;
            for _ in 0..20 {
                let t = rng.random_range(0..mesh.vertex_count());
                let s = rng.random_range(0..3);
                let mut plus = map.clone();
                plus.coords_mut()[t][s] += h;
                let mut minus = map.clone();
                minus.coords_mut()[t][s] -= h;
                let fd = (laplacian::energy(&mesh, &plus) - laplacian::energy(&mesh, &minus))
                    / (2.0 * h);
                worst = worst.max((fd - grad[t][s]).abs() / norm);
            }
        }
        outcomes.push(CheckOutcome {
            name: "gradient-finite-differences".into(),
            passed: worst <= 1e-6,
            detail: format!("max relative deviation {worst:.3e} (limit 1e-6)"),
        });
    }

    // linearized weight differences against direct differences
    {
        let lap = laplacian::StretchLaplacian::assemble(&mesh, &VertexMap::identity(&mesh));
        let edges = lap.edges();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let prev = random_map(&mut rng);
            let curr = random_map(&mut rng);
            let (i, j) = edges[rng.random_range(0..edges.len())];
            let lin = ballmap::diagnostics::weight_difference(&mesh, &prev, &curr, (i, j));
            let direct = direct_weight(&mesh, &curr, i, j) - direct_weight(&mesh, &prev, i, j);
            worst = worst.max((lin - direct).abs() / direct.abs().max(1.0));
        }
        outcomes.push(CheckOutcome {
            name: "weight-difference-oracle".into(),
            passed: worst <= 1e-10,
            detail: format!("max relative deviation {worst:.3e} (limit 1e-10)"),
        });
    }

    // transfer recursion on small meshes
    if 3 * mesh.vertex_count() <= ballmap::diagnostics::TRANSFER_SIZE_LIMIT {
        let bnd = boundary::compute(&mesh, 30)?;
        let history =
            vsem::run_recorded(&mesh, &bnd, SolverKind::Direct, 10, InitialLaplacian::Identity)?;
        let mut worst = 0.0f64;
        for m in 1..history.len() - 1 {
            let op = ballmap::diagnostics::assemble_transfer(
                &mesh,
                &history[m - 1],
                &history[m],
                &bnd,
            )?;
            let eps = history[m].interleaved_diff(&history[m - 1]);
            let eps_next = history[m + 1].interleaved_diff(&history[m]);
            let predicted = op.apply(&eps);
            let err: f64 = predicted
                .iter()
                .zip(&eps_next)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = eps_next.iter().map(|e| e * e).sum::<f64>().sqrt();
            if scale > 0.0 {
                worst = worst.max(err / scale);
            }
        }
        outcomes.push(CheckOutcome {
            name: "transfer-recursion".into(),
            passed: worst <= 1e-8,
            detail: format!("max relative deviation {worst:.3e} (limit 1e-8)"),
        });
    } else {
        outcomes.push(CheckOutcome {
            name: "transfer-recursion".into(),
            passed: true,
            detail: "skipped: mesh above the dense size guard".into(),
        });
    }

    let all_passed = outcomes.iter().all(|o| o.passed);
    let summary = serde_json::json!({
        "mesh": MeshStats::of(&mesh),
        "seed": args.seed,
        "checks": outcomes,
        "all_passed": all_passed,
    });
    let text = format!("{}\n", serde_json::to_string_pretty(&summary).unwrap());
    match &args.report {
        Some(path) => std::fs::write(path, &text).map_err(|e| ballmap::Error::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn direct_weight(mesh: &TetMesh, map: &VertexMap, gi: usize, gj: usize) -> f64 {
    let mut acc = 0.0;
    for (t, tet) in mesh.tets().iter().enumerate() {
        if let (Some(a), Some(b)) = (
            tet.iter().position(|&v| v == gi),
            tet.iter().position(|&v| v == gj),
        ) {
            acc += laplacian::edge_weight(&map.tet_images(tet), mesh.measures()[t], (a, b))
                .expect("positive measure");
        }
    }
    acc
}
