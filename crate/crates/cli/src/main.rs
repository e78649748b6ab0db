//! `lfa-di`: analyze fixtures, simulate stochastic iterates, integrate the
//! limiting inclusion and draw partition figures.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 failed assumption or
//! integration failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use lfa_di::export::{di_trajectory_csv, raster_csv, read_trajectory_csv, render_svg, sa_trajectory_csv, Scene};
use lfa_di::fixture::{load_gordon_fixture, load_mdp_fixture, Loaded, MdpFixture};
use lfa_di::gordon::{
    diagonal_projection, gordon_equilibrium_segment, gordon_landmarks, gordon_run, DiagonalSegment,
    GordonField, GordonLandmarks, GordonRun, GordonSystem,
};
use lfa_di::sim::{run_many, RunManifest, SaRun, StepSizeSchedule};
use lfa_di::{
    analyze, classify_structure, enumerate_regions, find_equilibria, integrate_di, Algorithm,
    AlgorithmConfig, DiField, EnumerationMethod, EquilibriumCensus, Error, RasterGrid, Taxonomy,
    FIXTURE_SCHEMA_VERSION, TOOL_VERSION,
};

#[derive(Parser)]
#[command(name = "lfa-di", about = "Limiting dynamics of Q-learning and SARSA(0) with linear features")]
struct Cli {
    /// Print tool and fixture-schema versions.
    #[arg(long, short = 'V')]
    version: bool,

    /// Directory for relative output paths.
    #[arg(long, global = true, env = "LFA_DI_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Check assumptions, build regions and dynamics, find equilibria.
    Analyze(AnalyzeArgs),
    /// Run the stochastic recursion.
    Simulate(SimulateArgs),
    /// Integrate the limiting differential inclusion.
    Integrate(IntegrateArgs),
    /// Draw the partition diagram with trajectories and equilibria.
    Plot(PlotArgs),
    /// Rasterize the greedy-region partition.
    Partition(PartitionArgs),
    /// Gordon's chattering example.
    Gordon(GordonArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Q,
    Sarsa,
    Generic,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Q => Algorithm::Q,
            AlgoArg::Sarsa => Algorithm::Sarsa,
            AlgoArg::Generic => Algorithm::Generic,
        }
    }
}

#[derive(Args)]
struct AlgoOpts {
    /// Algorithm; q uses a greedy bootstrap action, sarsa an ε-greedy one.
    #[arg(long, value_enum, default_value = "q")]
    algo: AlgoArg,
    /// Behavior exploration rate (defaults to the fixture's).
    #[arg(long)]
    eps: Option<f64>,
    /// Bootstrap exploration rate, required for `generic`.
    #[arg(long)]
    eps_prime: Option<f64>,
}

impl AlgoOpts {
    fn config(&self, fx: &MdpFixture) -> Result<AlgorithmConfig, Error> {
        fx.config(self.algo.into(), self.eps, self.eps_prime)
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    fixture: PathBuf,
    #[command(flatten)]
    algo: AlgoOpts,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    fixture: PathBuf,
    #[command(flatten)]
    algo: AlgoOpts,
    /// Initial point, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Vec<f64>,
    #[arg(long, default_value_t = 20_000)]
    iters: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `harmonic:c,n0` or `constant:c`.
    #[arg(long, default_value = "harmonic:1,1")]
    schedule: StepSizeSchedule,
    /// Record every k-th iterate.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// Independent runs with seeds `seed, seed+1, …`, executed in parallel.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, default_value = "traj.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct IntegrateArgs {
    fixture: PathBuf,
    #[command(flatten)]
    algo: AlgoOpts,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Vec<f64>,
    #[arg(long, default_value_t = 50.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value = "di.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    fixture: PathBuf,
    #[command(flatten)]
    algo: AlgoOpts,
    /// Trajectory CSV (simulate or integrate output); repeatable.
    #[arg(long = "traj")]
    trajectories: Vec<PathBuf>,
    /// `xmin,xmax,ymin,ymax`; fitted to the content when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bounds: Vec<f64>,
    #[arg(long, default_value = "fig.svg")]
    out: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    fixture: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,5,-5,5")]
    bounds: Vec<f64>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, default_value = "raster.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct GordonArgs {
    /// Gordon fixture supplying defaults for the options below.
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    schedule: Option<StepSizeSchedule>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Vec<f64>,
    /// Record every k-th iterate.
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// Output directory, relative to `--out-dir`.
    #[arg(long, default_value = "gordon")]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Assumption(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_assumption_failure() {
            Failure::Assumption(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn resolve(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}

fn write(path: &Path, contents: &str) -> CmdResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::Input(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn load(path: &Path) -> Result<Loaded<MdpFixture>, Failure> {
    Ok(load_mdp_fixture(path)?)
}

fn theta0_or_zero(theta0: &[f64], d: usize) -> Result<Vec<f64>, Failure> {
    match theta0.len() {
        0 => Ok(vec![0.0; d]),
        n if n == d => Ok(theta0.to_vec()),
        n => Err(Failure::Input(format!("--theta0 has {n} components, features have {d}"))),
    }
}

fn cmd_analyze(out_dir: &Path, args: &AnalyzeArgs) -> CmdResult {
    let loaded = load(&args.fixture)?;
    let cfg = args.algo.config(&loaded.fixture)?;
    let report = analyze(&loaded.fixture, &loaded.sha256, &cfg)?;
    let path = resolve(out_dir, &args.out);
    write(&path, &to_json(&report))?;
    let failed = report.failed_assumptions();
    if !failed.is_empty() {
        let detail: Vec<String> = report
            .b4
            .entries
            .iter()
            .filter(|e| !e.pass)
            .map(|e| format!("policy {} margin {:e}", e.policy, e.pd_margin))
            .collect();
        return Err(Failure::Assumption(format!(
            "assumption {} failed{}",
            failed.join(", "),
            if detail.is_empty() { String::new() } else { format!(" ({})", detail.join("; ")) }
        )));
    }
    match (&report.taxonomy, &report.analysis_error) {
        (Some(t), _) => println!("{}: {t}", loaded.fixture.name),
        (None, Some(e)) => return Err(Failure::Assumption(e.clone())),
        (None, None) => {}
    }
    Ok(())
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn cmd_simulate(out_dir: &Path, args: &SimulateArgs) -> CmdResult {
    let loaded = load(&args.fixture)?;
    let fx = &loaded.fixture;
    let cfg = args.algo.config(fx)?;
    let (mdp, features) = (fx.mdp()?, fx.feature_map()?);
    let theta0 = theta0_or_zero(&args.theta0, features.dim())?;
    if args.runs == 0 {
        return Err(Failure::Input("--runs must be at least 1".into()));
    }
    let runs: Vec<SaRun> = (0..args.runs)
        .map(|k| SaRun {
            theta0: theta0.clone(),
            n_iters: args.iters,
            seed: args.seed.wrapping_add(k),
            cfg,
            schedule: args.schedule,
            record_stride: args.stride,
        })
        .collect();
    let results = run_many(&mdp, &features, &runs);
    let base = resolve(out_dir, &args.out);
    for (run, result) in runs.iter().zip(results) {
        let traj = result?;
        let path = if args.runs == 1 {
            base.clone()
        } else {
            let stem = base.file_stem().map_or("traj".into(), |s| s.to_string_lossy().into_owned());
            base.with_file_name(format!("{stem}_seed{}.csv", run.seed))
        };
        write(&path, &sa_trajectory_csv(&traj))?;
        let manifest = RunManifest::new(&fx.name, &loaded.sha256, run, &traj.summary);
        write(&manifest_path(&path), &to_json(&manifest))?;
        println!(
            "seed {}: final {:?}, tail mean {:?}, switches {}",
            run.seed, traj.summary.final_theta, traj.summary.tail_mean, traj.summary.region_switches
        );
    }
    Ok(())
}

fn cmd_integrate(out_dir: &Path, args: &IntegrateArgs) -> CmdResult {
    let loaded = load(&args.fixture)?;
    let fx = &loaded.fixture;
    let cfg = args.algo.config(fx)?;
    let (mdp, features) = (fx.mdp()?, fx.feature_map()?);
    let theta0 = theta0_or_zero(&args.theta0, features.dim())?;
    let field = DiField::build(&mdp, &features, &cfg)?;
    let traj = integrate_di(&field, &DVector::from_vec(theta0), args.t_end, args.tol)?;
    write(&resolve(out_dir, &args.out), &di_trajectory_csv(&traj))?;
    println!("terminal {:?} at t = {}", traj.terminal().as_slice(), traj.times.last().copied().unwrap_or(0.0));
    Ok(())
}

fn bounds_arg(v: &[f64]) -> Result<[f64; 4], Failure> {
    match v {
        [a, b, c, d] if a < b && c < d => Ok([*a, *b, *c, *d]),
        _ => Err(Failure::Input("bounds must be xmin,xmax,ymin,ymax with min < max".into())),
    }
}

/// Square window around the origin containing every point, with margin.
fn fit_bounds<'a>(points: impl Iterator<Item = &'a [f64; 2]>) -> [f64; 4] {
    let r = points.fold(1.0_f64, |m, p| m.max(p[0].abs()).max(p[1].abs())) * 1.2;
    [-r, r, -r, r]
}

fn cmd_plot(out_dir: &Path, args: &PlotArgs) -> CmdResult {
    let loaded = load(&args.fixture)?;
    let fx = &loaded.fixture;
    let cfg = args.algo.config(fx)?;
    let (mdp, features) = (fx.mdp()?, fx.feature_map()?);
    if features.dim() != 2 {
        return Err(Failure::Input(format!("plotting needs 2-dimensional features, got {}", features.dim())));
    }
    let field = DiField::build(&mdp, &features, &cfg)?;
    let census = find_equilibria(&field).ok();
    let mut scene = Scene::from_field(&field, census.as_ref(), [-1.0, 1.0, -1.0, 1.0])?;
    for path in &args.trajectories {
        let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        let states = read_trajectory_csv(&text)?;
        scene
            .add_trajectory(&states)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    scene.bounds = if args.bounds.is_empty() {
        fit_bounds(
            scene
                .trajectories
                .iter()
                .flatten()
                .chain(scene.landmarks.iter().map(|l| &l.point))
                .chain(scene.equilibria.iter().map(|e| &e.point)),
        )
    } else {
        bounds_arg(&args.bounds)?
    };
    write(&resolve(out_dir, &args.out), &render_svg(&scene)?)
}

fn cmd_partition(out_dir: &Path, args: &PartitionArgs) -> CmdResult {
    let loaded = load(&args.fixture)?;
    let features = loaded.fixture.feature_map()?;
    if features.dim() != 2 {
        return Err(Failure::Input(format!("rasterizing needs 2-dimensional features, got {}", features.dim())));
    }
    let [xmin, xmax, ymin, ymax] = bounds_arg(&args.bounds)?;
    let diagram = enumerate_regions(&features, EnumerationMethod::Exact2d)?;
    let grid = RasterGrid {
        xmin,
        xmax,
        ymin,
        ymax,
        n: args.grid,
    };
    let cells = diagram.raster(&features, &grid)?;
    write(&resolve(out_dir, &args.out), &raster_csv(&cells))?;
    println!("{} regions", diagram.regions.len());
    Ok(())
}

#[derive(Serialize)]
struct GordonReport {
    tool_version: String,
    eps: f64,
    landmarks: GordonLandmarks,
    segment: DiagonalSegment,
    census: EquilibriumCensus,
    taxonomy: Taxonomy,
    run: GordonRun,
    robbins_monro: bool,
    tail_mean: Vec<f64>,
    tail_eta: f64,
    tail_diagonal_distance: f64,
    tail_in_segment: bool,
    region_switches: u64,
    max_norm: f64,
    final_theta: Vec<f64>,
    final_eta: f64,
}

fn cmd_gordon(out_dir: &Path, args: &GordonArgs) -> CmdResult {
    let fx = args.fixture.as_deref().map(load_gordon_fixture).transpose()?.map(|l| l.fixture);
    let eps = args.eps.or(fx.as_ref().map(|f| f.eps)).unwrap_or(0.1);
    let iters = args.iters.or(fx.as_ref().map(|f| f.iters)).unwrap_or(100_000);
    let schedule = match (args.schedule, &fx) {
        (Some(s), _) => s,
        (None, Some(f)) => f.schedule()?,
        (None, None) => StepSizeSchedule::default(),
    };
    let theta0 = match (&args.theta0, &fx) {
        (t, _) if !t.is_empty() => t.clone(),
        (_, Some(f)) => f.theta0.clone(),
        _ => vec![0.0; 3],
    };
    let sys = GordonSystem::new(eps)?;
    let landmarks = gordon_landmarks(&sys)?;
    let segment = gordon_equilibrium_segment(&sys);
    let census = find_equilibria(&GordonField::new(sys.clone()))?;
    let run = GordonRun {
        theta0,
        n_iters: iters,
        seed: args.seed,
        schedule,
        record_stride: args.stride,
    };
    let result = gordon_run(&sys, &run)?;
    let summary = &result.trajectory.summary;
    let report = GordonReport {
        tool_version: TOOL_VERSION.into(),
        eps,
        landmarks,
        segment,
        taxonomy: classify_structure(&census),
        census,
        robbins_monro: schedule.is_robbins_monro(),
        tail_mean: summary.tail_mean.clone(),
        tail_eta: result.tail_eta,
        tail_diagonal_distance: result.tail_diagonal_distance,
        tail_in_segment: result.tail_in_segment,
        region_switches: summary.region_switches,
        max_norm: summary.max_norm,
        final_eta: diagonal_projection(&summary.final_theta).0,
        final_theta: summary.final_theta.clone(),
        run,
    };
    let dir = resolve(out_dir, &args.out);
    write(&dir.join("report.json"), &to_json(&report))?;
    write(&dir.join("traj.csv"), &sa_trajectory_csv(&result.trajectory))?;
    println!(
        "segment [{}, {}], tail eta {} (distance to diagonal {:e})",
        segment.lo, segment.hi, result.tail_eta, result.tail_diagonal_distance
    );
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    let Some(command) = &cli.command else {
        return Err(Failure::Input("no command given (see --help)".into()));
    };
    let out = &cli.out_dir;
    match command {
        Command::Analyze(a) => cmd_analyze(out, a),
        Command::Simulate(a) => cmd_simulate(out, a),
        Command::Integrate(a) => cmd_integrate(out, a),
        Command::Plot(a) => cmd_plot(out, a),
        Command::Partition(a) => cmd_partition(out, a),
        Command::Gordon(a) => cmd_gordon(out, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are input errors; exit code 2 is reserved.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.version {
        println!("lfa-di {TOOL_VERSION} (fixture schema {FIXTURE_SCHEMA_VERSION})");
        return ExitCode::SUCCESS;
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Assumption(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
