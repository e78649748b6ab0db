//! Acceptance checks, one line per criterion. Runs as its own binary so the
//! report prints in order and the exit status reflects every criterion.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use lfa_di::gordon::hull_contains_zero;
use lfa_di::sim::seeded_rng;
use lfa_di::{
    analyze, enumerate_regions, gordon_equilibrium_segment, gordon_landmarks, gordon_run,
    greedy_policy_of, integrate_di, load_gordon_fixture, load_mdp_fixture, run_many, AnalysisReport,
    DiField, EnumerationMethod, EquilibriumKind, GordonRun, GordonSystem, MdpFixture, PieceDynamics,
    PiecewiseAffineField, SaModel, SaRun, SaTrajectory, Stability, StepSizeSchedule, Taxonomy,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const FIXTURES: [&str; 4] = ["b1", "b2", "b3", "b4"];

// Pinned tolerances.
const TAIL_TOL: f64 = 0.1;
const SLIDE_NORMAL_TOL: f64 = 1e-8;
const SLIDE_TERMINAL_TOL: f64 = 1e-6;
const ERGODIC_MIN: f64 = 1e-12;
const GORDON_RESIDUAL_TOL: f64 = 1e-12;
const GORDON_DIAG_TOL: f64 = 0.05;
const STABILITY_BOUND: f64 = 1e3;
const MC_SIGMAS: f64 = 4.0;
const MC_SAMPLES: usize = 1_000_000;

// Run parameters. The harmonic schedule is `c / (n + n0)`.
const B3_SCHEDULE: &str = "harmonic:10,10";
const B3_ITERS: u64 = 20_000;
const B4_SCHEDULE: &str = "harmonic:20,100";
const B4_ITERS: u64 = 8_000_000;
const B4_SEEDS: [u64; 3] = [0, 1, 2];
const GORDON_SEEDS: u64 = 10;

type Outcome = Result<String, String>;

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.json"))
}

fn load(name: &str) -> (MdpFixture, String) {
    let l = load_mdp_fixture(fixture_path(name)).expect("fixture loads");
    (l.fixture, l.sha256)
}

fn report(name: &str, preset: &str) -> AnalysisReport {
    let (fx, sha) = load(name);
    analyze(&fx, &sha, &fx.preset_config(preset).unwrap()).unwrap()
}

fn field(name: &str, preset: &str) -> DiField {
    let (fx, _) = load(name);
    DiField::build(&fx.mdp().unwrap(), &fx.feature_map().unwrap(), &fx.preset_config(preset).unwrap()).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sa_runs(name: &str, preset: &str, seeds: &[u64], iters: u64, schedule: &str, stride: u64) -> Vec<SaTrajectory> {
    let (fx, _) = load(name);
    let (mdp, features) = (fx.mdp().unwrap(), fx.feature_map().unwrap());
    let cfg = fx.preset_config(preset).unwrap();
    let runs: Vec<SaRun> = seeds
        .iter()
        .map(|&seed| SaRun {
            theta0: vec![0.0; features.dim()],
            n_iters: iters,
            seed,
            cfg,
            schedule: schedule.parse().unwrap(),
            record_stride: stride,
        })
        .collect();
    run_many(&mdp, &features, &runs).into_iter().map(|r| r.unwrap()).collect()
}

fn sliding_point(r: &AnalysisReport) -> Option<Vec<f64>> {
    r.equilibria
        .as_ref()?
        .points
        .iter()
        .find(|e| e.stability == Stability::SlidingAttractor)
        .map(|e| e.location.clone())
}

fn c1_b1_two_regions() -> Outcome {
    let r = report("b1", "q");
    ensure(r.regions.n_regions == 2, || format!("{} regions", r.regions.n_regions))?;
    // Two regions in the plane split by one line through the origin: each is
    // cut out by the same normal, up to sign.
    let field = field("b1", "q");
    ensure(field.boundaries().len() == 1 && field.boundaries()[0].rays.len() == 2, || {
        "regions are not complementary halfspaces".into()
    })?;
    let rays = &field.boundaries()[0].rays;
    ensure((&rays[0] + &rays[1]).norm() < 1e-12, || "boundary is not a full line".into())?;
    ensure(r.pieces.iter().all(|p| p.self_consistent), || "a landmark is not self-consistent".into())?;
    let eq = r.equilibria.as_ref().ok_or("no equilibrium analysis")?;
    let stable_interior = eq
        .points
        .iter()
        .filter(|e| e.kind == EquilibriumKind::InteriorLandmark && e.stability == Stability::Stable)
        .count();
    let unstable_boundary = eq
        .points
        .iter()
        .filter(|e| e.kind == EquilibriumKind::BoundaryEquilibrium && e.stability == Stability::Unstable)
        .count();
    ensure(eq.points.len() == 3 && stable_interior == 2 && unstable_boundary == 1 && eq.segments.is_empty(), || {
        format!("equilibria {:?}", eq.points)
    })?;
    ensure(r.taxonomy == Some(Taxonomy::MultipleAttractors), || format!("{:?}", r.taxonomy))?;
    Ok("2 halfspaces, 2 stable landmarks + 1 unstable boundary point, multiple-attractors".into())
}

fn c2_b2_sliding() -> Outcome {
    let r = report("b2", "q");
    let eq = r.equilibria.as_ref().ok_or("no equilibrium analysis")?;
    ensure(eq.points.len() == 1 && eq.segments.is_empty(), || format!("{:?}", eq.points))?;
    let star = &eq.points[0];
    ensure(star.stability == Stability::SlidingAttractor, || format!("{:?}", star.stability))?;
    let theta_star = DVector::from_vec(star.location.clone());
    let f = field("b2", "q");
    let k = f.boundary_index(star.regions[0], star.regions[1]).ok_or("no boundary")?;
    let normal = f.boundaries()[k].normal.clone();
    let mut notes = Vec::new();
    for start in [[3.0, 3.0], [-3.0, -1.0]] {
        let theta0 = DVector::from_vec(start.to_vec());
        let r0 = f.region_of(&theta0).ok_or("start outside every region")?;
        ensure(f.region_interior_contains(r0, &theta0, 1e-3), || format!("{start:?} is not interior"))?;
        let traj = integrate_di(&f, &theta0, 100.0, 1e-10).map_err(|e| e.to_string())?;
        let hit = traj
            .times
            .iter()
            .zip(&traj.states)
            .find(|(_, s)| normal.dot(&DVector::from_column_slice(s)).abs() <= SLIDE_NORMAL_TOL)
            .map(|(t, _)| *t)
            .ok_or_else(|| format!("{start:?} never reached the boundary"))?;
        let err = (traj.terminal() - &theta_star).norm();
        ensure(err <= SLIDE_TERMINAL_TOL, || format!("{start:?} ends {err:.2e} from θ*"))?;
        notes.push(format!("{start:?}: boundary at t={hit:.3}, end err {err:.1e}"));
    }
    Ok(format!("θ*={:?}; {}", star.location, notes.join("; ")))
}

fn c3_b3_unique() -> Outcome {
    let r = report("b3", "q");
    let eq = r.equilibria.as_ref().ok_or("no equilibrium analysis")?;
    ensure(eq.points.len() == 1 && eq.points[0].kind == EquilibriumKind::InteriorLandmark, || {
        format!("{:?}", eq.points)
    })?;
    let star = eq.points[0].location.clone();
    let seeds: Vec<u64> = (0..10).collect();
    let runs = sa_runs("b3", "q", &seeds, B3_ITERS, B3_SCHEDULE, 1000);
    let worst = runs.iter().map(|t| dist(&t.summary.tail_mean, &star)).fold(0.0, f64::max);
    ensure(worst <= TAIL_TOL, || format!("worst tail error {worst:.4}"))?;
    Ok(format!("10 runs, worst tail error {worst:.4}"))
}

fn c4_b4_disparity() -> Outcome {
    let (fx, _) = load("b4");
    ensure(fx.eps == Some(0.3) && fx.gamma == 0.95, || "fixture exploration/discount changed".into())?;
    let q = report("b4", "q");
    let s = report("b4", "sarsa");
    ensure(sliding_point(&q).is_none(), || "Q-learning has a sliding equilibrium".into())?;
    let star = sliding_point(&s).ok_or("SARSA has no sliding equilibrium")?;
    let landmarks: Vec<Vec<f64>> = q
        .equilibria
        .as_ref()
        .unwrap()
        .points
        .iter()
        .filter(|e| e.kind == EquilibriumKind::InteriorLandmark && e.stability == Stability::Stable)
        .map(|e| e.location.clone())
        .collect();
    let stride = B4_ITERS / 8;
    let q_runs = sa_runs("b4", "q", &B4_SEEDS, B4_ITERS, B4_SCHEDULE, stride);
    let s_runs = sa_runs("b4", "sarsa", &B4_SEEDS, B4_ITERS, B4_SCHEDULE, stride);
    let mut worst_q: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    for (qt, st) in q_runs.iter().zip(&s_runs) {
        let dq = landmarks.iter().map(|l| dist(&qt.summary.tail_mean, l)).fold(f64::INFINITY, f64::min);
        let ds = dist(&st.summary.tail_mean, &star);
        ensure(dq <= TAIL_TOL, || format!("Q tail {:?} is {dq:.3} from a landmark", qt.summary.tail_mean))?;
        ensure(ds <= TAIL_TOL, || format!("SARSA tail {:?} is {ds:.3} from θ*", st.summary.tail_mean))?;
        ensure(dist(&qt.summary.tail_mean, &star) > TAIL_TOL, || "Q tail sits at θ*".into())?;
        worst_q = worst_q.max(dq);
        worst_s = worst_s.max(ds);
    }
    Ok(format!(
        "Q→landmark (worst {worst_q:.4}), SARSA→θ*={star:?} (worst {worst_s:.4}), {} paired runs",
        B4_SEEDS.len()
    ))
}

/// Random point well inside some region: every defining inequality holds
/// with a margin proportional to ‖θ‖.
fn interior_theta(f: &DiField, rng: &mut impl Rng) -> (DVector<f64>, usize) {
    loop {
        let theta = DVector::from_fn(f.dim(), |_, _| rng.gen_range(-5.0..5.0));
        if let Some(r) = f.region_of(&theta) {
            if f.region_interior_contains(r, &theta, 1e-2 * theta.norm()) {
                return (theta, r);
            }
        }
    }
}

fn c5_drift_oracle() -> Outcome {
    let mut rng = seeded_rng(2024);
    let mut worst_z: f64 = 0.0;
    for name in FIXTURES {
        let (fx, _) = load(name);
        let (mdp, features) = (fx.mdp().unwrap(), fx.feature_map().unwrap());
        let cfg = fx.preset_config("q").unwrap();
        let f = DiField::build(&mdp, &features, &cfg).unwrap();
        let mut model = SaModel::new(&mdp, &features, cfg).unwrap();
        for _ in 0..5 {
            let (theta, r) = interior_theta(&f, &mut rng);
            let piece: &PieceDynamics = f.piece(r);
            let expected = piece.drift(&theta);
            let d = theta.len();
            let mut sum = DVector::zeros(d);
            let mut sq = DVector::zeros(d);
            for _ in 0..MC_SAMPLES {
                let x = model.step(&theta, &mut rng).unwrap().direction;
                sq += x.component_mul(&x);
                sum += x;
            }
            let mean = sum / MC_SAMPLES as f64;
            for i in 0..d {
                let var = sq[i] / MC_SAMPLES as f64 - mean[i] * mean[i];
                let se = (var / MC_SAMPLES as f64).sqrt().max(f64::MIN_POSITIVE);
                let z = (mean[i] - expected[i]).abs() / se;
                ensure(z <= MC_SIGMAS, || format!("{name} θ={:?}: component {i} off by {z:.2}σ̂", theta.as_slice()))?;
                worst_z = worst_z.max(z);
            }
        }
    }
    Ok(format!("20 points × 10^6 samples, worst deviation {worst_z:.2}σ̂"))
}

fn c6_assumptions() -> Outcome {
    let mut notes = Vec::new();
    for name in FIXTURES {
        let r = report(name, "q");
        ensure(r.b1.full_rank && r.b1.k_phi.is_finite() && r.b1.k_r.is_finite(), || format!("{name}: B1 {:?}", r.b1))?;
        ensure(r.b2.pass && r.b2.exhaustive, || format!("{name}: B2 {:?}", r.b2.failure))?;
        let min_d = r.b2.entries.iter().map(|e| e.min_stationary).fold(f64::INFINITY, f64::min);
        ensure(min_d > ERGODIC_MIN, || format!("{name}: min stationary {min_d:e}"))?;
        ensure(r.b4.pass, || format!("{name}: B4 failed"))?;
        // β from the sum A + Aᵀ directly, over every policy of the fixture.
        let beta = r
            .pieces
            .iter()
            .map(|p| {
                let a = DMatrix::from_fn(p.a.len(), p.a.len(), |i, j| p.a[i][j]);
                (&a + a.transpose()).symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min);
        ensure(beta > 0.0 && (beta - r.ges.beta).abs() < 1e-10, || format!("{name}: β {beta} vs {}", r.ges.beta))?;
        notes.push(format!("{name} β={beta:.4}"));
    }
    Ok(notes.join(", "))
}

fn c7_gordon_landmarks() -> Outcome {
    let eps = 0.1;
    let sys = GordonSystem::new(eps).unwrap();
    let lm = gordon_landmarks(&sys).map_err(|e| e.to_string())?;
    ensure(lm.upper.iter().all(|v| (v - 1.9).abs() < 1e-12), || format!("x_U {:?}", lm.upper))?;
    ensure(lm.lower.iter().all(|v| (v - 1.1).abs() < 1e-12), || format!("x_L {:?}", lm.lower))?;
    ensure(lm.upper_residual <= GORDON_RESIDUAL_TOL && lm.lower_residual <= GORDON_RESIDUAL_TOL, || {
        format!("residuals {} {}", lm.upper_residual, lm.lower_residual)
    })?;
    let seg = gordon_equilibrium_segment(&sys);
    ensure((seg.lo - (1.0 + eps)).abs() < 1e-15 && (seg.hi - (2.0 - eps)).abs() < 1e-15, || format!("{seg:?}"))?;
    let diag = |eta: f64| DVector::from_vec(vec![eta; 3]);
    for i in 0..100 {
        let eta = seg.lo + (seg.hi - seg.lo) * (i as f64 + 0.5) / 100.0;
        ensure(hull_contains_zero(&sys, &diag(eta), 1e-12), || format!("interior η={eta} rejected"))?;
    }
    for i in 0..20 {
        let gap = 0.01 + 0.1 * i as f64;
        let eta = if i % 2 == 0 { seg.lo - gap } else { seg.hi + gap };
        ensure(!hull_contains_zero(&sys, &diag(eta), 1e-6), || format!("exterior η={eta} accepted"))?;
    }
    Ok("x_U=(1.9,1.9,1.9), x_L=(1.1,1.1,1.1), segment [1.1, 1.9]; 100 interior / 20 exterior".into())
}

fn gordon_results() -> Vec<lfa_di::gordon::GordonRunResult> {
    let fx = load_gordon_fixture(fixture_path("gordon")).unwrap().fixture;
    let sys = GordonSystem::new(fx.eps).unwrap();
    let schedule: StepSizeSchedule = fx.schedule().unwrap();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..GORDON_SEEDS)
            .map(|seed| {
                let (sys, fx) = (&sys, &fx);
                scope.spawn(move || {
                    gordon_run(
                        sys,
                        &GordonRun {
                            theta0: fx.theta0.clone(),
                            n_iters: fx.iters,
                            seed,
                            schedule,
                            record_stride: 1000,
                        },
                    )
                    .unwrap()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn c8_gordon_convergence() -> Outcome {
    let fx = load_gordon_fixture(fixture_path("gordon")).unwrap().fixture;
    let sys = GordonSystem::new(fx.eps).unwrap();
    let seg = gordon_equilibrium_segment(&sys);
    ensure(fx.iters == 100_000, || format!("fixture runs {} iterations", fx.iters))?;
    let results = gordon_results();
    let mut etas = Vec::new();
    for (seed, r) in results.iter().enumerate() {
        ensure(r.tail_diagonal_distance <= GORDON_DIAG_TOL, || {
            format!("seed {seed}: {:.4} from the diagonal", r.tail_diagonal_distance)
        })?;
        ensure(seg.contains(r.tail_eta, GORDON_DIAG_TOL), || format!("seed {seed}: η={:.4}", r.tail_eta))?;
        etas.push(r.tail_eta);
    }
    let (lo, hi) = etas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
    Ok(format!("{GORDON_SEEDS} runs, η ∈ [{lo:.4}, {hi:.4}], schedule {}", fx.schedule))
}

fn c9_stability() -> Outcome {
    let seeds: Vec<u64> = (0..10).collect();
    let mut worst: f64 = 0.0;
    for t in sa_runs("b3", "q", &seeds, B3_ITERS, B3_SCHEDULE, 1000) {
        worst = worst.max(t.summary.max_norm);
    }
    for preset in ["q", "sarsa"] {
        for t in sa_runs("b4", preset, &B4_SEEDS, B4_ITERS, B4_SCHEDULE, B4_ITERS / 8) {
            worst = worst.max(t.summary.max_norm);
        }
    }
    for r in gordon_results() {
        worst = worst.max(r.trajectory.summary.max_norm);
    }
    ensure(worst <= STABILITY_BOUND, || format!("max ‖θ‖ = {worst:.3}"))?;
    Ok(format!("max ‖θ_n‖ = {worst:.3} over all runs"))
}

fn run_cli(dir: &Path, args: &[String]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lfa-di"))
        .args(args)
        .env("LFA_DI_OUT_DIR", dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn c10_determinism() -> Outcome {
    let p = |n: &str| fixture_path(n).to_string_lossy().into_owned();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<String>>();
    let mut commands: Vec<Vec<String>> = Vec::new();
    for name in FIXTURES {
        commands.push(s(&["analyze", &p(name), "--out", &format!("{name}.json")]));
    }
    commands.push(s(&["analyze", &p("b4"), "--algo", "sarsa", "--out", "b4_sarsa.json"]));
    commands.push(s(&["integrate", &p("b2"), "--theta0", "3,3", "--t-end", "100", "--out", "b2_di.csv"]));
    commands.push(s(&[
        "simulate", &p("b3"), "--iters", "20000", "--schedule", B3_SCHEDULE, "--runs", "3", "--out", "b3.csv",
    ]));
    for algo in ["q", "sarsa"] {
        commands.push(s(&[
            "simulate", &p("b4"), "--algo", algo, "--iters", "200000", "--schedule", B4_SCHEDULE, "--stride", "100",
            "--out", &format!("b4_{algo}.csv"),
        ]));
    }
    commands.push(s(&["gordon", "--fixture", &p("gordon"), "--seed", "3", "--stride", "100"]));
    commands.push(s(&["partition", &p("b1"), "--grid", "41"]));

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        for c in &commands {
            run_cli(d.path(), c)?;
        }
    }
    let mut files = Vec::new();
    collect_files(dirs[0].path(), dirs[0].path(), &mut files);
    files.sort();
    ensure(files.len() >= commands.len(), || format!("only {} outputs", files.len()))?;
    for f in &files {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(a == b, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} commands, {} output files byte-identical", commands.len(), files.len()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
}

fn c11_partition() -> Outcome {
    let mut rng = seeded_rng(77);
    for name in FIXTURES {
        let (fx, _) = load(name);
        let features = fx.feature_map().unwrap();
        let exact = enumerate_regions(&features, EnumerationMethod::Exact2d).unwrap();
        for _ in 0..10_000 {
            let theta = DVector::from_fn(2, |_, _| rng.gen_range(-100.0..100.0));
            let owners: Vec<usize> =
                (0..exact.regions.len()).filter(|&r| exact.regions[r].contains(&theta)).collect();
            ensure(owners.len() == 1, || format!("{name}: θ={:?} in {} regions", theta.as_slice(), owners.len()))?;
            let greedy = greedy_policy_of(&theta, &features);
            ensure(exact.regions[owners[0]].policy == greedy, || format!("{name}: owner is not the greedy policy"))?;
            let c = rng.gen_range(1e-3..1e3);
            ensure(greedy_policy_of(&(&theta * c), &features) == greedy, || format!("{name}: scaling by {c} moved θ"))?;
        }
        let sampled =
            enumerate_regions(&features, EnumerationMethod::Sampled { n_dirs: 1_000_000, seed: 5 }).unwrap();
        let ids = |d: &lfa_di::PartitionDiagram| d.regions.iter().map(|r| r.policy.id(2)).collect::<Vec<u64>>();
        ensure(ids(&exact) == ids(&sampled), || format!("{name}: exact {:?} vs sampled {:?}", ids(&exact), ids(&sampled)))?;
    }
    Ok("10^4 points per fixture; exact and sampled enumerations agree".into())
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion { id: 1, name: "b1 two self-consistent regions", limit: secs(1), check: c1_b1_two_regions },
        Criterion { id: 2, name: "b2 sliding attractor", limit: secs(5), check: c2_b2_sliding },
        Criterion { id: 3, name: "b3 unique landmark", limit: secs(30), check: c3_b3_unique },
        Criterion { id: 4, name: "b4 Q-learning vs SARSA", limit: None, check: c4_b4_disparity },
        Criterion { id: 5, name: "stochastic drift oracle", limit: secs(60), check: c5_drift_oracle },
        Criterion { id: 6, name: "assumption suite", limit: None, check: c6_assumptions },
        Criterion { id: 7, name: "gordon landmarks", limit: secs(1), check: c7_gordon_landmarks },
        Criterion { id: 8, name: "gordon convergence", limit: secs(60), check: c8_gordon_convergence },
        Criterion { id: 9, name: "stability", limit: None, check: c9_stability },
        Criterion { id: 10, name: "determinism", limit: None, check: c10_determinism },
        Criterion { id: 11, name: "partition properties", limit: None, check: c11_partition },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.id.to_string() == *f || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(msg) => println!("PASS criterion {:>2} ({}) [{elapsed:.2?}]: {msg}", c.id, c.name),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {:>2} ({}) [{elapsed:.2?}]: {msg}", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
