use lfa_di::gordon::{diagonal_projection, hull_contains_zero, hull_distance_to_zero, LOWER, UPPER};
use lfa_di::sim::seeded_rng;
use lfa_di::{
    classify_structure, find_equilibria, gordon_equilibrium_segment, gordon_landmarks, gordon_run,
    gordon_step, GordonField, GordonRun, GordonSystem, StepSizeSchedule, Taxonomy,
};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b, c])
}

/// Conditional mean written out from the two update branches.
fn branch_mean(theta: &DVector<f64>, eps: f64) -> DVector<f64> {
    let p = if theta[1] <= theta[0] { 1.0 - eps } else { eps };
    let up = v3(theta[2] - theta[0], 0.0, 2.0 - theta[2]);
    let down = v3(0.0, theta[2] - theta[1], 1.0 - theta[2]);
    up * p + down * (1.0 - p)
}

#[test]
fn pieces_reproduce_the_branch_mean() {
    let mut rng = seeded_rng(5);
    for _ in 0..200 {
        let eps = rng.gen_range(0.01..0.49);
        let sys = GordonSystem::new(eps).unwrap();
        let theta = v3(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        assert!((sys.mean_drift(&theta) - branch_mean(&theta, eps)).amax() < 1e-12);
    }
}

#[test]
fn monte_carlo_mean_of_steps() {
    const N: usize = 1_000_000;
    let sys = GordonSystem::new(0.1).unwrap();
    let mut rng = seeded_rng(17);
    for theta in [v3(0.3, -0.2, 1.0), v3(-1.0, 2.0, 0.5)] {
        let expected = branch_mean(&theta, sys.eps);
        let mut sum = DVector::zeros(3);
        let mut sq = DVector::zeros(3);
        for _ in 0..N {
            let x = gordon_step(&theta, &mut rng, &sys);
            sq += x.component_mul(&x);
            sum += x;
        }
        let mean = sum / N as f64;
        for i in 0..3 {
            let se = ((sq[i] / N as f64 - mean[i] * mean[i]) / N as f64).sqrt();
            assert!((mean[i] - expected[i]).abs() <= 4.0 * se.max(1e-15), "component {i}");
        }
    }
}

#[test]
fn landmarks_are_diagonal_points() {
    let mut rng = seeded_rng(23);
    for _ in 0..20 {
        let eps = rng.gen_range(0.001..0.499);
        let sys = GordonSystem::new(eps).unwrap();
        let lm = gordon_landmarks(&sys).unwrap();
        for (x, c) in [(&lm.upper, 2.0 - eps), (&lm.lower, 1.0 + eps)] {
            assert!(x.iter().all(|v| (v - c).abs() < 1e-10), "{x:?} vs {c}");
        }
        assert!(lm.upper_residual < 1e-12 && lm.lower_residual < 1e-12);
    }
}

#[test]
fn segment_endpoints_and_interior() {
    let eps = 0.1;
    let sys = GordonSystem::new(eps).unwrap();
    let seg = gordon_equilibrium_segment(&sys);
    assert!((seg.lo - 1.1).abs() < 1e-15 && (seg.hi - 1.9).abs() < 1e-15);
    for i in 0..100 {
        let eta = seg.lo + (seg.hi - seg.lo) * (i as f64 + 0.5) / 100.0;
        assert!(hull_contains_zero(&sys, &v3(eta, eta, eta), 1e-12), "η={eta}");
    }
    let mut rng = seeded_rng(29);
    for _ in 0..10 {
        let eta = if rng.gen::<bool>() { rng.gen_range(-3.0..1.05) } else { rng.gen_range(1.95..5.0) };
        assert!(!hull_contains_zero(&sys, &v3(eta, eta, eta), 1e-6), "η={eta}");
    }
    for _ in 0..10 {
        let eta = rng.gen_range(seg.lo..seg.hi);
        let off = rng.gen_range(0.05..1.0);
        assert!(!hull_contains_zero(&sys, &v3(eta + off, eta, eta), 1e-6));
    }
}

#[test]
fn hull_distance_grows_linearly_past_the_ends() {
    // On the diagonal both drifts are (0, 0, c − η); the hull distance is the
    // gap to the nearer end, with unit slope.
    let sys = GordonSystem::new(0.2).unwrap();
    let seg = gordon_equilibrium_segment(&sys);
    let h = 1e-4;
    for (eta, sign) in [(seg.hi + 0.5, 1.0), (seg.lo - 0.5, -1.0)] {
        let d = |e: f64| hull_distance_to_zero(&sys, &v3(e, e, e));
        let slope = (d(eta + h) - d(eta - h)) / (2.0 * h);
        assert!((slope - sign).abs() < 1e-8, "{slope}");
    }
}

#[test]
fn generic_finder_recovers_the_segment() {
    let sys = GordonSystem::new(0.1).unwrap();
    let field = GordonField::new(sys.clone());
    let census = find_equilibria(&field).unwrap();
    assert_eq!(classify_structure(&census), Taxonomy::BoundarySegment);
    assert_eq!(census.segments.len(), 1);
    let seg = &census.segments[0];
    let etas: Vec<f64> = [&seg.endpoints.0, &seg.endpoints.1]
        .iter()
        .map(|p| diagonal_projection(p).0)
        .collect();
    let (lo, hi) = (etas[0].min(etas[1]), etas[0].max(etas[1]));
    assert!((lo - 1.1).abs() < 1e-6 && (hi - 1.9).abs() < 1e-6, "{etas:?}");
}

#[test]
fn iterates_approach_the_segment() {
    let sys = GordonSystem::new(0.1).unwrap();
    let seg = gordon_equilibrium_segment(&sys);
    for seed in 0..3 {
        let run = GordonRun {
            theta0: vec![0.0; 3],
            n_iters: 100_000,
            seed,
            schedule: "harmonic:5,5".parse::<StepSizeSchedule>().unwrap(),
            record_stride: 1000,
        };
        let res = gordon_run(&sys, &run).unwrap();
        assert!(res.tail_diagonal_distance < 0.05, "seed {seed}: {}", res.tail_diagonal_distance);
        assert!(seg.contains(res.tail_eta, 0.05), "seed {seed}: η={}", res.tail_eta);
    }
}

proptest! {
    #[test]
    fn side_tie_goes_upper(x in -10.0f64..10.0, z in -10.0f64..10.0, eps in 0.01f64..0.49) {
        let sys = GordonSystem::new(eps).unwrap();
        prop_assert_eq!(sys.side(&v3(x, x, z)), UPPER);
        prop_assert_eq!(sys.side(&v3(x, x + 1e-9, z)), LOWER);
    }
}
