use std::sync::Arc;

use graphon_logit::exec::Execution;
use graphon_logit::hjb::{self, SolverConfig, SolverMode, ValueField};
use graphon_logit::logit;
use graphon_logit::scenario::{DeclaredBounds, GeneralUtility};
use graphon_logit::{Field, FisheryParams, GraphonKernel, Grid, MeasureField, RateProfiles, Scenario, Utility};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fishery(n: usize, delta: f64, eta: f64, theta: Option<f64>) -> Scenario {
    let g = Grid::new(n, n).unwrap();
    let rates = RateProfiles::constant(delta, eta, &g).unwrap();
    let k = match theta {
        Some(t) => GraphonKernel::gaussian(t, &g).unwrap(),
        None => GraphonKernel::identity(&g),
    };
    Scenario::fishery(g, rates, FisheryParams::default(), k).unwrap()
}

/// Direct transcription of the residual with an unshifted double loop.
fn residual_oracle(phi: &Field, sc: &Scenario) -> Field {
    let g = sc.grid();
    let (nx, ny, dx) = (g.nx(), g.ny(), g.dx());
    let m = hjb::compute_m(&ValueField::new(phi.clone()), sc).unwrap();
    let u = sc.coupled_utility_at(&m).unwrap();
    Field::from_fn(nx, ny, |i, j| {
        let (d, e) = (sc.rates().delta()[j], sc.rates().eta()[j]);
        let s: f64 = (0..nx).map(|k| (e * (phi.get(k, j) - phi.get(i, j))).exp() * dx).sum();
        phi.get(i, j) - u.get(i, j) - s.ln() / (d * e)
    })
}

#[test]
fn residual_matches_unshifted_oracle() {
    let sc = fishery(12, 0.7, 3.0, Some(0.4));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = Field::from_fn(12, 12, |_, _| rng.random_range(-1.0..1.0));
    let g = hjb::hjb_residual(&ValueField::new(phi.clone()), &sc).unwrap();
    assert!(g.max_abs_diff(&residual_oracle(&phi, &sc)) < 1e-12);
}

#[test]
fn residual_consistency_and_bounds() {
    for (delta, eta, theta) in [(0.5, 2.0, None), (0.5, 2.0, Some(0.5)), (0.05, 20.0, Some(0.25))] {
        let sc = fishery(16, delta, eta, theta);
        let cfg = SolverConfig::default();
        let out = hjb::solve(&sc, &cfg).unwrap();
        assert!(out.final_residual <= cfg.eps / (delta * cfg.dt) * (1.0 + 1e-6));
        assert!(out.bound.holds, "{:?}", out.bound);
        let u = sc.coupled_utility_at(&out.m).unwrap();
        assert!(out.phi.min() >= u.min() - 1e-8 && out.phi.max() <= u.max() + 1e-8);
    }
}

#[test]
fn nonnegative_utility_gives_literal_bound() {
    let g = Grid::new(16, 8).unwrap();
    let rates = RateProfiles::constant(0.3, 5.0, &g).unwrap();
    let gen = GeneralUtility {
        g: Arc::new(|x, y, v| x * (1.0 + y) * (1.0 + v * v).recip()),
        h: Arc::new(|x| x),
        bounds: Some(DeclaredBounds {
            lipschitz_g: 1.0,
            lipschitz_h: 1.0,
            h_bar: 1.0,
            u_bar: 2.0,
            lipschitz_u: 2.0,
        }),
    };
    let sc = Scenario::new(g.clone(), rates, MeasureField::uniform(&g), Utility::General(gen), GraphonKernel::gaussian(0.5, &g).unwrap()).unwrap();
    let out = hjb::solve(&sc, &SolverConfig::default()).unwrap();
    assert!(out.bound.holds);
    assert!(out.bound.nonnegative_form_holds(2.0));
}

#[test]
fn pseudo_time_and_picard_agree() {
    for (delta, eta) in [(0.5, 2.0), (0.5, 200.0), (0.005, 2.0)] {
        let sc = fishery(12, delta, eta, Some(0.5));
        let pt = hjb::solve(&sc, &SolverConfig { eps: 1e-13, ..Default::default() }).unwrap();
        let pc = hjb::solve(&sc, &SolverConfig::picard(sc.rates(), 1e-13)).unwrap();
        assert!(pt.phi.max_abs_diff(&pc.phi) < 1e-6, "delta {delta} eta {eta}");
    }
}

#[test]
fn warm_start_reaches_same_fixed_point() {
    let sc = fishery(16, 0.5, 2.0, Some(0.5));
    let cfg = SolverConfig { eps: 1e-13, ..Default::default() };
    let cold = hjb::solve(&sc, &cfg).unwrap();
    let warm = hjb::solve_from(&sc, &cfg, ValueField::new(Field::filled(16, 16, -0.2))).unwrap();
    assert!(cold.phi.max_abs_diff(&warm.phi) < 1e-9);
    let again = hjb::solve_from(&sc, &cfg, cold.phi.clone()).unwrap();
    assert!(again.iterations < cold.iterations / 10);
}

#[test]
fn parallel_and_sequential_solves_are_bitwise_equal() {
    let sc = fishery(24, 0.5, 20.0, Some(0.3));
    let base = SolverConfig { max_iter: 400, eps: 1e-300, ..Default::default() };
    let run = |execution| match hjb::solve(&sc, &SolverConfig { execution, ..base }) {
        Err(graphon_logit::Error::NotConverged(o)) => o.phi.into_field(),
        other => panic!("{other:?}"),
    };
    assert_eq!(run(Execution::Sequential).as_slice(), run(Execution::Parallel).as_slice());
}

#[test]
fn oscillation_flattens_as_delta_shrinks() {
    let oscs: Vec<f64> = [0.5, 0.05, 0.005]
        .iter()
        .map(|&d| {
            let sc = fishery(16, d, 2.0, None);
            hjb::solve(&sc, &SolverConfig::picard(sc.rates(), 1e-13)).unwrap().phi.osc()
        })
        .collect();
    assert!(oscs[0] > oscs[1] && oscs[1] > oscs[2], "{oscs:?}");
}

#[test]
fn measure_invariants_after_solve() {
    let sc = fishery(20, 0.05, 200.0, Some(0.5));
    let out = hjb::solve(&sc, &SolverConfig::picard(sc.rates(), 1e-12)).unwrap();
    let g = sc.grid();
    assert!(out.m.max_mass_error(g) <= 1e-12);
    assert!(out.pstar.max_mass_error(g) <= 1e-12);
    assert!(out.m.density().min() >= 0.0);
    for (a, &x1) in out.alpha.iter().zip(std::iter::repeat(&g.x_centers()[0])) {
        assert!(*a >= x1 && *a <= 1.0);
    }
}

/// Random probability density on `n` cells, as a convex mix of the logit
/// density and noise so the support overlaps it.
fn perturbed(base: &[f64], rng: &mut ChaCha8Rng, dx: f64) -> Vec<f64> {
    let w: f64 = rng.random_range(0.0..1.0);
    let mut q: Vec<f64> = base.iter().map(|b| (1.0 - w) * b + w * rng.random_range(0.0..2.0)).collect();
    let z: f64 = q.iter().sum::<f64>() * dx;
    q.iter_mut().for_each(|v| *v /= z);
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn entropy_identity_holds(vals in proptest::collection::vec(-1.0f64..1.0, 4..33), eta in 0.5f64..250.0, seed in any::<u64>()) {
        let n = vals.len();
        let dx = 1.0 / n as f64;
        let p = logit::logit_density(&vals, eta, &Grid::new(n, 1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in [0, n / 2, n - 1] {
            let lse = logit::column_lse(&vals, eta, dx).relative(eta, vals[i]) / eta;
            let best = logit::entropy_objective(&p, &vals, i, eta, dx);
            prop_assert!((best - lse).abs() <= 1e-10 * (1.0 + lse.abs()));
            for _ in 0..20 {
                let q = perturbed(&p, &mut rng, dx);
                prop_assert!(logit::entropy_objective(&q, &vals, i, eta, dx) <= best + 1e-12);
            }
        }
    }

    #[test]
    fn residual_is_translation_covariant_for_frozen_utility(c in -5.0f64..5.0, seed in any::<u64>()) {
        let g = Grid::new(6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Field::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let rates = RateProfiles::constant(0.8, 4.0, &g).unwrap();
        let sc = Scenario::new(g.clone(), rates, MeasureField::uniform(&g), Utility::Frozen(u), GraphonKernel::gaussian(0.5, &g).unwrap()).unwrap();
        let phi = Field::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let shifted = Field::from_fn(6, 3, |i, j| phi.get(i, j) + c);
        let g0 = hjb::hjb_residual(&ValueField::new(phi), &sc).unwrap();
        let g1 = hjb::hjb_residual(&ValueField::new(shifted), &sc).unwrap();
        for (a, b) in g0.as_slice().iter().zip(g1.as_slice()) {
            prop_assert!((b - a - c).abs() < 1e-9);
        }
    }
}

#[test]
fn damped_picard_mode_reports_omega() {
    let sc = fishery(8, 0.5, 200.0, None);
    let cfg = SolverConfig::picard(sc.rates(), 1e-12);
    match cfg.mode {
        SolverMode::DampedPicard { omega } => assert!(omega > 0.0 && omega < 2.0 / (3.0 + 50.0)),
        _ => unreachable!(),
    }
}
