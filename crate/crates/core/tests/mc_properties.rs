use graphon_logit::exec::Execution;
use graphon_logit::mc::{self, McConfig, Sampler};
use graphon_logit::Grid;

fn peaked(grid: &Grid, centre: f64) -> Vec<f64> {
    let raw: Vec<f64> = grid.x_centers().iter().map(|x| (-10.0 * (x - centre).powi(2)).exp() + 0.02).collect();
    let z: f64 = raw.iter().sum::<f64>() * grid.dx();
    raw.into_iter().map(|v| v / z).collect()
}

fn mean_l1(grid: &Grid, samples: usize, sampler: Sampler) -> f64 {
    let (mu0, pstar) = (peaked(grid, 0.2), peaked(grid, 0.8));
    let want = mc::mixture(&mu0, &pstar, 0.5);
    (0..10)
        .map(|seed| {
            let cfg = McConfig::new(samples, seed, vec![0]);
            let h = mc::simulate_discounted(&pstar, &mu0, 1.0, &cfg, 0, sampler, grid).unwrap();
            mc::l1_distance(&h, &want, grid)
        })
        .sum::<f64>()
        / 10.0
}

#[test]
fn error_shrinks_like_inverse_square_root() {
    let g = Grid::new(16, 1).unwrap();
    for s in [Sampler::EventLoop, Sampler::Race] {
        let ratio = mean_l1(&g, 5_000, s) / mean_l1(&g, 10_000, s);
        assert!((1.1..=1.9).contains(&ratio), "{s:?}: {ratio}");
    }
}

#[test]
fn samplers_agree_within_noise() {
    let g = Grid::new(16, 1).unwrap();
    let (mu0, pstar) = (peaked(&g, 0.3), peaked(&g, 0.9));
    let n = 100_000;
    let cfg = McConfig::new(n, 3, vec![0]);
    let a = mc::simulate_discounted(&pstar, &mu0, 2.0, &cfg, 0, Sampler::EventLoop, &g).unwrap();
    let b = mc::simulate_discounted(&pstar, &mu0, 2.0, &cfg, 0, Sampler::Race, &g).unwrap();
    let want = mc::mixture(&mu0, &pstar, 2.0 / 3.0);
    let sd: f64 = want
        .iter()
        .map(|q| {
            let p = q * g.dx();
            (p * (1.0 - p) / n as f64).sqrt()
        })
        .sum();
    assert!(mc::l1_distance(&a, &b, &g) <= 3.0 * 2f64.sqrt() * sd);
}

#[test]
fn mu_t_at_ln_two_is_an_even_mixture() {
    let g = Grid::new(16, 1).unwrap();
    let (mu0, pstar) = (peaked(&g, 0.1), peaked(&g, 0.6));
    let want = mc::mixture(&mu0, &pstar, 0.5);
    for s in [Sampler::EventLoop, Sampler::Race] {
        let cfg = McConfig::new(100_000, 9, vec![0]);
        let h = mc::simulate_mu_t(&pstar, &mu0, 2f64.ln(), &cfg, 0, s, &g).unwrap();
        assert!(mc::l1_distance(&h, &want, &g) <= 0.02);
        assert!((h.iter().sum::<f64>() * g.dx() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn histograms_do_not_depend_on_execution() {
    let g = Grid::new(32, 1).unwrap();
    let (mu0, pstar) = (peaked(&g, 0.4), peaked(&g, 0.7));
    for s in [Sampler::EventLoop, Sampler::Race] {
        let run = |execution| {
            let cfg = McConfig { execution, ..McConfig::new(50_000, 11, vec![0]) };
            mc::simulate_discounted(&pstar, &mu0, 0.7, &cfg, 0, s, &g).unwrap()
        };
        assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
    }
}
