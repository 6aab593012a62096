use pinbridge::sim::{generate_paths, DEFAULT_STEPS, DEFAULT_T_END};
use pinbridge::{
    make_grid, monte_carlo, CalculusCache, FamilySpec, GridMode, Method, PathGrid, PinnedLaw,
};

#[test]
fn start_node_is_deterministic() {
    let family = FamilySpec::new("remark24").build().unwrap();
    let grid = make_grid(64, GridMode::Geometric, 0.999).unwrap();
    for method in [Method::Exact, Method::Euler] {
        let r = monte_carlo(&family, -0.5, 2.0, &grid, 10_000, 8, method).unwrap();
        assert_eq!(r.mean[0], -0.5);
        assert_eq!(r.variance[0], 0.0);
        assert_eq!(r.se_variance[0], 0.0);
    }
}

#[test]
fn alpha_pinned_pinning_statistic() {
    let family = FamilySpec::new("alpha_pinned")
        .param("alpha", 2.0)
        .build()
        .unwrap();
    let grid = PathGrid::new(vec![0.0, 0.5, 0.99, DEFAULT_T_END]).unwrap();
    let r = monte_carlo(&family, 0.0, 1.0, &grid, 100_000, 21, Method::Exact).unwrap();
    // sd^2 = (1 - t)^4 ((1 - t)^-3 - 1) / 3 ~ (1 - t) / 3
    let eps: f64 = 1.0 - DEFAULT_T_END;
    let sd = (eps.powi(4) * (eps.powi(-3) - 1.0) / 3.0).sqrt();
    let expected = (2.0 / std::f64::consts::PI).sqrt() * sd;
    assert!((expected - 0.00461).abs() < 1e-5);
    assert!((r.pinning.mean_abs_deviation - expected).abs() <= 4.0 * r.pinning.se);
}

#[test]
fn euler_mean_of_the_brownian_bridge() {
    let family = FamilySpec::new("brownian_bridge").build().unwrap();
    let grid = make_grid(DEFAULT_STEPS, GridMode::Geometric, DEFAULT_T_END).unwrap();
    let r = monte_carlo(&family, 0.0, 1.0, &grid, 100_000, 4, Method::Euler).unwrap();
    let k = grid.nearest(0.5);
    let t = grid.nodes()[k];
    let cache = CalculusCache::new(&family);
    let exact = PinnedLaw::new(&cache, 0.0, 1.0).mean(t).unwrap();
    assert!((t - 0.5).abs() < 0.01);
    assert!((r.mean[k] - exact).abs() <= 4.0 * r.se_mean[k] + 5e-3);
    assert!(r.max_contraction.unwrap() <= 1.0);
}

#[test]
fn reports_are_bitwise_reproducible_across_thread_counts() {
    let family = FamilySpec::new("f_wiener")
        .param("slope", 1.0)
        .build()
        .unwrap();
    let grid = make_grid(128, GridMode::Geometric, 1.0 - 1e-3).unwrap();
    for method in [Method::Exact, Method::Euler] {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| monte_carlo(&family, 0.1, 0.2, &grid, 10_000, 77, method).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(
                &monte_carlo(&family, 0.1, 0.2, &grid, 10_000, 77, method).unwrap()
            )
            .unwrap()
        );
        assert_ne!(
            a,
            monte_carlo(&family, 0.1, 0.2, &grid, 10_000, 78, method).unwrap()
        );
    }
}

#[test]
fn materialized_paths_match_the_report() {
    let family = FamilySpec::new("brownian_bridge").build().unwrap();
    let grid = make_grid(16, GridMode::Uniform, 0.9).unwrap();
    let paths = generate_paths(&family, 0.0, 0.0, &grid, 9, Method::Exact, 0..64).unwrap();
    let r = monte_carlo(&family, 0.0, 0.0, &grid, 64, 9, Method::Exact).unwrap();
    for (k, &m) in r.mean.iter().enumerate() {
        let direct = paths.iter().map(|p| p.values[k]).sum::<f64>() / 64.0;
        assert!((direct - m).abs() < 1e-12);
    }
    assert!(paths
        .iter()
        .enumerate()
        .all(|(i, p)| p.path_index == i as u64 && p.values[0] == 0.0));
}

#[test]
fn se_fields_are_sd_over_root_n() {
    let family = FamilySpec::new("alpha_gamma_pinned")
        .param("alpha", 1.0)
        .param("gamma", 1.0)
        .build()
        .unwrap();
    let grid = make_grid(32, GridMode::Geometric, 0.999).unwrap();
    let n = 4000;
    let r = monte_carlo(&family, 0.0, 0.0, &grid, n, 1, Method::Exact).unwrap();
    for k in 0..grid.len() {
        assert!(
            (r.se_mean[k] - (r.variance[k] / n as f64).sqrt()).abs()
                <= 1e-15 * r.se_mean[k].max(1.0)
        );
    }
}
