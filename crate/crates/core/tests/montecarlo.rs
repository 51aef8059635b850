use treerecon::broadcast::TreeShape;
use treerecon::channel::ChannelParams;
use treerecon::exact::exact_moments;
use treerecon::popdyn::{evolve_level, init_population, mc_tree_moments, run_population, MomentRow};

fn reference() -> ChannelParams {
    ChannelParams::from_eigenvalues(2, 0.5, 0.3).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let params = ChannelParams::from_eigenvalues(3, 0.45, 0.2).unwrap();
    let shape = TreeShape::new(2, 3).unwrap();
    let trees: Vec<_> =
        [1, 2, 5].iter().map(|&t| in_pool(t, || mc_tree_moments(&params, shape, 3000, 11).unwrap())).collect();
    assert!(trees.windows(2).all(|w| w[0] == w[1]));

    let series: Vec<Vec<MomentRow>> =
        [1, 2, 5].iter().map(|&t| in_pool(t, || run_population(&params, 2, 3000, 6, 11).unwrap())).collect();
    assert!(series.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn different_seeds_give_different_populations() {
    let params = reference();
    let pop = init_population(2, 500).unwrap();
    let a = evolve_level(&pop, &params, 2, 1).unwrap();
    let b = evolve_level(&pop, &params, 2, 2).unwrap();
    assert_ne!(a, b);
    assert_eq!(a, evolve_level(&pop, &params, 2, 1).unwrap());
}

#[test]
fn estimates_agree_with_enumeration() {
    let params = reference();
    let samples = 20_000;
    let series = run_population(&params, 2, samples, 2, 3).unwrap();
    for n in 1..=2 {
        let exact = exact_moments(&params, TreeShape::new(2, n).unwrap()).unwrap();
        let tree = mc_tree_moments(&params, TreeShape::new(2, n).unwrap(), samples, 3).unwrap();
        let pop = series[n].stats;
        for est in [tree, pop] {
            assert!((est.x - exact.x).abs() < 4.0 * est.se.x, "n={n}: {} vs {}", est.x, exact.x);
            assert!((est.z - exact.z).abs() < 4.0 * est.se.z, "n={n}: {} vs {}", est.z, exact.z);
            assert!(est.simplex_residual(2).abs() < 1e-12);
        }
        let combined = (tree.se.x.powi(2) + pop.se.x.powi(2)).sqrt();
        assert!((tree.x - pop.x).abs() < 4.0 * combined);
    }
}

#[test]
fn population_signs_hold_statistically() {
    let params = ChannelParams::from_eigenvalues(4, 0.5, 0.2).unwrap();
    for row in run_population(&params, 2, 5000, 15, 8).unwrap() {
        let s = row.stats;
        assert!(s.x >= -4.0 * s.se.x, "level {}: x = {}", row.level, s.x);
        assert!(s.z <= 4.0 * s.se.z, "level {}: z = {}", row.level, s.z);
        assert!(s.simplex_residual(4).abs() < 1e-12);
    }
}
