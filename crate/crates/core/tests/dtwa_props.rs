use oss_core::dtwa::{self, DtwaConfig, LatticeKind, LatticeSpec};
use oss_core::stats;

fn small(kind: LatticeKind) -> LatticeSpec {
    LatticeSpec { rows: 3, cols: 3, ..LatticeSpec::new(kind) }
}

fn final_sx(spec: &LatticeSpec, n_traj: usize, seed: u64) -> f64 {
    let lat = dtwa::build_lattice(spec, 0).unwrap();
    let base = DtwaConfig::for_lattice(spec);
    let cfg = DtwaConfig { n_trajectories: n_traj, n_times: 2, t_max: base.t_max / 2.0, seed, ..base };
    *dtwa::evolve(&lat, &cfg).unwrap().series.mean_sx.last().unwrap()
}

#[test]
fn estimator_spread_falls_as_inverse_root_of_trajectories() {
    let spec = small(LatticeKind::Square);
    let spread = |n_traj| stats::std_dev(&(0..40).map(|s| final_sx(&spec, n_traj, s)).collect::<Vec<_>>());
    let ratio = spread(100) / spread(400);
    assert!((1.5..2.7).contains(&ratio), "spread ratio {ratio}, expected about 2");
}

#[test]
fn diluted_occupancy_is_binomial() {
    let spec = LatticeSpec::new(LatticeKind::SquareDiluted);
    let sites = (spec.rows * spec.cols) as f64;
    let counts: Vec<f64> = (0..300).map(|s| dtwa::build_lattice(&spec, s).unwrap().len() as f64).collect();
    let (mean, var) = (stats::mean(&counts), stats::std_dev(&counts).powi(2));
    let want_var = sites * spec.filling * (1.0 - spec.filling);
    assert!((mean - sites * spec.filling).abs() < 3.0 * (want_var / 300.0).sqrt(), "mean {mean}");
    assert!((0.75..1.25).contains(&(var / want_var)), "variance {var} vs {want_var}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let spec = small(LatticeKind::SquareDisordered);
    let lat = dtwa::build_lattice(&spec, 4).unwrap();
    let cfg = DtwaConfig { n_trajectories: 250, n_times: 5, batch_size: 30, seed: 9, ..DtwaConfig::for_lattice(&spec) };
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| dtwa::evolve(&lat, &cfg).unwrap())
    };
    let (one, three) = (run(1), run(3));
    assert_eq!(one.series, three.series);
    assert_eq!(one.collective_sx, three.collective_sx);
}

#[test]
fn uncoupled_spins_do_not_squeeze() {
    let spec = LatticeSpec { a_nm: 1e4, ..small(LatticeKind::Square) };
    let lat = dtwa::build_lattice(&spec, 0).unwrap();
    let cfg = DtwaConfig { n_trajectories: 400, n_times: 4, t_max: 1e-6, ..DtwaConfig::for_lattice(&LatticeSpec::default()) };
    let ev = dtwa::evolve(&lat, &cfg).unwrap();
    for (&sx, &xi2) in ev.series.mean_sx.iter().zip(&ev.series.xi2) {
        assert!((sx - 4.5).abs() < 1e-9, "{sx}");
        assert!((xi2 - ev.series.xi2[0]).abs() < 1e-9);
    }
}
