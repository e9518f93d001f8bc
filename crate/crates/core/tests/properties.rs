//! Invariants of the public API checked on random inputs.

use proptest::prelude::*;

use phi4::dynamics::{evolve, full_solution, DynamicsConfig};
use phi4::experiment::RunConfig;
use phi4::rng::{cell_rng, Domain, NoiseStream};
use phi4::stopping::{restart_schedule, StoppingConfig};
use phi4::torus::{read_snapshot, smooth_random_field, write_snapshot, TorusGrid};

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(n, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn restart_gaps_never_exceed_theta(seed in 0u64..1000, eta in 2.0f64..30.0, theta in 0.02f64..0.3) {
        let stop = StoppingConfig::new(eta, theta, 0.3, 0.1).unwrap();
        let rec = restart_schedule(grid(8), 1.0, 0.01, 1.0, &stop, NoiseStream::new(seed, 0)).unwrap();
        prop_assert!(rec.max_gap() as f64 * rec.dt <= theta + 1e-12);
        prop_assert!(rec.taus.windows(2).all(|w| w[0] < w[1]));
        // N(t) is a non-decreasing step function starting at 1
        let counts: Vec<usize> = (0..=20).map(|i| rec.count(i as f64 * 0.05).unwrap()).collect();
        prop_assert_eq!(counts[0], 1);
        prop_assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn snapshots_round_trip_bit_exactly(seed in 0u64..1000, n in prop::sample::select(vec![8usize, 16, 32]), kmax in 1.0f64..6.0) {
        let f = smooth_random_field(grid(n), kmax, &mut cell_rng(seed, 0, Domain::Test, 0));
        let mut bytes = Vec::new();
        write_snapshot(&mut bytes, &f).unwrap();
        let g = read_snapshot(&bytes[..]).unwrap();
        let mut again = Vec::new();
        write_snapshot(&mut again, &g).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn trajectories_depend_only_on_seed_and_replica(seed in 0u64..1000, replica in 0u64..64) {
        let g = grid(8);
        let f = smooth_random_field(g, 3.0, &mut cell_rng(seed, replica, Domain::Initial, 0));
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.1);
        let a = evolve(&f, &cfg, NoiseStream::new(seed, replica), None).unwrap();
        // a different thread, with other replicas running alongside
        let b = std::thread::scope(|s| {
            let other = s.spawn(|| evolve(&f, &cfg, NoiseStream::new(seed, replica + 1), None).unwrap());
            let mine = s.spawn(|| evolve(&f, &cfg, NoiseStream::new(seed, replica), None).unwrap());
            other.join().unwrap();
            mine.join().unwrap()
        });
        let (ua, ub) = (full_solution(&a, 0.1).unwrap(), full_solution(&b, 0.1).unwrap());
        prop_assert_eq!(ua.real().to_vec(), ub.real().to_vec());
    }

    #[test]
    fn configs_survive_toml_round_trip(seed in any::<u64>(), half in 4usize..32, steps in 10u32..100_000, theta in 0.01f64..1.0) {
        let text = format!(
            "schema_version = 1\nexperiment = \"calibrate\"\nbase_seed = {seed}\n[grid]\nn = {}\n\
             [dynamics]\ndt = {:e}\n[stopping]\neta = \"calibrate\"\ntheta = {theta:e}\n",
            2 * half,
            1.0 / steps as f64
        );
        let cfg = RunConfig::from_toml(&text).unwrap();
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(cfg.to_toml(), back.to_toml());
        prop_assert_eq!(back.base_seed, seed);
    }
}
