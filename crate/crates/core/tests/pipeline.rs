use lml_core::coupling::{coupled_chain, maximal_couple, tv_shifted, tv_unhalved};
use lml_core::rng::trial_rng;
use lml_core::sde::{integrate, left_limit_at, ModelConfig, SchemeIncrements};
use lml_core::stable_noise::{sample_jump_stream, StableSpec};
use lml_core::stopping::{detect_sigma, detect_sigma_bar, detect_sigma_dagger};
use proptest::prelude::*;

#[test]
fn path_csv_has_documented_header_and_rows() {
    let c = ModelConfig::default();
    let mut rng = trial_rng(1, 0);
    let stream = sample_jump_stream(&c.noise, c.waiting_t, 5.0, &mut rng).unwrap();
    let mut src = SchemeIncrements::new(&c, &mut rng);
    let path = integrate(&c, [0.1, -0.2], &stream, &mut src, 5.0).unwrap();
    let mut buf = Vec::new();
    path.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,x1,x2,jump_flag,jump_size"));
    assert_eq!(lines.count(), path.times.len());
    for t in path.jump_times() {
        assert!(left_limit_at(&path, t).is_ok());
    }
}

#[test]
fn chain_csv_round_trips_states() {
    let c = ModelConfig::default();
    let mut rng = trial_rng(2, 0);
    let chain = coupled_chain(&c, [0.5, 0.0], [-0.5, 0.1], 12, &mut rng).unwrap();
    let mut buf = Vec::new();
    chain.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for (line, rec) in text.lines().skip(1).zip(&chain.records) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 8);
        assert_eq!(cols[1].parse::<f64>().unwrap(), rec.s_x[0]);
        assert_eq!(cols[4].parse::<f64>().unwrap(), rec.s_y[1]);
    }
}

#[test]
fn stopping_times_compose_in_order_on_real_chains() {
    let c = ModelConfig::default();
    for seed in 0..50 {
        let mut rng = trial_rng(3, seed);
        let chain = coupled_chain(&c, [0.3, 0.2], [-0.3, -0.1], 40, &mut rng).unwrap();
        let (s, dg, b) = (
            detect_sigma(&chain, c.d_close),
            detect_sigma_dagger(&chain, c.d_close),
            detect_sigma_bar(&chain, c.d_close, c.m_radius),
        );
        if let (Some(a), Some(bb)) = (s.hit(), dg.hit()) {
            assert!(a <= bb);
        }
        if let (Some(a), Some(bb)) = (dg.hit(), b.hit()) {
            assert!(a <= bb);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coalesced_pairs_land_together(x in -5.0f64..5.0, dx in -3.0f64..3.0, seed in 0u64..1000) {
        let spec = StableSpec::default();
        let mut rng = trial_rng(seed, 0);
        let out = maximal_couple(&spec, x, x + dx, &mut rng).unwrap();
        if out.coalesced {
            prop_assert_eq!(out.xi_x, out.xi_y);
        }
        prop_assert!(out.xi_x.is_finite() && out.xi_y.is_finite());
    }

    #[test]
    fn tv_is_symmetric_and_bounded(z1 in -3.0f64..3.0, z2 in -3.0f64..3.0) {
        let spec = StableSpec::default();
        let a = tv_unhalved(&spec, z1, z2).unwrap();
        let b = tv_unhalved(&spec, z2, z1).unwrap();
        prop_assert!((a - b).abs() < 1e-7);
        prop_assert!((0.0..=2.0 + 1e-9).contains(&a));
        prop_assert!((tv_shifted(&spec, z1, z2).unwrap() - a / 2.0).abs() < 1e-7);
    }
}
