use driftarrival::analytic::fat_cdf;
use driftarrival::rng::derive_key;
use driftarrival::simulate::{empirical_moments, simulate_chunked, Moments};
use driftarrival::{simulate, Arrivals, ChannelParams, CrossingMode, Error, SimSpec};
use proptest::prelude::*;

const BRIDGE: CrossingMode = CrossingMode::BridgeCorrected;

fn planar(sigma_sq: f64, v: f64) -> ChannelParams {
    ChannelParams::new(2, sigma_sq.sqrt(), vec![v], vec![0.0]).unwrap()
}

fn within(m: &Moments, value: f64, target: f64, se: f64) {
    assert!(
        (value - target).abs() < 4.0 * se,
        "{value} vs {target} (se {se}, n {}, censored {})",
        m.n,
        m.censored_fraction
    );
}

#[test]
fn absorbed_fraction_matches_fat_cdf_at_reference_scale() {
    let p = planar(0.5, 0.0);
    let spec = SimSpec::new(1_000_000, 1e-3, 2.0, 0xAB5).with_crossing(BRIDGE);
    let r = simulate(&p, &spec).unwrap();
    let q = fat_cdf(2.0, &p).unwrap();
    let se = (q * (1.0 - q) / 1e6).sqrt();
    let got = r.absorbed_fraction();
    assert!((got - q).abs() < 3.0 * se, "{got} vs {q} (se {se})");
    assert!(r.arrivals.times().iter().all(|&t| t > 0.0 && t <= 2.0));
    assert_eq!(r.arrivals.len() as u64 + r.n_censored, 1_000_000);
}

#[test]
fn inverse_gaussian_moments() {
    let p = planar(0.25, 0.0);
    let r = simulate(
        &p,
        &SimSpec::new(100_000, 1e-3, 50.0, 0x30).with_crossing(BRIDGE),
    )
    .unwrap();
    let m = empirical_moments(&r).unwrap();
    within(&m, m.mean_t, 1.0, m.stderr_t);
    within(&m, m.mean_inv_t, 1.25, m.stderr_inv_t);
    assert_eq!(m.censored_fraction, 0.0);
}

#[test]
fn lateral_mean_follows_drift() {
    let p = planar(0.5, -3.0);
    let r = simulate(
        &p,
        &SimSpec::new(100_000, 1e-3, 50.0, 0x31).with_crossing(BRIDGE),
    )
    .unwrap();
    let m = empirical_moments(&r).unwrap();
    within(&m, m.mean_lateral[0], -3.0, m.stderr_lateral[0]);
}

#[test]
fn higher_dimensions_simulate_each_lateral_axis() {
    let p = ChannelParams::new(4, 0.6, vec![1.0, -2.0, 0.0], vec![0.5, 0.0, -0.5]).unwrap();
    let r = simulate(
        &p,
        &SimSpec::new(50_000, 1e-3, 40.0, 0x32).with_crossing(BRIDGE),
    )
    .unwrap();
    let m = empirical_moments(&r).unwrap();
    for (k, target) in [1.5, -2.0, -0.5].into_iter().enumerate() {
        within(&m, m.mean_lateral[k], target, m.stderr_lateral[k]);
    }
}

#[test]
fn longer_horizons_never_lose_arrivals() {
    let p = planar(0.5, 1.0);
    let mut last = 0;
    for horizon in [0.5, 1.0, 2.0, 4.0] {
        for crossing in [CrossingMode::StepEnd, BRIDGE] {
            let r = simulate(
                &p,
                &SimSpec::new(20_000, 1e-2, horizon, 5).with_crossing(crossing),
            )
            .unwrap();
            if crossing == CrossingMode::StepEnd {
                assert!(r.arrivals.len() >= last);
                last = r.arrivals.len();
            }
        }
    }
}

fn absorbed_fraction(p: &ChannelParams, dt: f64, seed: u64, crossing: CrossingMode, n: u64) -> f64 {
    simulate(p, &SimSpec::new(n, dt, 2.0, seed).with_crossing(crossing))
        .unwrap()
        .absorbed_fraction()
}

#[test]
fn halving_dt_stays_inside_the_euler_bias_envelope() {
    let p = planar(0.5, 0.0);
    let n = 100_000;
    for dt in [2e-2, 1e-2] {
        let coarse = absorbed_fraction(&p, dt, 8, CrossingMode::StepEnd, n);
        let fine = absorbed_fraction(&p, dt / 2.0, 8, CrossingMode::StepEnd, n);
        // Step-end misses excursions above the barrier of order 0.5826 sigma sqrt(dt).
        let envelope = 0.5826 * p.sigma() * dt.sqrt() + 4.0 * (0.25 / n as f64).sqrt();
        assert!(
            fine >= coarse - 4.0 * (0.25 / n as f64).sqrt(),
            "refinement should not lose arrivals"
        );
        assert!(
            (fine - coarse).abs() < envelope,
            "dt {dt}: {coarse} -> {fine}, envelope {envelope}"
        );
    }
}

#[test]
fn bridge_correction_reduces_crossing_bias() {
    let p = planar(0.5, 0.0);
    let q = fat_cdf(2.0, &p).unwrap();
    let (mut err_step, mut err_bridge) = (0.0, 0.0);
    for i in 0..20 {
        let seed = derive_key(0xD7, i);
        err_step += (absorbed_fraction(&p, 1e-2, seed, CrossingMode::StepEnd, 20_000) - q).abs();
        err_bridge += (absorbed_fraction(&p, 1e-2, seed, BRIDGE, 20_000) - q).abs();
    }
    assert!(
        err_bridge < err_step,
        "bridge {err_bridge} vs step-end {err_step}"
    );
}

#[test]
fn identical_seeds_are_reproducible_and_distinct_seeds_differ() {
    let p = planar(0.5, -3.0);
    let spec = SimSpec::new(5_000, 1e-3, 2.0, 17).with_crossing(BRIDGE);
    let a = simulate(&p, &spec).unwrap();
    let b = simulate(&p, &spec).unwrap();
    assert_eq!(a.arrivals, b.arrivals);
    let c = simulate(&p, &spec.clone().with_seed(18)).unwrap();
    assert_ne!(a.arrivals, c.arrivals);
}

#[test]
fn thread_count_does_not_change_results() {
    let p = planar(0.5, -3.0);
    let spec = SimSpec::new(10_000, 1e-3, 2.0, 99);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate(&p, &spec).unwrap())
    };
    let one = run(1);
    assert_eq!(one.arrivals, run(3).arrivals);
    assert_eq!(one.arrivals, run(8).arrivals);
}

#[test]
fn chunked_simulation_matches_one_shot() {
    let p = planar(0.5, 1.0);
    let spec = SimSpec::new(9_000, 1e-3, 2.0, 4).with_crossing(BRIDGE);
    let whole = simulate(&p, &spec).unwrap();
    let mut pieces = Arrivals::new(2);
    let censored = simulate_chunked(&p, &spec, 1_234, |chunk| {
        pieces.append(&mut chunk.clone());
        Ok(())
    })
    .unwrap();
    assert_eq!(pieces, whole.arrivals);
    assert_eq!(censored, whole.n_censored);
}

#[test]
fn capacity_guard_rejects_oversized_runs() {
    let p = planar(0.5, 0.0);
    let mut spec = SimSpec::new(1_000, 1e-3, 2.0, 0);
    spec.max_particle_steps = 1_000_000;
    assert!(matches!(simulate(&p, &spec), Err(Error::Capacity { .. })));
    spec.max_particle_steps = 2_000_000;
    assert!(simulate(&p, &spec).is_ok());
}

#[test]
fn invalid_protocols_are_rejected() {
    let p = planar(0.5, 0.0);
    for spec in [
        SimSpec::new(0, 1e-3, 2.0, 0),
        SimSpec::new(10, 0.0, 2.0, 0),
        SimSpec::new(10, 3.0, 2.0, 0),
        SimSpec::new(10, 1e-3, f64::INFINITY, 0),
    ] {
        assert!(
            matches!(simulate(&p, &spec), Err(Error::InvalidConfig(_))),
            "{spec:?}"
        );
    }
}

#[test]
fn censoring_warning_threshold() {
    let p = planar(0.5, 0.0);
    let r = simulate(&p, &SimSpec::new(2_000, 1e-2, 1.0, 3)).unwrap();
    let m = empirical_moments(&r).unwrap();
    assert!(m.censored_fraction > driftarrival::simulate::CENSORING_WARN_FRACTION);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn arrivals_respect_the_horizon(
        sigma in 0.2f64..1.5,
        v in -3.0f64..3.0,
        horizon in 0.2f64..3.0,
        seed in any::<u64>(),
        bridge in any::<bool>(),
    ) {
        let p = ChannelParams::new(3, sigma, vec![v, 0.0], vec![0.0, 1.0]).unwrap();
        let crossing = if bridge { BRIDGE } else { CrossingMode::StepEnd };
        let r = simulate(&p, &SimSpec::new(300, 1e-2, horizon, seed).with_crossing(crossing)).unwrap();
        prop_assert_eq!(r.arrivals.len() as u64 + r.n_censored, 300);
        prop_assert!(r.arrivals.times().iter().all(|&t| t > 0.0 && t <= horizon));
        prop_assert!(r.arrivals.iter().all(|s| s.lateral.iter().all(|x| x.is_finite())));
    }
}
