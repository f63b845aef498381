//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Positional arguments select criteria by number (`cargo test --test
//! acceptance -- 3 6`). `DRIFTARRIVAL_SLOW=1` adds the full-scale run of
//! criterion 7.

use std::process::ExitCode;
use std::time::Instant;

use driftarrival::analytic::{fap_pdf, fat_pdf, fim_closed_form, joint_pdf, log_joint_pdf, score};
use driftarrival::estimate::{efficiency_study, empirical_fim, mle, summed_score, StudySpec};
use driftarrival::rng::{derive_key, CounterRng};
use driftarrival::samples::{SampleHeader, SampleWriter, Units};
use driftarrival::simulate::simulate_chunked;
use driftarrival::validate::{build_histogram, default_grid, gof_report};
use driftarrival::{normalize, simulate, ChannelParams, CrossingMode, PhysicalConfig, SimSpec};
use driftarrival_testkit::{integrate_log_half_line, integrate_real_line};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn uniform(rng: &mut CounterRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.open01()
}

fn gaussian(rng: &mut CounterRng) -> f64 {
    let (u, v) = (rng.open01(), rng.open01());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn params(dim: usize, sigma_sq: f64, drift: &[f64], origin: &[f64]) -> ChannelParams {
    ChannelParams::new(dim, sigma_sq.sqrt(), drift.to_vec(), origin.to_vec()).unwrap()
}

/// `int_0^inf g(t) dt` for integrands shaped like the arrival law.
fn time_integral(g: impl FnMut(f64) -> f64, rel: f64) -> f64 {
    integrate_log_half_line(
        g,
        (1e-5f64).ln(),
        400f64.ln(),
        &[0.1, 0.3, 1.0, 3.0, 10.0],
        ABS_FLOOR,
        rel,
    )
    .value
}

/// Absolute tolerance for nested integrals whose totals are of order one.
const ABS_FLOOR: f64 = 1e-13;

fn lateral_integral(
    p: &ChannelParams,
    mut g: impl FnMut(&[f64]) -> f64,
    center: &[f64],
    scale: f64,
    rel: f64,
) -> f64 {
    match center.len() {
        1 => integrate_real_line(|x| g(&[x]), center[0], scale, ABS_FLOOR, rel).value,
        2 => {
            integrate_real_line(
                |x2| integrate_real_line(|x3| g(&[x2, x3]), center[1], scale, ABS_FLOOR, rel).value,
                center[0],
                scale,
                ABS_FLOOR,
                rel,
            )
            .value
        }
        _ => unreachable!("dimension {} not covered", p.dim()),
    }
}

fn c1_fim_closed_form() -> Outcome {
    let a = fim_closed_form(&ChannelParams::isotropic(2, 0.5).unwrap());
    let b = fim_closed_form(&ChannelParams::isotropic(3, 1.0).unwrap());
    let ok_a = a.rows() == vec![vec![16.0, 0.0], vec![0.0, 4.0]];
    let ok_b = b.rows()
        == vec![
            vec![6.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
    Outcome::new(
        ok_a && ok_b,
        format!(
            "D=2,sigma=.5 -> {:?}; D=3,sigma=1 -> {:?}",
            a.diagonal(),
            b.diagonal()
        ),
    )
}

fn c2_empirical_fim() -> Outcome {
    let p = params(2, 0.5, &[-3.0], &[0.0]);
    let spec = SimSpec::new(100_000, 1e-3, 50.0, 0xF1).with_crossing(CrossingMode::BridgeCorrected);
    let r = simulate(&p, &spec).unwrap();
    let emp = empirical_fim(&r.arrivals, &p).unwrap();
    let closed = fim_closed_form(&p);

    let n = r.arrivals.len() as f64;
    let cross: Vec<f64> = r
        .arrivals
        .iter()
        .map(|s| {
            let g = score(s.time, s.lateral, &p).unwrap();
            g[0] * g[1]
        })
        .collect();
    let mean = cross.iter().sum::<f64>() / n;
    let sd = (cross.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se_off = sd / n.sqrt();

    let rel: Vec<f64> = (0..2)
        .map(|i| emp.get(i, i) / closed.get(i, i) - 1.0)
        .collect();
    let off_in_se = emp.get(0, 1).abs() / se_off;
    let pass = rel.iter().all(|r| r.abs() < 0.03) && off_in_se < 4.0 && r.n_censored == 0;
    Outcome::new(
        pass,
        format!(
            "diag {:.4?} vs {:?} (rel {:+.4?}), off-diag {:+.4} = {off_in_se:.2} SE, censored {}",
            emp.diagonal(),
            closed.diagonal(),
            rel,
            emp.get(0, 1),
            r.n_censored
        ),
    )
}

fn c3_marginalization() -> Outcome {
    let mut rng = CounterRng::new(0xB55E1);
    let cases = [
        params(2, 0.5, &[-3.0], &[0.0]),
        params(3, 0.36, &[1.0, -0.5], &[0.2, -0.1]),
    ];
    let mut worst = 0.0f64;
    for p in &cases {
        for _ in 0..50 {
            let x: Vec<f64> = (0..p.dim() - 1)
                .map(|k| {
                    p.lateral_origin()[k]
                        + p.lateral_drift()[k] * uniform(&mut rng, 0.2, 2.0)
                        + p.sigma() * uniform(&mut rng, -2.5, 2.5)
                })
                .collect();
            let oracle = time_integral(|t| joint_pdf(t, &x, p).unwrap(), 1e-11);
            let fap = fap_pdf(&x, p).unwrap();
            worst = worst.max((fap / oracle - 1.0).abs());
        }
    }
    Outcome::new(
        worst < 1e-6,
        format!("worst relative error {worst:.2e} over 100 points (tol 1e-6)"),
    )
}

fn c4_moments() -> Outcome {
    let mut worst = 0.0f64;
    for s2 in [0.09, 0.25, 0.5, 1.0] {
        let p = params(1, s2, &[], &[]);
        let m1 = time_integral(|t| t * fat_pdf(t, &p).unwrap(), 1e-13);
        let m_inv = time_integral(|t| fat_pdf(t, &p).unwrap() / t, 1e-13);
        worst = worst.max((m1 - 1.0).abs()).max((m_inv - (1.0 + s2)).abs());
    }
    Outcome::new(
        worst < 1e-8,
        format!("worst absolute error {worst:.2e} (tol 1e-8)"),
    )
}

fn c5_normalization() -> Outcome {
    let mut worst_joint = 0.0f64;
    let mut worst_fap = 0.0f64;
    for dim in 1..=3 {
        for sigma in [0.3, 0.5, 1.0] {
            for v in [0.0, -3.0, 1.0] {
                if dim == 1 && v != 0.0 {
                    continue;
                }
                let drift: Vec<f64> = [v, 0.5][..dim - 1].to_vec();
                let origin: Vec<f64> = [0.1, -0.2][..dim - 1].to_vec();
                let p = ChannelParams::new(dim, sigma, drift.clone(), origin.clone()).unwrap();
                let joint_total = if dim == 1 {
                    time_integral(|t| joint_pdf(t, &[], &p).unwrap(), 1e-11)
                } else {
                    time_integral(
                        |t| {
                            let center: Vec<f64> =
                                origin.iter().zip(&drift).map(|(o, v)| o + v * t).collect();
                            lateral_integral(
                                &p,
                                |x| joint_pdf(t, x, &p).unwrap(),
                                &center,
                                sigma * t.sqrt(),
                                1e-10,
                            )
                        },
                        1e-9,
                    )
                };
                worst_joint = worst_joint.max((joint_total - 1.0).abs());
                if dim > 1 {
                    let center: Vec<f64> = origin.iter().zip(&drift).map(|(o, v)| o + v).collect();
                    let scale = sigma * (1.0 + v.abs());
                    let fap_total =
                        lateral_integral(&p, |x| fap_pdf(x, &p).unwrap(), &center, scale, 1e-11);
                    worst_fap = worst_fap.max((fap_total - 1.0).abs());
                }
            }
        }
    }
    Outcome::new(
        worst_joint < 1e-6 && worst_fap < 1e-6,
        format!("worst |joint - 1| {worst_joint:.2e}, |fap - 1| {worst_fap:.2e} over D in 1..=3 (tol 1e-6)"),
    )
}

fn c6_score() -> Outcome {
    let mut rng = CounterRng::new(0x5C0E);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dim = 1 + (rng.open01() * 3.0) as usize;
        let sigma = uniform(&mut rng, 0.3, 1.2);
        let drift: Vec<f64> = (1..dim).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
        let origin: Vec<f64> = (1..dim).map(|_| uniform(&mut rng, -0.5, 0.5)).collect();
        let p = ChannelParams::new(dim, sigma, drift.clone(), origin.clone()).unwrap();
        let t = uniform(&mut rng, 0.2, 3.0);
        let x: Vec<f64> = (0..dim - 1)
            .map(|k| origin[k] + drift[k] * t + sigma * t.sqrt() * gaussian(&mut rng))
            .collect();

        let analytic = score(t, &x, &p).unwrap();
        let norm = analytic
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
            .max(1e-300);
        let theta = p.theta();
        for i in 0..theta.len() {
            let h = 1e-4 * theta[i].abs().max(1.0);
            let at = |delta: f64| {
                let mut th = theta.clone();
                th[i] += delta;
                let q = ChannelParams::from_theta(&th, origin.clone()).unwrap();
                log_joint_pdf(t, &x, &q).unwrap()
            };
            // Richardson-extrapolated central difference.
            let d1 = (at(h) - at(-h)) / (2.0 * h);
            let d2 = (at(h / 2.0) - at(-h / 2.0)) / h;
            let fd = (4.0 * d2 - d1) / 3.0;
            worst = worst.max((fd - analytic[i]).abs() / norm);
        }
    }

    let p = params(2, 0.5, &[-3.0], &[0.0]);
    let r = simulate(
        &p,
        &SimSpec::new(10_000, 1e-3, 50.0, 0x5C0F).with_crossing(CrossingMode::BridgeCorrected),
    )
    .unwrap();
    let est = mle(&r.arrivals, p.lateral_origin()).unwrap();
    let p_hat = ChannelParams::from_theta(&est.theta_hat, p.lateral_origin().to_vec()).unwrap();
    let at_mle = summed_score(&r.arrivals, &p_hat).unwrap();
    let max_at_mle = at_mle.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    Outcome::new(
        worst < 1e-5 && max_at_mle < 1e-8,
        format!("worst relative FD error {worst:.2e} (tol 1e-5); |summed score at MLE| {max_at_mle:.2e} (tol 1e-8)"),
    )
}

fn reference_case(lateral_drift: f64) -> ChannelParams {
    normalize(&PhysicalConfig {
        tx_rx_distance: 1.0,
        perp_drift: 1.0,
        diffusion_sigma_sq: 0.5,
        lateral_drift_phys: vec![lateral_drift],
        lateral_origin_phys: vec![0.0],
    })
    .unwrap()
}

fn gof_run(
    p: &ChannelParams,
    n: u64,
    seed: u64,
    crossing: CrossingMode,
) -> driftarrival::validate::GofReport {
    let horizon = 2.0;
    let r = simulate(
        p,
        &SimSpec::new(n, 1e-3, horizon, seed).with_crossing(crossing),
    )
    .unwrap();
    let (te, xe) = default_grid(p, horizon, 0).unwrap();
    let h = build_histogram(&r.arrivals, &te, &xe, 0).unwrap();
    gof_report(&h, p, horizon).unwrap()
}

fn c7_reproduction(slow: bool) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for v in [0.0, -3.0] {
        let p = reference_case(v);
        let step_end = gof_run(
            &p,
            100_000,
            derive_key(0x5EC7, v.to_bits()),
            CrossingMode::StepEnd,
        );
        let ok_tv = step_end.total_variation < 0.02;

        let base = derive_key(0xB81D, v.to_bits());
        let mut passed = 0;
        let mut mean_tv = 0.0;
        for i in 0..100 {
            let g = gof_run(
                &p,
                100_000,
                derive_key(base, i),
                CrossingMode::BridgeCorrected,
            );
            passed += (g.p_value > 0.01) as u32;
            mean_tv += g.total_variation / 100.0;
        }
        let ok_p = passed >= 90;
        pass &= ok_tv && ok_p;
        parts.push(format!(
            "v=(1,{v}): step-end TV {:.4} (tol .02) {}; bridge p>.01 in {passed}/100 {} (bridge mean TV {mean_tv:.4})",
            step_end.total_variation,
            if ok_tv { "ok" } else { "FAIL" },
            if ok_p { "ok" } else { "FAIL" },
        ));
        if slow {
            let full = gof_run(
                &p,
                1_000_000,
                derive_key(0xF011, v.to_bits()),
                CrossingMode::StepEnd,
            );
            let ok = full.total_variation < 0.01;
            pass &= ok;
            parts.push(format!(
                "v=(1,{v}) n=1e6 step-end TV {:.4} (tol .01) {}",
                full.total_variation,
                if ok { "ok" } else { "FAIL" }
            ));
        }
    }
    if !slow {
        parts.push("n=1e6 run skipped (set DRIFTARRIVAL_SLOW=1)".into());
    }
    Outcome::new(pass, parts.join("; "))
}

fn c8_efficiency() -> Outcome {
    let p = params(2, 0.5, &[0.0], &[0.0]);
    let report = efficiency_study(&p, &StudySpec::new(10_000, 200, 0xC21B)).unwrap();
    let r_sigma = report.rows[0].ratio;
    let r_v = report.rows[1].ratio;
    let r_time = report.time_only_to_joint_variance_ratio;
    let pass = (0.9..=1.15).contains(&r_sigma)
        && (0.9..=1.15).contains(&r_v)
        && (r_time / p.dim() as f64 - 1.0).abs() <= 0.15;
    Outcome::new(
        pass,
        format!(
            "n var / CRLB: sigma {r_sigma:.3}, v2 {r_v:.3} (range [0.9, 1.15]); time-only/joint variance {r_time:.3} (target 2 +- 15%)"
        ),
    )
}

fn sample_file_bytes(p: &ChannelParams, spec: &SimSpec, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap();
    pool.install(|| {
        let header = SampleHeader {
            dim: p.dim(),
            units: Units::Dimensionless,
            seed: spec.seed,
            params: p.clone(),
            physical: None,
            sim: spec.clone(),
        };
        let mut w = SampleWriter::new(Vec::new(), &header).unwrap();
        let censored = simulate_chunked(p, spec, 7_000, |a| w.write_arrivals(a)).unwrap();
        w.finish(censored).unwrap()
    })
}

fn c9_determinism() -> Outcome {
    let p = params(3, 0.5, &[-3.0, 1.0], &[0.0, 0.0]);
    let spec = SimSpec::new(20_000, 1e-3, 2.0, 0xDE7).with_crossing(CrossingMode::BridgeCorrected);
    let reference = sample_file_bytes(&p, &spec, 1);
    let same: Vec<bool> = [4, 8]
        .iter()
        .map(|&k| sample_file_bytes(&p, &spec, k) == reference)
        .collect();
    Outcome::new(
        same.iter().all(|&b| b),
        format!(
            "{} bytes; identical at 4 threads: {}, 8 threads: {}",
            reference.len(),
            same[0],
            same[1]
        ),
    )
}

type Criterion = (usize, &'static str, Box<dyn Fn() -> Outcome>);

fn main() -> ExitCode {
    let slow = std::env::var("DRIFTARRIVAL_SLOW").is_ok_and(|v| !v.is_empty() && v != "0");
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: Vec<Criterion> = vec![
        (1, "closed-form FIM", Box::new(c1_fim_closed_form)),
        (
            2,
            "empirical vs closed-form FIM",
            Box::new(c2_empirical_fim),
        ),
        (
            3,
            "Bessel marginalization identity",
            Box::new(c3_marginalization),
        ),
        (4, "inverse Gaussian moments", Box::new(c4_moments)),
        (5, "normalizations", Box::new(c5_normalization)),
        (6, "score correctness", Box::new(c6_score)),
        (
            7,
            "drift-case reproduction",
            Box::new(move || c7_reproduction(slow)),
        ),
        (8, "CRLB efficiency", Box::new(c8_efficiency)),
        (
            9,
            "determinism across thread counts",
            Box::new(c9_determinism),
        ),
    ];

    let mut failures = 0;
    for (id, name, run) in &criteria {
        if !selected.is_empty() && !selected.contains(id) {
            continue;
        }
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {} ({secs:.1}s)", out.detail);
        failures += usize::from(!out.pass);
    }
    if failures > 0 {
        println!("acceptance: {failures} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    }
}
