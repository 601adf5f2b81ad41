use ctbp::branching::{advance, advance_observed, build_omega, compute_moment_operators, malthusian, Event};
use ctbp::linalg::{real_eigenvalues, DenseMatrix};
use ctbp::models::{build_piecewise, build_seir, build_staged_seir, PiecewiseParams, SeirParams, StagedSeirParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

fn base(r0: f64) -> SeirParams {
    SeirParams::from_r0(r0, 0.375, 3.0 / 28.0, 0.75).unwrap()
}

#[test]
fn seir_growth_rate_and_type_weights() {
    let (model, _) = build_seir(&SeirParams::new(0.3, 0.375, 3.0 / 28.0, 0.75).unwrap()).unwrap();
    let omega = build_omega(&model).block(0, 0, 2, 2);
    let mut vals = real_eigenvalues(&omega).unwrap();
    vals.sort_by(f64::total_cmp);
    assert!((vals[0] + 0.6022).abs() < 1e-3, "{vals:?}");
    assert!((vals[1] - 0.1201).abs() < 1e-3, "{vals:?}");
    let (phi, u) = malthusian(&omega).unwrap();
    assert!((phi - 0.1201).abs() < 1e-3);
    assert!((u[1] / u[0] - 1.65).abs() < 1e-2, "{u:?}");
}

#[test]
fn staged_exposed_period_is_erlang() {
    let params = StagedSeirParams::new(base(2.0), 8, 8).unwrap();
    assert_eq!(params.stage_delta(), 3.0);
    let (model, _) = build_staged_seir(&params).unwrap();
    let r = params.types();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut durations = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let mut z = vec![0u64; r];
        z[0] = 1;
        let mut done = None;
        advance_observed(&model, &mut z, 60.0, &mut rng, |t, ev| {
            if done.is_none() {
                if let Event::Death { agent: 7, .. } = ev {
                    done = Some(t);
                }
            }
        });
        durations.push(done.expect("exposed period ended"));
    }
    durations.sort_by(f64::total_cmp);
    let erlang = Gamma::new(8.0, 3.0).unwrap();
    let n = durations.len() as f64;
    let d = durations
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = erlang.cdf(*x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic KS critical value at the 1% level.
    assert!(d < 1.628 / n.sqrt(), "ks {d}");
}

/// Expected daily cases from `z0` over `days` unit steps.
fn expected_cases(params: &StagedSeirParams, days: usize) -> Vec<f64> {
    let (model, _) = build_staged_seir(params).unwrap();
    let ops = compute_moment_operators(&model, 1.0).unwrap();
    let r = params.types();
    let mut z = vec![0.0; r];
    z[0] = 6.0;
    (0..days)
        .map(|_| {
            z[r - 1] = 0.0;
            z = ops.f.left_mul_vec(&z).unwrap();
            z[r - 1]
        })
        .collect()
}

#[test]
fn staging_preserves_expected_final_size() {
    // Below threshold each index case leaves p / (1 - R0) expected cases,
    // whatever the stage counts.
    let r0 = 0.7;
    let expect = 6.0 * 0.75 / (1.0 - r0);
    for (ke, ki) in [(1, 1), (8, 8), (3, 5)] {
        let total: f64 = expected_cases(&StagedSeirParams::new(base(r0), ke, ki).unwrap(), 1_000).iter().sum();
        assert!((total - expect).abs() < 1e-6 * expect, "({ke},{ki}): {total}");
    }
}

#[test]
fn staged_cumulative_cases_match_monte_carlo() {
    let params = StagedSeirParams::new(base(2.8), 8, 8).unwrap();
    let expect: f64 = expected_cases(&params, 25).iter().sum();
    let (model, _) = build_staged_seir(&params).unwrap();
    let r = params.types();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let reps = 4_000;
    let totals: Vec<f64> = (0..reps)
        .map(|_| {
            let mut z = vec![0u64; r];
            z[0] = 6;
            let mut cum = 0;
            for _ in 0..25 {
                z[r - 1] = 0;
                advance(&model, &mut z, 1.0, &mut rng);
                cum += z[r - 1];
            }
            cum as f64
        })
        .collect();
    let m = totals.iter().sum::<f64>() / reps as f64;
    let sd = (totals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!((m - expect).abs() <= 4.0 * sd / (reps as f64).sqrt(), "{m} vs {expect}");
}

#[test]
fn single_stage_is_plain_seir() {
    let p = base(2.1);
    let (a, _) = build_seir(&p).unwrap();
    let (b, _) = build_staged_seir(&StagedSeirParams::new(p, 1, 1).unwrap()).unwrap();
    assert_eq!(build_omega(&a), build_omega(&b));
    let (oa, ob) = (compute_moment_operators(&a, 1.0).unwrap(), compute_moment_operators(&b, 1.0).unwrap());
    assert!((&oa.f - &ob.f).max_abs() < 1e-14);
}

#[test]
fn piecewise_windows_switch_rates() {
    let params = PiecewiseParams::from_r_values(&[2.0, 0.8, 1.2], 7, 0.375, 3.0 / 28.0, 0.75).unwrap();
    assert_eq!(params.horizon(), 21);
    let ops = build_piecewise(&params).unwrap();
    let r_of = |t: usize| {
        let m = ops.models.get(t).unwrap();
        let omega: DenseMatrix = build_omega(m);
        omega[(1, 0)] / (3.0 / 28.0)
    };
    assert!((r_of(7) - 2.0).abs() < 1e-12);
    assert!((r_of(8) - 0.8).abs() < 1e-12);
    assert!((r_of(21) - 1.2).abs() < 1e-12);
    assert!(ops.models.get(22).is_err());
    let repeated = PiecewiseParams::from_r_values(&[2.0, 0.8, 2.0], 7, 0.375, 3.0 / 28.0, 0.75).unwrap();
    assert_eq!(build_piecewise(&repeated).unwrap().computations, 2);
}
