use num_complex::Complex64;
use otoc_core::noise::NoiseModel;
use otoc_core::protocol::{
    build_trotter_step, decay_rate, run_experiment, temperature_sweep, Evolution, OtocExperiment, Preparation,
    SeriesField, TrotterSchedule,
};
use otoc_core::spinchain::{build_hamiltonian, diagonalize, exact_two_copy_evolve, Temperature, TfimParams};
use otoc_core::statevector::{Pauli, StateVector};

const FIXTURE: &str = include_str!("fixtures/otoc_n3.txt");

fn fixture() -> Vec<(Temperature, f64, f64)> {
    FIXTURE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split_whitespace().collect();
            (c[0].parse().unwrap(), c[1].parse().unwrap(), c[2].parse().unwrap())
        })
        .collect()
}

fn fixture_value(temp: Temperature, t: f64) -> f64 {
    fixture().into_iter().find(|(tt, ti, _)| tt.approx_eq(&temp) && (ti - t).abs() < 1e-12).unwrap().2
}

fn exact_run(n: usize, temp: Temperature) -> OtocExperiment {
    OtocExperiment { evolution: Evolution::Exact, ..OtocExperiment::new(TfimParams::unit(n), temp) }
}

#[test]
fn exact_pipeline_reproduces_oracle() {
    for n in [2, 3] {
        for temp in Temperature::GRID {
            let s = run_experiment(&exact_run(n, temp)).unwrap();
            assert_eq!(s.points.len(), 4);
            for p in &s.points {
                assert!(
                    (p.o_state - p.o_exact).abs() <= 1e-10,
                    "N={n} T={temp} t={}: {} vs {}",
                    p.t,
                    p.o_state,
                    p.o_exact
                );
                assert!((p.parity + 1.0).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn exact_pipeline_with_other_operators() {
    for (w, ws, v, vs) in [(Pauli::Y, 2, Pauli::X, 3), (Pauli::X, 1, Pauli::Y, 2), (Pauli::Z, 3, Pauli::Z, 1)] {
        let e =
            OtocExperiment { w_pauli: w, w_site: ws, v_pauli: v, v_site: vs, ..exact_run(3, Temperature::Finite(1.0)) };
        for p in run_experiment(&e).unwrap().points {
            assert!((p.o_state - p.o_exact).abs() <= 1e-10, "{w:?}{ws} {v:?}{vs} t={}", p.t);
        }
    }
}

#[test]
fn series_match_frozen_fixture() {
    let temps = [Temperature::Zero, Temperature::Finite(2.0), Temperature::Infinite];
    let sweep = temperature_sweep(&exact_run(3, Temperature::Infinite), &temps).unwrap();
    assert_eq!(sweep.len(), 3);
    for (entry, temp) in sweep.iter().zip(temps) {
        assert_eq!(entry.temperature, temp);
        for p in &entry.series.points {
            assert!((p.o_state - fixture_value(temp, p.t)).abs() <= 1e-10);
        }
    }
}

#[test]
fn decay_rate_trend_against_fixture() {
    let base = exact_run(3, Temperature::Infinite);
    let sweep = temperature_sweep(&base, &Temperature::GRID).unwrap();
    for e in &sweep {
        let expected = (fixture_value(e.temperature, 0.8) - fixture_value(e.temperature, 0.4)) / 0.4;
        assert_eq!(decay_rate(&e.series, SeriesField::Exact).unwrap().lambda, e.lambda_exact);
        assert!((e.lambda_exact - expected).abs() <= 1e-9);
        assert!((e.lambda_state - expected).abs() <= 1e-9);
        assert!(e.lambda_exact > 0.0);
    }
    let lambda = |t: Temperature| sweep.iter().find(|e| e.temperature == t).unwrap().lambda_exact;
    assert!(lambda(Temperature::Infinite) > lambda(Temperature::Zero));
    // not monotone on this grid: the T=0.5 slope sits below the T=0 slope
    assert!(lambda(Temperature::Finite(0.5)) < lambda(Temperature::Zero));
}

#[test]
fn trotter_error_is_first_order() {
    let mut errors = Vec::new();
    for dt in [0.1_f64, 0.05, 0.025] {
        let n_steps = (0.8 / dt).round() as usize;
        let e = OtocExperiment {
            schedule: TrotterSchedule::uniform(dt, n_steps).unwrap(),
            ..OtocExperiment::new(TfimParams::unit(3), Temperature::Finite(1.0))
        };
        let last = run_experiment(&e).unwrap().points.pop().unwrap();
        assert!((last.t - 0.8).abs() < 1e-12);
        errors.push((last.o_state - last.o_exact).abs());
    }
    for w in errors.windows(2) {
        assert!(w[0] / w[1] >= 1.8, "{errors:?}");
    }
}

#[test]
fn single_step_local_error_is_second_order() {
    let p = TfimParams::unit(3);
    let sd = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap();
    let amps: Vec<Complex64> =
        (0..64).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos())).collect();
    let mut psi = StateVector::from_amplitudes(amps).unwrap();
    psi.normalize();
    let err = |dt: f64| {
        let mut trot = psi.clone();
        trot.apply_circuit(&build_trotter_step(&p, dt).unwrap()).unwrap();
        let exact = exact_two_copy_evolve(&psi, &sd, dt).unwrap();
        trot.amplitudes().iter().zip(exact.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
    assert!(e1 / e2 > 3.5 && e2 / e3 > 3.5, "{e1} {e2} {e3}");
    // C estimated from the finest step must bound the coarser ones too
    let c = e3 / (0.05f64 * 0.05);
    assert!(e1 <= 1.5 * c * 0.2 * 0.2 && e2 <= 1.5 * c * 0.1 * 0.1, "C = {c}: {e1} {e2}");
    assert!(err(1e-4) < 1e-7);
}

#[test]
fn noiseless_sampling_keeps_every_shot() {
    for prep in [Preparation::ExactTfd, Preparation::Reference] {
        let e = OtocExperiment {
            prep,
            shots: Some(20_000),
            seed: 9,
            ..OtocExperiment::new(TfimParams::unit(3), Temperature::Finite(2.0))
        };
        for p in run_experiment(&e).unwrap().points {
            assert_eq!(p.kept_fraction, Some(1.0));
            assert_eq!(p.o_postselected, p.o_sampled);
            assert!((p.parity + 1.0).abs() <= 1e-10);
            let se = p.std_error.unwrap();
            assert!((p.o_sampled.unwrap() - p.o_state).abs() <= 5.0 * se);
        }
    }
}

#[test]
fn sampled_estimates_track_state_over_seeds() {
    let mut within = 0;
    let mut total = 0;
    for seed in 0..20 {
        let e = OtocExperiment {
            shots: Some(10_000),
            seed,
            ..OtocExperiment::new(TfimParams::unit(3), Temperature::Infinite)
        };
        for p in run_experiment(&e).unwrap().points {
            total += 1;
            // a point at O = ±1 has zero spread and must hit exactly
            let se = p.std_error.unwrap();
            if (p.o_sampled.unwrap() - p.o_state).abs() <= (5.0 * se).max(1e-12) {
                within += 1;
            }
        }
    }
    assert!(within as f64 >= 0.99 * total as f64, "{within}/{total}");
}

#[test]
fn padded_sweep_has_equal_gate_counts() {
    let base = OtocExperiment {
        prep: Preparation::Reference,
        pad_depth: true,
        ..OtocExperiment::new(TfimParams::unit(3), Temperature::Infinite)
    };
    let sweep = temperature_sweep(&base, &Temperature::GRID).unwrap();
    for k in 0..4 {
        let counts: Vec<_> = sweep.iter().map(|e| e.series.points[k].gate_counts).collect();
        assert!(counts.windows(2).all(|w| w[0] == w[1]), "t index {k}: {counts:?}");
    }
    let unpadded = temperature_sweep(&OtocExperiment { pad_depth: false, ..base }, &Temperature::GRID).unwrap();
    for (a, b) in sweep.iter().zip(&unpadded) {
        for (p, q) in a.series.points.iter().zip(&b.series.points) {
            assert!((p.o_state - q.o_state).abs() <= 1e-10);
        }
    }
}

fn noisy(p2: f64, seed: u64) -> OtocExperiment {
    OtocExperiment {
        shots: Some(10_000),
        noise: Some(NoiseModel { p2, ..NoiseModel::default() }),
        seed,
        ..OtocExperiment::new(TfimParams::unit(3), Temperature::Infinite)
    }
}

#[test]
fn noise_damps_and_postselection_helps() {
    let s = run_experiment(&noisy(0.015, 1)).unwrap();
    let last = s.points.last().unwrap();
    let clean = last.o_state;
    let post = last.o_postselected.unwrap();
    let raw = last.o_sampled.unwrap();
    assert!(post.abs() < clean.abs());
    assert!((post - clean).abs() < (raw - clean).abs());
    let kept: Vec<f64> = s.points.iter().map(|p| p.kept_fraction.unwrap()).collect();
    assert!(kept.iter().all(|&k| k > 0.0 && k < 1.0));
    assert!(kept[3] < kept[1], "{kept:?}");
}

#[test]
fn stronger_noise_never_sharpens_the_signal() {
    let mags: Vec<(f64, f64)> = [0.0, 0.005, 0.015, 0.03]
        .iter()
        .map(|&p2| {
            let last = run_experiment(&noisy(p2, 4)).unwrap().points.pop().unwrap();
            (last.o_postselected.unwrap().abs(), last.std_error.unwrap())
        })
        .collect();
    for w in mags.windows(2) {
        let sigma = (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!(w[1].0 <= w[0].0 + 3.0 * sigma, "{mags:?}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let base = OtocExperiment { shots: Some(2_000), noise: Some(NoiseModel::default()), seed: 77, ..noisy(0.015, 77) };
    let temps = [Temperature::Zero, Temperature::Finite(1.0), Temperature::Infinite];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| temperature_sweep(&base, &temps).unwrap())
    };
    assert_eq!(run(1), run(4));
}
