use flowsurrogate::simulator::{
    face_fluxes, generate_permeability, run_simulation, solve_pressure, update_saturation, Face, FluidProps, Grid,
    PermField, PermSampler, SimConfig, WellSpec,
};
use flowsurrogate::Error;
use proptest::prelude::*;

fn grid(n: usize) -> Grid {
    Grid {
        h: n,
        w: n,
        dx: 1.0,
        dz: 1.0,
    }
}

fn desk(steps: usize) -> SimConfig {
    SimConfig {
        steps,
        ..SimConfig::default()
    }
}

// ----------------------------------------------------------------- sampler

#[test]
fn zero_log_std_gives_constant_field() {
    let f = generate_permeability(8, 8, 3.0, 0.0, 5).unwrap();
    assert!(f.k.iter().all(|&k| (k - 100.0).abs() < 1e-12));
}

#[test]
fn sampler_is_seed_deterministic() {
    let a = generate_permeability(10, 10, 3.0, 1.0, 42).unwrap();
    let b = generate_permeability(10, 10, 3.0, 1.0, 42).unwrap();
    let c = generate_permeability(10, 10, 3.0, 1.0, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.k, c.k);
    assert!(a.k.iter().all(|&k| k > 0.0 && k.is_finite()));
}

#[test]
fn invalid_sampler_parameters_are_config_errors() {
    for (l, s) in [(0.0, 1.0), (-1.0, 1.0), (2.0, -0.5), (f64::NAN, 1.0)] {
        assert!(matches!(generate_permeability(4, 4, l, s, 0), Err(Error::Config(_))), "{l} {s}");
    }
    assert!(matches!(generate_permeability(65, 64, 2.0, 1.0, 0), Err(Error::Config(_))));
}

#[test]
fn sample_covariance_matches_exponential_model() {
    let (sigma, ell) = (0.8, 3.0);
    let sampler = PermSampler::new(8, 8, ell, sigma, 0.0).unwrap();
    let (mut lag0, mut lag1, mut n0, mut n1) = (0.0, 0.0, 0.0, 0.0);
    for seed in 0..500 {
        let z = sampler.sample_log(seed);
        for y in 0..8 {
            for x in 0..8 {
                lag0 += z[y * 8 + x] * z[y * 8 + x];
                n0 += 1.0;
                if x + 1 < 8 {
                    lag1 += z[y * 8 + x] * z[y * 8 + x + 1];
                    n1 += 1.0;
                }
            }
        }
    }
    let (v0, v1) = (lag0 / n0, lag1 / n1);
    assert!((v0 / (sigma * sigma) - 1.0).abs() < 0.15, "lag-0 {v0}");
    let expect1 = sigma * sigma * (-1.0 / ell).exp();
    assert!((v1 / expect1 - 1.0).abs() < 0.15, "lag-1 {v1} vs {expect1}");
}

// ---------------------------------------------------------------- pressure

#[test]
fn no_source_gives_gauge_pressure() {
    let perm = PermField::homogeneous(6, 6, 50.0).unwrap();
    let wells = WellSpec::quarter_five_spot(6, 6, 0.0);
    let sol = solve_pressure(&perm, &[0.3; 36], &FluidProps::default(), &wells, &grid(6), 1e-12).unwrap();
    assert!(sol.p.iter().all(|&p| p == 0.0));
}

fn divergence(faces: &[Face], flux: &[f64], n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for (f, q) in faces.iter().zip(flux) {
        d[f.a] += q;
        d[f.b] -= q;
    }
    d
}

#[test]
fn pressure_fluxes_balance_sources_cell_by_cell() {
    let fluids = FluidProps::default();
    for seed in 0..5 {
        let perm = generate_permeability(12, 12, 3.0, 1.0, seed).unwrap();
        let g = grid(12);
        let s: Vec<f64> = (0..144).map(|i| ((i * 37 + seed as usize) % 100) as f64 / 100.0).collect();
        let wells = WellSpec::quarter_five_spot(12, 12, 0.7);
        let sol = solve_pressure(&perm, &s, &fluids, &wells, &g, 1e-13).unwrap();
        assert_eq!(sol.p[143], 0.0);
        let faces = g.faces();
        let flux = face_fluxes(&faces, &g.transmissibilities(&perm).unwrap(), &s, &sol.p, &fluids).unwrap();
        let div = divergence(&faces, &flux, 144);
        for (i, d) in div.iter().enumerate() {
            let q = match i {
                0 => 0.7,
                143 => -0.7,
                _ => 0.0,
            };
            assert!((d - q).abs() < 1e-8 * 0.7, "cell {i}: {d} vs {q}");
        }
    }
}

#[test]
fn doubling_permeability_halves_pressure_drop() {
    let fluids = FluidProps::default();
    let perm = generate_permeability(10, 10, 2.0, 0.7, 3).unwrap();
    let wells = WellSpec::quarter_five_spot(10, 10, 1.3);
    let s = vec![0.2; 100];
    let a = solve_pressure(&perm, &s, &fluids, &wells, &grid(10), 1e-13).unwrap();
    let b = solve_pressure(&perm.scaled(2.0).unwrap(), &s, &fluids, &wells, &grid(10), 1e-13).unwrap();
    let (da, db) = (a.p[0] - a.p[99], b.p[0] - b.p[99]);
    assert!((db / da - 0.5).abs() < 1e-10, "{da} {db}");
}

#[test]
fn pressure_rejects_bad_inputs() {
    let perm = PermField::homogeneous(4, 4, 10.0).unwrap();
    let wells = WellSpec::quarter_five_spot(4, 4, 1.0);
    let f = FluidProps::default();
    assert!(matches!(solve_pressure(&perm, &[0.0; 15], &f, &wells, &grid(4), 1e-10), Err(Error::Dimension(_))));
    assert!(matches!(solve_pressure(&perm, &[1.5; 16], &f, &wells, &grid(4), 1e-10), Err(Error::Physics(_))));
    assert!(PermField::new(2, 2, vec![1.0, 0.0, 1.0, 1.0]).is_err());
}

// -------------------------------------------------------------- saturation

#[test]
fn zero_injection_leaves_saturation_unchanged() {
    let g = grid(5);
    let faces = g.faces();
    let s: Vec<f64> = (0..25).map(|i| i as f64 / 25.0).collect();
    let wells = WellSpec::quarter_five_spot(5, 5, 0.0);
    let flux = vec![0.0; faces.len()];
    let out = update_saturation(&faces, &flux, &s, &FluidProps::default(), &wells, 1.0, 10.0, 0.9).unwrap();
    assert_eq!(out.s, s);
}

#[test]
fn two_cell_update_matches_hand_formula() {
    // Unit flux from cell 0 (injector) to cell 1 (producer).
    let fluids = FluidProps::default();
    let faces = [Face { a: 0, b: 1 }];
    let wells = WellSpec {
        injector: 0,
        producer: 1,
        rate: 1.0,
    };
    let s = [0.6, 0.3];
    let (pv, dt) = (4.0, 0.5);
    let fw = |s: f64| (s * s) / (s * s + (1.0 - s) * (1.0 - s) / 2.0);
    let out = update_saturation(&faces, &[1.0], &s, &fluids, &wells, pv, dt, 0.9).unwrap();
    assert_eq!(out.substeps, 1);
    let s0 = 0.6 + dt / pv * (1.0 - fw(0.6));
    let s1 = 0.3 + dt / pv * (fw(0.6) - fw(0.3));
    assert!((out.s[0] - s0).abs() < 1e-15);
    assert!((out.s[1] - s1).abs() < 1e-15);
    assert!((out.produced - dt * fw(0.3)).abs() < 1e-15);
}

#[test]
fn oversized_step_is_subdivided() {
    let fluids = FluidProps::default();
    let faces = [Face { a: 0, b: 1 }];
    let wells = WellSpec {
        injector: 0,
        producer: 1,
        rate: 1.0,
    };
    let out = update_saturation(&faces, &[1.0], &[0.0, 0.0], &fluids, &wells, 1.0, 5.0, 0.9).unwrap();
    assert!(out.substeps > 1);
    assert!(out.s.iter().all(|v| (0.0..=1.0).contains(v)));
    let err = update_saturation(&faces, &[1.0], &[0.0, 0.0], &fluids, &wells, 1e-12, 1e6, 0.9);
    assert!(matches!(err, Err(Error::Solver(_))));
}

// -------------------------------------------------------------- simulation

#[test]
fn default_output_dimensions() {
    let perm = generate_permeability(40, 40, 4.0, 1.0, 1).unwrap();
    let out = run_simulation(&perm, &SimConfig::default()).unwrap();
    assert_eq!((out.steps, out.h, out.w), (10, 40, 40));
    assert_eq!(out.saturation.len(), 10 * 40 * 40);
    assert_eq!(out.pressure.len(), 10 * 40 * 40);
}

fn assert_conservative(out: &flowsurrogate::simulator::SimOutput) {
    assert!(out.max_balance_error() <= 1e-10, "balance {}", out.max_balance_error());
    for &v in &out.saturation {
        assert!((-1e-12..=1.0 + 1e-12).contains(&v), "S = {v}");
    }
}

#[test]
fn heterogeneous_runs_conserve_water_and_bound_saturation() {
    for seed in 0..10 {
        let perm = generate_permeability(16, 16, 4.0, 1.0, seed).unwrap();
        let out = run_simulation(&perm, &desk(8)).unwrap();
        assert_conservative(&out);
        // Whole-run accounting: stored water = injected - produced.
        let stored: f64 = out.saturation_frame(7).iter().sum();
        let inj: f64 = out.balance.iter().map(|b| b.injected).sum();
        let prod: f64 = out.balance.iter().map(|b| b.produced).sum();
        assert!((stored - (inj - prod)).abs() <= 1e-10 * inj, "{stored} {inj} {prod}");
    }
}

#[test]
fn homogeneous_field_is_diagonally_symmetric_and_monotone() {
    let perm = PermField::homogeneous(16, 16, 100.0).unwrap();
    let out = run_simulation(&perm, &desk(8)).unwrap();
    assert_conservative(&out);
    for t in 0..8 {
        let f = out.saturation_frame(t);
        for y in 0..16 {
            for x in 0..16 {
                assert!((f[y * 16 + x] - f[x * 16 + y]).abs() <= 1e-10);
            }
        }
        if t > 0 {
            let prev = out.saturation_frame(t - 1);
            assert!(f.iter().zip(prev).all(|(a, b)| a >= b));
        }
    }
}

#[test]
fn large_injection_floods_the_injector_streamtube() {
    let perm = PermField::homogeneous(8, 8, 100.0).unwrap();
    let cfg = SimConfig {
        steps: 4,
        pvi: 20.0,
        ..SimConfig::default()
    };
    let out = run_simulation(&perm, &cfg).unwrap();
    assert_conservative(&out);
    let last = out.saturation_frame(3);
    for i in 0..8 {
        assert!(last[i * 8 + i] > 0.9, "diagonal cell {i}: {}", last[i * 8 + i]);
    }
}

#[test]
fn saturation_history_is_invariant_to_permeability_scale() {
    let perm = generate_permeability(12, 12, 3.0, 1.0, 9).unwrap();
    let cfg = desk(6);
    let a = run_simulation(&perm, &cfg).unwrap();
    // A power-of-two factor scales every intermediate exactly.
    let b = run_simulation(&perm.scaled(4.0).unwrap(), &cfg).unwrap();
    assert_eq!(a.saturation, b.saturation);
    for (pa, pb) in a.pressure.iter().zip(&b.pressure) {
        assert_eq!(*pa, 4.0 * pb);
    }
    let c = run_simulation(&perm.scaled(3.0).unwrap(), &cfg).unwrap();
    for (sa, sc) in a.saturation.iter().zip(&c.saturation) {
        assert!((sa - sc).abs() < 1e-9);
    }
    let (da, dc) = (a.pressure[0], c.pressure[0]);
    assert!((dc * 3.0 / da - 1.0).abs() < 1e-9);
}

#[test]
fn breakthrough_time_is_grid_consistent() {
    let run = |n: usize, dx: f64| {
        let perm = PermField::homogeneous(n, n, 100.0).unwrap();
        let cfg = SimConfig {
            steps: 4,
            pvi: 1.2,
            cell_size: dx,
            ..SimConfig::default()
        };
        run_simulation(&perm, &cfg).unwrap().breakthrough_time(0.1).unwrap()
    };
    let coarse = run(16, 1.0);
    let fine = run(32, 0.5);
    assert!(((coarse - fine) / fine).abs() < 0.1, "coarse {coarse} fine {fine}");
}

#[test]
fn invalid_controls_are_rejected() {
    let perm = PermField::homogeneous(8, 8, 100.0).unwrap();
    for cfg in [
        SimConfig { steps: 0, ..SimConfig::default() },
        SimConfig { cfl: 1.5, ..SimConfig::default() },
        SimConfig { horizon: -1.0, ..SimConfig::default() },
    ] {
        assert!(matches!(run_simulation(&perm, &cfg), Err(Error::Config(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn random_realizations_stay_physical(seed in any::<u64>(), pvi in 0.1f64..1.5, log_std in 0.0f64..1.5) {
        let perm = generate_permeability(10, 10, 3.0, log_std, seed).unwrap();
        let cfg = SimConfig { steps: 5, pvi, ..SimConfig::default() };
        let out = run_simulation(&perm, &cfg).unwrap();
        prop_assert!(out.max_balance_error() <= 1e-10);
        prop_assert!(out.saturation.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }
}
