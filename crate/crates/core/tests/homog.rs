use hjhomog_core::environment::{sample_field, shift_field, EnvironmentSpec, Family, TrigParams};
use hjhomog_core::homog::{
    convexcase_variance_decay, corrector_report, estimate_drift, extract_corrector, extrapolate,
    mean_zero_checks, vanishing_discount, vanishing_discount_with_solutions, CheckStatus,
    ModelSpec,
};
use hjhomog_core::models::{DiffusionModel, HamiltonianKind, HamiltonianModel};
use hjhomog_core::par::Exec;
use hjhomog_core::scheme::{lipschitz_estimate, SchemeConfig};
use hjhomog_core::solver::solve_discounted;
use hjhomog_core::{Error, GridSpec};
use proptest::prelude::*;

const DELTAS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn trig(base: f64, amp: f64) -> EnvironmentSpec {
    EnvironmentSpec::new(
        Family::RandomPhaseTrig(TrigParams {
            base,
            amplitudes: vec![amp],
            frequencies: vec![1.0],
            angles: vec![],
        }),
        0,
    )
}

fn seeds(n: u64) -> Vec<u64> {
    (1..=n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn drift_is_linear_in_theta(
        a in prop::collection::vec(-3.0f64..3.0, 256),
        b in prop::collection::vec(-3.0f64..3.0, 256),
        s in -2.0f64..2.0,
    ) {
        let g = GridSpec::new(2, 4.0, 0.25).unwrap();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let (ra, _) = estimate_drift(&a, &g).unwrap();
        let (rb, _) = estimate_drift(&b, &g).unwrap();
        let (rs, _) = estimate_drift(&sum, &g).unwrap();
        for k in 0..2 {
            prop_assert!((rs[k] - ra[k] - s * rb[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn affine_input_has_exact_drift(q0 in -3.0f64..3.0, q1 in -3.0f64..3.0) {
        let g = GridSpec::new(2, 4.0, 0.125).unwrap();
        let theta: Vec<f64> = (0..g.len()).map(|i| {
            let x = g.displacement(i);
            q0 * x[0] + q1 * x[1]
        }).collect();
        let (r, fit) = estimate_drift(&theta, &g).unwrap();
        prop_assert!((r[0] - q0).abs() < 1e-12 && (r[1] - q1).abs() < 1e-12);
        prop_assert!(fit < 1e-12);
    }
}

#[test]
fn bounded_oscillation_has_no_drift() {
    for l in [4.0, 8.0, 16.0] {
        let g = GridSpec::new(1, l, 1.0 / 16.0).unwrap();
        let theta: Vec<f64> = (0..g.len())
            .map(|i| (std::f64::consts::TAU * g.displacement(i)[0] / l).sin())
            .collect();
        let (r, fit) = estimate_drift(&theta, &g).unwrap();
        // least squares over the shells, evaluated by hand: Σ θ x̃ / Σ x̃²
        let shell: Vec<usize> = (0..g.len())
            .filter(|&i| {
                let x = g.displacement(i)[0].abs();
                x >= l / 4.0 && x < l / 2.0
            })
            .collect();
        let num: f64 = shell.iter().map(|&i| theta[i] * g.displacement(i)[0]).sum();
        let den: f64 = shell.iter().map(|&i| g.displacement(i)[0].powi(2)).sum();
        assert!((r[0] - num / den).abs() < 1e-12);
        // a bounded input can only tilt the fit by O(max|θ| / L)
        assert!(r[0].abs() <= 2.0 / l, "{r:?}");
        assert!(fit <= 2.0 / l, "{fit}");
    }
}

#[test]
fn constant_environment_extrapolates_exactly() {
    let g = GridSpec::new(2, 2.0, 1.0 / 16.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::Eikonal, EnvironmentSpec::constant(2.0));
    let est = vanishing_discount(
        &model,
        [1.0, 0.0],
        &DELTAS,
        &seeds(3),
        &g,
        &SchemeConfig::default(),
        Exec::Sequential,
    )
    .unwrap();
    assert!(est.per_seed_values.iter().flatten().all(|&v| (v - 2.0).abs() < 1e-12));
    assert!((est.cbar - 2.0).abs() < 1e-12);
    assert!(est.seed_dispersion.iter().all(|&s| s < 1e-12));
}

#[test]
fn corrector_of_a_constant_environment_vanishes() {
    let g = GridSpec::new(2, 2.0, 1.0 / 16.0).unwrap();
    for kind in [
        HamiltonianKind::Eikonal,
        HamiltonianKind::QuadraticPotential,
        HamiltonianKind::DoubleWell,
    ] {
        let f = sample_field(&EnvironmentSpec::constant(1.5), &g).unwrap();
        let ham = HamiltonianModel::new(kind, f).unwrap();
        let diff = DiffusionModel::zero(2);
        let p = [0.6, -0.8];
        let params = SchemeConfig::default().resolve(&ham, &diff, p, 0.05, &g).unwrap();
        let sol = solve_discounted(&ham, &diff, p, 0.05, &params).unwrap();
        let hp = ham.eval(p, [0.0, 0.0]);
        let rep = corrector_report(&ham, &diff, &sol, hp).unwrap();
        assert_eq!(rep.drift, [0.0, 0.0]);
        assert!(rep.equation_residual_sup < 1e-8, "{kind:?}");
        assert!(rep.sublinearity_profile.iter().all(|&(_, m)| m == 0.0));
    }
}

#[test]
fn corrector_is_pinned_and_keeps_the_lipschitz_constant() {
    let g = GridSpec::new(2, 2.0, 1.0 / 16.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::Eikonal, trig(2.0, 1.0));
    let (ham, diff) = model.instantiate(&g, 4).unwrap();
    let params = SchemeConfig::default().resolve(&ham, &diff, [1.0, 0.3], 0.1, &g).unwrap();
    let sol = solve_discounted(&ham, &diff, [1.0, 0.3], 0.1, &params).unwrap();
    let theta = extract_corrector(&sol);
    assert_eq!(theta[0], 0.0);
    assert!((lipschitz_estimate(&g, &theta) - sol.lipschitz_estimate).abs() < 1e-9);
}

#[test]
fn periodic_corrector_is_sublinear() {
    // bounded 1D corrector: the outermost profile value shrinks as the box grows
    let mut outer = Vec::new();
    for l in [4.0, 8.0] {
        let g = GridSpec::new(1, l, 1.0 / 64.0).unwrap();
        let model = ModelSpec::first_order(HamiltonianKind::Eikonal, trig(2.0, 1.0));
        let (est, sols) = vanishing_discount_with_solutions(
            &model,
            [1.0, 0.0],
            &DELTAS,
            &[3],
            &g,
            &SchemeConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        let (ham, diff) = model.instantiate(&g, 3).unwrap();
        let rep = corrector_report(&ham, &diff, &sols[0], est.cbar).unwrap();
        outer.push(rep.sublinearity_profile.last().unwrap().1);
    }
    assert!(outer[1] < outer[0], "{outer:?}");
}

#[test]
fn corrector_residual_scales_with_h_and_delta() {
    let mut consts = Vec::new();
    for h in [1.0 / 64.0, 1.0 / 128.0] {
        let g = GridSpec::new(1, 4.0, h).unwrap();
        let model = ModelSpec::first_order(HamiltonianKind::Eikonal, trig(2.0, 1.0));
        let (est, sols) = vanishing_discount_with_solutions(
            &model,
            [1.0, 0.0],
            &DELTAS,
            &[9],
            &g,
            &SchemeConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        let (ham, diff) = model.instantiate(&g, 9).unwrap();
        let rep = corrector_report(&ham, &diff, &sols[0], est.cbar).unwrap();
        consts.push(rep.equation_residual_sup / (h + DELTAS[3]));
    }
    assert!(consts[1] <= 1.5 * consts[0] && consts[1] >= consts[0] / 1.5, "{consts:?}");
}

#[test]
fn theta_has_mean_zero_over_seeds() {
    let g = GridSpec::new(1, 8.0, 1.0 / 64.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::Eikonal, trig(2.0, 1.0));
    let (_, sols) = vanishing_discount_with_solutions(
        &model,
        [1.0, 0.0],
        &DELTAS,
        &seeds(32),
        &g,
        &SchemeConfig::default(),
        Exec::available(),
    )
    .unwrap();
    let thetas: Vec<Vec<f64>> = sols.iter().map(extract_corrector).collect();
    let drifts: Vec<_> = thetas.iter().map(|t| estimate_drift(t, &g).unwrap().0).collect();
    // x = L/4 is a whole number of periods away, where θ vanishes up to round-off
    let rep = mean_zero_checks(&thetas, &drifts, &g, &[[2.0, 0.0], [2.3, 0.0]]);
    assert_eq!(rep.status, CheckStatus::Pass, "{rep:?}");
    assert!(rep.stats[0].mean.abs() < 1e-9);
    assert!(rep.stats[1].stderr > 1e-3);

    let flat = vec![vec![0.0; g.len()]; 8];
    let rep = mean_zero_checks(&flat, &[[0.0; 2]; 8], &g, &[[2.0, 0.0]]);
    assert!(rep.passes() && rep.stats.iter().all(|s| s.mean == 0.0));
    let rep = mean_zero_checks(&thetas[..1], &drifts[..1], &g, &[[2.0, 0.0]]);
    assert_eq!(rep.status, CheckStatus::InsufficientSeeds);
}

#[test]
fn shifted_environments_give_consistent_estimates() {
    let g = GridSpec::new(1, 8.0, 1.0 / 64.0).unwrap();
    let spec = trig(2.0, 1.0);
    let z = [0.75, 0.0];
    let cfg = SchemeConfig::default();
    let diff = DiffusionModel::zero(1);
    let mut means = [vec![0.0; DELTAS.len()], vec![0.0; DELTAS.len()]];
    let n = 4;
    for seed in 1..=n {
        let f = sample_field(&spec.with_seed(seed), &g).unwrap();
        for (k, field) in [f.clone(), shift_field(&f, z)].into_iter().enumerate() {
            let ham = HamiltonianModel::new(HamiltonianKind::Eikonal, field).unwrap();
            for (j, &d) in DELTAS.iter().enumerate() {
                let params = cfg.resolve(&ham, &diff, [1.0, 0.0], d, &g).unwrap();
                let sol = solve_discounted(&ham, &diff, [1.0, 0.0], d, &params).unwrap();
                means[k][j] += -d * sol.value_at_origin() / n as f64;
                if k == 0 {
                    // the shifted solve at the origin is the original at z
                    let iz = g.nearest_index(z);
                    let bound = d * z[0] * sol.lipschitz_estimate + 1e-7;
                    assert!((d * (sol.v[iz] - sol.v[0])).abs() <= bound);
                }
            }
        }
    }
    let (c0, _, r0) = extrapolate(&DELTAS, &means[0]);
    let (c1, _, r1) = extrapolate(&DELTAS, &means[1]);
    for j in 0..DELTAS.len() {
        let lip = 1.0 + 1.0 / 2.0; // |Dθ| ≤ max c / min c · |p|
        assert!((means[0][j] - means[1][j]).abs() <= DELTAS[j] * z[0] * 2.0 * lip);
    }
    assert!((c0 - c1).abs() <= r0 + r1 + DELTAS[3] * z[0], "{c0} {c1} {r0} {r1}");
}

#[test]
fn eikonal_estimates_are_one_homogeneous() {
    let g = GridSpec::new(2, 2.0, 1.0 / 16.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::Eikonal, trig(2.0, 1.0));
    let run = |p| {
        vanishing_discount(
            &model,
            p,
            &DELTAS,
            &seeds(4),
            &g,
            &SchemeConfig::default(),
            Exec::available(),
        )
        .unwrap()
    };
    let base = run([1.0, 0.5]);
    for lambda in [0.5, 2.0] {
        let est = run([lambda, 0.5 * lambda]);
        let tol = est.uncertainty() + lambda * base.uncertainty() + 1e-6;
        assert!((est.cbar - lambda * base.cbar).abs() <= tol, "{lambda}");
    }
}

#[test]
fn quadratic_dispersion_decays_with_the_discount() {
    let g = GridSpec::new(1, 8.0, 1.0 / 64.0).unwrap();
    let model = ModelSpec::first_order(HamiltonianKind::QuadraticPotential, trig(1.0, 1.0));
    let rep = convexcase_variance_decay(
        &model,
        [2.0, 0.0],
        &DELTAS,
        &seeds(16),
        &g,
        &SchemeConfig::default(),
        0.05,
        Exec::available(),
    )
    .unwrap();
    assert!(rep.dispersion[3] < rep.dispersion[0], "{:?}", rep.dispersion);
    assert!(rep.passes);

    let flat = ModelSpec::first_order(
        HamiltonianKind::QuadraticPotential,
        EnvironmentSpec::constant(1.0),
    );
    let rep = convexcase_variance_decay(
        &flat,
        [1.0, 0.0],
        &DELTAS,
        &seeds(4),
        &g,
        &SchemeConfig::default(),
        0.0,
        Exec::Sequential,
    )
    .unwrap();
    assert!(rep.dispersion.iter().all(|&s| s == 0.0) && rep.passes);

    let dw = ModelSpec::first_order(HamiltonianKind::DoubleWell, trig(1.0, 1.0));
    let err = convexcase_variance_decay(
        &dw,
        [1.0, 0.0],
        &DELTAS,
        &seeds(4),
        &g,
        &SchemeConfig::default(),
        1.0,
        Exec::Sequential,
    )
    .unwrap_err();
    assert!(matches!(err, Error::NotApplicable(_)));
}
