//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured quantities. Run with `cargo test -p rdpi-cli --test
//! acceptance -- --nocapture` to see the numbers.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rdpi_core::control::{
    augmented_kalman_equivalence, build_certificate, closed_loop, controllability_determinant,
    expm, place_poles, structured_kalman_determinant, Certificate,
};
use rdpi_core::model::{build_truncated_model, select_n, TruncatedModel};
use rdpi_core::signal::{PiecewiseSignal, SegmentKind, SpatialShape};
use rdpi_core::sim::{
    compute_equilibrium, lyapunov_decay_report, simulate, tracking_report, Scenario, SimOutput,
};
use rdpi_core::spectral::{
    compute_basis, mode_coefficients, ModeCoefficients, ReactionProfile, SpectralBasis,
};

struct Design {
    basis: SpectralBasis,
    coeffs: ModeCoefficients,
    model: TruncatedModel,
    cert: Certificate,
}

fn design() -> &'static Design {
    static D: OnceLock<Design> = OnceLock::new();
    D.get_or_init(|| {
        let profile = ReactionProfile::constant(1.25, 2.0 * PI).unwrap();
        let basis = compute_basis(&profile, 16, 2001).unwrap();
        let coeffs = mode_coefficients(&basis, &profile).unwrap();
        let (model, _) = build_truncated_model(&basis, &coeffs, 1e-8).unwrap();
        let cert = build_certificate(&model, &basis, 1.0, &[-0.5, -0.6, -0.7, -0.8]).unwrap();
        Design {
            basis,
            coeffs,
            model,
            cert,
        }
    })
}

fn reference_signal() -> PiecewiseSignal {
    PiecewiseSignal::new(
        vec![
            SegmentKind::Constant(0.0),
            SegmentKind::Sinusoid {
                offset: 25.0,
                amplitude: 25.0,
                period: 20.0,
                phase: -PI / 2.0,
            },
            SegmentKind::Constant(50.0),
        ],
        vec![30.0, 60.0],
    )
    .unwrap()
}

fn reference_scenario(dt: f64, horizon: f64) -> Scenario {
    Scenario {
        j_sim: 10,
        dt,
        horizon,
        delay: 1.0,
        y0: SpatialShape::Bump,
        z0: 0.0,
        r: reference_signal(),
        d0: PiecewiseSignal::constant(1.0),
        g: SpatialShape::Linear,
    }
}

fn disturbance_scenario(dt: f64) -> Scenario {
    Scenario {
        j_sim: 10,
        dt,
        horizon: 90.0,
        delay: 1.0,
        y0: SpatialShape::Bump,
        z0: 0.0,
        r: PiecewiseSignal::constant(50.0),
        d0: PiecewiseSignal::new(
            vec![
                SegmentKind::Constant(1.0),
                SegmentKind::SmoothStep {
                    from: 1.0,
                    to: 4.5,
                    duration: 3.0,
                },
                SegmentKind::SmoothStep {
                    from: 4.5,
                    to: 2.0,
                    duration: 7.0,
                },
                SegmentKind::Constant(2.0),
            ],
            vec![30.0, 33.0, 40.0],
        )
        .unwrap(),
        g: SpatialShape::Linear,
    }
}

fn reference_run() -> &'static (SimOutput, Duration) {
    static RUN: OnceLock<(SimOutput, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let d = design();
        let started = Instant::now();
        let out = simulate(
            &reference_scenario(1.0 / 200.0, 90.0),
            &d.cert,
            &d.model,
            &d.basis,
        )
        .unwrap();
        (out, started.elapsed())
    })
}

fn disturbance_run() -> &'static (SimOutput, Duration) {
    static RUN: OnceLock<(SimOutput, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let d = design();
        let started = Instant::now();
        let out = simulate(
            &disturbance_scenario(1.0 / 200.0),
            &d.cert,
            &d.model,
            &d.basis,
        )
        .unwrap();
        (out, started.elapsed())
    })
}

fn artstein_residual(out: &SimOutput) -> (f64, f64) {
    let mut worst = 0.0f64;
    let mut at = 0.0;
    for (i, row) in out.trace.rows.iter().enumerate() {
        let res = (out.states.z_transformed[i][0] - out.states.u[i]).abs();
        if res > worst {
            worst = res;
            at = row.t;
        }
    }
    (worst, at)
}

#[test]
fn criterion_01_eigenvalue_reproduction() {
    let started = Instant::now();
    let d = design();
    let expected = [1.0, 0.25, -1.0];
    let mut worst_analytic = 0.0f64;
    for (k, want) in expected.iter().enumerate() {
        worst_analytic = worst_analytic.max((d.basis.lambdas()[k] - want).abs());
    }

    let mesh = d.basis.mesh();
    let sampled = ReactionProfile::sampled(vec![1.25; 101], mesh.length()).unwrap();
    let numeric = compute_basis(&sampled, 3, 2001).unwrap();
    let mut worst_numeric = 0.0f64;
    for (k, want) in expected.iter().enumerate() {
        worst_numeric = worst_numeric.max((numeric.lambdas()[k] - want).abs());
    }
    let elapsed = started.elapsed();

    let pass = worst_analytic < 1e-10 && worst_numeric < 1e-6 && elapsed.as_secs_f64() < 2.0;
    println!(
        "criterion 01 eigenvalue reproduction: {} (analytic gap {worst_analytic:.2e}, numeric gap {worst_numeric:.2e}, {elapsed:?})",
        verdict(pass)
    );
    assert!(worst_analytic < 1e-10, "analytic gap {worst_analytic:e}");
    assert!(worst_numeric < 1e-6, "numeric gap {worst_numeric:e}");
    assert!(elapsed.as_secs_f64() < 2.0, "took {elapsed:?}");
}

#[test]
fn criterion_02_mode_count_selection() {
    let d = design();
    let n = select_n(&d.basis).unwrap();
    println!(
        "criterion 02 mode-count selection: {} (n = {n})",
        verdict(n == 2)
    );
    assert_eq!(n, 2);
}

#[test]
fn criterion_03_pole_placement() {
    let d = design();
    let poles = [-0.5, -0.6, -0.7, -0.8];
    let b_eff: DVector<f64> = expm(&(-d.model.a() * 1.0)) * d.model.b();
    let k = place_poles(d.model.a(), &b_eff, &poles).unwrap();
    let ak = closed_loop(d.model.a(), &b_eff, &k);
    let mut eigs: Vec<(f64, f64)> = ak
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut wanted = poles.to_vec();
    wanted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut worst = 0.0f64;
    for ((re, im), want) in eigs.iter().zip(&wanted) {
        worst = worst.max(((re - want).abs() + im.abs()) / want.abs());
    }
    println!(
        "criterion 03 pole placement: {} (worst relative mismatch {worst:.2e})",
        verdict(worst < 1e-6)
    );
    assert!(worst < 1e-6, "worst relative mismatch {worst:e}");
}

#[test]
fn criterion_04_trace_identity() {
    let d = design();
    let mut worst = 0.0f64;
    for j in 0..10 {
        let res = d.coeffs.a()[j] + d.basis.lambdas()[j] * d.coeffs.b()[j] + d.basis.epl()[j];
        worst = worst.max(res.abs());
    }
    println!(
        "criterion 04 trace identity: {} (max residual {worst:.2e})",
        verdict(worst < 1e-8)
    );
    assert!(worst < 1e-8, "max residual {worst:e}");
}

#[test]
fn criterion_05_appendix_lemma() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gaussian = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random_range(1e-12..1.0);
        let v: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        (-2.0 * u.ln()).sqrt() * v.cos()
    };
    let mut violations = 0usize;
    for trial in 0..200 {
        let n = rng.random_range(1..=5);
        let p = rng.random_range(1..=3);
        let m = rng.random_range(1..=2);
        let a = DMatrix::from_fn(n, n, |_, _| gaussian(&mut rng));
        let b = DMatrix::from_fn(n, m, |_, _| gaussian(&mut rng));
        let (c, dd) = if trial % 4 == 0 {
            (DMatrix::zeros(p, n), DMatrix::zeros(p, m))
        } else {
            (
                DMatrix::from_fn(p, n, |_, _| gaussian(&mut rng)),
                DMatrix::from_fn(p, m, |_, _| gaussian(&mut rng)),
            )
        };
        let (lhs, rhs) = augmented_kalman_equivalence(&a, &b, &c, &dd);
        if lhs != rhs {
            violations += 1;
        }
    }
    let elapsed = started.elapsed();
    let pass = violations == 0 && elapsed.as_secs_f64() < 5.0;
    println!(
        "criterion 05 appendix lemma: {} (200 instances, {violations} violations, {elapsed:?})",
        verdict(pass)
    );
    assert_eq!(violations, 0);
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
}

#[test]
fn criterion_06_determinant_identity() {
    let d = design();
    let (direct, formula) = controllability_determinant(&d.model).unwrap();
    let scale = direct.abs().max(formula.abs());
    let model_gap = (direct - formula).abs() / scale;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_random = 0.0f64;
    let mut tested = 0;
    while tested < 50 {
        let n = rng.random_range(1..=6usize);
        let mut lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(-8.0..4.0)).collect();
        lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if lambdas.windows(2).any(|w| w[0] - w[1] < 1e-3) {
            continue;
        }
        let mut a1 = DMatrix::zeros(n + 1, n + 1);
        let mut b1 = DVector::zeros(n + 1);
        b1[0] = 1.0;
        for j in 1..=n {
            a1[(j, 0)] = rng.random_range(-2.0..2.0);
            a1[(j, j)] = lambdas[j - 1];
            b1[j] = rng.random_range(-2.0..2.0);
        }
        let (dir, form) = structured_kalman_determinant(&a1, &b1);
        let s = dir.abs().max(form.abs()).max(1e-30);
        worst_random = worst_random.max((dir - form).abs() / s);
        tested += 1;
    }
    let pass = model_gap < 1e-8 && worst_random < 1e-8;
    println!(
        "criterion 06 determinant identity: {} (reference gap {model_gap:.2e}, worst of 50 random {worst_random:.2e})",
        verdict(pass)
    );
    assert!(model_gap < 1e-8);
    assert!(worst_random < 1e-8);
}

/// The 1e-4 clause fails by design-inherent margins: the scheme is second
/// order (the halving clause passes with ratio ~4), but the reference
/// design's gain (|K| ~ 152) and its initial-bump transient put the O(dt^2)
/// constant near 1.6e3 at the peak, so this tolerance would need dt around
/// D/5000. The assertion is kept at its stated value rather than loosened.
#[test]
fn criterion_07_artstein_consistency() {
    let d = design();
    let (out, _) = reference_run();
    let (worst, at) = artstein_residual(out);

    let base = simulate(
        &reference_scenario(1.0 / 200.0, 30.0),
        &d.cert,
        &d.model,
        &d.basis,
    )
    .unwrap();
    let half = simulate(
        &reference_scenario(1.0 / 400.0, 30.0),
        &d.cert,
        &d.model,
        &d.basis,
    )
    .unwrap();
    let (worst_base, _) = artstein_residual(&base);
    let (worst_half, _) = artstein_residual(&half);
    let shrink = worst_base / worst_half;

    let pass = worst < 1e-4 && shrink >= 3.5;
    println!(
        "criterion 07 Artstein consistency: {} (max |E1 Z - u| = {worst:.3e} at t = {at:.2}, halving shrink {shrink:.2}x)",
        verdict(pass)
    );
    assert!(shrink >= 3.5, "halving shrink {shrink}");
    assert!(
        worst < 1e-4,
        "max |E1 Z - u| = {worst:.3e} at t = {at:.2}: unattainable at dt = D/200 for this design; \
         the residual is O(dt^2) with a ~1.6e3 constant from the reference gain and transient"
    );
}

#[test]
fn criterion_08_equilibrium_regulation_identity() {
    let d = design();
    let eq = compute_equilibrium(
        50.0,
        &SpatialShape::Linear,
        1.0,
        &d.cert,
        &d.model,
        &d.basis,
        10,
    )
    .unwrap();
    let gap = (eq.ye_prime0 - 50.0).abs();
    println!(
        "criterion 08 equilibrium regulation: {} (|y_e'(0) - 50| = {gap:.2e})",
        verdict(gap < 5e-2)
    );
    assert!(gap < 5e-2, "|y_e'(0) - 50| = {gap:e}");
}

#[test]
fn criterion_09_closed_loop_tracking() {
    let (ref_out, ref_elapsed) = reference_run();
    let (dist_out, dist_elapsed) = disturbance_run();

    let ref_report = tracking_report(ref_out);
    let phase3 = ref_report.last().unwrap();
    assert!((phase3.t_start - 60.0).abs() < 1e-9);
    let dist_report = tracking_report(dist_out);
    let settled = dist_report.last().unwrap();

    let runtime_ok = ref_elapsed.as_secs_f64() < 10.0 && dist_elapsed.as_secs_f64() < 10.0;
    let pass = phase3.settled_max_err < 0.5 && settled.settled_max_err < 0.5 && runtime_ok;
    println!(
        "criterion 09 closed-loop tracking: {} (phase-3 settled {:.3e}, post-disturbance settled {:.3e}, runtimes {:?} / {:?})",
        verdict(pass),
        phase3.settled_max_err,
        settled.settled_max_err,
        ref_elapsed,
        dist_elapsed
    );
    assert!(phase3.settled_max_err < 0.5);
    assert!(settled.settled_max_err < 0.5);
    assert!(runtime_ok, "runtimes {ref_elapsed:?} / {dist_elapsed:?}");
}

#[test]
fn criterion_10_lyapunov_decay() {
    let d = design();
    let mut all_hold = true;
    let mut detail = String::new();
    for (label, out) in [
        ("reference", &reference_run().0),
        ("disturbance", &disturbance_run().0),
    ] {
        for c in lyapunov_decay_report(out, &d.cert, 0.05, 5.0) {
            if c.skipped {
                continue;
            }
            all_hold &= c.holds;
            detail.push_str(&format!(
                " {label}[{:.0},{:.0}]:{}",
                c.t_start,
                c.t_end,
                if c.holds { "ok" } else { "VIOLATED" }
            ));
        }
    }
    println!(
        "criterion 10 Lyapunov decay: {} ({detail} )",
        verdict(all_hold)
    );
    assert!(all_hold, "{detail}");
}

#[test]
fn criterion_11_zero_input_sanity() {
    let d = design();
    let scenario = Scenario {
        j_sim: 10,
        dt: 1.0 / 200.0,
        horizon: 10.0,
        delay: 1.0,
        y0: SpatialShape::Zero,
        z0: 0.0,
        r: PiecewiseSignal::constant(0.0),
        d0: PiecewiseSignal::constant(0.0),
        g: SpatialShape::Linear,
    };
    let out = simulate(&scenario, &d.cert, &d.model, &d.basis).unwrap();
    let clean = out.trace.rows.iter().all(|row| {
        row.u_delayed == 0.0
            && row.u == 0.0
            && row.z == 0.0
            && row.zeta == 0.0
            && row.yx0 == 0.0
            && row.err == 0.0
            && row.y_inf == 0.0
            && row.y_l2 == 0.0
            && row.v_lyap == 0.0
    });
    println!("criterion 11 zero-input sanity: {}", verdict(clean));
    assert!(clean);
}

#[test]
fn criterion_12_step_halving_convergence() {
    let d = design();
    let smooth = PiecewiseSignal::new(
        vec![SegmentKind::Sinusoid {
            offset: 5.0,
            amplitude: -5.0,
            period: 8.0,
            phase: std::f64::consts::FRAC_PI_2,
        }],
        vec![],
    )
    .unwrap();
    let mut finals: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for &div in &[40.0, 80.0, 160.0] {
        let scenario = Scenario {
            j_sim: 10,
            dt: 1.0 / div,
            horizon: 6.0,
            delay: 1.0,
            y0: SpatialShape::Zero,
            z0: 0.0,
            r: smooth.clone(),
            d0: PiecewiseSignal::constant(0.0),
            g: SpatialShape::Linear,
        };
        let out = simulate(&scenario, &d.cert, &d.model, &d.basis).unwrap();
        let last = out.trace.rows.last().unwrap();
        finals.push((out.states.w.last().unwrap().clone(), last.u, last.z));
    }
    let dist = |a: &(Vec<f64>, f64, f64), b: &(Vec<f64>, f64, f64)| {
        let mut acc = (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2);
        for (x, y) in a.0.iter().zip(&b.0) {
            acc += (x - y).powi(2);
        }
        acc.sqrt()
    };
    let factor = dist(&finals[0], &finals[1]) / dist(&finals[1], &finals[2]);
    println!(
        "criterion 12 step-halving convergence: {} (factor {factor:.2})",
        verdict(factor >= 3.5)
    );
    assert!(factor >= 3.5, "factor {factor}");
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
