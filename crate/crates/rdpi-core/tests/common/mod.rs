//! Shared fixtures: the reference design (c = 1.25, L = 2 pi, D = 1,
//! poles -0.5..-0.8) and its scenarios.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use rdpi_core::control::{build_certificate, Certificate};
use rdpi_core::model::{build_truncated_model, TruncatedModel};
use rdpi_core::signal::{PiecewiseSignal, SegmentKind, SpatialShape};
use rdpi_core::sim::{simulate, Scenario, SimOutput};
use rdpi_core::spectral::{
    compute_basis, mode_coefficients, ModeCoefficients, ReactionProfile, SpectralBasis,
};

pub struct Design {
    pub basis: SpectralBasis,
    pub coeffs: ModeCoefficients,
    pub model: TruncatedModel,
    pub cert: Certificate,
}

pub fn reference_design() -> &'static Design {
    static DESIGN: OnceLock<Design> = OnceLock::new();
    DESIGN.get_or_init(|| {
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

/// Reference waveform: hold 0, oscillate through [0, 50], settle at 50.
pub fn reference_signal() -> PiecewiseSignal {
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

/// Disturbance magnitude: 1, overshoot to 4.5, settle at 2.
pub fn disturbance_pulse() -> PiecewiseSignal {
    PiecewiseSignal::new(
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
    .unwrap()
}

pub fn reference_scenario(dt: f64) -> Scenario {
    Scenario {
        j_sim: 10,
        dt,
        horizon: 90.0,
        delay: 1.0,
        y0: SpatialShape::Bump,
        z0: 0.0,
        r: reference_signal(),
        d0: PiecewiseSignal::constant(1.0),
        g: SpatialShape::Linear,
    }
}

pub fn disturbance_scenario(dt: f64) -> Scenario {
    Scenario {
        j_sim: 10,
        dt,
        horizon: 90.0,
        delay: 1.0,
        y0: SpatialShape::Bump,
        z0: 0.0,
        r: PiecewiseSignal::constant(50.0),
        d0: disturbance_pulse(),
        g: SpatialShape::Linear,
    }
}

/// The 90 s reference run at dt = D/200, shared across tests.
pub fn reference_run() -> &'static SimOutput {
    static RUN: OnceLock<SimOutput> = OnceLock::new();
    RUN.get_or_init(|| {
        let d = reference_design();
        simulate(
            &reference_scenario(1.0 / 200.0),
            &d.cert,
            &d.model,
            &d.basis,
        )
        .unwrap()
    })
}

/// Max first-component identity residual `|E1 Z - u|` over a run.
pub fn max_artstein_residual(out: &SimOutput) -> (f64, f64) {
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
