//! Builds the design chain (basis -> coefficients -> model -> certificate ->
//! scenario) out of a validated configuration.

use rdpi_core::control::{build_certificate, Certificate};
use rdpi_core::model::{build_truncated_model, TailReport, TruncatedModel};
use rdpi_core::sim::Scenario;
use rdpi_core::spectral::{
    compute_basis, mode_coefficients, ModeCoefficients, ReactionProfile, SpectralBasis,
};
use rdpi_core::CoreError;

use crate::config::{build_shape, build_signal, ConfigFile};

pub struct Plant {
    pub profile: ReactionProfile,
    pub basis: SpectralBasis,
    pub coeffs: ModeCoefficients,
}

pub struct Design {
    pub plant: Plant,
    pub model: TruncatedModel,
    pub tail: TailReport,
    pub cert: Certificate,
}

pub fn build_plant(config: &ConfigFile) -> Result<Plant, CoreError> {
    let profile = config.reaction_profile()?;
    let basis = compute_basis(&profile, config.plant.modes, config.plant.mesh_size)?;
    let coeffs = mode_coefficients(&basis, &profile)?;
    Ok(Plant {
        profile,
        basis,
        coeffs,
    })
}

pub fn build_design(config: &ConfigFile) -> Result<Design, CoreError> {
    let control = config
        .control
        .as_ref()
        .ok_or_else(|| CoreError::ScenarioInconsistent("config has no [control] section".into()))?;
    let plant = build_plant(config)?;
    let (model, tail) = build_truncated_model(&plant.basis, &plant.coeffs, control.tail_tol)?;
    let cert = build_certificate(&model, &plant.basis, control.delay, &control.poles)?;
    Ok(Design {
        plant,
        model,
        tail,
        cert,
    })
}

pub fn build_scenario(config: &ConfigFile) -> Result<Scenario, CoreError> {
    let control = config
        .control
        .as_ref()
        .ok_or_else(|| CoreError::ScenarioInconsistent("config has no [control] section".into()))?;
    let sim = config.simulation.as_ref().ok_or_else(|| {
        CoreError::ScenarioInconsistent("config has no [simulation] section".into())
    })?;
    let signals = config
        .signals
        .as_ref()
        .ok_or_else(|| CoreError::ScenarioInconsistent("config has no [signals] section".into()))?;
    Ok(Scenario {
        j_sim: sim.j_sim,
        dt: sim.dt,
        horizon: sim.horizon,
        delay: control.delay,
        y0: build_shape(&sim.y0),
        z0: sim.z0,
        r: build_signal(&signals.r)?,
        d0: build_signal(&signals.d0)?,
        g: build_shape(&signals.g),
    })
}
