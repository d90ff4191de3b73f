//! Plain-text run configuration: a TOML document with `[plant]`, `[control]`,
//! `[simulation]`, `[signals]` and `[output]` sections. Every numeric range
//! is validated up front — nothing is computed from a config that has a
//! single bad field — and every error names the field it came from.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use rdpi_core::signal::{PiecewiseSignal, SegmentKind, SpatialShape};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub plant: PlantSection,
    #[serde(default)]
    pub control: Option<ControlSection>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub signals: Option<SignalsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// Constant reaction rate, or sampled values on a uniform grid of [0, L].
    pub c: ReactionSpec,
    #[serde(rename = "L")]
    pub length: f64,
    /// Number of basis modes to compute.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_mesh_size")]
    pub mesh_size: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ReactionSpec {
    Constant(f64),
    Sampled { samples: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    #[serde(rename = "D")]
    pub delay: f64,
    pub poles: Vec<f64>,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(rename = "J_sim")]
    pub j_sim: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub y0: ShapeSpec,
    #[serde(default)]
    pub z0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ShapeSpec {
    Named(String),
    Eigenmode { eigenmode: usize },
    Samples { samples: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsSection {
    pub r: Vec<SegmentSpec>,
    pub d0: Vec<SegmentSpec>,
    pub g: ShapeSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    Const {
        value: f64,
        until: Option<f64>,
    },
    Ramp {
        from: f64,
        to: f64,
        until: Option<f64>,
    },
    Sin {
        offset: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
        until: Option<f64>,
    },
    Smoothstep {
        from: f64,
        to: f64,
        duration: f64,
        until: Option<f64>,
    },
}

impl SegmentSpec {
    fn until(&self) -> Option<f64> {
        match self {
            SegmentSpec::Const { until, .. }
            | SegmentSpec::Ramp { until, .. }
            | SegmentSpec::Sin { until, .. }
            | SegmentSpec::Smoothstep { until, .. } => *until,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

fn default_modes() -> usize {
    16
}

fn default_mesh_size() -> usize {
    2001
}

fn default_tail_tol() -> f64 {
    1e-8
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<String> {
    vec!["csv".to_string()]
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ConfigFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every numeric range before any computation starts; all
    /// violations are reported together, each naming its field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems: Vec<String> = Vec::new();
        let mut bad = |field: &str, message: String| {
            problems.push(format!("{field}: {message}"));
        };

        // [plant]
        if !(self.plant.length > 0.0) || !self.plant.length.is_finite() {
            bad(
                "[plant].L",
                format!("must be positive and finite, got {}", self.plant.length),
            );
        }
        match &self.plant.c {
            ReactionSpec::Constant(c) if !c.is_finite() => {
                bad("[plant].c", "must be finite".to_string());
            }
            ReactionSpec::Sampled { samples } => {
                if samples.len() < 3 {
                    bad(
                        "[plant].c.samples",
                        format!("needs at least 3 values, got {}", samples.len()),
                    );
                }
                if samples.iter().any(|v| !v.is_finite()) {
                    bad(
                        "[plant].c.samples",
                        "contains non-finite values".to_string(),
                    );
                }
            }
            _ => {}
        }
        if self.plant.modes < 1 {
            bad("[plant].modes", "must be at least 1".to_string());
        }
        if self.plant.mesh_size < 8 * self.plant.modes.max(1) {
            bad(
                "[plant].mesh_size",
                format!(
                    "must be at least 8 * modes = {}, got {}",
                    8 * self.plant.modes.max(1),
                    self.plant.mesh_size
                ),
            );
        }

        // [control]
        if let Some(control) = &self.control {
            if !(control.delay > 0.0) || !control.delay.is_finite() {
                bad(
                    "[control].D",
                    format!("must be positive and finite, got {}", control.delay),
                );
            }
            if control.poles.is_empty() {
                bad("[control].poles", "must not be empty".to_string());
            }
            for (i, p) in control.poles.iter().enumerate() {
                if !p.is_finite() || *p >= 0.0 {
                    bad(
                        "[control].poles",
                        format!("entry {i} must be a finite negative number, got {p}"),
                    );
                }
            }
            if !(control.tail_tol > 0.0) {
                bad(
                    "[control].tail_tol",
                    format!("must be positive, got {}", control.tail_tol),
                );
            }
        }

        // [simulation]
        if let Some(sim) = &self.simulation {
            if sim.j_sim < 1 {
                bad("[simulation].J_sim", "must be at least 1".to_string());
            }
            if !(sim.dt > 0.0) || !sim.dt.is_finite() {
                bad(
                    "[simulation].dt",
                    format!("must be positive and finite, got {}", sim.dt),
                );
            }
            if let Some(control) = &self.control {
                if sim.dt > 0.0 && control.delay > 0.0 {
                    let steps = (control.delay / sim.dt).round();
                    if steps < 1.0 || (control.delay - steps * sim.dt).abs() > 1e-9 * control.delay
                    {
                        bad(
                            "[simulation].dt",
                            format!(
                                "must divide [control].D exactly ({} / {})",
                                control.delay, sim.dt
                            ),
                        );
                    }
                }
                if sim.horizon <= control.delay {
                    bad(
                        "[simulation].T",
                        format!(
                            "must exceed the delay D = {}, got {}",
                            control.delay, sim.horizon
                        ),
                    );
                }
            }
            if sim.dt > 0.0 && sim.horizon > 0.0 {
                let steps = (sim.horizon / sim.dt).round();
                if (sim.horizon - steps * sim.dt).abs() > 1e-9 * sim.horizon {
                    bad(
                        "[simulation].T",
                        format!("must be a multiple of dt = {}", sim.dt),
                    );
                }
            }
            if !sim.z0.is_finite() {
                bad("[simulation].z0", "must be finite".to_string());
            }
            if let Err(m) = check_shape(&sim.y0) {
                bad("[simulation].y0", m);
            }
        }

        // [signals]
        if let Some(signals) = &self.signals {
            if let Err(m) = check_segments(&signals.r) {
                bad("[signals].r", m);
            }
            if let Err(m) = check_segments(&signals.d0) {
                bad("[signals].d0", m);
            }
            if let Err(m) = check_shape(&signals.g) {
                bad("[signals].g", m);
            }
        }

        // [output]
        if self.output.dir.as_os_str().is_empty() {
            bad("[output].dir", "must not be empty".to_string());
        }
        for f in &self.output.formats {
            if f != "csv" && f != "svg" {
                bad(
                    "[output].formats",
                    format!("unknown format {f:?} (expected \"csv\" or \"svg\")"),
                );
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            let mut message = String::from("invalid configuration:");
            for p in &problems {
                let _ = write!(message, "\n  {p}");
            }
            Err(ConfigError::Invalid(message))
        }
    }

    pub fn reaction_profile(
        &self,
    ) -> Result<rdpi_core::spectral::ReactionProfile, rdpi_core::CoreError> {
        match &self.plant.c {
            ReactionSpec::Constant(c) => {
                rdpi_core::spectral::ReactionProfile::constant(*c, self.plant.length)
            }
            ReactionSpec::Sampled { samples } => {
                rdpi_core::spectral::ReactionProfile::sampled(samples.clone(), self.plant.length)
            }
        }
    }

    pub fn wants_svg(&self) -> bool {
        self.output.formats.iter().any(|f| f == "svg")
    }
}

fn check_shape(spec: &ShapeSpec) -> Result<(), String> {
    match spec {
        ShapeSpec::Named(name) => match name.as_str() {
            "zero" | "linear" | "bump" => Ok(()),
            other => Err(format!(
                "unknown shape {other:?} (expected \"zero\", \"linear\", \"bump\", {{ eigenmode = k }} or {{ samples = [..] }})"
            )),
        },
        ShapeSpec::Eigenmode { eigenmode } => {
            if *eigenmode == 0 {
                Err("eigenmode index is 1-based".to_string())
            } else {
                Ok(())
            }
        }
        ShapeSpec::Samples { samples } => {
            if samples.iter().any(|v| !v.is_finite()) {
                Err("samples contain non-finite values".to_string())
            } else if samples.len() < 3 {
                Err("needs at least 3 samples".to_string())
            } else {
                Ok(())
            }
        }
    }
}

fn check_segments(segments: &[SegmentSpec]) -> Result<(), String> {
    if segments.is_empty() {
        return Err("needs at least one segment".to_string());
    }
    let mut prev_until = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        match seg.until() {
            Some(u) => {
                if last {
                    return Err(format!("segment {i} is last and must not set `until`"));
                }
                if !(u > prev_until) || !u.is_finite() {
                    return Err(format!(
                        "segment {i}: until = {u} must increase past {prev_until}"
                    ));
                }
                prev_until = u;
            }
            None => {
                if !last {
                    return Err(format!(
                        "segment {i} needs `until` (only the last may omit it)"
                    ));
                }
            }
        }
        let finite = match seg {
            SegmentSpec::Const { value, .. } => value.is_finite(),
            SegmentSpec::Ramp { from, to, .. } => from.is_finite() && to.is_finite(),
            SegmentSpec::Sin {
                offset,
                amplitude,
                period,
                phase,
                ..
            } => {
                if !(*period > 0.0) {
                    return Err(format!("segment {i}: period must be positive"));
                }
                offset.is_finite()
                    && amplitude.is_finite()
                    && period.is_finite()
                    && phase.is_finite()
            }
            SegmentSpec::Smoothstep {
                from, to, duration, ..
            } => {
                if !(*duration > 0.0) {
                    return Err(format!("segment {i}: duration must be positive"));
                }
                from.is_finite() && to.is_finite() && duration.is_finite()
            }
        };
        if !finite {
            return Err(format!("segment {i}: non-finite parameter"));
        }
    }
    Ok(())
}

pub fn build_signal(segments: &[SegmentSpec]) -> Result<PiecewiseSignal, rdpi_core::CoreError> {
    let mut kinds = Vec::with_capacity(segments.len());
    let mut breaks = Vec::new();
    for seg in segments {
        if let Some(u) = seg.until() {
            breaks.push(u);
        }
        kinds.push(match seg {
            SegmentSpec::Const { value, .. } => SegmentKind::Constant(*value),
            SegmentSpec::Ramp { from, to, .. } => SegmentKind::Ramp {
                from: *from,
                to: *to,
            },
            SegmentSpec::Sin {
                offset,
                amplitude,
                period,
                phase,
                ..
            } => SegmentKind::Sinusoid {
                offset: *offset,
                amplitude: *amplitude,
                period: *period,
                phase: *phase,
            },
            SegmentSpec::Smoothstep {
                from, to, duration, ..
            } => SegmentKind::SmoothStep {
                from: *from,
                to: *to,
                duration: *duration,
            },
        });
    }
    PiecewiseSignal::new(kinds, breaks)
}

pub fn build_shape(spec: &ShapeSpec) -> SpatialShape {
    match spec {
        ShapeSpec::Named(name) => match name.as_str() {
            "zero" => SpatialShape::Zero,
            "linear" => SpatialShape::Linear,
            "bump" => SpatialShape::Bump,
            _ => unreachable!("validated earlier"),
        },
        ShapeSpec::Eigenmode { eigenmode } => SpatialShape::Eigenmode(*eigenmode),
        ShapeSpec::Samples { samples } => SpatialShape::Samples(samples.clone()),
    }
}
