//! Piecewise time signals with analytic derivatives, and spatial shapes for
//! disturbances and initial data.
//!
//! References and disturbances are built from constant, ramp, sinusoid and
//! smoothstep segments. Each segment knows its exact time derivative, which
//! the trace reports need (the tracking estimates involve the disturbance
//! rate, not just its value).

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::float;
use crate::spectral::SpectralBasis;

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentKind {
    Constant(f64),
    /// Linear move from `from` to `to` over the segment span.
    Ramp {
        from: f64,
        to: f64,
    },
    /// `offset + amplitude * sin(2 pi (t - t_start) / period + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    /// Cubic smoothstep from `from` to `to` over `duration`, holding `to`
    /// afterwards if the segment is longer.
    SmoothStep {
        from: f64,
        to: f64,
        duration: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Segment applies on `[start, end)`; the last segment is unbounded.
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
}

impl Segment {
    fn value(&self, t: f64) -> f64 {
        let local = t - self.start;
        match &self.kind {
            SegmentKind::Constant(v) => *v,
            SegmentKind::Ramp { from, to } => {
                let span = self.end - self.start;
                from + (to - from) * (local / span)
            }
            SegmentKind::Sinusoid {
                offset,
                amplitude,
                period,
                phase,
            } => {
                offset
                    + amplitude * float::sin(2.0 * core::f64::consts::PI * local / period + phase)
            }
            SegmentKind::SmoothStep { from, to, duration } => {
                let s = float::min(float::max(local / duration, 0.0), 1.0);
                from + (to - from) * (3.0 * s * s - 2.0 * s * s * s)
            }
        }
    }

    fn derivative(&self, t: f64) -> f64 {
        let local = t - self.start;
        match &self.kind {
            SegmentKind::Constant(_) => 0.0,
            SegmentKind::Ramp { from, to } => (to - from) / (self.end - self.start),
            SegmentKind::Sinusoid {
                amplitude,
                period,
                phase,
                ..
            } => {
                let omega = 2.0 * core::f64::consts::PI / period;
                amplitude * omega * float::cos(omega * local + phase)
            }
            SegmentKind::SmoothStep { from, to, duration } => {
                let s = local / duration;
                if !(0.0..=1.0).contains(&s) {
                    0.0
                } else {
                    (to - from) * (6.0 * s - 6.0 * s * s) / duration
                }
            }
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self.kind, SegmentKind::Constant(_))
    }
}

/// Piecewise signal over `[0, +inf)`: contiguous segments, last one open.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSignal {
    segments: Vec<Segment>,
}

impl PiecewiseSignal {
    /// `breaks` are segment end times for all but the last kind.
    pub fn new(kinds: Vec<SegmentKind>, breaks: Vec<f64>) -> Result<Self> {
        if kinds.is_empty() {
            return Err(CoreError::ScenarioInconsistent(
                "signal needs at least one segment".to_string(),
            ));
        }
        if breaks.len() + 1 != kinds.len() {
            return Err(CoreError::ScenarioInconsistent(format!(
                "{} segments need {} break times, got {}",
                kinds.len(),
                kinds.len() - 1,
                breaks.len()
            )));
        }
        let mut start = 0.0;
        let mut segments = Vec::with_capacity(kinds.len());
        for (i, kind) in kinds.into_iter().enumerate() {
            let end = breaks.get(i).copied().unwrap_or(f64::INFINITY);
            if !(end > start) {
                return Err(CoreError::ScenarioInconsistent(format!(
                    "segment {i} break time {end} not past {start}"
                )));
            }
            validate_kind(&kind, i)?;
            segments.push(Segment { start, end, kind });
            start = end;
        }
        Ok(Self { segments })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(alloc::vec![SegmentKind::Constant(value)], Vec::new()).unwrap()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    fn segment_at(&self, t: f64) -> &Segment {
        let idx = self
            .segments
            .iter()
            .position(|s| t < s.end)
            .unwrap_or(self.segments.len() - 1);
        &self.segments[idx]
    }

    pub fn value(&self, t: f64) -> f64 {
        self.segment_at(t).value(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.segment_at(t).derivative(t)
    }

    /// Maximal windows (clipped to `[0, horizon]`) on which the signal is a
    /// `Constant` segment, with the held value.
    pub fn constant_windows(&self, horizon: f64) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for seg in &self.segments {
            if !seg.is_constant() || seg.start >= horizon {
                continue;
            }
            if let SegmentKind::Constant(v) = seg.kind {
                out.push((seg.start, float::min(seg.end, horizon), v));
            }
        }
        out
    }
}

fn validate_kind(kind: &SegmentKind, index: usize) -> Result<()> {
    let finite = match kind {
        SegmentKind::Constant(v) => v.is_finite(),
        SegmentKind::Ramp { from, to } => from.is_finite() && to.is_finite(),
        SegmentKind::Sinusoid {
            offset,
            amplitude,
            period,
            phase,
        } => {
            if !(*period > 0.0) {
                return Err(CoreError::ScenarioInconsistent(format!(
                    "segment {index}: sinusoid period must be positive"
                )));
            }
            offset.is_finite() && amplitude.is_finite() && period.is_finite() && phase.is_finite()
        }
        SegmentKind::SmoothStep { from, to, duration } => {
            if !(*duration > 0.0) {
                return Err(CoreError::ScenarioInconsistent(format!(
                    "segment {index}: smoothstep duration must be positive"
                )));
            }
            from.is_finite() && to.is_finite() && duration.is_finite()
        }
    };
    if !finite {
        return Err(CoreError::ScenarioInconsistent(format!(
            "segment {index}: non-finite parameter"
        )));
    }
    Ok(())
}

/// Spatial factor of a separable field on `[0, L]`; used for the disturbance
/// shape `g` in `d(t, x) = d0(t) g(x)` and for initial conditions.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialShape {
    Zero,
    /// `g(x) = x`
    Linear,
    /// `g(x) = (x/L)(1 - x/L)`, vanishing at both boundaries.
    Bump,
    /// The `k`-th eigenfunction of the current basis (1-based).
    Eigenmode(usize),
    /// Raw samples on the basis mesh.
    Samples(Vec<f64>),
}

impl SpatialShape {
    pub fn samples(&self, basis: &SpectralBasis) -> Result<Vec<f64>> {
        let mesh = basis.mesh();
        match self {
            SpatialShape::Zero => Ok(alloc::vec![0.0; mesh.len()]),
            SpatialShape::Linear => Ok(mesh.sample(|x| x)),
            SpatialShape::Bump => {
                let l = mesh.length();
                Ok(mesh.sample(|x| (x / l) * (1.0 - x / l)))
            }
            SpatialShape::Eigenmode(k) => {
                if *k == 0 || *k > basis.mode_count() {
                    return Err(CoreError::InvalidModeRequest(format!(
                        "eigenmode index {k} outside 1..={}",
                        basis.mode_count()
                    )));
                }
                Ok(basis.eigvec(k - 1).to_vec())
            }
            SpatialShape::Samples(values) => {
                if values.len() != mesh.len() {
                    return Err(CoreError::MeshMismatch {
                        expected: mesh.len(),
                        got: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::NonFinite(
                        "initial/disturbance samples".to_string(),
                    ));
                }
                Ok(values.clone())
            }
        }
    }

    /// Whether closed-form tail projections exist past the computed basis
    /// (only the identity shape on a constant profile has them).
    pub fn is_linear(&self) -> bool {
        matches!(self, SpatialShape::Linear)
    }
}
