//! Control-input history and the Artstein predictor.
//!
//! `Z(t) = X(t) + int_{t-D}^{t} e^{A (t-D-tau)} B v(tau) dtau` turns the
//! input-delayed truncated model into a delay-free one; the feedback is then
//! `v(t) = K Z(t)` for `t >= 0`. The integral is evaluated by composite
//! trapezoid over a ring buffer of `v` samples whose nodes are `dt` apart,
//! with the matrix-exponential weights `e^{-A k dt} B` precomputed once (the
//! exponent depends only on the node offset, never on absolute time).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::control::expm;
use crate::error::{CoreError, Result};
use crate::float;

/// Snap tolerance for node-aligned reads, in units of `dt`.
const NODE_SNAP: f64 = 1e-6;

/// Checks that `dt` divides `delay` exactly and returns `delay / dt`.
pub fn delay_steps(delay: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(delay > 0.0) || !dt.is_finite() || !delay.is_finite() {
        return Err(CoreError::DelayStepMismatch { dt, delay });
    }
    let steps = float::round(delay / dt);
    if steps < 1.0 || float::abs(delay - steps * dt) > 1e-9 * delay {
        return Err(CoreError::DelayStepMismatch { dt, delay });
    }
    Ok(steps as usize)
}

/// Ring of scalar samples at times `t - D + k dt`, `k = 0..=D/dt`. Samples
/// for times below zero stay at their initial value 0, matching an input
/// that is inactive before the clock starts.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    delay: f64,
    dt: f64,
    samples: Vec<f64>,
    /// Index of the newest sample.
    head: usize,
    /// Time of the newest sample.
    t: f64,
}

impl HistoryBuffer {
    pub fn new(delay: f64, dt: f64) -> Result<Self> {
        let steps = delay_steps(delay, dt)?;
        Ok(Self {
            delay,
            dt,
            samples: vec![0.0; steps + 1],
            head: steps,
            t: 0.0,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn delay(&self) -> f64 {
        self.delay
    }

    /// Time of the newest sample.
    #[inline]
    pub fn current_time(&self) -> f64 {
        self.t
    }

    #[inline]
    pub fn newest(&self) -> f64 {
        self.samples[self.head]
    }

    /// Sample at node `k`, where `k = 0` is the oldest (time `t - D`).
    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k < self.samples.len());
        self.samples[(self.head + 1 + k) % self.samples.len()]
    }

    /// Advances time by `dt`, dropping the oldest sample.
    pub fn push(&mut self, value: f64) {
        self.head = (self.head + 1) % self.samples.len();
        self.samples[self.head] = value;
        self.t += self.dt;
    }

    /// Overwrites the newest sample without advancing time.
    pub fn replace_newest(&mut self, value: f64) {
        self.samples[self.head] = value;
    }

    /// Linear interpolation between nodes; times up to one step past the
    /// newest sample clamp to it (the caller extrapolates the running step).
    pub fn value_at(&self, time: f64) -> Result<f64> {
        let n = self.samples.len() - 1;
        let s = (time - (self.t - self.delay)) / self.dt;
        if s < -NODE_SNAP || s > n as f64 + 1.0 + NODE_SNAP {
            return Err(CoreError::BufferMisaligned(format!(
                "time {time} outside history window ending at {}",
                self.t
            )));
        }
        let snapped = float::round(s);
        if float::abs(s - snapped) < NODE_SNAP {
            let k = float::min(float::max(snapped, 0.0), n as f64) as usize;
            return Ok(self.node(k));
        }
        if s >= n as f64 {
            return Ok(self.newest());
        }
        let i = s as usize;
        let frac = s - i as f64;
        Ok(self.node(i) * (1.0 - frac) + self.node(i + 1) * frac)
    }
}

/// Precomputed trapezoid weights `e^{-A k dt} B` and the feedback gain.
#[derive(Debug, Clone)]
pub struct PredictorState {
    weights: Vec<DVector<f64>>,
    gain: DVector<f64>,
    delay: f64,
    dt: f64,
}

impl PredictorState {
    /// One `expm` at setup; the remaining weights follow by repeated
    /// application of the single-step transition `e^{-A dt}`.
    pub fn new(
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        gain: DVector<f64>,
        delay: f64,
        dt: f64,
    ) -> Result<Self> {
        let steps = delay_steps(delay, dt)?;
        let step_matrix = expm(&(-a * dt));
        let mut weights = Vec::with_capacity(steps + 1);
        weights.push(b.clone());
        for k in 0..steps {
            let next = &step_matrix * &weights[k];
            weights.push(next);
        }
        Ok(Self {
            weights,
            gain,
            delay,
            dt,
        })
    }

    #[inline]
    pub fn gain(&self) -> &DVector<f64> {
        &self.gain
    }

    /// Weight `e^{-A k dt} B` for node `k` counted from the oldest sample:
    /// the oldest node (time `t - D`) carries `B`, the newest `e^{-A D} B`.
    #[inline]
    pub fn weight(&self, k: usize) -> &DVector<f64> {
        &self.weights[k]
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// `K . e^{-A D} B`, the feedthrough coefficient of the newest node.
    pub fn gain_dot_newest(&self) -> f64 {
        self.gain.dot(&self.weights[self.weights.len() - 1])
    }

    /// Trapezoid evaluation of `int_{T-D}^{T} e^{A (T-D-tau)} B v(tau) dtau`
    /// at `T = t_eval`, reading `v` from the buffer. `t_eval` may run up to
    /// one step past the buffer head (the newest value is held constant
    /// there), which is what the integrator stages need.
    ///
    /// The input vanishes identically before `t = 0` but generally jumps at
    /// `t = 0` (the feedback switches on there); the quadrature therefore
    /// runs over `[max(T-D, 0), T]` so the jump never straddles a trapezoid
    /// panel.
    pub fn history_integral(&self, buffer: &HistoryBuffer, t_eval: f64) -> Result<DVector<f64>> {
        let (mut acc, last) = self.history_integral_open(buffer, t_eval)?;
        let n = self.weights.len() - 1;
        acc.axpy(last * buffer.value_at(t_eval)?, &self.weights[n], 1.0);
        Ok(acc)
    }

    /// The history integral with the newest-node term split off: returns the
    /// sum over all earlier nodes plus the scalar weight of `v(t_eval)`.
    /// The caller either supplies the newest sample or solves the one-node
    /// feedback fixed point in closed form.
    pub fn history_integral_open(
        &self,
        buffer: &HistoryBuffer,
        t_eval: f64,
    ) -> Result<(DVector<f64>, f64)> {
        if float::abs(buffer.dt() - self.dt) > 1e-12
            || float::abs(buffer.delay() - self.delay) > 1e-12
        {
            return Err(CoreError::BufferMisaligned(format!(
                "buffer grid ({}, {}) differs from predictor grid ({}, {})",
                buffer.delay(),
                buffer.dt(),
                self.delay,
                self.dt
            )));
        }
        if t_eval < buffer.current_time() - 1e-9 || t_eval > buffer.current_time() + self.dt + 1e-9
        {
            return Err(CoreError::BufferMisaligned(format!(
                "evaluation time {t_eval} not aligned with buffer time {}",
                buffer.current_time()
            )));
        }
        let n = self.weights.len() - 1;
        let dim = self.weights[0].len();
        let mut acc = DVector::zeros(dim);
        if t_eval <= 1e-12 {
            return Ok((acc, 0.0));
        }

        let window_start = t_eval - self.delay;
        if window_start >= -1e-12 {
            // full window [t_eval - D, t_eval]
            for k in 0..n {
                let tau = window_start + k as f64 * self.dt;
                let scale = if k == 0 { 0.5 } else { 1.0 };
                acc.axpy(
                    scale * buffer.value_at(tau)? * self.dt,
                    &self.weights[k],
                    1.0,
                );
            }
            return Ok((acc, 0.5 * self.dt));
        }

        // clipped window [0, t_eval]: k0 is the first node at or past zero
        let k0 = (libm::ceil(-window_start / self.dt - 1e-9) as usize).min(n);
        let tau0 = window_start + k0 as f64 * self.dt;
        if k0 == n {
            // only the newest node remains: one short panel [0, t_eval]
            let v0 = buffer.value_at(0.0)?;
            acc.axpy(0.5 * tau0 * v0, &self.weights[n], 1.0);
            return Ok((acc, 0.5 * tau0));
        }
        if tau0 > 1e-12 {
            // short leading panel [0, tau0]; reusing the nearest cached
            // weight costs O(dt^2) on a sub-dt panel
            let v_edge = 0.5 * tau0 * (buffer.value_at(0.0)? + buffer.value_at(tau0)?);
            acc.axpy(v_edge, &self.weights[k0], 1.0);
        }
        for k in k0..n {
            let tau = window_start + k as f64 * self.dt;
            let scale = if k == k0 { 0.5 } else { 1.0 };
            acc.axpy(
                scale * buffer.value_at(tau)? * self.dt,
                &self.weights[k],
                1.0,
            );
        }
        Ok((acc, 0.5 * self.dt))
    }

    /// Solves `v = K (x + I_open + w_last W_N v)` for the newest feedback
    /// value: one scalar division, since only the newest node involves `v`
    /// itself. Fails if the feedthrough puts the discretisation outside its
    /// contraction regime (step far too coarse for the gain).
    pub fn fixed_point_feedback(
        &self,
        x: &DVector<f64>,
        buffer: &HistoryBuffer,
        t_eval: f64,
    ) -> Result<f64> {
        let (open, w_last) = self.history_integral_open(buffer, t_eval)?;
        let denom = feedback_denominator(w_last * self.gain_dot_newest())?;
        Ok(self.gain.dot(&(x + open)) / denom)
    }
}

/// `1 - feedthrough`, guarded against losing the contraction margin.
pub fn feedback_denominator(feedthrough: f64) -> Result<f64> {
    let denom = 1.0 - feedthrough;
    if float::abs(denom) < 1e-6 {
        return Err(CoreError::BufferMisaligned(format!(
            "feedback feedthrough {feedthrough:.3} leaves no contraction margin; reduce dt"
        )));
    }
    Ok(denom)
}

/// `Z = X + ` weighted history integral at the buffer's current time.
pub fn artstein_transform(
    x: &DVector<f64>,
    buffer: &HistoryBuffer,
    pred: &PredictorState,
) -> Result<DVector<f64>> {
    Ok(x + pred.history_integral(buffer, buffer.current_time())?)
}

/// `v(t) = K Z(t)` for `t >= 0`, zero before the clock starts.
#[inline]
pub fn feedback(z: &DVector<f64>, gain: &DVector<f64>, t: f64) -> f64 {
    if t >= 0.0 {
        gain.dot(z)
    } else {
        0.0
    }
}

/// `|E_1 Z - u|`: the first component of the transformed state reproduces
/// the accumulated control input up to quadrature error.
#[inline]
pub fn first_component_identity(z: &DVector<f64>, u: f64) -> f64 {
    float::abs(z[0] - u)
}
