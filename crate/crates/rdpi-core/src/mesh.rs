//! Uniform grids on `[0, L]` and composite Simpson quadrature.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::float;

/// Uniform grid over `[0, L]` with an odd number of points, so that the
/// interval count is even and composite Simpson applies directly.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformMesh {
    length: f64,
    points: Vec<f64>,
    h: f64,
}

impl UniformMesh {
    /// Builds a mesh with at least `size` points, bumping even sizes by one.
    pub fn new(length: f64, size: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidProfile(
                "domain length must be positive and finite".to_string(),
            ));
        }
        if size < 3 {
            return Err(CoreError::InvalidModeRequest(
                "mesh needs at least 3 points".to_string(),
            ));
        }
        let size = if size.is_multiple_of(2) {
            size + 1
        } else {
            size
        };
        let h = length / (size - 1) as f64;
        let points = (0..size).map(|i| i as f64 * h).collect();
        Ok(Self { length, points, h })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Composite Simpson integral of samples on this mesh.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        let n = f.len();
        let mut odd = 0.0;
        let mut even = 0.0;
        let mut i = 1;
        while i < n - 1 {
            odd += f[i];
            i += 2;
        }
        let mut i = 2;
        while i < n - 1 {
            even += f[i];
            i += 2;
        }
        (self.h / 3.0) * (f[0] + f[n - 1] + 4.0 * odd + 2.0 * even)
    }

    /// `L^2(0, L)` inner product of two sample vectors.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), g.len());
        let n = f.len();
        let mut acc_ends = f[0] * g[0] + f[n - 1] * g[n - 1];
        let mut odd = 0.0;
        let mut even = 0.0;
        let mut i = 1;
        while i < n - 1 {
            odd += f[i] * g[i];
            i += 2;
        }
        let mut i = 2;
        while i < n - 1 {
            even += f[i] * g[i];
            i += 2;
        }
        acc_ends += 4.0 * odd + 2.0 * even;
        (self.h / 3.0) * acc_ends
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        float::sqrt(float::max(self.inner(f, f), 0.0))
    }

    pub fn sup_norm(&self, f: &[f64]) -> f64 {
        f.iter().fold(0.0, |m, &x| float::max(m, float::abs(x)))
    }

    /// Samples a scalar function on the mesh.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&x| f(x)).collect()
    }
}
