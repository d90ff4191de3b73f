//! Eigen-decomposition of `A = d²/dx² + c(x)` on `(0, L)` with homogeneous
//! Dirichlet conditions, plus projections onto the resulting basis.
//!
//! Constant reaction profiles take the closed-form path
//! `lambda_j = c - (j pi / L)^2`, `e_j = sqrt(2/L) sin(j pi x / L)`. Sampled
//! profiles go through a second-order central finite-difference discretisation
//! on the mesh and on its two-fold refinement, with one Richardson step
//! `(4 lambda_{h/2} - lambda_h) / 3` recovering fourth-order eigenvalues and
//! boundary traces. Every eigenfunction is normalised in `L^2(0, L)` and
//! signed so that `e_j'(0) > 0`.
//!
//! For genuinely rough sampled profiles (`c` merely bounded), the
//! finite-difference convergence order degrades and the stated tolerances
//! apply only to smooth data; the solver does not detect roughness.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::float;
use crate::mesh::UniformMesh;
use crate::tridiag;

const PI: f64 = core::f64::consts::PI;

/// Reaction coefficient `c` of the operator, either constant or sampled on a
/// uniform grid spanning `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionProfile {
    kind: ProfileKind,
    length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Constant(f64),
    Sampled(Vec<f64>),
}

impl ReactionProfile {
    pub fn constant(value: f64, length: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(CoreError::InvalidProfile(
                "constant reaction rate must be finite".to_string(),
            ));
        }
        Self::check_length(length)?;
        Ok(Self {
            kind: ProfileKind::Constant(value),
            length,
        })
    }

    pub fn sampled(values: Vec<f64>, length: f64) -> Result<Self> {
        if values.len() < 3 {
            return Err(CoreError::InvalidProfile(format!(
                "sampled profile needs at least 3 grid values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidProfile(
                "sampled profile contains non-finite values".to_string(),
            ));
        }
        Self::check_length(length)?;
        Ok(Self {
            kind: ProfileKind::Sampled(values),
            length,
        })
    }

    fn check_length(length: f64) -> Result<()> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(CoreError::InvalidProfile(
                "domain length must be positive and finite".to_string(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            ProfileKind::Constant(c) => Some(c),
            ProfileKind::Sampled(_) => None,
        }
    }

    /// `c(x)` at one point; sampled profiles interpolate linearly.
    pub fn value_at(&self, x: f64) -> f64 {
        match &self.kind {
            ProfileKind::Constant(c) => *c,
            ProfileKind::Sampled(values) => {
                let n = values.len();
                let s = (x / self.length) * (n - 1) as f64;
                let i = float::min(float::max(s, 0.0), (n - 1) as f64) as usize;
                if i >= n - 1 {
                    return values[n - 1];
                }
                let frac = s - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    /// Essential supremum of `|c|`, used by Lyapunov constants.
    pub fn sup_abs(&self) -> f64 {
        match &self.kind {
            ProfileKind::Constant(c) => float::abs(*c),
            ProfileKind::Sampled(values) => values
                .iter()
                .fold(0.0, |m, &v| float::max(m, float::abs(v))),
        }
    }

    /// Samples `c` on an arbitrary mesh.
    pub fn samples_on(&self, mesh: &UniformMesh) -> Vec<f64> {
        mesh.points().iter().map(|&x| self.value_at(x)).collect()
    }
}

/// Orthonormal Dirichlet eigenbasis of `d²/dx² + c(x)` with the data the
/// control design consumes: eigenvalues (strictly decreasing), boundary
/// derivative traces and mesh samples of each eigenfunction.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    profile: ReactionProfile,
    mesh: UniformMesh,
    lambdas: Vec<f64>,
    ep0: Vec<f64>,
    epl: Vec<f64>,
    eigvecs: Vec<Vec<f64>>,
    fingerprint: u64,
}

impl SpectralBasis {
    #[inline]
    pub fn mode_count(&self) -> usize {
        self.lambdas.len()
    }

    /// Eigenvalues, strictly decreasing (`lambdas()[0]` is the largest).
    #[inline]
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Traces `e_j'(0)`, positive by the sign convention.
    #[inline]
    pub fn ep0(&self) -> &[f64] {
        &self.ep0
    }

    /// Traces `e_j'(L)`.
    #[inline]
    pub fn epl(&self) -> &[f64] {
        &self.epl
    }

    /// Samples of the j-th eigenfunction (0-based index) on the mesh.
    #[inline]
    pub fn eigvec(&self, idx: usize) -> &[f64] {
        &self.eigvecs[idx]
    }

    #[inline]
    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    #[inline]
    pub fn profile(&self) -> &ReactionProfile {
        &self.profile
    }

    /// Stable identifier tying downstream objects to the basis they came from.
    #[inline]
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// Inner products `a_j = <x c(x)/L, e_j>` and `b_j = -<x/L, e_j>` of the
/// homogenisation source terms.
#[derive(Debug, Clone)]
pub struct ModeCoefficients {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ModeCoefficients {
    #[inline]
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &[f64] {
        &self.b
    }
}

/// Computes the first `mode_count` eigenpairs, sorted by decreasing
/// eigenvalue. `mesh_size` must resolve the highest mode: at least
/// `8 * mode_count` points.
pub fn compute_basis(
    profile: &ReactionProfile,
    mode_count: usize,
    mesh_size: usize,
) -> Result<SpectralBasis> {
    if mode_count < 1 {
        return Err(CoreError::InvalidModeRequest(
            "mode count must be at least 1".to_string(),
        ));
    }
    if mesh_size < 8 * mode_count {
        return Err(CoreError::InvalidModeRequest(format!(
            "mesh_size {} too coarse for {} modes (need at least {})",
            mesh_size,
            mode_count,
            8 * mode_count
        )));
    }
    let mesh = UniformMesh::new(profile.length(), mesh_size)?;

    let (lambdas, ep0, epl, eigvecs) = match profile.kind() {
        ProfileKind::Constant(c) => analytic_eigenpairs(*c, mode_count, &mesh),
        ProfileKind::Sampled(_) => numeric_eigenpairs(profile, mode_count, &mesh)?,
    };

    for (idx, pair) in lambdas.windows(2).enumerate() {
        if !(pair[0] > pair[1]) {
            return Err(CoreError::EigenvalueOrder { index: idx + 1 });
        }
    }

    let fingerprint = fingerprint(profile, &mesh, &lambdas);
    Ok(SpectralBasis {
        profile: profile.clone(),
        mesh,
        lambdas,
        ep0,
        epl,
        eigvecs,
        fingerprint,
    })
}

/// Quadrature projections `<f, e_j>` of samples living on the basis mesh.
pub fn project(basis: &SpectralBasis, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != basis.mesh.len() {
        return Err(CoreError::MeshMismatch {
            expected: basis.mesh.len(),
            got: f.len(),
        });
    }
    Ok(basis
        .eigvecs
        .iter()
        .map(|e| basis.mesh.inner(f, e))
        .collect())
}

/// Computes `a_j`, `b_j` by composite quadrature. The profile must be the one
/// the basis was built from (same reaction law and domain length).
pub fn mode_coefficients(
    basis: &SpectralBasis,
    profile: &ReactionProfile,
) -> Result<ModeCoefficients> {
    if profile != basis.profile() {
        return Err(CoreError::InvalidProfile(
            "profile differs from the one the basis was computed for".to_string(),
        ));
    }
    let l = basis.mesh.length();
    let a_fn = basis.mesh.sample(|x| x * profile.value_at(x) / l);
    let b_fn = basis.mesh.sample(|x| -x / l);
    let a = project(basis, &a_fn)?;
    let b = project(basis, &b_fn)?;
    Ok(ModeCoefficients { a, b })
}

/// Samples of the source terms `a(x) = x c(x)/L` and `b(x) = -x/L`.
pub fn source_samples(profile: &ReactionProfile, mesh: &UniformMesh) -> (Vec<f64>, Vec<f64>) {
    let l = mesh.length();
    let a = mesh.sample(|x| x * profile.value_at(x) / l);
    let b = mesh.sample(|x| -x / l);
    (a, b)
}

/// Closed forms for constant reaction profiles, shared by the analytic basis
/// path and the tail-series extensions.
pub(crate) mod analytic {
    use super::PI;
    use crate::float;

    /// `lambda_j = c - (j pi / L)^2`
    #[inline]
    pub fn lambda(c: f64, l: f64, j: usize) -> f64 {
        let freq = j as f64 * PI / l;
        c - freq * freq
    }

    /// `e_j'(0) = sqrt(2/L) j pi / L`
    #[inline]
    pub fn ep0(l: f64, j: usize) -> f64 {
        float::sqrt(2.0 / l) * j as f64 * PI / l
    }

    /// `b_j = -sqrt(2L) (-1)^{j+1} / (j pi)`
    #[inline]
    pub fn b_coef(l: f64, j: usize) -> f64 {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        -float::sqrt(2.0 * l) * sign / (j as f64 * PI)
    }

    /// `a_j = <x c / L, e_j> = -c b_j`
    #[inline]
    pub fn a_coef(c: f64, l: f64, j: usize) -> f64 {
        -c * b_coef(l, j)
    }

    /// `<x, e_j> = -L b_j`, the projection of the identity-shaped disturbance
    #[inline]
    pub fn d_linear(l: f64, j: usize) -> f64 {
        -l * b_coef(l, j)
    }
}

fn analytic_eigenpairs(
    c: f64,
    count: usize,
    mesh: &UniformMesh,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let l = mesh.length();
    let amp = float::sqrt(2.0 / l);
    let mut lambdas = Vec::with_capacity(count);
    let mut ep0 = Vec::with_capacity(count);
    let mut epl = Vec::with_capacity(count);
    let mut eigvecs = Vec::with_capacity(count);
    for j in 1..=count {
        let freq = j as f64 * PI / l;
        lambdas.push(analytic::lambda(c, l, j));
        ep0.push(analytic::ep0(l, j));
        epl.push(amp * freq * if j % 2 == 0 { 1.0 } else { -1.0 });
        eigvecs.push(mesh.sample(|x| amp * float::sin(freq * x)));
    }
    (lambdas, ep0, epl, eigvecs)
}

type EigenData = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>);

fn numeric_eigenpairs(
    profile: &ReactionProfile,
    count: usize,
    mesh: &UniformMesh,
) -> Result<EigenData> {
    let fine = UniformMesh::new(profile.length(), 2 * mesh.len() - 1)?;
    let coarse_sol = fd_eigenpairs(profile, count, mesh);
    let fine_sol = fd_eigenpairs(profile, count, &fine);

    let mut lambdas = Vec::with_capacity(count);
    let mut ep0 = Vec::with_capacity(count);
    let mut epl = Vec::with_capacity(count);
    let mut eigvecs = Vec::with_capacity(count);
    for k in 0..count {
        lambdas.push((4.0 * fine_sol.lambdas[k] - coarse_sol.lambdas[k]) / 3.0);
        ep0.push((4.0 * fine_sol.ep0[k] - coarse_sol.ep0[k]) / 3.0);
        epl.push((4.0 * fine_sol.epl[k] - coarse_sol.epl[k]) / 3.0);

        // keep every second fine point as the basis-mesh samples
        let mut v: Vec<f64> = fine_sol.vectors[k].iter().step_by(2).copied().collect();
        debug_assert_eq!(v.len(), mesh.len());
        let norm = mesh.l2_norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        eigvecs.push(v);
    }
    Ok((lambdas, ep0, epl, eigvecs))
}

struct FdSolution {
    lambdas: Vec<f64>,
    ep0: Vec<f64>,
    epl: Vec<f64>,
    /// Full-mesh samples including the zero boundary values, L^2-normalised.
    vectors: Vec<Vec<f64>>,
}

/// Plain second-order finite differences on one mesh: the interior stencil
/// gives a symmetric tridiagonal matrix with constant off-diagonal 1/h^2.
fn fd_eigenpairs(profile: &ReactionProfile, count: usize, mesh: &UniformMesh) -> FdSolution {
    let h = mesh.h();
    let l = mesh.length();
    let points = mesh.points();
    let q = mesh.len() - 2;
    let diag: Vec<f64> = (1..=q)
        .map(|i| profile.value_at(points[i]) - 2.0 / (h * h))
        .collect();
    let off = 1.0 / (h * h);

    let eig = tridiag::largest_eigenpairs(&diag, off, count, |k, i| {
        float::sin((k + 1) as f64 * PI * points[i + 1] / l)
    });

    let mut lambdas = Vec::with_capacity(count);
    let mut ep0 = Vec::with_capacity(count);
    let mut epl = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for (k, interior) in eig.vectors.iter().enumerate() {
        let mut v = Vec::with_capacity(mesh.len());
        v.push(0.0);
        v.extend_from_slice(interior);
        v.push(0.0);
        let norm = mesh.l2_norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);

        // one-sided second-order differences, using e_j(0) = e_j(L) = 0
        let mut d0 = (4.0 * v[1] - v[2]) / (2.0 * h);
        let n = v.len();
        let mut dl = (-4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
        if d0 < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
            d0 = -d0;
            dl = -dl;
        }
        lambdas.push(eig.values[k]);
        ep0.push(d0);
        epl.push(dl);
        vectors.push(v);
    }
    FdSolution {
        lambdas,
        ep0,
        epl,
        vectors,
    }
}

fn fingerprint(profile: &ReactionProfile, mesh: &UniformMesh, lambdas: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |bits: u64| {
        h ^= bits;
        h = h.wrapping_mul(0x100000001b3);
    };
    mix(profile.length().to_bits());
    mix(mesh.len() as u64);
    mix(lambdas.len() as u64);
    for &l in lambdas {
        mix(l.to_bits());
    }
    match profile.kind() {
        ProfileKind::Constant(c) => mix(c.to_bits()),
        ProfileKind::Sampled(v) => {
            mix(v.len() as u64);
            for &x in v {
                mix(x.to_bits());
            }
        }
    }
    h
}
