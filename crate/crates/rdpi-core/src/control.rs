//! Controllability tests, pole placement on the delay-compensated pair, and
//! the closed-loop Lyapunov certificate.
//!
//! The feedback acts through `v(t) = K Z(t)` on the Artstein-transformed
//! state, so the design pair is `(A, e^{-D A} B)` and the closed-loop matrix
//! is `A_K = A + e^{-D A} B K`. The certificate carries `K`, the Lyapunov
//! matrix `P` solving `A_K' P + P A_K = -I`, the weight `M` and the decay
//! rate `kappa` that together certify exponential decay of the closed loop.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::float;
use crate::model::TruncatedModel;
use crate::spectral::{source_samples, SpectralBasis};

/// Relative threshold under which QR diagonal entries count as zero.
const RANK_TOL: f64 = 1e-9;
/// Condition-number guard for the Ackermann controllability matrix.
const COND_LIMIT: f64 = 1e12;
/// Safety factor applied on top of the strict lower bound for `M`.
const M_MARGIN: f64 = 1.01;

/// Closed-loop certificate for one `(model, delay, poles)` design.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// Feedback gain, applied as `v = k . z`.
    pub k: DVector<f64>,
    /// `A_K = A + e^{-D A} B K`.
    pub ak: DMatrix<f64>,
    /// Solution of `A_K' P + P A_K = -I`, symmetric positive definite.
    pub p: DMatrix<f64>,
    /// Lyapunov weight `M`.
    pub m_weight: f64,
    /// Certified decay rate.
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma5: f64,
    /// `1 / |lambda_{n+1}|`.
    pub gamma6: f64,
    /// Requested closed-loop spectrum.
    pub poles: Vec<f64>,
    /// Input delay the design compensates.
    pub delay: f64,
    /// Extremal eigenvalues of `P`.
    pub lambda_min_p: f64,
    pub lambda_max_p: f64,
}

/// `[B, AB, .., A^{q-1}B]` for a possibly multi-column input matrix.
pub fn kalman_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = a.nrows();
    let m = b.ncols();
    let mut k = DMatrix::zeros(q, q * m);
    let mut block = b.clone();
    for i in 0..q {
        k.view_mut((0, i * m), (q, m)).copy_from(&block);
        block = a * &block;
    }
    k
}

/// Numerical rank via column-pivoted QR with a relative threshold.
pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let k = r.nrows().min(r.ncols());
    let largest = (0..k).fold(0.0, |acc, i| float::max(acc, float::abs(r[(i, i)])));
    if largest == 0.0 {
        return 0;
    }
    (0..k)
        .filter(|&i| float::abs(r[(i, i)]) > RANK_TOL * largest)
        .count()
}

/// Kalman condition: the controllability matrix has full row rank.
pub fn kalman_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    matrix_rank(&kalman_matrix(a, b)) == a.nrows()
}

/// Evaluates both sides of the augmented-controllability equivalence:
/// `lhs` is "(A,B) Kalman and rank (A B; C D) = n + p", `rhs` is the Kalman
/// condition of the zero-padded augmented pair. The two always agree.
pub fn augmented_kalman_equivalence(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> (bool, bool) {
    let n = a.nrows();
    let p = c.nrows();
    let m = b.ncols();
    assert_eq!(a.ncols(), n, "A must be square");
    assert_eq!(b.nrows(), n, "B row count must match A");
    assert_eq!(c.ncols(), n, "C column count must match A");
    assert_eq!(d.nrows(), p, "D row count must match C");
    assert_eq!(d.ncols(), m, "D column count must match B");

    let mut block = DMatrix::zeros(n + p, n + m);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, m)).copy_from(b);
    block.view_mut((n, 0), (p, n)).copy_from(c);
    block.view_mut((n, n), (p, m)).copy_from(d);
    let lhs = kalman_rank(a, b) && matrix_rank(&block) == n + p;

    let mut aug_a = DMatrix::zeros(n + p, n + p);
    aug_a.view_mut((0, 0), (n, n)).copy_from(a);
    aug_a.view_mut((n, 0), (p, n)).copy_from(c);
    let mut aug_b = DMatrix::zeros(n + p, m);
    aug_b.view_mut((0, 0), (n, m)).copy_from(b);
    aug_b.view_mut((n, 0), (p, m)).copy_from(d);
    let rhs = kalman_rank(&aug_a, &aug_b);

    (lhs, rhs)
}

/// Determinant of the Kalman matrix of `(A1, B1)` both directly and through
/// the product-Vandermonde factorisation
/// `prod_j (a_j + lambda_j b_j) * prod_{i<j} (lambda_j - lambda_i)`.
pub fn controllability_determinant(model: &TruncatedModel) -> Result<(f64, f64)> {
    if model.n() == 0 {
        return Err(CoreError::InvalidModeRequest(alloc::string::String::from(
            "determinant factorisation needs n >= 1",
        )));
    }
    Ok(structured_kalman_determinant(model.a1(), model.b1()))
}

/// The same two determinant routes for any integrator-plus-diagonal block
/// `A1 = (0 0; a diag(lambda))`, `B1 = (1; b)`.
pub fn structured_kalman_determinant(a1: &DMatrix<f64>, b1: &DVector<f64>) -> (f64, f64) {
    let n = a1.nrows() - 1;
    let b1_col = DMatrix::from_column_slice(n + 1, 1, b1.as_slice());
    let direct = kalman_matrix(a1, &b1_col).determinant();

    let mut formula = 1.0;
    let mut lambdas = Vec::with_capacity(n);
    for j in 1..=n {
        let a_j = a1[(j, 0)];
        let lambda_j = a1[(j, j)];
        formula *= a_j + lambda_j * b1[j];
        lambdas.push(lambda_j);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            formula *= lambdas[j] - lambdas[i];
        }
    }
    (direct, formula)
}

/// Matrix exponential by scaling-and-squaring with the Pade(13) approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(m.nrows(), m.ncols(), "expm needs a square matrix");
    debug_assert!(m.iter().all(|x| x.is_finite()));
    let dim = m.nrows();
    if dim == 0 {
        return DMatrix::zeros(0, 0);
    }

    // 1-norm controls the scaling (Higham's theta_13)
    const THETA_13: f64 = 5.371920351148152;
    let norm = (0..dim).fold(0.0f64, |acc, j| {
        float::max(acc, m.column(j).iter().map(|x| float::abs(*x)).sum())
    });
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > THETA_13 && squarings < 64 {
        squarings += 1;
        scale *= 0.5;
    }
    let a = m * scale;

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let eye = DMatrix::identity(dim, dim);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * B[13] + &a4 * B[11] + &a2 * B[9];
    let u = &a * (&a6 * &u_inner + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &eye * B[1]);
    let v_inner = &a6 * B[12] + &a4 * B[10] + &a2 * B[8];
    let v = &a6 * &v_inner + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &eye * B[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut x = denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is nonsingular for scaled input");
    for _ in 0..squarings {
        x = &x * &x;
    }
    x
}

/// Induced 2-norm of a small dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    let eigs = gram.symmetric_eigen().eigenvalues;
    float::sqrt(float::max(eigs.max(), 0.0))
}

/// Single-input pole placement by Ackermann's formula: returns `k` with
/// `eig(A + b k') = poles`. Real pole lists only.
pub fn place_poles(a: &DMatrix<f64>, b: &DVector<f64>, poles: &[f64]) -> Result<DVector<f64>> {
    let dim = a.nrows();
    if poles.len() != dim {
        return Err(CoreError::PoleCount {
            expected: dim,
            got: poles.len(),
        });
    }
    if poles.iter().any(|p| !p.is_finite()) {
        return Err(CoreError::NonFinite(alloc::string::String::from(
            "pole list",
        )));
    }

    let ctrl = kalman_matrix(a, &DMatrix::from_column_slice(dim, 1, b.as_slice()));
    let svd = ctrl.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd
        .singular_values
        .iter()
        .fold(f64::INFINITY, |acc, &s| float::min(acc, s));
    let cond = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(cond < COND_LIMIT) {
        return Err(CoreError::IllConditioned {
            cond,
            limit: COND_LIMIT,
        });
    }

    // phi(A) = prod (A - p_i I)
    let mut phi = DMatrix::identity(dim, dim);
    for &p in poles {
        phi = &phi * (a - DMatrix::identity(dim, dim) * p);
    }

    // k' = -e_dim' C^{-1} phi(A): solve C' w = e_dim, then k = -phi(A)' w
    let mut e_last = DVector::zeros(dim);
    e_last[dim - 1] = 1.0;
    let w: DVector<f64> =
        ctrl.transpose()
            .lu()
            .solve(&e_last)
            .ok_or(CoreError::IllConditioned {
                cond,
                limit: COND_LIMIT,
            })?;
    let phi_t: DMatrix<f64> = phi.transpose();
    let mut k: DVector<f64> = &phi_t * &w;
    k.neg_mut();

    verify_spectrum(&closed_loop(a, b, &k), poles)?;
    Ok(k)
}

/// `A + b k'` as a rank-one update.
pub fn closed_loop(a: &DMatrix<f64>, b: &DVector<f64>, k: &DVector<f64>) -> DMatrix<f64> {
    let mut ak = a.clone();
    ak.ger(1.0, b, k, 1.0);
    ak
}

/// Checks that the eigenvalues of `m` match the requested real poles within
/// a relative tolerance of 1e-6.
fn verify_spectrum(m: &DMatrix<f64>, poles: &[f64]) -> Result<()> {
    let mut achieved: Vec<(f64, f64)> = m
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    achieved.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut wanted = poles.to_vec();
    wanted.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut worst = 0.0f64;
    for (got, want) in achieved.iter().zip(&wanted) {
        let scale = float::max(1.0, float::abs(*want));
        let err = float::max(float::abs(got.0 - want), float::abs(got.1)) / scale;
        worst = float::max(worst, err);
    }
    if worst > 1e-6 {
        return Err(CoreError::PlacementVerification { worst });
    }
    Ok(())
}

/// Solves `A_K' P + P A_K = -I` through the Kronecker-product linear system;
/// exact-arithmetic cheap at these dimensions. Requires `A_K` Hurwitz.
pub fn lyapunov_solve(ak: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = ak.nrows();
    let eigs = ak.clone().complex_eigenvalues();
    if let Some(bad) = eigs.iter().find(|z| z.re >= 0.0) {
        return Err(CoreError::NotHurwitz { real_part: bad.re });
    }

    let akt = ak.transpose();
    let eye = DMatrix::<f64>::identity(dim, dim);
    let system = eye.kronecker(&akt) + akt.kronecker(&eye);
    let mut rhs = DVector::zeros(dim * dim);
    for i in 0..dim {
        rhs[i * dim + i] = -1.0;
    }
    let lu = system.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or(CoreError::NotHurwitz { real_part: 0.0 })?;
    // two rounds of iterative refinement push the residual to roundoff
    for _ in 0..2 {
        let defect = &rhs - &system * &x;
        if let Some(dx) = lu.solve(&defect) {
            x += dx;
        }
    }
    let mut p = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            p[(i, j)] = x[j * dim + i];
        }
    }
    // symmetrise away solver roundoff
    p = (&p + p.transpose()) * 0.5;

    // Rounding P itself already perturbs the residual by ~eps |AK| |P|, so
    // the acceptance floor must scale with the problem; 1e-10 applies to
    // well-scaled systems.
    let residual = (ak.transpose() * &p + &p * ak + DMatrix::identity(dim, dim)).norm();
    let tol = float::max(1e-10, 20.0 * f64::EPSILON * ak.norm() * p.norm());
    if residual > tol {
        return Err(CoreError::LyapunovResidual { residual });
    }
    Ok(p)
}

/// Designs the feedback gain and assembles the decay certificate.
pub fn build_certificate(
    model: &TruncatedModel,
    basis: &SpectralBasis,
    delay: f64,
    poles: &[f64],
) -> Result<Certificate> {
    if !(delay > 0.0) || !delay.is_finite() {
        return Err(CoreError::ScenarioInconsistent(
            alloc::string::String::from("delay must be positive and finite"),
        ));
    }
    if let Some(&bad) = poles.iter().find(|&&p| !(p < 0.0)) {
        return Err(CoreError::UnstablePole(bad));
    }
    let dim = model.dim();
    if poles.len() != dim {
        return Err(CoreError::PoleCount {
            expected: dim,
            got: poles.len(),
        });
    }

    let exp_neg_da = expm(&(-model.a() * delay));
    let b_eff: DVector<f64> = &exp_neg_da * model.b();
    let b_mat = DMatrix::from_column_slice(dim, 1, model.b().as_slice());
    if !kalman_rank(model.a(), &b_mat) {
        return Err(CoreError::Uncontrollable);
    }

    let k = place_poles(model.a(), &b_eff, poles)?;
    let ak = closed_loop(model.a(), &b_eff, &k);
    let p = lyapunov_solve(&ak)?;

    let p_eigs = p.clone().symmetric_eigen().eigenvalues;
    let lambda_min_p = p_eigs.iter().fold(f64::INFINITY, |m, &x| float::min(m, x));
    let lambda_max_p = p_eigs.max();

    // gamma_1 = 2 max(1, D e^{2 D |A|} |B K|^2), with |B K| = |B| |K| for the
    // rank-one product
    let a_norm = spectral_norm(model.a());
    let bk_norm = model.b().norm() * k.norm();
    let gamma1 = 2.0
        * float::max(
            1.0,
            delay * float::exp(2.0 * delay * a_norm) * bk_norm * bk_norm,
        );

    // L^2(0, L) norms of the source terms a(x) = x c(x)/L, b(x) = -x/L
    let (a_fn, b_fn) = source_samples(basis.profile(), basis.mesh());
    let a_l2 = basis.mesh().l2_norm(&a_fn);
    let b_l2 = basis.mesh().l2_norm(&b_fn);

    let exp_neg_dak_norm = spectral_norm(&expm(&(-&ak * delay)));
    let coupling = gamma1 * a_l2 * a_l2
        + 2.0 * b_l2 * b_l2 * exp_neg_dak_norm * exp_neg_dak_norm * k.norm_squared();
    let m_lower = float::max(gamma1 * basis.lambdas()[0] / lambda_min_p, 4.0 * coupling);
    let m_weight = M_MARGIN * m_lower;

    let gamma5 = m_weight / 4.0 - coupling;
    debug_assert!(gamma5 > 0.0);
    let gamma6 = 1.0 / float::abs(basis.lambdas()[model.n()]);
    let kappa = 0.5 * float::min(2.0 * gamma5 / (m_weight * lambda_max_p), 0.5 / gamma6);

    Ok(Certificate {
        k,
        ak,
        p,
        m_weight,
        kappa,
        gamma1,
        gamma5,
        gamma6,
        poles: poles.to_vec(),
        delay,
        lambda_min_p,
        lambda_max_p,
    })
}
