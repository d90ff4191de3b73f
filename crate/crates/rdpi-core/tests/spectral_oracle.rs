//! Independent eigenvalue oracles for the numeric spectral path.

mod common;

use nalgebra::DMatrix;
use rdpi_core::mesh::UniformMesh;
use rdpi_core::spectral::{compute_basis, project, ReactionProfile};

/// Brute-force oracle: assemble the dense finite-difference matrix on a mesh
/// and take nalgebra's full symmetric eigendecomposition. Returns the `count`
/// largest eigenvalues, descending.
fn dense_fd_eigenvalues(profile: &ReactionProfile, mesh_size: usize, count: usize) -> Vec<f64> {
    let mesh = UniformMesh::new(profile.length(), mesh_size).unwrap();
    let h = mesh.h();
    let q = mesh.len() - 2;
    let mut m = DMatrix::zeros(q, q);
    for i in 0..q {
        m[(i, i)] = profile.value_at(mesh.points()[i + 1]) - 2.0 / (h * h);
        if i + 1 < q {
            m[(i, i + 1)] = 1.0 / (h * h);
            m[(i + 1, i)] = 1.0 / (h * h);
        }
    }
    let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    eigs.truncate(count);
    eigs
}

/// Same Richardson combination as the production path, but through the dense
/// oracle at twice the production resolution.
fn oracle_eigenvalues(profile: &ReactionProfile, mesh_size: usize, count: usize) -> Vec<f64> {
    let coarse = dense_fd_eigenvalues(profile, mesh_size, count);
    let fine = dense_fd_eigenvalues(profile, 2 * mesh_size - 1, count);
    coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect()
}

#[test]
fn sampled_linear_profile_matches_dense_oracle() {
    let l = 1.0;
    let grid = UniformMesh::new(l, 801).unwrap();
    let profile = ReactionProfile::sampled(grid.sample(|x| x), l).unwrap();

    let basis = compute_basis(&profile, 4, 501).unwrap();
    let oracle = oracle_eigenvalues(&profile, 1001, 4);
    for (k, (got, want)) in basis.lambdas().iter().zip(&oracle).enumerate() {
        assert!(
            (got - want).abs() < 1e-6,
            "mode {}: {} vs oracle {}",
            k + 1,
            got,
            want
        );
    }
}

#[test]
fn numeric_constant_profile_agrees_with_analytic_path() {
    let l = 2.0 * std::f64::consts::PI;
    let grid = UniformMesh::new(l, 2001).unwrap();
    let sampled = ReactionProfile::sampled(grid.sample(|_| 1.25), l).unwrap();
    let analytic = ReactionProfile::constant(1.25, l).unwrap();

    let numeric_basis = compute_basis(&sampled, 6, 2001).unwrap();
    let analytic_basis = compute_basis(&analytic, 6, 2001).unwrap();
    for j in 0..6 {
        assert!(
            (numeric_basis.lambdas()[j] - analytic_basis.lambdas()[j]).abs() < 1e-6,
            "mode {}: numeric {} vs analytic {}",
            j + 1,
            numeric_basis.lambdas()[j],
            analytic_basis.lambdas()[j]
        );
        assert!((numeric_basis.ep0()[j] - analytic_basis.ep0()[j]).abs() < 1e-6);
        assert!((numeric_basis.epl()[j] - analytic_basis.epl()[j]).abs() < 1e-6);
    }
}

#[test]
fn smooth_functions_reconstruct_from_projections() {
    // sum of low eigenfunctions with known coefficients
    let d = common::reference_design();
    let basis = &d.basis;
    let mesh = basis.mesh();
    let mut f = vec![0.0; mesh.len()];
    let weights = [0.8, -0.3, 0.0, 1.7, 0.05];
    for (j, &wj) in weights.iter().enumerate() {
        for (fi, &e) in f.iter_mut().zip(basis.eigvec(j)) {
            *fi += wj * e;
        }
    }
    let coeffs = project(basis, &f).unwrap();
    for (j, &c) in coeffs.iter().enumerate() {
        let want = weights.get(j).copied().unwrap_or(0.0);
        assert!((c - want).abs() < 1e-9, "mode {}: {c} vs {want}", j + 1);
    }
}

#[test]
fn truncated_reconstructions_converge_in_l2() {
    // smooth Dirichlet-compatible data: f(x) = x (L - x) e^{-x}
    let d = common::reference_design();
    let basis = &d.basis;
    let mesh = basis.mesh();
    let l = mesh.length();
    let f = mesh.sample(|x| x * (l - x) * (-x).exp());
    let coeffs = project(basis, &f).unwrap();

    let mut previous = f64::INFINITY;
    for j_cut in [2usize, 4, 8, 16] {
        let mut recon = vec![0.0; mesh.len()];
        for j in 0..j_cut {
            for (ri, &e) in recon.iter_mut().zip(basis.eigvec(j)) {
                *ri += coeffs[j] * e;
            }
        }
        let err: Vec<f64> = f.iter().zip(&recon).map(|(a, b)| a - b).collect();
        let l2 = mesh.l2_norm(&err);
        assert!(l2 < previous, "residual grew at J = {j_cut}: {l2} vs {previous}");
        previous = l2;
    }
    // 16 modes capture all but a percent-level L2 remainder (the data only
    // meets the first-order Dirichlet compatibility, so coefficients decay
    // algebraically)
    assert!(previous < 0.02 * mesh.l2_norm(&f), "final residual {previous}");

    // Parseval on the captured part: sum of squared coefficients never
    // exceeds |f|^2 and approaches it
    let f_norm2 = mesh.inner(&f, &f);
    let captured: f64 = coeffs.iter().map(|c| c * c).sum();
    assert!(captured <= f_norm2 * (1.0 + 1e-12));
    assert!(captured > 0.999 * f_norm2, "captured {captured} of {f_norm2}");
}
