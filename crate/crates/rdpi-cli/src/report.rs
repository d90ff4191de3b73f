//! Text reports for the eig and certify commands.

use std::fmt::Write;

use crate::pipeline::{Design, Plant};

pub fn eigen_report(plant: &Plant) -> String {
    let basis = &plant.basis;
    let coeffs = &plant.coeffs;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "spectral basis: {} modes on [0, {:.6}], mesh {} points",
        basis.mode_count(),
        basis.mesh().length(),
        basis.mesh().len()
    );
    let _ = writeln!(
        out,
        "{:>4} {:>18} {:>14} {:>14} {:>14} {:>14} {:>12}",
        "j", "lambda_j", "e_j'(0)", "e_j'(L)", "a_j", "b_j", "identity"
    );
    let mut worst = 0.0f64;
    for j in 0..basis.mode_count() {
        let residual = coeffs.a()[j] + basis.lambdas()[j] * coeffs.b()[j] + basis.epl()[j];
        worst = worst.max(residual.abs());
        let _ = writeln!(
            out,
            "{:>4} {:>18.12} {:>14.8} {:>14.8} {:>14.8} {:>14.8} {:>12.3e}",
            j + 1,
            basis.lambdas()[j],
            basis.ep0()[j],
            basis.epl()[j],
            coeffs.a()[j],
            coeffs.b()[j],
            residual
        );
    }
    let _ = writeln!(out, "max |a_j + lambda_j b_j + e_j'(L)| = {worst:.3e}");
    out
}

pub fn certificate_report(design: &Design) -> String {
    let cert = &design.cert;
    let model = &design.model;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "captured modes: n = {} (state dimension {})",
        model.n(),
        model.dim()
    );
    let _ = writeln!(
        out,
        "alpha = {:.12}, beta = {:.12}, M_d = {:.12}",
        model.alpha(),
        model.beta(),
        model.md()
    );
    let _ = writeln!(
        out,
        "tail truncated at mode {} (bounds: alpha {:.2e}, beta {:.2e}, M_d {:.2e}, tol {:.1e})",
        design.tail.tail_j,
        design.tail.alpha_tail_bound,
        design.tail.beta_tail_bound,
        design.tail.md_tail_bound,
        design.tail.tolerance
    );
    let _ = writeln!(out, "input delay D = {}", cert.delay);
    let _ = writeln!(out, "requested poles: {:?}", cert.poles);

    let mut achieved: Vec<(f64, f64)> = cert
        .ak
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect();
    achieved.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let _ = write!(out, "achieved poles: ");
    for (re, im) in &achieved {
        if im.abs() > 1e-9 {
            let _ = write!(out, " {re:.9}{im:+.3e}i");
        } else {
            let _ = write!(out, " {re:.9}");
        }
    }
    let _ = writeln!(out);

    let _ = writeln!(
        out,
        "gain K = {:?}",
        cert.k
            .iter()
            .map(|x| (x * 1e6).round() / 1e6)
            .collect::<Vec<_>>()
    );
    let _ = writeln!(
        out,
        "Lyapunov matrix: lambda(P) in [{:.6e}, {:.6e}]",
        cert.lambda_min_p, cert.lambda_max_p
    );
    let _ = writeln!(
        out,
        "constants: gamma_1 = {:.6e}, gamma_5 = {:.6e}, gamma_6 = {:.6e}",
        cert.gamma1, cert.gamma5, cert.gamma6
    );
    let _ = writeln!(
        out,
        "weight M = {:.6e}, certified decay rate kappa = {:.6e}",
        cert.m_weight, cert.kappa
    );
    out
}
