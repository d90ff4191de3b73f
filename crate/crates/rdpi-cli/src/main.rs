//! Command-line entry point: spectral reports, certificate synthesis,
//! closed-loop simulation runs and the invariant suite.

// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

mod check;
mod config;
mod csvout;
mod pipeline;
mod report;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rdpi_core::sim::{lyapunov_decay_report, simulate, tracking_report, SimOutput};
use rdpi_core::CoreError;

use config::{ConfigError, ConfigFile};
use pipeline::{build_design, build_plant, build_scenario};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_SUITE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rdpi",
    about = "PI predictor-feedback boundary control of a 1-D reaction-diffusion equation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print eigenvalues, boundary traces and source coefficients of the plant
    Eig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthesize the feedback gain and print the closed-loop certificate
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run closed-loop scenarios and write trace CSVs (and optional SVG plots)
    Simulate {
        /// One or more scenario configs; independent runs execute concurrently
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        /// Output directory (overrides `[output].dir`)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force SVG plots regardless of `[output].formats`
        #[arg(long)]
        svg: bool,
    },
    /// Run the invariant suite; nonzero exit on any failure
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the randomized suites
        #[arg(long, default_value_t = 0xA11CE)]
        seed: u64,
        /// Test-only fault injection (e.g. flip-b-sign); the suite must fail
        #[arg(long)]
        fault: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Eig { config } => cmd_eig(&config),
        Command::Certify { config } => cmd_certify(&config),
        Command::Simulate { config, out, svg } => cmd_simulate(&config, out.as_deref(), svg),
        Command::Check {
            config,
            seed,
            fault,
        } => cmd_check(config.as_deref(), seed, fault.as_deref()),
    };
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<ConfigFile, u8> {
    ConfigFile::load(path).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            ConfigError::Io { .. } | ConfigError::Parse { .. } | ConfigError::Invalid(_) => {
                EXIT_VALIDATION
            }
        }
    })
}

fn core_exit_code(e: &CoreError) -> u8 {
    match e {
        CoreError::InvalidProfile(_)
        | CoreError::InvalidModeRequest(_)
        | CoreError::MeshMismatch { .. }
        | CoreError::PoleCount { .. }
        | CoreError::UnstablePole(_)
        | CoreError::DelayStepMismatch { .. }
        | CoreError::ScenarioInconsistent(_) => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

fn cmd_eig(path: &Path) -> u8 {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match build_plant(&config) {
        Ok(plant) => {
            print!("{}", report::eigen_report(&plant));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            core_exit_code(&e)
        }
    }
}

fn cmd_certify(path: &Path) -> u8 {
    let config = match load_config(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if config.control.is_none() {
        eprintln!("error: {path:?} has no [control] section");
        return EXIT_VALIDATION;
    }
    match build_design(&config) {
        Ok(design) => {
            print!("{}", report::certificate_report(&design));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            core_exit_code(&e)
        }
    }
}

fn cmd_simulate(paths: &[PathBuf], out_override: Option<&Path>, force_svg: bool) -> u8 {
    // load and validate every config before any computation starts
    let mut jobs = Vec::new();
    for path in paths {
        match load_config(path) {
            Ok(config) => jobs.push((path.clone(), config)),
            Err(code) => return code,
        }
    }

    let codes: Vec<u8> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(path, config)| {
                scope.spawn(move || run_one_scenario(path, config, out_override, force_svg))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    codes.into_iter().max().unwrap_or(0)
}

fn run_one_scenario(
    path: &Path,
    config: &ConfigFile,
    out_override: Option<&Path>,
    force_svg: bool,
) -> u8 {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string());
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.output.dir.clone());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("[{stem}] error: cannot create output directory {out_dir:?}: {e}");
        return EXIT_VALIDATION;
    }

    let design = match build_design(config) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("[{stem}] error: {e}");
            return core_exit_code(&e);
        }
    };
    let scenario = match build_scenario(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("[{stem}] error: {e}");
            return core_exit_code(&e);
        }
    };

    let csv_path = out_dir.join(format!("{stem}.csv"));
    let output = match simulate(&scenario, &design.cert, &design.model, &design.plant.basis) {
        Ok(o) => o,
        Err(CoreError::Instability { t, norm, partial }) => {
            // flush what exists so the blow-up can be inspected
            if let Err(io) = csvout::write_trace(&csv_path, &partial.trace) {
                eprintln!("[{stem}] error: cannot flush partial trace: {io}");
            } else {
                eprintln!("[{stem}] partial trace flushed to {}", csv_path.display());
            }
            eprintln!("[{stem}] error: state blow-up at t = {t:.3} (|w|_inf = {norm:.3e})");
            return EXIT_NUMERICAL;
        }
        Err(e) => {
            eprintln!("[{stem}] error: {e}");
            return core_exit_code(&e);
        }
    };

    let expected_rows = (scenario.horizon / scenario.dt).round() as usize + 1;
    if output.trace.len() != expected_rows {
        eprintln!(
            "[{stem}] error: trace has {} rows, expected T/dt + 1 = {expected_rows}",
            output.trace.len()
        );
        return EXIT_NUMERICAL;
    }

    if let Err(e) = csvout::write_trace(&csv_path, &output.trace) {
        eprintln!("[{stem}] error: cannot write {}: {e}", csv_path.display());
        return EXIT_VALIDATION;
    }
    println!("[{stem}] trace: {}", csv_path.display());

    let cert_path = out_dir.join(format!("{stem}.certificate.txt"));
    if let Err(e) = std::fs::write(&cert_path, report::certificate_report(&design)) {
        eprintln!("[{stem}] error: cannot write {}: {e}", cert_path.display());
        return EXIT_VALIDATION;
    }
    println!("[{stem}] certificate: {}", cert_path.display());

    let summary = run_summary(&design, &output);
    let summary_path = out_dir.join(format!("{stem}.summary.txt"));
    if let Err(e) = std::fs::write(&summary_path, &summary) {
        eprintln!(
            "[{stem}] error: cannot write {}: {e}",
            summary_path.display()
        );
        return EXIT_VALIDATION;
    }
    print!("{summary}");

    if force_svg || config.wants_svg() {
        write_plots(&out_dir, &stem, &output);
    }
    0
}

fn run_summary(design: &pipeline::Design, output: &SimOutput) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "rows: {}, max zeta drift: {:.3e}",
        output.trace.len(),
        output.max_zeta_drift
    );
    for phase in &output.phases {
        let _ = writeln!(
            s,
            "phase [{:.2}, {:.2}]: r_e = {}, d0_e = {}, u_e = {:.6}, y_e'(0) = {:.6}",
            phase.t_start,
            phase.t_end,
            phase.r_e,
            phase.d0_e,
            phase.equilibrium.ue,
            phase.equilibrium.ye_prime0
        );
    }
    for c in lyapunov_decay_report(output, &design.cert, 0.05, 5.0) {
        if c.skipped {
            let _ = writeln!(
                s,
                "decay [{:.2}, {:.2}]: skipped (phase shorter than the delay)",
                c.t_start, c.t_end
            );
        } else {
            let _ = writeln!(
                s,
                "decay [{:.2}, {:.2}]: {} (worst ratio {:.4}, V(t0) = {:.4e})",
                c.t_start,
                c.t_end,
                if c.holds { "holds" } else { "VIOLATED" },
                c.worst_ratio,
                c.v_t0
            );
        }
    }
    for t in tracking_report(output) {
        let _ = writeln!(
            s,
            "tracking [{:.2}, {:.2}]: settled max |err| = {:.4e}{}",
            t.t_start,
            t.t_end,
            t.settled_max_err,
            match t.fitted_rate {
                Some(rate) => format!(", fitted decay rate {rate:.4}"),
                None => String::new(),
            }
        );
    }
    s
}

fn write_plots(out_dir: &Path, stem: &str, output: &SimOutput) {
    let t: Vec<f64> = output.trace.rows.iter().map(|r| r.t).collect();
    let output_series = [
        svg::Series {
            label: "y_x(t,0)",
            color: "#1f77b4",
            points: t
                .iter()
                .zip(output.trace.rows.iter())
                .map(|(&x, r)| (x, r.yx0))
                .collect(),
        },
        svg::Series {
            label: "r(t)",
            color: "#d62728",
            points: t
                .iter()
                .zip(output.trace.rows.iter())
                .map(|(&x, r)| (x, r.r))
                .collect(),
        },
    ];
    let p1 = out_dir.join(format!("{stem}.output.svg"));
    if let Err(e) = svg::write_chart(
        &p1,
        "boundary output vs reference",
        "t [s]",
        "y_x(t,0)",
        &output_series,
    ) {
        eprintln!("[{stem}] warning: plot failed: {e}");
    } else {
        println!("[{stem}] plot: {}", p1.display());
    }

    let input_series = [svg::Series {
        label: "u(t-D)",
        color: "#2ca02c",
        points: t
            .iter()
            .zip(output.trace.rows.iter())
            .map(|(&x, r)| (x, r.u_delayed))
            .collect(),
    }];
    let p2 = out_dir.join(format!("{stem}.input.svg"));
    if let Err(e) = svg::write_chart(
        &p2,
        "delayed control input",
        "t [s]",
        "u(t-D)",
        &input_series,
    ) {
        eprintln!("[{stem}] warning: plot failed: {e}");
    } else {
        println!("[{stem}] plot: {}", p2.display());
    }
}

fn cmd_check(config_path: Option<&Path>, seed: u64, fault: Option<&str>) -> u8 {
    let fault = match fault {
        None => None,
        Some(name) => match check::FaultMode::parse(name) {
            Some(f) => Some(f),
            None => {
                eprintln!("error: unknown fault mode {name:?} (known: flip-b-sign)");
                return EXIT_VALIDATION;
            }
        },
    };
    let config = match config_path {
        Some(p) => match load_config(p) {
            Ok(c) => Some(c),
            Err(code) => return code,
        },
        None => None,
    };
    let report = check::run(config.as_ref(), seed, fault);
    println!(
        "{} passed, {} failed (seed {seed})",
        report.passed, report.failed
    );
    if report.failed > 0 {
        EXIT_SUITE
    } else {
        0
    }
}
