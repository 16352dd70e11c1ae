//! Command-line driver: simulation runs from config files, the scripted
//! verification experiments, the standalone singular elliptic solver and the
//! manufactured convergence study.

use chns::config::{self, RunConfig, SnapshotFormat};
use chns::elliptic::{solve_singular_neumann, EllipticProblem};
use chns::experiments::{self, ExperimentReport, EXPERIMENT_NAMES};
use chns::grid::Grid;
use chns::io::{self, SnapshotMode};
use chns::potential::Potential;
use chns::stepper::{run, Hooks, SimState, StepperConfig};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "chns",
    version,
    about = "Structure-preserving simulator for coupled two-phase flow with nutrient transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Run {
        /// Path to the key = value config file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides [output] dir and CHNS_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the RNG seed of the initial condition.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a named verification experiment, or `all`.
    Verify {
        /// Experiment name (see --list) or `all`.
        name: String,
        /// Output directory for reports and series.
        #[arg(long)]
        out: Option<PathBuf>,
        /// RNG seed shared by the experiments.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// List available experiment names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Solve -B lap(u) + A psi0'(u) = f for a data snapshot.
    EllipticSolve {
        /// Snapshot file holding the right-hand side f.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the solution snapshot and report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 2.0)]
        theta0: f64,
        /// Area-weighted l2 residual tolerance.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_newton: usize,
    },
    /// Manufactured-solution convergence study of the coupled scheme.
    Convergence {
        /// Optional config supplying the physical coefficients.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of grid-doubling levels starting from 32 cells.
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out, seed } => cmd_run(&config, out, seed),
        Command::Verify {
            name,
            out,
            seed,
            list,
        } => cmd_verify(&name, out, seed, list),
        Command::EllipticSolve {
            input,
            out,
            a,
            b,
            theta,
            theta0,
            tol,
            max_newton,
        } => cmd_elliptic(&input, out, a, b, theta, theta0, tol, max_newton),
        Command::Convergence {
            config,
            levels,
            out,
        } => cmd_convergence(config.as_deref(), levels, out),
    }
}

fn resolve_out(cli_out: Option<PathBuf>, cfg_dir: Option<&Path>) -> PathBuf {
    cli_out
        .or_else(|| cfg_dir.map(Path::to_path_buf))
        .unwrap_or_else(config::default_output_dir)
}

fn cmd_run(config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> ExitCode {
    let mut cfg: RunConfig = match config::parse_file(config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = seed {
        cfg.initial.seed = seed;
    }
    let out_dir = resolve_out(out, Some(&cfg.output.dir));
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return ExitCode::from(EXIT_CONFIG);
    }

    let (initial, warnings) = match cfg.build_initial_state() {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if let Err(e) = std::fs::write(out_dir.join("effective.cfg"), cfg.emit()) {
        eprintln!("cannot write effective config: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let snapshot_mode = match cfg.output.snapshots {
        SnapshotFormat::None => None,
        SnapshotFormat::Ascii => Some(SnapshotMode::Ascii),
        SnapshotFormat::Binary => Some(SnapshotMode::Binary),
    };
    let mut io_error: Option<std::io::Error> = None;
    let result = {
        let mut hooks = Hooks::default();
        let out_ref = out_dir.clone();
        let heatmaps = cfg.output.heatmaps;
        let io_err_ref = &mut io_error;
        hooks.snapshot_every = cfg.output.cadence;
        hooks.on_snapshot = Some(Box::new(move |state: &SimState| {
            if let Err(e) = emit_snapshot(state, &out_ref, snapshot_mode, heatmaps) {
                io_err_ref.get_or_insert(e);
            }
        }));
        run(
            &initial,
            &cfg.params,
            &cfg.stepper,
            cfg.t_end(),
            None,
            hooks,
        )
    };
    let (final_state, records) = match result {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("solver abort: {e}");
            dump_abort_state(&e, &out_dir);
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    if let Some(e) = io_error {
        eprintln!("output error: {e}");
        return ExitCode::from(EXIT_SOLVER);
    }
    if let Err(e) = io::write_records_csv(&records, &out_dir.join("diagnostics.csv")) {
        eprintln!("output error: {e}");
        return ExitCode::from(EXIT_SOLVER);
    }
    if let Err(e) = emit_snapshot(&final_state, &out_dir, snapshot_mode.or(Some(SnapshotMode::Binary)), cfg.output.heatmaps) {
        eprintln!("output error: {e}");
        return ExitCode::from(EXIT_SOLVER);
    }
    let last = records.last().expect("at least the initial record");
    println!(
        "completed {} steps to t = {}: energy {}, margin {}, mean(phi) {}",
        final_state.step_index, final_state.t, last.energy, last.margin, last.phi_mean
    );
    ExitCode::SUCCESS
}

fn emit_snapshot(
    state: &SimState,
    out_dir: &Path,
    mode: Option<SnapshotMode>,
    heatmaps: bool,
) -> std::io::Result<()> {
    let tag = format!("{:08}", state.step_index);
    if let Some(mode) = mode {
        for (field, name) in [(&state.phi, "phi"), (&state.sigma, "sigma"), (&state.p, "p")] {
            io::write_snapshot(
                field,
                name,
                state.t,
                mode,
                &out_dir.join(format!("{name}_{tag}.snap")),
            )
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
    }
    if heatmaps {
        io::write_heatmap_ppm(
            &state.phi,
            Some((-1.0, 1.0)),
            &out_dir.join(format!("phi_{tag}.ppm")),
        )?;
        io::write_heatmap_ppm(&state.sigma, None, &out_dir.join(format!("sigma_{tag}.ppm")))?;
    }
    Ok(())
}

fn dump_abort_state(err: &chns::stepper::StepError, out_dir: &Path) {
    if let chns::stepper::StepError::DtUnderflow { last_state, .. } = err {
        let _ = io::write_snapshot(
            &last_state.phi,
            "phi",
            last_state.t,
            SnapshotMode::Binary,
            &out_dir.join("abort_phi.snap"),
        );
        let _ = io::write_snapshot(
            &last_state.sigma,
            "sigma",
            last_state.t,
            SnapshotMode::Binary,
            &out_dir.join("abort_sigma.snap"),
        );
        eprintln!("last accepted state dumped to {}", out_dir.display());
    }
}

fn print_report(report: &ExperimentReport) {
    print!("{}", report.render());
}

fn cmd_verify(name: &str, out: Option<PathBuf>, seed: u64, list: bool) -> ExitCode {
    if list {
        for n in EXPERIMENT_NAMES {
            println!("{n}");
        }
        return ExitCode::SUCCESS;
    }
    let out_dir = resolve_out(out, None);
    let reports = if name == "all" {
        match experiments::run_all(&out_dir, seed) {
            Ok(reports) => reports,
            Err(e) => {
                eprintln!("solver abort: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
        }
    } else {
        match experiments::run_experiment(name, &out_dir, seed) {
            Ok(report) => vec![report],
            Err(experiments::ExperimentError::Unknown(n)) => {
                eprintln!("unknown experiment {n:?}; use --list");
                return ExitCode::from(EXIT_CONFIG);
            }
            Err(e) => {
                eprintln!("solver abort: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
        }
    };
    let mut all_pass = true;
    for report in &reports {
        print_report(report);
        println!();
        all_pass &= report.passed();
    }
    println!(
        "verification {}: {} experiment(s), artifacts in {}",
        if all_pass { "PASSED" } else { "FAILED" },
        reports.len(),
        out_dir.display()
    );
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_elliptic(
    input: &Path,
    out: Option<PathBuf>,
    a: f64,
    b: f64,
    theta: f64,
    theta0: f64,
    tol: f64,
    max_newton: usize,
) -> ExitCode {
    let snapshot = match io::read_snapshot(input) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot read data snapshot: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if !(a > 0.0 && b > 0.0 && theta > 0.0) {
        eprintln!("coefficients A, B and theta must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    let out_dir = resolve_out(out, None);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let mut prob = EllipticProblem::new(a, b, Potential::logarithmic(theta, theta0), snapshot.field);
    prob.tol_residual = tol;
    prob.max_newton = max_newton;
    let sol = match solve_singular_neumann(&prob, None) {
        Ok(sol) => sol,
        Err(e) => {
            eprintln!("elliptic solve failed: {e}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };
    let report = format!(
        "{{\"newton_iters\": {}, \"linear_iters\": {}, \"final_residual\": {}, \"margin\": {}}}\n",
        sol.newton_iters, sol.linear_iters, sol.final_residual, sol.margin
    );
    print!("{report}");
    if io::write_snapshot(
        &sol.u,
        "u",
        snapshot.time,
        SnapshotMode::Binary,
        &out_dir.join("u.snap"),
    )
    .is_err()
        || std::fs::write(out_dir.join("elliptic_report.json"), &report).is_err()
    {
        eprintln!("cannot write results to {}", out_dir.display());
        return ExitCode::from(EXIT_SOLVER);
    }
    ExitCode::SUCCESS
}

fn cmd_convergence(config: Option<&Path>, levels: usize, out: Option<PathBuf>) -> ExitCode {
    use chns::experiments::mms::Manufactured;
    if levels < 2 {
        eprintln!("need at least 2 levels for a convergence estimate");
        return ExitCode::from(EXIT_CONFIG);
    }
    let (params, lx, ly) = match config {
        Some(path) => match config::parse_file(path) {
            Ok(cfg) => (cfg.params, cfg.grid.lx, cfg.grid.ly),
            Err(e) => {
                eprintln!("config error: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        },
        None => {
            let mut p = chns::stepper::PhysParams {
                b: 0.04,
                chi: 0.3,
                lambda: 0.3,
                alpha: 0.2,
                eta2: 2.0,
                ..Default::default()
            };
            p.potential = Potential::logarithmic(0.8, 1.6);
            (p, 1.0, 1.0)
        }
    };
    let out_dir = resolve_out(out, None);
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("cannot create output directory: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let m = Manufactured::new(params, lx, ly);
    let finest = 32usize << (levels - 1);
    let dt = 0.025 * (lx / finest as f64).powi(2) / m.params.b;
    let t_end = 120.0 * dt;
    println!("manufactured convergence study: dt = {dt}, T = {t_end}");
    println!("{:>6} {:>12} {:>12} {:>12} {:>8}", "n", "err_phi", "err_sigma", "err_v", "order");
    let mut csv = String::from("n,err_phi,err_sigma,err_v\n");
    let mut prev: Option<f64> = None;
    for level in 0..levels {
        let n = 32usize << level;
        let grid = Grid::new(n, n, lx, ly);
        let state = m.initial_state(grid, 0.0);
        let cfg = StepperConfig::default().with_dt(dt);
        let result = run(&state, &m.params, &cfg, t_end, Some(&m), Hooks::default());
        let final_state = match result {
            Ok((s, _)) => s,
            Err(e) => {
                eprintln!("solver abort at level {n}: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
        };
        let (e_phi, e_sigma, e_v) = m.errors(&final_state);
        let order = prev
            .map(|p: f64| format!("{:.2}", (p / e_phi).log2()))
            .unwrap_or_else(|| "-".into());
        println!("{n:>6} {e_phi:>12.4e} {e_sigma:>12.4e} {e_v:>12.4e} {order:>8}");
        csv.push_str(&format!("{n},{e_phi},{e_sigma},{e_v}\n"));
        prev = Some(e_phi);
    }
    if let Err(e) = std::fs::write(out_dir.join("convergence.csv"), csv) {
        eprintln!("cannot write results: {e}");
        return ExitCode::from(EXIT_SOLVER);
    }
    ExitCode::SUCCESS
}
