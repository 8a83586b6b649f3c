use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nsch_core::config::{parse_config, Preset, SimConfig};
use nsch_core::diagnostics::CSV_HEADER;
use nsch_core::experiments::{eps_sweep, long_time, mms_convergence, solve_steady};
use nsch_core::grid::{write_snapshot, Field};
use nsch_core::simulation::{run, RunEvent};
use nsch_core::stepper::mollify_initial_rho;
use nsch_core::Error;

#[derive(Parser)]
#[command(name = "nsch", version, about = "Viscous Cahn-Hilliard simulator with a logarithmic potential")]
struct Cli {
    /// TOML configuration; built-in preset when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Built-in configuration used when no file is given.
    #[arg(long, global = true, value_enum, default_value_t = PresetName::Default)]
    preset: PresetName,

    /// Overrides the output directory of the configuration.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Default,
    Tanh,
    Homogeneous,
    ZeroMu,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate to t_final, writing diagnostics and snapshots.
    Run,
    /// Compare runs at decreasing eps with the eps = 0 run.
    SweepEps {
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025, 0.0125])]
        eps: Vec<f64>,
    },
    /// Run until the dynamics stall and compare with the steady state.
    LongTime {
        #[arg(long, default_value_t = 1000.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-6)]
        stall_tol: f64,
    },
    /// Manufactured-solution convergence study.
    Mms {
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
    /// Solve -Δrho + f'(rho) = mu_s from a constant guess.
    Steady {
        #[arg(long)]
        mu_s: f64,
        #[arg(long, default_value_t = 0.5)]
        guess: f64,
    },
    /// Regularize the configured rho0 with the eps-mollifier.
    Mollify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let dir = config.output.directory.clone();
    match execute(&cli.command, &config, &dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let _ = append_line(&dir.join("report.txt"), &format!("FAILED: {e:#}"));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Invalid(_)) => 2,
        Some(Error::Step(_) | Error::Grid(_) | Error::Steady(_)) => 3,
        None => 1,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("CHS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().with_context(|| format!("CHS_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        bail!("CHS_THREADS must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let mut config = match &cli.config {
        Some(path) => parse_config(path)?,
        None => match cli.preset {
            PresetName::Default => SimConfig::default(),
            PresetName::Tanh => SimConfig::tanh_preset(),
            PresetName::Homogeneous => SimConfig::homogeneous_preset(),
            PresetName::ZeroMu => {
                let mut c = SimConfig::tanh_preset();
                c.initial.mu0 = Preset::Homogeneous(0.0);
                c
            }
        },
    };
    if let Some(out) = &cli.out {
        config.output.directory = out.clone();
    }
    Ok(config)
}

fn append_line(path: &Path, line: &str) -> std::io::Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn snapshot(path: &Path, field: &Field, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_snapshot(&mut w, field, time)?;
    w.flush()?;
    Ok(())
}

fn execute(command: &Command, config: &SimConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_text(&dir.join("resolved_config.toml"), &config.to_toml())?;
    write_text(&dir.join("report.txt"), "")?;
    match command {
        Command::Run => cmd_run(config, dir),
        Command::SweepEps { eps } => {
            let report = eps_sweep(config, eps)?;
            write_text(&dir.join("sweep.csv"), &report.to_csv())?;
            let decreasing = report.mu_errors.windows(2).all(|w| w[1] < w[0]);
            write_text(
                &dir.join("report.txt"),
                &format!("command = sweep-eps\nmembers = {}\nmu_errors_strictly_decreasing = {decreasing}\n", eps.len()),
            )
        }
        Command::LongTime { t_max, stall_tol } => {
            let r = long_time(config, *t_max, *stall_tol)?;
            let mut csv = format!("{CSV_HEADER}\n");
            for rec in &r.records {
                csv.push_str(&rec.csv_row());
                csv.push('\n');
            }
            write_text(&dir.join("diagnostics.csv"), &csv)?;
            write_text(&dir.join("probes.csv"), &r.probes_csv())?;
            snapshot(&dir.join("final_rho.txt"), &r.final_state.rho, r.final_time)?;
            snapshot(&dir.join("final_mu.txt"), &r.final_state.mu, r.final_time)?;
            snapshot(&dir.join("steady_rho.txt"), &r.rho_s, r.final_time)?;
            if let Some(p) = &r.penultimate_state {
                snapshot(&dir.join("penultimate_rho.txt"), &p.rho, p.time)?;
                snapshot(&dir.join("penultimate_mu.txt"), &p.mu, p.time)?;
            }
            write_text(&dir.join("report.txt"), &format!("command = long-time\n{}", r.summary()))
        }
        Command::Mms { levels } => {
            let r = mms_convergence(&config.potential(), *levels)?;
            write_text(&dir.join("mms.csv"), &r.to_csv())?;
            write_text(
                &dir.join("report.txt"),
                &format!(
                    "command = mms\nspace_order_mu = {:.6}\nspace_order_rho = {:.6}\ntime_order_mu = {:.6}\ntime_order_rho = {:.6}\n",
                    r.space.mu_order, r.space.rho_order, r.time.mu_order, r.time.rho_order
                ),
            )
        }
        Command::Steady { mu_s, guess } => {
            let grid = config.build_grid().map_err(Error::from)?;
            if !(*guess > 0.0 && *guess < 1.0) {
                return Err(Error::Invalid(format!("--guess must lie in (0, 1), got {guess}")).into());
            }
            let rho = solve_steady(*mu_s, &config.potential(), &grid, &Field::constant(grid, *guess))?;
            snapshot(&dir.join("steady_rho.txt"), &rho, 0.0)?;
            write_text(
                &dir.join("report.txt"),
                &format!("command = steady\nmu_s = {mu_s:?}\nmin_rho = {:.16e}\nmax_rho = {:.16e}\n", rho.min(), rho.max()),
            )
        }
        Command::Mollify => {
            let state = config.initial_state().map_err(Error::from)?;
            let rho = mollify_initial_rho(&state.rho, config.physics.eps, &config.potential()).map_err(Error::from)?;
            snapshot(&dir.join("rho0_mollified.txt"), &rho, 0.0)?;
            write_text(
                &dir.join("report.txt"),
                &format!("command = mollify\neps = {:?}\nmax_change = {:.16e}\n", config.physics.eps, rho.sub(&state.rho).sup_norm()),
            )
        }
    }
}

fn cmd_run(config: &SimConfig, dir: &Path) -> Result<()> {
    let csv_path = dir.join("diagnostics.csv");
    let mut csv = if config.wants("csv") {
        let mut w = BufWriter::new(File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
        writeln!(w, "{CSV_HEADER}")?;
        Some(w)
    } else {
        None
    };
    let snap_dir = dir.join("snapshots");
    if config.wants("snapshots") {
        fs::create_dir_all(&snap_dir)?;
    }
    let mut io_error: Option<anyhow::Error> = None;
    let result = run(config, |event| {
        if io_error.is_some() {
            return;
        }
        let r: Result<()> = match event {
            RunEvent::Record(rec) => match csv.as_mut() {
                Some(w) => writeln!(w, "{}", rec.csv_row()).map_err(Into::into),
                None => Ok(()),
            },
            RunEvent::Snapshot { step, state } if config.wants("snapshots") => {
                snapshot(&snap_dir.join(format!("rho_{step:08}.txt")), &state.rho, state.time)
                    .and_then(|_| snapshot(&snap_dir.join(format!("mu_{step:08}.txt")), &state.mu, state.time))
            }
            RunEvent::Snapshot { .. } => Ok(()),
        };
        if let Err(e) = r {
            io_error = Some(e);
        }
    });
    match result {
        Ok(summary) => {
            if let Some(e) = io_error {
                return Err(e);
            }
            if let Some(mut w) = csv {
                w.flush()?;
            }
            let last = summary.records.last().expect("initial record");
            write_text(
                &dir.join("report.txt"),
                &format!(
                    "command = run\nsteps = {}\nfinal_time = {:.16e}\nbarrier = {:.16e}\nmin_mu = {:.16e}\nmin_rho = {:.16e}\nE = {:.16e}\nF = {:.16e}\n",
                    summary.steps,
                    last.time,
                    summary.barrier,
                    summary.records.iter().map(|r| r.min_mu).fold(f64::INFINITY, f64::min),
                    summary.records.iter().map(|r| r.min_rho).fold(f64::INFINITY, f64::min),
                    last.lyapunov_e,
                    last.free_energy_f
                ),
            )
        }
        Err(e) => {
            if let Some(mut w) = csv {
                writeln!(w, "FAILED: {e}")?;
                w.flush()?;
            }
            Err(e.into())
        }
    }
}
