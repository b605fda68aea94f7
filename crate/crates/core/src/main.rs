use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use delta_sim::cavity::{fixed_point_solve, reflection_coefficient};
use delta_sim::config::{load_config, RunConfig, REFERENCE_PRESET_NAME};
use delta_sim::ensemble::signal_absorption_rate;
use delta_sim::output::{write_map_to, write_result_to};
use delta_sim::scenarios::{
    impedance_match_prediction, microwave_power_sweep, optical_power_sweep, population_map,
    ridge_width_delta_o, sweep_2d, Output, Provenance, SweepResult,
};
use delta_sim::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_NONCONVERGENCE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "delta-sim",
    version,
    about = "Steady-state Δ-system microwave-to-optical conversion simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, or the name of a bundled preset.
    #[arg(long, default_value = REFERENCE_PRESET_NAME)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to DELTA_SIM_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// `key=value` with a dotted key, applied after loading. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Single operating point.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the population-difference map to this CSV.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Efficiency over pump and microwave detuning.
    Sweep2d {
        #[command(flatten)]
        common: Common,
    },
    /// Efficiency and signal absorption versus microwave input power.
    MwSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Efficiency versus optical pump power.
    OptSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Impedance-matching and low-temperature estimates.
    Predict {
        #[command(flatten)]
        common: Common,
    },
    /// Load and validate a config without solving.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve { common, .. }
            | Command::Sweep2d { common }
            | Command::MwSweep { common }
            | Command::OptSweep { common }
            | Command::Predict { common }
            | Command::Validate { common } => common,
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::Singular { .. } => {
            EXIT_NONCONVERGENCE
        }
        _ => EXIT_CONFIG,
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("DELTA_SIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("DELTA_SIM_THREADS must be a thread count (got `{v}`)")),
        Err(_) => Ok(None),
    }
}

fn load(common: &Common) -> delta_sim::Result<RunConfig> {
    load_config(&common.config)?.with_overrides(&common.overrides)
}

fn emit(
    path: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> delta_sim::Result<()>,
) -> delta_sim::Result<()> {
    match path {
        Some(p) => {
            let mut file = std::io::BufWriter::new(std::fs::File::create(p)?);
            write(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn finish_sweep(result: &SweepResult, out: Option<&Path>) -> delta_sim::Result<u8> {
    emit(out, |w| write_result_to(result, w))?;
    if let Some((peak, k)) = result.peak(Output::Eta) {
        let at: Vec<String> = result
            .axes
            .iter()
            .zip(result.coords(k))
            .map(|(a, v)| format!("{}={v:.6e} {}", a.name.name(), a.name.unit()))
            .collect();
        eprintln!("peak eta {peak:.4e} at {}", at.join(", "));
    }
    if result.failures.is_empty() {
        return Ok(0);
    }
    for (k, reason) in &result.failures {
        eprintln!("cell {k} {:?}: {reason}", result.coords(*k));
    }
    eprintln!(
        "{} of {} cells did not converge",
        result.failures.len(),
        result.cell_count()
    );
    Ok(EXIT_NONCONVERGENCE)
}

fn run(command: &Command) -> delta_sim::Result<u8> {
    let common = command.common();
    let cfg = load(common)?;
    let hash = cfg.hash();
    let out = common.out.as_deref();
    match command {
        Command::Validate { .. } => {
            cfg.system()?;
            println!("ok {hash}");
            Ok(0)
        }
        Command::Solve { map, .. } => {
            let system = cfg.system()?;
            let numerics = cfg.numerics();
            let sol = fixed_point_solve(&system, &numerics)?;
            let kappa_abs = signal_absorption_rate(&sol.response, &system.atom, &sol.grid);
            let reflection =
                reflection_coefficient(&system.microwave, system.microwave.delta_c).norm_sqr();
            emit(out, |w| {
                writeln!(w, "config_hash {hash}")?;
                writeln!(w, "eta {:e}", sol.eta)?;
                writeln!(w, "b {:e} {:e}", sol.fields.b.re, sol.fields.b.im)?;
                writeln!(w, "a {:e} {:e}", sol.fields.a.re, sol.fields.a.im)?;
                writeln!(
                    w,
                    "kappa_abs_hz {:e}",
                    kappa_abs / (2.0 * std::f64::consts::PI)
                )?;
                writeln!(w, "microwave_reflection {reflection:.6}")?;
                writeln!(w, "iterations {}", sol.iterations)?;
                writeln!(w, "residual {:e}", sol.residual)?;
                Ok(())
            })?;
            if let Some(path) = map {
                let lattice = &cfg.scenarios.population_map;
                let (m, _) = population_map(&system, &numerics, lattice.count, lattice.half_width)?;
                emit(Some(path), |w| {
                    write_map_to(&m, &Provenance::new(hash.clone()), w)
                })?;
            }
            Ok(0)
        }
        Command::Sweep2d { .. } => {
            let result = sweep_2d(
                &cfg.system()?,
                &cfg.numerics(),
                &cfg.sweep2d_spec(),
                Provenance::new(hash),
            )?;
            if let Some(width) = ridge_width_delta_o(&result) {
                eprintln!("delta_o ridge FWHM {width:.4e} Hz");
            }
            finish_sweep(&result, out)
        }
        Command::MwSweep { .. } => {
            let result = microwave_power_sweep(
                &cfg.system()?,
                &cfg.numerics(),
                &cfg.mw_sweep_spec(),
                Provenance::new(hash),
            )?;
            finish_sweep(&result, out)
        }
        Command::OptSweep { .. } => {
            let result = optical_power_sweep(
                &cfg.system()?,
                &cfg.numerics(),
                &cfg.opt_sweep_spec(),
                Provenance::new(hash),
            )?;
            finish_sweep(&result, out)
        }
        Command::Predict { .. } => {
            let p = &cfg.scenarios.predict;
            let report = impedance_match_prediction(
                &cfg.system()?,
                &cfg.numerics(),
                p.p_mw_dbm,
                p.cold_temperature,
            )?;
            emit(out, |w| {
                writeln!(w, "# config_hash: {hash}")?;
                writeln!(w, "# microwave input {} dBm", report.p_mw_dbm)?;
                writeln!(w, "temperature_k,matched,eta,microwave_reflection")?;
                for c in &report.cases {
                    writeln!(
                        w,
                        "{},{},{:e},{:.6}",
                        c.temperature, c.matched, c.eta, c.reflection
                    )?;
                }
                writeln!(w, "# boost {:.4}", report.boost)?;
                writeln!(w, "# cold matched eta {:e}", report.cold_matched_eta)?;
                writeln!(
                    w,
                    "# cold ground fraction {:.6}",
                    report.cold_ground_fraction
                )?;
                writeln!(w, "# low-power drift {:.3e}", report.low_power_drift)?;
                Ok(())
            })?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = match thread_count(cli.command.common().threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match pool.install(|| run(&cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
