//! `ringwave` command-line interface.

mod commands;
mod config;
mod error;
mod figures;
mod output;
mod quantity;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde_json::{json, Value};

use ringwave_core::transient::Mode;

use config::ScenarioConfig;
use error::CliError;
use figures::Figure;

#[derive(Parser)]
#[command(name = "ringwave", version, about = "Varactor-loaded ring resonator: divider, doubler and ranging models")]
struct Cli {
    /// Scenario file (TOML or JSON); a previous run's manifest.json also works
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Overrides localization.seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps and Monte Carlo
    #[arg(long, global = true, env = "RINGWAVE_THREADS")]
    threads: Option<usize>,

    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Divider,
    Doubler,
}

impl ModeArg {
    fn name(self) -> &'static str {
        match self {
            ModeArg::Divider => "divider",
            ModeArg::Doubler => "doubler",
        }
    }
}

fn quantity_arg(s: &str) -> Result<f64, String> {
    quantity::parse(s)
}

#[derive(Args)]
struct SweepArgs {
    /// Input frequency, e.g. 4.46GHz
    #[arg(long, value_parser = quantity_arg)]
    f_in: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    p_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    p_stop: Option<f64>,
    #[arg(long)]
    p_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Loaded and unloaded Bloch phase per cell over the scan grid
    Dispersion,
    /// Impedance zeros and poles of the ring seen from node M
    Resonances,
    /// Pump and subharmonic standing-wave profiles and per-node pump swing
    StandingWave {
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long, value_parser = quantity_arg)]
        v_p0: Option<f64>,
        #[arg(long, value_parser = quantity_arg)]
        f_pump: Option<f64>,
    },
    /// Coupled-line filter image impedances and rejection
    Bpf,
    /// One transient run: waveforms and output spectrum
    Transient {
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long, value_parser = quantity_arg)]
        f_in: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        p_in: Option<f64>,
    },
    /// Subharmonic output versus pump power
    DividerSweep(SweepArgs),
    /// Second-harmonic output versus input power
    DoublerSweep(SweepArgs),
    /// Output tone versus input frequency at fixed drive
    FreqResponse {
        #[arg(long)]
        mode: Option<ModeArg>,
        #[arg(long, allow_hyphen_values = true)]
        p_in: Option<f64>,
        /// Centre frequency
        #[arg(long, value_parser = quantity_arg)]
        f_in: Option<f64>,
        #[arg(long, value_parser = quantity_arg)]
        span: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Single- versus dual-band ranging phase-error variance
    Localize {
        /// Number of reflectors per direction
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Fit z0 and eps_eff of the line to the calibration anchors
    Calibrate,
    /// Reproduction recipe for one figure
    Figure {
        #[arg(value_enum)]
        id: Figure,
    },
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Dispersion => "dispersion".into(),
            Command::Resonances => "resonances".into(),
            Command::StandingWave { .. } => "standing-wave".into(),
            Command::Bpf => "bpf".into(),
            Command::Transient { .. } => "transient".into(),
            Command::DividerSweep(_) => "divider-sweep".into(),
            Command::DoublerSweep(_) => "doubler-sweep".into(),
            Command::FreqResponse { .. } => "freq-response".into(),
            Command::Localize { .. } => "localize".into(),
            Command::Calibrate => "calibrate".into(),
            Command::Figure { id } => format!("figure {}", id.to_possible_value().expect("named").get_name()),
        }
    }

    /// Flag values written into the scenario tree so the manifest records them.
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        let mut v: Vec<(&'static str, Value)> = Vec::new();
        let mut put = |path: &'static str, x: Option<Value>| {
            if let Some(x) = x {
                v.push((path, x));
            }
        };
        match self {
            Command::StandingWave { mode, v_p0, f_pump } => {
                put("pump.mode", mode.map(|m| json!(m.name())));
                put("pump.v_p0", v_p0.map(|x| json!(x)));
                put("pump.f_pump", f_pump.map(|x| json!(x)));
            }
            Command::Transient { mode, f_in, p_in } => {
                put("drive.mode", mode.map(|m| json!(m.name())));
                put("drive.f_in", f_in.map(|x| json!(x)));
                put("drive.p_in", p_in.map(|x| json!(x)));
            }
            Command::DividerSweep(a) | Command::DoublerSweep(a) => {
                put("drive.f_in", a.f_in.map(|x| json!(x)));
                put("drive.p_start", a.p_start.map(|x| json!(x)));
                put("drive.p_stop", a.p_stop.map(|x| json!(x)));
                put("drive.p_step", a.p_step.map(|x| json!(x)));
            }
            Command::FreqResponse { mode, p_in, f_in, span, points } => {
                put("drive.mode", mode.map(|m| json!(m.name())));
                put("drive.p_in", p_in.map(|x| json!(x)));
                put("drive.f_in", f_in.map(|x| json!(x)));
                put("drive.span", span.map(|x| json!(x)));
                put("drive.points", points.map(|x| json!(x)));
            }
            Command::Localize { paths, trials } => {
                put("localization.n_paths", paths.map(|x| json!(x)));
                put("localization.trials", trials.map(|x| json!(x)));
            }
            _ => {}
        }
        v
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut node = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if !node.is_object() {
            *node = json!({});
        }
        let map = node.as_object_mut().expect("object");
        if keys.peek().is_none() {
            map.insert(key.to_string(), value);
            return;
        }
        node = map.entry(key.to_string()).or_insert_with(|| json!({}));
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config { path: "--threads".into(), message: "must be >= 1".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config { path: "--threads".into(), message: e.to_string() })?;
    }

    let mut raw = match &cli.config {
        Some(path) => ScenarioConfig::read_raw(path)?,
        None => json!({}),
    };
    if let Some(seed) = cli.seed {
        set_path(&mut raw, "localization.seed", json!(seed));
    }
    for (path, value) in cli.command.overrides() {
        set_path(&mut raw, path, value);
    }
    let cfg = ScenarioConfig::from_value(raw)?;

    let outputs = match &cli.command {
        Command::Dispersion => commands::dispersion(&cfg)?,
        Command::Resonances => commands::resonances(&cfg)?,
        Command::StandingWave { .. } => commands::standing_wave(&cfg)?,
        Command::Bpf => commands::bpf(&cfg)?,
        Command::Transient { .. } => commands::transient_run(&cfg)?,
        Command::DividerSweep(_) => commands::sweep(&cfg, Mode::Divider)?,
        Command::DoublerSweep(_) => commands::sweep(&cfg, Mode::Doubler)?,
        Command::FreqResponse { .. } => commands::freq_response(&cfg)?,
        Command::Localize { .. } => commands::localize(&cfg)?,
        Command::Calibrate => commands::calibrate(&cfg)?,
        Command::Figure { id } => figures::run(*id, &cfg)?,
    };

    let manifest = json!({
        "tool": "ringwave",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config": cfg,
        "runtime_s": started.elapsed().as_secs_f64(),
        "outputs": outputs.names(),
    });
    outputs.write_all(&cli.out, &manifest)?;
    for name in outputs.names().into_iter().chain(["manifest.json"]) {
        println!("{}", cli.out.join(name).display());
    }
    info!("{} finished in {:.3} s", cli.command.name(), started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
