//! `comvr` — power flow, main-body extraction, centers of mass, voltage
//! regulation and Monte-Carlo campaigns on radial feeders.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 data error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use comvr::com::{CurrentSource, Weighting};

use config::{ConfigFile, RunConfig, OUT_DIR_ENV};

/// Invalid flags, config files or combinations of options.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "comvr", version, about = "Center-of-mass voltage regulation by a virtual power plant")]
struct Cli {
    /// TOML file whose entries override the command-line flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for written reports
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct NetArgs {
    /// Network JSON file (default: bundled Rhodes R-26 reconstruction)
    #[arg(long)]
    network: Option<PathBuf>,

    /// VPP fleet JSON file (default: bundled fleet with the bundled network)
    #[arg(long)]
    fleet: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum WeightingArg {
    Magnitude,
    RealPart,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Metered,
    Estimated,
}

#[derive(Args, Debug, Clone, Default)]
struct CtrlArgs {
    /// Lower voltage limit, p.u.
    #[arg(long)]
    v_min: Option<f64>,

    /// Upper voltage limit, p.u.
    #[arg(long)]
    v_max: Option<f64>,

    /// Step doubles when a step recovers less than this share of the deficit
    #[arg(long)]
    theta_small: Option<f64>,

    /// Shortest lesser part, as a share of the main body
    #[arg(long)]
    lesser_part: Option<f64>,

    /// Iteration cap of one regulation run
    #[arg(long)]
    max_iterations: Option<usize>,

    /// Weight of a bus current in the centers of mass
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,

    /// Where bus currents come from
    #[arg(long, value_enum)]
    current_source: Option<SourceArg>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the power flow and print per-bus voltages as CSV
    Pf {
        #[command(flatten)]
        net: NetArgs,
        /// Load level as a fraction of the bus peak loads
        #[arg(long, default_value_t = 1.0)]
        loading: f64,
        /// Write the CSV here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the main body: chain buses, coordinates and hanging branches
    Topology {
        #[command(flatten)]
        net: NetArgs,
    },
    /// Print the centers of mass of a solved case
    Com {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        ctrl: CtrlArgs,
        #[arg(long, default_value_t = 1.0)]
        loading: f64,
        /// Also print a text diagram of the masses along the main body
        #[arg(long)]
        diagram: bool,
    },
    /// Run one regulation and write its trace, outcome and profile plot
    Regulate {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        ctrl: CtrlArgs,
        /// dispatch or redispatch
        #[arg(long, default_value = "redispatch")]
        mode: String,
        /// Initial (re-)dispatching step, kW
        #[arg(long, default_value_t = 300.0)]
        step: f64,
        /// Load level as a fraction of the peak loads (fleet setpoints as given)
        #[arg(long, conflicts_with = "scenario")]
        loading: Option<f64>,
        /// Use campaign scenario N (drawn from --seed and --load-factor)
        #[arg(long)]
        scenario: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        load_factor: Option<f64>,
    },
    /// Run a Monte-Carlo campaign and write outcomes, statistics and tables
    Campaign {
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        ctrl: CtrlArgs,
        /// Comma-separated steps, kW
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
        /// Comma-separated modes (dispatch, redispatch)
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
        /// Scenarios per (mode, step) cell
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Mean total load as a multiple of the critical loading
        #[arg(long)]
        load_factor: Option<f64>,
        /// Worker threads (1 runs serially; default: all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Read back files written by this tool and summarize them
    Report {
        /// Files or directories
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// List the bundled fixtures, optionally writing them to a directory
    Fixtures {
        /// Write the fixture files into this directory
        #[arg(long)]
        regenerate: Option<PathBuf>,
        /// Re-run the main-line length calibration before writing
        #[arg(long, requires = "regenerate")]
        calibrate: bool,
    },
}

impl CtrlArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let r = &mut cfg.regulation;
        if let Some(v) = self.v_min {
            r.v_min = v;
        }
        if let Some(v) = self.v_max {
            r.v_max = v;
        }
        if let Some(v) = self.theta_small {
            r.theta_small = v;
        }
        if let Some(v) = self.lesser_part {
            r.lesser_part_fraction = v;
        }
        if let Some(v) = self.max_iterations {
            r.max_iterations = v;
        }
        if let Some(w) = self.weighting {
            r.centers.weighting = match w {
                WeightingArg::Magnitude => Weighting::Magnitude,
                WeightingArg::RealPart => Weighting::RealPart,
            };
        }
        if let Some(s) = self.current_source {
            r.centers.source = match s {
                SourceArg::Metered => CurrentSource::Metered,
                SourceArg::Estimated => CurrentSource::Estimated,
            };
        }
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    let net = match &cli.command {
        Command::Pf { net, .. } | Command::Topology { net } => Some(net),
        Command::Com { net, ctrl, .. } | Command::Regulate { net, ctrl, .. } | Command::Campaign { net, ctrl, .. } => {
            ctrl.apply(&mut cfg);
            Some(net)
        }
        _ => None,
    };
    if let Some(net) = net {
        cfg.network = net.network.clone();
        cfg.fleet = net.fleet.clone();
    }
    match &cli.command {
        Command::Regulate { seed, load_factor, .. } => {
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if let Some(l) = load_factor {
                cfg.load_factor = *l;
            }
        }
        Command::Campaign {
            steps,
            modes,
            count,
            seed,
            load_factor,
            threads,
            ..
        } => {
            if let Some(s) = steps {
                cfg.steps_kw = s.clone();
            }
            if let Some(m) = modes {
                cfg.modes = m.iter().map(|s| config::parse_mode(s)).collect::<anyhow::Result<_>>()?;
            }
            if let Some(c) = count {
                cfg.count = *c;
            }
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if let Some(l) = load_factor {
                cfg.load_factor = *l;
            }
            if threads.is_some() {
                cfg.threads = *threads;
            }
        }
        _ => {}
    }
    if let Some(path) = &cli.config {
        let base = path.parent().map(PathBuf::from).unwrap_or_default();
        ConfigFile::load(path)?.apply(&mut cfg, &base)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = build_config(&cli)?;
    log::debug!("configuration: {cfg:?}");
    match cli.command {
        Command::Pf { loading, out, .. } => commands::pf(&cfg, loading, out.as_deref()),
        Command::Topology { .. } => commands::topology(&cfg),
        Command::Com { loading, diagram, .. } => commands::com(&cfg, loading, diagram),
        Command::Regulate {
            mode,
            step,
            loading,
            scenario,
            ..
        } => commands::regulate(&cfg, config::parse_mode(&mode)?, step, loading, scenario),
        Command::Campaign { .. } => commands::campaign(&cfg),
        Command::Report { paths } => commands::report(&paths),
        Command::Fixtures { regenerate, calibrate } => commands::fixtures(regenerate.as_deref(), calibrate),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if let Some(err) = e.downcast_ref::<comvr::Error>() {
        return match err {
            comvr::Error::Config(_) => 2,
            err if err.is_data_error() => 3,
            _ => 1,
        };
    }
    if e.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
