//! Command-line harness: analytic curves, single simulation points, full
//! sweeps, ζ-table fitting, and bound-checking reports.
//!
//! Logging is configured through the `URLLC_LAB_LOG` environment variable
//! (standard `env_logger` filter syntax). Exit codes: 0 success, 1 report
//! found bound violations, 2 invalid configuration or unknown preset,
//! 3 simulation or I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use urllc_lab::analysis::{TierGeometry, ZetaEntry, ZetaTable};
use urllc_lab::config::LabConfig;
use urllc_lab::experiments::{
    self, analytic_outage, matched_outage, ExperimentError, PresetFile, SweepSpec,
};
use urllc_lab::fitting;
use urllc_lab::geometry::Window;
use urllc_lab::montecarlo::{
    self, Collaboration, Fading, Link, Mode, SimPlan, StopRule,
};
use urllc_lab::numerics::QuadratureSpec;
use urllc_lab::shortpacket;

/// Seed used when none is given, matching the built-in presets.
const DEFAULT_SEED: u64 = 20_260_823;

#[derive(Parser)]
#[command(
    name = "urllc-lab",
    version,
    about = "Stochastic-geometry laboratory for proactive multi-cell association"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the analytic curves of a preset grid (no simulation).
    Analyze(SweepArgs),
    /// Run one simulation point and emit a JSON summary.
    Simulate(SimulateArgs),
    /// Run a sweep: analytic curves plus the preset's Monte Carlo plans.
    Sweep(SweepArgs),
    /// Fit the load-model shape parameter ζ and write a lookup table.
    FitZeta(FitZetaArgs),
    /// Check sweep CSVs: simulations must respect the analytic bounds.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct RunOpts {
    /// Worker threads for the Monte Carlo layer (0 = all available cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Override every plan's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override every plan's trial cap.
    #[arg(long)]
    max_trials: Option<u64>,
    /// Override every plan's rare-event target.
    #[arg(long)]
    target_events: Option<u64>,
}

impl RunOpts {
    fn workers(&self) -> usize {
        if self.workers == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.workers
        }
    }

    fn apply_to_stop(&self, stop: &mut StopRule) {
        if let Some(m) = self.max_trials {
            stop.max_trials = m;
        }
        if let Some(t) = self.target_events {
            stop.target_events = t;
        }
    }

    fn apply_to_spec(&self, spec: &mut SweepSpec) {
        if let Some(s) = self.seed {
            spec.seed = s;
            for plan in &mut spec.plans {
                plan.seed = s;
            }
        }
        if let Some(m) = self.max_trials {
            spec.realizations = m;
        }
        for plan in &mut spec.plans {
            self.apply_to_stop(&mut plan.stop);
        }
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Preset name: built-in (fig2, fig4a–fig9b) or defined in --config.
    #[arg(long)]
    preset: Option<String>,
    /// JSON file with a `presets` catalog of sweep specs.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (default: `<preset>.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default)]
enum LinkArg {
    #[default]
    Uplink,
    Downlink,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default)]
enum ModeArg {
    #[default]
    ModelMatched,
    SystemLevel,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default)]
enum CollabArg {
    #[default]
    NonCollaborative,
    Collaborative,
}

#[derive(ValueEnum, Debug, Clone, Copy, Default)]
enum FadingArg {
    #[default]
    Independent,
    DistanceCorrelated,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Laboratory configuration JSON (network, packet, delay sections).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    link: LinkArg,
    #[arg(long, value_enum, default_value_t)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t)]
    collaboration: CollabArg,
    #[arg(long, value_enum, default_value_t)]
    fading: FadingArg,
    /// SIR threshold; derived from the packet parameters when omitted.
    #[arg(long)]
    theta: Option<f64>,
    /// Fitted ζ table (CSV) feeding the analytic reference.
    #[arg(long)]
    zeta_table: Option<PathBuf>,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args, Debug)]
struct FitZetaArgs {
    /// Laboratory configuration JSON; defaults to the reference network.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path for the ζ table CSV.
    #[arg(long)]
    out: PathBuf,
    /// Network realizations per bias view (also settable via --max-trials).
    #[arg(long, default_value_t = 4000)]
    realizations: u64,
    #[command(flatten)]
    run: RunOpts,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Sweep CSV files to check.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Also write the text report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunSummary {
    link: Link,
    mode: Mode,
    collaboration: Collaboration,
    fading: Fading,
    theta: f64,
    seed: u64,
    workers: usize,
    analytic_kind: &'static str,
    /// Closed-form outage (exact or a lower bound, per `analytic_kind`).
    analytic_outage: f64,
    /// Closed form the estimator converges to, where one exists.
    matched_outage: Option<f64>,
    outage: f64,
    std_error: f64,
    reliability: f64,
    trials: u64,
    events: u64,
    terminated_by: montecarlo::TerminatedBy,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("URLLC_LAB_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn exit_for(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::UnknownPreset(_)
        | ExperimentError::InvalidSpec(_)
        | ExperimentError::Config(_)
        | ExperimentError::ShortPacket(_) => 2,
        _ => 3,
    }
}

fn run(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Analyze(args) => {
            let mut spec = resolve_spec(&args.preset, &args.config)?;
            spec.plans.clear();
            args.run.apply_to_spec(&mut spec);
            let out = args
                .out
                .unwrap_or_else(|| PathBuf::from(format!("{}-analytic.csv", spec.name)));
            let outcome = experiments::run_sweep(&spec, &out, args.run.workers())?;
            println!("wrote {} rows to {}", outcome.rows, outcome.csv_path);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep(args) => {
            let mut spec = resolve_spec(&args.preset, &args.config)?;
            args.run.apply_to_spec(&mut spec);
            let out =
                args.out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", spec.name)));
            let outcome = experiments::run_sweep(&spec, &out, args.run.workers())?;
            println!(
                "wrote {} rows to {} ({} grid points, hash {}, {} ms)",
                outcome.rows, outcome.csv_path, outcome.grid_points, outcome.config_hash,
                outcome.wall_ms
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => simulate(args),
        Command::FitZeta(args) => fit_zeta_cmd(args),
        Command::Report(args) => {
            let outcome = experiments::summarize_files(&args.files)?;
            let text = outcome.render_text();
            print!("{text}");
            if let Some(out) = &args.out {
                std::fs::write(out, &text)?;
            }
            if outcome.passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }
    }
}

/// `--preset` alone → built-ins; `--config` supplies a catalog that takes
/// precedence and, with exactly one entry, may stand alone.
fn resolve_spec(
    preset: &Option<String>,
    config: &Option<PathBuf>,
) -> Result<SweepSpec, ExperimentError> {
    match (preset, config) {
        (Some(name), Some(path)) => {
            let file = PresetFile::from_json_file(path)?;
            match file.presets.get(name) {
                Some(spec) => Ok(spec.clone()),
                None => experiments::preset(name),
            }
        }
        (Some(name), None) => experiments::preset(name),
        (None, Some(path)) => {
            let file = PresetFile::from_json_file(path)?;
            let mut specs: Vec<SweepSpec> = file.presets.into_values().collect();
            match specs.len() {
                1 => Ok(specs.remove(0)),
                n => Err(ExperimentError::InvalidSpec(format!(
                    "config defines {n} presets; pick one with --preset"
                ))),
            }
        }
        (None, None) => Err(ExperimentError::InvalidSpec(
            "either --preset or --config is required".into(),
        )),
    }
}

fn load_lab_config(path: &Option<PathBuf>) -> Result<LabConfig, ExperimentError> {
    let cfg = match path {
        Some(p) => LabConfig::from_json_file(p)?,
        None => LabConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Result<ExitCode, ExperimentError> {
    let cfg = load_lab_config(&args.config)?;
    let table = match &args.zeta_table {
        Some(p) => ZetaTable::from_csv(&std::fs::read_to_string(p)?)?,
        None => ZetaTable::empty(),
    };
    let theta = match args.theta {
        Some(t) if t > 0.0 && t.is_finite() => t,
        Some(t) => {
            return Err(ExperimentError::InvalidSpec(format!(
                "theta must be positive and finite, got {t}"
            )))
        }
        None => shortpacket::sir_threshold(&cfg.packet)?,
    };

    let mut plan = SimPlan::new(args.run.seed.unwrap_or(DEFAULT_SEED));
    plan.link = match args.link {
        LinkArg::Uplink => Link::Uplink,
        LinkArg::Downlink => Link::Downlink,
    };
    plan.mode = match args.mode {
        ModeArg::ModelMatched => Mode::ModelMatched,
        ModeArg::SystemLevel => Mode::SystemLevel,
    };
    plan.collaboration = match args.collaboration {
        CollabArg::NonCollaborative => Collaboration::NonCollaborative,
        CollabArg::Collaborative => Collaboration::Collaborative,
    };
    plan.fading = match args.fading {
        FadingArg::Independent => Fading::Independent,
        FadingArg::DistanceCorrelated => Fading::DistanceCorrelated,
    };
    args.run.apply_to_stop(&mut plan.stop);
    plan.validate().map_err(|e| ExperimentError::InvalidSpec(e.to_string()))?;

    let workers = args.run.workers();
    let net = &cfg.network;
    let quad = QuadratureSpec::default();
    let (analytic, kind) =
        analytic_outage(net, &table, theta, plan.link, plan.collaboration, &quad)?;
    let est = match plan.link {
        Link::Uplink => {
            montecarlo::estimate_uplink_reliability(net, &table, &plan, theta, workers)?
        }
        Link::Downlink => {
            montecarlo::estimate_downlink_reliability(net, &table, &plan, theta, workers)?
        }
    };

    let summary = RunSummary {
        link: plan.link,
        mode: plan.mode,
        collaboration: plan.collaboration,
        fading: plan.fading,
        theta,
        seed: plan.seed,
        workers,
        analytic_kind: kind,
        analytic_outage: analytic,
        matched_outage: matched_outage(net, &table, theta, &plan),
        outage: est.estimate,
        std_error: est.std_error,
        reliability: est.reliability(),
        trials: est.trials,
        events: est.events,
        terminated_by: est.terminated_by,
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary always serializes");
    match &args.out {
        Some(p) => std::fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn fit_zeta_cmd(args: FitZetaArgs) -> Result<ExitCode, ExperimentError> {
    let cfg = load_lab_config(&args.config)?;
    let realizations = args.run.max_trials.unwrap_or(args.realizations);
    let seed = args.run.seed.unwrap_or(DEFAULT_SEED);
    let workers = args.run.workers();
    let mut table = ZetaTable::empty();

    // Fit both association-bias views: sweeps use unit biases on the uplink
    // and power-proportional biases on the downlink, and the two views
    // produce distinct load ratios, so their entries coexist in one table.
    let views =
        [cfg.network.clone().with_unit_biases(), cfg.network.clone().with_power_biases()];
    for net in &views {
        let window = Window::new(montecarlo::core_margin(net) + 0.6);
        let hist =
            montecarlo::estimate_load_pmf_with_window(net, &window, realizations, seed, workers)?;
        let geom = TierGeometry::from_network(net);
        for tier in 0..net.tiers() {
            let samples = hist.samples(tier);
            let ratio = net.user_density_per_km2 / geom.lambda_tilde_m[tier];
            match fitting::fit_zeta(&hist.per_tier[tier], hist.empirical_mean(tier)) {
                Ok(fit) => {
                    log::info!(
                        "tier {} ratio {ratio:.4}: ζ = {:.4} (tv {:.4}, {} samples)",
                        tier + 1,
                        fit.zeta,
                        fit.tv_distance,
                        samples
                    );
                    table.insert(ZetaEntry {
                        tier,
                        cell_size: net.cell_size,
                        mu_over_lambda_tilde_m: ratio,
                        zeta: fit.zeta,
                        samples,
                        tv_distance: fit.tv_distance,
                    });
                }
                Err(e) => log::warn!(
                    "tier {} ratio {ratio:.4}: fit skipped ({e}); lookups fall back to the seed",
                    tier + 1
                ),
            }
        }
    }

    let mut buf = Vec::new();
    table.to_csv(&mut buf)?;
    std::fs::write(&args.out, &buf)?;
    println!("wrote {} fitted entries to {}", table.entries.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
