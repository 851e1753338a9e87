//! Command-line front end.
//!
//! Exit codes: 0 success; 1 I/O or internal error; 2 usage, configuration,
//! validation or schema error; 3 trial stalled; 4 trial tipped over; 5 rear
//! wheel still on the step face at the end of the trial; 6 trial could not be
//! evaluated; 7 some response surfaces could not be fitted.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crossing_core::scenario::{Outcome, TorqueSchedule};
use crossing_core::strategy::Weights;

use crate::campaign::{resolve_workers, run_campaign};
use crate::config::{RunConfig, CONFIG_SCHEMA_VERSION};
use crate::error::LabError;
use crate::formats::{self, GridTable, MetricsRecord, OptimizeQuery, SCHEMA_SUMMARY};
use crate::pipeline;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_INVALID: u8 = 2;
pub const EXIT_STALLED: u8 = 3;
pub const EXIT_TIPPED: u8 = 4;
pub const EXIT_REAR_CONTACT: u8 = 5;
pub const EXIT_TRIAL_FAILED: u8 = 6;
pub const EXIT_FIT_INCOMPLETE: u8 = 7;

const EXIT_SUMMARY: &str = "Exit codes: 0 ok, 1 I/O error, 2 invalid input, 3 stalled, 4 tipped, \
5 rear wheel on step face, 6 trial failed, 7 incomplete fit";

const CAMPAIGN_FILE: &str = "campaign.csv";
const JOURNAL_FILE: &str = "campaign.journal.jsonl";
const SURFACES_FILE: &str = "surfaces.json";
const DECISION_FILE: &str = "decision.json";
const PLOT_DIR: &str = "plot";

#[derive(Debug, Parser)]
#[command(name = "crossing-lab", version, about = "Obstacle-crossing simulation, campaigns, response surfaces and damping strategy")]
#[command(after_help = format!("{SCHEMA_SUMMARY}\n  config.toml      schema_version = {CONFIG_SCHEMA_VERSION}\n\n{EXIT_SUMMARY}"))]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding the configured one.
    #[arg(long, global = true, env = "CROSSING_LAB_OUT", value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Reserved for stochastic perturbations; trials are currently deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and write its time series and metrics.
    #[command(after_help = format!("{SCHEMA_SUMMARY}\n\n{EXIT_SUMMARY}"))]
    Simulate(SimulateArgs),
    /// Run the full-factorial campaign.
    #[command(after_help = format!("{SCHEMA_SUMMARY}\n\n{EXIT_SUMMARY}"))]
    Campaign(CampaignArgs),
    /// Fit the response surfaces of a campaign and export plot data.
    #[command(after_help = format!("{SCHEMA_SUMMARY}\n\n{EXIT_SUMMARY}"))]
    Fit(FitArgs),
    /// Choose the front damping for an announced obstacle.
    #[command(after_help = format!("{SCHEMA_SUMMARY}\n\n{EXIT_SUMMARY}"))]
    Optimize(OptimizeArgs),
    /// Export gridded predicted/observed values for existing surfaces.
    #[command(name = "plot-data", after_help = format!("{SCHEMA_SUMMARY}\n\n{EXIT_SUMMARY}"))]
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Obstacle height, m [default: 25 % of the wheel radius].
    #[arg(long = "hO", value_name = "M")]
    pub h_o: Option<f64>,
    /// Approach speed, m/s.
    #[arg(long, default_value_t = 12.0, value_name = "MPS")]
    pub vc: f64,
    /// Front longitudinal damping, N·s/m [default: vehicle.front_longitudinal_damping].
    #[arg(long, value_name = "NSPM")]
    pub cav: Option<f64>,
    /// Torque from t1: hold-last, speed-hold, constant=<N·m> or crossing=<N·m>,<N·m>.
    #[arg(long, value_name = "MODE", value_parser = parse_torque)]
    pub torque_mode: Option<TorqueSchedule>,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Worker threads [default: solver.workers, 0 = all cores].
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Campaign CSV [default: <out>/campaign.csv].
    #[arg(long, value_name = "FILE")]
    pub campaign: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Surfaces JSON [default: <out>/surfaces.json].
    #[arg(long, value_name = "FILE")]
    pub surfaces: Option<PathBuf>,
    /// Campaign CSV used for the wheel-travel constraint [default: <out>/campaign.csv].
    #[arg(long, value_name = "FILE")]
    pub campaign: Option<PathBuf>,
    /// Query JSON; --hO, --vc and --weights override its fields.
    #[arg(long, value_name = "FILE")]
    pub query: Option<PathBuf>,
    /// Obstacle height, m.
    #[arg(long = "hO", value_name = "M")]
    pub h_o: Option<f64>,
    /// Approach speed, m/s.
    #[arg(long, value_name = "MPS")]
    pub vc: Option<f64>,
    /// Objective weights energy,pitch,cdwo [default: 1,1,1].
    #[arg(long, value_name = "E,P,C", value_parser = parse_weights)]
    pub weights: Option<Weights>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, value_name = "FILE")]
    pub surfaces: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub campaign: Option<PathBuf>,
}

fn parse_torque(s: &str) -> Result<TorqueSchedule, String> {
    let number = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"));
    match s.split_once('=') {
        None if s == "hold-last" => Ok(TorqueSchedule::HoldLast),
        None if s == "speed-hold" => Ok(TorqueSchedule::SpeedHold),
        Some(("constant", v)) => Ok(TorqueSchedule::Constant(number(v)?)),
        Some(("crossing", v)) => {
            let (a, b) = v.split_once(',').ok_or("crossing needs two torques: crossing=<at t1>,<at t2>")?;
            Ok(TorqueSchedule::Crossing { at_t1: number(a)?, at_t2: number(b)? })
        }
        _ => Err(format!("unknown torque mode {s:?}")),
    }
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated weights: energy,pitch,cdwo".into());
    }
    let w: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("not a number: {p:?}")))
        .collect::<Result<_, _>>()?;
    Ok(Weights { energy: w[0], pitch: w[1], cdwo: w[2] })
}

pub fn exit_code(err: &LabError) -> u8 {
    match err {
        LabError::Io { .. } | LabError::Aborted { .. } => EXIT_IO,
        LabError::Core(crossing_core::Error::NoCrossing)
        | LabError::Core(crossing_core::Error::EmptyWindow)
        | LabError::Core(crossing_core::Error::IntegrationFailure { .. }) => EXIT_TRIAL_FAILED,
        _ => EXIT_INVALID,
    }
}

pub fn outcome_code(outcome: Outcome) -> u8 {
    match outcome {
        Outcome::Cleared | Outcome::RearFlyover => EXIT_OK,
        Outcome::Stalled => EXIT_STALLED,
        Outcome::Tipped => EXIT_TIPPED,
        Outcome::RearContact => EXIT_REAR_CONTACT,
    }
}

struct Context {
    config: RunConfig,
    out: PathBuf,
}

impl Context {
    fn new(global: &GlobalArgs) -> Result<Self, LabError> {
        let config = RunConfig::load_or_default(global.config.as_deref())?;
        let out = global.out.clone().unwrap_or_else(|| config.paths.output_dir.clone());
        Ok(Context { config, out })
    }

    fn path(&self, explicit: Option<&Path>, name: &str) -> PathBuf {
        explicit.map_or_else(|| self.out.join(name), Path::to_path_buf)
    }
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = Context::new(&cli.global).and_then(|ctx| match &cli.command {
        Command::Simulate(a) => simulate(&ctx, a),
        Command::Campaign(a) => campaign(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Optimize(a) => optimize(&ctx, a),
        Command::PlotData(a) => plot_data(&ctx, a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(Cli::parse()))
}

fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<u8, LabError> {
    let v = &ctx.config.vehicle;
    let h_o = a.h_o.unwrap_or(0.25 * v.wheel_radius);
    let cav = a.cav.unwrap_or(v.front_longitudinal_damping);
    let cfg = pipeline::trial_config(&ctx.config, h_o, a.vc, cav, a.torque_mode);
    let result = pipeline::simulate(&cfg)?;
    let series = ctx.out.join("timeseries.csv");
    let metrics = ctx.out.join("metrics.json");
    formats::write_timeseries_csv(&series, &result.series, ctx.config.solver.timeseries_stride)?;
    formats::write_json(&metrics, &MetricsRecord::from(&result))?;
    let m = &result.metrics;
    println!(
        "{}: delta_Ec = {:.4} J, pitch rate at t2 = {:.4} rad/s, cdwo = {:.4} s, max wheel travel = {:.4} m",
        result.events.outcome.as_str(),
        m.delta_ec,
        m.pitch_rate_t2,
        m.cdwo,
        m.dx_w_max
    );
    println!("wrote {} and {}", series.display(), metrics.display());
    Ok(outcome_code(result.events.outcome))
}

fn campaign(ctx: &Context, a: &CampaignArgs) -> Result<u8, LabError> {
    let workers = resolve_workers(a.workers.unwrap_or(ctx.config.solver.workers));
    let plan = ctx.config.plan();
    let csv = ctx.out.join(CAMPAIGN_FILE);
    let journal = ctx.out.join(JOURNAL_FILE);
    eprintln!("running {} trials on {workers} worker(s)", plan.len());
    let result = run_campaign(&plan, &ctx.config.trial_template(), workers, Some(&journal))?;
    formats::save_campaign(&csv, &result, Some(GridTable::from(&ctx.config.plan)))
        .map_err(|e| LabError::Aborted { message: e.to_string(), journal: journal.clone() })?;
    std::fs::remove_file(&journal).map_err(|e| LabError::io(&journal, e))?;
    for f in &result.failures {
        eprintln!("trial failed at hO = {} m, vc = {} m/s, cAV = {} N·s/m: {}", f.h_o, f.vc, f.cav, f.reason);
    }
    println!("{} records, {} failures; wrote {}", result.records.len(), result.failures.len(), csv.display());
    Ok(EXIT_OK)
}

fn write_plots(ctx: &Context, surfaces: &[crossing_core::FittedSurface], campaign: &crossing_core::CampaignResult) -> Result<(), LabError> {
    let dir = ctx.out.join(PLOT_DIR);
    for s in surfaces {
        formats::write_plot_csv(&dir.join(pipeline::plot_file_name(s)), &pipeline::plot_rows(s, campaign))?;
    }
    Ok(())
}

fn fit(ctx: &Context, a: &FitArgs) -> Result<u8, LabError> {
    let path = ctx.path(a.campaign.as_deref(), CAMPAIGN_FILE);
    let campaign = formats::load_campaign(&path)?;
    let (surfaces, failures) = pipeline::fit_campaign(&campaign, &ctx.config.report_options());
    let out = ctx.out.join(SURFACES_FILE);
    formats::save_surfaces(&out, &surfaces)?;
    write_plots(ctx, &surfaces, &campaign)?;
    for f in &failures {
        eprintln!("cannot fit {} at hO = {} m: {}", f.metric.as_str(), f.h_o, f.reason);
    }
    println!("{} surfaces fitted, {} failed; wrote {}", surfaces.len(), failures.len(), out.display());
    Ok(if failures.is_empty() { EXIT_OK } else { EXIT_FIT_INCOMPLETE })
}

fn optimize(ctx: &Context, a: &OptimizeArgs) -> Result<u8, LabError> {
    let surfaces = formats::load_surfaces(&ctx.path(a.surfaces.as_deref(), SURFACES_FILE))?;
    let campaign = formats::load_campaign(&ctx.path(a.campaign.as_deref(), CAMPAIGN_FILE))?;
    let mut query = match &a.query {
        Some(p) => formats::read_json::<OptimizeQuery>(p)?,
        None => {
            let missing = |flag: &str| LabError::Invalid(format!("{flag} is required without --query"));
            OptimizeQuery {
                h_o_m: a.h_o.ok_or_else(|| missing("--hO"))?,
                vc_mps: a.vc.ok_or_else(|| missing("--vc"))?,
                weights: Weights::default(),
                detection_distance_m: 1.0,
                torque_demand_nm: 0.0,
            }
        }
    };
    if let Some(h) = a.h_o {
        query.h_o_m = h;
    }
    if let Some(v) = a.vc {
        query.vc_mps = v;
    }
    if let Some(w) = a.weights {
        query.weights = w;
    }
    let decision = pipeline::decide(surfaces, &campaign, &ctx.config.vehicle, &query)?;
    let out = ctx.out.join(DECISION_FILE);
    formats::write_json(&out, &decision)?;
    println!(
        "cAV* = {:.1} N·s/m, tau = {:.3} N·m, feasible = {}, budget = {:.4} s; wrote {}",
        decision.cav_star,
        decision.tau_command,
        decision.feasible,
        decision.time_budget,
        out.display()
    );
    Ok(EXIT_OK)
}

fn plot_data(ctx: &Context, a: &PlotArgs) -> Result<u8, LabError> {
    let surfaces = formats::load_surfaces(&ctx.path(a.surfaces.as_deref(), SURFACES_FILE))?;
    let campaign = formats::load_campaign(&ctx.path(a.campaign.as_deref(), CAMPAIGN_FILE))?;
    write_plots(ctx, &surfaces, &campaign)?;
    println!("wrote {} plot files to {}", surfaces.len(), ctx.out.join(PLOT_DIR).display());
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn torque_modes_parse() {
        assert_eq!(parse_torque("hold-last"), Ok(TorqueSchedule::HoldLast));
        assert_eq!(parse_torque("constant=1.5"), Ok(TorqueSchedule::Constant(1.5)));
        assert_eq!(parse_torque("crossing=2,-1"), Ok(TorqueSchedule::Crossing { at_t1: 2.0, at_t2: -1.0 }));
        assert!(parse_torque("crossing=2").is_err());
        assert!(parse_torque("turbo").is_err());
    }

    #[test]
    fn weights_parse() {
        assert_eq!(parse_weights("1, 0,2"), Ok(Weights { energy: 1.0, pitch: 0.0, cdwo: 2.0 }));
        assert!(parse_weights("1,2").is_err());
    }

    #[test]
    fn subcommand_help_lists_schemas() {
        for name in ["simulate", "campaign", "fit", "optimize", "plot-data"] {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = cmd.find_subcommand_mut(name).unwrap();
            let help = sub.render_long_help().to_string();
            assert!(help.contains("File schemas (version 1)"), "{name}");
            assert!(help.contains("--config") && help.contains("--out"), "{name}");
        }
    }

    #[test]
    fn outcome_codes_are_distinct() {
        let codes: Vec<u8> = Outcome::ALL.iter().map(|&o| outcome_code(o)).collect();
        assert_eq!(codes.iter().filter(|&&c| c == EXIT_OK).count(), 2);
        let mut failing: Vec<u8> = codes.into_iter().filter(|&c| c != EXIT_OK).collect();
        failing.dedup();
        assert_eq!(failing.len(), 3);
    }
}
