//! Command line front end over the experiment registry.
//!
//! Every subcommand names a registered experiment; flags override its
//! parameters. Exit code 0 when every reported quantity passes, 1 when any
//! fails, 2 on a configuration error.

use std::process::ExitCode;

use capwalk_core::harness::{
    find_experiment, registry, run_experiment, write_report, ExperimentConfig, ParamValue,
    ReportFormat, Verdict,
};
use capwalk_core::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "capwalk",
    version,
    about = "Capacity, kernel bound, and random walk experiments on flat and \
             Eguchi-Hanson product spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form bound constants and the integrated Green interval.
    Constants(ExperimentArgs),
    /// Equilibrium-measure capacities against closed forms.
    Capacity(ExperimentArgs),
    /// Monte Carlo ball hitting against the harmonic ratio.
    Hit(ExperimentArgs),
    /// Hitting probability between half the ratio-kernel capacity and the capacity.
    SandwichEuclidean(ExperimentArgs),
    /// Intersection probability of two Wiener sausages across widths.
    TwoWalker(ExperimentArgs),
    /// Early-exit probability against the Gaussian tail bound.
    ExitTail(ExperimentArgs),
    /// Bolt hitting against the closed-form radial potential.
    EhBolt(ExperimentArgs),
    /// Tubular volume of the high-curvature region against a uniform budget.
    JnVolume(ExperimentArgs),
    /// Interval pair energy, content lower bound, and greedy covers.
    Hausdorff(ExperimentArgs),
    /// Heat kernel sandwich on a log grid and Green potential ordering.
    GreenBounds(ExperimentArgs),
    /// List the registered experiments.
    List,
}

impl Command {
    fn experiment(&self) -> Option<(&'static str, &ExperimentArgs)> {
        match self {
            Command::Constants(a) => Some(("constants", a)),
            Command::Capacity(a) => Some(("capacity", a)),
            Command::Hit(a) => Some(("hit", a)),
            Command::SandwichEuclidean(a) => Some(("sandwich-euclidean", a)),
            Command::TwoWalker(a) => Some(("two-walker", a)),
            Command::ExitTail(a) => Some(("exit-tail", a)),
            Command::EhBolt(a) => Some(("eh-bolt", a)),
            Command::JnVolume(a) => Some(("jn-volume", a)),
            Command::Hausdorff(a) => Some(("hausdorff", a)),
            Command::GreenBounds(a) => Some(("green-bounds", a)),
            Command::List => None,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<u64>,
    /// Manifold, e.g. "euclidean:n=5" or "eh-product:n=6,a=1".
    #[arg(long)]
    manifold: Option<String>,
    /// Write the rendered report here instead of stdout.
    #[arg(long)]
    out: Option<String>,
    /// Report rendering: json or csv.
    #[arg(long, default_value = "json")]
    format: String,
    /// Cap on the adaptive time step.
    #[arg(long = "dt-max")]
    dt_max: Option<f64>,
    /// Step safety factor; dt = (gap/kappa)^2.
    #[arg(long)]
    kappa: Option<f64>,
    /// Brownian bridge crossing correction.
    #[arg(long, value_parser = ["on", "off"])]
    bridge: Option<String>,
    /// Time horizon: a number or "inf".
    #[arg(long = "T")]
    t: Option<String>,
    /// Sausage or tube width, for experiments that have one.
    #[arg(long)]
    eps: Option<f64>,
    /// Override any schema parameter: KEY=VALUE, value in JSON or plain form.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Bare words become text; everything JSON understands keeps its type.
fn parse_value(text: &str) -> ParamValue {
    serde_json::from_str(text).unwrap_or_else(|_| ParamValue::Text(text.to_string()))
}

fn build_config(name: &str, a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let def = find_experiment(name)?;
    let has = |key: &str| def.params.iter().any(|p| p.key == key);
    let mut config = ExperimentConfig::defaults_for(name)?;
    if let Some(m) = &a.manifold {
        config.manifold = m.parse()?;
    }
    config.out = a.out.clone();
    if let Some(seed) = a.seed {
        config.set("seed", ParamValue::Count(seed));
    }
    let guarded: [(&str, Option<ParamValue>); 5] = [
        ("trials", a.trials.map(ParamValue::Count)),
        ("dt_max", a.dt_max.map(ParamValue::Number)),
        ("kappa", a.kappa.map(ParamValue::Number)),
        ("bridge", a.bridge.as_ref().map(|s| ParamValue::Bool(s == "on"))),
        ("t", a.t.clone().map(ParamValue::Text)),
    ];
    for (key, value) in guarded {
        if let Some(value) = value {
            if !has(key) {
                return Err(Error::Config(format!("`{name}` has no `{key}` parameter")));
            }
            config.set(key, value);
        }
    }
    if let Some(eps) = a.eps {
        if has("eps") {
            config.set("eps", ParamValue::Number(eps));
        } else if has("eps_list") {
            config.set("eps_list", ParamValue::Numbers(vec![eps]));
        } else {
            return Err(Error::Config(format!("`{name}` has no width parameter")));
        }
    }
    for kv in &a.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set wants KEY=VALUE, got `{kv}`")))?;
        config.set(key, parse_value(value));
    }
    Ok(config)
}

fn list_experiments() {
    for def in registry() {
        println!("{:<20} v{}  {}", def.name, def.version, def.default_manifold);
        println!("    {}", def.claim);
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let Some((name, args)) = cli.command.experiment() else {
        list_experiments();
        return Ok(ExitCode::SUCCESS);
    };
    let format: ReportFormat = args.format.parse()?;
    let config = build_config(name, args)?;
    let report = run_experiment(&config)?;
    let text = write_report(&report, format)?;
    match &report.config.out {
        Some(path) => println!(
            "{}: {} ({} rows) -> {path}",
            report.experiment,
            report.verdict,
            report.results.len()
        ),
        None => print!("{text}"),
    }
    Ok(match report.verdict {
        Verdict::Pass => ExitCode::SUCCESS,
        Verdict::Fail => ExitCode::from(1),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
