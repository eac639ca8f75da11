//! Command-line driver for the link-tracing sampling simulator.
//!
//! Subcommands mirror the pipeline stages; `run` executes all of them and
//! writes the artifact manifest. Every stage reads its inputs from the
//! output directory, so stages can be rerun in isolation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use linktrace::config::{parse_config, RunConfig};
use linktrace::error::Error;
use linktrace::fieldwork::ParticipationMatrix;
use linktrace::io;
use linktrace::pipeline;
use linktrace::report::write_report;
use linktrace::synthpop::GroundTruthGraph;

#[derive(Parser)]
#[command(name = "linktrace")]
#[command(about = "Simulate and analyze binational link-tracing sampling studies")]
struct Cli {
    /// Configuration file (line-oriented `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Preset name (demo, calibration, full-scale, full-scale-census) when no
    /// config file is given.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Master RNG seed; overrides the config file value.
    #[arg(long, global = true)]
    rng_seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

/// Protocol overrides applied on top of the configuration.
#[derive(Args, Default, Clone)]
struct ProtocolFlags {
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,

    /// Interview target (stop rule).
    #[arg(long)]
    target: Option<usize>,

    /// Participation probability, applied to every site/sex cell.
    #[arg(long)]
    participation: Option<f64>,

    /// Masking probability: one value for both sites, or `origin,destination`.
    #[arg(long)]
    masking: Option<String>,
}

impl ProtocolFlags {
    fn apply(&self, config: &mut RunConfig) -> Result<(), Error> {
        if let Some(seeds) = self.seeds {
            config.study.n_seeds = seeds;
        }
        if let Some(target) = self.target {
            config.study.target_interviews = target;
        }
        if let Some(p) = self.participation {
            config.study.participation = ParticipationMatrix::constant(p);
        }
        if let Some(masking) = &self.masking {
            let parts: Vec<&str> = masking.split(',').collect();
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("--masking: `{s}` is not a number")))
            };
            match parts.as_slice() {
                [both] => {
                    let v = parse(both)?;
                    config.study.masking_origin = v;
                    config.study.masking_destination = v;
                }
                [origin, destination] => {
                    config.study.masking_origin = parse(origin)?;
                    config.study.masking_destination = parse(destination)?;
                }
                _ => {
                    return Err(Error::Config(
                        "--masking takes one value or `origin,destination`".into(),
                    ))
                }
            }
        }
        config.validate()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic population and ground-truth graph.
    Generate,
    /// Run the referral protocol on the generated population.
    Sample(ProtocolFlags),
    /// Link observations into unique entities and report conflicts.
    Link,
    /// Assemble the network layers, chains and hive-plot data.
    Build,
    /// Compute descriptive statistics and permutation tests.
    Stats,
    /// Fit the ERGM models by maximum pseudo-likelihood.
    Fit,
    /// Compute naive and weighted population estimates.
    Estimate,
    /// Render the markdown study report from existing artifacts.
    Report,
    /// Run every stage end to end and write the manifest.
    Run(ProtocolFlags),
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut config = match (&cli.config, &cli.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read config `{}`: {e}", path.display()))
            })?;
            parse_config(&text)?
        }
        (None, Some(preset)) => {
            let seed = cli.rng_seed.ok_or_else(|| {
                Error::Config("--rng-seed is required when using --preset".into())
            })?;
            RunConfig::preset(preset, seed)?
        }
        (None, None) => {
            return Err(Error::Config(
                "either --config or --preset must be given".into(),
            ))
        }
    };
    if let Some(seed) = cli.rng_seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_graph(out: &std::path::Path) -> Result<GroundTruthGraph, Error> {
    let persons = io::read_persons(&out.join("persons.csv"))?;
    let ties = io::read_truth_ties(&out.join("truth_ties.csv"))?;
    Ok(GroundTruthGraph::from_parts(persons, ties, Vec::new()))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let out = &cli.out;
    if let Command::Report = cli.command {
        // Report renders whatever artifacts exist; no config needed.
        std::fs::create_dir_all(out)?;
        write_report(out)?;
        eprintln!("report: wrote {}", out.join("report.md").display());
        return Ok(());
    }
    let mut config = resolve_config(cli)?;
    match &cli.command {
        Command::Sample(flags) | Command::Run(flags) => flags.apply(&mut config)?,
        _ => {}
    }
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Generate => {
            let graph = pipeline::stage_generate(&config, out)?;
            for warning in &graph.warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!(
                "generate: {} persons, {} ties",
                graph.persons.len(),
                graph.ties.len()
            );
        }
        Command::Sample(_) => {
            let graph = load_graph(out)?;
            let log = pipeline::stage_sample(&config, &graph, out)?;
            eprintln!(
                "sample: {} interviews, {} referral events, {} observations{}",
                log.n_interviews(),
                log.referrals.len(),
                log.observations.len(),
                if log.exhausted { " (queue exhausted)" } else { "" }
            );
        }
        Command::Link => {
            let log = io::read_study(out)?;
            let (partition, report) = pipeline::stage_link(&config, &log, out)?;
            eprintln!(
                "link: {} entities from {} observations, {} conflict records",
                partition.n_entities(),
                log.observations.len(),
                report.records.len()
            );
        }
        Command::Build => {
            let log = io::read_study(out)?;
            let partition = io::read_partition(&out.join("entities.csv"), &log.observations)?;
            let build = pipeline::stage_build(&log, &partition, out)?;
            eprintln!(
                "build: link-tracing {} nodes / {} arcs; network of networks {} nodes / {} arcs / {} edges",
                build.link_tracing.n_nodes(),
                build.link_tracing.n_arcs(),
                build.network_of_networks.n_nodes(),
                build.network_of_networks.n_arcs(),
                build.network_of_networks.n_edges()
            );
        }
        Command::Stats => {
            let log = io::read_study(out)?;
            let partition = io::read_partition(&out.join("entities.csv"), &log.observations)?;
            let build = pipeline::stage_build(&log, &partition, out)?;
            pipeline::stage_stats(&config, &build, &log, out)?;
            eprintln!("stats: wrote stats.csv, ei_permutation.csv, mixing.csv, alter_summary.csv");
        }
        Command::Fit => {
            let log = io::read_study(out)?;
            let partition = io::read_partition(&out.join("entities.csv"), &log.observations)?;
            let build = pipeline::stage_build(&log, &partition, out)?;
            pipeline::stage_fit(&config, &build, out)?;
            eprintln!("fit: wrote fit.csv and fit_summary.txt");
        }
        Command::Estimate => {
            let log = io::read_study(out)?;
            pipeline::stage_estimate(&config, &log, out)?;
            eprintln!("estimate: wrote estimates.csv and diagnostics.csv");
        }
        Command::Run(_) => {
            let manifest = pipeline::run_pipeline(&config, out)?;
            eprintln!(
                "run: {} artifacts in {} (manifest.txt written)",
                manifest.files.len(),
                out.display()
            );
        }
        Command::Report => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
