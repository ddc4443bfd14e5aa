//! `seqvar`: test whether the order of a tool's up/down history matters for
//! cycle time.
//!
//! Exit codes: 0 for a decisive or not-significant verdict, 2 when the budget
//! ran out with a verdict still undecided (any rate, for sweeps), 1 for any
//! input or usage error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use seqvar_core::experiment::{default_rates, Progress};
use seqvar_core::{
    io, EventLogOptions, Runner, ShuffleMode, SimConfig, SweepRow, SynthSpec, UpDownSequence,
    UtilizationBasis, Verdict,
};

#[derive(Parser)]
#[command(name = "seqvar", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test one up/down history and write the experiment report.
    Test {
        #[command(flatten)]
        common: CommonArgs,
        /// Report file (JSON).
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// Write the report with every cycle time rescaled so that μ = 100.
        #[arg(long)]
        normalized: bool,
    },
    /// Run the test at several utilization rates and write the operational
    /// curve as CSV.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated utilization rates in (0,1).
        #[arg(long, value_delimiter = ',', default_values_t = default_rates())]
        rates: Vec<f64>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic up/down history as an event-log CSV.
    Synth {
        /// Generator, e.g. `iid:exp:50:lognorm:5:0.8`,
        /// `autocorr:exp:50:lognorm:5:0.8:8` or `periodic:168:8:exp0.5:0.02`.
        spec: SynthSpec,
        /// Length of the history in hours.
        #[arg(long, default_value_t = 8760.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Event log CSV (`state,start,end`).
    #[arg(required_unless_present = "synth", conflicts_with = "synth")]
    log: Option<PathBuf>,
    /// Use a synthetic history instead of a log.
    #[arg(long)]
    synth: Option<SynthSpec>,
    /// Horizon of the synthetic history, in hours.
    #[arg(long, default_value_t = 8760.0, requires = "synth")]
    horizon: f64,
    /// Merge consecutive log rows with the same state.
    #[arg(long)]
    coalesce: bool,
    /// Target utilization in (0,1).
    #[arg(long, default_value_t = 0.8)]
    utilization: f64,
    /// What the utilization is relative to.
    #[arg(long, value_enum, default_value_t = Basis::Uptime)]
    utilization_basis: Basis,
    /// Process time per agent, in hours.
    #[arg(long, default_value_t = 1.0)]
    process_time: f64,
    /// Master seed; all scenarios and permutations derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Minimum grid as SEQUENCESxSCENARIOS.
    #[arg(long, default_value = "20x20")]
    min_grid: Grid,
    /// Maximum number of simulation runs.
    #[arg(long, default_value_t = 10_000)]
    max_budget: u64,
    /// Permute (up, down) pairs together instead of independently.
    #[arg(long)]
    paired_shuffle: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "SEQVAR_JOBS")]
    jobs: Option<usize>,
    /// Do not print progress to standard error.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Uptime,
    Wallclock,
}

#[derive(Clone, Copy, Debug)]
struct Grid {
    sequences: usize,
    scenarios: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, m) = s
            .split_once(['x', 'X', '×'])
            .ok_or_else(|| format!("expected NxM, got `{s}`"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad grid size `{v}`: {e}"))
        };
        Ok(Grid {
            sequences: parse(n)?,
            scenarios: parse(m)?,
        })
    }
}

impl CommonArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            process_time: self.process_time,
            utilization: self.utilization,
            max_budget: self.max_budget,
            min_sequences: self.min_grid.sequences,
            min_scenarios: self.min_grid.scenarios,
            shuffle_mode: if self.paired_shuffle {
                ShuffleMode::Paired
            } else {
                ShuffleMode::Independent
            },
            utilization_basis: match self.utilization_basis {
                Basis::Uptime => UtilizationBasis::Uptime,
                Basis::Wallclock => UtilizationBasis::Wallclock,
            },
            ..SimConfig::default()
        }
    }

    fn load(&self) -> Result<(String, UpDownSequence)> {
        match (&self.log, &self.synth) {
            (Some(path), None) => {
                let text = read_input(path)?;
                let options = EventLogOptions {
                    coalesce: self.coalesce,
                };
                let seq = io::parse_event_log_with(&text, options)
                    .with_context(|| format!("invalid event log {}", path.display()))?;
                let label = path.file_stem().map_or_else(
                    || path.display().to_string(),
                    |s| s.to_string_lossy().into(),
                );
                Ok((label, seq))
            }
            (None, Some(spec)) => Ok((spec.to_string(), spec.generate(self.horizon, self.seed)?)),
            _ => bail!("give exactly one of an event log or --synth"),
        }
    }

    fn runner(&self) -> Runner {
        let mut runner = Runner::new();
        if let Some(jobs) = self.jobs {
            runner = runner.jobs(jobs);
        }
        if !self.quiet {
            runner = runner.on_progress(report_progress);
        }
        runner
    }
}

fn read_input(path: &Path) -> Result<String> {
    if !path.exists() {
        bail!("no such input: {}", path.display());
    }
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn report_progress(p: &Progress) {
    eprintln!(
        "runs {}/{}  grid {}x{}  {}",
        p.runs_used, p.max_budget, p.n, p.m, p.verdict
    );
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

/// 2 when any verdict is still undecided, 0 otherwise.
fn exit_for(verdicts: impl IntoIterator<Item = Verdict>) -> ExitCode {
    if verdicts.into_iter().any(|v| v == Verdict::Undecided) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Test {
            common,
            out,
            normalized,
        } => {
            let (label, s0) = common.load()?;
            let report = common.runner().run(&s0, &common.config(), common.seed)?;
            let written = if normalized {
                io::normalize_report(&report)?
            } else {
                report.clone()
            };
            write_output(Some(&out), &io::write_report(&written)?)?;
            println!("{}", report.table_row(&label));
            Ok(exit_for([report.verdict]))
        }
        Command::Sweep { common, rates, out } => {
            let (_, s0) = common.load()?;
            let reports = common
                .runner()
                .sweep(&s0, &rates, &common.config(), common.seed)?;
            let rows: Vec<SweepRow> = reports.iter().map(SweepRow::from_report).collect();
            write_output(out.as_deref(), &io::write_sweep(&rows)?)?;
            if !common.quiet {
                eprintln!("seed {}", common.seed);
            }
            Ok(exit_for(rows.iter().map(|r| r.verdict)))
        }
        Command::Synth {
            spec,
            horizon,
            seed,
            out,
        } => {
            let seq = spec.generate(horizon, seed)?;
            write_output(out.as_deref(), &io::write_event_log(&seq)?)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // exit code 2 is reserved for undecided verdicts
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
