//! `mechlab`: run, audit and fuzz facility-location mechanisms from the shell.
//!
//! Exit codes: 0 success, 1 fuzz bound exceeded, 2 audit found a profitable
//! misreport, 64 usage error, 65 invalid input, 66 unreadable input,
//! 70 internal invariant breach.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mechlab_core::audit::{audit_instance, AuditReport};
use mechlab_core::cost::Variant;
use mechlab_core::error::Error;
use mechlab_core::forge::{gen_family, instance_to_json, load_instance, Distribution, FamilySpec};
use mechlab_core::harness::{bound_limit_for_ranks, fuzz, ratio_record, theoretical_bound, FuzzConfig, FuzzSummary};
use mechlab_core::mechanism::{ceil_rank, run_mechanism, MechanismSpec};
use mechlab_core::model::Instance;
use mechlab_core::oracle::optimal_fast;

const EXIT_FUZZ_FAIL: u8 = 1;
const EXIT_WITNESS: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;
const EXIT_INTERNAL: u8 = 70;

#[derive(Parser)]
#[command(name = "mechlab", version, about = "Distributed facility location mechanisms on the line")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism and print representatives and facilities.
    Run(MechArgs),
    /// Print an optimal solution and its cost.
    Optimal(OptimalArgs),
    /// Print mechanism cost, optimal cost, ratio and applicable bound.
    Ratio(RatioArgs),
    /// Search for profitable misreports; exits 2 when one is found.
    Audit(MechArgs),
    /// Worst ratio over seeded random instances.
    Fuzz(FuzzArgs),
    /// Print an instance from a named family.
    Family {
        /// Family, e.g. `sum-lower-k:k=3` or `nine-halves:eps=0.01`.
        #[arg(long)]
        family: FamilySpec,
    },
    /// Evaluate the closed-form two-facility bound.
    Bound(BoundArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Generated family, e.g. `max-lower-k:k=3`.
    #[arg(long)]
    family: Option<FamilySpec>,
}

impl Source {
    fn load(&self) -> Result<Instance, Error> {
        match (&self.instance, &self.family) {
            (Some(path), _) => {
                let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                load_instance(BufReader::new(file))
            }
            (None, Some(family)) => gen_family(family),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args)]
struct MechArgs {
    #[command(flatten)]
    source: Source,
    /// Mechanism, e.g. `sum-k2`, `max-k:k=3`, `param-k2:theta=0.5,l=0.25,r=0.75`.
    #[arg(long)]
    mech: MechanismSpec,
    #[arg(long, value_enum)]
    variant: VariantArg,
}

#[derive(Args)]
struct OptimalArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, value_enum)]
    variant: VariantArg,
}

#[derive(Args)]
struct RatioArgs {
    #[command(flatten)]
    mech: MechArgs,
    /// Also audit for misreports and report the largest gain.
    #[arg(long)]
    audit: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long)]
    mech: MechanismSpec,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    max_groups: usize,
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    /// Number of facilities.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Fail when any trial's ratio exceeds this.
    #[arg(long)]
    bound: Option<f64>,
    /// `uniform`, `two-cluster` or `lattice:steps=N`.
    #[arg(long, default_value = "uniform")]
    distribution: Distribution,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    l: f64,
    #[arg(long)]
    r: f64,
    /// Number of groups.
    #[arg(long)]
    m: usize,
    /// Total number of agents; a multiple of `m`.
    #[arg(long)]
    n: usize,
    #[arg(long, value_enum)]
    variant: VariantArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Sum,
    Max,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sum => Variant::Sum,
            VariantArg::Max => Variant::Max,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MECHLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("MECHLAB_THREADS must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        _ if e.is_internal() => EXIT_INTERNAL,
        Error::Io(_) => EXIT_NO_INPUT,
        _ => EXIT_DATA,
    }
}

fn execute(cli: &Cli) -> Result<u8, Error> {
    let mut out = io::stdout().lock();
    let format = cli.format;
    match &cli.command {
        Command::Run(args) => {
            let instance = args.source.load()?;
            let outcome = run_mechanism(&args.mech, &instance, args.variant.into())?;
            match format {
                Format::Json => write_json(&mut out, &outcome)?,
                Format::Csv => {
                    let mut rows: Vec<PositionRow> = outcome
                        .representatives
                        .iter()
                        .enumerate()
                        .map(|(i, &value)| PositionRow { kind: "representative", index: i, value })
                        .collect();
                    rows.extend(outcome.solution.locations().iter().enumerate().map(|(i, &value)| PositionRow {
                        kind: "facility",
                        index: i,
                        value,
                    }));
                    write_csv(&mut out, rows)?;
                }
            }
            Ok(0)
        }
        Command::Optimal(args) => {
            let instance = args.source.load()?;
            let opt = optimal_fast(&instance, args.variant.into())?;
            match format {
                Format::Json => write_json(&mut out, &opt)?,
                Format::Csv => {
                    let mut rows: Vec<PositionRow> = opt
                        .solution
                        .locations()
                        .iter()
                        .enumerate()
                        .map(|(i, &value)| PositionRow { kind: "facility", index: i, value })
                        .collect();
                    rows.push(PositionRow { kind: "cost", index: 0, value: opt.cost });
                    write_csv(&mut out, rows)?;
                }
            }
            Ok(0)
        }
        Command::Ratio(args) => {
            let instance = args.mech.source.load()?;
            let record = ratio_record(&args.mech.mech, &instance, args.mech.variant.into(), args.audit)?;
            match format {
                Format::Json => write_json(&mut out, &record)?,
                Format::Csv => write_csv(&mut out, [&record])?,
            }
            if !record.within_bound() {
                eprintln!("error: ratio {} exceeds the closed-form bound {:?}", record.ratio, record.bound);
                return Ok(EXIT_INTERNAL);
            }
            Ok(0)
        }
        Command::Audit(args) => {
            let instance = args.source.load()?;
            let report = audit_instance(&args.mech, &instance, args.variant.into())?;
            match format {
                Format::Json => write_json(&mut out, &report)?,
                Format::Csv => write_csv(&mut out, audit_rows(&report))?,
            }
            Ok(if report.has_witness() { EXIT_WITNESS } else { 0 })
        }
        Command::Fuzz(args) => {
            let mut config = FuzzConfig::new(args.mech.clone(), args.variant.into(), args.trials, args.seed);
            config.k = args.k;
            config.groups = (args.k.max(2), args.max_groups);
            config.max_size = args.max_size;
            config.distribution = args.distribution;
            config.bound = args.bound;
            let summary = fuzz(&config)?;
            let verdict = match summary.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "NONE",
            };
            match format {
                Format::Json => write_json(&mut out, &FuzzOutput { verdict, summary: &summary })?,
                Format::Csv => write_csv(&mut out, [FuzzRow::new(verdict, &summary)])?,
            }
            eprintln!("{verdict}: worst ratio {} at trial {}", summary.worst_ratio, summary.worst_trial);
            if summary.closed_form_violations > 0 {
                eprintln!("error: {} trials exceeded their closed-form bound", summary.closed_form_violations);
                return Ok(EXIT_INTERNAL);
            }
            Ok(if summary.pass == Some(false) { EXIT_FUZZ_FAIL } else { 0 })
        }
        Command::Family { family } => {
            let instance = gen_family(family)?;
            match format {
                Format::Json => writeln!(out, "{}", instance_to_json(&instance))?,
                Format::Csv => {
                    let rows = instance.agents().map(|a| AgentRow {
                        group: a.group,
                        index: a.index,
                        position: instance.position(a),
                    });
                    write_csv(&mut out, rows)?;
                }
            }
            Ok(0)
        }
        Command::Bound(args) => {
            let variant = Variant::from(args.variant);
            let bound = theoretical_bound(args.theta, args.l, args.r, args.m, args.n, variant)?;
            let limit = bound_limit_for_ranks(args.theta, ceil_rank(args.l, args.m), ceil_rank(args.r, args.m), args.m, variant);
            let row = BoundRow {
                theta: args.theta,
                l: args.l,
                r: args.r,
                m: args.m,
                n: args.n,
                variant,
                bound,
                limit,
            };
            match format {
                Format::Json => write_json(&mut out, &row)?,
                Format::Csv => write_csv(&mut out, [row])?,
            }
            Ok(0)
        }
    }
}

#[derive(Serialize)]
struct PositionRow {
    kind: &'static str,
    index: usize,
    value: f64,
}

#[derive(Serialize)]
struct AgentRow {
    group: usize,
    index: usize,
    position: f64,
}

#[derive(Serialize)]
struct AuditRow {
    group: usize,
    index: usize,
    max_gain: f64,
    reported: Option<f64>,
    true_cost: Option<f64>,
    deviated_cost: Option<f64>,
}

fn audit_rows(report: &AuditReport) -> impl Iterator<Item = AuditRow> + '_ {
    report.agents.iter().map(|a| AuditRow {
        group: a.agent.group,
        index: a.agent.index,
        max_gain: a.max_gain,
        reported: a.best.as_ref().map(|d| d.reported),
        true_cost: a.best.as_ref().map(|d| d.true_cost),
        deviated_cost: a.best.as_ref().map(|d| d.deviated_cost),
    })
}

#[derive(Serialize)]
struct FuzzOutput<'a> {
    verdict: &'static str,
    #[serde(flatten)]
    summary: &'a FuzzSummary,
}

#[derive(Serialize)]
struct FuzzRow {
    spec: String,
    variant: Variant,
    trials: u64,
    seed: u64,
    worst_ratio: f64,
    worst_trial: u64,
    bound: Option<f64>,
    verdict: &'static str,
    witness: String,
}

impl FuzzRow {
    fn new(verdict: &'static str, s: &FuzzSummary) -> Self {
        Self {
            spec: s.spec.clone(),
            variant: s.variant,
            trials: s.trials,
            seed: s.seed,
            worst_ratio: s.worst_ratio,
            worst_trial: s.worst_trial,
            bound: s.bound,
            verdict,
            witness: instance_to_json(&s.worst_instance),
        }
    }
}

#[derive(Serialize)]
struct BoundRow {
    theta: f64,
    l: f64,
    r: f64,
    m: usize,
    n: usize,
    variant: Variant,
    bound: f64,
    limit: f64,
}

fn write_json(out: &mut impl Write, value: &impl Serialize) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_csv<T: Serialize>(out: &mut impl Write, rows: impl IntoIterator<Item = T>) -> Result<(), Error> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
