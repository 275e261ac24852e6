//! `mlcache`: tradeoff curves, cache splits, λ-sweeps, converse bounds and
//! exhaustive scheme simulation for multi-library caching networks.
//!
//! Exit status: 0 on success, 1 when a verification or oracle check fails,
//! 2 on bad input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use multilib_caching::allocation::{
    brute_force_allocate, check_split_conditions, greedy_allocate, lambda_sweep,
    proportional_allocation, Allocation, SlopeKey, DEFAULT_BRUTE_FORCE_CAP,
};
use multilib_caching::converse::{concatenate, conjecture_gap};
use multilib_caching::model::DEFAULT_DEMAND_CAP;
use multilib_caching::rational::{format_rational, from_usize, parse_rational, to_decimal};
use multilib_caching::sim::{self, Dump, SimOptions, Simulation, DEFAULT_MAX_BASE_SIZE};
use multilib_caching::{Error, NetworkConfig, PiecewiseLinearTradeoff, Rational, TradeoffSource};

#[derive(Parser, Debug)]
#[command(
    name = "mlcache",
    version,
    about = "Coded caching with multiple file libraries"
)]
struct Cli {
    /// Network configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, `-` for stdout.
    #[arg(long, global = true, default_value = "-")]
    out: String,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Seed for file contents in `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Corner points and a sampled curve of a single-library tradeoff.
    Tradeoff(TradeoffArgs),
    /// Greedy cache split, optionally checked against brute force.
    Allocate(AllocateArgs),
    /// Rate of the split (λM, (1−λ)M) for two libraries.
    Sweep(SweepArgs),
    /// Concatenated-library coefficients and the achievable/converse gap.
    Converse(KindArgs),
    /// Place, deliver and decode every demand vector bit by bit.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct TradeoffArgs {
    #[arg(long = "n")]
    num_files: usize,
    #[arg(long = "k")]
    num_users: usize,
    #[arg(long, default_value = "auto")]
    kind: TradeoffSource,
    /// Uniform intervals on [0, N] in the sampled curve.
    #[arg(long, default_value_t = 8)]
    samples: usize,
}

#[derive(Args, Debug)]
struct KindArgs {
    /// Tradeoff source, one for all libraries or one per library.
    #[arg(long, value_delimiter = ',', default_value = "auto")]
    kind: Vec<TradeoffSource>,
}

#[derive(Args, Debug)]
struct AllocateArgs {
    #[command(flatten)]
    kinds: KindArgs,
    /// Also run the brute-force oracle on a grid with this step.
    #[arg(long, value_parser = parse_rational_arg)]
    oracle: Option<Rational>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    kinds: KindArgs,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Also write the segment table (CSV) here.
    #[arg(long)]
    segments: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AllocSource {
    Greedy,
    Proportional,
    Explicit,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = AllocSource::Greedy)]
    alloc: AllocSource,
    /// Per-library memory for `--alloc explicit`, e.g. `2/5,3/5`.
    #[arg(long, value_delimiter = ',', value_parser = parse_rational_arg)]
    split: Vec<Rational>,
    /// Base file size F in bits (default: smallest that divides evenly).
    #[arg(long)]
    bits: Option<u64>,
    /// Largest F chosen automatically.
    #[arg(long, default_value_t = DEFAULT_MAX_BASE_SIZE)]
    max_bits: u64,
    #[arg(long, default_value_t = DEFAULT_DEMAND_CAP)]
    demand_cap: u64,
    /// Write files, caches and every transcript in the binary dump format.
    #[arg(long)]
    dump: Option<PathBuf>,
}

fn parse_rational_arg(s: &str) -> Result<Rational, String> {
    parse_rational(s).map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_verification_failure() { 1 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

#[derive(Serialize)]
struct RunRecord {
    command: &'static str,
    config_digest: Option<String>,
    inputs: Value,
    outputs: Value,
    version: &'static str,
    seed: Option<u64>,
}

struct Rendered {
    record: RunRecord,
    csv: Vec<u8>,
    /// Set when the run produced output but a check failed.
    failure: Option<Failure>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mlcache: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let rendered = match &cli.command {
        Command::Tradeoff(a) => cmd_tradeoff(a)?,
        Command::Allocate(a) => cmd_allocate(&load_config(cli)?, a)?,
        Command::Sweep(a) => cmd_sweep(&load_config(cli)?, a)?,
        Command::Converse(a) => cmd_converse(&load_config(cli)?, a)?,
        Command::Simulate(a) => cmd_simulate(&load_config(cli)?, a, cli.seed.unwrap_or(0))?,
    };
    let bytes = match cli.format {
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(&rendered.record).expect("record serializes");
            v.push(b'\n');
            v
        }
        Format::Csv => rendered.csv,
    };
    write_out(&cli.out, &bytes)?;
    match rendered.failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn write_out(target: &str, bytes: &[u8]) -> Result<(), Failure> {
    let result = if target == "-" {
        match io::stdout().lock().write_all(bytes) {
            // a closed reader (`| head`) is not an error
            Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
            other => other,
        }
    } else {
        fs::write(target, bytes)
    };
    result.map_err(|e| input_error(format!("cannot write {target}: {e}")))
}

fn load_config(cli: &Cli) -> Result<NetworkConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| input_error("this command needs --config <path>"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| input_error(format!("cannot read {}: {e}", path.display())))?;
    Ok(NetworkConfig::from_json(&text)?)
}

/// SHA-256 of the canonical (validated, compact) configuration JSON.
fn config_digest(config: &NetworkConfig) -> String {
    hex::encode(Sha256::digest(config.to_json().as_bytes()))
}

fn record(
    command: &'static str,
    config: Option<&NetworkConfig>,
    inputs: Value,
    outputs: Value,
) -> RunRecord {
    RunRecord {
        command,
        config_digest: config.map(config_digest),
        inputs,
        outputs,
        version: env!("CARGO_PKG_VERSION"),
        seed: None,
    }
}

fn config_value(config: &NetworkConfig) -> Value {
    serde_json::from_str(&config.to_json()).expect("config JSON parses")
}

fn tradeoffs_for(
    config: &NetworkConfig,
    kinds: &[TradeoffSource],
) -> Result<Vec<PiecewiseLinearTradeoff>, Failure> {
    let per_library: Vec<TradeoffSource> = match kinds.len() {
        1 => vec![kinds[0]; config.num_libraries()],
        n if n == config.num_libraries() => kinds.to_vec(),
        n => {
            return Err(input_error(format!(
                "{n} tradeoff kinds for {} libraries",
                config.num_libraries()
            )))
        }
    };
    per_library
        .iter()
        .zip(&config.libraries)
        .map(|(k, lib)| {
            k.build(lib.num_files, config.num_users)
                .map_err(Failure::from)
        })
        .collect()
}

fn kinds_value(kinds: &[TradeoffSource]) -> Value {
    json!(kinds.iter().map(ToString::to_string).collect::<Vec<_>>())
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Exact and decimal renderings of a rational, in that order.
fn both(q: &Rational) -> [String; 2] {
    [format_rational(q), to_decimal(q)]
}

fn cmd_tradeoff(a: &TradeoffArgs) -> Result<Rendered, Failure> {
    if a.samples == 0 {
        return Err(input_error("--samples must be positive"));
    }
    let t = a.kind.build(a.num_files, a.num_users)?;
    let corners = t.corners();
    let n = from_usize(a.num_files);
    let mut grid: Vec<Rational> = (0..=a.samples)
        .map(|i| &n * from_usize(i) / from_usize(a.samples))
        .collect();
    grid.extend(corners.iter().map(|c| c.memory.clone()));
    grid.sort();
    grid.dedup();
    let curve: Vec<(Rational, Rational)> = grid
        .into_iter()
        .map(|m| {
            let r = t.evaluate(&m).expect("grid is non-negative");
            (m, r)
        })
        .collect();

    let corner_json: Vec<Value> = corners
        .iter()
        .map(|c| json!({"memory": format_rational(&c.memory), "rate": format_rational(&c.rate)}))
        .collect();
    let curve_json: Vec<Value> = curve
        .iter()
        .map(|(m, r)| json!({"memory": format_rational(m), "rate": format_rational(r)}))
        .collect();
    let rows = curve
        .iter()
        .map(|(m, r)| {
            let is_corner = corners.iter().any(|c| c.memory == *m);
            let [mq, md] = both(m);
            let [rq, rd] = both(r);
            vec![mq, rq, md, rd, is_corner.to_string()]
        })
        .collect();
    Ok(Rendered {
        record: record(
            "tradeoff",
            None,
            json!({"n": a.num_files, "k": a.num_users, "kind": a.kind.to_string(), "samples": a.samples}),
            json!({"label": t.label(), "kind": t.kind(), "corners": corner_json, "curve": curve_json}),
        ),
        csv: csv_bytes(
            &["memory", "rate", "memory_decimal", "rate_decimal", "corner"],
            rows,
        ),
        failure: None,
    })
}

fn cmd_allocate(config: &NetworkConfig, a: &AllocateArgs) -> Result<Rendered, Failure> {
    let tradeoffs = tradeoffs_for(config, &a.kinds.kind)?;
    let trace = greedy_allocate(config, &tradeoffs)?;
    let conditions = check_split_conditions(
        config,
        &trace.final_allocation,
        &tradeoffs,
        SlopeKey::PerUnitMemory,
    );

    let mut failure = None;
    if !conditions.is_empty() {
        failure = Some(Failure {
            code: 1,
            message: format!(
                "greedy split violates its optimality conditions: {}",
                conditions.join("; ")
            ),
        });
    }
    let mut outputs = json!({
        "trace": trace,
        "conditions_violated": conditions,
    });
    if let Some(step) = &a.oracle {
        let oracle = brute_force_allocate(config, &tradeoffs, step, DEFAULT_BRUTE_FORCE_CAP)?;
        let agrees = oracle.rate == trace.rate;
        if !agrees {
            failure = Some(Failure {
                code: 1,
                message: format!(
                    "oracle disagreement: greedy rate {} at {:?}, brute force rate {} at {:?}",
                    format_rational(&trace.rate),
                    trace
                        .final_allocation
                        .per_library
                        .iter()
                        .map(format_rational)
                        .collect::<Vec<_>>(),
                    format_rational(&oracle.rate),
                    oracle
                        .allocation
                        .per_library
                        .iter()
                        .map(format_rational)
                        .collect::<Vec<_>>(),
                ),
            });
        }
        outputs["oracle"] = json!({
            "grid_step": format_rational(step),
            "result": oracle,
            "agrees": agrees,
        });
    }

    let rows = trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let [dq, dd] = both(&s.delta);
            let [aq, ad] = both(&s.allocated);
            vec![
                (i + 1).to_string(),
                s.library.to_string(),
                s.segment.to_string(),
                dq,
                aq,
                dd,
                ad,
            ]
        })
        .collect();
    let inputs = json!({
        "config": config_value(config),
        "kind": kinds_value(&a.kinds.kind),
        "oracle": a.oracle.as_ref().map(format_rational),
    });
    Ok(Rendered {
        record: record("allocate", Some(config), inputs, outputs),
        csv: csv_bytes(
            &[
                "step",
                "library",
                "segment",
                "delta",
                "allocated",
                "delta_decimal",
                "allocated_decimal",
            ],
            rows,
        ),
        failure,
    })
}

fn segment_rows(sweep: &multilib_caching::allocation::LambdaSweep) -> Vec<u8> {
    let rows = sweep
        .segments
        .iter()
        .map(|s| {
            let mut row = Vec::new();
            for q in [&s.start, &s.end, &s.intercept, &s.slope] {
                row.push(format_rational(q));
            }
            for q in [&s.start, &s.end, &s.intercept, &s.slope] {
                row.push(to_decimal(q));
            }
            row
        })
        .collect();
    csv_bytes(
        &[
            "start",
            "end",
            "intercept",
            "slope",
            "start_decimal",
            "end_decimal",
            "intercept_decimal",
            "slope_decimal",
        ],
        rows,
    )
}

fn cmd_sweep(config: &NetworkConfig, a: &SweepArgs) -> Result<Rendered, Failure> {
    let tradeoffs = tradeoffs_for(config, &a.kinds.kind)?;
    let sweep = lambda_sweep(config, &tradeoffs, a.samples)?;
    if let Some(path) = &a.segments {
        write_out(&path.to_string_lossy(), &segment_rows(&sweep))?;
    }
    let rows = sweep
        .samples
        .iter()
        .map(|s| {
            let [lq, ld] = both(&s.lambda);
            let [rq, rd] = both(&s.rate);
            vec![lq, rq, ld, rd]
        })
        .collect();
    let inputs = json!({
        "config": config_value(config),
        "kind": kinds_value(&a.kinds.kind),
        "samples": a.samples,
    });
    Ok(Rendered {
        record: record(
            "sweep",
            Some(config),
            inputs,
            serde_json::to_value(&sweep).expect("sweep serializes"),
        ),
        csv: csv_bytes(&["lambda", "rate", "lambda_decimal", "rate_decimal"], rows),
        failure: None,
    })
}

fn cmd_converse(config: &NetworkConfig, a: &KindArgs) -> Result<Rendered, Failure> {
    let tradeoffs = tradeoffs_for(config, &a.kind)?;
    let lib = concatenate(config);
    let gap = conjecture_gap(config, &tradeoffs)?;
    let rows = lib
        .betas
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let level = lib.level(i + 1).expect("n within range");
            let [bq, bd] = both(b);
            vec![
                (i + 1).to_string(),
                lib.order[level - 1].to_string(),
                bq,
                bd,
            ]
        })
        .collect();
    let inputs = json!({"config": config_value(config), "kind": kinds_value(&a.kind)});
    let outputs = json!({"concatenated": lib, "gap": gap});
    Ok(Rendered {
        record: record("converse", Some(config), inputs, outputs),
        csv: csv_bytes(&["n", "first_library", "beta", "beta_decimal"], rows),
        failure: None,
    })
}

fn cmd_simulate(config: &NetworkConfig, a: &SimulateArgs, seed: u64) -> Result<Rendered, Failure> {
    let alloc = match a.alloc {
        AllocSource::Greedy => {
            greedy_allocate(config, &sim::scheme_tradeoffs(config)?)?.final_allocation
        }
        AllocSource::Proportional => proportional_allocation(config),
        AllocSource::Explicit => {
            if a.split.is_empty() {
                return Err(input_error("--alloc explicit needs --split"));
            }
            Allocation::new(a.split.clone())
        }
    };
    let options = SimOptions {
        base_size: a.bits,
        max_base_size: a.max_bits,
        demand_cap: a.demand_cap,
    };
    let inputs = json!({
        "config": config_value(config),
        "alloc": format!("{:?}", a.alloc).to_lowercase(),
        "split": alloc,
        "bits": a.bits,
        "max_bits": a.max_bits,
    });
    let report = sim::verify_all(config, &alloc, &options, seed);
    if let Some(path) = &a.dump {
        write_dump(path, config, &alloc, &options, seed)?;
    }
    let report = report?;
    let rows = report
        .libraries
        .iter()
        .map(|l| {
            vec![
                l.library.to_string(),
                l.file_bits.to_string(),
                l.cache_bits.to_string(),
                l.max_payload_bits.to_string(),
            ]
        })
        .collect();
    let mut rec = record(
        "simulate",
        Some(config),
        inputs,
        serde_json::to_value(&report).expect("report serializes"),
    );
    rec.seed = Some(seed);
    Ok(Rendered {
        record: rec,
        csv: csv_bytes(
            &["library", "file_bits", "cache_bits", "max_payload_bits"],
            rows,
        ),
        failure: None,
    })
}

fn write_dump(
    path: &Path,
    config: &NetworkConfig,
    alloc: &Allocation,
    options: &SimOptions,
    seed: u64,
) -> Result<(), Failure> {
    let sim = Simulation::new(config, alloc, options, seed)?;
    let transcripts = config
        .enumerate_demands(options.demand_cap)?
        .map(|d| sim.deliver(&d))
        .collect::<Result<Vec<_>, _>>()?;
    let bytes = Dump::new(&sim.store, &sim.placement, &transcripts).encode();
    fs::write(path, bytes).map_err(|e| input_error(format!("cannot write {}: {e}", path.display())))
}
