use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pqfl_core::adversary::{harvest_decrypt, QuantumOracle};
use pqfl_core::report::{
    dump_transcripts, emit_report, hex, load_transcripts, metrics_to_string, parse_scenario_config, MetricsFormat,
    REFERENCE_OVERHEAD,
};
use pqfl_core::sim::transcript::{tag, AGGREGATOR};
use pqfl_core::sim::{measure_overhead, run_scenario, CryptoSuite, ScenarioConfig};

#[derive(Parser)]
#[command(name = "pqfl", version, about = "Post-quantum federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its metrics.
    Run(RunArgs),
    /// Replay a recorded transcript through the eavesdropper.
    Harvest(HarvestArgs),
    /// Measure round-latency overhead of one suite against another.
    Bench(BenchArgs),
    /// Pretty-print a transcript file.
    Inspect(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for MetricsFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => MetricsFormat::Csv,
            Format::Json => MetricsFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Plaintext,
    RsaToy,
    Pqc,
}

impl From<Suite> for CryptoSuite {
    fn from(s: Suite) -> Self {
        match s {
            Suite::Plaintext => CryptoSuite::Plaintext,
            Suite::RsaToy => CryptoSuite::RsaToy,
            Suite::Pqc => CryptoSuite::Pqc,
        }
    }
}

#[derive(Args)]
struct ScenarioArgs {
    /// JSON scenario document.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        load_config(&self.config, self.seed)
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = parse_scenario_config(&text)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Metrics output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Where to dump the recorded wire traffic.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Markdown summary output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run the eavesdropper over the transcript and include the outcome in the report.
    #[arg(long)]
    harvest: bool,
    /// Include wall-clock phase timings (makes metrics files vary run to run).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct HarvestArgs {
    #[arg(long)]
    transcript: PathBuf,
    /// Scenario the transcript is expected to come from.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fail on a config-hash mismatch instead of warning.
    #[arg(long)]
    strict: bool,
    /// JSON decryption report output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "plaintext")]
    base: Suite,
    #[arg(long, value_enum, default_value = "pqc")]
    variant: Suite,
    /// KEM module rank for the variant (defaults to the config's).
    #[arg(long)]
    variant_kem_rank: Option<usize>,
    /// JSON overhead report output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    transcript: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strict: bool,
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let config = args.scenario.load()?;
    let result = run_scenario(&config)?;
    let metrics = if args.timings {
        result.metrics.clone()
    } else {
        result.metrics.without_timings()
    };
    write_or_print(args.out.as_deref(), &metrics_to_string(&metrics, args.format.into())?)?;
    if let Some(t) = &args.transcript {
        dump_transcripts(t, &result.config_hash, &result.transcripts)?;
    }
    let harvest = args
        .harvest
        .then(|| harvest_decrypt(&result.transcripts, &QuantumOracle::default()));
    if let Some(h) = &harvest {
        eprintln!("harvest: recovered {}/{} messages ({})", h.recovered, h.total_messages, h.method);
    }
    if let Some(r) = &args.report {
        emit_report(&config, &metrics, harvest.as_ref(), r)?;
    }
    Ok(())
}

fn expected_hash(config: Option<&Path>, seed: Option<u64>) -> Result<Option<[u8; 32]>> {
    config.map(|c| load_config(c, seed).map(|c| c.hash())).transpose()
}

fn harvest(args: HarvestArgs) -> Result<()> {
    let expected = expected_hash(args.config.as_deref(), args.seed)?;
    let loaded = load_transcripts(&args.transcript, expected.as_ref(), args.strict)?;
    if let Some(w) = &loaded.warning {
        eprintln!("warning: {w}");
    }
    let report = harvest_decrypt(&loaded.transcripts, &QuantumOracle::default());
    println!("recovered {}/{} messages", report.recovered, report.total_messages);
    println!("method: {}", if report.method.is_empty() { "none" } else { &report.method });
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let config = args.scenario.load()?;
    let base = ScenarioConfig {
        crypto_suite: args.base.into(),
        ..config.clone()
    };
    let mut variant = ScenarioConfig {
        crypto_suite: args.variant.into(),
        ..config
    };
    if let Some(k) = args.variant_kem_rank {
        variant.kem_rank = k;
        variant.validate()?;
    }
    let report = measure_overhead(&base, &variant)?;
    println!(
        "overhead ratio ({} vs {}): {:.6}",
        variant.crypto_suite.name(),
        base.crypto_suite.name(),
        report.ratio
    );
    println!("reference figure (externally reported, not asserted): {REFERENCE_OVERHEAD}");
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn tag_name(t: Option<u8>) -> &'static str {
    match t {
        Some(tag::SESSION) => "session",
        Some(tag::KEM_PUBLIC_KEY) => "kem-public-key",
        Some(tag::SIG_PUBLIC_KEY) => "sig-public-key",
        Some(tag::RSA_PUBLIC_KEY) => "rsa-public-key",
        Some(tag::UPLOAD_PLAINTEXT) => "upload/plaintext",
        Some(tag::UPLOAD_RSA) => "upload/rsa",
        Some(tag::UPLOAD_PQC) => "upload/pqc",
        Some(tag::BROADCAST) => "broadcast",
        _ => "unknown",
    }
}

fn inspect(args: InspectArgs) -> Result<()> {
    let expected = expected_hash(args.config.as_deref(), args.seed)?;
    let loaded = load_transcripts(&args.transcript, expected.as_ref(), args.strict)?;
    if let Some(w) = &loaded.warning {
        eprintln!("warning: {w}");
    }
    println!("config hash {}", hex(&loaded.config_hash));
    println!("{} rounds", loaded.transcripts.len());
    for t in &loaded.transcripts {
        println!("round {}: {} messages, {} bytes", t.round, t.messages.len(), t.bytes_on_wire());
        for m in &t.messages {
            let sender = if m.sender == AGGREGATOR {
                "aggregator".to_string()
            } else {
                format!("client {}", m.sender)
            };
            println!("  {:?} {sender:<12} {:<18} {} bytes", m.phase, tag_name(m.body_tag()), m.bytes.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Harvest(a) => harvest(a),
        Command::Bench(a) => bench(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
