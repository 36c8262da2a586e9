//! Config parsing, metrics files, transcript files and markdown reports.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::DecryptionReport;
use crate::error::{Error, Result};
use crate::sim::transcript::{decode_transcripts, encode_transcripts, RoundTranscript};
use crate::sim::{Metrics, ScenarioConfig};

/// Parses and validates a JSON scenario. Unknown keys are errors, and every
/// error names the offending field.
pub fn parse_scenario_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.inner().to_string();
        let field = match (path.as_str(), message.strip_prefix("missing field `")) {
            (".", Some(rest)) => rest.split('`').next().unwrap_or(".").to_string(),
            _ => path,
        };
        Error::Config { field, message }
    })?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsFormat {
    Csv,
    Json,
}

impl FromStr for MetricsFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MetricsFormat::Csv),
            "json" => Ok(MetricsFormat::Json),
            other => Err(Error::InvalidArgument {
                field: "format".into(),
                reason: format!("`{other}` is not one of csv, json"),
            }),
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "round",
    "loss",
    "accuracy",
    "contributors",
    "excluded",
    "bytes",
    "phaseA_s",
    "phaseB_s",
    "phaseC_s",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per round after the header, then a `# final` trailer line.
pub fn metrics_to_csv(metrics: &Metrics) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in &metrics.rounds {
        w.write_record([
            r.round.to_string(),
            r.loss.to_string(),
            r.accuracy.to_string(),
            r.contributors.to_string(),
            r.excluded.to_string(),
            r.bytes.to_string(),
            opt(r.phase_a_s),
            opt(r.phase_b_s),
            opt(r.phase_c_s),
        ])
        .map_err(io)?;
    }
    let mut out = String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.to_string()))?).expect("ascii");
    let f = &metrics.final_;
    writeln!(
        out,
        "# final accuracy={} loss={} overhead_ratio={}",
        f.accuracy,
        f.loss,
        f.overhead_ratio.map_or("NA".to_string(), |r| r.to_string())
    )
    .unwrap();
    Ok(out)
}

pub fn metrics_to_string(metrics: &Metrics, format: MetricsFormat) -> Result<String> {
    match format {
        MetricsFormat::Csv => metrics_to_csv(metrics),
        MetricsFormat::Json => {
            let mut s = serde_json::to_string_pretty(metrics).map_err(|e| Error::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

pub fn write_metrics(metrics: &Metrics, format: MetricsFormat, path: &Path) -> Result<()> {
    fs::write(path, metrics_to_string(metrics, format)?)?;
    Ok(())
}

/// A transcript file's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedTranscripts {
    pub config_hash: [u8; 32],
    pub transcripts: Vec<RoundTranscript>,
    /// Set when the hash did not match and `strict` was off.
    pub warning: Option<String>,
}

pub fn dump_transcripts(path: &Path, config_hash: &[u8; 32], transcripts: &[RoundTranscript]) -> Result<()> {
    fs::write(path, encode_transcripts(config_hash, transcripts))?;
    Ok(())
}

/// Loads a transcript file, checking its config hash against `expected`
/// when given. A mismatch is a warning unless `strict`.
pub fn load_transcripts(path: &Path, expected: Option<&[u8; 32]>, strict: bool) -> Result<LoadedTranscripts> {
    let bytes = fs::read(path)?;
    let (config_hash, transcripts) = decode_transcripts(&bytes)?;
    let mut warning = None;
    if let Some(exp) = expected {
        if exp != &config_hash {
            if strict {
                return Err(Error::TranscriptHashMismatch);
            }
            warning = Some(format!(
                "transcript config hash {} does not match the declared scenario ({})",
                hex(&config_hash),
                hex(exp)
            ));
        }
    }
    Ok(LoadedTranscripts {
        config_hash,
        transcripts,
        warning,
    })
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Externally reported figures, printed only as labeled context.
pub const REFERENCE_OVERHEAD: &str = "18.7% latency overhead";
pub const REFERENCE_ACCURACY: &str = "97.6% detection accuracy";

/// Markdown summary: scenario, convergence table, overhead, and (when given)
/// the harvest outcome.
pub fn render_report(config: &ScenarioConfig, metrics: &Metrics, harvest: Option<&DecryptionReport>) -> String {
    let mut s = String::new();
    let c = config;
    writeln!(s, "# Scenario report\n").unwrap();
    writeln!(s, "## Scenario\n").unwrap();
    writeln!(s, "| setting | value |\n|---|---|").unwrap();
    let rows = [
        ("crypto suite", c.crypto_suite.name().to_string()),
        ("clients", c.n_clients.to_string()),
        ("rounds", c.rounds.to_string()),
        ("aggregation", serde_json::to_string(&c.agg_rule).unwrap()),
        ("clipping", serde_json::to_string(&c.clip).unwrap()),
        ("differential privacy", serde_json::to_string(&c.dp).unwrap()),
        ("attack", serde_json::to_string(&c.attack).unwrap()),
        ("data", serde_json::to_string(&c.data).unwrap()),
        ("seed", c.seed.to_string()),
    ];
    for (k, v) in rows {
        writeln!(s, "| {k} | `{v}` |").unwrap();
    }
    writeln!(s, "\n## Convergence\n").unwrap();
    writeln!(s, "| round | loss | accuracy | contributors | excluded | bytes |\n|---|---|---|---|---|---|").unwrap();
    for r in &metrics.rounds {
        writeln!(
            s,
            "| {} | {:.6} | {:.4} | {} | {} | {} |",
            r.round, r.loss, r.accuracy, r.contributors, r.excluded, r.bytes
        )
        .unwrap();
    }
    writeln!(s, "\nFinal accuracy: {:.4} (loss {:.6})", metrics.final_.accuracy, metrics.final_.loss).unwrap();
    writeln!(s, "\n## Overhead\n").unwrap();
    match metrics.final_.overhead_ratio {
        Some(r) => writeln!(s, "Measured overhead ratio (T_variant - T_base) / T_base: {r:.4}[^ref]").unwrap(),
        None => writeln!(s, "Overhead ratio not measured in this run (see `pqfl bench`).[^ref]").unwrap(),
    }
    if let Some(h) = harvest {
        writeln!(s, "\n## Harvest-now-decrypt-later\n").unwrap();
        writeln!(s, "recovered {}/{} messages\n", h.recovered, h.total_messages).unwrap();
        writeln!(s, "Method: {}", if h.method.is_empty() { "none" } else { &h.method }).unwrap();
    }
    writeln!(
        s,
        "\n[^ref]: Reference figures, externally reported and not asserted or reproduced here: \
         {REFERENCE_OVERHEAD}, {REFERENCE_ACCURACY}."
    )
    .unwrap();
    s
}

pub fn emit_report(
    config: &ScenarioConfig,
    metrics: &Metrics,
    harvest: Option<&DecryptionReport>,
    path: &Path,
) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(render_report(config, metrics, harvest).as_bytes())?;
    Ok(())
}
