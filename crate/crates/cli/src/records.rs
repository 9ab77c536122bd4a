//! Output records and their serialization.
//!
//! Every answer the CLI emits is a marginal record: one per variable per
//! slice, written as one JSON object per line on standard output, or as CSV
//! rows (one per state) when `--format csv` is selected. Diagnostics go to
//! standard error.

use std::io::Write;

use serde::Serialize;

/// One emitted marginal distribution.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalRecord {
    pub t: u32,
    pub variable: String,
    /// `filtered`, `smoothed`, or `forecast:<method>`.
    pub mode: String,
    /// `(state label, probability)` pairs in state order.
    pub distribution: Vec<(String, f64)>,
    /// Cumulative probability of all evidence, filtered mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_mass: Option<f64>,
    /// Per-state standard error, Monte-Carlo forecasts only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rng: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approximate: Option<bool>,
}

impl MarginalRecord {
    pub fn new(t: u32, variable: &str, mode: &str, distribution: Vec<(String, f64)>) -> Self {
        MarginalRecord {
            t,
            variable: variable.to_string(),
            mode: mode.to_string(),
            distribution,
            evidence_mass: None,
            std_error: None,
            samples: None,
            seed: None,
            rng: None,
            approximate: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    JsonLines,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json-lines" | "jsonl" => Ok(OutputFormat::JsonLines),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown output format '{other}' (json-lines or csv)")),
        }
    }
}

/// Streams records in the chosen format.
pub struct RecordWriter<W: Write> {
    format: OutputFormat,
    out: W,
    csv_header_written: bool,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(format: OutputFormat, out: W) -> Self {
        RecordWriter { format, out, csv_header_written: false }
    }

    pub fn emit(&mut self, record: &MarginalRecord) -> std::io::Result<()> {
        match self.format {
            OutputFormat::JsonLines => {
                let line = serde_json::to_string(record).expect("record serializes");
                writeln!(self.out, "{line}")
            }
            OutputFormat::Csv => self.emit_csv(record),
        }
    }

    fn emit_csv(&mut self, record: &MarginalRecord) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().from_writer(vec![]);
        if !self.csv_header_written {
            w.write_record([
                "t",
                "variable",
                "mode",
                "state",
                "probability",
                "evidence_mass",
                "std_error",
                "samples",
                "seed",
                "rng",
                "approximate",
            ])?;
            self.csv_header_written = true;
        }
        let opt = |o: Option<String>| o.unwrap_or_default();
        for (i, (state, p)) in record.distribution.iter().enumerate() {
            w.write_record([
                record.t.to_string(),
                record.variable.clone(),
                record.mode.clone(),
                state.clone(),
                format!("{p:?}"),
                opt(record.evidence_mass.map(|m| format!("{m:?}"))),
                opt(record.std_error.as_ref().map(|se| format!("{:?}", se[i]))),
                opt(record.samples.map(|n| n.to_string())),
                opt(record.seed.map(|s| s.to_string())),
                opt(record.rng.clone()),
                opt(record.approximate.map(|a| a.to_string())),
            ])?;
        }
        let bytes = w.into_inner().expect("csv buffer");
        self.out.write_all(&bytes)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}
