//! Session drivers behind the CLI subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use dpn_core::forecast::{
    forecast_with_cap, ForecastMethod, ForecastQuery, DEFAULT_RESOURCE_CAP,
};
use dpn_core::graph::Heuristic;
use dpn_core::model::{DpnModel, Evidence, VarId};
use dpn_core::series_io;
use dpn_core::window::ModelSeries;

use crate::format::{self, FormatError};
use crate::records::{MarginalRecord, OutputFormat, RecordWriter};

/// Errors carrying the process exit code: 1 validation, 2 inference, 3 i/o.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Inference(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Inference(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Unreadable { .. }
            | FormatError::Json { .. }
            | FormatError::Evidence { .. } => CliError::Io(e.to_string()),
            FormatError::UnknownName { .. } | FormatError::UnknownState { .. } => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<dpn_core::window::WindowError> for CliError {
    fn from(e: dpn_core::window::WindowError) -> Self {
        CliError::Inference(e.to_string())
    }
}

impl From<dpn_core::smooth::SmoothError> for CliError {
    fn from(e: dpn_core::smooth::SmoothError) -> Self {
        CliError::Inference(e.to_string())
    }
}

impl From<dpn_core::forecast::ForecastError> for CliError {
    fn from(e: dpn_core::forecast::ForecastError) -> Self {
        CliError::Inference(e.to_string())
    }
}

impl From<series_io::SeriesIoError> for CliError {
    fn from(e: series_io::SeriesIoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub fn parse_heuristic(name: &str) -> Result<Heuristic, CliError> {
    match name {
        "min-weight" => Ok(Heuristic::MinWeight),
        "min-fill" => Ok(Heuristic::MinFill),
        other => Err(CliError::Validation(format!(
            "unknown triangulation heuristic '{other}' (min-weight or min-fill)"
        ))),
    }
}

/// Resource cap: explicit flag, then `DPN_RESOURCE_CAP`, then the default.
pub fn resolve_cap(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(cap) = flag {
        return Ok(cap);
    }
    match std::env::var("DPN_RESOURCE_CAP") {
        Ok(v) => v.trim().parse().map_err(|_| {
            CliError::Validation(format!("DPN_RESOURCE_CAP is not a cell count: '{v}'"))
        }),
        Err(_) => Ok(DEFAULT_RESOURCE_CAP),
    }
}

/// Validates a model file. Violations are the command's output; exit 0 only
/// when the report is empty.
pub fn cmd_validate(model_path: &Path, out: &mut impl Write) -> Result<(), CliError> {
    let model = format::parse_model(model_path)?;
    let report = model.validate();
    for v in &report {
        writeln!(out, "{v}")?;
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{}: {} violation(s)",
            model_path.display(),
            report.len()
        )))
    }
}

fn parse_and_validate(model_path: &Path) -> Result<DpnModel, CliError> {
    let model = format::parse_model(model_path)?;
    let report = model.validate();
    if !report.is_empty() {
        let lines: Vec<String> = report.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Validation(format!(
            "{} is invalid:\n  {}",
            model_path.display(),
            lines.join("\n  ")
        )));
    }
    Ok(model)
}

/// Drives the window over an evidence stream.
///
/// Records are consumed in file order; each slice is emitted (filtered mode)
/// once the stream moves past it, so a slice's marginal reflects exactly the
/// evidence up to that slice. Late records for slices still inside the
/// window are accepted and influence later emissions; records behind the
/// window are rejected.
fn run_filter_loop<W: Write>(
    series: &mut ModelSeries,
    records: &[Evidence],
    writer: &mut Option<&mut RecordWriter<W>>,
) -> Result<(), CliError> {
    let mut emit_t = series.window().t_low();
    for r in records {
        if r.t < series.window().t_low() {
            return Err(CliError::Inference(format!(
                "evidence at slice {} lies behind the window (oldest slice {}); \
                 archived slices accept no new evidence — re-estimate them with the \
                 smooth command instead",
                r.t,
                series.window().t_low()
            )));
        }
        while emit_t < r.t {
            while emit_t > series.window().t_high() {
                series.advance(1)?;
            }
            emit_slice(series, emit_t, writer)?;
            emit_t += 1;
        }
        while r.t > series.window().t_high() {
            series.advance(1)?;
        }
        series.enter_evidence(r)?;
    }
    while emit_t <= series.window().t_high() {
        emit_slice(series, emit_t, writer)?;
        emit_t += 1;
    }
    Ok(())
}

fn emit_slice<W: Write>(
    series: &mut ModelSeries,
    t: u32,
    writer: &mut Option<&mut RecordWriter<W>>,
) -> Result<(), CliError> {
    if !series.window().tree().is_calibrated() {
        series.propagate()?;
    }
    let Some(writer) = writer.as_mut() else {
        return Ok(());
    };
    for var in series.slice_variables(t) {
        let marginal = series.query_filtered(t, var)?;
        let decl = series.model().variable(var);
        let distribution = decl
            .states
            .iter()
            .cloned()
            .zip(marginal.values().iter().copied())
            .collect();
        let mut record = MarginalRecord::new(t, &decl.name, "filtered", distribution);
        record.evidence_mass = Some(series.evidence_mass());
        writer.emit(&record)?;
    }
    Ok(())
}

pub struct FilterArgs {
    pub model: Option<PathBuf>,
    pub evidence: PathBuf,
    pub width: u32,
    pub heuristic: String,
    pub format: OutputFormat,
    pub load_series: Option<PathBuf>,
    pub save_series: Option<PathBuf>,
}

pub fn cmd_filter(args: &FilterArgs, out: &mut impl Write) -> Result<(), CliError> {
    let mut series = match (&args.load_series, &args.model) {
        (Some(path), _) => series_io::load_series(path)?,
        (None, Some(model_path)) => {
            let model = parse_and_validate(model_path)?;
            ModelSeries::init_with(model, args.width, parse_heuristic(&args.heuristic)?)?
        }
        (None, None) => {
            return Err(CliError::Validation(
                "filter needs a model file or --load-series".into(),
            ))
        }
    };
    let records = format::parse_evidence(series.model(), &args.evidence)?;
    let mut writer = RecordWriter::new(args.format, out);
    run_filter_loop(&mut series, &records, &mut Some(&mut writer))?;
    writer.flush()?;
    if let Some(path) = &args.save_series {
        series_io::save_series(&series, path)?;
    }
    Ok(())
}

pub struct SmoothArgs {
    pub model: PathBuf,
    pub evidence: PathBuf,
    pub width: u32,
    pub heuristic: String,
    pub targets: Option<String>,
    pub format: OutputFormat,
}

pub fn cmd_smooth(args: &SmoothArgs, out: &mut impl Write) -> Result<(), CliError> {
    let model = parse_and_validate(&args.model)?;
    let records = format::parse_evidence(&model, &args.evidence)?;
    let mut series =
        ModelSeries::init_with(model, args.width, parse_heuristic(&args.heuristic)?)?;
    run_filter_loop::<std::io::Sink>(&mut series, &records, &mut None)?;

    let targets: Vec<(u32, VarId)> = match &args.targets {
        Some(spec) => format::parse_targets(series.model(), spec).map_err(CliError::Validation)?,
        None => {
            let mut all = Vec::new();
            for t in 0..=series.window().t_high() {
                for var in series.slice_variables(t) {
                    all.push((t, var));
                }
            }
            all
        }
    };
    let mut writer = RecordWriter::new(args.format, out);
    for (t, var) in targets {
        let marginal = series.query_smoothed(t, var)?;
        let decl = series.model().variable(var);
        let distribution = decl
            .states
            .iter()
            .cloned()
            .zip(marginal.values().iter().copied())
            .collect();
        writer.emit(&MarginalRecord::new(t, &decl.name, "smoothed", distribution))?;
    }
    writer.flush()?;
    Ok(())
}

pub struct ForecastArgs {
    pub model: PathBuf,
    pub evidence: PathBuf,
    pub width: u32,
    pub heuristic: String,
    pub horizon: u32,
    pub method: String,
    pub samples: usize,
    pub seed: u64,
    pub targets: Option<String>,
    pub cap: Option<usize>,
    pub format: OutputFormat,
}

pub fn cmd_forecast(args: &ForecastArgs, out: &mut impl Write) -> Result<(), CliError> {
    let model = parse_and_validate(&args.model)?;
    let records = format::parse_evidence(&model, &args.evidence)?;
    let mut series =
        ModelSeries::init_with(model, args.width, parse_heuristic(&args.heuristic)?)?;
    run_filter_loop::<std::io::Sink>(&mut series, &records, &mut None)?;

    let method = match args.method.as_str() {
        "exact" => ForecastMethod::Exact,
        "mc" | "monte-carlo" => {
            ForecastMethod::MonteCarlo { samples: args.samples, seed: args.seed }
        }
        "linear" => ForecastMethod::Linear,
        other => {
            return Err(CliError::Validation(format!(
                "unknown forecast method '{other}' (exact, mc, or linear)"
            )))
        }
    };
    let targets = match &args.targets {
        Some(spec) => format::parse_targets(series.model(), spec).map_err(CliError::Validation)?,
        None => Vec::new(),
    };
    let query = ForecastQuery { horizon: args.horizon, targets, method };
    let cap = resolve_cap(args.cap)?;
    let result = forecast_with_cap(&series, &query, cap)?;

    let mode = format!("forecast:{}", result.method.name);
    let mut writer = RecordWriter::new(args.format, out);
    for target in &result.targets {
        let decl = series.model().variable(target.var);
        let distribution = decl
            .states
            .iter()
            .cloned()
            .zip(target.probabilities.iter().copied())
            .collect();
        let mut record = MarginalRecord::new(target.t, &decl.name, &mode, distribution);
        record.std_error = target.std_error.clone();
        record.samples = result.method.sample_count;
        record.seed = result.method.seed;
        record.rng = result.method.rng.map(str::to_string);
        record.approximate = result.method.approximate.then_some(true);
        writer.emit(&record)?;
    }
    writer.flush()?;
    Ok(())
}
