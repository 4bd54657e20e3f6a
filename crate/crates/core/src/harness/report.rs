use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ecolor::NibbleSummary;
use crate::sim::RunReport;

use super::{ExperimentConfig, HarnessError, Verdict};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub graph_seed: Option<u64>,
    pub algorithm: String,
    pub variant: String,
    pub n: u64,
    pub m: u64,
    pub max_degree: u64,
    pub passed: bool,
    pub verdict: Verdict,
    pub report: RunReport,
    pub nibble: Option<NibbleSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub all_passed: bool,
    pub runs: Vec<RunRecord>,
}

/// Flat per-run row of the CSV report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub seed: u64,
    pub algorithm: String,
    pub variant: String,
    pub n: u64,
    pub m: u64,
    pub max_degree: u64,
    pub budget: u64,
    pub colors_used: u64,
    pub proper: bool,
    pub complete: bool,
    pub budget_ok: bool,
    pub passed: bool,
    pub rounds_used: u64,
    pub fallback_rounds: u64,
    pub timed_out: bool,
    pub max_bits_per_edge_round: u64,
    pub bandwidth_bits: u64,
    pub total_messages: u64,
    pub total_bits: u64,
    /// Joined with `;`.
    pub flags: String,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        CsvRow {
            seed: r.seed,
            algorithm: r.algorithm.clone(),
            variant: r.variant.clone(),
            n: r.n,
            m: r.m,
            max_degree: r.max_degree,
            budget: r.verdict.budget,
            colors_used: r.verdict.colors_used,
            proper: r.verdict.proper,
            complete: r.verdict.complete,
            budget_ok: r.verdict.budget_ok,
            passed: r.passed,
            rounds_used: r.report.rounds_used,
            fallback_rounds: r.report.fallback_rounds,
            timed_out: r.report.timed_out,
            max_bits_per_edge_round: r.report.max_bits_per_edge_round,
            bandwidth_bits: r.report.bandwidth_bits,
            total_messages: r.report.total_messages,
            total_bits: r.report.total_bits,
            flags: r.report.flags.join(";"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(HarnessError::Input(format!("unknown report format {s:?}"))),
        }
    }
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Result<String, HarnessError> {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| HarnessError::Format(e.to_string()))
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &report.runs {
                w.serialize(CsvRow::from(r)).map_err(|e| HarnessError::Format(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| HarnessError::Format(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| HarnessError::Format(e.to_string()))
        }
    }
}

pub fn parse_json_report(text: &str) -> Result<ExperimentReport, HarnessError> {
    let report: ExperimentReport = serde_json::from_str(text).map_err(|e| HarnessError::Format(e.to_string()))?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(HarnessError::Format(format!("unsupported schema version {}", report.schema_version)));
    }
    Ok(report)
}

pub fn parse_csv_report(text: &str) -> Result<Vec<CsvRow>, HarnessError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Format(e.to_string()))
}
