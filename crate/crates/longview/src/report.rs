//! CSV evaluation reports: header `population,label,statistic,value`, one
//! row per cell statistic, sorted, values with four decimals or `undefined`.

use std::path::Path;

use longview_core::cohort::Population;
use longview_core::eval::{EvalReport, LabelKind, Statistic};

use crate::error::{self, Error, Result};

pub const REPORT_HEADER: [&str; 4] = ["population", "label", "statistic", "value"];
pub const UNDEFINED: &str = "undefined";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub population: Population,
    pub label: LabelKind,
    pub statistic: Statistic,
    pub value: Option<f64>,
}

pub fn format_value(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => UNDEFINED.to_string(),
    }
}

pub fn report_rows(report: &EvalReport) -> Vec<ReportRow> {
    report
        .rows()
        .into_iter()
        .map(|(population, label, statistic, value)| ReportRow { population, label, statistic, value })
        .collect()
}

pub fn render_report(report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in report_rows(report) {
        w.write_record([r.population.as_str(), r.label.as_str(), r.statistic.as_str(), &format_value(r.value)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

pub fn emit_report(report: &EvalReport, path: &Path) -> Result<()> {
    error::write(path, render_report(report).as_bytes())
}

pub fn parse_report(text: &str, path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(Error::line(path, 1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::line(path, line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(Error::line(path, line, format!("expected 4 fields, found {}", rec.len())));
        }
        let population = match &rec[0] {
            "screening" => Population::Screening,
            "biopsied" => Population::Biopsied,
            other => return Err(Error::line(path, line, format!("unknown population {other:?}"))),
        };
        let label = rec[1].parse().map_err(|e: longview_core::Error| Error::line(path, line, e.to_string()))?;
        let statistic = rec[2].parse().map_err(|e: longview_core::Error| Error::line(path, line, e.to_string()))?;
        let value = match &rec[3] {
            UNDEFINED => None,
            v => Some(v.parse::<f64>().map_err(|_| Error::line(path, line, format!("invalid value {v:?}")))?),
        };
        rows.push(ReportRow { population, label, statistic, value });
    }
    Ok(rows)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = String::from_utf8(error::read(path)?).map_err(|_| Error::format(path, "report is not UTF-8"))?;
    parse_report(&text, path)
}
