use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostScenario {
    pub n_documents: usize,
    /// Data entry wage, $/hour.
    pub entry_wage: f64,
    /// Labels produced and hours taken by the measured entry contract.
    pub labeled_n: usize,
    pub labeled_hours: f64,
    /// Quoted totals for scanning `scan_quote_n` documents.
    pub scan_quotes: Vec<f64>,
    pub scan_quote_n: usize,
    pub dev_hours: f64,
    /// $/hour.
    pub dev_wage: f64,
    pub n_training_labels: usize,
    /// Remote recognition price per cell, $.
    pub remote_cost_per_cell: f64,
    /// Cells per document sent to a remote backend.
    pub cells_per_document: usize,
}

impl CostScenario {
    /// Figures of the published cost comparison.
    pub fn published() -> Self {
        Self {
            n_documents: 353_973,
            entry_wage: 15.0,
            labeled_n: 12_423,
            labeled_hours: 58.0,
            scan_quotes: vec![45_477.80, 25_663.04],
            scan_quote_n: 353_973,
            dev_hours: 84.0,
            dev_wage: 55.93,
            n_training_labels: 12_423,
            remote_cost_per_cell: 0.0002,
            cells_per_document: 1,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "published" => Ok(Self::published()),
            _ => Err(Error::Parameter(format!("unknown cost preset {name:?} (published)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.entry_wage, self.dev_wage, self.remote_cost_per_cell, self.dev_hours];
        if rates.iter().any(|r| !(*r >= 0.0)) || self.scan_quotes.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::Parameter("rates, hours and quotes must be non-negative".into()));
        }
        if self.labeled_n == 0 || !(self.labeled_hours > 0.0) {
            return Err(Error::Parameter("labeling basis needs a positive count and positive hours".into()));
        }
        if self.scan_quotes.is_empty() || self.scan_quote_n == 0 {
            return Err(Error::Parameter("scanning basis needs at least one quote and a positive document count".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_doc_entry: f64,
    pub manual_entry_total: f64,
    pub per_doc_scan: f64,
    pub scan_total: f64,
    /// Scanning plus entry when no scans exist.
    pub manual_scan_and_entry_total: f64,
    pub dev_cost: f64,
    pub ocr_method_total: f64,
    pub regression_method_total: f64,
    pub remote_ocr_total: f64,
}

pub fn cost_estimate(s: &CostScenario) -> Result<CostReport> {
    s.validate()?;
    let n = s.n_documents as f64;
    let per_doc_entry = s.labeled_hours * s.entry_wage / s.labeled_n as f64;
    let mean_quote = s.scan_quotes.iter().sum::<f64>() / s.scan_quotes.len() as f64;
    let per_doc_scan = mean_quote / s.scan_quote_n as f64;
    let dev_cost = s.dev_hours * s.dev_wage;
    let labels = s.n_training_labels as f64;
    let manual_entry_total = n * per_doc_entry;
    let scan_total = n * per_doc_scan;
    Ok(CostReport {
        per_doc_entry,
        manual_entry_total,
        per_doc_scan,
        scan_total,
        manual_scan_and_entry_total: manual_entry_total + scan_total,
        dev_cost,
        ocr_method_total: dev_cost + labels * per_doc_entry,
        regression_method_total: dev_cost + labels * (per_doc_entry + per_doc_scan),
        remote_ocr_total: n * s.cells_per_document as f64 * s.remote_cost_per_cell,
    })
}

impl CostReport {
    pub fn to_table(&self) -> String {
        let rows = [
            ("Manual entry (per document)", self.per_doc_entry),
            ("Manual entry", self.manual_entry_total),
            ("Scanning (per document)", self.per_doc_scan),
            ("Scanning", self.scan_total),
            ("Scanning + manual entry", self.manual_scan_and_entry_total),
            ("Model development", self.dev_cost),
            ("OCR method", self.ocr_method_total),
            ("Regression method", self.regression_method_total),
            ("Remote OCR", self.remote_ocr_total),
        ];
        let mut out = String::new();
        for (label, v) in rows {
            let amount = if v < 1.0 { format!("${v:.5}") } else { format!("${v:.2}") };
            let _ = writeln!(out, "{label:<28}  {amount:>12}");
        }
        out
    }
}
