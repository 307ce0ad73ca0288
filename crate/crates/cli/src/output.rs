use std::collections::BTreeSet;
use std::io::{self, Write};

use qwishart::polynomials::format_rational;
use qwishart::{MomentPolynomial, Symbol};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// A flat table for CSV output.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub table: Table,
    /// Set when a check ran to completion but did not hold.
    pub failed: Option<String>,
}

impl Report {
    pub fn new(json: Value, table: Table) -> Self {
        Report { json, table, failed: None }
    }
}

/// One row per term: `item, coeff`, then the exponent of every symbol that
/// occurs in any of the polynomials.
pub fn poly_table(items: &[(String, &MomentPolynomial)]) -> Table {
    let symbols: BTreeSet<Symbol> = items
        .iter()
        .flat_map(|(_, p)| p.terms().flat_map(|(m, _)| m.powers().iter().map(|(s, _)| s.clone())))
        .collect();
    let mut headers = vec!["item".to_string(), "coeff".to_string()];
    headers.extend(symbols.iter().map(Symbol::name));
    let mut table = Table { headers, rows: Vec::new() };
    for (item, p) in items {
        if p.is_zero() {
            let mut row = vec![item.clone(), "0".to_string()];
            row.extend(symbols.iter().map(|_| "0".to_string()));
            table.push(row);
        }
        for (m, c) in p.terms() {
            let mut row = vec![item.clone(), format_rational(c)];
            row.extend(symbols.iter().map(|s| m.exponent(s).to_string()));
            table.push(row);
        }
    }
    table
}

pub fn emit(report: &Report, format: Format) -> io::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&report.json).map_err(io::Error::other)?;
            writeln!(out, "{text}")
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(&report.table.headers)?;
            for row in &report.table.rows {
                w.write_record(row)?;
            }
            w.flush()
        }
    }
}
