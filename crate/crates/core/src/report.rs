//! Flat report rows shared by the simulation and analysis pipelines.
//!
//! The TSV has one row per regime (`kind = value`) and one per compared pair
//! (`kind = compare`), with columns
//! `kind, name1, name2, estimate, sd, t, p, mc, pooled, k, m, n`.
//! Cells that do not apply are left empty.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Value,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub kind: RowKind,
    pub name1: String,
    pub name2: Option<String>,
    pub estimate: Option<f64>,
    pub sd: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub mc: Option<f64>,
    pub pooled: bool,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// Why the numeric cells are empty, if they are.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

pub const TSV_HEADER: [&str; 12] = ["kind", "name1", "name2", "estimate", "sd", "t", "p", "mc", "pooled", "k", "m", "n"];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_tsv<W: Write>(rows: &[ReportRow], writer: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(b'\t').terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(TSV_HEADER)?;
    for r in rows {
        let kind = match r.kind {
            RowKind::Value => "value",
            RowKind::Compare => "compare",
        };
        w.write_record([
            kind.to_string(),
            r.name1.clone(),
            r.name2.clone().unwrap_or_default(),
            cell(r.estimate),
            cell(r.sd),
            cell(r.t),
            cell(r.p),
            cell(r.mc),
            r.pooled.to_string(),
            r.k.to_string(),
            r.m.to_string(),
            r.n.to_string(),
        ])?;
    }
    w.flush()
}

pub fn to_tsv_string(rows: &[ReportRow]) -> String {
    let mut buf = Vec::new();
    write_tsv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("tsv is utf-8")
}
