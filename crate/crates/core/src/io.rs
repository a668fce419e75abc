//! File formats: datasets as CSV (empty cell = missing, categorical cells
//! as level labels), column schemas as JSON, and long-format draws.
//!
//! Writers take an optional header line which is emitted as a `#`
//! comment; readers skip comment lines.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{ColumnMargin, PosteriorOutput};
use crate::types::{validate_aux, AuxPoint, ColumnKind, ColumnSchema, Dataset, Marginal, MissingnessMode};

/// One column of a schema file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
    #[serde(default)]
    pub missingness_mode: MissingnessMode,
    /// Known `(tau, value)` quantiles including the support bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux: Option<Vec<(f64, f64)>>,
    /// Fully known marginal, for full-margin fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub known: Option<Marginal>,
}

impl SchemaEntry {
    pub fn new(schema: &ColumnSchema, margin: &ColumnMargin) -> Self {
        Self {
            name: schema.name.clone(),
            kind: schema.kind.clone(),
            missingness_mode: schema.missingness_mode,
            aux: margin.aux.as_ref().map(|a| a.entries().iter().map(|p| (p.tau, p.value)).collect()),
            known: margin.known,
        }
    }

    pub fn split(self) -> Result<(ColumnSchema, ColumnMargin)> {
        let schema = ColumnSchema::new(self.name, self.kind, self.missingness_mode)?;
        let aux = self
            .aux
            .map(|a| validate_aux(&schema, a.into_iter().map(AuxPoint::from).collect()))
            .transpose()?;
        Ok((schema, ColumnMargin { aux, known: self.known }))
    }
}

/// Drops leading `#` comment lines, which JSON itself does not allow.
fn strip_comments(text: &str) -> &str {
    let mut rest = text;
    while rest.trim_start().starts_with('#') {
        rest = rest.trim_start().split_once('\n').map_or("", |(_, r)| r);
    }
    rest
}

pub fn parse_schema(text: &str) -> Result<(Vec<ColumnSchema>, Vec<ColumnMargin>)> {
    let entries: Vec<SchemaEntry> = serde_json::from_str(strip_comments(text))?;
    let mut schemas = Vec::with_capacity(entries.len());
    let mut margins = Vec::with_capacity(entries.len());
    for e in entries {
        let (s, m) = e.split()?;
        schemas.push(s);
        margins.push(m);
    }
    Ok((schemas, margins))
}

pub fn read_schema(path: &Path) -> Result<(Vec<ColumnSchema>, Vec<ColumnMargin>)> {
    parse_schema(&std::fs::read_to_string(path)?)
}

pub fn schema_json(schemas: &[ColumnSchema], margins: &[ColumnMargin]) -> Result<String> {
    let entries: Vec<SchemaEntry> = schemas.iter().zip(margins).map(|(s, m)| SchemaEntry::new(s, m)).collect();
    Ok(serde_json::to_string_pretty(&entries)?)
}

pub fn write_schema(path: &Path, schemas: &[ColumnSchema], margins: &[ColumnMargin], header: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    header_line(&mut w, header)?;
    writeln!(w, "{}", schema_json(schemas, margins)?)?;
    w.flush()?;
    Ok(())
}

fn parse_cell(schema: &ColumnSchema, raw: &str, row: usize) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    let bad = || Error::Data(format!("row {}: column `{}`: cannot parse {raw:?}", row + 1, schema.name));
    match &schema.kind {
        ColumnKind::Categorical { levels } => levels.iter().position(|l| l == raw).map(|k| Some(k as f64)).ok_or_else(bad),
        _ => raw.parse::<f64>().map(Some).map_err(|_| bad()),
    }
}

/// Reads a dataset whose header names the schema columns (in any order).
pub fn read_dataset<R: Read>(reader: R, schemas: &[ColumnSchema]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let header = rdr.headers()?.clone();
    let positions = schemas
        .iter()
        .map(|s| {
            header
                .iter()
                .position(|h| h.trim() == s.name)
                .ok_or_else(|| Error::Data(format!("column `{}` not found in data header", s.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec![Vec::new(); schemas.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (j, &pos) in positions.iter().enumerate() {
            columns[j].push(parse_cell(&schemas[j], record.get(pos).unwrap_or(""), row)?);
        }
    }
    Dataset::new(schemas.to_vec(), columns)
}

pub fn read_dataset_file(path: &Path, schemas: &[ColumnSchema]) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?), schemas)
}

fn header_line<W: Write>(w: &mut W, header: Option<&str>) -> Result<()> {
    if let Some(h) = header {
        writeln!(w, "# {h}")?;
    }
    Ok(())
}

pub fn write_dataset<W: Write>(mut w: W, data: &Dataset, header: Option<&str>) -> Result<()> {
    header_line(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(data.schemas().iter().map(|s| s.name.as_str()))?;
    for i in 0..data.n_rows() {
        let row: Vec<String> = (0..data.n_cols())
            .map(|j| match (data.get(i, j), &data.schema(j).kind) {
                (None, _) => String::new(),
                (Some(v), ColumnKind::Categorical { levels }) => levels[v as usize].clone(),
                (Some(v), _) => v.to_string(),
            })
            .collect();
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: &Path, data: &Dataset, header: Option<&str>) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), data, header)
}

/// Correlation (upper triangle) and standardized intercept draws in long
/// format: `sweep,param,i,j,value`.
pub fn write_draws<W: Write>(mut w: W, output: &PosteriorOutput, header: Option<&str>) -> Result<()> {
    header_line(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "param", "i", "j", "value"])?;
    for d in &output.draws {
        let s = d.sweep.to_string();
        let dim = d.correlation.nrows();
        for a in 0..dim {
            for b in a + 1..dim {
                out.write_record([s.as_str(), "corr", &a.to_string(), &b.to_string(), &d.correlation[(a, b)].to_string()])?;
            }
        }
        for (a, v) in d.alpha.iter().enumerate() {
            out.write_record([s.as_str(), "alpha", &a.to_string(), "0", &v.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Estimated CDF levels at intermediate points:
/// `sweep,column,value,level`.
pub fn write_marginals<W: Write>(mut w: W, output: &PosteriorOutput, header: Option<&str>) -> Result<()> {
    header_line(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "column", "value", "level"])?;
    for d in &output.draws {
        for (j, pts) in d.levels.iter().enumerate() {
            for (v, l) in pts {
                out.write_record([d.sweep.to_string(), j.to_string(), v.to_string(), l.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// JSON behind an optional `#` header line.
pub fn write_json<T: Serialize>(path: &Path, value: &T, header: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    header_line(&mut w, header)?;
    serde_json::to_writer(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(strip_comments(&std::fs::read_to_string(path)?))?)
}
