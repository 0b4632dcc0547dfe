//! Delimited feature tables: an `id` column followed by named feature
//! columns, with `NA` for missing values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

pub const MISSING_MARKER: &str = "NA";

/// Feature rows keyed by recording id, kept in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub features: FeatureMatrix<f64>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, features: FeatureMatrix<f64>) -> Result<Self> {
        if ids.len() != features.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} ids for {} feature rows",
                ids.len(),
                features.nrows()
            )));
        }
        Ok(Self { ids, features })
    }

    pub fn row_of(&self, id: &str) -> Option<&[f64]> {
        self.ids.iter().position(|i| i == id).map(|r| self.features.row(r))
    }

    /// Rows for `ids` in the given order; unknown ids are an error.
    pub fn lookup(&self, ids: &[&str]) -> Result<FeatureMatrix<f64>> {
        let idx = ids
            .iter()
            .map(|id| {
                self.ids
                    .iter()
                    .position(|i| i == id)
                    .ok_or_else(|| Error::InvalidInput(format!("no features for id `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.features.select_rows(&idx))
    }
}

pub fn write_feature_table<W: std::io::Write>(out: W, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(table.features.names().iter().cloned());
    w.write_record(&header)?;
    for (id, row) in table.ids.iter().zip(table.features.rows_iter()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| {
            if v.is_nan() {
                MISSING_MARKER.to_string()
            } else {
                format!("{v}")
            }
        }));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<feature table>", e))?;
    Ok(())
}

pub fn read_feature_table<R: std::io::Read>(input: R) -> Result<FeatureTable> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("id") {
        return Err(Error::MissingColumn("id".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        ids.push(rec.get(0).unwrap_or_default().to_string());
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v = if field == MISSING_MARKER || field.is_empty() {
                f64::NAN
            } else {
                field.parse::<f64>().map_err(|_| Error::Row {
                    row: i,
                    message: format!("column `{}`: `{field}` is not a number", names[j]),
                })?
            };
            data.push(v);
        }
    }
    let features = FeatureMatrix::new(ids.len(), names, data)?;
    FeatureTable::new(ids, features)
}

pub fn save_feature_table(path: &Path, table: &FeatureTable) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_feature_table(std::io::BufWriter::new(f), table)
}

pub fn load_feature_table(path: &Path) -> Result<FeatureTable> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(std::io::BufReader::new(f))
}
