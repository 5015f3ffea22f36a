//! Library side of the `lvlingam` command-line tool: estimator dispatch, experiment sweeps,
//! covariate residualization and CSV input/output.

pub mod covariates;
pub mod estimators;
pub mod experiment;

use std::fs::File;
use std::path::Path;

use lvlingam::{Error, Result, Sample};
use nalgebra::DMatrix;

/// Header and numeric columns of a CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::Reader::from_reader(File::open(path)?);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if record.len() != header.len() {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 2,
                record.len(),
                header.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidInput(format!(
                    "{}: row {} column '{}' is not a number: '{field}'",
                    path.display(),
                    line + 2,
                    header[c]
                ))
            })?;
            columns[c].push(v);
        }
    }
    Ok((header, columns))
}

/// Sample holding the named columns of a CSV file, in the given order.
pub fn sample_from_csv(path: &Path, names: &[String]) -> Result<Sample> {
    let (header, columns) = read_csv(path)?;
    let picked = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .map(|i| columns[i].clone())
                .ok_or_else(|| Error::InvalidInput(format!("{}: no column named '{n}'", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Sample::from_columns(&picked, names.to_vec())
}

/// Writes an `n × p` matrix with a header row.
pub fn write_matrix_csv(path: &Path, labels: &[String], data: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    let io = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(labels).map_err(io)?;
    for r in 0..data.nrows() {
        w.write_record(data.row(r).iter().map(f64::to_string)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits a comma-separated list, dropping empty entries.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(String::from)
        .collect()
}
