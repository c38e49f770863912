//! CSV output for sweep results and matrix dumps.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::harness::sweep::{ResultRow, Scenario};
use crate::linalg::CMatrix;

pub const HEADER: [&str; 9] = [
    "scenario",
    "estimator",
    "snr_db",
    "nmse_mc",
    "nmse_theory",
    "trials",
    "eta",
    "seed",
    "wall_ms",
];

/// Shortest text that parses back to the same value, switching to exponent
/// form for very large or small magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes rows under [`HEADER`].
pub fn write_rows<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.estimator.name().to_string(),
            num(r.snr_db),
            num(r.nmse_mc),
            num(r.nmse_theory),
            r.trials.to_string(),
            r.eta.to_string(),
            r.seed.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(rows, file)
}

/// Parses a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(HEADER) {
        return Err(Error::Config(format!(
            "{}: unexpected header {headers:?}",
            path.display()
        )));
    }
    let bad = |field: &str| Error::Config(format!("{}: bad {field} value", path.display()));
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(HEADER[i]));
            let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(HEADER[i]));
            Ok(ResultRow {
                scenario: rec[0].to_string(),
                estimator: EstimatorKind::parse(&rec[1]).ok_or_else(|| bad("estimator"))?,
                snr_db: num(2)?,
                nmse_mc: num(3)?,
                nmse_theory: num(4)?,
                trials: int(5)? as usize,
                eta: int(6)? as usize,
                seed: int(7)?,
                wall_ms: int(8)?,
            })
        })
        .collect()
}

/// One line per matrix row, each entry as an adjacent `re,im` pair.
pub fn write_matrix<W: Write>(m: &CMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().flat_map(|z| [num(z.re), num(z.im)]))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes the propagation, transmission and correlation matrices of a
/// scenario into `dir`, returning the file names.
pub fn dump_matrices(scenario: &Scenario, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut named: Vec<(String, &CMatrix)> = vec![
        ("inter_layer.csv".into(), scenario.propagation.inter_layer()),
        ("bs_to_layer1.csv".into(), scenario.propagation.bs()),
        ("correlation.csv".into(), scenario.truth.matrix()),
        ("correlation_sqrt.csv".into(), scenario.truth.sqrt()),
        ("correlation_iso.csv".into(), scenario.iso.matrix()),
    ];
    for (i, s) in scenario.subspaces.iter().enumerate() {
        named.push((format!("transmission_{i}.csv"), s.p.matrix()));
    }
    let mut written = Vec::new();
    for (name, m) in named {
        let path = dir.join(&name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_matrix(m, file)?;
        written.push(name);
    }
    Ok(written)
}
