//! CSV ingestion: `unit_id,z,y[,stratum]` with a required header.

use std::path::Path;

use teq::data::{Dataset, UnitRecord};

use crate::Failure;

pub fn read_records(path: &Path) -> Result<Vec<UnitRecord>, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Failure::validation(format!("bad header: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("unit_id")
        .ok_or_else(|| Failure::validation("missing 'unit_id' column".to_string()))?;
    let z_col = col("z").ok_or_else(|| Failure::validation("missing 'z' column".to_string()))?;
    let y_col = col("y").ok_or_else(|| Failure::validation("missing 'y' column".to_string()))?;
    let stratum_col = col("stratum");

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let rownum = i + 2; // header is row 1
        let row = row.map_err(|e| Failure::validation(format!("row {rownum}: {e}")))?;
        let id = row
            .get(id_col)
            .ok_or_else(|| Failure::validation(format!("row {rownum}: missing unit_id")))?
            .to_string();
        let z = match row.get(z_col) {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(Failure::validation(format!(
                    "row {rownum}: z must be 0 or 1, got '{}'",
                    other.unwrap_or("")
                )))
            }
        };
        let y: f64 = row
            .get(y_col)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Failure::validation(format!("row {rownum}: y must be numeric")))?;
        if !y.is_finite() {
            return Err(Failure::validation(format!(
                "row {rownum}: y must be finite, got {y}"
            )));
        }
        let stratum = stratum_col
            .and_then(|c| row.get(c))
            .filter(|s| !s.is_empty())
            .map(String::from);
        records.push(UnitRecord {
            id,
            treated: z,
            outcome: y,
            stratum,
        });
    }
    if records.is_empty() {
        return Err(Failure::validation("no data rows".to_string()));
    }
    Ok(records)
}

/// Read, validate, shuffle into analysis order, and report stratum warnings
/// on stderr.
pub fn ingest(path: &Path, seed: u64) -> Result<Dataset, Failure> {
    let records = read_records(path)?;
    let data = Dataset::ingest(records, seed).map_err(Failure::from_teq)?;
    for w in data.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(data)
}
