use std::io::Read;
use std::path::Path;

use plnma::{ArmRecord, ErrorCategory};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Deserialize)]
struct Row {
    study: String,
    treatment: String,
    events: u64,
    n: u64,
}

fn parse_error(msg: impl std::fmt::Display) -> CliError {
    CliError::new(ErrorCategory::Parse, msg.to_string())
}

/// Read `study,treatment,events,n` rows (header required, any column order).
pub fn read_records<R: Read>(reader: R) -> CliResult<Vec<ArmRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(parse_error)?.clone();
    for col in ["study", "treatment", "events", "n"] {
        if !headers.iter().any(|h| h == col) {
            return Err(parse_error(format!("missing column `{col}` in header")));
        }
    }
    rdr.deserialize::<Row>()
        .map(|row| {
            let row = row.map_err(parse_error)?;
            Ok(ArmRecord::new(row.study, row.treatment, row.events, row.n))
        })
        .collect()
}

pub fn read_records_path(path: &Path) -> CliResult<Vec<ArmRecord>> {
    let file =
        std::fs::File::open(path).map_err(|e| parse_error(format!("{}: {e}", path.display())))?;
    read_records(file)
}
