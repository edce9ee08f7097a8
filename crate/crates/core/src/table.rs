//! Header-checked reading of the CSV tables the tool writes.

use std::fmt::Display;
use std::io::Read;
use std::str::FromStr;

use csv::StringRecord;

use crate::error::{Error, Result};
use crate::units::parse_seconds;

/// A data row with its 1-based line number in the file.
pub(crate) struct Row<'a> {
    name: &'a str,
    pub line: usize,
    record: StringRecord,
}

impl Row<'_> {
    fn err(&self, reason: String) -> Error {
        Error::Parse {
            path: self.name.to_string(),
            line: self.line,
            reason,
        }
    }

    pub fn get<T: FromStr>(&self, i: usize) -> Result<T>
    where
        T::Err: Display,
    {
        let text = &self.record[i];
        text.parse().map_err(|e| self.err(format!("bad field `{text}`: {e}")))
    }

    pub fn str(&self, i: usize) -> &str {
        &self.record[i]
    }

    /// Decimal seconds as nanoseconds.
    pub fn seconds(&self, i: usize) -> Result<u64> {
        parse_seconds(&self.record[i]).map_err(|e| self.err(e.to_string()))
    }

    pub fn invalid(&self, reason: impl Into<String>) -> Error {
        self.err(reason.into())
    }
}

/// Reads all rows after checking that the header is exactly `header`.
pub(crate) fn read_rows<'a, R: Read>(input: R, name: &'a str, header: &[&str]) -> Result<Vec<Row<'a>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let parse_err = |line, reason| Error::Parse {
        path: name.to_string(),
        line,
        reason,
    };
    let first = records.next().ok_or_else(|| parse_err(1, "missing header".into()))??;
    if first.iter().ne(header.iter().copied()) {
        return Err(parse_err(
            1,
            format!("expected header `{}`, found `{}`", header.join(","), first.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    records
        .enumerate()
        .map(|(i, r)| {
            Ok(Row {
                name,
                line: i + 2,
                record: r?,
            })
        })
        .collect()
}
