//! Tabular observational data: raw categorical tables as read from CSV, and
//! the binary matrices used for discovery and estimation.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of variables in a contingency table.
pub const MAX_COUNT_VARS: usize = 20;

fn check_unique(columns: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in columns {
        if !seen.insert(c.as_str()) {
            return Err(Error::Csv {
                row: 0,
                column: c.clone(),
                message: "duplicate column name".into(),
            });
        }
    }
    Ok(())
}

/// String-valued table prior to binarization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl RawDataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        check_unique(&columns)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::Csv {
                    row: i + 1,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", columns.len(), row.len()),
                });
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("unknown column {name:?}")))
    }

    /// Reads a header-first CSV file. LF and CRLF line endings are accepted.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let csv_err = |row: usize, e: csv::Error| Error::Csv {
            row,
            column: String::new(),
            message: e.to_string(),
        };
        let headers = rdr.headers().map_err(|e| csv_err(0, e))?.clone();
        if headers.is_empty() {
            return Err(Error::Csv {
                row: 0,
                column: String::new(),
                message: "missing header row".into(),
            });
        }
        let columns: Vec<String> = headers.iter().map(str::to_string).collect();
        check_unique(&columns)?;
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| csv_err(i + 1, e))?;
            if record.len() != columns.len() {
                return Err(Error::Csv {
                    row: i + 1,
                    column: String::new(),
                    message: format!(
                        "ragged row: expected {} fields, found {}",
                        columns.len(),
                        record.len()
                    ),
                });
            }
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Self { columns, rows })
    }

    /// Recodes `column` to `"0"`/`"1"` and drops rows matching neither label.
    pub fn binarize(&self, column: &str, zero_label: &str, one_label: &str) -> Result<Self> {
        if zero_label == one_label {
            return Err(Error::invalid(format!(
                "binarize labels for {column:?} must differ (both {zero_label:?})"
            )));
        }
        let c = self.column_index(column)?;
        let mut found = false;
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .filter_map(|row| {
                let code = if row[c] == zero_label {
                    "0"
                } else if row[c] == one_label {
                    "1"
                } else {
                    return None;
                };
                found = true;
                let mut out = row.clone();
                out[c] = code.to_string();
                Some(out)
            })
            .collect();
        if !found && !self.rows.is_empty() {
            return Err(Error::invalid(format!(
                "neither {zero_label:?} nor {one_label:?} occurs in column {column:?}"
            )));
        }
        Ok(Self {
            columns: self.columns.clone(),
            rows,
        })
    }

    /// Keeps only rows whose `column` value is one of `keep`.
    pub fn filter_rows(&self, column: &str, keep: &[String]) -> Result<Self> {
        let c = self.column_index(column)?;
        let rows = self
            .rows
            .iter()
            .filter(|row| keep.iter().any(|k| *k == row[c]))
            .cloned()
            .collect();
        Ok(Self {
            columns: self.columns.clone(),
            rows,
        })
    }

    pub fn drop_columns(&self, names: &[String]) -> Result<Self> {
        let drop: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_>>()?;
        let keep: Vec<usize> = (0..self.columns.len()).filter(|i| !drop.contains(i)).collect();
        Ok(Self {
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        })
    }

    /// Parses every cell as `0` or `1`.
    pub fn to_binary(&self) -> Result<BinaryDataset> {
        let mut data = Vec::with_capacity(self.rows.len() * self.columns.len());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                data.push(match cell.trim() {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::Csv {
                            row: i + 1,
                            column: self.columns[j].clone(),
                            message: format!("expected 0 or 1, found {other:?}"),
                        })
                    }
                });
            }
        }
        BinaryDataset::from_flat(self.columns.clone(), data)
    }
}

/// `m × n` matrix over {0, 1} with named columns, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryDataset {
    columns: Vec<String>,
    data: Vec<u8>,
}

impl BinaryDataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        let n = columns.len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::Csv {
                    row: i + 1,
                    column: String::new(),
                    message: format!("expected {n} fields, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        Self::from_flat(columns, data)
    }

    /// Builds from row-major cells.
    pub fn from_flat(columns: Vec<String>, data: Vec<u8>) -> Result<Self> {
        check_unique(&columns)?;
        let n = columns.len();
        if n == 0 && !data.is_empty() {
            return Err(Error::invalid("cells without columns"));
        }
        if n > 0 && data.len() % n != 0 {
            return Err(Error::invalid("cell count is not a multiple of the column count"));
        }
        if let Some(pos) = data.iter().position(|&v| v > 1) {
            return Err(Error::Csv {
                row: pos / n + 1,
                column: columns[pos % n].clone(),
                message: format!("expected 0 or 1, found {}", data[pos]),
            });
        }
        Ok(Self { columns, data })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.data.len() / self.columns.len()
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn row(&self, r: usize) -> &[u8] {
        let n = self.n_cols();
        &self.data[r * n..(r + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.data.chunks_exact(self.n_cols().max(1))
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.n_cols() + c]
    }

    pub fn to_raw(&self) -> RawDataset {
        RawDataset {
            columns: self.columns.clone(),
            rows: self
                .rows()
                .map(|r| r.iter().map(|v| v.to_string()).collect())
                .collect(),
        }
    }

    /// Contingency table over `vars`. Cells are indexed by the assignment
    /// read as a binary number with the first variable most significant.
    pub fn counts(&self, vars: &[usize]) -> Result<Vec<u64>> {
        if vars.len() > MAX_COUNT_VARS {
            return Err(Error::Capacity {
                what: "contingency table variables",
                got: vars.len(),
                limit: MAX_COUNT_VARS,
            });
        }
        if let Some(&bad) = vars.iter().find(|&&v| v >= self.n_cols()) {
            return Err(Error::invalid(format!("column index {bad} out of range")));
        }
        let mut table = vec![0u64; 1 << vars.len()];
        for row in self.rows() {
            table[assignment_index(row, vars)] += 1;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let map = |e: csv::Error| Error::Csv {
            row: 0,
            column: String::new(),
            message: e.to_string(),
        };
        w.write_record(&self.columns).map_err(map)?;
        for row in self.rows() {
            w.write_record(row.iter().map(|&v| if v == 1 { "1" } else { "0" }))
                .map_err(map)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_csv_string().as_bytes())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        RawDataset::read_csv(path)?.to_binary()
    }
}

/// Binary-counting index of the values of `vars` in `row`, first variable
/// most significant.
pub(crate) fn assignment_index(row: &[u8], vars: &[usize]) -> usize {
    vars.iter().fold(0, |acc, &v| (acc << 1) | row[v] as usize)
}
