//! AIS static records and the CSV reader/writer.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of numeric AIS fields fed to the trees and the fuzzy layer.
pub const N_FIELDS: usize = 7;

/// The seven numeric AIS fields in their fixed order.
pub type AisVector = [f64; N_FIELDS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AisField {
    ToBow,
    ToStern,
    ToStarboard,
    ToPort,
    Width,
    Length,
    Draught,
}

impl AisField {
    pub const ALL: [AisField; N_FIELDS] = [
        AisField::ToBow,
        AisField::ToStern,
        AisField::ToStarboard,
        AisField::ToPort,
        AisField::Width,
        AisField::Length,
        AisField::Draught,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// CSV column name.
    pub fn column(self) -> &'static str {
        match self {
            AisField::ToBow => "to_bow",
            AisField::ToStern => "to_stern",
            AisField::ToStarboard => "to_starboard",
            AisField::ToPort => "to_port",
            AisField::Width => "width",
            AisField::Length => "length",
            AisField::Draught => "draught",
        }
    }

    /// Short symbol used when rendering rules, e.g. `l <= 27.5`.
    pub fn symbol(self) -> &'static str {
        match self {
            AisField::ToBow => "tb",
            AisField::ToStern => "te",
            AisField::ToStarboard => "ts",
            AisField::ToPort => "to",
            AisField::Width => "w",
            AisField::Length => "l",
            AisField::Draught => "d",
        }
    }
}

impl fmt::Display for AisField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AisStaticRecord {
    pub mmsi: u64,
    pub to_bow: f64,
    pub to_stern: f64,
    pub to_starboard: f64,
    pub to_port: f64,
    pub width: f64,
    pub length: f64,
    pub draught: f64,
    pub ship_type: String,
}

impl AisStaticRecord {
    pub fn fields(&self) -> AisVector {
        [
            self.to_bow,
            self.to_stern,
            self.to_starboard,
            self.to_port,
            self.width,
            self.length,
            self.draught,
        ]
    }

    pub fn from_fields(mmsi: u64, v: AisVector, ship_type: impl Into<String>) -> Self {
        AisStaticRecord {
            mmsi,
            to_bow: v[0],
            to_stern: v[1],
            to_starboard: v[2],
            to_port: v[3],
            width: v[4],
            length: v[5],
            draught: v[6],
            ship_type: ship_type.into(),
        }
    }
}

/// Row accounting from [`load_ais_csv`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub retained: usize,
    /// Rows with an empty or absent retained field.
    pub incomplete: usize,
    /// Rows with a non-numeric, non-finite or negative value.
    pub parse_errors: usize,
    /// Later rows repeating an mmsi already seen (first kept).
    pub duplicates: usize,
}

/// Table A: one record per vessel.
#[derive(Debug, Clone, Default)]
pub struct AisTable {
    pub records: Vec<AisStaticRecord>,
    pub report: LoadReport,
}

impl AisTable {
    pub fn from_records(records: Vec<AisStaticRecord>) -> Self {
        let report = LoadReport { rows_read: records.len(), retained: records.len(), ..Default::default() };
        AisTable { records, report }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

const MMSI: &str = "mmsi";
const SHIP_TYPE: &str = "ship_type";

enum RowError {
    Incomplete,
    Parse,
}

pub fn load_ais_csv(path: &Path) -> Result<AisTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ais_csv(file, &path.display().to_string())
}

/// Parse AIS static records. `source` only labels error messages.
pub fn read_ais_csv<R: Read>(reader: R, source: &str) -> Result<AisTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let mut missing = Vec::new();
    let mmsi_col = find(MMSI).unwrap_or_else(|| {
        missing.push(MMSI);
        0
    });
    let mut field_cols = [0usize; N_FIELDS];
    for (slot, field) in field_cols.iter_mut().zip(AisField::ALL) {
        match find(field.column()) {
            Some(c) => *slot = c,
            None => missing.push(field.column()),
        }
    }
    let type_col = find(SHIP_TYPE).unwrap_or_else(|| {
        missing.push(SHIP_TYPE);
        0
    });
    if !missing.is_empty() {
        return Err(Error::format(source, format!("header is missing column(s): {}", missing.join(", "))));
    }

    let mut table = AisTable::default();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row?;
        table.report.rows_read += 1;
        let parsed = parse_row(&row, mmsi_col, &field_cols, type_col);
        let rec = match parsed {
            Ok(rec) => rec,
            Err(RowError::Incomplete) => {
                table.report.incomplete += 1;
                continue;
            }
            Err(RowError::Parse) => {
                table.report.parse_errors += 1;
                continue;
            }
        };
        if !seen.insert(rec.mmsi) {
            log::warn!("{source}: duplicate mmsi {} on row {}, keeping the first", rec.mmsi, table.report.rows_read);
            table.report.duplicates += 1;
            continue;
        }
        table.records.push(rec);
    }
    table.report.retained = table.records.len();
    if table.report.incomplete > 0 || table.report.parse_errors > 0 {
        log::info!(
            "{source}: dropped {} incomplete and {} unparsable rows of {}",
            table.report.incomplete,
            table.report.parse_errors,
            table.report.rows_read
        );
    }
    Ok(table)
}

fn parse_row(
    row: &csv::StringRecord,
    mmsi_col: usize,
    field_cols: &[usize; N_FIELDS],
    type_col: usize,
) -> std::result::Result<AisStaticRecord, RowError> {
    let cell = |c: usize| row.get(c).filter(|s| !s.is_empty());
    // Missing values take precedence over malformed ones.
    if cell(mmsi_col).is_none() || cell(type_col).is_none() || field_cols.iter().any(|&c| cell(c).is_none()) {
        return Err(RowError::Incomplete);
    }
    let mmsi: u64 = cell(mmsi_col).unwrap().parse().map_err(|_| RowError::Parse)?;
    let mut v = [0.0; N_FIELDS];
    for (slot, &c) in v.iter_mut().zip(field_cols) {
        let x: f64 = cell(c).unwrap().parse().map_err(|_| RowError::Parse)?;
        if !x.is_finite() || x < 0.0 {
            return Err(RowError::Parse);
        }
        *slot = x;
    }
    Ok(AisStaticRecord::from_fields(mmsi, v, cell(type_col).unwrap()))
}

/// Write records with the canonical header.
pub fn write_ais_csv<W: Write>(writer: W, records: &[AisStaticRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![MMSI];
    header.extend(AisField::ALL.iter().map(|f| f.column()));
    header.push(SHIP_TYPE);
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![r.mmsi.to_string()];
        row.extend(r.fields().iter().map(|v| v.to_string()));
        row.push(r.ship_type.clone());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "mmsi,to_bow,to_stern,to_starboard,to_port,width,length,draught,ship_type\n";

    #[test]
    fn complete_row_is_retained() {
        let csv = format!("{HEADER}123,10,20,4,5,9,30,3.5,Tug\n");
        let t = read_ais_csv(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records[0].fields(), [10.0, 20.0, 4.0, 5.0, 9.0, 30.0, 3.5]);
        assert_eq!(t.records[0].ship_type, "Tug");
    }

    #[test]
    fn missing_draught_is_dropped_and_counted() {
        let csv = format!("{HEADER}1,10,20,4,5,9,30,,Tug\n2,10,20,4,5,9,30,2,Tug\n3,10,20,4,5,9,30\n");
        let t = read_ais_csv(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.report.incomplete, 2);
        assert_eq!(t.report.rows_read, 3);
    }

    #[test]
    fn header_only_is_empty_table() {
        let t = read_ais_csv(HEADER.as_bytes(), "t").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.report, LoadReport::default());
    }

    #[test]
    fn malformed_header_is_format_error() {
        let err = read_ais_csv("mmsi,length\n1,2\n".as_bytes(), "bad.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.csv") && msg.contains("draught"), "{msg}");
    }

    #[test]
    fn non_numeric_and_negative_rows_are_parse_errors() {
        let csv = format!("{HEADER}1,ten,20,4,5,9,30,2,Tug\n2,10,20,4,5,9,-30,2,Tug\nx,1,1,1,1,1,1,1,Tug\n");
        let t = read_ais_csv(csv.as_bytes(), "t").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.report.parse_errors, 3);
    }

    #[test]
    fn duplicate_mmsi_keeps_first() {
        let csv = format!("{HEADER}7,1,1,1,1,1,1,1,Tug\n7,2,2,2,2,2,2,2,Cargo\n");
        let t = read_ais_csv(csv.as_bytes(), "t").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.records[0].ship_type, "Tug");
        assert_eq!(t.report.duplicates, 1);
    }

    #[test]
    fn column_order_is_free_and_round_trips() {
        let recs = vec![
            AisStaticRecord::from_fields(5, [1.0, 2.0, 3.0, 4.0, 7.0, 3.0, 0.1], "Other"),
            AisStaticRecord::from_fields(9, [10.5, 2.0, 3.0, 4.0, 7.0, 12.5, 11.3], "Tanker"),
        ];
        let mut buf = Vec::new();
        write_ais_csv(&mut buf, &recs).unwrap();
        let back = read_ais_csv(buf.as_slice(), "t").unwrap();
        assert_eq!(back.records, recs);

        let shuffled = "ship_type,draught,length,width,to_port,to_starboard,to_stern,to_bow,mmsi\nTug,1,2,3,4,5,6,7,8\n";
        let t = read_ais_csv(shuffled.as_bytes(), "t").unwrap();
        assert_eq!(t.records[0].fields(), [7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(t.records[0].mmsi, 8);
    }
}
