//! Columnar in-memory catalog and its CSV file format.
//!
//! The first CSV line declares `name:type` for every column, e.g.
//! `object_id:int,ra_deg:float,dec_deg:float,type:string`. The three
//! columns shown first are required.

use std::io::{Read, Write};
use std::path::Path;

use super::{ColumnSchema, SchemaDescription, TableSchema};
use crate::query::{ID_COLUMN, POSITION_COLUMNS};
use crate::sphere::{radec_to_unit, SkyPosition, SphereIndex};
use crate::value::{ColumnType, Value};
use crate::xmatch::ArchiveNoise;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Debug, Clone)]
enum ColumnData {
    Int(Vec<i64>),
    Float(Vec<f64>),
    Str(Vec<String>),
}

impl ColumnData {
    fn new(ty: ColumnType, cap: usize) -> Self {
        match ty {
            ColumnType::Int => ColumnData::Int(Vec::with_capacity(cap)),
            ColumnType::Float => ColumnData::Float(Vec::with_capacity(cap)),
            ColumnType::String => ColumnData::Str(Vec::with_capacity(cap)),
        }
    }

    fn push(&mut self, v: Value) -> Result<(), String> {
        match (self, v) {
            (ColumnData::Int(c), Value::Int(i)) => c.push(i),
            (ColumnData::Float(c), Value::Float(x)) => c.push(x),
            (ColumnData::Float(c), Value::Int(i)) => c.push(i as f64),
            (ColumnData::Str(c), Value::Str(s)) => c.push(s),
            (_, v) => return Err(format!("value {v} has type {}", v.column_type())),
        }
        Ok(())
    }

    fn get(&self, row: usize) -> Value {
        match self {
            ColumnData::Int(c) => Value::Int(c[row]),
            ColumnData::Float(c) => Value::Float(c[row]),
            ColumnData::Str(c) => Value::Str(c[row].clone()),
        }
    }
}

/// One archive's primary table plus its sphere index.
#[derive(Debug, Clone)]
pub struct NodeCatalog {
    archive_name: String,
    primary_table: String,
    noise: ArchiveNoise,
    columns: Vec<ColumnSchema>,
    data: Vec<ColumnData>,
    ids: Vec<i64>,
    index: SphereIndex,
}

impl NodeCatalog {
    pub fn new(
        archive_name: impl Into<String>,
        primary_table: impl Into<String>,
        noise: ArchiveNoise,
        columns: Vec<ColumnSchema>,
        rows: Vec<Vec<Value>>,
        depth: u8,
    ) -> Result<Self, CatalogError> {
        let find = |name: &str, ty: ColumnType| {
            columns
                .iter()
                .position(|c| c.name == name && c.ty == ty)
                .ok_or_else(|| CatalogError::Header(format!("required column {name}:{ty} missing")))
        };
        let id_col = find(ID_COLUMN, ColumnType::Int)?;
        let ra_col = find(POSITION_COLUMNS[0], ColumnType::Float)?;
        let dec_col = find(POSITION_COLUMNS[1], ColumnType::Float)?;
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|d| d.name == c.name) {
                return Err(CatalogError::Header(format!("column {} declared twice", c.name)));
            }
        }
        let mut data: Vec<ColumnData> = columns.iter().map(|c| ColumnData::new(c.ty, rows.len())).collect();
        let mut positions = Vec::with_capacity(rows.len());
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != columns.len() {
                return Err(CatalogError::Row { row: r, message: format!("{} cells for {} columns", row.len(), columns.len()) });
            }
            let (ra, dec) = (row[ra_col].as_f64(), row[dec_col].as_f64());
            let pos = match (ra, dec) {
                (Some(ra), Some(dec)) => radec_to_unit(ra, dec).map_err(|e| CatalogError::Row { row: r, message: e.to_string() })?,
                _ => return Err(CatalogError::Row { row: r, message: "position is not numeric".into() }),
            };
            positions.push(pos);
            for (d, v) in data.iter_mut().zip(row) {
                d.push(v).map_err(|message| CatalogError::Row { row: r, message })?;
            }
        }
        let ids = match &data[id_col] {
            ColumnData::Int(v) => v.clone(),
            _ => unreachable!("object_id checked to be int"),
        };
        let index = SphereIndex::build(positions, depth).map_err(|e| CatalogError::Header(e.to_string()))?;
        Ok(NodeCatalog {
            archive_name: archive_name.into(),
            primary_table: primary_table.into(),
            noise,
            columns,
            data,
            ids,
            index,
        })
    }

    pub fn from_csv_path(
        path: &Path,
        archive_name: &str,
        primary_table: &str,
        noise: ArchiveNoise,
        depth: u8,
    ) -> Result<Self, CatalogError> {
        let (columns, rows) = read_catalog_csv(std::fs::File::open(path)?)?;
        Self::new(archive_name, primary_table, noise, columns, rows, depth)
    }

    pub fn archive_name(&self) -> &str {
        &self.archive_name
    }

    pub fn primary_table(&self) -> &str {
        &self.primary_table
    }

    pub fn noise(&self) -> ArchiveNoise {
        self.noise
    }

    pub fn columns(&self) -> &[ColumnSchema] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index(&self) -> &SphereIndex {
        &self.index
    }

    pub fn position(&self, row: usize) -> SkyPosition {
        self.index.position(row)
    }

    pub fn object_id(&self, row: usize) -> i64 {
        self.ids[row]
    }

    pub fn value(&self, row: usize, column: usize) -> Value {
        self.data[column].get(row)
    }

    pub(crate) fn float_at(&self, row: usize, column: usize) -> Option<f64> {
        match &self.data[column] {
            ColumnData::Int(c) => Some(c[row] as f64),
            ColumnData::Float(c) => Some(c[row]),
            ColumnData::Str(_) => None,
        }
    }

    pub(crate) fn str_at(&self, row: usize, column: usize) -> Option<&str> {
        match &self.data[column] {
            ColumnData::Str(c) => Some(&c[row]),
            _ => None,
        }
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        (0..self.columns.len()).map(|c| self.value(row, c)).collect()
    }

    pub fn schema_description(&self) -> SchemaDescription {
        SchemaDescription {
            archive_name: self.archive_name.clone(),
            tables: vec![TableSchema {
                name: self.primary_table.clone(),
                columns: self.columns.clone(),
                row_count: self.len() as u64,
            }],
        }
    }
}

/// Parses a typed-header CSV catalog.
pub fn read_catalog_csv(input: impl Read) -> Result<(Vec<ColumnSchema>, Vec<Vec<Value>>), CatalogError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let columns = reader
        .headers()?
        .iter()
        .map(|h| {
            let (name, ty) = h.split_once(':').ok_or_else(|| CatalogError::Header(format!("`{h}` lacks a :type suffix")))?;
            let ty = ColumnType::parse(ty).ok_or_else(|| CatalogError::Header(format!("unknown type in `{h}`")))?;
            Ok(ColumnSchema::new(name.trim(), ty))
        })
        .collect::<Result<Vec<_>, CatalogError>>()?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = columns
            .iter()
            .zip(record.iter())
            .map(|(c, cell)| parse_cell(c.ty, cell).ok_or_else(|| CatalogError::Row { row: r, message: format!("bad {} `{cell}`", c.ty) }))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

fn parse_cell(ty: ColumnType, cell: &str) -> Option<Value> {
    match ty {
        ColumnType::Int => cell.trim().parse().ok().map(Value::Int),
        ColumnType::Float => cell.trim().parse().ok().map(Value::Float),
        ColumnType::String => Some(Value::Str(cell.to_string())),
    }
}

pub fn write_catalog_csv(out: impl Write, columns: &[ColumnSchema], rows: &[Vec<Value>]) -> Result<(), CatalogError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns.iter().map(|c| format!("{}:{}", c.name, c.ty)))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "object_id:int,ra_deg:float,dec_deg:float,type:string,i_flux:float\n\
                       1,185.0,-0.5,GALAXY,3.5\n\
                       2,185.001,-0.5,STAR,1\n";

    #[test]
    fn csv_round_trip() {
        let (cols, rows) = read_catalog_csv(CSV.as_bytes()).unwrap();
        assert_eq!(cols.len(), 5);
        assert_eq!(rows[1][4], Value::Float(1.0));
        let mut out = Vec::new();
        write_catalog_csv(&mut out, &cols, &rows).unwrap();
        let (cols2, rows2) = read_catalog_csv(out.as_slice()).unwrap();
        assert_eq!((cols2, rows2), (cols, rows));
    }

    #[test]
    fn builds_catalog() {
        let (cols, rows) = read_catalog_csv(CSV.as_bytes()).unwrap();
        let cat = NodeCatalog::new("SDSS", "Photo_Object", ArchiveNoise::from_arcsec(0.1).unwrap(), cols, rows, 8).unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.object_id(1), 2);
        assert_eq!(cat.str_at(0, 3), Some("GALAXY"));
        let s = cat.schema_description();
        assert_eq!(s.tables[0].row_count, 2);
        assert_eq!(s.tables[0].columns[3], ColumnSchema::new("type", ColumnType::String));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_catalog_csv("object_id,ra_deg\n".as_bytes()), Err(CatalogError::Header(_))));
        assert!(matches!(
            read_catalog_csv("object_id:int\nx\n".as_bytes()),
            Err(CatalogError::Row { row: 0, .. })
        ));
        let noise = ArchiveNoise::from_arcsec(1.0).unwrap();
        let cols = vec![ColumnSchema::new("object_id", ColumnType::Int)];
        assert!(matches!(NodeCatalog::new("A", "T", noise, cols, vec![], 8), Err(CatalogError::Header(_))));
        let (cols, _) = read_catalog_csv(CSV.as_bytes()).unwrap();
        let bad = vec![vec![Value::Int(1), Value::Float(0.0), Value::Float(95.0), Value::Str("x".into()), Value::Float(0.0)]];
        assert!(matches!(NodeCatalog::new("A", "T", noise, cols, bad, 8), Err(CatalogError::Row { .. })));
    }
}
