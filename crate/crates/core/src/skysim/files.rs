//! On-disk layout of a generated federation:
//!
//! * `catalogs.toml`: one `[[catalog]]` entry per archive;
//! * `<archive>.csv`: typed-header catalog files;
//! * `truth.csv`: body positions and the object id each archive assigned.
//!
//! Every file is written to a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GeneratedSky, GroundTruth, SimError};
use crate::skynode::{write_catalog_csv, NodeCatalog};
use crate::sphere::SkyPosition;
use crate::xmatch::ArchiveNoise;

pub const CATALOG_MANIFEST: &str = "catalogs.toml";
pub const TRUTH_FILE: &str = "truth.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub table: String,
    pub sigma_arcsec: f64,
    /// Relative to the manifest's directory.
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    catalog: Vec<ManifestEntry>,
}

fn write_atomic(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<(), SimError>) -> Result<(), SimError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        write(&mut f)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Writes catalogs, manifest and truth into `dir`, creating it if needed.
pub fn write_federation(dir: &Path, sky: &GeneratedSky) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for c in &sky.catalogs {
        let file = format!("{}.csv", c.name);
        let path = dir.join(&file);
        write_atomic(&path, |f| Ok(write_catalog_csv(f, &c.columns, &c.rows)?))?;
        written.push(path);
        entries.push(ManifestEntry { name: c.name.clone(), table: c.table.clone(), sigma_arcsec: c.sigma_arcsec, file });
    }

    let truth_path = dir.join(TRUTH_FILE);
    write_atomic(&truth_path, |f| {
        let mut w = csv::Writer::from_writer(f);
        let names: Vec<&String> = sky.truth.observations.keys().collect();
        let mut header = vec!["body_id".to_string(), "ra_deg".into(), "dec_deg".into()];
        header.extend(names.iter().map(|n| format!("{n}_id")));
        w.write_record(&header).map_err(csv_err)?;
        for (b, pos) in sky.truth.bodies.iter().enumerate() {
            let (ra, dec) = pos.to_radec();
            let mut rec = vec![b.to_string(), ra.to_string(), dec.to_string()];
            for n in &names {
                rec.push(sky.truth.observations[*n][b].map(|id| id.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    written.push(truth_path);

    let manifest_path = dir.join(CATALOG_MANIFEST);
    let text = toml::to_string(&Manifest { catalog: entries }).map_err(|e| SimError::Config(e.to_string()))?;
    write_atomic(&manifest_path, |f| Ok(f.write_all(text.as_bytes())?))?;
    written.push(manifest_path);
    Ok(written)
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Catalog(e.into())
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>, SimError> {
    let text = fs::read_to_string(dir.join(CATALOG_MANIFEST))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| SimError::Config(format!("{CATALOG_MANIFEST}: {e}")))?;
    Ok(m.catalog)
}

/// Loads every catalog listed in `dir`'s manifest.
pub fn load_catalogs(dir: &Path, depth: u8) -> Result<Vec<NodeCatalog>, SimError> {
    read_manifest(dir)?
        .into_iter()
        .map(|e| {
            let noise = ArchiveNoise::from_arcsec(e.sigma_arcsec).map_err(|err| SimError::Config(format!("{}: {err}", e.name)))?;
            Ok(NodeCatalog::from_csv_path(&dir.join(&e.file), &e.name, &e.table, noise, depth)?)
        })
        .collect()
}

pub fn read_truth(dir: &Path) -> Result<GroundTruth, SimError> {
    let mut r = csv::Reader::from_path(dir.join(TRUTH_FILE)).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let names: Vec<String> = header
        .iter()
        .skip(3)
        .map(|h| h.strip_suffix("_id").map(str::to_string).ok_or_else(|| SimError::Config(format!("truth column {h}"))))
        .collect::<Result<_, _>>()?;
    let bad = |row: usize, what: &str| SimError::Config(format!("{TRUTH_FILE} row {row}: bad {what}"));
    let mut truth = GroundTruth { bodies: Vec::new(), observations: names.iter().map(|n| (n.clone(), Vec::new())).collect::<BTreeMap<_, _>>() };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let f = |k: usize| rec.get(k).and_then(|s| s.parse::<f64>().ok());
        let pos = match (f(1), f(2)) {
            (Some(ra), Some(dec)) => SkyPosition::from_radec(ra, dec).map_err(|_| bad(i, "position"))?,
            _ => return Err(bad(i, "position")),
        };
        truth.bodies.push(pos);
        for (k, n) in names.iter().enumerate() {
            let cell = rec.get(3 + k).unwrap_or("");
            let id = if cell.is_empty() { None } else { Some(cell.parse::<i64>().map_err(|_| bad(i, "object id"))?) };
            truth.observations.get_mut(n).expect("name from header").push(id);
        }
    }
    Ok(truth)
}
