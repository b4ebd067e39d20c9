//! Synthetic federations: ground-truth bodies, noisy per-archive
//! observations, catalog files, a brute-force oracle and match-quality
//! diagnostics.
//!
//! Observed positions are the true position displaced in the local tangent
//! plane by an isotropic Gaussian with the archive's sigma, then
//! renormalized. This is exact to first order in sigma, i.e. far below
//! double precision at arcsecond scale.

mod files;
mod fixtures;
mod oracle;

pub use files::{
    load_catalogs, read_manifest, read_truth, write_federation, ManifestEntry, CATALOG_MANIFEST, TRUTH_FILE,
};
pub use fixtures::{dropout_micro_catalogs, MICRO_DROPOUT_QUERY, MICRO_FULL_QUERY};
pub use oracle::{match_quality, oracle_crossmatch, MatchQuality, OracleLimits, DEFAULT_ORACLE_GUARD};

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::query::{AreaClause, ID_COLUMN, POSITION_COLUMNS};
use crate::skynode::{CatalogError, ColumnSchema, NodeCatalog};
use crate::sphere::{SkyPosition, ARCSEC};
use crate::value::{ColumnType, Value};
use crate::xmatch::ArchiveNoise;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("oracle would enumerate {product} tuples (limit {limit})")]
    TooLargeForOracle { product: u128, limit: u128 },
    #[error("oracle: {0}")]
    Oracle(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeWeight {
    pub name: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeModel {
    #[serde(default = "default_types")]
    pub types: Vec<TypeWeight>,
    #[serde(default = "default_bands")]
    pub bands: Vec<Band>,
}

fn default_types() -> Vec<TypeWeight> {
    vec![TypeWeight { name: "GALAXY".into(), prob: 0.5 }, TypeWeight { name: "STAR".into(), prob: 0.5 }]
}

fn default_bands() -> Vec<Band> {
    vec![Band { name: "i".into(), min: 0.0, max: 10.0 }]
}

impl Default for AttributeModel {
    fn default() -> Self {
        AttributeModel { types: default_types(), bands: default_bands() }
    }
}

fn default_detect_prob() -> f64 {
    0.9
}

fn default_table() -> String {
    "Primary".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveConfig {
    pub name: String,
    #[serde(default = "default_table")]
    pub table: String,
    pub sigma_arcsec: f64,
    #[serde(default = "default_detect_prob")]
    pub detect_prob: f64,
    #[serde(default)]
    pub attributes: AttributeModel,
}

/// Generator input, usually read from TOML:
///
/// ```toml
/// seed = 7
/// n_bodies = 1000
/// region = { ra_deg = 185.0, dec_deg = -0.5, radius_arcsec = 1800.0 }
///
/// [[archives]]
/// name = "SDSS"
/// table = "Photo_Object"
/// sigma_arcsec = 0.1
/// detect_prob = 0.9
/// attributes = { types = [{ name = "GALAXY", prob = 0.6 }, { name = "STAR", prob = 0.4 }],
///                bands = [{ name = "i", min = 0.0, max = 10.0 }] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkyConfig {
    pub seed: u64,
    pub region: AreaClause,
    pub n_bodies: usize,
    pub archives: Vec<ArchiveConfig>,
}

impl SkyConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let c: SkyConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        AreaClause::new(self.region.ra_deg, self.region.dec_deg, self.region.radius_arcsec)
            .map_err(|e| SimError::Config(e.to_string()))?;
        if self.archives.is_empty() {
            return err("at least one archive is required".into());
        }
        for (i, a) in self.archives.iter().enumerate() {
            if a.name.is_empty() || self.archives[..i].iter().any(|b| b.name == a.name) {
                return err(format!("archive name `{}` is empty or repeated", a.name));
            }
            if ArchiveNoise::from_arcsec(a.sigma_arcsec).is_err() {
                return err(format!("{}: sigma_arcsec must be > 0, got {}", a.name, a.sigma_arcsec));
            }
            if !(0.0..=1.0).contains(&a.detect_prob) {
                return err(format!("{}: detect_prob {} outside [0, 1]", a.name, a.detect_prob));
            }
            let total: f64 = a.attributes.types.iter().map(|t| t.prob).sum();
            if a.attributes.types.is_empty() || a.attributes.types.iter().any(|t| t.prob < 0.0) || (total - 1.0).abs() > 1e-9 {
                return err(format!("{}: type probabilities must be non-negative and sum to 1", a.name));
            }
            for b in &a.attributes.bands {
                if !(b.min.is_finite() && b.max.is_finite() && b.min <= b.max) {
                    return err(format!("{}: band {} has an empty flux range", a.name, b.name));
                }
            }
        }
        Ok(())
    }
}

/// One generated catalog, in file-ready row form.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveCatalog {
    pub name: String,
    pub table: String,
    pub sigma_arcsec: f64,
    pub columns: Vec<ColumnSchema>,
    pub rows: Vec<Vec<Value>>,
}

impl ArchiveCatalog {
    pub fn to_node_catalog(&self, depth: u8) -> Result<NodeCatalog, SimError> {
        let noise = ArchiveNoise::from_arcsec(self.sigma_arcsec).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(NodeCatalog::new(&self.name, &self.table, noise, self.columns.clone(), self.rows.clone(), depth)?)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    /// True position of body `i` (body id `i`).
    pub bodies: Vec<SkyPosition>,
    /// Per archive: body id -> object id, absent when undetected.
    pub observations: BTreeMap<String, Vec<Option<i64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSky {
    pub catalogs: Vec<ArchiveCatalog>,
    pub truth: GroundTruth,
}

impl GeneratedSky {
    pub fn node_catalogs(&self, depth: u8) -> Result<Vec<NodeCatalog>, SimError> {
        self.catalogs.iter().map(|c| c.to_node_catalog(depth)).collect()
    }
}

fn offset(p: &SkyPosition, east: f64, north: f64) -> SkyPosition {
    let (e, n) = p.tangent_basis();
    let [x, y, z] = p.to_array();
    SkyPosition::from_vector(x + east * e[0] + north * n[0], y + east * e[1] + north * n[1], z + east * e[2] + north * n[2])
        .expect("small tangent offset of a unit vector is non-zero")
}

/// Uniform point in a spherical cap.
fn uniform_in_cap(rng: &mut ChaCha8Rng, center: &SkyPosition, radius: f64) -> SkyPosition {
    // 1 - cos(t) drawn uniformly in [0, 1 - cos r], computed without cancellation.
    let one_minus = rng.gen::<f64>() * 2.0 * (radius / 2.0).sin().powi(2);
    let t = 2.0 * (one_minus / 2.0).sqrt().asin();
    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
    let (s, c) = t.sin_cos();
    let (e, n) = center.tangent_basis();
    let [x, y, z] = center.to_array();
    let (sp, cp) = phi.sin_cos();
    SkyPosition::from_vector(
        c * x + s * (cp * e[0] + sp * n[0]),
        c * y + s * (cp * e[1] + sp * n[1]),
        c * z + s * (cp * e[2] + sp * n[2]),
    )
    .expect("cap point is a unit vector")
}

pub fn catalog_columns(attributes: &AttributeModel) -> Vec<ColumnSchema> {
    let mut cols = vec![
        ColumnSchema::new(ID_COLUMN, ColumnType::Int),
        ColumnSchema::new(POSITION_COLUMNS[0], ColumnType::Float),
        ColumnSchema::new(POSITION_COLUMNS[1], ColumnType::Float),
        ColumnSchema::new("type", ColumnType::String),
    ];
    cols.extend(attributes.bands.iter().map(|b| ColumnSchema::new(format!("{}_flux", b.name), ColumnType::Float)));
    cols
}

/// Deterministic for a fixed config.
pub fn generate(config: &SkyConfig) -> Result<GeneratedSky, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (center, radius) = config.region.circle();
    let bodies: Vec<SkyPosition> = (0..config.n_bodies).map(|_| uniform_in_cap(&mut rng, &center, radius)).collect();
    let mut truth = GroundTruth { bodies, observations: BTreeMap::new() };
    let mut catalogs = Vec::with_capacity(config.archives.len());
    for a in &config.archives {
        let sigma = a.sigma_arcsec * ARCSEC;
        let normal = Normal::new(0.0, sigma).map_err(|e| SimError::Config(e.to_string()))?;
        let mut rows = Vec::new();
        let mut seen = Vec::with_capacity(truth.bodies.len());
        for body in &truth.bodies {
            if rng.gen::<f64>() >= a.detect_prob {
                seen.push(None);
                continue;
            }
            let (de, dn) = (normal.sample(&mut rng), normal.sample(&mut rng));
            let (ra, dec) = offset(body, de, dn).to_radec();
            let mut u = rng.gen::<f64>();
            let mut ty = &a.attributes.types[a.attributes.types.len() - 1].name;
            for t in &a.attributes.types {
                if u < t.prob {
                    ty = &t.name;
                    break;
                }
                u -= t.prob;
            }
            let id = rows.len() as i64 + 1;
            let mut row = vec![Value::Int(id), Value::Float(ra), Value::Float(dec), Value::Str(ty.clone())];
            for b in &a.attributes.bands {
                row.push(Value::Float(b.min + (b.max - b.min) * rng.gen::<f64>()));
            }
            rows.push(row);
            seen.push(Some(id));
        }
        truth.observations.insert(a.name.clone(), seen);
        catalogs.push(ArchiveCatalog {
            name: a.name.clone(),
            table: a.table.clone(),
            sigma_arcsec: a.sigma_arcsec,
            columns: catalog_columns(&a.attributes),
            rows,
        });
    }
    Ok(GeneratedSky { catalogs, truth })
}
