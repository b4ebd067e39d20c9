//! Hand-placed catalogs with a known cross-match answer.

use crate::skynode::NodeCatalog;
use crate::sphere::ARCSEC;
use crate::value::Value;
use crate::xmatch::ArchiveNoise;

use super::{catalog_columns, AttributeModel};

pub const MICRO_FULL_QUERY: &str = "SELECT O.object_id, T.object_id, P.object_id \
    FROM SDSS:Primary O, TWOMASS:Primary T, FIRST:Primary P \
    WHERE AREA(185.0, -0.5, 300) AND XMATCH(O, T, P) < 3.5";

pub const MICRO_DROPOUT_QUERY: &str = "SELECT O.object_id, T.object_id \
    FROM SDSS:Primary O, TWOMASS:Primary T, FIRST:Primary P \
    WHERE AREA(185.0, -0.5, 300) AND XMATCH(O, T, !P) < 3.5";

/// Three archives with sigma = 1 arcsec and two bodies:
///
/// * body 1 at (185, -0.5) is seen by all three within half an arcsecond;
/// * body 2, 60 arcsec east, is seen by SDSS and TWOMASS 0.3 arcsec apart,
///   while FIRST's object 2 lies 20 arcsec away.
///
/// So `XMATCH(O, T, P)` yields (1, 1, 1) and `XMATCH(O, T, !P)` yields (2, 2).
pub fn dropout_micro_catalogs() -> Vec<NodeCatalog> {
    let (ra0, dec0) = (185.0, -0.5);
    let deg = ARCSEC.to_degrees();
    let east = |arcsec: f64| arcsec * deg / f64::to_radians(dec0).cos();
    // (archive, [(d_ra arcsec, d_dec arcsec) for body 1 and body 2])
    let layout: [(&str, [(f64, f64); 2]); 3] = [
        ("SDSS", [(0.0, 0.0), (60.0, 0.0)]),
        ("TWOMASS", [(0.3, 0.2), (60.3, 0.0)]),
        ("FIRST", [(-0.2, 0.3), (60.0, 20.0)]),
    ];
    let attrs = AttributeModel { types: AttributeModel::default().types, bands: vec![] };
    layout
        .iter()
        .map(|(name, offsets)| {
            let rows = offsets
                .iter()
                .enumerate()
                .map(|(i, &(dra, ddec))| {
                    vec![
                        Value::Int(i as i64 + 1),
                        Value::Float(ra0 + east(dra)),
                        Value::Float(dec0 + ddec * deg),
                        Value::Str("GALAXY".into()),
                    ]
                })
                .collect();
            NodeCatalog::new(*name, "Primary", ArchiveNoise::from_arcsec(1.0).unwrap(), catalog_columns(&attrs), rows, 10)
                .expect("fixture catalog is well formed")
        })
        .collect()
}
