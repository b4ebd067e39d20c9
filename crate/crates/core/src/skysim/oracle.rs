//! Brute-force reference cross match. No index, no pruning: every
//! combination of admissible objects is folded and tested.

use std::collections::{BTreeSet, HashMap};

use super::{GroundTruth, SimError};
use crate::portal::result_key_column;
use crate::query::QueryAst;
use crate::skynode::{compile_predicates, CompiledPredicate, NodeCatalog};
use crate::sphere::angular_distance;
use crate::value::ResultTable;
use crate::xmatch::{Accumulators, Member};

pub const DEFAULT_ORACLE_GUARD: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    /// Refuse when the product of mandatory candidate counts exceeds this.
    pub max_product: u128,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_product: DEFAULT_ORACLE_GUARD }
    }
}

struct Admissible<'a> {
    alias: &'a str,
    cat: &'a NodeCatalog,
    rows: Vec<usize>,
}

fn admissible<'a>(ast: &'a QueryAst, alias: &'a str, catalogs: &'a [NodeCatalog]) -> Result<Admissible<'a>, SimError> {
    let b = ast.binding(alias).ok_or_else(|| SimError::Oracle(format!("alias {alias} is not bound")))?;
    let cat = catalogs
        .iter()
        .find(|c| c.archive_name() == b.archive_name)
        .ok_or_else(|| SimError::Oracle(format!("no catalog for archive {}", b.archive_name)))?;
    if cat.primary_table() != b.table_name {
        return Err(SimError::Oracle(format!("archive {} has no table {}", b.archive_name, b.table_name)));
    }
    let preds: Vec<_> = ast.predicates_for(alias).cloned().collect();
    let compiled: Vec<CompiledPredicate> = compile_predicates(&preds, alias, cat).map_err(|e| SimError::Oracle(e.to_string()))?;
    let (center, radius) = ast.area.circle();
    let rows = (0..cat.len())
        .filter(|&r| angular_distance(&cat.position(r), &center) <= radius && compiled.iter().all(|p| p.holds(cat, r)))
        .collect();
    Ok(Admissible { alias, cat, rows })
}

/// Evaluates `ast` over in-memory catalogs. Rows are projected onto the
/// SELECT list and sorted like the portal's output.
pub fn oracle_crossmatch(ast: &QueryAst, catalogs: &[NodeCatalog], limits: &OracleLimits) -> Result<ResultTable, SimError> {
    let mandatory: Vec<Admissible> =
        ast.mandatory_aliases().map(|a| admissible(ast, a, catalogs)).collect::<Result<_, _>>()?;
    let dropouts: Vec<Admissible> = ast.dropout_aliases().map(|a| admissible(ast, a, catalogs)).collect::<Result<_, _>>()?;
    let product = mandatory.iter().fold(1u128, |p, m| p.saturating_mul(m.rows.len() as u128));
    if product > limits.max_product {
        return Err(SimError::TooLargeForOracle { product, limit: limits.max_product });
    }
    let theta = ast.xmatch.threshold_sigma;

    // Column sources for each SELECT item: (member position, column index).
    let slots: Vec<(usize, usize)> = ast
        .select_items
        .iter()
        .map(|c| {
            let m = mandatory
                .iter()
                .position(|m| m.alias == c.alias)
                .ok_or_else(|| SimError::Oracle(format!("{c} is not a mandatory member column")))?;
            let col = mandatory[m].cat.column_index(&c.column).ok_or_else(|| SimError::Oracle(format!("unknown column {c}")))?;
            Ok((m, col))
        })
        .collect::<Result<_, SimError>>()?;

    let mut table = ResultTable::new(ast.select_items.iter().map(|c| c.to_string()).collect());
    if mandatory.iter().any(|m| m.rows.is_empty()) {
        return Ok(table);
    }
    let mut choice = vec![0usize; mandatory.len()];
    // prefix[k] folds the chosen objects of members 0..k. Sharing prefixes
    // saves work without skipping any combination.
    let mut prefix = vec![Accumulators::EMPTY; mandatory.len() + 1];
    let mut stale = 0;
    loop {
        for k in stale..mandatory.len() {
            let m = &mandatory[k];
            prefix[k + 1] = prefix[k].fold(&m.cat.position(m.rows[choice[k]]), m.cat.noise());
        }
        let acc = prefix[mandatory.len()];
        if acc.accepts(theta) {
            let blocked = dropouts.iter().any(|d| d.rows.iter().any(|&r| acc.fold(&d.cat.position(r), d.cat.noise()).accepts(theta)));
            if !blocked {
                table.rows.push(slots.iter().map(|&(m, col)| mandatory[m].cat.value(mandatory[m].rows[choice[m]], col)).collect());
            }
        }
        // Odometer increment, last member fastest.
        let mut i = mandatory.len();
        loop {
            if i == 0 {
                table.sort_rows(result_key_column(ast));
                return Ok(table);
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < mandatory[i].rows.len() {
                stale = i;
                break;
            }
            choice[i] = 0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchQuality {
    pub found: usize,
    pub true_positives: usize,
    /// Bodies detected by every listed archive.
    pub expected: usize,
    pub completeness: f64,
    pub purity: f64,
}

/// Scores found tuples against the bodies seen by all of `archives`. A tuple
/// is a true positive when all its members are observations of one body.
pub fn match_quality(found: &[Vec<Member>], truth: &GroundTruth, archives: &[&str]) -> MatchQuality {
    let by_object: HashMap<&str, HashMap<i64, usize>> = archives
        .iter()
        .map(|&a| {
            let ids = truth.observations.get(a).map(|v| v.as_slice()).unwrap_or_default();
            (a, ids.iter().enumerate().filter_map(|(body, id)| id.map(|id| (id, body))).collect())
        })
        .collect();
    let expected = (0..truth.bodies.len())
        .filter(|&b| archives.iter().all(|a| truth.observations.get(*a).is_some_and(|v| v[b].is_some())))
        .count();
    let mut hits = BTreeSet::new();
    let mut true_positives = 0;
    for tuple in found {
        let bodies: Option<BTreeSet<usize>> =
            tuple.iter().map(|m| by_object.get(m.archive.as_str()).and_then(|ids| ids.get(&m.object_id)).copied()).collect();
        let covers: BTreeSet<&str> = tuple.iter().map(|m| m.archive.as_str()).collect();
        if let Some(bodies) = bodies {
            if bodies.len() == 1 && covers.len() == archives.len() && archives.iter().all(|a| covers.contains(a)) {
                true_positives += 1;
                hits.extend(bodies);
            }
        }
    }
    MatchQuality {
        found: found.len(),
        true_positives,
        expected,
        completeness: if expected == 0 { 1.0 } else { hits.len() as f64 / expected as f64 },
        purity: if found.is_empty() { 1.0 } else { true_positives as f64 / found.len() as f64 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse;
    use crate::skysim::{dropout_micro_catalogs, generate, MICRO_DROPOUT_QUERY, MICRO_FULL_QUERY};
    use crate::value::Value;

    #[test]
    fn micro_catalog_semantics() {
        let cats = dropout_micro_catalogs();
        let full = oracle_crossmatch(&parse(MICRO_FULL_QUERY).unwrap(), &cats, &OracleLimits::default()).unwrap();
        assert_eq!(full.rows, [vec![Value::Int(1), Value::Int(1), Value::Int(1)]]);
        let drop = oracle_crossmatch(&parse(MICRO_DROPOUT_QUERY).unwrap(), &cats, &OracleLimits::default()).unwrap();
        assert_eq!(drop.rows, [vec![Value::Int(2), Value::Int(2)]]);
    }

    #[test]
    fn guard_refuses_large_products() {
        let cats = dropout_micro_catalogs();
        let err = oracle_crossmatch(&parse(MICRO_FULL_QUERY).unwrap(), &cats, &OracleLimits { max_product: 3 }).unwrap_err();
        assert!(matches!(err, SimError::TooLargeForOracle { product: 8, limit: 3 }));
    }

    fn pairs(table: &ResultTable) -> Vec<Vec<Member>> {
        table
            .rows
            .iter()
            .map(|r| {
                vec![
                    Member { archive: "A0".into(), object_id: r[0].as_f64().unwrap() as i64 },
                    Member { archive: "A1".into(), object_id: r[1].as_f64().unwrap() as i64 },
                ]
            })
            .collect()
    }

    const PAIR_QUERY: &str =
        "SELECT O.object_id, T.object_id FROM A0:T O, A1:T T WHERE AREA(185.0, -0.5, 1800) AND XMATCH(O, T) < 3.5";

    #[test]
    fn noiseless_sparse_field_is_perfect() {
        let sky = generate(&crate::skysim::tests::config(12, 200, &[1e-6, 1e-6], 1.0)).unwrap();
        let table = oracle_crossmatch(&parse(PAIR_QUERY).unwrap(), &sky.node_catalogs(10).unwrap(), &OracleLimits::default()).unwrap();
        let q = match_quality(&pairs(&table), &sky.truth, &["A0", "A1"]);
        assert_eq!((q.completeness, q.purity, q.expected), (1.0, 1.0, 200));
    }

    #[test]
    fn empty_result_conventions() {
        let sky = generate(&crate::skysim::tests::config(13, 50, &[0.1, 0.1], 1.0)).unwrap();
        let q = match_quality(&[], &sky.truth, &["A0", "A1"]);
        assert_eq!((q.completeness, q.purity), (0.0, 1.0));
    }

    #[test]
    fn default_sigma_completeness_over_seeds() {
        let (mut hits, mut expected) = (0.0, 0);
        for seed in 0..20 {
            let sky = generate(&crate::skysim::tests::config(seed, 300, &[0.1, 0.1], 0.9)).unwrap();
            let table = oracle_crossmatch(&parse(PAIR_QUERY).unwrap(), &sky.node_catalogs(10).unwrap(), &OracleLimits::default()).unwrap();
            let q = match_quality(&pairs(&table), &sky.truth, &["A0", "A1"]);
            hits += q.completeness * q.expected as f64;
            expected += q.expected;
            assert!(q.purity > 0.99, "seed {seed}: {q:?}");
        }
        assert!(hits / expected as f64 >= 0.99, "{}", hits / expected as f64);
    }

    #[test]
    fn quality_on_generated_sky() {
        let c = crate::skysim::tests::config(11, 300, &[0.1, 0.2], 0.9);
        let sky = generate(&c).unwrap();
        let cats = sky.node_catalogs(10).unwrap();
        let q = "SELECT O.object_id, T.object_id FROM A0:T O, A1:T T WHERE AREA(185.0, -0.5, 1800) AND XMATCH(O, T) < 3.5";
        let table = oracle_crossmatch(&parse(q).unwrap(), &cats, &OracleLimits::default()).unwrap();
        let found: Vec<Vec<Member>> = table
            .rows
            .iter()
            .map(|r| {
                vec![
                    Member { archive: "A0".into(), object_id: r[0].as_f64().unwrap() as i64 },
                    Member { archive: "A1".into(), object_id: r[1].as_f64().unwrap() as i64 },
                ]
            })
            .collect();
        let q = match_quality(&found, &sky.truth, &["A0", "A1"]);
        assert!(q.completeness > 0.97, "{q:?}");
        assert!(q.purity > 0.97, "{q:?}");
        assert_eq!(match_quality(&[], &sky.truth, &["A0"]).purity, 1.0);
    }
}
