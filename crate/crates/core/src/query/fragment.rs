use std::fmt;

use super::render::{render_area, render_predicate};
use super::{AreaClause, Predicate, QueryAst, SemanticError};

/// Object identifier column every catalog carries.
pub const ID_COLUMN: &str = "object_id";
/// Position columns every catalog carries, in degrees.
pub const POSITION_COLUMNS: [&str; 2] = ["ra_deg", "dec_deg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Projection {
    Columns(Vec<String>),
    CountStar,
}

/// The part of a cross-match query one node evaluates on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeQuery {
    pub archive: String,
    pub alias: String,
    pub table: String,
    pub area: AreaClause,
    pub predicates: Vec<Predicate>,
    pub projection: Projection,
}

impl NodeQuery {
    pub fn is_count(&self) -> bool {
        self.projection == Projection::CountStar
    }
}

impl fmt::Display for NodeQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let select = match &self.projection {
            Projection::CountStar => "count(*)".to_string(),
            Projection::Columns(cols) => cols.join(", "),
        };
        write!(f, "SELECT {select} FROM {}:{} {} WHERE {}", self.archive, self.table, self.alias, render_area(&self.area))?;
        for p in &self.predicates {
            write!(f, " AND {}", render_predicate(p))?;
        }
        Ok(())
    }
}

/// Archive-local fragment for `alias`: its table, the AREA, its own
/// predicates, and the id, selected and position columns.
pub fn fragment(ast: &QueryAst, alias: &str) -> Result<NodeQuery, SemanticError> {
    let binding = ast.binding(alias).ok_or_else(|| SemanticError::UnknownAlias(alias.to_string()))?;
    let mut columns = vec![ID_COLUMN.to_string()];
    for c in ast.select_columns_for(alias) {
        if !columns.contains(&c) {
            columns.push(c);
        }
    }
    for c in POSITION_COLUMNS {
        if !columns.iter().any(|x| x == c) {
            columns.push(c.to_string());
        }
    }
    Ok(NodeQuery {
        archive: binding.archive_name.clone(),
        alias: alias.to_string(),
        table: binding.table_name.clone(),
        area: ast.area,
        predicates: ast.predicates_for(alias).cloned().collect(),
        projection: Projection::Columns(columns),
    })
}

/// Count-star performance query: same AREA and predicates, `COUNT(*)`
/// projection.
pub fn to_count_query(fragment: &NodeQuery) -> NodeQuery {
    NodeQuery { projection: Projection::CountStar, ..fragment.clone() }
}
