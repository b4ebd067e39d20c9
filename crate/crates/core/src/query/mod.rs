//! The cross-match query dialect.
//!
//! ```text
//! query      := SELECT colref {, colref} FROM binding {, binding}
//!               WHERE condition {AND condition}
//! binding    := archive ':' table alias
//! condition  := AREA '(' ra ',' dec ',' radius_arcsec ')'
//!             | XMATCH '(' ['!'] alias {, ['!'] alias} ')' ('<' | '<=') theta
//!             | expr cmp expr
//! expr       := term {('+' | '-') term}
//! term       := unary {('*' | '/') unary}
//! unary      := '-' unary | number | 'string' | ident | alias '.' column | '(' expr ')'
//! ```
//!
//! Keywords are case-insensitive; identifiers keep their case. A bare
//! identifier in an expression is a symbolic string constant (`GALAXY`).

mod fragment;
mod lexer;
mod parser;
mod render;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sphere::{radec_to_unit, SkyPosition, ARCSEC};

pub use fragment::{fragment, to_count_query, NodeQuery, Projection, ID_COLUMN, POSITION_COLUMNS};
pub use parser::{parse, parse_bytes};
pub(crate) use render::{render_expr, render_predicate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {position}: expected {}, found {found}", expected.join(" or "))]
    Syntax { position: usize, expected: Vec<String>, found: String },
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticError {
    #[error("unknown alias `{0}`")]
    UnknownAlias(String),
    #[error("alias `{0}` bound more than once")]
    DuplicateAlias(String),
    #[error("query has no AREA clause")]
    MissingArea,
    #[error("query has more than one AREA clause")]
    DuplicateArea,
    #[error("invalid AREA: {0}")]
    InvalidArea(String),
    #[error("query has no XMATCH clause")]
    MissingXmatch,
    #[error("query has more than one XMATCH clause")]
    DuplicateXmatch,
    #[error("XMATCH needs at least 2 members, got {0}")]
    XmatchArity(usize),
    #[error("XMATCH lists `{0}` more than once")]
    DuplicateXmatchMember(String),
    #[error("XMATCH needs at least one mandatory (non drop-out) member")]
    NoMandatoryMember,
    #[error("XMATCH threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("archive alias `{0}` is bound in FROM but missing from XMATCH")]
    NotInXmatch(String),
    #[error("predicate `{0}` spans more than one archive")]
    CrossArchivePredicate(String),
    #[error("predicate `{0}` references a drop-out archive")]
    DropoutPredicate(String),
    #[error("predicate `{0}` references no archive column")]
    ConstantPredicate(String),
    #[error("cannot select `{0}` from a drop-out archive")]
    DropoutSelected(String),
}

/// `alias.column`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub alias: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(alias: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef { alias: alias.into(), column: column.into() }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.alias, self.column)
    }
}

/// `archive : table alias` in the FROM list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveBinding {
    pub archive_name: String,
    pub table_name: String,
    pub alias: String,
}

/// Circular search region. Radius is in arcseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaClause {
    pub ra_deg: f64,
    pub dec_deg: f64,
    pub radius_arcsec: f64,
}

impl AreaClause {
    pub fn new(ra_deg: f64, dec_deg: f64, radius_arcsec: f64) -> Result<Self, SemanticError> {
        if !(radius_arcsec.is_finite() && radius_arcsec > 0.0) {
            return Err(SemanticError::InvalidArea(format!("radius {radius_arcsec} must be > 0")));
        }
        if !ra_deg.is_finite() || !dec_deg.is_finite() || !(-90.0..=90.0).contains(&dec_deg) {
            return Err(SemanticError::InvalidArea(format!("center ({ra_deg}, {dec_deg}) out of range")));
        }
        Ok(AreaClause { ra_deg: ra_deg.rem_euclid(360.0), dec_deg, radius_arcsec })
    }

    pub fn center(&self) -> SkyPosition {
        radec_to_unit(self.ra_deg, self.dec_deg).expect("validated at construction")
    }

    pub fn radius_rad(&self) -> f64 {
        self.radius_arcsec * ARCSEC
    }

    /// Center and angular radius (radians).
    pub fn circle(&self) -> (SkyPosition, f64) {
        (self.center(), self.radius_rad())
    }

    pub fn contains(&self, p: &SkyPosition) -> bool {
        crate::sphere::angular_distance(p, &self.center()) <= self.radius_rad()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XmatchMember {
    pub alias: String,
    pub dropout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XmatchClause {
    pub members: Vec<XmatchMember>,
    pub threshold_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
            CompareOp::Le => "<=",
            CompareOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Gt, CompareOp::Le, CompareOp::Ge]
            .into_iter()
            .find(|op| op.symbol() == s)
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CompareOp::Eq => ord == Equal,
            CompareOp::Ne => ord != Equal,
            CompareOp::Lt => ord == Less,
            CompareOp::Gt => ord == Greater,
            CompareOp::Le => ord != Greater,
            CompareOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div].into_iter().find(|op| op.symbol() == s)
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Number(f64),
    Str(String),
    Neg(Box<Expr>),
    Binary { op: ArithOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

impl Expr {
    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a ColumnRef>) {
        match self {
            Expr::Column(c) => out.push(c),
            Expr::Number(_) | Expr::Str(_) => {}
            Expr::Neg(e) => e.collect_columns(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_columns(out);
                rhs.collect_columns(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub lhs: Expr,
    pub op: CompareOp,
    pub rhs: Expr,
}

impl Predicate {
    pub fn columns(&self) -> Vec<&ColumnRef> {
        let mut c = self.lhs.columns();
        c.extend(self.rhs.columns());
        c
    }

    /// The single alias every column in the predicate refers to.
    pub fn alias(&self) -> Option<&str> {
        self.columns().first().map(|c| c.alias.as_str())
    }
}

/// A validated cross-match query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryAst {
    pub select_items: Vec<ColumnRef>,
    pub archives: Vec<ArchiveBinding>,
    pub area: AreaClause,
    pub xmatch: XmatchClause,
    pub predicates: Vec<Predicate>,
}

impl QueryAst {
    pub fn binding(&self, alias: &str) -> Option<&ArchiveBinding> {
        self.archives.iter().find(|b| b.alias == alias)
    }

    pub fn is_dropout(&self, alias: &str) -> bool {
        self.xmatch.members.iter().any(|m| m.alias == alias && m.dropout)
    }

    pub fn mandatory_aliases(&self) -> impl Iterator<Item = &str> {
        self.xmatch.members.iter().filter(|m| !m.dropout).map(|m| m.alias.as_str())
    }

    pub fn dropout_aliases(&self) -> impl Iterator<Item = &str> {
        self.xmatch.members.iter().filter(|m| m.dropout).map(|m| m.alias.as_str())
    }

    pub fn predicates_for<'a>(&'a self, alias: &'a str) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.predicates.iter().filter(move |p| p.alias() == Some(alias))
    }

    /// Selected columns of `alias`, deduplicated, in SELECT order.
    pub fn select_columns_for(&self, alias: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in self.select_items.iter().filter(|c| c.alias == alias) {
            if !out.contains(&c.column) {
                out.push(c.column.clone());
            }
        }
        out
    }

    /// Canonical text form; reparses to an identical AST.
    pub fn render(&self) -> String {
        render::render_query(self)
    }
}

impl fmt::Display for QueryAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
