//! Typed messages and their field-tagged encodings.
//!
//! Payload kinds:
//!
//! | kind | message                | action       |
//! |------|------------------------|--------------|
//! | 1    | registration request   | Registration |
//! | 2    | metadata request       | Metadata     |
//! | 3    | schema description     | Metadata     |
//! | 4    | information request    | Information  |
//! | 5    | node information       | Information  |
//! | 6    | node query             | Query        |
//! | 7    | count or row set       | Query        |
//! | 8    | plan + stage           | CrossMatch   |
//! | 9    | partial result set     | CrossMatch   |
//! | 10   | query text             | SkyQuery     |
//! | 11   | result table           | SkyQuery     |
//! | 12   | ack                    | Ack          |
//! | 13   | error {kind, message}  | Error        |

use super::codec::{Field, FieldWriter, Fields, WireType, SCHEMA_VERSION};
use super::{Action, WireError};
use crate::portal::{ExecutionPlan, PlanStage, RegistrationRequest, StageRole};
use crate::query::{
    AreaClause, ArithOp, ColumnRef, CompareOp, Expr, NodeQuery, Predicate, Projection,
};
use crate::skynode::{
    CarriedColumn, ColumnSchema, NodeInformation, PartialResultSet, QueryResult, RowSet, SchemaDescription,
    TableSchema,
};
use crate::value::{ColumnType, ResultTable, Value};
use crate::xmatch::{Accumulators, ArchiveNoise, CandidateTuple, Member};

const MAX_EXPR_DEPTH: usize = 64;

/// Error reply carried by the `Error` action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteError {
    pub kind: String,
    pub message: String,
}

impl RemoteError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        RemoteError { kind: kind.into(), message: message.into() }
    }
}

impl std::fmt::Display for RemoteError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Registration(RegistrationRequest),
    MetadataRequest,
    Metadata(SchemaDescription),
    InformationRequest,
    Information(NodeInformation),
    Query(NodeQuery),
    QueryResult(QueryResult),
    CrossMatch { plan: ExecutionPlan, stage: u32 },
    CrossMatchResult(PartialResultSet),
    SkyQuery(String),
    SkyQueryResult(ResultTable),
    Ack(String),
    Error(RemoteError),
}

impl Message {
    pub fn error(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Message::Error(RemoteError::new(kind, message))
    }

    pub fn kind(&self) -> u8 {
        match self {
            Message::Registration(_) => 1,
            Message::MetadataRequest => 2,
            Message::Metadata(_) => 3,
            Message::InformationRequest => 4,
            Message::Information(_) => 5,
            Message::Query(_) => 6,
            Message::QueryResult(_) => 7,
            Message::CrossMatch { .. } => 8,
            Message::CrossMatchResult(_) => 9,
            Message::SkyQuery(_) => 10,
            Message::SkyQueryResult(_) => 11,
            Message::Ack(_) => 12,
            Message::Error(_) => 13,
        }
    }

    pub fn action(&self) -> Action {
        action_for_kind(self.kind()).expect("every message kind has an action")
    }

    pub fn to_payload(&self) -> Vec<u8> {
        let mut w = FieldWriter::new();
        match self {
            Message::Registration(r) => {
                w.str(1, &r.archive_name).str(2, &r.endpoint);
            }
            Message::MetadataRequest | Message::InformationRequest => {}
            Message::Metadata(s) => put_schema(&mut w, s),
            Message::Information(i) => {
                w.str(1, &i.archive_name).f64(2, i.noise.sigma_rad()).str(3, &i.primary_table);
            }
            Message::Query(q) => put_node_query(&mut w, q),
            Message::QueryResult(QueryResult::Count(n)) => {
                w.u64(1, *n);
            }
            Message::QueryResult(QueryResult::Rows(rs)) => {
                for c in &rs.columns {
                    w.nested(2, |n| put_column_schema(n, c));
                }
                for row in &rs.rows {
                    w.nested(3, |n| put_values(n, 1, row));
                }
            }
            Message::CrossMatch { plan, stage } => {
                w.nested(1, |n| put_plan(n, plan)).u64(2, *stage as u64);
            }
            Message::CrossMatchResult(p) => put_partial(&mut w, p),
            Message::SkyQuery(text) => {
                w.str(1, text);
            }
            Message::SkyQueryResult(t) => {
                for c in &t.columns {
                    w.str(1, c);
                }
                for row in &t.rows {
                    w.nested(2, |n| put_values(n, 1, row));
                }
            }
            Message::Ack(text) => {
                w.str(1, text);
            }
            Message::Error(e) => {
                w.str(1, &e.kind).str(2, &e.message);
            }
        }
        let body = w.into_bytes();
        let mut out = Vec::with_capacity(body.len() + 2);
        out.push(SCHEMA_VERSION);
        out.push(self.kind());
        out.extend(body);
        out
    }

    pub fn from_payload(action: Action, payload: &[u8]) -> Result<Message, WireError> {
        let [version, kind, ..] = payload else {
            return Err(WireError::MalformedPayload("payload shorter than its header".into()));
        };
        if *version != SCHEMA_VERSION {
            return Err(WireError::MalformedPayload(format!("unsupported schema version {version}")));
        }
        let expected = action_for_kind(*kind).ok_or_else(|| WireError::MalformedPayload(format!("unknown message kind {kind}")))?;
        if expected != action {
            return Err(WireError::MalformedPayload(format!("message kind {kind} sent under action {action}")));
        }
        let f = Fields::parse(&payload[2..])?;
        Ok(match kind {
            1 => Message::Registration(RegistrationRequest { archive_name: f.string(1)?, endpoint: f.string(2)? }),
            2 => Message::MetadataRequest,
            3 => Message::Metadata(get_schema(&f)?),
            4 => Message::InformationRequest,
            5 => Message::Information(NodeInformation {
                archive_name: f.string(1)?,
                noise: noise(f.f64(2)?)?,
                primary_table: f.string(3)?,
            }),
            6 => Message::Query(get_node_query(&f)?),
            7 => match f.first(1) {
                Some(count) => Message::QueryResult(QueryResult::Count(count.as_u64()?)),
                None => Message::QueryResult(QueryResult::Rows(RowSet {
                    columns: f.nested_all(2)?.iter().map(get_column_schema).collect::<Result<_, _>>()?,
                    rows: f.nested_all(3)?.iter().map(|r| get_values(r, 1)).collect::<Result<_, _>>()?,
                })),
            },
            8 => Message::CrossMatch { plan: get_plan(&f.nested(1)?)?, stage: u32_field(&f, 2)? },
            9 => Message::CrossMatchResult(get_partial(&f)?),
            10 => Message::SkyQuery(f.string(1)?),
            11 => Message::SkyQueryResult(ResultTable {
                columns: f.strings(1)?,
                rows: f.nested_all(2)?.iter().map(|r| get_values(r, 1)).collect::<Result<_, _>>()?,
            }),
            12 => Message::Ack(f.string(1)?),
            13 => Message::Error(RemoteError { kind: f.string(1)?, message: f.string(2)? }),
            _ => unreachable!("kind validated above"),
        })
    }
}

fn action_for_kind(kind: u8) -> Option<Action> {
    Some(match kind {
        1 => Action::Registration,
        2 | 3 => Action::Metadata,
        4 | 5 => Action::Information,
        6 | 7 => Action::Query,
        8 | 9 => Action::CrossMatch,
        10 | 11 => Action::SkyQuery,
        12 => Action::Ack,
        13 => Action::Error,
        _ => return None,
    })
}

fn malformed(what: impl std::fmt::Display) -> WireError {
    WireError::MalformedPayload(what.to_string())
}

fn noise(sigma_rad: f64) -> Result<ArchiveNoise, WireError> {
    ArchiveNoise::new(sigma_rad).map_err(malformed)
}

fn u32_field(f: &Fields<'_>, tag: u16) -> Result<u32, WireError> {
    u32::try_from(f.u64(tag)?).map_err(|_| malformed(format!("field {tag} exceeds u32")))
}

fn column_type(s: &str) -> Result<ColumnType, WireError> {
    ColumnType::parse(s).ok_or_else(|| malformed(format!("unknown column type {s}")))
}

fn put_value(w: &mut FieldWriter, tag: u16, v: &Value) {
    match v {
        Value::Int(i) => w.i64(tag, *i),
        Value::Float(x) => w.f64(tag, *x),
        Value::Str(s) => w.str(tag, s),
    };
}

fn get_value(field: &Field<'_>) -> Result<Value, WireError> {
    match field.ty {
        WireType::I64 => field.as_i64().map(Value::Int),
        WireType::F64 => field.as_f64().map(Value::Float),
        WireType::Str => field.as_str().map(|s| Value::Str(s.to_string())),
        other => Err(malformed(format!("cell of wire type {other:?}"))),
    }
}

fn put_values(w: &mut FieldWriter, tag: u16, values: &[Value]) {
    for v in values {
        put_value(w, tag, v);
    }
}

fn get_values(f: &Fields<'_>, tag: u16) -> Result<Vec<Value>, WireError> {
    f.all(tag).map(get_value).collect()
}

fn put_column_schema(w: &mut FieldWriter, c: &ColumnSchema) {
    w.str(1, &c.name).str(2, c.ty.as_str());
}

fn get_column_schema(f: &Fields<'_>) -> Result<ColumnSchema, WireError> {
    Ok(ColumnSchema { name: f.string(1)?, ty: column_type(f.str(2)?)? })
}

fn put_schema(w: &mut FieldWriter, s: &SchemaDescription) {
    w.str(1, &s.archive_name);
    for t in &s.tables {
        w.nested(2, |n| {
            n.str(1, &t.name);
            for c in &t.columns {
                n.nested(2, |m| put_column_schema(m, c));
            }
            n.u64(3, t.row_count);
        });
    }
}

fn get_schema(f: &Fields<'_>) -> Result<SchemaDescription, WireError> {
    let tables = f
        .nested_all(2)?
        .iter()
        .map(|t| {
            Ok(TableSchema {
                name: t.string(1)?,
                columns: t.nested_all(2)?.iter().map(get_column_schema).collect::<Result<_, _>>()?,
                row_count: t.u64(3)?,
            })
        })
        .collect::<Result<_, WireError>>()?;
    Ok(SchemaDescription { archive_name: f.string(1)?, tables })
}

fn put_area(w: &mut FieldWriter, a: &AreaClause) {
    w.f64(1, a.ra_deg).f64(2, a.dec_deg).f64(3, a.radius_arcsec);
}

fn get_area(f: &Fields<'_>) -> Result<AreaClause, WireError> {
    AreaClause::new(f.f64(1)?, f.f64(2)?, f.f64(3)?).map_err(malformed)
}

fn put_column_ref(w: &mut FieldWriter, c: &ColumnRef) {
    w.str(1, &c.alias).str(2, &c.column);
}

fn get_column_ref(f: &Fields<'_>) -> Result<ColumnRef, WireError> {
    Ok(ColumnRef::new(f.string(1)?, f.string(2)?))
}

// Expr node: kind 1 (0 column, 1 number, 2 string, 3 negation, 4 binary),
// then column 2, number 3, string 4, operand 5, op 6, right operand 7.
fn put_expr(w: &mut FieldWriter, e: &Expr) {
    match e {
        Expr::Column(c) => {
            w.u64(1, 0).nested(2, |n| put_column_ref(n, c));
        }
        Expr::Number(x) => {
            w.u64(1, 1).f64(3, *x);
        }
        Expr::Str(s) => {
            w.u64(1, 2).str(4, s);
        }
        Expr::Neg(inner) => {
            w.u64(1, 3).nested(5, |n| put_expr(n, inner));
        }
        Expr::Binary { op, lhs, rhs } => {
            w.u64(1, 4).nested(5, |n| put_expr(n, lhs)).str(6, op.symbol()).nested(7, |n| put_expr(n, rhs));
        }
    }
}

fn get_expr(f: &Fields<'_>, depth: usize) -> Result<Expr, WireError> {
    if depth > MAX_EXPR_DEPTH {
        return Err(malformed("expression nested too deeply"));
    }
    Ok(match f.u64(1)? {
        0 => Expr::Column(get_column_ref(&f.nested(2)?)?),
        1 => Expr::Number(f.f64(3)?),
        2 => Expr::Str(f.string(4)?),
        3 => Expr::Neg(Box::new(get_expr(&f.nested(5)?, depth + 1)?)),
        4 => Expr::Binary {
            op: ArithOp::from_symbol(f.str(6)?).ok_or_else(|| malformed("unknown arithmetic operator"))?,
            lhs: Box::new(get_expr(&f.nested(5)?, depth + 1)?),
            rhs: Box::new(get_expr(&f.nested(7)?, depth + 1)?),
        },
        k => return Err(malformed(format!("unknown expression kind {k}"))),
    })
}

fn put_predicate(w: &mut FieldWriter, p: &Predicate) {
    w.nested(1, |n| put_expr(n, &p.lhs)).str(2, p.op.symbol()).nested(3, |n| put_expr(n, &p.rhs));
}

fn get_predicate(f: &Fields<'_>) -> Result<Predicate, WireError> {
    Ok(Predicate {
        lhs: get_expr(&f.nested(1)?, 0)?,
        op: CompareOp::from_symbol(f.str(2)?).ok_or_else(|| malformed("unknown comparison operator"))?,
        rhs: get_expr(&f.nested(3)?, 0)?,
    })
}

fn put_node_query(w: &mut FieldWriter, q: &NodeQuery) {
    w.str(1, &q.archive).str(2, &q.alias).str(3, &q.table).nested(4, |n| put_area(n, &q.area));
    for p in &q.predicates {
        w.nested(5, |n| put_predicate(n, p));
    }
    match &q.projection {
        Projection::CountStar => {
            w.bool(6, true);
        }
        Projection::Columns(cols) => {
            w.bool(6, false);
            for c in cols {
                w.str(7, c);
            }
        }
    }
}

fn get_node_query(f: &Fields<'_>) -> Result<NodeQuery, WireError> {
    Ok(NodeQuery {
        archive: f.string(1)?,
        alias: f.string(2)?,
        table: f.string(3)?,
        area: get_area(&f.nested(4)?)?,
        predicates: f.nested_all(5)?.iter().map(get_predicate).collect::<Result<_, _>>()?,
        projection: if f.bool(6)? { Projection::CountStar } else { Projection::Columns(f.strings(7)?) },
    })
}

fn put_stage(w: &mut FieldWriter, s: &PlanStage) {
    w.str(1, &s.archive_name)
        .str(2, &s.endpoint)
        .nested(3, |n| put_node_query(n, &s.node_query))
        .u64(4, matches!(s.role, StageRole::Dropout) as u64)
        .f64(5, s.noise.sigma_rad());
    if let Some(c) = s.count {
        w.u64(6, c);
    }
}

fn get_stage(f: &Fields<'_>) -> Result<PlanStage, WireError> {
    Ok(PlanStage {
        archive_name: f.string(1)?,
        endpoint: f.string(2)?,
        node_query: get_node_query(&f.nested(3)?)?,
        role: match f.u64(4)? {
            0 => StageRole::Mandatory,
            1 => StageRole::Dropout,
            r => return Err(malformed(format!("unknown stage role {r}"))),
        },
        noise: noise(f.f64(5)?)?,
        count: f.first(6).map(Field::as_u64).transpose()?,
    })
}

fn put_plan(w: &mut FieldWriter, p: &ExecutionPlan) {
    for s in &p.stages {
        w.nested(1, |n| put_stage(n, s));
    }
    w.f64(2, p.theta).nested(3, |n| put_area(n, &p.area));
    for c in &p.select {
        w.nested(4, |n| put_column_ref(n, c));
    }
    w.bytes(5, &p.correlation_id.to_le_bytes());
}

fn get_plan(f: &Fields<'_>) -> Result<ExecutionPlan, WireError> {
    let cid: [u8; 16] = f
        .first(5)
        .ok_or_else(|| malformed("missing correlation id"))?
        .as_bytes()?
        .try_into()
        .map_err(|_| malformed("correlation id must be 16 bytes"))?;
    Ok(ExecutionPlan {
        stages: f.nested_all(1)?.iter().map(get_stage).collect::<Result<_, _>>()?,
        theta: f.f64(2)?,
        area: get_area(&f.nested(3)?)?,
        select: f.nested_all(4)?.iter().map(get_column_ref).collect::<Result<_, _>>()?,
        correlation_id: u128::from_le_bytes(cid),
    })
}

fn put_tuple(w: &mut FieldWriter, t: &CandidateTuple) {
    for m in &t.members {
        w.nested(1, |n| {
            n.str(1, &m.archive).i64(2, m.object_id);
        });
    }
    let acc = &t.acc;
    w.nested(2, |n| {
        n.f64(1, acc.a).f64(2, acc.ax).f64(3, acc.ay).f64(4, acc.az).u64(5, acc.n as u64).f64(6, acc.excess());
    });
    put_values(w, 3, &t.carried);
}

fn get_tuple(f: &Fields<'_>) -> Result<CandidateTuple, WireError> {
    let members = f
        .nested_all(1)?
        .iter()
        .map(|m| Ok(Member { archive: m.string(1)?, object_id: m.i64(2)? }))
        .collect::<Result<_, WireError>>()?;
    let a = f.nested(2)?;
    let acc = Accumulators::from_parts(a.f64(1)?, a.f64(2)?, a.f64(3)?, a.f64(4)?, u32_field(&a, 5)?, a.f64(6)?);
    Ok(CandidateTuple { members, acc, carried: get_values(f, 3)? })
}

fn put_partial(w: &mut FieldWriter, p: &PartialResultSet) {
    for c in &p.schema {
        w.nested(2, |n| {
            n.str(1, &c.alias).str(2, &c.column).str(3, c.ty.as_str());
        });
    }
    w.u64(3, p.stage as u64);
    for t in &p.transfers {
        w.u64(4, *t);
    }
    for t in &p.tuples {
        w.nested(1, |n| put_tuple(n, t));
    }
}

fn get_partial(f: &Fields<'_>) -> Result<PartialResultSet, WireError> {
    let schema = f
        .nested_all(2)?
        .iter()
        .map(|c| Ok(CarriedColumn { alias: c.string(1)?, column: c.string(2)?, ty: column_type(c.str(3)?)? }))
        .collect::<Result<_, WireError>>()?;
    Ok(PartialResultSet {
        tuples: f.nested_all(1)?.iter().map(get_tuple).collect::<Result<_, _>>()?,
        schema,
        stage: u32_field(f, 3)?,
        transfers: f.all(4).map(Field::as_u64).collect::<Result<_, _>>()?,
    })
}
