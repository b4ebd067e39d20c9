//! Type-checked local predicates, evaluated row by row.

use std::cmp::Ordering;

use super::{NodeCatalog, NodeError};
use crate::query::{ArithOp, CompareOp, Expr, Predicate};
use crate::value::ColumnType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Num,
    Str,
}

#[derive(Debug, Clone)]
enum Compiled {
    Column(usize),
    Number(f64),
    Str(String),
    Neg(Box<Compiled>),
    Binary(ArithOp, Box<Compiled>, Box<Compiled>),
}

#[derive(Debug, Clone)]
pub struct CompiledPredicate {
    lhs: Compiled,
    op: CompareOp,
    rhs: Compiled,
    kind: Kind,
}

fn compile_expr(e: &Expr, alias: &str, cat: &NodeCatalog) -> Result<(Compiled, Kind), NodeError> {
    Ok(match e {
        Expr::Column(c) => {
            if c.alias != alias {
                return Err(NodeError::UnknownColumn(c.to_string()));
            }
            let idx = cat.column_index(&c.column).ok_or_else(|| NodeError::UnknownColumn(c.to_string()))?;
            let kind = if cat.columns()[idx].ty == ColumnType::String { Kind::Str } else { Kind::Num };
            (Compiled::Column(idx), kind)
        }
        Expr::Number(x) => (Compiled::Number(*x), Kind::Num),
        Expr::Str(s) => (Compiled::Str(s.clone()), Kind::Str),
        Expr::Neg(inner) => {
            let (c, k) = compile_expr(inner, alias, cat)?;
            if k != Kind::Num {
                return Err(NodeError::TypeError(format!("cannot negate string `{}`", crate::query::render_expr(inner))));
            }
            (Compiled::Neg(Box::new(c)), Kind::Num)
        }
        Expr::Binary { op, lhs, rhs } => {
            let (l, lk) = compile_expr(lhs, alias, cat)?;
            let (r, rk) = compile_expr(rhs, alias, cat)?;
            if lk != Kind::Num || rk != Kind::Num {
                return Err(NodeError::TypeError(format!("operator {} needs numbers", op.symbol())));
            }
            (Compiled::Binary(*op, Box::new(l), Box::new(r)), Kind::Num)
        }
    })
}

/// Resolves columns of `alias` against the catalog and checks types.
pub fn compile_predicates(preds: &[Predicate], alias: &str, cat: &NodeCatalog) -> Result<Vec<CompiledPredicate>, NodeError> {
    preds
        .iter()
        .map(|p| {
            let (lhs, lk) = compile_expr(&p.lhs, alias, cat)?;
            let (rhs, rk) = compile_expr(&p.rhs, alias, cat)?;
            if lk != rk {
                return Err(NodeError::TypeError(format!(
                    "`{}` compares a number with a string",
                    crate::query::render_predicate(p)
                )));
            }
            Ok(CompiledPredicate { lhs, op: p.op, rhs, kind: lk })
        })
        .collect()
}

fn num(c: &Compiled, cat: &NodeCatalog, row: usize) -> f64 {
    match c {
        Compiled::Column(i) => cat.float_at(row, *i).unwrap_or(f64::NAN),
        Compiled::Number(x) => *x,
        Compiled::Str(_) => f64::NAN,
        Compiled::Neg(inner) => -num(inner, cat, row),
        Compiled::Binary(op, l, r) => op.apply(num(l, cat, row), num(r, cat, row)),
    }
}

fn text<'a>(c: &'a Compiled, cat: &'a NodeCatalog, row: usize) -> &'a str {
    match c {
        Compiled::Column(i) => cat.str_at(row, *i).unwrap_or_default(),
        Compiled::Str(s) => s,
        _ => "",
    }
}

impl CompiledPredicate {
    /// Comparisons involving NaN are false.
    pub fn holds(&self, cat: &NodeCatalog, row: usize) -> bool {
        let ord = match self.kind {
            Kind::Num => num(&self.lhs, cat, row).partial_cmp(&num(&self.rhs, cat, row)),
            Kind::Str => Some(text(&self.lhs, cat, row).cmp(text(&self.rhs, cat, row))),
        };
        ord.is_some_and(|o: Ordering| self.op.holds(o))
    }
}

pub(crate) fn all_hold(preds: &[CompiledPredicate], cat: &NodeCatalog, row: usize) -> bool {
    preds.iter().all(|p| p.holds(cat, row))
}
