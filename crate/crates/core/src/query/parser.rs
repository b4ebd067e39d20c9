use std::collections::HashSet;

use super::lexer::{tokenize, Keyword, Tok, Token};
use super::{
    AreaClause, ArchiveBinding, ArithOp, ColumnRef, CompareOp, Expr, ParseError, Predicate, QueryAst,
    SemanticError, XmatchClause, XmatchMember,
};

/// Expression nesting limit; deeper input is a syntax error rather than a
/// stack overflow.
const MAX_NESTING: usize = 64;

/// Parses and validates a query.
pub fn parse(text: &str) -> Result<QueryAst, ParseError> {
    let tokens = tokenize(text)?;
    let raw = Parser { tokens, at: 0, nesting: 0 }.query()?;
    Ok(analyze(raw)?)
}

/// Like [`parse`], for input that may not be UTF-8.
pub fn parse_bytes(bytes: &[u8]) -> Result<QueryAst, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse(text),
        Err(e) => Err(ParseError::Syntax {
            position: e.valid_up_to(),
            expected: vec!["UTF-8 text".into()],
            found: "invalid byte sequence".into(),
        }),
    }
}

struct RawQuery {
    select: Vec<ColumnRef>,
    from: Vec<ArchiveBinding>,
    areas: Vec<(f64, f64, f64)>,
    xmatches: Vec<XmatchClause>,
    predicates: Vec<Predicate>,
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    nesting: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> usize {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.at].tok.clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            position: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.error(&[&tok.describe()])
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(_) => match self.bump() {
                Tok::Ident(s) => Ok(s),
                _ => unreachable!(),
            },
            _ => self.error(&[what]),
        }
    }

    fn query(mut self) -> Result<RawQuery, ParseError> {
        self.expect(Tok::Keyword(Keyword::Select))?;
        let mut select = vec![self.column_ref()?];
        while self.eat(&Tok::Comma) {
            select.push(self.column_ref()?);
        }
        self.expect(Tok::Keyword(Keyword::From))?;
        let mut from = vec![self.binding()?];
        while self.eat(&Tok::Comma) {
            from.push(self.binding()?);
        }
        self.expect(Tok::Keyword(Keyword::Where))?;
        let mut raw = RawQuery { select, from, areas: Vec::new(), xmatches: Vec::new(), predicates: Vec::new() };
        loop {
            self.condition(&mut raw)?;
            if !self.eat(&Tok::Keyword(Keyword::And)) {
                break;
            }
        }
        if *self.peek() != Tok::Eof {
            return self.error(&["AND", "end of input"]);
        }
        Ok(raw)
    }

    fn column_ref(&mut self) -> Result<ColumnRef, ParseError> {
        let alias = self.ident("alias")?;
        self.expect(Tok::Dot)?;
        let column = self.ident("column name")?;
        Ok(ColumnRef { alias, column })
    }

    fn binding(&mut self) -> Result<ArchiveBinding, ParseError> {
        let archive_name = self.ident("archive name")?;
        self.expect(Tok::Colon)?;
        let table_name = self.ident("table name")?;
        let alias = self.ident("alias")?;
        Ok(ArchiveBinding { archive_name, table_name, alias })
    }

    fn signed_number(&mut self) -> Result<f64, ParseError> {
        let sign = if self.eat(&Tok::Minus) {
            -1.0
        } else {
            self.eat(&Tok::Plus);
            1.0
        };
        match self.peek() {
            Tok::Number(n) => {
                let n = *n;
                self.bump();
                Ok(sign * n)
            }
            _ => self.error(&["number"]),
        }
    }

    fn condition(&mut self, raw: &mut RawQuery) -> Result<(), ParseError> {
        match self.peek() {
            Tok::Keyword(Keyword::Area) => {
                self.bump();
                self.expect(Tok::LParen)?;
                let ra = self.signed_number()?;
                self.expect(Tok::Comma)?;
                let dec = self.signed_number()?;
                self.expect(Tok::Comma)?;
                let radius = self.signed_number()?;
                self.expect(Tok::RParen)?;
                raw.areas.push((ra, dec, radius));
            }
            Tok::Keyword(Keyword::Xmatch) => {
                self.bump();
                self.expect(Tok::LParen)?;
                let mut members = vec![self.xmatch_member()?];
                while self.eat(&Tok::Comma) {
                    members.push(self.xmatch_member()?);
                }
                self.expect(Tok::RParen)?;
                if !(self.eat(&Tok::Lt) || self.eat(&Tok::Le)) {
                    return self.error(&["`<`", "`<=`"]);
                }
                let threshold_sigma = self.signed_number()?;
                raw.xmatches.push(XmatchClause { members, threshold_sigma });
            }
            _ => {
                let lhs = self.expr()?;
                let op = match self.peek() {
                    Tok::Eq => CompareOp::Eq,
                    Tok::Ne => CompareOp::Ne,
                    Tok::Lt => CompareOp::Lt,
                    Tok::Gt => CompareOp::Gt,
                    Tok::Le => CompareOp::Le,
                    Tok::Ge => CompareOp::Ge,
                    _ => return self.error(&["comparison operator"]),
                };
                self.bump();
                let rhs = self.expr()?;
                raw.predicates.push(Predicate { lhs, op, rhs });
            }
        }
        Ok(())
    }

    fn xmatch_member(&mut self) -> Result<XmatchMember, ParseError> {
        let dropout = self.eat(&Tok::Bang);
        let alias = self.ident("alias")?;
        Ok(XmatchMember { alias, dropout })
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, ParseError>) -> Result<T, ParseError> {
        if self.nesting >= MAX_NESTING {
            return self.error(&["shallower expression"]);
        }
        self.nesting += 1;
        let r = f(self);
        self.nesting -= 1;
        r
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.nested(|p| {
            let mut lhs = p.term()?;
            loop {
                let op = match p.peek() {
                    Tok::Plus => ArithOp::Add,
                    Tok::Minus => ArithOp::Sub,
                    _ => break,
                };
                p.bump();
                let rhs = p.term()?;
                lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
            }
            Ok(lhs)
        })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => break,
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Minus => {
                self.bump();
                self.nested(|p| Ok(Expr::Neg(Box::new(p.unary()?))))
            }
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Number(n))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat(&Tok::Dot) {
                    let column = self.ident("column name")?;
                    Ok(Expr::Column(ColumnRef { alias: name, column }))
                } else {
                    Ok(Expr::Str(name))
                }
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => self.error(&["expression"]),
        }
    }
}

fn analyze(raw: RawQuery) -> Result<QueryAst, SemanticError> {
    let mut aliases = HashSet::new();
    for b in &raw.from {
        if !aliases.insert(b.alias.as_str()) {
            return Err(SemanticError::DuplicateAlias(b.alias.clone()));
        }
    }
    let known = |alias: &str| -> Result<(), SemanticError> {
        if aliases.contains(alias) {
            Ok(())
        } else {
            Err(SemanticError::UnknownAlias(alias.to_string()))
        }
    };

    let area = match raw.areas.as_slice() {
        [] => return Err(SemanticError::MissingArea),
        [(ra, dec, r)] => AreaClause::new(*ra, *dec, *r)?,
        _ => return Err(SemanticError::DuplicateArea),
    };

    let mut xmatches = raw.xmatches;
    let xmatch = match xmatches.len() {
        0 => return Err(SemanticError::MissingXmatch),
        1 => xmatches.pop().expect("one element"),
        _ => return Err(SemanticError::DuplicateXmatch),
    };
    if xmatch.members.len() < 2 {
        return Err(SemanticError::XmatchArity(xmatch.members.len()));
    }
    let mut seen = HashSet::new();
    for m in &xmatch.members {
        known(&m.alias)?;
        if !seen.insert(m.alias.as_str()) {
            return Err(SemanticError::DuplicateXmatchMember(m.alias.clone()));
        }
    }
    if xmatch.members.iter().all(|m| m.dropout) {
        return Err(SemanticError::NoMandatoryMember);
    }
    if xmatch.threshold_sigma.is_nan() || xmatch.threshold_sigma <= 0.0 {
        return Err(SemanticError::InvalidThreshold(xmatch.threshold_sigma));
    }
    for b in &raw.from {
        if !seen.contains(b.alias.as_str()) {
            return Err(SemanticError::NotInXmatch(b.alias.clone()));
        }
    }
    let dropout = |alias: &str| xmatch.members.iter().any(|m| m.alias == alias && m.dropout);

    for c in &raw.select {
        known(&c.alias)?;
        if dropout(&c.alias) {
            return Err(SemanticError::DropoutSelected(c.to_string()));
        }
    }

    for p in &raw.predicates {
        let text = super::render::render_predicate(p);
        let cols = p.columns();
        let Some(first) = cols.first() else {
            return Err(SemanticError::ConstantPredicate(text));
        };
        for c in &cols {
            known(&c.alias)?;
        }
        if cols.iter().any(|c| c.alias != first.alias) {
            return Err(SemanticError::CrossArchivePredicate(text));
        }
        if dropout(&first.alias) {
            return Err(SemanticError::DropoutPredicate(text));
        }
    }

    Ok(QueryAst { select_items: raw.select, archives: raw.from, area, xmatch, predicates: raw.predicates })
}
