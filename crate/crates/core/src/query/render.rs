use super::{AreaClause, Expr, Predicate, QueryAst};

pub(crate) fn render_query(q: &QueryAst) -> String {
    let select: Vec<String> = q.select_items.iter().map(|c| c.to_string()).collect();
    let from: Vec<String> =
        q.archives.iter().map(|b| format!("{}:{} {}", b.archive_name, b.table_name, b.alias)).collect();
    let members: Vec<String> = q
        .xmatch
        .members
        .iter()
        .map(|m| if m.dropout { format!("!{}", m.alias) } else { m.alias.clone() })
        .collect();
    let mut conditions = vec![
        render_area(&q.area),
        format!("XMATCH({}) < {}", members.join(", "), render_number(q.xmatch.threshold_sigma)),
    ];
    conditions.extend(q.predicates.iter().map(render_predicate));
    format!("SELECT {} FROM {} WHERE {}", select.join(", "), from.join(", "), conditions.join(" AND "))
}

pub(crate) fn render_area(a: &AreaClause) -> String {
    format!(
        "AREA({}, {}, {})",
        render_number(a.ra_deg),
        render_number(a.dec_deg),
        render_number(a.radius_arcsec)
    )
}

pub(crate) fn render_predicate(p: &Predicate) -> String {
    format!("{} {} {}", render_expr(&p.lhs), p.op.symbol(), render_expr(&p.rhs))
}

pub(crate) fn render_expr(e: &Expr) -> String {
    match e {
        Expr::Column(c) => c.to_string(),
        Expr::Number(n) => render_number(*n),
        Expr::Str(s) => format!("'{}'", s.replace('\'', "''")),
        Expr::Neg(inner) => format!("-({})", render_expr(inner)),
        Expr::Binary { op, lhs, rhs } => format!("({} {} {})", render_expr(lhs), op.symbol(), render_expr(rhs)),
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub(crate) fn render_number(n: f64) -> String {
    format!("{n}")
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use proptest::prelude::*;

    const CORPUS: &[&str] = &[
        "SELECT O.object_id, O.right_ascension, T.object_id FROM SDSS: Photo_Object O, TWOMASS: Photo_Primary T, FIRST: Primary_Object P WHERE AREA (185.0,-0.5,4.5) AND XMATCH (O,T,P) <3.5 AND O.type= GALAXY AND O.i_flux > 2",
        "SELECT O.object_id, T.object_id FROM SDSS:Photo_Object O, TWOMASS:Photo_Primary T, FIRST:Primary_Object P WHERE AREA(185.0,-0.5,4.5) AND XMATCH(O,T,!P) < 3.5",
        "SELECT O.id FROM A:T O, B:U P WHERE AREA(10,10,60) AND XMATCH(O,!P) < 2.0",
        "SELECT a.x FROM A:T a, B:T b WHERE XMATCH(a, b) < 1e-1 AND AREA(359.5, 89.9, 0.25) AND -a.x * 2 + 1 >= (a.y - 3) / 4 AND a.s != 'it''s'",
        "select A.c from X:Y A, Z:W B where area(0,-90,1) and xmatch(!B, A) <= 10 and A.c <> 4",
    ];

    #[test]
    fn corpus_round_trips() {
        for q in CORPUS {
            let ast = parse(q).unwrap_or_else(|e| panic!("{q}: {e}"));
            let text = ast.render();
            assert_eq!(parse(&text).unwrap(), ast, "{text}");
            assert_eq!(parse(&text).unwrap().render(), text);
        }
    }

    #[test]
    fn canonical_rendering_is_stable() {
        let ast = parse(CORPUS[1]).unwrap();
        assert_eq!(
            ast.render(),
            "SELECT O.object_id, T.object_id FROM SDSS:Photo_Object O, TWOMASS:Photo_Primary T, \
             FIRST:Primary_Object P WHERE AREA(185, -0.5, 4.5) AND XMATCH(O, T, !P) < 3.5"
        );
    }

    fn ident() -> impl Strategy<Value = String> {
        "[A-Za-z_][A-Za-z0-9_]{0,6}".prop_filter("keyword", |s| {
            !["SELECT", "FROM", "WHERE", "AND", "AREA", "XMATCH"].iter().any(|k| k.eq_ignore_ascii_case(s))
        })
    }

    fn expr(aliases: Vec<String>) -> impl Strategy<Value = Expr> {
        let alias = prop::sample::select(aliases);
        let leaf = prop_oneof![
            (alias.clone(), ident()).prop_map(|(a, c)| Expr::Column(ColumnRef::new(a, c))),
            (0.0..1e6f64).prop_map(Expr::Number),
            "[a-z' ]{0,5}".prop_map(Expr::Str),
        ];
        leaf.prop_recursive(4, 16, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner, 0..4usize).prop_map(|(l, r, k)| Expr::Binary {
                    op: [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div][k],
                    lhs: Box::new(l),
                    rhs: Box::new(r),
                }),
            ]
        })
    }

    fn single_alias(e: &Expr, alias: &str) -> Expr {
        match e {
            Expr::Column(c) => Expr::Column(ColumnRef::new(alias, c.column.clone())),
            Expr::Neg(i) => Expr::Neg(Box::new(single_alias(i, alias))),
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(single_alias(lhs, alias)),
                rhs: Box::new(single_alias(rhs, alias)),
            },
            other => other.clone(),
        }
    }

    prop_compose! {
        fn arb_query()(
            aliases in prop::collection::hash_set(ident(), 2..4),
            ra in 0.0..360.0f64, dec in -90.0..=90.0f64, r in 0.001..1e4f64,
            theta in 0.01..10.0f64,
            drop_mask in prop::collection::vec(any::<bool>(), 4),
        )(
            lhs in expr(aliases.iter().cloned().collect()),
            rhs in expr(aliases.iter().cloned().collect()),
            op_k in 0..6usize,
            cols in prop::collection::vec(ident(), 1..3),
            aliases in Just(aliases.into_iter().collect::<Vec<_>>()),
            area in Just((ra, dec, r)),
            theta in Just(theta),
            drop_mask in Just(drop_mask),
        ) -> QueryAst {
            let members: Vec<XmatchMember> = aliases.iter().enumerate()
                .map(|(i, a)| XmatchMember { alias: a.clone(), dropout: i > 0 && drop_mask[i] })
                .collect();
            let first = aliases[0].clone();
            let lhs = single_alias(&lhs, &first);
            let mut rhs = single_alias(&rhs, &first);
            if lhs.columns().is_empty() && rhs.columns().is_empty() {
                rhs = Expr::Column(ColumnRef::new(first.clone(), "c"));
            }
            let op = [CompareOp::Eq, CompareOp::Ne, CompareOp::Lt, CompareOp::Gt, CompareOp::Le, CompareOp::Ge][op_k];
            QueryAst {
                select_items: cols.into_iter().map(|c| ColumnRef::new(first.clone(), c)).collect(),
                archives: aliases.iter().map(|a| ArchiveBinding {
                    archive_name: format!("{a}_arch"), table_name: "Tbl".into(), alias: a.clone(),
                }).collect(),
                area: AreaClause::new(area.0, area.1, area.2).unwrap(),
                xmatch: XmatchClause { members, threshold_sigma: theta },
                predicates: vec![Predicate { lhs, op, rhs }],
            }
        }
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(ast in arb_query()) {
            let text = ast.render();
            let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            prop_assert_eq!(back, ast);
        }

        #[test]
        fn never_panics_on_noise(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = parse_bytes(&bytes);
        }
    }
}
