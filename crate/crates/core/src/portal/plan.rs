use crate::query::QueryAst;

/// Plan-list order for mandatory archives: decreasing count, ties by name.
/// The list tail (smallest count) executes first.
pub fn order_stages<'a>(counts: &[(&'a str, u64)]) -> Vec<&'a str> {
    let mut v = counts.to_vec();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(name, _)| name).collect()
}

/// Result column used as the primary sort key: the first selected column of
/// the first mandatory XMATCH member, else column 0.
pub fn result_key_column(ast: &QueryAst) -> usize {
    ast.mandatory_aliases()
        .next()
        .and_then(|alias| ast.select_items.iter().position(|c| c.alias == alias))
        .unwrap_or(0)
}
