//! Catalog name resolution for user-typed names.

/// Candidates offered for one ambiguous name.
pub const MAX_CANDIDATES: usize = 8;
/// Largest edit distance accepted when nothing contains the query.
pub const MAX_EDIT_DISTANCE: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameMatch {
    Unique(String),
    /// 2..=MAX_CANDIDATES names, catalog order.
    Ambiguous(Vec<String>),
    None,
}

fn settle(mut hits: Vec<String>) -> Option<NameMatch> {
    match hits.len() {
        0 => None,
        1 => Some(NameMatch::Unique(hits.remove(0))),
        _ => {
            hits.truncate(MAX_CANDIDATES);
            Some(NameMatch::Ambiguous(hits))
        }
    }
}

/// Case-insensitive exact match, then substring, then edit distance.
pub fn resolve_name(query: &str, names: &[String]) -> NameMatch {
    let q = query.trim().to_lowercase();
    if q.is_empty() {
        return NameMatch::None;
    }
    if let Some(n) = names.iter().find(|n| n.to_lowercase() == q) {
        return NameMatch::Unique(n.clone());
    }
    let contains: Vec<String> = names.iter().filter(|n| n.to_lowercase().contains(&q)).cloned().collect();
    if let Some(m) = settle(contains) {
        return m;
    }
    let mut near: Vec<(usize, String)> = names
        .iter()
        .map(|n| (strsim::levenshtein(&n.to_lowercase(), &q), n.clone()))
        .filter(|(d, _)| *d <= MAX_EDIT_DISTANCE)
        .collect();
    near.sort_by_key(|(d, _)| *d);
    // a strictly closest name wins outright
    if near.len() > 1 && near[0].0 < near[1].0 {
        near.truncate(1);
    }
    settle(near.into_iter().map(|(_, n)| n).collect()).unwrap_or(NameMatch::None)
}
