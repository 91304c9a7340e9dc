use super::DataError;

/// Turns dataset label spellings (`BabyCrawling`, `Getting_a_haircut`) into
/// plain lowercase phrases (`baby crawling`, `getting a haircut`).
///
/// Word boundaries are inserted at underscores, at lower/digit→upper
/// transitions and before the last capital of an acronym run followed by a
/// lowercase letter (`HTTPServer` → `http server`). Everything else,
/// digits and punctuation included, is kept verbatim. Whitespace runs
/// collapse to one space.
pub fn normalize_label(raw: &str) -> Result<String, DataError> {
    if raw.is_empty() {
        return Err(DataError::InvalidArgument("label text is empty".into()));
    }
    let chars: Vec<char> = raw.chars().collect();
    let mut spaced = String::with_capacity(raw.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        if c == '_' {
            spaced.push(' ');
            continue;
        }
        if c.is_uppercase() && i > 0 {
            let prev = chars[i - 1];
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if prev.is_lowercase() || prev.is_ascii_digit() || (prev.is_uppercase() && next_lower) {
                spaced.push(' ');
            }
        }
        spaced.push(c);
    }
    let normalized = spaced.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    if normalized.is_empty() {
        return Err(DataError::InvalidArgument(format!("label {raw:?} normalizes to an empty phrase")));
    }
    Ok(normalized)
}
