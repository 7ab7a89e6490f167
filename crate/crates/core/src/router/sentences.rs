/// Splits a description into sentences at `.`, `!` or `?` followed by
/// whitespace or end of text. Terminal punctuation stays with its sentence.
///
/// Abbreviations such as "e.g." followed by a space are split too; the
/// max-over-sentences combination tolerates that.
pub fn split_description(description: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = description.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let boundary = match chars.peek() {
            None => true,
            Some(&(_, next)) => next.is_whitespace(),
        };
        if boundary {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &description[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &description[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}
