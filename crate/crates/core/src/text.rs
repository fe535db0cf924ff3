//! Small text utilities shared by prompt parsing, lexical matching and
//! answer scoring.

use serde_json::Value;

/// Lines of the form `[n] rest`, in order of appearance.
pub fn numbered_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let rest = line.strip_prefix('[')?;
            let close = rest.find(']')?;
            let n = rest[..close].trim().parse().ok()?;
            Some((n, rest[close + 1..].trim()))
        })
        .collect()
}

/// First parseable JSON value in `text`: fenced ```json blocks are tried
/// first, then any balanced `{...}` / `[...]` span.
pub fn extract_json(text: &str) -> Option<Value> {
    let mut rest = text;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let Some(end) = after[body_start..].find("```") else {
            break;
        };
        let body = &after[body_start..body_start + end];
        if let Ok(v) = serde_json::from_str::<Value>(body.trim()) {
            return Some(v);
        }
        rest = &after[body_start + end + 3..];
    }
    for (i, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        if let Some(end) = balanced_end(&text[i..]) {
            if let Ok(v) = serde_json::from_str::<Value>(&text[i..i + end]) {
                return Some(v);
            }
        }
    }
    None
}

fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + c.len_utf8());
                }
            }
            _ => {}
        }
    }
    None
}

/// Trim, case-fold, collapse whitespace and strip trailing punctuation.
pub fn normalize_answer(s: &str) -> String {
    let folded = s
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    folded
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace())
        .trim_start_matches(|c: char| matches!(c, '(' | '"' | '\'' | '[') || c.is_whitespace())
        .to_string()
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "be", "did", "do", "does", "for", "from", "has", "have", "how", "in", "is", "it",
    "of", "on", "or", "s", "the", "to", "was", "were", "what", "when", "where", "which", "who", "whom", "whose", "why",
    "with",
];

/// Lowercased alphanumeric tokens with stopwords removed.
pub fn content_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}
