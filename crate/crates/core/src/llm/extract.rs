//! Pulls a JSON value out of a model reply that may carry prose or code fences.

use serde_json::Value as Json;

/// Contents of the first fenced block, if any. The language tag is dropped.
fn fenced(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// End offset (exclusive) of the balanced JSON container starting at `start`.
fn balanced_end(s: &str, start: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn scan(s: &str) -> Option<Json> {
    for (i, c) in s.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        if let Some(end) = balanced_end(s, i) {
            if let Ok(v) = serde_json::from_str::<Json>(&s[i..end]) {
                return Some(v);
            }
        }
    }
    None
}

pub fn extract_json(raw: &str) -> Result<Json, String> {
    let trimmed = raw.trim();
    if let Ok(v) = serde_json::from_str::<Json>(trimmed) {
        return Ok(v);
    }
    if let Some(block) = fenced(trimmed) {
        if let Ok(v) = serde_json::from_str::<Json>(block.trim()) {
            return Ok(v);
        }
        if let Some(v) = scan(block) {
            return Ok(v);
        }
    }
    scan(trimmed).ok_or_else(|| "no JSON object or array found in response".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn bare_json() {
        assert_eq!(extract_json(" [1, 2] ").unwrap(), json!([1, 2]));
    }

    #[test]
    fn fenced_with_language_tag() {
        let raw = "Here you go:\n```json\n{\"a\": \"x}\"}\n```\nThanks.";
        assert_eq!(extract_json(raw).unwrap(), json!({"a": "x}"}));
    }

    #[test]
    fn prose_around_block() {
        let raw = "Reasoning first [not json]. Result: {\"reflect\": []} done";
        assert_eq!(extract_json(raw).unwrap(), json!({"reflect": []}));
    }

    #[test]
    fn nothing_to_extract() {
        assert!(extract_json("no structure here").is_err());
        assert!(extract_json("{\"a\": ").is_err());
    }
}
