use serde_json::Value;

use super::templates::ResponseShape;

/// Recovers a JSON payload from model output. Tries the whole body, then
/// the first fenced block, then the first balanced bracket substring.
pub fn recover_json(raw: &str, shape: ResponseShape) -> Result<Value, String> {
    let fits = |v: &Value| match shape {
        ResponseShape::Object => v.is_object(),
        ResponseShape::Array => v.is_array(),
    };
    if let Ok(v) = serde_json::from_str::<Value>(raw.trim()) {
        if fits(&v) {
            return Ok(v);
        }
    }
    if let Some(block) = first_fence(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(block.trim()) {
            if fits(&v) {
                return Ok(v);
            }
        }
    }
    let open = match shape {
        ResponseShape::Object => '{',
        ResponseShape::Array => '[',
    };
    let mut from = 0;
    while let Some(off) = raw[from..].find(open) {
        let start = from + off;
        if let Some(end) = balanced_end(raw, start) {
            if let Ok(v) = serde_json::from_str::<Value>(&raw[start..end]) {
                if fits(&v) {
                    return Ok(v);
                }
            }
        }
        from = start + 1;
    }
    Err(format!("no JSON {} found in model output", if open == '{' { "object" } else { "array" }))
}

fn first_fence(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

/// Byte offset just past the bracket matching the one at `start`, skipping
/// over string literals.
fn balanced_end(s: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s[start..].char_indices() {
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
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}
