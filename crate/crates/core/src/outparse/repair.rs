//! The repair ladder: turn almost-JSON model output into a JSON value.
//!
//! Chat models wrap answers in code fences, preface them with prose, leave
//! trailing commas, or return a bare object where an array was asked for.
//! Each rung fixes one of those, is applied only when it changes the text,
//! and is recorded by name so parse reports stay auditable. Anything the
//! ladder cannot fix is reported, never panicked on.

use serde_json::Value;

type RepairStep = fn(&str) -> String;

pub const STEP_STRIP_CODE_FENCE: &str = "strip-code-fence";
pub const STEP_TRIM_TO_BRACKETS: &str = "trim-to-brackets";
pub const STEP_STRIP_TRAILING_COMMAS: &str = "strip-trailing-commas";
pub const STEP_WRAP_SINGLE_OBJECT: &str = "wrap-single-object";

/// Extract a JSON value from raw model output. Returns the value (promoted
/// to an array if it was a bare object) and the names of the repair steps
/// that changed the text along the way. `None` means irreparable.
pub fn extract_json(raw: &str) -> (Option<Value>, Vec<String>) {
    let mut repairs = Vec::new();
    let mut current = raw.to_string();

    if let Ok(value) = serde_json::from_str::<Value>(&current) {
        return (Some(promote_object(value, &mut repairs)), repairs);
    }

    let ladder: [(&str, RepairStep); 3] = [
        (STEP_STRIP_CODE_FENCE, strip_code_fences),
        (STEP_TRIM_TO_BRACKETS, trim_to_brackets),
        (STEP_STRIP_TRAILING_COMMAS, strip_trailing_commas),
    ];
    for (name, repair) in ladder {
        let repaired = repair(&current);
        if repaired != current {
            current = repaired;
            repairs.push(name.to_string());
            if let Ok(value) = serde_json::from_str::<Value>(&current) {
                return (Some(promote_object(value, &mut repairs)), repairs);
            }
        }
    }
    (None, repairs)
}

fn promote_object(value: Value, repairs: &mut Vec<String>) -> Value {
    if value.is_object() {
        repairs.push(STEP_WRAP_SINGLE_OBJECT.to_string());
        Value::Array(vec![value])
    } else {
        value
    }
}

/// Drop fence lines (``` or ```json and the closing ```), keeping everything
/// between them.
fn strip_code_fences(text: &str) -> String {
    if !text.contains("```") {
        return text.to_string();
    }
    text.lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Cut leading and trailing prose: keep from the first opening bracket to
/// the last closing bracket.
fn trim_to_brackets(text: &str) -> String {
    let start = text.find(['[', '{']);
    let end = text.rfind([']', '}']);
    match (start, end) {
        (Some(s), Some(e)) if s < e => text[s..=e].to_string(),
        _ => text.to_string(),
    }
}

/// Remove commas that directly precede a closing bracket, outside string
/// literals.
fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                // peek past whitespace; drop the comma when a closer follows
                let next = chars[i + 1..].iter().find(|ch| !ch.is_whitespace());
                if !matches!(next, Some(']') | Some('}')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}
