//! Human-readable rendering of JSON reports.

use serde_json::Value;

/// `x` with six significant digits; scientific notation outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

fn inline(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => sig6(n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        Value::Array(items) => format!("[{}]", items.iter().map(inline).collect::<Vec<_>>().join(", ")),
        Value::Object(map) => {
            let parts: Vec<String> = map.iter().map(|(k, v)| format!("{k}: {}", inline(v))).collect();
            format!("{{{}}}", parts.join(", "))
        }
        other => other.to_string(),
    }
}

/// One `key: value` line per top-level field; nested objects are indented.
pub fn human(v: &Value) -> String {
    let mut out = String::new();
    write_block(v, 0, &mut out);
    out
}

fn write_block(v: &Value, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            for (key, val) in map {
                if val.is_object() {
                    out.push_str(&format!("{pad}{key}:\n"));
                    write_block(val, depth + 1, out);
                } else {
                    out.push_str(&format!("{pad}{key}: {}\n", inline(val)));
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", inline(other))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(14.169043282), "14.1690");
        assert_eq!(sig6(0.10195732), "0.101957");
        assert_eq!(sig6(7.5620981), "7.56210");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e6");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn nested_objects_are_indented() {
        let v = serde_json::json!({"a": 1, "b": {"c": [0.5, 2]}});
        assert_eq!(human(&v), "a: 1\nb:\n  c: [0.500000, 2]\n");
    }
}
