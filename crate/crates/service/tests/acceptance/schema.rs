//! Minimal structural schema checks for JSON responses.
//!
//! A schema is itself JSON: a string names a type ("string", "number",
//! "integer", "bool", "any", "array", "object"); a trailing `?` allows null.
//! An object lists required keys; a one-element array describes every
//! element.

use serde_json::Value;

pub fn check(v: &Value, schema: &Value) -> Result<(), String> {
    walk(v, schema, "$")
}

fn walk(v: &Value, schema: &Value, path: &str) -> Result<(), String> {
    match schema {
        Value::String(t) => {
            let (t, nullable) = match t.strip_suffix('?') {
                Some(t) => (t, true),
                None => (t.as_str(), false),
            };
            if v.is_null() && nullable {
                return Ok(());
            }
            let ok = match t {
                "string" => v.is_string(),
                "number" => v.is_number(),
                "integer" => v.is_u64() || v.is_i64(),
                "bool" => v.is_boolean(),
                "array" => v.is_array(),
                "object" => v.is_object(),
                "any" => true,
                other => return Err(format!("{path}: unknown schema type {other}")),
            };
            if ok {
                Ok(())
            } else {
                Err(format!("{path}: expected {t}, got {v}"))
            }
        }
        Value::Object(fields) => {
            let obj = v.as_object().ok_or_else(|| format!("{path}: expected object, got {v}"))?;
            for (k, s) in fields {
                let child = obj.get(k).ok_or_else(|| format!("{path}: missing key {k}"))?;
                walk(child, s, &format!("{path}.{k}"))?;
            }
            Ok(())
        }
        Value::Array(items) if items.len() == 1 => {
            let arr = v.as_array().ok_or_else(|| format!("{path}: expected array, got {v}"))?;
            arr.iter().enumerate().try_for_each(|(i, e)| walk(e, &items[0], &format!("{path}[{i}]")))
        }
        other => Err(format!("{path}: malformed schema {other}")),
    }
}
