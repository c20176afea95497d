//! Dotted `key=value` overrides applied to the JSON form of a config.

use serde_json::Value;

use crate::CliError;

/// Splits `a.b=c` into the path and the raw value.
pub fn parse_assignment(s: &str) -> Result<(Vec<String>, String), CliError> {
    let (key, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {s:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("override key {key:?} is malformed")));
    }
    Ok((path, value.trim().to_string()))
}

/// Values parse as JSON when they can (numbers, booleans, arrays) and fall
/// back to plain strings.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies every override to a copy of `base`; `base` is untouched on error.
/// Keys must already exist. Array elements are addressed by index.
pub fn apply(base: &Value, overrides: &[String]) -> Result<Value, CliError> {
    let mut out = base.clone();
    for o in overrides {
        let (path, raw) = parse_assignment(o)?;
        let mut cur = &mut out;
        for (i, key) in path.iter().enumerate() {
            let missing = || CliError::Config(format!("override {o:?}: no config key {:?}", path[..=i].join(".")));
            cur = match cur {
                Value::Object(map) => map.get_mut(key).ok_or_else(missing)?,
                Value::Array(items) => {
                    let idx: usize = key.parse().map_err(|_| missing())?;
                    items.get_mut(idx).ok_or_else(missing)?
                }
                _ => return Err(missing()),
            };
        }
        *cur = parse_value(&raw);
    }
    Ok(out)
}
