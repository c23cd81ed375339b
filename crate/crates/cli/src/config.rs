//! Declarative TOML configs.
//!
//! A file holds `schema_version` plus any subset of the command's keys. The
//! given keys are laid over the command's defaults and the result is
//! deserialized strictly, so a misspelt key is an error naming that key.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: i64 = 1;

/// Reads a config file and checks its schema version. The version key is
/// removed from the returned table.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let mut table: Table = text.parse().map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    match table.remove("schema_version") {
        Some(Value::Integer(SCHEMA_VERSION)) => Ok(table),
        Some(v) => Err(CliError::input(format!(
            "{}: unsupported schema_version {v} (expected {SCHEMA_VERSION})",
            path.display()
        ))),
        None => Err(CliError::input(format!("{}: missing schema_version", path.display()))),
    }
}

/// Integer at `key`, if present.
pub fn peek_u64(table: &Table, key: &str) -> CliResult<Option<u64>> {
    match table.get(key) {
        None => Ok(None),
        Some(Value::Integer(v)) if *v >= 0 => Ok(Some(*v as u64)),
        Some(v) => Err(CliError::input(format!("key `{key}`: expected a non-negative integer, got {v}"))),
    }
}

fn overlay(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => overlay(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Lays `over` on top of `defaults` and deserializes the result.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, over: Table) -> CliResult<T> {
    let mut base = Table::try_from(defaults).map_err(|e| CliError::input(format!("serializing defaults: {e}")))?;
    overlay(&mut base, over);
    T::deserialize(Value::Table(base)).map_err(|e| CliError::input(format!("config: {}", e.message())))
}

/// Default config rendered as a TOML document with its schema version.
pub fn render<T: Serialize>(value: &T) -> CliResult<String> {
    let body = Table::try_from(value).map_err(|e| CliError::input(e.to_string()))?;
    let text = toml::to_string(&body).map_err(|e| CliError::input(e.to_string()))?;
    Ok(format!("schema_version = {SCHEMA_VERSION}\n{text}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        a: f64,
        b: usize,
    }

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Outer {
        name: String,
        limit: Option<f64>,
        inner: Inner,
    }

    fn defaults() -> Outer {
        Outer { name: "x".into(), limit: None, inner: Inner { a: 1.5, b: 2 } }
    }

    #[test]
    fn nested_keys_overlay_defaults() {
        let over: Table = "limit = 0.5\n[inner]\nb = 7\n".parse().unwrap();
        let got = resolve(&defaults(), over).unwrap();
        assert_eq!(got, Outer { name: "x".into(), limit: Some(0.5), inner: Inner { a: 1.5, b: 7 } });
    }

    #[test]
    fn integer_literals_fill_float_fields() {
        let over: Table = "[inner]\na = 3\n".parse().unwrap();
        assert_eq!(resolve(&defaults(), over).unwrap().inner.a, 3.0);
    }

    #[test]
    fn unknown_key_is_named() {
        let over: Table = "[inner]\nbogus_key = 1\n".parse().unwrap();
        let err = resolve(&defaults(), over).unwrap_err();
        assert!(err.to_string().contains("bogus_key"), "{err}");
    }

    #[test]
    fn schema_version_is_required() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "name = \"y\"\n").unwrap();
        assert!(read_table(&p).unwrap_err().to_string().contains("schema_version"));
        std::fs::write(&p, "schema_version = 9\n").unwrap();
        assert!(read_table(&p).is_err());
        std::fs::write(&p, "schema_version = 1\nname = \"y\"\n").unwrap();
        let t = read_table(&p).unwrap();
        assert_eq!(resolve(&defaults(), t).unwrap().name, "y");
    }

    #[test]
    fn rendered_defaults_resolve_to_themselves() {
        let text = render(&defaults()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        assert_eq!(resolve(&defaults(), read_table(&p).unwrap()).unwrap(), defaults());
    }
}
