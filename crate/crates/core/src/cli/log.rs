use std::io::Write;

use serde_json::{Map, Value};

/// One newline-delimited JSON record on stderr.
pub fn emit(event: &str, fields: Value) {
    let mut rec = Map::new();
    rec.insert("event".into(), Value::from(event));
    if let Value::Object(m) = fields {
        rec.extend(m);
    }
    let line = Value::Object(rec).to_string();
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}
