//! Canonical YAML codec for message values.
//!
//! Output is block style, fields in schema order, two-space indent, floats
//! shortest-round-trip, strings quoted only when a plain scalar could be
//! misresolved. Parsing accepts any standards-conforming YAML document and
//! validates it against the schema.

use thiserror::Error;

use super::registry::SchemaRegistry;
use super::schema::{Arity, FieldKind, MessageSchema, PrimitiveType, SchemaError};
use super::text::{render_f32, render_f64, value_to_node, PlainNode};
use super::value::{validate_value, MessageValue, ValidationReport};

#[derive(Debug, Error)]
pub enum YamlError {
    #[error("value does not conform to schema: {0}")]
    Validation(ValidationReport),
    #[error("schema error: {0}")]
    Schema(#[from] SchemaError),
    #[error("yaml syntax error: {0}")]
    Syntax(#[from] serde_yaml::Error),
    #[error("unknown key `{key}` at {path}")]
    UnknownKey { path: String, key: String },
    #[error("schema violation: {0}")]
    Violation(ValidationReport),
    #[error("unsupported yaml construct at {path}: {detail}")]
    Unsupported { path: String, detail: String },
}

/// Render a validated value as canonical YAML text (no trailing newline).
pub fn to_yaml(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
) -> Result<String, YamlError> {
    let report = validate_value(registry, schema, value);
    if !report.is_valid() {
        return Err(YamlError::Validation(report));
    }
    Ok(render_node(&value_to_node(registry, schema, value)))
}

/// Parse YAML text and validate it against the schema.
///
/// Mapping keys may appear in any order; the result is normalized to schema
/// order. Unknown keys are rejected. Numbers on float32 fields are narrowed
/// through f32, so parse∘render is the identity on valid values.
pub fn from_yaml(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    text: &str,
) -> Result<MessageValue, YamlError> {
    let doc: serde_yaml::Value = serde_yaml::from_str(text)?;
    let value = record_from_yaml(registry, schema, &doc, "")?;
    let report = validate_value(registry, schema, &value);
    if !report.is_valid() {
        return Err(YamlError::Violation(report));
    }
    Ok(value)
}

fn record_from_yaml(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    doc: &serde_yaml::Value,
    path: &str,
) -> Result<MessageValue, YamlError> {
    let serde_yaml::Value::Mapping(mapping) = doc else {
        // Let validation produce the path-qualified mismatch.
        return Ok(yaml_scalar_to_value(doc, path, None)?);
    };

    let mut remaining: Vec<(String, &serde_yaml::Value)> = Vec::with_capacity(mapping.len());
    for (key, val) in mapping {
        let serde_yaml::Value::String(key) = key else {
            return Err(YamlError::Unsupported {
                path: display_path(path),
                detail: "non-string mapping key".to_string(),
            });
        };
        remaining.push((key.clone(), val));
    }

    for (key, _) in &remaining {
        if !schema.fields().iter().any(|d| &d.name == key) {
            return Err(YamlError::UnknownKey {
                path: display_path(path),
                key: key.clone(),
            });
        }
    }

    let mut fields = Vec::with_capacity(schema.fields().len());
    for desc in schema.fields() {
        let Some(pos) = remaining.iter().position(|(k, _)| k == &desc.name) else {
            // Missing field: emit a truncated record and let validation report it.
            continue;
        };
        let (_, val) = remaining.remove(pos);
        let field_path = format!("{path}.{}", desc.name);
        let value = match desc.arity {
            Arity::Scalar => element_from_yaml(registry, &desc.kind, val, &field_path)?,
            Arity::Fixed(_) | Arity::Dynamic => match val {
                serde_yaml::Value::Sequence(items) => {
                    let mut out = Vec::with_capacity(items.len());
                    for (idx, item) in items.iter().enumerate() {
                        out.push(element_from_yaml(
                            registry,
                            &desc.kind,
                            item,
                            &format!("{field_path}[{idx}]"),
                        )?);
                    }
                    MessageValue::List(out)
                }
                other => yaml_scalar_to_value(other, &field_path, None)?,
            },
        };
        fields.push((desc.name.clone(), value));
    }
    Ok(MessageValue::Record(fields))
}

fn element_from_yaml(
    registry: &SchemaRegistry,
    kind: &FieldKind,
    doc: &serde_yaml::Value,
    path: &str,
) -> Result<MessageValue, YamlError> {
    match kind {
        FieldKind::Nested(type_name) => {
            let nested = registry.require(type_name)?;
            record_from_yaml(registry, &nested, doc, path)
        }
        FieldKind::Primitive(p) => yaml_scalar_to_value(doc, path, Some(*p)),
    }
}

/// Convert a YAML node to a value leaf. `target` narrows floats for
/// float32 fields and lets integer-shaped floats stay floats on float
/// fields; shape errors surface later through validation.
fn yaml_scalar_to_value(
    doc: &serde_yaml::Value,
    path: &str,
    target: Option<PrimitiveType>,
) -> Result<MessageValue, YamlError> {
    Ok(match doc {
        serde_yaml::Value::Bool(b) => MessageValue::Bool(*b),
        serde_yaml::Value::String(s) => MessageValue::Text(s.clone()),
        serde_yaml::Value::Number(n) => number_to_value(n, target),
        serde_yaml::Value::Sequence(items) => {
            let mut out = Vec::with_capacity(items.len());
            for (idx, item) in items.iter().enumerate() {
                out.push(yaml_scalar_to_value(item, &format!("{path}[{idx}]"), None)?);
            }
            MessageValue::List(out)
        }
        serde_yaml::Value::Mapping(mapping) => {
            let mut out = Vec::with_capacity(mapping.len());
            for (key, val) in mapping {
                let serde_yaml::Value::String(key) = key else {
                    return Err(YamlError::Unsupported {
                        path: display_path(path),
                        detail: "non-string mapping key".to_string(),
                    });
                };
                out.push((
                    key.clone(),
                    yaml_scalar_to_value(val, &format!("{path}.{key}"), None)?,
                ));
            }
            MessageValue::Record(out)
        }
        serde_yaml::Value::Null => {
            return Err(YamlError::Unsupported {
                path: display_path(path),
                detail: "null has no message representation".to_string(),
            })
        }
        serde_yaml::Value::Tagged(_) => {
            return Err(YamlError::Unsupported {
                path: display_path(path),
                detail: "yaml tags are not supported".to_string(),
            })
        }
    })
}

fn number_to_value(n: &serde_yaml::Number, target: Option<PrimitiveType>) -> MessageValue {
    match target {
        Some(PrimitiveType::Float32) => {
            if let Some(f) = as_float(n) {
                return MessageValue::Float((f as f32) as f64);
            }
        }
        Some(PrimitiveType::Float64) => {
            if let Some(f) = as_float(n) {
                return MessageValue::Float(f);
            }
        }
        _ => {}
    }
    if let Some(i) = n.as_i64() {
        MessageValue::Int(i)
    } else if let Some(u) = n.as_u64() {
        MessageValue::UInt(u)
    } else {
        MessageValue::Float(n.as_f64().expect("yaml number is int or float"))
    }
}

fn as_float(n: &serde_yaml::Number) -> Option<f64> {
    if let Some(i) = n.as_i64() {
        Some(i as f64)
    } else if let Some(u) = n.as_u64() {
        Some(u as f64)
    } else {
        n.as_f64()
    }
}

fn display_path(path: &str) -> String {
    if path.is_empty() {
        ".".to_string()
    } else {
        path.to_string()
    }
}

// ---------------------------------------------------------------------------
// Canonical renderer
// ---------------------------------------------------------------------------

/// Render a plain tree as canonical block-style YAML.
pub(crate) fn render_node(node: &PlainNode) -> String {
    let mut out = String::new();
    match node {
        PlainNode::Map(entries) if !entries.is_empty() => {
            render_map(entries, 0, &mut out);
        }
        PlainNode::Seq(items) if !items.is_empty() => {
            render_seq(items, 0, &mut out);
        }
        other => out.push_str(&render_scalar_or_empty(other)),
    }
    if out.ends_with('\n') {
        out.pop();
    }
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn render_map(entries: &[(String, PlainNode)], level: usize, out: &mut String) {
    for (key, value) in entries {
        indent(level, out);
        out.push_str(key);
        out.push(':');
        render_nested(value, level, out);
    }
}

fn render_seq(items: &[PlainNode], level: usize, out: &mut String) {
    for item in items {
        indent(level, out);
        out.push('-');
        render_nested(item, level, out);
    }
}

/// Render a node that follows a `key:` or `-` introducer.
fn render_nested(node: &PlainNode, level: usize, out: &mut String) {
    match node {
        PlainNode::Map(entries) if !entries.is_empty() => {
            out.push('\n');
            render_map(entries, level + 1, out);
        }
        PlainNode::Seq(items) if !items.is_empty() => {
            out.push('\n');
            render_seq(items, level + 1, out);
        }
        other => {
            out.push(' ');
            out.push_str(&render_scalar_or_empty(other));
            out.push('\n');
        }
    }
}

fn render_scalar_or_empty(node: &PlainNode) -> String {
    match node {
        PlainNode::Null => "null".to_string(),
        PlainNode::Bool(b) => b.to_string(),
        PlainNode::Int(i) => i.to_string(),
        PlainNode::UInt(u) => u.to_string(),
        PlainNode::Float32(f) => render_f32(*f),
        PlainNode::Float(f) => render_f64(*f),
        PlainNode::Str(s) => render_string(s),
        PlainNode::Seq(items) => {
            debug_assert!(items.is_empty());
            "[]".to_string()
        }
        PlainNode::Map(entries) => {
            debug_assert!(entries.is_empty());
            "{}".to_string()
        }
    }
}

fn render_string(s: &str) -> String {
    if plain_scalar_safe(s) {
        s.to_string()
    } else {
        double_quote(s)
    }
}

/// Conservative check: only strings no YAML resolver could mistake for
/// another type (or mis-parse structurally) stay unquoted.
fn plain_scalar_safe(s: &str) -> bool {
    if s.is_empty() || s.len() > 1024 {
        return false;
    }
    let first = s.chars().next().expect("non-empty");
    if s.starts_with(char::is_whitespace) || s.ends_with(char::is_whitespace) {
        return false;
    }
    const LEAD_INDICATORS: &str = "-?:,[]{}#&*!|>'\"%@`+.~";
    if LEAD_INDICATORS.contains(first) || first.is_ascii_digit() {
        return false;
    }
    for ch in s.chars() {
        if ch.is_control() || ch == ':' || ch == '#' {
            return false;
        }
        if ch.is_whitespace() && ch != ' ' {
            return false;
        }
    }
    !is_reserved_word(s)
}

/// Words some YAML 1.1/1.2 resolver would read as bool/null/number.
fn is_reserved_word(s: &str) -> bool {
    let lower = s.to_ascii_lowercase();
    matches!(
        lower.as_str(),
        "null" | "~" | "true" | "false" | "yes" | "no" | "on" | "off" | "y" | "n" | "nan"
            | "inf" | "-inf" | "+inf" | ".inf" | ".nan" | "-.inf" | "+.inf"
    )
}

fn double_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 || c == '\u{7f}' || c == '\u{feff}' => {
                out.push_str(&format!("\\u{:04X}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgspec::SchemaRegistry;

    fn string_schema() -> (SchemaRegistry, MessageSchema) {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("std_msgs/String").unwrap();
        (reg, schema)
    }

    fn zero_twist() -> MessageValue {
        let zero_vec = || {
            MessageValue::record([
                ("x", MessageValue::Float(0.0)),
                ("y", MessageValue::Float(0.0)),
                ("z", MessageValue::Float(0.0)),
            ])
        };
        MessageValue::record([("linear", zero_vec()), ("angular", zero_vec())])
    }

    #[test]
    fn single_scalar_field() {
        let (reg, schema) = string_schema();
        let value = MessageValue::record([("data", MessageValue::text("Hello"))]);
        assert_eq!(to_yaml(&reg, &schema, &value).unwrap(), "data: Hello");
    }

    #[test]
    fn twist_zero_matches_canonical_form() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let yaml = to_yaml(&reg, &schema, &zero_twist()).unwrap();
        assert_eq!(
            yaml,
            "linear:\n  x: 0.0\n  y: 0.0\n  z: 0.0\nangular:\n  x: 0.0\n  y: 0.0\n  z: 0.0"
        );
    }

    #[test]
    fn from_yaml_round_trips() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let yaml = to_yaml(&reg, &schema, &zero_twist()).unwrap();
        assert_eq!(from_yaml(&reg, &schema, &yaml).unwrap(), zero_twist());
    }

    #[test]
    fn from_yaml_parses_hello() {
        let (reg, schema) = string_schema();
        let value = from_yaml(&reg, &schema, "data: Hello").unwrap();
        assert_eq!(value.field("data").unwrap().as_str(), Some("Hello"));
    }

    #[test]
    fn kind_mismatch_is_schema_violation() {
        let (reg, schema) = string_schema();
        let err = from_yaml(&reg, &schema, "data: [1,2]").unwrap_err();
        match err {
            YamlError::Violation(report) => {
                assert_eq!(report.violations[0].path, ".data");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let yaml = format!("{}\nspeed: 3", to_yaml(&reg, &schema, &zero_twist()).unwrap());
        let err = from_yaml(&reg, &schema, &yaml).unwrap_err();
        match err {
            YamlError::UnknownKey { key, .. } => assert_eq!(key, "speed"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn syntax_error_reported() {
        let (reg, schema) = string_schema();
        assert!(matches!(
            from_yaml(&reg, &schema, "data: [unclosed"),
            Err(YamlError::Syntax(_))
        ));
    }

    #[test]
    fn out_of_order_keys_normalize() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Vector3").unwrap();
        let value = from_yaml(&reg, &schema, "z: 3.0\nx: 1.0\ny: 2.0").unwrap();
        let expected = MessageValue::record([
            ("x", MessageValue::Float(1.0)),
            ("y", MessageValue::Float(2.0)),
            ("z", MessageValue::Float(3.0)),
        ]);
        assert_eq!(value, expected);
    }

    #[test]
    fn missing_field_is_violation() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Vector3").unwrap();
        let err = from_yaml(&reg, &schema, "x: 1.0\ny: 2.0").unwrap_err();
        assert!(matches!(err, YamlError::Violation(_)));
    }

    #[test]
    fn tricky_strings_are_quoted_and_survive() {
        let (reg, schema) = string_schema();
        for s in [
            "Hello World: 1",
            "true",
            "123",
            "0x1F",
            "1_000",
            "1e5",
            ".inf",
            "-foo",
            "# not a comment",
            "line\nbreak",
            "tab\there",
            " padded ",
            "",
            "~",
            "12:34:56",
            "[brackets]",
            "üñïçødé",
            "a#b",
        ] {
            let value = MessageValue::record([("data", MessageValue::text(s))]);
            let yaml = to_yaml(&reg, &schema, &value).unwrap();
            let back = from_yaml(&reg, &schema, &yaml).unwrap();
            assert_eq!(back, value, "yaml was: {yaml}");
        }
    }

    #[test]
    fn plain_strings_stay_plain() {
        let (reg, schema) = string_schema();
        let value = MessageValue::record([("data", MessageValue::text("Hello World"))]);
        assert_eq!(to_yaml(&reg, &schema, &value).unwrap(), "data: Hello World");
    }

    #[test]
    fn empty_dynamic_array_renders_flow_empty() {
        let reg = SchemaRegistry::new();
        let schema = reg.register("test_msgs/List", "int32[] items").unwrap();
        let value = MessageValue::record([("items", MessageValue::List(vec![]))]);
        let yaml = to_yaml(&reg, &schema, &value).unwrap();
        assert_eq!(yaml, "items: []");
        assert_eq!(from_yaml(&reg, &schema, &yaml).unwrap(), value);
    }

    #[test]
    fn sequences_render_block_style() {
        let reg = SchemaRegistry::new();
        let schema = reg.register("test_msgs/Fix", "int32[3] a\nstring label").unwrap();
        let value = MessageValue::record([
            (
                "a",
                MessageValue::List(vec![
                    MessageValue::Int(1),
                    MessageValue::Int(2),
                    MessageValue::Int(3),
                ]),
            ),
            ("label", MessageValue::text("ok")),
        ]);
        let yaml = to_yaml(&reg, &schema, &value).unwrap();
        assert_eq!(yaml, "a:\n  - 1\n  - 2\n  - 3\nlabel: ok");
        assert_eq!(from_yaml(&reg, &schema, &yaml).unwrap(), value);
    }

    #[test]
    fn nested_records_in_sequences() {
        let reg = SchemaRegistry::with_standard_types();
        reg.register("test_msgs/Path", "geometry_msgs/Vector3[] points").unwrap();
        let schema = reg.get("test_msgs/Path").unwrap();
        let point = |x: f64| {
            MessageValue::record([
                ("x", MessageValue::Float(x)),
                ("y", MessageValue::Float(0.5)),
                ("z", MessageValue::Float(-1.0)),
            ])
        };
        let value = MessageValue::record([(
            "points",
            MessageValue::List(vec![point(1.0), point(2.0)]),
        )]);
        let yaml = to_yaml(&reg, &schema, &value).unwrap();
        assert_eq!(
            yaml,
            "points:\n  -\n    x: 1.0\n    y: 0.5\n    z: -1.0\n  -\n    x: 2.0\n    y: 0.5\n    z: -1.0"
        );
        assert_eq!(from_yaml(&reg, &schema, &yaml).unwrap(), value);
    }

    #[test]
    fn float32_fields_render_at_f32_width() {
        let reg = SchemaRegistry::new();
        let schema = reg.register("test_msgs/F32", "float32 v").unwrap();
        let value = MessageValue::record([("v", MessageValue::Float((0.1f32) as f64))]);
        let yaml = to_yaml(&reg, &schema, &value).unwrap();
        assert_eq!(yaml, "v: 0.1");
        assert_eq!(from_yaml(&reg, &schema, &yaml).unwrap(), value);
    }

    #[test]
    fn output_reparses_under_serde_yaml() {
        // Independent standards-conforming reader oracle.
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let yaml = to_yaml(&reg, &schema, &zero_twist()).unwrap();
        let doc: serde_yaml::Value = serde_yaml::from_str(&yaml).unwrap();
        let linear = doc.get("linear").unwrap();
        assert_eq!(linear.get("x").unwrap().as_f64(), Some(0.0));
    }
}
