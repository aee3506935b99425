//! YAML ↔ JSON text conversion, order-preserving.
//!
//! JSON output is compact with keys in the original document order; the
//! YAML side of the pair is the canonical renderer from [`super::yaml`].

use thiserror::Error;

use super::registry::SchemaRegistry;
use super::schema::MessageSchema;
use super::text::{render_f64, value_to_node, PlainNode};
use super::value::{validate_value, MessageValue, ValidationReport};
use super::yaml::render_node;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("yaml syntax error: {0}")]
    YamlSyntax(#[from] serde_yaml::Error),
    #[error("json syntax error: {0}")]
    JsonSyntax(#[from] serde_json::Error),
    #[error("non-finite float has no json representation")]
    NonFinite,
    #[error("unsupported construct: {0}")]
    Unsupported(String),
    #[error("value does not conform to schema: {0}")]
    Validation(ValidationReport),
}

/// Convert YAML text to semantically equivalent compact JSON, keys in the
/// original order.
pub fn yaml_to_json(text: &str) -> Result<String, JsonError> {
    let doc: serde_yaml::Value = serde_yaml::from_str(text)?;
    let node = yaml_doc_to_node(&doc)?;
    render_json(&node)
}

/// Convert JSON text back to canonical YAML. `json_to_yaml(yaml_to_json(t))`
/// is value-equivalent to `t` for any `t` produced by the YAML renderer.
pub fn json_to_yaml(text: &str) -> Result<String, JsonError> {
    let doc: serde_json::Value = serde_json::from_str(text)?;
    let node = json_doc_to_node(&doc)?;
    Ok(render_node(&node))
}

/// Render a validated message value directly as compact JSON text.
pub fn value_to_json(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
) -> Result<String, JsonError> {
    let report = validate_value(registry, schema, value);
    if !report.is_valid() {
        return Err(JsonError::Validation(report));
    }
    render_json(&value_to_node(registry, schema, value))
}

fn yaml_doc_to_node(doc: &serde_yaml::Value) -> Result<PlainNode, JsonError> {
    Ok(match doc {
        serde_yaml::Value::Null => PlainNode::Null,
        serde_yaml::Value::Bool(b) => PlainNode::Bool(*b),
        serde_yaml::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                PlainNode::Int(i)
            } else if let Some(u) = n.as_u64() {
                PlainNode::UInt(u)
            } else {
                PlainNode::Float(n.as_f64().expect("number is int or float"))
            }
        }
        serde_yaml::Value::String(s) => PlainNode::Str(s.clone()),
        serde_yaml::Value::Sequence(items) => PlainNode::Seq(
            items.iter().map(yaml_doc_to_node).collect::<Result<_, _>>()?,
        ),
        serde_yaml::Value::Mapping(mapping) => {
            let mut entries = Vec::with_capacity(mapping.len());
            for (key, val) in mapping {
                let serde_yaml::Value::String(key) = key else {
                    return Err(JsonError::Unsupported("non-string mapping key".to_string()));
                };
                entries.push((key.clone(), yaml_doc_to_node(val)?));
            }
            PlainNode::Map(entries)
        }
        serde_yaml::Value::Tagged(_) => {
            return Err(JsonError::Unsupported("yaml tags are not supported".to_string()))
        }
    })
}

fn json_doc_to_node(doc: &serde_json::Value) -> Result<PlainNode, JsonError> {
    Ok(match doc {
        serde_json::Value::Null => PlainNode::Null,
        serde_json::Value::Bool(b) => PlainNode::Bool(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                PlainNode::Int(i)
            } else if let Some(u) = n.as_u64() {
                PlainNode::UInt(u)
            } else {
                PlainNode::Float(n.as_f64().expect("number is int or float"))
            }
        }
        serde_json::Value::String(s) => PlainNode::Str(s.clone()),
        serde_json::Value::Array(items) => PlainNode::Seq(
            items.iter().map(json_doc_to_node).collect::<Result<_, _>>()?,
        ),
        serde_json::Value::Object(map) => PlainNode::Map(
            map.iter()
                .map(|(k, v)| Ok((k.clone(), json_doc_to_node(v)?)))
                .collect::<Result<_, JsonError>>()?,
        ),
    })
}

fn render_json(node: &PlainNode) -> Result<String, JsonError> {
    let mut out = String::new();
    write_json(node, &mut out)?;
    Ok(out)
}

fn write_json(node: &PlainNode, out: &mut String) -> Result<(), JsonError> {
    match node {
        PlainNode::Null => out.push_str("null"),
        PlainNode::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        PlainNode::Int(i) => out.push_str(&i.to_string()),
        PlainNode::UInt(u) => out.push_str(&u.to_string()),
        PlainNode::Float32(f) => {
            if !f.is_finite() {
                return Err(JsonError::NonFinite);
            }
            out.push_str(&crate::msgspec::text::render_f32(*f));
        }
        PlainNode::Float(f) => {
            if !f.is_finite() {
                return Err(JsonError::NonFinite);
            }
            out.push_str(&render_f64(*f));
        }
        PlainNode::Str(s) => write_json_string(s, out),
        PlainNode::Seq(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json(item, out)?;
            }
            out.push(']');
        }
        PlainNode::Map(entries) => {
            out.push('{');
            for (i, (key, value)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_json_string(key, out);
                out.push(':');
                write_json(value, out)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

fn write_json_string(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgspec::yaml::{from_yaml, to_yaml};
    use crate::msgspec::SchemaRegistry;

    #[test]
    fn scalar_field_converts() {
        assert_eq!(yaml_to_json("data: Hello").unwrap(), r#"{"data":"Hello"}"#);
    }

    #[test]
    fn twist_zero_structural_equivalence() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let zero_vec = || {
            MessageValue::record([
                ("x", MessageValue::Float(0.0)),
                ("y", MessageValue::Float(0.0)),
                ("z", MessageValue::Float(0.0)),
            ])
        };
        let value = MessageValue::record([("linear", zero_vec()), ("angular", zero_vec())]);
        let yaml = to_yaml(&reg, &schema, &value).unwrap();
        let json = yaml_to_json(&yaml).unwrap();
        assert_eq!(
            json,
            r#"{"linear":{"x":0.0,"y":0.0,"z":0.0},"angular":{"x":0.0,"y":0.0,"z":0.0}}"#
        );
        // Structural oracle: an independent JSON parser sees six 0.0 leaves.
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let mut leaves = 0;
        for part in ["linear", "angular"] {
            for axis in ["x", "y", "z"] {
                assert_eq!(parsed[part][axis].as_f64(), Some(0.0));
                leaves += 1;
            }
        }
        assert_eq!(leaves, 6);
    }

    #[test]
    fn invalid_indentation_is_syntax_error() {
        let err = yaml_to_json("a:\n  b: 1\n c: 2").unwrap_err();
        assert!(matches!(err, JsonError::YamlSyntax(_)));
    }

    #[test]
    fn yaml_json_yaml_is_value_equivalent() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let value = from_yaml(
            &reg,
            &schema,
            "linear:\n  x: 0.25\n  y: -3.5\n  z: 1.0e+300\nangular:\n  x: 0.0\n  y: -0.0\n  z: 42.0",
        )
        .unwrap();
        let yaml = to_yaml(&reg, &schema, &value).unwrap();
        let back = json_to_yaml(&yaml_to_json(&yaml).unwrap()).unwrap();
        assert_eq!(back, yaml, "canonical yaml is a fixed point of yaml→json→yaml");
        assert_eq!(from_yaml(&reg, &schema, &back).unwrap(), value);
    }

    #[test]
    fn value_to_json_matches_yaml_pipeline() {
        let reg = SchemaRegistry::with_standard_types();
        let schema = reg.get("std_msgs/String").unwrap();
        let value = MessageValue::record([("data", MessageValue::text("Hello World: 1"))]);
        let direct = value_to_json(&reg, &schema, &value).unwrap();
        let via_yaml = yaml_to_json(&to_yaml(&reg, &schema, &value).unwrap()).unwrap();
        assert_eq!(direct, via_yaml);
        assert_eq!(direct, r#"{"data":"Hello World: 1"}"#);
    }

    #[test]
    fn json_escapes_control_characters() {
        let json = yaml_to_json("data: \"line\\nbreak\\tand\\u0001\"").unwrap();
        assert_eq!(json, r#"{"data":"line\nbreak\tand\u0001"}"#);
    }
}
