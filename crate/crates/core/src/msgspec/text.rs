//! Shared scalar-tree representation behind the YAML and JSON renderers.
//!
//! Both renderers are hand-written so their output is canonical and
//! byte-stable; parsing is delegated to serde_yaml / serde_json and the
//! results funnel through [`PlainNode`].

use super::registry::SchemaRegistry;
use super::schema::{Arity, FieldKind, MessageSchema, PrimitiveType};
use super::value::MessageValue;

/// A plain scalar tree: the common denominator of YAML and JSON documents.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum PlainNode {
    Null,
    Bool(bool),
    Int(i64),
    UInt(u64),
    /// Float carried at float32 width; rendered shortest-round-trip for f32.
    Float32(f32),
    Float(f64),
    Str(String),
    Seq(Vec<PlainNode>),
    /// Ordered key/value pairs.
    Map(Vec<(String, PlainNode)>),
}

/// Convert a schema-validated value into a plain tree. The schema steers
/// float width so float32 fields render with float32 precision.
pub(crate) fn value_to_node(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
) -> PlainNode {
    let MessageValue::Record(fields) = value else {
        unreachable!("validated value is a record");
    };
    let mut entries = Vec::with_capacity(fields.len());
    for (desc, (name, field_value)) in schema.fields().iter().zip(fields) {
        let node = match desc.arity {
            Arity::Scalar => element_to_node(registry, &desc.kind, field_value),
            Arity::Fixed(_) | Arity::Dynamic => {
                let MessageValue::List(items) = field_value else { unreachable!() };
                PlainNode::Seq(
                    items
                        .iter()
                        .map(|item| element_to_node(registry, &desc.kind, item))
                        .collect(),
                )
            }
        };
        entries.push((name.clone(), node));
    }
    PlainNode::Map(entries)
}

fn element_to_node(
    registry: &SchemaRegistry,
    kind: &FieldKind,
    value: &MessageValue,
) -> PlainNode {
    match kind {
        FieldKind::Nested(type_name) => {
            let nested = registry.require(type_name).expect("validated reference");
            value_to_node(registry, &nested, value)
        }
        FieldKind::Primitive(p) => match (p, value) {
            (PrimitiveType::Bool, MessageValue::Bool(b)) => PlainNode::Bool(*b),
            (PrimitiveType::String, MessageValue::Text(s)) => PlainNode::Str(s.clone()),
            (PrimitiveType::Float32, v) => {
                PlainNode::Float32(v.as_f64().expect("validated float") as f32)
            }
            (PrimitiveType::Float64, v) => PlainNode::Float(v.as_f64().expect("validated float")),
            (_, MessageValue::Int(i)) => PlainNode::Int(*i),
            (_, MessageValue::UInt(u)) => PlainNode::UInt(*u),
            _ => unreachable!("validated primitive"),
        },
    }
}

/// Shortest-round-trip float text, normalized so every standards-conforming
/// YAML or JSON reader resolves it as a float: the mantissa always carries a
/// dot and exponents an explicit sign (`1.0e+300`, not `1e300`).
pub(crate) fn render_f64(f: f64) -> String {
    normalize_float_text(format!("{f:?}"))
}

pub(crate) fn render_f32(f: f32) -> String {
    normalize_float_text(format!("{f:?}"))
}

fn normalize_float_text(mut text: String) -> String {
    if let Some(epos) = text.find(['e', 'E']) {
        let (mantissa, exponent) = text.split_at(epos);
        let exponent = &exponent[1..];
        let mantissa = if mantissa.contains('.') {
            mantissa.to_string()
        } else {
            format!("{mantissa}.0")
        };
        let exponent = if exponent.starts_with('-') || exponent.starts_with('+') {
            exponent.to_string()
        } else {
            format!("+{exponent}")
        };
        text = format!("{mantissa}e{exponent}");
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_keeps_dot_and_signed_exponent() {
        assert_eq!(render_f64(0.0), "0.0");
        assert_eq!(render_f64(-0.0), "-0.0");
        assert_eq!(render_f64(0.1), "0.1");
        assert_eq!(render_f64(1e300), "1.0e+300");
        assert_eq!(render_f64(1.5e-9), "1.5e-9");
        assert_eq!(render_f64(5e-324), "5.0e-324");
        assert_eq!(render_f32(0.1), "0.1");
    }

    #[test]
    fn float_text_round_trips_exactly() {
        for f in [
            0.0,
            -0.0,
            0.1,
            -1.75,
            f64::MAX,
            f64::MIN_POSITIVE,
            5e-324,
            1e300,
            123456789.123456,
        ] {
            let text = render_f64(f);
            let parsed: f64 = text.parse().unwrap();
            assert_eq!(parsed.to_bits(), f.to_bits(), "{text}");
        }
    }
}
