//! Dynamically typed message values and schema validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::registry::SchemaRegistry;
use super::schema::{Arity, FieldKind, MessageSchema, PrimitiveType};

/// A value tree conforming to some [`MessageSchema`]: primitive leaves,
/// sequences, and ordered named-field records.
///
/// Integer leaves are held as `i64` or `u64` regardless of the declared
/// width; the schema decides the admissible range. Equality treats
/// `Int(5)` and `UInt(5)` as the same number.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MessageValue {
    Bool(bool),
    Int(i64),
    UInt(u64),
    Float(f64),
    Text(String),
    List(Vec<MessageValue>),
    Record(Vec<(String, MessageValue)>),
}

impl MessageValue {
    pub fn record<I, S>(fields: I) -> Self
    where
        I: IntoIterator<Item = (S, MessageValue)>,
        S: Into<String>,
    {
        MessageValue::Record(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn text(s: impl Into<String>) -> Self {
        MessageValue::Text(s.into())
    }

    /// Field lookup on a record value.
    pub fn field(&self, name: &str) -> Option<&MessageValue> {
        match self {
            MessageValue::Record(fields) => {
                fields.iter().find(|(k, _)| k == name).map(|(_, v)| v)
            }
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            MessageValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MessageValue::Float(f) => Some(*f),
            MessageValue::Int(i) => Some(*i as f64),
            MessageValue::UInt(u) => Some(*u as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            MessageValue::Int(i) => Some(*i),
            MessageValue::UInt(u) => i64::try_from(*u).ok(),
            _ => None,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            MessageValue::Bool(_) => "bool",
            MessageValue::Int(_) | MessageValue::UInt(_) => "integer",
            MessageValue::Float(_) => "float",
            MessageValue::Text(_) => "string",
            MessageValue::List(_) => "sequence",
            MessageValue::Record(_) => "record",
        }
    }
}

impl PartialEq for MessageValue {
    fn eq(&self, other: &Self) -> bool {
        use MessageValue::*;
        match (self, other) {
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            (UInt(a), UInt(b)) => a == b,
            (Int(a), UInt(b)) | (UInt(b), Int(a)) => *a >= 0 && *a as u64 == *b,
            (Float(a), Float(b)) => a == b,
            (Text(a), Text(b)) => a == b,
            (List(a), List(b)) => a == b,
            (Record(a), Record(b)) => a == b,
            _ => false,
        }
    }
}

/// One schema violation, qualified by a path like `.linear.x` or `.a[2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.detail)
    }
}

/// Outcome of validating a value against a schema. Violations are data,
/// not faults: an empty report means the value conforms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: &str, detail: impl Into<String>) {
        self.violations.push(Violation {
            path: if path.is_empty() { ".".to_string() } else { path.to_string() },
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("valid");
        }
        let mut first = true;
        for v in &self.violations {
            if !first {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        Ok(())
    }
}

/// Check structure, field order, arity, and primitive ranges against the
/// schema. Nested type references are resolved through the registry.
pub fn validate_value(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_record(registry, schema, value, "", &mut report);
    report
}

fn validate_record(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
    path: &str,
    report: &mut ValidationReport,
) {
    let MessageValue::Record(fields) = value else {
        report.push(path, format!("expected record, found {}", value.kind_name()));
        return;
    };

    let expected = schema.fields();
    let mut i = 0;
    loop {
        match (expected.get(i), fields.get(i)) {
            (Some(desc), Some((name, val))) => {
                let field_path = format!("{path}.{}", desc.name);
                if name != &desc.name {
                    if expected.iter().any(|d| &d.name == name) {
                        report.push(
                            &format!("{path}.{name}"),
                            format!("field out of order (expected `{}` here)", desc.name),
                        );
                    } else {
                        report.push(&format!("{path}.{name}"), "unknown field");
                    }
                    return;
                }
                validate_field(registry, &desc.kind, desc.arity, val, &field_path, report);
            }
            (Some(desc), None) => {
                report.push(&format!("{path}.{}", desc.name), "missing field");
                return;
            }
            (None, Some((name, _))) => {
                report.push(&format!("{path}.{name}"), "unknown field");
                return;
            }
            (None, None) => return,
        }
        i += 1;
    }
}

fn validate_field(
    registry: &SchemaRegistry,
    kind: &FieldKind,
    arity: Arity,
    value: &MessageValue,
    path: &str,
    report: &mut ValidationReport,
) {
    match arity {
        Arity::Scalar => validate_element(registry, kind, value, path, report),
        Arity::Fixed(n) => {
            let MessageValue::List(items) = value else {
                report.push(path, format!("expected sequence, found {}", value.kind_name()));
                return;
            };
            if items.len() != n {
                report.push(path, format!("expected {n} elements, found {}", items.len()));
                return;
            }
            for (idx, item) in items.iter().enumerate() {
                validate_element(registry, kind, item, &format!("{path}[{idx}]"), report);
            }
        }
        Arity::Dynamic => {
            let MessageValue::List(items) = value else {
                report.push(path, format!("expected sequence, found {}", value.kind_name()));
                return;
            };
            if items.len() > u32::MAX as usize {
                report.push(path, "sequence exceeds uint32 element count");
                return;
            }
            for (idx, item) in items.iter().enumerate() {
                validate_element(registry, kind, item, &format!("{path}[{idx}]"), report);
            }
        }
    }
}

fn validate_element(
    registry: &SchemaRegistry,
    kind: &FieldKind,
    value: &MessageValue,
    path: &str,
    report: &mut ValidationReport,
) {
    match kind {
        FieldKind::Primitive(p) => validate_primitive(*p, value, path, report),
        FieldKind::Nested(type_name) => match registry.get(type_name) {
            Some(nested) => validate_record(registry, &nested, value, path, report),
            None => report.push(path, format!("unresolved type `{type_name}`")),
        },
    }
}

fn validate_primitive(
    prim: PrimitiveType,
    value: &MessageValue,
    path: &str,
    report: &mut ValidationReport,
) {
    match prim {
        PrimitiveType::Bool => {
            if !matches!(value, MessageValue::Bool(_)) {
                report.push(path, format!("expected bool, found {}", value.kind_name()));
            }
        }
        PrimitiveType::String => {
            if !matches!(value, MessageValue::Text(_)) {
                report.push(path, format!("expected string, found {}", value.kind_name()));
            }
        }
        PrimitiveType::Float32 => match value {
            MessageValue::Float(f) => {
                if !f.is_finite() {
                    report.push(path, "non-finite float");
                } else if (*f as f32) as f64 != *f {
                    report.push(path, format!("{f} is not representable as float32"));
                }
            }
            other => report.push(path, format!("expected float, found {}", other.kind_name())),
        },
        PrimitiveType::Float64 => match value {
            MessageValue::Float(f) => {
                if !f.is_finite() {
                    report.push(path, "non-finite float");
                }
            }
            other => report.push(path, format!("expected float, found {}", other.kind_name())),
        },
        _ if prim.is_integer() => validate_integer(prim, value, path, report),
        _ => unreachable!("all primitive kinds covered"),
    }
}

fn validate_integer(
    prim: PrimitiveType,
    value: &MessageValue,
    path: &str,
    report: &mut ValidationReport,
) {
    if let Some((min, max)) = prim.signed_bounds() {
        match value {
            MessageValue::Int(i) if *i >= min && *i <= max => {}
            MessageValue::UInt(u) if *u <= max as u64 => {}
            MessageValue::Int(i) => {
                report.push(path, format!("{i} out of range for {prim} ({min}..={max})"));
            }
            MessageValue::UInt(u) => {
                report.push(path, format!("{u} out of range for {prim} ({min}..={max})"));
            }
            other => report.push(path, format!("expected integer, found {}", other.kind_name())),
        }
    } else if let Some(max) = prim.unsigned_max() {
        match value {
            MessageValue::UInt(u) if *u <= max => {}
            MessageValue::Int(i) if *i >= 0 && (*i as u64) <= max => {}
            MessageValue::Int(i) => {
                report.push(path, format!("{i} out of range for {prim} (0..={max})"));
            }
            MessageValue::UInt(u) => {
                report.push(path, format!("{u} out of range for {prim} (0..={max})"));
            }
            other => report.push(path, format!("expected integer, found {}", other.kind_name())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgspec::SchemaRegistry;

    fn twist_registry() -> SchemaRegistry {
        let reg = SchemaRegistry::new();
        reg.register("geometry_msgs/Vector3", "float64 x\nfloat64 y\nfloat64 z")
            .unwrap();
        reg.register("geometry_msgs/Twist", "Vector3 linear\nVector3 angular")
            .unwrap();
        reg
    }

    fn zero_vector() -> MessageValue {
        MessageValue::record([
            ("x", MessageValue::Float(0.0)),
            ("y", MessageValue::Float(0.0)),
            ("z", MessageValue::Float(0.0)),
        ])
    }

    pub(crate) fn zero_twist() -> MessageValue {
        MessageValue::record([("linear", zero_vector()), ("angular", zero_vector())])
    }

    #[test]
    fn zero_twist_is_valid() {
        let reg = twist_registry();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let report = validate_value(&reg, &schema, &zero_twist());
        assert!(report.is_valid(), "{report}");
    }

    #[test]
    fn wrong_leaf_kind_reports_path() {
        let reg = SchemaRegistry::new();
        reg.register("std_msgs/String", "string data").unwrap();
        let schema = reg.get("std_msgs/String").unwrap();
        let value = MessageValue::record([("data", MessageValue::Int(255))]);
        let report = validate_value(&reg, &schema, &value);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, ".data");
        assert!(report.violations[0].detail.contains("expected string"));
    }

    #[test]
    fn int8_range_checked_against_twos_complement_bounds() {
        // Oracle: bounds computed independently via shifts.
        let bits = 8u32;
        let min = -(1i64 << (bits - 1));
        let max = (1i64 << (bits - 1)) - 1;
        assert_eq!(PrimitiveType::Int8.signed_bounds(), Some((min, max)));

        let reg = SchemaRegistry::new();
        reg.register("test_msgs/Small", "int8 v").unwrap();
        let schema = reg.get("test_msgs/Small").unwrap();

        for (value, ok) in [(max, true), (min, true), (200, false), (min - 1, false)] {
            let v = MessageValue::record([("v", MessageValue::Int(value))]);
            let report = validate_value(&reg, &schema, &v);
            assert_eq!(report.is_valid(), ok, "value {value}: {report}");
            if !ok {
                assert_eq!(report.violations[0].path, ".v");
                assert!(report.violations[0].detail.contains("out of range"));
            }
        }
    }

    #[test]
    fn field_order_is_significant() {
        let reg = twist_registry();
        let schema = reg.get("geometry_msgs/Twist").unwrap();
        let value = MessageValue::record([("angular", zero_vector()), ("linear", zero_vector())]);
        let report = validate_value(&reg, &schema, &value);
        assert!(!report.is_valid());
        assert!(report.violations[0].detail.contains("out of order"));
    }

    #[test]
    fn missing_and_unknown_fields_reported() {
        let reg = twist_registry();
        let schema = reg.get("geometry_msgs/Twist").unwrap();

        let missing = MessageValue::record([("linear", zero_vector())]);
        let report = validate_value(&reg, &schema, &missing);
        assert!(report.violations[0].detail.contains("missing"));

        let extra = MessageValue::record([
            ("linear", zero_vector()),
            ("angular", zero_vector()),
            ("speed", MessageValue::Int(3)),
        ]);
        let report = validate_value(&reg, &schema, &extra);
        assert_eq!(report.violations[0].path, ".speed");
        assert!(report.violations[0].detail.contains("unknown"));
    }

    #[test]
    fn non_finite_floats_rejected_by_default() {
        let reg = twist_registry();
        let schema = reg.get("geometry_msgs/Vector3").unwrap();
        let value = MessageValue::record([
            ("x", MessageValue::Float(f64::NAN)),
            ("y", MessageValue::Float(0.0)),
            ("z", MessageValue::Float(f64::INFINITY)),
        ]);
        let report = validate_value(&reg, &schema, &value);
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn float32_requires_exact_representation() {
        let reg = SchemaRegistry::new();
        reg.register("test_msgs/F", "float32 v").unwrap();
        let schema = reg.get("test_msgs/F").unwrap();

        let exact = MessageValue::record([("v", MessageValue::Float(0.1f32 as f64))]);
        assert!(validate_value(&reg, &schema, &exact).is_valid());

        let inexact = MessageValue::record([("v", MessageValue::Float(0.1f64))]);
        assert!(!validate_value(&reg, &schema, &inexact).is_valid());
    }

    #[test]
    fn fixed_array_arity_enforced() {
        let reg = SchemaRegistry::new();
        reg.register("test_msgs/Arr", "int32[3] a").unwrap();
        let schema = reg.get("test_msgs/Arr").unwrap();
        let short = MessageValue::record([(
            "a",
            MessageValue::List(vec![MessageValue::Int(1), MessageValue::Int(2)]),
        )]);
        let report = validate_value(&reg, &schema, &short);
        assert!(report.violations[0].detail.contains("expected 3 elements"));
    }

    #[test]
    fn signed_unsigned_equality() {
        assert_eq!(MessageValue::Int(5), MessageValue::UInt(5));
        assert_ne!(MessageValue::Int(-5), MessageValue::UInt(5));
        assert_ne!(MessageValue::Int(5), MessageValue::Float(5.0));
    }
}
