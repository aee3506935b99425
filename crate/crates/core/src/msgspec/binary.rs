//! Deterministic binary codec: little-endian primitives, no padding,
//! strings and dynamic arrays prefixed by a uint32 element count, fixed
//! arrays unprefixed, fields in declaration order, nested types inlined.

use thiserror::Error;

use super::registry::SchemaRegistry;
use super::schema::{Arity, FieldKind, MessageSchema, PrimitiveType, SchemaError};
use super::value::{validate_value, MessageValue, ValidationReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinaryError {
    #[error("value does not conform to schema: {0}")]
    Validation(ValidationReport),
    #[error("schema error: {0}")]
    Schema(#[from] SchemaError),
    #[error("truncated input at offset {offset}: need {need} more bytes")]
    Truncated { offset: usize, need: usize },
    #[error("count prefix {count} at offset {offset} exceeds remaining length {remaining}")]
    CountExceedsInput { offset: usize, count: u64, remaining: usize },
    #[error("{len} trailing bytes after message end")]
    TrailingBytes { len: usize },
    #[error("invalid bool byte {byte:#04x} at offset {offset}")]
    InvalidBool { offset: usize, byte: u8 },
    #[error("invalid utf-8 in string at offset {offset}")]
    InvalidUtf8 { offset: usize },
}

/// Encode a validated value to its canonical byte layout.
///
/// Equal values produce byte-identical output.
pub fn encode_binary(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
) -> Result<Vec<u8>, BinaryError> {
    let report = validate_value(registry, schema, value);
    if !report.is_valid() {
        return Err(BinaryError::Validation(report));
    }
    let mut out = Vec::new();
    encode_record(registry, schema, value, &mut out)?;
    Ok(out)
}

fn encode_record(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    value: &MessageValue,
    out: &mut Vec<u8>,
) -> Result<(), BinaryError> {
    let MessageValue::Record(fields) = value else {
        unreachable!("validated value matches schema shape");
    };
    for (desc, (_, field_value)) in schema.fields().iter().zip(fields) {
        match desc.arity {
            Arity::Scalar => encode_element(registry, &desc.kind, field_value, out)?,
            Arity::Fixed(_) => {
                let MessageValue::List(items) = field_value else { unreachable!() };
                for item in items {
                    encode_element(registry, &desc.kind, item, out)?;
                }
            }
            Arity::Dynamic => {
                let MessageValue::List(items) = field_value else { unreachable!() };
                out.extend_from_slice(&(items.len() as u32).to_le_bytes());
                for item in items {
                    encode_element(registry, &desc.kind, item, out)?;
                }
            }
        }
    }
    Ok(())
}

fn encode_element(
    registry: &SchemaRegistry,
    kind: &FieldKind,
    value: &MessageValue,
    out: &mut Vec<u8>,
) -> Result<(), BinaryError> {
    match kind {
        FieldKind::Nested(type_name) => {
            let nested = registry.require(type_name)?;
            encode_record(registry, &nested, value, out)
        }
        FieldKind::Primitive(p) => {
            encode_primitive(*p, value, out);
            Ok(())
        }
    }
}

fn encode_primitive(prim: PrimitiveType, value: &MessageValue, out: &mut Vec<u8>) {
    match prim {
        PrimitiveType::Bool => {
            let MessageValue::Bool(b) = value else { unreachable!() };
            out.push(u8::from(*b));
        }
        PrimitiveType::String => {
            let MessageValue::Text(s) = value else { unreachable!() };
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        PrimitiveType::Float32 => {
            let f = value.as_f64().expect("validated float");
            out.extend_from_slice(&(f as f32).to_le_bytes());
        }
        PrimitiveType::Float64 => {
            let f = value.as_f64().expect("validated float");
            out.extend_from_slice(&f.to_le_bytes());
        }
        PrimitiveType::Int8 => out.extend_from_slice(&(int_of(value) as i8).to_le_bytes()),
        PrimitiveType::Int16 => out.extend_from_slice(&(int_of(value) as i16).to_le_bytes()),
        PrimitiveType::Int32 => out.extend_from_slice(&(int_of(value) as i32).to_le_bytes()),
        PrimitiveType::Int64 => out.extend_from_slice(&int_of(value).to_le_bytes()),
        PrimitiveType::UInt8 => out.extend_from_slice(&(uint_of(value) as u8).to_le_bytes()),
        PrimitiveType::UInt16 => out.extend_from_slice(&(uint_of(value) as u16).to_le_bytes()),
        PrimitiveType::UInt32 => out.extend_from_slice(&(uint_of(value) as u32).to_le_bytes()),
        PrimitiveType::UInt64 => out.extend_from_slice(&uint_of(value).to_le_bytes()),
    }
}

fn int_of(value: &MessageValue) -> i64 {
    match value {
        MessageValue::Int(i) => *i,
        MessageValue::UInt(u) => *u as i64,
        _ => unreachable!("validated integer"),
    }
}

fn uint_of(value: &MessageValue) -> u64 {
    match value {
        MessageValue::Int(i) => *i as u64,
        MessageValue::UInt(u) => *u,
        _ => unreachable!("validated integer"),
    }
}

/// Decode bytes produced by [`encode_binary`]. Trailing bytes are an error.
///
/// Signed integer fields decode to `Int` leaves, unsigned ones to `UInt`.
pub fn decode_binary(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    bytes: &[u8],
) -> Result<MessageValue, BinaryError> {
    let mut cursor = Cursor { bytes, pos: 0 };
    let value = decode_record(registry, schema, &mut cursor)?;
    if cursor.pos != bytes.len() {
        return Err(BinaryError::TrailingBytes { len: bytes.len() - cursor.pos });
    }
    Ok(value)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BinaryError> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(BinaryError::Truncated { offset: self.pos, need: n - remaining });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take_count(&mut self) -> Result<u32, BinaryError> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
    }
}

fn decode_record(
    registry: &SchemaRegistry,
    schema: &MessageSchema,
    cursor: &mut Cursor<'_>,
) -> Result<MessageValue, BinaryError> {
    let mut fields = Vec::with_capacity(schema.fields().len());
    for desc in schema.fields() {
        let value = match desc.arity {
            Arity::Scalar => decode_element(registry, &desc.kind, cursor)?,
            Arity::Fixed(n) => {
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(decode_element(registry, &desc.kind, cursor)?);
                }
                MessageValue::List(items)
            }
            Arity::Dynamic => {
                let offset = cursor.pos;
                let count = cursor.take_count()?;
                let min_size = min_element_size(registry, &desc.kind)?.max(1);
                if count as u64 * min_size as u64 > cursor.remaining() as u64 {
                    return Err(BinaryError::CountExceedsInput {
                        offset,
                        count: count as u64,
                        remaining: cursor.remaining(),
                    });
                }
                let mut items = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    items.push(decode_element(registry, &desc.kind, cursor)?);
                }
                MessageValue::List(items)
            }
        };
        fields.push((desc.name.clone(), value));
    }
    Ok(MessageValue::Record(fields))
}

fn decode_element(
    registry: &SchemaRegistry,
    kind: &FieldKind,
    cursor: &mut Cursor<'_>,
) -> Result<MessageValue, BinaryError> {
    match kind {
        FieldKind::Nested(type_name) => {
            let nested = registry.require(type_name)?;
            decode_record(registry, &nested, cursor)
        }
        FieldKind::Primitive(p) => decode_primitive(*p, cursor),
    }
}

fn decode_primitive(
    prim: PrimitiveType,
    cursor: &mut Cursor<'_>,
) -> Result<MessageValue, BinaryError> {
    Ok(match prim {
        PrimitiveType::Bool => {
            let offset = cursor.pos;
            let byte = cursor.take(1)?[0];
            match byte {
                0 => MessageValue::Bool(false),
                1 => MessageValue::Bool(true),
                other => return Err(BinaryError::InvalidBool { offset, byte: other }),
            }
        }
        PrimitiveType::String => {
            let offset = cursor.pos;
            let len = cursor.take_count()?;
            if len as u64 > cursor.remaining() as u64 {
                return Err(BinaryError::CountExceedsInput {
                    offset,
                    count: len as u64,
                    remaining: cursor.remaining(),
                });
            }
            let start = cursor.pos;
            let raw = cursor.take(len as usize)?;
            let text = std::str::from_utf8(raw)
                .map_err(|_| BinaryError::InvalidUtf8 { offset: start })?;
            MessageValue::Text(text.to_string())
        }
        PrimitiveType::Float32 => {
            let raw = cursor.take(4)?;
            let f = f32::from_le_bytes(raw.try_into().expect("4 bytes"));
            MessageValue::Float(f as f64)
        }
        PrimitiveType::Float64 => {
            let raw = cursor.take(8)?;
            MessageValue::Float(f64::from_le_bytes(raw.try_into().expect("8 bytes")))
        }
        PrimitiveType::Int8 => MessageValue::Int(i8::from_le_bytes(
            cursor.take(1)?.try_into().expect("1 byte"),
        ) as i64),
        PrimitiveType::Int16 => MessageValue::Int(i16::from_le_bytes(
            cursor.take(2)?.try_into().expect("2 bytes"),
        ) as i64),
        PrimitiveType::Int32 => MessageValue::Int(i32::from_le_bytes(
            cursor.take(4)?.try_into().expect("4 bytes"),
        ) as i64),
        PrimitiveType::Int64 => MessageValue::Int(i64::from_le_bytes(
            cursor.take(8)?.try_into().expect("8 bytes"),
        )),
        PrimitiveType::UInt8 => MessageValue::UInt(cursor.take(1)?[0] as u64),
        PrimitiveType::UInt16 => MessageValue::UInt(u16::from_le_bytes(
            cursor.take(2)?.try_into().expect("2 bytes"),
        ) as u64),
        PrimitiveType::UInt32 => MessageValue::UInt(u32::from_le_bytes(
            cursor.take(4)?.try_into().expect("4 bytes"),
        ) as u64),
        PrimitiveType::UInt64 => MessageValue::UInt(u64::from_le_bytes(
            cursor.take(8)?.try_into().expect("8 bytes"),
        )),
    })
}

/// Smallest possible encoded size of one element of `kind`.
fn min_element_size(registry: &SchemaRegistry, kind: &FieldKind) -> Result<usize, BinaryError> {
    Ok(match kind {
        FieldKind::Primitive(p) => match p {
            PrimitiveType::Bool | PrimitiveType::Int8 | PrimitiveType::UInt8 => 1,
            PrimitiveType::Int16 | PrimitiveType::UInt16 => 2,
            PrimitiveType::Int32
            | PrimitiveType::UInt32
            | PrimitiveType::Float32
            | PrimitiveType::String => 4,
            PrimitiveType::Int64 | PrimitiveType::UInt64 | PrimitiveType::Float64 => 8,
        },
        FieldKind::Nested(type_name) => {
            let nested = registry.require(type_name)?;
            let mut total = 0usize;
            for desc in nested.fields() {
                let per = min_element_size(registry, &desc.kind)?;
                total += match desc.arity {
                    Arity::Scalar => per,
                    Arity::Fixed(n) => per * n,
                    Arity::Dynamic => 4,
                };
            }
            total
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgspec::SchemaRegistry;

    fn reg_with(name: &str, source: &str) -> (SchemaRegistry, MessageSchema) {
        let reg = SchemaRegistry::new();
        let schema = reg.register(name, source).unwrap();
        (reg, schema)
    }

    #[test]
    fn int32_layout_matches_hand_oracle() {
        let (reg, schema) = reg_with("test_msgs/N", "int32 n");
        let value = MessageValue::record([("n", MessageValue::Int(1))]);
        let bytes = encode_binary(&reg, &schema, &value).unwrap();
        // Hand layout: 1 as little-endian two's-complement in 4 bytes.
        assert_eq!(bytes, vec![0x01, 0x00, 0x00, 0x00]);
        assert_eq!(decode_binary(&reg, &schema, &bytes).unwrap(), value);
    }

    #[test]
    fn empty_string_is_zero_length_prefix() {
        let (reg, schema) = reg_with("std_msgs/String", "string data");
        let value = MessageValue::record([("data", MessageValue::text(""))]);
        let bytes = encode_binary(&reg, &schema, &value).unwrap();
        assert_eq!(bytes, vec![0x00, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn zero_twist_is_48_zero_bytes() {
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
        let bytes = encode_binary(&reg, &schema, &value).unwrap();
        // Oracle: 6 float64 little-endian zeros.
        assert_eq!(bytes, vec![0u8; 48]);
    }

    #[test]
    fn mixed_layout_hand_oracle() {
        let (reg, schema) = reg_with("test_msgs/Mix", "uint16 id\nstring tag\nint8[] deltas");
        let value = MessageValue::record([
            ("id", MessageValue::UInt(0x0201)),
            ("tag", MessageValue::text("ab")),
            (
                "deltas",
                MessageValue::List(vec![MessageValue::Int(-1), MessageValue::Int(2)]),
            ),
        ]);
        let bytes = encode_binary(&reg, &schema, &value).unwrap();
        let expected = vec![
            0x01, 0x02, // uint16 LE
            0x02, 0x00, 0x00, 0x00, b'a', b'b', // count-prefixed string
            0x02, 0x00, 0x00, 0x00, 0xFF, 0x02, // count-prefixed int8 array
        ];
        assert_eq!(bytes, expected);
        assert_eq!(decode_binary(&reg, &schema, &bytes).unwrap(), value);
    }

    #[test]
    fn truncated_input_rejected() {
        let (reg, schema) = reg_with("test_msgs/N2", "int32 n");
        let err = decode_binary(&reg, &schema, &[]).unwrap_err();
        assert!(matches!(err, BinaryError::Truncated { offset: 0, .. }));
    }

    #[test]
    fn count_prefix_beyond_input_rejected() {
        let (reg, schema) = reg_with("test_msgs/S2", "string data");
        let err = decode_binary(&reg, &schema, &[0xFF, 0xFF, 0xFF, 0xFF]).unwrap_err();
        assert!(matches!(err, BinaryError::CountExceedsInput { .. }));

        let (reg, schema) = reg_with("test_msgs/A2", "int32[] a");
        let err = decode_binary(&reg, &schema, &[0x10, 0x00, 0x00, 0x00, 0x01]).unwrap_err();
        assert!(matches!(err, BinaryError::CountExceedsInput { .. }));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let (reg, schema) = reg_with("test_msgs/N3", "int32 n");
        let err = decode_binary(&reg, &schema, &[1, 0, 0, 0, 9]).unwrap_err();
        assert!(matches!(err, BinaryError::TrailingBytes { len: 1 }));
    }

    #[test]
    fn invalid_bool_and_utf8_rejected() {
        let (reg, schema) = reg_with("test_msgs/B", "bool flag");
        let err = decode_binary(&reg, &schema, &[2]).unwrap_err();
        assert!(matches!(err, BinaryError::InvalidBool { byte: 2, .. }));

        let (reg, schema) = reg_with("test_msgs/S3", "string data");
        let err = decode_binary(&reg, &schema, &[1, 0, 0, 0, 0xFF]).unwrap_err();
        assert!(matches!(err, BinaryError::InvalidUtf8 { .. }));
    }

    #[test]
    fn invalid_value_never_encodes() {
        let (reg, schema) = reg_with("test_msgs/N4", "int8 n");
        let value = MessageValue::record([("n", MessageValue::Int(200))]);
        assert!(matches!(
            encode_binary(&reg, &schema, &value),
            Err(BinaryError::Validation(_))
        ));
    }
}
