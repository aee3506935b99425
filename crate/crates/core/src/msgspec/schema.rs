//! Message-type definitions and the definition-text parser.
//!
//! A type is defined by lines of `<type> <name>`, `<type>[] <name>` or
//! `<type>[N] <name>`; `#` starts a comment. Field types are either one of
//! the primitive keywords or a reference to another registered type.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Primitive field types understood by every codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveType {
    Bool,
    Int8,
    Int16,
    Int32,
    Int64,
    UInt8,
    UInt16,
    UInt32,
    UInt64,
    Float32,
    Float64,
    String,
}

impl PrimitiveType {
    /// Keyword as written in definition sources.
    pub fn keyword(self) -> &'static str {
        match self {
            PrimitiveType::Bool => "bool",
            PrimitiveType::Int8 => "int8",
            PrimitiveType::Int16 => "int16",
            PrimitiveType::Int32 => "int32",
            PrimitiveType::Int64 => "int64",
            PrimitiveType::UInt8 => "uint8",
            PrimitiveType::UInt16 => "uint16",
            PrimitiveType::UInt32 => "uint32",
            PrimitiveType::UInt64 => "uint64",
            PrimitiveType::Float32 => "float32",
            PrimitiveType::Float64 => "float64",
            PrimitiveType::String => "string",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "bool" => PrimitiveType::Bool,
            "int8" => PrimitiveType::Int8,
            "int16" => PrimitiveType::Int16,
            "int32" => PrimitiveType::Int32,
            "int64" => PrimitiveType::Int64,
            "uint8" => PrimitiveType::UInt8,
            "uint16" => PrimitiveType::UInt16,
            "uint32" => PrimitiveType::UInt32,
            "uint64" => PrimitiveType::UInt64,
            "float32" => PrimitiveType::Float32,
            "float64" => PrimitiveType::Float64,
            "string" => PrimitiveType::String,
            _ => return None,
        })
    }

    /// Inclusive signed bounds for integer types; `None` for non-integers.
    pub fn signed_bounds(self) -> Option<(i64, i64)> {
        Some(match self {
            PrimitiveType::Int8 => (i8::MIN as i64, i8::MAX as i64),
            PrimitiveType::Int16 => (i16::MIN as i64, i16::MAX as i64),
            PrimitiveType::Int32 => (i32::MIN as i64, i32::MAX as i64),
            PrimitiveType::Int64 => (i64::MIN, i64::MAX),
            _ => return None,
        })
    }

    /// Inclusive unsigned upper bound for unsigned integer types.
    pub fn unsigned_max(self) -> Option<u64> {
        Some(match self {
            PrimitiveType::UInt8 => u8::MAX as u64,
            PrimitiveType::UInt16 => u16::MAX as u64,
            PrimitiveType::UInt32 => u32::MAX as u64,
            PrimitiveType::UInt64 => u64::MAX,
            _ => return None,
        })
    }

    pub fn is_integer(self) -> bool {
        self.signed_bounds().is_some() || self.unsigned_max().is_some()
    }
}

impl fmt::Display for PrimitiveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// What a field holds: a primitive or a reference to another type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Primitive(PrimitiveType),
    /// Fully qualified name of the referenced type.
    Nested(String),
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Primitive(p) => write!(f, "{p}"),
            FieldKind::Nested(name) => f.write_str(name),
        }
    }
}

/// Scalar, fixed-size array, or dynamically sized array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arity {
    Scalar,
    Fixed(usize),
    Dynamic,
}

/// One field of a message type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub name: String,
    pub kind: FieldKind,
    pub arity: Arity,
}

/// A parsed message-type definition: a qualified name plus ordered fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSchema {
    name: String,
    fields: Vec<FieldDescriptor>,
}

impl MessageSchema {
    pub(crate) fn new(name: String, fields: Vec<FieldDescriptor>) -> Self {
        MessageSchema { name, fields }
    }

    /// Qualified type name, e.g. `geometry_msgs/Twist`.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Fields in declaration order.
    pub fn fields(&self) -> &[FieldDescriptor] {
        &self.fields
    }

    /// Package prefix of the type name, if any.
    pub fn package(&self) -> Option<&str> {
        package_of(&self.name)
    }
}

pub(crate) fn package_of(type_name: &str) -> Option<&str> {
    type_name.rsplit_once('/').map(|(pkg, _)| pkg)
}

/// Errors raised while parsing or registering type definitions.
///
/// Every rejection of definition text carries a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("{line}:{column}: syntax error: {detail}")]
    Syntax { line: usize, column: usize, detail: String },
    #[error("{line}:{column}: duplicate field `{name}`")]
    DuplicateField { line: usize, column: usize, name: String },
    #[error("{line}:{column}: unknown type `{type_name}`")]
    UnknownType { line: usize, column: usize, type_name: String },
    #[error("{line}:{column}: arity error: {detail}")]
    Arity { line: usize, column: usize, detail: String },
    #[error("invalid type name `{0}`")]
    InvalidTypeName(String),
    #[error("type `{0}` is already registered with a different definition")]
    Conflict(String),
    #[error("unknown type `{0}`")]
    UnknownTypeName(String),
    #[error("failed to load schema directory: {0}")]
    Load(String),
}

/// A field with the source position of its type token, before nested
/// references have been resolved against a registry.
#[derive(Debug, Clone)]
pub(crate) struct RawField {
    pub field: FieldDescriptor,
    pub line: usize,
    pub type_column: usize,
}

/// Parse definition text into fields. Nested type references are kept as
/// written; resolution against the registry happens at registration time.
pub(crate) fn parse_fields(source: &str) -> Result<Vec<RawField>, SchemaError> {
    let mut fields: Vec<RawField> = Vec::new();
    for (idx, raw_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }

        let mut tokens = token_spans(line);
        if tokens.len() != 2 {
            let (column, detail) = if tokens.len() < 2 {
                let last = tokens.last().map(|t| t.1 + t.2.len()).unwrap_or(0);
                (last + 1, "expected `<type> <name>`".to_string())
            } else {
                let extra = tokens[2];
                (extra.1 + 1, format!("unexpected token `{}`", extra.2))
            };
            return Err(SchemaError::Syntax { line: line_no, column, detail });
        }
        let (_, type_col, type_tok) = tokens.remove(0);
        let (_, name_col, name_tok) = tokens.remove(0);

        let (base, arity) = split_arity(type_tok, line_no, type_col + 1)?;
        let kind = match PrimitiveType::from_keyword(base) {
            Some(p) => FieldKind::Primitive(p),
            None => {
                if !is_type_reference(base) {
                    return Err(SchemaError::Syntax {
                        line: line_no,
                        column: type_col + 1,
                        detail: format!("invalid type `{base}`"),
                    });
                }
                FieldKind::Nested(base.to_string())
            }
        };

        if !is_field_identifier(name_tok) {
            return Err(SchemaError::Syntax {
                line: line_no,
                column: name_col + 1,
                detail: format!("invalid field name `{name_tok}` (expected [a-z][a-z0-9_]*)"),
            });
        }
        if fields.iter().any(|f| f.field.name == name_tok) {
            return Err(SchemaError::DuplicateField {
                line: line_no,
                column: name_col + 1,
                name: name_tok.to_string(),
            });
        }

        fields.push(RawField {
            field: FieldDescriptor {
                name: name_tok.to_string(),
                kind,
                arity,
            },
            line: line_no,
            type_column: type_col + 1,
        });
    }
    Ok(fields)
}

/// Whitespace-separated tokens with their byte offsets.
fn token_spans(line: &str) -> Vec<(usize, usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((out.len(), s, &line[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((out.len(), s, &line[s..]));
    }
    out
}

fn split_arity(token: &str, line: usize, column: usize) -> Result<(&str, Arity), SchemaError> {
    let Some(open) = token.find('[') else {
        return Ok((token, Arity::Scalar));
    };
    if !token.ends_with(']') {
        return Err(SchemaError::Syntax {
            line,
            column: column + open,
            detail: "unterminated `[`".to_string(),
        });
    }
    let base = &token[..open];
    let inner = &token[open + 1..token.len() - 1];
    if inner.is_empty() {
        return Ok((base, Arity::Dynamic));
    }
    let n: usize = inner.parse().map_err(|_| SchemaError::Arity {
        line,
        column: column + open,
        detail: format!("invalid array size `{inner}`"),
    })?;
    if n == 0 {
        return Err(SchemaError::Arity {
            line,
            column: column + open,
            detail: "fixed-array size must be at least 1".to_string(),
        });
    }
    Ok((base, Arity::Fixed(n)))
}

fn is_field_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn is_ident_part(part: &str) -> bool {
    let mut chars = part.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A type reference: `Name` or `pkg/Name` (each segment an identifier).
pub(crate) fn is_type_reference(name: &str) -> bool {
    let parts: Vec<&str> = name.split('/').collect();
    !parts.is_empty() && parts.len() <= 2 && parts.iter().all(|p| is_ident_part(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_field() {
        let fields = parse_fields("string data").unwrap();
        assert_eq!(fields.len(), 1);
        assert_eq!(fields[0].field.name, "data");
        assert_eq!(fields[0].field.kind, FieldKind::Primitive(PrimitiveType::String));
        assert_eq!(fields[0].field.arity, Arity::Scalar);
    }

    #[test]
    fn parses_arrays_and_comments() {
        let src = "# header comment\nint32[3] fixed\nfloat64[] dyn # trailing\n\nbool flag";
        let fields = parse_fields(src).unwrap();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[0].field.arity, Arity::Fixed(3));
        assert_eq!(fields[1].field.arity, Arity::Dynamic);
        assert_eq!(fields[2].field.arity, Arity::Scalar);
    }

    #[test]
    fn duplicate_field_reports_position() {
        let err = parse_fields("int32[3] a\nint32[3] a").unwrap_err();
        match err {
            SchemaError::DuplicateField { line, column, name } => {
                assert_eq!((line, column, name.as_str()), (2, 10, "a"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_fixed_array_rejected() {
        let err = parse_fields("int32[0] a").unwrap_err();
        assert!(matches!(err, SchemaError::Arity { line: 1, .. }));
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = parse_fields("int32").unwrap_err();
        assert!(matches!(err, SchemaError::Syntax { line: 1, .. }));
        let err = parse_fields("int32 a b").unwrap_err();
        match err {
            SchemaError::Syntax { line, column, .. } => assert_eq!((line, column), (1, 9)),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_fields("int32 Data").unwrap_err();
        assert!(matches!(err, SchemaError::Syntax { line: 1, column: 7, .. }));
    }

    #[test]
    fn nested_reference_allowed() {
        let fields = parse_fields("Vector3 linear\nVector3 angular").unwrap();
        assert_eq!(fields[0].field.kind, FieldKind::Nested("Vector3".to_string()));
    }

    #[test]
    fn bad_type_token_rejected() {
        assert!(parse_fields("ge/om/etry x").is_err());
        assert!(parse_fields("3vec x").is_err());
        assert!(parse_fields("int32[2 a").is_err());
    }
}
