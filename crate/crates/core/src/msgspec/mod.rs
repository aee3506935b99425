//! Message-type definition language, dynamic value model, and the three
//! codecs of the conversion pipeline: binary, canonical YAML text, and
//! JSON text.
//!
//! All functions here are pure over immutable inputs and safe to call from
//! any thread; the [`SchemaRegistry`] allows concurrent reads with
//! serialized registration.

mod binary;
mod json;
mod registry;
mod schema;
pub(crate) mod text;
mod value;
mod yaml;

pub use binary::{decode_binary, encode_binary, BinaryError};

/// Canonical shortest-round-trip float text, as used by every renderer.
pub fn float_text(f: f64) -> String {
    text::render_f64(f)
}
pub use json::{json_to_yaml, value_to_json, yaml_to_json, JsonError};
pub use registry::SchemaRegistry;
pub use schema::{Arity, FieldDescriptor, FieldKind, MessageSchema, PrimitiveType, SchemaError};
pub use value::{validate_value, MessageValue, ValidationReport, Violation};
pub use yaml::{from_yaml, to_yaml, YamlError};
