//! Thread-safe store of registered message-type definitions.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use super::schema::{
    is_type_reference, package_of, parse_fields, FieldKind, MessageSchema, SchemaError,
};

/// Registry of message schemas, shared by routers and participants.
///
/// Clones share the same underlying store. Reads run concurrently;
/// registration is serialized by a write lock.
#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    inner: Arc<RwLock<HashMap<String, MessageSchema>>>,
}

impl SchemaRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry preloaded with the message types used by the stock demos:
    /// `std_msgs/String`, `geometry_msgs/Vector3`, `geometry_msgs/Twist`,
    /// and the `example_interfaces/AddTwoInts` request/response pair.
    pub fn with_standard_types() -> Self {
        let reg = Self::new();
        for (name, source) in STANDARD_TYPES {
            reg.register(name, source).expect("standard types are well-formed");
        }
        reg
    }

    /// Parse one definition and add it under `name`.
    ///
    /// Unqualified nested references resolve within `name`'s package, so
    /// dependencies must be registered first; this also makes reference
    /// cycles impossible to create. Re-registering an identical definition
    /// is a no-op; a different definition under the same name is a conflict.
    pub fn register(&self, name: &str, source: &str) -> Result<MessageSchema, SchemaError> {
        if !is_type_reference(name) {
            return Err(SchemaError::InvalidTypeName(name.to_string()));
        }
        let raw = parse_fields(source)?;
        let mut guard = self.inner.write().expect("schema registry poisoned");

        let mut fields = Vec::with_capacity(raw.len());
        for rf in raw {
            let mut field = rf.field;
            if let FieldKind::Nested(ref type_ref) = field.kind {
                let resolved = resolve_reference(&guard, name, type_ref).ok_or_else(|| {
                    SchemaError::UnknownType {
                        line: rf.line,
                        column: rf.type_column,
                        type_name: type_ref.clone(),
                    }
                })?;
                field.kind = FieldKind::Nested(resolved);
            }
            fields.push(field);
        }

        let schema = MessageSchema::new(name.to_string(), fields);
        if let Some(existing) = guard.get(name) {
            if existing == &schema {
                return Ok(schema);
            }
            return Err(SchemaError::Conflict(name.to_string()));
        }
        guard.insert(name.to_string(), schema.clone());
        Ok(schema)
    }

    /// Look up a schema by qualified name.
    pub fn get(&self, name: &str) -> Option<MessageSchema> {
        self.inner.read().expect("schema registry poisoned").get(name).cloned()
    }

    /// Like [`get`](Self::get) but with an error for unknown names.
    pub fn require(&self, name: &str) -> Result<MessageSchema, SchemaError> {
        self.get(name).ok_or_else(|| SchemaError::UnknownTypeName(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.inner.read().expect("schema registry poisoned").contains_key(name)
    }

    pub fn type_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .inner
            .read()
            .expect("schema registry poisoned")
            .keys()
            .cloned()
            .collect();
        names.sort();
        names
    }

    /// Load every `*.msg` file under `root`. Subdirectories become package
    /// prefixes: `root/geometry_msgs/Twist.msg` registers
    /// `geometry_msgs/Twist`. Files may reference each other in any order.
    pub fn load_dir(&self, root: &Path) -> Result<Vec<String>, SchemaError> {
        let mut sources: Vec<(String, String)> = Vec::new();
        collect_msg_files(root, root, &mut sources)?;
        sources.sort();

        // Definitions may arrive in any order; retry until no progress.
        let mut registered = Vec::new();
        let mut pending = sources;
        loop {
            let mut next = Vec::new();
            let mut progressed = false;
            let mut last_err = None;
            for (name, source) in pending {
                match self.register(&name, &source) {
                    Ok(_) => {
                        registered.push(name);
                        progressed = true;
                    }
                    Err(err @ SchemaError::UnknownType { .. }) => {
                        last_err = Some((name.clone(), err.clone()));
                        next.push((name, source));
                    }
                    Err(other) => {
                        return Err(SchemaError::Load(format!("{name}: {other}")));
                    }
                }
            }
            if next.is_empty() {
                return Ok(registered);
            }
            if !progressed {
                let (name, err) = last_err.expect("stalled load has at least one error");
                return Err(SchemaError::Load(format!(
                    "{name}: {err} (unresolved or cyclic reference)"
                )));
            }
            pending = next;
        }
    }
}

fn resolve_reference(
    known: &HashMap<String, MessageSchema>,
    owner: &str,
    type_ref: &str,
) -> Option<String> {
    if type_ref.contains('/') {
        return known.contains_key(type_ref).then(|| type_ref.to_string());
    }
    if let Some(pkg) = package_of(owner) {
        let qualified = format!("{pkg}/{type_ref}");
        if known.contains_key(&qualified) {
            return Some(qualified);
        }
    }
    known.contains_key(type_ref).then(|| type_ref.to_string())
}

fn collect_msg_files(
    root: &Path,
    dir: &Path,
    out: &mut Vec<(String, String)>,
) -> Result<(), SchemaError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| SchemaError::Load(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(|e| SchemaError::Load(format!("{}: {e}", dir.display())))?;
        let path: PathBuf = entry.path();
        if path.is_dir() {
            collect_msg_files(root, &path, out)?;
        } else if path.extension().is_some_and(|ext| ext == "msg") {
            let rel = path.strip_prefix(root).expect("path under root");
            let mut name_parts: Vec<String> = rel
                .parent()
                .into_iter()
                .flat_map(|p| p.components())
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let stem = path
                .file_stem()
                .expect("msg file has a stem")
                .to_string_lossy()
                .into_owned();
            name_parts.push(stem);
            let name = name_parts.join("/");
            let source = std::fs::read_to_string(&path)
                .map_err(|e| SchemaError::Load(format!("{}: {e}", path.display())))?;
            out.push((name, source));
        }
    }
    Ok(())
}

const STANDARD_TYPES: &[(&str, &str)] = &[
    ("std_msgs/String", "string data"),
    ("geometry_msgs/Vector3", "float64 x\nfloat64 y\nfloat64 z"),
    ("geometry_msgs/Twist", "Vector3 linear\nVector3 angular"),
    ("example_interfaces/AddTwoInts_Request", "int64 a\nint64 b"),
    ("example_interfaces/AddTwoInts_Response", "int64 sum"),
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgspec::schema::Arity;

    #[test]
    fn twist_resolves_vector3_within_package() {
        let reg = SchemaRegistry::with_standard_types();
        let twist = reg.get("geometry_msgs/Twist").unwrap();
        assert_eq!(twist.fields().len(), 2);
        assert_eq!(
            twist.fields()[0].kind,
            FieldKind::Nested("geometry_msgs/Vector3".to_string())
        );
    }

    #[test]
    fn unknown_reference_rejected_with_position() {
        let reg = SchemaRegistry::new();
        let err = reg.register("demo/Broken", "Missing x").unwrap_err();
        match err {
            SchemaError::UnknownType { line, column, type_name } => {
                assert_eq!((line, column, type_name.as_str()), (1, 1, "Missing"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn self_reference_is_impossible() {
        let reg = SchemaRegistry::new();
        let err = reg.register("demo/Loop", "Loop next").unwrap_err();
        assert!(matches!(err, SchemaError::UnknownType { .. }));
    }

    #[test]
    fn idempotent_reregistration_and_conflicts() {
        let reg = SchemaRegistry::new();
        reg.register("demo/T", "int32 a").unwrap();
        reg.register("demo/T", "int32 a").unwrap();
        let err = reg.register("demo/T", "int64 a").unwrap_err();
        assert!(matches!(err, SchemaError::Conflict(_)));
    }

    #[test]
    fn load_dir_handles_out_of_order_dependencies() {
        let dir = tempfile::tempdir().unwrap();
        let pkg = dir.path().join("geometry_msgs");
        std::fs::create_dir_all(&pkg).unwrap();
        // Twist sorts before Vector3, so the loader has to retry.
        std::fs::write(pkg.join("Twist.msg"), "Vector3 linear\nVector3 angular").unwrap();
        std::fs::write(pkg.join("Vector3.msg"), "float64 x\nfloat64 y\nfloat64 z").unwrap();
        std::fs::write(dir.path().join("Flag.msg"), "bool value # root-level type").unwrap();

        let reg = SchemaRegistry::new();
        let mut loaded = reg.load_dir(dir.path()).unwrap();
        loaded.sort();
        assert_eq!(loaded, vec!["Flag", "geometry_msgs/Twist", "geometry_msgs/Vector3"]);
        assert_eq!(reg.get("Flag").unwrap().fields()[0].arity, Arity::Scalar);
    }

    #[test]
    fn load_dir_reports_unresolved_reference() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("Bad.msg"), "Nowhere x").unwrap();
        let err = SchemaRegistry::new().load_dir(dir.path()).unwrap_err();
        assert!(matches!(err, SchemaError::Load(_)));
    }
}
