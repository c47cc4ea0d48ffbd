//! Document model for OpenAPI 3.x documents carrying the Extended Security
//! Scheme (ESS) vendor extensions.
//!
//! The recognised extension nodes are:
//!
//! | node                 | where                                     |
//! |----------------------|-------------------------------------------|
//! | `X-objectAuthScheme` | `components.securitySchemes`              |
//! | `x-groups`, `x-user_id` | inside an object-auth security scheme  |
//! | `x-objectAuth`       | `components.schemas.<Schema>` (root-level)|
//! | `x-objects`          | path item, refers to a schema binding     |
//! | `X-objectAuth`       | operation (method-level)                  |
//!
//! Extension keys are matched case-insensitively when parsing. Everything else in
//! the document is kept opaquely in [`EssDocument::raw`].

mod reference;

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::action::{CrudAction, HttpMethod};

pub use reference::{pointer_from_segments, reference_segments, resolve, ResolvedRef};

pub const OBJECT_AUTH_SCHEME: &str = "X-objectAuthScheme";
pub const X_GROUPS: &str = "x-groups";
pub const X_USER_ID: &str = "x-user_id";
pub const ROOT_BINDING_KEY: &str = "x-objectAuth";
pub const PATH_OBJECTS_KEY: &str = "x-objects";
pub const METHOD_BINDING_KEY: &str = "X-objectAuth";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("unsupported document version {0}: only OpenAPI 3.x documents are accepted")]
    UnsupportedVersion(String),
    #[error("dangling reference `{0}`")]
    DanglingRef(String),
    #[error("cyclic reference `{0}`")]
    CyclicRef(String),
    #[error("unsupported reference `{0}`: only intra-document `#/` fragments are allowed")]
    RemoteRef(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentFormat {
    Yaml,
    Json,
}

impl DocumentFormat {
    /// Guesses the format from a file name; anything but `.json` is YAML.
    pub fn from_path(path: &std::path::Path) -> DocumentFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => DocumentFormat::Json,
            _ => DocumentFormat::Yaml,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SchemeKind {
    ApiKey,
    ObjectAuthScheme,
    Other(String),
}

/// Where a credential is carried. `Body` is an ESS addition for tokens sent in the request body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenLocation {
    Header,
    Query,
    Cookie,
    Body,
}

impl TokenLocation {
    pub fn as_str(self) -> &'static str {
        match self {
            TokenLocation::Header => "header",
            TokenLocation::Query => "query",
            TokenLocation::Cookie => "cookie",
            TokenLocation::Body => "body",
        }
    }

    pub fn parse(s: &str) -> Option<TokenLocation> {
        [
            TokenLocation::Header,
            TokenLocation::Query,
            TokenLocation::Cookie,
            TokenLocation::Body,
        ]
        .into_iter()
        .find(|l| s.eq_ignore_ascii_case(l.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecurityScheme {
    pub name: String,
    pub kind: SchemeKind,
    pub location: Option<TokenLocation>,
    pub param_name: String,
    pub x_groups: Option<String>,
    pub x_user_id: Option<String>,
}

impl SecurityScheme {
    pub fn is_object_auth(&self) -> bool {
        self.kind == SchemeKind::ObjectAuthScheme
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertySchema {
    pub ty: Option<String>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectSchema {
    pub name: String,
    pub ty: Option<String>,
    pub properties: IndexMap<String, PropertySchema>,
}

impl ObjectSchema {
    pub fn is_object(&self) -> bool {
        self.ty.as_deref() == Some("object") || !self.properties.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    RootLevel,
    MethodLevel,
}

/// Which node carries a binding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingOwner {
    Schema(String),
    Operation { path: String, method: HttpMethod },
}

/// An inline token declaration (method-level `token:` block).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InlineToken {
    pub token_type: Option<String>,
    pub name: Option<String>,
    pub location: Option<TokenLocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeBinding {
    Ref(String),
    Inline(InlineToken),
    Missing,
}

/// Type descriptors for the two claims an action is checked against.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScopeClaims {
    pub groups: Option<String>,
    pub user_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScopeSet {
    pub actions: BTreeMap<CrudAction, ScopeClaims>,
    /// Scope keys that named no CRUD action.
    pub invalid_keys: Vec<String>,
}

impl ScopeSet {
    pub fn covers(&self, action: CrudAction) -> bool {
        self.actions.contains_key(&action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectAuthBinding {
    /// Pointer to the binding node itself.
    pub pointer: String,
    pub placement: Placement,
    pub owner: BindingOwner,
    pub object_id_ref: Option<String>,
    pub scheme: SchemeBinding,
    pub scopes: ScopeSet,
}

impl ObjectAuthBinding {
    pub fn scheme_ref(&self) -> Option<&str> {
        match &self.scheme {
            SchemeBinding::Ref(r) => Some(r),
            _ => None,
        }
    }

    /// Base segments for relative references inside this binding.
    pub fn base_segments(&self) -> Option<Vec<String>> {
        match &self.owner {
            BindingOwner::Operation { path, .. } => Some(vec!["paths".to_string(), path.clone()]),
            BindingOwner::Schema(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathItem {
    pub methods: BTreeSet<HttpMethod>,
    pub x_objects_ref: Option<String>,
    /// Further `x-objects` references beyond the first (only one is permitted).
    pub extra_object_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssDocument {
    pub paths: IndexMap<String, PathItem>,
    pub security_schemes: IndexMap<String, SecurityScheme>,
    pub schemas: IndexMap<String, ObjectSchema>,
    pub bindings: Vec<ObjectAuthBinding>,
    pub raw: Value,
}

impl EssDocument {
    /// A minimal skeleton with no paths.
    pub fn empty() -> EssDocument {
        EssDocument::from_value(skeleton()).expect("skeleton is well formed")
    }

    pub fn from_value(raw: Value) -> Result<EssDocument, ModelError> {
        parse_value(raw)
    }

    /// Resolves a `#/`-rooted reference against this document.
    pub fn resolve(&self, reference: &str) -> Result<ResolvedRef<'_>, ModelError> {
        resolve(&self.raw, reference, None)
    }

    /// Resolves a reference found inside `binding`, honouring relative references.
    pub fn resolve_in_binding(
        &self,
        binding: &ObjectAuthBinding,
        reference: &str,
    ) -> Result<ResolvedRef<'_>, ModelError> {
        let base = binding.base_segments();
        resolve(&self.raw, reference, base.as_deref())
    }

    /// The security scheme a resolved pointer designates, if any.
    pub fn scheme_at(&self, segments: &[String]) -> Option<&SecurityScheme> {
        match segments {
            [c, s, name] if c == "components" && s == "securitySchemes" => {
                self.security_schemes.get(name)
            }
            _ => None,
        }
    }

    /// Every binding that applies to `path`: the schema binding its `x-objects`
    /// refers to, plus any method-level bindings on its operations.
    pub fn bindings_for_path(&self, path: &str) -> Vec<&ObjectAuthBinding> {
        let mut out = Vec::new();
        if let Some(item) = self.paths.get(path) {
            if let Some(r) = &item.x_objects_ref {
                if let Ok(target) = self.resolve(r) {
                    let ptr = target.pointer();
                    out.extend(self.bindings.iter().filter(|b| b.pointer == ptr));
                }
            }
        }
        out.extend(self.bindings.iter().filter(
            |b| matches!(&b.owner, BindingOwner::Operation { path: p, .. } if p == path),
        ));
        out
    }

    pub fn object_auth_schemes(&self) -> impl Iterator<Item = &SecurityScheme> {
        self.security_schemes.values().filter(|s| s.is_object_auth())
    }
}

/// Parses a YAML or JSON document.
pub fn parse_document(text: &str, format: DocumentFormat) -> Result<EssDocument, ModelError> {
    let raw: Value = match format {
        DocumentFormat::Yaml => {
            serde_yaml::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?
        }
        DocumentFormat::Json => {
            serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?
        }
    };
    EssDocument::from_value(raw)
}

/// Resolves `reference` in `doc`.
pub fn resolve_ref<'a>(doc: &'a EssDocument, reference: &str) -> Result<&'a Value, ModelError> {
    doc.resolve(reference).map(|r| r.node)
}

/// Serializes the document, normalizing ESS extension keys to their canonical spelling.
pub fn emit_document(doc: &EssDocument, format: DocumentFormat) -> String {
    let mut raw = match &doc.raw {
        Value::Null => skeleton(),
        Value::Object(m) if m.is_empty() => skeleton(),
        other => other.clone(),
    };
    canonicalize_keys(&mut raw);
    match format {
        DocumentFormat::Yaml => serde_yaml::to_string(&raw).expect("JSON values serialize to YAML"),
        DocumentFormat::Json => {
            let mut s = serde_json::to_string_pretty(&raw).expect("JSON values serialize");
            s.push('\n');
            s
        }
    }
}

fn skeleton() -> Value {
    serde_json::json!({
        "openapi": "3.0.3",
        "info": {"title": "untitled", "version": "0.0.0"},
        "paths": {}
    })
}

fn key_is(key: &str, canonical: &str) -> bool {
    key.eq_ignore_ascii_case(canonical)
}

fn find_key<'a>(map: &'a Map<String, Value>, canonical: &str) -> Option<(&'a String, &'a Value)> {
    map.get_key_value(canonical)
        .or_else(|| map.iter().find(|(k, _)| key_is(k, canonical)))
}

fn rename_key(map: &mut Map<String, Value>, canonical: &str) {
    let found = map
        .keys()
        .find(|k| k.as_str() != canonical && key_is(k, canonical))
        .cloned();
    if let Some(old) = found {
        if map.contains_key(canonical) {
            return;
        }
        // keep position: rebuild the map in order
        let entries: Vec<(String, Value)> = std::mem::take(map).into_iter().collect();
        for (k, v) in entries {
            if k == old {
                map.insert(canonical.to_string(), v);
            } else {
                map.insert(k, v);
            }
        }
    }
}

fn canonicalize_keys(raw: &mut Value) {
    let Some(root) = raw.as_object_mut() else {
        return;
    };
    if let Some(Value::Object(components)) = root.get_mut("components") {
        if let Some(Value::Object(schemes)) = components.get_mut("securitySchemes") {
            rename_key(schemes, OBJECT_AUTH_SCHEME);
            for scheme in schemes.values_mut().filter_map(Value::as_object_mut) {
                rename_key(scheme, X_GROUPS);
                rename_key(scheme, X_USER_ID);
            }
        }
        if let Some(Value::Object(schemas)) = components.get_mut("schemas") {
            for schema in schemas.values_mut().filter_map(Value::as_object_mut) {
                rename_key(schema, ROOT_BINDING_KEY);
            }
        }
    }
    if let Some(Value::Object(paths)) = root.get_mut("paths") {
        for item in paths.values_mut().filter_map(Value::as_object_mut) {
            rename_key(item, PATH_OBJECTS_KEY);
            for (k, op) in item.iter_mut() {
                if HttpMethod::parse(k).is_some() {
                    if let Some(op) = op.as_object_mut() {
                        rename_key(op, METHOD_BINDING_KEY);
                    }
                }
            }
        }
    }
}

fn check_version(root: &Map<String, Value>) -> Result<(), ModelError> {
    if let Some(v) = root.get("swagger") {
        return Err(ModelError::UnsupportedVersion(format!("swagger {}", scalar_text(v))));
    }
    if let Some(v) = root.get("openapi") {
        let text = scalar_text(v);
        if !text.starts_with("3.") && text != "3" {
            return Err(ModelError::UnsupportedVersion(format!("openapi {text}")));
        }
    }
    Ok(())
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn str_field(map: &Map<String, Value>, key: &str) -> Option<String> {
    map.get(key).and_then(Value::as_str).map(str::to_string)
}

fn ref_of(v: &Value) -> Option<&str> {
    v.as_object()?.get("$ref")?.as_str()
}

struct Parser<'a> {
    root: &'a Value,
}

impl Parser<'_> {
    /// Resolves an ESS reference, failing fast when it dangles.
    fn check_ref(&self, reference: &str, base: Option<&[String]>) -> Result<ResolvedRef<'_>, ModelError> {
        let segments = reference_segments(reference, base)?;
        if let Some(first) = segments.first() {
            if (first == "components" || first == "paths") && self.root.get(first).is_none() {
                return Err(ModelError::Structure(format!(
                    "reference `{reference}` needs a `{first}` section, but the document has none"
                )));
            }
        }
        resolve(self.root, reference, base)
    }

    /// A claim type descriptor: a bare string, `{type: ..}`, or a `$ref` to either.
    fn claim_descriptor(&self, v: &Value, base: Option<&[String]>) -> Result<Option<String>, ModelError> {
        let node = match ref_of(v) {
            Some(r) => self.check_ref(r, base)?.node,
            None => v,
        };
        Ok(match node {
            Value::String(s) => Some(s.clone()),
            Value::Object(m) => str_field(m, "type"),
            _ => None,
        })
    }

    fn claims(&self, v: &Value, base: Option<&[String]>) -> Result<ScopeClaims, ModelError> {
        let mut claims = ScopeClaims::default();
        if let Some(m) = v.as_object() {
            if let Some((_, g)) = find_key(m, "groups") {
                claims.groups = self.claim_descriptor(g, base)?;
            }
            if let Some((_, u)) = find_key(m, "user_id") {
                claims.user_id = self.claim_descriptor(u, base)?;
            }
        }
        Ok(claims)
    }

    fn scopes(&self, v: Option<&Value>, base: Option<&[String]>) -> Result<ScopeSet, ModelError> {
        let mut set = ScopeSet::default();
        let Some(map) = v.and_then(Value::as_object) else {
            return Ok(set);
        };
        // root-level shape: shared claims + `methods`; method-level shape: C/R/U/D keys
        let shared = self.claims(v.unwrap(), base)?;
        for (key, value) in map {
            if key_is(key, "groups") || key_is(key, "user_id") {
                continue;
            }
            if key_is(key, "methods") {
                let Some(methods) = value.as_object() else {
                    set.invalid_keys.push(key.clone());
                    continue;
                };
                for verb in methods.keys() {
                    match HttpMethod::parse(verb).and_then(HttpMethod::action) {
                        Some(action) => {
                            set.actions.insert(action, shared.clone());
                        }
                        None => set.invalid_keys.push(format!("methods/{verb}")),
                    }
                }
                continue;
            }
            match CrudAction::from_scope_key(key) {
                Some(action) => {
                    let mut claims = self.claims(value, base)?;
                    if claims.groups.is_none() {
                        claims.groups = shared.groups.clone();
                    }
                    if claims.user_id.is_none() {
                        claims.user_id = shared.user_id.clone();
                    }
                    set.actions.insert(action, claims);
                }
                None => set.invalid_keys.push(key.clone()),
            }
        }
        Ok(set)
    }

    fn binding(
        &self,
        node: &Value,
        pointer: String,
        placement: Placement,
        owner: BindingOwner,
    ) -> Result<ObjectAuthBinding, ModelError> {
        let map = node.as_object().ok_or_else(|| {
            ModelError::Structure(format!("object-auth binding at {pointer} must be a mapping"))
        })?;
        let base = match &owner {
            BindingOwner::Operation { path, .. } => Some(vec!["paths".to_string(), path.clone()]),
            BindingOwner::Schema(_) => None,
        };
        let base = base.as_deref();

        let object_id_ref = find_key(map, "object").and_then(|(_, o)| {
            ref_of(o)
                .or_else(|| o.as_object().and_then(|m| find_key(m, "schema")).and_then(|(_, s)| ref_of(s)))
                .map(str::to_string)
        });
        if let Some(r) = &object_id_ref {
            self.check_ref(r, base)?;
        }

        let scheme = if let Some((_, s)) = find_key(map, "schema").or_else(|| find_key(map, "scheme")) {
            match ref_of(s) {
                Some(r) => {
                    self.check_ref(r, base)?;
                    SchemeBinding::Ref(r.to_string())
                }
                None => SchemeBinding::Missing,
            }
        } else if let Some((_, t)) = find_key(map, "token") {
            let t = t.as_object().ok_or_else(|| {
                ModelError::Structure(format!("`token` at {pointer} must be a mapping"))
            })?;
            SchemeBinding::Inline(InlineToken {
                token_type: str_field(t, "type"),
                name: str_field(t, "name"),
                location: str_field(t, "in").as_deref().and_then(TokenLocation::parse),
            })
        } else {
            SchemeBinding::Missing
        };

        let scopes = self.scopes(find_key(map, "scopes").map(|(_, v)| v), base)?;
        Ok(ObjectAuthBinding {
            pointer,
            placement,
            owner,
            object_id_ref,
            scheme,
            scopes,
        })
    }
}

fn parse_scheme(name: &str, node: &Map<String, Value>) -> SecurityScheme {
    let x_groups = find_key(node, X_GROUPS).map(|(_, v)| scalar_text(v));
    let x_user_id = find_key(node, X_USER_ID).map(|(_, v)| scalar_text(v));
    let declared = str_field(node, "type").unwrap_or_default();
    let ess_named = name.to_ascii_lowercase().starts_with(&OBJECT_AUTH_SCHEME.to_ascii_lowercase());
    let kind = if ess_named
        || x_groups.is_some()
        || x_user_id.is_some()
        || declared.eq_ignore_ascii_case("objectAuthScheme")
    {
        SchemeKind::ObjectAuthScheme
    } else if declared == "apiKey" {
        SchemeKind::ApiKey
    } else {
        SchemeKind::Other(declared)
    };
    SecurityScheme {
        name: name.to_string(),
        kind,
        location: str_field(node, "in").as_deref().and_then(TokenLocation::parse),
        param_name: str_field(node, "name").unwrap_or_default(),
        x_groups,
        x_user_id,
    }
}

fn parse_schema(name: &str, node: &Map<String, Value>) -> ObjectSchema {
    let properties = node
        .get("properties")
        .and_then(Value::as_object)
        .map(|props| {
            props
                .iter()
                .map(|(k, v)| {
                    let p = v.as_object();
                    (
                        k.clone(),
                        PropertySchema {
                            ty: p.and_then(|p| str_field(p, "type")),
                            format: p.and_then(|p| str_field(p, "format")),
                        },
                    )
                })
                .collect()
        })
        .unwrap_or_default();
    ObjectSchema {
        name: name.to_string(),
        ty: str_field(node, "type"),
        properties,
    }
}

fn parse_value(raw: Value) -> Result<EssDocument, ModelError> {
    let root = raw
        .as_object()
        .ok_or_else(|| ModelError::Structure("document root must be a mapping".into()))?;
    check_version(root)?;
    let parser = Parser { root: &raw };

    let components = match root.get("components") {
        None | Some(Value::Null) => None,
        Some(Value::Object(m)) => Some(m),
        Some(_) => return Err(ModelError::Structure("`components` must be a mapping".into())),
    };

    let mut security_schemes = IndexMap::new();
    let mut schemas = IndexMap::new();
    let mut bindings = Vec::new();

    if let Some(components) = components {
        if let Some(Value::Object(schemes)) = components.get("securitySchemes") {
            for (name, node) in schemes {
                if let Some(node) = node.as_object() {
                    security_schemes.insert(name.clone(), parse_scheme(name, node));
                }
            }
        }
        if let Some(Value::Object(defs)) = components.get("schemas") {
            for (name, node) in defs {
                let Some(node) = node.as_object() else { continue };
                schemas.insert(name.clone(), parse_schema(name, node));
                if let Some((key, binding)) = find_key(node, ROOT_BINDING_KEY) {
                    let pointer = pointer_from_segments(&["components", "schemas", name, key]);
                    bindings.push(parser.binding(
                        binding,
                        pointer,
                        Placement::RootLevel,
                        BindingOwner::Schema(name.clone()),
                    )?);
                }
            }
        }
    }

    let mut paths = IndexMap::new();
    match root.get("paths") {
        None | Some(Value::Null) => {}
        Some(Value::Object(items)) => {
            for (template, node) in items {
                if !template.starts_with('/') {
                    return Err(ModelError::Structure(format!(
                        "path template `{template}` must begin with `/`"
                    )));
                }
                let mut item = PathItem::default();
                let Some(node) = node.as_object() else {
                    paths.insert(template.clone(), item);
                    continue;
                };
                for (key, op) in node {
                    if let Some(method) = HttpMethod::parse(key) {
                        item.methods.insert(method);
                        if let Some((bkey, binding)) = op.as_object().and_then(|o| find_key(o, METHOD_BINDING_KEY)) {
                            let pointer = pointer_from_segments(&["paths", template, key, bkey]);
                            bindings.push(parser.binding(
                                binding,
                                pointer,
                                Placement::MethodLevel,
                                BindingOwner::Operation {
                                    path: template.clone(),
                                    method,
                                },
                            )?);
                        }
                    }
                }
                if let Some((_, objects)) = find_key(node, PATH_OBJECTS_KEY) {
                    let refs: Vec<&str> = match objects {
                        Value::Array(list) => list.iter().map(ref_of).collect::<Option<_>>(),
                        other => ref_of(other).map(|r| vec![r]),
                    }
                    .ok_or_else(|| {
                        ModelError::Structure(format!(
                            "`x-objects` under {template} must be a `$ref` or a list of them"
                        ))
                    })?;
                    for r in &refs {
                        parser.check_ref(r, None)?;
                    }
                    let mut refs = refs.into_iter().map(str::to_string);
                    item.x_objects_ref = refs.next();
                    item.extra_object_refs = refs.collect();
                }
                paths.insert(template.clone(), item);
            }
        }
        Some(_) => return Err(ModelError::Structure("`paths` must be a mapping".into())),
    }

    Ok(EssDocument {
        paths,
        security_schemes,
        schemas,
        bindings,
        raw,
    })
}
