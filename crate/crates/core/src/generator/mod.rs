//! Spec-to-stub and stub-to-spec generation.
//!
//! A stub directory looks like this:
//!
//! ```text
//! manifest.json
//! handlers/<slug>.stub
//! privilege_provider/provider.descriptor   (only when some path is object-bound)
//! ```
//!
//! Every handler of an object-bound path carries a [`PrivilegeProviderMarker`]
//! on the line above it. The reverse direction reads the manifest when present
//! and checks it against the markers, otherwise it rebuilds everything from the
//! markers alone.

mod marker;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{
    EssDocument, ModelError, SchemeBinding, TokenLocation, OBJECT_AUTH_SCHEME,
};
use crate::validate::{has_errors, validate, Finding};
use crate::HttpMethod;

pub use marker::{MarkerChecks, PrivilegeProviderMarker, StubTokenLocation};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HANDLERS_DIR: &str = "handlers";
pub const PROVIDER_DIR: &str = "privilege_provider";
pub const PROVIDER_FILE: &str = "provider.descriptor";
const PROVIDER_MODULE: &str = "privilege_provider";

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("document has {} error finding(s)", .0.iter().filter(|f| f.severity == crate::validate::Severity::Error).count())]
    ValidationFailed(Vec<Finding>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no stub found in {0}")]
    NoStubFound(PathBuf),
    #[error("{file}:{line}: {message}")]
    MarkerSyntaxError {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("manifest and handlers disagree: {0}")]
    ManifestMismatch(String),
    #[error("manifest is not valid: {0}")]
    ManifestFormat(String),
    #[error("path {path}: token location `{location}` is not supported by the privilege provider")]
    UnsupportedTokenLocation { path: String, location: String },
    #[error("path {0}: object binding does not resolve to a usable scheme")]
    UnresolvedBinding(String),
    #[error("no privilege provider offers token_in={token_in}, groups={groups}, user_id={user_id}")]
    NoMatchingProvider {
        token_in: &'static str,
        groups: bool,
        user_id: bool,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GeneratorError + '_ {
    move |source| GeneratorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectAuthStub {
    pub scheme_name: String,
    pub token_location: StubTokenLocation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups_claim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id_claim: Option<String>,
    pub object_id_property: String,
}

impl ObjectAuthStub {
    pub fn checks(&self) -> MarkerChecks {
        MarkerChecks {
            groups: self.groups_claim.is_some(),
            user_id: self.user_id_claim.is_some(),
        }
    }

    fn marker(&self, path: &str) -> PrivilegeProviderMarker {
        PrivilegeProviderMarker {
            path: path.to_string(),
            token_location: self.token_location,
            checks: self.checks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteStub {
    pub path: String,
    pub methods: BTreeSet<HttpMethod>,
    #[serde(default)]
    pub object_auth: Option<ObjectAuthStub>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubManifest {
    pub routes: Vec<RouteStub>,
    #[serde(default)]
    pub module_includes: Vec<String>,
}

/// Capabilities of the privilege provider modules that can be included.
pub const AVAILABLE_PROVIDERS: &[(StubTokenLocation, MarkerChecks)] = &[
    (StubTokenLocation::Header, MarkerChecks { groups: true, user_id: true }),
    (StubTokenLocation::Header, MarkerChecks { groups: true, user_id: false }),
    (StubTokenLocation::Header, MarkerChecks { groups: false, user_id: true }),
    (StubTokenLocation::Body, MarkerChecks { groups: true, user_id: true }),
    (StubTokenLocation::Body, MarkerChecks { groups: true, user_id: false }),
    (StubTokenLocation::Body, MarkerChecks { groups: false, user_id: true }),
];

fn provider_for(loc: StubTokenLocation, checks: MarkerChecks) -> Result<(), GeneratorError> {
    if AVAILABLE_PROVIDERS.contains(&(loc, checks)) {
        Ok(())
    } else {
        Err(GeneratorError::NoMatchingProvider {
            token_in: loc.as_str(),
            groups: checks.groups,
            user_id: checks.user_id,
        })
    }
}

fn stub_location(path: &str, loc: Option<TokenLocation>) -> Result<StubTokenLocation, GeneratorError> {
    match loc {
        Some(TokenLocation::Header) => Ok(StubTokenLocation::Header),
        Some(TokenLocation::Body) => Ok(StubTokenLocation::Body),
        other => Err(GeneratorError::UnsupportedTokenLocation {
            path: path.to_string(),
            location: other.map_or("<missing>", TokenLocation::as_str).to_string(),
        }),
    }
}

fn route_auth(doc: &EssDocument, path: &str) -> Result<Option<ObjectAuthStub>, GeneratorError> {
    let bindings = doc.bindings_for_path(path);
    let Some(binding) = bindings.first() else {
        return Ok(None);
    };
    let unresolved = || GeneratorError::UnresolvedBinding(path.to_string());
    let (scheme_name, location, groups_claim, user_id_claim) = match &binding.scheme {
        SchemeBinding::Ref(r) => {
            let target = doc.resolve_in_binding(binding, r)?;
            let scheme = doc.scheme_at(&target.segments).ok_or_else(unresolved)?;
            (
                scheme.name.clone(),
                scheme.location,
                scheme.x_groups.clone(),
                scheme.x_user_id.clone(),
            )
        }
        SchemeBinding::Inline(token) => {
            let claims = binding.scopes.actions.values();
            let groups = claims.clone().find_map(|c| c.groups.clone());
            let user_id = claims.clone().find_map(|c| c.user_id.clone());
            (OBJECT_AUTH_SCHEME.to_string(), token.location, groups, user_id)
        }
        SchemeBinding::Missing => return Err(unresolved()),
    };
    let object_ref = binding.object_id_ref.as_deref().ok_or_else(unresolved)?;
    let object_id_property = doc
        .resolve_in_binding(binding, object_ref)?
        .segments
        .last()
        .cloned()
        .ok_or_else(unresolved)?;
    Ok(Some(ObjectAuthStub {
        scheme_name,
        token_location: stub_location(path, location)?,
        groups_claim,
        user_id_claim,
        object_id_property,
    }))
}

/// The manifest a document generates, without touching the filesystem.
pub fn manifest_for(doc: &EssDocument) -> Result<StubManifest, GeneratorError> {
    let findings = validate(doc);
    if has_errors(&findings) {
        return Err(GeneratorError::ValidationFailed(findings));
    }
    let mut routes = Vec::new();
    for (path, item) in &doc.paths {
        let object_auth = route_auth(doc, path)?;
        if let Some(auth) = &object_auth {
            provider_for(auth.token_location, auth.checks())?;
        }
        routes.push(RouteStub {
            path: path.clone(),
            methods: item.methods.clone(),
            object_auth,
        });
    }
    let module_includes = if routes.iter().any(|r| r.object_auth.is_some()) {
        vec![PROVIDER_MODULE.to_string()]
    } else {
        Vec::new()
    };
    Ok(StubManifest {
        routes,
        module_includes,
    })
}

fn slug(path: &str) -> String {
    let s: String = path
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let s = s.trim_matches('_');
    let mut out = String::new();
    for part in s.split('_').filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push('_');
        }
        out.push_str(part);
    }
    if out.is_empty() {
        "root".to_string()
    } else {
        out
    }
}

fn handler_text(route: &RouteStub) -> String {
    let mut text = format!("# handlers for {}\n", route.path);
    for method in &route.methods {
        text.push('\n');
        if let Some(auth) = &route.object_auth {
            text.push_str(&auth.marker(&route.path).to_string());
            text.push('\n');
        }
        text.push_str(&format!("handler {} {}:\n    respond 501\n", method.as_str(), route.path));
    }
    text
}

fn descriptor_text(manifest: &StubManifest) -> String {
    let caps: BTreeSet<(StubTokenLocation, MarkerChecks)> = manifest
        .routes
        .iter()
        .filter_map(|r| r.object_auth.as_ref())
        .map(|a| (a.token_location, a.checks()))
        .collect();
    let mut text = format!("module {PROVIDER_MODULE}\n");
    for (loc, checks) in caps {
        text.push_str(&format!(
            "provides token_in={} groups={} user_id={}\n",
            loc.as_str(),
            checks.groups,
            checks.user_id
        ));
    }
    text
}

fn write(path: &Path, text: &str) -> Result<(), GeneratorError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes the stub for `manifest` into `out_dir`, replacing any stub files
/// left there by an earlier run.
pub fn write_stub(manifest: &StubManifest, out_dir: &Path) -> Result<(), GeneratorError> {
    let handlers = out_dir.join(HANDLERS_DIR);
    fs::create_dir_all(&handlers).map_err(io_err(&handlers))?;
    for entry in fs::read_dir(&handlers).map_err(io_err(&handlers))? {
        let entry = entry.map_err(io_err(&handlers))?;
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "stub") {
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    let mut used = BTreeSet::new();
    for route in &manifest.routes {
        let base = slug(&route.path);
        let mut name = base.clone();
        let mut n = 2;
        while !used.insert(name.clone()) {
            name = format!("{base}_{n}");
            n += 1;
        }
        write(&handlers.join(format!("{name}.stub")), &handler_text(route))?;
    }

    let provider_dir = out_dir.join(PROVIDER_DIR);
    let descriptor = provider_dir.join(PROVIDER_FILE);
    if manifest.module_includes.iter().any(|m| m == PROVIDER_MODULE) {
        fs::create_dir_all(&provider_dir).map_err(io_err(&provider_dir))?;
        write(&descriptor, &descriptor_text(manifest))?;
    } else if descriptor.exists() {
        fs::remove_file(&descriptor).map_err(io_err(&descriptor))?;
    }

    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    write(&manifest_path, &json)
}

/// Generates a server stub for `doc` under `out_dir`.
pub fn spec_to_stub(doc: &EssDocument, out_dir: &Path) -> Result<StubManifest, GeneratorError> {
    let manifest = manifest_for(doc)?;
    write_stub(&manifest, out_dir)?;
    Ok(manifest)
}

/// A handler found while scanning a stub, with the marker above it (if any).
#[derive(Debug, Clone, PartialEq, Eq)]
struct ScannedHandler {
    method: HttpMethod,
    path: String,
    marker: Option<PrivilegeProviderMarker>,
}

fn scan_file(file: &Path) -> Result<Vec<ScannedHandler>, GeneratorError> {
    let text = fs::read_to_string(file).map_err(io_err(file))?;
    let syntax = |line: usize, message: String| GeneratorError::MarkerSyntaxError {
        file: file.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut pending: Option<(usize, PrivilegeProviderMarker)> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if let Some(m) = PrivilegeProviderMarker::parse_line(line).map_err(|e| syntax(lineno, e))? {
            if pending.is_some() {
                return Err(syntax(lineno, "two markers above one handler".into()));
            }
            pending = Some((lineno, m));
            continue;
        }
        let Some(rest) = line.strip_prefix("handler ") else {
            continue;
        };
        let rest = rest.trim_end().strip_suffix(':').unwrap_or(rest.trim_end());
        let (verb, path) = rest
            .split_once(' ')
            .ok_or_else(|| syntax(lineno, format!("malformed handler line `{line}`")))?;
        let method = HttpMethod::parse(verb)
            .ok_or_else(|| syntax(lineno, format!("unknown method `{verb}`")))?;
        let marker = pending.take().map(|(_, m)| m);
        if let Some(m) = &marker {
            if m.path != path {
                return Err(syntax(
                    lineno - 1,
                    format!("marker names path {} but the handler serves {path}", m.path),
                ));
            }
        }
        out.push(ScannedHandler {
            method,
            path: path.to_string(),
            marker,
        });
    }
    if let Some((lineno, _)) = pending {
        return Err(syntax(lineno, "marker is not followed by a handler".into()));
    }
    Ok(out)
}

fn scan_handlers(dir: &Path) -> Result<Option<Vec<ScannedHandler>>, GeneratorError> {
    let handlers = dir.join(HANDLERS_DIR);
    if !handlers.is_dir() {
        return Ok(None);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&handlers)
        .map_err(io_err(&handlers))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "stub"))
        .collect();
    if files.is_empty() {
        return Ok(None);
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(scan_file(&f)?);
    }
    Ok(Some(out))
}

fn read_descriptor(dir: &Path) -> Result<Option<BTreeSet<(StubTokenLocation, MarkerChecks)>>, GeneratorError> {
    let path = dir.join(PROVIDER_DIR).join(PROVIDER_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut caps = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("provides ") else {
            continue;
        };
        let bad = || GeneratorError::MarkerSyntaxError {
            file: path.clone(),
            line: i + 1,
            message: format!("malformed capability `{line}`"),
        };
        let fields: BTreeMap<&str, &str> = rest
            .split_whitespace()
            .map(|kv| kv.split_once('=').ok_or_else(bad))
            .collect::<Result<_, _>>()?;
        let flag = |k: &str| match fields.get(k) {
            Some(&"true") => Ok(true),
            Some(&"false") => Ok(false),
            _ => Err(bad()),
        };
        let loc = match fields.get("token_in") {
            Some(&"header") => StubTokenLocation::Header,
            Some(&"body") => StubTokenLocation::Body,
            _ => return Err(bad()),
        };
        caps.insert((
            loc,
            MarkerChecks {
                groups: flag("groups")?,
                user_id: flag("user_id")?,
            },
        ));
    }
    Ok(Some(caps))
}

fn mismatch(msg: String) -> GeneratorError {
    GeneratorError::ManifestMismatch(msg)
}

fn check_agreement(manifest: &StubManifest, handlers: &[ScannedHandler]) -> Result<(), GeneratorError> {
    let mut by_path: BTreeMap<&str, Vec<&ScannedHandler>> = BTreeMap::new();
    for h in handlers {
        by_path.entry(h.path.as_str()).or_default().push(h);
    }
    for route in &manifest.routes {
        let found = by_path.remove(route.path.as_str()).unwrap_or_default();
        let methods: BTreeSet<HttpMethod> = found.iter().map(|h| h.method).collect();
        if methods != route.methods {
            return Err(mismatch(format!("handlers for {} do not match the manifest methods", route.path)));
        }
        for h in found {
            let expected = route.object_auth.as_ref().map(|a| a.marker(&route.path));
            if h.marker != expected {
                let what = match (&h.marker, &expected) {
                    (None, Some(_)) => "is missing its privilege marker",
                    (Some(_), None) => "has a privilege marker on an unbound path",
                    _ => "has a privilege marker that differs from the manifest",
                };
                return Err(mismatch(format!("handler {} {} {what}", h.method.as_str(), h.path)));
            }
        }
    }
    if let Some(path) = by_path.keys().next() {
        return Err(mismatch(format!("handler for {path} is not in the manifest")));
    }
    Ok(())
}

fn manifest_from_handlers(handlers: &[ScannedHandler]) -> Result<StubManifest, GeneratorError> {
    let mut routes: Vec<RouteStub> = Vec::new();
    let mut markers: Vec<Option<PrivilegeProviderMarker>> = Vec::new();
    for h in handlers {
        let idx = match routes.iter().position(|r| r.path == h.path) {
            Some(i) => i,
            None => {
                routes.push(RouteStub {
                    path: h.path.clone(),
                    methods: BTreeSet::new(),
                    object_auth: None,
                });
                markers.push(h.marker.clone());
                routes.len() - 1
            }
        };
        if markers[idx] != h.marker {
            return Err(mismatch(format!("handlers of {} carry different privilege markers", h.path)));
        }
        routes[idx].methods.insert(h.method);
    }
    let mut scheme_names: Vec<(StubTokenLocation, MarkerChecks)> = Vec::new();
    for (route, marker) in routes.iter_mut().zip(markers) {
        let Some(m) = marker else { continue };
        let key = (m.token_location, m.checks);
        let n = match scheme_names.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                scheme_names.push(key);
                scheme_names.len() - 1
            }
        };
        let scheme_name = if n == 0 {
            OBJECT_AUTH_SCHEME.to_string()
        } else {
            format!("{OBJECT_AUTH_SCHEME}{}", n + 1)
        };
        route.object_auth = Some(ObjectAuthStub {
            scheme_name,
            token_location: m.token_location,
            groups_claim: m.checks.groups.then(|| "string".to_string()),
            user_id_claim: m.checks.user_id.then(|| "string".to_string()),
            object_id_property: "id".to_string(),
        });
    }
    let module_includes = if routes.iter().any(|r| r.object_auth.is_some()) {
        vec![PROVIDER_MODULE.to_string()]
    } else {
        Vec::new()
    };
    Ok(StubManifest {
        routes,
        module_includes,
    })
}

/// Reads the stub under `dir` back into a manifest.
pub fn read_stub(dir: &Path) -> Result<StubManifest, GeneratorError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let handlers = scan_handlers(dir)?;
    let manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: StubManifest =
            serde_json::from_str(&text).map_err(|e| GeneratorError::ManifestFormat(e.to_string()))?;
        if let Some(handlers) = &handlers {
            check_agreement(&manifest, handlers)?;
        }
        manifest
    } else {
        match &handlers {
            Some(h) => manifest_from_handlers(h)?,
            None => return Err(GeneratorError::NoStubFound(dir.to_path_buf())),
        }
    };
    if let Some(caps) = read_descriptor(dir)? {
        for auth in manifest.routes.iter().filter_map(|r| r.object_auth.as_ref()) {
            if !caps.contains(&(auth.token_location, auth.checks())) {
                return Err(mismatch(format!(
                    "provider descriptor lacks token_in={} groups={} user_id={}",
                    auth.token_location.as_str(),
                    auth.checks().groups,
                    auth.checks().user_id
                )));
            }
        }
    }
    Ok(manifest)
}

fn schema_name(path: &str) -> String {
    let mut name = String::new();
    for part in path.split(|c: char| !c.is_ascii_alphanumeric()) {
        let mut chars = part.chars();
        if let Some(first) = chars.next() {
            name.push(first.to_ascii_uppercase());
            name.extend(chars);
        }
    }
    if name.is_empty() {
        "Root".to_string()
    } else {
        name
    }
}

fn escape_pointer(segment: &str) -> String {
    segment.replace('~', "~0").replace('/', "~1")
}

/// Token location plus the groups and user id claims of one generated scheme.
type SchemeConfig = (StubTokenLocation, Option<String>, Option<String>);

/// Builds a root-level ESS document from a manifest.
pub fn manifest_to_document(manifest: &StubManifest) -> Result<EssDocument, GeneratorError> {
    let mut schemes: Vec<(String, SchemeConfig)> = Vec::new();
    let mut schemas = Map::new();
    let mut used_schema_names = BTreeSet::new();
    let mut paths = Map::new();

    for route in &manifest.routes {
        let mut item = Map::new();
        for method in &route.methods {
            item.insert(
                method.as_str().to_string(),
                json!({"responses": {"200": {"description": "OK"}}}),
            );
        }
        if let Some(auth) = &route.object_auth {
            let config = (auth.token_location, auth.groups_claim.clone(), auth.user_id_claim.clone());
            let scheme = match schemes.iter().find(|(_, c)| *c == config) {
                Some((name, _)) => name.clone(),
                None => {
                    let mut name = auth.scheme_name.clone();
                    let mut n = 2;
                    while schemes.iter().any(|(existing, _)| *existing == name) {
                        name = format!("{}{n}", auth.scheme_name);
                        n += 1;
                    }
                    schemes.push((name.clone(), config));
                    name
                }
            };
            let base = schema_name(&route.path);
            let mut name = base.clone();
            let mut n = 2;
            while !used_schema_names.insert(name.clone()) {
                name = format!("{base}{n}");
                n += 1;
            }
            let scheme_ptr = format!("#/components/securitySchemes/{}", escape_pointer(&scheme));
            let mut scopes = Map::new();
            if auth.groups_claim.is_some() {
                scopes.insert("groups".into(), json!({"$ref": format!("{scheme_ptr}/x-groups")}));
            }
            if auth.user_id_claim.is_some() {
                scopes.insert("user_id".into(), json!({"$ref": format!("{scheme_ptr}/x-user_id")}));
            }
            let mut methods = Map::new();
            for method in &route.methods {
                if let Some(action) = method.action() {
                    methods.insert(
                        action.http_method().as_str().to_string(),
                        json!({"description": format!("{} an object", action.as_str())}),
                    );
                }
            }
            scopes.insert("methods".into(), Value::Object(methods));
            let object_ptr = format!(
                "#/components/schemas/{}/properties/{}",
                escape_pointer(&name),
                escape_pointer(&auth.object_id_property)
            );
            schemas.insert(
                name.clone(),
                json!({
                    "type": "object",
                    "properties": {auth.object_id_property.clone(): {"type": "integer", "format": "int64"}},
                    "x-objectAuth": {
                        "object": {"$ref": object_ptr},
                        "schema": {"$ref": scheme_ptr},
                        "scopes": scopes,
                    }
                }),
            );
            item.insert(
                "x-objects".into(),
                json!({"$ref": format!("#/components/schemas/{}/x-objectAuth", escape_pointer(&name))}),
            );
        }
        paths.insert(route.path.clone(), Value::Object(item));
    }

    let mut raw = json!({
        "openapi": "3.0.3",
        "info": {"title": "Generated from server stub", "version": "0.0.0"},
        "paths": paths,
    });
    if !schemes.is_empty() {
        let mut security = Map::new();
        for (name, (loc, groups, user_id)) in schemes {
            let mut s = Map::new();
            s.insert("type".into(), json!("apiKey"));
            s.insert("name".into(), json!("api_key"));
            s.insert("in".into(), json!(loc.as_str()));
            if let Some(g) = groups {
                s.insert("x-groups".into(), json!(g));
            }
            if let Some(u) = user_id {
                s.insert("x-user_id".into(), json!(u));
            }
            security.insert(name, Value::Object(s));
        }
        raw["components"] = json!({"schemas": schemas, "securitySchemes": security});
    }
    Ok(EssDocument::from_value(raw)?)
}

/// Regenerates an ESS document from the stub under `dir`.
pub fn stub_to_spec(dir: &Path) -> Result<EssDocument, GeneratorError> {
    let manifest = read_stub(dir)?;
    let doc = manifest_to_document(&manifest)?;
    let findings = validate(&doc);
    if has_errors(&findings) {
        return Err(GeneratorError::ValidationFailed(findings));
    }
    Ok(doc)
}

/// The per-path facts a round trip must preserve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteFacts {
    pub bound: bool,
    pub token_location: Option<StubTokenLocation>,
    pub groups: bool,
    pub user_id: bool,
}

pub fn route_facts(doc: &EssDocument) -> Result<BTreeMap<String, RouteFacts>, GeneratorError> {
    let mut out = BTreeMap::new();
    for path in doc.paths.keys() {
        let auth = route_auth(doc, path)?;
        out.insert(
            path.clone(),
            RouteFacts {
                bound: auth.is_some(),
                token_location: auth.as_ref().map(|a| a.token_location),
                groups: auth.as_ref().is_some_and(|a| a.groups_claim.is_some()),
                user_id: auth.as_ref().is_some_and(|a| a.user_id_claim.is_some()),
            },
        );
    }
    Ok(out)
}

/// Generates a stub for `doc` in a scratch directory, applies `tamper` to it,
/// regenerates a document and compares route facts.
pub fn roundtrip_check_with(doc: &EssDocument, tamper: impl FnOnce(&Path)) -> bool {
    let Ok(dir) = tempfile::tempdir() else {
        return false;
    };
    let run = || -> Result<bool, GeneratorError> {
        spec_to_stub(doc, dir.path())?;
        tamper(dir.path());
        let back = stub_to_spec(dir.path())?;
        Ok(route_facts(doc)? == route_facts(&back)?)
    };
    run().unwrap_or(false)
}

/// `spec -> stub -> spec` preserves the path set, which paths are bound, and
/// each bound path's token location and claim checks.
pub fn roundtrip_check(doc: &EssDocument) -> bool {
    roundtrip_check_with(doc, |_| {})
}
