//! ESS conformance checks and BOLA-risk lints.

use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::model::{
    pointer_from_segments, BindingOwner, EssDocument, ModelError, ObjectAuthBinding, Placement,
    SchemeBinding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// The fixed catalog of finding codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingCode {
    SchemeKind,
    SchemeIncomplete,
    ObjectRef,
    ScopeAction,
    DanglingRef,
    BolaUnbound,
    EssDuplicate,
}

impl FindingCode {
    pub const ALL: [FindingCode; 7] = [
        FindingCode::SchemeKind,
        FindingCode::SchemeIncomplete,
        FindingCode::ObjectRef,
        FindingCode::ScopeAction,
        FindingCode::DanglingRef,
        FindingCode::BolaUnbound,
        FindingCode::EssDuplicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FindingCode::SchemeKind => "E-SCHEME-KIND",
            FindingCode::SchemeIncomplete => "E-SCHEME-INCOMPLETE",
            FindingCode::ObjectRef => "E-OBJECT-REF",
            FindingCode::ScopeAction => "E-SCOPE-ACTION",
            FindingCode::DanglingRef => "E-DANGLING-REF",
            FindingCode::BolaUnbound => "W-BOLA-UNBOUND",
            FindingCode::EssDuplicate => "W-ESS-DUPLICATE",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            FindingCode::BolaUnbound | FindingCode::EssDuplicate => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for FindingCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub path_context: String,
    pub message: String,
}

impl Finding {
    pub fn new(code: FindingCode, path_context: impl Into<String>, message: impl Into<String>) -> Finding {
        Finding {
            severity: code.severity(),
            code,
            path_context: path_context.into(),
            message: message.into(),
        }
    }

    /// The finding a parse-time reference failure corresponds to, if any.
    pub fn from_model_error(err: &ModelError) -> Option<Finding> {
        match err {
            ModelError::DanglingRef(r) | ModelError::CyclicRef(r) | ModelError::RemoteRef(r) => {
                Some(Finding::new(FindingCode::DanglingRef, "#/", err.to_string()).with_context_ref(r))
            }
            _ => None,
        }
    }

    fn with_context_ref(mut self, reference: &str) -> Finding {
        self.message = format!("{} (reference `{reference}`)", self.message);
        self
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}: {}", self.severity, self.code, self.path_context, self.message)
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

/// Renders findings as a JSON array.
pub fn findings_to_json(findings: &[Finding]) -> String {
    serde_json::to_string_pretty(findings).expect("findings serialize")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignClass {
    RootLevel,
    MethodLevel,
    Mixed,
    None,
}

impl fmt::Display for DesignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignClass::RootLevel => "root_level",
            DesignClass::MethodLevel => "method_level",
            DesignClass::Mixed => "mixed",
            DesignClass::None => "none",
        })
    }
}

pub fn classify_design(doc: &EssDocument) -> DesignClass {
    let root = doc.bindings.iter().any(|b| b.placement == Placement::RootLevel);
    let method = doc.bindings.iter().any(|b| b.placement == Placement::MethodLevel);
    match (root, method) {
        (true, true) => DesignClass::Mixed,
        (true, false) => DesignClass::RootLevel,
        (false, true) => DesignClass::MethodLevel,
        (false, false) => DesignClass::None,
    }
}

const PRIMITIVE_TYPES: [&str; 4] = ["integer", "number", "string", "boolean"];

/// Checks ESS usage. Findings are sorted by (location, code).
pub fn validate(doc: &EssDocument) -> Vec<Finding> {
    let mut findings = Vec::new();
    check_schemes(doc, &mut findings);
    for binding in &doc.bindings {
        check_binding(doc, binding, &mut findings);
    }
    check_paths(doc, &mut findings);
    check_duplicates(doc, &mut findings);
    findings.sort_by(|a, b| (&a.path_context, a.code).cmp(&(&b.path_context, b.code)));
    findings
}

fn check_schemes(doc: &EssDocument, out: &mut Vec<Finding>) {
    for scheme in doc.object_auth_schemes() {
        let missing: Vec<&str> = [
            ("x-groups", scheme.x_groups.is_none()),
            ("x-user_id", scheme.x_user_id.is_none()),
        ]
        .into_iter()
        .filter_map(|(k, absent)| absent.then_some(k))
        .collect();
        if !missing.is_empty() {
            out.push(Finding::new(
                FindingCode::SchemeIncomplete,
                pointer_from_segments(&["components", "securitySchemes", scheme.name.as_str()]),
                format!("object-auth scheme `{}` does not declare {}", scheme.name, missing.join(" or ")),
            ));
        }
    }
}

fn check_binding(doc: &EssDocument, binding: &ObjectAuthBinding, out: &mut Vec<Finding>) {
    let at = binding.pointer.as_str();

    let scheme = match &binding.scheme {
        SchemeBinding::Ref(r) => match doc.resolve_in_binding(binding, r) {
            Ok(target) => match doc.scheme_at(&target.segments) {
                Some(s) if s.is_object_auth() => Some(s),
                Some(s) => {
                    out.push(Finding::new(
                        FindingCode::SchemeKind,
                        at,
                        format!("binding refers to scheme `{}`, which is not an object-auth scheme", s.name),
                    ));
                    None
                }
                None => {
                    out.push(Finding::new(
                        FindingCode::SchemeKind,
                        at,
                        format!("`{r}` does not designate a security scheme"),
                    ));
                    None
                }
            },
            Err(e) => {
                out.push(Finding::new(FindingCode::DanglingRef, at, e.to_string()));
                None
            }
        },
        SchemeBinding::Inline(token) => {
            if token.location.is_none() {
                out.push(Finding::new(
                    FindingCode::SchemeIncomplete,
                    at,
                    "inline token does not say where it is carried (`in:`)",
                ));
            }
            None
        }
        SchemeBinding::Missing => {
            out.push(Finding::new(
                FindingCode::SchemeKind,
                at,
                "binding names no object-auth scheme and declares no token",
            ));
            None
        }
    };

    match &binding.object_id_ref {
        None => out.push(Finding::new(FindingCode::ObjectRef, at, "binding has no object identifier reference")),
        Some(r) => match doc.resolve_in_binding(binding, r) {
            Ok(target) => {
                let ty = target.node.get("type").and_then(Value::as_str);
                if !ty.is_some_and(|t| PRIMITIVE_TYPES.contains(&t)) {
                    out.push(Finding::new(
                        FindingCode::ObjectRef,
                        at,
                        format!(
                            "object identifier `{r}` must be a primitive-typed property, found {}",
                            ty.map(|t| format!("type `{t}`")).unwrap_or_else(|| "no type".into())
                        ),
                    ));
                }
            }
            Err(e) => out.push(Finding::new(FindingCode::DanglingRef, at, e.to_string())),
        },
    }

    for key in &binding.scopes.invalid_keys {
        out.push(Finding::new(
            FindingCode::ScopeAction,
            at,
            format!("scope key `{key}` is not one of create/read/update/delete (C/R/U/D or post/get/put/delete)"),
        ));
    }
    if binding.scopes.actions.is_empty() {
        out.push(Finding::new(FindingCode::ScopeAction, at, "scopes grant no action"));
    }
    if let Some(scheme) = scheme {
        for (action, claims) in &binding.scopes.actions {
            let pairs = [
                ("groups", &claims.groups, &scheme.x_groups),
                ("user_id", &claims.user_id, &scheme.x_user_id),
            ];
            for (claim, scoped, declared) in pairs {
                if let (Some(scoped), Some(declared)) = (scoped, declared) {
                    if scoped != declared {
                        out.push(Finding::new(
                            FindingCode::ScopeAction,
                            at,
                            format!(
                                "scope `{action}` declares {claim} as `{scoped}` but scheme `{}` declares `{declared}`",
                                scheme.name
                            ),
                        ));
                    }
                }
            }
        }
    }
}

fn check_paths(doc: &EssDocument, out: &mut Vec<Finding>) {
    for (template, item) in &doc.paths {
        let at = pointer_from_segments(&["paths", template.as_str()]);
        let method_bound = doc
            .bindings
            .iter()
            .any(|b| matches!(&b.owner, BindingOwner::Operation { path, .. } if path == template));

        if let Some(r) = &item.x_objects_ref {
            match doc.resolve(r) {
                Ok(target) => {
                    let ptr = target.pointer();
                    if !doc.bindings.iter().any(|b| b.pointer == ptr && b.placement == Placement::RootLevel) {
                        out.push(Finding::new(
                            FindingCode::ObjectRef,
                            &at,
                            format!("`x-objects` reference `{r}` does not point at a schema's x-objectAuth"),
                        ));
                    }
                }
                Err(e) => out.push(Finding::new(FindingCode::DanglingRef, &at, e.to_string())),
            }
            if method_bound {
                out.push(Finding::new(
                    FindingCode::ObjectRef,
                    &at,
                    "path carries both `x-objects` and method-level X-objectAuth; at most one object binding per path",
                ));
            }
        }
        for extra in &item.extra_object_refs {
            out.push(Finding::new(
                FindingCode::ObjectRef,
                &at,
                format!("additional object binding `{extra}`; at most one object binding per path"),
            ));
        }

        if item.x_objects_ref.is_none() && !method_bound {
            if let Some(schema) = referenced_object_schema(doc, template) {
                out.push(Finding::new(
                    FindingCode::BolaUnbound,
                    &at,
                    format!("path exposes object schema `{schema}` without an object-auth binding"),
                ));
            }
        }
    }
}

/// First object schema referenced anywhere under the path item's operations.
fn referenced_object_schema(doc: &EssDocument, template: &str) -> Option<String> {
    let item = doc.raw.get("paths")?.get(template)?;
    let mut stack = vec![item];
    while let Some(node) = stack.pop() {
        match node {
            Value::Object(map) => {
                if let Some(r) = map.get("$ref").and_then(Value::as_str) {
                    if let Ok(target) = doc.resolve(r) {
                        if let [c, s, name] = target.segments.as_slice() {
                            if c == "components"
                                && s == "schemas"
                                && doc.schemas.get(name).is_some_and(|s| s.is_object())
                            {
                                return Some(name.clone());
                            }
                        }
                    }
                }
                for (k, v) in map.iter().rev() {
                    if !k.to_ascii_lowercase().starts_with("x-") {
                        stack.push(v);
                    }
                }
            }
            Value::Array(items) => stack.extend(items.iter().rev()),
            _ => {}
        }
    }
    None
}

fn check_duplicates(doc: &EssDocument, out: &mut Vec<Finding>) {
    let method_level: Vec<(&ObjectAuthBinding, Option<&Value>)> = doc
        .bindings
        .iter()
        .filter(|b| b.placement == Placement::MethodLevel)
        .map(|b| (b, doc.resolve(&b.pointer).ok().map(|r| r.node)))
        .collect();
    for (i, (binding, node)) in method_level.iter().enumerate() {
        let Some(node) = node else { continue };
        if let Some((first, _)) = method_level[..i].iter().find(|(_, other)| *other == Some(*node)) {
            out.push(Finding::new(
                FindingCode::EssDuplicate,
                &binding.pointer,
                format!("X-objectAuth repeats the binding at {}; consider the root-level design", first.pointer),
            ));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_document, DocumentFormat};

    fn parse(text: &str) -> EssDocument {
        parse_document(text, DocumentFormat::Yaml).unwrap()
    }

    #[test]
    fn catalog_strings_are_exact() {
        let codes: Vec<&str> = FindingCode::ALL.iter().map(|c| c.as_str()).collect();
        assert_eq!(
            codes,
            [
                "E-SCHEME-KIND",
                "E-SCHEME-INCOMPLETE",
                "E-OBJECT-REF",
                "E-SCOPE-ACTION",
                "E-DANGLING-REF",
                "W-BOLA-UNBOUND",
                "W-ESS-DUPLICATE"
            ]
        );
    }

    #[test]
    fn no_bindings_classifies_none() {
        let doc = parse("openapi: 3.0.0\npaths: {}\n");
        assert_eq!(classify_design(&doc), DesignClass::None);
        assert!(validate(&doc).is_empty());
    }

    const BOUND: &str = r#"
openapi: 3.0.0
components:
  securitySchemes:
    api_key: {type: apiKey, in: header, name: api_key}
    X-objectAuthScheme: {type: apiKey, in: header, name: api_key, x-groups: string, x-user_id: string}
  schemas:
    Pet:
      type: object
      properties:
        id: {type: integer}
        tags: {type: array}
      x-objectAuth:
        object: {$ref: '#/components/schemas/Pet/properties/OBJ'}
        schema: {$ref: '#/components/securitySchemes/SCHEME'}
        scopes:
          methods: METHODS
paths:
  /pet:
    get: {}
    x-objects: {$ref: '#/components/schemas/Pet/x-objectAuth'}
"#;

    fn bound(obj: &str, scheme: &str, methods: &str) -> EssDocument {
        parse(
            &BOUND
                .replace("OBJ", obj)
                .replace("SCHEME", scheme)
                .replace("METHODS", methods),
        )
    }

    fn codes(doc: &EssDocument) -> Vec<&'static str> {
        validate(doc).iter().map(|f| f.code.as_str()).collect()
    }

    #[test]
    fn clean_binding() {
        let doc = bound("id", "X-objectAuthScheme", "{get: {}}");
        assert_eq!(codes(&doc), Vec::<&str>::new());
        assert_eq!(classify_design(&doc), DesignClass::RootLevel);
    }

    #[test]
    fn scheme_kind_mismatch() {
        let doc = bound("id", "api_key", "{get: {}}");
        assert_eq!(codes(&doc), ["E-SCHEME-KIND"]);
    }

    #[test]
    fn non_primitive_object_id() {
        let doc = bound("tags", "X-objectAuthScheme", "{get: {}}");
        assert_eq!(codes(&doc), ["E-OBJECT-REF"]);
    }

    #[test]
    fn invalid_and_empty_scopes() {
        let doc = bound("id", "X-objectAuthScheme", "{get: {}, patch: {}}");
        assert_eq!(codes(&doc), ["E-SCOPE-ACTION"]);
        let doc = bound("id", "X-objectAuthScheme", "{}");
        assert_eq!(codes(&doc), ["E-SCOPE-ACTION"]);
    }

    #[test]
    fn programmatic_dangling_ref() {
        let mut doc = bound("id", "X-objectAuthScheme", "{get: {}}");
        doc.bindings[0].object_id_ref = Some("#/components/schemas/Pet/properties/gone".into());
        assert_eq!(codes(&doc), ["E-DANGLING-REF"]);
    }

    #[test]
    fn model_errors_map_to_dangling_finding() {
        let f = Finding::from_model_error(&ModelError::DanglingRef("#/x".into())).unwrap();
        assert_eq!(f.code, FindingCode::DanglingRef);
        assert!(Finding::from_model_error(&ModelError::Syntax("x".into())).is_none());
    }

    #[test]
    fn multiple_object_refs_on_a_path() {
        let text = BOUND
            .replace("OBJ", "id")
            .replace("SCHEME", "X-objectAuthScheme")
            .replace("METHODS", "{get: {}}")
            .replace(
                "x-objects: {$ref: '#/components/schemas/Pet/x-objectAuth'}",
                "x-objects:\n      - {$ref: '#/components/schemas/Pet/x-objectAuth'}\n      - {$ref: '#/components/schemas/Pet/x-objectAuth'}",
            );
        let doc = parse(&text);
        assert_eq!(codes(&doc), ["E-OBJECT-REF"]);
    }

    #[test]
    fn x_objects_must_target_a_binding() {
        let text = BOUND
            .replace("OBJ", "id")
            .replace("SCHEME", "X-objectAuthScheme")
            .replace("METHODS", "{get: {}}")
            .replace("Pet/x-objectAuth'}", "Pet/properties'}");
        let doc = parse(&text);
        assert_eq!(codes(&doc), ["E-OBJECT-REF"]);
    }

    #[test]
    fn duplicate_method_level_bindings_warn() {
        let text = r#"
paths:
  /pet:
    get:
      X-objectAuth: &b
        object: {schema: {$ref: '#/components/schemas/Pet/properties/id'}}
        token: {type: JWT, in: header}
        scopes: {R: {groups: {type: string}, user_id: {type: string}}}
    put:
      X-objectAuth: *b
components:
  schemas:
    Pet: {type: object, properties: {id: {type: integer}}}
"#;
        let doc = parse(text);
        let findings = validate(&doc);
        assert_eq!(findings.len(), 1, "{findings:?}");
        assert_eq!(findings[0].code, FindingCode::EssDuplicate);
        assert_eq!(findings[0].severity, Severity::Warning);
        assert_eq!(findings[0].path_context, "#/paths/~1pet/put/X-objectAuth");
        assert_eq!(classify_design(&doc), DesignClass::MethodLevel);
    }

    #[test]
    fn scope_claim_disagreeing_with_scheme() {
        let text = r#"
paths:
  /pet:
    get:
      X-objectAuth:
        object: {schema: {$ref: '#/components/schemas/Pet/properties/id'}}
        schema: {$ref: '#/components/securitySchemes/X-objectAuthScheme'}
        scopes: {R: {groups: {type: integer}, user_id: {type: string}}}
components:
  securitySchemes:
    X-objectAuthScheme: {type: apiKey, in: header, name: api_key, x-groups: string, x-user_id: string}
  schemas:
    Pet: {type: object, properties: {id: {type: integer}}}
"#;
        assert_eq!(codes(&parse(text)), ["E-SCOPE-ACTION"]);
    }

    #[test]
    fn findings_are_ordered_and_deterministic() {
        let text = r#"
paths:
  /b:
    get: {responses: {'200': {content: {application/json: {schema: {$ref: '#/components/schemas/Pet'}}}}}}
  /a:
    get: {responses: {'200': {content: {application/json: {schema: {$ref: '#/components/schemas/Pet'}}}}}}
components:
  securitySchemes:
    X-objectAuthScheme: {type: apiKey, in: header, name: api_key}
  schemas:
    Pet: {type: object, properties: {id: {type: integer}}}
"#;
        let doc = parse(text);
        let first = validate(&doc);
        assert_eq!(first, validate(&doc));
        let ctx: Vec<&str> = first.iter().map(|f| f.path_context.as_str()).collect();
        assert_eq!(ctx, ["#/components/securitySchemes/X-objectAuthScheme", "#/paths/~1a", "#/paths/~1b"]);
        assert!(has_errors(&first));
    }
}
