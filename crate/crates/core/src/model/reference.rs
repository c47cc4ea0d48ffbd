//! Intra-document `$ref` resolution.
//!
//! Two forms are accepted:
//!
//! * `#/a/b/c` fragments rooted at the document,
//! * bare relative paths such as `post/responses/'201'/...`, resolved against a
//!   base node (method-level bindings address their object id this way).
//!
//! Anything naming another document (`other.yaml#/x`, `https://...`) is rejected.
//!
//! Segment lookup is forgiving in two ways, both needed to resolve references as
//! they are written in hand-authored ESS documents: a missing key may be matched
//! by joining it with the following segments (`application/json` written
//! unescaped), and a key that has no exact match may match case-insensitively if
//! exactly one key does (`Pet` vs `pet`). Quoted segments (`'201'`) are unquoted.

use std::collections::HashSet;

use serde_json::Value;

use super::ModelError;

/// A node located by reference resolution, together with the real keys leading to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRef<'a> {
    pub node: &'a Value,
    pub segments: Vec<String>,
}

impl ResolvedRef<'_> {
    pub fn pointer(&self) -> String {
        pointer_from_segments(&self.segments)
    }
}

/// Renders segments as a `#/`-rooted JSON pointer.
pub fn pointer_from_segments<S: AsRef<str>>(segments: &[S]) -> String {
    let mut out = String::from("#");
    if segments.is_empty() {
        out.push('/');
    }
    for seg in segments {
        out.push('/');
        out.push_str(&seg.as_ref().replace('~', "~0").replace('/', "~1"));
    }
    out
}

fn unquote(seg: &str) -> &str {
    let s = seg.trim();
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

fn split_segments(path: &str) -> Vec<String> {
    path.split('/')
        .filter(|s| !s.is_empty())
        .map(|s| unquote(s).replace("~1", "/").replace("~0", "~"))
        .collect()
}

fn is_remote(reference: &str) -> bool {
    reference.contains("://") || reference.find('#').is_some_and(|i| i > 0)
}

/// Splits a reference into absolute segments. `base` is required for relative references.
pub fn reference_segments(reference: &str, base: Option<&[String]>) -> Result<Vec<String>, ModelError> {
    let reference = unquote(reference);
    if is_remote(reference) {
        return Err(ModelError::RemoteRef(reference.to_string()));
    }
    if let Some(fragment) = reference.strip_prefix('#') {
        if !fragment.is_empty() && !fragment.starts_with('/') {
            return Err(ModelError::RemoteRef(reference.to_string()));
        }
        return Ok(split_segments(fragment));
    }
    match base {
        Some(base) => {
            let mut segments = base.to_vec();
            segments.extend(split_segments(reference));
            Ok(segments)
        }
        None => Err(ModelError::RemoteRef(reference.to_string())),
    }
}

/// Resolves `reference` inside `root`. Reference objects met along the way are followed.
pub fn resolve<'a>(
    root: &'a Value,
    reference: &str,
    base: Option<&[String]>,
) -> Result<ResolvedRef<'a>, ModelError> {
    let segments = reference_segments(reference, base)?;
    let mut visited = HashSet::new();
    walk(root, &segments, reference, &mut visited)
}

fn ref_target(node: &Value) -> Option<&str> {
    node.as_object()?.get("$ref")?.as_str()
}

fn walk<'a>(
    root: &'a Value,
    segments: &[String],
    original: &str,
    visited: &mut HashSet<Vec<String>>,
) -> Result<ResolvedRef<'a>, ModelError> {
    let mut node = root;
    let mut path: Vec<String> = Vec::with_capacity(segments.len());
    let mut i = 0;
    loop {
        if let Some(target) = ref_target(node) {
            let target_segments = reference_segments(target, None)?;
            if !visited.insert(target_segments.clone()) {
                return Err(ModelError::CyclicRef(original.to_string()));
            }
            let followed = walk(root, &target_segments, original, visited)?;
            node = followed.node;
            path = followed.segments;
        }
        if i >= segments.len() {
            return Ok(ResolvedRef { node, segments: path });
        }
        let (next, key, consumed) = step(node, &segments[i..])
            .ok_or_else(|| ModelError::DanglingRef(original.to_string()))?;
        node = next;
        path.push(key);
        i += consumed;
    }
}

/// Looks up the next child. Returns the child, its real key and how many segments it consumed.
fn step<'a>(node: &'a Value, rest: &[String]) -> Option<(&'a Value, String, usize)> {
    match node {
        Value::Object(map) => {
            let mut joined = String::new();
            for (n, seg) in rest.iter().enumerate() {
                if n > 0 {
                    joined.push('/');
                }
                joined.push_str(seg);
                if let Some(v) = map.get(&joined) {
                    return Some((v, joined, n + 1));
                }
            }
            let mut joined = String::new();
            for (n, seg) in rest.iter().enumerate() {
                if n > 0 {
                    joined.push('/');
                }
                joined.push_str(seg);
                let mut hits = map.iter().filter(|(k, _)| k.eq_ignore_ascii_case(&joined));
                if let (Some((k, v)), None) = (hits.next(), hits.next()) {
                    return Some((v, k.clone(), n + 1));
                }
            }
            None
        }
        Value::Array(items) => {
            let idx: usize = rest[0].parse().ok()?;
            items.get(idx).map(|v| (v, rest[0].clone(), 1))
        }
        _ => None,
    }
}
