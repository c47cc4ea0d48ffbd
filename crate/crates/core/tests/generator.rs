use std::fs;
use std::path::{Path, PathBuf};

use bola_guard::generator::{
    manifest_for, manifest_to_document, read_stub, roundtrip_check, roundtrip_check_with, route_facts, spec_to_stub,
    stub_to_spec, GeneratorError, StubTokenLocation, HANDLERS_DIR, MANIFEST_FILE, PROVIDER_DIR, PROVIDER_FILE,
};
use bola_guard::model::{emit_document, parse_document, DocumentFormat, EssDocument};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> EssDocument {
    let text = fs::read_to_string(fixture(name)).unwrap();
    parse_document(&text, DocumentFormat::Yaml).unwrap()
}

const CLEAN: [&str; 8] = [
    "pet_root_level.yaml",
    "pet_method_level.yaml",
    "pet_root_equivalent.yaml",
    "petstore_plain.yaml",
    "petstore_full.yaml",
    "body_token.yaml",
    "mixed.yaml",
    "ess_schemes.yaml",
];

fn marker_lines(dir: &Path) -> Vec<(PathBuf, usize)> {
    let mut out = Vec::new();
    let mut files: Vec<_> = fs::read_dir(dir.join(HANDLERS_DIR)).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    for f in files {
        for (i, line) in fs::read_to_string(&f).unwrap().lines().enumerate() {
            if line.starts_with("# @object_privilege") {
                out.push((f.clone(), i));
            }
        }
    }
    out
}

fn delete_line(file: &Path, index: usize) {
    let text = fs::read_to_string(file).unwrap();
    let kept: Vec<&str> = text.lines().enumerate().filter(|(i, _)| *i != index).map(|(_, l)| l).collect();
    fs::write(file, kept.join("\n") + "\n").unwrap();
}

#[test]
fn root_level_stub_has_exact_markers_and_provider() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = spec_to_stub(&load("pet_root_level.yaml"), dir.path()).unwrap();
    assert_eq!(manifest.module_includes, vec!["privilege_provider".to_string()]);
    let handler = fs::read_to_string(dir.path().join(HANDLERS_DIR).join("pet.stub")).unwrap();
    let lines: Vec<&str> = handler.lines().collect();
    let marker = r#"# @object_privilege(path="/pet", token_in="header", groups=true, user_id=true)"#;
    for verb in ["post", "put"] {
        let at = lines.iter().position(|l| *l == format!("handler {verb} /pet:")).unwrap();
        assert_eq!(lines[at - 1], marker);
    }
    let descriptor = fs::read_to_string(dir.path().join(PROVIDER_DIR).join(PROVIDER_FILE)).unwrap();
    assert!(descriptor.contains("provides token_in=header groups=true user_id=true"));
    let auth = manifest.routes[0].object_auth.as_ref().unwrap();
    assert_eq!(auth.scheme_name, "X-objectAuthScheme");
    assert_eq!(auth.object_id_property, "id");
}

#[test]
fn unbound_document_gets_no_provider_or_markers() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = spec_to_stub(&load("petstore_plain.yaml"), dir.path()).unwrap();
    assert!(manifest.module_includes.is_empty());
    assert!(!dir.path().join(PROVIDER_DIR).join(PROVIDER_FILE).exists());
    assert!(marker_lines(dir.path()).is_empty());
}

#[test]
fn method_level_and_root_level_designs_give_the_same_manifest() {
    let a = manifest_for(&load("pet_method_level.yaml")).unwrap();
    let b = manifest_for(&load("pet_root_equivalent.yaml")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.routes[0].object_auth.as_ref().unwrap().object_id_property, "identifier");
}

#[test]
fn body_token_marker() {
    let dir = tempfile::tempdir().unwrap();
    spec_to_stub(&load("body_token.yaml"), dir.path()).unwrap();
    let back = stub_to_spec(dir.path()).unwrap();
    let facts = route_facts(&back).unwrap();
    assert!(facts.values().any(|f| f.token_location == Some(StubTokenLocation::Body)));
}

#[test]
fn invalid_documents_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let err = spec_to_stub(&load("schemes_missing_user_id.yaml"), dir.path()).unwrap_err();
    assert!(matches!(err, GeneratorError::ValidationFailed(_)));
}

#[test]
fn regenerated_root_level_document_matches_golden() {
    let manifest = manifest_for(&load("pet_root_level.yaml")).unwrap();
    let doc = manifest_to_document(&manifest).unwrap();
    let emitted = emit_document(&doc, DocumentFormat::Yaml);
    let golden = fixture("golden/pet_root_level_regenerated.yaml");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&golden, &emitted).unwrap();
    }
    assert_eq!(emitted, fs::read_to_string(golden).unwrap());
}

#[test]
fn roundtrip_holds_for_every_clean_fixture() {
    for name in CLEAN {
        assert!(roundtrip_check(&load(name)), "{name}");
    }
}

#[test]
fn deleting_any_marker_breaks_the_roundtrip() {
    for name in ["pet_root_level.yaml", "petstore_full.yaml", "mixed.yaml", "body_token.yaml"] {
        let doc = load(name);
        let probe = tempfile::tempdir().unwrap();
        spec_to_stub(&doc, probe.path()).unwrap();
        let markers = marker_lines(probe.path());
        assert!(!markers.is_empty(), "{name}");
        for (file, index) in markers {
            let rel = file.strip_prefix(probe.path()).unwrap().to_path_buf();
            assert!(!roundtrip_check_with(&doc, |d| delete_line(&d.join(&rel), index)), "{name} {rel:?}:{index}");
            // same mutation with the manifest gone, so only the markers are read
            assert!(
                !roundtrip_check_with(&doc, |d| {
                    delete_line(&d.join(&rel), index);
                    fs::remove_file(d.join(MANIFEST_FILE)).unwrap();
                }),
                "{name} {rel:?}:{index} without manifest"
            );
        }
    }
}

#[test]
fn markers_alone_reproduce_the_route_facts() {
    for name in CLEAN {
        let doc = load(name);
        if doc.paths.is_empty() {
            continue;
        }
        let dir = tempfile::tempdir().unwrap();
        spec_to_stub(&doc, dir.path()).unwrap();
        fs::remove_file(dir.path().join(MANIFEST_FILE)).unwrap();
        let back = stub_to_spec(dir.path()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(route_facts(&doc).unwrap(), route_facts(&back).unwrap(), "{name}");
    }
}

#[test]
fn empty_directory_has_no_stub() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_stub(dir.path()), Err(GeneratorError::NoStubFound(_))));
}

#[test]
fn malformed_marker_reports_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    spec_to_stub(&load("pet_root_level.yaml"), dir.path()).unwrap();
    let file = dir.path().join(HANDLERS_DIR).join("pet.stub");
    let text = fs::read_to_string(&file).unwrap().replace("groups=true", "groups=maybe");
    fs::write(&file, text).unwrap();
    let (_, index) = marker_lines(dir.path())[0].clone();
    match stub_to_spec(dir.path()) {
        Err(GeneratorError::MarkerSyntaxError { file: f, line, .. }) => {
            assert_eq!(f, file);
            assert_eq!(line, index + 1);
        }
        other => panic!("expected marker syntax error, got {other:?}"),
    }
}

#[test]
fn regenerating_into_the_same_directory_replaces_old_handlers() {
    let dir = tempfile::tempdir().unwrap();
    spec_to_stub(&load("petstore_full.yaml"), dir.path()).unwrap();
    spec_to_stub(&load("pet_root_level.yaml"), dir.path()).unwrap();
    let back = stub_to_spec(dir.path()).unwrap();
    assert_eq!(back.paths.keys().collect::<Vec<_>>(), vec!["/pet"]);
}
