use std::path::Path;
use std::process::{Command, Output};

use tea_core::builtins::add_tool_spec;
use tea_core::value::{canonical_string, map_of};
use tea_core::Value;

fn tea(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tea"))
        .arg("--data-dir")
        .arg(dir)
        .args(args)
        .env_remove("TEA_DATA_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn register_add(dir: &Path) {
    let spec = Value::from_serialize(&add_tool_spec("add")).unwrap();
    let params = canonical_string(&map_of([("spec", spec)])).unwrap();
    let o = tea(dir, &["call", "tool.register", "--params", &params]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn register_list_invoke() {
    let dir = tempfile::tempdir().unwrap();
    register_add(dir.path());

    let o = tea(dir.path(), &["list", "tool"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "add");

    let o = tea(dir.path(), &["--format", "canonical", "invoke", "add", "--args", r#"{"a":2,"b":3}"#]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = Value::from_canonical(stdout(&o).trim()).unwrap();
    assert_eq!(v.get("output"), Some(&Value::Int(5)));
    assert_eq!(v.get("tool_version"), Some(&Value::from("1.0.0")));

    let o = tea(dir.path(), &["history", "tool", "add"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("1.0.0"));
}

#[test]
fn rollback_to_missing_version_fails() {
    let dir = tempfile::tempdir().unwrap();
    register_add(dir.path());
    let o = tea(dir.path(), &["rollback", "tool", "add", "9.9.9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("VersionNotFound"), "{}", stderr(&o));
}

#[test]
fn rollback_creates_a_new_version() {
    let dir = tempfile::tempdir().unwrap();
    register_add(dir.path());
    let mut spec = add_tool_spec("add");
    spec.descriptor.description = "adds two integers, faster".into();
    let params = canonical_string(&map_of([
        ("name", Value::from("add")),
        ("spec", Value::from_serialize(&spec).unwrap()),
    ]))
    .unwrap();
    assert!(tea(dir.path(), &["call", "tool.update", "--params", &params]).status.success());

    let o = tea(dir.path(), &["--format", "canonical", "rollback", "tool", "add", "1.0.0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tea(dir.path(), &["--format", "canonical", "info", "tool", "add"]);
    let cfg = Value::from_canonical(stdout(&o).trim()).unwrap();
    assert_eq!(cfg.get("version"), Some(&Value::from("1.1.1")));
    assert_eq!(
        cfg.get("descriptor").and_then(|d| d.get("description")),
        Some(&Value::from(add_tool_spec("add").descriptor.description.as_str()))
    );
}

#[test]
fn unknown_component_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = tea(dir.path(), &["info", "tool", "ghost"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("NotFound"));

    let o = tea(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn save_and_load_between_directories() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let export = tempfile::tempdir().unwrap();
    register_add(a.path());
    assert!(tea(a.path(), &["save", "--to", export.path().to_str().unwrap()]).status.success());
    assert!(export.path().join("tools.manifest").exists());

    let o = tea(b.path(), &["load", "--from", export.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&tea(b.path(), &["list", "tool"])).trim(), "add");
}

#[test]
fn serve_stdio_answers_each_line() {
    use std::io::Write;
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    register_add(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_tea"))
        .arg("--data-dir")
        .arg(dir.path())
        .args(["serve", "--listen", "stdio"])
        .env_remove("TEA_DATA_DIR")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    writeln!(stdin, r#"{{"id":"1","op":"tool.list","params":{{}}}}"#).unwrap();
    writeln!(stdin, r#"{{"id":"2","op":"no.such.op","params":{{}}}}"#).unwrap();
    drop(stdin);
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = stdout(&out).lines().map(|l| Value::from_canonical(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for l in &lines {
        match l.get("id").and_then(Value::as_str) {
            Some("1") => assert_eq!(l.get("result"), Some(&Value::Seq(vec![Value::from("add")]))),
            Some("2") => assert_eq!(
                l.get("error").and_then(|e| e.get("kind")),
                Some(&Value::from("ProtocolError"))
            ),
            other => panic!("unexpected id {other:?}"),
        }
    }
}
