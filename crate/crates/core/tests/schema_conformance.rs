//! The in-repo JSON Schemas agree with what the session layer actually
//! reads and writes.

mod common;

use coref_core::session::{Request, Session, SessionConfig};
use serde_json::{json, Value};

fn schema(name: &str) -> Value {
    let path = format!("{}/schemas/{name}.schema.json", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Structural checker for the keyword subset the schemas use. Unknown
/// keywords fail loudly so the checker cannot silently under-check.
fn check(root: &Value, s: &Value, v: &Value, at: &str) -> Result<(), String> {
    let Some(obj) = s.as_object() else { return Ok(()) };
    for (key, rule) in obj {
        match key.as_str() {
            "$schema" | "$id" | "title" | "description" | "$defs" => {}
            "$ref" => {
                let name = rule.as_str().unwrap().strip_prefix("#/$defs/").expect("local ref");
                check(root, &root["$defs"][name], v, at)?;
            }
            "type" => {
                let ok = match rule.as_str().unwrap() {
                    "object" => v.is_object(),
                    "array" => v.is_array(),
                    "string" => v.is_string(),
                    "integer" => v.is_u64() || v.is_i64(),
                    "boolean" => v.is_boolean(),
                    "null" => v.is_null(),
                    other => panic!("type {other}"),
                };
                if !ok {
                    return Err(format!("{at}: expected {rule}"));
                }
            }
            "required" => {
                for r in rule.as_array().unwrap() {
                    if v.get(r.as_str().unwrap()).is_none() {
                        return Err(format!("{at}: missing {r}"));
                    }
                }
            }
            "properties" => {
                if let Some(o) = v.as_object() {
                    for (k, sub) in rule.as_object().unwrap() {
                        if let Some(x) = o.get(k) {
                            check(root, sub, x, &format!("{at}/{k}"))?;
                        }
                    }
                }
            }
            "additionalProperties" => {
                assert_eq!(rule, &json!(false), "only `false` is supported");
                if let Some(o) = v.as_object() {
                    let known = obj["properties"].as_object().unwrap();
                    if let Some(k) = o.keys().find(|k| !known.contains_key(*k)) {
                        return Err(format!("{at}: unexpected {k}"));
                    }
                }
            }
            "items" => {
                if let Some(a) = v.as_array() {
                    for (i, x) in a.iter().enumerate() {
                        check(root, rule, x, &format!("{at}/{i}"))?;
                    }
                }
            }
            "enum" => {
                if !rule.as_array().unwrap().contains(v) {
                    return Err(format!("{at}: {v} not in {rule}"));
                }
            }
            "const" => {
                if rule != v {
                    return Err(format!("{at}: {v} != {rule}"));
                }
            }
            "oneOf" => {
                let n = rule.as_array().unwrap().iter().filter(|s| check(root, s, v, at).is_ok()).count();
                if n != 1 {
                    return Err(format!("{at}: {n} oneOf branches match"));
                }
            }
            "minimum" => {
                if v.as_f64().is_some_and(|x| x < rule.as_f64().unwrap()) {
                    return Err(format!("{at}: below minimum"));
                }
            }
            "minLength" => {
                if v.as_str().is_some_and(|x| (x.chars().count() as u64) < rule.as_u64().unwrap()) {
                    return Err(format!("{at}: too short"));
                }
            }
            "minItems" => {
                if v.as_array().is_some_and(|x| (x.len() as u64) < rule.as_u64().unwrap()) {
                    return Err(format!("{at}: too few items"));
                }
            }
            "pattern" => {
                // only `^<prefix>[0-9]+$`
                let p = rule.as_str().unwrap();
                let prefix = p.strip_prefix('^').and_then(|p| p.strip_suffix("[0-9]+$")).expect("pattern form");
                let ok = v.as_str().and_then(|s| s.strip_prefix(prefix)).is_some_and(|d| {
                    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
                });
                if v.is_string() && !ok {
                    return Err(format!("{at}: {v} does not match {p}"));
                }
            }
            other => panic!("unsupported schema keyword {other}"),
        }
    }
    Ok(())
}

fn conforms(name: &str, v: &Value) -> Result<(), String> {
    let s = schema(name);
    check(&s, &s, v, "")
}

fn configs() -> Vec<String> {
    let original = common::boa_original();
    vec![
        common::fixture("annotate_task.json"),
        common::fixture("guided_naming.json"),
        json!({"mode": "review", "original": original}).to_string(),
        json!({"mode": "tutorial", "script": {"steps": [
            {"prompt": "Read this.", "target": "none", "require": "ack"},
            {"prompt": "Press N.", "target": "cluster_bank", "require": {"op": "assign_new"}}
        ]}})
        .to_string(),
    ]
}

#[test]
fn configs_conform_and_parse() {
    for text in configs() {
        let v: Value = serde_json::from_str(&text).unwrap();
        conforms("session-config", &v).unwrap();
        SessionConfig::parse(&text).unwrap();
    }
    let bad = json!({"mode": "annotate", "task": {"corpus": {"documents": []}, "mentions": []}, "extra": 1});
    assert!(conforms("session-config", &bad).is_err());
    assert!(SessionConfig::from_value(bad).is_err());
}

#[test]
fn live_traffic_conforms() {
    for text in configs() {
        let mut session = Session::open_json(&text).unwrap();
        conforms("snapshot", &serde_json::from_str(&session.snapshot()).unwrap()).unwrap();
        let mut rng = common::rng(3);
        for _ in 0..20 {
            let (op, params) = match session.annotation().filter(|_| session.review().is_none()) {
                Some(state) => common::action_message(&common::random_action(&mut rng, state)),
                None => ("span".to_string(), json!({"span": "accept"}).as_object().cloned().unwrap()),
            };
            let request = Request { session_id: session.id().into(), seq: session.version() + 1, op, params };
            conforms("request", &serde_json::to_value(&request).unwrap()).unwrap();
            let response = session.handle(&request);
            conforms("response", &serde_json::to_value(&response).unwrap()).unwrap();
        }
        for entry in session.log() {
            conforms("action-log-line", &serde_json::to_value(entry).unwrap()).unwrap();
        }
        conforms("snapshot", &serde_json::from_str(&session.snapshot()).unwrap()).unwrap();
    }
}

#[test]
fn malformed_messages_fail_both_checks() {
    let missing_seq = json!({"session_id": "s", "op": "assign"});
    assert!(conforms("request", &missing_seq).is_err());
    assert!(serde_json::from_value::<Request>(missing_seq).is_err());
    let stray = json!({"session_id": "s", "seq": 1, "op": "assign", "cluster": "c0"});
    assert!(conforms("request", &stray).is_err());
    assert!(serde_json::from_value::<Request>(stray).is_err());
}
