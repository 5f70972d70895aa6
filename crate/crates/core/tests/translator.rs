use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use mesoscribe_core::engine::{Catalog, RuleType};
use mesoscribe_core::translator::*;
use proptest::prelude::*;

fn vocabulary() -> Vocabulary {
    let catalog = Catalog::demo();
    Vocabulary {
        ingredients: catalog.ingredient_names(),
        skeletons: catalog.skeleton_names(),
    }
}

/// Serve one HTTP request with `body` and hand back the request text.
fn one_shot_server(status: &str, body: &str) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let response = format!(
        "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut head = String::new();
        let mut length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            head.push_str(&line);
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let mut stream = stream;
        stream.write_all(response.as_bytes()).unwrap();
        head + &String::from_utf8(body).unwrap()
    });
    (url, handle)
}

#[test]
fn remote_backend_speaks_chat_completions() {
    let (url, server) = one_shot_server(
        "200 OK",
        r#"{"choices":[{"index":0,"message":{"role":"assistant","content":"fill"}}]}"#,
    );
    let backend = RemoteBackend::new(&url, "test-model").with_api_key(Some("k123".into()));
    let store = PromptStore::in_memory();
    let got = extract_rule_type("Add Heparin into the box to occupy 2% of the space", &store, &backend).unwrap();
    assert_eq!(got.value, RuleType::Fill);
    let request = server.join().unwrap();
    assert!(request.starts_with("POST /v1/chat/completions"));
    assert!(request.to_ascii_lowercase().contains("authorization: bearer k123"));
    let body: serde_json::Value = serde_json::from_str(request.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0);
    assert!(body["messages"][0]["content"].as_str().unwrap().contains("# Operation: rule_extraction"));
}

#[test]
fn remote_http_error_is_unavailable() {
    let (url, server) = one_shot_server("500 Internal Server Error", r#"{"error":{"message":"overloaded"}}"#);
    let backend = RemoteBackend::new(&url, "m").with_api_key(None).with_timeout(Duration::from_secs(5));
    let err = advise("q", &PromptStore::in_memory(), &backend).unwrap_err();
    match err {
        TranslatorError::BackendUnavailable(msg) => assert!(msg.contains("overloaded"), "{msg}"),
        other => panic!("{other:?}"),
    }
    server.join().unwrap();
}

#[test]
fn correction_loop_call_counts() {
    let store = PromptStore::in_memory();
    let valid = r#"{"labeling": true}"#;
    for k in 0..=3usize {
        let mut script: Vec<String> = (0..k).map(|i| format!("not json {i}")).collect();
        script.push(valid.into());
        let backend = ScriptedBackend::new(script);
        let result = generate_intent("show labels", &Vocabulary::default(), &store, &backend);
        if k <= MAX_RETRIES {
            assert_eq!(result.unwrap().calls, k + 1);
        } else {
            assert!(matches!(result, Err(TranslatorError::StillInvalidAfterRetries { calls: 3, .. })));
        }
        assert_eq!(backend.calls(), 1 + k.min(MAX_RETRIES));
    }
}

#[test]
fn gold_layer_sentence() {
    let store = PromptStore::in_memory();
    let text = "Populate the Au atom uniformly on a rectangle skeleton";
    let doc = generate_intent(text, &vocabulary(), &store, &MockBackend).unwrap().value;
    assert_eq!(doc.select_ingredient, Some(vec!["Au".to_string()]));
    assert_eq!(doc.select_skeleton, Some(vec!["rectangle".to_string()]));
    assert_eq!(doc.create_rule.as_deref(), Some(text));
    assert_eq!(extract_rule_type(text, &store, &MockBackend).unwrap().value, RuleType::Fill);
}

#[test]
fn parameter_examples() {
    let store = PromptStore::in_memory();
    let p = adjust_parameters("I would like to populate 1000 lipids on the skeleton surface.", &store, &MockBackend)
        .unwrap()
        .value;
    assert_eq!((p.elements, p.distance), (Some(1000), Some(0.0)));
    assert_eq!(adjust_parameters("occupy 2% of the space", &store, &MockBackend).unwrap().value.space, Some(2));
    let p = adjust_parameters("no collision checks please", &store, &MockBackend).unwrap().value;
    assert_eq!(p.collision_detection, Some(false));
    assert_eq!(p.elements, None);
}

#[test]
fn blood_plasma_sequence_smallest_first() {
    let store = PromptStore::in_memory();
    let seq = generate_rule_sequence(
        "Generate a blood plasma model inside a box.",
        &vocabulary().ingredients,
        &store,
        &MockBackend,
    )
    .unwrap();
    assert_eq!(seq.value.len(), 8);
    assert_eq!(seq.value[0], "Add Heparin into the box to occupy 2% of the space");
    assert_eq!(seq.value[7], "Add Albumin into the box to occupy 6% of the space");
}

#[test]
fn feedback_redirects_mock_classification() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = PromptStore::open(dir.path()).unwrap();
    let text = "Tile the capsid proteins next to each other across the membrane";
    assert_eq!(extract_rule_type(text, &store, &MockBackend).unwrap().value, RuleType::Siblings);
    record_feedback("rule_extraction", text, "siblings-parent", &mut store).unwrap();
    assert_eq!(extract_rule_type(text, &store, &MockBackend).unwrap().value, RuleType::SiblingsParent);
    // the correction is persisted for the next process
    let reopened = PromptStore::open(dir.path()).unwrap();
    assert_eq!(extract_rule_type(text, &reopened, &MockBackend).unwrap().value, RuleType::SiblingsParent);
}

#[test]
fn mock_replays_identically() {
    let run = || {
        let mut store = PromptStore::in_memory();
        let mut out = Vec::new();
        for text in ["Make the lipids red and highlight them", "Set the elements to 40", "save the model"] {
            out.push(format!("{:?}", generate_intent(text, &vocabulary(), &store, &MockBackend)));
        }
        record_feedback("code_generation", "shrink it", r#"{"editRule": "fewer elements"}"#, &mut store).unwrap();
        out.push(format!("{:?}", generate_intent("shrink it", &vocabulary(), &store, &MockBackend)));
        out
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn sequence_inversion(lines in prop::collection::vec("[A-Za-z][A-Za-z ]{0,20}[A-Za-z]", 1..10)) {
        let raw = lines.iter().enumerate().map(|(i, l)| format!("{}. {l}", i + 1)).collect::<Vec<_>>().join("\n");
        let backend = ScriptedBackend::new([raw]);
        let got = generate_rule_sequence("m", &[], &PromptStore::in_memory(), &backend).unwrap().value;
        let mut expected: Vec<String> = lines.iter().map(|l| l.trim().to_string()).collect();
        expected.reverse();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn feedback_is_monotone(input in "[a-z]{3,12}( [a-z]{2,8}){0,4}", pick in 0usize..6) {
        let mut store = PromptStore::in_memory();
        let before = store.build(Operation::RuleExtraction, "q");
        let name = RuleType::ALL[pick].as_str();
        record_feedback("rule_extraction", &input, name, &mut store).unwrap();
        let after = store.build(Operation::RuleExtraction, "q");
        let block = format!("## Feedback 1\nInput: {input}\nOutput:\n{name}");
        prop_assert!(!before.contains(&block));
        prop_assert!(after.contains(&block));
    }
}
