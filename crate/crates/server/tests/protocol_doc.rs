use std::collections::BTreeSet;

use livepaper_core::wire::{decode_client, decode_server, ServerMessage, CLIENT_TYPES};

/// Code blocks of PROTOCOL.md tagged `json <tag>`.
fn examples(tag: &str) -> Vec<String> {
    let text = include_str!("../../../PROTOCOL.md");
    let fence = format!("```json {tag}");
    let mut out = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        match current.as_mut() {
            None if line.trim() == fence => current = Some(String::new()),
            None => {}
            Some(_) if line.trim() == "```" => out.push(current.take().unwrap()),
            Some(block) => {
                block.push_str(line);
                block.push('\n');
            }
        }
    }
    out
}

#[test]
fn every_client_example_decodes() {
    let mut seen = BTreeSet::new();
    for example in examples("client") {
        let frame = decode_client(&example).unwrap_or_else(|e| panic!("{e}\n{example}"));
        let value: serde_json::Value = serde_json::from_str(&example).unwrap();
        seen.insert(value["type"].as_str().unwrap().to_string());
        assert!(frame.id.is_some(), "examples carry ids: {example}");
    }
    let all: BTreeSet<String> = CLIENT_TYPES.iter().map(|t| t.to_string()).collect();
    assert_eq!(seen, all);
}

#[test]
fn every_server_example_decodes() {
    let mut seen = BTreeSet::new();
    for example in examples("server") {
        let frame = decode_server(&example).unwrap_or_else(|e| panic!("{e}\n{example}"));
        seen.insert(match frame.message {
            ServerMessage::Welcome { .. } => "welcome",
            ServerMessage::StateSnapshot(_) => "state_snapshot",
            ServerMessage::StateDelta(_) => "state_delta",
            ServerMessage::Ack { .. } => "ack",
            ServerMessage::Error { .. } => "error",
        });
    }
    assert_eq!(seen.len(), 5, "{seen:?}");
}
