use serde_json::{json, Value};

use nbest_demo::{bleu_breakdown, explore_beam, protocol_matrix};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn bleu_breakdown_matches_the_metric() {
    let v = parse(&bleu_breakdown("a b c d", "a b c e", 4, true));
    assert!((v["bleu"].as_f64().unwrap() - 0.658037).abs() < 1e-6);
    assert_eq!(v["orders"][0]["matches"], 3);
    assert_eq!(v["orders"][3]["matches"], 0);
    assert_eq!(v["orders"][1]["precision"], 0.75);
    assert_eq!(v["brevity_penalty"], 1.0);

    let short = parse(&bleu_breakdown("a b c", "a b c d", 2, false));
    assert!((short["bleu"].as_f64().unwrap() - 0.716531).abs() < 1e-6);
    assert!((short["brevity_penalty"].as_f64().unwrap() - (-1.0f64 / 3.0).exp()).abs() < 1e-12);
}

#[test]
fn invalid_input_becomes_an_error_object() {
    assert!(parse(&bleu_breakdown("a", "a", 0, false))["error"].is_string());
    assert!(parse(&explore_beam(3, 300, 99, 10, 5, 0.0))["error"].is_string());
    assert!(parse(&explore_beam(3, 300, 0, 0, 5, 0.0))["error"].is_string());
}

#[test]
fn beam_explorer_lists_ranked_entries() {
    let v = parse(&explore_beam(3, 300, 2, 10, 5, 0.0));
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 5);
    assert_eq!(entries[0]["rank"], 1);
    assert_eq!(entries.iter().filter(|e| e["oracle"] == true).count(), 1);
    let scores: Vec<f64> = entries.iter().map(|e| e["normalized"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!(v["greedy_score"].as_f64().unwrap() <= scores[0] + 1e-9);
    assert_eq!(v, parse(&explore_beam(3, 300, 2, 10, 5, 0.0)));
}

#[test]
fn protocol_matrix_has_the_standard_shape() {
    let v = parse(&protocol_matrix(7, 800, 100, 40, 10));
    assert_eq!(v["rows"], json!(["A", "B", "Union"]));
    assert_eq!(v["columns"], json!(["A", "B", "All"]));
    assert_eq!(v["attribution"].as_array().unwrap().len(), 2);
    let oracle = v["oracle"].as_array().unwrap();
    assert!(oracle[2].as_f64().unwrap() >= oracle[0].as_f64().unwrap());
    assert_eq!(v["marked"][0][0], true);
    assert_eq!(v["marked"][0][1], false);
}
