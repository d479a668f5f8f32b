//! Browser front end for `nbest-core`. Every export takes plain values and
//! returns a JSON string; failures come back as `{"error": "..."}`.

use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

use nbest_core::analysis::ErrorClass;
use nbest_core::metrics::{bleu_stats, corpus_bleu, oracle_select, sentence_bleu, BleuConfig, Smoothing};
use nbest_core::scorers::{channel_train, ChannelConfig, Model};
use nbest_core::search::{beam_decode, BeamConfig};
use nbest_core::synthlab::{gen_split, run_experiment, ExperimentSpec, SystemSpec, TaskKind, TaskSpec};
use nbest_core::textcore::Sentence;

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(value) => serde_json::to_string(&value).unwrap_or_else(|e| json!({ "error": e.to_string() }).to_string()),
        Err(message) => json!({ "error": message }).to_string(),
    }
}

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct OrderRow {
    order: usize,
    matches: u64,
    total: u64,
    precision: f64,
}

#[derive(Serialize)]
struct BleuBreakdown {
    orders: Vec<OrderRow>,
    hyp_len: u64,
    ref_len: u64,
    brevity_penalty: f64,
    bleu: f64,
}

/// Clipped n-gram counts, precisions, brevity penalty and BLEU for one pair.
#[wasm_bindgen]
pub fn bleu_breakdown(hypothesis: &str, reference: &str, max_order: usize, smoothed: bool) -> String {
    respond(bleu_breakdown_impl(hypothesis, reference, max_order, smoothed))
}

fn bleu_breakdown_impl(hypothesis: &str, reference: &str, max_order: usize, smoothed: bool) -> Result<BleuBreakdown, String> {
    let cfg = BleuConfig {
        max_order,
        smoothing: if smoothed { Smoothing::AddOneForNGe2 } else { Smoothing::None },
        ..BleuConfig::default()
    };
    cfg.validate().map_err(text)?;
    let (hyp, reference) = (Sentence::parse(hypothesis), Sentence::parse(reference));
    let stats = bleu_stats(&hyp, &reference, &cfg).map_err(text)?;
    let orders = (0..max_order)
        .map(|i| {
            let (m, t) = (stats.matches[i], stats.totals[i]);
            let (m_s, t_s) = if smoothed && i > 0 { (m + 1, t + 1) } else { (m, t) };
            OrderRow {
                order: i + 1,
                matches: m,
                total: t,
                precision: if t_s == 0 { 0.0 } else { m_s as f64 / t_s as f64 },
            }
        })
        .collect();
    let (c, r) = (stats.hyp_len as f64, stats.ref_len as f64);
    let brevity_penalty = if c == 0.0 {
        0.0
    } else {
        (1.0 - r / c).exp().min(1.0)
    };
    Ok(BleuBreakdown {
        orders,
        hyp_len: stats.hyp_len,
        ref_len: stats.ref_len,
        brevity_penalty,
        bleu: corpus_bleu(&stats, &cfg),
    })
}

#[derive(Serialize)]
struct Entry {
    rank: usize,
    tokens: String,
    score: f64,
    normalized: f64,
    sentence_bleu: f64,
    oracle: bool,
}

#[derive(Serialize)]
struct Exploration {
    source: String,
    reference: String,
    entries: Vec<Entry>,
    greedy: String,
    greedy_score: f64,
    search_error: bool,
}

/// Trains a channel scorer on a small ambiguous cipher task and decodes test
/// sentence `sentence` with the given beam, next to greedy decoding.
#[wasm_bindgen]
pub fn explore_beam(
    seed: u64,
    train_size: usize,
    sentence: usize,
    beam_size: usize,
    nbest: usize,
    length_norm: f64,
) -> String {
    respond(explore_beam_impl(seed, train_size, sentence, beam_size, nbest, length_norm))
}

fn explore_beam_impl(
    seed: u64,
    train_size: usize,
    sentence: usize,
    beam_size: usize,
    nbest: usize,
    length_norm: f64,
) -> Result<Exploration, String> {
    let task = TaskSpec {
        kind: TaskKind::Cipher,
        source_vocab: 10,
        target_vocab: 10,
        ambiguity: 3,
        noise: 0.1,
        min_len: 4,
        max_len: 9,
        seed,
    };
    let split = gen_split(&task, 20, train_size.max(1)).map_err(text)?;
    let cfg = ChannelConfig {
        mu: 0.3,
        ..ChannelConfig::default()
    };
    let model: Model = channel_train(&split.train, &cfg).map_err(text)?.into();
    let (source, reference) = split
        .test
        .pairs()
        .get(sentence)
        .cloned()
        .ok_or_else(|| format!("sentence must be below {}", split.test.len()))?;

    let beam = BeamConfig {
        beam_size,
        nbest,
        max_len: None,
        length_norm,
    };
    let list = beam_decode(&model, sentence, &source, &beam).map_err(text)?.list;
    let greedy_cfg = BeamConfig {
        beam_size: 1,
        nbest: 1,
        ..beam
    };
    let greedy = beam_decode(&model, sentence, &source, &greedy_cfg).map_err(text)?.list;
    let greedy = greedy.best().ok_or("greedy search found nothing")?;

    let sent_cfg = BleuConfig::sentence_level();
    let oracle_rank = oracle_select(&list, &reference, &sent_cfg).map_err(text)?.0.rank;
    let entries = list
        .entries()
        .iter()
        .map(|h| {
            Ok(Entry {
                rank: h.rank,
                tokens: h.tokens.to_string(),
                score: h.model_score,
                normalized: h.normalized_score,
                sentence_bleu: sentence_bleu(&h.tokens, &reference, &sent_cfg).map_err(text)?,
                oracle: h.rank == oracle_rank,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let best = list.best().map_or(f64::NEG_INFINITY, |h| h.normalized_score);
    Ok(Exploration {
        source: source.to_string(),
        reference: reference.to_string(),
        entries,
        greedy: greedy.tokens.to_string(),
        greedy_score: greedy.normalized_score,
        search_error: best > greedy.normalized_score + 1e-6,
    })
}

#[derive(Serialize)]
struct MatrixView {
    rows: Vec<String>,
    columns: Vec<String>,
    cells: Vec<Vec<f64>>,
    marked: Vec<Vec<bool>>,
    oracle: Vec<f64>,
    attribution: Vec<AttributionView>,
}

#[derive(Serialize)]
struct AttributionView {
    scorer: String,
    other: String,
    search_error: f64,
    model_preference: f64,
    tie: f64,
}

/// Strong system A and weak system B on the cipher task; returns the
/// rescoring matrix (percentages) and the attribution fractions.
#[wasm_bindgen]
pub fn protocol_matrix(seed: u64, strong_size: usize, weak_size: usize, test_size: usize, nbest: usize) -> String {
    respond(protocol_matrix_impl(seed, strong_size, weak_size, test_size, nbest))
}

fn protocol_matrix_impl(
    seed: u64,
    strong_size: usize,
    weak_size: usize,
    test_size: usize,
    nbest: usize,
) -> Result<MatrixView, String> {
    let task = TaskSpec {
        seed,
        ..TaskSpec::default()
    };
    let system = |id: &str, size: usize| {
        let mut s = SystemSpec::new(id, size);
        s.channel.mu = 0.3;
        s
    };
    let mut spec = ExperimentSpec::new(task, test_size, vec![system("A", strong_size), system("B", weak_size)]);
    spec.beam = BeamConfig {
        beam_size: nbest,
        nbest,
        ..BeamConfig::default()
    };
    let exp = run_experiment(&spec).map_err(text)?;
    let pct = |v: &[f64]| v.iter().map(|x| (x * 10000.0).round() / 100.0).collect::<Vec<_>>();
    let m = &exp.matrix;
    Ok(MatrixView {
        rows: m.rows.clone(),
        columns: m.columns.clone(),
        cells: m.cells.iter().map(|r| pct(r)).collect(),
        marked: m.marked.clone(),
        oracle: pct(&m.oracle),
        attribution: exp
            .attributions
            .iter()
            .map(|a| AttributionView {
                scorer: a.scorer.clone(),
                other: a.other.clone(),
                search_error: a.report.fraction(ErrorClass::SearchError),
                model_preference: a.report.fraction(ErrorClass::ModelPreference),
                tie: a.report.fraction(ErrorClass::Tie),
            })
            .collect(),
    })
}
