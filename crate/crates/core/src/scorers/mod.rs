//! The model abstraction: incremental log-probabilities over target sequences
//! given a source, plus the count-based toy models used to stand in for real
//! translation systems.
//!
//! Every step distribution covers the scorer's target vocabulary: PAD and BOS
//! carry `-inf`, EOS/UNK and the ordinary forms share the probability mass.

mod channel;
mod ensemble;
mod ngram;
mod perturbed;

pub use channel::{channel_train, Alignment, ChannelConfig, ChannelScorer, EosSchedule};
pub use ensemble::{ensemble, Ensemble, EnsembleMode};
pub use ngram::NGramLm;
pub use perturbed::PerturbedScorer;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::{Sentence, Token, Vocabulary};

/// Per-sentence decoding state. Cheap to clone so beams can branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerState {
    pub(crate) source: Arc<[Token]>,
    pub(crate) history: Vec<Token>,
    pub(crate) closed: bool,
    pub(crate) members: Vec<ScorerState>,
}

impl ScorerState {
    pub(crate) fn new(source: Arc<[Token]>) -> Self {
        ScorerState {
            source,
            history: Vec::new(),
            closed: false,
            members: Vec::new(),
        }
    }

    /// Number of target tokens emitted so far.
    pub fn position(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[Token] {
        &self.history
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// The last `n` history tokens, left-padded with BOS.
    pub(crate) fn context(&self, n: usize) -> Vec<Token> {
        let have = self.history.len().min(n);
        let mut ctx = vec![Token::BOS; n - have];
        ctx.extend_from_slice(&self.history[self.history.len() - have..]);
        ctx
    }

    pub(crate) fn pushed(&self, token: Token) -> Self {
        let mut next = self.clone();
        next.advance_in_place(token);
        next
    }

    fn advance_in_place(&mut self, token: Token) {
        if token == Token::EOS {
            self.closed = true;
        } else {
            self.history.push(token);
        }
    }
}

pub trait Scorer: Send + Sync {
    fn target_vocab(&self) -> &Vocabulary;

    /// Conditions on `source`; unknown source forms map to UNK.
    fn init(&self, source: &Sentence) -> Result<ScorerState>;

    /// Natural-log step probabilities indexed by target token id.
    fn log_probs(&self, state: &ScorerState) -> Result<Vec<f64>>;

    fn advance(&self, state: &ScorerState, token: Token) -> ScorerState {
        state.pushed(token)
    }

    fn step(&self, state: &ScorerState, token: Token) -> Result<(ScorerState, f64)> {
        if state.closed {
            return Err(Error::SequenceClosed);
        }
        if token.index() >= self.target_vocab().len() {
            return Err(Error::TokenOutOfRange(token.0));
        }
        let lp = self.log_probs(state)?[token.index()];
        Ok((self.advance(state, token), lp))
    }
}

/// Total log-probability of `target` followed by EOS. Target forms outside the
/// scorer's vocabulary are scored as UNK.
pub fn score_sequence<S: Scorer + ?Sized>(scorer: &S, source: &Sentence, target: &Sentence) -> Result<f64> {
    let vocab = scorer.target_vocab();
    let mut state = scorer.init(source)?;
    let mut total = 0.0;
    for token in vocab.encode(target).into_iter().chain([Token::EOS]) {
        let (next, lp) = scorer.step(&state, token)?;
        total += lp;
        state = next;
    }
    Ok(total)
}

pub(crate) fn encode_source(vocab: &Vocabulary, source: &Sentence) -> Result<Arc<[Token]>> {
    if source.is_empty() {
        return Err(Error::EmptySource);
    }
    Ok(vocab.encode(source).into())
}

/// `ln(sum(exp(x)))` over finite entries, shifted by the maximum.
pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = values.into_iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Any of the toy models, serializable with a type tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Channel(ChannelScorer),
    Perturbed(PerturbedScorer),
    Ensemble(Ensemble),
}

impl Scorer for Model {
    fn target_vocab(&self) -> &Vocabulary {
        match self {
            Model::Channel(m) => m.target_vocab(),
            Model::Perturbed(m) => m.target_vocab(),
            Model::Ensemble(m) => m.target_vocab(),
        }
    }

    fn init(&self, source: &Sentence) -> Result<ScorerState> {
        match self {
            Model::Channel(m) => m.init(source),
            Model::Perturbed(m) => m.init(source),
            Model::Ensemble(m) => m.init(source),
        }
    }

    fn log_probs(&self, state: &ScorerState) -> Result<Vec<f64>> {
        match self {
            Model::Channel(m) => m.log_probs(state),
            Model::Perturbed(m) => m.log_probs(state),
            Model::Ensemble(m) => m.log_probs(state),
        }
    }

    fn advance(&self, state: &ScorerState, token: Token) -> ScorerState {
        match self {
            Model::Channel(m) => m.advance(state, token),
            Model::Perturbed(m) => m.advance(state, token),
            Model::Ensemble(m) => m.advance(state, token),
        }
    }
}

impl From<ChannelScorer> for Model {
    fn from(m: ChannelScorer) -> Self {
        Model::Channel(m)
    }
}

impl From<PerturbedScorer> for Model {
    fn from(m: PerturbedScorer) -> Self {
        Model::Perturbed(m)
    }
}

impl From<Ensemble> for Model {
    fn from(m: Ensemble) -> Self {
        Model::Ensemble(m)
    }
}

/// First line of every scorer file.
pub const SCORER_FILE_HEADER: &str = "nbest-scorer v1";

impl Model {
    /// Serialized form: the version header line followed by one line of JSON
    /// carrying the type tag, tables, weights and seeds.
    pub fn to_file_string(&self) -> Result<String> {
        let body = serde_json::to_string(self).map_err(|e| Error::ScorerFormat(e.to_string()))?;
        Ok(format!("{SCORER_FILE_HEADER}\n{body}\n"))
    }

    pub fn from_file_str(text: &str) -> Result<Self> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::ScorerFormat("missing header line".into()))?;
        if header.trim_end() != SCORER_FILE_HEADER {
            return Err(Error::ScorerFormat(format!(
                "unsupported header {header:?}, expected {SCORER_FILE_HEADER:?}"
            )));
        }
        serde_json::from_str(body).map_err(|e| Error::ScorerFormat(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file_str(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::formats::write_atomic(path, self.to_file_string()?.as_bytes())
    }
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;

    #[test]
    fn init_is_positioned_before_first_token_and_deterministic() {
        let m = toy_channel();
        let a = m.init(&"a b".into()).unwrap();
        assert_eq!(a.position(), 0);
        assert_eq!(a, m.init(&"a b".into()).unwrap());
        assert!(matches!(m.init(&Sentence::default()), Err(Error::EmptySource)));
    }

    #[test]
    fn stepping_after_eos_fails() {
        let m = toy_channel();
        let s = m.init(&"a".into()).unwrap();
        let (closed, _) = m.step(&s, Token::EOS).unwrap();
        assert!(closed.is_closed());
        assert!(matches!(m.step(&closed, Token(4)), Err(Error::SequenceClosed)));
        assert!(matches!(m.step(&s, Token(999)), Err(Error::TokenOutOfRange(999))));
    }

    #[test]
    fn sequence_score_is_the_fold_of_steps() {
        let m = toy_channel();
        let source: Sentence = "a b c".into();
        let target: Sentence = "x y q".into();
        let mut state = m.init(&source).unwrap();
        let mut manual = 0.0;
        for tok in ["x", "y", "q"].map(|w| m.target_vocab().id(w)).into_iter().chain([Token::EOS]) {
            let (next, lp) = m.step(&state, tok).unwrap();
            manual += lp;
            state = next;
        }
        assert_eq!(score_sequence(&m, &source, &target).unwrap().to_bits(), manual.to_bits());
    }

    #[test]
    fn scorer_file_round_trip_is_exact() {
        let base: Model = toy_channel().into();
        let perturbed: Model = PerturbedScorer::new(base.clone(), 0.7, 11).unwrap().into();
        let ens: Model = ensemble(vec![base.clone(), perturbed.clone()], vec![0.25, 0.75], EnsembleMode::ProbAvg)
            .unwrap()
            .into();
        for m in [base, perturbed, ens] {
            let text = m.to_file_string().unwrap();
            assert!(text.starts_with(SCORER_FILE_HEADER));
            let back = Model::from_file_str(&text).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_file_string().unwrap(), text);
        }
    }

    #[test]
    fn scorer_file_rejects_bad_header() {
        assert!(Model::from_file_str("nbest-scorer v9\n{}\n").is_err());
        assert!(Model::from_file_str("").is_err());
    }

    #[test]
    fn log_sum_exp_handles_empty_mass() {
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp([0.5f64.ln(), 0.5f64.ln()])).abs() < 1e-15);
    }
}
