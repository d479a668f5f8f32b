use serde::{Deserialize, Serialize};

use super::{encode_source, log_sum_exp, NGramLm, Scorer, ScorerState};
use crate::error::{Error, Result};
use crate::textcore::{ParallelCorpus, Sentence, Side, Token, Vocabulary};

/// Which source position target position `t` reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// `t -> t`; positions past the source end read the last source token.
    #[default]
    Forward,
    /// `t -> |source| - 1 - t`; positions past the source end read the first
    /// source token. Used for systems that emit the target right to left.
    Reverse,
}

impl Alignment {
    fn source_index(self, position: usize, source_len: usize) -> usize {
        match self {
            Alignment::Forward => position.min(source_len - 1),
            Alignment::Reverse if position < source_len => source_len - 1 - position,
            Alignment::Reverse => 0,
        }
    }
}

/// EOS probability before and after the target has reached the source length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EosSchedule {
    pub early: f64,
    pub late: f64,
}

impl Default for EosSchedule {
    fn default() -> Self {
        EosSchedule {
            early: 1e-30,
            late: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub alignment: Alignment,
    pub lm_order: usize,
    /// Laplace constant shared by the emission table and the language model.
    pub laplace: f64,
    /// Weight of the emission table against the language model.
    pub mu: f64,
    pub eos: EosSchedule,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            alignment: Alignment::Forward,
            lm_order: 2,
            laplace: 0.01,
            mu: 0.5,
            eos: EosSchedule::default(),
        }
    }
}

impl ChannelConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::config("mixture weight must lie in [0, 1]"));
        }
        for p in [self.eos.early, self.eos.late] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config("EOS probabilities must lie in (0, 1)"));
            }
        }
        if self.laplace <= 0.0 {
            return Err(Error::config("Laplace constant must be positive"));
        }
        Ok(())
    }
}

/// Toy translation model: a position-aligned emission table combined
/// log-linearly with a target n-gram model, plus an explicit length model.
///
/// Non-EOS outcomes get `exp(mu * ln e(w | s_t) + (1 - mu) * ln lm(w | h))`,
/// renormalized and scaled by `1 - p(EOS)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRepr", into = "ChannelRepr")]
pub struct ChannelScorer {
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    emission: Vec<Vec<f64>>,
    config: ChannelConfig,
    lm: NGramLm,
    log_emission: Vec<Vec<f64>>,
}

/// Trains emission counts over aligned positions and an n-gram model over the
/// target side. Deterministic in the corpus.
pub fn channel_train(corpus: &ParallelCorpus, config: &ChannelConfig) -> Result<ChannelScorer> {
    config.validate()?;
    let source_vocab = Vocabulary::build(corpus, Side::Source)?;
    let target_vocab = Vocabulary::build(corpus, Side::Target)?;
    let (vs, vt) = (source_vocab.len(), target_vocab.len());
    let outcomes = (vt - Token::UNK.index()) as f64;

    let mut counts = vec![vec![0u64; vt]; vs];
    let mut targets = Vec::with_capacity(corpus.len());
    for (src, tgt) in corpus.pairs() {
        let s = source_vocab.encode(src);
        let t = target_vocab.encode(tgt);
        for (pos, &tok) in t.iter().enumerate() {
            counts[s[config.alignment.source_index(pos, s.len())].index()][tok.index()] += 1;
        }
        targets.push(t);
    }
    let emission = counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            let denom = total as f64 + config.laplace * outcomes;
            row.iter()
                .enumerate()
                .map(|(w, &c)| {
                    if w < Token::UNK.index() {
                        0.0
                    } else {
                        (c as f64 + config.laplace) / denom
                    }
                })
                .collect()
        })
        .collect();
    let lm = NGramLm::train(targets.iter().map(Vec::as_slice), vt, config.lm_order, config.laplace, None)?;
    ChannelScorer::from_parts(source_vocab, target_vocab, emission, *config, lm)
}

impl ChannelScorer {
    fn from_parts(
        source_vocab: Vocabulary,
        target_vocab: Vocabulary,
        emission: Vec<Vec<f64>>,
        config: ChannelConfig,
        lm: NGramLm,
    ) -> Result<Self> {
        config.validate()?;
        if emission.len() != source_vocab.len() || emission.iter().any(|r| r.len() != target_vocab.len()) {
            return Err(Error::ScorerFormat("emission table shape does not match vocabularies".into()));
        }
        let log_emission = emission
            .iter()
            .map(|row| row.iter().map(|p| p.ln()).collect())
            .collect();
        Ok(ChannelScorer {
            source_vocab,
            target_vocab,
            emission,
            config,
            lm,
            log_emission,
        })
    }

    pub fn source_vocab(&self) -> &Vocabulary {
        &self.source_vocab
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn lm(&self) -> &NGramLm {
        &self.lm
    }

    /// `p(target | source)` from the emission table.
    pub fn emission(&self, source: Token, target: Token) -> f64 {
        self.emission[source.index()][target.index()]
    }

    pub fn emission_table(&self) -> &[Vec<f64>] {
        &self.emission
    }
}

impl Scorer for ChannelScorer {
    fn target_vocab(&self) -> &Vocabulary {
        &self.target_vocab
    }

    fn init(&self, source: &Sentence) -> Result<ScorerState> {
        Ok(ScorerState::new(encode_source(&self.source_vocab, source)?))
    }

    fn log_probs(&self, state: &ScorerState) -> Result<Vec<f64>> {
        if state.closed {
            return Err(Error::SequenceClosed);
        }
        let pos = state.position();
        let src = &state.source;
        let aligned = src[self.config.alignment.source_index(pos, src.len())];
        let p_eos = if pos < src.len() {
            self.config.eos.early
        } else {
            self.config.eos.late
        };
        let lm = self.lm.distribution(&state.context(self.lm.order() - 1));
        let emission = &self.log_emission[aligned.index()];
        let mu = self.config.mu;

        let mut out = vec![f64::NEG_INFINITY; self.target_vocab.len()];
        for w in Token::UNK.index()..out.len() {
            out[w] = mu * emission[w] + (1.0 - mu) * lm[w].ln();
        }
        let norm = log_sum_exp(out[Token::UNK.index()..].iter().copied());
        let keep = (1.0 - p_eos).ln() - norm;
        for v in &mut out[Token::UNK.index()..] {
            *v += keep;
        }
        out[Token::EOS.index()] = p_eos.ln();
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    config: ChannelConfig,
    emission: Vec<Vec<f64>>,
    lm: NGramLm,
}

impl From<ChannelScorer> for ChannelRepr {
    fn from(c: ChannelScorer) -> Self {
        ChannelRepr {
            source_vocab: c.source_vocab,
            target_vocab: c.target_vocab,
            config: c.config,
            emission: c.emission,
            lm: c.lm,
        }
    }
}

impl TryFrom<ChannelRepr> for ChannelScorer {
    type Error = Error;

    fn try_from(r: ChannelRepr) -> Result<Self> {
        ChannelScorer::from_parts(r.source_vocab, r.target_vocab, r.emission, r.config, r.lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::testing::*;
    use crate::scorers::score_sequence;
    use crate::textcore::reverse_target;

    #[test]
    fn every_reachable_step_is_normalized() {
        let m = toy_channel();
        let mut state = m.init(&"a b q".into()).unwrap();
        for _ in 0..6 {
            assert_normalized(&m, &state);
            state = m.advance(&state, Token(5));
        }
    }

    #[test]
    fn repeated_pair_closed_form() {
        let c = corpus(&vec![("a", "a"); 100]);
        let cfg = ChannelConfig {
            laplace: 0.01,
            ..ChannelConfig::default()
        };
        let m = channel_train(&c, &cfg).unwrap();
        let a_src = m.source_vocab().id("a");
        let a_tgt = m.target_vocab().id("a");
        // target vocab: 4 reserved + "a"; outcomes are UNK and "a".
        let expected = (100.0 + 0.01) / (100.0 + 0.01 * 2.0);
        assert!((m.emission(a_src, a_tgt) - expected).abs() < 1e-15);
        assert!(m.emission(a_src, a_tgt) >= 0.99);
    }

    #[test]
    fn emission_only_copy_model_picks_the_aligned_token() {
        let c = corpus(&[("a b c", "a b c"), ("c b", "c b"), ("b a", "b a"), ("c a b", "c a b")]);
        let cfg = ChannelConfig {
            mu: 1.0,
            ..ChannelConfig::default()
        };
        let m = channel_train(&c, &cfg).unwrap();
        let source: Sentence = "b c a".into();
        let mut state = m.init(&source).unwrap();
        for word in ["b", "c", "a"] {
            let lp = m.log_probs(&state).unwrap();
            let best = (0..lp.len()).max_by(|&a, &b| lp[a].total_cmp(&lp[b])).unwrap();
            assert_eq!(m.target_vocab().surface(Token(best as u32)), word);
            state = m.advance(&state, Token(best as u32));
        }
    }

    #[test]
    fn unknown_source_tokens_score_finitely() {
        let m = toy_channel();
        let score = score_sequence(&m, &"never seen".into(), &"x y".into()).unwrap();
        assert!(score.is_finite());
        let state = m.init(&"never".into()).unwrap();
        let lp = m.log_probs(&state).unwrap();
        // UNK source row is uniform over outcomes; any outcome keeps at least
        // (1 - p_eos) * floor mass.
        let outcomes = (m.target_vocab().len() - 3) as f64;
        let floor = m.config().laplace / (m.config().laplace * outcomes);
        for w in 3..lp.len() {
            assert!(lp[w].is_finite());
            assert!(m.emission(Token::UNK, Token(w as u32)) >= floor - 1e-15);
        }
    }

    #[test]
    fn reverse_alignment_on_reversed_targets_matches_forward() {
        let c = corpus(&[("a b c", "x y z"), ("b b a", "y w x"), ("c a", "z x"), ("a b", "w y")]);
        let fwd = channel_train(&c, &ChannelConfig::default()).unwrap();
        let rev_cfg = ChannelConfig {
            alignment: Alignment::Reverse,
            ..ChannelConfig::default()
        };
        let rev = channel_train(&c.with_reversed_targets(), &rev_cfg).unwrap();
        assert_eq!(fwd.emission_table(), rev.emission_table());
        assert_eq!(reverse_target(&"x y".into()), Sentence::parse("y x"));
    }

    #[test]
    fn training_is_deterministic() {
        assert_eq!(toy_channel(), toy_channel());
    }

    #[test]
    fn eos_schedule_follows_source_length() {
        let m = toy_channel();
        let s0 = m.init(&"a b".into()).unwrap();
        let lp0 = m.log_probs(&s0).unwrap();
        assert!((lp0[Token::EOS.index()] - 1e-30f64.ln()).abs() < 1e-15);
        let s2 = m.advance(&m.advance(&s0, Token(4)), Token(4));
        let lp2 = m.log_probs(&s2).unwrap();
        assert!((lp2[Token::EOS.index()] - 0.9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_configuration() {
        let c = corpus(&[("a", "b")]);
        for cfg in [
            ChannelConfig { mu: 1.5, ..ChannelConfig::default() },
            ChannelConfig { laplace: 0.0, ..ChannelConfig::default() },
            ChannelConfig { eos: EosSchedule { early: 0.0, late: 0.5 }, ..ChannelConfig::default() },
        ] {
            assert!(channel_train(&c, &cfg).is_err());
        }
    }
}
