//! Beam-search n-best generation and an exhaustive decoder for tiny instances.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorers::{Scorer, ScorerState};
use crate::textcore::{Sentence, Token, Vocabulary};

/// A named score attached to a hypothesis. In n-best files the names double as
/// provenance: a decoded entry carries one feature named after its system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub values: Vec<f64>,
}

impl Feature {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Feature {
            name: name.into(),
            values: vec![value],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Sentence,
    pub model_score: f64,
    pub normalized_score: f64,
    pub rank: usize,
    pub features: Vec<Feature>,
}

impl Hypothesis {
    pub fn new(tokens: Sentence, model_score: f64, length_norm: f64) -> Self {
        let normalized_score = normalize_score(model_score, tokens.len(), length_norm);
        Hypothesis {
            tokens,
            model_score,
            normalized_score,
            rank: 0,
            features: Vec::new(),
        }
    }

    /// Names of the systems whose lists contained this entry.
    pub fn provenance(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}

/// `score / (len + 1)^alpha`; the `+ 1` counts the EOS step. `alpha == 0`
/// returns `score` unchanged.
pub fn normalize_score(score: f64, len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        score
    } else {
        score / ((len + 1) as f64).powf(alpha)
    }
}

/// The global ranking order, best first: higher score, then shorter, then
/// lexicographically smaller tokens.
pub fn rank_cmp(score_a: f64, tokens_a: &Sentence, score_b: f64, tokens_b: &Sentence) -> Ordering {
    score_b
        .total_cmp(&score_a)
        .then_with(|| tokens_a.len().cmp(&tokens_b.len()))
        .then_with(|| tokens_a.cmp(tokens_b))
}

fn hypothesis_cmp(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    rank_cmp(a.normalized_score, &a.tokens, b.normalized_score, &b.tokens)
}

/// The ranked candidate list for one source sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NBestList {
    pub sentence_id: usize,
    pub source: Sentence,
    entries: Vec<Hypothesis>,
}

impl NBestList {
    /// Keeps `entries` in the given order, assigning ranks from 1.
    pub fn new(sentence_id: usize, source: Sentence, mut entries: Vec<Hypothesis>) -> Self {
        for (i, h) in entries.iter_mut().enumerate() {
            h.rank = i + 1;
        }
        NBestList {
            sentence_id,
            source,
            entries,
        }
    }

    /// Sorts by the global ranking order and drops repeated token sequences.
    pub fn ranked(sentence_id: usize, source: Sentence, mut entries: Vec<Hypothesis>) -> Self {
        entries.sort_by(hypothesis_cmp);
        entries.dedup_by(|a, b| a.tokens == b.tokens);
        Self::new(sentence_id, source, entries)
    }

    pub fn entries(&self) -> &[Hypothesis] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Hypothesis] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<Hypothesis> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&Hypothesis> {
        self.entries.first()
    }

    /// Sentences of the entries in rank order.
    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.entries.iter().map(|h| &h.tokens)
    }

    pub fn is_strictly_ranked(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| hypothesis_cmp(&w[0], &w[1]) == Ordering::Less)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub nbest: usize,
    /// Defaults to `2 * |source| + 5`.
    pub max_len: Option<usize>,
    pub length_norm: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 50,
            nbest: 50,
            max_len: None,
            length_norm: 0.0,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.nbest == 0 {
            return Err(Error::config("beam size and n-best size must be >= 1"));
        }
        if !(self.length_norm >= 0.0 && self.length_norm.is_finite()) {
            return Err(Error::config("length normalization exponent must be >= 0"));
        }
        Ok(())
    }

    pub fn max_len_for(&self, source: &Sentence) -> usize {
        self.max_len.unwrap_or(2 * source.len() + 5)
    }
}

/// A decoded list plus how many entries it is short of the requested size.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub list: NBestList,
    pub short_by: usize,
}

struct Partial {
    tokens: Vec<Token>,
    state: ScorerState,
    score: f64,
}

struct Candidate {
    parent: usize,
    token: Token,
    score: f64,
}

/// Standard beam search.
///
/// Each step expands every live prefix over the vocabulary and EOS, keeps the
/// `beam_size` best non-EOS extensions and moves EOS extensions that rank
/// within the top `beam_size` candidates into the finished pool. Search stops
/// once `nbest` hypotheses are finished and no live prefix can still beat the
/// `nbest`-th of them (step scores are log-probabilities, hence <= 0), or at
/// `max_len`, where every live prefix is closed with EOS.
pub fn beam_decode<S: Scorer + ?Sized>(
    scorer: &S,
    sentence_id: usize,
    source: &Sentence,
    cfg: &BeamConfig,
) -> Result<Decoded> {
    cfg.validate()?;
    let vocab = scorer.target_vocab();
    let max_len = cfg.max_len_for(source);
    let k = cfg.beam_size;
    let alpha = cfg.length_norm;
    // Upper bound factor on the normalized score of any completion.
    let bound_divisor = ((max_len + 1) as f64).powf(alpha);

    let mut live = vec![Partial {
        tokens: Vec::new(),
        state: scorer.init(source)?,
        score: 0.0,
    }];
    let mut finished: Vec<(Vec<Token>, f64, f64)> = Vec::new();

    for len in 0..=max_len {
        if live.is_empty() {
            break;
        }
        let mut candidates = Vec::new();
        for (parent, p) in live.iter().enumerate() {
            let lp = scorer.log_probs(&p.state)?;
            if len == max_len {
                candidates.push(Candidate {
                    parent,
                    token: Token::EOS,
                    score: p.score + lp[Token::EOS.index()],
                });
                continue;
            }
            for (t, &l) in lp.iter().enumerate().skip(Token::EOS.index()) {
                if l > f64::NEG_INFINITY {
                    candidates.push(Candidate {
                        parent,
                        token: Token(t as u32),
                        score: p.score + l,
                    });
                }
            }
        }
        candidates.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| (b.token == Token::EOS).cmp(&(a.token == Token::EOS)))
                .then_with(|| live[a.parent].tokens.cmp(&live[b.parent].tokens))
                .then_with(|| a.token.cmp(&b.token))
        });

        let mut next = Vec::with_capacity(k);
        for (idx, c) in candidates.iter().enumerate() {
            if idx >= k && next.len() >= k {
                break;
            }
            let parent = &live[c.parent];
            if c.token == Token::EOS {
                if idx < k {
                    let norm = crate::search::normalize_score(c.score, parent.tokens.len(), alpha);
                    finished.push((parent.tokens.clone(), c.score, norm));
                }
            } else if next.len() < k {
                let mut tokens = parent.tokens.clone();
                tokens.push(c.token);
                next.push(Partial {
                    tokens,
                    state: scorer.advance(&parent.state, c.token),
                    score: c.score,
                });
            }
        }
        live = next;

        if finished.len() >= cfg.nbest && !live.is_empty() {
            let mut norms: Vec<f64> = finished.iter().map(|f| f.2).collect();
            let (_, nth, _) = norms.select_nth_unstable_by(cfg.nbest - 1, |a, b| b.total_cmp(a));
            let best_live = live.iter().map(|p| p.score).fold(f64::NEG_INFINITY, f64::max);
            let bound = if alpha == 0.0 { best_live } else { best_live / bound_divisor };
            if bound < *nth {
                break;
            }
        }
    }

    let entries = finished
        .into_iter()
        .map(|(tokens, score, norm)| Hypothesis {
            tokens: vocab.decode(&tokens),
            model_score: score,
            normalized_score: norm,
            rank: 0,
            features: Vec::new(),
        })
        .collect();
    let mut list = NBestList::ranked(sentence_id, source.clone(), entries);
    list.entries.truncate(cfg.nbest);
    Ok(Decoded {
        short_by: cfg.nbest - list.len(),
        list,
    })
}

/// Decodes every source independently, in parallel when the `parallel`
/// feature is on. Output order follows input order.
pub fn decode_all<S: Scorer + ?Sized>(scorer: &S, sources: &[Sentence], cfg: &BeamConfig) -> Result<Vec<Decoded>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        sources
            .par_iter()
            .enumerate()
            .map(|(i, s)| beam_decode(scorer, i, s, cfg))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        sources
            .iter()
            .enumerate()
            .map(|(i, s)| beam_decode(scorer, i, s, cfg))
            .collect()
    }
}

/// Largest number of sequences [`exhaustive_decode`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

fn surface_cmp(vocab: &Vocabulary, a: &[Token], b: &[Token]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .map(|&t| vocab.surface(t))
            .cmp(b.iter().map(|&t| vocab.surface(t)))
    })
}

/// Enumerates every EOS-terminated sequence of at most `max_len` tokens and
/// returns the global top `n` by normalized score.
pub fn exhaustive_decode<S: Scorer + ?Sized>(
    scorer: &S,
    sentence_id: usize,
    source: &Sentence,
    max_len: usize,
    n: usize,
    length_norm: f64,
) -> Result<NBestList> {
    let vocab = scorer.target_vocab();
    // vocabulary plus EOS, without PAD and BOS
    let symbols = (vocab.len() - Token::EOS.index()) as u128;
    let space = symbols.checked_pow(max_len as u32).unwrap_or(u128::MAX);
    if space > EXHAUSTIVE_LIMIT {
        return Err(Error::SearchSpaceTooLarge(space));
    }
    if n == 0 {
        return Err(Error::config("n must be >= 1"));
    }

    struct Search<'a, S: ?Sized> {
        scorer: &'a S,
        vocab: &'a Vocabulary,
        max_len: usize,
        n: usize,
        alpha: f64,
        /// Sorted best first.
        top: Vec<(Vec<Token>, f64, f64)>,
    }

    impl<S: Scorer + ?Sized> Search<'_, S> {
        fn better(&self, a: &(Vec<Token>, f64, f64), b: &(Vec<Token>, f64, f64)) -> Ordering {
            b.2.total_cmp(&a.2).then_with(|| surface_cmp(self.vocab, &a.0, &b.0))
        }

        fn offer(&mut self, tokens: &[Token], score: f64) {
            let norm = normalize_score(score, tokens.len(), self.alpha);
            if self.top.len() == self.n {
                let worst = &self.top[self.n - 1];
                if norm < worst.2 {
                    return;
                }
            }
            let item = (tokens.to_vec(), score, norm);
            let pos = self
                .top
                .partition_point(|x| self.better(x, &item) == Ordering::Less);
            self.top.insert(pos, item);
            self.top.truncate(self.n);
        }

        fn visit(&mut self, tokens: &mut Vec<Token>, state: &ScorerState, score: f64) -> Result<()> {
            let lp = self.scorer.log_probs(state)?;
            self.offer(tokens, score + lp[Token::EOS.index()]);
            if tokens.len() == self.max_len {
                return Ok(());
            }
            for (t, &l) in lp.iter().enumerate().skip(Token::UNK.index()) {
                if l > f64::NEG_INFINITY {
                    let tok = Token(t as u32);
                    let next = self.scorer.advance(state, tok);
                    tokens.push(tok);
                    self.visit(tokens, &next, score + l)?;
                    tokens.pop();
                }
            }
            Ok(())
        }
    }

    let mut search = Search {
        scorer,
        vocab,
        max_len,
        n,
        alpha: length_norm,
        top: Vec::with_capacity(n + 1),
    };
    let init = scorer.init(source)?;
    search.visit(&mut Vec::new(), &init, 0.0)?;
    let entries = search
        .top
        .into_iter()
        .map(|(tokens, score, norm)| Hypothesis {
            tokens: vocab.decode(&tokens),
            model_score: score,
            normalized_score: norm,
            rank: 0,
            features: Vec::new(),
        })
        .collect();
    Ok(NBestList::ranked(sentence_id, source.clone(), entries))
}
