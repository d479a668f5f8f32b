//! Corpus BLEU, smoothed sentence BLEU and oracle selection over n-best lists.

use std::collections::HashMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{Hypothesis, NBestList};
use crate::textcore::Sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    None,
    /// Add one to numerator and denominator of every precision of order >= 2.
    AddOneForNGe2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
    pub smoothing: Smoothing,
    pub case_sensitive: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            smoothing: Smoothing::None,
            case_sensitive: true,
        }
    }
}

impl BleuConfig {
    /// The configuration used for sentence-level scoring and oracle selection.
    pub fn sentence_level() -> Self {
        BleuConfig::default().with_smoothing(Smoothing::AddOneForNGe2)
    }

    pub fn with_smoothing(self, smoothing: Smoothing) -> Self {
        BleuConfig { smoothing, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::config("BLEU max order must be >= 1"));
        }
        Ok(())
    }
}

/// Sufficient statistics for BLEU. Statistics of a corpus are the sum of the
/// statistics of its sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn zero(max_order: usize) -> Self {
        BleuStats {
            matches: vec![0; max_order],
            totals: vec![0; max_order],
            hyp_len: 0,
            ref_len: 0,
        }
    }
}

impl AddAssign<&BleuStats> for BleuStats {
    fn add_assign(&mut self, rhs: &BleuStats) {
        if self.matches.len() < rhs.matches.len() {
            self.matches.resize(rhs.matches.len(), 0);
            self.totals.resize(rhs.totals.len(), 0);
        }
        for (a, b) in self.matches.iter_mut().zip(&rhs.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&rhs.totals) {
            *a += b;
        }
        self.hyp_len += rhs.hyp_len;
        self.ref_len += rhs.ref_len;
    }
}

impl Add<&BleuStats> for BleuStats {
    type Output = BleuStats;

    fn add(mut self, rhs: &BleuStats) -> BleuStats {
        self += rhs;
        self
    }
}

impl<'a> std::iter::Sum<&'a BleuStats> for BleuStats {
    fn sum<I: Iterator<Item = &'a BleuStats>>(iter: I) -> Self {
        iter.fold(BleuStats::default(), |acc, s| acc + s)
    }
}

fn normalized(sentence: &Sentence, cfg: &BleuConfig) -> Vec<String> {
    if cfg.case_sensitive {
        sentence.tokens().to_vec()
    } else {
        sentence.tokens().iter().map(|t| t.to_lowercase()).collect()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

pub fn bleu_stats(hypothesis: &Sentence, reference: &Sentence, cfg: &BleuConfig) -> Result<BleuStats> {
    cfg.validate()?;
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let hyp = normalized(hypothesis, cfg);
    let reference = normalized(reference, cfg);
    let mut stats = BleuStats::zero(cfg.max_order);
    stats.hyp_len = hyp.len() as u64;
    stats.ref_len = reference.len() as u64;
    for n in 1..=cfg.max_order {
        let ref_counts = ngram_counts(&reference, n);
        let hyp_counts = ngram_counts(&hyp, n);
        stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        stats.matches[n - 1] = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    Ok(stats)
}

/// BLEU from accumulated statistics, in [0, 1].
pub fn corpus_bleu(stats: &BleuStats, cfg: &BleuConfig) -> f64 {
    if stats.hyp_len == 0 {
        return 0.0;
    }
    let mut log_precision = 0.0;
    for n in 0..cfg.max_order {
        let m = stats.matches.get(n).copied().unwrap_or(0) as f64;
        let t = stats.totals.get(n).copied().unwrap_or(0) as f64;
        let (m, t) = match cfg.smoothing {
            Smoothing::AddOneForNGe2 if n >= 1 => (m + 1.0, t + 1.0),
            _ => (m, t),
        };
        if m == 0.0 || t == 0.0 {
            return 0.0;
        }
        log_precision += (m / t).ln();
    }
    let c = stats.hyp_len as f64;
    let r = stats.ref_len as f64;
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    brevity * (log_precision / cfg.max_order as f64).exp()
}

pub fn sentence_bleu(hypothesis: &Sentence, reference: &Sentence, cfg: &BleuConfig) -> Result<f64> {
    Ok(corpus_bleu(&bleu_stats(hypothesis, reference, cfg)?, cfg))
}

/// Entry of `list` with maximal sentence BLEU against `reference`; ties go to
/// the lower rank (earlier entry).
pub fn oracle_select<'a>(
    list: &'a NBestList,
    reference: &Sentence,
    cfg: &BleuConfig,
) -> Result<(&'a Hypothesis, f64)> {
    let mut best: Option<(&Hypothesis, f64)> = None;
    for hyp in list.entries() {
        let score = sentence_bleu(&hyp.tokens, reference, cfg)?;
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((hyp, score));
        }
    }
    best.ok_or(Error::EmptyList)
}

/// Corpus BLEU (with `cfg`) of the per-sentence oracle choices, where each
/// choice maximizes add-one-smoothed sentence BLEU.
///
/// Selection is greedy per sentence, so the result is a lower bound on the
/// corpus-optimal selection.
pub fn oracle_corpus_bleu(lists: &[NBestList], references: &[Sentence], cfg: &BleuConfig) -> Result<f64> {
    let selections = oracle_selections(lists, references, cfg)?;
    let mut total = BleuStats::zero(cfg.max_order);
    for (hyp, reference) in selections.iter().zip(references) {
        total += &bleu_stats(&hyp.tokens, reference, cfg)?;
    }
    Ok(corpus_bleu(&total, cfg))
}

/// The per-sentence oracle choices behind [`oracle_corpus_bleu`].
pub fn oracle_selections<'a>(
    lists: &'a [NBestList],
    references: &[Sentence],
    cfg: &BleuConfig,
) -> Result<Vec<&'a Hypothesis>> {
    if lists.len() != references.len() {
        return Err(Error::Misaligned {
            left: lists.len(),
            right: references.len(),
        });
    }
    if lists.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let sentence_cfg = cfg.with_smoothing(Smoothing::AddOneForNGe2);
    lists
        .iter()
        .zip(references)
        .map(|(list, reference)| oracle_select(list, reference, &sentence_cfg).map(|(h, _)| h))
        .collect()
}

/// Corpus BLEU of `hypotheses` against aligned `references`.
pub fn corpus_bleu_of<'a>(
    hypotheses: impl IntoIterator<Item = &'a Sentence>,
    references: &[Sentence],
    cfg: &BleuConfig,
) -> Result<f64> {
    let mut total = BleuStats::zero(cfg.max_order);
    let mut count = 0;
    for (hyp, reference) in hypotheses.into_iter().zip(references) {
        total += &bleu_stats(hyp, reference, cfg)?;
        count += 1;
    }
    if count != references.len() {
        return Err(Error::Misaligned {
            left: count,
            right: references.len(),
        });
    }
    if count == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(corpus_bleu(&total, cfg))
}

/// Formats a [0, 1] score as a two-decimal percentage.
pub fn percent(score: f64) -> String {
    format!("{:.2}", score * 100.0)
}
