use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::Token;

#[derive(Debug, Clone, PartialEq, Default)]
struct ContextCounts {
    total: u64,
    counts: BTreeMap<Token, u64>,
}

/// Interpolated n-gram model with Laplace smoothing at every order.
///
/// The outcome space is UNK plus the ordinary target forms; sequence length is
/// left to the caller. Each order's estimate `(c(h, w) + a) / (c(h) + a * E)`
/// is a proper distribution over the `E` outcomes, so the interpolation is too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LmRepr", into = "LmRepr")]
pub struct NGramLm {
    order: usize,
    laplace: f64,
    weights: Vec<f64>,
    vocab_size: usize,
    /// `tables[i]` is keyed by contexts of length `i`.
    tables: Vec<HashMap<Vec<Token>, ContextCounts>>,
}

impl NGramLm {
    /// Counts every target sentence left-padded with `order - 1` BOS tokens.
    ///
    /// `weights[i]` weighs the order `i + 1` estimate; by default weights grow
    /// linearly with the order.
    pub fn train<'a>(
        sentences: impl IntoIterator<Item = &'a [Token]>,
        vocab_size: usize,
        order: usize,
        laplace: f64,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let weights = weights.unwrap_or_else(|| {
            let total = (order * (order + 1) / 2) as f64;
            (1..=order).map(|i| i as f64 / total).collect()
        });
        let mut lm = NGramLm {
            order,
            laplace,
            weights,
            vocab_size,
            tables: vec![HashMap::new(); order],
        };
        lm.validate()?;
        for sentence in sentences {
            let mut padded = vec![Token::BOS; order - 1];
            padded.extend_from_slice(sentence);
            for pos in order - 1..padded.len() {
                let word = padded[pos];
                for (len, table) in lm.tables.iter_mut().enumerate() {
                    let entry = table.entry(padded[pos - len..pos].to_vec()).or_default();
                    entry.total += 1;
                    *entry.counts.entry(word).or_default() += 1;
                }
            }
        }
        Ok(lm)
    }

    fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::config("n-gram order must be >= 1"));
        }
        if self.laplace <= 0.0 || !self.laplace.is_finite() {
            return Err(Error::config("Laplace constant must be positive"));
        }
        if self.weights.len() != self.order {
            return Err(Error::config("one interpolation weight per order required"));
        }
        if self.weights.iter().any(|w| *w < 0.0) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("interpolation weights must be non-negative and sum to 1"));
        }
        if self.vocab_size <= Token::UNK.index() {
            return Err(Error::config("vocabulary has no room for outcomes"));
        }
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn laplace(&self) -> f64 {
        self.laplace
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn outcomes(&self) -> usize {
        self.vocab_size - Token::UNK.index()
    }

    /// Probabilities indexed by token id given the preceding `order - 1`
    /// tokens (BOS-padded). PAD, BOS and EOS get zero.
    pub fn distribution(&self, context: &[Token]) -> Vec<f64> {
        debug_assert_eq!(context.len(), self.order - 1);
        let outcomes = self.outcomes() as f64;
        let mut probs = vec![0.0; self.vocab_size];
        for (len, (table, &weight)) in self.tables.iter().zip(&self.weights).enumerate() {
            if weight == 0.0 {
                continue;
            }
            let key = &context[context.len() - len..];
            let (total, counts) = match table.get(key) {
                Some(c) => (c.total as f64, Some(&c.counts)),
                None => (0.0, None),
            };
            let denom = total + self.laplace * outcomes;
            let floor = weight * self.laplace / denom;
            for p in &mut probs[Token::UNK.index()..] {
                *p += floor;
            }
            for (&tok, &c) in counts.into_iter().flatten() {
                probs[tok.index()] += weight * c as f64 / denom;
            }
        }
        probs
    }
}

#[derive(Serialize, Deserialize)]
struct LmRepr {
    order: usize,
    laplace: f64,
    weights: Vec<f64>,
    vocab_size: usize,
    /// `(context, [(token, count)])`, sorted by context length then context.
    contexts: Vec<(Vec<Token>, Vec<(Token, u64)>)>,
}

impl From<NGramLm> for LmRepr {
    fn from(lm: NGramLm) -> Self {
        let mut contexts: Vec<_> = lm
            .tables
            .into_iter()
            .flat_map(|t| t.into_iter())
            .map(|(ctx, c)| (ctx, c.counts.into_iter().collect::<Vec<_>>()))
            .collect();
        contexts.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        LmRepr {
            order: lm.order,
            laplace: lm.laplace,
            weights: lm.weights,
            vocab_size: lm.vocab_size,
            contexts,
        }
    }
}

impl TryFrom<LmRepr> for NGramLm {
    type Error = Error;

    fn try_from(r: LmRepr) -> Result<Self> {
        let mut lm = NGramLm {
            order: r.order,
            laplace: r.laplace,
            weights: r.weights,
            vocab_size: r.vocab_size,
            tables: vec![HashMap::new(); r.order],
        };
        lm.validate()?;
        for (ctx, counts) in r.contexts {
            let table = lm
                .tables
                .get_mut(ctx.len())
                .ok_or_else(|| Error::ScorerFormat("context longer than model order".into()))?;
            let counts: BTreeMap<Token, u64> = counts.into_iter().collect();
            let total = counts.values().sum();
            table.insert(ctx, ContextCounts { total, counts });
        }
        Ok(lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(ids: &[u32]) -> Vec<Token> {
        ids.iter().map(|&i| Token(i)).collect()
    }

    #[test]
    fn distributions_sum_to_one_for_seen_and_unseen_contexts() {
        let data = [toks(&[4, 5, 6]), toks(&[5, 5, 4]), toks(&[6])];
        let lm = NGramLm::train(data.iter().map(Vec::as_slice), 7, 3, 0.1, None).unwrap();
        for ctx in [toks(&[1, 1]), toks(&[4, 5]), toks(&[6, 6]), toks(&[3, 3])] {
            let p = lm.distribution(&ctx);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(&p[..3], &[0.0, 0.0, 0.0]);
            assert!(p[3..].iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn unigram_closed_form() {
        let data = [toks(&[4, 4, 5])];
        let lm = NGramLm::train(data.iter().map(Vec::as_slice), 6, 1, 0.5, None).unwrap();
        let p = lm.distribution(&[]);
        // outcomes: unk, 4, 5 -> denominator 3 + 0.5 * 3
        assert!((p[4] - 2.5 / 4.5).abs() < 1e-15);
        assert!((p[3] - 0.5 / 4.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_configurations() {
        let empty: [&[Token]; 0] = [];
        assert!(NGramLm::train(empty, 6, 0, 0.1, None).is_err());
        assert!(NGramLm::train(empty, 6, 2, 0.0, None).is_err());
        assert!(NGramLm::train(empty, 6, 2, 0.1, Some(vec![0.5])).is_err());
        assert!(NGramLm::train(empty, 6, 2, 0.1, Some(vec![0.7, 0.7])).is_err());
    }

    proptest! {
        #[test]
        fn normalized_for_any_context(
            data in proptest::collection::vec(proptest::collection::vec(3u32..9, 0..8), 0..10),
            ctx in proptest::collection::vec(1u32..9, 2),
            laplace in 0.001f64..2.0,
        ) {
            let data: Vec<Vec<Token>> = data.iter().map(|s| toks(s)).collect();
            let lm = NGramLm::train(data.iter().map(Vec::as_slice), 9, 3, laplace, None).unwrap();
            let p = lm.distribution(&toks(&ctx));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
