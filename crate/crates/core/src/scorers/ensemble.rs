use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Model, Scorer, ScorerState};
use crate::error::{Error, Result};
use crate::textcore::{Sentence, Token, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Step score `sum_i w_i * ln p_i`. Not a distribution; meant for rescoring.
    LogprobSum,
    /// Step distribution `normalize(sum_i w_i * p_i)`; usable inside search.
    ProbAvg,
}

/// Weighted combination of member models over the union of their target
/// vocabularies. Forms a member does not know are scored as that member's UNK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnsembleRepr", into = "EnsembleRepr")]
pub struct Ensemble {
    members: Vec<Model>,
    weights: Vec<f64>,
    mode: EnsembleMode,
    target_vocab: Vocabulary,
    /// `maps[i][t]`: member `i`'s id for ensemble token `t`.
    maps: Vec<Vec<Token>>,
    identity_maps: bool,
}

pub fn ensemble(members: Vec<Model>, weights: Vec<f64>, mode: EnsembleMode) -> Result<Ensemble> {
    if members.is_empty() {
        return Err(Error::config("ensemble needs at least one member"));
    }
    if members.len() != weights.len() {
        return Err(Error::config(format!(
            "{} members but {} weights",
            members.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::config("ensemble weights must be finite and >= 0"));
    }
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::config("all ensemble weights are zero"));
    }
    let first = members[0].target_vocab();
    let identity_maps = members.iter().all(|m| m.target_vocab() == first);
    let target_vocab = if identity_maps {
        first.clone()
    } else {
        Vocabulary::from_surfaces(members.iter().flat_map(|m| m.target_vocab().surfaces().iter()))
    };
    let maps = members
        .iter()
        .map(|m| {
            let mv = m.target_vocab();
            target_vocab
                .surfaces()
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    if i <= Token::UNK.index() {
                        Token(i as u32)
                    } else {
                        mv.id(s)
                    }
                })
                .collect()
        })
        .collect();
    Ok(Ensemble {
        members,
        weights,
        mode,
        target_vocab,
        maps,
        identity_maps,
    })
}

impl Ensemble {
    pub fn members(&self) -> &[Model] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mode(&self) -> EnsembleMode {
        self.mode
    }

    fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.members.len()).filter(|&i| self.weights[i] > 0.0)
    }
}

impl Scorer for Ensemble {
    fn target_vocab(&self) -> &Vocabulary {
        &self.target_vocab
    }

    fn init(&self, source: &Sentence) -> Result<ScorerState> {
        if source.is_empty() {
            return Err(Error::EmptySource);
        }
        let mut state = ScorerState::new(Vec::new().into());
        state.members = self
            .members
            .iter()
            .map(|m| m.init(source))
            .collect::<Result<_>>()?;
        Ok(state)
    }

    fn log_probs(&self, state: &ScorerState) -> Result<Vec<f64>> {
        if state.closed {
            return Err(Error::SequenceClosed);
        }
        let member_lps: Vec<(usize, Vec<f64>)> = self
            .active()
            .map(|i| Ok((i, self.members[i].log_probs(&state.members[i])?)))
            .collect::<Result<_>>()?;
        if self.mode == EnsembleMode::ProbAvg && member_lps.len() == 1 && self.identity_maps {
            return Ok(member_lps.into_iter().next().map(|(_, lp)| lp).unwrap_or_default());
        }

        let mut out = vec![f64::NEG_INFINITY; self.target_vocab.len()];
        for (t, slot) in out.iter_mut().enumerate().skip(Token::EOS.index()) {
            let terms = member_lps
                .iter()
                .map(|(i, lp)| (self.weights[*i], lp[self.maps[*i][t].index()]));
            *slot = match self.mode {
                EnsembleMode::LogprobSum => terms
                    .map(|(w, lp)| w * lp)
                    .reduce(|a, b| a + b)
                    .unwrap_or(f64::NEG_INFINITY),
                EnsembleMode::ProbAvg => {
                    let max = terms.clone().map(|(_, lp)| lp).fold(f64::NEG_INFINITY, f64::max);
                    if max == f64::NEG_INFINITY {
                        max
                    } else {
                        max + terms.map(|(w, lp)| w * (lp - max).exp()).sum::<f64>().ln()
                    }
                }
            };
        }
        if self.mode == EnsembleMode::ProbAvg {
            let norm = log_sum_exp(out.iter().copied());
            for v in &mut out {
                *v -= norm;
            }
        }
        Ok(out)
    }

    fn advance(&self, state: &ScorerState, token: Token) -> ScorerState {
        let mut next = state.pushed(token);
        next.members = self
            .members
            .iter()
            .zip(&state.members)
            .zip(&self.maps)
            .map(|((m, s), map)| m.advance(s, map[token.index()]))
            .collect();
        next
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleRepr {
    mode: EnsembleMode,
    weights: Vec<f64>,
    members: Vec<Model>,
}

impl From<Ensemble> for EnsembleRepr {
    fn from(e: Ensemble) -> Self {
        EnsembleRepr {
            mode: e.mode,
            weights: e.weights,
            members: e.members,
        }
    }
}

impl TryFrom<EnsembleRepr> for Ensemble {
    type Error = Error;

    fn try_from(r: EnsembleRepr) -> Result<Self> {
        ensemble(r.members, r.weights, r.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::testing::*;
    use crate::scorers::{channel_train, score_sequence, ChannelConfig, PerturbedScorer};

    fn other_channel() -> Model {
        let c = corpus(&[("a b", "x x"), ("c", "v"), ("b a c", "y x v")]);
        channel_train(&c, &ChannelConfig::default()).unwrap().into()
    }

    #[test]
    fn single_member_is_identical_in_both_modes() {
        let m: Model = toy_channel().into();
        let (src, tgt): (Sentence, Sentence) = ("a b c".into(), "x y z".into());
        let base = score_sequence(&m, &src, &tgt).unwrap();
        for mode in [EnsembleMode::LogprobSum, EnsembleMode::ProbAvg] {
            let e = ensemble(vec![m.clone()], vec![1.0], mode).unwrap();
            assert_eq!(score_sequence(&e, &src, &tgt).unwrap().to_bits(), base.to_bits());
        }
    }

    #[test]
    fn degenerate_weights_select_first_member() {
        let a: Model = toy_channel().into();
        let b = other_channel();
        let (src, tgt): (Sentence, Sentence) = ("a b".into(), "x y".into());
        let e = ensemble(vec![a.clone(), b], vec![1.0, 0.0], EnsembleMode::LogprobSum).unwrap();
        assert_eq!(
            score_sequence(&e, &src, &tgt).unwrap().to_bits(),
            score_sequence(&a, &src, &tgt).unwrap().to_bits()
        );
    }

    #[test]
    fn identical_members_scale_the_score() {
        let m: Model = toy_channel().into();
        let e = ensemble(vec![m.clone(); 3], vec![1.0; 3], EnsembleMode::LogprobSum).unwrap();
        let src: Sentence = "a c".into();
        for tgt in ["x z", "x y", "w"] {
            let single = score_sequence(&m, &src, &tgt.into()).unwrap();
            let total = score_sequence(&e, &src, &tgt.into()).unwrap();
            assert!((total - 3.0 * single).abs() < 1e-9);
        }
    }

    #[test]
    fn prob_avg_renormalizes_over_union_vocabulary() {
        let e = ensemble(vec![toy_channel().into(), other_channel()], vec![0.5, 0.5], EnsembleMode::ProbAvg).unwrap();
        assert!(e.target_vocab().get("v").is_some());
        assert!(e.target_vocab().get("w").is_some());
        let mut state = e.init(&"a b c".into()).unwrap();
        for tok in ["x", "v", "w"] {
            assert_normalized(&e, &state);
            state = e.advance(&state, e.target_vocab().id(tok));
        }
    }

    #[test]
    fn symmetric_average_of_two_token_distributions() {
        // Two perturbations of a one-word model give some pair of distributions;
        // average them by hand and compare.
        let c = corpus(&[("a", "x")]);
        let base: Model = channel_train(&c, &ChannelConfig::default()).unwrap().into();
        let p1: Model = PerturbedScorer::new(base.clone(), 1.0, 1).unwrap().into();
        let p2: Model = PerturbedScorer::new(base, 1.0, 2).unwrap().into();
        let e = ensemble(vec![p1.clone(), p2.clone()], vec![0.5, 0.5], EnsembleMode::ProbAvg).unwrap();
        let src: Sentence = "a".into();
        let (s1, s2, se) = (p1.init(&src).unwrap(), p2.init(&src).unwrap(), e.init(&src).unwrap());
        let (l1, l2, le) = (p1.log_probs(&s1).unwrap(), p2.log_probs(&s2).unwrap(), e.log_probs(&se).unwrap());
        for t in 2..le.len() {
            let expected = 0.5 * l1[t].exp() + 0.5 * l2[t].exp();
            assert!((le[t].exp() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let m: Model = toy_channel().into();
        assert!(ensemble(vec![], vec![], EnsembleMode::ProbAvg).is_err());
        assert!(ensemble(vec![m.clone()], vec![0.0], EnsembleMode::ProbAvg).is_err());
        assert!(ensemble(vec![m.clone()], vec![1.0, 1.0], EnsembleMode::ProbAvg).is_err());
        assert!(ensemble(vec![m], vec![-1.0], EnsembleMode::LogprobSum).is_err());
    }

    #[test]
    fn logprob_sum_ranking_matches_weighted_sum() {
        let a: Model = toy_channel().into();
        let b = other_channel();
        let w = [0.3, 1.7];
        let e = ensemble(vec![a.clone(), b.clone()], w.to_vec(), EnsembleMode::LogprobSum).unwrap();
        let src: Sentence = "a b".into();
        let hyps: Vec<Sentence> = ["x y", "x x", "y w x"].map(Sentence::parse).to_vec();
        let by_ensemble: Vec<f64> = hyps.iter().map(|h| score_sequence(&e, &src, h).unwrap()).collect();
        let by_hand: Vec<f64> = hyps
            .iter()
            .map(|h| w[0] * score_sequence(&a, &src, h).unwrap() + w[1] * score_sequence(&b, &src, h).unwrap())
            .collect();
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        assert_eq!(argmax(&by_ensemble), argmax(&by_hand));
        for (x, y) in by_ensemble.iter().zip(&by_hand) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
