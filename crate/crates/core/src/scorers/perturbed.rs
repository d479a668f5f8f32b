use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Model, Scorer, ScorerState};
use crate::error::{Error, Result};
use crate::textcore::{Sentence, Token, Vocabulary};

/// Degrades a base model by adding seeded noise to its step log-probabilities
/// and renormalizing.
///
/// The noise for a token is a pure function of `(seed, source, prefix, token)`,
/// so scores do not depend on evaluation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedScorer {
    base: Box<Model>,
    sigma: f64,
    seed: u64,
}

impl PerturbedScorer {
    pub fn new(base: Model, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config("noise scale must be finite and >= 0"));
        }
        Ok(PerturbedScorer {
            base: Box::new(base),
            sigma,
            seed,
        })
    }

    pub fn base(&self) -> &Model {
        &self.base
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv_mix(mut h: u64, value: u64) -> u64 {
    for byte in value.to_le_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// splitmix64 finalizer.
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in (0, 1].
fn unit(h: u64) -> f64 {
    ((h >> 11) + 1) as f64 / (1u64 << 53) as f64
}

/// Standard normal draw keyed by `prefix_hash` and `token` (Box-Muller).
fn gaussian(prefix_hash: u64, token: Token) -> f64 {
    let h = fnv_mix(prefix_hash, token.0 as u64);
    let u1 = unit(finalize(h));
    let u2 = unit(finalize(h ^ 0x9e37_79b9_7f4a_7c15));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl Scorer for PerturbedScorer {
    fn target_vocab(&self) -> &Vocabulary {
        self.base.target_vocab()
    }

    fn init(&self, source: &Sentence) -> Result<ScorerState> {
        self.base.init(source)
    }

    fn log_probs(&self, state: &ScorerState) -> Result<Vec<f64>> {
        let mut lp = self.base.log_probs(state)?;
        if self.sigma == 0.0 {
            return Ok(lp);
        }
        let mut h = fnv_mix(FNV_OFFSET, self.seed);
        h = fnv_mix(h, state.source.len() as u64);
        for t in state.source.iter().chain([&Token::EOS]).chain(state.history.iter()) {
            h = fnv_mix(h, t.0 as u64);
        }
        for (i, v) in lp.iter_mut().enumerate() {
            if v.is_finite() {
                *v += self.sigma * gaussian(h, Token(i as u32));
            }
        }
        let norm = log_sum_exp(lp.iter().copied());
        for v in &mut lp {
            *v -= norm;
        }
        Ok(lp)
    }

    fn advance(&self, state: &ScorerState, token: Token) -> ScorerState {
        self.base.advance(state, token)
    }
}
