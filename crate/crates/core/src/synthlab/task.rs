use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textcore::{ParallelCorpus, Sentence};

const STREAM_TABLES: u64 = 1;
const STREAM_CORPUS: u64 = 2;
const STREAM_TEST: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_NOISE: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Copy,
    Reverse,
    Cipher,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(TaskKind::Copy),
            "reverse" => Ok(TaskKind::Reverse),
            "cipher" => Ok(TaskKind::Cipher),
            other => Err(Error::config(format!("unknown task kind {other:?} (copy, reverse, cipher)"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::Cipher => "cipher",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub source_vocab: usize,
    /// Only used by the cipher; copy and reverse reuse the source symbols.
    pub target_vocab: usize,
    /// Target alternatives per source symbol (cipher only).
    pub ambiguity: usize,
    /// Probability that a training target token is replaced by a random one.
    pub noise: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            kind: TaskKind::Cipher,
            source_vocab: 30,
            target_vocab: 30,
            ambiguity: 3,
            noise: 0.1,
            min_len: 5,
            max_len: 15,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.source_vocab == 0 || self.target_vocab == 0 {
            return Err(Error::config("vocabularies must be non-empty"));
        }
        if self.ambiguity == 0 {
            return Err(Error::config("ambiguity must be >= 1"));
        }
        if self.kind == TaskKind::Cipher && self.ambiguity > self.target_vocab {
            return Err(Error::config("ambiguity cannot exceed the target vocabulary"));
        }
        if self.kind == TaskKind::Cipher && self.ambiguity == 1 && self.target_vocab < self.source_vocab {
            return Err(Error::config("an unambiguous cipher needs target_vocab >= source_vocab"));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::config("noise must lie in [0, 1)"));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::config("length range must satisfy 1 <= min_len <= max_len"));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn target_count(&self) -> usize {
        match self.kind {
            TaskKind::Cipher => self.target_vocab,
            _ => self.source_vocab,
        }
    }

    fn target_surface(&self, j: usize) -> String {
        match self.kind {
            TaskKind::Cipher => format!("t{j}"),
            _ => format!("s{j}"),
        }
    }
}

/// The seeded cipher: `k` target alternatives per source symbol with
/// row-stochastic weights, and a preference over target bigrams. Symbol 0 of
/// the preference context is the sentence start.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherTable {
    pub alternatives: Vec<Vec<usize>>,
    pub weights: Vec<Vec<f64>>,
    pub preference: Vec<Vec<f64>>,
}

impl CipherTable {
    pub fn new(spec: &TaskSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = spec.rng(STREAM_TABLES);
        let (vs, vt, k) = (spec.source_vocab, spec.target_vocab, spec.ambiguity);
        let alternatives: Vec<Vec<usize>> = if k == 1 {
            index::sample(&mut rng, vt, vs).into_iter().map(|j| vec![j]).collect()
        } else {
            (0..vs).map(|_| index::sample(&mut rng, vt, k).into_vec()).collect()
        };
        let weights = (0..vs)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            })
            .collect();
        let preference = (0..=vt)
            .map(|_| (0..vt).map(|_| rng.gen_range(-2.0f64..2.0).exp()).collect())
            .collect();
        Ok(CipherTable {
            alternatives,
            weights,
            preference,
        })
    }

    /// Target symbols for a source sequence: each position takes the
    /// alternative with the largest weight times preference for following the
    /// previous pick.
    fn encipher(&self, source: &[usize]) -> Vec<usize> {
        let mut prev = 0;
        source
            .iter()
            .map(|&s| {
                let mut best = (self.alternatives[s][0], f64::NEG_INFINITY);
                for (&t, w) in self.alternatives[s].iter().zip(&self.weights[s]) {
                    let score = w * self.preference[prev][t];
                    if score > best.1 {
                        best = (t, score);
                    }
                }
                prev = best.0 + 1;
                best.0
            })
            .collect()
    }
}

struct Generator<'a> {
    spec: &'a TaskSpec,
    table: Option<CipherTable>,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a TaskSpec) -> Result<Self> {
        spec.validate()?;
        let table = match spec.kind {
            TaskKind::Cipher => Some(CipherTable::new(spec)?),
            _ => None,
        };
        Ok(Generator { spec, table })
    }

    fn pair(&self, rng: &mut ChaCha8Rng) -> (Sentence, Sentence) {
        let len = rng.gen_range(self.spec.min_len..=self.spec.max_len);
        let source: Vec<usize> = (0..len).map(|_| rng.gen_range(0..self.spec.source_vocab)).collect();
        let target = match (self.spec.kind, &self.table) {
            (TaskKind::Cipher, Some(table)) => table.encipher(&source),
            (TaskKind::Reverse, _) => source.iter().rev().copied().collect(),
            _ => source.clone(),
        };
        (
            source.iter().map(|i| format!("s{i}")).collect(),
            target.iter().map(|&j| self.spec.target_surface(j)).collect(),
        )
    }
}

/// Clean pairs drawn from the task.
pub fn gen_corpus(spec: &TaskSpec, size: usize) -> Result<ParallelCorpus> {
    if size == 0 {
        return Err(Error::config("corpus size must be >= 1"));
    }
    let generator = Generator::new(spec)?;
    let mut rng = spec.rng(STREAM_CORPUS);
    ParallelCorpus::new(
        format!("{}-{}", spec.kind, spec.seed),
        (0..size).map(|_| generator.pair(&mut rng)).collect(),
    )
}

/// A clean test set and a noisy training pool whose sources never occur in
/// the test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub test: ParallelCorpus,
    pub train: ParallelCorpus,
}

pub fn gen_split(spec: &TaskSpec, test_size: usize, train_size: usize) -> Result<Split> {
    if test_size == 0 || train_size == 0 {
        return Err(Error::config("test and training sizes must be >= 1"));
    }
    let generator = Generator::new(spec)?;
    let mut rng = spec.rng(STREAM_TEST);
    let test: Vec<_> = (0..test_size).map(|_| generator.pair(&mut rng)).collect();
    let held_out: HashSet<&Sentence> = test.iter().map(|(s, _)| s).collect();

    let mut rng = spec.rng(STREAM_TRAIN);
    let mut train = Vec::with_capacity(train_size);
    let budget = train_size.saturating_mul(100).max(10_000);
    for _ in 0..budget {
        if train.len() == train_size {
            break;
        }
        let pair = generator.pair(&mut rng);
        if !held_out.contains(&pair.0) {
            train.push(pair);
        }
    }
    if train.len() < train_size {
        return Err(Error::config(format!(
            "could only draw {} training pairs disjoint from the test set",
            train.len()
        )));
    }
    let train = add_noise(spec, train);
    Ok(Split {
        test: ParallelCorpus::new("test", test)?,
        train: ParallelCorpus::new("train", train)?,
    })
}

fn add_noise(spec: &TaskSpec, pairs: Vec<(Sentence, Sentence)>) -> Vec<(Sentence, Sentence)> {
    if spec.noise == 0.0 {
        return pairs;
    }
    let mut rng = spec.rng(STREAM_NOISE);
    let count = spec.target_count();
    pairs
        .into_iter()
        .map(|(src, tgt)| {
            let tgt = tgt
                .into_tokens()
                .into_iter()
                .map(|w| {
                    if rng.gen::<f64>() < spec.noise {
                        spec.target_surface(rng.gen_range(0..count))
                    } else {
                        w
                    }
                })
                .collect::<Vec<_>>();
            (src, Sentence::new(tgt))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textcore::reverse_target;

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            kind,
            seed: 11,
            ..TaskSpec::default()
        }
    }

    #[test]
    fn copy_and_reverse_references() {
        let c = gen_corpus(&spec(TaskKind::Copy), 200).unwrap();
        assert!(c.pairs().iter().all(|(s, r)| s == r));
        let r = gen_corpus(&spec(TaskKind::Reverse), 200).unwrap();
        assert!(r.pairs().iter().all(|(s, t)| reverse_target(s) == *t));
    }

    #[test]
    fn lengths_respect_range() {
        let c = gen_corpus(&spec(TaskKind::Cipher), 300).unwrap();
        for (s, r) in c.pairs() {
            assert!((5..=15).contains(&s.len()));
            assert_eq!(s.len(), r.len());
        }
    }

    #[test]
    fn cipher_table_is_row_stochastic_with_distinct_alternatives() {
        let t = CipherTable::new(&spec(TaskKind::Cipher)).unwrap();
        for (alts, w) in t.alternatives.iter().zip(&t.weights) {
            assert_eq!(alts.len(), 3);
            assert_eq!(alts.iter().collect::<HashSet<_>>().len(), 3);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn unambiguous_cipher_is_a_bijection() {
        let s = TaskSpec {
            ambiguity: 1,
            ..spec(TaskKind::Cipher)
        };
        let t = CipherTable::new(&s).unwrap();
        let images: HashSet<usize> = t.alternatives.iter().map(|a| a[0]).collect();
        assert_eq!(images.len(), s.source_vocab);
        let c = gen_corpus(&s, 100).unwrap();
        let mut map = std::collections::HashMap::new();
        for (src, tgt) in c.pairs() {
            for (a, b) in src.tokens().iter().zip(tgt.tokens()) {
                assert_eq!(map.entry(a.clone()).or_insert_with(|| b.clone()), b);
            }
        }
    }

    #[test]
    fn cipher_references_use_the_alternatives() {
        let s = spec(TaskKind::Cipher);
        let t = CipherTable::new(&s).unwrap();
        let c = gen_corpus(&s, 100).unwrap();
        for (src, tgt) in c.pairs() {
            for (a, b) in src.tokens().iter().zip(tgt.tokens()) {
                let i: usize = a[1..].parse().unwrap();
                let j: usize = b[1..].parse().unwrap();
                assert!(t.alternatives[i].contains(&j));
            }
        }
    }

    #[test]
    fn generation_is_a_function_of_the_seed() {
        let s = spec(TaskKind::Cipher);
        assert_eq!(gen_corpus(&s, 50).unwrap(), gen_corpus(&s, 50).unwrap());
        let other = TaskSpec { seed: 12, ..s };
        assert_ne!(gen_corpus(&s, 50).unwrap(), gen_corpus(&other, 50).unwrap());
        assert_eq!(gen_split(&s, 40, 80).unwrap(), gen_split(&s, 40, 80).unwrap());
    }

    #[test]
    fn split_keeps_test_sources_out_of_training() {
        let s = TaskSpec {
            source_vocab: 2,
            min_len: 2,
            max_len: 4,
            ..spec(TaskKind::Copy)
        };
        let split = gen_split(&s, 10, 200).unwrap();
        let test: HashSet<String> = split.test.sources().map(|x| x.to_string()).collect();
        assert!(split.train.sources().all(|x| !test.contains(&x.to_string())));
        assert_eq!(split.train.len(), 200);
    }

    #[test]
    fn noise_touches_training_targets_only() {
        let s = TaskSpec {
            noise: 0.3,
            ..spec(TaskKind::Copy)
        };
        let split = gen_split(&s, 100, 400).unwrap();
        assert!(split.test.pairs().iter().all(|(a, b)| a == b));
        let (mut changed, mut total) = (0usize, 0usize);
        for (a, b) in split.train.pairs() {
            assert_eq!(a.len(), b.len());
            total += a.len();
            changed += a.tokens().iter().zip(b.tokens()).filter(|(x, y)| x != y).count();
        }
        let rate = changed as f64 / total as f64;
        // a replacement can draw the original symbol back
        let expected = 0.3 * 29.0 / 30.0;
        assert!((rate - expected).abs() < 0.03, "rate {rate}");
    }

    #[test]
    fn exhausted_source_space_is_reported() {
        let s = TaskSpec {
            source_vocab: 1,
            min_len: 1,
            max_len: 1,
            ..spec(TaskKind::Copy)
        };
        assert!(gen_split(&s, 1, 5).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = spec(TaskKind::Cipher);
        for bad in [
            TaskSpec { ambiguity: 0, ..base },
            TaskSpec { noise: 1.0, ..base },
            TaskSpec { min_len: 0, ..base },
            TaskSpec { min_len: 9, max_len: 3, ..base },
            TaskSpec { ambiguity: 31, ..base },
        ] {
            assert!(gen_corpus(&bad, 5).is_err());
        }
    }
}
