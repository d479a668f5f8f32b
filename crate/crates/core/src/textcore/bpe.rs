//! Word-internal byte-pair encoding: merges are learned from word frequencies and
//! replayed in creation order; every non-final piece of a word carries the
//! continuation marker.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParallelCorpus, Sentence};
use crate::error::{Error, Result};

pub const CONTINUATION_MARKER: &str = "@@";

/// Which side of the corpus the merge table is learned from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BpeSide {
    Source,
    #[default]
    Target,
    /// Both sides pooled into one table.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
}

impl BpeModel {
    pub fn new(merges: Vec<(String, String)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (i, pair) in merges.iter().enumerate() {
            if !seen.insert(pair) {
                return Err(Error::parse(i + 1, "duplicate merge pair"));
            }
        }
        Ok(BpeModel { merges })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// One merge per line, `left right`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (l, r) in &self.merges {
            let _ = writeln!(out, "{l} {r}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let merges = text
            .lines()
            .enumerate()
            .map(|(i, line)| {
                let mut parts = line.split(' ');
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                        Ok((l.to_owned(), r.to_owned()))
                    }
                    _ => Err(Error::parse(i + 1, "expected `left right`")),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(merges)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::formats::write_atomic(path, self.to_text().as_bytes())
    }

    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        for (left, right) in &self.merges {
            if symbols.len() < 2 {
                break;
            }
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }
}

/// Learns up to `num_merges` merges by repeatedly joining the most frequent
/// adjacent symbol pair. Equal frequencies go to the lexicographically smallest
/// pair.
pub fn bpe_train(corpus: &ParallelCorpus, num_merges: usize, side: BpeSide) -> BpeModel {
    let mut word_freq: BTreeMap<&str, u64> = BTreeMap::new();
    for (src, tgt) in corpus.pairs() {
        let sides: &[&Sentence] = match side {
            BpeSide::Source => &[src],
            BpeSide::Target => &[tgt],
            BpeSide::Joint => &[src, tgt],
        };
        for s in sides {
            for w in s.tokens() {
                *word_freq.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let mut words: Vec<(Vec<String>, u64)> = word_freq
        .into_iter()
        .map(|(w, f)| (w.chars().map(String::from).collect(), f))
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_merges {
        let mut pair_freq: HashMap<(&str, &str), u64> = HashMap::new();
        for (symbols, freq) in &words {
            for pair in symbols.windows(2) {
                *pair_freq
                    .entry((pair[0].as_str(), pair[1].as_str()))
                    .or_default() += freq;
            }
        }
        let Some(((left, right), _)) = pair_freq
            .into_iter()
            .max_by(|(pa, fa), (pb, fb)| fa.cmp(fb).then_with(|| pb.cmp(pa)))
        else {
            break;
        };
        let (left, right) = (left.to_owned(), right.to_owned());
        let joined = format!("{left}{right}");
        for (symbols, _) in &mut words {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = joined.clone();
                    symbols.remove(i + 1);
                }
                i += 1;
            }
        }
        merges.push((left, right));
    }
    BpeModel { merges }
}

pub fn bpe_apply(model: &BpeModel, sentence: &Sentence) -> Sentence {
    let mut out = Vec::with_capacity(sentence.len());
    for word in sentence.tokens() {
        let pieces = model.segment_word(word);
        let last = pieces.len().saturating_sub(1);
        for (i, piece) in pieces.into_iter().enumerate() {
            if i < last {
                out.push(format!("{piece}{CONTINUATION_MARKER}"));
            } else {
                out.push(piece);
            }
        }
    }
    Sentence::new(out)
}

pub fn bpe_undo(sentence: &Sentence) -> Result<Sentence> {
    let mut out = Vec::with_capacity(sentence.len());
    let mut pending = String::new();
    for piece in sentence.tokens() {
        match piece.strip_suffix(CONTINUATION_MARKER) {
            Some(stem) => pending.push_str(stem),
            None => {
                pending.push_str(piece);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() || sentence.tokens().last().is_some_and(|p| p.ends_with(CONTINUATION_MARKER)) {
        return Err(Error::DanglingContinuation);
    }
    Ok(Sentence::new(out))
}
