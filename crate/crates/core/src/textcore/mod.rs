//! Tokens, vocabularies, parallel corpora, subword segmentation and target-order
//! transforms.

mod bpe;

pub use bpe::{bpe_apply, bpe_train, bpe_undo, BpeModel, BpeSide, CONTINUATION_MARKER};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u32);

impl Token {
    pub const PAD: Token = Token(0);
    pub const BOS: Token = Token(1);
    pub const EOS: Token = Token(2);
    pub const UNK: Token = Token(3);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_reserved(self) -> bool {
        self.0 < RESERVED.len() as u32
    }
}

/// Surface forms of the four reserved ids, in id order.
pub const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// A whitespace-tokenized sentence, kept in surface form.
///
/// Scorers map surfaces to their own vocabulary ids on the fly, so the same
/// hypothesis can be rescored by models trained on different data.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Sentence(tokens)
    }

    pub const fn empty() -> Self {
        Sentence(Vec::new())
    }

    pub fn parse(line: &str) -> Self {
        Sentence(line.split_whitespace().map(str::to_owned).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl From<&str> for Sentence {
    fn from(line: &str) -> Self {
        Sentence::parse(line)
    }
}

impl<'a> FromIterator<&'a str> for Sentence {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        Sentence(iter.into_iter().map(str::to_owned).collect())
    }
}

impl FromIterator<String> for Sentence {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Sentence(iter.into_iter().collect())
    }
}

/// Reverses token order. Applying it twice is the identity.
pub fn reverse_target(sentence: &Sentence) -> Sentence {
    Sentence(sentence.0.iter().rev().cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// Surface-form table with the reserved block at ids 0..4 followed by the
/// remaining forms in sorted order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    surfaces: Vec<String>,
    index: HashMap<String, Token>,
}

impl Vocabulary {
    /// Builds a vocabulary from arbitrary surface forms; duplicates and reserved
    /// forms are dropped.
    pub fn from_surfaces<I, S>(surfaces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let sorted: BTreeSet<String> = surfaces
            .into_iter()
            .map(|s| s.as_ref().to_owned())
            .filter(|s| !RESERVED.contains(&s.as_str()))
            .collect();
        let all = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(sorted)
            .collect();
        Self::from_ordered(all)
    }

    fn from_ordered(surfaces: Vec<String>) -> Self {
        let index = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), Token(i as u32)))
            .collect();
        Vocabulary { surfaces, index }
    }

    pub fn build(corpus: &ParallelCorpus, side: Side) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let words = corpus
            .pairs()
            .iter()
            .flat_map(|(src, tgt)| match side {
                Side::Source => src.tokens(),
                Side::Target => tgt.tokens(),
            })
            .map(String::as_str);
        Ok(Self::from_surfaces(words))
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<Token> {
        self.index.get(surface).copied()
    }

    /// Id of `surface`, or UNK. Reserved forms other than `<unk>` also map to UNK.
    pub fn id(&self, surface: &str) -> Token {
        match self.get(surface) {
            Some(t) if t == Token::UNK || !t.is_reserved() => t,
            _ => Token::UNK,
        }
    }

    pub fn surface(&self, token: Token) -> &str {
        &self.surfaces[token.index()]
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    /// Ids that can appear inside a sentence: UNK plus every ordinary form.
    pub fn content_tokens(&self) -> impl Iterator<Item = Token> {
        (Token::UNK.0..self.surfaces.len() as u32).map(Token)
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<Token> {
        sentence.tokens().iter().map(|s| self.id(s)).collect()
    }

    pub fn decode(&self, tokens: &[Token]) -> Sentence {
        Sentence(tokens.iter().map(|&t| self.surface(t).to_owned()).collect())
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;

    fn try_from(surfaces: Vec<String>) -> std::result::Result<Self, String> {
        if surfaces.len() < RESERVED.len()
            || surfaces.iter().zip(RESERVED).any(|(a, b)| a != b)
        {
            return Err("vocabulary must start with the reserved block".into());
        }
        let unique: BTreeSet<&String> = surfaces.iter().collect();
        if unique.len() != surfaces.len() {
            return Err("duplicate surface form in vocabulary".into());
        }
        Ok(Self::from_ordered(surfaces))
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.surfaces
    }
}

/// Sentence-aligned source/reference pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    name: String,
    pairs: Vec<(Sentence, Sentence)>,
}

impl ParallelCorpus {
    pub fn new(name: impl Into<String>, pairs: Vec<(Sentence, Sentence)>) -> Result<Self> {
        if let Some(i) = pairs.iter().position(|(src, _)| src.is_empty()) {
            return Err(Error::parse(i + 1, "empty source sentence"));
        }
        Ok(ParallelCorpus {
            name: name.into(),
            pairs,
        })
    }

    pub fn from_sides(
        name: impl Into<String>,
        sources: Vec<Sentence>,
        references: Vec<Sentence>,
    ) -> Result<Self> {
        if sources.len() != references.len() {
            return Err(Error::Misaligned {
                left: sources.len(),
                right: references.len(),
            });
        }
        Self::new(name, sources.into_iter().zip(references).collect())
    }

    /// Reads two line-aligned UTF-8 files.
    pub fn read(name: impl Into<String>, source: &Path, reference: &Path) -> Result<Self> {
        Self::from_sides(name, read_sentences(source)?, read_sentences(reference)?)
    }

    pub fn write(&self, source: &Path, reference: &Path) -> Result<()> {
        write_sentences(source, self.sources())?;
        write_sentences(reference, self.references())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pairs(&self) -> &[(Sentence, Sentence)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(s, _)| s)
    }

    pub fn references(&self) -> impl Iterator<Item = &Sentence> {
        self.pairs.iter().map(|(_, r)| r)
    }

    /// First `n` pairs under a new name.
    pub fn prefix(&self, name: impl Into<String>, n: usize) -> Self {
        ParallelCorpus {
            name: name.into(),
            pairs: self.pairs[..n.min(self.pairs.len())].to_vec(),
        }
    }

    /// Same corpus with every reference reversed.
    pub fn with_reversed_targets(&self) -> Self {
        ParallelCorpus {
            name: format!("{}.rev", self.name),
            pairs: self
                .pairs
                .iter()
                .map(|(s, r)| (s.clone(), reverse_target(r)))
                .collect(),
        }
    }
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(Sentence::parse).collect())
}

pub fn write_sentences<'a>(
    path: &Path,
    sentences: impl IntoIterator<Item = &'a Sentence>,
) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.to_string());
        out.push('\n');
    }
    crate::formats::write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(lines: &[(&str, &str)]) -> ParallelCorpus {
        ParallelCorpus::new(
            "t",
            lines.iter().map(|(s, t)| ((*s).into(), (*t).into())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn target_vocabulary_enumerates_distinct_symbols() {
        let c = corpus(&[("x", "a b"), ("y", "b c")]);
        let v = Vocabulary::build(&c, Side::Target).unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(
            v.surfaces(),
            &["<pad>", "<s>", "</s>", "<unk>", "a", "b", "c"]
        );
    }

    #[test]
    fn repeated_symbol_counted_once() {
        let c = corpus(&[("x x x", "y")]);
        assert_eq!(Vocabulary::build(&c, Side::Source).unwrap().len(), 5);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let c = ParallelCorpus::new("empty", vec![]).unwrap();
        assert!(matches!(
            Vocabulary::build(&c, Side::Target),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn empty_source_is_rejected() {
        assert!(ParallelCorpus::new("bad", vec![("".into(), "a".into())]).is_err());
    }

    #[test]
    fn unknown_and_reserved_surfaces_map_to_unk() {
        let v = Vocabulary::from_surfaces(["a", "b"]);
        assert_eq!(v.id("zzz"), Token::UNK);
        assert_eq!(v.id("</s>"), Token::UNK);
        assert_eq!(v.id("<unk>"), Token::UNK);
        assert_eq!(v.id("b"), Token(5));
    }

    #[test]
    fn serde_rejects_vocabulary_without_reserved_block() {
        assert!(Vocabulary::try_from(vec!["a".to_string()]).is_err());
        let v = Vocabulary::from_surfaces(["q"]);
        let back = Vocabulary::try_from(Vec::<String>::from(v.clone())).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn reverse_examples() {
        assert_eq!(reverse_target(&"a b c".into()), Sentence::parse("c b a"));
        assert_eq!(reverse_target(&Sentence::default()), Sentence::default());
    }

    proptest! {
        #[test]
        fn reverse_is_an_involution(words in proptest::collection::vec("[a-d]{1,3}", 0..12)) {
            let s = Sentence::new(words);
            let r = reverse_target(&s);
            prop_assert_eq!(reverse_target(&r), s.clone());
            let mut a = s.into_tokens();
            let mut b = r.into_tokens();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn vocabulary_ids_do_not_depend_on_input_order(
            mut words in proptest::collection::vec("[a-f]{1,2}", 1..20)
        ) {
            let v1 = Vocabulary::from_surfaces(&words);
            words.reverse();
            let v2 = Vocabulary::from_surfaces(&words);
            prop_assert_eq!(v1, v2);
        }
    }
}
