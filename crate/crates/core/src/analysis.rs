//! Cross-rescoring of n-best lists, union lists, the rescoring matrix with its
//! oracle column, and search-error versus model-preference attribution.
//!
//! A list approximates the search space of the system that produced it.
//! Rescoring list `L` with model `M` asks which hypothesis `M` would pick if its
//! search space were `L`; comparing the picks across lists separates what a
//! model prefers from what its own search managed to find.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::metrics::{self, BleuConfig};
use crate::scorers::{score_sequence, Model, Scorer};
use crate::search::{decode_all, normalize_score, rank_cmp, BeamConfig, Feature, Hypothesis, NBestList};
use crate::textcore::{reverse_target, Sentence};

/// Row label of the joined lists.
pub const UNION: &str = "Union";
/// Column label of the summed-log-probability combination of all systems.
pub const ALL: &str = "All";

pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Anything that can assign a total log-score to a complete target sentence.
pub trait SequenceScorer: Sync {
    fn sequence_score(&self, source: &Sentence, target: &Sentence) -> Result<f64>;
}

impl<S: Scorer + ?Sized> SequenceScorer for S {
    fn sequence_score(&self, source: &Sentence, target: &Sentence) -> Result<f64> {
        score_sequence(self, source, target)
    }
}

/// Direction in which a system emits its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetOrder {
    #[default]
    Natural,
    /// Trained on and decoding reversed targets; hypotheses are flipped back
    /// before they leave the system and flipped again before it scores them.
    Reversed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub id: String,
    pub scorer: Model,
    pub order: TargetOrder,
}

impl System {
    pub fn new(id: impl Into<String>, scorer: Model) -> Self {
        System {
            id: id.into(),
            scorer,
            order: TargetOrder::Natural,
        }
    }

    pub fn reversed(mut self) -> Self {
        self.order = TargetOrder::Reversed;
        self
    }

    /// Decodes every source and tags each entry with a feature named after the
    /// system holding its model score.
    pub fn decode(&self, sources: &[Sentence], cfg: &BeamConfig) -> Result<SystemRun> {
        let decoded = decode_all(&self.scorer, sources, cfg)?;
        let mut short_by = 0;
        let lists = decoded
            .into_iter()
            .map(|d| {
                short_by += d.short_by;
                let (sentence_id, source) = (d.list.sentence_id, d.list.source.clone());
                let entries = d
                    .list
                    .into_entries()
                    .into_iter()
                    .map(|mut h| {
                        if self.order == TargetOrder::Reversed {
                            h.tokens = reverse_target(&h.tokens);
                        }
                        h.features = vec![Feature::new(&self.id, h.model_score)];
                        h
                    })
                    .collect();
                NBestList::new(sentence_id, source, entries)
            })
            .collect();
        Ok(SystemRun {
            system_id: self.id.clone(),
            lists,
            short_by,
        })
    }
}

impl SequenceScorer for System {
    fn sequence_score(&self, source: &Sentence, target: &Sentence) -> Result<f64> {
        match self.order {
            TargetOrder::Natural => score_sequence(&self.scorer, source, target),
            TargetOrder::Reversed => score_sequence(&self.scorer, source, &reverse_target(target)),
        }
    }
}

/// Weighted sum of sequence scores: the rescoring form of a log-prob-sum
/// ensemble, usable across systems with different target orders.
pub struct Combination<'a> {
    members: Vec<(f64, &'a System)>,
}

impl<'a> Combination<'a> {
    pub fn new(members: Vec<(f64, &'a System)>) -> Result<Self> {
        if members.iter().any(|(w, _)| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::config("combination weights must be finite and >= 0"));
        }
        if members.iter().all(|(w, _)| *w == 0.0) {
            return Err(Error::config("combination needs a positive weight"));
        }
        Ok(Combination { members })
    }

    pub fn uniform(systems: impl IntoIterator<Item = &'a System>) -> Result<Self> {
        Self::new(systems.into_iter().map(|s| (1.0, s)).collect())
    }
}

impl SequenceScorer for Combination<'_> {
    fn sequence_score(&self, source: &Sentence, target: &Sentence) -> Result<f64> {
        let mut total: Option<f64> = None;
        for (w, system) in &self.members {
            if *w > 0.0 {
                let term = w * system.sequence_score(source, target)?;
                total = Some(total.map_or(term, |t| t + term));
            }
        }
        Ok(total.unwrap_or(f64::NEG_INFINITY))
    }
}

/// The n-best lists one system produced for a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemRun {
    pub system_id: String,
    pub lists: Vec<NBestList>,
    /// Total number of entries missing from lists that came back shorter than
    /// requested.
    pub short_by: usize,
}

impl SystemRun {
    pub fn new(system_id: impl Into<String>, lists: Vec<NBestList>) -> Self {
        SystemRun {
            system_id: system_id.into(),
            lists,
            short_by: 0,
        }
    }

    pub fn one_best(&self) -> impl Iterator<Item = &Sentence> {
        self.lists
            .iter()
            .map(|l| l.best().map(|h| &h.tokens).unwrap_or(&EMPTY_SENTENCE))
    }
}

static EMPTY_SENTENCE: Sentence = Sentence::empty();

/// Entry of `list` the scorer ranks highest, with its normalized score. Ties
/// follow the global ranking order.
pub fn rescore_list<'a, S: SequenceScorer + ?Sized>(
    scorer: &S,
    list: &'a NBestList,
    length_norm: f64,
) -> Result<(&'a Hypothesis, f64)> {
    let mut best: Option<(&Hypothesis, f64)> = None;
    for hyp in list.entries() {
        let score = normalize_score(
            scorer.sequence_score(&list.source, &hyp.tokens)?,
            hyp.tokens.len(),
            length_norm,
        );
        let better = match best {
            None => true,
            Some((b, bs)) => rank_cmp(score, &hyp.tokens, bs, &b.tokens).is_lt(),
        };
        if better {
            best = Some((hyp, score));
        }
    }
    best.ok_or(Error::EmptyList)
}

/// Best normalized score the scorer assigns to any entry of `list`.
pub fn best_model_score<S: SequenceScorer + ?Sized>(scorer: &S, list: &NBestList, length_norm: f64) -> Result<f64> {
    rescore_list(scorer, list, length_norm).map(|(_, s)| s)
}

/// Rescores every list and returns the selected sentences in order.
pub fn rescore_all<'a, S: SequenceScorer + ?Sized>(
    scorer: &S,
    lists: &'a [NBestList],
    length_norm: f64,
) -> Result<Vec<&'a Hypothesis>> {
    map_indexed(lists.len(), |i| {
        rescore_list(scorer, &lists[i], length_norm)
            .map(|(h, _)| h)
            .stage(|| format!("sentence {}", lists[i].sentence_id))
    })
}

/// Joins sentence-aligned lists. Entries are deduplicated by token sequence;
/// a surviving entry collects the features (provenance) of every list that
/// contained it. Order is by first contributing list, then original rank.
pub fn union_lists(lists: &[&NBestList]) -> Result<NBestList> {
    let first = lists.first().ok_or(Error::EmptyList)?;
    let mut entries: Vec<Hypothesis> = Vec::new();
    let mut index: HashMap<&Sentence, usize> = HashMap::new();
    for list in lists {
        if list.sentence_id != first.sentence_id {
            return Err(Error::SentenceIdMismatch(first.sentence_id, list.sentence_id));
        }
        if list.source != first.source {
            return Err(Error::config(format!(
                "sentence {}: lists disagree on the source",
                list.sentence_id
            )));
        }
        for hyp in list.entries() {
            match index.get(&hyp.tokens) {
                Some(&i) => {
                    for f in &hyp.features {
                        if !entries[i].features.iter().any(|g| g.name == f.name) {
                            entries[i].features.push(f.clone());
                        }
                    }
                }
                None => {
                    index.insert(&hyp.tokens, entries.len());
                    entries.push(hyp.clone());
                }
            }
        }
    }
    Ok(NBestList::new(first.sentence_id, first.source.clone(), entries))
}

/// Per-sentence union of several runs.
pub fn union_runs(runs: &[&SystemRun]) -> Result<SystemRun> {
    let first = runs.first().ok_or(Error::EmptyList)?;
    for run in runs {
        if run.lists.len() != first.lists.len() {
            return Err(Error::Misaligned {
                left: first.lists.len(),
                right: run.lists.len(),
            });
        }
    }
    let lists = (0..first.lists.len())
        .map(|i| {
            let column: Vec<&NBestList> = runs.iter().map(|r| &r.lists[i]).collect();
            union_lists(&column)
        })
        .collect::<Result<_>>()?;
    Ok(SystemRun::new(UNION, lists))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub bleu: BleuConfig,
    pub length_norm: f64,
    pub include_union: bool,
    pub include_all: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            bleu: BleuConfig::default(),
            length_norm: 0.0,
            include_union: true,
            include_all: true,
        }
    }
}

/// Corpus BLEU for every (n-best source, rescoring model) pair, plus the oracle
/// BLEU of each row. Values are in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub oracle: Vec<f64>,
    /// Cells where a model rescores its own list, and the Union row for every
    /// single-model column.
    pub marked: Vec<Vec<bool>>,
}

impl RescoreMatrix {
    pub fn row_index(&self, name: &str) -> Result<usize> {
        self.rows.iter().position(|r| r == name).ok_or_else(|| Error::UnknownSystem {
            id: name.to_owned(),
            known: self.rows.clone(),
        })
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| Error::UnknownSystem {
            id: name.to_owned(),
            known: self.columns.clone(),
        })
    }

    /// BLEU of model `column` on the lists of `row`.
    pub fn cell(&self, row: &str, column: &str) -> Result<f64> {
        Ok(self.cells[self.row_index(row)?][self.column_index(column)?])
    }

    pub fn oracle_of(&self, row: &str) -> Result<f64> {
        Ok(self.oracle[self.row_index(row)?])
    }
}

/// Builds the rescoring matrix. Rows are `runs` (plus their union), columns
/// are `systems` (plus "All", the uniform sum over the systems that generated
/// a row, or over every column when none did).
pub fn rescore_matrix(
    runs: &[SystemRun],
    systems: &[System],
    references: &[Sentence],
    cfg: &MatrixConfig,
) -> Result<RescoreMatrix> {
    if runs.is_empty() || systems.is_empty() {
        return Err(Error::config("matrix needs at least one run and one model"));
    }
    for run in runs {
        if run.lists.len() != references.len() {
            return Err(Error::Misaligned {
                left: run.lists.len(),
                right: references.len(),
            })
            .stage(|| format!("row {}", run.system_id));
        }
    }
    let union;
    let mut rows: Vec<&SystemRun> = runs.iter().collect();
    if cfg.include_union && runs.len() > 1 {
        union = union_runs(&rows).stage(|| "union".to_owned())?;
        rows.push(&union);
    }

    let generators: Vec<&System> = systems
        .iter()
        .filter(|s| runs.iter().any(|r| r.system_id == s.id))
        .collect();
    let all = if cfg.include_all {
        let members = if generators.is_empty() {
            systems.iter().collect()
        } else {
            generators
        };
        Some(Combination::uniform(members)?)
    } else {
        None
    };
    let mut columns: Vec<(&str, &dyn SequenceScorer)> = systems
        .iter()
        .map(|s| (s.id.as_str(), s as &dyn SequenceScorer))
        .collect();
    if let Some(all) = &all {
        columns.push((ALL, all));
    }

    let mut cells = Vec::with_capacity(rows.len());
    let mut marked = Vec::with_capacity(rows.len());
    let mut oracle = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut row_cells = Vec::with_capacity(columns.len());
        let mut row_marks = Vec::with_capacity(columns.len());
        for (name, scorer) in &columns {
            let picks = rescore_all(*scorer, &row.lists, cfg.length_norm)
                .stage(|| format!("row {}, model {name}", row.system_id))?;
            let bleu = metrics::corpus_bleu_of(picks.iter().map(|h| &h.tokens), references, &cfg.bleu)
                .stage(|| format!("row {}, model {name}", row.system_id))?;
            row_cells.push(bleu);
            row_marks.push(*name == row.system_id || (row.system_id == UNION && *name != ALL));
        }
        oracle.push(
            metrics::oracle_corpus_bleu(&row.lists, references, &cfg.bleu)
                .stage(|| format!("row {}, oracle", row.system_id))?,
        );
        cells.push(row_cells);
        marked.push(row_marks);
    }
    Ok(RescoreMatrix {
        rows: rows.iter().map(|r| r.system_id.clone()).collect(),
        columns: columns.iter().map(|(n, _)| n.to_string()).collect(),
        cells,
        oracle,
        marked,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    /// The other list holds a hypothesis the scorer prefers over everything
    /// its own search returned.
    SearchError,
    /// The scorer's own list holds a hypothesis it prefers over everything in
    /// the other list.
    ModelPreference,
    Tie,
}

impl ErrorClass {
    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::SearchError => "search_error",
            ErrorClass::ModelPreference => "model_preference",
            ErrorClass::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    /// Absolute log-space tolerance below which two scores tie.
    pub epsilon: f64,
    pub length_norm: f64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            epsilon: 1e-6,
            length_norm: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub classes: Vec<ErrorClass>,
    pub own_scores: Vec<f64>,
    pub other_scores: Vec<f64>,
}

impl AttributionReport {
    pub fn count(&self, class: ErrorClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn fraction(&self, class: ErrorClass) -> f64 {
        if self.classes.is_empty() {
            return 0.0;
        }
        self.count(class) as f64 / self.classes.len() as f64
    }

    /// `(search_error, model_preference, tie)` fractions.
    pub fn fractions(&self) -> (f64, f64, f64) {
        (
            self.fraction(ErrorClass::SearchError),
            self.fraction(ErrorClass::ModelPreference),
            self.fraction(ErrorClass::Tie),
        )
    }
}

pub fn classify(own_best: f64, other_best: f64, epsilon: f64) -> ErrorClass {
    if other_best > own_best + epsilon {
        ErrorClass::SearchError
    } else if own_best > other_best + epsilon {
        ErrorClass::ModelPreference
    } else {
        ErrorClass::Tie
    }
}

/// Compares, per sentence, the scorer's best score inside its own list with
/// its best score inside another system's list.
pub fn attribute_errors<S: SequenceScorer + ?Sized>(
    scorer: &S,
    own: &[NBestList],
    other: &[NBestList],
    cfg: &AttributionConfig,
) -> Result<AttributionReport> {
    if !(cfg.epsilon >= 0.0) {
        return Err(Error::config("tie tolerance must be >= 0"));
    }
    if own.len() != other.len() {
        return Err(Error::Misaligned {
            left: own.len(),
            right: other.len(),
        });
    }
    let scores = map_indexed(own.len(), |i| {
        if own[i].sentence_id != other[i].sentence_id {
            return Err(Error::SentenceIdMismatch(own[i].sentence_id, other[i].sentence_id));
        }
        Ok((
            best_model_score(scorer, &own[i], cfg.length_norm)?,
            best_model_score(scorer, &other[i], cfg.length_norm)?,
        ))
    })?;
    let (own_scores, other_scores): (Vec<f64>, Vec<f64>) = scores.into_iter().unzip();
    let classes = own_scores
        .iter()
        .zip(&other_scores)
        .map(|(&o, &t)| classify(o, t, cfg.epsilon))
        .collect();
    Ok(AttributionReport {
        classes,
        own_scores,
        other_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{bleu_stats, corpus_bleu, sentence_bleu, BleuStats};
    use crate::scorers::testing::{corpus, toy_channel};
    use crate::scorers::{channel_train, ChannelConfig, PerturbedScorer};

    const SOURCES: [&str; 6] = ["a b c", "c a", "b b a", "a", "c c b a", "b a c a"];

    fn sources() -> Vec<Sentence> {
        SOURCES.iter().map(|s| Sentence::from(*s)).collect()
    }

    fn beam(alpha: f64) -> BeamConfig {
        BeamConfig {
            beam_size: 6,
            nbest: 6,
            max_len: None,
            length_norm: alpha,
        }
    }

    fn weak_system() -> System {
        let c = corpus(&[("a b", "x w"), ("c", "z"), ("b a", "y y")]);
        System::new("B", channel_train(&c, &ChannelConfig::default()).unwrap().into())
    }

    fn hyp(tokens: &str, score: f64, feature: &str) -> Hypothesis {
        let mut h = Hypothesis::new(tokens.into(), score, 0.0);
        h.features = vec![Feature::new(feature, score)];
        h
    }

    #[test]
    fn own_list_rescoring_returns_rank_one() {
        let perturbed = PerturbedScorer::new(toy_channel().into(), 0.7, 5).unwrap();
        let systems = [
            System::new("A", toy_channel().into()),
            System::new("P", perturbed.into()),
            System::new("R", toy_channel().into()).reversed(),
        ];
        for alpha in [0.0, 0.6] {
            for sys in &systems {
                let run = sys.decode(&sources(), &beam(alpha)).unwrap();
                for list in &run.lists {
                    let (best, score) = rescore_list(sys, list, alpha).unwrap();
                    assert_eq!(best.rank, 1, "{} alpha {alpha}", sys.id);
                    assert!((score - best.normalized_score).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reversed_systems_emit_natural_order() {
        let c = corpus(&[("a b c", "x y z"), ("a b", "x y"), ("b c", "y z")]);
        let rev = System::new("R", channel_train(&c.with_reversed_targets(), &ChannelConfig::default()).unwrap().into())
            .reversed();
        let fwd = System::new("F", channel_train(&c, &ChannelConfig::default()).unwrap().into());
        let src = vec![Sentence::from("a b c")];
        let r = rev.decode(&src, &beam(0.0)).unwrap();
        let f = fwd.decode(&src, &beam(0.0)).unwrap();
        assert_eq!(f.lists[0].entries()[0].tokens, Sentence::from("x y z"));
        assert!(r.lists[0].sentences().any(|s| *s == Sentence::from("x y z")));
        let top = &r.lists[0].entries()[0];
        assert_eq!(rev.sequence_score(&src[0], &top.tokens).unwrap(), top.model_score);
    }

    #[test]
    fn union_is_idempotent_and_sums_disjoint_lists() {
        let a = NBestList::new(0, "a b".into(), vec![hyp("x y", -1.0, "A"), hyp("x", -2.0, "A")]);
        let b = NBestList::new(0, "a b".into(), vec![hyp("w", -0.5, "B"), hyp("y y", -3.0, "B")]);
        let aa = union_lists(&[&a, &a]).unwrap();
        assert_eq!(aa, a);
        let ab = union_lists(&[&a, &b]).unwrap();
        assert_eq!(ab.len(), 4);
        assert_eq!(ab.entries().iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);

        let c = NBestList::new(0, "a b".into(), vec![hyp("x", -2.5, "C")]);
        let ac = union_lists(&[&a, &c]).unwrap();
        assert_eq!(ac.len(), 2);
        let merged = ac.entries().iter().find(|h| h.tokens == Sentence::from("x")).unwrap();
        assert_eq!(merged.provenance().collect::<Vec<_>>(), ["A", "C"]);
        assert_eq!(merged.model_score, -2.0);
    }

    #[test]
    fn union_rejects_misaligned_lists() {
        let a = NBestList::new(0, "a".into(), vec![hyp("x", -1.0, "A")]);
        let b = NBestList::new(1, "a".into(), vec![hyp("x", -1.0, "B")]);
        assert!(matches!(union_lists(&[&a, &b]), Err(Error::SentenceIdMismatch(0, 1))));
        let c = NBestList::new(0, "b".into(), vec![hyp("x", -1.0, "B")]);
        assert!(union_lists(&[&a, &c]).is_err());
    }

    #[test]
    fn union_oracle_dominates_each_component() {
        let refs: Vec<Sentence> = ["x y z", "z x", "y y x", "x", "z z y x", "y x z x"]
            .iter()
            .map(|s| Sentence::from(*s))
            .collect();
        let a = System::new("A", toy_channel().into()).decode(&sources(), &beam(0.0)).unwrap();
        let b = weak_system().decode(&sources(), &beam(0.0)).unwrap();
        let u = union_runs(&[&a, &b]).unwrap();
        let cfg = BleuConfig::sentence_level();
        let best = |l: &NBestList, r: &Sentence| {
            l.sentences()
                .map(|s| sentence_bleu(s, r, &cfg).unwrap())
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for i in 0..refs.len() {
            let ub = best(&u.lists[i], &refs[i]);
            assert!(ub >= best(&a.lists[i], &refs[i]));
            assert!(ub >= best(&b.lists[i], &refs[i]));
        }
    }

    #[test]
    fn classification_is_antisymmetric() {
        for (x, y) in [(-1.0, -2.0), (-2.0, -1.0), (-1.0, -1.0 + 1e-9), (-5.0, -5.0)] {
            let forward = classify(x, y, 1e-6);
            let backward = classify(y, x, 1e-6);
            match forward {
                ErrorClass::SearchError => assert_eq!(backward, ErrorClass::ModelPreference),
                ErrorClass::ModelPreference => assert_eq!(backward, ErrorClass::SearchError),
                ErrorClass::Tie => assert_eq!(backward, ErrorClass::Tie),
            }
        }
        assert_eq!(classify(-1.0, -1.0 + 1e-9, 1e-6), ErrorClass::Tie);
        assert_eq!(classify(-1.0, -0.5, 1e-6), ErrorClass::SearchError);
    }

    #[test]
    fn attribution_on_the_same_lists_is_all_ties_and_swaps_classes() {
        let a = System::new("A", toy_channel().into());
        let own = a.decode(&sources(), &beam(0.0)).unwrap();
        let other = weak_system().decode(&sources(), &beam(0.0)).unwrap();
        let cfg = AttributionConfig::default();
        let same = attribute_errors(&a, &own.lists, &own.lists, &cfg).unwrap();
        assert_eq!(same.fraction(ErrorClass::Tie), 1.0);

        let fwd = attribute_errors(&a, &own.lists, &other.lists, &cfg).unwrap();
        let back = attribute_errors(&a, &other.lists, &own.lists, &cfg).unwrap();
        assert_eq!(fwd.count(ErrorClass::SearchError), back.count(ErrorClass::ModelPreference));
        assert_eq!(fwd.count(ErrorClass::ModelPreference), back.count(ErrorClass::SearchError));
        let (s, m, t) = fwd.fractions();
        assert!((s + m + t - 1.0).abs() < 1e-12);
        assert!(attribute_errors(&a, &own.lists, &other.lists[..2], &cfg).is_err());
    }

    #[test]
    fn matrix_cells_replay_by_hand() {
        let sys_a = System::new("A", toy_channel().into());
        let sys_b = weak_system();
        let refs: Vec<Sentence> = ["x y z", "z x", "y w x", "x", "z z y x", "y x z x"]
            .iter()
            .map(|s| Sentence::from(*s))
            .collect();
        let runs = vec![
            sys_a.decode(&sources(), &beam(0.0)).unwrap(),
            sys_b.decode(&sources(), &beam(0.0)).unwrap(),
        ];
        let cfg = MatrixConfig::default();
        let m = rescore_matrix(&runs, &[sys_a.clone(), sys_b.clone()], &refs, &cfg).unwrap();
        assert_eq!(m.rows, ["A", "B", UNION]);
        assert_eq!(m.columns, ["A", "B", ALL]);
        assert_eq!(m.marked[0], [true, false, false]);
        assert_eq!(m.marked[2], [true, true, false]);

        let bleu_of_argmax = |lists: &[NBestList], score: &dyn Fn(&Sentence, &Sentence) -> f64| {
            let mut stats = BleuStats::zero(4);
            for (list, r) in lists.iter().zip(&refs) {
                let mut pick: Option<(&Sentence, f64)> = None;
                for s in list.sentences() {
                    let v = score(&list.source, s);
                    if pick.map_or(true, |(p, pv)| rank_cmp(v, s, pv, p).is_lt()) {
                        pick = Some((s, v));
                    }
                }
                stats += &bleu_stats(pick.unwrap().0, r, &cfg.bleu).unwrap();
            }
            corpus_bleu(&stats, &cfg.bleu)
        };
        let union = union_runs(&[&runs[0], &runs[1]]).unwrap();
        let rows = [&runs[0].lists, &runs[1].lists, &union.lists];
        for (r, lists) in rows.iter().enumerate() {
            let a = bleu_of_argmax(lists, &|s, t| score_sequence(&sys_a.scorer, s, t).unwrap());
            let b = bleu_of_argmax(lists, &|s, t| score_sequence(&sys_b.scorer, s, t).unwrap());
            let all = bleu_of_argmax(lists, &|s, t| {
                score_sequence(&sys_a.scorer, s, t).unwrap() + score_sequence(&sys_b.scorer, s, t).unwrap()
            });
            assert_eq!(m.cells[r], [a, b, all]);
        }
        assert!(m.oracle_of(UNION).unwrap() >= m.oracle_of("A").unwrap());
        let err = m.cell("Z", "A").unwrap_err().to_string();
        assert!(err.contains("Z") && err.contains("Union"), "{err}");
    }

    #[test]
    fn single_system_matrix_has_no_union_and_all_equals_the_model() {
        let sys = System::new("A", toy_channel().into());
        let run = sys.decode(&sources(), &beam(0.0)).unwrap();
        let refs: Vec<Sentence> = run.one_best().cloned().collect();
        let m = rescore_matrix(&[run], &[sys], &refs, &MatrixConfig::default()).unwrap();
        assert_eq!(m.rows, ["A"]);
        assert_eq!(m.cells[0][0], m.cells[0][1]);
        assert_eq!(m.cells[0][0], 1.0);
    }

    #[test]
    fn combination_rejects_bad_weights() {
        let sys = System::new("A", toy_channel().into());
        assert!(Combination::new(vec![(0.0, &sys)]).is_err());
        assert!(Combination::new(vec![(-1.0, &sys)]).is_err());
        assert!(Combination::new(vec![(f64::NAN, &sys)]).is_err());
    }
}
