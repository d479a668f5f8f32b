//! `sentence_id ||| tokens ||| features ||| total` lines.
//!
//! Features are written `name=value` (or `name= v1 v2 ...` when a feature has
//! several values) using the shortest exact decimal form; the total uses six
//! decimals. Files written here are canonical: parsing and re-serializing them
//! reproduces the bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::search::{Feature, Hypothesis, NBestList};
use crate::textcore::Sentence;

const SEPARATOR: &str = " ||| ";

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedNBest {
    /// `lists[i].sentence_id == i`; ids absent from the file get empty lists.
    pub lists: Vec<NBestList>,
    pub warnings: Vec<String>,
}

fn format_features(features: &[Feature]) -> String {
    let mut out = String::new();
    for (i, f) in features.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        if let [v] = f.values.as_slice() {
            let _ = write!(out, "{}={}", f.name, v);
        } else {
            let _ = write!(out, "{}=", f.name);
            for v in &f.values {
                let _ = write!(out, " {v}");
            }
        }
    }
    out
}

fn parse_features(field: &str, line: usize) -> Result<Vec<Feature>> {
    let mut features: Vec<Feature> = Vec::new();
    for item in field.split_whitespace() {
        if let Some((name, value)) = item.split_once('=') {
            if name.is_empty() {
                return Err(Error::parse(line, format!("feature without a name: {item:?}")));
            }
            let values = if value.is_empty() {
                Vec::new()
            } else {
                vec![parse_number(value, line)?]
            };
            features.push(Feature {
                name: name.to_owned(),
                values,
            });
        } else {
            let value = parse_number(item, line)?;
            features
                .last_mut()
                .ok_or_else(|| Error::parse(line, format!("value {item:?} before any feature name")))?
                .values
                .push(value);
        }
    }
    Ok(features)
}

fn parse_number(text: &str, line: usize) -> Result<f64> {
    text.parse()
        .map_err(|_| Error::parse(line, format!("not a number: {text:?}")))
}

pub fn format_nbest(lists: &[NBestList]) -> String {
    let mut out = String::new();
    for list in lists {
        for h in list.entries() {
            let _ = writeln!(
                out,
                "{}{SEPARATOR}{}{SEPARATOR}{}{SEPARATOR}{:.6}",
                list.sentence_id,
                h.tokens,
                format_features(&h.features),
                h.normalized_score
            );
        }
    }
    out
}

/// Parses n-best lines. Ids must be non-decreasing. Entries are re-sorted by
/// their stated totals (stable); a list whose file order disagrees with its
/// totals produces a warning.
pub fn parse_nbest(text: &str) -> Result<ParsedNBest> {
    let mut lists: Vec<NBestList> = Vec::new();
    let mut pending: Vec<Hypothesis> = Vec::new();
    let mut current: Option<usize> = None;
    let mut warnings = Vec::new();

    let mut flush = |id: usize, entries: Vec<Hypothesis>, lists: &mut Vec<NBestList>| {
        while lists.len() < id {
            lists.push(NBestList::new(lists.len(), Sentence::default(), Vec::new()));
        }
        let mut sorted = entries.clone();
        sorted.sort_by(|a, b| b.normalized_score.total_cmp(&a.normalized_score));
        if sorted != entries {
            warnings.push(format!("sentence {id}: entries not in descending score order; re-sorted"));
        }
        lists.push(NBestList::new(id, Sentence::default(), sorted));
    };

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("|||").map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                lineno,
                format!("expected 4 fields separated by '|||', found {}", fields.len()),
            ));
        }
        let id: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad sentence id {:?}", fields[0])))?;
        let total = parse_number(fields[3].trim(), lineno)?;
        let hyp = Hypothesis {
            tokens: Sentence::parse(fields[1]),
            model_score: total,
            normalized_score: total,
            rank: 0,
            features: parse_features(fields[2], lineno)?,
        };
        match current {
            Some(c) if id < c => {
                return Err(Error::parse(lineno, format!("sentence id {id} after {c}")));
            }
            Some(c) if id > c => {
                flush(c, std::mem::take(&mut pending), &mut lists);
            }
            _ => {}
        }
        current = Some(id);
        pending.push(hyp);
    }
    if let Some(c) = current {
        flush(c, pending, &mut lists);
    }
    Ok(ParsedNBest { lists, warnings })
}

pub fn read_nbest(path: &Path) -> Result<ParsedNBest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nbest(&text).map_err(|e| e.in_stage(path.display().to_string()))
}

pub fn write_nbest(path: &Path, lists: &[NBestList]) -> Result<()> {
    super::write_atomic(path, format_nbest(lists).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_documented_line() {
        let p = parse_nbest("0 ||| a b c ||| lm=-1.5 ||| -2.301000\n").unwrap();
        assert_eq!(p.lists.len(), 1);
        let h = &p.lists[0].entries()[0];
        assert_eq!(p.lists[0].sentence_id, 0);
        assert_eq!(h.tokens.len(), 3);
        assert_eq!(h.model_score, -2.301);
        assert_eq!(h.features, vec![Feature::new("lm", -1.5)]);
    }

    #[test]
    fn multi_valued_features() {
        let p = parse_nbest("0 ||| a ||| tm= -1 -2 lm=3 ||| -1.000000\n").unwrap();
        let f = &p.lists[0].entries()[0].features;
        assert_eq!(f[0].values, vec![-1.0, -2.0]);
        assert_eq!(f[1].values, vec![3.0]);
        assert_eq!(format_nbest(&p.lists), "0 ||| a ||| tm= -1 -2 lm=3 ||| -1.000000\n");
    }

    #[test]
    fn decreasing_ids_rejected_with_line_number() {
        let err = parse_nbest("1 ||| a ||| x=1 ||| -1.0\n0 ||| b ||| x=1 ||| -1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn wrong_field_count_rejected_with_line_number() {
        let err = parse_nbest("0 ||| a ||| x=1 ||| -1.0\n0 ||| a ||| -1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_nbest("x ||| a ||| x=1 ||| -1.0\n").is_err());
        assert!(parse_nbest("0 ||| a ||| 5 ||| -1.0\n").is_err());
    }

    #[test]
    fn gaps_become_empty_lists() {
        let p = parse_nbest("0 ||| a ||| x=1 ||| -1.0\n2 ||| b ||| x=1 ||| -1.0\n").unwrap();
        assert_eq!(p.lists.len(), 3);
        assert!(p.lists[1].is_empty());
        assert_eq!(p.lists[2].sentence_id, 2);
    }

    #[test]
    fn out_of_order_entries_are_resorted_with_warning() {
        let p = parse_nbest("0 ||| a ||| x=1 ||| -3.0\n0 ||| b ||| x=1 ||| -1.0\n").unwrap();
        assert_eq!(p.lists[0].entries()[0].tokens, Sentence::parse("b"));
        assert_eq!(p.lists[0].entries()[0].rank, 1);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn empty_hypothesis_round_trips() {
        let text = "0 |||  ||| A=-0.5 ||| -0.500000\n";
        let p = parse_nbest(text).unwrap();
        assert!(p.lists[0].entries()[0].tokens.is_empty());
        assert_eq!(format_nbest(&p.lists), text);
    }

    #[test]
    fn separator_spacing_is_lenient() {
        let p = parse_nbest("3|||a  b|||lm=1|||-1.0\n").unwrap();
        let h = &p.lists[3].entries()[0];
        assert_eq!(h.tokens, Sentence::from("a b"));
        assert_eq!(h.normalized_score, -1.0);
        assert_eq!(format_nbest(&p.lists), "3 ||| a b ||| lm=1 ||| -1.000000\n");
    }

    fn canonical_line() -> impl Strategy<Value = (Vec<String>, Vec<(String, f64)>, f64)> {
        (
            proptest::collection::vec("[a-z]{1,4}", 0..6),
            proptest::collection::vec(("[A-Za-z][A-Za-z0-9_.]{0,5}", -1e4f64..0.0), 0..3),
            -1e4f64..0.0,
        )
    }

    proptest! {
        #[test]
        fn canonical_files_round_trip_byte_exact(
            sentences in proptest::collection::vec(proptest::collection::vec(canonical_line(), 1..5), 1..5)
        ) {
            let lists: Vec<NBestList> = sentences
                .into_iter()
                .enumerate()
                .map(|(id, lines)| {
                    let mut entries: Vec<Hypothesis> = lines
                        .into_iter()
                        .map(|(toks, feats, total)| {
                            // Totals are stored with six decimals.
                            let total: f64 = format!("{total:.6}").parse().unwrap();
                            Hypothesis {
                                tokens: Sentence::new(toks),
                                model_score: total,
                                normalized_score: total,
                                rank: 0,
                                features: feats.into_iter().map(|(n, v)| Feature::new(n, v)).collect(),
                            }
                        })
                        .collect();
                    entries.sort_by(|a, b| b.normalized_score.total_cmp(&a.normalized_score));
                    NBestList::new(id, Sentence::default(), entries)
                })
                .collect();
            let text = format_nbest(&lists);
            let parsed = parse_nbest(&text).unwrap();
            prop_assert!(parsed.warnings.is_empty());
            prop_assert_eq!(format_nbest(&parsed.lists), text);
        }
    }
}
