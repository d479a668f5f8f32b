//! Plain-text and TSV renderings of the rescoring matrix and attribution
//! results. Scores appear as percentages with two decimals.

use std::fmt::Write as _;

use crate::analysis::{AttributionReport, ErrorClass, RescoreMatrix, ALL, UNION};
use crate::error::{Error, Result};
use crate::metrics::percent;

const CORNER: &str = "n-best\\model";
const ORACLE: &str = "Oracle";

/// Aligned table; marked cells carry a trailing `*`, the oracle column is last.
pub fn render_matrix_text(matrix: &RescoreMatrix, title: &str) -> String {
    let mut header = vec![CORNER.to_owned()];
    header.extend(matrix.columns.iter().cloned());
    header.push(ORACLE.to_owned());

    let mut body: Vec<Vec<String>> = Vec::new();
    for (r, row) in matrix.rows.iter().enumerate() {
        let mut line = vec![row.clone()];
        for (c, &v) in matrix.cells[r].iter().enumerate() {
            let mark = if matrix.marked[r][c] { "*" } else { " " };
            line.push(format!("{}{mark}", percent(v)));
        }
        line.push(format!("{} ", percent(matrix.oracle[r])));
        body.push(line);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            body.iter()
                .map(|l| l[i].len())
                .chain([header[i].len() + usize::from(i > 0)])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    if !title.is_empty() {
        let _ = writeln!(out, "{title}");
    }
    let fmt_line = |cells: &[String], out: &mut String, header: bool| {
        for (i, cell) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "{cell:<w$}", w = widths[0]);
            } else if header {
                let _ = write!(out, "  {cell:>w$} ", w = widths[i] - 1);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = widths[i]);
            }
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    };
    fmt_line(&header, &mut out, true);
    let rule = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(rule));
    for line in &body {
        fmt_line(line, &mut out, false);
    }
    out
}

pub fn render_matrix_tsv(matrix: &RescoreMatrix) -> String {
    let mut out = String::from(CORNER);
    for c in &matrix.columns {
        let _ = write!(out, "\t{c}");
    }
    let _ = writeln!(out, "\t{ORACLE}");
    for (r, row) in matrix.rows.iter().enumerate() {
        out.push_str(row);
        for v in &matrix.cells[r] {
            let _ = write!(out, "\t{}", percent(*v));
        }
        let _ = writeln!(out, "\t{}", percent(matrix.oracle[r]));
    }
    out
}

/// Reads a TSV matrix back; values come back as fractions of the printed
/// two-decimal percentages.
pub fn parse_matrix_tsv(text: &str) -> Result<RescoreMatrix> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty matrix file"))?;
    let header: Vec<&str> = header.split('\t').collect();
    if header.len() < 3 || header[0] != CORNER || header[header.len() - 1] != ORACLE {
        return Err(Error::parse(1, "matrix header must be `n-best\\model <models...> Oracle`"));
    }
    let columns: Vec<String> = header[1..header.len() - 1].iter().map(|s| s.to_string()).collect();
    let mut matrix = RescoreMatrix {
        rows: Vec::new(),
        columns,
        cells: Vec::new(),
        oracle: Vec::new(),
        marked: Vec::new(),
    };
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(Error::parse(i + 1, format!("expected {} fields, found {}", header.len(), fields.len())));
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map(|v| v / 100.0)
                    .map_err(|_| Error::parse(i + 1, format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let row = fields[0].to_owned();
        matrix.marked.push(
            matrix
                .columns
                .iter()
                .map(|c| *c == row || (row == UNION && c != ALL))
                .collect(),
        );
        matrix.oracle.push(values[values.len() - 1]);
        matrix.cells.push(values[..values.len() - 1].to_vec());
        matrix.rows.push(row);
    }
    Ok(matrix)
}

/// One attribution run: `scorer` compared its best score in `own`'s lists
/// against its best score in `other`'s lists.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionSummary {
    pub scorer: String,
    pub own: String,
    pub other: String,
    pub report: AttributionReport,
}

pub fn render_attribution_text(summaries: &[AttributionSummary]) -> String {
    let header = ["scorer", "own list", "other list", "search_error", "model_pref", "tie", "sentences"];
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            let (se, mp, tie) = s.report.fractions();
            vec![
                s.scorer.clone(),
                s.own.clone(),
                s.other.clone(),
                percent(se),
                percent(mp),
                percent(tie),
                s.report.classes.len().to_string(),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| rows.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in std::iter::once(header.map(String::from).to_vec()).chain(rows) {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < 3 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

/// Per-sentence classes and best scores, one block per summary.
pub fn render_attribution_tsv(summaries: &[AttributionSummary]) -> String {
    let mut out = String::from("scorer\town\tother\tsentence_id\tclass\town_best\tother_best\n");
    for s in summaries {
        for (i, class) in s.report.classes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{i}\t{}\t{:.6}\t{:.6}",
                s.scorer,
                s.own,
                s.other,
                class.label(),
                s.report.own_scores[i],
                s.report.other_scores[i]
            );
        }
    }
    out
}

impl std::str::FromStr for ErrorClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "search_error" => Ok(ErrorClass::SearchError),
            "model_preference" => Ok(ErrorClass::ModelPreference),
            "tie" => Ok(ErrorClass::Tie),
            other => Err(Error::config(format!("unknown attribution class {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RescoreMatrix {
        RescoreMatrix {
            rows: vec!["A".into(), "B".into(), UNION.into()],
            columns: vec!["A".into(), "B".into(), ALL.into()],
            cells: vec![
                vec![0.3174, 0.3217, 0.3303],
                vec![0.3224, 0.3128, 0.3293],
                vec![0.3183, 0.3127, 0.3324],
            ],
            oracle: vec![0.4182, 0.4097, 0.4658],
            marked: vec![
                vec![true, false, false],
                vec![false, true, false],
                vec![true, true, false],
            ],
        }
    }

    #[test]
    fn tsv_parses_back_to_the_same_matrix() {
        let m = sample();
        let back = parse_matrix_tsv(&render_matrix_tsv(&m)).unwrap();
        assert_eq!(back.rows, m.rows);
        assert_eq!(back.columns, m.columns);
        assert_eq!(back.marked, m.marked);
        for (a, b) in back.cells.iter().flatten().zip(m.cells.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(render_matrix_tsv(&back), render_matrix_tsv(&m));
    }

    #[test]
    fn text_table_marks_diagonal_and_puts_oracle_last() {
        let text = render_matrix_text(&sample(), "demo");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "demo");
        assert!(lines[1].ends_with("Oracle"));
        assert!(lines[3].starts_with("A "));
        assert!(lines[3].contains("31.74*"));
        assert!(lines[3].ends_with("41.82"));
        assert!(lines[5].contains("31.83*"));
        assert!(!lines[5].contains("33.24*"));
    }

    #[test]
    fn malformed_tsv_rejected() {
        assert!(parse_matrix_tsv("").is_err());
        assert!(parse_matrix_tsv("x\ty\n").is_err());
        let bad = "n-best\\model\tA\tOracle\nA\t1.0\n";
        assert!(matches!(parse_matrix_tsv(bad), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn attribution_renderings() {
        let report = AttributionReport {
            classes: vec![ErrorClass::SearchError, ErrorClass::Tie, ErrorClass::ModelPreference, ErrorClass::Tie],
            own_scores: vec![-1.0, -2.0, -3.0, -4.0],
            other_scores: vec![-0.5, -2.0, -3.5, -4.0],
        };
        let s = AttributionSummary {
            scorer: "B".into(),
            own: "B".into(),
            other: "A".into(),
            report,
        };
        let text = render_attribution_text(std::slice::from_ref(&s));
        assert!(text.lines().nth(1).unwrap().contains("25.00"));
        assert!(text.lines().nth(1).unwrap().contains("50.00"));
        let tsv = render_attribution_tsv(&[s]);
        assert_eq!(tsv.lines().count(), 5);
        assert!(tsv.contains("B\tB\tA\t0\tsearch_error\t-1.000000\t-0.500000"));
        assert_eq!("tie".parse::<ErrorClass>().unwrap(), ErrorClass::Tie);
    }
}
