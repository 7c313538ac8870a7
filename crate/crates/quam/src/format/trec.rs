//! TREC run files (`qid Q0 docno rank score tag`) and qrels
//! (`qid 0 docno grade`).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use quam_core::eval::Qrels;
use quam_core::relevance::{Origin, RankEntry, Ranking};
use quam_core::DocIndex;

use super::{read_text, write_bytes, FormatError, FormatResult};

#[derive(Clone, Debug, PartialEq)]
pub struct RunFile {
    /// Tag of the first line; empty for an empty file.
    pub tag: String,
    /// One ranking per query, in order of first appearance.
    pub rankings: Vec<Ranking>,
}

impl RunFile {
    pub fn get(&self, query_id: &str) -> Option<&Ranking> {
        self.rankings.iter().find(|r| r.query_id == query_id)
    }
}

pub fn parse_run(text: &str, index: &mut DocIndex) -> FormatResult<RunFile> {
    let mut tag = None;
    let mut order: Vec<String> = Vec::new();
    let mut entries: HashMap<String, Vec<RankEntry>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _, doc, rank, score, run_tag] = fields[..] else {
            return Err(FormatError::text(
                i + 1,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        };
        rank.parse::<u64>()
            .map_err(|_| FormatError::text(i + 1, format!("bad rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| FormatError::text(i + 1, format!("bad score {score:?}")))?;
        tag.get_or_insert_with(|| run_tag.to_string());
        let list = entries.entry(qid.to_string()).or_insert_with(|| {
            order.push(qid.to_string());
            Vec::new()
        });
        list.push(RankEntry {
            doc: index.intern(doc),
            score,
            origin: Origin::InitialPool,
        });
    }
    let rankings = order
        .into_iter()
        .map(|q| {
            let list = entries.remove(&q).unwrap_or_default();
            Ranking::from_entries(q.clone(), list)
                .map_err(|e| FormatError::text(0, format!("query {q}: {e}")))
        })
        .collect::<FormatResult<Vec<_>>>()?;
    Ok(RunFile {
        tag: tag.unwrap_or_default(),
        rankings,
    })
}

pub fn format_run(rankings: &[Ranking], index: &DocIndex, tag: &str) -> FormatResult<String> {
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(FormatError::text(0, format!("invalid run tag {tag:?}")));
    }
    let mut out = String::new();
    for r in rankings {
        for (rank, e) in r.entries().iter().enumerate() {
            let name = index
                .name(e.doc)
                .ok_or_else(|| FormatError::text(0, format!("no name for document {}", e.doc.0)))?;
            writeln!(
                out,
                "{} Q0 {} {} {} {}",
                r.query_id,
                name,
                rank + 1,
                e.score,
                tag
            )
            .unwrap();
        }
    }
    Ok(out)
}

pub fn read_run(path: &Path, index: &mut DocIndex) -> FormatResult<RunFile> {
    parse_run(&read_text(path)?, index).map_err(|e| in_file(path, e))
}

pub fn write_run(
    path: &Path,
    rankings: &[Ranking],
    index: &DocIndex,
    tag: &str,
) -> FormatResult<()> {
    write_bytes(path, format_run(rankings, index, tag)?.as_bytes())
}

pub fn parse_qrels(text: &str, index: &mut DocIndex) -> FormatResult<Qrels> {
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _, doc, grade] = fields[..] else {
            return Err(FormatError::text(
                i + 1,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        };
        let grade: i32 = grade
            .parse()
            .map_err(|_| FormatError::text(i + 1, format!("bad grade {grade:?}")))?;
        qrels
            .insert(qid, index.intern(doc), grade)
            .map_err(|e| FormatError::text(i + 1, e.to_string()))?;
    }
    Ok(qrels)
}

pub fn format_qrels(qrels: &Qrels, index: &DocIndex) -> FormatResult<String> {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        let name = index
            .name(d)
            .ok_or_else(|| FormatError::text(0, format!("no name for document {}", d.0)))?;
        writeln!(out, "{q} 0 {name} {g}").unwrap();
    }
    Ok(out)
}

pub fn read_qrels(path: &Path, index: &mut DocIndex) -> FormatResult<Qrels> {
    parse_qrels(&read_text(path)?, index).map_err(|e| in_file(path, e))
}

pub fn write_qrels(path: &Path, qrels: &Qrels, index: &DocIndex) -> FormatResult<()> {
    write_bytes(path, format_qrels(qrels, index)?.as_bytes())
}

/// Prefixes line-level errors with the file they came from.
pub(crate) fn in_file(path: &Path, err: FormatError) -> FormatError {
    match err {
        FormatError::Text { line, what } => FormatError::Text {
            line,
            what: format!("{}: {what}", path.display()),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_parse_sorts_and_round_trips() {
        let text = "q1 Q0 b 2 0.5 t\nq1 Q0 a 1 1.5 t\nq2 Q0 c 1 -2 t\n";
        let mut index = DocIndex::new();
        let run = parse_run(text, &mut index).unwrap();
        assert_eq!(run.tag, "t");
        assert_eq!(run.rankings.len(), 2);
        let out = format_run(&run.rankings, &index, "t").unwrap();
        assert_eq!(out, "q1 Q0 a 1 1.5 t\nq1 Q0 b 2 0.5 t\nq2 Q0 c 1 -2 t\n");
        let again = parse_run(&out, &mut index).unwrap();
        assert_eq!(format_run(&again.rankings, &index, "t").unwrap(), out);
    }

    #[test]
    fn run_errors_name_the_line() {
        let mut index = DocIndex::new();
        let err = parse_run("q1 Q0 a 1 x t\n", &mut index).unwrap_err();
        assert!(matches!(err, FormatError::Text { line: 1, .. }));
        assert!(parse_run("q1 Q0 a 1\n", &mut index).is_err());
        assert!(parse_run("q Q0 a 1 1 t\nq Q0 a 2 0 t\n", &mut index).is_err());
    }

    #[test]
    fn qrels_round_trip() {
        let mut index = DocIndex::new();
        let qrels = parse_qrels("q1 0 d1 2\nq1 0 d2 0\nq0 0 d3 1\n", &mut index).unwrap();
        assert_eq!(qrels.len(), 3);
        let out = format_qrels(&qrels, &index).unwrap();
        assert_eq!(out, "q0 0 d3 1\nq1 0 d1 2\nq1 0 d2 0\n");
        assert!(parse_qrels("q 0 d -1\n", &mut index).is_err());
        assert!(parse_qrels("q 0 d 1\nq 0 d 2\n", &mut index).is_err());
    }
}
