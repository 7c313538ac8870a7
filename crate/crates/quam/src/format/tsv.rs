//! Tab-separated corpus, query, triple and histogram files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use quam_core::affinity::TrainingTriple;
use quam_core::relevance::{tokenize, Query};
use quam_core::DocIndex;

use super::trec::in_file;
use super::{read_text, write_bytes, FormatError, FormatResult};

/// Documents in file order; line `i` becomes internal id `i`.
#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub index: DocIndex,
    pub tokens: Vec<Vec<String>>,
}

fn split_pair<'a>(line: &'a str, n: usize, what: &str) -> FormatResult<(&'a str, &'a str)> {
    let (key, text) = line
        .split_once('\t')
        .ok_or_else(|| FormatError::text(n, format!("expected `{what}<TAB>text`")))?;
    if key.is_empty() || key.contains(char::is_whitespace) {
        return Err(FormatError::text(n, format!("invalid {what} {key:?}")));
    }
    Ok((key, text))
}

pub fn parse_corpus(text: &str) -> FormatResult<Corpus> {
    let mut corpus = Corpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, body) = split_pair(line, i + 1, "docno")?;
        if corpus.index.get(name).is_some() {
            return Err(FormatError::text(
                i + 1,
                format!("duplicate document {name}"),
            ));
        }
        corpus.index.intern(name);
        corpus.tokens.push(tokenize(body));
    }
    Ok(corpus)
}

pub fn read_corpus(path: &Path) -> FormatResult<Corpus> {
    parse_corpus(&read_text(path)?).map_err(|e| in_file(path, e))
}

/// Writes `docno<TAB>tokens joined by spaces`.
pub fn write_corpus(path: &Path, index: &DocIndex, tokens: &[Vec<String>]) -> FormatResult<()> {
    let mut out = String::new();
    for (name, toks) in index.names().iter().zip(tokens) {
        writeln!(out, "{name}\t{}", toks.join(" ")).unwrap();
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_queries(path: &Path) -> FormatResult<Vec<Query>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, body) = split_pair(line, i + 1, "qid").map_err(|e| in_file(path, e))?;
        out.push(Query::new(id, body));
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[Query]) -> FormatResult<()> {
    let mut out = String::new();
    for q in queries {
        writeln!(out, "{}\t{}", q.id, q.tokens.join(" ")).unwrap();
    }
    write_bytes(path, out.as_bytes())
}

/// `doc_a<TAB>doc_b<TAB>label`.
pub fn write_triples(
    path: &Path,
    triples: &[TrainingTriple],
    index: &DocIndex,
) -> FormatResult<()> {
    let mut out = String::new();
    for t in triples {
        let name = |d| {
            index
                .name(d)
                .ok_or_else(|| FormatError::text(0, format!("no name for document {}", d)))
        };
        writeln!(out, "{}\t{}\t{}", name(t.doc_a)?, name(t.doc_b)?, t.label).unwrap();
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_triples(path: &Path, index: &mut DocIndex) -> FormatResult<Vec<TrainingTriple>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |what: String| in_file(path, FormatError::text(i + 1, what));
        let [a, b, label] = fields[..] else {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        };
        let label = match label {
            "0" => 0,
            "1" => 1,
            other => return Err(bad(format!("label must be 0 or 1, found {other:?}"))),
        };
        if a == b {
            return Err(bad(format!("self pair {a}")));
        }
        out.push(TrainingTriple {
            doc_a: index.intern(a),
            doc_b: index.intern(b),
            label,
        });
    }
    Ok(out)
}

/// `relevant_docs<TAB>queries`, ascending.
pub fn write_histogram(path: &Path, histogram: &BTreeMap<usize, usize>) -> FormatResult<()> {
    let mut out = String::new();
    for (bucket, count) in histogram {
        writeln!(out, "{bucket}\t{count}").unwrap();
    }
    write_bytes(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_tokenizes_and_rejects_duplicates() {
        let c = parse_corpus("a\tRed Apple\nb\tblue-sky\n").unwrap();
        assert_eq!(c.index.names(), ["a", "b"]);
        assert_eq!(c.tokens[1], ["blue", "sky"]);
        assert!(parse_corpus("a\tx\na\ty\n").is_err());
        assert!(matches!(
            parse_corpus("no tab here\n"),
            Err(FormatError::Text { line: 1, .. })
        ));
    }
}
