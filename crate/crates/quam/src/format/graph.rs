//! Little-endian binary graph layout:
//!
//! ```text
//! "QAG1" | version u16 | num_docs u64 | k u32
//! per node: degree u32, then degree x (neighbour u64, weight f32)
//! CRC-32 (IEEE) of every preceding byte, u32
//! ```
//!
//! Document names live in a sidecar text file, one per line, line number
//! equal to the internal id.

use std::path::{Path, PathBuf};

use quam_core::graph::{edge_order, CorpusGraph, Edge};
use quam_core::{DocId, DocIndex};

use super::{read_text, write_bytes, FormatError, FormatResult};

const MAGIC: &[u8; 4] = b"QAG1";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 8 + 4;
const EDGE_LEN: usize = 8 + 4;

pub fn encode_graph(graph: &CorpusGraph) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(HEADER_LEN + 4 * graph.num_docs() + EDGE_LEN * graph.num_edges() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(graph.num_docs() as u64).to_le_bytes());
    out.extend_from_slice(&graph.k().to_le_bytes());
    for node in 0..graph.num_docs() {
        let adj = graph.adjacency(DocId(node as u32));
        out.extend_from_slice(&(adj.len() as u32).to_le_bytes());
        for e in adj {
            out.extend_from_slice(&u64::from(e.target.0).to_le_bytes());
            out.extend_from_slice(&e.weight.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> FormatResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(binary(
                self.pos,
                format!("truncated file while reading {what}"),
            ));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> FormatResult<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> FormatResult<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> FormatResult<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> FormatResult<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

fn binary(offset: usize, what: impl Into<String>) -> FormatError {
    FormatError::Binary {
        offset: offset as u64,
        what: what.into(),
    }
}

/// Parses and validates a graph, reporting the offset of the first fault.
pub fn decode_graph(bytes: &[u8]) -> FormatResult<CorpusGraph> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(binary(0, "bad magic, expected QAG1"));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(binary(
            4,
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let num_docs = cur.u64("document count")?;
    let k = cur.u32("k")?;
    // every node needs at least its degree word, so this bounds allocation
    let body = bytes.len().saturating_sub(HEADER_LEN + 4);
    if num_docs > (body / 4) as u64 || num_docs > u64::from(u32::MAX) {
        return Err(binary(
            6,
            format!("document count {num_docs} does not fit the file"),
        ));
    }
    let num_docs = num_docs as usize;
    let mut lists = Vec::with_capacity(num_docs);
    for node in 0..num_docs {
        let at = cur.pos;
        let degree = cur.u32("degree")?;
        if degree > k {
            return Err(binary(
                at,
                format!("node {node} has degree {degree} above k = {k}"),
            ));
        }
        let mut list: Vec<Edge> = Vec::with_capacity(degree as usize);
        for _ in 0..degree {
            let at = cur.pos;
            let target = cur.u64("neighbour id")?;
            let weight = cur.f32("weight")?;
            if target >= num_docs as u64 {
                return Err(binary(
                    at,
                    format!("node {node} links to out-of-range id {target}"),
                ));
            }
            if target == node as u64 {
                return Err(binary(at, format!("self-loop on node {node}")));
            }
            if !weight.is_finite() || weight < 0.0 {
                return Err(binary(
                    at + 8,
                    format!("invalid weight {weight} on node {node}"),
                ));
            }
            let edge = Edge::new(DocId(target as u32), weight);
            if let Some(prev) = list.last() {
                if edge_order(prev, &edge).is_ge() {
                    return Err(binary(
                        at,
                        format!("neighbours of node {node} are not strictly ordered"),
                    ));
                }
            }
            list.push(edge);
        }
        lists.push(list);
    }
    let body_end = cur.pos;
    let stored = cur.u32("checksum")?;
    if cur.pos != bytes.len() {
        return Err(binary(cur.pos, "trailing bytes after checksum"));
    }
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(binary(
            body_end,
            format!("checksum mismatch (stored {stored:08x}, computed {actual:08x})"),
        ));
    }
    Ok(CorpusGraph::from_adjacency(k, lists)?)
}

pub fn save_graph(graph: &CorpusGraph, path: &Path) -> FormatResult<()> {
    write_bytes(path, &encode_graph(graph))
}

pub fn load_graph(path: &Path) -> FormatResult<CorpusGraph> {
    let bytes = std::fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_graph(&bytes)
}

/// `graph.bin` -> `graph.ids`.
pub fn sidecar_path(graph_path: &Path) -> PathBuf {
    graph_path.with_extension("ids")
}

pub fn write_ids(index: &DocIndex, path: &Path) -> FormatResult<()> {
    let mut text = String::new();
    for name in index.names() {
        text.push_str(name);
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())
}

pub fn read_ids(path: &Path) -> FormatResult<DocIndex> {
    let text = read_text(path)?;
    let mut index = DocIndex::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || line.contains(char::is_whitespace) {
            return Err(FormatError::text(
                i + 1,
                format!("invalid document name {line:?}"),
            ));
        }
        if index.get(line).is_some() {
            return Err(FormatError::text(
                i + 1,
                format!("duplicate document name {line}"),
            ));
        }
        index.intern(line);
    }
    Ok(index)
}
