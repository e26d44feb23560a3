use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::SparseGraph;
use crate::error::{Error, Result};

/// A graph read from disk together with the original node identifiers.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: SparseGraph,
    /// `node_ids[k]` is the external id of dense node `k`.
    pub node_ids: Vec<i64>,
}

/// Reads a whitespace-separated edge list. Lines starting with `#` or `%`
/// are comments; tokens after the first two (e.g. weights) are ignored.
/// External ids are compacted to `0..n` in ascending id order.
pub fn load_edge_list(
    path: impl AsRef<Path>,
    directed: bool,
    include_self_loops: bool,
) -> Result<LoadedGraph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(BufReader::new(file), directed, include_self_loops).map_err(|e| match e {
        Error::EmptyGraph(_) => Error::EmptyGraph(path.to_path_buf()),
        other => other,
    })
}

pub fn parse_edge_list<R: BufRead>(
    reader: R,
    directed: bool,
    include_self_loops: bool,
) -> Result<LoadedGraph> {
    let mut raw = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<edge list>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next = |what: &str| -> Result<i64> {
            let tok = tokens.next().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("missing {what} node id"),
            })?;
            tok.parse::<i64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("invalid {what} node id {tok:?}"),
            })
        };
        let src = next("source")?;
        let dst = next("target")?;
        raw.push((src, dst));
    }
    if raw.is_empty() {
        return Err(Error::EmptyGraph("<edge list>".into()));
    }

    let mut node_ids: Vec<i64> = raw.iter().flat_map(|&(a, b)| [a, b]).collect();
    node_ids.sort_unstable();
    node_ids.dedup();
    let index: HashMap<i64, usize> = node_ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
    let edges = raw.into_iter().map(|(a, b)| (index[&a], index[&b]));
    let graph = SparseGraph::from_edges(node_ids.len(), edges, directed, include_self_loops)?;
    Ok(LoadedGraph { graph, node_ids })
}

/// Writes the graph in the same edge-list format it is read from.
/// Undirected edges are written once with `i <= j`.
pub fn write_edge_list<W: Write>(g: &SparseGraph, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "# nodes: {} directed: {} links: {}",
        g.n(),
        g.is_directed(),
        g.num_links()
    )?;
    for (i, j) in g.links() {
        if g.is_directed() || i <= j {
            writeln!(out, "{i} {j}")?;
        }
    }
    Ok(())
}

/// Writes `dense_index external_id` pairs.
pub fn write_node_map<W: Write>(node_ids: &[i64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "# index id")?;
    for (k, id) in node_ids.iter().enumerate() {
        writeln!(out, "{k} {id}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, directed: bool, loops: bool) -> Result<LoadedGraph> {
        parse_edge_list(text.as_bytes(), directed, loops)
    }

    #[test]
    fn symmetrizes_undirected() {
        let g = parse("0 1\n1 2\n", false, false).unwrap().graph;
        assert_eq!(g.n(), 3);
        assert_eq!(g.links().collect::<Vec<_>>(), vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
    }

    #[test]
    fn dedups_repeated_lines() {
        let g = parse("0 1\n0 1\n", true, false).unwrap().graph;
        assert_eq!(g.links().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn self_loop_policy() {
        let g = parse("0 0\n0 1\n", true, false).unwrap().graph;
        assert!(!g.has_link(0, 0));
        let g = parse("0 0\n0 1\n", true, true).unwrap().graph;
        assert!(g.has_link(0, 0));
    }

    #[test]
    fn comments_and_compaction() {
        let loaded = parse("# FromNodeId ToNodeId\n% mm\n10 30\n\n30 7 1.0\n", true, false).unwrap();
        assert_eq!(loaded.node_ids, vec![7, 10, 30]);
        assert_eq!(loaded.graph.links().collect::<Vec<_>>(), vec![(1, 2), (2, 0)]);
    }

    #[test]
    fn malformed_line_reports_number() {
        match parse("0 1\n# c\n2 x\n", true, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse("0 1\n5\n", true, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_is_error() {
        assert!(matches!(parse("# only comments\n", true, false), Err(Error::EmptyGraph(_))));
    }

    #[test]
    fn write_then_parse_is_identity() {
        let g = parse("0 1\n1 2\n2 0\n", false, false).unwrap().graph;
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let again = parse_edge_list(buf.as_slice(), false, false).unwrap().graph;
        assert_eq!(g, again);
    }
}
