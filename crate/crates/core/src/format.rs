//! Graph file formats.
//!
//! Text form, one record per line:
//!
//! ```text
//! # comment
//! n 3
//! e 0 1 1.0
//! e 1 2 0.5
//! ```
//!
//! JSON form: `{"n": 3, "edges": [[0, 1, 1.0], [1, 2, 0.5]]}`. The two are
//! interchangeable; [`parse_graph`] picks the JSON reader when the first
//! non-blank character is `{`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NoisyGraph;

/// The accepted graph file grammar, as shown to command-line users.
pub const GRAPH_GRAMMAR: &str = "\
Graph file grammar (text form, one record per line):
  # comment                 everything after '#' is ignored; blank lines are skipped
  n <count>                 node count; exactly once, before any edge; ids are 0..count-1
  e <i> <j> <variance>      undirected link between i and j with noise variance > 0
No self-loops, no repeated pairs, and the graph must be connected.
JSON form, chosen when the first non-blank character is '{':
  {\"n\": 3, \"edges\": [[0, 1, 1.0], [1, 2, 0.5]]}
";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

/// Parses either format and validates the graph (including connectivity).
pub fn parse_graph(input: &str) -> Result<NoisyGraph> {
    let (n, edges) = parse_records(input)?;
    NoisyGraph::new(n, edges)
}

/// Like [`parse_graph`] but accepts disconnected graphs.
pub fn parse_graph_possibly_disconnected(input: &str) -> Result<NoisyGraph> {
    let (n, edges) = parse_records(input)?;
    NoisyGraph::new_possibly_disconnected(n, edges)
}

fn parse_records(input: &str) -> Result<(usize, Vec<(usize, usize, f64)>)> {
    if input.trim_start().starts_with('{') {
        let g: GraphJson = serde_json::from_str(input).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        return Ok((g.n, g.edges));
    }

    let mut n = None;
    let mut edges = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("n") => {
                if n.is_some() {
                    return Err(err("repeated header"));
                }
                let count = fields
                    .next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| err("expected `n <count>`"))?;
                n = Some(count);
            }
            Some("e") => {
                if n.is_none() {
                    return Err(err("edge before `n` header"));
                }
                let i = fields.next().and_then(|s| s.parse::<usize>().ok());
                let j = fields.next().and_then(|s| s.parse::<usize>().ok());
                let nu = fields.next().and_then(|s| s.parse::<f64>().ok());
                match (i, j, nu) {
                    (Some(i), Some(j), Some(nu)) => edges.push((i, j, nu)),
                    _ => return Err(err("expected `e <i> <j> <nu>`")),
                }
            }
            Some(other) => return Err(err(&format!("unknown record `{other}`"))),
            None => unreachable!(),
        }
        if fields.next().is_some() {
            return Err(err("trailing fields"));
        }
    }
    let n = n.ok_or(Error::Parse {
        line: 0,
        msg: "missing `n <count>` header".into(),
    })?;
    Ok((n, edges))
}

/// Writes the text form. Variances use the shortest round-tripping decimal.
pub fn write_graph_text(g: &NoisyGraph) -> String {
    let mut out = format!("n {}\n", g.node_count());
    for e in g.edges() {
        out.push_str(&format!("e {} {} {}\n", e.i, e.j, e.nu));
    }
    out
}

pub fn write_graph_json(g: &NoisyGraph) -> String {
    let doc = GraphJson {
        n: g.node_count(),
        edges: g.edges().iter().map(|e| (e.i, e.j, e.nu)).collect(),
    };
    serde_json::to_string(&doc).expect("graph serializes")
}
