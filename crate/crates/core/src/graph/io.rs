//! Plain-text graph files.
//!
//! ```text
//! pal-graph v1 n=3
//! 0 1 1
//! 1 2 0
//! ```
//!
//! Only known entries are written, each symmetric pair once with `i <= j`.

use std::fmt::Write as _;

use super::SimilarityGraph;
use crate::error::{PalError, Result};

pub const GRAPH_HEADER: &str = "pal-graph";

pub fn write_graph(g: &SimilarityGraph) -> String {
    let mut out = format!("{GRAPH_HEADER} v1 n={}\n", g.n());
    for (i, j, v) in g.known() {
        let _ = writeln!(out, "{i} {j} {v:?}");
    }
    out
}

pub fn read_graph(text: &str) -> Result<SimilarityGraph> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| PalError::parse(1, "empty input"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(GRAPH_HEADER) {
        return Err(PalError::parse(1, "missing pal-graph header"));
    }
    match parts.next() {
        Some("v1") => {}
        Some(other) => return Err(PalError::UnsupportedVersion(other.to_string())),
        None => return Err(PalError::parse(1, "missing version")),
    }
    let n = parts
        .next()
        .and_then(|p| p.strip_prefix("n="))
        .and_then(|p| p.parse::<usize>().ok())
        .ok_or_else(|| PalError::parse(1, "expected n=<count>"))?;
    if parts.next().is_some() {
        return Err(PalError::parse(1, "trailing header fields"));
    }
    let mut g = SimilarityGraph::new(n);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(PalError::parse(lineno, "expected `i j value`"));
        }
        let i: usize = fields[0]
            .parse()
            .map_err(|_| PalError::parse(lineno, "bad row index"))?;
        let j: usize = fields[1]
            .parse()
            .map_err(|_| PalError::parse(lineno, "bad column index"))?;
        let v: f64 = fields[2]
            .parse()
            .map_err(|_| PalError::parse(lineno, "bad value"))?;
        if i > j {
            return Err(PalError::parse(lineno, "entries must have i <= j"));
        }
        g.set(i, j, v)
            .map_err(|e| PalError::parse(lineno, e.to_string()))?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut g = SimilarityGraph::new(4);
        g.set(0, 1, 1.0).unwrap();
        g.set(3, 2, -1.0).unwrap();
        g.set(1, 1, 0.1 + 0.2).unwrap();
        let text = write_graph(&g);
        assert!(text.starts_with("pal-graph v1 n=4\n"));
        assert_eq!(read_graph(&text).unwrap(), g);
    }

    #[test]
    fn rejects_unknown_version() {
        assert_eq!(
            read_graph("pal-graph v2 n=3\n"),
            Err(PalError::UnsupportedVersion("v2".into()))
        );
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(read_graph("pal-graph v1 n=2\n1 0 1\n").is_err());
        assert!(read_graph("pal-graph v1 n=2\n0 2 1\n").is_err());
        assert!(read_graph("pal-graph v1 n=2\n0 1\n").is_err());
        assert!(read_graph("graph v1 n=2\n").is_err());
    }
}
