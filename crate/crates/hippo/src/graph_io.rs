//! Edge-list text format: a header line `m n`, then `n` lines `i j` with
//! 1-based agent indices.

use std::fmt::Write as _;

use hippo_core::graph::Topology;

use crate::data::ParseError;

pub fn write_edge_list(topology: &Topology) -> String {
    let mut out = format!("{} {}\n", topology.agents(), topology.edge_count());
    for &(i, j) in topology.edges() {
        let _ = writeln!(out, "{} {}", i + 1, j + 1);
    }
    out
}

fn two_numbers(line: &str, no: usize) -> Result<(usize, usize), ParseError> {
    let err = |message: String| ParseError { line: no, message };
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 2 {
        return Err(err(format!("expected two integers, got {line:?}")));
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|_| err(format!("invalid integer {t:?}")));
    Ok((parse(toks[0])?, parse(toks[1])?))
}

/// Parses and validates an edge list; the graph must be connected.
pub fn read_edge_list(text: &str) -> Result<Topology, ParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hno, header) = lines.next().ok_or(ParseError { line: 1, message: "missing header".into() })?;
    let (m, n) = two_numbers(header, hno + 1)?;
    let mut pairs = Vec::with_capacity(n);
    let mut last_line = hno + 1;
    for (no, line) in lines {
        let (i, j) = two_numbers(line, no + 1)?;
        if i == 0 || j == 0 || i > m || j > m {
            return Err(ParseError { line: no + 1, message: format!("agent index out of range 1..={m}") });
        }
        pairs.push((i - 1, j - 1));
        last_line = no + 1;
    }
    if pairs.len() != n {
        return Err(ParseError {
            line: last_line,
            message: format!("header declares {n} edges, found {}", pairs.len()),
        });
    }
    Topology::from_edges(m, &pairs).map_err(|e| ParseError { line: last_line, message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hippo_core::graph::generate_connected_gnp;

    #[test]
    fn round_trip() {
        let topo = generate_connected_gnp(12, 0.3, 5, 10_000).unwrap();
        let text = write_edge_list(&topo);
        assert_eq!(read_edge_list(&text).unwrap().edges(), topo.edges());
        assert!(text.starts_with(&format!("12 {}\n", topo.edge_count())));
    }

    #[test]
    fn path_of_three() {
        assert_eq!(write_edge_list(&Topology::path(3).unwrap()), "3 2\n1 2\n2 3\n");
        let t = read_edge_list("3 2\n2 1\n3 2\n").unwrap();
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn malformed_lists_are_rejected() {
        assert_eq!(read_edge_list("3 2\n1 2\n1 4\n").unwrap_err().line, 3);
        assert!(read_edge_list("3 2\n1 2\n").unwrap_err().message.contains("declares"));
        assert!(read_edge_list("4 2\n1 2\n3 4\n").is_err());
        assert!(read_edge_list("").is_err());
        assert_eq!(read_edge_list("3 1\n1 x\n").unwrap_err().line, 2);
    }
}
