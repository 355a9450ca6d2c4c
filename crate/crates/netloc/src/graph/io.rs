//! Edge-list and Matrix Market readers and writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Graph;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    EdgeList,
    MatrixMarket,
}

impl Format {
    /// `.mtx` means Matrix Market, anything else an edge list.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("mtx") => Format::MatrixMarket,
            _ => Format::EdgeList,
        }
    }
}

pub fn read_graph(path: impl AsRef<Path>, format: Format) -> Result<Graph> {
    let text = std::fs::read_to_string(path)?;
    match format {
        Format::EdgeList => parse_edge_list(&text),
        Format::MatrixMarket => parse_matrix_market(&text),
    }
}

pub fn write_graph(g: &Graph, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let text = match format {
        Format::EdgeList => write_edge_list(g),
        Format::MatrixMarket => write_matrix_market(g),
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Collects edges keyed by unordered pair, tolerating exact repeats.
struct EdgeSet {
    map: BTreeMap<(usize, usize), f64>,
}

impl EdgeSet {
    fn new() -> Self {
        EdgeSet { map: BTreeMap::new() }
    }

    fn insert(&mut self, line: usize, i: usize, j: usize, w: f64) -> Result<()> {
        let err = |msg: String| Error::Parse { line, msg };
        if i == j {
            return Err(err(format!("self-loop at node {i}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(err(format!("non-positive weight {w} on ({i}, {j})")));
        }
        let key = (i.min(j), i.max(j));
        match self.map.get(&key) {
            Some(&old) if old != w => Err(err(format!(
                "asymmetric weights {old} and {w} for pair ({}, {})",
                key.0, key.1
            ))),
            _ => {
                self.map.insert(key, w);
                Ok(())
            }
        }
    }

    fn into_graph(self, n: usize) -> Result<Graph> {
        Graph::new(n, self.map.into_iter().map(|((i, j), w)| (i, j, w)))
    }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

/// Lines `i j [w]` (0-based, `w` defaults to 1), `#` comments, optional
/// header `n <count>`.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut declared: Option<usize> = None;
    let mut set = EdgeSet::new();
    let mut max_index: Option<usize> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks[0] == "n" {
            if toks.len() != 2 || declared.is_some() || max_index.is_some() {
                return Err(Error::Parse {
                    line,
                    msg: "header must be a single leading `n <count>` line".into(),
                });
            }
            declared = Some(parse_num(toks[1], line, "node count")?);
            continue;
        }
        if toks.len() < 2 || toks.len() > 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected `i j [w]`, got {body:?}"),
            });
        }
        let i: usize = parse_num(toks[0], line, "node index")?;
        let j: usize = parse_num(toks[1], line, "node index")?;
        let w: f64 = match toks.get(2) {
            Some(t) => parse_num(t, line, "weight")?,
            None => 1.0,
        };
        if let Some(n) = declared {
            if i >= n || j >= n {
                return Err(Error::Parse {
                    line,
                    msg: format!("index out of declared range n = {n}"),
                });
            }
        }
        set.insert(line, i, j, w)?;
        max_index = Some(max_index.unwrap_or(0).max(i).max(j));
    }
    let n = match (declared, max_index) {
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(Error::InvalidGraph("empty edge list".into())),
    };
    set.into_graph(n)
}

pub fn write_edge_list(g: &Graph) -> String {
    let mut s = format!("n {}\n", g.n());
    for e in g.edges() {
        let _ = writeln!(s, "{} {} {:?}", e.i, e.j, e.w);
    }
    s
}

/// Coordinate real (or pattern) symmetric Matrix Market, 1-based. Either
/// triangle may be stored. Negative off-diagonals mark a Laplacian, whose
/// edge weights are the negated entries; diagonals of a Laplacian are ignored.
pub fn parse_matrix_market(text: &str) -> Result<Graph> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let h: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(Error::Parse {
            line: 1,
            msg: "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`".into(),
        });
    }
    let pattern = match h[3].as_str() {
        "real" | "integer" => false,
        "pattern" => true,
        f => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unsupported field {f:?}"),
            })
        }
    };
    if h[4] != "symmetric" && h[4] != "general" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported symmetry {:?}", h[4]),
        });
    }

    let mut size: Option<(usize, usize)> = None;
    let mut entries: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (k, raw) in lines {
        let line = k + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        msg: "expected `rows cols nnz`".into(),
                    });
                }
                let r: usize = parse_num(toks[0], line, "row count")?;
                let c: usize = parse_num(toks[1], line, "column count")?;
                let nnz: usize = parse_num(toks[2], line, "entry count")?;
                if r != c {
                    return Err(Error::Parse {
                        line,
                        msg: format!("matrix must be square, got {r} x {c}"),
                    });
                }
                size = Some((r, nnz));
            }
            Some((n, _)) => {
                let want = if pattern { 2 } else { 3 };
                if toks.len() != want {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected {want} fields"),
                    });
                }
                let i: usize = parse_num(toks[0], line, "row index")?;
                let j: usize = parse_num(toks[1], line, "column index")?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(Error::Parse {
                        line,
                        msg: format!("index ({i}, {j}) out of range 1..={n}"),
                    });
                }
                let v = if pattern {
                    1.0
                } else {
                    parse_num(toks[2], line, "value")?
                };
                entries.push((line, i - 1, j - 1, v));
            }
        }
    }
    let (n, nnz) = size.ok_or(Error::Parse {
        line: 1,
        msg: "missing size line".into(),
    })?;
    if entries.len() != nnz {
        return Err(Error::InvalidGraph(format!(
            "declared {nnz} entries, found {}",
            entries.len()
        )));
    }

    let laplacian = entries.iter().any(|&(_, i, j, v)| i != j && v < 0.0);
    let mut set = EdgeSet::new();
    for (line, i, j, v) in entries {
        if i == j {
            if laplacian || v == 0.0 {
                continue;
            }
            return Err(Error::Parse {
                line,
                msg: format!("self-loop at node {i}"),
            });
        }
        let w = if laplacian { -v } else { v };
        if w == 0.0 {
            continue;
        }
        set.insert(line, i, j, w)?;
    }
    set.into_graph(n)
}

/// Symmetric adjacency, lower triangle, 1-based.
pub fn write_matrix_market(g: &Graph) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
    let _ = writeln!(s, "{} {} {}", g.n(), g.n(), g.edges().len());
    for e in g.edges() {
        let _ = writeln!(s, "{} {} {:?}", e.j + 1, e.i + 1, e.w);
    }
    s
}
