//! Undirected weighted graphs, their Laplacians and the banded example family.

mod io;

pub use io::{
    parse_edge_list, parse_matrix_market, read_graph, write_edge_list, write_graph,
    write_matrix_market, Format,
};

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An undirected edge, stored with `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Undirected weighted graph on nodes `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

impl Graph {
    /// Validates and normalises `(i, j, w)` triples. Edges are stored with
    /// `i < j`, sorted lexicographically.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(Error::SelfLoop { node: i });
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) has non-positive weight {w}"
                )));
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key, w).is_some() {
                return Err(Error::DuplicateEdge { i: key.0, j: key.1 });
            }
        }
        let edges = seen.into_iter().map(|((i, j), w)| Edge { i, j, w }).collect();
        Ok(Graph { n, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.edges
            .binary_search_by(|e| (e.i, e.j).cmp(&key))
            .is_ok()
    }

    /// Neighbour lists, ascending.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push(e.j);
            adj[e.j].push(e.i);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Weighted degrees.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.i] += e.w;
            d[e.j] += e.w;
        }
        d
    }

    /// Largest index span `|i - j|` over all edges (0 for an edgeless graph).
    pub fn index_bandwidth(&self) -> usize {
        self.edges.iter().map(|e| e.j - e.i).max().unwrap_or(0)
    }
}

/// Dense symmetric graph Laplacian `L = D - A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    m: DMatrix<f64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Largest diagonal entry.
    pub fn max_degree(&self) -> f64 {
        self.m.diagonal().max()
    }

    /// `L x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x
    }

    /// Recover the graph from the off-diagonal pattern.
    pub fn to_graph(&self) -> Graph {
        let n = self.n();
        let mut edges = Vec::new();
        for j in 0..n {
            for i in 0..j {
                let v = self.m[(i, j)];
                if v < 0.0 {
                    edges.push((i, j, -v));
                }
            }
        }
        Graph::new(n, edges).expect("Laplacian off-diagonals form a valid graph")
    }
}

/// `L[i][j] = -w`, `L[i][i] =` weighted degree. Entries are written
/// symmetrically, so `L` is exactly symmetric.
pub fn build_laplacian(g: &Graph) -> Laplacian {
    let n = g.n;
    let mut m = DMatrix::zeros(n, n);
    for e in &g.edges {
        m[(e.i, e.j)] = -e.w;
        m[(e.j, e.i)] = -e.w;
        m[(e.i, e.i)] += e.w;
        m[(e.j, e.j)] += e.w;
    }
    Laplacian { m }
}

/// Unit-weight edges between every pair with `1 <= |i - j| <= b`.
pub fn gen_banded_path(n: usize, b: usize) -> Result<Graph> {
    if b < 1 || b >= n {
        return Err(Error::Parameter(format!(
            "band must satisfy 1 <= b < n (got n = {n}, b = {b})"
        )));
    }
    let edges = (0..n).flat_map(|i| (i + 1..=(i + b).min(n - 1)).map(move |j| (i, j, 1.0)));
    Graph::new(n, edges)
}

/// Banded graph parameterised by its full band width, the count of
/// off-diagonals on both sides together: `gen_banded_path(n, max(1, width / 2))`.
///
/// This is the convention in which the number of localized eigenvectors is
/// close to the band width.
pub fn gen_banded_width(n: usize, width: usize) -> Result<Graph> {
    gen_banded_path(n, (width / 2).max(1))
}

/// Breadth-first test for a single connected component.
pub fn is_connected(g: &Graph) -> bool {
    let d = bfs(g, &[0]);
    d.iter().all(|&x| x != usize::MAX)
}

/// Unweighted hop distance from each node to the nearest source.
///
/// Unreachable nodes get `usize::MAX`.
pub fn graph_distance(g: &Graph, sources: &[usize]) -> Result<Vec<usize>> {
    if sources.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= g.n) {
        return Err(Error::Parameter(format!("source {s} out of range")));
    }
    Ok(bfs(g, sources))
}

fn bfs(g: &Graph, sources: &[usize]) -> Vec<usize> {
    let adj = g.adjacency();
    let mut dist = vec![usize::MAX; g.n];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p3() -> Graph {
        Graph::new(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_p3() {
        let l = build_laplacian(&p3());
        let want = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(l.matrix(), &want);
    }

    #[test]
    fn laplacian_k2_weights() {
        let l = build_laplacian(&Graph::new(2, [(0, 1, 1.0)]).unwrap());
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.]));
        let l = build_laplacian(&Graph::new(2, [(1, 0, 2.0)]).unwrap());
        assert_eq!(l.matrix(), &DMatrix::from_row_slice(2, 2, &[2., -2., -2., 2.]));
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(
            Graph::new(3, [(0, 1, 1.0), (1, 0, 1.0)]),
            Err(Error::DuplicateEdge { i: 0, j: 1 })
        ));
        assert!(matches!(Graph::new(3, [(2, 2, 1.0)]), Err(Error::SelfLoop { node: 2 })));
        assert!(Graph::new(3, [(0, 1, 0.0)]).is_err());
        assert!(Graph::new(3, [(0, 3, 1.0)]).is_err());
    }

    #[test]
    fn banded_small_cases() {
        let g = gen_banded_path(3, 1).unwrap();
        assert_eq!(g, p3());
        let k4 = gen_banded_path(4, 3).unwrap();
        assert_eq!(k4.edges().len(), 6);
        assert!(gen_banded_path(4, 4).is_err());
        assert!(gen_banded_path(4, 0).is_err());
    }

    #[test]
    fn banded_width_halves() {
        assert_eq!(gen_banded_width(100, 40).unwrap(), gen_banded_path(100, 20).unwrap());
        assert_eq!(gen_banded_width(10, 1).unwrap(), gen_banded_path(10, 1).unwrap());
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&p3()));
        let two = Graph::new(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(!is_connected(&two));
        assert!(is_connected(&gen_banded_path(100, 40).unwrap()));
    }

    #[test]
    fn distances() {
        assert_eq!(graph_distance(&p3(), &[0]).unwrap(), vec![0, 1, 2]);
        assert_eq!(graph_distance(&p3(), &[0, 2]).unwrap(), vec![0, 1, 0]);
        let g = gen_banded_path(10, 3).unwrap();
        assert_eq!(graph_distance(&g, &[0]).unwrap(), vec![0, 1, 1, 1, 2, 2, 2, 3, 3, 3]);
        assert!(matches!(graph_distance(&p3(), &[]), Err(Error::EmptySet)));
    }

    #[test]
    fn bandwidth() {
        assert_eq!(gen_banded_path(50, 7).unwrap().index_bandwidth(), 7);
        assert!(p3().has_edge(1, 0));
        assert!(!p3().has_edge(0, 2));
    }
}
