#![allow(dead_code)]

use netloc::graph::{build_laplacian, Graph};
use netloc::perturbation::Scenario;
use netloc::Laplacian;
use rand::Rng;

/// Random spanning tree plus extra edges, weights in `[0.5, 2]`.
pub fn random_connected<R: Rng>(rng: &mut R, n: usize, extra: usize) -> Graph {
    let mut edges = std::collections::BTreeMap::new();
    for k in 1..n {
        let p = rng.random_range(0..k);
        edges.insert((p, k), rng.random_range(0.5..2.0));
    }
    for _ in 0..extra {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            edges.insert((i.min(j), i.max(j)), rng.random_range(0.5..2.0));
        }
    }
    Graph::new(n, edges.into_iter().map(|((i, j), w)| (i, j, w))).unwrap()
}

/// One scenario of each kind, at random nodes and a random existing edge.
pub fn scenarios_for<R: Rng>(rng: &mut R, g: &Graph) -> [Scenario; 4] {
    let e = g.edges()[rng.random_range(0..g.edges().len())];
    let mut node = || rng.random_range(0..g.n());
    [
        Scenario::Edge { k: e.i, l: e.j },
        Scenario::GlobalNode { k: node() },
        Scenario::LocalNode { k: node() },
        Scenario::LocalReciprocal { k: node() },
    ]
}

pub fn k2() -> Laplacian {
    build_laplacian(&Graph::new(2, [(0, 1, 1.0)]).unwrap())
}
