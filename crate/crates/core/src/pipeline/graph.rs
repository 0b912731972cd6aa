//! Match graph between distributed cameras and normalized-cut partitioning.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};

use super::Subset;

/// Smallest number of shared points that can support a minimal sample.
pub const MIN_EDGE_WEIGHT: usize = 4;

pub const DEFAULT_MAX_PARTITION_SIZE: usize = 150;

/// Undirected graph over distributed-camera ids weighted by shared point count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MatchGraph {
    /// Ascending.
    pub vertices: Vec<u64>,
    /// `(a, b, weight)` with `a < b`, sorted.
    pub edges: Vec<(u64, u64, usize)>,
}

impl MatchGraph {
    pub fn new(vertices: impl IntoIterator<Item = u64>, edges: impl IntoIterator<Item = (u64, u64, usize)>) -> Self {
        let vertices: BTreeSet<u64> = vertices.into_iter().collect();
        let mut merged: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b || w == 0 || !vertices.contains(&a) || !vertices.contains(&b) {
                continue;
            }
            *merged.entry((a.min(b), a.max(b))).or_default() += w;
        }
        Self {
            vertices: vertices.into_iter().collect(),
            edges: merged.into_iter().map(|((a, b), w)| (a, b, w)).collect(),
        }
    }

    pub fn weight(&self, a: u64, b: u64) -> usize {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|&(x, y, _)| (x, y).cmp(&key))
            .map(|i| self.edges[i].2)
            .unwrap_or(0)
    }

    fn adjacency(&self) -> BTreeMap<u64, Vec<(u64, f64)>> {
        let mut adj: BTreeMap<u64, Vec<(u64, f64)>> = self.vertices.iter().map(|&v| (v, Vec::new())).collect();
        for &(a, b, w) in &self.edges {
            adj.get_mut(&a).unwrap().push((b, w as f64));
            adj.get_mut(&b).unwrap().push((a, w as f64));
        }
        adj
    }

    /// Connected components, each ascending, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<u64>> {
        components_of(&self.adjacency(), &self.vertices)
    }
}

pub fn build_match_graph(subsets: &[Subset]) -> MatchGraph {
    let ids: Vec<(u64, BTreeSet<u64>)> = subsets.iter().map(|s| (s.id, s.camera.point_ids())).collect();
    let mut edges = Vec::new();
    for (i, (a, pa)) in ids.iter().enumerate() {
        for (b, pb) in &ids[i + 1..] {
            let shared = pa.intersection(pb).count();
            if shared >= MIN_EDGE_WEIGHT {
                edges.push((*a, *b, shared));
            }
        }
    }
    MatchGraph::new(ids.iter().map(|(id, _)| *id), edges)
}

fn components_of(adj: &BTreeMap<u64, Vec<(u64, f64)>>, vertices: &[u64]) -> Vec<Vec<u64>> {
    let allowed: BTreeSet<u64> = vertices.iter().copied().collect();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in &allowed {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &(u, _) in &adj[&v] {
                if allowed.contains(&u) && seen.insert(u) {
                    comp.push(u);
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Splits every connected component by recursive spectral bisection on the
/// normalized Laplacian until all groups have at most `max_size` vertices.
/// Groups are ascending and ordered by smallest member.
pub fn partition(graph: &MatchGraph, max_size: usize) -> Vec<Vec<u64>> {
    let max_size = max_size.max(1);
    let adj = graph.adjacency();
    let mut out = Vec::new();
    let mut stack: Vec<Vec<u64>> = components_of(&adj, &graph.vertices);
    while let Some(group) = stack.pop() {
        if group.len() <= max_size {
            out.push(group);
            continue;
        }
        let (a, b) = bisect(&adj, &group);
        for part in [a, b] {
            stack.extend(components_of(&adj, &part));
        }
    }
    out.sort_by_key(|g| g[0]);
    out
}

/// Fiedler vector of the normalized Laplacian of the induced subgraph,
/// mapped back through `D^-1/2`. Vertices must induce a connected subgraph.
pub fn fiedler_vector(adj: &BTreeMap<u64, Vec<(u64, f64)>>, vertices: &[u64]) -> (Vec<f64>, f64) {
    let n = vertices.len();
    let index: BTreeMap<u64, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut w = DMatrix::<f64>::zeros(n, n);
    for (i, v) in vertices.iter().enumerate() {
        for &(u, weight) in &adj[v] {
            if let Some(&j) = index.get(&u) {
                w[(i, j)] = weight;
            }
        }
    }
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / w.row(i).sum().sqrt()).collect();
    let laplacian = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - inv_sqrt_deg[i] * w[(i, j)] * inv_sqrt_deg[j]
    });
    let eig = SymmetricEigen::new(laplacian.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let k = order[1];
    let v = eig.eigenvectors.column(k);
    let residual = (&laplacian * v - v * eig.eigenvalues[k]).norm();
    let f = (0..n).map(|i| v[i] * inv_sqrt_deg[i]).collect();
    (f, residual)
}

fn bisect(adj: &BTreeMap<u64, Vec<(u64, f64)>>, vertices: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let (mut f, _) = fiedler_vector(adj, vertices);
    let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-8 * scale;
    // Orient so the smallest id with a clear sign lands on the non-negative side.
    if let Some(first) = f.iter().find(|x| x.abs() > tol) {
        if *first < 0.0 {
            f.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (&v, &x) in vertices.iter().zip(&f) {
        if x >= -tol {
            a.push(v);
        } else {
            b.push(v);
        }
    }
    if a.is_empty() || b.is_empty() {
        let mut sorted: Vec<(f64, u64)> = f.iter().copied().zip(vertices.iter().copied()).collect();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let half = sorted.len() / 2;
        b = sorted[..half].iter().map(|&(_, v)| v).collect();
        a = sorted[half..].iter().map(|&(_, v)| v).collect();
        a.sort_unstable();
        b.sort_unstable();
    }
    (a, b)
}
