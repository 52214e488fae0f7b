use crate::error::{Error, Result};

/// Covering DAG of the componentwise order on an integer grid.
///
/// Vertices are flat row-major indices (last axis fastest); each edge
/// increments exactly one coordinate by one. [`GridPosetDag::from_edges`]
/// builds an arbitrary DAG with the same interface, which has no grid shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPosetDag {
    sizes: Vec<usize>,
    coords: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    successors: Vec<Vec<usize>>,
}

impl GridPosetDag {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::validation("grid axes must be nonempty"));
        }
        let mut strides = vec![1; sizes.len()];
        for axis in (0..sizes.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * sizes[axis + 1];
        }
        let n: usize = sizes.iter().product();
        let coords: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                sizes
                    .iter()
                    .zip(&strides)
                    .map(|(&size, &stride)| (v / stride) % size)
                    .collect()
            })
            .collect();
        let mut edges = Vec::new();
        for (v, c) in coords.iter().enumerate() {
            for axis in 0..sizes.len() {
                if c[axis] + 1 < sizes[axis] {
                    edges.push((v, v + strides[axis]));
                }
            }
        }
        Ok(GridPosetDag {
            sizes: sizes.to_vec(),
            coords,
            successors: successors(n, &edges),
            edges,
        })
    }

    /// A DAG on `n` vertices given by its covering edges.
    pub fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("poset needs at least one vertex"));
        }
        if edges.iter().any(|&(u, v)| u >= n || v >= n || u == v) {
            return Err(Error::validation("edge endpoint out of range"));
        }
        let successors = successors(n, &edges);
        // Kahn's algorithm; leftover vertices lie on a cycle
        let mut indegree = vec![0usize; n];
        for &(_, v) in &edges {
            indegree[v] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut seen = 0;
        while let Some(u) = ready.pop() {
            seen += 1;
            for &v in &successors[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(v);
                }
            }
        }
        if seen != n {
            return Err(Error::validation("edges contain a cycle"));
        }
        Ok(GridPosetDag {
            sizes: Vec::new(),
            coords: vec![Vec::new(); n],
            edges,
            successors,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// 0-based coordinates of vertex `v` (empty without a grid shape).
    pub fn coords(&self, v: usize) -> &[usize] {
        &self.coords[v]
    }

    /// True iff `u -> v` is a covering edge.
    pub fn covers(&self, u: usize, v: usize) -> bool {
        self.successors[u].contains(&v)
    }

    /// True iff `v` is reachable from `u` (reflexive).
    pub fn le(&self, u: usize, v: usize) -> bool {
        let mut stack = vec![u];
        let mut seen = vec![false; self.n_vertices()];
        while let Some(w) = stack.pop() {
            if w == v {
                return true;
            }
            for &x in &self.successors[w] {
                if !seen[x] {
                    seen[x] = true;
                    stack.push(x);
                }
            }
        }
        false
    }

    /// True iff `order` is a permutation of the vertices respecting every edge.
    pub fn is_topological(&self, order: &[usize]) -> bool {
        let n = self.n_vertices();
        if order.len() != n {
            return false;
        }
        let mut pos = vec![usize::MAX; n];
        for (i, &v) in order.iter().enumerate() {
            if v >= n || pos[v] != usize::MAX {
                return false;
            }
            pos[v] = i;
        }
        self.edges.iter().all(|&(u, v)| pos[u] < pos[v])
    }
}

fn successors(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); n];
    for &(u, v) in edges {
        out[u].push(v);
    }
    out
}
