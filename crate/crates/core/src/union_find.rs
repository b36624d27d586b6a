//! Disjoint sets and radius-graph components.

use std::collections::HashMap;

#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != node {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    /// Returns true when the two sets were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] = self.rank[a].saturating_add(1);
        }
        true
    }

    /// Component id per element, numbered 0.. in order of each component's
    /// smallest member.
    pub fn component_ids(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut root_to_id = HashMap::new();
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            let root = self.find(i);
            let next = root_to_id.len();
            ids.push(*root_to_id.entry(root).or_insert(next));
        }
        let count = root_to_id.len();
        (ids, count)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// Grid hashing pays off only in low dimension; above this, 3^d neighbor
// cells outnumber the points we would skip.
const GRID_MAX_DIM: usize = 3;
const BRUTE_FORCE_MAX_POINTS: usize = 1024;

/// Unions every pair of points (rows of `points`, `dim` wide) closer than
/// `radius`.
pub(crate) fn union_within_radius(sets: &mut DisjointSet, points: &[f64], dim: usize, radius: f64) {
    let n = points.len() / dim;
    let r2 = radius * radius;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];

    if n <= BRUTE_FORCE_MAX_POINTS || dim > GRID_MAX_DIM {
        for i in 0..n {
            for j in (i + 1)..n {
                if sq_dist(row(i), row(j)) < r2 {
                    sets.union(i, j);
                }
            }
        }
        return;
    }

    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for i in 0..n {
        cells.entry(cell_of(row(i), radius)).or_default().push(i);
    }
    let offsets = neighbor_offsets(dim);
    let mut neighbor = vec![0i64; dim];
    for (cell, members) in &cells {
        for off in &offsets {
            for k in 0..dim {
                neighbor[k] = cell[k] + off[k];
            }
            let Some(others) = cells.get(&neighbor) else {
                continue;
            };
            for &i in members {
                for &j in others {
                    if i < j && sq_dist(row(i), row(j)) < r2 {
                        sets.union(i, j);
                    }
                }
            }
        }
    }
}

fn cell_of(p: &[f64], radius: f64) -> Vec<i64> {
    p.iter().map(|&c| (c / radius).floor() as i64).collect()
}

fn neighbor_offsets(dim: usize) -> Vec<Vec<i64>> {
    (0..3usize.pow(dim as u32))
        .map(|mut code| {
            (0..dim)
                .map(|_| {
                    let o = (code % 3) as i64 - 1;
                    code /= 3;
                    o
                })
                .collect()
        })
        .collect()
}

/// For every query row, how many rows of `points` lie strictly within `radius`.
pub(crate) fn count_within_radius(
    queries: &[f64],
    points: &[f64],
    dim: usize,
    radius: f64,
) -> Vec<usize> {
    let r2 = radius * radius;
    if dim > GRID_MAX_DIM {
        return queries
            .chunks_exact(dim)
            .map(|q| {
                points
                    .chunks_exact(dim)
                    .filter(|p| sq_dist(q, p) < r2)
                    .count()
            })
            .collect();
    }
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, p) in points.chunks_exact(dim).enumerate() {
        cells.entry(cell_of(p, radius)).or_default().push(i);
    }
    let offsets = neighbor_offsets(dim);
    let mut neighbor = vec![0i64; dim];
    queries
        .chunks_exact(dim)
        .map(|q| {
            let cell = cell_of(q, radius);
            let mut count = 0;
            for off in &offsets {
                for k in 0..dim {
                    neighbor[k] = cell[k] + off[k];
                }
                if let Some(members) = cells.get(&neighbor) {
                    count += members
                        .iter()
                        .filter(|&&j| sq_dist(q, &points[j * dim..(j + 1) * dim]) < r2)
                        .count();
                }
            }
            count
        })
        .collect()
}
