use serde::{Deserialize, Serialize};

use super::SimilarityGraph;

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn merge(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn connected(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Components {
    pub count: usize,
    /// Component id per node, numbered by each component's smallest member.
    pub assignment: Vec<usize>,
}

impl Components {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Components of the graph whose edges are the positive known entries.
pub fn connected_components(g: &SimilarityGraph) -> Components {
    let n = g.n();
    let mut uf = UnionFind::new(n);
    for (i, j, v) in g.known() {
        if v > 0.0 && i != j {
            uf.merge(i, j);
        }
    }
    let mut id_of_root = vec![usize::MAX; n];
    let mut assignment = Vec::with_capacity(n);
    let mut count = 0;
    for i in 0..n {
        let r = uf.find(i);
        if id_of_root[r] == usize::MAX {
            id_of_root[r] = count;
            count += 1;
        }
        assignment.push(id_of_root[r]);
    }
    Components { count, assignment }
}
