//! Bipartite Tanner graph of a parity-check matrix.

use alloc::vec;
use alloc::vec::Vec;

use crate::gf2::BinMatrix;

/// Variable/check adjacency with stable edge ids.
///
/// Edges are sorted by `(check, variable)`; edge `e` joins `edge_check[e]`
/// and `edge_var[e]`. Per-node edge lists are sorted by the opposite
/// endpoint, so sums over neighbourhoods run in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TannerGraph {
    pub var_count: usize,
    pub check_count: usize,
    pub edge_check: Vec<usize>,
    pub edge_var: Vec<usize>,
    pub check_edges: Vec<Vec<usize>>,
    pub var_edges: Vec<Vec<usize>>,
}

impl TannerGraph {
    pub fn from_matrix(h: &BinMatrix) -> Self {
        let mut edge_check = Vec::new();
        let mut edge_var = Vec::new();
        let mut check_edges = vec![Vec::new(); h.rows()];
        let mut var_edges = vec![Vec::new(); h.cols()];
        for c in 0..h.rows() {
            for v in h.row_support(c) {
                let e = edge_check.len();
                edge_check.push(c);
                edge_var.push(v);
                check_edges[c].push(e);
                var_edges[v].push(e);
            }
        }
        Self {
            var_count: h.cols(),
            check_count: h.rows(),
            edge_check,
            edge_var,
            check_edges,
            var_edges,
        }
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_check.len()
    }

    pub fn to_matrix(&self) -> BinMatrix {
        let mut h = BinMatrix::zeros(self.check_count, self.var_count);
        for (&c, &v) in self.edge_check.iter().zip(&self.edge_var) {
            h.set(c, v, true);
        }
        h
    }

    /// Number of connected components, counting isolated nodes.
    pub fn component_count(&self) -> usize {
        let total = self.var_count + self.check_count;
        let mut parent: Vec<usize> = (0..total).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (&c, &v) in self.edge_check.iter().zip(&self.edge_var) {
            let a = find(&mut parent, v);
            let b = find(&mut parent, self.var_count + c);
            if a != b {
                parent[a] = b;
            }
        }
        (0..total).filter(|&x| find(&mut parent, x) == x).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{bch_seed_codes, build_hgp};

    #[test]
    fn hgp_graph_counts() {
        let (c1, c2) = bch_seed_codes();
        let code = build_hgp(&c1, &c2).unwrap();
        let g = code.tanner_graph();
        assert_eq!(g.var_count, 258);
        assert_eq!(g.check_count, 101);
        assert_eq!(g.edge_count(), code.hx.count_ones() + code.hz.count_ones());
        assert_eq!(g.component_count(), 2);
        assert_eq!(g.to_matrix(), code.check_matrix());
    }

    #[test]
    fn edges_sorted_and_consistent() {
        let h = BinMatrix::from_rows(&[[1u8, 1, 0, 1], [0, 1, 1, 0]]);
        let g = TannerGraph::from_matrix(&h);
        let pairs: Vec<_> = g.edge_check.iter().zip(&g.edge_var).map(|(&c, &v)| (c, v)).collect();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (0, 3), (1, 1), (1, 2)]);
        assert_eq!(g.var_edges[1], vec![1, 3]);
        assert_eq!(g.check_edges[1], vec![3, 4]);
        assert_eq!(g.component_count(), 1);
    }
}
