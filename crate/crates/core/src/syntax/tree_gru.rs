//! Bidirectional Tree-GRU with level batching.
//!
//! Bottom-up, a node reads its word vector with the sum of its children's
//! states as the recurrent input: `up_i = GRU(x_i, Σ_{c ∈ children(i)} up_c)`.
//! Top-down, a node reads its head's state: `down_i = GRU(x_i, down_head(i))`,
//! with a learned vector in place of the virtual root's state. The output
//! for token `i` is `up_i ⊕ down_i`.
//!
//! Nodes of every tree in a batch are grouped by subtree height (bottom-up)
//! and by depth (top-down), so each level is one batched cell step.

use crate::depparse::DependencyTree;
use crate::error::{invalid_arg, Result};
use crate::nn::{Cell, Graph, GruCell, ParamStore};
use crate::tensor::{Tensor, Var};

/// Global node ids (sentence offset + token index) grouped by level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelSchedule {
    /// Level `k` holds the nodes whose subtree height is `k + 1`.
    pub up: Vec<Vec<usize>>,
    /// Level `k` holds the nodes at depth `k + 1`.
    pub down: Vec<Vec<usize>>,
    /// Start of each sentence in the global numbering; last entry is the
    /// total node count.
    pub offsets: Vec<usize>,
}

pub fn batch_by_level(trees: &[DependencyTree]) -> LevelSchedule {
    let mut offsets = vec![0];
    let mut up: Vec<Vec<usize>> = Vec::new();
    let mut down: Vec<Vec<usize>> = Vec::new();
    for t in trees {
        let base = *offsets.last().expect("non-empty");
        for (i, (&h, &d)) in t.heights().iter().zip(&t.depths()).enumerate() {
            if up.len() < h {
                up.resize(h, Vec::new());
            }
            if down.len() < d {
                down.resize(d, Vec::new());
            }
            up[h - 1].push(base + i);
            down[d - 1].push(base + i);
        }
        offsets.push(base + t.len());
    }
    LevelSchedule { up, down, offsets }
}

/// Parameters: `{prefix}.up`, `{prefix}.down` GRUs and `{prefix}.root`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeGru {
    pub prefix: String,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl TreeGru {
    pub fn new(prefix: impl Into<String>, input_dim: usize, hidden_dim: usize) -> Self {
        TreeGru { prefix: prefix.into(), input_dim, hidden_dim }
    }

    pub fn up(&self) -> GruCell {
        GruCell::new(format!("{}.up", self.prefix), self.input_dim, self.hidden_dim)
    }

    pub fn down(&self) -> GruCell {
        GruCell::new(format!("{}.down", self.prefix), self.input_dim, self.hidden_dim)
    }

    pub fn root_name(&self) -> String {
        format!("{}.root", self.prefix)
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn init(&self, store: &mut ParamStore, range: f64, seed: u64) -> Result<()> {
        self.up().init(store, range, seed)?;
        self.down().init(store, range, seed)?;
        store.init_uniform(&self.root_name(), &[1, self.hidden_dim], range, seed)
    }

    /// Encodes every tree of a batch. `x: [N, input_dim]` holds the word
    /// vectors of all sentences back to back in the order of `trees`; the
    /// result is `[N, 2 * hidden_dim]` in the same order.
    pub fn encode(&self, g: &mut Graph, x: Var, trees: &[DependencyTree]) -> Result<Var> {
        let sched = batch_by_level(trees);
        let total = *sched.offsets.last().expect("non-empty");
        if g.shape(x)[0] != total {
            return Err(invalid_arg!("{} word vectors for trees over {total} tokens", g.shape(x)[0]));
        }
        if total == 0 {
            return Err(invalid_arg!("cannot encode an empty batch of trees"));
        }
        let heads: Vec<usize> = trees
            .iter()
            .zip(&sched.offsets)
            .flat_map(|(t, &base)| t.heads().iter().map(move |&h| if h == 0 { usize::MAX } else { base + h - 1 }))
            .collect();
        let hd = self.hidden_dim;

        // where each finished node's state lives: (level, row)
        let mut at = vec![(0usize, 0usize); total];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); total];
        for (node, &h) in heads.iter().enumerate() {
            if h != usize::MAX {
                children[h].push(node);
            }
        }

        let up_cell = self.up();
        let mut up_levels: Vec<Var> = Vec::new();
        let mut level_starts: Vec<usize> = Vec::new();
        let mut done = 0usize;
        for (k, nodes) in sched.up.iter().enumerate() {
            let xs = g.gather_rows(x, nodes)?;
            let prev = if k == 0 {
                g.constant(Tensor::zeros(&[nodes.len(), hd]))
            } else {
                let stacked = g.concat(&up_levels, 0)?;
                let groups = nodes
                    .iter()
                    .map(|&n| children[n].iter().map(|&c| level_starts[at[c].0] + at[c].1).collect())
                    .collect();
                g.segment_sum(stacked, groups)?
            };
            let out = up_cell.step(g, xs, &prev)?;
            for (r, &n) in nodes.iter().enumerate() {
                at[n] = (k, r);
            }
            level_starts.push(done);
            done += nodes.len();
            up_levels.push(out);
        }
        let up_all = g.concat(&up_levels, 0)?;
        let up_rows: Vec<usize> = (0..total).map(|n| level_starts[at[n].0] + at[n].1).collect();
        let up = g.gather_rows(up_all, &up_rows)?;

        let down_cell = self.down();
        let root = g.param(&self.root_name())?;
        let mut down_levels: Vec<Var> = Vec::new();
        let mut row_in_level = vec![0usize; total];
        let mut level_starts = Vec::new();
        let mut done = 0usize;
        for (k, nodes) in sched.down.iter().enumerate() {
            let xs = g.gather_rows(x, nodes)?;
            let prev = if k == 0 {
                g.gather_rows(root, &vec![0; nodes.len()])?
            } else {
                let rows: Vec<usize> = nodes.iter().map(|&n| row_in_level[heads[n]]).collect();
                g.gather_rows(down_levels[k - 1], &rows)?
            };
            let out = down_cell.step(g, xs, &prev)?;
            for (r, &n) in nodes.iter().enumerate() {
                row_in_level[n] = r;
            }
            level_starts.push(done);
            done += nodes.len();
            down_levels.push(out);
        }
        let down_all = g.concat(&down_levels, 0)?;
        let depth_of: Vec<usize> = {
            let mut d = vec![0; total];
            for (k, nodes) in sched.down.iter().enumerate() {
                for &n in nodes {
                    d[n] = k;
                }
            }
            d
        };
        let down_rows: Vec<usize> = (0..total).map(|n| level_starts[depth_of[n]] + row_in_level[n]).collect();
        let down = g.gather_rows(down_all, &down_rows)?;
        g.concat(&[up, down], 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> DependencyTree {
        DependencyTree::unlabeled((0..n).collect(), "dep").unwrap()
    }

    #[test]
    fn schedules() {
        let s = batch_by_level(&[chain(4), chain(4)]);
        assert_eq!(s.up.len(), 4);
        assert_eq!(s.down.len(), 4);
        let singles = vec![chain(1); 3];
        let s = batch_by_level(&singles);
        assert_eq!((s.up.len(), s.down.len()), (1, 1));
        assert_eq!(s.offsets, vec![0, 1, 2, 3]);
        let star = DependencyTree::unlabeled(vec![0, 1, 1, 1, 1, 1], "d").unwrap();
        let s = batch_by_level(&[star, chain(3)]);
        let count: usize = s.up.iter().map(Vec::len).sum();
        assert_eq!(count, 9);
        assert_eq!(s.down.iter().map(Vec::len).sum::<usize>(), 9);
    }

    #[test]
    fn single_node_reduces_to_two_cell_steps() {
        let tg = TreeGru::new("t", 3, 2);
        let mut store = ParamStore::new();
        tg.init(&mut store, 0.5, 4).unwrap();
        let mut g = Graph::eval(&store);
        let x = g.constant(crate::tensor::init_uniform(&[1, 3], -1.0, 1.0, 1).unwrap());
        let out = tg.encode(&mut g, x, &[chain(1)]).unwrap();
        let zero = g.constant(Tensor::zeros(&[1, 2]));
        let up = tg.up().step(&mut g, x, &zero).unwrap();
        let root = g.param("t.root").unwrap();
        let down = tg.down().step(&mut g, x, &root).unwrap();
        let want = Tensor::concat(&[g.value(up), g.value(down)], 1).unwrap();
        assert!(g.value(out).max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn star_children_share_the_head_state() {
        let tg = TreeGru::new("t", 2, 3);
        let mut store = ParamStore::new();
        tg.init(&mut store, 0.5, 4).unwrap();
        let mut g = Graph::eval(&store);
        // identical inputs for the five children
        let mut xv = Tensor::full(&[6, 2], 0.3);
        xv.data_mut()[0] = -1.0;
        let x = g.constant(xv);
        let star = DependencyTree::unlabeled(vec![0, 1, 1, 1, 1, 1], "d").unwrap();
        let out = tg.encode(&mut g, x, &[star]).unwrap();
        let out = g.value(out).clone();
        for i in 2..6 {
            assert_eq!(out.row_slice(i)[3..], out.row_slice(1)[3..]);
        }
    }
}
