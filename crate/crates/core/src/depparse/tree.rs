use crate::error::{invalid_arg, Error, Result};

/// Heads and labels of one sentence. Token `i` (0-based) has head
/// `heads[i]`, where 0 is the virtual root and `k > 0` is token `k - 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyTree {
    heads: Vec<usize>,
    labels: Vec<String>,
}

impl DependencyTree {
    /// Checks head ranges and acyclicity; multiple roots are allowed here
    /// and collapsed by [`normalize_roots`](Self::normalize_roots).
    pub fn new(heads: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let n = heads.len();
        if n == 0 {
            return Err(invalid_arg!("a tree needs at least one token"));
        }
        if labels.len() != n {
            return Err(invalid_arg!("{} labels for {n} tokens", labels.len()));
        }
        for (i, &h) in heads.iter().enumerate() {
            if h > n {
                return Err(Error::Data(format!("token {} has head {h} beyond sentence length {n}", i + 1)));
            }
            if h == i + 1 {
                return Err(Error::Data(format!("token {} is its own head", i + 1)));
            }
        }
        let tree = DependencyTree { heads, labels };
        if let Some(d) = tree.find_cycle() {
            return Err(Error::Data(format!("cycle through token {d}")));
        }
        Ok(tree)
    }

    /// Tree with every label set to `label`.
    pub fn unlabeled(heads: Vec<usize>, label: &str) -> Result<Self> {
        let n = heads.len();
        Self::new(heads, vec![label.to_string(); n])
    }

    fn find_cycle(&self) -> Option<usize> {
        let n = self.len();
        // 0 unvisited, 1 on the current path, 2 reaches the root
        let mut state = vec![0u8; n + 1];
        state[0] = 2;
        for start in 1..=n {
            let mut path = Vec::new();
            let mut v = start;
            while state[v] == 0 {
                state[v] = 1;
                path.push(v);
                v = self.heads[v - 1];
            }
            if state[v] == 1 {
                return Some(v);
            }
            for p in path {
                state[p] = 2;
            }
        }
        None
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn head(&self, token: usize) -> usize {
        self.heads[token - 1]
    }

    pub fn label(&self, token: usize) -> &str {
        &self.labels[token - 1]
    }

    /// 1-based tokens attached to the virtual root.
    pub fn roots(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&d| self.head(d) == 0).collect()
    }

    /// Dependents of `h` (0 = root) in surface order.
    pub fn children(&self, h: usize) -> Vec<usize> {
        (1..=self.len()).filter(|&d| self.head(d) == h).collect()
    }

    /// Whether `a` dominates `d` (reflexive).
    pub fn dominates(&self, a: usize, mut d: usize) -> bool {
        loop {
            if d == a {
                return true;
            }
            if d == 0 {
                return false;
            }
            d = self.head(d);
        }
    }

    /// An arc is projective when its head dominates every token strictly
    /// between head and dependent.
    pub fn arc_is_projective(&self, d: usize) -> bool {
        let h = self.head(d);
        let (lo, hi) = if h < d { (h, d) } else { (d, h) };
        (lo + 1..hi).all(|k| self.dominates(h, k))
    }

    /// No two arcs cross, with the root arc drawn from position 0.
    pub fn is_projective(&self) -> bool {
        (1..=self.len()).all(|d| self.arc_is_projective(d))
    }

    /// Reattaches every root after the first to the first root.
    pub fn normalize_roots(&mut self) -> bool {
        let roots = self.roots();
        match roots.split_first() {
            Some((&first, rest)) if !rest.is_empty() => {
                for &r in rest {
                    self.heads[r - 1] = first;
                }
                true
            }
            _ => false,
        }
    }

    /// Lifts non-projective arcs (shortest first) to the grandparent until
    /// the tree is projective. Returns the number of lifts.
    pub fn projectivize(&mut self) -> usize {
        let mut lifts = 0;
        loop {
            let worst = (1..=self.len())
                .filter(|&d| !self.arc_is_projective(d))
                .min_by_key(|&d| (self.head(d).abs_diff(d), d));
            match worst {
                Some(d) => {
                    let h = self.head(d);
                    self.heads[d - 1] = self.head(h);
                    lifts += 1;
                }
                None => return lifts,
            }
        }
    }

    /// Distance from the root for every token (a root's child has depth 1).
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len() + 1];
        let mut done = vec![false; self.len() + 1];
        done[0] = true;
        for start in 1..=self.len() {
            let mut path = Vec::new();
            let mut v = start;
            while !done[v] {
                path.push(v);
                v = self.head(v);
            }
            for &p in path.iter().rev() {
                depth[p] = depth[self.head(p)] + 1;
                done[p] = true;
            }
        }
        depth[1..].to_vec()
    }

    /// Height of each token's subtree (a leaf has height 1).
    pub fn heights(&self) -> Vec<usize> {
        let n = self.len();
        let mut height = vec![1usize; n + 1];
        let depths = self.depths();
        let mut order: Vec<usize> = (1..=n).collect();
        order.sort_by_key(|&d| std::cmp::Reverse(depths[d - 1]));
        for d in order {
            let h = self.head(d);
            if h > 0 {
                height[h] = height[h].max(height[d] + 1);
            }
        }
        height[1..].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(heads: &[usize]) -> DependencyTree {
        DependencyTree::unlabeled(heads.to_vec(), "dep").unwrap()
    }

    #[test]
    fn minimal_tree() {
        let tree = t(&[2, 0]);
        assert_eq!(tree.roots(), vec![2]);
        assert_eq!(tree.children(2), vec![1]);
        assert!(tree.is_projective());
        assert_eq!(tree.depths(), vec![2, 1]);
        assert_eq!(tree.heights(), vec![1, 2]);
    }

    #[test]
    fn invalid_trees() {
        assert!(DependencyTree::unlabeled(vec![3, 0], "x").is_err());
        assert!(DependencyTree::unlabeled(vec![2, 1], "x").is_err());
        assert!(DependencyTree::unlabeled(vec![1], "x").is_err());
        assert!(DependencyTree::unlabeled(vec![2, 3, 1, 0], "x").is_err());
        assert!(DependencyTree::unlabeled(vec![], "x").is_err());
    }

    #[test]
    fn crossing_arcs() {
        // 1 -> 3 and 2 -> 4 cross
        let mut tree = t(&[0, 4, 1, 1]);
        assert!(!tree.is_projective());
        assert!(tree.projectivize() > 0);
        assert!(tree.is_projective());
        assert_eq!(tree.roots(), vec![1]);
    }

    #[test]
    fn multiple_roots_collapse() {
        let mut tree = t(&[0, 0, 2]);
        assert!(tree.normalize_roots());
        assert_eq!(tree.heads(), &[0, 1, 2]);
        assert!(!tree.normalize_roots());
    }
}
