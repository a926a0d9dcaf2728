//! Single-linkage hierarchy, condensed tree and excess-of-mass selection.

use super::mst::MstEdge;

/// Distances below this are treated as this when converted to lambda.
pub const MIN_SPLIT_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedRecord {
    pub parent: usize,
    /// A point id when `< n_points`, otherwise a cluster id.
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

/// Cluster ids start at `n_points` (the root) and increase with depth, so a
/// child cluster always has a larger id than its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    pub n_points: usize,
    pub records: Vec<CondensedRecord>,
}

impl CondensedTree {
    pub fn root(&self) -> usize {
        self.n_points
    }

    pub fn n_clusters(&self) -> usize {
        1 + self.records.iter().filter(|r| r.child >= self.n_points).count()
    }

    pub fn is_cluster(&self, id: usize) -> bool {
        id >= self.n_points
    }

    /// Lambda at which each cluster appears; the root is born at 0.
    pub fn birth_lambdas(&self) -> Vec<f64> {
        let mut birth = vec![0.0; self.n_clusters()];
        for r in &self.records {
            if self.is_cluster(r.child) {
                birth[r.child - self.n_points] = r.lambda;
            }
        }
        birth
    }

    /// Parent cluster of each cluster; the root maps to itself.
    pub fn cluster_parents(&self) -> Vec<usize> {
        let mut parent = vec![self.root(); self.n_clusters()];
        for r in &self.records {
            if self.is_cluster(r.child) {
                parent[r.child - self.n_points] = r.parent;
            }
        }
        parent
    }

    /// `sum over children (lambda - birth) * size` for every cluster.
    pub fn stabilities(&self) -> Vec<f64> {
        let birth = self.birth_lambdas();
        let mut stability = vec![0.0; birth.len()];
        for r in &self.records {
            let p = r.parent - self.n_points;
            stability[p] += (r.lambda - birth[p]) * r.child_size as f64;
        }
        stability
    }
}

/// Single-linkage merges in order of increasing MST weight. Row `m` is node
/// `n + m` with `(left, right, distance, size)`.
pub fn single_linkage(n: usize, mst: &[MstEdge]) -> Vec<(usize, usize, f64, usize)> {
    let mut sorted = mst.to_vec();
    sorted.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in sorted {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        debug_assert_ne!(ra, rb, "MST edges never close a cycle");
        let node = n + merges.len();
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        merges.push((ra, rb, e.weight, size[node]));
    }
    merges
}

/// Condenses the single-linkage hierarchy of `mst` over `n` points.
pub fn condense_tree(n: usize, mst: &[MstEdge], min_cluster_size: usize) -> CondensedTree {
    let mut tree = CondensedTree {
        n_points: n,
        records: Vec::new(),
    };
    if n < 2 {
        return tree;
    }
    let merges = single_linkage(n, mst);
    let size_of = |node: usize| if node < n { 1 } else { merges[node - n].3 };
    let leaves_under = |node: usize| {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let (l, r, _, _) = merges[x - n];
                stack.push(r);
                stack.push(l);
            }
        }
        out
    };

    // (dendrogram node, condensed label it belongs to)
    let mut stack = vec![(2 * n - 2, n)];
    let mut next_label = n + 1;
    while let Some((node, label)) = stack.pop() {
        let (left, right, dist, _) = merges[node - n];
        let lambda = 1.0 / dist.max(MIN_SPLIT_DISTANCE);
        let (ls, rs) = (size_of(left), size_of(right));
        let mut handle = |child: usize,
                          child_size: usize,
                          big: bool,
                          label_for_child: Option<usize>,
                          stack: &mut Vec<(usize, usize)>| {
            if big {
                let child_label = label_for_child.unwrap_or(label);
                if label_for_child.is_some() {
                    tree.records.push(CondensedRecord {
                        parent: label,
                        child: child_label,
                        lambda,
                        child_size,
                    });
                }
                if child >= n {
                    stack.push((child, child_label));
                } else if label_for_child.is_none() {
                    // a single point continuing its cluster: it falls out here
                    tree.records.push(CondensedRecord {
                        parent: label,
                        child,
                        lambda,
                        child_size: 1,
                    });
                }
            } else {
                for p in leaves_under(child) {
                    tree.records.push(CondensedRecord {
                        parent: label,
                        child: p,
                        lambda,
                        child_size: 1,
                    });
                }
            }
        };
        let (l_big, r_big) = (ls >= min_cluster_size, rs >= min_cluster_size);
        if l_big && r_big {
            let (ll, rl) = (next_label, next_label + 1);
            next_label += 2;
            // push right first so the left subtree is processed first
            handle(right, rs, true, Some(rl), &mut stack);
            handle(left, ls, true, Some(ll), &mut stack);
        } else {
            handle(right, rs, r_big, None, &mut stack);
            handle(left, ls, l_big, None, &mut stack);
        }
    }
    tree.records.sort_by(|x, y| {
        x.parent
            .cmp(&y.parent)
            .then(x.lambda.total_cmp(&y.lambda))
            .then(x.child.cmp(&y.child))
    });
    tree
}

/// Excess-of-mass selection. A cluster is selected when its stability is
/// strictly greater than the summed stability of the selections below it;
/// the root takes part like any other cluster. Returns selected cluster ids.
pub fn select_clusters(tree: &CondensedTree) -> Vec<usize> {
    let n = tree.n_points;
    let count = tree.n_clusters();
    if tree.records.is_empty() {
        return Vec::new();
    }
    let stability = tree.stabilities();
    let parent = tree.cluster_parents();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); count];
    for c in 1..count {
        children[parent[c] - n].push(c);
    }
    let mut best = vec![0.0; count];
    let mut selected = vec![false; count];
    for c in (0..count).rev() {
        let below: f64 = children[c].iter().map(|&ch| best[ch]).sum();
        if children[c].is_empty() || stability[c] > below {
            selected[c] = true;
            best[c] = stability[c];
        } else {
            best[c] = below;
        }
    }
    // keep only the topmost selected node on every root-to-leaf path
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(c) = stack.pop() {
        if selected[c] {
            out.push(c + n);
        } else {
            stack.extend(children[c].iter().copied());
        }
    }
    out.sort_unstable();
    out
}
