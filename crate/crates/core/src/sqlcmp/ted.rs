//! Ordered tree edit distance (Zhang–Shasha).

use thiserror::Error;

use super::tree::{NodeKind, SqlTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("costs must be finite and non-negative")]
    Negative,
    #[error("rename costs must be positive")]
    ZeroRename,
    #[error("deleting a terminal value must cost the same as deleting an identifier")]
    UnequalLeafDeletes,
}

/// Per-kind insert, delete and rename costs, indexed by [`NodeKind::index`].
/// Renaming across kinds costs the larger of the two kinds' rename costs;
/// renaming a node to an identical label and kind is free.
#[derive(Debug, Clone, PartialEq)]
pub struct TedCosts {
    insert: [f64; 4],
    delete: [f64; 4],
    rename: [f64; 4],
}

impl Default for TedCosts {
    fn default() -> Self {
        TedCosts {
            insert: [1.0; 4],
            delete: [1.0; 4],
            rename: [1.0; 4],
        }
    }
}

impl TedCosts {
    pub fn new(insert: [f64; 4], delete: [f64; 4], rename: [f64; 4]) -> Result<Self, CostError> {
        let all = insert.iter().chain(&delete).chain(&rename);
        if all.clone().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(CostError::Negative);
        }
        if rename.contains(&0.0) {
            return Err(CostError::ZeroRename);
        }
        if delete[NodeKind::TerminalValue.index()] != delete[NodeKind::Identifier.index()] {
            return Err(CostError::UnequalLeafDeletes);
        }
        Ok(TedCosts { insert, delete, rename })
    }

    pub fn insert(&self, k: NodeKind) -> f64 {
        self.insert[k.index()]
    }

    pub fn delete(&self, k: NodeKind) -> f64 {
        self.delete[k.index()]
    }

    pub fn rename(&self, a: (&str, NodeKind), b: (&str, NodeKind)) -> f64 {
        if a == b {
            0.0
        } else if a.1 == b.1 {
            self.rename[a.1.index()]
        } else {
            self.rename[a.1.index()].max(self.rename[b.1.index()])
        }
    }
}

struct Flat<'a> {
    nodes: Vec<(&'a str, NodeKind)>,
    lml: Vec<usize>,
    keyroots: Vec<usize>,
}

fn flatten(t: &SqlTree) -> Flat<'_> {
    fn walk<'a>(t: &'a SqlTree, nodes: &mut Vec<(&'a str, NodeKind)>, lml: &mut Vec<usize>) -> usize {
        let mut first_leaf = None;
        for c in &t.children {
            let l = walk(c, nodes, lml);
            first_leaf.get_or_insert(l);
        }
        let idx = nodes.len();
        nodes.push((t.label.as_str(), t.kind));
        let l = first_leaf.unwrap_or(idx);
        lml.push(l);
        l
    }
    let mut nodes = Vec::new();
    let mut lml = Vec::new();
    walk(t, &mut nodes, &mut lml);
    let n = nodes.len();
    let keyroots = (0..n)
        .filter(|&i| !(i + 1..n).any(|j| lml[j] == lml[i]))
        .collect();
    Flat { nodes, lml, keyroots }
}

/// Minimum total cost of node insertions, deletions and renames turning
/// `a` into `b`.
pub fn ted(a: &SqlTree, b: &SqlTree, costs: &TedCosts) -> f64 {
    let fa = flatten(a);
    let fb = flatten(b);
    let (n, m) = (fa.nodes.len(), fb.nodes.len());
    let mut td = vec![vec![0.0f64; m]; n];
    let del = |x: usize| costs.delete(fa.nodes[x].1);
    let ins = |y: usize| costs.insert(fb.nodes[y].1);
    for &i in &fa.keyroots {
        for &j in &fb.keyroots {
            let (li, lj) = (fa.lml[i], fb.lml[j]);
            let (rows, cols) = (i - li + 2, j - lj + 2);
            let mut fd = vec![vec![0.0f64; cols]; rows];
            for di in 1..rows {
                fd[di][0] = fd[di - 1][0] + del(li + di - 1);
            }
            for dj in 1..cols {
                fd[0][dj] = fd[0][dj - 1] + ins(lj + dj - 1);
            }
            for di in 1..rows {
                for dj in 1..cols {
                    let (x, y) = (li + di - 1, lj + dj - 1);
                    let d = fd[di - 1][dj] + del(x);
                    let s = fd[di][dj - 1] + ins(y);
                    if fa.lml[x] == li && fb.lml[y] == lj {
                        let r = fd[di - 1][dj - 1] + costs.rename(fa.nodes[x], fb.nodes[y]);
                        fd[di][dj] = d.min(s).min(r);
                        td[x][y] = fd[di][dj];
                    } else {
                        let r = fd[fa.lml[x] - li][fb.lml[y] - lj] + td[x][y];
                        fd[di][dj] = d.min(s).min(r);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}
