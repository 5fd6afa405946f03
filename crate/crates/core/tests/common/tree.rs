//! Exhaustive tree edit distance: the cheapest mapping between nodes that
//! is one-to-one and preserves ancestry and left-to-right order. Only
//! feasible for small trees.

use rand::Rng;
use sqlgate::sqlcmp::{NodeKind, SqlTree, TedCosts};

struct Node {
    label: String,
    kind: NodeKind,
    /// Postorder index of the node's leftmost descendant.
    first: usize,
}

fn postorder(t: &SqlTree, out: &mut Vec<Node>) -> usize {
    let mut first = None;
    for c in &t.children {
        let f = postorder(c, out);
        first.get_or_insert(f);
    }
    let idx = out.len();
    out.push(Node {
        label: t.label.clone(),
        kind: t.kind,
        first: first.unwrap_or(idx),
    });
    first.unwrap_or(idx)
}

fn flat(t: &SqlTree) -> Vec<Node> {
    let mut out = Vec::new();
    postorder(t, &mut out);
    out
}

// Postorder i is a proper ancestor of j iff j lies in i's span.
fn ancestor(n: &[Node], i: usize, j: usize) -> bool {
    i != j && n[i].first <= j && j < i
}

fn compatible(a: &[Node], b: &[Node], (i1, j1): (usize, usize), (i2, j2): (usize, usize)) -> bool {
    (i1 < i2) == (j1 < j2) && ancestor(a, i1, i2) == ancestor(b, j1, j2) && ancestor(a, i2, i1) == ancestor(b, j2, j1)
}

struct Search<'a> {
    a: &'a [Node],
    b: &'a [Node],
    costs: &'a TedCosts,
    used: Vec<bool>,
    pairs: Vec<(usize, usize)>,
    best: f64,
}

impl Search<'_> {
    fn run(&mut self, i: usize, acc: f64) {
        let (a, b) = (self.a, self.b);
        if acc >= self.best {
            return;
        }
        if i == a.len() {
            let ins: f64 = (0..b.len()).filter(|&j| !self.used[j]).map(|j| self.costs.insert(b[j].kind)).sum();
            self.best = self.best.min(acc + ins);
            return;
        }
        self.run(i + 1, acc + self.costs.delete(a[i].kind));
        for j in 0..b.len() {
            if self.used[j] || !self.pairs.iter().all(|&p| compatible(a, b, p, (i, j))) {
                continue;
            }
            let r = self.costs.rename((&a[i].label, a[i].kind), (&b[j].label, b[j].kind));
            self.used[j] = true;
            self.pairs.push((i, j));
            self.run(i + 1, acc + r);
            self.pairs.pop();
            self.used[j] = false;
        }
    }
}

pub fn exhaustive_ted(x: &SqlTree, y: &SqlTree, costs: &TedCosts) -> f64 {
    let (a, b) = (flat(x), flat(y));
    let mut s = Search {
        a: &a,
        b: &b,
        costs,
        used: vec![false; b.len()],
        pairs: Vec::new(),
        best: f64::INFINITY,
    };
    s.run(0, 0.0);
    s.best
}

/// Random ordered tree of `n` nodes over a three-letter alphabet; each new
/// node is appended as the last child of a random earlier node.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> SqlTree {
    let mut parent = vec![usize::MAX];
    for i in 1..n {
        parent.push(rng.gen_range(0..i));
    }
    let labels: Vec<String> = (0..n).map(|_| ["a", "b", "c"][rng.gen_range(0..3)].to_string()).collect();
    let kinds: Vec<NodeKind> = (0..n).map(|_| NodeKind::ALL[rng.gen_range(0..4)]).collect();
    fn build(i: usize, parent: &[usize], labels: &[String], kinds: &[NodeKind]) -> SqlTree {
        let kids = (0..parent.len()).filter(|&c| parent[c] == i).map(|c| build(c, parent, labels, kinds)).collect();
        SqlTree::new(labels[i].clone(), kinds[i], kids)
    }
    build(0, &parent, &labels, &kinds)
}

/// Random valid costs: leaf-kind deletes tied together, renames positive.
pub fn random_costs(rng: &mut impl Rng) -> TedCosts {
    let mut pick = || [0.5, 1.0, 1.5, 2.0][rng.gen_range(0..4)];
    let insert = [pick(), pick(), pick(), pick()];
    let leaf = pick();
    let delete = [pick(), pick(), leaf, leaf];
    let rename = [pick(), pick(), pick(), pick()];
    TedCosts::new(insert, delete, rename).unwrap()
}
