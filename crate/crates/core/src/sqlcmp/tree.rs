//! Labeled ordered trees of normalized queries.

use serde::Serialize;

use super::ast::{parse, BoolOp, ColExpr, Cond, Direction, Operand, ParseError, Predicate, Query, Scalar, SetExpr, TableRef};
use super::{norm_set, render_literal, NormalizeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Clause,
    Operator,
    Identifier,
    TerminalValue,
}

impl NodeKind {
    pub const ALL: [NodeKind; 4] = [NodeKind::Clause, NodeKind::Operator, NodeKind::Identifier, NodeKind::TerminalValue];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SqlTree {
    pub label: String,
    pub kind: NodeKind,
    pub children: Vec<SqlTree>,
}

impl SqlTree {
    pub fn new(label: impl Into<String>, kind: NodeKind, children: Vec<SqlTree>) -> Self {
        SqlTree {
            label: label.into(),
            kind,
            children,
        }
    }

    pub fn leaf(label: impl Into<String>, kind: NodeKind) -> Self {
        Self::new(label, kind, Vec::new())
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(SqlTree::size).sum::<usize>()
    }

    /// Bracket notation, e.g. `{sql{from{user}}}`.
    pub fn bracket(&self) -> String {
        let mut out = format!("{{{}", self.label);
        for c in &self.children {
            out.push_str(&c.bracket());
        }
        out.push('}');
        out
    }
}

fn clause(label: &str, children: Vec<SqlTree>) -> SqlTree {
    SqlTree::new(label, NodeKind::Clause, children)
}

fn op(label: &str, children: Vec<SqlTree>) -> SqlTree {
    SqlTree::new(label, NodeKind::Operator, children)
}

fn ident(label: &str) -> SqlTree {
    SqlTree::leaf(label, NodeKind::Identifier)
}

fn table_ref(t: &TableRef) -> SqlTree {
    match &t.alias {
        Some(a) => op("as", vec![ident(&t.table), ident(a)]),
        None => ident(&t.table),
    }
}

fn col(c: &ColExpr) -> SqlTree {
    match c {
        ColExpr::Column(s) => ident(s),
        ColExpr::Star => ident("*"),
        ColExpr::Agg { func, distinct, arg } => {
            let inner = col(arg);
            let inner = if *distinct { op("distinct", vec![inner]) } else { inner };
            op(func, vec![inner])
        }
    }
}

fn scalar(s: &Scalar) -> SqlTree {
    match s {
        Scalar::Col(c) => col(c),
        Scalar::Lit(l) => SqlTree::leaf(render_literal(l), NodeKind::TerminalValue),
    }
}

fn negated(not: bool, word: &str) -> String {
    if not {
        format!("not {word}")
    } else {
        word.to_string()
    }
}

fn predicate(p: &Predicate) -> SqlTree {
    match p {
        Predicate::Compare { lhs, op: o, rhs } => {
            let r = match rhs {
                Operand::Scalar(s) => scalar(s),
                Operand::Sub(e) => set_expr(e),
            };
            op(o, vec![col(lhs), r])
        }
        Predicate::Between { lhs, not, lo, hi } => op(&negated(*not, "between"), vec![col(lhs), scalar(lo), scalar(hi)]),
        Predicate::In { lhs, not, sub } => op(&negated(*not, "in"), vec![col(lhs), set_expr(sub)]),
        Predicate::Like { lhs, not, pattern } => op(
            &negated(*not, "like"),
            vec![col(lhs), SqlTree::leaf(render_literal(pattern), NodeKind::TerminalValue)],
        ),
    }
}

// `p1 op1 p2 op2 p3` nests to the right: op1(p1, op2(p2, p3)).
fn cond(c: &Cond) -> SqlTree {
    let preds: Vec<&Predicate> = std::iter::once(&c.first).chain(c.rest.iter().map(|(_, p)| p)).collect();
    let mut acc = predicate(preds[preds.len() - 1]);
    for i in (0..c.rest.len()).rev() {
        let label = match c.rest[i].0 {
            BoolOp::And => "and",
            BoolOp::Or => "or",
        };
        acc = op(label, vec![predicate(preds[i]), acc]);
    }
    acc
}

fn clauses(q: &Query) -> Vec<SqlTree> {
    let mut from = vec![table_ref(&q.from.first)];
    for j in &q.from.joins {
        let mut kids = vec![table_ref(&j.table)];
        kids.extend(j.on.iter().map(|(a, b)| op("=", vec![ident(a), ident(b)])));
        from.push(op(j.kind.as_str(), kids));
    }
    let mut out = vec![clause("from", from)];
    let items: Vec<SqlTree> = q.select.iter().map(col).collect();
    out.push(clause("select", if q.distinct { vec![op("distinct", items)] } else { items }));
    if let Some(c) = &q.where_ {
        out.push(clause("where", vec![cond(c)]));
    }
    if !q.group_by.is_empty() {
        out.push(clause("group by", q.group_by.iter().map(|g| ident(g)).collect()));
    }
    if let Some(c) = &q.having {
        out.push(clause("having", vec![cond(c)]));
    }
    if !q.order_by.is_empty() {
        let items = q
            .order_by
            .iter()
            .map(|o| match o.dir {
                Some(Direction::Asc) => op("asc", vec![col(&o.expr)]),
                Some(Direction::Desc) => op("desc", vec![col(&o.expr)]),
                None => col(&o.expr),
            })
            .collect();
        out.push(clause("order by", items));
    }
    if let Some(l) = &q.limit {
        out.push(clause("limit", vec![SqlTree::leaf(render_literal(l), NodeKind::TerminalValue)]));
    }
    out
}

fn set_expr(e: &SetExpr) -> SqlTree {
    match e {
        SetExpr::Query(q) => clause("query", clauses(q)),
        SetExpr::Compound { op: o, left, right } => op(o.as_str(), vec![set_expr(left), set_expr(right)]),
    }
}

/// Tree of the normalized statement, literals kept.
pub fn to_tree(sql: &str) -> Result<SqlTree, ParseError> {
    to_tree_with(sql, NormalizeOptions::default())
}

/// Tree of the normalized statement. A single query puts its clause nodes
/// directly under the `sql` root; a compound statement puts its set
/// operator there, over one `query` node per operand.
pub fn to_tree_with(sql: &str, opts: NormalizeOptions) -> Result<SqlTree, ParseError> {
    let e = norm_set(&parse(sql)?, opts);
    let children = match &e {
        SetExpr::Query(q) => clauses(q),
        compound => vec![set_expr(compound)],
    };
    Ok(clause("sql", children))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_clause_tree() {
        let t = to_tree("from user select user.name").unwrap();
        assert_eq!(t.bracket(), "{sql{from{user}}{select{user.name}}}");
        assert_eq!(t.children[0].kind, NodeKind::Clause);
        assert_eq!(t.children[1].children[0].kind, NodeKind::Identifier);
    }

    #[test]
    fn order_by_child() {
        let t = to_tree("from user select user.name order by user.country").unwrap();
        let ob = t.children.iter().find(|c| c.label == "order by").unwrap();
        assert_eq!(ob.children, vec![ident("user.country")]);
    }

    #[test]
    fn compound_and_literals() {
        let t = to_tree("from a select a.x where a.y = 3 union from b select b.x").unwrap();
        assert_eq!(t.children.len(), 1);
        assert_eq!(t.children[0].label, "union");
        let w = &t.children[0].children[0].children[2];
        assert_eq!(w.bracket(), "{where{={a.y}{3}}}");
        assert_eq!(w.children[0].children[1].kind, NodeKind::TerminalValue);
    }

    #[test]
    fn leaves_are_identifiers_or_values() {
        fn walk(t: &SqlTree) {
            if t.children.is_empty() {
                assert!(matches!(t.kind, NodeKind::Identifier | NodeKind::TerminalValue), "{}", t.label);
            }
            t.children.iter().for_each(walk);
        }
        walk(&to_tree("from a as t1 join b on t1.k = b.k select count ( distinct t1.x ) where t1.y between 1 and 5 and b.z like 'q%' or b.w not in ( from c select c.w ) group by t1.x having count ( * ) > 2 order by t1.x desc limit 3").unwrap());
    }
}
