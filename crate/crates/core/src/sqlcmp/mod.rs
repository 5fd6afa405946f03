//! Canonical normalization, exact match, tree conversion and tree edit
//! distance of SQL queries.
//!
//! Normalization applies a closed set of rewrites:
//! - keywords and identifiers are lowercased and terminals joined by one space;
//! - select-list items are sorted by their rendering;
//! - a `left join` directly after the first table becomes a `right join`
//!   with its two tables swapped;
//! - a from-clause made only of inner joins has its tables sorted and its
//!   join equalities pooled (each equality ordered, the list sorted) after
//!   the last table;
//! - optionally, every literal becomes the placeholder `value`.

pub mod ast;
pub mod scope;
pub mod ted;
pub mod tree;

use ast::{ColExpr, Cond, From, JoinKind, Literal, Operand, Predicate, Query, Scalar, SetExpr, TableRef};
pub use ast::{parse, ParseError};
pub use scope::{check_scope, ScopeError};
pub use ted::{ted, TedCosts};
pub use tree::{to_tree, to_tree_with, NodeKind, SqlTree};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub anonymize_terminals: bool,
}

impl NormalizeOptions {
    pub fn anonymized() -> Self {
        NormalizeOptions {
            anonymize_terminals: true,
        }
    }
}

fn norm_literal(l: &Literal, opts: NormalizeOptions) -> Literal {
    if opts.anonymize_terminals {
        Literal::Placeholder
    } else {
        l.clone()
    }
}

fn norm_scalar(s: &Scalar, opts: NormalizeOptions) -> Scalar {
    match s {
        Scalar::Lit(l) => Scalar::Lit(norm_literal(l, opts)),
        Scalar::Col(c) => Scalar::Col(c.clone()),
    }
}

fn norm_cond(c: &Cond, opts: NormalizeOptions) -> Cond {
    let pred = |p: &Predicate| match p {
        Predicate::Compare { lhs, op, rhs } => Predicate::Compare {
            lhs: lhs.clone(),
            op: op.clone(),
            rhs: match rhs {
                Operand::Scalar(s) => Operand::Scalar(norm_scalar(s, opts)),
                Operand::Sub(e) => Operand::Sub(Box::new(norm_set(e, opts))),
            },
        },
        Predicate::Between { lhs, not, lo, hi } => Predicate::Between {
            lhs: lhs.clone(),
            not: *not,
            lo: norm_scalar(lo, opts),
            hi: norm_scalar(hi, opts),
        },
        Predicate::In { lhs, not, sub } => Predicate::In {
            lhs: lhs.clone(),
            not: *not,
            sub: Box::new(norm_set(sub, opts)),
        },
        Predicate::Like { lhs, not, pattern } => Predicate::Like {
            lhs: lhs.clone(),
            not: *not,
            pattern: norm_literal(pattern, opts),
        },
    };
    Cond {
        first: pred(&c.first),
        rest: c.rest.iter().map(|(op, p)| (*op, pred(p))).collect(),
    }
}

fn norm_from(f: &From) -> From {
    let mut f = f.clone();
    if f.joins.first().is_some_and(|j| j.kind == JoinKind::Left) {
        let j = &mut f.joins[0];
        j.kind = JoinKind::Right;
        std::mem::swap(&mut f.first, &mut j.table);
    }
    if !f.joins.is_empty() && f.joins.iter().all(|j| j.kind == JoinKind::Inner) {
        let mut tables: Vec<TableRef> = std::iter::once(f.first.clone())
            .chain(f.joins.iter().map(|j| j.table.clone()))
            .collect();
        tables.sort_by_cached_key(render_table_ref);
        let mut on: Vec<(String, String)> = f
            .joins
            .iter()
            .flat_map(|j| j.on.iter().cloned())
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        on.sort();
        let mut rest = tables.split_off(1);
        let n = rest.len();
        f.first = tables.pop().expect("one table");
        f.joins = rest
            .drain(..)
            .enumerate()
            .map(|(i, table)| ast::Join {
                kind: JoinKind::Inner,
                table,
                on: if i + 1 == n { on.clone() } else { Vec::new() },
            })
            .collect();
    }
    f
}

fn norm_query(q: &Query, opts: NormalizeOptions) -> Query {
    let mut select = q.select.clone();
    select.sort_by_cached_key(render_col);
    Query {
        from: norm_from(&q.from),
        distinct: q.distinct,
        select,
        where_: q.where_.as_ref().map(|c| norm_cond(c, opts)),
        group_by: q.group_by.clone(),
        having: q.having.as_ref().map(|c| norm_cond(c, opts)),
        order_by: q.order_by.clone(),
        limit: q.limit.as_ref().map(|l| norm_literal(l, opts)),
    }
}

pub(crate) fn norm_set(e: &SetExpr, opts: NormalizeOptions) -> SetExpr {
    match e {
        SetExpr::Query(q) => SetExpr::Query(Box::new(norm_query(q, opts))),
        SetExpr::Compound { op, left, right } => SetExpr::Compound {
            op: *op,
            left: Box::new(norm_set(left, opts)),
            right: Box::new(norm_set(right, opts)),
        },
    }
}

fn render_table_ref(t: &TableRef) -> String {
    match &t.alias {
        Some(a) => format!("{} as {a}", t.table),
        None => t.table.clone(),
    }
}

pub(crate) fn render_col(c: &ColExpr) -> String {
    match c {
        ColExpr::Column(s) => s.clone(),
        ColExpr::Star => "*".into(),
        ColExpr::Agg { func, distinct, arg } => {
            let d = if *distinct { "distinct " } else { "" };
            format!("{func} ( {d}{} )", render_col(arg))
        }
    }
}

pub(crate) fn render_literal(l: &Literal) -> String {
    match l {
        Literal::Number(s) | Literal::Str(s) => s.clone(),
        Literal::Placeholder => "value".into(),
    }
}

fn render_scalar(s: &Scalar) -> String {
    match s {
        Scalar::Col(c) => render_col(c),
        Scalar::Lit(l) => render_literal(l),
    }
}

fn not_kw(not: bool) -> &'static str {
    if not {
        "not "
    } else {
        ""
    }
}

fn render_pred(p: &Predicate) -> String {
    match p {
        Predicate::Compare { lhs, op, rhs } => {
            let r = match rhs {
                Operand::Scalar(s) => render_scalar(s),
                Operand::Sub(e) => format!("( {} )", render(e)),
            };
            format!("{} {op} {r}", render_col(lhs))
        }
        Predicate::Between { lhs, not, lo, hi } => format!(
            "{} {}between {} and {}",
            render_col(lhs),
            not_kw(*not),
            render_scalar(lo),
            render_scalar(hi)
        ),
        Predicate::In { lhs, not, sub } => format!("{} {}in ( {} )", render_col(lhs), not_kw(*not), render(sub)),
        Predicate::Like { lhs, not, pattern } => {
            format!("{} {}like {}", render_col(lhs), not_kw(*not), render_literal(pattern))
        }
    }
}

fn render_cond(c: &Cond) -> String {
    let mut out = render_pred(&c.first);
    for (op, p) in &c.rest {
        out.push_str(match op {
            ast::BoolOp::And => " and ",
            ast::BoolOp::Or => " or ",
        });
        out.push_str(&render_pred(p));
    }
    out
}

fn render_query(q: &Query) -> String {
    let mut out = format!("from {}", render_table_ref(&q.from.first));
    for j in &q.from.joins {
        out.push_str(&format!(" {} {}", j.kind.as_str(), render_table_ref(&j.table)));
        if !j.on.is_empty() {
            let eqs: Vec<String> = j.on.iter().map(|(a, b)| format!("{a} = {b}")).collect();
            out.push_str(&format!(" on {}", eqs.join(" and ")));
        }
    }
    out.push_str(" select ");
    if q.distinct {
        out.push_str("distinct ");
    }
    out.push_str(&q.select.iter().map(render_col).collect::<Vec<_>>().join(" , "));
    if let Some(c) = &q.where_ {
        out.push_str(" where ");
        out.push_str(&render_cond(c));
    }
    if !q.group_by.is_empty() {
        out.push_str(" group by ");
        out.push_str(&q.group_by.join(" , "));
    }
    if let Some(c) = &q.having {
        out.push_str(" having ");
        out.push_str(&render_cond(c));
    }
    if !q.order_by.is_empty() {
        let items: Vec<String> = q
            .order_by
            .iter()
            .map(|o| match o.dir {
                Some(ast::Direction::Asc) => format!("{} asc", render_col(&o.expr)),
                Some(ast::Direction::Desc) => format!("{} desc", render_col(&o.expr)),
                None => render_col(&o.expr),
            })
            .collect();
        out.push_str(" order by ");
        out.push_str(&items.join(" , "));
    }
    if let Some(l) = &q.limit {
        out.push_str(" limit ");
        out.push_str(&render_literal(l));
    }
    out
}

/// Single-spaced text of a statement, one space between terminals.
pub fn render(e: &SetExpr) -> String {
    match e {
        SetExpr::Query(q) => render_query(q),
        SetExpr::Compound { op, left, right } => format!("{} {} {}", render(left), op.as_str(), render(right)),
    }
}

pub fn normalize(sql: &str, opts: NormalizeOptions) -> Result<String, ParseError> {
    Ok(render(&norm_set(&parse(sql)?, opts)))
}

pub fn exact_match(a: &str, b: &str, opts: NormalizeOptions) -> Result<bool, ParseError> {
    Ok(normalize(a, opts)? == normalize(b, opts)?)
}
