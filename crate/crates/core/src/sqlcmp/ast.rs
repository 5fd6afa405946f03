//! Syntax tree of from-first SQL and its recursive-descent parser.

use thiserror::Error;

use crate::lexer::{lex, LexemeKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at token {at}: {message}")]
pub struct ParseError {
    pub at: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Intersect,
    Except,
}

impl SetOp {
    pub fn as_str(self) -> &'static str {
        match self {
            SetOp::Union => "union",
            SetOp::Intersect => "intersect",
            SetOp::Except => "except",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetExpr {
    Query(Box<Query>),
    Compound {
        op: SetOp,
        left: Box<SetExpr>,
        right: Box<SetExpr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub from: From,
    pub distinct: bool,
    pub select: Vec<ColExpr>,
    pub where_: Option<Cond>,
    pub group_by: Vec<String>,
    pub having: Option<Cond>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct From {
    pub first: TableRef,
    pub joins: Vec<Join>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRef {
    pub table: String,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    Right,
}

impl JoinKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JoinKind::Inner => "join",
            JoinKind::Left => "left join",
            JoinKind::Right => "right join",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Join {
    pub kind: JoinKind,
    pub table: TableRef,
    pub on: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColExpr {
    Column(String),
    Star,
    Agg {
        func: String,
        distinct: bool,
        arg: Box<ColExpr>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Number(String),
    /// Text including the quotes.
    Str(String),
    Placeholder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scalar {
    Col(ColExpr),
    Lit(Literal),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Scalar(Scalar),
    Sub(Box<SetExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predicate {
    Compare {
        lhs: ColExpr,
        op: String,
        rhs: Operand,
    },
    Between {
        lhs: ColExpr,
        not: bool,
        lo: Scalar,
        hi: Scalar,
    },
    In {
        lhs: ColExpr,
        not: bool,
        sub: Box<SetExpr>,
    },
    Like {
        lhs: ColExpr,
        not: bool,
        pattern: Literal,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    And,
    Or,
}

/// `first (op predicate)*`, grouped to the right as the grammar does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cond {
    pub first: Predicate,
    pub rest: Vec<(BoolOp, Predicate)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Asc,
    Desc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderItem {
    pub expr: ColExpr,
    pub dir: Option<Direction>,
}

const AGGREGATES: &[&str] = &["count", "avg", "min", "max", "sum"];
const CMP_OPS: &[&str] = &["=", "!=", "<", ">", "<=", ">="];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Str(String),
    Sym(String),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    c.next().is_some_and(|h| h.is_ascii_alphabetic() || h == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
        && !crate::lexer::is_reserved_word(s)
}

fn is_column(s: &str) -> bool {
    match s.split_once('.') {
        Some((q, c)) => is_ident(q) && (is_ident(c) || c == "*"),
        None => is_ident(s),
    }
}

fn is_number(s: &str) -> bool {
    let mut parts = s.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && parts
            .next()
            .is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            at: self.pos,
            message: message.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_word(&self) -> Option<&str> {
        match self.peek() {
            Some(Tok::Word(w)) => Some(w),
            _ => None,
        }
    }

    fn at(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w) | Tok::Sym(w)) if w == s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.at(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`"))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek_word() {
            Some(w) if is_ident(w) => {
                let w = w.to_string();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn column(&mut self) -> Result<String, ParseError> {
        match self.peek_word() {
            Some(w) if is_column(w) && !w.ends_with(".*") => {
                let w = w.to_string();
                self.pos += 1;
                Ok(w)
            }
            _ => self.err("expected a column"),
        }
    }

    fn set_expr(&mut self) -> Result<SetExpr, ParseError> {
        let mut left = SetExpr::Query(Box::new(self.query()?));
        loop {
            let op = match self.peek_word() {
                Some("union") => SetOp::Union,
                Some("intersect") => SetOp::Intersect,
                Some("except") => SetOp::Except,
                _ => return Ok(left),
            };
            self.pos += 1;
            let right = SetExpr::Query(Box::new(self.query()?));
            left = SetExpr::Compound {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        self.expect("from")?;
        let from = self.from()?;
        self.expect("select")?;
        let distinct = self.eat("distinct");
        let mut select = vec![self.col_expr(true)?];
        while self.eat(",") {
            select.push(self.col_expr(true)?);
        }
        let where_ = if self.eat("where") { Some(self.cond()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat("group by") {
            group_by.push(self.column()?);
            while self.eat(",") {
                group_by.push(self.column()?);
            }
        }
        let having = if self.eat("having") { Some(self.cond()?) } else { None };
        let mut order_by = Vec::new();
        if self.eat("order by") {
            loop {
                let expr = self.col_expr(false)?;
                let dir = if self.eat("asc") {
                    Some(Direction::Asc)
                } else if self.eat("desc") {
                    Some(Direction::Desc)
                } else {
                    None
                };
                order_by.push(OrderItem { expr, dir });
                if !self.eat(",") {
                    break;
                }
            }
        }
        let limit = if self.eat("limit") {
            match self.literal()? {
                l @ (Literal::Number(_) | Literal::Placeholder) => Some(l),
                Literal::Str(_) => return self.err("limit takes a number"),
            }
        } else {
            None
        };
        Ok(Query {
            from,
            distinct,
            select,
            where_,
            group_by,
            having,
            order_by,
            limit,
        })
    }

    fn table_ref(&mut self) -> Result<TableRef, ParseError> {
        let table = self.ident("a table")?;
        let alias = if self.eat("as") { Some(self.ident("an alias")?) } else { None };
        Ok(TableRef { table, alias })
    }

    fn from(&mut self) -> Result<From, ParseError> {
        let first = self.table_ref()?;
        let mut joins = Vec::new();
        loop {
            let kind = match self.peek_word() {
                Some("join") => JoinKind::Inner,
                Some("left join") => JoinKind::Left,
                Some("right join") => JoinKind::Right,
                _ => break,
            };
            self.pos += 1;
            let table = self.table_ref()?;
            let mut on = Vec::new();
            if self.eat("on") {
                loop {
                    let a = self.column()?;
                    self.expect("=")?;
                    let b = self.column()?;
                    on.push((a, b));
                    if !self.eat("and") {
                        break;
                    }
                }
            }
            joins.push(Join { kind, table, on });
        }
        Ok(From { first, joins })
    }

    fn col_expr(&mut self, star_ok: bool) -> Result<ColExpr, ParseError> {
        if star_ok && self.eat("*") {
            return Ok(ColExpr::Star);
        }
        if let Some(w) = self.peek_word() {
            if AGGREGATES.contains(&w) {
                let func = w.to_string();
                self.pos += 1;
                self.expect("(")?;
                let distinct = self.eat("distinct");
                let arg = self.col_expr(true)?;
                self.expect(")")?;
                return Ok(ColExpr::Agg {
                    func,
                    distinct,
                    arg: Box::new(arg),
                });
            }
        }
        Ok(ColExpr::Column(self.column()?))
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let lit = match self.peek() {
            Some(Tok::Str(s)) => Literal::Str(s.clone()),
            Some(Tok::Word(w)) if w == "value" => Literal::Placeholder,
            Some(Tok::Word(w)) if is_number(w) => Literal::Number(w.clone()),
            _ => return self.err("expected a literal"),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn scalar(&mut self) -> Result<Scalar, ParseError> {
        match self.peek() {
            Some(Tok::Str(_)) => Ok(Scalar::Lit(self.literal()?)),
            Some(Tok::Word(w)) if w == "value" || is_number(w) => Ok(Scalar::Lit(self.literal()?)),
            _ => Ok(Scalar::Col(self.col_expr(false)?)),
        }
    }

    fn subquery(&mut self) -> Result<Box<SetExpr>, ParseError> {
        self.expect("(")?;
        let e = self.set_expr()?;
        self.expect(")")?;
        Ok(Box::new(e))
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        let lhs = self.col_expr(false)?;
        if let Some(Tok::Sym(op)) = self.peek() {
            if CMP_OPS.contains(&op.as_str()) {
                let op = op.clone();
                self.pos += 1;
                let rhs = if self.at("(") {
                    Operand::Sub(self.subquery()?)
                } else {
                    Operand::Scalar(self.scalar()?)
                };
                return Ok(Predicate::Compare { lhs, op, rhs });
            }
        }
        let not = self.eat("not");
        if self.eat("between") {
            let lo = self.scalar()?;
            self.expect("and")?;
            let hi = self.scalar()?;
            return Ok(Predicate::Between { lhs, not, lo, hi });
        }
        if self.eat("in") {
            let sub = self.subquery()?;
            return Ok(Predicate::In { lhs, not, sub });
        }
        if self.eat("like") {
            let pattern = match self.literal()? {
                Literal::Number(_) => return self.err("like takes a string"),
                l => l,
            };
            return Ok(Predicate::Like { lhs, not, pattern });
        }
        self.err("expected a comparison")
    }

    fn cond(&mut self) -> Result<Cond, ParseError> {
        let first = self.predicate()?;
        let mut rest = Vec::new();
        loop {
            let op = if self.eat("and") {
                BoolOp::And
            } else if self.eat("or") {
                BoolOp::Or
            } else {
                break;
            };
            rest.push((op, self.predicate()?));
        }
        Ok(Cond { first, rest })
    }
}

fn toks(sql: &str) -> Result<Vec<Tok>, ParseError> {
    lex(sql)
        .into_iter()
        .enumerate()
        .map(|(i, l)| match l.kind {
            LexemeKind::Word => Ok(Tok::Word(l.text.to_ascii_lowercase())),
            LexemeKind::Quoted { closed: true } => Ok(Tok::Str(l.text)),
            LexemeKind::Punct | LexemeKind::Op => Ok(Tok::Sym(l.text)),
            LexemeKind::Quoted { closed: false } => Err(ParseError {
                at: i,
                message: "unterminated string".into(),
            }),
            LexemeKind::Unknown => Err(ParseError {
                at: i,
                message: format!("unexpected `{}`", l.text),
            }),
        })
        .collect()
}

/// Parses a whole statement. Keywords and identifiers are case-folded;
/// string literals keep their case.
pub fn parse(sql: &str) -> Result<SetExpr, ParseError> {
    let mut p = Parser { toks: toks(sql)?, pos: 0 };
    let e = p.set_expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}
