//! Surface lexing of SQL text into lexemes.
//!
//! The lexer is deliberately schema-agnostic: it only splits text into
//! words, quoted strings, punctuation and operators, and merges the
//! multi-word keywords (`group by`, `order by`, `left join`, `right join`)
//! into single lexemes. Deciding whether a lexeme is a terminal of some
//! grammar is left to the caller.

/// Keywords of the SQL grammar, multi-word ones included.
pub const KEYWORDS: &[&str] = &[
    "from",
    "select",
    "where",
    "group by",
    "having",
    "order by",
    "limit",
    "union",
    "intersect",
    "except",
    "join",
    "left join",
    "right join",
    "on",
    "as",
    "distinct",
    "count",
    "avg",
    "min",
    "max",
    "sum",
    "and",
    "or",
    "not",
    "in",
    "like",
    "between",
    "asc",
    "desc",
];

pub const PUNCTUATION: &[&str] = &["(", ")", ",", "*"];

pub const OPERATORS: &[&str] = &["=", "!=", "<", ">", "<=", ">="];

/// Pairs of words merged into one lexeme when separated only by whitespace.
const COMPOUNDS: &[(&str, &str)] = &[
    ("group", "by"),
    ("order", "by"),
    ("left", "join"),
    ("right", "join"),
];

/// Returns true when `word` cannot be used as a table or alias identifier.
pub fn is_reserved_word(word: &str) -> bool {
    KEYWORDS
        .iter()
        .flat_map(|k| k.split(' '))
        .any(|k| k == word)
        || word == "value"
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexemeKind {
    /// Run of `[A-Za-z0-9_.]`, or a merged multi-word keyword.
    Word,
    /// Single-quoted string; `closed` is false when the closing quote is missing.
    Quoted { closed: bool },
    Punct,
    Op,
    /// A character the SQL surface syntax has no use for.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexeme {
    pub kind: LexemeKind,
    /// Canonical text; merged keywords use a single space.
    pub text: String,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '.'
}

/// Splits `input` into lexemes. Never fails; malformed pieces surface as
/// `Unknown` or unclosed `Quoted` lexemes.
pub fn lex(input: &str) -> Vec<Lexeme> {
    let mut raw = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < input.len() {
        let c = input[i..].chars().next().expect("in bounds");
        let len = c.len_utf8();
        if c.is_whitespace() {
            i += len;
            continue;
        }
        let start = i;
        let kind = if is_word_char(c) {
            while i < input.len() && is_word_char(bytes[i] as char) {
                i += 1;
            }
            LexemeKind::Word
        } else if c == '\'' {
            i += 1;
            match input[i..].find('\'') {
                Some(off) => {
                    i += off + 1;
                    LexemeKind::Quoted { closed: true }
                }
                None => {
                    i = input.len();
                    LexemeKind::Quoted { closed: false }
                }
            }
        } else if matches!(c, '(' | ')' | ',' | '*') {
            i += 1;
            LexemeKind::Punct
        } else if matches!(c, '<' | '>' | '!' | '=') {
            i += 1;
            if c != '=' && i < input.len() && (bytes[i] == b'=' || (c == '<' && bytes[i] == b'>'))
            {
                i += 1;
            }
            LexemeKind::Op
        } else {
            i += len;
            LexemeKind::Unknown
        };
        let mut text = input[start..i].to_string();
        if text == "<>" {
            text = "!=".to_string();
        }
        raw.push(Lexeme {
            kind,
            text,
            start,
            end: i,
        });
    }
    merge_compounds(raw, input)
}

fn merge_compounds(raw: Vec<Lexeme>, input: &str) -> Vec<Lexeme> {
    let mut out: Vec<Lexeme> = Vec::with_capacity(raw.len());
    let mut iter = raw.into_iter().peekable();
    while let Some(lx) = iter.next() {
        if lx.kind == LexemeKind::Word {
            if let Some(next) = iter.peek() {
                let joined = COMPOUNDS
                    .iter()
                    .any(|(a, b)| lx.text.eq_ignore_ascii_case(a) && next.text.eq_ignore_ascii_case(b));
                let gap_is_space = input[lx.end..next.start].chars().all(char::is_whitespace);
                if joined && gap_is_space && next.kind == LexemeKind::Word {
                    let next = iter.next().expect("peeked");
                    out.push(Lexeme {
                        kind: LexemeKind::Word,
                        text: format!("{} {}", lx.text, next.text),
                        start: lx.start,
                        end: next.end,
                    });
                    continue;
                }
            }
        }
        out.push(lx);
    }
    out
}
