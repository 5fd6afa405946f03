//! Subword vocabulary, greedy tokenization and the per-step token trie.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::grammar::{Grammar, SqlTerminal};

pub type PieceId = u32;

/// Id of the end-marker piece: the first line of every vocabulary file.
pub const END_ID: PieceId = 0;

const END_PIECE: &str = "</s>";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary has no pieces besides the end-marker")]
    Empty,
    #[error("line {line}: empty piece")]
    EmptyPiece { line: usize },
    #[error("line {line}: duplicate piece {piece:?}")]
    DuplicatePiece { line: usize, piece: String },
    #[error("no piece for character {0:?}")]
    Uncovered(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pieces: Vec<String>,
    ids: HashMap<String, PieceId>,
    max_len: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from its pieces; `pieces[0]` is the end-marker
    /// and is never produced by [`Vocabulary::tokenize`].
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let pieces: Vec<String> = pieces.into_iter().map(Into::into).collect();
        if pieces.len() < 2 {
            return Err(VocabError::Empty);
        }
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate().skip(1) {
            if p.is_empty() {
                return Err(VocabError::EmptyPiece { line: i + 1 });
            }
            if ids.insert(p.clone(), i as PieceId).is_some() || p == &pieces[0] {
                return Err(VocabError::DuplicatePiece {
                    line: i + 1,
                    piece: p.clone(),
                });
            }
        }
        let max_len = pieces.iter().skip(1).map(String::len).max().unwrap_or(1);
        Ok(Vocabulary { pieces, ids, max_len })
    }

    /// Parses the newline-delimited file format. Pieces keep their
    /// surrounding spaces; only the line terminator is stripped.
    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let lines = text
            .split('\n')
            .map(|l| l.strip_suffix('\r').unwrap_or(l))
            .collect::<Vec<_>>();
        let n = match lines.last() {
            Some(&"") => lines.len() - 1,
            _ => lines.len(),
        };
        Self::from_pieces(lines[..n].iter().copied())
    }

    pub fn to_file_text(&self) -> String {
        let mut out = String::new();
        for p in &self.pieces {
            out.push_str(p);
            out.push('\n');
        }
        out
    }

    /// A vocabulary covering `grammar` with about `target_size` pieces:
    /// every character of every terminal and of the space, then each
    /// terminal with and without a leading space in grammar order, then
    /// frequent substrings of the rendered terminals. Fewer pieces result if the grammar does
    /// not supply enough distinct strings; more if coverage needs them.
    pub fn derived(grammar: &Grammar, target_size: usize) -> Self {
        let mut texts: Vec<String> = grammar.terminals().iter().map(|t| t.text.clone()).collect();
        texts.extend(grammar.alias_column_universe().into_iter().map(|t| t.text));
        let mut chars: BTreeSet<char> = texts.iter().flat_map(|t| t.chars()).collect();
        chars.insert(' ');

        let mut pieces = vec![END_PIECE.to_string()];
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut push = |p: String, pieces: &mut Vec<String>| {
            if p != END_PIECE && seen.insert(p.clone()) {
                pieces.push(p);
            }
        };
        for c in chars {
            push(c.to_string(), &mut pieces);
        }
        for t in &texts {
            if pieces.len() >= target_size {
                break;
            }
            push(format!(" {t}"), &mut pieces);
            push(t.clone(), &mut pieces);
        }
        if pieces.len() < target_size {
            let mut freq: BTreeMap<String, usize> = BTreeMap::new();
            for t in &texts {
                let rendered: Vec<char> = format!(" {t}").chars().collect();
                for len in 2..=6 {
                    for w in rendered.windows(len) {
                        *freq.entry(w.iter().collect()).or_default() += 1;
                    }
                }
            }
            let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            for (s, _) in ranked {
                if pieces.len() >= target_size {
                    break;
                }
                push(s, &mut pieces);
            }
        }
        Self::from_pieces(pieces).expect("derived pieces are unique and nonempty")
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.len() <= 1
    }

    pub fn piece(&self, id: PieceId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<PieceId> {
        self.ids.get(piece).copied()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Greedy longest-match segmentation.
    pub fn try_tokenize(&self, text: &str) -> Result<Vec<PieceId>, VocabError> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < text.len() {
            let rest = &text[i..];
            let mut len = rest.len().min(self.max_len);
            let found = loop {
                if len == 0 {
                    break None;
                }
                if rest.is_char_boundary(len) {
                    if let Some(&id) = self.ids.get(&rest[..len]) {
                        break Some((id, len));
                    }
                }
                len -= 1;
            };
            match found {
                Some((id, len)) => {
                    out.push(id);
                    i += len;
                }
                None => return Err(VocabError::Uncovered(rest.chars().next().expect("nonempty"))),
            }
        }
        Ok(out)
    }

    /// Greedy longest-match segmentation.
    ///
    /// # Panics
    /// If `text` holds a character with no piece; [`Vocabulary::check_covers`]
    /// rules this out for terminal renderings.
    pub fn tokenize(&self, text: &str) -> Vec<PieceId> {
        self.try_tokenize(text).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Concatenates pieces; the end-marker contributes nothing.
    pub fn detokenize(&self, ids: &[PieceId]) -> String {
        ids.iter()
            .filter(|&&id| id != END_ID)
            .filter_map(|&id| self.piece(id))
            .collect()
    }

    /// Checks that every terminal rendering of `grammar` can be tokenized.
    pub fn check_covers(&self, grammar: &Grammar) -> Result<(), VocabError> {
        let texts = grammar
            .terminals()
            .iter()
            .map(|t| t.text.clone())
            .chain(grammar.alias_column_universe().into_iter().map(|t| t.text));
        for t in texts.chain([" ".to_string()]) {
            for c in t.chars() {
                if !self.ids.contains_key(c.encode_utf8(&mut [0; 4]) as &str) {
                    return Err(VocabError::Uncovered(c));
                }
            }
        }
        Ok(())
    }
}

pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<PieceId> {
    vocab.tokenize(text)
}

pub fn detokenize(ids: &[PieceId], vocab: &Vocabulary) -> String {
    vocab.detokenize(ids)
}

/// Tokenization of a terminal sequence terminal by terminal, each rendered
/// with its separating space. This is the segmentation the decoder offers.
pub fn tokenize_terminals<'a, I>(terminals: I, vocab: &Vocabulary) -> Vec<PieceId>
where
    I: IntoIterator<Item = &'a str>,
{
    try_tokenize_terminals(terminals, vocab).unwrap_or_else(|e| panic!("{e}"))
}

pub fn try_tokenize_terminals<'a, I>(terminals: I, vocab: &Vocabulary) -> Result<Vec<PieceId>, VocabError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = Vec::new();
    for (i, t) in terminals.into_iter().enumerate() {
        if i == 0 {
            out.extend(vocab.try_tokenize(t)?);
        } else {
            out.extend(vocab.try_tokenize(&format!(" {t}"))?);
        }
    }
    Ok(out)
}

/// Joins terminals with single spaces.
pub fn render<'a, I>(terminals: I) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = String::new();
    for t in terminals {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(t);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct TrieNode {
    children: BTreeMap<PieceId, usize>,
    marked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTrie {
    nodes: Vec<TrieNode>,
}

impl Default for TokenTrie {
    fn default() -> Self {
        Self::new()
    }
}

impl TokenTrie {
    pub fn new() -> Self {
        TokenTrie {
            nodes: vec![TrieNode::default()],
        }
    }

    pub const ROOT: usize = 0;

    /// Inserts `seq` below `node` and marks where it ends. Returns the end node.
    pub fn insert_at(&mut self, node: usize, seq: &[PieceId]) -> usize {
        let mut cur = node;
        for &id in seq {
            cur = match self.nodes[cur].children.get(&id) {
                Some(&next) => next,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[cur].children.insert(id, next);
                    next
                }
            };
        }
        self.nodes[cur].marked = true;
        cur
    }

    pub fn insert(&mut self, seq: &[PieceId]) {
        self.insert_at(Self::ROOT, seq);
    }

    /// Creates the path `seq` without marking it.
    pub fn path(&mut self, seq: &[PieceId]) -> usize {
        let end = self.insert_at(Self::ROOT, seq);
        self.nodes[end].marked = false;
        end
    }

    pub fn find(&self, seq: &[PieceId]) -> Option<usize> {
        let mut cur = Self::ROOT;
        for id in seq {
            cur = *self.nodes[cur].children.get(id)?;
        }
        Some(cur)
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = PieceId> + '_ {
        self.nodes[node].children.keys().copied()
    }

    /// Whether a stored sequence ends exactly at `seq`.
    pub fn is_marked(&self, seq: &[PieceId]) -> bool {
        self.find(seq).is_some_and(|n| self.nodes[n].marked)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1 && !self.nodes[0].marked
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Trie of `tokenize(pstar + render(n))` for every `n` in `nexts`.
pub fn build_step_trie(pstar: &str, nexts: &BTreeSet<SqlTerminal>, vocab: &Vocabulary) -> TokenTrie {
    let mut trie = TokenTrie::new();
    for n in nexts.iter().filter(|n| !n.is_end()) {
        let c = if pstar.is_empty() {
            n.text.clone()
        } else {
            format!("{pstar} {}", n.text)
        };
        trie.insert(&vocab.tokenize(&c));
    }
    trie
}

/// Children of the node reached by `p_tokens`; empty if the path is absent.
pub fn allowed_next_pieces(trie: &TokenTrie, p_tokens: &[PieceId]) -> BTreeSet<PieceId> {
    match trie.find(p_tokens) {
        Some(node) => trie.children(node).collect(),
        None => BTreeSet::new(),
    }
}
