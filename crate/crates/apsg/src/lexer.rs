//! Lexer for the Java-like statement subset.
//!
//! The same token stream feeds the parser, the entropy model and the host
//! model's vocabulary, so every consumer agrees on what a token is.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Literal,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub kind: TokenKind,
    /// 1-based source line.
    pub line: usize,
    /// 1-based column (in chars).
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated block comment starting at {line}:{column}")]
    UnterminatedComment { line: usize, column: usize },
    #[error("unterminated string literal starting at {line}:{column}")]
    UnterminatedStringLiteral { line: usize, column: usize },
    #[error("unexpected character {ch:?} at {line}:{column}")]
    UnexpectedChar {
        ch: char,
        line: usize,
        column: usize,
    },
}

pub const KEYWORDS: &[&str] = &[
    "abstract",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "final",
    "finally",
    "float",
    "for",
    "if",
    "instanceof",
    "int",
    "long",
    "new",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "switch",
    "synchronized",
    "throw",
    "throws",
    "try",
    "void",
    "while",
];

/// Literal keywords are lexed as literals, not keywords.
const LITERAL_WORDS: &[&str] = &["true", "false", "null"];

// Longest first so that maximal munch is a simple prefix scan.
const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=", ">=", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "=", "<", ">", "+", "-", "*", "/", "%",
    "!", "~", "&", "|", "^", "?", ":",
];

const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.', '@'];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || c == '$'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$'
}

struct Cursor<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
    _src: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
            _src: src,
        }
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }
}

/// Splits source text into tokens, dropping whitespace and comments.
///
/// Dotted names such as `this.count` or `System.out.println` are merged into a
/// single identifier token; field access is opaque in the subset.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor::new(source);
    let mut out = Vec::new();
    while let Some(c) = cur.peek(0) {
        let (line, column) = (cur.line, cur.column);
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if cur.starts_with("//") {
            while let Some(c) = cur.peek(0) {
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if cur.starts_with("/*") {
            cur.bump();
            cur.bump();
            loop {
                if cur.starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(LexError::UnterminatedComment { line, column });
                }
            }
            continue;
        }
        if is_ident_start(c) {
            let mut text = String::new();
            loop {
                while let Some(c) = cur.peek(0).filter(|c| is_ident_continue(*c)) {
                    text.push(c);
                    cur.bump();
                }
                // merge `a.b` chains; `a. b` stays split
                if cur.peek(0) == Some('.') && cur.peek(1).is_some_and(is_ident_start) {
                    text.push('.');
                    cur.bump();
                } else {
                    break;
                }
            }
            let kind = if LITERAL_WORDS.contains(&text.as_str()) {
                TokenKind::Literal
            } else if is_keyword(&text) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            out.push(Token {
                text,
                kind,
                line,
                column,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && cur.peek(1).is_some_and(|d| d.is_ascii_digit())) {
            let mut text = String::new();
            let mut prev = '\0';
            while let Some(c) = cur.peek(0) {
                let exp_sign = (c == '+' || c == '-')
                    && (prev == 'e' || prev == 'E')
                    && !text.starts_with("0x");
                if c.is_ascii_alphanumeric() || c == '.' || c == '_' || exp_sign {
                    text.push(c);
                    prev = c;
                    cur.bump();
                } else {
                    break;
                }
            }
            out.push(Token {
                text,
                kind: TokenKind::Literal,
                line,
                column,
            });
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut text = String::new();
            text.push(c);
            cur.bump();
            loop {
                match cur.peek(0) {
                    None | Some('\n') => {
                        return Err(LexError::UnterminatedStringLiteral { line, column })
                    }
                    Some('\\') => {
                        text.push('\\');
                        cur.bump();
                        match cur.peek(0) {
                            None | Some('\n') => {
                                return Err(LexError::UnterminatedStringLiteral { line, column })
                            }
                            Some(e) => {
                                text.push(e);
                                cur.bump();
                            }
                        }
                    }
                    Some(ch) => {
                        text.push(ch);
                        cur.bump();
                        if ch == quote {
                            break;
                        }
                    }
                }
            }
            out.push(Token {
                text,
                kind: TokenKind::Literal,
                line,
                column,
            });
            continue;
        }
        if let Some(op) = OPERATORS.iter().find(|op| cur.starts_with(op)) {
            for _ in 0..op.chars().count() {
                cur.bump();
            }
            out.push(Token {
                text: (*op).to_string(),
                kind: TokenKind::Operator,
                line,
                column,
            });
            continue;
        }
        if PUNCTUATION.contains(&c) {
            cur.bump();
            out.push(Token {
                text: c.to_string(),
                kind: TokenKind::Punctuation,
                line,
                column,
            });
            continue;
        }
        return Err(LexError::UnexpectedChar {
            ch: c,
            line,
            column,
        });
    }
    Ok(out)
}

/// Token texts only, for consumers that do not care about positions.
pub fn token_texts(source: &str) -> Result<Vec<String>, LexError> {
    Ok(tokenize(source)?.into_iter().map(|t| t.text).collect())
}
