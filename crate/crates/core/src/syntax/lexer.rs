//! Line-aware tokenizer for the supported Python subset.
//!
//! Tokens are grouped into logical lines: physical lines joined by open
//! brackets or a trailing backslash. Indentation is kept as raw text so the
//! parser can check block structure and fixes can copy it verbatim.

use super::{ParseError, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Name,
    Number,
    Str,
    Op,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokKind,
    pub text: String,
    pub start: Pos,
    pub end: Pos,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokKind::Op && self.text == op
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokKind::Name && self.text == kw
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LogicalLine {
    pub indent: String,
    pub tokens: Vec<Token>,
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

struct Cursor<'a> {
    lines: &'a [String],
    line: usize,
    col: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.lines[self.line][self.col..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line + 1,
            col: self.col,
        }
    }
}

pub(crate) fn tokenize(lines: &[String]) -> Result<Vec<LogicalLine>, ParseError> {
    let mut out = Vec::new();
    let mut cur = Cursor {
        lines,
        line: 0,
        col: 0,
    };
    let mut tokens: Vec<Token> = Vec::new();
    let mut indent = String::new();
    let mut brackets: Vec<(char, Pos)> = Vec::new();

    while cur.line < lines.len() {
        let text = &lines[cur.line];
        let continuing = !tokens.is_empty();
        if !continuing {
            let trimmed = text.trim_start_matches([' ', '\t', '\x0c']);
            let body = trimmed.trim_end_matches(['\r', ' ', '\t']);
            // Blank lines, comments, and notebook magics (`%timeit`, `!pip`).
            if body.is_empty() || body.starts_with(['#', '%', '!']) {
                cur.line += 1;
                continue;
            }
            indent = text[..text.len() - trimmed.len()].to_string();
            cur.col = indent.len();
        }

        let mut joined = false;
        while let Some(c) = cur.peek() {
            match c {
                ' ' | '\t' | '\x0c' | '\r' => cur.col += 1,
                '#' => break,
                '\\' => {
                    if cur.rest()[1..].trim_end_matches('\r').is_empty() {
                        joined = true;
                        break;
                    }
                    return Err(ParseError::at(
                        cur.pos(),
                        "unexpected character after line continuation",
                    ));
                }
                '\'' | '"' => {
                    let start = cur.pos();
                    tokens.push(lex_string(&mut cur, start)?)
                }
                c if c.is_ascii_digit() => tokens.push(lex_number(&mut cur)),
                '.' if cur.rest()[1..].starts_with(|d: char| d.is_ascii_digit()) => {
                    tokens.push(lex_number(&mut cur))
                }
                c if c == '_' || c.is_alphabetic() => {
                    let start = cur.pos();
                    let ident_len = cur
                        .rest()
                        .char_indices()
                        .find(|&(_, ch)| !(ch == '_' || ch.is_alphanumeric()))
                        .map_or(cur.rest().len(), |(i, _)| i);
                    let ident = &cur.rest()[..ident_len];
                    let after = cur.rest()[ident_len..].chars().next();
                    if is_string_prefix(ident) && matches!(after, Some('\'' | '"')) {
                        tokens.push(lex_string(&mut cur, start)?);
                    } else {
                        let ident = ident.to_string();
                        cur.col += ident_len;
                        tokens.push(Token {
                            kind: TokKind::Name,
                            text: ident,
                            start,
                            end: cur.pos(),
                        });
                    }
                }
                _ => {
                    let start = cur.pos();
                    let rest = cur.rest();
                    let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) else {
                        return Err(ParseError::at(start, format!("unexpected character {c:?}")));
                    };
                    cur.col += op.len();
                    match *op {
                        "(" | "[" | "{" => brackets.push((c, start)),
                        ")" | "]" | "}" => {
                            let open = match c {
                                ')' => '(',
                                ']' => '[',
                                _ => '{',
                            };
                            match brackets.pop() {
                                Some((o, _)) if o == open => {}
                                _ => return Err(ParseError::at(start, format!("unmatched {c:?}"))),
                            }
                        }
                        _ => {}
                    }
                    tokens.push(Token {
                        kind: TokKind::Op,
                        text: (*op).to_string(),
                        start,
                        end: cur.pos(),
                    });
                }
            }
        }

        cur.line += 1;
        cur.col = 0;
        if brackets.is_empty() && !joined && !tokens.is_empty() {
            out.push(LogicalLine {
                indent: std::mem::take(&mut indent),
                tokens: std::mem::take(&mut tokens),
            });
        }
    }

    if let Some((c, pos)) = brackets.first() {
        return Err(ParseError::at(*pos, format!("{c:?} is never closed")));
    }
    if !tokens.is_empty() {
        return Err(ParseError::at(
            tokens[0].start,
            "unexpected end of input after line continuation",
        ));
    }
    Ok(out)
}

fn is_string_prefix(ident: &str) -> bool {
    ident.len() <= 2
        && ident
            .chars()
            .all(|c| matches!(c.to_ascii_lowercase(), 'r' | 'b' | 'u' | 'f'))
}

fn lex_number(cur: &mut Cursor<'_>) -> Token {
    let start = cur.pos();
    let rest = cur.rest();
    let mut len = 0;
    let bytes = rest.as_bytes();
    while len < bytes.len() {
        let b = bytes[len];
        let exponent_sign = (b == b'+' || b == b'-')
            && len > 0
            && matches!(bytes[len - 1], b'e' | b'E')
            && !rest.starts_with("0x")
            && !rest.starts_with("0X");
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || exponent_sign {
            len += 1;
        } else {
            break;
        }
    }
    cur.col += len;
    Token {
        kind: TokKind::Number,
        text: rest[..len].to_string(),
        start,
        end: cur.pos(),
    }
}

/// Lexes a (possibly prefixed, possibly triple-quoted) string literal that
/// starts at `start`. Triple-quoted strings may span physical lines.
fn lex_string(cur: &mut Cursor<'_>, start: Pos) -> Result<Token, ParseError> {
    let rest = cur.rest();
    let prefix_len = rest.find(['\'', '"']).expect("caller checked for a quote");
    let raw = rest[..prefix_len].to_ascii_lowercase().contains('r');
    let quote = rest.as_bytes()[prefix_len] as char;
    let triple: String = quote.to_string().repeat(3);
    let is_triple = rest[prefix_len..].starts_with(&triple);
    let delim = if is_triple { triple } else { quote.to_string() };
    cur.col += prefix_len + delim.len();

    let mut text = String::new();
    loop {
        let line = &cur.lines[cur.line];
        let bytes = line.as_bytes();
        let mut i = cur.col;
        let mut closed = None;
        while i < bytes.len() {
            if bytes[i] == b'\\' && !(raw && i + 1 == bytes.len()) {
                i += 2;
                continue;
            }
            if line[i..].starts_with(&delim) {
                closed = Some(i + delim.len());
                break;
            }
            i += 1;
        }
        let segment_start = if cur.line + 1 == start.line {
            start.col
        } else {
            0
        };
        match closed {
            Some(end) => {
                text.push_str(&line[segment_start..end]);
                cur.col = end;
                return Ok(Token {
                    kind: TokKind::Str,
                    text,
                    start,
                    end: cur.pos(),
                });
            }
            None => {
                let escaped_newline = line.ends_with('\\');
                if !is_triple && !escaped_newline {
                    return Err(ParseError::at(start, "unterminated string literal"));
                }
                text.push_str(&line[segment_start..]);
                text.push('\n');
                cur.line += 1;
                cur.col = 0;
                if cur.line >= cur.lines.len() {
                    return Err(ParseError::at(start, "unterminated string literal"));
                }
            }
        }
    }
}
