//! Tokenizer shared by the `.scn`, `.tests` and `.steps` grammars.

use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    /// `$n` capture reference (bindings files only).
    Capture(usize),
    Star,
    Arrow,
    Dot,
    Comma,
    Semi,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Assign,
    EqEq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Num(n) => write!(f, "number {n}"),
            Tok::Capture(n) => write!(f, "`${n}`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::Assign => f.write_str("`=`"),
            Tok::EqEq => f.write_str("`==`"),
            Tok::Ne => f.write_str("`!=`"),
            Tok::Lt => f.write_str("`<`"),
            Tok::Le => f.write_str("`<=`"),
            Tok::Gt => f.write_str("`>`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{loc}: {message}")]
pub struct SyntaxError {
    pub loc: Loc,
    pub message: String,
}

impl SyntaxError {
    pub fn new(loc: Loc, message: impl Into<String>) -> Self {
        Self {
            loc,
            message: message.into(),
        }
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn loc(&self) -> Loc {
        Loc::new(self.line, self.col)
    }
}

pub fn lex(src: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut cur = Cursor {
        chars: src.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        let loc = cur.loc();
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            skip_line(&mut cur);
            continue;
        }
        let tok = match c {
            '/' => {
                cur.bump();
                if cur.peek() == Some('/') {
                    skip_line(&mut cur);
                    continue;
                }
                return Err(SyntaxError::new(loc, "unexpected `/`"));
            }
            '"' => lex_string(&mut cur, loc)?,
            '$' => {
                cur.bump();
                let digits = take_while(&mut cur, |c| c.is_ascii_digit());
                let n = digits
                    .parse::<usize>()
                    .map_err(|_| SyntaxError::new(loc, "expected capture number after `$`"))?;
                Tok::Capture(n)
            }
            '-' => {
                cur.bump();
                match cur.peek() {
                    Some('>') => {
                        cur.bump();
                        Tok::Arrow
                    }
                    Some(d) if d.is_ascii_digit() => {
                        let n = lex_number(&mut cur, loc)?;
                        Tok::Num(-n)
                    }
                    _ => return Err(SyntaxError::new(loc, "unexpected `-`")),
                }
            }
            c if c.is_ascii_digit() => Tok::Num(lex_number(&mut cur, loc)?),
            c if c.is_alphabetic() || c == '_' => Tok::Ident(take_while(&mut cur, |c| c.is_alphanumeric() || c == '_')),
            _ => {
                cur.bump();
                match c {
                    '*' => Tok::Star,
                    '.' => Tok::Dot,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '=' => {
                        if cur.peek() == Some('=') {
                            cur.bump();
                            Tok::EqEq
                        } else {
                            Tok::Assign
                        }
                    }
                    '!' => {
                        if cur.peek() == Some('=') {
                            cur.bump();
                            Tok::Ne
                        } else {
                            return Err(SyntaxError::new(loc, "expected `!=`"));
                        }
                    }
                    '<' => {
                        if cur.peek() == Some('=') {
                            cur.bump();
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if cur.peek() == Some('=') {
                            cur.bump();
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    other => return Err(SyntaxError::new(loc, format!("unexpected character {other:?}"))),
                }
            }
        };
        out.push(Token { tok, loc });
    }
    out.push(Token {
        tok: Tok::Eof,
        loc: cur.loc(),
    });
    Ok(out)
}

fn skip_line(cur: &mut Cursor<'_>) {
    while let Some(c) = cur.bump() {
        if c == '\n' {
            break;
        }
    }
}

fn take_while(cur: &mut Cursor<'_>, pred: impl Fn(char) -> bool) -> String {
    let mut s = String::new();
    while let Some(c) = cur.peek() {
        if !pred(c) {
            break;
        }
        s.push(c);
        cur.bump();
    }
    s
}

fn lex_number(cur: &mut Cursor<'_>, loc: Loc) -> Result<f64, SyntaxError> {
    let mut s = take_while(cur, |c| c.is_ascii_digit());
    if cur.peek() == Some('.') {
        s.push('.');
        cur.bump();
        let frac = take_while(cur, |c| c.is_ascii_digit());
        if frac.is_empty() {
            return Err(SyntaxError::new(loc, "expected digits after decimal point"));
        }
        s.push_str(&frac);
    }
    if matches!(cur.peek(), Some('e') | Some('E')) {
        s.push('e');
        cur.bump();
        if let Some(sign @ ('+' | '-')) = cur.peek() {
            s.push(sign);
            cur.bump();
        }
        let exp = take_while(cur, |c| c.is_ascii_digit());
        if exp.is_empty() {
            return Err(SyntaxError::new(loc, "expected exponent digits"));
        }
        s.push_str(&exp);
    }
    let n: f64 = s
        .parse()
        .map_err(|_| SyntaxError::new(loc, format!("invalid number `{s}`")))?;
    if !n.is_finite() {
        return Err(SyntaxError::new(loc, format!("number `{s}` out of range")));
    }
    Ok(n)
}

fn lex_string(cur: &mut Cursor<'_>, loc: Loc) -> Result<Tok, SyntaxError> {
    cur.bump();
    let mut s = String::new();
    loop {
        match cur.bump() {
            None => return Err(SyntaxError::new(loc, "unterminated string")),
            Some('"') => return Ok(Tok::Str(s)),
            Some('\\') => match cur.bump() {
                Some('"') => s.push('"'),
                Some('\\') => s.push('\\'),
                Some('n') => s.push('\n'),
                Some('t') => s.push('\t'),
                Some('r') => s.push('\r'),
                _ => return Err(SyntaxError::new(cur.loc(), "invalid escape sequence")),
            },
            Some(c) => s.push(c),
        }
    }
}
