//! Reader and printer for the s-expression syntax shared by surface programs
//! and emitted core code.
//!
//! Symbols and keywords are case-insensitive and canonicalized to upper case
//! when read. `;` starts a comment running to the end of the line.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SExpr {
    Symbol(String),
    /// Written with a leading colon; the name is stored without it.
    Keyword(String),
    Integer(i64),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn sym(name: impl Into<String>) -> Self {
        SExpr::Symbol(name.into().to_ascii_uppercase())
    }

    pub fn kw(name: impl Into<String>) -> Self {
        SExpr::Keyword(name.into().to_ascii_uppercase())
    }

    pub fn list(items: impl IntoIterator<Item = SExpr>) -> Self {
        SExpr::List(items.into_iter().collect())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match self {
            SExpr::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_keyword(&self) -> Option<&str> {
        match self {
            SExpr::Keyword(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items) => Some(items),
            _ => None,
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Symbol(s) => f.write_str(s),
            SExpr::Keyword(k) => write!(f, ":{k}"),
            SExpr::Integer(n) => write!(f, "{n}"),
            SExpr::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Canonical single-line rendering.
pub fn print_form(form: &SExpr) -> String {
    form.to_string()
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Source positions mirroring the shape of an [`SExpr`]: `children` is
/// non-empty exactly for lists, one entry per item.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PosTree {
    pub pos: Pos,
    pub children: Vec<PosTree>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("{pos}: unbalanced parentheses: list opened here is never closed")]
    Unclosed { pos: Pos },
    #[error("{pos}: unexpected `)` with no open list")]
    StrayClose { pos: Pos },
    #[error("{pos}: invalid token `{token}`: {reason}")]
    BadToken {
        pos: Pos,
        token: String,
        reason: &'static str,
    },
}

/// Reads every top-level form.
pub fn read_forms(text: &str) -> Result<Vec<SExpr>, SyntaxError> {
    Ok(read_located(text)?.into_iter().map(|(f, _)| f).collect())
}

/// Reads every top-level form together with its position tree.
pub fn read_located(text: &str) -> Result<Vec<(SExpr, PosTree)>, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut top = Vec::new();
    // Stack of open lists: (items, positions, opening position).
    let mut stack: Vec<(Vec<SExpr>, Vec<PosTree>, Pos)> = Vec::new();
    for (tok, pos) in tokens {
        let node = match tok {
            Token::Open => {
                stack.push((Vec::new(), Vec::new(), pos));
                continue;
            }
            Token::Close => {
                let (items, children, open) =
                    stack.pop().ok_or(SyntaxError::StrayClose { pos })?;
                (
                    SExpr::List(items),
                    PosTree {
                        pos: open,
                        children,
                    },
                )
            }
            Token::Atom(atom) => (
                atom,
                PosTree {
                    pos,
                    children: Vec::new(),
                },
            ),
        };
        match stack.last_mut() {
            Some((items, children, _)) => {
                items.push(node.0);
                children.push(node.1);
            }
            None => top.push(node),
        }
    }
    if let Some((_, _, pos)) = stack.pop() {
        // Report the innermost unclosed list.
        return Err(SyntaxError::Unclosed { pos });
    }
    Ok(top)
}

enum Token {
    Open,
    Close,
    Atom(SExpr),
}

fn tokenize(text: &str) -> Result<Vec<(Token, Pos)>, SyntaxError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    let mut col = 1;
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_ascii_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' | ')' => {
                chars.next();
                col += 1;
                out.push((if c == '(' { Token::Open } else { Token::Close }, pos));
            }
            _ => {
                let mut raw = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    raw.push(c);
                    chars.next();
                    col += 1;
                }
                out.push((Token::Atom(classify(raw, pos)?), pos));
            }
        }
    }
    Ok(out)
}

fn classify(raw: String, pos: Pos) -> Result<SExpr, SyntaxError> {
    let bad = |reason| SyntaxError::BadToken {
        pos,
        token: raw.clone(),
        reason,
    };
    if raw.chars().any(|c| !c.is_ascii_graphic()) {
        return Err(bad("only printable 7-bit characters are allowed"));
    }
    let digits = raw.strip_prefix(['-', '+']).unwrap_or(&raw);
    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
        return raw
            .parse::<i64>()
            .map(SExpr::Integer)
            .map_err(|_| bad("integer literal out of range"));
    }
    if let Some(name) = raw.strip_prefix(':') {
        if name.is_empty() || name.starts_with(':') {
            return Err(bad("keyword needs a name"));
        }
        return Ok(SExpr::Keyword(name.to_ascii_uppercase()));
    }
    Ok(SExpr::Symbol(raw.to_ascii_uppercase()))
}
