//! S-expression reader.

use super::Pos;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datum {
    pub kind: DatumKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatumKind {
    Int(i64),
    Bool(bool),
    Symbol(String),
    List(Vec<Datum>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReadError {
    #[error("{pos}: unbalanced parenthesis: `{open}` is never closed")]
    Unclosed { open: char, pos: Pos },
    #[error("{pos}: unexpected `{found}`")]
    UnexpectedClose { found: char, pos: Pos },
    #[error("{pos}: `{open}` closed by `{found}`")]
    Mismatched { open: char, found: char, pos: Pos },
    #[error("{pos}: invalid token `{token}`")]
    BadToken { token: String, pos: Pos },
}

impl ReadError {
    pub fn pos(&self) -> Pos {
        match self {
            ReadError::Unclosed { pos, .. }
            | ReadError::UnexpectedClose { pos, .. }
            | ReadError::Mismatched { pos, .. }
            | ReadError::BadToken { pos, .. } => *pos,
        }
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | '[' | ']' | ';')
}

fn is_symbol_char(c: char) -> bool {
    c.is_alphanumeric() || "!$%&*/:<=>?^_~+-.@".contains(c)
}

impl<'a> Reader<'a> {
    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
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

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn datum(&mut self) -> Result<Option<Datum>, ReadError> {
        self.skip_trivia();
        let pos = self.pos();
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        match c {
            '(' | '[' => {
                self.bump();
                let close = if c == '(' { ')' } else { ']' };
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek().copied() {
                        None => return Err(ReadError::Unclosed { open: c, pos }),
                        Some(d @ (')' | ']')) => {
                            let at = self.pos();
                            self.bump();
                            if d != close {
                                return Err(ReadError::Mismatched {
                                    open: c,
                                    found: d,
                                    pos: at,
                                });
                            }
                            break;
                        }
                        Some(_) => {
                            if let Some(d) = self.datum()? {
                                items.push(d);
                            }
                        }
                    }
                }
                Ok(Some(Datum {
                    kind: DatumKind::List(items),
                    pos,
                }))
            }
            ')' | ']' => Err(ReadError::UnexpectedClose { found: c, pos }),
            _ => {
                let mut token = String::new();
                while let Some(&c) = self.chars.peek() {
                    if is_delimiter(c) {
                        break;
                    }
                    token.push(c);
                    self.bump();
                }
                Ok(Some(Datum {
                    kind: atom_kind(&token).ok_or(ReadError::BadToken { token, pos })?,
                    pos,
                }))
            }
        }
    }
}

fn atom_kind(token: &str) -> Option<DatumKind> {
    match token {
        "#t" | "#true" => return Some(DatumKind::Bool(true)),
        "#f" | "#false" => return Some(DatumKind::Bool(false)),
        _ => {}
    }
    if let Ok(n) = token.parse::<i64>() {
        return Some(DatumKind::Int(n));
    }
    if token.chars().all(is_symbol_char) && !token.starts_with(|c: char| c.is_ascii_digit()) {
        return Some(DatumKind::Symbol(token.to_string()));
    }
    None
}

/// Read every datum in `text`.
pub fn read_all(text: &str) -> Result<Vec<Datum>, ReadError> {
    let mut r = Reader {
        chars: text.chars().peekable(),
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(d) = r.datum()? {
        out.push(d);
    }
    Ok(out)
}
