use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Keyword {
    Select,
    From,
    Where,
    And,
    Area,
    Xmatch,
}

impl Keyword {
    fn lookup(word: &str) -> Option<Keyword> {
        const TABLE: [(&str, Keyword); 6] = [
            ("SELECT", Keyword::Select),
            ("FROM", Keyword::From),
            ("WHERE", Keyword::Where),
            ("AND", Keyword::And),
            ("AREA", Keyword::Area),
            ("XMATCH", Keyword::Xmatch),
        ];
        TABLE.iter().find(|(k, _)| k.eq_ignore_ascii_case(word)).map(|(_, kw)| *kw)
    }

    pub(crate) fn as_str(self) -> &'static str {
        match self {
            Keyword::Select => "SELECT",
            Keyword::From => "FROM",
            Keyword::Where => "WHERE",
            Keyword::And => "AND",
            Keyword::Area => "AREA",
            Keyword::Xmatch => "XMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Keyword(Keyword),
    Ident(String),
    Number(f64),
    Str(String),
    Comma,
    Dot,
    Colon,
    LParen,
    RParen,
    Bang,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Keyword(k) => k.as_str().to_string(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Colon => "`:`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Eq => "`=`".into(),
            Tok::Ne => "`!=`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    /// Byte offset into the query text.
    pub pos: usize,
}

fn syntax(pos: usize, expected: &str, found: impl Into<String>) -> ParseError {
    ParseError::Syntax { position: pos, expected: vec![expected.to_string()], found: found.into() }
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let single = |tok| Token { tok, pos: start };
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b',' => out.push(single(Tok::Comma)),
            b':' => out.push(single(Tok::Colon)),
            b'(' => out.push(single(Tok::LParen)),
            b')' => out.push(single(Tok::RParen)),
            b'+' => out.push(single(Tok::Plus)),
            b'-' => out.push(single(Tok::Minus)),
            b'*' => out.push(single(Tok::Star)),
            b'/' => out.push(single(Tok::Slash)),
            b'=' => out.push(single(Tok::Eq)),
            b'!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    out.push(single(Tok::Ne));
                } else {
                    out.push(single(Tok::Bang));
                }
            }
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 1;
                    out.push(single(Tok::Le));
                }
                Some(b'>') => {
                    i += 1;
                    out.push(single(Tok::Ne));
                }
                _ => out.push(single(Tok::Lt)),
            },
            b'>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 1;
                    out.push(single(Tok::Ge));
                } else {
                    out.push(single(Tok::Gt));
                }
            }
            b'\'' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match bytes.get(j) {
                        None => return Err(syntax(start, "closing `'`", "end of input")),
                        Some(b'\'') if bytes.get(j + 1) == Some(&b'\'') => {
                            s.push('\'');
                            j += 2;
                        }
                        Some(b'\'') => break,
                        Some(_) => {
                            let ch = text[j..].chars().next().expect("index on char boundary");
                            s.push(ch);
                            j += ch.len_utf8();
                        }
                    }
                }
                out.push(Token { tok: Tok::Str(s), pos: start });
                i = j;
            }
            b'0'..=b'9' | b'.' => {
                if c == b'.' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                    out.push(single(Tok::Dot));
                } else {
                    let mut j = i;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j] == b'.' {
                        j += 1;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                    if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                        let mut k = j + 1;
                        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                            k += 1;
                        }
                        if k < bytes.len() && bytes[k].is_ascii_digit() {
                            while k < bytes.len() && bytes[k].is_ascii_digit() {
                                k += 1;
                            }
                            j = k;
                        }
                    }
                    let lit = &text[i..j];
                    let value: f64 = lit.parse().map_err(|_| syntax(start, "number", lit))?;
                    if !value.is_finite() {
                        return Err(syntax(start, "finite number", lit));
                    }
                    out.push(Token { tok: Tok::Number(value), pos: start });
                    i = j;
                    continue;
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                let word = &text[i..j];
                let tok = match Keyword::lookup(word) {
                    Some(kw) => Tok::Keyword(kw),
                    None => Tok::Ident(word.to_string()),
                };
                out.push(Token { tok, pos: start });
                i = j;
                continue;
            }
            _ => {
                let ch = text[i..].chars().next().expect("index on char boundary");
                return Err(syntax(start, "token", ch.to_string()));
            }
        }
        i += 1;
    }
    out.push(Token { tok: Tok::Eof, pos: text.len() });
    Ok(out)
}
