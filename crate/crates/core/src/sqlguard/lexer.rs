use std::fmt;

use super::ast::{CompareOp, Span};
use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Keyword {
    Select,
    From,
    Where,
    Group,
    Order,
    By,
    Asc,
    Desc,
    Limit,
    Join,
    Inner,
    On,
    And,
    Or,
    As,
    True,
    False,
    Count,
    Sum,
    Avg,
    Min,
    Max,
    // Reserved words outside the supported subset. They lex as keywords so
    // the parser reports them by name instead of treating them as columns.
    Unsupported(&'static str),
}

const UNSUPPORTED: &[&str] = &[
    "ALL",
    "ALTER",
    "ANY",
    "BETWEEN",
    "CASE",
    "CREATE",
    "CROSS",
    "DELETE",
    "DISTINCT",
    "DROP",
    "ELSE",
    "END",
    "EXCEPT",
    "EXISTS",
    "FULL",
    "HAVING",
    "IN",
    "INSERT",
    "INTERSECT",
    "IS",
    "LEFT",
    "LIKE",
    "NOT",
    "NULL",
    "OFFSET",
    "OUTER",
    "OVER",
    "PARTITION",
    "RIGHT",
    "THEN",
    "UNION",
    "UPDATE",
    "WHEN",
    "WINDOW",
    "WITH",
];

impl Keyword {
    pub(crate) fn lookup(word: &str) -> Option<Keyword> {
        let upper = word.to_ascii_uppercase();
        let kw = match upper.as_str() {
            "SELECT" => Keyword::Select,
            "FROM" => Keyword::From,
            "WHERE" => Keyword::Where,
            "GROUP" => Keyword::Group,
            "ORDER" => Keyword::Order,
            "BY" => Keyword::By,
            "ASC" => Keyword::Asc,
            "DESC" => Keyword::Desc,
            "LIMIT" => Keyword::Limit,
            "JOIN" => Keyword::Join,
            "INNER" => Keyword::Inner,
            "ON" => Keyword::On,
            "AND" => Keyword::And,
            "OR" => Keyword::Or,
            "AS" => Keyword::As,
            "TRUE" => Keyword::True,
            "FALSE" => Keyword::False,
            "COUNT" => Keyword::Count,
            "SUM" => Keyword::Sum,
            "AVG" => Keyword::Avg,
            "MIN" => Keyword::Min,
            "MAX" => Keyword::Max,
            other => {
                return UNSUPPORTED
                    .iter()
                    .find(|w| **w == other)
                    .map(|w| Keyword::Unsupported(w))
            }
        };
        Some(kw)
    }

    fn name(self) -> &'static str {
        match self {
            Keyword::Select => "SELECT",
            Keyword::From => "FROM",
            Keyword::Where => "WHERE",
            Keyword::Group => "GROUP",
            Keyword::Order => "ORDER",
            Keyword::By => "BY",
            Keyword::Asc => "ASC",
            Keyword::Desc => "DESC",
            Keyword::Limit => "LIMIT",
            Keyword::Join => "JOIN",
            Keyword::Inner => "INNER",
            Keyword::On => "ON",
            Keyword::And => "AND",
            Keyword::Or => "OR",
            Keyword::As => "AS",
            Keyword::True => "TRUE",
            Keyword::False => "FALSE",
            Keyword::Count => "COUNT",
            Keyword::Sum => "SUM",
            Keyword::Avg => "AVG",
            Keyword::Min => "MIN",
            Keyword::Max => "MAX",
            Keyword::Unsupported(w) => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Token {
    Keyword(Keyword),
    Ident(String),
    /// Unsigned numeric literal: integer digits and optional fraction digits.
    Number {
        int: String,
        frac: Option<String>,
    },
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Minus,
    Semicolon,
    Op(CompareOp),
    Eof,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Keyword(k) => write!(f, "keyword {}", k.name()),
            Token::Ident(s) => write!(f, "identifier {s}"),
            Token::Number { int, frac: None } => write!(f, "number {int}"),
            Token::Number { int, frac: Some(frac) } => write!(f, "number {int}.{frac}"),
            Token::Str(s) => write!(f, "string '{s}'"),
            Token::Comma => f.write_str("','"),
            Token::Dot => f.write_str("'.'"),
            Token::LParen => f.write_str("'('"),
            Token::RParen => f.write_str("')'"),
            Token::Star => f.write_str("'*'"),
            Token::Minus => f.write_str("'-'"),
            Token::Semicolon => f.write_str("';'"),
            Token::Op(op) => write!(f, "'{}'", op.symbol()),
            Token::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub token: Token,
    pub span: Span,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    column: u32,
}

impl Cursor<'_> {
    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.column)
    }
}

pub(crate) fn tokenize(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut cur = Cursor {
        chars: input.chars().peekable(),
        line: 1,
        column: 1,
    };
    let mut out = Vec::new();
    loop {
        while cur.peek().is_some_and(char::is_whitespace) {
            cur.bump();
        }
        let span = cur.span();
        let Some(c) = cur.peek() else {
            out.push(Spanned {
                token: Token::Eof,
                span,
            });
            return Ok(out);
        };
        let token = match c {
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut word = String::new();
                while let Some(c) = cur.peek().filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                    word.push(c);
                    cur.bump();
                }
                match Keyword::lookup(&word) {
                    Some(kw) => Token::Keyword(kw),
                    None => Token::Ident(word),
                }
            }
            '0'..='9' => {
                let mut int = String::new();
                while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
                    int.push(c);
                    cur.bump();
                }
                let mut frac = None;
                if cur.peek() == Some('.') {
                    cur.bump();
                    let mut digits = String::new();
                    while let Some(c) = cur.peek().filter(char::is_ascii_digit) {
                        digits.push(c);
                        cur.bump();
                    }
                    if digits.is_empty() {
                        return Err(ParseError::new(cur.span(), "fraction digits", "no digits"));
                    }
                    frac = Some(digits);
                }
                if cur.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
                    return Err(ParseError::new(
                        cur.span(),
                        "separator after number",
                        format!("{:?}", cur.peek().unwrap()),
                    ));
                }
                Token::Number { int, frac }
            }
            '\'' => {
                cur.bump();
                let mut text = String::new();
                loop {
                    match cur.bump() {
                        None => {
                            return Err(ParseError::new(span, "closing quote", "end of input"));
                        }
                        Some('\'') if cur.peek() == Some('\'') => {
                            cur.bump();
                            text.push('\'');
                        }
                        Some('\'') => break,
                        Some(c) => text.push(c),
                    }
                }
                Token::Str(text)
            }
            ',' | '.' | '(' | ')' | '*' | '-' | ';' | '=' => {
                cur.bump();
                match c {
                    ',' => Token::Comma,
                    '.' => Token::Dot,
                    '(' => Token::LParen,
                    ')' => Token::RParen,
                    '*' => Token::Star,
                    '-' => Token::Minus,
                    ';' => Token::Semicolon,
                    _ => Token::Op(CompareOp::Eq),
                }
            }
            '<' => {
                cur.bump();
                match cur.peek() {
                    Some('=') => {
                        cur.bump();
                        Token::Op(CompareOp::LtEq)
                    }
                    Some('>') => {
                        cur.bump();
                        Token::Op(CompareOp::NotEq)
                    }
                    _ => Token::Op(CompareOp::Lt),
                }
            }
            '>' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    Token::Op(CompareOp::GtEq)
                } else {
                    Token::Op(CompareOp::Gt)
                }
            }
            '!' => {
                cur.bump();
                if cur.peek() == Some('=') {
                    cur.bump();
                    Token::Op(CompareOp::NotEq)
                } else {
                    return Err(ParseError::new(span, "'!='", "'!'"));
                }
            }
            other => {
                return Err(ParseError::new(span, "SQL token", format!("{other:?}")));
            }
        };
        out.push(Spanned { token, span });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(input: &str) -> Vec<Token> {
        tokenize(input).unwrap().into_iter().map(|s| s.token).collect()
    }

    #[test]
    fn keywords_are_case_insensitive() {
        assert_eq!(
            kinds("select FrOm"),
            vec![
                Token::Keyword(Keyword::Select),
                Token::Keyword(Keyword::From),
                Token::Eof
            ]
        );
    }

    #[test]
    fn doubled_quote_escapes() {
        assert_eq!(kinds("'it''s'")[0], Token::Str("it's".into()));
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("SELECT\n  a").unwrap();
        assert_eq!((toks[1].span.line, toks[1].span.column), (2, 3));
    }

    #[test]
    fn operators() {
        assert_eq!(
            kinds("< <= <> != >= > ="),
            vec![
                Token::Op(CompareOp::Lt),
                Token::Op(CompareOp::LtEq),
                Token::Op(CompareOp::NotEq),
                Token::Op(CompareOp::NotEq),
                Token::Op(CompareOp::GtEq),
                Token::Op(CompareOp::Gt),
                Token::Op(CompareOp::Eq),
                Token::Eof
            ]
        );
    }

    #[test]
    fn unterminated_string() {
        let err = tokenize("SELECT 'abc").unwrap_err();
        assert_eq!((err.line, err.column), (1, 8));
    }
}
