//! Line-oriented tokenizer for the network definition language.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum TokenKind {
    /// `x<k>` with its 1-based index.
    StateVar(usize),
    /// `u<k>` with its 1-based index.
    InputVar(usize),
    /// Unsigned decimal number, kept as text until its role is known.
    Number(String),
    Arrow,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Bang,
    Amp,
    Pipe,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub col: usize,
}

/// Tokenizes one physical line (comment already stripped). `line_no` is 1-based.
pub(super) fn lex_line(text: &str, line_no: usize) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let col = i + 1;
        let c = chars[i];
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '{' => tokens.push(Token { kind: TokenKind::LBrace, line: line_no, col }),
            '}' => tokens.push(Token { kind: TokenKind::RBrace, line: line_no, col }),
            '(' => tokens.push(Token { kind: TokenKind::LParen, line: line_no, col }),
            ')' => tokens.push(Token { kind: TokenKind::RParen, line: line_no, col }),
            ';' => tokens.push(Token { kind: TokenKind::Semi, line: line_no, col }),
            ':' => tokens.push(Token { kind: TokenKind::Colon, line: line_no, col }),
            '!' => tokens.push(Token { kind: TokenKind::Bang, line: line_no, col }),
            '&' => tokens.push(Token { kind: TokenKind::Amp, line: line_no, col }),
            '|' => tokens.push(Token { kind: TokenKind::Pipe, line: line_no, col }),
            '<' => {
                if chars.get(i + 1) == Some(&'-') {
                    tokens.push(Token { kind: TokenKind::Arrow, line: line_no, col });
                    i += 2;
                    continue;
                }
                return Err(ParseError::Syntax {
                    line: line_no,
                    col,
                    message: "expected `<-`".into(),
                });
            }
            'x' | 'u' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if i == start + 1 {
                    return Err(ParseError::Syntax {
                        line: line_no,
                        col,
                        message: format!("variable `{c}` needs a 1-based index, e.g. `{c}1`"),
                    });
                }
                let idx: usize = chars[start + 1..i]
                    .iter()
                    .collect::<String>()
                    .parse()
                    .map_err(|_| ParseError::Syntax {
                        line: line_no,
                        col,
                        message: "variable index out of range".into(),
                    })?;
                if idx == 0 {
                    return Err(ParseError::Syntax {
                        line: line_no,
                        col,
                        message: "variable indices start at 1".into(),
                    });
                }
                let kind = if c == 'x' {
                    TokenKind::StateVar(idx)
                } else {
                    TokenKind::InputVar(idx)
                };
                tokens.push(Token { kind, line: line_no, col });
                continue;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && matches!(chars.get(i.wrapping_sub(1)), Some('e') | Some('E'))))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                tokens.push(Token {
                    kind: TokenKind::Number(text),
                    line: line_no,
                    col,
                });
                continue;
            }
            other => {
                return Err(ParseError::Syntax {
                    line: line_no,
                    col,
                    message: format!("unexpected character {other:?}"),
                });
            }
        }
        i += 1;
    }
    Ok(tokens)
}
