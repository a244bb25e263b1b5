//! Recursive-descent parser for network definition files.

use super::lexer::{lex_line, Token, TokenKind};
use super::{BoolExpr, NetworkDef, NodeRule, ParseError, UpdateAlternative, PROB_SUM_TOLERANCE};

/// Parses a network definition from its textual form.
///
/// Header lines (`name:`, `nodes:`, `inputs:`) must precede the rules. Every
/// node must be defined exactly once; rules may span lines inside a brace
/// list. All errors carry a 1-based line (and usually column) position.
pub fn parse_network(text: &str) -> Result<NetworkDef, ParseError> {
    let mut name: Option<String> = None;
    let mut n: Option<usize> = None;
    let mut m: Option<usize> = None;
    let mut rules: Vec<Option<(NodeRule, usize)>> = Vec::new();
    let mut saw_rule = false;

    // Tokens of a rule still waiting for its closing brace.
    let mut pending: Vec<Token> = Vec::new();
    let mut brace_depth = 0usize;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }

        if pending.is_empty() {
            if let Some((key, value)) = split_header(line) {
                if saw_rule {
                    return Err(ParseError::Syntax {
                        line: line_no,
                        col: 1,
                        message: format!("header `{key}:` must come before the rules"),
                    });
                }
                match key {
                    "name" => set_header(&mut name, value.trim().to_string(), "name", line_no)?,
                    "nodes" => {
                        let v = parse_count(value, "nodes", line_no)?;
                        set_header(&mut n, v, "nodes", line_no)?;
                        rules = vec![None; v];
                    }
                    "inputs" => {
                        let v = parse_count(value, "inputs", line_no)?;
                        set_header(&mut m, v, "inputs", line_no)?;
                    }
                    _ => unreachable!(),
                }
                continue;
            }
        }

        let tokens = lex_line(line, line_no)?;
        for t in &tokens {
            match t.kind {
                TokenKind::LBrace => brace_depth += 1,
                TokenKind::RBrace => {
                    brace_depth = brace_depth.checked_sub(1).ok_or(ParseError::Syntax {
                        line: t.line,
                        col: t.col,
                        message: "unmatched `}`".into(),
                    })?;
                }
                _ => {}
            }
        }
        pending.extend(tokens);
        if brace_depth > 0 {
            continue; // rule continues on the next line
        }

        let n = n.ok_or(ParseError::Syntax {
            line: line_no,
            col: 1,
            message: "`nodes:` header must come before the rules".into(),
        })?;
        let m = m.ok_or(ParseError::Syntax {
            line: line_no,
            col: 1,
            message: "`inputs:` header must come before the rules".into(),
        })?;
        saw_rule = true;
        let tokens = std::mem::take(&mut pending);
        let (node, rule, def_line) = parse_rule(&tokens, n, m)?;
        if let Some((_, prev_line)) = rules[node - 1] {
            let _ = prev_line;
            return Err(ParseError::DuplicateNode {
                node,
                line: def_line,
            });
        }
        rules[node - 1] = Some((rule, def_line));
    }

    if !pending.is_empty() {
        let t = &pending[0];
        return Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: "unterminated rule: missing `}`".into(),
        });
    }
    let n = n.ok_or(ParseError::Syntax {
        line: 1,
        col: 1,
        message: "missing `nodes:` header".into(),
    })?;
    let m = m.ok_or(ParseError::Syntax {
        line: 1,
        col: 1,
        message: "missing `inputs:` header".into(),
    })?;
    let mut collected = Vec::with_capacity(n);
    for (i, slot) in rules.into_iter().enumerate() {
        match slot {
            Some((rule, _)) => collected.push(rule),
            None => return Err(ParseError::MissingNode { node: i + 1 }),
        }
    }
    NetworkDef::new(name.unwrap_or_default(), n, m, collected)
}

fn split_header(line: &str) -> Option<(&'static str, &str)> {
    let trimmed = line.trim_start();
    for key in ["name", "nodes", "inputs"] {
        if let Some(rest) = trimmed.strip_prefix(key) {
            if let Some(value) = rest.trim_start().strip_prefix(':') {
                return Some((key, value));
            }
        }
    }
    None
}

fn set_header<T>(slot: &mut Option<T>, value: T, key: &str, line: usize) -> Result<(), ParseError> {
    if slot.is_some() {
        return Err(ParseError::Syntax {
            line,
            col: 1,
            message: format!("duplicate `{key}:` header"),
        });
    }
    *slot = Some(value);
    Ok(())
}

fn parse_count(value: &str, key: &str, line: usize) -> Result<usize, ParseError> {
    value.trim().parse().map_err(|_| ParseError::Syntax {
        line,
        col: 1,
        message: format!("`{key}:` expects a non-negative integer, found {:?}", value.trim()),
    })
}

struct Cursor<'a> {
    tokens: &'a [Token],
    pos: usize,
    n: usize,
    m: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos);
        self.pos += 1;
        t
    }

    fn error_here(&self, message: impl Into<String>) -> ParseError {
        match self.peek().or_else(|| self.tokens.last()) {
            Some(t) => ParseError::Syntax {
                line: t.line,
                col: t.col,
                message: message.into(),
            },
            None => ParseError::Syntax {
                line: 0,
                col: 0,
                message: message.into(),
            },
        }
    }

    fn expect(&mut self, kind: &TokenKind, what: &str) -> Result<&'a Token, ParseError> {
        match self.peek() {
            Some(t) if &t.kind == kind => Ok(self.next().unwrap()),
            _ => Err(self.error_here(format!("expected {what}"))),
        }
    }
}

/// Parses one complete rule from its token list.
fn parse_rule(tokens: &[Token], n: usize, m: usize) -> Result<(usize, NodeRule, usize), ParseError> {
    let mut cur = Cursor { tokens, pos: 0, n, m };
    let head = cur.next().ok_or_else(|| cur.error_here("expected a rule"))?;
    let node = match head.kind {
        TokenKind::StateVar(k) => k,
        _ => {
            return Err(ParseError::Syntax {
                line: head.line,
                col: head.col,
                message: "a rule must start with a state variable, e.g. `x1 <- ...`".into(),
            })
        }
    };
    if node > n {
        return Err(ParseError::UndeclaredVariable {
            line: head.line,
            col: head.col,
            name: format!("x{node}"),
        });
    }
    cur.expect(&TokenKind::Arrow, "`<-`")?;

    let rule = if matches!(cur.peek().map(|t| &t.kind), Some(TokenKind::LBrace)) {
        cur.next();
        let mut alternatives = Vec::new();
        loop {
            let prob = parse_probability(&mut cur)?;
            cur.expect(&TokenKind::Colon, "`:` after the probability")?;
            let expr = parse_expr(&mut cur)?;
            alternatives.push(UpdateAlternative { expr, prob });
            match cur.next() {
                Some(t) if t.kind == TokenKind::Semi => continue,
                Some(t) if t.kind == TokenKind::RBrace => break,
                _ => return Err(cur.error_here("expected `;` or `}` after an alternative")),
            }
        }
        let sum: f64 = alternatives.iter().map(|a| a.prob).sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(ParseError::ProbabilitySum { node, sum });
        }
        NodeRule { alternatives }
    } else {
        NodeRule::deterministic(parse_expr(&mut cur)?)
    };

    if let Some(t) = cur.peek() {
        return Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: "unexpected trailing input after the rule".into(),
        });
    }
    Ok((node, rule, head.line))
}

fn parse_probability(cur: &mut Cursor) -> Result<f64, ParseError> {
    match cur.peek() {
        Some(t) => {
            if let TokenKind::Number(text) = &t.kind {
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    line: t.line,
                    col: t.col,
                    message: format!("invalid probability {text:?}"),
                })?;
                cur.next();
                Ok(value)
            } else {
                Err(cur.error_here("expected a probability"))
            }
        }
        None => Err(cur.error_here("expected a probability")),
    }
}

// expr := and ('|' and)*   left-associative
fn parse_expr(cur: &mut Cursor) -> Result<BoolExpr, ParseError> {
    let mut left = parse_and(cur)?;
    while matches!(cur.peek().map(|t| &t.kind), Some(TokenKind::Pipe)) {
        cur.next();
        let right = parse_and(cur)?;
        left = BoolExpr::Or(Box::new(left), Box::new(right));
    }
    Ok(left)
}

// and := unary ('&' unary)*   left-associative
fn parse_and(cur: &mut Cursor) -> Result<BoolExpr, ParseError> {
    let mut left = parse_unary(cur)?;
    while matches!(cur.peek().map(|t| &t.kind), Some(TokenKind::Amp)) {
        cur.next();
        let right = parse_unary(cur)?;
        left = BoolExpr::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_unary(cur: &mut Cursor) -> Result<BoolExpr, ParseError> {
    if matches!(cur.peek().map(|t| &t.kind), Some(TokenKind::Bang)) {
        cur.next();
        return Ok(BoolExpr::Not(Box::new(parse_unary(cur)?)));
    }
    parse_atom(cur)
}

fn parse_atom(cur: &mut Cursor) -> Result<BoolExpr, ParseError> {
    let (n, m) = (cur.n, cur.m);
    let t = match cur.next() {
        Some(t) => t,
        None => return Err(cur.error_here("expected an expression")),
    };
    match &t.kind {
        TokenKind::StateVar(k) => {
            if *k > n {
                return Err(ParseError::UndeclaredVariable {
                    line: t.line,
                    col: t.col,
                    name: format!("x{k}"),
                });
            }
            Ok(BoolExpr::State(*k))
        }
        TokenKind::InputVar(k) => {
            if *k > m {
                return Err(ParseError::UndeclaredVariable {
                    line: t.line,
                    col: t.col,
                    name: format!("u{k}"),
                });
            }
            Ok(BoolExpr::Input(*k))
        }
        TokenKind::Number(text) if text == "0" => Ok(BoolExpr::Const(false)),
        TokenKind::Number(text) if text == "1" => Ok(BoolExpr::Const(true)),
        TokenKind::LParen => {
            let inner = parse_expr(cur)?;
            cur.expect(&TokenKind::RParen, "`)`")?;
            Ok(inner)
        }
        _ => Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: "expected `0`, `1`, a variable, `!` or `(`".into(),
        }),
    }
}
