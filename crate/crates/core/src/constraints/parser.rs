//! Lexer and parser for the hypothesis language.
//!
//! ```text
//! hypothesis := ε | clause ("," clause)*
//! clause     := "{" chain "}" | chain
//! chain      := term (("<" | ">") term)*
//! term       := identifier | number
//! ```
//!
//! A chain of length one that names a coefficient is a mention and carries no
//! constraint. Longer chains split into adjacent pairs.

use super::{Constraint, ConstraintError, Hypothesis, Term};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Gt,
    Lt,
    Comma,
    LBrace,
    RBrace,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn syntax(col: usize, message: impl Into<String>) -> ConstraintError {
    ConstraintError::Syntax {
        col,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, ConstraintError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let next = chars.get(i + 1).copied();
        match c {
            c if c.is_whitespace() => i += 1,
            '>' | '<' if next == Some('=') => {
                return Err(ConstraintError::NonStrict { col });
            }
            '=' | '≥' | '≤' | '⩾' | '⩽' => return Err(ConstraintError::NonStrict { col }),
            '>' => {
                out.push(Spanned { tok: Tok::Gt, col });
                i += 1;
            }
            '<' => {
                out.push(Spanned { tok: Tok::Lt, col });
                i += 1;
            }
            ',' => {
                out.push(Spanned {
                    tok: Tok::Comma,
                    col,
                });
                i += 1;
            }
            '{' => {
                out.push(Spanned {
                    tok: Tok::LBrace,
                    col,
                });
                i += 1;
            }
            '}' => {
                out.push(Spanned {
                    tok: Tok::RBrace,
                    col,
                });
                i += 1;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.')
                {
                    i += 1;
                }
                out.push(Spanned {
                    tok: Tok::Ident(chars[start..i].iter().collect()),
                    col,
                });
            }
            c if c.is_ascii_digit()
                || c == '.'
                || ((c == '-' || c == '+')
                    && next.is_some_and(|n| n.is_ascii_digit() || n == '.')) =>
            {
                let start = i;
                i += 1;
                while i < chars.len() {
                    let d = chars[i];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v = s
                    .parse::<f64>()
                    .map_err(|_| syntax(col, format!("malformed number '{s}'")))?;
                if !v.is_finite() {
                    return Err(syntax(col, format!("number '{s}' is not finite")));
                }
                out.push(Spanned {
                    tok: Tok::Num(v),
                    col,
                });
            }
            other => return Err(syntax(col, format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn col(&self) -> usize {
        self.peek().map_or(self.end_col, |t| t.col)
    }

    fn bump(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn term(&mut self) -> Result<(Term, usize), ConstraintError> {
        let col = self.col();
        match self.bump().map(|t| t.tok) {
            Some(Tok::Ident(name)) => Ok((Term::Coef(name), col)),
            Some(Tok::Num(v)) => Ok((Term::Const(v), col)),
            Some(other) => Err(syntax(
                col,
                format!(
                    "expected a coefficient or number, found {}",
                    describe(&other)
                ),
            )),
            None => Err(syntax(
                col,
                "expected a coefficient or number, found end of input",
            )),
        }
    }

    fn chain(&mut self, h: &mut Hypothesis) -> Result<(), ConstraintError> {
        let (first, first_col) = self.term()?;
        let mut prev = first.clone();
        let mut links = 0;
        loop {
            let rel = match self.peek().map(|t| &t.tok) {
                Some(Tok::Gt) => true,
                Some(Tok::Lt) => false,
                _ => break,
            };
            self.bump();
            let (next, col) = self.term()?;
            let (greater, lesser) = if rel {
                (prev.clone(), next.clone())
            } else {
                (next.clone(), prev.clone())
            };
            h.constraints
                .push(Constraint::new(greater, lesser).map_err(|e| match e {
                    ConstraintError::Syntax { message, .. } => syntax(col, message),
                    other => other,
                })?);
            prev = next;
            links += 1;
        }
        if links == 0 {
            match first {
                Term::Coef(name) => h.mentions.push(name),
                Term::Const(_) => {
                    return Err(syntax(first_col, "a number on its own is not a constraint"))
                }
            }
        }
        Ok(())
    }

    fn clause(&mut self, h: &mut Hypothesis) -> Result<(), ConstraintError> {
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::LBrace)) {
            self.bump();
            self.chain(h)?;
            let col = self.col();
            match self.bump().map(|t| t.tok) {
                Some(Tok::RBrace) => Ok(()),
                Some(other) => Err(syntax(
                    col,
                    format!("expected '}}', found {}", describe(&other)),
                )),
                None => Err(syntax(col, "expected '}', found end of input")),
            }
        } else {
            self.chain(h)
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Num(v) => format!("'{v}'"),
        Tok::Gt => "'>'".into(),
        Tok::Lt => "'<'".into(),
        Tok::Comma => "','".into(),
        Tok::LBrace => "'{'".into(),
        Tok::RBrace => "'}'".into(),
    }
}

pub fn parse_hypothesis(name: &str, text: &str) -> Result<Hypothesis, ConstraintError> {
    let toks = lex(text)?;
    let mut h = Hypothesis {
        name: name.to_string(),
        constraints: Vec::new(),
        mentions: Vec::new(),
    };
    if toks.is_empty() {
        return Ok(h);
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.chars().count() + 1,
    };
    loop {
        p.clause(&mut h)?;
        let col = p.col();
        match p.bump().map(|t| t.tok) {
            None => break,
            Some(Tok::Comma) => continue,
            Some(other) => {
                return Err(syntax(
                    col,
                    format!("expected ',' or end of input, found {}", describe(&other)),
                ))
            }
        }
    }
    Ok(h)
}
