use thiserror::Error;

use super::LtlFormula;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown token {found:?} at byte {offset}")]
    UnknownToken { offset: usize, found: char },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Not,
    Next,
    Eventually,
    Globally,
    Until,
    And,
    Or,
    Implies,
    LParen,
    RParen,
    True,
    False,
    Ident(String),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("atom `{s}`"),
            Tok::End => "end of input".to_string(),
            other => format!("{other:?}"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'!' => Tok::Not,
            b'X' => Tok::Next,
            b'F' => Tok::Eventually,
            b'G' => Tok::Globally,
            b'U' => Tok::Until,
            b'&' => Tok::And,
            b'|' => Tok::Or,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push((i, Tok::Implies));
                    i += 2;
                    continue;
                }
                return Err(ParseError::Syntax {
                    offset: i,
                    message: "expected `->`".into(),
                });
            }
            b'a'..=b'z' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push((start, tok));
                continue;
            }
            _ => {
                let found = text[i..].chars().next().unwrap_or('\u{fffd}');
                return Err(ParseError::UnknownToken { offset: i, found });
            }
        };
        out.push((i, tok));
        i += 1;
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    // implication: right associative, lowest precedence
    fn implication(&mut self) -> Result<LtlFormula, ParseError> {
        let lhs = self.disjunction()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let rhs = self.implication()?;
            return Ok(LtlFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<LtlFormula, ParseError> {
        let mut lhs = self.conjunction()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.conjunction()?;
            lhs = LtlFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<LtlFormula, ParseError> {
        let mut lhs = self.until()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.until()?;
            lhs = LtlFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<LtlFormula, ParseError> {
        let lhs = self.unary()?;
        if *self.peek() == Tok::Until {
            self.bump();
            let rhs = self.until()?;
            return Ok(LtlFormula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<LtlFormula, ParseError> {
        match self.peek().clone() {
            Tok::Not => {
                self.bump();
                Ok(LtlFormula::not(self.unary()?))
            }
            Tok::Next => {
                self.bump();
                Ok(LtlFormula::next(self.unary()?))
            }
            Tok::Eventually => {
                self.bump();
                Ok(LtlFormula::eventually(self.unary()?))
            }
            Tok::Globally => {
                self.bump();
                Ok(LtlFormula::globally(self.unary()?))
            }
            Tok::True => {
                self.bump();
                Ok(LtlFormula::True)
            }
            Tok::False => {
                self.bump();
                Ok(LtlFormula::False)
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(LtlFormula::Atom(name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.implication()?;
                if *self.peek() != Tok::RParen {
                    return self.error(format!("expected `)`, found {}", self.peek().describe()));
                }
                self.bump();
                Ok(inner)
            }
            other => self.error(format!("expected a formula, found {}", other.describe())),
        }
    }
}

/// Parse LTL text.
///
/// Precedence from tightest to loosest: unary operators (`!`, `X`, `F`, `G`),
/// `U`, `&`, `|`, `->`. `U` and `->` associate to the right, `&` and `|` to
/// the left.
pub fn parse_ltl(text: &str) -> Result<LtlFormula, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0 };
    let f = p.implication()?;
    if *p.peek() != Tok::End {
        return p.error(format!("unexpected {}", p.peek().describe()));
    }
    Ok(f)
}
