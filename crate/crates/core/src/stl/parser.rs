//! Concrete syntax for the formula fragment.
//!
//! ```text
//! phi  := "true" | atom | "not" phi | phi "and" phi | phi "or" phi
//!       | "F[" INT "," INT "]" phi | "(" phi ")"
//! atom := IDENT | "dist(" IDENT "," IDENT ")" "<" NUMBER
//! ```
//!
//! Precedence, tightest first: `not` and `F[a,b]` (prefix), `and`, `or`.
//! Binary operators associate to the left.

use std::collections::BTreeMap;

use super::ast::{Predicate, Spec};
use super::StlError;

/// Named atoms available to the parser. `dist(..) < d` atoms are built in.
#[derive(Clone, Debug, Default)]
pub struct PredicateRegistry {
    preds: BTreeMap<String, Predicate>,
}

impl PredicateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, pred: Predicate) -> &mut Self {
        self.preds.insert(pred.name().to_string(), pred);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Predicate> {
        self.preds.get(name)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Lt,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(src: &'a str) -> Result<Vec<(Tok, usize)>, StlError> {
        let mut lx = Lexer { src, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), StlError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        let single = match c {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            b',' => Some(Tok::Comma),
            b'<' => Some(Tok::Lt),
            _ => None,
        };
        if let Some(t) = single {
            self.pos += 1;
            return Ok((t, start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Ok((Tok::Ident(self.src[start..self.pos].to_string()), start));
        }
        if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' {
            self.pos += 1;
            while self.pos < bytes.len() {
                let b = bytes[self.pos];
                let exp_sign = (b == b'-' || b == b'+')
                    && matches!(bytes[self.pos - 1], b'e' | b'E');
                if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || exp_sign {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            return Ok((Tok::Num(self.src[start..self.pos].to_string()), start));
        }
        Err(StlError::Syntax {
            pos: start,
            msg: format!("unexpected character {:?}", self.src[start..].chars().next().unwrap()),
        })
    }
}

struct Parser<'r> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    registry: &'r PredicateRegistry,
}

const KEYWORDS: [&str; 4] = ["true", "not", "and", "or"];

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> usize {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), StlError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn unexpected(&self, what: &str) -> StlError {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Ident(s) | Tok::Num(s) => format!("'{s}'"),
            t => format!("{t:?}"),
        };
        StlError::Syntax { pos: self.pos(), msg: format!("expected {what}, found {found}") }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn or_expr(&mut self) -> Result<Spec, StlError> {
        let mut lhs = self.and_expr()?;
        while self.is_keyword("or") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Spec::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Spec, StlError> {
        let mut lhs = self.unary()?;
        while self.is_keyword("and") {
            self.bump();
            let rhs = self.unary()?;
            lhs = Spec::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Spec, StlError> {
        if self.is_keyword("not") {
            self.bump();
            return Ok(Spec::not(self.unary()?));
        }
        if self.is_keyword("F") && *self.peek_at(1) == Tok::LBracket {
            let at = self.pos();
            self.bump();
            self.bump();
            let lo = self.int("window lower bound")?;
            self.expect(Tok::Comma, "','")?;
            let hi = self.int("window upper bound")?;
            self.expect(Tok::RBracket, "']'")?;
            if lo < 0 || hi < 0 {
                return Err(StlError::NegativeWindow { lo, hi, pos: at });
            }
            if lo > hi {
                return Err(StlError::InvertedWindow { lo, hi, pos: Some(at) });
            }
            let child = self.unary()?;
            return Ok(Spec::Eventually { lo: lo as usize, hi: hi as usize, child: Box::new(child) });
        }
        self.primary()
    }

    fn int(&mut self, what: &str) -> Result<i64, StlError> {
        let at = self.pos();
        match self.peek().clone() {
            Tok::Num(s) => {
                self.bump();
                s.parse::<i64>().map_err(|_| StlError::Syntax {
                    pos: at,
                    msg: format!("{what} must be an integer, found '{s}'"),
                })
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn primary(&mut self) -> Result<Spec, StlError> {
        let at = self.pos();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let inner = self.or_expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Spec::True)
            }
            Tok::Ident(s) if s == "dist" && *self.peek_at(1) == Tok::LParen => {
                self.bump();
                self.bump();
                let a = self.ident("entity name")?;
                self.expect(Tok::Comma, "','")?;
                let b = self.ident("entity name")?;
                self.expect(Tok::RParen, "')'")?;
                self.expect(Tok::Lt, "'<'")?;
                let num_at = self.pos();
                let d = match self.peek().clone() {
                    Tok::Num(n) => {
                        self.bump();
                        n.parse::<f64>().map_err(|_| StlError::Syntax {
                            pos: num_at,
                            msg: format!("invalid number '{n}'"),
                        })?
                    }
                    _ => return Err(self.unexpected("distance threshold")),
                };
                Ok(Spec::Atom(Predicate::distance(a, b, d)))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                match self.registry.get(&s) {
                    Some(p) => Ok(Spec::Atom(p.clone())),
                    None => Err(StlError::UnknownAtom { name: s, pos: at }),
                }
            }
            _ => Err(self.unexpected("formula")),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, StlError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }
}

/// Parses `text` into a formula, resolving named atoms against `registry`.
pub fn parse_spec(text: &str, registry: &PredicateRegistry) -> Result<Spec, StlError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, i: 0, registry };
    let spec = p.or_expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("end of input"));
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> PredicateRegistry {
        let mut r = PredicateRegistry::new();
        r.register(Predicate::custom("p", |_| Ok(1.0)));
        r.register(Predicate::custom("q", |_| Ok(-1.0)));
        r
    }

    #[test]
    fn parses_distance_eventually() {
        let s = parse_spec("F[0,25] dist(agent1, landmark1) < 0.3", &reg()).unwrap();
        let want = Spec::eventually(
            0,
            25,
            Spec::Atom(Predicate::distance("agent1", "landmark1", 0.3)),
        )
        .unwrap();
        assert_eq!(s, want);
    }

    #[test]
    fn parses_true() {
        assert_eq!(parse_spec("true", &reg()).unwrap(), Spec::True);
    }

    #[test]
    fn inverted_window_is_rejected() {
        let err = parse_spec("F[3,1] p", &reg()).unwrap_err();
        assert!(matches!(err, StlError::InvertedWindow { lo: 3, hi: 1, .. }), "{err}");
    }

    #[test]
    fn negative_window_is_rejected() {
        let err = parse_spec("F[-1,2] p", &reg()).unwrap_err();
        assert!(matches!(err, StlError::NegativeWindow { .. }), "{err}");
    }

    #[test]
    fn unknown_atom_reports_position() {
        let err = parse_spec("p and zz", &reg()).unwrap_err();
        assert!(matches!(err, StlError::UnknownAtom { ref name, pos: 6 } if name == "zz"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_spec("p and (q or", &reg()).unwrap_err();
        assert!(matches!(err, StlError::Syntax { pos: 11, .. }), "{err}");
        let err = parse_spec("p q", &reg()).unwrap_err();
        assert!(matches!(err, StlError::Syntax { pos: 2, .. }), "{err}");
        assert!(matches!(parse_spec("p # q", &reg()), Err(StlError::Syntax { pos: 2, .. })));
    }

    #[test]
    fn precedence_not_and_or() {
        let s = parse_spec("not p and q or p", &reg()).unwrap();
        let p = || Spec::Atom(reg().get("p").unwrap().clone());
        let q = || Spec::Atom(reg().get("q").unwrap().clone());
        assert_eq!(s, Spec::or(Spec::and(Spec::not(p()), q()), p()));

        let s = parse_spec("F[0,2] p and q", &reg()).unwrap();
        assert_eq!(s, Spec::and(Spec::eventually(0, 2, p()).unwrap(), q()));
    }

    #[test]
    fn print_then_parse_is_stable() {
        for text in [
            "F[0,25] dist(agent0, landmark0) < 0.3 and F[0,25] dist(agent0, landmark1) < 0.3",
            "not (p or q) and F[1,4] (p and not q)",
            "F[0,3] F[1,2] not not p or (true and q)",
            "dist(a, b) < 1e-3 or dist(b, a) < -0.5",
        ] {
            let s = parse_spec(text, &reg()).unwrap();
            let printed = s.to_string();
            let again = parse_spec(&printed, &reg()).unwrap();
            assert_eq!(s, again, "{text} -> {printed}");
            assert_eq!(printed, again.to_string());
        }
    }
}
