//! Recursive-descent parser for the infix expression grammar.
//!
//! Precedence: `^` > unary `-` > `*`,`/` > `+`,`-`; parentheses and function
//! call syntax `f(arg)`. Variable tokens are `[A-Za-z][A-Za-z0-9_]*`.
//! Exponents must constant-fold to a real number.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;

use thiserror::Error;

use super::{simplify, Expr, UnaryOp};

/// Syntax error with the byte offset of the offending location.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("syntax error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

/// Parse `text` into an expression tree. The result is normalized by
/// constant folding, so `print -> parse` round-trips up to that.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { bytes: text.as_bytes(), pos: 0, last_token_end: 0 };
    let e = p.expression()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.err_here("unexpected trailing input"));
    }
    Ok(simplify(&e))
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    last_token_end: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, offset: usize, message: &str) -> ParseError {
        ParseError { offset, message: message.to_owned() }
    }

    fn err_here(&self, message: &str) -> ParseError {
        self.err(self.pos, message)
    }

    /// Missing-operand errors point just past the previous token.
    fn err_expected_operand(&self) -> ParseError {
        self.err(self.last_token_end, "expected an operand")
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, byte: u8) -> bool {
        if self.peek() == Some(byte) {
            self.pos += 1;
            self.last_token_end = self.pos;
            true
        } else {
            false
        }
    }

    fn expression(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = lhs + self.term()?;
            } else if self.eat(b'-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = lhs * self.unary()?;
            } else if self.eat(b'/') {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(-self.unary()?)
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let at = self.pos;
            let exponent = self.unary()?;
            match simplify(&exponent).as_const() {
                Some(c) => Ok(base.pow(c)),
                None => Err(self.err(at, "exponent must be a real constant")),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err_expected_operand()),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expression()?;
                if !self.eat(b')') {
                    return Err(self.err_here("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.err_expected_operand()),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && self.bytes[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `2e` without digits: the `e` belongs to an identifier context, back off.
                self.pos = mark;
            }
        }
        let text = core::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        let value: f64 = text
            .parse()
            .map_err(|_| self.err(start, &format!("invalid number `{text}`")))?;
        self.last_token_end = self.pos;
        Ok(Expr::cst(value))
    }

    fn identifier(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii identifier");
        self.last_token_end = self.pos;
        if self.peek() == Some(b'(') {
            let op = function_by_name(name).ok_or_else(|| {
                self.err(start, &format!("unknown function name `{name}`"))
            })?;
            self.pos += 1;
            let arg = self.expression()?;
            if !self.eat(b')') {
                return Err(self.err_here("expected `)`"));
            }
            Ok(Expr::Unary(op, alloc::boxed::Box::new(arg)))
        } else {
            Ok(Expr::var(name))
        }
    }
}

fn function_by_name(name: &str) -> Option<UnaryOp> {
    match name {
        "sqrt" => Some(UnaryOp::Sqrt),
        "exp" => Some(UnaryOp::Exp),
        "ln" => Some(UnaryOp::Ln),
        "sin" => Some(UnaryOp::Sin),
        "cos" => Some(UnaryOp::Cos),
        "arcsin" | "asin" => Some(UnaryOp::Arcsin),
        "abs" => Some(UnaryOp::Abs),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{BinaryOp, Bindings};
    use super::*;
    use alloc::boxed::Box;

    #[test]
    fn parses_with_precedence() {
        let e = parse("u*u_x^2").unwrap();
        assert_eq!(
            e,
            Expr::Binary(
                BinaryOp::Mul,
                Box::new(Expr::var("u")),
                Box::new(Expr::var("u_x").pow(2.0)),
            )
        );
    }

    #[test]
    fn parses_seed_solution() {
        let e = parse("x/sqrt(-2*t)").unwrap();
        let v = e.evaluate(&Bindings::from_pairs(&[("t", -0.5), ("x", 2.0)])).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn reports_offset_of_missing_operand() {
        let err = parse("u_x + ").unwrap_err();
        assert_eq!(err.offset, 5);
    }

    #[test]
    fn reports_unknown_function() {
        let err = parse("sinh(x)").unwrap_err();
        assert!(err.message.contains("unknown function"));
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse("x/**").is_err());
        assert!(parse("(a + b").is_err());
        assert!(parse("a b").is_err());
        assert!(parse("x^y").is_err());
    }

    #[test]
    fn constant_exponent_expressions_fold() {
        let e = parse("x^(-3/2)").unwrap();
        assert_eq!(e, Expr::var("x").pow(-1.5));
        let e = parse("x^2^3").unwrap();
        assert_eq!(e, Expr::var("x").pow(8.0));
    }

    #[test]
    fn scientific_notation() {
        let e = parse("1e-3 + 2.5E2").unwrap();
        assert_eq!(e, Expr::cst(250.001));
    }
}
