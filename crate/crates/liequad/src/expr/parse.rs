//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' integer)?
//! base   := rational-literal | identifier | '(' expr ')' | '-' factor
//! ```
//!
//! Rational literals are decimal (`1.25`) or plain integers; `p/q` integer
//! quotients reduce to exact rationals through the division operator.
//! Whitespace is insignificant. Errors carry the byte position.

use super::{CoordinateSystem, ExprError, ScalarExpr};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Pow;
use std::sync::Arc;

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    coords: &'a Arc<CoordinateSystem>,
}

pub fn parse(text: &str, coords: &Arc<CoordinateSystem>) -> Result<ScalarExpr, ExprError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
        coords,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Syntax {
            pos: p.pos,
            msg: format!("unexpected `{}`", p.peek_char()),
        });
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_char(&self) -> char {
        self.peek().map(|b| b as char).unwrap_or('\0')
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr, ExprError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr, ExprError> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = acc.mul(&self.factor()?);
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs_pos = self.pos;
                    let rhs = self.factor()?;
                    acc = acc.div(&rhs).map_err(|e| match e {
                        ExprError::DivisionByZero => ExprError::Syntax {
                            pos: rhs_pos,
                            msg: "division by an identically zero expression".into(),
                        },
                        other => other,
                    })?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr, ExprError> {
        let base = self.base()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let e = self.integer()?;
            return base.powi(e).map_err(|err| match err {
                ExprError::DivisionByZero => ExprError::Syntax {
                    pos: self.pos,
                    msg: "negative power of the zero expression".into(),
                },
                other => other,
            });
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<ScalarExpr, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b'(').map(|_| b')').or(Some(b')')) {
                    // fallthrough below handles the real check
                }
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(e)
                } else {
                    Err(ExprError::Syntax {
                        pos: self.pos,
                        msg: "expected `)`".into(),
                    })
                }
            }
            Some(b'-') => {
                self.pos += 1;
                Ok(self.factor()?.neg())
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            _ => Err(ExprError::Syntax {
                pos: self.pos,
                msg: format!("expected a value, found `{}`", self.peek_char()),
            }),
        }
    }

    fn number(&mut self) -> Result<ScalarExpr, ExprError> {
        let start = self.pos;
        while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        let int_part = &self.src[start..self.pos];
        let mut value = BigRational::from_integer(
            String::from_utf8_lossy(int_part)
                .parse::<BigInt>()
                .map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: "bad integer literal".into(),
                })?,
        );
        if self.peek() == Some(b'.') {
            self.pos += 1;
            let fstart = self.pos;
            while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
                self.pos += 1;
            }
            if self.pos == fstart {
                return Err(ExprError::Syntax {
                    pos: self.pos,
                    msg: "expected digits after decimal point".into(),
                });
            }
            let frac = &self.src[fstart..self.pos];
            let digits = String::from_utf8_lossy(frac);
            let numer: BigInt = digits.parse().map_err(|_| ExprError::Syntax {
                pos: fstart,
                msg: "bad decimal literal".into(),
            })?;
            let denom = BigInt::from(10u32).pow(digits.len() as u32);
            value += BigRational::new(numer, denom);
        }
        Ok(ScalarExpr::constant(self.coords, value))
    }

    fn identifier(&mut self) -> Result<ScalarExpr, ExprError> {
        let start = self.pos;
        while self
            .peek()
            .map(|c| c.is_ascii_alphanumeric() || c == b'_')
            .unwrap_or(false)
        {
            self.pos += 1;
        }
        let name = String::from_utf8_lossy(&self.src[start..self.pos]).to_string();
        match self.coords.index_of(&name) {
            Some(i) => Ok(ScalarExpr::coordinate(self.coords, i)),
            None => Err(ExprError::UnknownCoordinate { pos: start, name }),
        }
    }

    fn integer(&mut self) -> Result<i32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        let neg = if self.peek() == Some(b'-') {
            self.pos += 1;
            true
        } else {
            false
        };
        let dstart = self.pos;
        while self.peek().map(|c| c.is_ascii_digit()).unwrap_or(false) {
            self.pos += 1;
        }
        if self.pos == dstart {
            return Err(ExprError::Syntax {
                pos: self.pos,
                msg: "expected an integer exponent".into(),
            });
        }
        let digits = String::from_utf8_lossy(&self.src[dstart..self.pos]);
        let v: i32 = digits.parse().map_err(|_| ExprError::Syntax {
            pos: start,
            msg: "exponent out of range".into(),
        })?;
        Ok(if neg { -v } else { v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr;

    fn coords_xy() -> Arc<CoordinateSystem> {
        CoordinateSystem::new(vec!["x", "y"]).unwrap()
    }

    #[test]
    fn parses_paper_style_coefficients() {
        let c = coords_xy();
        let e = parse("1 + y^2", &c).unwrap();
        let y = ScalarExpr::coordinate(&c, 1);
        assert_eq!(e, ScalarExpr::one(&c).add(&y.powi(2).unwrap()));
        assert!(parse("0", &c).unwrap().is_zero());
        assert!(parse("x*y - y*x", &c).unwrap().is_zero());
    }

    #[test]
    fn rational_literals() {
        let c = coords_xy();
        assert_eq!(parse("1.25", &c).unwrap(), parse("5/4", &c).unwrap());
        assert_eq!(parse("3/4", &c).unwrap(), parse("0.75", &c).unwrap());
        assert_eq!(
            parse("-1/2 * x", &c).unwrap(),
            parse("x * (0.5 - 1)", &c).unwrap()
        );
    }

    #[test]
    fn precedence_and_power() {
        let c = coords_xy();
        assert_eq!(
            parse("x + y * x^2", &c).unwrap(),
            parse("x + (y * (x^2))", &c).unwrap()
        );
        assert_eq!(parse("x^-1", &c).unwrap(), parse("1/x", &c).unwrap());
        assert_eq!(parse("-x^2", &c).unwrap(), parse("-(x^2)", &c).unwrap());
    }

    #[test]
    fn errors_carry_positions() {
        let c = coords_xy();
        match parse("x + ", &c) {
            Err(ExprError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected syntax error, got {:?}", other),
        }
        match parse("x + z", &c) {
            Err(ExprError::UnknownCoordinate { pos, name }) => {
                assert_eq!(pos, 4);
                assert_eq!(name, "z");
            }
            other => panic!("expected unknown coordinate, got {:?}", other),
        }
        assert!(parse("x + (y", &c).is_err());
        assert!(parse("x ^ y", &c).is_err());
        assert!(parse("1/(x - x)", &c).is_err());
    }

    #[test]
    fn whitespace_is_insignificant() {
        let c = coords_xy();
        assert_eq!(
            expr::parse(" x*y\t+ 1 ", &c).unwrap(),
            expr::parse("x*y+1", &c).unwrap()
        );
    }
}
