//! Text form of polynomials: `3/4*x1^2*x2 - x3 + 1/2`.
//!
//! The parser ignores all whitespace and accepts integer, decimal and `p/q`
//! coefficients; the writer emits terms in descending graded-lex order.

use std::fmt;

use super::exponent::ExponentVector;
use super::polynomial::Poly;
use super::scalar::Scalar;
use super::PolyError;

pub fn parse_poly<S: Scalar>(text: &str, dim: usize) -> Result<Poly<S>, PolyError> {
    let chars: Vec<(usize, char)> = text.char_indices().filter(|(_, c)| !c.is_whitespace()).collect();
    let mut parser = Parser { chars, pos: 0, dim, source_len: text.len() };
    parser.polynomial()
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    dim: usize,
    source_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map(|&(i, _)| i).unwrap_or(self.source_len)
    }

    fn error(&self, message: impl Into<String>) -> PolyError {
        PolyError::Parse { position: self.offset(), message: message.into() }
    }

    fn polynomial<S: Scalar>(&mut self) -> Result<Poly<S>, PolyError> {
        let mut out = Poly::zero(self.dim);
        if self.chars.is_empty() {
            return Err(self.error("empty polynomial"));
        }
        let mut first = true;
        loop {
            let negative = match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    false
                }
                Some('-') => {
                    self.pos += 1;
                    true
                }
                Some(_) if first => false,
                Some(c) => return Err(self.error(format!("expected '+' or '-', found '{c}'"))),
                None => break,
            };
            first = false;
            let (e, c) = self.term::<S>()?;
            out.add_term(e, if negative { -c } else { c });
        }
        Ok(out)
    }

    fn term<S: Scalar>(&mut self) -> Result<(ExponentVector, S), PolyError> {
        let mut coeff = S::one();
        let mut exps = vec![0u16; self.dim];
        loop {
            match self.peek() {
                Some('x') => {
                    let (var, power) = self.variable()?;
                    exps[var] += power;
                }
                Some(c) if c.is_ascii_digit() || c == '.' => {
                    coeff = coeff * self.number::<S>()?;
                }
                Some(c) => return Err(self.error(format!("unexpected '{c}'"))),
                None => return Err(self.error("unexpected end of input")),
            }
            if self.peek() == Some('*') {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok((ExponentVector::new(exps), coeff))
    }

    fn digits(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                s.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        s
    }

    fn variable(&mut self) -> Result<(usize, u16), PolyError> {
        let start = self.offset();
        self.pos += 1; // 'x'
        let idx = self.digits();
        let var: usize = idx.parse().map_err(|_| self.error("expected variable index after 'x'"))?;
        if var == 0 || var > self.dim {
            return Err(PolyError::Parse {
                position: start,
                message: format!("variable x{var} outside ambient dimension {}", self.dim),
            });
        }
        let mut power = 1u16;
        if self.peek() == Some('^') {
            self.pos += 1;
            let p = self.digits();
            power = p.parse().map_err(|_| self.error("expected exponent after '^'"))?;
        }
        Ok((var - 1, power))
    }

    fn number<S: Scalar>(&mut self) -> Result<S, PolyError> {
        let start = self.pos;
        let mut lit = self.decimal();
        if self.peek() == Some('/') {
            self.pos += 1;
            lit.push('/');
            lit.push_str(&self.decimal());
        }
        S::parse_literal(&lit).ok_or_else(|| PolyError::Parse {
            position: self.chars.get(start).map(|&(i, _)| i).unwrap_or(0),
            message: format!("invalid coefficient '{lit}'"),
        })
    }

    fn decimal(&mut self) -> String {
        let mut s = self.digits();
        if self.peek() == Some('.') {
            self.pos += 1;
            s.push('.');
            s.push_str(&self.digits());
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            let save = self.pos;
            self.pos += 1;
            let mut exp = String::from("e");
            if let Some(sign @ ('+' | '-')) = self.peek() {
                exp.push(sign);
                self.pos += 1;
            }
            let d = self.digits();
            if d.is_empty() {
                self.pos = save;
            } else {
                exp.push_str(&d);
                s.push_str(&exp);
            }
        }
        s
    }
}

impl<S: Scalar> fmt::Display for Poly<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms().rev().enumerate() {
            let negative = c.is_negative();
            let magnitude = if negative { -c.clone() } else { c.clone() };
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mut factors = Vec::new();
            if !magnitude.is_one() || e.degree() == 0 {
                factors.push(magnitude.format_literal());
            }
            for (v, &a) in e.as_slice().iter().enumerate() {
                match a {
                    0 => {}
                    1 => factors.push(format!("x{}", v + 1)),
                    _ => factors.push(format!("x{}^{}", v + 1, a)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}
