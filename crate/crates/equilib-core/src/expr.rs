//! Tiny arithmetic-expression language for user-defined scalar fields.
//!
//! Grammar (usual precedence, `^` binds tightest and is right-associative):
//!   expr   := term (('+' | '-') term)*
//!   term   := factor (('*' | '/') factor)*
//!   factor := '-' factor | power
//!   power  := atom ('^' factor)?
//!   atom   := number | 'x1'..'x9' | func '(' expr ')' | '(' expr ')'
//!   func   := sin | cos | exp | log | sqrt
//!
//! Fields built from expressions get finite-difference jets; the parser only
//! needs to evaluate values fast and deterministically.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src: src.as_bytes(), pos: 0 };
        p.skip_ws();
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Expr(format!("unexpected input at byte {}: {:?}", p.pos, &src[p.pos..])));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).powf(b.eval(x)),
            Expr::Neg(a) => -a.eval(x),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Log(a) => a.eval(x).ln(),
            Expr::Sqrt(a) => a.eval(x).sqrt(),
        }
    }

    /// Highest variable index used, plus one (0 for constant expressions).
    pub fn min_dimension(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.min_dimension().max(b.min_dimension())
            }
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sqrt(a) => {
                a.min_dimension()
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.factor()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(Error::Expr("expected ')'".into()));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            other => Err(Error::Expr(format!("unexpected token {other:?} at byte {}", self.pos))),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' {
                self.pos += 1;
            } else if (c == b'+' || c == b'-')
                && matches!(self.src.get(self.pos - 1), Some(b'e') | Some(b'E'))
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Expr(format!("bad number literal {text:?}")))?;
        self.skip_ws();
        Ok(Expr::Const(v))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        self.skip_ws();
        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(i) = rest.parse::<usize>() {
                if i >= 1 && i <= 9 {
                    return Ok(Expr::Var(i - 1));
                }
            }
        }
        let func: fn(Box<Expr>) -> Expr = match name.as_str() {
            "sin" => Expr::Sin,
            "cos" => Expr::Cos,
            "exp" => Expr::Exp,
            "log" => Expr::Log,
            "sqrt" => Expr::Sqrt,
            _ => return Err(Error::Expr(format!("unknown identifier {name:?}"))),
        };
        if !self.eat(b'(') {
            return Err(Error::Expr(format!("expected '(' after {name}")));
        }
        let arg = self.expr()?;
        if !self.eat(b')') {
            return Err(Error::Expr("expected ')'".into()));
        }
        Ok(func(Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_and_evaluates() {
        let e = Expr::parse("x1^2 + 2*x2^2 - sin(x3)/2").unwrap();
        let v = e.eval(&[1.5, -0.5, 0.3]);
        assert_relative_eq!(v, 1.5f64.powi(2) + 2.0 * 0.25 - 0.3f64.sin() / 2.0);
        assert_eq!(e.min_dimension(), 3);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-x1^2").unwrap();
        assert_relative_eq!(e.eval(&[3.0]), -9.0);
        let e = Expr::parse("2^3^2").unwrap(); // right associative: 2^(3^2)
        assert_relative_eq!(e.eval(&[]), 512.0);
        let e = Expr::parse("1 - 2 - 3").unwrap();
        assert_relative_eq!(e.eval(&[]), -4.0);
        let e = Expr::parse("exp(log(2.5))").unwrap();
        assert_relative_eq!(e.eval(&[]), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Expr::parse("x1 +").is_err());
        assert!(Expr::parse("foo(x1)").is_err());
        assert!(Expr::parse("x1 x2").is_err());
        assert!(Expr::parse("(x1").is_err());
    }
}
