//! Recursive-descent parser.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x' digits | func '(' expr ')' | '(' expr ')'
//! ```

use super::{Expr, ExprError, Func, Node};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Returns the next token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let bytes = rest.as_bytes();
            let mut i = 0;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && bytes[i] == b'.' {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                let digits = j;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j > digits {
                    i = j;
                }
            }
            let text = &rest[..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                offset: start,
                expected: "a number".into(),
            })?;
            self.pos += i;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok((Tok::Op(c), start));
        }
        Err(ExprError::Syntax {
            offset: start,
            expected: "a number, identifier, operator or parenthesis".into(),
        })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ExprError> {
        let (tok, at) = self.lex.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax { offset: self.at, expected: expected.into() })
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        if self.tok == Tok::Op(op) {
            self.bump()
        } else {
            self.fail(&format!("'{op}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.tok {
                Tok::Op('+') => {
                    self.bump()?;
                    lhs = Expr::raw(Node::Add(lhs, self.term()?));
                }
                Tok::Op('-') => {
                    self.bump()?;
                    lhs = Expr::raw(Node::Sub(lhs, self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.tok {
                Tok::Op('*') => {
                    self.bump()?;
                    lhs = Expr::raw(Node::Mul(lhs, self.unary()?));
                }
                Tok::Op('/') => {
                    self.bump()?;
                    lhs = Expr::raw(Node::Div(lhs, self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            let inner = self.unary()?;
            return Ok(match inner.as_num() {
                Some(v) => Expr::num(-v),
                None => Expr::raw(Node::Neg(inner)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exp = self.unary()?;
            return Ok(Expr::raw(Node::Pow(base, exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::num(v))
            }
            Tok::Op('(') => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.at;
                if let Some(func) = Func::from_name(&name) {
                    self.bump()?;
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::raw(Node::Call(func, arg)));
                }
                let index = name
                    .strip_prefix('x')
                    .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|d| d.parse::<usize>().ok());
                match index {
                    Some(i) => {
                        self.bump()?;
                        Ok(Expr::var(i))
                    }
                    None => Err(ExprError::UnknownIdentifier { name, offset: at }),
                }
            }
            _ => self.fail("an operand"),
        }
    }
}

/// Parses `src` into an expression tree. Literals are kept as written, apart
/// from a leading minus folding into a numeric literal.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { lex: Lexer { src, pos: 0 }, tok: Tok::End, at: 0 };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.fail("an operator or end of input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_shapes() {
        let e = parse("x0^2 - x1^2").unwrap();
        match e.node() {
            Node::Sub(a, b) => {
                assert!(matches!(a.node(), Node::Pow(..)));
                assert!(matches!(b.node(), Node::Pow(..)));
            }
            other => panic!("{other:?}"),
        }
        let e = parse("exp(2*x0)").unwrap();
        match e.node() {
            Node::Call(Func::Exp, arg) => assert!(matches!(arg.node(), Node::Mul(..))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incomplete_input_offset() {
        assert_eq!(
            parse("x0 +"),
            Err(ExprError::Syntax { offset: 4, expected: "an operand".into() })
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("y + 1"), Err(ExprError::UnknownIdentifier { offset: 0, .. })));
        assert!(matches!(parse("foo(x0)"), Err(ExprError::UnknownIdentifier { .. })));
        assert!(matches!(parse("sin x0"), Err(ExprError::Syntax { offset: 4, .. })));
        assert!(matches!(parse("(x0"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse("x0 x1"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse("x0 # 1"), Err(ExprError::Syntax { offset: 3, .. })));
        assert!(matches!(parse(""), Err(ExprError::Syntax { offset: 0, .. })));
    }

    #[test]
    fn numbers_and_whitespace() {
        let e = parse("  1.5e-3*x1 +\t.25 ").unwrap();
        assert!((e.eval(&[0.0, 2.0]).unwrap() - 0.253).abs() < 1e-15);
        assert_eq!(parse("2E2").unwrap().as_num(), Some(200.0));
        assert_eq!(parse("- - 3").unwrap().as_num(), Some(3.0));
    }
}
