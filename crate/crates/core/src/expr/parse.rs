//! Prefix s-expression grammar:
//!
//! ```text
//! expr := "(" symbol expr* ")" | variable | number
//! ```
//!
//! Variables are `x` and `y`. Numbers are decimal literals (`inf`, `-inf`
//! and `NaN` are accepted for folded non-finite constants). Symbols are
//! `+ - * / neg inv sqrtabs sin cos exp log`.

use thiserror::Error;

use super::{Expr, Op};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at token {token} (byte {position}): {message}")]
pub struct ParseError {
    /// Zero-based token index.
    pub token: usize,
    /// Byte offset of the offending token.
    pub position: usize,
    pub message: String,
}

/// Formats a constant with 17 significant digits, trailing mantissa zeros
/// trimmed. The output always parses back to the same bit pattern.
pub fn format_constant(c: f64) -> String {
    if !c.is_finite() {
        return format!("{}", c);
    }
    let s = format!("{:.16e}", c);
    let (mantissa, exponent) = s.split_once('e').expect("exponent marker");
    let mantissa = if mantissa.contains('.') {
        mantissa.trim_end_matches('0').trim_end_matches('.')
    } else {
        mantissa
    };
    format!("{}e{}", mantissa, exponent)
}

#[derive(Debug)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(input: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = input.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                out.push((start, Tok::Atom(&input[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    tokens: Vec<(usize, Tok<'a>)>,
    pos: usize,
    len: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, token: usize, message: impl Into<String>) -> ParseError {
        let position = self.tokens.get(token).map(|t| t.0).unwrap_or(self.len);
        ParseError {
            token,
            position,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let here = self.pos;
        match self.tokens.get(here) {
            None => Err(self.error(here, "unexpected end of input")),
            Some((_, Tok::Close)) => Err(self.error(here, "unexpected ')'")),
            Some((_, Tok::Atom(atom))) => {
                self.pos += 1;
                leaf(atom).ok_or_else(|| self.error(here, format!("unknown terminal `{}`", atom)))
            }
            Some((_, Tok::Open)) => {
                self.pos += 1;
                let sym_at = self.pos;
                let op = match self.tokens.get(sym_at) {
                    Some((_, Tok::Atom(sym))) => Op::from_symbol(sym)
                        .ok_or_else(|| self.error(sym_at, format!("unknown symbol `{}`", sym)))?,
                    Some(_) => return Err(self.error(sym_at, "expected operator symbol")),
                    None => return Err(self.error(sym_at, "unexpected end of input")),
                };
                self.pos += 1;
                let mut args = Vec::with_capacity(op.arity());
                loop {
                    match self.tokens.get(self.pos) {
                        Some((_, Tok::Close)) => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(self.error(self.pos, "missing ')'")),
                        _ => args.push(self.expr()?),
                    }
                }
                if args.len() != op.arity() {
                    return Err(self.error(
                        sym_at,
                        format!(
                            "`{}` takes {} argument(s), got {}",
                            op.symbol(),
                            op.arity(),
                            args.len()
                        ),
                    ));
                }
                Ok(Expr::Call(op, args))
            }
        }
    }
}

fn leaf(atom: &str) -> Option<Expr> {
    match atom {
        "x" => Some(Expr::Var(0)),
        "y" => Some(Expr::Var(1)),
        _ => {
            if let Some(rest) = atom.strip_prefix('x') {
                if let Ok(i) = rest.parse::<usize>() {
                    return Some(Expr::Var(i));
                }
            }
            let first = atom.as_bytes()[0];
            let numeric_start = first.is_ascii_digit()
                || matches!(first, b'-' | b'+' | b'.')
                || atom.eq_ignore_ascii_case("inf")
                || atom.eq_ignore_ascii_case("nan");
            if numeric_start {
                atom.parse::<f64>().ok().map(Expr::Const)
            } else {
                None
            }
        }
    }
}

/// Parses one expression; trailing tokens are an error.
pub fn parse(input: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        tokens: tokenize(input),
        pos: 0,
        len: input.len(),
    };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.error(parser.pos, "trailing input after expression"));
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_prefix_form() {
        let e = Expr::binary(Op::Add, Expr::Var(0), Expr::unary(Op::Sin, Expr::Var(0)));
        assert_eq!(e.to_string(), "(+ x (sin x))");
        assert_eq!(parse("(+ x (sin x))").unwrap(), e);
    }

    #[test]
    fn unknown_symbol_reports_token() {
        let err = parse("(add x x)").unwrap_err();
        assert_eq!(err.token, 1);
        assert_eq!(err.position, 1);
    }

    #[test]
    fn arity_and_structure_errors() {
        assert_eq!(parse("(sin x x)").unwrap_err().token, 1);
        assert!(parse("(+ x").is_err());
        assert!(parse(")").is_err());
        assert!(parse("x y").is_err());
        assert!(parse("").is_err());
        assert!(parse("z").is_err());
        assert!(parse("(()").is_err());
    }

    #[test]
    fn constants_use_seventeen_digits() {
        assert_eq!(format_constant(2.0), "2e0");
        assert_eq!(format_constant(-1.5), "-1.5e0");
        assert_eq!(format_constant(0.1), "1.0000000000000001e-1");
        assert_eq!(format_constant(0.0), "0e0");
        for c in [0.1, -3.7e-200, 1e300, f64::MIN_POSITIVE, 123456.789, -0.0] {
            let back = parse(&format_constant(c)).unwrap();
            assert_eq!(back, Expr::Const(c));
        }
        assert_eq!(parse("inf").unwrap(), Expr::Const(f64::INFINITY));
        assert_eq!(parse("-inf").unwrap(), Expr::Const(f64::NEG_INFINITY));
    }

    #[test]
    fn minus_symbol_versus_negative_literal() {
        let e = parse("(- -2e0 x)").unwrap();
        assert_eq!(e, Expr::binary(Op::Sub, Expr::Const(-2.0), Expr::Var(0)));
    }

    #[test]
    fn all_symbols_round_trip() {
        for op in Op::ALL {
            let args = vec![Expr::Var(0); op.arity()];
            let e = Expr::Call(op, args);
            assert_eq!(parse(&e.to_string()).unwrap(), e);
        }
    }
}
