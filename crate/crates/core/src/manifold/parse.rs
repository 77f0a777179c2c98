//! Polynomial expressions over `x1..xl`, `w1..wn`, `cw1..cwn`.
//!
//! Grammar:
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary ('*' unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' integer)?
//! atom  := number | number 'i' | 'i' | variable | func '(' expr ')' | '(' expr ')'
//! func  := Re | Im | abs2 | conj
//! ```

use num_complex::Complex64;

use crate::polyalg::{Layout, Poly};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Imag(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxError {
    pub pos: usize,
    pub msg: String,
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, SyntaxError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let ch = bytes[i];
        match ch {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' => {
                out.push((i, Tok::Plus));
                i += 1
            }
            b'-' => {
                out.push((i, Tok::Minus));
                i += 1
            }
            b'*' => {
                out.push((i, Tok::Star));
                i += 1
            }
            b'^' => {
                out.push((i, Tok::Caret));
                i += 1
            }
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| SyntaxError {
                    pos: start,
                    msg: format!("bad number '{text}'"),
                })?;
                let imag = i < bytes.len()
                    && bytes[i] == b'i'
                    && !bytes.get(i + 1).is_some_and(|b| b.is_ascii_alphanumeric());
                if imag {
                    i += 1;
                    out.push((start, Tok::Imag(v)));
                } else {
                    out.push((start, Tok::Num(v)));
                }
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(src[start..i].to_string())));
            }
            _ => {
                return Err(SyntaxError {
                    pos: i,
                    msg: format!("unexpected character '{}'", src[i..].chars().next().unwrap()),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    layout: Layout,
    end: usize,
    _src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            pos: self.here(),
            msg: msg.into(),
        })
    }

    fn expect(&mut self, t: Tok) -> Result<(), SyntaxError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {t:?}"))
        }
    }

    fn expr(&mut self) -> Result<Poly, SyntaxError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = acc.add(&self.term()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = acc.sub(&self.term()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly, SyntaxError> {
        let mut acc = self.unary()?;
        while self.peek() == Some(&Tok::Star) {
            self.pos += 1;
            acc = acc.mul(&self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Poly, SyntaxError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Poly, SyntaxError> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            match self.peek().cloned() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && (0.0..=64.0).contains(&v) => {
                    self.pos += 1;
                    Ok(base.pow(v as u32))
                }
                _ => self.err("exponent must be a non-negative integer ≤ 64"),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Poly, SyntaxError> {
        let nv = self.layout.nvars();
        let tok = match self.peek().cloned() {
            Some(t) => t,
            None => return self.err("unexpected end of input"),
        };
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Poly::constant(nv, Complex64::new(v, 0.0)))
            }
            Tok::Imag(v) => {
                self.pos += 1;
                Ok(Poly::constant(nv, Complex64::new(0.0, v)))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                if let Some(f) = ["Re", "Im", "abs2", "conj"].iter().find(|f| **f == name) {
                    self.expect(Tok::LParen)?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen)?;
                    let c = self.layout.conjugate(&e);
                    return Ok(match *f {
                        "Re" => e.add(&c).scale(Complex64::new(0.5, 0.0)),
                        "Im" => e.sub(&c).scale(Complex64::new(0.0, -0.5)),
                        "abs2" => e.mul(&c),
                        _ => c,
                    });
                }
                if name == "i" {
                    return Ok(Poly::constant(nv, Complex64::new(0.0, 1.0)));
                }
                match self.variable(&name) {
                    Some(k) => Ok(Poly::var(nv, k)),
                    None => {
                        self.pos -= 1;
                        self.err(format!("unknown identifier '{name}'"))
                    }
                }
            }
            other => self.err(format!("unexpected token {other:?}")),
        }
    }

    fn variable(&self, name: &str) -> Option<usize> {
        let (prefix, idx) = if let Some(rest) = name.strip_prefix("cw") {
            ("cw", rest)
        } else if let Some(rest) = name.strip_prefix('w') {
            ("w", rest)
        } else {
            let rest = name.strip_prefix('x')?;
            ("x", rest)
        };
        if idx.starts_with('0') {
            return None;
        }
        let k: usize = idx.parse().ok()?;
        let k = k.checked_sub(1)?;
        let lay = self.layout;
        match prefix {
            "x" if k < lay.l => Some(lay.x(k)),
            "w" if k < lay.n => Some(lay.w(k)),
            "cw" if k < lay.n => Some(lay.cw(k)),
            _ => None,
        }
    }
}

/// Parses one polynomial expression in the given layout.
pub fn parse_poly(src: &str, layout: Layout) -> Result<Poly, SyntaxError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        layout,
        end: src.len(),
        _src: src,
    };
    if p.peek().is_none() {
        return p.err("empty expression");
    }
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

fn var_name(layout: Layout, k: usize) -> String {
    if k < layout.l {
        format!("x{}", k + 1)
    } else if k < layout.l + layout.n {
        format!("w{}", k - layout.l + 1)
    } else {
        format!("cw{}", k - layout.l - layout.n + 1)
    }
}

/// Canonical text of a polynomial; [`parse_poly`] reads it back exactly.
pub fn print_poly(p: &Poly, layout: Layout) -> String {
    print_poly_with(p, |v| var_name(layout, v))
}

/// [`print_poly`] with caller-supplied variable names.
pub fn print_poly_with<F: Fn(usize) -> String>(p: &Poly, var_name: F) -> String {
    if p.is_zero() {
        return "0".to_string();
    }
    let mut out = String::new();
    for (idx, (e, c)) in p.terms().enumerate() {
        let mono: Vec<String> = e
            .iter()
            .enumerate()
            .filter(|(_, &k)| k > 0)
            .map(|(v, &k)| {
                if k == 1 {
                    var_name(v)
                } else {
                    format!("{}^{}", var_name(v), k)
                }
            })
            .collect();
        let (neg, coeff) = if c.im == 0.0 {
            let neg = c.re.is_sign_negative();
            (neg, format!("{}", c.re.abs()))
        } else {
            let sign = if c.im.is_sign_negative() { '-' } else { '+' };
            (false, format!("({}{}{}i)", c.re, sign, c.im.abs()))
        };
        if idx == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let is_one = coeff == "1";
        if mono.is_empty() {
            out.push_str(&coeff);
        } else if is_one {
            out.push_str(&mono.join("*"));
        } else {
            out.push_str(&coeff);
            out.push('*');
            out.push_str(&mono.join("*"));
        }
    }
    out
}
