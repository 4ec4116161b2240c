//! Quasi-affine integer expressions.
//!
//! An [`Affine`] is kept in canonical form at all times: a sorted map from
//! atoms (variables, or floor-division / modulo of a sub-expression by a
//! positive constant) to non-zero integer coefficients, plus a constant.
//! Every constructor folds constants and splits exactly-divisible parts out
//! of `floordiv`/`mod`, so two expressions that normalize to the same form
//! compare equal structurally.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AffineError {
    #[error("column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("column {col}: non-affine expression: {msg}")]
    NonAffine { col: usize, msg: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("divisor must be a positive constant, got {0}")]
    BadDivisor(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Var(String),
    FloorDiv(Box<Affine>, i64),
    Mod(Box<Affine>, i64),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Affine {
    terms: BTreeMap<Atom, i64>,
    constant: i64,
}

impl Affine {
    pub fn constant(c: i64) -> Self {
        Affine { terms: BTreeMap::new(), constant: c }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Self::term(Atom::Var(name.into()), 1)
    }

    fn term(atom: Atom, coeff: i64) -> Self {
        let mut terms = BTreeMap::new();
        if coeff != 0 {
            terms.insert(atom, coeff);
        }
        Affine { terms, constant: 0 }
    }

    pub fn constant_part(&self) -> i64 {
        self.constant
    }

    pub fn as_constant(&self) -> Option<i64> {
        self.terms.is_empty().then_some(self.constant)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Atom, i64)> {
        self.terms.iter().map(|(a, c)| (a, *c))
    }

    /// Coefficient of `name` as a top-level linear term (0 if absent or only
    /// nested inside a floordiv/mod atom).
    pub fn coefficient(&self, name: &str) -> i64 {
        self.terms.get(&Atom::Var(name.to_string())).copied().unwrap_or(0)
    }

    pub fn add(&self, other: &Affine) -> Affine {
        let mut out = self.clone();
        for (atom, c) in &other.terms {
            let e = out.terms.entry(atom.clone()).or_insert(0);
            *e += c;
            if *e == 0 {
                out.terms.remove(atom);
            }
        }
        out.constant += other.constant;
        out
    }

    pub fn add_const(&self, c: i64) -> Affine {
        let mut out = self.clone();
        out.constant += c;
        out
    }

    pub fn scale(&self, k: i64) -> Affine {
        if k == 0 {
            return Affine::constant(0);
        }
        Affine {
            terms: self.terms.iter().map(|(a, c)| (a.clone(), c * k)).collect(),
            constant: self.constant * k,
        }
    }

    pub fn neg(&self) -> Affine {
        self.scale(-1)
    }

    pub fn sub(&self, other: &Affine) -> Affine {
        self.add(&other.neg())
    }

    /// Splits `self` into `(q, r)` with `self = c*q + r` where every
    /// coefficient of `r` is not a multiple of `c` and `0 <= r.constant < c`.
    fn split_by(&self, c: i64) -> (Affine, Affine) {
        let mut q = Affine::constant(self.constant.div_euclid(c));
        let mut r = Affine::constant(self.constant.rem_euclid(c));
        for (atom, k) in &self.terms {
            if k % c == 0 {
                q.terms.insert(atom.clone(), k / c);
            } else {
                r.terms.insert(atom.clone(), *k);
            }
        }
        (q, r)
    }

    pub fn floordiv(&self, c: i64) -> Result<Affine, AffineError> {
        if c <= 0 {
            return Err(AffineError::BadDivisor(c));
        }
        if c == 1 {
            return Ok(self.clone());
        }
        let (q, r) = self.split_by(c);
        if let Some(rc) = r.as_constant() {
            // 0 <= rc < c
            debug_assert!(rc < c);
            return Ok(q);
        }
        Ok(q.add(&Affine::term(Atom::FloorDiv(Box::new(r), c), 1)))
    }

    pub fn modulo(&self, c: i64) -> Result<Affine, AffineError> {
        if c <= 0 {
            return Err(AffineError::BadDivisor(c));
        }
        if c == 1 {
            return Ok(Affine::constant(0));
        }
        let (_, r) = self.split_by(c);
        if let Some(rc) = r.as_constant() {
            return Ok(Affine::constant(rc));
        }
        Ok(Affine::term(Atom::Mod(Box::new(r), c), 1))
    }

    /// Rebuilds the expression through the canonicalizing constructors.
    pub fn normalize(&self) -> Affine {
        let mut out = Affine::constant(self.constant);
        for (atom, k) in &self.terms {
            let t = match atom {
                Atom::Var(n) => Affine::var(n.clone()),
                Atom::FloorDiv(e, c) => e.normalize().floordiv(*c).expect("positive divisor"),
                Atom::Mod(e, c) => e.normalize().modulo(*c).expect("positive divisor"),
            };
            out = out.add(&t.scale(*k));
        }
        out
    }

    pub fn eval<F>(&self, env: &F) -> Result<i64, AffineError>
    where
        F: Fn(&str) -> Option<i64>,
    {
        let mut acc = self.constant;
        for (atom, k) in &self.terms {
            let v = match atom {
                Atom::Var(n) => env(n).ok_or_else(|| AffineError::Unbound(n.clone()))?,
                Atom::FloorDiv(e, c) => e.eval(env)?.div_euclid(*c),
                Atom::Mod(e, c) => e.eval(env)?.rem_euclid(*c),
            };
            acc += k * v;
        }
        Ok(acc)
    }

    /// Evaluates against an ordered slice of `(name, value)` bindings.
    pub fn eval_with(&self, bindings: &[(&str, i64)]) -> Result<i64, AffineError> {
        self.eval(&|n: &str| bindings.iter().find(|(b, _)| *b == n).map(|(_, v)| *v))
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        for atom in self.terms.keys() {
            match atom {
                Atom::Var(n) => {
                    out.insert(n.clone());
                }
                Atom::FloorDiv(e, _) | Atom::Mod(e, _) => e.collect_vars(out),
            }
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        self.terms.keys().any(|a| match a {
            Atom::Var(n) => n == name,
            Atom::FloorDiv(e, _) | Atom::Mod(e, _) => e.depends_on(name),
        })
    }

    /// True when no floordiv/mod atom appears anywhere.
    pub fn is_linear(&self) -> bool {
        self.terms.keys().all(|a| matches!(a, Atom::Var(_)))
    }

    pub fn substitute(&self, name: &str, with: &Affine) -> Affine {
        let mut out = Affine::constant(self.constant);
        for (atom, k) in &self.terms {
            let t = match atom {
                Atom::Var(n) if n == name => with.clone(),
                Atom::Var(n) => Affine::var(n.clone()),
                Atom::FloorDiv(e, c) => e.substitute(name, with).floordiv(*c).expect("positive divisor"),
                Atom::Mod(e, c) => e.substitute(name, with).modulo(*c).expect("positive divisor"),
            };
            out = out.add(&t.scale(*k));
        }
        out
    }

    pub fn rename(&self, from: &str, to: &str) -> Affine {
        self.substitute(from, &Affine::var(to))
    }

    /// Minimum and maximum over a box of variable ranges `[0, extent)`.
    /// Exact for linear expressions; floordiv/mod atoms use conservative bounds.
    pub fn bounds<F>(&self, extent: &F) -> Option<(i64, i64)>
    where
        F: Fn(&str) -> Option<i64>,
    {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (atom, k) in &self.terms {
            let (alo, ahi) = match atom {
                Atom::Var(n) => (0, extent(n)? - 1),
                Atom::FloorDiv(e, c) => {
                    let (l, h) = e.bounds(extent)?;
                    (l.div_euclid(*c), h.div_euclid(*c))
                }
                Atom::Mod(_, c) => (0, c - 1),
            };
            if *k >= 0 {
                lo += k * alo;
                hi += k * ahi;
            } else {
                lo += k * ahi;
                hi += k * alo;
            }
        }
        Some((lo, hi))
    }
}

impl Affine {
    fn is_single_var(&self) -> bool {
        self.constant == 0 && self.terms.len() == 1 && matches!(self.terms.iter().next(), Some((Atom::Var(_), 1)))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Var(n) => write!(f, "{n}"),
            Atom::FloorDiv(e, c) if e.is_single_var() => write!(f, "{e} / {c}"),
            Atom::Mod(e, c) if e.is_single_var() => write!(f, "{e} % {c}"),
            Atom::FloorDiv(e, c) => write!(f, "({e}) / {c}"),
            Atom::Mod(e, c) => write!(f, "({e}) % {c}"),
        }
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (atom, k) in &self.terms {
            let mag = k.abs();
            if first {
                if *k < 0 {
                    write!(f, "-")?;
                }
            } else if *k < 0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let wrap = first && *k < 0 && !matches!(atom, Atom::Var(_));
            if wrap {
                write!(f, "({atom})")?;
                if mag != 1 {
                    write!(f, "*{mag}")?;
                }
            } else if mag == 1 {
                write!(f, "{atom}")?;
            } else {
                write!(f, "{atom}*{mag}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", self.constant)
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(i64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, AffineError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse().map_err(|_| AffineError::Syntax { col: start + 1, msg: format!("integer `{s}` out of range") })?;
            out.push((Tok::Int(v), start + 1));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start + 1));
        } else if "+-*/%()".contains(c) {
            out.push((Tok::Sym(c), i + 1));
            i += 1;
        } else {
            return Err(AffineError::Syntax { col: i + 1, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser<'a, F> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
    is_var: &'a F,
}

impl<'a, F: Fn(&str) -> bool> Parser<'a, F> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(_, c)| *c).unwrap_or(self.end_col)
    }

    fn expr(&mut self) -> Result<Affine, AffineError> {
        let mut acc = self.term()?;
        while let Some(Tok::Sym(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == '+' { acc.add(&rhs) } else { acc.sub(&rhs) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Affine, AffineError> {
        let mut acc = self.factor()?;
        while let Some(Tok::Sym(c @ ('*' | '/' | '%'))) = self.peek().cloned() {
            let col = self.col();
            self.pos += 1;
            let rhs = self.factor()?;
            acc = match c {
                '*' => match (acc.as_constant(), rhs.as_constant()) {
                    (Some(k), _) => rhs.scale(k),
                    (_, Some(k)) => acc.scale(k),
                    _ => return Err(AffineError::NonAffine { col, msg: "product of two variables".into() }),
                },
                _ => {
                    let k = rhs
                        .as_constant()
                        .ok_or_else(|| AffineError::NonAffine { col, msg: "divisor must be a constant".into() })?;
                    if k <= 0 {
                        return Err(AffineError::NonAffine { col, msg: format!("divisor {k} must be positive") });
                    }
                    if c == '/' {
                        acc.floordiv(k)?
                    } else {
                        acc.modulo(k)?
                    }
                }
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Affine, AffineError> {
        let col = self.col();
        match self.toks.get(self.pos).cloned() {
            Some((Tok::Int(v), _)) => {
                self.pos += 1;
                Ok(Affine::constant(v))
            }
            Some((Tok::Ident(n), _)) => {
                self.pos += 1;
                if !(self.is_var)(&n) {
                    return Err(AffineError::Unbound(n));
                }
                Ok(Affine::var(n))
            }
            Some((Tok::Sym('-'), _)) => {
                self.pos += 1;
                Ok(self.factor()?.neg())
            }
            Some((Tok::Sym('('), _)) => {
                self.pos += 1;
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::Sym(')')) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(AffineError::Syntax { col: self.col(), msg: "expected `)`".into() }),
                }
            }
            Some((t, _)) => Err(AffineError::Syntax { col, msg: format!("unexpected token {t:?}") }),
            None => Err(AffineError::Syntax { col, msg: "unexpected end of expression".into() }),
        }
    }
}

/// Parses `+ - *const /const %const` expressions; `is_var` decides which
/// identifiers are in scope.
pub fn parse_affine<F: Fn(&str) -> bool>(src: &str, is_var: &F) -> Result<Affine, AffineError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, end_col: src.chars().count() + 1, is_var };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(AffineError::Syntax { col: p.col(), msg: "trailing input".into() });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_var(_: &str) -> bool {
        true
    }

    fn p(s: &str) -> Affine {
        parse_affine(s, &any_var).unwrap()
    }

    #[test]
    fn folds_constants_and_orders_terms() {
        assert_eq!(p("x + 2*3 - x + y"), p("y + 6"));
        assert_eq!(p("tm*8+x").to_string(), "tm*8 + x");
        assert_eq!(p("3 * (a - 1)").to_string(), "a*3 - 3");
    }

    #[test]
    fn floordiv_and_mod_split_divisible_parts() {
        assert_eq!(p("(8*t + x) / 8"), p("t + x / 8"));
        assert_eq!(p("(8*t + x) % 8"), p("x % 8"));
        assert_eq!(p("(8*t + 16) % 8"), Affine::constant(0));
        assert_eq!(p("x % 1"), Affine::constant(0));
        assert_eq!(p("x / 1"), p("x"));
        assert_eq!(p("(x + 1) % 8").eval_with(&[("x", 7)]).unwrap(), 0);
        assert_eq!(p("(x - 1) % 8").eval_with(&[("x", 0)]).unwrap(), 7);
        assert_eq!(p("(x / 4) * 4 + y / 2").eval_with(&[("x", 7), ("y", 7)]).unwrap(), 7);
    }

    #[test]
    fn rejects_non_affine() {
        assert!(matches!(parse_affine("x*y", &any_var), Err(AffineError::NonAffine { .. })));
        assert!(matches!(parse_affine("x / y", &any_var), Err(AffineError::NonAffine { .. })));
        assert!(matches!(parse_affine("x / 0", &any_var), Err(AffineError::NonAffine { .. })));
        assert!(matches!(parse_affine("x +", &any_var), Err(AffineError::Syntax { .. })));
        assert_eq!(parse_affine("q + 1", &|n: &str| n == "x"), Err(AffineError::Unbound("q".into())));
    }

    #[test]
    fn substitution_rewrites_nested_atoms() {
        let e = p("(g + 1) % 4");
        let s = e.substitute("g", &p("t*4 + x"));
        assert_eq!(s, p("(x + 1) % 4"));
    }

    fn arb_expr() -> impl Strategy<Value = Affine> {
        let leaf = prop_oneof![
            (-20i64..20).prop_map(Affine::constant),
            prop::sample::select(vec!["a", "b", "c"]).prop_map(Affine::var),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(&b)),
                (inner.clone(), -5i64..5).prop_map(|(a, k)| a.scale(k)),
                (inner.clone(), 1i64..6).prop_map(|(a, k)| a.floordiv(k).unwrap()),
                (inner, 1i64..6).prop_map(|(a, k)| a.modulo(k).unwrap()),
            ]
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_identity_on_canonical(e in arb_expr()) {
            let n = e.normalize();
            prop_assert_eq!(&n.normalize(), &n);
            prop_assert_eq!(&n, &e);
        }

        #[test]
        fn display_reparses_to_equal(e in arb_expr()) {
            let back = parse_affine(&e.to_string(), &any_var).unwrap();
            prop_assert_eq!(back, e);
        }

        #[test]
        fn canonical_form_preserves_value(e in arb_expr(), a in -30i64..30, b in -30i64..30, c in -30i64..30) {
            // evaluating the printed text through a second parse gives the same number
            let env = [("a", a), ("b", b), ("c", c)];
            let v1 = e.eval_with(&env).unwrap();
            let v2 = parse_affine(&e.to_string(), &any_var).unwrap().eval_with(&env).unwrap();
            prop_assert_eq!(v1, v2);
        }
    }
}
