//! Parser for `.tk` kernel files.

use std::collections::{BTreeMap, BTreeSet};

use super::{Access, AccessKind, Kernel, KernelError, LoopKind, LoopVar, Op, OpKind, Tensor};
use crate::affine::{parse_affine, Affine, AffineError};

struct P<'a> {
    line: usize,
    /// Column offset of `s` within the source line.
    base: usize,
    s: &'a str,
    pos: usize,
}

impl<'a> P<'a> {
    fn err(&self, msg: impl Into<String>) -> KernelError {
        KernelError::Syntax { line: self.line, col: self.base + self.pos + 1, msg: msg.into() }
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn done(&mut self) -> bool {
        self.ws();
        self.pos >= self.s.len()
    }

    fn ident(&mut self) -> Result<String, KernelError> {
        self.ws();
        let start = self.pos;
        let b = self.s.as_bytes();
        while self.pos < b.len() && (b[self.pos].is_ascii_alphanumeric() || b[self.pos] == b'_') {
            self.pos += 1;
        }
        if start == self.pos || b[start].is_ascii_digit() {
            self.pos = start;
            return Err(self.err("expected identifier"));
        }
        Ok(self.s[start..self.pos].to_string())
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.ws();
        if self.s[self.pos..].starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), KernelError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{tok}`")))
        }
    }

    /// Contents of a bracketed group opened by `open`; returns the column
    /// offset of the contents.
    fn group(&mut self, open: char, close: char) -> Result<(usize, &'a str), KernelError> {
        self.ws();
        if !self.s[self.pos..].starts_with(open) {
            return Err(self.err(format!("expected `{open}`")));
        }
        let start = self.pos + 1;
        let mut depth = 0;
        for (i, ch) in self.s[self.pos..].char_indices() {
            if ch == open || (ch == '(' && open != '(') {
                depth += 1;
            } else if ch == close || (ch == ')' && close != ')') {
                depth -= 1;
                if depth == 0 {
                    let end = self.pos + i;
                    self.pos = end + 1;
                    return Ok((start, &self.s[start..end]));
                }
            }
        }
        Err(self.err(format!("unclosed `{open}`")))
    }

    fn rest(&mut self) -> (usize, &'a str) {
        self.ws();
        let r = (self.pos, &self.s[self.pos..]);
        self.pos = self.s.len();
        r
    }
}

fn tokenize(src: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let cs: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/()".contains(c) {
            out.push(c.to_string());
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(cs[st..i].iter().collect());
        } else {
            return Err(format!("unexpected character `{c}`"));
        }
    }
    Ok(out)
}

fn split_commas(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' | '[' => depth += 1,
            ')' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s.trim().is_empty() {
        out.push((start, &s[start..]));
    }
    out
}

#[derive(Default)]
struct Builder {
    name: String,
    params: BTreeMap<String, i64>,
    loops: Vec<LoopVar>,
    tensors: Vec<Tensor>,
    loads: Vec<Access>,
    stores: Vec<Access>,
    ops: Vec<Op>,
    /// Squeezed tile shape of every value (loads and ops).
    values: BTreeMap<String, Vec<u64>>,
}

fn squeeze(shape: &[u64]) -> Vec<u64> {
    let first = shape.iter().position(|&d| d != 1).unwrap_or(shape.len().saturating_sub(1));
    shape[first..].to_vec()
}

impl Builder {
    fn affine_err(&self, line: usize, col: usize, e: AffineError) -> KernelError {
        match e {
            AffineError::Syntax { col: c, msg } => KernelError::Syntax { line, col: col + c, msg },
            AffineError::NonAffine { col: c, msg } => KernelError::NonAffine { line, col: col + c, msg },
            AffineError::Unbound(v) => KernelError::Undeclared { line, what: format!("variable `{v}`") },
            AffineError::BadDivisor(d) => KernelError::NonAffine { line, col, msg: format!("divisor {d}") },
        }
    }

    /// A positive integer expression over params: integers, `+ - * /` (floor),
    /// parentheses.
    fn const_expr(&self, p: &P<'_>, off: usize, src: &str) -> Result<u64, KernelError> {
        let col = p.base + off + 1;
        let fail = |msg: String| KernelError::Syntax { line: p.line, col, msg };
        let toks = tokenize(src).map_err(fail)?;
        let mut i = 0;
        let v = self.sum(&toks, &mut i).map_err(fail)?;
        if i != toks.len() {
            return Err(fail(format!("unexpected `{}`", toks[i])));
        }
        if v <= 0 {
            return Err(fail(format!("`{}` must be positive", src.trim())));
        }
        Ok(v as u64)
    }

    fn sum(&self, t: &[String], i: &mut usize) -> Result<i64, String> {
        let mut acc = self.product(t, i)?;
        while *i < t.len() && (t[*i] == "+" || t[*i] == "-") {
            let plus = t[*i] == "+";
            *i += 1;
            let r = self.product(t, i)?;
            acc = if plus { acc + r } else { acc - r };
        }
        Ok(acc)
    }

    fn product(&self, t: &[String], i: &mut usize) -> Result<i64, String> {
        let mut acc = self.atom(t, i)?;
        while *i < t.len() && (t[*i] == "*" || t[*i] == "/") {
            let mul = t[*i] == "*";
            *i += 1;
            let r = self.atom(t, i)?;
            acc = if mul {
                acc * r
            } else if r == 0 {
                return Err("division by zero".into());
            } else {
                acc.div_euclid(r)
            };
        }
        Ok(acc)
    }

    fn atom(&self, t: &[String], i: &mut usize) -> Result<i64, String> {
        let Some(tok) = t.get(*i) else { return Err("unexpected end of expression".into()) };
        *i += 1;
        match tok.as_str() {
            "(" => {
                let v = self.sum(t, i)?;
                if t.get(*i).map(String::as_str) != Some(")") {
                    return Err("expected `)`".into());
                }
                *i += 1;
                Ok(v)
            }
            "-" => Ok(-self.atom(t, i)?),
            s if s.as_bytes()[0].is_ascii_digit() => s.parse().map_err(|_| format!("bad integer `{s}`")),
            s => self.params.get(s).copied().ok_or_else(|| format!("unknown param `{s}`")),
        }
    }

    fn const_list(&self, p: &P<'_>, off: usize, src: &str) -> Result<Vec<u64>, KernelError> {
        split_commas(src).into_iter().map(|(o, s)| self.const_expr(p, off + o, s)).collect()
    }

    fn tensor(&self, p: &P<'_>, name: &str) -> Result<usize, KernelError> {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| KernelError::Undeclared { line: p.line, what: format!("tensor `{name}`") })
    }

    fn access(&self, p: &mut P<'_>, kind: AccessKind, id: String) -> Result<Access, KernelError> {
        let tname = p.ident()?;
        let tensor = self.tensor(p, &tname)?;
        let (ioff, inner) = p.group('[', ']')?;
        let loops: BTreeSet<&str> = self.loops.iter().map(|l| l.name.as_str()).collect();
        let is_var = |n: &str| loops.contains(n) || self.params.contains_key(n);
        let mut index = Vec::new();
        for (o, e) in split_commas(inner) {
            let a = parse_affine(e, &is_var).map_err(|err| self.affine_err(p.line, p.base + ioff + o, err))?;
            // params are folded into constants
            let a = a.vars().into_iter().filter(|v| self.params.contains_key(v)).fold(a, |acc, v| {
                acc.substitute(&v, &Affine::constant(self.params[&v]))
            });
            index.push(a);
        }
        p.eat("tile");
        let (toff, tinner) = p.group('(', ')')?;
        let tile = self.const_list(p, toff, tinner)?;
        let rank = self.tensors[tensor].shape.len();
        if index.len() != rank || tile.len() != rank {
            return Err(KernelError::Shape {
                line: p.line,
                msg: format!("`{tname}` has rank {rank}, got {} indices and {} tile dims", index.len(), tile.len()),
            });
        }
        Ok(Access { id, kind, tensor, index, tile, value: None })
    }

    fn stmt(&mut self, p: &mut P<'_>) -> Result<(), KernelError> {
        let kw = p.ident()?;
        let line = p.line;
        let dup = |what: String| KernelError::Duplicate { line, what };
        match kw.as_str() {
            "param" => {
                let name = p.ident()?;
                p.expect("=")?;
                let (off, src) = p.rest();
                let v = src
                    .trim()
                    .parse::<i64>()
                    .map_err(|_| KernelError::Syntax { line, col: p.base + off + 1, msg: "param must be an integer".into() })?;
                if self.params.insert(name.clone(), v).is_some() {
                    return Err(dup(format!("param `{name}`")));
                }
            }
            "grid" | "seq" => {
                let name = p.ident()?;
                p.expect("=")?;
                let (off, src) = p.rest();
                let extent = self.const_expr(p, off, src)?;
                if self.loops.iter().any(|l| l.name == name) || self.params.contains_key(&name) {
                    return Err(dup(format!("loop `{name}`")));
                }
                let kind = if kw == "grid" { LoopKind::Grid } else { LoopKind::Seq };
                if kind == LoopKind::Grid && self.loops.iter().any(|l| l.kind == LoopKind::Seq) {
                    return Err(KernelError::Syntax { line, col: 1, msg: "grid loops must precede seq loops".into() });
                }
                self.loops.push(LoopVar { name, extent, kind });
            }
            "tensor" => {
                let name = p.ident()?;
                let (off, inner) = p.group('[', ']')?;
                let shape = self.const_list(p, off, inner)?;
                p.expect("elem")?;
                p.expect("=")?;
                let (eoff, e) = p.rest();
                let elem_bytes = self.const_expr(p, eoff, e)?;
                if self.tensors.iter().any(|t| t.name == name) {
                    return Err(dup(format!("tensor `{name}`")));
                }
                self.tensors.push(Tensor { name, shape, elem_bytes });
            }
            "load" => {
                let id = p.ident()?;
                p.expect("=")?;
                let a = self.access(p, AccessKind::Load, id.clone())?;
                if self.values.contains_key(&id) {
                    return Err(dup(format!("value `{id}`")));
                }
                self.values.insert(id, squeeze(&a.tile));
                self.loads.push(a);
            }
            "op" => {
                let id = p.ident()?;
                p.expect("=")?;
                let kname = p.ident()?;
                let kind = match kname.as_str() {
                    "matmul" => OpKind::Matmul,
                    "vec" => OpKind::Vector,
                    "scalar" => OpKind::Scalar,
                    other => return Err(p.err(format!("unknown op kind `{other}`"))),
                };
                let (_, inner) = p.group('(', ')')?;
                let inputs: Vec<String> = split_commas(inner).iter().map(|(_, s)| s.trim().to_string()).collect();
                let mut shapes = Vec::new();
                for i in &inputs {
                    shapes.push(
                        self.values
                            .get(i)
                            .cloned()
                            .ok_or_else(|| KernelError::Undeclared { line, what: format!("value `{i}`") })?,
                    );
                }
                let (shape, reduce) = match kind {
                    OpKind::Matmul => {
                        let [a, b] = shapes.as_slice() else {
                            return Err(KernelError::Shape { line, msg: "matmul takes two operands".into() });
                        };
                        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                            return Err(KernelError::Shape { line, msg: format!("cannot multiply {a:?} by {b:?}") });
                        }
                        (vec![a[0], b[1]], a[1])
                    }
                    _ => {
                        let Some(first) = shapes.first() else {
                            return Err(KernelError::Shape { line, msg: format!("`{kname}` needs an operand") });
                        };
                        (first.clone(), 1)
                    }
                };
                if self.values.contains_key(&id) {
                    return Err(dup(format!("value `{id}`")));
                }
                self.values.insert(id.clone(), shape.clone());
                self.ops.push(Op { id, kind, inputs, shape, reduce });
            }
            "store" => {
                let save = p.pos;
                let tname = p.ident()?;
                p.pos = save;
                let mut a = self.access(p, AccessKind::Store, format!("store_{tname}"))?;
                p.expect("=")?;
                let v = p.ident()?;
                let shape = self
                    .values
                    .get(&v)
                    .ok_or_else(|| KernelError::Undeclared { line, what: format!("value `{v}`") })?;
                if shape.iter().product::<u64>() != a.tile.iter().product::<u64>() {
                    return Err(KernelError::Shape { line, msg: format!("storing {shape:?} into tile {:?}", a.tile) });
                }
                if self.stores.iter().any(|s| s.id == a.id) {
                    return Err(dup(format!("store to `{tname}`")));
                }
                a.value = Some(v);
                self.stores.push(a);
            }
            other => return Err(KernelError::Syntax { line, col: p.base + 1, msg: format!("unknown statement `{other}`") }),
        }
        if !p.done() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(())
    }
}

pub fn parse_kernel(text: &str) -> Result<Kernel, KernelError> {
    let mut b = Builder::default();
    let mut state = 0; // 0: before header, 1: in body, 2: closed
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut off = 0;
        for piece in content.split(';') {
            let lead = piece.len() - piece.trim_start().len();
            let mut p = P { line, base: off + lead, s: piece.trim(), pos: 0 };
            off += piece.len() + 1;
            if p.s.is_empty() {
                continue;
            }
            match state {
                0 => {
                    p.expect("kernel")?;
                    b.name = p.ident()?;
                    p.expect("{")?;
                    state = 1;
                    if !p.done() {
                        return Err(p.err("statements start on the next line"));
                    }
                }
                1 if p.s == "}" => state = 2,
                1 => b.stmt(&mut p)?,
                _ => return Err(p.err("content after closing `}`")),
            }
        }
    }
    match state {
        0 => return Err(KernelError::Invalid("no kernel declared".into())),
        1 => return Err(KernelError::Invalid("missing closing `}`".into())),
        _ => {}
    }
    let mut accesses = b.loads;
    accesses.extend(b.stores);
    let k = Kernel { name: b.name, params: b.params, loops: b.loops, tensors: b.tensors, accesses, ops: b.ops };
    k.validate()?;
    Ok(k)
}
