//! Line-oriented parser for `.hw` hardware descriptions.

use std::collections::HashMap;

use num_rational::Ratio;

use super::{
    ComputeUnit, CoreGrid, HardwareModel, HwError, IndexPat, Interconnect, Link, MemoryArray, Mux, NetDecl,
    SpatialDim, UnitKind,
};
use crate::affine::{parse_affine, Affine, AffineError};
use crate::Rate;

/// A statement with the 1-based line and column where it starts.
struct Stmt {
    line: usize,
    text: String,
}

fn split_statements(src: &str) -> Result<Vec<Stmt>, HwError> {
    let mut out = Vec::new();
    let mut pending: Option<Stmt> = None;
    let mut depth = 0i32;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        for c in line.chars() {
            match c {
                '{' => depth += 1,
                '}' => depth -= 1,
                _ => {}
            }
        }
        if depth < 0 {
            return Err(HwError::syntax(i + 1, 1, "unbalanced `}`"));
        }
        match pending.as_mut() {
            Some(p) => {
                p.text.push(' ');
                p.text.push_str(line.trim());
            }
            None if line.trim().is_empty() => continue,
            None => pending = Some(Stmt { line: i + 1, text: line.trim().to_string() }),
        }
        if depth == 0 {
            if let Some(p) = pending.take() {
                out.push(p);
            }
        }
    }
    if let Some(p) = pending {
        return Err(HwError::syntax(p.line, 1, "unterminated `{` block"));
    }
    Ok(out)
}

/// Cursor over one statement's text.
struct Cur<'a> {
    s: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cur<'a> {
    fn err(&self, msg: impl Into<String>) -> HwError {
        HwError::syntax(self.line, self.pos + 1, msg)
    }

    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s.as_bytes()[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eof(&mut self) -> bool {
        self.ws();
        self.pos >= self.s.len()
    }

    fn ident(&mut self) -> Result<String, HwError> {
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

    fn keyword(&mut self, kw: &str) -> Result<(), HwError> {
        let save = self.pos;
        match self.ident() {
            Ok(id) if id == kw => Ok(()),
            _ => {
                self.pos = save;
                self.ws();
                Err(self.err(format!("expected `{kw}`")))
            }
        }
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

    fn expect(&mut self, tok: &str) -> Result<(), HwError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{tok}`")))
        }
    }

    /// Raw token up to whitespace or one of the stop characters.
    fn word(&mut self, stops: &str) -> Result<(usize, &'a str), HwError> {
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() {
            let c = self.s[self.pos..].chars().next().unwrap();
            if c.is_whitespace() || stops.contains(c) {
                break;
            }
            self.pos += c.len_utf8();
        }
        if start == self.pos {
            return Err(self.err("expected value"));
        }
        Ok((start, &self.s[start..self.pos]))
    }

    fn int(&mut self) -> Result<u64, HwError> {
        let (start, w) = self.word(",;){}=")?;
        w.parse().map_err(|_| HwError::syntax(self.line, start + 1, format!("expected integer, got `{w}`")))
    }

    /// Contents between balanced parentheses, cursor after `)`.
    fn paren_group(&mut self) -> Result<(usize, &'a str), HwError> {
        self.expect("(")?;
        let start = self.pos;
        let mut depth = 1;
        while self.pos < self.s.len() {
            match self.s.as_bytes()[self.pos] {
                b'(' => depth += 1,
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        let inner = &self.s[start..self.pos];
                        self.pos += 1;
                        return Ok((start, inner));
                    }
                }
                _ => {}
            }
            self.pos += 1;
        }
        Err(self.err("unbalanced `(`"))
    }

    /// `key=value` attribute; returns the raw value text.
    fn attr(&mut self, key: &str) -> Result<(usize, &'a str), HwError> {
        self.keyword(key)?;
        self.expect("=")?;
        self.ws();
        if self.s[self.pos..].starts_with('(') {
            let (start, inner) = self.paren_group()?;
            return Ok((start - 1, &self.s[start - 1..start + inner.len() + 1]));
        }
        self.word(",;{}")
    }
}

/// Splits on top-level commas.
fn split_commas(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push((start, &s[start..i]));
                start = i + 1;
            }
            _ => {}
        }
    }
    if !s[start..].trim().is_empty() || !out.is_empty() {
        out.push((start, &s[start..]));
    }
    out
}

pub(crate) fn parse_rate(s: &str) -> Option<Rate> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().ok()?;
        let d: u64 = d.trim().parse().ok()?;
        return (d != 0).then(|| Ratio::new(n, d));
    }
    parse_decimal(s)
}

fn parse_decimal(s: &str) -> Option<Ratio<u64>> {
    match s.split_once('.') {
        None => s.parse().ok().map(Ratio::from_integer),
        Some((whole, frac)) => {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 12 {
                return None;
            }
            let w: u64 = if whole.is_empty() { 0 } else { whole.parse().ok()? };
            let den = 10u64.pow(frac.len() as u32);
            let f: u64 = frac.parse().ok()?;
            Some(Ratio::new(w * den + f, den))
        }
    }
}

pub(crate) fn parse_size(s: &str) -> Option<u64> {
    let s = s.trim();
    let split = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let mult: u64 = match unit {
        "" | "B" => 1,
        "KiB" => 1 << 10,
        "MiB" => 1 << 20,
        "GiB" => 1 << 30,
        "KB" => 1_000,
        "MB" => 1_000_000,
        "GB" => 1_000_000_000,
        _ => return None,
    };
    let v = parse_decimal(num)? * Ratio::from_integer(mult);
    v.is_integer().then(|| v.to_integer())
}

fn affine_err(line: usize, col: usize, e: AffineError) -> HwError {
    match e {
        AffineError::Unbound(v) => HwError::Undeclared { line, what: format!("index variable `{v}`") },
        AffineError::NonAffine { col: c, msg } => HwError::NonAffine { line, col: col + c, msg },
        AffineError::Syntax { col: c, msg } => HwError::syntax(line, col + c, msg),
        AffineError::BadDivisor(d) => HwError::NonAffine { line, col, msg: format!("bad divisor {d}") },
    }
}

struct Builder {
    hw: HardwareModel,
    dim_index: HashMap<String, usize>,
}

impl Builder {
    fn dims_list(&self, line: usize, start: usize, inner: &str) -> Result<Vec<usize>, HwError> {
        let mut out = Vec::new();
        for (off, name) in split_commas(inner) {
            let name = name.trim();
            let idx = *self
                .dim_index
                .get(name)
                .ok_or_else(|| HwError::Undeclared { line, what: format!("dim `{name}`") })?;
            if out.contains(&idx) {
                return Err(HwError::syntax(line, start + off + 1, format!("dim `{name}` repeated")));
            }
            out.push(idx);
        }
        Ok(out)
    }

    fn component_dims(&self, line: usize, name: &str) -> Result<Vec<usize>, HwError> {
        if let Some(c) = self.hw.cores.as_ref().filter(|c| c.name == name) {
            return Ok(c.dims.clone());
        }
        self.hw
            .memories
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.dims.clone())
            .ok_or_else(|| HwError::Undeclared { line, what: format!("component `{name}`") })
    }

    fn stmt(&mut self, st: &Stmt) -> Result<(), HwError> {
        let mut c = Cur { s: &st.text, pos: 0, line: st.line };
        let kw = c.ident()?;
        match kw.as_str() {
            "dim" => {
                let name = c.ident()?;
                c.expect("=")?;
                let size = c.int()?;
                if self.dim_index.contains_key(&name) {
                    return Err(HwError::Duplicate { line: st.line, what: format!("dim `{name}`") });
                }
                if size == 0 || size > u32::MAX as u64 {
                    return Err(HwError::syntax(st.line, c.pos, "dim size must be a positive integer"));
                }
                self.dim_index.insert(name.clone(), self.hw.dims.len());
                self.hw.dims.push(SpatialDim { name, size: size as u32 });
            }
            "clock" => {
                let (start, w) = c.word("")?;
                let ghz = parse_rate(w)
                    .filter(|r| *r.numer() > 0)
                    .ok_or_else(|| HwError::syntax(st.line, start + 1, "clock must be a positive number"))?;
                c.keyword("GHz")?;
                self.hw.clock_ghz = ghz;
            }
            "cores" => {
                if self.hw.cores.is_some() {
                    return Err(HwError::Duplicate { line: st.line, what: "core grid".into() });
                }
                let name = c.ident()?;
                let (start, inner) = c.paren_group()?;
                let dims = self.dims_list(st.line, start, inner)?;
                if dims.is_empty() {
                    return Err(HwError::syntax(st.line, start + 1, "core grid needs at least one dim"));
                }
                let mut units = Vec::new();
                if c.eat("{") {
                    loop {
                        if c.eat("}") {
                            break;
                        }
                        if c.eat(";") {
                            continue;
                        }
                        units.push(self.unit(&mut c)?);
                    }
                }
                self.hw.cores = Some(CoreGrid { name, dims, units });
            }
            "mem" => {
                let name = c.ident()?;
                let (start, inner) = c.paren_group()?;
                let dims = self.dims_list(st.line, start, inner)?;
                let (sz_at, sz) = c.attr("size")?;
                let capacity =
                    parse_size(sz).ok_or_else(|| HwError::syntax(st.line, sz_at + 1, format!("bad size `{sz}`")))?;
                let (bw_at, bw) = c.attr("bw")?;
                let port_bandwidth = parse_rate(bw)
                    .ok_or_else(|| HwError::syntax(st.line, bw_at + 1, format!("bad bandwidth `{bw}`")))?;
                if self.hw.memories.iter().any(|m| m.name == name) {
                    return Err(HwError::Duplicate { line: st.line, what: format!("memory `{name}`") });
                }
                self.hw.memories.push(MemoryArray { name, dims, capacity, port_bandwidth });
            }
            "mux" => {
                let dst = c.ident()?;
                let dst_dims = self.component_dims(st.line, &dst)?;
                let (vs, vinner) = c.paren_group()?;
                let mut vars = Vec::new();
                for (off, v) in split_commas(vinner) {
                    let v = v.trim();
                    if v.is_empty() || !v.chars().all(|ch| ch.is_alphanumeric() || ch == '_') {
                        return Err(HwError::syntax(st.line, vs + off + 1, "mux destination index must be a variable"));
                    }
                    vars.push(v.to_string());
                }
                if vars.len() != dst_dims.len() {
                    return Err(HwError::syntax(st.line, vs + 1, format!("`{dst}` has {} dims", dst_dims.len())));
                }
                c.expect("->")?;
                let src = c.ident()?;
                let src_dims = self.component_dims(st.line, &src)?;
                let map = self.exprs(&mut c, st.line, &vars, src_dims.len(), &src)?;
                let (bw_at, bw) = c.attr("bw")?;
                let bandwidth = parse_rate(bw)
                    .ok_or_else(|| HwError::syntax(st.line, bw_at + 1, format!("bad bandwidth `{bw}`")))?;
                self.hw.muxes.push(Mux { dst, dst_vars: vars, src, map, bandwidth });
            }
            "net" => {
                let name = c.ident()?;
                c.keyword("links")?;
                let mem = c.ident()?;
                let mem_dims = self.component_dims(st.line, &mem)?;
                if !self.hw.memories.iter().any(|m| m.name == mem) {
                    return Err(HwError::Undeclared { line: st.line, what: format!("memory `{mem}`") });
                }
                let (ps, pinner) = c.paren_group()?;
                let mut pattern = Vec::new();
                for (off, item) in split_commas(pinner) {
                    let item = item.trim();
                    if let Ok(v) = item.parse::<i64>() {
                        pattern.push(IndexPat::Fixed(v));
                    } else if !item.is_empty() && item.chars().all(|ch| ch.is_alphanumeric() || ch == '_') {
                        pattern.push(IndexPat::Var(item.to_string()));
                    } else {
                        return Err(HwError::syntax(st.line, ps + off + 1, "link source index must be a variable or integer"));
                    }
                }
                if pattern.len() != mem_dims.len() {
                    return Err(HwError::syntax(st.line, ps + 1, format!("`{mem}` has {} dims", mem_dims.len())));
                }
                c.expect("->")?;
                let (dst_at, dst_mem) = (c.pos, c.ident()?);
                if dst_mem != mem {
                    return Err(HwError::syntax(st.line, dst_at + 1, "links must connect instances of one memory array"));
                }
                let vars: Vec<String> = pattern
                    .iter()
                    .filter_map(|p| match p {
                        IndexPat::Var(v) => Some(v.clone()),
                        IndexPat::Fixed(_) => None,
                    })
                    .collect();
                let map = self.exprs(&mut c, st.line, &vars, mem_dims.len(), &mem)?;
                let (bw_at, bw) = c.attr("bw")?;
                let link_bandwidth = parse_rate(bw)
                    .ok_or_else(|| HwError::syntax(st.line, bw_at + 1, format!("bad bandwidth `{bw}`")))?;
                let decl = NetDecl { pattern, map };
                let links = expand_links(&self.hw, st.line, &mem_dims, &decl)?;
                match self.hw.interconnects.iter_mut().find(|n| n.name == name) {
                    Some(net) => {
                        if net.endpoint != mem || net.link_bandwidth != link_bandwidth {
                            return Err(HwError::syntax(
                                st.line,
                                1,
                                format!("net `{name}` redeclared with a different endpoint or bandwidth"),
                            ));
                        }
                        net.decls.push(decl);
                        net.links.extend(links);
                    }
                    None => self.hw.interconnects.push(Interconnect {
                        name,
                        endpoint: mem,
                        decls: vec![decl],
                        link_bandwidth,
                        links,
                    }),
                }
            }
            other => return Err(HwError::syntax(st.line, 1, format!("unknown declaration `{other}`"))),
        }
        if !c.eof() {
            return Err(c.err("unexpected trailing input"));
        }
        Ok(())
    }

    fn exprs(
        &self,
        c: &mut Cur<'_>,
        line: usize,
        vars: &[String],
        arity: usize,
        target: &str,
    ) -> Result<Vec<Affine>, HwError> {
        let (start, inner) = c.paren_group()?;
        let is_var = |n: &str| vars.iter().any(|v| v == n);
        let mut out = Vec::new();
        for (off, e) in split_commas(inner) {
            out.push(parse_affine(e, &is_var).map_err(|err| affine_err(line, start + off, err))?);
        }
        if out.len() != arity {
            return Err(HwError::syntax(line, start + 1, format!("`{target}` takes {arity} indices, got {}", out.len())));
        }
        Ok(out)
    }

    fn unit(&self, c: &mut Cur<'_>) -> Result<ComputeUnit, HwError> {
        let at = c.pos;
        let kind = c.ident()?;
        let mut unit = ComputeUnit { kind: UnitKind::Scalar, shape: vec![], throughput: None, latency: None, count: 1 };
        unit.kind = match kind.as_str() {
            "mat" => UnitKind::Matrix,
            "vec" => UnitKind::Vector,
            "scalar" => UnitKind::Scalar,
            _ => return Err(HwError::syntax(c.line, at + 1, format!("unknown compute unit `{kind}`"))),
        };
        loop {
            c.ws();
            if c.eof() || c.s[c.pos..].starts_with(';') || c.s[c.pos..].starts_with('}') {
                break;
            }
            let save = c.pos;
            let key = c.ident()?;
            c.pos = save;
            let (vat, v) = c.attr(&key)?;
            let bad = || HwError::syntax(c.line, vat + 1, format!("bad value `{v}` for `{key}`"));
            match key.as_str() {
                "shape" => {
                    let inner = v.trim().strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(bad)?;
                    unit.shape = inner
                        .split(',')
                        .map(|x| x.trim().parse::<u64>().map_err(|_| bad()))
                        .collect::<Result<_, _>>()?;
                }
                "width" => unit.shape = vec![v.parse().map_err(|_| bad())?],
                "tput" => unit.throughput = Some(parse_rate(v).ok_or_else(bad)?),
                "latency" => unit.latency = Some(v.parse().map_err(|_| bad())?),
                "count" => unit.count = v.parse().map_err(|_| bad())?,
                _ => return Err(HwError::syntax(c.line, save + 1, format!("unknown attribute `{key}`"))),
            }
        }
        let shape_ok = match unit.kind {
            UnitKind::Matrix => unit.shape.len() == 3 && unit.shape.iter().all(|&s| s > 0),
            UnitKind::Vector => unit.shape.len() == 1 && unit.shape[0] > 0,
            UnitKind::Scalar => unit.shape.is_empty(),
        };
        let rate_ok = match unit.kind {
            UnitKind::Scalar => unit.throughput.is_none() && unit.latency.is_some_and(|l| l >= 1),
            _ => unit.throughput.is_some_and(|t| *t.numer() > 0),
        };
        if !shape_ok || !rate_ok || unit.count == 0 {
            return Err(HwError::syntax(c.line, at + 1, format!("malformed `{kind}` unit")));
        }
        Ok(unit)
    }
}

/// Enumerates concrete links for one net declaration over the memory domain.
pub(crate) fn expand_links(
    hw: &HardwareModel,
    line: usize,
    mem_dims: &[usize],
    decl: &NetDecl,
) -> Result<Vec<Link>, HwError> {
    let sizes: Vec<i64> = mem_dims.iter().map(|&d| hw.dims[d].size as i64).collect();
    let mut ranges: Vec<Vec<i64>> = Vec::new();
    for (i, p) in decl.pattern.iter().enumerate() {
        match p {
            IndexPat::Var(_) => ranges.push((0..sizes[i]).collect()),
            IndexPat::Fixed(v) => {
                if *v < 0 || *v >= sizes[i] {
                    return Err(HwError::OutOfRange {
                        line,
                        msg: format!("link source index {v} outside dim of size {}", sizes[i]),
                    });
                }
                ranges.push(vec![*v]);
            }
        }
    }
    let mut out = Vec::new();
    for src in cartesian(&ranges) {
        let env: Vec<(&str, i64)> = decl
            .pattern
            .iter()
            .zip(&src)
            .filter_map(|(p, v)| match p {
                IndexPat::Var(n) => Some((n.as_str(), *v)),
                IndexPat::Fixed(_) => None,
            })
            .collect();
        let mut dst = Vec::with_capacity(sizes.len());
        for (i, e) in decl.map.iter().enumerate() {
            let v = e.eval_with(&env).map_err(|err| HwError::OutOfRange { line, msg: err.to_string() })?;
            if v < 0 || v >= sizes[i] {
                return Err(HwError::OutOfRange {
                    line,
                    msg: format!("link {src:?} maps to index {v} outside dim of size {}", sizes[i]),
                });
            }
            dst.push(v as u32);
        }
        out.push(Link { src: src.iter().map(|&v| v as u32).collect(), dst });
    }
    Ok(out)
}

pub(crate) fn cartesian(ranges: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for r in ranges {
        let mut next = Vec::with_capacity(out.len() * r.len());
        for prefix in &out {
            for v in r {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

pub fn parse_hardware(text: &str) -> Result<HardwareModel, HwError> {
    let mut b = Builder { hw: HardwareModel::default(), dim_index: HashMap::new() };
    for st in split_statements(text)? {
        b.stmt(&st)?;
    }
    if b.hw.cores.is_none() {
        return Err(HwError::NoCores);
    }
    Ok(b.hw)
}
