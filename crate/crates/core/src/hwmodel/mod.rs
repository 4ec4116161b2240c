//! Layered hardware description: spatial dims, a core grid with compute
//! units, memory arrays, muxes and interconnects with affine link maps.
//!
//! The model is immutable once parsed. Downstream passes query it for the
//! local scratchpad, DRAM channel assignment, broadcast-capable
//! dimensions and multicast routes.

mod parse;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_rational::Ratio;
use thiserror::Error;

use crate::affine::Affine;
use crate::Rate;

pub use parse::parse_hardware;
pub(crate) use parse::cartesian;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HwError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: undeclared {what}")]
    Undeclared { line: usize, what: String },
    #[error("line {line}, column {col}: non-affine map: {msg}")]
    NonAffine { line: usize, col: usize, msg: String },
    #[error("line {line}: index out of range: {msg}")]
    OutOfRange { line: usize, msg: String },
    #[error("line {line}: duplicate {what}")]
    Duplicate { line: usize, what: String },
    #[error("no core grid declared")]
    NoCores,
    #[error("core index {0:?} outside the core grid")]
    IndexOutOfDomain(Vec<u32>),
    #[error("no DRAM mux declared")]
    NoDram,
}

impl HwError {
    fn syntax(line: usize, col: usize, msg: impl Into<String>) -> Self {
        HwError::Syntax { line, col, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialDim {
    pub name: String,
    pub size: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Matrix,
    Vector,
    Scalar,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Matrix => "matrix",
            UnitKind::Vector => "vector",
            UnitKind::Scalar => "scalar",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputeUnit {
    pub kind: UnitKind,
    /// Matrix: `[m, k, n]` intrinsic shape; vector: `[width]`; scalar: empty.
    pub shape: Vec<u64>,
    /// Intrinsics issued per cycle per unit (matrix/vector only).
    pub throughput: Option<Rate>,
    /// Cycles per scalar op.
    pub latency: Option<u64>,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoreGrid {
    pub name: String,
    /// Indices into [`HardwareModel::dims`].
    pub dims: Vec<usize>,
    pub units: Vec<ComputeUnit>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub capacity: u64,
    /// Bytes per cycle per instance.
    pub port_bandwidth: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mux {
    pub dst: String,
    pub dst_vars: Vec<String>,
    pub src: String,
    pub map: Vec<Affine>,
    pub bandwidth: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexPat {
    Var(String),
    Fixed(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetDecl {
    pub pattern: Vec<IndexPat>,
    pub map: Vec<Affine>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Link {
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interconnect {
    pub name: String,
    pub endpoint: String,
    pub decls: Vec<NetDecl>,
    pub link_bandwidth: Rate,
    pub links: Vec<Link>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AbstractionLevel {
    ScaleOut,
    Memory,
    IntraCore,
}

impl fmt::Display for AbstractionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbstractionLevel::ScaleOut => "scaleout",
            AbstractionLevel::Memory => "+memory",
            AbstractionLevel::IntraCore => "+intracore",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardwareModel {
    pub clock_ghz: Rate,
    pub dims: Vec<SpatialDim>,
    pub cores: Option<CoreGrid>,
    pub memories: Vec<MemoryArray>,
    pub muxes: Vec<Mux>,
    pub interconnects: Vec<Interconnect>,
    /// Memoized topology queries; filled on first use, so edit the public
    /// fields before querying.
    cache: TopologyCache,
}

type RouteKey = (usize, usize, Vec<u32>);

#[derive(Default)]
struct TopologyCache {
    eligible: OnceLock<Vec<(usize, usize)>>,
    routes: Mutex<HashMap<RouteKey, Option<Vec<usize>>>>,
}

impl Clone for TopologyCache {
    fn clone(&self) -> Self {
        TopologyCache::default()
    }
}

impl PartialEq for TopologyCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for TopologyCache {}

impl fmt::Debug for TopologyCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TopologyCache")
    }
}

impl Default for HardwareModel {
    fn default() -> Self {
        HardwareModel {
            clock_ghz: Ratio::from_integer(1),
            dims: Vec::new(),
            cores: None,
            memories: Vec::new(),
            muxes: Vec::new(),
            interconnects: Vec::new(),
            cache: TopologyCache::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub decl: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.decl, self.message)
    }
}

/// Concrete resource a transfer occupies.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkSet {
    Links { net: String, links: Vec<usize> },
    DramChannel { channel: u32 },
    LocalPort { memory: String },
}

impl fmt::Display for LinkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkSet::Links { net, links } => write!(f, "{net}[{} links]", links.len()),
            LinkSet::DramChannel { channel } => write!(f, "dram_ch{channel}"),
            LinkSet::LocalPort { memory } => write!(f, "{memory}.port"),
        }
    }
}

impl HardwareModel {
    pub fn core_grid(&self) -> &CoreGrid {
        self.cores.as_ref().expect("parsed models always have a core grid")
    }

    pub fn core_dims(&self) -> &[usize] {
        &self.core_grid().dims
    }

    pub fn core_shape(&self) -> Vec<u32> {
        self.core_dims().iter().map(|&d| self.dims[d].size).collect()
    }

    pub fn num_cores(&self) -> usize {
        self.core_shape().iter().map(|&s| s as usize).product()
    }

    pub fn dim_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    /// Row-major linear id of a core index tuple.
    pub fn core_id(&self, idx: &[u32]) -> usize {
        let shape = self.core_shape();
        idx.iter().zip(&shape).fold(0usize, |acc, (&i, &s)| acc * s as usize + i as usize)
    }

    pub fn core_index(&self, mut id: usize) -> Vec<u32> {
        let shape = self.core_shape();
        let mut out = vec![0u32; shape.len()];
        for (slot, &s) in out.iter_mut().zip(&shape).rev() {
            *slot = (id % s as usize) as u32;
            id /= s as usize;
        }
        out
    }

    pub fn abstraction_level(&self) -> AbstractionLevel {
        if self.memories.is_empty() {
            AbstractionLevel::ScaleOut
        } else if self.cores.as_ref().is_none_or(|c| c.units.is_empty()) {
            AbstractionLevel::Memory
        } else {
            AbstractionLevel::IntraCore
        }
    }

    pub fn unit(&self, kind: UnitKind) -> Option<&ComputeUnit> {
        self.cores.as_ref()?.units.iter().find(|u| u.kind == kind)
    }

    fn mux_from_cores(&self) -> impl Iterator<Item = &Mux> {
        let core = self.cores.as_ref().map(|c| c.name.clone()).unwrap_or_default();
        self.muxes.iter().filter(move |m| m.dst == core)
    }

    /// Per-core scratchpad: the memory indexed by exactly the core dims and
    /// reached from the cores through a mux.
    pub fn local_memory(&self) -> Option<&MemoryArray> {
        let dims = self.core_dims();
        self.mux_from_cores()
            .filter_map(|m| self.memories.iter().find(|mem| mem.name == m.src))
            .find(|mem| mem.dims == dims)
    }

    pub fn dram_mux(&self) -> Option<&Mux> {
        let local = self.local_memory().map(|m| m.name.clone());
        self.mux_from_cores().find(|m| Some(&m.src) != local.as_ref() && self.memories.iter().any(|mem| mem.name == m.src))
    }

    pub fn dram(&self) -> Option<&MemoryArray> {
        let mux = self.dram_mux()?;
        self.memories.iter().find(|m| m.name == mux.src)
    }

    pub fn num_dram_channels(&self) -> usize {
        self.dram().map(|m| m.dims.iter().map(|&d| self.dims[d].size as usize).product()).unwrap_or(0)
    }

    /// Evaluates the DRAM mux map at a core index; multi-dim DRAM arrays are
    /// flattened row-major.
    pub fn dram_channel_of(&self, core: &[u32]) -> Result<u32, HwError> {
        let mux = self.dram_mux().ok_or(HwError::NoDram)?;
        let shape = self.core_shape();
        if core.len() != shape.len() || core.iter().zip(&shape).any(|(i, s)| i >= s) {
            return Err(HwError::IndexOutOfDomain(core.to_vec()));
        }
        let env: Vec<(&str, i64)> = mux.dst_vars.iter().map(String::as_str).zip(core.iter().map(|&v| v as i64)).collect();
        let dram = self.dram().ok_or(HwError::NoDram)?;
        let mut ch: u64 = 0;
        for (e, &d) in mux.map.iter().zip(&dram.dims) {
            let v = e.eval_with(&env).map_err(|_| HwError::IndexOutOfDomain(core.to_vec()))?;
            let size = self.dims[d].size as i64;
            if v < 0 || v >= size {
                return Err(HwError::IndexOutOfDomain(core.to_vec()));
            }
            ch = ch * size as u64 + v as u64;
        }
        Ok(ch as u32)
    }

    pub fn dram_bandwidth_total(&self) -> Rate {
        match self.dram() {
            Some(m) => m.port_bandwidth * Ratio::from_integer(self.num_dram_channels() as u64),
            None => Ratio::from_integer(0),
        }
    }

    /// Links of `net` whose endpoints differ exactly in core-dim position `pos`.
    fn single_dim_links(&self, net: &Interconnect, pos: usize) -> Vec<usize> {
        net.links
            .iter()
            .enumerate()
            .filter(|(_, l)| {
                l.src.iter().zip(&l.dst).enumerate().all(|(i, (a, b))| (i == pos) == (a != b))
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Multicast tree from index 0 along core-dim position `pos` within the
    /// line through `base` (other coordinates fixed). Returns the link ids
    /// of a BFS tree, or `None` when some index of the dim is unreachable.
    pub fn broadcast_route(&self, net_idx: usize, pos: usize, base: &[u32]) -> Option<Vec<usize>> {
        let key = (net_idx, pos, base.to_vec());
        if let Some(r) = self.cache.routes.lock().unwrap().get(&key) {
            return r.clone();
        }
        let r = self.compute_route(net_idx, pos, base);
        self.cache.routes.lock().unwrap().insert(key, r.clone());
        r
    }

    fn compute_route(&self, net_idx: usize, pos: usize, base: &[u32]) -> Option<Vec<usize>> {
        let net = &self.interconnects[net_idx];
        let size = self.core_shape()[pos] as usize;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); size];
        for li in self.single_dim_links(net, pos) {
            let l = &net.links[li];
            let on_line = l.src.iter().enumerate().all(|(i, &v)| i == pos || v == base[i]);
            if on_line {
                adj[l.src[pos] as usize].push((l.dst[pos] as usize, li));
            }
        }
        let mut seen = vec![false; size];
        let mut tree = Vec::new();
        let mut q = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = q.pop_front() {
            for &(v, li) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    tree.push(li);
                    q.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s).then_some(tree)
    }

    /// `(core-dim position, interconnect index)` pairs over which a multicast
    /// from index 0 reaches every index of that dim, on every line.
    pub fn broadcast_eligible_dims(&self) -> Vec<(usize, usize)> {
        self.cache.eligible.get_or_init(|| self.compute_eligible()).clone()
    }

    fn compute_eligible(&self) -> Vec<(usize, usize)> {
        let Some(local) = self.local_memory() else { return Vec::new() };
        let shape = self.core_shape();
        let mut out = Vec::new();
        for pos in 0..shape.len() {
            for (ni, net) in self.interconnects.iter().enumerate() {
                if net.endpoint != local.name {
                    continue;
                }
                let ranges: Vec<Vec<i64>> = shape
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| if i == pos { vec![0] } else { (0..s as i64).collect() })
                    .collect();
                let ok = cartesian(&ranges).iter().all(|base| {
                    let base: Vec<u32> = base.iter().map(|&v| v as u32).collect();
                    self.broadcast_route(ni, pos, &base).is_some()
                });
                if ok {
                    out.push((pos, ni));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let err = |decl: String, message: String| Diagnostic { severity: Severity::Error, decl, message };
        let mut names = BTreeSet::new();
        for d in &self.dims {
            if !names.insert(&d.name) {
                out.push(err(format!("dim {}", d.name), "duplicate dim name".into()));
            }
            if d.size == 0 {
                out.push(err(format!("dim {}", d.name), "size must be >= 1".into()));
            }
        }
        let Some(cores) = &self.cores else {
            out.push(err("cores".into(), "no core grid declared".into()));
            return out;
        };
        if cores.dims.is_empty() {
            out.push(err(format!("cores {}", cores.name), "core grid needs at least one dim".into()));
        }
        for m in &self.memories {
            if m.capacity == 0 {
                out.push(err(format!("mem {}", m.name), "capacity must be > 0".into()));
            }
            if *m.port_bandwidth.numer() == 0 {
                out.push(err(format!("mem {}", m.name), "port bandwidth must be > 0".into()));
            }
        }
        let dims_of = |name: &str| -> Option<Vec<usize>> {
            if name == cores.name {
                return Some(cores.dims.clone());
            }
            self.memories.iter().find(|m| m.name == name).map(|m| m.dims.clone())
        };
        for mux in &self.muxes {
            let decl = format!("mux {} -> {}", mux.dst, mux.src);
            let (Some(dd), Some(sd)) = (dims_of(&mux.dst), dims_of(&mux.src)) else {
                out.push(err(decl, "references an undeclared component".into()));
                continue;
            };
            if *mux.bandwidth.numer() == 0 {
                out.push(err(decl.clone(), "bandwidth must be > 0".into()));
            }
            let ranges: Vec<Vec<i64>> = dd.iter().map(|&d| (0..self.dims[d].size as i64).collect()).collect();
            let mut bad = None;
            'outer: for idx in cartesian(&ranges) {
                let env: Vec<(&str, i64)> = mux.dst_vars.iter().map(String::as_str).zip(idx.iter().copied()).collect();
                for (e, &d) in mux.map.iter().zip(&sd) {
                    match e.eval_with(&env) {
                        Ok(v) if v >= 0 && v < self.dims[d].size as i64 => {}
                        Ok(v) => {
                            bad = Some(format!(
                                "index {idx:?} maps to {v}, outside dim `{}` of size {}",
                                self.dims[d].name, self.dims[d].size
                            ));
                            break 'outer;
                        }
                        Err(e) => {
                            bad = Some(e.to_string());
                            break 'outer;
                        }
                    }
                }
            }
            if let Some(msg) = bad {
                out.push(err(decl, msg));
            }
        }
        for net in &self.interconnects {
            if *net.link_bandwidth.numer() == 0 {
                out.push(err(format!("net {}", net.name), "link bandwidth must be > 0".into()));
            }
            let mut seen = BTreeSet::new();
            for l in &net.links {
                if !seen.insert((&l.src, &l.dst)) {
                    out.push(err(format!("net {}", net.name), format!("duplicate link {:?} -> {:?}", l.src, l.dst)));
                    break;
                }
            }
            let full_domain = net.decls.iter().all(|d| d.pattern.iter().all(|p| matches!(p, IndexPat::Var(_))));
            if full_domain {
                let dsts: BTreeSet<&Vec<u32>> = net.links.iter().map(|l| &l.dst).collect();
                if net.decls.len() == 1 && dsts.len() != net.links.len() {
                    out.push(err(format!("net {}", net.name), "link map is not a bijection on the endpoint domain".into()));
                }
            }
        }
        if self.abstraction_level() >= AbstractionLevel::Memory {
            let local: Vec<&Mux> = self
                .mux_from_cores()
                .filter(|m| self.memories.iter().any(|mem| mem.name == m.src && mem.dims == cores.dims))
                .collect();
            if local.len() != 1 {
                out.push(err(
                    format!("cores {}", cores.name),
                    format!("every core must reach exactly one local memory via a mux, found {}", local.len()),
                ));
            }
        }
        out
    }

    /// Rejects the model when a pass needs a lower layer than declared.
    pub fn require_level(&self, needed: AbstractionLevel) -> Result<(), Diagnostic> {
        let have = self.abstraction_level();
        if have >= needed {
            return Ok(());
        }
        let message = match needed {
            AbstractionLevel::Memory => "memory layer required".to_string(),
            AbstractionLevel::IntraCore => "intra-core compute layer required".to_string(),
            AbstractionLevel::ScaleOut => unreachable!(),
        };
        Err(Diagnostic { severity: Severity::Error, decl: format!("model ({have})"), message })
    }

    pub fn describe(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let cores = self.core_grid();
        let dims: Vec<String> = self.dims.iter().map(|d| format!("{}={}", d.name, d.size)).collect();
        let _ = writeln!(s, "dims: {}", dims.join(", "));
        let _ = writeln!(s, "level: {}", self.abstraction_level());
        let _ = writeln!(s, "cores: {} ({} cores)", cores.name, self.num_cores());
        for u in &cores.units {
            let _ = writeln!(s, "  unit: {}", fmt_unit(u));
        }
        for m in &self.memories {
            let dn: Vec<&str> = m.dims.iter().map(|&d| self.dims[d].name.as_str()).collect();
            let n: u64 = m.dims.iter().map(|&d| self.dims[d].size as u64).product();
            let _ = writeln!(s, "mem: {}({}) x{} size={}B bw={}B/cy", m.name, dn.join(","), n, m.capacity, m.port_bandwidth);
        }
        for n in &self.interconnects {
            let _ = writeln!(s, "net: {} {} links bw={}B/cy", n.name, n.links.len(), n.link_bandwidth);
        }
        let elig = self.broadcast_eligible_dims();
        let pairs: Vec<String> = elig
            .iter()
            .map(|&(p, n)| format!("({}, {})", self.dims[self.core_dims()[p]].name, self.interconnects[n].name))
            .collect();
        let _ = writeln!(s, "broadcast: {}", if pairs.is_empty() { "none".to_string() } else { pairs.join(", ") });
        let bdims: BTreeSet<usize> = elig.iter().map(|&(p, _)| p).collect();
        let _ = writeln!(
            s,
            "summary: {} cores, {} dim{}, {} net{}, {} broadcast dim{}",
            self.num_cores(),
            self.core_dims().len(),
            plural(self.core_dims().len()),
            self.interconnects.len(),
            plural(self.interconnects.len()),
            bdims.len(),
            plural(bdims.len())
        );
        s
    }
}

fn plural(n: usize) -> &'static str {
    if n == 1 {
        ""
    } else {
        "s"
    }
}

fn fmt_rate(r: &Rate) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn fmt_unit(u: &ComputeUnit) -> String {
    match u.kind {
        UnitKind::Matrix => format!(
            "mat shape=({},{},{}) tput={} count={}",
            u.shape[0],
            u.shape[1],
            u.shape[2],
            fmt_rate(u.throughput.as_ref().unwrap()),
            u.count
        ),
        UnitKind::Vector => {
            format!("vec width={} tput={} count={}", u.shape[0], fmt_rate(u.throughput.as_ref().unwrap()), u.count)
        }
        UnitKind::Scalar => format!("scalar latency={} count={}", u.latency.unwrap(), u.count),
    }
}

/// Pretty-prints in the `.hw` grammar; the output reparses to an equal model.
impl fmt::Display for HardwareModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dn = |ds: &[usize]| ds.iter().map(|&d| self.dims[d].name.clone()).collect::<Vec<_>>().join(", ");
        writeln!(f, "clock {} GHz", fmt_rate(&self.clock_ghz))?;
        for d in &self.dims {
            writeln!(f, "dim {} = {}", d.name, d.size)?;
        }
        if let Some(c) = &self.cores {
            write!(f, "cores {}({})", c.name, dn(&c.dims))?;
            if !c.units.is_empty() {
                let us: Vec<String> = c.units.iter().map(fmt_unit).collect();
                write!(f, " {{ {} }}", us.join("; "))?;
            }
            writeln!(f)?;
        }
        for m in &self.memories {
            writeln!(f, "mem {}({}) size={} bw={}", m.name, dn(&m.dims), m.capacity, fmt_rate(&m.port_bandwidth))?;
        }
        let exprs = |es: &[Affine]| es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
        for m in &self.muxes {
            writeln!(
                f,
                "mux {}({}) -> {}({}) bw={}",
                m.dst,
                m.dst_vars.join(", "),
                m.src,
                exprs(&m.map),
                fmt_rate(&m.bandwidth)
            )?;
        }
        for n in &self.interconnects {
            for d in &n.decls {
                let pat: Vec<String> = d
                    .pattern
                    .iter()
                    .map(|p| match p {
                        IndexPat::Var(v) => v.clone(),
                        IndexPat::Fixed(i) => i.to_string(),
                    })
                    .collect();
                writeln!(
                    f,
                    "net {} links {}({}) -> {}({}) bw={}",
                    n.name,
                    n.endpoint,
                    pat.join(", "),
                    n.endpoint,
                    exprs(&d.map),
                    fmt_rate(&n.link_bandwidth)
                )?;
            }
        }
        Ok(())
    }
}

/// Shipped sample descriptions.
pub mod samples {
    pub const WORMHOLE: &str = include_str!("../../data/hw/wormhole.hw");
    pub const MESH_4X8: &str = include_str!("../../data/hw/mesh4x8.hw");
    pub const RING_1X8: &str = include_str!("../../data/hw/ring1x8.hw");
    pub const TRIPLE_RING: &str = include_str!("../../data/hw/triple_ring.hw");
    pub const MESH_2X2: &str = include_str!("../../data/hw/mesh2x2.hw");
}
