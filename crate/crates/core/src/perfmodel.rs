//! Analytical cost model: per-level transfer times under bandwidth sharing,
//! per-iteration compute time from the core's units, and a closed-form
//! pipelined loop time composed over the loop nest.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::hwmodel::{AbstractionLevel, HardwareModel, UnitKind};
use crate::kernelir::{AccessKind, Kernel, OpKind};
use crate::mapper::Mapping;
use crate::reuse::{AccessPlan, Candidate, Realization};
use crate::Rate;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerfError {
    #[error("loop extent must be at least 1")]
    ZeroExtent,
    #[error("{0}")]
    Unsupported(String),
}

/// A shared bandwidth resource. Reads and writes are accounted separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Resource {
    Channel(u32),
    Port(usize),
    Link(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    /// Core whose tile coordinates determine the payload.
    pub src_core: usize,
    pub resources: Vec<Resource>,
}

/// Cores that share one copy of a transfer, and the stages that deliver it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub members: Vec<usize>,
    pub stages: Vec<Vec<FlowSpec>>,
}

pub fn bandwidth(hw: &HardwareModel, r: Resource) -> Rate {
    match r {
        Resource::Channel(_) => hw.dram().map(|m| m.port_bandwidth).unwrap_or_default(),
        Resource::Port(_) => hw.dram_mux().map(|m| m.bandwidth).unwrap_or_default(),
        Resource::Link(n, _) => hw.interconnects[n].link_bandwidth,
    }
}

fn dram_flow(hw: &HardwareModel, core: &[u32]) -> FlowSpec {
    let id = hw.core_id(core);
    let ch = hw.dram_channel_of(core).expect("running cores map to a channel");
    FlowSpec { src_core: id, resources: vec![Resource::Channel(ch), Resource::Port(id)] }
}

/// Delivery groups of one issue of `plan` across the running cores.
pub fn transfer_groups(hw: &HardwareModel, mapping: &Mapping, realization: &Realization) -> Vec<Group> {
    let running = mapping.active_cores();
    match realization {
        Realization::Global => running
            .iter()
            .map(|c| Group { members: vec![hw.core_id(c)], stages: vec![vec![dram_flow(hw, c)]] })
            .collect(),
        Realization::Broadcast(stages) => {
            let bdims: Vec<usize> = stages.iter().map(|&(p, _)| p).collect();
            let mut groups: BTreeMap<Vec<u32>, Vec<&Vec<u32>>> = BTreeMap::new();
            for c in &running {
                let mut key = c.clone();
                for &p in &bdims {
                    key[p] = 0;
                }
                groups.entry(key).or_default().push(c);
            }
            groups
                .into_iter()
                .map(|(producer, members)| {
                    let mut st = vec![vec![dram_flow(hw, &producer)]];
                    for (s, &(p, net)) in stages.iter().enumerate() {
                        // senders have already received: free in earlier stage dims
                        let senders = members.iter().filter(|c| stages[s..].iter().all(|&(q, _)| c[q] == 0));
                        let flows = senders
                            .map(|c| {
                                let route = hw.broadcast_route(net, p, c).expect("eligible dims have routes");
                                FlowSpec {
                                    src_core: hw.core_id(&producer),
                                    resources: route.into_iter().map(|l| Resource::Link(net, l)).collect(),
                                }
                            })
                            .collect();
                        st.push(flows);
                    }
                    Group { members: members.iter().map(|c| hw.core_id(c)).collect(), stages: st }
                })
                .collect()
        }
    }
}

pub fn ceil_div_rate(bytes: u64, rate: Rate) -> u64 {
    if bytes == 0 {
        return 0;
    }
    let t = Rate::from_integer(bytes) / rate;
    t.ceil().to_integer()
}

/// Closed-form time of `iters` software-pipelined iterations with load,
/// compute and store phases `l`, `c`, `s`.
pub fn loop_time(iters: u64, l: u64, c: u64, s: u64) -> Result<u64, PerfError> {
    Ok(match iters {
        0 => return Err(PerfError::ZeroExtent),
        1 => l + c + s,
        2 => l.max(c) + s.max(c) + l + s,
        i => (i - 2) * (l + s).max(c) + l.max(c) + s.max(c) + l + s,
    })
}

pub fn op_cycles(hw: &HardwareModel, kind: OpKind, shape: &[u64], reduce: u64) -> Result<u64, PerfError> {
    let missing = |k: UnitKind| PerfError::Unsupported(format!("core has no {k} unit"));
    let elems: u64 = shape.iter().product();
    Ok(match kind {
        OpKind::Matmul => {
            let u = hw.unit(UnitKind::Matrix).ok_or_else(|| missing(UnitKind::Matrix))?;
            let (m, n) = match shape {
                [n] => (1, *n),
                [m, n] => (*m, *n),
                _ => return Err(PerfError::Unsupported("matmul result must be rank 2".into())),
            };
            let intr = m.div_ceil(u.shape[0]) * reduce.div_ceil(u.shape[1]) * n.div_ceil(u.shape[2]);
            ceil_div_rate(intr, u.throughput.unwrap() * Rate::from_integer(u.count))
        }
        OpKind::Vector => {
            let u = hw.unit(UnitKind::Vector).ok_or_else(|| missing(UnitKind::Vector))?;
            ceil_div_rate(elems.div_ceil(u.shape[0]), u.throughput.unwrap() * Rate::from_integer(u.count))
        }
        OpKind::Scalar => {
            let u = hw.unit(UnitKind::Scalar).ok_or_else(|| missing(UnitKind::Scalar))?;
            (elems * u.latency.unwrap()).div_ceil(u.count)
        }
    })
}

/// Per-iteration body time: ops grouped by dependence depth; within a group
/// different unit kinds overlap, same-kind ops serialize.
pub fn body_cycles(hw: &HardwareModel, kernel: &Kernel) -> Result<u64, PerfError> {
    let levels = kernel.op_levels();
    let depth = levels.iter().copied().max().map_or(0, |d| d + 1);
    let mut total = 0;
    for d in 0..depth {
        let mut per_kind: BTreeMap<OpKind, u64> = BTreeMap::new();
        for (op, _) in kernel.ops.iter().zip(&levels).filter(|(_, &l)| l == d) {
            *per_kind.entry(op.kind).or_default() += op_cycles(hw, op.kind, &op.shape, op.reduce)?;
        }
        total += per_kind.values().copied().max().unwrap_or(0);
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LevelCost {
    pub level: usize,
    pub iterations: u64,
    pub load_cycles: u64,
    pub store_cycles: u64,
    pub compute_cycles: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Estimate {
    pub total_cycles: u64,
    pub body_cycles: u64,
    pub levels: Vec<LevelCost>,
    pub memory_bound: bool,
    pub dram_read_bytes: u64,
    pub dram_write_bytes: u64,
    pub noc_bytes: u64,
}

impl Estimate {
    pub fn dram_bytes(&self) -> u64 {
        self.dram_read_bytes + self.dram_write_bytes
    }
}

/// Max-over-accesses transfer time of the plans issued together at a level.
pub fn level_transfer_cycles(hw: &HardwareModel, mapping: &Mapping, plans: &[&AccessPlan]) -> u64 {
    let groups: Vec<(u64, Vec<Group>)> =
        plans.iter().map(|p| (p.footprint, transfer_groups(hw, mapping, &p.realization))).collect();
    let refs: Vec<(u64, &[Group])> = groups.iter().map(|(b, g)| (*b, g.as_slice())).collect();
    shared_transfer_cycles(hw, &refs)
}

/// Under equal time-sharing the last transfer through a resource finishes
/// once all bytes routed through it have drained, so each flow is charged
/// the drain time of its busiest resource.
fn shared_transfer_cycles(hw: &HardwareModel, groups: &[(u64, &[Group])]) -> u64 {
    let mut load: HashMap<Resource, u64> = HashMap::new();
    for (bytes, gs) in groups {
        for g in gs.iter() {
            for f in g.stages.iter().flatten() {
                for r in &f.resources {
                    *load.entry(*r).or_default() += bytes;
                }
            }
        }
    }
    let drain: HashMap<Resource, u64> = load.iter().map(|(r, &b)| (*r, ceil_div_rate(b, bandwidth(hw, *r)))).collect();
    let mut worst = 0;
    for (_, gs) in groups {
        let nstages = gs.iter().map(|g| g.stages.len()).max().unwrap_or(0);
        let mut t = 0;
        for s in 0..nstages {
            t += gs
                .iter()
                .filter_map(|g| g.stages.get(s))
                .flatten()
                .flat_map(|f| f.resources.iter().map(|r| drain[r]))
                .max()
                .unwrap_or(0);
        }
        worst = worst.max(t);
    }
    worst
}

fn issues(mapping: &Mapping, level: usize) -> u64 {
    mapping.nest[..level].iter().map(|l| l.extent).product()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub dram_read_bytes: u64,
    pub dram_write_bytes: u64,
    pub noc_bytes: u64,
}

/// Bytes moved by the whole kernel. Exact for masked or edge-clipped nests
/// by enumeration, closed form otherwise.
pub fn traffic(kernel: &Kernel, hw: &HardwareModel, cand: &Candidate) -> Traffic {
    let groups: Vec<Vec<Group>> =
        cand.plans.iter().map(|p| transfer_groups(hw, &cand.mapping, &p.realization)).collect();
    traffic_with(kernel, hw, cand, &groups).0
}

/// Whole-run traffic, plus the drain time of the busiest resource when every
/// byte routed through it over the run is counted.
fn traffic_with(kernel: &Kernel, hw: &HardwareModel, cand: &Candidate, groups: &[Vec<Group>]) -> (Traffic, u64) {
    let m = &*cand.mapping;
    let clipped = m.is_masked()
        || kernel.accesses.iter().any(|a| {
            let t = &kernel.tensors[a.tensor];
            t.shape.iter().zip(&a.tile).any(|(s, tl)| s % tl != 0)
        });
    let mut out = Traffic::default();
    let mut load: HashMap<(bool, Resource), u64> = HashMap::new();
    for (p, groups) in cand.plans.iter().zip(groups) {
        let per_copy: Vec<u64> = if clipped {
            // only the core coords the index reads matter
            let dims: Vec<usize> =
                (0..m.core_shape.len()).filter(|&d| m.access_depends_on_dim(p.access, d)).collect();
            let mut memo: HashMap<Vec<u32>, u64> = HashMap::new();
            groups
                .iter()
                .map(|g| {
                    let core = g.stages[0][0].src_core;
                    let idx = hw.core_index(core);
                    let key: Vec<u32> = dims.iter().map(|&d| idx[d]).collect();
                    *memo.entry(key).or_insert_with(|| enumerated_bytes(kernel, m, p, core, hw))
                })
                .collect()
        } else {
            vec![issues(m, p.level) * p.footprint; groups.len()]
        };
        let dram: u64 = per_copy.iter().sum();
        let noc: u64 = groups
            .iter()
            .zip(&per_copy)
            .map(|(g, b)| b * g.stages[1..].iter().flatten().map(|f| f.resources.len() as u64).sum::<u64>())
            .sum();
        let dir = kernel.accesses[p.access].kind == AccessKind::Load;
        for (g, b) in groups.iter().zip(&per_copy) {
            for r in g.stages.iter().flatten().flat_map(|f| &f.resources) {
                *load.entry((dir, *r)).or_default() += b;
            }
        }
        match kernel.accesses[p.access].kind {
            AccessKind::Load => out.dram_read_bytes += dram,
            AccessKind::Store => out.dram_write_bytes += dram,
        }
        out.noc_bytes += noc;
    }
    let drain = load.iter().map(|(&(_, r), &b)| ceil_div_rate(b, bandwidth(hw, r))).max().unwrap_or(0);
    (out, drain)
}

/// Clipped bytes one core moves for a plan over the whole run.
pub fn enumerated_bytes(kernel: &Kernel, m: &Mapping, p: &AccessPlan, core: usize, hw: &HardwareModel) -> u64 {
    let idx = hw.core_index(core);
    separable_bytes(kernel, m, p, &idx).unwrap_or_else(|| walk_bytes(kernel, m, p, &idx))
}

fn walk_bytes(kernel: &Kernel, m: &Mapping, p: &AccessPlan, idx: &[u32]) -> u64 {
    let mut total = 0;
    let mut prefix = vec![0u64; p.level];
    loop {
        total += issue_bytes(kernel, m, p.access, p.level, idx, &prefix);
        let mut l = p.level;
        loop {
            if l == 0 {
                return total;
            }
            l -= 1;
            prefix[l] += 1;
            if prefix[l] < m.nest[l].extent {
                break;
            }
            prefix[l] = 0;
        }
    }
}

/// Same total as the brute-force walk, computed per tensor dim when every
/// index dim depends on its own disjoint set of loops.
fn separable_bytes(kernel: &Kernel, m: &Mapping, p: &AccessPlan, core: &[u32]) -> Option<u64> {
    let a = &kernel.accesses[p.access];
    let t = &kernel.tensors[a.tensor];
    let n = m.nest.len();
    let idx = &m.indices[p.access];
    let loops: Vec<Vec<usize>> =
        idx.iter().map(|e| (0..n).filter(|&l| e.depends_on(&m.nest[l].name)).collect()).collect();
    let mut owner = vec![false; n];
    for ls in &loops {
        for &l in ls {
            if std::mem::replace(&mut owner[l], true) {
                return None;
            }
        }
    }
    // outer loops the access ignores still repeat every issue
    let mut total: u64 = (0..p.level).filter(|&l| !owner[l]).map(|l| m.nest[l].extent).product();
    let mut iter = vec![0u64; n];
    for (d, ls) in loops.iter().enumerate() {
        let tile = a.tile[d];
        let size = t.shape[d];
        let extent_at = |c: i64| -> u64 {
            let lo = c.saturating_mul(tile as i64);
            if c < 0 || lo >= size as i64 {
                0
            } else {
                tile.min(size - lo as u64)
            }
        };
        let (outer, inner): (Vec<usize>, Vec<usize>) = ls.iter().partition(|&&l| l < p.level);
        let mut sum = 0u64;
        for_each_point(m, &outer, &mut iter, &mut |iter| {
            let mut seen = std::collections::BTreeSet::new();
            let mut it = iter.to_vec();
            for_each_point(m, &inner, &mut it, &mut |it| {
                let env = m.env(core, it);
                seen.insert(idx[d].eval(&env).expect("mapped index is closed"));
            });
            sum += seen.into_iter().map(extent_at).sum::<u64>();
        });
        total *= sum;
        if total == 0 {
            return Some(0);
        }
    }
    Some(total * t.elem_bytes)
}

/// Visits every assignment of the listed loops, others left as given.
fn for_each_point(m: &Mapping, loops: &[usize], iter: &mut [u64], f: &mut dyn FnMut(&[u64])) {
    for &l in loops {
        iter[l] = 0;
    }
    loop {
        f(iter);
        let mut k = loops.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            let l = loops[k];
            iter[l] += 1;
            if iter[l] < m.nest[l].extent {
                break;
            }
            iter[l] = 0;
        }
    }
}

/// Clipped bytes of the distinct tiles one issue covers.
pub fn issue_bytes(kernel: &Kernel, m: &Mapping, access: usize, level: usize, core: &[u32], prefix: &[u64]) -> u64 {
    let n = m.nest.len();
    let mut iter = vec![0u64; n];
    iter[..level].copy_from_slice(&prefix[..level]);
    let dep: Vec<usize> = (level..n).filter(|&l| m.access_depends_on_loop(access, l)).collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut total = 0;
    loop {
        let coords = m.tile_coords(access, core, &iter);
        if seen.insert(coords.clone()) {
            total += kernel.clipped_tile_bytes(access, &coords);
        }
        let mut k = dep.len();
        loop {
            if k == 0 {
                return total;
            }
            k -= 1;
            let l = dep[k];
            iter[l] += 1;
            if iter[l] < m.nest[l].extent {
                break;
            }
            iter[l] = 0;
        }
    }
}

pub fn estimate(kernel: &Kernel, hw: &HardwareModel, cand: &Candidate) -> Result<Estimate, PerfError> {
    hw.require_level(AbstractionLevel::IntraCore).map_err(|d| PerfError::Unsupported(d.message))?;
    let m = &*cand.mapping;
    let n = m.nest.len();
    let body = body_cycles(hw, kernel)?;
    let groups: Vec<Vec<Group>> = cand.plans.iter().map(|p| transfer_groups(hw, m, &p.realization)).collect();
    let mut tl = vec![0u64; n + 1];
    let mut ts = vec![0u64; n + 1];
    for level in 0..=n {
        for (dir, out) in [(AccessKind::Load, &mut tl), (AccessKind::Store, &mut ts)] {
            let at: Vec<(u64, &[Group])> = cand
                .plans
                .iter()
                .zip(&groups)
                .filter(|(p, _)| p.level == level && kernel.accesses[p.access].kind == dir)
                .map(|(p, g)| (p.footprint, g.as_slice()))
                .collect();
            out[level] = shared_transfer_cycles(hw, &at);
        }
    }
    let mut levels = Vec::with_capacity(n + 1);
    let mut inner = body;
    for j in (0..n).rev() {
        let t = loop_time(m.nest[j].extent, tl[j + 1], inner, ts[j + 1])?;
        levels.push(LevelCost {
            level: j + 1,
            iterations: m.nest[j].extent,
            load_cycles: tl[j + 1],
            store_cycles: ts[j + 1],
            compute_cycles: inner,
        });
        inner = t;
    }
    let nest_total = loop_time(1, tl[0], inner, ts[0])?;
    levels.push(LevelCost { level: 0, iterations: 1, load_cycles: tl[0], store_cycles: ts[0], compute_cycles: inner });
    levels.reverse();
    // levels overlap their transfers, so no level sees the others' traffic;
    // the busiest resource over the whole run still bounds the total
    let (tr, drain) = traffic_with(kernel, hw, cand, &groups);
    let total = nest_total.max(drain);
    let memory_bound = drain > nest_total || levels.iter().any(|l| l.load_cycles + l.store_cycles > l.compute_cycles);
    Ok(Estimate {
        total_cycles: total,
        body_cycles: body,
        levels,
        memory_bound,
        dram_read_bytes: tr.dram_read_bytes,
        dram_write_bytes: tr.dram_write_bytes,
        noc_bytes: tr.noc_bytes,
    })
}

/// Estimates every candidate and sorts by `(total_cycles, id)`.
pub fn rank<'a>(
    kernel: &Kernel,
    hw: &HardwareModel,
    cands: &'a [Candidate],
) -> Result<Vec<(&'a Candidate, Estimate)>, PerfError> {
    use rayon::prelude::*;
    let mut out: Vec<(&Candidate, Estimate)> =
        cands.par_iter().map(|c| estimate(kernel, hw, c).map(|e| (c, e))).collect::<Result<_, _>>()?;
    out.sort_by(|a, b| (a.1.total_cycles, &a.0.id).cmp(&(b.1.total_cycles, &b.0.id)));
    Ok(out)
}

/// Per-core compute-only lower bound.
pub fn compute_bound(kernel: &Kernel, hw: &HardwareModel, mapping: &Mapping) -> Result<u64, PerfError> {
    Ok(body_cycles(hw, kernel)? * mapping.nest.iter().map(|l| l.extent).product::<u64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::{parse_hardware, samples};
    use crate::kernelir::{gemm, GemmShape};
    use crate::mapper::enumerate_mappings;
    use crate::reuse::{enumerate_candidates, ReuseOptions};
    use std::sync::Arc;

    #[test]
    fn loop_time_small_cases() {
        assert_eq!(loop_time(1, 3, 5, 2).unwrap(), 10);
        assert_eq!(loop_time(2, 3, 5, 2).unwrap(), 5 + 5 + 3 + 2);
        assert_eq!(loop_time(4, 3, 5, 2).unwrap(), 2 * 5 + 5 + 5 + 5);
        assert_eq!(loop_time(0, 1, 1, 1), Err(PerfError::ZeroExtent));
    }

    #[test]
    fn matmul_tile_cycles() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        // 16 * 8 * 8 intrinsics at a quarter per cycle
        assert_eq!(op_cycles(&hw, OpKind::Matmul, &[128, 128], 128).unwrap(), 4096);
        assert_eq!(op_cycles(&hw, OpKind::Vector, &[128, 128], 1).unwrap(), 512);
    }

    #[test]
    fn gemm_traffic_global_vs_broadcast() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let k = gemm(&GemmShape { m: 1024, n: 1024, k: 1024, bm: 128, bn: 128, bk: 128, elem_bytes: 2 });
        let m = Arc::new(enumerate_mappings(&k, &hw, 512).unwrap().into_iter().find(|m| m.encoding == "m:x,n:y").unwrap());
        let cands = enumerate_candidates(&k, &hw, &m, &ReuseOptions::default());
        let tile = 128 * 128 * 2;
        let tr: Vec<Traffic> = cands.iter().map(|c| traffic(&k, &hw, c)).collect();
        let global = cands.iter().position(|c| c.plans.iter().all(|p| p.realization == Realization::Global && p.level == 3 || p.access == 2)).unwrap();
        assert_eq!(tr[global].dram_read_bytes / tile, 1024);
        assert_eq!(tr[global].dram_write_bytes / tile, 64);
        let min_read = tr.iter().map(|t| t.dram_read_bytes).min().unwrap();
        assert_eq!(min_read / tile, 128);
    }

    #[test]
    fn separable_bytes_match_walk() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        for (mm, bm, bk) in [(1000, 64, 64), (768, 128, 32), (1024, 256, 128)] {
            let k = gemm(&GemmShape { m: mm, n: 640, k: 320, bm, bn: 64, bk, elem_bytes: 2 });
            for m in enumerate_mappings(&k, &hw, 64).unwrap().into_iter().step_by(5) {
                let m = Arc::new(m);
                for c in enumerate_candidates(&k, &hw, &m, &ReuseOptions::default()) {
                    for p in &c.plans {
                        for core in [0, 9, 63] {
                            let idx = hw.core_index(core);
                            let fast = separable_bytes(&k, &m, p, &idx).expect("gemm indices are separable");
                            assert_eq!(fast, walk_bytes(&k, &m, p, &idx), "{} {}", c.canonical, core);
                        }
                    }
                }
            }
        }
    }
}
