//! Data-movement planning: where each transfer is issued in the loop nest
//! (temporal reuse) and whether a tile is fetched by every core or fetched
//! once and multicast across core dims (spatial reuse).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::affine::Atom;
use crate::hwmodel::HardwareModel;
use crate::kernelir::{AccessKind, Kernel};
use crate::mapper::Mapping;

/// How a transfer reaches the cores that need it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Realization {
    /// Every running core moves its own tile to or from DRAM.
    Global,
    /// Producers (index 0 in every listed dim) fetch from DRAM, then the tile
    /// is multicast one stage per `(core-dim position, net)` pair, in order.
    Broadcast(Vec<(usize, usize)>),
}

impl Realization {
    pub fn stages(&self) -> &[(usize, usize)] {
        match self {
            Realization::Global => &[],
            Realization::Broadcast(s) => s,
        }
    }

    pub fn label(&self, hw: &HardwareModel, mapping: &Mapping) -> String {
        match self {
            Realization::Global => "global".into(),
            Realization::Broadcast(s) => {
                let parts: Vec<String> = s
                    .iter()
                    .map(|&(p, n)| format!("{}/{}", mapping.dim_names[p], hw.interconnects[n].name))
                    .collect();
                format!("bcast[{}]", parts.join(">"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPlan {
    pub access: usize,
    /// Transfer is issued inside `nest[..level]`.
    pub level: usize,
    pub realization: Realization,
    /// Bytes buffered per issue.
    pub footprint: u64,
    /// 2 when the enclosing loop iterates (double buffering), else 1.
    pub buffers: u64,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: String,
    pub canonical: String,
    pub mapping: Arc<Mapping>,
    pub plans: Vec<AccessPlan>,
    pub live_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReuseOptions {
    pub no_spatial_reuse: bool,
    pub no_temporal_reuse: bool,
    pub max_options_per_access: usize,
    pub max_candidates: usize,
    pub reserved_l1_fraction: f64,
}

impl Default for ReuseOptions {
    fn default() -> Self {
        ReuseOptions {
            no_spatial_reuse: false,
            no_temporal_reuse: false,
            max_options_per_access: 64,
            max_candidates: 100_000,
            reserved_l1_fraction: 0.10,
        }
    }
}

pub fn usable_capacity(hw: &HardwareModel, reserved: f64) -> u64 {
    hw.local_memory().map(|m| (m.capacity as f64 * (1.0 - reserved)).floor() as u64).unwrap_or(0)
}

/// Innermost nest loop an access depends on, plus one.
pub fn natural_level(mapping: &Mapping, access: usize, kind: AccessKind) -> usize {
    match kind {
        AccessKind::Load => mapping.nest.len(),
        AccessKind::Store => {
            (0..mapping.nest.len()).rev().find(|&l| mapping.access_depends_on_loop(access, l)).map_or(0, |l| l + 1)
        }
    }
}

pub fn buffer_factor(mapping: &Mapping, level: usize) -> u64 {
    if level > 0 && mapping.nest[level - 1].extent >= 2 {
        2
    } else {
        1
    }
}

/// Crossed loops the access depends on, when each index expression is linear
/// in at most one of them and each of them appears in one expression only.
fn separable_crossed(mapping: &Mapping, access: usize, level: usize) -> Option<Vec<usize>> {
    let crossed: Vec<usize> = (level..mapping.nest.len()).filter(|&l| mapping.access_depends_on_loop(access, l)).collect();
    let mut used = BTreeSet::new();
    for e in &mapping.indices[access] {
        let mut here = 0;
        for &l in &crossed {
            let name = &mapping.nest[l].name;
            if !e.depends_on(name) {
                continue;
            }
            if e.coefficient(name) == 0 {
                return None; // only inside a floordiv/mod atom
            }
            let nested = e.terms().any(|(a, _)| !matches!(a, Atom::Var(_)) && atom_mentions(a, name));
            if nested || !used.insert(l) {
                return None;
            }
            here += 1;
        }
        if here > 1 {
            return None;
        }
    }
    Some(crossed)
}

fn atom_mentions(a: &Atom, name: &str) -> bool {
    match a {
        Atom::Var(n) => n == name,
        Atom::FloorDiv(e, _) | Atom::Mod(e, _) => e.depends_on(name),
    }
}

/// Closed-form footprint; `None` when the access is not separable.
pub fn footprint_closed_form(kernel: &Kernel, mapping: &Mapping, access: usize, level: usize) -> Option<u64> {
    let crossed = separable_crossed(mapping, access, level)?;
    Some(kernel.tile_bytes(access) * crossed.iter().map(|&l| mapping.nest[l].extent).product::<u64>())
}

/// Distinct tiles touched by loops `level..` with outer loops and core
/// coordinates held at zero.
pub fn footprint_enumerated(kernel: &Kernel, mapping: &Mapping, access: usize, level: usize) -> u64 {
    let n = mapping.nest.len();
    let core = vec![0u32; mapping.core_shape.len()];
    let mut iter = vec![0u64; n];
    let mut tiles = BTreeSet::new();
    loop {
        tiles.insert(mapping.tile_coords(access, &core, &iter));
        let mut l = n;
        loop {
            if l == level {
                return tiles.len() as u64 * kernel.tile_bytes(access);
            }
            l -= 1;
            iter[l] += 1;
            if iter[l] < mapping.nest[l].extent {
                break;
            }
            iter[l] = 0;
        }
    }
}

pub fn footprint(kernel: &Kernel, mapping: &Mapping, access: usize, level: usize) -> u64 {
    footprint_closed_form(kernel, mapping, access, level)
        .unwrap_or_else(|| footprint_enumerated(kernel, mapping, access, level))
}

/// Issue levels worth trying, deepest representative of each run of levels
/// separated only by extent-1 loops.
pub fn candidate_levels(mapping: &Mapping, access: usize, kind: AccessKind, temporal: bool) -> Vec<usize> {
    let nat = natural_level(mapping, access, kind);
    if kind == AccessKind::Store || !temporal {
        return vec![nat];
    }
    let mut out = Vec::new();
    for h in 0..=nat {
        if h < nat && mapping.nest[h].extent == 1 {
            continue; // same as h + 1
        }
        out.push(h);
    }
    out
}

/// Eligible multicast dims for an access under a mapping: used, reachable
/// from index 0 on some net, and not indexed by the access.
pub fn reusable_dims(hw: &HardwareModel, mapping: &Mapping, access: usize) -> Vec<(usize, usize)> {
    hw.broadcast_eligible_dims()
        .into_iter()
        .filter(|&(p, _)| mapping.is_dim_used(p) && mapping.core_shape[p] > 1 && !mapping.access_depends_on_dim(access, p))
        .collect()
}

pub fn realizations(hw: &HardwareModel, mapping: &Mapping, access: usize, kind: AccessKind, spatial: bool) -> Vec<Realization> {
    let mut out = vec![Realization::Global];
    if kind == AccessKind::Store || !spatial {
        return out;
    }
    let elig = reusable_dims(hw, mapping, access);
    // ordered sequences of distinct dims, one net each
    fn extend(elig: &[(usize, usize)], cur: &mut Vec<(usize, usize)>, out: &mut Vec<Realization>) {
        if !cur.is_empty() {
            out.push(Realization::Broadcast(cur.clone()));
        }
        for &(p, n) in elig {
            if cur.iter().any(|&(q, _)| q == p) {
                continue;
            }
            cur.push((p, n));
            extend(elig, cur, out);
            cur.pop();
        }
    }
    extend(&elig, &mut Vec::new(), &mut out);
    out
}

pub fn canonical_string(kernel: &Kernel, hw: &HardwareModel, mapping: &Mapping, plans: &[AccessPlan]) -> String {
    let params: Vec<String> = kernel.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let mut s = format!("{}[{}]|{}", kernel.name, params.join(","), mapping.encoding);
    for p in plans {
        let _ = write!(s, "|{}@{}:{}", kernel.accesses[p.access].id, p.level, p.realization.label(hw, mapping));
    }
    s
}

pub fn candidate_id(canonical: &str) -> String {
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Access plans for a mapping, pruned by scratchpad capacity.
pub fn enumerate_candidates(
    kernel: &Kernel,
    hw: &HardwareModel,
    mapping: &Arc<Mapping>,
    opts: &ReuseOptions,
) -> Vec<Candidate> {
    let usable = usable_capacity(hw, opts.reserved_l1_fraction);
    let per_access: Vec<Vec<AccessPlan>> = kernel
        .accesses
        .iter()
        .enumerate()
        .map(|(ai, a)| {
            let mut v = Vec::new();
            for level in candidate_levels(mapping, ai, a.kind, !opts.no_temporal_reuse) {
                let fp = footprint(kernel, mapping, ai, level);
                let buffers = buffer_factor(mapping, level);
                if fp * buffers > usable {
                    continue;
                }
                for r in realizations(hw, mapping, ai, a.kind, !opts.no_spatial_reuse) {
                    v.push(AccessPlan { access: ai, level, realization: r, footprint: fp, buffers });
                }
            }
            v.truncate(opts.max_options_per_access);
            v
        })
        .collect();
    if per_access.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; per_access.len()];
    'outer: loop {
        let plans: Vec<AccessPlan> = idx.iter().enumerate().map(|(a, &i)| per_access[a][i].clone()).collect();
        let live: u64 = plans.iter().map(|p| p.footprint * p.buffers).sum();
        if live <= usable {
            let canonical = canonical_string(kernel, hw, mapping, &plans);
            out.push(Candidate { id: candidate_id(&canonical), canonical, mapping: Arc::clone(mapping), plans, live_bytes: live });
            if out.len() >= opts.max_candidates {
                break;
            }
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                break 'outer;
            }
            idx[k] += 1;
            if idx[k] < per_access[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
    out
}
