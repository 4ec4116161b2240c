//! Spatiotemporal mapping of a kernel's parallel grid onto the core grid.
//!
//! Each grid variable is assigned an ordered list of core dims (possibly
//! none). The part of its extent not covered spatially becomes a wave loop
//! `t<name>`; sequential loops are renamed `t<name>` and stay innermost.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::affine::Affine;
use crate::hwmodel::HardwareModel;
use crate::kernelir::{Kernel, LoopKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("name `{0}` is used by both the kernel and the hardware")]
    NameClash(String),
    #[error("kernel has no grid loops")]
    NoGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopSource {
    Wave(usize),
    Seq(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestLoop {
    pub name: String,
    pub extent: u64,
    pub source: LoopSource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mapping {
    pub encoding: String,
    /// Per grid variable: core-dim positions, outer to inner.
    pub assign: Vec<Vec<usize>>,
    /// Temporal loops, outer to inner.
    pub nest: Vec<NestLoop>,
    /// Kernel loop variable to its expression over nest vars and core dims.
    pub subst: BTreeMap<String, Affine>,
    /// Mapped tile index of every access.
    pub indices: Vec<Vec<Affine>>,
    /// Name of each core dim, by position.
    pub dim_names: Vec<String>,
    pub core_shape: Vec<u32>,
    /// Grid variable names and extents, for masking.
    pub grid: Vec<(String, u64)>,
}

impl Mapping {
    pub fn is_dim_used(&self, pos: usize) -> bool {
        self.assign.iter().any(|a| a.contains(&pos))
    }

    /// Cores that execute: unused dims pinned to index 0.
    pub fn running_cores(&self) -> Vec<Vec<u32>> {
        let ranges: Vec<Vec<i64>> = self
            .core_shape
            .iter()
            .enumerate()
            .map(|(p, &s)| if self.is_dim_used(p) { (0..s as i64).collect() } else { vec![0] })
            .collect();
        crate::hwmodel::cartesian(&ranges).into_iter().map(|v| v.into_iter().map(|x| x as u32).collect()).collect()
    }

    /// Running cores that hold a grid point in at least one wave; the rest
    /// are masked throughout and move no data.
    pub fn active_cores(&self) -> Vec<Vec<u32>> {
        let mut out = self.running_cores();
        out.retain(|c| {
            self.assign.iter().zip(&self.grid).all(|(dims, (_, e))| {
                let off = dims.iter().fold(0u64, |acc, &p| acc * self.core_shape[p] as u64 + c[p] as u64);
                off < *e
            })
        });
        out
    }

    pub fn num_running(&self) -> u64 {
        (0..self.core_shape.len()).filter(|&p| self.is_dim_used(p)).map(|p| self.core_shape[p] as u64).product()
    }

    /// Spatial span of each grid variable.
    pub fn spatial_span(&self, gi: usize) -> u64 {
        self.assign[gi].iter().map(|&p| self.core_shape[p] as u64).product()
    }

    /// Fraction of cores doing useful work in a full wave.
    pub fn occupancy(&self) -> f64 {
        let active: u64 = self.grid.iter().enumerate().map(|(gi, (_, e))| self.spatial_span(gi).min(*e)).product();
        let total: u64 = self.core_shape.iter().map(|&s| s as u64).product();
        active as f64 / total as f64
    }

    /// True when some (core, wave) pair falls outside the grid.
    pub fn is_masked(&self) -> bool {
        self.grid.iter().enumerate().any(|(gi, (_, e))| {
            let span = self.spatial_span(gi);
            span * e.div_ceil(span) != *e
        })
    }

    pub fn env<'a>(&'a self, core: &'a [u32], iter: &'a [u64]) -> impl Fn(&str) -> Option<i64> + 'a {
        move |n: &str| {
            if let Some(p) = self.dim_names.iter().position(|d| d == n) {
                return Some(core[p] as i64);
            }
            self.nest.iter().position(|l| l.name == n).map(|i| iter[i] as i64)
        }
    }

    /// Grid coordinates at a core and nest iteration, or `None` when masked.
    pub fn grid_point(&self, core: &[u32], iter: &[u64]) -> Option<Vec<i64>> {
        let env = self.env(core, iter);
        let mut out = Vec::with_capacity(self.grid.len());
        for (name, e) in &self.grid {
            let v = self.subst[name].eval(&env).ok()?;
            if v < 0 || v >= *e as i64 {
                return None;
            }
            out.push(v);
        }
        Some(out)
    }

    pub fn tile_coords(&self, access: usize, core: &[u32], iter: &[u64]) -> Vec<i64> {
        let env = self.env(core, iter);
        self.indices[access].iter().map(|e| e.eval(&env).expect("mapped index is closed")).collect()
    }

    /// Whether a mapped access index varies with core dim `pos`.
    pub fn access_depends_on_dim(&self, access: usize, pos: usize) -> bool {
        self.indices[access].iter().any(|e| e.depends_on(&self.dim_names[pos]))
    }

    pub fn access_depends_on_loop(&self, access: usize, level: usize) -> bool {
        self.indices[access].iter().any(|e| e.depends_on(&self.nest[level].name))
    }
}

/// `m:x,n:y`; when two or more wave loops iterate, their nesting order is
/// appended, e.g. `m:-,n:x;tn,tm`.
fn encode(kernel: &Kernel, assign: &[Vec<usize>], wave_order: &[usize], dim_names: &[String]) -> String {
    let grid: Vec<&str> = kernel.grid().map(|g| g.name.as_str()).collect();
    let mut s = grid
        .iter()
        .zip(assign)
        .map(|(g, a)| {
            let d = if a.is_empty() {
                "-".to_string()
            } else {
                a.iter().map(|&p| dim_names[p].as_str()).collect::<Vec<_>>().join(".")
            };
            format!("{g}:{d}")
        })
        .collect::<Vec<_>>()
        .join(",");
    if wave_order.len() > 1 {
        s.push(';');
        s.push_str(&wave_order.iter().map(|&gi| format!("t{}", grid[gi])).collect::<Vec<_>>().join(","));
    }
    s
}

/// Drops outer dims whose inner dims already cover the extent.
fn drop_trivial(dims: &[usize], shape: &[u32], extent: u64) -> Vec<usize> {
    let mut kept = Vec::new();
    let mut inner = 1u64;
    for &p in dims.iter().rev() {
        if inner >= extent {
            continue;
        }
        kept.push(p);
        inner *= shape[p] as u64;
    }
    kept.reverse();
    kept
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

/// Mapping with wave loops in declared order.
pub fn build_mapping(kernel: &Kernel, hw: &HardwareModel, assign: Vec<Vec<usize>>) -> Result<Mapping, MapError> {
    let order: Vec<usize> = (0..kernel.grid().count()).collect();
    build_mapping_ordered(kernel, hw, assign, &order)
}

/// `order` lists grid-variable indices outer to inner; it fixes the nesting
/// of the wave loops with extent above 1 (unit waves go first, in declared
/// order).
pub fn build_mapping_ordered(
    kernel: &Kernel,
    hw: &HardwareModel,
    assign: Vec<Vec<usize>>,
    order: &[usize],
) -> Result<Mapping, MapError> {
    let dim_names: Vec<String> = hw.core_dims().iter().map(|&d| hw.dims[d].name.clone()).collect();
    let core_shape = hw.core_shape();
    let mut taken: BTreeSet<&str> = dim_names.iter().map(String::as_str).collect();
    for l in &kernel.loops {
        if !taken.insert(&l.name) {
            return Err(MapError::NameClash(l.name.clone()));
        }
    }
    let tnames: Vec<String> = kernel.loops.iter().map(|l| format!("t{}", l.name)).collect();
    for t in &tnames {
        if taken.contains(t.as_str()) {
            return Err(MapError::NameClash(t.clone()));
        }
    }

    let grid: Vec<(String, u64)> = kernel.grid().map(|g| (g.name.clone(), g.extent)).collect();
    let mut subst = BTreeMap::new();
    let mut waves_unit = Vec::new();
    let mut waves = vec![None; grid.len()];
    for (gi, (name, extent)) in grid.iter().enumerate() {
        let span: u64 = assign[gi].iter().map(|&p| core_shape[p] as u64).product();
        let wave = NestLoop { name: format!("t{name}"), extent: extent.div_ceil(span), source: LoopSource::Wave(gi) };
        let mut e = Affine::var(&wave.name);
        for &p in &assign[gi] {
            e = e.scale(core_shape[p] as i64).add(&Affine::var(&dim_names[p]));
        }
        subst.insert(name.clone(), e);
        if wave.extent == 1 {
            waves_unit.push(wave);
        } else {
            waves[gi] = Some(wave);
        }
    }
    let mut nest = waves_unit;
    let wave_order: Vec<usize> = order.iter().copied().filter(|&gi| waves[gi].is_some()).collect();
    nest.extend(wave_order.iter().filter_map(|&gi| waves[gi].take()));
    for (si, l) in kernel.loops.iter().filter(|l| l.kind == LoopKind::Seq).enumerate() {
        let name = format!("t{}", l.name);
        subst.insert(l.name.clone(), Affine::var(&name));
        nest.push(NestLoop { name, extent: l.extent, source: LoopSource::Seq(si) });
    }

    // simultaneous substitution via placeholder names
    let indices = kernel
        .accesses
        .iter()
        .map(|a| {
            a.index
                .iter()
                .map(|e| {
                    let tmp = subst.keys().fold(e.clone(), |acc, k| acc.rename(k, &format!("#{k}")));
                    subst.iter().fold(tmp, |acc, (k, v)| acc.substitute(&format!("#{k}"), v))
                })
                .collect()
        })
        .collect();

    Ok(Mapping {
        encoding: encode(kernel, &assign, &wave_order, &dim_names),
        assign,
        nest,
        subst,
        indices,
        dim_names,
        core_shape,
        grid,
    })
}

/// All distinct non-trivial mappings, sorted by encoding and capped at `cap`.
pub fn enumerate_mappings(kernel: &Kernel, hw: &HardwareModel, cap: usize) -> Result<Vec<Mapping>, MapError> {
    let ng = kernel.grid().count();
    if ng == 0 {
        return Err(MapError::NoGrid);
    }
    let shape = hw.core_shape();
    let nd = shape.len();
    let extents: Vec<u64> = kernel.grid().map(|g| g.extent).collect();
    let names: Vec<String> = hw.core_dims().iter().map(|&d| hw.dims[d].name.clone()).collect();
    let orders = permutations(&(0..ng).collect::<Vec<_>>());
    let mut seen: BTreeMap<String, (Vec<Vec<usize>>, Vec<usize>)> = BTreeMap::new();
    // each core dim goes to one grid var or none (value ng)
    let mut choice = vec![0usize; nd];
    loop {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ng];
        for (p, &c) in choice.iter().enumerate() {
            if c < ng {
                groups[c].push(p);
            }
        }
        let per_var: Vec<Vec<Vec<usize>>> = groups.iter().map(|g| permutations(g)).collect();
        let mut idx = vec![0usize; ng];
        loop {
            let assign: Vec<Vec<usize>> =
                (0..ng).map(|gi| drop_trivial(&per_var[gi][idx[gi]], &shape, extents[gi])).collect();
            let iterating: Vec<bool> = (0..ng)
                .map(|gi| {
                    let span: u64 = assign[gi].iter().map(|&p| shape[p] as u64).product();
                    extents[gi].div_ceil(span) > 1
                })
                .collect();
            for order in &orders {
                let waves: Vec<usize> = order.iter().copied().filter(|&gi| iterating[gi]).collect();
                seen.entry(encode(kernel, &assign, &waves, &names)).or_insert_with(|| (assign.clone(), order.clone()));
            }
            let mut k = 0;
            while k < ng {
                idx[k] += 1;
                if idx[k] < per_var[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == ng {
                break;
            }
        }
        let mut k = 0;
        while k < nd {
            choice[k] += 1;
            if choice[k] <= ng {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == nd {
            break;
        }
    }
    seen.into_values().take(cap).map(|(a, o)| build_mapping_ordered(kernel, hw, a, &o)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::{parse_hardware, samples};
    use crate::kernelir::{gemm, GemmShape};

    fn g(m: u64, n: u64) -> Kernel {
        gemm(&GemmShape { m, n, k: 256, bm: 128, bn: 128, bk: 128, elem_bytes: 2 })
    }

    #[test]
    fn gemm_on_wormhole() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let maps = enumerate_mappings(&g(1024, 1024), &hw, 512).unwrap();
        let encs: Vec<&str> = maps.iter().map(|m| m.encoding.as_str()).collect();
        assert!(encs.contains(&"m:x,n:y"));
        assert!(encs.contains(&"m:y,n:x"));
        assert!(encs.contains(&"m:-,n:-;tm,tn"));
        assert!(encs.contains(&"m:-,n:-;tn,tm"));
        // m has extent 8: a second dim is never useful
        assert!(!encs.iter().any(|e| e.starts_with("m:x.y") || e.starts_with("m:y.x")));
        let mut sorted = encs.clone();
        sorted.sort();
        assert_eq!(sorted, encs);
        let m = maps.iter().find(|m| m.encoding == "m:x,n:y").unwrap();
        assert!(m.nest.iter().take(2).all(|l| l.extent == 1));
        assert_eq!(m.nest[2].name, "tk");
        assert_eq!(m.occupancy(), 1.0);
        assert!(!m.is_masked());
        assert_eq!(m.indices[0][0].to_string(), "tm*8 + x");
    }

    #[test]
    fn multi_dim_assignment_and_masking() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let k = gemm(&GemmShape { m: 128 * 40, n: 128, k: 128, bm: 128, bn: 128, bk: 128, elem_bytes: 2 });
        let maps = enumerate_mappings(&k, &hw, 512).unwrap();
        let m = maps.iter().find(|m| m.encoding == "m:x.y,n:-").unwrap();
        assert_eq!(m.spatial_span(0), 64);
        assert!(m.is_masked());
        assert_eq!(m.running_cores().len(), 64);
        assert!((m.occupancy() - 40.0 / 64.0).abs() < 1e-12);
        // core (5, 0) holds m = 40: out of range
        assert!(m.grid_point(&[5, 0], &[0, 0, 0]).is_none());
        assert_eq!(m.grid_point(&[4, 7], &[0, 0, 0]), Some(vec![39, 0]));
    }

    #[test]
    fn cap_truncates_sorted_list() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let all = enumerate_mappings(&g(1024, 1024), &hw, 512).unwrap();
        let few = enumerate_mappings(&g(1024, 1024), &hw, 3).unwrap();
        assert_eq!(few.len(), 3);
        assert_eq!(few[..], all[..3]);
    }
}
