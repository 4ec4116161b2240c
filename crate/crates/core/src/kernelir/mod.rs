//! Tile-level kernel IR: a parallel grid, sequential loops, tensors, tile
//! loads and stores with affine tile-index maps, and a small op DAG.

mod builders;
mod parse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::affine::Affine;

pub use builders::{flashattention, flashattention_for_tokens, gemm, FlashAttentionShape, GemmShape};
pub use parse::parse_kernel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: undeclared {what}")]
    Undeclared { line: usize, what: String },
    #[error("line {line}: duplicate {what}")]
    Duplicate { line: usize, what: String },
    #[error("line {line}: shape mismatch: {msg}")]
    Shape { line: usize, msg: String },
    #[error("line {line}, column {col}: non-affine tile index: {msg}")]
    NonAffine { line: usize, col: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LoopKind {
    Grid,
    Seq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopVar {
    pub name: String,
    pub extent: u64,
    pub kind: LoopKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub name: String,
    /// Element counts per dimension.
    pub shape: Vec<u64>,
    pub elem_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Load,
    Store,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    /// Value name for loads; `store_<tensor>` for stores.
    pub id: String,
    pub kind: AccessKind,
    pub tensor: usize,
    /// Tile coordinates per tensor dimension.
    pub index: Vec<Affine>,
    pub tile: Vec<u64>,
    /// Op whose result a store writes back.
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Matmul,
    Vector,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Op {
    pub id: String,
    pub kind: OpKind,
    pub inputs: Vec<String>,
    /// Result tile shape with unit leading dims dropped.
    pub shape: Vec<u64>,
    /// Contraction length for matmuls, 1 otherwise.
    pub reduce: u64,
}

impl Op {
    pub fn elems(&self) -> u64 {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Kernel {
    pub name: String,
    pub params: BTreeMap<String, i64>,
    /// Grid loops first, then sequential loops outer to inner.
    pub loops: Vec<LoopVar>,
    pub tensors: Vec<Tensor>,
    pub accesses: Vec<Access>,
    pub ops: Vec<Op>,
}

impl Kernel {
    pub fn grid(&self) -> impl Iterator<Item = &LoopVar> {
        self.loops.iter().filter(|l| l.kind == LoopKind::Grid)
    }

    pub fn seq(&self) -> impl Iterator<Item = &LoopVar> {
        self.loops.iter().filter(|l| l.kind == LoopKind::Seq)
    }

    pub fn loads(&self) -> impl Iterator<Item = (usize, &Access)> {
        self.accesses.iter().enumerate().filter(|(_, a)| a.kind == AccessKind::Load)
    }

    pub fn stores(&self) -> impl Iterator<Item = (usize, &Access)> {
        self.accesses.iter().enumerate().filter(|(_, a)| a.kind == AccessKind::Store)
    }

    pub fn grid_size(&self) -> u64 {
        self.grid().map(|l| l.extent).product()
    }

    /// Loop variables each access's tile index depends on.
    pub fn index_dependence(&self) -> Vec<BTreeSet<String>> {
        self.accesses.iter().map(|a| a.index.iter().flat_map(|e| e.vars()).collect()).collect()
    }

    pub fn tile_bytes(&self, access: usize) -> u64 {
        let a = &self.accesses[access];
        a.tile.iter().product::<u64>() * self.tensors[a.tensor].elem_bytes
    }

    /// Bytes actually moved for the tile at `coords`: edge tiles are clipped
    /// to the tensor bounds, tiles fully outside move nothing.
    pub fn clipped_tile_bytes(&self, access: usize, coords: &[i64]) -> u64 {
        let a = &self.accesses[access];
        let t = &self.tensors[a.tensor];
        let mut elems = 1u64;
        for ((&c, &tile), &size) in coords.iter().zip(&a.tile).zip(&t.shape) {
            let lo = c.saturating_mul(tile as i64);
            if c < 0 || lo >= size as i64 {
                return 0;
            }
            elems *= tile.min(size - lo as u64);
        }
        elems * t.elem_bytes
    }

    pub fn op(&self, id: &str) -> Option<&Op> {
        self.ops.iter().find(|o| o.id == id)
    }

    /// Topological depth of each op; loads count as depth 0 inputs.
    pub fn op_levels(&self) -> Vec<usize> {
        let mut level: BTreeMap<&str, usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let l = op.inputs.iter().filter_map(|i| level.get(i.as_str()).map(|d| d + 1)).max().unwrap_or(0);
            level.insert(&op.id, l);
            out.push(l);
        }
        out
    }

    pub fn total_flops(&self) -> u64 {
        let per_iter: u64 = self
            .ops
            .iter()
            .map(|o| match o.kind {
                OpKind::Matmul => 2 * o.elems() * o.reduce,
                _ => o.elems(),
            })
            .sum();
        per_iter * self.loops.iter().map(|l| l.extent).product::<u64>()
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if self.grid().next().is_none() {
            return Err(KernelError::Invalid("kernel has no grid loop".into()));
        }
        if self.loops.iter().any(|l| l.extent == 0) {
            return Err(KernelError::Invalid("loop extents must be >= 1".into()));
        }
        if self.ops.is_empty() {
            return Err(KernelError::Invalid("kernel has no ops".into()));
        }
        if self.stores().next().is_none() {
            return Err(KernelError::Invalid("kernel stores nothing".into()));
        }
        Ok(())
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Matmul => "matmul",
            OpKind::Vector => "vec",
            OpKind::Scalar => "scalar",
        })
    }
}

/// Prints in the `.tk` grammar; reparses to an equal kernel.
impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kernel {} {{", self.name)?;
        for (k, v) in &self.params {
            writeln!(f, "  param {k} = {v}")?;
        }
        for l in &self.loops {
            let kw = if l.kind == LoopKind::Grid { "grid" } else { "seq" };
            writeln!(f, "  {kw} {} = {}", l.name, l.extent)?;
        }
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(u64::to_string).collect();
            writeln!(f, "  tensor {}[{}] elem={}", t.name, dims.join(", "), t.elem_bytes)?;
        }
        let idx = |a: &Access| a.index.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ");
        let tile = |a: &Access| a.tile.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
        for (_, a) in self.loads() {
            writeln!(f, "  load {} = {}[{}] tile({})", a.id, self.tensors[a.tensor].name, idx(a), tile(a))?;
        }
        for o in &self.ops {
            writeln!(f, "  op {} = {}({})", o.id, o.kind, o.inputs.join(", "))?;
        }
        for (_, a) in self.stores() {
            writeln!(
                f,
                "  store {}[{}] tile({}) = {}",
                self.tensors[a.tensor].name,
                idx(a),
                tile(a),
                a.value.as_deref().unwrap_or("")
            )?;
        }
        writeln!(f, "}}")
    }
}

pub mod samples {
    pub const GEMM: &str = include_str!("../../data/kernels/gemm.tk");
    pub const FLASHATTENTION: &str = include_str!("../../data/kernels/flashattention.tk");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_builder_shape() {
        let k = gemm(&GemmShape { m: 1024, n: 1024, k: 1024, bm: 128, bn: 128, bk: 128, elem_bytes: 2 });
        assert_eq!(k.grid_size(), 64);
        assert_eq!(k.seq().count(), 1);
        assert_eq!(k.loads().count(), 2);
        assert_eq!(k.stores().count(), 1);
        let dep = k.index_dependence();
        let names: Vec<Vec<&str>> = dep.iter().map(|s| s.iter().map(String::as_str).collect()).collect();
        assert_eq!(names, vec![vec!["k", "m"], vec!["k", "n"], vec!["m", "n"]]);
        assert_eq!(k.tile_bytes(0), 128 * 128 * 2);
        assert_eq!(k.total_flops(), 2 * 1024 * 1024 * 1024);
    }

    #[test]
    fn edge_tiles_are_clipped() {
        let k = gemm(&GemmShape { m: 100, n: 64, k: 64, bm: 64, bn: 64, bk: 64, elem_bytes: 1 });
        assert_eq!(k.loops[0].extent, 2);
        assert_eq!(k.clipped_tile_bytes(0, &[0, 0]), 64 * 64);
        assert_eq!(k.clipped_tile_bytes(0, &[1, 0]), 36 * 64);
        assert_eq!(k.clipped_tile_bytes(0, &[2, 0]), 0);
    }

    #[test]
    fn samples_parse_and_round_trip() {
        for s in [samples::GEMM, samples::FLASHATTENTION] {
            let k = parse_kernel(s).unwrap();
            k.validate().unwrap();
            let back = parse_kernel(&k.to_string()).unwrap();
            assert_eq!(back, k);
        }
    }

    #[test]
    fn gemm_sample_matches_builder() {
        let k = parse_kernel(samples::GEMM).unwrap();
        let mut b = gemm(&GemmShape { m: 1024, n: 1024, k: 1024, bm: 128, bn: 128, bk: 128, elem_bytes: 2 });
        b.params = k.params.clone();
        assert_eq!(k, b);
    }

    #[test]
    fn flashattention_ops() {
        let k = flashattention(&FlashAttentionShape { heads: 4, seq: 512, head_dim: 64, bq: 128, bkv: 128, elem_bytes: 2 });
        assert_eq!(k.grid_size(), 16);
        assert_eq!(k.seq().next().unwrap().extent, 4);
        let kinds: Vec<OpKind> = k.ops.iter().map(|o| o.kind).collect();
        assert_eq!(kinds.iter().filter(|&&o| o == OpKind::Matmul).count(), 2);
        assert_eq!(k.ops[0].shape, vec![128, 128]);
        assert_eq!(k.op_levels(), vec![0, 1, 2, 3, 4, 5]);
        let tok = flashattention_for_tokens(8192, 2048, 4096, 32, 128, 128, 2).unwrap();
        assert_eq!(tok.grid().next().unwrap().extent, 4 * 32);
    }
}
