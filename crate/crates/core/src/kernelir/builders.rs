use std::collections::BTreeMap;

use super::{Access, AccessKind, Kernel, KernelError, LoopKind, LoopVar, Op, OpKind, Tensor};
use crate::affine::Affine;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmShape {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub bm: u64,
    pub bn: u64,
    pub bk: u64,
    pub elem_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlashAttentionShape {
    /// Batch times heads.
    pub heads: u64,
    pub seq: u64,
    pub head_dim: u64,
    pub bq: u64,
    pub bkv: u64,
    pub elem_bytes: u64,
}

fn cdiv(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

fn lp(name: &str, extent: u64, kind: LoopKind) -> LoopVar {
    LoopVar { name: name.into(), extent, kind }
}

fn v(name: &str) -> Affine {
    Affine::var(name)
}

fn c(x: i64) -> Affine {
    Affine::constant(x)
}

fn load(id: &str, tensor: usize, index: Vec<Affine>, tile: Vec<u64>) -> Access {
    Access { id: id.into(), kind: AccessKind::Load, tensor, index, tile, value: None }
}

fn store(tensor: &str, t: usize, index: Vec<Affine>, tile: Vec<u64>, value: &str) -> Access {
    Access { id: format!("store_{tensor}"), kind: AccessKind::Store, tensor: t, index, tile, value: Some(value.into()) }
}

fn op(id: &str, kind: OpKind, inputs: &[&str], shape: Vec<u64>, reduce: u64) -> Op {
    Op { id: id.into(), kind, inputs: inputs.iter().map(|s| s.to_string()).collect(), shape, reduce }
}

/// `C[m, n] += A[m, k] * B[k, n]` over `bm x bn` output tiles.
pub fn gemm(s: &GemmShape) -> Kernel {
    let t = |name: &str, shape: Vec<u64>| Tensor { name: name.into(), shape, elem_bytes: s.elem_bytes };
    Kernel {
        name: "gemm".into(),
        params: BTreeMap::from([("BM".into(), s.bm as i64), ("BN".into(), s.bn as i64), ("BK".into(), s.bk as i64)]),
        loops: vec![
            lp("m", cdiv(s.m, s.bm), LoopKind::Grid),
            lp("n", cdiv(s.n, s.bn), LoopKind::Grid),
            lp("k", cdiv(s.k, s.bk), LoopKind::Seq),
        ],
        tensors: vec![t("A", vec![s.m, s.k]), t("B", vec![s.k, s.n]), t("C", vec![s.m, s.n])],
        accesses: vec![
            load("a", 0, vec![v("m"), v("k")], vec![s.bm, s.bk]),
            load("b", 1, vec![v("k"), v("n")], vec![s.bk, s.bn]),
            store("C", 2, vec![v("m"), v("n")], vec![s.bm, s.bn], "acc"),
        ],
        ops: vec![op("acc", OpKind::Matmul, &["a", "b"], vec![s.bm, s.bn], s.bk)],
    }
}

/// Forward attention with online softmax. The grid runs over
/// (head, query block); key/value blocks are streamed sequentially.
pub fn flashattention(s: &FlashAttentionShape) -> Kernel {
    let d = s.head_dim;
    let t = |name: &str, shape: Vec<u64>| Tensor { name: name.into(), shape, elem_bytes: s.elem_bytes };
    Kernel {
        name: "flashattention".into(),
        params: BTreeMap::from([("BQ".into(), s.bq as i64), ("BKV".into(), s.bkv as i64)]),
        loops: vec![
            lp("head", s.heads, LoopKind::Grid),
            lp("qblock", cdiv(s.seq, s.bq), LoopKind::Grid),
            lp("kvblock", cdiv(s.seq, s.bkv), LoopKind::Seq),
        ],
        tensors: vec![
            t("Q", vec![s.heads, s.seq, d]),
            // keys are stored transposed
            t("K", vec![s.heads, d, s.seq]),
            t("V", vec![s.heads, s.seq, d]),
            t("O", vec![s.heads, s.seq, d]),
        ],
        accesses: vec![
            load("q", 0, vec![v("head"), v("qblock"), c(0)], vec![1, s.bq, d]),
            load("k", 1, vec![v("head"), c(0), v("kvblock")], vec![1, d, s.bkv]),
            load("v", 2, vec![v("head"), v("kvblock"), c(0)], vec![1, s.bkv, d]),
            store("O", 3, vec![v("head"), v("qblock"), c(0)], vec![1, s.bq, d], "o"),
        ],
        ops: vec![
            op("s", OpKind::Matmul, &["q", "k"], vec![s.bq, s.bkv], d),
            op("scaled", OpKind::Vector, &["s"], vec![s.bq, s.bkv], 1),
            op("mx", OpKind::Vector, &["scaled"], vec![s.bq, s.bkv], 1),
            op("p", OpKind::Vector, &["scaled", "mx"], vec![s.bq, s.bkv], 1),
            op("pv", OpKind::Matmul, &["p", "v"], vec![s.bq, d], s.bkv),
            op("o", OpKind::Vector, &["pv"], vec![s.bq, d], 1),
        ],
    }
}

/// Attention over `tokens` split into sequences of `seqlen`, with the model
/// hidden size divided evenly across `heads`.
pub fn flashattention_for_tokens(
    tokens: u64,
    seqlen: u64,
    hidden: u64,
    heads: u64,
    bq: u64,
    bkv: u64,
    elem_bytes: u64,
) -> Result<Kernel, KernelError> {
    if seqlen == 0 || heads == 0 || !tokens.is_multiple_of(seqlen) || !hidden.is_multiple_of(heads) {
        return Err(KernelError::Invalid(format!(
            "tokens ({tokens}) must be a multiple of seqlen ({seqlen}) and hidden ({hidden}) of heads ({heads})"
        )));
    }
    Ok(flashattention(&FlashAttentionShape {
        heads: tokens / seqlen * heads,
        seq: seqlen,
        head_dim: hidden / heads,
        bq,
        bkv,
        elem_bytes,
    }))
}
