//! End-to-end compile flow: kernel variants, mappings, reuse candidates,
//! model ranking, simulation of the top-k and final selection, plus the
//! textual and machine-readable outputs.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::Config;
use crate::hwmodel::{AbstractionLevel, HardwareModel};
use crate::kernelir::{flashattention, gemm, FlashAttentionShape, GemmShape, Kernel, KernelError, LoopKind};
use crate::mapper::{enumerate_mappings, MapError, Mapping};
use crate::perfmodel::{estimate, Estimate, PerfError};
use crate::reuse::{enumerate_candidates, Candidate};
use crate::simref::{simulate, SimError, SimOptions, SimResult};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Hardware(String),
    #[error("no candidate fits the local memory")]
    NoCandidates,
}

/// What to compile: a fixed kernel or a problem shape swept over block sizes.
#[derive(Debug, Clone)]
pub enum Workload {
    Kernel(Kernel),
    Gemm { m: u64, n: u64, k: u64 },
    FlashAttention { heads: u64, seq: u64, head_dim: u64 },
}

fn block_choices(blocks: &[u64], dim: u64) -> Vec<u64> {
    let v: Vec<u64> = blocks.iter().copied().filter(|&b| b <= dim).collect();
    if v.is_empty() {
        vec![dim]
    } else {
        v
    }
}

impl Workload {
    pub fn variants(&self, cfg: &Config) -> Vec<Kernel> {
        let e = cfg.dtype_bytes;
        match *self {
            Workload::Kernel(ref k) => vec![k.clone()],
            Workload::Gemm { m, n, k } => {
                let mut out = Vec::new();
                for &bm in &block_choices(&cfg.blocks, m) {
                    for &bn in &block_choices(&cfg.blocks, n) {
                        for &bk in &block_choices(&cfg.blocks, k) {
                            out.push(gemm(&GemmShape { m, n, k, bm, bn, bk, elem_bytes: e }));
                        }
                    }
                }
                out
            }
            Workload::FlashAttention { heads, seq, head_dim } => {
                let mut out = Vec::new();
                for &bq in &block_choices(&cfg.blocks, seq) {
                    for &bkv in &block_choices(&cfg.blocks, seq) {
                        out.push(flashattention(&FlashAttentionShape { heads, seq, head_dim, bq, bkv, elem_bytes: e }));
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scored {
    pub kernel: usize,
    pub cand: Candidate,
    pub est: Estimate,
}

#[derive(Debug, Clone)]
pub struct CompileResult {
    pub kernels: Vec<Kernel>,
    pub mappings: Vec<(usize, Arc<Mapping>)>,
    /// All candidates by `(model cycles, id)`.
    pub ranked: Vec<Scored>,
    /// Simulation of the first `topk` entries of `ranked`.
    pub simulated: Vec<SimResult>,
    /// Index into `ranked` of the simulated winner.
    pub winner: usize,
}

impl CompileResult {
    pub fn winner(&self) -> (&Scored, &SimResult) {
        (&self.ranked[self.winner], &self.simulated[self.winner])
    }
}

/// Candidates across all variants and mappings, ranked by the model.
/// Kernel variants, their mappings tagged with the variant index, and the
/// model-ranked candidates.
pub type Ranking = (Vec<Kernel>, Vec<(usize, Arc<Mapping>)>, Vec<Scored>);

pub fn rank_workload(hw: &HardwareModel, work: &Workload, cfg: &Config) -> Result<Ranking, CompileError> {
    hw.require_level(AbstractionLevel::IntraCore).map_err(|d| CompileError::Hardware(d.message))?;
    let kernels = work.variants(cfg);
    let mut mappings = Vec::new();
    for (ki, k) in kernels.iter().enumerate() {
        if k.loops.iter().any(|l| l.kind == LoopKind::Grid) {
            for m in enumerate_mappings(k, hw, cfg.max_mappings)? {
                mappings.push((ki, Arc::new(m)));
            }
        }
    }
    let opts = cfg.reuse_options();
    let per_map: Vec<Vec<(usize, Candidate)>> = mappings
        .par_iter()
        .map(|(ki, m)| enumerate_candidates(&kernels[*ki], hw, m, &opts).into_iter().map(|c| (*ki, c)).collect())
        .collect();
    let mut cands: Vec<(usize, Candidate)> = per_map.into_iter().flatten().collect();
    cands.truncate(cfg.max_candidates);
    let mut ranked: Vec<Scored> = cands
        .into_par_iter()
        .map(|(ki, cand)| estimate(&kernels[ki], hw, &cand).map(|est| Scored { kernel: ki, cand, est }))
        .collect::<Result<_, _>>()?;
    ranked.sort_by(|a, b| (a.est.total_cycles, &a.cand.id).cmp(&(b.est.total_cycles, &b.cand.id)));
    Ok((kernels, mappings, ranked))
}

pub fn compile(hw: &HardwareModel, work: &Workload, cfg: &Config) -> Result<CompileResult, CompileError> {
    let (kernels, mappings, ranked) = rank_workload(hw, work, cfg)?;
    if ranked.is_empty() {
        return Err(CompileError::NoCandidates);
    }
    let k = cfg.topk.min(ranked.len());
    let simulated: Vec<SimResult> = ranked[..k]
        .par_iter()
        .map(|s| simulate(&kernels[s.kernel], hw, &s.cand, SimOptions::default()))
        .collect::<Result<_, _>>()?;
    let winner = (0..k)
        .min_by(|&a, &b| (simulated[a].makespan, &ranked[a].cand.id).cmp(&(simulated[b].makespan, &ranked[b].cand.id)))
        .unwrap();
    Ok(CompileResult { kernels, mappings, ranked, simulated, winner })
}

#[derive(Serialize)]
struct PlanRow<'a> {
    access: &'a str,
    level: usize,
    realization: String,
    footprint_bytes: u64,
    buffers: u64,
}

#[derive(Serialize)]
struct ReportRow<'a> {
    rank: usize,
    id: &'a str,
    kernel: &'a str,
    params: &'a std::collections::BTreeMap<String, i64>,
    mapping: &'a str,
    plans: Vec<PlanRow<'a>>,
    live_bytes: u64,
    total_cycles: u64,
    memory_bound: bool,
    dram_read_bytes: u64,
    dram_write_bytes: u64,
    noc_bytes: u64,
    sim_cycles: Option<u64>,
    selected: bool,
}

/// One JSON object per ranked candidate.
pub fn report_jsonl(hw: &HardwareModel, r: &CompileResult) -> String {
    let mut out = String::new();
    for (i, s) in r.ranked.iter().enumerate() {
        let k = &r.kernels[s.kernel];
        let row = ReportRow {
            rank: i + 1,
            id: &s.cand.id,
            kernel: &k.name,
            params: &k.params,
            mapping: &s.cand.mapping.encoding,
            plans: s
                .cand
                .plans
                .iter()
                .map(|p| PlanRow {
                    access: &k.accesses[p.access].id,
                    level: p.level,
                    realization: p.realization.label(hw, &s.cand.mapping),
                    footprint_bytes: p.footprint,
                    buffers: p.buffers,
                })
                .collect(),
            live_bytes: s.cand.live_bytes,
            total_cycles: s.est.total_cycles,
            memory_bound: s.est.memory_bound,
            dram_read_bytes: s.est.dram_read_bytes,
            dram_write_bytes: s.est.dram_write_bytes,
            noc_bytes: s.est.noc_bytes,
            sim_cycles: r.simulated.get(i).map(|x| x.makespan),
            selected: i == r.winner,
        };
        out.push_str(&serde_json::to_string(&row).expect("report rows serialize"));
        out.push('\n');
    }
    out
}

pub fn report_csv(r: &CompileResult) -> String {
    let mut out = String::from("id,total_cycles,dram_bytes\n");
    for s in &r.ranked {
        let _ = writeln!(out, "{},{},{}", s.cand.id, s.est.total_cycles, s.est.dram_bytes());
    }
    out
}

pub fn trace_csv(sim: &SimResult) -> String {
    let mut out = String::from("lane,start,end,tag\n");
    for e in &sim.trace {
        let _ = writeln!(out, "{},{},{},{}", e.lane, e.start, e.end, e.tag);
    }
    out
}

fn human_bytes(b: u64) -> String {
    if b >= 1 << 20 && b.is_multiple_of(1 << 10) {
        format!("{:.2} MiB", b as f64 / (1u64 << 20) as f64)
    } else if b >= 1 << 10 {
        format!("{:.1} KiB", b as f64 / 1024.0)
    } else {
        format!("{b} B")
    }
}

/// Loop-nest listing of a candidate with every transfer at its issue point.
pub fn render_plan(hw: &HardwareModel, kernel: &Kernel, cand: &Candidate, est: &Estimate, sim: Option<&SimResult>) -> String {
    let m = &*cand.mapping;
    let mut s = String::new();
    let params: Vec<String> = kernel.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let _ = writeln!(s, "plan {}", cand.id);
    let _ = writeln!(s, "kernel {} ({})", kernel.name, params.join(", "));
    let _ = writeln!(s, "mapping {}", m.encoding);
    let spatial: Vec<String> = (0..m.dim_names.len())
        .map(|p| if m.is_dim_used(p) { m.dim_names[p].clone() } else { format!("{}=0", m.dim_names[p]) })
        .collect();
    let _ = writeln!(s, "parallel over {} ({} running cores, occupancy {:.2})", spatial.join(", "), m.num_running(), m.occupancy());
    let mut subst: Vec<String> = m.subst.iter().map(|(k, v)| format!("{k} = {v}")).collect();
    subst.sort();
    let _ = writeln!(s, "where {}", subst.join("; "));
    let n = m.nest.len();
    let line = |s: &mut String, depth: usize, text: String| {
        let _ = writeln!(s, "{}{}", "  ".repeat(depth), text);
    };
    let xfer = |p: &crate::reuse::AccessPlan| {
        let a = &kernel.accesses[p.access];
        let idx: Vec<String> = m.indices[p.access].iter().map(|e| e.to_string()).collect();
        let t = &kernel.tensors[a.tensor].name;
        let body = match a.kind {
            crate::kernelir::AccessKind::Load => format!("load {} = {}[{}]", a.id, t, idx.join(", ")),
            crate::kernelir::AccessKind::Store => {
                format!("store {}[{}] = {}", t, idx.join(", "), a.value.as_deref().unwrap_or("?"))
            }
        };
        format!(
            "{body}  # {}, {} x{}",
            p.realization.label(hw, m),
            human_bytes(p.footprint),
            p.buffers
        )
    };
    for depth in 0..=n {
        for p in cand.plans.iter().filter(|p| p.level == depth && kernel.accesses[p.access].kind == crate::kernelir::AccessKind::Load) {
            line(&mut s, depth, xfer(p));
        }
        if depth < n {
            let l = &m.nest[depth];
            line(&mut s, depth, format!("for {} in 0..{}:", l.name, l.extent));
        }
    }
    for o in &kernel.ops {
        line(&mut s, n, format!("{} = {}({})", o.id, o.kind, o.inputs.join(", ")));
    }
    for depth in (0..=n).rev() {
        for p in cand.plans.iter().filter(|p| p.level == depth && kernel.accesses[p.access].kind == crate::kernelir::AccessKind::Store) {
            line(&mut s, depth, xfer(p));
        }
    }
    let _ = writeln!(s, "live buffers: {}", human_bytes(cand.live_bytes));
    let _ = writeln!(
        s,
        "model: {} cycles ({}), dram {} read / {} written, noc {}",
        est.total_cycles,
        if est.memory_bound { "memory-bound" } else { "compute-bound" },
        human_bytes(est.dram_read_bytes),
        human_bytes(est.dram_write_bytes),
        human_bytes(est.noc_bytes)
    );
    if let Some(sim) = sim {
        let _ = writeln!(
            s,
            "simulated: {} cycles ({}), peak local memory {}",
            sim.makespan,
            if sim.memory_bound { "memory-bound" } else { "compute-bound" },
            human_bytes(sim.peak_l1_bytes)
        );
    }
    s
}

pub fn summary_table(hw: &HardwareModel, r: &CompileResult, clock_ghz: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} kernel variant(s), {} mapping(s), {} candidate(s)",
        r.kernels.len(),
        r.mappings.len(),
        r.ranked.len()
    );
    let _ = writeln!(s, "{:>4}  {:<16}  {:>12}  {:>12}  {:>12}  {:<7}  plan", "rank", "id", "model", "simulated", "dram bytes", "bound");
    for (i, sim) in r.simulated.iter().enumerate() {
        let sc = &r.ranked[i];
        let k = &r.kernels[sc.kernel];
        let params: Vec<String> = k.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let plans: Vec<String> = sc
            .cand
            .plans
            .iter()
            .map(|p| format!("{}@{}:{}", k.accesses[p.access].id, p.level, p.realization.label(hw, &sc.cand.mapping)))
            .collect();
        let _ = writeln!(
            s,
            "{:>4}  {:<16}  {:>12}  {:>12}  {:>12}  {:<7}  [{}] {} {}",
            i + 1,
            sc.cand.id,
            sc.est.total_cycles,
            sim.makespan,
            sc.est.dram_bytes(),
            if sc.est.memory_bound { "memory" } else { "compute" },
            params.join(","),
            sc.cand.mapping.encoding,
            plans.join(" ")
        );
    }
    let (w, ws) = r.winner();
    let _ = writeln!(
        s,
        "selected {} (rank {}): {} cycles simulated, {:.3} us at {} GHz",
        w.cand.id,
        r.winner + 1,
        ws.makespan,
        ws.makespan as f64 / (clock_ghz * 1000.0),
        clock_ghz
    );
    s
}
