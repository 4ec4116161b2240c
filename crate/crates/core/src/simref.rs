//! Discrete-event reference simulator.
//!
//! Every running core executes the mapped loop nest as a tree of frames,
//! one per loop instance. A frame owns a DMA queue that issues, in order,
//! `L1 L2 S1 L3 S2 ... L_I S_{I-1} S_I`; iteration `i` computes once `L_i`
//! and the previous iteration are done, and `S_i` waits for that compute.
//! Transfers are fluid flows over DRAM channels, core ports and network
//! links, sharing bandwidth equally among the active flows on a resource.
//! Multicast transfers rendezvous all cores of a group before each stage.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

use crate::hwmodel::HardwareModel;
use crate::kernelir::{AccessKind, Kernel, OpKind};
use crate::mapper::Mapping;
use crate::perfmodel::{self, bandwidth, op_cycles, transfer_groups, Estimate, Group, PerfError, Resource};
use crate::reuse::{Candidate, Realization};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("simulation stalled at cycle {0} with unfinished cores")]
    Deadlock(u64),
    #[error(transparent)]
    Perf(#[from] PerfError),
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TraceEvent {
    pub lane: String,
    pub start: u64,
    pub end: u64,
    pub tag: String,
}

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct LevelStats {
    pub level: usize,
    pub mean_load_cycles: f64,
    pub mean_store_cycles: f64,
    pub mean_compute_cycles: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimResult {
    pub makespan: u64,
    pub peak_l1_bytes: u64,
    pub levels: Vec<LevelStats>,
    pub memory_bound: bool,
    pub dram_read_bytes: u64,
    pub dram_write_bytes: u64,
    pub noc_bytes: u64,
    #[serde(skip)]
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Item {
    Load(u64),
    Store(u64),
}

/// Position `k` of the DMA queue for `iters` iterations (1-based iterations).
fn queue_item(iters: u64, k: u64) -> Item {
    if k == 0 {
        Item::Load(1)
    } else if k == 2 * iters - 1 {
        Item::Store(iters)
    } else if k % 2 == 1 {
        Item::Load(k.div_ceil(2) + 1)
    } else {
        Item::Store(k / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Flow(usize, u64),
    ItemTimer(usize),
    ComputeTimer(usize),
}

struct Frame {
    core: usize,
    depth: usize,
    prefix: Vec<u64>,
    iters: u64,
    parent: Option<usize>,
    q: u64,
    busy: Option<Item>,
    outstanding: u32,
    item_start: u64,
    loads_done: u64,
    computes_done: u64,
    compute_running: bool,
    compute_start: u64,
    done: bool,
}

#[derive(Clone, Copy)]
enum Owner {
    Frame(usize),
    Coll(usize),
}

struct Flow {
    /// Bytes left as of `since`.
    remaining: f64,
    since: u64,
    rate: f64,
    /// Dense `(resource, direction)` slots.
    keys: Rc<[usize]>,
    /// Stamp of the latest scheduled completion; unique across slot reuse.
    version: u64,
    owner: Owner,
    lane: Option<(String, String, u64)>,
}

fn keys_of(f: &Option<Flow>) -> &[usize] {
    &f.as_ref().expect("live flow").keys
}

struct Coll {
    plan: usize,
    group: usize,
    bytes: u64,
    waiting: Vec<usize>,
    stage: usize,
    outstanding: u32,
}

/// Per-plan precomputed delivery structure.
struct PlanInfo {
    level: usize,
    kind: AccessKind,
    access: usize,
    footprint: u64,
    groups: Vec<Group>,
    /// Resource slots of every flow, indexed like `groups[g].stages[s][f]`.
    slots: Vec<Vec<Vec<Rc<[usize]>>>>,
    /// Group index per core id.
    group_of: Vec<usize>,
    broadcast: bool,
}

enum Work<'a> {
    Plan { kernel: &'a Kernel, hw: &'a HardwareModel, mapping: &'a Mapping, plans: Vec<PlanInfo>, clipped: bool },
    Fixed { l: u64, c: u64, s: u64 },
}

struct Engine<'a> {
    work: Work<'a>,
    extents: Vec<u64>,
    body: u64,
    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64, Ev)>>,
    frames: Vec<Frame>,
    free_frames: Vec<usize>,
    todo: Vec<usize>,
    flows: Vec<Option<Flow>>,
    free_flows: Vec<usize>,
    /// Active flows per (direction, resource).
    /// Active flows per slot.
    users: Vec<Vec<usize>>,
    bw: Vec<f64>,
    dirty: Vec<usize>,
    /// Buffer bytes of the loads and stores issued at each level.
    load_bytes: Vec<u64>,
    store_bytes: Vec<u64>,
    /// Plans issued at each level, loads then stores.
    issued: Vec<[Vec<usize>; 2]>,
    scratch: Vec<usize>,
    colls: Vec<Option<Coll>>,
    coll_index: HashMap<(usize, usize, u64), usize>,
    alloc: Vec<u64>,
    peak: Vec<u64>,
    stats: Vec<[(f64, u64); 3]>,
    makespan: u64,
    running: usize,
    finished: usize,
    dram_read: u64,
    dram_write: u64,
    noc: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((t, self.seq, ev)));
    }

    fn depth_count(&self) -> usize {
        self.extents.len()
    }

    fn new_frame(&mut self, core: usize, depth: usize, prefix: Vec<u64>, parent: Option<usize>) -> usize {
        let iters = if depth == 0 { 1 } else { self.extents[depth - 1] };
        let f = Frame {
            core,
            depth,
            prefix,
            iters,
            parent,
            q: 0,
            busy: None,
            outstanding: 0,
            item_start: 0,
            loads_done: 0,
            computes_done: 0,
            compute_running: false,
            compute_start: 0,
            done: false,
        };
        let id = match self.free_frames.pop() {
            Some(id) => {
                self.frames[id] = f;
                id
            }
            None => {
                self.frames.push(f);
                self.frames.len() - 1
            }
        };
        self.todo.push(id);
        id
    }

    /// Issue prefix of iteration `i` (1-based) of a frame.
    fn issue_prefix(&self, f: usize, i: u64) -> Vec<u64> {
        let fr = &self.frames[f];
        let mut p = fr.prefix.clone();
        if fr.depth > 0 {
            p.push(i - 1);
        }
        p
    }

    fn advance(&mut self, f: usize) {
        loop {
            let mut progressed = false;
            let (busy, q, iters, computes_done, loads_done, compute_running, done) = {
                let fr = &self.frames[f];
                (fr.busy, fr.q, fr.iters, fr.computes_done, fr.loads_done, fr.compute_running, fr.done)
            };
            if done {
                return;
            }
            if busy.is_none() && q < 2 * iters {
                let item = queue_item(iters, q);
                let ready = match item {
                    Item::Load(_) => true,
                    Item::Store(i) => computes_done >= i,
                };
                if ready {
                    self.start_item(f, item);
                    progressed = true;
                }
            }
            if !compute_running && computes_done < iters && loads_done > computes_done {
                self.start_compute(f, computes_done + 1);
                progressed = true;
            }
            let fr = &self.frames[f];
            if fr.computes_done == fr.iters && fr.q == 2 * fr.iters && fr.busy.is_none() {
                self.finish_frame(f);
                return;
            }
            if !progressed {
                return;
            }
        }
    }

    fn start_item(&mut self, f: usize, item: Item) {
        let (i, kind) = match item {
            Item::Load(i) => (i, AccessKind::Load),
            Item::Store(i) => (i, AccessKind::Store),
        };
        let depth = self.frames[f].depth;
        {
            let fr = &mut self.frames[f];
            fr.busy = Some(item);
            fr.q += 1;
            fr.item_start = self.now;
            fr.outstanding = 0;
        }
        if let Work::Fixed { l, s, .. } = self.work {
            let d = if depth == self.depth_count() { if kind == AccessKind::Load { l } else { s } } else { 0 };
            self.frames[f].outstanding = 1;
            self.push(self.now + d, Ev::ItemTimer(f));
            return;
        }
        if kind == AccessKind::Load {
            let core = self.frames[f].core;
            self.allocate(core, self.load_bytes[depth]);
        }
        let slot = kind as usize;
        if !self.issued[depth][slot].is_empty() {
            let prefix = self.issue_prefix(f, i);
            for j in 0..self.issued[depth][slot].len() {
                let p = self.issued[depth][slot][j];
                self.frames[f].outstanding += 1;
                self.launch(f, p, &prefix);
            }
        }
        if self.frames[f].outstanding == 0 {
            self.finish_item(f);
        }
    }

    fn allocate(&mut self, core: usize, bytes: u64) {
        self.alloc[core] += bytes;
        self.peak[core] = self.peak[core].max(self.alloc[core]);
    }

    fn bytes_for(&self, p: usize, core: usize, prefix: &[u64]) -> u64 {
        let Work::Plan { kernel, hw, mapping, plans, clipped } = &self.work else { return 0 };
        let info = &plans[p];
        if !*clipped {
            return info.footprint;
        }
        perfmodel::issue_bytes(kernel, mapping, info.access, info.level, &hw.core_index(core), prefix)
    }

    fn launch(&mut self, f: usize, p: usize, prefix: &[u64]) {
        let core = self.frames[f].core;
        let Work::Plan { plans, .. } = &self.work else { unreachable!() };
        let info = &plans[p];
        let gi = info.group_of[core];
        if !info.broadcast {
            let kind = info.kind;
            let slots = info.slots[gi][0][0].clone();
            let lane = self.trace.is_some().then(|| self.lane_tag(p, &info.groups[gi].stages[0][0].resources));
            let bytes = self.bytes_for(p, core, prefix);
            self.count_dram(kind, bytes);
            self.start_flow(bytes, slots, Owner::Frame(f), lane);
            return;
        }
        let producer = info.groups[gi].stages[0][0].src_core;
        let members = info.groups[gi].members.len();
        let issue = prefix.iter().zip(&self.extents).fold(0u64, |acc, (&i, &e)| acc * e + i);
        let key = (p, producer, issue);
        let cid = match self.coll_index.get(&key) {
            Some(&c) => c,
            None => {
                let bytes = self.bytes_for(p, producer, prefix);
                self.colls.push(Some(Coll { plan: p, group: gi, bytes, waiting: Vec::new(), stage: 0, outstanding: 0 }));
                let c = self.colls.len() - 1;
                self.coll_index.insert(key, c);
                c
            }
        };
        let coll = self.colls[cid].as_mut().unwrap();
        coll.waiting.push(f);
        if coll.waiting.len() == members {
            self.coll_index.remove(&key);
            self.start_stage(cid);
        }
    }

    fn lane_tag(&self, p: usize, res: &[Resource]) -> (String, String, u64) {
        let Work::Plan { kernel, plans, .. } = &self.work else { unreachable!() };
        let lane = match res.first() {
            Some(Resource::Channel(c)) => format!("dram_ch{c}"),
            Some(Resource::Link(n, l)) => format!("net{n}_link{l}"),
            Some(Resource::Port(c)) => format!("core{c}_port"),
            None => "none".into(),
        };
        (lane, kernel.accesses[plans[p].access].id.clone(), self.now)
    }

    fn count_dram(&mut self, kind: AccessKind, bytes: u64) {
        match kind {
            AccessKind::Load => self.dram_read += bytes,
            AccessKind::Store => self.dram_write += bytes,
        }
    }

    fn start_stage(&mut self, cid: usize) {
        let (p, gi, stage, bytes) = {
            let c = self.colls[cid].as_ref().unwrap();
            (c.plan, c.group, c.stage, c.bytes)
        };
        let Work::Plan { plans, .. } = &self.work else { unreachable!() };
        let info = &plans[p];
        let kind = info.kind;
        let nflows = info.slots[gi][stage].len();
        if stage == 0 {
            self.count_dram(kind, bytes);
        } else {
            self.noc += bytes * info.slots[gi][stage].iter().map(|r| r.len() as u64).sum::<u64>();
        }
        self.colls[cid].as_mut().unwrap().outstanding = nflows as u32;
        for k in 0..nflows {
            let Work::Plan { plans, .. } = &self.work else { unreachable!() };
            let slots = plans[p].slots[gi][stage][k].clone();
            let lane = self.trace.is_some().then(|| self.lane_tag(p, &plans[p].groups[gi].stages[stage][k].resources));
            self.start_flow(bytes, slots, Owner::Coll(cid), lane);
        }
    }

    fn start_flow(&mut self, bytes: u64, keys: Rc<[usize]>, owner: Owner, lane: Option<(String, String, u64)>) {
        let flow = Flow { remaining: bytes as f64, since: self.now, rate: 0.0, keys, version: 0, owner, lane };
        let id = match self.free_flows.pop() {
            Some(id) => {
                self.flows[id] = Some(flow);
                id
            }
            None => {
                self.flows.push(Some(flow));
                self.flows.len() - 1
            }
        };
        for &k in keys_of(&self.flows[id]) {
            self.users[k].push(id);
            self.dirty.push(k);
        }
    }

    fn finish_flow(&mut self, id: usize) {
        let flow = self.flows[id].take().unwrap();
        self.free_flows.push(id);
        for k in flow.keys.iter() {
            self.users[*k].retain(|&a| a != id);
            self.dirty.push(*k);
        }
        if let (Some(tr), Some((lane, tag, start))) = (self.trace.as_mut(), flow.lane) {
            tr.push(TraceEvent { lane, start, end: self.now, tag });
        }
        match flow.owner {
            Owner::Frame(f) => self.transfer_done(f),
            Owner::Coll(c) => {
                let coll = self.colls[c].as_mut().unwrap();
                coll.outstanding -= 1;
                if coll.outstanding > 0 {
                    return;
                }
                coll.stage += 1;
                let nstages = match &self.work {
                    Work::Plan { plans, .. } => plans[coll.plan].groups[coll.group].stages.len(),
                    Work::Fixed { .. } => 0,
                };
                if coll.stage < nstages {
                    self.start_stage(c);
                } else {
                    let coll = self.colls[c].take().unwrap();
                    for f in coll.waiting {
                        self.transfer_done(f);
                    }
                }
            }
        }
    }

    fn transfer_done(&mut self, f: usize) {
        let fr = &mut self.frames[f];
        fr.outstanding -= 1;
        if fr.outstanding == 0 {
            self.finish_item(f);
        }
    }

    fn finish_item(&mut self, f: usize) {
        let (item, depth, core, start) = {
            let fr = &mut self.frames[f];
            let item = fr.busy.take().unwrap();
            if let Item::Load(i) = item {
                fr.loads_done = i;
            }
            (item, fr.depth, fr.core, fr.item_start)
        };
        let dur = self.now - start;
        let slot = if matches!(item, Item::Load(_)) { 0 } else { 1 };
        // masked iterations move nothing; keep them out of the means
        if dur > 0 {
            self.stats[depth][slot].0 += dur as f64;
            self.stats[depth][slot].1 += 1;
        }
        if let Item::Store(_) = item {
            self.alloc[core] -= self.store_bytes[depth];
        }
        if let Some(tr) = self.trace.as_mut().filter(|_| dur > 0) {
            let tag = match item {
                Item::Load(i) => format!("load L{depth}.{i}"),
                Item::Store(i) => format!("store L{depth}.{i}"),
            };
            tr.push(TraceEvent { lane: format!("core{core}"), start, end: self.now, tag });
        }
        self.todo.push(f);
    }

    fn masked(&self, f: usize) -> bool {
        let Work::Plan { hw, mapping, .. } = &self.work else { return false };
        if !mapping.is_masked() {
            return false;
        }
        let fr = &self.frames[f];
        let mut iter = fr.prefix.clone();
        iter.push(fr.computes_done);
        iter.resize(mapping.nest.len(), 0);
        mapping.grid_point(&hw.core_index(fr.core), &iter).is_none()
    }

    fn start_compute(&mut self, f: usize, i: u64) {
        let (core, depth) = (self.frames[f].core, self.frames[f].depth);
        self.allocate(core, self.store_bytes[depth]);
        {
            let fr = &mut self.frames[f];
            fr.compute_running = true;
            fr.compute_start = self.now;
        }
        if depth < self.depth_count() {
            let prefix = self.issue_prefix(f, i);
            self.new_frame(core, depth + 1, prefix, Some(f));
        } else {
            let dur = match self.work {
                Work::Fixed { c, .. } => c,
                Work::Plan { .. } => {
                    if self.masked(f) {
                        0
                    } else {
                        self.body
                    }
                }
            };
            self.push(self.now + dur, Ev::ComputeTimer(f));
        }
    }

    fn finish_compute(&mut self, f: usize) {
        let (core, depth, start) = {
            let fr = &mut self.frames[f];
            fr.compute_running = false;
            fr.computes_done += 1;
            (fr.core, fr.depth, fr.compute_start)
        };
        self.alloc[core] -= self.load_bytes[depth];
        if self.now > start {
            self.stats[depth][2].0 += (self.now - start) as f64;
            self.stats[depth][2].1 += 1;
        }
        if depth == self.depth_count() {
            if let Some(tr) = self.trace.as_mut() {
                if self.now > start {
                    tr.push(TraceEvent { lane: format!("core{core}"), start, end: self.now, tag: "compute".into() });
                }
            }
        }
        self.todo.push(f);
    }

    fn finish_frame(&mut self, f: usize) {
        self.frames[f].done = true;
        match self.frames[f].parent {
            Some(p) => {
                self.free_frames.push(f);
                self.finish_compute(p);
            }
            None => {
                self.finished += 1;
                self.makespan = self.makespan.max(self.now);
            }
        }
    }

    /// Re-rates the flows whose sharer counts changed since the last call.
    fn reschedule(&mut self) {
        let mut touched = std::mem::take(&mut self.scratch);
        touched.clear();
        for &k in &self.dirty {
            touched.extend(&self.users[k]);
        }
        self.dirty.clear();
        touched.sort_unstable();
        touched.dedup();
        for &id in &touched {
            let flow = self.flows[id].as_ref().unwrap();
            let rate = flow
                .keys
                .iter()
                .map(|&k| self.bw[k] / self.users[k].len() as f64)
                .fold(f64::INFINITY, f64::min);
            let now = self.now;
            self.seq += 1;
            let stamp = self.seq;
            let flow = self.flows[id].as_mut().unwrap();
            flow.remaining = (flow.remaining - flow.rate * (now - flow.since) as f64).max(0.0);
            flow.since = now;
            flow.rate = rate;
            flow.version = stamp;
            let dt = if flow.remaining <= 1e-6 { 0 } else { (flow.remaining / rate - 1e-9).ceil().max(0.0) as u64 };
            let v = flow.version;
            self.push(now + dt, Ev::Flow(id, v));
        }
        self.scratch = touched;
    }

    fn drain_todo(&mut self) {
        while let Some(f) = self.todo.pop() {
            self.advance(f);
        }
    }

    fn run(&mut self, cores: &[usize]) -> Result<(), SimError> {
        self.running = cores.len();
        for &c in cores {
            self.new_frame(c, 0, Vec::new(), None);
        }
        self.drain_todo();
        loop {
            if !self.dirty.is_empty() {
                self.reschedule();
            }
            let Some(Reverse((t, _, ev))) = self.heap.pop() else { break };
            self.now = t;
            match ev {
                Ev::Flow(id, v) => {
                    if self.flows[id].as_ref().is_some_and(|f| f.version == v) {
                        self.finish_flow(id);
                    }
                }
                Ev::ItemTimer(f) => self.transfer_done(f),
                Ev::ComputeTimer(f) => self.finish_compute(f),
            }
            self.drain_todo();
        }
        if self.finished != self.running {
            return Err(SimError::Deadlock(self.now));
        }
        Ok(())
    }

    fn new(work: Work<'a>, extents: Vec<u64>, body: u64, ncores: usize, bw: Vec<f64>, trace: bool) -> Self {
        let depth = extents.len();
        let mut load_bytes = vec![0; depth + 1];
        let mut store_bytes = vec![0; depth + 1];
        let mut issued: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; depth + 1];
        if let Work::Plan { plans, .. } = &work {
            for (i, p) in plans.iter().enumerate() {
                issued[p.level][p.kind as usize].push(i);
                match p.kind {
                    AccessKind::Load => load_bytes[p.level] += p.footprint,
                    AccessKind::Store => store_bytes[p.level] += p.footprint,
                }
            }
        }
        Engine {
            work,
            extents,
            body,
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            frames: Vec::new(),
            free_frames: Vec::new(),
            todo: Vec::new(),
            flows: Vec::new(),
            free_flows: Vec::new(),
            users: vec![Vec::new(); bw.len()],
            bw,
            dirty: Vec::new(),
            load_bytes,
            store_bytes,
            issued,
            scratch: Vec::new(),
            colls: Vec::new(),
            coll_index: HashMap::new(),
            alloc: vec![0; ncores],
            peak: vec![0; ncores],
            stats: vec![[(0.0, 0); 3]; depth + 1],
            makespan: 0,
            running: 0,
            finished: 0,
            dram_read: 0,
            dram_write: 0,
            noc: 0,
            trace: trace.then(Vec::new),
        }
    }
}

/// Time of `iters` pipelined iterations with fixed phase lengths, run
/// through the same frame scheduler as [`simulate`].
pub fn simulate_pipeline(iters: u64, l: u64, c: u64, s: u64) -> Result<u64, SimError> {
    if iters == 0 {
        return Err(PerfError::ZeroExtent.into());
    }
    let mut e = Engine::new(Work::Fixed { l, c, s }, vec![iters], c, 1, Vec::new(), false);
    e.run(&[0])?;
    Ok(e.makespan)
}

/// Per-iteration body time by list scheduling ops in order: each op starts
/// once its inputs are ready and a unit of its kind is free.
pub fn list_schedule_body(hw: &HardwareModel, kernel: &Kernel) -> Result<u64, PerfError> {
    let mut ready: BTreeMap<&str, u64> = BTreeMap::new();
    let mut unit_free: BTreeMap<OpKind, u64> = BTreeMap::new();
    let mut end = 0;
    for op in &kernel.ops {
        let deps = op.inputs.iter().filter_map(|i| ready.get(i.as_str())).copied().max().unwrap_or(0);
        let start = deps.max(unit_free.get(&op.kind).copied().unwrap_or(0));
        let fin = start + op_cycles(hw, op.kind, &op.shape, op.reduce)?;
        unit_free.insert(op.kind, fin);
        ready.insert(&op.id, fin);
        end = end.max(fin);
    }
    Ok(end)
}

pub fn simulate(kernel: &Kernel, hw: &HardwareModel, cand: &Candidate, opts: SimOptions) -> Result<SimResult, SimError> {
    let m: &Mapping = &cand.mapping;
    let body = list_schedule_body(hw, kernel)?;
    let clipped = m.is_masked()
        || kernel.accesses.iter().any(|a| {
            let t = &kernel.tensors[a.tensor];
            t.shape.iter().zip(&a.tile).any(|(s, tl)| s % tl != 0)
        });
    // every (resource, direction) pair gets a dense slot
    let mut slot_of: HashMap<(Resource, AccessKind), usize> = HashMap::new();
    let mut bw: Vec<f64> = Vec::new();
    let plans: Vec<PlanInfo> = cand
        .plans
        .iter()
        .map(|p| {
            let kind = kernel.accesses[p.access].kind;
            let groups = transfer_groups(hw, m, &p.realization);
            let mut group_of = vec![usize::MAX; hw.num_cores()];
            for (gi, g) in groups.iter().enumerate() {
                for &c in &g.members {
                    group_of[c] = gi;
                }
            }
            let slots = groups
                .iter()
                .map(|g| {
                    g.stages
                        .iter()
                        .map(|st| {
                            st.iter()
                                .map(|f| {
                                    f.resources
                                        .iter()
                                        .map(|&r| {
                                            *slot_of.entry((r, kind)).or_insert_with(|| {
                                                let b = bandwidth(hw, r);
                                                bw.push(*b.numer() as f64 / *b.denom() as f64);
                                                bw.len() - 1
                                            })
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            PlanInfo {
                level: p.level,
                kind,
                access: p.access,
                footprint: p.footprint,
                groups,
                slots,
                group_of,
                broadcast: matches!(p.realization, Realization::Broadcast(_)),
            }
        })
        .collect();
    let extents: Vec<u64> = m.nest.iter().map(|l| l.extent).collect();
    let cores: Vec<usize> = m.active_cores().iter().map(|c| hw.core_id(c)).collect();
    let work = Work::Plan { kernel, hw, mapping: m, plans, clipped };
    let mut e = Engine::new(work, extents, body, hw.num_cores(), bw, opts.trace);
    e.run(&cores)?;
    let levels: Vec<LevelStats> = e
        .stats
        .iter()
        .enumerate()
        .map(|(d, s)| {
            let mean = |(sum, n): (f64, u64)| if n == 0 { 0.0 } else { sum / n as f64 };
            LevelStats {
                level: d,
                mean_load_cycles: mean(s[0]),
                mean_store_cycles: mean(s[1]),
                mean_compute_cycles: mean(s[2]),
            }
        })
        .collect();
    let memory_bound = levels.iter().any(|l| l.mean_load_cycles + l.mean_store_cycles > l.mean_compute_cycles);
    let mut trace = e.trace.take().unwrap_or_default();
    trace.sort_by(|a, b| (a.start, a.end, &a.lane, &a.tag).cmp(&(b.start, b.end, &b.lane, &b.tag)));
    Ok(SimResult {
        makespan: e.makespan,
        peak_l1_bytes: e.peak.iter().copied().max().unwrap_or(0),
        levels,
        memory_bound,
        dram_read_bytes: e.dram_read,
        dram_write_bytes: e.dram_write,
        noc_bytes: e.noc,
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub id: String,
    pub model_cycles: u64,
    pub sim_cycles: u64,
    /// `max(model, sim) / min(model, sim) - 1`.
    pub error: f64,
    pub model_memory_bound: bool,
    pub sim_memory_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonSummary {
    pub rows: Vec<Comparison>,
    pub geomean_error: f64,
    pub binding_agreement: f64,
}

pub fn relative_error(model: u64, sim: u64) -> f64 {
    let (a, b) = (model.max(1) as f64, sim.max(1) as f64);
    a.max(b) / a.min(b) - 1.0
}

/// Model against simulator over a candidate set.
pub fn compare(kernel: &Kernel, hw: &HardwareModel, cands: &[(&Candidate, Estimate)]) -> Result<ComparisonSummary, SimError> {
    use rayon::prelude::*;
    let rows: Vec<Comparison> = cands
        .par_iter()
        .map(|(c, est)| {
            let sim = simulate(kernel, hw, c, SimOptions::default())?;
            Ok(Comparison {
                id: c.id.clone(),
                model_cycles: est.total_cycles,
                sim_cycles: sim.makespan,
                error: relative_error(est.total_cycles, sim.makespan),
                model_memory_bound: est.memory_bound,
                sim_memory_bound: sim.memory_bound,
            })
        })
        .collect::<Result<_, SimError>>()?;
    let n = rows.len().max(1) as f64;
    let geomean = (rows.iter().map(|r| (1.0 + r.error).ln()).sum::<f64>() / n).exp() - 1.0;
    let agree = rows.iter().filter(|r| r.model_memory_bound == r.sim_memory_bound).count() as f64 / n;
    Ok(ComparisonSummary { rows, geomean_error: geomean, binding_agreement: agree })
}

/// Simulates the candidates and returns the one with the smallest makespan,
/// ties broken by id.
pub fn select_final<'c>(
    kernel: &Kernel,
    hw: &HardwareModel,
    cands: &[&'c Candidate],
) -> Result<Option<(&'c Candidate, SimResult)>, SimError> {
    use rayon::prelude::*;
    let mut sims: Vec<(&Candidate, SimResult)> = cands
        .par_iter()
        .map(|c| simulate(kernel, hw, c, SimOptions::default()).map(|s| (*c, s)))
        .collect::<Result<_, _>>()?;
    sims.sort_by(|a, b| (a.1.makespan, &a.0.id).cmp(&(b.1.makespan, &b.0.id)));
    Ok(sims.into_iter().next())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hwmodel::{parse_hardware, samples};
    use crate::kernelir::{gemm, GemmShape};
    use crate::mapper::enumerate_mappings;
    use crate::perfmodel::{estimate, loop_time};
    use std::sync::Arc;
    use crate::reuse::{enumerate_candidates, ReuseOptions};

    #[test]
    fn queue_order() {
        let order: Vec<Item> = (0..8).map(|k| queue_item(4, k)).collect();
        use Item::*;
        assert_eq!(order, vec![Load(1), Load(2), Store(1), Load(3), Store(2), Load(4), Store(3), Store(4)]);
        assert_eq!((0..2).map(|k| queue_item(1, k)).collect::<Vec<_>>(), vec![Load(1), Store(1)]);
    }

    #[test]
    fn pipeline_matches_formula() {
        for (i, l, c, s) in [(1, 3, 5, 2), (2, 3, 5, 2), (2, 7, 1, 4), (5, 0, 3, 0), (6, 4, 2, 9), (3, 1, 1, 1)] {
            assert_eq!(simulate_pipeline(i, l, c, s).unwrap(), loop_time(i, l, c, s).unwrap(), "{i} {l} {c} {s}");
        }
    }

    #[test]
    fn gemm_sim_close_to_model() {
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let k = gemm(&GemmShape { m: 1024, n: 1024, k: 1024, bm: 128, bn: 128, bk: 128, elem_bytes: 2 });
        let m = Arc::new(enumerate_mappings(&k, &hw, 512).unwrap().into_iter().find(|m| m.encoding == "m:x,n:y").unwrap());
        for c in enumerate_candidates(&k, &hw, &m, &ReuseOptions::default()) {
            let est = estimate(&k, &hw, &c).unwrap();
            let sim = simulate(&k, &hw, &c, SimOptions::default()).unwrap();
            let tr = perfmodel::traffic(&k, &hw, &c);
            assert_eq!(sim.dram_read_bytes, tr.dram_read_bytes);
            assert_eq!(sim.dram_write_bytes, tr.dram_write_bytes);
            assert_eq!(sim.noc_bytes, tr.noc_bytes);
            assert!(sim.peak_l1_bytes <= c.live_bytes, "{} > {}", sim.peak_l1_bytes, c.live_bytes);
            let err = relative_error(est.total_cycles, sim.makespan);
            assert!(err < 0.5, "{}: model {} sim {}", c.canonical, est.total_cycles, sim.makespan);
        }
    }

    #[test]
    fn reused_flow_slots_respect_channel_bandwidth() {
        // 16 active cores on two channels, each core pulling 40 KiB per step
        let hw = parse_hardware(samples::WORMHOLE).unwrap();
        let k = gemm(&GemmShape { m: 512, n: 512, k: 2048, bm: 256, bn: 64, bk: 64, elem_bytes: 2 });
        let m = Arc::new(enumerate_mappings(&k, &hw, 512).unwrap().into_iter().find(|m| m.encoding == "m:y,n:x").unwrap());
        assert_eq!(m.active_cores().len(), 16);
        let c = enumerate_candidates(&k, &hw, &m, &ReuseOptions::default())
            .into_iter()
            .find(|c| c.plans.iter().all(|p| p.realization == Realization::Global && (p.level == 3 || p.access == 2)))
            .unwrap();
        let sim = simulate(&k, &hw, &c, SimOptions::default()).unwrap();
        let per_channel = sim.dram_read_bytes / 2;
        assert!(sim.makespan >= per_channel / 36, "{} < {}", sim.makespan, per_channel / 36);
    }
}
