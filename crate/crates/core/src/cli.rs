//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::Config;
use crate::hwmodel::{parse_hardware, HardwareModel, Severity};
use crate::kernelir::parse_kernel;
use crate::pipeline::{self, compile, CompileError, Workload};
use crate::simref::{simulate, SimOptions};

#[derive(Parser, Debug)]
#[command(name = "dfplan", version, about = "Map tile kernels onto spatial dataflow accelerators and cost the plans")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Rank mapping and data-movement plans, simulate the best few, pick one.
    Compile(CompileArgs),
    /// Compare the selected plan with spatial and/or temporal reuse disabled.
    Ablate(WorkArgs),
    /// Summarize and validate a hardware description.
    Describe {
        #[arg(long)]
        hw: PathBuf,
    },
}

#[derive(Args, Debug)]
struct WorkArgs {
    /// Hardware description (.hw).
    #[arg(long)]
    hw: PathBuf,
    /// Kernel file (.tk) with fixed tile sizes.
    #[arg(long, group = "work")]
    kernel: Option<PathBuf>,
    /// GEMM problem `M,N,K`, swept over block sizes.
    #[arg(long, group = "work", value_name = "M,N,K")]
    gemm: Option<String>,
    /// Attention problem `HEADS,SEQ,HEAD_DIM`, swept over block sizes.
    #[arg(long, group = "work", value_name = "H,S,D")]
    flashattention: Option<String>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of model-ranked candidates to simulate.
    #[arg(long)]
    topk: Option<usize>,
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[command(flatten)]
    work: WorkArgs,
    /// Write every ranked candidate as JSON lines, plus a `.csv` summary.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the selected plan as a loop-nest listing.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Write the selected plan's simulation trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    dump_mappings: bool,
    #[arg(long)]
    dump_candidates: bool,
    #[arg(long)]
    no_spatial_reuse: bool,
    #[arg(long)]
    no_temporal_reuse: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<CompileError> for CliError {
    fn from(e: CompileError) -> Self {
        match e {
            CompileError::Sim(_) | CompileError::Perf(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_hw(path: &Path) -> Result<HardwareModel, CliError> {
    let hw = parse_hardware(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let errs: Vec<String> =
        hw.validate().iter().filter(|d| d.severity == Severity::Error).map(|d| d.to_string()).collect();
    if !errs.is_empty() {
        return Err(CliError::Input(format!("{}: {}", path.display(), errs.join("; "))));
    }
    Ok(hw)
}

fn triple(s: &str, what: &str) -> Result<(u64, u64, u64), CliError> {
    let v: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().ok().filter(|&v| v > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Input(format!("--{what} expects three positive integers, got `{s}`")))?;
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(CliError::Input(format!("--{what} expects three positive integers, got `{s}`"))),
    }
}

fn setup(w: &WorkArgs) -> Result<(HardwareModel, Workload, Config), CliError> {
    let hw = load_hw(&w.hw)?;
    let mut cfg = match &w.config {
        Some(p) => Config::parse(&read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => Config::default(),
    };
    if let Some(k) = w.topk {
        if k == 0 {
            return Err(CliError::Input("--topk must be at least 1".into()));
        }
        cfg.topk = k;
    }
    let work = if let Some(p) = &w.kernel {
        Workload::Kernel(parse_kernel(&read(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?)
    } else if let Some(s) = &w.gemm {
        let (m, n, k) = triple(s, "gemm")?;
        Workload::Gemm { m, n, k }
    } else if let Some(s) = &w.flashattention {
        let (heads, seq, head_dim) = triple(s, "flashattention")?;
        Workload::FlashAttention { heads, seq, head_dim }
    } else {
        return Err(CliError::Input("one of --kernel, --gemm or --flashattention is required".into()));
    };
    Ok((hw, work, cfg))
}

fn clock(hw: &HardwareModel, cfg: &Config) -> f64 {
    cfg.clock_ghz.unwrap_or(*hw.clock_ghz.numer() as f64 / *hw.clock_ghz.denom() as f64)
}

fn io(e: std::io::Error) -> CliError {
    CliError::Internal(e.to_string())
}

fn cmd_compile(a: &CompileArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (hw, work, mut cfg) = setup(&a.work)?;
    cfg.no_spatial_reuse |= a.no_spatial_reuse;
    cfg.no_temporal_reuse |= a.no_temporal_reuse;
    let r = compile(&hw, &work, &cfg)?;
    if a.dump_mappings {
        for (ki, m) in &r.mappings {
            let k = &r.kernels[*ki];
            let params: Vec<String> = k.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let nest: Vec<String> = m.nest.iter().map(|l| format!("{}:{}", l.name, l.extent)).collect();
            writeln!(out, "mapping {}[{}] {} nest=({}) occupancy={:.3}", k.name, params.join(","), m.encoding, nest.join(" "), m.occupancy())
                .map_err(io)?;
        }
    }
    if a.dump_candidates {
        for s in &r.ranked {
            writeln!(out, "candidate {} {} live={} model={}", s.cand.id, s.cand.canonical, s.cand.live_bytes, s.est.total_cycles)
                .map_err(io)?;
        }
    }
    write!(out, "{}", pipeline::summary_table(&hw, &r, clock(&hw, &cfg))).map_err(io)?;
    let (w, ws) = r.winner();
    if let Some(p) = &a.report {
        write_file(p, &pipeline::report_jsonl(&hw, &r))?;
        write_file(&p.with_extension("csv"), &pipeline::report_csv(&r))?;
    }
    if let Some(p) = &a.plan {
        write_file(p, &pipeline::render_plan(&hw, &r.kernels[w.kernel], &w.cand, &w.est, Some(ws)))?;
    }
    if let Some(p) = &a.trace {
        let sim = simulate(&r.kernels[w.kernel], &hw, &w.cand, SimOptions { trace: true })
            .map_err(|e| CliError::Internal(e.to_string()))?;
        write_file(p, &pipeline::trace_csv(&sim))?;
    }
    Ok(())
}

fn cmd_ablate(a: &WorkArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (hw, work, cfg) = setup(a)?;
    writeln!(out, "{:<22}  {:>10}  {:>12}  {:>12}  {:>14}  {:>8}", "variant", "candidates", "model", "simulated", "dram bytes", "speedup")
        .map_err(io)?;
    let mut base = None;
    for (name, spatial, temporal) in [
        ("full", false, false),
        ("no-spatial-reuse", true, false),
        ("no-temporal-reuse", false, true),
        ("no-reuse", true, true),
    ] {
        let c = Config { no_spatial_reuse: spatial, no_temporal_reuse: temporal, ..cfg.clone() };
        let r = compile(&hw, &work, &c)?;
        let (w, ws) = r.winner();
        let full = *base.get_or_insert(ws.makespan);
        writeln!(
            out,
            "{:<22}  {:>10}  {:>12}  {:>12}  {:>14}  {:>7.2}x",
            name,
            r.ranked.len(),
            w.est.total_cycles,
            ws.makespan,
            ws.dram_read_bytes + ws.dram_write_bytes,
            ws.makespan as f64 / full as f64
        )
        .map_err(io)?;
    }
    Ok(())
}

fn cmd_describe(path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let hw = parse_hardware(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let diags = hw.validate();
    for d in &diags {
        writeln!(out, "{d}").map_err(io)?;
    }
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(CliError::Input(format!("{}: invalid hardware description", path.display())));
    }
    write!(out, "{}", hw.describe()).map_err(io)?;
    Ok(())
}

/// Runs the CLI; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let res = match &cli.cmd {
        Cmd::Compile(a) => cmd_compile(a, out),
        Cmd::Ablate(a) => cmd_ablate(a, out),
        Cmd::Describe { hw } => cmd_describe(hw, out),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}
