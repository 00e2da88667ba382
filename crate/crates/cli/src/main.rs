//! Command-line front end: assemble kernels, run simulations, sweep
//! design-space points, disassemble images, and inspect traces.
//!
//! Exit codes: 0 on success, the kernel's own exit code after a clean run,
//! 1 on a simulation fault, 2 on usage or input errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use rvsimt::bench;
use rvsimt::config::SimConfig;
use rvsimt::exec::OpClass;
use rvsimt::gpu::Gpu;
use rvsimt::isa::{asm, disasm};
use rvsimt::runtime::{self, LaunchConfig};
use rvsimt::stats::StatsReport;
use rvsimt::timing::{self, RunOptions};
use rvsimt::trace::{self, TraceRecord};

#[derive(Parser)]
#[command(name = "rvsimt", version, about = "SIMT GPGPU simulator for RV32IM + warp control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a kernel source file into a flat binary image.
    Asm {
        /// Assembly source file.
        input: PathBuf,
        /// Output image path.
        #[arg(short, long)]
        output: PathBuf,
        /// Image base address.
        #[arg(long, value_parser = parse_u32, default_value = "0")]
        origin: u32,
        /// Also write the symbol table (one `name 0xADDR` per line).
        #[arg(long)]
        symbols: Option<PathBuf>,
    },
    /// Run a kernel image under a launch descriptor.
    Run {
        /// Machine configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Flat binary kernel image.
        #[arg(long)]
        image: PathBuf,
        /// Image load address.
        #[arg(long, value_parser = parse_u32, default_value = "0")]
        origin: u32,
        /// Launch descriptor (TOML).
        #[arg(long)]
        launch: PathBuf,
        /// Symbol table for resolving a named entry point.
        #[arg(long)]
        symbols: Option<PathBuf>,
        /// Write the stats document here instead of stdout.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Record a trace of scheduler decisions and retirements.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the bundled benchmarks over (warps, threads) design points.
    Sweep {
        /// Sweep specification (TOML).
        spec: PathBuf,
        /// Write the result table here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Disassemble a flat binary image.
    Disasm {
        image: PathBuf,
        #[arg(long, value_parser = parse_u32, default_value = "0")]
        origin: u32,
    },
    /// Filter or summarize a recorded trace.
    TraceDump {
        trace: PathBuf,
        /// Keep only records of this warp.
        #[arg(long)]
        warp: Option<u32>,
        /// Keep only records of this core.
        #[arg(long)]
        core: Option<u32>,
        /// Print per-warp retirement counts instead of records.
        #[arg(long)]
        summary: bool,
    },
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let (body, radix) = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => (hex, 16),
        None => (s, 10),
    };
    u32::from_str_radix(body, radix).map_err(|e| e.to_string())
}

/// Launch descriptor file contents.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaunchFile {
    grid: [u32; 3],
    local: [u32; 3],
    /// Entry point: an address, or a symbol name resolved via `--symbols`.
    /// Defaults to the image origin.
    entry: Option<toml::Value>,
    #[serde(default)]
    args: Vec<u32>,
    #[serde(default)]
    data: Vec<DataSection>,
}

/// Initial memory contents written before launch.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    addr: u32,
    #[serde(default)]
    words: Vec<u32>,
    /// Raw bytes loaded from a file (relative to the descriptor).
    file: Option<PathBuf>,
}

/// Sweep specification file contents.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    /// Benchmark names; defaults to the whole bundled suite.
    benchmarks: Option<Vec<String>>,
    /// (warps, threads) points; the first is the normalization baseline.
    points: Vec<(u32, u32)>,
    /// Benchmark size knob (0 = default sizes).
    #[serde(default)]
    size: u32,
    /// Base machine configuration applied to every point.
    #[serde(default)]
    base: SimConfig,
    /// Energy-proxy weights per op class.
    #[serde(default)]
    energy: EnergyWeights,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EnergyWeights {
    alu: f64,
    mul: f64,
    div: f64,
    load: f64,
    store: f64,
    branch: f64,
    simt: f64,
    csr: f64,
    ecall: f64,
    /// Static cost charged per cycle.
    cycle: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            alu: 1.0,
            mul: 3.0,
            div: 10.0,
            load: 6.0,
            store: 6.0,
            branch: 1.0,
            simt: 1.0,
            csr: 1.0,
            ecall: 1.0,
            cycle: 0.2,
        }
    }
}

impl EnergyWeights {
    fn weight(&self, class: OpClass) -> f64 {
        match class {
            OpClass::Alu => self.alu,
            OpClass::Mul => self.mul,
            OpClass::Div => self.div,
            OpClass::Load => self.load,
            OpClass::Store => self.store,
            OpClass::Branch => self.branch,
            OpClass::Simt => self.simt,
            OpClass::Csr => self.csr,
            OpClass::Ecall => self.ecall,
        }
    }

    fn proxy(&self, stats: &StatsReport) -> f64 {
        let ops: f64 = OpClass::ALL
            .iter()
            .map(|&c| stats.class_count(c) as f64 * self.weight(c))
            .sum();
        ops + stats.cycles as f64 * self.cycle
    }
}

fn read_symbols(path: &Path) -> Result<BTreeMap<String, u32>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading symbols {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, addr) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| anyhow!("{}:{}: expected `name address`", path.display(), n + 1))?;
        map.insert(name.to_string(), parse_u32(addr.trim()).map_err(|e| anyhow!(e))?);
    }
    Ok(map)
}

fn resolve_entry(
    entry: &Option<toml::Value>,
    origin: u32,
    symbols: &Option<BTreeMap<String, u32>>,
) -> Result<u32> {
    match entry {
        None => Ok(origin),
        Some(toml::Value::Integer(v)) => Ok(u32::try_from(*v).context("entry out of range")?),
        Some(toml::Value::String(name)) => {
            let syms = symbols
                .as_ref()
                .ok_or_else(|| anyhow!("named entry `{name}` needs --symbols"))?;
            syms.get(name).copied().ok_or_else(|| anyhow!("entry symbol `{name}` not found"))
        }
        Some(other) => bail!("entry must be an address or a symbol name, got {other:?}"),
    }
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_asm(
    input: &Path,
    output: &Path,
    origin: u32,
    symbols: &Option<PathBuf>,
) -> Result<ExitCode> {
    let src = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let assembled = asm::assemble(&src, origin)
        .map_err(|e| anyhow!("{}: {e}", input.display()))?;
    std::fs::write(output, &assembled.image)
        .with_context(|| format!("writing {}", output.display()))?;
    if let Some(path) = symbols {
        let mut text = String::new();
        for (name, addr) in &assembled.symbols {
            text.push_str(&format!("{name} 0x{addr:08x}\n"));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: &Option<PathBuf>,
    image: &Path,
    origin: u32,
    launch_path: &Path,
    symbols: &Option<PathBuf>,
    stats_path: &Option<PathBuf>,
    trace_path: &Option<PathBuf>,
) -> Result<ExitCode> {
    let cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?;
            SimConfig::from_toml(&text).map_err(|e| anyhow!("{}: {e}", p.display()))?
        }
        None => SimConfig::default(),
    };

    let launch_text = std::fs::read_to_string(launch_path)
        .with_context(|| format!("reading {}", launch_path.display()))?;
    let launch_file: LaunchFile = toml::from_str(&launch_text)
        .map_err(|e| anyhow!("{}: {e}", launch_path.display()))?;
    let syms = symbols.as_ref().map(|p| read_symbols(p)).transpose()?;
    let entry = resolve_entry(&launch_file.entry, origin, &syms)?;

    let mut gpu = Gpu::new(cfg).map_err(|e| anyhow!(e))?;
    let bytes =
        std::fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    gpu.mem.load_image(origin, &bytes);
    for section in &launch_file.data {
        if let Some(rel) = &section.file {
            let path = launch_path.parent().unwrap_or(Path::new(".")).join(rel);
            let raw = std::fs::read(&path)
                .with_context(|| format!("reading data file {}", path.display()))?;
            gpu.mem.load_image(section.addr, &raw);
        }
        for (i, w) in section.words.iter().enumerate() {
            gpu.mem
                .write_u32(section.addr + 4 * i as u32, *w)
                .map_err(|e| anyhow!("data section at {:#x}: {e}", section.addr))?;
        }
    }

    let launch = LaunchConfig {
        grid: launch_file.grid,
        local: launch_file.local,
        entry,
        args: launch_file.args.clone(),
    };
    let outcome = runtime::spawn_kernel(&mut gpu, &launch, RunOptions { trace: trace_path.is_some() })
        .map_err(|e| anyhow!("launch: {e}"))?;

    write_or_print(stats_path, &outcome.stats.to_document())?;
    if let Some(path) = trace_path {
        std::fs::write(path, trace::to_text(&outcome.trace))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if !gpu.console.is_empty() {
        eprint!("{}", String::from_utf8_lossy(&gpu.console));
    }

    if outcome.stats.faulted() {
        eprintln!(
            "fault: {}",
            outcome.stats.fault.as_ref().map(|f| f.detail.as_str()).unwrap_or("unknown")
        );
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::from(outcome.stats.exit_code.min(255) as u8))
}

fn cmd_sweep(spec_path: &Path, output: &Option<PathBuf>) -> Result<ExitCode> {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: SweepFile =
        toml::from_str(&text).map_err(|e| anyhow!("{}: {e}", spec_path.display()))?;
    if spec.points.is_empty() {
        bail!("sweep needs at least one (warps, threads) point");
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in &spec.points {
        if !seen.insert(*p) {
            bail!("duplicate sweep point ({}, {})", p.0, p.1);
        }
    }
    let names: Vec<String> = match &spec.benchmarks {
        Some(list) => list.clone(),
        None => bench::NAMES.iter().map(|s| s.to_string()).collect(),
    };

    let mut table = String::from("benchmark,warps,threads,cycles,instructions,normalized,energy_proxy\n");
    for name in &names {
        let mut baseline: Option<u64> = None;
        for &(warps, threads) in &spec.points {
            let mut cfg = spec.base.clone();
            cfg.machine.warps = warps;
            cfg.machine.threads = threads;
            cfg.validate().map_err(|e| anyhow!("point ({warps},{threads}): {e}"))?;
            let spec_b = bench::build_sized(name, &cfg, spec.size)
                .ok_or_else(|| anyhow!("unknown benchmark `{name}`"))?;
            let mut gpu = Gpu::new(cfg).map_err(|e| anyhow!(e))?;
            spec_b.load_into(&mut gpu).map_err(|e| anyhow!(e))?;
            let out = runtime::spawn_kernel(&mut gpu, &spec_b.launch, RunOptions::default())
                .map_err(|e| anyhow!("{name} ({warps},{threads}): {e}"))?;
            if let Some(f) = &out.stats.fault {
                bail!("{name} ({warps},{threads}) faulted: {}", f.detail);
            }
            spec_b
                .verify(&gpu.mem)
                .map_err(|e| anyhow!("{name} ({warps},{threads}) wrong result: {e}"))?;
            let cycles = out.stats.cycles;
            let base = *baseline.get_or_insert(cycles);
            let normalized = cycles as f64 / base as f64;
            let energy = spec.energy.proxy(&out.stats);
            table.push_str(&format!(
                "{name},{warps},{threads},{cycles},{},{normalized:.4},{energy:.1}\n",
                out.stats.instructions
            ));
        }
    }
    write_or_print(output, &table)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_disasm(image: &Path, origin: u32) -> Result<ExitCode> {
    let bytes = std::fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    if bytes.len() % 4 != 0 {
        bail!("{}: image length {} is not a multiple of 4", image.display(), bytes.len());
    }
    print!("{}", disasm::to_listing(&bytes, origin));
    Ok(ExitCode::SUCCESS)
}

fn cmd_trace_dump(
    path: &Path,
    warp: Option<u32>,
    core: Option<u32>,
    summary: bool,
) -> Result<ExitCode> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records = trace::parse(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let keep = |r: &TraceRecord| {
        warp.map(|w| r.warp() == w).unwrap_or(true) && core.map(|c| r.core() == c).unwrap_or(true)
    };
    if summary {
        let mut retired: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut last_cycle = 0;
        for r in records.iter().filter(|r| keep(r)) {
            last_cycle = last_cycle.max(r.cycle());
            if let TraceRecord::Retire { core, warp, .. } = r {
                *retired.entry((*core, *warp)).or_default() += 1;
            }
        }
        println!("last_cycle = {last_cycle}");
        for ((c, w), n) in retired {
            println!("core {c} warp {w}: {n} retired");
        }
    } else {
        println!("{}", trace::TRACE_HEADER);
        for r in records.iter().filter(|r| keep(r)) {
            println!("{r}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Asm { input, output, origin, symbols } => cmd_asm(input, output, *origin, symbols),
        Cmd::Run { config, image, origin, launch, symbols, stats, trace } => {
            cmd_run(config, image, *origin, launch, symbols, stats, trace)
        }
        Cmd::Sweep { spec, output } => cmd_sweep(spec, output),
        Cmd::Disasm { image, origin } => cmd_disasm(image, *origin),
        Cmd::TraceDump { trace, warp, core, summary } => {
            cmd_trace_dump(trace, *warp, *core, *summary)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
