//! The run trace: scheduler decisions and retirements.
//!
//! Format v1 is line-oriented, tab-separated, with a version header:
//!
//! ```text
//! # rvsimt trace v1
//! S	<cycle>	<core>	<warp>	<pc>
//! R	<cycle>	<core>	<warp>	<pc>	<mask>	<disassembly>
//! ```
//!
//! `S` records one scheduler decision (a warp selected to fetch); `R`
//! records one retired instruction with its execution mask.

use std::fmt;

pub const TRACE_HEADER: &str = "# rvsimt trace v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceRecord {
    Sched { cycle: u64, core: u32, warp: u32, pc: u32 },
    Retire { cycle: u64, core: u32, warp: u32, pc: u32, mask: u32, disasm: String },
}

impl TraceRecord {
    pub fn cycle(&self) -> u64 {
        match self {
            TraceRecord::Sched { cycle, .. } | TraceRecord::Retire { cycle, .. } => *cycle,
        }
    }

    pub fn warp(&self) -> u32 {
        match self {
            TraceRecord::Sched { warp, .. } | TraceRecord::Retire { warp, .. } => *warp,
        }
    }

    pub fn core(&self) -> u32 {
        match self {
            TraceRecord::Sched { core, .. } | TraceRecord::Retire { core, .. } => *core,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceRecord::Sched { cycle, core, warp, pc } => {
                write!(f, "S\t{cycle}\t{core}\t{warp}\t0x{pc:08x}")
            }
            TraceRecord::Retire { cycle, core, warp, pc, mask, disasm } => {
                write!(f, "R\t{cycle}\t{core}\t{warp}\t0x{pc:08x}\t0x{mask:08x}\t{disasm}")
            }
        }
    }
}

/// Render a complete trace file.
pub fn to_text(records: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Parse a trace file produced by [`to_text`].
pub fn parse(text: &str) -> Result<Vec<TraceRecord>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => return Err(format!("bad trace header: {other:?}")),
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut f = line.split('\t');
        let tag = f.next().ok_or_else(|| format!("line {}: empty", n + 2))?;
        let mut num = |what: &str| -> Result<u64, String> {
            let s = f.next().ok_or_else(|| format!("line {}: missing {what}", n + 2))?;
            let (s, radix) = match s.strip_prefix("0x") {
                Some(hex) => (hex, 16),
                None => (s, 10),
            };
            u64::from_str_radix(s, radix).map_err(|e| format!("line {}: bad {what}: {e}", n + 2))
        };
        match tag {
            "S" => {
                let cycle = num("cycle")?;
                let core = num("core")? as u32;
                let warp = num("warp")? as u32;
                let pc = num("pc")? as u32;
                out.push(TraceRecord::Sched { cycle, core, warp, pc });
            }
            "R" => {
                let cycle = num("cycle")?;
                let core = num("core")? as u32;
                let warp = num("warp")? as u32;
                let pc = num("pc")? as u32;
                let mask = num("mask")? as u32;
                let disasm = f.collect::<Vec<_>>().join("\t");
                out.push(TraceRecord::Retire { cycle, core, warp, pc, mask, disasm });
            }
            other => return Err(format!("line {}: unknown record `{other}`", n + 2)),
        }
    }
    Ok(out)
}
