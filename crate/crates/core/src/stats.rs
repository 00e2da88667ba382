//! Run statistics and the flat key-value stats document.

use std::collections::BTreeMap;

use crate::exec::{FaultKind, OpClass};
use crate::mem::CacheStats;

/// Version tag written into every stats document.
pub const STATS_SCHEMA_VERSION: u32 = 1;

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::UnknownInstruction(_) => "unknown_instruction",
            FaultKind::Misaligned { .. } => "misaligned",
            FaultKind::AccessFault { .. } => "access_fault",
            FaultKind::JoinWithoutSplit => "join_without_split",
            FaultKind::DivergenceOverflow => "divergence_overflow",
            FaultKind::DivergentBranch => "divergent_branch",
            FaultKind::IllegalCsr { .. } => "illegal_csr",
            FaultKind::IllegalSyscall { .. } => "illegal_syscall",
            FaultKind::Breakpoint => "breakpoint",
            FaultKind::InvalidBarrier { .. } => "invalid_barrier",
            FaultKind::MismatchedBarrier { .. } => "barrier_mismatch",
        }
    }
}

/// A simulation fault with its location, as reported in stats documents:
/// (cycle, core, warp, pc, fault kind, detail).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultReport {
    pub cycle: u64,
    pub core: u32,
    pub warp: u32,
    pub pc: u32,
    pub kind: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatsReport {
    pub exit_code: u32,
    pub fault: Option<FaultReport>,
    pub cycles: u64,
    pub instructions: u64,
    pub class_counts: BTreeMap<OpClass, u64>,
    pub idle_cycles: u64,
    pub stall_scoreboard: u64,
    pub stall_memory: u64,
    pub stall_barrier: u64,
    pub icache: CacheStats,
    pub dcache: CacheStats,
    pub shared_accesses: u64,
    pub shared_conflicts: u64,
    pub splits: u64,
    pub joins: u64,
    pub max_ipdom_depth: u64,
    /// Instructions retired per (core, warp).
    pub warp_instructions: BTreeMap<(u32, u32), u64>,
}

impl StatsReport {
    pub fn faulted(&self) -> bool {
        self.fault.is_some()
    }

    pub fn class_count(&self, class: OpClass) -> u64 {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    /// Render the flat key-value document. The key order is fixed, so two
    /// identical runs produce byte-identical documents.
    pub fn to_document(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("schema_version", STATS_SCHEMA_VERSION.to_string());
        kv("exit_code", self.exit_code.to_string());
        if let Some(f) = &self.fault {
            kv("fault.kind", f.kind.clone());
            kv("fault.cycle", f.cycle.to_string());
            kv("fault.core", f.core.to_string());
            kv("fault.warp", f.warp.to_string());
            kv("fault.pc", format!("0x{:08x}", f.pc));
            kv("fault.detail", f.detail.clone());
        }
        kv("cycles", self.cycles.to_string());
        kv("instructions", self.instructions.to_string());
        for class in OpClass::ALL {
            kv(&format!("instr.{}", class.name()), self.class_count(class).to_string());
        }
        kv("sched.idle_cycles", self.idle_cycles.to_string());
        kv("stall.scoreboard", self.stall_scoreboard.to_string());
        kv("stall.memory", self.stall_memory.to_string());
        kv("stall.barrier", self.stall_barrier.to_string());
        for (name, c) in [("icache", &self.icache), ("dcache", &self.dcache)] {
            kv(&format!("{name}.accesses"), c.accesses.to_string());
            kv(&format!("{name}.hits"), c.hits.to_string());
            kv(&format!("{name}.misses"), c.misses.to_string());
            kv(&format!("{name}.conflicts"), c.conflicts.to_string());
            kv(&format!("{name}.evictions"), c.evictions.to_string());
        }
        kv("shared.accesses", self.shared_accesses.to_string());
        kv("shared.conflicts", self.shared_conflicts.to_string());
        kv("div.splits", self.splits.to_string());
        kv("div.joins", self.joins.to_string());
        kv("div.max_depth", self.max_ipdom_depth.to_string());
        for ((core, warp), n) in &self.warp_instructions {
            kv(&format!("warp.c{core}.w{warp:02}.instructions"), n.to_string());
        }
        out
    }

    /// Look one key up in a rendered document.
    pub fn document_get(doc: &str, key: &str) -> Option<String> {
        doc.lines().find_map(|l| {
            let (k, v) = l.split_once(" = ")?;
            (k == key).then(|| v.to_string())
        })
    }
}
