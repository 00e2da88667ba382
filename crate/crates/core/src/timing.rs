//! The cycle-level pipeline model.
//!
//! Each core runs a five-stage in-order pipeline: fetch, decode, issue,
//! execute, writeback. The functional emulator runs at fetch time and
//! produces the trace op; the pipeline then models when that work costs
//! cycles. Stages are processed back to front within a cycle so a stall
//! raised downstream is visible to the same cycle's fetch.
//!
//! - fetch: the warp scheduler picks a warp, the emulator steps it, and the
//!   instruction cache charges its latency. State-changing instructions
//!   (memory, SIMT, ecall) stall their warp here until they commit, which
//!   is how one warp's long-latency work gets hidden behind the others.
//! - issue: blocks while a source or destination register is in flight for
//!   the same warp (the per-warp scoreboard), then dispatches to the shared
//!   execute unit or, for memory ops, to a per-warp slot so that misses
//!   from different warps overlap.
//! - execute: occupies the unit for the op-class latency; when fewer ALU
//!   lanes than threads are configured, vector-class latency scales by the
//!   occupancy ratio.
//! - writeback: retires the op, frees the scoreboard entry, applies commit
//!   effects (warp activation, deactivation, barrier arrival, core halt),
//!   and resumes the stalled warp.

use std::collections::BTreeMap;

use crate::barrier::{Arrival, BarrierFault};
use crate::exec::{step_warp, ExecEffect, ExecFault, FaultKind, OpClass, TraceOp};
use crate::gpu::Gpu;
use crate::isa::disasm::format_instr;
use crate::sched::{Pick, StallKind, WarpSet};
use crate::stats::{FaultReport, StatsReport};
use crate::trace::TraceRecord;

#[derive(Debug, Clone)]
struct InFlight {
    trace: TraceOp,
    effect: ExecEffect,
}

#[derive(Debug, Clone, Default)]
struct CorePipe {
    decode: Option<InFlight>,
    issue: Option<InFlight>,
    alu: Option<(InFlight, u64)>,
    /// Outstanding memory ops, at most one per warp (the warp is stalled).
    mem: Vec<(InFlight, u64)>,
    /// Ops completing this cycle, retired at the next writeback.
    wb: Vec<InFlight>,
    /// Instruction fetch blocked on an instruction-cache miss.
    fetch_pending: Option<(InFlight, u64)>,
    /// Per-warp registers with writes in flight.
    scoreboard: BTreeMap<u32, WarpSet>,
}

impl CorePipe {
    fn drained(&self) -> bool {
        self.decode.is_none()
            && self.issue.is_none()
            && self.alu.is_none()
            && self.mem.is_empty()
            && self.wb.is_empty()
            && self.fetch_pending.is_none()
    }

    fn scoreboard_blocks(&self, op: &TraceOp) -> bool {
        let Some(&inflight) = self.scoreboard.get(&op.warp_id) else {
            return false;
        };
        let uses = op
            .used_regs
            .iter()
            .chain(op.dest_reg.iter())
            .fold(0u64, |acc, &r| acc | (1u64 << r));
        inflight & uses != 0
    }

    fn scoreboard_add(&mut self, op: &TraceOp) {
        if let Some(rd) = op.dest_reg {
            *self.scoreboard.entry(op.warp_id).or_default() |= 1u64 << rd;
        }
    }

    fn scoreboard_remove(&mut self, op: &TraceOp) {
        if let Some(rd) = op.dest_reg {
            if let Some(mask) = self.scoreboard.get_mut(&op.warp_id) {
                *mask &= !(1u64 << rd);
                if *mask == 0 {
                    self.scoreboard.remove(&op.warp_id);
                }
            }
        }
    }
}

/// Options for one run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record scheduler decisions and retirements.
    pub trace: bool,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub stats: StatsReport,
    pub trace: Vec<TraceRecord>,
}

struct Engine {
    pipes: Vec<CorePipe>,
    stats: StatsReport,
    records: Vec<TraceRecord>,
    tracing: bool,
    last_retire_cycle: u64,
    fault: Option<FaultReport>,
}

impl Engine {
    fn fault_from(&mut self, gpu: &Gpu, core: u32, e: ExecFault) {
        self.fault = Some(FaultReport {
            cycle: gpu.cycle,
            core,
            warp: e.warp,
            pc: e.pc,
            kind: e.kind.name().into(),
            detail: e.kind.to_string(),
        });
    }

    /// Apply one committed instruction's scheduler-level effects.
    fn commit(&mut self, gpu: &mut Gpu, core_id: u32, op: &InFlight) -> Result<(), ()> {
        let effect = &op.effect;
        let warp = op.trace.warp_id;

        if effect.stall {
            gpu.cores[core_id as usize].sched.resume_warp(warp, StallKind::Pipeline);
        }
        if let Some((set, pc)) = effect.activations {
            let core = &mut gpu.cores[core_id as usize];
            for w in 0..core.warps.len() as u32 {
                if set & (1u64 << w) != 0 {
                    core.warps[w as usize].reset_for_spawn(pc);
                }
            }
            core.sched.activate_warps(set);
        }
        if effect.deactivate {
            gpu.cores[core_id as usize].sched.deactivate_warp(warp);
        }
        if let Some(code) = effect.halt_code {
            let core = &mut gpu.cores[core_id as usize];
            core.halted = true;
            if gpu.exit_code.is_none() {
                gpu.exit_code = Some(code);
            }
        }
        if let Some(req) = effect.barrier {
            let result = if req.global {
                gpu.global_barriers.arrive(core_id, warp, req.id, req.count)
            } else {
                gpu.cores[core_id as usize].local_barriers.arrive(0, warp, req.id, req.count)
            };
            match result {
                Ok(Arrival::Stall) => {
                    gpu.cores[core_id as usize].sched.stall_warp(warp, StallKind::Barrier);
                }
                Ok(Arrival::Release(sets)) => {
                    for (c, mask) in sets {
                        // local tables index their single core as 0
                        let c = if req.global { c } else { core_id };
                        let sched = &mut gpu.cores[c as usize].sched;
                        for w in 0..64 {
                            if mask & (1u64 << w) != 0 {
                                sched.resume_warp(w, StallKind::Barrier);
                            }
                        }
                    }
                }
                Err(BarrierFault::InvalidBarrier { id }) => {
                    self.fault_from(
                        gpu,
                        core_id,
                        ExecFault { kind: FaultKind::InvalidBarrier { id }, warp, pc: op.trace.pc },
                    );
                    return Err(());
                }
                Err(BarrierFault::MismatchedCount { id, expected, got }) => {
                    self.fault_from(
                        gpu,
                        core_id,
                        ExecFault {
                            kind: FaultKind::MismatchedBarrier { id, expected, got },
                            warp,
                            pc: op.trace.pc,
                        },
                    );
                    return Err(());
                }
            }
        }
        Ok(())
    }

    fn retire(&mut self, gpu: &mut Gpu, core_id: u32, op: InFlight) -> Result<(), ()> {
        self.stats.instructions += 1;
        *self.stats.class_counts.entry(op.trace.op_class).or_default() += 1;
        *self.stats.warp_instructions.entry((core_id, op.trace.warp_id)).or_default() += 1;
        gpu.cores[core_id as usize].csr.instret += 1;
        self.last_retire_cycle = gpu.cycle;
        if op.trace.op_class == OpClass::Simt {
            use crate::isa::Opcode;
            match op.trace.instr.op {
                Opcode::Join => self.stats.joins += 1,
                Opcode::Split => {
                    if matches!(op.trace.ctrl, crate::exec::CtrlEffect::MaskChange) {
                        self.stats.splits += 1;
                    }
                }
                _ => {}
            }
        }
        if self.tracing {
            self.records.push(TraceRecord::Retire {
                cycle: gpu.cycle,
                core: core_id,
                warp: op.trace.warp_id,
                pc: op.trace.pc,
                mask: op.trace.mask.bits(),
                disasm: format_instr(&op.trace.instr),
            });
        }
        self.pipes[core_id as usize].scoreboard_remove(&op.trace);
        self.commit(gpu, core_id, &op)
    }

    /// Advance one core by one cycle. Stages run back to front.
    fn tick_core(&mut self, gpu: &mut Gpu, core_id: u32) -> Result<(), ()> {
        let cfg = gpu.config.clone();

        // writeback: retire everything that finished execute last cycle
        let finished = std::mem::take(&mut self.pipes[core_id as usize].wb);
        for op in finished {
            self.retire(gpu, core_id, op)?;
        }

        // execute: the shared unit and the per-warp memory slots
        {
            let pipe = &mut self.pipes[core_id as usize];
            if let Some((_, remaining)) = &mut pipe.alu {
                *remaining -= 1;
                if *remaining == 0 {
                    let (op, _) = pipe.alu.take().unwrap();
                    pipe.wb.push(op);
                }
            }
            self.stats.stall_memory += pipe.mem.len() as u64;
            let mut i = 0;
            while i < pipe.mem.len() {
                pipe.mem[i].1 -= 1;
                if pipe.mem[i].1 == 0 {
                    let (op, _) = pipe.mem.remove(i);
                    pipe.wb.push(op);
                } else {
                    i += 1;
                }
            }
        }

        // issue: scoreboard check, then dispatch
        {
            let pipe = &mut self.pipes[core_id as usize];
            if let Some(op) = pipe.issue.take() {
                if pipe.scoreboard_blocks(&op.trace) {
                    self.stats.stall_scoreboard += 1;
                    pipe.issue = Some(op);
                } else {
                    match op.trace.op_class {
                        OpClass::Load | OpClass::Store => {
                            let latency = op.trace.mem_result.map(|r| r.latency).unwrap_or(1);
                            pipe.scoreboard_add(&op.trace);
                            pipe.mem.push((op, latency.max(1)));
                        }
                        class => {
                            if pipe.alu.is_none() {
                                let base = match class {
                                    OpClass::Mul => cfg.latency.mul,
                                    OpClass::Div => cfg.latency.div,
                                    _ => cfg.latency.alu,
                                };
                                // vector-class ops pay for ALU occupancy
                                let scale = match class {
                                    OpClass::Alu | OpClass::Mul | OpClass::Div => {
                                        let lanes = op.trace.mask.count().max(1);
                                        lanes.div_ceil(cfg.alu_lanes()) as u64
                                    }
                                    _ => 1,
                                };
                                pipe.scoreboard_add(&op.trace);
                                pipe.alu = Some((op, (base * scale).max(1)));
                            } else {
                                // structural stall: execute unit busy
                                pipe.issue = Some(op);
                            }
                        }
                    }
                }
            }
        }

        // decode: hand the instruction to issue
        {
            let pipe = &mut self.pipes[core_id as usize];
            if pipe.issue.is_none() {
                pipe.issue = pipe.decode.take();
            }
        }

        // fetch: finish a pending instruction-cache miss or schedule anew
        {
            if let Some((op, remaining)) = &mut self.pipes[core_id as usize].fetch_pending {
                *remaining -= 1;
                if *remaining == 0 {
                    let (op, _) = self.pipes[core_id as usize].fetch_pending.take().unwrap();
                    self.pipes[core_id as usize].decode = Some(op);
                } else {
                    let _ = op;
                }
            } else if self.pipes[core_id as usize].decode.is_none()
                && !gpu.cores[core_id as usize].halted
            {
                match gpu.cores[core_id as usize].sched.schedule_next() {
                    Pick::Idle => self.stats.idle_cycles += 1,
                    Pick::Warp(warp) => {
                        let pc = gpu.cores[core_id as usize].warps[warp as usize].pc;
                        if self.tracing {
                            self.records.push(TraceRecord::Sched {
                                cycle: gpu.cycle,
                                core: core_id,
                                warp,
                                pc,
                            });
                        }
                        match step_warp(gpu, core_id, warp) {
                            Err(e) => {
                                self.fault_from(gpu, core_id, e);
                                return Err(());
                            }
                            Ok((trace, effect)) => {
                                let depth =
                                    gpu.cores[core_id as usize].warps[warp as usize].ipdom_depth();
                                self.stats.max_ipdom_depth =
                                    self.stats.max_ipdom_depth.max(depth as u64);
                                if effect.stall {
                                    gpu.cores[core_id as usize]
                                        .sched
                                        .stall_warp(warp, StallKind::Pipeline);
                                }
                                let latency = gpu.cores[core_id as usize].icache.probe(pc, false);
                                let op = InFlight { trace, effect };
                                if latency <= 1 {
                                    self.pipes[core_id as usize].decode = Some(op);
                                } else {
                                    self.pipes[core_id as usize].fetch_pending =
                                        Some((op, latency));
                                }
                            }
                        }
                    }
                }
            }
        }

        self.stats.stall_barrier +=
            gpu.cores[core_id as usize].sched.barrier_stalled.count_ones() as u64;
        Ok(())
    }
}

/// Advance the whole device by one cycle. Cores tick in index order.
/// Returns `false` once the simulation is finished or faulted.
fn tick(engine: &mut Engine, gpu: &mut Gpu) -> bool {
    gpu.cycle += 1;
    for core_id in 0..gpu.cores.len() as u32 {
        if engine.tick_core(gpu, core_id).is_err() {
            return false;
        }
    }

    let active = gpu.cores.iter().any(|c| !c.done());
    let inflight = engine.pipes.iter().any(|p| !p.drained());
    if !active && !inflight {
        return false;
    }

    // deadlock watchdog: warps exist but nothing retires
    if gpu.cycle.saturating_sub(engine.last_retire_cycle) >= gpu.config.latency.watchdog {
        engine.fault = Some(FaultReport {
            cycle: gpu.cycle,
            core: 0,
            warp: 0,
            pc: 0,
            kind: "deadlock".into(),
            detail: format!(
                "no instruction retired in {} cycles with warps outstanding",
                gpu.config.latency.watchdog
            ),
        });
        return false;
    }
    if gpu.config.latency.max_cycles > 0 && gpu.cycle >= gpu.config.latency.max_cycles {
        engine.fault = Some(FaultReport {
            cycle: gpu.cycle,
            core: 0,
            warp: 0,
            pc: 0,
            kind: "cycle_limit".into(),
            detail: format!("hard cycle limit {} reached", gpu.config.latency.max_cycles),
        });
        return false;
    }
    true
}

/// Run the device until every core halts, collecting statistics and an
/// optional trace. The GPU must already have warps started (directly or via
/// the dispatch runtime).
pub fn run(gpu: &mut Gpu, options: RunOptions) -> RunOutcome {
    let mut engine = Engine {
        pipes: vec![CorePipe::default(); gpu.cores.len()],
        stats: StatsReport::default(),
        records: Vec::new(),
        tracing: options.trace,
        last_retire_cycle: 0,
        fault: None,
    };

    while tick(&mut engine, gpu) {}

    let mut stats = engine.stats;
    stats.cycles = gpu.cycle;
    stats.exit_code = gpu.exit_code.unwrap_or(0);
    stats.fault = engine.fault;
    for core in &gpu.cores {
        let (i, d) = (&core.icache.stats, &core.dcache.stats);
        stats.icache.accesses += i.accesses;
        stats.icache.hits += i.hits;
        stats.icache.misses += i.misses;
        stats.icache.conflicts += i.conflicts;
        stats.icache.evictions += i.evictions;
        stats.dcache.accesses += d.accesses;
        stats.dcache.hits += d.hits;
        stats.dcache.misses += d.misses;
        stats.dcache.conflicts += d.conflicts;
        stats.dcache.evictions += d.evictions;
        stats.shared_accesses += core.shared.accesses;
        stats.shared_conflicts += core.shared.conflicts;
    }
    RunOutcome { stats, trace: engine.records }
}
