//! Functional execution of one instruction per warp.
//!
//! `step_warp` fetches the word at the warp's PC, decodes it, and executes
//! it lane-wise under the thread mask, applying register, memory, PC, mask,
//! and IPDOM effects immediately. Effects that belong to other components —
//! scheduler activation from `wspawn`, deactivation from `tmc 0`, barrier
//! arrival, core halt — are returned in the [`ExecEffect`] and applied by
//! the caller when the instruction commits.
//!
//! Each step also produces a [`TraceOp`] carrying the op class, register
//! uses, and per-lane addresses with their access timing; the pipeline model
//! consumes these without re-executing anything.

use crate::arch::{IpdomEntry, StackFault, ThreadMask};
use crate::barrier::GLOBAL_BARRIER_BIT;
use crate::gpu::Gpu;
use crate::isa::{decode, DecodedInstr, IsaError, Opcode};
use crate::mem::{access_warp, AccessResult, LaneAccess, MemFault};
use crate::sched::WarpSet;
use std::fmt;

/// Syscall numbers recognized by `ecall` (number in `a7`, argument in `a0`,
/// both read from lane 0).
pub mod syscall {
    /// Halt the executing warp's core; `a0` is the exit code.
    pub const EXIT: u32 = 93;
    /// Append the low byte of `a0` to the console stream.
    pub const PUTCHAR: u32 = 64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpClass {
    Alu,
    Mul,
    Div,
    Load,
    Store,
    Branch,
    Simt,
    Csr,
    Ecall,
}

impl OpClass {
    pub const ALL: [OpClass; 9] = [
        OpClass::Alu,
        OpClass::Mul,
        OpClass::Div,
        OpClass::Load,
        OpClass::Store,
        OpClass::Branch,
        OpClass::Simt,
        OpClass::Csr,
        OpClass::Ecall,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpClass::Alu => "alu",
            OpClass::Mul => "mul",
            OpClass::Div => "div",
            OpClass::Load => "load",
            OpClass::Store => "store",
            OpClass::Branch => "branch",
            OpClass::Simt => "simt",
            OpClass::Csr => "csr",
            OpClass::Ecall => "ecall",
        }
    }
}

/// Control consequence of an instruction, for the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtrlEffect {
    None,
    Branch { target: u32, taken: bool },
    Spawn { warps: WarpSet, pc: u32 },
    BarrierArrive { id: u32, global: bool, count: u32 },
    MaskChange,
    Halt,
}

/// The trace object handed to the timing pipeline: everything it needs to
/// model this instruction without touching architectural state.
#[derive(Debug, Clone)]
pub struct TraceOp {
    pub warp_id: u32,
    pub pc: u32,
    pub instr: DecodedInstr,
    pub mask: ThreadMask,
    pub used_regs: Vec<u8>,
    pub dest_reg: Option<u8>,
    pub per_lane_addrs: Vec<LaneAccess>,
    /// Memory timing computed when the access executed.
    pub mem_result: Option<AccessResult>,
    pub ctrl: CtrlEffect,
    pub op_class: OpClass,
}

/// Barrier arrival request, resolved at commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BarrierRequest {
    pub id: u32,
    pub global: bool,
    pub count: u32,
}

/// Per-instruction state transition summary. PC and mask changes are
/// already applied to the warp; the optional fields are for the committer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecEffect {
    pub next_pc: u32,
    pub mask_after: ThreadMask,
    /// Warps to reset and activate at `1` (from `wspawn`).
    pub activations: Option<(WarpSet, u32)>,
    pub barrier: Option<BarrierRequest>,
    /// The warp's thread mask went to zero.
    pub deactivate: bool,
    /// Exit syscall: halt the core with this code.
    pub halt_code: Option<u32>,
    /// The warp must stall until this instruction commits.
    pub stall: bool,
}

impl ExecEffect {
    fn flow(next_pc: u32, mask_after: ThreadMask) -> Self {
        ExecEffect {
            next_pc,
            mask_after,
            activations: None,
            barrier: None,
            deactivate: false,
            halt_code: None,
            stall: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    UnknownInstruction(u32),
    Misaligned { addr: u32, size: u32 },
    AccessFault { addr: u32 },
    JoinWithoutSplit,
    /// Divergence nesting exceeded the IPDOM stack capacity.
    DivergenceOverflow,
    /// Active lanes disagreed on a plain branch; divergent control flow
    /// must go through split/join.
    DivergentBranch,
    IllegalCsr { addr: u32 },
    IllegalSyscall { num: u32 },
    Breakpoint,
    InvalidBarrier { id: u32 },
    MismatchedBarrier { id: u32, expected: u32, got: u32 },
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::UnknownInstruction(w) => write!(f, "unknown instruction 0x{w:08x}"),
            FaultKind::Misaligned { addr, size } => {
                write!(f, "misaligned {size}-byte access at 0x{addr:08x}")
            }
            FaultKind::AccessFault { addr } => write!(f, "access fault at 0x{addr:08x}"),
            FaultKind::JoinWithoutSplit => write!(f, "join executed without a corresponding split"),
            FaultKind::DivergenceOverflow => write!(f, "divergence nesting exceeded"),
            FaultKind::DivergentBranch => {
                write!(f, "active lanes disagree on a branch; use split/join")
            }
            FaultKind::IllegalCsr { addr } => write!(f, "illegal csr 0x{addr:03x}"),
            FaultKind::IllegalSyscall { num } => write!(f, "illegal syscall {num}"),
            FaultKind::Breakpoint => write!(f, "breakpoint"),
            FaultKind::InvalidBarrier { id } => write!(f, "invalid barrier id {id}"),
            FaultKind::MismatchedBarrier { id, expected, got } => {
                write!(f, "barrier {id} arrivals disagree on the warp count ({expected} vs {got})")
            }
        }
    }
}

/// A fault raised while executing one warp instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecFault {
    pub kind: FaultKind,
    pub warp: u32,
    pub pc: u32,
}

impl fmt::Display for ExecFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "warp {} pc 0x{:08x}: {}", self.warp, self.pc, self.kind)
    }
}

pub type StepResult = Result<(TraceOp, ExecEffect), ExecFault>;

fn mem_fault(m: MemFault, warp: u32, pc: u32) -> ExecFault {
    let kind = match m {
        MemFault::Misaligned { addr, size } => FaultKind::Misaligned { addr, size },
        MemFault::AccessFault { addr } => FaultKind::AccessFault { addr },
    };
    ExecFault { kind, warp, pc }
}

fn op_class(op: Opcode) -> OpClass {
    use Opcode::*;
    match op {
        Lb | Lh | Lw | Lbu | Lhu => OpClass::Load,
        Sb | Sh | Sw => OpClass::Store,
        Beq | Bne | Blt | Bge | Bltu | Bgeu | Jal | Jalr => OpClass::Branch,
        Mul | Mulh | Mulhsu | Mulhu => OpClass::Mul,
        Div | Divu | Rem | Remu => OpClass::Div,
        Tmc | Wspawn | Split | Join | Bar => OpClass::Simt,
        Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => OpClass::Csr,
        Ecall | Ebreak => OpClass::Ecall,
        _ => OpClass::Alu,
    }
}

fn used_regs(i: &DecodedInstr) -> Vec<u8> {
    use Opcode::*;
    let mut regs: Vec<u8> = match i.op {
        Lui | Auipc | Jal | Fence | FenceI | Ebreak | Join => vec![],
        Ecall => vec![17, 10], // a7, a0
        Csrrwi | Csrrsi | Csrrci => vec![],
        Beq | Bne | Blt | Bge | Bltu | Bgeu | Sb | Sh | Sw => vec![i.rs1, i.rs2],
        Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Mul | Mulh | Mulhsu
        | Mulhu | Div | Divu | Rem | Remu => vec![i.rs1, i.rs2],
        Wspawn | Bar => vec![i.rs1, i.rs2],
        _ => vec![i.rs1],
    };
    regs.sort_unstable();
    regs.dedup();
    regs.retain(|&r| r != 0);
    regs
}

fn alu_op(op: Opcode, a: u32, b: u32) -> u32 {
    use Opcode::*;
    match op {
        Add | Addi => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Sll | Slli => a.wrapping_shl(b & 31),
        Slt | Slti => ((a as i32) < (b as i32)) as u32,
        Sltu | Sltiu => (a < b) as u32,
        Xor | Xori => a ^ b,
        Srl | Srli => a.wrapping_shr(b & 31),
        Sra | Srai => ((a as i32).wrapping_shr(b & 31)) as u32,
        Or | Ori => a | b,
        And | Andi => a & b,
        Mul => a.wrapping_mul(b),
        Mulh => (((a as i32 as i64).wrapping_mul(b as i32 as i64)) >> 32) as u32,
        Mulhsu => (((a as i32 as i64).wrapping_mul(b as i64)) >> 32) as u32,
        Mulhu => (((a as u64) * (b as u64)) >> 32) as u32,
        Div => {
            if b == 0 {
                u32::MAX
            } else if a == 0x8000_0000 && b == u32::MAX {
                a
            } else {
                ((a as i32) / (b as i32)) as u32
            }
        }
        Divu => {
            if b == 0 {
                u32::MAX
            } else {
                a / b
            }
        }
        Rem => {
            if b == 0 {
                a
            } else if a == 0x8000_0000 && b == u32::MAX {
                0
            } else {
                ((a as i32) % (b as i32)) as u32
            }
        }
        Remu => {
            if b == 0 {
                a
            } else {
                a % b
            }
        }
        _ => unreachable!("not an alu op: {op:?}"),
    }
}

/// Execute one instruction for `warp` on `core`, returning its trace op and
/// effect. The warp's PC, mask, registers, IPDOM stack, and data memory are
/// updated in place; scheduler-level consequences are left to the caller.
pub fn step_warp(gpu: &mut Gpu, core_id: u32, warp_id: u32) -> StepResult {
    use Opcode::*;

    let num_threads = gpu.num_threads();
    let core = &mut gpu.cores[core_id as usize];
    let pc = core.warps[warp_id as usize].pc;
    let fault = |kind: FaultKind| ExecFault { kind, warp: warp_id, pc };

    let word = gpu.mem.read_u32(pc).map_err(|m| mem_fault(m, warp_id, pc))?;
    let instr = decode(word).map_err(|e| match e {
        IsaError::UnknownInstruction(w) => fault(FaultKind::UnknownInstruction(w)),
        IsaError::Unencodable(_) => unreachable!("decode never yields Unencodable"),
    })?;

    let core = &mut gpu.cores[core_id as usize];
    let warp = &mut core.warps[warp_id as usize];
    let mask = warp.tmask;
    debug_assert!(!mask.is_empty(), "stepping a warp with an empty mask");
    let lead = mask.lowest_active().unwrap_or(0);
    let class = op_class(instr.op);

    let mut trace = TraceOp {
        warp_id,
        pc,
        instr,
        mask,
        used_regs: used_regs(&instr),
        dest_reg: if instr.rd != 0 { Some(instr.rd) } else { None },
        per_lane_addrs: Vec::new(),
        mem_result: None,
        ctrl: CtrlEffect::None,
        op_class: class,
    };

    let mut effect = ExecEffect::flow(pc.wrapping_add(4), mask);

    match instr.op {
        // ---- lane-wise integer ops --------------------------------------
        Lui => {
            for l in mask.lanes() {
                warp.set_reg(l, instr.rd, instr.imm as u32);
            }
        }
        Auipc => {
            for l in mask.lanes() {
                warp.set_reg(l, instr.rd, pc.wrapping_add(instr.imm as u32));
            }
        }
        Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Mul | Mulh | Mulhsu
        | Mulhu | Div | Divu | Rem | Remu => {
            for l in mask.lanes() {
                let a = warp.reg(l, instr.rs1);
                let b = warp.reg(l, instr.rs2);
                warp.set_reg(l, instr.rd, alu_op(instr.op, a, b));
            }
        }
        Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
            for l in mask.lanes() {
                let a = warp.reg(l, instr.rs1);
                warp.set_reg(l, instr.rd, alu_op(instr.op, a, instr.imm as u32));
            }
        }
        Fence | FenceI => {}

        // ---- control transfers (uniform across active lanes) ------------
        Jal => {
            for l in mask.lanes() {
                warp.set_reg(l, instr.rd, pc.wrapping_add(4));
            }
            let target = pc.wrapping_add(instr.imm as u32);
            effect.next_pc = target;
            trace.ctrl = CtrlEffect::Branch { target, taken: true };
        }
        Jalr => {
            let targets: Vec<u32> = mask
                .lanes()
                .map(|l| warp.reg(l, instr.rs1).wrapping_add(instr.imm as u32) & !1)
                .collect();
            if targets.windows(2).any(|w| w[0] != w[1]) {
                return Err(fault(FaultKind::DivergentBranch));
            }
            for l in mask.lanes() {
                warp.set_reg(l, instr.rd, pc.wrapping_add(4));
            }
            effect.next_pc = targets[0];
            trace.ctrl = CtrlEffect::Branch { target: targets[0], taken: true };
        }
        Beq | Bne | Blt | Bge | Bltu | Bgeu => {
            let takens: Vec<bool> = mask
                .lanes()
                .map(|l| {
                    let a = warp.reg(l, instr.rs1);
                    let b = warp.reg(l, instr.rs2);
                    match instr.op {
                        Beq => a == b,
                        Bne => a != b,
                        Blt => (a as i32) < (b as i32),
                        Bge => (a as i32) >= (b as i32),
                        Bltu => a < b,
                        _ => a >= b,
                    }
                })
                .collect();
            if takens.windows(2).any(|w| w[0] != w[1]) {
                return Err(fault(FaultKind::DivergentBranch));
            }
            let taken = takens[0];
            let target = if taken { pc.wrapping_add(instr.imm as u32) } else { pc.wrapping_add(4) };
            effect.next_pc = target;
            trace.ctrl = CtrlEffect::Branch { target, taken };
        }

        // ---- memory ------------------------------------------------------
        Lb | Lh | Lw | Lbu | Lhu | Sb | Sh | Sw => {
            let is_store = matches!(instr.op, Sb | Sh | Sw);
            let size = match instr.op {
                Lb | Lbu | Sb => 1,
                Lh | Lhu | Sh => 2,
                _ => 4,
            };
            let lanes: Vec<LaneAccess> = mask
                .lanes()
                .map(|l| LaneAccess {
                    lane: l,
                    addr: warp.reg(l, instr.rs1).wrapping_add(instr.imm as u32),
                    size,
                    is_store,
                    data: if is_store { warp.reg(l, instr.rs2) } else { 0 },
                })
                .collect();
            let (result, loaded) =
                access_warp(&mut gpu.mem, &mut core.shared, &mut core.dcache, &lanes)
                    .map_err(|m| mem_fault(m, warp_id, pc))?;
            let warp = &mut core.warps[warp_id as usize];
            for (l, raw) in loaded {
                let v = match instr.op {
                    Lb => raw as u8 as i8 as i32 as u32,
                    Lh => raw as u16 as i16 as i32 as u32,
                    _ => raw,
                };
                warp.set_reg(l, instr.rd, v);
            }
            trace.per_lane_addrs = lanes;
            trace.mem_result = Some(result);
            effect.stall = true;
        }

        // ---- csr ----------------------------------------------------------
        Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
            let addr = instr.imm as u32;
            let writes = match instr.op {
                Csrrw | Csrrwi => true,
                // set/clear forms write only with a nonzero operand
                Csrrs | Csrrc => instr.rs1 != 0,
                _ => instr.rs1 != 0,
            };
            if writes {
                // every implemented csr is read-only
                return Err(fault(FaultKind::IllegalCsr { addr }));
            }
            let cycle = gpu.cycle;
            let warp = &core.warps[warp_id as usize];
            let mut values = Vec::new();
            for l in mask.lanes() {
                match core.csr.read(warp, l, addr, cycle) {
                    Ok(v) => values.push((l, v)),
                    Err(_) => return Err(fault(FaultKind::IllegalCsr { addr })),
                }
            }
            let warp = &mut core.warps[warp_id as usize];
            for (l, v) in values {
                warp.set_reg(l, instr.rd, v);
            }
        }

        // ---- environment ---------------------------------------------------
        Ecall => {
            let num = warp.reg(0, 17);
            let arg = warp.reg(0, 10);
            match num {
                syscall::EXIT => {
                    effect.halt_code = Some(arg);
                    trace.ctrl = CtrlEffect::Halt;
                }
                syscall::PUTCHAR => {
                    gpu.console.push(arg as u8);
                }
                _ => return Err(fault(FaultKind::IllegalSyscall { num })),
            }
            effect.stall = true;
        }
        Ebreak => return Err(fault(FaultKind::Breakpoint)),

        // ---- simt extension -------------------------------------------------
        Tmc => {
            let count = warp.reg(lead, instr.rs1);
            let new_mask = ThreadMask::lowest(count, num_threads);
            warp.tmask = new_mask;
            effect.mask_after = new_mask;
            effect.deactivate = new_mask.is_empty();
            effect.stall = true;
            trace.ctrl = CtrlEffect::MaskChange;
        }
        Wspawn => {
            let want = warp.reg(lead, instr.rs1);
            let target_pc = warp.reg(lead, instr.rs2);
            let n = want.min(gpu.num_warps());
            let mut set: WarpSet = 0;
            for w in 1..n {
                if w != warp_id {
                    set |= 1u64 << w;
                }
            }
            effect.activations = Some((set, target_pc));
            effect.stall = true;
            trace.ctrl = CtrlEffect::Spawn { warps: set, pc: target_pc };
        }
        Split => {
            let true_bits = mask
                .lanes()
                .filter(|&l| warp.reg(l, instr.rs1) != 0)
                .fold(0u32, |acc, l| acc | (1 << l));
            let t_mask = ThreadMask::new(true_bits, num_threads);
            let f_mask = mask.and_not(t_mask);
            // a lone thread or a unanimous predicate leaves the warp alone
            if mask.count() > 1 && !t_mask.is_empty() && !f_mask.is_empty() {
                warp.ipdom_push(IpdomEntry::fallthrough(mask))
                    .and_then(|_| warp.ipdom_push(IpdomEntry::else_path(f_mask, pc.wrapping_add(4))))
                    .map_err(|e| match e {
                        StackFault::Overflow => fault(FaultKind::DivergenceOverflow),
                        StackFault::Underflow => unreachable!(),
                    })?;
                warp.tmask = t_mask;
                effect.mask_after = t_mask;
                trace.ctrl = CtrlEffect::MaskChange;
            }
            effect.stall = true;
        }
        Join => {
            let entry = warp.ipdom_pop().map_err(|_| fault(FaultKind::JoinWithoutSplit))?;
            warp.tmask = entry.mask;
            effect.mask_after = entry.mask;
            if !entry.fallthrough {
                effect.next_pc = entry.pc;
            }
            effect.stall = true;
            trace.ctrl = CtrlEffect::MaskChange;
        }
        Bar => {
            let raw_id = warp.reg(lead, instr.rs1);
            let count = warp.reg(lead, instr.rs2);
            let global = raw_id & GLOBAL_BARRIER_BIT != 0;
            let id = raw_id & !GLOBAL_BARRIER_BIT;
            let slots = if global { gpu.global_barriers.slots() } else { core.local_barriers.slots() };
            if id >= slots {
                return Err(fault(FaultKind::InvalidBarrier { id }));
            }
            effect.barrier = Some(BarrierRequest { id, global, count });
            effect.stall = true;
            trace.ctrl = CtrlEffect::BarrierArrive { id, global, count };
        }
    }

    let core = &mut gpu.cores[core_id as usize];
    core.warps[warp_id as usize].pc = effect.next_pc;
    Ok((trace, effect))
}
