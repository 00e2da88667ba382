//! Independent reference executors used by tests.
//!
//! [`run_serialized`] executes every logical thread as a plain scalar
//! RV32IM hart, with no thread masks and no reconvergence stack, so its
//! agreement with the warp-based machine is evidence rather than tautology.
//! Per-thread semantics of the warp-control instructions:
//!
//! - `split` and `join` are no-ops: the branch that follows a `split`
//!   routes each thread down its own path, which is exactly what the
//!   lock-step machine serializes.
//! - `tmc k` is a thread lifecycle event: the executing thread continues if
//!   its lane index is below `k` and parks otherwise; sibling lanes below
//!   `k` that never started begin at the next instruction with zeroed
//!   registers, and parked siblings below `k` resume there with their
//!   registers intact.
//! - `wspawn` starts lane 0 of the named warps at the target PC.
//! - `bar` is a rendezvous: threads run round-robin to their next barrier
//!   (or to completion), then all waiting threads are released together.
//!
//! The oracle is valid for kernels that follow the dispatch conventions:
//! uniform control flow between mask changes, no stale-register reads
//! across lane activation, and data races only of the same-value kind.
//!
//! [`enumerate_splits`] exhaustively instantiates the divergence rule for
//! small lane counts; tests compare it against the machine's `split`.

use std::collections::BTreeMap;

use crate::config::SimConfig;
use crate::exec::{syscall, FaultKind};
use crate::isa::{decode, IsaError, Opcode};
use crate::mem::{MemFault, Memory, SHARED_BASE};

/// Execution order of runnable threads within a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadOrder {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThreadState {
    Runnable,
    AtBarrier,
    /// Deactivated by a narrowing `tmc`; a later widening `tmc` may resume.
    Parked,
    /// Terminated by `tmc 0`; never resumed.
    Dead,
}

#[derive(Debug, Clone)]
struct ScalarThread {
    core: u32,
    warp: u32,
    lane: u32,
    pc: u32,
    regs: [u32; 32],
    state: ThreadState,
}

impl ScalarThread {
    fn reg(&self, r: u8) -> u32 {
        self.regs[r as usize]
    }

    fn set_reg(&mut self, r: u8, v: u32) {
        if r != 0 {
            self.regs[r as usize] = v;
        }
    }
}

/// Final state of a serialized run.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub mem: Memory,
    /// Registers per (core, warp, lane), for every thread that ever ran.
    pub regs: BTreeMap<(u32, u32, u32), [u32; 32]>,
    pub console: Vec<u8>,
    pub exit_code: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleError {
    Fault { core: u32, warp: u32, lane: u32, pc: u32, kind: FaultKind },
    StepLimit,
}

struct Machine {
    cfg: SimConfig,
    mem: Memory,
    shared: Vec<Vec<u8>>,
    console: Vec<u8>,
    exit_code: Option<u32>,
    halted_cores: Vec<bool>,
    threads: BTreeMap<(u32, u32, u32), ScalarThread>,
    steps: u64,
    step_limit: u64,
}

enum StepEvent {
    Continue,
    Blocked,
}

// Deliberately a second copy of the integer semantics rather than a call
// into the machine's ALU: a shared bug could not cancel out here.
fn scalar_alu(op: Opcode, a: u32, b: u32) -> u32 {
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
        _ => unreachable!("not an alu op"),
    }
}

impl Machine {
    fn load(&self, core: u32, addr: u32, size: u32) -> Result<u32, MemFault> {
        if addr >= SHARED_BASE {
            if addr % size != 0 {
                return Err(MemFault::Misaligned { addr, size });
            }
            let shared = &self.shared[core as usize];
            let off = (addr - SHARED_BASE) as usize;
            if off + size as usize > shared.len() {
                return Err(MemFault::AccessFault { addr });
            }
            let mut v = 0u32;
            for i in 0..size as usize {
                v |= (shared[off + i] as u32) << (8 * i);
            }
            Ok(v)
        } else {
            self.mem.read(addr, size)
        }
    }

    fn store(&mut self, core: u32, addr: u32, size: u32, value: u32) -> Result<(), MemFault> {
        if addr >= SHARED_BASE {
            if addr % size != 0 {
                return Err(MemFault::Misaligned { addr, size });
            }
            let shared = &mut self.shared[core as usize];
            let off = (addr - SHARED_BASE) as usize;
            if off + size as usize > shared.len() {
                return Err(MemFault::AccessFault { addr });
            }
            for i in 0..size as usize {
                shared[off + i] = (value >> (8 * i)) as u8;
            }
            Ok(())
        } else {
            self.mem.write(addr, size, value)
        }
    }

    fn start_thread(&mut self, core: u32, warp: u32, lane: u32, pc: u32) {
        self.threads.entry((core, warp, lane)).or_insert(ScalarThread {
            core,
            warp,
            lane,
            pc,
            regs: [0u32; 32],
            state: ThreadState::Runnable,
        });
    }

    fn read_csr(&self, t: &ScalarThread, addr: u32) -> Option<u32> {
        use crate::arch::csr;
        Some(match addr {
            csr::THREAD_ID => t.lane,
            csr::WARP_ID => t.warp,
            csr::CORE_ID => t.core,
            csr::NUM_THREADS => self.cfg.machine.threads,
            csr::NUM_WARPS => self.cfg.machine.warps,
            csr::NUM_CORES => self.cfg.machine.cores,
            // the oracle has no clock and no retire counter
            csr::CYCLE | csr::CYCLEH | csr::INSTRET | csr::INSTRETH => 0,
            _ => return None,
        })
    }

    /// One scalar instruction for thread `key`.
    fn step(&mut self, key: (u32, u32, u32)) -> Result<StepEvent, OracleError> {
        use Opcode::*;

        self.steps += 1;
        if self.steps > self.step_limit {
            return Err(OracleError::StepLimit);
        }

        let mut t = self.threads.get(&key).expect("thread exists").clone();
        let pc = t.pc;
        let err = |kind: FaultKind| OracleError::Fault {
            core: t.core,
            warp: t.warp,
            lane: t.lane,
            pc,
            kind,
        };
        let from_mem = |m: MemFault| match m {
            MemFault::Misaligned { addr, size } => FaultKind::Misaligned { addr, size },
            MemFault::AccessFault { addr } => FaultKind::AccessFault { addr },
        };

        let word = self.mem.read_u32(pc).map_err(|m| err(from_mem(m)))?;
        let i = decode(word).map_err(|e| match e {
            IsaError::UnknownInstruction(w) => err(FaultKind::UnknownInstruction(w)),
            IsaError::Unencodable(_) => unreachable!(),
        })?;

        let mut next_pc = pc.wrapping_add(4);
        let mut event = StepEvent::Continue;

        match i.op {
            Lui => t.set_reg(i.rd, i.imm as u32),
            Auipc => t.set_reg(i.rd, pc.wrapping_add(i.imm as u32)),
            Jal => {
                t.set_reg(i.rd, pc.wrapping_add(4));
                next_pc = pc.wrapping_add(i.imm as u32);
            }
            Jalr => {
                let target = t.reg(i.rs1).wrapping_add(i.imm as u32) & !1;
                t.set_reg(i.rd, pc.wrapping_add(4));
                next_pc = target;
            }
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                let (a, b) = (t.reg(i.rs1), t.reg(i.rs2));
                let taken = match i.op {
                    Beq => a == b,
                    Bne => a != b,
                    Blt => (a as i32) < (b as i32),
                    Bge => (a as i32) >= (b as i32),
                    Bltu => a < b,
                    _ => a >= b,
                };
                if taken {
                    next_pc = pc.wrapping_add(i.imm as u32);
                }
            }
            Lb | Lh | Lw | Lbu | Lhu => {
                let addr = t.reg(i.rs1).wrapping_add(i.imm as u32);
                let size = match i.op {
                    Lb | Lbu => 1,
                    Lh | Lhu => 2,
                    _ => 4,
                };
                let raw = self.load(t.core, addr, size).map_err(|m| err(from_mem(m)))?;
                let v = match i.op {
                    Lb => raw as u8 as i8 as i32 as u32,
                    Lh => raw as u16 as i16 as i32 as u32,
                    _ => raw,
                };
                t.set_reg(i.rd, v);
            }
            Sb | Sh | Sw => {
                let addr = t.reg(i.rs1).wrapping_add(i.imm as u32);
                let size = match i.op {
                    Sb => 1,
                    Sh => 2,
                    _ => 4,
                };
                self.store(t.core, addr, size, t.reg(i.rs2)).map_err(|m| err(from_mem(m)))?;
            }
            Addi | Slti | Sltiu | Xori | Ori | Andi | Slli | Srli | Srai => {
                let v = scalar_alu(i.op, t.reg(i.rs1), i.imm as u32);
                t.set_reg(i.rd, v);
            }
            Add | Sub | Sll | Slt | Sltu | Xor | Srl | Sra | Or | And | Mul | Mulh | Mulhsu
            | Mulhu | Div | Divu | Rem | Remu => {
                let v = scalar_alu(i.op, t.reg(i.rs1), t.reg(i.rs2));
                t.set_reg(i.rd, v);
            }
            Fence | FenceI => {}
            Ecall => {
                let num = t.reg(17);
                let arg = t.reg(10);
                match num {
                    syscall::EXIT => {
                        if self.exit_code.is_none() {
                            self.exit_code = Some(arg);
                        }
                        self.halted_cores[t.core as usize] = true;
                        event = StepEvent::Blocked;
                    }
                    syscall::PUTCHAR => self.console.push(arg as u8),
                    _ => return Err(err(FaultKind::IllegalSyscall { num })),
                }
            }
            Ebreak => return Err(err(FaultKind::Breakpoint)),
            Csrrw | Csrrwi => {
                return Err(err(FaultKind::IllegalCsr { addr: i.imm as u32 }));
            }
            Csrrs | Csrrc | Csrrsi | Csrrci => {
                if i.rs1 != 0 {
                    return Err(err(FaultKind::IllegalCsr { addr: i.imm as u32 }));
                }
                let v = self
                    .read_csr(&t, i.imm as u32)
                    .ok_or_else(|| err(FaultKind::IllegalCsr { addr: i.imm as u32 }))?;
                t.set_reg(i.rd, v);
            }

            // warp-control: per-thread lifecycle events
            Split | Join => {}
            Tmc => {
                let count = t.reg(i.rs1).min(self.cfg.machine.threads);
                let resume_pc = pc.wrapping_add(4);
                for lane in 0..count {
                    if lane == t.lane {
                        continue;
                    }
                    let sib = (t.core, t.warp, lane);
                    match self.threads.get_mut(&sib) {
                        None => self.start_thread(t.core, t.warp, lane, resume_pc),
                        Some(s) if s.state == ThreadState::Parked => {
                            s.state = ThreadState::Runnable;
                            s.pc = resume_pc;
                        }
                        Some(_) => {}
                    }
                }
                if t.lane >= count {
                    t.state = if count == 0 { ThreadState::Dead } else { ThreadState::Parked };
                    event = StepEvent::Blocked;
                }
            }
            Wspawn => {
                let n = t.reg(i.rs1).min(self.cfg.machine.warps);
                let target = t.reg(i.rs2);
                for w in 1..n {
                    if w != t.warp {
                        self.start_thread(t.core, w, 0, target);
                    }
                }
            }
            Bar => {
                t.state = ThreadState::AtBarrier;
                event = StepEvent::Blocked;
            }
        }

        t.pc = next_pc;
        *self.threads.get_mut(&key).expect("thread exists") = t;
        Ok(event)
    }
}

/// Run every logical thread to completion, serialized, starting from lane 0
/// of warp 0 on each core at `start_pc` over the given initial memory.
///
/// Threads run round-robin between barrier phases: each phase advances every
/// runnable thread until it blocks (barrier, park, or halt); when no thread
/// is runnable, all barrier-waiting threads release together.
pub fn run_serialized(
    mem: Memory,
    cfg: &SimConfig,
    start_pc: u32,
    order: ThreadOrder,
) -> Result<OracleOutcome, OracleError> {
    let mut m = Machine {
        cfg: cfg.clone(),
        mem,
        shared: vec![vec![0u8; cfg.shared.size as usize]; cfg.machine.cores as usize],
        console: Vec::new(),
        exit_code: None,
        halted_cores: vec![false; cfg.machine.cores as usize],
        threads: BTreeMap::new(),
        steps: 0,
        step_limit: 500_000_000,
    };
    for core in 0..cfg.machine.cores {
        m.start_thread(core, 0, 0, start_pc);
    }

    loop {
        let mut runnable: Vec<(u32, u32, u32)> = m
            .threads
            .iter()
            .filter(|(k, t)| t.state == ThreadState::Runnable && !m.halted_cores[k.0 as usize])
            .map(|(k, _)| *k)
            .collect();
        if runnable.is_empty() {
            // release a barrier phase, or finish
            let waiting: Vec<_> = m
                .threads
                .iter()
                .filter(|(k, t)| t.state == ThreadState::AtBarrier && !m.halted_cores[k.0 as usize])
                .map(|(k, _)| *k)
                .collect();
            if waiting.is_empty() {
                break;
            }
            for k in waiting {
                m.threads.get_mut(&k).unwrap().state = ThreadState::Runnable;
            }
            continue;
        }
        if order == ThreadOrder::Descending {
            runnable.reverse();
        }
        for key in runnable {
            // run this thread until it blocks; it may spawn siblings that
            // the next pass of the outer loop picks up
            loop {
                if m.halted_cores[key.0 as usize] {
                    break;
                }
                if m.threads[&key].state != ThreadState::Runnable {
                    break;
                }
                match m.step(key)? {
                    StepEvent::Continue => {}
                    StepEvent::Blocked => break,
                }
            }
        }
    }

    Ok(OracleOutcome {
        mem: m.mem,
        regs: m.threads.iter().map(|(k, t)| (*k, t.regs)).collect(),
        console: m.console,
        exit_code: m.exit_code.unwrap_or(0),
    })
}

/// One enumerated divergence case: the warp state change `split` must make
/// for a given (mask, predicate) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitCase {
    pub mask: u32,
    pub pred: u32,
    /// A lone thread or a unanimous predicate leaves the warp unchanged.
    pub nop: bool,
    /// Mask after the split (the true side), when not a nop.
    pub true_mask: u32,
    /// Mask pushed for the false side, when not a nop.
    pub false_mask: u32,
}

/// Brute-force every (mask, predicate) pair for a warp of `num_threads`
/// lanes (2^T x 2^T cases).
pub fn enumerate_splits(num_threads: u32) -> Vec<SplitCase> {
    assert!(num_threads <= 8, "enumeration is meant for small lane counts");
    let all = 1u32 << num_threads;
    let mut out = Vec::with_capacity((all * all) as usize);
    for mask in 0..all {
        for pred in 0..all {
            let true_mask = mask & pred;
            let false_mask = mask & !pred;
            let nop = mask.count_ones() <= 1 || true_mask == 0 || false_mask == 0;
            out.push(SplitCase { mask, pred, nop, true_mask, false_mask });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::asm::assemble;

    fn boot(src: &str) -> Memory {
        let asm = assemble(src, 0).unwrap();
        let mut mem = Memory::new();
        mem.load_image(0, &asm.image);
        mem
    }

    #[test]
    fn straight_line_single_thread() {
        let cfg = SimConfig::with_shape(1, 1, 1);
        let src = "addi x1, x0, 5\naddi x2, x1, 6\nsw x2, 0x100(x0)\ntmc x0\n";
        let out = run_serialized(boot(src), &cfg, 0, ThreadOrder::Ascending).unwrap();
        assert_eq!(out.mem.read_u32(0x100).unwrap(), 11);
        assert_eq!(out.regs[&(0, 0, 0)][2], 11);
    }

    #[test]
    fn tmc_starts_lanes_at_next_instruction() {
        let cfg = SimConfig::with_shape(1, 1, 4);
        let src = "\
  addi x1, x0, 4
  tmc x1
  csrr x2, tid
  slli x3, x2, 2
  li x4, 0x200
  add x3, x3, x4
  sw x2, 0(x3)
  tmc x0
";
        let out = run_serialized(boot(src), &cfg, 0, ThreadOrder::Ascending).unwrap();
        for lane in 0..4 {
            assert_eq!(out.mem.read_u32(0x200 + 4 * lane).unwrap(), lane);
        }
        // lanes started after the widening tmc never saw x1
        assert_eq!(out.regs[&(0, 0, 1)][1], 0);
        assert_eq!(out.regs[&(0, 0, 0)][1], 4);
    }

    /// The narrow-work-widen idiom: a `bar` between the narrowed section
    /// and the widening `tmc` lets every parked lane settle before the
    /// resume, mirroring what lock-step hardware gets for free.
    #[test]
    fn parked_lanes_resume_at_rewidening_tmc() {
        let cfg = SimConfig::with_shape(1, 1, 4);
        let src = "\
  addi x1, x0, 4
  tmc x1
  addi x5, x0, 10
  addi x1, x0, 1
  tmc x1
  addi x5, x0, 99
  addi x2, x0, 1
  addi x3, x0, 1
  bar x2, x3
  addi x1, x0, 4
  tmc x1
  csrr x2, tid
  slli x3, x2, 2
  li x4, 0x240
  add x3, x3, x4
  sw x5, 0(x3)
  tmc x0
";
        let out = run_serialized(boot(src), &cfg, 0, ThreadOrder::Ascending).unwrap();
        // lane 0 ran the narrow section; lanes 1..3 kept x5 = 10
        assert_eq!(out.mem.read_u32(0x240).unwrap(), 99);
        for lane in 1..4 {
            assert_eq!(out.mem.read_u32(0x240 + 4 * lane).unwrap(), 10, "lane {lane}");
        }
    }

    #[test]
    fn wspawn_starts_warps() {
        let cfg = SimConfig::with_shape(1, 4, 1);
        let src = "\
  addi x1, x0, 4
  la x2, work
  wspawn x1, x2
work:
  csrr x3, wid
  slli x4, x3, 2
  li x5, 0x300
  add x4, x4, x5
  sw x3, 0(x4)
  tmc x0
";
        let out = run_serialized(boot(src), &cfg, 0, ThreadOrder::Ascending).unwrap();
        for w in 0..4 {
            assert_eq!(out.mem.read_u32(0x300 + 4 * w).unwrap(), w);
        }
    }

    #[test]
    fn barrier_orders_phases() {
        let cfg = SimConfig::with_shape(1, 2, 1);
        // warp 1 stores a flag; both meet a barrier; warp 0 copies the flag
        let src = "\
  addi x1, x0, 2
  la x2, work
  wspawn x1, x2
work:
  csrr x3, wid
  beqz x3, reader
  li x4, 77
  sw x4, 0x400(x0)
reader:
  addi x5, x0, 0
  addi x6, x0, 2
  bar x5, x6
  csrr x3, wid
  bnez x3, out
  lw x7, 0x400(x0)
  sw x7, 0x404(x0)
out:
  tmc x0
";
        for order in [ThreadOrder::Ascending, ThreadOrder::Descending] {
            let out = run_serialized(boot(src), &cfg, 0, order).unwrap();
            assert_eq!(out.mem.read_u32(0x404).unwrap(), 77, "order {order:?}");
        }
    }

    #[test]
    fn order_independence_on_race_free_kernel() {
        let cfg = SimConfig::with_shape(1, 4, 1);
        let src = "\
  addi x1, x0, 4
  la x2, work
  wspawn x1, x2
work:
  csrr x3, wid
  slli x4, x3, 2
  li x5, 0x500
  add x4, x4, x5
  mul x6, x3, x3
  sw x6, 0(x4)
  tmc x0
";
        let a = run_serialized(boot(src), &cfg, 0, ThreadOrder::Ascending).unwrap();
        let b = run_serialized(boot(src), &cfg, 0, ThreadOrder::Descending).unwrap();
        assert!(a.mem.content_eq(&b.mem));
        assert_eq!(a.regs, b.regs);
    }

    #[test]
    fn split_enumeration_rule() {
        let t4 = enumerate_splits(4);
        assert_eq!(t4.len(), 256);
        // unanimous-true is a nop
        let c = t4.iter().find(|c| c.mask == 0b11 && c.pred == 0b11).unwrap();
        assert!(c.nop);
        // lone thread is a nop whatever the predicate
        for pred in 0..16 {
            assert!(t4.iter().find(|c| c.mask == 0b01 && c.pred == pred).unwrap().nop);
        }
        // a genuinely mixed case
        let c = t4.iter().find(|c| c.mask == 0b11 && c.pred == 0b01).unwrap();
        assert!(!c.nop);
        assert_eq!(c.true_mask, 0b01);
        assert_eq!(c.false_mask, 0b10);
    }
}
