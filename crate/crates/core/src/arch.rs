//! Architectural state containers: thread masks, IPDOM stacks, per-warp
//! register files, and the read-only CSR map.

use std::fmt;

/// Highest supported threads per warp (lane masks are 32 bits wide).
pub const MAX_THREADS: u32 = 32;
/// Highest supported warps per core (warp masks are 64 bits wide).
pub const MAX_WARPS: u32 = 64;

/// CSR addresses. Identity registers live in the custom read-only block at
/// 0xCC0; cycle/instret sit at their standard counter addresses.
pub mod csr {
    pub const CYCLE: u32 = 0xc00;
    pub const INSTRET: u32 = 0xc02;
    pub const CYCLEH: u32 = 0xc80;
    pub const INSTRETH: u32 = 0xc82;
    /// Lane index within the warp (per-lane value).
    pub const THREAD_ID: u32 = 0xcc0;
    pub const WARP_ID: u32 = 0xcc1;
    pub const CORE_ID: u32 = 0xcc2;
    pub const NUM_THREADS: u32 = 0xcc3;
    pub const NUM_WARPS: u32 = 0xcc4;
    pub const NUM_CORES: u32 = 0xcc5;
    /// Current thread mask bits (per-warp value).
    pub const THREAD_MASK: u32 = 0xcc6;
}

/// Per-warp lane predicate: lane `i` commits architectural effects iff bit
/// `i` is set. Bits at and above the configured width stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ThreadMask {
    bits: u32,
    width: u32,
}

impl ThreadMask {
    pub fn new(bits: u32, width: u32) -> Self {
        assert!(width >= 1 && width <= MAX_THREADS);
        ThreadMask { bits: bits & Self::width_mask(width), width }
    }

    fn width_mask(width: u32) -> u32 {
        if width == 32 {
            u32::MAX
        } else {
            (1 << width) - 1
        }
    }

    pub fn empty(width: u32) -> Self {
        Self::new(0, width)
    }

    pub fn full(width: u32) -> Self {
        Self::new(u32::MAX, width)
    }

    /// Lowest `n` lanes active, saturating at the width.
    pub fn lowest(n: u32, width: u32) -> Self {
        let n = n.min(width);
        let bits = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        Self::new(bits, width)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn lane(&self, i: u32) -> bool {
        i < self.width && self.bits & (1 << i) != 0
    }

    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn lowest_active(&self) -> Option<u32> {
        if self.bits == 0 {
            None
        } else {
            Some(self.bits.trailing_zeros())
        }
    }

    pub fn lanes(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.width).filter(|&i| self.lane(i))
    }

    pub fn and_not(&self, other: ThreadMask) -> ThreadMask {
        ThreadMask::new(self.bits & !other.bits, self.width)
    }
}

impl fmt::Display for ThreadMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // lane 0 printed rightmost, like a binary literal
        for i in (0..self.width).rev() {
            write!(f, "{}", if self.lane(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// One reconvergence-stack entry. A fall-through entry holds the pre-split
/// mask and resumes at the join's successor; a non-fall-through entry holds
/// the false-path mask and PC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IpdomEntry {
    pub mask: ThreadMask,
    pub pc: u32,
    pub fallthrough: bool,
}

impl IpdomEntry {
    pub fn fallthrough(mask: ThreadMask) -> Self {
        IpdomEntry { mask, pc: 0, fallthrough: true }
    }

    pub fn else_path(mask: ThreadMask, pc: u32) -> Self {
        IpdomEntry { mask, pc, fallthrough: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackFault {
    /// Divergence nesting exceeded the configured maximum depth.
    Overflow,
    /// `join` executed without a corresponding `split`.
    Underflow,
}

/// Per-warp state: PC, thread mask, IPDOM stack, and one 32-register file
/// per lane. Register x0 reads as zero and ignores writes.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpContext {
    pub warp_id: u32,
    pub pc: u32,
    pub tmask: ThreadMask,
    pub ipdom: Vec<IpdomEntry>,
    regs: Vec<[u32; 32]>,
    max_ipdom: usize,
}

impl WarpContext {
    /// Fresh warp: zeroed registers, empty stack, lane 0 active.
    pub fn new(warp_id: u32, num_threads: u32) -> Self {
        WarpContext {
            warp_id,
            pc: 0,
            tmask: ThreadMask::lowest(1, num_threads),
            ipdom: Vec::new(),
            regs: vec![[0u32; 32]; num_threads as usize],
            // worst case fully serialized divergence
            max_ipdom: 2 * num_threads as usize,
        }
    }

    pub fn num_threads(&self) -> u32 {
        self.regs.len() as u32
    }

    /// Reset to the spawn state: PC at `pc`, lane 0 only, zeroed registers.
    pub fn reset_for_spawn(&mut self, pc: u32) {
        self.pc = pc;
        self.tmask = ThreadMask::lowest(1, self.num_threads());
        self.ipdom.clear();
        for r in &mut self.regs {
            *r = [0u32; 32];
        }
    }

    pub fn reg(&self, lane: u32, index: u8) -> u32 {
        if index == 0 {
            0
        } else {
            self.regs[lane as usize][index as usize]
        }
    }

    pub fn set_reg(&mut self, lane: u32, index: u8, value: u32) {
        if index != 0 {
            self.regs[lane as usize][index as usize] = value;
        }
    }

    pub fn ipdom_depth(&self) -> usize {
        self.ipdom.len()
    }

    pub fn ipdom_push(&mut self, entry: IpdomEntry) -> Result<(), StackFault> {
        if self.ipdom.len() >= self.max_ipdom {
            return Err(StackFault::Overflow);
        }
        self.ipdom.push(entry);
        Ok(())
    }

    pub fn ipdom_pop(&mut self) -> Result<IpdomEntry, StackFault> {
        self.ipdom.pop().ok_or(StackFault::Underflow)
    }
}

/// Per-core CSR state. Identity values echo the configuration; `instret`
/// counts retired instructions on this core.
#[derive(Debug, Clone)]
pub struct CsrFile {
    pub core_id: u32,
    pub num_cores: u32,
    pub num_warps: u32,
    pub num_threads: u32,
    pub instret: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IllegalCsr(pub u32);

impl CsrFile {
    /// Read a CSR as seen by `lane` of `warp` at `cycle`.
    pub fn read(
        &self,
        warp: &WarpContext,
        lane: u32,
        addr: u32,
        cycle: u64,
    ) -> Result<u32, IllegalCsr> {
        Ok(match addr {
            csr::CYCLE => cycle as u32,
            csr::CYCLEH => (cycle >> 32) as u32,
            csr::INSTRET => self.instret as u32,
            csr::INSTRETH => (self.instret >> 32) as u32,
            csr::THREAD_ID => lane,
            csr::WARP_ID => warp.warp_id,
            csr::CORE_ID => self.core_id,
            csr::NUM_THREADS => self.num_threads,
            csr::NUM_WARPS => self.num_warps,
            csr::NUM_CORES => self.num_cores,
            csr::THREAD_MASK => warp.tmask.bits(),
            _ => return Err(IllegalCsr(addr)),
        })
    }
}

/// Deterministic text dump of warp state, used by golden tests: per warp the
/// PC, mask, IPDOM entries, and nonzero registers.
pub fn dump_warp(w: &WarpContext) -> String {
    let mut out = format!("warp {} pc={:#010x} mask={}\n", w.warp_id, w.pc, w.tmask);
    for (depth, e) in w.ipdom.iter().enumerate() {
        if e.fallthrough {
            out.push_str(&format!("  ipdom[{depth}] fallthrough mask={}\n", e.mask));
        } else {
            out.push_str(&format!("  ipdom[{depth}] else mask={} pc={:#010x}\n", e.mask, e.pc));
        }
    }
    for lane in 0..w.num_threads() {
        for r in 1..32u8 {
            let v = w.reg(lane, r);
            if v != 0 {
                out.push_str(&format!("  t{lane} x{r}={v:#010x}\n"));
            }
        }
    }
    out
}
