//! Divergence correctness: the exhaustive split table, the split/join
//! bracket law, and nested divergence kernels built from the `__if` macros.

use rvsimt::arch::ThreadMask;
use rvsimt::config::SimConfig;
use rvsimt::exec::step_warp;
use rvsimt::gpu::Gpu;
use rvsimt::isa::asm::assemble;
use rvsimt::oracle::{self, enumerate_splits, ThreadOrder};
use rvsimt::timing::{run, RunOptions};

/// Set up a one-warp machine with `program` at 0 and the given lane state.
fn machine(threads: u32, program: &str, mask: u32, pred_reg: u8, preds: u32) -> Gpu {
    let mut gpu = Gpu::new(SimConfig::with_shape(1, 1, threads)).unwrap();
    let asm = assemble(program, 0).unwrap();
    gpu.mem.load_image(0, &asm.image);
    gpu.start_warp(0, 0, 0);
    gpu.cores[0].warps[0].tmask = ThreadMask::new(mask, threads);
    for lane in 0..threads {
        let p = (preds >> lane) & 1;
        gpu.cores[0].warps[0].set_reg(lane, pred_reg, p);
    }
    gpu
}

/// Every (mask, predicate) pair for lane counts up to 4 must change the
/// warp exactly as the brute-force table says: 2^T x 2^T cases per width,
/// zero mismatches. Empty masks are unexecutable and asserted as table
/// no-ops only.
#[test]
fn exhaustive_split_table_matches_machine() {
    for threads in 1..=4u32 {
        let mut executed = 0;
        for case in enumerate_splits(threads) {
            if case.mask == 0 {
                assert!(case.nop);
                continue;
            }
            let mut gpu = machine(threads, "split x5\n", case.mask, 5, case.pred);
            step_warp(&mut gpu, 0, 0).unwrap();
            let w = &gpu.cores[0].warps[0];
            if case.nop {
                assert_eq!(w.tmask.bits(), case.mask, "nop must not change the mask");
                assert_eq!(w.ipdom_depth(), 0, "nop must not push");
            } else {
                assert_eq!(w.tmask.bits(), case.true_mask, "mask {:#b} pred {:#b}", case.mask, case.pred);
                assert_eq!(w.ipdom_depth(), 2);
                assert!(w.ipdom[0].fallthrough);
                assert_eq!(w.ipdom[0].mask.bits(), case.mask);
                assert!(!w.ipdom[1].fallthrough);
                assert_eq!(w.ipdom[1].mask.bits(), case.false_mask);
                assert_eq!(w.ipdom[1].pc, 4);
            }
            assert_eq!(w.pc, 4);
            executed += 1;
        }
        let total = 1u32 << threads;
        assert_eq!(executed, total * total - total); // all but the empty-mask row
    }
}

/// Executing split with a mixed predicate and running both paths to their
/// join restores exactly the pre-split mask with an empty stack.
#[test]
fn split_join_bracket_law() {
    let threads = 4u32;
    let program = "split x5\nnop\njoin\n";
    for case in enumerate_splits(threads) {
        if case.nop || case.mask == 0 {
            continue;
        }
        let mut gpu = machine(threads, program, case.mask, 5, case.pred);
        // true path: split, nop, join (pops the false side)
        for _ in 0..3 {
            step_warp(&mut gpu, 0, 0).unwrap();
        }
        assert_eq!(gpu.cores[0].warps[0].tmask.bits(), case.false_mask);
        assert_eq!(gpu.cores[0].warps[0].pc, 4);
        // false path: nop, join (pops the fall-through entry)
        for _ in 0..2 {
            step_warp(&mut gpu, 0, 0).unwrap();
        }
        let w = &gpu.cores[0].warps[0];
        assert_eq!(w.tmask.bits(), case.mask, "pre-split mask restored");
        assert_eq!(w.ipdom_depth(), 0);
        assert_eq!(w.pc, 12);
    }
}

/// Emit a chain of `lane < k` tests nested inside each other's then-blocks,
/// k = threads-1 down to 1. Every level is genuinely mixed, so the stack
/// reaches 2(threads-1) entries at the innermost point.
fn nested_chain_kernel(threads: u32, with_mask_probe: bool) -> String {
    let mut src = String::new();
    src.push_str(&format!("  li a0, {threads}\n  tmc a0\n  csrr t0, tid\n"));
    for k in (1..threads).rev() {
        src.push_str(&format!(
            "  li t1, {k}\n  slt t2, t0, t1\n__if t2\n  li t3, {k}\n  li t4, {0}\n  slli t5, t0, 2\n  add t4, t4, t5\n  sw t3, 0(t4)\n",
            0x8000 + k * 0x100,
        ));
    }
    src.push_str("  li t3, 7777\n  li t4, 0x7000\n  sw t3, 0(t4)\n");
    for k in 1..threads {
        src.push_str(&format!(
            "__else\n  li t3, {}\n  li t4, {}\n  slli t5, t0, 2\n  add t4, t4, t5\n  sw t3, 0(t4)\n__endif\n",
            1000 + k,
            0x8000 + k * 0x100,
        ));
    }
    if with_mask_probe {
        src.push_str("  csrr t6, tmask\n  li a1, 0x7100\n  sw t6, 0(a1)\n");
    }
    src.push_str("  tmc zero\n");
    src
}

#[test]
fn nested_divergence_reconverges_with_empty_stacks() {
    for threads in [2u32, 4, 8] {
        let src = nested_chain_kernel(threads, true);
        let mut gpu = Gpu::new(SimConfig::with_shape(1, 1, threads)).unwrap();
        let asm = assemble(&src, 0).unwrap();
        gpu.mem.load_image(0, &asm.image);
        gpu.start_warp(0, 0, 0);
        let outcome = run(&mut gpu, RunOptions::default());
        assert!(outcome.stats.fault.is_none(), "T={threads}: {:?}", outcome.stats.fault);

        // reconverged to the full mask before the final probe
        let full = ThreadMask::full(threads).bits();
        assert_eq!(gpu.mem.read_u32(0x7100).unwrap(), full, "T={threads}");
        // all IPDOM stacks drained at exit
        for w in &gpu.cores[0].warps {
            assert_eq!(w.ipdom_depth(), 0, "T={threads}");
        }
        // the stack grew to the serialization bound
        assert_eq!(outcome.stats.max_ipdom_depth, 2 * (threads as u64 - 1), "T={threads}");
        assert_eq!(outcome.stats.splits, threads as u64 - 1);
        // per-level stores: lanes < k took the then-path, lane k the else
        for k in 1..threads {
            let base = 0x8000 + k * 0x100;
            for lane in 0..threads {
                let got = gpu.mem.read_u32(base + lane * 4).unwrap();
                let want = if lane < k {
                    k
                } else if lane == k {
                    1000 + k
                } else {
                    0
                };
                assert_eq!(got, want, "T={threads} level {k} lane {lane}");
            }
        }
        assert_eq!(gpu.mem.read_u32(0x7000).unwrap(), 7777);
    }
}

/// The same nested kernels agree with the serialized scalar executor on
/// final memory, lane for lane.
#[test]
fn nested_divergence_matches_oracle() {
    for threads in [2u32, 4, 8] {
        let cfg = SimConfig::with_shape(1, 1, threads);
        let src = nested_chain_kernel(threads, false);
        let asm = assemble(&src, 0).unwrap();

        let mut gpu = Gpu::new(cfg.clone()).unwrap();
        gpu.mem.load_image(0, &asm.image);
        gpu.start_warp(0, 0, 0);
        let boot = gpu.mem.clone();
        let outcome = run(&mut gpu, RunOptions::default());
        assert!(outcome.stats.fault.is_none());

        let reference = oracle::run_serialized(boot, &cfg, 0, ThreadOrder::Ascending).unwrap();
        assert!(
            gpu.mem.content_eq(&reference.mem),
            "T={threads}: first difference at {:?}",
            gpu.mem.first_difference(&reference.mem)
        );
        for lane in 0..threads {
            let zero = [0u32; 32];
            let want = reference.regs.get(&(0, 0, lane)).unwrap_or(&zero);
            for r in 0..32u8 {
                assert_eq!(
                    gpu.cores[0].warps[0].reg(lane, r),
                    want[r as usize],
                    "T={threads} lane {lane} x{r}"
                );
            }
        }
    }
}

/// A bisecting divergence tree: every lane ends up alone in a leaf and
/// writes its own id; reconvergence must still restore the full mask.
#[test]
fn bisection_tree_kernel() {
    fn emit(src: &mut String, lo: u32, hi: u32) {
        if hi - lo == 1 {
            src.push_str(&format!(
                "  li t3, {}\n  slli t4, t0, 2\n  li t5, 0x6000\n  add t4, t4, t5\n  sw t3, 0(t4)\n",
                lo + 40
            ));
            return;
        }
        let mid = (lo + hi) / 2;
        src.push_str(&format!("  li t1, {mid}\n  slt t2, t0, t1\n__if t2\n"));
        emit(src, lo, mid);
        src.push_str("__else\n");
        emit(src, mid, hi);
        src.push_str("__endif\n");
    }

    for threads in [2u32, 4, 8] {
        let mut src = format!("  li a0, {threads}\n  tmc a0\n  csrr t0, tid\n");
        emit(&mut src, 0, threads);
        src.push_str("  csrr t6, tmask\n  li a1, 0x7200\n  sw t6, 0(a1)\n  tmc zero\n");

        let mut gpu = Gpu::new(SimConfig::with_shape(1, 1, threads)).unwrap();
        let asm = assemble(&src, 0).unwrap();
        gpu.mem.load_image(0, &asm.image);
        gpu.start_warp(0, 0, 0);
        let outcome = run(&mut gpu, RunOptions::default());
        assert!(outcome.stats.fault.is_none(), "T={threads}: {:?}", outcome.stats.fault);
        for lane in 0..threads {
            assert_eq!(gpu.mem.read_u32(0x6000 + 4 * lane).unwrap(), lane + 40);
        }
        assert_eq!(gpu.mem.read_u32(0x7200).unwrap(), ThreadMask::full(threads).bits());
        assert_eq!(gpu.cores[0].warps[0].ipdom_depth(), 0);
    }
}

/// Divergence nesting beyond the stack capacity is a clean fault, not a
/// silent corruption.
#[test]
fn divergence_overflow_faults() {
    // 2 threads bound the stack at depth 4; three mixed splits need 6
    let threads = 2;
    let src = "split x5\nsplit x5\nsplit x5\n";
    // lane 0 true, lane 1 false keeps every split mixed? After the first
    // split the mask is a lone lane, so force re-mixing through raw state.
    let mut gpu = machine(threads, src, 0b11, 5, 0b01);
    step_warp(&mut gpu, 0, 0).unwrap();
    gpu.cores[0].warps[0].tmask = ThreadMask::new(0b11, threads);
    step_warp(&mut gpu, 0, 0).unwrap();
    gpu.cores[0].warps[0].tmask = ThreadMask::new(0b11, threads);
    let err = step_warp(&mut gpu, 0, 0).unwrap_err();
    assert_eq!(err.kind, rvsimt::exec::FaultKind::DivergenceOverflow);
}
