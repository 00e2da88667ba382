//! The warp machine against the serialized scalar executor: every bundled
//! kernel, a few machine shapes, exact memory and register agreement.
//! The acceptance suite widens this to the full shape matrix.

use rvsimt::bench::{self, NAMES};
use rvsimt::config::SimConfig;
use rvsimt::timing::RunOptions;

#[test]
fn all_benchmarks_match_reference_on_mixed_shapes() {
    for (cores, warps, threads) in [(1, 1, 1), (1, 2, 4), (1, 8, 2), (2, 2, 4)] {
        let cfg = SimConfig::with_shape(cores, warps, threads);
        for name in NAMES {
            bench::run_checked(name, &cfg, 0, RunOptions::default()).unwrap_or_else(|e| {
                panic!("{name} on ({cores},{warps},{threads}): {e}");
            });
        }
    }
}

/// The same kernel image must produce identical results whatever the
/// machine shape (only the launch geometry adapts).
#[test]
fn config_portability_identical_output() {
    let mut reference: Option<Vec<u8>> = None;
    for (warps, threads) in [(1, 4), (4, 4), (2, 8)] {
        let cfg = SimConfig::with_shape(1, warps, threads);
        let spec = bench::build("vecadd", &cfg).unwrap();
        let mut gpu = rvsimt::gpu::Gpu::new(cfg).unwrap();
        spec.load_into(&mut gpu).unwrap();
        let out =
            rvsimt::runtime::spawn_kernel(&mut gpu, &spec.launch, RunOptions::default()).unwrap();
        assert!(out.stats.fault.is_none());
        let c = gpu.mem.read_bytes(0x30000, 4096);
        match &reference {
            None => reference = Some(c),
            Some(r) => assert_eq!(r, &c, "({warps},{threads}) diverged"),
        }
    }
}

/// Work coverage: a kernel that increments its own cell once per
/// (group, lane) leaves every cell at exactly one.
#[test]
fn every_work_item_runs_exactly_once() {
    for (warps, threads, groups) in [(2u32, 4u32, 7u32), (4, 2, 16), (3, 3, 5)] {
        let cfg = SimConfig::with_shape(1, warps, threads);
        let src = format!(
            "\
kernel:
    li t0, {dispatch}
    lw t1, 40(t0)
    mul t2, a0, t1
    csrr t3, tid
    add t2, t2, t3
    slli t2, t2, 2
    li t4, 0x9000
    add t4, t4, t2
    lw t5, 0(t4)
    addi t5, t5, 1
    sw t5, 0(t4)
    ret
",
            dispatch = rvsimt::runtime::DISPATCH_BASE
        );
        let mut gpu = rvsimt::gpu::Gpu::new(cfg).unwrap();
        let asm = rvsimt::isa::asm::assemble(&src, 0).unwrap();
        gpu.mem.load_image(0, &asm.image);
        let launch = rvsimt::runtime::LaunchConfig {
            grid: [groups, 1, 1],
            local: [threads, 1, 1],
            entry: 0,
            args: vec![],
        };
        let out = rvsimt::runtime::spawn_kernel(&mut gpu, &launch, RunOptions::default()).unwrap();
        assert!(out.stats.fault.is_none());
        for cell in 0..groups * threads {
            assert_eq!(
                gpu.mem.read_u32(0x9000 + 4 * cell).unwrap(),
                1,
                "({warps},{threads}) groups={groups} cell {cell}"
            );
        }
    }
}
