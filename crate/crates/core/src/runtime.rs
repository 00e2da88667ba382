//! Host-side kernel dispatch.
//!
//! A launch mirrors the device-query / partition / spawn sequence: read the
//! machine shape through the CSRs, divide the work-groups into near-equal
//! contiguous ID ranges per hardware warp, write that plan into a reserved
//! dispatch page, and start warp 0 of every core at a generated stub. The
//! stub spawns the remaining warps with `wspawn`, widens each warp to the
//! work-group size with `tmc`, points `sp` at a private per-lane stack, and
//! loops over the warp's assigned group IDs calling the kernel with a fresh
//! group ID in `a0` each time. A warp that finishes its range sets its
//! thread mask to zero, which removes it from the scheduler.
//!
//! ## Reserved memory map
//!
//! | address        | contents                                   |
//! |----------------|--------------------------------------------|
//! | `0xFEFF0000`   | dispatch stub code (and the stack ceiling) |
//! | `0xFEFF1000`   | dispatch structure (see field offsets)     |
//! | `0xFEFF2000`   | kernel argument words                      |
//! | below `0xFEFF0000` | per-(warp, lane) stacks, growing down  |
//! | `0xFF000000`   | shared-memory window                       |
//!
//! Kernels are entered with every local lane active, `a0` holding the
//! linear group ID, and must preserve `s0`, `s1`, and `sp`.

use std::fmt;

use crate::arch::csr;
use crate::gpu::Gpu;
use crate::isa::asm::assemble;
use crate::timing::{run, RunOptions, RunOutcome};

/// Base address of the generated dispatch stub.
pub const STUB_BASE: u32 = 0xfeff_0000;
/// Base address of the dispatch structure.
pub const DISPATCH_BASE: u32 = 0xfeff_1000;
/// Base address of the kernel argument block.
pub const ARG_BASE: u32 = 0xfeff_2000;
/// Per-lane stacks grow downward from here.
pub const STACK_TOP: u32 = 0xfeff_0000;

/// Dispatch-structure field offsets (bytes from [`DISPATCH_BASE`]).
pub mod dispatch_field {
    pub const TOTAL_GROUPS: u32 = 0;
    pub const GRID_X: u32 = 4;
    pub const GRID_Y: u32 = 8;
    pub const GRID_Z: u32 = 12;
    pub const LOCAL_X: u32 = 16;
    pub const LOCAL_Y: u32 = 20;
    pub const LOCAL_Z: u32 = 24;
    pub const ARGS_BASE: u32 = 28;
    /// Warps that execute the kernel body at least once; the count kernels
    /// pass to `bar` for whole-launch synchronization.
    pub const ACTIVE_WARPS: u32 = 32;
    pub const KERNEL_ENTRY: u32 = 36;
    /// Linearized work-group size (lanes per warp).
    pub const LOCAL_LINEAR: u32 = 40;
    /// `[first, last)` group-ID pairs per global warp start here.
    pub const RANGES: u32 = 64;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchConfig {
    /// Work-group counts per dimension.
    pub grid: [u32; 3],
    /// Work-items per group per dimension; the linearized product maps to
    /// lanes of one warp.
    pub local: [u32; 3],
    /// Kernel entry address.
    pub entry: u32,
    /// Argument words copied to [`ARG_BASE`].
    pub args: Vec<u32>,
}

impl LaunchConfig {
    pub fn total_groups(&self) -> u32 {
        self.grid[0] * self.grid[1] * self.grid[2]
    }

    pub fn local_linear(&self) -> u32 {
        self.local[0] * self.local[1] * self.local[2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LaunchError {
    ZeroDim,
    LocalTooLarge { requested: u32, hardware: u32 },
    TooManyArgs(usize),
    BadEntry(u32),
    OutOfRange { id: u32, total: u32 },
}

impl fmt::Display for LaunchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LaunchError::ZeroDim => write!(f, "grid and local dimensions must all be at least 1"),
            LaunchError::LocalTooLarge { requested, hardware } => write!(
                f,
                "work-group size {requested} exceeds the {hardware} hardware threads per warp"
            ),
            LaunchError::TooManyArgs(n) => write!(f, "{n} argument words exceed the argument page"),
            LaunchError::BadEntry(pc) => write!(f, "kernel entry 0x{pc:08x} is not word-aligned"),
            LaunchError::OutOfRange { id, total } => {
                write!(f, "group id {id} out of range for {total} groups")
            }
        }
    }
}

impl std::error::Error for LaunchError {}

/// Contiguous `[first, last)` group-ID ranges, one per hardware warp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchPlan {
    pub ranges: Vec<(u32, u32)>,
}

/// Read the machine shape back through the CSR file, the same way kernel
/// code would: (warps per core, threads per warp, cores).
pub fn query_device(gpu: &Gpu) -> (u32, u32, u32) {
    let core = &gpu.cores[0];
    let warp = &core.warps[0];
    let read = |addr| core.csr.read(warp, 0, addr, gpu.cycle).expect("identity csr");
    (read(csr::NUM_WARPS), read(csr::NUM_THREADS), read(csr::NUM_CORES))
}

/// Divide `total_groups` into near-equal contiguous ranges over `warps`
/// warps; the first `total_groups % warps` warps take one extra group.
pub fn plan_dispatch(total_groups: u32, warps: u32) -> DispatchPlan {
    assert!(warps >= 1);
    let base = total_groups / warps;
    let extra = total_groups % warps;
    let mut ranges = Vec::with_capacity(warps as usize);
    let mut next = 0u32;
    for w in 0..warps {
        let len = base + u32::from(w < extra);
        ranges.push((next, next + len));
        next += len;
    }
    DispatchPlan { ranges }
}

/// Convert a linear group ID to (x, y, z) group coordinates.
pub fn group_coords(id: u32, grid: [u32; 3]) -> Result<(u32, u32, u32), LaunchError> {
    let total = grid[0] * grid[1] * grid[2];
    if id >= total {
        return Err(LaunchError::OutOfRange { id, total });
    }
    let x = id % grid[0];
    let y = (id / grid[0]) % grid[1];
    let z = id / (grid[0] * grid[1]);
    Ok((x, y, z))
}

fn stub_source(gpu: &Gpu, launch: &LaunchConfig) -> String {
    let warps = gpu.num_warps();
    let local = launch.local_linear();
    let stride = gpu.config.machine.stack_stride;
    format!(
        "\
_stub:
    li a0, {warps}
    la a1, _per_warp
    wspawn a0, a1
    j _per_warp
_per_warp:
    li a0, {local}
    tmc a0
    csrr t0, wid
    csrr t1, cid
    csrr t2, tid
    csrr t3, nwid
    mul t4, t1, t3
    add t4, t4, t0          # global warp id
    csrr t5, ntid
    mul t6, t4, t5
    add t6, t6, t2          # global lane index
    li t5, {stride}
    mul t6, t6, t5
    li sp, {stack_top}
    sub sp, sp, t6
    li s2, {dispatch}
    slli s3, t4, 3
    add s3, s3, s2
    lw s0, {ranges}(s3)     # first group id
    lw s1, {ranges_hi}(s3)  # last group id (exclusive)
_loop:
    bge s0, s1, _done
    mv a0, s0
    li t0, {entry}
    jalr ra, t0, 0
    addi s0, s0, 1
    j _loop
_done:
    tmc zero
",
        warps = warps,
        local = local,
        stride = stride,
        stack_top = STACK_TOP,
        dispatch = DISPATCH_BASE,
        ranges = dispatch_field::RANGES,
        ranges_hi = dispatch_field::RANGES + 4,
        entry = launch.entry,
    )
}

/// Validate a launch, write the dispatch structure, argument block, and
/// stub into device memory, and start warp 0 of every core at the stub.
/// The caller decides when to run the clock.
pub fn prepare_launch(gpu: &mut Gpu, launch: &LaunchConfig) -> Result<(), LaunchError> {
    if launch.grid.iter().chain(launch.local.iter()).any(|&d| d == 0) {
        return Err(LaunchError::ZeroDim);
    }
    let local = launch.local_linear();
    let hardware = gpu.num_threads();
    if local > hardware {
        return Err(LaunchError::LocalTooLarge { requested: local, hardware });
    }
    if launch.args.len() > 1024 {
        return Err(LaunchError::TooManyArgs(launch.args.len()));
    }
    if launch.entry % 4 != 0 {
        return Err(LaunchError::BadEntry(launch.entry));
    }

    let total_groups = launch.total_groups();
    let total_warps = gpu.num_cores() * gpu.num_warps();
    let plan = plan_dispatch(total_groups, total_warps);

    let w32 = |gpu: &mut Gpu, off: u32, v: u32| {
        gpu.mem.write_u32(DISPATCH_BASE + off, v).expect("dispatch page is mapped")
    };
    use dispatch_field as f;
    w32(gpu, f::TOTAL_GROUPS, total_groups);
    w32(gpu, f::GRID_X, launch.grid[0]);
    w32(gpu, f::GRID_Y, launch.grid[1]);
    w32(gpu, f::GRID_Z, launch.grid[2]);
    w32(gpu, f::LOCAL_X, launch.local[0]);
    w32(gpu, f::LOCAL_Y, launch.local[1]);
    w32(gpu, f::LOCAL_Z, launch.local[2]);
    w32(gpu, f::ARGS_BASE, ARG_BASE);
    w32(gpu, f::ACTIVE_WARPS, total_groups.min(total_warps));
    w32(gpu, f::KERNEL_ENTRY, launch.entry);
    w32(gpu, f::LOCAL_LINEAR, local);
    for (i, (first, last)) in plan.ranges.iter().enumerate() {
        w32(gpu, f::RANGES + 8 * i as u32, *first);
        w32(gpu, f::RANGES + 8 * i as u32 + 4, *last);
    }
    for (i, arg) in launch.args.iter().enumerate() {
        gpu.mem.write_u32(ARG_BASE + 4 * i as u32, *arg).expect("argument page is mapped");
    }

    let stub =
        assemble(&stub_source(gpu, launch), STUB_BASE).expect("generated stub always assembles");
    gpu.mem.load_image(STUB_BASE, &stub.image);

    for core in 0..gpu.num_cores() {
        gpu.start_warp(core, 0, STUB_BASE);
    }
    Ok(())
}

/// Launch a kernel and run the device to completion.
pub fn spawn_kernel(
    gpu: &mut Gpu,
    launch: &LaunchConfig,
    options: RunOptions,
) -> Result<RunOutcome, LaunchError> {
    prepare_launch(gpu, launch)?;
    Ok(run(gpu, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;

    #[test]
    fn query_echoes_configuration() {
        let gpu = Gpu::new(SimConfig::with_shape(1, 4, 8)).unwrap();
        assert_eq!(query_device(&gpu), (4, 8, 1));
        let gpu = Gpu::new(SimConfig::with_shape(2, 2, 2)).unwrap();
        assert_eq!(query_device(&gpu), (2, 2, 2));
        // immutability
        assert_eq!(query_device(&gpu), (2, 2, 2));
    }

    #[test]
    fn plan_even_division() {
        let p = plan_dispatch(16, 4);
        assert_eq!(p.ranges, vec![(0, 4), (4, 8), (8, 12), (12, 16)]);
    }

    #[test]
    fn plan_remainder_to_first_warps() {
        let p = plan_dispatch(10, 4);
        let sizes: Vec<u32> = p.ranges.iter().map(|(a, b)| b - a).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
    }

    #[test]
    fn plan_more_warps_than_groups() {
        let p = plan_dispatch(2, 4);
        assert_eq!(p.ranges, vec![(0, 1), (1, 2), (2, 2), (2, 2)]);
    }

    /// Ranges partition [0, total) exactly for every shape up to 64x64.
    #[test]
    fn plan_partitions_exactly() {
        for groups in 0..=64 {
            for warps in 1..=64 {
                let p = plan_dispatch(groups, warps);
                assert_eq!(p.ranges.len(), warps as usize);
                let mut next = 0;
                for &(a, b) in &p.ranges {
                    assert_eq!(a, next, "{groups} groups {warps} warps");
                    assert!(b >= a);
                    next = b;
                }
                assert_eq!(next, groups);
                let max = p.ranges.iter().map(|(a, b)| b - a).max().unwrap();
                let min = p.ranges.iter().map(|(a, b)| b - a).min().unwrap();
                assert!(max - min <= 1, "sizes differ by more than one");
            }
        }
    }

    #[test]
    fn coords_round_trip() {
        assert_eq!(group_coords(0, [4, 2, 2]).unwrap(), (0, 0, 0));
        assert_eq!(group_coords(5, [4, 2, 2]).unwrap(), (1, 1, 0));
        assert_eq!(group_coords(15, [4, 2, 2]).unwrap(), (3, 1, 1));
        // relinearize every id
        let grid = [3, 4, 5];
        for id in 0..60 {
            let (x, y, z) = group_coords(id, grid).unwrap();
            assert_eq!(x + grid[0] * (y + grid[1] * z), id);
        }
        assert!(group_coords(60, grid).is_err());
    }

    #[test]
    fn launch_validation() {
        let mut gpu = Gpu::new(SimConfig::with_shape(1, 2, 4)).unwrap();
        let bad = LaunchConfig { grid: [1, 1, 1], local: [8, 1, 1], entry: 0, args: vec![] };
        assert_eq!(
            prepare_launch(&mut gpu, &bad),
            Err(LaunchError::LocalTooLarge { requested: 8, hardware: 4 })
        );
        let bad = LaunchConfig { grid: [0, 1, 1], local: [1, 1, 1], entry: 0, args: vec![] };
        assert_eq!(prepare_launch(&mut gpu, &bad), Err(LaunchError::ZeroDim));
        let bad = LaunchConfig { grid: [1, 1, 1], local: [1, 1, 1], entry: 2, args: vec![] };
        assert_eq!(prepare_launch(&mut gpu, &bad), Err(LaunchError::BadEntry(2)));
    }

    #[test]
    fn prepare_writes_plan_and_starts_warp0() {
        let mut gpu = Gpu::new(SimConfig::with_shape(1, 4, 4)).unwrap();
        let launch =
            LaunchConfig { grid: [10, 1, 1], local: [4, 1, 1], entry: 0x100, args: vec![7, 9] };
        prepare_launch(&mut gpu, &launch).unwrap();
        use dispatch_field as f;
        let rd = |off| gpu.mem.read_u32(DISPATCH_BASE + off).unwrap();
        assert_eq!(rd(f::TOTAL_GROUPS), 10);
        assert_eq!(rd(f::LOCAL_LINEAR), 4);
        assert_eq!(rd(f::ACTIVE_WARPS), 4);
        assert_eq!(rd(f::KERNEL_ENTRY), 0x100);
        assert_eq!(rd(f::RANGES), 0);
        assert_eq!(rd(f::RANGES + 4), 3);
        assert_eq!(gpu.mem.read_u32(ARG_BASE).unwrap(), 7);
        assert_eq!(gpu.mem.read_u32(ARG_BASE + 4).unwrap(), 9);
        assert!(gpu.cores[0].sched.is_active(0));
        assert_eq!(gpu.cores[0].warps[0].pc, STUB_BASE);
        // the stub assembled to something decodable
        let first = gpu.mem.read_u32(STUB_BASE).unwrap();
        assert!(crate::isa::decode(first).is_ok());
    }
}
