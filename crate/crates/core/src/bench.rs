//! The bundled micro-benchmark kernels: vecadd, saxpy, reduction, tiled
//! matmul, and a frontier BFS expansion over a CSR graph.
//!
//! Every kernel is written against the dispatch ABI (group ID in `a0`, all
//! local lanes active, dispatch structure and argument block at their fixed
//! pages) and runs unmodified on any machine shape; the launch builder
//! picks grid/local dimensions and sizes to fit the shape. Expected outputs
//! are computed host-side, so a run is verified against data the simulator
//! never touched.
//!
//! Cross-lane communication through shared memory (reduction tree, matmul
//! tiles) is bracketed by `bar` with a warp count of one: free in lock-step
//! execution, and exactly the work-group sync point the serialized
//! reference executor synchronizes on.
//!
//! Data lives at fixed addresses: inputs from 0x10000, outputs at 0x30000
//! and up. The spots are documented per kernel below.

use crate::config::SimConfig;
use crate::gpu::Gpu;
use crate::isa::asm::assemble;
use crate::mem::Memory;
use crate::runtime::LaunchConfig;

pub const NAMES: [&str; 5] = ["vecadd", "saxpy", "reduction", "matmul", "bfs"];

/// A ready-to-run benchmark instance.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub name: &'static str,
    pub kernel_src: String,
    pub launch: LaunchConfig,
    /// Initial word arrays written before launch.
    pub data: Vec<(u32, Vec<u32>)>,
    /// Final word arrays the run must produce.
    pub expected: Vec<(u32, Vec<u32>)>,
}

impl BenchSpec {
    /// Assemble the kernel and write image plus input data into memory.
    pub fn load_into(&self, gpu: &mut Gpu) -> Result<(), String> {
        let asm =
            assemble(&self.kernel_src, 0).map_err(|e| format!("{} kernel: {e}", self.name))?;
        gpu.mem.load_image(0, &asm.image);
        for (addr, words) in &self.data {
            for (i, w) in words.iter().enumerate() {
                gpu.mem.write_u32(addr + 4 * i as u32, *w).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    /// Check the expected output arrays against a final memory image.
    pub fn verify(&self, mem: &Memory) -> Result<(), String> {
        for (addr, words) in &self.expected {
            for (i, want) in words.iter().enumerate() {
                let at = addr + 4 * i as u32;
                let got = mem.read_u32(at).map_err(|e| e.to_string())?;
                if got != *want {
                    return Err(format!(
                        "{}: word at {:#010x} is {:#x}, expected {:#x}",
                        self.name, at, got, want
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Run one benchmark and hold it against both oracles: the host-computed
/// expected arrays, and the serialized scalar executor (final memory plus
/// every lane's registers must match exactly).
pub fn run_checked(
    name: &str,
    cfg: &SimConfig,
    size: u32,
    options: crate::timing::RunOptions,
) -> Result<crate::timing::RunOutcome, String> {
    let spec = build_sized(name, cfg, size).ok_or_else(|| format!("no benchmark `{name}`"))?;
    let mut gpu = Gpu::new(cfg.clone())?;
    spec.load_into(&mut gpu)?;
    crate::runtime::prepare_launch(&mut gpu, &spec.launch).map_err(|e| e.to_string())?;
    let boot_image = gpu.mem.clone();
    let outcome = crate::timing::run(&mut gpu, options);
    if let Some(f) = &outcome.stats.fault {
        return Err(format!("{name}: fault {}: {}", f.kind, f.detail));
    }
    spec.verify(&gpu.mem)?;

    let reference = crate::oracle::run_serialized(
        boot_image,
        cfg,
        crate::runtime::STUB_BASE,
        crate::oracle::ThreadOrder::Ascending,
    )
    .map_err(|e| format!("{name}: reference executor failed: {e:?}"))?;
    if !gpu.mem.content_eq(&reference.mem) {
        let at = gpu.mem.first_difference(&reference.mem);
        return Err(format!("{name}: memory differs from the reference at {at:?}"));
    }
    for core in 0..cfg.machine.cores {
        for warp in 0..cfg.machine.warps {
            for lane in 0..cfg.machine.threads {
                let zero = [0u32; 32];
                let want = reference.regs.get(&(core, warp, lane)).unwrap_or(&zero);
                let w = &gpu.cores[core as usize].warps[warp as usize];
                for r in 0..32u8 {
                    if w.reg(lane, r) != want[r as usize] {
                        return Err(format!(
                            "{name}: core {core} warp {warp} lane {lane} x{r} = {:#x}, \
                             reference has {:#x}",
                            w.reg(lane, r),
                            want[r as usize]
                        ));
                    }
                }
            }
        }
    }
    Ok(outcome)
}

/// Deterministic test data.
fn gen(seed: u32, i: u32) -> u32 {
    (i.wrapping_add(seed)).wrapping_mul(2654435761).rotate_left(7).wrapping_add(0x9e37_79b9)
}

struct Lcg(u32);

impl Lcg {
    fn next(&mut self) -> u32 {
        self.0 = self.0.wrapping_mul(1664525).wrapping_add(1013904223);
        self.0 >> 8
    }
}

const IN_A: u32 = 0x10000;
const IN_B: u32 = 0x20000;
const OUT_C: u32 = 0x30000;
const PARTIALS: u32 = 0x40000;
const OUT_SUM: u32 = 0x50000;
// bfs reuses the slots: row 0x10000, col 0x20000, cur 0x40000, next 0x50000,
// visited 0x60000, predication scratch word 0x70000
const BFS_CUR: u32 = 0x40000;
const BFS_NEXT: u32 = 0x50000;
const BFS_VIS: u32 = 0x60000;
const BFS_SCRATCH: u32 = 0x70000;

/// Build a benchmark at its default size for a machine shape.
pub fn build(name: &str, cfg: &SimConfig) -> Option<BenchSpec> {
    build_sized(name, cfg, 0)
}

/// Build a benchmark with an explicit size knob (elements for the vector
/// kernels, matrix dimension for matmul, vertex budget for bfs); 0 picks
/// the default.
pub fn build_sized(name: &str, cfg: &SimConfig, size: u32) -> Option<BenchSpec> {
    match name {
        "vecadd" => Some(vecadd(cfg, size)),
        "saxpy" => Some(saxpy(cfg, size)),
        "reduction" => Some(reduction(cfg, size)),
        "matmul" => Some(matmul(cfg, size)),
        "bfs" => Some(bfs(cfg, size)),
        _ => None,
    }
}

fn elements(cfg: &SimConfig, size: u32) -> u32 {
    let t = cfg.machine.threads;
    let n = if size == 0 { 1024 } else { size };
    n.div_ceil(t) * t
}

fn vecadd(cfg: &SimConfig, size: u32) -> BenchSpec {
    let t = cfg.machine.threads;
    let n = elements(cfg, size);
    let a: Vec<u32> = (0..n).map(|i| gen(1, i)).collect();
    let b: Vec<u32> = (0..n).map(|i| gen(2, i)).collect();
    let c: Vec<u32> = a.iter().zip(&b).map(|(x, y)| x.wrapping_add(*y)).collect();
    let src = format!(
        "\
vecadd:
    li t0, {dispatch}
    lw t1, 40(t0)
    mul t2, a0, t1
    csrr t3, tid
    add t2, t2, t3
    slli t2, t2, 2
    li t4, {in_a}
    add t4, t4, t2
    lw t4, 0(t4)
    li t5, {in_b}
    add t5, t5, t2
    lw t5, 0(t5)
    add t4, t4, t5
    li t6, {out_c}
    add t6, t6, t2
    sw t4, 0(t6)
    ret
",
        dispatch = crate::runtime::DISPATCH_BASE,
        in_a = IN_A,
        in_b = IN_B,
        out_c = OUT_C,
    );
    BenchSpec {
        name: "vecadd",
        kernel_src: src,
        launch: LaunchConfig { grid: [n / t, 1, 1], local: [t, 1, 1], entry: 0, args: vec![] },
        data: vec![(IN_A, a), (IN_B, b)],
        expected: vec![(OUT_C, c)],
    }
}

fn saxpy(cfg: &SimConfig, size: u32) -> BenchSpec {
    let t = cfg.machine.threads;
    let n = elements(cfg, size);
    let alpha = 7u32;
    let x: Vec<u32> = (0..n).map(|i| gen(3, i)).collect();
    let y: Vec<u32> = (0..n).map(|i| gen(4, i)).collect();
    let out: Vec<u32> =
        x.iter().zip(&y).map(|(x, y)| x.wrapping_mul(alpha).wrapping_add(*y)).collect();
    let src = format!(
        "\
saxpy:
    li t0, {dispatch}
    lw t1, 40(t0)
    mul t2, a0, t1
    csrr t3, tid
    add t2, t2, t3
    slli t2, t2, 2
    li t4, {args}
    lw t4, 0(t4)
    li t5, {in_x}
    add t5, t5, t2
    lw t5, 0(t5)
    mul t5, t5, t4
    li t6, {in_y}
    add t6, t6, t2
    lw a1, 0(t6)
    add t5, t5, a1
    sw t5, 0(t6)
    ret
",
        dispatch = crate::runtime::DISPATCH_BASE,
        args = crate::runtime::ARG_BASE,
        in_x = IN_A,
        in_y = IN_B,
    );
    BenchSpec {
        name: "saxpy",
        kernel_src: src,
        launch: LaunchConfig { grid: [n / t, 1, 1], local: [t, 1, 1], entry: 0, args: vec![alpha] },
        data: vec![(IN_A, x), (IN_B, y.clone())],
        expected: vec![(IN_B, out)],
    }
}

fn reduction(cfg: &SimConfig, size: u32) -> BenchSpec {
    let t = cfg.machine.threads;
    let groups = cfg.machine.cores * cfg.machine.warps; // one group per warp
    let per_lane = if size == 0 { (1024 / (groups * t)).max(1) } else { size.max(1) };
    let chunk = per_lane * t;
    let n = groups * chunk;
    let input: Vec<u32> = (0..n).map(|i| gen(5, i)).collect();
    let partials: Vec<u32> = (0..groups)
        .map(|g| (0..chunk).map(|k| input[(g * chunk + k) as usize]).fold(0u32, u32::wrapping_add))
        .collect();
    let total = partials.iter().fold(0u32, |a, &b| a.wrapping_add(b));
    let src = format!(
        "\
reduce:
    li t0, {dispatch}
    lw t1, 40(t0)            # lanes
    li t2, {args}
    lw t2, 0(t2)             # chunk
    mul t3, a0, t2           # base element
    csrr t4, tid
    csrr a1, wid
    csrr a2, ntid
    mul a1, a1, a2
    slli a1, a1, 2
    li t0, {shared}
    add t0, t0, a1           # this warp's private shared region
    li t5, 0                 # acc
    mv t6, t4                # k = lane
red_loop:
    bge t6, t2, red_done
    add a1, t3, t6
    slli a1, a1, 2
    li a2, {input}
    add a1, a1, a2
    lw a1, 0(a1)
    add t5, t5, a1
    add t6, t6, t1
    j red_loop
red_done:
    slli a2, t4, 2
    add a1, t0, a2
    sw t5, 0(a1)             # shared[lane] = acc
    li a4, 1
    li a5, 1
    bar a4, a5               # group sync: partial stores visible
    srli a3, t1, 1           # k = lanes/2
tree:
    beqz a3, tree_done
    tmc a3                   # fold with the low k lanes
    slli a2, t4, 2
    add a1, t0, a2
    lw a4, 0(a1)
    slli a5, a3, 2
    add a5, a1, a5
    lw a5, 0(a5)
    add a4, a4, a5
    sw a4, 0(a1)
    li a4, 1
    li a5, 1
    bar a4, a5               # group sync between tree levels
    srli a3, a3, 1
    j tree
tree_done:
    lw a2, 0(t0)             # warp total
    slli a4, a0, 2
    li a5, {partials}
    add a4, a4, a5
    sw a2, 0(a4)             # partials[group]
    li a6, {dispatch}
    lw a7, 40(a6)
    tmc a7                   # re-widen to the work-group size
    li a6, {dispatch}
    lw a2, 32(a6)            # warps that ran a group
    li a3, {global_bit}
    bar a3, a2               # whole-launch barrier (global id 0)
    bnez a0, red_exit        # only group 0 folds the partials
    li a1, 1
    tmc a1                   # lane 0 serial sum
    li a1, {dispatch}
    lw a2, 0(a1)             # total groups
    li a3, {partials}
    li a4, 0
    li a5, 0
fin_loop:
    bge a5, a2, fin_done
    slli a6, a5, 2
    add a6, a6, a3
    lw a6, 0(a6)
    add a4, a4, a6
    addi a5, a5, 1
    j fin_loop
fin_done:
    li a6, {out}
    sw a4, 0(a6)
    li a6, 1
    li a7, 1
    bar a6, a7               # group sync: narrowed lanes settle first
    li a7, {dispatch}
    lw a7, 40(a7)
    tmc a7                   # re-widen before returning
red_exit:
    ret
",
        dispatch = crate::runtime::DISPATCH_BASE,
        args = crate::runtime::ARG_BASE,
        input = IN_A,
        shared = crate::mem::SHARED_BASE,
        partials = PARTIALS,
        out = OUT_SUM,
        global_bit = crate::barrier::GLOBAL_BARRIER_BIT,
    );
    BenchSpec {
        name: "reduction",
        kernel_src: src,
        launch: LaunchConfig { grid: [groups, 1, 1], local: [t, 1, 1], entry: 0, args: vec![chunk] },
        data: vec![(IN_A, input)],
        expected: vec![(PARTIALS, partials), (OUT_SUM, vec![total])],
    }
}

fn matmul(cfg: &SimConfig, size: u32) -> BenchSpec {
    let t = cfg.machine.threads;
    let scale = if size == 0 { 16 } else { size };
    let n = t * (scale / t).max(1); // dimension, a multiple of the lane count
    let gpr = n / t; // tiles per matrix row
    let a: Vec<u32> = (0..n * n).map(|i| gen(6, i) % 1000).collect();
    let b: Vec<u32> = (0..n * n).map(|i| gen(7, i) % 1000).collect();
    let mut c = vec![0u32; (n * n) as usize];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0u32;
            for k in 0..n {
                acc =
                    acc.wrapping_add(a[(i * n + k) as usize].wrapping_mul(b[(k * n + j) as usize]));
            }
            c[(i * n + j) as usize] = acc;
        }
    }
    let src = format!(
        "\
matmul:
    li t0, {dispatch}
    lw t1, 40(t0)            # lanes (tile width)
    li t0, {args}
    lw t2, 0(t0)             # n
    lw t3, 4(t0)             # tiles per row
    remu t4, a0, t3          # tile x
    divu t5, a0, t3          # tile y
    csrr t6, tid
    csrr a1, wid
    csrr a2, ntid
    mul a1, a1, a2
    slli a1, a1, 2
    li t0, {shared}
    add t0, t0, a1           # this warp's private staging region
    li a1, 0                 # r: row within the tile
mm_row:
    bge a1, t1, mm_ret
    li a3, 0                 # acc
    li a2, 0                 # kt
mm_kt:
    bge a2, t3, mm_store
    mul a4, t5, t1
    add a4, a4, a1           # row
    mul a4, a4, t2
    mul a5, a2, t1
    add a4, a4, a5
    add a4, a4, t6           # row*n + kt*T + lane
    slli a4, a4, 2
    li a5, {mat_a}
    add a4, a4, a5
    lw a4, 0(a4)
    slli a6, t6, 2
    add a6, t0, a6
    sw a4, 0(a6)             # stage the A row chunk
    li a4, 1
    li a5, 1
    bar a4, a5               # group sync: chunk staged
    li a4, 0                 # j
mm_j:
    bge a4, t1, mm_jdone
    slli a6, a4, 2
    add a6, t0, a6
    lw a6, 0(a6)             # a value (broadcast)
    mul a7, a2, t1
    add a7, a7, a4
    mul a7, a7, t2
    mul a5, t4, t1
    add a7, a7, a5
    add a7, a7, t6           # (kt*T+j)*n + tilex*T + lane
    slli a7, a7, 2
    li a5, {mat_b}
    add a7, a7, a5
    lw a7, 0(a7)
    mul a6, a6, a7
    add a3, a3, a6
    addi a4, a4, 1
    j mm_j
mm_jdone:
    li a4, 1
    li a5, 1
    bar a4, a5               # group sync before restaging
    addi a2, a2, 1
    j mm_kt
mm_store:
    mul a4, t5, t1
    add a4, a4, a1
    mul a4, a4, t2
    mul a5, t4, t1
    add a4, a4, a5
    add a4, a4, t6
    slli a4, a4, 2
    li a5, {mat_c}
    add a4, a4, a5
    sw a3, 0(a4)
    addi a1, a1, 1
    j mm_row
mm_ret:
    ret
",
        dispatch = crate::runtime::DISPATCH_BASE,
        args = crate::runtime::ARG_BASE,
        shared = crate::mem::SHARED_BASE,
        mat_a = IN_A,
        mat_b = IN_B,
        mat_c = OUT_C,
    );
    BenchSpec {
        name: "matmul",
        kernel_src: src,
        launch: LaunchConfig {
            grid: [gpr * gpr, 1, 1],
            local: [t, 1, 1],
            entry: 0,
            args: vec![n, gpr],
        },
        data: vec![(IN_A, a), (IN_B, b)],
        expected: vec![(OUT_C, c)],
    }
}

fn bfs(cfg: &SimConfig, size: u32) -> BenchSpec {
    let t = cfg.machine.threads;
    let groups = cfg.machine.cores * cfg.machine.warps;
    let target = if size == 0 { 256 } else { size };
    let per_lane = (target / (groups * t)).max(1);
    let chunk = per_lane * t;
    let v = groups * chunk;
    let max_deg = 4u32;

    // deterministic CSR graph with irregular degrees
    let mut rng = Lcg(0x1234_5678);
    let mut row = Vec::with_capacity(v as usize + 1);
    let mut col = Vec::new();
    row.push(0u32);
    for _ in 0..v {
        let deg = rng.next() % (max_deg + 1);
        for _ in 0..deg {
            col.push(rng.next() % v);
        }
        row.push(col.len() as u32);
    }
    col.push(0); // pad so col[row[v]] is always a readable word
    let cur: Vec<u32> = (0..v).map(|_| u32::from(rng.next() % 4 == 0)).collect();
    let vis = cur.clone(); // the frontier is already visited

    // host mirror of the predicated expansion, scratch store included
    let mut next = vec![0u32; v as usize];
    let mut scratch = 0u32;
    for vert in 0..v as usize {
        let inf = cur[vert];
        let rs = row[vert];
        let deg = row[vert + 1] - rs;
        for j in 0..max_deg {
            let c1 = j < deg;
            let off = if c1 { j } else { 0 };
            let nb = col[(rs + off) as usize] as usize;
            if c1 && inf == 1 && vis[nb] == 0 {
                next[nb] = 1;
            } else {
                scratch = 1;
            }
        }
    }

    let src = format!(
        "\
bfs:
    li t0, {dispatch}
    lw t0, 40(t0)            # lanes
    li t1, {args}
    lw t2, 8(t1)             # chunk
    lw t1, 4(t1)             # max degree
    csrr t3, tid
    mul t5, a0, t2           # base vertex
    mv t4, t3                # k = lane
bfs_vloop:
    bge t4, t2, bfs_ret
    add a7, t5, t4           # v
    slli a4, a7, 2
    li a5, {cur}
    add a5, a5, a4
    lw a6, 0(a5)             # in frontier?
    li a5, {row}
    add a5, a5, a4
    lw a1, 0(a5)             # edges start
    lw a2, 4(a5)
    sub a2, a2, a1           # degree
    li a3, 0                 # j
bfs_jloop:
    bge a3, t1, bfs_jdone
    slt a4, a3, a2           # within degree?
    and a5, a4, a6
    neg a4, a4
    and a4, a4, a3           # clamp the edge offset
    add a4, a4, a1
    slli a4, a4, 2
    li t6, {col}
    add a4, a4, t6
    lw a4, 0(a4)             # neighbor
    slli t6, a4, 2
    li a4, {vis}
    add a4, a4, t6
    lw a4, 0(a4)             # already visited?
    xori a4, a4, 1
    and a5, a5, a4           # update wanted
    neg a5, a5
    li a4, {next}
    add a4, a4, t6
    and a4, a4, a5           # real target if wanted
    li t6, {scratch}
    not a5, a5
    and a5, a5, t6           # scratch sink otherwise
    or a4, a4, a5
    li a5, 1
    sw a5, 0(a4)
    addi a3, a3, 1
    j bfs_jloop
bfs_jdone:
    add t4, t4, t0
    j bfs_vloop
bfs_ret:
    ret
",
        dispatch = crate::runtime::DISPATCH_BASE,
        args = crate::runtime::ARG_BASE,
        row = IN_A,
        col = IN_B,
        cur = BFS_CUR,
        next = BFS_NEXT,
        vis = BFS_VIS,
        scratch = BFS_SCRATCH,
    );
    BenchSpec {
        name: "bfs",
        kernel_src: src,
        launch: LaunchConfig {
            grid: [groups, 1, 1],
            local: [t, 1, 1],
            entry: 0,
            args: vec![v, max_deg, chunk],
        },
        data: vec![(IN_A, row), (IN_B, col), (BFS_CUR, cur), (BFS_VIS, vis)],
        expected: vec![(BFS_NEXT, next), (BFS_SCRATCH, vec![scratch])],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::spawn_kernel;
    use crate::timing::RunOptions;

    fn run_bench(name: &str, cfg: &SimConfig) {
        let spec = build(name, cfg).unwrap();
        let mut gpu = Gpu::new(cfg.clone()).unwrap();
        spec.load_into(&mut gpu).unwrap();
        let out = spawn_kernel(&mut gpu, &spec.launch, RunOptions::default()).unwrap();
        assert!(out.stats.fault.is_none(), "{name}: {:?}", out.stats.fault);
        spec.verify(&gpu.mem).unwrap();
    }

    #[test]
    fn vecadd_default_shape() {
        run_bench("vecadd", &SimConfig::with_shape(1, 4, 4));
    }

    #[test]
    fn saxpy_default_shape() {
        run_bench("saxpy", &SimConfig::with_shape(1, 4, 4));
    }

    #[test]
    fn reduction_default_shape() {
        run_bench("reduction", &SimConfig::with_shape(1, 4, 4));
    }

    #[test]
    fn matmul_default_shape() {
        run_bench("matmul", &SimConfig::with_shape(1, 4, 4));
    }

    #[test]
    fn bfs_default_shape() {
        run_bench("bfs", &SimConfig::with_shape(1, 4, 4));
    }

    #[test]
    fn names_all_build() {
        let cfg = SimConfig::with_shape(1, 2, 2);
        for name in NAMES {
            assert!(build(name, &cfg).is_some());
        }
        assert!(build("nope", &cfg).is_none());
    }
}
