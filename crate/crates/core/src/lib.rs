//! Cycle-level simulator for a SIMT GPGPU built on the RV32IM ISA plus a
//! five-instruction warp-control extension (`wspawn`, `tmc`, `split`,
//! `join`, `bar`).
//!
//! The crate is organized around the path an instruction takes through the
//! machine:
//!
//! - [`isa`]: bit-exact encode/decode, a small assembler, and a disassembler
//! - [`arch`]: architectural state (thread masks, IPDOM stacks, registers)
//! - [`sched`]: the four-mask warp scheduler
//! - [`barrier`]: per-core and global warp barrier tables
//! - [`mem`]: flat main memory, banked data/instruction caches, and
//!   word-interleaved shared memory with conflict accounting
//! - [`exec`]: functional execution of one instruction per warp, producing
//!   trace ops for the timing model
//! - [`timing`]: the trace-driven five-stage in-order pipeline and counters
//! - [`runtime`]: work-group dispatch — device query, partitioning, and the
//!   generated per-warp dispatch loop
//! - [`oracle`]: a serialized scalar reference executor used by tests
//! - [`bench`]: the bundled micro-benchmark kernels
//!
//! The narrative guide lives in `book/`; its code blocks compile and run as
//! part of `cargo test`.

pub mod arch;
pub mod barrier;
pub mod bench;
pub mod config;
pub mod exec;
pub mod gpu;
pub mod isa;
pub mod mem;
pub mod oracle;
pub mod runtime;
pub mod sched;
pub mod stats;
pub mod timing;
pub mod trace;

// Compile the book's code blocks as doctests so the guide can never drift
// from the library.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/isa.md")]
    mod isa {}
    #[doc = include_str!("../../../book/src/divergence.md")]
    mod divergence {}
    #[doc = include_str!("../../../book/src/scheduler.md")]
    mod scheduler {}
    #[doc = include_str!("../../../book/src/memory.md")]
    mod memory {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/dispatch.md")]
    mod dispatch {}
}
