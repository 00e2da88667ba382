//! Whole-device state: cores, main memory, the global barrier table, and
//! the console stream. One `Gpu` owns everything a simulation touches, so
//! independent simulations can run concurrently without shared state.

use crate::arch::{CsrFile, WarpContext};
use crate::barrier::{BarrierTable, DEFAULT_BARRIER_SLOTS};
use crate::config::SimConfig;
use crate::mem::{Cache, Memory, SharedMem};
use crate::sched::SchedulerMasks;

#[derive(Debug, Clone)]
pub struct Core {
    pub id: u32,
    pub warps: Vec<WarpContext>,
    pub sched: SchedulerMasks,
    pub shared: SharedMem,
    pub dcache: Cache,
    pub icache: Cache,
    pub csr: CsrFile,
    pub local_barriers: BarrierTable,
    /// Set when an exit syscall committed on this core.
    pub halted: bool,
}

impl Core {
    fn new(id: u32, cfg: &SimConfig) -> Self {
        let m = &cfg.machine;
        Core {
            id,
            warps: (0..m.warps).map(|w| WarpContext::new(w, m.threads)).collect(),
            sched: SchedulerMasks::new(m.warps),
            shared: SharedMem::new(cfg.shared.size, cfg.shared_banks()),
            dcache: Cache::new(cfg.dcache.geometry()),
            icache: Cache::new(cfg.icache.geometry()),
            csr: CsrFile {
                core_id: id,
                num_cores: m.cores,
                num_warps: m.warps,
                num_threads: m.threads,
                instret: 0,
            },
            local_barriers: BarrierTable::new(DEFAULT_BARRIER_SLOTS, 1),
            halted: false,
        }
    }

    /// True once this core has nothing left to run.
    pub fn done(&self) -> bool {
        self.halted || !self.sched.any_active()
    }
}

#[derive(Debug, Clone)]
pub struct Gpu {
    pub config: SimConfig,
    pub mem: Memory,
    pub cores: Vec<Core>,
    pub global_barriers: BarrierTable,
    pub console: Vec<u8>,
    pub cycle: u64,
    /// Exit code of the first exit syscall, if any.
    pub exit_code: Option<u32>,
}

impl Gpu {
    pub fn new(config: SimConfig) -> Result<Self, String> {
        config.validate()?;
        let cores = (0..config.machine.cores).map(|id| Core::new(id, &config)).collect();
        let global_barriers = BarrierTable::new(DEFAULT_BARRIER_SLOTS, config.machine.cores);
        Ok(Gpu {
            config,
            mem: Memory::new(),
            cores,
            global_barriers,
            console: Vec::new(),
            cycle: 0,
            exit_code: None,
        })
    }

    pub fn num_threads(&self) -> u32 {
        self.config.machine.threads
    }

    pub fn num_warps(&self) -> u32 {
        self.config.machine.warps
    }

    pub fn num_cores(&self) -> u32 {
        self.config.machine.cores
    }

    pub fn all_done(&self) -> bool {
        self.cores.iter().all(Core::done)
    }

    /// Activate `warp` on `core` at `pc` with a fresh context; the usual way
    /// to start warp 0 before a run.
    pub fn start_warp(&mut self, core: u32, warp: u32, pc: u32) {
        let c = &mut self.cores[core as usize];
        c.warps[warp as usize].reset_for_spawn(pc);
        c.sched.activate_warps(1u64 << warp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_echoes_config() {
        let gpu = Gpu::new(SimConfig::with_shape(2, 4, 8)).unwrap();
        assert_eq!(gpu.cores.len(), 2);
        assert_eq!(gpu.cores[0].warps.len(), 4);
        assert_eq!(gpu.cores[1].warps[3].num_threads(), 8);
        assert_eq!(gpu.cores[1].csr.core_id, 1);
        assert!(gpu.all_done());
    }

    #[test]
    fn start_warp_marks_active() {
        let mut gpu = Gpu::new(SimConfig::with_shape(1, 2, 2)).unwrap();
        gpu.start_warp(0, 0, 0x100);
        assert!(!gpu.all_done());
        assert_eq!(gpu.cores[0].warps[0].pc, 0x100);
        assert!(gpu.cores[0].sched.is_active(0));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = SimConfig::default();
        cfg.machine.threads = 0;
        assert!(Gpu::new(cfg).is_err());
    }
}
