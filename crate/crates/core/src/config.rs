//! Simulation configuration: machine shape, execution latencies, and
//! memory geometries. Deserializes from TOML; every field has a default
//! mirroring the reference 8-warp/4-thread machine (4KB 2-way 4-bank data
//! cache, 8KB shared memory, 1KB 2-way single-bank instruction cache).

use serde::{Deserialize, Serialize};

use crate::arch::{MAX_THREADS, MAX_WARPS};
use crate::mem::CacheGeometry;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MachineConfig {
    pub cores: u32,
    pub warps: u32,
    pub threads: u32,
    /// Execute-stage ALU lane count; 0 means one ALU per thread. Fewer
    /// lanes than threads scale execute latency by the occupancy ratio.
    pub alu_lanes: u32,
    /// Bytes of private stack carved out per (warp, lane) below the
    /// shared-memory window.
    pub stack_stride: u32,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig { cores: 1, warps: 8, threads: 4, alu_lanes: 0, stack_stride: 0x1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub alu: u64,
    pub mul: u64,
    pub div: u64,
    /// Cycles without a retirement before the deadlock detector fires.
    pub watchdog: u64,
    /// Hard cycle limit; 0 disables it.
    pub max_cycles: u64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig { alu: 1, mul: 3, div: 32, watchdog: 10_000_000, max_cycles: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CacheParams {
    pub size: u32,
    pub ways: u32,
    pub banks: u32,
    pub block: u32,
    pub hit_latency: u64,
    pub miss_latency: u64,
    pub enabled: bool,
}

impl CacheParams {
    pub fn geometry(&self) -> CacheGeometry {
        CacheGeometry {
            size_bytes: self.size,
            ways: self.ways,
            banks: self.banks,
            block_bytes: self.block,
            hit_latency: self.hit_latency,
            miss_latency: self.miss_latency,
            enabled: self.enabled,
        }
    }
}

fn default_dcache() -> CacheParams {
    CacheParams {
        size: 4096,
        ways: 2,
        banks: 4,
        block: 16,
        hit_latency: 1,
        miss_latency: 50,
        enabled: true,
    }
}

fn default_icache() -> CacheParams {
    CacheParams {
        size: 1024,
        ways: 2,
        banks: 1,
        block: 16,
        hit_latency: 1,
        miss_latency: 50,
        enabled: true,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SharedParams {
    pub size: u32,
    /// Bank count; 0 means one bank per hardware thread.
    pub banks: u32,
}

impl Default for SharedParams {
    fn default() -> Self {
        SharedParams { size: 8192, banks: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub machine: MachineConfig,
    pub latency: LatencyConfig,
    pub dcache: CacheParams,
    pub icache: CacheParams,
    pub shared: SharedParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            machine: MachineConfig::default(),
            latency: LatencyConfig::default(),
            dcache: default_dcache(),
            icache: default_icache(),
            shared: SharedParams::default(),
        }
    }
}

impl Default for CacheParams {
    fn default() -> Self {
        default_dcache()
    }
}

impl SimConfig {
    /// Convenience constructor for the common sweep axis.
    pub fn with_shape(cores: u32, warps: u32, threads: u32) -> Self {
        let mut c = SimConfig::default();
        c.machine.cores = cores;
        c.machine.warps = warps;
        c.machine.threads = threads;
        c
    }

    /// Effective shared-memory bank count: 0 resolves to the thread count,
    /// rounded up to a power of two.
    pub fn shared_banks(&self) -> u32 {
        if self.shared.banks == 0 {
            self.machine.threads.next_power_of_two()
        } else {
            self.shared.banks
        }
    }

    /// Effective ALU lane count (0 resolves to the thread count).
    pub fn alu_lanes(&self) -> u32 {
        if self.machine.alu_lanes == 0 {
            self.machine.threads
        } else {
            self.machine.alu_lanes
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let m = &self.machine;
        if m.cores < 1 {
            return Err("machine.cores must be at least 1".into());
        }
        if m.warps < 1 || m.warps > MAX_WARPS {
            return Err(format!("machine.warps must be in 1..={MAX_WARPS}"));
        }
        if m.threads < 1 || m.threads > MAX_THREADS {
            return Err(format!("machine.threads must be in 1..={MAX_THREADS}"));
        }
        if m.stack_stride < 64 || m.stack_stride % 4 != 0 {
            return Err("machine.stack_stride must be a multiple of 4, at least 64".into());
        }
        let l = &self.latency;
        if l.alu < 1 || l.mul < 1 || l.div < 1 {
            return Err("latencies must be at least 1".into());
        }
        if l.watchdog < 1 {
            return Err("latency.watchdog must be at least 1".into());
        }
        self.dcache.geometry().validate().map_err(|e| format!("dcache: {e}"))?;
        self.icache.geometry().validate().map_err(|e| format!("icache: {e}"))?;
        if self.shared.size < 4 || self.shared.size % 4 != 0 {
            return Err("shared.size must be a positive multiple of 4".into());
        }
        if !self.shared_banks().is_power_of_two() {
            return Err("shared.banks must be a power of two".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SimConfig::with_shape(2, 4, 8);
        let text = cfg.to_toml();
        let back = SimConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = SimConfig::from_toml("[machine]\nwarps = 2\nthreads = 2\n").unwrap();
        assert_eq!(cfg.machine.warps, 2);
        assert_eq!(cfg.machine.cores, 1);
        assert_eq!(cfg.dcache.size, 4096);
        assert_eq!(cfg.shared_banks(), 2);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = SimConfig::default();
        cfg.machine.threads = 40;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.machine.warps = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = SimConfig::default();
        cfg.dcache.size = 24;
        assert!(cfg.validate().is_err());
        assert!(SimConfig::from_toml("[machine]\nbogus = 1\n").is_err());
    }
}
