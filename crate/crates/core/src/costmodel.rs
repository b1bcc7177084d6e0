//! Analytical accelerator cost model: area, per-workload latency and
//! mapping feasibility.
//!
//! Latency is a per-layer roofline with cycle granularity: each layer costs
//! the larger of its compute and memory-transfer cycles plus a fixed
//! overhead. Layers whose per-PE weight slice does not fit in local memory
//! run at `stream_penalty` compute utilization.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};
use crate::space::{AcceleratorConfig, Hardware, SearchSpace};
use crate::workload::{Baseline, Workload, WorkloadSuite};

const DEFAULT_CALIBRATION_JSON: &str = include_str!("../data/costmodel/default_calibration.json");
const BYTES_PER_MB: f64 = 1_048_576.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub clock_hz: f64,
    /// mm² per PE.
    pub a_pe_base: f64,
    /// mm² per MAC unit.
    pub a_mac: f64,
    /// mm² per MB of SRAM.
    pub a_sram: f64,
    /// mm² per GB/s of I/O bandwidth.
    pub a_io: f64,
    pub a_fixed: f64,
    pub layer_overhead_cycles: u64,
    pub instr_bytes_per_layer: u64,
    pub stream_penalty: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self::from_json(DEFAULT_CALIBRATION_JSON).expect("embedded calibration is valid")
    }
}

impl Calibration {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Calibration =
            serde_json::from_str(text).map_err(|e| DseError::parse("calibration", e))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DseError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clock_hz", self.clock_hz),
            ("a_pe_base", self.a_pe_base),
            ("a_mac", self.a_mac),
            ("a_sram", self.a_sram),
            ("a_io", self.a_io),
            ("a_fixed", self.a_fixed),
            ("layer_overhead_cycles", self.layer_overhead_cycles as f64),
            ("instr_bytes_per_layer", self.instr_bytes_per_layer as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DseError::invalid(name, "must be strictly positive"));
            }
        }
        if !(self.stream_penalty > 0.0 && self.stream_penalty <= 1.0) {
            return Err(DseError::invalid("stream_penalty", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Silicon area in mm².
pub fn area(hw: &Hardware, cal: &Calibration) -> f64 {
    let npe = hw.num_pes();
    let sram_mb = npe * hw.local_memory_kb / 1024.0
        + hw.global_memory_mb
        + hw.parameter_memory_mb
        + hw.activation_memory_mb
        + hw.instruction_memory_kb / 1024.0;
    cal.a_fixed
        + cal.a_pe_base * npe
        + cal.a_mac * npe * hw.compute_lanes * hw.simd_units
        + cal.a_sram * sram_mb
        + cal.a_io * hw.io_bandwidth_gbps
}

/// Mapping predicates that make a workload unrunnable on a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Infeasibility {
    /// Largest layer activation exceeds activation memory.
    ActivationMemory,
    /// Largest layer weight tensor exceeds global memory.
    GlobalMemory,
    /// Program does not fit in instruction memory.
    InstructionMemory,
    /// Model weights exceed parameter plus global memory.
    ParameterCapacity,
}

impl Infeasibility {
    pub fn tag(self) -> &'static str {
        match self {
            Infeasibility::ActivationMemory => "F1_activation_memory",
            Infeasibility::GlobalMemory => "F2_global_memory",
            Infeasibility::InstructionMemory => "F3_instruction_memory",
            Infeasibility::ParameterCapacity => "F4_parameter_capacity",
        }
    }
}

pub fn feasible(
    hw: &Hardware,
    workload: &Workload,
    cal: &Calibration,
) -> (bool, Vec<Infeasibility>) {
    let t = workload.totals();
    let mut reasons = Vec::new();
    if t.max_activation_bytes as f64 > hw.activation_memory_mb * BYTES_PER_MB {
        reasons.push(Infeasibility::ActivationMemory);
    }
    if t.max_weight_bytes as f64 > hw.global_memory_mb * BYTES_PER_MB {
        reasons.push(Infeasibility::GlobalMemory);
    }
    if (t.n_layers as u64 * cal.instr_bytes_per_layer) as f64 > hw.instruction_memory_kb * 1024.0 {
        reasons.push(Infeasibility::InstructionMemory);
    }
    if t.weight_bytes as f64 > (hw.parameter_memory_mb + hw.global_memory_mb) * BYTES_PER_MB {
        reasons.push(Infeasibility::ParameterCapacity);
    }
    (reasons.is_empty(), reasons)
}

/// Total cycles to run `workload`, ignoring feasibility.
pub fn cycles(hw: &Hardware, workload: &Workload, cal: &Calibration) -> u64 {
    let npe = hw.num_pes();
    let macs_per_cycle = hw.macs_per_cycle();
    let local_bytes = hw.local_memory_kb * 1024.0;
    let bytes_per_cycle = hw.io_bandwidth_gbps * 1e9 / cal.clock_hz;
    workload
        .layers
        .iter()
        .map(|l| {
            let util = if l.weight_bytes as f64 / npe <= local_bytes {
                1.0
            } else {
                cal.stream_penalty
            };
            let compute = (l.macs as f64 / (macs_per_cycle * util)).ceil() as u64;
            let memory =
                ((l.weight_bytes + l.activation_bytes) as f64 / bytes_per_cycle).ceil() as u64;
            compute.max(memory) + cal.layer_overhead_cycles
        })
        .sum()
}

/// Latency in seconds; errors with the failed predicates when the workload
/// cannot be mapped.
pub fn latency(hw: &Hardware, workload: &Workload, cal: &Calibration) -> Result<f64> {
    let (ok, reasons) = feasible(hw, workload, cal);
    if !ok {
        return Err(DseError::Infeasible(
            reasons.iter().map(|r| r.tag().to_string()).collect(),
        ));
    }
    Ok(cycles(hw, workload, cal) as f64 / cal.clock_hz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub area_mm2: f64,
    pub latency_s: BTreeMap<String, f64>,
    pub feasible: bool,
    pub infeasibility_reasons: Vec<String>,
}

/// Evaluates a configuration against the named workloads. Area is always
/// computed; latencies only when every workload maps.
pub fn evaluate(
    space: &SearchSpace,
    config: &AcceleratorConfig,
    suite: &WorkloadSuite,
    workload_names: &[String],
    cal: &Calibration,
) -> Result<Evaluation> {
    if workload_names.is_empty() {
        return Err(DseError::invalid(
            "workloads",
            "at least one workload is required",
        ));
    }
    let hw = space.hardware(config)?;
    let workloads = workload_names
        .iter()
        .map(|n| suite.get(n))
        .collect::<Result<Vec<_>>>()?;
    let area_mm2 = area(&hw, cal);
    let mut reasons = Vec::new();
    for w in &workloads {
        let (_, r) = feasible(&hw, w, cal);
        reasons.extend(r.iter().map(|r| format!("{}@{}", r.tag(), w.name)));
    }
    let feasible = reasons.is_empty();
    let latency_s = if feasible {
        workloads
            .iter()
            .map(|w| (w.name.clone(), cycles(&hw, w, cal) as f64 / cal.clock_hz))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(Evaluation {
        area_mm2,
        latency_s,
        feasible,
        infeasibility_reasons: reasons,
    })
}

/// Resolves the suite's baseline into per-workload latencies.
pub fn baseline_latencies(
    space: &SearchSpace,
    suite: &WorkloadSuite,
    cal: &Calibration,
) -> Result<BTreeMap<String, f64>> {
    match &suite.baseline {
        Baseline::Latencies(map) => Ok(map.clone()),
        Baseline::ReferenceConfig(values) => {
            let ordered = space
                .params()
                .iter()
                .map(|p| {
                    values.get(&p.name).copied().ok_or_else(|| {
                        DseError::invalid(
                            format!("baseline.reference_config.{}", p.name),
                            "missing parameter value",
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let config = space.config_from_values(&ordered)?;
            let hw = space.hardware(&config)?;
            suite
                .workloads
                .iter()
                .map(|w| Ok((w.name.clone(), latency(&hw, w, cal)?)))
                .collect()
        }
    }
}
