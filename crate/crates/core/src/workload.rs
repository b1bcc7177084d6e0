//! Neural workloads as per-layer resource descriptors.
//!
//! Only model-level aggregates are known for the evaluated networks, so the
//! default suite is synthesized: per-layer shares are drawn from a seeded
//! log-normal and scaled so the integer totals match the aggregates exactly.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};

const DEFAULT_SUITE_JSON: &str = include_str!("../data/workloads/default_suite.json");

/// Activation footprint scale: activation_bytes = ACTIVATION_SCALE * sqrt(macs).
pub const ACTIVATION_SCALE: f64 = 64.0;
const SHARE_SIGMA: f64 = 1.0;
const BYTES_PER_MB: f64 = 1_048_576.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDescriptor {
    pub name: String,
    pub macs: u64,
    pub weight_bytes: u64,
    /// Peak working set of the layer.
    pub activation_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub name: String,
    #[serde(rename = "domain")]
    pub domain_tag: String,
    pub layers: Vec<LayerDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadTotals {
    pub macs: u64,
    pub weight_bytes: u64,
    pub max_activation_bytes: u64,
    pub max_weight_bytes: u64,
    pub n_layers: usize,
}

impl Workload {
    pub fn totals(&self) -> WorkloadTotals {
        WorkloadTotals {
            macs: self.layers.iter().map(|l| l.macs).sum(),
            weight_bytes: self.layers.iter().map(|l| l.weight_bytes).sum(),
            max_activation_bytes: self
                .layers
                .iter()
                .map(|l| l.activation_bytes)
                .max()
                .unwrap_or(0),
            max_weight_bytes: self
                .layers
                .iter()
                .map(|l| l.weight_bytes)
                .max()
                .unwrap_or(0),
            n_layers: self.layers.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(DseError::invalid("workloads[].name", "must not be empty"));
        }
        if self.layers.is_empty() {
            return Err(DseError::invalid(
                format!("workloads.{}.layers", self.name),
                "a workload needs at least one layer",
            ));
        }
        if let Some(l) = self.layers.iter().find(|l| l.macs == 0) {
            return Err(DseError::invalid(
                format!("workloads.{}.layers.{}.macs", self.name, l.name),
                "compute layers must have macs > 0",
            ));
        }
        Ok(())
    }
}

/// Aggregates of one model as published: layer count, parameter size, MACs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelAggregate {
    pub name: &'static str,
    pub domain: &'static str,
    pub n_layers: usize,
    pub params_mb: f64,
    pub macs: u64,
}

/// The seven evaluated models.
pub const DEFAULT_MODELS: [ModelAggregate; 7] = [
    ModelAggregate {
        name: "MobileNetV2",
        domain: "Image Classification",
        n_layers: 76,
        params_mb: 3.33,
        macs: 301_000_000,
    },
    ModelAggregate {
        name: "MobileNetEdge",
        domain: "Image Classification",
        n_layers: 93,
        params_mb: 3.88,
        macs: 991_000_000,
    },
    ModelAggregate {
        name: "M3",
        domain: "Object Detection",
        n_layers: 93,
        params_mb: 2.19,
        macs: 464_000_000,
    },
    ModelAggregate {
        name: "M4",
        domain: "Object Detection",
        n_layers: 111,
        params_mb: 0.42,
        macs: 107_000_000,
    },
    ModelAggregate {
        name: "M5",
        domain: "Object Detection",
        n_layers: 60,
        params_mb: 6.29,
        macs: 1_721_000_000,
    },
    ModelAggregate {
        name: "M6",
        domain: "Semantic Segmentation",
        n_layers: 62,
        params_mb: 0.37,
        macs: 591_000_000,
    },
    ModelAggregate {
        name: "M7",
        domain: "OCR",
        n_layers: 56,
        params_mb: 0.30,
        macs: 5_190_000,
    },
];

/// Splits `total` into integer parts proportional to `shares` using
/// largest-remainder rounding. The parts always sum to `total`.
fn largest_remainder(total: u64, shares: &[f64]) -> Vec<u64> {
    let sum: f64 = shares.iter().sum();
    let quotas: Vec<f64> = shares.iter().map(|s| total as f64 * s / sum).collect();
    let mut parts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = parts.iter().sum();
    // Float quotas can floor to slightly more or less than total.
    if assigned > total {
        let mut excess = assigned - total;
        let mut order: Vec<usize> = (0..parts.len()).collect();
        order.sort_by(|&a, &b| parts[b].cmp(&parts[a]).then(a.cmp(&b)));
        for i in order.into_iter().cycle() {
            if excess == 0 {
                break;
            }
            if parts[i] > 0 {
                parts[i] -= 1;
                excess -= 1;
            }
        }
        return parts;
    }
    let mut remaining = total - assigned;
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for i in order.into_iter().cycle() {
        if remaining == 0 {
            break;
        }
        parts[i] += 1;
        remaining -= 1;
    }
    parts
}

/// Builds a deterministic synthetic workload whose totals match the given
/// aggregates exactly. The parameter size is converted to bytes with
/// MB = 2^20 and rounded to the nearest byte.
pub fn synthesize_workload(
    name: &str,
    domain: &str,
    n_layers: usize,
    total_params_mb: f64,
    total_macs: u64,
    seed: u64,
) -> Result<Workload> {
    if n_layers == 0 {
        return Err(DseError::invalid("n_layers", "must be at least 1"));
    }
    if !(total_params_mb > 0.0) || total_macs == 0 {
        return Err(DseError::invalid(
            "totals",
            "parameter size and MACs must be positive",
        ));
    }
    if total_macs < n_layers as u64 {
        return Err(DseError::invalid(
            "total_macs",
            "need at least one MAC per layer",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = LogNormal::new(0.0, SHARE_SIGMA).expect("valid log-normal");
    let mac_shares: Vec<f64> = (0..n_layers).map(|_| dist.sample(&mut rng)).collect();
    let weight_shares: Vec<f64> = (0..n_layers).map(|_| dist.sample(&mut rng)).collect();

    let mut macs = largest_remainder(total_macs, &mac_shares);
    // Every layer computes something: borrow from the largest layer.
    while let Some(zero) = macs.iter().position(|&m| m == 0) {
        let donor = (0..macs.len())
            .max_by_key(|&i| (macs[i], std::cmp::Reverse(i)))
            .unwrap();
        macs[donor] -= 1;
        macs[zero] = 1;
    }
    let total_weight_bytes = (total_params_mb * BYTES_PER_MB).round() as u64;
    let weights = largest_remainder(total_weight_bytes, &weight_shares);

    let layers = macs
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(i, (&m, &w))| LayerDescriptor {
            name: format!("layer{i:03}"),
            macs: m,
            weight_bytes: w,
            activation_bytes: (ACTIVATION_SCALE * (m as f64).sqrt()).round() as u64,
        })
        .collect();
    Ok(Workload {
        name: name.to_string(),
        domain_tag: domain.to_string(),
        layers,
    })
}

/// How baseline latencies for speedup objectives are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Evaluate this configuration (physical values keyed by parameter name).
    ReferenceConfig(BTreeMap<String, f64>),
    /// Explicit per-workload latencies in seconds.
    Latencies(BTreeMap<String, f64>),
}

impl Baseline {
    /// The documented mid-grid reference accelerator.
    pub fn default_reference() -> Self {
        let values = [
            ("pes_x", 4.0),
            ("pes_y", 4.0),
            ("local_memory_kb", 512.0),
            ("simd_units", 16.0),
            ("global_memory_mb", 8.0),
            ("compute_lanes", 4.0),
            ("instruction_memory_kb", 64.0),
            ("parameter_memory_mb", 8.0),
            ("activation_memory_mb", 8.0),
            ("io_bandwidth_gbps", 20.0),
        ];
        Baseline::ReferenceConfig(values.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSuite {
    pub workloads: Vec<Workload>,
    pub baseline: Baseline,
}

impl WorkloadSuite {
    pub fn new(workloads: Vec<Workload>, baseline: Baseline) -> Result<Self> {
        let suite = WorkloadSuite {
            workloads,
            baseline,
        };
        suite.validate()?;
        Ok(suite)
    }

    /// The shipped seven-model suite.
    pub fn default_suite() -> Self {
        Self::from_json(DEFAULT_SUITE_JSON).expect("embedded suite is valid")
    }

    /// Regenerates the default suite from the published aggregates; the
    /// shipped JSON is exactly this output.
    pub fn synthesize_default() -> Self {
        let workloads = DEFAULT_MODELS
            .iter()
            .enumerate()
            .map(|(i, m)| {
                synthesize_workload(
                    m.name,
                    m.domain,
                    m.n_layers,
                    m.params_mb,
                    m.macs,
                    i as u64 + 1,
                )
                .expect("published aggregates are valid")
            })
            .collect();
        WorkloadSuite::new(workloads, Baseline::default_reference()).expect("valid suite")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let suite: WorkloadSuite =
            serde_json::from_str(text).map_err(|e| DseError::parse("workload suite", e))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DseError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            DseError::Parse { message, .. } => DseError::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn get(&self, name: &str) -> Result<&Workload> {
        self.workloads
            .iter()
            .find(|w| w.name == name)
            .ok_or_else(|| DseError::UnknownWorkload(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.workloads.iter().map(|w| w.name.clone()).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.workloads.is_empty() {
            return Err(DseError::invalid(
                "workloads",
                "suite must contain a workload",
            ));
        }
        for (i, w) in self.workloads.iter().enumerate() {
            w.validate()?;
            if self.workloads[..i].iter().any(|o| o.name == w.name) {
                return Err(DseError::invalid(
                    "workloads[].name",
                    format!("duplicate workload `{}`", w.name),
                ));
            }
        }
        if let Baseline::Latencies(map) = &self.baseline {
            for (name, lat) in map {
                if !(*lat > 0.0) {
                    return Err(DseError::invalid(
                        format!("baseline.latencies.{name}"),
                        "baseline latency must be positive",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobilenet_v2_totals_exact() {
        let w = synthesize_workload(
            "MobileNetV2",
            "Image Classification",
            76,
            3.33,
            301_000_000,
            1,
        )
        .unwrap();
        let t = w.totals();
        assert_eq!(t.n_layers, 76);
        assert_eq!(t.macs, 301_000_000);
        assert_eq!(t.weight_bytes, (3.33f64 * 1_048_576.0).round() as u64);
        assert!(w.layers.iter().all(|l| l.macs > 0));
    }

    #[test]
    fn single_layer_takes_everything() {
        let w = synthesize_workload("one", "x", 1, 1.0, 1000, 4).unwrap();
        assert_eq!(w.layers.len(), 1);
        assert_eq!(w.layers[0].macs, 1000);
        assert_eq!(w.layers[0].weight_bytes, 1_048_576);
        assert_eq!(
            w.layers[0].activation_bytes,
            (64.0 * 1000f64.sqrt()).round() as u64
        );
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize_workload("a", "x", 40, 2.0, 10_000_000, 7).unwrap();
        let b = synthesize_workload("a", "x", 40, 2.0, 10_000_000, 7).unwrap();
        let c = synthesize_workload("a", "x", 40, 2.0, 10_000_000, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_zero_layers() {
        assert!(synthesize_workload("a", "x", 0, 1.0, 100, 1).is_err());
    }

    #[test]
    fn largest_remainder_sums_exactly() {
        let parts = largest_remainder(10, &[1.0, 1.0, 1.0]);
        assert_eq!(parts.iter().sum::<u64>(), 10);
        assert_eq!(parts, vec![4, 3, 3]);
    }

    #[test]
    fn default_suite_matches_published_aggregates() {
        let suite = WorkloadSuite::default_suite();
        assert_eq!(suite.workloads.len(), 7);
        for (w, m) in suite.workloads.iter().zip(DEFAULT_MODELS.iter()) {
            let t = w.totals();
            assert_eq!(w.name, m.name);
            assert_eq!(t.n_layers, m.n_layers);
            assert_eq!(t.macs, m.macs);
            assert_eq!(t.weight_bytes, (m.params_mb * 1_048_576.0).round() as u64);
        }
        assert_eq!(
            suite.get("MobileNetEdge").unwrap().totals().macs,
            991_000_000
        );
    }

    #[test]
    fn shipped_suite_equals_synthesis() {
        assert_eq!(
            WorkloadSuite::default_suite(),
            WorkloadSuite::synthesize_default()
        );
    }

    #[test]
    fn max_activation_is_layer_max() {
        let suite = WorkloadSuite::default_suite();
        for w in &suite.workloads {
            let mut brute = 0;
            for l in &w.layers {
                if l.activation_bytes > brute {
                    brute = l.activation_bytes;
                }
            }
            assert_eq!(w.totals().max_activation_bytes, brute);
        }
    }

    #[test]
    fn rejects_duplicates_and_empty_layers() {
        let w = synthesize_workload("a", "x", 3, 1.0, 100, 1).unwrap();
        assert!(
            WorkloadSuite::new(vec![w.clone(), w.clone()], Baseline::default_reference()).is_err()
        );
        let empty = Workload {
            name: "e".into(),
            domain_tag: "x".into(),
            layers: vec![],
        };
        assert!(WorkloadSuite::new(vec![empty], Baseline::default_reference()).is_err());
    }

    #[test]
    fn load_errors() {
        match WorkloadSuite::load("/nonexistent/suite.json") {
            Err(DseError::NotFound { .. }) => {}
            other => panic!("expected not-found, got {other:?}"),
        }
        let err = WorkloadSuite::from_json(
            r#"{"workloads": [{"name": "a", "domain": "x"}], "baseline": {"latencies": {}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("layers"), "{err}");
    }

    /// Writes the shipped suite file. Run with
    /// `DSE_REGENERATE=1 cargo test -p dse-core regenerate_default_suite -- --ignored`.
    #[test]
    #[ignore]
    fn regenerate_default_suite() {
        if std::env::var("DSE_REGENERATE").is_ok() {
            let path = concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/data/workloads/default_suite.json"
            );
            std::fs::write(path, WorkloadSuite::synthesize_default().to_json() + "\n").unwrap();
        }
    }
}
