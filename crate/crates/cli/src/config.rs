//! JSON run configuration for double-well sampling.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vendi_core::kernels::Kernel;
use vendi_core::sampler::{KernelFeature, Potential, Regions, SamplerConfig};
use vendi_core::{Order, DEFAULT_SUPPORT_TOL};

use crate::error::{CliError, CliResult};

/// Every field except `seed` has a default: a shortened run (2·10⁵ steps)
/// of the `q = 1` protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleRunConfig {
    pub replicas: usize,
    pub step_size: f64,
    pub total_steps: u64,
    pub nu0: f64,
    pub anneal_rate: f64,
    pub q: Order,
    pub kernel: Kernel,
    pub kernel_feature: KernelFeature,
    pub init_box: (f64, f64),
    pub seed: u64,
    pub record_stride: u64,
    pub potential: Potential,
    pub support_tol: f64,
    pub regions: Regions,
    /// First step of the free-energy window; defaults to the first record
    /// produced without any force.
    pub analysis_start: Option<u64>,
}

impl Default for SampleRunConfig {
    fn default() -> Self {
        SampleRunConfig {
            replicas: 16,
            step_size: 1e-2,
            total_steps: 200_000,
            nu0: 100.0,
            anneal_rate: 1e-4,
            q: Order::SHANNON,
            kernel: Kernel::Ratio1d,
            kernel_feature: KernelFeature::X,
            init_box: (-2.5, 2.5),
            seed: 0,
            record_stride: 100,
            potential: Potential::default(),
            support_tol: DEFAULT_SUPPORT_TOL,
            regions: Regions::default(),
            analysis_start: None,
        }
    }
}

impl SampleRunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Malformed(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Malformed(format!("config: {e}")))?;
        cfg.sampler().validate()?;
        Ok(cfg)
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            replicas: self.replicas,
            step_size: self.step_size,
            total_steps: self.total_steps,
            nu0: self.nu0,
            anneal_rate: self.anneal_rate,
            q: self.q,
            kernel: self.kernel.clone(),
            kernel_feature: self.kernel_feature,
            init_box: self.init_box,
            seed: self.seed,
            record_stride: self.record_stride,
            potential: self.potential,
            support_tol: self.support_tol,
        }
    }
}
