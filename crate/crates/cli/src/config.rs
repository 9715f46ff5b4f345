//! Experiment configuration files. Every table and key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rcurrent_core::exact::MeasureKind;
use rcurrent_core::phi4::TanglingFunctional;
use rcurrent_core::quad::QuadratureSpec;
use rcurrent_core::sampler::MoveMix;
use rcurrent_core::stats::Tolerances;
use rcurrent_core::verify::VerifyConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub sampler: SamplerSection,
    pub exact: ExactSection,
    pub limit: LimitSection,
    pub quadrature: QuadratureSpec,
    pub backbone: BackboneSection,
    pub switch: SwitchSection,
    pub gs: GsSection,
    pub verify: VerifyConfig,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    pub lambda: f64,
    pub g: f64,
    /// Source vertices, 1-based.
    pub sources: Vec<u32>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { n: 1000, lambda: 0.0, g: 1.0 / 12.0, sources: vec![1, 2] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Chi-square of (sizes, partition) against the enumerated law (n <= 5).
    Exact,
    /// KS of the first cluster size and chi-square of the partition against the limit law.
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub burn_in: u64,
    pub samples: u64,
    pub thinning: u64,
    pub double: bool,
    pub good_a: usize,
    pub mix: MoveMix,
    pub compare: Option<Comparison>,
    pub tolerances: Tolerances,
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { burn_in: 1000, samples: 1000, thinning: 10, double: false, good_a: 10, mix: MoveMix::default(), compare: None, tolerances: Tolerances::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExactQuantity {
    /// Sector-sum and truncated vacuum partition functions.
    PartitionFunction,
    /// Enumerated law of (sizes, partition).
    Law,
    /// Tangling law of `sources` and `second_sources` for the double current.
    Rho,
    /// `<sigma_1 ... sigma_p>` for p up to `max_order`.
    Correlation,
    /// Law of the total magnetisation.
    Magnetization,
    /// Active-vertex moments and the mean open-edge count.
    Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSection {
    pub quantity: ExactQuantity,
    pub max_multiplicity: u32,
    pub kind: MeasureKind,
    pub second_sources: Vec<u32>,
    pub max_order: usize,
}

impl Default for ExactSection {
    fn default() -> Self {
        Self { quantity: ExactQuantity::PartitionFunction, max_multiplicity: 8, kind: MeasureKind::Single, second_sources: Vec::new(), max_order: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitSection {
    pub k: usize,
    pub kind: MeasureKind,
    /// Canonical partition string such as `"12|34"`; every partition when absent.
    pub partition: Option<String>,
    /// One `[lower, upper]` interval per block; `upper` may be omitted for infinity.
    pub bounds: Option<Vec<Vec<f64>>>,
    pub v_max: Option<usize>,
    pub shell_tolerance: Option<f64>,
}

impl Default for LimitSection {
    fn default() -> Self {
        Self { k: 1, kind: MeasureKind::Single, partition: None, bounds: None, v_max: None, shell_tolerance: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneSection {
    pub k: usize,
    pub v_max: usize,
    pub partition: Option<String>,
}

impl Default for BackboneSection {
    fn default() -> Self {
        Self { k: 1, v_max: 4, partition: None }
    }
}

/// One row of the switching test matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchCase {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub first: Vec<u32>,
    pub second: Vec<u32>,
    pub g: f64,
    pub a: f64,
    pub beta: f64,
    #[serde(default = "default_functional")]
    pub functional: TanglingFunctional,
}

fn default_functional() -> TanglingFunctional {
    TanglingFunctional::One
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchSection {
    pub truncation: u32,
    /// Rows pass when `|lhs - rhs| <= defect_factor * defect_bound`.
    pub defect_factor: f64,
    pub cases: Vec<SwitchCase>,
}

impl Default for SwitchSection {
    fn default() -> Self {
        let mut cases = Vec::new();
        for (g, a) in [(1.0 / 12.0, 0.0), (1e-3, 1.0), (4.0, -8.0)] {
            for functional in [TanglingFunctional::One, TanglingFunctional::SingleClassAt(0)] {
                cases.push(SwitchCase { vertices: 2, edges: vec![(0, 1)], first: vec![1, 1], second: vec![1, 1], g, a, beta: 0.3, functional });
                cases.push(SwitchCase {
                    vertices: 3,
                    edges: vec![(0, 1), (1, 2)],
                    first: vec![1, 1, 0],
                    second: vec![0, 1, 1],
                    g,
                    a,
                    beta: 0.3,
                    functional,
                });
            }
        }
        Self { truncation: 6, defect_factor: 10.0, cases }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GsSection {
    /// System size of the partition-function and magnetisation comparisons.
    pub n: usize,
    pub lambdas: Vec<f64>,
    /// System sizes of the correlation convergence table.
    pub correlation_sizes: Vec<usize>,
    pub orders: Vec<usize>,
    pub ratio_band: f64,
    pub ks: f64,
    pub correlation_gap: f64,
}

impl Default for GsSection {
    fn default() -> Self {
        Self {
            n: 10_000,
            lambdas: vec![-1.0, 0.0, 1.0],
            correlation_sizes: vec![1 << 8, 1 << 10, 1 << 12, 1 << 14],
            orders: vec![2, 4],
            ratio_band: 0.01,
            ks: 0.02,
            correlation_gap: 0.02,
        }
    }
}

/// Metadata file written next to a sample CSV.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                ExperimentConfig::load(Some(&path)).unwrap_or_else(|e| panic!("{e}"));
                seen += 1;
            }
        }
        assert!(seen >= 8);
    }
}
