use std::path::Path;

use clap::ValueEnum;
use longtail_core::acceptance::AcceptanceConfig;
use longtail_core::class_lab::ClassifyConfig;
use longtail_core::compound::CompoundOptions;
use longtail_core::counting::CountingKind;
use longtail_core::dist::FamilyParams;
use longtail_core::{Error, GridSpec, QuadConfig, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    FamilyReport,
    RatioSweep,
    Convolve,
    Classify,
    Compound,
    OracleCrosscheck,
    AcceptanceSuite,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::FamilyReport => "family-report",
            Kind::RatioSweep => "ratio-sweep",
            Kind::Convolve => "convolve",
            Kind::Classify => "classify",
            Kind::Compound => "compound",
            Kind::OracleCrosscheck => "oracle-crosscheck",
            Kind::AcceptanceSuite => "acceptance-suite",
        }
    }
}

fn reference_law() -> FamilyParams {
    FamilyParams::family1(0.5, 1.0, 1.0, 3.0, 3)
}

fn default_scales() -> Vec<usize> {
    vec![0, 1, 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    pub kind: Option<Kind>,
    /// Overridden by `--seed`; the acceptance suite falls back to its own seed.
    pub seed: Option<u64>,
    #[serde(default = "reference_law")]
    pub law: FamilyParams,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub quad: QuadConfig,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default, rename = "ratio-sweep")]
    pub ratio_sweep: RatioSweepParams,
    #[serde(default)]
    pub convolve: ConvolveParams,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub compound: CompoundParams,
    #[serde(default, rename = "oracle-crosscheck")]
    pub crosscheck: CrosscheckParams,
    #[serde(default)]
    pub acceptance: AcceptanceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config")
    }
}

/// Artifact file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub json: String,
    pub csv: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { json: "report.json".into(), csv: "trace.csv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatioSweepParams {
    pub cs: Vec<f64>,
    pub scales: Vec<usize>,
}

impl Default for RatioSweepParams {
    fn default() -> Self {
        RatioSweepParams { cs: vec![1.0], scales: default_scales() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvolveParams {
    pub order: usize,
    pub scales: Vec<usize>,
}

impl Default for ConvolveParams {
    fn default() -> Self {
        ConvolveParams { order: 2, scales: default_scales() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompoundParams {
    pub counting: CountingKind,
    /// Estimated from the probe when absent.
    pub cstar2: Option<f64>,
    pub options: CompoundOptions,
    pub scales: Vec<usize>,
    /// Truncation point for the series condition check.
    pub series_terms: usize,
}

impl Default for CompoundParams {
    fn default() -> Self {
        CompoundParams {
            counting: CountingKind::Poisson { mu: 1.0 },
            cstar2: None,
            options: CompoundOptions::default(),
            scales: default_scales(),
            series_terms: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrosscheckParams {
    pub samples: usize,
    /// 1 checks the law itself, 2 its self-convolution.
    pub order: usize,
    pub points_per_scale: usize,
    pub scales: Vec<usize>,
}

impl Default for CrosscheckParams {
    fn default() -> Self {
        CrosscheckParams { samples: 1_000_000, order: 1, points_per_scale: 20, scales: default_scales() }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Checks that need no computation beyond building the law.
    pub fn validate(&self, kind: Kind) -> Result<()> {
        if let Some(k) = self.kind {
            if k != kind {
                return Err(Error::Config(format!("config is for '{}', not '{}'", k.name(), kind.name())));
            }
        }
        if self.grid.points_per_block < 2 {
            return Err(Error::Config("grid.points_per_block must be at least 2".into()));
        }
        for name in [&self.outputs.json, &self.outputs.csv] {
            let p = Path::new(name);
            if name.is_empty() || p.is_absolute() || p.components().count() != 1 {
                return Err(Error::Config(format!("output name '{name}' must be a plain file name")));
            }
        }
        if self.outputs.json == self.outputs.csv {
            return Err(Error::Config("json and csv outputs must differ".into()));
        }
        match kind {
            Kind::RatioSweep if self.ratio_sweep.cs.iter().any(|c| c.is_nan() || *c <= 0.0) => {
                Err(Error::InvalidParameter("ratio-sweep shifts must be positive".into()))
            }
            Kind::Convolve if self.convolve.order < 2 => {
                Err(Error::InvalidParameter("convolve.order must be at least 2".into()))
            }
            Kind::OracleCrosscheck if !(1..=2).contains(&self.crosscheck.order) => {
                Err(Error::InvalidParameter("oracle-crosscheck.order must be 1 or 2".into()))
            }
            Kind::OracleCrosscheck if self.crosscheck.samples < 10_000 => {
                Err(Error::InvalidParameter("oracle-crosscheck.samples must be at least 10000".into()))
            }
            _ => Ok(()),
        }
    }
}
