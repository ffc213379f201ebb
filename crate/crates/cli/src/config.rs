use std::collections::HashSet;
use std::path::{Path, PathBuf};

use patchreg::baselines::{IcpConfig, RansacConfig};
use patchreg::benchgen::SuiteConfig;
use patchreg::descriptors::{DEFAULT_DESCRIPTOR_DIM, DEFAULT_ORACLE_DIM};
use patchreg::eval::default_tau_grid;
use patchreg::matching::SelectionRule;
use patchreg::p2p::P2PConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable consulted when `--config` is absent.
pub const CONFIG_ENV: &str = "PATCHREG_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Suite root; written by `gen`, read by `register`.
    pub suite: PathBuf,
    /// Generation parameters; `generation.seed` is the global seed.
    pub generation: SuiteConfig,
    pub methods: Vec<MethodEntry>,
    pub descriptor: DescriptorSpec,
    pub preprocessing: Preprocessing,
    pub report: ReportConfig,
    pub output: PathBuf,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: PathBuf::from("suite"),
            generation: SuiteConfig::default(),
            methods: vec![
                MethodEntry::new("baseline", MethodKind::Baseline { temperature: None }),
                MethodEntry::new("p2p", MethodKind::P2p(P2PConfig::default())),
            ],
            descriptor: DescriptorSpec::default(),
            preprocessing: Preprocessing::default(),
            report: ReportConfig::default(),
            output: PathBuf::from("results"),
            workers: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocessing {
    /// Normalized units.
    pub voxel_size: f64,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self { voxel_size: 0.04 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub visibility_edges: Vec<f64>,
    /// mm.
    pub deformation_edges: Vec<f64>,
    /// mm.
    pub tau_grid: Vec<f64>,
    /// Visibility range of the low-visibility success curve.
    pub low_visibility: [f64; 2],
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            visibility_edges: patchreg::benchgen::default_visibility_edges(),
            deformation_edges: vec![0.0, 2.0, 3.0, 4.0, 5.0, 6.0, 12.0],
            tau_grid: default_tau_grid(),
            low_visibility: [0.2, 0.3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    pub name: String,
    #[serde(flatten)]
    pub kind: MethodKind,
}

impl MethodEntry {
    pub fn new(name: impl Into<String>, kind: MethodKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Where ICP starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum IcpInit {
    #[default]
    Identity,
    GroundTruth,
    Baseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodKind {
    Baseline {
        #[serde(default)]
        temperature: Option<f64>,
    },
    P2p(P2PConfig),
    Icp {
        #[serde(default)]
        icp: IcpConfig,
        #[serde(default)]
        init: IcpInit,
    },
    Ransac {
        #[serde(default)]
        ransac: RansacConfig,
        /// Temperature of the matching that feeds RANSAC.
        #[serde(default)]
        temperature: Option<f64>,
    },
    /// Fiducial-based reference; the rigid floor.
    Procrustes,
    /// Transforms produced elsewhere, one `<sample id>.json` per sample (mm frame).
    External {
        dir: PathBuf,
    },
}

impl MethodKind {
    pub fn needs_features(&self) -> bool {
        !matches!(self, MethodKind::Procrustes | MethodKind::External { .. })
            && !matches!(self, MethodKind::Icp { init, .. } if *init != IcpInit::Baseline)
    }

    fn validate(&self) -> CliResult<()> {
        let temperature_ok = |t: &Option<f64>| t.is_none_or(|t| t > 0.0 && t.is_finite());
        match self {
            MethodKind::Baseline { temperature } | MethodKind::Ransac { temperature, .. }
                if !temperature_ok(temperature) =>
            {
                Err(CliError::config("temperature must be positive"))
            }
            MethodKind::P2p(c) => c.validate().map_err(CliError::invalid),
            MethodKind::Icp { icp, .. } => icp.validate().map_err(CliError::invalid),
            MethodKind::Ransac { ransac, .. } => ransac.validate().map_err(CliError::invalid),
            MethodKind::External { dir } if !dir.is_dir() => Err(CliError::config(format!(
                "external results directory {} does not exist",
                dir.display()
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DescriptorSpec {
    Oracle {
        #[serde(default = "default_oracle_dim")]
        feature_dim: usize,
        #[serde(default)]
        corruption_sigma: f64,
    },
    Fpfh {
        #[serde(default = "default_fpfh_radius")]
        radius: f64,
        #[serde(default = "default_normal_k")]
        normal_k: usize,
        #[serde(default = "default_fpfh_dim")]
        dim: usize,
    },
    /// `<dir>/<sample id>/source.feat` and `target.feat`, computed on the prepared clouds.
    Cached { dir: PathBuf },
}

fn default_oracle_dim() -> usize {
    DEFAULT_ORACLE_DIM
}

fn default_fpfh_radius() -> f64 {
    0.2
}

fn default_normal_k() -> usize {
    16
}

fn default_fpfh_dim() -> usize {
    DEFAULT_DESCRIPTOR_DIM
}

impl Default for DescriptorSpec {
    fn default() -> Self {
        DescriptorSpec::Oracle {
            feature_dim: DEFAULT_ORACLE_DIM,
            corruption_sigma: 0.3,
        }
    }
}

impl DescriptorSpec {
    fn validate(&self) -> CliResult<()> {
        match self {
            DescriptorSpec::Oracle {
                feature_dim,
                corruption_sigma,
            } => {
                if *feature_dim == 0 || !(*corruption_sigma >= 0.0 && corruption_sigma.is_finite()) {
                    return Err(CliError::config("oracle needs a positive dim and a finite sigma >= 0"));
                }
            }
            DescriptorSpec::Fpfh { radius, normal_k, dim } => {
                if !(*radius > 0.0) || *normal_k < 3 || *dim < 3 || !dim.is_multiple_of(3) {
                    return Err(CliError::config(
                        "fpfh needs radius > 0, normal_k >= 3, dim a multiple of 3",
                    ));
                }
            }
            DescriptorSpec::Cached { dir } => {
                if !dir.is_dir() {
                    return Err(CliError::config(format!(
                        "feature cache {} does not exist",
                        dir.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// `path`, else the file named by [`CONFIG_ENV`], else the defaults.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::from_file(&p),
            None => Ok(Self::default()),
        }
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.generation.seed
    }

    /// Checks everything that does not depend on the suite being on disk.
    pub fn validate(&self) -> CliResult<()> {
        self.generation.validate().map_err(CliError::invalid)?;
        if !(self.preprocessing.voxel_size > 0.0 && self.preprocessing.voxel_size.is_finite()) {
            return Err(CliError::config("voxel size must be positive"));
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(CliError::config("no methods configured"));
        }
        let mut seen = HashSet::new();
        for m in &self.methods {
            if m.name.is_empty() || m.name.contains(['/', '\\']) {
                return Err(CliError::config(format!("invalid method name {:?}", m.name)));
            }
            if !seen.insert(m.name.as_str()) {
                return Err(CliError::config(format!("duplicate method name {:?}", m.name)));
            }
            m.kind.validate()?;
        }
        self.descriptor.validate()?;
        let r = &self.report;
        for edges in [&r.visibility_edges, &r.deformation_edges] {
            if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(CliError::config("report edges must be strictly increasing"));
            }
        }
        if r.tau_grid.is_empty() || !(r.low_visibility[0] < r.low_visibility[1]) {
            return Err(CliError::config("invalid tau grid or low-visibility range"));
        }
        Ok(())
    }

    pub fn method(&self, name: &str) -> CliResult<&MethodEntry> {
        self.methods.iter().find(|m| m.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
            CliError::config(format!("unknown method {name:?}; configured: {}", known.join(", ")))
        })
    }

    /// The three methods of the main comparison.
    pub fn comparison_methods() -> Vec<MethodEntry> {
        vec![
            MethodEntry::new("baseline", MethodKind::Baseline { temperature: None }),
            MethodEntry::new("p2p", MethodKind::P2p(P2PConfig::default())),
            MethodEntry::new(
                "p2p-inlier",
                MethodKind::P2p(P2PConfig {
                    selection: SelectionRule::InlierCount,
                    ..Default::default()
                }),
            ),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        assert_eq!(c.preprocessing.voxel_size, 0.04);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"methods": [{"name": "a", "kind": "p2p", "patches": 3},
                            {"name": "b", "kind": "icp", "init": "ground-truth"}],
                "descriptor": {"kind": "oracle"}}"#,
        )
        .unwrap();
        c.validate().unwrap();
        match &c.methods[0].kind {
            MethodKind::P2p(p) => assert_eq!(p.patches, 3),
            k => panic!("{k:?}"),
        }
        assert!(!c.methods[1].kind.needs_features());
        assert_eq!(
            c.descriptor,
            DescriptorSpec::Oracle {
                feature_dim: 32,
                corruption_sigma: 0.0
            }
        );
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ExperimentConfig::default();
        c.methods.push(c.methods[0].clone());
        assert!(matches!(c.validate(), Err(CliError::Config(_))));

        let c = ExperimentConfig {
            descriptor: DescriptorSpec::Cached {
                dir: "/definitely/not/here".into(),
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::default().method("nope").is_err());
    }
}
