//! Experiment configuration: TOML with geometry, measure, scenario and
//! output sections, plus command-line overrides.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use mflab_core::geometry::DomainSpec;
use mflab_core::measure::{density_nodes, CirculationMeasure, DensityFamily, QuadratureRule};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub measure: MeasureConfig,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: String,
    pub resolution: usize,
    pub radius: Option<f64>,
    pub sides: Option<[f64; 2]>,
    pub r_in: Option<f64>,
    pub r_out: Option<f64>,
    pub periods: Option<[f64; 2]>,
    pub n_theta: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default)]
    pub atoms: Vec<AtomConfig>,
    pub density: Option<DensityConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub alpha: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub family: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub nodes: usize,
    #[serde(default = "default_rule")]
    pub rule: String,
}

fn default_rule() -> String {
    "midpoint".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_start: Option<f64>,
    pub lambda_end: Option<f64>,
    pub target_max_u: Option<f64>,
    /// Truncation parameter of the sharp-threshold certificate.
    pub delta: Option<f64>,
    /// Coefficient slack of the split-mass inequality.
    pub eps: Option<f64>,
    /// Exponent parameter of the basic-estimate probe.
    pub eta: Option<f64>,
    pub trials: Option<usize>,
    pub sweep_points: Option<usize>,
    pub a0: Option<f64>,
    pub d0: Option<f64>,
    pub path_points: Option<usize>,
    pub residual_tol: Option<f64>,
    pub newton_tol: Option<f64>,
    /// Expected probe verdict ("bounded_below" / "unbounded"); a mismatch
    /// exits with the verdict-failure code.
    pub expect: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec> {
        let g = &self.geometry;
        Ok(match g.kind.as_str() {
            "rectangle" => DomainSpec::Rectangle {
                sides: g.sides.context("rectangle needs `sides = [a, b]`")?,
            },
            "disc" => DomainSpec::Disc {
                radius: g.radius.unwrap_or(1.0),
                n_theta: g.n_theta,
            },
            "annulus" => DomainSpec::Annulus {
                r_in: g.r_in.context("annulus needs `r_in`")?,
                r_out: g.r_out.context("annulus needs `r_out`")?,
                n_theta: g.n_theta,
            },
            "flat_torus" => DomainSpec::FlatTorus {
                periods: g.periods.unwrap_or([1.0, 1.0]),
            },
            other => bail!("unknown geometry kind `{other}`"),
        })
    }

    /// Atoms plus a quadrature discretization of the named density family;
    /// the continuous part fills the probability mass the atoms leave.
    pub fn build_measure(&self) -> Result<CirculationMeasure<f64>> {
        let atoms: Vec<(f64, f64)> = self
            .measure
            .atoms
            .iter()
            .map(|a| (a.alpha, a.weight))
            .collect();
        let atom_total: f64 = atoms.iter().map(|&(_, w)| w).sum();
        let mut nodes: Vec<(f64, f64)> = Vec::new();
        if let Some(d) = &self.measure.density {
            let family = match d.family.as_str() {
                "uniform" => DensityFamily::Uniform {
                    lo: d.lo.unwrap_or(0.0),
                    hi: d.hi.unwrap_or(1.0),
                },
                "linear" => DensityFamily::Linear,
                other => bail!("unknown density family `{other}`"),
            };
            let rule = match d.rule.as_str() {
                "midpoint" => QuadratureRule::Midpoint,
                "gauss" => QuadratureRule::Gauss,
                other => bail!("unknown quadrature rule `{other}`"),
            };
            let remaining = 1.0 - atom_total;
            if remaining < -1e-12 {
                bail!("atom weights sum to {atom_total} > 1, no room for a density part");
            }
            nodes = density_nodes::<f64>(family, d.nodes, rule)?
                .into_iter()
                .map(|(a, w)| (a, w * remaining.max(0.0)))
                .collect();
        }
        let raw = CirculationMeasure::new_raw(atoms, nodes)?;
        Ok(raw.normalize()?)
    }
}
