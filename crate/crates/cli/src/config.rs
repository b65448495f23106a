//! Experiment configuration.
//!
//! Every section carries defaults, so the smallest valid config is
//! `{"experiment": "spectrum"}`. The resolved form, with every default
//! filled in, is written next to the report.

use std::path::{Path, PathBuf};

use fklab::discretize::Grid;
use fklab::model::{KernelSpec, PotentialShape, PotentialSpec, RadiusLaw, ValleyGeometry};
use fklab::rates::RateConstants;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Spectrum,
    IucDichotomy,
    GroundStateFit,
    RatesTable,
    McLemmas,
    ChainBound,
    Valley,
    InequalitySuite,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Spectrum => "spectrum",
            ExperimentName::IucDichotomy => "iuc_dichotomy",
            ExperimentName::GroundStateFit => "ground_state_fit",
            ExperimentName::RatesTable => "rates_table",
            ExperimentName::McLemmas => "mc_lemmas",
            ExperimentName::ChainBound => "chain_bound",
            ExperimentName::Valley => "valley",
            ExperimentName::InequalitySuite => "inequality_suite",
        }
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| CliError::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentName,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub spectrum: SpectrumParams,
    #[serde(default)]
    pub iuc_dichotomy: IucParams,
    #[serde(default)]
    pub ground_state_fit: GroundStateParams,
    #[serde(default)]
    pub rates_table: RatesParams,
    #[serde(default)]
    pub mc_lemmas: McParams,
    #[serde(default)]
    pub chain_bound: ChainParams,
    #[serde(default)]
    pub valley: ValleyParams,
    #[serde(default)]
    pub inequality_suite: InequalityParams,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: KernelSpec::truncated(1.0, 1.0).expect("valid default kernel"),
            potential: PotentialSpec::power(2.0).expect("valid default potential"),
        }
    }
}

/// Symmetric grid on `[-r, r]` with `n` nodes.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { r: 10.0, n: 401 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, CliError> {
        Grid::new(self.r, self.n).map_err(|e| CliError::Config(format!("grid: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub seed: u64,
    pub eps_cut: f64,
    pub dt: f64,
    pub workers: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            seed: 20240611,
            eps_cut: 1e-3,
            dt: 1e-4,
            workers: 1,
        }
    }
}

/// Pass/fail thresholds of the pipelines.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Eigen-residual relative to `‖A‖_∞`.
    pub residual: f64,
    pub orthonormality: f64,
    /// Relative Chapman–Kolmogorov defect of the heat kernel.
    pub chapman_kolmogorov: f64,
    /// Relative gap between `λ₁` and `D^V(φ₁, φ₁)`.
    pub variational: f64,
    /// `Λ` growth below this factor counts as bounded.
    pub iuc_bounded_growth: f64,
    /// `Λ` growth above this factor counts as blow-up.
    pub iuc_blowup_growth: f64,
    /// Admissible decay constant `a` as a multiple of `θ`.
    pub decay_a_band: (f64, f64),
    /// Admissible distance of the free `b` from `(γ-1)/γ`.
    pub decay_b_halfwidth: f64,
    pub sandwich_max_fraction: f64,
    pub exit_slope_halfwidth: f64,
    pub exit_collapse_max: f64,
    pub window_ratio: (f64, f64),
    pub fk_relative_gap: f64,
    pub chain_slope_factor: f64,
    pub valley_oracle: f64,
    pub classifier_min_agreement: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-8,
            orthonormality: 1e-8,
            chapman_kolmogorov: 1e-8,
            variational: 1e-6,
            iuc_bounded_growth: 2.0,
            iuc_blowup_growth: 10.0,
            decay_a_band: (0.5, 1.5),
            decay_b_halfwidth: 0.25,
            sandwich_max_fraction: 0.05,
            exit_slope_halfwidth: 0.2,
            exit_collapse_max: 2.0,
            window_ratio: (1.5, 2.5),
            fk_relative_gap: 0.1,
            chain_slope_factor: 1.3,
            valley_oracle: 1e-10,
            classifier_min_agreement: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    /// Eigenpairs listed in the report.
    pub modes: usize,
    /// Times for the Chapman–Kolmogorov check.
    pub heat_times: Vec<f64>,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            modes: 10,
            heat_times: vec![0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IucParams {
    pub thetas: Vec<f64>,
    pub radii: Vec<f64>,
    pub t: f64,
    /// Nodes used for the two-point ratio, skipped when outside the largest grid.
    pub condition13_points: (f64, f64),
}

impl Default for IucParams {
    fn default() -> Self {
        IucParams {
            thetas: vec![0.5, 2.0],
            radii: vec![5.0, 10.0, 20.0],
            t: 1.0,
            condition13_points: (5.0, 10.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateParams {
    pub envelope_eps: f64,
    /// Exponent of the logarithm in the fixed-`b` fit.
    pub b_fixed: f64,
    /// Constant `c` of the tempered envelopes.
    pub tempered_c: f64,
}

impl Default for GroundStateParams {
    fn default() -> Self {
        GroundStateParams {
            envelope_eps: 0.1,
            b_fixed: 1.0,
            tempered_c: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesParams {
    pub epsilon: f64,
    pub s_values: Vec<f64>,
    /// `(θ₁, θ₂)` pairs of power-log potentials for the classifier.
    pub classifier_grid: Vec<(f64, f64)>,
    pub integral_t0: f64,
    pub constants: RateConstants,
}

impl Default for RatesParams {
    fn default() -> Self {
        RatesParams {
            epsilon: 1.0 / 22.0,
            s_values: (0..=24)
                .map(|k| 10f64.powf(-6.0 + 0.25 * k as f64))
                .collect(),
            classifier_grid: vec![
                (0.5, 0.0),
                (1.0, 1.0),
                (1.0, 2.0),
                (1.0, 3.0),
                (1.5, 0.0),
                (2.0, -1.0),
            ],
            integral_t0: 10.0,
            constants: RateConstants::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McParams {
    pub exit_radii: Vec<f64>,
    pub exit_paths: usize,
    pub window_b: (f64, f64),
    pub window_d: (f64, f64),
    pub window_t1: f64,
    pub window_width: f64,
    pub window_eps: f64,
    pub window_paths: usize,
    /// Coarser cutoff and step for the long-time Feynman–Kac run.
    pub fk_eps_cut: f64,
    pub fk_dt: f64,
    pub fk_times: Vec<f64>,
    pub fk_paths: usize,
    /// Paths written by `--dump-paths`.
    pub dump_count: usize,
    pub dump_horizon: f64,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            exit_radii: vec![0.1, 0.2, 0.4],
            exit_paths: 10_000,
            window_b: (0.0, 0.15),
            window_d: (0.6, 0.15),
            window_t1: 0.002,
            window_width: 0.004,
            window_eps: 0.15,
            window_paths: 100_000,
            fk_eps_cut: 0.05,
            fk_dt: 0.005,
            fk_times: vec![2.0, 4.0, 8.0],
            fk_paths: 100_000,
            dump_count: 100,
            dump_horizon: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainParams {
    pub eps: f64,
    pub points: Vec<f64>,
    /// Target ball `D = B(center, radius)`.
    pub target: (f64, f64),
    pub tilt_rate: f64,
    pub paths: usize,
    /// Link constant `C` of the lower-bound product.
    pub link_constant: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        ChainParams {
            eps: 0.09,
            points: vec![6.0, 9.0, 12.0],
            target: (0.0, 0.18),
            tilt_rate: 2000.0,
            paths: 20_000,
            link_constant: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValleyParams {
    /// Power-radius valley for the tail comparison and the summability rejection.
    pub power_valley: ValleyGeometry,
    pub tail_eps: f64,
    pub tail_radii: Vec<f64>,
    pub oracle_terms: u64,
    /// Exponential-tail valley for the slicing schedule.
    pub exp_tail_valley: ValleyGeometry,
    pub slicing_s: Vec<f64>,
    pub epsilon: f64,
    pub constants: RateConstants,
    /// Small valley family resolved on a grid for the two-point ratio.
    pub reduced_valley: ValleyGeometry,
    pub reduced_grid: GridConfig,
    pub reduced_t: f64,
}

impl Default for ValleyParams {
    fn default() -> Self {
        let quadratic = Box::new(PotentialShape::Power { c: 1.0, theta: 2.0 });
        ValleyParams {
            power_valley: ValleyGeometry {
                k0: 5.0,
                radius_law: RadiusLaw::Power { alpha: 0.5 },
                count: None,
                off_valley: quadratic.clone(),
            },
            tail_eps: 0.5,
            tail_radii: vec![2.0, 10.0, 100.0, 1000.0],
            oracle_terms: 2_000_000,
            exp_tail_valley: ValleyGeometry {
                k0: 1.0,
                radius_law: RadiusLaw::ExpTail {
                    c6: 4.0,
                    eta1: 1.0,
                    eta2: 2.0,
                },
                count: None,
                off_valley: quadratic.clone(),
            },
            slicing_s: vec![0.05, 0.1, 0.2],
            epsilon: 1.0 / 22.0,
            constants: RateConstants::default(),
            reduced_valley: ValleyGeometry {
                k0: 2.0,
                radius_law: RadiusLaw::Constant { radius: 0.5 },
                count: Some(3),
                off_valley: quadratic,
            },
            reduced_grid: GridConfig { r: 12.0, n: 481 },
            reduced_t: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InequalityParams {
    pub functions: usize,
    /// `(r, s)` pairs of the mollifier estimate.
    pub pairs: Vec<(f64, f64)>,
    pub grid: GridConfig,
    pub support: f64,
    pub knot: f64,
    pub rrr_radii: Vec<f64>,
}

impl Default for InequalityParams {
    fn default() -> Self {
        let mut pairs = Vec::new();
        for r in [1.0, 2.0, 4.0] {
            for s in [0.25, 0.5, 1.0] {
                pairs.push((r, s));
            }
        }
        InequalityParams {
            functions: 200,
            pairs,
            grid: GridConfig { r: 8.0, n: 321 },
            support: 6.0,
            knot: 0.5,
            rrr_radii: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolved_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need any numerical work.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let grid = self.grid.build()?;
        if self.scheme.workers == 0 {
            return bad("scheme.workers must be at least 1".into());
        }
        if !(self.scheme.eps_cut > 0.0 && self.scheme.dt > 0.0) {
            return bad("scheme.eps_cut and scheme.dt must be positive".into());
        }
        let positive = |name: &str, xs: &[f64]| -> Result<(), CliError> {
            if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0)) {
                return Err(CliError::Config(format!(
                    "{name} must be a non-empty list of positive numbers"
                )));
            }
            Ok(())
        };
        match self.experiment {
            ExperimentName::Spectrum | ExperimentName::GroundStateFit => {
                if self.spectrum.modes == 0 || self.spectrum.modes > grid.n {
                    return bad(format!("spectrum.modes must lie in 1..={}", grid.n));
                }
                positive("spectrum.heat_times", &self.spectrum.heat_times)?;
            }
            ExperimentName::IucDichotomy => {
                positive("iuc_dichotomy.thetas", &self.iuc_dichotomy.thetas)?;
                positive("iuc_dichotomy.radii", &self.iuc_dichotomy.radii)?;
                if self.iuc_dichotomy.radii.len() < 2 {
                    return bad("iuc_dichotomy.radii needs at least two radii".into());
                }
                positive("iuc_dichotomy.t", &[self.iuc_dichotomy.t])?;
            }
            ExperimentName::RatesTable => {
                positive("rates_table.s_values", &self.rates_table.s_values)?;
                if self.rates_table.classifier_grid.is_empty() {
                    return bad("rates_table.classifier_grid is empty".into());
                }
            }
            ExperimentName::McLemmas => {
                let p = &self.mc_lemmas;
                positive("mc_lemmas.exit_radii", &p.exit_radii)?;
                positive("mc_lemmas.fk_times", &p.fk_times)?;
                if p.fk_times.len() < 2 {
                    return bad("mc_lemmas.fk_times needs at least two times".into());
                }
                if p.exit_paths == 0 || p.window_paths == 0 || p.fk_paths == 0 {
                    return bad("mc_lemmas path counts must be positive".into());
                }
            }
            ExperimentName::ChainBound => {
                positive("chain_bound.points", &self.chain_bound.points)?;
                if self.chain_bound.points.len() < 2 || self.chain_bound.paths == 0 {
                    return bad("chain_bound needs two points and a positive path count".into());
                }
            }
            ExperimentName::Valley => {
                positive("valley.tail_radii", &self.valley.tail_radii)?;
                positive("valley.slicing_s", &self.valley.slicing_s)?;
                self.valley.reduced_grid.build()?;
            }
            ExperimentName::InequalitySuite => {
                let p = &self.inequality_suite;
                p.grid.build()?;
                if p.functions == 0 || p.pairs.is_empty() {
                    return bad("inequality_suite needs functions and (r, s) pairs".into());
                }
            }
        }
        Ok(())
    }
}
