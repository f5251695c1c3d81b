//! Experiment configuration: a TOML file with one section per subcommand.
//!
//! Every section is optional and every key has a default. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use anyhow::{anyhow, bail, Context, Result};
use meanfield_core::meanfield::{reference_measure, Grid, GridMeasure};
use meanfield_core::potentials::{builtin_model_by_name, MeanFieldModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub constants: ConstantsConfig,
    pub sample: SampleConfig,
    pub invariant: InvariantConfig,
    pub evolve: EvolveConfig,
    pub chaos: ChaosConfig,
    pub verify: VerifyConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            constants: ConstantsConfig::default(),
            sample: SampleConfig::default(),
            invariant: InvariantConfig::default(),
            evolve: EvolveConfig::default(),
            chaos: ChaosConfig::default(),
            verify: VerifyConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// One of `gaussian`, `curie_weiss`, `free`, `radial_quadratic`, `fourier`.
    pub family: String,
    pub params: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { family: "curie_weiss".into(), params: vec![1.0, 0.2] }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<MeanFieldModel> {
        builtin_model_by_name(&self.family, &self.params).with_context(|| format!("model `{}` with params {:?}", self.family, self.params))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min: -8.0, x_max: 8.0, n_cells: 1600 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Ok(Grid::new(self.x_min, self.x_max, self.n_cells)?)
    }

    /// The grid, after checking that it spans at least four standard
    /// deviations of the reference measure on each side of its mean.
    pub fn build_for(&self, model: &MeanFieldModel) -> Result<Grid> {
        let grid = self.build()?;
        let alpha = reference_measure(model, grid).context("reference measure does not fit on the grid; widen [grid]")?;
        let (m, sd) = (alpha.mean(), alpha.variance().sqrt());
        if grid.x_min > m - 4.0 * sd || grid.x_max < m + 4.0 * sd {
            bail!(
                "grid [{}, {}] covers less than 8 standard deviations of the reference measure (mean {m:.3}, sd {sd:.3})",
                grid.x_min,
                grid.x_max
            );
        }
        Ok(grid)
    }
}

/// Starting measure of a grid computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// The reference measure `exp(-V) / C`.
    Reference,
    /// `N(init_mean, init_variance)`.
    Gaussian,
    /// The invariant measure from the fixed-point solver.
    Invariant,
}

pub fn initial_measure(kind: InitKind, mean: f64, variance: f64, model: &MeanFieldModel, grid: Grid, invariant: Option<&GridMeasure>) -> Result<GridMeasure> {
    Ok(match kind {
        InitKind::Reference => reference_measure(model, grid)?,
        InitKind::Gaussian => GridMeasure::gaussian(grid, mean, variance).context("initial Gaussian does not fit on the grid")?,
        InitKind::Invariant => invariant.cloned().ok_or_else(|| anyhow!("no invariant measure available"))?,
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    pub n: usize,
    /// Log-Sobolev constant of the one-particle conditional measures.
    pub rho_lsm: Option<f64>,
    /// Lipschitz constants of the test functions in the correlation bound.
    pub lip_f: f64,
    pub lip_g: f64,
    pub quadrature_tol: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self { n: 3, rho_lsm: None, lip_f: 1.0, lip_g: 1.0, quadrature_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Mala,
    Ula,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// The observable carrying the slowest mode of the model.
    Auto,
    Magnetization,
    Difference,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    pub n: usize,
    pub sampler: SamplerKind,
    pub samples: usize,
    pub dt: f64,
    pub burn_in: usize,
    pub thin: usize,
    /// Also estimate the relaxation rate from Euler–Maruyama dynamics.
    pub gap: bool,
    pub gap_dt: f64,
    pub gap_duration: f64,
    pub observable: ObservableKind,
    /// Write every kept configuration to `samples.csv`.
    pub dump: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            n: 4,
            sampler: SamplerKind::Mala,
            samples: 100_000,
            dt: 0.1,
            burn_in: 1000,
            thin: 1,
            gap: false,
            gap_dt: 0.01,
            gap_duration: 2000.0,
            observable: ObservableKind::Auto,
            dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvariantConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitKind,
    pub init_mean: f64,
    pub init_variance: f64,
    /// Tilt of the biased starts used when uniqueness is not certified.
    pub tilt: f64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 500, init: InitKind::Reference, init_mean: 1.0, init_variance: 0.5, tilt: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    pub init: InitKind,
    pub init_mean: f64,
    pub init_variance: f64,
    /// Log-Sobolev constant of the flow, used directly in the checks.
    pub rho_ls: Option<f64>,
    /// Conditional constant; the flow constant is then `rho_lsm (1 - gamma0)^2`.
    pub rho_lsm: Option<f64>,
    pub slack: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            dt: 1e-3,
            record_every: 100,
            init: InitKind::Gaussian,
            init_mean: 1.0,
            init_variance: 0.5,
            rho_ls: None,
            rho_lsm: None,
            slack: 5e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosConfig {
    pub ns: Vec<usize>,
    pub t_end: f64,
    pub dt: f64,
    pub pde_dt: f64,
    pub pooled_samples: usize,
    pub init: InitKind,
    pub init_mean: f64,
    pub init_variance: f64,
}

impl Default for ChaosConfig {
    fn default() -> Self {
        Self {
            ns: vec![4, 16, 64],
            t_end: 1.0,
            dt: 2.5e-3,
            pde_dt: 1e-3,
            pooled_samples: 400_000,
            init: InitKind::Gaussian,
            init_mean: 1.0,
            init_variance: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Criteria to run, numbered 1 to 11.
    pub criteria: Vec<u32>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { criteria: (1..=11).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Subcommand run at every point: constants, sample, invariant, evolve or chaos.
    pub command: String,
    pub axes: Vec<SweepAxis>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { command: "constants".into(), axes: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    /// Dotted path into the configuration, e.g. `model.params.0` or `constants.n`.
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into(), format: Format::Json }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).context("invalid TOML")?;
        Self::from_table(raw)
    }

    pub fn from_table(raw: toml::Table) -> Result<Self> {
        let cfg: ExperimentConfig = raw.try_into().map_err(|e: toml::de::Error| anyhow!("{}", e.message().trim()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        // Deserializing from the text keeps line numbers in the diagnostics.
        let cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.validate().with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("constants.quadrature_tol", self.constants.quadrature_tol),
            ("sample.dt", self.sample.dt),
            ("sample.gap_dt", self.sample.gap_dt),
            ("sample.gap_duration", self.sample.gap_duration),
            ("invariant.tol", self.invariant.tol),
            ("invariant.init_variance", self.invariant.init_variance),
            ("evolve.t_end", self.evolve.t_end),
            ("evolve.dt", self.evolve.dt),
            ("evolve.slack", self.evolve.slack),
            ("evolve.init_variance", self.evolve.init_variance),
            ("chaos.t_end", self.chaos.t_end),
            ("chaos.dt", self.chaos.dt),
            ("chaos.pde_dt", self.chaos.pde_dt),
            ("chaos.init_variance", self.chaos.init_variance),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                bail!("{name} must be positive, got {value}");
            }
        }
        for (name, value) in [("constants.rho_lsm", self.constants.rho_lsm), ("evolve.rho_ls", self.evolve.rho_ls), ("evolve.rho_lsm", self.evolve.rho_lsm)] {
            if let Some(v) = value {
                if !(v > 0.0) {
                    bail!("{name} must be positive, got {v}");
                }
            }
        }
        if self.evolve.rho_ls.is_some() && self.evolve.rho_lsm.is_some() {
            bail!("evolve.rho_ls and evolve.rho_lsm are mutually exclusive");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.constants.n < 2 || self.sample.n < 2 {
            bail!("particle counts must be at least 2");
        }
        if self.chaos.ns.is_empty() || self.chaos.ns.iter().any(|&n| n < 2) {
            bail!("chaos.ns must list particle counts of at least 2");
        }
        if let Some(c) = self.verify.criteria.iter().find(|c| !(1..=11).contains(*c)) {
            bail!("verify.criteria: no criterion {c}");
        }
        for axis in &self.sweep.axes {
            if axis.values.is_empty() {
                bail!("sweep axis `{}` has no values", axis.key);
            }
        }
        self.model.build()?;
        Ok(())
    }

    /// A copy with `key` (a dotted path) set to `value`, revalidated.
    /// Paths reach defaults too, so `model.params.0` works without a `[model]` section.
    pub fn with_override(&self, key: &str, value: &toml::Value) -> Result<Self> {
        let mut raw = toml::Table::try_from(self).context("serializing the configuration")?;
        set_path(&mut raw, key, value.clone()).with_context(|| format!("sweep key `{key}`"))?;
        Self::from_table(raw).with_context(|| format!("sweep point {key} = {value}"))
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let (last, head) = parts.split_last().ok_or_else(|| anyhow!("empty key"))?;
    let mut root = toml::Value::Table(std::mem::take(table));
    let result = (|| {
        let mut current = &mut root;
        for part in head {
            current = child(current, part)?;
        }
        match current {
            toml::Value::Table(t) => {
                t.insert(last.to_string(), value);
                Ok(())
            }
            toml::Value::Array(a) => {
                let i: usize = last.parse().map_err(|_| anyhow!("`{last}` is not an array index"))?;
                *a.get_mut(i).ok_or_else(|| anyhow!("index {i} out of range"))? = value;
                Ok(())
            }
            _ => bail!("`{key}` does not lead to a table or array"),
        }
    })();
    if let toml::Value::Table(t) = root {
        *table = t;
    }
    result
}

fn child<'a>(node: &'a mut toml::Value, part: &str) -> Result<&'a mut toml::Value> {
    match node {
        toml::Value::Table(t) => Ok(t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))),
        toml::Value::Array(a) => {
            let i: usize = part.parse().map_err(|_| anyhow!("`{part}` is not an array index"))?;
            a.get_mut(i).ok_or_else(|| anyhow!("index {i} out of range"))
        }
        _ => bail!("`{part}` is not inside a table or array"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("[evolve]\nt_edn = 2.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("t_edn"), "{err:#}");
        assert!(ExperimentConfig::parse("[evolv]\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::parse("[evolve]\ndt = 0.0\n").is_err());
        assert!(ExperimentConfig::parse("[evolve]\nrho_ls = 1.0\nrho_lsm = 0.5\n").is_err());
        assert!(ExperimentConfig::parse("[verify]\ncriteria = [12]\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nfamily = \"nope\"\n").is_err());
        assert!(ExperimentConfig::parse("workers = 0\n").is_err());
    }

    #[test]
    fn overrides_reach_defaults_and_array_entries() {
        let cfg = ExperimentConfig::default();
        let c = cfg.with_override("model.params.0", &toml::Value::Float(2.0)).unwrap();
        assert_eq!(c.model.params, vec![2.0, 0.2]);
        let c = c.with_override("evolve.t_end", &toml::Value::Integer(3)).unwrap();
        assert_eq!(c.evolve.t_end, 3.0);
        let c = c.with_override("evolve.rho_ls", &toml::Value::Float(0.5)).unwrap();
        assert_eq!(c.evolve.rho_ls, Some(0.5));
        assert!(cfg.with_override("model.params.7", &toml::Value::Float(1.0)).is_err());
        assert!(cfg.with_override("evolve.no_such_key", &toml::Value::Float(1.0)).is_err());
    }

    #[test]
    fn grid_must_cover_the_reference_measure() {
        let model = ModelConfig { family: "gaussian".into(), params: vec![0.5] }.build().unwrap();
        assert!(GridConfig::default().build_for(&model).is_ok());
        assert!(GridConfig { x_min: -2.0, x_max: 2.0, n_cells: 400 }.build_for(&model).is_err());
    }
}
