//! Experiment configuration: per-experiment defaults, JSON files, and flag
//! overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anderson_core::{make_diag_operator, make_random_symmetric, DataModelSpec, LinearSymmetricOperator};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::method::{parse_methods, Method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LinearBound,
    LinearRate,
    ScalarTight,
    TmeRun,
    TmeJacobian,
    TmeCompare,
    W0Table,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::LinearBound,
        Experiment::LinearRate,
        Experiment::ScalarTight,
        Experiment::TmeRun,
        Experiment::TmeJacobian,
        Experiment::TmeCompare,
        Experiment::W0Table,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::LinearBound => "linear-bound",
            Experiment::LinearRate => "linear-rate",
            Experiment::ScalarTight => "scalar-tight",
            Experiment::TmeRun => "tme-run",
            Experiment::TmeJacobian => "tme-jacobian",
            Experiment::TmeCompare => "tme-compare",
            Experiment::W0Table => "w0-table",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .with_context(|| format!("unknown experiment {s:?}"))
    }
}

/// Linear operator `q(x) = W x + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// `W = Diag(diagonal)`; the offset defaults to zero.
    Diag {
        diagonal: Vec<f64>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    /// Random orthogonal similarity of a seeded uniform spectrum.
    Random {
        n: usize,
        eig_low: f64,
        eig_high: f64,
        #[serde(default)]
        forced_min: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl OperatorSpec {
    /// `Diag(-0.07, 0.62, -0.55, -0.6, 0.15)`.
    pub fn w1() -> Self {
        OperatorSpec::Diag {
            diagonal: vec![-0.07, 0.62, -0.55, -0.6, 0.15],
            offset: None,
        }
    }

    /// `n = 100`, eigenvalues uniform on `(-0.9, 0.9)` plus a forced `-0.95`.
    pub fn w2(n: usize) -> Self {
        OperatorSpec::Random {
            n,
            eig_low: -0.9,
            eig_high: 0.9,
            forced_min: Some(-0.95),
            seed: 0,
        }
    }

    pub fn build(&self) -> anyhow::Result<LinearSymmetricOperator> {
        let op = match self {
            OperatorSpec::Diag { diagonal, offset } => {
                let zeros = vec![0.0; diagonal.len()];
                make_diag_operator(diagonal, offset.as_deref().unwrap_or(&zeros))?
            }
            OperatorSpec::Random {
                n,
                eig_low,
                eig_high,
                forced_min,
                seed,
            } => make_random_symmetric(*n, *eig_low, *eig_high, *forced_min, *seed)?,
        };
        Ok(op)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Model1,
    Model2,
}

impl FromStr for Model {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "model1" | "1" => Ok(Model::Model1),
            "model2" | "2" => Ok(Model::Model2),
            _ => bail!("unknown data model {s:?}"),
        }
    }
}

/// Data for the TME experiments; the run seed is the data seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub model: Model,
    pub p: usize,
    pub n: usize,
    pub n0: usize,
    pub n1: usize,
    pub big_d: usize,
    pub d: usize,
    /// Load this data file instead of generating; every seed then shares it.
    pub file: Option<PathBuf>,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            model: Model::Model1,
            p: 20,
            n: 40,
            n0: 60,
            n1: 57,
            big_d: 20,
            d: 10,
            file: None,
        }
    }
}

impl DataSpec {
    pub fn model_spec(&self, seed: u64) -> DataModelSpec {
        match self.model {
            Model::Model1 => DataModelSpec::Model1 {
                p: self.p,
                n: self.n,
                seed,
            },
            Model::Model2 => DataModelSpec::Model2 {
                n0: self.n0,
                n1: self.n1,
                big_d: self.big_d,
                d: self.d,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Method strings, see [`Method`].
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub operator: OperatorSpec,
    pub data: DataSpec,
    /// Random starting weights per data seed (TME runs).
    pub inits: usize,
    /// `w` of the scalar operator `w I` (scalar-tight).
    pub scalar_w: f64,
    /// Steps for scalar-tight and tme-compare.
    pub steps: usize,
    /// Grid points per axis for w0-table.
    pub grid_points: usize,
    /// Relative finite-difference step for Jacobians.
    pub fd_step: f64,
    /// TME bound rows start once the residual first drops below this.
    pub tme_bound_threshold: f64,
    /// Multiplicative slack on the TME bound.
    pub tme_bound_slack: f64,
    /// Additive slack on the AA rate bound.
    pub rate_slack: f64,
    /// Write measured wall-clock seconds; when false the column holds 0 and
    /// replays are byte-identical.
    pub record_wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_experiment(Experiment::LinearBound)
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut c = Self {
            experiment,
            methods: strings(&["aa1", "aa2", "aa3"]),
            seeds: (0..100).collect(),
            tolerance: 1e-12,
            max_iterations: 10_000,
            operator: OperatorSpec::w1(),
            data: DataSpec::default(),
            inits: 10,
            scalar_w: 0.5,
            steps: 30,
            grid_points: 50,
            fd_step: 1e-5,
            tme_bound_threshold: 1e-4,
            tme_bound_slack: 1.05,
            rate_slack: 0.02,
            record_wall_clock: true,
        };
        match experiment {
            Experiment::LinearBound | Experiment::W0Table => {}
            Experiment::LinearRate => {
                c.methods = strings(&["fp", "aa1", "aa2", "aa3"]);
                c.operator = OperatorSpec::w2(100);
            }
            Experiment::ScalarTight => {
                c.methods = strings(&["aa1"]);
                c.seeds = vec![0];
            }
            Experiment::TmeRun => {
                c.methods = strings(&["aa1:c0=1e4", "aa2:c0=1e4", "aa3:c0=1e4"]);
                c.seeds = (0..10).collect();
            }
            Experiment::TmeJacobian => {
                c.seeds = (0..5).collect();
            }
            Experiment::TmeCompare => {
                c.seeds = (0..5).collect();
                c.steps = 100;
            }
        }
        c
    }

    /// Reads a JSON config. Missing fields take the defaults of the
    /// experiment named in the file, or of `fallback` when it names none.
    pub fn from_json(text: &str, fallback: Experiment) -> anyhow::Result<Self> {
        let given: serde_json::Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let obj = given.as_object().context("config must be a JSON object")?;
        let experiment = match obj.get("experiment") {
            Some(v) => serde_json::from_value(v.clone()).context("bad experiment name")?,
            None => fallback,
        };
        let mut merged = serde_json::to_value(Self::for_experiment(experiment))?;
        let target = merged.as_object_mut().expect("struct serializes to an object");
        for (k, v) in obj {
            target.insert(k.clone(), v.clone());
        }
        let c: Self = serde_json::from_value(merged).context("invalid config")?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_path(path: &Path, fallback: Experiment) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text, fallback)
    }

    pub fn parsed_methods(&self) -> anyhow::Result<Vec<Method>> {
        parse_methods(&self.methods)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let methods = self.parsed_methods()?;
        let needs_methods = !matches!(self.experiment, Experiment::W0Table | Experiment::TmeJacobian | Experiment::TmeCompare);
        if needs_methods && methods.is_empty() {
            bail!("at least one method is required");
        }
        let needs_seeds = !matches!(self.experiment, Experiment::W0Table | Experiment::ScalarTight);
        if needs_seeds && self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if !(self.tolerance > 0.0) {
            bail!("tolerance must be positive");
        }
        if self.max_iterations == 0 {
            bail!("max_iterations must be positive");
        }
        if !(self.scalar_w > 0.0 && self.scalar_w < 1.0) {
            bail!("scalar_w must lie in (0, 1)");
        }
        if self.grid_points < 2 {
            bail!("grid_points must be at least 2");
        }
        if !(self.fd_step > 0.0) {
            bail!("fd_step must be positive");
        }
        if self.experiment == Experiment::TmeRun && self.inits == 0 {
            bail!("inits must be positive");
        }
        Ok(())
    }
}
