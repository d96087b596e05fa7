//! Experiment configuration, read from JSON.
//!
//! Every field has a default, so `{}` is a valid (single-cell) config:
//!
//! ```json
//! {
//!   "models": ["het"],
//!   "noises": ["normal"],
//!   "taus": [0.5],
//!   "n_total": [20000],
//!   "n_local": [500],
//!   "p": 500,
//!   "iterations": 10,
//!   "replicates": 10,
//!   "seed": 1,
//!   "methods": ["dhsqr", "avg_dc", "pooled"],
//!   "lambda": { "schedule": "tuned", "grid_len": 30, "min_ratio": 0.001, "rule": "paired_se" },
//!   "output_dir": "out"
//! }
//! ```

use std::path::PathBuf;

use dhsqr::datagen::{ModelKind, ModelSpec, NoiseLaw};
use dhsqr::engine::{DhsqrConfig, InitLambda, LambdaSchedule};
use dhsqr::kernel::{BandwidthPlan, BandwidthRule};
use dhsqr::lasso::LambdaGrid;
use dhsqr::select::SelectionRule;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "hom")]
    Homoscedastic,
    #[serde(rename = "het")]
    Heteroscedastic,
}

impl Model {
    pub fn kind(self) -> ModelKind {
        match self {
            Model::Homoscedastic => ModelKind::Homoscedastic,
            Model::Heteroscedastic => ModelKind::Heteroscedastic,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Model::Homoscedastic => "hom",
            Model::Heteroscedastic => "het",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    Normal,
    T3,
    Cauchy,
}

impl Noise {
    pub fn law(self) -> NoiseLaw {
        match self {
            Noise::Normal => NoiseLaw::Normal,
            Noise::T3 => NoiseLaw::StudentT3,
            Noise::Cauchy => NoiseLaw::Cauchy,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Noise::Normal => "normal",
            Noise::T3 => "t3",
            Noise::Cauchy => "cauchy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dhsqr,
    AvgDc,
    Pooled,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Dhsqr => "dhsqr",
            Method::AvgDc => "avg_dc",
            Method::Pooled => "pooled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthConfig {
    pub c_h: f64,
    pub c_b: f64,
    /// `"simulation"` or `"theorem"`.
    pub rule: String,
    /// Sparsity used in the formulas.
    pub s_eff: usize,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        BandwidthConfig {
            c_h: 5.0,
            c_b: 0.53,
            rule: "simulation".into(),
            s_eff: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaConfig {
    /// `"validated"`, `"theorem"`, `"tuned"` or `"fixed"`.
    pub schedule: String,
    /// λ grid of the initial fit and of the validated schedule.
    pub grid_len: usize,
    pub min_ratio: f64,
    /// `"min"`, `"one_se"` or `"paired_se"`.
    pub rule: String,
    /// Consecutive non-improving grid points before a path stops; 0 walks
    /// the whole grid.
    pub patience: usize,
    /// Constant of the theorem schedule.
    pub c: f64,
    /// Largest constant tried by the tuned schedule, which searches
    /// `tuned_len` points down to `tuned_min_ratio·c_max`.
    pub c_max: f64,
    pub tuned_len: usize,
    pub tuned_min_ratio: f64,
    /// λ of the fixed schedule.
    pub value: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            schedule: "tuned".into(),
            grid_len: 30,
            min_ratio: 1e-3,
            rule: "paired_se".into(),
            patience: 5,
            c: 0.3,
            c_max: 1.0,
            tuned_len: 10,
            tuned_min_ratio: 0.1,
            value: 0.01,
        }
    }
}

impl LambdaConfig {
    fn selection(&self) -> Result<SelectionRule> {
        match self.rule.as_str() {
            "min" => Ok(SelectionRule::MinLoss),
            "one_se" => Ok(SelectionRule::OneStdErr),
            "paired_se" => Ok(SelectionRule::PairedStdErr),
            other => Err(HarnessError::Config(format!(
                "unknown selection rule {other:?}"
            ))),
        }
    }

    pub fn grid(&self) -> Result<LambdaGrid> {
        Ok(LambdaGrid {
            len: self.grid_len,
            min_ratio: self.min_ratio,
            rule: self.selection()?,
            patience: (self.patience > 0).then_some(self.patience),
        })
    }

    pub fn schedule(&self) -> Result<LambdaSchedule> {
        match self.schedule.as_str() {
            "validated" => Ok(LambdaSchedule::Validated(self.grid()?)),
            "theorem" => Ok(LambdaSchedule::Theorem { c: self.c }),
            "tuned" => Ok(LambdaSchedule::TunedTheorem {
                c_max: self.c_max,
                grid: LambdaGrid {
                    len: self.tuned_len,
                    min_ratio: self.tuned_min_ratio,
                    ..self.grid()?
                },
            }),
            "fixed" => Ok(LambdaSchedule::Fixed(self.value)),
            other => Err(HarnessError::Config(format!(
                "unknown lambda schedule {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub models: Vec<Model>,
    pub noises: Vec<Noise>,
    pub taus: Vec<f64>,
    pub n_total: Vec<usize>,
    pub n_local: Vec<usize>,
    pub p: usize,
    pub ar_rho: f64,
    /// Multiplies the noise; 0 gives noiseless responses.
    pub noise_scale: f64,
    pub iterations: usize,
    pub replicates: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub bandwidth: BandwidthConfig,
    pub lambda: LambdaConfig,
    /// Rows held by the coordinator for tuning; defaults to `n_local`.
    pub validation_size: Option<usize>,
    /// Rows of an extra test split scored by PQE; 0 disables it.
    pub test_size: usize,
    pub penalize_intercept: bool,
    pub output_dir: Option<PathBuf>,
    /// Worker-pool size; `DHSQR_THREADS` caps it.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: vec![Model::Heteroscedastic],
            noises: vec![Noise::Normal],
            taus: vec![0.5],
            n_total: vec![20_000],
            n_local: vec![500],
            p: 500,
            ar_rho: 0.5,
            noise_scale: 1.0,
            iterations: 10,
            replicates: 10,
            seed: 1,
            methods: vec![Method::Dhsqr],
            bandwidth: BandwidthConfig::default(),
            lambda: LambdaConfig::default(),
            validation_size: None,
            test_size: 0,
            penalize_intercept: false,
            output_dir: None,
            threads: None,
        }
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub model: Model,
    pub noise: Noise,
    pub tau: f64,
    pub n_total: usize,
    pub n_local: usize,
}

impl Cell {
    pub fn machines(&self) -> usize {
        self.n_total / self.n_local
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if self.models.is_empty()
            || self.noises.is_empty()
            || self.taus.is_empty()
            || self.methods.is_empty()
        {
            return bad("models, noises, taus and methods must be non-empty".into());
        }
        if self.n_total.is_empty() || self.n_local.is_empty() {
            return bad("n_total and n_local must be non-empty".into());
        }
        for &tau in &self.taus {
            if !(tau > 0.0 && tau < 1.0) {
                return bad(format!("tau {tau} is outside (0, 1)"));
            }
        }
        for &big in &self.n_total {
            for &n in &self.n_local {
                if n == 0 || big % n != 0 {
                    return bad(format!("N={big} is not a multiple of n={n}"));
                }
            }
        }
        if self.validation_size == Some(0) {
            return bad("validation_size must be positive".into());
        }
        if self.bandwidth.s_eff == 0 {
            return bad("bandwidth.s_eff must be positive".into());
        }
        self.bandwidth_rule()?;
        self.lambda.schedule()?;
        self.model_spec(Model::Homoscedastic, Noise::Normal)
            .validate()?;
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }

    fn bandwidth_rule(&self) -> Result<BandwidthRule> {
        match self.bandwidth.rule.as_str() {
            "simulation" => Ok(BandwidthRule::Simulation),
            "theorem" => Ok(BandwidthRule::Theorem),
            other => Err(HarnessError::Config(format!(
                "unknown bandwidth rule {other:?}"
            ))),
        }
    }

    /// Cells in a fixed order: model, noise, τ, N, n.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &noise in &self.noises {
                for &tau in &self.taus {
                    for &n_total in &self.n_total {
                        for &n_local in &self.n_local {
                            out.push(Cell {
                                index: out.len(),
                                model,
                                noise,
                                tau,
                                n_total,
                                n_local,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn model_spec(&self, model: Model, noise: Noise) -> ModelSpec {
        let mut spec = ModelSpec::simulation_default(model.kind(), noise.law(), self.p);
        spec.ar_rho = self.ar_rho;
        spec.noise_scale = self.noise_scale;
        spec
    }

    pub fn validation_rows(&self, cell: &Cell) -> usize {
        self.validation_size.unwrap_or(cell.n_local)
    }

    /// Estimator settings for `cell`.
    pub fn dhsqr_config(&self, cell: &Cell) -> Result<DhsqrConfig> {
        let plan = BandwidthPlan::new(self.bandwidth.s_eff, cell.n_total, cell.n_local)
            .with_constants(self.bandwidth.c_h, self.bandwidth.c_b)
            .with_rule(self.bandwidth_rule()?);
        let mut cfg = DhsqrConfig::new(cell.tau, plan, self.iterations);
        cfg.schedule = self.lambda.schedule()?;
        cfg.init.lambda0 = InitLambda::Validated(self.lambda.grid()?);
        cfg.penalize_intercept = self.penalize_intercept;
        Ok(cfg)
    }
}
