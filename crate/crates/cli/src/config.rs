//! JSON config loading. Top-level documents carry `"type": "run" | "sweep"`;
//! nested fragments (objective, optimizer, schedule, scaling) carry a
//! `"kind"` tag. Unknown keys are rejected with an error naming the key, and
//! every numeric constraint is validated at load time so a config that parses
//! is a config that runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use serde_json::Value;

use rg_optim_core::{
    gen_blobs, Nonlinearity, Objective, OptimizerState, RngState, ScalingStrategy, Schedule,
};

/// A parsed config file: either a single run or a sweep over a run template.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Run(RunConfig),
    Sweep(SweepConfig),
}

/// Everything that determines a single training run. Two runs built from the
/// same `RunConfig` produce bitwise-identical semantic CSV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub objective: ObjectiveSpec,
    /// 0 means full-batch (exact gradient); otherwise the minibatch size.
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub schedule: ScheduleSpec,
    pub scaling: ScalingSpec,
    pub max_steps: u64,
    pub base_seed: u64,
    /// Log curvature/accuracy diagnostics every N steps; 0 disables them.
    pub diagnostics_every: u64,
    /// CSV file name, resolved against the output directory; default run.csv.
    pub log_path: Option<String>,
}

/// A grid of axis overrides applied to a base run template, replicated over
/// derived seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: RunConfig,
    /// Axis name -> list of values; cells enumerate the product in sorted
    /// axis-name order, last axis fastest.
    pub axes: BTreeMap<String, Vec<Value>>,
    pub seeds_per_cell: u64,
    /// Optional loss target for the steps-to-threshold summary column.
    pub loss_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Quadratic {
        dim: usize,
        condition_number: f64,
        seed: u64,
    },
    Rosenbrock {
        dim: usize,
    },
    Logreg(BlobsSpec),
    Mlp {
        blobs: BlobsSpec,
        hidden: usize,
        nonlinearity: Nonlinearity,
    },
}

/// Generator parameters for the Gaussian-blobs dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobsSpec {
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub separation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerSpec {
    Sgd {
        weight_decay: f64,
    },
    Momentum {
        alpha: f64,
        weight_decay: f64,
    },
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec {
    Constant {
        base_lr: f64,
    },
    Poly {
        base_lr: f64,
        power: f64,
        max_iter: u64,
    },
    Step {
        base_lr: f64,
        decay_factor: f64,
        milestones: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingSpec {
    Identity,
    Constant {
        weight: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Cyclical {
        cycle_low: f64,
        cycle_high: f64,
        cycle_length: u64,
    },
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in config file {}", path.display()))
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let value: Value = serde_json::from_str(text).context("malformed JSON")?;
    let doc_type = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| anyhow!("missing or non-string key `type` (expected \"run\" or \"sweep\")"))?
        .to_owned();
    match doc_type.as_str() {
        "run" => Ok(ConfigFile::Run(parse_run_body(value)?)),
        "sweep" => Ok(ConfigFile::Sweep(parse_sweep(value)?)),
        other => bail!("unknown `type` value {other:?} (expected \"run\" or \"sweep\")"),
    }
}

/// Run-config fields, minus the already-dispatched `type` tag.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBodyRaw {
    objective: Value,
    #[serde(default)]
    batch_size: usize,
    optimizer: Value,
    schedule: Value,
    scaling: Value,
    max_steps: u64,
    base_seed: u64,
    #[serde(default)]
    diagnostics_every: u64,
    #[serde(default)]
    log_path: Option<String>,
}

fn parse_run_body(mut value: Value) -> Result<RunConfig> {
    if let Some(map) = value.as_object_mut() {
        map.remove("type");
    }
    let raw: RunBodyRaw = serde_json::from_value(value).context("in run config")?;
    let config = RunConfig {
        objective: parse_objective(&raw.objective)?,
        batch_size: raw.batch_size,
        optimizer: parse_optimizer(&raw.optimizer)?,
        schedule: parse_schedule(&raw.schedule)?,
        scaling: parse_scaling(&raw.scaling)?,
        max_steps: raw.max_steps,
        base_seed: raw.base_seed,
        diagnostics_every: raw.diagnostics_every,
        log_path: raw.log_path,
    };
    config.validate()?;
    Ok(config)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRaw {
    #[serde(rename = "type")]
    _type: String,
    base: Value,
    #[serde(default)]
    axes: BTreeMap<String, Vec<Value>>,
    seeds_per_cell: u64,
    #[serde(default)]
    loss_threshold: Option<f64>,
}

fn parse_sweep(value: Value) -> Result<SweepConfig> {
    let raw: SweepRaw = serde_json::from_value(value).context("in sweep config")?;
    if let Some(tag) = raw.base.get("type") {
        bail!("sweep `base` must not carry a `type` key (found {tag})");
    }
    let base = parse_run_body(raw.base).context("in sweep `base`")?;
    if raw.seeds_per_cell == 0 {
        bail!("`seeds_per_cell` must be >= 1");
    }
    if let Some(threshold) = raw.loss_threshold {
        if !threshold.is_finite() {
            bail!("`loss_threshold` must be finite, got {threshold}");
        }
    }
    let sweep = SweepConfig {
        base,
        axes: raw.axes,
        seeds_per_cell: raw.seeds_per_cell,
        loss_threshold: raw.loss_threshold,
    };
    for (name, values) in &sweep.axes {
        if values.is_empty() {
            bail!("axis `{name}` has an empty value list");
        }
        for value in values {
            let mut probe = sweep.base.clone();
            apply_axis(&mut probe, name, value)
                .with_context(|| format!("in axis `{name}` value {value}"))?;
            probe
                .validate()
                .with_context(|| format!("in axis `{name}` value {value}"))?;
        }
    }
    Ok(sweep)
}

/// Apply one axis override to a run template. Supported axes: `lr`,
/// `alpha`, `weight_decay`, `batch_size`, `scaling`.
pub fn apply_axis(config: &mut RunConfig, name: &str, value: &Value) -> Result<()> {
    match name {
        "lr" => {
            let lr = number(value, "lr")?;
            match &mut config.schedule {
                ScheduleSpec::Constant { base_lr }
                | ScheduleSpec::Poly { base_lr, .. }
                | ScheduleSpec::Step { base_lr, .. } => *base_lr = lr,
            }
        }
        "alpha" => {
            let alpha = number(value, "alpha")?;
            match &mut config.optimizer {
                OptimizerSpec::Momentum { alpha: a, .. } => *a = alpha,
                other => bail!(
                    "axis `alpha` requires a momentum optimizer, config uses {}",
                    optimizer_kind_name(other)
                ),
            }
        }
        "weight_decay" => {
            let wd = number(value, "weight_decay")?;
            match &mut config.optimizer {
                OptimizerSpec::Sgd { weight_decay }
                | OptimizerSpec::Momentum { weight_decay, .. }
                | OptimizerSpec::Adam { weight_decay, .. } => *weight_decay = wd,
            }
        }
        "batch_size" => {
            config.batch_size = value
                .as_u64()
                .ok_or_else(|| anyhow!("axis `batch_size` values must be non-negative integers"))?
                as usize;
        }
        "scaling" => {
            config.scaling = parse_scaling(value)?;
        }
        other => bail!(
            "unknown sweep axis `{other}` (expected lr, alpha, weight_decay, batch_size, or scaling)"
        ),
    }
    Ok(())
}

/// Short display string for an axis value, used in summary-table cells.
pub fn axis_value_label(name: &str, value: &Value) -> String {
    if name == "scaling" {
        value
            .get("kind")
            .and_then(Value::as_str)
            .unwrap_or("?")
            .to_owned()
    } else if let Some(v) = value.as_f64() {
        format!("{v}")
    } else {
        value.to_string()
    }
}

fn number(value: &Value, what: &str) -> Result<f64> {
    value
        .as_f64()
        .ok_or_else(|| anyhow!("axis `{what}` values must be numbers, got {value}"))
}

fn optimizer_kind_name(spec: &OptimizerSpec) -> &'static str {
    match spec {
        OptimizerSpec::Sgd { .. } => "sgd",
        OptimizerSpec::Momentum { .. } => "momentum",
        OptimizerSpec::Adam { .. } => "adam",
    }
}

fn kind_of(value: &Value, what: &str) -> Result<String> {
    if !value.is_object() {
        bail!("`{what}` must be a JSON object with a `kind` key");
    }
    value
        .get("kind")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| anyhow!("`{what}`: missing or non-string key `kind`"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticRaw {
    #[serde(rename = "kind")]
    _kind: String,
    dim: usize,
    condition_number: f64,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RosenbrockRaw {
    #[serde(rename = "kind")]
    _kind: String,
    dim: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogregRaw {
    #[serde(rename = "kind")]
    _kind: String,
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpRaw {
    #[serde(rename = "kind")]
    _kind: String,
    n: usize,
    dim: usize,
    classes: usize,
    separation: f64,
    seed: u64,
    hidden: usize,
    nonlinearity: String,
}

fn parse_objective(value: &Value) -> Result<ObjectiveSpec> {
    let kind = kind_of(value, "objective")?;
    let spec = match kind.as_str() {
        "quadratic" => {
            let raw: QuadraticRaw =
                serde_json::from_value(value.clone()).context("in `objective`")?;
            ObjectiveSpec::Quadratic {
                dim: raw.dim,
                condition_number: raw.condition_number,
                seed: raw.seed,
            }
        }
        "rosenbrock" => {
            let raw: RosenbrockRaw =
                serde_json::from_value(value.clone()).context("in `objective`")?;
            ObjectiveSpec::Rosenbrock { dim: raw.dim }
        }
        "logreg" => {
            let raw: LogregRaw = serde_json::from_value(value.clone()).context("in `objective`")?;
            ObjectiveSpec::Logreg(BlobsSpec {
                n: raw.n,
                dim: raw.dim,
                classes: raw.classes,
                separation: raw.separation,
                seed: raw.seed,
            })
        }
        "mlp" => {
            let raw: MlpRaw = serde_json::from_value(value.clone()).context("in `objective`")?;
            ObjectiveSpec::Mlp {
                blobs: BlobsSpec {
                    n: raw.n,
                    dim: raw.dim,
                    classes: raw.classes,
                    separation: raw.separation,
                    seed: raw.seed,
                },
                hidden: raw.hidden,
                nonlinearity: parse_nonlinearity(&raw.nonlinearity)?,
            }
        }
        other => bail!(
            "`objective.kind` {other:?} unknown (expected quadratic, rosenbrock, logreg, or mlp)"
        ),
    };
    Ok(spec)
}

fn parse_nonlinearity(name: &str) -> Result<Nonlinearity> {
    match name {
        "relu" => Ok(Nonlinearity::Relu),
        "sigmoid" => Ok(Nonlinearity::Sigmoid),
        other => bail!("`nonlinearity` {other:?} unknown (expected relu or sigmoid)"),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SgdRaw {
    #[serde(rename = "kind")]
    _kind: String,
    #[serde(default)]
    weight_decay: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentumRaw {
    #[serde(rename = "kind")]
    _kind: String,
    alpha: f64,
    #[serde(default)]
    weight_decay: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamRaw {
    #[serde(rename = "kind")]
    _kind: String,
    #[serde(default = "default_beta1")]
    beta1: f64,
    #[serde(default = "default_beta2")]
    beta2: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default)]
    weight_decay: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

fn parse_optimizer(value: &Value) -> Result<OptimizerSpec> {
    let kind = kind_of(value, "optimizer")?;
    let spec = match kind.as_str() {
        "sgd" => {
            let raw: SgdRaw = serde_json::from_value(value.clone()).context("in `optimizer`")?;
            OptimizerSpec::Sgd {
                weight_decay: raw.weight_decay,
            }
        }
        "momentum" => {
            let raw: MomentumRaw =
                serde_json::from_value(value.clone()).context("in `optimizer`")?;
            OptimizerSpec::Momentum {
                alpha: raw.alpha,
                weight_decay: raw.weight_decay,
            }
        }
        "adam" => {
            let raw: AdamRaw = serde_json::from_value(value.clone()).context("in `optimizer`")?;
            OptimizerSpec::Adam {
                beta1: raw.beta1,
                beta2: raw.beta2,
                epsilon: raw.epsilon,
                weight_decay: raw.weight_decay,
            }
        }
        other => bail!("`optimizer.kind` {other:?} unknown (expected sgd, momentum, or adam)"),
    };
    Ok(spec)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantScheduleRaw {
    #[serde(rename = "kind")]
    _kind: String,
    base_lr: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyRaw {
    #[serde(rename = "kind")]
    _kind: String,
    base_lr: f64,
    #[serde(default = "default_power")]
    power: f64,
    max_iter: u64,
}

fn default_power() -> f64 {
    0.9
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepScheduleRaw {
    #[serde(rename = "kind")]
    _kind: String,
    base_lr: f64,
    #[serde(default = "default_decay_factor")]
    decay_factor: f64,
    milestones: Vec<u64>,
}

fn default_decay_factor() -> f64 {
    0.1
}

fn parse_schedule(value: &Value) -> Result<ScheduleSpec> {
    let kind = kind_of(value, "schedule")?;
    let spec = match kind.as_str() {
        "constant" => {
            let raw: ConstantScheduleRaw =
                serde_json::from_value(value.clone()).context("in `schedule`")?;
            ScheduleSpec::Constant {
                base_lr: raw.base_lr,
            }
        }
        "poly" => {
            let raw: PolyRaw = serde_json::from_value(value.clone()).context("in `schedule`")?;
            ScheduleSpec::Poly {
                base_lr: raw.base_lr,
                power: raw.power,
                max_iter: raw.max_iter,
            }
        }
        "step" => {
            let raw: StepScheduleRaw =
                serde_json::from_value(value.clone()).context("in `schedule`")?;
            ScheduleSpec::Step {
                base_lr: raw.base_lr,
                decay_factor: raw.decay_factor,
                milestones: raw.milestones,
            }
        }
        other => bail!("`schedule.kind` {other:?} unknown (expected constant, poly, or step)"),
    };
    Ok(spec)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IdentityRaw {
    #[serde(rename = "kind")]
    _kind: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantScalingRaw {
    #[serde(rename = "kind")]
    _kind: String,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UniformRaw {
    #[serde(rename = "kind")]
    _kind: String,
    low: f64,
    high: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CyclicalRaw {
    #[serde(rename = "kind")]
    _kind: String,
    cycle_low: f64,
    cycle_high: f64,
    cycle_length: u64,
}

fn parse_scaling(value: &Value) -> Result<ScalingSpec> {
    let kind = kind_of(value, "scaling")?;
    let spec = match kind.as_str() {
        "identity" => {
            let _raw: IdentityRaw =
                serde_json::from_value(value.clone()).context("in `scaling`")?;
            ScalingSpec::Identity
        }
        "constant" => {
            let raw: ConstantScalingRaw =
                serde_json::from_value(value.clone()).context("in `scaling`")?;
            ScalingSpec::Constant { weight: raw.weight }
        }
        "uniform" => {
            let raw: UniformRaw = serde_json::from_value(value.clone()).context("in `scaling`")?;
            ScalingSpec::Uniform {
                low: raw.low,
                high: raw.high,
            }
        }
        "cyclical" => {
            let raw: CyclicalRaw = serde_json::from_value(value.clone()).context("in `scaling`")?;
            ScalingSpec::Cyclical {
                cycle_low: raw.cycle_low,
                cycle_high: raw.cycle_high,
                cycle_length: raw.cycle_length,
            }
        }
        other => bail!(
            "`scaling.kind` {other:?} unknown (expected identity, constant, uniform, or cyclical)"
        ),
    };
    Ok(spec)
}

impl BlobsSpec {
    pub fn build(&self) -> Result<rg_optim_core::Dataset> {
        gen_blobs(self.n, self.dim, self.classes, self.separation, self.seed)
            .map_err(|e| anyhow!("{e}"))
    }
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<Objective> {
        let objective = match self {
            ObjectiveSpec::Quadratic {
                dim,
                condition_number,
                seed,
            } => Objective::quadratic(*dim, *condition_number, *seed),
            ObjectiveSpec::Rosenbrock { dim } => Objective::rosenbrock(*dim),
            ObjectiveSpec::Logreg(blobs) => {
                return Objective::logistic_regression(blobs.build()?).map_err(|e| anyhow!("{e}"))
            }
            ObjectiveSpec::Mlp {
                blobs,
                hidden,
                nonlinearity,
            } => {
                return Objective::mlp(blobs.build()?, *hidden, *nonlinearity)
                    .map_err(|e| anyhow!("{e}"))
            }
        };
        objective.map_err(|e| anyhow!("in `objective`: {e}"))
    }

    pub fn dataset_size(&self) -> Option<usize> {
        match self {
            ObjectiveSpec::Quadratic { .. } | ObjectiveSpec::Rosenbrock { .. } => None,
            ObjectiveSpec::Logreg(blobs) | ObjectiveSpec::Mlp { blobs, .. } => Some(blobs.n),
        }
    }
}

impl OptimizerSpec {
    pub fn build(&self, dim: usize) -> Result<OptimizerState> {
        let state = match self {
            OptimizerSpec::Sgd { weight_decay } => OptimizerState::sgd(*weight_decay),
            OptimizerSpec::Momentum {
                alpha,
                weight_decay,
            } => OptimizerState::momentum(*alpha, *weight_decay, dim),
            OptimizerSpec::Adam {
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => OptimizerState::adam(*beta1, *beta2, *epsilon, *weight_decay, dim),
        };
        state.map_err(|e| anyhow!("in `optimizer`: {e}"))
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        let schedule = match self {
            ScheduleSpec::Constant { base_lr } => Schedule::constant(*base_lr),
            ScheduleSpec::Poly {
                base_lr,
                power,
                max_iter,
            } => Schedule::poly(*base_lr, *power, *max_iter),
            ScheduleSpec::Step {
                base_lr,
                decay_factor,
                milestones,
            } => Schedule::step(*base_lr, *decay_factor, milestones.clone()),
        };
        schedule.map_err(|e| anyhow!("in `schedule`: {e}"))
    }
}

impl ScalingSpec {
    pub fn build(&self, rng: RngState) -> Result<ScalingStrategy> {
        let strategy = match self {
            ScalingSpec::Identity => return Ok(ScalingStrategy::identity()),
            ScalingSpec::Constant { weight } => ScalingStrategy::constant(*weight),
            ScalingSpec::Uniform { low, high } => ScalingStrategy::uniform(*low, *high, rng),
            ScalingSpec::Cyclical {
                cycle_low,
                cycle_high,
                cycle_length,
            } => ScalingStrategy::cyclical(*cycle_low, *cycle_high, *cycle_length),
        };
        strategy.map_err(|e| anyhow!("in `scaling`: {e}"))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScalingSpec::Identity => "identity",
            ScalingSpec::Constant { .. } => "constant",
            ScalingSpec::Uniform { .. } => "uniform",
            ScalingSpec::Cyclical { .. } => "cyclical",
        }
    }
}

impl RunConfig {
    /// Build every component once, surfacing any constraint violation with
    /// the offending key named; called by the parser so bad configs never
    /// reach the runner.
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            bail!("`max_steps` must be >= 1");
        }
        let objective = self.objective.build()?;
        self.optimizer.build(objective.dim())?;
        let schedule = self.schedule.build()?;
        if let Schedule::Poly { max_iter, .. } = schedule {
            if max_iter < self.max_steps.saturating_sub(1) {
                bail!(
                    "`schedule.max_iter` ({max_iter}) must be >= `max_steps` - 1 ({}) so \
                     every step has a defined learning rate",
                    self.max_steps - 1
                );
            }
        }
        self.scaling.build(RngState::new(0))?;
        match self.objective.dataset_size() {
            Some(n) => {
                if self.batch_size > n {
                    bail!(
                        "`batch_size` ({}) exceeds the dataset size ({n})",
                        self.batch_size
                    );
                }
            }
            None => {
                if self.batch_size != 0 {
                    bail!(
                        "`batch_size` must be 0 (full batch) for the {} objective, got {}",
                        match self.objective {
                            ObjectiveSpec::Quadratic { .. } => "quadratic",
                            _ => "rosenbrock",
                        },
                        self.batch_size
                    );
                }
            }
        }
        Ok(())
    }
}
