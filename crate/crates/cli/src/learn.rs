use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use safepol::gp::{fit_gp_binary, fit_gp_continuous, GpModelSpec, Link, MaternKernelParams};
use safepol::hes::{default_pipeline, HesPipeline};
use safepol::opt::{solve_linear, solve_per_unit, solve_table_pipeline, TableScope};
use safepol::risk::summarize;
use safepol::tables::BurstConfig;
use safepol::{load_dataset, ColumnSchema, Dataset, EmpiricalCovariateDistribution, OutcomeKind, Policy};

use crate::error::{CliError, Result};
use crate::output::{load_config, prepare_out, read_json, write_json, write_text, Job};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PolicyClass {
    #[value(name = "per_unit")]
    PerUnit,
    Linear,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Top,
    All,
}

impl From<Which> for TableScope {
    fn from(w: Which) -> Self {
        match w {
            Which::Top => TableScope::TopTableOnly,
            Which::All => TableScope::AllTables,
        }
    }
}

/// Short-burst overrides shared by the table commands.
#[derive(Debug, Args)]
pub struct BurstArgs {
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub bursts: Option<usize>,
    #[arg(long)]
    pub burst_len: Option<usize>,
}

impl BurstArgs {
    pub fn apply(&self, burst: &mut BurstConfig) {
        if let Some(v) = self.restarts {
            burst.restarts = v;
        }
        if let Some(v) = self.bursts {
            burst.bursts = v;
        }
        if let Some(v) = self.burst_len {
            burst.burst_len = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observational data as CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON column schema: covariates, decision, outcome, k_decisions, outcome_kind.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy_class: Option<PolicyClass>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Kernel length scale shared by every level.
    #[arg(long)]
    pub l: Option<f64>,
    /// Kernel variance shared by every level.
    #[arg(long)]
    pub sigma0sq: Option<f64>,
    /// Baseline policy as JSON (default: decision 0 everywhere).
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Pipeline JSON for the table class (default: the built-in pipeline).
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Tables to learn for the table class.
    #[arg(long, value_enum)]
    pub which: Option<Which>,
    #[command(flatten)]
    pub burst: BurstArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<ColumnSchema>,
    pub policy_class: PolicyClass,
    pub epsilon: Option<f64>,
    pub draws: usize,
    pub seed: u64,
    /// Full model; built from the kernel fields below when absent.
    pub model: Option<GpModelSpec>,
    pub length_scale: f64,
    pub variance: f64,
    pub baseline: Option<Policy>,
    pub pipeline: Option<HesPipeline>,
    pub scope: TableScope,
    pub burst: BurstConfig,
}

impl Default for LearnConfig {
    fn default() -> Self {
        let kernel = MaternKernelParams::default();
        LearnConfig {
            data: None,
            schema: None,
            policy_class: PolicyClass::PerUnit,
            epsilon: None,
            draws: 2000,
            seed: 0,
            model: None,
            length_scale: kernel.length_scale,
            variance: kernel.variance,
            baseline: None,
            pipeline: None,
            scope: TableScope::TopTableOnly,
            burst: BurstConfig::default(),
        }
    }
}

impl LearnConfig {
    pub fn from_args(args: &LearnArgs) -> Result<Self> {
        let mut c: LearnConfig = load_config(args.config.as_deref())?;
        if let Some(v) = &args.data {
            c.data = Some(v.clone());
        }
        if let Some(p) = &args.schema {
            c.schema = Some(read_json(p)?);
        }
        if let Some(v) = args.policy_class {
            c.policy_class = v;
        }
        if let Some(v) = args.epsilon {
            c.epsilon = Some(v);
        }
        if let Some(v) = args.draws {
            c.draws = v;
        }
        if let Some(v) = args.seed {
            c.seed = v;
        }
        if args.l.is_some() || args.sigma0sq.is_some() {
            if c.model.is_some() {
                return Err(CliError::usage("--l/--sigma0sq conflict with a full model in the config"));
            }
            c.length_scale = args.l.unwrap_or(c.length_scale);
            c.variance = args.sigma0sq.unwrap_or(c.variance);
        }
        if let Some(p) = &args.baseline {
            c.baseline = Some(read_json(p)?);
        }
        if let Some(p) = &args.pipeline {
            c.pipeline = Some(read_json(p)?);
        }
        if let Some(w) = args.which {
            c.scope = w.into();
        }
        args.burst.apply(&mut c.burst);
        Ok(c)
    }

    fn check(&self) -> Result<(&Path, &ColumnSchema, f64)> {
        let data = self.data.as_deref().ok_or_else(|| CliError::usage("--data is required"))?;
        let schema = self.schema.as_ref().ok_or_else(|| CliError::usage("--schema is required"))?;
        let epsilon = self.epsilon.ok_or_else(|| CliError::usage("--epsilon is required"))?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(CliError::data(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if self.policy_class == PolicyClass::Table && self.baseline.is_some() {
            return Err(CliError::usage(
                "the table class uses its pipeline as the baseline; drop --baseline",
            ));
        }
        if self.policy_class != PolicyClass::Table && self.pipeline.is_some() {
            return Err(CliError::usage("--pipeline only applies to --policy-class table"));
        }
        if self.policy_class == PolicyClass::Linear
            && (schema.covariates.len() != 2 || schema.k_decisions != 2)
        {
            return Err(CliError::usage(format!(
                "--policy-class linear needs 2 covariates and 2 decisions; the schema has {} covariates and {} decisions",
                schema.covariates.len(),
                schema.k_decisions
            )));
        }
        Ok((data, schema, epsilon))
    }

    fn model_for(&self, data: &Dataset) -> Result<GpModelSpec> {
        if let Some(m) = &self.model {
            return Ok(m.clone());
        }
        let link = match data.outcome_kind() {
            OutcomeKind::Continuous => Link::Identity,
            OutcomeKind::Binary => Link::Logit,
        };
        let kernel = MaternKernelParams::new(self.length_scale, self.variance)?;
        Ok(GpModelSpec::uniform(data.k_decisions(), kernel, link))
    }
}

pub fn command(args: LearnArgs) -> Result<()> {
    let config = LearnConfig::from_args(&args)?;
    config.check()?;
    let out = prepare_out(args.out)?;
    Job::Learn(config).run(&out)
}

/// Fits the posterior for `data` against `baseline` at the data's own
/// covariates and reduces it to a benefit/risk table.
pub fn benefit_risk(
    data: &Dataset,
    model: &GpModelSpec,
    baseline: &Policy,
    draws: usize,
    seed: u64,
) -> Result<safepol::risk::BenefitRiskTable> {
    let query = data.covariates();
    let fit = match model.link {
        Link::Identity => fit_gp_continuous(data, model, baseline, &query, draws, seed)?,
        Link::Logit => fit_gp_binary(data, model, baseline, &query, draws, seed)?,
    };
    let dist = EmpiricalCovariateDistribution::uniform(query)?;
    Ok(summarize(&fit, &dist)?)
}

pub fn run(config: &LearnConfig, out: &Path) -> Result<()> {
    let (path, schema, epsilon) = config.check()?;
    let data = load_dataset(path, schema)?;
    if data.is_empty() {
        return Err(CliError::data("the data file has no rows"));
    }
    let model = config.model_for(&data)?;
    let pipeline = match config.policy_class {
        PolicyClass::Table => Some(match &config.pipeline {
            Some(p) => p.clone(),
            None => default_pipeline(data.k_decisions() as u8),
        }),
        _ => None,
    };
    let baseline = match (&pipeline, &config.baseline) {
        (Some(p), _) => Policy::TablePipeline { pipeline: p.clone() },
        (None, Some(b)) => b.clone(),
        (None, None) => Policy::constant(vec![data.units()[0].covariates.clone()], 0),
    };
    let table = benefit_risk(&data, &model, &baseline, config.draws, config.seed)?;
    table.write_csv(&out.join("benefit_risk.csv"))?;
    let result = match config.policy_class {
        PolicyClass::PerUnit => solve_per_unit(&table, epsilon)?,
        PolicyClass::Linear => solve_linear(&table, epsilon)?,
        PolicyClass::Table => solve_table_pipeline(
            &table,
            pipeline.as_ref().expect("table class has a pipeline"),
            config.scope,
            epsilon,
            &config.burst,
            config.seed,
        )?,
    };
    write_json(&out.join("policy.json"), &result)?;
    if let Policy::TablePipeline { pipeline } = &result.policy {
        for (key, t) in pipeline.tables() {
            write_text(&out.join(format!("table_{key}.txt")), &t.to_text())?;
        }
    }
    println!("posterior gain {:.6}", result.posterior_value_gain);
    println!("PACRisk {:.6} (budget {epsilon})", result.pacrisk);
    println!(
        "feasible {} certified {}",
        result.feasible, result.certified
    );
    println!("wrote {}", out.display());
    Ok(())
}
