use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use safepol::gp::{GpModelSpec, Link, MaternKernelParams};
use safepol::hes::{
    default_pipeline, generate_hes_data, pd_curve, pd_importance, pd_relative_change,
    scale_importance, submodel_pd_importance, HesDataSpec, HesPipeline,
};
use safepol::opt::{solve_table_pipeline, TableScope};
use safepol::tables::BurstConfig;
use safepol::{Dataset, OutcomeKind, Policy, Unit};

use crate::error::{CliError, Result};
use crate::learn::{benefit_risk, BurstArgs, Which};
use crate::output::{load_config, prepare_out, read_json, write_json, write_text, Job};

#[derive(Debug, Subcommand)]
pub enum HesCommand {
    /// Score every row of an input file.
    Eval(EvalArgs),
    /// Partial dependence of the security score on each sink input.
    Pd(PdArgs),
    /// Scaled partial-dependence importance of sink inputs and sub-models.
    PdImportance(PdArgs),
    /// Learn new tables under a risk budget.
    Optimize(OptimizeArgs),
    /// Write synthetic sub-model scores and outcomes.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pipeline JSON (default: built-in pipeline).
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// CSV with columns x1..xN.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PdArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// Reference pipeline for relative changes.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    /// CSV with columns x1..xN, score (1-based) and y; synthetic data when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Synthetic sample size when no data file is given.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub which: Option<Which>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub l: Option<f64>,
    #[arg(long)]
    pub sigma0sq: Option<f64>,
    #[command(flatten)]
    pub burst: BurstArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HesEvalConfig {
    pub pipeline: Option<HesPipeline>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HesPdConfig {
    pub pipeline: Option<HesPipeline>,
    pub baseline: Option<HesPipeline>,
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HesOptimizeConfig {
    pub pipeline: Option<HesPipeline>,
    pub data: Option<PathBuf>,
    pub synth: HesDataSpec,
    pub scope: TableScope,
    pub epsilon: Option<f64>,
    pub draws: usize,
    pub seed: u64,
    pub length_scale: f64,
    pub variance: f64,
    pub burst: BurstConfig,
}

impl Default for HesOptimizeConfig {
    fn default() -> Self {
        let kernel = MaternKernelParams::default();
        HesOptimizeConfig {
            pipeline: None,
            data: None,
            synth: HesDataSpec::default(),
            scope: TableScope::TopTableOnly,
            epsilon: None,
            draws: 2000,
            seed: 0,
            length_scale: kernel.length_scale,
            variance: kernel.variance,
            burst: BurstConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HesSynthConfig {
    pub pipeline: Option<HesPipeline>,
    pub spec: HesDataSpec,
    pub seed: u64,
}

fn load_pipeline(path: Option<&Path>, current: Option<HesPipeline>) -> Result<Option<HesPipeline>> {
    match path {
        Some(p) => Ok(Some(read_json(p)?)),
        None => Ok(current),
    }
}

fn pipeline_or_default(p: &Option<HesPipeline>) -> HesPipeline {
    p.clone().unwrap_or_else(|| default_pipeline(5))
}

fn required_input(input: &Option<PathBuf>) -> Result<&Path> {
    input.as_deref().ok_or_else(|| CliError::usage("--input is required"))
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

type Rows = Vec<Vec<f64>>;

/// Reads columns `x1..xN` of a headed CSV, plus the named extra columns.
fn read_rows(path: &Path, n_inputs: usize, extra: &[&str]) -> Result<(Rows, Rows)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::data(format!("{}: column '{name}' not found", path.display())))
    };
    let x_cols = (1..=n_inputs)
        .map(|j| find(&format!("x{j}")))
        .collect::<Result<Vec<_>>>()?;
    let extra_cols = extra.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut extras = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("").trim();
            raw.parse()
                .map_err(|_| CliError::data(format!("row {row}: '{raw}' is not a number")))
        };
        xs.push(x_cols.iter().map(|&i| parse(i)).collect::<Result<Vec<_>>>()?);
        extras.push(extra_cols.iter().map(|&i| parse(i)).collect::<Result<Vec<_>>>()?);
    }
    if xs.is_empty() {
        return Err(CliError::data(format!("{}: no rows", path.display())));
    }
    Ok((xs, extras))
}

/// Units with 1-based `score` and binary `y` columns.
fn read_hes_data(path: &Path, pipeline: &HesPipeline) -> Result<Dataset> {
    let (xs, extra) = read_rows(path, pipeline.n_inputs(), &["score", "y"])?;
    let levels = pipeline.score_levels() as f64;
    let mut units = Vec::with_capacity(xs.len());
    for (row, (x, e)) in xs.into_iter().zip(extra).enumerate() {
        let score = e[0];
        if score.fract() != 0.0 || !(1.0..=levels).contains(&score) {
            return Err(CliError::data(format!("row {row}: score {score} outside 1..{levels}")));
        }
        units.push(Unit {
            covariates: x,
            decision: score as usize - 1,
            outcome: e[1],
        });
    }
    Ok(Dataset::new(units, pipeline.score_levels() as usize, OutcomeKind::Binary)?)
}

fn write_hes_data(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("score".into());
    header.push("y".into());
    w.write_record(&header)?;
    for u in data.units() {
        let mut rec: Vec<String> = u.covariates.iter().map(|&v| fmt(v)).collect();
        rec.push((u.decision + 1).to_string());
        rec.push(fmt(u.outcome));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn command(cmd: HesCommand) -> Result<()> {
    match cmd {
        HesCommand::Eval(a) => {
            let mut c: HesEvalConfig = load_config(a.config.as_deref())?;
            c.pipeline = Some(pipeline_or_default(&load_pipeline(a.pipeline.as_deref(), c.pipeline)?));
            c.input = a.input.or(c.input);
            required_input(&c.input)?;
            Job::HesEval(c).run(&prepare_out(a.out)?)
        }
        HesCommand::Pd(a) => {
            let (c, out) = pd_config(a)?;
            Job::HesPd(c).run(&out)
        }
        HesCommand::PdImportance(a) => {
            let (c, out) = pd_config(a)?;
            Job::HesPdImportance(c).run(&out)
        }
        HesCommand::Optimize(a) => {
            let mut c: HesOptimizeConfig = load_config(a.config.as_deref())?;
            c.pipeline = Some(pipeline_or_default(&load_pipeline(a.pipeline.as_deref(), c.pipeline)?));
            if a.data.is_some() {
                c.data = a.data;
            }
            if let Some(n) = a.n {
                if c.data.is_some() {
                    return Err(CliError::usage("--n sizes synthetic data; drop it with --data"));
                }
                c.synth.n = n;
            }
            if let Some(w) = a.which {
                c.scope = w.into();
            }
            c.epsilon = a.epsilon.or(c.epsilon);
            if let Some(v) = a.draws {
                c.draws = v;
            }
            if let Some(v) = a.seed {
                c.seed = v;
            }
            c.length_scale = a.l.unwrap_or(c.length_scale);
            c.variance = a.sigma0sq.unwrap_or(c.variance);
            a.burst.apply(&mut c.burst);
            check_epsilon(c.epsilon)?;
            Job::HesOptimize(c).run(&prepare_out(a.out)?)
        }
        HesCommand::Synth(a) => {
            let mut c: HesSynthConfig = load_config(a.config.as_deref())?;
            c.pipeline = Some(pipeline_or_default(&load_pipeline(a.pipeline.as_deref(), c.pipeline)?));
            if let Some(n) = a.n {
                c.spec.n = n;
            }
            if let Some(s) = a.seed {
                c.seed = s;
            }
            Job::HesSynth(c).run(&prepare_out(a.out)?)
        }
    }
}

fn pd_config(a: PdArgs) -> Result<(HesPdConfig, PathBuf)> {
    let mut c: HesPdConfig = load_config(a.config.as_deref())?;
    c.pipeline = Some(pipeline_or_default(&load_pipeline(a.pipeline.as_deref(), c.pipeline)?));
    c.baseline = load_pipeline(a.baseline.as_deref(), c.baseline)?;
    c.input = a.input.or(c.input);
    required_input(&c.input)?;
    Ok((c, prepare_out(a.out)?))
}

fn check_epsilon(epsilon: Option<f64>) -> Result<f64> {
    let e = epsilon.ok_or_else(|| CliError::usage("--epsilon is required"))?;
    if !(0.0..=1.0).contains(&e) {
        return Err(CliError::data(format!("epsilon {e} outside [0, 1]")));
    }
    Ok(e)
}

pub fn run_eval(c: &HesEvalConfig, out: &Path) -> Result<()> {
    let pipeline = pipeline_or_default(&c.pipeline);
    let (xs, _) = read_rows(required_input(&c.input)?, pipeline.n_inputs(), &[])?;
    let mut w = csv::Writer::from_path(out.join("scores.csv"))?;
    w.write_record(["row", "score"])?;
    for (i, x) in xs.iter().enumerate() {
        let s = pipeline.evaluate(x)?;
        println!("{s}");
        w.write_record([i.to_string(), s.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn run_pd(c: &HesPdConfig, out: &Path) -> Result<()> {
    let pipeline = pipeline_or_default(&c.pipeline);
    let (xs, _) = read_rows(required_input(&c.input)?, pipeline.n_inputs(), &[])?;
    let reference = c.baseline.as_ref();
    let rows_of = |p: &HesPipeline| -> Result<Vec<Vec<u8>>> {
        Ok(xs.iter().map(|x| p.sink_inputs(x)).collect::<safepol::Result<Vec<_>>>()?)
    };
    // sink scores observed under the reference structure when one is given
    let rows = rows_of(reference.unwrap_or(&pipeline))?;
    let names = &pipeline.sink().inputs;
    let change = match reference {
        Some(b) => Some(pd_relative_change(b, &pipeline, &rows)?),
        None => None,
    };
    let mut w = csv::Writer::from_path(out.join("pd.csv"))?;
    let mut header = vec!["axis", "input", "value", "pd"];
    if reference.is_some() {
        header.extend(["baseline_pd", "relative_change"]);
    }
    w.write_record(&header)?;
    for (axis, name) in names.iter().enumerate() {
        let curve = pd_curve(&pipeline, &rows, axis)?;
        let base = match reference {
            Some(b) => Some(pd_curve(b, &rows, axis)?),
            None => None,
        };
        for (v, pd) in curve.iter().enumerate() {
            let mut rec = vec![(axis + 1).to_string(), name.clone(), (v + 1).to_string(), fmt(*pd)];
            if let (Some(b), Some(ch)) = (&base, &change) {
                rec.push(fmt(b[v]));
                rec.push(fmt(ch[axis][v]));
            }
            println!("{}", rec.join(","));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rows `(group, input, raw, scaled)` for the sink axes and every sub-model.
fn importance_rows(pipeline: &HesPipeline, raw: &[Vec<f64>]) -> Result<Vec<[String; 5]>> {
    let rows = raw
        .iter()
        .map(|x| pipeline.sink_inputs(x))
        .collect::<safepol::Result<Vec<_>>>()?;
    let names = &pipeline.sink().inputs;
    let sink_raw = (0..names.len())
        .map(|a| pd_importance(pipeline, &rows, a))
        .collect::<safepol::Result<Vec<_>>>()?;
    let sub_raw = (0..pipeline.n_inputs())
        .map(|j| submodel_pd_importance(pipeline, raw, j))
        .collect::<safepol::Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (group, labels, values) in [
        ("sink", names.clone(), sink_raw),
        ("submodel", (1..=pipeline.n_inputs()).map(|j| format!("x{j}")).collect(), sub_raw),
    ] {
        let scaled = scale_importance(&values);
        for ((label, r), s) in labels.iter().zip(&values).zip(&scaled.values) {
            out.push([
                group.to_string(),
                label.clone(),
                fmt(*r),
                fmt(*s),
                scaled.degenerate.to_string(),
            ]);
        }
    }
    Ok(out)
}

const IMPORTANCE_HEADER: [&str; 5] = ["group", "input", "importance", "scaled", "degenerate"];

pub fn run_pd_importance(c: &HesPdConfig, out: &Path) -> Result<()> {
    let pipeline = pipeline_or_default(&c.pipeline);
    let (xs, _) = read_rows(required_input(&c.input)?, pipeline.n_inputs(), &[])?;
    let mut w = csv::Writer::from_path(out.join("pd_importance.csv"))?;
    let mut header = vec!["policy"];
    header.extend(IMPORTANCE_HEADER);
    w.write_record(&header)?;
    let mut jobs = vec![("pipeline", &pipeline)];
    if let Some(b) = &c.baseline {
        jobs.push(("baseline", b));
    }
    for (label, p) in jobs {
        for rec in importance_rows(p, &xs)? {
            println!("{label},{}", rec.join(","));
            let mut full = vec![label.to_string()];
            full.extend(rec);
            w.write_record(&full)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn run_optimize(c: &HesOptimizeConfig, out: &Path) -> Result<()> {
    let epsilon = check_epsilon(c.epsilon)?;
    let baseline = pipeline_or_default(&c.pipeline);
    let data = match &c.data {
        Some(path) => read_hes_data(path, &baseline)?,
        None => generate_hes_data(&baseline, &c.synth, c.seed)?.0,
    };
    let levels = baseline.score_levels() as usize;
    let kernel = MaternKernelParams::new(c.length_scale, c.variance)?;
    let model = GpModelSpec::uniform(levels, kernel, Link::Logit);
    let policy = Policy::TablePipeline {
        pipeline: baseline.clone(),
    };
    let table = benefit_risk(&data, &model, &policy, c.draws, c.seed)?;
    table.write_csv(&out.join("benefit_risk.csv"))?;
    let result = solve_table_pipeline(&table, &baseline, c.scope, epsilon, &c.burst, c.seed)?;
    let learned = match &result.policy {
        Policy::TablePipeline { pipeline } => pipeline.clone(),
        _ => unreachable!("table solver returns a pipeline"),
    };
    write_json(&out.join("result.json"), &result)?;
    write_json(&out.join("learned_pipeline.json"), &learned)?;
    for (key, t) in learned.tables() {
        write_text(&out.join(format!("table_{key}.txt")), &t.to_text())?;
        let changed = baseline.table(key).map(|b| b.changed_cells(t));
        match changed {
            Some(n) => println!("table {key}: {n} cells changed"),
            None => println!("table {key}: new copy of the sink table"),
        }
    }

    let raw = data.covariates();
    let rows = raw
        .iter()
        .map(|x| baseline.sink_inputs(x))
        .collect::<safepol::Result<Vec<_>>>()?;
    let change = pd_relative_change(&baseline, &learned, &rows)?;
    let mut w = csv::Writer::from_path(out.join("pd_relative_change.csv"))?;
    w.write_record(["axis", "input", "value", "relative_change"])?;
    for (axis, name) in baseline.sink().inputs.iter().enumerate() {
        for (v, ch) in change[axis].iter().enumerate() {
            w.write_record([(axis + 1).to_string(), name.clone(), (v + 1).to_string(), fmt(*ch)])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;

    let mut w = csv::Writer::from_path(out.join("pd_importance.csv"))?;
    let mut header = vec!["policy"];
    header.extend(IMPORTANCE_HEADER);
    w.write_record(&header)?;
    for (label, p) in [("baseline", &baseline), ("learned", &learned)] {
        for rec in importance_rows(p, &raw)? {
            let mut full = vec![label.to_string()];
            full.extend(rec);
            w.write_record(&full)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;

    println!("posterior gain {:.6}", result.posterior_value_gain);
    println!("PACRisk {:.6} (budget {epsilon})", result.pacrisk);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn run_synth(c: &HesSynthConfig, out: &Path) -> Result<()> {
    let pipeline = pipeline_or_default(&c.pipeline);
    let (data, probs) = generate_hes_data(&pipeline, &c.spec, c.seed)?;
    write_hes_data(&out.join("data.csv"), &data)?;
    write_json(&out.join("pipeline.json"), &pipeline)?;
    let mut w = csv::Writer::from_path(out.join("truth.csv"))?;
    let mut header = vec!["row".to_string()];
    header.extend((1..=probs[0].len()).map(|k| format!("p_score{k}")));
    w.write_record(&header)?;
    for (i, p) in probs.iter().enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(p.iter().map(|&v| fmt(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    println!("wrote {} units to {}", data.len(), out.display());
    Ok(())
}
