use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use safepol::gp::{MaternKernelParams, SamplerConfig};
use safepol::sim::{
    run_sweep, DgpSpec, EstimatorConfig, OutcomeModel, Scenario, SweepCell, SweepConfig,
};
use safepol::OutcomeKind;

use crate::error::{CliError, Result};
use crate::output::{load_config, prepare_out, Job};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenarios, comma separated (I = randomized, II = no overlap).
    #[arg(long, value_delimiter = ',', value_parser = parse_scenario)]
    pub scenario: Option<Vec<Scenario>>,
    #[arg(long, value_parser = parse_outcome)]
    pub outcome: Option<OutcomeKind>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Noise standard deviations (continuous outcomes).
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    /// Effect multipliers (binary outcomes).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub epsilon_grid: Option<Vec<f64>>,
    /// Kernel length scales.
    #[arg(long, value_delimiter = ',')]
    pub l: Option<Vec<f64>>,
    /// Kernel variances.
    #[arg(long, value_delimiter = ',')]
    pub sigma0sq: Option<Vec<f64>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Posterior draws per fit.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Fresh covariates used to score learned policies.
    #[arg(long)]
    pub eval_size: Option<usize>,
    /// Also write the value and risk series per budget.
    #[arg(long)]
    pub plot_data: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    match s.trim() {
        "I" | "i" | "1" => Ok(Scenario::Overlap),
        "II" | "ii" | "2" => Ok(Scenario::NoOverlap),
        other => Err(format!("unknown scenario '{other}' (expected I or II)")),
    }
}

pub fn parse_outcome(s: &str) -> std::result::Result<OutcomeKind, String> {
    match s {
        "continuous" => Ok(OutcomeKind::Continuous),
        "binary" => Ok(OutcomeKind::Binary),
        other => Err(format!("unknown outcome '{other}' (expected continuous or binary)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub scenario: Vec<Scenario>,
    pub outcome: OutcomeKind,
    pub n: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    pub length_scale: Vec<f64>,
    pub variance: Vec<f64>,
    pub epsilon_grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub draws: usize,
    pub eval_size: usize,
    pub sampler: SamplerConfig,
    pub plot_data: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            scenario: vec![Scenario::Overlap],
            outcome: OutcomeKind::Continuous,
            n: vec![50],
            sigma: None,
            gamma: None,
            length_scale: vec![1.0],
            variance: vec![4.0],
            epsilon_grid: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0],
            replications: 200,
            seed: 0,
            draws: 2000,
            eval_size: 100_000,
            sampler: SamplerConfig::default(),
            plot_data: false,
        }
    }
}

impl SimulateConfig {
    pub fn from_args(args: &SimulateArgs) -> Result<Self> {
        let mut c: SimulateConfig = load_config(args.config.as_deref())?;
        if let Some(v) = &args.scenario {
            c.scenario = v.clone();
        }
        if let Some(v) = args.outcome {
            c.outcome = v;
        }
        if let Some(v) = &args.n {
            c.n = v.clone();
        }
        if args.sigma.is_some() {
            c.sigma = args.sigma.clone();
        }
        if args.gamma.is_some() {
            c.gamma = args.gamma.clone();
        }
        if let Some(v) = &args.epsilon_grid {
            c.epsilon_grid = v.clone();
        }
        if let Some(v) = &args.l {
            c.length_scale = v.clone();
        }
        if let Some(v) = &args.sigma0sq {
            c.variance = v.clone();
        }
        if let Some(v) = args.reps {
            c.replications = v;
        }
        if let Some(v) = args.seed {
            c.seed = v;
        }
        if let Some(v) = args.draws {
            c.draws = v;
        }
        if let Some(v) = args.eval_size {
            c.eval_size = v;
        }
        c.plot_data |= args.plot_data;
        c.resolve()?;
        Ok(c)
    }

    /// Checks flag combinations and fills the noise grid of the chosen outcome.
    pub fn resolve(&mut self) -> Result<()> {
        match self.outcome {
            OutcomeKind::Continuous => {
                if self.gamma.is_some() {
                    return Err(CliError::usage("--gamma only applies to binary outcomes"));
                }
                self.sigma.get_or_insert_with(|| vec![1.0]);
            }
            OutcomeKind::Binary => {
                if self.sigma.is_some() {
                    return Err(CliError::usage("--sigma only applies to continuous outcomes"));
                }
                self.gamma.get_or_insert_with(|| vec![1.0]);
            }
        }
        let empty = [
            ("scenario", self.scenario.is_empty()),
            ("n", self.n.is_empty()),
            ("length_scale", self.length_scale.is_empty()),
            ("variance", self.variance.is_empty()),
            ("epsilon_grid", self.epsilon_grid.is_empty()),
            ("noise", self.noise().is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(CliError::usage(format!("{name} needs at least one value")));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(CliError::data(format!("epsilon {e} outside [0, 1]")));
        }
        Ok(())
    }

    fn noise(&self) -> Vec<f64> {
        match self.outcome {
            OutcomeKind::Continuous => self.sigma.clone().unwrap_or_default(),
            OutcomeKind::Binary => self.gamma.clone().unwrap_or_default(),
        }
    }

    pub fn sweep(&self) -> Result<SweepConfig> {
        let mut cells = Vec::new();
        for &scenario in &self.scenario {
            for &n in &self.n {
                for noise in self.noise() {
                    for &l in &self.length_scale {
                        for &v in &self.variance {
                            let outcome = match self.outcome {
                                OutcomeKind::Continuous => OutcomeModel::Continuous { sigma: noise },
                                OutcomeKind::Binary => OutcomeModel::Binary { gamma: noise },
                            };
                            cells.push(SweepCell {
                                dgp: DgpSpec { scenario, outcome, n },
                                estimator: EstimatorConfig {
                                    kernel: MaternKernelParams::new(l, v)?,
                                    draws: self.draws,
                                    sampler: self.sampler,
                                },
                            });
                        }
                    }
                }
            }
        }
        Ok(SweepConfig {
            cells,
            epsilons: self.epsilon_grid.clone(),
            replications: self.replications,
            seed: self.seed,
            eval_size: self.eval_size,
        })
    }
}

pub fn command(args: SimulateArgs) -> Result<()> {
    let config = SimulateConfig::from_args(&args)?;
    let out = prepare_out(args.out)?;
    Job::Simulate(config).run(&out)
}

pub fn run(config: &SimulateConfig, out: &Path) -> Result<()> {
    let mut config = config.clone();
    config.resolve()?;
    let sweep = config.sweep()?;
    let report = run_sweep(&sweep)?;
    report.write_rows_csv(&out.join("rows.csv"))?;
    report.write_unconstrained_csv(&out.join("unconstrained.csv"))?;
    report.write_aggregates_csv(&out.join("aggregates.csv"))?;
    report.write_failures_csv(&out.join("failures.csv"))?;
    if config.plot_data {
        report.write_plot_data(&out.join("plot"))?;
    }
    let rows = report.rows.iter().filter(|r| !r.unconstrained).count();
    println!(
        "{} cells x {} replications x {} budgets: {rows} rows, {} failed fits",
        sweep.cells.len(),
        sweep.replications,
        sweep.epsilons.len(),
        report.failures.len()
    );
    println!("cell  epsilon  mean_value  mean_acrisk  p90_acrisk");
    for a in report.aggregates.iter().filter(|a| !a.unconstrained) {
        println!(
            "{:>4}  {:>7}  {:>10.4}  {:>11.4}  {:>10.4}",
            a.cell, a.epsilon, a.mean_value, a.mean_acrisk, a.p90_acrisk
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
