//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use irm_core::{
    default_lambdas, default_tolerance, erm_solve, invariant_predictors_full, lambda_path,
    load_environments, save_environments, solve_scalar_invariant, total_loss, Environment,
    EnvironmentFamily, Loss, OutcomeSpace, Predictor, Restriction, SweepGrid,
};

use crate::experiments::{self, Overrides};
use crate::expr::LinearExpr;
use crate::table::{Cell, Table};

/// Exit status when every reference check passes.
pub const EXIT_PASS: i32 = 0;
/// Exit status when some reference check fails.
pub const EXIT_MISMATCH: i32 = 1;
/// Exit status for usage and I/O errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "irm",
    version,
    about = "Population-level invariant risk minimization on finite environments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    TwoBit,
    Section4,
    Piecewise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct EnvArgs {
    #[arg(long, value_enum, conflicts_with = "env_file")]
    pub family: Option<FamilyArg>,
    /// Fixed flip probability of x1 for the two-bit family.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thetas: Vec<f64>,
    /// JSON environment file.
    #[arg(long)]
    pub env_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment (or `all`) and check it against its reference values.
    Experiment {
        id: String,
        /// Directory for CSV/JSON tables and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample count for curve tables.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// List experiment ids with their anchors and reference counts.
    Manifest {
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build environments, print their mass tables, optionally export them.
    Envs {
        #[command(flatten)]
        envs: EnvArgs,
        /// Write the environments to this JSON file.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// All scalar-invariant predictors.
    SolveScalar {
        #[command(flatten)]
        envs: EnvArgs,
        #[arg(long, default_value = "square")]
        loss: Loss,
        #[arg(long, default_value = "unrestricted")]
        restriction: Restriction,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// All invariant predictors over every partition of the inputs.
    EnumerateInvariant {
        #[command(flatten)]
        envs: EnvArgs,
        #[arg(long, default_value = "square")]
        loss: Loss,
        /// Invariance tolerance; 1e-9 for family members, 1e-6 for file input.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Global minimizer of the penalized objective across lambda.
    Irmv1Path {
        #[command(flatten)]
        envs: EnvArgs,
        #[arg(long, default_value = "square")]
        loss: Loss,
        #[arg(long, default_value = "odd")]
        restriction: Restriction,
        /// Ascending lambdas; {0} and 2^0..2^20 by default.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Population loss of predictors across a family's parameter.
    Sweep {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        alpha: Option<f64>,
        /// Parameter grid as lo:hi:step.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "grid")]
        theta_grid: Option<String>,
        /// Number of evenly spaced points inside the parameter domain.
        #[arg(long)]
        grid: Option<usize>,
        /// Linear predictor such as "0.3*x2"; repeatable.
        #[arg(long, required = true, allow_hyphen_values = true)]
        predictor: Vec<String>,
        #[arg(long, default_value = "square")]
        loss: Loss,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Pointwise ERM predictor.
    Erm {
        #[command(flatten)]
        envs: EnvArgs,
        #[arg(long, default_value = "square")]
        loss: Loss,
        #[command(flatten)]
        output: OutputArgs,
    },
}

fn family(kind: FamilyArg, alpha: Option<f64>) -> Result<EnvironmentFamily> {
    Ok(match kind {
        FamilyArg::TwoBit => {
            let a = alpha.ok_or_else(|| anyhow!("--family two-bit needs --alpha"))?;
            EnvironmentFamily::two_bit(a)?
        }
        FamilyArg::Section4 => EnvironmentFamily::Section4,
        FamilyArg::Piecewise => EnvironmentFamily::PiecewiseLinearPi,
    })
}

impl EnvArgs {
    pub fn resolve(&self) -> Result<Vec<Environment>> {
        if let Some(path) = &self.env_file {
            return load_environments(path).with_context(|| format!("loading {}", path.display()));
        }
        let kind = self
            .family
            .ok_or_else(|| anyhow!("give --family or --env-file"))?;
        let fam = family(kind, self.alpha)?;
        let params = match kind {
            FamilyArg::TwoBit => &self.betas,
            FamilyArg::Section4 | FamilyArg::Piecewise => &self.thetas,
        };
        if params.is_empty() {
            bail!(
                "--family {} needs {}",
                kind.to_possible_value()
                    .map(|v| v.get_name().to_string())
                    .unwrap_or_default(),
                if kind == FamilyArg::TwoBit {
                    "--betas"
                } else {
                    "--thetas"
                }
            );
        }
        Ok(fam.members(params)?)
    }
}

fn emit(table: &Table, output: &OutputArgs) -> Result<()> {
    let text = match output.format {
        Format::Csv => table.to_csv_string()?,
        Format::Json => table.to_json_string()?,
    };
    match &output.out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn point_columns(space: &OutcomeSpace) -> Vec<String> {
    (0..space.len_x())
        .map(|i| format!("f{}", space.format_point(i)))
        .collect()
}

pub fn envs_table(envs: &[Environment]) -> Table {
    let mut t = Table::new("environments", &["env", "label", "x", "y", "mass"]);
    for (k, e) in envs.iter().enumerate() {
        let space = e.space();
        for x in 0..space.len_x() {
            for (j, &y) in space.y_points().iter().enumerate() {
                t.push(vec![
                    k.into(),
                    e.label().into(),
                    space.format_point(x).into(),
                    y.into(),
                    e.mass(x, j).into(),
                ]);
            }
        }
    }
    t
}

pub fn solve_scalar_table(
    envs: &[Environment],
    loss: Loss,
    restriction: Restriction,
    seed: u64,
) -> Result<Table> {
    let set = solve_scalar_invariant(envs, loss, restriction, seed)?;
    let space = envs[0].space().clone();
    let dim = set.solutions.first().map_or(0, |s| s.coords.len());
    let mut cols = vec!["solution".to_string()];
    cols.extend(point_columns(&space));
    cols.extend((1..=dim).map(|i| format!("coord{i}")));
    cols.extend(["max_residual", "total_loss", "jacobian_rank"].map(String::from));
    let mut t = Table::new("scalar_solutions", &cols);
    for (k, s) in set.solutions.iter().enumerate() {
        let mut row: Vec<Cell> = vec![k.into()];
        row.extend(s.predictor.values().iter().map(|&v| Cell::from(v)));
        row.extend(s.coords.iter().map(|&v| Cell::from(v)));
        row.push(s.residual.max_abs.into());
        row.push(total_loss(&s.predictor, envs, loss)?.into());
        row.push(s.jacobian_rank.into());
        t.push(row);
    }
    if set.may_be_continuum() {
        eprintln!("warning: the solution set may contain a continuum; rows are sampled roots");
    }
    Ok(t)
}

pub fn enumerate_table(envs: &[Environment], loss: Loss, tol: Option<f64>) -> Result<Table> {
    let tol = tol.unwrap_or_else(|| default_tolerance(envs));
    let set = invariant_predictors_full(envs, loss, tol)?;
    let space = envs[0].space().clone();
    let mut cols = vec!["predictor".to_string()];
    cols.extend(point_columns(&space));
    cols.extend(["total_loss", "witnesses", "example_partition"].map(String::from));
    let mut t = Table::new("invariant_predictors", &cols);
    for (k, m) in set.members.iter().enumerate() {
        let mut row: Vec<Cell> = vec![k.into()];
        row.extend(m.predictor.values().iter().map(|&v| Cell::from(v)));
        row.push(total_loss(&m.predictor, envs, loss)?.into());
        row.push(m.witness_count.into());
        row.push(m.witnesses[0].partition.describe().into());
        t.push(row);
    }
    eprintln!(
        "checked {} partitions, {} skipped as separable",
        set.partitions_checked, set.skipped_total
    );
    Ok(t)
}

pub fn path_table(
    envs: &[Environment],
    loss: Loss,
    restriction: Restriction,
    lambdas: &[f64],
    seed: u64,
) -> Result<Table> {
    let path = lambda_path(envs, lambdas, loss, restriction, seed)?;
    let space = envs[0].space().clone();
    let mut cols = vec!["lambda".to_string(), "log2_lambda".into()];
    cols.extend(point_columns(&space));
    cols.push("objective".into());
    cols.extend((1..=envs.len()).map(|i| format!("grad_e{i}")));
    cols.push("stationary_points".into());
    let mut t = Table::new("irmv1_path", &cols);
    for p in &path {
        let mut row: Vec<Cell> = vec![p.lambda.into(), p.log2_lambda.into()];
        row.extend(p.minimizer.values().iter().map(|&v| Cell::from(v)));
        row.push(p.objective.into());
        row.extend(p.residuals.iter().map(|&v| Cell::from(v)));
        row.push(p.stationary_points.into());
        t.push(row);
    }
    Ok(t)
}

/// `lo:hi:step`, inclusive of `hi` up to rounding.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("bad grid value `{p}` in `{text}`"))
        })
        .collect::<Result<_>>()?;
    let [lo, hi, step] = parts[..] else {
        bail!("grid must be lo:hi:step, got `{text}`");
    };
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        bail!("grid `{text}` needs lo <= hi and step > 0");
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 10_000_000 {
        bail!("grid `{text}` has too many points");
    }
    Ok((0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

pub fn sweep_table(
    fam: &EnvironmentFamily,
    params: &[f64],
    exprs: &[String],
    loss: Loss,
) -> Result<Table> {
    let space = fam.space();
    let preds: Vec<Predictor> = exprs
        .iter()
        .map(|s| LinearExpr::parse(s)?.predictor(&space))
        .collect::<Result<_>>()?;
    let sweep = irm_core::sweep_losses(fam, params, &preds, loss)?;
    let mut cols = vec!["param".to_string()];
    cols.extend(exprs.iter().cloned());
    let mut t = Table::new("sweep", &cols);
    for (p, ls) in sweep.params.iter().zip(&sweep.losses) {
        let mut row: Vec<Cell> = vec![(*p).into()];
        row.extend(ls.iter().map(|&l| Cell::from(l)));
        t.push(row);
    }
    Ok(t)
}

pub fn erm_table(envs: &[Environment], loss: Loss) -> Result<Table> {
    let f = erm_solve(envs, loss)?;
    let mut t = Table::new("erm", &["x", "value"]);
    for (i, &v) in f.values().iter().enumerate() {
        t.push(vec![f.space().format_point(i).into(), v.into()]);
    }
    Ok(t)
}

fn run_experiments(id: &str, out: Option<&Path>, overrides: &Overrides) -> Result<i32> {
    let ids: Vec<&str> = if id == "all" {
        experiments::ids().collect()
    } else {
        vec![id]
    };
    let mut all_pass = true;
    let start = Instant::now();
    for id in &ids {
        let dir = out.map(|o| {
            if ids.len() > 1 {
                o.join(id)
            } else {
                o.to_path_buf()
            }
        });
        let report = experiments::run_experiment(id, overrides, dir.as_deref())?;
        let failed: Vec<_> = report.failures().collect();
        println!(
            "{}: {} ({} checks, {} failed)",
            report.id,
            if report.pass { "pass" } else { "FAIL" },
            report.checks.len(),
            failed.len()
        );
        for c in failed {
            println!(
                "  failed: {} (actual {}, {:?})",
                c.name, c.actual, c.relation
            );
        }
        for n in &report.notes {
            println!("  note: {n}");
        }
        eprintln!("{}: {:.2?}", report.id, report.wall_clock);
        all_pass &= report.pass;
    }
    if ids.len() > 1 {
        eprintln!("total: {:.2?}", start.elapsed());
    }
    Ok(if all_pass { EXIT_PASS } else { EXIT_MISMATCH })
}

/// Runs a parsed command and returns the process exit status.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Experiment {
            id,
            out,
            seed,
            grid,
        } => run_experiments(&id, out.as_deref(), &Overrides { seed, grid }),
        Command::Manifest { output } => {
            emit(&experiments::manifest_table(), &output)?;
            Ok(EXIT_PASS)
        }
        Command::Envs {
            envs,
            export,
            output,
        } => {
            let envs = envs.resolve()?;
            if let Some(path) = export {
                save_environments(&path, &envs)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            emit(&envs_table(&envs), &output)?;
            Ok(EXIT_PASS)
        }
        Command::SolveScalar {
            envs,
            loss,
            restriction,
            seed,
            output,
        } => {
            let envs = envs.resolve()?;
            emit(
                &solve_scalar_table(&envs, loss, restriction, seed)?,
                &output,
            )?;
            Ok(EXIT_PASS)
        }
        Command::EnumerateInvariant {
            envs,
            loss,
            tol,
            output,
        } => {
            let envs = envs.resolve()?;
            emit(&enumerate_table(&envs, loss, tol)?, &output)?;
            Ok(EXIT_PASS)
        }
        Command::Irmv1Path {
            envs,
            loss,
            restriction,
            lambdas,
            seed,
            output,
        } => {
            let envs = envs.resolve()?;
            let lambdas = if lambdas.is_empty() {
                default_lambdas()
            } else {
                lambdas
            };
            emit(
                &path_table(&envs, loss, restriction, &lambdas, seed)?,
                &output,
            )?;
            Ok(EXIT_PASS)
        }
        Command::Sweep {
            family: kind,
            alpha,
            theta_grid,
            grid,
            predictor,
            loss,
            output,
        } => {
            let fam = family(kind, alpha)?;
            let params = match theta_grid {
                Some(text) => parse_grid(&text)?,
                None => SweepGrid {
                    points: grid.unwrap_or(201),
                    ..SweepGrid::default()
                }
                .params(fam.param_domain().expect("parametric family"))?,
            };
            emit(&sweep_table(&fam, &params, &predictor, loss)?, &output)?;
            Ok(EXIT_PASS)
        }
        Command::Erm { envs, loss, output } => {
            let envs = envs.resolve()?;
            emit(&erm_table(&envs, loss)?, &output)?;
            Ok(EXIT_PASS)
        }
    }
}
