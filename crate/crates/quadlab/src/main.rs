use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use quadlab::config::{ExperimentConfig, ExperimentId};
use quadlab::experiments::{convergence_sample, run_experiment, style_dataset, sweep_table};
use quadlab::io::{dataset_headers, dataset_matrix, load_csv, load_numeric, write_numeric};
use quadlab::report::{emit_report, Format, ReportTable};
use quadlab_core::distributions::{make_sample, sample_correlated_design, sample_skew_normal, DesignSpec, SkewNormalSpec};
use quadlab_core::functionals::{
    eval_biased_mean_quadrangle, eval_mean_l1_quadrangle, eval_quantile_quadrangle, BiasParam, ConfidenceLevel,
};
use quadlab_core::portfolio::{
    equivalence_sweep, optimize_cvar_dev, optimize_se_dev, synthetic_returns, LevelChoice, PortfolioProblem,
    SyntheticReturnsSpec,
};
use quadlab_core::regression::{
    fit_biased_mean, fit_ols, fit_quantile, fit_se, induced_alpha_tol, residual_zero_tol, residuals,
};
use quadlab_core::sparse::{brute_force_subset, fit_sparse, planted_dataset, BigM, ErrorKind, PlantedSpec, SparseProblem};
use serde_json::json;

#[derive(Parser)]
#[command(name = "quadlab", version, about = "Biased mean quadrangle regression, portfolio and sparse-fit toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear regression under one error measure.
    Fit(FitArgs),
    /// Minimize SE or CVaR deviation over scenario returns, or sweep x.
    Portfolio(PortfolioArgs),
    /// Best-subset regression with at most k regressors.
    Sparse(SparseArgs),
    /// Write a generated dataset as CSV.
    Simulate(SimulateArgs),
    /// Evaluate a quadrangle on one column of a CSV or a list of values.
    Eval(EvalArgs),
    /// Run a case study and check its verdicts.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Ols,
    Quantile,
    Se,
    Bmr,
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    target: String,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Se,
    Cvar,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Upper,
    Dual,
}

#[derive(clap::Args)]
struct PortfolioArgs {
    #[arg(long, value_enum, default_value = "se")]
    objective: Objective,
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long)]
    alpha: Option<f64>,
    /// Target mean return; defaults to the average of the asset means.
    #[arg(long)]
    mu: Option<f64>,
    /// Scenario returns, one column per asset.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    long_only: bool,
    /// `x0:x1:step`; runs the SE/CVaR equivalence sweep.
    #[arg(long)]
    sweep: Option<String>,
    /// Level taken from the SE solution in a sweep.
    #[arg(long, value_enum, default_value = "upper")]
    level: LevelArg,
    #[arg(long, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorArg {
    Mse,
    Se,
}

#[derive(clap::Args)]
struct SparseArgs {
    #[arg(long, value_enum)]
    error: ErrorArg,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = f64::INFINITY)]
    time_limit: f64,
    #[arg(long, default_value_t = 1e-9)]
    gap: f64,
    /// `auto` or a positive bound on |c_j|.
    #[arg(long, default_value = "auto")]
    big_m: String,
    /// Enumerate every support instead of branching.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    target: String,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// `y = x + s·ε` with skew-normal ε.
    Regression,
    /// One column of standardized skew-normal draws.
    SkewNormal,
    /// AR(1) Gaussian design.
    Design,
    /// AR(1) design with a planted sparse ±1 signal.
    Planted,
    /// Four-asset fat-tailed scenario returns.
    Returns,
    /// Four-factor style regression data.
    Style,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    shape: f64,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    #[arg(long, default_value_t = 30)]
    d: usize,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 3)]
    k_star: usize,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Planted data: write the true coefficients here as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Quantile,
    BiasedMean,
    MeanL1,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// α for the quantile family, x for the biased mean family.
    #[arg(long, default_value_t = 0.0)]
    param: f64,
    #[arg(long, requires = "column", conflicts_with = "values")]
    input: Option<PathBuf>,
    #[arg(long)]
    column: Option<String>,
    /// Comma-separated equally weighted atoms.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    id: Option<ExperimentId>,
    /// JSON overrides; its `id` must agree with `--id` when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `<table>.csv` and `<table>.json`; stdout otherwise.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn json_out(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    write_out(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn fit(a: FitArgs) -> Result<()> {
    let data = load_csv(&a.input, &a.target)?;
    let (name, params, f) = match a.method {
        Method::Ols => ("ols", json!({}), fit_ols(&data)),
        Method::Quantile => {
            let alpha = a.alpha.context("--alpha is required for quantile regression")?;
            ("quantile", json!({ "alpha": alpha }), fit_quantile(&data, ConfidenceLevel::open(alpha)?)?)
        }
        Method::Se => ("se", json!({ "x": 0.0 }), fit_se(&data)?),
        Method::Bmr => ("bmr", json!({ "x": a.x }), fit_biased_mean(&data, BiasParam(a.x))?),
    };
    let z = residuals(&f.model, &data);
    let (lo, hi) = induced_alpha_tol(&z, residual_zero_tol(&data));
    json_out(
        a.output.as_deref(),
        &json!({
            "method": name,
            "params": params,
            "intercept": f.model.intercept,
            "coefficients": f.model.coefficients,
            "objective": f.objective,
            "induced_alpha": [lo, hi],
            "dual_level": f.dual_level,
        }),
    )
}

fn parse_sweep(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--sweep `{s}` is not x0:x1:step"))?;
    let [x0, x1, step] = parts[..] else {
        bail!("--sweep `{s}` is not x0:x1:step");
    };
    if !(step > 0.0) || x1 < x0 {
        bail!("--sweep needs x0 <= x1 and a positive step");
    }
    let count = ((x1 - x0) / step + 1e-9).floor() as usize + 1;
    Ok(quadlab_core::portfolio::x_grid(x0, step, count))
}

fn portfolio(a: PortfolioArgs) -> Result<()> {
    let table = load_numeric(&a.input)?;
    let r = table.values;
    let mu = a.mu.unwrap_or_else(|| r.column_mean().mean());
    let problem = PortfolioProblem::new(r, mu, a.long_only)?;
    if let Some(spec) = &a.sweep {
        let choice = match a.level {
            LevelArg::Upper => LevelChoice::UpperEndpoint,
            LevelArg::Dual => LevelChoice::DualLevel,
        };
        let rows = equivalence_sweep(&problem, &parse_sweep(spec)?, choice)?;
        let mut t = sweep_table("portfolio_sweep", &rows, 1e-5);
        t.metadata.config = json!({ "input": a.input, "mu": mu, "long_only": a.long_only });
        let text = match a.format {
            Format::Csv => t.to_csv(),
            Format::Json => t.to_json() + "\n",
        };
        return write_out(a.output.as_deref(), &text);
    }
    let (param, sol) = match a.objective {
        Objective::Se => (json!({ "x": a.x }), optimize_se_dev(&problem, BiasParam(a.x))?),
        Objective::Cvar => {
            let alpha = a.alpha.context("--alpha is required for the CVaR objective")?;
            (json!({ "alpha": alpha }), optimize_cvar_dev(&problem, ConfidenceLevel::new(alpha)?)?)
        }
    };
    let value = json!({
        "objective": match a.objective { Objective::Se => "se", Objective::Cvar => "cvar" },
        "params": param,
        "mu": mu,
        "assets": table.headers,
        "weights": sol.weights,
        "deviation": sol.deviation,
        "alpha_interval": [sol.alpha_interval.0, sol.alpha_interval.1],
        "dual_level": sol.dual_level,
    });
    match a.format {
        Format::Json => json_out(a.output.as_deref(), &value),
        Format::Csv => {
            let mut t = ReportTable::new("portfolio", &["weight"]);
            for (name, w) in table.headers.iter().zip(&sol.weights) {
                t.push(name.clone(), vec![*w]);
            }
            t.push("deviation", vec![sol.deviation]);
            write_out(a.output.as_deref(), &t.to_csv())
        }
    }
}

fn sparse(a: SparseArgs) -> Result<()> {
    let data = load_csv(&a.input, &a.target)?;
    let kind = match a.error {
        ErrorArg::Mse => ErrorKind::Mse,
        ErrorArg::Se => ErrorKind::Se,
    };
    let sol = if a.oracle {
        brute_force_subset(&data, a.k, kind)?
    } else {
        let mut p = SparseProblem::new(data, a.k, kind)?;
        p.time_limit_s = a.time_limit;
        p.gap_tol = a.gap;
        p.big_m = match a.big_m.as_str() {
            "auto" => BigM::Auto,
            v => BigM::Value(v.parse().with_context(|| format!("--big-m `{v}` is neither auto nor a number"))?),
        };
        fit_sparse(&p)?
    };
    json_out(
        a.output.as_deref(),
        &json!({
            "support": sol.support,
            "intercept": sol.model.intercept,
            "coefficients": sol.model.coefficients,
            "objective": sol.objective,
            "bound": sol.bound,
            "gap": sol.gap,
            "status": sol.status,
            "big_m": sol.big_m,
            "big_m_active": sol.big_m_active,
            "nodes": sol.nodes,
            "time_s": sol.time_s,
        }),
    )
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let (headers, values): (Vec<String>, DMatrix<f64>) = match a.kind {
        Kind::Regression => {
            let d = convergence_sample(a.n, a.shape, a.noise_scale, a.seed)?;
            (dataset_headers(1), dataset_matrix(&d))
        }
        Kind::SkewNormal => {
            let v = sample_skew_normal(SkewNormalSpec { shape: a.shape, standardized: true }, a.n, a.seed)?;
            (vec!["eps".into()], DMatrix::from_vec(a.n, 1, v))
        }
        Kind::Design => {
            let x = sample_correlated_design(DesignSpec { d: a.d, rho: a.rho }, a.n, a.seed)?;
            ((1..=a.d).map(|j| format!("x{j}")).collect(), x)
        }
        Kind::Planted => {
            let spec = PlantedSpec { n: a.n, d: a.d, k_star: a.k_star, rho: a.rho, noise_sd: a.noise_scale };
            let (data, beta) = planted_dataset(spec, a.seed)?;
            if let Some(p) = &a.truth {
                std::fs::write(p, serde_json::to_string_pretty(&json!({ "spec": spec, "coefficients": beta }))?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            (dataset_headers(a.d), dataset_matrix(&data))
        }
        Kind::Returns => {
            let r = synthetic_returns(&SyntheticReturnsSpec::default(), a.n, a.seed)?;
            ((1..=r.ncols()).map(|j| format!("asset{j}")).collect(), r)
        }
        Kind::Style => {
            let d = style_dataset(a.n, a.rho, a.shape, a.noise_scale, a.seed)?;
            (dataset_headers(d.d()), dataset_matrix(&d))
        }
    };
    match &a.output {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_numeric(std::io::BufWriter::new(f), &headers, &values)?;
        }
        None => write_numeric(std::io::stdout().lock(), &headers, &values)?,
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let values = match (&a.input, &a.values) {
        (Some(path), _) => {
            let t = load_numeric(path)?;
            let col = a.column.as_deref().expect("clap requires --column with --input");
            t.values.column(t.column_index(col)?).iter().copied().collect()
        }
        (None, Some(v)) => v.clone(),
        (None, None) => bail!("give --input with --column, or --values"),
    };
    let sample = make_sample(&values, None)?;
    let q = match a.family {
        FamilyArg::Quantile => eval_quantile_quadrangle(&sample, ConfidenceLevel::open(a.param)?)?,
        FamilyArg::BiasedMean => eval_biased_mean_quadrangle(&sample, BiasParam(a.param)),
        FamilyArg::MeanL1 => eval_mean_l1_quadrangle(&sample),
    };
    json_out(None, &serde_json::to_value(q)?)
}

fn experiment(a: ExperimentArgs) -> Result<bool> {
    let mut cfg = match (&a.config, a.id) {
        (Some(path), id) => {
            let cfg = ExperimentConfig::load(path)?;
            if let Some(id) = id {
                if id != cfg.id {
                    bail!("--id {} disagrees with config id {}", id.name(), cfg.id.name());
                }
            }
            cfg
        }
        (None, Some(id)) => ExperimentConfig::defaults(id),
        (None, None) => bail!("give --id or --config"),
    };
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let tables = run_experiment(&cfg)?;
    let mut all_passed = true;
    for t in &tables {
        match &a.output {
            Some(dir) => {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                emit_report(t, &dir.join(format!("{}.csv", t.name)), Format::Csv)?;
                emit_report(t, &dir.join(format!("{}.json", t.name)), Format::Json)?;
            }
            None => {
                println!("# {}", t.name);
                print!("{}", t.to_csv());
            }
        }
        for v in &t.metadata.verdicts {
            eprintln!("{} {}: {} {}", if v.passed { "PASS" } else { "FAIL" }, t.name, v.name, v.detail);
        }
        eprintln!("{}: {:.2} s", t.name, t.metadata.runtime_s);
        all_passed &= t.passed();
    }
    Ok(all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Portfolio(a) => portfolio(a).map(|_| true),
        Command::Sparse(a) => sparse(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Experiment(a) => experiment(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
