//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 method error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use clusterkit_core::bootstrap::{default_weights, replication_warning, run_bootstrap, BootstrapPlan, Variant, Weights};
use clusterkit_core::crve::{cv1, cv2, cv3, t_test, VarianceEstimate};
use clusterkit_core::design::{ClusterBlocks, ClusteredDataset};
use clusterkit_core::diagnostics::{red_flag_report, Thresholds};
use clusterkit_core::estimator::{jackknife_estimates, ols_fit, FitResult};
use clusterkit_core::simulate::{
    run_monte_carlo, run_placebo_study, McDesign, MethodSettings, MethodSpec, OutcomeMode, PlaceboDesign, PlaceboMode,
    PlaceboStrategy, SimReport,
};
use clusterkit_core::svtest::{score_variance_bootstrap, score_variance_test, NestedClustering};
use clusterkit_core::twoway::{robust_max_se, twoway_variance};
use serde_json::{json, Map, Value};

use crate::config;
use crate::data::{build_dataset, labels_in_dataset_order, DataError, DataSpec, Table};
use crate::exec::RayonExecutor;
use crate::report::{self, fmt, fmt_opt, num, table};

const SUBCOMMANDS: &[&str] = &["fit", "vcov", "boot", "svtest", "twoway", "diagnose", "mc", "placebo"];

#[derive(Parser, Debug)]
#[command(name = "clusterkit", version, about = "Cluster-robust inference and reliability checks for linear regression")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, env = "CLUSTERKIT_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// key = value file of default flags; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV file with a header row.
    pub data: PathBuf,
    /// Regressand column.
    #[arg(long)]
    pub y: String,
    /// Regressor columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<String>,
    /// Cluster column.
    #[arg(long)]
    pub cluster: Option<String>,
    /// Second cluster column for two-way clustering.
    #[arg(long)]
    pub cluster2: Option<String>,
    /// Binary treatment column; added to the regressors if not listed.
    #[arg(long)]
    pub treatment: Option<String>,
    /// Categorical columns absorbed as fixed-effect dummies.
    #[arg(long, value_delimiter = ',')]
    pub fe: Vec<String>,
    /// Omit the intercept.
    #[arg(long)]
    pub no_constant: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// OLS coefficients with CV1 and CV3 standard errors.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Variance matrix from one estimator.
    Vcov {
        #[command(flatten)]
        data: DataArgs,
        /// cv1, cv2, cv3, hc1, hc2 or hc3.
        #[arg(long, default_value = "cv1")]
        method: String,
    },
    /// Wild or pairs cluster bootstrap test and interval.
    Boot {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        coef: Option<String>,
        /// pairs, wcu-c, wcu-s, wcr-c or wcr-s.
        #[arg(long, default_value = "wcr-c")]
        variant: String,
        #[arg(long = "B", default_value_t = 9999)]
        b: usize,
        /// rademacher or webb6; default depends on the number of clusters.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Confidence level of the interval.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Hypothesized coefficient value.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        beta0: f64,
        /// Visit all 2^G Rademacher vectors instead of sampling.
        #[arg(long)]
        enumerate: bool,
        /// Skip the confidence interval.
        #[arg(long)]
        no_ci: bool,
    },
    /// Score-variance test of fine against coarse clustering.
    Svtest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        coef: Option<String>,
        /// Fine cluster column, nested in the coarse one.
        #[arg(long)]
        fine: String,
        /// Coarse cluster column; defaults to --cluster.
        #[arg(long)]
        coarse: Option<String>,
        /// Bootstrap replications; 0 reports the asymptotic P value only.
        #[arg(long, default_value_t = 0)]
        boot: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Two-way clustered variance and the largest-of-three standard error.
    Twoway {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        coef: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        beta0: f64,
    },
    /// Cluster-heterogeneity diagnostics and red flags.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        coef: Option<String>,
    },
    /// Targeted Monte Carlo on the actual regressors and clusters.
    Mc {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        coef: Option<String>,
        /// Intra-cluster correlations, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        rho: Vec<f64>,
        #[arg(long = "R", default_value_t = 1000)]
        r: usize,
        /// Methods, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "cv1,cv3")]
        methods: Vec<String>,
        #[arg(long, value_enum, default_value_t = Outcome::Continuous)]
        outcome: Outcome,
        /// Coefficients of the simulated model: zero or fitted.
        #[arg(long, value_enum, default_value_t = Beta0::Zero)]
        beta0: Beta0,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Bootstrap replications for bootstrap methods.
        #[arg(long = "B", default_value_t = 399)]
        b: usize,
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Placebo-regressor study.
    Placebo {
        #[command(flatten)]
        data: DataArgs,
        /// add, replace or both.
        #[arg(long, default_value = "add")]
        mode: String,
        /// cluster[:G1], within or enumerate[:G1].
        #[arg(long, default_value = "cluster")]
        strategy: String,
        #[arg(long = "R", default_value_t = 1000)]
        r: usize,
        #[arg(long, value_delimiter = ',', default_value = "cv1,cv3")]
        methods: Vec<String>,
        #[arg(long = "B", default_value_t = 399)]
        b: usize,
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Outcome {
    Continuous,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Beta0 {
    Zero,
    Fitted,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Method(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Method(_) => 3,
        }
    }
}

impl From<clusterkit_core::Error> for CliError {
    fn from(e: clusterkit_core::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Method(e.to_string())
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Core(c) => c.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs the tool with process arguments, writing to stdout and stderr.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with_io<I: IntoIterator<Item = OsString>>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let args: Vec<OsString> = args.into_iter().collect();
    let args = match config::load_and_splice(args, SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
                if !text.contains("Usage:") {
                    let _ = writeln!(err, "\n{}", Cli::command().render_usage());
                }
            }
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return 1;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match execute(&cli, name, sub) {
        Ok(output) => {
            let text = match cli.format {
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&output.json).expect("JSON values serialize");
                    s.push('\n');
                    s
                }
                Format::Text => output.text,
            };
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

struct Output {
    json: Value,
    text: String,
}

/// Resolved arguments of the subcommand keyed by long flag name, thread
/// count excluded.
fn config_echo(name: &str, m: &ArgMatches) -> Value {
    let root = Cli::command();
    let cmd = root.find_subcommand(name).expect("known subcommand");
    let mut map = Map::new();
    for arg in cmd.get_arguments() {
        let id = arg.get_id().as_str();
        if id == "threads" {
            continue;
        }
        let key = arg.get_long().unwrap_or(id).to_owned();
        if let Ok(Some(vals)) = m.try_get_raw(id) {
            let vals: Vec<Value> = vals.map(|v| Value::String(v.to_string_lossy().into_owned())).collect();
            let v = if vals.len() == 1 { vals.into_iter().next().unwrap() } else { Value::Array(vals) };
            map.insert(key, v);
        }
    }
    Value::Object(map)
}

fn data_spec(a: &DataArgs, cluster_override: Option<&str>) -> CliResult<DataSpec> {
    let cluster = cluster_override
        .map(str::to_owned)
        .or_else(|| a.cluster.clone())
        .ok_or_else(|| CliError::Usage("--cluster is required".into()))?;
    Ok(DataSpec {
        y: a.y.clone(),
        x: a.x.clone(),
        cluster,
        cluster2: a.cluster2.clone(),
        treatment: a.treatment.clone(),
        fixed_effects: a.fe.clone(),
        constant: !a.no_constant,
    })
}

fn load(a: &DataArgs, cluster_override: Option<&str>) -> CliResult<(Table, ClusteredDataset)> {
    let spec = data_spec(a, cluster_override)?;
    let t = Table::read(&a.data)?;
    let d = build_dataset(&t, &spec)?;
    Ok((t, d))
}

fn coef_index(d: &ClusteredDataset, coef: Option<&str>) -> CliResult<usize> {
    match coef {
        Some(name) => d.column_index(name).ok_or_else(|| CliError::Usage(format!("--coef '{name}' is not a regressor"))),
        None => d.treatment_col().ok_or_else(|| CliError::Usage("--coef is required when no --treatment is given".into())),
    }
}

fn fit(d: &ClusteredDataset) -> CliResult<(ClusterBlocks, FitResult)> {
    let b = ClusterBlocks::build(d);
    let f = ols_fit(d, &b)?;
    Ok((b, f))
}

fn parse_weights(w: Option<&str>, g: usize) -> CliResult<Weights> {
    match w {
        None | Some("auto") => Ok(default_weights(g)),
        Some(s) => Ok(s.parse()?),
    }
}

fn parse_methods(list: &[String]) -> CliResult<Vec<MethodSpec>> {
    list.iter().map(|m| m.parse::<MethodSpec>().map_err(|e| CliError::Usage(e.to_string()))).collect()
}

fn executor(threads: usize) -> CliResult<RayonExecutor> {
    RayonExecutor::new(threads).map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn header(command: &str, d: &ClusteredDataset) -> String {
    format!("{} {} {command}\nN = {}, G = {}, k = {}\n\n", report::TOOL, report::VERSION, d.n(), d.g(), d.k())
}

fn envelope(command: &str, sub: &ArgMatches, d: &ClusteredDataset, result: Value, warnings: Vec<String>) -> Value {
    json!({
        "tool": report::TOOL,
        "version": report::VERSION,
        "command": command,
        "config": config_echo(command, sub),
        "data": { "n": d.n(), "g": d.g(), "k": d.k(), "columns": d.column_names() },
        "result": result,
        "warnings": warnings,
    })
}

fn warnings_text(w: &[String]) -> String {
    w.iter().map(|w| format!("warning: {w}\n")).collect()
}

fn execute(cli: &Cli, name: &str, sub: &ArgMatches) -> CliResult<Output> {
    match &cli.command {
        Command::Fit { data, alpha } => cmd_fit(name, sub, data, *alpha),
        Command::Vcov { data, method } => cmd_vcov(name, sub, data, method),
        Command::Boot { data, coef, variant, b, weights, seed, level, beta0, enumerate, no_ci } => {
            let (_, d) = load(data, None)?;
            let j = coef_index(&d, coef.as_deref())?;
            let variant: Variant = variant.parse()?;
            if !(0.0 < *level && *level < 1.0) {
                return Err(CliError::Usage("--level must lie in (0, 1)".into()));
            }
            let plan = if *enumerate {
                BootstrapPlan::enumerated(variant, *seed)
            } else {
                BootstrapPlan::new(variant, *b, parse_weights(weights.as_deref(), d.g())?, *seed)
            };
            plan.validate(d.g())?;
            let (bl, f) = fit(&d)?;
            let exec = executor(cli.threads)?;
            let alpha = 1.0 - level;
            let o = run_bootstrap(&plan, &d, &bl, &f, None, j, *beta0, (!no_ci).then_some(alpha), &exec)?;
            let warnings: Vec<String> =
                replication_warning(plan.effective_replications(d.g()), alpha).into_iter().collect();
            let mut result = report::bootstrap(&o);
            result["coef"] = json!(d.column_names()[j]);
            result["estimate"] = num(f.beta[j]);
            result["beta0"] = num(*beta0);
            result["weights"] = json!(if plan.enumerate { "rademacher-enumerated" } else { plan.weights.as_str() });
            result["seed"] = json!(seed);
            let mut text = header(name, &d);
            text += &table(
                &["coef", "estimate", "t_obs", "p_sym", "p_equal_tail", "ci_lower", "ci_upper", "B_used", "dropped"],
                &[vec![
                    d.column_names()[j].clone(),
                    fmt(f.beta[j]),
                    fmt(o.t_obs),
                    fmt(o.p_sym),
                    fmt(o.p_equal_tail),
                    fmt_opt(o.ci.map(|c| c.0)),
                    fmt_opt(o.ci.map(|c| c.1)),
                    o.replicates_used.to_string(),
                    o.dropped.to_string(),
                ]],
            );
            text += &format!("variant {}, seed {seed}\n", variant.as_str());
            if let Some(se) = o.boot_se {
                text += &format!("bootstrap se {}\n", fmt(se));
            }
            text += &warnings_text(&warnings);
            Ok(Output { json: envelope(name, sub, &d, result, warnings), text })
        }
        Command::Svtest { data, coef, fine, coarse, boot, seed } => {
            let (t, d) = load(data, coarse.as_deref())?;
            let j = coef_index(&d, coef.as_deref())?;
            let coarse_labels: Vec<String> = d.cluster_names().to_vec();
            let coarse_in_order: Vec<String> = d.cluster_ids().iter().map(|&g| coarse_labels[g].clone()).collect();
            let fine_labels = labels_in_dataset_order(&t, &d, fine)?;
            let nest = NestedClustering::new(&coarse_in_order, &fine_labels)?;
            let r = if *boot > 0 {
                score_variance_bootstrap(&d, &nest, j, *boot, *seed, &executor(cli.threads)?)?
            } else {
                score_variance_test(&d, &nest, j)?
            };
            let mut result = report::svtest(&r);
            result["coef"] = json!(d.column_names()[j]);
            result["n_coarse"] = json!(nest.n_coarse());
            result["n_fine"] = json!(nest.n_fine());
            let mut text = header(name, &d);
            text += &table(
                &["coef", "coarse", "fine", "theta_hat", "statistic", "p_asym", "p_boot"],
                &[vec![
                    d.column_names()[j].clone(),
                    nest.n_coarse().to_string(),
                    nest.n_fine().to_string(),
                    fmt(r.statistic.theta_hat),
                    fmt(r.statistic.sv_stat),
                    fmt(r.p_asymptotic),
                    fmt_opt(r.p_bootstrap),
                ]],
            );
            Ok(Output { json: envelope(name, sub, &d, result, Vec::new()), text })
        }
        Command::Twoway { data, coef, alpha, beta0 } => {
            if data.cluster2.is_none() {
                return Err(CliError::Usage("twoway needs --cluster2".into()));
            }
            let (_, d) = load(data, None)?;
            let j = coef_index(&d, coef.as_deref())?;
            let (_, f) = fit(&d)?;
            let r = robust_max_se(&d, &f, j, *beta0, *alpha)?;
            let tw = twoway_variance(&d, &f)?;
            let mut result = report::twoway(&r, report::matrix(&tw.matrix));
            result["coef"] = json!(d.column_names()[j]);
            result["h"] = json!(tw.h);
            result["intersections"] = json!(tw.n_intersections);
            let mut warnings = Vec::new();
            if !r.psd_flag {
                warnings.push(format!("two-way variance matrix is not positive semidefinite (min eigenvalue {:e})", r.min_eigenvalue));
            }
            let mut text = header(name, &d);
            text += &table(
                &["coef", "estimate", "se_dim1", "se_dim2", "se_twoway", "chosen", "t", "p", "dof"],
                &[vec![
                    d.column_names()[j].clone(),
                    fmt(r.test.coef),
                    fmt(r.se_dim1),
                    fmt(r.se_dim2),
                    fmt_opt(r.se_twoway),
                    r.source.as_str().into(),
                    fmt(r.test.t_stat),
                    fmt(r.test.p_value),
                    fmt(r.test.dof),
                ]],
            );
            text += &warnings_text(&warnings);
            Ok(Output { json: envelope(name, sub, &d, result, warnings), text })
        }
        Command::Diagnose { data, coef } => {
            let (_, d) = load(data, None)?;
            let j = coef_index(&d, coef.as_deref())?;
            let (_, f) = fit(&d)?;
            let r = red_flag_report(&d, &f, j, &Thresholds::default())?;
            let mut result = report::diagnostics(&r);
            result["coef"] = json!(d.column_names()[j]);
            let mut text = header(name, &d);
            let s = &r.sizes;
            text += &format!(
                "cluster sizes: min {}, median {}, max {}, largest share {}\n",
                s.min,
                fmt(s.median),
                s.max,
                fmt(s.largest_share)
            );
            if let Some((g1, g0)) = r.treated_clusters {
                text += &format!("treated clusters {g1}, control clusters {g0}\n");
            }
            if let Some(l) = &r.leverage {
                text += &format!("scaled variance {}, G*(0) {}\n", fmt(l.scaled_variance), fmt(l.g_star0));
            }
            text += &format!("residual variance cv across clusters {}\n", fmt(r.variance.cv));
            if let Some(tv) = &r.treatment_variance {
                text += &format!(
                    "treatment variance: eta1 {}, eta2 {}, p {}\n",
                    fmt(tv.eta1),
                    fmt(tv.eta2),
                    fmt_opt(tv.test.as_ref().map(|t| t.p_value))
                );
            }
            if let Some(o) = &r.omit_one {
                let worst = o.max_cluster.map_or_else(|| "NA".to_string(), |g| d.cluster_names()[g].clone());
                text += &format!("omit-one: max |delta| {} (cluster {worst}), IQR {}\n", fmt(o.max_abs_delta), fmt(o.iqr));
            }
            let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
            text += &format!("flags: {}\n", if flags.is_empty() { "none".into() } else { flags.join(", ") });
            for n in &r.notes {
                text += &format!("note: {n}\n");
            }
            Ok(Output { json: envelope(name, sub, &d, result, Vec::new()), text })
        }
        Command::Mc { data, coef, rho, r, methods, outcome, beta0, sigma, b, weights, alpha, seed } => {
            let (_, d) = load(data, None)?;
            let j = coef_index(&d, coef.as_deref())?;
            let mut design = McDesign::new(j, parse_methods(methods)?, rho.clone(), *r, *seed);
            design.sigma_total = *sigma;
            design.outcome = match outcome {
                Outcome::Continuous => OutcomeMode::Continuous,
                Outcome::Binary => OutcomeMode::Binary,
            };
            if *beta0 == Beta0::Fitted {
                design.beta0 = Some(fit(&d)?.1.beta);
            }
            design.settings = settings(*alpha, *b, weights.as_deref(), d.g())?;
            let rep = run_monte_carlo(&d, &design, &executor(cli.threads)?)?;
            sim_output(name, sub, &d, &rep)
        }
        Command::Placebo { data, mode, strategy, r, methods, b, weights, alpha, seed } => {
            let (_, d) = load(data, None)?;
            let modes = match mode.as_str() {
                "both" => vec![PlaceboMode::Add, PlaceboMode::Replace],
                m => vec![m.parse::<PlaceboMode>().map_err(|e| CliError::Usage(e.to_string()))?],
            };
            let strategy = parse_strategy(strategy, &d)?;
            let design = PlaceboDesign {
                strategy,
                modes,
                replications: *r,
                methods: parse_methods(methods)?,
                treatment: d.treatment_col(),
                settings: settings(*alpha, *b, weights.as_deref(), d.g())?,
                band: None,
                seed: *seed,
            };
            let rep = run_placebo_study(&d, &design, &executor(cli.threads)?)?;
            sim_output(name, sub, &d, &rep)
        }
    }
}

fn settings(alpha: f64, b: usize, weights: Option<&str>, g: usize) -> CliResult<MethodSettings> {
    Ok(MethodSettings { alpha, boot_reps: b, weights: Some(parse_weights(weights, g)?) })
}

fn parse_strategy(s: &str, d: &ClusteredDataset) -> CliResult<PlaceboStrategy> {
    let (kind, count) = match s.split_once(':') {
        Some((k, c)) => (k, Some(c.parse::<usize>().map_err(|_| CliError::Usage(format!("bad strategy count in '{s}'")))?)),
        None => (s, None),
    };
    let from_treatment = || {
        d.treatment_col().ok_or_else(|| CliError::Usage(format!("strategy '{kind}' without a count needs --treatment")))
    };
    let treated = |count: Option<usize>| -> CliResult<usize> {
        match count {
            Some(c) => Ok(c),
            None => match PlaceboStrategy::cluster_level_from_column(d, from_treatment()?) {
                PlaceboStrategy::ClusterLevel { treated } => Ok(treated),
                _ => unreachable!(),
            },
        }
    };
    match kind {
        "cluster" => Ok(PlaceboStrategy::ClusterLevel { treated: treated(count)? }),
        "enumerate" => Ok(PlaceboStrategy::EnumerateAll { treated: treated(count)? }),
        "within" => Ok(PlaceboStrategy::within_from_column(d, from_treatment()?)),
        _ => Err(CliError::Usage(format!("unknown placebo strategy '{s}'"))),
    }
}

fn sim_output(name: &str, sub: &ArgMatches, d: &ClusteredDataset, rep: &SimReport) -> CliResult<Output> {
    let result = report::simulation(rep);
    let mut text = header(name, d);
    let mut head: Vec<String> = vec!["method".into()];
    head.extend(rep.points.iter().map(|p| p.label.clone()));
    let rows: Vec<Vec<String>> = rep
        .points
        .first()
        .map(|p0| {
            (0..p0.cells.len())
                .map(|mi| {
                    let mut row = vec![p0.cells[mi].method.clone()];
                    for p in &rep.points {
                        let c = &p.cells[mi];
                        let mark = match c.verdict.as_str() {
                            "reliable" => "",
                            "over" => "+",
                            _ => "-",
                        };
                        row.push(format!("{:.4}{mark}", c.frequency));
                    }
                    row
                })
                .collect()
        })
        .unwrap_or_default();
    let head_ref: Vec<&str> = head.iter().map(String::as_str).collect();
    text += &table(&head_ref, &rows);
    text += &format!(
        "alpha {}, band [{}, {}], seed {}; + over, - under\n",
        rep.alpha,
        fmt(rep.band.0),
        fmt(rep.band.1),
        rep.seed
    );
    for p in &rep.points {
        text += &format!("{}: realized correlation {}", p.label, fmt(p.realized_correlation));
        if let Some(m) = p.mean_outcome {
            text += &format!(", mean outcome {}", fmt(m));
        }
        text += "\n";
    }
    text += &warnings_text(&rep.warnings);
    Ok(Output { json: envelope(name, sub, d, result, rep.warnings.clone()), text })
}

fn cmd_fit(name: &str, sub: &ArgMatches, data: &DataArgs, alpha: f64) -> CliResult<Output> {
    let (_, d) = load(data, None)?;
    let (b, f) = fit(&d)?;
    let v1 = cv1(&b, &f);
    let mut warnings = Vec::new();
    let v3 = match jackknife_estimates(&b).and_then(|jk| cv3(&jk, &f)) {
        Ok(v) => Some(v),
        Err(e) => {
            warnings.push(format!("CV3 unavailable: {e}"));
            None
        }
    };
    let test_or_null = |v: &VarianceEstimate, j: usize| t_test(v, &f, j, 0.0, alpha).ok();
    let mut coefs = Vec::new();
    let mut rows = Vec::new();
    for (j, n) in d.column_names().iter().enumerate() {
        let t1 = test_or_null(&v1, j);
        let t3 = v3.as_ref().and_then(|v| test_or_null(v, j));
        coefs.push(json!({
            "name": n,
            "estimate": num(f.beta[j]),
            "cv1": t1.as_ref().map(report::test),
            "cv3": t3.as_ref().map(report::test),
        }));
        rows.push(vec![
            n.clone(),
            fmt(f.beta[j]),
            fmt_opt(t1.as_ref().map(|t| t.se)),
            fmt_opt(t1.as_ref().map(|t| t.p_value)),
            fmt_opt(t3.as_ref().map(|t| t.se)),
            fmt_opt(t3.as_ref().map(|t| t.p_value)),
        ]);
    }
    let result = json!({ "alpha": num(alpha), "coefficients": coefs, "dof": num(v1.dof) });
    let mut text = header(name, &d);
    text += &table(&["coef", "estimate", "se_cv1", "p_cv1", "se_cv3", "p_cv3"], &rows);
    text += &format!("t reference with {} degrees of freedom\n", v1.dof);
    text += &warnings_text(&warnings);
    Ok(Output { json: envelope(name, sub, &d, result, warnings), text })
}

fn cmd_vcov(name: &str, sub: &ArgMatches, data: &DataArgs, method: &str) -> CliResult<Output> {
    let (_, d) = load(data, None)?;
    let m: MethodSpec = method.parse().map_err(|e: clusterkit_core::Error| CliError::Usage(e.to_string()))?;
    let view = match m {
        MethodSpec::Hc1 | MethodSpec::Hc2 | MethodSpec::Hc3 => {
            ClusteredDataset::from_sizes(d.y().as_slice().to_vec(), d.x().clone(), d.column_names().to_vec(), &vec![1; d.n()])?
        }
        MethodSpec::Boot(_) => return Err(CliError::Usage("vcov takes cv1, cv2, cv3, hc1, hc2 or hc3".into())),
        _ => d.clone(),
    };
    let (b, f) = fit(&view)?;
    let v = match m {
        MethodSpec::Cv1 | MethodSpec::Hc1 => cv1(&b, &f),
        MethodSpec::Cv2 | MethodSpec::Hc2 => cv2(&view, &f),
        _ => cv3(&jackknife_estimates(&b)?, &f)?,
    };
    let result = report::variance(&v, d.column_names());
    let mut text = header(name, &d);
    let mut head = vec!["".to_string()];
    head.extend(d.column_names().iter().cloned());
    let rows: Vec<Vec<String>> = (0..d.k())
        .map(|i| {
            let mut r = vec![d.column_names()[i].clone()];
            r.extend((0..d.k()).map(|c| fmt(v.matrix[(i, c)])));
            r
        })
        .collect();
    let head_ref: Vec<&str> = head.iter().map(String::as_str).collect();
    text += &format!("{} variance matrix, dof {}\n", v.kind.as_str(), v.dof);
    text += &table(&head_ref, &rows);
    text += &warnings_text(&v.warnings);
    Ok(Output { json: envelope(name, sub, &d, result, v.warnings.clone()), text })
}
