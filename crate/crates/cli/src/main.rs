use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use monitored_fermions::dynamics::{Protocol, StepOptions};
use monitored_fermions::fock::oracle_compare_with;
use monitored_fermions::harness::output::{
    write_cq_theory_rows, write_observables_csv, write_observables_rows, write_theory_rows,
    OBSERVABLES_FILE,
};
use monitored_fermions::harness::{
    emit_outputs, fit_corrected_power_law, fit_exponential_decay, fit_power_law, run_ensemble_with,
    run_sweep, Execution, RunConfig, SweepConfig,
};
use monitored_fermions::{theory, Error, QrMethod};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mfermions",
    version,
    about = "Monitored free fermions with frustrated two-site measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one ensemble.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        exec: ExecArgs,
        /// Also write theory overlay tables next to the outputs.
        #[arg(long)]
        theory: bool,
        /// Keep per-trajectory summaries in ensemble.json.
        #[arg(long)]
        keep_trajectories: bool,
    },
    /// Run every point of a Cartesian grid over L, gamma and theta/pi.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Print closed-form predictions as CSV.
    Theory {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the C(q) table on the momentum grid of L sites instead of
        /// the summary.
        #[arg(long)]
        cq: bool,
    },
    /// Compare the Gaussian engine against exact many-body evolution.
    OracleCheck {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        exec: ExecArgs,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Largest accepted deviation of the correlation matrix.
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Fit finite-size data from a CSV file.
    Fit {
        /// CSV with a header row, e.g. an observables.csv.
        input: PathBuf,
        #[arg(long, value_enum)]
        model: FitKind,
        /// Abscissa column.
        #[arg(long, default_value = "L")]
        x: String,
        /// Ordinate column; defaults to S_half, G_AB or the second column.
        #[arg(long)]
        y: Option<String>,
        /// Smallest abscissa used by the exponential fit.
        #[arg(long, default_value_t = 0.0)]
        l_min: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    /// S(L) = s (L^alpha - b)
    Corrected,
    /// G(L) = A exp(-L / (4 l_loc))
    Exponential,
    /// y = c x^p
    Power,
}

/// A JSON config document plus per-key overrides.
#[derive(Args)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Chain length(s); comma-separated lists are for `sweep`.
    #[arg(long = "L", value_delimiter = ',')]
    sites: Vec<usize>,
    #[arg(long = "N")]
    particles: Option<usize>,
    #[arg(long = "J")]
    hopping: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gamma: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    theta_over_pi: Vec<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    measurement_only: bool,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    t_equil_factor: Option<f64>,
    #[arg(long)]
    t_avg_window: Option<f64>,
    #[arg(long)]
    sample_stride: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    observables: Vec<String>,
    #[arg(long)]
    output_path: Option<PathBuf>,
}

#[derive(Args)]
struct ExecArgs {
    /// Run trajectories on the calling thread.
    #[arg(long, conflicts_with = "threads")]
    sequential: bool,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = QrArg::Cholesky)]
    qr: QrArg,
    /// Re-orthonormalize after every m-th measurement layer.
    #[arg(long, default_value_t = 1)]
    renormalize_every: usize,
    /// Apply measurement bonds one at a time in index order.
    #[arg(long)]
    sequential_bonds: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum QrArg {
    Cholesky,
    Householder,
}

impl ExecArgs {
    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel {
                threads: self.threads,
            }
        }
    }

    fn options(&self) -> StepOptions {
        StepOptions {
            qr: match self.qr {
                QrArg::Cholesky => QrMethod::Cholesky,
                QrArg::Householder => QrMethod::Householder,
            },
            renormalize_every: self.renormalize_every,
            protocol: if self.sequential_bonds {
                Protocol::Sequential
            } else {
                Protocol::OddEven
            },
        }
    }
}

/// Errors with their process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parameter(_)
            | Error::Dimension(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::Csv(_) => EXIT_CONFIG,
            _ => EXIT_NUMERICAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

impl ConfigArgs {
    /// The config file (or an empty document) with every given flag applied.
    fn document(&self) -> CliResult<Map<String, Value>> {
        let mut doc = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
                match serde_json::from_str(&text)
                    .map_err(|e| config_error(format!("{}: {e}", path.display())))?
                {
                    Value::Object(map) => map,
                    _ => return Err(config_error("config must be a JSON object")),
                }
            }
            None => Map::new(),
        };
        let mut set = |key: &str, v: Value| {
            doc.insert(key.to_string(), v);
        };
        let list = |xs: Vec<Value>| {
            if xs.len() == 1 {
                xs[0].clone()
            } else {
                Value::Array(xs)
            }
        };
        if !self.sites.is_empty() {
            set("L", list(self.sites.iter().map(|&x| x.into()).collect()));
        }
        if !self.gamma.is_empty() {
            set(
                "gamma",
                list(self.gamma.iter().map(|&x| x.into()).collect()),
            );
        }
        if !self.theta_over_pi.is_empty() {
            set(
                "theta_over_pi",
                list(self.theta_over_pi.iter().map(|&x| x.into()).collect()),
            );
        }
        if let Some(x) = self.particles {
            set("N", x.into());
        }
        if let Some(x) = self.hopping {
            set("J", x.into());
        }
        if let Some(x) = self.dt {
            set("dt", x.into());
        }
        if self.measurement_only {
            set("measurement_only", true.into());
        }
        if let Some(x) = self.n_traj {
            set("n_traj", x.into());
        }
        if let Some(x) = self.master_seed {
            set("master_seed", x.into());
        }
        if let Some(x) = self.t_equil_factor {
            set("t_equil_factor", x.into());
        }
        if let Some(x) = self.t_avg_window {
            set("t_avg_window", x.into());
        }
        if let Some(x) = self.sample_stride {
            set("sample_stride", x.into());
        }
        if !self.observables.is_empty() {
            set(
                "observables",
                self.observables
                    .iter()
                    .map(|s| Value::from(s.as_str()))
                    .collect(),
            );
        }
        if let Some(p) = &self.output_path {
            set("output_path", p.to_string_lossy().as_ref().into());
        }
        Ok(doc)
    }

    fn run_config(&self) -> CliResult<RunConfig> {
        let doc = self.document()?;
        if let Some(key) = ["L", "gamma", "theta_over_pi"]
            .iter()
            .find(|k| doc.get(**k).is_some_and(Value::is_array))
        {
            return Err(config_error(format!(
                "'{key}' must be a single value here; use `sweep` for grids"
            )));
        }
        Ok(RunConfig::from_json(&Value::Object(doc).to_string())?)
    }

    fn sweep_config(&self) -> CliResult<SweepConfig> {
        Ok(SweepConfig::from_json(
            &Value::Object(self.document()?).to_string(),
        )?)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::from(e).into()),
        _ => Ok(()),
    }
}

fn run(config: ConfigArgs, exec: ExecArgs, theory: bool, keep: bool) -> CliResult<()> {
    let cfg = config.run_config()?;
    let result = run_ensemble_with(&cfg, exec.options(), exec.execution(), keep)?;
    if let Some(dir) = &cfg.output_path {
        emit_outputs(&result, dir, theory)?;
    }
    print_json(&result)
}

fn point_dir(root: &Path, c: &RunConfig) -> PathBuf {
    root.join(format!(
        "L{}_gamma{}_theta{}",
        c.sites, c.gamma, c.theta_over_pi
    ))
}

fn sweep(config: ConfigArgs, exec: ExecArgs) -> CliResult<()> {
    let sweep = config.sweep_config()?;
    let results = run_sweep(&sweep, exec.options(), exec.execution())?;
    if let Some(root) = &sweep.base.output_path {
        std::fs::create_dir_all(root).map_err(Error::from)?;
        write_observables_csv(&results, &root.join(OBSERVABLES_FILE))?;
        for r in &results {
            emit_outputs(r, &point_dir(root, &r.config), false)?;
        }
    }
    let mut w = csv::Writer::from_writer(std::io::stdout());
    write_observables_rows(&results, &mut w)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn theory_cmd(config: ConfigArgs, cq: bool) -> CliResult<()> {
    let mut doc = config.document()?;
    doc.entry("L").or_insert_with(|| Value::from(64));
    let cfg = RunConfig::from_json(&Value::Object(doc).to_string())?;
    let params = cfg.model_params()?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    if cq {
        write_cq_theory_rows(&params, &mut w)?;
    } else {
        write_theory_rows(
            &theory::summary(params.hopping, params.gamma, params.theta)?,
            &mut w,
        )?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn oracle_check(config: ConfigArgs, exec: ExecArgs, steps: usize, tolerance: f64) -> CliResult<()> {
    let cfg = config.run_config()?;
    let params = cfg.model_params()?;
    let report = oracle_compare_with(&params, steps, cfg.master_seed, exec.options())?;
    print_json(&report)?;
    if !(report.max_deviation < tolerance) {
        return Err(Failure {
            code: EXIT_ACCEPTANCE,
            message: format!(
                "max deviation {:.3e} exceeds tolerance {tolerance:.1e}",
                report.max_deviation
            ),
        });
    }
    Ok(())
}

fn read_columns(path: &Path, x: &str, y: &str) -> CliResult<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
    let headers = r.headers().map_err(Error::from)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| config_error(format!("no column '{name}'")))
    };
    let (ix, iy) = (col(x)?, col(y)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(Error::from)?;
        let parse = |i: usize| -> CliResult<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| config_error(format!("not a number: '{}'", &rec[i])))
        };
        out.push((parse(ix)?, parse(iy)?));
    }
    Ok(out)
}

fn fit(input: PathBuf, model: FitKind, x: String, y: Option<String>, l_min: f64) -> CliResult<()> {
    let y = match (y, model) {
        (Some(y), _) => y,
        (None, FitKind::Corrected) => "S_half".into(),
        (None, FitKind::Exponential) => "G_AB".into(),
        (None, FitKind::Power) => {
            let mut r = csv::Reader::from_path(&input).map_err(Error::from)?;
            let headers = r.headers().map_err(Error::from)?;
            headers
                .get(1)
                .ok_or_else(|| config_error("input needs at least two columns"))?
                .to_string()
        }
    };
    let data = read_columns(&input, &x, &y)?;
    let result = match model {
        FitKind::Corrected => fit_corrected_power_law(&data)?,
        FitKind::Exponential => fit_exponential_decay(&data, l_min)?,
        FitKind::Power => fit_power_law(&data)?,
    };
    print_json(&result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            exec,
            theory,
            keep_trajectories,
        } => run(config, exec, theory, keep_trajectories),
        Command::Sweep { config, exec } => sweep(config, exec),
        Command::Theory { config, cq } => theory_cmd(config, cq),
        Command::OracleCheck {
            config,
            exec,
            steps,
            tolerance,
        } => oracle_check(config, exec, steps, tolerance),
        Command::Fit {
            input,
            model,
            x,
            y,
            l_min,
        } => fit(input, model, x, y, l_min),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
