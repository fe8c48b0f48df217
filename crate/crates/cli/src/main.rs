//! `hvlab`: run the constructions, sweep their parameters and certify
//! exported or external empirical models.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hvlab_core::hvlp::{check_model, Certificate, HvlpError, ModelClass, DEFAULT_STRATEGY_CAP};
use hvlab_core::polytope::{cycle_facets, evaluate_facets, CorrelationVector};
use hvlab_core::report::{
    kcbs_report, ppath_report, reports_to_csv, werner_report, ClassChoice, ConstructionReport,
    ReportOptions, Status,
};
use hvlab_core::scenario::EmpiricalModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const CAP_ENV: &str = "HVLAB_STRATEGY_CAP";

#[derive(Parser, Debug)]
#[command(name = "hvlab", version, about = "Hidden-variable model certification for composite contextuality scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Polarization-path Hardy construction.
    Ppath {
        /// Amplitude h₀ in [0, 1].
        #[arg(long)]
        h0: Option<f64>,
        /// Relative phase φ.
        #[arg(long)]
        phi: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Qubit-qutrit KCBS construction c₀|00⟩ + c₁|11⟩.
    Kcbs {
        #[arg(long)]
        c0: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Flagged qutrit Werner family; sweeps run over w.
    Werner {
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        w: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Decide hidden-variable classes for a model JSON file.
    Certify {
        /// Empirical model JSON.
        model: PathBuf,
        #[arg(long, value_enum)]
        class: Option<ClassArg>,
        /// No-disturbance tolerance.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Dump the odd n-cycle facet family, optionally evaluated at a correlator vector.
    Facets {
        #[arg(long, default_value_t = 5)]
        n: usize,
        /// Comma-separated correlators x₀,…,x_{n−1}.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// start:stop:steps, steps points inclusive of both ends.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, value_enum)]
    class: Option<ClassArg>,
    /// Tolerance override; must be positive.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// JSON file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the empirical model of a single point to this path.
    #[arg(long)]
    export_model: Option<PathBuf>,
    /// Skip the optimizer-backed KCBS quantities.
    #[arg(long)]
    no_optimizers: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ClassArg {
    NchvLocal,
    Glhv,
    Gnchv,
    All,
}

impl ClassArg {
    fn choices(self) -> Vec<ClassChoice> {
        match self {
            ClassArg::NchvLocal => vec![ClassChoice::NchvLocal],
            ClassArg::Glhv => vec![ClassChoice::Glhv],
            ClassArg::Gnchv => vec![ClassChoice::Gnchv],
            ClassArg::All => ClassChoice::all(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

/// Settings read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    h0: Option<f64>,
    phi: Option<f64>,
    c0: Option<f64>,
    eps: Option<f64>,
    w: Option<f64>,
    sweep: Option<String>,
    class: Option<ClassArg>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    strategy_cap: Option<usize>,
    export_model: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Ingest(String),
    Inconclusive(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Ingest(_) => 2,
            CliError::Inconclusive(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Ingest(m) | CliError::Inconclusive(m) => m,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sweep {
    start: f64,
    stop: f64,
    steps: usize,
}

impl Sweep {
    fn parse(text: &str) -> Result<Self> {
        let bad = || CliError::Usage(format!("--sweep expects start:stop:steps, got {text:?}"));
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, n] = parts[..] else {
            return Err(bad());
        };
        let start: f64 = a.trim().parse().map_err(|_| bad())?;
        let stop: f64 = b.trim().parse().map_err(|_| bad())?;
        let steps: usize = n.trim().parse().map_err(|_| bad())?;
        if steps < 1 {
            return Err(CliError::Usage("sweep steps must be at least 1".into()));
        }
        Ok(Self { start, stop, steps })
    }

    fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / (self.steps - 1) as f64
                }
            })
            .collect()
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn strategy_cap(config: &RunConfig) -> Result<usize> {
    match std::env::var(CAP_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{CAP_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(config.strategy_cap.unwrap_or(DEFAULT_STRATEGY_CAP)),
    }
}

fn positive_tol(tol: Option<f64>, default: f64) -> Result<f64> {
    let tol = tol.unwrap_or(default);
    if tol > 0.0 && tol.is_finite() {
        Ok(tol)
    } else {
        Err(CliError::Usage(format!("tolerance must be positive, got {tol}")))
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Ingest(format!("writing {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{}", text.trim_end()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(CliError::Ingest(format!("writing stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

#[derive(Clone, Copy)]
enum Construction {
    Ppath { h0: f64, phi: f64 },
    Kcbs { c0: f64 },
    Werner { eps: f64, w: f64 },
}

impl Construction {
    /// The same construction with its swept parameter set to `t`.
    fn at(self, t: f64) -> Self {
        match self {
            Construction::Ppath { phi, .. } => Construction::Ppath { h0: t, phi },
            Construction::Kcbs { .. } => Construction::Kcbs { c0: t },
            Construction::Werner { eps, .. } => Construction::Werner { eps, w: t },
        }
    }

    fn run(self, opts: &ReportOptions) -> Result<(ConstructionReport, EmpiricalModel)> {
        match self {
            Construction::Ppath { h0, phi } => ppath_report(h0, phi, opts),
            Construction::Kcbs { c0 } => kcbs_report(c0, opts),
            Construction::Werner { eps, w } => werner_report(eps, w, opts),
        }
        .map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn run_construction(base: Construction, run: RunArgs, config: RunConfig) -> Result<()> {
    let sweep = run
        .sweep
        .or(config.sweep.clone())
        .map(|s| Sweep::parse(&s))
        .transpose()?;
    let class = run.class.or(config.class).unwrap_or(ClassArg::All);
    positive_tol(run.tol.or(config.tol), 1e-9)?;
    let format = run.format.or(config.format).unwrap_or(Format::Json);
    let out = run.out.or(config.out.clone());
    let export = run.export_model.or(config.export_model.clone());
    let opts = ReportOptions {
        classes: class.choices(),
        cap: strategy_cap(&config)?,
        optimizers: !run.no_optimizers,
        sweep: sweep.is_some(),
    };

    let points: Vec<Construction> = match sweep {
        Some(s) => s.points().into_iter().map(|t| base.at(t)).collect(),
        None => vec![base],
    };
    if export.is_some() && points.len() != 1 {
        return Err(CliError::Usage("--export-model needs a single point, not a sweep".into()));
    }
    let results: Vec<Result<(ConstructionReport, EmpiricalModel)>> =
        points.par_iter().map(|c| c.run(&opts)).collect();
    let mut reports = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for r in results {
        let (report, model) = r?;
        reports.push(report);
        models.push(model);
    }

    if let Some(path) = export {
        std::fs::write(&path, models[0].to_json_string())
            .map_err(|e| CliError::Ingest(format!("writing {}: {e}", path.display())))?;
    }
    let text = match (format, sweep.is_some()) {
        (Format::Csv, _) => reports_to_csv(&reports),
        (Format::Json, true) => to_json(&reports),
        (Format::Json, false) => to_json(&reports[0]),
    };
    emit(&text, out.as_deref())?;

    let statuses = reports.iter().flat_map(|r| r.verdicts.iter());
    let mut worst = None;
    for v in statuses {
        match v.status {
            Status::Inconclusive => {
                worst = Some(CliError::Inconclusive(format!(
                    "{} solver inconclusive: {}",
                    v.class,
                    v.message.clone().unwrap_or_default()
                )));
                break;
            }
            Status::Error if worst.is_none() => {
                worst = Some(CliError::Ingest(format!(
                    "{}: {}",
                    v.class,
                    v.message.clone().unwrap_or_default()
                )));
            }
            _ => {}
        }
    }
    worst.map_or(Ok(()), Err)
}

#[derive(Serialize)]
struct CertifyOutput {
    model: String,
    max_disturbance: f64,
    certificates: Vec<Certificate>,
}

fn classes_for(model: &EmpiricalModel, class: ClassArg) -> Vec<ModelClass> {
    let mut out = Vec::new();
    for choice in class.choices() {
        match choice {
            ClassChoice::NchvLocal => {
                out.extend((0..model.scenario().parties.len()).map(ModelClass::NchvLocal))
            }
            ClassChoice::Glhv => out.push(ModelClass::Glhv),
            ClassChoice::Gnchv => out.push(ModelClass::Gnchv),
        }
    }
    out
}

fn certify(
    path: &Path,
    class: Option<ClassArg>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    config: RunConfig,
) -> Result<()> {
    let tol = positive_tol(tol.or(config.tol), 1e-9)?;
    let cap = strategy_cap(&config)?;
    let class = class.or(config.class).unwrap_or(ClassArg::All);
    let out = out.or(config.out.clone());
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Ingest(format!("reading {}: {e}", path.display())))?;
    let model = EmpiricalModel::from_json_str(&text).map_err(|e| CliError::Ingest(e.to_string()))?;
    let disturbance = model.check_no_disturbance().max_discrepancy;
    if disturbance > tol {
        return Err(CliError::Ingest(format!(
            "model disturbs: marginal discrepancy {disturbance:e} exceeds {tol:e}"
        )));
    }
    let mut certificates = Vec::new();
    for c in classes_for(&model, class) {
        let (problem, cert) = check_model(&model, c, true, cap).map_err(|e| match e {
            HvlpError::Inconclusive(m) => CliError::Inconclusive(format!("{c}: {m}")),
            e => CliError::Ingest(format!("{c}: {e}")),
        })?;
        cert.verify(&problem)
            .map_err(|e| CliError::Inconclusive(format!("{c}: certificate fails verification: {e}")))?;
        certificates.push(cert);
    }
    emit(
        &to_json(&CertifyOutput {
            model: path.display().to_string(),
            max_disturbance: disturbance,
            certificates,
        }),
        out.as_deref(),
    )
}

#[derive(Serialize)]
struct FacetRow {
    gammas: Vec<i8>,
    bound: f64,
    symmetric: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    violated: Option<bool>,
}

fn facets(n: usize, x: Option<Vec<f64>>, format: Option<Format>, out: Option<PathBuf>) -> Result<()> {
    let family = cycle_facets(n).map_err(|e| CliError::Usage(e.to_string()))?;
    let scan = x
        .map(|x| {
            CorrelationVector::new(x)
                .and_then(|x| evaluate_facets(&x, &family))
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .transpose()?;
    let rows: Vec<FacetRow> = family
        .iter()
        .enumerate()
        .map(|(i, f)| FacetRow {
            gammas: f.gammas.clone(),
            bound: f.bound,
            symmetric: f.is_symmetric(),
            value: scan.as_ref().map(|s| s.entries[i].value),
            violated: scan.as_ref().map(|s| s.entries[i].violated),
        })
        .collect();
    let text = match format.unwrap_or(Format::Json) {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut lines = vec!["gammas,bound,symmetric,value,violated".to_string()];
            for r in &rows {
                let gammas: Vec<String> = r.gammas.iter().map(|g| g.to_string()).collect();
                lines.push(format!(
                    "{},{},{},{},{}",
                    gammas.join(" "),
                    hvlab_core::report::format_sig9(r.bound),
                    r.symmetric,
                    r.value.map(hvlab_core::report::format_sig9).unwrap_or_default(),
                    r.violated.map(|v| v.to_string()).unwrap_or_default()
                ));
            }
            lines.join("\n") + "\n"
        }
    };
    emit(&text, out.as_deref())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ppath { h0, phi, run } => {
            let config = load_config(run.config.as_deref())?;
            let base = Construction::Ppath {
                h0: h0.or(config.h0).unwrap_or(std::f64::consts::FRAC_1_SQRT_2),
                phi: phi.or(config.phi).unwrap_or(0.0),
            };
            run_construction(base, run, config)
        }
        Command::Kcbs { c0, run } => {
            let config = load_config(run.config.as_deref())?;
            let base = Construction::Kcbs {
                c0: c0.or(config.c0).unwrap_or(0.25),
            };
            run_construction(base, run, config)
        }
        Command::Werner { eps, w, run } => {
            let config = load_config(run.config.as_deref())?;
            let base = Construction::Werner {
                eps: eps.or(config.eps).unwrap_or(0.5),
                w: w.or(config.w).unwrap_or(0.5),
            };
            run_construction(base, run, config)
        }
        Command::Certify {
            model,
            class,
            tol,
            out,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            certify(&model, class, tol, out, config)
        }
        Command::Facets { n, x, format, out } => facets(n, x, format, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hvlab: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_are_inclusive() {
        let s = Sweep::parse("0:1:11").unwrap();
        let p = s.points();
        assert_eq!(p.len(), 11);
        assert_eq!(p[0], 0.0);
        assert_eq!(p[10], 1.0);
        assert!((p[3] - 0.3).abs() < 1e-15);
        assert_eq!(Sweep::parse("0.2:0.9:1").unwrap().points(), vec![0.2]);
    }

    #[test]
    fn sweep_rejects_bad_input() {
        for bad in ["0:1", "0:1:0", "a:1:3", "0:1:2:3"] {
            assert!(matches!(Sweep::parse(bad), Err(CliError::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn tolerance_must_be_positive() {
        assert!(positive_tol(Some(0.0), 1.0).is_err());
        assert!(positive_tol(Some(-1e-9), 1.0).is_err());
        assert_eq!(positive_tol(None, 1e-9).unwrap(), 1e-9);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"h0": 0.5, "bogus": 1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"class": "nchv-local", "format": "csv"}"#).unwrap();
        assert_eq!(c.class, Some(ClassArg::NchvLocal));
        assert_eq!(c.format, Some(Format::Csv));
    }
}
