//! Command-line workflow: fit, check estimability, refine and rank.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use cnma::{
    forest_svg, ingest_samples, parse_contrast_csv, validate_network, Analysis, CnmaError,
    Diagnostic, FitResult, HierarchyQuestion, HierarchyReport,
};

use config::{Format, RunConfig};

pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_REFUSAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn refusal(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_REFUSAL,
            message: message.into(),
        }
    }
}

impl From<CnmaError> for CliError {
    fn from(e: CnmaError) -> Self {
        let code = match &e {
            CnmaError::Io(_) => EXIT_IO,
            CnmaError::Csv(c) if c.is_io_error() => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cnma",
    version,
    about = "Component network meta-analysis hierarchies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Rank the estimable subset and record the rest as exclusions.
    #[arg(long, global = true)]
    pub exclude_inestimable: bool,

    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write fit.json.
    Fit,
    /// Check estimability of the set against the reference.
    Check,
    /// Refine the set and answer the hierarchy question.
    Rank {
        /// Reuse a fit written by `cnma fit` instead of refitting.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Also write the effect draws to samples.csv.
        #[arg(long)]
        save_samples: bool,
    },
    /// Re-render the table and forest plot from a hierarchy JSON.
    Report {
        /// Defaults to hierarchy.json in the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| CliError::validation("--config <path> is required"))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = cli.seed {
            cfg.question.seed = seed;
        }
        let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        Ok(Context { cfg, out })
    }

    fn wants(&self, f: Format) -> bool {
        self.cfg.output.formats.contains(&f)
    }

    fn analysis(&self, notes: &mut Vec<String>) -> Result<Analysis, CliError> {
        if !self.cfg.data.exists() {
            return Err(CliError::io(format!(
                "cannot read data {}",
                self.cfg.data.display()
            )));
        }
        let network = parse_contrast_csv(&self.cfg.data)?;
        for d in validate_network(&network) {
            match d {
                Diagnostic::IncompleteMultiArm { .. } => {
                    return Err(CliError::validation(d.to_string()))
                }
                _ => notes.push(format!("network: {d}")),
            }
        }
        Ok(Analysis::new(network, self.cfg.model_spec()?)?)
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::validation(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn read_fit(path: &Path) -> Result<FitResult, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read fit {}: {e}", path.display())))?;
    Ok(FitResult::from_json(&text)?)
}

/// Runs one command and returns the summary lines for stdout.
pub fn run(cli: &Cli) -> Result<Vec<String>, CliError> {
    match &cli.command {
        Command::Fit => cmd_fit(cli),
        Command::Check => cmd_check(cli),
        Command::Rank { fit, save_samples } => cmd_rank(cli, fit.as_deref(), *save_samples),
        Command::Report { input } => cmd_report(cli, input.as_deref()),
    }
}

fn cmd_fit(cli: &Cli) -> Result<Vec<String>, CliError> {
    let ctx = Context::load(cli)?;
    let mut lines = Vec::new();
    let analysis = ctx.analysis(&mut lines)?;
    let fit = analysis.fit()?;
    let path = ctx.write("fit.json", fit.to_json()?.as_bytes())?;
    if ctx.wants(Format::Csv) {
        let mut buf = Vec::new();
        cnma::design::write_matrix_csv(
            &mut buf,
            &analysis.design.param_labels,
            &analysis.design.design,
        )?;
        ctx.write("design_matrix.csv", &buf)?;
    }
    lines.push(format!(
        "rank(M) = {}, p = {}, tau2 = {:.6}, Q = {:.4}, df = {}",
        fit.rank_m,
        fit.p(),
        fit.tau2,
        fit.q,
        fit.df
    ));
    lines.extend(fit.warnings.iter().map(|w| format!("warning: {w}")));
    lines.push(format!("wrote {}", path.display()));
    Ok(lines)
}

fn set_and_reference(
    ctx: &Context,
    analysis: &Analysis,
) -> Result<(Vec<cnma::TreatmentLabel>, cnma::TreatmentLabel), CliError> {
    let set = analysis.resolve_set(&ctx.cfg.set_selection()?)?;
    let reference = match &ctx.cfg.question.reference {
        Some(r) => analysis.resolve_label(r)?,
        None => set[0].clone(),
    };
    if !set.contains(&reference) {
        return Err(CliError::validation(format!(
            "reference {reference} is not in the set"
        )));
    }
    Ok((set, reference))
}

fn cmd_check(cli: &Cli) -> Result<Vec<String>, CliError> {
    let ctx = Context::load(cli)?;
    let mut lines = Vec::new();
    let analysis = ctx.analysis(&mut lines)?;
    let (set, reference) = set_and_reference(&ctx, &analysis)?;
    let report = analysis.check(&set, &reference)?;
    let path = ctx.write("estimability.json", &json(&report)?)?;
    let n_ok = report.elements.iter().filter(|e| e.estimable).count();
    lines.push(format!(
        "rank(M) = {}, p = {}; {n_ok} of {} relative effects versus {reference} are estimable",
        report.rank_m,
        report.p,
        report.elements.len()
    ));
    for e in report.elements.iter().filter(|e| !e.estimable) {
        lines.push(format!("  not estimable: {} vs {reference}", e.label));
    }
    lines.push(format!("wrote {}", path.display()));
    if !report.all_estimable() {
        let diagnostics = analysis.diagnostics()?;
        let path = ctx.write("component_diagnostics.json", &json(&diagnostics)?)?;
        let bad: Vec<&str> = diagnostics
            .iter()
            .filter(|d| !d.estimable && !d.fixed)
            .map(|d| d.label.as_str())
            .collect();
        lines.push(format!("inestimable parameters: {}", bad.join(", ")));
        lines.push(format!("wrote {}", path.display()));
    }
    Ok(lines)
}

fn write_report_files(ctx: &Context, report: &HierarchyReport) -> Result<Vec<String>, CliError> {
    let mut lines = Vec::new();
    if ctx.wants(Format::Json) {
        let p = ctx.write("hierarchy.json", report.to_json()?.as_bytes())?;
        lines.push(format!("wrote {}", p.display()));
    }
    if ctx.wants(Format::Csv) {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        let p = ctx.write("hierarchy.csv", &buf)?;
        lines.push(format!("wrote {}", p.display()));
    }
    if ctx.wants(Format::Svg) {
        let p = ctx.write("forest.svg", forest_svg(report)?.as_bytes())?;
        lines.push(format!("wrote {}", p.display()));
    }
    Ok(lines)
}

fn summary_table(report: &HierarchyReport) -> Vec<String> {
    let mut lines = vec![format!(
        "{:>4}  {:<28} {:>10}  {:>24}  {:>10}",
        "pos",
        "element",
        "estimate",
        "95% CI",
        report.question.metric.name()
    )];
    for e in &report.elements {
        let ci = match e.ci {
            Some([lo, hi]) => format!("({lo:.3}, {hi:.3})"),
            None => "(-, -)".to_string(),
        };
        lines.push(format!(
            "{:>4}  {:<28} {:>10.3}  {:>24}  {:>10.3}",
            e.position, e.label, e.estimate, ci, e.metric
        ));
    }
    for x in &report.exclusions {
        lines.push(format!("{:>4}  {:<28} {}", "-", x.label, x.reason));
    }
    lines
}

fn cmd_rank(
    cli: &Cli,
    fit_path: Option<&Path>,
    save_samples: bool,
) -> Result<Vec<String>, CliError> {
    let ctx = Context::load(cli)?;
    let mut lines = Vec::new();
    let analysis = ctx.analysis(&mut lines)?;
    let (set, reference) = set_and_reference(&ctx, &analysis)?;
    let metric = ctx.cfg.metric()?;
    let refinement = analysis.refine(&set, &reference)?;
    if !refinement.is_complete() && !cli.exclude_inestimable {
        let names: Vec<&str> = refinement
            .exclusions
            .iter()
            .map(|x| x.label.as_str())
            .collect();
        return Err(CliError::refusal(format!(
            "{} of {} relative effects versus {reference} are not estimable ({}); \
             refraining from refining the hierarchy question. \
             Pass --exclude-inestimable to rank the estimable subset and record the exclusions",
            names.len(),
            set.len() - 1,
            names.join(", ")
        )));
    }
    let fit = match fit_path {
        Some(p) => read_fit(p)?,
        None => analysis.fit()?,
    };
    let question = HierarchyQuestion {
        set,
        refined: refinement.refined.clone(),
        reference: reference.clone(),
        metric,
        orientation: ctx.cfg.question.orientation,
        n_samples: ctx.cfg.question.samples,
        seed: ctx.cfg.question.seed,
        mode: ctx.cfg.question.mode,
    };
    let external = match (&ctx.cfg.question.samples_file, metric.needs_samples()) {
        (Some(path), true) => Some(ingest_samples(path, &reference.to_string())?),
        _ => None,
    };
    let answer = analysis.answer(&fit, &question, refinement.exclusions, external)?;
    lines.extend(summary_table(&answer.report));
    lines.extend(
        answer
            .report
            .warnings
            .iter()
            .map(|w| format!("warning: {w}")),
    );
    lines.extend(write_report_files(&ctx, &answer.report)?);
    if save_samples {
        if let Some(samples) = &answer.samples {
            let mut buf = Vec::new();
            samples.write_csv(&mut buf)?;
            let p = ctx.write("samples.csv", &buf)?;
            lines.push(format!("wrote {}", p.display()));
        }
    }
    Ok(lines)
}

fn cmd_report(cli: &Cli, input: Option<&Path>) -> Result<Vec<String>, CliError> {
    let ctx = Context::load(cli)?;
    let path = input
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out.join("hierarchy.json"));
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::io(format!("cannot read report {}: {e}", path.display())))?;
    let report: HierarchyReport = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("invalid report {}: {e}", path.display())))?;
    let mut lines = summary_table(&report);
    lines.extend(write_report_files(&ctx, &report)?);
    Ok(lines)
}
