//! Argument parsing and subcommand dispatch for the `isogcn` binary.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use serde_json::json;

use isogcn::analysis::{identity_suite, pca_explained_variance};
use isogcn::graph::load_iso_matrix;
use isogcn::training::{
    evaluate_splits, fit_alpha_to_iso, gen_synthetic_task, history_to_string, load_params,
    load_task, params_to_string, save_task, train, ModelKind, TrainConfig, DEFAULT_DENSITY,
    DEFAULT_EMBEDDING_DIM, DEFAULT_NODES, DEFAULT_RELATIONS, ISO_FILE,
};
use isogcn::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

pub const HISTORY_FILE: &str = "history.jsonl";
pub const PARAMS_FILE: &str = "params.txt";
pub const SUMMARY_FILE: &str = "summary.json";
pub const EVAL_FILE: &str = "eval.json";
pub const REPORTS_FILE: &str = "reports.jsonl";
pub const PCA_FILE: &str = "pca.json";
pub const ALPHA_FILE: &str = "alpha.csv";
pub const FIT_FILE: &str = "fit.json";

#[derive(Debug, Parser)]
#[command(
    name = "isogcn",
    about = "Relational graph convolution with a relation-dissimilarity prior"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic node-classification task.
    Gen(GenArgs),
    /// Train a model on a task directory.
    Train(TrainArgs),
    /// Evaluate trained parameters on every split.
    Eval(EvalArgs),
    /// Run the randomized identity checks.
    Verify(VerifyArgs),
    /// Retained variance of the principal components of the prior.
    Pca(PcaArgs),
    /// Fit attention vectors to the prior alone.
    FitAlpha(FitAlphaArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = DEFAULT_NODES)]
    pub nodes: usize,
    #[arg(long, default_value_t = DEFAULT_RELATIONS)]
    pub relations: usize,
    /// Dimension of the relation embedding.
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_DENSITY)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    /// Directory holding graph.json, iso.csv and splits.json.
    #[arg(long)]
    pub task: PathBuf,
    /// Rescale the prior so its largest entry is 1.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub normalize_iso: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "iso-gcn-scaled")]
    pub model: ModelKind,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.25)]
    pub fraction: f64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 8)]
    pub dmsg: usize,
    /// Attention heads.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    /// Basis count for the baseline's relation kernels.
    #[arg(long)]
    pub basis: Option<usize>,
    /// Average messages within each relation instead of summing them.
    #[arg(long)]
    pub degree_norm: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Run directory containing params.txt; eval.json is written there.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the reports as JSON lines into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Number of components.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitAlphaArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    /// Attention heads.
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            eprint!("{}", e.render());
            return EXIT_VALIDATION;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values always serialize") + "\n"
}

fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Gen(a) => {
            let t = gen_synthetic_task(a.nodes, a.relations, a.k, a.density, a.seed)?;
            save_task(&a.out, &t.task, Some(&t.embedding))?;
            eprintln!(
                "wrote task with {} nodes, {} edges, {} relations to {}",
                t.task.graph.num_nodes(),
                t.task.graph.edges().len(),
                t.task.graph.num_relations(),
                a.out.display()
            );
        }
        Command::Train(a) => {
            let task = load_task(&a.task.task, a.task.normalize_iso)?;
            let cfg = TrainConfig {
                model: a.model,
                layers: a.layers,
                d_msg: a.dmsg,
                heads: a.k,
                bases: a.basis,
                lambda: a.lambda,
                fraction: a.fraction,
                lr: a.lr,
                steps: a.steps,
                seed: a.seed,
                degree_norm: a.degree_norm,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            create_dir(&a.out)?;
            eprintln!("training {} for {} steps", cfg.model, cfg.steps);
            let outcome = train(&cfg, &task)?;
            write(
                &a.out.join(HISTORY_FILE),
                history_to_string(&outcome.history)?,
            )?;
            write(&a.out.join(PARAMS_FILE), params_to_string(&outcome.params))?;
            let eval = evaluate_splits(&outcome.params, &task)?;
            let summary = json!({
                "model": cfg.model.name(),
                "steps": cfg.steps,
                "parameters": outcome.params.num_parameters(),
                "evaluation": eval,
                "initial_iso_residual": outcome.initial_residual,
                "final_iso_residual": outcome.final_residual,
                "iso_evaluations": outcome.iso_evaluations,
            });
            write(&a.out.join(SUMMARY_FILE), pretty(&summary))?;
            eprintln!(
                "train accuracy {:.3}, test accuracy {:.3} (majority {:.3})",
                eval.train.accuracy, eval.test.accuracy, eval.test_majority
            );
        }
        Command::Eval(a) => {
            let task = load_task(&a.task.task, a.task.normalize_iso)?;
            let params = load_params(a.out.join(PARAMS_FILE))?;
            let eval = evaluate_splits(&params, &task)?;
            write(&a.out.join(EVAL_FILE), pretty(&json!(eval)))?;
            eprintln!(
                "test accuracy {:.3}, test AUC {:?}",
                eval.test.accuracy, eval.test.auc
            );
        }
        Command::Verify(a) => {
            let reports = identity_suite(a.instances, a.seed);
            for r in &reports {
                println!("{r}");
            }
            if let Some(dir) = &a.out {
                create_dir(dir)?;
                let lines: String = reports
                    .iter()
                    .map(|r| serde_json::to_string(r).expect("reports serialize") + "\n")
                    .collect();
                write(&dir.join(REPORTS_FILE), lines)?;
            }
            if !reports.iter().all(|r| r.passed) {
                return Ok(EXIT_NUMERIC);
            }
        }
        Command::Pca(a) => {
            let iso = load_iso_matrix(a.task.task.join(ISO_FILE), a.task.normalize_iso)?;
            let ratios = pca_explained_variance(&iso, a.k)?;
            create_dir(&a.out)?;
            write(
                &a.out.join(PCA_FILE),
                pretty(&json!({ "explained_variance_ratio": ratios })),
            )?;
            eprintln!("explained variance ratios: {ratios:?}");
        }
        Command::FitAlpha(a) => {
            let iso = load_iso_matrix(a.task.task.join(ISO_FILE), a.task.normalize_iso)?;
            let fit = fit_alpha_to_iso(&iso, a.k, a.steps, a.seed)?;
            create_dir(&a.out)?;
            let t = fit.table.as_tensor();
            let csv: String = (0..t.rows())
                .map(|r| {
                    let row: Vec<String> = t.row(r).iter().map(f64::to_string).collect();
                    row.join(",") + "\n"
                })
                .collect();
            write(&a.out.join(ALPHA_FILE), csv)?;
            let report = json!({
                "heads": a.k,
                "steps": a.steps,
                "initial_loss": fit.initial_loss,
                "loss": fit.loss,
                "max_distance_error": fit.max_distance_error(&iso),
            });
            write(&a.out.join(FIT_FILE), pretty(&report))?;
            eprintln!("residual {:.3e} after {} steps", fit.loss, a.steps);
        }
    }
    Ok(EXIT_OK)
}
