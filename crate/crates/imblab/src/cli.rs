//! The `imblab` command-line interface.
//!
//! Subcommands: `gen-data`, `train`, `bounds`, `compare-bounds`,
//! `gradcheck`, and `sweep`. Every command takes a single `--seed`;
//! all internal randomness is derived from it (see [`crate::seed`]),
//! so re-running a command with the same flags reproduces its machine
//! outputs byte for byte.
//!
//! Exit codes: 0 success, 1 gradient-check tolerance breach, 2 usage
//! or configuration error, 3 numerical blow-up during training.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    complexity, h1, vs_bound_report, ComplexityEstimate, ComplexityMethod, MuMode,
};
use crate::data::{
    class_counts, generate, generate_balanced_test, load_csv, save_csv, DatasetManifest,
    GaussianMixtureSpec, ImbalanceKind, ImbalanceProfile, LabeledDataset,
};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::gradcheck::{check_loss_gradients, check_model_gradients};
use crate::model::{LrSchedule, ModelKind, ScoreModel};
use crate::seed;
use crate::train::{
    best_epoch, phase_params, run_training, scheme_axes, scheme_catalog, OptConfig, ScheduleSpec,
    SchemeHypers,
};

#[derive(Parser, Debug)]
#[command(
    name = "imblab",
    version,
    about = "Class-imbalanced learning laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic imbalanced dataset (CSV + manifest).
    GenData(GenDataArgs),
    /// Train a scheme and write the epoch log, summary, and checkpoint.
    Train(TrainArgs),
    /// Compute the generalization-bound report for a checkpoint.
    Bounds(BoundsArgs),
    /// Sweep the sharpness comparator over a kappa grid.
    CompareBounds(CompareBoundsArgs),
    /// Finite-difference audit of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Grid sweep over schemes and hyperparameters.
    Sweep(SweepArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindFlag {
    Lt,
    Step,
}

impl From<KindFlag> for ImbalanceKind {
    fn from(k: KindFlag) -> Self {
        match k {
            KindFlag::Lt => ImbalanceKind::LongTailed,
            KindFlag::Step => ImbalanceKind::Step,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ComplexityFlag {
    Linear,
    Mc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MuModeFlag {
    Pointwise,
    Bsurrogate,
}

impl From<MuModeFlag> for MuMode {
    fn from(m: MuModeFlag) -> Self {
        match m {
            MuModeFlag::Pointwise => MuMode::Pointwise,
            MuModeFlag::Bsurrogate => MuMode::BSurrogate,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelFlag {
    Linear,
    Hidden,
}

/// Synthetic-mixture flags shared by the data-consuming commands.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct MixtureArgs {
    /// Imbalance profile: lt (exponential decay) or step.
    #[arg(long, value_enum, default_value = "lt")]
    kind: KindFlag,
    /// Number of classes.
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Head-class sample count N1.
    #[arg(long, default_value_t = 1000)]
    head: usize,
    /// Imbalance ratio rho = N1/NC.
    #[arg(long, default_value_t = 100.0)]
    rho: f64,
    /// Feature dimension.
    #[arg(long, default_value_t = 10)]
    dim: usize,
    /// Isotropic noise scale of the mixture.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Scale of the randomly drawn class means.
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    /// Balanced test samples per class.
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
}

impl MixtureArgs {
    fn profile(&self) -> ImbalanceProfile {
        ImbalanceProfile {
            kind: self.kind.into(),
            num_classes: self.classes,
            head_count: self.head,
            imbalance_ratio: self.rho,
        }
    }

    fn build(&self, root_seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
        let counts = class_counts(&self.profile())?;
        let spec = GaussianMixtureSpec::with_random_means(
            self.classes,
            self.dim,
            self.mean_scale,
            self.sigma,
            seed::derive(root_seed, "data", 0),
        )?;
        let train = generate(&spec, &counts)?;
        let test = generate_balanced_test(
            &spec,
            self.test_per_class.max(1),
            seed::derive(root_seed, "test-draws", 0),
        )?;
        Ok((train, test))
    }
}

impl KindFlag {
    fn as_str(self) -> &'static str {
        match self {
            KindFlag::Lt => "lt",
            KindFlag::Step => "step",
        }
    }
}

impl Serialize for KindFlag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for KindFlag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "lt" => Ok(KindFlag::Lt),
            "step" => Ok(KindFlag::Step),
            other => Err(serde::de::Error::custom(format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    mixture: MixtureArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    /// Training CSV; omit to synthesize data from the mixture flags.
    #[arg(long)]
    train_csv: Option<PathBuf>,
    /// Balanced test CSV; required with --train-csv.
    #[arg(long)]
    test_csv: Option<PathBuf>,
    #[command(flatten)]
    mixture: MixtureArgs,
    /// Scheme name, e.g. CE, CE+DRW, VS+TLA+ADRW.
    #[arg(long, default_value = "CE")]
    scheme: String,
    /// Re-weighting exponent alpha_y = pi_y^{-nu}.
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    /// Additive adjustment scale delta_y = tau*log(pi_y).
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Multiplicative adjustment exponent beta_y = (N_y/N_1)^gamma.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Effective-number parameter of the deferred re-weighting family.
    #[arg(long, default_value_t = 0.9999)]
    cb_p: f64,
    /// Margin-offset scale for the LDAM-style schemes.
    #[arg(long, default_value_t = 1.0)]
    margin_scale: f64,
    /// Deferral epoch T0.
    #[arg(long, default_value_t = 160)]
    t0: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 2e-4)]
    wd: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, value_enum, default_value = "linear")]
    model: ModelFlag,
    #[arg(long, default_value_t = 64)]
    hidden_width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Run directory holding summary.json; checkpoint and dataset are
    /// discovered from it.
    #[arg(long, conflicts_with_all = ["checkpoint", "data"])]
    run: Option<PathBuf>,
    #[arg(long, requires = "data")]
    checkpoint: Option<PathBuf>,
    /// Training CSV evaluated by the bound.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Scheme whose terminal-phase loss parameters are used when no
    /// run directory is given.
    #[arg(long, default_value = "CE")]
    scheme: String,
    #[arg(long, default_value_t = 1.0)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 0.9999)]
    cb_p: f64,
    #[arg(long, default_value_t = 1.0)]
    margin_scale: f64,
    /// Confidence level of the bound.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Loss cap M; defaults to the empirical maximum.
    #[arg(long)]
    m_cap: Option<f64>,
    #[arg(long, value_enum, default_value = "linear")]
    complexity: ComplexityFlag,
    #[arg(long, default_value_t = 1000)]
    mc_samples: usize,
    /// Norm bound B; defaults to the checkpoint parameter norm.
    #[arg(long)]
    norm_bound: Option<f64>,
    #[arg(long, value_enum, default_value = "pointwise")]
    mu_mode: MuModeFlag,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (defaults to the run directory or `.`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareBoundsArgs {
    /// Comma-separated priors, sorted nonincreasing.
    #[arg(long, conflicts_with = "data")]
    priors: Option<String>,
    /// Dataset CSV whose class priors are used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated kappa grid.
    #[arg(long, default_value = "1.0,1.25,2.0,3.0")]
    kappas: String,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Loss-level trials.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Model-level trials.
    #[arg(long, default_value_t = 20)]
    model_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Comma-separated scheme names.
    #[arg(long, default_value = "CE,CE+DRW")]
    schemes: String,
    #[arg(long, default_value = "1.0")]
    nus: String,
    #[arg(long, default_value = "1.0")]
    taus: String,
    #[arg(long, default_value = "0.1")]
    gammas: String,
    /// Deferral-epoch grid.
    #[arg(long, default_value = "")]
    t0s: String,
    /// Number of seeds per configuration.
    #[arg(long, default_value_t = 3)]
    seeds: usize,
    #[command(flatten)]
    mixture: MixtureArgs,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    t0_default: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 2e-4)]
    wd: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 0.9999)]
    cb_p: f64,
    #[arg(long, default_value_t = 1.0)]
    margin_scale: f64,
    #[arg(long, value_enum, default_value = "linear")]
    model: ModelFlag,
    #[arg(long, default_value_t = 64)]
    hidden_width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Everything needed to reproduce one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub scheme: String,
    pub hypers: SchemeHypers,
    pub model: ModelConfig,
    pub opt: OptEcho,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        kind: KindFlag,
        classes: usize,
        head: usize,
        rho: f64,
        dim: usize,
        sigma: f64,
        mean_scale: f64,
        test_per_class: usize,
    },
    Csv {
        train: String,
        test: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: String,
    pub hidden_width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptEcho {
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: RunConfig,
    pub schedule: ScheduleSpec,
    /// Terminal-phase weights are normalized so sum_y pi_y*alpha_y = 1.
    pub alpha_normalization: String,
    pub minority_split: String,
    pub best_epoch: usize,
    pub best_balanced_accuracy: f64,
    pub final_eval: crate::eval::EvalReport,
    pub files: RunFiles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFiles {
    pub epochs: String,
    pub checkpoint: String,
    pub train_csv: String,
    pub test_csv: String,
    pub per_class_csv: String,
}

/// Parse and dispatch; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::GenData(args) => cmd_gen_data(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::CompareBounds(args) => cmd_compare_bounds(&args),
        Command::Gradcheck(args) => return run_gradcheck(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match outcome {
        Ok(()) => 0,
        Err(Error::NonFiniteLoss { epoch }) => {
            eprintln!("error: non-finite loss at epoch {epoch}");
            3
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<()> {
    let counts = class_counts(&args.mixture.profile())?;
    fs::create_dir_all(&args.out)?;
    let (train, test) = args.mixture.build(args.seed)?;

    save_csv(&train, &args.out.join("train.csv"))?;
    write_json_pretty(
        &args.out.join("manifest.json"),
        &DatasetManifest::for_dataset(&train, args.seed),
    )?;
    if args.mixture.test_per_class > 0 {
        save_csv(&test, &args.out.join("test.csv"))?;
        write_json_pretty(
            &args.out.join("test_manifest.json"),
            &DatasetManifest::for_dataset(&test, args.seed),
        )?;
    }
    println!(
        "wrote {} samples over {} classes to {}",
        train.n(),
        train.num_classes(),
        args.out.display()
    );
    println!("counts: {counts:?}");
    println!("rho: {}", train.rho());
    Ok(())
}

fn load_pair(train_csv: &Path, test_csv: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, _) = load_csv(train_csv, None)?;
    let (test, _) = load_csv(test_csv, Some(train.num_classes()))?;
    if test.dim() != train.dim() {
        return Err(Error::config("train and test feature dimensions differ"));
    }
    Ok((train, test))
}

fn default_milestones(epochs: usize, t0: usize) -> Vec<usize> {
    // Anneal at T0 and halfway through the remaining epochs, the
    // standard two-drop multistep shape.
    if t0 == 0 || t0 >= epochs {
        return vec![];
    }
    let second = t0 + (epochs - t0) / 2;
    if second > t0 && second < epochs {
        vec![t0, second]
    } else {
        vec![t0]
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (train, test, dataset_source) = match (&args.train_csv, &args.test_csv) {
        (Some(train_path), Some(test_path)) => {
            let (train, test) = load_pair(train_path, test_path)?;
            let source = DatasetSource::Csv {
                train: train_path.display().to_string(),
                test: test_path.display().to_string(),
            };
            (train, test, source)
        }
        (Some(_), None) | (None, Some(_)) => {
            return Err(Error::config(
                "--train-csv and --test-csv must be given together",
            ));
        }
        (None, None) => {
            let (train, test) = args.mixture.build(args.seed)?;
            let m = &args.mixture;
            let source = DatasetSource::Synthetic {
                kind: m.kind,
                classes: m.classes,
                head: m.head,
                rho: m.rho,
                dim: m.dim,
                sigma: m.sigma,
                mean_scale: m.mean_scale,
                test_per_class: m.test_per_class,
            };
            (train, test, source)
        }
    };

    let hypers = SchemeHypers {
        epochs: args.epochs,
        t0: args.t0.min(args.epochs),
        nu: args.nu,
        tau: args.tau,
        gamma: args.gamma,
        cb_p: args.cb_p,
        margin_scale: args.margin_scale,
    };
    let schedule = scheme_catalog(&args.scheme, train.class_counts(), &hypers)?;

    let milestones = default_milestones(args.epochs, hypers.t0);
    let opt = OptConfig {
        schedule: LrSchedule::new(args.lr, milestones.clone(), 0.1)?,
        momentum: args.momentum,
        weight_decay: args.wd,
        batch_size: args.batch,
    };
    let model_kind = match args.model {
        ModelFlag::Linear => ModelKind::Linear,
        ModelFlag::Hidden => ModelKind::OneHidden {
            width: args.hidden_width,
        },
    };
    let model = ScoreModel::init(
        model_kind,
        train.dim(),
        train.num_classes(),
        seed::derive(args.seed, "init", 0),
    )?;

    let (final_model, records) = run_training(
        &train,
        &test,
        model,
        &schedule,
        &opt,
        seed::derive(args.seed, "train", 0),
    )?;

    fs::create_dir_all(&args.out)?;
    save_csv(&train, &args.out.join("train.csv"))?;
    save_csv(&test, &args.out.join("test.csv"))?;

    let mut epochs_file = fs::File::create(args.out.join("epochs.jsonl"))?;
    for record in &records {
        writeln!(epochs_file, "{}", serde_json::to_string(record)?)?;
    }
    write_json_pretty(&args.out.join("checkpoint.json"), &final_model)?;

    let best = best_epoch(&records).expect("at least one epoch");
    let terminal_epoch = schedule.total_epochs - 1;
    let final_params = phase_params(terminal_epoch, &schedule, train.class_counts())?;
    let final_eval = evaluate(&final_model, &train, &test, &final_params)?;

    let last = records.last().expect("at least one epoch");
    let mut per_class = String::from("class,count,prior,train_accuracy,test_accuracy,b_y\n");
    for y in 0..train.num_classes() {
        per_class.push_str(&format!(
            "{y},{},{},{},{},{}\n",
            train.class_counts()[y],
            train.priors()[y],
            last.per_class_train_accuracy[y],
            final_eval.per_class_accuracy[y],
            last.b_y[y],
        ));
    }
    fs::write(args.out.join("per_class.csv"), per_class)?;

    let summary = RunSummary {
        config: RunConfig {
            dataset: dataset_source,
            scheme: args.scheme.clone(),
            hypers,
            model: ModelConfig {
                kind: match args.model {
                    ModelFlag::Linear => "linear".to_string(),
                    ModelFlag::Hidden => "one_hidden".to_string(),
                },
                hidden_width: args.hidden_width,
            },
            opt: OptEcho {
                lr: args.lr,
                milestones,
                decay: 0.1,
                momentum: args.momentum,
                weight_decay: args.wd,
                batch: args.batch,
            },
            seed: args.seed,
        },
        schedule,
        alpha_normalization: "sum_y pi_y*alpha_y = 1".to_string(),
        minority_split: "top_half".to_string(),
        best_epoch: best,
        best_balanced_accuracy: records[best].test_balanced_accuracy,
        final_eval,
        files: RunFiles {
            epochs: "epochs.jsonl".to_string(),
            checkpoint: "checkpoint.json".to_string(),
            train_csv: "train.csv".to_string(),
            test_csv: "test.csv".to_string(),
            per_class_csv: "per_class.csv".to_string(),
        },
    };
    write_json_pretty(&args.out.join("summary.json"), &summary)?;
    println!(
        "scheme {} best epoch {} balanced accuracy {:.4}",
        args.scheme, best, summary.best_balanced_accuracy
    );
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let (model, train, params, out_dir): (ScoreModel, LabeledDataset, _, PathBuf) =
        if let Some(run_dir) = &args.run {
            let summary_path = run_dir.join("summary.json");
            let body = fs::read_to_string(&summary_path).map_err(|e| {
                Error::config(format!("cannot read {}: {e}", summary_path.display()))
            })?;
            let summary: RunSummary = serde_json::from_str(&body)?;
            let checkpoint_path = run_dir.join(&summary.files.checkpoint);
            let model: ScoreModel =
                serde_json::from_str(&fs::read_to_string(&checkpoint_path).map_err(|e| {
                    Error::config(format!("cannot read {}: {e}", checkpoint_path.display()))
                })?)?;
            let (train, _) = load_csv(&run_dir.join(&summary.files.train_csv), None)?;
            let terminal = summary.schedule.total_epochs - 1;
            let params = phase_params(terminal, &summary.schedule, train.class_counts())?;
            (
                model,
                train,
                params,
                args.out.clone().unwrap_or_else(|| run_dir.clone()),
            )
        } else {
            let checkpoint_path = args
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::config("need --run or --checkpoint with --data"))?;
            let data_path = args
                .data
                .as_ref()
                .ok_or_else(|| Error::config("need --data with --checkpoint"))?;
            let model: ScoreModel =
                serde_json::from_str(&fs::read_to_string(checkpoint_path).map_err(|e| {
                    Error::config(format!("cannot read {}: {e}", checkpoint_path.display()))
                })?)?;
            let (train, _) = load_csv(data_path, None)?;
            let hypers = SchemeHypers {
                epochs: 1,
                t0: 0,
                nu: args.nu,
                tau: args.tau,
                gamma: args.gamma,
                cb_p: args.cb_p,
                margin_scale: args.margin_scale,
            };
            let schedule = scheme_catalog(&args.scheme, train.class_counts(), &hypers)?;
            let params = phase_params(0, &schedule, train.class_counts())?;
            (
                model,
                train,
                params,
                args.out.clone().unwrap_or_else(|| PathBuf::from(".")),
            )
        };

    if model.dim() != train.dim() || model.num_classes() != train.num_classes() {
        return Err(Error::config("checkpoint shape does not match dataset"));
    }
    let scores = model.score_dataset(&train)?;
    let norm_bound = match args.norm_bound {
        Some(b) => b,
        None => model.param_norm().max(f64::MIN_POSITIVE),
    };
    let method = match args.complexity {
        ComplexityFlag::Linear => ComplexityMethod::LinearAnalytic,
        ComplexityFlag::Mc => ComplexityMethod::MonteCarlo,
    };
    let estimate: ComplexityEstimate = complexity(
        train.features(),
        method,
        norm_bound,
        args.mc_samples,
        seed::derive(args.seed, "complexity", 0),
    )?;
    let report = vs_bound_report(
        &scores,
        train.labels(),
        &params,
        estimate,
        args.m_cap,
        args.delta,
        args.mu_mode.into(),
    )?;
    fs::create_dir_all(&out_dir)?;
    write_json_pretty(&out_dir.join("bound_report.json"), &report)?;
    println!(
        "data-dependent bound {:.6}, union bound {:.6}",
        report.data_dependent_bound, report.union_bound
    );
    Ok(())
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::config(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::config(format!("bad {what} entry `{s}`")))
        })
        .collect()
}

fn cmd_compare_bounds(args: &CompareBoundsArgs) -> Result<()> {
    let pi: Vec<f64> = if let Some(text) = &args.priors {
        parse_f64_list(text, "prior")?
    } else if let Some(path) = &args.data {
        let (ds, _) = load_csv(path, None)?;
        ds.priors().to_vec()
    } else {
        return Err(Error::config("need --priors or --data"));
    };
    if pi.len() < 2 {
        return Err(Error::config("need at least 2 classes"));
    }
    let kappas = parse_f64_list(&args.kappas, "kappa")?;
    if kappas.is_empty() {
        return Err(Error::config("kappa grid is empty"));
    }

    let c = pi.len() as f64;
    let pi_tail = *pi.last().expect("nonempty");
    let mut out = String::from("kappa,h1,data_dep,union\n");
    for &kappa in &kappas {
        let h = h1(kappa, &pi)?;
        // Aggregates under mu_y = pi_y^{-kappa}, shared complexity
        // factors dropped: the comparator h1 equals C*(union - data_dep).
        let data_dep: f64 = pi.iter().map(|p| p.powf(0.5 - kappa)).sum::<f64>() / (c * pi_tail);
        let union: f64 = pi.iter().map(|p| p.powf(-0.5)).sum::<f64>() / (c * pi_tail.powf(kappa));
        out.push_str(&format!("{kappa},{h},{data_dep},{union}\n"));
    }
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, out)?;
        }
        None => print!("{out}"),
    }
    Ok(())
}

fn run_gradcheck(args: &GradcheckArgs) -> i32 {
    let loss = match check_loss_gradients(args.trials, seed::derive(args.seed, "loss", 0)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let model = match check_model_gradients(args.model_trials, seed::derive(args.seed, "model", 0))
    {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    println!(
        "loss-level:  {} trials, max relative error {:.3e} (tolerance {:.0e})",
        loss.trials, loss.max_relative_error, loss.tolerance
    );
    println!(
        "model-level: {} trials, max relative error {:.3e} (tolerance {:.0e})",
        model.trials, model.max_relative_error, model.tolerance
    );
    if loss.passed && model.passed {
        println!("gradcheck: PASS");
        0
    } else {
        for (name, report) in [("loss", &loss), ("model", &model)] {
            if !report.passed {
                eprintln!(
                    "gradcheck: FAIL ({name}-level) worst case: {}",
                    serde_json::to_string(&report.worst).unwrap_or_default()
                );
            }
        }
        1
    }
}

#[derive(Debug, Clone)]
struct SweepJob {
    scheme: String,
    nu: f64,
    tau: f64,
    gamma: f64,
    t0: usize,
}

#[derive(Debug, Clone)]
struct SweepOutcome {
    status: String,
    balanced_accuracy: Option<f64>,
    best_epoch: Option<usize>,
    acc_ratio: Option<f64>,
}

fn sweep_single(args: &SweepArgs, job: &SweepJob, seed_index: usize) -> Result<SweepOutcome> {
    // Data and init seeds depend only on the seed index, so every
    // configuration sees the same instances.
    let data_root = seed::derive(args.seed, "sweep-data", seed_index as u64);
    let (train, test) = args.mixture.build(data_root)?;
    let hypers = SchemeHypers {
        epochs: args.epochs,
        t0: job.t0,
        nu: job.nu,
        tau: job.tau,
        gamma: job.gamma,
        cb_p: args.cb_p,
        margin_scale: args.margin_scale,
    };
    let schedule = scheme_catalog(&job.scheme, train.class_counts(), &hypers)?;
    let opt = OptConfig {
        schedule: LrSchedule::new(args.lr, default_milestones(args.epochs, job.t0), 0.1)?,
        momentum: args.momentum,
        weight_decay: args.wd,
        batch_size: args.batch,
    };
    let model_kind = match args.model {
        ModelFlag::Linear => ModelKind::Linear,
        ModelFlag::Hidden => ModelKind::OneHidden {
            width: args.hidden_width,
        },
    };
    let model = ScoreModel::init(
        model_kind,
        train.dim(),
        train.num_classes(),
        seed::derive(args.seed, "sweep-init", seed_index as u64),
    )?;
    let (_, records) = run_training(
        &train,
        &test,
        model,
        &schedule,
        &opt,
        seed::derive(args.seed, "sweep-train", seed_index as u64),
    )?;
    let best = best_epoch(&records).expect("at least one epoch");
    Ok(SweepOutcome {
        status: "ok".to_string(),
        balanced_accuracy: Some(records[best].test_balanced_accuracy),
        best_epoch: Some(best),
        acc_ratio: records[best].acc_ratio_min_maj,
    })
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let schemes: Vec<String> = args
        .schemes
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ToString::to_string)
        .collect();
    if schemes.is_empty() || args.seeds == 0 {
        return Err(Error::config("need at least one scheme and one seed"));
    }
    let nus = parse_f64_list(&args.nus, "nu")?;
    let taus = parse_f64_list(&args.taus, "tau")?;
    let gammas = parse_f64_list(&args.gammas, "gamma")?;
    let t0s = if args.t0s.trim().is_empty() {
        vec![args.t0_default]
    } else {
        parse_usize_list(&args.t0s, "t0")?
    };
    for grid in [&nus, &taus, &gammas] {
        if grid.is_empty() {
            return Err(Error::config("hyperparameter grids must be nonempty"));
        }
    }
    let defaults = SchemeHypers::default();

    let mut jobs: Vec<SweepJob> = Vec::new();
    for scheme in &schemes {
        let (uses_nu, uses_tau, uses_gamma, uses_t0) = scheme_axes(scheme)?;
        let collapse = |active: bool, grid: &[f64], default: f64, axis: &str| -> Vec<f64> {
            if active {
                grid.to_vec()
            } else {
                if grid.len() > 1 {
                    eprintln!("warning: scheme {scheme} ignores the {axis} axis; using {default}");
                }
                vec![default]
            }
        };
        let scheme_nus = collapse(uses_nu, &nus, defaults.nu, "nu");
        let scheme_taus = collapse(uses_tau, &taus, defaults.tau, "tau");
        let scheme_gammas = collapse(uses_gamma, &gammas, defaults.gamma, "gamma");
        // Schemes without a deferral phase still anneal at the
        // reference epoch so learning-rate schedules stay comparable.
        let scheme_t0s: Vec<usize> = if uses_t0 {
            t0s.clone()
        } else {
            if t0s.len() > 1 {
                eprintln!("warning: scheme {scheme} ignores the t0 axis");
            }
            vec![args.t0_default]
        };
        for &nu in &scheme_nus {
            for &tau in &scheme_taus {
                for &gamma in &scheme_gammas {
                    for &t0 in &scheme_t0s {
                        jobs.push(SweepJob {
                            scheme: scheme.clone(),
                            nu,
                            tau,
                            gamma,
                            t0,
                        });
                    }
                }
            }
        }
    }

    // Fan out (config, seed) pairs across the worker pool; results are
    // re-assembled in deterministic order.
    let tasks: Vec<(usize, usize)> = (0..jobs.len())
        .flat_map(|j| (0..args.seeds).map(move |s| (j, s)))
        .collect();
    let mut results: Vec<((usize, usize), SweepOutcome)> = tasks
        .par_iter()
        .map(|&(j, s)| {
            let outcome = sweep_single(args, &jobs[j], s).unwrap_or_else(|e| SweepOutcome {
                status: format!("error: {e}").replace(',', ";"),
                balanced_accuracy: None,
                best_epoch: None,
                acc_ratio: None,
            });
            ((j, s), outcome)
        })
        .collect();
    results.sort_by_key(|&((j, s), _)| (j, s));

    let mut out = String::from(
        "row,scheme,nu,tau,gamma,t0,seed,status,balanced_accuracy,balanced_accuracy_std,best_epoch,acc_ratio_min_maj\n",
    );
    for (j, job) in jobs.iter().enumerate() {
        let mut oks: Vec<f64> = Vec::new();
        for s in 0..args.seeds {
            let (_, outcome) = &results[j * args.seeds + s];
            if let Some(acc) = outcome.balanced_accuracy {
                oks.push(acc);
            }
            out.push_str(&format!(
                "detail,{},{},{},{},{},{},{},{},,{},{}\n",
                job.scheme,
                job.nu,
                job.tau,
                job.gamma,
                job.t0,
                s,
                outcome.status,
                fmt_opt(&outcome.balanced_accuracy),
                fmt_opt(&outcome.best_epoch),
                fmt_opt(&outcome.acc_ratio),
            ));
        }
        let (mean, std) = if oks.is_empty() {
            (None, None)
        } else {
            let mean = oks.iter().sum::<f64>() / oks.len() as f64;
            let var = oks.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / oks.len() as f64;
            (Some(mean), Some(var.sqrt()))
        };
        out.push_str(&format!(
            "aggregate,{},{},{},{},{},,{},{},{},,\n",
            job.scheme,
            job.nu,
            job.tau,
            job.gamma,
            job.t0,
            if oks.len() == args.seeds {
                "ok"
            } else {
                "partial"
            },
            fmt_opt(&mean),
            fmt_opt(&std),
        ));
    }
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&args.out, out)?;
    println!(
        "swept {} configurations x {} seeds -> {}",
        jobs.len(),
        args.seeds,
        args.out.display()
    );
    Ok(())
}
