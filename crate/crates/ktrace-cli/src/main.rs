//! Command-line interface for the knowledge-tracing toolkit.
//!
//! Subcommands: `generate` synthetic data, `fit` knowledge-tracing variants,
//! `discover` latent skills by MCMC, `train-dkt` for the recurrent baseline,
//! `eval` any fitted model on a test split, `analyze` for the diagnostic
//! baselines, and `compare` to run a model list side by side. Every run
//! writes its artifacts plus a `run.json` stamp into its own directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ktrace::abilities::{AbilityFitConfig, AbilityGrid};
use ktrace::artifact::{self, MetricsArtifact, ModelArtifact, RunStamp};
use ktrace::bkt::{self, FitConfig};
use ktrace::data::{self, CsvFormat, Dataset, LoadOptions, Partition, Vocab};
use ktrace::dkt::{self, DktConfig};
use ktrace::error::{Error, ErrorCategory};
use ktrace::eval::{self, HalfLife, MetricsReport, PredictionRecord};
use ktrace::skill_discovery::{self, WcrpConfig};
use ktrace::synthgen::{self, SyntheticConfig};

#[derive(Parser)]
#[command(name = "ktrace", version, about = "Knowledge-tracing toolkit")]
struct Cli {
    /// Worker thread cap; 1 guarantees bytewise-deterministic output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset plus its hidden ground truth.
    Generate(GenerateArgs),
    /// Fit a knowledge-tracing model (bkt, bkt+f, bkt+a).
    Fit(FitArgs),
    /// Run skill-discovery MCMC (bkt+s, bkt+fsa).
    Discover(DiscoverArgs),
    /// Train the recurrent baseline.
    TrainDkt(TrainDktArgs),
    /// Evaluate a fitted model file on a test set.
    Eval(EvalArgs),
    /// Diagnostic analyses on a dataset.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Fit and evaluate a list of models, emitting a comparison table.
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Exponentially weighted autoregressive baseline.
    Recency(RecencyArgs),
    /// Correlation between accuracy on earlier skills and the next skill.
    AbilityCorrelation(AbilityCorrelationArgs),
}

#[derive(Args, serde::Serialize)]
struct OutArgs {
    /// Output directory; defaults to a timestamped directory under
    /// KTRACE_OUT (or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, serde::Serialize)]
struct DataArgs {
    /// Input dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Input layout: generic or assistments.
    #[arg(long, default_value = "generic")]
    format: String,
    /// Keep students with a single trial instead of dropping them.
    #[arg(long)]
    keep_single_trial: bool,
    /// Fraction of students held out for testing.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Seed of the student split.
    #[arg(long, default_value_t = 17)]
    split_seed: u64,
    /// Use the whole file (no held-out split); pair with pre-split files.
    #[arg(long)]
    no_split: bool,
}

impl DataArgs {
    fn load_full(&self) -> Result<Dataset, Error> {
        let format: CsvFormat = self.format.parse()?;
        let mut options = LoadOptions::new(format);
        options.drop_single_trial_students = !self.keep_single_trial;
        data::load_csv_with(&self.data, options)
    }

    /// (train, test) under the configured split; with --no-split both sides
    /// are the whole file.
    fn load_split(&self) -> Result<(Dataset, Dataset), Error> {
        let full = self.load_full()?;
        if self.no_split {
            return Ok((full.clone(), full));
        }
        data::split_by_student(&full, self.test_fraction, self.split_seed)
    }
}

#[derive(Args, serde::Serialize)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    students: usize,
    #[arg(long, default_value_t = 50)]
    exercises: usize,
    #[arg(long, default_value_t = 5)]
    skills: usize,
    #[arg(long, default_value_t = 0.25)]
    guess_floor: f64,
    #[arg(long, default_value_t = 1.0)]
    difficulty_spread: f64,
    #[arg(long, default_value_t = 1.0)]
    ability_spread: f64,
    #[arg(long, default_value_t = 0.05)]
    drift: f64,
    #[arg(long, default_value_t = 0.1)]
    diffusion: f64,
    /// Advance one global ability track instead of per-skill tracks.
    #[arg(long)]
    global_ability: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, serde::Serialize)]
enum FitModel {
    Bkt,
    #[value(name = "bkt+f")]
    BktF,
    #[value(name = "bkt+a")]
    BktA,
}

#[derive(Args, serde::Serialize)]
struct FitArgs {
    /// Model family: bkt, bkt+f, or bkt+a.
    #[arg(long, value_enum)]
    model: FitModel,
    #[command(flatten)]
    data: DataArgs,
    /// Label grouping: auto, per-label, expert, single, or a chain artifact
    /// whose highest-likelihood partition is reused.
    #[arg(long, default_value = "auto")]
    partition: String,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Ability grid size (bkt+a only).
    #[arg(long, default_value_t = 7)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum, serde::Serialize)]
enum DiscoverModel {
    #[value(name = "bkt+s")]
    BktS,
    #[value(name = "bkt+fsa")]
    BktFsa,
}

#[derive(Args, serde::Serialize)]
struct DiscoverArgs {
    /// Model family: bkt+s or bkt+fsa.
    #[arg(long, value_enum, default_value = "bkt+s")]
    model: DiscoverModel,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 500)]
    sweeps: usize,
    #[arg(long, default_value_t = 200)]
    burn_in: usize,
    #[arg(long, default_value_t = 5)]
    thin: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Expert-affinity strength; default ln 4.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    mh_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Args, serde::Serialize)]
struct TrainDktArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 50)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 5.0)]
    grad_clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Args, serde::Serialize)]
struct EvalArgs {
    /// Fitted model artifact (any kind).
    #[arg(long)]
    model_file: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Dataset name recorded in the report.
    #[arg(long, default_value = "dataset")]
    name: String,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Args, serde::Serialize)]
struct RecencyArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Decay half-life in trials, or `fit` to pick it on the training side.
    #[arg(long, default_value = "5")]
    half_life: String,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Args, serde::Serialize)]
struct AbilityCorrelationArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

#[derive(Args, serde::Serialize)]
struct CompareArgs {
    /// Comma-separated list from: bkt, bkt+f, bkt+a, bkt+s, bkt+fsa, dkt,
    /// recency.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[command(flatten)]
    data: DataArgs,
    /// Dataset name recorded in the table.
    #[arg(long, default_value = "dataset")]
    name: String,
    /// Sweeps for the skill-discovery members of the list.
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    #[arg(long, default_value_t = 80)]
    burn_in: usize,
    #[arg(long, default_value_t = 5)]
    thin: usize,
    /// Epochs for the recurrent baseline.
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    out: OutArgs,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Discover(args) => cmd_discover(args),
        Command::TrainDkt(args) => cmd_train_dkt(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Analyze(AnalyzeCommand::Recency(args)) => cmd_recency(args),
        Command::Analyze(AnalyzeCommand::AbilityCorrelation(args)) => cmd_ability_corr(args),
        Command::Compare(args) => cmd_compare(args),
    };
    if let Err(err) = result {
        let category = err.category();
        eprintln!("error[{}]: {err}", category.code());
        std::process::exit(match category {
            ErrorCategory::Validation => 2,
            ErrorCategory::Numerical => 3,
            ErrorCategory::Io => 4,
        });
    }
}

/// Resolves the run directory: an explicit --out as-is, otherwise a fresh
/// timestamped directory under $KTRACE_OUT or ./runs.
fn run_dir(out: &OutArgs, command: &str) -> Result<PathBuf, Error> {
    let dir = match &out.out {
        Some(d) => d.clone(),
        None => {
            let root = std::env::var_os("KTRACE_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let mut dir = root.join(format!("{command}-{stamp}"));
            let mut k = 1;
            while dir.exists() {
                dir = root.join(format!("{command}-{stamp}-{k}"));
                k += 1;
            }
            dir
        }
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    Ok(dir)
}

fn write_stamp(
    dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
) -> Result<RunStamp, Error> {
    let stamp = RunStamp::new(command, seed, config);
    artifact::save_json(&stamp, dir.join("run.json"))?;
    Ok(stamp)
}

fn to_config_json<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "generate")?;
    let config = SyntheticConfig {
        n_students: args.students,
        n_exercises: args.exercises,
        n_skills: args.skills,
        guess_floor: args.guess_floor,
        difficulty_mean: 0.0,
        difficulty_spread: args.difficulty_spread,
        ability_mean: 0.0,
        ability_spread: args.ability_spread,
        drift: args.drift,
        diffusion: args.diffusion,
        per_skill_ability: !args.global_ability,
        seed: args.seed,
    };
    let (dataset, truth) = synthgen::generate(&config)?;
    synthgen::write_generic_csv(&dataset, dir.join("synthetic.csv"))?;
    artifact::save_json(&truth, dir.join("ground_truth.json"))?;
    write_stamp(&dir, "generate", args.seed, to_config_json(&config))?;
    println!(
        "generated {} students x {} exercises -> {}",
        config.n_students,
        config.n_exercises,
        dir.display()
    );
    Ok(())
}

/// Builds the partition for `fit` from its --partition flag.
fn resolve_partition(spec: &str, dataset: &Dataset) -> Result<Partition, Error> {
    let has_tags = dataset
        .students
        .iter()
        .flat_map(|s| &s.trials)
        .any(|t| t.expert_skill.is_some());
    match spec {
        "auto" => Ok(if has_tags {
            Partition::from_expert_tags(dataset)
        } else {
            Partition::per_label(dataset.label_vocab.len())
        }),
        "per-label" => Ok(Partition::per_label(dataset.label_vocab.len())),
        "expert" => {
            if !has_tags {
                return Err(Error::InvalidArgument(
                    "dataset carries no expert skill tags".into(),
                ));
            }
            Ok(Partition::from_expert_tags(dataset))
        }
        "single" => Ok(Partition::single(dataset.label_vocab.len())),
        path => {
            let chain: ModelArtifact = artifact::load_json(path)?;
            match chain {
                ModelArtifact::WcrpChain { label_vocab, samples, map_index, .. } => {
                    check_vocab(dataset, &label_vocab)?;
                    Ok(samples[map_index].partition.clone())
                }
                other => Err(Error::InvalidArgument(format!(
                    "--partition file must be a wcrp-chain artifact, got {}",
                    other.kind_name()
                ))),
            }
        }
    }
}

fn check_vocab(dataset: &Dataset, model_vocab: &[String]) -> Result<(), Error> {
    for name in dataset.label_vocab.names() {
        if !model_vocab.iter().any(|m| m == name) {
            return Err(Error::VocabMismatch(format!(
                "label `{name}` missing from the model vocabulary"
            )));
        }
    }
    Ok(())
}

/// Rewrites a dataset's label ids to a model's vocabulary order.
fn remap_to_vocab(dataset: &Dataset, model_vocab: &[String]) -> Result<Dataset, Error> {
    check_vocab(dataset, model_vocab)?;
    let vocab = Vocab::from_names(model_vocab.to_vec());
    let mut remapped = dataset.clone();
    for seq in &mut remapped.students {
        for tr in &mut seq.trials {
            let name = dataset.label_vocab.name(tr.label);
            tr.label = vocab.get(name).expect("checked above");
        }
    }
    remapped.label_vocab = vocab;
    Ok(remapped)
}

fn cmd_fit(args: FitArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "fit")?;
    let (train, _) = args.data.load_split()?;
    let partition = resolve_partition(&args.partition, &train)?;
    let forgetting = args.model == FitModel::BktF;
    let fit_config = FitConfig {
        forgetting,
        restarts: args.restarts,
        seed: args.seed,
        ..FitConfig::default()
    };
    let stamp = write_stamp(&dir, "fit", args.seed, to_config_json(&args))?;
    let artifact_out = match args.model {
        FitModel::Bkt | FitModel::BktF => {
            let subseqs = data::parse_into_skill_sequences(&train, &partition)?;
            let skill_params = bkt::fit_skills(&subseqs, partition.n_skills(), &fit_config)?;
            ModelArtifact::BktModel {
                stamp,
                label_vocab: train.label_vocab.names().to_vec(),
                partition,
                forgetting,
                skill_params,
            }
        }
        FitModel::BktA => {
            let grid = AbilityGrid::standard_normal(args.grid)?;
            let config = AbilityFitConfig { base: fit_config, ..AbilityFitConfig::default() };
            let fit = ktrace::abilities::fit_em_abilities(&train, &partition, &grid, &config)?;
            ModelArtifact::AbilityModel {
                stamp,
                label_vocab: train.label_vocab.names().to_vec(),
                partition,
                forgetting,
                grid: fit.grid,
                skill_params: fit.skill_params,
            }
        }
    };
    artifact::save_json(&artifact_out, dir.join("model.json"))?;
    println!("fitted {} -> {}", artifact_out.kind_name(), dir.display());
    Ok(())
}

fn fit_mean_abilities(
    train: &Dataset,
    seed: u64,
) -> Result<HashMap<usize, f64>, Error> {
    let partition = resolve_partition("auto", train)?;
    let grid = AbilityGrid::default();
    let ability_config = AbilityFitConfig {
        base: FitConfig { forgetting: true, restarts: 2, seed, ..FitConfig::default() },
        max_iters: 25,
        ..AbilityFitConfig::default()
    };
    let fit = ktrace::abilities::fit_em_abilities(train, &partition, &grid, &ability_config)?;
    Ok(fit.posteriors.iter().map(|p| (p.student, p.mean(&grid))).collect())
}

fn cmd_discover(args: DiscoverArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "discover")?;
    let (train, _) = args.data.load_split()?;
    let combined = args.model == DiscoverModel::BktFsa;
    let config = WcrpConfig {
        alpha: args.alpha,
        gamma: args.gamma.unwrap_or(4.0f64.ln()),
        forgetting: combined,
        sweeps: args.sweeps,
        burn_in: args.burn_in,
        thin: args.thin,
        mh_scale: args.mh_scale,
        seed: args.seed,
        ..WcrpConfig::default()
    };
    // The combined model pins each training student's ability at the
    // posterior mean of a preliminary ability fit before searching skills.
    let abilities =
        if combined { Some(fit_mean_abilities(&train, args.seed)?) } else { None };
    let result = skill_discovery::run_chain(&train, &config, abilities.as_ref())?;
    let map_index = result.map_index;
    let n_samples = result.samples.len();
    let map_skills = result.samples[map_index].partition.n_skills();
    let stamp = write_stamp(&dir, "discover", args.seed, to_config_json(&args))?;
    let chain = ModelArtifact::WcrpChain {
        stamp,
        label_vocab: train.label_vocab.names().to_vec(),
        forgetting: combined,
        samples: result.samples,
        map_index,
    };
    artifact::save_json(&chain, dir.join("model.json"))?;
    println!(
        "chain finished: {n_samples} retained samples, map skills = {map_skills} -> {}",
        dir.display()
    );
    Ok(())
}

fn cmd_train_dkt(args: TrainDktArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "train-dkt")?;
    let (train, _) = args.data.load_split()?;
    let config = DktConfig {
        n_labels: train.label_vocab.len(),
        hidden_size: args.hidden,
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        batch_size: args.batch_size,
        grad_clip: args.grad_clip,
        seed: args.seed,
    };
    let result = dkt::train(&train, &config)?;
    let stamp = write_stamp(&dir, "train-dkt", args.seed, to_config_json(&args))?;
    let model = ModelArtifact::DktModel {
        stamp,
        label_vocab: train.label_vocab.names().to_vec(),
        model: result.model,
    };
    artifact::save_json(&model, dir.join("model.json"))?;
    println!(
        "trained dkt ({} epochs, final loss {:.4}) -> {}",
        args.epochs,
        result.epoch_losses.last().copied().unwrap_or(0.0),
        dir.display()
    );
    Ok(())
}

/// Produces test-set predictions for any model artifact.
fn predict_with_artifact(
    model: &ModelArtifact,
    test: &Dataset,
) -> Result<Vec<PredictionRecord>, Error> {
    let test = remap_to_vocab(test, model.label_vocab())?;
    match model {
        ModelArtifact::BktModel { partition, skill_params, .. } => {
            bkt::predict_dataset(&test, partition, skill_params)
        }
        ModelArtifact::AbilityModel { partition, skill_params, grid, .. } => {
            ktrace::abilities::predict_dataset(&test, partition, skill_params, grid)
        }
        ModelArtifact::WcrpChain { samples, .. } => {
            skill_discovery::posterior_predict(samples, &test)
        }
        ModelArtifact::DktModel { model, .. } => dkt::predict_dataset(model, &test),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "eval")?;
    let model: ModelArtifact = artifact::load_json(&args.model_file)?;
    let (_, test) = args.data.load_split()?;
    let records = predict_with_artifact(&model, &test)?;
    let report = MetricsReport::from_records(model.kind_name(), &args.name, &records);
    let stamp = write_stamp(&dir, "eval", 0, to_config_json(&args))?;
    artifact::save_json(&MetricsArtifact::new(stamp, report.clone()), dir.join("metrics.json"))?;
    let csv = format!("{}\n{}\n", MetricsReport::csv_header(), report.csv_row());
    std::fs::write(dir.join("metrics.csv"), csv)
        .map_err(|e| Error::Io { path: dir.join("metrics.csv"), source: e })?;
    println!(
        "{}: auc_global = {}, auc_per_skill_mean = {} -> {}",
        report.model,
        format_opt(report.auc_global),
        format_opt(report.auc_per_skill_mean),
        dir.display()
    );
    Ok(())
}

fn format_opt(v: Option<f64>) -> String {
    v.map(|a| format!("{a:.4}")).unwrap_or_else(|| "undefined".into())
}

fn cmd_recency(args: RecencyArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "analyze-recency")?;
    let (train, test) = args.data.load_split()?;
    let half_life = match args.half_life.as_str() {
        "fit" => HalfLife::Fit,
        raw => HalfLife::Fixed(raw.parse::<f64>().map_err(|_| {
            Error::InvalidArgument(format!("half-life must be a number or `fit`, got `{raw}`"))
        })?),
    };
    let result = eval::recency_baseline(&train, &test, half_life)?;
    let report = MetricsReport::from_records("recency", "dataset", &result.records);
    let stamp = write_stamp(&dir, "analyze recency", 0, to_config_json(&args))?;
    artifact::save_json(&MetricsArtifact::new(stamp, report.clone()), dir.join("metrics.json"))?;
    println!(
        "recency half-life {:.3} (lambda {:.5}): auc_global = {}",
        result.half_life,
        result.lambda,
        format_opt(report.auc_global)
    );
    Ok(())
}

fn cmd_ability_corr(args: AbilityCorrelationArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "analyze-ability-correlation")?;
    let full = args.data.load_full()?;
    let r = eval::ability_correlation(&full);
    let stamp = write_stamp(&dir, "analyze ability-correlation", 0, to_config_json(&args))?;
    artifact::save_json(
        &serde_json::json!({
            "kind": "ability-correlation",
            "stamp": stamp,
            "correlation": r,
        }),
        dir.join("metrics.json"),
    )?;
    match r {
        Some(v) => println!("prior-skill accuracy correlation: {v:.4}"),
        None => println!("prior-skill accuracy correlation: undefined"),
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), Error> {
    let dir = run_dir(&args.out, "compare")?;
    if args.models.is_empty() {
        return Err(Error::InvalidArgument("--models list is empty".into()));
    }
    let (train, test) = args.data.load_split()?;
    let mut reports: Vec<MetricsReport> = Vec::new();
    for name in &args.models {
        let records = run_model_for_compare(name, &train, &test, &args)?;
        reports.push(MetricsReport::from_records(name, &args.name, &records));
    }
    // Scale every model's gap against the recurrent baseline when present.
    let dkt_auc = reports.iter().find(|r| r.model == "dkt").and_then(|r| r.auc_global);
    if let Some(dkt_auc) = dkt_auc {
        if dkt_auc > 0.5 {
            for report in &mut reports {
                if let Some(auc) = report.auc_global {
                    report.scaled_gap_vs_dkt = Some(eval::scaled_gap(auc, dkt_auc)?);
                }
            }
        }
    }
    let stamp = write_stamp(&dir, "compare", args.seed, to_config_json(&args))?;
    artifact::save_json(
        &serde_json::json!({"kind": "comparison", "stamp": stamp, "reports": reports}),
        dir.join("compare.json"),
    )?;
    let mut csv =
        String::from("model,dataset,auc_global,auc_per_skill_mean,n_trials,scaled_gap_vs_dkt\n");
    for r in &reports {
        let opt =
            |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "undefined".into());
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model,
            r.dataset,
            opt(r.auc_global),
            opt(r.auc_per_skill_mean),
            r.n_trials,
            opt(r.scaled_gap_vs_dkt),
        ));
    }
    std::fs::write(dir.join("compare.csv"), &csv)
        .map_err(|e| Error::Io { path: dir.join("compare.csv"), source: e })?;
    print!("{csv}");
    println!("-> {}", dir.display());
    Ok(())
}

fn run_model_for_compare(
    name: &str,
    train: &Dataset,
    test: &Dataset,
    args: &CompareArgs,
) -> Result<Vec<PredictionRecord>, Error> {
    let fit_config = FitConfig { seed: args.seed, ..FitConfig::default() };
    match name {
        "bkt" | "bkt+f" => {
            let partition = resolve_partition("auto", train)?;
            let config = FitConfig { forgetting: name == "bkt+f", ..fit_config };
            let subseqs = data::parse_into_skill_sequences(train, &partition)?;
            let params = bkt::fit_skills(&subseqs, partition.n_skills(), &config)?;
            bkt::predict_dataset(test, &partition, &params)
        }
        "bkt+a" => {
            let partition = resolve_partition("auto", train)?;
            let grid = AbilityGrid::default();
            let config = AbilityFitConfig { base: fit_config, ..AbilityFitConfig::default() };
            let fit = ktrace::abilities::fit_em_abilities(train, &partition, &grid, &config)?;
            ktrace::abilities::predict_dataset(test, &partition, &fit.skill_params, &fit.grid)
        }
        "bkt+s" | "bkt+fsa" => {
            let combined = name == "bkt+fsa";
            let config = WcrpConfig {
                gamma: 0.0,
                forgetting: combined,
                sweeps: args.sweeps,
                burn_in: args.burn_in,
                thin: args.thin,
                seed: args.seed,
                ..WcrpConfig::default()
            };
            let abilities =
                if combined { Some(fit_mean_abilities(train, args.seed)?) } else { None };
            let chain = skill_discovery::run_chain(train, &config, abilities.as_ref())?;
            skill_discovery::posterior_predict(&chain.samples, test)
        }
        "dkt" => {
            let config = DktConfig {
                epochs: args.epochs,
                seed: args.seed,
                ..DktConfig::new(train.label_vocab.len())
            };
            let result = dkt::train(train, &config)?;
            dkt::predict_dataset(&result.model, test)
        }
        "recency" => Ok(eval::recency_baseline(train, test, HalfLife::Fixed(5.0))?.records),
        other => Err(Error::InvalidArgument(format!(
            "unknown model `{other}` (expected bkt, bkt+f, bkt+a, bkt+s, bkt+fsa, dkt, recency)"
        ))),
    }
}
