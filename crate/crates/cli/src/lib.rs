//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 on success, 2 for invalid arguments
//! or configuration, 1 for runtime failures. Failures print one JSON line to
//! stderr: `{"error": "<Kind>", "message": "..."}`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use vaesim::baselines::vae_kmeans_pipeline;
use vaesim::data::{load_dataset, Dataset, DatasetName};
use vaesim::eval::{cluster_ids, export_embeddings, write_embeddings_csv};
use vaesim::sweep::{sweep, SweepAxis};
use vaesim::{
    evaluate, load_checkpoint, resolve_config, save_checkpoint, train, EmaConvention, EpochRecord, Error, HardAssign,
    SimilarityMode, TrainConfig, TrainHooks,
};

pub const CONFIG_FILE: &str = "config.resolved.json";
pub const CHECKPOINT_FILE: &str = "model.vsim";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const ELBOW_FILE: &str = "elbow.json";
pub const SWEEP_FILE: &str = "sweep.json";

#[derive(Debug, Parser)]
#[command(
    name = "vaesim",
    version,
    about = "Prototype-conditioned VAE: training, evaluation and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model, then evaluate it and export test-set embeddings.
    Train(Common),
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train the unconditional VAE + KMeans baseline and evaluate it.
    Baseline(Common),
    /// Train one model per value of a single hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. 8,16,32,64.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
    /// Write `index,label,cluster,z_*` rows for the test split.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, default_value = "mnist")]
    dataset: DatasetName,
    /// Dataset directory. Falls back to $VAESIM_DATA_DIR, then ./data/<dataset>.
    #[arg(long, env = "VAESIM_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (defaults to the checkpoint's directory for eval/export, else `.`).
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    n_prototypes: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    lambda_ortho: Option<f64>,
    #[arg(long)]
    similarity: Option<SimilarityMode>,
    #[arg(long)]
    ema_convention: Option<EmaConvention>,
    #[arg(long)]
    hard_assign: Option<HardAssign>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    bank_size: Option<usize>,
    /// Train on only the first N training images.
    #[arg(long)]
    train_subset: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put("seed", self.seed.map(Value::from));
        put("latent_dim", self.latent_dim.map(Value::from));
        put("n_prototypes", self.n_prototypes.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("epochs", self.epochs.map(Value::from));
        put("lr", self.lr.map(Value::from));
        put("beta", self.beta.map(Value::from));
        put("eta", self.eta.map(Value::from));
        put("lambda_ortho", self.lambda_ortho.map(Value::from));
        put("similarity", self.similarity.map(|v| json!(v)));
        put("ema_convention", self.ema_convention.map(|v| json!(v)));
        put("hard_assign", self.hard_assign.map(|v| json!(v)));
        put("knn_k", self.knn_k.map(Value::from));
        put("bank_size", self.bank_size.map(Value::from));
        put("train_subset", self.train_subset.map(Value::from));
        m
    }

    fn resolve(&self, fallback_file: Option<&Path>) -> Result<TrainConfig, Failure> {
        let file = self.config.as_deref().or(fallback_file);
        resolve_config(self.dataset, file, &self.overrides()).map_err(Failure::from_config)
    }

    fn data_dir(&self) -> PathBuf {
        self.data_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("data").join(self.dataset.to_string()))
    }

    fn load(&self) -> Result<Dataset, Failure> {
        Ok(load_dataset(self.dataset, &self.data_dir())?)
    }
}

/// An error with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    kind: String,
    message: String,
}

impl Failure {
    fn usage(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: 2,
            kind: kind.into(),
            message: message.into(),
        }
    }

    /// Configuration problems are argument errors; a missing config file is not.
    fn from_config(e: Error) -> Self {
        let code = if matches!(e, Error::Io { .. }) { 1 } else { 2 };
        Self {
            code,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: 1,
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 1,
        kind: "IoError".into(),
        message: format!("io error on {}: {e}", path.display()),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn prepare_outdir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

/// Appends each epoch record to a JSONL file as it completes.
fn metrics_writer(path: &Path) -> Result<impl FnMut(&EpochRecord) -> vaesim::Result<()>, Failure> {
    let mut file = File::create(path).map_err(|e| io_failure(path, e))?;
    let owned = path.to_path_buf();
    Ok(move |r: &EpochRecord| {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|e| Error::Io {
                path: owned.clone(),
                source: e,
            })
    })
}

fn cmd_train(c: &Common) -> Result<(), Failure> {
    let cfg = c.resolve(None)?;
    let data = c.load()?;
    let out = c.outdir.clone().unwrap_or_else(|| PathBuf::from("."));
    prepare_outdir(&out)?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    let ck = out.join(CHECKPOINT_FILE);
    let mut on_epoch = metrics_writer(&out.join(METRICS_FILE))?;
    let model = train(
        &cfg,
        &data.train.images,
        TrainHooks {
            checkpoint_path: Some(ck.clone()),
            on_epoch: Some(&mut on_epoch),
        },
    )?;
    let bank = model.bank.clone().expect("conditional model has a bank");
    let report = evaluate(&model.vae, &bank, &data, &cfg)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    export_embeddings(
        &model.vae,
        &bank,
        &data.test.images,
        &data.test.labels.labels,
        &out.join(EMBEDDINGS_FILE),
    )?;
    save_checkpoint(&mut model.into_state(), &ck)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn checkpoint_dir(checkpoint: &Path) -> PathBuf {
    checkpoint
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Config for commands that start from a checkpoint: the run's resolved
/// config (if present beside it), then `--config`, then flags.
fn resolve_for_checkpoint(c: &Common, checkpoint: &Path) -> Result<TrainConfig, Failure> {
    let saved = checkpoint_dir(checkpoint).join(CONFIG_FILE);
    let fallback = saved.is_file().then_some(saved);
    c.resolve(fallback.as_deref())
}

fn cmd_eval(c: &Common, checkpoint: &Path) -> Result<(), Failure> {
    let cfg = resolve_for_checkpoint(c, checkpoint)?;
    let state = load_checkpoint(checkpoint)?;
    let bank = state
        .bank
        .as_ref()
        .ok_or_else(|| Failure::usage("InvalidArgument", "checkpoint has no prototype bank"))?;
    let data = c.load()?;
    let out = c.outdir.clone().unwrap_or_else(|| checkpoint_dir(checkpoint));
    prepare_outdir(&out)?;
    let report = evaluate(&state.vae, bank, &data, &cfg)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

fn cmd_baseline(c: &Common) -> Result<(), Failure> {
    let cfg = c.resolve(None)?;
    let data = c.load()?;
    let out = c.outdir.clone().unwrap_or_else(|| PathBuf::from("."));
    prepare_outdir(&out)?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    let ck = out.join(CHECKPOINT_FILE);
    let mut on_epoch = metrics_writer(&out.join(METRICS_FILE))?;
    let outcome = vae_kmeans_pipeline(
        &cfg,
        &data,
        TrainHooks {
            checkpoint_path: Some(ck.clone()),
            on_epoch: Some(&mut on_epoch),
        },
    )?;
    write_json(&out.join(REPORT_FILE), &outcome.report)?;
    write_json(&out.join(ELBOW_FILE), &outcome.elbow)?;
    let test_mu = outcome.model.vae.encode_mu(&data.test.images, 512)?;
    let clusters = outcome.clustering.predict(&test_mu.map(|v| v as f64));
    write_embeddings_csv(
        &out.join(EMBEDDINGS_FILE),
        &test_mu,
        &data.test.labels.labels,
        &clusters,
    )?;
    save_checkpoint(&mut outcome.model.into_state(), &ck)?;
    println!("{}", serde_json::to_string(&outcome.report).expect("report serializes"));
    Ok(())
}

fn cmd_sweep(c: &Common, axis: SweepAxis, values: &[usize]) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(Failure::usage(
            "InvalidArgument",
            "--values must list at least one value",
        ));
    }
    let cfg = c.resolve(None)?;
    let data = c.load()?;
    let out = c.outdir.clone().unwrap_or_else(|| PathBuf::from("."));
    prepare_outdir(&out)?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    let report = sweep(&cfg, axis, values, &data, |row| {
        println!("{}", serde_json::to_string(row).expect("row serializes"));
    })?;
    write_json(&out.join(SWEEP_FILE), &report)?;
    Ok(())
}

fn cmd_export(c: &Common, checkpoint: &Path) -> Result<(), Failure> {
    resolve_for_checkpoint(c, checkpoint)?;
    let state = load_checkpoint(checkpoint)?;
    let data = c.load()?;
    let out = c.outdir.clone().unwrap_or_else(|| checkpoint_dir(checkpoint));
    prepare_outdir(&out)?;
    let path = out.join(EMBEDDINGS_FILE);
    let mu = state.vae.encode_mu(&data.test.images, 512)?;
    let clusters = match &state.bank {
        Some(bank) => cluster_ids(bank, &mu)?,
        None => {
            return Err(Failure::usage(
                "InvalidArgument",
                "checkpoint has no prototype bank; baseline runs export embeddings themselves",
            ))
        }
    };
    let rows = write_embeddings_csv(&path, &mu, &data.test.labels.labels, &clusters)?;
    println!("{}", json!({"rows": rows, "path": path}));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Train(c) => cmd_train(c),
        Command::Eval { common, checkpoint } => cmd_eval(common, checkpoint),
        Command::Baseline(c) => cmd_baseline(c),
        Command::Sweep { common, axis, values } => cmd_sweep(common, *axis, values),
        Command::ExportEmbeddings { common, checkpoint } => cmd_export(common, checkpoint),
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
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
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            report(&Failure::usage("ArgumentError", first));
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            report(&f);
            f.code
        }
    }
}

fn report(f: &Failure) {
    eprintln!("{}", json!({"error": f.kind, "message": f.message}));
}
