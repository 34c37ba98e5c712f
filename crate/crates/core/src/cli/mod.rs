//! The `speedgrid` command line. Every command is a function of its input
//! files, flags and seed, and writes only under `--out`.

mod plot;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::clustering::KMeansModel;
use crate::dictionary::{Aggregation, ClusterDictionarySet};
use crate::domain::{LinkId, Trip};
use crate::features::{FeatureKind, TripFeatures};
use crate::io::{self, IoError};
use crate::metrics::{evaluate, Report};
use crate::model::{predict_trip, ArchKind, Checkpoint, ClsCriterion, MeanBaseline, Predictor};
use crate::pipeline::{
    assemble_split, build_dictionary, history_csv, predict_all, prediction_seed, run_experiment,
    sweep_csv, sweep_k, train_method, Method, PipelineConfig, PipelineError, MEAN_METHOD,
};
use crate::synth::{self, Dataset, Split, SynthError, WorldConfig, SPLIT_NAMES};

pub use plot::speed_profile_svg;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => CliError::Runtime(e.to_string()),
            IoError::Csv { ref source, .. } if source.is_io_error() => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "speedgrid",
    version,
    about = "Link speed prediction from cluster speed dictionaries and recurrent models"
)]
struct Cli {
    /// Cap on worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report failures as a JSON object on stderr.
    #[arg(long, global = true)]
    error_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world with reference/train/val/test splits.
    Synth(SynthArgs),
    /// Cluster reference links and build the cluster speed dictionary.
    BuildDict(BuildDictArgs),
    /// Train one model on the train split (val split used for checkpointing).
    Train(TrainArgs),
    /// Score the mean baseline and checkpoints on the test split.
    Evaluate(EvaluateArgs),
    /// Predict the speed profile of every trip in a CSV.
    Predict(PredictArgs),
    /// Write an SVG and a CSV of true vs. predicted speed per trip.
    Plot(PlotArgs),
    /// Rerun dictionary and recurrent model for several cluster counts.
    SweepK(SweepArgs),
    /// Dictionary, all standard methods and the evaluation in one go.
    Run(RunArgs),
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned())).map_err(|e| e.to_string())
}

/// Pipeline settings. Flags override the config file; flags a command does
/// not use are ignored.
#[derive(Debug, Args)]
struct Settings {
    /// TOML file with the same keys as the flags (underscored).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of link clusters.
    #[arg(long)]
    k: Option<usize>,
    /// Slot width in percent of link length.
    #[arg(long)]
    percent: Option<u32>,
    /// pooled | unweighted
    #[arg(long, value_parser = parse_enum::<Aggregation>)]
    agg: Option<Aggregation>,
    /// topo | infra
    #[arg(long, value_parser = parse_enum::<FeatureKind>)]
    features: Option<FeatureKind>,
    /// Past points per sequence.
    #[arg(long)]
    sz: Option<usize>,
    #[arg(long)]
    max_skip: Option<u32>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    lr_min: Option<f64>,
    #[arg(long)]
    w_reg: Option<f64>,
    #[arg(long)]
    w_cls: Option<f64>,
    /// cross_entropy | one_hot_mse
    #[arg(long, value_parser = parse_enum::<ClsCriterion>)]
    criterion: Option<ClsCriterion>,
    /// Draw fresh past-point sequences every epoch.
    #[arg(long)]
    resample_per_epoch: bool,
}

fn load_table(path: Option<&Path>) -> CliResult<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn set<T: Serialize>(t: &mut toml::Table, key: &str, value: Option<T>) -> CliResult<()> {
    if let Some(v) = value {
        let v = toml::Value::try_from(v).map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
        t.insert(key.to_owned(), v);
    }
    Ok(())
}

/// Deserialize `t`, taking the seed from the flag when given. A seed must
/// come from one of the two.
fn seeded<T: DeserializeOwned>(
    mut t: toml::Table,
    seed: Option<u64>,
    set_seed: fn(&mut T, u64),
) -> CliResult<T> {
    match seed {
        // Placeholder, replaced below: toml integers cannot hold every u64.
        Some(_) => {
            t.insert("seed".into(), toml::Value::Integer(0));
        }
        None if !t.contains_key("seed") => {
            return Err(CliError::Usage(
                "a seed is required: pass --seed or set `seed` in the config file".into(),
            ))
        }
        None => {}
    }
    let mut v: T = toml::Value::Table(t)
        .try_into()
        .map_err(|e| CliError::Validation(format!("invalid configuration: {e}")))?;
    if let Some(s) = seed {
        set_seed(&mut v, s);
    }
    Ok(v)
}

impl Settings {
    fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut t = load_table(self.config.as_deref())?;
        set(&mut t, "k", self.k)?;
        set(&mut t, "percent", self.percent)?;
        set(&mut t, "agg", self.agg)?;
        set(&mut t, "features", self.features)?;
        set(&mut t, "sz", self.sz)?;
        set(&mut t, "max_skip", self.max_skip)?;
        set(&mut t, "epochs", self.epochs)?;
        set(&mut t, "batch_size", self.batch_size)?;
        set(&mut t, "lr0", self.lr0)?;
        set(&mut t, "lr_min", self.lr_min)?;
        set(&mut t, "w_reg", self.w_reg)?;
        set(&mut t, "w_cls", self.w_cls)?;
        set(&mut t, "criterion", self.criterion)?;
        if self.resample_per_epoch {
            t.insert("resample".into(), toml::Value::Boolean(true));
        }
        // An embedded world without its own seed follows the pipeline seed.
        let world_unseeded = matches!(t.get("world"), Some(toml::Value::Table(w)) if !w.contains_key("seed"));
        if world_unseeded {
            if let Some(toml::Value::Table(w)) = t.get_mut("world") {
                w.insert("seed".into(), toml::Value::Integer(0));
            }
        }
        let mut cfg: PipelineConfig = seeded(t, self.seed, |c: &mut PipelineConfig, s| c.seed = s)?;
        if world_unseeded {
            let seed = cfg.seed;
            if let Some(w) = cfg.world.as_mut() {
                w.seed = seed;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML world description; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Total regions: all but the last two are reference regions.
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    links_per_region: Option<usize>,
    #[arg(long)]
    trips_per_region: Option<usize>,
    /// Standard deviation of the speed noise, km/h.
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BuildDictArgs {
    #[command(flatten)]
    settings: Settings,
    /// Dataset directory; its `reference` split is used.
    #[arg(long, conflicts_with_all = ["links", "trips"])]
    data: Option<PathBuf>,
    /// Reference links CSV (with --trips).
    #[arg(long, requires = "trips")]
    links: Option<PathBuf>,
    /// Reference trips CSV (with --links).
    #[arg(long, requires = "links")]
    trips: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Rnn,
    Mlp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    settings: Settings,
    /// Dataset directory with `train` and optionally `val`/`test` splits.
    #[arg(long)]
    data: PathBuf,
    /// Output directory of build-dict.
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, value_enum, default_value = "rnn")]
    model: ModelArg,
    /// Feed the dictionary speed as a feature.
    #[arg(long, value_enum, default_value = "on")]
    cds: OnOff,
    /// Method name in reports; derived from --model and --cds when omitted.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    settings: Settings,
    /// Dataset directory; `train` fits the mean baseline, `test` is scored.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    /// Checkpoint files, reported in the given order.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long)]
    links: PathBuf,
    #[arg(long)]
    trips: PathBuf,
    #[arg(long)]
    dict: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[command(flatten)]
    predict: PredictArgs,
    /// Only these trips (repeatable).
    #[arg(long = "trip")]
    trip_ids: Vec<String>,
    /// At most this many trips, in file order.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    settings: Settings,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "6,30,60,120")]
    ks: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    settings: Settings,
    /// Dataset directory; a synthetic world is generated when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Parse `args` (program name first), run, and report failures on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json = args.iter().any(|a| a == "--error-json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            if json {
                report(&CliError::Usage(e.kind().to_string()), true);
            } else {
                let _ = e.print();
            }
            return ExitCode::from(2);
        }
    };
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e, json);
            ExitCode::from(e.exit_code())
        }
    }
}

fn report(e: &CliError, json: bool) {
    if json {
        let v = serde_json::json!({
            "error": e.kind(),
            "code": e.exit_code(),
            "message": e.message(),
        });
        eprintln!("{v}");
    } else {
        eprintln!("error: {}", e.message());
    }
}

fn run_cli(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::BuildDict(a) => cmd_build_dict(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Plot(a) => cmd_plot(&a),
        Command::SweepK(a) => cmd_sweep_k(&a),
        Command::Run(a) => cmd_run(&a),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    io::write_bytes(path, text.as_bytes())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_split(dir: &Path) -> CliResult<Split> {
    Ok(Split {
        links: io::read_links(&dir.join("links.csv"))?,
        trips: io::read_trips(&dir.join("trips.csv"))?,
    })
}

fn read_optional_split(dir: &Path) -> CliResult<Option<Split>> {
    if dir.join("trips.csv").exists() {
        read_split(dir).map(Some)
    } else {
        Ok(None)
    }
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let mut t = load_table(a.config.as_deref())?;
    set(&mut t, "n_regions", a.regions)?;
    set(&mut t, "links_per_region", a.links_per_region)?;
    set(&mut t, "trips_per_region", a.trips_per_region)?;
    set(&mut t, "noise_std", a.noise_std)?;
    let cfg: WorldConfig = seeded(t, a.seed, |c: &mut WorldConfig, s| c.seed = s)?;
    write_world(&cfg, &a.out)?;
    Ok(())
}

fn write_world(cfg: &WorldConfig, out: &Path) -> CliResult<Dataset> {
    let output = synth::generate(cfg)?;
    output.dataset.write(out)?;
    write_text(&out.join("archetypes.csv"), &output.archetypes_csv())?;
    let mut oracle = String::from("trip_id,step_index,oracle_kmh\n");
    for (id, speeds) in &output.oracle {
        for (i, s) in speeds.iter().enumerate() {
            let _ = writeln!(oracle, "{id},{i},{s}");
        }
    }
    write_text(&out.join("oracle.csv"), &oracle)?;
    let world = toml::to_string(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&out.join("world.toml"), &world)?;
    Ok(output.dataset)
}

const REFERENCE_LINKS: &str = "reference_links.txt";

fn write_dictionary(
    out: &Path,
    kmeans: &KMeansModel,
    dict: &ClusterDictionarySet,
    reference: &Split,
) -> CliResult<()> {
    io::write_json(&out.join("kmeans.json"), kmeans)?;
    io::write_json(&out.join("dict.json"), dict)?;
    let mut ids = String::new();
    for id in reference.links.ids() {
        let _ = writeln!(ids, "{id}");
    }
    write_text(&out.join(REFERENCE_LINKS), &ids)
}

struct LoadedDictionary {
    kmeans: KMeansModel,
    dict: ClusterDictionarySet,
    reference: BTreeSet<LinkId>,
}

fn load_dictionary(dir: &Path) -> CliResult<LoadedDictionary> {
    let kmeans: KMeansModel = io::read_json(&dir.join("kmeans.json"))?;
    let dict: ClusterDictionarySet = io::read_json(&dir.join("dict.json"))?;
    if kmeans.k != dict.k() {
        return Err(CliError::Validation(format!(
            "kmeans.json has k = {} but dict.json has k = {}",
            kmeans.k,
            dict.k()
        )));
    }
    let path = dir.join(REFERENCE_LINKS);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let reference = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| LinkId(l.to_owned()))
        .collect();
    Ok(LoadedDictionary {
        kmeans,
        dict,
        reference,
    })
}

fn cmd_build_dict(a: &BuildDictArgs) -> CliResult<()> {
    let cfg = a.settings.resolve()?;
    let reference = match (&a.data, &a.links, &a.trips) {
        (Some(dir), _, _) => read_split(&dir.join(SPLIT_NAMES[0]))?,
        (None, Some(links), Some(trips)) => Split {
            links: io::read_links(links)?,
            trips: io::read_trips(trips)?,
        },
        _ => return Err(CliError::Usage("pass --data or both --links and --trips".into())),
    };
    let (kmeans, dict) = build_dictionary(&reference, cfg.k, cfg.percent, cfg.agg, cfg.seed)?;
    write_dictionary(&a.out, &kmeans, &dict, &reference)
}

/// Refuse model-facing splits that share links with the dictionary's regions.
fn guard_disjoint(reference: &BTreeSet<LinkId>, splits: &[(&str, &Split)]) -> CliResult<()> {
    for (name, split) in splits {
        let shared: Vec<&LinkId> = split.links.ids().filter(|id| reference.contains(*id)).collect();
        if let Some(first) = shared.first() {
            return Err(PipelineError::LinkOverlap {
                split: (*name).to_owned(),
                count: shared.len(),
                example: (*first).clone(),
            }
            .into());
        }
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let cfg = a.settings.resolve()?;
    let loaded = load_dictionary(&a.dict)?;
    let mut reference = loaded.reference.clone();
    if let Some(r) = read_optional_split(&a.data.join(SPLIT_NAMES[0]))? {
        reference.extend(r.links.ids().cloned());
    }
    let train = read_split(&a.data.join(SPLIT_NAMES[1]))?;
    let val = read_optional_split(&a.data.join(SPLIT_NAMES[2]))?;
    let test = read_optional_split(&a.data.join(SPLIT_NAMES[3]))?;
    let mut model_facing = vec![(SPLIT_NAMES[1], &train)];
    model_facing.extend(val.as_ref().map(|s| (SPLIT_NAMES[2], s)));
    model_facing.extend(test.as_ref().map(|s| (SPLIT_NAMES[3], s)));
    guard_disjoint(&reference, &model_facing)?;

    let (arch, with_cds) = match (a.model, a.cds) {
        (ModelArg::Rnn, cds) => (ArchKind::Rnn, matches!(cds, OnOff::On)),
        (ModelArg::Mlp, cds) => (ArchKind::Mlp, matches!(cds, OnOff::On)),
    };
    let name = a.name.clone().unwrap_or_else(|| default_name(arch, with_cds).to_owned());
    if name == MEAN_METHOD {
        return Err(CliError::Usage(format!("'{MEAN_METHOD}' is reserved for the baseline")));
    }
    let train_feats = assemble_split(&train, &loaded.kmeans, &loaded.dict, cfg.features)?;
    let val_feats = match &val {
        Some(v) => assemble_split(v, &loaded.kmeans, &loaded.dict, cfg.features)?,
        None => Vec::new(),
    };
    let method = Method::new(&name, arch, with_cds);
    let trained = train_method(&method, cfg.features, loaded.dict.k(), &train_feats, &val_feats, &cfg)?;
    io::write_json(&a.out.join("checkpoint.json"), &trained.checkpoint)?;
    write_text(&a.out.join("history.csv"), &history_csv(&trained.history))
}

fn default_name(arch: ArchKind, with_cds: bool) -> &'static str {
    match (arch, with_cds) {
        (ArchKind::Rnn, true) => "ROPPA_RNN",
        (ArchKind::Rnn, false) => "RNN",
        (ArchKind::Mlp, true) => "MLP_f",
        (ArchKind::Mlp, false) => "MLP",
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let cfg = a.settings.resolve()?;
    let loaded = load_dictionary(&a.dict)?;
    let train = read_split(&a.data.join(SPLIT_NAMES[1]))?;
    let test = read_split(&a.data.join(SPLIT_NAMES[3]))?;
    guard_disjoint(&loaded.reference, &[(SPLIT_NAMES[3], &test)])?;
    let labels: Vec<f64> = train.trips.iter().flat_map(Trip::speeds).collect();
    let mean = MeanBaseline::fit(&labels).map_err(PipelineError::from)?;

    let mut assembled: Vec<(FeatureKind, Vec<TripFeatures>)> = Vec::new();
    let mut test_labels: Vec<f64> = Vec::new();
    let mut methods: Vec<(String, Vec<f64>)> = Vec::new();
    for path in &a.checkpoint {
        let checkpoint: Checkpoint = io::read_json(path)?;
        let kind = checkpoint.features.kind;
        if !assembled.iter().any(|(k, _)| *k == kind) {
            assembled.push((kind, assemble_split(&test, &loaded.kmeans, &loaded.dict, kind)?));
        }
        let feats = &assembled.iter().find(|(k, _)| *k == kind).expect("assembled").1;
        if test_labels.is_empty() {
            test_labels = feats.iter().flat_map(|t| t.speeds.iter().copied()).collect();
        }
        let name = checkpoint.name.clone();
        let predictor = Predictor::new(checkpoint).map_err(PipelineError::from)?;
        let preds = predict_all(&predictor, feats, prediction_seed(cfg.seed))?;
        methods.push((name, preds.concat()));
    }
    methods.insert(0, (MEAN_METHOD.to_owned(), mean.predict(test_labels.len())));
    let report = evaluate(&methods, &test_labels).map_err(PipelineError::from)?;
    write_report(&a.out, &report)
}

fn write_report(out: &Path, report: &Report) -> CliResult<()> {
    write_text(&out.join("report.csv"), &report.to_csv())?;
    println!("{report}");
    Ok(())
}

struct Profiles {
    name: String,
    trips: Vec<(Trip, Vec<f64>)>,
}

fn predict_profiles(a: &PredictArgs, mut keep: impl FnMut(&Trip) -> bool) -> CliResult<Profiles> {
    let cfg = a.settings.resolve()?;
    let loaded = load_dictionary(&a.dict)?;
    let links = io::read_links(&a.links)?;
    let trips = io::read_trips(&a.trips)?;
    let checkpoint: Checkpoint = io::read_json(&a.checkpoint)?;
    let name = checkpoint.name.clone();
    let predictor = Predictor::new(checkpoint).map_err(PipelineError::from)?;
    let seed = prediction_seed(cfg.seed);
    let mut out = Vec::new();
    for trip in trips {
        if !keep(&trip) {
            continue;
        }
        let pred = predict_trip(&predictor, &loaded.dict, &loaded.kmeans, &trip, &links, seed)
            .map_err(|e| match e {
                crate::model::PredictError::Invalid(_) => {
                    CliError::Validation(format!("trip {}: {e}", trip.trip_id))
                }
                other => PipelineError::from(other).into(),
            })?;
        out.push((trip, pred));
    }
    Ok(Profiles { name, trips: out })
}

fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    let profiles = predict_profiles(a, |_| true)?;
    let mut csv = String::from("trip_id,step_index,speed_kmh,predicted_kmh\n");
    for (trip, pred) in &profiles.trips {
        for (p, y) in trip.points.iter().zip(pred) {
            let _ = writeln!(csv, "{},{},{},{}", trip.trip_id, p.step_index, p.speed, y);
        }
    }
    write_text(&a.out.join("predictions.csv"), &csv)
}

/// File stem for a trip id: anything outside `[A-Za-z0-9_-]` becomes `_`.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_plot(a: &PlotArgs) -> CliResult<()> {
    let wanted: BTreeSet<&str> = a.trip_ids.iter().map(String::as_str).collect();
    let limit = a.limit.unwrap_or(usize::MAX);
    let mut seen = 0usize;
    let profiles = predict_profiles(&a.predict, |t| {
        let take = (wanted.is_empty() || wanted.contains(t.trip_id.as_str())) && seen < limit;
        seen += usize::from(take);
        take
    })?;
    let out = &a.predict.out;
    for (trip, pred) in &profiles.trips {
        let stem = file_stem(trip.trip_id.as_str());
        let truth = trip.speeds();
        let mut csv = String::from("step_index,speed_kmh,predicted_kmh\n");
        for (p, y) in trip.points.iter().zip(pred) {
            let _ = writeln!(csv, "{},{},{}", p.step_index, p.speed, y);
        }
        write_text(&out.join(format!("{stem}.csv")), &csv)?;
        let title = format!("{} ({})", trip.trip_id, profiles.name);
        write_text(&out.join(format!("{stem}.svg")), &speed_profile_svg(&title, &truth, pred))?;
    }
    Ok(())
}

fn read_dataset(dir: &Path) -> CliResult<Dataset> {
    Ok(Dataset::read(dir)?)
}

fn cmd_sweep_k(a: &SweepArgs) -> CliResult<()> {
    let cfg = a.settings.resolve()?;
    if a.ks.is_empty() || a.ks.contains(&0) {
        return Err(CliError::Usage("--ks needs positive cluster counts".into()));
    }
    let data = read_dataset(&a.data)?;
    let rows = sweep_k(&data, &cfg, &a.ks)?;
    let csv = sweep_csv(&rows);
    write_text(&a.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_run(a: &RunArgs) -> CliResult<()> {
    let cfg = a.settings.resolve()?;
    let data = match &a.data {
        Some(dir) => read_dataset(dir)?,
        None => {
            let world = cfg.world.clone().unwrap_or_else(|| WorldConfig::new(cfg.seed));
            write_world(&world, &a.out.join("data"))?
        }
    };
    let exp = run_experiment(&data, &cfg, &Method::standard())?;
    write_dictionary(&a.out, &exp.kmeans, &exp.dict, &data.reference)?;
    for t in &exp.trained {
        let stem = file_stem(&t.method.name);
        io::write_json(&a.out.join("checkpoints").join(format!("{stem}.json")), &t.checkpoint)?;
        write_text(&a.out.join("history").join(format!("{stem}.csv")), &history_csv(&t.history))?;
    }
    write_report(&a.out, &exp.report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(args: &[&str]) -> Settings {
        #[derive(Parser)]
        struct Wrap {
            #[command(flatten)]
            s: Settings,
        }
        let mut argv = vec!["x"];
        argv.extend_from_slice(args);
        Wrap::try_parse_from(argv).unwrap().s
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(settings(&[]).resolve(), Err(CliError::Usage(_))));
        assert_eq!(settings(&["--seed", "7"]).resolve().unwrap().seed, 7);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 3\nk = 30\nepochs = 5\nagg = \"unweighted\"\n[world]\nn_regions = 4\n").unwrap();
        let p = path.to_str().unwrap();
        let cfg = settings(&["--config", p, "--k", "6", "--features", "topo"]).resolve().unwrap();
        assert_eq!((cfg.seed, cfg.k, cfg.epochs), (3, 6, 5));
        assert_eq!(cfg.agg, Aggregation::Unweighted);
        assert_eq!(cfg.features, FeatureKind::Topo);
        let world = cfg.world.unwrap();
        assert_eq!((world.seed, world.n_regions), (3, 4));
        let max = u64::MAX.to_string();
        let cfg = settings(&["--config", p, "--seed", &max]).resolve().unwrap();
        assert_eq!(cfg.seed, u64::MAX);
    }

    #[test]
    fn unknown_config_keys_are_validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "seed = 1\nkay = 3\n").unwrap();
        let r = settings(&["--config", path.to_str().unwrap()]).resolve();
        assert!(matches!(r, Err(CliError::Validation(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(matches!(settings(&["--seed", "1", "--k", "0"]).resolve(), Err(CliError::Validation(_))));
        assert!(matches!(
            settings(&["--seed", "1", "--percent", "3"]).resolve(),
            Err(CliError::Validation(_))
        ));
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("r4_t0001"), "r4_t0001");
        assert_eq!(file_stem("a/b c"), "a_b_c");
    }
}
