use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use hn3d::data::{validate_dataset, DatasetManifest};
use hn3d::error::{Error, Result};
use hn3d::eval::{
    ablate_landmarks, format_report, linear_probe, load_eval_items, retrieval_protocol,
    write_ablation_csv, write_report_csv, zero_shot_classify, AblationConfig, MetricsReport,
    ProbeConfig, SplitSel,
};
use hn3d::sim::{scorer, FeatureBank, SimKind};
use hn3d::store::SimStore;
use hn3d::synth::{generate, SynthConfig};
use hn3d::train::{load_checkpoint, LossMode, TrainConfig, TrainRun};

/// HN3D_THREADS caps worker threads; absent means the logical core count.
pub fn init_thread_pool() {
    if let Ok(v) = std::env::var("HN3D_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn load_base<T: DeserializeOwned + Default>(config: Option<&Path>) -> Result<T> {
    match config {
        None => Ok(T::default()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))
        }
    }
}

fn echo_config<T: Serialize>(cfg: &T) {
    eprintln!(
        "resolved config: {}",
        serde_json::to_string(cfg).expect("config serializes")
    );
}

fn write_config_json<T: Serialize>(cfg: &T, path: &Path) -> Result<()> {
    fs::write(
        path,
        serde_json::to_string_pretty(cfg).expect("config serializes"),
    )
    .map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Sibling config path for file-valued outputs (`table.csv.config.json`).
fn sibling_config(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.config.json", out.display()))
}

macro_rules! override_field {
    ($base:expr, $($field:ident : $arg:expr),+ $(,)?) => {
        $(if let Some(v) = $arg { $base.$field = v; })+
    };
}

// ---------------------------------------------------------------------------
// gen-synthetic

#[derive(clap::Args)]
pub struct GenArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    categories: Option<usize>,
    #[arg(long = "per-cat")]
    per_cat: Option<usize>,
    #[arg(long)]
    subtypes: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    feat: Option<usize>,
    #[arg(long)]
    landmarks: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long = "texture-dim")]
    texture_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "view-noise")]
    view_noise: Option<f64>,
    #[arg(long = "texture-scale")]
    texture_scale: Option<f64>,
    #[arg(long = "subtype-scale")]
    subtype_scale: Option<f64>,
    #[arg(long = "cloud-jitter")]
    cloud_jitter: Option<f64>,
    #[arg(long = "param-jitter")]
    param_jitter: Option<f64>,
    #[arg(long = "holdout-frac")]
    holdout_frac: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn gen_synthetic(args: GenArgs) -> Result<i32> {
    let mut cfg: SynthConfig = load_base(args.config.as_deref())?;
    override_field!(cfg,
        categories: args.categories,
        per_category: args.per_cat,
        subtypes: args.subtypes,
        views: args.views,
        feat_dim: args.feat,
        landmarks: args.landmarks,
        points: args.points,
        texture_dim: args.texture_dim,
        seed: args.seed,
        view_noise: args.view_noise,
        texture_scale: args.texture_scale,
        subtype_scale: args.subtype_scale,
        cloud_jitter: args.cloud_jitter,
        param_jitter: args.param_jitter,
        holdout_frac: args.holdout_frac,
    );
    echo_config(&cfg);
    generate(&cfg, &args.out)?;
    write_config_json(&cfg, &args.out.join("resolved_config.json"))?;
    println!(
        "generated {} categories x {} objects into {}",
        cfg.categories,
        cfg.per_category,
        args.out.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// precompute

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct PrecomputeConfig {
    data: PathBuf,
    sim: String,
    alpha: f64,
    landmarks_from_manifest: bool,
}

impl Default for PrecomputeConfig {
    fn default() -> Self {
        PrecomputeConfig {
            data: PathBuf::new(),
            sim: "i2i".into(),
            alpha: 0.25,
            landmarks_from_manifest: true,
        }
    }
}

#[derive(clap::Args)]
pub struct PrecomputeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Similarity kind to precompute: i2i or i2l2.
    #[arg(long)]
    sim: Option<String>,
    /// Cross-category constant similarity.
    #[arg(long)]
    alpha: Option<f64>,
    /// Take landmark files from the manifest's category entries.
    #[arg(long = "landmarks-from-manifest", default_value_t = true)]
    landmarks_from_manifest: bool,
    #[arg(long)]
    out: PathBuf,
}

pub fn precompute(args: PrecomputeArgs) -> Result<i32> {
    let mut cfg: PrecomputeConfig = load_base(args.config.as_deref())?;
    override_field!(cfg, data: args.data, sim: args.sim, alpha: args.alpha);
    cfg.landmarks_from_manifest = args.landmarks_from_manifest;
    if cfg.data.as_os_str().is_empty() {
        return Err(Error::ConfigInvalid("--data is required".into()));
    }
    echo_config(&cfg);
    let kind = SimKind::parse(&cfg.sim)
        .map_err(|_| Error::ConfigInvalid(format!("--sim must be i2i or i2l2, got {}", cfg.sim)))?;
    let manifest = DatasetManifest::load(&cfg.data.join("manifest.json"))?;
    let store = hn3d::store::precompute(&manifest, kind, cfg.alpha)?;
    store.save(&args.out)?;
    write_config_json(&cfg, &args.out.join("resolved_config.json"))?;
    println!(
        "stored {} similarities for {} objects in {}",
        kind,
        store.object_count(),
        args.out.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct TrainCliConfig {
    data: PathBuf,
    simstore: Option<PathBuf>,
    simstore2: Option<PathBuf>,
    train: TrainConfig,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        TrainCliConfig {
            data: PathBuf::new(),
            simstore: None,
            simstore2: None,
            train: TrainConfig::default(),
        }
    }
}

#[derive(clap::Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Loss mode: plain, hn-i2i, hn-i2l2, or hn-avg.
    #[arg(long)]
    mode: Option<String>,
    /// Similarity store (the i2i store for hn-avg).
    #[arg(long)]
    simstore: Option<PathBuf>,
    /// Second similarity store (the i2l2 store, hn-avg only).
    #[arg(long)]
    simstore2: Option<PathBuf>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "warmup-frac")]
    warmup_frac: Option<f64>,
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    #[arg(long)]
    hidden1: Option<usize>,
    #[arg(long)]
    hidden2: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

pub fn train(args: TrainArgs) -> Result<i32> {
    let mut cfg: TrainCliConfig = load_base(args.config.as_deref())?;
    if let Some(m) = args.mode {
        cfg.train.mode = LossMode::parse(&m)?;
    }
    override_field!(cfg.train,
        batch_size: args.batch,
        epochs: args.epochs,
        base_lr: args.lr,
        warmup_frac: args.warmup_frac,
        weight_decay: args.weight_decay,
        hidden1: args.hidden1,
        hidden2: args.hidden2,
        seed: args.seed,
    );
    override_field!(cfg, data: args.data);
    if args.simstore.is_some() {
        cfg.simstore = args.simstore;
    }
    if args.simstore2.is_some() {
        cfg.simstore2 = args.simstore2;
    }
    if cfg.data.as_os_str().is_empty() {
        return Err(Error::ConfigInvalid("--data is required".into()));
    }
    match cfg.train.mode {
        LossMode::Plain => {}
        LossMode::HnI2i | LossMode::HnI2l2 => {
            if cfg.simstore.is_none() {
                return Err(Error::ConfigInvalid(format!(
                    "mode {} requires --simstore",
                    cfg.train.mode.as_str()
                )));
            }
        }
        LossMode::HnAvg => {
            if cfg.simstore.is_none() || cfg.simstore2.is_none() {
                return Err(Error::ConfigInvalid(
                    "mode hn-avg requires --simstore (i2i) and --simstore2 (i2l2)".into(),
                ));
            }
        }
    }
    echo_config(&cfg);

    let manifest = DatasetManifest::load(&cfg.data.join("manifest.json"))?;
    let store = cfg
        .simstore
        .as_ref()
        .map(|d| SimStore::load(d, &manifest))
        .transpose()?;
    let store2 = cfg
        .simstore2
        .as_ref()
        .map(|d| SimStore::load(d, &manifest))
        .transpose()?;
    let outcome = hn3d::train::train(&TrainRun {
        config: cfg.train.clone(),
        manifest: &manifest,
        store: store.as_ref(),
        store2: store2.as_ref(),
        out_dir: args.out.clone(),
    })?;
    write_config_json(&cfg, &args.out.join("resolved_config.json"))?;
    let last = outcome.metrics.last();
    println!(
        "trained {} steps; final loss {}; checkpoint at {}",
        outcome.total_steps,
        last.map(|m| format!("{:.6}", m.loss)).unwrap_or_default(),
        outcome.final_checkpoint.display()
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    task: String,
    ckpt: PathBuf,
    data: PathBuf,
    topk: Vec<usize>,
    seed: u64,
    split: String,
    probe_epochs: usize,
    probe_lr: f64,
    probe_fine_tune: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let probe = ProbeConfig::default();
        EvalConfig {
            task: String::new(),
            ckpt: PathBuf::new(),
            data: PathBuf::new(),
            topk: vec![1, 5],
            seed: 0,
            split: "test".into(),
            probe_epochs: probe.epochs,
            probe_lr: probe.lr,
            probe_fine_tune: probe.fine_tune,
        }
    }
}

#[derive(clap::Args)]
pub struct EvalArgs {
    /// Task: zeroshot, retrieval, or linear-probe.
    task: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated k values, e.g. 1,5.
    #[arg(long)]
    topk: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Objects to evaluate: train, test, or all.
    #[arg(long)]
    split: Option<String>,
    #[arg(long = "probe-epochs")]
    probe_epochs: Option<usize>,
    #[arg(long = "probe-lr")]
    probe_lr: Option<f64>,
    /// Fine-tune the encoder during the linear probe (frozen by default).
    #[arg(long = "fine-tune")]
    fine_tune: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_topk(s: &str) -> Result<Vec<usize>> {
    let ks: std::result::Result<Vec<usize>, _> =
        s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    let ks = ks.map_err(|_| Error::ConfigInvalid(format!("bad --topk list {s:?}")))?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::ConfigInvalid(
            "--topk needs positive integers".into(),
        ));
    }
    Ok(ks)
}

pub fn eval(args: EvalArgs) -> Result<i32> {
    let mut cfg: EvalConfig = load_base(args.config.as_deref())?;
    if let Some(t) = args.task {
        cfg.task = t;
    }
    override_field!(cfg,
        ckpt: args.ckpt,
        data: args.data,
        seed: args.seed,
        split: args.split,
        probe_epochs: args.probe_epochs,
        probe_lr: args.probe_lr,
    );
    if let Some(t) = args.topk.as_deref() {
        cfg.topk = parse_topk(t)?;
    }
    if args.fine_tune {
        cfg.probe_fine_tune = true;
    }
    if cfg.task.is_empty() || cfg.ckpt.as_os_str().is_empty() || cfg.data.as_os_str().is_empty() {
        return Err(Error::ConfigInvalid(
            "eval needs a task plus --ckpt and --data".into(),
        ));
    }
    echo_config(&cfg);

    let (params, _meta) = load_checkpoint(&cfg.ckpt)?;
    let manifest = DatasetManifest::load(&cfg.data.join("manifest.json"))?;
    let sel = SplitSel::parse(&cfg.split)?;
    let items = load_eval_items(&manifest, sel)?;
    let ks = &cfg.topk;

    let reports: Vec<MetricsReport> = match cfg.task.as_str() {
        "zeroshot" => vec![zero_shot_classify(&params, &items, &manifest, ks)?],
        "retrieval" => {
            let (a, b) = retrieval_protocol(&params, &manifest, &items, cfg.seed, ks)?;
            let avg = MetricsReport {
                task: "retrieval-avg".into(),
                topk: a
                    .topk
                    .iter()
                    .zip(&b.topk)
                    .map(|(&(k, x), &(_, y))| (k, 0.5 * (x + y)))
                    .collect(),
                per_category: Vec::new(),
                n: a.n,
            };
            vec![a, b, avg]
        }
        "linear-probe" => {
            let train_items = load_eval_items(&manifest, SplitSel::Train)?;
            let probe = ProbeConfig {
                epochs: cfg.probe_epochs,
                lr: cfg.probe_lr,
                fine_tune: cfg.probe_fine_tune,
            };
            let test_items = match sel {
                SplitSel::Train => {
                    return Err(Error::ConfigInvalid(
                        "linear-probe evaluates the test split".into(),
                    ))
                }
                _ => load_eval_items(&manifest, SplitSel::Test)?,
            };
            vec![linear_probe(
                &params,
                &train_items,
                &test_items,
                &manifest,
                &probe,
                ks,
            )?]
        }
        other => {
            return Err(Error::ConfigInvalid(format!(
                "unknown eval task {other}; expected zeroshot, retrieval, or linear-probe"
            )))
        }
    };

    let refs: Vec<&MetricsReport> = reports.iter().collect();
    write_report_csv(&args.out, &refs)?;
    write_config_json(&cfg, &sibling_config(&args.out))?;
    for r in &reports {
        print!("{}", format_report(r));
    }
    println!("report written to {}", args.out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// ablate-landmarks

#[derive(Debug, Serialize, Deserialize)]
#[serde(default)]
struct AblateCliConfig {
    data_template: PathBuf,
    grid: Vec<usize>,
    seeds: usize,
    alpha: f64,
    train: TrainConfig,
    work_dir: Option<PathBuf>,
}

impl Default for AblateCliConfig {
    fn default() -> Self {
        AblateCliConfig {
            data_template: PathBuf::new(),
            grid: vec![32, 64, 128, 256, 512],
            seeds: 3,
            alpha: 0.25,
            train: TrainConfig {
                batch_size: 16,
                epochs: 10,
                ..TrainConfig::default()
            },
            work_dir: None,
        }
    }
}

#[derive(clap::Args)]
pub struct AblateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON file holding the synthetic-dataset template.
    #[arg(long = "data-template")]
    data_template: Option<PathBuf>,
    /// Comma-separated landmark counts.
    #[arg(long)]
    grid: Option<String>,
    /// Number of repeats; the table reports medians.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long = "work-dir")]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn ablate(args: AblateArgs) -> Result<i32> {
    let mut cfg: AblateCliConfig = load_base(args.config.as_deref())?;
    override_field!(cfg,
        data_template: args.data_template,
        seeds: args.seeds,
        alpha: args.alpha,
    );
    if let Some(g) = args.grid.as_deref() {
        cfg.grid = parse_topk(g)?;
    }
    override_field!(cfg.train,
        batch_size: args.batch,
        epochs: args.epochs,
        base_lr: args.lr,
    );
    if args.work_dir.is_some() {
        cfg.work_dir = args.work_dir;
    }
    if cfg.data_template.as_os_str().is_empty() {
        return Err(Error::ConfigInvalid("--data-template is required".into()));
    }
    echo_config(&cfg);

    let template: SynthConfig = load_base(Some(&cfg.data_template))?;
    let work_dir = cfg
        .work_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.work", args.out.display())));
    let (rows, warnings) = ablate_landmarks(&AblationConfig {
        template,
        grid: cfg.grid.clone(),
        repeats: cfg.seeds,
        train: cfg.train.clone(),
        alpha: cfg.alpha,
        work_dir,
    })?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_ablation_csv(&args.out, &rows)?;
    write_config_json(&cfg, &sibling_config(&args.out))?;
    println!(
        "{:>6} {:>10} {:>11} {:>10}",
        "L", "zero-shot", "fine-tuned", "retrieval"
    );
    for r in &rows {
        println!(
            "{:>6} {:>10.4} {:>11.4} {:>10.4}",
            r.landmarks, r.zero_shot, r.fine_tuned, r.retrieval
        );
    }
    println!("table written to {}", args.out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// sim-rank

#[derive(clap::Args)]
pub struct SimRankArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "query-id")]
    query_id: String,
    /// Measure: i2i, i2l2, avg, chamfer, or emd.
    #[arg(long, default_value = "i2i")]
    sim: String,
    #[arg(long, default_value_t = 5)]
    topk: usize,
}

pub fn sim_rank(args: SimRankArgs) -> Result<i32> {
    echo_config(&serde_json::json!({
        "data": args.data,
        "query_id": args.query_id,
        "sim": args.sim,
        "topk": args.topk,
    }));
    let measure = scorer(&args.sim)?;
    let manifest = DatasetManifest::load(&args.data.join("manifest.json"))?;
    let bank = FeatureBank::load(&manifest, measure.needs_landmarks(), measure.needs_clouds())?;
    let query = bank.get(&args.query_id)?;
    let mut scored: Vec<(usize, &str, f64)> = Vec::new();
    for (i, rec) in bank.records().iter().enumerate() {
        if rec.id == query.id || rec.category != query.category {
            continue;
        }
        scored.push((i, &rec.id, measure.score(query, rec)?));
    }
    // rank best-first; ties keep dataset order
    if measure.higher_is_better() {
        scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    } else {
        scored.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)));
    }
    scored.truncate(args.topk);
    println!(
        "query {} (category {}), measure {}:",
        query.id,
        query.category,
        measure.name()
    );
    for (rank, (_, id, score)) in scored.iter().enumerate() {
        println!("{:>4}  {:<24} {:.6}", rank + 1, id, score);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// validate

#[derive(clap::Args)]
pub struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
}

pub fn validate(args: ValidateArgs) -> Result<i32> {
    echo_config(&serde_json::json!({ "data": args.data }));
    let manifest = DatasetManifest::load(&args.data.join("manifest.json"))?;
    let report = validate_dataset(&manifest);
    println!(
        "checked {} objects: {}",
        report.checked_objects,
        if report.ok { "ok" } else { "violations found" }
    );
    for v in &report.violations {
        match &v.object_id {
            Some(id) => println!("  {id}: {}", v.message),
            None => println!("  (dataset): {}", v.message),
        }
    }
    Ok(if report.ok { 0 } else { 2 })
}
