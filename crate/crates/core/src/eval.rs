//! Evaluation protocols: zero-shot classification against category prompt
//! embeddings, a linear probe on frozen encoder embeddings, bidirectional
//! cross-modal retrieval, and the landmark-count ablation harness.
//!
//! All rankings break ties by ascending candidate index, so degenerate
//! synthetic scores still evaluate reproducibly.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::data::{load_tensor, DatasetManifest, EmbeddingMatrix, PointCloud};
use crate::encoder::{adamw_step, encode_points, AdamConfig, AdamState, EncoderParams};
use crate::error::{Error, Result};
use crate::numkit::{dot, RngStream};
use crate::sim::SimKind;
use crate::store::precompute;
use crate::synth::{generate, SynthConfig};
use crate::train::{train, LossMode, TrainConfig, TrainRun};

const STREAM_EVAL_VIEW: u64 = 100;

#[derive(Debug, Clone, Serialize)]
pub struct CategoryAccuracy {
    pub category: String,
    pub top1: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub task: String,
    pub topk: Vec<(usize, f64)>,
    pub per_category: Vec<CategoryAccuracy>,
    pub n: usize,
}

impl MetricsReport {
    pub fn accuracy_at(&self, k: usize) -> Option<f64> {
        self.topk.iter().find(|(kk, _)| *kk == k).map(|(_, a)| *a)
    }
}

/// Rank of `target` among `scores` ranked descending, ties broken by
/// ascending index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let st = scores[target];
    let mut rank = 0usize;
    for (j, &s) in scores.iter().enumerate() {
        if s > st || (s == st && j < target) {
            rank += 1;
        }
    }
    rank
}

fn per_category_top1(
    categories: &[String],
    labels: &[usize],
    hits_top1: &[bool],
) -> Vec<CategoryAccuracy> {
    let mut out = Vec::new();
    for (ci, cat) in categories.iter().enumerate() {
        let mut n = 0usize;
        let mut hit = 0usize;
        for (l, h) in labels.iter().zip(hits_top1) {
            if *l == ci {
                n += 1;
                hit += usize::from(*h);
            }
        }
        if n > 0 {
            out.push(CategoryAccuracy {
                category: cat.clone(),
                top1: hit as f64 / n as f64,
                count: n,
            });
        }
    }
    out
}

/// Nearest-prompt classification of precomputed embeddings. `prompts` rows
/// are ordered by category index; `labels` are indices into that order.
pub fn classify_embeddings(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    categories: &[String],
    prompts: &[Vec<f64>],
    ks: &[usize],
) -> Result<MetricsReport> {
    if prompts.len() != categories.len() {
        return Err(Error::CategorySetMismatch(format!(
            "{} prompts for {} categories",
            prompts.len(),
            categories.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= categories.len()) {
        return Err(Error::CategorySetMismatch(format!(
            "label index {bad} outside the category set"
        )));
    }
    let n = embeddings.len();
    let mut hits = vec![0usize; ks.len()];
    let mut hits_top1 = Vec::with_capacity(n);
    for (e, &label) in embeddings.iter().zip(labels) {
        let scores: Vec<f64> = prompts.iter().map(|p| dot(e, p)).collect();
        let rank = rank_of(&scores, label);
        for (hi, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *hi += 1;
            }
        }
        hits_top1.push(rank < 1);
    }
    Ok(MetricsReport {
        task: "zeroshot".into(),
        topk: ks
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| (k, h as f64 / n.max(1) as f64))
            .collect(),
        per_category: per_category_top1(categories, labels, &hits_top1),
        n,
    })
}

/// One evaluation object: id, category, and its stored cloud.
pub struct EvalItem {
    pub id: String,
    pub category: String,
    pub cloud: PointCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSel {
    Train,
    Test,
    All,
}

impl SplitSel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSel::Train),
            "test" => Ok(SplitSel::Test),
            "all" => Ok(SplitSel::All),
            other => Err(Error::ConfigInvalid(format!("unknown split {other}"))),
        }
    }
}

/// Load clouds for the selected split (test falls back to all objects when
/// the dataset has no split file).
pub fn load_eval_items(manifest: &DatasetManifest, sel: SplitSel) -> Result<Vec<EvalItem>> {
    let split = manifest.load_split()?;
    let wanted: Option<HashSet<String>> = match (sel, split) {
        (SplitSel::All, _) | (_, None) => None,
        (SplitSel::Train, Some(s)) => Some(s.train.into_iter().collect()),
        (SplitSel::Test, Some(s)) => Some(s.test.into_iter().collect()),
    };
    let mut items = Vec::new();
    for obj in &manifest.objects {
        if let Some(w) = &wanted {
            if !w.contains(&obj.id) {
                continue;
            }
        }
        let cloud = PointCloud::from_tensor(&load_tensor(&manifest.resolve(&obj.cloud_file))?)?;
        items.push(EvalItem {
            id: obj.id.clone(),
            category: obj.category.clone(),
            cloud,
        });
    }
    Ok(items)
}

fn encode_items(params: &EncoderParams, items: &[EvalItem]) -> Result<Vec<Vec<f64>>> {
    items
        .iter()
        .map(|it| encode_points(params, &it.cloud).map(|(e, _)| e))
        .collect()
}

/// Zero-shot 3D classification: encode each cloud and pick the category
/// whose prompt embedding has the highest cosine.
pub fn zero_shot_classify(
    params: &EncoderParams,
    items: &[EvalItem],
    manifest: &DatasetManifest,
    ks: &[usize],
) -> Result<MetricsReport> {
    let categories: Vec<String> = manifest.categories.iter().map(|c| c.id.clone()).collect();
    let prompt_map = manifest.load_prompts()?;
    let prompts: Vec<Vec<f64>> = categories.iter().map(|c| prompt_map[c].clone()).collect();
    let labels: Vec<usize> = items
        .iter()
        .map(|it| {
            categories
                .iter()
                .position(|c| *c == it.category)
                .ok_or_else(|| Error::CategorySetMismatch(it.category.clone()))
        })
        .collect::<Result<_>>()?;
    let embeddings = encode_items(params, items)?;
    classify_embeddings(&embeddings, &labels, &categories, &prompts, ks)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Also update the encoder during probe training (off by default; the
    /// head alone trains on frozen embeddings).
    pub fine_tune: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 200,
            lr: 0.05,
            fine_tune: false,
        }
    }
}

/// Train a linear head (zero-init, full-batch adaptive steps) on labeled
/// embeddings and report test accuracy. Pure and deterministic.
pub fn probe_embeddings(
    train_set: &[(Vec<f64>, usize)],
    test_set: &[(Vec<f64>, usize)],
    categories: &[String],
    cfg: &ProbeConfig,
    ks: &[usize],
) -> Result<MetricsReport> {
    let c = categories.len();
    if c < 2 {
        return Err(Error::CategorySetMismatch(
            "linear probe needs at least 2 categories".into(),
        ));
    }
    let f = train_set
        .first()
        .map(|(e, _)| e.len())
        .ok_or_else(|| Error::ShapeMismatch("empty probe training set".into()))?;
    // head: C x F weights then C biases, flattened
    let mut head = vec![0.0f64; c * f + c];
    let mut state = AdamState::zeros(head.len());
    let adam = AdamConfig::default();
    let n_train = train_set.len() as f64;
    for epoch in 0..cfg.epochs {
        let mut grads = vec![0.0f64; head.len()];
        for (e, label) in train_set.iter() {
            let label = *label;
            let mut logits = vec![0.0f64; c];
            for ci in 0..c {
                logits[ci] = dot(&head[ci * f..(ci + 1) * f], e) + head[c * f + ci];
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &l in &logits {
                denom += (l - m).exp();
            }
            for ci in 0..c {
                let p = (logits[ci] - m).exp() / denom;
                let g = (p - f64::from(u8::from(ci == label))) / n_train;
                for (gk, ek) in grads[ci * f..(ci + 1) * f].iter_mut().zip(e) {
                    *gk += g * ek;
                }
                grads[c * f + ci] += g;
            }
        }
        let len = head.len();
        adamw_step(
            &mut head,
            &grads,
            &mut state,
            epoch + 1,
            cfg.lr,
            0.0,
            &adam,
            len,
        );
    }

    let n = test_set.len();
    let mut hits = vec![0usize; ks.len()];
    let mut hits_top1 = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (e, label) in test_set.iter() {
        let label = *label;
        let scores: Vec<f64> = (0..c)
            .map(|ci| dot(&head[ci * f..(ci + 1) * f], e) + head[c * f + ci])
            .collect();
        let rank = rank_of(&scores, label);
        for (hi, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *hi += 1;
            }
        }
        hits_top1.push(rank < 1);
        labels.push(label);
    }
    Ok(MetricsReport {
        task: "linear-probe".into(),
        topk: ks
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| (k, h as f64 / n.max(1) as f64))
            .collect(),
        per_category: per_category_top1(categories, &labels, &hits_top1),
        n,
    })
}

/// Linear-probe protocol over the dataset's train/test split. With
/// `fine_tune` off the encoder is frozen and only the head trains; with it
/// on, head and encoder update jointly on the probe objective.
pub fn linear_probe(
    params: &EncoderParams,
    train_items: &[EvalItem],
    test_items: &[EvalItem],
    manifest: &DatasetManifest,
    cfg: &ProbeConfig,
    ks: &[usize],
) -> Result<MetricsReport> {
    let train_ids: HashSet<&str> = train_items.iter().map(|i| i.id.as_str()).collect();
    if let Some(leak) = test_items
        .iter()
        .find(|i| train_ids.contains(i.id.as_str()))
    {
        return Err(Error::SplitLeakage(leak.id.clone()));
    }
    let categories: Vec<String> = manifest.categories.iter().map(|c| c.id.clone()).collect();
    let label_of = |it: &EvalItem| -> Result<usize> {
        categories
            .iter()
            .position(|c| *c == it.category)
            .ok_or_else(|| Error::CategorySetMismatch(it.category.clone()))
    };
    if cfg.fine_tune {
        return probe_fine_tuned(
            params,
            train_items,
            test_items,
            &categories,
            cfg,
            ks,
            &label_of,
        );
    }
    let mut train_set = Vec::with_capacity(train_items.len());
    for it in train_items {
        let (e, _) = encode_points(params, &it.cloud)?;
        train_set.push((e, label_of(it)?));
    }
    let mut test_set = Vec::with_capacity(test_items.len());
    for it in test_items {
        let (e, _) = encode_points(params, &it.cloud)?;
        test_set.push((e, label_of(it)?));
    }
    probe_embeddings(&train_set, &test_set, &categories, cfg, ks)
}

/// Joint head + encoder training on the probe objective, full batch.
fn probe_fine_tuned(
    params: &EncoderParams,
    train_items: &[EvalItem],
    test_items: &[EvalItem],
    categories: &[String],
    cfg: &ProbeConfig,
    ks: &[usize],
    label_of: &dyn Fn(&EvalItem) -> Result<usize>,
) -> Result<MetricsReport> {
    use crate::encoder::{encoder_backward, ParamGrads};
    let c = categories.len();
    if c < 2 {
        return Err(Error::CategorySetMismatch(
            "linear probe needs at least 2 categories".into(),
        ));
    }
    let f = params.cfg.feat_dim;
    let enc_cfg = params.cfg;
    let labels: Vec<usize> = train_items.iter().map(label_of).collect::<Result<_>>()?;
    let enc_len = EncoderParams::flat_len(&enc_cfg);
    // combined flat layout: encoder (temperature slot unused) then head
    let mut flat = params.to_flat();
    flat.resize(enc_len + c * f + c, 0.0);
    let mut state = AdamState::zeros(flat.len());
    let adam = AdamConfig::default();
    let n_train = train_items.len() as f64;
    for epoch in 0..cfg.epochs {
        let enc = EncoderParams::from_flat(enc_cfg, &flat[..enc_len]);
        let head = &flat[enc_len..];
        let mut grads = vec![0.0f64; flat.len()];
        let mut enc_grads = ParamGrads::zeros(&enc_cfg);
        for (it, &label) in train_items.iter().zip(&labels) {
            let (e, cache) = encode_points(&enc, &it.cloud)?;
            let mut logits = vec![0.0f64; c];
            for ci in 0..c {
                logits[ci] = dot(&head[ci * f..(ci + 1) * f], &e) + head[c * f + ci];
            }
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &l in &logits {
                denom += (l - m).exp();
            }
            let mut de = vec![0.0f64; f];
            for ci in 0..c {
                let p = (logits[ci] - m).exp() / denom;
                let g = (p - f64::from(u8::from(ci == label))) / n_train;
                for (gk, ek) in grads[enc_len + ci * f..enc_len + (ci + 1) * f]
                    .iter_mut()
                    .zip(&e)
                {
                    *gk += g * ek;
                }
                grads[enc_len + c * f + ci] += g;
                for (dek, wk) in de.iter_mut().zip(&head[ci * f..(ci + 1) * f]) {
                    *dek += g * wk;
                }
            }
            enc_grads.add_assign(&encoder_backward(&enc, &cache, &de)?);
        }
        grads[..enc_len].copy_from_slice(&enc_grads.to_flat(0.0));
        let len = flat.len();
        adamw_step(
            &mut flat,
            &grads,
            &mut state,
            epoch + 1,
            cfg.lr,
            0.0,
            &adam,
            len,
        );
    }

    let enc = EncoderParams::from_flat(enc_cfg, &flat[..enc_len]);
    let head = &flat[enc_len..];
    let n = test_items.len();
    let mut hits = vec![0usize; ks.len()];
    let mut hits_top1 = Vec::with_capacity(n);
    let mut test_labels = Vec::with_capacity(n);
    for it in test_items {
        let label = label_of(it)?;
        let (e, _) = encode_points(&enc, &it.cloud)?;
        let scores: Vec<f64> = (0..c)
            .map(|ci| dot(&head[ci * f..(ci + 1) * f], &e) + head[c * f + ci])
            .collect();
        let rank = rank_of(&scores, label);
        for (hi, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *hi += 1;
            }
        }
        hits_top1.push(rank < 1);
        test_labels.push(label);
    }
    Ok(MetricsReport {
        task: "linear-probe-finetuned".into(),
        topk: ks
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| (k, h as f64 / n.max(1) as f64))
            .collect(),
        per_category: per_category_top1(categories, &test_labels, &hits_top1),
        n,
    })
}

/// Rank a gallery per query by cosine (descending, index tie-break) and
/// count top-k hits against the one-to-one ground truth.
pub fn cross_modal_retrieval(
    queries: &[Vec<f64>],
    gallery: &[Vec<f64>],
    truth: &[usize],
    ks: &[usize],
    task: &str,
    query_categories: Option<(&[String], &[usize])>,
) -> Result<MetricsReport> {
    if truth.len() != queries.len() {
        return Err(Error::MissingGroundTruth(format!(
            "{} queries but {} ground-truth entries",
            queries.len(),
            truth.len()
        )));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= gallery.len()) {
        return Err(Error::MissingGroundTruth(format!(
            "ground-truth index {bad} outside the gallery"
        )));
    }
    let n = queries.len();
    let mut hits = vec![0usize; ks.len()];
    let mut hits_top1 = Vec::with_capacity(n);
    for (q, &t) in queries.iter().zip(truth) {
        let scores: Vec<f64> = gallery.iter().map(|g| dot(q, g)).collect();
        let rank = rank_of(&scores, t);
        for (hi, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *hi += 1;
            }
        }
        hits_top1.push(rank < 1);
    }
    let per_category = match query_categories {
        Some((cats, labels)) => per_category_top1(cats, labels, &hits_top1),
        None => Vec::new(),
    };
    Ok(MetricsReport {
        task: task.into(),
        topk: ks
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| (k, h as f64 / n.max(1) as f64))
            .collect(),
        per_category,
        n,
    })
}

/// Paired 2D-to-3D and 3D-to-2D retrieval over the given objects: one view
/// embedding per object (seeded draw) against encoded clouds, identity
/// ground truth from the manifest pairing.
pub fn retrieval_protocol(
    params: &EncoderParams,
    manifest: &DatasetManifest,
    items: &[EvalItem],
    seed: u64,
    ks: &[usize],
) -> Result<(MetricsReport, MetricsReport)> {
    let index = manifest.object_index();
    let mut view_rng = RngStream::new(seed, STREAM_EVAL_VIEW);
    let mut view_embs = Vec::with_capacity(items.len());
    for it in items {
        let &oi = index
            .get(it.id.as_str())
            .ok_or_else(|| Error::UnknownObject(it.id.clone()))?;
        let views = EmbeddingMatrix::from_tensor(&load_tensor(
            &manifest.resolve(&manifest.objects[oi].views_file),
        )?)?;
        let r = view_rng.index(views.rows());
        view_embs.push(views.row(r).to_vec());
    }
    let shape_embs = encode_items(params, items)?;
    let truth: Vec<usize> = (0..items.len()).collect();
    let categories: Vec<String> = manifest.categories.iter().map(|c| c.id.clone()).collect();
    let labels: Vec<usize> = items
        .iter()
        .map(|it| {
            categories
                .iter()
                .position(|c| *c == it.category)
                .ok_or_else(|| Error::CategorySetMismatch(it.category.clone()))
        })
        .collect::<Result<_>>()?;
    let img_to_shape = cross_modal_retrieval(
        &view_embs,
        &shape_embs,
        &truth,
        ks,
        "retrieval-2d-to-3d",
        Some((&categories, &labels)),
    )?;
    let shape_to_img = cross_modal_retrieval(
        &shape_embs,
        &view_embs,
        &truth,
        ks,
        "retrieval-3d-to-2d",
        Some((&categories, &labels)),
    )?;
    Ok((img_to_shape, shape_to_img))
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub landmarks: usize,
    pub zero_shot: f64,
    pub fine_tuned: f64,
    pub retrieval: f64,
}

pub struct AblationConfig {
    /// Synthetic template; `landmarks` and `seed` are overridden per cell.
    pub template: SynthConfig,
    pub grid: Vec<usize>,
    pub repeats: usize,
    pub train: TrainConfig,
    pub alpha: f64,
    pub work_dir: PathBuf,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// For each landmark count: regenerate the dataset, precompute the
/// descriptor-based store, retrain with descriptor-weighted negatives, and
/// evaluate. One row per L with medians over the repeats; duplicate grid
/// entries are dropped with a warning string.
pub fn ablate_landmarks(cfg: &AblationConfig) -> Result<(Vec<AblationRow>, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut grid: Vec<usize> = Vec::new();
    for &l in &cfg.grid {
        if grid.contains(&l) {
            warnings.push(format!(
                "duplicate landmark count {l} dropped from the grid"
            ));
        } else {
            grid.push(l);
        }
    }
    grid.sort_unstable();
    if cfg.repeats == 0 {
        return Err(Error::ConfigInvalid(
            "ablation needs at least 1 seed".into(),
        ));
    }

    let mut rows = Vec::with_capacity(grid.len());
    for &l in &grid {
        let mut zs = Vec::new();
        let mut ft = Vec::new();
        let mut rt = Vec::new();
        for rep in 0..cfg.repeats {
            let mut synth = cfg.template.clone();
            synth.landmarks = l;
            synth.seed = cfg.template.seed.wrapping_add(rep as u64);
            let cell = cfg.work_dir.join(format!("L{l:04}-rep{rep}"));
            let data_dir = cell.join("data");
            generate(&synth, &data_dir)?;
            let manifest = DatasetManifest::load(&data_dir.join("manifest.json"))?;
            let store = precompute(&manifest, SimKind::I2l2, cfg.alpha)?;

            let mut tc = cfg.train.clone();
            tc.mode = LossMode::HnI2l2;
            tc.seed = cfg.train.seed.wrapping_add(rep as u64);
            let out = train(&TrainRun {
                config: tc,
                manifest: &manifest,
                store: Some(&store),
                store2: None,
                out_dir: cell.join("run"),
            })?;
            let (params, _) = crate::train::load_checkpoint(&out.final_checkpoint)?;

            let test_items = load_eval_items(&manifest, SplitSel::Test)?;
            let train_items = load_eval_items(&manifest, SplitSel::Train)?;
            let ks = [1usize];
            let z = zero_shot_classify(&params, &test_items, &manifest, &ks)?;
            zs.push(z.accuracy_at(1).unwrap());
            let p = linear_probe(
                &params,
                &train_items,
                &test_items,
                &manifest,
                &ProbeConfig::default(),
                &ks,
            )?;
            ft.push(p.accuracy_at(1).unwrap());
            let (a, b) = retrieval_protocol(
                &params,
                &manifest,
                &test_items,
                tc_seed(&cfg.train, rep),
                &ks,
            )?;
            rt.push(0.5 * (a.accuracy_at(1).unwrap() + b.accuracy_at(1).unwrap()));
        }
        rows.push(AblationRow {
            landmarks: l,
            zero_shot: median(&mut zs),
            fine_tuned: median(&mut ft),
            retrieval: median(&mut rt),
        });
    }
    Ok((rows, warnings))
}

fn tc_seed(train: &TrainConfig, rep: usize) -> u64 {
    train.seed.wrapping_add(rep as u64)
}

/// Report CSV: one row per (task, metric, k).
pub fn write_report_csv(path: &Path, reports: &[&MetricsReport]) -> Result<()> {
    let mut out = String::from("task,metric,k,value,n\n");
    for r in reports {
        for (k, acc) in &r.topk {
            out.push_str(&format!("{},overall,{},{:.6},{}\n", r.task, k, acc, r.n));
        }
        for c in &r.per_category {
            out.push_str(&format!(
                "{},category:{},1,{:.6},{}\n",
                r.task, c.category, c.top1, c.count
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Ablation table CSV in the landmark-count layout.
pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut out = String::from("L,zero_shot,fine_tuned,retrieval\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            r.landmarks, r.zero_shot, r.fine_tuned, r.retrieval
        ));
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Aligned text rendering of a report for terminal output.
pub fn format_report(r: &MetricsReport) -> String {
    let mut s = format!("{} (n = {})\n", r.task, r.n);
    for (k, acc) in &r.topk {
        s.push_str(&format!("  top-{k:<3} {:.4}\n", acc));
    }
    if !r.per_category.is_empty() {
        s.push_str("  per category (top-1):\n");
        for c in &r.per_category {
            s.push_str(&format!(
                "    {:<16} {:.4}  ({} samples)\n",
                c.category, c.top1, c.count
            ));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::l2_normalize;

    #[test]
    fn rank_breaks_ties_by_index() {
        let scores = vec![0.5, 0.9, 0.9, 0.1];
        assert_eq!(rank_of(&scores, 1), 0);
        assert_eq!(rank_of(&scores, 2), 1); // tie with index 1
        assert_eq!(rank_of(&scores, 0), 2);
        assert_eq!(rank_of(&scores, 3), 3);
    }

    fn unit(v: &[f64]) -> Vec<f64> {
        l2_normalize(v).unwrap()
    }

    #[test]
    fn classify_planted_centroids_is_perfect() {
        // embeddings sitting exactly on their prompts
        let prompts = vec![unit(&[1.0, 0.0, 0.0]), unit(&[0.0, 1.0, 0.0])];
        let cats = vec!["a".to_string(), "b".to_string()];
        let embs = vec![
            unit(&[0.9, 0.1, 0.0]),
            unit(&[0.1, 0.9, 0.0]),
            unit(&[0.8, -0.1, 0.1]),
        ];
        let labels = vec![0, 1, 0];
        let r = classify_embeddings(&embs, &labels, &cats, &prompts, &[1, 2]).unwrap();
        assert_eq!(r.accuracy_at(1).unwrap(), 1.0);
        assert_eq!(r.accuracy_at(2).unwrap(), 1.0);
    }

    #[test]
    fn topk_at_category_count_is_total() {
        let prompts = vec![unit(&[1.0, 0.0]), unit(&[0.0, 1.0])];
        let cats = vec!["a".to_string(), "b".to_string()];
        // deliberately misclassified at top-1
        let embs = vec![unit(&[0.0, 1.0])];
        let labels = vec![0];
        let r = classify_embeddings(&embs, &labels, &cats, &prompts, &[1, 2]).unwrap();
        assert_eq!(r.accuracy_at(1).unwrap(), 0.0);
        assert_eq!(r.accuracy_at(2).unwrap(), 1.0);
    }

    #[test]
    fn single_category_rejected_by_probe_but_perfect_for_zeroshot() {
        let prompts = vec![unit(&[1.0, 0.0])];
        let cats = vec!["only".to_string()];
        let embs = vec![unit(&[0.3, 0.7]), unit(&[-0.2, 0.5])];
        let labels = vec![0, 0];
        let r = classify_embeddings(&embs, &labels, &cats, &prompts, &[1]).unwrap();
        assert_eq!(r.accuracy_at(1).unwrap(), 1.0);
        assert!(matches!(
            probe_embeddings(
                &[(embs[0].clone(), 0)],
                &[(embs[1].clone(), 0)],
                &cats,
                &ProbeConfig::default(),
                &[1]
            ),
            Err(Error::CategorySetMismatch(_))
        ));
    }

    #[test]
    fn zero_shot_invariant_to_common_score_rescale() {
        let mut rng = RngStream::new(13, 0);
        let cats: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let prompts: Vec<Vec<f64>> = (0..4).map(|_| unit(&rng.normal_vec(8))).collect();
        let embs: Vec<Vec<f64>> = (0..20).map(|_| unit(&rng.normal_vec(8))).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let base = classify_embeddings(&embs, &labels, &cats, &prompts, &[1]).unwrap();
        // scaling every embedding scales all prompt scores uniformly
        let scaled: Vec<Vec<f64>> = embs
            .iter()
            .map(|e| e.iter().map(|x| 3.5 * x).collect())
            .collect();
        let after = classify_embeddings(&scaled, &labels, &cats, &prompts, &[1]).unwrap();
        assert_eq!(base.accuracy_at(1), after.accuracy_at(1));
    }

    #[test]
    fn probe_separable_data_is_perfect() {
        let cats = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let mut rng = RngStream::new(14, 0);
        let mut point = |ci: usize| {
            let mut v = vec![0.0; 6];
            v[ci] = 1.0;
            for x in v.iter_mut() {
                *x += 0.05 * rng.normal();
            }
            (unit(&v), ci)
        };
        let train: Vec<(Vec<f64>, usize)> = (0..60).map(|i| point(i % 3)).collect();
        let test: Vec<(Vec<f64>, usize)> = (0..30).map(|i| point(i % 3)).collect();
        let r = probe_embeddings(&train, &test, &cats, &ProbeConfig::default(), &[1]).unwrap();
        assert_eq!(r.accuracy_at(1).unwrap(), 1.0);
    }

    #[test]
    fn probe_zero_epochs_is_chance_on_balanced_data() {
        let cats = vec![
            "a".to_string(),
            "b".to_string(),
            "c".to_string(),
            "d".to_string(),
        ];
        let mut rng = RngStream::new(15, 0);
        let data: Vec<(Vec<f64>, usize)> =
            (0..40).map(|i| (unit(&rng.normal_vec(8)), i % 4)).collect();
        let cfg = ProbeConfig {
            epochs: 0,
            lr: 0.1,
            fine_tune: false,
        };
        let r = probe_embeddings(&data, &data, &cats, &cfg, &[1]).unwrap();
        // zero-init head scores every class 0; ties resolve to class 0
        assert!((r.accuracy_at(1).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn probe_shuffled_labels_near_chance() {
        let cats: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
        let mut accs = Vec::new();
        for seed in 0..5 {
            let mut rng = RngStream::new(16 + seed, 0);
            let train: Vec<(Vec<f64>, usize)> = (0..80)
                .map(|_| (unit(&rng.normal_vec(8)), rng.index(4)))
                .collect();
            let test: Vec<(Vec<f64>, usize)> = (0..80)
                .map(|_| (unit(&rng.normal_vec(8)), rng.index(4)))
                .collect();
            let r = probe_embeddings(&train, &test, &cats, &ProbeConfig::default(), &[1]).unwrap();
            accs.push(r.accuracy_at(1).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!(
            (mean - 0.25).abs() < 0.05,
            "chance-level check failed: mean {mean} over {accs:?}"
        );
    }

    #[test]
    fn retrieval_identity_with_orthogonal_gallery() {
        let queries = vec![unit(&[1.0, 0.0, 0.0]), unit(&[0.0, 1.0, 0.0])];
        let gallery = queries.clone();
        let truth = vec![0, 1];
        let r = cross_modal_retrieval(&queries, &gallery, &truth, &[1], "retrieval", None).unwrap();
        assert_eq!(r.accuracy_at(1).unwrap(), 1.0);
    }

    #[test]
    fn retrieval_singleton_gallery() {
        let queries = vec![unit(&[0.3, 0.7])];
        let gallery = vec![unit(&[-0.5, 0.2])];
        let r = cross_modal_retrieval(&queries, &gallery, &[0], &[1], "retrieval", None).unwrap();
        assert_eq!(r.accuracy_at(1).unwrap(), 1.0);
    }

    #[test]
    fn retrieval_rejects_bad_truth() {
        let queries = vec![unit(&[1.0, 0.0])];
        let gallery = vec![unit(&[1.0, 0.0])];
        assert!(matches!(
            cross_modal_retrieval(&queries, &gallery, &[3], &[1], "r", None),
            Err(Error::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn topk_non_decreasing_and_permutation_stable() {
        let mut rng = RngStream::new(17, 0);
        let queries: Vec<Vec<f64>> = (0..12).map(|_| unit(&rng.normal_vec(6))).collect();
        let gallery: Vec<Vec<f64>> = (0..12).map(|_| unit(&rng.normal_vec(6))).collect();
        let truth: Vec<usize> = (0..12).collect();
        let ks = [1usize, 2, 3, 5, 8, 12];
        let r = cross_modal_retrieval(&queries, &gallery, &truth, &ks, "r", None).unwrap();
        for w in r.topk.windows(2) {
            assert!(w[0].1 <= w[1].1, "top-k accuracy must be non-decreasing");
        }

        // permute the gallery, remap the ground truth, expect equal accuracy
        let perm: Vec<usize> = vec![5, 0, 7, 2, 9, 4, 11, 6, 1, 8, 3, 10];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| gallery[p].clone()).collect();
        let inverse: Vec<usize> = {
            let mut inv = vec![0usize; perm.len()];
            for (new_idx, &old) in perm.iter().enumerate() {
                inv[old] = new_idx;
            }
            inv
        };
        let truth2: Vec<usize> = truth.iter().map(|&t| inverse[t]).collect();
        let r2 = cross_modal_retrieval(&queries, &permuted, &truth2, &ks, "r", None).unwrap();
        // scores here are generic (no exact ties), so accuracies match exactly
        assert_eq!(r.topk, r2.topk);
    }

    #[test]
    fn split_leakage_detected() {
        let item = |id: &str| EvalItem {
            id: id.into(),
            category: "cat00".into(),
            cloud: PointCloud {
                points: vec![[0.0, 0.0, 0.5]; 8],
            },
        };
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            seed: 30,
            ..SynthConfig::default()
        };
        generate(&cfg, dir.path()).unwrap();
        let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let mut rng = RngStream::new(1, 0);
        let params = EncoderParams::init(
            crate::encoder::EncoderConfig {
                hidden1: 4,
                hidden2: 6,
                feat_dim: manifest.feat_dim,
            },
            0.07,
            &mut rng,
        );
        let err = linear_probe(
            &params,
            &[item("x")],
            &[item("x")],
            &manifest,
            &ProbeConfig::default(),
            &[1],
        )
        .unwrap_err();
        assert!(matches!(err, Error::SplitLeakage(_)));
    }
}
