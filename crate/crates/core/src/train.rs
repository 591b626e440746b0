//! Contrastive training loop: frozen view embeddings on one side, the
//! trainable point encoder on the other, with mode-dependent batch weights
//! from precomputed similarity stores.
//!
//! Every random choice (init, shuffling, view picks, augmentations) comes
//! from a named stream of the run seed, and per-sample work runs on
//! per-sample streams, so the loop is bit-reproducible at any thread count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_tensor, save_tensor, DatasetManifest, EmbeddingMatrix, PointCloud};
use crate::encoder::{
    adamw_step, augment, encode_points, encoder_backward, lr_schedule, AdamConfig, AdamState,
    AugmentConfig, EncoderConfig, EncoderParams, ParamGrads, ScheduleConfig,
};
use crate::error::{Error, Result};
use crate::loss::{
    avg_weights, batch_weights, hn_weighted_loss, plain_contrastive_loss, BatchSim, BatchWeights,
    LossOutput,
};
use crate::numkit::{Mat, RngStream};
use crate::sim::SimKind;
use crate::store::{dataset_fingerprint, SimStore};

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_VIEWPICK: u64 = 2;
/// Per-sample augmentation streams live above this base; everything below
/// 2^32 is reserved for the named streams.
const STREAM_AUG_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    #[serde(rename = "plain")]
    Plain,
    #[serde(rename = "hn-i2i")]
    HnI2i,
    #[serde(rename = "hn-i2l2")]
    HnI2l2,
    #[serde(rename = "hn-avg")]
    HnAvg,
}

impl LossMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(LossMode::Plain),
            "hn-i2i" => Ok(LossMode::HnI2i),
            "hn-i2l2" => Ok(LossMode::HnI2l2),
            "hn-avg" => Ok(LossMode::HnAvg),
            other => Err(Error::ConfigInvalid(format!("unknown loss mode {other}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::Plain => "plain",
            LossMode::HnI2i => "hn-i2i",
            LossMode::HnI2l2 => "hn-i2l2",
            LossMode::HnAvg => "hn-avg",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: LossMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_min: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub hidden1: usize,
    pub hidden2: usize,
    pub tau_init: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: LossMode::Plain,
            batch_size: 64,
            epochs: 30,
            base_lr: 1e-3,
            lr_min: 0.0,
            warmup_frac: 0.1,
            weight_decay: 0.01,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            hidden1: 64,
            hidden2: 128,
            tau_init: crate::loss::DEFAULT_TAU,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::ConfigInvalid(
                "contrastive training needs batch_size >= 2".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::ConfigInvalid("epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::ConfigInvalid(
                "warmup_frac must lie in [0, 1)".into(),
            ));
        }
        if !self.base_lr.is_finite() || self.base_lr <= 0.0 {
            return Err(Error::ConfigInvalid("base_lr must be positive".into()));
        }
        if !self.tau_init.is_finite() || self.tau_init <= 0.0 {
            return Err(Error::ConfigInvalid("tau_init must be positive".into()));
        }
        Ok(())
    }
}

pub struct TrainRun<'a> {
    pub config: TrainConfig,
    pub manifest: &'a DatasetManifest,
    /// Similarity store for hn-i2i / hn-i2l2, the i2i store for hn-avg.
    pub store: Option<&'a SimStore>,
    /// The i2l2 store for hn-avg.
    pub store2: Option<&'a SimStore>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub logit_scale: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub shuffle_pos: u64,
    pub viewpick_pos: u64,
    pub next_aug_stream: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub encoder: EncoderConfig,
    pub step: usize,
    pub epoch: usize,
    pub rng: RngState,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub metrics: Vec<StepMetrics>,
    pub total_steps: usize,
}

fn require_store<'a>(
    run: &'a TrainRun,
    which: &str,
    kind: SimKind,
    store: Option<&'a SimStore>,
    fingerprint: &str,
) -> Result<&'a SimStore> {
    let store = store.ok_or_else(|| {
        Error::ConfigInvalid(format!(
            "mode {} requires a {which} similarity store",
            run.config.mode.as_str()
        ))
    })?;
    if store.kind != kind {
        return Err(Error::ConfigInvalid(format!(
            "{which} store holds {} similarities, mode {} needs {kind}",
            store.kind,
            run.config.mode.as_str()
        )));
    }
    if store.fingerprint != fingerprint {
        return Err(Error::FingerprintMismatch {
            store: store.fingerprint.clone(),
            dataset: fingerprint.to_string(),
        });
    }
    Ok(store)
}

/// Run the training loop; writes per-epoch checkpoints, a final checkpoint,
/// and `metrics.csv` under `out_dir`.
pub fn train(run: &TrainRun) -> Result<TrainOutcome> {
    run.config.validate()?;
    let cfg = &run.config;
    let manifest = run.manifest;
    let fingerprint = dataset_fingerprint(manifest)?;

    let (store_a, store_b) = match cfg.mode {
        LossMode::Plain => (None, None),
        LossMode::HnI2i => (
            Some(require_store(
                run,
                "i2i",
                SimKind::I2i,
                run.store,
                &fingerprint,
            )?),
            None,
        ),
        LossMode::HnI2l2 => (
            Some(require_store(
                run,
                "i2l2",
                SimKind::I2l2,
                run.store,
                &fingerprint,
            )?),
            None,
        ),
        LossMode::HnAvg => (
            Some(require_store(
                run,
                "i2i",
                SimKind::I2i,
                run.store,
                &fingerprint,
            )?),
            Some(require_store(
                run,
                "i2l2",
                SimKind::I2l2,
                run.store2,
                &fingerprint,
            )?),
        ),
    };

    // train on the split's train ids when a split exists, otherwise all
    let split = manifest.load_split()?;
    let train_ids: Vec<String> = match &split {
        Some(s) => s.train.clone(),
        None => manifest.objects.iter().map(|o| o.id.clone()).collect(),
    };
    if train_ids.len() < cfg.batch_size {
        return Err(Error::ConfigInvalid(format!(
            "batch_size {} exceeds the {} training objects",
            cfg.batch_size,
            train_ids.len()
        )));
    }

    let index = manifest.object_index();
    let mut views: Vec<EmbeddingMatrix> = Vec::with_capacity(train_ids.len());
    let mut clouds: Vec<PointCloud> = Vec::with_capacity(train_ids.len());
    for id in &train_ids {
        let &oi = index
            .get(id.as_str())
            .ok_or_else(|| Error::UnknownObject(id.clone()))?;
        let obj = &manifest.objects[oi];
        views.push(EmbeddingMatrix::from_tensor(&load_tensor(
            &manifest.resolve(&obj.views_file),
        )?)?);
        clouds.push(PointCloud::from_tensor(&load_tensor(
            &manifest.resolve(&obj.cloud_file),
        )?)?);
    }

    let n_train = train_ids.len();
    let full = n_train / cfg.batch_size;
    let rem = n_train % cfg.batch_size;
    let steps_per_epoch = full + usize::from(rem >= 2);
    if steps_per_epoch == 0 {
        return Err(Error::ConfigInvalid(
            "no full batch fits the train set".into(),
        ));
    }
    let total_steps = steps_per_epoch * cfg.epochs;
    let schedule = ScheduleConfig {
        base_lr: cfg.base_lr,
        lr_min: cfg.lr_min,
        warmup_steps: (cfg.warmup_frac * total_steps as f64).round() as usize,
        total_steps,
    };

    let enc_cfg = EncoderConfig {
        hidden1: cfg.hidden1,
        hidden2: cfg.hidden2,
        feat_dim: manifest.feat_dim,
    };
    let mut init_rng = RngStream::new(cfg.seed, STREAM_INIT);
    let mut params = EncoderParams::init(enc_cfg, cfg.tau_init, &mut init_rng);
    let mut flat = params.to_flat();
    let no_decay_from = flat.len() - 1; // temperature exempt from decay
    let mut adam_state = AdamState::zeros(flat.len());

    let mut shuffle_rng = RngStream::new(cfg.seed, STREAM_SHUFFLE);
    let mut view_rng = RngStream::new(cfg.seed, STREAM_VIEWPICK);
    let mut aug_counter: u64 = 0;

    fs::create_dir_all(&run.out_dir).map_err(|e| Error::Io {
        path: run.out_dir.clone(),
        source: e,
    })?;

    let mut metrics: Vec<StepMetrics> = Vec::with_capacity(total_steps);
    let mut global_step = 0usize;
    let r_views = manifest.views_per_object;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        shuffle_rng.shuffle(&mut order);
        let mut start = 0usize;
        let mut batch_index = 0usize;
        while start < n_train {
            let end = (start + cfg.batch_size).min(n_train);
            let batch = &order[start..end];
            start = end;
            if batch.len() < 2 {
                break;
            }
            let t0 = Instant::now();
            let n = batch.len();

            // frozen image side: one seeded view pick per object
            let mut e_img = Mat::zeros(n, manifest.feat_dim);
            for (slot, &obj) in batch.iter().enumerate() {
                let r = view_rng.index(r_views);
                e_img.row_mut(slot).copy_from_slice(views[obj].row(r));
            }

            // shape side: augment + encode on per-sample streams
            let aug_base = aug_counter;
            aug_counter += n as u64;
            let encoded: Vec<Result<_>> = batch
                .par_iter()
                .enumerate()
                .map(|(slot, &obj)| {
                    let mut rng =
                        RngStream::new(cfg.seed, STREAM_AUG_BASE + aug_base + slot as u64);
                    let cloud = augment(&clouds[obj], &mut rng, &cfg.augment);
                    encode_points(&params, &cloud)
                })
                .collect();
            let mut caches = Vec::with_capacity(n);
            let mut e_shape = Mat::zeros(n, manifest.feat_dim);
            for (slot, res) in encoded.into_iter().enumerate() {
                let (emb, cache) = res?;
                e_shape.row_mut(slot).copy_from_slice(&emb);
                caches.push(cache);
            }

            let ids: Vec<&str> = batch.iter().map(|&o| train_ids[o].as_str()).collect();
            let loss_out = compute_loss(
                cfg.mode,
                &e_img,
                &e_shape,
                &ids,
                store_a,
                store_b,
                &params,
                global_step,
                epoch,
                batch_index,
            )?;

            if !loss_out.value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step: global_step,
                    epoch,
                    batch: batch_index,
                });
            }

            // backward through the encoder, fixed summation order
            let per_sample: Vec<Result<ParamGrads>> = (0..n)
                .into_par_iter()
                .map(|slot| {
                    encoder_backward(&params, &caches[slot], loss_out.grad_shapes.row(slot))
                })
                .collect();
            let mut total = ParamGrads::zeros(&enc_cfg);
            for g in per_sample {
                total.add_assign(&g?);
            }
            let grads_flat = total.to_flat(loss_out.grad_log_inv_tau);

            let lr = lr_schedule(global_step, &schedule);
            adamw_step(
                &mut flat,
                &grads_flat,
                &mut adam_state,
                global_step + 1,
                lr,
                cfg.weight_decay,
                &cfg.adam,
                no_decay_from,
            );
            params = EncoderParams::from_flat(enc_cfg, &flat);
            params.temperature.clamp();
            flat[no_decay_from] = params.temperature.log_inv_tau;

            metrics.push(StepMetrics {
                step: global_step,
                epoch,
                loss: loss_out.value,
                lr,
                logit_scale: params.temperature.scale(),
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            });
            global_step += 1;
            batch_index += 1;
        }

        let meta = CheckpointMeta {
            config: cfg.clone(),
            encoder: enc_cfg,
            step: global_step,
            epoch,
            rng: RngState {
                seed: cfg.seed,
                shuffle_pos: shuffle_rng.word_pos() as u64,
                viewpick_pos: view_rng.word_pos() as u64,
                next_aug_stream: aug_counter,
            },
        };
        save_checkpoint(
            &run.out_dir.join(format!("ckpt-epoch-{epoch:04}")),
            &params,
            &meta,
        )?;
    }

    let final_dir = run.out_dir.join("ckpt-final");
    let meta = CheckpointMeta {
        config: cfg.clone(),
        encoder: enc_cfg,
        step: global_step,
        epoch: cfg.epochs.saturating_sub(1),
        rng: RngState {
            seed: cfg.seed,
            shuffle_pos: shuffle_rng.word_pos() as u64,
            viewpick_pos: view_rng.word_pos() as u64,
            next_aug_stream: aug_counter,
        },
    };
    save_checkpoint(&final_dir, &params, &meta)?;
    write_metrics_csv(&run.out_dir.join("metrics.csv"), &metrics)?;

    Ok(TrainOutcome {
        final_checkpoint: final_dir,
        metrics,
        total_steps: global_step,
    })
}

#[allow(clippy::too_many_arguments)]
fn compute_loss(
    mode: LossMode,
    e_img: &Mat,
    e_shape: &Mat,
    ids: &[&str],
    store_a: Option<&SimStore>,
    store_b: Option<&SimStore>,
    params: &EncoderParams,
    step: usize,
    epoch: usize,
    batch: usize,
) -> Result<LossOutput> {
    let temp = &params.temperature;
    let weights: Option<BatchWeights> = match mode {
        LossMode::Plain => None,
        LossMode::HnI2i | LossMode::HnI2l2 => {
            let bs = BatchSim::from_store(store_a.expect("checked store"), ids)?;
            Some(batch_weights(&bs)?)
        }
        LossMode::HnAvg => {
            let bs1 = BatchSim::from_store(store_a.expect("checked store"), ids)?;
            let bs2 = BatchSim::from_store(store_b.expect("checked store"), ids)?;
            Some(avg_weights(&bs1, &bs2)?)
        }
    };
    match weights {
        None => plain_contrastive_loss(e_img, e_shape, temp),
        Some(w) => {
            w.check_sums(1e-9)
                .map_err(|detail| Error::WeightInvariant {
                    step,
                    detail: format!("epoch {epoch}, batch {batch}: {detail}"),
                })?;
            hn_weighted_loss(e_img, e_shape, &w, temp)
        }
    }
}

fn write_metrics_csv(path: &Path, metrics: &[StepMetrics]) -> Result<()> {
    let mut out = String::from("step,epoch,loss,lr,logit_scale,wall_ms\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.17e},{:.3}\n",
            m.step, m.epoch, m.loss, m.lr, m.logit_scale, m.wall_ms
        ));
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Checkpoint layout: one EMB1 tensor per parameter plus `meta.json`.
pub fn save_checkpoint(dir: &Path, params: &EncoderParams, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    for (name, tensor) in params.to_tensors() {
        save_tensor(&tensor, &dir.join(format!("{name}.emb")))?;
    }
    let path = dir.join("meta.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(meta).expect("meta serializes"),
    )
    .map_err(|e| Error::Io { path, source: e })
}

pub fn load_checkpoint(dir: &Path) -> Result<(EncoderParams, CheckpointMeta)> {
    let path = dir.join("meta.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let meta: CheckpointMeta =
        serde_json::from_str(&text).map_err(|e| Error::ManifestParse(e.to_string()))?;
    let params = EncoderParams::from_tensors(meta.encoder, |name| {
        load_tensor(&dir.join(format!("{name}.emb")))
    })?;
    Ok((params, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::precompute;
    use crate::synth::{generate, SynthConfig};

    fn flat_dataset(dir: &Path) -> DatasetManifest {
        // one category, one subtype, zero noise: all similarities exactly 1
        let cfg = SynthConfig {
            categories: 1,
            subtypes: 1,
            per_category: 8,
            views: 2,
            feat_dim: 16,
            landmarks: 4,
            points: 16,
            texture_dim: 4,
            view_noise: 0.0,
            texture_scale: 0.0,
            cloud_jitter: 0.0,
            param_jitter: 0.0,
            holdout_frac: 0.0,
            seed: 21,
            ..SynthConfig::default()
        };
        generate(&cfg, dir).unwrap();
        DatasetManifest::load(&dir.join("manifest.json")).unwrap()
    }

    fn quick_config(mode: LossMode, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            batch_size: 4,
            epochs: 2,
            hidden1: 8,
            hidden2: 12,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn equal_sims_collapse_hn_onto_plain() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = flat_dataset(dir.path());
        let store = precompute(&manifest, SimKind::I2i, 0.25).unwrap();

        let out_a = dir.path().join("plain");
        let plain = train(&TrainRun {
            config: quick_config(LossMode::Plain, 3),
            manifest: &manifest,
            store: None,
            store2: None,
            out_dir: out_a,
        })
        .unwrap();

        let out_b = dir.path().join("hn");
        let hn = train(&TrainRun {
            config: quick_config(LossMode::HnI2i, 3),
            manifest: &manifest,
            store: Some(&store),
            store2: None,
            out_dir: out_b,
        })
        .unwrap();

        assert_eq!(plain.metrics.len(), hn.metrics.len());
        for (a, b) in plain.metrics.iter().zip(&hn.metrics) {
            assert!(
                (a.loss - b.loss).abs() < 1e-9,
                "step {}: {} vs {}",
                a.step,
                a.loss,
                b.loss
            );
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = flat_dataset(dir.path());
        let run = |out: PathBuf| {
            train(&TrainRun {
                config: quick_config(LossMode::Plain, 9),
                manifest: &manifest,
                store: None,
                store2: None,
                out_dir: out,
            })
            .unwrap()
        };
        let a = run(dir.path().join("a"));
        let b = run(dir.path().join("b"));
        for name in ["w1", "b1", "w2", "b2", "w3", "b3", "log_inv_tau"] {
            let ta = fs::read(a.final_checkpoint.join(format!("{name}.emb"))).unwrap();
            let tb = fs::read(b.final_checkpoint.join(format!("{name}.emb"))).unwrap();
            assert_eq!(ta, tb, "checkpoint tensor {name} differs");
        }
    }

    #[test]
    fn hn_mode_requires_matching_store() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = flat_dataset(dir.path());
        // no store at all
        let err = train(&TrainRun {
            config: quick_config(LossMode::HnI2i, 1),
            manifest: &manifest,
            store: None,
            store2: None,
            out_dir: dir.path().join("x"),
        })
        .unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid(_)));

        // wrong kind
        let store = precompute(&manifest, SimKind::I2l2, 0.25).unwrap();
        let err = train(&TrainRun {
            config: quick_config(LossMode::HnI2i, 1),
            manifest: &manifest,
            store: Some(&store),
            store2: None,
            out_dir: dir.path().join("y"),
        })
        .unwrap_err();
        assert!(matches!(err, Error::ConfigInvalid(_)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = flat_dataset(dir.path());
        let out = train(&TrainRun {
            config: quick_config(LossMode::Plain, 5),
            manifest: &manifest,
            store: None,
            store2: None,
            out_dir: dir.path().join("run"),
        })
        .unwrap();
        let (params, meta) = load_checkpoint(&out.final_checkpoint).unwrap();
        assert_eq!(meta.encoder.feat_dim, manifest.feat_dim);
        assert_eq!(meta.step, out.total_steps);
        assert_eq!(params.cfg.hidden1, 8);
    }
}
