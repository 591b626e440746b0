//! Trainable point-cloud encoder and its optimizer machinery.
//!
//! The encoder is a per-point MLP (3 -> H1 -> H2, ReLU) followed by an
//! elementwise max-pool over points, a linear projection H2 -> F, and L2
//! normalization. Max-pooling makes the embedding invariant to point order
//! and duplication; the backward pass routes each pooled feature's gradient
//! to the winning point, ties broken by lowest point index.

use serde::{Deserialize, Serialize};

use crate::data::{PointCloud, Tensor};
use crate::error::{Error, Result};
use crate::loss::TemperatureParam;
use crate::numkit::{dot, norm, Mat, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub feat_dim: usize,
}

impl EncoderConfig {
    pub fn new(feat_dim: usize) -> Self {
        EncoderConfig {
            hidden1: 64,
            hidden2: 128,
            feat_dim,
        }
    }
}

/// All trainable state: MLP weights, projection, and the loss temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub cfg: EncoderConfig,
    pub w1: Mat, // H1 x 3
    pub b1: Vec<f64>,
    pub w2: Mat, // H2 x H1
    pub b2: Vec<f64>,
    pub w3: Mat, // F x H2
    pub b3: Vec<f64>,
    pub temperature: TemperatureParam,
}

impl EncoderParams {
    /// He-scaled Gaussian init, biases zero, seeded.
    pub fn init(cfg: EncoderConfig, tau: f64, rng: &mut RngStream) -> Self {
        let mut mat = |rows: usize, cols: usize| {
            let scale = (2.0 / cols as f64).sqrt();
            let mut m = Mat::zeros(rows, cols);
            for v in m.data_mut() {
                *v = rng.normal() * scale;
            }
            m
        };
        EncoderParams {
            cfg,
            w1: mat(cfg.hidden1, 3),
            b1: vec![0.0; cfg.hidden1],
            w2: mat(cfg.hidden2, cfg.hidden1),
            b2: vec![0.0; cfg.hidden2],
            w3: mat(cfg.feat_dim, cfg.hidden2),
            b3: vec![0.0; cfg.feat_dim],
            temperature: TemperatureParam::from_tau(tau),
        }
    }

    /// Number of scalars in the flattened layout (temperature last).
    pub fn flat_len(cfg: &EncoderConfig) -> usize {
        cfg.hidden1 * 3
            + cfg.hidden1
            + cfg.hidden2 * cfg.hidden1
            + cfg.hidden2
            + cfg.feat_dim * cfg.hidden2
            + cfg.feat_dim
            + 1
    }

    /// Flatten in the fixed order w1, b1, w2, b2, w3, b3, log_inv_tau.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::flat_len(&self.cfg));
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.data());
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(self.w3.data());
        out.extend_from_slice(&self.b3);
        out.push(self.temperature.log_inv_tau);
        out
    }

    pub fn from_flat(cfg: EncoderConfig, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), Self::flat_len(&cfg));
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = flat[at..at + n].to_vec();
            at += n;
            s
        };
        let w1 = Mat::from_vec(cfg.hidden1, 3, take(cfg.hidden1 * 3));
        let b1 = take(cfg.hidden1);
        let w2 = Mat::from_vec(cfg.hidden2, cfg.hidden1, take(cfg.hidden2 * cfg.hidden1));
        let b2 = take(cfg.hidden2);
        let w3 = Mat::from_vec(cfg.feat_dim, cfg.hidden2, take(cfg.feat_dim * cfg.hidden2));
        let b3 = take(cfg.feat_dim);
        let lit = take(1)[0];
        EncoderParams {
            cfg,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            temperature: TemperatureParam { log_inv_tau: lit },
        }
    }

    /// Named parameter tensors for checkpointing (32-bit storage).
    pub fn to_tensors(&self) -> Vec<(&'static str, Tensor)> {
        let narrow = |m: &Mat| Tensor {
            dims: vec![m.rows(), m.cols()],
            data: m.data().iter().map(|&v| v as f32).collect(),
        };
        let narrow_vec = |v: &[f64]| Tensor {
            dims: vec![v.len()],
            data: v.iter().map(|&x| x as f32).collect(),
        };
        vec![
            ("w1", narrow(&self.w1)),
            ("b1", narrow_vec(&self.b1)),
            ("w2", narrow(&self.w2)),
            ("b2", narrow_vec(&self.b2)),
            ("w3", narrow(&self.w3)),
            ("b3", narrow_vec(&self.b3)),
            ("log_inv_tau", narrow_vec(&[self.temperature.log_inv_tau])),
        ]
    }

    pub fn from_tensors(cfg: EncoderConfig, get: impl Fn(&str) -> Result<Tensor>) -> Result<Self> {
        let widen_mat = |t: &Tensor, rows: usize, cols: usize, name: &str| -> Result<Mat> {
            if t.dims != vec![rows, cols] {
                return Err(Error::DimMismatch(format!(
                    "checkpoint tensor {name} has dims {:?}, expected ({rows}, {cols})",
                    t.dims
                )));
            }
            Ok(Mat::from_vec(
                rows,
                cols,
                t.data.iter().map(|&v| v as f64).collect(),
            ))
        };
        let widen_vec = |t: &Tensor, len: usize, name: &str| -> Result<Vec<f64>> {
            if t.dims != vec![len] {
                return Err(Error::DimMismatch(format!(
                    "checkpoint tensor {name} has dims {:?}, expected ({len},)",
                    t.dims
                )));
            }
            Ok(t.data.iter().map(|&v| v as f64).collect())
        };
        let w1 = widen_mat(&get("w1")?, cfg.hidden1, 3, "w1")?;
        let b1 = widen_vec(&get("b1")?, cfg.hidden1, "b1")?;
        let w2 = widen_mat(&get("w2")?, cfg.hidden2, cfg.hidden1, "w2")?;
        let b2 = widen_vec(&get("b2")?, cfg.hidden2, "b2")?;
        let w3 = widen_mat(&get("w3")?, cfg.feat_dim, cfg.hidden2, "w3")?;
        let b3 = widen_vec(&get("b3")?, cfg.feat_dim, "b3")?;
        let lit = widen_vec(&get("log_inv_tau")?, 1, "log_inv_tau")?[0];
        Ok(EncoderParams {
            cfg,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            temperature: TemperatureParam { log_inv_tau: lit },
        })
    }
}

/// Activations saved by the forward pass for the analytic backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    points: Vec<[f64; 3]>,
    a1: Mat, // P x H1, pre-activation
    a2: Mat, // P x H2, pre-activation
    winners: Vec<usize>,
    pooled: Vec<f64>,
    z: Vec<f64>,
    z_norm: f64,
    embedding: Vec<f64>,
}

impl ForwardCache {
    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }
}

/// Encode one cloud to a unit-norm F-dim embedding.
pub fn encode_points(
    params: &EncoderParams,
    cloud: &PointCloud,
) -> Result<(Vec<f64>, ForwardCache)> {
    let cfg = &params.cfg;
    let p = cloud.len();
    if p == 0 {
        return Err(Error::EmptyCloud);
    }
    let (h1, h2, f) = (cfg.hidden1, cfg.hidden2, cfg.feat_dim);
    let mut a1 = Mat::zeros(p, h1);
    let mut a2 = Mat::zeros(p, h2);
    let mut relu1 = vec![0.0f64; h1];
    for (pi, pt) in cloud.points.iter().enumerate() {
        let row1 = a1.row_mut(pi);
        for j in 0..h1 {
            let w = params.w1.row(j);
            row1[j] = w[0] * pt[0] + w[1] * pt[1] + w[2] * pt[2] + params.b1[j];
        }
        for j in 0..h1 {
            relu1[j] = row1[j].max(0.0);
        }
        let row2 = a2.row_mut(pi);
        for j in 0..h2 {
            row2[j] = dot(params.w2.row(j), &relu1) + params.b2[j];
        }
    }
    // elementwise max over relu(a2); first index wins ties
    let mut pooled = vec![f64::NEG_INFINITY; h2];
    let mut winners = vec![0usize; h2];
    for pi in 0..p {
        let row = a2.row(pi);
        for j in 0..h2 {
            let v = row[j].max(0.0);
            if v > pooled[j] {
                pooled[j] = v;
                winners[j] = pi;
            }
        }
    }
    let mut z = vec![0.0f64; f];
    for k in 0..f {
        z[k] = dot(params.w3.row(k), &pooled) + params.b3[k];
    }
    let z_norm = norm(&z);
    if z_norm <= 1e-12 {
        return Err(Error::DegenerateCloud(
            "projection output has zero norm; pooled features collapsed".into(),
        ));
    }
    let embedding: Vec<f64> = z.iter().map(|v| v / z_norm).collect();
    let cache = ForwardCache {
        points: cloud.points.clone(),
        a1,
        a2,
        winners,
        pooled,
        z,
        z_norm,
        embedding: embedding.clone(),
    };
    Ok((embedding, cache))
}

/// Per-parameter gradients of the encoder (temperature excluded; the loss
/// owns that gradient).
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub w3: Mat,
    pub b3: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros(cfg: &EncoderConfig) -> Self {
        ParamGrads {
            w1: Mat::zeros(cfg.hidden1, 3),
            b1: vec![0.0; cfg.hidden1],
            w2: Mat::zeros(cfg.hidden2, cfg.hidden1),
            b2: vec![0.0; cfg.hidden2],
            w3: Mat::zeros(cfg.feat_dim, cfg.hidden2),
            b3: vec![0.0; cfg.feat_dim],
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        self.w1.add_assign(&other.w1);
        self.w2.add_assign(&other.w2);
        self.w3.add_assign(&other.w3);
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += b;
        }
        for (a, b) in self.b2.iter_mut().zip(&other.b2) {
            *a += b;
        }
        for (a, b) in self.b3.iter_mut().zip(&other.b3) {
            *a += b;
        }
    }

    /// Flatten in the same order as `EncoderParams::to_flat`, with the
    /// temperature gradient appended last.
    pub fn to_flat(&self, grad_log_inv_tau: f64) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.w1.data());
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(self.w2.data());
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(self.w3.data());
        out.extend_from_slice(&self.b3);
        out.push(grad_log_inv_tau);
        out
    }
}

/// Chain the upstream embedding gradient back to all encoder parameters.
pub fn encoder_backward(
    params: &EncoderParams,
    cache: &ForwardCache,
    grad_embedding: &[f64],
) -> Result<ParamGrads> {
    let cfg = &params.cfg;
    let (h1, h2, f) = (cfg.hidden1, cfg.hidden2, cfg.feat_dim);
    if grad_embedding.len() != f {
        return Err(Error::CacheMismatch(format!(
            "upstream gradient has dim {}, encoder emits {f}",
            grad_embedding.len()
        )));
    }
    if cache.a1.cols() != h1 || cache.a2.cols() != h2 || cache.z.len() != f {
        return Err(Error::CacheMismatch(
            "cache dims do not match encoder config".into(),
        ));
    }
    let mut grads = ParamGrads::zeros(cfg);

    // through normalization: dz = (g - (g . e) e) / ||z||
    let ge = dot(grad_embedding, &cache.embedding);
    let mut dz = vec![0.0f64; f];
    for k in 0..f {
        dz[k] = (grad_embedding[k] - ge * cache.embedding[k]) / cache.z_norm;
    }

    // projection
    let mut dpooled = vec![0.0f64; h2];
    for k in 0..f {
        let g = dz[k];
        if g != 0.0 {
            let row = grads.w3.row_mut(k);
            for j in 0..h2 {
                row[j] += g * cache.pooled[j];
            }
            grads.b3[k] += g;
            let w = params.w3.row(k);
            for j in 0..h2 {
                dpooled[j] += g * w[j];
            }
        }
    }

    // max-pool: route to the winning point, then through both ReLUs
    let mut dh1 = std::collections::BTreeMap::<usize, Vec<f64>>::new();
    for j in 0..h2 {
        let pi = cache.winners[j];
        let da2 = if cache.a2.get(pi, j) > 0.0 {
            dpooled[j]
        } else {
            0.0
        };
        if da2 == 0.0 {
            continue;
        }
        let a1_row = cache.a1.row(pi);
        let w2_row = params.w2.row(j);
        let g2_row = grads.w2.row_mut(j);
        for k in 0..h1 {
            g2_row[k] += da2 * a1_row[k].max(0.0);
        }
        grads.b2[j] += da2;
        let entry = dh1.entry(pi).or_insert_with(|| vec![0.0; h1]);
        for k in 0..h1 {
            entry[k] += da2 * w2_row[k];
        }
    }
    for (pi, dh) in dh1 {
        let a1_row = cache.a1.row(pi);
        let pt = cache.points[pi];
        for k in 0..h1 {
            if a1_row[k] > 0.0 && dh[k] != 0.0 {
                let da1 = dh[k];
                let row = grads.w1.row_mut(k);
                row[0] += da1 * pt[0];
                row[1] += da1 * pt[1];
                row[2] += da1 * pt[2];
                grads.b1[k] += da1;
            }
        }
    }
    Ok(grads)
}

/// Augmentation magnitudes; zero everywhere leaves the normalized cloud
/// untouched.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Max rotation angle (radians) about the vertical axis; drawn U[0, max).
    pub rotate_max_angle: f64,
    /// Translation range; each coordinate drawn U[-t, t].
    pub translate: f64,
    /// Per-point Gaussian jitter sigma.
    pub jitter_sigma: f64,
    /// Jitter magnitude clip.
    pub jitter_clip: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            rotate_max_angle: std::f64::consts::TAU,
            translate: 0.1,
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        AugmentConfig {
            rotate_max_angle: 0.0,
            translate: 0.0,
            jitter_sigma: 0.0,
            jitter_clip: 0.0,
        }
    }
}

/// Unit-sphere normalize, rotate about the vertical axis, translate, jitter.
/// The draw order (angle, 3 translation draws, P x 3 jitter draws) is fixed.
pub fn augment(cloud: &PointCloud, rng: &mut RngStream, cfg: &AugmentConfig) -> PointCloud {
    let mut out = cloud.clone();
    out.normalize_unit_sphere();
    let angle = rng.uniform() * cfg.rotate_max_angle;
    let (sin, cos) = angle.sin_cos();
    let tx = rng.uniform_in(-1.0, 1.0) * cfg.translate;
    let ty = rng.uniform_in(-1.0, 1.0) * cfg.translate;
    let tz = rng.uniform_in(-1.0, 1.0) * cfg.translate;
    for p in &mut out.points {
        let (x, y) = (p[0], p[1]);
        p[0] = cos * x - sin * y;
        p[1] = sin * x + cos * y;
        p[0] += tx;
        p[1] += ty;
        p[2] += tz;
        for v in p.iter_mut() {
            let j = (rng.normal() * cfg.jitter_sigma).clamp(-cfg.jitter_clip, cfg.jitter_clip);
            *v += j;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers aligned to the flat parameter layout.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One decoupled-weight-decay adaptive step on a flat parameter vector.
/// Decay multiplies params by (1 - lr * lambda) before the moment update;
/// entries at `no_decay_from` and beyond (the temperature) are exempt.
#[allow(clippy::too_many_arguments)]
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    step: usize,
    lr: f64,
    weight_decay: f64,
    adam: &AdamConfig,
    no_decay_from: usize,
) {
    assert!(step >= 1, "adamw steps are 1-based");
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    let bc1 = 1.0 - adam.beta1.powi(step as i32);
    let bc2 = 1.0 - adam.beta2.powi(step as i32);
    for i in 0..params.len() {
        if i < no_decay_from {
            params[i] *= 1.0 - lr * weight_decay;
        }
        let g = grads[i];
        state.m[i] = adam.beta1 * state.m[i] + (1.0 - adam.beta1) * g;
        state.v[i] = adam.beta2 * state.v[i] + (1.0 - adam.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + adam.eps);
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

/// Linear warmup to `base_lr`, then cosine decay to `lr_min`.
pub fn lr_schedule(step: usize, cfg: &ScheduleConfig) -> f64 {
    debug_assert!(step <= cfg.total_steps);
    if step < cfg.warmup_steps {
        return cfg.base_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.total_steps.saturating_sub(cfg.warmup_steps);
    if span == 0 {
        return cfg.base_lr;
    }
    let t = (step - cfg.warmup_steps) as f64 / span as f64;
    cfg.lr_min + (cfg.base_lr - cfg.lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;

    fn random_cloud(rng: &mut RngStream, p: usize) -> PointCloud {
        let mut c = PointCloud {
            points: (0..p)
                .map(|_| [rng.normal(), rng.normal(), rng.normal()])
                .collect(),
        };
        c.normalize_unit_sphere();
        c
    }

    fn small_params(rng: &mut RngStream, f: usize) -> EncoderParams {
        EncoderParams::init(
            EncoderConfig {
                hidden1: 6,
                hidden2: 10,
                feat_dim: f,
            },
            0.07,
            rng,
        )
    }

    #[test]
    fn shuffled_cloud_same_embedding() {
        let mut rng = RngStream::new(1, 0);
        let params = small_params(&mut rng, 8);
        let cloud = random_cloud(&mut rng, 24);
        let (e1, _) = encode_points(&params, &cloud).unwrap();
        let mut shuffled = cloud.clone();
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        rng.shuffle(&mut order);
        shuffled.points = order.iter().map(|&i| cloud.points[i]).collect();
        let (e2, _) = encode_points(&params, &shuffled).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn duplicated_point_same_embedding() {
        let mut rng = RngStream::new(2, 0);
        let params = small_params(&mut rng, 8);
        let cloud = random_cloud(&mut rng, 16);
        let (e1, _) = encode_points(&params, &cloud).unwrap();
        let mut dup = cloud.clone();
        dup.points.push(cloud.points[3]);
        let (e2, _) = encode_points(&params, &dup).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn output_is_unit_norm() {
        let mut rng = RngStream::new(3, 0);
        let params = small_params(&mut rng, 12);
        for _ in 0..100 {
            let cloud = random_cloud(&mut rng, 16);
            let (e, _) = encode_points(&params, &cloud).unwrap();
            assert!((norm(&e) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = RngStream::new(4, 0);
        let params = small_params(&mut rng, 8);
        let cloud = random_cloud(&mut rng, 16);
        let (_, cache) = encode_points(&params, &cloud).unwrap();
        let grads = encoder_backward(&params, &cache, &[0.0; 8]).unwrap();
        assert!(grads.w1.data().iter().all(|&g| g == 0.0));
        assert!(grads.w2.data().iter().all(|&g| g == 0.0));
        assert!(grads.w3.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngStream::new(5, 0);
        let params = small_params(&mut rng, 8);
        let cloud = random_cloud(&mut rng, 16);
        // scalar objective: fixed query dotted with the embedding
        let q: Vec<f64> = rng.normal_vec(8);
        let (_, cache) = encode_points(&params, &cloud).unwrap();
        let grads = encoder_backward(&params, &cache, &q).unwrap();
        let analytic = grads.to_flat(0.0);
        let flat = params.to_flat();
        let eps = 1e-5;
        let objective = |flat: &[f64]| {
            let p = EncoderParams::from_flat(params.cfg, flat);
            let (e, _) = encode_points(&p, &cloud).unwrap();
            dot(&q, &e)
        };
        // skip the trailing temperature slot; the encoder does not use it
        for i in 0..flat.len() - 1 {
            let mut up = flat.clone();
            up[i] += eps;
            let mut dn = flat.clone();
            dn[i] -= eps;
            let fd = (objective(&up) - objective(&dn)) / (2.0 * eps);
            let an = analytic[i];
            assert!(
                (an - fd).abs() <= 1e-4 * an.abs().max(fd.abs()).max(1e-4),
                "param {i}: analytic {an} vs fd {fd}"
            );
        }
    }

    #[test]
    fn tie_routes_to_lower_index() {
        let mut rng = RngStream::new(6, 0);
        let params = small_params(&mut rng, 8);
        // two identical points: gradients must route to index 0's copy only,
        // which equals routing all of it through one point
        let pt = [0.3, -0.2, 0.5];
        let cloud = PointCloud {
            points: vec![pt, pt, [0.1, 0.1, -0.4]],
        };
        let (_, cache) = encode_points(&params, &cloud).unwrap();
        for (j, &w) in cache.winners.iter().enumerate() {
            // wherever the duplicated points win, the first copy is recorded
            if cache.a2.get(0, j).max(0.0) == cache.pooled[j] {
                assert!(w == 0 || cache.a2.get(w, j).max(0.0) > cache.a2.get(0, j).max(0.0));
            }
            assert_ne!(w, 1, "tie must resolve to the lower index");
        }
    }

    #[test]
    fn zero_magnitude_augment_is_identity() {
        let mut rng = RngStream::new(7, 0);
        let raw = PointCloud {
            points: (0..16)
                .map(|_| [3.0 + rng.normal(), rng.normal() - 1.0, 2.0 * rng.normal()])
                .collect(),
        };
        let mut expected = raw.clone();
        expected.normalize_unit_sphere();
        let mut aug_rng = RngStream::new(0, 0);
        let out = augment(&raw, &mut aug_rng, &AugmentConfig::none());
        assert_eq!(expected.points, out.points);
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let mut rng = RngStream::new(8, 0);
        let cloud = random_cloud(&mut rng, 12);
        let mut aug_rng = RngStream::new(1, 0);
        let cfg = AugmentConfig {
            rotate_max_angle: std::f64::consts::TAU,
            translate: 0.0,
            jitter_sigma: 0.0,
            jitter_clip: 0.0,
        };
        let out = augment(&cloud, &mut aug_rng, &cfg);
        for i in 0..cloud.len() {
            for j in i + 1..cloud.len() {
                let d0 = dist(&cloud.points[i], &cloud.points[j]);
                let d1 = dist(&out.points[i], &out.points[j]);
                assert!((d0 - d1).abs() < 1e-6);
            }
        }
    }

    fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn augment_is_deterministic_under_seed() {
        let mut rng = RngStream::new(9, 0);
        let cloud = random_cloud(&mut rng, 16);
        let cfg = AugmentConfig::default();
        let a = augment(&cloud, &mut RngStream::new(42, 3), &cfg);
        let b = augment(&cloud, &mut RngStream::new(42, 3), &cfg);
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn adamw_zero_grad_no_decay_is_identity() {
        let mut p = vec![0.5, -0.3, 1.2];
        let mut st = AdamState::zeros(3);
        adamw_step(
            &mut p,
            &[0.0; 3],
            &mut st,
            1,
            1e-3,
            0.0,
            &AdamConfig::default(),
            3,
        );
        assert_eq!(p, vec![0.5, -0.3, 1.2]);
    }

    #[test]
    fn adamw_decay_only() {
        let mut p = vec![1.0, 1.0];
        let mut st = AdamState::zeros(2);
        let lr = 0.1;
        let wd = 0.5;
        adamw_step(
            &mut p,
            &[0.0; 2],
            &mut st,
            1,
            lr,
            wd,
            &AdamConfig::default(),
            1,
        );
        assert!((p[0] - (1.0 - lr * wd)).abs() < 1e-12);
        assert_eq!(p[1], 1.0); // beyond no_decay_from
    }

    #[test]
    fn adamw_first_step_is_signed_lr() {
        let g = 0.37;
        let mut p = vec![0.0];
        let mut st = AdamState::zeros(1);
        let adam = AdamConfig::default();
        adamw_step(&mut p, &[g], &mut st, 1, 1e-2, 0.0, &adam, 1);
        let expected = -1e-2 * g / (g.abs() + adam.eps);
        assert!((p[0] - expected).abs() < 1e-9);
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = ScheduleConfig {
            base_lr: 2.0,
            lr_min: 0.0,
            warmup_steps: 10,
            total_steps: 110,
        };
        assert_eq!(lr_schedule(0, &cfg), 0.0);
        assert!((lr_schedule(10, &cfg) - 2.0).abs() < 1e-12);
        // midpoint of the cosine phase
        assert!((lr_schedule(60, &cfg) - 1.0).abs() < 1e-12);
        assert!(lr_schedule(110, &cfg).abs() < 1e-12);
    }

    #[test]
    fn collapsed_projection_reports_degenerate_cloud() {
        let mut rng = RngStream::new(11, 0);
        let mut params = small_params(&mut rng, 8);
        for v in params.w3.data_mut() {
            *v = 0.0;
        }
        params.b3 = vec![0.0; 8];
        let cloud = random_cloud(&mut rng, 16);
        assert!(matches!(
            encode_points(&params, &cloud),
            Err(crate::error::Error::DegenerateCloud(_))
        ));
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = RngStream::new(10, 0);
        let params = small_params(&mut rng, 8);
        let flat = params.to_flat();
        let back = EncoderParams::from_flat(params.cfg, &flat);
        assert_eq!(params, back);
    }
}
