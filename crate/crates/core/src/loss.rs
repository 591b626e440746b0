//! Batch weights, the symmetric contrastive loss, and its hard-negative-
//! weighted variant, all with analytic gradients.
//!
//! The weighted form folds weights into the logits as log-weights and takes
//! a max-shifted logsumexp, so nothing overflows even at the logit-scale
//! clamp of 100. Diagonal weights are pinned to 1: the positive pair is
//! never reweighted, which also makes the weighted loss collapse onto the
//! plain one when every weight is 1.

use crate::error::{Error, Result};
use crate::numkit::{dot, Mat};

/// Lower clamp of the logit scale exp(log_inv_tau).
pub const TEMP_SCALE_MIN: f64 = 1.0;
/// Upper clamp of the logit scale.
pub const TEMP_SCALE_MAX: f64 = 100.0;
/// Default temperature, the CLIP-lineage convention.
pub const DEFAULT_TAU: f64 = 0.07;

/// Learnable temperature, stored as the log of the inverse temperature so
/// the optimizer works on an unconstrained scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureParam {
    pub log_inv_tau: f64,
}

impl TemperatureParam {
    pub fn from_tau(tau: f64) -> Self {
        assert!(tau > 0.0);
        TemperatureParam {
            log_inv_tau: (1.0 / tau).ln(),
        }
    }

    /// Logit scale 1/tau.
    pub fn scale(&self) -> f64 {
        self.log_inv_tau.exp()
    }

    pub fn tau(&self) -> f64 {
        (-self.log_inv_tau).exp()
    }

    /// Clamp the scale into [TEMP_SCALE_MIN, TEMP_SCALE_MAX]; applied after
    /// every optimizer step.
    pub fn clamp(&mut self) {
        let lo = TEMP_SCALE_MIN.ln();
        let hi = TEMP_SCALE_MAX.ln();
        self.log_inv_tau = self.log_inv_tau.clamp(lo, hi);
    }
}

impl Default for TemperatureParam {
    fn default() -> Self {
        TemperatureParam::from_tau(DEFAULT_TAU)
    }
}

/// Pairwise 3D similarities for one batch, symmetric with unit diagonal.
#[derive(Debug, Clone)]
pub struct BatchSim {
    n: usize,
    s: Mat,
}

impl BatchSim {
    pub fn new(s: Mat) -> Result<Self> {
        let n = s.rows();
        if s.cols() != n {
            return Err(Error::ShapeMismatch(format!(
                "batch similarity must be square, got ({}, {})",
                s.rows(),
                s.cols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = s.get(i, j);
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::NonPositiveSim(i, j, v));
                }
            }
        }
        Ok(BatchSim { n, s })
    }

    /// Batch similarities from a store lookup over an ordered id list.
    pub fn from_store(store: &crate::store::SimStore, ids: &[&str]) -> Result<Self> {
        let n = ids.len();
        let mut s = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s.set(i, j, store.lookup(ids[i], ids[j])?);
            }
        }
        BatchSim::new(s)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn mat(&self) -> &Mat {
        &self.s
    }
}

/// The two batch weight matrices: `row` is normalized over each anchor's
/// negatives along its row, `col` along its column. Diagonals are 1.
#[derive(Debug, Clone)]
pub struct BatchWeights {
    n: usize,
    pub row: Mat,
    pub col: Mat,
}

impl BatchWeights {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// All-ones weights; the weighted loss reduces to the plain one.
    pub fn uniform(n: usize) -> Self {
        let mut row = Mat::zeros(n, n);
        for v in row.data_mut() {
            *v = 1.0;
        }
        let col = row.clone();
        BatchWeights { n, row, col }
    }

    /// Off-diagonal row sums of `row` and column sums of `col` must equal
    /// n - 1. The trainer re-asserts this every step to catch store/batch
    /// misalignment.
    pub fn check_sums(&self, tol: f64) -> std::result::Result<(), String> {
        let n = self.n;
        if n < 2 {
            return Ok(());
        }
        let target = (n - 1) as f64;
        for i in 0..n {
            let mut rs = 0.0;
            let mut cs = 0.0;
            for j in 0..n {
                if j != i {
                    rs += self.row.get(i, j);
                    cs += self.col.get(j, i);
                }
            }
            if (rs - target).abs() > tol {
                return Err(format!("row {i} sums to {rs}, expected {target}"));
            }
            if (cs - target).abs() > tol {
                return Err(format!("column {i} sums to {cs}, expected {target}"));
            }
        }
        Ok(())
    }
}

/// Importance weights for a batch: each negative's similarity divided by
/// the mean similarity of the anchor's negatives. Diagonals are set to 1 so
/// the positive term is never reweighted.
pub fn batch_weights(bs: &BatchSim) -> Result<BatchWeights> {
    let n = bs.n;
    let s = &bs.s;
    let mut row = Mat::zeros(n, n);
    let mut col = Mat::zeros(n, n);
    if n == 1 {
        row.set(0, 0, 1.0);
        col.set(0, 0, 1.0);
        return Ok(BatchWeights { n, row, col });
    }
    let scale = (n - 1) as f64;
    for i in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if k != i {
                denom += s.get(i, k);
            }
        }
        for j in 0..n {
            row.set(
                i,
                j,
                if j == i {
                    1.0
                } else {
                    scale * s.get(i, j) / denom
                },
            );
        }
    }
    for j in 0..n {
        let mut denom = 0.0;
        for k in 0..n {
            if k != j {
                denom += s.get(k, j);
            }
        }
        for i in 0..n {
            col.set(
                i,
                j,
                if i == j {
                    1.0
                } else {
                    scale * s.get(i, j) / denom
                },
            );
        }
    }
    Ok(BatchWeights { n, row, col })
}

/// Elementwise mean of the weights from two similarity sources. Averaging
/// weights rather than similarities is robust to scale differences between
/// the sources; the row/column sum invariant survives by linearity.
pub fn avg_weights(a: &BatchSim, b: &BatchSim) -> Result<BatchWeights> {
    if a.n != b.n {
        return Err(Error::ShapeMismatch(format!(
            "batch sizes {} vs {}",
            a.n, b.n
        )));
    }
    let wa = batch_weights(a)?;
    let wb = batch_weights(b)?;
    let n = a.n;
    let mut row = Mat::zeros(n, n);
    let mut col = Mat::zeros(n, n);
    for i in 0..n * n {
        row.data_mut()[i] = 0.5 * (wa.row.data()[i] + wb.row.data()[i]);
        col.data_mut()[i] = 0.5 * (wa.col.data()[i] + wb.col.data()[i]);
    }
    Ok(BatchWeights { n, row, col })
}

/// Loss value plus gradients w.r.t. both embedding matrices and the
/// log-inverse-temperature.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad_images: Mat,
    pub grad_shapes: Mat,
    pub grad_log_inv_tau: f64,
}

fn check_shapes(e_img: &Mat, e_shape: &Mat) -> Result<usize> {
    if e_img.rows() != e_shape.rows() || e_img.cols() != e_shape.cols() {
        return Err(Error::ShapeMismatch(format!(
            "embeddings ({}, {}) vs ({}, {})",
            e_img.rows(),
            e_img.cols(),
            e_shape.rows(),
            e_shape.cols()
        )));
    }
    if e_img.rows() == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    Ok(e_img.rows())
}

fn logits(e_img: &Mat, e_shape: &Mat, scale: f64) -> Mat {
    let n = e_img.rows();
    let mut z = Mat::zeros(n, n);
    for i in 0..n {
        for s in 0..n {
            z.set(i, s, scale * dot(e_img.row(i), e_shape.row(s)));
        }
    }
    z
}

// Chain dz through the logits: embedding gradients still need the caller's
// scale factor, the temperature gradient picks it up from z itself.
fn finish(e_img: &Mat, e_shape: &Mat, z: &Mat, dz: &Mat, value: f64) -> LossOutput {
    let n = e_img.rows();
    let f = e_img.cols();
    let mut grad_images = Mat::zeros(n, f);
    let mut grad_shapes = Mat::zeros(n, f);
    let mut grad_log_inv_tau = 0.0;
    for i in 0..n {
        for s in 0..n {
            let g = dz.get(i, s);
            if g != 0.0 {
                let gi = grad_images.row_mut(i);
                let es = e_shape.row(s);
                for k in 0..f {
                    gi[k] += g * es[k];
                }
                let gs = grad_shapes.row_mut(s);
                let ei = e_img.row(i);
                for k in 0..f {
                    gs[k] += g * ei[k];
                }
                grad_log_inv_tau += g * z.get(i, s);
            }
        }
    }
    LossOutput {
        value,
        grad_images,
        grad_shapes,
        grad_log_inv_tau,
    }
}

/// Symmetric InfoNCE over cosine logits scaled by 1/tau, both directions
/// averaged with 1/2 weights.
pub fn plain_contrastive_loss(
    e_img: &Mat,
    e_shape: &Mat,
    temp: &TemperatureParam,
) -> Result<LossOutput> {
    let n = check_shapes(e_img, e_shape)?;
    let scale = temp.scale();
    let z = logits(e_img, e_shape, scale);
    let mut value = 0.0;
    let mut dz = Mat::zeros(n, n);
    let inv = 1.0 / (2.0 * n as f64);

    // image -> shape: softmax over each row
    for i in 0..n {
        let row = z.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - m).exp();
        }
        let lse = m + denom.ln();
        value += (lse - z.get(i, i)) * inv;
        for s in 0..n {
            let p = (z.get(i, s) - lse).exp();
            let delta = if s == i { 1.0 } else { 0.0 };
            dz.set(i, s, dz.get(i, s) + (p - delta) * inv);
        }
    }
    // shape -> image: softmax over each column
    for s in 0..n {
        let mut m = f64::NEG_INFINITY;
        for i in 0..n {
            m = m.max(z.get(i, s));
        }
        let mut denom = 0.0;
        for i in 0..n {
            denom += (z.get(i, s) - m).exp();
        }
        let lse = m + denom.ln();
        value += (lse - z.get(s, s)) * inv;
        for i in 0..n {
            let p = (z.get(i, s) - lse).exp();
            let delta = if i == s { 1.0 } else { 0.0 };
            dz.set(i, s, dz.get(i, s) + (p - delta) * inv);
        }
    }
    // scale folds into the embedding gradients, not into dz itself; do it here
    let mut out = finish(e_img, e_shape, &z, &dz, value);
    out.grad_images.scale(scale);
    out.grad_shapes.scale(scale);
    Ok(out)
}

/// The reweighted contrastive loss: denominators carry the batch weights,
/// folded in as log-weights on the logits.
pub fn hn_weighted_loss(
    e_img: &Mat,
    e_shape: &Mat,
    weights: &BatchWeights,
    temp: &TemperatureParam,
) -> Result<LossOutput> {
    let n = check_shapes(e_img, e_shape)?;
    if weights.n != n {
        return Err(Error::ShapeMismatch(format!(
            "weights for batch {} applied to batch {n}",
            weights.n
        )));
    }
    let scale = temp.scale();
    let z = logits(e_img, e_shape, scale);
    let mut value = 0.0;
    let mut dz = Mat::zeros(n, n);
    let inv = 1.0 / (2.0 * n as f64);

    // image -> shape with row weights
    for i in 0..n {
        let mut a = vec![0.0f64; n];
        for s in 0..n {
            a[s] = z.get(i, s) + weights.row.get(i, s).ln();
        }
        let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in &a {
            denom += (v - m).exp();
        }
        let lse = m + denom.ln();
        value += (lse - z.get(i, i)) * inv;
        for s in 0..n {
            let p = (a[s] - lse).exp();
            let delta = if s == i { 1.0 } else { 0.0 };
            dz.set(i, s, dz.get(i, s) + (p - delta) * inv);
        }
    }
    // shape -> image with column weights
    for s in 0..n {
        let mut a = vec![0.0f64; n];
        for i in 0..n {
            a[i] = z.get(i, s) + weights.col.get(i, s).ln();
        }
        let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in &a {
            denom += (v - m).exp();
        }
        let lse = m + denom.ln();
        value += (lse - z.get(s, s)) * inv;
        for i in 0..n {
            let p = (a[i] - lse).exp();
            let delta = if i == s { 1.0 } else { 0.0 };
            dz.set(i, s, dz.get(i, s) + (p - delta) * inv);
        }
    }
    let mut out = finish(e_img, e_shape, &z, &dz, value);
    out.grad_images.scale(scale);
    out.grad_shapes.scale(scale);
    Ok(out)
}
