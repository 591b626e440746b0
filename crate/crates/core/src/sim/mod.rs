//! 3D-to-3D similarity measures.
//!
//! Two neural similarities operate on view embeddings: `i2i` compares
//! index-corresponding views directly, `i2l2` compares per-view landmark
//! descriptors. Two geometric baselines (`chamfer`, `emd`) operate on raw
//! point sets. All four sit behind the [`PairScorer`] trait and are selected
//! by name through [`scorer`].

pub mod assignment;
mod registry;

pub use registry::{scorer, scorer_names, FeatureBank, ObjectRecord, PairScorer};

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingMatrix, LandmarkSet, PointCloud};
use crate::error::{Error, Result};
use crate::numkit::{dot, Mat, RngStream};

/// Similarity kinds a store can hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    I2i,
    I2l2,
}

impl SimKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimKind::I2i => "i2i",
            SimKind::I2l2 => "i2l2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "i2i" => Ok(SimKind::I2i),
            "i2l2" => Ok(SimKind::I2l2),
            other => Err(Error::UnknownSimilarity(other.to_string())),
        }
    }
}

impl std::fmt::Display for SimKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One object's rendered-view embeddings, index-aligned across objects.
#[derive(Debug, Clone)]
pub struct ViewSet {
    pub object_id: String,
    pub category: String,
    pub views: EmbeddingMatrix,
}

/// Per-object view-to-landmark cosine profile, shape (R, L).
#[derive(Debug, Clone)]
pub struct DescriptorSet {
    pub object_id: String,
    pub category: String,
    pub descriptors: Mat,
}

/// Mean cosine between index-corresponding views, mapped to [0, 1] via
/// x -> (x + 1) / 2.
pub fn i2i_similarity(a: &ViewSet, b: &ViewSet) -> Result<f64> {
    let (ra, rb) = (a.views.rows(), b.views.rows());
    if ra != rb {
        return Err(Error::ViewCountMismatch(ra, rb));
    }
    if a.views.dim() != b.views.dim() {
        return Err(Error::DimMismatch(format!(
            "view feature dims {} vs {}",
            a.views.dim(),
            b.views.dim()
        )));
    }
    let mut sum = 0.0;
    for r in 0..ra {
        sum += dot(a.views.row(r), b.views.row(r));
    }
    let mean = sum / ra as f64;
    Ok(((mean + 1.0) / 2.0).clamp(0.0, 1.0))
}

/// Cosine of every view against every landmark of the object's category.
/// Dot products are taken on the rows as given; no re-normalization happens
/// here, so components orthogonal to the landmark span cannot show up.
pub fn build_descriptors(a: &ViewSet, landmarks: &LandmarkSet) -> Result<DescriptorSet> {
    if a.category != landmarks.category {
        return Err(Error::CategoryMismatch(
            a.category.clone(),
            landmarks.category.clone(),
        ));
    }
    if a.views.dim() != landmarks.matrix.dim() {
        return Err(Error::DimMismatch(format!(
            "view dim {} vs landmark dim {}",
            a.views.dim(),
            landmarks.matrix.dim()
        )));
    }
    let (r_count, l_count) = (a.views.rows(), landmarks.count());
    let mut descriptors = Mat::zeros(r_count, l_count);
    for r in 0..r_count {
        let view = a.views.row(r);
        for l in 0..l_count {
            descriptors.set(r, l, dot(view, landmarks.matrix.row(l)));
        }
    }
    Ok(DescriptorSet {
        object_id: a.object_id.clone(),
        category: a.category.clone(),
        descriptors,
    })
}

/// Mean per-view Euclidean distance between descriptor rows, mapped to
/// (0, 1] via x -> 1 / (1 + x). Equals 1 exactly when descriptors coincide.
pub fn i2l2_similarity(da: &DescriptorSet, db: &DescriptorSet) -> Result<f64> {
    if da.category != db.category {
        return Err(Error::CategoryMismatch(
            da.category.clone(),
            db.category.clone(),
        ));
    }
    let (ra, la) = (da.descriptors.rows(), da.descriptors.cols());
    let (rb, lb) = (db.descriptors.rows(), db.descriptors.cols());
    if ra != rb || la != lb {
        return Err(Error::ShapeMismatch(format!(
            "descriptors ({ra}, {la}) vs ({rb}, {lb})"
        )));
    }
    let mut sum = 0.0;
    for r in 0..ra {
        let (xa, xb) = (da.descriptors.row(r), db.descriptors.row(r));
        let mut sq = 0.0;
        for l in 0..la {
            let d = xa[l] - xb[l];
            sq += d * d;
        }
        sum += sq.sqrt();
    }
    let mean = sum / ra as f64;
    Ok(1.0 / (1.0 + mean))
}

/// Chamfer distance with squared point distances: the sum of the two
/// directed means of nearest-neighbor squared distances.
pub fn chamfer_distance(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(directed_mean_sq(p, q) + directed_mean_sq(q, p))
}

fn directed_mean_sq(from: &PointCloud, to: &PointCloud) -> f64 {
    let mut total = 0.0;
    for a in &from.points {
        let mut best = f64::INFINITY;
        for b in &to.points {
            let d = sq_dist(a, b);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / from.points.len() as f64
}

#[inline]
fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Cardinality cap above which point sets are subsampled before the exact
/// assignment solve.
pub const EMD_EXACT_CAP: usize = 256;
/// Hard input limit for `emd`.
pub const EMD_MAX_POINTS: usize = 4096;
/// Fixed seed for the deterministic subsampling draws.
pub const EMD_SUBSAMPLE_SEED: u64 = 0x454d44; // "EMD"

/// Earth mover's distance: the minimum over perfect matchings of the mean
/// Euclidean distance between matched points.
///
/// Unequal cardinalities are equalized by deterministic uniform subsampling
/// of the larger set (fixed seed); sets larger than [`EMD_EXACT_CAP`] are
/// both subsampled to the cap and solved exactly at that size.
pub fn emd(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if p.len() > EMD_MAX_POINTS || q.len() > EMD_MAX_POINTS {
        return Err(Error::DimMismatch(format!(
            "emd supports at most {EMD_MAX_POINTS} points, got {} and {}",
            p.len(),
            q.len()
        )));
    }
    let target = p.len().min(q.len()).min(EMD_EXACT_CAP);
    let pa = subsample(p, target, 0);
    let qa = subsample(q, target, 1);
    let n = target;
    let mut cost = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cost.set(i, j, sq_dist(&pa[i], &qa[j]).sqrt());
        }
    }
    let (_, total) = assignment::solve(&cost);
    Ok(total / n as f64)
}

fn subsample(cloud: &PointCloud, target: usize, stream: u64) -> Vec<[f64; 3]> {
    if cloud.len() == target {
        return cloud.points.clone();
    }
    let mut rng = RngStream::new(EMD_SUBSAMPLE_SEED, stream);
    let idx = rng.sample_indices(cloud.len(), target);
    idx.into_iter().map(|i| cloud.points[i]).collect()
}
