//! Per-category precomputation, persistence, and lookup of 3D similarities.
//!
//! Same-category pairs get a stored value; cross-category pairs fall back to
//! the constant `alpha`, so batch weights never vanish. Only the upper
//! triangle of each |c| x |c| block is ever computed; the diagonal is pinned
//! to 1. On disk a store is a directory holding `index.json` plus one EMB1
//! matrix per category; a dataset fingerprint ties the store to the exact
//! manifest it was computed from.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{load_tensor, save_tensor, DatasetManifest, Tensor};
use crate::error::{Error, Result};
use crate::sim::{scorer, FeatureBank, PairScorer, SimKind};

/// Dense symmetric similarity block for one category.
#[derive(Debug, Clone)]
pub struct SimMatrix {
    pub category: String,
    pub ids: Vec<String>,
    n: usize,
    values: Vec<f32>,
}

impl SimMatrix {
    fn identity(category: String, ids: Vec<String>) -> Self {
        let n = ids.len();
        let mut values = vec![0.0f32; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        SimMatrix {
            category,
            ids,
            n,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.n + j]
    }

    fn set_sym(&mut self, i: usize, j: usize, v: f32) {
        self.values[i * self.n + j] = v;
        self.values[j * self.n + i] = v;
    }
}

/// The persisted collection of per-category similarity blocks plus alpha.
#[derive(Debug, Clone)]
pub struct SimStore {
    pub kind: SimKind,
    pub alpha: f64,
    pub fingerprint: String,
    matrices: Vec<SimMatrix>,
    // object id -> (matrix index, row within matrix)
    locator: HashMap<String, (usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct IndexCategory {
    id: String,
    file: String,
    object_ids: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    kind: SimKind,
    alpha: f64,
    fingerprint: String,
    categories: Vec<IndexCategory>,
}

/// Hash of the dataset identity: object ids plus digests of every referenced
/// file (views, clouds, landmarks, prompts). Stores carry this so a store
/// can never silently pair with a different dataset.
pub fn dataset_fingerprint(manifest: &DatasetManifest) -> Result<String> {
    let mut h = Sha256::new();
    h.update(manifest.feat_dim.to_le_bytes());
    h.update(manifest.views_per_object.to_le_bytes());
    let digest_file = |rel: &str, h: &mut Sha256| -> Result<()> {
        let path = manifest.resolve(rel);
        let bytes = fs::read(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        h.update(Sha256::digest(&bytes));
        Ok(())
    };
    for c in &manifest.categories {
        h.update(c.id.as_bytes());
        if let Some(f) = &c.landmark_file {
            digest_file(f, &mut h)?;
        }
        if let Some(f) = &c.prompt_embedding_file {
            digest_file(f, &mut h)?;
        }
    }
    for o in &manifest.objects {
        h.update(o.id.as_bytes());
        h.update(o.category.as_bytes());
        digest_file(&o.views_file, &mut h)?;
        digest_file(&o.cloud_file, &mut h)?;
    }
    let digest = h.finalize();
    Ok(digest.iter().fold(String::new(), |mut s, b| {
        use std::fmt::Write;
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// Compute all same-category pairwise similarities for the dataset.
pub fn precompute(manifest: &DatasetManifest, kind: SimKind, alpha: f64) -> Result<SimStore> {
    let bank = FeatureBank::load(manifest, kind == SimKind::I2l2, false)?;
    precompute_from_bank(manifest, &bank, scorer(kind.as_str())?, kind, alpha)
}

/// Precompute against an explicit scorer. Pair evaluation parallelizes over
/// the upper triangle of each category block; results land in preassigned
/// slots, so any thread count produces bit-identical stores.
pub fn precompute_from_bank(
    manifest: &DatasetManifest,
    bank: &FeatureBank,
    measure: &dyn PairScorer,
    kind: SimKind,
    alpha: f64,
) -> Result<SimStore> {
    check_alpha(alpha)?;
    let fingerprint = dataset_fingerprint(manifest)?;

    // group object indices per category, in manifest order
    let mut per_cat: Vec<(String, Vec<usize>)> = manifest
        .categories
        .iter()
        .map(|c| (c.id.clone(), Vec::new()))
        .collect();
    let cat_pos: HashMap<&str, usize> = manifest
        .categories
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id.as_str(), i))
        .collect();
    for (i, obj) in manifest.objects.iter().enumerate() {
        let pos = *cat_pos
            .get(obj.category.as_str())
            .ok_or_else(|| Error::CategoryMismatch(obj.category.clone(), "<manifest>".into()))?;
        per_cat[pos].1.push(i);
    }

    let records = bank.records();
    let mut matrices = Vec::new();
    let mut locator = HashMap::new();
    for (cat, members) in per_cat {
        let ids: Vec<String> = members.iter().map(|&i| records[i].id.clone()).collect();
        let mut block = SimMatrix::identity(cat.clone(), ids);
        let pairs: Vec<(usize, usize)> = (0..members.len())
            .flat_map(|i| (i + 1..members.len()).map(move |j| (i, j)))
            .collect();
        let scores: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(i, j)| measure.score(&records[members[i]], &records[members[j]]))
            .collect();
        for (&(i, j), score) in pairs.iter().zip(scores) {
            block.set_sym(i, j, score? as f32);
        }
        for (row, &i) in members.iter().enumerate() {
            locator.insert(records[i].id.clone(), (matrices.len(), row));
        }
        matrices.push(block);
    }

    Ok(SimStore {
        kind,
        alpha,
        fingerprint,
        matrices,
        locator,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha <= 0.0 || alpha > 1.0 {
        return Err(Error::BadAlpha(alpha));
    }
    Ok(())
}

impl SimStore {
    /// Similarity between two objects: stored value within a category, the
    /// constant alpha across categories, exactly 1 for an object with itself.
    pub fn lookup(&self, id_a: &str, id_b: &str) -> Result<f64> {
        let &(ma, ra) = self
            .locator
            .get(id_a)
            .ok_or_else(|| Error::UnknownObject(id_a.to_string()))?;
        let &(mb, rb) = self
            .locator
            .get(id_b)
            .ok_or_else(|| Error::UnknownObject(id_b.to_string()))?;
        if id_a == id_b {
            return Ok(1.0);
        }
        if ma == mb {
            Ok(self.matrices[ma].get(ra, rb) as f64)
        } else {
            Ok(self.alpha)
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        self.locator.contains_key(id)
    }

    pub fn matrices(&self) -> &[SimMatrix] {
        &self.matrices
    }

    pub fn object_count(&self) -> usize {
        self.locator.len()
    }

    /// Write `index.json` plus one EMB1 block per category.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let mut categories = Vec::new();
        for (i, m) in self.matrices.iter().enumerate() {
            let file = format!("cat{i:04}.emb");
            let n = m.len().max(1);
            // a category with one object still stores its 1x1 identity
            let tensor = Tensor::new(vec![m.len().max(1), n], {
                if m.is_empty() {
                    vec![1.0f32]
                } else {
                    m.values.clone()
                }
            })?;
            if !m.is_empty() {
                save_tensor(&tensor, &dir.join(&file))?;
            }
            categories.push(IndexCategory {
                id: m.category.clone(),
                file: if m.is_empty() { String::new() } else { file },
                object_ids: m.ids.clone(),
            });
        }
        let index = IndexFile {
            kind: self.kind,
            alpha: self.alpha,
            fingerprint: self.fingerprint.clone(),
            categories,
        };
        let path = dir.join("index.json");
        fs::write(
            &path,
            serde_json::to_string_pretty(&index).expect("index serializes"),
        )
        .map_err(|e| Error::Io { path, source: e })
    }

    /// Load a store and reject it if its fingerprint does not match the
    /// given manifest.
    pub fn load(dir: &Path, manifest: &DatasetManifest) -> Result<Self> {
        let store = Self::load_unchecked(dir)?;
        let expected = dataset_fingerprint(manifest)?;
        if store.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                store: store.fingerprint,
                dataset: expected,
            });
        }
        Ok(store)
    }

    /// Load without the fingerprint check.
    pub fn load_unchecked(dir: &Path) -> Result<Self> {
        let path = dir.join("index.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let index: IndexFile =
            serde_json::from_str(&text).map_err(|e| Error::ManifestParse(e.to_string()))?;
        check_alpha(index.alpha)?;
        let mut matrices = Vec::new();
        let mut locator = HashMap::new();
        for c in &index.categories {
            let n = c.object_ids.len();
            let block = if n == 0 {
                SimMatrix::identity(c.id.clone(), Vec::new())
            } else {
                let tensor = load_tensor(&dir.join(&c.file))?;
                if tensor.dims != vec![n, n] {
                    return Err(Error::DimMismatch(format!(
                        "store block for {} has dims {:?}, expected ({n}, {n})",
                        c.id, tensor.dims
                    )));
                }
                for i in 0..n {
                    let d = tensor.data[i * n + i];
                    if (d - 1.0).abs() > 1e-6 {
                        return Err(Error::DimMismatch(format!(
                            "store block for {} has diagonal entry {d} at {i}",
                            c.id
                        )));
                    }
                    for j in 0..n {
                        let v = tensor.data[i * n + j];
                        if !(0.0..=1.0).contains(&v) || (v - tensor.data[j * n + i]).abs() > 1e-6 {
                            return Err(Error::DimMismatch(format!(
                                "store block for {} is out of range or asymmetric at ({i}, {j})",
                                c.id
                            )));
                        }
                    }
                }
                SimMatrix {
                    category: c.id.clone(),
                    ids: c.object_ids.clone(),
                    n,
                    values: tensor.data,
                }
            };
            for (row, id) in c.object_ids.iter().enumerate() {
                locator.insert(id.clone(), (matrices.len(), row));
            }
            matrices.push(block);
        }
        Ok(SimStore {
            kind: index.kind,
            alpha: index.alpha,
            fingerprint: index.fingerprint,
            matrices,
            locator,
        })
    }
}
