//! Dataset schema: the JSON manifest, train/test splits, and validation.

pub mod tensor;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use tensor::{load_tensor, save_tensor, EmbeddingMatrix, LandmarkSet, PointCloud, Tensor};

/// One category entry. Landmark and prompt embedding files are optional;
/// operations that need them fail with a named error when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmark_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_embedding_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub id: String,
    pub category: String,
    pub views_file: String,
    pub cloud_file: String,
}

/// The dataset manifest. Relative paths resolve against the manifest's
/// directory so datasets stay relocatable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub feat_dim: usize,
    pub views_per_object: usize,
    pub categories: Vec<CategoryEntry>,
    pub objects: Vec<ObjectEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

/// Train/test object-id split, stored as `split.json` next to the manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub object_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub checked_objects: usize,
    pub violations: Vec<Violation>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::ManifestParse(e.to_string()))?;
        manifest.root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Resolve a manifest-relative path.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn category_ids(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn object_index(&self) -> HashMap<&str, usize> {
        self.objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.id.as_str(), i))
            .collect()
    }

    /// Load the landmark set for one category.
    pub fn load_landmarks(&self, category: &str) -> Result<LandmarkSet> {
        let entry = self
            .categories
            .iter()
            .find(|c| c.id == category)
            .ok_or_else(|| Error::MissingLandmarks(category.to_string()))?;
        let file = entry
            .landmark_file
            .as_ref()
            .ok_or_else(|| Error::MissingLandmarks(category.to_string()))?;
        let t = load_tensor(&self.resolve(file))?;
        Ok(LandmarkSet {
            category: category.to_string(),
            matrix: EmbeddingMatrix::from_tensor(&t)?,
        })
    }

    /// Landmark sets for every category; errors on the first category
    /// without one.
    pub fn load_all_landmarks(&self) -> Result<HashMap<String, LandmarkSet>> {
        let mut out = HashMap::new();
        for c in &self.categories {
            out.insert(c.id.clone(), self.load_landmarks(&c.id)?);
        }
        Ok(out)
    }

    /// Prompt embedding (one unit row) for every category.
    pub fn load_prompts(&self) -> Result<HashMap<String, Vec<f64>>> {
        let mut out = HashMap::new();
        for c in &self.categories {
            let file = c.prompt_embedding_file.as_ref().ok_or_else(|| {
                Error::CategorySetMismatch(format!("category {} has no prompt embedding", c.id))
            })?;
            let t = load_tensor(&self.resolve(file))?;
            let emb = EmbeddingMatrix::from_tensor(&t)?;
            if emb.rows() != 1 || emb.dim() != self.feat_dim {
                return Err(Error::DimMismatch(format!(
                    "prompt embedding for {} must be (1, {}), got ({}, {})",
                    c.id,
                    self.feat_dim,
                    emb.rows(),
                    emb.dim()
                )));
            }
            out.insert(c.id.clone(), emb.row(0).to_vec());
        }
        Ok(out)
    }

    /// Load `split.json` if present; `None` when the dataset has no split.
    pub fn load_split(&self) -> Result<Option<Split>> {
        let path = self.root.join("split.json");
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let split: Split =
            serde_json::from_str(&text).map_err(|e| Error::ManifestParse(e.to_string()))?;
        Ok(Some(split))
    }
}

/// Check every object against the manifest's declared shapes. Violations are
/// report entries, never errors; only unreadable manifests fail hard.
pub fn validate_dataset(manifest: &DatasetManifest) -> ValidationReport {
    let mut violations = Vec::new();
    let mut push = |object_id: Option<&str>, message: String| {
        violations.push(Violation {
            object_id: object_id.map(str::to_string),
            message,
        });
    };

    if manifest.feat_dim < 2 {
        push(
            None,
            format!("feat_dim must be >= 2, got {}", manifest.feat_dim),
        );
    }
    if manifest.views_per_object < 1 {
        push(None, "views_per_object must be >= 1".to_string());
    }

    let categories: HashSet<&str> = manifest.categories.iter().map(|c| c.id.as_str()).collect();
    if categories.len() != manifest.categories.len() {
        push(None, "duplicate category ids".to_string());
    }

    let mut seen = HashSet::new();
    for obj in &manifest.objects {
        if !seen.insert(obj.id.as_str()) {
            push(Some(&obj.id), "duplicate object id".to_string());
        }
        if !categories.contains(obj.category.as_str()) {
            push(
                Some(&obj.id),
                format!("references unknown category {}", obj.category),
            );
        }
        match load_tensor(&manifest.resolve(&obj.views_file)) {
            Ok(t) => {
                if t.dims != vec![manifest.views_per_object, manifest.feat_dim] {
                    push(
                        Some(&obj.id),
                        format!(
                            "views have dims {:?}, expected ({}, {})",
                            t.dims, manifest.views_per_object, manifest.feat_dim
                        ),
                    );
                }
            }
            Err(e) => push(Some(&obj.id), format!("views unreadable: {e}")),
        }
        match load_tensor(&manifest.resolve(&obj.cloud_file)) {
            Ok(t) => match PointCloud::from_tensor(&t) {
                Ok(cloud) => {
                    if cloud.max_norm() > 1.0 + 1e-6 {
                        push(
                            Some(&obj.id),
                            format!("cloud exceeds unit sphere (max norm {})", cloud.max_norm()),
                        );
                    }
                }
                Err(e) => push(Some(&obj.id), format!("cloud malformed: {e}")),
            },
            Err(e) => push(Some(&obj.id), format!("cloud unreadable: {e}")),
        }
    }

    for c in &manifest.categories {
        if let Some(f) = &c.landmark_file {
            match load_tensor(&manifest.resolve(f)) {
                Ok(t) => {
                    if t.dims.len() != 2 || t.dims[1] != manifest.feat_dim {
                        push(
                            None,
                            format!("landmarks for {} have dims {:?}", c.id, t.dims),
                        );
                    }
                }
                Err(e) => push(None, format!("landmarks for {} unreadable: {e}", c.id)),
            }
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        checked_objects: manifest.objects.len(),
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Writes a tiny consistent dataset: 1 category, 2 objects.
    fn write_mini(dir: &Path, views_dims: (usize, usize)) -> DatasetManifest {
        let (r, f) = views_dims;
        fs::create_dir_all(dir).unwrap();
        for (i, id) in ["a", "b"].iter().enumerate() {
            let views =
                Tensor::new(vec![r, f], (0..r * f).map(|k| (k + i + 1) as f32).collect()).unwrap();
            save_tensor(&views, &dir.join(format!("{id}.views.emb"))).unwrap();
            let mut pts = vec![0.0f32; 8 * 3];
            for (k, v) in pts.iter_mut().enumerate() {
                *v = ((k % 5) as f32 - 2.0) / 4.0;
            }
            let cloud = Tensor::new(vec![8, 3], pts).unwrap();
            save_tensor(&cloud, &dir.join(format!("{id}.cloud.emb"))).unwrap();
        }
        let manifest = DatasetManifest {
            version: 1,
            feat_dim: f,
            views_per_object: r,
            categories: vec![CategoryEntry {
                id: "cat".into(),
                landmark_file: None,
                prompt_embedding_file: None,
            }],
            objects: vec![
                ObjectEntry {
                    id: "a".into(),
                    category: "cat".into(),
                    views_file: "a.views.emb".into(),
                    cloud_file: "a.cloud.emb".into(),
                },
                ObjectEntry {
                    id: "b".into(),
                    category: "cat".into(),
                    views_file: "b.views.emb".into(),
                    cloud_file: "b.cloud.emb".into(),
                },
            ],
            root: dir.to_path_buf(),
        };
        manifest.save(&dir.join("manifest.json")).unwrap();
        DatasetManifest::load(&dir.join("manifest.json")).unwrap()
    }

    #[test]
    fn consistent_dataset_validates() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_mini(dir.path(), (3, 4));
        let report = validate_dataset(&manifest);
        assert!(report.ok, "{:?}", report.violations);
        assert_eq!(report.checked_objects, 2);
    }

    #[test]
    fn wrong_view_count_is_one_violation() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = write_mini(dir.path(), (3, 4));
        // object "b" gets a (2, 4) view matrix instead of (3, 4)
        let bad = Tensor::new(vec![2, 4], vec![1.0; 8]).unwrap();
        save_tensor(&bad, &dir.path().join("b.views.emb")).unwrap();
        manifest.root = dir.path().to_path_buf();
        let report = validate_dataset(&manifest);
        assert!(!report.ok);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].object_id.as_deref(), Some("b"));
    }

    #[test]
    fn unknown_category_is_one_violation() {
        let dir = tempfile::tempdir().unwrap();
        let mut manifest = write_mini(dir.path(), (3, 4));
        manifest.objects[0].category = "ghost".into();
        let report = validate_dataset(&manifest);
        assert!(!report.ok);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].message.contains("ghost"));
    }
}
