//! Name-keyed registry of pairwise 3D scorers.
//!
//! Every measure implements [`PairScorer`] over loaded [`ObjectRecord`]s;
//! callers pick one at runtime with [`scorer("i2i")`](scorer). Store
//! precomputation and the `sim-rank` command both dispatch through here.

use std::collections::HashMap;

use crate::data::{DatasetManifest, EmbeddingMatrix, PointCloud};
use crate::error::{Error, Result};
use crate::sim::{
    build_descriptors, chamfer_distance, emd, i2i_similarity, i2l2_similarity, DescriptorSet,
    ViewSet,
};

/// Everything a scorer may need about one object.
#[derive(Debug, Clone)]
pub struct ObjectRecord {
    pub id: String,
    pub category: String,
    pub views: ViewSet,
    pub cloud: Option<PointCloud>,
    pub descriptors: Option<DescriptorSet>,
}

impl ObjectRecord {
    fn descriptors(&self) -> Result<&DescriptorSet> {
        self.descriptors
            .as_ref()
            .ok_or_else(|| Error::MissingLandmarks(self.category.clone()))
    }

    fn cloud(&self) -> Result<&PointCloud> {
        self.cloud
            .as_ref()
            .ok_or_else(|| Error::DimMismatch(format!("object {} loaded without cloud", self.id)))
    }
}

/// A pairwise 3D measure selectable by name.
pub trait PairScorer: Send + Sync {
    fn name(&self) -> &'static str;

    /// True when larger scores mean more similar. The geometric baselines
    /// return raw distances and rank ascending.
    fn higher_is_better(&self) -> bool {
        true
    }

    /// Whether scoring requires per-category landmark descriptors.
    fn needs_landmarks(&self) -> bool {
        false
    }

    /// Whether scoring requires point clouds.
    fn needs_clouds(&self) -> bool {
        false
    }

    fn score(&self, a: &ObjectRecord, b: &ObjectRecord) -> Result<f64>;
}

struct I2iScorer;

impl PairScorer for I2iScorer {
    fn name(&self) -> &'static str {
        "i2i"
    }

    fn score(&self, a: &ObjectRecord, b: &ObjectRecord) -> Result<f64> {
        i2i_similarity(&a.views, &b.views)
    }
}

struct I2l2Scorer;

impl PairScorer for I2l2Scorer {
    fn name(&self) -> &'static str {
        "i2l2"
    }

    fn needs_landmarks(&self) -> bool {
        true
    }

    fn score(&self, a: &ObjectRecord, b: &ObjectRecord) -> Result<f64> {
        i2l2_similarity(a.descriptors()?, b.descriptors()?)
    }
}

struct AvgScorer;

impl PairScorer for AvgScorer {
    fn name(&self) -> &'static str {
        "avg"
    }

    fn needs_landmarks(&self) -> bool {
        true
    }

    fn score(&self, a: &ObjectRecord, b: &ObjectRecord) -> Result<f64> {
        let x = i2i_similarity(&a.views, &b.views)?;
        let y = i2l2_similarity(a.descriptors()?, b.descriptors()?)?;
        Ok(0.5 * (x + y))
    }
}

struct ChamferScorer;

impl PairScorer for ChamferScorer {
    fn name(&self) -> &'static str {
        "chamfer"
    }

    fn higher_is_better(&self) -> bool {
        false
    }

    fn needs_clouds(&self) -> bool {
        true
    }

    fn score(&self, a: &ObjectRecord, b: &ObjectRecord) -> Result<f64> {
        chamfer_distance(a.cloud()?, b.cloud()?)
    }
}

struct EmdScorer;

impl PairScorer for EmdScorer {
    fn name(&self) -> &'static str {
        "emd"
    }

    fn higher_is_better(&self) -> bool {
        false
    }

    fn needs_clouds(&self) -> bool {
        true
    }

    fn score(&self, a: &ObjectRecord, b: &ObjectRecord) -> Result<f64> {
        emd(a.cloud()?, b.cloud()?)
    }
}

static SCORERS: &[&dyn PairScorer] = &[
    &I2iScorer,
    &I2l2Scorer,
    &AvgScorer,
    &ChamferScorer,
    &EmdScorer,
];

/// Look up a scorer by its registered name.
pub fn scorer(name: &str) -> Result<&'static dyn PairScorer> {
    SCORERS
        .iter()
        .find(|s| s.name() == name)
        .copied()
        .ok_or_else(|| Error::UnknownSimilarity(name.to_string()))
}

pub fn scorer_names() -> Vec<&'static str> {
    SCORERS.iter().map(|s| s.name()).collect()
}

/// Per-object features loaded for a whole dataset, in manifest order.
pub struct FeatureBank {
    records: Vec<ObjectRecord>,
    index: HashMap<String, usize>,
}

impl FeatureBank {
    /// Load views for every object; clouds and landmark descriptors only
    /// when asked for. Descriptor loading fails with `MissingLandmarks` if
    /// any category lacks a landmark file.
    pub fn load(
        manifest: &DatasetManifest,
        with_descriptors: bool,
        with_clouds: bool,
    ) -> Result<Self> {
        let landmarks = if with_descriptors {
            Some(manifest.load_all_landmarks()?)
        } else {
            None
        };
        let mut records = Vec::with_capacity(manifest.objects.len());
        let mut index = HashMap::new();
        for obj in &manifest.objects {
            let views_t = crate::data::load_tensor(&manifest.resolve(&obj.views_file))?;
            let views = ViewSet {
                object_id: obj.id.clone(),
                category: obj.category.clone(),
                views: EmbeddingMatrix::from_tensor(&views_t)?,
            };
            let descriptors = match &landmarks {
                Some(map) => {
                    let lm = map
                        .get(&obj.category)
                        .ok_or_else(|| Error::MissingLandmarks(obj.category.clone()))?;
                    Some(build_descriptors(&views, lm)?)
                }
                None => None,
            };
            let cloud = if with_clouds {
                let t = crate::data::load_tensor(&manifest.resolve(&obj.cloud_file))?;
                Some(PointCloud::from_tensor(&t)?)
            } else {
                None
            };
            index.insert(obj.id.clone(), records.len());
            records.push(ObjectRecord {
                id: obj.id.clone(),
                category: obj.category.clone(),
                views,
                cloud,
                descriptors,
            });
        }
        Ok(FeatureBank { records, index })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ObjectRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Result<&ObjectRecord> {
        self.index
            .get(id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::UnknownObject(id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_all_names() {
        let names = scorer_names();
        for n in ["i2i", "i2l2", "avg", "chamfer", "emd"] {
            assert!(names.contains(&n));
            let s = scorer(n).unwrap();
            assert_eq!(s.name(), n);
        }
        assert!(matches!(scorer("cosine"), Err(Error::UnknownSimilarity(_))));
    }

    #[test]
    fn distance_scorers_rank_ascending() {
        assert!(scorer("i2i").unwrap().higher_is_better());
        assert!(scorer("avg").unwrap().higher_is_better());
        assert!(!scorer("chamfer").unwrap().higher_is_better());
        assert!(!scorer("emd").unwrap().higher_is_better());
    }
}
