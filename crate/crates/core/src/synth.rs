//! Deterministic synthetic dataset generator.
//!
//! Embeddings are planted in an orthonormal frame split into three disjoint
//! spans: an L-dim landmark span, a T-dim texture span, and a content span
//! for category centroids. View embeddings are built as
//! `normalize(centroid + subtype + view noise + texture)` where the texture
//! component lives entirely in the texture span (orthogonal to every
//! landmark) and has exactly constant magnitude, so two objects differing
//! only in texture produce identical landmark descriptors. Point clouds are
//! sampled from per-subtype parametric surfaces (ellipsoid / box / cylinder)
//! whose aspect parameters differ by category, so geometry predicts the
//! category. Everything derives from the config seed; a fixed draw order
//! makes the emitted directory byte-identical across runs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{
    save_tensor, CategoryEntry, DatasetManifest, ObjectEntry, PointCloud, Split, Tensor,
};
use crate::error::{Error, Result};
use crate::numkit::{dot, l2_normalize, norm, Mat, RngStream};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub categories: usize,
    pub subtypes: usize,
    pub per_category: usize,
    pub views: usize,
    pub feat_dim: usize,
    pub landmarks: usize,
    pub points: usize,
    pub texture_dim: usize,
    /// Per-view embedding noise magnitude (RMS).
    pub view_noise: f64,
    /// Exact magnitude of the per-object texture component.
    pub texture_scale: f64,
    /// Magnitude of the per-subtype embedding direction.
    pub subtype_scale: f64,
    /// Landmark-span component mixed into each centroid.
    pub centroid_mix: f64,
    /// Gaussian noise added to sampled cloud points.
    pub cloud_jitter: f64,
    /// Relative jitter of per-object surface parameters.
    pub param_jitter: f64,
    /// Fraction of each category held out as the test split.
    pub holdout_frac: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            categories: 2,
            subtypes: 2,
            per_category: 4,
            views: 4,
            feat_dim: 32,
            landmarks: 8,
            points: 64,
            texture_dim: 4,
            view_noise: 0.05,
            texture_scale: 0.2,
            subtype_scale: 0.35,
            centroid_mix: 0.4,
            cloud_jitter: 0.01,
            param_jitter: 0.06,
            holdout_frac: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.categories < 1 || self.subtypes < 1 || self.per_category < 1 {
            return bad("categories, subtypes, per-category counts must be >= 1".into());
        }
        if self.views < 1 {
            return bad("views must be >= 1".into());
        }
        if self.feat_dim < 2 {
            return bad("feat_dim must be >= 2".into());
        }
        if self.landmarks < 1 {
            return bad("landmarks must be >= 1".into());
        }
        if self.points < 8 {
            return bad("points must be >= 8".into());
        }
        if self.feat_dim < self.landmarks + self.texture_dim {
            return bad(format!(
                "feat_dim {} must be >= landmarks {} + texture_dim {}",
                self.feat_dim, self.landmarks, self.texture_dim
            ));
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return bad("holdout_frac must lie in [0, 1)".into());
        }
        for (name, v) in [
            ("view_noise", self.view_noise),
            ("texture_scale", self.texture_scale),
            ("subtype_scale", self.subtype_scale),
            ("centroid_mix", self.centroid_mix),
            ("cloud_jitter", self.cloud_jitter),
            ("param_jitter", self.param_jitter),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

/// Construction internals handed to tests: the planted spans, centroids,
/// per-category landmark rows, and un-normalized view construction vectors.
pub struct Planted {
    pub landmark_basis: Vec<Vec<f64>>,
    pub texture_basis: Vec<Vec<f64>>,
    pub centroids: Vec<Vec<f64>>,
    pub landmark_rows: Vec<Mat>,
    /// Per object: (R, F) un-normalized construction vectors.
    pub raw_views: Vec<Mat>,
    pub category_of: Vec<usize>,
    pub subtype_of: Vec<usize>,
    pub object_ids: Vec<String>,
}

// rng stream allocation for generation
const STREAM_BASIS: u64 = 0;
const STREAM_CENTROIDS: u64 = 1;
const STREAM_LANDMARKS: u64 = 2;
const STREAM_SUBTYPES: u64 = 3;
const STREAM_OBJECTS: u64 = 4;
const STREAM_CLOUDS: u64 = 5;

fn orthonormal_basis(rng: &mut RngStream, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = rng.normal_vec(dim);
        // two Gram-Schmidt sweeps keep residual couplings near 1e-15
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        if norm(&v) > 1e-8 {
            basis.push(l2_normalize(&v).expect("nonzero residual"));
        }
    }
    basis
}

fn span_combo(rng: &mut RngStream, basis: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; dim];
    for b in basis {
        let c = rng.normal();
        for (o, bi) in out.iter_mut().zip(b) {
            *o += c * bi;
        }
    }
    out
}

fn cat_id(c: usize) -> String {
    format!("cat{c:02}")
}

fn obj_id(c: usize, m: usize) -> String {
    format!("cat{c:02}_obj{m:03}")
}

/// Generate a dataset directory and return the planted construction.
pub fn generate_with_structure(cfg: &SynthConfig, out_dir: &Path) -> Result<Planted> {
    cfg.validate()?;
    let f_dim = cfg.feat_dim;
    for sub in ["views", "clouds", "landmarks", "prompts"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::Io {
            path: d.clone(),
            source: e,
        })?;
    }

    // disjoint spans: landmarks, texture, then as much content as fits
    let n_content = cfg.categories.min(f_dim - cfg.landmarks - cfg.texture_dim);
    let mut basis_rng = RngStream::new(cfg.seed, STREAM_BASIS);
    let basis = orthonormal_basis(
        &mut basis_rng,
        cfg.landmarks + cfg.texture_dim + n_content,
        f_dim,
    );
    let landmark_basis = basis[..cfg.landmarks].to_vec();
    let texture_basis = basis[cfg.landmarks..cfg.landmarks + cfg.texture_dim].to_vec();
    let content_basis = basis[cfg.landmarks + cfg.texture_dim..].to_vec();

    // centroids: a content axis (when available) plus a landmark-span part
    let mut centroid_rng = RngStream::new(cfg.seed, STREAM_CENTROIDS);
    let mut centroids = Vec::with_capacity(cfg.categories);
    for c in 0..cfg.categories {
        let lm_part = l2_normalize(&span_combo(&mut centroid_rng, &landmark_basis, f_dim))?;
        let mut v = vec![0.0f64; f_dim];
        if c < content_basis.len() {
            v.copy_from_slice(&content_basis[c]);
        }
        for (vi, li) in v.iter_mut().zip(&lm_part) {
            *vi += cfg.centroid_mix * li;
        }
        centroids.push(l2_normalize(&v)?);
    }

    // per-category landmark rows: random unit combinations of the span
    let mut lm_rng = RngStream::new(cfg.seed, STREAM_LANDMARKS);
    let mut landmark_rows = Vec::with_capacity(cfg.categories);
    for _ in 0..cfg.categories {
        let rows: Vec<Vec<f64>> = (0..cfg.landmarks)
            .map(|_| l2_normalize(&span_combo(&mut lm_rng, &landmark_basis, f_dim)).unwrap())
            .collect();
        landmark_rows.push(Mat::from_rows(&rows));
    }

    // subtype embedding directions and surface parameters
    let mut sub_rng = RngStream::new(cfg.seed, STREAM_SUBTYPES);
    let mut subtype_dirs = Vec::with_capacity(cfg.categories * cfg.subtypes);
    let mut subtype_shapes = Vec::with_capacity(cfg.categories * cfg.subtypes);
    for c in 0..cfg.categories {
        let base = base_shape(c);
        for k in 0..cfg.subtypes {
            let lm = l2_normalize(&span_combo(&mut sub_rng, &landmark_basis, f_dim))?;
            let mut dir: Vec<f64> = lm.iter().map(|v| 0.75 * v).collect();
            if !content_basis.is_empty() {
                let ct = l2_normalize(&span_combo(&mut sub_rng, &content_basis, f_dim))?;
                for (d, c) in dir.iter_mut().zip(&ct) {
                    *d += 0.25 * c;
                }
            }
            let unit = l2_normalize(&dir)?;
            subtype_dirs.push(
                unit.iter()
                    .map(|v| cfg.subtype_scale * v)
                    .collect::<Vec<_>>(),
            );
            subtype_shapes.push(base.subtype_variant(k, cfg.subtypes, &mut sub_rng));
        }
    }

    // objects
    let mut obj_rng = RngStream::new(cfg.seed, STREAM_OBJECTS);
    let mut cloud_rng = RngStream::new(cfg.seed, STREAM_CLOUDS);
    let noise_span: Vec<Vec<f64>> = landmark_basis
        .iter()
        .chain(content_basis.iter())
        .cloned()
        .collect();
    let noise_scale = cfg.view_noise / (noise_span.len() as f64).sqrt();

    let mut objects = Vec::new();
    let mut raw_views = Vec::new();
    let mut category_of = Vec::new();
    let mut subtype_of = Vec::new();
    let mut object_ids = Vec::new();
    let mut split = Split::default();

    for c in 0..cfg.categories {
        let test_count = (cfg.per_category as f64 * cfg.holdout_frac).floor() as usize;
        for m in 0..cfg.per_category {
            let k = m % cfg.subtypes;
            let id = obj_id(c, m);
            let base: Vec<f64> = centroids[c]
                .iter()
                .zip(&subtype_dirs[c * cfg.subtypes + k])
                .map(|(a, b)| a + b)
                .collect();

            // texture: exact-magnitude draw inside the texture span
            let mut texture = vec![0.0f64; f_dim];
            if cfg.texture_dim > 0 && cfg.texture_scale > 0.0 {
                let t = span_combo(&mut obj_rng, &texture_basis, f_dim);
                let t = l2_normalize(&t)?;
                for (o, ti) in texture.iter_mut().zip(&t) {
                    *o = cfg.texture_scale * ti;
                }
            } else if cfg.texture_dim > 0 {
                // keep the draw sequence stable even when the scale is zero
                let _ = span_combo(&mut obj_rng, &texture_basis, f_dim);
            }

            let mut raw = Mat::zeros(cfg.views, f_dim);
            let mut stored = Mat::zeros(cfg.views, f_dim);
            for r in 0..cfg.views {
                let noise = span_combo(&mut obj_rng, &noise_span, f_dim);
                let row: Vec<f64> = base
                    .iter()
                    .zip(&texture)
                    .zip(&noise)
                    .map(|((b, t), n)| b + t + noise_scale * n)
                    .collect();
                raw.row_mut(r).copy_from_slice(&row);
                stored.row_mut(r).copy_from_slice(&l2_normalize(&row)?);
            }

            let views_rel = format!("views/{id}.emb");
            let views_t = Tensor {
                dims: vec![cfg.views, f_dim],
                data: stored.data().iter().map(|&v| v as f32).collect(),
            };
            save_tensor(&views_t, &out_dir.join(&views_rel))?;

            let cloud = sample_cloud(
                &subtype_shapes[c * cfg.subtypes + k],
                cfg.points,
                cfg.param_jitter,
                cfg.cloud_jitter,
                &mut cloud_rng,
            );
            let cloud_rel = format!("clouds/{id}.emb");
            save_tensor(&cloud.to_tensor(), &out_dir.join(&cloud_rel))?;

            objects.push(ObjectEntry {
                id: id.clone(),
                category: cat_id(c),
                views_file: views_rel,
                cloud_file: cloud_rel,
            });
            if m >= cfg.per_category - test_count {
                split.test.push(id.clone());
            } else {
                split.train.push(id.clone());
            }
            raw_views.push(raw);
            category_of.push(c);
            subtype_of.push(k);
            object_ids.push(id);
        }
    }

    // landmark and prompt files
    let mut categories = Vec::new();
    for c in 0..cfg.categories {
        let lm_rel = format!("landmarks/{}.emb", cat_id(c));
        let lm = &landmark_rows[c];
        save_tensor(
            &Tensor {
                dims: vec![lm.rows(), lm.cols()],
                data: lm.data().iter().map(|&v| v as f32).collect(),
            },
            &out_dir.join(&lm_rel),
        )?;
        let prompt_rel = format!("prompts/{}.emb", cat_id(c));
        save_tensor(
            &Tensor {
                dims: vec![1, f_dim],
                data: centroids[c].iter().map(|&v| v as f32).collect(),
            },
            &out_dir.join(&prompt_rel),
        )?;
        categories.push(CategoryEntry {
            id: cat_id(c),
            landmark_file: Some(lm_rel),
            prompt_embedding_file: Some(prompt_rel),
        });
    }

    let manifest = DatasetManifest {
        version: 1,
        feat_dim: f_dim,
        views_per_object: cfg.views,
        categories,
        objects,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    let split_path = out_dir.join("split.json");
    fs::write(
        &split_path,
        serde_json::to_string_pretty(&split).expect("split serializes"),
    )
    .map_err(|e| Error::Io {
        path: split_path.clone(),
        source: e,
    })?;
    let cfg_path = out_dir.join("synth_config.json");
    fs::write(
        &cfg_path,
        serde_json::to_string_pretty(cfg).expect("config serializes"),
    )
    .map_err(|e| Error::Io {
        path: cfg_path.clone(),
        source: e,
    })?;

    Ok(Planted {
        landmark_basis,
        texture_basis,
        centroids,
        landmark_rows,
        raw_views,
        category_of,
        subtype_of,
        object_ids,
    })
}

/// Generate a dataset directory.
pub fn generate(cfg: &SynthConfig, out_dir: &Path) -> Result<()> {
    generate_with_structure(cfg, out_dir).map(|_| ())
}

#[derive(Debug, Clone, Copy)]
enum SurfaceKind {
    Ellipsoid,
    Box,
    Cylinder,
}

#[derive(Debug, Clone, Copy)]
struct Surface {
    kind: SurfaceKind,
    // semi-extents along x, y, z
    a: f64,
    b: f64,
    c: f64,
}

impl Surface {
    fn subtype_variant(&self, k: usize, count: usize, rng: &mut RngStream) -> Surface {
        // subtypes vary eccentricity and only mildly the aspect, so the
        // category's aspect rung stays identifiable
        let t = if count > 1 {
            k as f64 / (count - 1) as f64
        } else {
            0.5
        };
        let aspect = 0.93 + 0.14 * t + 0.02 * rng.uniform();
        let squash = 1.0 - 0.38 * t + 0.03 * rng.uniform();
        Surface {
            kind: self.kind,
            a: self.a,
            b: self.b * squash,
            c: self.c * aspect,
        }
    }
}

fn base_shape(category: usize) -> Surface {
    let kind = match category % 3 {
        0 => SurfaceKind::Ellipsoid,
        1 => SurfaceKind::Box,
        _ => SurfaceKind::Cylinder,
    };
    // every category gets its own z-aspect rung of a log ladder, so no two
    // categories share both kind and proportions
    let c = 0.3 * 1.39f64.powi(category as i32);
    Surface {
        kind,
        a: 1.0,
        b: 1.0,
        c,
    }
}

fn sample_cloud(
    surface: &Surface,
    points: usize,
    param_jitter: f64,
    cloud_jitter: f64,
    rng: &mut RngStream,
) -> PointCloud {
    let ja = 1.0 + param_jitter * rng.uniform_in(-1.0, 1.0);
    let jb = 1.0 + param_jitter * rng.uniform_in(-1.0, 1.0);
    let jc = 1.0 + param_jitter * rng.uniform_in(-1.0, 1.0);
    let (a, b, c) = (surface.a * ja, surface.b * jb, surface.c * jc);
    let mut pts = Vec::with_capacity(points);
    for _ in 0..points {
        let p = match surface.kind {
            SurfaceKind::Ellipsoid => {
                let d = l2_normalize(&[rng.normal(), rng.normal(), rng.normal()]).unwrap();
                [a * d[0], b * d[1], c * d[2]]
            }
            SurfaceKind::Box => {
                let areas = [b * c, a * c, a * b];
                let total = 2.0 * (areas[0] + areas[1] + areas[2]);
                let mut pick = rng.uniform() * total;
                let mut axis = 0usize;
                for (i, &ar) in areas.iter().enumerate() {
                    if pick < 2.0 * ar {
                        axis = i;
                        break;
                    }
                    pick -= 2.0 * ar;
                }
                let side = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                let u = rng.uniform_in(-1.0, 1.0);
                let v = rng.uniform_in(-1.0, 1.0);
                match axis {
                    0 => [side * a, u * b, v * c],
                    1 => [u * a, side * b, v * c],
                    _ => [u * a, v * b, side * c],
                }
            }
            SurfaceKind::Cylinder => {
                let lateral = std::f64::consts::TAU * 0.5 * (a + b) * (2.0 * c);
                let caps = 2.0 * std::f64::consts::PI * a * b;
                let theta = rng.uniform() * std::f64::consts::TAU;
                if rng.uniform() * (lateral + caps) < lateral {
                    [a * theta.cos(), b * theta.sin(), rng.uniform_in(-c, c)]
                } else {
                    let r = rng.uniform().sqrt();
                    let side = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    [a * r * theta.cos(), b * r * theta.sin(), side * c]
                }
            }
        };
        pts.push([
            p[0] + cloud_jitter * rng.normal(),
            p[1] + cloud_jitter * rng.normal(),
            p[2] + cloud_jitter * rng.normal(),
        ]);
    }
    let mut cloud = PointCloud { points: pts };
    cloud.normalize_unit_sphere();
    cloud
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetManifest;
    use crate::sim::{i2i_similarity, i2l2_similarity, FeatureBank};

    fn texture_fixture() -> SynthConfig {
        SynthConfig {
            categories: 2,
            subtypes: 2,
            per_category: 4,
            views: 4,
            feat_dim: 32,
            landmarks: 8,
            texture_dim: 8,
            points: 32,
            view_noise: 0.0,
            texture_scale: 0.3,
            seed: 77,
            ..SynthConfig::default()
        }
    }

    fn read_all_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    let rel = p.strip_prefix(dir).unwrap().to_string_lossy().to_string();
                    files.push((rel, fs::read(&p).unwrap()));
                }
            }
        }
        files.sort();
        files
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = SynthConfig {
            seed: 5,
            ..SynthConfig::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate(&cfg, d1.path()).unwrap();
        generate(&cfg, d2.path()).unwrap();
        let f1 = read_all_bytes(d1.path());
        let f2 = read_all_bytes(d2.path());
        assert_eq!(f1.len(), f2.len());
        for ((n1, b1), (n2, b2)) in f1.iter().zip(&f2) {
            assert_eq!(n1, n2);
            assert_eq!(b1, b2, "file {n1} differs between runs");
        }
    }

    #[test]
    fn same_subtype_zero_noise_views_match() {
        let cfg = SynthConfig {
            view_noise: 0.0,
            texture_scale: 0.0,
            ..texture_fixture()
        };
        let dir = tempfile::tempdir().unwrap();
        generate(&cfg, dir.path()).unwrap();
        let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let bank = FeatureBank::load(&manifest, false, false).unwrap();
        // objects 0 and 2 of cat00 share subtype 0
        let a = bank.get("cat00_obj000").unwrap();
        let b = bank.get("cat00_obj002").unwrap();
        let s = i2i_similarity(&a.views, &b.views).unwrap();
        assert!((s - 1.0).abs() < 1e-6, "got {s}");
    }

    #[test]
    fn texture_only_difference_is_invisible_to_descriptors() {
        let cfg = texture_fixture();
        let dir = tempfile::tempdir().unwrap();
        generate(&cfg, dir.path()).unwrap();
        let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let bank = FeatureBank::load(&manifest, true, false).unwrap();
        let a = bank.get("cat00_obj000").unwrap();
        let b = bank.get("cat00_obj002").unwrap();
        let i2i = i2i_similarity(&a.views, &b.views).unwrap();
        let i2l2 = i2l2_similarity(
            a.descriptors.as_ref().unwrap(),
            b.descriptors.as_ref().unwrap(),
        )
        .unwrap();
        assert!(i2l2 > 1.0 - 1e-6, "descriptor similarity {i2l2}");
        assert!(i2i < 1.0 - 1e-3, "view similarity {i2i}");
    }

    #[test]
    fn texture_span_is_orthogonal_to_landmarks() {
        let cfg = texture_fixture();
        let dir = tempfile::tempdir().unwrap();
        let planted = generate_with_structure(&cfg, dir.path()).unwrap();
        let mut max_dot: f64 = 0.0;
        for t in &planted.texture_basis {
            for lm_set in &planted.landmark_rows {
                for l in 0..lm_set.rows() {
                    max_dot = max_dot.max(dot(t, lm_set.row(l)).abs());
                }
            }
        }
        assert!(max_dot <= 1e-9, "max coupling {max_dot}");
    }

    #[test]
    fn ground_truth_views_classify_perfectly() {
        let cfg = SynthConfig {
            categories: 4,
            per_category: 6,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        generate(&cfg, dir.path()).unwrap();
        let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let prompts = manifest.load_prompts().unwrap();
        let bank = FeatureBank::load(&manifest, false, false).unwrap();
        let cat_ids: Vec<String> = manifest.categories.iter().map(|c| c.id.clone()).collect();
        let mut hits = 0;
        for rec in bank.records() {
            let view = rec.views.views.row(0);
            let best = cat_ids
                .iter()
                .max_by(|x, y| {
                    dot(view, &prompts[*x])
                        .partial_cmp(&dot(view, &prompts[*y]))
                        .unwrap()
                })
                .unwrap();
            if *best == rec.category {
                hits += 1;
            }
        }
        assert_eq!(hits, bank.len(), "planted separability must be exact");
    }

    #[test]
    fn split_respects_holdout() {
        let cfg = SynthConfig {
            per_category: 5,
            holdout_frac: 0.2,
            ..SynthConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        generate(&cfg, dir.path()).unwrap();
        let manifest = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let split = manifest.load_split().unwrap().unwrap();
        assert_eq!(split.test.len(), cfg.categories); // 1 per category
        assert_eq!(split.train.len() + split.test.len(), manifest.objects.len());
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SynthConfig {
            feat_dim: 8,
            landmarks: 6,
            texture_dim: 4,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate(&cfg, Path::new("/nonexistent")),
            Err(Error::ConfigInvalid(_))
        ));
    }
}
