//! The EMB1 binary tensor format and its typed views.
//!
//! Byte layout (little-endian throughout):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `EMB1`                  |
//! | 4      | 1    | version, currently 1          |
//! | 5      | 1    | dtype code, 1 = f32           |
//! | 6      | 2    | reserved, zero                |
//! | 8      | 4    | u32 ndim                      |
//! | 12     | 8n   | u64 dims[ndim]                |
//! | ...    | 4k   | row-major f32 payload         |
//!
//! A [`Tensor`] round-trips bit-exactly. Typed ingest (`EmbeddingMatrix`,
//! `PointCloud`) widens to f64 and applies the documented normalization.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::{self, Mat};

const MAGIC: &[u8; 4] = b"EMB1";
const VERSION: u8 = 1;
const DTYPE_F32: u8 = 1;

/// Raw tensor exactly as stored on disk: dims plus a row-major f32 payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::DimMismatch(format!(
                "tensor dims must be non-empty and positive, got {dims:?}"
            )));
        }
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::DimMismatch(format!(
                "payload has {} values, dims {:?} require {}",
                data.len(),
                dims,
                expect
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn elem_count(&self) -> usize {
        self.dims.iter().product()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write a tensor in EMB1 layout. The payload must be finite.
pub fn save_tensor(tensor: &Tensor, path: &Path) -> Result<()> {
    if tensor.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinitePayload {
            path: path.to_path_buf(),
        });
    }
    let mut buf = Vec::with_capacity(12 + tensor.dims.len() * 8 + tensor.data.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(DTYPE_F32);
    buf.extend_from_slice(&[0u8, 0u8]);
    buf.extend_from_slice(&(tensor.dims.len() as u32).to_le_bytes());
    for &d in &tensor.dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in &tensor.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Read a tensor in EMB1 layout, verifying header consistency and finiteness.
pub fn load_tensor(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| io_err(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| io_err(path, e))?;

    let trunc = |detail: &str| Error::TruncatedFile {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    if bytes.len() < 12 {
        return Err(trunc("shorter than fixed header"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes[4] != VERSION {
        return Err(Error::DimMismatch(format!(
            "{}: unsupported version {}",
            path.display(),
            bytes[4]
        )));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::DimMismatch(format!(
            "{}: unsupported dtype code {}",
            path.display(),
            bytes[5]
        )));
    }
    let ndim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if ndim == 0 || ndim > 8 {
        return Err(Error::DimMismatch(format!(
            "{}: ndim {ndim} outside supported range 1..=8",
            path.display()
        )));
    }
    let dims_end = 12 + ndim * 8;
    if bytes.len() < dims_end {
        return Err(trunc("dims table cut short"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 12 + i * 8;
        let d = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        if d == 0 {
            return Err(Error::DimMismatch(format!(
                "{}: zero-sized dimension",
                path.display()
            )));
        }
        dims.push(d as usize);
    }
    let count: usize = dims.iter().product();
    let want = dims_end + count * 4;
    if bytes.len() < want {
        return Err(trunc(&format!(
            "payload holds {} floats, header declares {}",
            (bytes.len() - dims_end) / 4,
            count
        )));
    }
    if bytes.len() > want {
        return Err(Error::DimMismatch(format!(
            "{}: {} trailing bytes after declared payload",
            path.display(),
            bytes.len() - want
        )));
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let off = dims_end + i * 4;
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinitePayload {
                path: path.to_path_buf(),
            });
        }
        data.push(v);
    }
    Ok(Tensor { dims, data })
}

/// Rows of L2-normalized feature vectors, widened to f64 for all arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    mat: Mat,
}

impl EmbeddingMatrix {
    /// Typed ingest: requires a 2-d tensor and re-normalizes every row.
    /// Upstream-normalized rows drift once stored in 32 bits, so ingest
    /// re-normalizes instead of rejecting near-unit rows.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 2 {
            return Err(Error::DimMismatch(format!(
                "embedding matrix must be 2-d, got dims {:?}",
                t.dims
            )));
        }
        let (rows, cols) = (t.dims[0], t.dims[1]);
        let mut mat = Mat::zeros(rows, cols);
        for i in 0..rows {
            let row: Vec<f64> = t.data[i * cols..(i + 1) * cols]
                .iter()
                .map(|&v| v as f64)
                .collect();
            let unit = numkit::l2_normalize(&row)?;
            mat.row_mut(i).copy_from_slice(&unit);
        }
        Ok(EmbeddingMatrix { mat })
    }

    /// Wrap rows as-is, without normalizing. Callers own the invariant.
    pub fn from_mat_raw(mat: Mat) -> Self {
        EmbeddingMatrix { mat }
    }

    /// Normalize each row of `mat` and wrap.
    pub fn from_mat_normalized(mut mat: Mat) -> Result<Self> {
        for i in 0..mat.rows() {
            numkit::l2_normalize_in_place(mat.row_mut(i))?;
        }
        Ok(EmbeddingMatrix { mat })
    }

    pub fn rows(&self) -> usize {
        self.mat.rows()
    }

    pub fn dim(&self) -> usize {
        self.mat.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.mat.row(i)
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }

    /// Narrow back to 32-bit storage.
    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.mat.rows(), self.mat.cols()],
            data: self.mat.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

/// A 3D point cloud; coordinates widened to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 2 || t.dims[1] != 3 {
            return Err(Error::DimMismatch(format!(
                "point cloud must have dims (P, 3), got {:?}",
                t.dims
            )));
        }
        let p = t.dims[0];
        if p < 8 {
            return Err(Error::DimMismatch(format!(
                "point cloud needs at least 8 points, got {p}"
            )));
        }
        let mut points = Vec::with_capacity(p);
        for i in 0..p {
            points.push([
                t.data[i * 3] as f64,
                t.data[i * 3 + 1] as f64,
                t.data[i * 3 + 2] as f64,
            ]);
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Center on the centroid and scale so the farthest point sits on the
    /// unit sphere.
    pub fn normalize_unit_sphere(&mut self) {
        let n = self.points.len() as f64;
        if self.points.is_empty() {
            return;
        }
        let mut c = [0.0f64; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        for v in &mut c {
            *v /= n;
        }
        let mut max_r = 0.0f64;
        for p in &mut self.points {
            for k in 0..3 {
                p[k] -= c[k];
            }
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            max_r = max_r.max(r);
        }
        if max_r > 1e-12 {
            for p in &mut self.points {
                for v in p.iter_mut() {
                    *v /= max_r;
                }
            }
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.points.len() * 3);
        for p in &self.points {
            data.extend_from_slice(&[p[0] as f32, p[1] as f32, p[2] as f32]);
        }
        Tensor {
            dims: vec![self.points.len(), 3],
            data,
        }
    }
}

/// Per-category landmark embeddings: an (L, F) matrix with unit rows.
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    pub category: String,
    pub matrix: EmbeddingMatrix,
}

impl LandmarkSet {
    pub fn count(&self) -> usize {
        self.matrix.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn round_trip_small() {
        let dir = tmp();
        let path = dir.path().join("a.emb");
        let t = Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        save_tensor(&t, &path).unwrap();
        let back = load_tensor(&path).unwrap();
        assert_eq!(t, back);
        let emb = EmbeddingMatrix::from_tensor(&back).unwrap();
        assert_eq!(emb.rows(), 2);
        for i in 0..2 {
            assert!((numkit::norm(emb.row(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one_round_trip() {
        let dir = tmp();
        let path = dir.path().join("s.emb");
        let t = Tensor::new(vec![1, 1], vec![-7.25]).unwrap();
        save_tensor(&t, &path).unwrap();
        assert_eq!(load_tensor(&path).unwrap(), t);
    }

    #[test]
    fn empty_dims_rejected() {
        assert!(Tensor::new(vec![], vec![]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tmp();
        let path = dir.path().join("t.emb");
        let t = Tensor::new(vec![2, 4], vec![0.5; 8]).unwrap();
        save_tensor(&t, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4); // drop one float
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_tensor(&path),
            Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tmp();
        let path = dir.path().join("m.emb");
        std::fs::write(&path, b"NOPE\x01\x01\x00\x00\x01\x00\x00\x00").unwrap();
        assert!(matches!(load_tensor(&path), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn non_finite_payload_rejected_on_save() {
        let dir = tmp();
        let t = Tensor::new(vec![1, 2], vec![1.0, f32::NAN]).unwrap();
        assert!(matches!(
            save_tensor(&t, &dir.path().join("n.emb")),
            Err(Error::NonFinitePayload { .. })
        ));
    }

    #[test]
    fn cloud_requires_p3() {
        let t = Tensor::new(vec![4, 2], vec![0.0; 8]).unwrap();
        assert!(PointCloud::from_tensor(&t).is_err());
    }

    #[test]
    fn unit_sphere_normalization() {
        let mut c = PointCloud {
            points: vec![
                [2.0, 0.0, 0.0],
                [4.0, 0.0, 0.0],
                [3.0, 5.0, -1.0],
                [3.0, -5.0, 1.0],
            ],
        };
        c.normalize_unit_sphere();
        assert!(c.max_norm() <= 1.0 + 1e-12);
        assert!((c.max_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn large_matrix_round_trip_is_byte_exact() {
        let mut rng = crate::numkit::RngStream::new(512, 0);
        let data: Vec<f32> = (0..100 * 512).map(|_| rng.normal() as f32).collect();
        let t = Tensor::new(vec![100, 512], data).unwrap();
        let dir = tmp();
        let path = dir.path().join("big.emb");
        save_tensor(&t, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = load_tensor(&path).unwrap();
        save_tensor(&back, &path).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
        assert_eq!(t, back);
    }

    proptest! {
        // byte-level round trip is bit-exact for any finite payload
        #[test]
        fn round_trip_bit_exact(
            rows in 1usize..20,
            cols in 1usize..20,
            seed in any::<u64>(),
        ) {
            let mut rng = crate::numkit::RngStream::new(seed, 0);
            let data: Vec<f32> = (0..rows * cols).map(|_| (rng.normal() * 100.0) as f32).collect();
            let t = Tensor::new(vec![rows, cols], data).unwrap();
            let dir = tmp();
            let path = dir.path().join("p.emb");
            save_tensor(&t, &path).unwrap();
            let back = load_tensor(&path).unwrap();
            prop_assert_eq!(t.dims, back.dims);
            for (a, b) in t.data.iter().zip(&back.data) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
