//! Voxel images: raw little-endian buffers with a JSON sidecar, plus the
//! synthetic geometry generators used as test fixtures.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    F64,
}

impl Dtype {
    fn bytes(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F64 => 8,
        }
    }
}

/// A 2D or 3D voxel image. Voxel value 0 is void; positive values are solid
/// and act as stiffness multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidImage {
    /// voxels per axis; `dims[2] == 1` in 2D
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// x-fastest, then y, then z
    pub values: Vec<f64>,
    pub dimensionality: usize,
    pub dtype: Dtype,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    dtype: String,
    dimensionality: usize,
}

impl SolidImage {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f64>, dtype: Dtype) -> Result<Self> {
        let n: usize = dims.iter().product();
        if values.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::param("dims", "every axis needs at least one voxel"));
        }
        if spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::param("spacing", "voxel spacing must be positive"));
        }
        if values.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param("values", "voxel values must be finite and non-negative"));
        }
        if dtype == Dtype::U8 && values.iter().any(|&v| v != v.round() || v > 255.0) {
            return Err(Error::param("values", "u8 images hold integers in 0..=255"));
        }
        if !values.iter().any(|&v| v > 0.0) {
            return Err(Error::AllVoid);
        }
        let dimensionality = if dims[2] == 1 { 2 } else { 3 };
        Ok(Self {
            dims,
            spacing,
            values,
            dimensionality,
            dtype,
        })
    }

    /// Binary image from a solid mask (1 = solid).
    pub fn from_mask(dims: [usize; 3], mask: &[bool]) -> Result<Self> {
        let values = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        Self::new(dims, [1.0; 3], values, Dtype::U8)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn is_solid(&self, idx: usize) -> bool {
        self.values[idx] > 0.0
    }

    pub fn solid_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }

    /// True if every voxel is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Face-connected components of the solid phase: per-voxel label
    /// (`usize::MAX` for void) and the component count.
    pub fn solid_components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.len()];
        let mut count = 0;
        let mut stack = Vec::new();
        for seed in 0..self.len() {
            if !self.is_solid(seed) || label[seed] != usize::MAX {
                continue;
            }
            label[seed] = count;
            stack.push(seed);
            while let Some(v) = stack.pop() {
                for w in self.face_neighbors(v) {
                    if self.is_solid(w) && label[w] == usize::MAX {
                        label[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    /// Face neighbours of a voxel (4 in 2D, 6 in 3D) inside the image.
    pub fn face_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let [i, j, k] = self.coords(idx);
        let d = self.dims;
        let mut out = [usize::MAX; 6];
        if i > 0 {
            out[0] = idx - 1;
        }
        if i + 1 < d[0] {
            out[1] = idx + 1;
        }
        if j > 0 {
            out[2] = idx - d[0];
        }
        if j + 1 < d[1] {
            out[3] = idx + d[0];
        }
        if k > 0 {
            out[4] = idx - d[0] * d[1];
        }
        if k + 1 < d[2] {
            out[5] = idx + d[0] * d[1];
        }
        out.into_iter().filter(|&v| v != usize::MAX)
    }
}

fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

fn raw_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "json") {
        path.with_extension("raw")
    } else if path.extension().is_some_and(|e| e == "raw") {
        path.to_path_buf()
    } else {
        let mut p = path.as_os_str().to_owned();
        p.push(".raw");
        PathBuf::from(p)
    }
}

/// Load `<name>.raw` + `<name>.json`. `path` may name either file or the
/// common stem.
pub fn load_image(path: impl AsRef<Path>) -> Result<SolidImage> {
    let raw = raw_path(path.as_ref());
    let side = sidecar_path(&raw);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Sidecar {
        path: side.display().to_string(),
        msg: e.to_string(),
    })?;
    let dtype = match meta.dtype.as_str() {
        "u8" => Dtype::U8,
        "f64" => Dtype::F64,
        other => return Err(Error::UnsupportedDtype(other.to_string())),
    };
    let mut dims = [1usize; 3];
    let mut spacing = [1.0f64; 3];
    if meta.dims.is_empty() || meta.dims.len() > 3 || meta.spacing.len() != meta.dims.len() {
        return Err(Error::Sidecar {
            path: side.display().to_string(),
            msg: "dims and spacing must have 1 to 3 matching entries".into(),
        });
    }
    dims[..meta.dims.len()].copy_from_slice(&meta.dims);
    spacing[..meta.spacing.len()].copy_from_slice(&meta.spacing);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let n: usize = dims.iter().product();
    let expected = n * dtype.bytes();
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = match dtype {
        Dtype::U8 => bytes.iter().map(|&b| b as f64).collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let img = SolidImage::new(dims, spacing, values, dtype)?;
    if meta.dimensionality != img.dimensionality {
        return Err(Error::Sidecar {
            path: side.display().to_string(),
            msg: format!(
                "dimensionality {} disagrees with dims {:?}",
                meta.dimensionality, meta.dims
            ),
        });
    }
    Ok(img)
}

/// Write `<stem>.raw` + `<stem>.json`; returns the raw path.
pub fn save_image(img: &SolidImage, path: impl AsRef<Path>) -> Result<PathBuf> {
    let raw = raw_path(path.as_ref());
    let side = sidecar_path(&raw);
    let bytes: Vec<u8> = match img.dtype {
        Dtype::U8 => img.values.iter().map(|&v| v as u8).collect(),
        Dtype::F64 => img.values.iter().flat_map(|v| v.to_le_bytes()).collect(),
    };
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    let nd = img.dimensionality;
    let meta = Sidecar {
        dims: img.dims[..nd].to_vec(),
        spacing: img.spacing[..nd].to_vec(),
        dtype: match img.dtype {
            Dtype::U8 => "u8".into(),
            Dtype::F64 => "f64".into(),
        },
        dimensionality: nd,
    };
    let text = serde_json::to_string_pretty(&meta).expect("sidecar serializes");
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(raw)
}

/// Two disks clipped by the left/right image edges, joined by a horizontal neck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoGrainParams {
    pub radius: usize,
    pub neck_width: usize,
    /// distance between the disk centres
    pub separation: usize,
    /// how far each disk is cut by its image edge
    pub clip: usize,
}

impl Default for TwoGrainParams {
    fn default() -> Self {
        Self {
            radius: 30,
            neck_width: 16,
            separation: 72,
            clip: 6,
        }
    }
}

/// Overlapping disks on a jittered lattice spanning the image width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiskPackParams {
    pub n: usize,
    pub radius: f64,
    /// fraction of the diameter by which lattice neighbours overlap
    pub overlap: f64,
    /// centre jitter as a fraction of the radius
    pub jitter: f64,
}

impl Default for DiskPackParams {
    fn default() -> Self {
        Self {
            n: 12,
            radius: 24.0,
            overlap: 0.15,
            jitter: 0.15,
        }
    }
}

/// Log-normal stiffness multiplier field with Gaussian covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaussianFieldParams {
    pub dims: [usize; 3],
    /// correlation length as a fraction of the longest image side
    pub correlation_length: f64,
}

impl Default for GaussianFieldParams {
    fn default() -> Self {
        Self {
            dims: [640, 640, 1],
            correlation_length: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    TwoGrain(TwoGrainParams),
    DiskPack(DiskPackParams),
    GaussianField(GaussianFieldParams),
}

pub fn generate_synthetic(kind: &SyntheticKind, seed: u64) -> Result<SolidImage> {
    match kind {
        SyntheticKind::TwoGrain(p) => two_grain(p),
        SyntheticKind::DiskPack(p) => disk_pack(p, seed),
        SyntheticKind::GaussianField(p) => gaussian_field(p, seed),
    }
}

fn two_grain(p: &TwoGrainParams) -> Result<SolidImage> {
    if p.radius == 0 || p.neck_width == 0 {
        return Err(Error::param("radius", "radius and neck width must be positive"));
    }
    if p.neck_width >= 2 * p.radius {
        return Err(Error::param("neck_width", "neck must be narrower than the disks"));
    }
    if p.clip >= p.radius {
        return Err(Error::param("clip", "clip must be smaller than the radius"));
    }
    if p.separation == 0 {
        return Err(Error::param("separation", "disk centres must be distinct"));
    }
    let r = p.radius as f64;
    let cx0 = (p.radius - p.clip) as f64;
    let cx1 = cx0 + p.separation as f64;
    let w = 2 * (p.radius - p.clip) + p.separation;
    let h = 2 * p.radius;
    let cy = r;
    let half = p.neck_width as f64 / 2.0;
    let mut mask = vec![false; w * h];
    for j in 0..h {
        for i in 0..w {
            let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
            let in0 = (x - cx0).powi(2) + (y - cy).powi(2) <= r * r;
            let in1 = (x - cx1).powi(2) + (y - cy).powi(2) <= r * r;
            let neck = x >= cx0 && x <= cx1 && (y - cy).abs() <= half;
            mask[i + w * j] = in0 || in1 || neck;
        }
    }
    SolidImage::from_mask([w, h, 1], &mask)
}

fn disk_pack(p: &DiskPackParams, seed: u64) -> Result<SolidImage> {
    if p.n == 0 || !(p.radius > 0.0) {
        return Err(Error::param("radius", "need at least one disk of positive radius"));
    }
    if !(p.overlap > 0.0 && p.overlap < 1.0) {
        return Err(Error::param("overlap", "overlap fraction must lie in (0, 1)"));
    }
    if !(p.jitter >= 0.0) {
        return Err(Error::param("jitter", "jitter must be non-negative"));
    }
    let r = p.radius;
    let step = 2.0 * r * (1.0 - p.overlap);
    let cols = ((p.n as f64 * 4.0 / 3.0).sqrt().ceil() as usize).max(1);
    let rows = p.n.div_ceil(cols);
    let w = ((cols - 1) as f64 * step + r).ceil() as usize;
    let h = ((rows - 1) as f64 * step + 2.0 * r + 4.0).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..200 {
        let mut disks = Vec::with_capacity(p.n);
        for k in 0..p.n {
            let (ci, cj) = (k % cols, k / cols);
            let jx = if ci == 0 || ci + 1 == cols { 0.0 } else { rng.random_range(-1.0..=1.0) };
            let jy: f64 = rng.random_range(-1.0..=1.0);
            let x = 0.5 * r + ci as f64 * step + jx * p.jitter * r;
            let y = r + 2.0 + cj as f64 * step + jy * p.jitter * r;
            let rad = r * rng.random_range(0.9..=1.1);
            disks.push((x, y, rad));
        }
        let mut mask = vec![false; w * h];
        for j in 0..h {
            for i in 0..w {
                let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
                mask[i + w * j] = disks
                    .iter()
                    .any(|&(cx, cy, rd)| (x - cx).powi(2) + (y - cy).powi(2) <= rd * rd);
            }
        }
        let img = SolidImage::from_mask([w, h, 1], &mask)?;
        if img.solid_components().1 == 1 {
            return Ok(img);
        }
    }
    Err(Error::param("overlap", "could not draw a connected pack; increase overlap"))
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (4.0 * sigma).ceil().max(1.0) as isize;
    (-half..=half)
        .map(|t| (-(t as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect()
}

fn gaussian_field(p: &GaussianFieldParams, seed: u64) -> Result<SolidImage> {
    if p.dims.iter().any(|&d| d == 0) {
        return Err(Error::param("dims", "field dims must be positive"));
    }
    if !(p.correlation_length > 0.0) {
        return Err(Error::param("correlation_length", "must be positive"));
    }
    let longest = *p.dims.iter().max().unwrap() as f64;
    let ell = p.correlation_length * longest;
    // white noise * exp(-x²/2s²) has covariance ∝ exp(-r²/4s²) = exp(-r²/ℓ²)
    let kernel = gaussian_kernel(ell / 2.0);
    let half = kernel.len() / 2;
    let active: Vec<bool> = p.dims.iter().map(|&d| d > 1).collect();
    let pad: Vec<usize> = active.iter().map(|&a| if a { half } else { 0 }).collect();
    let mut shape: Vec<usize> = (0..3).map(|a| p.dims[a] + 2 * pad[a]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field: Vec<f64> = (0..shape.iter().product::<usize>())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    for axis in 0..3 {
        if !active[axis] {
            continue;
        }
        let out_len = p.dims[axis];
        let mut out_shape = shape.clone();
        out_shape[axis] = out_len;
        let stride_in: [usize; 3] = [1, shape[0], shape[0] * shape[1]];
        let stride_out: [usize; 3] = [1, out_shape[0], out_shape[0] * out_shape[1]];
        let mut out = vec![0.0; out_shape.iter().product()];
        for k in 0..out_shape[2] {
            for j in 0..out_shape[1] {
                for i in 0..out_shape[0] {
                    let pos = [i, j, k];
                    let mut base = [i, j, k];
                    base[axis] = pos[axis];
                    let mut acc = 0.0;
                    for (t, &g) in kernel.iter().enumerate() {
                        let mut q = base;
                        q[axis] = pos[axis] + t;
                        acc += g * field[q[0] * stride_in[0] + q[1] * stride_in[1] + q[2] * stride_in[2]];
                    }
                    out[i * stride_out[0] + j * stride_out[1] + k * stride_out[2]] = acc;
                }
            }
        }
        field = out;
        shape = out_shape;
    }
    // standardize the realization to the target moments of ln ξ
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let values: Vec<f64> = field.iter().map(|v| ((v - mean) / sd).exp()).collect();
    let spacing = [1.0 / longest; 3];
    SolidImage::new(p.dims, spacing, values, Dtype::F64)
}
