//! Marker-based watershed on the Euclidean distance map of the solid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{Decomposition, Method};
use crate::error::{Error, Result};
use crate::fem::{Mesh, NO_NODE};
use crate::image_io::SolidImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WatershedParams {
    /// number of seeds kept (highest maxima first); `None` keeps all
    pub n_seeds: Option<usize>,
    /// box-filter width applied to the distance map before seed detection
    pub smoothing: usize,
    /// maxima closer than this (voxels) are merged into one seed
    pub merge_distance: f64,
}

impl Default for WatershedParams {
    fn default() -> Self {
        Self {
            n_seeds: None,
            smoothing: 3,
            merge_distance: 4.0,
        }
    }
}

/// Exact Euclidean distance (in voxels) from each solid voxel centre to the
/// nearest void voxel centre. The region outside the image is not void; an
/// image without void gets a constant large distance.
pub fn distance_map(img: &SolidImage) -> Vec<f64> {
    let d = img.dims;
    let big = ((d[0] + d[1] + d[2]) as f64).powi(2) * 4.0;
    let mut f: Vec<f64> = (0..img.len()).map(|v| if img.is_solid(v) { big } else { 0.0 }).collect();
    let strides = [1, d[0], d[0] * d[1]];
    let mut line = Vec::new();
    let mut out = Vec::new();
    for axis in 0..3 {
        let len = d[axis];
        if len == 1 {
            continue;
        }
        let stride = strides[axis];
        for start in 0..img.len() {
            let c = img.coords(start);
            if c[axis] != 0 {
                continue;
            }
            line.clear();
            line.extend((0..len).map(|t| f[start + t * stride]));
            edt_1d(&line, &mut out);
            for t in 0..len {
                f[start + t * stride] = out[t];
            }
        }
    }
    f.iter().map(|&v| v.min(big).sqrt()).collect()
}

/// Lower envelope of parabolas (squared distances along one line).
fn edt_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = (q as f64 - p as f64).powi(2) + f[p];
    }
}

fn box_filter(img: &SolidImage, f: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return f.to_vec();
    }
    let r = (width / 2) as isize;
    let d = img.dims;
    let strides = [1, d[0], d[0] * d[1]];
    let mut cur = f.to_vec();
    for axis in 0..3 {
        if d[axis] == 1 {
            continue;
        }
        let mut next = vec![0.0; cur.len()];
        for v in 0..cur.len() {
            let c = img.coords(v)[axis] as isize;
            let mut s = 0.0;
            let mut cnt = 0.0;
            for t in -r..=r {
                let q = c + t;
                if q < 0 || q >= d[axis] as isize {
                    continue;
                }
                let w = (v as isize + t * strides[axis] as isize) as usize;
                s += cur[w];
                cnt += 1.0;
            }
            next[v] = s / cnt;
        }
        cur = next;
    }
    cur
}

/// Voxels within Chebyshev distance one.
fn neighbourhood(img: &SolidImage, v: usize, out: &mut Vec<usize>) {
    out.clear();
    let d = img.dims;
    let c = img.coords(v);
    let kz: &[isize] = if d[2] > 1 { &[-1, 0, 1] } else { &[0] };
    for &dz in kz {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                let (x, y, z) = (c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz);
                if x < 0 || y < 0 || z < 0 || x >= d[0] as isize || y >= d[1] as isize || z >= d[2] as isize {
                    continue;
                }
                out.push(x as usize + d[0] * (y as usize + d[1] * z as usize));
            }
        }
    }
}

struct Maximum {
    voxels: Vec<usize>,
    value: f64,
    centroid: [f64; 3],
}

fn regional_maxima(img: &SolidImage, h: &[f64]) -> Vec<Maximum> {
    let n = img.len();
    let mut seen = vec![false; n];
    let mut nb = Vec::new();
    let mut out = Vec::new();
    for s in 0..n {
        if !img.is_solid(s) || seen[s] {
            continue;
        }
        // flood the plateau of equal value
        let mut plateau = vec![s];
        seen[s] = true;
        let mut is_max = true;
        let mut k = 0;
        while k < plateau.len() {
            let v = plateau[k];
            k += 1;
            neighbourhood(img, v, &mut nb);
            for &w in &nb {
                if !img.is_solid(w) {
                    continue;
                }
                if h[w] > h[v] {
                    is_max = false;
                } else if h[w] == h[v] && !seen[w] {
                    seen[w] = true;
                    plateau.push(w);
                }
            }
        }
        if is_max {
            let mut c = [0.0; 3];
            for &v in &plateau {
                let p = img.coords(v);
                for a in 0..3 {
                    c[a] += p[a] as f64;
                }
            }
            c.iter_mut().for_each(|x| *x /= plateau.len() as f64);
            out.push(Maximum {
                value: h[s],
                voxels: plateau,
                centroid: c,
            });
        }
    }
    out
}

#[derive(PartialEq)]
struct Item {
    priority: f64,
    order: u64,
    voxel: usize,
}

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    // highest distance first, FIFO among equals
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.order.cmp(&self.order))
    }
}

pub fn watershed_decompose(img: &SolidImage, params: &WatershedParams) -> Result<Decomposition> {
    if !img.is_binary() {
        return Err(Error::GrayScale("watershed needs a binary image"));
    }
    if params.n_seeds == Some(0) {
        return Err(Error::param("n_seeds", "need at least one seed"));
    }
    let dist = distance_map(img);
    let smooth = box_filter(img, &dist, params.smoothing);
    let mut maxima = regional_maxima(img, &smooth);
    maxima.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| a.voxels[0].cmp(&b.voxels[0]))
    });
    // greedy merge of nearby maxima, strongest first
    let mut seeds: Vec<Maximum> = Vec::new();
    for m in maxima {
        let close = seeds.iter_mut().find(|s| {
            let d2: f64 = (0..3).map(|a| (s.centroid[a] - m.centroid[a]).powi(2)).sum();
            d2.sqrt() < params.merge_distance
        });
        match close {
            Some(s) => s.voxels.extend(m.voxels),
            None => seeds.push(m),
        }
    }
    if let Some(k) = params.n_seeds {
        if k > seeds.len() {
            return Err(Error::param(
                "n_seeds",
                format!("requested {k} seeds but only {} maxima were found", seeds.len()),
            ));
        }
        seeds.truncate(k);
    }
    let n = img.len();
    let mut label = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    for (l, s) in seeds.iter().enumerate() {
        for &v in &s.voxels {
            label[v] = l;
            heap.push(Item {
                priority: dist[v],
                order,
                voxel: v,
            });
            order += 1;
        }
    }
    while let Some(Item { voxel, .. }) = heap.pop() {
        for w in img.face_neighbors(voxel) {
            if img.is_solid(w) && label[w] == usize::MAX {
                label[w] = label[voxel];
                heap.push(Item {
                    priority: dist[w],
                    order,
                    voxel: w,
                });
                order += 1;
            }
        }
    }
    // solid components without a seed become their own grains
    let mut next = seeds.len();
    let mut stack = Vec::new();
    for v in 0..n {
        if img.is_solid(v) && label[v] == usize::MAX {
            label[v] = next;
            stack.push(v);
            while let Some(u) = stack.pop() {
                for w in img.face_neighbors(u) {
                    if img.is_solid(w) && label[w] == usize::MAX {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
    }
    let mesh = Mesh::new(img);
    let labels = mesh.elements.iter().map(|&v| label[v]).collect();
    let mut dec = Decomposition::from_element_labels(Method::Watershed, mesh, labels, true)?;
    dec.seeds = seeds
        .iter()
        .map(|s| *s.voxels.iter().max_by(|&&a, &&b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a))).unwrap())
        .collect();
    debug_assert!(dec.seeds.iter().all(|&v| dec.mesh.element_of_voxel[v] != NO_NODE));
    Ok(dec)
}
