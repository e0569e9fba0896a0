//! Artifact writers: Matrix Market, CSV, legacy VTK and JSON sidecars.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::Mesh;
use crate::sparse::CsrMatrix;

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Write a coordinate real general Matrix Market file.
pub fn write_matrix_market(path: impl AsRef<Path>, a: &CsrMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz()).map_err(io)?;
    for r in 0..a.nrows() {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:e}", r + 1, c + 1, v).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CsrMatrix> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Sidecar {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut lines = BufReader::new(f).lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?.map_err(|e| Error::io(path, e))?;
    if !header.starts_with("%%MatrixMarket matrix coordinate real") {
        return Err(bad("unsupported Matrix Market header"));
    }
    let symmetric = header.contains("symmetric");
    let mut size: Option<(usize, usize)> = None;
    let mut t = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if size.is_none() {
            if parts.len() != 3 {
                return Err(bad("bad size line"));
            }
            let p = |s: &str| s.parse::<usize>().map_err(|_| bad("bad size line"));
            size = Some((p(parts[0])?, p(parts[1])?));
            continue;
        }
        if parts.len() != 3 {
            return Err(bad("bad entry line"));
        }
        let r: usize = parts[0].parse().map_err(|_| bad("bad row index"))?;
        let c: usize = parts[1].parse().map_err(|_| bad("bad column index"))?;
        let v: f64 = parts[2].parse().map_err(|_| bad("bad value"))?;
        t.push((r - 1, c - 1, v));
        if symmetric && r != c {
            t.push((c - 1, r - 1, v));
        }
    }
    let (nr, nc) = size.ok_or_else(|| bad("missing size line"))?;
    Ok(CsrMatrix::from_triplets(nr, nc, &t))
}

/// One value per line.
pub fn write_vector_csv(path: impl AsRef<Path>, header: &str, v: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for x in v {
        writeln!(w, "{x:e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Sidecar {
                    path: path.display().to_string(),
                    msg: format!("bad value {l:?}"),
                })
        })
        .collect()
}

/// `iteration,residual` rows.
pub fn write_residuals_csv(path: impl AsRef<Path>, residuals: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("iteration,residual\n");
    for (i, r) in residuals.iter().enumerate() {
        let _ = writeln!(s, "{i},{r:e}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Sidecar {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `<file>.meta.json` next to an artifact.
pub fn meta_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

pub fn write_meta<T: Serialize>(artifact: &Path, meta: &T) -> Result<()> {
    write_json(meta_path(artifact), meta)
}

/// A field sampled on the node grid or on the voxel grid.
pub enum VtkField<'a> {
    /// `dim` components per mesh node, DOF-ordered (`comp * n_nodes + node`)
    NodalVector(&'a str, &'a [f64]),
    /// one value per mesh node
    NodalScalar(&'a str, &'a [f64]),
    /// one value per element (voxel cell); void cells get 0
    CellScalar(&'a str, &'a [f64]),
}

/// Legacy VTK STRUCTURED_POINTS file. Points are grid nodes, cells are voxels;
/// values outside the solid are written as zero.
pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, fields: &[VtkField]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    let gd = mesh.node_grid_dims();
    let npts: usize = gd.iter().product();
    let ncells: usize = mesh.dims.iter().product();
    let nn = mesh.n_nodes();
    writeln!(w, "# vtk DataFile Version 3.0").map_err(io)?;
    writeln!(w, "hplmm").map_err(io)?;
    writeln!(w, "ASCII").map_err(io)?;
    writeln!(w, "DATASET STRUCTURED_POINTS").map_err(io)?;
    writeln!(w, "DIMENSIONS {} {} {}", gd[0], gd[1], gd[2]).map_err(io)?;
    writeln!(w, "ORIGIN 0 0 0").map_err(io)?;
    writeln!(w, "SPACING {} {} {}", mesh.spacing[0], mesh.spacing[1], mesh.spacing[2]).map_err(io)?;
    let point_fields: Vec<&VtkField> = fields
        .iter()
        .filter(|f| !matches!(f, VtkField::CellScalar(..)))
        .collect();
    let cell_fields: Vec<&VtkField> = fields.iter().filter(|f| matches!(f, VtkField::CellScalar(..))).collect();
    if !point_fields.is_empty() {
        writeln!(w, "POINT_DATA {npts}").map_err(io)?;
        for f in point_fields {
            match f {
                VtkField::NodalVector(name, v) => {
                    writeln!(w, "VECTORS {name} double").map_err(io)?;
                    for g in 0..npts {
                        let n = mesh.node_of_grid[g];
                        let mut c = [0.0; 3];
                        if n != crate::fem::NO_NODE {
                            for (d, cd) in c.iter_mut().enumerate().take(mesh.dim) {
                                *cd = v[d * nn + n];
                            }
                        }
                        writeln!(w, "{:e} {:e} {:e}", c[0], c[1], c[2]).map_err(io)?;
                    }
                }
                VtkField::NodalScalar(name, v) => {
                    writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default").map_err(io)?;
                    for g in 0..npts {
                        let n = mesh.node_of_grid[g];
                        let x = if n == crate::fem::NO_NODE { 0.0 } else { v[n] };
                        writeln!(w, "{x:e}").map_err(io)?;
                    }
                }
                VtkField::CellScalar(..) => unreachable!(),
            }
        }
    }
    if !cell_fields.is_empty() {
        writeln!(w, "CELL_DATA {ncells}").map_err(io)?;
        for f in cell_fields {
            if let VtkField::CellScalar(name, v) = f {
                writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default").map_err(io)?;
                for vox in 0..ncells {
                    let e = mesh.element_of_voxel[vox];
                    let x = if e == crate::fem::NO_NODE { 0.0 } else { v[e] };
                    writeln!(w, "{x:e}").map_err(io)?;
                }
            }
        }
    }
    w.flush().map_err(io)
}
