//! Partition of the solid into grain grids, contact-interface extraction and
//! contact-grid dilation.

mod spectral;
mod watershed;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{FemSystem, Mesh, NO_NODE};
use crate::image_io::{Dtype, SolidImage};

pub use spectral::{spectral_decompose, SpectralParams};
pub use watershed::{distance_map, watershed_decompose, WatershedParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Watershed,
    Spectral,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactInterface {
    pub id: usize,
    /// grain pair with `grains.0 < grains.1`
    pub grains: (usize, usize),
    /// FEM node ids, ascending
    pub nodes: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    /// unit normal per node, pointing from `grains.0` into `grains.1`
    pub normals: Vec<[f64; 3]>,
}

impl ContactInterface {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Orthonormal frame `[n, t1, t2]` at node `i` (`t2` is unused in 2D).
    pub fn frame(&self, i: usize) -> [[f64; 3]; 3] {
        let n = self.normals[i];
        let pick = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let d = pick[0] * n[0] + pick[1] * n[1] + pick[2] * n[2];
        let mut t1 = [pick[0] - d * n[0], pick[1] - d * n[1], pick[2] - d * n[2]];
        let l = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
        t1.iter_mut().for_each(|v| *v /= l);
        let t2 = [
            n[1] * t1[2] - n[2] * t1[1],
            n[2] * t1[0] - n[0] * t1[2],
            n[0] * t1[1] - n[1] * t1[0],
        ];
        [n, t1, t2]
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub method: Method,
    pub mesh: Mesh,
    pub n_grains: usize,
    /// grain id per element
    pub grain_of_element: Vec<usize>,
    pub interfaces: Vec<ContactInterface>,
    /// element ids per contact grid, one per interface
    pub contact_grids: Vec<Vec<usize>>,
    /// watershed seed voxels (empty for other methods)
    pub seeds: Vec<usize>,
}

impl Decomposition {
    /// Build from per-element labels. When `merge_fragments` is set, every
    /// face-connected piece of a grain except its largest is moved to the
    /// neighbouring grain it shares the most faces with.
    pub fn from_element_labels(
        method: Method,
        mesh: Mesh,
        labels: Vec<usize>,
        merge_fragments: bool,
    ) -> Result<Self> {
        assert_eq!(labels.len(), mesh.n_elements());
        let mut labels = labels;
        if merge_fragments {
            merge_pieces(&mesh, &mut labels);
        }
        let (labels, n_grains) = relabel(&labels);
        let interfaces = extract_interfaces(&mesh, &labels, n_grains);
        Ok(Self {
            method,
            mesh,
            n_grains,
            grain_of_element: labels,
            interfaces,
            contact_grids: Vec::new(),
            seeds: Vec::new(),
        })
    }

    pub fn n_interfaces(&self) -> usize {
        self.interfaces.len()
    }

    pub fn grain_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_grains];
        for (e, &g) in self.grain_of_element.iter().enumerate() {
            out[g].push(e);
        }
        out
    }

    pub fn grain_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_grains];
        for &g in &self.grain_of_element {
            out[g] += 1;
        }
        out
    }

    /// Interface id per FEM node (`NO_NODE` if the node is not on an interface).
    pub fn interface_of_node(&self) -> Vec<usize> {
        let mut out = vec![NO_NODE; self.mesh.n_nodes()];
        for (c, iface) in self.interfaces.iter().enumerate() {
            for &n in &iface.nodes {
                out[n] = c;
            }
        }
        out
    }

    /// Grain owning each node when it is not an interface node: the lowest
    /// grain id among the node's elements.
    pub fn owner_grain_of_node(&self) -> Vec<usize> {
        let mut out = vec![NO_NODE; self.mesh.n_nodes()];
        let nn = self.mesh.nodes_per_element();
        for e in 0..self.mesh.n_elements() {
            let g = self.grain_of_element[e];
            for &n in &self.mesh.element_nodes(e)[..nn] {
                if g < out[n] {
                    out[n] = g;
                }
            }
        }
        out
    }

    /// Per-voxel label image (label + 1, void = 0) for export.
    pub fn label_image(&self) -> SolidImage {
        let mut values = vec![0.0; self.mesh.element_of_voxel.len()];
        for (e, &v) in self.mesh.elements.iter().enumerate() {
            values[v] = (self.grain_of_element[e] + 1) as f64;
        }
        SolidImage::new(self.mesh.dims, self.mesh.spacing, values, Dtype::F64)
            .expect("label image of a non-empty solid")
    }

    /// Fill `contact_grids`: each grid is the elements touching its interface,
    /// geodesically dilated inside the solid (8/26-neighbour steps) so the
    /// band across a straight interface is `width` elements thick. Overlapping
    /// grids are kept separate.
    pub fn with_contact_grids(mut self, width: usize) -> Self {
        let radius = width.saturating_sub(2) / 2;
        let mesh = &self.mesh;
        let elems_of_node = elements_of_nodes(mesh);
        let mut grids = Vec::with_capacity(self.interfaces.len());
        let mut depth = vec![usize::MAX; mesh.n_elements()];
        let mut touched: Vec<usize> = Vec::new();
        let mut queue = VecDeque::new();
        for iface in &self.interfaces {
            for &e in &touched {
                depth[e] = usize::MAX;
            }
            touched.clear();
            for &n in &iface.nodes {
                for &e in &elems_of_node[n] {
                    if depth[e] == usize::MAX {
                        depth[e] = 0;
                        touched.push(e);
                        queue.push_back(e);
                    }
                }
            }
            while let Some(e) = queue.pop_front() {
                if depth[e] >= radius {
                    continue;
                }
                for f in vertex_neighbors(mesh, e) {
                    if depth[f] == usize::MAX {
                        depth[f] = depth[e] + 1;
                        touched.push(f);
                        queue.push_back(f);
                    }
                }
            }
            let mut grid = touched.clone();
            grid.sort_unstable();
            grids.push(grid);
        }
        self.contact_grids = grids;
        self
    }

    /// Drop Dirichlet-constrained nodes from the interfaces; interfaces left
    /// empty are removed together with their contact grids.
    pub fn inherit_boundary_conditions(&self, sys: &FemSystem) -> Self {
        let n_nodes = self.mesh.n_nodes();
        let dim = self.mesh.dim;
        let fixed = |n: usize| (0..dim).all(|c| sys.constrained[c * n_nodes + n]);
        let mut out = self.clone();
        out.interfaces.clear();
        out.contact_grids.clear();
        for (c, iface) in self.interfaces.iter().enumerate() {
            let keep: Vec<usize> = (0..iface.len()).filter(|&i| !fixed(iface.nodes[i])).collect();
            if keep.is_empty() {
                continue;
            }
            let id = out.interfaces.len();
            out.interfaces.push(ContactInterface {
                id,
                grains: iface.grains,
                nodes: keep.iter().map(|&i| iface.nodes[i]).collect(),
                positions: keep.iter().map(|&i| iface.positions[i]).collect(),
                normals: keep.iter().map(|&i| iface.normals[i]).collect(),
            });
            if let Some(g) = self.contact_grids.get(c) {
                out.contact_grids.push(g.clone());
            }
        }
        out
    }

    /// Check the structural invariants; used by tests and debug builds.
    pub fn validate(&self) -> Result<()> {
        if self.grain_of_element.iter().any(|&g| g >= self.n_grains) {
            return Err(Error::Dimension("grain label out of range".into()));
        }
        if self.grain_sizes().iter().any(|&s| s == 0) {
            return Err(Error::Dimension("empty grain".into()));
        }
        for iface in &self.interfaces {
            if iface.is_empty() {
                return Err(Error::EmptyInterface(iface.id));
            }
        }
        Ok(())
    }
}

/// Add contact grids to a decomposition.
pub fn build_contact_grids(dec: Decomposition, width: usize) -> Decomposition {
    dec.with_contact_grids(width)
}

/// Axis-aligned blocks intersected with the solid; empty blocks are dropped.
pub fn cartesian_decompose(img: &SolidImage, blocks: [usize; 3]) -> Result<Decomposition> {
    let dim = img.dimensionality;
    for a in 0..dim {
        if blocks[a] == 0 {
            return Err(Error::param("blocks", "need at least one block per axis"));
        }
    }
    let b = if dim == 2 { [blocks[0], blocks[1], 1] } else { blocks };
    let mesh = Mesh::new(img);
    let labels = mesh
        .elements
        .iter()
        .map(|&v| {
            let c = img.coords(v);
            let bi: Vec<usize> = (0..3).map(|a| (c[a] * b[a] / img.dims[a]).min(b[a] - 1)).collect();
            bi[0] + b[0] * (bi[1] + b[1] * bi[2])
        })
        .collect();
    Decomposition::from_element_labels(Method::Cartesian, mesh, labels, false)
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

fn merge_pieces(mesh: &Mesh, labels: &mut [usize]) {
    let n = mesh.n_elements();
    for _round in 0..8 {
        // face-connected pieces of each label
        let mut piece = vec![usize::MAX; n];
        let mut piece_label = Vec::new();
        let mut piece_size = Vec::new();
        let mut stack = Vec::new();
        for s in 0..n {
            if piece[s] != usize::MAX {
                continue;
            }
            let id = piece_label.len();
            piece[s] = id;
            stack.push(s);
            let mut size = 0;
            while let Some(e) = stack.pop() {
                size += 1;
                for f in mesh.element_face_neighbors(e) {
                    if piece[f] == usize::MAX && labels[f] == labels[s] {
                        piece[f] = id;
                        stack.push(f);
                    }
                }
            }
            piece_label.push(labels[s]);
            piece_size.push(size);
        }
        let mut largest: BTreeMap<usize, usize> = BTreeMap::new();
        for (p, &l) in piece_label.iter().enumerate() {
            let best = largest.entry(l).or_insert(p);
            if piece_size[p] > piece_size[*best] {
                *best = p;
            }
        }
        let mut moved = false;
        let mut elems_by_piece: Vec<Vec<usize>> = vec![Vec::new(); piece_label.len()];
        for e in 0..n {
            elems_by_piece[piece[e]].push(e);
        }
        for (p, elems) in elems_by_piece.iter().enumerate() {
            if largest[&piece_label[p]] == p {
                continue;
            }
            let mut shared: BTreeMap<usize, usize> = BTreeMap::new();
            for &e in elems {
                for f in mesh.element_face_neighbors(e) {
                    if piece[f] != p {
                        *shared.entry(labels[f]).or_insert(0) += 1;
                    }
                }
            }
            if let Some((&target, _)) = shared.iter().max_by_key(|(&l, &c)| (c, std::cmp::Reverse(l))) {
                for &e in elems {
                    labels[e] = target;
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

fn elements_of_nodes(mesh: &Mesh) -> Vec<Vec<usize>> {
    let nn = mesh.nodes_per_element();
    let mut out = vec![Vec::new(); mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        for &n in &mesh.element_nodes(e)[..nn] {
            out[n].push(e);
        }
    }
    out
}

/// Solid elements within Chebyshev distance one (8 in 2D, 26 in 3D).
pub(crate) fn vertex_neighbors(mesh: &Mesh, e: usize) -> impl Iterator<Item = usize> + '_ {
    let v = mesh.elements[e];
    let d = mesh.dims;
    let c = [v % d[0], (v / d[0]) % d[1], v / (d[0] * d[1])];
    let kz: &[isize] = if mesh.dim == 3 { &[-1, 0, 1] } else { &[0] };
    let mut out = Vec::with_capacity(26);
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
                let w = x as usize + d[0] * (y as usize + d[1] * z as usize);
                let f = mesh.element_of_voxel[w];
                if f != NO_NODE {
                    out.push(f);
                }
            }
        }
    }
    out.into_iter()
}

fn extract_interfaces(mesh: &Mesh, labels: &[usize], _n_grains: usize) -> Vec<ContactInterface> {
    let nn = mesh.nodes_per_element();
    let n_nodes = mesh.n_nodes();
    let mut grains_of_node: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for e in 0..mesh.n_elements() {
        for &n in &mesh.element_nodes(e)[..nn] {
            let g = labels[e];
            if !grains_of_node[n].contains(&g) {
                grains_of_node[n].push(g);
            }
        }
    }
    let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (n, gs) in grains_of_node.iter_mut().enumerate() {
        gs.sort_unstable();
        for i in 0..gs.len() {
            for j in i + 1..gs.len() {
                by_pair.entry((gs[i], gs[j])).or_default().push(n);
            }
        }
    }
    // split each pair's node set into grid-connected components
    let gd = mesh.node_grid_dims();
    let mut raw: Vec<((usize, usize), Vec<usize>)> = Vec::new();
    let mut mark = vec![usize::MAX; n_nodes];
    for (&pair, nodes) in &by_pair {
        for &n in nodes {
            mark[n] = 0;
        }
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for &s in nodes {
            if mark[s] != 0 {
                continue;
            }
            let id = comps.len() + 1;
            mark[s] = id;
            let mut comp = vec![s];
            let mut k = 0;
            while k < comp.len() {
                let n = comp[k];
                k += 1;
                let c = mesh.node_grid_coords(n);
                let kz: &[isize] = if mesh.dim == 3 { &[-1, 0, 1] } else { &[0] };
                for &dz in kz {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            let (x, y, z) = (c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz);
                            if x < 0 || y < 0 || z < 0 || x >= gd[0] as isize || y >= gd[1] as isize || z >= gd[2] as isize {
                                continue;
                            }
                            let g = x as usize + gd[0] * (y as usize + gd[1] * z as usize);
                            let m = mesh.node_of_grid[g];
                            if m != NO_NODE && mark[m] == 0 {
                                mark[m] = id;
                                comp.push(m);
                            }
                        }
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by_key(|c| c[0]);
        for &n in nodes {
            mark[n] = usize::MAX;
        }
        for comp in comps {
            raw.push((pair, comp));
        }
    }
    // nodes on several interfaces stay with the lowest id
    let mut owner = vec![usize::MAX; n_nodes];
    for (id, (_, nodes)) in raw.iter().enumerate() {
        for &n in nodes {
            if owner[n] == usize::MAX {
                owner[n] = id;
            }
        }
    }
    let mut out = Vec::new();
    for (id, (pair, nodes)) in raw.into_iter().enumerate() {
        let nodes: Vec<usize> = nodes.into_iter().filter(|&n| owner[n] == id).collect();
        if nodes.is_empty() {
            continue;
        }
        let normals = interface_normals(mesh, labels, pair, &nodes);
        out.push(ContactInterface {
            id: out.len(),
            grains: pair,
            positions: nodes.iter().map(|&n| mesh.node_position(n)).collect(),
            nodes,
            normals,
        });
    }
    out
}

/// Area-weighted normals of the voxel faces separating the two grains; nodes
/// touched only along edges/corners fall back to the direction between the
/// adjacent element centres of each side.
fn interface_normals(mesh: &Mesh, labels: &[usize], pair: (usize, usize), nodes: &[usize]) -> Vec<[f64; 3]> {
    let n_nodes = mesh.n_nodes();
    let mut local = vec![usize::MAX; n_nodes];
    for (i, &n) in nodes.iter().enumerate() {
        local[n] = i;
    }
    let mut acc = vec![[0.0f64; 3]; nodes.len()];
    let mut centre = vec![[[0.0f64; 3]; 2]; nodes.len()];
    let nn = mesh.nodes_per_element();
    let dims = mesh.dims;
    let strides = [1, dims[0], dims[0] * dims[1]];
    let face_area = |axis: usize| -> f64 {
        (0..mesh.dim).filter(|&a| a != axis).map(|a| mesh.spacing[a]).product()
    };
    for e in 0..mesh.n_elements() {
        let g = labels[e];
        let side = if g == pair.0 {
            0
        } else if g == pair.1 {
            1
        } else {
            continue;
        };
        let en = mesh.element_nodes(e);
        let ec = mesh.element_center(e);
        for &n in &en[..nn] {
            let i = local[n];
            if i != usize::MAX {
                for a in 0..3 {
                    centre[i][side][a] += ec[a];
                }
            }
        }
        if side != 0 {
            continue;
        }
        let v = mesh.elements[e];
        let c = [v % dims[0], (v / dims[0]) % dims[1], v / (dims[0] * dims[1])];
        for axis in 0..mesh.dim {
            if c[axis] + 1 >= dims[axis] {
                continue;
            }
            let w = v + strides[axis];
            let f = mesh.element_of_voxel[w];
            if f == NO_NODE || labels[f] != pair.1 {
                continue;
            }
            // face at +axis: the local nodes with bit `axis` set
            let area = face_area(axis) / (nn / 2) as f64;
            for a in 0..nn {
                if (a >> axis) & 1 == 1 {
                    let i = local[en[a]];
                    if i != usize::MAX {
                        acc[i][axis] += area;
                    }
                }
            }
        }
        for axis in 0..mesh.dim {
            if c[axis] == 0 {
                continue;
            }
            let w = v - strides[axis];
            let f = mesh.element_of_voxel[w];
            if f == NO_NODE || labels[f] != pair.1 {
                continue;
            }
            let area = face_area(axis) / (nn / 2) as f64;
            for a in 0..nn {
                if (a >> axis) & 1 == 0 {
                    let i = local[en[a]];
                    if i != usize::MAX {
                        acc[i][axis] -= area;
                    }
                }
            }
        }
    }
    acc.iter()
        .zip(&centre)
        .map(|(a, c)| {
            let mut v = *a;
            if v.iter().all(|x| x.abs() < 1e-300) {
                v = [c[1][0] - c[0][0], c[1][1] - c[0][1], c[1][2] - c[0][2]];
            }
            let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if l > 0.0 {
                [v[0] / l, v[1] / l, v[2] / l]
            } else {
                [1.0, 0.0, 0.0]
            }
        })
        .collect()
}
