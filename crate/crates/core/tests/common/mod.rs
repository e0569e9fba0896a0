#![allow(dead_code)]

use hplmm::coarse::CoarsePreconditioner;
use hplmm::decomposition::{cartesian_decompose, watershed_decompose, Decomposition, WatershedParams};
use hplmm::fem::{assemble, FemSystem, LoadCase, MaterialParams};
use hplmm::image_io::{generate_synthetic, DiskPackParams, SolidImage, SyntheticKind, TwoGrainParams};
use hplmm::mortar::{MortarConfig, MortarKind, MortarSpace};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn two_grain_image() -> SolidImage {
    generate_synthetic(&SyntheticKind::TwoGrain(TwoGrainParams::default()), 7).unwrap()
}

/// Scaled-down two-grain geometry (about 1.7k DOFs).
pub fn small_two_grain_image() -> SolidImage {
    generate_synthetic(
        &SyntheticKind::TwoGrain(TwoGrainParams {
            radius: 11,
            neck_width: 6,
            separation: 26,
            clip: 2,
        }),
        7,
    )
    .unwrap()
}

pub fn disk_pack_image() -> SolidImage {
    generate_synthetic(&SyntheticKind::DiskPack(DiskPackParams::default()), 7).unwrap()
}

pub fn rectangle(nx: usize, ny: usize) -> SolidImage {
    SolidImage::from_mask([nx, ny, 1], &vec![true; nx * ny]).unwrap()
}

pub fn system(img: &SolidImage, load: LoadCase) -> FemSystem {
    assemble(img, &MaterialParams::default(), &load.boundary_conditions(img.dimensionality)).unwrap()
}

/// Watershed grains, 16-wide contact grids, global BCs inherited.
pub fn watershed_setup(img: &SolidImage, load: LoadCase) -> (FemSystem, Decomposition) {
    let sys = system(img, load);
    let dec = watershed_decompose(img, &WatershedParams::default())
        .unwrap()
        .with_contact_grids(16)
        .inherit_boundary_conditions(&sys);
    (sys, dec)
}

pub fn cartesian_setup(img: &SolidImage, blocks: [usize; 3], width: usize, load: LoadCase) -> (FemSystem, Decomposition) {
    let sys = system(img, load);
    let dec = cartesian_decompose(img, blocks)
        .unwrap()
        .with_contact_grids(width)
        .inherit_boundary_conditions(&sys);
    (sys, dec)
}

pub fn gaussian(n: usize, beta: f64) -> MortarConfig {
    MortarConfig {
        kind: MortarKind::Gaussian { beta },
        n,
        seed: 0,
    }
}

pub fn coarse(sys: &FemSystem, dec: &Decomposition, cfg: &MortarConfig) -> CoarsePreconditioner {
    let ms = MortarSpace::build(dec, sys, cfg).unwrap();
    CoarsePreconditioner::build(sys, dec, &ms).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

pub fn rel_mat_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Deterministic pseudo-random vector in [-1, 1).
pub fn test_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
pub mod oracle;
