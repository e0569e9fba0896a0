mod common;

use common::*;
use hplmm::fem::*;
use hplmm::image_io::SolidImage;
use hplmm::sparse::LinearOperator;
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

/// Plane-strain Q1 stiffness from the Voigt B/D form with 2×2 Gauss points.
fn voigt_stiffness(p: &MaterialParams, hx: f64, hy: f64) -> DMatrix<f64> {
    let d = nalgebra::Matrix3::new(
        p.lambda + 2.0 * p.mu,
        p.lambda,
        0.0,
        p.lambda,
        p.lambda + 2.0 * p.mu,
        0.0,
        0.0,
        0.0,
        p.mu,
    );
    let g = 1.0 / 3f64.sqrt();
    let mut k = DMatrix::zeros(8, 8);
    for &s in &[-g, g] {
        for &t in &[-g, g] {
            let (xi, eta) = (0.5 * (1.0 + s), 0.5 * (1.0 + t));
            let mut b = DMatrix::zeros(3, 8);
            for a in 0..4 {
                let (ax, ay) = ((a & 1) as f64, ((a >> 1) & 1) as f64);
                let fx = if ax == 1.0 { xi } else { 1.0 - xi };
                let fy = if ay == 1.0 { eta } else { 1.0 - eta };
                let dx = (2.0 * ax - 1.0) / hx * fy;
                let dy = (2.0 * ay - 1.0) / hy * fx;
                b[(0, a)] = dx;
                b[(1, 4 + a)] = dy;
                b[(2, a)] = dy;
                b[(2, 4 + a)] = dx;
            }
            let dm = DMatrix::from_iterator(3, 3, d.iter().cloned());
            k += b.transpose() * dm * &b * (hx * hy / 4.0);
        }
    }
    k
}

#[test]
fn element_matches_voigt_form() {
    let p = MaterialParams { lambda: 8.3e9, mu: 44.3e9 };
    let k = element_stiffness(&p, 1.0, &[1.0, 2.0], 2);
    let o = voigt_stiffness(&p, 1.0, 2.0);
    assert!(rel_mat_err(&k, &o) < 1e-14);
}

#[test]
fn default_moduli_give_three_zero_modes() {
    let p = MaterialParams { lambda: 8.3e9, mu: 44.3e9 };
    let k = element_stiffness(&p, 1.0, &[1.0, 1.0], 2);
    let ev = SymmetricEigen::new(k).eigenvalues;
    let top = ev.amax();
    assert_eq!(ev.iter().filter(|v| v.abs() < 1e-10 * top).count(), 3);
    assert_eq!(ev.iter().filter(|&&v| v > 1e-10 * top).count(), 5);
}

#[test]
fn single_voxel_matches_dense_solve() {
    let img = SolidImage::from_mask([1, 1, 1], &[true]).unwrap();
    let p = MaterialParams::default();
    let bcs = [BoundaryCondition::dirichlet(Face::XMin, [0.0; 3])];
    let sys = assemble_with_body_force(&img, &p, &bcs, [1.0, 0.0, 0.0]).unwrap();
    let x = sys.solve_direct().unwrap();
    // free DOFs: right nodes (local 1, 3), both components
    let k = voigt_stiffness(&p, 1.0, 1.0);
    let free = [1, 3, 5, 7];
    let kf = DMatrix::from_fn(4, 4, |i, j| k[(free[i], free[j])]);
    let f = DVector::from_vec(vec![0.25, 0.25, 0.0, 0.0]);
    let u = kf.lu().solve(&f).unwrap();
    let mesh = &sys.mesh;
    for (i, &l) in free.iter().enumerate() {
        let (comp, a) = (l / 4, l % 4);
        let node = mesh.element_nodes(0)[a];
        let got = x[mesh.dof(node, comp)];
        assert!((got - u[i]).abs() < 1e-12 * u.amax(), "{got} vs {}", u[i]);
    }
}

#[test]
fn patch_test_reproduces_linear_field() {
    let img = rectangle(4, 4);
    let mesh = Mesh::new(&img);
    let lin = |x: [f64; 3]| [0.1 + 0.3 * x[0] - 0.2 * x[1], -0.05 + 0.15 * x[0] + 0.4 * x[1], 0.0];
    let mut bcs = Vec::new();
    for n in 0..mesh.n_nodes() {
        let c = mesh.node_grid_coords(n);
        if c[0] == 0 || c[0] == 4 || c[1] == 0 || c[1] == 4 {
            bcs.push(BoundaryCondition {
                selector: Selector::Nodes(vec![c]),
                kind: BcKind::Dirichlet(lin(mesh.node_position(n))),
            });
        }
    }
    let sys = assemble(&img, &MaterialParams::default(), &bcs).unwrap();
    let x = sys.solve_direct().unwrap();
    for n in 0..mesh.n_nodes() {
        let u = lin(mesh.node_position(n));
        for c in 0..2 {
            assert!((x[sys.mesh.dof(n, c)] - u[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn translations_are_in_the_unconstrained_kernel() {
    let img = two_grain_image();
    let mesh = Mesh::new(&img);
    let k = assemble_stiffness(&mesh, &MaterialParams::default());
    let nn = mesh.n_nodes();
    let scale = k.diagonal().iter().cloned().fold(0.0, f64::max);
    for c in 0..2 {
        let mut t = vec![0.0; mesh.n_dof()];
        t[c * nn..(c + 1) * nn].iter_mut().for_each(|v| *v = 1.0);
        let r = k.mul_vec(&t);
        assert!(r.iter().all(|v| v.abs() < 1e-12 * scale));
    }
}

#[test]
fn constrained_system_is_symmetric() {
    let sys = system(&two_grain_image(), LoadCase::Shear);
    assert_eq!(sys.a.asymmetry(), 0.0);
}

#[test]
fn two_grain_direct_residual() {
    let sys = system(&two_grain_image(), LoadCase::Shear);
    let x = sys.solve_direct().unwrap();
    let r: Vec<f64> = sys.a.apply(&x).iter().zip(&sys.b).map(|(a, b)| a - b).collect();
    assert!(norm(&r) / norm(&sys.b) < 1e-12);
}

#[test]
fn solution_is_linear_in_rhs() {
    let sys = system(&small_two_grain_image(), LoadCase::Tension);
    let x = sys.solve_direct().unwrap();
    let scaled = sys.with_rhs(sys.b.iter().map(|v| -3.5 * v).collect());
    let y = scaled.solve_direct().unwrap();
    let expect: Vec<f64> = x.iter().map(|v| -3.5 * v).collect();
    assert!(rel_err(&y, &expect) < 1e-12);
}

#[test]
fn assembly_is_deterministic() {
    let img = disk_pack_image();
    let a = system(&img, LoadCase::Shear);
    let b = system(&img, LoadCase::Shear);
    assert_eq!(a.a, b.a);
    assert_eq!(a.b, b.b);
}

#[test]
fn stress_examples() {
    let uni = Matrix3::new(2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert!((mohr_radius(&uni, 2) - 1.0).abs() < 1e-15);
    assert!((mohr_radius(&uni, 3) - 1.0).abs() < 1e-14);
    let s = 0.7;
    let shear = Matrix3::new(0.0, s, 0.0, s, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert!((mohr_radius(&shear, 2) - s).abs() < 1e-15);
    assert!((mohr_radius(&shear, 3) - s).abs() < 1e-14);

    let sys = system(&rectangle(3, 2), LoadCase::Shear);
    let nn = sys.mesh.n_nodes();
    let mut t = vec![0.0; sys.n_dof()];
    t[nn..].iter_mut().for_each(|v| *v = 2.5);
    assert!(max_shear_stress(&sys, &t).iter().all(|&v| v == 0.0));
}

#[test]
fn three_d_system_dimensions() {
    let img = SolidImage::from_mask([3, 2, 2], &[true; 12]).unwrap();
    let sys = system(&img, LoadCase::Shear);
    assert_eq!(sys.n_dof(), 3 * 4 * 3 * 3);
    let x = sys.solve_direct().unwrap();
    let r: Vec<f64> = sys.a.apply(&x).iter().zip(&sys.b).map(|(a, b)| a - b).collect();
    assert!(norm(&r) / norm(&sys.b) < 1e-12);
}
