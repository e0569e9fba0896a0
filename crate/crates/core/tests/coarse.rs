mod common;

use common::oracle;
use common::*;
use hplmm::coarse::*;
use hplmm::fem::LoadCase;
use hplmm::mortar::{MortarConfig, MortarKind, MortarSpace};
use hplmm::sparse::{to_dense, LinearOperator};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn grain_of_original(perm: &Permutation, n_grains: usize) -> Vec<Option<usize>> {
    let mut out = vec![None; perm.len()];
    for g in 0..n_grains {
        for &d in perm.grain_dofs(g) {
            out[d] = Some(g);
        }
    }
    out
}

#[test]
fn single_grain_has_identity_permutation_and_exact_first_pass() {
    let (sys, dec) = cartesian_setup(&rectangle(6, 4), [1, 1, 1], 4, LoadCase::Shear);
    assert_eq!(dec.n_interfaces(), 0);
    let perm = build_permutation(&dec, &sys).unwrap();
    assert!(perm.is_identity());
    let ms = MortarSpace::build(&dec, &sys, &gaussian(2, 4.0)).unwrap();
    let mg = CoarsePreconditioner::build(&sys, &dec, &ms).unwrap();
    assert_eq!(mg.coarse_dim(), 1);
    let exact = sys.solve_direct().unwrap();
    assert!(rel_err(&mg.apply(&sys.b), &exact) < 1e-12);
}

#[test]
fn grouped_two_grain_matrix_is_block_structured() {
    let (sys, dec) = watershed_setup(&two_grain_image(), LoadCase::Shear);
    let perm = build_permutation(&dec, &sys).unwrap();
    let w = perm.to_csr();
    let grouped = w.transpose().matmul(&sys.a).matmul(&w);
    let ng = perm.n_grain_dofs();
    let gog = |r: usize| (0..2).find(|&g| r >= perm.grain_offsets[g] && r < perm.grain_offsets[g + 1]);
    for r in 0..ng {
        let (cols, vals) = grouped.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if c < ng && v != 0.0 {
                assert_eq!(gog(r), gog(c), "grain blocks couple at ({r}, {c})");
            }
        }
    }
    // A^g_c = (A^c_g)ᵀ
    let d = grouped.to_dense();
    let n = d.nrows();
    let agc = d.view((0, ng), (ng, n - ng)).into_owned();
    let acg = d.view((ng, 0), (n - ng, ng)).into_owned();
    assert_eq!(agc, acg.transpose());
}

#[test]
fn reduction_preserves_constant_fields() {
    let (sys, dec) = watershed_setup(&disk_pack_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(4, 4.0)).unwrap();
    let perm = build_permutation(&dec, &sys).unwrap();
    let red = build_reduction(&ms, &perm).unwrap();
    for (c, block) in red.blocks.iter().enumerate() {
        let nf = dec.interfaces[c].len();
        for g in 0..2 {
            let mut t = DMatrix::zeros(nf * 2, 1);
            t.view_mut((g * nf, 0), (nf, 1)).fill(1.0);
            let coarse = block.transpose() * t;
            let total: f64 = (0..block.ncols() / 2).map(|m| coarse[(m * 2 + g, 0)]).sum();
            assert!((total - nf as f64).abs() < 1e-10 * nf as f64);
        }
    }
}

#[test]
fn corrections_exist_exactly_for_loaded_grains() {
    let (sys, dec) = watershed_setup(&disk_pack_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(2, 4.0)).unwrap();
    let mg = CoarsePreconditioner::build(&sys, &dec, &ms).unwrap();
    let perm = build_permutation(&dec, &sys).unwrap();
    let loaded: Vec<usize> = (0..dec.n_grains)
        .filter(|&g| perm.grain_dofs(g).iter().any(|&d| sys.b[d] != 0.0))
        .collect();
    assert_eq!(mg.correction_grains, loaded);
    assert!(loaded.len() < dec.n_grains, "some grains should carry no load");
    assert_eq!(mg.coarse_dim(), mg.n_mortar_dofs + loaded.len());
}

#[test]
fn shape_columns_reproduce_translations_on_floating_grains() {
    let (sys, dec) = watershed_setup(&disk_pack_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(4, 4.0)).unwrap();
    let basis = CoarseBasis::build(&sys, &dec, &ms).unwrap();
    let perm = &basis.perm;
    let nm = basis.n_mortar_dofs();
    let floating: Vec<usize> = (0..dec.n_grains)
        .filter(|&g| perm.grain_dofs(g).iter().all(|&d| !sys.constrained[d]))
        .collect();
    assert!(!floating.is_empty());
    let nn = sys.mesh.n_nodes();
    for g in 0..2 {
        let y: Vec<f64> = (0..nm).map(|k| if k % 2 == g { 1.0 } else { 0.0 }).collect();
        let field = basis.basis.mul_vec(&y);
        for &gr in &floating {
            for (i, &d) in perm.grain_dofs(gr).iter().enumerate() {
                let want = if d / nn == g { 1.0 } else { 0.0 };
                let got = field[perm.grain_offsets[gr] + i];
                assert!((got - want).abs() < 1e-8, "grain {gr} dof {d}: {got}");
            }
        }
    }
}

#[test]
fn shape_column_support() {
    let (sys, dec) = watershed_setup(&two_grain_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(4, 4.0)).unwrap();
    let basis = CoarseBasis::build(&sys, &dec, &ms).unwrap();
    for s in &basis.shape_support {
        assert_eq!(s, &vec![0, 1]);
    }
    // on the pack every column reaches at least the interface's own grains
    let (sys, dec) = watershed_setup(&disk_pack_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(2, 4.0)).unwrap();
    let basis = CoarseBasis::build(&sys, &dec, &ms).unwrap();
    let gof = grain_of_original(&basis.perm, dec.n_grains);
    let bt = basis.basis.transpose();
    for c in 0..dec.n_interfaces() {
        let (g1, g2) = dec.interfaces[c].grains;
        for k in basis.reduction.mortar_offsets[c]..basis.reduction.mortar_offsets[c + 1] {
            let s = &basis.shape_support[k];
            assert!(s.contains(&g1) && s.contains(&g2));
            let (rows, _) = bt.row(k);
            for &r in rows {
                let g = gof[basis.perm.forward[r]].unwrap();
                assert!(s.contains(&g));
            }
        }
    }
}

#[test]
fn zero_in_zero_out_and_symmetric_coarse_matrix() {
    let (sys, dec) = watershed_setup(&disk_pack_image(), LoadCase::Tension);
    let mg = coarse(&sys, &dec, &gaussian(4, 4.0));
    assert!(mg.apply(&vec![0.0; sys.n_dof()]).iter().all(|&v| v == 0.0));
    assert!(mg.relative_asymmetry() < 1e-12, "{}", mg.relative_asymmetry());
}

#[test]
fn coarse_residual_is_orthogonal() {
    let (sys, dec) = watershed_setup(&two_grain_image(), LoadCase::Shear);
    let mg = coarse(&sys, &dec, &gaussian(2, 4.0));
    let x = mg.apply(&sys.b);
    let ax = sys.a.mul_vec(&x);
    let r: Vec<f64> = sys.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rr = mg.r_hat.mul_vec(&r);
    let rb = mg.r_hat.mul_vec(&sys.b);
    assert!(norm(&rr) / norm(&rb) < 1e-10, "{}", norm(&rr) / norm(&rb));
}

#[test]
fn operator_matches_dense_construction() {
    let (sys, dec) = cartesian_setup(&rectangle(12, 8), [2, 2, 1], 4, LoadCase::Shear);
    for kind in [MortarKind::Gaussian { beta: 4.0 }, MortarKind::Algebraic] {
        let ms = MortarSpace::build(&dec, &sys, &MortarConfig { kind, n: 2, seed: 0 }).unwrap();
        let basis = CoarseBasis::build(&sys, &dec, &ms).unwrap();
        let mg = basis.with_rhs(&sys.a, &sys.b).unwrap();
        let p = oracle::p_hat(&sys, &basis.perm, &basis.reduction);
        let a = sys.a.to_dense();
        let dense = oracle::galerkin(&a, &p);
        assert!(rel_mat_err(&to_dense(&mg), &dense) < 1e-12);
    }
}

#[test]
fn new_rhs_reuses_the_basis() {
    let (sys, dec) = watershed_setup(&two_grain_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(2, 4.0)).unwrap();
    let basis = CoarseBasis::build(&sys, &dec, &ms).unwrap();
    let b2: Vec<f64> = sys.b.iter().zip(test_vector(sys.n_dof(), 5)).map(|(b, t)| b + t).collect();
    let reused = basis.with_rhs(&sys.a, &b2).unwrap();
    let sys2 = sys.with_rhs(b2.clone());
    let fresh = CoarsePreconditioner::build(&sys2, &dec, &ms).unwrap();
    assert!(rel_err(&reused.apply(&b2), &fresh.apply(&b2)) < 1e-12);
}

#[test]
fn first_pass_error_drops_from_one_to_two_mortars() {
    let (sys, dec) = watershed_setup(&two_grain_image(), LoadCase::Shear);
    let exact = sys.solve_direct().unwrap();
    let e1 = rel_err(&coarse(&sys, &dec, &gaussian(1, 4.0)).apply(&sys.b), &exact);
    let e2 = rel_err(&coarse(&sys, &dec, &gaussian(2, 4.0)).apply(&sys.b), &exact);
    assert!(e2 < e1, "{e2} vs {e1}");
}

#[test]
fn excessive_beta_is_rank_deficient() {
    let (sys, dec) = watershed_setup(&two_grain_image(), LoadCase::Shear);
    let ms = MortarSpace::build(&dec, &sys, &gaussian(16, 1e6)).unwrap();
    let perm = build_permutation(&dec, &sys).unwrap();
    assert!(matches!(build_reduction(&ms, &perm), Err(hplmm::Error::RankDeficientInterface { interface: 0 })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn permutation_is_orthogonal(nx in 3usize..14, ny in 2usize..9, bx in 1usize..4, by in 1usize..3) {
        let (sys, dec) = cartesian_setup(&rectangle(nx, ny), [bx, by, 1], 2, LoadCase::Shear);
        let w = build_permutation(&dec, &sys).unwrap().to_csr();
        let wwt = w.matmul(&w.transpose());
        let n = sys.n_dof();
        prop_assert_eq!(wwt.nnz(), n);
        for r in 0..n {
            let (c, v) = wwt.row(r);
            prop_assert_eq!(c, &[r][..]);
            prop_assert_eq!(v, &[1.0][..]);
        }
    }

    #[test]
    fn coarse_correction_annihilates_the_coarse_space(seed in 0u64..1000) {
        let (sys, dec) = cartesian_setup(&rectangle(10, 6), [2, 1, 1], 4, LoadCase::Tension);
        let mg = coarse(&sys, &dec, &gaussian(3, 4.0));
        let y = test_vector(mg.coarse_dim(), seed);
        let v = mg.p_hat.mul_vec(&y);
        let e = mg.apply(&sys.a.mul_vec(&v));
        let d: Vec<f64> = v.iter().zip(&e).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&d) < 1e-10 * norm(&v));
    }
}
