use nalgebra::DMatrix;
use ncslemma::cpmap::{BlockLayout, ChoiMatrix};
use ncslemma::linalg::{is_psd, psd_project, spectraplex_project, sym_eig, SymMat};
use ncslemma::ncpoly::{MatTuple, NCQuadPoly};
use ncslemma::slemma::{certify, decide, reconcile, verify_certificate, CertifyOutcome, Decision, SolveOptions};
use proptest::prelude::*;

fn sym(d: usize, vals: &[f64]) -> SymMat {
    SymMat::symmetrize(DMatrix::from_fn(d, d, |i, j| vals[(i * d + j) % vals.len()]))
}

fn entries() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigendecomposition_reconstructs(d in 1usize..8, vals in entries()) {
        let s = sym(d, &vals);
        let eig = sym_eig(&s).unwrap();
        let back = eig.reconstruct_with(|v| v);
        prop_assert!((back.matrix() - s.matrix()).norm() <= 1e-12 * (1.0 + s.frobenius()));
        let orth = eig.vectors.transpose() * &eig.vectors - DMatrix::identity(d, d);
        prop_assert!(orth.norm() <= 1e-12);
    }

    #[test]
    fn projections_land_in_their_sets(d in 1usize..7, vals in entries()) {
        let s = sym(d, &vals);
        let p = psd_project(&s);
        prop_assert!(is_psd(&p, 1e-12).unwrap());
        prop_assert!((psd_project(&p).matrix() - p.matrix()).norm() <= 1e-12);
        let t = spectraplex_project(&s);
        prop_assert!(is_psd(&t, 1e-12).unwrap());
        prop_assert!((t.trace() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn mapped_polynomial_matches_pointwise_map(
        m in 1usize..3, s in 1usize..3, t in 1usize..3, n in 1usize..4,
        vals in entries(), xs in entries(),
    ) {
        let g = NCQuadPoly::from_coefficient_matrix(m, s, &sym(m * s, &vals)).unwrap();
        let j = psd_project(&sym(s * t, &vals[7..]));
        let choi = ChoiMatrix::new(s, t, j).unwrap();
        let x = MatTuple::symmetric((0..m).map(|i| sym(n, &xs[i * 9..]).into_inner()).collect()).unwrap();
        let lhs = choi.apply_to_poly(&g).unwrap().evaluate(&x).unwrap();
        let rhs = choi.apply_blockwise(g.evaluate(&x).unwrap().matrix(), BlockLayout::Outer { n }).unwrap();
        prop_assert!((lhs.matrix() - rhs).norm() <= 1e-12 * (1.0 + lhs.frobenius()));
    }

    #[test]
    fn direct_sum_evaluates_block_diagonally(m in 1usize..3, q in 1usize..3, k in 1usize..4, n in 1usize..3,
                                              vals in entries(), xs in entries()) {
        let g = NCQuadPoly::from_coefficient_matrix(m, q, &sym(m * q, &vals)).unwrap();
        let x = MatTuple::symmetric((0..m).map(|i| sym(n, &xs[i * 5..]).into_inner()).collect()).unwrap();
        let gx = g.evaluate(&x).unwrap();
        let big = g.direct_sum_repeat(k).unwrap().evaluate(&x).unwrap();
        let want = DMatrix::<f64>::identity(k, k).kronecker(gx.matrix());
        prop_assert!((big.matrix() - want).norm() <= 1e-12);
    }
}

#[test]
fn certificates_survive_reconciliation() {
    // f is the leading 3x3 corner of g ⊕ g; reconciling repeats g and pads f
    let g = NCQuadPoly::from_coefficient_matrix(
        2,
        2,
        &SymMat::from_row_slice(4, &[2.0, 0.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.5])
            .unwrap(),
    )
    .unwrap();
    let f = g.direct_sum_repeat(2).unwrap();
    let f = NCQuadPoly::new(
        2,
        3,
        f.blocks().iter().map(|b| b.view((0, 0), (3, 3)).into_owned()).collect(),
    )
    .unwrap();
    let (ft, gt, rec) = reconcile(&f, &g).unwrap();
    assert_eq!((rec.repeat, rec.q, ft.q(), gt.q()), (2, 4, 4, 4));

    let opts = SolveOptions::default();
    let slater = MatTuple::from_scalars(&[1.0, 0.0]).unwrap();
    let report = decide(&f, &g, &slater, &opts).unwrap();
    let Decision::Certificate(cert) = report.decision else {
        panic!("expected a certificate, got {:?}", report.decision);
    };
    assert!(verify_certificate(&cert, &f, &g, &opts));

    // certify also works without reconciling: phi maps 2x2 into 3x3
    let CertifyOutcome::Certificate(direct) = certify(&f, &g, &opts).unwrap() else {
        panic!("expected a direct certificate");
    };
    assert_eq!((direct.choi.s(), direct.choi.t()), (2, 3));
    assert!(verify_certificate(&direct, &f, &g, &opts));
}

#[test]
fn decide_is_deterministic() {
    let f = NCQuadPoly::from_coefficient_matrix(2, 1, &SymMat::from_row_slice(2, &[1.0, 0.3, 0.3, -0.2]).unwrap())
        .unwrap();
    let g = NCQuadPoly::from_coefficient_matrix(2, 1, &SymMat::from_row_slice(2, &[1.0, 0.0, 0.0, -1.0]).unwrap())
        .unwrap();
    let slater = MatTuple::from_scalars(&[1.0, 0.0]).unwrap();
    let one = decide(&f, &g, &slater, &SolveOptions::default()).unwrap();
    let two = decide(&f, &g, &slater, &SolveOptions { threads: 2, ..Default::default() }).unwrap();
    assert_eq!(one.decision, two.decision);
}
