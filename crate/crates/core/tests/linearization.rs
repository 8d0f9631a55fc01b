mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use pyrotune::linss::{dc_gain, reduce_dae, transfer_at, DaeJacobians};
use pyrotune::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{direct_dc_gain, max_abs_diff, random_dae};

fn m(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

#[test]
fn scalar_blocks_reduce_by_hand() {
    let j = DaeJacobians {
        fx: m(-1.0),
        fy: m(1.0),
        fu: m(1.0),
        gx: m(2.0),
        gy: m(-1.0),
        gu: m(0.0),
        hx: m(1.0),
        hy: m(0.0),
        hu: m(0.0),
        input_names: Vec::new(),
        output_names: Vec::new(),
    };
    let ss = reduce_dae(&j).unwrap();
    assert_eq!(ss.a, m(1.0));
    assert_eq!(ss.b, m(1.0));
    assert_eq!(ss.c, m(1.0));
    assert_eq!(ss.d, m(0.0));
}

#[test]
fn dc_gain_matches_direct_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..100 {
        let (n, mm, p, q) = (1 + case % 5, case % 4, 1 + case % 3, 1 + case % 4);
        let j = random_dae(&mut rng, n, mm, p, q);
        let reduced = dc_gain(&reduce_dae(&j).unwrap()).unwrap();
        let direct = direct_dc_gain(&j);
        assert!(
            max_abs_diff(&reduced, &direct) < 1e-9,
            "case {case}: {reduced} vs {direct}"
        );
    }
}

#[test]
fn singular_algebraic_jacobian_is_numerical_failure() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut j = random_dae(&mut rng, 2, 2, 1, 1);
    j.gy = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
    let err = reduce_dae(&j).unwrap_err();
    assert!(matches!(err, Error::SingularAlgebraicJacobian { .. }));
    assert_eq!(err.exit_code(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_at_zero_is_dc_gain(seed in any::<u64>(), n in 1usize..5, mm in 0usize..4, p in 1usize..3, q in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ss = reduce_dae(&random_dae(&mut rng, n, mm, p, q)).unwrap();
        let g = transfer_at(&ss, Complex64::new(0.0, 0.0)).unwrap();
        prop_assert!(g.iter().all(|v| v.im == 0.0));
        prop_assert_eq!(g.map(|v| v.re), dc_gain(&ss).unwrap());
    }

    #[test]
    fn reduced_model_has_declared_dimensions(seed in any::<u64>(), n in 1usize..5, mm in 0usize..4, p in 1usize..3, q in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ss = reduce_dae(&random_dae(&mut rng, n, mm, p, q)).unwrap();
        prop_assert_eq!((ss.states(), ss.inputs(), ss.outputs()), (n, p, q));
    }
}
