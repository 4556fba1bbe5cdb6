use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;

use ymflow::lie::*;

fn to_na(m: &Matrix) -> Matrix2<Complex64> {
    Matrix2::new(m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1))
}

fn su2(c: [f64; 3]) -> AlgebraElement {
    AlgebraElement::from_coords(Group::Su2, &c)
}

fn coords(bound: f64) -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-bound..bound)
}

proptest! {
    #[test]
    fn exp_agrees_with_nalgebra(c in coords(8.0)) {
        let x = su2(c);
        let ours = exp(&x);
        let oracle = to_na(x.matrix()).exp();
        let diff = (to_na(ours.matrix()) - oracle).norm();
        prop_assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn exp_lands_in_su2(c in coords(20.0)) {
        let u = exp(&su2(c));
        prop_assert!(u.unitarity_defect() <= UNITARITY_TOL);
        prop_assert!((u.matrix().det() - Complex64::new(1.0, 0.0)).norm() <= 1e-12);
    }

    #[test]
    fn u1_exp_is_phase(theta in -3.0..3.0f64) {
        let x = AlgebraElement::from_coords(Group::U1, &[theta]);
        let u = exp(&x);
        let z = u.matrix().get(0, 0);
        prop_assert!((z - Complex64::from_polar(1.0, x.matrix().get(0, 0).im)).norm() <= 1e-14);
        let back = log(&u).unwrap();
        prop_assert!((back - x).norm() <= 1e-13);
    }

    #[test]
    fn log_inverts_exp_inside_branch(c in coords(3.0)) {
        let x = su2(c);
        let back = log(&exp(&x)).unwrap();
        prop_assert!((back - x).norm() <= 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn adjoint_is_conjugation(c in coords(3.0), g in coords(6.0)) {
        let (x, u) = (su2(c), exp(&su2(g)));
        let lhs = to_na(adjoint(&u, &x).matrix());
        let m = to_na(u.matrix());
        let rhs = m.try_inverse().unwrap() * to_na(x.matrix()) * m;
        prop_assert!((lhs - rhs).norm() <= 1e-12);
    }

    #[test]
    fn bracket_is_commutator(a in coords(3.0), b in coords(3.0)) {
        let (x, y) = (su2(a), su2(b));
        let (mx, my) = (to_na(x.matrix()), to_na(y.matrix()));
        let diff = (to_na(bracket(&x, &y).matrix()) - (mx * my - my * mx)).norm();
        prop_assert!(diff <= 1e-13);
    }

    #[test]
    fn inner_is_minus_real_trace(a in coords(3.0), b in coords(3.0)) {
        let (x, y) = (su2(a), su2(b));
        let tr = (to_na(x.matrix()) * to_na(y.matrix())).trace().re;
        prop_assert!((inner(&x, &y) + tr).abs() <= 1e-13);
    }

    #[test]
    fn project_group_restores_unitarity(c in coords(3.0), eps in prop::array::uniform4(-1e-3..1e-3f64)) {
        let u = exp(&su2(c));
        let noise: Vec<Complex64> = eps.iter().map(|&e| Complex64::new(e, 0.0)).collect();
        let mut entries: Vec<Complex64> = u.matrix().entries().collect();
        for (e, n) in entries.iter_mut().zip(noise) {
            *e += n;
        }
        let p = project_group(&Matrix::from_entries(2, &entries)).unwrap();
        prop_assert!(p.unitarity_defect() <= UNITARITY_TOL);
        prop_assert!(p.distance(&u) <= 1e-2);
    }
}

#[test]
fn log_refuses_minus_identity() {
    // exp(2π τ₃) = −I sits on the branch cut.
    let u = exp(&su2([0.0, 0.0, 2.0 * std::f64::consts::PI]));
    assert!((to_na(u.matrix()) + Matrix2::identity()).norm() < 1e-12);
    assert!(log(&u).is_err());
}

#[test]
fn groups_report_dimensions() {
    assert_eq!(Group::U1.algebra_dim(), 1);
    assert_eq!(Group::Su2.algebra_dim(), 3);
    assert_eq!(Group::from_rank(2), Some(Group::Su2));
    assert_eq!(Group::from_rank(3), None);
    assert!(Group::U1.is_abelian() && !Group::Su2.is_abelian());
}
