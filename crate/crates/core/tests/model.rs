mod common;

use fiscalprey::model::{jacobian, vector_field};
use fiscalprey::{Params, State};
use proptest::prelude::*;

fn fd_jacobian(p: &Params, s: &State, h: f64) -> [[f64; 3]; 3] {
    let mut j = [[0.0; 3]; 3];
    for col in 0..3 {
        let mut up = s.to_array();
        let mut down = s.to_array();
        up[col] += h;
        down[col] -= h;
        let fu = vector_field(p, &State::from_array(up)).unwrap().to_array();
        let fd = vector_field(p, &State::from_array(down)).unwrap().to_array();
        for row in 0..3 {
            j[row][col] = (fu[row] - fd[row]) / (2.0 * h);
        }
    }
    j
}

#[test]
fn jacobian_matches_finite_differences_on_random_states() {
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let p = common::random_params(&mut rng);
        let s = common::random_positive_state(&mut rng, &p);
        let j = jacobian(&p, &s).unwrap();
        let fd = fd_jacobian(&p, &s, 1e-6);
        let scale = j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for r in 0..3 {
            for c in 0..3 {
                // relative to the entry, with the matrix scale guarding entries near zero
                let tol = 1e-5 * j[r][c].abs().max(1e-3 * scale);
                assert!((j[r][c] - fd[r][c]).abs() <= tol, "entry ({r},{c}): {} vs {}", j[r][c], fd[r][c]);
            }
        }
    }
}

proptest! {
    #[test]
    fn coordinate_planes_are_invariant(fbar in 0.0f64..200.0, f in 0.0f64..200.0, g in 0.0f64..20.0) {
        let p = Params::baseline();
        prop_assert_eq!(vector_field(&p, &State::new(0.0, f, g)).unwrap().fbar, 0.0);
        prop_assert_eq!(vector_field(&p, &State::new(fbar, 0.0, g)).unwrap().f, 0.0);
        prop_assert_eq!(vector_field(&p, &State::new(fbar, f, 0.0)).unwrap().g, 0.0);
    }
}

#[test]
fn closed_form_equilibria_are_zeros() {
    for p in [Params::baseline(), common::formal_free_fixture(), common::firm_free_fixture()] {
        let all = fiscalprey::equilibria::all_equilibria(&p, 64).unwrap();
        for e in all.iter().filter(|e| e.feasible) {
            let v = vector_field(&p, &e.point).unwrap();
            assert!(v.max_abs() <= 1e-12 * (1.0 + e.point.max_abs()), "{e:?} -> {v:?}");
        }
    }
}
