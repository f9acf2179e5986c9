mod common;

use fiscalprey::control::{
    adjoint_field, forward_backward_sweep, forward_backward_sweep_with, hamiltonian, hamiltonian_du, objective_on_mesh,
    optimal_u, running_cost, SweepOptions,
};
use fiscalprey::dynamics::{integrate, integrate_controlled, ControlSchedule, IntegrationOptions};
use fiscalprey::{AdjointState, ControlParams, Params, State};
use rand::Rng;

fn random_costate(rng: &mut impl Rng) -> AdjointState {
    AdjointState::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))
}

fn constant_control_objective(p: &Params, cp: &ControlParams, s0: State, c: f64, n: usize) -> f64 {
    let opts = IntegrationOptions { max_step: Some(cp.t1 / n as f64), ..Default::default() };
    let traj = integrate_controlled(p, cp, s0, &ControlSchedule::constant(c, cp.t1).unwrap(), &opts).unwrap();
    let cost: Vec<f64> = traj.states.iter().map(|s| running_cost(cp, s, c)).collect();
    traj.times.windows(2).zip(cost.windows(2)).map(|(t, l)| 0.5 * (t[1] - t[0]) * (l[0] + l[1])).sum()
}

#[test]
fn hamiltonian_slope_matches_finite_difference() {
    let mut rng = common::rng(41);
    let p = Params::baseline();
    let cp = common::baseline_control();
    for _ in 0..100 {
        let s = common::random_positive_state(&mut rng, &p);
        let psi = random_costate(&mut rng);
        let u = rng.gen_range(0.1..1.9);
        let h = 1e-5;
        let fd = (hamiltonian(&p, &cp, &s, &psi, u + h).unwrap() - hamiltonian(&p, &cp, &s, &psi, u - h).unwrap())
            / (2.0 * h);
        let exact = hamiltonian_du(&cp, &s, &psi, u);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
    }
}

#[test]
fn adjoint_matches_state_gradient_of_hamiltonian() {
    let mut rng = common::rng(42);
    for _ in 0..100 {
        let p = common::random_params(&mut rng);
        let cp = common::baseline_control();
        let s = common::random_positive_state(&mut rng, &p);
        let psi = random_costate(&mut rng);
        let u = rng.gen_range(0.0..cp.u_max);
        let d = adjoint_field(&p, &cp, &s, &psi, u).unwrap();
        let x = s.to_array();
        let derived = [d.psi1, d.psi2, d.psi3];
        for k in 0..3 {
            let h = 1e-6 * x[k].max(1.0);
            let (mut up, mut dn) = (x, x);
            up[k] += h;
            dn[k] -= h;
            let hu = hamiltonian(&p, &cp, &State::from_array(up), &psi, u).unwrap();
            let hd = hamiltonian(&p, &cp, &State::from_array(dn), &psi, u).unwrap();
            let fd = -(hu - hd) / (2.0 * h);
            let scale = derived[k].abs().max(1.0);
            assert!((fd - derived[k]).abs() <= 1e-5 * scale, "component {k}: {fd} vs {}", derived[k]);
        }
    }
}

#[test]
fn adjoint_is_affine_in_costate() {
    let mut rng = common::rng(43);
    let p = Params::baseline();
    let cp = common::baseline_control();
    for _ in 0..20 {
        let s = common::random_positive_state(&mut rng, &p);
        let psi = random_costate(&mut rng);
        let u = rng.gen_range(0.0..cp.u_max);
        let c = rng.gen_range(-3.0..3.0);
        let base = adjoint_field(&p, &cp, &s, &AdjointState::ZERO, u).unwrap();
        let one = adjoint_field(&p, &cp, &s, &psi, u).unwrap();
        let scaled =
            adjoint_field(&p, &cp, &s, &AdjointState::new(c * psi.psi1, c * psi.psi2, c * psi.psi3), u).unwrap();
        for (b, (o, sc)) in [base.psi1, base.psi2, base.psi3].iter().zip([one.psi1, one.psi2, one.psi3].iter().zip([
            scaled.psi1,
            scaled.psi2,
            scaled.psi3,
        ])) {
            let expected = b + c * (o - b);
            assert!((sc - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }
}

#[test]
fn optimal_control_minimises_hamiltonian_on_grid() {
    let mut rng = common::rng(44);
    let p = Params::baseline();
    let cp = common::baseline_control();
    for _ in 0..100 {
        let s = common::random_positive_state(&mut rng, &p);
        let psi = AdjointState::new(rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(-1.0..3.0));
        let u = optimal_u(&cp, &s, &psi);
        let best = hamiltonian(&p, &cp, &s, &psi, u).unwrap();
        for i in 0..100 {
            let v = cp.u_max * i as f64 / 99.0;
            assert!(best <= hamiltonian(&p, &cp, &s, &psi, v).unwrap() + 1e-9);
        }
    }
}

#[test]
fn baseline_sweep_beats_constant_controls() {
    let p = Params::baseline();
    let cp = common::baseline_control();
    let s0 = common::baseline_start();
    let sol = forward_backward_sweep(&p, &cp, s0).unwrap();
    assert!(sol.converged);
    assert!(sol.u.iter().all(|&u| (0.0..=cp.u_max).contains(&u)));
    for i in 0..=8 {
        let c = 0.25 * i as f64;
        let j = constant_control_objective(&p, &cp, s0, c, 1000);
        assert!(sol.objective <= j, "J(u*)={} > J({c})={j}", sol.objective);
    }
    let zero_mesh = objective_on_mesh(&p, &cp, s0, &vec![0.0; 1001]).unwrap();
    assert!(sol.objective <= zero_mesh + 1e-10);
}

#[test]
fn sweep_objective_is_mesh_converged() {
    let p = Params::baseline();
    let cp = common::baseline_control();
    let s0 = common::baseline_start();
    let coarse = forward_backward_sweep(&p, &cp, s0).unwrap();
    let fine =
        forward_backward_sweep_with(&p, &cp, s0, &SweepOptions { n_intervals: 2000, ..Default::default() }).unwrap();
    assert!(common::relative_close(coarse.objective, fine.objective, 1e-4));
}

#[test]
fn sweep_satisfies_minimum_principle_and_transversality() {
    let p = Params::baseline();
    let cp = common::baseline_control();
    let sol = forward_backward_sweep(&p, &cp, common::baseline_start()).unwrap();
    assert_eq!(*sol.adjoint_path.last().unwrap(), AdjointState::ZERO);
    for ((s, psi), &u) in sol.state_path.iter().zip(&sol.adjoint_path).zip(&sol.u) {
        let h = hamiltonian(&p, &cp, s, psi, u).unwrap();
        for i in 0..50 {
            let v = cp.u_max * i as f64 / 49.0;
            let hv = hamiltonian(&p, &cp, s, psi, v).unwrap();
            assert!(
                h <= hv + 1e-8,
                "u={u} u*={} v={v} gap={} iters={}",
                optimal_u(&cp, s, psi),
                h - hv,
                sol.iterations
            );
        }
    }
}

#[test]
fn inert_penalty_leaves_dynamics_unchanged() {
    let p = Params::baseline();
    let cp = ControlParams { eps1: 0.0, eps2: 0.0, eps3: 0.0, ..common::baseline_control() };
    let s0 = common::baseline_start();
    let sol = forward_backward_sweep(&p, &cp, s0).unwrap();
    assert!(sol.u.iter().all(|&u| u == 0.0));
    let free = integrate(&p, s0, cp.t1, &IntegrationOptions::default()).unwrap();
    assert!(sol.state_path.last().unwrap().distance(&free.last()) < 1e-6);
}

#[test]
fn sweep_csv_has_one_row_per_knot() {
    let p = Params::baseline();
    let cp = ControlParams { t1: 2.0, ..common::baseline_control() };
    let sol = forward_backward_sweep_with(
        &p,
        &cp,
        common::baseline_start(),
        &SweepOptions { n_intervals: 50, ..Default::default() },
    )
    .unwrap();
    let mut buf = Vec::new();
    sol.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,u,fbar,f,g,psi1,psi2,psi3");
    assert_eq!(text.lines().count(), 52);
}
