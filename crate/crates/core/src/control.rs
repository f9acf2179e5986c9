//! Optimal penalty control by forward-backward sweep.
//!
//! The objective is `J = ∫ (v1 fbar + v2 f + v3 u^2) dt` over `[0, t1]`,
//! minimised over controls `0 <= u <= u_max` subject to the controlled
//! system. Adjoints run backward from zero terminal values; the control is
//! updated from stationarity of the Hamiltonian in `u`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{controlled_rates, jacobian_unchecked, ControlParams, Params, State};

/// Costates paired with `(fbar, f, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdjointState {
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

impl AdjointState {
    pub const ZERO: AdjointState = AdjointState { psi1: 0.0, psi2: 0.0, psi3: 0.0 };

    pub const fn new(psi1: f64, psi2: f64, psi3: f64) -> Self {
        AdjointState { psi1, psi2, psi3 }
    }

    fn as_state(self) -> State {
        State::new(self.psi1, self.psi2, self.psi3)
    }

    fn from_state(s: State) -> Self {
        AdjointState::new(s.fbar, s.f, s.g)
    }

    pub fn is_finite(&self) -> bool {
        self.as_state().is_finite()
    }
}

fn check_inputs(cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> Result<()> {
    if !s.is_finite() || !psi.is_finite() || !u.is_finite() {
        return Err(Error::domain("non-finite state, costate or control"));
    }
    if !(0.0..=cp.u_max).contains(&u) {
        return Err(Error::domain(format!("control {u} outside [0, {}]", cp.u_max)));
    }
    Ok(())
}

/// Running cost `v1 fbar + v2 f + v3 u^2`.
pub fn running_cost(cp: &ControlParams, s: &State, u: f64) -> f64 {
    cp.v1 * s.fbar + cp.v2 * s.f + cp.v3 * u * u
}

fn hamiltonian_unchecked(p: &Params, cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> f64 {
    let v = controlled_rates(p, cp, s, u);
    running_cost(cp, s, u) + psi.psi1 * v.fbar + psi.psi2 * v.f + psi.psi3 * v.g
}

pub fn hamiltonian(p: &Params, cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> Result<f64> {
    check_inputs(cp, s, psi, u)?;
    Ok(hamiltonian_unchecked(p, cp, s, psi, u))
}

/// `dH/du`.
pub fn hamiltonian_du(cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> f64 {
    2.0 * cp.v3 * u - cp.eps1 * psi.psi1 * s.fbar - cp.eps2 * psi.psi2 * s.f - cp.eps3 * psi.psi3 * s.g
}

fn adjoint_unchecked(p: &Params, cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> AdjointState {
    let mut j = jacobian_unchecked(p, s);
    j[0][0] -= cp.eps1 * u;
    j[1][1] -= cp.eps2 * u;
    j[2][2] -= cp.eps3 * u;
    let y = [psi.psi1, psi.psi2, psi.psi3];
    // -dH/dx = -dL/dx - J^T psi
    let col = |k: usize| j[0][k] * y[0] + j[1][k] * y[1] + j[2][k] * y[2];
    AdjointState::new(-cp.v1 - col(0), -cp.v2 - col(1), -col(2))
}

/// Costate derivative `-dH/d(fbar, f, g)`.
pub fn adjoint_field(p: &Params, cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> Result<AdjointState> {
    check_inputs(cp, s, psi, u)?;
    Ok(adjoint_unchecked(p, cp, s, psi, u))
}

/// Term-for-term transcription of the commonly printed costate equations,
/// reading `2S` as `2 fbar` and keeping the standalone `+alpha` in the
/// second line. Used only for the discrepancy table.
pub fn printed_adjoint_field(p: &Params, cp: &ControlParams, s: &State, psi: &AdjointState, u: f64) -> AdjointState {
    let State { fbar, f, g } = *s;
    let sat = p.a + fbar;
    let cap = p.capacity_factor(s);
    let mn = (p.m - p.n) * p.gamma;
    let d1 = -cp.v1
        + (p.alpha * f - p.r * (1.0 - (2.0 * fbar + p.pi * f) / p.k) + p.a * p.beta * g / (sat * sat) + cp.eps1 * u)
            * psi.psi1
        - p.alpha * f * psi.psi2
        + (p.d * g / p.k - p.l * p.a * p.beta * g / (sat * sat)) * psi.psi3;
    let d2 = -cp.v2
        + p.alpha
        + p.r * p.pi / p.k * fbar * psi.psi1
        + (p.gamma * g - p.alpha * fbar + p.sigma + cp.eps2 * u) * psi.psi2
        + (p.d * p.pi / p.k - mn) * g * psi.psi3;
    let d3 = p.beta * fbar / sat * psi.psi1
        + p.gamma * f * psi.psi2
        + (p.mu + 2.0 * p.delta * g + cp.eps3 * u - p.l * p.beta * fbar / sat - mn * f - p.d * cap) * psi.psi3;
    AdjointState::new(d1, d2, d3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointDiscrepancy {
    pub component: &'static str,
    pub derived: f64,
    pub printed: f64,
    pub difference: f64,
}

/// Derived versus printed costate derivatives at one point.
pub fn adjoint_discrepancies(
    p: &Params,
    cp: &ControlParams,
    s: &State,
    psi: &AdjointState,
    u: f64,
) -> Result<[AdjointDiscrepancy; 3]> {
    let d = adjoint_field(p, cp, s, psi, u)?;
    let q = printed_adjoint_field(p, cp, s, psi, u);
    let row = |component, derived: f64, printed: f64| AdjointDiscrepancy {
        component,
        derived,
        printed,
        difference: printed - derived,
    };
    Ok([row("psi1", d.psi1, q.psi1), row("psi2", d.psi2, q.psi2), row("psi3", d.psi3, q.psi3)])
}

/// Minimiser of the Hamiltonian in `u`, projected onto `[0, u_max]`.
pub fn optimal_u(cp: &ControlParams, s: &State, psi: &AdjointState) -> f64 {
    let raw = (cp.eps1 * psi.psi1 * s.fbar + cp.eps2 * psi.psi2 * s.f + cp.eps3 * psi.psi3 * s.g) / (2.0 * cp.v3);
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(0.0, cp.u_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Mesh intervals; the mesh has `n_intervals + 1` knots.
    pub n_intervals: usize,
    pub max_iterations: usize,
    /// Weight of the previous control in the update.
    pub relaxation: f64,
    /// Convergence threshold relative to `u_max`.
    pub tolerance: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { n_intervals: 1000, max_iterations: 500, relaxation: 0.5, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSolution {
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub state_path: Vec<State>,
    pub adjoint_path: Vec<AdjointState>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ControlSolution {
    pub fn summary(&self) -> ControlSummary {
        ControlSummary { objective: self.objective, iterations: self.iterations, converged: self.converged }
    }

    /// Writes `t,u,fbar,f,g,psi1,psi2,psi3` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,u,fbar,f,g,psi1,psi2,psi3")?;
        for i in 0..self.grid.len() {
            let (s, y) = (self.state_path[i], self.adjoint_path[i]);
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.grid[i], self.u[i], s.fbar, s.f, s.g, y.psi1, y.psi2, y.psi3
            )?;
        }
        Ok(())
    }
}

/// Cubic Hermite midpoint of a mesh interval.
fn midpoint(x0: &State, x1: &State, f0: &State, f1: &State, dt: f64) -> State {
    (*x0 + *x1) * 0.5 + (*f0 - *f1) * (dt / 8.0)
}

fn forward(p: &Params, cp: &ControlParams, s0: State, u: &[f64], dt: f64) -> Vec<State> {
    let mut path = Vec::with_capacity(u.len());
    path.push(s0);
    for k in 0..u.len() - 1 {
        let (u0, u1) = (u[k], u[k + 1]);
        let x = path[k];
        // RK4 with the control varying linearly across the step.
        let k1 = controlled_rates(p, cp, &x, u0);
        let um = 0.5 * (u0 + u1);
        let k2 = controlled_rates(p, cp, &(x + k1 * (dt / 2.0)), um);
        let k3 = controlled_rates(p, cp, &(x + k2 * (dt / 2.0)), um);
        let k4 = controlled_rates(p, cp, &(x + k3 * dt), u1);
        path.push(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0));
    }
    path
}

fn backward(p: &Params, cp: &ControlParams, states: &[State], u: &[f64], dt: f64) -> Vec<AdjointState> {
    let n = states.len();
    let mut path = vec![AdjointState::ZERO; n];
    let field = |s: &State, u: f64, y: State| adjoint_unchecked(p, cp, s, &AdjointState::from_state(y), u).as_state();
    for k in (0..n - 1).rev() {
        let (x0, x1) = (states[k], states[k + 1]);
        let f0 = controlled_rates(p, cp, &x0, u[k]);
        let f1 = controlled_rates(p, cp, &x1, u[k + 1]);
        let xm = midpoint(&x0, &x1, &f0, &f1, dt);
        let um = 0.5 * (u[k] + u[k + 1]);
        let y = path[k + 1].as_state();
        let k1 = field(&x1, u[k + 1], y);
        let k2 = field(&xm, um, y - k1 * (dt / 2.0));
        let k3 = field(&xm, um, y - k2 * (dt / 2.0));
        let k4 = field(&x0, u[k], y - k3 * dt);
        path[k] = AdjointState::from_state(y - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0));
    }
    path
}

/// Trapezoid rule on a uniform mesh.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => dt * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// Objective of a mesh control, integrating the state with mesh RK4.
pub fn objective_on_mesh(p: &Params, cp: &ControlParams, s0: State, u: &[f64]) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::domain("control mesh needs at least two knots"));
    }
    let dt = cp.t1 / (u.len() - 1) as f64;
    let states = forward(p, cp, s0, u, dt);
    let integrand: Vec<f64> = states.iter().zip(u).map(|(s, &v)| running_cost(cp, s, v)).collect();
    Ok(trapezoid(&integrand, dt))
}

pub fn forward_backward_sweep(p: &Params, cp: &ControlParams, s0: State) -> Result<ControlSolution> {
    forward_backward_sweep_with(p, cp, s0, &SweepOptions::default())
}

pub fn forward_backward_sweep_with(
    p: &Params,
    cp: &ControlParams,
    s0: State,
    opts: &SweepOptions,
) -> Result<ControlSolution> {
    p.validate()?;
    cp.validate()?;
    if !s0.is_finite() || s0.min_component() < 0.0 {
        return Err(Error::domain("initial state must be finite and nonnegative"));
    }
    if opts.n_intervals == 0 || opts.max_iterations == 0 || !(0.0..1.0).contains(&opts.relaxation) {
        return Err(Error::domain("invalid sweep options"));
    }
    let n = opts.n_intervals;
    let dt = cp.t1 / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| cp.t1 * i as f64 / n as f64).collect();
    let mut u = vec![0.0; n + 1];
    let threshold = opts.tolerance * cp.u_max;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let states = forward(p, cp, s0, &u, dt);
        let adjoints = backward(p, cp, &states, &u, dt);
        let mut change: f64 = 0.0;
        for k in 0..=n {
            let candidate = optimal_u(cp, &states[k], &adjoints[k]);
            let next = (opts.relaxation * u[k] + (1.0 - opts.relaxation) * candidate).clamp(0.0, cp.u_max);
            change = change.max((next - u[k]).abs());
            u[k] = next;
        }
        if !change.is_finite() {
            return Err(Error::Divergence("sweep produced non-finite controls".into()));
        }
        if change <= threshold {
            converged = true;
            break;
        }
    }

    if converged {
        let states = forward(p, cp, s0, &u, dt);
        let adjoints = backward(p, cp, &states, &u, dt);
        for k in 0..=n {
            u[k] = optimal_u(cp, &states[k], &adjoints[k]);
        }
    }
    let state_path = forward(p, cp, s0, &u, dt);
    let adjoint_path = backward(p, cp, &state_path, &u, dt);
    let integrand: Vec<f64> = state_path.iter().zip(&u).map(|(s, &v)| running_cost(cp, s, v)).collect();
    Ok(ControlSolution {
        grid,
        u,
        state_path,
        adjoint_path,
        objective: trapezoid(&integrand, dt),
        iterations,
        converged,
    })
}

#[cfg(test)]
fn rk4_constant_control(p: &Params, cp: &ControlParams, s0: State, u: f64, steps: usize) -> State {
    let h = cp.t1 / steps as f64;
    let mut y = s0;
    for _ in 0..steps {
        y = crate::dynamics::rk4_step(&|s: &State| controlled_rates(p, cp, s, u), &y, h);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamiltonian_reduces_to_running_cost() {
        let p = Params::baseline();
        let cp = ControlParams::baseline();
        let s = State::new(10.0, 5.0, 2.0);
        assert_eq!(hamiltonian(&p, &cp, &s, &AdjointState::ZERO, 0.0).unwrap(), 15.0);
        assert_eq!(hamiltonian(&p, &cp, &State::ZERO, &AdjointState::new(1.0, 2.0, 3.0), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn adjoint_at_origin() {
        let p = Params::baseline();
        let cp = ControlParams::baseline();
        let d = adjoint_field(&p, &cp, &State::ZERO, &AdjointState::ZERO, 0.0).unwrap();
        assert_eq!(d, AdjointState::new(-1.0, -1.0, 0.0));
    }

    #[test]
    fn zero_costate_gives_zero_control() {
        let cp = ControlParams::baseline();
        assert_eq!(optimal_u(&cp, &State::new(10.0, 5.0, 2.0), &AdjointState::ZERO), 0.0);
        assert_eq!(optimal_u(&cp, &State::new(10.0, 5.0, 2.0), &AdjointState::new(1e6, 0.0, 0.0)), cp.u_max);
    }

    #[test]
    fn control_bounds_enforced() {
        let p = Params::baseline();
        let cp = ControlParams::baseline();
        assert!(hamiltonian(&p, &cp, &State::ZERO, &AdjointState::ZERO, -1.0).is_err());
        assert!(adjoint_field(&p, &cp, &State::ZERO, &AdjointState::ZERO, 3.0).is_err());
    }

    #[test]
    fn printed_and_derived_agree_except_second_line() {
        let p = Params::baseline();
        let cp = ControlParams::baseline();
        let s = State::new(10.0, 5.0, 2.0);
        let psi = AdjointState::new(0.3, -0.2, 0.7);
        let rows = adjoint_discrepancies(&p, &cp, &s, &psi, 0.5).unwrap();
        assert!(rows[0].difference.abs() < 1e-12);
        assert!(rows[2].difference.abs() < 1e-12);
        // standalone alpha versus alpha fbar psi1
        let expected = p.alpha - p.alpha * s.fbar * psi.psi1;
        assert!((rows[1].difference - expected).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_of_linear_is_exact() {
        let v: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        assert!((trapezoid(&v, 0.1) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mesh_forward_matches_fixed_rk4_under_constant_control() {
        let p = Params::baseline();
        let cp = ControlParams::baseline();
        let s0 = State::new(10.0, 5.0, 2.0);
        let u = vec![1.0; 1001];
        let path = forward(&p, &cp, s0, &u, cp.t1 / 1000.0);
        let reference = rk4_constant_control(&p, &cp, s0, 1.0, 1000);
        assert!(path.last().unwrap().distance(&reference) < 1e-12);
    }

    #[test]
    fn no_penalty_effect_means_no_control() {
        let p = Params::baseline();
        let cp = ControlParams { eps1: 0.0, eps2: 0.0, eps3: 0.0, ..ControlParams::baseline() };
        let sol = forward_backward_sweep(&p, &cp, State::new(10.0, 5.0, 2.0)).unwrap();
        assert!(sol.converged);
        assert!(sol.u.iter().all(|&u| u == 0.0));
        assert_eq!(*sol.adjoint_path.last().unwrap(), AdjointState::ZERO);
    }
}
