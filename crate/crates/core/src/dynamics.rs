//! Time integration and the uniform-boundedness certificate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{controlled_rates, rates, ControlParams, Params, State};

/// Options for the adaptive Runge-Kutta-Fehlberg 4(5) integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step length. `None` lets the controller decide.
    pub max_step: Option<f64>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions { rtol: 1e-8, atol: 1e-10, max_step: None }
    }
}

/// Accepted steps of an integration, starting with the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> State {
        *self.states.last().expect("trajectory holds at least the initial state")
    }

    /// Writes `t,fbar,f,g` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,fbar,f,g")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            writeln!(w, "{t:.16e},{:.16e},{:.16e},{:.16e}", s.fbar, s.f, s.g)?;
        }
        Ok(())
    }
}

mod rkf45 {
    pub const A: [[f64; 5]; 5] = [
        [1.0 / 4.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
        [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
        [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
        [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
    ];
    pub const C: [f64; 5] = [1.0 / 4.0, 3.0 / 8.0, 12.0 / 13.0, 1.0, 1.0 / 2.0];
    pub const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0];
    pub const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];

    pub const SAFETY: f64 = 0.9;
    // PI controller exponents (Gustafsson), for an order-4 error estimate.
    pub const BETA: f64 = 0.08;
    pub const ALPHA: f64 = 0.2 - 0.75 * BETA;
    pub const MIN_FACTOR: f64 = 0.2;
    pub const MAX_FACTOR: f64 = 5.0;
}

/// One RKF45 step. Returns the fifth-order solution and the fourth/fifth
/// order difference.
fn rkf45_step(rhs: &impl Fn(f64, &State) -> State, t: f64, y: &State, h: f64) -> (State, State) {
    let mut k = [State::ZERO; 6];
    k[0] = rhs(t, y);
    for i in 1..6 {
        let mut acc = *y;
        for (kj, a) in k[..i].iter().zip(rkf45::A[i - 1]) {
            acc = acc + *kj * (h * a);
        }
        k[i] = rhs(t + rkf45::C[i - 1] * h, &acc);
    }
    let mut y5 = *y;
    let mut diff = State::ZERO;
    for (ki, (b5, b4)) in k.iter().zip(rkf45::B5.iter().zip(rkf45::B4)) {
        y5 = y5 + *ki * (h * b5);
        diff = diff + *ki * (h * (b5 - b4));
    }
    (y5, diff)
}

fn check_start(s0: &State, t_end: f64) -> Result<()> {
    if !s0.is_finite() {
        return Err(Error::domain("initial state is not finite"));
    }
    if s0.min_component() < 0.0 {
        return Err(Error::domain("initial state must be nonnegative"));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::domain(format!("t_end must be > 0, got {t_end}")));
    }
    Ok(())
}

/// Adaptive driver shared by the controlled and uncontrolled systems.
fn integrate_with(
    rhs: impl Fn(f64, &State) -> State,
    s0: State,
    t_end: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    let max_step = opts.max_step.unwrap_or(f64::INFINITY).min(t_end);
    let min_step = 1e-12 * t_end;
    let mut h = (1e-3 * t_end).min(max_step);
    let mut t = 0.0;
    let mut y = s0;
    let mut prev_err: f64 = 1e-4;
    let mut traj = Trajectory { times: vec![0.0], states: vec![s0], steps_accepted: 0, steps_rejected: 0 };

    while t < t_end {
        let last = t + h >= t_end;
        let step = if last { t_end - t } else { h };
        let (y_new, diff) = rkf45_step(&rhs, t, &y, step);

        let err = [(diff.fbar, y.fbar, y_new.fbar), (diff.f, y.f, y_new.f), (diff.g, y.g, y_new.g)]
            .iter()
            .map(|&(e, a, b)| e.abs() / (opts.atol + opts.rtol * a.abs().max(b.abs())))
            .fold(0.0f64, f64::max);

        let went_negative = y_new.min_component() <= -opts.atol;
        if !err.is_finite() || err > 1.0 || went_negative || !y_new.is_finite() {
            traj.steps_rejected += 1;
            h = if went_negative || !err.is_finite() {
                step * 0.5
            } else {
                step * (rkf45::SAFETY * err.powf(-0.2)).max(rkf45::MIN_FACTOR)
            };
            if h < min_step {
                return Err(Error::Stiffness { t, step: h, state: y });
            }
            continue;
        }

        t = if last { t_end } else { t + step };
        y = y_new.map(|v| if v < 0.0 { 0.0 } else { v });
        traj.times.push(t);
        traj.states.push(y);
        traj.steps_accepted += 1;

        let factor = if err == 0.0 {
            rkf45::MAX_FACTOR
        } else {
            (rkf45::SAFETY * err.powf(-rkf45::ALPHA) * prev_err.powf(rkf45::BETA))
                .clamp(rkf45::MIN_FACTOR, rkf45::MAX_FACTOR)
        };
        prev_err = err.max(1e-4);
        if !last {
            h = (step * factor).min(max_step);
        }
    }
    Ok(traj)
}

/// Integrates the uncontrolled system from `s0` over `[0, t_end]`.
pub fn integrate(p: &Params, s0: State, t_end: f64, opts: &IntegrationOptions) -> Result<Trajectory> {
    p.validate()?;
    check_start(&s0, t_end)?;
    integrate_with(|_, s| rates(p, s), s0, t_end, opts)
}

/// Piecewise-linear control signal. Outside its knot range the end values
/// are held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ControlSchedule {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::domain("control schedule needs equally many knots and values"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("control schedule knots must be strictly increasing"));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::domain("control schedule must be finite"));
        }
        Ok(ControlSchedule { times, values })
    }

    pub fn constant(u: f64, t1: f64) -> Result<Self> {
        ControlSchedule::new(vec![0.0, t1], vec![u, u])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&x| x <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// Integrates the controlled system over `[0, cp.t1]`.
pub fn integrate_controlled(
    p: &Params,
    cp: &ControlParams,
    s0: State,
    schedule: &ControlSchedule,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    p.validate()?;
    cp.validate()?;
    check_start(&s0, cp.t1)?;
    if let Some(u) = schedule.values.iter().find(|u| !(0.0..=cp.u_max).contains(*u)) {
        return Err(Error::domain(format!("control value {u} outside [0, {}]", cp.u_max)));
    }
    integrate_with(|t, s| controlled_rates(p, cp, s, schedule.value_at(t)), s0, cp.t1, opts)
}

/// Classical fixed-step RK4 endpoint; reference solution for the adaptive
/// integrator. The final step is shortened to land on `t_end`.
pub fn rk4_endpoint(p: &Params, s0: State, t_end: f64, dt: f64) -> Result<State> {
    p.validate()?;
    check_start(&s0, t_end)?;
    if !(dt > 0.0) {
        return Err(Error::domain("dt must be > 0"));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut y = s0;
    for _ in 0..steps {
        y = rk4_step(&|s: &State| rates(p, s), &y, h);
    }
    Ok(y)
}

#[inline]
pub(crate) fn rk4_step(f: &impl Fn(&State) -> State, y: &State, h: f64) -> State {
    let k1 = f(y);
    let k2 = f(&(*y + k1 * (h / 2.0)));
    let k3 = f(&(*y + k2 * (h / 2.0)));
    let k4 = f(&(*y + k3 * h));
    *y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundednessCertificate {
    /// `min{sigma, mu/l}`.
    pub g_rate: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    /// `Z / g_rate`.
    pub bound: f64,
    #[serde(rename = "X_max_observed")]
    pub x_max_observed: f64,
    pub epsilon_margin: f64,
    pub transient_fraction: f64,
    pub satisfied: bool,
}

/// The weighted total `fbar + f + g/l`.
pub fn weighted_total(p: &Params, s: &State) -> f64 {
    s.fbar + s.f + s.g / p.l
}

/// Analytic absorbing-region bound, without a trajectory.
pub fn boundedness_bound(p: &Params) -> Result<(f64, f64, f64)> {
    p.validate()?;
    let g = p.sigma.min(p.mu / p.l);
    if !(g > 0.0) {
        return Err(Error::CertificateUnavailable(format!(
            "min(sigma, mu/l) = {g} must be positive for a finite bound"
        )));
    }
    let z = p.k * (p.r + g).powi(2) / (4.0 * p.r) + p.d * p.d / (4.0 * p.l * p.delta);
    Ok((g, z, z / g))
}

/// Compares the observed weighted total after the transient window with the
/// analytic bound.
pub fn boundedness_certificate(
    p: &Params,
    traj: &Trajectory,
    transient_fraction: f64,
) -> Result<BoundednessCertificate> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::domain("transient_fraction must lie in [0, 1)"));
    }
    let (g_rate, z, bound) = boundedness_bound(p)?;
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    let t1 = traj.times.last().copied().unwrap_or(0.0);
    let cutoff = t0 + transient_fraction * (t1 - t0);
    let x_max_observed = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= cutoff)
        .map(|(_, s)| weighted_total(p, s))
        .fold(0.0f64, f64::max);
    let epsilon_margin = 1e-6 * bound;
    Ok(BoundednessCertificate {
        g_rate,
        z,
        bound,
        x_max_observed,
        epsilon_margin,
        transient_fraction,
        satisfied: x_max_observed <= bound + epsilon_margin,
    })
}
