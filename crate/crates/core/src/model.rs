//! Model types and the vector fields of the harvesting system.
//!
//! Three compartments interact: informal-firm profit `fbar` (prey harvested
//! through a saturating Holling type 2 response), formal-firm profit `f`
//! (prey harvested through a linear type 1 response, with a shutdown rate)
//! and government revenue `g` (the predator). All operations here are pure.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major 3x3 matrix.
pub type Matrix3 = [[f64; 3]; 3];

/// Coefficients of the uncontrolled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct Params {
    /// Intrinsic profit growth rate.
    pub r: f64,
    /// Maximum profit capacity.
    #[serde(rename = "K")]
    pub k: f64,
    /// Weight of formal profit in the shared capacity term.
    pub pi: f64,
    /// Formal capture rate (type 1 response).
    pub alpha: f64,
    /// Informal maximum capture rate (type 2 response).
    pub beta: f64,
    /// Half-saturation constant of the type 2 response.
    pub a: f64,
    /// Tax-rate effect of government on formal firms.
    pub gamma: f64,
    /// Shutdown rate of heavily taxed formal firms.
    pub sigma: f64,
    /// Fraction of informal capture converted into revenue.
    pub l: f64,
    /// Contribution of formal capture to revenue.
    pub m: f64,
    /// Negative impact of firm shutdown on revenue.
    pub n: f64,
    /// Growth rate of alternative revenue.
    pub d: f64,
    /// Decay rate of tax-revenue capacity.
    pub mu: f64,
    /// Density-dependent revenue decay.
    pub delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    r: f64,
    #[serde(rename = "K")]
    k: f64,
    pi: f64,
    alpha: f64,
    beta: f64,
    #[serde(default)]
    a: Option<f64>,
    gamma: f64,
    sigma: f64,
    l: f64,
    m: f64,
    n: f64,
    d: f64,
    mu: f64,
    delta: f64,
}

impl TryFrom<RawParams> for Params {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        let p = Params {
            r: raw.r,
            k: raw.k,
            pi: raw.pi,
            alpha: raw.alpha,
            beta: raw.beta,
            a: raw.a.unwrap_or(raw.k / 2.0),
            gamma: raw.gamma,
            sigma: raw.sigma,
            l: raw.l,
            m: raw.m,
            n: raw.n,
            d: raw.d,
            mu: raw.mu,
            delta: raw.delta,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Params {
    /// Reference parameter set used throughout the tests and fixtures.
    pub fn baseline() -> Self {
        Params {
            r: 1.0,
            k: 100.0,
            pi: 0.5,
            alpha: 0.02,
            beta: 0.6,
            a: 50.0,
            gamma: 0.01,
            sigma: 0.4,
            l: 0.5,
            m: 0.6,
            n: 0.1,
            d: 0.5,
            mu: 0.2,
            delta: 0.05,
        }
    }

    /// Sets `a` to half the capacity.
    pub fn with_default_saturation(mut self) -> Self {
        self.a = self.k / 2.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("r", self.r),
            ("K", self.k),
            ("pi", self.pi),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("a", self.a),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("l", self.l),
            ("m", self.m),
            ("n", self.n),
            ("d", self.d),
            ("mu", self.mu),
            ("delta", self.delta),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::domain(format!("parameter {name} is not finite")));
            }
        }
        for (name, v) in [("r", self.r), ("K", self.k), ("a", self.a), ("delta", self.delta)] {
            if v <= 0.0 {
                return Err(Error::domain(format!("parameter {name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("pi", self.pi),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("sigma", self.sigma),
            ("m", self.m),
            ("n", self.n),
            ("d", self.d),
            ("mu", self.mu),
        ] {
            if v < 0.0 {
                return Err(Error::domain(format!("parameter {name} must be >= 0, got {v}")));
            }
        }
        if !(self.l > 0.0 && self.l <= 1.0) {
            return Err(Error::domain(format!("parameter l must lie in (0, 1], got {}", self.l)));
        }
        Ok(())
    }

    /// Shared capacity factor `1 - (fbar + pi f)/K`.
    #[inline]
    pub fn capacity_factor(&self, s: &State) -> f64 {
        1.0 - (s.fbar + self.pi * s.f) / self.k
    }

    /// Type 2 capture per unit of revenue, `beta fbar / (a + fbar)`.
    #[inline]
    pub fn holling2(&self, fbar: f64) -> f64 {
        self.beta * fbar / (self.a + fbar)
    }
}

/// Parameters of the penalty-control extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawControlParams")]
pub struct ControlParams {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub u_max: f64,
    pub t1: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControlParams {
    eps1: f64,
    eps2: f64,
    eps3: f64,
    v1: f64,
    v2: f64,
    v3: f64,
    u_max: f64,
    t1: f64,
}

impl TryFrom<RawControlParams> for ControlParams {
    type Error = Error;

    fn try_from(raw: RawControlParams) -> Result<Self> {
        let cp = ControlParams {
            eps1: raw.eps1,
            eps2: raw.eps2,
            eps3: raw.eps3,
            v1: raw.v1,
            v2: raw.v2,
            v3: raw.v3,
            u_max: raw.u_max,
            t1: raw.t1,
        };
        cp.validate()?;
        Ok(cp)
    }
}

impl ControlParams {
    /// Reference control problem paired with [`Params::baseline`].
    pub fn baseline() -> Self {
        ControlParams { eps1: 0.1, eps2: 0.2, eps3: 0.05, v1: 1.0, v2: 1.0, v3: 10.0, u_max: 2.0, t1: 20.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.eps1, self.eps2, self.eps3, self.v1, self.v2, self.v3, self.u_max, self.t1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("control parameters must be finite"));
        }
        if self.v3 <= 0.0 {
            return Err(Error::domain(format!("v3 must be > 0, got {}", self.v3)));
        }
        if self.u_max <= 0.0 {
            return Err(Error::domain(format!("u_max must be > 0, got {}", self.u_max)));
        }
        if self.t1 <= 0.0 {
            return Err(Error::domain(format!("horizon t1 must be > 0, got {}", self.t1)));
        }
        Ok(())
    }
}

/// Informal profit, formal profit and government revenue. The same type
/// carries time derivatives of those quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub fbar: f64,
    pub f: f64,
    pub g: f64,
}

impl State {
    pub const ZERO: State = State { fbar: 0.0, f: 0.0, g: 0.0 };

    pub const fn new(fbar: f64, f: f64, g: f64) -> Self {
        State { fbar, f, g }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        State::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.fbar, self.f, self.g]
    }

    pub fn is_finite(&self) -> bool {
        self.fbar.is_finite() && self.f.is_finite() && self.g.is_finite()
    }

    pub fn min_component(&self) -> f64 {
        self.fbar.min(self.f).min(self.g)
    }

    pub fn max_abs(&self) -> f64 {
        self.fbar.abs().max(self.f.abs()).max(self.g.abs())
    }

    /// Max-norm distance.
    pub fn distance(&self, other: &State) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn euclidean_distance(&self, other: &State) -> f64 {
        let d = *self - *other;
        (d.fbar * d.fbar + d.f * d.f + d.g * d.g).sqrt()
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Self {
        State::new(f(self.fbar), f(self.f), f(self.g))
    }
}

impl Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State::new(self.fbar + o.fbar, self.f + o.f, self.g + o.g)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.fbar - o.fbar, self.f - o.f, self.g - o.g)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, c: f64) -> State {
        State::new(self.fbar * c, self.f * c, self.g * c)
    }
}

fn check_state(s: &State) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("non-finite state ({}, {}, {})", s.fbar, s.f, s.g)))
    }
}

/// Right-hand side of the uncontrolled system.
pub fn vector_field(p: &Params, s: &State) -> Result<State> {
    check_state(s)?;
    Ok(rates(p, s))
}

/// Unchecked right-hand side, used in inner loops after inputs are validated.
#[inline]
pub(crate) fn rates(p: &Params, s: &State) -> State {
    let cap = p.capacity_factor(s);
    let capture = p.holling2(s.fbar) * s.g;
    State {
        fbar: p.r * s.fbar * cap - p.alpha * s.fbar * s.f - capture,
        f: p.alpha * s.fbar * s.f - p.gamma * s.f * s.g - p.sigma * s.f,
        g: p.l * capture + (p.m - p.n) * p.gamma * s.f * s.g + p.d * cap * s.g - p.mu * s.g - p.delta * s.g * s.g,
    }
}

/// Per-capita revenue growth `g'/g`, well defined at `g = 0`.
#[inline]
pub(crate) fn revenue_per_capita(p: &Params, s: &State) -> f64 {
    p.l * p.holling2(s.fbar) + (p.m - p.n) * p.gamma * s.f + p.d * p.capacity_factor(s) - p.mu - p.delta * s.g
}

/// Right-hand side under penalty control `u`: each compartment loses
/// `eps_i u` times its own level.
pub fn controlled_vector_field(p: &Params, cp: &ControlParams, s: &State, u: f64) -> Result<State> {
    check_state(s)?;
    if !(0.0..=cp.u_max).contains(&u) {
        return Err(Error::domain(format!("control {u} outside [0, {}]", cp.u_max)));
    }
    Ok(controlled_rates(p, cp, s, u))
}

#[inline]
pub(crate) fn controlled_rates(p: &Params, cp: &ControlParams, s: &State, u: f64) -> State {
    let base = rates(p, s);
    State { fbar: base.fbar - cp.eps1 * u * s.fbar, f: base.f - cp.eps2 * u * s.f, g: base.g - cp.eps3 * u * s.g }
}

/// Analytic Jacobian of [`vector_field`]; row `i` holds the partials of
/// component `i` with respect to `(fbar, f, g)`.
pub fn jacobian(p: &Params, s: &State) -> Result<Matrix3> {
    check_state(s)?;
    Ok(jacobian_unchecked(p, s))
}

pub(crate) fn jacobian_unchecked(p: &Params, s: &State) -> Matrix3 {
    let State { fbar, f, g } = *s;
    let cap = p.capacity_factor(s);
    let sat = p.a + fbar;
    // d/dfbar of beta fbar/(a + fbar)
    let dholling = p.a * p.beta / (sat * sat);
    let h = p.holling2(fbar);
    let mn = (p.m - p.n) * p.gamma;
    [
        [
            p.r * (1.0 - (2.0 * fbar + p.pi * f) / p.k) - p.alpha * f - dholling * g,
            -p.r * p.pi * fbar / p.k - p.alpha * fbar,
            -h,
        ],
        [p.alpha * f, p.alpha * fbar - p.gamma * g - p.sigma, -p.gamma * f],
        [
            p.l * dholling * g - p.d * g / p.k,
            mn * g - p.d * p.pi * g / p.k,
            p.l * h + mn * f + p.d * cap - p.mu - 2.0 * p.delta * g,
        ],
    ]
}
