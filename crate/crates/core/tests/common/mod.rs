#![allow(dead_code)]

use fiscalprey::{ControlParams, Params, State};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters with an admissible formal-free root near (91.34, 0, 9.65).
pub fn formal_free_fixture() -> Params {
    Params { beta: 1.0, l: 0.8, a: 20.0, d: 0.3, sigma: 2.0, ..Params::baseline() }
}

/// Parameters with a stable firm-free point at g0 = 8 and a decreasing
/// Lyapunov function on the box of radius g0/2.
pub fn firm_free_fixture() -> Params {
    Params { r: 0.1, sigma: 2.0, a: 10.0, d: 1.0, delta: 0.1, ..Params::baseline() }
}

pub fn baseline_start() -> State {
    State::new(10.0, 5.0, 2.0)
}

pub fn baseline_control() -> ControlParams {
    ControlParams::baseline()
}

/// A random valid parameter set with `sigma > 0`.
pub fn random_params(rng: &mut impl Rng) -> Params {
    let k = rng.gen_range(20.0..200.0);
    let m = rng.gen_range(0.0..1.0);
    let p = Params {
        r: rng.gen_range(0.2..2.0),
        k,
        pi: rng.gen_range(0.0..1.0),
        alpha: rng.gen_range(0.001..0.05),
        beta: rng.gen_range(0.1..2.0),
        a: rng.gen_range(0.2..1.0) * k,
        gamma: rng.gen_range(0.0..0.05),
        sigma: rng.gen_range(0.05..2.0),
        l: rng.gen_range(0.2..1.0),
        m,
        n: rng.gen_range(0.0..1.0),
        d: rng.gen_range(0.0..2.0),
        mu: rng.gen_range(0.05..1.0),
        delta: rng.gen_range(0.01..0.5),
    };
    p.validate().unwrap();
    p
}

/// Random parameters in the regime where the weighted total `fbar + f + g/l`
/// cannot gain from formal capture (`m - n <= l`).
pub fn random_bounded_params(rng: &mut impl Rng) -> Params {
    let mut p = random_params(rng);
    if p.m - p.n > p.l {
        p.n = p.m - p.l * rng.gen_range(0.0..1.0);
    }
    p
}

pub fn random_positive_state(rng: &mut impl Rng, p: &Params) -> State {
    State::new(
        rng.gen_range(1e-3..1.0) * p.k,
        rng.gen_range(1e-3..1.0) * p.k,
        rng.gen_range(1e-3..1.0) * (p.d / p.delta).max(1.0),
    )
}

pub fn relative_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
