//! Local and global stability analysis.
//!
//! Local verdicts come from the characteristic cubic of the Jacobian and are
//! reported next to the closed-form sufficient conditions for each
//! equilibrium class with an agreement flag; neither side is trusted over
//! the other. Global stability of the firm-free point is checked by scanning
//! the derivative of the Lyapunov function
//! `V(fbar, f, g) = fbar + f + c1 ((g - g0) - g0 ln(g / g0))` on a grid.
//!
//! Symbols `S, I, P` in some derivations of the Lyapunov bound stand for
//! `fbar, f, g`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegrationOptions};
use crate::equilibria::{residual_norm, EquilibriumClass, EquilibriumReport};
use crate::error::{Error, Result};
use crate::model::{jacobian_unchecked, rates, revenue_per_capita, Params, State};
use crate::poly::{characteristic_coefficients, solve_monic_cubic, Complex};

/// Real parts within this band of zero are treated as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spectral {
    Stable,
    Unstable,
    Marginal,
}

/// What the closed-form conditions claim about a point when they hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Claim {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub equilibrium: State,
    pub class: EquilibriumClass,
    pub eigenvalues: [Complex; 3],
    pub spectral_verdict: Spectral,
    /// `(a1, a2, a3)` of `lambda^3 + a1 lambda^2 + a2 lambda + a3`.
    pub characteristic: [f64; 3],
    /// `(a1 > 0, a3 > 0, a1 a2 > a3)`
    pub routh_hurwitz: [bool; 3],
    pub analytic_conditions: Vec<(String, bool)>,
    /// The claim made when every condition holds; `None` for coexistence.
    pub claim: Option<Claim>,
    pub agreement: bool,
}

impl StabilityVerdict {
    pub fn routh_hurwitz_stable(&self) -> bool {
        self.routh_hurwitz.iter().all(|&b| b)
    }

    pub fn conditions_hold(&self) -> bool {
        !self.analytic_conditions.is_empty() && self.analytic_conditions.iter().all(|(_, b)| *b)
    }

    pub fn max_real_part(&self) -> f64 {
        self.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn classify_spectrum(eigenvalues: &[Complex; 3]) -> Spectral {
    let max_re = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re < -MARGINAL_BAND {
        Spectral::Stable
    } else if max_re > MARGINAL_BAND {
        Spectral::Unstable
    } else {
        Spectral::Marginal
    }
}

/// Routh-Hurwitz conditions on a monic cubic.
pub fn routh_hurwitz(a1: f64, a2: f64, a3: f64) -> [bool; 3] {
    [a1 > 0.0, a3 > 0.0, a1 * a2 > a3]
}

fn class_conditions(p: &Params, class: EquilibriumClass, e: &State) -> (Vec<(String, bool)>, Option<Claim>) {
    let named = |n: &str, b: bool| (n.to_string(), b);
    match class {
        EquilibriumClass::Trivial => (vec![named("unstable_trivial", true)], Some(Claim::Unstable)),
        EquilibriumClass::Boundary => (
            vec![
                named("sigma_gt_K_alpha", p.sigma > p.k * p.alpha),
                named("mu_gt_K_beta_over_a_plus_K", p.mu > p.k * p.beta / (p.a + p.k)),
            ],
            Some(Claim::Stable),
        ),
        EquilibriumClass::FirmFree => (
            vec![named("d_gt_mu_plus_a_r_delta_over_beta", p.beta > 0.0 && p.d > p.mu + p.a * p.r * p.delta / p.beta)],
            Some(Claim::Stable),
        ),
        EquilibriumClass::FormalFree => {
            let (f1, g1) = (e.fbar, e.g);
            let sat = p.a + f1;
            let lhs = sat * sat * (p.mu * p.k + (2.0 * p.r + p.d) * f1)
                + g1 * p.k * (p.a * (p.beta + 2.0 * p.a * p.delta) + 2.0 * p.delta * f1 * (2.0 * p.a + f1));
            let rhs = sat * p.k * ((p.d + p.r) * sat + p.l * p.beta * f1);
            (
                vec![
                    named("sigma_plus_gamma_G1_gt_alpha_F1", p.sigma + p.gamma * g1 > p.alpha * f1),
                    named("long_inequality", lhs > rhs),
                ],
                Some(Claim::Stable),
            )
        }
        EquilibriumClass::GovernmentFree => {
            let ak = p.alpha * p.k;
            let lower = p.alpha * p.r * p.pi * p.k / (2.0 * p.r * p.pi + ak);
            let f2a = p.a * p.alpha * (p.d * p.sigma + (p.mu - p.d) * ak)
                + p.sigma * (ak * p.mu + p.d * p.sigma - ak * (p.d + p.l * p.beta));
            let f2b = p.alpha * (p.a * p.alpha + p.sigma) * ((p.m - p.n) * p.gamma * p.k - p.d * p.pi);
            let below = f2b != 0.0 && e.f < f2a / f2b;
            (
                vec![named("sigma_window", lower < p.sigma && p.sigma < ak), named("F2_below_F2a_over_F2b", below)],
                Some(Claim::Stable),
            )
        }
        EquilibriumClass::Coexistence => (Vec::new(), None),
    }
}

/// Spectral verdict and closed-form conditions at an equilibrium.
pub fn local_stability(p: &Params, e: &EquilibriumReport) -> Result<StabilityVerdict> {
    p.validate()?;
    if !e.point.is_finite() {
        return Err(Error::domain("equilibrium is not finite"));
    }
    let residual = residual_norm(p, &e.point);
    if residual > 1e-6 {
        return Err(Error::domain(format!("point is not an equilibrium (residual {residual:e})")));
    }
    let j = jacobian_unchecked(p, &e.point);
    let (a1, a2, a3) = characteristic_coefficients(&j);
    let eigenvalues = solve_monic_cubic(a1, a2, a3).all();
    let spectral_verdict = classify_spectrum(&eigenvalues);
    let (analytic_conditions, claim) = class_conditions(p, e.class, &e.point);
    let holds = analytic_conditions.iter().all(|(_, b)| *b);
    let agreement = match (claim, holds) {
        (Some(Claim::Stable), true) => spectral_verdict == Spectral::Stable,
        (Some(Claim::Unstable), true) => spectral_verdict != Spectral::Stable,
        _ => true,
    };
    Ok(StabilityVerdict {
        equilibrium: e.point,
        class: e.class,
        eigenvalues,
        spectral_verdict,
        characteristic: [a1, a2, a3],
        routh_hurwitz: routh_hurwitz(a1, a2, a3),
        analytic_conditions,
        claim,
        agreement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub returns: bool,
    /// Largest Euclidean distance from the equilibrium at `t_end`.
    pub final_distance: f64,
    pub final_distances: Vec<f64>,
}

pub const PROBE_DIRECTIONS: usize = 8;

fn unit_vector(rng: &mut impl Rng) -> State {
    loop {
        let v = State::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let norm = v.euclidean_distance(&State::ZERO);
        if norm > 1e-3 && norm <= 1.0 {
            return v * (1.0 / norm);
        }
    }
}

/// Integrates from eight random perturbations of `e` (clamped to the
/// nonnegative octant) and checks that each ends within a tenth of the
/// perturbation size.
pub fn perturbation_probe(p: &Params, e: &State, magnitude: f64, t_end: f64, seed: u64) -> Result<ProbeResult> {
    p.validate()?;
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::domain("perturbation magnitude must be finite and >= 0"));
    }
    let residual = residual_norm(p, e);
    if residual > 1e-9 * (1.0 + e.max_abs()) {
        return Err(Error::domain(format!("probe point is not an equilibrium (residual {residual:e})")));
    }
    if magnitude == 0.0 {
        let final_distances = vec![0.0; PROBE_DIRECTIONS];
        return Ok(ProbeResult { returns: true, final_distance: 0.0, final_distances });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<State> =
        (0..PROBE_DIRECTIONS).map(|_| (*e + unit_vector(&mut rng) * magnitude).map(|v| v.max(0.0))).collect();
    let opts = IntegrationOptions::default();
    let final_distances = starts
        .into_iter()
        .map(|s0| Ok(integrate(p, s0, t_end, &opts)?.last().euclidean_distance(e)))
        .collect::<Result<Vec<f64>>>()?;
    let limit = magnitude / 10.0;
    let returns = final_distances.iter().all(|&d| d < limit);
    let final_distance = final_distances.iter().copied().fold(0.0, f64::max);
    Ok(ProbeResult { returns, final_distance, final_distances })
}

/// Weights of the Lyapunov function around the firm-free point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSetup {
    pub g0: f64,
    /// `min{1/(m-n), 1/l}`
    pub c1: f64,
}

impl LyapunovSetup {
    pub fn new(p: &Params) -> Result<Self> {
        p.validate()?;
        if p.m <= p.n {
            return Err(Error::TheoremInapplicable("Lyapunov weights require m > n".into()));
        }
        if p.d <= p.mu {
            return Err(Error::TheoremInapplicable("firm-free point infeasible (d <= mu)".into()));
        }
        Ok(LyapunovSetup { g0: (p.d - p.mu) / p.delta, c1: (1.0 / (p.m - p.n)).min(1.0 / p.l) })
    }

    /// `V(s)`; the revenue integral is taken in closed form.
    pub fn value(&self, s: &State) -> f64 {
        s.fbar + s.f + self.c1 * ((s.g - self.g0) - self.g0 * (s.g / self.g0).ln())
    }

    /// `dV/dt` along the vector field, by the chain rule.
    pub fn derivative(&self, p: &Params, s: &State) -> f64 {
        let v = rates(p, s);
        v.fbar + v.f + self.c1 * (s.g - self.g0) * revenue_per_capita(p, s)
    }

    /// Upper bound on `dV/dt` obtained by discarding the sign-definite terms.
    pub fn derivative_bound(&self, p: &Params, s: &State) -> f64 {
        let mix = (s.fbar + p.pi * s.f) / p.k;
        mix * (self.c1 * p.d * (self.g0 - s.g) - p.r * s.fbar) + (p.r * s.fbar - p.sigma * s.f)
            - self.c1 * p.delta * (s.g - self.g0).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub state: State,
    pub derivative: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovScanReport {
    pub g0: f64,
    pub c1: f64,
    pub box_radius: f64,
    pub resolution: usize,
    pub points: usize,
    /// Grid points where `dV/dt > 1e-10`.
    pub violations: usize,
    /// Largest `dV/dt` on the grid.
    pub max_violation: f64,
    /// Grid points where the bound falls below the exact derivative by more than `1e-10`.
    pub bound_failures: usize,
    pub bound_dominates: bool,
    pub max_bound: f64,
    /// True when the bound itself is `<= 1e-10` everywhere, i.e. the bound
    /// alone certifies the decrease on this box.
    pub theorem_condition_holds: bool,
}

pub const LYAPUNOV_TOLERANCE: f64 = 1e-10;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Samples of `dV/dt` and its bound on `[0,R]^2 x [g0-R, g0+R]`, clipped to
/// `g >= 0`, in `fbar`-major order.
pub fn lyapunov_grid(p: &Params, box_radius: f64, resolution: usize) -> Result<Vec<LyapunovSample>> {
    let setup = LyapunovSetup::new(p)?;
    if !(box_radius > 0.0 && box_radius.is_finite()) || resolution == 0 {
        return Err(Error::domain("box radius must be > 0 and resolution >= 1"));
    }
    let xs = linspace(0.0, box_radius, resolution);
    let gs = linspace((setup.g0 - box_radius).max(0.0), setup.g0 + box_radius, resolution);
    Ok(xs
        .par_iter()
        .flat_map_iter(|&fbar| {
            let gs = &gs;
            let xs = &xs;
            xs.iter().flat_map(move |&f| {
                gs.iter().map(move |&g| {
                    let s = State::new(fbar, f, g);
                    LyapunovSample {
                        state: s,
                        derivative: setup.derivative(p, &s),
                        bound: setup.derivative_bound(p, &s),
                    }
                })
            })
        })
        .collect())
}

pub fn lyapunov_scan(p: &Params, box_radius: f64, resolution: usize) -> Result<LyapunovScanReport> {
    let setup = LyapunovSetup::new(p)?;
    let grid = lyapunov_grid(p, box_radius, resolution)?;
    let violations = grid.iter().filter(|s| s.derivative > LYAPUNOV_TOLERANCE).count();
    let bound_failures = grid.iter().filter(|s| s.derivative > s.bound + LYAPUNOV_TOLERANCE).count();
    let max_violation = grid.iter().map(|s| s.derivative).fold(f64::NEG_INFINITY, f64::max);
    let max_bound = grid.iter().map(|s| s.bound).fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovScanReport {
        g0: setup.g0,
        c1: setup.c1,
        box_radius,
        resolution,
        points: grid.len(),
        violations,
        max_violation,
        bound_failures,
        bound_dominates: bound_failures == 0,
        max_bound,
        theorem_condition_holds: max_bound <= LYAPUNOV_TOLERANCE,
    })
}

/// Writes `fbar,f,g,dV2dt` rows.
pub fn write_lyapunov_csv<W: Write>(grid: &[LyapunovSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "fbar,f,g,dV2dt")?;
    for s in grid {
        writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", s.state.fbar, s.state.f, s.state.g, s.derivative)?;
    }
    Ok(())
}

/// Sufficient-condition predicates for global stability of the coexistence point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalPredicates {
    pub c_star: f64,
    pub h1_at_zero: f64,
    pub h2_at_zero: f64,
    pub h1_nonneg: bool,
    pub h2_nonneg: bool,
    /// `K gamma n > d pi + K gamma n`, evaluated literally. It can never
    /// hold for nonnegative `d pi`.
    pub condition2_as_printed: bool,
}

/// `C*`, `H1(0)` and `H2(0)`. The revenue coordinate of `e_star` stands in
/// for the undefined `P*b` of `H1`.
pub fn global_predicates(p: &Params, e_star: &State) -> Result<GlobalPredicates> {
    p.validate()?;
    if !e_star.is_finite() {
        return Err(Error::domain("coexistence point is not finite"));
    }
    let denom = p.alpha * (p.k * p.gamma * (p.m - p.n) - p.d * p.pi);
    if denom == 0.0 {
        return Err(Error::PredicateUnavailable("alpha (K gamma (m - n) - d pi) vanishes".into()));
    }
    let c_star = p.k * p.gamma / denom;
    let sat = p.a + e_star.fbar;
    let h1 = p.r / p.k + c_star * p.d / (2.0 * p.k) - p.beta * (2.0 * e_star.g + p.a * c_star) / (2.0 * p.a * sat);
    let h2 = p.delta + c_star * p.d / (2.0 * p.k) - p.a * p.beta * p.l * c_star / (2.0 * p.a * sat);
    let kgn = p.k * p.gamma * p.n;
    Ok(GlobalPredicates {
        c_star,
        h1_at_zero: h1,
        h2_at_zero: h2,
        h1_nonneg: h1 >= 0.0,
        h2_nonneg: h2 >= 0.0,
        condition2_as_printed: kgn > p.d * p.pi + kgn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::closed_form_equilibria;
    use approx::assert_relative_eq;

    #[test]
    fn origin_is_unstable() {
        let p = Params::baseline();
        let eq = closed_form_equilibria(&p).unwrap();
        let v = local_stability(&p, &eq[0]).unwrap();
        let mut re: Vec<f64> = v.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert_relative_eq!(re[0], -0.4, epsilon = 1e-12);
        assert_relative_eq!(re[1], 0.3, epsilon = 1e-12);
        assert_relative_eq!(re[2], 1.0, epsilon = 1e-12);
        assert_eq!(v.spectral_verdict, Spectral::Unstable);
        assert!(v.agreement);
    }

    #[test]
    fn capacity_point_unstable_at_baseline() {
        let p = Params::baseline();
        let eq = closed_form_equilibria(&p).unwrap();
        let v = local_stability(&p, &eq[1]).unwrap();
        assert!(!v.conditions_hold());
        assert_eq!(v.spectral_verdict, Spectral::Unstable);
        assert!(v.eigenvalues.iter().any(|z| (z.re - 1.6).abs() < 1e-10));
    }

    #[test]
    fn non_equilibrium_rejected() {
        let p = Params::baseline();
        let mut e = closed_form_equilibria(&p).unwrap().remove(0);
        e.point = State::new(10.0, 5.0, 2.0);
        assert!(local_stability(&p, &e).is_err());
    }

    #[test]
    fn routh_hurwitz_simple_cases() {
        // (x+1)(x+2)(x+3) = x^3 + 6x^2 + 11x + 6
        assert_eq!(routh_hurwitz(6.0, 11.0, 6.0), [true, true, true]);
        // (x-1)(x+2)(x+3) = x^3 + 4x^2 + x - 6
        assert!(!routh_hurwitz(4.0, 1.0, -6.0).iter().all(|b| *b));
    }

    #[test]
    fn marginal_band() {
        let z = [Complex::real(-1.0), Complex { re: 1e-12, im: 1.0 }, Complex { re: 1e-12, im: -1.0 }];
        assert_eq!(classify_spectrum(&z), Spectral::Marginal);
    }

    #[test]
    fn zero_magnitude_probe() {
        let p = Params::baseline();
        let r = perturbation_probe(&p, &State::ZERO, 0.0, 5.0, 1).unwrap();
        assert_eq!(r.final_distance, 0.0);
        assert_eq!(r.final_distances.len(), PROBE_DIRECTIONS);
    }

    #[test]
    fn origin_repels() {
        let p = Params::baseline();
        let r = perturbation_probe(&p, &State::ZERO, 1e-3, 20.0, 7).unwrap();
        assert!(!r.returns);
    }

    #[test]
    fn lyapunov_needs_m_gt_n() {
        let mut p = Params::baseline();
        p.m = 0.1;
        assert!(matches!(lyapunov_scan(&p, 1.0, 5), Err(Error::TheoremInapplicable(_))));
    }

    #[test]
    fn lyapunov_vanishes_at_firm_free_point() {
        let p = Params::baseline();
        let s = LyapunovSetup::new(&p).unwrap();
        let e2 = State::new(0.0, 0.0, s.g0);
        assert_eq!(s.derivative(&p, &e2), 0.0);
        assert_eq!(s.value(&e2), 0.0);
    }

    #[test]
    fn printed_condition_two_never_holds() {
        let p = Params::baseline();
        let g = global_predicates(&p, &State::new(23.49, 28.32, 6.98)).unwrap();
        assert!(!g.condition2_as_printed);
    }

    #[test]
    fn c_star_flips_with_m_minus_n() {
        let mut p = Params::baseline();
        p.d = 0.0;
        let e = State::new(1.0, 1.0, 1.0);
        let a = global_predicates(&p, &e).unwrap().c_star;
        std::mem::swap(&mut p.m, &mut p.n);
        let b = global_predicates(&p, &e).unwrap().c_star;
        assert_relative_eq!(a, -b, max_relative = 1e-14);
    }

    #[test]
    fn c_star_unavailable_on_vanishing_denominator() {
        let mut p = Params::baseline();
        p.alpha = 0.0;
        assert!(matches!(global_predicates(&p, &State::new(1.0, 1.0, 1.0)), Err(Error::PredicateUnavailable(_))));
    }
}
