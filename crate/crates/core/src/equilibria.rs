//! Equilibrium points of the uncontrolled system.
//!
//! Boundary equilibria come from closed forms; the formal-free point needs
//! the positive root of a cubic; the interior (coexistence) point is found
//! by damped Newton iteration from a lattice of starting points.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{jacobian_unchecked, rates, Params, State};
use crate::poly::{eval_monic, solve3, solve_monic_cubic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumClass {
    /// `(0, 0, 0)`
    Trivial,
    /// `(K, 0, 0)`
    Boundary,
    /// `(0, 0, G0)`
    FirmFree,
    /// `(fbar, 0, g)`
    FormalFree,
    /// `(fbar, f, 0)`
    GovernmentFree,
    Coexistence,
}

impl EquilibriumClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EquilibriumClass::Trivial => "trivial",
            EquilibriumClass::Boundary => "boundary",
            EquilibriumClass::FirmFree => "firm-free",
            EquilibriumClass::FormalFree => "formal-free",
            EquilibriumClass::GovernmentFree => "government-free",
            EquilibriumClass::Coexistence => "coexistence",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub point: State,
    pub class: EquilibriumClass,
    pub feasible: bool,
    pub conditions: Vec<(String, bool)>,
    pub residual_norm: f64,
    pub note: Option<String>,
}

impl EquilibriumReport {
    fn new(p: &Params, point: State, class: EquilibriumClass, feasible: bool) -> Self {
        EquilibriumReport {
            point,
            class,
            feasible,
            conditions: Vec::new(),
            residual_norm: residual_norm(p, &point),
            note: None,
        }
    }

    fn condition(mut self, name: &str, holds: bool) -> Self {
        self.conditions.push((name.to_string(), holds));
        self
    }

    pub fn condition_value(&self, name: &str) -> Option<bool> {
        self.conditions.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// JSON shape of an equilibrium report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumRecord {
    pub point: [f64; 3],
    pub class: EquilibriumClass,
    pub feasible: bool,
    pub conditions: BTreeMap<String, bool>,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl From<&EquilibriumReport> for EquilibriumRecord {
    fn from(r: &EquilibriumReport) -> Self {
        EquilibriumRecord {
            point: r.point.to_array(),
            class: r.class,
            feasible: r.feasible,
            conditions: r.conditions.iter().cloned().collect(),
            residual: r.residual_norm,
            note: r.note.clone(),
        }
    }
}

impl Serialize for EquilibriumReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EquilibriumRecord::from(self).serialize(s)
    }
}

/// Max-norm of the vector field at `s`.
pub fn residual_norm(p: &Params, s: &State) -> f64 {
    rates(p, s).max_abs()
}

/// E0, E1, E2 and E4 with their feasibility flags.
pub fn closed_form_equilibria(p: &Params) -> Result<Vec<EquilibriumReport>> {
    p.validate()?;
    let e0 = EquilibriumReport::new(p, State::ZERO, EquilibriumClass::Trivial, true);
    let e1 = EquilibriumReport::new(p, State::new(p.k, 0.0, 0.0), EquilibriumClass::Boundary, true);

    let g0 = (p.d - p.mu) / p.delta;
    let feasible2 = p.d > p.mu;
    let mut e2 = EquilibriumReport::new(p, State::new(0.0, 0.0, g0), EquilibriumClass::FirmFree, feasible2)
        .condition("d_gt_mu", feasible2);
    if !feasible2 {
        e2.note = Some("d <= mu: the firm-free point reduces to the trivial point".into());
    }

    let e4 = if p.alpha == 0.0 {
        let mut e = EquilibriumReport::new(p, State::new(p.k, 0.0, 0.0), EquilibriumClass::GovernmentFree, false)
            .condition("alpha_nonzero", false)
            .condition("sigma_lt_alpha_K", false);
        e.note = Some("alpha zero".into());
        e
    } else {
        let fbar2 = p.sigma / p.alpha;
        let f2 = p.r * (p.alpha * p.k - p.sigma) / (p.alpha * (p.k * p.alpha + p.r * p.pi));
        let ok = p.sigma < p.alpha * p.k;
        let mut e = EquilibriumReport::new(p, State::new(fbar2, f2, 0.0), EquilibriumClass::GovernmentFree, ok)
            .condition("alpha_nonzero", true)
            .condition("sigma_lt_alpha_K", ok);
        if !ok {
            e.note = Some("sigma >= alpha K: collapses onto the boundary point".into());
        }
        e
    };
    Ok(vec![e0, e1, e2, e4])
}

/// Coefficients of the monic formal-free cubic in `fbar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl CubicCoefficients {
    pub fn eval(&self, x: f64) -> f64 {
        eval_monic(self.l1, self.l2, self.l3, x)
    }
}

/// Which form of the linear coefficient to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubicVariant {
    /// Leading term of `l2` is `a r delta`, as commonly printed.
    AsPrinted,
    /// Leading term of `l2` is `a^2 r delta`, obtained by eliminating `g`
    /// from the equilibrium conditions with `f = 0`.
    Consistent,
}

/// Cubic coefficients with `l2`'s leading term `a r delta`.
pub fn cubic_coefficients(p: &Params) -> Result<CubicCoefficients> {
    cubic_coefficients_variant(p, CubicVariant::AsPrinted)
}

pub fn cubic_coefficients_variant(p: &Params, variant: CubicVariant) -> Result<CubicCoefficients> {
    let rd = p.r * p.delta;
    if rd == 0.0 || !rd.is_finite() {
        return Err(Error::domain("r * delta must be nonzero"));
    }
    let lead = match variant {
        CubicVariant::AsPrinted => p.a * rd,
        CubicVariant::Consistent => p.a * p.a * rd,
    };
    Ok(CubicCoefficients {
        l1: (2.0 * p.a * rd - p.d * p.beta - p.k * rd) / rd,
        l2: (lead - p.a * (p.d * p.beta + 2.0 * p.k * rd) + p.beta * p.k * (p.d + p.l * p.beta - p.mu)) / rd,
        l3: -p.a * p.k * (p.a * rd + p.beta * p.mu - p.d * p.beta) / rd,
    })
}

/// Revenue level paired with an informal-profit root on the formal-free branch.
pub fn formal_free_revenue(p: &Params, fbar: f64) -> f64 {
    p.r / p.beta * (1.0 - fbar / p.k) * (p.a + fbar)
}

fn admissible_roots(p: &Params, c: &CubicCoefficients) -> Vec<f64> {
    let mut roots: Vec<f64> = solve_monic_cubic(c.l1, c.l2, c.l3)
        .real_roots()
        .into_iter()
        .filter(|&x| x > 0.0 && x < p.k && formal_free_revenue(p, x) > 0.0)
        .collect();
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    roots
}

/// All real roots of the consistent cubic, admissible or not.
pub fn formal_free_candidates(p: &Params) -> Result<Vec<State>> {
    if p.beta == 0.0 {
        return Ok(Vec::new());
    }
    let c = cubic_coefficients_variant(p, CubicVariant::Consistent)?;
    Ok(solve_monic_cubic(c.l1, c.l2, c.l3)
        .real_roots()
        .into_iter()
        .map(|x| State::new(x, 0.0, formal_free_revenue(p, x)))
        .collect())
}

/// Formal-free equilibria `(fbar1, 0, g1)`.
///
/// Roots are taken from the consistent cubic so that each reported point is
/// an equilibrium; the as-printed cubic is solved alongside and a
/// disagreement in the number of admissible roots is recorded as the
/// condition `printed_cubic_same_root_count`. When no root is admissible a
/// single infeasible report is returned whose point is the firm-free point
/// (if `d > mu`) or the origin.
pub fn solve_formal_free(p: &Params) -> Result<Vec<EquilibriumReport>> {
    p.validate()?;
    if p.beta <= 0.0 {
        return Err(Error::domain("formal-free equilibrium requires beta > 0"));
    }
    let consistent = cubic_coefficients_variant(p, CubicVariant::Consistent)?;
    let printed = cubic_coefficients(p)?;
    let roots = admissible_roots(p, &consistent);
    let same_count = admissible_roots(p, &printed).len() == roots.len();
    let sufficiency = p.a > p.k + p.d * p.beta / (p.r * p.delta);

    let decorate = |r: EquilibriumReport| {
        r.condition("a_gt_K_plus_d_beta_over_r_delta", sufficiency)
            .condition("printed_cubic_same_root_count", same_count)
    };

    if roots.is_empty() {
        let point = if p.d > p.mu { State::new(0.0, 0.0, (p.d - p.mu) / p.delta) } else { State::ZERO };
        let mut r = decorate(EquilibriumReport::new(p, point, EquilibriumClass::FormalFree, false))
            .condition("admissible_root", false);
        r.note = Some(if p.d > p.mu {
            "no admissible root: reduces to the firm-free point".into()
        } else {
            "no admissible root: reduces to the trivial point".into()
        });
        return Ok(vec![r]);
    }

    Ok(roots
        .into_iter()
        .map(|x| {
            let point = State::new(x, 0.0, formal_free_revenue(p, x));
            decorate(EquilibriumReport::new(p, point, EquilibriumClass::FormalFree, true))
                .condition("admissible_root", true)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoexistenceOptions {
    pub n_starts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Shuffles the order in which starts are processed.
    pub shuffle_seed: Option<u64>,
}

impl Default for CoexistenceOptions {
    fn default() -> Self {
        CoexistenceOptions { n_starts: 64, max_iterations: 100, tolerance: 1e-12, shuffle_seed: None }
    }
}

fn log_axis(hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let lo = hi * 1e-3;
    (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
}

/// Log-spaced starting lattice over `(0, K]^2 x (0, d/delta]`.
pub fn start_lattice(p: &Params, n_starts: usize) -> Vec<State> {
    if n_starts == 0 {
        return Vec::new();
    }
    let per_axis = (1..).find(|c: &usize| c.pow(3) >= n_starts).unwrap();
    let g_hi = if p.d > 0.0 { p.d / p.delta } else { p.k };
    let xs = log_axis(p.k, per_axis);
    let gs = log_axis(g_hi, per_axis);
    let mut full = Vec::with_capacity(per_axis.pow(3));
    for &a in &xs {
        for &b in &xs {
            for &c in &gs {
                full.push(State::new(a, b, c));
            }
        }
    }
    let total = full.len();
    (0..n_starts).map(|i| full[i * total / n_starts]).collect()
}

/// Damped Newton iteration; `None` when it fails to converge.
pub fn newton(p: &Params, start: State, max_iterations: usize, tolerance: f64) -> Option<State> {
    let mut x = start;
    let mut res = residual_norm(p, &x);
    for _ in 0..max_iterations {
        if res <= tolerance {
            return Some(x);
        }
        let fx = rates(p, &x);
        let step = solve3(&jacobian_unchecked(p, &x), fx.to_array())?;
        let step = State::from_array(step);
        let mut lambda = 1.0;
        let mut improved = None;
        for _ in 0..40 {
            let trial = x - step * lambda;
            if trial.is_finite() && (p.a + trial.fbar).abs() > 1e-12 {
                let r = residual_norm(p, &trial);
                if r < res {
                    improved = Some((trial, r));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match improved {
            Some((trial, r)) => {
                x = trial;
                res = r;
            }
            // Stagnated: accept only at the round-off floor.
            None => break,
        }
    }
    (res <= tolerance || res <= 1e-10 * (1.0 + x.max_abs())).then_some(x)
}

fn same_point(a: &State, b: &State, rel: f64) -> bool {
    a.distance(b) <= rel * (1.0 + a.max_abs().max(b.max_abs()))
}

/// Distinct Newton limits from the start lattice, sorted by component.
/// Points with a component below `-1e-8` are discarded.
pub fn newton_multistart(p: &Params, opts: &CoexistenceOptions) -> Result<Vec<State>> {
    p.validate()?;
    let mut starts = start_lattice(p, opts.n_starts);
    if let Some(seed) = opts.shuffle_seed {
        starts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut found: Vec<State> = starts
        .par_iter()
        .filter_map(|s| newton(p, *s, opts.max_iterations, opts.tolerance))
        .filter(|x| x.min_component() >= -1e-8)
        .collect();
    found.sort_by(|a, b| a.fbar.total_cmp(&b.fbar).then(a.f.total_cmp(&b.f)).then(a.g.total_cmp(&b.g)));
    let mut distinct: Vec<State> = Vec::new();
    for x in found {
        if !distinct.iter().any(|y| same_point(&x, y, 1e-6)) {
            distinct.push(x);
        }
    }
    Ok(distinct)
}

/// Strictly interior equilibria located by Newton multistart.
pub fn solve_coexistence(p: &Params, n_starts: usize) -> Result<Vec<EquilibriumReport>> {
    solve_coexistence_with(p, &CoexistenceOptions { n_starts, ..Default::default() })
}

pub fn solve_coexistence_with(p: &Params, opts: &CoexistenceOptions) -> Result<Vec<EquilibriumReport>> {
    Ok(newton_multistart(p, opts)?
        .into_iter()
        .filter(|x| x.min_component() > 1e-8)
        .filter(|x| residual_norm(p, x) <= 1e-9 * (1.0 + x.max_abs()))
        .map(|x| EquilibriumReport::new(p, x, EquilibriumClass::Coexistence, true))
        .collect())
}

/// Every equilibrium the toolkit can locate: closed forms, formal-free
/// roots (or their reduction) and coexistence points.
pub fn all_equilibria(p: &Params, n_starts: usize) -> Result<Vec<EquilibriumReport>> {
    let mut out = closed_form_equilibria(p)?;
    if p.beta > 0.0 {
        out.extend(solve_formal_free(p)?);
    }
    out.extend(solve_coexistence(p, n_starts)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn baseline_closed_forms() {
        let p = Params::baseline();
        let eq = closed_form_equilibria(&p).unwrap();
        assert_eq!(eq.len(), 4);
        assert_eq!(eq[2].point, State::new(0.0, 0.0, (0.5 - 0.2) / 0.05));
        assert_relative_eq!(eq[2].point.g, 6.0, max_relative = 1e-14);
        assert!(eq[2].feasible);
        assert_relative_eq!(eq[3].point.fbar, 20.0, max_relative = 1e-14);
        assert_relative_eq!(eq[3].point.f, 32.0, max_relative = 1e-14);
        assert!(eq[3].feasible);
        for e in &eq {
            assert!(e.residual_norm <= 1e-9 * (1.0 + e.point.max_abs()), "{e:?}");
        }
    }

    #[test]
    fn firm_free_infeasible_when_d_below_mu() {
        let mut p = Params::baseline();
        p.d = 0.1;
        let eq = closed_form_equilibria(&p).unwrap();
        assert!(!eq[2].feasible);
        assert_eq!(eq[2].condition_value("d_gt_mu"), Some(false));
    }

    #[test]
    fn alpha_zero_marks_government_free_infeasible() {
        let mut p = Params::baseline();
        p.alpha = 0.0;
        let e4 = &closed_form_equilibria(&p).unwrap()[3];
        assert!(!e4.feasible);
        assert_eq!(e4.note.as_deref(), Some("alpha zero"));
        assert_eq!(e4.condition_value("alpha_nonzero"), Some(false));
    }

    #[test]
    fn printed_cubic_coefficients_baseline() {
        // l1 = (2*50*1*0.05 - 0.5*0.6 - 100*1*0.05)/0.05 = (5 - 0.3 - 5)/0.05
        // l2 = (2.5 - 50*(0.3 + 10) + 60*(0.5 + 0.3 - 0.2))/0.05 = (2.5 - 515 + 36)/0.05
        // l3 = -5000*(2.5 + 0.12 - 0.3)/0.05
        let c = cubic_coefficients(&Params::baseline()).unwrap();
        assert_relative_eq!(c.l1, -6.0, max_relative = 1e-12);
        assert_relative_eq!(c.l2, -9530.0, max_relative = 1e-12);
        assert_relative_eq!(c.l3, -232000.0, max_relative = 1e-12);
    }

    #[test]
    fn consistent_cubic_differs_only_in_l2() {
        let p = Params::baseline();
        let a = cubic_coefficients(&p).unwrap();
        let b = cubic_coefficients_variant(&p, CubicVariant::Consistent).unwrap();
        assert_eq!(a.l1, b.l1);
        assert_eq!(a.l3, b.l3);
        // (2500*0.05 - 515 + 36)/0.05
        assert_relative_eq!(b.l2, -7080.0, max_relative = 1e-12);
    }

    #[test]
    fn baseline_has_no_admissible_formal_free_root() {
        let p = Params::baseline();
        let r = solve_formal_free(&p).unwrap();
        assert_eq!(r.len(), 1);
        assert!(!r[0].feasible);
        // reduced to the firm-free point since d > mu
        assert_relative_eq!(r[0].point.g, 6.0, max_relative = 1e-14);
    }

    #[test]
    fn formal_free_requires_beta() {
        let mut p = Params::baseline();
        p.beta = 0.0;
        assert!(solve_formal_free(&p).is_err());
    }

    #[test]
    fn start_lattice_sizes() {
        let p = Params::baseline();
        assert_eq!(start_lattice(&p, 64).len(), 64);
        assert_eq!(start_lattice(&p, 10).len(), 10);
        let l = start_lattice(&p, 64);
        assert!(l.iter().all(|s| s.fbar > 0.0 && s.fbar <= 100.0 && s.g > 0.0 && s.g <= 10.0 + 1e-12));
    }

    #[test]
    fn coexistence_baseline() {
        let p = Params::baseline();
        let pts = solve_coexistence(&p, 64).unwrap();
        assert_eq!(pts.len(), 1, "{pts:?}");
        let e = pts[0].point;
        assert!(e.min_component() > 1e-8);
        assert!(pts[0].residual_norm <= 1e-9);
        assert!((e.fbar - 23.4924).abs() < 1e-3 && (e.f - 28.3220).abs() < 1e-3);
    }

    #[test]
    fn report_json_shape() {
        let p = Params::baseline();
        let eq = closed_form_equilibria(&p).unwrap();
        let v = serde_json::to_value(&eq[2]).unwrap();
        assert_eq!(v["class"], "firm-free");
        assert_relative_eq!(v["point"][2].as_f64().unwrap(), 6.0, max_relative = 1e-14);
        assert_eq!(v["conditions"]["d_gt_mu"], true);
        assert!(v["residual"].is_number());
    }
}
