//! Closed-form roots of monic cubics `x^3 + a x^2 + b x + c`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const fn real(re: f64) -> Self {
        Complex { re, im: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CubicRoots {
    /// Ascending real roots (repeated roots appear repeatedly).
    Real([f64; 3]),
    /// One real root and the pair `re ± i im` with `im > 0`.
    Mixed { real: f64, re: f64, im: f64 },
}

impl CubicRoots {
    pub fn real_roots(&self) -> Vec<f64> {
        match *self {
            CubicRoots::Real(r) => r.to_vec(),
            CubicRoots::Mixed { real, .. } => vec![real],
        }
    }

    pub fn all(&self) -> [Complex; 3] {
        match *self {
            CubicRoots::Real(r) => r.map(Complex::real),
            CubicRoots::Mixed { real, re, im } => [Complex::real(real), Complex { re, im }, Complex { re, im: -im }],
        }
    }
}

#[inline]
pub fn eval_monic(a: f64, b: f64, c: f64, x: f64) -> f64 {
    ((x + a) * x + b) * x + c
}

fn polish(a: f64, b: f64, c: f64, x: f64) -> f64 {
    let fx = eval_monic(a, b, c, x);
    let dfx = (3.0 * x + 2.0 * a) * x + b;
    if dfx == 0.0 || !dfx.is_finite() {
        return x;
    }
    let y = x - fx / dfx;
    if eval_monic(a, b, c, y).abs() <= fx.abs() {
        y
    } else {
        x
    }
}

/// Roots by the trigonometric method (three real roots) or Cardano's
/// formula (one real root), each real root refined by one Newton step.
pub fn solve_monic_cubic(a: f64, b: f64, c: f64) -> CubicRoots {
    let q = (a * a - 3.0 * b) / 9.0;
    let r = (2.0 * a * a * a - 9.0 * a * b + 27.0 * c) / 54.0;
    let q3 = q * q * q;
    let shift = a / 3.0;

    if r * r < q3 {
        let theta = (r / q3.sqrt()).clamp(-1.0, 1.0).acos();
        let scale = -2.0 * q.sqrt();
        let mut roots = [
            scale * (theta / 3.0).cos() - shift,
            scale * ((theta + 2.0 * PI) / 3.0).cos() - shift,
            scale * ((theta - 2.0 * PI) / 3.0).cos() - shift,
        ]
        .map(|x| polish(a, b, c, x));
        roots.sort_by(f64::total_cmp);
        return CubicRoots::Real(roots);
    }

    let big_a = -r.signum() * (r.abs() + (r * r - q3).sqrt()).cbrt();
    let big_b = if big_a == 0.0 { 0.0 } else { q / big_a };
    let x1 = polish(a, b, c, big_a + big_b - shift);

    // Deflate to x^2 + p x + s using the polished real root.
    let p = a + x1;
    let s = if x1.abs() > 1e-8 * (1.0 + c.abs()).sqrt() { -c / x1 } else { b + p * x1 };
    let disc = p * p - 4.0 * s;
    if disc < 0.0 {
        CubicRoots::Mixed { real: x1, re: -p / 2.0, im: (-disc).sqrt() / 2.0 }
    } else {
        let sq = disc.sqrt();
        // Stable quadratic roots.
        let t = -0.5 * (p + p.signum() * sq);
        let (y1, y2) = if t == 0.0 { (0.0, 0.0) } else { (t, s / t) };
        let mut roots = [x1, polish(a, b, c, y1), polish(a, b, c, y2)];
        roots.sort_by(f64::total_cmp);
        CubicRoots::Real(roots)
    }
}

/// Coefficients `(a1, a2, a3)` of `det(lambda I - J) = lambda^3 + a1 lambda^2 + a2 lambda + a3`.
pub fn characteristic_coefficients(j: &crate::model::Matrix3) -> (f64, f64, f64) {
    let trace = j[0][0] + j[1][1] + j[2][2];
    let minors = j[0][0] * j[1][1] - j[0][1] * j[1][0] + j[0][0] * j[2][2] - j[0][2] * j[2][0] + j[1][1] * j[2][2]
        - j[1][2] * j[2][1];
    (-trace, minors, -det3(j))
}

pub fn det3(j: &crate::model::Matrix3) -> f64 {
    j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1]) - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0])
}

/// Solves `J x = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular matrix.
pub fn solve3(j: &crate::model::Matrix3, rhs: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&j[i]);
        m[i][3] = rhs[i];
    }
    let scale = j.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (x, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= factor * p;
            }
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][3] - tail) / m[i][i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn from_roots(r: [f64; 3]) -> (f64, f64, f64) {
        (-(r[0] + r[1] + r[2]), r[0] * r[1] + r[0] * r[2] + r[1] * r[2], -r[0] * r[1] * r[2])
    }

    #[test]
    fn three_distinct_real_roots() {
        let (a, b, c) = from_roots([-2.0, 1.0, 3.0]);
        match solve_monic_cubic(a, b, c) {
            CubicRoots::Real(r) => {
                for (x, y) in r.iter().zip([-2.0, 1.0, 3.0]) {
                    assert!((x - y).abs() < 1e-12, "{r:?}");
                }
            }
            other => panic!("expected three real roots, got {other:?}"),
        }
    }

    #[test]
    fn complex_pair() {
        // (x - 1)(x^2 + 2x + 5): roots 1, -1 ± 2i
        let roots = solve_monic_cubic(1.0, 3.0, -5.0);
        match roots {
            CubicRoots::Mixed { real, re, im } => {
                assert!((real - 1.0).abs() < 1e-12);
                assert!((re + 1.0).abs() < 1e-12);
                assert!((im - 2.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn triple_root() {
        let roots = solve_monic_cubic(-3.0, 3.0, -1.0).real_roots();
        assert!(roots.iter().all(|x| (x - 1.0).abs() < 1e-5), "{roots:?}");
    }

    #[test]
    fn pure_cube() {
        let roots = solve_monic_cubic(0.0, 0.0, -8.0);
        assert!((roots.real_roots()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn linear_solve() {
        let j = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]];
        let x = solve3(&j, [3.0, 5.0, 5.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(solve3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]], [1.0; 3]).is_none());
    }

    proptest! {
        #[test]
        fn real_roots_recovered(r0 in -50.0f64..50.0, r1 in -50.0f64..50.0, r2 in -50.0f64..50.0) {
            let (a, b, c) = from_roots([r0, r1, r2]);
            let scale = 1.0f64.max(c.abs()).max(b.abs()).max(a.abs());
            for x in solve_monic_cubic(a, b, c).real_roots() {
                prop_assert!(eval_monic(a, b, c, x).abs() <= 1e-9 * scale * 1e3);
            }
        }

        #[test]
        fn vieta_holds(a in -20.0f64..20.0, b in -20.0f64..20.0, c in -20.0f64..20.0) {
            let z = solve_monic_cubic(a, b, c).all();
            let sum_re: f64 = z.iter().map(|w| w.re).sum();
            prop_assert!((sum_re + a).abs() < 1e-8 * (1.0 + a.abs()));
        }
    }
}
