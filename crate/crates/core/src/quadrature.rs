//! Quadrature rules and finite-difference stencils on uniform grids.

use std::ops::{Add, Mul, Sub};

/// Values that can be combined linearly (scalars and 3-vectors).
pub trait Linear: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}

impl<T> Linear for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// Composite Simpson rule over samples on a uniform grid with spacing `h`.
///
/// An odd number of intervals is closed with Simpson's 3/8 rule on the last
/// three intervals. Two samples fall back to the trapezoid rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let intervals = values.len().saturating_sub(1);
    match intervals {
        0 => 0.0,
        1 => 0.5 * h * (values[0] + values[1]),
        _ if intervals.is_multiple_of(2) => simpson_even(values, h),
        3 => three_eighths(&values[..4], h),
        _ => {
            let split = intervals - 3;
            simpson_even(&values[..=split], h) + three_eighths(&values[split..], h)
        }
    }
}

fn simpson_even(values: &[f64], h: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n.is_multiple_of(2));
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n] + 4.0 * odd + 2.0 * even)
}

fn three_eighths(v: &[f64], h: f64) -> f64 {
    3.0 * h / 8.0 * (v[0] + 3.0 * v[1] + 3.0 * v[2] + v[3])
}

const GAUSS4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GAUSS4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_9,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_9,
];

/// Composite 4-point Gauss–Legendre over `[lo, hi]` with `panels` panels.
/// Never evaluates `f` at the interval ends.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    let panels = panels.max(1);
    let width = (hi - lo) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        let half = 0.5 * width;
        let panel: f64 = GAUSS4_NODES
            .iter()
            .zip(GAUSS4_WEIGHTS)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        total += half * panel;
    }
    total
}

/// First derivative: central differences inside, second-order one-sided at
/// the ends. Needs at least three samples.
pub fn first_derivative<T: Linear>(values: &[T], h: f64) -> Vec<T> {
    let n = values.len();
    assert!(n >= 3, "first_derivative needs at least three samples");
    let inv = 1.0 / (2.0 * h);
    let mut out = Vec::with_capacity(n);
    out.push((values[1] * 4.0 - values[0] * 3.0 - values[2]) * inv);
    for i in 1..n - 1 {
        out.push((values[i + 1] - values[i - 1]) * inv);
    }
    out.push((values[n - 1] * 3.0 - values[n - 2] * 4.0 + values[n - 3]) * inv);
    out
}

/// Second derivative: central differences inside, second-order one-sided at
/// the ends. Needs at least four samples.
pub fn second_derivative<T: Linear>(values: &[T], h: f64) -> Vec<T> {
    let n = values.len();
    assert!(n >= 4, "second_derivative needs at least four samples");
    let inv = 1.0 / (h * h);
    let mut out = Vec::with_capacity(n);
    out.push((values[0] * 2.0 - values[1] * 5.0 + values[2] * 4.0 - values[3]) * inv);
    for i in 1..n - 1 {
        out.push((values[i + 1] - values[i] * 2.0 + values[i - 1]) * inv);
    }
    out.push(
        (values[n - 1] * 2.0 - values[n - 2] * 5.0 + values[n - 3] * 4.0 - values[n - 4]) * inv,
    );
    out
}

/// Cubic Lagrange interpolation at the midpoint of interval `i` of a uniform
/// grid, using the two neighbours on each side where available.
pub fn midpoint_cubic<T: Linear>(values: &[T], i: usize) -> T {
    let n = values.len();
    assert!(i + 1 < n, "interval index out of range");
    if n < 4 {
        return (values[i] + values[i + 1]) * 0.5;
    }
    // Four consecutive nodes containing interval i, shifted inward at the ends.
    let start = i.saturating_sub(1).min(n - 4);
    let p = [
        values[start],
        values[start + 1],
        values[start + 2],
        values[start + 3],
    ];
    // Evaluation point relative to node `start`, in grid units.
    let x = (i - start) as f64 + 0.5;
    let l0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
    let l1 = x * (x - 2.0) * (x - 3.0) / 2.0;
    let l2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
    let l3 = x * (x - 1.0) * (x - 2.0) / 6.0;
    p[0] * l0 + p[1] * l1 + p[2] * l2 + p[3] * l3
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        for n in [2usize, 3, 4, 7, 10] {
            let v: Vec<f64> = grid(n).iter().map(|t| 4.0 * t * t * t - t + 2.0).collect();
            let got = simpson(&v, 1.0 / n as f64);
            assert!((got - 2.5).abs() < 1e-14, "n={n} got {got}");
        }
    }

    #[test]
    fn simpson_converges_fourth_order() {
        let err = |n: usize| {
            let v: Vec<f64> = grid(n).iter().map(|t| (3.0 * t).exp()).collect();
            (simpson(&v, 1.0 / n as f64) - ((3f64).exp() - 1.0) / 3.0).abs()
        };
        let ratio = err(20) / err(40);
        assert!((ratio - 16.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn gauss_legendre_polynomial_and_smooth() {
        let got = gauss_legendre(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 1);
        assert!((got - (32.0 - 8.0)).abs() < 1e-12);
        let got = gauss_legendre(f64::cos, 0.0, 1.0, 20);
        assert!((got - 1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let n = 10;
        let h = 1.0 / n as f64;
        let v: Vec<f64> = grid(n)
            .iter()
            .map(|t| 3.0 * t * t - 2.0 * t + 1.0)
            .collect();
        let d1 = first_derivative(&v, h);
        let d2 = second_derivative(&v, h);
        for (i, t) in grid(n).iter().enumerate() {
            assert!((d1[i] - (6.0 * t - 2.0)).abs() < 1e-12);
            assert!((d2[i] - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn midpoint_cubic_exact_on_cubics() {
        let n = 8;
        let f = |t: f64| t * t * t - 0.5 * t;
        let v: Vec<f64> = grid(n).iter().map(|&t| f(t)).collect();
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            assert!((midpoint_cubic(&v, i) - f(t)).abs() < 1e-14);
        }
    }
}
