//! Closed-form moments of exponential weights.
//!
//! Every integral in this crate reduces to integrating a linear function
//! against `exp(-m x)` on a bounded cell, so these two moments are the only
//! quadrature primitives needed. Both are exact up to rounding; the series
//! branch keeps them accurate when `m * l` underflows the difference formulas.

/// ∫_0^l e^{-m x} dx, valid for any sign of `m`.
pub fn exp_moment0(m: f64, l: f64) -> f64 {
    debug_assert!(l >= 0.0);
    let ml = m * l;
    if ml.abs() < 1e-6 {
        l * (1.0 - ml / 2.0 + ml * ml / 6.0 - ml * ml * ml / 24.0)
    } else {
        (1.0 - (-ml).exp()) / m
    }
}

/// ∫_0^l x e^{-m x} dx, valid for any sign of `m`.
pub fn exp_moment1(m: f64, l: f64) -> f64 {
    debug_assert!(l >= 0.0);
    let ml = m * l;
    if ml.abs() < 1e-4 {
        l * l * (0.5 - ml / 3.0 + ml * ml / 8.0 - ml * ml * ml / 30.0)
    } else {
        (1.0 - (-ml).exp() * (1.0 + ml)) / (m * m)
    }
}

/// ∫_0^l (w0 + (w1 - w0) x / l) e^{-m x} dx, the linear-times-exponential cell
/// integral. `l = 0` cells contribute nothing.
pub fn exp_linear(m: f64, l: f64, w0: f64, w1: f64) -> f64 {
    if l <= 0.0 {
        return 0.0;
    }
    w0 * exp_moment0(m, l) + (w1 - w0) / l * exp_moment1(m, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 0 { 2.0 } else { 4.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn moments_match_quadrature() {
        for &m in &[-2.0, -0.3, 0.0, 1e-9, 0.5, 3.0] {
            for &l in &[0.01, 0.5, 2.0] {
                let q0 = simpson(|x| (-m * x).exp(), 0.0, l, 2000);
                let q1 = simpson(|x| x * (-m * x).exp(), 0.0, l, 2000);
                assert!((exp_moment0(m, l) - q0).abs() < 1e-11 * (1.0 + q0.abs()), "m0 m={m} l={l}");
                assert!((exp_moment1(m, l) - q1).abs() < 1e-11 * (1.0 + q1.abs()), "m1 m={m} l={l}");
            }
        }
    }

    #[test]
    fn series_branch_matches_difference_formula() {
        // just inside the series cutoff, the truncated series agrees with the
        // difference formula up to the latter's cancellation error (~eps/|m|)
        for &m in &[9.9e-7f64, 5e-7, -9.9e-7] {
            let series = exp_moment0(m, 1.0);
            let exact = (1.0 - (-m).exp()) / m;
            assert!((series - exact).abs() < 1e-9);
        }
        for &m in &[9.9e-5f64, -9.9e-5] {
            let series = exp_moment1(m, 1.0);
            let exact = (1.0 - (-m).exp() * (1.0 + m)) / (m * m);
            assert!((series - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_cell_integral() {
        // ∫_0^2 (1 + x/2) e^{-x} dx = 1 - e^{-2} + (1 - 3 e^{-2})/2
        let exact = simpson(|x| (1.0 + 0.5 * x) * (-x).exp(), 0.0, 2.0, 4000);
        assert!((exp_linear(1.0, 2.0, 1.0, 2.0) - exact).abs() < 1e-12);
        assert_eq!(exp_linear(1.0, 0.0, 1.0, 2.0), 0.0);
    }
}
