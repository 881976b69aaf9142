//! Linear stability of the three equilibria via the real characteristic
//! function G(lambda) = f'(kappa) ∫ beta(a) e^{-lambda a} e^{-H(a)} da.
//!
//! G is strictly decreasing and continuous on (-mu_lower, ∞) with G -> 0 at
//! +∞, so the sign of G(0) - 1 decides whether a positive real root exists;
//! that real criterion is exactly what the classification uses.

use crate::error::{Error, Result};
use crate::kernel;
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
}

const ROOT_TOL: f64 = 1e-10;
const MARGINAL_TOL: f64 = 1e-12;

fn check_domain(spec: &ModelSpec, lambda: f64) -> Result<()> {
    let floor = -spec.mu.mu_lower();
    if lambda <= floor {
        return Err(Error::LambdaOutOfDomain { lambda, floor });
    }
    Ok(())
}

/// G evaluated at the chosen equilibrium (0, kappa1 or kappa2).
pub fn characteristic_value(spec: &ModelSpec, which: usize, lambda: f64) -> Result<f64> {
    check_domain(spec, lambda)?;
    let slope = spec.f.derivative(spec.equilibrium_level(which));
    Ok(slope * kernel::laplace_gamma(&spec.mu, &spec.beta, lambda))
}

/// Unique positive root of slope * kernel(lambda) = 1 for a slope > 1,
/// bracketed by doubling and resolved by bisection to 1e-10.
fn root_for_slope(spec: &ModelSpec, slope: f64) -> Result<f64> {
    if slope <= 1.0 {
        return Err(Error::NotBistable(format!(
            "characteristic root needs slope > 1, got {slope}"
        )));
    }
    let g = |lam: f64| slope * kernel::laplace_gamma(&spec.mu, &spec.beta, lam);
    let mut hi = 1.0;
    while g(hi) >= 1.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::NotBistable("characteristic function never drops below 1".into()));
        }
    }
    let (mut lo, mut hi) = (0.0, hi);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    // uniqueness rests on strict decrease; spot-check the slope at the root
    let h = 1e-6;
    debug_assert!(g(root + h) < g(root - h));
    Ok(root)
}

/// The positive characteristic root at the unstable equilibrium kappa1.
pub fn unstable_root(spec: &ModelSpec) -> Result<f64> {
    root_for_slope(spec, spec.f.derivative(spec.kappa1()))
}

/// Characteristic root for an explicitly supplied multiplier; exposes the
/// comparative static "larger slope, faster growth".
pub fn root_for_multiplier(spec: &ModelSpec, slope: f64) -> Result<f64> {
    root_for_slope(spec, slope)
}

/// Stable iff G(0) = f'(kappa) < 1; refuses to classify within 1e-12 of the
/// marginal case.
pub fn classify_stability(spec: &ModelSpec, which: usize) -> Result<Stability> {
    let g0 = characteristic_value(spec, which, 0.0)?;
    if (g0 - 1.0).abs() < MARGINAL_TOL {
        return Err(Error::MarginalStability);
    }
    Ok(if g0 < 1.0 { Stability::Stable } else { Stability::Unstable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_spec;

    #[test]
    fn normalization_pins_g_at_zero() {
        let spec = reference_spec();
        // kernel(0) = 1, so G(0) is just the slope at each equilibrium
        assert!((characteristic_value(&spec, 1, 0.0).unwrap() - 4.0 / 3.0).abs() < 1e-12);
        assert!((characteristic_value(&spec, 2, 0.0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(characteristic_value(&spec, 0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn kernel_decays_at_large_lambda() {
        let spec = reference_spec();
        assert!(characteristic_value(&spec, 1, 1e3).unwrap() < 1e-6);
    }

    #[test]
    fn domain_is_enforced() {
        let spec = reference_spec();
        assert!(matches!(
            characteristic_value(&spec, 1, -0.5),
            Err(Error::LambdaOutOfDomain { .. })
        ));
    }

    #[test]
    fn g_is_strictly_decreasing() {
        let spec = reference_spec();
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let lam = -0.45 + i as f64 * 0.1;
            let g = characteristic_value(&spec, 1, lam).unwrap();
            assert!(g < prev, "G must decrease, lam={lam}");
            prev = g;
        }
    }

    #[test]
    fn unstable_root_solves_the_equation() {
        let spec = reference_spec();
        let root = unstable_root(&spec).unwrap();
        assert!(root > 0.0 && root < 1.0);
        let g = characteristic_value(&spec, 1, root).unwrap();
        assert!((g - 1.0).abs() <= 1e-10, "G(root) = {g}");
    }

    #[test]
    fn larger_multiplier_moves_root_right() {
        let spec = reference_spec();
        let slope = spec.f.derivative(spec.kappa1());
        let r1 = root_for_multiplier(&spec, slope).unwrap();
        let r2 = root_for_multiplier(&spec, 2.0 * slope).unwrap();
        assert!(r2 > r1);
    }

    #[test]
    fn classification_of_the_three_equilibria() {
        let spec = reference_spec();
        assert_eq!(classify_stability(&spec, 0).unwrap(), Stability::Stable);
        assert_eq!(classify_stability(&spec, 1).unwrap(), Stability::Unstable);
        assert_eq!(classify_stability(&spec, 2).unwrap(), Stability::Stable);
    }
}
