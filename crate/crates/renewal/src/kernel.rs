//! Exact integrals of the renewal kernel gamma(a) = beta(a) e^{-H(a)} and of
//! the survival weight e^{-H(a)}, where H is the cumulative hazard.
//!
//! Both weights are piecewise exponentials (step beta, piecewise-constant mu),
//! so every integral here is assembled from the closed-form cell moments in
//! [`crate::quad`]. The product-integration weights integrate the kernel
//! exactly against the linear interpolant of the birth trajectory; this keeps
//! constant trajectories exactly stationary, which the equilibrium tests rely
//! on.

use crate::model::{BirthRate, MortalityRate};
use crate::quad::{exp_linear, exp_moment0};

/// Which weight multiplies the exponential survival factor.
#[derive(Clone, Copy)]
pub enum KernelWeight<'a> {
    /// beta(a) e^{-H(a)}, the full renewal kernel.
    Gamma(&'a BirthRate),
    /// beta restricted to the interior pieces (tail excluded) times e^{-H(a)}.
    Interior(&'a BirthRate),
    /// e^{-H(a)} alone.
    Survival,
}

impl KernelWeight<'_> {
    fn value_at(&self, a: f64) -> f64 {
        match self {
            Self::Gamma(b) => b.value_at(a),
            Self::Interior(b) => b.interior_value_at(a),
            Self::Survival => 1.0,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Gamma(b) | Self::Interior(b) => b.breakpoints(),
            Self::Survival => Vec::new(),
        }
    }

    /// Beyond this age the weight vanishes identically (finite only for a
    /// compactly supported or interior-truncated beta).
    fn support_end(&self) -> f64 {
        match self {
            Self::Gamma(b) => b.a_star(),
            Self::Interior(b) => match b.tail() {
                Some((a0, _)) => a0,
                None => b.a_star(),
            },
            Self::Survival => f64::INFINITY,
        }
    }
}

fn merged_breaks(mu: &MortalityRate, w: &KernelWeight, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = mu
        .breakpoints()
        .iter()
        .copied()
        .chain(w.breakpoints())
        .filter(|&p| p > lo && p < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

/// ∫_lo^hi w(a) e^{-H(a) - lambda a} da, exact. An infinite upper limit is
/// allowed when either the weight has bounded support or
/// `lambda > -mu_tail`; otherwise the integral diverges and +inf is returned.
pub fn int_weighted_exp(
    mu: &MortalityRate,
    w: KernelWeight,
    lambda: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    debug_assert!(lo >= 0.0 && hi >= lo);
    let cut = hi.min(w.support_end());
    if cut <= lo {
        return 0.0;
    }
    let mut total = 0.0;
    if cut.is_finite() {
        let pts = merged_breaks(mu, &w, lo, cut);
        for s in pts.windows(2) {
            let (s0, s1) = (s[0], s[1]);
            let mid = 0.5 * (s0 + s1);
            let v = w.value_at(mid);
            if v == 0.0 {
                continue;
            }
            let m = mu.rate_at(mid);
            total += v * (-(mu.hazard(s0) + lambda * s0)).exp() * exp_moment0(m + lambda, s1 - s0);
        }
        return total;
    }
    // unbounded support: integrate up to the last breakpoint, then the
    // constant tail in closed form
    let last_break = mu
        .breakpoints()
        .iter()
        .copied()
        .chain(w.breakpoints())
        .fold(lo, f64::max);
    if last_break > lo {
        total += int_weighted_exp(mu, w, lambda, lo, last_break);
    }
    let start = last_break.max(lo);
    let m = mu.rate_at(start) + lambda;
    if m <= 0.0 {
        return f64::INFINITY;
    }
    total += w.value_at(start) * (-(mu.hazard(start) + lambda * start)).exp() / m;
    total
}

/// ∫_lo^hi beta(a) e^{-H(a)} da.
pub fn int_gamma(mu: &MortalityRate, beta: &BirthRate, lo: f64, hi: f64) -> f64 {
    int_weighted_exp(mu, KernelWeight::Gamma(beta), 0.0, lo, hi)
}

/// ∫_lo^hi e^{-H(a)} da.
pub fn int_survival(mu: &MortalityRate, lo: f64, hi: f64) -> f64 {
    int_weighted_exp(mu, KernelWeight::Survival, 0.0, lo, hi)
}

/// The Laplace transform ∫_0^∞ beta(a) e^{-lambda a} e^{-H(a)} da.
pub fn laplace_gamma(mu: &MortalityRate, beta: &BirthRate, lambda: f64) -> f64 {
    int_weighted_exp(mu, KernelWeight::Gamma(beta), lambda, 0.0, f64::INFINITY)
}

/// Product-integration weights for the memory term of the renewal equation.
///
/// With grid t_n = n delta, the convolution ∫_0^{cutoff} w(a) b(t_n - a) da
/// evaluated on the linear interpolant of b becomes
/// `sum_j p[j] * b_{n-j} + q[j] * b_{n-j-1}`; `p[0]` multiplies the unknown
/// b_n and makes the step implicit. Cells are split exactly at the beta and
/// mu breakpoints, so the weights are exact and sum to the kernel integral.
#[derive(Debug, Clone)]
pub struct ProductWeights {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub delta: f64,
}

impl ProductWeights {
    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.p.iter().chain(&self.q).sum()
    }
}

pub fn product_weights(
    mu: &MortalityRate,
    w: KernelWeight,
    delta: f64,
    cutoff: f64,
) -> ProductWeights {
    debug_assert!(delta > 0.0 && cutoff.is_finite());
    let cutoff = cutoff.min(w.support_end());
    let n = (cutoff / delta).ceil() as usize;
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for j in 0..n {
        let lo = j as f64 * delta;
        let hi = ((j + 1) as f64 * delta).min(cutoff);
        for s in merged_breaks(mu, &w, lo, hi).windows(2) {
            let (s0, s1) = (s[0], s[1]);
            let mid = 0.5 * (s0 + s1);
            let v = w.value_at(mid);
            if v == 0.0 {
                continue;
            }
            let m = mu.rate_at(mid);
            let scale = v * (-mu.hazard(s0)).exp();
            let (f0, f1) = ((s0 - lo) / delta, (s1 - lo) / delta);
            // hat centred on the left node decays across the cell
            p[j] += scale * exp_linear(m, s1 - s0, 1.0 - f0, 1.0 - f1);
            q[j] += scale * exp_linear(m, s1 - s0, f0, f1);
        }
    }
    ProductWeights { p, q, delta }
}
