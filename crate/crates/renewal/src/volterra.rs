//! Nonlinear Volterra renewal solver for the birth flux b(t).
//!
//! b satisfies b(t) = f(F(t) + ∫_0^t gamma(a) b(t-a) da) where
//! gamma(a) = beta(a) e^{-H(a)} and F carries the initial age distribution:
//! F(t) = ∫_0^∞ beta(s+t) e^{-(H(s+t)-H(s))} u0(s) ds. The memory convolution
//! uses the exact product-integration weights from [`crate::kernel`]; F is
//! evaluated in closed form per initial-profile family. The implicit node
//! value is resolved by fixed-point iteration with a freeze rule: when one
//! update moves less than `FP_TOL`, the pre-update iterate is kept, so exact
//! equilibria stay bit-for-bit constant instead of accumulating rounding
//! drift that the unstable equilibrium would amplify.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelWeight, ProductWeights};
use crate::model::{BirthRate, ModelSpec, MortalityRate};
use crate::quad::exp_linear;

pub const FP_TOL: f64 = 1e-12;
pub const MAX_FP_ITER: usize = 100;
pub const HISTORY_TOL: f64 = 1e-8;

/// Tolerance for the b = f(B) identity at step delta.
pub fn identity_tol(delta: f64) -> f64 {
    10.0 * FP_TOL + 10.0 * delta * delta
}

/// Half-width of the decision band around kappa1 for fate classification.
pub fn fate_tol(spec: &ModelSpec) -> f64 {
    0.05 * spec.kappa1()
}

/// Shape of the initial age distribution u0.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// Step density: value on each disjoint ordered `[lo, hi)` interval.
    Step(Vec<(f64, f64, f64)>),
    /// c e^{-H(a)}; c = kappa_i gives the equilibrium densities exactly.
    ScaledSurvival(f64),
    /// Piecewise-linear samples on a uniform grid starting at age 0; zero
    /// beyond the last node.
    Sampled { step: f64, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    profile: Profile,
}

impl InitialDistribution {
    pub fn zero() -> Self {
        Self { profile: Profile::ScaledSurvival(0.0) }
    }

    pub fn step(pieces: Vec<(f64, f64, f64)>) -> Result<Self> {
        let mut prev = 0.0f64;
        for &(lo, hi, v) in &pieces {
            if v < 0.0 {
                return Err(Error::NegativeDensity);
            }
            if !(lo >= prev && hi > lo) {
                return Err(Error::GridMisaligned("step pieces must be ordered and disjoint".into()));
            }
            prev = hi;
        }
        Ok(Self { profile: Profile::Step(pieces) })
    }

    /// u0(a) = c e^{-H(a)}.
    pub fn scaled_survival(c: f64) -> Result<Self> {
        if c < 0.0 {
            return Err(Error::NegativeDensity);
        }
        Ok(Self { profile: Profile::ScaledSurvival(c) })
    }

    pub fn sampled(step: f64, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::NegativeDensity);
        }
        if !(step > 0.0) || values.len() < 2 {
            return Err(Error::GridMisaligned("sampled profile needs step > 0 and >= 2 nodes".into()));
        }
        Ok(Self { profile: Profile::Sampled { step, values } })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Pointwise value; the mortality is needed for the survival-shaped kind.
    pub fn value_at(&self, mu: &MortalityRate, a: f64) -> f64 {
        if a < 0.0 {
            return 0.0;
        }
        match &self.profile {
            Profile::Step(pieces) => pieces
                .iter()
                .find(|&&(lo, hi, _)| a >= lo && a < hi)
                .map_or(0.0, |&(_, _, v)| v),
            Profile::ScaledSurvival(c) => c * (-mu.hazard(a)).exp(),
            Profile::Sampled { step, values } => {
                let end = step * (values.len() - 1) as f64;
                if a >= end {
                    return 0.0;
                }
                let i = (a / step).floor() as usize;
                let frac = a / step - i as f64;
                values[i] * (1.0 - frac) + values[i + 1] * frac
            }
        }
    }

    /// Age beyond which the density vanishes (+inf for the survival shape).
    pub fn support_end(&self) -> f64 {
        match &self.profile {
            Profile::Step(pieces) => pieces.last().map_or(0.0, |&(_, hi, _)| hi),
            Profile::ScaledSurvival(c) => {
                if *c == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Profile::Sampled { step, values } => step * (values.len() - 1) as f64,
        }
    }

    /// Exact ∫_0^∞ u0.
    pub fn l1_norm(&self, mu: &MortalityRate) -> f64 {
        match &self.profile {
            Profile::Step(pieces) => pieces.iter().map(|&(lo, hi, v)| v * (hi - lo)).sum(),
            Profile::ScaledSurvival(c) => c * kernel::int_survival(mu, 0.0, f64::INFINITY),
            Profile::Sampled { step, values } => {
                step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[values.len() - 1]))
            }
        }
    }

    /// The linearly scaled profile lambda * u0.
    pub fn scale(&self, lambda: f64) -> Self {
        let profile = match &self.profile {
            Profile::Step(p) => Profile::Step(p.iter().map(|&(lo, hi, v)| (lo, hi, v * lambda)).collect()),
            Profile::ScaledSurvival(c) => Profile::ScaledSurvival(c * lambda),
            Profile::Sampled { step, values } => Profile::Sampled {
                step: *step,
                values: values.iter().map(|v| v * lambda).collect(),
            },
        };
        Self { profile }
    }

    /// Ages at which the profile changes slope or value.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Profile::Step(pieces) => {
                pieces.iter().flat_map(|&(lo, hi, _)| [lo, hi]).collect()
            }
            Profile::ScaledSurvival(_) => Vec::new(),
            Profile::Sampled { step, values } => {
                (0..values.len()).map(|i| i as f64 * step).collect()
            }
        }
    }
}

/// ∫_0^∞ w(s+t) e^{-(H(s+t)-H(s))} u0(s) ds, the transported initial-data
/// integral, exact for all profile kinds. `weight_beta = None` means w = 1
/// (used by the total-population and old-age functionals), `Some(beta)` gives
/// the renewal forcing term F(t).
pub fn transported_integral(
    mu: &MortalityRate,
    weight_beta: Option<&BirthRate>,
    u0: &InitialDistribution,
    t: f64,
) -> f64 {
    debug_assert!(t >= 0.0);
    if let Profile::ScaledSurvival(c) = u0.profile {
        // c e^{-H(s)} collapses the integrand to c w(a) e^{-H(a)} on [t, ∞)
        let w = match weight_beta {
            Some(beta) => KernelWeight::Gamma(beta),
            None => KernelWeight::Survival,
        };
        return c * kernel::int_weighted_exp(mu, w, 0.0, t, f64::INFINITY);
    }
    let mut s_end = u0.support_end();
    if let Some(beta) = weight_beta {
        if !beta.is_eventually_constant() {
            s_end = s_end.min(beta.a_star() - t);
        }
    }
    if s_end <= 0.0 {
        return 0.0;
    }
    // integrand is (piecewise linear u0) * exp(piecewise linear exponent);
    // split at every node of either factor
    let mut pts: Vec<f64> = u0
        .breakpoints()
        .into_iter()
        .chain(mu.breakpoints().iter().copied())
        .chain(mu.breakpoints().iter().map(|&p| p - t))
        .chain(
            weight_beta
                .map(|b| b.breakpoints())
                .unwrap_or_default()
                .into_iter()
                .map(|p| p - t),
        )
        .filter(|&p| p > 0.0 && p < s_end)
        .collect();
    pts.push(0.0);
    pts.push(s_end);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let mut total = 0.0;
    for s in pts.windows(2) {
        let (s0, s1) = (s[0], s[1]);
        let mid = 0.5 * (s0 + s1);
        let wv = match weight_beta {
            Some(beta) => beta.value_at(mid + t),
            None => 1.0,
        };
        if wv == 0.0 {
            continue;
        }
        let (v0, v1) = match &u0.profile {
            Profile::Step(_) => {
                let v = u0.value_at(mu, mid);
                (v, v)
            }
            _ => (u0.value_at(mu, s0), u0.value_at(mu, s1)),
        };
        if v0 == 0.0 && v1 == 0.0 {
            continue;
        }
        let slope = mu.rate_at(mid + t) - mu.rate_at(mid);
        let g0 = mu.hazard(s0 + t) - mu.hazard(s0);
        total += wv * (-g0).exp() * exp_linear(slope, s1 - s0, v0, v1);
    }
    total
}

/// A birth trajectory on a uniform grid starting at `t0` (negative when a
/// history segment is included).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub delta: f64,
    pub t0: f64,
    pub b: Vec<f64>,
    /// The integral argument B(t) with b = f(B), when the solver tracked it.
    pub big_b: Option<Vec<f64>>,
    /// Largest fixed-point iteration count over all steps.
    pub max_iterations: usize,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.t0 + self.delta * (self.b.len() - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.b.len()).map(move |i| self.t0 + i as f64 * self.delta)
    }

    /// Linear interpolation; grid nodes are returned exactly.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let x = (t - self.t0) / self.delta;
        if x < -1e-9 || t > self.horizon() + 1e-9 * self.delta {
            return Err(Error::BeyondHorizon(t));
        }
        let i = (x.floor().max(0.0) as usize).min(self.b.len() - 1);
        let frac = (x - i as f64).clamp(0.0, 1.0);
        if i + 1 >= self.b.len() || frac == 0.0 {
            return Ok(self.b[i]);
        }
        Ok(self.b[i] * (1.0 - frac) + self.b[i + 1] * frac)
    }

    /// The final `frac` portion of the values (at least one node).
    pub fn trailing(&self, frac: f64) -> &[f64] {
        let n = self.b.len();
        let k = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        &self.b[n - k..]
    }

    pub fn trailing_min_max(&self, frac: f64) -> (f64, f64) {
        let w = self.trailing(frac);
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }
}

/// A sampled history of b on [-(len-1) delta, 0]; the renewal-semiflow state.
#[derive(Debug, Clone)]
pub struct HistoryFn {
    pub delta: f64,
    /// Values in increasing time order; the last entry is b(0).
    pub values: Vec<f64>,
}

impl HistoryFn {
    pub fn constant(delta: f64, span: f64, value: f64) -> Result<Self> {
        if value < 0.0 {
            return Err(Error::NegativeDensity);
        }
        let n = (span / delta).ceil() as usize + 1;
        Ok(Self { delta, values: vec![value; n] })
    }

    pub fn span(&self) -> f64 {
        self.delta * (self.values.len() - 1) as f64
    }

    /// |phi(0) - f(∫_0^{a*} gamma(a) phi(-a) da)|, the jump the continued
    /// solution would have at t = 0.
    pub fn compatibility_residual(&self, spec: &ModelSpec) -> Result<f64> {
        let a_star = spec.beta.a_star();
        if !a_star.is_finite() {
            return Err(Error::RequiresCompactSupport);
        }
        if self.span() + 1e-12 < a_star {
            return Err(Error::GridMisaligned(format!(
                "history span {} shorter than a* = {a_star}",
                self.span()
            )));
        }
        let w = kernel::product_weights(&spec.mu, KernelWeight::Gamma(&spec.beta), self.delta, a_star);
        let last = self.values.len() - 1;
        let mut mem = 0.0;
        for j in 0..w.len() {
            mem += w.p[j] * self.values[last - j] + w.q[j] * self.values[last - j - 1];
        }
        Ok((self.values[last] - spec.f.eval(mem)).abs())
    }
}

pub(crate) fn check_delta(spec: &ModelSpec, delta: f64) -> Result<()> {
    let delta_max = spec.delta_max();
    if !(delta > 0.0) || delta > delta_max {
        return Err(Error::StepTooLarge { delta, delta_max });
    }
    Ok(())
}

/// Fixed-point solve of x = f(known + p0 x) seeded from the previous node.
/// Returns the pre-update iterate once an update moves <= FP_TOL, so a seed
/// already at the root is returned unchanged.
pub(crate) fn implicit_node(
    f: &crate::model::BirthFunction,
    known: f64,
    p0: f64,
    seed: f64,
) -> Result<(f64, usize)> {
    let mut x = seed;
    for k in 0..MAX_FP_ITER {
        let next = f.eval(known + p0 * x);
        if (next - x).abs() <= FP_TOL {
            return Ok((x, k));
        }
        x = next;
    }
    Err(Error::FixedPointDiverged(MAX_FP_ITER))
}

pub(crate) fn memory_cutoff(spec: &ModelSpec, horizon: f64, delta: f64) -> f64 {
    let a_star = spec.beta.a_star();
    if a_star.is_finite() {
        a_star
    } else {
        horizon + delta
    }
}

/// Core march shared by the two unknown choices (b or B) and the forcing
/// sources (initial distribution or history buffer).
fn march(
    spec: &ModelSpec,
    weights: &ProductWeights,
    forcing: impl Fn(usize) -> f64,
    buffer: &mut Vec<f64>,
    big_buffer: Option<&mut Vec<f64>>,
    n_steps: usize,
    offset: usize,
) -> Result<usize> {
    let mut max_iter = 0;
    let mut big = big_buffer;
    for n in 1..=n_steps {
        let idx = offset + n;
        let mut known = forcing(n);
        let j_max = weights.len().min(idx);
        if j_max > 0 {
            known += weights.q[0] * buffer[idx - 1];
            for j in 1..j_max {
                known += weights.p[j] * buffer[idx - j] + weights.q[j] * buffer[idx - j - 1];
            }
        }
        let seed = buffer[idx - 1];
        let p0 = if j_max > 0 { weights.p[0] } else { 0.0 };
        let (b_n, iters) = implicit_node(&spec.f, known, p0, seed)?;
        max_iter = max_iter.max(iters);
        buffer.push(b_n);
        if let Some(bb) = big.as_deref_mut() {
            bb.push(known + p0 * b_n);
        }
        debug_assert_eq!(buffer.len(), idx + 1);
    }
    Ok(max_iter)
}

/// Solves the renewal equation from an initial age distribution on
/// {0, delta, ..., >= t_end}.
pub fn solve_b(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    t_end: f64,
    delta: f64,
) -> Result<Trajectory> {
    check_delta(spec, delta)?;
    if !(t_end >= delta) {
        return Err(Error::GridMisaligned("horizon must be at least one step".into()));
    }
    let n_steps = (t_end / delta).ceil() as usize;
    let cutoff = memory_cutoff(spec, t_end, delta);
    let weights = kernel::product_weights(&spec.mu, KernelWeight::Gamma(&spec.beta), delta, cutoff);

    // F(t_n) vanishes once the compact reproductive window is outrun
    let f_support = match spec.beta.tail() {
        Some(_) => f64::INFINITY,
        None => spec.beta.a_star(),
    };
    let forcing: Vec<f64> = (0..=n_steps)
        .map(|n| {
            let t = n as f64 * delta;
            if t >= f_support {
                0.0
            } else {
                transported_integral(&spec.mu, Some(&spec.beta), u0, t)
            }
        })
        .collect();

    let mut b = Vec::with_capacity(n_steps + 1);
    let mut big = Vec::with_capacity(n_steps + 1);
    b.push(spec.f.eval(forcing[0]));
    big.push(forcing[0]);
    let max_iterations = march(spec, &weights, |n| forcing[n], &mut b, Some(&mut big), n_steps, 0)?;
    Ok(Trajectory { delta, t0: 0.0, b, big_b: Some(big), max_iterations })
}

/// Solves the integral-argument form: the unknown is B(t) with
/// B(t) = F(t) + ∫_0^t gamma(a) f(B(t-a)) da, an independent discretization
/// of the same dynamics; the returned trajectory stores B and b = f(B).
pub fn solve_big_b(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    t_end: f64,
    delta: f64,
) -> Result<Trajectory> {
    check_delta(spec, delta)?;
    let n_steps = (t_end / delta).ceil() as usize;
    let cutoff = memory_cutoff(spec, t_end, delta);
    let weights = kernel::product_weights(&spec.mu, KernelWeight::Gamma(&spec.beta), delta, cutoff);
    let mut big = vec![transported_integral(&spec.mu, Some(&spec.beta), u0, 0.0)];
    let mut max_iterations = 0;
    for n in 1..=n_steps {
        let t = n as f64 * delta;
        let mut known = transported_integral(&spec.mu, Some(&spec.beta), u0, t);
        let j_max = weights.len().min(n);
        known += weights.q[0] * spec.f.eval(big[n - 1]);
        for j in 1..j_max {
            known += weights.p[j] * spec.f.eval(big[n - j]) + weights.q[j] * spec.f.eval(big[n - j - 1]);
        }
        // unknown is B_n: x = known + p0 f(x)
        let p0 = weights.p[0];
        let mut x = big[n - 1];
        let mut converged = false;
        for k in 0..MAX_FP_ITER {
            let next = known + p0 * spec.f.eval(x);
            if (next - x).abs() <= FP_TOL {
                max_iterations = max_iterations.max(k);
                converged = true;
                break;
            }
            x = next;
        }
        if !converged {
            return Err(Error::FixedPointDiverged(MAX_FP_ITER));
        }
        big.push(x);
    }
    let b = big.iter().map(|&x| spec.f.eval(x)).collect();
    Ok(Trajectory { delta, t0: 0.0, b, big_b: Some(big), max_iterations })
}

/// Continues a history segment forward; the trajectory covers
/// [-span(history), t_end]. Requires a compactly supported birth rate and a
/// history compatible with the dynamics (no jump at t = 0).
pub fn solve_from_history(
    spec: &ModelSpec,
    history: &HistoryFn,
    t_end: f64,
    delta: f64,
) -> Result<Trajectory> {
    check_delta(spec, delta)?;
    if (history.delta - delta).abs() > 1e-12 * delta {
        return Err(Error::GridMisaligned("history step must match the solver step".into()));
    }
    let residual = history.compatibility_residual(spec)?;
    if residual > HISTORY_TOL {
        return Err(Error::IncompatibleHistory { residual, tolerance: HISTORY_TOL });
    }
    let a_star = spec.beta.a_star();
    let weights = kernel::product_weights(&spec.mu, KernelWeight::Gamma(&spec.beta), delta, a_star);
    let n_steps = (t_end / delta).ceil() as usize;
    let offset = history.values.len() - 1;
    let mut b = history.values.clone();
    b.reserve(n_steps);
    let max_iterations = march(spec, &weights, |_| 0.0, &mut b, None, n_steps, offset)?;
    Ok(Trajectory {
        delta,
        t0: -(offset as f64) * delta,
        b,
        big_b: None,
        max_iterations,
    })
}

/// Successive approximations started from the zero function: each pass maps
/// the previous grid trajectory through the full right-hand side (explicit in
/// the old iterate). Iterates increase monotonically toward the solution and
/// serve as an independent oracle for the implicit march.
pub fn picard_iterates(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    t_end: f64,
    delta: f64,
    passes: usize,
) -> Result<Vec<Vec<f64>>> {
    check_delta(spec, delta)?;
    let n_steps = (t_end / delta).ceil() as usize;
    let cutoff = memory_cutoff(spec, t_end, delta);
    let weights = kernel::product_weights(&spec.mu, KernelWeight::Gamma(&spec.beta), delta, cutoff);
    let forcing: Vec<f64> = (0..=n_steps)
        .map(|n| transported_integral(&spec.mu, Some(&spec.beta), u0, n as f64 * delta))
        .collect();
    let mut iterates = vec![vec![0.0; n_steps + 1]];
    for _ in 0..passes {
        let prev = iterates.last().unwrap();
        let mut next = Vec::with_capacity(n_steps + 1);
        for n in 0..=n_steps {
            let mut arg = forcing[n];
            for j in 0..weights.len().min(n) {
                arg += weights.p[j] * prev[n - j] + weights.q[j] * prev[n - j - 1];
            }
            next.push(spec.f.eval(arg));
        }
        iterates.push(next);
    }
    Ok(iterates)
}

/// Ultimate-boundedness report for a trajectory that tracked B.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub c1: f64,
    pub c2: f64,
    pub u0_norm: f64,
    pub max_big_b: f64,
    pub bound_holds: bool,
    pub offending_t: Option<f64>,
    pub trailing_min: f64,
    pub trailing_max: f64,
    /// trailing max of b lies in {0} ∪ [kappa1, kappa2] within fate_tol
    pub limsup_in_range: bool,
    /// trailing min of b lies in [0, kappa1] ∪ {kappa2} within fate_tol
    pub liminf_in_range: bool,
}

pub fn l1_bound_check(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    traj: &Trajectory,
) -> Result<BoundReport> {
    let big = traj
        .big_b
        .as_ref()
        .ok_or_else(|| Error::SpecShapeMismatch("trajectory does not carry B values".into()))?;
    let (rho, m) = spec.subdiagonal_constants();
    let c1 = spec.f.eval(m) / (1.0 - rho);
    let c2 = spec.beta.beta_upper() / (1.0 - rho);
    let u0_norm = u0.l1_norm(&spec.mu);
    let bound = c1 + c2 * u0_norm;
    let mut max_big_b = f64::NEG_INFINITY;
    let mut offending_t = None;
    for (i, &v) in big.iter().enumerate() {
        max_big_b = max_big_b.max(v);
        if v > bound && offending_t.is_none() {
            offending_t = Some(traj.t0 + i as f64 * traj.delta);
        }
    }
    let (trailing_min, trailing_max) = traj.trailing_min_max(0.25);
    let tol = fate_tol(spec);
    let (k1, k2) = (spec.kappa1(), spec.kappa2());
    let limsup_in_range =
        trailing_max <= tol || (trailing_max >= k1 - tol && trailing_max <= k2 + tol);
    let liminf_in_range =
        (trailing_min >= -tol && trailing_min <= k1 + tol) || (trailing_min - k2).abs() <= tol;
    Ok(BoundReport {
        c1,
        c2,
        u0_norm,
        max_big_b,
        bound_holds: offending_t.is_none(),
        offending_t,
        trailing_min,
        trailing_max,
        limsup_in_range,
        liminf_in_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_spec;

    #[test]
    fn zero_data_stays_zero() {
        let spec = reference_spec();
        let traj = solve_b(&spec, &InitialDistribution::zero(), 20.0, spec.default_delta()).unwrap();
        assert!(traj.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibria_are_exactly_stationary() {
        let spec = reference_spec();
        let delta = spec.default_delta();
        for (c, k) in [(1.0, 1.0), (2.0, 2.0)] {
            let u0 = InitialDistribution::scaled_survival(c).unwrap();
            let traj = solve_b(&spec, &u0, 100.0, delta).unwrap();
            for &v in &traj.b {
                assert!((v - k).abs() <= 10.0 * FP_TOL, "drift at equilibrium {k}: {v}");
            }
        }
    }

    #[test]
    fn transported_integral_closed_forms() {
        let spec = reference_spec();
        // equilibrium data: F(t) = kappa ∫_t^∞ gamma = kappa (1 - ∫_0^t gamma)
        let u0 = InitialDistribution::scaled_survival(1.0).unwrap();
        for &t in &[0.0, 0.7, 2.0, 3.5] {
            let expect = 1.0 - kernel::int_gamma(&spec.mu, &spec.beta, 0.0, t);
            let got = transported_integral(&spec.mu, Some(&spec.beta), &u0, t);
            assert!((got - expect).abs() < 1e-13, "t={t}");
        }
        // step data: constant mu makes the transport weight e^{-mu t}, so
        // F(0.5) = c e^{-0.25} * |{s in [0,3] : s + 0.5 in [1,3]}| = 2 c e^{-0.25}
        let u0 = InitialDistribution::step(vec![(0.0, 3.0, 1.0)]).unwrap();
        let c = spec.beta.pieces()[0].2;
        let direct = 2.0 * c * (-0.25f64).exp();
        let got = transported_integral(&spec.mu, Some(&spec.beta), &u0, 0.5);
        assert!((got - direct).abs() < 1e-13, "got {got}, want {direct}");
    }

    #[test]
    fn compact_forcing_vanishes_after_a_star() {
        let spec = reference_spec();
        let u0 = InitialDistribution::step(vec![(0.0, 2.0, 5.0)]).unwrap();
        assert_eq!(transported_integral(&spec.mu, Some(&spec.beta), &u0, 3.0), 0.0);
        assert!(transported_integral(&spec.mu, Some(&spec.beta), &u0, 2.9) > 0.0);
    }

    #[test]
    fn big_b_identity_between_solvers() {
        let spec = reference_spec();
        let delta = spec.default_delta();
        let u0 = InitialDistribution::step(vec![(0.0, 3.0, 1.2)]).unwrap();
        let tb = solve_b(&spec, &u0, 20.0, delta).unwrap();
        let tbig = solve_big_b(&spec, &u0, 20.0, delta).unwrap();
        let tol = identity_tol(delta);
        for (bv, bigv) in tb.b.iter().zip(tbig.big_b.as_ref().unwrap()) {
            assert!((bv - spec.f.eval(*bigv)).abs() <= tol);
        }
    }

    #[test]
    fn history_continuation_matches_long_run() {
        let spec = reference_spec();
        let delta = 3.0 / 64.0; // divides a* so the restart grid aligns
        let u0 = InitialDistribution::step(vec![(0.0, 3.0, 2.5)]).unwrap();
        let long = solve_b(&spec, &u0, 20.0, delta).unwrap();
        // restart from the window [10 - a*, 10]
        let n10 = (10.0 / delta).round() as usize;
        let n_hist = (3.0 / delta).round() as usize;
        let history = HistoryFn {
            delta,
            values: long.b[n10 - n_hist..=n10].to_vec(),
        };
        let cont = solve_from_history(&spec, &history, 10.0, delta).unwrap();
        for i in 0..=(10.0 / delta) as usize {
            let a = long.b[n10 + i];
            let c = cont.value_at(i as f64 * delta).unwrap();
            assert!((a - c).abs() < 1e-9, "restart mismatch at i={i}: {a} vs {c}");
        }
    }

    #[test]
    fn incompatible_history_is_rejected() {
        let spec = reference_spec();
        let delta = 3.0 / 64.0;
        let mut history = HistoryFn::constant(delta, 3.0, 1.0).unwrap();
        *history.values.last_mut().unwrap() = 1.5; // jump at t = 0
        assert!(matches!(
            solve_from_history(&spec, &history, 5.0, delta),
            Err(Error::IncompatibleHistory { .. })
        ));
    }

    #[test]
    fn picard_iterates_increase_and_converge() {
        let spec = reference_spec();
        let delta = spec.default_delta();
        let u0 = InitialDistribution::step(vec![(0.0, 3.0, 2.0)]).unwrap();
        let iters = picard_iterates(&spec, &u0, 8.0, delta, 60).unwrap();
        for w in iters.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                assert!(b + 1e-14 >= *a, "iterates must increase");
            }
        }
        // the limit agrees with the implicit march
        let traj = solve_b(&spec, &u0, 8.0, delta).unwrap();
        let last = iters.last().unwrap();
        for (p, q) in last.iter().zip(&traj.b) {
            assert!((p - q).abs() < 1e-8, "picard limit vs march: {p} vs {q}");
        }
    }

    #[test]
    fn step_too_large_is_rejected() {
        let spec = reference_spec();
        let bad = spec.delta_max() * 1.5;
        let u0 = InitialDistribution::zero();
        assert!(matches!(
            solve_b(&spec, &u0, 5.0, bad),
            Err(Error::StepTooLarge { .. })
        ));
    }

    #[test]
    fn bound_report_on_large_data() {
        let spec = reference_spec();
        let u0 = InitialDistribution::step(vec![(0.0, 3.0, 5.0)]).unwrap();
        let traj = solve_big_b(&spec, &u0, 200.0, spec.default_delta()).unwrap();
        let report = l1_bound_check(&spec, &u0, &traj).unwrap();
        assert!(report.bound_holds, "B exceeded {} at {:?}", report.c1 + report.c2 * report.u0_norm, report.offending_t);
        assert!(report.limsup_in_range && report.liminf_in_range);
        // this datum persists: trailing window near kappa2
        assert!((report.trailing_min - 2.0).abs() < fate_tol(&spec));
        assert!((report.trailing_max - 2.0).abs() < fate_tol(&spec));
    }
}
