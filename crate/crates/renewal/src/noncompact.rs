//! Old-age reduction for birth rates that never vanish: beyond the switch
//! age a0 fertility and mortality are constant, so the population splits into
//! the young density on [0, a0] and the scalar old-age mass
//! I(t) = ∫_{a0}^∞ u(t,a) da, giving the coupled system
//!   I'(t) = -mu_inf I(t) + c0 b(t - a0),        c0 = e^{-H(a0)},
//!   b(t)  = f(∫_0^{a0} gamma(a) b(t-a) da + beta_inf I(t)).
//! I is advanced by the exact variation-of-constants step (no quadrature
//! error for constant b), the b memory by the same product-integration
//! weights as the direct solver.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelWeight};
use crate::model::ModelSpec;
use crate::quad::{exp_moment0, exp_moment1};
use crate::threshold::{bisect_threshold, ThresholdOutcome, Verdict};
use crate::volterra::{
    self, fate_tol, implicit_node, transported_integral, HistoryFn, InitialDistribution,
    HISTORY_TOL,
};

/// Initial condition of the coupled system: old-age mass plus a birth history
/// on [-a0, 0].
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub alpha: f64,
    pub history: HistoryFn,
}

impl CoupledState {
    pub fn constant(spec: &ModelSpec, delta: f64, alpha: f64, b: f64) -> Result<Self> {
        let (a0, _) = spec.beta.tail().ok_or(Error::RequiresEventuallyConstant)?;
        Ok(Self { alpha, history: HistoryFn::constant(delta, a0, b)? })
    }

    /// |phi(0) - f(interior memory + beta_inf alpha)|: the jump the coupled
    /// solution would have at t = 0.
    pub fn compatibility_residual(&self, spec: &ModelSpec) -> Result<f64> {
        let (a0, beta_inf) = spec.beta.tail().ok_or(Error::RequiresEventuallyConstant)?;
        let delta = self.history.delta;
        let w = kernel::product_weights(&spec.mu, KernelWeight::Interior(&spec.beta), delta, a0);
        let last = self.history.values.len() - 1;
        if last < w.len() {
            return Err(Error::GridMisaligned("history shorter than a0".into()));
        }
        let mut mem = 0.0;
        for j in 0..w.len() {
            mem += w.p[j] * self.history.values[last - j] + w.q[j] * self.history.values[last - j - 1];
        }
        Ok((self.history.values[last] - spec.f.eval(mem + beta_inf * self.alpha)).abs())
    }

    pub fn scale(&self, lambda: f64) -> Self {
        Self {
            alpha: self.alpha * lambda,
            history: HistoryFn {
                delta: self.history.delta,
                values: self.history.values.iter().map(|v| v * lambda).collect(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoupledTrajectory {
    pub delta: f64,
    /// Values at t = 0, delta, ...; index 0 is the initial condition.
    pub i: Vec<f64>,
    pub b: Vec<f64>,
    pub c0: f64,
}

impl CoupledTrajectory {
    pub fn horizon(&self) -> f64 {
        self.delta * (self.b.len() - 1) as f64
    }
}

/// The three equilibria (I, b) = (c0 kappa / mu_inf, kappa).
pub fn coupled_equilibria(spec: &ModelSpec) -> Result<[(f64, f64); 3]> {
    let (a0, _) = spec.beta.tail().ok_or(Error::RequiresEventuallyConstant)?;
    let c0 = (-spec.mu.hazard(a0)).exp();
    let m = spec.mu.tail_rate();
    let (k1, k2) = (spec.kappa1(), spec.kappa2());
    Ok([(0.0, 0.0), (c0 * k1 / m, k1), (c0 * k2 / m, k2)])
}

fn check_coupled_grid(spec: &ModelSpec, delta: f64) -> Result<(f64, f64, usize)> {
    let (a0, beta_inf) = spec.beta.tail().ok_or(Error::RequiresEventuallyConstant)?;
    if !(a0 > 0.0) {
        return Err(Error::GridMisaligned("the coupled march needs a positive switch age".into()));
    }
    let n0f = a0 / delta;
    if (n0f - n0f.round()).abs() > 1e-9 {
        return Err(Error::GridMisaligned(format!("delta = {delta} must divide a0 = {a0}")));
    }
    Ok((a0, beta_inf, n0f.round() as usize))
}

/// March without the membership check; threshold rays deliberately start
/// outside the compatible set and pick up the jump at t = 0.
pub(crate) fn solve_coupled_unchecked(
    spec: &ModelSpec,
    state: &CoupledState,
    t_end: f64,
    delta: f64,
) -> Result<CoupledTrajectory> {
    volterra::check_delta(spec, delta)?;
    let (a0, beta_inf, n0) = check_coupled_grid(spec, delta)?;
    if (state.history.delta - delta).abs() > 1e-12 * delta {
        return Err(Error::GridMisaligned("history step must match the solver step".into()));
    }
    if state.history.values.len() < n0 + 1 {
        return Err(Error::GridMisaligned("history must cover [-a0, 0]".into()));
    }
    let c0 = (-spec.mu.hazard(a0)).exp();
    let m = spec.mu.tail_rate();
    let w = kernel::product_weights(&spec.mu, KernelWeight::Interior(&spec.beta), delta, a0);
    // variation-of-constants weights over one step, exact for linear b
    let decay = (-m * delta).exp();
    let m0 = exp_moment0(m, delta);
    let m1 = exp_moment1(m, delta) / delta;

    let n_steps = (t_end / delta).ceil() as usize;
    let offset = state.history.values.len() - 1;
    let mut b = state.history.values.clone();
    b.reserve(n_steps);
    let mut i_vals = vec![state.alpha];
    for n in 1..=n_steps {
        let idx = offset + n;
        // delayed b samples bracketing the step, b(t-a0) on [t_{n-1}, t_n]
        let b_old0 = b[idx - 1 - n0];
        let b_old1 = b[idx - n0];
        let i_n = decay * i_vals[n - 1] + c0 * (b_old1 * m0 + (b_old0 - b_old1) * m1);
        let mut known = beta_inf * i_n;
        if !w.is_empty() {
            known += w.q[0] * b[idx - 1];
            for j in 1..w.len() {
                known += w.p[j] * b[idx - j] + w.q[j] * b[idx - j - 1];
            }
        }
        let p0 = if w.is_empty() { 0.0 } else { w.p[0] };
        let (b_n, _) = implicit_node(&spec.f, known, p0, b[idx - 1])?;
        i_vals.push(i_n);
        b.push(b_n);
    }
    Ok(CoupledTrajectory { delta, i: i_vals, b: b[offset..].to_vec(), c0 })
}

/// Advances the coupled system from a compatible initial state.
pub fn solve_coupled(
    spec: &ModelSpec,
    state: &CoupledState,
    t_end: f64,
    delta: f64,
) -> Result<CoupledTrajectory> {
    let residual = state.compatibility_residual(spec)?;
    if residual > HISTORY_TOL {
        return Err(Error::IncompatibleHistory { residual, tolerance: HISTORY_TOL });
    }
    solve_coupled_unchecked(spec, state, t_end, delta)
}

/// Deviation between the direct renewal solution and the coupled reduction
/// started from the same data, compared for t >= a0.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub max_b_deviation: f64,
    pub max_i_deviation: f64,
    pub delta: f64,
}

/// Runs both routes from u0: the direct Volterra solver on the full model,
/// and the coupled system seeded at t = a0 with alpha = ∫_{a0}^∞ u(a0, a) da
/// and the birth history from the direct run.
pub fn equivalence_check(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    t_end: f64,
    delta: f64,
) -> Result<EquivalenceReport> {
    let (a0, _, n0) = check_coupled_grid(spec, delta)?;
    let full = volterra::solve_b(spec, u0, t_end, delta)?;

    // old-age mass of the transported datum at t = a0
    let alpha = transported_integral(&spec.mu, None, u0, a0);
    let history = HistoryFn { delta, values: full.b[0..=n0].to_vec() };
    let coupled = solve_coupled_unchecked(spec, &CoupledState { alpha, history }, t_end - a0, delta)?;

    // I from the direct route: survival convolution over ages in [a0, t]
    // plus the transported old tail
    let surv = kernel::product_weights(&spec.mu, KernelWeight::Survival, delta, t_end + delta);
    let i_full = |n: usize| -> f64 {
        // ∫_{a0}^{t} e^{-H(a)} b(t-a) da on aligned cells
        let mut young = 0.0;
        for j in n0..surv.len().min(n) {
            young += surv.p[j] * full.b[n - j] + surv.q[j] * full.b[n - j - 1];
        }
        young + transported_integral(&spec.mu, None, u0, n as f64 * delta)
    };

    let mut max_b = 0.0f64;
    let mut max_i = 0.0f64;
    for k in 0..coupled.b.len() {
        let n = n0 + k;
        if n >= full.b.len() {
            break;
        }
        max_b = max_b.max((full.b[n] - coupled.b[k]).abs());
        max_i = max_i.max((i_full(n) - coupled.i[k]).abs());
    }
    Ok(EquivalenceReport { max_b_deviation: max_b, max_i_deviation: max_i, delta })
}

/// Bisection for the critical scaling along the ray lambda * (alpha, phi),
/// with fate read off the coupled b trajectory (trailing window against the
/// kappa1 band; I is slaved to b and is not gated).
pub fn coupled_threshold(
    spec: &ModelSpec,
    base: &CoupledState,
    width_tol: f64,
    t_end: f64,
    delta: f64,
) -> Result<ThresholdOutcome> {
    let tol = fate_tol(spec);
    let k1 = spec.kappa1();
    bisect_threshold(
        |lam, horizon| {
            let traj = solve_coupled_unchecked(spec, &base.scale(lam), horizon, delta)?;
            let n = traj.b.len();
            let window = &traj.b[n - n.div_ceil(4)..];
            let max = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = window.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(if max < k1 - tol {
                Verdict::Extinct
            } else if min > k1 + tol {
                Verdict::Persistent
            } else {
                Verdict::Undecided
            })
        },
        width_tol,
        t_end,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_noncompact_spec;
    use crate::volterra::FP_TOL;

    #[test]
    fn equilibria_closed_forms() {
        let spec = reference_noncompact_spec();
        let eq = coupled_equilibria(&spec).unwrap();
        assert_eq!(eq[0], (0.0, 0.0));
        assert!((eq[1].0 - (-0.5f64).exp() / 0.5).abs() < 1e-12);
        assert!((eq[1].1 - 1.0).abs() < 1e-12);
        assert!((eq[2].0 - 2.0 * (-0.5f64).exp() / 0.5).abs() < 1e-12);
    }

    #[test]
    fn compact_spec_is_rejected() {
        let spec = crate::model::reference_spec();
        assert!(matches!(coupled_equilibria(&spec), Err(Error::RequiresEventuallyConstant)));
    }

    #[test]
    fn equilibrium_states_stay_constant() {
        let spec = reference_noncompact_spec();
        let delta = 1.0 / 64.0;
        for (alpha, b) in coupled_equilibria(&spec).unwrap() {
            let state = CoupledState::constant(&spec, delta, alpha, b).unwrap();
            let traj = solve_coupled(&spec, &state, 100.0, delta).unwrap();
            for &v in &traj.b {
                assert!((v - b).abs() <= 10.0 * FP_TOL, "b drifted from {b}: {v}");
            }
            for &v in &traj.i {
                assert!((v - alpha).abs() <= 1e-10, "I drifted from {alpha}: {v}");
            }
        }
    }

    #[test]
    fn exact_integrator_with_constant_b() {
        // closed form I(t) = e^{-mt} I0 + (c0 c / m)(1 - e^{-mt}) with b == c
        let spec = reference_noncompact_spec();
        let delta = 1.0 / 32.0;
        let (i0, c) = (0.3, 1.7);
        let state = CoupledState {
            alpha: i0,
            history: HistoryFn::constant(delta, 1.0, c).unwrap(),
        };
        let traj = solve_coupled_unchecked(&spec, &state, 1.0, delta).unwrap();
        let c0 = (-0.5f64).exp();
        for (k, &iv) in traj.i.iter().enumerate() {
            let t = k as f64 * delta;
            let exact = (-0.5 * t).exp() * i0 + (c0 * c / 0.5) * (1.0 - (-0.5 * t).exp());
            assert!((iv - exact).abs() < 1e-10, "t={t}: {iv} vs {exact}");
        }
    }

    #[test]
    fn perturbed_unstable_pair_splits() {
        let spec = reference_noncompact_spec();
        let delta = 1.0 / 64.0;
        let [_, (a1, b1), (a2, b2)] = coupled_equilibria(&spec).unwrap();
        let up = CoupledState::constant(&spec, delta, a1 * 1.01, b1 * 1.01).unwrap();
        let down = CoupledState::constant(&spec, delta, a1 * 0.99, b1 * 0.99).unwrap();
        let t_up = solve_coupled_unchecked(&spec, &up, 200.0, delta).unwrap();
        let t_down = solve_coupled_unchecked(&spec, &down, 200.0, delta).unwrap();
        assert!((t_up.b.last().unwrap() - b2).abs() < 0.05, "up -> {}", t_up.b.last().unwrap());
        assert!((t_up.i.last().unwrap() - a2).abs() < 0.05);
        assert!(*t_down.b.last().unwrap() < 0.05, "down -> {}", t_down.b.last().unwrap());
    }

    #[test]
    fn incompatible_state_is_rejected() {
        let spec = reference_noncompact_spec();
        let state = CoupledState::constant(&spec, 1.0 / 32.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            solve_coupled(&spec, &state, 5.0, 1.0 / 32.0),
            Err(Error::IncompatibleHistory { .. })
        ));
    }

    #[test]
    fn equivalence_of_the_two_routes() {
        let spec = reference_noncompact_spec();
        let delta = 1.0 / 64.0;
        let u0 = InitialDistribution::scaled_survival(1.5).unwrap();
        let report = equivalence_check(&spec, &u0, 30.0, delta).unwrap();
        let bound = 5.0 * (delta * delta + FP_TOL);
        assert!(report.max_b_deviation <= bound, "b dev {}", report.max_b_deviation);
        assert!(report.max_i_deviation <= bound, "I dev {}", report.max_i_deviation);
    }

    #[test]
    fn threshold_along_the_unstable_ray_is_one() {
        let spec = reference_noncompact_spec();
        let delta = 1.0 / 64.0;
        let [_, (a1, b1), _] = coupled_equilibria(&spec).unwrap();
        let base = CoupledState::constant(&spec, delta, a1, b1).unwrap();
        let out = coupled_threshold(&spec, &base, 1e-2, 200.0, delta).unwrap();
        let ThresholdOutcome::Bracket(res) = out else { panic!("expected bracket") };
        assert!(res.lo <= 1.0 && res.hi >= 1.0, "bracket [{}, {}]", res.lo, res.hi);
        assert!(res.hi - res.lo <= 1e-2);
    }
}
