//! Independent oracle: for beta = beta_bar 1_{a >= tau} and constant mu, the
//! total population U(t) = ∫ u(t,a) da obeys the scalar delay equation
//!   U'(t) = f(beta_bar e^{-mu tau} U(t - tau)) - mu U(t),
//! integrated here by the classical four-stage Runge-Kutta method of steps.
//! Nothing is shared with the renewal solver beyond f, so agreement of the
//! two (three, counting the coupled reduction) routes is a genuine check.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelWeight};
use crate::model::{BirthFunction, ModelSpec, DEFAULT_NORM_TOLERANCE};
use crate::noncompact::{solve_coupled_unchecked, CoupledState};
use crate::volterra::{self, transported_integral, HistoryFn, InitialDistribution, Trajectory};
use crate::characteristics::population_size;

#[derive(Debug, Clone)]
pub struct DelaySpec {
    pub beta_bar: f64,
    pub mu: f64,
    pub tau: f64,
    pub f: BirthFunction,
}

impl DelaySpec {
    /// Enforces the normalization beta_bar e^{-mu tau} / mu = 1 that makes
    /// kappa_i / (beta_bar e^{-mu tau}) the nontrivial equilibria.
    pub fn new(beta_bar: f64, mu: f64, tau: f64, f: BirthFunction) -> Result<Self> {
        if !(beta_bar > 0.0 && mu > 0.0 && tau > 0.0) {
            return Err(Error::SpecShapeMismatch("delay parameters must be positive".into()));
        }
        let integral = beta_bar * (-mu * tau).exp() / mu;
        if (integral - 1.0).abs() > DEFAULT_NORM_TOLERANCE {
            return Err(Error::NotNormalized { integral, tolerance: DEFAULT_NORM_TOLERANCE });
        }
        Ok(Self { beta_bar, mu, tau, f })
    }

    /// The factor multiplying the delayed state, beta_bar e^{-mu tau} = mu.
    pub fn gain(&self) -> f64 {
        self.beta_bar * (-self.mu * self.tau).exp()
    }

    /// Equilibria 0, kappa1/gain, kappa2/gain of the delay equation.
    pub fn equilibria(&self, spec_kappa: (f64, f64)) -> [f64; 3] {
        [0.0, spec_kappa.0 / self.gain(), spec_kappa.1 / self.gain()]
    }
}

/// Integrates the delay equation from a history sampled on [0, tau];
/// `u_init[k]` is U(k delta) and delta must divide tau. Returns U on [0, T].
pub fn solve_delay(dspec: &DelaySpec, u_init: &[f64], t_end: f64, delta: f64) -> Result<Trajectory> {
    let n_tau_f = dspec.tau / delta;
    if (n_tau_f - n_tau_f.round()).abs() > 1e-9 {
        return Err(Error::GridMisaligned(format!(
            "delta = {delta} must divide the delay tau = {}",
            dspec.tau
        )));
    }
    let n_tau = n_tau_f.round() as usize;
    if u_init.len() != n_tau + 1 {
        return Err(Error::GridMisaligned(format!(
            "history needs {} samples on [0, tau], got {}",
            n_tau + 1,
            u_init.len()
        )));
    }
    let gain = dspec.gain();
    let mu = dspec.mu;
    let n_steps = (t_end / delta).ceil() as usize;
    let mut u = u_init.to_vec();
    u.reserve(n_steps.saturating_sub(n_tau));
    // linear interpolation into the stored past (only half-steps need it)
    let past = |u: &[f64], x: f64| -> f64 {
        let i = x.floor() as usize;
        let frac = x - i as f64;
        if frac == 0.0 || i + 1 >= u.len() {
            u[i.min(u.len() - 1)]
        } else {
            u[i] * (1.0 - frac) + u[i + 1] * frac
        }
    };
    for n in n_tau..n_steps {
        // delayed argument at t_n, t_n + delta/2, t_n + delta
        let d0 = u[n - n_tau];
        let dh = past(&u, n as f64 - n_tau as f64 + 0.5);
        let d1 = u[n + 1 - n_tau];
        let rhs = |delayed: f64, v: f64| dspec.f.eval(gain * delayed) - mu * v;
        let v = u[n];
        let k1 = rhs(d0, v);
        let k2 = rhs(dh, v + 0.5 * delta * k1);
        let k3 = rhs(dh, v + 0.5 * delta * k2);
        let k4 = rhs(d1, v + delta * k3);
        u.push(v + delta / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    Ok(Trajectory { delta, t0: 0.0, b: u, big_b: None, max_iterations: 0 })
}

/// Pairwise deviations of the three routes to U(t) for t >= tau.
#[derive(Debug, Clone)]
pub struct DelayCrossReport {
    pub max_delay_vs_characteristics: f64,
    pub max_delay_vs_coupled: f64,
    pub max_characteristics_vs_coupled: f64,
    pub delta: f64,
    /// (t, U_delay, U_characteristics, U_coupled) for t >= tau.
    pub rows: Vec<(f64, f64, f64, f64)>,
}

fn delay_spec_of(spec: &ModelSpec) -> Result<DelaySpec> {
    let (a0, beta_inf) = spec.beta.tail().ok_or_else(|| {
        Error::SpecShapeMismatch("delay reduction needs beta = beta_bar 1_{a >= tau}".into())
    })?;
    if spec.beta.pieces().iter().any(|&(_, _, v)| v != 0.0) {
        return Err(Error::SpecShapeMismatch("interior beta must vanish".into()));
    }
    if !spec.mu.is_constant() {
        return Err(Error::SpecShapeMismatch("mortality must be constant".into()));
    }
    DelaySpec::new(beta_inf, spec.mu.tail_rate(), a0, spec.f.clone())
}

/// Computes U(t) three ways — delay oracle, renewal solver + exact population
/// functional, coupled reduction — and reports pairwise max deviations for
/// t >= tau.
pub fn cross_validate(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    t_end: f64,
    delta: f64,
) -> Result<DelayCrossReport> {
    let dspec = delay_spec_of(spec)?;
    let tau = dspec.tau;
    let n_tau_f = tau / delta;
    if (n_tau_f - n_tau_f.round()).abs() > 1e-9 {
        return Err(Error::GridMisaligned(format!("delta = {delta} must divide tau = {tau}")));
    }
    let n_tau = n_tau_f.round() as usize;

    // route 1: renewal solver, exact population functional
    let full = volterra::solve_b(spec, u0, t_end, delta)?;
    let n_end = full.b.len() - 1;
    let u_char: Vec<f64> = (0..=n_end)
        .map(|n| population_size(spec, u0, &full, n as f64 * delta))
        .collect::<Result<_>>()?;

    // route 2: delay oracle seeded with the characteristics values on [0, tau]
    let u_delay = solve_delay(&dspec, &u_char[0..=n_tau], t_end, delta)?;

    // route 3: coupled reduction, U = I + young-age mass
    let alpha = transported_integral(&spec.mu, None, u0, tau);
    let history = HistoryFn { delta, values: full.b[0..=n_tau].to_vec() };
    let coupled = solve_coupled_unchecked(spec, &CoupledState { alpha, history }, t_end - tau, delta)?;
    let surv = kernel::product_weights(&spec.mu, KernelWeight::Survival, delta, tau);
    let u_coupled: Vec<f64> = (0..coupled.b.len())
        .map(|k| {
            let n = n_tau + k;
            let mut young = 0.0;
            for j in 0..surv.len().min(n) {
                young += surv.p[j] * full.b[n - j] + surv.q[j] * full.b[n - j - 1];
            }
            coupled.i[k] + young
        })
        .collect();

    let mut dc = 0.0f64;
    let mut dk = 0.0f64;
    let mut ck = 0.0f64;
    let mut rows = Vec::with_capacity(n_end + 1 - n_tau);
    for n in n_tau..=n_end {
        let a = u_delay.b[n];
        let b = u_char[n];
        let c = u_coupled[n - n_tau];
        dc = dc.max((a - b).abs());
        dk = dk.max((a - c).abs());
        ck = ck.max((b - c).abs());
        rows.push((n as f64 * delta, a, b, c));
    }
    Ok(DelayCrossReport {
        max_delay_vs_characteristics: dc,
        max_delay_vs_coupled: dk,
        max_characteristics_vs_coupled: ck,
        delta,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_noncompact_spec;

    fn reference_delay() -> DelaySpec {
        DelaySpec::new(0.5 * 0.5f64.exp(), 0.5, 1.0, BirthFunction::hill(3.0, 2.0).unwrap())
            .unwrap()
    }

    #[test]
    fn normalization_is_enforced() {
        let f = BirthFunction::hill(3.0, 2.0).unwrap();
        assert!(matches!(
            DelaySpec::new(0.7, 0.5, 1.0, f),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn zero_history_stays_zero() {
        let d = reference_delay();
        let delta = 1.0 / 32.0;
        let traj = solve_delay(&d, &vec![0.0; 33], 50.0, delta).unwrap();
        assert!(traj.b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibria_are_stationary() {
        // f(0.5 U) = 0.5 U at U = 2 kappa_i, i.e. U in {2, 4}
        let d = reference_delay();
        let delta = 1.0 / 32.0;
        let eq = d.equilibria((1.0, 2.0));
        assert!((eq[1] - 2.0).abs() < 1e-12);
        assert!((eq[2] - 4.0).abs() < 1e-12);
        for u_star in [2.0, 4.0] {
            let traj = solve_delay(&d, &vec![u_star; 33], 100.0, delta).unwrap();
            for &v in &traj.b {
                assert!((v - u_star).abs() <= 1e-8, "drift from {u_star}: {v}");
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let spec = crate::model::reference_spec();
        let u0 = InitialDistribution::zero();
        assert!(matches!(
            cross_validate(&spec, &u0, 10.0, 1.0 / 32.0),
            Err(Error::SpecShapeMismatch(_))
        ));
    }

    #[test]
    fn equilibrium_data_cross_validates() {
        let spec = reference_noncompact_spec();
        let u0 = InitialDistribution::scaled_survival(2.0).unwrap();
        let report = cross_validate(&spec, &u0, 50.0, 1.0 / 32.0).unwrap();
        assert!(report.max_delay_vs_characteristics <= 1e-8, "{report:?}");
        assert!(report.max_delay_vs_coupled <= 1e-8, "{report:?}");
        assert!(report.max_characteristics_vs_coupled <= 1e-8, "{report:?}");
    }

    #[test]
    fn generic_data_deviation_shrinks_like_delta_squared() {
        let spec = reference_noncompact_spec();
        let u0 = InitialDistribution::scaled_survival(1.5).unwrap();
        let r1 = cross_validate(&spec, &u0, 20.0, 1.0 / 16.0).unwrap();
        let r2 = cross_validate(&spec, &u0, 20.0, 1.0 / 32.0).unwrap();
        let ratio = r1.max_delay_vs_characteristics / r2.max_delay_vs_characteristics;
        assert!(
            (2.0..8.0).contains(&ratio),
            "expected ~4x shrink, got {ratio} ({} -> {})",
            r1.max_delay_vs_characteristics,
            r2.max_delay_vs_characteristics
        );
    }
}
