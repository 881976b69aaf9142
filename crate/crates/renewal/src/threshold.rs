//! Sharp extinction/persistence threshold machinery: fate classification of
//! a single run, monotone one-parameter families of initial data, and
//! bisection for the critical scaling lambda*.
//!
//! Fate decisions are sound, not just heuristic: once a full memory window of
//! length a* sits strictly above (below) the unstable level kappa1, the
//! comparison principle traps the solution above (below) that level forever,
//! so the run can stop early with a definite verdict.

use crate::error::{Error, Result};
use crate::kernel::{self, KernelWeight};
use crate::model::ModelSpec;
use crate::volterra::{
    self, fate_tol, implicit_node, transported_integral, InitialDistribution, Trajectory,
};
use crate::characteristics::{l1_distance_to_equilibrium, population_size, reconstruct};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Extinct,
    Persistent,
    Undecided,
}

/// A linearly scaled family lambda -> lambda * psi of initial distributions.
#[derive(Debug, Clone)]
pub struct MonotoneFamily {
    base: InitialDistribution,
}

impl MonotoneFamily {
    /// The base profile must put positive mass on the reproductive window
    /// [0, a*]; otherwise every scaling is sterile and no threshold exists.
    pub fn new(spec: &ModelSpec, base: InitialDistribution) -> Result<Self> {
        let mass = transported_integral(&spec.mu, Some(&spec.beta), &base, 0.0);
        if !(mass > 0.0) {
            return Err(Error::FamilyMissesReproductiveWindow);
        }
        Ok(Self { base })
    }

    pub fn at(&self, lambda: f64) -> InitialDistribution {
        self.base.scale(lambda)
    }

    pub fn base(&self) -> &InitialDistribution {
        &self.base
    }
}

#[derive(Debug, Clone)]
pub struct FateReport {
    pub verdict: Verdict,
    pub trailing_min: f64,
    pub trailing_max: f64,
    /// First time b exceeds kappa1 + fate_tol, if ever.
    pub first_crossing_up: Option<f64>,
    /// First time b drops below kappa1 - fate_tol, if ever.
    pub first_crossing_down: Option<f64>,
    /// Time actually simulated (shorter than requested when a trap fired).
    pub horizon: f64,
}

/// Classifies the long-run fate of the run from u0. Marches the renewal
/// solver, stopping early as soon as the trailing window of length a* lies
/// entirely on one side of the kappa1 decision band; otherwise decides from
/// the final 25% window, with `Undecided` as an honest outcome.
pub fn classify_fate(
    spec: &ModelSpec,
    u0: &InitialDistribution,
    t_end: f64,
    delta: f64,
) -> Result<FateReport> {
    volterra::check_delta(spec, delta)?;
    let tol = fate_tol(spec);
    let k1 = spec.kappa1();
    let (level_up, level_down) = (k1 + tol, k1 - tol);
    let n_steps = (t_end / delta).ceil() as usize;
    let cutoff = volterra::memory_cutoff(spec, t_end, delta);
    let weights = kernel::product_weights(&spec.mu, KernelWeight::Gamma(&spec.beta), delta, cutoff);
    let window = (cutoff / delta).ceil() as usize + 1;

    let f_support = match spec.beta.tail() {
        Some(_) => f64::INFINITY,
        None => spec.beta.a_star(),
    };
    let forcing = |n: usize| {
        let t = n as f64 * delta;
        if t >= f_support {
            0.0
        } else {
            transported_integral(&spec.mu, Some(&spec.beta), u0, t)
        }
    };

    let mut b = vec![spec.f.eval(forcing(0))];
    let mut first_up = None;
    let mut first_down = None;
    let note_crossings = |t: f64, v: f64, up: &mut Option<f64>, down: &mut Option<f64>| {
        if up.is_none() && v > level_up {
            *up = Some(t);
        }
        if down.is_none() && v < level_down {
            *down = Some(t);
        }
    };
    note_crossings(0.0, b[0], &mut first_up, &mut first_down);

    let mut verdict = Verdict::Undecided;
    for n in 1..=n_steps {
        let mut known = forcing(n);
        let j_max = weights.len().min(n);
        if j_max > 0 {
            known += weights.q[0] * b[n - 1];
            for j in 1..j_max {
                known += weights.p[j] * b[n - j] + weights.q[j] * b[n - j - 1];
            }
        }
        let p0 = if j_max > 0 { weights.p[0] } else { 0.0 };
        let (b_n, _) = implicit_node(&spec.f, known, p0, b[n - 1])?;
        b.push(b_n);
        note_crossings(n as f64 * delta, b_n, &mut first_up, &mut first_down);

        // the forcing term must be exhausted before a window can trap
        if n + 1 >= window && (n as f64 * delta) >= f_support.min(t_end) {
            let w = &b[n + 1 - window..];
            if w.iter().all(|&v| v > level_up) {
                verdict = Verdict::Persistent;
                break;
            }
            if w.iter().all(|&v| v < level_down) {
                verdict = Verdict::Extinct;
                break;
            }
        }
    }
    let horizon = delta * (b.len() - 1) as f64;
    let traj = Trajectory { delta, t0: 0.0, b, big_b: None, max_iterations: 0 };
    let (trailing_min, trailing_max) = traj.trailing_min_max(0.25);
    if verdict == Verdict::Undecided {
        if trailing_max < level_down {
            verdict = Verdict::Extinct;
        } else if trailing_min > level_up {
            verdict = Verdict::Persistent;
        }
    }
    Ok(FateReport {
        verdict,
        trailing_min,
        trailing_max,
        first_crossing_up: first_up,
        first_crossing_down: first_down,
        horizon,
    })
}

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub lo: f64,
    pub hi: f64,
    /// Midpoint estimate of lambda*.
    pub lambda_star: f64,
    /// Every fate actually computed, in evaluation order.
    pub log: Vec<(f64, Verdict)>,
    /// Horizon in force at the end (doubled once if midpoints stalled).
    pub horizon: f64,
}

/// Outcome of the threshold search: either a bracket around lambda*, or the
/// degenerate alternative where every tested scaling dies out.
#[derive(Debug, Clone)]
pub enum ThresholdOutcome {
    Bracket(ThresholdResult),
    AllExtinct { lambda_max: f64 },
}

const LAMBDA_DOUBLING_CAP: f64 = (1 << 20) as f64;

/// Generic bisection over any monotone fate map. `fate(lambda, horizon)` is
/// assumed extinct at 0, monotone in lambda; violations surface as
/// [`Error::ComparisonViolation`]. Shared by the direct and coupled-system
/// threshold searches.
pub(crate) fn bisect_threshold(
    mut raw_fate: impl FnMut(f64, f64) -> Result<Verdict>,
    width_tol: f64,
    t_end: f64,
) -> Result<ThresholdOutcome> {
    let mut horizon = t_end;
    let mut log: Vec<(f64, Verdict)> = Vec::new();
    let mut highest_extinct = 0.0f64;
    let mut lowest_persistent = f64::INFINITY;
    let mut fate = |lam: f64,
                    horizon: f64,
                    log: &mut Vec<(f64, Verdict)>,
                    highest_extinct: &mut f64,
                    lowest_persistent: &mut f64|
     -> Result<Verdict> {
        let v = raw_fate(lam, horizon)?;
        log.push((lam, v));
        match v {
            Verdict::Extinct => *highest_extinct = highest_extinct.max(lam),
            Verdict::Persistent => *lowest_persistent = lowest_persistent.min(lam),
            Verdict::Undecided => {}
        }
        if *highest_extinct > *lowest_persistent {
            return Err(Error::ComparisonViolation {
                extinct: *highest_extinct,
                persistent: *lowest_persistent,
            });
        }
        Ok(v)
    };

    // lambda = 0 is extinct by construction; double until persistence
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        match fate(hi, horizon, &mut log, &mut highest_extinct, &mut lowest_persistent)? {
            Verdict::Persistent => break,
            Verdict::Extinct => lo = hi,
            Verdict::Undecided => {}
        }
        hi *= 2.0;
        if hi > LAMBDA_DOUBLING_CAP {
            return Ok(ThresholdOutcome::AllExtinct { lambda_max: LAMBDA_DOUBLING_CAP });
        }
    }

    let mut horizon_doubled = false;
    while hi - lo > width_tol {
        let width = hi - lo;
        let mid = 0.5 * (lo + hi);
        match fate(mid, horizon, &mut log, &mut highest_extinct, &mut lowest_persistent)? {
            Verdict::Persistent => {
                hi = mid;
                continue;
            }
            Verdict::Extinct => {
                lo = mid;
                continue;
            }
            Verdict::Undecided => {}
        }
        // probe both flanks; an undecided midpoint stays outside the bracket
        let mut moved = false;
        let probe_hi = mid + 0.25 * width;
        if fate(probe_hi, horizon, &mut log, &mut highest_extinct, &mut lowest_persistent)?
            == Verdict::Persistent
        {
            hi = probe_hi;
            moved = true;
        }
        let probe_lo = mid - 0.25 * width;
        if fate(probe_lo, horizon, &mut log, &mut highest_extinct, &mut lowest_persistent)?
            == Verdict::Extinct
        {
            lo = probe_lo;
            moved = true;
        }
        if !moved {
            if horizon_doubled {
                break; // accept the bracket the horizon can resolve
            }
            horizon *= 2.0;
            horizon_doubled = true;
        }
    }

    Ok(ThresholdOutcome::Bracket(ThresholdResult {
        lo,
        hi,
        lambda_star: 0.5 * (lo + hi),
        log,
        horizon,
    }))
}

/// Bisection for lambda* over a monotone family. Fate monotonicity (from the
/// comparison principle) keeps the bracket valid; any observed inversion is
/// reported as a numerical fault rather than absorbed.
pub fn find_threshold(
    spec: &ModelSpec,
    family: &MonotoneFamily,
    width_tol: f64,
    t_end: f64,
    delta: f64,
) -> Result<ThresholdOutcome> {
    bisect_threshold(
        |lam, horizon| Ok(classify_fate(spec, &family.at(lam), horizon, delta)?.verdict),
        width_tol,
        t_end,
    )
}

/// Long-horizon diagnostics of the bracket-midpoint run: how long the
/// trajectory hovers strictly between extinction and the carrying state.
#[derive(Debug, Clone)]
pub struct HoverReport {
    pub lambda: f64,
    /// Band [0.1 kappa1, kappa2 - 0.1 kappa1] used for the hover clock.
    pub band: (f64, f64),
    /// Hover measured from t = a* (transient excluded) to the first exit.
    pub hover_start: f64,
    pub hover_end: f64,
    pub hover_duration: f64,
    pub trailing_b: (f64, f64),
    pub trailing_mass: (f64, f64),
    pub dist_to_zero: f64,
    pub dist_to_phi2: f64,
}

pub fn threshold_diagnostics(
    spec: &ModelSpec,
    family: &MonotoneFamily,
    bracket: &ThresholdResult,
    t_long: f64,
    delta: f64,
) -> Result<HoverReport> {
    let lambda = bracket.lambda_star;
    let u0 = family.at(lambda);
    let traj = volterra::solve_b(spec, &u0, t_long, delta)?;
    let k1 = spec.kappa1();
    let band = (0.1 * k1, spec.kappa2() - 0.1 * k1);
    let hover_start = spec.beta.a_star().min(t_long);
    let mut hover_end = traj.horizon();
    for (t, &v) in traj.times().zip(&traj.b) {
        if t < hover_start {
            continue;
        }
        if v < band.0 || v > band.1 {
            hover_end = t;
            break;
        }
    }
    let (bt_min, bt_max) = traj.trailing_min_max(0.25);

    // sample the population mass on the trailing quarter
    let n = traj.b.len() - 1;
    let mut mass_min = f64::INFINITY;
    let mut mass_max = f64::NEG_INFINITY;
    let step = (n / 64).max(1);
    for i in ((3 * n / 4)..=n).step_by(step) {
        let m = population_size(spec, &u0, &traj, i as f64 * delta)?;
        mass_min = mass_min.min(m);
        mass_max = mass_max.max(m);
    }
    let d_final = reconstruct(spec, &u0, &traj, n as f64 * delta)?;
    Ok(HoverReport {
        lambda,
        band,
        hover_start,
        hover_end,
        hover_duration: hover_end - hover_start,
        trailing_b: (bt_min, bt_max),
        trailing_mass: (mass_min, mass_max),
        dist_to_zero: l1_distance_to_equilibrium(&d_final, spec, 0),
        dist_to_phi2: l1_distance_to_equilibrium(&d_final, spec, 2),
    })
}

/// Fate verdicts over a grid of scalings; classifications at distinct lambda
/// are independent and run in parallel when the `parallel` feature is on.
pub fn fate_sweep(
    spec: &ModelSpec,
    family: &MonotoneFamily,
    lambdas: &[f64],
    t_end: f64,
    delta: f64,
) -> Result<Vec<(f64, FateReport)>> {
    let run = |&lam: &f64| -> Result<(f64, FateReport)> {
        Ok((lam, classify_fate(spec, &family.at(lam), t_end, delta)?))
    };
    #[cfg(feature = "parallel")]
    {
        lambdas.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        lambdas.iter().map(run).collect()
    }
}
