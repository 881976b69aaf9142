//! Model ingredients: mortality rate, birth rate, bistable birth function,
//! and the assembled spec with its validation checks.
//!
//! Mortality is piecewise constant and birth rates are step functions, so the
//! survival function, the normalization integral and every kernel moment used
//! downstream have closed forms.

use crate::error::{Error, Result};
use crate::kernel;

/// Age-dependent mortality rate, piecewise constant with a constant tail.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityRate {
    /// Piece values; `rates[i]` applies on `[breaks[i-1], breaks[i])`, the
    /// last entry on the unbounded tail.
    rates: Vec<f64>,
    /// Strictly increasing positive breakpoints, one fewer than `rates`.
    breaks: Vec<f64>,
    /// Cumulative hazard at each breakpoint.
    cum_hazard: Vec<f64>,
    mu_lower: f64,
}

impl MortalityRate {
    pub fn constant(mu: f64) -> Result<Self> {
        Self::piecewise(vec![mu], vec![])
    }

    pub fn piecewise(rates: Vec<f64>, breaks: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || breaks.len() + 1 != rates.len() {
            return Err(Error::BadMortalityBreakpoints);
        }
        if !breaks.windows(2).all(|w| w[0] < w[1]) || breaks.first().is_some_and(|&b| b <= 0.0) {
            return Err(Error::BadMortalityBreakpoints);
        }
        let mu_lower = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(mu_lower > 0.0) {
            return Err(Error::MortalityBelowFloor(mu_lower));
        }
        let mut cum_hazard = Vec::with_capacity(breaks.len());
        let mut h = 0.0;
        let mut prev = 0.0;
        for (i, &b) in breaks.iter().enumerate() {
            h += rates[i] * (b - prev);
            cum_hazard.push(h);
            prev = b;
        }
        Ok(Self { rates, breaks, cum_hazard, mu_lower })
    }

    pub fn mu_lower(&self) -> f64 {
        self.mu_lower
    }

    pub fn tail_rate(&self) -> f64 {
        *self.rates.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn is_constant(&self) -> bool {
        self.rates.len() == 1
    }

    /// mu(a); at a breakpoint the right-hand piece applies.
    pub fn rate_at(&self, a: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= a);
        self.rates[i]
    }

    /// Cumulative hazard H(a) = ∫_0^a mu(l) dl, exact.
    pub fn hazard(&self, a: f64) -> f64 {
        debug_assert!(a >= 0.0);
        let i = self.breaks.partition_point(|&b| b <= a);
        let (h0, a0) = if i == 0 { (0.0, 0.0) } else { (self.cum_hazard[i - 1], self.breaks[i - 1]) };
        h0 + self.rates[i] * (a - a0)
    }
}

/// Survival probability e^{-∫_0^a mu(l) dl}, exact for the piecewise family.
pub fn survival(mu: &MortalityRate, a: f64) -> Result<f64> {
    if a < 0.0 {
        return Err(Error::NegativeAge(a));
    }
    Ok((-mu.hazard(a)).exp())
}

/// One step piece of a birth rate: value on the half-open interval `[lo, hi)`.
pub type StepPiece = (f64, f64, f64);

/// Age-specific fertility, a step function. Either compactly supported or
/// eventually constant (`beta(a) = beta_inf` for `a > a0`).
#[derive(Debug, Clone, PartialEq)]
pub struct BirthRate {
    pieces: Vec<StepPiece>,
    /// `(a0, beta_inf)` for the eventually-constant case.
    tail: Option<(f64, f64)>,
}

impl BirthRate {
    pub fn compact(pieces: Vec<StepPiece>) -> Result<Self> {
        Self::validate_pieces(&pieces, f64::INFINITY)?;
        if !pieces.iter().any(|&(_, _, v)| v > 0.0) {
            return Err(Error::DegenerateBirthRate);
        }
        Ok(Self { pieces, tail: None })
    }

    pub fn eventually_constant(pieces: Vec<StepPiece>, a0: f64, beta_inf: f64) -> Result<Self> {
        if !(a0 >= 0.0) || !(beta_inf > 0.0) {
            return Err(Error::BadBirthPieces);
        }
        Self::validate_pieces(&pieces, a0)?;
        Ok(Self { pieces, tail: Some((a0, beta_inf)) })
    }

    fn validate_pieces(pieces: &[StepPiece], upper: f64) -> Result<()> {
        let mut prev_hi = 0.0f64;
        for &(lo, hi, v) in pieces {
            if !(lo >= prev_hi && hi > lo && v >= 0.0 && hi <= upper && lo >= 0.0) {
                return Err(Error::BadBirthPieces);
            }
            prev_hi = hi;
        }
        Ok(())
    }

    pub fn pieces(&self) -> &[StepPiece] {
        &self.pieces
    }

    pub fn tail(&self) -> Option<(f64, f64)> {
        self.tail
    }

    pub fn is_eventually_constant(&self) -> bool {
        self.tail.is_some()
    }

    /// Maximal reproductive age a*; +inf in the eventually-constant case.
    pub fn a_star(&self) -> f64 {
        match self.tail {
            Some(_) => f64::INFINITY,
            None => self
                .pieces
                .iter()
                .filter(|&&(_, _, v)| v > 0.0)
                .map(|&(_, hi, _)| hi)
                .fold(0.0, f64::max),
        }
    }

    /// Essential supremum of beta.
    pub fn beta_upper(&self) -> f64 {
        let piece_max = self.pieces.iter().map(|&(_, _, v)| v).fold(0.0, f64::max);
        match self.tail {
            Some((_, bi)) => piece_max.max(bi),
            None => piece_max,
        }
    }

    /// beta(a); at a piece edge the right-hand value applies.
    pub fn value_at(&self, a: f64) -> f64 {
        if let Some((a0, bi)) = self.tail {
            if a >= a0 {
                return bi;
            }
        }
        for &(lo, hi, v) in &self.pieces {
            if a >= lo && a < hi {
                return v;
            }
        }
        0.0
    }

    /// beta restricted to `[0, a0)` (tail excluded); equals `value_at` for
    /// compact support.
    pub fn interior_value_at(&self, a: f64) -> f64 {
        for &(lo, hi, v) in &self.pieces {
            if a >= lo && a < hi {
                return v;
            }
        }
        0.0
    }

    /// Ages where the step value may change.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.pieces.len() + 1);
        for &(lo, hi, _) in &self.pieces {
            out.push(lo);
            out.push(hi);
        }
        if let Some((a0, _)) = self.tail {
            out.push(a0);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            pieces: self.pieces.iter().map(|&(lo, hi, v)| (lo, hi, v * s)).collect(),
            tail: self.tail.map(|(a0, bi)| (a0, bi * s)),
        }
    }
}

/// The bistable nonlinearity f.
#[derive(Debug, Clone, PartialEq)]
pub enum BirthFunction {
    /// f(x) = A x^2 / (B + x^2), bistable when A^2 > 4B.
    Hill { a: f64, b: f64 },
    /// Monotone piecewise-linear table; extended with the last slope.
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

impl BirthFunction {
    pub fn hill(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::NotBistable("hill parameters must be positive".into()));
        }
        Ok(Self::Hill { a, b })
    }

    pub fn table(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 || xs[0] != 0.0 || ys[0] != 0.0 {
            return Err(Error::NotBistable("table must start at (0,0)".into()));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) || !ys.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::NotBistable("table must be strictly increasing".into()));
        }
        Ok(Self::Table { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Hill { a, b } => a * x * x / (b + x * x),
            Self::Table { xs, ys } => {
                let n = xs.len();
                if x >= xs[n - 1] {
                    let s = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
                    return ys[n - 1] + s * (x - xs[n - 1]);
                }
                let i = xs.partition_point(|&t| t <= x).max(1);
                let (x0, x1) = (xs[i - 1], xs[i]);
                ys[i - 1] + (ys[i] - ys[i - 1]) * (x - x0) / (x1 - x0)
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Hill { a, b } => {
                let d = b + x * x;
                2.0 * a * b * x / (d * d)
            }
            Self::Table { xs, ys } => {
                let n = xs.len();
                let i = xs.partition_point(|&t| t <= x).clamp(1, n - 1);
                (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1])
            }
        }
    }

    /// A bound on f' over the positive half-line.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            Self::Hill { a: _, b } => {
                // f' is maximized at x = sqrt(b/3)
                let x = (b / 3.0).sqrt();
                self.derivative(x)
            }
            Self::Table { xs, ys } => xs
                .windows(2)
                .zip(ys.windows(2))
                .map(|(xw, yw)| (yw[1] - yw[0]) / (xw[1] - xw[0]))
                .fold(0.0, f64::max),
        }
    }
}

/// The two positive fixed points of f(x) = x, found by a sign-change scan
/// plus bisection; the hill kind is cross-checked against the closed form.
pub fn find_fixed_points(f: &BirthFunction, x_max: f64) -> Result<(f64, f64)> {
    let n = 4096;
    let mut roots = Vec::new();
    let g = |x: f64| f.eval(x) - x;
    let mut prev_x = x_max / n as f64;
    let mut prev_g = g(prev_x);
    for i in 2..=n {
        let x = x_max * i as f64 / n as f64;
        let gx = g(x);
        if prev_g == 0.0 {
            roots.push(prev_x);
        } else if prev_g * gx < 0.0 {
            let (mut lo, mut hi) = (prev_x, x);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(lo) * g(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_g = gx;
    }
    if roots.len() != 2 {
        return Err(Error::NotBistable(format!(
            "found {} positive fixed points on (0, {x_max}], expected 2",
            roots.len()
        )));
    }
    if let BirthFunction::Hill { a, b } = f {
        let disc = a * a - 4.0 * b;
        if disc <= 0.0 {
            return Err(Error::NotBistable("hill discriminant A^2 - 4B <= 0".into()));
        }
        let k1 = (a - disc.sqrt()) / 2.0;
        let k2 = (a + disc.sqrt()) / 2.0;
        if (roots[0] - k1).abs() > 1e-10 || (roots[1] - k2).abs() > 1e-10 {
            return Err(Error::NotBistable("scan disagrees with hill closed form".into()));
        }
        return Ok((k1, k2));
    }
    Ok((roots[0], roots[1]))
}

/// One validation check with its computed quantity.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// The assembled model, immutable after construction.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub mu: MortalityRate,
    pub beta: BirthRate,
    pub f: BirthFunction,
    pub norm_tolerance: f64,
    kappa: (f64, f64),
}

pub const DEFAULT_NORM_TOLERANCE: f64 = 1e-10;

impl ModelSpec {
    /// Assembles a spec, locating the fixed points; Assumption-1 checks are
    /// run by [`ModelSpec::validate`].
    pub fn new(mu: MortalityRate, beta: BirthRate, f: BirthFunction) -> Result<Self> {
        Self::with_tolerance(mu, beta, f, DEFAULT_NORM_TOLERANCE)
    }

    pub fn with_tolerance(
        mu: MortalityRate,
        beta: BirthRate,
        f: BirthFunction,
        norm_tolerance: f64,
    ) -> Result<Self> {
        let x_max = match &f {
            BirthFunction::Hill { a, .. } => 2.0 * a,
            BirthFunction::Table { xs, .. } => *xs.last().unwrap(),
        };
        let kappa = find_fixed_points(&f, x_max)?;
        Ok(Self { mu, beta, f, norm_tolerance, kappa })
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa.0
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa.1
    }

    pub fn survival(&self, a: f64) -> Result<f64> {
        survival(&self.mu, a)
    }

    /// ∫_0^∞ beta(a) e^{-∫_0^a mu} da, closed form.
    pub fn normalization_integral(&self) -> f64 {
        kernel::int_gamma(&self.mu, &self.beta, 0.0, f64::INFINITY)
    }

    /// Equilibrium density values κ_i e^{-∫_0^a mu} on the given ages.
    pub fn equilibrium_density(&self, which: usize, ages: &[f64]) -> Result<Vec<f64>> {
        let k = self.equilibrium_level(which);
        ages.iter().map(|&a| Ok(k * self.survival(a)?)).collect()
    }

    /// 0, κ1 or κ2 by index.
    pub fn equilibrium_level(&self, which: usize) -> f64 {
        match which {
            0 => 0.0,
            1 => self.kappa.0,
            _ => self.kappa.1,
        }
    }

    /// Subdiagonal constants (rho, M) with f(x) <= rho x for x >= M, used by
    /// the ultimate-boundedness check.
    pub fn subdiagonal_constants(&self) -> (f64, f64) {
        let xc = 10.0 * self.kappa.1;
        let mut rho: f64 = 0.0;
        let n = 1000;
        for i in 0..=n {
            let x = xc + (10.0 * xc - xc) * i as f64 / n as f64;
            rho = rho.max(self.f.eval(x) / x);
        }
        ((rho + 0.01).min(0.999), xc)
    }

    /// Largest stable implicit time step 1/(L * beta_upper).
    pub fn delta_max(&self) -> f64 {
        1.0 / (self.f.lipschitz_bound() * self.beta.beta_upper())
    }

    /// Default time step: min(delta_max/4, span/64) where span is a* or a0.
    pub fn default_delta(&self) -> f64 {
        let span = match self.beta.tail() {
            Some((a0, _)) if a0 > 0.0 => a0,
            Some(_) => 1.0,
            None => self.beta.a_star(),
        };
        (self.delta_max() / 4.0).min(span / 64.0)
    }

    /// Runs every Assumption-1 check and reports the computed quantities.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let (k1, k2) = self.kappa;

        checks.push(Check {
            name: "mortality floor mu_lower > 0",
            value: self.mu.mu_lower(),
            passed: self.mu.mu_lower() > 0.0,
        });

        let integral = self.normalization_integral();
        checks.push(Check {
            name: "normalization |integral - 1| <= tolerance",
            value: integral,
            passed: (integral - 1.0).abs() <= self.norm_tolerance,
        });

        checks.push(Check { name: "f(0) = 0", value: self.f.eval(0.0), passed: self.f.eval(0.0) == 0.0 });

        // f' > 0 sampled on [0, 2 κ2] (10^4 points) plus the fixed points
        let n = 10_000;
        let mut min_slope = f64::INFINITY;
        for i in 1..=n {
            let x = 2.0 * k2 * i as f64 / n as f64;
            min_slope = min_slope.min(self.f.derivative(x));
        }
        min_slope = min_slope.min(self.f.derivative(k1)).min(self.f.derivative(k2));
        checks.push(Check { name: "f strictly increasing on (0, 2 kappa2]", value: min_slope, passed: min_slope > 0.0 });

        checks.push(Check { name: "f'(0) < 1", value: self.f.derivative(0.0), passed: self.f.derivative(0.0) < 1.0 });
        checks.push(Check { name: "f'(kappa1) > 1", value: self.f.derivative(k1), passed: self.f.derivative(k1) > 1.0 });
        checks.push(Check { name: "f'(kappa2) < 1", value: self.f.derivative(k2), passed: self.f.derivative(k2) < 1.0 });

        // subdiagonal growth at x_check = 10 kappa2, margin 0.05
        let xc = 10.0 * k2;
        let ratio = self.f.eval(xc) / xc;
        checks.push(Check { name: "f(x)/x < 0.95 at x_check = 10 kappa2", value: ratio, passed: ratio < 0.95 });

        checks.push(Check {
            name: "beta bounded by beta_upper",
            value: self.beta.beta_upper(),
            passed: self.beta.beta_upper().is_finite(),
        });

        ValidationReport { checks }
    }
}

/// Rescales beta so the normalization integral equals 1 exactly.
pub fn normalize_birth_rate(raw: &BirthRate, mu: &MortalityRate) -> Result<BirthRate> {
    let integral = kernel::int_gamma(mu, raw, 0.0, f64::INFINITY);
    if !(integral > 0.0) {
        return Err(Error::DegenerateBirthRate);
    }
    Ok(raw.scale(1.0 / integral))
}

/// The reference scenario used across the test suites: mu = 0.5,
/// beta = c 1_[1,3] normalized, f = hill(3, 2), so kappa = (1, 2), a* = 3.
pub fn reference_spec() -> ModelSpec {
    let mu = MortalityRate::constant(0.5).unwrap();
    let raw = BirthRate::compact(vec![(1.0, 3.0, 1.0)]).unwrap();
    let beta = normalize_birth_rate(&raw, &mu).unwrap();
    let f = BirthFunction::hill(3.0, 2.0).unwrap();
    ModelSpec::new(mu, beta, f).unwrap()
}

/// The reference eventually-constant scenario: mu = 0.5, a0 = 1, interior
/// beta = 0, beta_inf = 0.5 e^{0.5}; eq. normalization holds exactly.
pub fn reference_noncompact_spec() -> ModelSpec {
    let mu = MortalityRate::constant(0.5).unwrap();
    let beta = BirthRate::eventually_constant(vec![], 1.0, 0.5 * 0.5f64.exp()).unwrap();
    let f = BirthFunction::hill(3.0, 2.0).unwrap();
    ModelSpec::new(mu, beta, f).unwrap()
}
