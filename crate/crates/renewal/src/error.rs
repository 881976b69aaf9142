use thiserror::Error;

/// Errors surfaced while validating model ingredients or running the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative age {0} is outside the model domain")]
    NegativeAge(f64),
    #[error("mortality rate must satisfy mu(a) >= mu_lower > 0 (got minimum {0})")]
    MortalityBelowFloor(f64),
    #[error("mortality breakpoints must be positive and strictly increasing")]
    BadMortalityBreakpoints,
    #[error("birth rate pieces must be non-negative, ordered and disjoint")]
    BadBirthPieces,
    #[error("degenerate birth rate: normalization integral is zero")]
    DegenerateBirthRate,
    #[error("birth rate is not normalized: integral {integral} differs from 1 by more than {tolerance}")]
    NotNormalized { integral: f64, tolerance: f64 },
    #[error("birth function is not bistable: {0}")]
    NotBistable(String),
    #[error("birth function violates the subdiagonal growth condition: f(x)/x = {ratio} at x = {x}")]
    SubdiagonalViolation { x: f64, ratio: f64 },
    #[error("marginal equilibrium: |G(0) - 1| < 1e-12, refusing to classify")]
    MarginalStability,
    #[error("characteristic function domain error: lambda = {lambda} <= -mu_lower = {floor}")]
    LambdaOutOfDomain { lambda: f64, floor: f64 },
    #[error("initial distribution must be non-negative everywhere")]
    NegativeDensity,
    #[error("time step {delta} too large for the implicit step: require delta <= {delta_max} (= 1/(L*beta_upper))")]
    StepTooLarge { delta: f64, delta_max: f64 },
    #[error("fixed-point iteration failed to contract after {0} iterations")]
    FixedPointDiverged(usize),
    #[error("incompatible history (discontinuity at 0): residual {residual} exceeds {tolerance}")]
    IncompatibleHistory { residual: f64, tolerance: f64 },
    #[error("grid misalignment: {0}")]
    GridMisaligned(String),
    #[error("time {0} is beyond the solved horizon")]
    BeyondHorizon(f64),
    #[error("comparison violation - numerical fault: extinct verdict at lambda = {extinct} above persistent at lambda = {persistent}")]
    ComparisonViolation { extinct: f64, persistent: f64 },
    #[error("operation requires an eventually-constant birth rate")]
    RequiresEventuallyConstant,
    #[error("operation requires a compactly supported birth rate")]
    RequiresCompactSupport,
    #[error("spec shape mismatch: {0}")]
    SpecShapeMismatch(String),
    #[error("monotone family base profile must put positive mass on [0, a*]")]
    FamilyMissesReproductiveWindow,
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
